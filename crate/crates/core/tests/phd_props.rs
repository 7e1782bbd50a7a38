mod common;

use common::{arb_graph, oracle_split, random_graph, sorted_edges};
use phd_core::data::{gen_synthetic, SynthSpec};
use phd_core::graph::Segment;
use phd_core::phd::{assemble, border_range, build_epoch, build_instance, decompose_at, make_pair, Direction};
use phd_core::seed::derive_rng;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn decomposition_matches_brute_force(g in arb_graph(8)) {
        for b in border_range(g.num_nodes).unwrap() {
            let d = decompose_at(&g, b).unwrap();
            let (f1, e1, f2, e2) = oracle_split(&g, b);
            prop_assert_eq!(&d.first.node_feats, &f1);
            prop_assert_eq!(&d.second.node_feats, &f2);
            prop_assert_eq!(sorted_edges(&d.first), e1);
            prop_assert_eq!(sorted_edges(&d.second), e2);
            prop_assert_eq!(d.first.num_nodes + d.second.num_nodes, g.num_nodes);
            prop_assert!(d.first.validate().is_ok() && d.second.validate().is_ok());
        }
    }

    #[test]
    fn border_stays_in_middle_third(n in 2usize..200) {
        let r = border_range(n).unwrap();
        prop_assert!(*r.start() >= 1 && *r.end() < n && r.start() <= r.end());
        if n >= 3 {
            prop_assert_eq!(*r.start(), n.div_ceil(3));
            prop_assert_eq!(*r.end(), 2 * n / 3);
        }
    }

    #[test]
    fn assembly_counts(g in arb_graph(8), h in arb_graph(8), seed in any::<u64>()) {
        let graphs = [g, h];
        let mut rng = derive_rng(seed, "t", &[]);
        let pair = make_pair(&graphs[0], 0, |_| (1, &graphs[1]), &mut rng).unwrap();
        let n = pair.first.num_nodes + pair.second.num_nodes;
        let e = pair.first.num_edges() + pair.second.num_edges();
        let uni = assemble(&pair, Direction::Unidirectional);
        let bi = assemble(&pair, Direction::Bidirectional);
        prop_assert_eq!(uni.graph.num_nodes(), n + 1);
        prop_assert_eq!(uni.graph.messages.len(), 2 * e + n);
        prop_assert_eq!(bi.graph.messages.len(), 2 * e + 2 * n);
        prop_assert_eq!(uni.graph.collection_node, Some(n));
        let segs = &uni.graph.node_segments;
        prop_assert!(segs[..pair.first.num_nodes].iter().all(|s| *s == Segment::First));
        prop_assert!(segs[pair.first.num_nodes..n].iter().all(|s| *s == Segment::Second));
        prop_assert_eq!(segs[n], Segment::Virtual);
        prop_assert!(uni.graph.messages.sources.iter().all(|&s| s != n));
    }

    #[test]
    fn negatives_use_a_partner_half(g in arb_graph(8), h in arb_graph(8), seed in any::<u64>()) {
        let graphs = [g, h];
        let mut rng = derive_rng(seed, "t", &[]);
        let pair = make_pair(&graphs[0], 0, |_| (1, &graphs[1]), &mut rng).unwrap();
        let own = decompose_at(&graphs[0], pair.provenance.border).unwrap();
        prop_assert_eq!(&pair.first, &own.first);
        if pair.label == 1 {
            prop_assert_eq!(&pair.second, &own.second);
            prop_assert_eq!(pair.provenance.partner, None);
        } else {
            prop_assert_eq!(pair.provenance.partner, Some(1));
            let found = border_range(graphs[1].num_nodes).unwrap().any(|b| {
                let d = decompose_at(&graphs[1], b).unwrap();
                d.first == pair.second || d.second == pair.second
            });
            prop_assert!(found);
        }
    }
}

#[test]
fn labels_are_balanced() {
    let ds = gen_synthetic(&SynthSpec::two_family(50, 9)).unwrap();
    let mut positives = 0;
    let mut total = 0;
    for epoch in 0..100 {
        for inst in build_epoch(&ds.graphs, 21, epoch, true, Direction::Unidirectional).unwrap() {
            positives += usize::from(inst.label);
            total += 1;
        }
    }
    assert_eq!(total, 10_000);
    let frac = positives as f64 / total as f64;
    assert!((0.485..=0.515).contains(&frac), "{frac}");
}

#[test]
fn instance_depends_only_on_seed_epoch_index() {
    let mut rng = derive_rng(4, "graphs", &[]);
    let graphs: Vec<_> = (0..12).map(|_| random_graph(&mut rng, 9, 0.3, 3, 2)).collect();
    let shuffled = build_epoch(&graphs, 5, 2, true, Direction::Unidirectional).unwrap();
    let ordered = build_epoch(&graphs, 5, 2, false, Direction::Unidirectional).unwrap();
    for inst in &shuffled {
        assert!(ordered.contains(inst));
    }
    for (i, inst) in ordered.iter().enumerate() {
        assert_eq!(inst, &build_instance(&graphs, i, 5, 2, Direction::Unidirectional).unwrap());
    }
    assert_ne!(ordered, build_epoch(&graphs, 5, 3, false, Direction::Unidirectional).unwrap());
}
