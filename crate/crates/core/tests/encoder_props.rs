mod common;

use common::{max_abs_diff, permute_real_nodes, random_graph};
use phd_core::autodiff::{finite_difference_check, Tape, Tensor, TensorError};
use phd_core::gnn::{
    collection_embeddings, discriminate, forward, readout, BoundEncoder, EncoderConfig, EncoderParams, ModelError,
    Readout,
};
use phd_core::graph::{disjoint_union, FeatureSchema, Graph, MessageGraph, Segment};
use phd_core::phd::{build_instance, AssembledInstance, Direction};
use phd_core::pretrain::bce_loss;
use phd_core::seed::derive_rng;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn schema() -> FeatureSchema {
    FeatureSchema { node_vocab: vec![3], edge_vocab: vec![2] }
}

fn config(dim: usize, layers: usize, direction: Direction) -> EncoderConfig {
    EncoderConfig { dim, layers, direction, ..EncoderConfig::desk(schema()) }
}

fn graphs(seed: u64, count: usize, sizes: std::ops::RangeInclusive<usize>) -> Vec<Graph> {
    let mut rng = derive_rng(seed, "graphs", &[]);
    (0..count)
        .map(|_| {
            let n = rng.random_range(sizes.clone());
            random_graph(&mut rng, n, 0.35, 3, 2)
        })
        .collect()
}

fn instances(seed: u64, count: usize, direction: Direction) -> Vec<AssembledInstance> {
    let gs = graphs(seed, count.max(2), 4..=12);
    (0..count).map(|i| build_instance(&gs, i, seed, 0, direction).unwrap()).collect()
}

fn embed(g: &MessageGraph, params: &EncoderParams, cfg: &EncoderConfig) -> Tensor {
    let batch = disjoint_union([g]).unwrap();
    let tape = Tape::new();
    let mut rng = derive_rng(0, "unused", &[]);
    forward(&batch, &params.bind(&tape), cfg, false, &mut rng).unwrap().value()
}

fn readouts(g: &MessageGraph, params: &EncoderParams, cfg: &EncoderConfig) -> (Vec<f64>, Vec<f64>) {
    let batch = disjoint_union([g]).unwrap();
    let tape = Tape::new();
    let mut rng = derive_rng(0, "unused", &[]);
    let h = forward(&batch, &params.bind(&tape), cfg, false, &mut rng).unwrap();
    let c = readout(h, &batch, Readout::Collection).unwrap().value().into_data();
    let m = readout(h, &batch, Readout::Mean).unwrap().value().into_data();
    (c, m)
}

fn tensor_err(e: ModelError) -> TensorError {
    match e {
        ModelError::Tensor(t) => t,
        other => panic!("unexpected model error: {other}"),
    }
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let cfg = config(8, 2, Direction::Unidirectional);
    let gs = graphs(3, 4, 6..=10);
    let inst = build_instance(&gs, 0, 3, 0, Direction::Unidirectional).unwrap();
    let batch = disjoint_union([&inst.graph]).unwrap();
    let template = EncoderParams::init(&cfg, &mut derive_rng(1, "init", &[]));
    let mut tensors: Vec<Tensor> = template.iter().map(|p| p.value.clone()).collect();
    let y = [f64::from(inst.label)];
    let report = finite_difference_check(
        |_: &Tape, vars| {
            let bound = BoundEncoder::from_vars(&template, vars);
            let mut rng = derive_rng(0, "unused", &[]);
            let h = forward(&batch, &bound, &cfg, false, &mut rng).map_err(tensor_err)?;
            let p = discriminate(collection_embeddings(h, &batch).map_err(tensor_err)?, &bound).map_err(tensor_err)?;
            bce_loss(p, &y)
        },
        &mut tensors,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "worst relative error {}", report.worst());
}

#[test]
fn batch_equals_member_wise_forward() {
    let cfg = config(16, 3, Direction::Unidirectional);
    let params = EncoderParams::init(&cfg, &mut derive_rng(2, "init", &[]));
    let inst = instances(8, 6, Direction::Unidirectional);
    let batch = disjoint_union(inst.iter().map(|i| &i.graph)).unwrap();
    let tape = Tape::new();
    let mut rng = derive_rng(0, "unused", &[]);
    let h = forward(&batch, &params.bind(&tape), &cfg, false, &mut rng).unwrap().value();
    for (k, i) in inst.iter().enumerate() {
        let alone = embed(&i.graph, &params, &cfg);
        let rows = batch.member_nodes(k);
        let joint: Vec<f64> = rows.flat_map(|r| h.row(r).to_vec()).collect();
        assert!(max_abs_diff(&joint, alone.data()) < 1e-12);
    }
}

#[test]
fn swapping_batch_members_swaps_outputs() {
    let cfg = config(8, 2, Direction::Bidirectional);
    let params = EncoderParams::init(&cfg, &mut derive_rng(3, "init", &[]));
    let inst = instances(9, 2, Direction::Bidirectional);
    let run = |order: [usize; 2]| {
        let batch = disjoint_union(order.iter().map(|&i| &inst[i].graph)).unwrap();
        let tape = Tape::new();
        let mut rng = derive_rng(0, "unused", &[]);
        let bound = params.bind(&tape);
        let h = forward(&batch, &bound, &cfg, false, &mut rng).unwrap();
        discriminate(collection_embeddings(h, &batch).unwrap(), &bound).unwrap().value().into_data()
    };
    let ab = run([0, 1]);
    let ba = run([1, 0]);
    assert_eq!(ab, vec![ba[1], ba[0]]);
}

#[test]
fn readouts_ignore_node_relabeling() {
    let cfg = config(12, 3, Direction::Unidirectional);
    let mut rng = derive_rng(5, "perm", &[]);
    for (k, inst) in instances(10, 50, Direction::Unidirectional).iter().enumerate() {
        let params = EncoderParams::init(&cfg, &mut derive_rng(k as u64, "init", &[]));
        let (c0, m0) = readouts(&inst.graph, &params, &cfg);
        let n = inst.graph.num_real_nodes();
        for _ in 0..20 {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let g = permute_real_nodes(&inst.graph, &perm, &mut rng);
            let (c, m) = readouts(&g, &params, &cfg);
            assert!(max_abs_diff(&c, &c0) < 1e-9);
            assert!(max_abs_diff(&m, &m0) < 1e-9);
        }
    }
}

#[test]
fn collection_node_does_not_feed_back_in_unidirectional_mode() {
    let cfg = config(16, 3, Direction::Unidirectional);
    for (k, inst) in instances(11, 100, Direction::Unidirectional).iter().enumerate() {
        let params = EncoderParams::init(&cfg, &mut derive_rng(k as u64, "init", &[]));
        let with = embed(&inst.graph, &params, &cfg);
        let without = embed(&inst.without_collection(), &params, &cfg);
        let real = inst.collection_node();
        assert_eq!(&with.data()[..real * cfg.dim], without.data(), "instance {k}");
    }
}

#[test]
fn bidirectional_mode_feeds_back() {
    let cfg = config(16, 3, Direction::Bidirectional);
    let inst = &instances(12, 1, Direction::Bidirectional)[0];
    let params = EncoderParams::init(&cfg, &mut derive_rng(0, "init", &[]));
    let with = embed(&inst.graph, &params, &cfg);
    let without = embed(&inst.without_collection(), &params, &cfg);
    let real = inst.collection_node();
    assert!(max_abs_diff(&with.data()[..real * cfg.dim], without.data()) > 1e-9);
}

#[test]
fn segment_labels_matter() {
    let cfg = config(8, 2, Direction::Unidirectional);
    let inst = &instances(13, 1, Direction::Unidirectional)[0];
    let mut swapped = inst.graph.clone();
    for s in swapped.node_segments.iter_mut().chain(swapped.edge_segments.iter_mut()) {
        *s = match *s {
            Segment::First => Segment::Second,
            Segment::Second => Segment::First,
            Segment::Virtual => Segment::Virtual,
        };
    }
    let differs = (0..5).any(|seed| {
        let params = EncoderParams::init(&cfg, &mut derive_rng(seed, "init", &[]));
        let (a, _) = readouts(&inst.graph, &params, &cfg);
        let (b, _) = readouts(&swapped, &params, &cfg);
        a != b
    });
    assert!(differs);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn union_then_split_is_identity(seed in any::<u64>(), count in 1usize..6) {
        let inst = instances(seed, count, Direction::Bidirectional);
        let members: Vec<MessageGraph> = inst.iter().map(|i| i.graph.clone()).collect();
        let batch = disjoint_union(&members).unwrap();
        prop_assert_eq!(batch.split(), members.clone());
        let n: usize = members.iter().map(|m| m.num_nodes()).sum();
        prop_assert_eq!(batch.num_nodes(), n);
        let msgs: usize = members.iter().map(|m| m.messages.len()).sum();
        prop_assert_eq!(batch.messages.len(), msgs);
    }
}
