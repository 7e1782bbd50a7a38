use std::path::PathBuf;

use phd_core::data::{gen_synthetic, load, Dataset, Format, SynthSpec};
use phd_core::downstream::{
    embed_graphs, embeddings_csv, extract_embeddings, finetune, finetune_params, linear_probe, parse_embeddings_csv,
    roc_auc, stratified_kfold, EmbeddingMatrix, FinetuneConfig, Metric, ProbeConfig, SplitAssignment,
};
use phd_core::gnn::{EncoderConfig, EncoderParams, Readout};
use phd_core::graph::Graph;
use phd_core::pretrain::{pretrain, TrainConfig};
use phd_core::seed::derive_rng;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn mutag() -> Dataset {
    load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/MUTAG"), Format::Tu).unwrap()
}

/// Pairwise definition: P(s+ > s-) + 0.5 P(s+ = s-).
fn auc_oracle(scores: &[f64], positive: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if positive[i] && !positive[j] {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn split_by_index(n: usize) -> SplitAssignment {
    let mut s = SplitAssignment::default();
    for i in 0..n {
        match i % 10 {
            0 | 1 => s.valid.push(i),
            2 | 3 => s.test.push(i),
            _ => s.train.push(i),
        }
    }
    s
}

#[test]
fn auc_matches_pairwise_oracle() {
    let mut rng = derive_rng(0, "auc", &[]);
    for _ in 0..1000 {
        let n = rng.random_range(2..60);
        let levels = rng.random_range(1..8);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / 4.0).collect();
        let mut positive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        positive[0] = true;
        positive[1] = false;
        assert_eq!(roc_auc(&scores, &positive).unwrap(), auc_oracle(&scores, &positive));
    }
}

#[test]
fn auc_needs_both_classes() {
    assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    assert!(roc_auc(&[0.1], &[true, false]).is_err());
    assert!(roc_auc(&[f64::NAN, 0.2], &[true, false]).is_err());
}

proptest! {
    #[test]
    fn auc_ignores_increasing_transforms(
        data in proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 2..80),
        scale in 0.1f64..10.0,
        shift in -3.0f64..3.0,
    ) {
        let (scores, mut positive): (Vec<f64>, Vec<bool>) = data.into_iter().unzip();
        positive[0] = true;
        positive[1] = false;
        let moved: Vec<f64> = scores.iter().map(|s| (scale * s + shift).exp()).collect();
        prop_assert_eq!(roc_auc(&scores, &positive).unwrap(), roc_auc(&moved, &positive).unwrap());
    }

    #[test]
    fn kfold_partitions_and_stratifies(
        labels in proptest::collection::vec(0usize..3, 10..120),
        k in 2usize..8,
        seed in any::<u64>(),
    ) {
        prop_assume!((0..3).all(|c| { let m = labels.iter().filter(|&&y| y == c).count(); m == 0 || m >= k }));
        let folds = stratified_kfold(&labels, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for class in 0..3 {
            let per: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| labels[i] == class).count()).collect();
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(&folds, &stratified_kfold(&labels, k, seed).unwrap());
    }
}

#[test]
fn probe_separates_separable_data() {
    let mut rng = derive_rng(1, "probe", &[]);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..120 {
        let c = i % 2;
        let centre = if c == 0 { -3.0 } else { 3.0 };
        x.push(vec![centre + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        y.push(c);
    }
    let report = linear_probe(&x, &y, &ProbeConfig::default()).unwrap();
    assert_eq!(report.mean, 1.0);
    assert_eq!(report.folds.len(), 10);
}

#[test]
fn probe_on_shuffled_labels_is_near_majority() {
    let ds = mutag();
    let mut y = ds.labels().unwrap();
    let x: Vec<Vec<f64>> = {
        let mut rng = derive_rng(2, "noise", &[]);
        (0..y.len()).map(|_| (0..16).map(|_| rng.random::<f64>()).collect()).collect()
    };
    y.shuffle(&mut derive_rng(2, "shuffle", &[]));
    let majority: f64 = 125.0 / 188.0;
    let report = linear_probe(&x, &y, &ProbeConfig::default()).unwrap();
    let sigma = (majority * (1.0 - majority) / 188.0).sqrt();
    assert!((report.mean - majority).abs() <= 3.0 * sigma, "{} vs {majority}", report.mean);
}

#[test]
fn embeddings_are_deterministic_and_order_independent() {
    let ds = mutag();
    let (ck, _) = pretrain(&ds, &TrainConfig { epochs: 1, dim: 16, layers: 2, ..Default::default() }, None).unwrap();
    for mode in [Readout::Collection, Readout::Mean] {
        let a = extract_embeddings(&ds, &ck, mode).unwrap();
        let b = extract_embeddings(&ds, &ck, mode).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 188);
        assert_eq!(a.dim(), 16);

        let params = ck.encoder_params().unwrap();
        let mut order: Vec<usize> = (0..ds.len()).collect();
        order.shuffle(&mut derive_rng(3, "order", &[]));
        let shuffled: Vec<Graph> = order.iter().map(|&i| ds.graphs[i].clone()).collect();
        let rows = embed_graphs(&shuffled, &params, &ck.encoder, mode).unwrap();
        for (k, &i) in order.iter().enumerate() {
            let same = rows[k].iter().zip(&a.rows[i]).all(|(x, y)| x.to_bits() == y.to_bits());
            assert!(same, "graph {i}");
        }
    }
}

#[test]
fn mean_readout_of_single_node_is_that_node() {
    let ds = mutag();
    let cfg = EncoderConfig { dim: 8, layers: 2, ..EncoderConfig::desk(ds.schema.clone()) };
    let params = EncoderParams::init(&cfg, &mut derive_rng(0, "init", &[]));
    let lone = Graph::new(vec![vec![0]], vec![], None).unwrap();
    let mean = embed_graphs(std::slice::from_ref(&lone), &params, &cfg, Readout::Mean).unwrap();
    let mut rng = derive_rng(0, "unused", &[]);
    let inst = phd_core::phd::assemble_whole(&lone, cfg.direction);
    let batch = phd_core::graph::disjoint_union([&inst.graph]).unwrap();
    let tape = phd_core::autodiff::Tape::new();
    let h = phd_core::gnn::forward(&batch, &params.bind(&tape), &cfg, false, &mut rng).unwrap().value();
    assert_eq!(mean[0], h.row(0).to_vec());
}

#[test]
fn csv_round_trip_is_exact() {
    let mut rng = derive_rng(4, "csv", &[]);
    let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..5).map(|_| rng.random::<f64>() * 1e3 - 500.0).collect()).collect();
    let labels: Vec<Option<usize>> = (0..20).map(|i| if i % 7 == 0 { None } else { Some(i % 2) }).collect();
    let m = EmbeddingMatrix { rows: rows.clone(), readout: Readout::Mean, source: None };
    let table = parse_embeddings_csv(&embeddings_csv(&m, &labels).unwrap()).unwrap();
    assert_eq!(table.rows, rows);
    assert_eq!(table.labels, labels);
    assert_eq!(table.ids, (0..20).collect::<Vec<_>>());
}

#[test]
fn frozen_encoder_only_trains_the_head() {
    let ds = gen_synthetic(&SynthSpec::two_family(30, 3)).unwrap();
    let cfg = EncoderConfig { dim: 12, layers: 2, ..EncoderConfig::desk(ds.schema.clone()) };
    let params = EncoderParams::init(&cfg, &mut derive_rng(5, "init", &[]));
    let ft = FinetuneConfig { epochs: 5, freeze_encoder: true, dropout: 0.0, ..Default::default() };
    let out = finetune_params(&ds, params.clone(), &cfg, &split_by_index(ds.len()), &ft).unwrap();
    assert_eq!(out.params, params);

    let emb = embed_graphs(&ds.graphs, &params, &cfg, Readout::Mean).unwrap();
    let probs = out.probabilities(&ds.graphs, Readout::Mean).unwrap();
    let w = out.head_w.value.data();
    let b = out.head_b.value.data();
    for (e, p) in emb.iter().zip(&probs) {
        let z: Vec<f64> =
            (0..2).map(|k| b[k] + e.iter().enumerate().map(|(j, v)| v * w[j * 2 + k]).sum::<f64>()).collect();
        let expected = 1.0 / (1.0 + (z[0] - z[1]).exp());
        assert!((p[1] - expected).abs() < 1e-12);
    }
}

#[test]
fn finetuning_learns_the_synthetic_task() {
    let ds = gen_synthetic(&SynthSpec::two_family(60, 4)).unwrap();
    let (ck, _) = pretrain(&ds, &TrainConfig { epochs: 2, dim: 16, layers: 2, ..Default::default() }, None).unwrap();
    let ft = FinetuneConfig { epochs: 50, lr: 0.01, metric: Metric::Auc, ..Default::default() };
    let out = finetune(&ds, &ck, &split_by_index(ds.len()), &ft).unwrap();
    assert!(out.report.test >= 0.95, "{:?}", out.report);
    let again = finetune(&ds, &ck, &split_by_index(ds.len()), &ft).unwrap();
    assert_eq!(out, again);
}
