use phd_core::autodiff::Tape;
use phd_core::data::{gen_synthetic, Dataset, Structure, SynthSpec};
use phd_core::gnn::{forward, EncoderParams};
use phd_core::graph::disjoint_union;
use phd_core::phd::{build_epoch, AssembledInstance, Direction};
use phd_core::pretrain::{
    mask_attr_loss, pretext_stats, pretrain, Checkpoint, CheckpointError, MaskHead, TrainConfig, Trainer,
};
use phd_core::seed::derive_rng;

fn synthetic() -> Dataset {
    gen_synthetic(&SynthSpec::two_family(20, 5)).unwrap()
}

fn small(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 8, dim: 12, layers: 2, seed: 11, ..Default::default() }
}

fn instances(ds: &Dataset, seed: u64, epochs: u64) -> Vec<AssembledInstance> {
    (0..epochs).flat_map(|e| build_epoch(&ds.graphs, seed, e, true, Direction::Unidirectional).unwrap()).collect()
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let ds = synthetic();
    let cfg = TrainConfig { mask_lambda: 1.0, dropout: 0.1, ..small(2) };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let (ck, _) = pretrain(&ds, &cfg, Some(&path)).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ck);
    assert_eq!(loaded.to_bytes(), ck.to_bytes());
    for ((name, a), (_, b)) in ck.tensors.iter().zip(&loaded.tensors) {
        let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same, "{name}");
    }
    assert!(loaded.tensor("mask.w").is_some());
    assert_eq!(loaded.epoch, 2);
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let (ck, _) = pretrain(&synthetic(), &small(1), None).unwrap();
    let bytes = ck.to_bytes();
    for cut in [0, 3, 7, 40, bytes.len() / 2, bytes.len() - 1] {
        let err = Checkpoint::from_bytes(&bytes[..cut]).unwrap_err();
        assert!(matches!(err, CheckpointError::UnexpectedEof), "cut {cut}: {err}");
        assert_eq!(err.to_string(), "unexpected end of file");
    }
}

#[test]
fn unknown_version_is_rejected() {
    let (ck, _) = pretrain(&synthetic(), &small(1), None).unwrap();
    let mut bytes = ck.to_bytes();
    bytes[4..8].copy_from_slice(&999u32.to_le_bytes());
    let err = Checkpoint::from_bytes(&bytes).unwrap_err().to_string();
    assert!(err.contains("unsupported checkpoint version"), "{err}");

    let mut bytes = ck.to_bytes();
    bytes[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::BadMagic)));

    let mut bytes = ck.to_bytes();
    let last = bytes.len() - 20;
    bytes.push(0);
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::Corrupt(_))));
    bytes.pop();
    bytes[last] ^= 1;
    assert_ne!(Checkpoint::from_bytes(&bytes).unwrap().rng, ck.rng);
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let ds = synthetic();
    let cfg = TrainConfig { mask_lambda: 0.5, dropout: 0.2, ..small(6) };
    let (straight, straight_logs) = pretrain(&ds, &cfg, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("half.ckpt");
    let mut first = Trainer::new(TrainConfig { epochs: 3, ..cfg.clone() }, ds.schema.clone()).unwrap();
    let mut logs = first.run(&ds, Some(&path), |_| {}).unwrap();
    let mut ck = Checkpoint::load(&path).unwrap();
    ck.train.epochs = 6;
    let mut resumed = Trainer::from_checkpoint(&ck).unwrap();
    logs.extend(resumed.run(&ds, None, |_| {}).unwrap());

    assert_eq!(logs, straight_logs);
    assert_eq!(resumed.checkpoint().to_bytes(), straight.to_bytes());
}

#[test]
fn periodic_checkpoints_are_written() {
    let ds = synthetic();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("periodic.ckpt");
    let mut seen = Vec::new();
    let mut t = Trainer::new(TrainConfig { checkpoint_every: 2, ..small(3) }, ds.schema.clone()).unwrap();
    t.run(&ds, Some(&path), |_| {
        seen.push(Checkpoint::load(&path).map(|c| c.epoch).ok());
    })
    .unwrap();
    assert_eq!(seen, vec![None, None, Some(2)]);
    assert_eq!(Checkpoint::load(&path).unwrap().epoch, 3);
}

#[test]
fn same_seed_same_trajectory() {
    let ds = synthetic();
    let a = pretrain(&ds, &small(3), None).unwrap();
    let b = pretrain(&ds, &small(3), None).unwrap();
    assert_eq!(a.1, b.1);
    assert_eq!(a.0.digest(), b.0.digest());
    let c = pretrain(&ds, &TrainConfig { seed: 12, ..small(3) }, None).unwrap();
    assert_ne!(a.0.digest(), c.0.digest());
}

#[test]
fn untrained_model_is_at_chance() {
    let ds = gen_synthetic(&SynthSpec::two_family(100, 1)).unwrap();
    let inst = instances(&ds, 3, 50);
    assert_eq!(inst.len(), 10_000);
    let mut accs = Vec::new();
    for seed in 0..4 {
        let mut t = Trainer::new(TrainConfig { dim: 8, seed, ..small(1) }, ds.schema.clone()).unwrap();
        let stats = pretext_stats(&t.params, &t.encoder, &inst, 512).unwrap();
        assert!((0.6..=0.8).contains(&stats.loss), "{}", stats.loss);
        // Negating the discriminator weight complements every prediction.
        t.params.disc_w.value.data_mut().iter_mut().for_each(|w| *w = -*w);
        let flipped = pretext_stats(&t.params, &t.encoder, &inst, 512).unwrap();
        assert!((stats.accuracy + flipped.accuracy - 1.0).abs() < 1e-12);
        accs.push(stats.accuracy);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.5).abs() < 0.05, "{accs:?}");
}

#[test]
fn small_steps_rarely_increase_instance_loss() {
    let ds = synthetic();
    let inst = instances(&ds, 9, 3);
    let mut violations = 0;
    for (k, one) in inst.iter().take(100).enumerate() {
        let cfg = TrainConfig { lr: 1e-4, seed: k as u64, ..small(1) };
        let mut t = Trainer::new(cfg, ds.schema.clone()).unwrap();
        let one = std::slice::from_ref(one);
        let before = pretext_stats(&t.params, &t.encoder, one, 1).unwrap().loss;
        t.step(one).unwrap();
        let after = pretext_stats(&t.params, &t.encoder, one, 1).unwrap().loss;
        if after > before {
            violations += 1;
        }
    }
    assert!(violations <= 2, "{violations} of 100 steps increased the loss");
}

#[test]
fn joint_loss_decreases_with_masking() {
    let ds = gen_synthetic(&SynthSpec::two_family(30, 2)).unwrap();
    let cfg = TrainConfig { mask_lambda: 1.0, ..small(50) };
    let (_, logs) = pretrain(&ds, &cfg, None).unwrap();
    let head: f64 = logs[..5].iter().map(|l| l.loss).sum();
    let tail: f64 = logs[45..].iter().map(|l| l.loss).sum();
    assert!(tail < head, "first five {head}, last five {tail}");
}

#[test]
fn untrained_mask_head_is_near_uniform() {
    let ds = gen_synthetic(&SynthSpec::single(Structure::Cycle, 10, 40, 4)).unwrap();
    assert_eq!(ds.schema.node_vocab, vec![2]);
    let cfg = small(1).encoder_config(ds.schema.clone());
    let mut rng = derive_rng(1, "test", &[]);
    let params = EncoderParams::init(&cfg, &mut rng);
    let head = MaskHead::init(cfg.dim, 2, &mut rng);
    let inst = instances(&ds, 1, 5);
    let mut total = 0.0;
    for chunk in inst.chunks(20) {
        let batch = disjoint_union(chunk.iter().map(|i| &i.graph)).unwrap();
        let tape = Tape::new();
        let bound = params.bind(&tape);
        total += mask_attr_loss(&batch, &bound, &head.bind(&tape), &cfg, 0.15, false, &mut rng).unwrap().value().item();
    }
    let mean = total / 10.0;
    assert!((mean - 2f64.ln()).abs() < 0.1, "{mean}");
}

#[test]
fn masking_needs_two_symbols() {
    let ds = gen_synthetic(&SynthSpec::single(Structure::Path, 5, 4, 0)).unwrap();
    let one_symbol = Dataset::new(
        "flat",
        ds.graphs
            .iter()
            .map(|g| {
                let mut g = g.clone();
                g.node_feats.iter_mut().for_each(|f| f[0] = 0);
                g
            })
            .collect(),
    );
    let cfg = TrainConfig { mask_lambda: 1.0, ..small(1) };
    assert!(Trainer::new(cfg, one_symbol.schema.clone()).is_err());
    let tape = Tape::new();
    let enc = small(1).encoder_config(one_symbol.schema.clone());
    let params = EncoderParams::init(&enc, &mut derive_rng(0, "x", &[]));
    let head = MaskHead::init(enc.dim, 1, &mut derive_rng(0, "y", &[]));
    let inst = instances(&one_symbol, 0, 1);
    let batch = disjoint_union(inst.iter().map(|i| &i.graph)).unwrap();
    let bound = params.bind(&tape);
    let h = forward(&batch, &bound, &enc, false, &mut derive_rng(0, "z", &[]));
    assert!(h.is_ok());
    let err = mask_attr_loss(&batch, &bound, &head.bind(&tape), &enc, 0.15, false, &mut derive_rng(0, "z", &[]));
    assert!(err.is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let ds = synthetic();
    for cfg in [
        TrainConfig { epochs: 0, ..small(1) },
        TrainConfig { batch_size: 0, ..small(1) },
        TrainConfig { lr: 0.0, ..small(1) },
        TrainConfig { mask_fraction: 1.0, ..small(1) },
        TrainConfig { mask_lambda: -1.0, ..small(1) },
        TrainConfig { dim: 0, ..small(1) },
    ] {
        assert!(pretrain(&ds, &cfg, None).is_err(), "{cfg:?}");
    }
    let tiny = Dataset::new("one", ds.graphs[..1].to_vec());
    assert!(pretrain(&tiny, &small(1), None).is_err());
}
