use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use phd_core::data::{gen_synthetic, load, write_jsonl, Dataset, Format, SynthSpec};
use phd_core::downstream::{
    export_embeddings_csv, extract_embeddings, finetune as run_finetune, linear_probe, parse_embeddings_csv,
    parse_split, FinetuneConfig, ProbeConfig,
};
use phd_core::pretrain::{write_atomic, Checkpoint, TrainConfig, Trainer};
use serde_json::json;

use crate::manifest::{sibling, Manifest};
use crate::{DataArgs, EmbedArgs, FinetuneArgs, GenSynthArgs, InspectArgs, PretrainArgs, ProbeArgs};

fn resolve_format(data: &Path, format: Option<Format>) -> Format {
    format.unwrap_or(if data.is_dir() { Format::Tu } else { Format::Jsonl })
}

fn load_data(args: &DataArgs) -> Result<(Dataset, Format)> {
    let format = resolve_format(&args.data, args.format);
    let ds = load(&args.data, format).with_context(|| format!("loading dataset {}", args.data.display()))?;
    Ok((ds, format))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        bail!("missing file {}", path.display());
    }
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        bail!("missing file {}", path.display());
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

pub fn pretrain(a: PretrainArgs) -> Result<()> {
    let (ds, format) = load_data(&a.data)?;
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        lr: a.lr,
        seed: a.seed,
        dim: a.dim,
        layers: a.layers,
        dropout: a.dropout,
        direction: a.direction.into(),
        mask_lambda: a.mask_lambda,
        checkpoint_every: a.checkpoint_every,
        ..TrainConfig::default()
    };
    if ds.len() < 2 {
        bail!("{} has {} graph(s); pre-training needs at least 2", a.data.data.display(), ds.len());
    }
    let mut trainer = Trainer::new(config.clone(), ds.schema.clone())?;
    let mut manifest = Manifest::start(
        "pretrain",
        config.seed,
        json!({ "data": a.data.data, "format": format, "train": config, "encoder": trainer.encoder }),
    )?;
    manifest.input(&a.data.data)?;

    let quiet = a.quiet;
    let logs = trainer.run(&ds, Some(&a.out), |log| {
        if !quiet {
            eprintln!("epoch {:>4}  loss {:.6}  pretext_acc {:.4}", log.epoch, log.loss, log.pretext_acc);
        }
    })?;
    let mut csv = String::from("epoch,loss,pretext_acc\n");
    for log in &logs {
        writeln!(csv, "{},{},{}", log.epoch, log.loss, log.pretext_acc)?;
    }
    let log_path = a.log.unwrap_or_else(|| sibling(&a.out, "log.csv"));
    write_atomic(&log_path, csv.as_bytes()).with_context(|| format!("writing {}", log_path.display()))?;
    let manifest_path = manifest.finish(&[&a.out, &log_path])?;

    if let (Some(first), Some(last)) = (logs.first(), logs.last()) {
        println!(
            "trained {} epochs: loss {:.6} -> {:.6}, pretext accuracy {:.4} -> {:.4}",
            logs.len(),
            first.loss,
            last.loss,
            first.pretext_acc,
            last.pretext_acc
        );
    }
    println!("checkpoint {}", a.out.display());
    println!("log {}", log_path.display());
    println!("manifest {}", manifest_path.display());
    Ok(())
}

pub fn embed(a: EmbedArgs) -> Result<()> {
    let (ds, format) = load_data(&a.data)?;
    let ck = load_checkpoint(&a.ckpt)?;
    let mut manifest = Manifest::start(
        "embed",
        ck.train.seed,
        json!({ "data": a.data.data, "format": format, "ckpt": a.ckpt, "readout": format!("{:?}", a.readout).to_lowercase() }),
    )?;
    manifest.input(&a.data.data)?;
    manifest.input(&a.ckpt)?;
    let m = extract_embeddings(&ds, &ck, a.readout.into())?;
    let labels: Vec<Option<usize>> = ds.graphs.iter().map(|g| g.label).collect();
    export_embeddings_csv(&m, &labels, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let manifest_path = manifest.finish(&[&a.out])?;
    println!("{} embeddings of width {} -> {}", m.rows.len(), m.dim(), a.out.display());
    println!("manifest {}", manifest_path.display());
    Ok(())
}

pub fn probe(a: ProbeArgs) -> Result<()> {
    let table = parse_embeddings_csv(&read_text(&a.embeddings)?)
        .with_context(|| format!("parsing {}", a.embeddings.display()))?;
    let config = ProbeConfig { folds: a.folds, seed: a.seed, ..ProbeConfig::default() };
    let mut manifest = Manifest::start(
        "probe",
        a.seed,
        json!({ "embeddings": a.embeddings, "labels_from_data": a.labels_from_data, "data": a.data, "labels": a.labels, "probe": config }),
    )?;
    manifest.input(&a.embeddings)?;

    let labels: Vec<usize> = if let Some(path) = &a.labels {
        manifest.input(path)?;
        read_text(path)?
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim().parse().with_context(|| format!("{}:{}: bad label {:?}", path.display(), i + 1, l.trim()))
            })
            .collect::<Result<_>>()?
    } else if a.labels_from_data {
        match &a.data {
            Some(data) => {
                manifest.input(data)?;
                let format = resolve_format(data, a.format);
                let ds = load(data, format).with_context(|| format!("loading dataset {}", data.display()))?;
                let labels = ds.labels().with_context(|| format!("{} has unlabeled graphs", data.display()))?;
                table
                    .ids
                    .iter()
                    .map(|&i| labels.get(i).copied().with_context(|| format!("graph id {i} not in dataset")))
                    .collect::<Result<_>>()?
            }
            None => table
                .labels
                .iter()
                .enumerate()
                .map(|(row, l)| {
                    l.with_context(|| format!("row {} of {} has no label", row + 1, a.embeddings.display()))
                })
                .collect::<Result<_>>()?,
        }
    } else {
        bail!("pass --labels-from-data or --labels <file>");
    };

    let report = linear_probe(&table.rows, &labels, &config)?;
    let out = a.out.unwrap_or_else(|| sibling(&a.embeddings, "probe.json"));
    write_json(&out, &report)?;
    let manifest_path = manifest.finish(&[&out])?;
    println!("{} {:.4} +- {:.4} over {} folds", report.metric, report.mean, report.std, report.folds.len());
    println!("report {}", out.display());
    println!("manifest {}", manifest_path.display());
    Ok(())
}

pub fn finetune(a: FinetuneArgs) -> Result<()> {
    let (ds, format) = load_data(&a.data)?;
    let ck = load_checkpoint(&a.ckpt)?;
    let split =
        parse_split(&read_text(&a.split)?, ds.len()).with_context(|| format!("parsing {}", a.split.display()))?;
    let config = FinetuneConfig {
        epochs: a.epochs,
        lr: a.lr,
        dropout: a.dropout,
        batch_size: a.batch,
        readout: a.readout.into(),
        freeze_encoder: a.freeze_encoder,
        metric: a.metric,
        seed: a.seed,
    };
    let mut manifest = Manifest::start(
        "finetune",
        a.seed,
        json!({ "data": a.data.data, "format": format, "ckpt": a.ckpt, "split": a.split, "finetune": config }),
    )?;
    for p in [&a.data.data, &a.ckpt, &a.split] {
        manifest.input(p)?;
    }
    let result = run_finetune(&ds, &ck, &split, &config)?;
    let out = a.out.unwrap_or_else(|| sibling(&a.ckpt, "finetune.json"));
    write_json(&out, &result.report)?;
    let manifest_path = manifest.finish(&[&out])?;
    let r = &result.report;
    let metric = serde_json::to_value(r.metric)?;
    let metric = metric.as_str().unwrap_or_default();
    println!("best epoch {}: valid {metric} {:.4}, test {:.4}", r.best_epoch, r.valid, r.test);
    println!("report {}", out.display());
    println!("manifest {}", manifest_path.display());
    Ok(())
}

pub fn gen_synth(a: GenSynthArgs) -> Result<()> {
    let spec_path = PathBuf::from(&a.spec);
    let spec = match a.spec.as_str() {
        "two-family" => SynthSpec::two_family(a.per_family, a.seed),
        _ if spec_path.is_file() => serde_json::from_str(&read_text(&spec_path)?)
            .with_context(|| format!("parsing synthetic spec {}", spec_path.display()))?,
        other => bail!("unknown preset {other:?} and no such spec file (presets: two-family)"),
    };
    let mut manifest = Manifest::start("gen-synth", spec.seed, &spec)?;
    if spec_path.is_file() {
        manifest.input(&spec_path)?;
    }
    let ds = gen_synthetic(&spec)?;
    write_jsonl(&a.out, &ds.graphs)?;
    let manifest_path = manifest.finish(&[&a.out])?;
    println!("{} graphs -> {}", ds.len(), a.out.display());
    println!("manifest {}", manifest_path.display());
    Ok(())
}

pub fn inspect(a: InspectArgs) -> Result<()> {
    let (ds, _) = load_data(&a.data)?;
    let c = ds.census();
    println!("{} graphs, {} classes, avg nodes {:.2}", c.graphs, c.classes, c.avg_nodes);
    println!("avg edges {:.2}", c.avg_edges);
    println!("node features: width {}, vocab {:?}", c.node_width, c.node_vocab);
    println!("edge features: width {}, vocab {:?}", c.edge_width, c.edge_vocab);
    Ok(())
}
