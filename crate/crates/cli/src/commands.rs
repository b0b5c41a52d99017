//! Subcommand implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mfhover::chart::{bar_chart, grouped_bar_chart};
use mfhover::io::npy::{read_array_file, write_array_file};
use mfhover::io::{
    make_folds, read_counts_csv, read_images, read_labels, write_images, write_labels, FoldSplit, ImageArchive,
    LabelReader, PatchArchive,
};
use mfhover::metrics::{dataset_stats, evaluate, CountTable, EvalReport, StatsReport, REPORT_SCHEMA_VERSION};
use mfhover::nn::checkpoint::{load_checkpoint, save_checkpoint};
use mfhover::nn::{evaluate_loss, train_toy as run_training, ToyHovernet, TrainingSet};
use mfhover::pipeline::{infer as run_infer, outputs_from_npy, outputs_to_npy, postprocess_all, predict};
use mfhover::postproc::ClassedInstances;
use mfhover::synth::{synth_dataset, to_archive, SynthConfig};
use mfhover::{ClassOrder, CountVector, Error};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{AtPath, CliError};

fn input(path: &Path) -> Result<&Path, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

fn output(path: &Path) -> Result<&Path, CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(CliError::Usage(format!(
            "output directory does not exist: {}",
            dir.display()
        ))),
        _ => Ok(path),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(Error::from).at(path)
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    match path {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_counts(path: &Path, patches: &[ClassedInstances]) -> Result<(), CliError> {
    let counts: Vec<CountVector> = patches.iter().map(|p| p.counts()).collect();
    mfhover::io::write_counts_csv(path, &counts, &ClassOrder::default()).at(path)
}

fn load_images(path: &Path) -> Result<ImageArchive, CliError> {
    read_images(input(path)?).at(path)
}

fn load_labels(path: &Path) -> Result<Vec<ClassedInstances>, CliError> {
    read_labels(input(path)?).at(path)
}

fn load_net(path: &Path) -> Result<ToyHovernet, CliError> {
    load_checkpoint(input(path)?).at(path)
}

fn write_predictions(
    patches: &[ClassedInstances],
    (h, w): (usize, usize),
    labels: &Path,
    counts: Option<&Path>,
) -> Result<(), CliError> {
    write_labels(labels, patches, h, w).at(labels)?;
    if let Some(c) = counts {
        write_counts(c, patches)?;
    }
    Ok(())
}

pub fn stats(labels: &Path, out_json: Option<&Path>, out_svg: Option<&Path>) -> Result<(), CliError> {
    input(labels)?;
    out_json.map(output).transpose()?;
    out_svg.map(output).transpose()?;
    let mut reader = LabelReader::open(labels).at(labels)?;
    let totals = dataset_stats(&mut reader).at(labels)?;
    let report = StatsReport::new(reader.len(), &totals, &ClassOrder::default());
    if let Some(svg) = out_svg {
        let bars: Vec<(String, f64)> = report
            .classes
            .iter()
            .map(|c| (c.name.clone(), c.count as f64))
            .collect();
        write_text(svg, &bar_chart("Nuclei per type", &bars))?;
    }
    emit_json(&report, out_json)
}

pub fn folds(labels: Option<&Path>, count: Option<usize>, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    if !out_dir.is_dir() {
        return Err(CliError::Usage(format!(
            "output directory does not exist: {}",
            out_dir.display()
        )));
    }
    let n = match (labels, count) {
        (Some(l), _) => LabelReader::open(input(l)?).at(l)?.len(),
        (None, Some(n)) => n,
        (None, None) => return Err(CliError::Usage("either --labels or --count is required".into())),
    };
    let splits = make_folds(n, seed)?;
    for s in &splits {
        emit_json(s, Some(&out_dir.join(format!("fold-{}.json", s.fold))))?;
    }
    let sizes: Vec<usize> = splits.iter().map(|s| s.val.len()).collect();
    println!("{n} patches, seed {seed}, validation sizes {sizes:?}");
    Ok(())
}

pub struct TrainPaths<'a> {
    pub images: &'a Path,
    pub labels: &'a Path,
    pub checkpoint: &'a Path,
    pub last_checkpoint: Option<&'a Path>,
    pub trace: Option<&'a Path>,
    pub fold_file: Option<&'a Path>,
    pub out_json: Option<&'a Path>,
}

#[derive(Serialize)]
struct TrainSummary {
    schema_version: u32,
    config: RunConfig,
    train_patches: usize,
    val_patches: usize,
    initial_loss: f64,
    final_loss: f64,
    best_step: usize,
    validation: Vec<(usize, f64)>,
}

fn read_fold_file(path: &Path) -> Result<FoldSplit, CliError> {
    let text = std::fs::read_to_string(input(path)?).map_err(Error::from).at(path)?;
    serde_json::from_str(&text).map_err(Error::from).at(path)
}

pub fn train_toy(config: &RunConfig, paths: TrainPaths<'_>) -> Result<(), CliError> {
    input(paths.images)?;
    input(paths.labels)?;
    output(paths.checkpoint)?;
    for p in [paths.last_checkpoint, paths.trace, paths.out_json]
        .into_iter()
        .flatten()
    {
        output(p)?;
    }
    let split = match (paths.fold_file, config.fold) {
        (Some(f), _) => Some(read_fold_file(f)?),
        (None, Some(k)) if k >= mfhover::io::folds::NUM_FOLDS => {
            return Err(CliError::Usage(format!("fold index {k} out of range 0..5")));
        }
        _ => None,
    };
    let images = load_images(paths.images)?;
    let labels = load_labels(paths.labels)?;
    let archive = PatchArchive::new(images, labels)?;
    if archive.images.height != archive.images.width {
        return Err(Error::Invalid("training patches must be square".into()).into());
    }
    let mut all = TrainingSet::default();
    for (i, l) in archive.labels.iter().enumerate() {
        all.push_patch(archive.images.patch(i), l.instances().labels(), &l.class_map());
    }
    let split = match (split, config.fold) {
        (Some(s), _) => Some(s),
        (None, Some(k)) => Some(make_folds(all.len(), config.fold_seed)?.swap_remove(k)),
        (None, None) => None,
    };
    if let Some(s) = &split {
        if let Some(&bad) = s.train.iter().chain(&s.val).find(|&&i| i >= all.len()) {
            return Err(Error::Invalid(format!("fold index {bad} beyond the {} patches", all.len())).into());
        }
    }
    let (train, val) = match &split {
        Some(s) => (all.subset(&s.train), Some(all.subset(&s.val))),
        None => (all, None),
    };

    let mut net_config = config.net.clone();
    net_config.input_size = archive.images.height;
    let net = ToyHovernet::new(net_config, config.init_seed).map_err(Error::from)?;
    let initial_loss = evaluate_loss(&net, &train, &config.train.loss)?.total;
    let outcome = run_training(net, &train, val.as_ref(), &config.train)?;
    let final_loss = evaluate_loss(&outcome.last, &train, &config.train.loss)?.total;

    save_checkpoint(&outcome.best, paths.checkpoint).at(paths.checkpoint)?;
    if let Some(p) = paths.last_checkpoint {
        save_checkpoint(&outcome.last, p).at(p)?;
    }
    if let Some(p) = paths.trace {
        let mut text = String::from("step,mse,ce_np,ce_tp,dice_np,dice_tp,total\n");
        for row in &outcome.trace {
            let l = &row.parts;
            text.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.step, l.mse, l.ce_np, l.ce_tp, l.dice_np, l.dice_tp, l.total
            ));
        }
        write_text(p, &text)?;
    }
    let summary = TrainSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        config: config.clone(),
        train_patches: train.len(),
        val_patches: val.as_ref().map_or(0, |v| v.len()),
        initial_loss,
        final_loss,
        best_step: outcome.best_step,
        validation: outcome.validation,
    };
    emit_json(&summary, paths.out_json)
}

pub fn infer(config: &RunConfig, checkpoint: &Path, images: &Path, out: &Path) -> Result<(), CliError> {
    input(checkpoint)?;
    input(images)?;
    output(out)?;
    let net = load_net(checkpoint)?;
    let images = load_images(images)?;
    let outputs = run_infer(&net, &images, config.chunk)?;
    write_array_file(&outputs_to_npy(&outputs)?, out)
        .map_err(Error::from)
        .at(out)
}

pub fn postproc(
    config: &RunConfig,
    outputs: &Path,
    out_labels: &Path,
    out_counts: Option<&Path>,
) -> Result<(), CliError> {
    input(outputs)?;
    output(out_labels)?;
    out_counts.map(output).transpose()?;
    let array = read_array_file(outputs).map_err(Error::from).at(outputs)?;
    let outs = outputs_from_npy(&array).at(outputs)?;
    let dims = (array.shape[2], array.shape[3]);
    let preds = postprocess_all(&outs, &config.postproc)?;
    write_predictions(&preds, dims, out_labels, out_counts)
}

pub fn pipeline(
    config: &RunConfig,
    checkpoint: &Path,
    images: &Path,
    out_labels: &Path,
    out_counts: &Path,
) -> Result<(), CliError> {
    input(checkpoint)?;
    input(images)?;
    output(out_labels)?;
    output(out_counts)?;
    let net = load_net(checkpoint)?;
    let images = load_images(images)?;
    let preds = predict(&net, &images, &config.postproc, config.chunk)?;
    write_predictions(&preds, (images.height, images.width), out_labels, Some(out_counts))
}

pub struct EvalPaths<'a> {
    pub gt_labels: &'a Path,
    pub pred_labels: &'a Path,
    pub gt_counts: Option<&'a Path>,
    pub pred_counts: Option<&'a Path>,
    pub out_json: Option<&'a Path>,
    pub out_csv: Option<&'a Path>,
    pub out_svg: Option<&'a Path>,
}

fn chart_values(r: &EvalReport) -> Vec<Option<f64>> {
    vec![r.pq, r.multi_r, r.mpq]
}

pub fn eval(config: &RunConfig, paths: EvalPaths<'_>, name: &str, compare: &[String]) -> Result<(), CliError> {
    input(paths.gt_labels)?;
    input(paths.pred_labels)?;
    for p in [paths.gt_counts, paths.pred_counts].into_iter().flatten() {
        input(p)?;
    }
    for p in [paths.out_json, paths.out_csv, paths.out_svg].into_iter().flatten() {
        output(p)?;
    }
    let others: Vec<(&str, &Path)> = compare
        .iter()
        .map(|c| {
            c.split_once('=')
                .map(|(n, p)| (n, Path::new(p)))
                .ok_or_else(|| CliError::Usage(format!("--compare expects NAME=PATH, got {c:?}")))
        })
        .collect::<Result<_, _>>()?;
    for (_, p) in &others {
        input(p)?;
    }

    let order = ClassOrder::default();
    let gt = load_labels(paths.gt_labels)?;
    let pred = load_labels(paths.pred_labels)?;
    if gt.len() != pred.len() {
        return Err(Error::Invalid(format!(
            "ground truth has {} patches, prediction has {}",
            gt.len(),
            pred.len()
        ))
        .into());
    }
    let counts_of = |path: Option<&Path>, patches: &[ClassedInstances]| -> Result<Vec<CountVector>, CliError> {
        match path {
            Some(p) => read_counts_csv(p, &order).at(p),
            None => Ok(patches.iter().map(|l| l.counts()).collect()),
        }
    };
    let gt_counts = counts_of(paths.gt_counts, &gt)?;
    let pred_counts = counts_of(paths.pred_counts, &pred)?;
    let evaluation = evaluate(&gt, &pred)?;
    let table = CountTable::new(gt_counts, pred_counts)?;
    let report = EvalReport::build(
        &evaluation,
        Some(&table),
        config.aggregation,
        config.undefined_policy,
        &order,
    );

    if let Some(p) = paths.out_csv {
        let file = File::create(p).map_err(Error::from).at(p)?;
        let mut w = BufWriter::new(file);
        report.write_csv(&mut w).at(p)?;
        w.flush().map_err(Error::from).at(p)?;
    }
    if let Some(p) = paths.out_svg {
        let mut series = Vec::new();
        for (n, path) in &others {
            let text = std::fs::read_to_string(path).map_err(Error::from).at(path)?;
            let other: EvalReport = serde_json::from_str(&text).map_err(Error::from).at(path)?;
            series.push((n.to_string(), chart_values(&other)));
        }
        series.push((name.to_string(), chart_values(&report)));
        let categories = ["PQ", "MultiR", "mPQ"].map(String::from);
        write_text(p, &grouped_bar_chart("Evaluation", &categories, &series))?;
    }
    emit_json(&report, paths.out_json)
}

pub fn synth(
    count: usize,
    seed: u64,
    size: usize,
    out_images: &Path,
    out_labels: &Path,
    out_counts: Option<&Path>,
) -> Result<(), CliError> {
    output(out_images)?;
    output(out_labels)?;
    out_counts.map(output).transpose()?;
    if size < 32 {
        return Err(CliError::Usage("--size must be at least 32".into()));
    }
    let cfg = SynthConfig {
        size,
        ..SynthConfig::default()
    };
    let archive = to_archive(&synth_dataset(count, seed, &cfg), size)?;
    write_images(out_images, &archive.images).at(out_images)?;
    write_predictions(&archive.labels, (size, size), out_labels, out_counts)
}
