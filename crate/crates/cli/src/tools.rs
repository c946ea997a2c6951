//! Thin wrappers: checkpoint interpolation, evaluation, EPG rendering and
//! cluster inspection.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synthfetal_core::epg::{
    render_epg_volume, sample_relaxometry, sample_sequence, EpgSequenceParams, RelaxometryTable,
};
use synthfetal_core::labels::{build_meta_classes, split_meta_classes, GmmFit};
use synthfetal_core::metrics::{batch_evaluate, BatchReport};
use synthfetal_core::rng::{RngStream, Stage};
use synthfetal_core::soup::{interpolate, read_checkpoint, write_checkpoint, Checkpoint};
use synthfetal_core::volume::{read_labels, read_volume, write_nifti, LabelScheme};
use synthfetal_core::atomic_write;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

fn required<'a>(v: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    v.as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing {what}")))
}

pub fn alpha_file_name(alpha: f64) -> String {
    format!("interp_alpha{alpha:.3}.wsoup")
}

/// Interpolates `interpolate.a` and `interpolate.b` at every configured
/// alpha. With a single alpha and an output path that is not a directory,
/// writes exactly that file; otherwise one file per alpha in the directory.
pub fn cmd_interpolate(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let a = read_checkpoint(required(&cfg.interpolate.a, "first checkpoint")?)?;
    let b = read_checkpoint(required(&cfg.interpolate.b, "second checkpoint")?)?;
    let out = cfg.out_dir()?;
    let alphas = &cfg.interpolate.alphas;
    if alphas.is_empty() {
        return Err(CliError::Usage("no interpolation weights given".into()));
    }
    // validate everything before writing anything
    let soups: Vec<Checkpoint> = alphas
        .iter()
        .map(|&alpha| interpolate(&a, &b, alpha))
        .collect::<Result<_, _>>()?;
    if alphas.len() == 1 && !out.is_dir() && out.extension().is_some() {
        write_checkpoint(&soups[0], out)?;
        return Ok(vec![out.to_path_buf()]);
    }
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut written = Vec::new();
    for (alpha, soup) in alphas.iter().zip(&soups) {
        let p = out.join(alpha_file_name(*alpha));
        write_checkpoint(soup, &p)?;
        written.push(p);
    }
    Ok(written)
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    subject: String,
    prediction: PathBuf,
    ground_truth: PathBuf,
}

/// Evaluates every manifest row and writes the CSV report to the output
/// path. Relative paths in the manifest are relative to the manifest.
pub fn cmd_evaluate(cfg: &RunConfig) -> CliResult<BatchReport> {
    let manifest = required(&cfg.evaluate.manifest, "evaluation manifest")?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(manifest).map_err(|e| CliError::parse(manifest, e))?;
    let mut pairs = Vec::new();
    for row in reader.deserialize() {
        let row: ManifestRow = row.map_err(|e| CliError::parse(manifest, e))?;
        let pred = read_labels(base.join(&row.prediction), LabelScheme::Feta7)?;
        let gt = read_labels(base.join(&row.ground_truth), LabelScheme::Feta7)?;
        pairs.push((row.subject, pred, gt));
    }
    let report = batch_evaluate(&pairs)?;
    atomic_write(cfg.out_dir()?, report.to_csv_string()?.as_bytes())?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpgRender {
    pub labels: PathBuf,
    pub master_seed: u64,
    pub sequence: EpgSequenceParams,
    pub relaxometry: RelaxometryTable,
}

/// Renders a FeTA label map label by label, drawing one sequence and one
/// relaxometry entry per label from the `synthgen.epg` ranges.
pub fn cmd_epg(cfg: &RunConfig) -> CliResult<EpgRender> {
    let labels_path = required(&cfg.epg.labels, "epg.labels")?;
    let out = cfg.out_dir()?;
    let labels = read_labels(labels_path, LabelScheme::Feta7)?;
    let seed = cfg.synthgen.master_seed;
    let ranges = &cfg.synthgen.epg;
    let sequence = sample_sequence(&ranges.sequence, &mut RngStream::new(seed, 0, Stage::Sequence).rng())?;
    let targets: Vec<(u16, u16)> = labels
        .unique_values()
        .into_iter()
        .filter(|&l| l > 0)
        .map(|l| (l, l))
        .collect();
    let relaxometry = sample_relaxometry(
        cfg.epg.mode,
        &ranges.relaxometry,
        &targets,
        &mut RngStream::new(seed, 0, Stage::Relaxometry).rng(),
    )?;
    let image = render_epg_volume(&labels, &relaxometry, &sequence)?;
    let compress = out.to_string_lossy().ends_with(".gz");
    write_nifti(&image, out, compress)?;
    let record = EpgRender {
        labels: labels_path.to_path_buf(),
        master_seed: seed,
        sequence,
        relaxometry,
    };
    let sidecar = sidecar_path(out);
    atomic_write(&sidecar, &serde_json::to_vec_pretty(&record).expect("serializes"))?;
    Ok(record)
}

fn sidecar_path(nifti: &Path) -> PathBuf {
    let name = nifti.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name
        .strip_suffix(".nii.gz")
        .or_else(|| name.strip_suffix(".nii"))
        .unwrap_or(&name);
    nifti.with_file_name(format!("{stem}.json"))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub k_per_class: Vec<(u16, usize)>,
    pub n_subclasses: usize,
    pub fits: Vec<(u16, GmmFit)>,
}

/// Runs the class partition and intensity split of the configured mode on
/// one subject, writing `subclasses.nii.gz` and `clusters.json`.
pub fn cmd_cluster_inspect(cfg: &RunConfig) -> CliResult<ClusterSummary> {
    let labels = read_labels(required(&cfg.cluster.labels, "cluster.labels")?, LabelScheme::Feta7)?;
    let image = read_volume(required(&cfg.cluster.image, "cluster.image")?)?;
    let out = cfg.out_dir()?;
    let table = cfg.synthgen.class_table();
    let classes = build_meta_classes(&labels, &image, &table)?;
    let partition = split_meta_classes(
        &classes,
        &image,
        table.non_brain,
        &cfg.synthgen.split,
        &mut RngStream::new(cfg.synthgen.master_seed, 0, Stage::Partition).rng(),
    )?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_nifti(&partition.map, out.join("subclasses.nii.gz"), true)?;
    let summary = ClusterSummary {
        k_per_class: partition.k_per_class.clone(),
        n_subclasses: partition.n_subclasses(),
        fits: partition.fits.clone().into_iter().collect(),
    };
    atomic_write(&out.join("clusters.json"), &serde_json::to_vec_pretty(&summary).expect("serializes"))?;
    Ok(summary)
}
