//! Dataset generation: subject discovery, the parallel sample loop, file
//! naming, provenance sidecars and replay from a sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use synthfetal_core::labels::remap_drawem_to_feta;
use synthfetal_core::synth::{generate_sample, GenerationConfig, SamplePair, SampleRecord, Subject};
use synthfetal_core::volume::{read_labels, read_volume, write_nifti, LabelScheme};
use synthfetal_core::atomic_write;

use crate::config::{InputScheme, InputSection, RunConfig};
use crate::error::{CliError, CliResult};

pub const SIDECAR_FORMAT: &str = "synthfetal-sample/1";

/// Where one subject's files live.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectSource {
    pub id: String,
    pub image: PathBuf,
    pub labels: PathBuf,
    pub scheme: InputScheme,
}

impl SubjectSource {
    pub fn load(&self) -> CliResult<Subject> {
        let intensity = read_volume(&self.image)?;
        let labels = match self.scheme {
            InputScheme::Feta7 => read_labels(&self.labels, LabelScheme::Feta7)?,
            InputScheme::Drawem9 => remap_drawem_to_feta(&read_labels(&self.labels, LabelScheme::DrawEm9)?)?,
        };
        labels.geometry().ensure_matches(intensity.geometry())?;
        Ok(Subject {
            id: self.id.clone(),
            labels,
            intensity,
        })
    }
}

fn strip_nifti_ext(name: &str) -> Option<(&str, &'static str)> {
    [".nii.gz", ".nii"]
        .into_iter()
        .find_map(|ext| name.strip_suffix(ext).map(|stem| (stem, ext)))
}

/// Label files named `<id><label_suffix>.nii[.gz]` paired with
/// `<id><image_suffix>` in the same directory, sorted by id.
pub fn discover_subjects(input: &InputSection) -> CliResult<Vec<SubjectSource>> {
    let dir = input
        .dir
        .as_deref()
        .ok_or_else(|| CliError::Usage("no input directory: set input.dir".into()))?;
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some((stem, _)) = strip_nifti_ext(&name) else {
            continue;
        };
        let Some(id) = stem.strip_suffix(&input.label_suffix) else {
            continue;
        };
        let image = [".nii.gz", ".nii"]
            .iter()
            .map(|ext| dir.join(format!("{id}{}{ext}", input.image_suffix)))
            .find(|p| p.is_file());
        match image {
            Some(image) => out.push(SubjectSource {
                id: id.to_string(),
                image,
                labels: entry.path(),
                scheme: input.label_scheme,
            }),
            None => eprintln!(
                "{}",
                serde_json::json!({"warning": "MissingImage", "subject": id, "labels": entry.path()})
            ),
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Everything needed to re-render one sample in isolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub subject: SubjectSource,
    pub sample_index: u64,
    pub master_seed: u64,
    pub image_file: String,
    pub labels_file: String,
    pub compress: bool,
    pub config: GenerationConfig,
    pub record: SampleRecord,
}

pub fn sample_stem(subject: &str, index: u64, seed: u64) -> String {
    format!("{subject}_idx{index:06}_seed{seed}")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WrittenSample {
    pub index: u64,
    pub image: PathBuf,
    pub labels: PathBuf,
    pub sidecar: PathBuf,
}

/// Writes image, labels and sidecar for one generated pair.
pub fn write_sample(
    out: &Path,
    source: &SubjectSource,
    cfg: &GenerationConfig,
    index: u64,
    pair: &SamplePair,
    compress: bool,
) -> CliResult<WrittenSample> {
    let stem = sample_stem(&source.id, index, cfg.master_seed);
    let ext = if compress { "nii.gz" } else { "nii" };
    let image_file = format!("{stem}_image.{ext}");
    let labels_file = format!("{stem}_labels.{ext}");
    let image = out.join(&image_file);
    let labels = out.join(&labels_file);
    write_nifti(&pair.image, &image, compress)?;
    write_nifti(&pair.labels, &labels, compress)?;
    let sidecar = Sidecar {
        format: SIDECAR_FORMAT.into(),
        subject: source.clone(),
        sample_index: index,
        master_seed: cfg.master_seed,
        image_file,
        labels_file,
        compress,
        config: cfg.clone(),
        record: pair.provenance.clone(),
    };
    let sidecar_path = out.join(format!("{stem}.json"));
    let json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
    atomic_write(&sidecar_path, &json)?;
    Ok(WrittenSample {
        index,
        image,
        labels,
        sidecar: sidecar_path,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GenerateSummary {
    pub subjects: Vec<String>,
    pub skipped_subjects: Vec<(String, String)>,
    pub requested: usize,
    pub written: usize,
    pub failures: Vec<(u64, String)>,
}

pub(crate) fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))
}

/// Loads every subject, then generates the configured number of samples
/// round-robin over subjects. Output files depend only on the inputs, the
/// configuration and the seed; the worker count changes nothing but speed.
pub fn cmd_generate(cfg: &RunConfig) -> CliResult<GenerateSummary> {
    cfg.validate()?;
    let out = cfg.out_dir()?.to_path_buf();
    let sources = discover_subjects(&cfg.input)?;
    let mut subjects = Vec::new();
    let mut summary = GenerateSummary::default();
    for s in &sources {
        match s.load() {
            Ok(sub) => subjects.push((s.clone(), sub)),
            Err(e) if cfg.run.continue_on_error => {
                eprintln!("{}", serde_json::json!({"warning": e.kind(), "subject": s.id, "message": e.to_string()}));
                summary.skipped_subjects.push((s.id.clone(), e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    if subjects.is_empty() {
        return Err(CliError::NoSubjects(
            cfg.input.dir.clone().unwrap_or_default(),
        ));
    }
    let count = cfg
        .run
        .per_subject
        .map_or(cfg.run.count, |k| k * subjects.len());
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    atomic_write(&out.join("run.toml"), cfg.to_toml().as_bytes())?;

    let gen = &cfg.synthgen;
    let results: Vec<CliResult<WrittenSample>> = pool(cfg.run.workers)?.install(|| {
        (0..count as u64)
            .into_par_iter()
            .map(|i| {
                let (source, subject) = &subjects[(i % subjects.len() as u64) as usize];
                let mut pair = generate_sample(&subject.labels, &subject.intensity, gen, i)?;
                pair.provenance.subject_id = Some(source.id.clone());
                write_sample(&out, source, gen, i, &pair, cfg.run.compress)
            })
            .collect()
    });
    summary.subjects = subjects.iter().map(|(s, _)| s.id.clone()).collect();
    summary.requested = count;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(_) => summary.written += 1,
            Err(e) => summary.failures.push((i as u64, e.to_string())),
        }
    }
    if let Some((i, first)) = summary.failures.first() {
        if !cfg.run.continue_on_error {
            return Err(CliError::SamplesFailed {
                failed: summary.failures.len(),
                total: count,
                first: format!("sample {i}: {first}"),
            });
        }
    }
    Ok(summary)
}

pub fn read_sidecar(path: &Path) -> CliResult<Sidecar> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let s: Sidecar = serde_json::from_slice(&bytes).map_err(|e| CliError::parse(path, e))?;
    if s.format != SIDECAR_FORMAT {
        return Err(CliError::parse(path, format!("unknown sidecar format {:?}", s.format)));
    }
    Ok(s)
}

/// Re-renders the sample a sidecar describes into `out`, under the same
/// file names.
pub fn cmd_replay(sidecar: &Path, out: &Path) -> CliResult<WrittenSample> {
    let s = read_sidecar(sidecar)?;
    let subject = s.subject.load()?;
    let mut pair = generate_sample(&subject.labels, &subject.intensity, &s.config, s.sample_index)?;
    pair.provenance.subject_id = Some(s.subject.id.clone());
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_sample(out, &s.subject, &s.config, s.sample_index, &pair, s.compress)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discovery_pairs_suffixes() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["sub-02_dseg.nii.gz", "sub-02_T2w.nii.gz", "sub-01_dseg.nii", "sub-01_T2w.nii", "sub-03_dseg.nii", "notes.txt"] {
            fs::write(dir.path().join(f), b"").unwrap();
        }
        let input = InputSection {
            dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let found = discover_subjects(&input).unwrap();
        let ids: Vec<_> = found.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["sub-01", "sub-02"]);
        assert!(found[1].image.ends_with("sub-02_T2w.nii.gz"));
    }

    #[test]
    fn stems_encode_subject_index_and_seed() {
        assert_eq!(sample_stem("sub-7", 42, 9), "sub-7_idx000042_seed9");
    }
}
