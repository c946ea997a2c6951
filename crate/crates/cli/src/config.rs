//! TOML run configuration. Sections mirror the library modules; every field
//! has a default, and the resolved configuration is written next to the
//! outputs so no default stays implicit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synthfetal_core::augment::Profile;
use synthfetal_core::epg::RelaxometryMode;
use synthfetal_core::synth::{GenerationConfig, GeneratorMode};

use crate::error::{CliError, CliResult};

/// Label convention of input label maps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputScheme {
    #[default]
    Feta7,
    /// Draw-EM labels, remapped to FeTA on load.
    Drawem9,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out: Option<PathBuf>,
    pub workers: usize,
    /// Total number of samples.
    pub count: usize,
    /// When set, overrides `count` with this many samples per subject.
    pub per_subject: Option<usize>,
    pub continue_on_error: bool,
    pub compress: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            out: None,
            workers: 1,
            count: 1,
            per_subject: None,
            continue_on_error: false,
            compress: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    /// Directory holding `<subject><image_suffix>.nii[.gz]` and
    /// `<subject><label_suffix>.nii[.gz]` pairs.
    pub dir: Option<PathBuf>,
    pub image_suffix: String,
    pub label_suffix: String,
    pub label_scheme: InputScheme,
}

impl Default for InputSection {
    fn default() -> Self {
        Self {
            dir: None,
            image_suffix: "_T2w".into(),
            label_suffix: "_dseg".into(),
            label_scheme: InputScheme::Feta7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub samples: usize,
    /// Grid of the built-in phantom used when no input directory is set.
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            samples: 10,
            dims: [128, 128, 128],
            spacing: [1.0; 3],
        }
    }
}

pub const DEFAULT_ALPHAS: [f64; 5] = [0.0, 0.2, 0.5, 0.8, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpolateSection {
    /// Checkpoint weighted by `1 - alpha` (synthetic-trained).
    pub a: Option<PathBuf>,
    /// Checkpoint weighted by `alpha` (fine-tuned).
    pub b: Option<PathBuf>,
    pub alphas: Vec<f64>,
}

impl Default for InterpolateSection {
    fn default() -> Self {
        Self {
            a: None,
            b: None,
            alphas: DEFAULT_ALPHAS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// CSV with columns `subject,prediction,ground_truth`.
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpgSection {
    /// FeTA label map rendered label by label.
    pub labels: Option<PathBuf>,
    pub mode: RelaxometryMode,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub labels: Option<PathBuf>,
    pub image: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub input: InputSection,
    pub synthgen: GenerationConfig,
    pub bench: BenchSection,
    pub interpolate: InterpolateSection,
    pub evaluate: EvaluateSection,
    pub epg: EpgSection,
    pub cluster: ClusterSection,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub count: Option<usize>,
    pub alphas: Option<Vec<f64>>,
    pub profile: Option<Profile>,
    pub mode: Option<GeneratorMode>,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::parse(origin, e.message()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.synthgen.master_seed = s;
        }
        if let Some(w) = o.workers {
            self.run.workers = w;
        }
        if let Some(p) = &o.out {
            self.run.out = Some(p.clone());
        }
        if let Some(c) = o.count {
            self.run.count = c;
            self.run.per_subject = None;
        }
        if let Some(a) = &o.alphas {
            self.interpolate.alphas = a.clone();
        }
        if let Some(p) = o.profile {
            self.synthgen.augment.profile = p;
        }
        if let Some(m) = o.mode {
            self.synthgen.mode = m;
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.run.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if self.run.count == 0 || self.run.per_subject == Some(0) {
            return Err(CliError::Config("sample count must be at least 1".into()));
        }
        if self.bench.samples == 0 {
            return Err(CliError::Config("bench.samples must be at least 1".into()));
        }
        self.synthgen.validate()?;
        Ok(())
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.run
            .out
            .as_deref()
            .ok_or_else(|| CliError::Usage("no output path: pass --out or set run.out".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml(), Path::new("x.toml")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_and_overrides() {
        let text = r#"
            [run]
            count = 7
            [synthgen]
            mode = "synthseg"
            mu_range = [10.0, 20.0]
            [synthgen.augment]
            profile = "simple"
        "#;
        let mut cfg = RunConfig::from_toml(text, Path::new("x.toml")).unwrap();
        assert_eq!(cfg.run.count, 7);
        assert_eq!(cfg.synthgen.mode, GeneratorMode::SynthSeg);
        assert_eq!(cfg.synthgen.mu_range, (10.0, 20.0));
        assert_eq!(cfg.synthgen.sigma_range, (0.0, 35.0));
        cfg.apply(&Overrides {
            seed: Some(5),
            workers: Some(3),
            mode: Some(GeneratorMode::RandFabian),
            ..Default::default()
        });
        assert_eq!((cfg.synthgen.master_seed, cfg.run.workers), (5, 3));
        assert_eq!(cfg.synthgen.mode, GeneratorMode::RandFabian);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_counts_rejected() {
        assert!(RunConfig::from_toml("[run]\nwrokers = 2\n", Path::new("x")).is_err());
        let mut cfg = RunConfig::default();
        cfg.run.workers = 0;
        assert!(cfg.validate().is_err());
    }
}
