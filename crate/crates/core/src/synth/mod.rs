//! Label-map driven image synthesis: per-sample pipeline from a FeTA label
//! map and its intensity image to a randomized training pair.

mod gmm;
mod stream;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::{
    corrupt_intensity, draw_spatial, normalize_min_max, resolution_step, AugmentConfig, Profile,
    ProfileRecord, SimpleDecisions,
};
use crate::epg::{
    render_epg_volume, sample_relaxometry, sample_sequence, EpgSequenceParams, RelaxometryConfig,
    RelaxometryMode, RelaxometryTable, SequenceRanges,
};
use crate::error::{Error, Result};
use crate::labels::{build_meta_classes, split_meta_classes, MetaClassTable, SplitConfig};
use crate::rng::{RngStream, Stage};
use crate::volume::{InterpKind, LabelMap, LabelScheme, Volume3D};

pub use gmm::{render_intensities, sample_gmm_params, GmmParams};
pub use stream::{SampleStream, Subject};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorMode {
    /// Subclasses within the original FeTA labels; unlabeled voxels are background.
    SynthSeg,
    /// Subclasses within meta-classes, including non-brain tissue.
    #[default]
    FetalSynthSeg,
    /// Meta-class subclasses rendered by EPG with reference relaxometry.
    Fabian,
    /// As `Fabian`, with relaxometry from one broad distribution.
    RandFabian,
}

impl GeneratorMode {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorMode::SynthSeg => "synthseg",
            GeneratorMode::FetalSynthSeg => "fetalsynthseg",
            GeneratorMode::Fabian => "fabian",
            GeneratorMode::RandFabian => "randfabian",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "synthseg" => Some(Self::SynthSeg),
            "fetalsynthseg" => Some(Self::FetalSynthSeg),
            "fabian" => Some(Self::Fabian),
            "randfabian" => Some(Self::RandFabian),
            _ => None,
        }
    }

    pub fn is_epg(&self) -> bool {
        matches!(self, Self::Fabian | Self::RandFabian)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpgConfig {
    pub relaxometry: RelaxometryConfig,
    pub sequence: SequenceRanges,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub mode: GeneratorMode,
    pub mu_range: (f64, f64),
    pub sigma_range: (f64, f64),
    pub split: SplitConfig,
    /// Class table for every mode except `SynthSeg`, which always uses the
    /// identity table.
    pub meta_table: MetaClassTable,
    pub augment: AugmentConfig,
    pub epg: EpgConfig,
    pub master_seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            mode: GeneratorMode::default(),
            mu_range: (0.0, 255.0),
            sigma_range: (0.0, 35.0),
            split: SplitConfig::default(),
            meta_table: MetaClassTable::fetal(),
            augment: AugmentConfig::default(),
            epg: EpgConfig::default(),
            master_seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.mu_range;
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(Error::InvalidRange(format!("mu_range ({a}, {b})")));
        }
        let (a, b) = self.sigma_range;
        if !(a.is_finite() && b.is_finite() && 0.0 <= a && a <= b) {
            return Err(Error::InvalidRange(format!("sigma_range ({a}, {b})")));
        }
        self.split.validate()?;
        self.augment.validate()
    }

    pub fn class_table(&self) -> MetaClassTable {
        match self.mode {
            GeneratorMode::SynthSeg => MetaClassTable::identity(),
            _ => self.meta_table.clone(),
        }
    }

    fn stream(&self, sample_index: u64, stage: Stage) -> RngStream {
        RngStream::new(self.master_seed, sample_index, stage)
    }
}

/// One drawn subclass Gaussian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmDraw {
    pub id: u16,
    pub class: u16,
    pub mu: f64,
    pub sigma: f64,
}

/// Everything needed to explain, and re-render, one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub subject_id: Option<String>,
    pub master_seed: u64,
    pub sample_index: u64,
    pub mode: GeneratorMode,
    /// Clustering runs on the deformed intensity.
    pub cluster_order: String,
    /// `(class, subclass count)`.
    pub k_per_class: Vec<(u16, usize)>,
    pub gmm: Option<Vec<GmmDraw>>,
    pub relaxometry: Option<RelaxometryTable>,
    pub sequence: Option<EpgSequenceParams>,
    /// Classes whose drawn T2 exceeds T1.
    pub relaxometry_warnings: Vec<u16>,
    pub augmentation: ProfileRecord,
}

/// Wall-clock seconds per pipeline stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub augment: f64,
    pub cluster: f64,
    pub render: f64,
    pub corrupt: f64,
    pub resample: f64,
    pub normalize: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.augment + self.cluster + self.render + self.corrupt + self.resample + self.normalize
    }
}

#[derive(Clone, Debug)]
pub struct SamplePair {
    pub image: Volume3D,
    /// Deformed FeTA labels.
    pub labels: LabelMap,
    pub provenance: SampleRecord,
    pub timings: StageTimings,
}

fn lap(t: &mut Instant) -> f64 {
    let now = Instant::now();
    let d = now.duration_since(*t).as_secs_f64();
    *t = now;
    d
}

/// Generates sample `sample_index` from one subject. The result is a pure
/// function of the inputs, `cfg` (including its master seed) and the index:
/// every stage draws from its own `(seed, index, stage)` stream.
///
/// Order: spatial transform of labels and intensity, class partition and EM
/// split on the deformed intensity, GMM (or EPG) rendering, intensity
/// corruption, resolution simulation, min-max normalisation.
pub fn generate_sample(
    lm: &LabelMap,
    intensity: &Volume3D,
    cfg: &GenerationConfig,
    sample_index: u64,
) -> Result<SamplePair> {
    cfg.validate()?;
    if lm.scheme() != LabelScheme::Feta7 {
        return Err(Error::InvalidVolume(format!(
            "generation needs FETA7 labels, got {}",
            lm.scheme().name()
        )));
    }
    lm.geometry().ensure_matches(intensity.geometry())?;
    let mut timings = StageTimings::default();
    let mut t = Instant::now();

    let aug = &cfg.augment;
    let decisions = match aug.profile {
        Profile::Simple => SimpleDecisions::draw(
            aug.simple.probability,
            &mut cfg.stream(sample_index, Stage::Profile).rng(),
        ),
        Profile::SynthSegFull => SimpleDecisions::all(true),
    };
    let spatial = draw_spatial(
        aug,
        &decisions,
        lm.geometry(),
        &mut cfg.stream(sample_index, Stage::Spatial).rng(),
    )?;
    let labels = spatial.apply(lm, InterpKind::NearestNeighbor)?;
    let deformed = spatial.apply(intensity, InterpKind::Trilinear)?;
    timings.augment += lap(&mut t);

    let table = cfg.class_table();
    let classes = build_meta_classes(&labels, &deformed, &table)?;
    let partition = split_meta_classes(
        &classes,
        &deformed,
        table.non_brain,
        &cfg.split,
        &mut cfg.stream(sample_index, Stage::Partition).rng(),
    )?;
    timings.cluster += lap(&mut t);

    let mut gmm = None;
    let mut relaxometry = None;
    let mut sequence = None;
    let image = if cfg.mode.is_epg() {
        let seq = sample_sequence(
            &cfg.epg.sequence,
            &mut cfg.stream(sample_index, Stage::Sequence).rng(),
        )?;
        let mode = match cfg.mode {
            GeneratorMode::Fabian => RelaxometryMode::Reference,
            _ => RelaxometryMode::Randomized,
        };
        let targets: Vec<(u16, u16)> = partition
            .ids()
            .map(|id| (id, partition.class_of(id).expect("dense ids")))
            .collect();
        let relax = sample_relaxometry(
            mode,
            &cfg.epg.relaxometry,
            &targets,
            &mut cfg.stream(sample_index, Stage::Relaxometry).rng(),
        )?;
        let img = render_epg_volume(&partition.map, &relax, &seq)?;
        relaxometry = Some(relax);
        sequence = Some(seq);
        img
    } else {
        let params = sample_gmm_params(
            &partition,
            cfg,
            &mut cfg.stream(sample_index, Stage::Gmm).rng(),
        );
        let img = render_intensities(&partition, &params, &cfg.stream(sample_index, Stage::Render))?;
        gmm = Some(
            partition
                .ids()
                .map(|id| {
                    let (mu, sigma) = params.get(id).expect("drawn for every id");
                    GmmDraw {
                        id,
                        class: partition.class_of(id).expect("dense ids"),
                        mu,
                        sigma,
                    }
                })
                .collect(),
        );
        img
    };
    timings.render += lap(&mut t);

    let (image, corruption) = corrupt_intensity(
        &image,
        aug,
        &decisions,
        &mut cfg.stream(sample_index, Stage::Corrupt).rng(),
    )?;
    timings.corrupt += lap(&mut t);
    let (image, resolution) = resolution_step(
        &image,
        aug,
        &mut cfg.stream(sample_index, Stage::Resolution).rng(),
    )?;
    timings.resample += lap(&mut t);
    let image = normalize_min_max(&image);
    timings.normalize += lap(&mut t);

    let relaxometry_warnings = relaxometry
        .as_ref()
        .map(RelaxometryTable::warnings)
        .unwrap_or_default();
    let provenance = SampleRecord {
        subject_id: None,
        master_seed: cfg.master_seed,
        sample_index,
        mode: cfg.mode,
        cluster_order: "deform-then-cluster".into(),
        k_per_class: partition.k_per_class.clone(),
        gmm,
        relaxometry,
        sequence,
        relaxometry_warnings,
        augmentation: ProfileRecord::new(aug.profile, &decisions, &spatial, corruption, resolution),
    };
    Ok(SamplePair {
        image,
        labels,
        provenance,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::fetal_phantom;

    fn subject() -> (LabelMap, Volume3D) {
        fetal_phantom([48, 48, 48], [2.5; 3], 4.0, 1).unwrap()
    }

    fn fast_cfg() -> GenerationConfig {
        GenerationConfig {
            split: SplitConfig {
                k_range: (1, 3),
                ..Default::default()
            },
            master_seed: 99,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_label_conserving() {
        let (lm, img) = subject();
        let cfg = fast_cfg();
        let a = generate_sample(&lm, &img, &cfg, 3).unwrap();
        let b = generate_sample(&lm, &img, &cfg, 3).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.provenance, b.provenance);
        let inputs = lm.unique_values();
        assert!(a.labels.unique_values().iter().all(|v| inputs.contains(v)));
        let (lo, hi) = a.image.min_max().unwrap();
        assert!(lo >= 0.0 && hi <= 1.0 && hi > lo);
        let c = generate_sample(&lm, &img, &cfg, 4).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn synthseg_with_one_subclass_has_seven_classes() {
        let (lm, img) = subject();
        let cfg = GenerationConfig {
            mode: GeneratorMode::SynthSeg,
            split: SplitConfig {
                k_range: (1, 1),
                ..Default::default()
            },
            ..Default::default()
        };
        let s = generate_sample(&lm, &img, &cfg, 0).unwrap();
        let k = &s.provenance.k_per_class;
        assert_eq!(k.len(), 7);
        assert!(k.iter().all(|&(_, k)| k == 1));
        assert_eq!(s.provenance.gmm.as_ref().unwrap().len(), 7);
    }

    #[test]
    fn identity_table_makes_modes_equivalent() {
        let (lm, img) = subject();
        let base = fast_cfg();
        let a = generate_sample(&lm, &img, &GenerationConfig { mode: GeneratorMode::SynthSeg, ..base.clone() }, 1).unwrap();
        let b = generate_sample(
            &lm,
            &img,
            &GenerationConfig {
                mode: GeneratorMode::FetalSynthSeg,
                meta_table: MetaClassTable::identity(),
                ..base
            },
            1,
        )
        .unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.provenance.gmm, b.provenance.gmm);
    }

    #[test]
    fn randomized_epg_mode_renders() {
        let (lm, img) = subject();
        let cfg = GenerationConfig {
            mode: GeneratorMode::RandFabian,
            ..fast_cfg()
        };
        let s = generate_sample(&lm, &img, &cfg, 0).unwrap();
        assert!(s.provenance.relaxometry.is_some() && s.provenance.gmm.is_none());
        let (lo, hi) = s.image.min_max().unwrap();
        assert!(lo >= 0.0 && hi <= 1.0);
        // reference mode has no built-in intervals
        let cfg = GenerationConfig {
            mode: GeneratorMode::Fabian,
            ..fast_cfg()
        };
        assert!(matches!(generate_sample(&lm, &img, &cfg, 0), Err(Error::MissingParams(_))));
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let (lm, _) = subject();
        let other = fetal_phantom([48, 48, 49], [2.5; 3], 4.0, 1).unwrap().1;
        assert!(matches!(
            generate_sample(&lm, &other, &fast_cfg(), 0),
            Err(Error::Geometry(_))
        ));
    }
}
