//! Generation throughput: per-stage medians and 95th percentiles for the
//! GMM pipeline and the EPG pipeline on one subject.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use synthfetal_core::metrics::nearest_rank;
use synthfetal_core::phantom::fetal_phantom;
use synthfetal_core::synth::{generate_sample, GenerationConfig, GeneratorMode, StageTimings, Subject};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::generate::{discover_subjects, pool};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Spread {
    pub median: f64,
    pub p95: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        let mut w = values.to_vec();
        Self {
            median: nearest_rank(&mut v, 50.0).unwrap_or(f64::NAN),
            p95: nearest_rank(&mut w, 95.0).unwrap_or(f64::NAN),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineBench {
    pub mode: GeneratorMode,
    pub samples: usize,
    /// Wall seconds per sample.
    pub wall: Vec<f64>,
    /// Sum of the stage timings per sample.
    pub staged: Vec<f64>,
    pub stages: BTreeMap<&'static str, Spread>,
    pub total: Spread,
    pub volumes_per_sec: f64,
    /// Image checksums, to show repeated runs render the same samples.
    pub checksums: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub subject: String,
    pub dims: [usize; 3],
    pub workers: usize,
    pub gmm: PipelineBench,
    pub epg: PipelineBench,
    /// EPG median over GMM median.
    pub speedup: f64,
}

fn checksum(data: &[f32]) -> u64 {
    // FNV-1a over the raw bits
    data.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, x| {
        (h ^ x.to_bits() as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn bench_pipeline(subject: &Subject, cfg: &GenerationConfig, samples: usize) -> CliResult<PipelineBench> {
    let mut wall = Vec::new();
    let mut timings: Vec<StageTimings> = Vec::new();
    let mut checksums = Vec::new();
    for i in 0..samples as u64 {
        let t = Instant::now();
        let pair = generate_sample(&subject.labels, &subject.intensity, cfg, i)?;
        wall.push(t.elapsed().as_secs_f64());
        timings.push(pair.timings);
        checksums.push(checksum(pair.image.data()));
    }
    let column = |f: fn(&StageTimings) -> f64| timings.iter().map(f).collect::<Vec<_>>();
    let mut stages = BTreeMap::new();
    stages.insert("augment", Spread::of(&column(|t| t.augment)));
    stages.insert("cluster", Spread::of(&column(|t| t.cluster)));
    stages.insert("render", Spread::of(&column(|t| t.render)));
    stages.insert("corrupt", Spread::of(&column(|t| t.corrupt)));
    stages.insert("resample", Spread::of(&column(|t| t.resample)));
    stages.insert("normalize", Spread::of(&column(|t| t.normalize)));
    let total = Spread::of(&wall);
    Ok(PipelineBench {
        mode: cfg.mode,
        samples,
        staged: column(StageTimings::total),
        volumes_per_sec: samples as f64 / wall.iter().sum::<f64>(),
        wall,
        stages,
        total,
        checksums,
    })
}

/// Benchmarks the configured GMM mode (FetalSynthSeg when an EPG mode is
/// configured) against the configured EPG mode (RandFabian otherwise) on
/// the first input subject, or on the built-in phantom.
pub fn cmd_bench(cfg: &RunConfig) -> CliResult<BenchReport> {
    cfg.validate()?;
    let subject = match cfg.input.dir {
        Some(_) => {
            let sources = discover_subjects(&cfg.input)?;
            let first = sources
                .first()
                .ok_or_else(|| crate::error::CliError::NoSubjects(cfg.input.dir.clone().unwrap_or_default()))?;
            first.load()?
        }
        None => {
            let (labels, intensity) = fetal_phantom(cfg.bench.dims, cfg.bench.spacing, 5.0, cfg.synthgen.master_seed)?;
            Subject {
                id: "phantom".into(),
                labels,
                intensity,
            }
        }
    };
    let (gmm_mode, epg_mode) = if cfg.synthgen.mode.is_epg() {
        (GeneratorMode::FetalSynthSeg, cfg.synthgen.mode)
    } else {
        (cfg.synthgen.mode, GeneratorMode::RandFabian)
    };
    let with_mode = |mode| GenerationConfig {
        mode,
        ..cfg.synthgen.clone()
    };
    let (gmm, epg) = pool(cfg.run.workers)?.install(|| -> CliResult<_> {
        Ok((
            bench_pipeline(&subject, &with_mode(gmm_mode), cfg.bench.samples)?,
            bench_pipeline(&subject, &with_mode(epg_mode), cfg.bench.samples)?,
        ))
    })?;
    Ok(BenchReport {
        subject: subject.id.clone(),
        dims: subject.labels.dims(),
        workers: cfg.run.workers,
        speedup: epg.total.median / gmm.total.median,
        gmm,
        epg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_times_account_for_wall_time() {
        let mut cfg = RunConfig::default();
        cfg.bench.dims = [40, 40, 40];
        cfg.bench.spacing = [3.0; 3];
        cfg.bench.samples = 3;
        cfg.synthgen.split.k_range = (1, 3);
        let a = cmd_bench(&cfg).unwrap();
        for p in [&a.gmm, &a.epg] {
            for (w, s) in p.wall.iter().zip(&p.staged) {
                assert!((w - s).abs() <= 0.1 * w, "{w} vs {s}");
            }
            assert!(p.total.median <= p.total.p95);
        }
        let b = cmd_bench(&cfg).unwrap();
        assert_eq!(a.gmm.checksums, b.gmm.checksums);
        assert_eq!(a.epg.checksums, b.epg.checksums);
    }
}
