use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EpgSequenceParams;
use crate::augment::uniform;
use crate::error::{Error, Result};

/// Relaxation times (ms) and proton-density weight of one tissue class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relaxometry {
    pub t1: f64,
    pub t2: f64,
    pub pd: f64,
}

/// Per-class relaxometry.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RelaxometryTable {
    entries: BTreeMap<u16, Relaxometry>,
}

impl RelaxometryTable {
    pub fn from_entries(entries: impl IntoIterator<Item = (u16, Relaxometry)>) -> Self {
        Self {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn get(&self, class: u16) -> Option<&Relaxometry> {
        self.entries.get(&class)
    }

    pub fn entries(&self) -> &BTreeMap<u16, Relaxometry> {
        &self.entries
    }

    /// Classes drawn with `T2 > T1`. Not an error: randomized draws may be
    /// unphysiological on purpose.
    pub fn warnings(&self) -> Vec<u16> {
        self.entries
            .iter()
            .filter(|(_, r)| r.t2 > r.t1)
            .map(|(&c, _)| c)
            .collect()
    }
}

/// Closed sampling intervals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxRanges {
    pub t1: (f64, f64),
    pub t2: (f64, f64),
    pub pd: (f64, f64),
}

impl RelaxRanges {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("t1", self.t1), ("t2", self.t2), ("pd", self.pd)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::InvalidRange(format!(
                    "{name} interval [{lo}, {hi}] must be positive and nonempty"
                )));
            }
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Relaxometry {
        Relaxometry {
            t1: uniform(rng, self.t1.0, self.t1.1),
            t2: uniform(rng, self.t2.0, self.t2.1),
            pd: uniform(rng, self.pd.0, self.pd.1),
        }
    }
}

/// Reference intervals for one class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRanges {
    pub class: u16,
    #[serde(flatten)]
    pub ranges: RelaxRanges,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelaxometryMode {
    /// Draw inside user-supplied per-class intervals.
    #[default]
    Reference,
    /// Draw every class from one broad interval.
    Randomized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelaxometryConfig {
    /// Per-class intervals for `Reference`; there are no built-in values.
    pub reference: Vec<ClassRanges>,
    /// Broad interval for `Randomized`.
    pub randomized: RelaxRanges,
}

impl Default for RelaxometryConfig {
    fn default() -> Self {
        Self {
            reference: Vec::new(),
            randomized: RelaxRanges {
                t1: (200.0, 5000.0),
                t2: (10.0, 3000.0),
                pd: (0.2, 1.0),
            },
        }
    }
}

/// Draws relaxometry for every `(id, class)` target, in the given order.
/// `class` selects the reference interval; the entry is stored under `id`,
/// so subclasses of one class get independent draws.
pub fn sample_relaxometry<R: Rng + ?Sized>(
    mode: RelaxometryMode,
    cfg: &RelaxometryConfig,
    targets: &[(u16, u16)],
    rng: &mut R,
) -> Result<RelaxometryTable> {
    let mut entries = BTreeMap::new();
    match mode {
        RelaxometryMode::Randomized => {
            cfg.randomized.validate()?;
            for &(id, _) in targets {
                entries.insert(id, cfg.randomized.draw(rng));
            }
        }
        RelaxometryMode::Reference => {
            for r in &cfg.reference {
                r.ranges.validate()?;
            }
            for &(id, class) in targets {
                let r = cfg
                    .reference
                    .iter()
                    .find(|r| r.class == class)
                    .ok_or(Error::MissingParams(class))?;
                entries.insert(id, r.ranges.draw(rng));
            }
        }
    }
    Ok(RelaxometryTable { entries })
}

/// Sequence parameter ranges, one draw per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceRanges {
    /// Effective echo time (ms).
    pub te_eff: (f64, f64),
    /// Echo spacing (ms).
    pub esp: f64,
    /// Echo train length.
    pub etl: usize,
    /// Excitation flip angle (degrees).
    pub excitation: f64,
    /// Refocusing flip angle (degrees), constant along the train.
    pub refocusing: (f64, f64),
}

impl Default for SequenceRanges {
    fn default() -> Self {
        Self {
            te_eff: (90.0, 300.0),
            esp: 6.12,
            etl: 150,
            excitation: 90.0,
            refocusing: (150.0, 180.0),
        }
    }
}

pub fn sample_sequence<R: Rng + ?Sized>(r: &SequenceRanges, rng: &mut R) -> Result<EpgSequenceParams> {
    for (name, (lo, hi)) in [("te_eff", r.te_eff), ("refocusing", r.refocusing)] {
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidRange(format!("{name} interval [{lo}, {hi}]")));
        }
    }
    let te = uniform(rng, r.te_eff.0, r.te_eff.1);
    let alpha = uniform(rng, r.refocusing.0, r.refocusing.1);
    let seq = EpgSequenceParams::constant(r.esp, r.etl, r.excitation, alpha, te);
    seq.validate()?;
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn point(x: f64) -> RelaxRanges {
        RelaxRanges {
            t1: (x, x),
            t2: (x / 10.0, x / 10.0),
            pd: (0.8, 0.8),
        }
    }

    #[test]
    fn degenerate_intervals_are_exact() {
        let cfg = RelaxometryConfig {
            reference: vec![ClassRanges { class: 1, ranges: point(1500.0) }],
            ..Default::default()
        };
        let t = sample_relaxometry(RelaxometryMode::Reference, &cfg, &[(1, 1), (2, 1)], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for id in [1, 2] {
            assert_eq!(t.get(id), Some(&Relaxometry { t1: 1500.0, t2: 150.0, pd: 0.8 }));
        }
    }

    #[test]
    fn randomized_draws_stay_inside() {
        let cfg = RelaxometryConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = cfg.randomized;
        for _ in 0..10_000 {
            let t = sample_relaxometry(RelaxometryMode::Randomized, &cfg, &[(3, 3)], &mut rng).unwrap();
            let r = t.get(3).unwrap();
            assert!(r.t1 >= b.t1.0 && r.t1 <= b.t1.1);
            assert!(r.t2 >= b.t2.0 && r.t2 <= b.t2.1);
            assert!(r.pd >= b.pd.0 && r.pd <= b.pd.1);
        }
    }

    #[test]
    fn same_seed_same_table() {
        let cfg = RelaxometryConfig::default();
        let targets = [(1, 1), (2, 2), (3, 3)];
        let a = sample_relaxometry(RelaxometryMode::Randomized, &cfg, &targets, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_relaxometry(RelaxometryMode::Randomized, &cfg, &targets, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_intervals_rejected() {
        let mut cfg = RelaxometryConfig::default();
        cfg.randomized.t2 = (50.0, 10.0);
        let r = sample_relaxometry(RelaxometryMode::Randomized, &cfg, &[(1, 1)], &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::InvalidRange(_))));
        let missing = sample_relaxometry(RelaxometryMode::Reference, &RelaxometryConfig::default(), &[(1, 1)], &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(missing, Err(Error::MissingParams(1))));
    }

    #[test]
    fn warnings_flag_long_t2() {
        let t = RelaxometryTable::from_entries([
            (1, Relaxometry { t1: 100.0, t2: 200.0, pd: 1.0 }),
            (2, Relaxometry { t1: 1000.0, t2: 200.0, pd: 1.0 }),
        ]);
        assert_eq!(t.warnings(), vec![1]);
    }

    #[test]
    fn sequence_draw_respects_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let s = sample_sequence(&SequenceRanges::default(), &mut rng).unwrap();
            assert!((90.0..=300.0).contains(&s.te_eff));
            assert_eq!(s.etl(), 150);
            assert!(s.refocusing_deg.iter().all(|a| (150.0..=180.0).contains(a)));
        }
    }
}
