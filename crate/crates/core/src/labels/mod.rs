//! Label-scheme remapping, meta-class grouping and intensity subclasses.

mod em;

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use em::{em_cluster, fit_gmm_1d, EmOptions, GmmFit};

use crate::error::{Error, Result};
use crate::volume::{LabelMap, LabelScheme, Volume3D};

/// Draw-EM code → FeTA code. Index is the Draw-EM code.
///
/// CSF, GM and WM keep their codes, the skull (4) becomes background,
/// ventricles/cerebellum/deep GM/brainstem shift down by one, and
/// hippocampi + amygdala (9) merge into WM.
pub const DRAWEM_TO_FETA: [u16; 10] = [0, 1, 2, 3, 0, 4, 5, 6, 7, 3];

pub fn remap_drawem_to_feta(lm: &LabelMap) -> Result<LabelMap> {
    let data = lm
        .data()
        .iter()
        .map(|&v| {
            DRAWEM_TO_FETA
                .get(v as usize)
                .copied()
                .ok_or(Error::UnknownLabel {
                    value: v as u32,
                    scheme: LabelScheme::DrawEm9.name(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    lm.with_data(data, LabelScheme::Feta7)
}

pub const META_WM: u16 = 1;
pub const META_GM: u16 = 2;
pub const META_CSF: u16 = 3;
pub const META_NON_BRAIN: u16 = 4;

/// Grouping of FeTA tissue labels into generation classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaClassTable {
    /// Generation class of each FeTA code; entry 0 is unused.
    pub classes: [u16; 8],
    /// Class given to unlabeled voxels with nonzero intensity, if any.
    pub non_brain: Option<u16>,
    pub scheme: LabelScheme,
}

impl MetaClassTable {
    /// WM-like {WM, CBM, BSM}, GM-like {GM, SGM}, CSF-like {CSF, LV}, plus
    /// a non-brain class for unlabeled tissue.
    pub fn fetal() -> Self {
        Self {
            classes: [0, META_CSF, META_GM, META_WM, META_CSF, META_WM, META_GM, META_WM],
            non_brain: Some(META_NON_BRAIN),
            scheme: LabelScheme::Meta4,
        }
    }

    /// Each FeTA label is its own class; unlabeled voxels are background.
    pub fn identity() -> Self {
        Self {
            classes: [0, 1, 2, 3, 4, 5, 6, 7],
            non_brain: None,
            scheme: LabelScheme::Feta7,
        }
    }

    pub fn class_of(&self, label: u16) -> u16 {
        self.classes[label as usize]
    }
}

/// Maps FeTA labels through `table`; unlabeled voxels with positive
/// intensity go to the table's non-brain class.
pub fn build_meta_classes(
    lm: &LabelMap,
    intensity: &Volume3D,
    table: &MetaClassTable,
) -> Result<LabelMap> {
    lm.geometry().ensure_matches(intensity.geometry())?;
    if let Some(&bad) = lm.data().iter().find(|&&v| v > 7) {
        return Err(Error::UnknownLabel {
            value: bad as u32,
            scheme: LabelScheme::Feta7.name(),
        });
    }
    let data = lm
        .data()
        .par_iter()
        .zip(intensity.data().par_iter())
        .map(|(&l, &x)| match (l, table.non_brain) {
            (0, Some(nb)) if x > 0.0 => nb,
            (0, _) => 0,
            (l, _) => table.class_of(l),
        })
        .collect();
    lm.with_data(data, table.scheme)
}

/// How generation classes are split into subclasses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Inclusive range of the per-class subclass count.
    pub k_range: (usize, usize),
    /// Separate range for the non-brain class; `None` reuses `k_range`.
    pub non_brain_k_range: Option<(usize, usize)>,
    pub em: EmOptions,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            k_range: (1, 9),
            non_brain_k_range: None,
            em: EmOptions::default(),
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in std::iter::once(self.k_range).chain(self.non_brain_k_range) {
            if lo < 1 || lo > hi {
                return Err(Error::Config(format!("subclass range ({lo}, {hi}) is invalid")));
            }
        }
        Ok(())
    }
}

/// Subclass map plus the bookkeeping tying each subclass to its class.
#[derive(Clone, Debug, PartialEq)]
pub struct SubclassPartition {
    /// Dense ids `1..=K`; 0 is background.
    pub map: LabelMap,
    /// `(class, k)` in ascending class order.
    pub k_per_class: Vec<(u16, usize)>,
    /// `lookup[id - 1] = (class, component)`.
    pub lookup: Vec<(u16, usize)>,
    pub fits: BTreeMap<u16, GmmFit>,
}

impl SubclassPartition {
    pub fn n_subclasses(&self) -> usize {
        self.lookup.len()
    }

    pub fn class_of(&self, id: u16) -> Option<u16> {
        if id == 0 {
            return None;
        }
        self.lookup.get(id as usize - 1).map(|&(c, _)| c)
    }

    /// Subclass ids `1..=K`.
    pub fn ids(&self) -> impl Iterator<Item = u16> {
        1..=self.lookup.len() as u16
    }

    /// One subclass per class: ids are the class codes renumbered densely.
    pub fn trivial(classes: &LabelMap) -> Result<Self> {
        let present: Vec<u16> = classes.unique_values().into_iter().filter(|&c| c > 0).collect();
        let mut dense = vec![0u16; present.last().map_or(1, |&m| m as usize + 1)];
        for (i, &c) in present.iter().enumerate() {
            dense[c as usize] = i as u16 + 1;
        }
        let data = classes.data().iter().map(|&c| dense[c as usize]).collect();
        Ok(Self {
            map: classes.with_data(data, LabelScheme::Subclass)?,
            k_per_class: present.iter().map(|&c| (c, 1)).collect(),
            lookup: present.iter().map(|&c| (c, 0)).collect(),
            fits: BTreeMap::new(),
        })
    }
}

/// Splits every class present in `classes` into a random number of
/// intensity subclasses by EM on `intensity`.
///
/// For each class in ascending order a count `k ~ U{lo..=hi}` and an EM
/// seed are drawn from `rng`; classes with fewer voxels than `k` use one
/// subclass per voxel. Fits run in parallel but consume no randomness
/// beyond their pre-drawn seeds.
pub fn split_meta_classes<R: Rng + ?Sized>(
    classes: &LabelMap,
    intensity: &Volume3D,
    non_brain: Option<u16>,
    cfg: &SplitConfig,
    rng: &mut R,
) -> Result<SubclassPartition> {
    classes.geometry().ensure_matches(intensity.geometry())?;
    cfg.validate()?;

    let max_class = classes.data().iter().copied().max().unwrap_or(0) as usize;
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); max_class + 1];
    for (&c, &x) in classes.data().iter().zip(intensity.data()) {
        if c > 0 {
            values[c as usize].push(x as f64);
        }
    }

    let mut jobs = Vec::new();
    for (c, vals) in values.iter().enumerate().skip(1) {
        if vals.is_empty() {
            continue;
        }
        let c = c as u16;
        let (lo, hi) = match cfg.non_brain_k_range {
            Some(r) if Some(c) == non_brain => r,
            _ => cfg.k_range,
        };
        let drawn = rng.random_range(lo..=hi);
        let k = drawn.min(vals.len()).max(1);
        let seed = rng.next_u64();
        jobs.push((c, k, seed));
    }

    let fits: Vec<GmmFit> = jobs
        .par_iter()
        .map(|&(c, k, seed)| fit_gmm_1d(&values[c as usize], k, seed, &cfg.em))
        .collect::<Result<_>>()?;

    let mut offset = vec![0u16; max_class + 1];
    let mut lookup = Vec::new();
    for &(c, k, _) in &jobs {
        offset[c as usize] = lookup.len() as u16;
        lookup.extend((0..k).map(|j| (c, j)));
    }
    if lookup.len() > u16::MAX as usize {
        return Err(Error::Config(format!("{} subclasses exceed the code space", lookup.len())));
    }
    let mut fit_of: Vec<Option<&GmmFit>> = vec![None; max_class + 1];
    for (&(c, _, _), fit) in jobs.iter().zip(&fits) {
        fit_of[c as usize] = Some(fit);
    }

    let data: Vec<u16> = classes
        .data()
        .par_iter()
        .zip(intensity.data().par_iter())
        .map(|(&c, &x)| match fit_of.get(c as usize).copied().flatten() {
            Some(fit) if c > 0 => offset[c as usize] + fit.assign(x as f64) as u16 + 1,
            _ => 0,
        })
        .collect();

    Ok(SubclassPartition {
        map: classes.with_data(data, LabelScheme::Subclass)?,
        k_per_class: jobs.iter().map(|&(c, k, _)| (c, k)).collect(),
        lookup,
        fits: jobs.iter().map(|&(c, _, _)| c).zip(fits).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom(n: usize) -> Geometry {
        Geometry::from_spacing([n, 1, 1], [1.0; 3]).unwrap()
    }

    #[test]
    fn drawem_table_exhaustive() {
        let g = geom(10);
        let lm = LabelMap::new(g, (0..10).collect(), LabelScheme::DrawEm9).unwrap();
        let out = remap_drawem_to_feta(&lm).unwrap();
        assert_eq!(out.data(), &[0, 1, 2, 3, 0, 4, 5, 6, 7, 3]);
        assert_eq!(out.scheme(), LabelScheme::Feta7);
    }

    #[test]
    fn drawem_rejects_unknown_code() {
        let lm = LabelMap::new(geom(2), vec![1, 10], LabelScheme::Subclass).unwrap();
        assert!(matches!(
            remap_drawem_to_feta(&lm),
            Err(Error::UnknownLabel { value: 10, .. })
        ));
    }

    #[test]
    fn meta_classes_follow_table_and_intensity() {
        let g = geom(10);
        let lm = LabelMap::new(g.clone(), vec![0, 1, 2, 3, 4, 5, 6, 7, 0, 0], LabelScheme::Feta7)
            .unwrap();
        let img = Volume3D::new(g, vec![0., 1., 1., 1., 1., 1., 1., 1., 120., 0.]).unwrap();
        let m = build_meta_classes(&lm, &img, &MetaClassTable::fetal()).unwrap();
        assert_eq!(m.data(), &[0, 3, 2, 1, 3, 1, 2, 1, 4, 0]);
        assert_eq!(m.scheme(), LabelScheme::Meta4);
        let id = build_meta_classes(&lm, &img, &MetaClassTable::identity()).unwrap();
        assert_eq!(id.data(), &[0, 1, 2, 3, 4, 5, 6, 7, 0, 0]);
    }

    #[test]
    fn meta_classes_reject_geometry_mismatch() {
        let lm = LabelMap::new(geom(3), vec![0; 3], LabelScheme::Feta7).unwrap();
        let img = Volume3D::filled(geom(4), 0.0);
        assert!(matches!(
            build_meta_classes(&lm, &img, &MetaClassTable::fetal()),
            Err(Error::Geometry(_))
        ));
    }

    fn toy() -> (LabelMap, Volume3D) {
        let n = 600;
        let g = geom(n);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cls = Vec::new();
        let mut x = Vec::new();
        for i in 0..n {
            let c = (i % 4) as u16;
            cls.push(c);
            x.push(if c == 0 { 0.0 } else { rng.random_range(0.0..100.0f32) });
        }
        (
            LabelMap::new(g.clone(), cls, LabelScheme::Meta4).unwrap(),
            Volume3D::new(g, x).unwrap(),
        )
    }

    #[test]
    fn unit_range_relabels_classes() {
        let (m, img) = toy();
        let cfg = SplitConfig {
            k_range: (1, 1),
            ..Default::default()
        };
        let p = split_meta_classes(&m, &img, Some(4), &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(p.map.data(), m.data());
        assert_eq!(p.n_subclasses(), 3);
    }

    #[test]
    fn split_partitions_each_class() {
        let (m, img) = toy();
        let cfg = SplitConfig::default();
        for seed in 0..10 {
            let p = split_meta_classes(&m, &img, Some(4), &cfg, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap();
            for &(_, k) in &p.k_per_class {
                assert!((1..=9).contains(&k));
            }
            for (&c, &s) in m.data().iter().zip(p.map.data()) {
                assert_eq!(c == 0, s == 0);
                if c > 0 {
                    assert_eq!(p.class_of(s), Some(c));
                }
            }
            let again =
                split_meta_classes(&m, &img, Some(4), &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(p, again);
        }
    }

    #[test]
    fn small_class_falls_back_to_voxel_count() {
        let g = geom(4);
        let m = LabelMap::new(g.clone(), vec![1, 1, 2, 0], LabelScheme::Meta4).unwrap();
        let img = Volume3D::new(g, vec![1.0, 2.0, 3.0, 0.0]).unwrap();
        let cfg = SplitConfig {
            k_range: (9, 9),
            ..Default::default()
        };
        let p = split_meta_classes(&m, &img, None, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(p.k_per_class, vec![(1, 2), (2, 1)]);
    }

    #[test]
    fn trivial_partition_is_dense() {
        let lm = LabelMap::new(geom(5), vec![0, 3, 7, 3, 0], LabelScheme::Feta7).unwrap();
        let p = SubclassPartition::trivial(&lm).unwrap();
        assert_eq!(p.map.data(), &[0, 1, 2, 1, 0]);
        assert_eq!(p.class_of(2), Some(7));
    }
}
