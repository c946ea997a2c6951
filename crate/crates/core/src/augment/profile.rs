//! The two augmentation profiles.
//!
//! `SynthSegFull` always applies affine + SVF deformation, bias field,
//! gamma, noise and resolution simulation with randomized parameters.
//! `Simple` applies each of affine, gamma, noise and blur independently
//! with probability `p`, then rescales to `[0, 1]`.

use nalgebra::Matrix4;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::affine::{draw_affine, AffineParams, AffineRanges};
use super::intensity::{
    add_gaussian_noise, apply_bias_field, gamma_contrast, gaussian_blur, normalize_min_max,
    BiasFieldConfig,
};
use super::resolution::{simulate_resolution, ResolutionDraw, ResolutionSim};
use super::svf::{draw_svf_deformation, DeformationField, SvfConfig};
use super::uniform;
use super::warp::{apply_transform, Warp};
use crate::error::{Error, Result};
use crate::volume::{Geometry, InterpKind, LabelMap, Volume3D};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    #[serde(rename = "synthseg")]
    SynthSegFull,
    Simple,
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::SynthSegFull => "synthseg",
            Profile::Simple => "simple",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "synthseg" | "synthseg_full" | "full" => Some(Profile::SynthSegFull),
            "simple" => Some(Profile::Simple),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FullConfig {
    pub affine: AffineRanges,
    pub svf: SvfConfig,
    pub bias: BiasFieldConfig,
    pub gamma_range: (f64, f64),
    /// Noise std range, in units of the image maximum.
    pub noise_range: (f64, f64),
    pub resolution: ResolutionSim,
}

impl Default for FullConfig {
    fn default() -> Self {
        Self {
            affine: AffineRanges::default(),
            svf: SvfConfig::default(),
            bias: BiasFieldConfig::default(),
            gamma_range: (0.5, 1.5),
            noise_range: (0.0, 0.05),
            resolution: ResolutionSim::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimpleConfig {
    /// Per-operation application probability.
    pub probability: f64,
    pub affine: AffineRanges,
    pub gamma_range: (f64, f64),
    /// Noise std, in units of the image maximum.
    pub noise_sigma: f64,
    /// Blur std range (mm).
    pub blur_range: (f64, f64),
}

impl Default for SimpleConfig {
    fn default() -> Self {
        Self {
            probability: 0.5,
            affine: AffineRanges::default(),
            gamma_range: (0.5, 1.5),
            noise_sigma: 0.1,
            blur_range: (0.5, 1.5),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub profile: Profile,
    pub full: FullConfig,
    pub simple: SimpleConfig,
}

fn check_range(name: &str, (lo, hi): (f64, f64), positive: bool) -> Result<()> {
    let ok = lo.is_finite() && hi.is_finite() && lo <= hi && if positive { lo > 0.0 } else { lo >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidRange(format!("{name} range ({lo}, {hi})")))
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        check_range("full.gamma_range", self.full.gamma_range, true)?;
        check_range("full.noise_range", self.full.noise_range, false)?;
        self.full.resolution.validate()?;
        let p = self.simple.probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidRange(format!("simple.probability {p} outside [0, 1]")));
        }
        check_range("simple.gamma_range", self.simple.gamma_range, true)?;
        check_range("simple.blur_range", self.simple.blur_range, false)?;
        if !(self.simple.noise_sigma >= 0.0) {
            return Err(Error::InvalidRange("simple.noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Which operations the simple profile applies to one sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimpleDecisions {
    pub affine: bool,
    pub gamma: bool,
    pub noise: bool,
    pub blur: bool,
}

impl SimpleDecisions {
    pub fn draw<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Self {
        let mut flip = || rng.random::<f64>() < p;
        Self {
            affine: flip(),
            gamma: flip(),
            noise: flip(),
            blur: flip(),
        }
    }

    pub fn all(on: bool) -> Self {
        Self {
            affine: on,
            gamma: on,
            noise: on,
            blur: on,
        }
    }
}

/// A drawn spatial transform, applied identically to image and labels.
#[derive(Clone, Debug)]
pub struct SpatialTransform {
    pub params: Option<AffineParams>,
    pub matrix: Matrix4<f64>,
    pub field: Option<DeformationField>,
}

impl SpatialTransform {
    pub fn identity() -> Self {
        Self {
            params: None,
            matrix: Matrix4::identity(),
            field: None,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.matrix == Matrix4::identity() && self.field.is_none()
    }

    pub fn apply<T: Warp + Clone>(&self, v: &T, interp: InterpKind) -> Result<T> {
        if self.is_identity() {
            return Ok(v.clone());
        }
        apply_transform(v, &self.matrix, self.field.as_ref(), interp)
    }
}

/// Draws the spatial part of a profile. `decisions` is only read for
/// `Simple`.
pub fn draw_spatial<R: Rng + ?Sized>(
    cfg: &AugmentConfig,
    decisions: &SimpleDecisions,
    geom: &Geometry,
    rng: &mut R,
) -> Result<SpatialTransform> {
    match cfg.profile {
        Profile::SynthSegFull => {
            let (params, matrix) = draw_affine(&cfg.full.affine, geom, rng);
            let field = draw_svf_deformation(&cfg.full.svf, geom, rng)?;
            Ok(SpatialTransform {
                params: Some(params),
                matrix,
                field: Some(field),
            })
        }
        Profile::Simple if decisions.affine => {
            let (params, matrix) = draw_affine(&cfg.simple.affine, geom, rng);
            Ok(SpatialTransform {
                params: Some(params),
                matrix,
                field: None,
            })
        }
        Profile::Simple => Ok(SpatialTransform::identity()),
    }
}

/// Drawn intensity corruption parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRecord {
    pub bias_field: bool,
    pub gamma: Option<f64>,
    /// Absolute noise std after scaling by the image maximum.
    pub noise_sigma: Option<f64>,
    pub blur_sigma_mm: Option<f64>,
}

fn image_max(v: &Volume3D) -> f64 {
    v.min_max().map_or(0.0, |(_, hi)| hi.max(0.0) as f64)
}

/// Intensity corruption chain: bias field, gamma, noise for `SynthSegFull`;
/// gamma, noise, blur (each per `decisions`) for `Simple`.
pub fn corrupt_intensity<R: Rng + ?Sized>(
    v: &Volume3D,
    cfg: &AugmentConfig,
    decisions: &SimpleDecisions,
    rng: &mut R,
) -> Result<(Volume3D, CorruptionRecord)> {
    let mut rec = CorruptionRecord::default();
    let mut out;
    match cfg.profile {
        Profile::SynthSegFull => {
            let f = &cfg.full;
            out = apply_bias_field(v, &f.bias, rng);
            rec.bias_field = f.bias.std > 0.0;
            let g = uniform(rng, f.gamma_range.0, f.gamma_range.1);
            out = gamma_contrast(&out, g)?;
            rec.gamma = Some(g);
            let s = uniform(rng, f.noise_range.0, f.noise_range.1) * image_max(&out);
            out = add_gaussian_noise(&out, s, rng);
            rec.noise_sigma = Some(s);
        }
        Profile::Simple => {
            let s = &cfg.simple;
            out = v.clone();
            if decisions.gamma {
                let g = uniform(rng, s.gamma_range.0, s.gamma_range.1);
                out = gamma_contrast(&out, g)?;
                rec.gamma = Some(g);
            }
            if decisions.noise {
                let sigma = s.noise_sigma * image_max(&out);
                out = add_gaussian_noise(&out, sigma, rng);
                rec.noise_sigma = Some(sigma);
            }
            if decisions.blur {
                let b = uniform(rng, s.blur_range.0, s.blur_range.1);
                out = gaussian_blur(&out, [b; 3]);
                rec.blur_sigma_mm = Some(b);
            }
        }
    }
    Ok((out, rec))
}

/// Resolution simulation; only the full profile simulates acquisitions.
pub fn resolution_step<R: Rng + ?Sized>(
    v: &Volume3D,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(Volume3D, Option<ResolutionDraw>)> {
    match cfg.profile {
        Profile::SynthSegFull => {
            let (out, d) = simulate_resolution(v, &cfg.full.resolution, rng)?;
            Ok((out, Some(d)))
        }
        Profile::Simple => Ok((v.clone(), None)),
    }
}

/// Everything a profile drew for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub profile: Profile,
    pub decisions: Option<SimpleDecisions>,
    pub affine: Option<AffineParams>,
    pub deformation: bool,
    pub max_displacement_vox: Option<f64>,
    pub corruption: CorruptionRecord,
    pub resolution: Option<ResolutionDraw>,
}

impl ProfileRecord {
    pub(crate) fn new(
        profile: Profile,
        decisions: &SimpleDecisions,
        spatial: &SpatialTransform,
        corruption: CorruptionRecord,
        resolution: Option<ResolutionDraw>,
    ) -> Self {
        Self {
            profile,
            decisions: (profile == Profile::Simple).then_some(*decisions),
            affine: spatial.params.clone(),
            deformation: spatial.field.is_some(),
            max_displacement_vox: spatial.field.as_ref().map(|f| f.max_displacement_vox()),
            corruption,
            resolution,
        }
    }
}

/// Augments an existing image/label pair with one `rng`, in the order
/// decisions, spatial, intensity, resolution, `[0, 1]` rescale.
pub fn apply_profile<R: Rng + ?Sized>(
    image: &Volume3D,
    labels: &LabelMap,
    profile: Profile,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(Volume3D, LabelMap, ProfileRecord)> {
    image.geometry().ensure_matches(labels.geometry())?;
    let cfg = AugmentConfig {
        profile,
        ..cfg.clone()
    };
    cfg.validate()?;
    let decisions = match profile {
        Profile::Simple => SimpleDecisions::draw(cfg.simple.probability, rng),
        Profile::SynthSegFull => SimpleDecisions::all(true),
    };
    let spatial = draw_spatial(&cfg, &decisions, image.geometry(), rng)?;
    let img = spatial.apply(image, InterpKind::Trilinear)?;
    let lab = spatial.apply(labels, InterpKind::NearestNeighbor)?;
    let (img, corruption) = corrupt_intensity(&img, &cfg, &decisions, rng)?;
    let (img, resolution) = resolution_step(&img, &cfg, rng)?;
    let img = normalize_min_max(&img);
    let rec = ProfileRecord::new(profile, &decisions, &spatial, corruption, resolution);
    Ok((img, lab, rec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::LabelScheme;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair() -> (Volume3D, LabelMap) {
        let g = Geometry::from_spacing([20, 18, 16], [0.5; 3]).unwrap();
        let mut img = vec![0f32; g.len()];
        let mut lab = vec![0u16; g.len()];
        for i in 0..g.len() {
            let [x, y, z] = g.coords(i);
            if (5..15).contains(&x) && (4..14).contains(&y) && (3..13).contains(&z) {
                lab[i] = if x < 10 { 1 } else { 3 };
                img[i] = if x < 10 { 40.0 } else { 90.0 };
            }
        }
        (
            Volume3D::new(g.clone(), img).unwrap(),
            LabelMap::new(g, lab, LabelScheme::Feta7).unwrap(),
        )
    }

    #[test]
    fn simple_all_skipped_only_rescales() {
        let (img, lab) = pair();
        let cfg = AugmentConfig {
            profile: Profile::Simple,
            simple: SimpleConfig {
                probability: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let (out, l, rec) = apply_profile(&img, &lab, Profile::Simple, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out, normalize_min_max(&img));
        assert_eq!(l, lab);
        assert_eq!(rec.decisions, Some(SimpleDecisions::all(false)));
    }

    #[test]
    fn full_keeps_pair_geometry() {
        let (img, lab) = pair();
        let cfg = AugmentConfig::default();
        let (out, l, rec) =
            apply_profile(&img, &lab, Profile::SynthSegFull, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert!(out.geometry().matches(l.geometry()));
        assert!(rec.deformation && rec.resolution.is_some());
        let (lo, hi) = out.min_max().unwrap();
        assert!(lo >= 0.0 && hi <= 1.0);
    }

    #[test]
    fn simple_decisions_are_fair_coins() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let d = SimpleDecisions::draw(0.5, &mut rng);
            for (c, on) in counts.iter_mut().zip([d.affine, d.gamma, d.noise, d.blur]) {
                *c += on as usize;
            }
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((0.48..=0.52).contains(&f), "{f}");
        }
    }

    #[test]
    fn image_and_labels_share_the_warp() {
        let (img, lab) = pair();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = AugmentConfig {
            full: FullConfig {
                affine: AffineRanges {
                    translation: 2.0,
                    ..Default::default()
                },
                ..Default::default()
            },
            ..Default::default()
        };
        let spatial = draw_spatial(&cfg, &SimpleDecisions::all(true), img.geometry(), &mut rng).unwrap();
        let wi = spatial.apply(&img, InterpKind::Trilinear).unwrap();
        let wl = spatial.apply(&lab, InterpKind::NearestNeighbor).unwrap();
        let centroid = |w: &dyn Fn(usize) -> f64| {
            let mut acc = [0.0; 3];
            let mut m = 0.0;
            for i in 0..img.geometry().len() {
                let c = img.geometry().coords(i);
                let wt = w(i);
                m += wt;
                for a in 0..3 {
                    acc[a] += wt * c[a] as f64;
                }
            }
            acc.map(|v| v / m)
        };
        let ci = centroid(&|i| (wi.data()[i] > 65.0) as u8 as f64);
        let cl = centroid(&|i| (wl.data()[i] == 3) as u8 as f64);
        for a in 0..3 {
            assert!((ci[a] - cl[a]).abs() < 1.0, "{ci:?} vs {cl:?}");
        }
    }
}
