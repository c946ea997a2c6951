//! Synthetic fetal-brain-like subject: nested ellipsoids carrying all seven
//! FeTA tissue labels plus an unlabeled non-brain shell. Used by tests,
//! benchmarks and demos; it makes no claim to anatomical realism.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::volume::{Geometry, LabelMap, LabelScheme, Volume3D};

/// Mean intensity per FeTA label (index 0 is the non-brain shell).
pub const PHANTOM_MEANS: [f32; 8] = [60.0, 200.0, 90.0, 130.0, 210.0, 100.0, 85.0, 110.0];

/// Builds a phantom on a `dims` grid with `spacing` mm voxels. Intensities
/// are the label means plus `N(0, noise²)`; only the noise depends on `seed`.
pub fn fetal_phantom(
    dims: [usize; 3],
    spacing: [f64; 3],
    noise: f64,
    seed: u64,
) -> Result<(LabelMap, Volume3D)> {
    let geom = Geometry::from_spacing(dims, spacing)?;
    let c = dims.map(|n| (n as f64 - 1.0) / 2.0);
    let radius = dims.map(|n| 0.34 * n as f64);
    // position in units of the brain radius, centred
    let unit = |p: [usize; 3]| [0, 1, 2].map(|a| (p[a] as f64 - c[a]) / radius[a]);
    let inside = |u: [f64; 3], centre: [f64; 3], axes: [f64; 3]| {
        (0..3)
            .map(|a| ((u[a] - centre[a]) / axes[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    };
    let mut labels = vec![0u16; geom.len()];
    let mut shell = vec![false; geom.len()];
    for (i, l) in labels.iter_mut().enumerate() {
        let u = unit(geom.coords(i));
        let r = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        // gentle folding of the cortical boundary
        let fold = 0.04 * (7.0 * u[0].atan2(u[1])).sin() * (5.0 * u[2]).cos();
        *l = if r > 1.0 {
            shell[i] = r <= 1.3;
            0
        } else if inside(u, [0.0, -0.05, -0.62], [0.16, 0.16, 0.4]) {
            7 // brainstem
        } else if inside(u, [0.0, -0.55, -0.45], [0.42, 0.25, 0.22]) {
            5 // cerebellum
        } else if r > 0.9 {
            1
        } else if r > 0.76 + fold {
            2
        } else if inside(u, [0.22, 0.05, 0.15], [0.1, 0.35, 0.12])
            || inside(u, [-0.22, 0.05, 0.15], [0.1, 0.35, 0.12])
        {
            4 // lateral ventricles
        } else if inside(u, [0.2, 0.05, -0.1], [0.13, 0.18, 0.12])
            || inside(u, [-0.2, 0.05, -0.1], [0.13, 0.18, 0.12])
        {
            6 // deep grey matter
        } else {
            3
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    let data: Vec<f32> = labels
        .iter()
        .zip(&shell)
        .map(|(&l, &s)| {
            let mean = match (l, s) {
                (0, false) => return 0.0,
                _ => PHANTOM_MEANS[l as usize],
            };
            (mean + normal.sample(&mut rng) as f32).max(0.0)
        })
        .collect();
    Ok((
        LabelMap::new(geom.clone(), labels, LabelScheme::Feta7)?,
        Volume3D::new(geom, data)?,
    ))
}
