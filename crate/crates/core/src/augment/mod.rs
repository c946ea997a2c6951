//! Spatial and intensity corruption operators and the two augmentation
//! profiles built from them.

mod affine;
mod intensity;
mod profile;
mod resolution;
mod svf;
mod warp;

use rand::Rng;

pub use affine::{draw_affine, AffineParams, AffineRanges};
pub use intensity::{
    add_gaussian_noise, apply_bias_field, bias_field, gamma_contrast, gaussian_blur,
    normalize_min_max, BiasFieldConfig,
};
pub use profile::{
    apply_profile, corrupt_intensity, draw_spatial, resolution_step, AugmentConfig,
    CorruptionRecord, FullConfig, Profile, ProfileRecord, SimpleConfig, SimpleDecisions,
    SpatialTransform,
};
pub use resolution::{
    draw_resolution, simulate_resolution, simulate_resolution_with, ResolutionDraw, ResolutionSim,
};
pub use svf::{draw_svf_deformation, integrate_velocity, DeformationField, SvfConfig};
pub use warp::{apply_transform, VoxelWarp, Warp};

/// `U(lo, hi)`, exactly `lo` when the interval is degenerate.
pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        lo + (hi - lo) * rng.random::<f64>()
    }
}

/// Linear interpolation weights of a corner-aligned coarse axis onto `n`
/// fine samples: fine sample `j` sits at coarse coordinate `j (c-1)/(n-1)`.
fn axis_lerp(c: usize, n: usize) -> Vec<(usize, usize, f32)> {
    (0..n)
        .map(|j| {
            if c == 1 || n == 1 {
                return (0, 0, 0.0);
            }
            let p = j as f64 * (c - 1) as f64 / (n - 1) as f64;
            let lo = (p.floor() as usize).min(c - 2);
            (lo, lo + 1, (p - lo as f64) as f32)
        })
        .collect()
}

/// Separable trilinear upsampling of a corner-aligned control grid.
pub(crate) fn upsample_coarse(coarse: &[f32], cdims: [usize; 3], dims: [usize; 3]) -> Vec<f32> {
    debug_assert_eq!(coarse.len(), cdims.iter().product::<usize>());
    let [cx, cy, cz] = cdims;
    let [nx, ny, nz] = dims;
    let wx = axis_lerp(cx, nx);
    let wy = axis_lerp(cy, ny);
    let wz = axis_lerp(cz, nz);
    // x pass: (cx, cy, cz) -> (nx, cy, cz)
    let mut a = vec![0f32; nx * cy * cz];
    for r in 0..cy * cz {
        let src = &coarse[r * cx..(r + 1) * cx];
        for (x, &(lo, hi, t)) in wx.iter().enumerate() {
            a[r * nx + x] = src[lo] * (1.0 - t) + src[hi] * t;
        }
    }
    // y pass: -> (nx, ny, cz)
    let mut b = vec![0f32; nx * ny * cz];
    for z in 0..cz {
        for (y, &(lo, hi, t)) in wy.iter().enumerate() {
            let r0 = &a[(lo + cy * z) * nx..][..nx];
            let r1 = &a[(hi + cy * z) * nx..][..nx];
            let dst = &mut b[(y + ny * z) * nx..][..nx];
            for x in 0..nx {
                dst[x] = r0[x] * (1.0 - t) + r1[x] * t;
            }
        }
    }
    // z pass: -> (nx, ny, nz)
    let plane = nx * ny;
    let mut out = vec![0f32; plane * nz];
    for (z, &(lo, hi, t)) in wz.iter().enumerate() {
        let p0 = &b[lo * plane..][..plane];
        let p1 = &b[hi * plane..][..plane];
        let dst = &mut out[z * plane..][..plane];
        for i in 0..plane {
            dst[i] = p0[i] * (1.0 - t) + p1[i] * t;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsample_hits_control_points_at_corners() {
        let coarse: Vec<f32> = (0..8).map(|i| i as f32).collect();
        let up = upsample_coarse(&coarse, [2, 2, 2], [5, 4, 3]);
        assert_eq!(up[0], 0.0);
        assert_eq!(up[4], 1.0);
        assert_eq!(up[5 * 3], 2.0);
        assert_eq!(*up.last().unwrap(), 7.0);
        // linear along x
        assert!((up[2] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn upsample_of_constant_is_constant() {
        let up = upsample_coarse(&[2.5; 27], [3, 3, 3], [7, 1, 9]);
        assert!(up.iter().all(|&v| (v - 2.5).abs() < 1e-6));
    }

    #[test]
    fn degenerate_uniform_is_exact() {
        let mut rng = rand::rng();
        assert_eq!(uniform(&mut rng, 0.3, 0.3), 0.3);
    }
}
