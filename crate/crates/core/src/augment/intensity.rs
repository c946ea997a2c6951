use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::upsample_coarse;
use crate::error::{Error, Result};
use crate::volume::{Geometry, Volume3D};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasFieldConfig {
    /// Control points per axis.
    pub control_points: usize,
    /// Std of the log-field at the control points.
    pub std: f64,
}

impl Default for BiasFieldConfig {
    fn default() -> Self {
        Self {
            control_points: 4,
            std: 0.3,
        }
    }
}

/// Multiplicative field `exp(G)` with `G` a smooth random field.
pub fn bias_field<R: Rng + ?Sized>(cfg: &BiasFieldConfig, geom: &Geometry, rng: &mut R) -> Vec<f32> {
    if cfg.std <= 0.0 {
        return vec![1.0; geom.len()];
    }
    let c = cfg.control_points.max(1);
    let normal = Normal::new(0.0, cfg.std).expect("finite std");
    let coarse: Vec<f32> = (0..c * c * c).map(|_| normal.sample(rng) as f32).collect();
    let mut g = upsample_coarse(&coarse, [c; 3], geom.dims());
    g.par_iter_mut().for_each(|v| *v = v.exp());
    g
}

pub fn apply_bias_field<R: Rng + ?Sized>(v: &Volume3D, cfg: &BiasFieldConfig, rng: &mut R) -> Volume3D {
    if cfg.std <= 0.0 {
        return v.clone();
    }
    let b = bias_field(cfg, v.geometry(), rng);
    let data = v.data().par_iter().zip(&b).map(|(&x, &f)| x * f).collect();
    v.with_data(data).expect("same grid")
}

/// Min-max normalise, raise to `gamma`, map back to the original range.
pub fn gamma_contrast(v: &Volume3D, gamma: f64) -> Result<Volume3D> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidGamma(gamma));
    }
    let Some((lo, hi)) = v.min_max() else {
        return Ok(v.clone());
    };
    if lo == hi || gamma == 1.0 {
        return Ok(v.clone());
    }
    let (lo, hi) = (lo as f64, hi as f64);
    let range = hi - lo;
    let data = v
        .data()
        .par_iter()
        .map(|&x| {
            let t = ((x as f64 - lo) / range).clamp(0.0, 1.0);
            (lo + t.powf(gamma) * range) as f32
        })
        .collect();
    Ok(v.with_data(data).expect("same grid"))
}

/// Adds i.i.d. `N(0, sigma²)` noise. One seed is drawn from `rng`; each
/// z-slab then uses its own stream so the result is independent of thread
/// scheduling.
pub fn add_gaussian_noise<R: Rng + ?Sized>(v: &Volume3D, sigma: f64, rng: &mut R) -> Volume3D {
    if sigma <= 0.0 {
        return v.clone();
    }
    let seed: u64 = rng.random();
    let [nx, ny, _] = v.dims();
    let mut data = v.data().to_vec();
    data.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(z as u64);
        for x in slab.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut r);
            *x += (sigma * n) as f32;
        }
    });
    v.with_data(data).expect("same grid")
}

/// Normalised Gaussian kernel truncated at 3σ (σ in voxels).
pub(crate) fn kernel(sigma_vox: f64) -> Vec<f64> {
    let r = (3.0 * sigma_vox).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-0.5 * (i as f64 / sigma_vox).powi(2)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= s);
    k
}

/// Convolves every line along `axis`, replicating edge values.
pub(crate) fn convolve_axis(data: &[f32], dims: [usize; 3], axis: usize, k: &[f64]) -> Vec<f32> {
    let n = dims[axis] as isize;
    let r = (k.len() / 2) as isize;
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let [nx, ny, _] = dims;
    let mut out = vec![0f32; data.len()];
    out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
        for y in 0..ny {
            for x in 0..nx {
                let pos = [x, y, z][axis] as isize;
                let base = x + nx * (y + ny * z) - pos as usize * stride;
                let mut acc = 0.0;
                for (j, w) in k.iter().enumerate() {
                    let src = (pos + j as isize - r).clamp(0, n - 1) as usize;
                    acc += w * data[base + src * stride] as f64;
                }
                slab[x + nx * y] = acc as f32;
            }
        }
    });
    out
}

/// Separable Gaussian blur, `sigma_mm` per axis.
pub fn gaussian_blur(v: &Volume3D, sigma_mm: [f64; 3]) -> Volume3D {
    let spacing = v.spacing();
    let dims = v.dims();
    let mut data: Option<Vec<f32>> = None;
    for axis in 0..3 {
        let s = sigma_mm[axis] / spacing[axis];
        if !(s > 0.0) || dims[axis] == 1 {
            continue;
        }
        let k = kernel(s);
        let src = data.as_deref().unwrap_or(v.data());
        data = Some(convolve_axis(src, dims, axis, &k));
    }
    match data {
        Some(d) => v.with_data(d).expect("same grid"),
        None => v.clone(),
    }
}

/// Maps the finite range onto `[0, 1]`. Constant volumes become all zero.
pub fn normalize_min_max(v: &Volume3D) -> Volume3D {
    let Some((lo, hi)) = v.min_max() else {
        return v.clone();
    };
    let (lo, range) = (lo as f64, (hi - lo) as f64);
    let data = v
        .data()
        .par_iter()
        .map(|&x| {
            if range > 0.0 {
                ((x as f64 - lo) / range).clamp(0.0, 1.0) as f32
            } else {
                0.0
            }
        })
        .collect();
    v.with_data(data).expect("same grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_volume(dims: [usize; 3], seed: u64) -> Volume3D {
        let g = Geometry::from_spacing(dims, [0.5, 0.5, 0.8]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Volume3D::new(g, (0..dims.iter().product()).map(|_| rng.random_range(0.0..10.0)).collect()).unwrap()
    }

    #[test]
    fn zero_bias_is_identity_and_field_positive() {
        let v = random_volume([8, 8, 8], 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg0 = BiasFieldConfig { std: 0.0, ..Default::default() };
        assert_eq!(apply_bias_field(&v, &cfg0, &mut rng), v);
        let g = Geometry::from_spacing([6, 5, 4], [1.0; 3]).unwrap();
        for _ in 0..1000 {
            let b = bias_field(&BiasFieldConfig::default(), &g, &mut rng);
            assert!(b.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn bias_keeps_zeros() {
        let mut v = random_volume([8, 8, 8], 1);
        v.data_mut()[..50].fill(0.0);
        let out = apply_bias_field(&v, &BiasFieldConfig::default(), &mut ChaCha8Rng::seed_from_u64(2));
        assert!(out.data()[..50].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gamma_cases() {
        let g = Geometry::from_spacing([3, 1, 1], [1.0; 3]).unwrap();
        let v = Volume3D::new(g, vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(gamma_contrast(&v, 2.0).unwrap().data(), &[0.0, 0.25, 1.0]);
        assert_eq!(gamma_contrast(&v, 1.0).unwrap(), v);
        assert!(matches!(gamma_contrast(&v, 0.0), Err(Error::InvalidGamma(_))));
        assert!(matches!(gamma_contrast(&v, -1.0), Err(Error::InvalidGamma(_))));
    }

    #[test]
    fn gamma_preserves_order() {
        let v = random_volume([10, 10, 10], 5);
        for gamma in [0.5, 0.9, 1.3, 1.5, 3.0] {
            let out = gamma_contrast(&v, gamma).unwrap();
            let (a, b) = (v.data(), out.data());
            for i in 1..a.len() {
                if a[i - 1] < a[i] {
                    assert!(b[i - 1] <= b[i]);
                }
            }
        }
    }

    #[test]
    fn zero_sigma_is_identity() {
        let v = random_volume([6, 6, 6], 3);
        assert_eq!(add_gaussian_noise(&v, 0.0, &mut ChaCha8Rng::seed_from_u64(0)), v);
        assert_eq!(gaussian_blur(&v, [0.0; 3]), v);
    }

    #[test]
    fn noise_moments() {
        let g = Geometry::from_spacing([64, 64, 64], [1.0; 3]).unwrap();
        let v = Volume3D::filled(g, 2.0);
        let out = add_gaussian_noise(&v, 0.1, &mut ChaCha8Rng::seed_from_u64(9));
        let d: Vec<f64> = out.data().iter().map(|&x| x as f64 - 2.0).collect();
        let n = d.len() as f64;
        let m = d.iter().sum::<f64>() / n;
        let s = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
        assert!((s - 0.1).abs() < 0.002, "{s}");
        assert!(m.abs() < 1e-3);
    }

    #[test]
    fn blur_kernel_is_normalised() {
        for s in [0.3, 1.0, 2.7] {
            assert!((kernel(s).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let g = Geometry::from_spacing([20, 18, 16], [0.5, 0.5, 1.0]).unwrap();
        let v = Volume3D::filled(g, 3.25);
        let out = gaussian_blur(&v, [1.0, 0.7, 1.5]);
        assert!(out.data().iter().all(|&x| (x - 3.25).abs() < 1e-6));
    }

    #[test]
    fn blur_matches_direct_convolution() {
        let v = random_volume([9, 7, 11], 8);
        let sigma = [0.6, 0.9, 1.2];
        let out = gaussian_blur(&v, sigma);
        let dims = v.dims();
        let ks: Vec<Vec<f64>> = (0..3).map(|a| kernel(sigma[a] / v.spacing()[a])).collect();
        let at = |x: isize, y: isize, z: isize| {
            let c = |p: isize, n: usize| p.clamp(0, n as isize - 1) as usize;
            v.get(c(x, dims[0]), c(y, dims[1]), c(z, dims[2])) as f64
        };
        for &(x, y, z) in &[(0usize, 0usize, 0usize), (4, 3, 5), (8, 6, 10), (2, 6, 1)] {
            let mut acc = 0.0;
            let r: Vec<isize> = ks.iter().map(|k| (k.len() / 2) as isize).collect();
            for (i, wx) in ks[0].iter().enumerate() {
                for (j, wy) in ks[1].iter().enumerate() {
                    for (l, wz) in ks[2].iter().enumerate() {
                        acc += wx * wy * wz
                            * at(x as isize + i as isize - r[0], y as isize + j as isize - r[1], z as isize + l as isize - r[2]);
                    }
                }
            }
            assert!((out.get(x, y, z) as f64 - acc).abs() < 1e-4);
        }
    }

    #[test]
    fn normalize_range() {
        let v = random_volume([5, 5, 5], 4);
        let out = normalize_min_max(&v);
        let (lo, hi) = out.min_max().unwrap();
        assert_eq!((lo, hi), (0.0, 1.0));
        let c = Volume3D::filled(v.geometry().clone(), 4.0);
        assert!(normalize_min_max(&c).data().iter().all(|&x| x == 0.0));
    }
}
