//! Diffeomorphic deformations from stationary velocity fields.
//!
//! A velocity is drawn on a coarse control grid, upsampled trilinearly to
//! an integration grid covering the volume, and exponentiated by scaling
//! and squaring: `u ← v / 2^N`, then `N` times `u(x) ← u(x) + u(x + u(x))`.
//! Displacements are world-space millimetres.

use nalgebra::{Matrix3, Matrix4, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::intensity::{convolve_axis, kernel};
use super::upsample_coarse;
use crate::error::Result;
use crate::volume::resample::{apply_map, voxel_map};
use crate::volume::sample::trilinear_vec;
use crate::volume::Geometry;

/// Margin around the volume, in source voxels, covered by the integration grid.
const MARGIN_VOX: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvfConfig {
    /// Control points per axis.
    pub control_points: usize,
    /// Velocity standard deviation in source voxels.
    pub std_vox: f64,
    /// Squaring steps.
    pub steps: u32,
    /// Integration grid is the volume grid downsampled by this factor.
    pub integration_factor: usize,
    /// Gaussian smoothing of the upsampled velocity, as a fraction of the
    /// control point spacing. Removes the creases of trilinear upsampling,
    /// which otherwise dominate the integration error.
    pub smoothing: f64,
}

impl Default for SvfConfig {
    fn default() -> Self {
        Self {
            control_points: 10,
            std_vox: 1.4,
            steps: 7,
            integration_factor: 2,
            smoothing: 0.5,
        }
    }
}

/// Dense displacement field on an integration grid that spans the volume.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField {
    /// Volume grid the field was built for.
    source: Geometry,
    /// Grid the displacements live on.
    grid: Geometry,
    disp: Vec<[f32; 3]>,
}

impl DeformationField {
    pub fn zeros(source: &Geometry, factor: usize) -> Result<Self> {
        let grid = integration_grid(source, factor)?;
        let disp = vec![[0.0; 3]; grid.len()];
        Ok(Self {
            source: source.clone(),
            grid,
            disp,
        })
    }

    pub fn source(&self) -> &Geometry {
        &self.source
    }

    pub fn grid(&self) -> &Geometry {
        &self.grid
    }

    pub fn displacements(&self) -> &[[f32; 3]] {
        &self.disp
    }

    /// Displacement (mm) at a continuous voxel position of the source grid.
    pub fn at_source_voxel(&self, map: &SourceToGrid, p: [f64; 3]) -> [f64; 3] {
        trilinear_vec(&self.disp, self.grid.dims(), apply_map(&map.0, p))
    }

    pub fn source_to_grid(&self) -> SourceToGrid {
        SourceToGrid(voxel_map(&self.grid, &self.source))
    }

    /// Largest displacement length, in source voxels of the smallest spacing.
    pub fn max_displacement_vox(&self) -> f64 {
        let s = self.source.spacing().into_iter().fold(f64::INFINITY, f64::min);
        self.disp
            .iter()
            .map(|d| norm(d) / s)
            .fold(0.0, f64::max)
    }

    pub fn negated(&self) -> Self {
        Self {
            disp: self.disp.iter().map(|d| d.map(|c| -c)).collect(),
            ..self.clone()
        }
    }

    /// Displacement of `self ∘ first`: `x ↦ x + u_first(x) + u_self(x + u_first(x))`.
    pub fn compose_after(&self, first: &DeformationField) -> DeformationField {
        let world_to_grid = self.grid.linear_inverse();
        let dims = self.grid.dims();
        let [nx, ny, _] = dims;
        let mut out = vec![[0f32; 3]; self.disp.len()];
        out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
            for y in 0..ny {
                for x in 0..nx {
                    let i = x + nx * y;
                    let u1 = first.disp[i + nx * ny * z].map(|c| c as f64);
                    let off = world_to_grid * Vector3::from(u1);
                    let p = [x as f64 + off.x, y as f64 + off.y, z as f64 + off.z];
                    let u2 = trilinear_vec(&self.disp, dims, p);
                    slab[i] = [0, 1, 2].map(|c| (u1[c] + u2[c]) as f32);
                }
            }
        });
        DeformationField {
            source: self.source.clone(),
            grid: self.grid.clone(),
            disp: out,
        }
    }

    /// Jacobian determinant of `x ↦ x + u(x)` at every integration-grid
    /// voxel, by central differences (one-sided on the borders).
    pub fn jacobian_determinants(&self) -> Vec<f64> {
        let dims = self.grid.dims();
        let [nx, ny, nz] = dims;
        let world_to_grid = self.grid.linear_inverse();
        let at = |x: usize, y: usize, z: usize| self.disp[x + nx * (y + ny * z)];
        let diff = |c: [usize; 3], axis: usize| -> [f64; 3] {
            let n = dims[axis];
            if n == 1 {
                return [0.0; 3];
            }
            let mut lo = c;
            let mut hi = c;
            lo[axis] = c[axis].saturating_sub(1);
            hi[axis] = (c[axis] + 1).min(n - 1);
            let h = (hi[axis] - lo[axis]) as f64;
            let a = at(lo[0], lo[1], lo[2]);
            let b = at(hi[0], hi[1], hi[2]);
            [0, 1, 2].map(|k| (b[k] as f64 - a[k] as f64) / h)
        };
        (0..nz)
            .into_par_iter()
            .flat_map_iter(|z| {
                let diff = &diff;
                (0..ny).flat_map(move |y| {
                    (0..nx).map(move |x| {
                        // d u / d (grid index), column per axis
                        let cols = [0, 1, 2].map(|a| diff([x, y, z], a));
                        let du_dg = Matrix3::from_fn(|r, c| cols[c][r]);
                        let j = Matrix3::identity() + du_dg * world_to_grid;
                        j.determinant()
                    })
                })
            })
            .collect()
    }
}

/// Cached map from source voxel indices into integration-grid indices.
pub struct SourceToGrid(Matrix4<f64>);

fn norm(d: &[f32; 3]) -> f64 {
    d.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt()
}

/// Integration grid: the volume field of view downsampled by `factor`, plus
/// a margin so trajectories leaving the volume stay inside the field.
fn integration_grid(source: &Geometry, factor: usize) -> Result<Geometry> {
    let f = factor.max(1);
    let m = MARGIN_VOX.div_ceil(f);
    let inner = source.dims().map(|n| n.div_ceil(f));
    let fov = source.regrid_to_dims(inner)?;
    let mut shift = Matrix4::identity();
    for i in 0..3 {
        shift[(i, 3)] = -(m as f64);
    }
    Geometry::new(
        inner.map(|n| n + 2 * m),
        fov.spacing(),
        fov.affine() * shift,
    )
}

/// Exponentiates a velocity field (mm) on `grid` by scaling and squaring.
pub fn integrate_velocity(
    source: &Geometry,
    grid: &Geometry,
    velocity: &[[f32; 3]],
    steps: u32,
) -> DeformationField {
    let scale = 0.5f64.powi(steps as i32);
    let mut field = DeformationField {
        source: source.clone(),
        grid: grid.clone(),
        disp: velocity
            .iter()
            .map(|v| v.map(|c| (c as f64 * scale) as f32))
            .collect(),
    };
    for _ in 0..steps {
        field = field.compose_after(&field);
    }
    field
}

/// Trilinear upsampling of control-point velocities onto `grid`, then
/// optional Gaussian smoothing.
fn upsample_velocity(comps: &[Vec<f32>], c: usize, grid: &Geometry, smoothing: f64) -> Vec<Vec<f32>> {
    let dims = grid.dims();
    comps
        .par_iter()
        .map(|cv| {
            let mut u = upsample_coarse(cv, [c; 3], dims);
            if smoothing > 0.0 && c > 1 {
                for axis in 0..3 {
                    let s = smoothing * (dims[axis] - 1) as f64 / (c - 1) as f64;
                    if s > 0.0 && dims[axis] > 1 {
                        u = convolve_axis(&u, dims, axis, &kernel(s));
                    }
                }
            }
            u
        })
        .collect()
}

/// Draws a random stationary velocity field for `geom` and integrates it.
pub fn draw_svf_deformation<R: Rng + ?Sized>(
    cfg: &SvfConfig,
    geom: &Geometry,
    rng: &mut R,
) -> Result<DeformationField> {
    let grid = integration_grid(geom, cfg.integration_factor)?;
    let c = cfg.control_points.max(1);
    let spacing = geom.spacing();
    let mean_spacing = spacing.iter().sum::<f64>() / 3.0;
    let std_mm = cfg.std_vox * mean_spacing;
    let mut comps: [Vec<f32>; 3] = Default::default();
    if std_mm > 0.0 {
        let normal = Normal::new(0.0, std_mm).expect("finite positive std");
        let n = c * c * c;
        for comp in comps.iter_mut() {
            *comp = (0..n).map(|_| normal.sample(rng) as f32).collect();
        }
    } else {
        return DeformationField::zeros(geom, cfg.integration_factor);
    }
    let up = upsample_velocity(&comps, c, &grid, cfg.smoothing);
    let velocity: Vec<[f32; 3]> = (0..grid.len())
        .map(|i| [up[0][i], up[1][i], up[2][i]])
        .collect();
    Ok(integrate_velocity(geom, &grid, &velocity, cfg.steps))
}
