use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sample::{nearest_index, trilinear};
use super::{Geometry, InterpKind, LabelMap, Volume3D};
use crate::error::{Error, Result};

/// What a sample outside the source grid evaluates to.
///
/// `Zero` treats the field of view (voxel extents, `[-0.5, n - 0.5]` per
/// axis) as in-bounds and everything beyond as background. `Clamp` extends
/// edge values indefinitely.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Zero,
    Clamp,
}

/// Voxel-to-voxel map from `target` grid indices into `source` grid indices.
pub(crate) fn voxel_map(source: &Geometry, target: &Geometry) -> Matrix4<f64> {
    source.world_to_voxel_matrix() * target.affine()
}

#[inline]
pub(crate) fn apply_map(m: &Matrix4<f64>, p: [f64; 3]) -> [f64; 3] {
    let q = m * Vector4::new(p[0], p[1], p[2], 1.0);
    [q.x, q.y, q.z]
}

/// Samples `v` on the `target` grid.
pub fn resample_onto(
    v: &Volume3D,
    target: &Geometry,
    interp: InterpKind,
    boundary: Boundary,
) -> Volume3D {
    let m = voxel_map(v.geometry(), target);
    let [nx, ny, _] = target.dims();
    let src_dims = v.dims();
    let src = v.data();
    let mut out = vec![0f32; target.len()];
    out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
        for y in 0..ny {
            for x in 0..nx {
                let q = apply_map(&m, [x as f64, y as f64, z as f64]);
                slab[x + nx * y] = match interp {
                    InterpKind::Trilinear => trilinear(src, src_dims, q, boundary),
                    InterpKind::NearestNeighbor => {
                        nearest_index(src_dims, q, boundary).map_or(0.0, |i| src[i])
                    }
                };
            }
        }
    });
    Volume3D::new(target.clone(), out).expect("target geometry sized output")
}

/// Nearest-neighbour resampling of a label map onto `target`.
pub fn resample_labels_onto(lm: &LabelMap, target: &Geometry, boundary: Boundary) -> LabelMap {
    let m = voxel_map(lm.geometry(), target);
    let [nx, ny, _] = target.dims();
    let src_dims = lm.dims();
    let src = lm.data();
    let mut out = vec![0u16; target.len()];
    out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
        for y in 0..ny {
            for x in 0..nx {
                let q = apply_map(&m, [x as f64, y as f64, z as f64]);
                slab[x + nx * y] = nearest_index(src_dims, q, boundary).map_or(0, |i| src[i]);
            }
        }
    });
    LabelMap::new(target.clone(), out, lm.scheme()).expect("codes copied from a valid map")
}

/// Grid geometry after resampling `geom` to `target_spacing`.
fn spacing_target(geom: &Geometry, target_spacing: [f64; 3]) -> Result<Geometry> {
    if target_spacing.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidVolume(format!(
            "target spacing must be positive, got {target_spacing:?}"
        )));
    }
    let src = geom.spacing();
    let dims = geom.dims();
    let mut new_dims = [0usize; 3];
    let mut ratio = [0f64; 3];
    for i in 0..3 {
        ratio[i] = target_spacing[i] / src[i];
        // tolerate float noise so identity spacing never gains a voxel
        let extent = dims[i] as f64 / ratio[i];
        new_dims[i] = ((extent - 1e-9).ceil() as usize).max(1);
    }
    let mut g = geom.regrid(new_dims, ratio)?;
    g.spacing = target_spacing;
    Ok(g)
}

/// Containers that can be resampled and cropped on their own grid.
pub trait Spatial: Sized {
    fn grid(&self) -> &Geometry;
    /// Resamples onto `target`. Label maps always use nearest neighbour.
    fn sample_onto(&self, target: &Geometry, interp: InterpKind, boundary: Boundary) -> Self;
    fn remap_window(&self, dims: [usize; 3], shift: [i64; 3]) -> Self;
}

impl Spatial for Volume3D {
    fn grid(&self) -> &Geometry {
        self.geometry()
    }

    fn sample_onto(&self, target: &Geometry, interp: InterpKind, boundary: Boundary) -> Self {
        resample_onto(self, target, interp, boundary)
    }

    fn remap_window(&self, dims: [usize; 3], shift: [i64; 3]) -> Self {
        let (geom, data) = window(self.geometry(), self.data(), dims, shift, 0.0);
        Volume3D::new(geom, data).expect("window sized output")
    }
}

impl Spatial for LabelMap {
    fn grid(&self) -> &Geometry {
        self.geometry()
    }

    fn sample_onto(&self, target: &Geometry, _interp: InterpKind, boundary: Boundary) -> Self {
        resample_labels_onto(self, target, boundary)
    }

    fn remap_window(&self, dims: [usize; 3], shift: [i64; 3]) -> Self {
        let (geom, data) = window(self.geometry(), self.data(), dims, shift, 0);
        LabelMap::new(geom, data, self.scheme()).expect("codes copied from a valid map")
    }
}

/// Resamples to `target_spacing`, covering the original field of view.
/// Output dims are `ceil(dim * spacing / target)`; samples outside the
/// source field of view are 0.
pub fn resample<T: Spatial>(v: &T, target_spacing: [f64; 3], interp: InterpKind) -> Result<T> {
    let target = spacing_target(v.grid(), target_spacing)?;
    Ok(v.sample_onto(&target, interp, Boundary::Zero))
}

/// Centred crop and/or zero pad to `target_dims`. The affine is shifted so
/// retained voxels keep their world coordinates.
pub fn crop_or_pad<T: Spatial>(v: &T, target_dims: [usize; 3]) -> Result<T> {
    if target_dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidVolume(format!(
            "target dims must be positive, got {target_dims:?}"
        )));
    }
    let dims = v.grid().dims();
    let shift = [0, 1, 2].map(|i| {
        let (n, t) = (dims[i] as i64, target_dims[i] as i64);
        if t >= n {
            -((t - n) / 2)
        } else {
            (n - t) / 2
        }
    });
    Ok(v.remap_window(target_dims, shift))
}

/// Output voxel `o` takes source voxel `o + shift`, or `fill` outside.
fn window<T: Copy + Send + Sync>(
    geom: &Geometry,
    src: &[T],
    dims: [usize; 3],
    shift: [i64; 3],
    fill: T,
) -> (Geometry, Vec<T>) {
    let mut t = Matrix4::identity();
    for i in 0..3 {
        t[(i, 3)] = shift[i] as f64;
    }
    let out_geom = Geometry::new(dims, geom.spacing(), geom.affine() * t)
        .expect("translation keeps the affine invertible");
    let sd = geom.dims();
    let mut out = vec![fill; out_geom.len()];
    out.par_chunks_mut(dims[0] * dims[1])
        .enumerate()
        .for_each(|(z, slab)| {
            let sz = z as i64 + shift[2];
            if sz < 0 || sz >= sd[2] as i64 {
                return;
            }
            for y in 0..dims[1] {
                let sy = y as i64 + shift[1];
                if sy < 0 || sy >= sd[1] as i64 {
                    continue;
                }
                for x in 0..dims[0] {
                    let sx = x as i64 + shift[0];
                    if sx < 0 || sx >= sd[0] as i64 {
                        continue;
                    }
                    slab[x + dims[0] * y] =
                        src[sx as usize + sd[0] * (sy as usize + sd[1] * sz as usize)];
                }
            }
        });
    (out_geom, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::LabelScheme;

    fn vol(dims: [usize; 3], f: impl Fn(usize, usize, usize) -> f32) -> Volume3D {
        let g = Geometry::from_spacing(dims, [1.0; 3]).unwrap();
        let mut data = vec![0f32; g.len()];
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data[g.index(x, y, z)] = f(x, y, z);
                }
            }
        }
        Volume3D::new(g, data).unwrap()
    }

    #[test]
    fn constant_volume_stays_constant() {
        let v = vol([7, 5, 6], |_, _, _| 3.0);
        for t in [[0.5, 0.5, 0.5], [1.7, 2.0, 0.9], [3.0, 1.0, 1.0]] {
            for interp in [InterpKind::Trilinear, InterpKind::NearestNeighbor] {
                let r = resample(&v, t, interp).unwrap();
                let m = voxel_map(v.geometry(), r.geometry());
                for (i, &x) in r.data().iter().enumerate() {
                    let c = r.geometry().coords(i).map(|c| c as f64);
                    let q = apply_map(&m, c);
                    let inside = (0..3).all(|a| q[a] <= v.dims()[a] as f64 - 0.5);
                    assert_eq!(x, if inside { 3.0 } else { 0.0 }, "{t:?} {interp:?}");
                }
            }
        }
    }

    #[test]
    fn identity_resample_is_noop() {
        let v = vol([5, 4, 3], |x, y, z| (x * 100 + y * 10 + z) as f32 * 0.37);
        let r = resample(&v, [1.0; 3], InterpKind::Trilinear).unwrap();
        assert_eq!(r, v);
    }

    #[test]
    fn ramp_downsample_matches_brute_force_trilinear() {
        let v = vol([4, 4, 4], |x, _, _| x as f32);
        let r = resample(&v, [2.0; 3], InterpKind::Trilinear).unwrap();
        assert_eq!(r.dims(), [2, 2, 2]);
        // independent evaluation of the trilinear formula per output voxel
        let src = |x: i64, y: i64, z: i64| -> f64 {
            let c = |a: i64| a.clamp(0, 3) as usize;
            v.get(c(x), c(y), c(z)) as f64
        };
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    let p = [x, y, z].map(|j| (j as f64 + 0.5) * 2.0 - 0.5);
                    let f = p.map(|c| c.floor());
                    let t = [0, 1, 2].map(|i| p[i] - f[i]);
                    let mut acc = 0.0;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let w = (if dx == 1 { t[0] } else { 1.0 - t[0] })
                                    * (if dy == 1 { t[1] } else { 1.0 - t[1] })
                                    * (if dz == 1 { t[2] } else { 1.0 - t[2] });
                                acc += w * src(
                                    f[0] as i64 + dx,
                                    f[1] as i64 + dy,
                                    f[2] as i64 + dz,
                                );
                            }
                        }
                    }
                    assert!((r.get(x, y, z) as f64 - acc).abs() < 1e-6);
                }
            }
        }
        // midpoint averages of the ramp
        assert_eq!(r.get(0, 0, 0), 0.5);
        assert_eq!(r.get(1, 0, 0), 2.5);
    }

    #[test]
    fn labels_use_nearest_neighbour() {
        let g = Geometry::from_spacing([6, 6, 6], [1.0; 3]).unwrap();
        let data: Vec<u16> = (0..g.len()).map(|i| (i % 3) as u16 * 3).collect();
        let lm = LabelMap::new(g, data, LabelScheme::Feta7).unwrap();
        let r = resample(&lm, [0.7, 1.3, 0.9], InterpKind::Trilinear).unwrap();
        let before = lm.unique_values();
        assert!(r.unique_values().iter().all(|v| before.contains(v)));
    }

    #[test]
    fn pad_then_crop_is_identity() {
        let v = vol([10, 10, 10], |_, _, _| 1.0);
        let p = crop_or_pad(&v, [12, 12, 12]).unwrap();
        for z in 0..12 {
            for y in 0..12 {
                for x in 0..12 {
                    let inside = [x, y, z].iter().all(|&c| (1..=10).contains(&c));
                    assert_eq!(p.get(x, y, z), if inside { 1.0 } else { 0.0 });
                }
            }
        }
        // retained voxels keep world coordinates
        assert_eq!(p.geometry().voxel_to_world([1.0; 3]), [0.0; 3]);
        let back = crop_or_pad(&p, [10, 10, 10]).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn same_dims_is_noop() {
        let v = vol([3, 4, 5], |x, y, z| (x + y + z) as f32);
        assert_eq!(crop_or_pad(&v, [3, 4, 5]).unwrap(), v);
    }
}
