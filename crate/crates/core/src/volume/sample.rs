//! Point sampling kernels shared by resampling, warping and field upsampling.

use super::resample::Boundary;

/// Tolerance for treating a coordinate as lying on the field-of-view edge.
const EDGE_EPS: f64 = 1e-9;

#[inline]
fn in_fov(c: f64, n: usize) -> bool {
    c >= -0.5 - EDGE_EPS && c <= n as f64 - 0.5 + EDGE_EPS
}

/// Lower neighbour index and weight of the upper neighbour, clamped to the grid.
#[inline]
fn axis_weights(c: f64, n: usize) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let max = (n - 1) as f64;
    let c = c.clamp(0.0, max);
    let lo = (c.floor() as usize).min(n - 2);
    let t = c - lo as f64;
    (lo, lo + 1, t)
}

/// Trilinear sample of an x-fastest grid at continuous voxel coordinates.
#[inline]
pub(crate) fn trilinear(data: &[f32], dims: [usize; 3], p: [f64; 3], boundary: Boundary) -> f32 {
    if boundary == Boundary::Zero && !(0..3).all(|i| in_fov(p[i], dims[i])) {
        return 0.0;
    }
    let (x0, x1, tx) = axis_weights(p[0], dims[0]);
    let (y0, y1, ty) = axis_weights(p[1], dims[1]);
    let (z0, z1, tz) = axis_weights(p[2], dims[2]);
    let nx = dims[0];
    let nxy = dims[0] * dims[1];
    let at = |x: usize, y: usize, z: usize| data[x + nx * y + nxy * z] as f64;
    let c00 = at(x0, y0, z0) * (1.0 - tx) + at(x1, y0, z0) * tx;
    let c10 = at(x0, y1, z0) * (1.0 - tx) + at(x1, y1, z0) * tx;
    let c01 = at(x0, y0, z1) * (1.0 - tx) + at(x1, y0, z1) * tx;
    let c11 = at(x0, y1, z1) * (1.0 - tx) + at(x1, y1, z1) * tx;
    let c0 = c00 * (1.0 - ty) + c10 * ty;
    let c1 = c01 * (1.0 - ty) + c11 * ty;
    (c0 * (1.0 - tz) + c1 * tz) as f32
}

/// Nearest-neighbour lookup; `None` outside the field of view under
/// `Boundary::Zero`, matching the extent used by `trilinear`.
#[inline]
pub(crate) fn nearest_index(dims: [usize; 3], p: [f64; 3], boundary: Boundary) -> Option<usize> {
    if boundary == Boundary::Zero && !(0..3).all(|i| in_fov(p[i], dims[i])) {
        return None;
    }
    let mut idx = [0usize; 3];
    for i in 0..3 {
        let max = (dims[i] - 1) as f64;
        idx[i] = (p[i] + 0.5).floor().clamp(0.0, max) as usize;
    }
    Some(idx[0] + dims[0] * (idx[1] + dims[1] * idx[2]))
}

/// Trilinear sample of a 3-component vector field stored as `[f32; 3]`.
#[inline]
pub(crate) fn trilinear_vec(data: &[[f32; 3]], dims: [usize; 3], p: [f64; 3]) -> [f64; 3] {
    let (x0, x1, tx) = axis_weights(p[0], dims[0]);
    let (y0, y1, ty) = axis_weights(p[1], dims[1]);
    let (z0, z1, tz) = axis_weights(p[2], dims[2]);
    let nx = dims[0];
    let nxy = dims[0] * dims[1];
    let w = [
        (x0, y0, z0, (1.0 - tx) * (1.0 - ty) * (1.0 - tz)),
        (x1, y0, z0, tx * (1.0 - ty) * (1.0 - tz)),
        (x0, y1, z0, (1.0 - tx) * ty * (1.0 - tz)),
        (x1, y1, z0, tx * ty * (1.0 - tz)),
        (x0, y0, z1, (1.0 - tx) * (1.0 - ty) * tz),
        (x1, y0, z1, tx * (1.0 - ty) * tz),
        (x0, y1, z1, (1.0 - tx) * ty * tz),
        (x1, y1, z1, tx * ty * tz),
    ];
    let mut out = [0.0f64; 3];
    for (x, y, z, wt) in w {
        let v = data[x + nx * y + nxy * z];
        out[0] += wt * v[0] as f64;
        out[1] += wt * v[1] as f64;
        out[2] += wt * v[2] as f64;
    }
    out
}
