use super::mask;
use crate::error::Result;
use crate::volume::LabelMap;

/// Mask voxels with at least one face neighbour outside the mask; the
/// volume border counts as outside.
pub fn boundary(mask: &[bool], dims: [usize; 3]) -> Vec<usize> {
    let [nx, ny, nz] = dims;
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                if !mask[i] {
                    continue;
                }
                let edge = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz;
                if edge
                    || !mask[i - 1]
                    || !mask[i + 1]
                    || !mask[i - nx]
                    || !mask[i + nx]
                    || !mask[i - nx * ny]
                    || !mask[i + nx * ny]
                {
                    out.push(i);
                }
            }
        }
    }
    out
}

fn coords(i: usize, dims: [usize; 3]) -> [usize; 3] {
    [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])]
}

/// Exact 1D squared distance transform with sample spacing `w`
/// (lower envelope of parabolas). `f` holds squared mm distances, with
/// `INFINITY` for "no site".
fn edt_1d(f: &[f64], w: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let w2 = w * w;
    v.clear();
    z.clear();
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + w2 * (q * q) as f64;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let fp = f[p] + w2 * (p * p) as f64;
                    let s = (fq - fp) / (2.0 * w2 * (q - p) as f64);
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = w2 * d * d + f[v[k]];
    }
}

/// Squared distance (mm²) to the nearest site, on a box grid.
fn squared_edt(sites: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let mut d: Vec<f64> = sites
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    let strides = [1, dims[0], dims[0] * dims[1]];
    let (mut v, mut z) = (Vec::new(), Vec::new());
    for axis in 0..3 {
        let n = dims[axis];
        let (mut line, mut out) = (vec![0.0; n], vec![0.0; n]);
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        for b in 0..dims[others[1]] {
            for a in 0..dims[others[0]] {
                let base = a * strides[others[0]] + b * strides[others[1]];
                for (t, l) in line.iter_mut().enumerate() {
                    *l = d[base + t * strides[axis]];
                }
                edt_1d(&line, spacing[axis], &mut out, &mut v, &mut z);
                for (t, &o) in out.iter().enumerate() {
                    d[base + t * strides[axis]] = o;
                }
            }
        }
    }
    d
}

/// For every boundary voxel of `a`, the distance (mm) to the nearest
/// boundary voxel of `b`, and the reverse. Empty when either mask is empty.
pub fn directed_distances(
    a: &[bool],
    b: &[bool],
    dims: [usize; 3],
    spacing: [f64; 3],
) -> (Vec<f64>, Vec<f64>) {
    let ba = boundary(a, dims);
    let bb = boundary(b, dims);
    if ba.is_empty() || bb.is_empty() {
        return (Vec::new(), Vec::new());
    }
    // Every site and query lies in the joint bounding box, so the transform
    // restricted to it is exact.
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for &i in ba.iter().chain(&bb) {
        let c = coords(i, dims);
        for k in 0..3 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let bdims = [0, 1, 2].map(|k| hi[k] - lo[k] + 1);
    let local = |i: usize| {
        let c = coords(i, dims);
        (c[0] - lo[0]) + bdims[0] * ((c[1] - lo[1]) + bdims[1] * (c[2] - lo[2]))
    };
    let dist_to = |sites: &[usize], queries: &[usize]| {
        let mut s = vec![false; bdims.iter().product()];
        for &i in sites {
            s[local(i)] = true;
        }
        let d = squared_edt(&s, bdims, spacing);
        queries.iter().map(|&i| d[local(i)].sqrt()).collect::<Vec<_>>()
    };
    (dist_to(&bb, &ba), dist_to(&ba, &bb))
}

/// Nearest-rank percentile `q` in (0, 100] of unsorted values.
pub fn nearest_rank(values: &mut [f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * values.len() as f64).ceil() as usize;
    Some(values[rank.clamp(1, values.len()) - 1])
}

/// Symmetric boundary Hausdorff distance at percentile `q`: the larger of
/// the two directed nearest-rank percentiles. `None` when either mask is
/// empty.
pub fn hd_percentile(pred: &LabelMap, gt: &LabelMap, label: u16, q: f64) -> Result<Option<f64>> {
    pred.geometry().ensure_matches(gt.geometry())?;
    let (mut ab, mut ba) = directed_distances(&mask(pred, label), &mask(gt, label), pred.dims(), pred.spacing());
    Ok(match (nearest_rank(&mut ab, q), nearest_rank(&mut ba, q)) {
        (Some(x), Some(y)) => Some(x.max(y)),
        _ => None,
    })
}

pub fn hd95(pred: &LabelMap, gt: &LabelMap, label: u16) -> Result<Option<f64>> {
    hd_percentile(pred, gt, label, 95.0)
}

/// Plain (maximum) boundary Hausdorff distance.
pub fn hd100(pred: &LabelMap, gt: &LabelMap, label: u16) -> Result<Option<f64>> {
    hd_percentile(pred, gt, label, 100.0)
}
