//! One-dimensional Gaussian-mixture EM.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume3D;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop once `|ΔLL| / |LL|` falls below this.
    pub rel_tol: f64,
    /// Floor on component variances, as a fraction of the sample variance.
    pub var_floor_frac: f64,
    /// Fit on a seeded random subset when the mask is larger than this.
    /// Assignment always covers every voxel.
    pub max_fit_samples: Option<usize>,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            rel_tol: 1e-4,
            var_floor_frac: 1e-6,
            max_fit_samples: Some(25_000),
        }
    }
}

/// Fitted mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_likelihood: f64,
    /// Log-likelihood at each E-step, in order.
    pub ll_history: Vec<f64>,
    pub var_floor: f64,
}

impl GmmFit {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    /// Component with the largest responsibility for `x`.
    #[inline]
    pub fn assign(&self, x: f64) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for j in 0..self.means.len() {
            let s = self.log_weighted_density(j, x);
            if s > best_score {
                best_score = s;
                best = j;
            }
        }
        best
    }

    #[inline]
    fn log_weighted_density(&self, j: usize, x: f64) -> f64 {
        let d = x - self.means[j];
        self.weights[j].ln() - 0.5 * (LN_2PI + self.variances[j].ln()) - 0.5 * d * d / self.variances[j]
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Fits a `k`-component mixture to `values`.
///
/// Initialisation is deterministic: means at the `(i + 0.5) / k` sample
/// quantiles, equal weights, every variance equal to the sample variance.
/// `seed` only selects the fitting subset when `values` exceeds
/// `opts.max_fit_samples`.
pub fn fit_gmm_1d(values: &[f64], k: usize, seed: u64, opts: &EmOptions) -> Result<GmmFit> {
    if values.is_empty() {
        return Err(Error::EmptyMask);
    }
    if k == 0 || k > values.len() {
        return Err(Error::TooFewVoxels {
            voxels: values.len(),
            k,
        });
    }
    let subset: Vec<f64>;
    let x: &[f64] = match opts.max_fit_samples {
        Some(cap) if values.len() > cap && cap >= k => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, values.len(), cap).into_vec();
            idx.sort_unstable();
            subset = idx.into_iter().map(|i| values[i]).collect();
            &subset
        }
        _ => values,
    };
    let n = x.len();
    let (mean, var) = mean_var(x);
    let var_floor = if var > 0.0 {
        opts.var_floor_frac * var
    } else {
        1e-12
    };

    if k == 1 {
        let v = var.max(var_floor);
        let mut fit = GmmFit {
            means: vec![mean],
            variances: vec![v],
            weights: vec![1.0],
            log_likelihood: 0.0,
            ll_history: Vec::new(),
            var_floor,
        };
        let ll: f64 = x.iter().map(|&xi| fit.log_weighted_density(0, xi)).sum();
        fit.log_likelihood = ll;
        fit.ll_history.push(ll);
        return Ok(fit);
    }

    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let means: Vec<f64> = (0..k)
        .map(|i| {
            let q = (i as f64 + 0.5) / k as f64;
            let pos = ((q * n as f64).floor() as usize).min(n - 1);
            sorted[pos]
        })
        .collect();
    let mut fit = GmmFit {
        means,
        variances: vec![var.max(var_floor); k],
        weights: vec![1.0 / k as f64; k],
        log_likelihood: f64::NEG_INFINITY,
        ll_history: Vec::new(),
        var_floor,
    };

    let mut resp = vec![0f64; n * k];
    let mut logp = vec![0f64; k];
    for _ in 0..opts.max_iter {
        // E-step
        let mut ll = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            let mut max = f64::NEG_INFINITY;
            for j in 0..k {
                logp[j] = fit.log_weighted_density(j, xi);
                max = max.max(logp[j]);
            }
            let mut sum = 0.0;
            for j in 0..k {
                let e = (logp[j] - max).exp();
                resp[i * k + j] = e;
                sum += e;
            }
            for j in 0..k {
                resp[i * k + j] /= sum;
            }
            ll += max + sum.ln();
        }
        let prev = fit.log_likelihood;
        fit.log_likelihood = ll;
        fit.ll_history.push(ll);
        if prev.is_finite() && ((ll - prev) / ll.abs().max(f64::MIN_POSITIVE)).abs() < opts.rel_tol {
            break;
        }

        // M-step
        for j in 0..k {
            let mut nk = 0.0;
            let mut sx = 0.0;
            for i in 0..n {
                let r = resp[i * k + j];
                nk += r;
                sx += r * x[i];
            }
            if nk <= f64::MIN_POSITIVE {
                // dead component: keep its location, zero its mass
                fit.weights[j] = 0.0;
                continue;
            }
            let mu = sx / nk;
            let mut sv = 0.0;
            for i in 0..n {
                let d = x[i] - mu;
                sv += resp[i * k + j] * d * d;
            }
            fit.means[j] = mu;
            fit.variances[j] = (sv / nk).max(var_floor);
            fit.weights[j] = nk / n as f64;
        }
        let wsum: f64 = fit.weights.iter().sum();
        fit.weights.iter_mut().for_each(|w| *w /= wsum);
    }
    Ok(fit)
}

/// EM clustering of the masked voxels of `intensity`.
///
/// Returns the component of each masked voxel, in voxel order, and the fit.
pub fn em_cluster(
    intensity: &Volume3D,
    mask: &[bool],
    k: usize,
    seed: u64,
    opts: &EmOptions,
) -> Result<(Vec<usize>, GmmFit)> {
    if mask.len() != intensity.data().len() {
        return Err(Error::Geometry(format!(
            "mask has {} voxels, volume {}",
            mask.len(),
            intensity.data().len()
        )));
    }
    let values: Vec<f64> = intensity
        .data()
        .iter()
        .zip(mask)
        .filter_map(|(&v, &m)| m.then_some(v as f64))
        .collect();
    let fit = fit_gmm_1d(&values, k, seed, opts)?;
    let assignment = values.iter().map(|&v| fit.assign(v)).collect();
    Ok((assignment, fit))
}
