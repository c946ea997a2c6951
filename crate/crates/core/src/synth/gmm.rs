use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GenerationConfig;
use crate::augment::uniform;
use crate::error::{Error, Result};
use crate::labels::SubclassPartition;
use crate::rng::RngStream;
use crate::volume::Volume3D;

/// Drawn `(mu, sigma)` per subclass id; id 0 is fixed at `(0, 0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub mu_range: (f64, f64),
    pub sigma_range: (f64, f64),
    /// Indexed by subclass id.
    pub params: Vec<(f64, f64)>,
}

impl GmmParams {
    pub fn get(&self, id: u16) -> Option<(f64, f64)> {
        self.params.get(id as usize).copied()
    }
}

/// One independent `mu ~ U(a_mu, b_mu)`, `sigma ~ U(a_sigma, b_sigma)` draw
/// per subclass, in ascending id order.
pub fn sample_gmm_params<R: Rng + ?Sized>(
    partition: &SubclassPartition,
    cfg: &GenerationConfig,
    rng: &mut R,
) -> GmmParams {
    let mut params = vec![(0.0, 0.0)];
    for _ in partition.ids() {
        let mu = uniform(rng, cfg.mu_range.0, cfg.mu_range.1);
        let sigma = uniform(rng, cfg.sigma_range.0, cfg.sigma_range.1);
        params.push((mu, sigma));
    }
    GmmParams {
        mu_range: cfg.mu_range,
        sigma_range: cfg.sigma_range,
        params,
    }
}

/// Draws every voxel from its subclass Gaussian, clamped at 0. Background
/// is exactly 0. Each z-slab uses its own chunk stream of `stream`.
pub fn render_intensities(
    partition: &SubclassPartition,
    params: &GmmParams,
    stream: &RngStream,
) -> Result<Volume3D> {
    let n = partition.n_subclasses();
    if let Some(missing) = (1..=n as u16).find(|&id| params.get(id).is_none()) {
        return Err(Error::MissingParams(missing));
    }
    let lut: Vec<(f32, f32)> = params.params[..=n]
        .iter()
        .map(|&(m, s)| (m as f32, s as f32))
        .collect();
    let map = &partition.map;
    let [nx, ny, _] = map.dims();
    let ids = map.data();
    let mut out = vec![0f32; ids.len()];
    out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
        let mut rng = stream.chunk_rng(z as u32);
        let src = &ids[z * nx * ny..][..nx * ny];
        for (o, &id) in slab.iter_mut().zip(src) {
            if id == 0 {
                continue;
            }
            let (mu, sigma) = lut[id as usize];
            let e: f32 = StandardNormal.sample(&mut rng);
            *o = (mu + sigma * e).max(0.0);
        }
    });
    Volume3D::new(map.geometry().clone(), out)
}
