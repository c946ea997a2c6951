//! Thick-slice acquisition simulation: FWHM-matched blur, downsample to the
//! drawn acquisition grid, upsample back.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::intensity::gaussian_blur;
use super::uniform;
use crate::error::{Error, Result};
use crate::volume::{resample_onto, Boundary, InterpKind, Volume3D};

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3; // 2 sqrt(2 ln 2)

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResolutionSim {
    /// In-plane spacing range (mm), shared by both in-plane axes.
    pub in_plane: (f64, f64),
    /// Slice thickness range (mm).
    pub thickness: (f64, f64),
    /// Through-plane axis; drawn uniformly from {0, 1, 2} when unset.
    pub slice_axis: Option<usize>,
}

impl Default for ResolutionSim {
    fn default() -> Self {
        Self {
            in_plane: (0.5, 1.5),
            thickness: (3.0, 4.5),
            slice_axis: None,
        }
    }
}

impl ResolutionSim {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("in_plane", self.in_plane), ("thickness", self.thickness)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::InvalidRange(format!(
                    "resolution {name} range ({lo}, {hi}) must be positive and ordered"
                )));
            }
        }
        if matches!(self.slice_axis, Some(a) if a > 2) {
            return Err(Error::InvalidRange("slice_axis must be 0, 1 or 2".into()));
        }
        Ok(())
    }
}

/// One drawn acquisition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionDraw {
    pub slice_axis: usize,
    /// Acquisition spacing per axis (mm).
    pub spacing: [f64; 3],
}

pub fn draw_resolution<R: Rng + ?Sized>(sim: &ResolutionSim, rng: &mut R) -> ResolutionDraw {
    let slice_axis = match sim.slice_axis {
        Some(a) => a,
        None => rng.random_range(0..3),
    };
    let ip = uniform(rng, sim.in_plane.0, sim.in_plane.1);
    let th = uniform(rng, sim.thickness.0, sim.thickness.1);
    let mut spacing = [ip; 3];
    spacing[slice_axis] = th;
    ResolutionDraw {
        slice_axis,
        spacing,
    }
}

/// Applies a fixed acquisition. Targets finer than the source are treated
/// as the source spacing.
pub fn simulate_resolution_with(v: &Volume3D, draw: &ResolutionDraw) -> Result<Volume3D> {
    let src = v.spacing();
    let target: [f64; 3] = [0, 1, 2].map(|i| draw.spacing[i].max(src[i]));
    let ratio = [0, 1, 2].map(|i| target[i] / src[i]);
    if ratio.iter().all(|&r| r == 1.0) {
        return Ok(v.clone());
    }
    let sigma_mm = [0, 1, 2].map(|i| ((ratio[i] - 1.0) * src[i] / FWHM_PER_SIGMA).max(0.0));
    let blurred = gaussian_blur(v, sigma_mm);
    let geom = v.geometry();
    let dims = [0, 1, 2].map(|i| ((geom.dims()[i] as f64 / ratio[i] - 1e-9).ceil() as usize).max(1));
    let low = geom.regrid(dims, ratio)?;
    let down = resample_onto(&blurred, &low, InterpKind::Trilinear, Boundary::Clamp);
    Ok(resample_onto(&down, geom, InterpKind::Trilinear, Boundary::Clamp))
}

pub fn simulate_resolution<R: Rng + ?Sized>(
    v: &Volume3D,
    sim: &ResolutionSim,
    rng: &mut R,
) -> Result<(Volume3D, ResolutionDraw)> {
    sim.validate()?;
    let draw = draw_resolution(sim, rng);
    Ok((simulate_resolution_with(v, &draw)?, draw))
}
