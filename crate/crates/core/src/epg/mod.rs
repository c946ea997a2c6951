//! Extended-phase-graph simulation of fast-spin-echo trains and voxelwise
//! contrast rendering from per-class relaxometry.

mod relax;

use nalgebra::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{LabelMap, Volume3D};

pub use relax::{
    sample_relaxometry, sample_sequence, ClassRanges, RelaxRanges, Relaxometry, RelaxometryConfig,
    RelaxometryMode, RelaxometryTable, SequenceRanges,
};

type C64 = Complex<f64>;

/// Fast-spin-echo sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpgSequenceParams {
    /// Echo spacing (ms).
    pub esp: f64,
    /// Excitation flip angle (degrees), applied about y.
    pub excitation_deg: f64,
    /// Refocusing flip angles (degrees), one per echo, applied about x.
    pub refocusing_deg: Vec<f64>,
    /// Effective echo time (ms).
    pub te_eff: f64,
}

impl EpgSequenceParams {
    /// Constant refocusing train.
    pub fn constant(esp: f64, etl: usize, excitation_deg: f64, refocusing_deg: f64, te_eff: f64) -> Self {
        Self {
            esp,
            excitation_deg,
            refocusing_deg: vec![refocusing_deg; etl],
            te_eff,
        }
    }

    pub fn etl(&self) -> usize {
        self.refocusing_deg.len()
    }

    pub fn validate(&self) -> Result<()> {
        let etl = self.etl();
        if !(self.esp > 0.0 && self.esp.is_finite()) {
            return Err(Error::InvalidSequence(format!("echo spacing {} must be > 0", self.esp)));
        }
        if etl == 0 {
            return Err(Error::InvalidSequence("echo train length must be >= 1".into()));
        }
        let te_max = etl as f64 * self.esp;
        if !(self.te_eff >= self.esp && self.te_eff <= te_max) {
            return Err(Error::InvalidSequence(format!(
                "effective TE {} outside [{}, {}]",
                self.te_eff, self.esp, te_max
            )));
        }
        if !self.excitation_deg.is_finite() || self.refocusing_deg.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidSequence("flip angles must be finite".into()));
        }
        Ok(())
    }

    /// 1-based echo index sampled at the effective TE.
    pub fn echo_index(&self) -> usize {
        ((self.te_eff / self.esp).round() as usize).clamp(1, self.etl())
    }
}

/// Configuration states of orders `0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpgState {
    pub fp: Vec<C64>,
    pub fm: Vec<C64>,
    pub z: Vec<C64>,
}

impl EpgState {
    /// Equilibrium: `Z0 = 1`, everything else 0.
    pub fn equilibrium(n: usize) -> Self {
        let mut z = vec![C64::new(0.0, 0.0); n];
        z[0] = C64::new(1.0, 0.0);
        Self {
            fp: vec![C64::new(0.0, 0.0); n],
            fm: vec![C64::new(0.0, 0.0); n],
            z,
        }
    }

    pub fn orders(&self) -> usize {
        self.fp.len()
    }

    /// RF rotation by `alpha` (rad) about the transverse axis at phase `phi`.
    pub fn rotate(&mut self, alpha: f64, phi: f64) {
        let (c2, s2) = ((alpha / 2.0).cos().powi(2), (alpha / 2.0).sin().powi(2));
        let sa = alpha.sin();
        let ca = alpha.cos();
        let e1 = C64::from_polar(1.0, phi);
        let e2 = C64::from_polar(1.0, 2.0 * phi);
        let i = C64::new(0.0, 1.0);
        let t = [
            [C64::from(c2), e2 * s2, -i * e1 * sa],
            [e2.conj() * s2, C64::from(c2), i * e1.conj() * sa],
            [-i * 0.5 * e1.conj() * sa, i * 0.5 * e1 * sa, C64::from(ca)],
        ];
        for k in 0..self.orders() {
            let (a, b, c) = (self.fp[k], self.fm[k], self.z[k]);
            self.fp[k] = t[0][0] * a + t[0][1] * b + t[0][2] * c;
            self.fm[k] = t[1][0] * a + t[1][1] * b + t[1][2] * c;
            self.z[k] = t[2][0] * a + t[2][1] * b + t[2][2] * c;
        }
    }

    /// Relaxation over `dt` ms; `t1`/`t2` may be infinite.
    pub fn relax(&mut self, dt: f64, t1: f64, t2: f64) {
        let e1 = (-dt / t1).exp();
        let e2 = (-dt / t2).exp();
        for k in 0..self.orders() {
            self.fp[k] *= e2;
            self.fm[k] *= e2;
            self.z[k] *= e1;
        }
        self.z[0] += C64::from(1.0 - e1);
    }

    /// Unit dephasing gradient: F+ orders move up, F- orders move down.
    pub fn shift(&mut self) {
        let n = self.orders();
        self.fp.rotate_right(1);
        self.fm.rotate_left(1);
        self.fm[n - 1] = C64::new(0.0, 0.0);
        self.fp[0] = self.fm[0].conj();
    }
}

fn check_relaxation(t1: f64, t2: f64) -> Result<()> {
    if !(t1 > 0.0) || !(t2 > 0.0) {
        return Err(Error::InvalidRelaxometry(format!(
            "T1 and T2 must be > 0, got T1={t1}, T2={t2}"
        )));
    }
    Ok(())
}

/// Number of orders kept for a train of `etl` echoes; enough that no
/// reachable state is ever truncated.
pub fn state_orders(etl: usize) -> usize {
    2 * etl + 2
}

/// State after every echo: excitation about y, then per echo relax(ESP/2),
/// shift, refocus about x, shift, relax(ESP/2).
pub fn epg_fse_states(t1: f64, t2: f64, seq: &EpgSequenceParams) -> Result<Vec<EpgState>> {
    check_relaxation(t1, t2)?;
    seq.validate()?;
    let mut s = EpgState::equilibrium(state_orders(seq.etl()));
    s.rotate(seq.excitation_deg.to_radians(), std::f64::consts::FRAC_PI_2);
    let half = seq.esp / 2.0;
    let mut out = Vec::with_capacity(seq.etl());
    for &a in &seq.refocusing_deg {
        s.relax(half, t1, t2);
        s.shift();
        s.rotate(a.to_radians(), 0.0);
        s.shift();
        s.relax(half, t1, t2);
        out.push(s.clone());
    }
    Ok(out)
}

/// Echo amplitudes `|F+0|` after each refocusing block.
pub fn epg_fse_echoes(t1: f64, t2: f64, seq: &EpgSequenceParams) -> Result<Vec<f64>> {
    check_relaxation(t1, t2)?;
    seq.validate()?;
    let mut s = EpgState::equilibrium(state_orders(seq.etl()));
    s.rotate(seq.excitation_deg.to_radians(), std::f64::consts::FRAC_PI_2);
    let half = seq.esp / 2.0;
    Ok(seq
        .refocusing_deg
        .iter()
        .map(|&a| {
            s.relax(half, t1, t2);
            s.shift();
            s.rotate(a.to_radians(), 0.0);
            s.shift();
            s.relax(half, t1, t2);
            s.fp[0].norm()
        })
        .collect())
}

/// Renders `map` with `pd × echo amplitude` at the effective TE echo for
/// each nonzero code. Code 0 renders 0.
pub fn render_epg_volume(
    map: &LabelMap,
    table: &RelaxometryTable,
    seq: &EpgSequenceParams,
) -> Result<Volume3D> {
    seq.validate()?;
    let codes: Vec<u16> = map.unique_values().into_iter().filter(|&c| c > 0).collect();
    let k = seq.echo_index();
    let values: Vec<(u16, f64)> = codes
        .par_iter()
        .map(|&c| {
            let r = table.get(c).ok_or(Error::MissingParams(c))?;
            let echoes = epg_fse_echoes(r.t1, r.t2, seq)?;
            Ok((c, r.pd * echoes[k - 1]))
        })
        .collect::<Result<_>>()?;
    let max = codes.last().copied().unwrap_or(0) as usize;
    let mut lut = vec![0f32; max + 1];
    for (c, v) in values {
        lut[c as usize] = v as f32;
    }
    let data = map.data().par_iter().map(|&c| lut[c as usize]).collect();
    Volume3D::new(map.geometry().clone(), data)
}
