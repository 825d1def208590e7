//! The diffusion limit of the patch chain: a degenerate SDE on the unit
//! cube with coordinate noise sqrt(x_i(1 - x_i)/d_i) and the exchange
//! drift, integrated with a full-truncation Euler scheme.
//!
//! The weighted mass dbar(x) = <d, x>/prod(d) is the scalar summary the
//! absorption analysis runs on: it is a bounded martingale under the
//! conservative drift, and the wedges {dbar < alpha} near each absorbing
//! corner are where hitting bounds apply.

use rand::RngExt;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Corner, ModelSpec, StateVec};
use crate::wfchain::{HittingRecord, RandomStream, TargetSet, Trajectory};

/// Hard upper limit for the corner snap radius.
const CORNER_TOL_MAX: f64 = 1e-3;

/// Default snap radius: paths this close to an absorbing corner (in
/// Euclidean distance) are moved onto it and frozen.
pub const DEFAULT_CORNER_TOL: f64 = 1e-6;

/// Default Euler time step.
pub const DEFAULT_DT: f64 = 1e-3;

// ── Configuration ─────────────────────────────────────────────────────────

/// Time-discretisation scheme. Only full truncation is implemented: the
/// diffusion argument x(1-x) is floored at zero and the state is clamped
/// back into the cube after every step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdeScheme {
    FullTruncationEuler,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SdeConfig {
    pub dt: f64,
    pub scheme: SdeScheme,
    pub t_max: f64,
    /// Snap radius around the absorbing corners.
    pub corner_tol: f64,
}

impl SdeConfig {
    pub fn new(dt: f64, t_max: f64) -> Result<Self> {
        let cfg = SdeConfig {
            dt,
            scheme: SdeScheme::FullTruncationEuler,
            t_max,
            corner_tol: DEFAULT_CORNER_TOL,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_corner_tol(mut self, corner_tol: f64) -> Result<Self> {
        self.corner_tol = corner_tol;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(Error::Config(format!(
                "t_max = {} must be positive",
                self.t_max
            )));
        }
        if !(self.corner_tol > 0.0 && self.corner_tol < CORNER_TOL_MAX) {
            return Err(Error::Config(format!(
                "corner_tol = {} must lie in (0, {CORNER_TOL_MAX})",
                self.corner_tol
            )));
        }
        Ok(())
    }
}

// ── Weighted mass and wedge membership ────────────────────────────────────

/// The conserved mass functional evaluated at a state and its mirror.
/// The two values always sum to dbar(1), which is invariant.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CompositeState {
    pub dbar: f64,
    pub dbar_mirror: f64,
}

pub fn composite_d(spec: &ModelSpec, x: &StateVec) -> CompositeState {
    let d = spec.distortions();
    CompositeState {
        dbar: d.dbar(x.as_slice()),
        dbar_mirror: d.dbar(x.mirrored().as_slice()),
    }
}

/// Which absorption wedge a state belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMembership {
    Delta0,
    Delta1,
    Neither,
}

/// Classifies a state against the wedges at level `alpha`.
///
/// Admissible levels are 0 < alpha <= min(1, dbar(1)); since dbar(1) >= m
/// the two wedges are always disjoint.
pub fn delta_membership(spec: &ModelSpec, x: &StateVec, alpha: f64) -> Result<DeltaMembership> {
    check_alpha(spec, alpha)?;
    let c = composite_d(spec, x);
    if c.dbar < alpha {
        Ok(DeltaMembership::Delta0)
    } else if c.dbar_mirror < alpha {
        Ok(DeltaMembership::Delta1)
    } else {
        Ok(DeltaMembership::Neither)
    }
}

pub(crate) fn check_alpha(spec: &ModelSpec, alpha: f64) -> Result<()> {
    let hi = spec.distortions().dbar_max().min(1.0);
    if !(alpha > 0.0 && alpha <= hi) {
        return Err(Error::Config(format!(
            "alpha = {alpha} outside the admissible interval (0, {hi}]"
        )));
    }
    Ok(())
}

/// Exit entropy u(r) = -2 (r ln r + (1-r) ln(1-r)) on [0,1], with
/// u(0) = u(1) = 0. Strictly concave; enters the mean exit-time bounds.
pub fn entropy_u(r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Domain(format!("entropy argument {r} outside [0, 1]")));
    }
    let xlnx = |v: f64| if v == 0.0 { 0.0 } else { v * v.ln() };
    Ok(-2.0 * (xlnx(r) + xlnx(1.0 - r)))
}

// ── Euler scheme ──────────────────────────────────────────────────────────

#[inline]
fn sigma(x: f64, d: f64) -> f64 {
    ((x * (1.0 - x)).max(0.0) / d).sqrt()
}

/// One full-truncation Euler step into a caller buffer.
/// Coordinates exactly at 0 or 1 of full corners stay put because both the
/// drift and the noise amplitude vanish there.
pub(crate) fn sde_step_in_place(
    spec: &ModelSpec,
    dt: f64,
    sqrt_dt: f64,
    x: &mut [f64],
    b: &mut [f64],
    rng: &mut RandomStream,
) {
    spec.drift_eval_into(x, b);
    let d = spec.distortions().as_slice();
    for i in 0..x.len() {
        let z: f64 = rng.sample(StandardNormal);
        let v = x[i] + b[i] * dt + sigma(x[i], d[i]) * sqrt_dt * z;
        x[i] = v.clamp(0.0, 1.0);
    }
}

/// One Euler step of the diffusion.
pub fn sde_step(
    spec: &ModelSpec,
    cfg: &SdeConfig,
    x: &StateVec,
    stream: &mut RandomStream,
) -> Result<StateVec> {
    cfg.validate()?;
    let mut coords = x.as_slice().to_vec();
    let mut b = vec![0.0; spec.m()];
    sde_step_in_place(spec, cfg.dt, cfg.dt.sqrt(), &mut coords, &mut b, stream);
    StateVec::new(coords)
}

/// Distance-based corner snap: if x lies within the snap ball of a corner,
/// it is moved onto the corner exactly and the path freezes there.
pub(crate) fn snap_corner(x: &mut [f64], tol: f64) -> Option<Corner> {
    let d0: f64 = x.iter().map(|&v| v * v).sum();
    if d0 <= tol * tol {
        x.fill(0.0);
        return Some(Corner::Zero);
    }
    let d1: f64 = x.iter().map(|&v| (1.0 - v) * (1.0 - v)).sum();
    if d1 <= tol * tol {
        x.fill(1.0);
        return Some(Corner::One);
    }
    None
}

/// Incremental driver for one diffusion path; shared by the recorded
/// simulation and the Monte Carlo estimators.
pub(crate) struct PathRunner<'a> {
    spec: &'a ModelSpec,
    dt: f64,
    sqrt_dt: f64,
    corner_tol: f64,
    pub state: Vec<f64>,
    drift_buf: Vec<f64>,
    pub t: f64,
    pub frozen: Option<Corner>,
}

impl<'a> PathRunner<'a> {
    pub fn new(spec: &'a ModelSpec, cfg: &SdeConfig, x0: &StateVec) -> Self {
        let mut state = x0.as_slice().to_vec();
        let frozen = snap_corner(&mut state, cfg.corner_tol);
        PathRunner {
            spec,
            dt: cfg.dt,
            sqrt_dt: cfg.dt.sqrt(),
            corner_tol: cfg.corner_tol,
            state,
            drift_buf: vec![0.0; spec.m()],
            t: 0.0,
            frozen,
        }
    }

    /// Advances one step unless frozen; returns the new freeze state.
    pub fn step(&mut self, rng: &mut RandomStream) -> Option<Corner> {
        if self.frozen.is_none() {
            sde_step_in_place(
                self.spec,
                self.dt,
                self.sqrt_dt,
                &mut self.state,
                &mut self.drift_buf,
                rng,
            );
            self.frozen = snap_corner(&mut self.state, self.corner_tol);
        }
        self.t += self.dt;
        self.frozen
    }

    pub fn dbar(&self) -> f64 {
        self.spec.distortions().dbar(&self.state)
    }
}

/// Simulates one diffusion path with full recording and hit detection.
/// Wedge hits use the exact inequality on dbar; corner hits happen when
/// the path enters the snap ball and is frozen.
pub fn simulate_sde(
    spec: &ModelSpec,
    cfg: &SdeConfig,
    x0: &StateVec,
    targets: &[TargetSet],
    stream: &mut RandomStream,
) -> Result<Trajectory> {
    cfg.validate()?;
    let mut runner = PathRunner::new(spec, cfg, x0);
    let mut hit_times: Vec<Option<f64>> = vec![None; targets.len()];
    let mut times = vec![0.0];
    let mut states = vec![StateVec::new(runner.state.clone())?];
    record_hits(spec, targets, &states[0], 0.0, &mut hit_times);

    let steps = (cfg.t_max / cfg.dt).floor() as u64;
    for _ in 0..steps {
        if runner.frozen.is_some() {
            break;
        }
        runner.step(stream);
        let snapshot = StateVec::new(runner.state.clone())?;
        record_hits(spec, targets, &snapshot, runner.t, &mut hit_times);
        times.push(runner.t);
        states.push(snapshot);
    }

    let hits = targets
        .iter()
        .zip(hit_times)
        .map(|(&target, time)| HittingRecord { target, time })
        .collect();
    Ok(Trajectory {
        times,
        states,
        hits,
    })
}

fn record_hits(
    spec: &ModelSpec,
    targets: &[TargetSet],
    x: &StateVec,
    t: f64,
    hit_times: &mut [Option<f64>],
) {
    for (i, target) in targets.iter().enumerate() {
        if hit_times[i].is_none() && target.contains(spec, x) {
            hit_times[i] = Some(t);
        }
    }
}

/// States of one diffusion path at the requested times (nondecreasing),
/// each rounded to the step grid, without recording the path.
pub fn sde_states_at(
    spec: &ModelSpec,
    cfg: &SdeConfig,
    x0: &StateVec,
    times: &[f64],
    stream: &mut RandomStream,
) -> Result<Vec<StateVec>> {
    cfg.validate()?;
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("observation times must be nondecreasing".into()));
    }
    let mut runner = PathRunner::new(spec, cfg, x0);
    let mut out = Vec::with_capacity(times.len());
    let mut step = 0u64;
    for &t_obs in times {
        if !(t_obs >= 0.0) {
            return Err(Error::Config(format!("observation time {t_obs} invalid")));
        }
        let want = (t_obs / cfg.dt).round() as u64;
        while step < want && runner.frozen.is_none() {
            runner.step(stream);
            step += 1;
        }
        out.push(StateVec::new(runner.state.clone())?);
    }
    Ok(out)
}

/// Terminal state of one diffusion path at time t.
pub fn sde_state_at(
    spec: &ModelSpec,
    cfg: &SdeConfig,
    x0: &StateVec,
    t: f64,
    stream: &mut RandomStream,
) -> Result<StateVec> {
    Ok(sde_states_at(spec, cfg, x0, &[t], stream)?.pop().expect("one time requested"))
}
