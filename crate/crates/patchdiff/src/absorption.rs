//! Monte Carlo estimators for the absorption behaviour of the diffusion:
//! corner-hitting probabilities with their wedge lower bounds, mean exit
//! times of the mass martingale against entropy bounds, optional-stopping
//! identities, and martingale drift checks for both the diffusion and the
//! finite-population chain.
//!
//! Every estimator draws one independent random stream per replicate from
//! (master_seed, replicate_id), evaluates replicates in parallel in index
//! order, and reduces sequentially with compensated summation, so results
//! are bit-identical for any worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{composite_d, delta_membership, entropy_u, DeltaMembership, PathRunner, SdeConfig};
use crate::error::{Error, Result};
use crate::model::{Corner, ModelSpec, StateVec};
use crate::tolerances::STOPPING_SCHEME_TOL;
use crate::wfchain::{chain_states_at, ChainConfig, RandomStream};

/// Sum with Neumaier's compensated correction.
pub(crate) fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Minimum replicate count for a statistically meaningful estimate.
pub const MIN_REPS: u64 = 100;

// ── Estimates and reports ─────────────────────────────────────────────────

/// A Monte Carlo sample mean with its standard error and provenance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub reps: u64,
    pub master_seed: u64,
    /// Fraction of paths not absorbed (or not decided) by the horizon.
    pub censored_fraction: f64,
}

impl McEstimate {
    /// Two-pass compensated mean and standard error of the sample mean.
    pub fn from_values(values: &[f64], censored: u64, master_seed: u64) -> Result<Self> {
        let n = values.len() as u64;
        if n < MIN_REPS {
            return Err(Error::Config(format!(
                "{n} replicates is below the minimum of {MIN_REPS}"
            )));
        }
        let mean = kahan_sum(values.iter().copied()) / n as f64;
        let ss = kahan_sum(values.iter().map(|&v| (v - mean) * (v - mean)));
        let var = ss / (n as f64 - 1.0);
        Ok(McEstimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            reps: n,
            master_seed,
            censored_fraction: censored as f64 / n as f64,
        })
    }
}

/// A one-sided bound comparison: for lower bounds, satisfied means the
/// upper edge of the 3-sigma interval reaches the bound, so horizon
/// censoring (which only lowers the estimate) never passes falsely.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_value: f64,
    pub estimate: McEstimate,
    pub satisfied: bool,
}

/// Absorption fractions at the two corners; together with the censored
/// fraction they sum to one exactly.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CornerEstimates {
    pub corner0: McEstimate,
    pub corner1: McEstimate,
}

/// Mean exit-time report carrying both forms of the entropy bound:
/// the sharper (dprod/2) u(r) read off the underlying computation and the
/// plain u(r). The headline `satisfied` flag uses the sharper value.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EntropyBoundReport {
    pub bound_sharper: f64,
    pub bound_stated: f64,
    pub estimate: McEstimate,
    pub satisfied_sharper: bool,
    pub satisfied_stated: bool,
}

impl EntropyBoundReport {
    pub fn satisfied(&self) -> bool {
        self.satisfied_sharper
    }
}

// ── Replicate driver ──────────────────────────────────────────────────────

/// Runs `reps` independent replicates in parallel, one stream per
/// replicate, collected in replicate order.
pub fn run_replicates<T, F>(reps: u64, master_seed: u64, body: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut RandomStream) -> T + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut stream = RandomStream::new(master_seed, rep);
            body(rep, &mut stream)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PathEnd {
    Corner(Corner),
    Censored,
}

fn run_to_corner(
    spec: &ModelSpec,
    cfg: &SdeConfig,
    x0: &StateVec,
    rng: &mut RandomStream,
) -> PathEnd {
    let mut runner = PathRunner::new(spec, cfg, x0);
    loop {
        if let Some(corner) = runner.frozen {
            return PathEnd::Corner(corner);
        }
        if runner.t >= cfg.t_max {
            return PathEnd::Censored;
        }
        runner.step(rng);
    }
}

// ── Estimators ────────────────────────────────────────────────────────────

/// Fractions of diffusion paths absorbed at each corner by the horizon.
pub fn estimate_absorption(
    x0: &StateVec,
    spec: &ModelSpec,
    cfg: &SdeConfig,
    reps: u64,
    master_seed: u64,
) -> Result<CornerEstimates> {
    cfg.validate()?;
    let ends = run_replicates(reps, master_seed, |_, rng| run_to_corner(spec, cfg, x0, rng));
    let censored = ends.iter().filter(|&&e| e == PathEnd::Censored).count() as u64;
    let indicator = |corner: Corner| -> Vec<f64> {
        ends.iter()
            .map(|&e| if e == PathEnd::Corner(corner) { 1.0 } else { 0.0 })
            .collect()
    };
    Ok(CornerEstimates {
        corner0: McEstimate::from_values(&indicator(Corner::Zero), censored, master_seed)?,
        corner1: McEstimate::from_values(&indicator(Corner::One), censored, master_seed)?,
    })
}

/// Compares the empirical absorption probability at the wedge's corner
/// against the lower bound 1 - dbar(x0)/alpha (mirrored for the upper
/// wedge).
pub fn check_delta_bound(
    x0: &StateVec,
    spec: &ModelSpec,
    alpha: f64,
    cfg: &SdeConfig,
    reps: u64,
    master_seed: u64,
) -> Result<BoundReport> {
    let membership = delta_membership(spec, x0, alpha)?;
    let c = composite_d(spec, x0);
    let (bound_value, corner) = match membership {
        DeltaMembership::Delta0 => (1.0 - c.dbar / alpha, Corner::Zero),
        DeltaMembership::Delta1 => (1.0 - c.dbar_mirror / alpha, Corner::One),
        DeltaMembership::Neither => {
            return Err(Error::Config(format!(
                "start state has dbar = {} and mirrored dbar = {}; neither wedge at alpha = {alpha}",
                c.dbar, c.dbar_mirror
            )))
        }
    };
    let corners = estimate_absorption(x0, spec, cfg, reps, master_seed)?;
    let estimate = match corner {
        Corner::Zero => corners.corner0,
        Corner::One => corners.corner1,
    };
    Ok(BoundReport {
        bound_value,
        estimate,
        satisfied: estimate.mean + 3.0 * estimate.stderr >= bound_value,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum ScalarExit {
    Floor(f64),
    Ceiling(f64),
    Censored,
}

/// Follows dbar along one path until it leaves (floor, alpha) on the step
/// grid. The floor is the corner snap tolerance; crossing detection on the
/// grid overshoots by O(sqrt(dt)), which the callers' tolerances absorb.
fn dbar_exit(
    spec: &ModelSpec,
    cfg: &SdeConfig,
    x0: &StateVec,
    alpha: f64,
    rng: &mut RandomStream,
) -> ScalarExit {
    let mut runner = PathRunner::new(spec, cfg, x0);
    loop {
        let dbar = runner.dbar();
        if dbar <= cfg.corner_tol {
            return ScalarExit::Floor(runner.t);
        }
        if dbar >= alpha {
            return ScalarExit::Ceiling(runner.t);
        }
        if runner.t >= cfg.t_max {
            return ScalarExit::Censored;
        }
        runner.step(rng);
    }
}

/// Estimates the mean exit time of dbar from (0, alpha) started in the
/// lower wedge and checks it against the entropy bounds; censored paths
/// enter at the horizon value, which can only bias the mean downward.
pub fn estimate_mean_hitting_time(
    x0: &StateVec,
    spec: &ModelSpec,
    alpha: f64,
    cfg: &SdeConfig,
    reps: u64,
    master_seed: u64,
) -> Result<EntropyBoundReport> {
    require_lower_wedge(spec, x0, alpha)?;
    cfg.validate()?;
    let exits = run_replicates(reps, master_seed, |_, rng| dbar_exit(spec, cfg, x0, alpha, rng));
    let mut censored = 0u64;
    let values: Vec<f64> = exits
        .iter()
        .map(|e| match *e {
            ScalarExit::Floor(t) | ScalarExit::Ceiling(t) => t,
            ScalarExit::Censored => {
                censored += 1;
                cfg.t_max
            }
        })
        .collect();
    let estimate = McEstimate::from_values(&values, censored, master_seed)?;
    let r = composite_d(spec, x0).dbar;
    let u = entropy_u(r)?;
    let bound_sharper = 0.5 * spec.distortions().product() * u;
    let lower_edge = estimate.mean - 3.0 * estimate.stderr;
    Ok(EntropyBoundReport {
        bound_sharper,
        bound_stated: u,
        estimate,
        satisfied_sharper: lower_edge <= bound_sharper,
        satisfied_stated: lower_edge <= u,
    })
}

/// Estimates p = P[dbar reaches alpha before 0] from the lower wedge and
/// checks the stopping identity alpha * p = dbar(x0) within the Monte
/// Carlo interval plus the scheme tolerance.
pub fn optional_stopping_check(
    x0: &StateVec,
    spec: &ModelSpec,
    alpha: f64,
    cfg: &SdeConfig,
    reps: u64,
    master_seed: u64,
) -> Result<BoundReport> {
    require_lower_wedge(spec, x0, alpha)?;
    cfg.validate()?;
    let exits = run_replicates(reps, master_seed, |_, rng| dbar_exit(spec, cfg, x0, alpha, rng));
    let censored = exits.iter().filter(|&&e| e == ScalarExit::Censored).count() as u64;
    let values: Vec<f64> = exits
        .iter()
        .map(|e| match e {
            ScalarExit::Ceiling(_) => 1.0,
            _ => 0.0,
        })
        .collect();
    let estimate = McEstimate::from_values(&values, censored, master_seed)?;
    let target = composite_d(spec, x0).dbar;
    let gap = (alpha * estimate.mean - target).abs();
    Ok(BoundReport {
        bound_value: target,
        estimate,
        satisfied: gap <= 3.0 * alpha * estimate.stderr + STOPPING_SCHEME_TOL,
    })
}

fn require_lower_wedge(spec: &ModelSpec, x0: &StateVec, alpha: f64) -> Result<()> {
    match delta_membership(spec, x0, alpha)? {
        DeltaMembership::Delta0 => Ok(()),
        other => Err(Error::Config(format!(
            "start state must lie in the lower wedge (dbar < alpha); membership is {other:?}"
        ))),
    }
}

// ── Martingale drift check ────────────────────────────────────────────────

/// One observation time of the drift check for one process.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriftCheckRow {
    pub process: String,
    pub t: f64,
    pub estimate: McEstimate,
    pub reference: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriftCheckReport {
    pub rows: Vec<DriftCheckRow>,
    pub passed: bool,
}

/// Checks that the mean of dbar(X_t) stays at dbar(x0) for each requested
/// time, for the diffusion and (when a chain configuration is given) for
/// the finite-population chain.
pub fn martingale_drift_check(
    x0: &StateVec,
    spec: &ModelSpec,
    times: &[f64],
    sde_cfg: &SdeConfig,
    chain_cfg: Option<&ChainConfig>,
    reps: u64,
    master_seed: u64,
) -> Result<DriftCheckReport> {
    if times.is_empty() {
        return Err(Error::Config("no observation times given".into()));
    }
    if times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Config("observation times must be positive".into()));
    }
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("observation times must be nondecreasing".into()));
    }
    sde_cfg.validate()?;
    let reference = composite_d(spec, x0).dbar;
    let d = spec.distortions();
    let mut rows = Vec::new();

    let sde_samples = run_replicates(reps, master_seed, |_, rng| {
        crate::diffusion::sde_states_at(spec, sde_cfg, x0, times, rng)
            .expect("validated configuration")
            .into_iter()
            .map(|x| d.dbar(x.as_slice()))
            .collect::<Vec<f64>>()
    });
    push_rows(&mut rows, "sde", times, &sde_samples, reference, master_seed)?;

    if let Some(chain_cfg) = chain_cfg {
        // Separate seed lane so chain draws never alias the SDE draws.
        let chain_seed = master_seed ^ 0x9e37_79b9_7f4a_7c15;
        let chain_samples = run_replicates(reps, chain_seed, |_, rng| {
            chain_states_at(spec, chain_cfg, x0, times, rng)
                .expect("validated configuration")
                .into_iter()
                .map(|x| d.dbar(x.as_slice()))
                .collect::<Vec<f64>>()
        });
        push_rows(&mut rows, "chain", times, &chain_samples, reference, chain_seed)?;
    }

    let passed = rows.iter().all(|r| r.passed);
    Ok(DriftCheckReport { rows, passed })
}

fn push_rows(
    rows: &mut Vec<DriftCheckRow>,
    process: &str,
    times: &[f64],
    samples: &[Vec<f64>],
    reference: f64,
    master_seed: u64,
) -> Result<()> {
    for (k, &t) in times.iter().enumerate() {
        let values: Vec<f64> = samples.iter().map(|path| path[k]).collect();
        let estimate = McEstimate::from_values(&values, 0, master_seed)?;
        let passed = (estimate.mean - reference).abs() <= 3.0 * estimate.stderr;
        rows.push(DriftCheckRow {
            process: process.to_string(),
            t,
            estimate,
            reference,
            passed,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;
    use crate::wfchain::Clock;

    fn unit_pair() -> ModelSpec {
        ModelSpec::linear_exchange(vec![1.0, 1.0], &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn cfg(dt: f64, t_max: f64) -> SdeConfig {
        SdeConfig::new(dt, t_max).unwrap()
    }

    #[test]
    fn kahan_handles_large_cancellation() {
        let values = vec![1e16, 1.0, -1e16];
        assert_eq!(kahan_sum(values), 1.0);
    }

    #[test]
    fn estimate_enforces_minimum_reps() {
        let values = vec![1.0; 50];
        assert!(McEstimate::from_values(&values, 0, 7).is_err());
    }

    #[test]
    fn estimate_mean_and_stderr() {
        let values: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let e = McEstimate::from_values(&values, 0, 7).unwrap();
        assert!((e.mean - 0.5).abs() < 1e-15);
        // Sample variance of a balanced 0/1 column is 25/99.
        let want = (25.0 / 99.0 / 100.0f64).sqrt();
        assert!((e.stderr - want).abs() < 1e-15);
        assert_eq!(e.reps, 100);
        assert_eq!(e.censored_fraction, 0.0);
    }

    #[test]
    fn corner_start_is_certain_and_noise_free() {
        let spec = unit_pair();
        let c = cfg(1e-3, 1.0);
        let est = estimate_absorption(&StateVec::corner0(2), &spec, &c, 100, 3).unwrap();
        assert_eq!(est.corner0.mean, 1.0);
        assert_eq!(est.corner0.stderr, 0.0);
        assert_eq!(est.corner1.mean, 0.0);
        assert_eq!(est.corner0.censored_fraction, 0.0);
    }

    #[test]
    fn corner_fractions_are_complementary() {
        let spec = unit_pair();
        let c = cfg(2e-3, 50.0);
        let x0 = StateVec::new(vec![0.5, 0.5]).unwrap();
        let est = estimate_absorption(&x0, &spec, &c, 200, 11).unwrap();
        let total = est.corner0.mean + est.corner1.mean + est.corner0.censored_fraction;
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(est.corner0.censored_fraction, est.corner1.censored_fraction);
    }

    #[test]
    fn estimates_are_bit_reproducible() {
        let spec = unit_pair();
        let c = cfg(2e-3, 20.0);
        let x0 = StateVec::new(vec![0.3, 0.6]).unwrap();
        let a = estimate_absorption(&x0, &spec, &c, 150, 42).unwrap();
        let b = estimate_absorption(&x0, &spec, &c, 150, 42).unwrap();
        assert_eq!(a.corner0, b.corner0);
        assert_eq!(a.corner1, b.corner1);
    }

    #[test]
    fn delta_bound_holds_in_the_lower_wedge() {
        let spec = unit_pair();
        let c = cfg(2e-3, 50.0);
        let x0 = StateVec::new(vec![0.05, 0.05]).unwrap();
        let report = check_delta_bound(&x0, &spec, 1.0, &c, 400, 5).unwrap();
        assert!((report.bound_value - 0.9).abs() < 1e-12);
        assert!(report.satisfied, "estimate {:?}", report.estimate);
    }

    #[test]
    fn delta_bound_mirrors_to_the_upper_wedge() {
        let spec = unit_pair();
        let c = cfg(2e-3, 50.0);
        let x0 = StateVec::new(vec![0.95, 0.95]).unwrap();
        let report = check_delta_bound(&x0, &spec, 1.0, &c, 400, 5).unwrap();
        assert!((report.bound_value - 0.9).abs() < 1e-12);
        assert!(report.satisfied);
    }

    #[test]
    fn delta_bound_rejects_states_outside_both_wedges() {
        let spec = unit_pair();
        let c = cfg(1e-3, 1.0);
        let x0 = StateVec::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            check_delta_bound(&x0, &spec, 0.5, &c, 100, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn hitting_time_reports_both_entropy_bounds() {
        let spec = unit_pair();
        let c = cfg(2e-3, 40.0);
        let x0 = StateVec::new(vec![0.05, 0.05]).unwrap();
        let report = estimate_mean_hitting_time(&x0, &spec, 1.0, &c, 300, 9).unwrap();
        let u = entropy_u(0.1).unwrap();
        assert!((report.bound_stated - u).abs() < 1e-12);
        assert!((report.bound_sharper - 0.5 * u).abs() < 1e-12);
        // The exit time is finite at this scale; essentially nothing is censored.
        assert!(report.estimate.censored_fraction <= 0.01);
        // The mean sits near 0.5, inside the plain entropy bound.
        assert!(report.satisfied_stated);
    }

    #[test]
    fn stopping_identity_recovers_the_crossing_probability() {
        let spec = unit_pair();
        let c = cfg(1e-3, 40.0);
        let x0 = StateVec::new(vec![0.05, 0.05]).unwrap();
        let report = optional_stopping_check(&x0, &spec, 0.5, &c, 2000, 13).unwrap();
        // alpha p = dbar(x0): p should be near 0.1/0.5 = 0.2.
        assert!(report.satisfied, "estimate {:?}", report.estimate);
        assert!((report.estimate.mean - 0.2).abs() < 0.05);
    }

    #[test]
    fn drift_check_passes_for_conservative_models() {
        let spec =
            ModelSpec::linear_exchange(vec![1.0, 0.5], &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let x0 = StateVec::new(vec![0.3, 0.6]).unwrap();
        let sde_cfg = cfg(2e-3, 2.0);
        let chain_cfg = ChainConfig {
            n: 100,
            clock: Clock::Poissonized,
        };
        let report = martingale_drift_check(
            &x0,
            &spec,
            &[0.1, 1.0],
            &sde_cfg,
            Some(&chain_cfg),
            400,
            21,
        )
        .unwrap();
        assert_eq!(report.rows.len(), 4);
        assert!(report.passed, "rows {:?}", report.rows);
    }

    #[test]
    fn drift_check_is_exact_from_a_corner() {
        let spec = unit_pair();
        let report = martingale_drift_check(
            &StateVec::corner1(2),
            &spec,
            &[0.5],
            &cfg(1e-2, 1.0),
            None,
            150,
            2,
        )
        .unwrap();
        assert_eq!(report.rows[0].estimate.mean, 2.0);
        assert_eq!(report.rows[0].estimate.stderr, 0.0);
        assert!(report.passed);
    }

    #[test]
    fn drift_check_flags_nonconservative_drift() {
        // b = (x_2 - x_1, 2(x_1 - x_2)) violates sum d_i b_i = 0, so dbar
        // acquires drift d/dt E[dbar] = (x_1 - x_2) and the flag must trip.
        let b1 = Polynomial::var(2, 1).sub(&Polynomial::var(2, 0));
        let b2 = b1.scale(-2.0);
        let spec = ModelSpec::tabulated(vec![1.0, 1.0], vec![b1, b2], 4).unwrap();
        let x0 = StateVec::new(vec![0.9, 0.1]).unwrap();
        let report = martingale_drift_check(
            &x0,
            &spec,
            &[1.0, 3.0],
            &cfg(2e-3, 3.5),
            None,
            400,
            31,
        )
        .unwrap();
        assert!(!report.passed, "rows {:?}", report.rows);
    }

    #[test]
    fn mirrored_runs_swap_corners() {
        // The exchange drift is odd under x -> 1 - x, so the mirrored start
        // reproduces the same absorption split with corners exchanged.
        let spec = unit_pair();
        let c = cfg(2e-3, 60.0);
        let x0 = StateVec::new(vec![0.3, 0.4]).unwrap();
        let direct = estimate_absorption(&x0, &spec, &c, 400, 17).unwrap();
        let mirrored = estimate_absorption(&x0.mirrored(), &spec, &c, 400, 18).unwrap();
        let se = |a: &McEstimate, b: &McEstimate| (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!(
            (direct.corner0.mean - mirrored.corner1.mean).abs()
                <= 3.0 * se(&direct.corner0, &mirrored.corner1)
        );
        assert!(
            (direct.corner1.mean - mirrored.corner0.mean).abs()
                <= 3.0 * se(&direct.corner1, &mirrored.corner0)
        );
    }
}
