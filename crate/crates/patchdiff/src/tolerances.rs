//! Numeric tolerances used by validation checks, oracles and the
//! acceptance suite. Each constant documents why the value is safe.

/// Admission band around [0,1] for state coordinates. Values inside the
/// band are clamped; values beyond it are rejected as range errors.
pub const STATE_TOL: f64 = 1e-12;

/// Grid check on the conserved weighted mass: |sum_i d_i b_i(x)| must stay
/// below this on every validation grid point. The sum cancels exactly in
/// real arithmetic, so only rounding noise (~1e-16 per term) remains.
pub const CONSERVATION_TOL: f64 = 1e-10;

/// Per-call mass conservation of the exchange map at population scale N:
/// |sum_i N_i x'_i - sum_i N_i x_i|. Values are O(N), rounding is O(1e-13).
pub const EXCHANGE_MASS_TOL: f64 = 1e-12;

/// Coefficient error allowed in exact polynomial identities (the quadratic
/// reproduction identity, affine fixed points). These identities hold term
/// by term in real arithmetic; the budget covers double rounding only.
pub const COEFF_IDENTITY_TOL: f64 = 1e-12;

/// Semigroup law |exp((s+t)M) - exp(sM)exp(tM)| in sup norm on the grid.
/// The matrix exponential itself is good to ~1e-13 for our tiny matrices.
pub const SEMIGROUP_LAW_TOL: f64 = 1e-10;

/// exp(tL) must map nonnegative polynomials to values no smaller than
/// -POSITIVITY_TOL on the evaluation grid (Feller positivity up to
/// matrix-exponential rounding).
pub const POSITIVITY_TOL: f64 = 1e-8;

/// Maximum distance the drift flow may leave the unit cube before
/// projection. RK4 stage overshoot is O(h^5) per step with inward drift
/// restoring it, so 1e-9 is generous for the step sizes we use.
pub const FLOW_CONTAINMENT_TOL: f64 = 1e-9;

/// Error budget for the closed-form two-patch flow oracle at the default
/// RK4 step (h = 1e-3 gives O(h^4) ~ 1e-12 local accuracy).
pub const ODE_ORACLE_TOL: f64 = 1e-8;

/// Relative agreement required between pooled Monte Carlo aggregates and
/// a single-pass computation. Compensated summation keeps the difference
/// at the last-bit level; this bound is loose on purpose.
pub const MC_AGG_REL_TOL: f64 = 1e-12;

/// Additive slack on Monte Carlo vs. exact-oracle comparisons, covering
/// time-discretisation bias of the Euler scheme at the default step.
pub const MC_SCHEME_BAND: f64 = 0.01;

/// Additive slack on the optional-stopping identity check, covering the
/// discrete detection of the barrier crossing.
pub const STOPPING_SCHEME_TOL: f64 = 0.01;

/// Acceptable range for consecutive error ratios when N doubles in the
/// discrete-generator comparison. First-order convergence gives 2; the
/// band tolerates the next-order term at the smallest N used.
pub const GENERATOR_RATIO_BAND: (f64, f64) = (1.6, 2.4);

/// Acceptable range for consecutive error ratios when the splitting step
/// count doubles. Lie splitting is first order; the band is wider than
/// the generator band because the commutator term is larger relative to
/// the error at small step counts.
pub const TROTTER_RATIO_BAND: (f64, f64) = (1.4, 2.6);

/// Number of standard errors used for statistical acceptance bands.
pub const SIGMA_BAND: f64 = 3.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerances_are_positive_and_ordered() {
        assert!(STATE_TOL > 0.0);
        assert!(CONSERVATION_TOL > STATE_TOL);
        assert!(COEFF_IDENTITY_TOL <= 1e-12);
        assert!(SEMIGROUP_LAW_TOL < POSITIVITY_TOL);
        assert!(FLOW_CONTAINMENT_TOL < ODE_ORACLE_TOL);
        assert!(GENERATOR_RATIO_BAND.0 < 2.0 && 2.0 < GENERATOR_RATIO_BAND.1);
        assert!(TROTTER_RATIO_BAND.0 < 2.0 && 2.0 < TROTTER_RATIO_BAND.1);
    }
}
