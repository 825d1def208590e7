//! Exact operator algebra on polynomials: the limit generator L = A + B,
//! the per-patch Bernstein transfer operator, the rescaled chain generator
//! G_N, matrix semigroups exp(tM) on bounded-degree polynomial spaces, the
//! drift flow, and Trotter products.
//!
//! Everything here is deterministic linear algebra; the Monte Carlo side of
//! the crate lives in `wfchain`, `diffusion`, and `absorption`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::for_each_point;
use crate::model::{DriftSpec, ModelSpec, StateVec};
pub use crate::poly::{PolyTerm, Polynomial};

// ── Generator application ─────────────────────────────────────────────────

/// The pieces of the limit generator L = A + B: A is the pure-diffusion
/// part (1/2) sum_i x_i(1-x_i)/d_i d^2/dx_i^2, B is the drift part
/// sum_i b_i d/dx_i.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorPart {
    A,
    B,
    L,
}

fn check_vars(f: &Polynomial, spec: &ModelSpec) -> Result<()> {
    if f.vars() != spec.m() {
        return Err(Error::Config(format!(
            "polynomial in {} variables does not match a {}-patch model",
            f.vars(),
            spec.m()
        )));
    }
    Ok(())
}

/// Applies A, B, or L to a polynomial, exactly.
///
/// A preserves degree; B preserves degree when the drift is affine, so for
/// the exchange drift L maps P_n into P_n.
pub fn apply_generator(f: &Polynomial, spec: &ModelSpec, which: GeneratorPart) -> Result<Polynomial> {
    check_vars(f, spec)?;
    let m = spec.m();
    match which {
        GeneratorPart::A => {
            let d = spec.distortions().as_slice();
            let mut out = Polynomial::zero(m);
            for i in 0..m {
                let second = f.partial(i).partial(i);
                if second.is_zero() {
                    continue;
                }
                // (1/2) x_i(1-x_i)/d_i as a polynomial factor.
                let mut q = Polynomial::zero(m);
                let mut e = vec![0u16; m];
                e[i] = 1;
                q.add_term(&e, 0.5 / d[i]);
                e[i] = 2;
                q.add_term(&e, -0.5 / d[i]);
                out = out.add(&q.mul(&second));
            }
            Ok(out)
        }
        GeneratorPart::B => {
            let b = spec.drift_polynomials();
            let mut out = Polynomial::zero(m);
            for (i, b_i) in b.iter().enumerate() {
                let grad = f.partial(i);
                if grad.is_zero() || b_i.is_zero() {
                    continue;
                }
                out = out.add(&b_i.mul(&grad));
            }
            Ok(out)
        }
        GeneratorPart::L => {
            let a = apply_generator(f, spec, GeneratorPart::A)?;
            let b = apply_generator(f, spec, GeneratorPart::B)?;
            Ok(a.add(&b))
        }
    }
}

// ── Bernstein and discrete-generator transforms ───────────────────────────

/// Stirling numbers of the second kind S(p, j) for p up to `max_p`,
/// S(p, j) = j S(p-1, j) + S(p-1, j-1).
fn stirling2(max_p: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0; max_p + 1]; max_p + 1];
    s[0][0] = 1.0;
    for p in 1..=max_p {
        for j in 1..=p {
            s[p][j] = j as f64 * s[p - 1][j] + s[p - 1][j - 1];
        }
    }
    s
}

/// Raw moment of the normalized binomial: E[(k/N)^p] with k ~ Bin(N, x)
/// expanded in powers of x. Coefficient of x^j is
/// S(p, j) * N(N-1)..(N-j+1) / N^p.
fn binomial_moment_weights(p: usize, n_i: u64, stirling: &[Vec<f64>]) -> Vec<f64> {
    let nf = n_i as f64;
    let mut w = vec![0.0; p + 1];
    let mut falling = 1.0;
    for (j, w_j) in w.iter_mut().enumerate().take(p + 1).skip(1) {
        falling *= (nf - (j as f64 - 1.0)) / nf;
        if falling <= 0.0 {
            break;
        }
        *w_j = stirling[p][j] * falling / nf.powi((p - j) as i32);
    }
    w
}

/// Exact Bernstein transfer operator B_N f = E[f(k_1/N_1, .., k_m/N_m)]
/// with independent k_i ~ Bin(N_i, x_i), computed termwise through the
/// factorial-moment expansion. Never increases degree.
pub fn bernstein_apply(f: &Polynomial, spec: &ModelSpec, n: u64) -> Result<Polynomial> {
    check_vars(f, spec)?;
    let sizes = spec.patch_sizes(n)?;
    let m = spec.m();
    let max_p = f
        .terms()
        .flat_map(|(exps, _)| exps.iter().copied())
        .max()
        .unwrap_or(0) as usize;
    let stirling = stirling2(max_p);

    let mut out = Polynomial::zero(m);
    for (exps, c) in f.terms() {
        let mut prod = Polynomial::constant(m, c);
        for (i, &p) in exps.iter().enumerate() {
            if p == 0 {
                continue;
            }
            let w = binomial_moment_weights(p as usize, sizes[i], &stirling);
            let mut g = Polynomial::zero(m);
            let mut e = vec![0u16; m];
            for (j, &w_j) in w.iter().enumerate() {
                if w_j != 0.0 {
                    e[i] = j as u16;
                    g.add_term(&e, w_j);
                }
            }
            prod = prod.mul(&g);
        }
        out = out.add(&prod);
    }
    Ok(out)
}

/// The rescaled chain generator G_N f = N (B_N(f o Phi_N) - f), with
/// Phi_N(x) = x + b(x)/N the exchange update. Exact on polynomials.
pub fn discrete_generator_apply(f: &Polynomial, spec: &ModelSpec, n: u64) -> Result<Polynomial> {
    check_vars(f, spec)?;
    spec.require_admissible_n(n)?;
    let m = spec.m();
    let b = spec.drift_polynomials();
    let subs: Vec<Polynomial> = (0..m)
        .map(|i| Polynomial::var(m, i).add(&b[i].scale(1.0 / n as f64)))
        .collect();
    let composed = f.substitute(&subs)?;
    let transferred = bernstein_apply(&composed, spec, n)?;
    Ok(transferred.sub(f).scale(n as f64))
}

// ── Matrix representation on P_n ──────────────────────────────────────────

/// All exponent vectors with |alpha| <= n in graded lexicographic order
/// (total degree first, then lexicographic comparison of the tuple).
pub fn monomial_basis(m: usize, n: usize) -> Vec<Vec<u16>> {
    fn rec(m: usize, budget: u16, prefix: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
        if prefix.len() == m {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=budget {
            prefix.push(e);
            rec(m, budget - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, n as u16, &mut Vec::new(), &mut out);
    out.sort_by_key(|e| (e.iter().map(|&v| v as u32).sum::<u32>(), e.clone()));
    out
}

/// A linear operator on the polynomial space P_n in the graded-lex monomial
/// basis. Column j holds the coefficients of the image of basis monomial j.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    basis: Vec<Vec<u16>>,
    index: BTreeMap<Vec<u16>, usize>,
    entries: DMatrix<f64>,
    n: usize,
    m: usize,
}

impl OperatorMatrix {
    /// Assembles the matrix of A, B, or L on P_n. B and L need the exchange
    /// drift: an affine field is what keeps P_n invariant.
    pub fn assemble(spec: &ModelSpec, which: GeneratorPart, n: usize) -> Result<Self> {
        if which != GeneratorPart::A {
            require_exchange(spec)?;
        }
        let m = spec.m();
        let basis = monomial_basis(m, n);
        let index: BTreeMap<Vec<u16>, usize> =
            basis.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let dim = basis.len();
        let mut entries = DMatrix::<f64>::zeros(dim, dim);
        for (j, exps) in basis.iter().enumerate() {
            let mono = Polynomial::monomial(m, exps, 1.0)?;
            let image = apply_generator(&mono, spec, which)?;
            write_column(&image, &index, &mut entries, j)?;
        }
        Ok(OperatorMatrix {
            basis,
            index,
            entries,
            n,
            m,
        })
    }

    /// Matrix with the same basis whose entries are given by `build`,
    /// mapping basis monomial j to a polynomial.
    fn from_images(
        m: usize,
        n: usize,
        mut build: impl FnMut(&[u16]) -> Result<Polynomial>,
    ) -> Result<Self> {
        let basis = monomial_basis(m, n);
        let index: BTreeMap<Vec<u16>, usize> =
            basis.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let dim = basis.len();
        let mut entries = DMatrix::<f64>::zeros(dim, dim);
        for (j, exps) in basis.iter().enumerate() {
            let image = build(exps)?;
            write_column(&image, &index, &mut entries, j)?;
        }
        Ok(OperatorMatrix {
            basis,
            index,
            entries,
            n,
            m,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn degree_bound(&self) -> usize {
        self.n
    }

    pub fn basis(&self) -> &[Vec<u16>] {
        &self.basis
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Coefficient vector of f in this basis.
    pub fn coeff_vector(&self, f: &Polynomial) -> Result<DVector<f64>> {
        if f.vars() != self.m {
            return Err(Error::Config(format!(
                "polynomial in {} variables does not fit a basis over {} variables",
                f.vars(),
                self.m
            )));
        }
        let mut v = DVector::<f64>::zeros(self.dim());
        for (exps, c) in f.terms() {
            match self.index.get(exps) {
                Some(&i) => v[i] = c,
                None => {
                    return Err(Error::Config(format!(
                        "polynomial of degree {} exceeds the operator space P_{}",
                        f.degree(),
                        self.n
                    )))
                }
            }
        }
        Ok(v)
    }

    pub fn to_polynomial(&self, v: &DVector<f64>) -> Polynomial {
        let mut p = Polynomial::zero(self.m);
        for (i, exps) in self.basis.iter().enumerate() {
            if v[i] != 0.0 {
                p.add_term(exps, v[i]);
            }
        }
        p
    }

    pub fn apply(&self, f: &Polynomial) -> Result<Polynomial> {
        let v = self.coeff_vector(f)?;
        Ok(self.to_polynomial(&(&self.entries * v)))
    }

    /// Applies exp(t * M) to f via scaling-and-squaring.
    pub fn exp_apply(&self, t: f64, f: &Polynomial) -> Result<Polynomial> {
        let v = self.coeff_vector(f)?;
        let e = (self.entries.clone() * t).exp();
        Ok(self.to_polynomial(&(e * v)))
    }
}

fn write_column(
    image: &Polynomial,
    index: &BTreeMap<Vec<u16>, usize>,
    entries: &mut DMatrix<f64>,
    j: usize,
) -> Result<()> {
    for (exps, c) in image.terms() {
        match index.get(exps) {
            Some(&i) => entries[(i, j)] = c,
            None => {
                return Err(Error::Invariant(
                    "operator image left the polynomial space".into(),
                ))
            }
        }
    }
    Ok(())
}

fn require_exchange(spec: &ModelSpec) -> Result<()> {
    match spec.drift() {
        DriftSpec::LinearExchange { .. } => Ok(()),
        DriftSpec::Tabulated { .. } => Err(Error::UnsupportedDrift(
            "this operation needs the exchange drift; tabulated drifts have no affine flow".into(),
        )),
    }
}

/// Applies the semigroup exp(t A) or exp(t L) to f on the space P_n with
/// n = deg f. The degree bound is preserved because A maps P_n into P_n
/// and the exchange drift is affine.
pub fn semigroup_matexp(
    f: &Polynomial,
    spec: &ModelSpec,
    t: f64,
    which: GeneratorPart,
) -> Result<Polynomial> {
    if which == GeneratorPart::B {
        return Err(Error::Config(
            "the semigroup is generated by A or L, not by the drift part alone".into(),
        ));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time t = {t} must be nonnegative")));
    }
    check_vars(f, spec)?;
    let op = OperatorMatrix::assemble(spec, which, f.degree())?;
    op.exp_apply(t, f)
}

// ── Drift flow ────────────────────────────────────────────────────────────

fn clamp_into(x: &[f64], out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v.clamp(0.0, 1.0);
    }
}

fn excursion(x: &[f64]) -> f64 {
    x.iter()
        .map(|&v| (-v).max(v - 1.0).max(0.0))
        .fold(0.0, f64::max)
}

/// Classical RK4 integration of dy/dt = b(rho(y)) over [0, t], where rho is
/// the nearest-point projection onto the cube. Returns the final state
/// (projected) and the largest distance the raw path strayed outside the
/// cube before that projection.
pub fn ode_flow_detailed(
    x: &StateVec,
    spec: &ModelSpec,
    t: f64,
    h: f64,
) -> Result<(StateVec, f64)> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time t = {t} must be nonnegative")));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Config(format!("step h = {h} must be positive")));
    }
    let m = spec.m();
    let mut y = x.as_slice().to_vec();
    let mut max_exc = 0.0f64;
    let mut proj = vec![0.0; m];
    let mut k1 = vec![0.0; m];
    let mut k2 = vec![0.0; m];
    let mut k3 = vec![0.0; m];
    let mut k4 = vec![0.0; m];
    let mut stage = vec![0.0; m];

    let field = |y: &[f64], proj: &mut Vec<f64>, out: &mut Vec<f64>| {
        clamp_into(y, proj);
        spec.drift_eval_into(proj, out);
    };

    let mut remaining = t;
    while remaining > 0.0 {
        let dt = remaining.min(h);
        field(&y, &mut proj, &mut k1);
        for i in 0..m {
            stage[i] = y[i] + 0.5 * dt * k1[i];
        }
        field(&stage, &mut proj, &mut k2);
        for i in 0..m {
            stage[i] = y[i] + 0.5 * dt * k2[i];
        }
        field(&stage, &mut proj, &mut k3);
        for i in 0..m {
            stage[i] = y[i] + dt * k3[i];
        }
        field(&stage, &mut proj, &mut k4);
        for i in 0..m {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        max_exc = max_exc.max(excursion(&y));
        remaining -= dt;
    }
    clamp_into(&y.clone(), &mut y);
    Ok((StateVec::new(y)?, max_exc))
}

/// Final state of the drift flow; see `ode_flow_detailed`.
pub fn ode_flow(x: &StateVec, spec: &ModelSpec, t: f64, h: f64) -> Result<StateVec> {
    Ok(ode_flow_detailed(x, spec, t, h)?.0)
}

// ── Trotter product ───────────────────────────────────────────────────────

/// The m x m matrix M of the affine exchange field, b(x) = M x.
fn exchange_field_matrix(spec: &ModelSpec) -> Result<DMatrix<f64>> {
    require_exchange(spec)?;
    let m = spec.m();
    let b = spec.drift_polynomials();
    let mut mat = DMatrix::<f64>::zeros(m, m);
    let mut e = vec![0u16; m];
    for (i, b_i) in b.iter().enumerate() {
        for j in 0..m {
            e[j] = 1;
            mat[(i, j)] = b_i.coeff(&e);
            e[j] = 0;
        }
    }
    Ok(mat)
}

/// Trotter product (U(t/n) V(t/n))^n f on P_deg(f): U(s) = exp(s A) via the
/// assembled matrix, V(s) f = f composed with the exact affine drift flow
/// x -> exp(sM) x. Each factor preserves the degree bound.
pub fn trotter_product(
    f: &Polynomial,
    spec: &ModelSpec,
    t: f64,
    n_steps: u32,
) -> Result<Polynomial> {
    require_exchange(spec)?;
    if n_steps == 0 {
        return Err(Error::Config("n_steps must be at least 1".into()));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time t = {t} must be nonnegative")));
    }
    check_vars(f, spec)?;
    let m = spec.m();
    let n = f.degree();
    let s = t / n_steps as f64;

    let a_op = OperatorMatrix::assemble(spec, GeneratorPart::A, n)?;
    let u = (a_op.entries().clone() * s).exp();

    let flow = (exchange_field_matrix(spec)? * s).exp();
    let subs: Vec<Polynomial> = (0..m)
        .map(|i| {
            let mut p = Polynomial::zero(m);
            let mut e = vec![0u16; m];
            for j in 0..m {
                if flow[(i, j)] != 0.0 {
                    e[j] = 1;
                    p.add_term(&e, flow[(i, j)]);
                    e[j] = 0;
                }
            }
            p
        })
        .collect();
    let v_op = OperatorMatrix::from_images(m, n, |exps| {
        Polynomial::monomial(m, exps, 1.0)?.substitute(&subs)
    })?;

    let step = &u * v_op.entries();
    let mut coeffs = a_op.coeff_vector(f)?;
    for _ in 0..n_steps {
        coeffs = &step * coeffs;
    }
    Ok(a_op.to_polynomial(&coeffs))
}

// ── Grid sup error ────────────────────────────────────────────────────────

/// Max of |f - g| over the uniform grid {0, 1/res, .., 1}^m.
pub fn sup_error_on_grid(
    f: impl Fn(&[f64]) -> f64,
    g: impl Fn(&[f64]) -> f64,
    m: usize,
    resolution: usize,
) -> f64 {
    let mut worst = 0.0f64;
    for_each_point(m, resolution, |x| {
        worst = worst.max((f(x) - g(x)).abs());
    });
    worst
}

/// Grid sup error between two polynomials over the same variables.
pub fn sup_error_polys(f: &Polynomial, g: &Polynomial, resolution: usize) -> Result<f64> {
    if f.vars() != g.vars() {
        return Err(Error::Config(
            "polynomials over different variable counts are not comparable".into(),
        ));
    }
    Ok(sup_error_on_grid(|x| f.eval(x), |x| g.eval(x), f.vars(), resolution))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tolerances::{
        COEFF_IDENTITY_TOL, FLOW_CONTAINMENT_TOL, GENERATOR_RATIO_BAND, ODE_ORACLE_TOL,
        POSITIVITY_TOL, SEMIGROUP_LAW_TOL, TROTTER_RATIO_BAND,
    };

    fn unit_pair() -> ModelSpec {
        ModelSpec::linear_exchange(vec![1.0, 1.0], &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn half_pair() -> ModelSpec {
        ModelSpec::linear_exchange(vec![1.0, 0.5], &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn driftless_pair() -> ModelSpec {
        ModelSpec::linear_exchange(vec![1.0, 1.0], &[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap()
    }

    fn x1sq(m: usize) -> Polynomial {
        Polynomial::monomial(m, &{
            let mut e = vec![0u16; m];
            e[0] = 2;
            e
        }, 1.0)
        .unwrap()
    }

    #[test]
    fn a_on_square_gives_logistic_factor() {
        let spec = unit_pair();
        let got = apply_generator(&x1sq(2), &spec, GeneratorPart::A).unwrap();
        let mut want = Polynomial::zero(2);
        want.add_term(&[1, 0], 1.0);
        want.add_term(&[2, 0], -1.0);
        assert!(got.max_coeff_diff(&want) <= 1e-15);
    }

    #[test]
    fn l_kills_constants() {
        let spec = half_pair();
        let c = Polynomial::constant(2, 7.5);
        let got = apply_generator(&c, &spec, GeneratorPart::L).unwrap();
        assert!(got.is_zero());
    }

    #[test]
    fn b_on_coordinate_is_exchange_rate() {
        let spec = unit_pair();
        let f = Polynomial::var(2, 0);
        let got = apply_generator(&f, &spec, GeneratorPart::B).unwrap();
        let mut want = Polynomial::zero(2);
        want.add_term(&[0, 1], 1.0);
        want.add_term(&[1, 0], -1.0);
        assert!(got.max_coeff_diff(&want) <= 1e-15);
    }

    #[test]
    fn b_works_on_polynomial_tables() {
        // Tabulated drifts carry explicit polynomials, so B applies directly.
        let b1 = {
            let mut p = Polynomial::zero(2);
            p.add_term(&[0, 1], 1.0);
            p.add_term(&[1, 0], -1.0);
            p
        };
        let b2 = b1.scale(-2.0);
        let spec = ModelSpec::tabulated(vec![1.0, 1.0], vec![b1.clone(), b2], 4).unwrap();
        let got = apply_generator(&Polynomial::var(2, 0), &spec, GeneratorPart::B).unwrap();
        assert!(got.max_coeff_diff(&b1) <= 1e-15);
    }

    #[test]
    fn bernstein_fixes_affine_and_cross_terms() {
        let spec = half_pair();
        let mut f = Polynomial::constant(2, 1.0);
        f.add_term(&[1, 0], 2.0);
        f.add_term(&[0, 1], -0.3);
        let got = bernstein_apply(&f, &spec, 10).unwrap();
        assert!(got.max_coeff_diff(&f) <= 1e-15);

        let cross = Polynomial::monomial(2, &[1, 1], 1.0).unwrap();
        let got = bernstein_apply(&cross, &spec, 10).unwrap();
        assert!(got.max_coeff_diff(&cross) <= 1e-15);
    }

    #[test]
    fn bernstein_second_moment() {
        // N = 10, d = (1, 0.5): N_1 = 10, N_2 = 5.
        let spec = half_pair();
        let got = bernstein_apply(&x1sq(2), &spec, 10).unwrap();
        let mut want = Polynomial::zero(2);
        want.add_term(&[1, 0], 0.1);
        want.add_term(&[2, 0], 0.9);
        assert!(got.max_coeff_diff(&want) <= 1e-15);

        let x2sq = Polynomial::monomial(2, &[0, 2], 1.0).unwrap();
        let got = bernstein_apply(&x2sq, &spec, 10).unwrap();
        let mut want = Polynomial::zero(2);
        want.add_term(&[0, 1], 0.2);
        want.add_term(&[0, 2], 0.8);
        assert!(got.max_coeff_diff(&want) <= 1e-15);
    }

    #[test]
    fn quadratic_identity_exact_for_every_admissible_n() {
        let spec = half_pair();
        for n in [2u64, 4, 10, 34, 200] {
            for i in 0..2 {
                let mut e = vec![0u16; 2];
                e[i] = 2;
                let f = Polynomial::monomial(2, &e, 1.0).unwrap();
                let got = bernstein_apply(&f, &spec, n).unwrap().sub(&f).scale(n as f64);
                let mut want = Polynomial::zero(2);
                e[i] = 1;
                want.add_term(&e, 1.0 / spec.distortions().get(i));
                e[i] = 2;
                want.add_term(&e, -1.0 / spec.distortions().get(i));
                assert!(
                    got.max_coeff_diff(&want) <= COEFF_IDENTITY_TOL,
                    "N = {n}, i = {i}"
                );
            }
        }
    }

    #[test]
    fn discrete_generator_matches_drift_part_on_affine_f() {
        let spec = half_pair();
        let mut f = Polynomial::constant(2, 0.5);
        f.add_term(&[1, 0], 1.0);
        f.add_term(&[0, 1], -2.0);
        let want = apply_generator(&f, &spec, GeneratorPart::B).unwrap();
        for n in [2u64, 8, 100] {
            let got = discrete_generator_apply(&f, &spec, n).unwrap();
            assert!(got.max_coeff_diff(&want) <= 1e-12, "N = {n}");
        }
    }

    #[test]
    fn discrete_generator_second_moment_without_drift() {
        // S = 0: G_N x_1^2 = x_1(1-x_1)/d_1 exactly, independent of N.
        let spec =
            ModelSpec::linear_exchange(vec![1.0, 0.5], &[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let mut want = Polynomial::zero(2);
        want.add_term(&[1, 0], 1.0);
        want.add_term(&[2, 0], -1.0);
        for n in [2u64, 10, 50] {
            let got = discrete_generator_apply(&x1sq(2), &spec, n).unwrap();
            assert!(got.max_coeff_diff(&want) <= COEFF_IDENTITY_TOL, "N = {n}");
        }
    }

    #[test]
    fn discrete_generator_converges_at_rate_one_over_n() {
        let spec = half_pair();
        let f = Polynomial::monomial(2, &[2, 1], 1.0).unwrap();
        let lf = apply_generator(&f, &spec, GeneratorPart::L).unwrap();
        let err = |n: u64| {
            let gn = discrete_generator_apply(&f, &spec, n).unwrap();
            sup_error_polys(&gn, &lf, 20).unwrap()
        };
        let ratio = err(40) / err(80);
        let (lo, hi) = GENERATOR_RATIO_BAND;
        assert!(ratio > lo && ratio < hi, "ratio {ratio}");
    }

    #[test]
    fn basis_is_graded_and_complete() {
        let basis = monomial_basis(2, 3);
        assert_eq!(basis.len(), 10);
        assert_eq!(basis[0], vec![0, 0]);
        let degrees: Vec<u32> = basis
            .iter()
            .map(|e| e.iter().map(|&v| v as u32).sum())
            .collect();
        assert!(degrees.windows(2).all(|w| w[0] <= w[1]));

        assert_eq!(monomial_basis(3, 6).len(), 84);
    }

    #[test]
    fn matexp_identity_and_constants() {
        let spec = unit_pair();
        let f = Polynomial::monomial(2, &[2, 1], 1.0).unwrap();
        let got = semigroup_matexp(&f, &spec, 0.0, GeneratorPart::L).unwrap();
        assert!(got.max_coeff_diff(&f) <= 1e-12);

        let one = Polynomial::constant(2, 1.0);
        let got = semigroup_matexp(&one, &spec, 3.0, GeneratorPart::L).unwrap();
        assert!(got.max_coeff_diff(&one) <= 1e-12);
    }

    #[test]
    fn matexp_second_moment_closed_form() {
        // Driftless: exp(tA) x^2 = e^{-t} x^2 + (1 - e^{-t}) x per coordinate.
        let spec = driftless_pair();
        let t = 0.5;
        let got = semigroup_matexp(&x1sq(2), &spec, t, GeneratorPart::A).unwrap();
        let mut want = Polynomial::zero(2);
        want.add_term(&[1, 0], 1.0 - (-t).exp());
        want.add_term(&[2, 0], (-t).exp());
        assert!(got.max_coeff_diff(&want) <= 1e-12);
    }

    #[test]
    fn matexp_rejects_negative_time_and_drift_part() {
        let spec = unit_pair();
        let f = x1sq(2);
        assert!(matches!(
            semigroup_matexp(&f, &spec, -0.1, GeneratorPart::A),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            semigroup_matexp(&f, &spec, 1.0, GeneratorPart::B),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn matrix_ops_reject_tabulated_drift() {
        let b1 = Polynomial::var(2, 1).sub(&Polynomial::var(2, 0));
        let b2 = b1.scale(-1.0);
        let spec = ModelSpec::tabulated(vec![1.0, 1.0], vec![b1, b2], 4).unwrap();
        assert!(matches!(
            semigroup_matexp(&x1sq(2), &spec, 1.0, GeneratorPart::L),
            Err(Error::UnsupportedDrift(_))
        ));
        assert!(matches!(
            trotter_product(&x1sq(2), &spec, 1.0, 4),
            Err(Error::UnsupportedDrift(_))
        ));
    }

    #[test]
    fn semigroup_law_holds() {
        let spec = unit_pair();
        let f = Polynomial::monomial(2, &[2, 1], 1.0).unwrap();
        let whole = semigroup_matexp(&f, &spec, 0.7, GeneratorPart::L).unwrap();
        let part = semigroup_matexp(&f, &spec, 0.4, GeneratorPart::L).unwrap();
        let split = semigroup_matexp(&part, &spec, 0.3, GeneratorPart::L).unwrap();
        assert!(whole.max_coeff_diff(&split) <= SEMIGROUP_LAW_TOL);
    }

    #[test]
    fn semigroup_positivity_on_grid() {
        let spec = half_pair();
        let f = Polynomial::monomial(2, &[1, 1], 1.0).unwrap();
        let evolved = semigroup_matexp(&f, &spec, 0.5, GeneratorPart::L).unwrap();
        let mut min = f64::INFINITY;
        for_each_point(2, 20, |x| min = min.min(evolved.eval(x)));
        assert!(min >= -POSITIVITY_TOL, "min {min}");
    }

    #[test]
    fn semigroup_consistency_is_second_order() {
        let spec = unit_pair();
        let f = Polynomial::monomial(2, &[2, 1], 1.0).unwrap();
        let lf = apply_generator(&f, &spec, GeneratorPart::L).unwrap();
        let err = |t: f64| {
            let evolved = semigroup_matexp(&f, &spec, t, GeneratorPart::L).unwrap();
            let linear = f.add(&lf.scale(t));
            sup_error_polys(&evolved, &linear, 10).unwrap()
        };
        let ratio = err(0.02) / err(0.01);
        assert!(ratio > 3.2 && ratio < 4.8, "ratio {ratio}");
    }

    #[test]
    fn ode_flow_matches_closed_form() {
        let spec = unit_pair();
        let x = StateVec::new(vec![1.0, 0.0]).unwrap();
        let y = ode_flow(&x, &spec, 0.5, 1e-3).unwrap();
        let want0 = 0.5 + 0.5 * (-1.0f64).exp();
        assert!((y[0] - want0).abs() <= ODE_ORACLE_TOL, "{}", y[0]);
        assert!((y[1] - (1.0 - want0)).abs() <= ODE_ORACLE_TOL);
    }

    #[test]
    fn ode_flow_identity_and_corners() {
        let spec = half_pair();
        let x = StateVec::new(vec![0.3, 0.9]).unwrap();
        let y = ode_flow(&x, &spec, 0.0, 1e-2).unwrap();
        assert_eq!(y.as_slice(), x.as_slice());
        let z = ode_flow(&StateVec::corner0(2), &spec, 2.0, 1e-2).unwrap();
        assert!(z.is_corner0());
    }

    #[test]
    fn ode_flow_stays_inside_cube() {
        let spec = half_pair();
        let (_, exc) =
            ode_flow_detailed(&StateVec::new(vec![1.0, 0.0]).unwrap(), &spec, 5.0, 1e-2).unwrap();
        assert!(exc <= FLOW_CONTAINMENT_TOL, "excursion {exc}");
    }

    #[test]
    fn trotter_without_drift_equals_pure_diffusion() {
        let spec = driftless_pair();
        let f = Polynomial::monomial(2, &[2, 1], 1.0).unwrap();
        let want = semigroup_matexp(&f, &spec, 0.8, GeneratorPart::A).unwrap();
        for n_steps in [1u32, 4, 7] {
            let got = trotter_product(&f, &spec, 0.8, n_steps).unwrap();
            assert!(got.max_coeff_diff(&want) <= 1e-12, "n_steps {n_steps}");
        }
    }

    #[test]
    fn trotter_identity_at_t0_and_bad_steps() {
        let spec = unit_pair();
        let f = x1sq(2);
        let got = trotter_product(&f, &spec, 0.0, 3).unwrap();
        assert!(got.max_coeff_diff(&f) <= 1e-12);
        assert!(matches!(
            trotter_product(&f, &spec, 1.0, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn trotter_error_halves_with_step_doubling() {
        let spec = half_pair();
        let f = Polynomial::monomial(2, &[2, 1], 1.0).unwrap();
        let t = 0.5;
        let want = semigroup_matexp(&f, &spec, t, GeneratorPart::L).unwrap();
        let err = |n_steps: u32| {
            let got = trotter_product(&f, &spec, t, n_steps).unwrap();
            sup_error_polys(&got, &want, 10).unwrap()
        };
        let (lo, hi) = TROTTER_RATIO_BAND;
        let r1 = err(4) / err(8);
        let r2 = err(8) / err(16);
        assert!(r1 > lo && r1 < hi, "4->8 ratio {r1}");
        assert!(r2 > lo && r2 < hi, "8->16 ratio {r2}");
    }

    #[test]
    fn degree_never_increases() {
        let spec = half_pair();
        let mut f = Polynomial::monomial(2, &[2, 1], 1.0).unwrap();
        f.add_term(&[0, 3], -2.0);
        assert_eq!(f.degree(), 3);
        for which in [GeneratorPart::A, GeneratorPart::B, GeneratorPart::L] {
            assert!(apply_generator(&f, &spec, which).unwrap().degree() <= 3);
        }
        assert!(bernstein_apply(&f, &spec, 10).unwrap().degree() <= 3);
        assert!(trotter_product(&f, &spec, 0.3, 4).unwrap().degree() <= 3);
    }

    #[test]
    fn sup_error_examples() {
        let f = Polynomial::var(2, 0);
        let mut g = Polynomial::var(2, 0);
        g.add_term(&[0, 0], 0.01);
        assert_eq!(sup_error_polys(&f, &f, 5).unwrap(), 0.0);
        assert!((sup_error_polys(&f, &g, 5).unwrap() - 0.01).abs() <= 1e-15);
    }
}
