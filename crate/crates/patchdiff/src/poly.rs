//! Sparse multivariate polynomials over f64.
//!
//! Exponent vectors index a coefficient map; zero coefficients are pruned
//! eagerly so the stored terms always equal the support. All generator and
//! semigroup computations in this crate reduce to arithmetic on this type.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One serialized term: exponent vector plus coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub exponents: Vec<u16>,
    pub coeff: f64,
}

/// Sparse polynomial in a fixed number of variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    vars: usize,
    terms: BTreeMap<Vec<u16>, f64>,
}

impl Polynomial {
    /// The zero polynomial in `vars` variables.
    pub fn zero(vars: usize) -> Self {
        Polynomial {
            vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(vars);
        p.add_term(&vec![0; vars], c);
        p
    }

    /// The coordinate polynomial x_i (zero-based index).
    pub fn var(vars: usize, i: usize) -> Self {
        assert!(i < vars, "variable index out of range");
        let mut exps = vec![0u16; vars];
        exps[i] = 1;
        let mut p = Polynomial::zero(vars);
        p.add_term(&exps, 1.0);
        p
    }

    /// Single monomial c * x^exps.
    pub fn monomial(vars: usize, exps: &[u16], c: f64) -> Result<Self> {
        if exps.len() != vars {
            return Err(Error::Config(format!(
                "monomial exponent vector has length {}, expected {}",
                exps.len(),
                vars
            )));
        }
        let mut p = Polynomial::zero(vars);
        p.add_term(exps, c);
        Ok(p)
    }

    pub fn from_terms(vars: usize, terms: &[PolyTerm]) -> Result<Self> {
        let mut p = Polynomial::zero(vars);
        for t in terms {
            if t.exponents.len() != vars {
                return Err(Error::Config(format!(
                    "polynomial term has {} exponents, expected {}",
                    t.exponents.len(),
                    vars
                )));
            }
            p.add_term(&t.exponents, t.coeff);
        }
        Ok(p)
    }

    pub fn to_terms(&self) -> Vec<PolyTerm> {
        self.terms
            .iter()
            .map(|(e, &c)| PolyTerm {
                exponents: e.clone(),
                coeff: c,
            })
            .collect()
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&x| x as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn coeff(&self, exps: &[u16]) -> f64 {
        self.terms.get(exps).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u16], f64)> {
        self.terms.iter().map(|(e, &c)| (e.as_slice(), c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Adds c * x^exps in place, pruning the term if it cancels to zero.
    pub fn add_term(&mut self, exps: &[u16], c: f64) {
        debug_assert_eq!(exps.len(), self.vars);
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(exps.to_vec()).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.remove(exps);
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.vars, other.vars);
        let mut out = self.clone();
        for (e, c) in other.terms() {
            out.add_term(e, c);
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.vars, other.vars);
        let mut out = self.clone();
        for (e, c) in other.terms() {
            out.add_term(e, -c);
        }
        out
    }

    pub fn scale(&self, c: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.vars);
        if c == 0.0 {
            return out;
        }
        for (e, v) in self.terms() {
            out.add_term(e, c * v);
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.vars, other.vars);
        let mut out = Polynomial::zero(self.vars);
        let mut exps = vec![0u16; self.vars];
        for (ea, ca) in self.terms() {
            for (eb, cb) in other.terms() {
                for i in 0..self.vars {
                    exps[i] = ea[i] + eb[i];
                }
                out.add_term(&exps, ca * cb);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.vars);
        let mut acc = 0.0;
        for (e, c) in self.terms() {
            let mut term = c;
            for (i, &p) in e.iter().enumerate() {
                if p > 0 {
                    term *= x[i].powi(p as i32);
                }
            }
            acc += term;
        }
        acc
    }

    /// Partial derivative with respect to x_i.
    pub fn partial(&self, i: usize) -> Polynomial {
        assert!(i < self.vars);
        let mut out = Polynomial::zero(self.vars);
        let mut exps = vec![0u16; self.vars];
        for (e, c) in self.terms() {
            if e[i] == 0 {
                continue;
            }
            exps.copy_from_slice(e);
            exps[i] -= 1;
            out.add_term(&exps, c * e[i] as f64);
        }
        out
    }

    /// Substitutes x_i -> subs[i] for every variable simultaneously.
    pub fn substitute(&self, subs: &[Polynomial]) -> Result<Polynomial> {
        if subs.len() != self.vars {
            return Err(Error::Config(format!(
                "substitution needs {} polynomials, got {}",
                self.vars,
                subs.len()
            )));
        }
        let tvars = subs.first().map(|p| p.vars).unwrap_or(self.vars);
        if subs.iter().any(|p| p.vars != tvars) {
            return Err(Error::Config(
                "substitution polynomials must share a variable count".into(),
            ));
        }
        // Cache powers of each substituted coordinate as they are needed.
        let mut pows: Vec<Vec<Polynomial>> = subs
            .iter()
            .map(|p| vec![Polynomial::constant(tvars, 1.0), p.clone()])
            .collect();
        let mut acc = Polynomial::zero(tvars);
        for (e, c) in self.terms() {
            let mut term = Polynomial::constant(tvars, c);
            for (i, &p) in e.iter().enumerate() {
                let p = p as usize;
                while pows[i].len() <= p {
                    let next = pows[i].last().unwrap().mul(&subs[i]);
                    pows[i].push(next);
                }
                if p > 0 {
                    term = term.mul(&pows[i][p]);
                }
            }
            acc = acc.add(&term);
        }
        Ok(acc)
    }

    /// Largest absolute coefficient difference over the union of supports.
    pub fn max_coeff_diff(&self, other: &Polynomial) -> f64 {
        assert_eq!(self.vars, other.vars);
        let mut worst = 0.0f64;
        for (e, c) in self.terms() {
            worst = worst.max((c - other.coeff(e)).abs());
        }
        for (e, c) in other.terms() {
            worst = worst.max((c - self.coeff(e)).abs());
        }
        worst
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in self.terms() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (i, &p) in e.iter().enumerate() {
                match p {
                    0 => {}
                    1 => write!(f, "*x{}", i + 1)?,
                    _ => write!(f, "*x{}^{}", i + 1, p)?,
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x1sq_x2() -> Polynomial {
        // x_1^2 x_2 in two variables
        Polynomial::monomial(2, &[2, 1], 1.0).unwrap()
    }

    #[test]
    fn eval_monomial() {
        assert!((x1sq_x2().eval(&[0.5, 0.4]) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_coefficients_are_pruned() {
        let p = x1sq_x2();
        let diff = p.sub(&p);
        assert!(diff.is_zero());
        assert_eq!(diff.num_terms(), 0);

        let mut q = Polynomial::zero(2);
        q.add_term(&[1, 0], 2.0);
        q.add_term(&[1, 0], -2.0);
        assert_eq!(q.num_terms(), 0);
    }

    #[test]
    fn degree_and_partial() {
        let p = x1sq_x2();
        assert_eq!(p.degree(), 3);
        let dp = p.partial(0);
        assert_eq!(dp.coeff(&[1, 1]), 2.0);
        assert_eq!(dp.degree(), 2);
        assert!(Polynomial::zero(3).partial(1).is_zero());
    }

    #[test]
    fn product_matches_pointwise_evaluation() {
        let p = Polynomial::var(2, 0).add(&Polynomial::constant(2, 0.5));
        let q = Polynomial::var(2, 1).sub(&Polynomial::var(2, 0));
        let pq = p.mul(&q);
        let x = [0.3, 0.9];
        assert!((pq.eval(&x) - p.eval(&x) * q.eval(&x)).abs() < 1e-15);
    }

    #[test]
    fn substitute_affine_map() {
        // f(x) = x_1^2, substitution x_1 -> x_1 + x_2 gives x_1^2 + 2 x_1 x_2 + x_2^2
        let f = Polynomial::monomial(2, &[2, 0], 1.0).unwrap();
        let sub0 = Polynomial::var(2, 0).add(&Polynomial::var(2, 1));
        let sub1 = Polynomial::var(2, 1);
        let g = f.substitute(&[sub0, sub1]).unwrap();
        assert_eq!(g.coeff(&[2, 0]), 1.0);
        assert_eq!(g.coeff(&[1, 1]), 2.0);
        assert_eq!(g.coeff(&[0, 2]), 1.0);
        assert_eq!(g.num_terms(), 3);
    }

    #[test]
    fn terms_round_trip() {
        let p = x1sq_x2().add(&Polynomial::constant(2, -0.25));
        let back = Polynomial::from_terms(2, &p.to_terms()).unwrap();
        assert_eq!(p, back);
        assert!(Polynomial::from_terms(2, &[PolyTerm {
            exponents: vec![1],
            coeff: 1.0
        }])
        .is_err());
    }
}
