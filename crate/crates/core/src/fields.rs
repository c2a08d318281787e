//! Trigonometric polynomial fields and differential forms on flat tori.
//!
//! A field is `f(x) = Σ_k c_k exp(2πi <k, u>)` with `u = B^{-1} x` the lattice
//! coordinates of `x`. Differential forms use the Cartesian coframe `dx^i`;
//! the coefficient of `dx^{i_1} ∧ ... ∧ dx^{i_l}` (increasing indices) is
//! stored under the bitmask of `{i_1, ..., i_l}`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clifford::CliffordElement;
use crate::error::{invalid, Error, Result};
use crate::geometry::FlatTorus;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    dim: usize,
    terms: BTreeMap<Vec<i64>, Complex64>,
}

impl TrigPoly {
    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(vec![0; dim], Complex64::new(c, 0.0));
        p
    }

    /// `a cos(2π<k,u>) + b sin(2π<k,u>)`.
    pub fn cos_sin(k: &[i64], a: f64, b: f64) -> Self {
        let n = k.len();
        let mut p = Self::zero(n);
        if k.iter().all(|&c| c == 0) {
            p.add_term(k.to_vec(), Complex64::new(a, 0.0));
            return p;
        }
        let neg: Vec<i64> = k.iter().map(|c| -c).collect();
        p.add_term(k.to_vec(), Complex64::new(a / 2.0, -b / 2.0));
        p.add_term(neg, Complex64::new(a / 2.0, b / 2.0));
        p
    }

    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = (Vec<i64>, Complex64)>) -> Result<Self> {
        let mut p = Self::zero(dim);
        for (k, c) in terms {
            if k.len() != dim {
                return Err(Error::DimensionMismatch(dim, k.len()));
            }
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(Error::NonFinite("trig coefficient".into()));
            }
            p.add_term(k, c);
        }
        Ok(p)
    }

    pub fn add_term(&mut self, k: Vec<i64>, c: Complex64) {
        let e = self.terms.entry(k).or_insert(Complex64::new(0.0, 0.0));
        *e += c;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<i64>, &Complex64)> {
        self.terms.iter().filter(|(_, c)| c.norm() != 0.0)
    }

    pub fn coeff(&self, k: &[i64]) -> Complex64 {
        self.terms.get(k).copied().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|c| c.norm() == 0.0)
    }

    /// Largest `|k_i|` among the present modes.
    pub fn order(&self) -> i64 {
        self.terms().flat_map(|(k, _)| k.iter().map(|c| c.abs())).max().unwrap_or(0)
    }

    /// Real-valued iff the coefficients satisfy `c_{-k} = conj(c_k)`.
    pub fn is_real(&self) -> bool {
        self.terms().all(|(k, c)| {
            let neg: Vec<i64> = k.iter().map(|x| -x).collect();
            (self.coeff(&neg) - c.conj()).norm() <= 1e-14 * (1.0 + c.norm())
        })
    }

    /// Value at lattice coordinates `u`.
    pub fn eval_lattice(&self, u: &[f64]) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for (k, c) in self.terms() {
            let ph: f64 = k.iter().zip(u).map(|(a, b)| *a as f64 * b).sum::<f64>() * 2.0 * PI;
            s += c * Complex64::from_polar(1.0, ph);
        }
        s
    }

    pub fn eval(&self, torus: &FlatTorus, x: &[f64]) -> Complex64 {
        self.eval_lattice(&torus.to_lattice(x))
    }

    /// `Σ |c_k|`, an upper bound for the sup norm.
    pub fn sup_bound(&self) -> f64 {
        self.terms().map(|(_, c)| c.norm()).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { dim: self.dim, terms: self.terms.iter().map(|(k, c)| (k.clone(), c * s)).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        for (k, c) in other.terms() {
            p.add_term(k.clone(), *c);
        }
        p
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut p = Self::zero(self.dim);
        for (k, a) in self.terms() {
            for (l, b) in other.terms() {
                p.add_term(k.iter().zip(l).map(|(x, y)| x + y).collect(), a * b);
            }
        }
        p
    }

    /// Cartesian partial derivative `∂f/∂x^i`.
    pub fn derivative(&self, torus: &FlatTorus, i: usize) -> Self {
        let dual = torus.dual();
        let mut p = Self::zero(self.dim);
        for (k, c) in self.terms() {
            // ξ = 2π B^{-T} k
            let xi: f64 = (0..self.dim).map(|j| dual[(i, j)] * k[j] as f64).sum::<f64>() * 2.0 * PI;
            p.add_term(k.clone(), c * Complex64::new(0.0, xi));
        }
        p
    }

    /// Average over the torus (the constant mode).
    pub fn mean(&self) -> Complex64 {
        self.coeff(&vec![0; self.dim])
    }
}

/// Real differential form on a flat torus with trigonometric coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormField {
    dim: usize,
    coeffs: BTreeMap<usize, TrigPoly>,
}

impl FormField {
    pub fn zero(dim: usize) -> Self {
        Self { dim, coeffs: BTreeMap::new() }
    }

    /// Function (0-form).
    pub fn function(f: TrigPoly) -> Result<Self> {
        Self::monomial(f.dim(), 0, f)
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::function(TrigPoly::constant(dim, c)).expect("constant is real")
    }

    /// `f dx^{mask}`.
    pub fn monomial(dim: usize, mask: usize, f: TrigPoly) -> Result<Self> {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch(dim, f.dim()));
        }
        if mask >> dim != 0 {
            return invalid("form monomial outside dimension");
        }
        if !f.is_real() {
            return invalid("form coefficients must be real-valued");
        }
        let mut coeffs = BTreeMap::new();
        if !f.is_zero() {
            coeffs.insert(mask, f);
        }
        Ok(Self { dim, coeffs })
    }

    /// Constant-coefficient form from a Clifford/exterior coefficient vector.
    pub fn from_element(a: &CliffordElement) -> Self {
        let n = a.dim();
        let mut f = Self::zero(n);
        for (mask, &c) in a.coeffs().iter().enumerate() {
            if c != 0.0 {
                f.coeffs.insert(mask, TrigPoly::constant(n, c));
            }
        }
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> impl Iterator<Item = (usize, &TrigPoly)> {
        self.coeffs.iter().map(|(m, p)| (*m, p))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(|p| p.is_zero())
    }

    /// Degree if homogeneous; `Some(0)` for the zero form.
    pub fn degree(&self) -> Option<usize> {
        let mut it = self.coeffs.iter().filter(|(_, p)| !p.is_zero()).map(|(m, _)| m.count_ones() as usize);
        match it.next() {
            None => Some(0),
            Some(d) => it.all(|e| e == d).then_some(d),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(self.dim, other.dim));
        }
        let mut out = self.clone();
        for (m, p) in &other.coeffs {
            let e = out.coeffs.entry(*m).or_insert_with(|| TrigPoly::zero(self.dim));
            *e = e.add(p);
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|(m, p)| (*m, p.scale(Complex64::new(s, 0.0)))).collect(),
        }
    }

    /// Pointwise value as an element of `ΛR^n`.
    pub fn eval(&self, torus: &FlatTorus, x: &[f64]) -> CliffordElement {
        self.eval_lattice(&torus.to_lattice(x))
    }

    pub fn eval_lattice(&self, u: &[f64]) -> CliffordElement {
        let mut out = CliffordElement::zero(self.dim);
        for (m, p) in &self.coeffs {
            out.set(*m, out.coeff(*m) + p.eval_lattice(u).re);
        }
        out
    }

    /// Upper bound of the pointwise orthonormal norm of the form.
    pub fn sup_bound(&self) -> f64 {
        self.coeffs.values().map(|p| p.sup_bound().powi(2)).sum::<f64>().sqrt()
    }

    /// Largest mode order among the coefficients.
    pub fn order(&self) -> i64 {
        self.coeffs.values().map(|p| p.order()).max().unwrap_or(0)
    }

    /// Wedge product `self ∧ other`.
    pub fn wedge(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(self.dim, other.dim));
        }
        let mut out = Self::zero(self.dim);
        for (a, p) in &self.coeffs {
            for (b, q) in &other.coeffs {
                let s = crate::clifford::wedge_sign(*a, *b);
                if s == 0.0 {
                    continue;
                }
                let pq = p.mul(q).scale(Complex64::new(s, 0.0));
                let e = out.coeffs.entry(a | b).or_insert_with(|| TrigPoly::zero(self.dim));
                *e = e.add(&pq);
            }
        }
        out.coeffs.retain(|_, p| !p.is_zero());
        Ok(out)
    }

    /// Exterior derivative `d = Σ dx^i ∧ ∂_i`.
    pub fn exterior_derivative(&self, torus: &FlatTorus) -> Self {
        let mut out = Self::zero(self.dim);
        for (m, p) in &self.coeffs {
            for i in 0..self.dim {
                if m >> i & 1 == 1 {
                    continue;
                }
                let sign = if (m & ((1 << i) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                let dp = p.derivative(torus, i).scale(Complex64::new(sign, 0.0));
                let e = out.coeffs.entry(m | 1 << i).or_insert_with(|| TrigPoly::zero(self.dim));
                *e = e.add(&dp);
            }
        }
        out
    }
}
