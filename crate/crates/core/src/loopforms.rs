//! Finitely generated integral forms on loop space.
//!
//! A [`BlockTerm`] is `c · K_{ℓ_M}θ_M ∧ ... ∧ K_{ℓ_1}θ_1` with blocks
//! `θ_j = w_j φ_j(t) ϑ_j(γ(t))`: a time profile (point mass or density on
//! the circle), a form `ϑ_j` of degree `ℓ_j` on the torus and a weight
//! `w_j`. Slot 0 is the rightmost block. Degree-0 blocks are functions on
//! loop space and carry no `K` normalization.
//!
//! `lift_form(φ, ϑ) = P_φ ϑ` is the block `(φ, ϑ, 1)`; the evaluation
//! `ev_τ^* ϑ` equals `K_ℓ(δ_τ ϑ / √ℓ)` and is stored with weight `1/√ℓ`.
//!
//! [`RawMeasure`] is the supersymmetric measure on `T^N` of a point-mass
//! term at a fixed loop, built by brute-force antisymmetrization;
//! [`BlockMeasure`] is its image under the decomposition into blocks.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clifford::{permutations, super_sign, CliffordElement};
use crate::error::{invalid, Error, Result};
use crate::fields::{FormField, TrigPoly};
use crate::geometry::{Curve, FlatTorus};

/// Smooth weight on the circle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Density {
    /// `φ(t) = Re Σ c_k e^{2πikt}`, a one-variable trigonometric polynomial.
    Trig(TrigPoly),
    /// Values at `t_i = i/K`, periodic linear interpolation, read at `t + shift`.
    Table { values: Vec<f64>, shift: f64 },
}

impl Density {
    pub fn constant(c: f64) -> Self {
        Density::Trig(TrigPoly::constant(1, c))
    }

    pub fn trig(p: TrigPoly) -> Result<Self> {
        if p.dim() != 1 {
            return Err(Error::DimensionMismatch(1, p.dim()));
        }
        if !p.is_real() {
            return invalid("density must be real-valued");
        }
        Ok(Density::Trig(p))
    }

    /// `a cos(2πkt) + b sin(2πkt)`.
    pub fn cos_sin(k: i64, a: f64, b: f64) -> Self {
        Density::Trig(TrigPoly::cos_sin(&[k], a, b))
    }

    pub fn table(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("empty density table");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("density table".into()));
        }
        Ok(Density::Table { values, shift: 0.0 })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Density::Trig(p) => p.eval_lattice(&[t]).re,
            Density::Table { values, shift } => {
                let k = values.len();
                let x = ((t + shift) * k as f64).rem_euclid(k as f64);
                let i = (x.floor() as usize).min(k - 1);
                let f = x - i as f64;
                values[i] * (1.0 - f) + values[(i + 1) % k] * f
            }
        }
    }

    /// Upper bound of `sup |φ|`, hence of `∫|φ|`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            Density::Trig(p) => p.sup_bound(),
            Density::Table { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    /// `t ↦ φ(t + s)`.
    pub fn rotate(&self, s: f64) -> Self {
        match self {
            Density::Trig(p) => {
                let q = TrigPoly::from_terms(
                    1,
                    p.terms().map(|(k, c)| (k.clone(), c * Complex64::from_polar(1.0, 2.0 * PI * k[0] as f64 * s))),
                )
                .expect("rotated coefficients are finite");
                Density::Trig(q)
            }
            Density::Table { values, shift } => Density::Table { values: values.clone(), shift: (shift + s).rem_euclid(1.0) },
        }
    }

    /// Average of the rotations by `j/K`: keeps the modes divisible by `K`.
    pub fn project(&self, k: usize) -> Self {
        match self {
            Density::Trig(p) => Density::Trig(
                TrigPoly::from_terms(1, p.terms().filter(|(m, _)| m[0].rem_euclid(k as i64) == 0).map(|(m, c)| (m.clone(), *c)))
                    .expect("finite"),
            ),
            Density::Table { values, .. } => {
                let n = values.len();
                let rots: Vec<Density> = (0..k).map(|j| self.rotate(j as f64 / k as f64)).collect();
                let grid: Vec<f64> =
                    (0..n).map(|i| rots.iter().map(|d| d.eval(i as f64 / n as f64)).sum::<f64>() / k as f64).collect();
                Density::Table { values: grid, shift: 0.0 }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TimeProfile {
    PointMass(f64),
    Density(Density),
}

impl TimeProfile {
    pub fn point(tau: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&tau) {
            return invalid("point mass time must lie in [0, 1)");
        }
        Ok(TimeProfile::PointMass(tau))
    }

    /// Total variation bound: 1 for a point mass, `sup |φ|` for a density.
    pub fn variation_bound(&self) -> f64 {
        match self {
            TimeProfile::PointMass(_) => 1.0,
            TimeProfile::Density(d) => d.sup_bound(),
        }
    }

    /// Profile of `t·θ`: mass at `τ` moves to `τ - t`, densities read at `· + t`.
    pub fn rotate(&self, t: f64) -> Self {
        match self {
            TimeProfile::PointMass(tau) => {
                let s = (tau - t).rem_euclid(1.0);
                TimeProfile::PointMass(if s >= 1.0 { 0.0 } else { s })
            }
            TimeProfile::Density(d) => TimeProfile::Density(d.rotate(t)),
        }
    }

    pub fn point_time(&self) -> Option<f64> {
        match self {
            TimeProfile::PointMass(t) => Some(*t),
            TimeProfile::Density(_) => None,
        }
    }
}

/// One block `θ = w φ ϑ` of a [`BlockTerm`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub profile: TimeProfile,
    pub field: FormField,
    pub degree: usize,
    pub weight: f64,
}

impl Factor {
    fn new(profile: TimeProfile, field: FormField, weight: f64) -> Result<Self> {
        let degree = field.degree().ok_or(Error::NonHomogeneous)?;
        Ok(Self { profile, field, degree, weight })
    }

    /// `√ℓ` of the map `K_ℓ`; 1 for functions.
    pub fn jacobian(&self) -> f64 {
        if self.degree == 0 {
            1.0
        } else {
            (self.degree as f64).sqrt()
        }
    }

    /// `w φ(t) ϑ(x)` as an exterior element, `x` a lift of the loop point.
    pub fn value(&self, torus: &FlatTorus, t: f64, x: &[f64]) -> CliffordElement {
        let phi = match &self.profile {
            TimeProfile::PointMass(_) => 1.0,
            TimeProfile::Density(d) => d.eval(t),
        };
        self.field.eval(torus, x).scale(self.weight * phi)
    }

    fn norm_bound(&self) -> f64 {
        self.weight.abs() * self.jacobian() * self.profile.variation_bound() * self.field.sup_bound()
    }

    fn rotate(&self, t: f64) -> Self {
        Self { profile: self.profile.rotate(t), ..self.clone() }
    }
}

/// `prefactor · K θ_M ∧ ... ∧ K θ_1`, slot 0 rightmost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockTerm {
    pub prefactor: f64,
    pub factors: Vec<Factor>,
}

impl BlockTerm {
    pub fn degree(&self) -> usize {
        self.factors.iter().map(|f| f.degree).sum()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.degree).collect()
    }

    /// Number of blocks of positive degree.
    pub fn form_blocks(&self) -> usize {
        self.factors.iter().filter(|f| f.degree > 0).count()
    }

    pub fn is_point_mass(&self) -> bool {
        self.factors.iter().all(|f| f.profile.point_time().is_some())
    }

    pub fn norm_bound(&self) -> f64 {
        self.prefactor.abs() * self.factors.iter().map(Factor::norm_bound).product::<f64>()
    }

    /// Distinct times among point-mass blocks of positive degree.
    pub fn has_coincident_masses(&self) -> bool {
        let mut ts: Vec<f64> =
            self.factors.iter().filter(|f| f.degree > 0).filter_map(|f| f.profile.point_time()).collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.windows(2).any(|w| w[0] == w[1])
    }

    pub fn rotate(&self, t: f64) -> Self {
        Self { prefactor: self.prefactor, factors: self.factors.iter().map(|f| f.rotate(t)).collect() }
    }

    /// Merge point masses of positive degree sitting at the same time into
    /// one block: `K_a(w_a δ ϑ_a) ∧ K_b(w_b δ ϑ_b) = K_{a+b}(W δ ϑ_a ∧ ϑ_b)`
    /// with `W = w_a w_b √(ab)/√(a+b)`. `None` when the term vanishes.
    pub fn decompose(&self) -> Result<Option<Self>> {
        let m = self.factors.len();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut group_of = vec![usize::MAX; m];
        for (j, f) in self.factors.iter().enumerate() {
            let Some(t) = f.profile.point_time().filter(|_| f.degree > 0) else {
                continue;
            };
            match groups.iter().position(|g| self.factors[g[0]].profile.point_time() == Some(t)) {
                Some(g) => {
                    groups[g].push(j);
                    group_of[j] = g;
                }
                None => {
                    group_of[j] = groups.len();
                    groups.push(vec![j]);
                }
            }
        }
        if groups.iter().all(|g| g.len() < 2) {
            return Ok(Some(self.clone()));
        }
        // new slot order: each group gathered at its lowest slot
        let mut order = Vec::with_capacity(m);
        let mut placed = vec![false; groups.len()];
        for j in 0..m {
            match group_of[j] {
                usize::MAX => order.push(j),
                g if !placed[g] => {
                    placed[g] = true;
                    order.extend(&groups[g]);
                }
                _ => {}
            }
        }
        let sign = super_sign(&order, &self.degrees())? as f64;
        let mut factors = Vec::new();
        let prefactor = self.prefactor * sign;
        let mut done = vec![false; groups.len()];
        for &j in &order {
            let g = group_of[j];
            if g == usize::MAX {
                factors.push(self.factors[j].clone());
                continue;
            }
            if done[g] {
                continue;
            }
            done[g] = true;
            let members = &groups[g];
            // higher slots sit to the left of the wedge
            let mut field = self.factors[members[0]].field.clone();
            let mut weight = 1.0;
            let mut jac = 1.0;
            let mut deg = 0;
            for &k in members {
                let f = &self.factors[k];
                if k != members[0] {
                    field = f.field.wedge(&field)?;
                }
                weight *= f.weight;
                jac *= f.degree as f64;
                deg += f.degree;
            }
            if field.is_zero() {
                return Ok(None);
            }
            let profile = self.factors[members[0]].profile.clone();
            let merged = Factor::new(profile, field, weight * jac.sqrt() / (deg as f64).sqrt())?;
            factors.push(merged);
        }
        Ok(Some(Self { prefactor, factors }))
    }

    /// Point-mass term evaluated at a loop as an element of the block space,
    /// blocks sorted by time.
    pub fn block_measure(&self, torus: &FlatTorus, curve: &impl Curve) -> Result<BlockMeasure> {
        let n = torus.dim();
        let mut scalar = self.prefactor;
        let mut blocks: Vec<(f64, usize, CliffordElement)> = Vec::new();
        let mut degs = Vec::new();
        for f in &self.factors {
            let Some(t) = f.profile.point_time() else {
                return invalid("block measure needs point-mass profiles");
            };
            let x = curve.lift_at(t)?;
            let v = f.value(torus, t, &x);
            if f.degree == 0 {
                scalar *= v.scalar_part();
            } else {
                blocks.push((t, f.degree, v));
                degs.push(f.degree);
            }
        }
        let mut sigma: Vec<usize> = (0..blocks.len()).collect();
        sigma.sort_by(|&a, &b| blocks[a].0.partial_cmp(&blocks[b].0).unwrap());
        if sigma.windows(2).any(|w| blocks[w[0]].0 == blocks[w[1]].0) {
            return invalid("coincident point masses; decompose the term first");
        }
        scalar *= super_sign(&sigma, &degs)? as f64;
        let times: Vec<f64> = sigma.iter().map(|&j| blocks[j].0).collect();
        let degrees: Vec<usize> = sigma.iter().map(|&j| blocks[j].1).collect();
        let mut values = BTreeMap::new();
        let lists: Vec<Vec<(usize, f64)>> = sigma
            .iter()
            .map(|&j| {
                let v = &blocks[j].2;
                (0..1usize << n).filter(|m| m.count_ones() as usize == blocks[j].1).map(|m| (m, v.coeff(m))).collect()
            })
            .collect();
        for (masks, c) in tensor_entries(&lists) {
            if c != 0.0 {
                values.insert(masks, scalar * c);
            }
        }
        let mut bm = BlockMeasure::new(n, degrees.iter().sum());
        bm.push(BlockAtom { times, degrees, values })?;
        Ok(bm)
    }

    /// Raw measure of a point-mass term at a loop, via the wedge formula;
    /// coincident times are allowed.
    pub fn raw_measure(&self, torus: &FlatTorus, curve: &impl Curve) -> Result<RawMeasure> {
        let n = torus.dim();
        let mut raw = RawMeasure::unit(n);
        let mut scalar = self.prefactor;
        for f in &self.factors {
            let Some(t) = f.profile.point_time() else {
                return invalid("raw measure needs point-mass profiles");
            };
            let v = f.value(torus, t, &curve.lift_at(t)?);
            if f.degree == 0 {
                scalar *= v.scalar_part();
                continue;
            }
            let block = RawMeasure::block(n, t, f.degree, &v, f.jacobian())?;
            // f sits to the left of everything so far
            raw = block.wedge(&raw)?;
        }
        Ok(raw.scale(scalar))
    }
}

/// Finite sum of block terms on an `n`-torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralForm {
    dim: usize,
    terms: Vec<BlockTerm>,
}

impl IntegralForm {
    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    /// The constant function 1.
    pub fn one(dim: usize) -> Self {
        Self { dim, terms: vec![BlockTerm { prefactor: 1.0, factors: Vec::new() }] }
    }

    pub fn from_terms(dim: usize, terms: Vec<BlockTerm>) -> Result<Self> {
        for t in &terms {
            for f in &t.factors {
                if f.field.dim() != dim {
                    return Err(Error::DimensionMismatch(dim, f.field.dim()));
                }
            }
        }
        Ok(Self { dim, terms })
    }

    fn single(dim: usize, factor: Factor) -> Self {
        if factor.field.is_zero() {
            return Self::zero(dim);
        }
        Self { dim, terms: vec![BlockTerm { prefactor: 1.0, factors: vec![factor] }] }
    }

    /// `P_φ ϑ`, `ϑ` homogeneous.
    pub fn lift_form(phi: Density, form: &FormField) -> Result<Self> {
        let f = Factor::new(TimeProfile::Density(phi), form.clone(), 1.0)?;
        Ok(Self::single(form.dim(), f))
    }

    /// `P_φ f = ∫ φ(t) f(γ(t)) dt`.
    pub fn lift_function(phi: Density, f: &TrigPoly) -> Result<Self> {
        Self::lift_form(phi, &FormField::function(f.clone())?)
    }

    /// `ev_τ^* ϑ`.
    pub fn insert_at(tau: f64, form: &FormField) -> Result<Self> {
        let mut f = Factor::new(TimeProfile::point(tau)?, form.clone(), 1.0)?;
        f.weight = 1.0 / f.jacobian();
        Ok(Self::single(form.dim(), f))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[BlockTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.prefactor == 0.0)
    }

    /// Total degree if all terms share it.
    pub fn degree(&self) -> Option<usize> {
        let mut it = self.terms.iter().map(BlockTerm::degree);
        match it.next() {
            None => Some(0),
            Some(d) => it.all(|e| e == d).then_some(d),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(self.dim, other.dim));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self { dim: self.dim, terms })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            terms: self.terms.iter().map(|t| BlockTerm { prefactor: t.prefactor * s, ..t.clone() }).collect(),
        }
    }

    /// `self ∧ other`: blocks of `self` take the higher slots.
    pub fn wedge(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(self.dim, other.dim));
        }
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let mut factors = b.factors.clone();
                factors.extend(a.factors.iter().cloned());
                terms.push(BlockTerm { prefactor: a.prefactor * b.prefactor, factors });
            }
        }
        Ok(Self { dim: self.dim, terms })
    }

    /// `t·θ`, so that `q|_{t·γ}(t·θ) = q|_γ(θ)`.
    pub fn rotate(&self, t: f64) -> Self {
        Self { dim: self.dim, terms: self.terms.iter().map(|b| b.rotate(t)).collect() }
    }

    /// `(1/K) Σ_j rotate(j/K, θ)`. Single trigonometric density blocks are
    /// projected in closed form.
    pub fn average(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return invalid("averaging grid must be non-empty");
        }
        let mut terms = Vec::new();
        for term in &self.terms {
            let single_trig = term.factors.len() == 1
                && matches!(term.factors[0].profile, TimeProfile::Density(Density::Trig(_)));
            if term.factors.is_empty() {
                terms.push(term.clone());
            } else if single_trig {
                let mut t = term.clone();
                if let TimeProfile::Density(d) = &term.factors[0].profile {
                    t.factors[0].profile = TimeProfile::Density(d.project(k));
                }
                terms.push(t);
            } else {
                for j in 0..k {
                    let mut t = term.rotate(j as f64 / k as f64);
                    t.prefactor /= k as f64;
                    terms.push(t);
                }
            }
        }
        Ok(Self { dim: self.dim, terms })
    }

    /// Merge coincident point masses in every term.
    pub fn decompose_blocks(&self) -> Result<Self> {
        let mut terms = Vec::new();
        for t in &self.terms {
            if let Some(d) = t.decompose()? {
                terms.push(d);
            }
        }
        Ok(Self { dim: self.dim, terms })
    }

    /// `Σ |c| Π |w_j| √ℓ_j TV(φ_j) sup|ϑ_j|`, an upper bound of the
    /// total-variation norm.
    pub fn norm_bound(&self) -> f64 {
        self.terms.iter().map(BlockTerm::norm_bound).sum()
    }

    pub fn has_coincident_masses(&self) -> bool {
        self.terms.iter().any(BlockTerm::has_coincident_masses)
    }

    /// Raw measure of a point-mass form at a loop.
    pub fn raw_measure(&self, torus: &FlatTorus, curve: &impl Curve) -> Result<RawMeasure> {
        let mut out: Option<RawMeasure> = None;
        for t in &self.terms {
            let r = t.raw_measure(torus, curve)?;
            out = Some(match out {
                None => r,
                Some(o) => o.add(&r)?,
            });
        }
        out.ok_or_else(|| Error::InvalidArgument("empty form has no raw measure".into()))
    }
}

/// Every combination of one entry per list, slot 0 first, with the product
/// of the attached values.
fn tensor_entries(lists: &[Vec<(usize, f64)>]) -> Vec<(Vec<usize>, f64)> {
    let mut out = vec![(Vec::new(), 1.0)];
    for l in lists {
        out = out
            .into_iter()
            .flat_map(|(idx, c)| {
                l.iter().map(move |&(m, v)| {
                    let mut i = idx.clone();
                    i.push(m);
                    (i, c * v)
                })
            })
            .collect();
    }
    out
}

/// Sign of the permutation sorting `seq` increasingly, 0 on repeats.
fn sort_sign(seq: &[usize]) -> f64 {
    let mut s = 1.0;
    for i in 0..seq.len() {
        for j in i + 1..seq.len() {
            if seq[i] == seq[j] {
                return 0.0;
            }
            if seq[i] > seq[j] {
                s = -s;
            }
        }
    }
    s
}

/// Digits of a tensor index, slot 0 first.
fn digits(mut idx: usize, n: usize, len: usize) -> Vec<usize> {
    let mut d = Vec::with_capacity(len);
    for _ in 0..len {
        d.push(idx % n);
        idx /= n;
    }
    d
}

fn index(d: &[usize], n: usize) -> usize {
    d.iter().rev().fold(0, |acc, &x| acc * n + x)
}

/// Atom `δ_times ⊗ tensor` of a measure on `T^N` with values in
/// `(R^n)^{⊗N}`. Tensor index digit `j` belongs to slot `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawAtom {
    pub times: Vec<f64>,
    pub tensor: Vec<f64>,
}

/// Finite sum of atoms, pairing `θ[V_{N-1}, ..., V_0] =
/// Σ tensor[i] Π_j V_j(t_j)[i_j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawMeasure {
    dim: usize,
    order: usize,
    atoms: Vec<RawAtom>,
}

impl RawMeasure {
    /// The constant 1 (order 0).
    pub fn unit(dim: usize) -> Self {
        Self { dim, order: 0, atoms: vec![RawAtom { times: Vec::new(), tensor: vec![1.0] }] }
    }

    /// `K_ℓ(δ_t ϑ)` scaled by `jac`: one atom on the diagonal carrying the
    /// antisymmetric tensor of the degree-`ℓ` part of `form`. The first
    /// argument of a form is the highest slot.
    pub fn block(dim: usize, t: f64, degree: usize, form: &CliffordElement, jac: f64) -> Result<Self> {
        if form.dim() != dim {
            return Err(Error::DimensionMismatch(dim, form.dim()));
        }
        let size = dim.pow(degree as u32);
        let mut tensor = vec![0.0; size];
        for (i, x) in tensor.iter_mut().enumerate() {
            let d = digits(i, dim, degree);
            let reading: Vec<usize> = d.iter().rev().copied().collect();
            let s = sort_sign(&reading);
            if s != 0.0 {
                let mask = d.iter().fold(0, |m, &k| m | 1 << k);
                *x = s * jac * form.coeff(mask);
            }
        }
        Ok(Self { dim, order: degree, atoms: vec![RawAtom { times: vec![t; degree], tensor }] })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn atoms(&self) -> &[RawAtom] {
        &self.atoms
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            order: self.order,
            atoms: self
                .atoms
                .iter()
                .map(|a| RawAtom { times: a.times.clone(), tensor: a.tensor.iter().map(|x| x * s).collect() })
                .collect(),
        }
    }

    fn insert(&mut self, times: Vec<f64>, tensor: Vec<f64>) {
        match self.atoms.iter_mut().find(|a| a.times == times) {
            Some(a) => a.tensor.iter_mut().zip(&tensor).for_each(|(x, y)| *x += y),
            None => self.atoms.push(RawAtom { times, tensor }),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim || self.order != other.order {
            return invalid("raw measures of different type");
        }
        let mut out = self.clone();
        for a in &other.atoms {
            out.insert(a.times.clone(), a.tensor.clone());
        }
        Ok(out)
    }

    /// `(α ∧ β) = 1/(p! q!) Σ_{σ ∈ S_{p+q}} sgn(σ) s_σ(α ⊗ β)` with `α = self`
    /// in the high slots.
    pub fn wedge(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(self.dim, other.dim));
        }
        let (p, q) = (self.order, other.order);
        let n = self.dim;
        let big = p + q;
        let norm = 1.0 / (factorial(p) * factorial(q));
        let perms = permutations(big);
        let signs: Vec<f64> = perms.iter().map(|s| super_sign(s, &vec![1; big]).unwrap() as f64).collect();
        let mut out = Self { dim: n, order: big, atoms: Vec::new() };
        for a in &self.atoms {
            for b in &other.atoms {
                let mut times = b.times.clone();
                times.extend(&a.times);
                let size = n.pow(big as u32);
                let mut tensor = vec![0.0; size];
                let qs = n.pow(q as u32);
                for (ia, xa) in a.tensor.iter().enumerate() {
                    if *xa == 0.0 {
                        continue;
                    }
                    for (ib, xb) in b.tensor.iter().enumerate() {
                        tensor[ia * qs + ib] += xa * xb;
                    }
                }
                for (sigma, sg) in perms.iter().zip(&signs) {
                    // slot sigma[j] of the new atom receives old slot j
                    let mut t2 = vec![0.0; big];
                    for j in 0..big {
                        t2[sigma[j]] = times[j];
                    }
                    let mut ten = vec![0.0; size];
                    for (i, x) in tensor.iter().enumerate() {
                        if *x == 0.0 {
                            continue;
                        }
                        let d = digits(i, n, big);
                        let mut d2 = vec![0; big];
                        for j in 0..big {
                            d2[sigma[j]] = d[j];
                        }
                        ten[index(&d2, n)] += sg * norm * x;
                    }
                    out.insert(t2, ten);
                }
            }
        }
        Ok(out)
    }

    /// `Σ tensor[i] Π_j v[j](t_j)[i_j]` for vector fields `v[j]` on the circle.
    pub fn pair(&self, fields: &[&dyn Fn(f64) -> Vec<f64>]) -> Result<f64> {
        if fields.len() != self.order {
            return Err(Error::LengthMismatch { expected: self.order, got: fields.len() });
        }
        let n = self.dim;
        let mut total = 0.0;
        for a in &self.atoms {
            let vals: Vec<Vec<f64>> = a.times.iter().zip(fields).map(|(t, f)| f(*t)).collect();
            for (i, x) in a.tensor.iter().enumerate() {
                if *x == 0.0 {
                    continue;
                }
                let d = digits(i, n, self.order);
                total += x * d.iter().enumerate().map(|(j, &k)| vals[j][k]).product::<f64>();
            }
        }
        Ok(total)
    }

    /// Largest entrywise difference after matching atoms by time.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut m: f64 = 0.0;
        let zero = vec![0.0; self.dim.pow(self.order as u32)];
        for a in &self.atoms {
            let b = other.atoms.iter().find(|b| b.times == a.times).map(|b| &b.tensor).unwrap_or(&zero);
            m = a.tensor.iter().zip(b).fold(m, |m, (x, y)| m.max((x - y).abs()));
        }
        for b in &other.atoms {
            if !self.atoms.iter().any(|a| a.times == b.times) {
                m = b.tensor.iter().fold(m, |m, y| m.max(y.abs()));
            }
        }
        m
    }

    /// Total variation over the strata `κ_ℓ([0,1]^M_∘)`: atoms whose equal
    /// times occupy contiguous slots.
    pub fn strata_variation(&self) -> f64 {
        self.atoms
            .iter()
            .filter(|a| contiguous_runs(&a.times))
            .map(|a| a.tensor.iter().map(|x| x * x).sum::<f64>().sqrt())
            .sum()
    }

    /// Restriction to the sorted stratum, read off block by block.
    pub fn decompose(&self) -> Result<BlockMeasure> {
        let n = self.dim;
        let mut out = BlockMeasure::new(n, self.order);
        for a in &self.atoms {
            if a.times.windows(2).any(|w| w[1] < w[0]) {
                continue;
            }
            let mut degrees = Vec::new();
            let mut times = Vec::new();
            for &t in &a.times {
                if times.last() == Some(&t) {
                    *degrees.last_mut().unwrap() += 1;
                } else {
                    times.push(t);
                    degrees.push(1);
                }
            }
            let jac: f64 = degrees.iter().map(|&l| l as f64).product::<f64>().sqrt();
            let lists: Vec<Vec<(usize, f64)>> = degrees
                .iter()
                .map(|&l| (0..1usize << n).filter(|m| m.count_ones() as usize == l).map(|m| (m, 1.0)).collect())
                .collect();
            let mut values = BTreeMap::new();
            for (masks, _) in tensor_entries(&lists) {
                // increasing indices read from the highest slot of each block
                let mut d = Vec::with_capacity(self.order);
                for &m in &masks {
                    let idx: Vec<usize> = (0..n).filter(|i| m >> i & 1 == 1).collect();
                    d.extend(idx.iter().rev());
                }
                let v = a.tensor[index(&d, n)] / jac;
                if v != 0.0 {
                    values.insert(masks, v);
                }
            }
            if !values.is_empty() {
                out.push(BlockAtom { times, degrees, values })?;
            }
        }
        Ok(out)
    }
}

fn contiguous_runs(times: &[f64]) -> bool {
    for i in 0..times.len() {
        for j in i + 2..times.len() {
            if times[i] == times[j] && times[i + 1..j].iter().any(|&t| t != times[i]) {
                return false;
            }
        }
    }
    true
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// Element of the block space at sorted times `τ_1 < ... < τ_M`, values in
/// `Λ^{ℓ_M} ⊗ ... ⊗ Λ^{ℓ_1}` keyed by the monomial masks (slot 0 first).
#[derive(Clone, Debug, PartialEq)]
pub struct BlockAtom {
    pub times: Vec<f64>,
    pub degrees: Vec<usize>,
    pub values: BTreeMap<Vec<usize>, f64>,
}

/// Sorted representatives of a supersymmetric measure on `[0,1]^M_∘`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMeasure {
    dim: usize,
    order: usize,
    atoms: Vec<BlockAtom>,
}

impl BlockMeasure {
    pub fn new(dim: usize, order: usize) -> Self {
        Self { dim, order, atoms: Vec::new() }
    }

    pub fn atoms(&self) -> &[BlockAtom] {
        &self.atoms
    }

    /// Add an atom; times must increase strictly and degrees sum to the order.
    pub fn push(&mut self, atom: BlockAtom) -> Result<()> {
        if atom.times.len() != atom.degrees.len() || atom.degrees.iter().sum::<usize>() != self.order {
            return invalid("block atom degrees do not match the order");
        }
        if atom.times.windows(2).any(|w| w[1] <= w[0]) || atom.degrees.contains(&0) {
            return invalid("block atom times must increase strictly with positive degrees");
        }
        for masks in atom.values.keys() {
            if masks.len() != atom.degrees.len()
                || masks.iter().zip(&atom.degrees).any(|(m, &l)| m.count_ones() as usize != l || m >> self.dim != 0)
            {
                return invalid("block atom value outside the block degrees");
            }
        }
        match self.atoms.iter_mut().find(|a| a.times == atom.times && a.degrees == atom.degrees) {
            Some(a) => {
                for (k, v) in atom.values {
                    *a.values.entry(k).or_insert(0.0) += v;
                }
            }
            None => self.atoms.push(atom),
        }
        Ok(())
    }

    /// `Σ_atoms M! √Πℓ_j √Πℓ_j! |values|`: all `M!` supersymmetric copies,
    /// `Λ^ℓ` normed as antisymmetric tensors, with the Jacobian of `κ_ℓ`.
    pub fn norm(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| {
                let m = factorial(a.degrees.len());
                let jac: f64 = a.degrees.iter().map(|&l| l as f64 * factorial(l)).product::<f64>().sqrt();
                m * jac * a.values.values().map(|v| v * v).sum::<f64>().sqrt()
            })
            .sum()
    }

    /// Raw measure by brute-force wedge of single blocks.
    pub fn embed(&self) -> Result<RawMeasure> {
        let n = self.dim;
        let mut out = RawMeasure { dim: n, order: self.order, atoms: Vec::new() };
        for a in &self.atoms {
            for (masks, v) in &a.values {
                let mut raw = RawMeasure::unit(n);
                for ((t, &l), &m) in a.times.iter().zip(&a.degrees).zip(masks) {
                    let e = CliffordElement::monomial(n, m, 1.0);
                    raw = RawMeasure::block(n, *t, l, &e, (l as f64).sqrt())?.wedge(&raw)?;
                }
                out = out.add(&raw.scale(*v))?;
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut m: f64 = 0.0;
        let cmp = |x: &Self, y: &Self, m: &mut f64| {
            for a in &x.atoms {
                let b = y.atoms.iter().find(|b| b.times == a.times && b.degrees == a.degrees);
                for (k, v) in &a.values {
                    let w = b.and_then(|b| b.values.get(k)).copied().unwrap_or(0.0);
                    *m = m.max((v - w).abs());
                }
            }
        };
        cmp(self, other, &mut m);
        cmp(other, self, &mut m);
        m
    }
}
