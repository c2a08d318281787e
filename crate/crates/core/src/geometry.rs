//! Flat tori and circles: lattice geometry, heat kernels, geodesics, spin
//! transport and polygon loops.
//!
//! Points are Cartesian vectors in `R^n`. The lattice `B` has the generators as
//! columns, so a point with lattice coordinates `u` sits at `B u`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clifford::CliffordElement;
use crate::error::{invalid, Error, Result};

/// `-ln(1e-16)`: theta-sum terms below this relative size are dropped.
pub const THETA_CUTOFF: f64 = 36.841_361_487_904_734;

/// Relative tolerance under which two geodesic candidates count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatTorus {
    dim: usize,
    lattice: DMatrix<f64>,
    inverse: DMatrix<f64>,
    spin: Vec<u8>,
}

impl FlatTorus {
    /// Torus `R^n / B Z^n` with the periodic spin structure.
    pub fn new(lattice: DMatrix<f64>) -> Result<Self> {
        let n = lattice.nrows();
        if n == 0 || lattice.ncols() != n {
            return invalid("lattice must be a non-empty square matrix");
        }
        if lattice.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("lattice".into()));
        }
        let det = lattice.determinant();
        if det.abs() < 1e-12 {
            return invalid("lattice is singular");
        }
        let inverse = lattice
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("lattice is singular".into()))?;
        Ok(Self { dim: n, lattice, inverse, spin: vec![0; n] })
    }

    /// Unit cube torus `R^n / Z^n`.
    pub fn unit(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity lattice")
    }

    /// Circle of length `length`.
    pub fn circle(length: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, length))
    }

    pub fn with_spin(mut self, spin: &[u8]) -> Result<Self> {
        if spin.len() != self.dim {
            return Err(Error::LengthMismatch { expected: self.dim, got: spin.len() });
        }
        if spin.iter().any(|&e| e > 1) {
            return invalid("spin structure entries must be 0 or 1");
        }
        self.spin = spin.to_vec();
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lattice(&self) -> &DMatrix<f64> {
        &self.lattice
    }

    pub fn spin(&self) -> &[u8] {
        &self.spin
    }

    pub fn volume(&self) -> f64 {
        self.lattice.determinant().abs()
    }

    /// Sign of `det B`; the orientation is the one of the lattice column order.
    pub fn orientation(&self) -> f64 {
        self.lattice.determinant().signum()
    }

    pub fn scalar_curvature(&self) -> f64 {
        0.0
    }

    /// Riemann tensor components `R_ijkl`, all zero.
    pub fn riemann(&self) -> Vec<f64> {
        vec![0.0; self.dim.pow(4)]
    }

    /// Dual lattice `B^{-T}`.
    pub fn dual(&self) -> DMatrix<f64> {
        self.inverse.transpose()
    }

    pub fn to_lattice(&self, x: &[f64]) -> Vec<f64> {
        (&self.inverse * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    pub fn from_lattice(&self, u: &[f64]) -> Vec<f64> {
        (&self.lattice * DVector::from_column_slice(u)).as_slice().to_vec()
    }

    /// Cartesian vector `B k` for an integer coefficient vector.
    pub fn lattice_vector(&self, k: &[i64]) -> Vec<f64> {
        let u: Vec<f64> = k.iter().map(|&c| c as f64).collect();
        self.from_lattice(&u)
    }

    /// Representative of `x` in the fundamental cell `B [0,1)^n`.
    pub fn reduce(&self, x: &[f64]) -> Vec<f64> {
        let mut u = self.to_lattice(x);
        for c in u.iter_mut() {
            *c -= c.floor();
            if *c >= 1.0 {
                *c = 0.0;
            }
        }
        self.from_lattice(&u)
    }

    /// Smallest singular value of `B`, a lower bound for `|B k| / |k|`.
    pub fn min_stretch(&self) -> f64 {
        self.lattice.clone().svd(false, false).singular_values.min()
    }

    /// All `k` with `|c + B k| <= radius`.
    pub fn lattice_points_within(&self, center: &[f64], radius: f64) -> Vec<Vec<i64>> {
        let n = self.dim;
        let base: Vec<i64> = self.to_lattice(center).iter().map(|c| (-c).round() as i64).collect();
        let shifted = add(center, &self.lattice_vector(&base));
        let reach = ((radius + norm(&shifted)) / self.min_stretch()).ceil() as i64;
        let mut out = Vec::new();
        for k in box_points(n, reach) {
            let k: Vec<i64> = k.iter().zip(&base).map(|(a, b)| a + b).collect();
            if norm(&add(center, &self.lattice_vector(&k))) <= radius {
                out.push(k);
            }
        }
        out
    }

    /// Heat kernel of `H_0 = Δ/2` as a wrapped Gaussian theta sum.
    pub fn heat_kernel(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return invalid("heat kernel time must be positive");
        }
        self.check_point(x)?;
        self.check_point(y)?;
        let d = self.geodesic_segment(y, x)?.displacement;
        let d2 = dot(&d, &d);
        let radius = (d2 + 2.0 * t * THETA_CUTOFF).sqrt();
        let pref = (2.0 * std::f64::consts::PI * t).powf(-(self.dim as f64) / 2.0);
        let mut terms: Vec<f64> = self
            .lattice_points_within(&d, radius)
            .iter()
            .map(|k| {
                let v = add(&d, &self.lattice_vector(k));
                (-dot(&v, &v) / (2.0 * t)).exp()
            })
            .collect();
        terms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(pref * terms.iter().sum::<f64>())
    }

    /// `Σ_k exp(-t |2π B^{-T}(k + shift)|^2 / 2)` over the dual lattice.
    /// With `shift = ε/2` this is the per-component spinor heat trace.
    pub fn heat_trace(&self, t: f64, shift: &[f64]) -> Result<f64> {
        if !(t > 0.0) {
            return invalid("heat trace time must be positive");
        }
        if shift.len() != self.dim {
            return Err(Error::LengthMismatch { expected: self.dim, got: shift.len() });
        }
        Ok(self
            .dual_modes(t, shift)?
            .iter()
            .map(|(_, lam)| (-t * lam).exp())
            .sum())
    }

    /// Dual-lattice modes `(k, λ_k)` with `λ_k = |2π B^{-T}(k+shift)|^2/2`
    /// and `exp(-t λ_k)` above the theta cutoff.
    pub fn dual_modes(&self, t: f64, shift: &[f64]) -> Result<Vec<(Vec<i64>, f64)>> {
        if !(t > 0.0) {
            return invalid("mode cutoff time must be positive");
        }
        let dual = FlatTorus::new(self.dual())?;
        let two_pi = 2.0 * std::f64::consts::PI;
        let c = dual.from_lattice(shift);
        let radius = (2.0 * THETA_CUTOFF / t).sqrt() / two_pi;
        let mut modes: Vec<(Vec<i64>, f64)> = dual
            .lattice_points_within(&c, radius)
            .into_iter()
            .map(|k| {
                let v = add(&c, &dual.lattice_vector(&k));
                let lam = two_pi * two_pi * dot(&v, &v) / 2.0;
                (k, lam)
            })
            .collect();
        modes.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        Ok(modes)
    }

    /// Shortest displacement from `x` to `y` among all lattice translates.
    pub fn geodesic_segment(&self, x: &[f64], y: &[f64]) -> Result<Segment> {
        self.check_point(x)?;
        self.check_point(y)?;
        let raw: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        let base: Vec<i64> = self.to_lattice(&raw).iter().map(|c| (-c).round() as i64).collect();
        let start = add(&raw, &self.lattice_vector(&base));
        let r = norm(&start) * (1.0 + 1e-9) + 1e-300;
        let mut best: Option<(f64, Vec<i64>, Vec<f64>)> = None;
        let mut tie = false;
        let mut cands = self.lattice_points_within(&start, r);
        cands.iter_mut().for_each(|k| k.iter_mut().zip(&base).for_each(|(a, b)| *a += b));
        cands.sort();
        for k in cands {
            let d = add(&raw, &self.lattice_vector(&k));
            let l = dot(&d, &d);
            match &best {
                None => best = Some((l, k, d)),
                Some((bl, _, _)) => {
                    let scale = bl.max(1e-300);
                    if (l - bl).abs() <= TIE_TOL * scale {
                        tie = tie || l > 0.0 || *bl > 0.0;
                    } else if l < *bl {
                        best = Some((l, k, d));
                        tie = false;
                    }
                }
            }
        }
        let (_, shift, displacement) = best.expect("the rounded translate is always a candidate");
        Ok(Segment { start: x.to_vec(), displacement, shift, tie })
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch(self.dim, x.len()));
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point".into()));
        }
        Ok(())
    }

    /// Signed crossings `floor(u(t)) - floor(u(s))` of each lattice hyperplane
    /// family along the lift.
    pub fn crossings(&self, lift_s: &[f64], lift_t: &[f64]) -> Vec<i64> {
        let us = self.to_lattice(lift_s);
        let ut = self.to_lattice(lift_t);
        us.iter().zip(&ut).map(|(a, b)| b.floor() as i64 - a.floor() as i64).collect()
    }

    /// Spin sign `Π (-1)^{ε_i w_i}` for winding numbers `w`.
    pub fn spin_sign(&self, w: &[i64]) -> f64 {
        let odd = self
            .spin
            .iter()
            .zip(w)
            .filter(|(e, k)| **e == 1 && k.rem_euclid(2) == 1)
            .count();
        if odd % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Spinor parallel transport from time `s` to time `t` along a polygon
    /// curve. On a flat torus it is a scalar sign times the identity.
    pub fn spin_parallel_transport(&self, curve: &impl Curve, s: f64, t: f64) -> Result<CliffordElement> {
        let w = self.crossings(&curve.lift_at(s)?, &curve.lift_at(t)?);
        Ok(CliffordElement::scalar(self.dim, self.spin_sign(&w)))
    }

    /// Associated polygon loop through the values at the partition nodes.
    /// Returns the loop and the number of tied geodesic choices.
    pub fn polygonize(&self, lp: &DiscreteLoop, partition: &[f64]) -> Result<(DiscreteLoop, usize)> {
        check_times(partition, false)?;
        let mut lifts = Vec::with_capacity(partition.len() * self.dim);
        let mut ties = 0;
        let first = lp.point_at(self, partition[0])?;
        lifts.extend_from_slice(&first);
        let mut prev = first.clone();
        let mut prev_pt = first;
        let m = partition.len();
        for j in 1..=m {
            let pt = if j == m { lp.point_at(self, partition[0])? } else { lp.point_at(self, partition[j])? };
            let seg = self.geodesic_segment(&prev_pt, &pt)?;
            ties += seg.tie as usize;
            let next = add(&prev, &seg.displacement);
            if j < m {
                lifts.extend_from_slice(&next);
            } else {
                let gap: Vec<f64> = next.iter().zip(&lifts[..self.dim]).map(|(a, b)| a - b).collect();
                let lam: Vec<i64> = self.to_lattice(&gap).iter().map(|c| c.round() as i64).collect();
                let out = DiscreteLoop::new(self, partition.to_vec(), lifts, lam)?;
                return Ok((out, ties));
            }
            prev = next;
            prev_pt = pt;
        }
        unreachable!("partition is non-empty")
    }

    /// `E = ½ ∫ |γ'|^2`, exact on polygons.
    pub fn energy(&self, lp: &DiscreteLoop) -> f64 {
        (0..lp.len())
            .map(|j| {
                let d = lp.segment_displacement(j);
                dot(&d, &d) / (2.0 * lp.segment_duration(j))
            })
            .sum()
    }

    /// `ω[v,w] = ∫ <v, ∇_γ' w>` for fields linear between the loop nodes,
    /// given by their values at the nodes (Cartesian components).
    pub fn canonical_two_form(&self, lp: &DiscreteLoop, v: &[Vec<f64>], w: &[Vec<f64>]) -> Result<f64> {
        let m = lp.len();
        for f in [v, w] {
            if f.len() != m {
                return Err(Error::LengthMismatch { expected: m, got: f.len() });
            }
            for x in f {
                self.check_point(x)?;
            }
        }
        let mut s = 0.0;
        for j in 0..m {
            let k = (j + 1) % m;
            for i in 0..self.dim {
                s += 0.5 * (v[j][i] + v[k][i]) * (w[k][i] - w[j][i]);
            }
        }
        Ok(s)
    }
}

/// Geodesic segment in the universal cover.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Vec<f64>,
    pub displacement: Vec<f64>,
    /// Lattice coefficients added to the raw difference `y - x`.
    pub shift: Vec<i64>,
    /// Set when another translate had the same length within tolerance.
    pub tie: bool,
}

/// Curves with a piecewise-linear lift to the universal cover.
pub trait Curve {
    fn dim(&self) -> usize;
    fn lift_at(&self, t: f64) -> Result<Vec<f64>>;
}

/// Loop sampled on a cyclic grid `t_0 < ... < t_{m-1}` in `[0,1)`, stored
/// through lifts. The segment after the last node ends at `lift_0 + B λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLoop {
    dim: usize,
    times: Vec<f64>,
    lifts: Vec<f64>,
    closing: Vec<i64>,
    closing_vec: Vec<f64>,
}

fn check_times(times: &[f64], closed_end: bool) -> Result<()> {
    if times.is_empty() {
        return invalid("empty time grid");
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > 1.0 || (!closed_end && *t >= 1.0)) {
        return invalid("grid times out of range");
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("grid times must be strictly increasing");
    }
    Ok(())
}

impl DiscreteLoop {
    pub fn new(torus: &FlatTorus, times: Vec<f64>, lifts: Vec<f64>, closing: Vec<i64>) -> Result<Self> {
        check_times(&times, false)?;
        let n = torus.dim();
        if lifts.len() != times.len() * n {
            return Err(Error::LengthMismatch { expected: times.len() * n, got: lifts.len() });
        }
        if closing.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: closing.len() });
        }
        if lifts.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("loop lift".into()));
        }
        let closing_vec = torus.lattice_vector(&closing);
        Ok(Self { dim: n, times, lifts, closing, closing_vec })
    }

    /// Uniform grid `j/m` with the given lifts.
    pub fn uniform(torus: &FlatTorus, lifts: Vec<f64>, closing: Vec<i64>) -> Result<Self> {
        let m = lifts.len() / torus.dim().max(1);
        Self::new(torus, uniform_grid(m), lifts, closing)
    }

    /// Constant loop at `x` on a uniform grid of size `m`.
    pub fn constant(torus: &FlatTorus, x: &[f64], m: usize) -> Result<Self> {
        let lifts = x.iter().copied().cycle().take(m * x.len()).collect();
        Self::uniform(torus, lifts, vec![0; torus.dim()])
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn lift(&self, j: usize) -> &[f64] {
        &self.lifts[j * self.dim..(j + 1) * self.dim]
    }

    pub fn lifts(&self) -> &[f64] {
        &self.lifts
    }

    pub fn closing(&self) -> &[i64] {
        &self.closing
    }

    /// Torus point at node `j`, reduced to the fundamental cell.
    pub fn point(&self, torus: &FlatTorus, j: usize) -> Vec<f64> {
        torus.reduce(self.lift(j))
    }

    /// Lift of the node after `j`, with the closing translation at the end.
    pub fn next_lift(&self, j: usize) -> Vec<f64> {
        if j + 1 < self.len() {
            self.lift(j + 1).to_vec()
        } else {
            add(self.lift(0), &self.closing_vec)
        }
    }

    pub fn segment_displacement(&self, j: usize) -> Vec<f64> {
        let a = self.lift(j);
        self.next_lift(j).iter().zip(a).map(|(x, y)| x - y).collect()
    }

    pub fn segment_duration(&self, j: usize) -> f64 {
        if j + 1 < self.len() {
            self.times[j + 1] - self.times[j]
        } else {
            1.0 + self.times[0] - self.times[j]
        }
    }

    /// Torus point at an arbitrary time.
    pub fn point_at(&self, torus: &FlatTorus, t: f64) -> Result<Vec<f64>> {
        Ok(torus.reduce(&self.lift_at(t)?))
    }

    /// Loop rotated by `s`: `(s·γ)(t) = γ(t + s)`, resampled on the same
    /// relative grid so that node `j` sits at `t_j - s` modulo 1.
    pub fn rotate(&self, torus: &FlatTorus, s: f64) -> Result<Self> {
        let m = self.len();
        let n = self.dim;
        let mut nodes: Vec<(f64, Vec<f64>)> = (0..m)
            .map(|j| {
                let t = self.times[j] - s;
                let wrap = t.floor();
                let mut lift = self.lift(j).to_vec();
                // a node moved forward by one period picks up the closing vector
                let k = -wrap as i64;
                for (x, c) in lift.iter_mut().zip(&self.closing_vec) {
                    *x += k as f64 * c;
                }
                (t - wrap, lift)
            })
            .collect();
        nodes.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let times = nodes.iter().map(|(t, _)| if *t >= 1.0 { 0.0 } else { *t }).collect();
        let lifts = nodes.into_iter().flat_map(|(_, l)| l).collect::<Vec<_>>();
        debug_assert_eq!(lifts.len(), m * n);
        Self::new(torus, times, lifts, self.closing.clone())
    }
}

impl Curve for DiscreteLoop {
    fn dim(&self) -> usize {
        self.dim
    }

    /// Lift at time `t` in `[0,1]`, continuous across the grid; times before
    /// `t_0` belong to the closing segment shifted back by one period.
    fn lift_at(&self, t: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&t) {
            return invalid("time outside [0,1]");
        }
        let m = self.len();
        let t0 = self.times[0];
        let (tt, shift) = if t < t0 { (t + 1.0, -1.0) } else { (t, 0.0) };
        let j = match self.times.partition_point(|&x| x <= tt) {
            0 => m - 1,
            p => p - 1,
        };
        let a = self.lift(j);
        let b = self.next_lift(j);
        let s = (tt - self.times[j]) / self.segment_duration(j);
        Ok(a.iter()
            .zip(&b)
            .zip(&self.closing_vec)
            .map(|((x, y), c)| x + s * (y - x) + shift * c)
            .collect())
    }
}

/// Path on a grid `0 = t_0 < ... < t_m = 1` with free endpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    dim: usize,
    times: Vec<f64>,
    lifts: Vec<f64>,
}

impl DiscretePath {
    pub fn new(torus: &FlatTorus, times: Vec<f64>, lifts: Vec<f64>) -> Result<Self> {
        check_times(&times, true)?;
        if times.len() < 2 || times[0] != 0.0 || *times.last().unwrap() != 1.0 {
            return invalid("path grid must run from 0 to 1");
        }
        let n = torus.dim();
        if lifts.len() != times.len() * n {
            return Err(Error::LengthMismatch { expected: times.len() * n, got: lifts.len() });
        }
        Ok(Self { dim: n, times, lifts })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn lift(&self, j: usize) -> &[f64] {
        &self.lifts[j * self.dim..(j + 1) * self.dim]
    }

    pub fn point(&self, torus: &FlatTorus, j: usize) -> Vec<f64> {
        torus.reduce(self.lift(j))
    }

    /// Close a path whose endpoints agree on the torus into a loop.
    pub fn to_loop(&self, torus: &FlatTorus) -> Result<DiscreteLoop> {
        let m = self.len() - 1;
        let gap: Vec<f64> = self.lift(m).iter().zip(self.lift(0)).map(|(a, b)| a - b).collect();
        let u = torus.to_lattice(&gap);
        let lam: Vec<i64> = u.iter().map(|c| c.round() as i64).collect();
        if u.iter().zip(&lam).any(|(a, b)| (a - *b as f64).abs() > 1e-9) {
            return invalid("path endpoints differ on the torus");
        }
        DiscreteLoop::new(torus, self.times[..m].to_vec(), self.lifts[..m * self.dim].to_vec(), lam)
    }
}

impl Curve for DiscretePath {
    fn dim(&self) -> usize {
        self.dim
    }

    fn lift_at(&self, t: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&t) {
            return invalid("time outside [0,1]");
        }
        let j = self.times.partition_point(|&x| x <= t).clamp(1, self.len() - 1) - 1;
        let a = self.lift(j);
        let b = self.lift(j + 1);
        let s = (t - self.times[j]) / (self.times[j + 1] - self.times[j]);
        Ok(a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect())
    }
}

pub fn uniform_grid(m: usize) -> Vec<f64> {
    (0..m).map(|j| j as f64 / m as f64).collect()
}

/// Integer points of the cube `[-r, r]^n`, lexicographic.
pub fn box_points(n: usize, r: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (-r..=r).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out
}

pub(crate) fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
