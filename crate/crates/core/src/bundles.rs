//! Twist bundles on flat tori and gauge maps on the circle.
//!
//! A twist bundle is a direct sum of flux line bundles, each with a parity,
//! optionally expressed in a rotated constant frame `W`. On `T^2` with lattice
//! coordinates `(u, v)` the flux-`k` summand carries the Landau gauge
//! `A = iβ u dv`, `β = 2πk`, so that `F = iβ du∧dv = i b dx∧dy` with
//! `b = 2πk / det B`. Sections obey `ψ(u+1, v) = e^{-iβv} ψ(u, v)` and are
//! periodic in `v`. Transport solves `(d + A)ψ = 0` along the lift.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clifford::{CliffordMatrix, ComplexClifford};
use crate::error::{invalid, Error, Result};
use crate::fields::TrigPoly;
use crate::geometry::{Curve, DiscreteLoop, FlatTorus};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn is_unitary(w: &DMatrix<Complex64>) -> bool {
    let n = w.nrows();
    w.ncols() == n && (w.adjoint() * w - DMatrix::identity(n, n)).iter().all(|z| z.norm() < 1e-12)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSummand {
    pub flux: i64,
    /// 0 for even, 1 for odd.
    pub parity: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistBundle {
    base: FlatTorus,
    summands: Vec<LineSummand>,
    frame: DMatrix<Complex64>,
}

impl TwistBundle {
    pub fn new(base: &FlatTorus, summands: Vec<LineSummand>) -> Result<Self> {
        if summands.is_empty() {
            return invalid("bundle needs at least one summand");
        }
        if summands.iter().any(|s| s.flux != 0) && base.dim() != 2 {
            return Err(Error::Unsupported("nonzero flux requires a 2-torus".into()));
        }
        if summands.iter().any(|s| s.parity > 1) {
            return invalid("parity must be 0 or 1");
        }
        let r = summands.len();
        Ok(Self { base: base.clone(), summands, frame: DMatrix::identity(r, r) })
    }

    /// Trivial graded bundle `C^{p|q}`.
    pub fn trivial(base: &FlatTorus, p: usize, q: usize) -> Result<Self> {
        let mut s = vec![LineSummand { flux: 0, parity: 0 }; p];
        s.extend(vec![LineSummand { flux: 0, parity: 1 }; q]);
        Self::new(base, s)
    }

    /// Even line bundle of flux `k` on a 2-torus.
    pub fn flux_line(base: &FlatTorus, k: i64) -> Result<Self> {
        Self::new(base, vec![LineSummand { flux: k, parity: 0 }])
    }

    /// Express the bundle in the constant unitary frame `w`.
    pub fn with_frame(mut self, w: DMatrix<Complex64>) -> Result<Self> {
        if w.nrows() != self.rank() || !is_unitary(&w) {
            return invalid("frame must be a unitary matrix of the bundle rank");
        }
        self.frame = w;
        Ok(self)
    }

    pub fn direct_sum(&self, other: &Self) -> Result<Self> {
        if self.base != other.base {
            return invalid("bundles live on different bases");
        }
        let mut s = self.summands.clone();
        s.extend_from_slice(&other.summands);
        let r = s.len();
        let mut w = DMatrix::zeros(r, r);
        w.view_mut((0, 0), (self.rank(), self.rank())).copy_from(&self.frame);
        w.view_mut((self.rank(), self.rank()), (other.rank(), other.rank())).copy_from(&other.frame);
        Self::new(&self.base, s)?.with_frame(w)
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.base != other.base {
            return invalid("bundles live on different bases");
        }
        let mut s = Vec::new();
        for a in &self.summands {
            for b in &other.summands {
                s.push(LineSummand { flux: a.flux + b.flux, parity: (a.parity + b.parity) % 2 });
            }
        }
        let w = self.frame.kronecker(&other.frame);
        Self::new(&self.base, s)?.with_frame(w)
    }

    /// Complex conjugate bundle (fluxes negated).
    pub fn conjugate(&self) -> Self {
        let s = self.summands.iter().map(|x| LineSummand { flux: -x.flux, parity: x.parity }).collect();
        Self { base: self.base.clone(), summands: s, frame: self.frame.map(|z| z.conj()) }
    }

    pub fn base(&self) -> &FlatTorus {
        &self.base
    }

    pub fn rank(&self) -> usize {
        self.summands.len()
    }

    pub fn summands(&self) -> &[LineSummand] {
        &self.summands
    }

    pub fn parities(&self) -> Vec<u8> {
        self.summands.iter().map(|s| s.parity).collect()
    }

    pub fn frame(&self) -> &DMatrix<Complex64> {
        &self.frame
    }

    /// Superdimension `p - q`.
    pub fn superdimension(&self) -> i64 {
        self.summands.iter().map(|s| if s.parity == 0 { 1 } else { -1 }).sum()
    }

    /// Cartesian field strength `b_j = 2π k_j / det B` per summand.
    pub fn field_strengths(&self) -> Vec<f64> {
        if self.base.dim() != 2 {
            return vec![0.0; self.rank()];
        }
        let det = self.base.lattice().determinant();
        self.summands.iter().map(|s| 2.0 * PI * s.flux as f64 / det).collect()
    }

    fn in_frame(&self, d: &[Complex64]) -> DMatrix<Complex64> {
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d));
        &self.frame * diag * self.frame.adjoint()
    }

    fn segment_phases(&self, a: &[f64], b: &[f64]) -> Vec<Complex64> {
        if self.base.dim() != 2 {
            return vec![c(1.0, 0.0); self.rank()];
        }
        let ua = self.base.to_lattice(a);
        let ub = self.base.to_lattice(b);
        let area = 0.5 * (ua[0] + ub[0]) * (ub[1] - ua[1]);
        self.summands
            .iter()
            .map(|s| Complex64::from_polar(1.0, -2.0 * PI * s.flux as f64 * area))
            .collect()
    }

    /// Exact transport along the straight lift from `a` to `b`, in the
    /// trivialization of the universal cover.
    pub fn segment_holonomy(&self, a: &[f64], b: &[f64]) -> DMatrix<Complex64> {
        self.in_frame(&self.segment_phases(a, b))
    }

    /// Identification of the fiber over `x + Bλ` with the fiber over `x`.
    pub fn closing_factor(&self, x: &[f64], lam: &[i64]) -> DMatrix<Complex64> {
        self.in_frame(&self.closing_phases(x, lam))
    }

    fn closing_phases(&self, x: &[f64], lam: &[i64]) -> Vec<Complex64> {
        if self.base.dim() != 2 {
            return vec![c(1.0, 0.0); self.rank()];
        }
        let v0 = self.base.to_lattice(x)[1];
        self.summands
            .iter()
            .map(|s| Complex64::from_polar(1.0, 2.0 * PI * s.flux as f64 * lam[0] as f64 * v0))
            .collect()
    }

    /// Holonomy around the polygon loop, based at node 0.
    pub fn loop_holonomy(&self, lp: &DiscreteLoop) -> DMatrix<Complex64> {
        let mut ph = vec![c(1.0, 0.0); self.rank()];
        for j in 0..lp.len() {
            let next = lp.next_lift(j);
            for (p, q) in ph.iter_mut().zip(self.segment_phases(lp.lift(j), &next)) {
                *p *= q;
            }
        }
        for (p, q) in ph.iter_mut().zip(self.closing_phases(lp.lift(0), lp.closing())) {
            *p *= q;
        }
        self.in_frame(&ph)
    }

    /// Transport along the curve between times `s <= t` (no closing);
    /// `nodes` are the kink times of the polygon.
    pub fn transport(&self, curve: &impl Curve, s: f64, t: f64, nodes: &[f64]) -> Result<DMatrix<Complex64>> {
        let mut ph = vec![c(1.0, 0.0); self.rank()];
        let mut pts: Vec<f64> = nodes.iter().copied().filter(|&x| x > s && x < t).collect();
        pts.push(t);
        let mut a = curve.lift_at(s)?;
        for &q in &pts {
            let b = curve.lift_at(q)?;
            for (p, z) in ph.iter_mut().zip(self.segment_phases(&a, &b)) {
                *p *= z;
            }
            a = b;
        }
        Ok(self.in_frame(&ph))
    }

    /// Coefficient of `dx ∧ dy`; zero below dimension 2.
    pub fn curvature_at(&self, _x: &[f64]) -> DMatrix<Complex64> {
        let b = self.field_strengths();
        self.in_frame(&b.iter().map(|&x| c(0.0, x)).collect::<Vec<_>>())
    }

    /// Clifford image `c(F) = F_12 e_1 e_2` as an endomorphism of `Cl_n ⊗ V`.
    pub fn clifford_curvature(&self) -> CliffordMatrix {
        let n = self.base.dim();
        if n < 2 {
            return CliffordMatrix::zero(n, self.rank());
        }
        let e12 = ComplexClifford::monomial(n, 0b11, c(1.0, 0.0));
        CliffordMatrix::kron(&e12, &self.curvature_at(&[]))
    }

    /// `str_V(exp(-T F))`: degree-0 and degree-2 (`dx∧dy`) coefficients.
    pub fn chern_character_form(&self, t: f64) -> ComplexForm {
        let n = self.base.dim();
        let mut f = ComplexForm::zero(n);
        let b = self.field_strengths();
        for (s, bj) in self.summands.iter().zip(b) {
            let sign = if s.parity == 0 { 1.0 } else { -1.0 };
            f.coeffs[0] += sign;
            if n >= 2 {
                f.coeffs[0b11] += c(0.0, -sign * t * bj);
            }
        }
        f
    }

    /// Exact first variation `d/dε hol(γ + εv)` at `ε = 0` for a field `v`
    /// linear between the nodes: `-hol · ∫ F(v, γ')`.
    pub fn holonomy_variation(&self, lp: &DiscreteLoop, v: &[Vec<f64>]) -> Result<DMatrix<Complex64>> {
        let m = lp.len();
        if v.len() != m {
            return Err(Error::LengthMismatch { expected: m, got: v.len() });
        }
        let hol = self.loop_holonomy(lp);
        if self.base.dim() != 2 {
            return Ok(DMatrix::zeros(self.rank(), self.rank()));
        }
        let mut s = 0.0;
        for j in 0..m {
            let d = lp.segment_displacement(j);
            let vbar: Vec<f64> = (0..2).map(|i| 0.5 * (v[j][i] + v[(j + 1) % m][i])).collect();
            s += vbar[0] * d[1] - vbar[1] * d[0];
        }
        let b = self.field_strengths();
        let f = self.in_frame(&b.iter().map(|&x| c(0.0, x * s)).collect::<Vec<_>>());
        Ok(-(hol * f))
    }
}

/// Constant-coefficient complex differential form, indexed by bitmask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexForm {
    pub dim: usize,
    pub coeffs: Vec<Complex64>,
}

impl ComplexForm {
    pub fn zero(dim: usize) -> Self {
        Self { dim, coeffs: vec![c(0.0, 0.0); 1 << dim] }
    }

    pub fn top(&self) -> Complex64 {
        self.coeffs[(1 << self.dim) - 1]
    }

    /// `∫_X` of the top-degree part in the coordinate orientation of `R^n`,
    /// the one the Clifford generators and the Landau spectra use.
    pub fn integrate(&self, torus: &FlatTorus) -> Complex64 {
        self.top() * torus.volume()
    }
}

/// Scalar-valued potential `V(x) = Σ_i f_i(x) M_i` with real `f_i` and
/// self-adjoint `M_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSpec {
    terms: Vec<(TrigPoly, CliffordMatrix)>,
}

/// Adjoint of a Clifford matrix under the inner product making monomials
/// orthonormal: `e_I^* = (-1)^{|I|(|I|+1)/2} e_I`.
pub fn adjoint(m: &CliffordMatrix) -> CliffordMatrix {
    let r = m.rank();
    let n = m.dim();
    let mut out = CliffordMatrix::zero(n, r);
    for i in 0..r {
        for j in 0..r {
            let a = m.entry(j, i);
            let mut b = ComplexClifford::zero(n);
            for (mask, z) in a.coeffs().iter().enumerate() {
                let k = mask.count_ones() as usize;
                let s = if (k * (k + 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
                b.set(mask, z.conj() * s);
            }
            *out.entry_mut(i, j) = b;
        }
    }
    out
}

impl PotentialSpec {
    pub fn new(terms: Vec<(TrigPoly, CliffordMatrix)>) -> Result<Self> {
        for (f, m) in &terms {
            if !f.is_real() {
                return invalid("potential profiles must be real");
            }
            if adjoint(m).max_abs_diff(m) > 1e-12 {
                return invalid("potential must be self-adjoint");
            }
        }
        Ok(Self { terms })
    }

    pub fn zero() -> Self {
        Self { terms: vec![] }
    }

    /// Scalar potential `f(x) · 1`.
    pub fn scalar(f: TrigPoly, dim: usize, rank: usize) -> Result<Self> {
        Self::new(vec![(f, CliffordMatrix::identity(dim, rank))])
    }

    pub fn terms(&self) -> &[(TrigPoly, CliffordMatrix)] {
        &self.terms
    }

    pub fn eval(&self, torus: &FlatTorus, x: &[f64], dim: usize, rank: usize) -> CliffordMatrix {
        let u = torus.to_lattice(x);
        let mut out = CliffordMatrix::zero(dim, rank);
        for (f, m) in &self.terms {
            out = out.add(&m.scale(c(f.eval_lattice(&u).re, 0.0)));
        }
        out
    }

    /// No term depends on the base point.
    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|(f, _)| f.order() == 0)
    }

    /// Upper bound of the operator norm over the torus.
    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|(f, m)| f.sup_bound() * op_norm_bound(m)).sum()
    }
}

/// Bound for the operator norm: Σ over entries of Σ |coeff| (each monomial is
/// an isometry), summed over the larger of row and column sums.
pub fn op_norm_bound(m: &CliffordMatrix) -> f64 {
    let r = m.rank();
    let l1 = |a: &ComplexClifford| a.coeffs().iter().map(|z| z.norm()).sum::<f64>();
    let rows = (0..r).map(|i| (0..r).map(|j| l1(m.entry(i, j))).sum::<f64>()).fold(0.0, f64::max);
    let cols = (0..r).map(|j| (0..r).map(|i| l1(m.entry(i, j))).sum::<f64>()).fold(0.0, f64::max);
    (rows * cols).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    /// Strang substeps per polygon segment.
    pub substeps: usize,
    /// Combine `S` and `2S` substeps to cancel the `h^2` term.
    pub richardson: bool,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self { substeps: 8, richardson: true }
    }
}

/// Building blocks of the Strang product for one substep: first and second
/// half transports and the midpoint potential.
struct Step {
    first: CliffordMatrix,
    second: CliffordMatrix,
    v: CliffordMatrix,
    h: f64,
}

fn steps(bundle: &TwistBundle, lp: &DiscreteLoop, potential: &PotentialSpec, substeps: usize) -> Vec<Step> {
    let n = bundle.base().dim();
    let r = bundle.rank();
    let mut out = Vec::with_capacity(lp.len() * substeps);
    for j in 0..lp.len() {
        let a = lp.lift(j).to_vec();
        let b = lp.next_lift(j);
        let dur = lp.segment_duration(j);
        let at = |s: f64| -> Vec<f64> { a.iter().zip(&b).map(|(x, y)| x + s * (y - x)).collect() };
        for k in 0..substeps {
            let s0 = k as f64 / substeps as f64;
            let s1 = (k + 1) as f64 / substeps as f64;
            let sm = 0.5 * (s0 + s1);
            let (p0, pm, p1) = (at(s0), at(sm), at(s1));
            out.push(Step {
                first: CliffordMatrix::from_matrix(n, &bundle.segment_holonomy(&p0, &pm)),
                second: CliffordMatrix::from_matrix(n, &bundle.segment_holonomy(&pm, &p1)),
                v: potential.eval(bundle.base(), &bundle.base().reduce(&pm), n, r),
                h: dur / substeps as f64,
            });
        }
    }
    out
}

fn closing(bundle: &TwistBundle, lp: &DiscreteLoop) -> CliffordMatrix {
    let n = bundle.base().dim();
    let torus = bundle.base();
    let sign = torus.spin_sign(lp.closing());
    CliffordMatrix::from_matrix(n, &bundle.closing_factor(lp.lift(0), lp.closing())).scale(c(sign, 0.0))
}

fn strang(bundle: &TwistBundle, lp: &DiscreteLoop, t: f64, potential: &PotentialSpec, substeps: usize) -> CliffordMatrix {
    let torus = bundle.base();
    let n = torus.dim();
    let r = bundle.rank();
    let mut u = CliffordMatrix::identity(n, r);
    // a constant potential needs one exponential per distinct step length
    let fixed = potential.is_constant().then(|| potential.eval(torus, &vec![0.0; n], n, r));
    let mut cache: Option<(f64, CliffordMatrix)> = None;
    for j in 0..lp.len() {
        let a = lp.lift(j).to_vec();
        let b = lp.next_lift(j);
        let h = lp.segment_duration(j) / substeps as f64;
        let at = |s: f64| -> Vec<f64> { a.iter().zip(&b).map(|(x, y)| x + s * (y - x)).collect() };
        for k in 0..substeps {
            let s0 = k as f64 / substeps as f64;
            let s1 = (k + 1) as f64 / substeps as f64;
            let sm = 0.5 * (s0 + s1);
            let (p0, pm, p1) = (at(s0), at(sm), at(s1));
            let first = CliffordMatrix::from_matrix(n, &bundle.segment_holonomy(&p0, &pm));
            let second = CliffordMatrix::from_matrix(n, &bundle.segment_holonomy(&pm, &p1));
            let e = match (&fixed, &cache) {
                (Some(_), Some((hc, e))) if *hc == h => e.clone(),
                (Some(v), _) => {
                    let e = v.scale(c(-t * h, 0.0)).exp();
                    cache = Some((h, e.clone()));
                    e
                }
                (None, _) => potential.eval(torus, &torus.reduce(&pm), n, r).scale(c(-t * h, 0.0)).exp(),
            };
            u = second.mul(&e.mul(&first.mul(&u)));
        }
    }
    closing(bundle, lp).mul(&u)
}

/// `U_T(1, γ)` on `Σ ⊗ V` along a polygon loop: exact segment transport
/// interleaved with potential steps, then the closing identification and the
/// spin sign.
pub fn path_ordered_exponential(
    bundle: &TwistBundle,
    lp: &DiscreteLoop,
    t: f64,
    potential: &PotentialSpec,
    cfg: &OdeConfig,
) -> Result<CliffordMatrix> {
    if cfg.substeps == 0 {
        return invalid("need at least one substep");
    }
    if t * potential.sup_bound() > 50.0 {
        return Err(Error::Budget("potential too large for the splitting budget".into()));
    }
    let coarse = strang(bundle, lp, t, potential, cfg.substeps);
    if !cfg.richardson {
        return Ok(coarse);
    }
    let fine = strang(bundle, lp, t, potential, 2 * cfg.substeps);
    Ok(fine.scale(c(4.0 / 3.0, 0.0)).add(&coarse.scale(c(-1.0 / 3.0, 0.0))))
}

/// Orders `0..=n_max` of the expansion of the (non-extrapolated) Strang
/// product in powers of `T`: the truncated path-ordered series on the
/// substep grid.
pub fn path_ordered_series(
    bundle: &TwistBundle,
    lp: &DiscreteLoop,
    t: f64,
    potential: &PotentialSpec,
    substeps: usize,
    n_max: usize,
) -> Vec<CliffordMatrix> {
    let n = bundle.base().dim();
    let r = bundle.rank();
    let mut orders = vec![CliffordMatrix::zero(n, r); n_max + 1];
    orders[0] = CliffordMatrix::identity(n, r);
    for st in steps(bundle, lp, potential, substeps) {
        let x = st.v.scale(c(-t * st.h, 0.0));
        let mut powers = vec![CliffordMatrix::identity(n, r)];
        for j in 1..=n_max {
            let p = powers[j - 1].mul(&x).scale(c(1.0 / j as f64, 0.0));
            powers.push(p);
        }
        let moved: Vec<CliffordMatrix> = orders.iter().map(|a| st.first.mul(a)).collect();
        let mut next = vec![CliffordMatrix::zero(n, r); n_max + 1];
        for (total, slot) in next.iter_mut().enumerate() {
            for j in 0..=total {
                *slot = slot.add(&powers[j].mul(&moved[total - j]));
            }
            *slot = st.second.mul(slot);
        }
        orders = next;
    }
    let cl = closing(bundle, lp);
    orders.iter().map(|a| cl.mul(a)).collect()
}

/// Tail bound for the series truncated after order `n_max`:
/// `Σ_{N > n_max} (T‖V‖)^N / N!`.
pub fn series_tail_bound(t: f64, potential: &PotentialSpec, n_max: usize) -> f64 {
    let x = t * potential.sup_bound();
    let mut term = 1.0;
    let mut tail = 0.0;
    for k in 1..=n_max + 60 {
        term *= x / k as f64;
        if k > n_max {
            tail += term;
        }
    }
    tail
}

/// Map `g: S^1 -> U_r`, `g(x) = W diag(exp(2πi m_j x / L)) W^*` on a circle of
/// length `L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeMap {
    length: f64,
    windings: Vec<i64>,
    frame: DMatrix<Complex64>,
}

impl GaugeMap {
    pub fn circle_winding(length: f64, m: i64) -> Result<Self> {
        Self::diagonal(length, vec![m])
    }

    pub fn diagonal(length: f64, windings: Vec<i64>) -> Result<Self> {
        if !(length > 0.0) {
            return invalid("circle length must be positive");
        }
        if windings.is_empty() {
            return invalid("gauge map needs rank at least 1");
        }
        let r = windings.len();
        Ok(Self { length, windings, frame: DMatrix::identity(r, r) })
    }

    pub fn with_frame(mut self, w: DMatrix<Complex64>) -> Result<Self> {
        if w.nrows() != self.rank() || !is_unitary(&w) {
            return invalid("frame must be unitary of the gauge rank");
        }
        self.frame = w;
        Ok(self)
    }

    pub fn rank(&self) -> usize {
        self.windings.len()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn windings(&self) -> &[i64] {
        &self.windings
    }

    pub fn frame(&self) -> &DMatrix<Complex64> {
        &self.frame
    }

    /// Total winding `Σ m_j`.
    pub fn degree(&self) -> i64 {
        self.windings.iter().sum()
    }

    fn in_frame(&self, d: Vec<Complex64>) -> DMatrix<Complex64> {
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d));
        &self.frame * diag * self.frame.adjoint()
    }

    pub fn eval(&self, x: f64) -> DMatrix<Complex64> {
        let l = self.length;
        self.in_frame(self.windings.iter().map(|&m| Complex64::from_polar(1.0, 2.0 * PI * m as f64 * x / l)).collect())
    }

    /// `ω = g^{-1} dg`, coefficient of `dx`.
    pub fn maurer_cartan(&self, _x: f64) -> DMatrix<Complex64> {
        let l = self.length;
        self.in_frame(self.windings.iter().map(|&m| c(0.0, 2.0 * PI * m as f64 / l)).collect())
    }

    /// Pointwise product `g h` of commuting maps (same frame).
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.frame != other.frame || self.rank() != other.rank() || self.length != other.length {
            return invalid("maps do not commute in a shared frame");
        }
        let w = self.windings.iter().zip(&other.windings).map(|(a, b)| a + b).collect();
        Ok(Self { length: self.length, windings: w, frame: self.frame.clone() })
    }

    pub fn inverse(&self) -> Self {
        Self { length: self.length, windings: self.windings.iter().map(|m| -m).collect(), frame: self.frame.clone() }
    }

    /// `Σ_N T^N N!/(2N+1)! tr(ω^{2N+1})`, truncated at the base dimension
    /// (only `N = 0` on the circle). Indexed by bitmask.
    pub fn odd_chern_character(&self, _t: f64) -> ComplexForm {
        let mut f = ComplexForm::zero(1);
        f.coeffs[1] = self.maurer_cartan(0.0).trace();
        f
    }
}

/// `∫_{S^1} ch_T(g)`.
pub fn integrate_odd_chern(g: &GaugeMap, t: f64) -> Complex64 {
    g.odd_chern_character(t).coeffs[1] * g.length()
}
