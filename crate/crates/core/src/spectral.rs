//! Truncated spectral data of Dirac operators on flat tori and circles.
//!
//! Complex spinors: `Σ_C` has rank `2^{⌊n/2⌋}`, Clifford multiplication by
//! `dx` on the circle is `-i`, so the circle Dirac operator is `-i d/dx`.
//! In even dimensions `plus`/`minus` count the two chiral halves of each
//! `D²` eigenspace (with the bundle grading folded in); in odd dimensions
//! eigenvalues are signed and `minus` is zero.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bundles::{GaugeMap, TwistBundle};
use crate::clifford::CliffordElement;
use crate::error::{invalid, Error, Result};
use crate::fields::{FormField, TrigPoly};
use crate::geometry::{box_points, FlatTorus};
use crate::phases;

/// Relative size of neglected modes tolerated by trace evaluations.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// Exponent beyond which a heat factor `exp(-x)` is dropped.
const PRUNE: f64 = 40.0;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn unit_gauss(n: usize) -> Result<Vec<(f64, f64)>> {
    let n = NonZeroUsize::new(n).ok_or_else(|| Error::InvalidArgument("need at least one node".into()))?;
    let rule = GaussLegendre::new(n);
    Ok(rule.as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub eigenvalue: f64,
    pub plus: usize,
    pub minus: usize,
}

/// How the neglected part of the spectrum is bounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Tail {
    /// Excluded modes of shell `r > cutoff` have `D² >= (2π (r - 1/2) s)²`
    /// and number at most `mult · 2n (2r+1)^{n-1}`.
    Shells { dim: usize, cutoff: i64, stretch: f64, mult: f64 },
    /// Excluded Landau levels `j > levels` with energies `>= 2|b| j`.
    Landau { levels: usize, field: f64, mult: f64 },
}

impl Tail {
    fn bound(&self, t: f64) -> f64 {
        let mut s = 0.0;
        match *self {
            Tail::Shells { dim, cutoff, stretch, mult } => {
                for r in cutoff + 1..cutoff + 400 {
                    let e = (2.0 * PI * (r as f64 - 0.5) * stretch).powi(2);
                    let count = 2.0 * dim as f64 * ((2 * r + 1) as f64).powi(dim as i32 - 1);
                    let term = mult * count * (-t * e / 2.0).exp();
                    s += term;
                    if term < 1e-300 {
                        break;
                    }
                }
            }
            Tail::Landau { levels, field, mult } => {
                for j in levels + 1..levels + 100_000 {
                    let term = 2.0 * mult * (-t * field.abs() * j as f64).exp();
                    s += term;
                    if term < 1e-300 {
                        break;
                    }
                }
            }
        }
        s
    }
}

/// Truncated spectrum of a Dirac operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDirac {
    dim: usize,
    levels: Vec<Level>,
    tails: Vec<Tail>,
}

fn spinor_rank(n: usize) -> usize {
    1 << (n / 2)
}

fn mode_levels(torus: &FlatTorus, cutoff: i64, out: &mut Vec<Level>) {
    let n = torus.dim();
    let dual = torus.dual();
    let rank = spinor_rank(n);
    let shift: Vec<f64> = torus.spin().iter().map(|&e| e as f64 / 2.0).collect();
    for k in box_points(n, cutoff) {
        let xi: Vec<f64> = (0..n)
            .map(|i| 2.0 * PI * (0..n).map(|j| dual[(i, j)] * (k[j] as f64 + shift[j])).sum::<f64>())
            .collect();
        let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n % 2 == 0 {
            // both chiral halves, so the grading of the bundle is irrelevant
            out.push(Level { eigenvalue: norm, plus: rank / 2, minus: rank / 2 });
        } else if n == 1 {
            // -i d/dx on exp(i ξ x)
            out.push(Level { eigenvalue: xi[0], plus: 1, minus: 0 });
        } else {
            out.push(Level { eigenvalue: norm, plus: rank / 2, minus: 0 });
            out.push(Level { eigenvalue: -norm, plus: rank / 2, minus: 0 });
        }
    }
}

impl SpectralDirac {
    /// Untwisted Dirac operator, Fourier modes with `|k_i| <= cutoff`.
    pub fn torus(torus: &FlatTorus, cutoff: i64) -> Result<Self> {
        if cutoff < 1 {
            return invalid("cutoff must be positive");
        }
        let mut levels = Vec::new();
        mode_levels(torus, cutoff, &mut levels);
        let stretch = 1.0 / torus.lattice().clone().svd(false, false).singular_values.max();
        let tails = vec![Tail::Shells { dim: torus.dim(), cutoff, stretch, mult: spinor_rank(torus.dim()) as f64 }];
        Ok(Self { dim: torus.dim(), levels, tails })
    }

    /// Circle of length `L` with spin structure `ε`: eigenvalues
    /// `2π(k + ε/2)/L`.
    pub fn circle(length: f64, spin: u8, cutoff: i64) -> Result<Self> {
        let t = FlatTorus::circle(length)?.with_spin(&[spin])?;
        Self::torus(&t, cutoff)
    }

    /// Dirac operator on `Σ_C ⊗ V` for a sum of flux line bundles on a
    /// two-torus. Summands with nonzero flux contribute Landau levels
    /// `j <= levels`; flat summands contribute Fourier modes up to
    /// `cutoff`.
    ///
    /// With `D² = ∇*∇ + c(F)` and `c(F) = i b e_1e_2`, the half with
    /// `e_1e_2 = -i` (positive chirality) has energies `|b|(2j+1) + b` and
    /// the other half `|b|(2j+1) - b`, each of multiplicity `|k|`.
    pub fn twisted(bundle: &TwistBundle, levels: usize, cutoff: i64) -> Result<Self> {
        let torus = bundle.base();
        if torus.dim() != 2 {
            return Err(Error::Unsupported("Landau spectra need a two-torus".into()));
        }
        let mut out = Vec::new();
        let mut tails = Vec::new();
        for (s, b) in bundle.summands().iter().zip(bundle.field_strengths()) {
            let swap = s.parity == 1;
            if s.flux == 0 {
                mode_levels(torus, cutoff, &mut out);
                let stretch = 1.0 / torus.lattice().clone().svd(false, false).singular_values.max();
                tails.push(Tail::Shells { dim: 2, cutoff, stretch, mult: 2.0 });
                continue;
            }
            let mult = s.flux.unsigned_abs() as usize;
            let mut by_energy: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
            for j in 0..=levels {
                let base = b.abs() * (2 * j + 1) as f64;
                // energies are integer multiples of |b|, keyed exactly
                let key_p = ((base + b) / b.abs()).round() as u64;
                let key_m = ((base - b) / b.abs()).round() as u64;
                let (p, m) = if swap { (0, mult) } else { (mult, 0) };
                let e = by_energy.entry(key_p).or_default();
                e.0 += p;
                e.1 += m;
                let (p, m) = if swap { (mult, 0) } else { (0, mult) };
                let e = by_energy.entry(key_m).or_default();
                e.0 += p;
                e.1 += m;
            }
            for (key, (p, m)) in by_energy {
                // the top level only has one chiral half inside the cutoff
                if key as usize > 2 * levels + 1 {
                    continue;
                }
                out.push(Level { eigenvalue: (key as f64 * b.abs()).sqrt(), plus: p, minus: m });
            }
            tails.push(Tail::Landau { levels, field: b, mult: mult as f64 });
        }
        Ok(Self { dim: 2, levels: out, tails })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Bound for the heat trace of the modes left out by the truncation.
    pub fn tail_bound(&self, t: f64) -> f64 {
        self.tails.iter().map(|tl| tl.bound(t)).sum()
    }

    fn check_tail(&self, t: f64, scale: f64) -> Result<()> {
        if !(t > 0.0) {
            return invalid("time must be positive");
        }
        let tail = self.tail_bound(t);
        if tail > TAIL_TOLERANCE * scale.max(1.0) {
            return Err(Error::Budget(format!("spectral tail {tail:.3e} at T = {t}; raise the cutoff")));
        }
        Ok(())
    }

    pub fn kernel_dimension(&self) -> usize {
        self.levels.iter().filter(|l| l.eigenvalue.abs() < 1e-12).map(|l| l.plus + l.minus).sum()
    }

    /// Number of eigenvalues with `|λ| <= x`.
    pub fn counting_function(&self, x: f64) -> usize {
        self.levels.iter().filter(|l| l.eigenvalue.abs() <= x).map(|l| l.plus + l.minus).sum()
    }

    /// `Tr exp(-T D²/2)`.
    pub fn heat_trace(&self, t: f64) -> Result<f64> {
        let v: f64 = self
            .levels
            .iter()
            .map(|l| (l.plus + l.minus) as f64 * (-t * l.eigenvalue * l.eigenvalue / 2.0).exp())
            .sum();
        self.check_tail(t, v)?;
        Ok(v)
    }

    /// `Str exp(-T D²/2)` on `Σ_C ⊗ V`, even dimensions only. Each level
    /// contributes `(plus - minus)` before the exponential so exactly
    /// paired levels cancel exactly.
    pub fn heat_supertrace(&self, t: f64) -> Result<f64> {
        if self.dim % 2 != 0 {
            return Err(Error::Unsupported("supertrace needs even dimension".into()));
        }
        self.check_tail(t, 1.0)?;
        Ok(self
            .levels
            .iter()
            .map(|l| (l.plus as f64 - l.minus as f64) * (-t * l.eigenvalue * l.eigenvalue / 2.0).exp())
            .sum())
    }

    /// `i^{n/2} Str exp(-T D²/2)`: the supertrace expressed in the real
    /// Clifford normalization, the value the loop-space integral of the
    /// Bismut-Chern character takes.
    pub fn heat_supertrace_complex(&self, t: f64) -> Result<Complex64> {
        Ok(phases::index_phase(self.dim)? * self.heat_supertrace(t)?)
    }
}

/// Clifford-valued multiplication operator `Σ_i f_i(x) a_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Multiplier {
    dim: usize,
    terms: Vec<(TrigPoly, CliffordElement)>,
}

impl Multiplier {
    pub fn new(dim: usize, terms: Vec<(TrigPoly, CliffordElement)>) -> Result<Self> {
        for (f, a) in &terms {
            if f.dim() != dim || a.dim() != dim {
                return Err(Error::DimensionMismatch(dim, f.dim().max(a.dim())));
            }
        }
        Ok(Self { dim, terms })
    }

    pub fn constant(a: CliffordElement) -> Self {
        let n = a.dim();
        Self { dim: n, terms: vec![(TrigPoly::constant(n, 1.0), a)] }
    }

    /// Clifford multiplication by a form: `Σ_I f_I e_I`.
    pub fn from_form(form: &FormField) -> Self {
        let n = form.dim();
        let terms = form.components().map(|(mask, f)| (f.clone(), CliffordElement::monomial(n, mask, 1.0))).collect();
        Self { dim: n, terms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(TrigPoly, CliffordElement)] {
        &self.terms
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            terms: self.terms.iter().map(|(f, a)| (f.clone(), a.scale(s))).collect(),
        }
    }
}

/// A family of Fourier paths `k -> k + Q_1 -> ... -> k` with its summed
/// coefficient, and the per-mode heat exponents of each segment.
#[derive(Clone, Debug)]
struct PathGroup {
    coeff: Complex64,
    /// `lambdas[k][j]`: eigenvalue of `H` on the mode occupied between
    /// the `j`-th and `(j+1)`-th operator (`j = 0` also covers the final
    /// segment, which returns to the starting mode).
    lambdas: Vec<Vec<f64>>,
}

/// `τ ↦ Str(e^{-T(1-τ_M)H} A_M e^{-T(τ_M-τ_{M-1})H} ... A_1 e^{-Tτ_1 H})`
/// for the untwisted Dirac Laplacian `H = D²/2` and Clifford-valued
/// multipliers `A_j`, truncated to Fourier modes `|k_i| <= cutoff`.
///
/// `H` is scalar on the Clifford factor, so the supertrace splits into a
/// sum over closed Fourier paths of `str(a_M ... a_1)` times heat factors.
#[derive(Clone, Debug)]
pub struct ProductKernel {
    t: f64,
    ops: usize,
    groups: Vec<PathGroup>,
    tail: f64,
}

impl ProductKernel {
    pub fn new(torus: &FlatTorus, t: f64, ops: &[Multiplier], cutoff: i64) -> Result<Self> {
        if !(t > 0.0) {
            return invalid("time must be positive");
        }
        if cutoff < 1 {
            return invalid("cutoff must be positive");
        }
        let n = torus.dim();
        for op in ops {
            if op.dim() != n {
                return Err(Error::DimensionMismatch(n, op.dim()));
            }
        }
        // expand each operator into (shift, coefficient, Clifford element)
        let expanded: Vec<Vec<(Vec<i64>, Complex64, usize)>> = ops
            .iter()
            .map(|op| {
                op.terms
                    .iter()
                    .enumerate()
                    .flat_map(|(i, (f, _))| f.terms().map(move |(q, cq)| (q.clone(), *cq, i)).collect::<Vec<_>>())
                    .collect()
            })
            .collect();
        let mut paths: BTreeMap<Vec<Vec<i64>>, Complex64> = BTreeMap::new();
        let mut str_cache: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        let mut choice = vec![0usize; ops.len()];
        if expanded.iter().all(|e| !e.is_empty()) {
            loop {
                let mut partial = vec![0i64; n];
                let mut shifts = Vec::with_capacity(ops.len());
                let mut coeff = c(1.0, 0.0);
                let mut idx = Vec::with_capacity(ops.len());
                for (j, &ch) in choice.iter().enumerate() {
                    let (q, cq, i) = &expanded[j][ch];
                    for (p, x) in partial.iter_mut().zip(q) {
                        *p += x;
                    }
                    shifts.push(partial.clone());
                    coeff *= cq;
                    idx.push(*i);
                }
                if partial.iter().all(|&x| x == 0) {
                    let s = *str_cache.entry(idx.clone()).or_insert_with(|| {
                        // a_M ... a_1
                        let mut prod = CliffordElement::one(n);
                        for (j, &i) in idx.iter().enumerate() {
                            prod = &ops[j].terms[i].1 * &prod;
                        }
                        prod.supertrace()
                    });
                    if s != 0.0 {
                        shifts.pop();
                        *paths.entry(shifts).or_insert(c(0.0, 0.0)) += coeff * s;
                    }
                }
                // odometer
                let mut j = 0;
                loop {
                    if j == choice.len() {
                        break;
                    }
                    choice[j] += 1;
                    if choice[j] < expanded[j].len() {
                        break;
                    }
                    choice[j] = 0;
                    j += 1;
                }
                if j == choice.len() {
                    break;
                }
            }
        }
        let dual = torus.dual();
        let shift: Vec<f64> = torus.spin().iter().map(|&e| e as f64 / 2.0).collect();
        let lambda = |k: &[i64]| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                let x: f64 = (0..n).map(|j| dual[(i, j)] * (k[j] as f64 + shift[j])).sum();
                s += x * x;
            }
            2.0 * PI * PI * s
        };
        let mut groups = Vec::new();
        let mut tail = 0.0;
        let modes = box_points(n, cutoff);
        for (shifts, coeff) in paths {
            if coeff.norm() == 0.0 {
                continue;
            }
            let mut lambdas = Vec::new();
            for k in &modes {
                let mut ls = vec![lambda(k)];
                for q in &shifts {
                    let kq: Vec<i64> = k.iter().zip(q).map(|(a, b)| a + b).collect();
                    ls.push(lambda(&kq));
                }
                let lo = ls.iter().cloned().fold(f64::INFINITY, f64::min);
                let on_boundary = k.iter().any(|x| x.abs() == cutoff);
                if on_boundary {
                    tail += coeff.norm() * (-t * lo).exp();
                }
                if t * lo <= PRUNE {
                    lambdas.push(ls);
                }
            }
            groups.push(PathGroup { coeff, lambdas });
        }
        // crude count of modes beyond the boundary shell
        tail *= (2 * cutoff + 1) as f64;
        if tail > TAIL_TOLERANCE {
            return Err(Error::Budget(format!("product kernel tail {tail:.3e}; raise the cutoff")));
        }
        Ok(Self { t, ops: ops.len(), groups, tail })
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail
    }

    pub fn ops(&self) -> usize {
        self.ops
    }

    /// Kernel value at ordered times `0 <= τ_1 <= ... <= τ_M <= 1`.
    pub fn eval(&self, times: &[f64]) -> Result<f64> {
        if times.len() != self.ops {
            return Err(Error::LengthMismatch { expected: self.ops, got: times.len() });
        }
        if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return invalid("times must be ordered inside [0, 1]");
        }
        let m = self.ops;
        // durations spent on each segment; segment 0 wraps around
        let mut dur = vec![0.0; m.max(1)];
        if m == 0 {
            dur[0] = 1.0;
        } else {
            dur[0] = times[0] + 1.0 - times[m - 1];
            for j in 1..m {
                dur[j] = times[j] - times[j - 1];
            }
        }
        let mut total = c(0.0, 0.0);
        for g in &self.groups {
            let mut s = 0.0;
            for ls in &g.lambdas {
                let e: f64 = ls.iter().zip(&dur).map(|(l, d)| l * d).sum();
                s += (-self.t * e).exp();
            }
            total += g.coeff * s;
        }
        Ok(total.re)
    }
}

/// `Str(e^{-T(1-τ_M)H} A_M ... A_1 e^{-Tτ_1 H})` for one time tuple.
pub fn op_product_supertrace(torus: &FlatTorus, ops: &[(f64, Multiplier)], t: f64, cutoff: i64) -> Result<f64> {
    let mults: Vec<Multiplier> = ops.iter().map(|(_, m)| m.clone()).collect();
    let times: Vec<f64> = ops.iter().map(|(s, _)| *s).collect();
    ProductKernel::new(torus, t, &mults, cutoff)?.eval(&times)
}

/// Family `D_s = D_0 + s c(ω)` on the circle for a gauge map `g`, with
/// `c(ω) = -i ω` since Clifford multiplication by `dx` is `-i`.
#[derive(Clone, Debug)]
pub struct CircleFamily {
    length: f64,
    spin: u8,
    cutoff: i64,
    /// eigenvalues of `c(ω)` (constant in `x`)
    slopes: Vec<f64>,
}

impl CircleFamily {
    pub fn new(g: &GaugeMap, spin: u8, cutoff: i64) -> Result<Self> {
        if spin > 1 {
            return invalid("spin structure is 0 or 1");
        }
        if cutoff < 1 {
            return invalid("cutoff must be positive");
        }
        let cw = g.maurer_cartan(0.0) * c(0.0, -1.0);
        let herm = (&cw + cw.adjoint()) * c(0.5, 0.0);
        let slopes = nalgebra::SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
        Ok(Self { length: g.length(), spin, cutoff, slopes })
    }

    fn base(&self, k: i64) -> f64 {
        2.0 * PI * (k as f64 + self.spin as f64 / 2.0) / self.length
    }

    /// Sorted eigenvalues of the truncated `D_s`.
    pub fn eigenvalues(&self, s: f64) -> Vec<f64> {
        let mut v: Vec<f64> = (-self.cutoff..=self.cutoff)
            .flat_map(|k| self.slopes.iter().map(move |m| self.base(k) + s * m))
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    /// `s`-dependent spectrum as a `SpectralDirac`.
    pub fn spectrum(&self, s: f64) -> SpectralDirac {
        let levels = self.eigenvalues(s).into_iter().map(|e| Level { eigenvalue: e, plus: 1, minus: 0 }).collect();
        let lo = self.cutoff as f64 - s * self.slopes.iter().fold(0.0f64, |a, m| a.max(m.abs())) * self.length / (2.0 * PI);
        let tails = vec![Tail::Shells { dim: 1, cutoff: lo.floor().max(1.0) as i64, stretch: 1.0 / self.length, mult: self.slopes.len() as f64 }];
        SpectralDirac { dim: 1, levels, tails }
    }

    /// Net number of eigenvalues crossing from negative to non-negative
    /// along `s ∈ [0, 1]`, tracked step by step in sorted order. Values
    /// within `1e-9` of zero count as non-negative. A step in which crossings
    /// happen in both directions is treated as ambiguous and the step count
    /// doubles, up to `2^16`.
    pub fn spectral_flow(&self, steps: usize) -> Result<i64> {
        let neg = |x: f64| x < -1e-9;
        let mut steps = steps.max(1);
        'outer: while steps <= 1 << 16 {
            let mut prev = self.eigenvalues(0.0);
            let mut flow = 0i64;
            for i in 1..=steps {
                let cur = self.eigenvalues(i as f64 / steps as f64);
                let (mut up, mut down) = (0i64, 0i64);
                for (a, b) in prev.iter().zip(&cur) {
                    match (neg(*a), neg(*b)) {
                        (true, false) => up += 1,
                        (false, true) => down += 1,
                        _ => {}
                    }
                }
                if up > 0 && down > 0 {
                    steps *= 2;
                    continue 'outer;
                }
                flow += up - down;
                prev = cur;
            }
            return Ok(flow);
        }
        Err(Error::Ambiguous("eigenvalue tracking did not resolve crossings".into()))
    }

    /// `Tr(Ḋ_s exp(-T D_s²/2))` with `Ḋ_s = c(ω)`.
    pub fn flow_density(&self, s: f64, t: f64) -> Result<f64> {
        let mut total = 0.0;
        let mut edge = 0.0f64;
        for k in -self.cutoff..=self.cutoff {
            for m in &self.slopes {
                let l = self.base(k) + s * m;
                let w = m * (-t * l * l / 2.0).exp();
                if k.abs() == self.cutoff {
                    edge = edge.max(w.abs());
                }
                total += w;
            }
        }
        if edge > TAIL_TOLERANCE {
            return Err(Error::Budget(format!("flow density tail {edge:.3e}; raise the cutoff")));
        }
        Ok(total)
    }

    /// `sqrt(T/2π) ∫_0^1 Tr(Ḋ_s exp(-T D_s²/2)) ds` by Gauss-Legendre.
    pub fn getzler_flow_integral(&self, t: f64, nodes: usize) -> Result<f64> {
        if !(t > 0.0) {
            return invalid("time must be positive");
        }
        let mut s = 0.0;
        for (x, w) in unit_gauss(nodes)? {
            s += w * self.flow_density(x, t)?;
        }
        Ok((t / (2.0 * PI)).sqrt() * s)
    }
}

/// Zeta-determinant identity on a two-dimensional block with tangent
/// holonomy rotation `α`: returns `(4 sin²(α/2), -(str_C exp(α/2 e_1e_2))²)`.
pub fn zeta_det_toy(alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 2.0 * PI) {
        return invalid("rotation angle must lie in (0, 2π)");
    }
    let lhs = 4.0 * (alpha / 2.0).sin().powi(2);
    let spin_lift = CliffordElement::monomial(2, 0b11, alpha / 2.0).exp();
    let tr = spin_lift.complex_trace();
    let rhs = -(tr * tr);
    if rhs.im.abs() > 1e-12 {
        return Err(Error::NonFinite("complex trace square is not real".into()));
    }
    Ok((lhs, rhs.re))
}

/// Eigen-decomposition of `H = Δ/2 + V` on periodic scalar functions in a
/// Fourier-Galerkin basis `|k_i| <= cutoff`.
#[derive(Clone, Debug)]
pub struct GalerkinHeat {
    torus: FlatTorus,
    modes: Vec<Vec<i64>>,
    values: DVector<f64>,
    vectors: DMatrix<Complex64>,
}

impl GalerkinHeat {
    pub fn new(torus: &FlatTorus, potential: &TrigPoly, cutoff: i64) -> Result<Self> {
        if !potential.is_real() {
            return invalid("potential must be real-valued");
        }
        if potential.dim() != torus.dim() {
            return Err(Error::DimensionMismatch(torus.dim(), potential.dim()));
        }
        let n = torus.dim();
        let modes = box_points(n, cutoff);
        let index: BTreeMap<Vec<i64>, usize> = modes.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        let dual = torus.dual();
        let size = modes.len();
        let mut h = DMatrix::<Complex64>::zeros(size, size);
        for (i, k) in modes.iter().enumerate() {
            let xi2: f64 = (0..n)
                .map(|a| (2.0 * PI * (0..n).map(|b| dual[(a, b)] * k[b] as f64).sum::<f64>()).powi(2))
                .sum();
            h[(i, i)] += xi2 / 2.0;
            for (q, cq) in potential.terms() {
                let kq: Vec<i64> = k.iter().zip(q).map(|(a, b)| a + b).collect();
                if let Some(&j) = index.get(&kq) {
                    h[(j, i)] += *cq;
                }
            }
        }
        let e = nalgebra::SymmetricEigen::new(h);
        Ok(Self { torus: torus.clone(), modes, values: e.eigenvalues, vectors: e.eigenvectors })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    /// `Tr exp(-T H)`.
    pub fn trace(&self, t: f64) -> f64 {
        self.values.iter().map(|l| (-t * l).exp()).sum()
    }

    /// Kernel `exp(-T H)(x, y)`.
    pub fn kernel(&self, t: f64, x: &[f64], y: &[f64]) -> Complex64 {
        let ux = self.torus.to_lattice(x);
        let uy = self.torus.to_lattice(y);
        let wave = |u: &[f64]| -> DVector<Complex64> {
            DVector::from_iterator(
                self.modes.len(),
                self.modes.iter().map(|k| {
                    let ph: f64 = k.iter().zip(u).map(|(a, b)| *a as f64 * b).sum();
                    Complex64::from_polar(1.0, 2.0 * PI * ph)
                }),
            )
        };
        let (wx, wy) = (wave(&ux), wave(&uy));
        let px = self.vectors.adjoint() * wx;
        let py = self.vectors.adjoint() * wy;
        let mut s = c(0.0, 0.0);
        for i in 0..self.values.len() {
            s += (-t * self.values[i]).exp() * px[i].conj() * py[i];
        }
        s.conj() / self.torus.volume()
    }
}

/// Spectrum of the magnetic Laplacian `∇*∇` for flux `k` on the unit square
/// torus, discretized on an `N × N` grid with Peierls phases (Landau gauge
/// `A = i b x dy`, magnetic translation across `x = 1`).
pub fn magnetic_lattice_levels(k: i64, sites: usize) -> Result<Vec<f64>> {
    if sites < 4 {
        return invalid("need at least four sites per axis");
    }
    let nn = sites;
    let h = 1.0 / nn as f64;
    let b = 2.0 * PI * k as f64;
    let idx = |i: usize, j: usize| (i % nn) * nn + (j % nn);
    let mut m = DMatrix::<Complex64>::zeros(nn * nn, nn * nn);
    for i in 0..nn {
        for j in 0..nn {
            let p = idx(i, j);
            m[(p, p)] += c(4.0 / (h * h), 0.0);
            // hop in y picks up exp(-i b x h)
            let x = i as f64 * h;
            let q = idx(i, j + 1);
            let phase = Complex64::from_polar(1.0, -b * x * h) / (h * h);
            m[(p, q)] -= phase;
            m[(q, p)] -= phase.conj();
            // hop in x; crossing x = 1 uses the magnetic translation exp(i b y)
            let q = idx(i + 1, j);
            let phase = if i + 1 == nn { Complex64::from_polar(1.0, b * j as f64 * h) } else { c(1.0, 0.0) } / (h * h);
            m[(p, q)] -= phase;
            m[(q, p)] -= phase.conj();
        }
    }
    let mut v: Vec<f64> = nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}
