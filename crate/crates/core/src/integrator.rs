//! The integral map `I_T`: Monte Carlo over the loop measure, the relative
//! map over pinned loops, and the exact spectral evaluator for product forms.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::clifford::{permutations, super_sign, wedge_sign, CliffordElement};
use crate::error::{invalid, Error, Result};
use crate::fields::FormField;
use crate::geometry::{DiscreteLoop, FlatTorus};
use crate::loopforms::{Density, IntegralForm, TimeProfile};
use crate::qfunctional::{check_form, q, q_rel};
use crate::spectral::{unit_gauss, Multiplier, ProductKernel};
use crate::wiener::{mc_expect_many, BridgeSampler, Estimate, McOptions, WienerSampler, CHUNK};

/// Default Fourier cutoff per axis for the spectral evaluator.
pub const DEFAULT_CUTOFF: i64 = 24;

/// Default Gauss-Legendre nodes per simplex dimension.
pub const DEFAULT_NODES: usize = 16;

/// Largest number of kernel evaluations one spectral call may spend.
const SPECTRAL_BUDGET: usize = 20_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Nodes of the polygon loops.
    pub grid: usize,
    pub samples: u64,
    pub options: McOptions,
    /// Constant scalar curvature replacing the torus value (zero) in the
    /// weight `exp(-(T/8) ∫ scal)`.
    pub scal: Option<f64>,
}

impl McConfig {
    pub fn new(grid: usize, samples: u64, seed: u64) -> Self {
        Self { grid, samples, options: McOptions::seeded(seed), scal: None }
    }

    fn weight(&self, torus: &FlatTorus, t: f64) -> f64 {
        (-t / 8.0 * self.scal.unwrap_or_else(|| torus.scalar_curvature())).exp()
    }
}

fn check(torus: &FlatTorus, theta: &IntegralForm) -> Result<()> {
    if theta.dim() != torus.dim() {
        return Err(Error::DimensionMismatch(torus.dim(), theta.dim()));
    }
    check_form(theta)
}

/// Runs a multi-channel estimate whose per-sample evaluation may fail; the
/// first failure is reported instead of the non-finite marker it leaves.
fn fallible_mc<S, F>(sampler: &S, channels: usize, f: F, n: u64, opts: &McOptions) -> Result<Vec<Estimate>>
where
    S: crate::wiener::Sampler,
    F: Fn(&S::Sample) -> Result<Vec<f64>> + Sync,
{
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let out = mc_expect_many(
        sampler,
        channels,
        |s| match f(s) {
            Ok(v) => v,
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
                vec![f64::NAN; channels]
            }
        },
        n,
        opts,
    );
    match failure.into_inner().unwrap() {
        Some(e) => Err(e),
        None => out,
    }
}

/// `I_T[θ] = W_T[exp(-(T/8)∫scal) q(θ)]` by Monte Carlo on polygon loops.
pub fn integrate_mc(torus: &FlatTorus, theta: &IntegralForm, t: f64, cfg: &McConfig) -> Result<Estimate> {
    check(torus, theta)?;
    let sampler = WienerSampler::new(torus, t, cfg.grid)?;
    let w = cfg.weight(torus, t);
    let mut v = fallible_mc(&sampler, 1, |lp| Ok(vec![w * q(torus, lp, theta)?.value]), cfg.samples, &cfg.options)?;
    Ok(v.remove(0))
}

/// Paired rotation check on the same loops: `q|_γ(θ)`, `q|_{s·γ}(s·θ)` and
/// their difference, for the grid shift `s = steps / grid`.
pub fn rotation_pair_mc(
    torus: &FlatTorus,
    theta: &IntegralForm,
    t: f64,
    steps: usize,
    cfg: &McConfig,
) -> Result<[Estimate; 3]> {
    check(torus, theta)?;
    let sampler = WienerSampler::new(torus, t, cfg.grid)?;
    let s = (steps % cfg.grid) as f64 / cfg.grid as f64;
    let rotated = theta.rotate(s);
    let w = cfg.weight(torus, t);
    let v = fallible_mc(
        &sampler,
        3,
        |lp| {
            let a = q(torus, lp, theta)?.value;
            let b = q(torus, &lp.rotate(torus, s)?, &rotated)?.value;
            Ok(vec![w * a, w * b, w * (a - b)])
        },
        cfg.samples,
        &cfg.options,
    )?;
    let mut it = v.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub cutoff: i64,
    /// Gauss-Legendre nodes per dimension of each density gap.
    pub nodes: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self { cutoff: DEFAULT_CUTOFF, nodes: DEFAULT_NODES }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEvaluation {
    pub value: f64,
    /// Largest truncation tail bound among the kernels used.
    pub tail_bound: f64,
}

/// Ordered quadrature on `lo <= s_1 <= ... <= s_r <= hi` in collapsed
/// coordinates: `s_r = lo + (hi-lo)u_r`, `s_j = lo + (s_{j+1}-lo)u_j`.
fn simplex_rule(lo: f64, hi: f64, r: usize, gl: &[(f64, f64)]) -> Vec<(Vec<f64>, f64)> {
    let mut out = vec![(Vec::new(), 1.0, hi)];
    for _ in 0..r {
        let mut next = Vec::with_capacity(out.len() * gl.len());
        for (pts, w, upper) in &out {
            for &(u, wu) in gl {
                let s = lo + (upper - lo) * u;
                let mut p = pts.clone();
                p.push(s);
                next.push((p, w * wu * (upper - lo), s));
            }
        }
        out = next;
    }
    out.into_iter()
        .map(|(mut p, w, _)| {
            p.reverse();
            (p, w)
        })
        .collect()
}

/// `I_T[θ]` from the truncated Fourier Dirac operator:
///
/// `2^{-M'/2} c Σ_σ sgn(σ;ℓ) ∫_Δ Π φ · Str(e^{-T(1-τ_M)H} 𝐜(ϑ_M) ... 𝐜(ϑ_1) e^{-Tτ_1 H}) dτ`,
///
/// point masses exact, density gaps by ordered Gauss-Legendre quadrature.
/// Degree-0 factors enter as ordered multipliers.
pub fn integrate_spectral(torus: &FlatTorus, theta: &IntegralForm, t: f64, cfg: &SpectralConfig) -> Result<SpectralEvaluation> {
    check(torus, theta)?;
    let gl = unit_gauss(cfg.nodes)?;
    let mut value = 0.0;
    let mut tail: f64 = 0.0;
    for term in theta.terms() {
        if term.prefactor == 0.0 {
            continue;
        }
        let m = term.factors.len();
        let ops: Vec<Multiplier> = term.factors.iter().map(|f| Multiplier::from_form(&f.field).scale(f.weight)).collect();
        let degrees = term.degrees();
        let densities = term.factors.iter().filter(|f| f.profile.point_time().is_none()).count();
        let cost = permutations(m).len() * cfg.nodes.pow(densities as u32);
        if cost > SPECTRAL_BUDGET {
            return Err(Error::Budget(format!("{cost} kernel evaluations exceed {SPECTRAL_BUDGET}")));
        }
        let norm = 2f64.powf(-(term.form_blocks() as f64) / 2.0);
        let mut sum = 0.0;
        for sigma in permutations(m) {
            let masses: Vec<f64> = sigma.iter().filter_map(|&j| term.factors[j].profile.point_time()).collect();
            if masses.windows(2).any(|w| w[1] <= w[0]) {
                continue;
            }
            let sign = super_sign(&sigma, &degrees)? as f64;
            let ordered: Vec<Multiplier> = sigma.iter().map(|&j| ops[j].clone()).collect();
            let kernel = ProductKernel::new(torus, t, &ordered, cfg.cutoff)?;
            tail = tail.max(kernel.tail_bound());
            // tensor product of the gap rules between consecutive masses
            let mut rule: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
            let mut lo = 0.0;
            let mut run = 0;
            let flush = |rule: &mut Vec<(Vec<f64>, f64)>, lo: f64, hi: f64, run: usize, mass: Option<f64>| {
                let gap = simplex_rule(lo, hi, run, &gl);
                let mut next = Vec::with_capacity(rule.len() * gap.len());
                for (p, w) in rule.iter() {
                    for (g, wg) in &gap {
                        let mut q = p.clone();
                        q.extend_from_slice(g);
                        q.extend(mass);
                        next.push((q, w * wg));
                    }
                }
                *rule = next;
            };
            for &j in &sigma {
                match term.factors[j].profile.point_time() {
                    Some(tm) => {
                        flush(&mut rule, lo, tm, run, Some(tm));
                        lo = tm;
                        run = 0;
                    }
                    None => run += 1,
                }
            }
            flush(&mut rule, lo, 1.0, run, None);
            let mut acc = 0.0;
            for (times, w) in &rule {
                let mut phi = 1.0;
                for (slot, &j) in sigma.iter().enumerate() {
                    if let TimeProfile::Density(d) = &term.factors[j].profile {
                        phi *= d.eval(times[slot]);
                    }
                }
                if phi != 0.0 {
                    acc += w * phi * kernel.eval(times)?;
                }
            }
            sum += sign * acc;
        }
        value += term.prefactor * norm * sum;
    }
    Ok(SpectralEvaluation { value, tail_bound: tail })
}

/// Exterior-algebra-valued estimate at a point: one estimate per monomial
/// `dx_I`, indexed by the bitmask `I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelEstimate {
    pub x: Vec<f64>,
    pub components: Vec<Estimate>,
}

impl RelEstimate {
    pub fn value(&self) -> CliffordElement {
        let n = self.x.len();
        CliffordElement::from_coeffs(n, self.components.iter().map(|e| e.value).collect()).expect("2^n components")
    }

    /// Largest `|component| / stderr` over monomials of degree `k`.
    pub fn degree_z(&self, k: usize) -> f64 {
        self.components
            .iter()
            .enumerate()
            .filter(|(mask, _)| mask.count_ones() as usize == k)
            .map(|(_, e)| e.z_score(0.0))
            .fold(0.0, f64::max)
    }
}

fn rel_channels<F>(torus: &FlatTorus, theta: &IntegralForm, t: f64, x: &[f64], cfg: &McConfig, channels: usize, map: F) -> Result<Vec<Estimate>>
where
    F: Fn(&CliffordElement) -> Vec<f64> + Sync,
{
    check(torus, theta)?;
    if x.len() != torus.dim() {
        return Err(Error::DimensionMismatch(torus.dim(), x.len()));
    }
    let sampler = BridgeSampler::new(torus, t, x, x, cfg.grid)?;
    let scale = cfg.weight(torus, t) * 2f64.powf(torus.dim() as f64 / 2.0);
    fallible_mc(&sampler, channels, |p| Ok(map(&q_rel(torus, p, theta)?.value.scale(scale))), cfg.samples, &cfg.options)
}

/// `I_T^rel[θ](x) = 2^{n/2} W_T^{xx}[exp(-(T/8)∫scal) 𝐜^{-1}(q_rel(θ))]`;
/// the symbol map `𝐜^{-1}` keeps the coefficient of each `e_I`.
pub fn integrate_rel_mc(torus: &FlatTorus, theta: &IntegralForm, t: f64, x: &[f64], cfg: &McConfig) -> Result<RelEstimate> {
    let channels = 1 << torus.dim();
    let components = rel_channels(torus, theta, t, x, cfg, channels, |a| a.coeffs().to_vec())?;
    Ok(RelEstimate { x: x.to_vec(), components })
}

/// Value with an uncorrelated standard error, for sums of independent runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Combined {
    pub value: f64,
    pub stderr: f64,
}

impl Combined {
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = (self.value - reference).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

/// Midpoint lattice grid with `k` points per axis and the cell volume.
fn torus_grid(torus: &FlatTorus, k: usize) -> (Vec<Vec<f64>>, f64) {
    let n = torus.dim();
    let total = k.pow(n as u32);
    let pts = (0..total)
        .map(|mut i| {
            let u: Vec<f64> = (0..n)
                .map(|_| {
                    let d = i % k;
                    i /= k;
                    (d as f64 + 0.5) / k as f64
                })
                .collect();
            torus.from_lattice(&u)
        })
        .collect();
    (pts, torus.volume() / total as f64)
}

/// `∫_X f(x, I_T^rel[θ](x))` over a midpoint lattice grid, each point an
/// independent run on disjoint RNG streams.
fn integrate_over_torus<F>(torus: &FlatTorus, theta: &IntegralForm, t: f64, points: usize, cfg: &McConfig, f: F) -> Result<Combined>
where
    F: Fn(&[f64], &CliffordElement) -> f64 + Sync,
{
    if points == 0 {
        return invalid("need at least one point per axis");
    }
    let (grid, cell) = torus_grid(torus, points);
    let chunks = cfg.samples.div_ceil(CHUNK as u64);
    let (mut value, mut var) = (0.0, 0.0);
    for (i, x) in grid.iter().enumerate() {
        let mut c = cfg.clone();
        c.options.first_chunk = cfg.options.first_chunk + i as u64 * chunks;
        let e = rel_channels(torus, theta, t, x, &c, 1, |a| vec![f(x, a)])?.remove(0);
        value += cell * e.value;
        var += (cell * e.stderr).powi(2);
    }
    Ok(Combined { value, stderr: var.sqrt() })
}

/// `∫_X I_T^rel[θ]`: the top-degree component integrated over the torus
/// (orientation of the coordinate frame `e_1, ..., e_n`).
pub fn integrate_rel_over_torus(torus: &FlatTorus, theta: &IntegralForm, t: f64, points: usize, cfg: &McConfig) -> Result<Combined> {
    let top = (1usize << torus.dim()) - 1;
    integrate_over_torus(torus, theta, t, points, cfg, |_, a| a.coeff(top))
}

/// Top coefficient of `α(x) ∧ ω`.
fn wedge_top(torus: &FlatTorus, alpha: &FormField, x: &[f64], omega: &CliffordElement) -> f64 {
    let n = torus.dim();
    let top = (1usize << n) - 1;
    let a = alpha.eval(torus, x);
    let mut s = 0.0;
    for (ma, ca) in a.coeffs().iter().enumerate() {
        if *ca != 0.0 {
            let mb = top ^ ma;
            s += wedge_sign(ma, mb) * ca * omega.coeff(mb);
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberCheck {
    /// `I_T(Pα ∧ θ)`.
    pub lhs: Estimate,
    /// `(1/√2) ∫_X α ∧ I_T^rel(Av θ)`.
    pub rhs: Combined,
    pub defect: f64,
    pub combined_stderr: f64,
}

/// Both sides of `I_T(Pα ∧ θ) = (1/√2) ∫_X α ∧ I_T^rel(Av θ)`, with `Av`
/// the average over `average_grid` rotations and `points` lattice points per
/// axis for the outer integral.
pub fn fiber_integration_check(
    torus: &FlatTorus,
    alpha: &FormField,
    theta: &IntegralForm,
    t: f64,
    average_grid: usize,
    points: usize,
    cfg: &McConfig,
) -> Result<FiberCheck> {
    if alpha.dim() != torus.dim() {
        return Err(Error::DimensionMismatch(torus.dim(), alpha.dim()));
    }
    if !alpha.is_zero() && alpha.degree() == Some(0) {
        return invalid("the fiber form must have degree at least 1");
    }
    let p_alpha = IntegralForm::lift_form(Density::constant(1.0), alpha)?;
    let lhs = integrate_mc(torus, &p_alpha.wedge(theta)?, t, cfg)?;
    let av = theta.average(average_grid)?;
    let rhs = integrate_over_torus(torus, &av, t, points, cfg, |x, a| wedge_top(torus, alpha, x, a) / 2f64.sqrt())?;
    Ok(FiberCheck {
        defect: (lhs.value - rhs.value).abs(),
        combined_stderr: (lhs.stderr.powi(2) + rhs.stderr.powi(2)).sqrt(),
        lhs,
        rhs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementSweep {
    pub grids: Vec<usize>,
    pub estimates: Vec<Estimate>,
    /// Paired differences `E_{m_{i+1}} - E_{m_i}` on the same loops.
    pub differences: Vec<Estimate>,
    /// Finest-grid estimate.
    pub value: f64,
    pub stderr: f64,
    /// First-order extrapolation from the two finest grids (diagnostic).
    pub extrapolated: f64,
    /// `|E_finest - E_previous|`.
    pub defect: f64,
    /// Log-log slope of `|differences|` against the grid size.
    pub slope: Option<f64>,
}

/// Keep every `r`-th node of a loop.
pub fn subsample(torus: &FlatTorus, lp: &DiscreteLoop, r: usize) -> Result<DiscreteLoop> {
    if r == 0 || lp.len() % r != 0 {
        return invalid("subsampling step must divide the grid");
    }
    let n = torus.dim();
    let idx: Vec<usize> = (0..lp.len()).step_by(r).collect();
    let times = idx.iter().map(|&j| lp.times()[j]).collect();
    let lifts = idx.iter().flat_map(|&j| lp.lift(j).to_vec()).collect::<Vec<_>>();
    debug_assert_eq!(lifts.len(), idx.len() * n);
    DiscreteLoop::new(torus, times, lifts, lp.closing().to_vec())
}

/// Estimates of `W_T[f]` on several grids from one set of loops sampled on
/// the finest grid and subsampled to the coarser ones.
pub fn refinement_sweep<F>(torus: &FlatTorus, t: f64, grids: &[usize], samples: u64, opts: &McOptions, f: F) -> Result<RefinementSweep>
where
    F: Fn(&DiscreteLoop) -> Result<f64> + Sync,
{
    if grids.len() < 2 {
        return invalid("a sweep needs at least two grids");
    }
    if grids.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("grids must be strictly increasing");
    }
    let finest = *grids.last().unwrap();
    if grids.iter().any(|&g| finest % g != 0) {
        return invalid("every grid must divide the finest grid");
    }
    let sampler = WienerSampler::new(torus, t, finest)?;
    let k = grids.len();
    let all = fallible_mc(
        &sampler,
        2 * k - 1,
        |lp| {
            let vals = grids.iter().map(|&g| f(&subsample(torus, lp, finest / g)?)).collect::<Result<Vec<_>>>()?;
            let mut out = vals.clone();
            out.extend(vals.windows(2).map(|w| w[1] - w[0]));
            Ok(out)
        },
        samples,
        opts,
    )?;
    let estimates = all[..k].to_vec();
    let differences = all[k..].to_vec();
    let (mp, mf) = (grids[k - 2] as f64, finest as f64);
    let (ep, ef) = (estimates[k - 2].value, estimates[k - 1].value);
    let slope = (differences.len() >= 2).then(|| {
        let pts: Vec<(f64, f64)> =
            differences.iter().zip(&grids[1..]).map(|(d, &g)| ((g as f64).ln(), d.value.abs().max(1e-300).ln())).collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(RefinementSweep {
        grids: grids.to_vec(),
        value: ef,
        stderr: estimates[k - 1].stderr,
        extrapolated: (mf * ef - mp * ep) / (mf - mp),
        defect: (ef - ep).abs(),
        slope,
        estimates,
        differences,
    })
}
