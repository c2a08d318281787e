//! Even and odd Bismut-Chern characters evaluated on polygon loops, their
//! loop-space integrals, and the low-order equivariance check.
//!
//! Even: `q(BCh_T)(γ) = str_{Σ⊗V} U_T(1, γ)` where `U_T` is transport on
//! `Σ ⊗ V` with potential `½ 𝐜(F)`; expanding `U_T` in `T` gives the
//! simplex series `Σ (-T/2)^N ∫_Δ str([‖] 𝐜(F) ... 𝐜(F) [‖])`.
//!
//! Odd (circle): `q(BCh_T(g))(γ) = 2^{-1/2} str(e_1) ∫_0^1 ds ∫_0^1 dτ
//! tr([γ‖_τ^1]^s ω(γ(τ)) [γ‖_0^τ]^s)` for the connections `d + sω`,
//! `ω = g^{-1}dg`; the curvature `F_s = -s(1-s) ω∧ω` vanishes on the circle.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bundles::{path_ordered_exponential, path_ordered_series, series_tail_bound, GaugeMap, OdeConfig, PotentialSpec, TwistBundle};
use crate::clifford::{CliffordElement, CliffordMatrix};
use crate::error::{invalid, Error, Result};
use crate::fields::TrigPoly;
use crate::geometry::{DiscreteLoop, FlatTorus};
use crate::integrator::McConfig;
use crate::spectral::unit_gauss;
use crate::wiener::{mc_expect_many, ComplexEstimate, Estimate, WienerSampler};

/// Default Gauss-Legendre nodes for the `s` integral.
pub const S_NODES: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BchConfig {
    pub ode: OdeConfig,
    /// Constant scalar curvature override; adds `scal/8` to the potential.
    pub scal: Option<f64>,
}

/// `½ 𝐜(F) + scal/8` on `Cl_n ⊗ V`.
pub fn even_potential(bundle: &TwistBundle, scal: Option<f64>) -> Result<PotentialSpec> {
    let n = bundle.base().dim();
    let r = bundle.rank();
    let mut terms = vec![(TrigPoly::constant(n, 0.5), bundle.clifford_curvature())];
    let s = scal.unwrap_or_else(|| bundle.base().scalar_curvature());
    if s != 0.0 {
        terms.push((TrigPoly::constant(n, s / 8.0), CliffordMatrix::identity(n, r)));
    }
    PotentialSpec::new(terms)
}

/// `q(BCh_T)` at a polygon loop through the path-ordered exponential.
pub fn bch_even_q(bundle: &TwistBundle, lp: &DiscreteLoop, t: f64, cfg: &BchConfig) -> Result<Complex64> {
    let pot = even_potential(bundle, cfg.scal)?;
    let u = path_ordered_exponential(bundle, lp, t, &pot, &cfg.ode)?;
    Ok(u.graded_supertrace(&bundle.parities()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BchEvenSeries {
    /// `T^N q(BCh_N)` for `N = 0..=n_max`.
    pub orders: Vec<Complex64>,
    /// `str_V` of the scalar Clifford part at order zero: the spin sign times
    /// `BCh_0 = str_V hol`.
    pub zero_order: Complex64,
    pub value: Complex64,
    /// Bound on `|Σ_{N > n_max} T^N q(BCh_N)|`.
    pub tail_bound: f64,
}

/// Truncated simplex series of `q(BCh_T)` on the substep grid.
pub fn bch_even_series(bundle: &TwistBundle, lp: &DiscreteLoop, t: f64, substeps: usize, n_max: usize) -> Result<BchEvenSeries> {
    if substeps == 0 {
        return invalid("need at least one substep");
    }
    let pot = even_potential(bundle, None)?;
    let parities = bundle.parities();
    let mats = path_ordered_series(bundle, lp, t, &pot, substeps, n_max);
    let orders: Vec<Complex64> = mats.iter().map(|a| a.graded_supertrace(&parities)).collect();
    let zero_order = parities
        .iter()
        .enumerate()
        .map(|(i, p)| if *p == 1 { -mats[0].entry(i, i).scalar_part() } else { mats[0].entry(i, i).scalar_part() })
        .sum();
    // |str| <= 2^{n/2} Σ|coeffs| <= 2^n rank · operator norm
    let n = bundle.base().dim();
    let scale = 2f64.powi(n as i32) * bundle.rank() as f64;
    Ok(BchEvenSeries {
        value: orders.iter().sum(),
        zero_order,
        tail_bound: scale * series_tail_bound(t, &pot, n_max),
        orders,
    })
}

fn complex_from(mut v: Vec<Estimate>) -> ComplexEstimate {
    let im = v.pop().unwrap();
    let re = v.pop().unwrap();
    ComplexEstimate { re, im }
}

/// `I_T[BCh_T] = W_T[q(BCh_T)]`.
pub fn integrate_bch_even(bundle: &TwistBundle, t: f64, mc: &McConfig, cfg: &BchConfig) -> Result<ComplexEstimate> {
    let pot = even_potential(bundle, cfg.scal.or(mc.scal))?;
    if t * pot.sup_bound() > 50.0 {
        return Err(Error::Budget("potential too large for the splitting budget".into()));
    }
    let sampler = WienerSampler::new(bundle.base(), t, mc.grid)?;
    let parities = bundle.parities();
    let v = mc_expect_many(
        &sampler,
        2,
        |lp| {
            let z = path_ordered_exponential(bundle, lp, t, &pot, &cfg.ode)
                .map(|u| u.graded_supertrace(&parities))
                .unwrap_or(Complex64::new(f64::NAN, f64::NAN));
            vec![z.re, z.im]
        },
        mc.samples,
        &mc.options,
    )?;
    Ok(complex_from(v))
}

/// Paired estimates for a direct sum `V ⊕ W` and its two summands on the
/// same loops: `[V, W, V ⊕ W]`.
pub fn integrate_bch_even_sum(
    a: &TwistBundle,
    b: &TwistBundle,
    t: f64,
    mc: &McConfig,
    cfg: &BchConfig,
) -> Result<[ComplexEstimate; 3]> {
    let sum = a.direct_sum(b)?;
    let bundles = [a, b, &sum];
    let pots = bundles.iter().map(|x| even_potential(x, cfg.scal)).collect::<Result<Vec<_>>>()?;
    let sampler = WienerSampler::new(a.base(), t, mc.grid)?;
    let v = mc_expect_many(
        &sampler,
        6,
        |lp| {
            let mut out = Vec::with_capacity(6);
            for (x, p) in bundles.iter().zip(&pots) {
                let z = path_ordered_exponential(x, lp, t, p, &cfg.ode)
                    .map(|u| u.graded_supertrace(&x.parities()))
                    .unwrap_or(Complex64::new(f64::NAN, f64::NAN));
                out.push(z.re);
                out.push(z.im);
            }
            out
        },
        mc.samples,
        &mc.options,
    )?;
    let mut it = v.into_iter();
    let mut next = || ComplexEstimate { re: it.next().unwrap(), im: it.next().unwrap() };
    Ok([next(), next(), next()])
}

/// `∫_0^1 s^N (1-s)^N ds = (N!)² / (2N+1)!`.
pub fn beta_weight(n: usize) -> f64 {
    let f = |k: usize| (1..=k).map(|x| x as f64).product::<f64>();
    f(n) * f(n) / f(2 * n + 1)
}

/// The same moment by the `s` quadrature.
pub fn beta_quadrature(n: usize, nodes: usize) -> Result<f64> {
    Ok(unit_gauss(nodes)?.iter().map(|(s, w)| w * (s * (1.0 - s)).powi(n as i32)).sum())
}

fn circle_of(g: &GaugeMap, torus: &FlatTorus) -> Result<()> {
    if torus.dim() != 1 {
        return Err(Error::Unsupported("odd Bismut-Chern evaluation is implemented on the circle".into()));
    }
    if (torus.lattice()[(0, 0)].abs() - g.length()).abs() > 1e-12 {
        return invalid("gauge map and circle lengths differ");
    }
    Ok(())
}

/// `q(BCh_T(g))` at a polygon loop on the circle, with the `s` integral by
/// Gauss-Legendre and the insertion time by the loop's own trapezoid rule.
pub fn bch_odd_q(g: &GaugeMap, torus: &FlatTorus, lp: &DiscreteLoop, s_nodes: usize) -> Result<Complex64> {
    circle_of(g, torus)?;
    let gl = unit_gauss(s_nodes)?;
    let l = g.length();
    let m = lp.len();
    let x0 = lp.lift(0)[0];
    let end = lp.next_lift(m - 1)[0];
    // trapezoid weights on the periodic grid
    let w: Vec<f64> = (0..m).map(|j| 0.5 * (lp.segment_duration(j) + lp.segment_duration((j + m - 1) % m))).collect();
    let mut sum = Complex64::new(0.0, 0.0);
    // ω and the transports of d + sω are diagonal in the frame of g
    for &mj in g.windings() {
        let omega = Complex64::new(0.0, 2.0 * PI * mj as f64 / l);
        let k = -2.0 * PI * mj as f64 / l;
        for &(s, ws) in &gl {
            let mut inner = Complex64::new(0.0, 0.0);
            for (j, wj) in w.iter().enumerate() {
                let x = lp.lift(j)[0];
                let before = Complex64::from_polar(1.0, k * s * (x - x0));
                let after = Complex64::from_polar(1.0, k * s * (end - x));
                inner += wj * after * omega * before;
            }
            sum += ws * inner;
        }
    }
    let str_e1 = CliffordElement::generator(1, 0).supertrace();
    Ok(sum * (torus.spin_sign(lp.closing()) * str_e1 / 2f64.sqrt()))
}

/// Closed form of `q(BCh_T(g))` for a diagonal gauge map: only loops with
/// `m_j λ = 0` contribute, each with `i 2π m_j / L`.
pub fn bch_odd_closed_form(g: &GaugeMap, torus: &FlatTorus, winding: i64) -> Complex64 {
    let l = g.length();
    let sign = torus.spin_sign(&[winding]);
    g.windings()
        .iter()
        .filter(|&&m| m * winding == 0)
        .map(|&m| Complex64::new(0.0, sign * 2.0 * PI * m as f64 / l))
        .sum()
}

/// `I_T[BCh_T(g)]` on the circle `R / LZ` with spin structure `spin`.
pub fn integrate_bch_odd(g: &GaugeMap, spin: u8, t: f64, mc: &McConfig, s_nodes: usize) -> Result<ComplexEstimate> {
    let torus = FlatTorus::circle(g.length())?.with_spin(&[spin])?;
    let sampler = WienerSampler::new(&torus, t, mc.grid)?;
    unit_gauss(s_nodes)?;
    let v = mc_expect_many(
        &sampler,
        2,
        |lp| {
            let z = bch_odd_q(g, &torus, lp, s_nodes).unwrap_or(Complex64::new(f64::NAN, f64::NAN));
            vec![z.re, z.im]
        },
        mc.samples,
        &mc.options,
    )?;
    Ok(complex_from(v))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceResidual {
    /// `(BCh_0(γ + εv) - BCh_0(γ)) / ε`.
    pub finite_difference: Complex64,
    /// `-ι_γ̇ BCh_1 [v] = ∫ str_V([‖] F(γ̇, v) [‖]) dτ`.
    pub contraction: Complex64,
    pub defect: f64,
}

/// `BCh_0(γ) = str_V hol(γ)`, without the spin factor.
pub fn hol_supertrace(bundle: &TwistBundle, lp: &DiscreteLoop) -> Complex64 {
    let h = bundle.loop_holonomy(lp);
    bundle.parities().iter().enumerate().map(|(i, p)| if *p == 1 { -h[(i, i)] } else { h[(i, i)] }).sum()
}

/// `d BCh_0 = -ι_γ̇ BCh_1` on a polygon loop for a node field `v`
/// (linear between nodes): forward difference against the contraction
/// evaluated by Gauss-Legendre on each segment.
pub fn equivariance_residual(bundle: &TwistBundle, lp: &DiscreteLoop, v: &[Vec<f64>], eps: f64) -> Result<EquivarianceResidual> {
    let torus = bundle.base();
    let n = torus.dim();
    let m = lp.len();
    if v.len() != m || v.iter().any(|x| x.len() != n) {
        return Err(Error::LengthMismatch { expected: m * n, got: v.iter().map(Vec::len).sum() });
    }
    if !(eps > 0.0) {
        return invalid("step must be positive");
    }
    let lifts: Vec<f64> = (0..m).flat_map(|j| lp.lift(j).iter().zip(&v[j]).map(|(x, d)| x + eps * d).collect::<Vec<_>>()).collect();
    let moved = DiscreteLoop::new(torus, lp.times().to_vec(), lifts, lp.closing().to_vec())?;
    let fd = (hol_supertrace(bundle, &moved) - hol_supertrace(bundle, lp)) / eps;

    let parities = bundle.parities();
    let gl = unit_gauss(4)?;
    let nodes = lp.times().to_vec();
    let closing = bundle.closing_factor(lp.lift(0), lp.closing());
    let mut rhs = Complex64::new(0.0, 0.0);
    if n == 2 {
        for j in 0..m {
            let d = lp.segment_displacement(j);
            let dur = lp.segment_duration(j);
            let t0 = lp.times()[j];
            for &(u, wu) in &gl {
                let tau = t0 + u * dur;
                let vt: Vec<f64> = (0..2).map(|i| (1.0 - u) * v[j][i] + u * v[(j + 1) % m][i]).collect();
                // γ̇ = d / dur, so F(γ̇, v) dτ = F(d, v) du
                let area = d[0] * vt[1] - d[1] * vt[0];
                let f = bundle.curvature_at(&[]).map(|z| z * area);
                let before = bundle.transport(lp, 0.0, tau.min(1.0), &nodes)?;
                let after = bundle.transport(lp, tau.min(1.0), 1.0, &nodes)?;
                let x: DMatrix<Complex64> = &closing * after * f * before;
                let s: Complex64 = parities.iter().enumerate().map(|(i, p)| if *p == 1 { -x[(i, i)] } else { x[(i, i)] }).sum();
                rhs += wu * s;
            }
        }
    }
    Ok(EquivarianceResidual { finite_difference: fd, contraction: rhs, defect: (fd - rhs).norm() })
}
