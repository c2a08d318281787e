//! Monte Carlo checks of the Wiener measures against closed forms: total
//! mass, the winding-zero sector, the convolution property of the pinned
//! measures, the trace relation and Feynman-Kac with a scalar potential.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fields::TrigPoly;
use crate::geometry::FlatTorus;
use crate::localization::{lattice_quadrature, QUADRATURE_GRID};
use crate::spectral::GalerkinHeat;
use crate::wiener::{mc_expect, BridgeSampler, McOptions, WienerSampler};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WienerCheck {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    pub reference: f64,
    pub z: f64,
    pub passed: bool,
}

impl WienerCheck {
    fn new(name: &str, estimate: f64, stderr: f64, reference: f64) -> Self {
        let d = (estimate - reference).abs();
        let z = if stderr > 0.0 {
            d / stderr
        } else if d <= 1e-12 * reference.abs().max(1.0) {
            0.0
        } else {
            f64::INFINITY
        };
        Self { name: name.into(), estimate, stderr, reference, z, passed: z < 3.0 }
    }
}

/// Total mass from the winding sum against the dual theta sum, and the
/// sampled mass of the `λ = 0` sector against `vol (2πT)^{-n/2}`.
pub fn mass_checks(torus: &FlatTorus, t: f64, grid: usize, n: u64, opts: &McOptions) -> Result<Vec<WienerCheck>> {
    let s = WienerSampler::new(torus, t, grid)?;
    let fourier = torus.heat_trace(t, &vec![0.0; torus.dim()])?;
    let zero = vec![0; torus.dim()];
    let hit = mc_expect(&s, |l| if l.closing() == zero.as_slice() { 1.0 } else { 0.0 }, n, opts)?;
    let gauss = torus.volume() * (2.0 * PI * t).powf(-(torus.dim() as f64) / 2.0);
    Ok(vec![
        WienerCheck::new("total mass vs theta sum", s.z_from_windings(), 0.0, fourier),
        WienerCheck::new("winding-zero sector mass", hit.value, hit.stderr, gauss),
    ])
}

fn wave(torus: &FlatTorus, k: &[i64], x: &[f64]) -> f64 {
    let u = torus.to_lattice(x);
    (2.0 * PI * k.iter().zip(&u).map(|(a, b)| *a as f64 * b).sum::<f64>()).cos()
}

/// `W^{x,y}_T[f(γ(s))] = ∫ p_{sT}(x, z) f(z) p_{(1-s)T}(z, y) dz` for
/// `f = cos 2π<k, u>`, with `s = j / grid`.
pub fn convolution_check(
    torus: &FlatTorus,
    t: f64,
    x: &[f64],
    y: &[f64],
    k: &[i64],
    node: usize,
    grid: usize,
    n: u64,
    opts: &McOptions,
) -> Result<WienerCheck> {
    if node == 0 || node >= grid {
        return invalid("split node must be interior");
    }
    let s = node as f64 / grid as f64;
    let sampler = BridgeSampler::new(torus, t, x, y, grid)?;
    let e = mc_expect(&sampler, |p| wave(torus, k, &p.point(torus, node)), n, opts)?;
    let (xr, yr) = (torus.reduce(x), torus.reduce(y));
    let reference = lattice_quadrature(torus, QUADRATURE_GRID, |z| {
        let z = torus.reduce(z);
        let a = torus.heat_kernel(s * t, &xr, &z).unwrap_or(f64::NAN);
        let b = torus.heat_kernel((1.0 - s) * t, &z, &yr).unwrap_or(f64::NAN);
        Complex64::new(a * b * wave(torus, k, &z), 0.0)
    })?;
    Ok(WienerCheck::new("convolution at an interior time", e.value, e.stderr, reference.re))
}

/// `W_T[f(γ(0))] = ∫_X p_T(x, x) f(x) dx` for `f = 1 + cos 2π<k, u>`.
pub fn trace_relation_check(torus: &FlatTorus, t: f64, k: &[i64], grid: usize, n: u64, opts: &McOptions) -> Result<WienerCheck> {
    let s = WienerSampler::new(torus, t, grid)?;
    let f = |x: &[f64]| 1.0 + wave(torus, k, x);
    let e = mc_expect(&s, |l| f(&l.point(torus, 0)), n, opts)?;
    let reference = lattice_quadrature(torus, QUADRATURE_GRID, |x| {
        let x = torus.reduce(x);
        Complex64::new(torus.heat_kernel(t, &x, &x).unwrap_or(f64::NAN) * f(&x), 0.0)
    })?;
    Ok(WienerCheck::new("trace relation", e.value, e.stderr, reference.re))
}

/// `W_T[exp(-T Σ_j V(γ(τ_j)) / m)]` against `Tr exp(-T(Δ/2 + V))` from
/// the Fourier-Galerkin spectrum. The node sum is a symmetric Trotter
/// product, so the bias is `O((T / m)^2)`.
pub fn feynman_kac_check(
    torus: &FlatTorus,
    t: f64,
    potential: &TrigPoly,
    grid: usize,
    cutoff: i64,
    n: u64,
    opts: &McOptions,
) -> Result<WienerCheck> {
    if !potential.is_real() {
        return invalid("potential must be real-valued");
    }
    let s = WienerSampler::new(torus, t, grid)?;
    let e = mc_expect(
        &s,
        |l| {
            let v: f64 = (0..l.len()).map(|j| potential.eval(torus, &l.point(torus, j)).re).sum();
            (-t * v / l.len() as f64).exp()
        },
        n,
        opts,
    )?;
    let reference = GalerkinHeat::new(torus, potential, cutoff)?.trace(t);
    Ok(WienerCheck::new("Feynman-Kac vs Galerkin heat trace", e.value, e.stderr, reference))
}
