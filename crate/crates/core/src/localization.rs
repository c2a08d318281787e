//! Constant-loop side of the localization identity: the `Â(T)` form, the
//! Chern characters `ch_T`, and `(2πT)^{-n/2} ∫_X Â(T) ∧ ch_T` compared
//! against the spectral and Monte Carlo values of `I_T[BCh_T]`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bismut::{integrate_bch_even, integrate_bch_odd, BchConfig, S_NODES};
use crate::bundles::{ComplexForm, GaugeMap, TwistBundle};
use crate::clifford::{wedge_sign, ComplexClifford, CliffordElement};
use crate::error::{invalid, Error, Result};
use crate::geometry::FlatTorus;
use crate::integrator::McConfig;
use crate::phases;
use crate::spectral::{CircleFamily, SpectralDirac};
use crate::wiener::ComplexEstimate;

/// Default lattice quadrature points per direction.
pub const QUADRATURE_GRID: usize = 64;

/// Coefficients of `log(x / sinh x) = Σ_k c_k x^{2k}`,
/// `c_k = -2^{2k} B_{2k} / (2k (2k)!)`.
const LOG_X_OVER_SINH: [f64; 6] = [
    -1.0 / 6.0,
    1.0 / 180.0,
    -1.0 / 2835.0,
    1.0 / 37800.0,
    -1.0 / 467775.0,
    691.0 / 3831077250.0,
];

fn mat_mul(a: &[Vec<CliffordElement>], b: &[Vec<CliffordElement>]) -> Result<Vec<Vec<CliffordElement>>> {
    let k = a.len();
    let n = a[0][0].dim();
    let mut out = vec![vec![CliffordElement::zero(n); k]; k];
    for i in 0..k {
        for j in 0..k {
            let mut s = CliffordElement::zero(n);
            for l in 0..k {
                s += &a[i][l].exterior_mul(&b[l][j])?;
            }
            out[i][j] = s;
        }
    }
    Ok(out)
}

fn exterior_exp(x: &CliffordElement) -> Result<CliffordElement> {
    let n = x.dim();
    let mut out = CliffordElement::one(n);
    let mut term = CliffordElement::one(n);
    for k in 1..=n {
        term = term.exterior_mul(x)?.scale(1.0 / k as f64);
        if term.norm() == 0.0 {
            break;
        }
        out += &term;
    }
    Ok(out)
}

/// `det^{1/2}(A / sinh A)` with `A = T R / 2` for a square matrix `R` of
/// even forms, through `exp(½ Σ_k c_k tr A^{2k})`, keeping form degrees up
/// to `max_degree`.
pub fn a_hat_series(curvature: &[Vec<CliffordElement>], t: f64, max_degree: usize) -> Result<CliffordElement> {
    let k = curvature.len();
    if k == 0 || curvature.iter().any(|row| row.len() != k) {
        return invalid("curvature must be a non-empty square matrix");
    }
    let n = curvature[0][0].dim();
    if curvature.iter().flatten().any(|x| x.dim() != n || !x.odd_part().coeffs().iter().all(|c| *c == 0.0)) {
        return invalid("curvature entries must be even forms of one dimension");
    }
    let a: Vec<Vec<CliffordElement>> = curvature.iter().map(|row| row.iter().map(|x| x.scale(t / 2.0)).collect()).collect();
    let a2 = mat_mul(&a, &a)?;
    let mut power = a2.clone();
    let mut log = CliffordElement::zero(n);
    for (j, c) in LOG_X_OVER_SINH.iter().enumerate() {
        // A^{2j+2} has form degree at least 4j + 4
        if 4 * (j + 1) > max_degree.min(n) {
            break;
        }
        let tr = (0..k).fold(CliffordElement::zero(n), |s, i| &s + &power[i][i]);
        log += &tr.scale(0.5 * c);
        power = mat_mul(&power, &a2)?;
    }
    let mut out = exterior_exp(&log)?;
    for m in 0..1usize << n {
        if m.count_ones() as usize > max_degree {
            out.set(m, 0.0);
        }
    }
    Ok(out)
}

/// Riemann tensor of the base as a matrix of 2-forms,
/// `R_ij = ½ Σ_{kl} R_ijkl dx^k ∧ dx^l`.
pub fn curvature_two_forms(torus: &FlatTorus) -> Vec<Vec<CliffordElement>> {
    let n = torus.dim();
    let r = torus.riemann();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut f = CliffordElement::zero(n);
                    for k in 0..n {
                        for l in 0..n {
                            if k != l {
                                let m = (1 << k) | (1 << l);
                                let s = wedge_sign(1 << k, 1 << l);
                                f.set(m, f.coeff(m) + 0.5 * s * r[((i * n + j) * n + k) * n + l]);
                            }
                        }
                    }
                    f
                })
                .collect()
        })
        .collect()
}

/// `Â(T)` of a flat torus through the curvature series; identically 1.
pub fn a_hat_form(torus: &FlatTorus, t: f64) -> Result<CliffordElement> {
    a_hat_series(&curvature_two_forms(torus), t, torus.dim())
}

/// Midpoint lattice rule `∫_X f` over the fundamental cell with `grid^n`
/// points.
pub fn lattice_quadrature(torus: &FlatTorus, grid: usize, f: impl Fn(&[f64]) -> Complex64) -> Result<Complex64> {
    let n = torus.dim();
    if grid == 0 {
        return invalid("grid must be positive");
    }
    let total = grid.checked_pow(n as u32).filter(|&x| x <= 1 << 24).ok_or_else(|| Error::Budget("quadrature grid too large".into()))?;
    // compensated sum
    let mut s = Complex64::new(0.0, 0.0);
    let mut comp = Complex64::new(0.0, 0.0);
    let mut u = vec![0.0; n];
    for idx in 0..total {
        let mut r = idx;
        for ui in u.iter_mut() {
            *ui = ((r % grid) as f64 + 0.5) / grid as f64;
            r /= grid;
        }
        let y = f(&torus.from_lattice(&u)) - comp;
        let next = s + y;
        comp = (next - s) - y;
        s = next;
    }
    Ok(s * torus.volume() / total as f64)
}

fn to_clifford(f: &ComplexForm) -> Result<ComplexClifford> {
    ComplexClifford::from_coeffs(f.dim, f.coeffs.clone())
}

/// `(2πT)^{-n/2} ∫_X [Â(T) ∧ ch_T]_top` by lattice quadrature.
pub fn localized_rhs_even(bundle: &TwistBundle, t: f64, grid: usize) -> Result<Complex64> {
    let torus = bundle.base();
    let n = torus.dim();
    if n % 2 != 0 {
        return Err(Error::Unsupported("even localization needs an even-dimensional base".into()));
    }
    if !(t > 0.0) {
        return invalid("time must be positive");
    }
    let a_hat = a_hat_form(torus, t)?.to_complex();
    let ch = to_clifford(&bundle.chern_character_form(t))?;
    let top = a_hat.exterior_mul(&ch)?.top();
    let integral = lattice_quadrature(torus, grid, |_| top)?;
    Ok(integral * (2.0 * PI * t).powf(-(n as f64) / 2.0))
}

/// `(2πT)^{-1/2} ∫_{S^1} ch_T(g)` by lattice quadrature.
pub fn localized_rhs_odd(g: &GaugeMap, t: f64, grid: usize) -> Result<Complex64> {
    if !(t > 0.0) {
        return invalid("time must be positive");
    }
    let circle = FlatTorus::circle(g.length())?;
    let ch = g.odd_chern_character(t);
    let integral = lattice_quadrature(&circle, grid, |_| ch.coeffs[1])?;
    Ok(integral / (2.0 * PI * t).sqrt())
}

/// Largest coefficient of `d f` by central differences with step `h`, over
/// the midpoints of a `4^n` lattice.
pub fn closedness_defect(torus: &FlatTorus, h: f64, form_at: impl Fn(&[f64]) -> ComplexForm) -> Result<f64> {
    let n = torus.dim();
    if !(h > 0.0) {
        return invalid("step must be positive");
    }
    let mut worst = 0.0f64;
    let mut u = vec![0.0; n];
    for idx in 0..4usize.pow(n as u32) {
        let mut r = idx;
        for ui in u.iter_mut() {
            *ui = ((r % 4) as f64 + 0.5) / 4.0;
            r /= 4;
        }
        let x = torus.from_lattice(&u);
        let mut d = vec![Complex64::new(0.0, 0.0); 1 << n];
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let (fp, fm) = (form_at(&xp), form_at(&xm));
            for m in 0..1usize << n {
                let s = wedge_sign(1 << i, m);
                if s != 0.0 {
                    d[m | 1 << i] += s * (fp.coeffs[m] - fm.coeffs[m]) / (2.0 * h);
                }
            }
        }
        worst = d.iter().fold(worst, |w, z| w.max(z.norm()));
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub label: String,
    pub t: f64,
    /// Spectral value of `I_T[BCh]` through the phase dictionary.
    pub spectral: Complex64,
    /// Constant-loop integral.
    pub rhs: Complex64,
    /// Index (even) or spectral flow (odd) after stripping the phase.
    pub integer: i64,
    pub mc: Option<ComplexEstimate>,
    pub spectral_rhs_defect: f64,
    pub mc_z: Option<f64>,
    pub tolerance: f64,
    pub z_max: f64,
    pub passed: bool,
}

/// Landau spectrum with enough levels for the tail budget at `t`.
pub fn landau_spectrum(bundle: &TwistBundle, t: f64) -> Result<SpectralDirac> {
    let mut levels = 400;
    loop {
        let s = SpectralDirac::twisted(bundle, levels, 16)?;
        match s.heat_supertrace(t) {
            Err(Error::Budget(_)) if levels < 1 << 20 => levels *= 4,
            Err(e) => return Err(e),
            Ok(_) => return Ok(s),
        }
    }
}

fn finish(mut r: LocalizationReport, phase: Complex64) -> LocalizationReport {
    let stripped = phases::strip(r.spectral, phase);
    r.integer = stripped.re.round() as i64;
    r.spectral_rhs_defect = (r.spectral - r.rhs).norm();
    r.mc_z = r.mc.as_ref().map(|e| e.z_score(r.spectral));
    r.passed = r.spectral_rhs_defect < r.tolerance
        && (stripped - Complex64::new(r.integer as f64, 0.0)).norm() < r.tolerance
        && r.mc_z.is_none_or(|z| z < r.z_max);
    r
}

/// Spectral supertrace, constant-loop integral and (optionally) the Monte
/// Carlo integral of the even character for a flux bundle on a two-torus.
pub fn localization_check_even(
    bundle: &TwistBundle,
    t: f64,
    mc: Option<(&McConfig, &BchConfig)>,
) -> Result<LocalizationReport> {
    let spectral = landau_spectrum(bundle, t)?.heat_supertrace_complex(t)?;
    let rhs = localized_rhs_even(bundle, t, QUADRATURE_GRID)?;
    let mc = mc.map(|(m, c)| integrate_bch_even(bundle, t, m, c)).transpose()?;
    let fluxes: Vec<String> = bundle.summands().iter().map(|s| format!("{}{}", s.flux, if s.parity == 1 { "-" } else { "+" })).collect();
    let r = LocalizationReport {
        label: format!("flux [{}]", fluxes.join(", ")),
        t,
        spectral,
        rhs,
        integer: 0,
        mc,
        spectral_rhs_defect: 0.0,
        mc_z: None,
        tolerance: 1e-8,
        z_max: 3.0,
        passed: false,
    };
    Ok(finish(r, phases::index_phase(bundle.base().dim())?))
}

/// Spectral flow times `i (2π/T)^{1/2}`, constant-loop integral and
/// (optionally) the Monte Carlo integral of the odd character on a circle.
pub fn localization_check_odd(g: &GaugeMap, spin: u8, t: f64, mc: Option<&McConfig>) -> Result<LocalizationReport> {
    let fam = CircleFamily::new(g, spin, 64)?;
    let sf = fam.spectral_flow(64)?;
    let spectral = phases::flow_factor(1, t)? * sf as f64;
    let rhs = localized_rhs_odd(g, t, QUADRATURE_GRID)?;
    let mc = mc.map(|m| integrate_bch_odd(g, spin, t, m, S_NODES)).transpose()?;
    let r = LocalizationReport {
        label: format!("winding {:?}", g.windings()),
        t,
        spectral,
        rhs,
        integer: 0,
        mc,
        spectral_rhs_defect: 0.0,
        mc_z: None,
        tolerance: 1e-8,
        z_max: 3.0,
        passed: false,
    };
    Ok(finish(r, phases::flow_factor(1, t)?))
}
