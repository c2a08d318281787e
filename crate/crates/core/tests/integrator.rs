use std::f64::consts::PI;

use loopint::bundles::TwistBundle;
use loopint::fields::{FormField, TrigPoly};
use loopint::geometry::FlatTorus;
use loopint::integrator::{
    fiber_integration_check, integrate_mc, integrate_rel_mc, integrate_rel_over_torus, integrate_spectral,
    refinement_sweep, rotation_pair_mc, McConfig, SpectralConfig,
};
use loopint::loopforms::{Density, IntegralForm};
use loopint::qfunctional::q;
use loopint::wiener::McOptions;
use nalgebra::DMatrix;

fn field(n: usize, mask: usize, f: TrigPoly) -> FormField {
    FormField::monomial(n, mask, f).unwrap()
}

fn one(n: usize) -> TrigPoly {
    TrigPoly::constant(n, 1.0)
}

/// `c + a cos 2π<k,u> + b sin 2π<k,u>`.
fn wave(k: &[i64], c: f64, a: f64, b: f64) -> TrigPoly {
    TrigPoly::cos_sin(k, a, b).add(&TrigPoly::constant(k.len(), c))
}

fn insert(t: f64, f: &FormField) -> IntegralForm {
    IntegralForm::insert_at(t, f).unwrap()
}

fn lift(phi: Density, f: &FormField) -> IntegralForm {
    IntegralForm::lift_form(phi, f).unwrap()
}

fn profile(k: i64, c: f64, a: f64, b: f64) -> Density {
    match Density::cos_sin(k, a, b) {
        Density::Trig(p) => Density::trig(p.add(&TrigPoly::constant(1, c))).unwrap(),
        d => d,
    }
}

fn wedge(a: &IntegralForm, b: &IntegralForm) -> IntegralForm {
    a.wedge(b).unwrap()
}

fn spectral(torus: &FlatTorus, theta: &IntegralForm, t: f64) -> f64 {
    integrate_spectral(torus, theta, t, &SpectralConfig::default()).unwrap().value
}

#[test]
fn unit_form_integrates_to_the_heat_supertrace() {
    for spin in [[0u8, 0], [1, 0], [1, 1]] {
        let torus = FlatTorus::unit(2).with_spin(&spin).unwrap();
        let theta = IntegralForm::one(2);
        assert!(spectral(&torus, &theta, 0.7).abs() < 1e-12);
        let e = integrate_mc(&torus, &theta, 0.7, &McConfig::new(8, 2048, 1)).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.z_score(0.0) <= 3.0);
    }
}

#[test]
fn constant_insert_pair_is_minus_the_spinor_heat_trace() {
    // q = -1 on every loop up to the spin sign of its winding
    let theta = wedge(&insert(0.625, &field(2, 0b10, one(2))), &insert(0.25, &field(2, 0b01, one(2))));
    for (spin, shift) in [([0u8, 0], [0.0, 0.0]), ([1, 0], [0.5, 0.0])] {
        let torus = FlatTorus::unit(2).with_spin(&spin).unwrap();
        for t in [0.3, 1.0, 2.5] {
            let exact = -torus.heat_trace(t, &shift).unwrap();
            assert!((spectral(&torus, &theta, t) - exact).abs() < 1e-10, "spin {spin:?} T {t}");
        }
        let e = integrate_mc(&torus, &theta, 0.5, &McConfig::new(16, 8192, 2)).unwrap();
        let exact = -torus.heat_trace(0.5, &shift).unwrap();
        assert!(e.z_score(exact) < 3.0, "{} vs {exact} ± {}", e.value, e.stderr);
    }
}

#[test]
fn spectral_value_is_stable_under_the_cutoff() {
    let torus = FlatTorus::unit(2);
    let theta = wedge(
        &insert(0.7, &field(2, 0b10, wave(&[1, 1], 0.2, 0.8, -0.3))),
        &insert(0.2, &field(2, 0b01, wave(&[0, 1], 0.5, 0.4, 0.6))),
    );
    for t in [0.25, 1.0] {
        let a = integrate_spectral(&torus, &theta, t, &SpectralConfig { cutoff: 16, nodes: 16 }).unwrap();
        let b = integrate_spectral(&torus, &theta, t, &SpectralConfig { cutoff: 24, nodes: 16 }).unwrap();
        assert!((a.value - b.value).abs() < 1e-8, "{a:?} {b:?}");
        assert!(a.value.abs() > 1e-4);
    }
}

#[test]
fn cutoff_too_small_is_a_budget_error() {
    let torus = FlatTorus::unit(2);
    let theta = insert(0.5, &field(2, 0b11, one(2)));
    assert!(integrate_spectral(&torus, &theta, 0.001, &SpectralConfig { cutoff: 2, nodes: 4 }).is_err());
}

/// Forms of up to three factors paired with their torus.
fn battery() -> Vec<(&'static str, FlatTorus, IntegralForm)> {
    let t2 = FlatTorus::unit(2);
    let skew = FlatTorus::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 0.9])).unwrap();
    let f = field(2, 0b01, wave(&[1, 0], 0.3, 0.7, 0.4));
    let g = field(2, 0b10, wave(&[1, -1], 0.5, -0.6, 0.2));
    let h = wave(&[0, 1], 0.8, 0.5, -0.4);
    let pair = wedge(&insert(0.75, &g), &insert(0.25, &f));
    let t3 = FlatTorus::unit(3);
    let f3 = |i: usize, k: [i64; 3]| field(3, 1 << i, wave(&k, 0.6, 0.5, 0.3));
    let circle = FlatTorus::circle(1.3).unwrap();
    vec![
        ("point pair", t2.clone(), pair.clone()),
        ("point pair, skew lattice", skew, pair.clone()),
        ("point pair, spin (1,0)", t2.clone().with_spin(&[1, 0]).unwrap(), pair.clone()),
        ("density and point", t2.clone(), wedge(&lift(profile(1, 1.0, 0.5, 0.2), &f), &insert(0.5, &g))),
        ("two densities", t2.clone(), wedge(&lift(profile(1, 0.8, 0.3, 0.0), &g), &lift(profile(2, 1.0, 0.0, 0.4), &f))),
        (
            "function and point pair",
            t2.clone(),
            wedge(&IntegralForm::lift_function(profile(1, 1.0, 0.4, 0.0), &h).unwrap(), &pair),
        ),
        ("two-form point", t2.clone(), insert(0.375, &field(2, 0b11, h.clone()))),
        (
            "three one-forms on T³",
            t3,
            wedge(&wedge(&insert(0.75, &f3(2, [1, 0, 0])), &insert(0.5, &f3(1, [0, 0, 1]))), &insert(0.25, &f3(0, [0, 1, 0]))),
        ),
        ("circle", circle, insert(0.5, &field(1, 0b1, wave(&[1], 1.0, 0.7, 0.0)))),
    ]
}

#[test]
fn monte_carlo_agrees_with_the_spectral_evaluator() {
    let t = 0.6;
    for (i, (name, torus, theta)) in battery().into_iter().enumerate() {
        let exact = spectral(&torus, &theta, t);
        let e = integrate_mc(&torus, &theta, t, &McConfig::new(32, 1 << 15, 100 + i as u64)).unwrap();
        let z = e.z_score(exact);
        println!("{name}: spectral {exact:.6} mc {:.6} ± {:.6} (z = {z:.2})", e.value, e.stderr);
        assert!(z < 3.0, "{name}");
    }
}

#[test]
fn degree_zero_forms_match_the_spectral_value() {
    // Str(f e^{-TH}) vanishes for scalar f; with the spin-twisted
    // two-form it does not
    let torus = FlatTorus::unit(2);
    let h = wave(&[1, 0], 0.5, 1.0, 0.0);
    let theta = IntegralForm::lift_function(Density::constant(1.0), &h).unwrap();
    assert!(spectral(&torus, &theta, 0.8).abs() < 1e-12);
    let e = integrate_mc(&torus, &theta, 0.8, &McConfig::new(16, 4096, 3)).unwrap();
    assert_eq!(e.value, 0.0);
    let vol = insert(0.5, &field(2, 0b11, one(2)));
    let mixed = wedge(&theta, &vol);
    let s = spectral(&torus, &mixed, 0.8);
    let e = integrate_mc(&torus, &mixed, 0.8, &McConfig::new(16, 1 << 14, 4)).unwrap();
    assert!(e.z_score(s) < 3.0, "{s} vs {} ± {}", e.value, e.stderr);
}

#[test]
fn linearity_holds_per_sample() {
    let torus = FlatTorus::unit(2);
    let theta = battery().remove(3).2;
    let cfg = McConfig::new(16, 2048, 5);
    let a = integrate_mc(&torus, &theta, 0.5, &cfg).unwrap();
    let b = integrate_mc(&torus, &theta.scale(-2.5), 0.5, &cfg).unwrap();
    assert!((b.value + 2.5 * a.value).abs() < 1e-12);
    assert!((b.stderr - 2.5 * a.stderr).abs() < 1e-12);
}

#[test]
fn scalar_curvature_weight_is_exact() {
    let torus = FlatTorus::unit(2);
    let theta = battery().remove(0).2;
    let mut cfg = McConfig::new(16, 2048, 6);
    let a = integrate_mc(&torus, &theta, 0.9, &cfg).unwrap();
    cfg.scal = Some(2.0);
    let b = integrate_mc(&torus, &theta, 0.9, &cfg).unwrap();
    let w = (-0.9 * 2.0 / 8.0f64).exp();
    assert!((b.value - w * a.value).abs() < 1e-12 * a.value.abs().max(1.0));
    // the unit form stays zero
    assert_eq!(integrate_mc(&torus, &IntegralForm::one(2), 0.9, &cfg).unwrap().value, 0.0);
}

#[test]
fn odd_forms_vanish_on_even_tori() {
    let torus = FlatTorus::unit(2);
    let theta = insert(0.25, &field(2, 0b01, wave(&[1, 0], 1.0, 0.5, 0.5)));
    let e = integrate_mc(&torus, &theta, 0.5, &McConfig::new(16, 2048, 7)).unwrap();
    assert_eq!(e.value, 0.0);
    assert!(spectral(&torus, &theta, 0.5).abs() < 1e-12);
}

#[test]
fn grid_rotation_is_exact_per_sample() {
    let torus = FlatTorus::unit(2);
    for (name, torus, theta) in battery().into_iter().take(6).map(|(n, t, f)| (n, t.clone(), f)).chain([("skew", torus.clone(), IntegralForm::one(2))]) {
        let [a, b, d] = rotation_pair_mc(&torus, &theta, 0.5, 5, &McConfig::new(16, 1024, 8)).unwrap();
        assert!(d.value.abs() < 1e-10, "{name}: {}", d.value);
        assert!((a.value - b.value).abs() < 1e-10, "{name}");
    }
}

#[test]
fn relative_map_of_the_unit_form_is_the_heat_kernel_diagonal() {
    let x = [0.3, 0.8];
    for (spin, sign) in [([0u8, 0], [1.0f64, 1.0]), ([1, 0], [-1.0, 1.0])] {
        let torus = FlatTorus::unit(2).with_spin(&spin).unwrap();
        let t = 0.7;
        // 2^{n/2} Σ_λ ±exp(-|λ|²/2T) / 2πT
        let mut diag = 0.0;
        for l1 in -6i64..=6 {
            for l2 in -6i64..=6 {
                let s = sign[0].powi(l1 as i32) * sign[1].powi(l2 as i32);
                diag += s * (-((l1 * l1 + l2 * l2) as f64) / (2.0 * t)).exp();
            }
        }
        diag *= 2.0 / (2.0 * PI * t);
        let r = integrate_rel_mc(&torus, &IntegralForm::one(2), t, &x, &McConfig::new(8, 1 << 14, 9)).unwrap();
        if spin == [0, 0] {
            // every loop contributes the same value
            assert!((r.components[0].value - diag).abs() < 1e-10);
        } else {
            assert!(r.components[0].z_score(diag) < 3.0, "{} vs {diag}", r.components[0].value);
        }
        for mask in 1..4 {
            assert_eq!(r.components[mask].value, 0.0);
        }
        let total = integrate_rel_over_torus(&torus, &IntegralForm::one(2), t, 3, &McConfig::new(8, 1024, 10)).unwrap();
        assert_eq!(total.value, 0.0);
    }
}

#[test]
fn relative_map_integrates_to_the_absolute_one() {
    let (_, torus, theta) = battery().remove(0);
    let t = 0.6;
    let abs = integrate_mc(&torus, &theta, t, &McConfig::new(16, 1 << 15, 11)).unwrap();
    let rel = integrate_rel_over_torus(&torus, &theta, t, 6, &McConfig::new(16, 1 << 12, 12)).unwrap();
    let exact = spectral(&torus, &theta, t);
    let combined = (abs.stderr.powi(2) + rel.stderr.powi(2)).sqrt();
    println!("abs {} ± {}, rel {} ± {}, spectral {exact}", abs.value, abs.stderr, rel.value, rel.stderr);
    assert!((abs.value - rel.value).abs() < 3.0 * combined);
    assert!(rel.z_score(exact) < 3.0);
}

#[test]
fn relative_map_is_even() {
    let (_, torus, theta) = battery().remove(3);
    let r = integrate_rel_mc(&torus, &theta, 0.6, &[0.1, 0.4], &McConfig::new(16, 4096, 13)).unwrap();
    for mask in [1usize, 2] {
        assert_eq!(r.components[mask].value, 0.0);
    }
    assert_eq!(r.degree_z(1), 0.0);
}

#[test]
fn fiber_integration_identity() {
    let torus = FlatTorus::unit(2);
    let dx = field(2, 0b01, one(2));
    let cfg = McConfig::new(16, 1 << 13, 14);
    let c = fiber_integration_check(&torus, &dx, &IntegralForm::one(2), 0.6, 4, 3, &cfg).unwrap();
    assert!(c.defect <= 3.0 * c.combined_stderr || c.defect == 0.0);
    let zero = fiber_integration_check(&torus, &FormField::zero(2), &IntegralForm::one(2), 0.6, 4, 3, &cfg).unwrap();
    assert_eq!((zero.lhs.value, zero.rhs.value), (0.0, 0.0));
    // a rotation-invariant density form on the other side
    let g = field(2, 0b10, wave(&[1, 0], 0.4, 0.8, 0.3));
    let theta = lift(Density::constant(1.0), &g);
    let a = fiber_integration_check(&torus, &dx, &theta, 0.6, 4, 6, &cfg).unwrap();
    let b = fiber_integration_check(&torus, &dx.scale(2.0), &theta, 0.6, 4, 6, &cfg).unwrap();
    println!("{a:?}");
    assert!(a.defect < 3.0 * a.combined_stderr);
    assert!(a.lhs.value.abs() > 3.0 * a.lhs.stderr);
    assert!((b.lhs.value - 2.0 * a.lhs.value).abs() < 1e-12);
    assert!((b.rhs.value - 2.0 * a.rhs.value).abs() < 1e-12);
}

#[test]
fn untwisted_integrand_has_no_grid_dependence() {
    let (_, torus, theta) = battery().remove(0);
    let s = refinement_sweep(&torus, 0.6, &[4, 8, 16], 2048, &McOptions::seeded(15), |lp| Ok(q(&torus, lp, &theta)?.value)).unwrap();
    for d in &s.differences {
        assert!(d.value.abs() < 1e-12);
    }
    assert_eq!(s.value, s.estimates[2].value);
}

#[test]
fn flux_holonomy_converges_under_refinement() {
    // W_T[tr hol] = Tr exp(-T ∇*∇/2) = |k| / (2 sinh(T b/2)), b = 2π|k|/vol
    let torus = FlatTorus::unit(2);
    let k = 2;
    let bundle = TwistBundle::flux_line(&torus, k).unwrap();
    let t = 0.25;
    let b = 2.0 * PI * k as f64;
    let exact = k as f64 / (2.0 * (t * b / 2.0).sinh());
    let s = refinement_sweep(&torus, t, &[4, 8, 16, 64, 256], 1 << 15, &McOptions::seeded(16), |lp| {
        Ok(bundle.loop_holonomy(lp).trace().re)
    })
    .unwrap();
    for (e, m) in s.estimates.iter().zip(&s.grids) {
        println!("m = {m}: {} ± {} (exact {exact})", e.value, e.stderr);
    }
    assert!(s.slope.unwrap() < 0.0, "{:?}", s.slope);
    assert!((s.value - exact).abs() < 3.0 * s.stderr, "{} vs {exact}", s.value);
    assert!(s.defect < (s.estimates[0].value - exact).abs());
}
