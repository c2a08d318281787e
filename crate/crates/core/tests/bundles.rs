use loopint::bundles::{
    integrate_odd_chern, path_ordered_exponential, path_ordered_series, series_tail_bound, GaugeMap, LineSummand,
    OdeConfig, PotentialSpec, TwistBundle,
};
use loopint::clifford::{CliffordMatrix, ComplexClifford};
use loopint::fields::TrigPoly;
use loopint::geometry::{DiscreteLoop, FlatTorus};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn skew() -> FlatTorus {
    FlatTorus::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.0, 1.1])).unwrap()
}

/// Unitary `exp(iH)` from a Hermitian matrix built from `seed` values.
fn unitary(vals: &[f64], r: usize) -> DMatrix<Complex64> {
    let mut h = DMatrix::<Complex64>::zeros(r, r);
    let mut it = vals.iter().cycle();
    for i in 0..r {
        for j in i..r {
            let (a, b) = (*it.next().unwrap(), *it.next().unwrap());
            h[(i, j)] = if i == j { c(a, 0.0) } else { c(a, b) };
            h[(j, i)] = h[(i, j)].conj();
        }
    }
    let e = nalgebra::SymmetricEigen::new(h);
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|x| Complex64::from_polar(1.0, x)));
    &e.eigenvectors * d * e.eigenvectors.adjoint()
}

fn polygon(torus: &FlatTorus, pts: &[[f64; 2]], closing: [i64; 2]) -> DiscreteLoop {
    DiscreteLoop::uniform(torus, pts.iter().flatten().copied().collect(), closing.to_vec()).unwrap()
}

fn phase(m: &DMatrix<Complex64>) -> Complex64 {
    m[(0, 0)]
}

#[test]
fn zero_segment_is_identity() {
    let b = TwistBundle::flux_line(&skew(), 3).unwrap();
    let h = b.segment_holonomy(&[0.3, 0.4], &[0.3, 0.4]);
    assert!((phase(&h) - c(1.0, 0.0)).norm() < 1e-15);
}

#[test]
fn triangle_holonomy_is_area_phase() {
    let t = skew();
    for k in [-2i64, 1, 3] {
        let b = TwistBundle::flux_line(&t, k).unwrap();
        let bs = 2.0 * PI * k as f64 / t.volume();
        let tri = [[0.2, 0.1], [0.5, 0.15], [0.3, 0.45]];
        let area = 0.5 * ((tri[1][0] - tri[0][0]) * (tri[2][1] - tri[0][1]) - (tri[2][0] - tri[0][0]) * (tri[1][1] - tri[0][1]));
        let lp = polygon(&t, &tri, [0, 0]);
        let expect = Complex64::from_polar(1.0, -bs * area);
        assert!((phase(&b.loop_holonomy(&lp)) - expect).norm() < 1e-12);
        // same loop traced through many tiny segments
        let mut fine = Vec::new();
        for j in 0..3 {
            let (p, q) = (tri[j], tri[(j + 1) % 3]);
            for s in 0..50 {
                let a = s as f64 / 50.0;
                fine.push([p[0] + a * (q[0] - p[0]), p[1] + a * (q[1] - p[1])]);
            }
        }
        let lf = polygon(&t, &fine, [0, 0]);
        assert!((phase(&b.loop_holonomy(&lf)) - expect).norm() < 1e-12);
    }
}

#[test]
fn fundamental_domain_boundary_is_trivial() {
    let t = skew();
    let corners = [t.from_lattice(&[0.0, 0.0]), t.from_lattice(&[1.0, 0.0]), t.from_lattice(&[1.0, 1.0]), t.from_lattice(&[0.0, 1.0])];
    let pts: Vec<[f64; 2]> = corners.iter().map(|p| [p[0], p[1]]).collect();
    for k in -3..=3 {
        let b = TwistBundle::flux_line(&t, k).unwrap();
        let h = b.loop_holonomy(&polygon(&t, &pts, [0, 0]));
        assert!((phase(&h) - c(1.0, 0.0)).norm() < 1e-12, "{k}");
    }
}

proptest! {
    #[test]
    fn holonomy_is_independent_of_base_point_and_lift(
        steps in prop::collection::vec(prop::array::uniform2(-0.3f64..0.3), 7),
        lam in prop::array::uniform2(-2i64..=2),
        shift in prop::array::uniform2(-2i64..=2),
        rot in 1usize..8,
        k in -3i64..=3,
    ) {
        let t = skew();
        let b = TwistBundle::flux_line(&t, k).unwrap();
        let mut pts = vec![[0.1, 0.2]];
        for s in &steps {
            let p = pts.last().unwrap();
            pts.push([p[0] + s[0], p[1] + s[1]]);
        }
        let lp = polygon(&t, &pts, lam);
        let h = phase(&b.loop_holonomy(&lp));
        prop_assert!((h.norm() - 1.0).abs() < 1e-12);
        // translate every lift by a lattice vector
        let sv = t.lattice_vector(&shift);
        let moved: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] + sv[0], p[1] + sv[1]]).collect();
        prop_assert!((phase(&b.loop_holonomy(&polygon(&t, &moved, lam))) - h).norm() < 1e-9);
        // start the loop at another node
        let rotated = lp.rotate(&t, rot as f64 / 8.0).unwrap();
        prop_assert!((phase(&b.loop_holonomy(&rotated)) - h).norm() < 1e-9);
    }

    #[test]
    fn gauge_frame_conjugates_holonomy(vals in prop::collection::vec(-3.0f64..3.0, 12), k1 in -2i64..=2, k2 in -2i64..=2) {
        let t = skew();
        let plain = TwistBundle::new(&t, vec![LineSummand { flux: k1, parity: 0 }, LineSummand { flux: k2, parity: 0 }]).unwrap();
        let w = unitary(&vals, 2);
        let rotated = plain.clone().with_frame(w.clone()).unwrap();
        let lp = polygon(&t, &[[0.0, 0.0], [0.4, 0.1], [0.7, 0.6], [0.2, 0.9]], [1, 0]);
        let h0 = plain.loop_holonomy(&lp);
        let h1 = rotated.loop_holonomy(&lp);
        let conj = &w * &h0 * w.adjoint();
        prop_assert!((h1.clone() - conj).iter().all(|z| z.norm() < 1e-12));
        prop_assert!((h1.trace() - h0.trace()).norm() < 1e-12);
        prop_assert!((h1.adjoint() * &h1 - DMatrix::identity(2, 2)).iter().all(|z| z.norm() < 1e-12));
    }
}

#[test]
fn curvature_normalization() {
    let t = skew();
    let triv = TwistBundle::trivial(&t, 1, 0).unwrap();
    assert!(triv.curvature_at(&[0.0, 0.0]).iter().all(|z| z.norm() == 0.0));
    for k in [1i64, 2, -3] {
        let f = TwistBundle::flux_line(&t, k).unwrap().curvature_at(&[0.1, 0.1]);
        let g = TwistBundle::flux_line(&t, -k).unwrap().curvature_at(&[0.1, 0.1]);
        assert!((f[(0, 0)] + g[(0, 0)]).norm() < 1e-15);
        let total = f.trace() * t.volume();
        assert!((total.norm() - 2.0 * PI * k.abs() as f64).abs() < 1e-12);
        assert!((total - c(0.0, 2.0 * PI * k as f64)).norm() < 1e-12);
    }
}

#[test]
fn chern_character_examples() {
    let t = FlatTorus::unit(2);
    let b = TwistBundle::trivial(&t, 3, 1).unwrap();
    let ch = b.chern_character_form(0.7);
    assert_eq!(ch.coeffs[0], c(2.0, 0.0));
    assert_eq!(ch.top(), c(0.0, 0.0));
    for k in [-2i64, 1, 2] {
        let ch = TwistBundle::flux_line(&t, k).unwrap().chern_character_form(0.4);
        assert!((ch.integrate(&t) - c(0.0, -2.0 * PI * k as f64 * 0.4)).norm() < 1e-12);
        assert_eq!(ch.coeffs[0], c(1.0, 0.0));
    }
    // tensor products add fluxes, direct sums add characters
    let a = TwistBundle::flux_line(&t, 1).unwrap();
    let bb = TwistBundle::flux_line(&t, 2).unwrap();
    let ts = a.tensor(&bb).unwrap();
    assert_eq!(ts.summands()[0].flux, 3);
    let ds = a.direct_sum(&bb).unwrap().chern_character_form(1.0);
    let sum = a.chern_character_form(1.0).top() + bb.chern_character_form(1.0).top();
    assert!((ds.top() - sum).norm() < 1e-12);
}

#[test]
fn zero_potential_gives_holonomy() {
    let t = skew().with_spin(&[1, 0]).unwrap();
    let b = TwistBundle::flux_line(&t, 2).unwrap();
    let lp = polygon(&t, &[[0.0, 0.1], [0.3, 0.2], [0.6, 0.5], [0.9, 0.3]], [1, 0]);
    let u = path_ordered_exponential(&b, &lp, 1.0, &PotentialSpec::zero(), &OdeConfig::default()).unwrap();
    let hol = b.loop_holonomy(&lp);
    // spin sign -1 from winding once along the antiperiodic generator
    let expect = CliffordMatrix::from_matrix(2, &hol).scale(c(-1.0, 0.0));
    assert!(u.max_abs_diff(&expect) < 1e-12);
}

#[test]
fn scalar_potential_on_trivial_bundle() {
    let t = FlatTorus::unit(2);
    let b = TwistBundle::trivial(&t, 1, 0).unwrap();
    let f = TrigPoly::cos_sin(&[1, 0], 0.8, 0.3).add(&TrigPoly::cos_sin(&[1, -1], 0.5, 0.0)).add(&TrigPoly::constant(2, 0.2));
    let v = PotentialSpec::scalar(f.clone(), 2, 1).unwrap();
    let pts = [[0.0, 0.0], [0.2, 0.3], [0.5, 0.1], [0.7, 0.6]];
    let lp = polygon(&t, &pts, [1, 0]);
    let time = 0.9;
    let run = |k| path_ordered_exponential(&b, &lp, time, &v, &OdeConfig { substeps: k, richardson: true }).unwrap().entry(0, 0).scalar_part();
    // Simpson oracle for ∫ V(γ(t)) dt along the polygon
    let mut integral = 0.0;
    for j in 0..4 {
        let a = lp.lift(j).to_vec();
        let e = lp.next_lift(j);
        let k = 400;
        let mut s = 0.0;
        for i in 0..=k {
            let w = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let x = i as f64 / k as f64;
            let p = [a[0] + x * (e[0] - a[0]), a[1] + x * (e[1] - a[1])];
            s += w * f.eval(&t, &p).re;
        }
        integral += s / (3.0 * k as f64) * 0.25;
    }
    let expect = (-time * integral).exp();
    let (e1, e2) = ((run(16) - expect).norm(), (run(32) - expect).norm());
    assert!(e1 < 1e-6 && e2 < 1e-7, "{e1} {e2}");
    // extrapolated splitting is fourth order
    assert!(e1 / e2 > 10.0, "{e1} {e2}");
}

fn clifford_potential(t: &FlatTorus) -> PotentialSpec {
    let e12 = ComplexClifford::monomial(2, 0b11, c(0.0, 1.0));
    let e1 = ComplexClifford::monomial(2, 0b01, c(0.0, 1.0));
    let m1 = CliffordMatrix::kron(&e12, &DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.5), c(0.0, -0.5), c(-0.3, 0.0)]));
    let m2 = CliffordMatrix::kron(&e1, &DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]));
    let _ = t;
    PotentialSpec::new(vec![(TrigPoly::cos_sin(&[0, 1], 0.7, 0.2), m1), (TrigPoly::cos_sin(&[1, 1], 0.0, 0.6).add(&TrigPoly::constant(2, 0.4)), m2)]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn series_matches_ode_within_tail(steps in prop::collection::vec(prop::array::uniform2(-0.3f64..0.3), 5), k1 in -2i64..=2, k2 in -2i64..=2) {
        let t = skew();
        let b = TwistBundle::new(&t, vec![LineSummand { flux: k1, parity: 0 }, LineSummand { flux: k2, parity: 1 }]).unwrap();
        let v = clifford_potential(&t);
        let mut pts = vec![[0.1, 0.1]];
        for s in &steps {
            let p = pts.last().unwrap();
            pts.push([p[0] + s[0], p[1] + s[1]]);
        }
        let lp = polygon(&t, &pts, [0, 1]);
        let time = 0.5;
        let cfg = OdeConfig { substeps: 6, richardson: false };
        let ode = path_ordered_exponential(&b, &lp, time, &v, &cfg).unwrap();
        let orders = path_ordered_series(&b, &lp, time, &v, 6, 10);
        let mut sum = orders[0].clone();
        for o in &orders[1..] {
            sum = sum.add(o);
        }
        let tail = series_tail_bound(time, &v, 10);
        prop_assert!(tail < 1e-4);
        prop_assert!(ode.max_abs_diff(&sum) <= tail.max(1e-8), "{} > {}", ode.max_abs_diff(&sum), tail);
        // Richardson-extrapolated product converges under refinement
        let r1 = path_ordered_exponential(&b, &lp, time, &v, &OdeConfig { substeps: 8, richardson: true }).unwrap();
        let r2 = path_ordered_exponential(&b, &lp, time, &v, &OdeConfig { substeps: 16, richardson: true }).unwrap();
        let r3 = path_ordered_exponential(&b, &lp, time, &v, &OdeConfig { substeps: 32, richardson: true }).unwrap();
        let (d1, d2) = (r1.max_abs_diff(&r2), r2.max_abs_diff(&r3));
        prop_assert!(d2 < 1e-5 && d2 < d1 / 8.0, "{} {}", d1, d2);
    }
}

#[test]
fn potential_must_be_self_adjoint() {
    let e1 = ComplexClifford::monomial(2, 0b01, c(1.0, 0.0));
    let m = CliffordMatrix::kron(&e1, &DMatrix::identity(1, 1));
    assert!(PotentialSpec::new(vec![(TrigPoly::constant(2, 1.0), m)]).is_err());
}

#[test]
fn gauge_maps_on_the_circle() {
    let g0 = GaugeMap::circle_winding(1.0, 0).unwrap();
    assert_eq!(g0.maurer_cartan(0.3)[(0, 0)], c(0.0, 0.0));
    assert_eq!(integrate_odd_chern(&g0, 1.0), c(0.0, 0.0));
    for m in [-2i64, 1, 3] {
        let g = GaugeMap::circle_winding(1.0, m).unwrap();
        assert!((g.maurer_cartan(0.0)[(0, 0)] - c(0.0, 2.0 * PI * m as f64)).norm() < 1e-14);
        assert!((integrate_odd_chern(&g, 0.7) - c(0.0, 2.0 * PI * m as f64)).norm() < 1e-12);
    }
    let a = GaugeMap::diagonal(1.0, vec![1, -2]).unwrap().with_frame(unitary(&[0.3, 1.0, -0.2, 0.5], 2)).unwrap();
    let b = GaugeMap::diagonal(1.0, vec![2, 2]).unwrap().with_frame(a.frame().clone()).unwrap();
    let ab = a.product(&b).unwrap();
    let lhs = integrate_odd_chern(&ab, 1.0);
    let rhs = integrate_odd_chern(&a, 1.0) + integrate_odd_chern(&b, 1.0);
    assert!((lhs - rhs).norm() < 1e-10);
    // g(x+h) g(x)^{-1} - 1 over h approaches ω at first order
    let x = 0.37;
    let errs: Vec<f64> = [1e-3, 5e-4]
        .iter()
        .map(|&h| {
            let fd = (a.eval(x + h) - a.eval(x)) * a.eval(x).adjoint() / c(h, 0.0);
            let omega = a.eval(x) * a.maurer_cartan(x) * a.eval(x).adjoint();
            (fd - omega).iter().map(|z| z.norm()).fold(0.0, f64::max)
        })
        .collect();
    assert!(errs[0] < 0.1 && (errs[0] / errs[1] - 2.0).abs() < 0.1, "{errs:?}");
    // ω is anti-hermitian and dg = g ω
    let w = a.maurer_cartan(x);
    assert!((w.clone() + w.adjoint()).iter().all(|z| z.norm() < 1e-12));
}

#[test]
fn holonomy_variation_is_first_order_accurate() {
    let t = skew();
    let b = TwistBundle::flux_line(&t, 2).unwrap();
    let pts = [[0.0, 0.0], [0.3, 0.1], [0.5, 0.4], [0.2, 0.6], [-0.1, 0.3]];
    let v: Vec<Vec<f64>> = vec![vec![0.1, 0.3], vec![-0.2, 0.1], vec![0.3, 0.3], vec![0.0, -0.4], vec![0.2, 0.1]];
    let lp = polygon(&t, &pts, [1, 0]);
    let exact = b.holonomy_variation(&lp, &v).unwrap()[(0, 0)];
    let defect = |eps: f64| {
        let moved: Vec<[f64; 2]> = pts.iter().zip(&v).map(|(p, w)| [p[0] + eps * w[0], p[1] + eps * w[1]]).collect();
        let fd = (b.loop_holonomy(&polygon(&t, &moved, [1, 0]))[(0, 0)] - b.loop_holonomy(&lp)[(0, 0)]) / eps;
        (fd - exact).norm()
    };
    let (d1, d2) = (defect(1e-3), defect(5e-4));
    // second-order remainder is about ε |exact|² / 2
    assert!(d1 < 1e-3 * exact.norm_sqr());
    assert!((d1 / d2 - 2.0).abs() < 0.2, "{d1} {d2}");
    let triv = TwistBundle::trivial(&t, 1, 0).unwrap();
    assert!(triv.holonomy_variation(&lp, &v).unwrap()[(0, 0)].norm() < 1e-15);
}
