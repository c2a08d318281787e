use std::collections::BTreeMap;

use loopint::clifford::{permutations, super_sign, CliffordElement};
use loopint::fields::{FormField, TrigPoly};
use loopint::geometry::{DiscreteLoop, FlatTorus};
use loopint::loopforms::{BlockAtom, BlockMeasure, Density, IntegralForm, TimeProfile};
use loopint::qfunctional::function_value;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dx(n: usize, i: usize) -> FormField {
    FormField::monomial(n, 1 << i, TrigPoly::constant(n, 1.0)).unwrap()
}

/// Random constant-coefficient form of degree `l`.
fn random_form(rng: &mut ChaCha8Rng, n: usize, l: usize) -> FormField {
    let mut e = CliffordElement::zero(n);
    for m in 0..1usize << n {
        if m.count_ones() as usize == l {
            e.set(m, rng.gen_range(-1.0..1.0));
        }
    }
    FormField::from_element(&e)
}

/// Random form with a non-constant coefficient.
fn random_field(rng: &mut ChaCha8Rng, n: usize, l: usize) -> FormField {
    let mut f = FormField::zero(n);
    for m in 0..1usize << n {
        if m.count_ones() as usize != l {
            continue;
        }
        let mut k = vec![0i64; n];
        k[rng.gen_range(0..n)] = rng.gen_range(-2..=2);
        let p = TrigPoly::cos_sin(&k, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            .add(&TrigPoly::constant(n, rng.gen_range(-1.0..1.0)));
        f = f.add(&FormField::monomial(n, m, p).unwrap()).unwrap();
    }
    f
}

fn wiggly_loop(torus: &FlatTorus, m: usize, rng: &mut ChaCha8Rng) -> DiscreteLoop {
    let n = torus.dim();
    let lifts: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-0.7..0.7)).collect();
    DiscreteLoop::uniform(torus, lifts, vec![0; n]).unwrap()
}

fn random_times(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        let mut t: Vec<f64> = (0..k).map(|_| rng.gen_range(0..64) as f64 / 64.0).collect();
        let mut s = t.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s.dedup();
        if s.len() == k {
            t.shrink_to_fit();
            return t;
        }
    }
}

/// Wedge of point-mass inserts, first entry leftmost.
fn inserts(pairs: &[(f64, FormField)]) -> IntegralForm {
    let n = pairs[0].1.dim();
    let mut out = IntegralForm::one(n);
    for (t, f) in pairs {
        out = out.wedge(&IntegralForm::insert_at(*t, f).unwrap()).unwrap();
    }
    out
}

#[test]
fn lifting_zero_gives_zero() {
    let f = IntegralForm::lift_form(Density::constant(1.0), &FormField::zero(2)).unwrap();
    assert!(f.terms().is_empty());
    assert!(f.is_zero());
}

#[test]
fn lifted_function_on_constant_loop() {
    let torus = FlatTorus::unit(2);
    let f = TrigPoly::cos_sin(&[1, 2], 0.7, -0.3).add(&TrigPoly::constant(2, 0.25));
    let x = [0.31, 0.77];
    let lp = DiscreteLoop::constant(&torus, &x, 16).unwrap();
    let theta = IntegralForm::lift_function(Density::constant(1.0), &f).unwrap();
    let v = function_value(&torus, &lp, &theta).unwrap();
    assert!((v - f.eval(&torus, &x).re).abs() < 1e-14);
    // insert_at(0, f) reads the loop at its base point
    let lp = wiggly_loop(&torus, 8, &mut ChaCha8Rng::seed_from_u64(2));
    let theta = IntegralForm::insert_at(0.0, &FormField::function(f.clone()).unwrap()).unwrap();
    let v = function_value(&torus, &lp, &theta).unwrap();
    assert!((v - f.eval(&torus, lp.lift(0)).re).abs() < 1e-14);
}

#[test]
fn recorded_jacobians() {
    let two = dx(2, 0).wedge(&dx(2, 1)).unwrap();
    let lifted = IntegralForm::lift_form(Density::constant(1.0), &two).unwrap();
    let f = &lifted.terms()[0].factors[0];
    assert_eq!(f.degree, 2);
    assert!((f.jacobian() - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(f.weight, 1.0);
    let inserted = IntegralForm::insert_at(0.5, &two).unwrap();
    assert!((inserted.terms()[0].factors[0].weight - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn unit_is_neutral() {
    let theta = inserts(&[(0.25, dx(3, 0)), (0.5, dx(3, 2))]);
    let one = IntegralForm::one(3);
    assert_eq!(theta.wedge(&one).unwrap(), theta);
    assert_eq!(one.wedge(&theta).unwrap(), theta);
}

#[test]
fn rotating_point_masses() {
    let a = dx(2, 1);
    let theta = IntegralForm::insert_at(0.25, &a).unwrap();
    assert_eq!(theta.rotate(0.0), theta);
    assert_eq!(theta.rotate(0.5), IntegralForm::insert_at(0.75, &a).unwrap());
    assert_eq!(theta.rotate(0.125), IntegralForm::insert_at(0.125, &a).unwrap());
}

#[test]
fn odd_swap_flips_sign() {
    let torus = FlatTorus::unit(3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lp = wiggly_loop(&torus, 8, &mut rng);
    let a = random_field(&mut rng, 3, 1);
    let b = random_field(&mut rng, 3, 1);
    let ab = inserts(&[(0.125, a.clone()), (0.625, b.clone())]).raw_measure(&torus, &lp).unwrap();
    let ba = inserts(&[(0.625, b), (0.125, a)]).raw_measure(&torus, &lp).unwrap();
    assert!(ab.add(&ba).unwrap().max_abs_diff(&ab.scale(0.0)) < 1e-14);
    assert!(ab.max_abs_diff(&ab.scale(0.0)) > 1e-3);
}

#[test]
fn two_form_wedge_matches_s4_antisymmetrization() {
    let n = 4;
    let torus = FlatTorus::unit(n);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let lp = wiggly_loop(&torus, 8, &mut rng);
    for _ in 0..5 {
        let t = random_times(&mut rng, 2);
        let f1 = random_field(&mut rng, n, 2);
        let f2 = random_field(&mut rng, n, 2);
        let raw = inserts(&[(t[1], f2.clone()), (t[0], f1.clone())]).raw_measure(&torus, &lp).unwrap();
        // vector fields v_j(t) = a_j + t b_j
        let coeffs: Vec<(Vec<f64>, Vec<f64>)> = (0..4)
            .map(|_| ((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let fields: Vec<Box<dyn Fn(f64) -> Vec<f64>>> = coeffs
            .iter()
            .map(|(a, b)| {
                let (a, b) = (a.clone(), b.clone());
                Box::new(move |s: f64| a.iter().zip(&b).map(|(x, y)| x + s * y).collect::<Vec<f64>>()) as Box<dyn Fn(f64) -> Vec<f64>>
            })
            .collect();
        let refs: Vec<&dyn Fn(f64) -> Vec<f64>> = fields.iter().map(|f| f.as_ref()).collect();
        let lhs = raw.pair(&refs).unwrap();
        // block two-form at τ: θ[v, w] = √2 · (1/√2) · ϑ(γ(τ))(v(τ), w(τ))
        let block = |f: &FormField, tau: f64, v: usize, w: usize| -> f64 {
            let x = loopint::geometry::Curve::lift_at(&lp, tau).unwrap();
            let e = f.eval(&torus, &x);
            let (vv, ww) = (refs[v](tau), refs[w](tau));
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i < j {
                        s += e.coeff(1 << i | 1 << j) * (vv[i] * ww[j] - vv[j] * ww[i]);
                    }
                }
            }
            s
        };
        let mut rhs = 0.0;
        for sigma in permutations(4) {
            let sg = super_sign(&sigma, &[1, 1, 1, 1]).unwrap() as f64;
            // slots: V_3 V_2 | V_1 V_0, block 2 on top
            rhs += sg * block(&f2, t[1], sigma[3], sigma[2]) * block(&f1, t[0], sigma[1], sigma[0]);
        }
        rhs /= 4.0;
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }
}

#[test]
fn coincident_one_forms_merge_into_a_two_form() {
    let torus = FlatTorus::unit(2);
    let lp = wiggly_loop(&torus, 8, &mut ChaCha8Rng::seed_from_u64(3));
    let theta = inserts(&[(0.25, dx(2, 1)), (0.25, dx(2, 0))]);
    assert!(theta.has_coincident_masses());
    let merged = theta.decompose_blocks().unwrap();
    assert_eq!(merged.terms().len(), 1);
    let term = &merged.terms()[0];
    assert_eq!(term.factors.len(), 1);
    let f = &term.factors[0];
    assert_eq!(f.degree, 2);
    assert!((f.weight * term.prefactor - 0.5f64.sqrt()).abs() < 1e-15 || (f.weight * term.prefactor + 0.5f64.sqrt()).abs() < 1e-15);
    let raw = theta.raw_measure(&torus, &lp).unwrap();
    let raw2 = merged.raw_measure(&torus, &lp).unwrap();
    assert!(raw.max_abs_diff(&raw2) < 1e-15);
    assert!((raw.strata_variation() - raw2.strata_variation()).abs() < 1e-15);
    // dx ∧ dx at one time vanishes
    let zero = inserts(&[(0.5, dx(2, 0)), (0.5, dx(2, 0))]).decompose_blocks().unwrap();
    assert!(zero.terms().is_empty());
}

#[test]
fn disjoint_times_are_left_alone() {
    let theta = inserts(&[(0.25, dx(2, 1)), (0.5, dx(2, 0))]);
    assert_eq!(theta.decompose_blocks().unwrap(), theta);
}

#[test]
fn decomposition_of_mixed_coincidences_preserves_the_raw_measure() {
    let n = 3;
    let torus = FlatTorus::unit(n);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let lp = wiggly_loop(&torus, 8, &mut rng);
    for _ in 0..20 {
        let k = rng.gen_range(2..=4);
        let mut pairs = Vec::new();
        let mut total = 0;
        for _ in 0..k {
            let l = rng.gen_range(1..=2usize).min(4 - total.min(3));
            total += l;
            let t = [0.125, 0.5, 0.75][rng.gen_range(0..3)];
            pairs.push((t, random_field(&mut rng, n, l)));
        }
        if total > 4 {
            continue;
        }
        let theta = inserts(&pairs);
        let raw = theta.raw_measure(&torus, &lp).unwrap();
        let d = theta.decompose_blocks().unwrap();
        assert!(!d.has_coincident_masses());
        let raw2 = if d.terms().is_empty() { raw.scale(0.0) } else { d.raw_measure(&torus, &lp).unwrap() };
        assert!(raw.max_abs_diff(&raw2) < 1e-12);
    }
}

/// Random block data at distinct sorted times.
fn random_block_measure(rng: &mut ChaCha8Rng, n: usize) -> BlockMeasure {
    let m = rng.gen_range(1..=3);
    let degrees: Vec<usize> = (0..m).map(|_| rng.gen_range(1..=2)).collect();
    let order = degrees.iter().sum();
    let mut times = random_times(rng, m);
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut lists: Vec<Vec<usize>> = vec![vec![]];
    for &l in &degrees {
        lists = lists
            .into_iter()
            .flat_map(|p| {
                (0..1usize << n).filter(move |x| x.count_ones() as usize == l).map(move |x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    let values: BTreeMap<Vec<usize>, f64> = lists.into_iter().map(|k| (k, rng.gen_range(-1.0..1.0))).collect();
    let mut b = BlockMeasure::new(n, order);
    b.push(BlockAtom { times, degrees, values }).unwrap();
    b
}

#[test]
fn block_round_trip_and_isometry() {
    let n = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let b = random_block_measure(&mut rng, n);
        let raw = b.embed().unwrap();
        let back = raw.decompose().unwrap();
        assert!(b.max_abs_diff(&back) < 1e-12);
        let (x, y) = (raw.strata_variation(), b.norm());
        assert!((x - y).abs() < 1e-12 * y.max(1.0), "{x} vs {y}");
        let again = back.embed().unwrap();
        assert!(raw.max_abs_diff(&again) < 1e-12);
    }
}

#[test]
fn block_terms_embed_consistently() {
    let n = 3;
    let torus = FlatTorus::unit(n);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let lp = wiggly_loop(&torus, 8, &mut rng);
    for _ in 0..30 {
        let k = rng.gen_range(1..=3);
        let t = random_times(&mut rng, k);
        let pairs: Vec<(f64, FormField)> = t.iter().map(|&s| {
            let l = rng.gen_range(1..=2);
            (s, random_field(&mut rng, n, l))
        }).collect();
        let theta = inserts(&pairs);
        let term = &theta.terms()[0];
        let b = term.block_measure(&torus, &lp).unwrap();
        let raw = term.raw_measure(&torus, &lp).unwrap();
        assert!(raw.decompose().unwrap().max_abs_diff(&b) < 1e-12);
        assert!((raw.strata_variation() - b.norm()).abs() < 1e-12 * b.norm().max(1.0));
    }
}

fn random_point_form(rng: &mut ChaCha8Rng, n: usize, max_blocks: usize) -> IntegralForm {
    let k = rng.gen_range(1..=max_blocks);
    let t = random_times(rng, k);
    let pairs: Vec<(f64, FormField)> = t.iter().map(|&s| {
        let l = rng.gen_range(1..=2);
        (s, random_form(rng, n, l))
    }).collect();
    inserts(&pairs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn wedge_is_associative_and_graded_commutative(seed in any::<u64>()) {
        let n = 3;
        let torus = FlatTorus::unit(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = wiggly_loop(&torus, 8, &mut rng);
        let mk = |rng: &mut ChaCha8Rng, used: &mut Vec<f64>| {
            let mut t;
            loop {
                t = rng.gen_range(0..32) as f64 / 32.0;
                if !used.contains(&t) { break; }
            }
            used.push(t);
            let l = rng.gen_range(1..=2);
            IntegralForm::insert_at(t, &random_form(rng, n, l)).unwrap()
        };
        let mut used = Vec::new();
        let a = mk(&mut rng, &mut used);
        let b = mk(&mut rng, &mut used);
        let c = mk(&mut rng, &mut used);
        let left = a.wedge(&b).unwrap().wedge(&c).unwrap().raw_measure(&torus, &lp).unwrap();
        let right = a.wedge(&b.wedge(&c).unwrap()).unwrap().raw_measure(&torus, &lp).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-12);
        let (da, db) = (a.degree().unwrap(), b.degree().unwrap());
        let sign = if da * db % 2 == 0 { 1.0 } else { -1.0 };
        let ab = a.wedge(&b).unwrap().raw_measure(&torus, &lp).unwrap();
        let ba = b.wedge(&a).unwrap().raw_measure(&torus, &lp).unwrap().scale(sign);
        prop_assert!(ab.max_abs_diff(&ba) < 1e-12);
    }

    #[test]
    fn averaging_is_a_projection_on_trig_profiles(k in 1usize..9, modes in proptest::collection::vec((-12i64..12, -1.0f64..1.0, -1.0f64..1.0), 1..5)) {
        let mut p = TrigPoly::zero(1);
        for (m, a, b) in &modes {
            p = p.add(&TrigPoly::cos_sin(&[*m], *a, *b));
        }
        let theta = IntegralForm::lift_form(Density::trig(p).unwrap(), &dx(2, 0)).unwrap();
        let once = theta.average(k).unwrap();
        let twice = once.average(k).unwrap();
        prop_assert_eq!(once, twice);
    }
}

#[test]
fn averaging_keeps_invariant_profiles() {
    let theta = IntegralForm::lift_form(Density::constant(0.7), &dx(2, 1)).unwrap();
    assert_eq!(theta.average(8).unwrap(), theta);
    // a cos(2π·3t) profile survives only when 3 is a multiple of K
    let wave = IntegralForm::lift_form(Density::cos_sin(3, 1.0, 0.0), &dx(2, 1)).unwrap();
    assert_eq!(wave.average(3).unwrap(), wave);
    let gone = wave.average(4).unwrap();
    match &gone.terms()[0].factors[0].profile {
        TimeProfile::Density(d) => assert_eq!(d.sup_bound(), 0.0),
        _ => panic!("density expected"),
    }
}

#[test]
fn tabulated_profiles() {
    let d = Density::table(vec![0.0, 1.0, 0.0, -1.0]).unwrap();
    assert!((d.eval(0.125) - 0.5).abs() < 1e-15);
    assert!((d.eval(0.875) + 0.5).abs() < 1e-15);
    let r = d.rotate(0.25);
    assert!((r.eval(0.0) - 1.0).abs() < 1e-15);
    assert_eq!(d.sup_bound(), 1.0);
    let avg = d.project(4);
    for i in 0..4 {
        assert!(avg.eval(i as f64 / 4.0).abs() < 1e-15);
    }
}

#[test]
fn norm_bound_bookkeeping() {
    let two = dx(2, 0).wedge(&dx(2, 1)).unwrap().scale(3.0);
    let lifted = IntegralForm::lift_form(Density::cos_sin(1, 0.5, 0.0), &two).unwrap();
    // |w| √2 · sup|φ| · sup|ϑ| with sup|φ| bounded by Σ|c_k| = 0.5
    assert!((lifted.norm_bound() - 2f64.sqrt() * 0.5 * 3.0).abs() < 1e-14);
    let inserted = IntegralForm::insert_at(0.1, &two).unwrap();
    assert!((inserted.norm_bound() - 3.0).abs() < 1e-14);
    let theta = random_point_form(&mut ChaCha8Rng::seed_from_u64(1), 3, 3);
    assert!(theta.scale(-2.0).norm_bound() == 2.0 * theta.norm_bound());
}
