//! Randomized and exhaustive property suites for the Clifford kernel, the
//! measure decomposition and the `q` functional, reported as worst-case
//! defects against tolerances.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clifford::{compose, permutations, permute_degrees, super_sign, CliffordElement};
use crate::error::Result;
use crate::fields::{FormField, TrigPoly};
use crate::geometry::{DiscreteLoop, FlatTorus};
use crate::loopforms::{BlockAtom, BlockMeasure, Density, IntegralForm};
use crate::qfunctional::{q, q_rotation_check};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seconds: f64,
}

struct Tracker {
    name: &'static str,
    cases: usize,
    worst: f64,
    tolerance: f64,
    start: Instant,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self { name, cases: 0, worst: 0.0, tolerance, start: Instant::now() }
    }

    fn record(&mut self, defect: f64) {
        self.cases += 1;
        // NaN must fail
        if !(defect <= self.worst) {
            self.worst = if defect.is_nan() { f64::INFINITY } else { defect };
        }
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            name: self.name.into(),
            cases: self.cases,
            worst: self.worst,
            tolerance: self.tolerance,
            passed: self.worst <= self.tolerance,
            seconds: self.start.elapsed().as_secs_f64(),
        }
    }
}

fn homogeneous(rng: &mut ChaCha8Rng, n: usize, parity: usize) -> CliffordElement {
    let mut a = CliffordElement::zero(n);
    for m in 0..1usize << n {
        if m.count_ones() as usize % 2 == parity {
            a.set(m, rng.gen_range(-1.0..1.0));
        }
    }
    a
}

/// Cyclic supertrace, supercommutators, parity of `str` and the
/// composition law of super signs.
pub fn clifford_suite(random_cases: usize, seed: u64) -> Result<Vec<SuiteResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cyclic = Tracker::new("cyclic supertrace", 1e-12);
    let mut comm = Tracker::new("supertrace of supercommutators", 1e-12);
    let mut parity = Tracker::new("parity of the supertrace", 1e-12);
    for _ in 0..random_cases {
        let n = rng.gen_range(1..=6);
        let k = rng.gen_range(2..=4);
        let ps: Vec<usize> = (0..k).map(|_| rng.gen_range(0..2)).collect();
        let xs: Vec<CliffordElement> = ps.iter().map(|&p| homogeneous(&mut rng, n, p)).collect();
        let prod = |v: &[&CliffordElement]| v.iter().skip(1).fold(v[0].clone(), |acc, x| &acc * *x);
        let refs: Vec<&CliffordElement> = xs.iter().collect();
        let mut rolled = vec![refs[k - 1]];
        rolled.extend_from_slice(&refs[..k - 1]);
        let rest: usize = ps[..k - 1].iter().sum();
        let sign = if ps[k - 1] * rest % 2 == 1 { -1.0 } else { 1.0 };
        let lhs = prod(&refs).supertrace();
        let rhs = sign * prod(&rolled).supertrace();
        cyclic.record((lhs - rhs).abs() / (1.0 + lhs.abs()));

        let (a, b) = (&xs[0], &xs[1]);
        let s = if ps[0] * ps[1] % 2 == 1 { -1.0 } else { 1.0 };
        comm.record((&(a * b) - &(b * a).scale(s)).supertrace().abs());

        let other = homogeneous(&mut rng, n, 1 - n % 2);
        parity.record(other.supertrace().abs());
    }

    let mut signs = Tracker::new("super-sign composition", 0.0);
    for n in [3, 4] {
        let perms = permutations(n);
        for bits in 0..3usize.pow(n as u32) {
            let degrees: Vec<usize> = (0..n).map(|j| bits / 3usize.pow(j as u32) % 3).collect();
            for s in &perms {
                for r in &perms {
                    let lhs = super_sign(&compose(s, r), &degrees)?;
                    let rhs = super_sign(s, &degrees)? * super_sign(r, &permute_degrees(s, &degrees))?;
                    signs.record((lhs - rhs).abs() as f64);
                }
            }
        }
    }
    for _ in 0..random_cases {
        let n = rng.gen_range(5..=7);
        let shuffle = |rng: &mut ChaCha8Rng| {
            let mut p: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                p.swap(i, rng.gen_range(0..=i));
            }
            p
        };
        let (s, r) = (shuffle(&mut rng), shuffle(&mut rng));
        let degrees: Vec<usize> = (0..n).map(|_| rng.gen_range(0..=3)).collect();
        let lhs = super_sign(&compose(&s, &r), &degrees)?;
        let rhs = super_sign(&s, &degrees)? * super_sign(&r, &permute_degrees(&s, &degrees))?;
        signs.record((lhs - rhs).abs() as f64);
    }
    Ok(vec![cyclic.finish(), comm.finish(), parity.finish(), signs.finish()])
}

fn distinct_times(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut t: Vec<f64> = Vec::new();
    while t.len() < k {
        let s = rng.gen_range(0..64) as f64 / 64.0;
        if !t.contains(&s) {
            t.push(s);
        }
    }
    t
}

/// Block measures embedded into the raw measure and decomposed back:
/// round trip and isometry of the strata norm.
pub fn measure_suite(cases: usize, seed: u64) -> Result<Vec<SuiteResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trip = Tracker::new("block round trip", 1e-12);
    let mut iso = Tracker::new("strata isometry", 1e-12);
    for _ in 0..cases {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=3);
        let degrees: Vec<usize> = (0..m).map(|_| rng.gen_range(1..=2.min(n))).collect();
        let mut times = distinct_times(&mut rng, m);
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
        let mut b = BlockMeasure::new(n, degrees.iter().sum());
        b.push(BlockAtom { times, degrees, values })?;
        let raw = b.embed()?;
        let back = raw.decompose()?;
        trip.record(b.max_abs_diff(&back).max(raw.max_abs_diff(&back.embed()?)));
        let y = b.norm();
        iso.record((raw.strata_variation() - y).abs() / y.max(1.0));
    }
    Ok(vec![trip.finish(), iso.finish()])
}

fn random_field(rng: &mut ChaCha8Rng, n: usize, l: usize) -> Result<FormField> {
    let mut f = FormField::zero(n);
    for m in 0..1usize << n {
        if m.count_ones() as usize != l {
            continue;
        }
        let mut k = vec![0i64; n];
        k[rng.gen_range(0..n)] = rng.gen_range(-2..=2);
        let p = TrigPoly::cos_sin(&k, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            .add(&TrigPoly::constant(n, rng.gen_range(-1.0..1.0)));
        f = f.add(&FormField::monomial(n, m, p)?)?;
    }
    Ok(f)
}

fn random_point_form(rng: &mut ChaCha8Rng, n: usize, max_blocks: usize) -> Result<IntegralForm> {
    let k = rng.gen_range(1..=max_blocks);
    let mut out = IntegralForm::one(n);
    for t in distinct_times(rng, k) {
        let l = rng.gen_range(0..=n.min(2));
        out = out.wedge(&IntegralForm::insert_at(t, &random_field(rng, n, l)?)?)?;
    }
    Ok(out)
}

fn random_loop(rng: &mut ChaCha8Rng, torus: &FlatTorus, m: usize) -> Result<DiscreteLoop> {
    let n = torus.dim();
    let lifts: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-0.7..0.7)).collect();
    let closing = (0..n).map(|_| rng.gen_range(-1..=1)).collect();
    DiscreteLoop::uniform(torus, lifts, closing)
}

/// `|q(θ)| <= 2^{n/2} ‖θ‖`, vanishing on the wrong parity, exact rotation
/// invariance of point-mass forms under grid shifts and budgeted rotation
/// invariance of density forms.
pub fn q_suite(cases: usize, seed: u64) -> Result<Vec<SuiteResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bound = Tracker::new("q bound", 1e-12);
    let mut parity = Tracker::new("q parity vanishing", 1e-12);
    let mut rot = Tracker::new("rotation invariance (point masses)", 1e-12);
    let mut rot_density = Tracker::new("rotation invariance (densities, defect / (budget + 1e-12))", 1.0);
    for _ in 0..cases {
        let n = rng.gen_range(1..=3);
        let spin: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let torus = FlatTorus::unit(n).with_spin(&spin)?;
        let lp = random_loop(&mut rng, &torus, 16)?;
        let mut theta = random_point_form(&mut rng, n, 3)?;
        if rng.gen_bool(0.4) {
            let l = rng.gen_range(0..=n.min(2));
            let phi = Density::cos_sin(rng.gen_range(0..3), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            theta = theta.wedge(&IntegralForm::lift_form(phi, &random_field(&mut rng, n, l)?)?)?;
        }
        let v = q(&torus, &lp, &theta)?.value;
        let b = 2f64.powf(n as f64 / 2.0) * theta.norm_bound();
        bound.record((v.abs() - b).max(0.0) / b.max(1.0));
        if theta.degree().is_some_and(|d| d % 2 != n % 2) {
            parity.record(v.abs());
        }
        let shift = rng.gen_range(0..16) as f64 / 16.0;
        let r = q_rotation_check(&torus, &lp, &theta, shift)?;
        if r.budget == 0.0 {
            rot.record(r.defect);
        } else {
            // the exact cases' round-off tolerance sits under the quadrature budget
            rot_density.record(r.defect / (r.budget + 1e-12));
        }
    }
    Ok(vec![bound.finish(), parity.finish(), rot.finish(), rot_density.finish()])
}
