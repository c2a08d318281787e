//! Fixtures shared by the benchmarks.

use loopint::fields::{FormField, TrigPoly};
use loopint::geometry::{DiscreteLoop, FlatTorus};
use loopint::loopforms::IntegralForm;
use loopint::wiener::{stream, WienerSampler};

pub fn loops(torus: &FlatTorus, t: f64, grid: usize, count: usize, seed: u64) -> Vec<DiscreteLoop> {
    let s = WienerSampler::new(torus, t, grid).expect("valid sampler");
    let mut rng = stream(seed, 0);
    (0..count).map(|_| s.sample_loop(&mut rng)).collect()
}

/// `dy(τ = 3/4) ∧ dx(τ = 1/4)` with first-order trigonometric coefficients.
pub fn point_pair() -> IntegralForm {
    let f = FormField::monomial(2, 0b01, TrigPoly::cos_sin(&[1, 0], 0.7, 0.4).add(&TrigPoly::constant(2, 0.3))).unwrap();
    let g = FormField::monomial(2, 0b10, TrigPoly::cos_sin(&[1, -1], -0.6, 0.2).add(&TrigPoly::constant(2, 0.5))).unwrap();
    IntegralForm::insert_at(0.75, &g).unwrap().wedge(&IntegralForm::insert_at(0.25, &f).unwrap()).unwrap()
}
