//! The pairing `q` of integral forms with the Dirac density on polygon loops.
//!
//! For a term `c · Kθ_M ∧ ... ∧ Kθ_1` with `M'` blocks of positive degree,
//!
//! `q_rel = 2^{-M'/2} c Σ_σ sgn(σ;ℓ) ∫_Δ [‖] 𝐜(θ_{σ_M}(τ_M)) ... 𝐜(θ_{σ_1}(τ_1)) [‖] dτ`,
//!
//! degree-0 blocks being scalar functions that factor out. On a flat torus
//! spinor transport is a sign, so the transports collapse to the sign of the
//! whole curve. Point masses are exact; densities use the curve's own grid
//! with trapezoid cells, a node holding `k` density factors weighted by
//! `(L+R)^k/k!` (or `L^a/a! R^b/b!` around a point mass).

use serde::{Deserialize, Serialize};

use crate::clifford::{permutations, super_sign, CliffordElement};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Curve, DiscreteLoop, DiscretePath, FlatTorus};
use crate::loopforms::{BlockTerm, IntegralForm, TimeProfile};

/// Largest number of positive-degree blocks per term (`8! = 40320` orderings).
pub const MAX_BLOCKS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QEvaluation {
    pub value: f64,
    /// `|q_h - q_{2h}| / 3`; zero for point-mass forms.
    pub defect: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QRelEvaluation {
    pub value: CliffordElement,
    pub defect: f64,
}

/// Budget and coincidence checks shared by all evaluators.
pub fn check_form(theta: &IntegralForm) -> Result<()> {
    for t in theta.terms() {
        if t.form_blocks() > MAX_BLOCKS {
            return Err(Error::Budget(format!("{} blocks exceed the limit {MAX_BLOCKS}", t.form_blocks())));
        }
        if t.has_coincident_masses() {
            return invalid("coincident point masses; apply decompose_blocks first");
        }
    }
    Ok(())
}

fn has_density(theta: &IntegralForm) -> bool {
    theta.terms().iter().any(|t| t.factors.iter().any(|f| f.profile.point_time().is_none()))
}

/// Quadrature nodes: the grid (with both ends 0 and 1) when densities are
/// present, plus all point-mass times.
fn nodes(grid: &[f64], theta: &IntegralForm) -> Vec<f64> {
    let mut v: Vec<f64> = if has_density(theta) {
        let mut g = grid.to_vec();
        g.push(0.0);
        g.push(1.0);
        g
    } else {
        Vec::new()
    };
    for t in theta.terms() {
        v.extend(t.factors.iter().filter_map(|f| f.profile.point_time()));
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

fn coarsen(grid: &[f64]) -> Vec<f64> {
    grid.iter().step_by(2).copied().collect()
}

/// `Σ_terms 2^{-M'/2} c Π(scalars) Σ_σ sgn ∫_Δ Π 𝐜(θ)` without transport.
fn density_sum(torus: &FlatTorus, curve: &impl Curve, nodes: &[f64], theta: &IntegralForm) -> Result<CliffordElement> {
    let n = torus.dim();
    let k = nodes.len();
    let lifts = nodes.iter().map(|&t| curve.lift_at(t)).collect::<Result<Vec<_>>>()?;
    let half: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let l = if i == 0 { 0.0 } else { (nodes[i] - nodes[i - 1]) / 2.0 };
            let r = if i + 1 == k { 0.0 } else { (nodes[i + 1] - nodes[i]) / 2.0 };
            (l, r)
        })
        .collect();
    let mut total = CliffordElement::zero(n);
    for term in theta.terms() {
        if term.prefactor == 0.0 {
            continue;
        }
        let mut scalar = term.prefactor;
        let mut blocks = Vec::new();
        for f in &term.factors {
            if f.degree > 0 {
                blocks.push(f);
                continue;
            }
            scalar *= match f.profile {
                TimeProfile::PointMass(t) => f.value(torus, t, &curve.lift_at(t)?).scalar_part(),
                TimeProfile::Density(_) => (0..k)
                    .map(|i| (half[i].0 + half[i].1) * f.value(torus, nodes[i], &lifts[i]).scalar_part())
                    .sum(),
            };
        }
        if scalar == 0.0 {
            continue;
        }
        let m = blocks.len();
        // values[j][i]: block j at node i (point masses only at their node)
        let values: Vec<Vec<Option<CliffordElement>>> = blocks
            .iter()
            .map(|f| {
                (0..k)
                    .map(|i| match f.profile {
                        TimeProfile::PointMass(t) if t != nodes[i] => None,
                        _ => Some(f.value(torus, nodes[i], &lifts[i])),
                    })
                    .collect()
            })
            .collect();
        let degrees: Vec<usize> = blocks.iter().map(|f| f.degree).collect();
        let mut sum = CliffordElement::zero(n);
        for sigma in permutations(m) {
            let sign = super_sign(&sigma, &degrees)? as f64;
            let seq: Vec<usize> = sigma.clone();
            let pm: Vec<Option<f64>> = seq.iter().map(|&j| blocks[j].profile.point_time()).collect();
            let mut state: Vec<Option<CliffordElement>> = vec![None; m + 1];
            state[0] = Some(CliffordElement::one(n));
            for i in 0..k {
                let (l, r) = half[i];
                let mut next = state.clone();
                for start in 0..m {
                    let Some(base) = &state[start] else { continue };
                    let mut prod = base.clone();
                    let mut mass_at = None;
                    for end in start..m {
                        let j = seq[end];
                        let Some(v) = &values[j][i] else { break };
                        if pm[end].is_some() {
                            if mass_at.is_some() {
                                break;
                            }
                            mass_at = Some(end - start);
                        }
                        prod = v * &prod;
                        let b = end - start + 1;
                        let w = match mass_at {
                            None => (l + r).powi(b as i32) / factorial(b),
                            Some(p) => l.powi(p as i32) / factorial(p) * r.powi((b - p - 1) as i32) / factorial(b - p - 1),
                        };
                        if w == 0.0 {
                            continue;
                        }
                        let add = prod.scale(w);
                        next[end + 1] = Some(match next[end + 1].take() {
                            None => add,
                            Some(x) => &x + &add,
                        });
                    }
                }
                // a point mass that was not placed by its node kills the state
                for (s, slot) in next.iter_mut().enumerate().take(m) {
                    if let Some(t) = pm[s] {
                        if t <= nodes[i] {
                            *slot = None;
                        }
                    }
                }
                state = next;
            }
            if let Some(v) = &state[m] {
                sum = &sum + &v.scale(sign);
            }
        }
        let norm = 2f64.powf(-(m as f64) / 2.0);
        total = &total + &sum.scale(scalar * norm);
    }
    Ok(total)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

fn evaluate(
    torus: &FlatTorus,
    curve: &impl Curve,
    grid: &[f64],
    theta: &IntegralForm,
) -> Result<(CliffordElement, f64)> {
    if theta.dim() != torus.dim() {
        return Err(Error::DimensionMismatch(torus.dim(), theta.dim()));
    }
    check_form(theta)?;
    let fine = density_sum(torus, curve, &nodes(grid, theta), theta)?;
    let defect = if has_density(theta) && grid.len() >= 4 {
        let coarse = density_sum(torus, curve, &nodes(&coarsen(grid), theta), theta)?;
        (&fine - &coarse).norm() / 3.0
    } else {
        0.0
    };
    Ok((fine, defect))
}

/// `q_rel` along a polygon path: an element of `Cl_n` acting on `Σ_{γ(0)}`.
pub fn q_rel(torus: &FlatTorus, path: &DiscretePath, theta: &IntegralForm) -> Result<QRelEvaluation> {
    let (v, defect) = evaluate(torus, path, path.times(), theta)?;
    let sign = torus.spin_parallel_transport(path, 0.0, 1.0)?.scalar_part();
    Ok(QRelEvaluation { value: v.scale(sign), defect })
}

/// `q = str(q_rel)` on a closed polygon loop.
pub fn q(torus: &FlatTorus, lp: &DiscreteLoop, theta: &IntegralForm) -> Result<QEvaluation> {
    let (v, defect) = evaluate(torus, lp, lp.times(), theta)?;
    let sign = torus.spin_sign(lp.closing());
    Ok(QEvaluation { value: sign * v.supertrace(), defect: defect * 2f64.powf(torus.dim() as f64 / 2.0) })
}

pub fn q_value(torus: &FlatTorus, lp: &DiscreteLoop, theta: &IntegralForm) -> Result<f64> {
    Ok(q(torus, lp, theta)?.value)
}

/// Value of a degree-0 form (a function on loop space) at a loop.
pub fn function_value(torus: &FlatTorus, lp: &DiscreteLoop, theta: &IntegralForm) -> Result<f64> {
    if theta.terms().iter().any(|t| t.degree() != 0) {
        return invalid("not a function on loop space");
    }
    Ok(evaluate(torus, lp, lp.times(), theta)?.0.scalar_part())
}

/// Point-mass forms through the single time-sorted ordering of each term,
/// without the sum over permutations.
pub fn q_sorted(torus: &FlatTorus, lp: &DiscreteLoop, theta: &IntegralForm) -> Result<f64> {
    check_form(theta)?;
    let n = torus.dim();
    let mut total = 0.0;
    for term in theta.terms() {
        total += sorted_term(torus, lp, term, n)?;
    }
    Ok(torus.spin_sign(lp.closing()) * total)
}

fn sorted_term(torus: &FlatTorus, lp: &DiscreteLoop, term: &BlockTerm, n: usize) -> Result<f64> {
    let mut scalar = term.prefactor;
    let mut blocks = Vec::new();
    for f in &term.factors {
        let Some(t) = f.profile.point_time() else {
            return invalid("sorted evaluation needs point-mass profiles");
        };
        let v = f.value(torus, t, &lp.lift_at(t)?);
        if f.degree == 0 {
            scalar *= v.scalar_part();
        } else {
            blocks.push((t, f.degree, v));
        }
    }
    let mut sigma: Vec<usize> = (0..blocks.len()).collect();
    sigma.sort_by(|&a, &b| blocks[a].0.partial_cmp(&blocks[b].0).unwrap());
    let degrees: Vec<usize> = blocks.iter().map(|b| b.1).collect();
    let sign = super_sign(&sigma, &degrees)? as f64;
    let mut prod = CliffordElement::one(n);
    for &j in &sigma {
        prod = &blocks[j].2 * &prod;
    }
    Ok(scalar * sign * 2f64.powf(-(blocks.len() as f64) / 2.0) * prod.supertrace())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationCheck {
    /// `|q|_γ(θ) - q|_{t·γ}(t·θ)|`.
    pub defect: f64,
    /// Sum of the two quadrature defects.
    pub budget: f64,
}

/// Invariance `q|_γ(θ) = q|_{t·γ}(t·θ)` for a grid shift `t`.
pub fn q_rotation_check(torus: &FlatTorus, lp: &DiscreteLoop, theta: &IntegralForm, t: f64) -> Result<RotationCheck> {
    let rotated = lp.rotate(torus, t)?;
    let same_grid = rotated.times().iter().zip(lp.times()).all(|(a, b)| (a - b).abs() <= 1e-12);
    if !same_grid {
        return invalid("rotation time is not a shift of the loop grid");
    }
    let a = q(torus, lp, theta)?;
    let b = q(torus, &rotated, &theta.rotate(t))?;
    Ok(RotationCheck { defect: (a.value - b.value).abs(), budget: a.defect + b.defect })
}
