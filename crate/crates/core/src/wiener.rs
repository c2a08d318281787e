//! Exact Wiener-measure sampling on flat tori and seeded Monte Carlo
//! estimation.
//!
//! Loops: `x_0` uniform, winding `λ` drawn with weight `exp(-|Bλ|²/2T)`, then a
//! Gaussian bridge in the universal cover from `x_0` to `x_0 + Bλ`. The
//! measure is unnormalized, so estimates are `Z · mean`.
//!
//! Samples are processed in fixed chunks; chunk `c` draws from ChaCha stream
//! `(seed, c)`. Sums are accumulated in fixed point so that merging is exactly
//! associative and results never depend on the number of workers.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, WeightedAliasIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{add, dot, uniform_grid, DiscreteLoop, DiscretePath, FlatTorus, THETA_CUTOFF};

/// Samples per RNG stream.
pub const CHUNK: usize = 1024;

/// Largest admissible clip threshold; keeps fixed-point sums in range.
pub const MAX_CLIP: f64 = 1.0e6;

/// Winding sectors lighter than this (relative) are dropped.
const SECTOR_CUTOFF: f64 = 1e-14;

const SUM_SCALE: f64 = 1152921504606846976.0; // 2^60
const SQ_SCALE: f64 = 1099511627776.0; // 2^40

/// Source of weighted random curves.
pub trait Sampler: Sync {
    type Sample;
    fn sample(&self, rng: &mut ChaCha8Rng) -> Self::Sample;
    /// Total mass of the (unnormalized) measure.
    fn mass(&self) -> f64;
}

/// Winding sectors `λ` with alias table for weights `exp(-|c + Bλ|²/2T)`.
#[derive(Clone, Debug)]
struct Sectors {
    vectors: Vec<Vec<i64>>,
    weights: Vec<f64>,
    table: Arc<WeightedAliasIndex<f64>>,
}

impl Sectors {
    fn new(torus: &FlatTorus, t: f64, center: &[f64]) -> Result<Self> {
        let d2min = dot(center, center);
        let cut = (-SECTOR_CUTOFF.ln()).max(THETA_CUTOFF);
        let radius = (d2min + 2.0 * t * cut).sqrt();
        let mut vectors = torus.lattice_points_within(center, radius);
        vectors.sort();
        let weights: Vec<f64> = vectors
            .iter()
            .map(|k| {
                let v = add(center, &torus.lattice_vector(k));
                (-(dot(&v, &v) - d2min) / (2.0 * t)).exp()
            })
            .collect();
        let table = WeightedAliasIndex::new(weights.clone())
            .map_err(|e| Error::InvalidArgument(format!("winding table: {e}")))?;
        Ok(Self { vectors, weights, table: Arc::new(table) })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> &[i64] {
        &self.vectors[self.table.sample(rng)]
    }

    fn total(&self) -> f64 {
        let mut w = self.weights.clone();
        w.sort_by(|a, b| a.partial_cmp(b).unwrap());
        w.iter().sum()
    }
}

/// Gaussian bridge in `R^n` from `a` (time 0) to `b` (time 1) with variance
/// rate `t`, sampled at `times` (starting at 0, all `< 1`).
fn bridge(rng: &mut ChaCha8Rng, t: f64, times: &[f64], a: &[f64], b: &[f64], out: &mut Vec<f64>) {
    let n = a.len();
    let mut x = a.to_vec();
    out.extend_from_slice(&x);
    for w in times.windows(2) {
        let (s0, s1) = (w[0], w[1]);
        let dt = s1 - s0;
        let rest = 1.0 - s0;
        let var = t * dt * (1.0 - s1) / rest;
        let sd = var.max(0.0).sqrt();
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            x[i] += (b[i] - x[i]) * dt / rest + sd * z;
        }
        out.extend_from_slice(&x);
    }
}

/// Sampler for the loop measure `W_T` on a uniform grid of `m` nodes.
#[derive(Clone, Debug)]
pub struct WienerSampler {
    torus: FlatTorus,
    t: f64,
    m: usize,
    times: Vec<f64>,
    sectors: Sectors,
    z: f64,
}

impl WienerSampler {
    pub fn new(torus: &FlatTorus, t: f64, m: usize) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return invalid("Wiener parameter T must be positive");
        }
        if m < 2 {
            return invalid("loop grid needs at least 2 nodes");
        }
        let n = torus.dim();
        let sectors = Sectors::new(torus, t, &vec![0.0; n])?;
        let z = torus.heat_trace(t, &vec![0.0; n])?;
        Ok(Self { torus: torus.clone(), t, m, times: uniform_grid(m), sectors, z })
    }

    pub fn torus(&self) -> &FlatTorus {
        &self.torus
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> usize {
        self.m
    }

    /// `Tr exp(-T Δ/2)` from the dual-lattice sum.
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Same mass from the winding side: `V (2πT)^{-n/2} Σ_λ exp(-|Bλ|²/2T)`.
    pub fn z_from_windings(&self) -> f64 {
        let n = self.torus.dim() as f64;
        self.torus.volume() * (2.0 * PI * self.t).powf(-n / 2.0) * self.sectors.total()
    }

    /// Winding vectors and their unnormalized weights.
    pub fn sectors(&self) -> (&[Vec<i64>], &[f64]) {
        (&self.sectors.vectors, &self.sectors.weights)
    }

    pub fn sample_loop(&self, rng: &mut ChaCha8Rng) -> DiscreteLoop {
        let n = self.torus.dim();
        let u: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let x0 = self.torus.from_lattice(&u);
        let lam = self.sectors.draw(rng).to_vec();
        let end = add(&x0, &self.torus.lattice_vector(&lam));
        let mut lifts = Vec::with_capacity(self.m * n);
        bridge(rng, self.t, &self.times, &x0, &end, &mut lifts);
        DiscreteLoop::new(&self.torus, self.times.clone(), lifts, lam).expect("sampled loop is valid")
    }
}

impl Sampler for WienerSampler {
    type Sample = DiscreteLoop;
    fn sample(&self, rng: &mut ChaCha8Rng) -> DiscreteLoop {
        self.sample_loop(rng)
    }
    fn mass(&self) -> f64 {
        self.z
    }
}

/// Sampler for the pinned measure `W_T^{yx}` (paths from `x` to `y`).
#[derive(Clone, Debug)]
pub struct BridgeSampler {
    torus: FlatTorus,
    t: f64,
    x: Vec<f64>,
    d: Vec<f64>,
    times: Vec<f64>,
    sectors: Sectors,
    mass: f64,
}

impl BridgeSampler {
    pub fn new(torus: &FlatTorus, t: f64, x: &[f64], y: &[f64], m: usize) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return invalid("Wiener parameter T must be positive");
        }
        if m < 2 {
            return invalid("path grid needs at least 2 steps");
        }
        let d = torus.geodesic_segment(x, y)?.displacement;
        let sectors = Sectors::new(torus, t, &d)?;
        let n = torus.dim() as f64;
        let mass = (2.0 * PI * t).powf(-n / 2.0) * (-dot(&d, &d) / (2.0 * t)).exp() * sectors.total();
        let mut times = uniform_grid(m);
        times.push(1.0);
        Ok(Self { torus: torus.clone(), t, x: x.to_vec(), d, times, sectors, mass })
    }

    pub fn sample_path(&self, rng: &mut ChaCha8Rng) -> DiscretePath {
        let n = self.torus.dim();
        let lam = self.sectors.draw(rng);
        let end = add(&add(&self.x, &self.d), &self.torus.lattice_vector(lam));
        let mut lifts = Vec::with_capacity(self.times.len() * n);
        let m = self.times.len() - 1;
        bridge(rng, self.t, &self.times[..m], &self.x, &end, &mut lifts);
        lifts.extend_from_slice(&end);
        DiscretePath::new(&self.torus, self.times.clone(), lifts).expect("sampled path is valid")
    }
}

impl Sampler for BridgeSampler {
    type Sample = DiscretePath;
    fn sample(&self, rng: &mut ChaCha8Rng) -> DiscretePath {
        self.sample_path(rng)
    }
    fn mass(&self) -> f64 {
        self.mass
    }
}

/// One pinned path from `x` to `y`; rebuilds the winding table on each call.
pub fn sample_bridge(torus: &FlatTorus, t: f64, x: &[f64], y: &[f64], m: usize, rng: &mut ChaCha8Rng) -> Result<DiscretePath> {
    Ok(BridgeSampler::new(torus, t, x, y, m)?.sample_path(rng))
}

/// RNG for chunk `c` of a run with seed `seed`.
pub fn stream(seed: u64, c: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(c);
    rng
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Samples whose value exceeded the clip threshold.
    pub clipped: u64,
    /// Geodesic tie-breaks encountered while polygonizing.
    pub ties: u64,
}

/// Mergeable Monte Carlo estimate of an unnormalized expectation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub diagnostics: Diagnostics,
    mass: f64,
    /// Fixed-point sums `Σ f · 2^60` and `Σ f² · 2^40`, as decimal strings.
    sum: String,
    sum_sq: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Acc {
    n: u64,
    sum: i128,
    sq: i128,
    clipped: u64,
}

impl Acc {
    fn push(&mut self, x: f64, clip: f64) {
        let y = if x.abs() > clip {
            self.clipped += 1;
            clip.copysign(x)
        } else {
            x
        };
        self.n += 1;
        self.sum += (y * SUM_SCALE).round() as i128;
        self.sq += (y * y * SQ_SCALE).round() as i128;
    }

    fn merge(self, o: Self) -> Self {
        Self { n: self.n + o.n, sum: self.sum + o.sum, sq: self.sq + o.sq, clipped: self.clipped + o.clipped }
    }
}

impl Estimate {
    fn from_acc(acc: Acc, mass: f64, seed: u64, ties: u64) -> Self {
        let n = acc.n as f64;
        let mean = acc.sum as f64 / SUM_SCALE / n;
        let mean_sq = acc.sq as f64 / SQ_SCALE / n;
        let var = if acc.n > 1 { ((mean_sq - mean * mean) * n / (n - 1.0)).max(0.0) } else { 0.0 };
        Self {
            value: mass * mean,
            stderr: mass * (var / n).sqrt(),
            n_samples: acc.n,
            seed,
            diagnostics: Diagnostics { clipped: acc.clipped, ties },
            mass,
            sum: acc.sum.to_string(),
            sum_sq: acc.sq.to_string(),
        }
    }

    fn acc(&self) -> Result<Acc> {
        let parse = |s: &str| s.parse::<i128>().map_err(|e| Error::InvalidArgument(format!("estimate state: {e}")));
        Ok(Acc { n: self.n_samples, sum: parse(&self.sum)?, sq: parse(&self.sum_sq)?, clipped: self.diagnostics.clipped })
    }

    /// Exact merge of two runs against the same measure.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.mass != other.mass {
            return invalid("cannot merge estimates of different measures");
        }
        let acc = self.acc()?.merge(other.acc()?);
        Ok(Self::from_acc(acc, self.mass, self.seed, self.diagnostics.ties + other.diagnostics.ties))
    }

    /// Mass of the measure the estimate refers to.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `|value - reference| / stderr`. A deterministic channel (`stderr = 0`)
    /// scores 0 within round-off of the reference and infinity otherwise.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = (self.value - reference).abs();
        if d == 0.0 || (self.stderr == 0.0 && d <= 1e-12 * reference.abs().max(1.0)) {
            0.0
        } else {
            d / self.stderr
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub seed: u64,
    /// Index of the first chunk, so that disjoint runs can be merged.
    pub first_chunk: u64,
    pub clip: f64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl McOptions {
    pub fn seeded(seed: u64) -> Self {
        Self { seed, first_chunk: 0, clip: MAX_CLIP, workers: None }
    }
}

/// Per-sample integrand result: channel values plus geodesic tie count.
pub struct SampleValue {
    pub values: Vec<f64>,
    pub ties: u64,
}

impl From<Vec<f64>> for SampleValue {
    fn from(values: Vec<f64>) -> Self {
        Self { values, ties: 0 }
    }
}

/// Multi-channel Monte Carlo: all channels see the same samples.
pub fn mc_expect_many<S, F, V>(sampler: &S, channels: usize, integrand: F, n: u64, opts: &McOptions) -> Result<Vec<Estimate>>
where
    S: Sampler,
    F: Fn(&S::Sample) -> V + Sync,
    V: Into<SampleValue>,
{
    if n == 0 {
        return invalid("need at least one sample");
    }
    if !(opts.clip > 0.0) || opts.clip > MAX_CLIP {
        return invalid(format!("clip threshold must lie in (0, {MAX_CLIP}]"));
    }
    let chunks = n.div_ceil(CHUNK as u64);
    let run_chunk = |c: u64| -> Result<(Vec<Acc>, u64)> {
        let mut rng = stream(opts.seed, opts.first_chunk + c);
        let count = (n - c * CHUNK as u64).min(CHUNK as u64);
        let mut accs = vec![Acc::default(); channels];
        let mut ties = 0;
        for _ in 0..count {
            let s = sampler.sample(&mut rng);
            let v: SampleValue = integrand(&s).into();
            if v.values.len() != channels {
                return Err(Error::LengthMismatch { expected: channels, got: v.values.len() });
            }
            ties += v.ties;
            for (a, x) in accs.iter_mut().zip(&v.values) {
                if !x.is_finite() {
                    return Err(Error::NonFinite(format!("integrand returned {x}")));
                }
                a.push(*x, opts.clip);
            }
        }
        Ok((accs, ties))
    };
    let run = || -> Result<Vec<(Vec<Acc>, u64)>> { (0..chunks).into_par_iter().map(run_chunk).collect() };
    let parts = match opts.workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let mut total = vec![Acc::default(); channels];
    let mut ties = 0;
    for (accs, t) in parts {
        ties += t;
        for (a, b) in total.iter_mut().zip(accs) {
            *a = a.merge(b);
        }
    }
    Ok(total.into_iter().map(|a| Estimate::from_acc(a, sampler.mass(), opts.seed, ties)).collect())
}

/// `mass · E[f]` with standard error.
pub fn mc_expect<S, F>(sampler: &S, integrand: F, n: u64, opts: &McOptions) -> Result<Estimate>
where
    S: Sampler,
    F: Fn(&S::Sample) -> f64 + Sync,
{
    let mut v = mc_expect_many(sampler, 1, |s| vec![integrand(s)], n, opts)?;
    Ok(v.remove(0))
}

/// Real and imaginary channels of a complex integrand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexEstimate {
    pub re: Estimate,
    pub im: Estimate,
}

impl ComplexEstimate {
    pub fn value(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.re.value, self.im.value)
    }

    /// Larger of the two per-channel z-scores.
    pub fn z_score(&self, reference: num_complex::Complex64) -> f64 {
        self.re.z_score(reference.re).max(self.im.z_score(reference.im))
    }
}

pub fn mc_expect_complex<S, F>(sampler: &S, integrand: F, n: u64, opts: &McOptions) -> Result<ComplexEstimate>
where
    S: Sampler,
    F: Fn(&S::Sample) -> num_complex::Complex64 + Sync,
{
    let mut v = mc_expect_many(
        sampler,
        2,
        |s| {
            let z = integrand(s);
            vec![z.re, z.im]
        },
        n,
        opts,
    )?;
    let im = v.remove(1);
    let re = v.remove(0);
    Ok(ComplexEstimate { re, im })
}
