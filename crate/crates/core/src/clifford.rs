//! Clifford and exterior algebra over Euclidean `R^n`.
//!
//! Elements are stored as `2^n` coefficients indexed by subset bitmask: bit `i`
//! set means generator `e_{i+1}` is present. Both products act on the same
//! coefficient layout, so the quantization map between the exterior algebra
//! and the Clifford algebra is the identity on coefficient vectors.
//!
//! Convention: `v * v = -|v|^2`. Orientation is `e_1 ^ ... ^ e_n`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest supported dimension (4096 coefficients).
pub const MAX_DIM: usize = 12;

/// Scalar field for coefficients: `f64` or `Complex64`.
pub trait Scalar:
    Copy
    + fmt::Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_complex(self) -> Complex64;
    fn abs(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn to_complex(self) -> Complex64 {
        self
    }
    fn abs(self) -> f64 {
        self.norm()
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Sign from reordering the concatenated monomial `e_a e_b` into increasing
/// order, ignoring repeated generators.
#[inline]
pub fn reorder_sign(a: usize, b: usize) -> f64 {
    let mut x = a >> 1;
    let mut swaps = 0u32;
    while x != 0 {
        swaps += (x & b).count_ones();
        x >>= 1;
    }
    if swaps & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sign of the Clifford product of monomials `e_a e_b = sign * e_{a xor b}`.
#[inline]
pub fn clifford_sign(a: usize, b: usize) -> f64 {
    let s = reorder_sign(a, b);
    if (a & b).count_ones() & 1 == 0 {
        s
    } else {
        -s
    }
}

/// Sign of the wedge of monomials, zero when they share a generator.
#[inline]
pub fn wedge_sign(a: usize, b: usize) -> f64 {
    if a & b != 0 {
        0.0
    } else {
        reorder_sign(a, b)
    }
}

/// Monomial masks of dimension `n` in (cardinality, lexicographic) order.
pub fn display_order(n: usize) -> Vec<usize> {
    let mut masks: Vec<usize> = (0..1usize << n).collect();
    masks.sort_by_key(|&m| {
        let idx: Vec<u32> = (0..n as u32).filter(|i| m >> i & 1 == 1).collect();
        (m.count_ones(), idx)
    });
    masks
}

/// Element of `Cl_n` (equivalently of the exterior algebra) with scalar `S`.
#[derive(Clone, PartialEq)]
pub struct Multivector<S: Scalar> {
    dim: usize,
    coeffs: Vec<S>,
}

pub type CliffordElement = Multivector<f64>;
pub type ComplexClifford = Multivector<Complex64>;

impl<S: Scalar> Multivector<S> {
    pub fn zero(dim: usize) -> Self {
        assert!(dim <= MAX_DIM, "dimension {dim} exceeds {MAX_DIM}");
        Multivector { dim, coeffs: vec![S::zero(); 1 << dim] }
    }

    pub fn scalar(dim: usize, s: S) -> Self {
        let mut m = Self::zero(dim);
        m.coeffs[0] = s;
        m
    }

    pub fn one(dim: usize) -> Self {
        Self::scalar(dim, S::one())
    }

    /// Monomial `e_I` for the subset encoded by `mask`.
    pub fn monomial(dim: usize, mask: usize, s: S) -> Self {
        let mut m = Self::zero(dim);
        m.coeffs[mask] = s;
        m
    }

    /// Generator `e_{i+1}` (zero-based `i`).
    pub fn generator(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        Self::monomial(dim, 1 << i, S::one())
    }

    /// Unit-coefficient top monomial `e_1 ... e_n`.
    pub fn volume(dim: usize) -> Self {
        Self::monomial(dim, (1 << dim) - 1, S::one())
    }

    pub fn from_coeffs(dim: usize, coeffs: Vec<S>) -> Result<Self> {
        if dim > MAX_DIM {
            return Err(Error::InvalidArgument(format!("dimension {dim} exceeds {MAX_DIM}")));
        }
        if coeffs.len() != 1 << dim {
            return Err(Error::LengthMismatch { expected: 1 << dim, got: coeffs.len() });
        }
        Ok(Multivector { dim, coeffs })
    }

    /// Vector `sum_i v_i e_i`.
    pub fn vector(v: &[S]) -> Self {
        let mut m = Self::zero(v.len());
        for (i, &x) in v.iter().enumerate() {
            m.coeffs[1 << i] = x;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [S] {
        &mut self.coeffs
    }

    pub fn coeff(&self, mask: usize) -> S {
        self.coeffs[mask]
    }

    pub fn set(&mut self, mask: usize, s: S) {
        self.coeffs[mask] = s;
    }

    pub fn scalar_part(&self) -> S {
        self.coeffs[0]
    }

    pub fn top(&self) -> S {
        self.coeffs[(1 << self.dim) - 1]
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            Err(Error::DimensionMismatch(self.dim, other.dim))
        } else {
            Ok(())
        }
    }

    pub fn scale(&self, s: S) -> Self {
        Multivector { dim: self.dim, coeffs: self.coeffs.iter().map(|&c| c * s).collect() }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> Multivector<T> {
        Multivector { dim: self.dim, coeffs: self.coeffs.iter().map(|&c| f(c)).collect() }
    }

    pub fn to_complex(&self) -> ComplexClifford {
        self.map(|c| c.to_complex())
    }

    /// Clifford product under `v * v = -|v|^2`.
    pub fn clifford_mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(self.mul_unchecked(other, clifford_sign))
    }

    /// Exterior (wedge) product.
    pub fn exterior_mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(self.mul_unchecked(other, wedge_sign))
    }

    fn mul_unchecked(&self, other: &Self, sign: fn(usize, usize) -> f64) -> Self {
        let mut out = vec![S::zero(); self.coeffs.len()];
        for (a, &ca) in self.coeffs.iter().enumerate() {
            if ca == S::zero() {
                continue;
            }
            for (b, &cb) in other.coeffs.iter().enumerate() {
                if cb == S::zero() {
                    continue;
                }
                let s = sign(a, b);
                if s != 0.0 {
                    out[a ^ b] += S::from_f64(s) * ca * cb;
                }
            }
        }
        Multivector { dim: self.dim, coeffs: out }
    }

    /// Part of grade `k`.
    pub fn grade(&self, k: usize) -> Self {
        let mut m = Self::zero(self.dim);
        for (i, &c) in self.coeffs.iter().enumerate() {
            if i.count_ones() as usize == k {
                m.coeffs[i] = c;
            }
        }
        m
    }

    pub fn even_part(&self) -> Self {
        self.parity_part(0)
    }

    pub fn odd_part(&self) -> Self {
        self.parity_part(1)
    }

    fn parity_part(&self, p: u32) -> Self {
        let mut m = Self::zero(self.dim);
        for (i, &c) in self.coeffs.iter().enumerate() {
            if i.count_ones() & 1 == p {
                m.coeffs[i] = c;
            }
        }
        m
    }

    /// Parity (0 even, 1 odd) when homogeneous; the zero element counts as even.
    pub fn parity(&self) -> Option<u8> {
        let mut seen = [false; 2];
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c != S::zero() {
                seen[(i.count_ones() & 1) as usize] = true;
            }
        }
        match seen {
            [_, false] => Some(0),
            [false, true] => Some(1),
            _ => None,
        }
    }

    pub fn is_even(&self) -> bool {
        self.parity() == Some(0)
    }

    pub fn is_odd(&self) -> bool {
        self.parity() == Some(1)
    }

    /// Bilinear pairing making the monomial basis orthonormal.
    pub fn inner(&self, other: &Self) -> Result<S> {
        self.check(other)?;
        let mut s = S::zero();
        for (a, b) in self.coeffs.iter().zip(&other.coeffs) {
            s += *a * *b;
        }
        Ok(s)
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs() * c.abs()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (*a - *b).abs()).fold(0.0, f64::max)
    }

    /// Supertrace `2^{n/2}` times the top coefficient.
    pub fn supertrace(&self) -> S {
        S::from_f64(2f64.powf(self.dim as f64 / 2.0)) * self.top()
    }

    /// Trace on complex spinors: odd `n = 2m+1` uses the ungraded module,
    /// even `n` returns the graded supertrace `(-i)^{n/2} str`.
    pub fn complex_trace(&self) -> Complex64 {
        let n = self.dim;
        let i = Complex64::i();
        if n % 2 == 1 {
            let m = (n - 1) / 2;
            let top = self.top().to_complex();
            let one = self.scalar_part().to_complex();
            i * (2.0 * i).powu(m as u32) * top + 2f64.powi(m as i32) * one
        } else {
            (-i).powu((n / 2) as u32) * self.supertrace().to_complex()
        }
    }

    /// Clifford exponential by scaling and squaring of a Taylor series.
    pub fn exp(&self) -> Self {
        let norm = self.norm();
        let mut squarings = 0u32;
        let mut scale = 1.0;
        while norm * scale > 0.5 {
            scale *= 0.5;
            squarings += 1;
        }
        let x = self.scale(S::from_f64(scale));
        let mut term = Self::one(self.dim);
        let mut sum = Self::one(self.dim);
        for k in 1..30 {
            term = term.mul_unchecked(&x, clifford_sign).scale(S::from_f64(1.0 / k as f64));
            sum = &sum + &term;
            if term.norm() < 1e-18 * sum.norm() {
                break;
            }
        }
        for _ in 0..squarings {
            sum = sum.mul_unchecked(&sum, clifford_sign);
        }
        sum
    }
}

/// Quantization map: reinterprets an exterior element as a Clifford element.
pub fn quantize<S: Scalar>(a: &Multivector<S>) -> Multivector<S> {
    a.clone()
}

/// Inverse of [`quantize`].
pub fn dequantize<S: Scalar>(a: &Multivector<S>) -> Multivector<S> {
    a.clone()
}

impl<S: Scalar> Add for &Multivector<S> {
    type Output = Multivector<S>;
    fn add(self, rhs: Self) -> Multivector<S> {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        Multivector {
            dim: self.dim,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| *a + *b).collect(),
        }
    }
}

impl<S: Scalar> AddAssign<&Multivector<S>> for Multivector<S> {
    fn add_assign(&mut self, rhs: &Multivector<S>) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += *b;
        }
    }
}

impl<S: Scalar> Sub for &Multivector<S> {
    type Output = Multivector<S>;
    fn sub(self, rhs: Self) -> Multivector<S> {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        Multivector {
            dim: self.dim,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| *a - *b).collect(),
        }
    }
}

impl<S: Scalar> Neg for &Multivector<S> {
    type Output = Multivector<S>;
    fn neg(self) -> Multivector<S> {
        self.scale(-S::one())
    }
}

/// Clifford product; panics on dimension mismatch.
impl<S: Scalar> Mul for &Multivector<S> {
    type Output = Multivector<S>;
    fn mul(self, rhs: Self) -> Multivector<S> {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        self.mul_unchecked(rhs, clifford_sign)
    }
}

impl<S: Scalar> fmt::Debug for Multivector<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl<S: Scalar> fmt::Display for Multivector<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for mask in display_order(self.dim) {
            let c = self.coeffs[mask];
            if c == S::zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c:?}")?;
            for i in 0..self.dim {
                if mask >> i & 1 == 1 {
                    write!(f, "e{}", i + 1)?;
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Permutation `sigma` of `0..N` in one-line notation: `sigma[j]` is the
/// image of slot `j`, slot 0 being the rightmost tensor factor.
pub type Permutation = Vec<usize>;

fn check_perm(sigma: &[usize]) -> Result<()> {
    let mut seen = vec![false; sigma.len()];
    for &s in sigma {
        if s >= sigma.len() || seen[s] {
            return Err(Error::InvalidArgument(format!("not a permutation: {sigma:?}")));
        }
        seen[s] = true;
    }
    Ok(())
}

/// Koszul sign: the product `x_{sigma(N-1)} ... x_{sigma(0)}` of supercommuting
/// factors with parities `degrees` equals `sign * x_{N-1} ... x_0`.
pub fn super_sign(sigma: &[usize], degrees: &[usize]) -> Result<i8> {
    if sigma.len() != degrees.len() {
        return Err(Error::LengthMismatch { expected: sigma.len(), got: degrees.len() });
    }
    check_perm(sigma)?;
    let mut odd_inversions = 0usize;
    for p in 0..sigma.len() {
        for q in 0..p {
            // position p sits to the left of position q
            let (a, b) = (sigma[p], sigma[q]);
            if a < b && degrees[a] % 2 == 1 && degrees[b] % 2 == 1 {
                odd_inversions += 1;
            }
        }
    }
    Ok(if odd_inversions % 2 == 0 { 1 } else { -1 })
}

/// `(sigma o rho)[j] = sigma[rho[j]]`.
pub fn compose(sigma: &[usize], rho: &[usize]) -> Permutation {
    rho.iter().map(|&r| sigma[r]).collect()
}

/// Degrees seen after permuting: `out[j] = degrees[sigma[j]]`.
pub fn permute_degrees(sigma: &[usize], degrees: &[usize]) -> Vec<usize> {
    sigma.iter().map(|&s| degrees[s]).collect()
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Permutation> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            break;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
    out
}

/// Supersymmetry operator on a tensor of homogeneous factors (slot 0 rightmost).
pub fn susy_permute<S: Scalar>(
    sigma: &[usize],
    factors: &[Multivector<S>],
) -> Result<(i8, Vec<Multivector<S>>)> {
    if sigma.len() != factors.len() {
        return Err(Error::LengthMismatch { expected: sigma.len(), got: factors.len() });
    }
    let parities = factors
        .iter()
        .map(|f| f.parity().map(usize::from).ok_or(Error::NonHomogeneous))
        .collect::<Result<Vec<_>>>()?;
    let sign = super_sign(sigma, &parities)?;
    Ok((sign, sigma.iter().map(|&s| factors[s].clone()).collect()))
}

/// `r x r` matrix with entries in `Cl_n ⊗ C`: endomorphisms of `Cl_n ⊗ C^r`
/// that commute with the right Clifford action, e.g. spinor transport
/// tensored with a twist bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct CliffordMatrix {
    dim: usize,
    rank: usize,
    entries: Vec<ComplexClifford>,
}

impl CliffordMatrix {
    pub fn zero(dim: usize, rank: usize) -> Self {
        Self { dim, rank, entries: vec![ComplexClifford::zero(dim); rank * rank] }
    }

    pub fn identity(dim: usize, rank: usize) -> Self {
        let mut m = Self::zero(dim, rank);
        for i in 0..rank {
            m.entries[i * rank + i] = ComplexClifford::one(dim);
        }
        m
    }

    /// `a ⊗ M` for a Clifford element `a` and a complex matrix `M`.
    pub fn kron(a: &ComplexClifford, m: &nalgebra::DMatrix<Complex64>) -> Self {
        let r = m.nrows();
        let mut out = Self::zero(a.dim(), r);
        for i in 0..r {
            for j in 0..r {
                if m[(i, j)] != Complex64::new(0.0, 0.0) {
                    out.entries[i * r + j] = a.scale(m[(i, j)]);
                }
            }
        }
        out
    }

    /// `1 ⊗ M`.
    pub fn from_matrix(dim: usize, m: &nalgebra::DMatrix<Complex64>) -> Self {
        Self::kron(&ComplexClifford::one(dim), m)
    }

    /// `a ⊗ 1_r`.
    pub fn from_clifford(a: &ComplexClifford, rank: usize) -> Self {
        Self::kron(a, &nalgebra::DMatrix::identity(rank, rank))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn entry(&self, i: usize, j: usize) -> &ComplexClifford {
        &self.entries[i * self.rank + j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut ComplexClifford {
        &mut self.entries[i * self.rank + j]
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!((self.dim, self.rank), (other.dim, other.rank), "shape mismatch");
        let r = self.rank;
        let mut out = Self::zero(self.dim, r);
        for i in 0..r {
            for k in 0..r {
                let a = &self.entries[i * r + k];
                if a.coeffs().iter().all(|c| *c == Complex64::new(0.0, 0.0)) {
                    continue;
                }
                for j in 0..r {
                    let p = a.mul_unchecked(&other.entries[k * r + j], clifford_sign);
                    out.entries[i * r + j] += &p;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect();
        Self { dim: self.dim, rank: self.rank, entries }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { dim: self.dim, rank: self.rank, entries: self.entries.iter().map(|a| a.scale(s)).collect() }
    }

    /// Euclidean norm of all coefficients.
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|a| a.norm().powi(2)).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries.iter().zip(&other.entries).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max)
    }

    /// Real-spinor supertrace `Σ_i str(A_ii)` (complex-valued when twisted).
    pub fn supertrace(&self) -> Complex64 {
        (0..self.rank).map(|i| self.entries[i * self.rank + i].supertrace()).sum()
    }

    /// Complex-spinor trace `Σ_i tr_C(A_ii)`.
    pub fn complex_trace(&self) -> Complex64 {
        (0..self.rank).map(|i| self.entries[i * self.rank + i].complex_trace()).sum()
    }

    /// Twist-grading supertrace: summand `i` counted with `(-1)^{parity_i}`.
    pub fn graded_supertrace(&self, parity: &[u8]) -> Complex64 {
        (0..self.rank)
            .map(|i| {
                let s = self.entries[i * self.rank + i].supertrace();
                if parity[i] % 2 == 1 {
                    -s
                } else {
                    s
                }
            })
            .sum()
    }

    pub fn exp(&self) -> Self {
        let norm = self.norm();
        let mut squarings = 0u32;
        let mut scale = 1.0;
        while norm * scale > 0.5 {
            scale *= 0.5;
            squarings += 1;
        }
        let x = self.scale(Complex64::new(scale, 0.0));
        let mut term = Self::identity(self.dim, self.rank);
        let mut sum = term.clone();
        for k in 1..40 {
            term = term.mul(&x).scale(Complex64::new(1.0 / k as f64, 0.0));
            sum = sum.add(&term);
            if term.norm() < 1e-18 * sum.norm() {
                break;
            }
        }
        for _ in 0..squarings {
            sum = sum.mul(&sum);
        }
        sum
    }
}
