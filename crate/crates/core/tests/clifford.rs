use loopint::clifford::{
    compose, dequantize, permutations, permute_degrees, quantize, super_sign, susy_permute,
    CliffordElement, Multivector,
};
use num_complex::Complex64;
use proptest::prelude::*;

/// Independent oracle: multiply index words by bubble sorting with
/// `e_i e_j = -e_j e_i` and `e_i e_i = -1`.
fn word_product(a: &[usize], b: &[usize]) -> (f64, Vec<usize>) {
    let mut w: Vec<usize> = a.iter().chain(b).copied().collect();
    let mut sign = 1.0;
    loop {
        let mut changed = false;
        let mut i = 0;
        while i + 1 < w.len() {
            if w[i] > w[i + 1] {
                w.swap(i, i + 1);
                sign = -sign;
                changed = true;
            } else if w[i] == w[i + 1] {
                w.drain(i..i + 2);
                sign = -sign;
                changed = true;
                continue;
            }
            i += 1;
        }
        if !changed {
            break;
        }
    }
    (sign, w)
}

fn mask_word(mask: usize, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

fn word_mask(w: &[usize]) -> usize {
    w.iter().map(|i| 1 << i).sum()
}

fn oracle_mul(a: &CliffordElement, b: &CliffordElement) -> CliffordElement {
    let n = a.dim();
    let mut out = CliffordElement::zero(n);
    for ma in 0..1 << n {
        for mb in 0..1 << n {
            let (s, w) = word_product(&mask_word(ma, n), &mask_word(mb, n));
            let m = word_mask(&w);
            out.set(m, out.coeff(m) + s * a.coeff(ma) * b.coeff(mb));
        }
    }
    out
}

fn e(n: usize, i: usize) -> CliffordElement {
    CliffordElement::generator(n, i)
}

#[test]
fn exterior_examples() {
    let n = 2;
    assert_eq!(e(n, 0).exterior_mul(&e(n, 0)).unwrap(), CliffordElement::zero(n));
    assert_eq!(e(n, 0).exterior_mul(&e(n, 1)).unwrap(), CliffordElement::monomial(n, 0b11, 1.0));
    assert_eq!(e(n, 1).exterior_mul(&e(n, 0)).unwrap(), CliffordElement::monomial(n, 0b11, -1.0));
    let one_plus = &CliffordElement::one(n) + &e(n, 0);
    let expect = &e(n, 1) + &CliffordElement::monomial(n, 0b11, 1.0);
    assert_eq!(one_plus.exterior_mul(&e(n, 1)).unwrap(), expect);
}

#[test]
fn clifford_examples() {
    let n = 2;
    let anti = &(&e(n, 0) * &e(n, 1)) + &(&e(n, 1) * &e(n, 0));
    assert_eq!(anti, CliffordElement::zero(n));
    assert_eq!(&e(n, 0) * &e(n, 0), CliffordElement::scalar(n, -1.0));
    let e12 = CliffordElement::monomial(n, 0b11, 1.0);
    assert_eq!(&e12 * &e12, CliffordElement::scalar(n, -1.0));
    assert!(e(2, 0).clifford_mul(&e(3, 0)).is_err());
}

#[test]
fn quantization_examples() {
    let n = 2;
    let wedge = e(n, 0).exterior_mul(&e(n, 1)).unwrap();
    assert_eq!(quantize(&wedge), &e(n, 0) * &e(n, 1));
    assert_eq!(dequantize(&(&e(n, 0) * &e(n, 1))), wedge);
    assert_eq!(dequantize(&(&e(n, 0) * &e(n, 0))), CliffordElement::scalar(n, -1.0));
}

#[test]
fn supertrace_examples() {
    assert_eq!(CliffordElement::one(2).supertrace(), 0.0);
    assert_eq!(CliffordElement::monomial(2, 0b11, 1.0).supertrace(), 2.0);
    assert_eq!(e(2, 0).supertrace(), 0.0);
}

#[test]
fn complex_trace_examples() {
    let i = Complex64::i();
    assert_eq!(CliffordElement::one(1).complex_trace(), Complex64::new(1.0, 0.0));
    assert_eq!(e(1, 0).complex_trace(), i);
    let t = CliffordElement::monomial(2, 0b11, 1.0).complex_trace();
    assert!((t - Complex64::new(0.0, -2.0)).norm() < 1e-15);
}

#[test]
fn complex_trace_is_a_trace_in_odd_dimensions() {
    // tr(ab) = tr(ba) for the ungraded trace on Cl_3 (exhaustive on monomials)
    let n = 3;
    for a in 0..8 {
        for b in 0..8 {
            let x = CliffordElement::monomial(n, a, 1.0);
            let y = CliffordElement::monomial(n, b, 1.0);
            let d = (&x * &y).complex_trace() - (&y * &x).complex_trace();
            assert!(d.norm() < 1e-14, "{a} {b}");
        }
    }
    // odd elements: str = sqrt(2) (-i)^{m+1} tr_C
    let m = 1u32;
    let a = CliffordElement::volume(3);
    let lhs = Complex64::new(a.supertrace(), 0.0);
    let rhs = 2f64.sqrt() * (-Complex64::i()).powu(m + 1) * a.complex_trace();
    assert!((lhs - rhs).norm() < 1e-14);
}

#[test]
fn super_sign_examples() {
    assert_eq!(super_sign(&[1, 0], &[1, 1]).unwrap(), -1);
    assert_eq!(super_sign(&[1, 0], &[1, 0]).unwrap(), 1);
    for s in permutations(4) {
        assert_eq!(super_sign(&s, &[2, 0, 4, 2]).unwrap(), 1);
    }
    assert!(super_sign(&[0, 1], &[1]).is_err());
}

/// Super sign read off from an actual product in the exterior algebra with
/// distinct generators per factor.
fn super_sign_oracle(sigma: &[usize], degrees: &[usize]) -> i8 {
    let total: usize = degrees.iter().sum();
    let n = total.max(1);
    let mut next = 0;
    let mut factors = Vec::new();
    for &d in degrees {
        let mask: usize = (next..next + d).map(|i| 1 << i).sum();
        next += d;
        factors.push(CliffordElement::monomial(n, mask, 1.0));
    }
    let prod = |order: &mut dyn Iterator<Item = usize>| {
        let mut acc = CliffordElement::one(n);
        for j in order {
            acc = acc.exterior_mul(&factors[j]).unwrap();
        }
        acc
    };
    let n_f = degrees.len();
    let reference = prod(&mut (0..n_f).rev());
    let permuted = prod(&mut (0..n_f).rev().map(|j| sigma[j]));
    let full = (1 << total) - 1;
    (permuted.coeff(full) / reference.coeff(full)).round() as i8
}

#[test]
fn super_sign_matches_exterior_oracle_exhaustively() {
    for n in 1..=4 {
        for sigma in permutations(n) {
            for bits in 0..1usize << n {
                let degrees: Vec<usize> = (0..n).map(|j| 1 + (bits >> j & 1)).collect();
                assert_eq!(super_sign(&sigma, &degrees).unwrap(), super_sign_oracle(&sigma, &degrees));
            }
        }
    }
}

#[test]
fn super_sign_composition_exhaustive() {
    for n in [3, 4] {
        let perms = permutations(n);
        for bits in 0..1usize << n {
            let ell: Vec<usize> = (0..n).map(|j| bits >> j & 1).collect();
            for s in &perms {
                for r in &perms {
                    let lhs = super_sign(&compose(s, r), &ell).unwrap();
                    let rhs = super_sign(s, &ell).unwrap() * super_sign(r, &permute_degrees(s, &ell)).unwrap();
                    assert_eq!(lhs, rhs);
                }
            }
        }
    }
}

#[test]
fn susy_operator_composes_over_s3() {
    let n = 3;
    let factors = vec![
        CliffordElement::monomial(n, 0b001, 1.0),
        CliffordElement::monomial(n, 0b110, 2.0),
        CliffordElement::monomial(n, 0b010, 3.0),
    ];
    for s in permutations(3) {
        for r in permutations(3) {
            let (s1, once) = susy_permute(&s, &factors).unwrap();
            let (s2, twice) = susy_permute(&r, &once).unwrap();
            let (s3, direct) = susy_permute(&compose(&s, &r), &factors).unwrap();
            assert_eq!(s1 * s2, s3);
            assert_eq!(twice, direct);
        }
    }
    let (sign, same) = susy_permute(&[0, 1, 2], &factors).unwrap();
    assert_eq!(sign, 1);
    assert_eq!(same, factors);
    let odd = vec![e(2, 0), e(2, 1)];
    let (sign, swapped) = susy_permute(&[1, 0], &odd).unwrap();
    assert_eq!(sign, -1);
    assert_eq!(swapped, vec![e(2, 1), e(2, 0)]);
    let mixed = &CliffordElement::one(2) + &e(2, 0);
    assert!(susy_permute(&[0], &[mixed]).is_err());
}

#[test]
fn exp_of_bivector_is_rotor() {
    let e12 = CliffordElement::monomial(2, 0b11, 0.7);
    let r = e12.exp();
    assert!((r.scalar_part() - 0.7f64.cos()).abs() < 1e-14);
    assert!((r.coeff(0b11) - 0.7f64.sin()).abs() < 1e-14);
}

#[test]
fn display_uses_cardinality_then_lex_order() {
    let a = Multivector::<f64>::from_coeffs(3, (0..8).map(|i| i as f64).collect()).unwrap();
    let s = format!("{a}");
    let pos = |t: &str| s.find(t).unwrap();
    assert!(pos("e3") < pos("e1e2"));
    assert!(pos("e1e3") < pos("e2e3"));
    assert!(Multivector::<f64>::from_coeffs(2, vec![0.0; 3]).is_err());
}

fn element(n: usize) -> impl Strategy<Value = CliffordElement> {
    prop::collection::vec(-1.0f64..1.0, 1 << n)
        .prop_map(move |c| CliffordElement::from_coeffs(n, c).unwrap())
}

fn homogeneous(n: usize) -> impl Strategy<Value = (CliffordElement, usize)> {
    (element(n), 0usize..2).prop_map(|(a, p)| (if p == 0 { a.even_part() } else { a.odd_part() }, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn product_matches_word_oracle(a in element(3), b in element(3)) {
        prop_assert!((&a * &b).max_abs_diff(&oracle_mul(&a, &b)) < 1e-12);
    }

    #[test]
    fn product_is_associative(a in element(4), b in element(4), c in element(4)) {
        let l = &(&a * &b) * &c;
        let r = &a * &(&b * &c);
        prop_assert!(l.max_abs_diff(&r) < 1e-12);
    }

    #[test]
    fn wedge_is_associative(a in element(4), b in element(4), c in element(4)) {
        let l = a.exterior_mul(&b).unwrap().exterior_mul(&c).unwrap();
        let r = a.exterior_mul(&b.exterior_mul(&c).unwrap()).unwrap();
        prop_assert!(l.max_abs_diff(&r) < 1e-12);
    }

    #[test]
    fn supertrace_kills_supercommutators(
        ((a, pa), (b, pb)) in (1usize..6).prop_flat_map(|n| (homogeneous(n), homogeneous(n)))
    ) {
        let sign = if pa * pb % 2 == 1 { -1.0 } else { 1.0 };
        let comm = &(&a * &b) - &(&b * &a).scale(sign);
        prop_assert!(comm.supertrace().abs() < 1e-12);
    }

    #[test]
    fn supertrace_parity(a in element(4), b in element(3)) {
        prop_assert!(a.odd_part().supertrace().abs() < 1e-12);
        prop_assert!(b.even_part().supertrace().abs() < 1e-12);
    }

    #[test]
    fn quantize_roundtrip(a in element(3)) {
        prop_assert_eq!(dequantize(&quantize(&a)), a);
    }
}
