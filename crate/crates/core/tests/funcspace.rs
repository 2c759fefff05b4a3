mod common;

use common::{bump_ref, gauss_1d, hermite_ref, trapezoid, trapezoid2};
use num_complex::Complex64;
use qghaar::funcspace::{
    basis_indices, bump, hermite_functions, hermite_poly, inner_product, make_primitive, merge_breaks, norm_sq, Onb, Primitive, RFamily,
};
use qghaar::params::MAX_N;
use qghaar::{Error, ModelParams};

fn sample_primitive() -> Primitive {
    Primitive {
        n: 1,
        kx: vec![2],
        ky: vec![1],
        cx: vec![0.2],
        cy: vec![-0.1],
        wx: vec![0.5],
        wy: vec![0.6],
        r_center: 0.1,
        r_half: 0.7,
        coef: Complex64::new(0.3, 0.4),
    }
}

#[test]
fn hermite_polynomials_match_explicit_sum() {
    for k in 0..12 {
        for &t in &[-2.1, -0.4, 0.0, 0.3, 1.7] {
            let (a, b) = (hermite_poly(k, t), hermite_ref(k, t));
            assert!((a - b).abs() <= 1e-11 * b.abs().max(1.0), "H_{k}({t})");
        }
    }
}

#[test]
fn hermite_functions_are_orthonormal() {
    let s = 0.7;
    let len = 8;
    for i in 0..len {
        for j in 0..len {
            let v = trapezoid(-12.0, 12.0, 6000, |x| {
                let mut out = vec![0.0; len];
                hermite_functions(len, x, s, &mut out);
                Complex64::new(out[i] * out[j], 0.0)
            });
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((v.re - want).abs() < 1e-10, "({i},{j}): {v}");
        }
    }
}

#[test]
fn primitive_matches_independent_formula() {
    let p = sample_primitive();
    for &(x, y, r) in &[(0.1, 0.2, 0.3), (-0.4, 0.9, -0.5), (1.1, -0.3, 0.79)] {
        let want = p.coef
            * bump_ref((r - 0.1) / 0.7)
            * hermite_ref(2, (x - 0.2) / 0.5)
            * gauss_1d(0.2, 0.5, x)
            * hermite_ref(1, (y + 0.1) / 0.6)
            * gauss_1d(-0.1, 0.6, y);
        assert!((p.eval(&[x], &[y], r) - want).norm() < 1e-14);
    }
    assert_eq!(p.eval(&[0.0], &[0.0], 0.81), Complex64::new(0.0, 0.0));
}

#[test]
fn primitive_norm_matches_brute_force() {
    let p = sample_primitive();
    let xy = trapezoid2(-5.0, 5.0, 800, |x, y| Complex64::new(p.eval(&[x], &[y], 0.1).norm_sqr(), 0.0));
    let rr = trapezoid(-0.6, 0.8, 4000, |r| Complex64::new(bump_ref((r - 0.1) / 0.7).powi(2), 0.0));
    // p at r = 0.1 has bump value 1
    let want = xy.re * rr.re;
    assert!((p.norm_sq() - want).abs() < 1e-9 * want);
    assert!((p.clone().unit().norm_sq() - 1.0).abs() < 1e-13);
}

#[test]
fn quadrature_inner_product_matches_closed_norm() {
    let params = ModelParams::default();
    let p = sample_primitive();
    let f = p.to_function();
    let got = norm_sq(&params, &f).unwrap();
    assert!((got - p.norm_sq()).abs() < 1e-8 * p.norm_sq());
}

#[test]
fn onb_is_orthonormal() {
    let params = ModelParams::default();
    let onb = Onb::new(&params, 20);
    for i in (0..20).step_by(3) {
        for j in (0..20).step_by(2) {
            let v = inner_product(&params, onb.get(i), onb.get(j)).unwrap();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((v - want).norm() < 1e-8, "<e{i}, e{j}> = {v}");
        }
    }
}

#[test]
fn r_family_is_orthonormal_against_trapezoid() {
    let fam = RFamily::new(6, 2.0);
    for i in 0..6 {
        for j in 0..6 {
            let v = trapezoid(-2.0, 2.0, 20000, |r| Complex64::new(fam.value(i, r) * fam.value(j, r), 0.0));
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((v.re - want).abs() < 1e-9, "({i},{j}): {}", v.re);
        }
    }
}

#[test]
fn basis_indices_are_ordered_by_degree_and_distinct() {
    let idx = basis_indices(1, 35);
    let deg = |b: &qghaar::funcspace::BasisIndex| b.herm.iter().sum::<u32>() as usize + b.m;
    assert!(idx.windows(2).all(|w| deg(&w[0]) <= deg(&w[1])));
    for i in 0..idx.len() {
        for j in 0..i {
            assert_ne!(idx[i], idx[j]);
        }
    }
    // degree ≤ 3 in 3 slots has C(6,3) = 20 elements
    assert_eq!(idx.iter().filter(|b| deg(b) <= 3).count(), 20);
}

#[test]
fn sums_carry_breakpoints_and_stay_linear() {
    let params = ModelParams::default();
    let f = Primitive::gaussian(1, 0.5, 0.5, 0.4).unit().to_function();
    let g = Primitive::gaussian(1, 0.6, -0.3, 0.8).unit().to_function();
    let h = f.scale(Complex64::new(0.0, 2.0)).add(&g);
    let near = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(u, v)| (u - v).abs() < 1e-12);
    assert!(near(&[h.rsupp().0, h.rsupp().1], &[-1.1, 0.9]));
    assert!(near(h.breaks(), &[0.1, 0.5]), "{:?}", h.breaks());
    assert!(near(&merge_breaks((-1.0, 1.0), &[&f, &g], true), &[0.1, 0.5, 0.9]));
    let lin = |v: &qghaar::CylFunction| qghaar::weights::phi(&params, v).unwrap();
    let lhs = lin(&h);
    let rhs = Complex64::new(0.0, 2.0) * lin(&f) + lin(&g);
    assert!((lhs - rhs).norm() < 1e-7 * rhs.norm(), "{lhs} vs {rhs}");
}

#[test]
fn bump_is_smooth_and_normalized_at_origin() {
    assert_eq!(bump(0.0), 1.0);
    assert_eq!(bump(1.0), 0.0);
    assert!(bump(0.999) < 1e-200);
}

#[test]
fn make_primitive_validates() {
    let params = ModelParams::default();
    assert!(make_primitive(&params, &[0, 0], &[0.0, 0.0], &[0.5, 0.5], (0.0, 1.0)).is_ok());
    assert!(matches!(make_primitive(&params, &[0], &[0.0, 0.0], &[0.5, 0.5], (0.0, 1.0)), Err(Error::Shape { .. })));
    assert!(matches!(make_primitive(&params, &[0, 0], &[0.0, 0.0], &[-0.5, 0.5], (0.0, 1.0)), Err(Error::Domain(_))));
    assert!(matches!(make_primitive(&params, &[0, 0], &[0.0, 0.0], &[0.5, 0.5], (1.5, 1.0)), Err(Error::Domain(_))));
}

#[test]
fn params_parse_roundtrip_and_validate() {
    let p = ModelParams::from_config_str("# comment\nlambda = 0.25\nbasis_size=32\n\nseed = 11\n").unwrap();
    assert_eq!((p.lambda, p.basis_size, p.seed), (0.25, 32, 11));
    assert_eq!(p.quad_xy_order, 32);
    let back = ModelParams::from_config_str(&p.to_config_string()).unwrap();
    assert_eq!(back, p);
    assert_eq!(back.digest(), p.digest());
    assert_ne!(p.digest(), ModelParams::default().digest());
    assert!(matches!(ModelParams::from_config_str("lamda = 0.1"), Err(Error::Config(_))));
    assert!(matches!(ModelParams::from_config_str("lambda = x"), Err(Error::Config(_))));
    for bad in [
        ModelParams { n: MAX_N + 1, ..ModelParams::default() },
        ModelParams { n: 0, ..ModelParams::default() },
        ModelParams { tol_quad: -1.0, ..ModelParams::default() },
    ] {
        assert!(bad.validate().is_err());
    }
}
