mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use semiflat_core::potential::{parse_expr, EvalError, Node, ParseError};
use semiflat_core::Expression;

fn jets_fd(e: &Expression, p: &[f64], h: f64) -> (DVector<f64>, DMatrix<f64>, Vec<f64>) {
    let n = p.len();
    let shifted = |i: usize, s: f64| {
        let mut q = p.to_vec();
        q[i] += s;
        q
    };
    let grad = DVector::from_fn(n, |i, _| (e.eval(&shifted(i, h)).unwrap() - e.eval(&shifted(i, -h)).unwrap()) / (2.0 * h));
    // Hessian and third tensor from central differences of the exact gradient and Hessian
    let hess = DMatrix::from_fn(n, n, |i, j| {
        let gp = e.eval_grad(&shifted(j, h)).unwrap().1[i];
        let gm = e.eval_grad(&shifted(j, -h)).unwrap().1[i];
        (gp - gm) / (2.0 * h)
    });
    let mut third = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let hp = e.eval_jet2(&shifted(l, h)).unwrap().2[(i, j)];
                let hm = e.eval_jet2(&shifted(l, -h)).unwrap().2[(i, j)];
                third.push((hp - hm) / (2.0 * h));
            }
        }
    }
    (grad, hess, third)
}

fn jet_errors(e: &Expression, p: &[f64], h: f64) -> [f64; 3] {
    let jet = e.eval_jet3(p).unwrap();
    let (g, hs, t) = jets_fd(e, p, h);
    let n = p.len();
    let mut te = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                te = te.max((jet.third.get(i, j, l) - t[(i * n + j) * n + l]).abs());
            }
        }
    }
    [(jet.gradient - g).amax(), (jet.hessian - hs).amax(), te]
}

#[test]
fn parses_documented_examples() {
    let q = Expression::in_x("(x1^2 + x2^2)/2", 2).unwrap();
    assert_eq!(q.dim(), 2);
    assert!(Expression::in_x("x1^2/2 + x2^2/2 + 0.1*log(exp(x1)+exp(x2))", 2).is_ok());
    assert!(matches!(
        Expression::in_x("x3 + 1", 2),
        Err(ParseError::UnknownIdentifier { ref name, .. }) if name == "x3"
    ));
}

#[test]
fn syntax_errors_are_reported() {
    assert_eq!(Expression::in_x("", 1).unwrap_err(), ParseError::Empty);
    assert!(matches!(Expression::in_x("x1 +", 1), Err(ParseError::Syntax { .. })));
    assert!(matches!(Expression::in_x("(x1", 1), Err(ParseError::Syntax { .. })));
    assert!(matches!(Expression::in_x("sin(x1, x1)", 1), Err(ParseError::Arity { .. }) | Err(ParseError::Syntax { .. })));
    assert!(matches!(Expression::in_x("x1^x1", 1), Err(ParseError::NonConstantExponent { .. })));
    assert!(matches!(Expression::in_x("foo(x1)", 1), Err(ParseError::UnknownIdentifier { .. })));
    let none: [&str; 0] = [];
    assert_eq!(parse_expr("1", &none).unwrap_err(), ParseError::NoVariables);
}

#[test]
fn precedence_and_constants() {
    let e = Expression::in_x("-x1^2 + 2^3^0 * pi", 1).unwrap();
    assert!((e.eval(&[3.0]).unwrap() - (-9.0 + 2.0 * std::f64::consts::PI)).abs() < 1e-14);
    let c = Expression::in_u("pi/4", 1).unwrap();
    assert!(c.is_constant());
    assert!(!Expression::in_u("u1/4", 1).unwrap().is_constant());
    assert!(matches!(Expression::in_x("2", 1).unwrap().root(), Node::Const(_)));
}

#[test]
fn evaluation_domain_errors() {
    let e = Expression::in_x("log(x1)", 1).unwrap();
    assert!(matches!(e.eval(&[-1.0]), Err(EvalError::LogDomain(_))));
    let e = Expression::in_x("1/x1", 1).unwrap();
    assert_eq!(e.eval(&[0.0]), Err(EvalError::DivisionByZero));
    let e = Expression::in_x("sqrt(x1)", 1).unwrap();
    assert!(matches!(e.eval(&[-2.0]), Err(EvalError::SqrtDomain(_))));
    assert!(matches!(e.eval(&[1.0, 2.0]), Err(EvalError::Dimension { expected: 1, got: 2 })));
}

#[test]
fn quadratic_jet_example() {
    let e = Expression::in_x("(x1^2 + x2^2)/2", 2).unwrap();
    let j = e.eval_jet3(&[0.3, 0.7]).unwrap();
    assert!((j.value - 0.29).abs() < 1e-15);
    assert!((j.gradient[0] - 0.3).abs() < 1e-15 && (j.gradient[1] - 0.7).abs() < 1e-15);
    assert_eq!(j.hessian, DMatrix::identity(2, 2));
    assert_eq!(j.third.asymmetry(), 0.0);
    for i in 0..2 {
        for k in 0..2 {
            for l in 0..2 {
                assert_eq!(j.third.get(i, k, l), 0.0);
            }
        }
    }
}

#[test]
fn bilinear_jet_example() {
    let e = Expression::in_x("x1*x2", 2).unwrap();
    let j = e.eval_jet3(&[2.0, 5.0]).unwrap();
    assert_eq!(j.gradient.as_slice(), &[5.0, 2.0]);
    assert_eq!(j.hessian, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    assert!((0..8).all(|n| j.third.get(n & 1, (n >> 1) & 1, n >> 2) == 0.0));
}

#[test]
fn log_sum_exp_matches_finite_differences() {
    let e = Expression::in_x("0.1*log(exp(x1)+exp(x2))", 2).unwrap();
    let errs = jet_errors(&e, &[0.2, 0.8], 1e-4);
    assert!(errs.iter().all(|v| *v <= 1e-6), "{errs:?}");
    // closed form: gradient is 0.1 softmax, Hessian 0.1 (diag p − p pᵀ)
    let (a, b) = (0.2f64.exp(), 0.8f64.exp());
    let p = [a / (a + b), b / (a + b)];
    let j = e.eval_jet3(&[0.2, 0.8]).unwrap();
    assert!((j.gradient[0] - 0.1 * p[0]).abs() < 1e-15);
    assert!((j.hessian[(0, 1)] + 0.1 * p[0] * p[1]).abs() < 1e-15);
}

#[test]
fn finite_difference_order_is_two() {
    let e = Expression::in_x("sin(x1)*exp(0.3*x2) + log(2 + x1*x2) + sqrt(1 + x2^2)/(1 + x1^2)", 2).unwrap();
    let p = [0.4, -0.3];
    let coarse = jet_errors(&e, &p, 1e-2);
    let fine = jet_errors(&e, &p, 5e-3);
    for (c, f) in coarse.iter().zip(&fine) {
        let order = (c / f).log2();
        assert!(order >= 1.9, "observed order {order} ({c:e} -> {f:e})");
    }
}

#[test]
fn identical_text_gives_identical_jets() {
    let src = "0.5*x1^2 + x1*x2 + x2^2 + 0.1*log(exp(x1) + exp(x2)) + cos(x1 - x2)";
    let a = Expression::in_x(src, 2).unwrap();
    let b = Expression::in_x(src, 2).unwrap();
    assert_eq!(a, b);
    let (ja, jb) = (a.eval_jet3(&[0.3, -0.2]).unwrap(), b.eval_jet3(&[0.3, -0.2]).unwrap());
    assert_eq!(ja.value.to_bits(), jb.value.to_bits());
    assert!(ja.gradient.iter().zip(jb.gradient.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(ja.hessian.iter().zip(jb.hessian.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(ja.third, jb.third);
}

#[test]
fn jet_levels_agree() {
    let e = Expression::in_x("exp(x1)*sin(x2) + x3^3/6", 3).unwrap();
    let p = [0.1, 0.2, 0.3];
    let v = e.eval(&p).unwrap();
    let (v1, g1) = e.eval_grad(&p).unwrap();
    let (v2, g2, h2) = e.eval_jet2(&p).unwrap();
    let j = e.eval_jet3(&p).unwrap();
    assert_eq!(v, v1);
    assert_eq!(v, v2);
    assert_eq!(v, j.value);
    assert!((g1 - &j.gradient).amax() < 1e-15 && (g2 - &j.gradient).amax() < 1e-15);
    assert!((h2 - &j.hessian).amax() < 1e-15);
    assert!((j.third.get(2, 2, 2) - 1.0).abs() < 1e-15);
}

/// Monomial `c · x^α` with `|α| ≤ 3`.
#[derive(Debug, Clone)]
struct Mono {
    c: f64,
    alpha: [u32; 3],
}

fn mono() -> impl Strategy<Value = Mono> {
    (-2.0f64..2.0, 0u32..=3, 0u32..=3, 0u32..=3)
        .prop_filter("degree ≤ 3", |(_, a, b, c)| a + b + c <= 3)
        .prop_map(|(c, a, b, d)| Mono { c, alpha: [a, b, d] })
}

fn mono_derivative(m: &Mono, x: &[f64], orders: &[usize]) -> f64 {
    let mut alpha = m.alpha.map(|a| a as i32);
    let mut coeff = m.c;
    for &i in orders {
        coeff *= alpha[i] as f64;
        alpha[i] -= 1;
        if alpha[i] < 0 {
            return 0.0;
        }
    }
    coeff * (0..3).map(|i| x[i].powi(alpha[i])).product::<f64>()
}

proptest! {
    #[test]
    fn cubic_polynomial_jets_are_exact(
        monos in proptest::collection::vec(mono(), 1..6),
        x in proptest::array::uniform3(-1.5f64..1.5),
    ) {
        let src = monos
            .iter()
            .map(|m| format!("({:.17e})*x1^{}*x2^{}*x3^{}", m.c, m.alpha[0], m.alpha[1], m.alpha[2]))
            .collect::<Vec<_>>()
            .join(" + ");
        let e = Expression::in_x(&src, 3).unwrap();
        let j = e.eval_jet3(&x).unwrap();
        let sum = |orders: &[usize]| monos.iter().map(|m| mono_derivative(m, &x, orders)).sum::<f64>();
        let scale = 1.0 + monos.iter().map(|m| m.c.abs()).sum::<f64>() * 30.0;
        prop_assert!((j.value - sum(&[])).abs() <= 1e-12 * scale);
        for i in 0..3 {
            prop_assert!((j.gradient[i] - sum(&[i])).abs() <= 1e-12 * scale);
            for k in 0..3 {
                prop_assert!((j.hessian[(i, k)] - sum(&[i, k])).abs() <= 1e-12 * scale);
                for l in 0..3 {
                    prop_assert!((j.third.get(i, k, l) - sum(&[i, k, l])).abs() <= 1e-12 * scale);
                }
            }
        }
        prop_assert!(j.third.asymmetry() <= 1e-12 * scale);
        prop_assert!((&j.hessian - j.hessian.transpose()).amax() == 0.0);
    }

    #[test]
    fn variables_stay_in_range(n in 1usize..5, idx in 1usize..8) {
        let src = format!("x{idx} + 1");
        let r = Expression::in_x(&src, n);
        prop_assert_eq!(r.is_ok(), idx <= n);
    }
}
