//! Randomized corpus for the expression language: print/parse roundtrips,
//! purity, and gradients against central finite differences.
//!
//! The corpus sticks to functions that are smooth everywhere (`abs`, `log`,
//! `sqrt` and `/` have kinks or domains and are covered by directed unit
//! tests instead); programs whose values or gradients blow up are discarded
//! before the finite-difference comparison.

use gsmvi::dsl::{differentiate, evaluate, parse};
use gsmvi_oracles::central_diff_gradient;
use nalgebra::DVector;
use proptest::prelude::*;

#[derive(Clone, Debug)]
enum GenExpr {
    Num(f64),
    Coord(usize),
    SumCoord,
    Dot,
    Unary(&'static str, Box<GenExpr>),
    Bin(char, Box<GenExpr>, Box<GenExpr>),
    Pow(Box<GenExpr>, i32),
    Sum(Box<GenExpr>),
}

fn render(e: &GenExpr, out: &mut String) {
    match e {
        GenExpr::Num(v) => out.push_str(&format!("{v}")),
        GenExpr::Coord(j) => out.push_str(&format!("theta[{j}]")),
        GenExpr::SumCoord => out.push_str("theta[i]"),
        GenExpr::Dot => out.push_str("dot(theta, theta)"),
        GenExpr::Unary(name, a) => {
            out.push_str(name);
            out.push('(');
            render(a, out);
            out.push(')');
        }
        GenExpr::Bin(op, a, b) => {
            out.push('(');
            render(a, out);
            out.push(' ');
            out.push(*op);
            out.push(' ');
            render(b, out);
            out.push(')');
        }
        GenExpr::Pow(a, n) => {
            out.push('(');
            render(a, out);
            out.push_str(&format!(")^{n}"));
        }
        GenExpr::Sum(a) => {
            out.push_str("sum(");
            render(a, out);
            out.push(')');
        }
    }
}

const SMOOTH_FUNCS: &[&str] = &["neg", "exp", "sinh", "cosh", "asinh", "tanh"];

fn leaf(dim: usize, allow_sum_coord: bool) -> BoxedStrategy<GenExpr> {
    let mut options: Vec<BoxedStrategy<GenExpr>> = vec![
        (0.05f64..2.0).prop_map(GenExpr::Num).boxed(),
        (0..dim).prop_map(GenExpr::Coord).boxed(),
        Just(GenExpr::Dot).boxed(),
    ];
    if allow_sum_coord {
        options.push(Just(GenExpr::SumCoord).boxed());
    }
    proptest::strategy::Union::new(options).boxed()
}

fn compound(dim: usize, allow_sum_coord: bool, depth: u32) -> BoxedStrategy<GenExpr> {
    leaf(dim, allow_sum_coord)
        .prop_recursive(depth, 24, 2, |inner| {
            prop_oneof![
                (proptest::sample::select(SMOOTH_FUNCS), inner.clone())
                    .prop_map(|(f, a)| GenExpr::Unary(f, Box::new(a))),
                (
                    proptest::sample::select(vec!['+', '-', '*']),
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| GenExpr::Bin(op, Box::new(a), Box::new(b))),
                (inner, 0i32..4).prop_map(|(a, n)| GenExpr::Pow(Box::new(a), n)),
            ]
        })
        .boxed()
}

fn program(dim: usize) -> BoxedStrategy<String> {
    let plain = compound(dim, false, 3);
    let summed = compound(dim, true, 2).prop_map(|b| GenExpr::Sum(Box::new(b)));
    prop_oneof![
        4 => plain.clone(),
        1 => summed.clone(),
        2 => (plain, summed).prop_map(|(a, b)| GenExpr::Bin(
            '+',
            Box::new(a),
            Box::new(b)
        )),
    ]
    .prop_map(|e| {
        let mut out = String::new();
        render(&e, &mut out);
        out
    })
    .boxed()
}

fn point(dim: usize) -> BoxedStrategy<Vec<f64>> {
    proptest::collection::vec(-1.5f64..1.5, dim).boxed()
}

fn case() -> BoxedStrategy<(usize, String, Vec<f64>)> {
    (1usize..5)
        .prop_flat_map(|dim| (Just(dim), program(dim), point(dim)))
        .boxed()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn print_parse_roundtrip_is_structural_identity((dim, text, _point) in case()) {
        let ast = parse(&text, dim).expect("generated programs parse");
        let printed = ast.to_text();
        let reparsed = parse(&printed, dim).expect("printed programs parse");
        prop_assert!(
            ast.root().same_structure(reparsed.root()),
            "{text} printed as {printed}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gradient_matches_finite_differences((dim, text, point_raw) in case()) {
        let ast = parse(&text, dim).expect("generated programs parse");
        let point = DVector::from_vec(point_raw);
        let value = match evaluate(&ast, &point) {
            Ok(v) => v,
            Err(_) => return Ok(()), // overflow in a deep exp chain
        };
        prop_assume!(value.abs() <= 1e5);
        let grad = match differentiate(&ast, &point) {
            Ok(g) => g,
            Err(_) => return Ok(()),
        };
        prop_assume!(grad.amax() <= 1e5);

        let numeric = central_diff_gradient(
            |x| evaluate(&ast, x).unwrap_or(f64::NAN),
            &point,
            1e-5,
        );
        prop_assume!(numeric.iter().all(|v| v.is_finite()));
        for i in 0..dim {
            let scale = grad[i].abs().max(1.0);
            let err = (grad[i] - numeric[i]).abs() / scale;
            prop_assert!(
                err <= 1e-5,
                "{text} at {point:?}: coord {i} analytic {} numeric {} rel {err}",
                grad[i], numeric[i]
            );
        }

        // purity: bit-identical re-evaluation
        let again = evaluate(&ast, &point).unwrap();
        prop_assert_eq!(value.to_bits(), again.to_bits());
    }
}
