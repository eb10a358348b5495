//! Randomized invariants of the kernel and the prolongation machinery,
//! shared by the property tests and the acceptance report.
#![allow(dead_code)]

use std::collections::HashMap;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use symred::jetprolong::{lie_bracket, prolong, total_derivative, JetContext, VectorField};
use symred::symkernel::{eval_numeric, is_zero, is_zero_with, parse, Expr, PrimMode, Primitive};

pub const CASES: u32 = 100;

static BASE_NAMES: [&str; 4] = ["x", "y", "w", "E"];
static JET_NAMES: [&str; 8] = ["x", "y", "w", "E", "w_x", "w_y", "E_x", "E_y"];

fn leaf(names: &'static [&'static str]) -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-4i64..=4).prop_map(Expr::int),
        ((-4i64..=4), (1i64..=3)).prop_map(|(n, d)| Expr::rational(n, d)),
        prop::sample::select(names).prop_map(|n| parse(n).unwrap()),
    ]
}

/// Polynomial in the given names, built from sums, products and powers.
fn poly(names: &'static [&'static str]) -> impl Strategy<Value = Expr> {
    leaf(names).prop_recursive(3, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Expr::sum),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Expr::product),
            (inner, 0i64..=2).prop_map(|(b, n)| Expr::pow(b, n)),
        ]
    })
}

/// Rational expression with functions, derivatives, jets and primitives.
fn general() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-5i64..=5).prop_map(Expr::int),
        ((-5i64..=5), (1i64..=4)).prop_map(|(n, d)| Expr::rational(n, d)),
        prop::sample::select(&JET_NAMES[..]).prop_map(|n| parse(n).unwrap()),
        Just(parse("f(x, y)").unwrap()),
        Just(parse("D(f, x, y, 1, 0)").unwrap()),
    ];
    leaf.prop_recursive(4, 32, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Expr::sum),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Expr::product),
            (inner.clone(), -2i64..=3).prop_map(|(b, n)| Expr::pow(b, n)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::quot(a, b)),
            inner.clone().prop_map(|a| -a),
            (prop::sample::select(&Primitive::ALL[..]), inner).prop_map(|(p, a)| Expr::prim(p, a)),
        ]
    })
}

fn field() -> impl Strategy<Value = VectorField> {
    prop::collection::vec(poly(&BASE_NAMES), 4)
        .prop_map(|c| VectorField::new(c[0].clone(), c[1].clone(), c[2].clone(), c[3].clone()))
}

fn point(values: &[f64]) -> HashMap<String, f64> {
    JET_NAMES
        .iter()
        .zip(values)
        .map(|(k, v)| (k.to_string(), *v))
        .collect()
}

fn zero(e: &Expr) -> bool {
    is_zero_with(e, PrimMode::Opaque).unwrap()
}

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(what()))
    }
}

fn run<S: Strategy>(
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        failure_persistence: None,
        ..Config::with_cases(CASES)
    };
    let mut runner = TestRunner::new(config);
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

/// `D(fg) = D(f) g + f D(g)` for both total derivatives.
pub fn leibniz() -> Result<(), String> {
    let ctx = JetContext::heat();
    run(
        (
            poly(&JET_NAMES),
            poly(&JET_NAMES),
            prop::sample::select(&["x", "y"][..]),
        ),
        |(f, g, v)| {
            let d = |e: &Expr| total_derivative(e, v, &ctx).unwrap();
            let lhs = d(&(f.clone() * g.clone()));
            let rhs = d(&f) * g.clone() + f.clone() * d(&g);
            check(zero(&(lhs - rhs)), || format!("{f} * {g} along {v}"))
        },
    )
}

/// `D_x D_y f = D_y D_x f`.
pub fn commutation() -> Result<(), String> {
    let ctx = JetContext::heat().with_max_order(3);
    run(poly(&JET_NAMES), |f| {
        let dx = |e: &Expr| total_derivative(e, "x", &ctx).unwrap();
        let dy = |e: &Expr| total_derivative(e, "y", &ctx).unwrap();
        check(zero(&(dx(&dy(&f)) - dy(&dx(&f)))), || f.to_string())
    })
}

/// The prolongation of `a V1 + b V2` is `a pr V1 + b pr V2`.
pub fn linearity() -> Result<(), String> {
    let ctx = JetContext::heat();
    run(
        (field(), field(), -3i64..=3, -3i64..=3),
        |(v1, v2, a, b)| {
            let combo = v1.scale(&Expr::int(a)).add(&v2.scale(&Expr::int(b)));
            let p = prolong(&combo, 2, &ctx).unwrap();
            let p1 = prolong(&v1, 2, &ctx).unwrap();
            let p2 = prolong(&v2, 2, &ctx).unwrap();
            for j in p.jets() {
                let expect = Expr::int(a) * p1.coefficient(j).unwrap()
                    + Expr::int(b) * p2.coefficient(j).unwrap();
                check(zero(&(p.coefficient(j).unwrap() - expect)), || {
                    format!("jet {j:?}")
                })?;
            }
            Ok(())
        },
    )
}

/// Jacobi identity and antisymmetry of the bracket.
pub fn jacobi() -> Result<(), String> {
    let ctx = JetContext::heat();
    let none = VectorField::zero(&ctx);
    run((field(), field(), field()), |(v1, v2, v3)| {
        let br = |a: &VectorField, b: &VectorField| lie_bracket(a, b, &ctx).unwrap();
        let sum = br(&br(&v1, &v2), &v3)
            .add(&br(&br(&v2, &v3), &v1))
            .add(&br(&br(&v3, &v1), &v2));
        check(sum.equivalent(&none, &ctx).unwrap(), || {
            format!("jacobi: {v1} / {v2} / {v3}")
        })?;
        let anti = br(&v1, &v2).add(&br(&v2, &v1));
        check(anti.equivalent(&none, &ctx).unwrap(), || {
            format!("antisymmetry: {v1} / {v2}")
        })
    })
}

/// Printing then parsing gives the same text and an equal expression.
pub fn round_trip() -> Result<(), String> {
    run(general(), |e| {
        // trees that divide by an identically zero subterm have no value
        if is_zero_with(&e, PrimMode::Opaque).is_err() {
            return Err(TestCaseError::reject("division by zero"));
        }
        let printed = e.to_string();
        let back = parse(&printed).map_err(|err| TestCaseError::fail(format!("{printed}: {err}")))?;
        check(back.to_string() == printed, || format!("{printed} reprinted as {back}"))?;
        check(zero(&(back - e)), || printed.clone())
    })
}

/// The exact zero test agrees with evaluation at random points.
pub fn zero_test() -> Result<(), String> {
    let values = prop::collection::vec(prop::collection::vec(-2.0f64..2.0, JET_NAMES.len()), 5);
    run(
        (poly(&JET_NAMES), poly(&JET_NAMES), poly(&JET_NAMES), values),
        |(p, q, r, xs)| {
            // q^2 + 1 never vanishes, so the identity holds everywhere
            let den = q.clone() * q.clone() + Expr::one();
            let lhs = p.clone() / den.clone() + r.clone();
            let rhs = (p.clone() + r.clone() * den.clone()) / den;
            let diff = lhs - rhs;
            check(is_zero(&diff).unwrap(), || diff.to_string())?;
            for v in &xs {
                let at = point(v);
                let val = eval_numeric(&diff, &at).unwrap();
                let scale = 1.0
                    + eval_numeric(&p, &at).unwrap().abs()
                    + 10.0 * eval_numeric(&r, &at).unwrap().abs();
                check(val.abs() < 1e-9 * scale, || {
                    format!("{diff} = {val} at {v:?}")
                })?;
            }
            // a polynomial reported nonzero is nonzero at some random point
            let claimed = is_zero(&p).unwrap();
            let numeric = xs
                .iter()
                .all(|v| eval_numeric(&p, &point(v)).unwrap().abs() < 1e-12);
            check(claimed == numeric, || {
                format!("{p}: exact {claimed}, numeric {numeric}")
            })
        },
    )
}

pub type Suite = fn() -> Result<(), String>;

pub const SUITES: [(&str, Suite); 6] = [
    ("leibniz", leibniz),
    ("commutation", commutation),
    ("prolongation linearity", linearity),
    ("bracket jacobi", jacobi),
    ("parser round-trip", round_trip),
    ("zero-test corroboration", zero_test),
];
