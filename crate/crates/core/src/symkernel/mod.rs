//! Exact symbolic kernel: expression trees, parsing and printing,
//! differentiation, substitution, canonical rational forms, zero testing,
//! coefficient collection and numeric evaluation.

pub mod canonical;
mod diff;
mod eval;
mod expr;
mod parse;
mod subst;

use thiserror::Error;

pub use canonical::{to_ratfn, Atom, AtomId, Collected, Monomial, Poly, PrimMode, RatFn, RatFnSum};
pub use diff::{diff, Var};
pub use eval::eval_numeric;
pub use expr::{Expr, FuncApp, JetCoord, Node, Primitive};
pub use parse::{parse, parse_with, Declarations, FunctionDecl, ParseError};
pub use subst::{substitute, Bindings, DerivativeRule, Substitution};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("primitive {0} is not allowed in strict mode")]
    UnsupportedPrimitive(&'static str),
    #[error("exponent {0} is out of range")]
    ExponentTooLarge(i64),
    #[error("expression is not polynomial in {0}")]
    NonPolynomial(String),
    #[error("cyclic binding through {0}")]
    CyclicBinding(String),
    #[error("invalid binding: {0}")]
    InvalidBinding(String),
    #[error("unbound indeterminate {0}")]
    Unbound(String),
    #[error("numeric singularity in {0}")]
    NumericSingularity(String),
}

/// Zero test with primitives rejected.
pub fn is_zero(e: &Expr) -> Result<bool, KernelError> {
    is_zero_with(e, PrimMode::Strict)
}

pub fn is_zero_with(e: &Expr, mode: PrimMode) -> Result<bool, KernelError> {
    Ok(to_ratfn(e, mode)?.is_zero())
}

/// Canonical rendering: expanded numerator over a factored denominator.
pub fn canonical(e: &Expr) -> Result<Expr, KernelError> {
    Ok(to_ratfn(e, PrimMode::Opaque)?.to_expr())
}

fn var_atom(v: &Var) -> AtomId {
    match v {
        Var::Sym(s) => AtomId::sym(s),
        Var::Jet(j) => AtomId::jet(j),
    }
}

/// Coefficients of `e` by monomials in `vars`, graded lexicographic in the
/// order the variables are given.
pub fn collect(e: &Expr, vars: &[Var]) -> Result<Vec<(Expr, Expr)>, KernelError> {
    let ids: Vec<AtomId> = vars.iter().map(var_atom).collect();
    let r = to_ratfn(e, PrimMode::Opaque)?;
    Ok(canonical::collect(&r, &ids)?
        .into_iter()
        .map(|c| {
            (
                canonical::monomial_expr(&ids, &c.exponents),
                c.coefficient.to_expr(),
            )
        })
        .collect())
}

pub fn atom_of(v: &Var) -> AtomId {
    var_atom(v)
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn same(a: &Expr, b: &Expr) -> bool {
        is_zero_with(&(a.clone() - b.clone()), PrimMode::Opaque).unwrap()
    }

    #[test]
    fn zero_test_examples() {
        assert!(is_zero(&p("(x+y)^2 - x^2 - 2*x*y - y^2")).unwrap());
        assert!(is_zero(&p("w_x*E_x - E_x*w_x")).unwrap());
        assert!(is_zero(&p("1/(x+1) + 1/(x-1) - 2*x/(x^2-1)")).unwrap());
        assert!(!is_zero(&p("1/(x+1) - 1/(x-1)")).unwrap());
        assert_eq!(
            is_zero(&p("sqrt(x) - sqrt(x)")),
            Err(KernelError::UnsupportedPrimitive("sqrt"))
        );
        assert!(is_zero_with(&p("sqrt(x) - sqrt(x)"), PrimMode::Opaque).unwrap());
    }

    #[test]
    fn diff_examples() {
        assert!(same(&diff(&p("x^2"), "x"), &p("2*x")));
        assert_eq!(
            diff(&p("mu(w)"), "w"),
            Expr::func_deriv("mu", vec![Expr::sym("w")], vec![1])
        );
        let d = diff(&p("arctan(a/b)"), "a");
        assert!(is_zero(&(d - p("b/(a^2+b^2)"))).unwrap());
        assert!(same(&diff(&p("w_x*E"), "w_x"), &p("E")));
    }

    #[test]
    fn arctan_derivative_matches_finite_difference() {
        let e = p("arctan(a/b)");
        let d = diff(&e, "a");
        let at = |a: f64| {
            let pt = HashMap::from([("a".to_string(), a), ("b".to_string(), 2.0)]);
            eval_numeric(&e, &pt).unwrap()
        };
        let h = 1e-5;
        let fd = (at(0.5 + h) - at(0.5 - h)) / (2.0 * h);
        let pt = HashMap::from([("a".to_string(), 0.5), ("b".to_string(), 2.0)]);
        assert!((eval_numeric(&d, &pt).unwrap() - fd).abs() < 1e-9);
    }

    #[test]
    fn substitution_examples() {
        let b = Bindings::new().jet("w", "y", p("phi - xi*w_x"));
        assert_eq!(
            substitute(&p("w_y"), &b).unwrap(),
            canonical(&p("phi - xi*w_x")).unwrap()
        );

        let b = Bindings::new().function("mu", &["t"], p("t^2"));
        let d = Expr::func_deriv("mu", vec![Expr::sym("w")], vec![1]);
        assert!(same(&substitute(&d, &b).unwrap(), &p("2*w")));

        let xi = p("xi(x,y,w)");
        let xi_w = diff(&xi, "w");
        let b = Bindings::new().function("xi", &["x", "y", "w"], p("A(x,y)"));
        assert!(is_zero(&substitute(&xi_w, &b).unwrap()).unwrap());

        let b = Bindings::new().function("xi", &["x", "y", "w"], p("w"));
        assert!(!is_zero(&substitute(&xi_w, &b).unwrap()).unwrap());
    }

    #[test]
    fn substitution_is_simultaneous() {
        let b = Bindings::new().var("x", p("y")).var("z", p("x"));
        assert!(same(&substitute(&p("x + z"), &b).unwrap(), &p("y + x")));
    }

    #[test]
    fn cycles_are_rejected() {
        let b = Bindings::new().var("x", p("y + 1")).var("y", p("x"));
        assert!(matches!(
            substitute(&p("x"), &b),
            Err(KernelError::CyclicBinding(_))
        ));
        let b = Bindings::new().function("f", &["t"], p("f(t) + 1"));
        assert!(matches!(
            substitute(&p("f(x)"), &b),
            Err(KernelError::CyclicBinding(_))
        ));
    }

    #[test]
    fn function_binding_through_composite_argument() {
        let b = Bindings::new().function("mu", &["t"], p("t^3"));
        let e = diff(&p("mu(x*y)"), "x");
        assert!(same(&substitute(&e, &b).unwrap(), &p("3*x^2*y^3")));
    }

    #[test]
    fn derivative_rule_for_implicit_function() {
        // B defined by y - x*B = 0, so B = y/x.
        let rule_x = DerivativeRule {
            function: "B".into(),
            params: vec!["x".into(), "y".into()],
            trigger: vec![1, 0],
            rhs: p("-B(x,y)/x"),
        };
        let rule_y = DerivativeRule {
            function: "B".into(),
            params: vec!["x".into(), "y".into()],
            trigger: vec![0, 1],
            rhs: p("1/x"),
        };
        let b = Bindings::new().rule(rule_x).rule(rule_y);
        let bxy = diff(&diff(&p("B(x,y)"), "x"), "y");
        let r = substitute(&bxy, &b).unwrap();
        assert!(same(&r, &p("-1/x^2")));
        let bxx = diff(&diff(&p("B(x,y)"), "x"), "x");
        let r = substitute(&bxx, &b).unwrap();
        assert!(same(&r, &p("2*B(x,y)/x^2")));
    }

    #[test]
    fn collect_examples() {
        let vars = [Var::parse("w_x"), Var::parse("E_x")];
        let c = collect(&p("a*w_x^2 + b*w_x*E_x + c"), &vars).unwrap();
        let rendered: Vec<(String, String)> = c
            .iter()
            .map(|(m, k)| (m.to_string(), k.to_string()))
            .collect();
        assert_eq!(
            rendered,
            vec![
                ("w_x^2".to_string(), "a".to_string()),
                ("w_x*E_x".to_string(), "b".to_string()),
                ("1".to_string(), "c".to_string()),
            ]
        );
        assert!(collect(&Expr::zero(), &vars[..1]).unwrap().is_empty());
        assert!(matches!(
            collect(&p("1/w_x"), &vars),
            Err(KernelError::NonPolynomial(_))
        ));
        assert!(matches!(
            collect(&p("mu(w_x)"), &vars),
            Err(KernelError::NonPolynomial(_))
        ));
    }

    #[test]
    fn eval_examples() {
        let x0 = 1.0 - 2.0 / 3f64.sqrt();
        let pt = HashMap::from([("x".to_string(), x0)]);
        assert!(eval_numeric(&p("3*x^2 - 6*x - 1"), &pt).unwrap().abs() < 1e-12);
        assert!(
            (eval_numeric(&p("erf(1/2)"), &HashMap::new()).unwrap() - 0.520_499_877_813).abs()
                < 1e-12
        );
        assert!(matches!(
            eval_numeric(&p("1/(x-x)"), &pt),
            Err(KernelError::NumericSingularity(_))
        ));
        assert!(matches!(
            eval_numeric(&p("y"), &pt),
            Err(KernelError::Unbound(_))
        ));
    }

    #[test]
    fn canonical_is_deterministic() {
        let a = canonical(&p("(y+x)^2")).unwrap().to_string();
        let b = canonical(&p("y^2 + 2*y*x + x^2")).unwrap().to_string();
        assert_eq!(a, b);
        assert_eq!(a, "x^2 + 2*x*y + y^2");
    }
}
