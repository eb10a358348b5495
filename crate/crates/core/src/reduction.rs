//! Reduction of the heat-conduction equation along `d/dy + phi(y) d/dw`:
//! invariant data, the linear ODE for `E0(x)`, and its singular points.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::detsys::{DetsysError, InvariantSurfaceConditions};
use crate::jetprolong::VectorField;
use crate::symkernel::{
    canonical, diff, is_zero_with, to_ratfn, Atom, AtomId, Expr, KernelError, Poly, PrimMode, RatFn,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReductionError {
    #[error("characteristic equation not solvable by the implemented rules: {0}")]
    Unsolvable(String),
    #[error("y does not cancel from the reduced equation: {0}")]
    YSurvives(String),
    #[error("coefficient is not a polynomial in x: {0}")]
    NonPolynomial(String),
    #[error(transparent)]
    Detsys(#[from] DetsysError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Data `w(x, y)` and parameter ansatz invariant under a generator.
#[derive(Clone, Debug, Serialize)]
pub struct InvariantData {
    #[serde(serialize_with = "display")]
    pub generator: VectorField,
    #[serde(serialize_with = "display")]
    pub w: Expr,
    #[serde(serialize_with = "display")]
    pub profile: Expr,
    /// `E` depends on `x` only.
    pub e_y_zero: bool,
    /// The invariant surface condition for `w` vanishes identically.
    pub certificate: bool,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

fn rf(e: &Expr) -> Result<RatFn, KernelError> {
    to_ratfn(e, PrimMode::Opaque)
}

fn free_of(e: &Expr, names: &[&str]) -> Result<bool, KernelError> {
    Ok(rf(e)?.free_vars().iter().all(|a| match a.atom() {
        Atom::Sym(s) => !names.contains(&s.as_str()),
        _ => true,
    }))
}

/// Unspecified profile `W(x)`.
pub fn unspecified_profile() -> Expr {
    Expr::func("W", vec![Expr::sym("x")])
}

/// Invariant data for a generator `d/dy + phi(y) d/dw + psi d/dE` with
/// `phi` polynomial in `y` and `psi = 0` on the data: `w = int phi dy + W(x)`,
/// `E = E0(x)`.
pub fn invariant_data(
    generator: &VectorField,
    profile: &Expr,
) -> Result<InvariantData, ReductionError> {
    let isc = InvariantSurfaceConditions::from_field(generator)?;
    if !rf(&isc.xi)?.is_zero() {
        return Err(ReductionError::Unsolvable("x-component must vanish".into()));
    }
    if !free_of(&isc.phi, &["x", "w", "E"])? {
        return Err(ReductionError::Unsolvable(format!(
            "w-coefficient {} depends on x, w or E",
            isc.phi
        )));
    }
    let phi_rf = rf(&isc.phi)?;
    if phi_rf
        .atoms()
        .iter()
        .any(|a| !matches!(a.atom(), Atom::Sym(_)))
    {
        return Err(ReductionError::Unsolvable(format!(
            "w-coefficient {} is not polynomial in y",
            isc.phi
        )));
    }
    let y_id = AtomId::sym("y");
    let terms = canonical::collect(&phi_rf, &[y_id]).map_err(|_| {
        ReductionError::Unsolvable(format!("w-coefficient {} is not polynomial in y", isc.phi))
    })?;
    let y_rf = RatFn::atom(y_id);
    let mut integral = RatFn::zero();
    for c in terms {
        let n = c.exponents[0];
        let k = BigRational::new(BigInt::one(), BigInt::from(n + 1));
        integral = integral.add(&c.coefficient.mul(&y_rf.pow(i64::from(n) + 1)?).scale(&k));
    }
    let w = integral.to_expr() + profile.clone();
    if !free_of(profile, &["y", "w", "E"])? {
        return Err(ReductionError::Unsolvable(
            "profile must depend on x only".into(),
        ));
    }
    // psi on the ansatz E = E0(x), w as above
    let e0 = Expr::func("E0", vec![Expr::sym("x")]);
    let psi_on = crate::symkernel::substitute(
        &isc.psi,
        &crate::symkernel::Bindings::new()
            .var("w", w.clone())
            .var("E", e0),
    )?;
    let e_y_zero = rf(&psi_on)?.is_zero();
    if !e_y_zero {
        return Err(ReductionError::Unsolvable(format!(
            "E-characteristic {psi_on} is not zero"
        )));
    }
    let certificate = is_zero_with(&(diff(&w, "y") - isc.phi.clone()), PrimMode::Opaque)?;
    Ok(InvariantData {
        generator: generator.clone(),
        w,
        profile: profile.clone(),
        e_y_zero,
        certificate,
    })
}

/// `c1 E0' + c0 E0 = r` with polynomial coefficients.
#[derive(Clone, Debug, Serialize)]
pub struct ReducedODE {
    #[serde(serialize_with = "display")]
    pub c1: Expr,
    #[serde(serialize_with = "display")]
    pub c0: Expr,
    #[serde(serialize_with = "display")]
    pub r: Expr,
    /// Coefficients as produced by the substitution, before clearing
    /// denominators and fixing the sign.
    #[serde(skip)]
    pub raw: [Expr; 3],
    #[serde(skip)]
    pub poly: [UniPoly; 3],
}

/// Substitute the invariant data into the equation and read off the ODE.
pub fn reduce_to_ode(data: &InvariantData) -> Result<ReducedODE, ReductionError> {
    if !data.e_y_zero {
        return Err(ReductionError::Unsolvable("E must depend on x only".into()));
    }
    let w = &data.w;
    let (e0, e0p) = (Expr::sym("E0"), Expr::sym("E0p"));
    let wx = diff(w, "x");
    let lap = diff(&wx, "x") + diff(&diff(w, "y"), "y");
    let f = wx * e0p + e0 * lap + Expr::one();
    if !is_zero_with(&diff(&f, "y"), PrimMode::Opaque)? {
        return Err(ReductionError::YSurvives(
            crate::symkernel::canonical(&f)?.to_string(),
        ));
    }
    let f_rf = rf(&f)?;
    let (e0_id, e0p_id) = (AtomId::sym("E0"), AtomId::sym("E0p"));
    let c1 = f_rf.diff(e0p_id)?;
    let c0 = f_rf.diff(e0_id)?;
    let mut zero = std::collections::HashMap::new();
    zero.insert(e0_id, RatFn::zero());
    zero.insert(e0p_id, RatFn::zero());
    let r = f_rf.compose(&zero)?.neg();
    let raw = [c1.to_expr(), c0.to_expr(), r.to_expr()];

    // clear denominators
    let mut den: Vec<(Poly, u32)> = Vec::new();
    for c in [&c1, &c0, &r] {
        for (p, e) in c.denominator() {
            match den.iter_mut().find(|(q, _)| q == p) {
                Some((_, k)) => *k = (*k).max(*e),
                None => den.push((p.clone(), *e)),
            }
        }
    }
    let mut scale = RatFn::one();
    for (p, e) in &den {
        scale = scale.mul(&RatFn::from(p.clone()).pow(i64::from(*e))?);
    }
    let mut polys = Vec::new();
    for c in [&c1, &c0, &r] {
        polys.push(UniPoly::from_ratfn(&c.mul(&scale), "x")?);
    }
    if polys[0].leading().is_some_and(|c| c.is_negative()) {
        for p in &mut polys {
            *p = p.neg();
        }
    }
    let poly: [UniPoly; 3] = [polys[0].clone(), polys[1].clone(), polys[2].clone()];
    Ok(ReducedODE {
        c1: poly[0].to_expr(),
        c0: poly[1].to_expr(),
        r: poly[2].to_expr(),
        raw,
        poly,
    })
}

/// Dense univariate polynomial with rational coefficients, lowest degree
/// first.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct UniPoly {
    pub var: String,
    pub coeffs: Vec<BigRational>,
}

impl UniPoly {
    pub fn new(var: &str, coeffs: Vec<BigRational>) -> Self {
        let mut p = UniPoly {
            var: var.to_string(),
            coeffs,
        };
        p.trim();
        p
    }

    pub fn from_ints(var: &str, coeffs: &[i64]) -> Self {
        UniPoly::new(
            var,
            coeffs
                .iter()
                .map(|&c| BigRational::from_integer(c.into()))
                .collect(),
        )
    }

    fn trim(&mut self) {
        while self.coeffs.last().is_some_and(Zero::is_zero) {
            self.coeffs.pop();
        }
    }

    pub fn from_ratfn(r: &RatFn, var: &str) -> Result<Self, ReductionError> {
        if !r.is_polynomial() {
            return Err(ReductionError::NonPolynomial(r.to_expr().to_string()));
        }
        let v = AtomId::sym(var);
        let mut coeffs: Vec<BigRational> = Vec::new();
        for (m, c) in r.numerator().terms() {
            let e = match m.factors() {
                [] => 0,
                [(a, e)] if *a == v => *e as usize,
                _ => return Err(ReductionError::NonPolynomial(r.to_expr().to_string())),
            };
            if coeffs.len() <= e {
                coeffs.resize(e + 1, BigRational::zero());
            }
            coeffs[e] += c;
        }
        Ok(UniPoly::new(var, coeffs))
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn leading(&self) -> Option<&BigRational> {
        self.coeffs.last()
    }

    pub fn neg(&self) -> UniPoly {
        UniPoly::new(&self.var, self.coeffs.iter().map(|c| -c).collect())
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        self.coeffs
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, c| acc * x + c)
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x + c.to_f64().unwrap_or(f64::NAN))
    }

    pub fn derivative(&self) -> UniPoly {
        UniPoly::new(
            &self.var,
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * BigRational::from_integer(BigInt::from(i)))
                .collect(),
        )
    }

    /// Quotient by `(x - root)`, assuming `root` is a root.
    fn deflate(&self, root: &BigRational) -> UniPoly {
        let n = self.coeffs.len();
        let mut q = vec![BigRational::zero(); n.saturating_sub(1)];
        let mut carry = BigRational::zero();
        for i in (1..n).rev() {
            carry = &self.coeffs[i] + carry * root;
            q[i - 1] = carry.clone();
        }
        UniPoly::new(&self.var, q)
    }

    pub fn to_expr(&self) -> Expr {
        let x = Expr::sym(&self.var);
        let terms: Vec<Expr> = self
            .coeffs
            .iter()
            .enumerate()
            .rev()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| {
                Expr::product(vec![
                    Expr::constant(c.clone()),
                    Expr::pow(x.clone(), i as i64),
                ])
            })
            .collect();
        crate::symkernel::canonical(&Expr::sum(terms)).unwrap_or_else(|_| Expr::zero())
    }

    /// Rational roots with multiplicity removed, and the remaining factor.
    pub fn rational_roots(&self) -> (Vec<BigRational>, UniPoly) {
        let mut roots = Vec::new();
        let mut p = self.clone();
        // integer coefficients
        let lcm = p.coeffs.iter().fold(BigInt::one(), |acc, c| {
            num_integer::Integer::lcm(&acc, c.denom())
        });
        let mut ints: Vec<BigInt> = p
            .coeffs
            .iter()
            .map(|c| (c * BigRational::from_integer(lcm.clone())).to_integer())
            .collect();
        while ints.first().is_some_and(Zero::is_zero) {
            if !roots.contains(&BigRational::zero()) {
                roots.push(BigRational::zero());
            }
            ints.remove(0);
            p = p.deflate(&BigRational::zero());
        }
        let (Some(a0), Some(an)) = (ints.first().cloned(), ints.last().cloned()) else {
            return (roots, p);
        };
        let bound = BigInt::from(1_000_000);
        if a0.abs() > bound || an.abs() > bound {
            return (roots, p);
        }
        let divisors = |n: &BigInt| -> Vec<BigInt> {
            let n = n.abs().to_i64().unwrap_or(1);
            (1..=n).filter(|d| n % d == 0).map(BigInt::from).collect()
        };
        let mut candidates = Vec::new();
        for num in divisors(&a0) {
            for den in divisors(&an) {
                let c = BigRational::new(num.clone(), den.clone());
                candidates.push(c.clone());
                candidates.push(-c);
            }
        }
        candidates.sort();
        candidates.dedup();
        for c in candidates {
            while p.degree().unwrap_or(0) > 0 && p.eval(&c).is_zero() {
                if !roots.contains(&c) {
                    roots.push(c.clone());
                }
                p = p.deflate(&c);
            }
        }
        roots.sort();
        (roots, p)
    }
}

/// A real root of the leading coefficient.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularPoint {
    pub value: f64,
    /// Exact form in the expression grammar, when available.
    pub exact: Option<String>,
}

fn rational_string(c: &BigRational) -> String {
    if c.is_integer() {
        c.to_integer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

/// Roots of `a x^2 + b x + c` as `p +- q sqrt(d)` with `d` squarefree.
fn quadratic_roots(p: &UniPoly) -> Vec<(f64, String)> {
    let [c, b, a] = [&p.coeffs[0], &p.coeffs[1], &p.coeffs[2]];
    let disc = b * b - BigRational::from_integer(4.into()) * a * c;
    if disc.is_negative() {
        return Vec::new();
    }
    // sqrt(disc) = sqrt(n/d) = sqrt(n d)/d ; pull square factors out of n d
    let nd = disc.numer() * disc.denom();
    let (mut outside, mut inside) = (BigInt::one(), nd.clone());
    let mut f = BigInt::from(2);
    while &f * &f <= inside {
        while (&inside % (&f * &f)).is_zero() {
            inside /= &f * &f;
            outside *= &f;
        }
        f += 1;
    }
    let two_a = BigRational::from_integer(2.into()) * a;
    let center = -b / &two_a;
    let q = BigRational::new(outside, disc.denom().clone()) / &two_a;
    let qa = q.abs();
    let d = inside.to_f64().unwrap_or(f64::NAN);
    let mut out = Vec::new();
    for sign in [-1.0, 1.0] {
        let value =
            center.to_f64().unwrap_or(f64::NAN) + sign * qa.to_f64().unwrap_or(f64::NAN) * d.sqrt();
        let op = if sign < 0.0 { "-" } else { "+" };
        let exact = if inside == BigInt::one() {
            let v = if sign < 0.0 {
                &center - &qa
            } else {
                &center + &qa
            };
            rational_string(&v)
        } else {
            let coef = if qa.is_one() {
                String::new()
            } else {
                format!("{}*", rational_string(&qa))
            };
            if center.is_zero() {
                format!("{}{coef}sqrt({inside})", if sign < 0.0 { "-" } else { "" })
            } else {
                format!("{} {op} {coef}sqrt({inside})", rational_string(&center))
            }
        };
        out.push((value, exact));
    }
    out
}

fn bisect(p: &UniPoly, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = p.eval_f64(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = p.eval_f64(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Real roots of `c1` in `[a, b]`: exact rational and quadratic roots,
/// plus sign changes on a dense grid refined by bisection.
pub fn singular_points(ode: &ReducedODE, interval: (f64, f64)) -> Vec<SingularPoint> {
    polynomial_roots(&ode.poly[0], interval)
}

pub fn polynomial_roots(c1: &UniPoly, interval: (f64, f64)) -> Vec<SingularPoint> {
    let (a, b) = interval;
    let inside = |v: f64| v >= a - 1e-15 && v <= b + 1e-15;
    let mut found: Vec<SingularPoint> = Vec::new();
    let push = |value: f64, exact: Option<String>, found: &mut Vec<SingularPoint>| {
        if let Some(s) = found.iter_mut().find(|s| (s.value - value).abs() < 1e-9) {
            if s.exact.is_none() {
                s.exact = exact;
                s.value = value;
            }
        } else {
            found.push(SingularPoint { value, exact });
        }
    };
    if c1.degree().unwrap_or(0) == 0 {
        return found;
    }
    let (rational, rest) = c1.rational_roots();
    for r in &rational {
        let v = r.to_f64().unwrap_or(f64::NAN);
        if inside(v) {
            push(v, Some(rational_string(r)), &mut found);
        }
    }
    if rest.degree() == Some(2) {
        for (v, e) in quadratic_roots(&rest) {
            if inside(v) {
                push(v, Some(e), &mut found);
            }
        }
    }
    let n = 4096;
    let h = (b - a) / n as f64;
    let mut x0 = a;
    let mut f0 = c1.eval_f64(x0);
    for i in 1..=n {
        let x1 = if i == n { b } else { a + h * i as f64 };
        let f1 = c1.eval_f64(x1);
        if f0 == 0.0 {
            push(x0, None, &mut found);
        } else if f1 != 0.0 && (f0 < 0.0) != (f1 < 0.0) {
            push(bisect(c1, x0, x1), None, &mut found);
        }
        x0 = x1;
        f0 = f1;
    }
    if f0 == 0.0 {
        push(x0, None, &mut found);
    }
    found.sort_by(|p, q| p.value.total_cmp(&q.value));
    found
}

/// The generator `d/dy - 2 y d/dw`.
pub fn quadratic_generator() -> VectorField {
    VectorField::new(
        Expr::zero(),
        Expr::one(),
        Expr::product(vec![Expr::int(-2), Expr::sym("y")]),
        Expr::zero(),
    )
}

/// Profile `W` for `w = -y^2 + W(x)` reduced along `d/dy - 2 y d/dw`.
pub fn reduce_profile(profile: &Expr) -> Result<ReducedODE, ReductionError> {
    reduce_to_ode(&invariant_data(&quadratic_generator(), profile)?)
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use proptest::prelude::*;

    use super::*;
    use crate::symkernel::{eval_numeric, is_zero, parse};

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn same(a: &Expr, b: &str) -> bool {
        is_zero(&(a.clone() - p(b))).unwrap()
    }

    #[test]
    fn invariant_data_examples() {
        let w = unspecified_profile();
        let d = invariant_data(&quadratic_generator(), &w).unwrap();
        assert!(same(&d.w, "-y^2 + W(x)"));
        assert!(d.certificate && d.e_y_zero);
        let d = invariant_data(&VectorField::new(p("0"), p("1"), p("0"), p("0")), &w).unwrap();
        assert!(same(&d.w, "W(x)"));
        let d = invariant_data(&VectorField::new(p("0"), p("1"), p("-2"), p("0")), &w).unwrap();
        assert!(same(&d.w, "-2*y + W(x)"));
        let bad = VectorField::new(p("0"), p("1"), p("w^2"), p("-2*w*E"));
        assert!(matches!(
            invariant_data(&bad, &w),
            Err(ReductionError::Unsolvable(_))
        ));
    }

    #[test]
    fn reduced_odes_of_the_examples() {
        let cases = [
            ("(x^2-1)*(x-3)", "3*x^2 - 6*x - 1", "6*x - 8", "-1"),
            ("(x-3)*(1-x)/x^2", "4*x^2 - 6*x", "2*x^4 - 8*x + 18", "x^4"),
            ("1 - x^4", "4*x^3", "12*x^2 + 2", "1"),
            ("2 + x^2 - 8*x^4", "32*x^3 - 2*x", "96*x^2", "1"),
            ("x", "1", "-2", "-1"),
        ];
        for (w, c1, c0, r) in cases {
            let ode = reduce_profile(&p(w)).unwrap();
            assert!(same(&ode.c1, c1), "{w}: c1 = {}", ode.c1);
            assert!(same(&ode.c0, c0), "{w}: c0 = {}", ode.c0);
            assert!(same(&ode.r, r), "{w}: r = {}", ode.r);
        }
    }

    #[test]
    fn generic_profile() {
        let ode =
            reduce_to_ode(&invariant_data(&quadratic_generator(), &unspecified_profile()).unwrap());
        // coefficients of an unspecified W are not polynomial in x
        assert!(matches!(ode, Err(ReductionError::NonPolynomial(_))));
    }

    #[test]
    fn singular_points_of_the_examples() {
        let s = singular_points(&reduce_profile(&p("(x^2-1)*(x-3)")).unwrap(), (-1.0, 1.0));
        assert_eq!(s.len(), 1);
        assert!((s[0].value - (1.0 - 2.0 / 3f64.sqrt())).abs() < 1e-12);
        assert_eq!(s[0].exact.as_deref(), Some("1 - 2/3*sqrt(3)"));
        let s = singular_points(&reduce_profile(&p("(x-3)*(1-x)/x^2")).unwrap(), (1.0, 3.0));
        assert_eq!(s.iter().map(|s| s.value).collect::<Vec<_>>(), vec![1.5]);
        let s = singular_points(&reduce_profile(&p("1 - x^4")).unwrap(), (-1.0, 1.0));
        assert_eq!(s.iter().map(|s| s.value).collect::<Vec<_>>(), vec![0.0]);
        let a = (1.0 + 65f64.sqrt()).sqrt() / 4.0;
        let s = singular_points(&reduce_profile(&p("2 + x^2 - 8*x^4")).unwrap(), (-a, a));
        let exact: Vec<_> = s.iter().map(|s| s.exact.clone().unwrap()).collect();
        assert_eq!(exact, vec!["-1/4", "0", "1/4"]);
    }

    #[test]
    fn even_multiplicity_roots_are_found() {
        let c1 = UniPoly::from_ints("x", &[1, -2, 1]); // (x-1)^2
        let s = polynomial_roots(&c1, (0.0, 2.0));
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].exact.as_deref(), Some("1"));
        let c1 = UniPoly::from_ints("x", &[-2, 0, 1]);
        let s = polynomial_roots(&c1, (-2.0, 2.0));
        let exact: Vec<_> = s.iter().map(|s| s.exact.clone().unwrap()).collect();
        assert_eq!(exact, vec!["-sqrt(2)", "sqrt(2)"]);
    }

    fn random_poly() -> impl Strategy<Value = Vec<i64>> {
        prop::collection::vec(-5i64..=5, 1..=7)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn raw_coefficients_follow_the_profile(coeffs in random_poly()) {
            let w = UniPoly::from_ints("x", &coeffs).to_expr();
            let ode = reduce_profile(&w);
            let wp = diff(&w, "x");
            if wp.is_const_zero() || is_zero(&wp).unwrap() {
                // c1 = 0 is still a valid reduction
                prop_assume!(false);
            }
            let ode = ode.unwrap();
            prop_assert!(same(&ode.raw[0], &wp.to_string()));
            prop_assert!(is_zero(&(ode.raw[1].clone() - diff(&wp, "x") + Expr::int(2))).unwrap());
            prop_assert!(same(&ode.raw[2], "-1"));
        }

        #[test]
        fn reduction_is_exact_numerically(coeffs in random_poly(), x in -2.0f64..2.0, y in -2.0f64..2.0, e0 in -3.0f64..3.0, e0p in -3.0f64..3.0) {
            let w = UniPoly::from_ints("x", &coeffs).to_expr();
            prop_assume!(!is_zero(&diff(&w, "x")).unwrap());
            let ode = reduce_profile(&w).unwrap();
            let data = Expr::product(vec![Expr::int(-1), p("y^2")]) + w;
            let wx = diff(&data, "x");
            let f = wx.clone() * p("E0p") + p("E0") * (diff(&wx, "x") + diff(&diff(&data, "y"), "y")) + Expr::one();
            let vars: HashMap<String, f64> = [("x", x), ("y", y), ("E0", e0), ("E0p", e0p)]
                .into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            let lhs = eval_numeric(&f, &vars).unwrap();
            let rhs = eval_numeric(&(ode.raw[0].clone() * p("E0p") + ode.raw[1].clone() * p("E0") - ode.raw[2].clone()), &vars).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
