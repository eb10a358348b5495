//! Jet-space bookkeeping: total derivatives, prolongation of vector fields
//! in characteristic form, and Lie brackets.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::symkernel::{
    to_ratfn, Atom, AtomId, Expr, JetCoord, KernelError, PrimMode, RatFn, RatFnSum,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JetError {
    #[error("jet coordinate {jet} exceeds the maximum order {max}")]
    OrderOverflow { jet: String, max: usize },
    #[error("{0} is not a variable of the jet context")]
    UnknownVariable(String),
    #[error("vector field coefficient depends on jet coordinate {0}")]
    JetInCoefficient(String),
    #[error("prolongation order {order} exceeds the context maximum {max}")]
    OrderTooHigh { order: usize, max: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn jet_name(j: &JetCoord) -> String {
    format!("{}_{}", j.dep, j.derivs)
}

/// Independent and dependent variables with a bound on jet order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JetContext {
    pub independent: Vec<String>,
    pub dependent: Vec<String>,
    pub max_order: usize,
}

impl JetContext {
    pub fn new(independent: &[&str], dependent: &[&str], max_order: usize) -> Self {
        JetContext {
            independent: independent.iter().map(|s| s.to_string()).collect(),
            dependent: dependent.iter().map(|s| s.to_string()).collect(),
            max_order,
        }
    }

    /// Independent `x, y`; dependent `w, E`; second order.
    pub fn heat() -> Self {
        JetContext::new(&["x", "y"], &["w", "E"], 2)
    }

    pub fn with_max_order(&self, max_order: usize) -> Self {
        JetContext {
            max_order,
            ..self.clone()
        }
    }

    /// Live jet coordinates of order 1..=max, by dependent variable, then
    /// order, then index.
    pub fn jets(&self) -> Vec<JetCoord> {
        let mut out = Vec::new();
        for u in &self.dependent {
            let mut level: Vec<String> = vec![String::new()];
            for _ in 0..self.max_order {
                let mut next = Vec::new();
                for j in &level {
                    let last = j.chars().last();
                    for v in &self.independent {
                        let c = v.chars().next().unwrap();
                        // non-decreasing index words give each multiset once
                        let pos = |ch: char| {
                            self.independent
                                .iter()
                                .position(|s| s.starts_with(ch))
                                .unwrap()
                        };
                        if last.is_none_or(|l| pos(l) <= pos(c)) {
                            next.push(format!("{j}{c}"));
                        }
                    }
                }
                out.extend(next.iter().map(|d| JetCoord::new(u, d)));
                level = next;
            }
        }
        out
    }

    fn check_jet(&self, j: &JetCoord) -> Result<(), JetError> {
        if !self.dependent.contains(&j.dep) {
            return Err(JetError::UnknownVariable(jet_name(j)));
        }
        if j.order() > self.max_order {
            return Err(JetError::OrderOverflow {
                jet: jet_name(j),
                max: self.max_order,
            });
        }
        Ok(())
    }

    fn check_independent(&self, v: &str) -> Result<(), JetError> {
        if self.independent.iter().any(|s| s == v) {
            Ok(())
        } else {
            Err(JetError::UnknownVariable(v.to_string()))
        }
    }
}

/// Total derivative `D_v`.
pub fn total_derivative(e: &Expr, v: &str, ctx: &JetContext) -> Result<Expr, JetError> {
    Ok(total_derivative_rf(&to_ratfn(e, PrimMode::Opaque)?, v, ctx)?.to_expr())
}

pub fn total_derivative_rf(r: &RatFn, v: &str, ctx: &JetContext) -> Result<RatFn, JetError> {
    ctx.check_independent(v)?;
    let mut acc = RatFnSum::new();
    for a in r.free_vars() {
        let next = match a.atom() {
            Atom::Sym(s) if s == v => RatFn::one(),
            Atom::Sym(s) if ctx.dependent.contains(&s) => {
                let j = JetCoord::new(&s, v);
                ctx.check_jet(&j)?;
                RatFn::atom(AtomId::jet(&j))
            }
            Atom::Jet(j) => {
                let k = j.extend(v);
                ctx.check_jet(&k)?;
                RatFn::atom(AtomId::jet(&k))
            }
            _ => continue,
        };
        let d = r.diff(a)?;
        if !d.is_zero() {
            acc.push(d.mul(&next));
        }
    }
    Ok(acc.finish())
}

/// `sum xi^i d/dx^i + sum phi^u d/du` with coefficients in the base space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VectorField {
    /// Coefficients of the independent-variable directions.
    pub xi: Vec<Expr>,
    /// Coefficients of the dependent-variable directions.
    pub phi: Vec<Expr>,
}

impl VectorField {
    /// Field `a d/dx + b d/dy + c d/dw + d d/dE`.
    pub fn new(a: Expr, b: Expr, c: Expr, d: Expr) -> Self {
        VectorField {
            xi: vec![a, b],
            phi: vec![c, d],
        }
    }

    pub fn zero(ctx: &JetContext) -> Self {
        VectorField {
            xi: vec![Expr::zero(); ctx.independent.len()],
            phi: vec![Expr::zero(); ctx.dependent.len()],
        }
    }

    pub fn coefficients(&self) -> impl Iterator<Item = &Expr> {
        self.xi.iter().chain(self.phi.iter())
    }

    pub fn map(&self, f: impl Fn(&Expr) -> Expr) -> VectorField {
        VectorField {
            xi: self.xi.iter().map(&f).collect(),
            phi: self.phi.iter().map(&f).collect(),
        }
    }

    pub fn scale(&self, k: &Expr) -> VectorField {
        self.map(|c| Expr::product(vec![k.clone(), c.clone()]))
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        VectorField {
            xi: self.xi.iter().zip(&other.xi).map(|(a, b)| a + b).collect(),
            phi: self
                .phi
                .iter()
                .zip(&other.phi)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    fn canonical(&self, ctx: &JetContext) -> Result<(Vec<RatFn>, Vec<RatFn>), JetError> {
        if self.xi.len() != ctx.independent.len() || self.phi.len() != ctx.dependent.len() {
            return Err(JetError::UnknownVariable("vector field arity".into()));
        }
        let conv = |e: &Expr| -> Result<RatFn, JetError> {
            let r = to_ratfn(e, PrimMode::Opaque)?;
            for a in r.free_vars() {
                if let Atom::Jet(j) = a.atom() {
                    return Err(JetError::JetInCoefficient(jet_name(&j)));
                }
            }
            Ok(r)
        };
        Ok((
            self.xi.iter().map(conv).collect::<Result<_, _>>()?,
            self.phi.iter().map(conv).collect::<Result<_, _>>()?,
        ))
    }

    /// Coefficient-wise canonical equality.
    pub fn equivalent(&self, other: &VectorField, ctx: &JetContext) -> Result<bool, JetError> {
        let (a1, b1) = self.canonical(ctx)?;
        let (a2, b2) = other.canonical(ctx)?;
        Ok(a1
            .iter()
            .chain(&b1)
            .zip(a2.iter().chain(&b2))
            .all(|(p, q)| p.sub(q).is_zero()))
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = ["x", "y", "w", "E"];
        let mut first = true;
        for (c, n) in self.coefficients().zip(names) {
            if c.is_const_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})*d{n}")?;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// A vector field together with its coefficients on jet coordinates.
#[derive(Clone, Debug)]
pub struct ProlongedField {
    pub base: VectorField,
    pub order: usize,
    ctx: JetContext,
    xi: Vec<RatFn>,
    phi: Vec<RatFn>,
    jets: BTreeMap<JetCoord, RatFn>,
}

impl ProlongedField {
    pub fn coefficient(&self, j: &JetCoord) -> Option<Expr> {
        self.jets.get(j).map(RatFn::to_expr)
    }

    pub fn jets(&self) -> impl Iterator<Item = &JetCoord> {
        self.jets.keys()
    }
}

/// Prolongation via `phi^J = D_J(phi - xi^i u_i) + xi^i u_{J,i}`.
pub fn prolong(
    vf: &VectorField,
    order: usize,
    ctx: &JetContext,
) -> Result<ProlongedField, JetError> {
    if order > ctx.max_order {
        return Err(JetError::OrderTooHigh {
            order,
            max: ctx.max_order,
        });
    }
    let (xi, phi) = vf.canonical(ctx)?;
    let ext = ctx.with_max_order(order + 1);
    let mut jets = BTreeMap::new();
    for (k, u) in ctx.dependent.iter().enumerate() {
        let mut q = phi[k].clone();
        for (i, v) in ctx.independent.iter().enumerate() {
            q = q.sub(&xi[i].mul(&RatFn::atom(AtomId::jet(&JetCoord::new(u, v)))));
        }
        let mut dq: BTreeMap<String, RatFn> = BTreeMap::new();
        dq.insert(String::new(), q);
        for j in ctx
            .with_max_order(order)
            .jets()
            .into_iter()
            .filter(|j| &j.dep == u)
        {
            let (parent, last) = j.derivs.split_at(j.derivs.len() - 1);
            // parent words are sorted, so the parent is already present
            let base = dq
                .get(parent)
                .cloned()
                .map_or_else(|| derive_word(&dq[""], parent, &ext), Ok)?;
            let d = total_derivative_rf(&base, last, &ext)?;
            let mut c = d.clone();
            for (i, v) in ctx.independent.iter().enumerate() {
                let higher = RatFn::atom(AtomId::jet(&j.extend(v)));
                c = c.add(&xi[i].mul(&higher));
            }
            dq.insert(j.derivs.clone(), d);
            jets.insert(j, c);
        }
    }
    Ok(ProlongedField {
        base: vf.clone(),
        order,
        ctx: ctx.clone(),
        xi,
        phi,
        jets,
    })
}

fn derive_word(q: &RatFn, word: &str, ctx: &JetContext) -> Result<RatFn, JetError> {
    let mut r = q.clone();
    for c in word.chars() {
        r = total_derivative_rf(&r, &c.to_string(), ctx)?;
    }
    Ok(r)
}

/// Directional derivative of `e` along the prolonged field.
pub fn apply(pf: &ProlongedField, e: &Expr) -> Result<Expr, JetError> {
    Ok(apply_rf(pf, &to_ratfn(e, PrimMode::Opaque)?)?.to_expr())
}

pub fn apply_rf(pf: &ProlongedField, r: &RatFn) -> Result<RatFn, JetError> {
    let mut acc = RatFnSum::new();
    for a in r.free_vars() {
        let coeff = match a.atom() {
            Atom::Sym(s) => {
                if let Some(i) = pf.ctx.independent.iter().position(|v| *v == s) {
                    &pf.xi[i]
                } else if let Some(k) = pf.ctx.dependent.iter().position(|v| *v == s) {
                    &pf.phi[k]
                } else {
                    continue;
                }
            }
            Atom::Jet(j) => pf.jets.get(&j).ok_or_else(|| JetError::OrderOverflow {
                jet: jet_name(&j),
                max: pf.order,
            })?,
            _ => continue,
        };
        if coeff.is_zero() {
            continue;
        }
        let d = r.diff(a)?;
        if !d.is_zero() {
            acc.push(coeff.mul(&d));
        }
    }
    Ok(acc.finish())
}

/// Action of an unprolonged field on a base-space function.
fn act(xi: &[RatFn], phi: &[RatFn], ctx: &JetContext, f: &RatFn) -> Result<RatFn, JetError> {
    let mut acc = RatFnSum::new();
    for (c, v) in xi
        .iter()
        .zip(&ctx.independent)
        .chain(phi.iter().zip(&ctx.dependent))
    {
        if c.is_zero() {
            continue;
        }
        acc.push(c.mul(&f.diff(AtomId::sym(v))?));
    }
    Ok(acc.finish())
}

/// `[V1, V2]` with coefficients `V1(V2^i) - V2(V1^i)`.
pub fn lie_bracket(
    v1: &VectorField,
    v2: &VectorField,
    ctx: &JetContext,
) -> Result<VectorField, JetError> {
    let (a1, b1) = v1.canonical(ctx)?;
    let (a2, b2) = v2.canonical(ctx)?;
    let comp = |f1: &RatFn, f2: &RatFn| -> Result<Expr, JetError> {
        Ok(act(&a1, &b1, ctx, f2)?
            .sub(&act(&a2, &b2, ctx, f1)?)
            .to_expr())
    };
    Ok(VectorField {
        xi: a1
            .iter()
            .zip(&a2)
            .map(|(p, q)| comp(p, q))
            .collect::<Result<_, _>>()?,
        phi: b1
            .iter()
            .zip(&b2)
            .map(|(p, q)| comp(p, q))
            .collect::<Result<_, _>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symkernel::{is_zero, parse};

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn same(a: &Expr, b: &Expr) -> bool {
        is_zero(&(a.clone() - b.clone())).unwrap()
    }

    fn field(a: &str, b: &str, c: &str, d: &str) -> VectorField {
        VectorField::new(p(a), p(b), p(c), p(d))
    }

    fn heat() -> Expr {
        p("w_x*E_x + w_y*E_y + E*(w_xx + w_yy) + 1")
    }

    #[test]
    fn live_jets() {
        let names: Vec<String> = JetContext::heat().jets().iter().map(jet_name).collect();
        assert_eq!(
            names,
            ["w_x", "w_y", "w_xx", "w_xy", "w_yy", "E_x", "E_y", "E_xx", "E_xy", "E_yy"]
        );
    }

    #[test]
    fn total_derivative_examples() {
        let ctx = JetContext::heat();
        assert_eq!(total_derivative(&p("w"), "x", &ctx).unwrap(), p("w_x"));
        let d = total_derivative(&p("E*w_y"), "x", &ctx).unwrap();
        assert!(same(&d, &p("E_x*w_y + E*w_xy")));
        let d = total_derivative(&p("phi(x,y,w,E)"), "y", &ctx).unwrap();
        let expect =
            p("D(phi,x,y,w,E,0,1,0,0) + D(phi,x,y,w,E,0,0,1,0)*w_y + D(phi,x,y,w,E,0,0,0,1)*E_y");
        assert!(same(&d, &expect));
        assert!(matches!(
            total_derivative(&p("w_xy"), "x", &ctx),
            Err(JetError::OrderOverflow { .. })
        ));
    }

    #[test]
    fn translation_prolongs_trivially() {
        let ctx = JetContext::heat();
        let pf = prolong(&field("1", "0", "0", "0"), 2, &ctx).unwrap();
        assert!(pf
            .jets()
            .all(|j| pf.coefficient(j).unwrap().is_const_zero()));
    }

    #[test]
    fn scaling_field_coefficients() {
        let ctx = JetContext::heat();
        let pf = prolong(&field("x", "y", "0", "2*E"), 2, &ctx).unwrap();
        let c = pf.coefficient(&JetCoord::new("E", "x")).unwrap();
        assert!(same(&c, &p("E_x")));
        let c = pf.coefficient(&JetCoord::new("w", "xx")).unwrap();
        assert!(same(&c, &p("-2*w_xx")));
    }

    #[test]
    fn mu_field_coefficient() {
        let ctx = JetContext::heat();
        let vf = field("0", "0", "mu(w)", "-E*D(mu,w,1)");
        let pf = prolong(&vf, 2, &ctx).unwrap();
        let c = pf.coefficient(&JetCoord::new("w", "x")).unwrap();
        assert!(same(&c, &p("D(mu,w,1)*w_x")));
    }

    #[test]
    fn apply_examples() {
        let ctx = JetContext::heat();
        let f = heat();
        let pf = prolong(&field("0", "1", "0", "0"), 2, &ctx).unwrap();
        assert!(apply(&pf, &f).unwrap().is_const_zero());
        assert!(apply(&pf, &p("7/3")).unwrap().is_const_zero());
        // every summand of F is invariant under the scaling field
        let pf = prolong(&field("x", "y", "0", "2*E"), 2, &ctx).unwrap();
        assert!(is_zero(&apply(&pf, &f).unwrap()).unwrap());
    }

    #[test]
    fn mu_family_is_a_symmetry() {
        let ctx = JetContext::heat();
        let vf = field("0", "0", "mu(w)", "-E*D(mu,w,1)");
        let pf = prolong(&vf, 2, &ctx).unwrap();
        let r = apply(&pf, &heat()).unwrap();
        assert!(is_zero(&r).unwrap());
    }

    #[test]
    fn brackets() {
        let ctx = JetContext::heat();
        let v1 = field("1", "0", "0", "0");
        let v2 = field("0", "1", "0", "0");
        let v3 = field("-y", "x", "0", "0");
        let v4 = field("x", "y", "0", "2*E");
        assert!(lie_bracket(&v1, &v3, &ctx)
            .unwrap()
            .equivalent(&v2, &ctx)
            .unwrap());
        assert!(lie_bracket(&v1, &v4, &ctx)
            .unwrap()
            .equivalent(&v1, &ctx)
            .unwrap());
        assert!(lie_bracket(&v1, &v2, &ctx)
            .unwrap()
            .equivalent(&VectorField::zero(&ctx), &ctx)
            .unwrap());
    }

    #[test]
    fn jets_in_coefficients_are_rejected() {
        let ctx = JetContext::heat();
        assert!(matches!(
            prolong(&field("w_x", "0", "0", "0"), 1, &ctx),
            Err(JetError::JetInCoefficient(_))
        ));
    }
}
