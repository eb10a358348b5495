//! Determining systems for the heat-conduction equation
//! `w_x E_x + w_y E_y + E (w_xx + w_yy) + 1 = 0`.
//!
//! The classical system comes from `pr2 V (F)` restricted to `F = 0`. The
//! nonclassical system follows a two-step reduction: y-derivatives are
//! eliminated with the invariant surface conditions, giving an equation
//! `A1 w_xx + A2 w_x^2 + A3 w_x E_x + A4 w_x + A5 E_x + A6 = 0`; the
//! prolonged operator is applied to that equation and the result is
//! restricted to it.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::jetprolong::{
    apply_rf, prolong, total_derivative_rf, JetContext, JetError, VectorField,
};
use crate::symkernel::canonical::{collect, monomial_expr};
use crate::symkernel::{
    parse, to_ratfn, Atom, AtomId, Bindings, Expr, JetCoord, KernelError, Poly, PrimMode, RatFn,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetsysError {
    #[error("operators with vanishing y-coefficient are not supported")]
    EtaZero,
    #[error("elimination left unexpected terms: {0}")]
    EliminationFailure(String),
    #[error("candidate leaves {0} unbound")]
    Unbound(String),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn rf(e: &Expr) -> Result<RatFn, KernelError> {
    to_ratfn(e, PrimMode::Opaque)
}

fn jet(dep: &str, derivs: &str) -> RatFn {
    RatFn::atom(AtomId::jet(&JetCoord::new(dep, derivs)))
}

fn jet_id(dep: &str, derivs: &str) -> AtomId {
    AtomId::jet(&JetCoord::new(dep, derivs))
}

/// The equation `F = 0` in its jet context.
#[derive(Clone, Debug)]
pub struct HeatPDE {
    pub f: Expr,
    pub ctx: JetContext,
}

impl Default for HeatPDE {
    fn default() -> Self {
        HeatPDE::new()
    }
}

impl HeatPDE {
    pub fn new() -> Self {
        HeatPDE {
            f: parse("w_x*E_x + w_y*E_y + E*(w_xx + w_yy) + 1").expect("valid literal"),
            ctx: JetContext::heat(),
        }
    }

    /// `F` solved for its leading derivative `w_xx`.
    pub fn solved_wxx(&self) -> Result<RatFn, KernelError> {
        rf(&parse("-(1 + w_x*E_x + w_y*E_y + E*w_yy)/E").expect("valid literal"))
    }
}

/// `w_y = phi - xi w_x`, `E_y = psi - xi E_x`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvariantSurfaceConditions {
    pub xi: Expr,
    pub phi: Expr,
    pub psi: Expr,
}

const GENERIC_NONCLASSICAL: [&str; 3] = ["xi", "phi", "psi"];
const GENERIC_CLASSICAL: [&str; 4] = ["Gamma", "Lambda", "Phi", "Psi"];

fn generic(name: &str) -> Expr {
    Expr::func(
        name,
        ["x", "y", "w", "E"].iter().map(|v| Expr::sym(v)).collect(),
    )
}

impl InvariantSurfaceConditions {
    pub fn new(xi: Expr, phi: Expr, psi: Expr) -> Self {
        InvariantSurfaceConditions { xi, phi, psi }
    }

    /// Unspecified `xi, phi, psi` of `(x, y, w, E)`.
    pub fn general() -> Self {
        InvariantSurfaceConditions::new(generic("xi"), generic("phi"), generic("psi"))
    }

    /// Normalize an operator `xi d/dx + eta d/dy + phi d/dw + psi d/dE` to
    /// `eta = 1`.
    pub fn from_field(vf: &VectorField) -> Result<Self, DetsysError> {
        let eta = rf(&vf.xi[1])?;
        if eta.is_zero() {
            return Err(DetsysError::EtaZero);
        }
        let norm = |e: &Expr| -> Result<Expr, DetsysError> { Ok(rf(e)?.div(&eta)?.to_expr()) };
        Ok(InvariantSurfaceConditions::new(
            norm(&vf.xi[0])?,
            norm(&vf.phi[0])?,
            norm(&vf.phi[1])?,
        ))
    }

    pub fn field(&self) -> VectorField {
        VectorField::new(
            self.xi.clone(),
            Expr::one(),
            self.phi.clone(),
            self.psi.clone(),
        )
    }

    fn canonical(&self) -> Result<[RatFn; 3], KernelError> {
        Ok([rf(&self.xi)?, rf(&self.phi)?, rf(&self.psi)?])
    }
}

/// Rewrites every jet coordinate with a y-index in terms of x-only jets.
struct YElimination {
    ctx: JetContext,
    first: HashMap<String, RatFn>,
    memo: HashMap<JetCoord, RatFn>,
}

impl YElimination {
    fn new(isc: &InvariantSurfaceConditions, max_order: usize) -> Result<Self, DetsysError> {
        let [xi, phi, psi] = isc.canonical()?;
        let mut first = HashMap::new();
        first.insert("w".to_string(), phi.sub(&xi.mul(&jet("w", "x"))));
        first.insert("E".to_string(), psi.sub(&xi.mul(&jet("E", "x"))));
        Ok(YElimination {
            ctx: JetContext::heat().with_max_order(max_order),
            first,
            memo: HashMap::new(),
        })
    }

    fn value(&mut self, j: &JetCoord) -> Result<RatFn, DetsysError> {
        if let Some(v) = self.memo.get(j) {
            return Ok(v.clone());
        }
        let a = j.count('x');
        let b = j.count('y');
        let v = if b == 1 {
            let mut r = self.first[&j.dep].clone();
            for _ in 0..a {
                r = total_derivative_rf(&r, "x", &self.ctx)?;
            }
            r
        } else {
            let lower = JetCoord::new(&j.dep, &format!("{}{}", "x".repeat(a), "y".repeat(b - 1)));
            let prev = self.value(&lower)?;
            let d = total_derivative_rf(&prev, "y", &self.ctx)?;
            self.reduce(&d)?
        };
        self.memo.insert(j.clone(), v.clone());
        Ok(v)
    }

    fn reduce(&mut self, r: &RatFn) -> Result<RatFn, DetsysError> {
        let mut repl = HashMap::new();
        for a in r.free_vars() {
            if let Atom::Jet(j) = a.atom() {
                if j.count('y') > 0 {
                    repl.insert(a, self.value(&j)?);
                }
            }
        }
        if repl.is_empty() {
            return Ok(r.clone());
        }
        Ok(r.compose(&repl)?)
    }
}

/// Coefficients of the y-free equation, in the order
/// `w_xx, w_x^2, w_x E_x, w_x, E_x, 1`.
#[derive(Clone, Debug)]
pub struct ReducedEquation {
    pub a: [Expr; 6],
    pub assembled: Expr,
    coeffs: [RatFn; 6],
    assembled_rf: RatFn,
}

impl ReducedEquation {
    /// `w_xx` solved from the equation.
    fn solved_wxx(&self) -> Result<RatFn, KernelError> {
        let rest = self.assembled_rf.sub(&self.coeffs[0].mul(&jet("w", "xx")));
        rest.neg().div(&self.coeffs[0])
    }
}

pub fn isc_eliminate(
    pde: &HeatPDE,
    isc: &InvariantSurfaceConditions,
) -> Result<ReducedEquation, DetsysError> {
    let mut elim = YElimination::new(isc, 3)?;
    let r = elim.reduce(&rf(&pde.f)?)?;
    let vars = [jet_id("w", "xx"), jet_id("w", "x"), jet_id("E", "x")];
    let keys: [[u32; 3]; 6] = [
        [1, 0, 0],
        [0, 2, 0],
        [0, 1, 1],
        [0, 1, 0],
        [0, 0, 1],
        [0, 0, 0],
    ];
    let mut coeffs: [RatFn; 6] = Default::default();
    for c in collect(&r, &vars)? {
        match keys.iter().position(|k| k[..] == c.exponents[..]) {
            Some(i) => coeffs[i] = c.coefficient,
            None => {
                return Err(DetsysError::EliminationFailure(
                    monomial_expr(&vars, &c.exponents).to_string(),
                ))
            }
        }
    }
    for a in r.free_vars() {
        if let Atom::Jet(j) = a.atom() {
            if !vars.contains(&a) {
                return Err(DetsysError::EliminationFailure(format!(
                    "{}_{}",
                    j.dep, j.derivs
                )));
            }
        }
    }
    Ok(ReducedEquation {
        a: coeffs.clone().map(|c| c.to_expr()),
        assembled: r.to_expr(),
        coeffs,
        assembled_rf: r,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemKind {
    Classical,
    Nonclassical,
}

/// One equation per jet monomial; denominators are cleared.
#[derive(Clone, Debug)]
pub struct DeterminingSystem {
    pub kind: SystemKind,
    pub equations: Vec<(Expr, Expr)>,
    coeffs: Vec<RatFn>,
}

impl DeterminingSystem {
    fn from_restricted(kind: SystemKind, r: &RatFn, vars: &[AtomId]) -> Result<Self, DetsysError> {
        let mut equations = Vec::new();
        let mut coeffs = Vec::new();
        for c in collect(r, vars)? {
            let num = RatFn::from(strip_nonzero_factors(
                c.coefficient.numerator(),
                r.denominator(),
            ));
            equations.push((monomial_expr(vars, &c.exponents), num.to_expr()));
            coeffs.push(num);
        }
        for a in r.free_vars() {
            if let Atom::Jet(j) = a.atom() {
                if !vars.contains(&a) {
                    return Err(DetsysError::EliminationFailure(format!(
                        "{}_{}",
                        j.dep, j.derivs
                    )));
                }
            }
        }
        Ok(DeterminingSystem {
            kind,
            equations,
            coeffs,
        })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coefficients(&self) -> &[RatFn] {
        &self.coeffs
    }

    fn generic_names(&self) -> &'static [&'static str] {
        match self.kind {
            SystemKind::Classical => &GENERIC_CLASSICAL,
            SystemKind::Nonclassical => &GENERIC_NONCLASSICAL,
        }
    }

    /// Every coefficient after substitution of the candidate.
    pub fn residual(&self, candidate: &Bindings) -> Result<Vec<RatFn>, DetsysError> {
        let sub = candidate.compile()?;
        let names = self.generic_names();
        let mut out = Vec::with_capacity(self.coeffs.len());
        for c in &self.coeffs {
            let r = sub.apply(c)?;
            for a in r.atoms() {
                if let Atom::Func(app) = a.atom() {
                    if names.contains(&app.name.as_str()) {
                        return Err(DetsysError::Unbound(app.name));
                    }
                }
            }
            out.push(r);
        }
        Ok(out)
    }

    /// Residual with the generic infinitesimals replaced by the field's
    /// coefficients (normalized to `eta = 1` for the nonclassical kind).
    pub fn residual_field(&self, vf: &VectorField) -> Result<Vec<RatFn>, DetsysError> {
        self.residual(&self.field_bindings(vf)?)
    }

    pub fn field_bindings(&self, vf: &VectorField) -> Result<Bindings, DetsysError> {
        let params = ["x", "y", "w", "E"];
        let mut b = Bindings::new();
        match self.kind {
            SystemKind::Classical => {
                for (name, c) in GENERIC_CLASSICAL.iter().zip(vf.coefficients()) {
                    b = b.function(name, &params, c.clone());
                }
            }
            SystemKind::Nonclassical => {
                let isc = InvariantSurfaceConditions::from_field(vf)?;
                b = b
                    .function("xi", &params, isc.xi)
                    .function("phi", &params, isc.phi)
                    .function("psi", &params, isc.psi);
            }
        }
        Ok(b)
    }
}

impl fmt::Display for DeterminingSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (key, eq) in &self.equations {
            writeln!(f, "#[{key}] {eq}")?;
        }
        Ok(())
    }
}

/// Divide out denominator factors that survive in a cleared numerator. The
/// factors (`E`, `xi^2 + 1`) never vanish, so the equation is unchanged.
fn strip_nonzero_factors(num: &Poly, den: &[(Poly, u32)]) -> Poly {
    let mut out = num.clone();
    for (f, _) in den {
        while let Some(q) = out.exact_div(f) {
            if q.is_zero() {
                break;
            }
            out = q;
        }
    }
    out
}

fn classical_vars() -> Vec<AtomId> {
    [
        "w_x", "w_y", "E_x", "E_y", "w_xy", "w_yy", "E_xx", "E_xy", "E_yy",
    ]
    .iter()
    .map(|n| {
        let (d, j) = n.split_once('_').unwrap();
        jet_id(d, j)
    })
    .collect()
}

fn nonclassical_vars() -> Vec<AtomId> {
    vec![jet_id("w", "x"), jet_id("E", "x"), jet_id("E", "xx")]
}

/// `pr2 V (F)` restricted to `F = 0`, for the given field.
pub fn classical_restricted(pde: &HeatPDE, vf: &VectorField) -> Result<RatFn, DetsysError> {
    let pf = prolong(vf, 2, &pde.ctx)?;
    let r = apply_rf(&pf, &rf(&pde.f)?)?;
    let mut repl = HashMap::new();
    repl.insert(jet_id("w", "xx"), pde.solved_wxx()?);
    Ok(r.compose(&repl)?)
}

/// Classical equivalence determining system for generic `Gamma, Lambda,
/// Phi, Psi` of `(x, y, w, E)`.
pub fn classical_determining(pde: &HeatPDE) -> Result<DeterminingSystem, DetsysError> {
    let vf = VectorField {
        xi: vec![generic("Gamma"), generic("Lambda")],
        phi: vec![generic("Phi"), generic("Psi")],
    };
    let r = classical_restricted(pde, &vf)?;
    DeterminingSystem::from_restricted(SystemKind::Classical, &r, &classical_vars())
}

/// Step two: the prolonged operator applied to the reduced equation,
/// y-derivatives eliminated again and `w_xx` taken from the reduced
/// equation.
pub fn nonclassical_restricted(
    pde: &HeatPDE,
    isc: &InvariantSurfaceConditions,
) -> Result<RatFn, DetsysError> {
    let reduced = isc_eliminate(pde, isc)?;
    let pf = prolong(&isc.field(), 2, &pde.ctx)?;
    let r = apply_rf(&pf, &reduced.assembled_rf)?;
    let mut elim = YElimination::new(isc, 3)?;
    let r = elim.reduce(&r)?;
    let mut repl = HashMap::new();
    repl.insert(jet_id("w", "xx"), reduced.solved_wxx()?);
    Ok(r.compose(&repl)?)
}

/// The same restriction computed from `pr2 U (F)` directly; used as an
/// independent check of the two-step route.
pub fn nonclassical_direct(
    pde: &HeatPDE,
    isc: &InvariantSurfaceConditions,
) -> Result<RatFn, DetsysError> {
    let reduced = isc_eliminate(pde, isc)?;
    let pf = prolong(&isc.field(), 2, &pde.ctx)?;
    let r = apply_rf(&pf, &rf(&pde.f)?)?;
    let mut elim = YElimination::new(isc, 3)?;
    let r = elim.reduce(&r)?;
    let mut repl = HashMap::new();
    repl.insert(jet_id("w", "xx"), reduced.solved_wxx()?);
    Ok(r.compose(&repl)?)
}

/// Nonclassical system for the given (possibly concrete) conditions.
pub fn nonclassical_system(
    pde: &HeatPDE,
    isc: &InvariantSurfaceConditions,
) -> Result<DeterminingSystem, DetsysError> {
    let r = nonclassical_restricted(pde, isc)?;
    DeterminingSystem::from_restricted(SystemKind::Nonclassical, &r, &nonclassical_vars())
}

/// Nonclassical determining system for generic `xi, phi, psi`.
pub fn nonclassical_determining(pde: &HeatPDE) -> Result<DeterminingSystem, DetsysError> {
    nonclassical_system(pde, &InvariantSurfaceConditions::general())
}
