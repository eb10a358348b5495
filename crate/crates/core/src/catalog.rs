//! Solution families of the determining systems and the transformation
//! identities used to derive them. Every family carries the auxiliary
//! constraints its parameters satisfy; verification checks those first and
//! then substitutes the field into the determining system.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::detsys::{
    classical_determining, nonclassical_determining, DeterminingSystem, DetsysError, HeatPDE,
};
use crate::jetprolong::VectorField;
use crate::symkernel::{
    diff, parse_with, substitute, to_ratfn, Atom, AtomId, Bindings, Declarations, DerivativeRule,
    Expr, KernelError, PrimMode, RatFn,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("invalid parameters for {family}: {message}")]
    Params { family: FamilyId, message: String },
    #[error("{family}: constraint `{constraint}` does not hold, residual {residual}")]
    ConstraintViolated {
        family: FamilyId,
        constraint: String,
        residual: String,
    },
    #[error("implicit differentiation is degenerate: x + nu'(B) vanishes identically")]
    DegenerateImplicit,
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
    #[error(transparent)]
    Detsys(#[from] DetsysError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum FamilyId {
    /// Classical equivalence generators.
    CL,
    /// Common solutions of the classical and nonclassical systems.
    CMP,
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
    F7,
    F8,
    F9,
}

impl FamilyId {
    pub const ALL: [FamilyId; 11] = [
        FamilyId::CL,
        FamilyId::CMP,
        FamilyId::F1,
        FamilyId::F2,
        FamilyId::F3,
        FamilyId::F4,
        FamilyId::F5,
        FamilyId::F6,
        FamilyId::F7,
        FamilyId::F8,
        FamilyId::F9,
    ];

    pub fn is_classical(self) -> bool {
        self == FamilyId::CL
    }
}

impl fmt::Display for FamilyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for FamilyId {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FamilyId::ALL
            .iter()
            .copied()
            .find(|id| id.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| CatalogError::UnknownFamily(s.to_string()))
    }
}

/// How `xi = A(x, y)` is chosen.
#[derive(Clone, Debug)]
pub enum AChoice {
    /// A nonzero constant.
    Constant(Expr),
    /// `(k1 - k3 y + k4 x) / (k2 + k3 x + k4 y)` with the family's `ks`.
    Mobius,
    /// `(B + 1) / (B - 1)` with `y - x B = nu(B)`.
    Implicit,
    /// Unspecified `A` reduced by its own second-order equation.
    Generic,
    /// Any explicit expression in `x, y`.
    Explicit(Expr),
}

/// Potential functions of the Abel branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Potential {
    /// `y^2/2 + h(w)` (resp. `u^2/2 + h(w)`).
    Quadratic,
    /// `g_y = y + alpha(g)` (resp. `Q_u = u + gamma(Q)`).
    Abel,
}

#[derive(Clone, Debug)]
pub struct FamilyParams {
    /// Body of `mu` in `w`; `None` leaves it unspecified.
    pub mu: Option<Expr>,
    pub k: Expr,
    pub ks: [Expr; 4],
    pub a: AChoice,
    pub potential: Potential,
    /// Concrete body in `t` for the auxiliary function of the branch
    /// (`h`, `alpha`, `gamma` or `nu`); `None` leaves it unspecified.
    pub aux: Option<Expr>,
    /// `(u(x, y), S(u, w))` for the general `A, G` family.
    pub invariant: Option<(Expr, Expr)>,
}

impl Default for FamilyParams {
    fn default() -> Self {
        FamilyParams {
            mu: None,
            k: Expr::sym("k"),
            ks: [
                Expr::sym("k1"),
                Expr::sym("k2"),
                Expr::sym("k3"),
                Expr::sym("k4"),
            ],
            a: AChoice::Generic,
            potential: Potential::Abel,
            aux: None,
            invariant: None,
        }
    }
}

impl FamilyParams {
    pub fn with_mu(mut self, mu: &str) -> Self {
        self.mu = Some(px(mu));
        self
    }

    pub fn with_k(mut self, k: i64) -> Self {
        self.k = Expr::int(k);
        self
    }

    pub fn with_ks(mut self, ks: [i64; 4]) -> Self {
        self.ks = ks.map(Expr::int);
        self
    }

    pub fn with_a(mut self, a: AChoice) -> Self {
        self.a = a;
        self
    }

    pub fn with_potential(mut self, p: Potential) -> Self {
        self.potential = p;
        self
    }

    pub fn with_aux(mut self, body: &str) -> Self {
        self.aux = Some(px(body));
        self
    }

    pub fn with_invariant(mut self, u: &str, s: &str) -> Self {
        self.invariant = Some((px(u), px(s)));
        self
    }
}

/// A catalog entry: the field, the bindings that give meaning to its
/// parameter functions, and the constraints those parameters satisfy.
#[derive(Clone, Debug)]
pub struct GeneratorFamily {
    pub id: FamilyId,
    pub field: VectorField,
    pub bindings: Bindings,
    pub constraints: Vec<(String, Expr)>,
    /// Factor turning the field into a classical generator, when known.
    pub classical_multiplier: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub family: FamilyId,
    pub instantiation: String,
    pub system: String,
    pub field: String,
    pub residual_count: usize,
    pub nonvanishing: Vec<String>,
    pub pass: bool,
}

/// A named parameter choice.
#[derive(Clone, Debug)]
pub struct Instantiation {
    pub label: String,
    pub params: FamilyParams,
}

impl Instantiation {
    /// Parameters given as text; `None` when none is given.
    pub fn custom(
        mu: Option<&str>,
        k: Option<&str>,
        aux: Option<&str>,
    ) -> Result<Option<Instantiation>, crate::symkernel::ParseError> {
        if mu.is_none() && k.is_none() && aux.is_none() {
            return Ok(None);
        }
        let mut params = FamilyParams::default();
        let mut label = Vec::new();
        if let Some(mu) = mu {
            params.mu = Some(parse_param(mu)?);
            label.push(format!("mu = {mu}"));
        }
        if let Some(k) = k {
            params.k = parse_param(k)?;
            label.push(format!("k = {k}"));
        }
        if let Some(aux) = aux {
            params.aux = Some(parse_param(aux)?);
            label.push(format!("aux = {aux}"));
        }
        Ok(Some(Instantiation {
            label: label.join(", "),
            params,
        }))
    }
}

fn decls() -> &'static Declarations {
    static D: OnceLock<Declarations> = OnceLock::new();
    D.get_or_init(|| {
        Declarations::default()
            .with_function("A", &["x", "y"])
            .with_function("B", &["x", "y"])
            .with_function("U", &["x", "y"])
            .with_function("T", &["x", "y"])
            .with_function("G", &["x", "y", "w"])
            .with_function("H", &["y", "w"])
            .with_function("g", &["y", "w"])
            .with_function("Q", &["u", "w"])
            .with_function("S", &["u", "w"])
            .with_function("V", &["a", "b"])
            .with_function("L", &["a", "b"])
            .with_function("mu", &["w"])
            .with_function("h", &["w"])
            .with_function("p", &["u"])
            .with_function("nu", &["t"])
            .with_function("alpha", &["t"])
            .with_function("gamma", &["t"])
            .with_function("Y", &["t"])
    })
}

/// Parse a user-supplied parameter with the catalog's function
/// declarations.
pub fn parse_param(text: &str) -> Result<Expr, crate::symkernel::ParseError> {
    parse_with(text, decls())
}

/// Parse a built-in formula.
fn px(text: &str) -> Expr {
    parse_with(text, decls()).unwrap_or_else(|e| panic!("built-in formula `{text}`: {e}"))
}

fn d(e: &Expr, v: &str) -> Expr {
    diff(e, v)
}

fn int(n: i64) -> Expr {
    Expr::int(n)
}

fn sq(e: &Expr) -> Expr {
    Expr::pow(e.clone(), 2)
}

fn subst_var(e: &Expr, v: &str, value: &Expr) -> Result<Expr, KernelError> {
    substitute(e, &Bindings::new().var(v, value.clone()))
}

fn zero_under(e: &Expr, sub: &Bindings) -> Result<Option<RatFn>, KernelError> {
    let r = sub.compile()?.apply(&to_ratfn(e, PrimMode::Opaque)?)?;
    Ok((!r.is_zero()).then_some(r))
}

fn vanishes(e: &Expr, sub: &Bindings) -> Result<bool, KernelError> {
    Ok(zero_under(e, sub)?.is_none())
}

/// `F = -G_w + 2 (A_x - A A_y) / (A^2 + 1)`.
pub fn f_coefficient(a: &Expr, g: &Expr) -> Expr {
    -d(g, "w") + int(2) * (d(a, "x") - a * &d(a, "y")) / (sq(a) + int(1))
}

/// First-order equation for `G`.
pub fn g_first_equation(a: &Expr, g: &Expr) -> Expr {
    let (ax, ay) = (d(a, "x"), d(a, "y"));
    d(g, "x")
        - a * &d(g, "y")
        - (int(2) * a * &ax - ay * (sq(a) - int(1))) / (sq(a) + int(1)) * g.clone()
}

/// Second-order equation for `G`.
pub fn g_second_equation(a: &Expr, g: &Expr) -> Expr {
    let f = f_coefficient(a, g);
    let (ax, ay) = (d(a, "x"), d(a, "y"));
    let den = sq(a) + int(1);
    let c = int(2) * (ax.clone() - a * &ay) / den.clone();
    let e = int(2) * (a * &ax + ay) / den;
    let (gx, gy, gw) = (d(g, "x"), d(g, "y"), d(g, "w"));
    d(&gx, "x")
        + d(&gy, "y")
        + d(&f, "y") * g.clone()
        + f.clone() * gy.clone()
        + int(2) * g * &d(&gy, "w")
        + c * (g * &gw + gy + f * g.clone())
        - e * gx
}

/// The second-order equation for `A`.
pub fn a_equation(a: &Expr) -> Expr {
    let (ax, ay) = (d(a, "x"), d(a, "y"));
    let a2 = sq(a);
    let a4 = Expr::pow(a.clone(), 4);
    (a4.clone() - int(1)) * d(&ax, "x") + int(4) * a * &(a2.clone() + int(1)) * d(&ax, "y")
        - (a4 - int(1)) * d(&ay, "y")
        - int(2) * a * &(a2.clone() - int(3)) * sq(&ax)
        - int(4) * (int(3) * a2.clone() - int(1)) * ax.clone() * ay.clone()
        + int(2) * a * &(a2 - int(3)) * sq(&ay)
}

/// `B (B^2+1) B_xx + (B^2-1)(B^2+1) B_xy - ...`, the same equation for
/// `B = (A + 1) / (A - 1)`.
pub fn b_equation(b: &Expr) -> Expr {
    let (bx, by) = (d(b, "x"), d(b, "y"));
    let b2 = sq(b);
    let q = b2.clone() + int(1);
    b * &q * d(&bx, "x") + (b2.clone() - int(1)) * q.clone() * d(&bx, "y")
        - b * &q * d(&by, "y")
        - (int(3) * b2.clone() - int(1)) * sq(&bx)
        - int(2) * b * &(b2.clone() - int(3)) * bx.clone() * by.clone()
        + (int(3) * b2 - int(1)) * sq(&by)
}

/// Conservation form of the `B` equation.
pub fn b_conservation(b: &Expr) -> Expr {
    let m = (d(b, "x") + b * &d(b, "y")) / Expr::pow(sq(b) + int(1), 2);
    d(&(b * &m), "x") - d(&m, "y")
}

/// `H_yy + H H_yw - H_y H_w` for `G = H(y, w)`.
pub fn h_equation(h: &Expr) -> Expr {
    let hy = d(h, "y");
    d(&hy, "y") + h * &d(&hy, "w") - hy * d(h, "w")
}

/// `S_uu + S S_uw - S_u S_w`.
pub fn s_equation(s: &Expr) -> Expr {
    let su = d(s, "u");
    d(&su, "u") + s * &d(&su, "w") - su * d(s, "w")
}

/// `g_y (g_y - y)_w - g_w (g_y - y)_y`.
pub fn g_potential_equation(g: &Expr) -> Expr {
    let m = d(g, "y") - Expr::sym("y");
    d(g, "y") * d(&m, "w") - d(g, "w") * d(&m, "y")
}

/// `Q_u (Q_u - u)_w - Q_w (Q_u - u)_u`.
pub fn q_potential_equation(q: &Expr) -> Expr {
    let m = d(q, "u") - Expr::sym("u");
    d(q, "u") * d(&m, "w") - d(q, "w") * d(&m, "u")
}

/// Coefficients `(q1, q2, q3)` of the equation for `S(u, w)` in terms of
/// `A` and the invariant `u(x, y)`.
pub fn s_coefficients(a: &Expr, u: &Expr) -> (Expr, Expr, Expr) {
    let (ax, ay) = (d(a, "x"), d(a, "y"));
    let (axx, axy, ayy) = (d(&ax, "x"), d(&ax, "y"), d(&ay, "y"));
    let uy = d(u, "y");
    let uyy = d(&uy, "y");
    let uyyy = d(&uyy, "y");
    let a2 = sq(a);
    let p = a2.clone() + int(1);
    let a3 = Expr::pow(a.clone(), 3);
    let q1 = Expr::pow(uy.clone(), 3) * Expr::pow(p.clone(), 3);
    let q2 = uy.clone()
        * p.clone()
        * (int(3) * uyy.clone() * sq(&p)
            + uy.clone()
                * (int(5) * ax.clone()
                    + int(3) * a3 * ay.clone()
                    + int(3) * a2.clone() * ax.clone()
                    + a * &ay));
    let q3 = uyyy * Expr::pow(p.clone(), 3)
        + uyy
            * p.clone()
            * ((int(3) * a2.clone() + int(5)) * ax.clone()
                + (int(3) * a2.clone() + int(1)) * a.clone() * ay.clone())
        + uy * (int(2) * a * &p * axx
            + p.clone() * (a2.clone() + int(3)) * axy
            + a * &sq(&p) * ayy
            - int(2) * (a2.clone() - int(3)) * sq(&ax)
            + int(2) * a * &(a2.clone() - int(3)) * ax.clone() * ay.clone()
            + (Expr::pow(a.clone(), 4) - int(1)) * sq(&ay));
    (q1, q2, q3)
}

/// `q1 (S_uw S - S_u S_w + S_uu) + q2 S_u + q3 S` for `S` written in `u, w`.
pub fn s_general_equation(q: &(Expr, Expr, Expr), s: &Expr) -> Expr {
    let su = d(s, "u");
    q.0.clone() * (d(&su, "w") * s.clone() - su.clone() * d(s, "w") + d(&su, "u"))
        + q.1.clone() * su
        + q.2.clone() * s.clone()
}

fn a_rule() -> DerivativeRule {
    let rest = px("4*A*(A^2+1)*A_xy - (A^4-1)*A_yy - 2*A*(A^2-3)*A_x^2 \
         - 4*(3*A^2-1)*A_x*A_y + 2*A*(A^2-3)*A_y^2");
    DerivativeRule {
        function: "A".into(),
        params: vec!["x".into(), "y".into()],
        trigger: vec![2, 0],
        rhs: -rest / px("A^4 - 1"),
    }
}

/// `B_x = -B / (x + nu'(B))`, `B_y = 1 / (x + nu'(B))` from `y - x B = nu(B)`.
fn implicit_rules() -> [DerivativeRule; 2] {
    let den = px("x + D(nu, B, 1)");
    let mk = |trigger: Vec<u32>, num: Expr| DerivativeRule {
        function: "B".into(),
        params: vec!["x".into(), "y".into()],
        trigger,
        rhs: num / den.clone(),
    };
    [mk(vec![1, 0], px("-B")), mk(vec![0, 1], int(1))]
}

fn abel_rule(function: &str, var: &str, coeff: &str) -> DerivativeRule {
    let (params, trigger) = match var {
        "y" => (vec!["y".to_string(), "w".to_string()], vec![1, 0]),
        _ => (vec!["u".to_string(), "w".to_string()], vec![1, 0]),
    };
    DerivativeRule {
        function: function.into(),
        params,
        trigger,
        rhs: px(&format!("{var} + {coeff}({function})")),
    }
}

fn depends_only_on(e: &Expr, vars: &[&str]) -> Result<bool, KernelError> {
    let r = to_ratfn(e, PrimMode::Opaque)?;
    Ok(r.free_vars().iter().all(|a| match a.atom() {
        Atom::Sym(s) => vars.contains(&s.as_str()),
        _ => false,
    }))
}

fn params_error(family: FamilyId, message: impl Into<String>) -> CatalogError {
    CatalogError::Params {
        family,
        message: message.into(),
    }
}

struct AData {
    a: Expr,
    bindings: Bindings,
    multiplier: Option<Expr>,
}

fn resolve_a(id: FamilyId, p: &FamilyParams) -> Result<AData, CatalogError> {
    let none = Bindings::new();
    Ok(match &p.a {
        AChoice::Constant(c) => {
            if !depends_only_on(c, &["k"])? {
                return Err(params_error(id, "A must be a constant"));
            }
            if to_ratfn(c, PrimMode::Opaque)?.is_zero() {
                return Err(params_error(id, "A must be nonzero"));
            }
            AData {
                a: c.clone(),
                bindings: none,
                multiplier: Some(int(1)),
            }
        }
        AChoice::Mobius => {
            let [k1, k2, k3, k4] = p.ks.clone();
            let (x, y) = (Expr::sym("x"), Expr::sym("y"));
            let num = k1 - k3.clone() * y.clone() + k4.clone() * x.clone();
            let den = k2 + k3 * x + k4 * y;
            if to_ratfn(&den, PrimMode::Opaque)?.is_zero() {
                return Err(params_error(id, "k2, k3, k4 must not all vanish"));
            }
            AData {
                a: num / den.clone(),
                bindings: none,
                multiplier: Some(den),
            }
        }
        AChoice::Implicit => {
            let mut b = Bindings::new();
            for r in implicit_rules() {
                b = b.rule(r);
            }
            if let Some(nu) = &p.aux {
                b = b.function("nu", &["t"], nu.clone());
            }
            AData {
                a: px("(B + 1)/(B - 1)"),
                bindings: b,
                multiplier: None,
            }
        }
        AChoice::Generic => AData {
            a: px("A"),
            bindings: Bindings::new().rule(a_rule()),
            multiplier: None,
        },
        AChoice::Explicit(e) => {
            if !depends_only_on(e, &["x", "y", "k", "k1", "k2", "k3", "k4"])? {
                return Err(params_error(id, "A may depend on x and y only"));
            }
            AData {
                a: e.clone(),
                bindings: none,
                multiplier: None,
            }
        }
    })
}

fn mu_bindings(p: &FamilyParams) -> Bindings {
    match &p.mu {
        Some(body) => Bindings::new().function("mu", &["w"], body.clone()),
        None => Bindings::new(),
    }
}

fn aux_binding(p: &FamilyParams, name: &str) -> Bindings {
    match &p.aux {
        Some(body) => Bindings::new().function(name, &["t"], body.clone()),
        None => Bindings::new(),
    }
}

/// Build a catalog family for the given parameters.
pub fn build_family(id: FamilyId, p: &FamilyParams) -> Result<GeneratorFamily, CatalogError> {
    let (x, y, e) = (Expr::sym("x"), Expr::sym("y"), Expr::sym("E"));
    let mu = px("mu");
    let mu_w = px("mu_w");
    let mut bindings = mu_bindings(p);
    let mut constraints: Vec<(String, Expr)> = Vec::new();
    let mut multiplier = None;
    let field = match id {
        FamilyId::CL => {
            let [k1, k2, k3, k4] = p.ks.clone();
            VectorField::new(
                k1 - k3.clone() * y.clone() + k4.clone() * x.clone(),
                k2 + k3 * x + k4.clone() * y,
                mu,
                e * (int(2) * k4 - mu_w),
            )
        }
        FamilyId::CMP => {
            let [k1, k2, k3, k4] = p.ks.clone();
            let lam = k2 + k3.clone() * x.clone() + k4.clone() * y.clone();
            if to_ratfn(&lam, PrimMode::Opaque)?.is_zero() {
                return Err(params_error(id, "k2, k3, k4 must not all vanish"));
            }
            multiplier = Some(lam.clone());
            VectorField::new(
                (k1 - k3 * y + k4.clone() * x) / lam.clone(),
                int(1),
                mu / lam.clone(),
                e * (int(2) * k4 - mu_w) / lam,
            )
        }
        FamilyId::F1 => {
            multiplier = Some(int(1));
            VectorField::new(int(0), int(1), int(0), int(0))
        }
        FamilyId::F2 => {
            multiplier = Some(int(1));
            constraints.push(("H equation".into(), h_equation(&mu)));
            VectorField::new(int(0), int(1), mu, -(mu_w * e))
        }
        FamilyId::F3 => {
            let h = y.clone() * mu;
            constraints.push(("H equation".into(), h_equation(&h)));
            VectorField::new(int(0), int(1), h, -(y * mu_w * e))
        }
        FamilyId::F4 => {
            let g = px("g");
            match p.potential {
                Potential::Quadratic => {
                    bindings = bindings
                        .function("g", &["y", "w"], px("y^2/2 + h(w)"))
                        .extend(&match &p.aux {
                            Some(b) => {
                                Bindings::new().function("h", &["w"], subst_var(b, "t", &px("w"))?)
                            }
                            None => Bindings::new(),
                        });
                }
                Potential::Abel => {
                    bindings = bindings
                        .rule(abel_rule("g", "y", "alpha"))
                        .extend(&aux_binding(p, "alpha"));
                }
            }
            let ratio = d(&g, "y") / d(&g, "w");
            let phi = -ratio.clone();
            constraints.push(("g potential equation".into(), g_potential_equation(&g)));
            constraints.push(("H equation".into(), h_equation(&phi)));
            VectorField::new(int(0), int(1), phi, e * d(&ratio, "w"))
        }
        FamilyId::F5 => {
            let ad = resolve_a(id, p)?;
            bindings = bindings.extend(&ad.bindings);
            multiplier = ad.multiplier;
            let a = ad.a;
            constraints.push(("A equation".into(), a_equation(&a)));
            let psi = e * int(2) * (d(&a, "x") - a.clone() * d(&a, "y")) / (sq(&a) + int(1));
            VectorField::new(a, int(1), int(0), psi)
        }
        FamilyId::F6 | FamilyId::F7 | FamilyId::F8 => {
            let k = p.k.clone();
            if !depends_only_on(&k, &["k"])? || to_ratfn(&k, PrimMode::Opaque)?.is_zero() {
                return Err(params_error(id, "k must be a nonzero constant"));
            }
            let c = sq(&k) + int(1);
            let u = k.clone() * x + y;
            let s = match id {
                FamilyId::F6 => mu,
                FamilyId::F7 => Expr::sym("u") * mu,
                _ => {
                    match p.potential {
                        Potential::Quadratic => {
                            bindings = bindings
                                .function("Q", &["u", "w"], px("u^2/2 + h(w)"))
                                .extend(&match &p.aux {
                                    Some(b) => Bindings::new().function(
                                        "h",
                                        &["w"],
                                        subst_var(b, "t", &px("w"))?,
                                    ),
                                    None => Bindings::new(),
                                });
                        }
                        Potential::Abel => {
                            bindings = bindings
                                .rule(abel_rule("Q", "u", "gamma"))
                                .extend(&aux_binding(p, "gamma"));
                        }
                    }
                    let q = px("Q");
                    constraints.push(("Q potential equation".into(), q_potential_equation(&q)));
                    -(d(&q, "u") / d(&q, "w"))
                }
            };
            if id == FamilyId::F6 {
                multiplier = Some(int(1) / c.clone());
            }
            constraints.push(("S equation".into(), s_equation(&s)));
            let phi = subst_var(&(c.clone() * s.clone()), "u", &u)?;
            let psi = subst_var(&(-(c * d(&s, "w")) * e), "u", &u)?;
            VectorField::new(k, int(1), phi, psi)
        }
        FamilyId::F9 => {
            let (a, u, s) = match &p.invariant {
                None => {
                    multiplier = Some(x.clone());
                    (px("-y/x"), px("y/x"), px("mu/(1 + u^2)"))
                }
                Some((u, s)) => {
                    let ad = resolve_a(id, p)?;
                    if !ad.bindings.is_empty() {
                        return Err(params_error(
                            id,
                            "an explicit A is required with an explicit invariant",
                        ));
                    }
                    multiplier = ad.multiplier;
                    (ad.a, u.clone(), s.clone())
                }
            };
            if !depends_only_on(&u, &["x", "y", "k", "k1", "k2", "k3", "k4"])? {
                return Err(params_error(id, "u may depend on x and y only"));
            }
            constraints.push(("A equation".into(), a_equation(&a)));
            constraints.push((
                "invariant equation".into(),
                d(&u, "x") - a.clone() * d(&u, "y"),
            ));
            let q = s_coefficients(&a, &u);
            constraints.push((
                "S general equation".into(),
                subst_var(&s_general_equation(&q, &s), "u", &u)?,
            ));
            let g = d(&u, "y") * (sq(&a) + int(1)) * subst_var(&s, "u", &u)?;
            let f = f_coefficient(&a, &g);
            VectorField::new(a, int(1), g, e * f)
        }
    };
    if id != FamilyId::CL {
        let (a, g, psi) = (&field.xi[0], &field.phi[0], &field.phi[1]);
        constraints.push((
            "F coefficient".into(),
            psi.clone() - Expr::sym("E") * f_coefficient(a, g),
        ));
        constraints.push(("G first-order equation".into(), g_first_equation(a, g)));
        constraints.push(("G second-order equation".into(), g_second_equation(a, g)));
        constraints.push(("A equation".into(), a_equation(a)));
    }
    let field = field.map(|c| crate::symkernel::canonical(c).unwrap_or_else(|_| c.clone()));
    Ok(GeneratorFamily {
        id,
        field,
        bindings,
        constraints,
        classical_multiplier: multiplier,
    })
}

fn pde() -> &'static HeatPDE {
    static P: OnceLock<HeatPDE> = OnceLock::new();
    P.get_or_init(HeatPDE::new)
}

/// Generic nonclassical system, computed once.
pub fn nonclassical_system() -> Result<&'static DeterminingSystem, DetsysError> {
    static S: OnceLock<Result<DeterminingSystem, DetsysError>> = OnceLock::new();
    S.get_or_init(|| nonclassical_determining(pde()))
        .as_ref()
        .map_err(Clone::clone)
}

/// Generic classical system, computed once.
pub fn classical_system() -> Result<&'static DeterminingSystem, DetsysError> {
    static S: OnceLock<Result<DeterminingSystem, DetsysError>> = OnceLock::new();
    S.get_or_init(|| classical_determining(pde()))
        .as_ref()
        .map_err(Clone::clone)
}

/// Check the auxiliary constraints of a family under its bindings.
pub fn check_constraints(fam: &GeneratorFamily) -> Result<(), CatalogError> {
    let sub = fam.bindings.compile()?;
    for (name, c) in &fam.constraints {
        let r = sub.apply(&to_ratfn(c, PrimMode::Opaque)?)?;
        if !r.is_zero() {
            return Err(CatalogError::ConstraintViolated {
                family: fam.id,
                constraint: name.clone(),
                residual: r.to_expr().to_string(),
            });
        }
    }
    Ok(())
}

fn residual_report(
    family: FamilyId,
    label: &str,
    system: &DeterminingSystem,
    field: &VectorField,
    extra: &Bindings,
) -> Result<VerificationReport, CatalogError> {
    let b = system.field_bindings(field)?.extend(extra);
    let residuals = system.residual(&b)?;
    let nonvanishing: Vec<String> = residuals
        .iter()
        .filter(|r| !r.is_zero())
        .map(|r| r.to_expr().to_string())
        .collect();
    Ok(VerificationReport {
        family,
        instantiation: label.to_string(),
        system: format!("{:?}", system.kind).to_lowercase(),
        field: field.to_string(),
        residual_count: residuals.len(),
        pass: nonvanishing.is_empty(),
        nonvanishing,
    })
}

/// Constraints first, then the residual of the family's own system
/// (classical for `CL`, nonclassical otherwise).
pub fn verify_generator(
    fam: &GeneratorFamily,
    label: &str,
) -> Result<VerificationReport, CatalogError> {
    check_constraints(fam)?;
    let system = if fam.id.is_classical() {
        classical_system()?
    } else {
        nonclassical_system()?
    };
    residual_report(fam.id, label, system, &fam.field, &fam.bindings)
}

pub fn verify_family(
    id: FamilyId,
    inst: &Instantiation,
) -> Result<VerificationReport, CatalogError> {
    verify_generator(&build_family(id, &inst.params)?, &inst.label)
}

/// Residual of the classical system for the field times its multiplier
/// (or the field itself when none is known).
pub fn verify_classical(
    fam: &GeneratorFamily,
    label: &str,
) -> Result<VerificationReport, CatalogError> {
    let field = match &fam.classical_multiplier {
        Some(m) => fam.field.scale(m),
        None => fam.field.clone(),
    };
    residual_report(fam.id, label, classical_system()?, &field, &fam.bindings)
}

/// Nonclassical residual of an arbitrary field, without constraint checks.
pub fn verify_field(
    id: FamilyId,
    label: &str,
    field: &VectorField,
    extra: &Bindings,
) -> Result<VerificationReport, CatalogError> {
    residual_report(id, label, nonclassical_system()?, field, extra)
}

fn inst(label: &str, params: FamilyParams) -> Instantiation {
    Instantiation {
        label: label.to_string(),
        params,
    }
}

/// Standard instantiations: concrete ones and, where the family allows,
/// unspecified `mu`.
pub fn instantiations(id: FamilyId) -> Vec<Instantiation> {
    let base = FamilyParams::default;
    match id {
        FamilyId::CL => vec![
            inst("k1..k4 symbolic, mu unspecified", base()),
            inst(
                "k = (1, 2, 2, 3), mu = w^2",
                base().with_ks([1, 2, 2, 3]).with_mu("w^2"),
            ),
        ],
        FamilyId::CMP => vec![
            inst("k1..k4 symbolic, mu unspecified", base()),
            inst(
                "k = (1, 2, 2, 3), mu = w^2",
                base().with_ks([1, 2, 2, 3]).with_mu("w^2"),
            ),
        ],
        FamilyId::F1 => vec![inst("translation in y", base())],
        FamilyId::F2 | FamilyId::F3 => vec![
            inst("mu = w^2", base().with_mu("w^2")),
            inst("mu unspecified", base()),
        ],
        FamilyId::F4 => vec![
            inst(
                "g = y^2/2 + h(w), h unspecified",
                base().with_potential(Potential::Quadratic),
            ),
            inst(
                "g = y^2/2 + w^3",
                base().with_potential(Potential::Quadratic).with_aux("t^3"),
            ),
            inst("g_y = y + alpha(g), alpha unspecified", base()),
            inst("g_y = y + g", base().with_aux("t")),
        ],
        FamilyId::F5 => vec![
            inst("A = k", base().with_a(AChoice::Constant(Expr::sym("k")))),
            inst("A = 2", base().with_a(AChoice::Constant(int(2)))),
            inst("A Moebius, k1..k4 symbolic", base().with_a(AChoice::Mobius)),
            inst(
                "A = -y/x",
                base().with_a(AChoice::Mobius).with_ks([0, 0, 1, 0]),
            ),
            inst(
                "A implicit, nu unspecified",
                base().with_a(AChoice::Implicit),
            ),
            inst(
                "A implicit, nu = 0",
                base().with_a(AChoice::Implicit).with_aux("0"),
            ),
            inst(
                "A = (y + x)/(y - x)",
                base().with_a(AChoice::Explicit(px("(y + x)/(y - x)"))),
            ),
            inst("A unspecified", base()),
        ],
        FamilyId::F6 => vec![
            inst("k = 2, mu = w^2", base().with_k(2).with_mu("w^2")),
            inst("k symbolic, mu unspecified", base()),
        ],
        FamilyId::F7 => vec![
            inst("k = 1, mu unspecified", base().with_k(1)),
            inst("k = 3, mu = exp(w)", base().with_k(3).with_mu("exp(w)")),
            inst("k symbolic, mu unspecified", base()),
        ],
        FamilyId::F8 => vec![
            inst("Q_u = u + gamma(Q), gamma unspecified", base()),
            inst("Q_u = u + Q, k = 1", base().with_k(1).with_aux("t")),
            inst(
                "Q = u^2/2 + h(w), h unspecified",
                base().with_potential(Potential::Quadratic),
            ),
        ],
        FamilyId::F9 => vec![
            inst("A = -y/x, u = y/x, S = mu/(1+u^2), mu unspecified", base()),
            inst("A = -y/x, u = y/x, S = w^2/(1+u^2)", base().with_mu("w^2")),
            inst(
                "A = k, u = k x + y, S = u mu, mu unspecified",
                base()
                    .with_a(AChoice::Constant(Expr::sym("k")))
                    .with_invariant("k*x + y", "u*mu"),
            ),
        ],
    }
}

/// The `A` equation evaluated for an explicit `A`, or for the implicit
/// branch `A = (B + 1)/(B - 1)` with `y - x B = nu(B)`.
pub enum AInput {
    Explicit(Expr),
    /// Concrete body of `nu` in `t`, or `None` for unspecified `nu`.
    Implicit(Option<Expr>),
}

pub fn check_a_equation(input: &AInput) -> Result<bool, CatalogError> {
    match input {
        AInput::Explicit(a) => Ok(vanishes(&a_equation(a), &Bindings::new())?),
        AInput::Implicit(nu) => {
            let mut b = Bindings::new();
            if let Some(body) = nu {
                b = b.function("nu", &["t"], body.clone());
            }
            if !zero_under(&px("x + D(nu, B, 1)"), &b)?.is_none() {
                for r in implicit_rules() {
                    b = b.rule(r);
                }
                return Ok(vanishes(&a_equation(&px("(B + 1)/(B - 1)")), &b)?);
            }
            Err(CatalogError::DegenerateImplicit)
        }
    }
}

/// `a` and `b` agree up to a factor free of the given function's
/// derivatives of order at least `min_order`.
pub fn proportional(
    a: &Expr,
    b: &Expr,
    function: &str,
    min_order: u32,
    sub: &Bindings,
) -> Result<bool, KernelError> {
    let s = sub.compile()?;
    let ra = s.apply(&to_ratfn(a, PrimMode::Opaque)?)?;
    let rb = s.apply(&to_ratfn(b, PrimMode::Opaque)?)?;
    if rb.is_zero() {
        return Ok(ra.is_zero());
    }
    if ra.is_zero() {
        return Ok(false);
    }
    let mut frozen = std::collections::HashMap::new();
    for atom in ra.atoms().into_iter().chain(rb.atoms()) {
        if let Atom::Func(app) = atom.atom() {
            if app.name == function && app.orders.iter().sum::<u32>() >= min_order {
                let n = frozen.len();
                frozen
                    .entry(atom)
                    .or_insert_with(|| RatFn::atom(AtomId::sym(&format!("#f{n}"))));
            }
        }
    }
    let ratio = ra.compose(&frozen)?.div(&rb.compose(&frozen)?)?;
    for v in frozen.values() {
        let id = *v.atoms().iter().next().expect("frozen symbol");
        if !ratio.diff(id)?.is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Left side of the potential equation for `T`.
pub fn t_equation(tx: &Expr, ty: &Expr, txx: &Expr, txy: &Expr, tyy: &Expr) -> Expr {
    tx * &(ty * txx) - (sq(tx) - sq(ty)) * txy.clone() - tx * &(ty * tyy)
        + Expr::pow(sq(tx) + sq(ty), 2)
}

/// Monge-Ampere equation for the Legendre transform `L(a, b)`.
pub fn pre_shift_monge_ampere(l: &Expr) -> Expr {
    let (la, lb) = (d(l, "a"), d(l, "b"));
    let (laa, lab, lbb) = (d(&la, "a"), d(&la, "b"), d(&lb, "b"));
    let rho2 = Expr::pow(px("a^2 + b^2"), 2);
    let ab = px("a*b");
    laa.clone() * lbb.clone() - sq(&lab) - ab.clone() / rho2.clone() * laa
        + px("a^2 - b^2") / rho2.clone() * lab
        + ab / rho2 * lbb
}

fn hessian_det(v: &Expr) -> Expr {
    let (va, vb) = (d(v, "a"), d(v, "b"));
    d(&va, "a") * d(&vb, "b") - sq(&d(&va, "b"))
}

/// Outcome of the chain from the `B` equation to the shifted
/// Monge-Ampere equation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MongeAmpereChain {
    /// First potential equation with `B = T_y/T_x` equals the `T`
    /// equation divided by `T_x^3`.
    pub t_equation: bool,
    /// The `T` equation becomes the pre-shift Monge-Ampere equation.
    pub legendre: bool,
    /// `V = L - arctan(a/b)/2` gives `V_aa V_bb - V_ab^2 = -1/(a^2+b^2)^2`.
    pub shift: bool,
    /// The same shift with right side `-1/(4 (a^2+b^2)^2)`.
    pub shift_quarter: bool,
    /// Shift by `arctan(b/a)/2` instead (must fail).
    pub negative_control: bool,
}

impl MongeAmpereChain {
    pub fn holds(&self) -> bool {
        self.t_equation && self.legendre && self.shift && !self.negative_control
    }
}

fn shift_residual(shift: &str, constant: Expr) -> Result<bool, KernelError> {
    let v = px("V");
    let l = v.clone() + px(shift);
    let lhs = pre_shift_monge_ampere(&l);
    let rhs = hessian_det(&v) + constant / Expr::pow(px("a^2 + b^2"), 2);
    Ok(to_ratfn(&(lhs - rhs), PrimMode::Opaque)?.is_zero())
}

pub fn check_monge_ampere_chain() -> Result<MongeAmpereChain, CatalogError> {
    let t = px("T");
    let (tx, ty) = (d(&t, "x"), d(&t, "y"));
    let teq = t_equation(&tx, &ty, &d(&tx, "x"), &d(&tx, "y"), &d(&ty, "y"));
    let b = ty.clone() / tx.clone();
    let first = tx.clone() * Expr::pow(sq(&b) + int(1), 2) - (d(&b, "x") + b.clone() * d(&b, "y"));
    let t_ok = vanishes(&(first * Expr::pow(tx.clone(), 3) - teq), &Bindings::new())?;

    let l = px("L");
    let (la, lb) = (d(&l, "a"), d(&l, "b"));
    let (laa, lab, lbb) = (d(&la, "a"), d(&la, "b"), d(&lb, "b"));
    let j = laa.clone() * lbb.clone() - sq(&lab);
    let teq_l = t_equation(
        &px("a"),
        &px("b"),
        &(lbb / j.clone()),
        &(-lab / j.clone()),
        &(laa / j.clone()),
    );
    let rho2 = Expr::pow(px("a^2 + b^2"), 2);
    let legendre = vanishes(
        &(teq_l * j / rho2 - pre_shift_monge_ampere(&l)),
        &Bindings::new(),
    )?;

    Ok(MongeAmpereChain {
        t_equation: t_ok,
        legendre,
        shift: shift_residual("arctan(a/b)/2", int(1))?,
        shift_quarter: shift_residual("arctan(a/b)/2", Expr::rational(1, 4))?,
        negative_control: shift_residual("arctan(b/a)/2", int(1))?,
    })
}

/// Which Abel branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AbelCase {
    /// `g_y = y + alpha(g)`, `z = alpha(g)`, `v = y + alpha(g)`.
    G,
    /// `Q_u = u + gamma(Q)`, `s = gamma(Q)`, `V = u + gamma(Q)`.
    Q,
}

/// With `Y(t)` the inverse of the potential (`(Y + c(t)) Y' = 1`), the
/// substitution `z = c(t)`, `v = Y + c(t)` gives `v dv/dz - v = beta(z)`
/// where `beta(c(t)) c'(t) = 1`. With `coeff` given, `c` is concrete.
fn abel_identity(function: &str, coeff: Option<Expr>) -> Result<bool, KernelError> {
    let mut b = Bindings::new().rule(DerivativeRule {
        function: "Y".into(),
        params: vec!["t".into()],
        trigger: vec![1],
        rhs: px(&format!("1/(Y + {function}(t))")),
    });
    if let Some(body) = coeff {
        b = b.function(function, &["t"], body);
    }
    let c = px(&format!("{function}(t)"));
    let ct = d(&c, "t");
    let v = px("Y") + c;
    let dv_dz = d(&v, "t") / ct.clone();
    let beta = int(1) / ct;
    vanishes(&(v.clone() * dv_dz - v - beta), &b)
}

pub fn check_abel_reduction(which: AbelCase) -> Result<bool, CatalogError> {
    let name = match which {
        AbelCase::G => "alpha",
        AbelCase::Q => "gamma",
    };
    Ok(abel_identity(name, None)?)
}

/// `alpha(g) = g`: `beta = 1` and the canonical equation `v v' - v = 1`.
pub fn check_abel_concrete() -> Result<bool, CatalogError> {
    let b = Bindings::new().rule(DerivativeRule {
        function: "Y".into(),
        params: vec!["t".into()],
        trigger: vec![1],
        rhs: px("1/(Y + t)"),
    });
    let v = px("Y + t");
    Ok(vanishes(&(v.clone() * d(&v, "t") - v - int(1)), &b)?
        && abel_identity("alpha", Some(px("t")))?)
}

/// `S = p(u) mu(w)` turns the `S` equation into `mu (q1 p'' + q2 p' + q3 p)`.
pub fn check_separation() -> Result<bool, CatalogError> {
    let q = (px("q1"), px("q2"), px("q3"));
    let s = px("p*mu");
    let target =
        px("mu") * (q.0.clone() * px("p_uu") + q.1.clone() * px("p_u") + q.2.clone() * px("p"));
    let general = vanishes(&(s_general_equation(&q, &s) - target), &Bindings::new())?;
    let constant = vanishes(
        &(s_general_equation(&q, &px("mu")) - q.2.clone() * px("mu")),
        &Bindings::new(),
    )?;
    Ok(general && constant)
}

/// Substituting `G = U_y (A^2 + 1) S(U, w)` with `U_x = A U_y` into the
/// second-order `G` equation gives the general `S` equation up to a factor
/// free of `S`.
pub fn check_s_equation() -> Result<bool, CatalogError> {
    let a = px("A");
    let uf = px("U");
    let b = Bindings::new().rule(a_rule()).rule(DerivativeRule {
        function: "U".into(),
        params: vec!["x".into(), "y".into()],
        trigger: vec![1, 0],
        rhs: px("A*U_y"),
    });
    let s_at = subst_var(&px("S"), "u", &uf)?;
    let g = d(&uf, "y") * (sq(&a) + int(1)) * s_at;
    let lhs = g_second_equation(&a, &g);
    let q = s_coefficients(&a, &uf);
    let rhs = subst_var(&s_general_equation(&q, &px("S")), "u", &uf)?;
    Ok(proportional(&lhs, &rhs, "S", 0, &b)?)
}

/// The `B` equation, the `A` equation and the conservation form describe
/// the same condition.
pub fn check_b_forms() -> Result<bool, CatalogError> {
    let b = px("B");
    let a = px("(B + 1)/(B - 1)");
    let none = Bindings::new();
    Ok(
        proportional(&a_equation(&a), &b_equation(&b), "B", 1, &none)?
            && proportional(&b_conservation(&b), &b_equation(&b), "B", 1, &none)?,
    )
}

/// The three conservation forms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConservationForms {
    pub g_first: bool,
    pub h_equation: bool,
    pub s_equation: bool,
}

impl ConservationForms {
    pub fn holds(&self) -> bool {
        self.g_first && self.h_equation && self.s_equation
    }
}

pub fn check_conservation_forms() -> Result<ConservationForms, CatalogError> {
    let none = Bindings::new();
    let (a, g) = (px("A"), px("G"));
    let p = sq(&a) + int(1);
    let cons = d(&(g.clone() / p.clone()), "x") - d(&(a.clone() * g.clone() / p.clone()), "y");
    let g_first = vanishes(&(cons * p - g_first_equation(&a, &g)), &none)?;

    let h = px("H");
    let hy = d(&h, "y");
    let cons_h = d(&(int(1) / hy.clone()), "y") + d(&(h.clone() / hy.clone()), "w");
    let h_ok = vanishes(&(cons_h + h_equation(&h) / sq(&hy)), &none)?;

    let s = px("S");
    let su = d(&s, "u");
    let cons_s = d(&(int(1) / su.clone()), "u") + d(&(s.clone() / su.clone()), "w");
    let s_ok = vanishes(&(cons_s + s_equation(&s) / sq(&su)), &none)?;
    Ok(ConservationForms {
        g_first,
        h_equation: h_ok,
        s_equation: s_ok,
    })
}

/// `G = U_y (A^2 + 1) S(U, w)` with `U_x = A U_y` solves the first-order
/// `G` equation for arbitrary `A` and `S`.
pub fn check_g_structure() -> Result<bool, CatalogError> {
    let (a, uf) = (px("A"), px("U"));
    let b = Bindings::new().rule(DerivativeRule {
        function: "U".into(),
        params: vec!["x".into(), "y".into()],
        trigger: vec![1, 0],
        rhs: px("A*U_y"),
    });
    let g = d(&uf, "y") * (sq(&a) + int(1)) * subst_var(&px("S"), "u", &uf)?;
    Ok(vanishes(&g_first_equation(&a, &g), &b)?)
}

/// With unspecified `A` and `G`, the nonclassical system vanishes modulo
/// the `A` equation and the two `G` equations used as rewrite rules
/// (`A_xx`, `G_x` and `G_yy` solved for).
pub fn check_general_reduction() -> Result<bool, CatalogError> {
    let (a, g) = (px("A"), px("G"));
    let params: Vec<String> = ["x", "y", "w"].iter().map(|s| s.to_string()).collect();
    let c = (int(2) * &a * d(&a, "x") - d(&a, "y") * (sq(&a) - int(1))) / (sq(&a) + int(1));
    let gx_rule = DerivativeRule {
        function: "G".into(),
        params: params.clone(),
        trigger: vec![1, 0, 0],
        rhs: &a * d(&g, "y") + c * &g,
    };
    let partial = Bindings::new()
        .rule(a_rule())
        .rule(gx_rule.clone())
        .compile()?;
    let l = partial.apply(&to_ratfn(&g_second_equation(&a, &g), PrimMode::Opaque)?)?;
    let gyy = AtomId::func(
        "G",
        vec![0, 2, 0],
        vec![RatFn::sym("x"), RatFn::sym("y"), RatFn::sym("w")],
    );
    let z = AtomId::sym("#z");
    let lz = l.compose(&[(gyy, RatFn::atom(z))].into_iter().collect())?;
    let coef = lz.diff(z)?;
    let rest = lz.compose(&[(z, RatFn::zero())].into_iter().collect())?;
    let gyy_rule = DerivativeRule {
        function: "G".into(),
        params,
        trigger: vec![0, 2, 0],
        rhs: rest.neg().div(&coef)?.to_expr(),
    };
    let b = Bindings::new().rule(a_rule()).rule(gx_rule).rule(gyy_rule);
    let vf = VectorField::new(
        a.clone(),
        int(1),
        g.clone(),
        Expr::sym("E") * f_coefficient(&a, &g),
    );
    Ok(verify_field(FamilyId::F9, "A, G unspecified", &vf, &b)?.pass)
}

/// Deliberately broken fields: each must leave a nonzero residual.
pub fn negative_controls() -> Vec<(String, VectorField)> {
    vec![
        (
            "y-dependent G with the wrong E coefficient".into(),
            VectorField::new(int(0), int(1), px("y*mu"), px("y*mu_w*E")),
        ),
        (
            "mu d/dw without the E term".into(),
            VectorField::new(int(0), int(1), px("mu"), int(0)),
        ),
        (
            "A = y, which violates the A equation".into(),
            VectorField::new(px("y"), int(1), int(0), px("2*(0 - y)/(y^2 + 1)*E")),
        ),
        (
            "xi = w".into(),
            VectorField::new(px("w"), int(1), int(0), int(0)),
        ),
    ]
}
