use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Opaque elementary functions. They survive in symbolic form only until
/// differentiation removes them; the numeric path evaluates them directly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Primitive {
    Sqrt,
    Exp,
    Ln,
    Arctan,
    Artanh,
    Erf,
}

impl Primitive {
    pub const ALL: [Primitive; 6] = [
        Primitive::Sqrt,
        Primitive::Exp,
        Primitive::Ln,
        Primitive::Arctan,
        Primitive::Artanh,
        Primitive::Erf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Sqrt => "sqrt",
            Primitive::Exp => "exp",
            Primitive::Ln => "ln",
            Primitive::Arctan => "arctan",
            Primitive::Artanh => "artanh",
            Primitive::Erf => "erf",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// A jet coordinate such as `w_xy`: a dependent variable and the sorted
/// multiset of independent variables it is differentiated by.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JetCoord {
    pub dep: String,
    pub derivs: String,
}

impl JetCoord {
    pub fn new(dep: &str, derivs: &str) -> Self {
        let mut chars: Vec<char> = derivs.chars().collect();
        chars.sort_unstable();
        JetCoord {
            dep: dep.to_string(),
            derivs: chars.into_iter().collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.derivs.chars().count()
    }

    /// The coordinate one order higher in direction `var`.
    pub fn extend(&self, var: &str) -> Self {
        JetCoord::new(&self.dep, &format!("{}{}", self.derivs, var))
    }

    pub fn count(&self, var: char) -> usize {
        self.derivs.chars().filter(|&c| c == var).count()
    }
}

/// Application of an unspecified function, possibly differentiated:
/// `orders[i]` is the number of derivatives taken in the i-th slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FuncApp {
    pub name: String,
    pub orders: Vec<u32>,
    pub args: Vec<Expr>,
}

impl FuncApp {
    pub fn is_underived(&self) -> bool {
        self.orders.iter().all(|&o| o == 0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Const(BigRational),
    Sym(String),
    Jet(JetCoord),
    Func(FuncApp),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Expr, i64),
    Div(Expr, Expr),
    Prim(Primitive, Expr),
}

/// Immutable, cheaply clonable symbolic expression.
///
/// `Expr::new` stores exactly the node it is given. The helpers `sum`,
/// `product`, `pow`, `quot` and the arithmetic operators fold trivial
/// identities (zeros, ones, constant products) and flatten nested sums and
/// products; nothing else is rewritten.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Expr(Arc<Node>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl Expr {
    pub fn new(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(value: BigRational) -> Self {
        Expr::new(Node::Const(value))
    }

    pub fn int(value: i64) -> Self {
        Expr::constant(BigRational::from_integer(BigInt::from(value)))
    }

    pub fn rational(num: i64, den: i64) -> Self {
        Expr::constant(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn zero() -> Self {
        Expr::int(0)
    }

    pub fn one() -> Self {
        Expr::int(1)
    }

    pub fn sym(name: &str) -> Self {
        Expr::new(Node::Sym(name.to_string()))
    }

    pub fn jet(dep: &str, derivs: &str) -> Self {
        Expr::new(Node::Jet(JetCoord::new(dep, derivs)))
    }

    /// Underived application `name(args)`.
    pub fn func(name: &str, args: Vec<Expr>) -> Self {
        let orders = vec![0; args.len()];
        Expr::func_deriv(name, args, orders)
    }

    pub fn func_deriv(name: &str, args: Vec<Expr>, orders: Vec<u32>) -> Self {
        assert_eq!(
            args.len(),
            orders.len(),
            "one derivative order per argument"
        );
        Expr::new(Node::Func(FuncApp {
            name: name.to_string(),
            orders,
            args,
        }))
    }

    pub fn prim(p: Primitive, arg: Expr) -> Self {
        Expr::new(Node::Prim(p, arg))
    }

    pub fn as_const(&self) -> Option<&BigRational> {
        match self.node() {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_const_zero(&self) -> bool {
        self.as_const().is_some_and(|c| c.is_zero())
    }

    pub fn is_const_one(&self) -> bool {
        self.as_const().is_some_and(|c| c.is_one())
    }

    pub fn sum(terms: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(terms.len());
        let mut constant = BigRational::zero();
        for t in terms {
            match t.node() {
                Node::Const(c) => constant += c,
                Node::Add(inner) => {
                    for u in inner {
                        match u.node() {
                            Node::Const(c) => constant += c,
                            _ => flat.push(u.clone()),
                        }
                    }
                }
                _ => flat.push(t),
            }
        }
        if !constant.is_zero() {
            flat.push(Expr::constant(constant));
        }
        match flat.len() {
            0 => Expr::zero(),
            1 => flat.pop().unwrap(),
            _ => Expr::new(Node::Add(flat)),
        }
    }

    pub fn product(factors: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(factors.len());
        let mut constant = BigRational::one();
        for f in factors {
            match f.node() {
                Node::Const(c) => constant *= c,
                Node::Mul(inner) => {
                    for u in inner {
                        match u.node() {
                            Node::Const(c) => constant *= c,
                            _ => flat.push(u.clone()),
                        }
                    }
                }
                _ => flat.push(f),
            }
        }
        if constant.is_zero() {
            return Expr::zero();
        }
        if flat.is_empty() {
            return Expr::constant(constant);
        }
        if !constant.is_one() {
            flat.insert(0, Expr::constant(constant));
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Expr::new(Node::Mul(flat))
        }
    }

    pub fn pow(base: Expr, exp: i64) -> Expr {
        match (base.node(), exp) {
            (_, 0) => Expr::one(),
            (_, 1) => base,
            (Node::Const(c), e) if !(c.is_zero() && e < 0) => Expr::constant(rational_pow(c, e)),
            (Node::Pow(inner, e1), e) => Expr::pow(inner.clone(), e1 * e),
            _ => Expr::new(Node::Pow(base, exp)),
        }
    }

    pub fn quot(num: Expr, den: Expr) -> Expr {
        if den.is_const_one() {
            return num;
        }
        if num.is_const_zero() {
            return Expr::zero();
        }
        match (num.node(), den.node()) {
            (Node::Const(a), Node::Const(b)) if !b.is_zero() => Expr::constant(a / b),
            (_, Node::Const(b)) if !b.is_zero() => {
                Expr::product(vec![Expr::constant(b.recip()), num])
            }
            _ => Expr::new(Node::Div(num, den)),
        }
    }

    /// Structural normalization used by the parser round trip: flatten sums
    /// and products, gather constant factors in front, fold constant
    /// quotients and unwrap singletons.
    pub fn normalized(&self) -> Expr {
        match self.node() {
            Node::Const(_) | Node::Sym(_) | Node::Jet(_) => self.clone(),
            Node::Func(f) => Expr::new(Node::Func(FuncApp {
                name: f.name.clone(),
                orders: f.orders.clone(),
                args: f.args.iter().map(Expr::normalized).collect(),
            })),
            Node::Add(ts) => {
                let mut flat = Vec::new();
                for t in ts {
                    let n = t.normalized();
                    match n.node() {
                        Node::Add(inner) => flat.extend(inner.iter().cloned()),
                        _ => flat.push(n),
                    }
                }
                match flat.len() {
                    0 => Expr::zero(),
                    1 => flat.pop().unwrap(),
                    _ => Expr::new(Node::Add(flat)),
                }
            }
            Node::Mul(fs) => {
                let mut flat = Vec::new();
                let mut constant = BigRational::one();
                let mut saw_const = false;
                for f in fs {
                    let n = f.normalized();
                    let parts: Vec<Expr> = match n.node() {
                        Node::Mul(inner) => inner.clone(),
                        _ => vec![n],
                    };
                    for p in parts {
                        match p.node() {
                            Node::Const(c) => {
                                constant *= c;
                                saw_const = true;
                            }
                            _ => flat.push(p),
                        }
                    }
                }
                if saw_const && constant.is_zero() {
                    return Expr::zero();
                }
                if !constant.is_one() {
                    flat.insert(0, Expr::constant(constant));
                }
                match flat.len() {
                    0 => Expr::one(),
                    1 => flat.pop().unwrap(),
                    _ => Expr::new(Node::Mul(flat)),
                }
            }
            Node::Pow(b, e) => Expr::new(Node::Pow(b.normalized(), *e)),
            Node::Div(a, b) => {
                let (a, b) = (a.normalized(), b.normalized());
                match (a.node(), b.node()) {
                    (Node::Const(x), Node::Const(y)) if !y.is_zero() => Expr::constant(x / y),
                    _ => Expr::new(Node::Div(a, b)),
                }
            }
            Node::Prim(p, a) => Expr::prim(*p, a.normalized()),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + match self.node() {
            Node::Const(_) | Node::Sym(_) | Node::Jet(_) => 0,
            Node::Func(f) => f.args.iter().map(Expr::size).sum(),
            Node::Add(v) | Node::Mul(v) => v.iter().map(Expr::size).sum(),
            Node::Pow(b, _) => b.size(),
            Node::Div(a, b) => a.size() + b.size(),
            Node::Prim(_, a) => a.size(),
        }
    }

    /// Visit every node, parents before children.
    pub fn walk(&self, visit: &mut dyn FnMut(&Expr)) {
        visit(self);
        match self.node() {
            Node::Const(_) | Node::Sym(_) | Node::Jet(_) => {}
            Node::Func(f) => f.args.iter().for_each(|a| a.walk(visit)),
            Node::Add(v) | Node::Mul(v) => v.iter().for_each(|a| a.walk(visit)),
            Node::Pow(b, _) => b.walk(visit),
            Node::Div(a, b) => {
                a.walk(visit);
                b.walk(visit);
            }
            Node::Prim(_, a) => a.walk(visit),
        }
    }

    pub fn contains_primitive(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if matches!(e.node(), Node::Prim(..)) {
                found = true;
            }
        });
        found
    }

    /// Free symbol names (plain indeterminates only).
    pub fn symbols(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Node::Sym(s) = e.node() {
                if !out.contains(s) {
                    out.push(s.clone());
                }
            }
        });
        out.sort();
        out
    }
}

pub(crate) fn rational_pow(c: &BigRational, e: i64) -> BigRational {
    let mag = u32::try_from(e.unsigned_abs()).expect("exponent fits in u32");
    let p = num_traits::pow::pow(c.clone(), mag as usize);
    if e < 0 {
        p.recip()
    } else {
        p
    }
}

impl From<i64> for Expr {
    fn from(v: i64) -> Self {
        Expr::int(v)
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::sum(vec![self, rhs])
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::sum(vec![self, -rhs])
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::product(vec![self, rhs])
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::quot(self, rhs)
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::product(vec![Expr::int(-1), self])
    }
}

macro_rules! mixed_ops {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr<&Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                self.clone().$m(rhs.clone())
            }
        }
        impl $tr<&Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                self.$m(rhs.clone())
            }
        }
        impl $tr<Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                self.clone().$m(rhs)
            }
        }
    )*};
}

mixed_ops!(Add add, Sub sub, Mul mul, Div div);

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -self.clone()
    }
}

// Rendering. Precedence levels: sum 1, product/quotient 2, unary minus 3,
// power 4, atoms 5.

fn is_negative_leading(e: &Expr) -> bool {
    match e.node() {
        Node::Const(c) => c.is_negative(),
        Node::Mul(fs) => fs
            .first()
            .and_then(Expr::as_const)
            .is_some_and(|c| c.is_negative()),
        _ => false,
    }
}

fn negate_for_display(e: &Expr) -> Expr {
    match e.node() {
        Node::Const(c) => Expr::constant(-c),
        Node::Mul(fs) => {
            let c = -fs[0].as_const().unwrap();
            let mut rest: Vec<Expr> = fs[1..].to_vec();
            if !c.is_one() {
                rest.insert(0, Expr::constant(c));
            }
            if rest.len() == 1 {
                rest.pop().unwrap()
            } else {
                Expr::new(Node::Mul(rest))
            }
        }
        _ => unreachable!(),
    }
}

fn write_const(f: &mut fmt::Formatter<'_>, c: &BigRational, as_factor: bool) -> fmt::Result {
    let plain = c.is_integer() && !c.is_negative();
    if plain || !as_factor {
        if c.is_integer() {
            write!(f, "{}", c.numer())
        } else {
            write!(f, "{}/{}", c.numer(), c.denom())
        }
    } else if c.is_integer() {
        write!(f, "({})", c.numer())
    } else {
        write!(f, "({}/{})", c.numer(), c.denom())
    }
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self.node() {
            Node::Const(c) => {
                if c.is_integer() && !c.is_negative() {
                    5
                } else if c.is_integer() {
                    3
                } else {
                    2
                }
            }
            Node::Sym(_) | Node::Jet(_) | Node::Func(_) | Node::Prim(..) => 5,
            Node::Add(v) if v.is_empty() => 5,
            Node::Add(_) => 1,
            Node::Mul(v) if v.is_empty() => 5,
            Node::Mul(v) if v.len() == 1 => v[0].precedence(),
            Node::Mul(_) => {
                if is_negative_leading(self) {
                    3
                } else {
                    2
                }
            }
            Node::Div(..) => 2,
            Node::Pow(..) => 4,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }

    fn fmt_factor(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => write_const(f, c, true),
            // A quotient inside a product must be bracketed: `a*(b/c)`.
            Node::Div(..) => write!(f, "({self})"),
            _ => self.fmt_child(f, 3),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => write_const(f, c, false),
            Node::Sym(s) => write!(f, "{s}"),
            Node::Jet(j) => write!(f, "{}_{}", j.dep, j.derivs),
            Node::Func(app) => {
                if app.is_underived() {
                    write!(f, "{}(", app.name)?;
                    for (i, a) in app.args.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        write!(f, "{a}")?;
                    }
                    write!(f, ")")
                } else {
                    write!(f, "D({}", app.name)?;
                    for a in &app.args {
                        write!(f, ", {a}")?;
                    }
                    for o in &app.orders {
                        write!(f, ", {o}")?;
                    }
                    write!(f, ")")
                }
            }
            Node::Prim(p, a) => write!(f, "{}({a})", p.name()),
            Node::Add(ts) => {
                if ts.is_empty() {
                    return write!(f, "0");
                }
                for (i, t) in ts.iter().enumerate() {
                    if i == 0 {
                        t.fmt_child(f, 2)?;
                    } else if is_negative_leading(t) {
                        write!(f, " - ")?;
                        negate_for_display(t).fmt_child(f, 2)?;
                    } else {
                        write!(f, " + ")?;
                        t.fmt_child(f, 2)?;
                    }
                }
                Ok(())
            }
            Node::Mul(fs) => {
                if fs.is_empty() {
                    return write!(f, "1");
                }
                if fs.len() == 1 {
                    return write!(f, "{}", fs[0]);
                }
                let mut rest: &[Expr] = fs;
                if let Some(c) = fs[0].as_const() {
                    if (-c).is_one() {
                        write!(f, "-")?;
                        rest = &fs[1..];
                        if rest.len() == 1 {
                            return rest[0].fmt_child(f, 4);
                        }
                        for (i, x) in rest.iter().enumerate() {
                            if i > 0 {
                                write!(f, "*")?;
                            }
                            // A bare unary minus binds tighter than `*`, so the
                            // leading factor is printed at power level.
                            if i == 0 {
                                match x.node() {
                                    Node::Div(..) => write!(f, "({x})")?,
                                    _ => x.fmt_child(f, 4)?,
                                }
                            } else {
                                x.fmt_factor(f)?;
                            }
                        }
                        return Ok(());
                    } else if c.is_integer() && c.is_negative() {
                        write!(f, "{}", c.numer())?;
                        rest = &fs[1..];
                        for x in rest {
                            write!(f, "*")?;
                            x.fmt_factor(f)?;
                        }
                        return Ok(());
                    }
                }
                for (i, x) in rest.iter().enumerate() {
                    if i > 0 {
                        write!(f, "*")?;
                    }
                    x.fmt_factor(f)?;
                }
                Ok(())
            }
            Node::Div(a, b) => {
                match a.node() {
                    Node::Const(c) if !(c.is_integer() && !c.is_negative()) => write!(f, "({a})")?,
                    _ => a.fmt_child(f, 2)?,
                }
                write!(f, "/")?;
                match b.node() {
                    Node::Const(c) if c.is_integer() && !c.is_negative() => write!(f, "{b}"),
                    _ => b.fmt_child(f, 4),
                }
            }
            Node::Pow(b, e) => {
                match b.node() {
                    Node::Sym(_) | Node::Jet(_) | Node::Func(_) | Node::Prim(..) => {
                        write!(f, "{b}")?
                    }
                    Node::Const(c) if c.is_integer() && !c.is_negative() => write!(f, "{b}")?,
                    _ => write!(f, "({b})")?,
                }
                if *e < 0 {
                    write!(f, "^({e})")
                } else {
                    write!(f, "^{e}")
                }
            }
        }
    }
}
