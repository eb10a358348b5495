use std::collections::HashMap;

use super::expr::{Expr, FuncApp, JetCoord, Node, Primitive};

/// Differentiation variable: a plain indeterminate or a jet coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Sym(String),
    Jet(JetCoord),
}

impl Var {
    /// `"x"` is a symbol, `"w_xy"` a jet coordinate.
    pub fn parse(name: &str) -> Var {
        match name.split_once('_') {
            Some((dep, derivs)) => Var::Jet(JetCoord::new(dep, derivs)),
            None => Var::Sym(name.to_string()),
        }
    }

    pub fn to_expr(&self) -> Expr {
        match self {
            Var::Sym(s) => Expr::sym(s),
            Var::Jet(j) => Expr::new(Node::Jet(j.clone())),
        }
    }
}

impl From<&str> for Var {
    fn from(name: &str) -> Self {
        Var::parse(name)
    }
}

/// Structural derivative; total on every expression.
pub fn diff(e: &Expr, v: impl Into<Var>) -> Expr {
    let v = v.into();
    let mut memo = HashMap::new();
    d(e, &v, &mut memo)
}

fn d(e: &Expr, v: &Var, memo: &mut HashMap<*const Node, Expr>) -> Expr {
    let key = e.node() as *const Node;
    if let Some(hit) = memo.get(&key) {
        return hit.clone();
    }
    let out = match e.node() {
        Node::Const(_) => Expr::zero(),
        Node::Sym(s) => match v {
            Var::Sym(t) if t == s => Expr::one(),
            _ => Expr::zero(),
        },
        Node::Jet(j) => match v {
            Var::Jet(k) if k == j => Expr::one(),
            _ => Expr::zero(),
        },
        Node::Func(app) => {
            let mut terms = Vec::new();
            for (i, arg) in app.args.iter().enumerate() {
                let da = d(arg, v, memo);
                if da.is_const_zero() {
                    continue;
                }
                let mut orders = app.orders.clone();
                orders[i] += 1;
                let higher = Expr::new(Node::Func(FuncApp {
                    name: app.name.clone(),
                    orders,
                    args: app.args.clone(),
                }));
                terms.push(Expr::product(vec![higher, da]));
            }
            Expr::sum(terms)
        }
        Node::Add(ts) => Expr::sum(ts.iter().map(|t| d(t, v, memo)).collect()),
        Node::Mul(fs) => {
            let mut terms = Vec::new();
            for i in 0..fs.len() {
                let di = d(&fs[i], v, memo);
                if di.is_const_zero() {
                    continue;
                }
                let mut factors: Vec<Expr> = fs
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, f)| f.clone())
                    .collect();
                factors.push(di);
                terms.push(Expr::product(factors));
            }
            Expr::sum(terms)
        }
        Node::Pow(b, n) => {
            let db = d(b, v, memo);
            if db.is_const_zero() || *n == 0 {
                Expr::zero()
            } else {
                Expr::product(vec![Expr::int(*n), Expr::pow(b.clone(), n - 1), db])
            }
        }
        Node::Div(a, b) => {
            let da = d(a, v, memo);
            let db = d(b, v, memo);
            let first = Expr::quot(da, b.clone());
            if db.is_const_zero() {
                first
            } else {
                let second =
                    Expr::quot(Expr::product(vec![a.clone(), db]), Expr::pow(b.clone(), 2));
                Expr::sum(vec![first, -second])
            }
        }
        Node::Prim(p, a) => {
            let da = d(a, v, memo);
            if da.is_const_zero() {
                Expr::zero()
            } else {
                Expr::product(vec![outer(*p, a), da])
            }
        }
    };
    memo.insert(key, out.clone());
    out
}

fn outer(p: Primitive, a: &Expr) -> Expr {
    let sq = Expr::pow(a.clone(), 2);
    match p {
        Primitive::Sqrt => Expr::quot(
            Expr::one(),
            Expr::product(vec![Expr::int(2), Expr::prim(Primitive::Sqrt, a.clone())]),
        ),
        Primitive::Exp => Expr::prim(Primitive::Exp, a.clone()),
        Primitive::Ln => Expr::quot(Expr::one(), a.clone()),
        Primitive::Arctan => Expr::quot(Expr::one(), Expr::sum(vec![Expr::one(), sq])),
        Primitive::Artanh => Expr::quot(Expr::one(), Expr::sum(vec![Expr::one(), -sq])),
        Primitive::Erf => Expr::quot(
            Expr::product(vec![Expr::int(2), Expr::prim(Primitive::Exp, -sq)]),
            Expr::prim(Primitive::Sqrt, Expr::sym("pi")),
        ),
    }
}
