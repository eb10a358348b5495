use std::collections::HashMap;

use super::expr::{Expr, Node, Primitive};
use super::KernelError;
use crate::odesolve::special;

const TINY: f64 = 1e-300;

/// Floating-point evaluation. Keys are indeterminate names and jet names
/// such as `w_x`; `pi` defaults to its numeric value.
pub fn eval_numeric(e: &Expr, point: &HashMap<String, f64>) -> Result<f64, KernelError> {
    let mut memo = HashMap::new();
    ev(e, point, &mut memo)
}

fn ev(
    e: &Expr,
    point: &HashMap<String, f64>,
    memo: &mut HashMap<*const Node, f64>,
) -> Result<f64, KernelError> {
    let key = e.node() as *const Node;
    if let Some(v) = memo.get(&key) {
        return Ok(*v);
    }
    let v = match e.node() {
        Node::Const(c) => rational_to_f64(c),
        Node::Sym(s) => match point.get(s) {
            Some(v) => *v,
            None if s == "pi" => std::f64::consts::PI,
            None => return Err(KernelError::Unbound(s.clone())),
        },
        Node::Jet(j) => {
            let name = format!("{}_{}", j.dep, j.derivs);
            *point.get(&name).ok_or(KernelError::Unbound(name))?
        }
        Node::Func(_) => return Err(KernelError::Unbound(e.to_string())),
        Node::Add(ts) => {
            let mut s = 0.0;
            for t in ts {
                s += ev(t, point, memo)?;
            }
            s
        }
        Node::Mul(fs) => {
            let mut p = 1.0;
            for f in fs {
                p *= ev(f, point, memo)?;
            }
            p
        }
        Node::Pow(b, n) => {
            let b = ev(b, point, memo)?;
            if *n < 0 && b.abs() < TINY {
                return Err(KernelError::NumericSingularity(e.to_string()));
            }
            b.powi(i32::try_from(*n).map_err(|_| KernelError::ExponentTooLarge(*n))?)
        }
        Node::Div(a, b) => {
            let d = ev(b, point, memo)?;
            if d.abs() < TINY {
                return Err(KernelError::NumericSingularity(e.to_string()));
            }
            ev(a, point, memo)? / d
        }
        Node::Prim(p, a) => {
            let x = ev(a, point, memo)?;
            let bad = || KernelError::NumericSingularity(e.to_string());
            match p {
                Primitive::Sqrt if x < 0.0 => return Err(bad()),
                Primitive::Sqrt => x.sqrt(),
                Primitive::Exp => x.exp(),
                Primitive::Ln if x <= 0.0 => return Err(bad()),
                Primitive::Ln => x.ln(),
                Primitive::Arctan => special::arctan(x),
                Primitive::Artanh => special::artanh(x).map_err(|_| bad())?,
                Primitive::Erf => special::erf(x),
            }
        }
    };
    memo.insert(key, v);
    Ok(v)
}

pub(crate) fn rational_to_f64(c: &num_rational::BigRational) -> f64 {
    use num_traits::ToPrimitive;
    c.to_f64().unwrap_or(f64::NAN)
}
