use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::{Expr, FuncApp, Node, Primitive};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
}

/// Signature of a declared unspecified function, e.g. `A(x, y)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDecl {
    pub name: String,
    pub args: Vec<String>,
}

/// Declarations file: independent and dependent variables plus the
/// unspecified functions that may appear in parsed text.
///
/// ```json
/// { "independent": ["x", "y"], "dependent": ["w", "E"],
///   "functions": [ { "name": "A", "args": ["x", "y"] } ] }
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Declarations {
    #[serde(default)]
    pub independent: Vec<String>,
    #[serde(default)]
    pub dependent: Vec<String>,
    #[serde(default)]
    pub functions: Vec<FunctionDecl>,
}

impl Declarations {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn with_function(mut self, name: &str, args: &[&str]) -> Self {
        self.functions.push(FunctionDecl {
            name: name.to_string(),
            args: args.iter().map(|s| s.to_string()).collect(),
        });
        self
    }
}

/// Parse without declarations: any `name(...)` that is not a primitive is an
/// unspecified function, and every `a_xy` is a jet coordinate.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    Parser::new(text, None).run()
}

/// Parse against declarations. Applications of undeclared names are
/// rejected, bare declared function names expand to their full application
/// (`A` becomes `A(x, y)`), and `A_x` denotes a partial derivative.
pub fn parse_with(text: &str, decls: &Declarations) -> Result<Expr, ParseError> {
    Parser::new(text, Some(decls)).run()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigInt),
    Ident(String),
    Sub(String, String),
    Op(char),
    End,
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    src_len: usize,
    decls: Option<&'a Declarations>,
    text: &'a str,
}

fn syntax(offset: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        offset,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                i += 1;
            }
            let n: BigInt = text[start..i].parse().expect("digits");
            out.push((Tok::Num(n), start));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < bytes.len() && (bytes[i] as char).is_ascii_alphanumeric() {
                i += 1;
            }
            let ident = text[start..i].to_string();
            if i < bytes.len() && bytes[i] == b'_' {
                let us = i;
                i += 1;
                let dstart = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_alphabetic() {
                    i += 1;
                }
                if i == dstart {
                    return Err(syntax(us, "expected derivative letters after `_`"));
                }
                out.push((Tok::Sub(ident, text[dstart..i].to_string()), start));
            } else {
                out.push((Tok::Ident(ident), start));
            }
        } else if "+-*/^(),".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else {
            return Err(syntax(i, format!("unexpected character `{c}`")));
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, decls: Option<&'a Declarations>) -> Self {
        Parser {
            toks: Vec::new(),
            pos: 0,
            src_len: text.len(),
            decls,
            text,
        }
    }

    fn run(mut self) -> Result<Expr, ParseError> {
        self.toks = lex(self.text)?;
        let e = self.expr()?;
        match self.peek() {
            Tok::End => Ok(e),
            _ => Err(syntax(self.offset(), "unexpected trailing input")),
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.src_len, |t| t.1)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, op: char) -> bool {
        if *self.peek() == Tok::Op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<(), ParseError> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(syntax(self.offset(), format!("expected `{op}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat('+') {
                terms.push(self.term()?);
            } else if self.eat('-') {
                let t = self.term()?;
                terms.push(negate_literal(t));
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Expr::new(Node::Add(terms))
        })
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut factors = vec![self.unary()?];
        loop {
            if self.eat('*') {
                factors.push(self.unary()?);
            } else if *self.peek() == Tok::Op('/') {
                let at = self.offset();
                self.bump();
                let rhs = self.unary()?;
                let lhs = collapse_product(std::mem::take(&mut factors));
                let q = match (lhs.node(), rhs.node()) {
                    (Node::Const(a), Node::Const(b)) => {
                        if b.is_zero() {
                            return Err(syntax(at, "division by the literal zero"));
                        }
                        Expr::constant(a / b)
                    }
                    _ => Expr::new(Node::Div(lhs, rhs)),
                };
                factors.push(q);
            } else {
                break;
            }
        }
        Ok(collapse_product(factors))
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            let inner = self.unary()?;
            return Ok(negate_literal(inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let at = self.offset();
            let e = self.unary()?;
            let exp = e
                .as_const()
                .filter(|c| c.is_integer())
                .and_then(|c| c.to_integer().to_i64())
                .ok_or_else(|| syntax(at, "exponent must be an integer literal"))?;
            return Ok(Expr::new(Node::Pow(base, exp)));
        }
        Ok(base)
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut args = Vec::new();
        if self.eat(')') {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(')') {
                return Ok(args);
            }
            self.expect(',')?;
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(n) => Ok(Expr::constant(BigRational::from_integer(n))),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Sub(base, derivs) => self.subscripted(&base, &derivs, at),
            Tok::Ident(name) => {
                if *self.peek() == Tok::Op('(') {
                    self.bump();
                    let args = self.args()?;
                    self.application(&name, args, at)
                } else if let Some(decl) = self.decls.and_then(|d| d.function(&name)) {
                    Ok(Expr::func(
                        &name,
                        decl.args.iter().map(|a| Expr::sym(a)).collect(),
                    ))
                } else {
                    Ok(Expr::sym(&name))
                }
            }
            Tok::End => Err(syntax(at, "unexpected end of input")),
            Tok::Op(c) => Err(syntax(at, format!("unexpected `{c}`"))),
        }
    }

    fn subscripted(&self, base: &str, derivs: &str, at: usize) -> Result<Expr, ParseError> {
        if let Some(decl) = self.decls.and_then(|d| d.function(base)) {
            let mut orders = vec![0u32; decl.args.len()];
            for ch in derivs.chars() {
                let slot = decl
                    .args
                    .iter()
                    .position(|a| a.len() == 1 && a.starts_with(ch))
                    .ok_or_else(|| syntax(at, format!("`{base}` has no argument `{ch}`")))?;
                orders[slot] += 1;
            }
            let args = decl.args.iter().map(|a| Expr::sym(a)).collect();
            return Ok(Expr::func_deriv(base, args, orders));
        }
        Ok(Expr::jet(base, derivs))
    }

    fn application(&self, name: &str, args: Vec<Expr>, at: usize) -> Result<Expr, ParseError> {
        if let Some(p) = Primitive::from_name(name) {
            if args.len() != 1 {
                return Err(syntax(at, format!("`{name}` takes one argument")));
            }
            return Ok(Expr::prim(p, args.into_iter().next().unwrap()));
        }
        if name == "D" {
            return self.derivative(args, at);
        }
        if let Some(decls) = self.decls {
            match decls.function(name) {
                Some(decl) if decl.args.len() == args.len() => {}
                Some(decl) => {
                    return Err(syntax(
                        at,
                        format!("`{name}` expects {} arguments", decl.args.len()),
                    ))
                }
                None => {
                    return Err(ParseError::UnknownFunction {
                        name: name.to_string(),
                        offset: at,
                    })
                }
            }
        }
        Ok(Expr::func(name, args))
    }

    /// `D(f, a1, .., an, o1, .., on)`: the (o1, .., on)-th partial derivative
    /// of `f` evaluated at (a1, .., an).
    fn derivative(&self, args: Vec<Expr>, at: usize) -> Result<Expr, ParseError> {
        let Some(first) = args.first() else {
            return Err(syntax(at, "`D` needs a function name"));
        };
        let name = match first.node() {
            Node::Sym(s) => s.clone(),
            Node::Func(app) if app.is_underived() && self.decls.is_some() => app.name.clone(),
            _ => return Err(syntax(at, "first argument of `D` must be a function name")),
        };
        let rest = &args[1..];
        if rest.is_empty() || !rest.len().is_multiple_of(2) {
            return Err(syntax(at, "`D` takes a name, n arguments and n orders"));
        }
        let n = rest.len() / 2;
        let mut orders = Vec::with_capacity(n);
        for o in &rest[n..] {
            let v = o
                .as_const()
                .filter(|c| c.is_integer())
                .and_then(|c| c.to_integer().to_u32())
                .ok_or_else(|| syntax(at, "derivative orders must be non-negative integers"))?;
            orders.push(v);
        }
        if let Some(decls) = self.decls {
            match decls.function(&name) {
                Some(decl) if decl.args.len() == n => {}
                Some(_) => return Err(syntax(at, format!("arity mismatch for `{name}`"))),
                None => return Err(ParseError::UnknownFunction { name, offset: at }),
            }
        }
        Ok(Expr::new(Node::Func(FuncApp {
            name,
            orders,
            args: rest[..n].to_vec(),
        })))
    }
}

fn negate_literal(e: Expr) -> Expr {
    match e.node() {
        Node::Const(c) => Expr::constant(-c),
        Node::Mul(fs) if fs.first().and_then(Expr::as_const).is_some() => {
            let mut fs = fs.clone();
            fs[0] = Expr::constant(-fs[0].as_const().unwrap());
            Expr::new(Node::Mul(fs))
        }
        _ => Expr::new(Node::Mul(vec![Expr::int(-1), e])),
    }
}

fn collapse_product(mut factors: Vec<Expr>) -> Expr {
    if factors.len() == 1 {
        factors.pop().unwrap()
    } else {
        Expr::new(Node::Mul(factors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_operator_has_three_summands() {
        let e = parse("w_x*E_x + E*(w_xx + w_yy) + 1").unwrap();
        match e.node() {
            Node::Add(ts) => assert_eq!(ts.len(), 3),
            other => panic!("expected a sum, got {other:?}"),
        }
    }

    #[test]
    fn unspecified_function_node() {
        let e = parse("mu(w)").unwrap();
        assert_eq!(e, Expr::func("mu", vec![Expr::sym("w")]));
        let d = parse("D(mu, w, 2)").unwrap();
        assert_eq!(d, Expr::func_deriv("mu", vec![Expr::sym("w")], vec![2]));
    }

    #[test]
    fn declared_function_expands() {
        let decls = Declarations::default().with_function("A", &["x", "y"]);
        let e = parse_with("(A^2+1)", &decls).unwrap();
        let a = Expr::func("A", vec![Expr::sym("x"), Expr::sym("y")]);
        assert_eq!(
            e,
            Expr::new(Node::Add(vec![
                Expr::new(Node::Pow(a.clone(), 2)),
                Expr::int(1)
            ]))
        );
        let ax = parse_with("A_x", &decls).unwrap();
        assert_eq!(
            ax,
            Expr::func_deriv("A", vec![Expr::sym("x"), Expr::sym("y")], vec![1, 0])
        );
    }

    #[test]
    fn rational_literal_and_precedence() {
        assert_eq!(parse("3/4").unwrap(), Expr::rational(3, 4));
        assert_eq!(parse("-3").unwrap(), Expr::int(-3));
        // -x^2 is -(x^2)
        let e = parse("-x^2").unwrap();
        assert_eq!(
            e,
            Expr::new(Node::Mul(vec![
                Expr::int(-1),
                Expr::new(Node::Pow(Expr::sym("x"), 2))
            ]))
        );
    }

    #[test]
    fn errors_carry_offsets() {
        match parse("x + * y") {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
        let decls = Declarations::default();
        match parse_with("foo(x)", &decls) {
            Err(ParseError::UnknownFunction { name, offset }) => {
                assert_eq!(name, "foo");
                assert_eq!(offset, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("x^y"), Err(ParseError::Syntax { .. })));
        assert!(matches!(
            parse("sqrt(x, y)"),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn render_round_trips() {
        for text in [
            "w_x*E_x + E*(w_xx + w_yy) + 1",
            "-x^2 - 3*y + (3/4)*z",
            "D(A, x, y, 1, 0)*A(x, y) - x/(y*z)",
            "arctan(a/b) + (-2)^3 - x*(y/z)",
            "x^(-2) + 1/x - -y",
        ] {
            let e = parse(text).unwrap();
            let back = parse(&e.to_string()).unwrap();
            assert_eq!(back.normalized(), e.normalized(), "{text} -> {e}");
        }
    }
}
