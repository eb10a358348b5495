//! Simultaneous substitution of indeterminates, jet coordinates and
//! unspecified functions, plus derivative rewrite rules for implicitly
//! defined functions.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use super::canonical::{to_ratfn, Atom, AtomId, PrimMode, RatFn};
use super::diff::Var;
use super::expr::{Expr, JetCoord};
use super::KernelError;

/// A derivative rule `D^trigger f = rhs`, with `rhs` written in the
/// function's parameters. Higher derivatives are obtained by differentiating
/// `rhs` and rewriting again.
#[derive(Clone, Debug)]
pub struct DerivativeRule {
    pub function: String,
    pub params: Vec<String>,
    pub trigger: Vec<u32>,
    pub rhs: Expr,
}

#[derive(Clone, Debug)]
struct Lambda {
    name: String,
    params: Vec<String>,
    body: Expr,
}

/// Substitution request: values for indeterminates, bodies for functions,
/// derivative rules. All replacements happen simultaneously.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    values: Vec<(Var, Expr)>,
    functions: Vec<Lambda>,
    rules: Vec<DerivativeRule>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(mut self, v: impl Into<Var>, value: Expr) -> Self {
        self.values.push((v.into(), value));
        self
    }

    pub fn jet(self, dep: &str, derivs: &str, value: Expr) -> Self {
        self.var(Var::Jet(JetCoord::new(dep, derivs)), value)
    }

    /// Bind `name(params...)` to `body`.
    pub fn function(mut self, name: &str, params: &[&str], body: Expr) -> Self {
        self.functions.push(Lambda {
            name: name.to_string(),
            params: params.iter().map(|p| p.to_string()).collect(),
            body,
        });
        self
    }

    pub fn rule(mut self, rule: DerivativeRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn extend(mut self, other: &Bindings) -> Self {
        self.values.extend(other.values.iter().cloned());
        self.functions.extend(other.functions.iter().cloned());
        self.rules.extend(other.rules.iter().cloned());
        self
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty() && self.functions.is_empty() && self.rules.is_empty()
    }

    pub fn compile(&self) -> Result<Substitution, KernelError> {
        self.check_acyclic()?;
        let mut values = HashMap::new();
        for (v, e) in &self.values {
            let id = match v {
                Var::Sym(s) => AtomId::sym(s),
                Var::Jet(j) => AtomId::jet(j),
            };
            values.insert(id, to_ratfn(e, PrimMode::Opaque)?);
        }
        let mut lambdas = HashMap::new();
        for l in &self.functions {
            let (params, body) = to_param_space(&l.params, &l.body)?;
            lambdas.insert(
                l.name.clone(),
                Arc::new(CompiledLambda {
                    params,
                    body,
                    derivs: Mutex::new(HashMap::new()),
                }),
            );
        }
        let mut rule_sets: HashMap<String, RuleSet> = HashMap::new();
        for r in &self.rules {
            let (params, rhs) = to_param_space(&r.params, &r.rhs)?;
            if params.len() != r.trigger.len() {
                return Err(KernelError::InvalidBinding(format!(
                    "rule for {} has {} parameters but a {}-slot trigger",
                    r.function,
                    params.len(),
                    r.trigger.len()
                )));
            }
            let set = rule_sets
                .entry(r.function.clone())
                .or_insert_with(|| RuleSet {
                    params: params.clone(),
                    rules: Vec::new(),
                    derivs: Mutex::new(HashMap::new()),
                });
            if set.params != params {
                return Err(KernelError::InvalidBinding(format!(
                    "rules for {} disagree on arity",
                    r.function
                )));
            }
            set.rules.push((r.trigger.clone(), rhs));
        }
        for (name, set) in &rule_sets {
            for (_, rhs) in &set.rules {
                for a in rhs.atoms() {
                    if let Atom::Func(app) = a.atom() {
                        if app.name == *name
                            && set.rules.iter().any(|(t, _)| dominates(&app.orders, t))
                        {
                            return Err(KernelError::CyclicBinding(name.clone()));
                        }
                    }
                }
            }
        }
        let rules: Arc<HashMap<String, Arc<RuleSet>>> = Arc::new(
            rule_sets
                .into_iter()
                .map(|(k, v)| (k, Arc::new(v)))
                .collect(),
        );
        Ok(Substitution {
            values,
            lambdas: Arc::new(lambdas),
            rules,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Bound names form a dependency graph through the replacement
    /// expressions; a cycle (self-reference included) is rejected.
    fn check_acyclic(&self) -> Result<(), KernelError> {
        let mut edges: HashMap<String, BTreeSet<String>> = HashMap::new();
        let key = |v: &Var| match v {
            Var::Sym(s) => s.clone(),
            Var::Jet(j) => format!("{}_{}", j.dep, j.derivs),
        };
        let bound: BTreeSet<String> = self
            .values
            .iter()
            .map(|(v, _)| key(v))
            .chain(self.functions.iter().map(|l| l.name.clone()))
            .collect();
        let refs = |e: &Expr, skip: &[String]| -> BTreeSet<String> {
            let mut out = BTreeSet::new();
            e.walk(&mut |n| {
                let name = match n.node() {
                    super::expr::Node::Sym(s) => Some(s.clone()),
                    super::expr::Node::Jet(j) => Some(format!("{}_{}", j.dep, j.derivs)),
                    super::expr::Node::Func(f) => Some(f.name.clone()),
                    _ => None,
                };
                if let Some(name) = name {
                    if bound.contains(&name) && !skip.contains(&name) {
                        out.insert(name);
                    }
                }
            });
            out
        };
        for (v, e) in &self.values {
            edges.entry(key(v)).or_default().extend(refs(e, &[]));
        }
        for l in &self.functions {
            edges
                .entry(l.name.clone())
                .or_default()
                .extend(refs(&l.body, &l.params));
        }
        // depth-first search with colors
        let mut state: HashMap<&str, u8> = HashMap::new();
        fn visit<'a>(
            n: &'a str,
            edges: &'a HashMap<String, BTreeSet<String>>,
            state: &mut HashMap<&'a str, u8>,
        ) -> Result<(), KernelError> {
            match state.get(n) {
                Some(1) => return Err(KernelError::CyclicBinding(n.to_string())),
                Some(_) => return Ok(()),
                None => {}
            }
            state.insert(n, 1);
            if let Some(next) = edges.get(n) {
                for m in next {
                    visit(m, edges, state)?;
                }
            }
            state.insert(n, 2);
            Ok(())
        }
        for n in edges.keys() {
            visit(n, &edges, &mut state)?;
        }
        Ok(())
    }
}

fn dominates(orders: &[u32], trigger: &[u32]) -> bool {
    orders.len() == trigger.len() && orders.iter().zip(trigger).all(|(o, t)| o >= t)
}

/// Rename parameters to fresh symbols that cannot collide with user names.
fn to_param_space(params: &[String], body: &Expr) -> Result<(Vec<AtomId>, RatFn), KernelError> {
    let fresh: Vec<AtomId> = (0..params.len())
        .map(|i| AtomId::sym(&format!("#{i}")))
        .collect();
    let mut values = HashMap::new();
    for (p, f) in params.iter().zip(&fresh) {
        values.insert(AtomId::sym(p), RatFn::atom(*f));
    }
    let raw = to_ratfn(body, PrimMode::Opaque)?;
    let sub = Substitution {
        values,
        lambdas: Arc::new(HashMap::new()),
        rules: Arc::new(HashMap::new()),
        cache: Mutex::new(HashMap::new()),
    };
    Ok((fresh, sub.apply(&raw)?))
}

struct CompiledLambda {
    params: Vec<AtomId>,
    body: RatFn,
    derivs: Mutex<HashMap<Vec<u32>, RatFn>>,
}

impl CompiledLambda {
    fn derivative(&self, orders: &[u32]) -> Result<RatFn, KernelError> {
        if let Some(hit) = self.derivs.lock().unwrap().get(orders) {
            return Ok(hit.clone());
        }
        let mut e = self.body.clone();
        for (slot, &k) in orders.iter().enumerate() {
            for _ in 0..k {
                e = e.diff(self.params[slot])?;
            }
        }
        self.derivs
            .lock()
            .unwrap()
            .insert(orders.to_vec(), e.clone());
        Ok(e)
    }
}

struct RuleSet {
    params: Vec<AtomId>,
    rules: Vec<(Vec<u32>, RatFn)>,
    derivs: Mutex<HashMap<Vec<u32>, Option<RatFn>>>,
}

impl RuleSet {
    /// Rewritten derivative of the given order in parameter space, or
    /// `None` when no rule applies.
    fn reduced(
        &self,
        orders: &[u32],
        all: &Arc<HashMap<String, Arc<RuleSet>>>,
    ) -> Result<Option<RatFn>, KernelError> {
        if let Some(hit) = self.derivs.lock().unwrap().get(orders) {
            return Ok(hit.clone());
        }
        let result = match self.rules.iter().find(|(t, _)| dominates(orders, t)) {
            None => None,
            Some((trigger, rhs)) => {
                let reducer = Substitution {
                    values: HashMap::new(),
                    lambdas: Arc::new(HashMap::new()),
                    rules: all.clone(),
                    cache: Mutex::new(HashMap::new()),
                };
                let mut e = reducer.apply(rhs)?;
                for (slot, (&o, &t)) in orders.iter().zip(trigger).enumerate() {
                    for _ in t..o {
                        e = reducer.apply(&e.diff(self.params[slot])?)?;
                    }
                }
                Some(e)
            }
        };
        self.derivs
            .lock()
            .unwrap()
            .insert(orders.to_vec(), result.clone());
        Ok(result)
    }
}

/// Compiled bindings, ready to apply to canonical forms.
pub struct Substitution {
    values: HashMap<AtomId, RatFn>,
    lambdas: Arc<HashMap<String, Arc<CompiledLambda>>>,
    rules: Arc<HashMap<String, Arc<RuleSet>>>,
    cache: Mutex<HashMap<AtomId, Option<RatFn>>>,
}

impl Substitution {
    pub fn apply(&self, r: &RatFn) -> Result<RatFn, KernelError> {
        let mut repl = HashMap::new();
        for a in r.atoms() {
            if let Some(v) = self.map_atom(a)? {
                repl.insert(a, v);
            }
        }
        if repl.is_empty() {
            return Ok(r.clone());
        }
        r.compose(&repl)
    }

    pub fn apply_expr(&self, e: &Expr) -> Result<Expr, KernelError> {
        Ok(self.apply(&to_ratfn(e, PrimMode::Opaque)?)?.to_expr())
    }

    fn with_params(&self, params: &[AtomId], args: &[RatFn]) -> Substitution {
        let mut values = self.values.clone();
        for (p, a) in params.iter().zip(args) {
            values.insert(*p, a.clone());
        }
        Substitution {
            values,
            lambdas: self.lambdas.clone(),
            rules: self.rules.clone(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn map_atom(&self, a: AtomId) -> Result<Option<RatFn>, KernelError> {
        if let Some(hit) = self.cache.lock().unwrap().get(&a) {
            return Ok(hit.clone());
        }
        let out = match a.atom() {
            Atom::Sym(_) | Atom::Jet(_) => self.values.get(&a).cloned(),
            Atom::Func(app) => {
                let old = a.args();
                let mut args = Vec::with_capacity(old.len());
                let mut changed = false;
                for x in &old {
                    let y = self.apply(x)?;
                    changed |= y != *x;
                    args.push(y);
                }
                if let Some(l) = self.lambdas.get(&app.name) {
                    if l.params.len() != args.len() {
                        return Err(KernelError::InvalidBinding(format!(
                            "{} applied to {} arguments",
                            app.name,
                            args.len()
                        )));
                    }
                    let body = l.derivative(&app.orders)?;
                    Some(self.with_params(&l.params, &args).apply(&body)?)
                } else {
                    let reduced = match self.rules.get(&app.name) {
                        Some(set) => set.reduced(&app.orders, &self.rules)?,
                        None => None,
                    };
                    match reduced {
                        Some(body) => {
                            let set = &self.rules[&app.name];
                            Some(self.with_params(&set.params, &args).apply(&body)?)
                        }
                        None => changed.then(|| {
                            RatFn::atom(AtomId::func(&app.name, app.orders.clone(), args))
                        }),
                    }
                }
            }
            Atom::Prim(p, _) => {
                let old = a.args().remove(0);
                let new = self.apply(&old)?;
                (new != old).then(|| RatFn::atom(AtomId::prim(p, new)))
            }
        };
        self.cache.lock().unwrap().insert(a, out.clone());
        Ok(out)
    }
}

/// Expression-level substitution.
pub fn substitute(e: &Expr, bindings: &Bindings) -> Result<Expr, KernelError> {
    bindings.compile()?.apply_expr(e)
}
