//! Canonical rational-function arithmetic over interned atoms.
//!
//! An atom is anything the polynomial layer treats as an indeterminate: a
//! plain symbol, a jet coordinate, an application of an unspecified function
//! (with its derivative orders and canonicalized arguments), or an opaque
//! primitive application. Numerators are expanded polynomials with exact
//! rational coefficients; denominators are kept as products of normalized
//! polynomial factors so that common denominators are formed factor-wise
//! instead of by blind multiplication. No gcd is ever computed: a rational
//! function is zero exactly when its expanded numerator is empty.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, OnceLock, RwLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::expr::{Expr, FuncApp, JetCoord, Node, Primitive};
use super::KernelError;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Sym(String),
    Jet(JetCoord),
    Func(FuncApp),
    Prim(Primitive, Expr),
}

impl Atom {
    pub fn to_expr(&self) -> Expr {
        match self {
            Atom::Sym(s) => Expr::sym(s),
            Atom::Jet(j) => Expr::new(Node::Jet(j.clone())),
            Atom::Func(f) => Expr::new(Node::Func(f.clone())),
            Atom::Prim(p, a) => Expr::prim(*p, a.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomId(u32);

struct AtomInfo {
    atom: Atom,
    /// Canonical forms of the arguments (functions and primitives).
    args: Vec<RatFn>,
    /// Symbols and jet coordinates this atom depends on, itself included.
    free: BTreeSet<AtomId>,
}

#[derive(Default)]
struct Interner {
    infos: Vec<Arc<AtomInfo>>,
    ids: HashMap<Atom, AtomId>,
}

fn interner() -> &'static RwLock<Interner> {
    static CELL: OnceLock<RwLock<Interner>> = OnceLock::new();
    CELL.get_or_init(|| RwLock::new(Interner::default()))
}

type DerivCache = RwLock<HashMap<(AtomId, AtomId), Option<RatFn>>>;

fn deriv_cache() -> &'static DerivCache {
    static CELL: OnceLock<DerivCache> = OnceLock::new();
    CELL.get_or_init(|| RwLock::new(HashMap::new()))
}

fn intern(atom: Atom, args: Vec<RatFn>) -> AtomId {
    if let Some(id) = interner().read().unwrap().ids.get(&atom) {
        return *id;
    }
    let mut free = BTreeSet::new();
    for a in &args {
        free.extend(a.free_vars());
    }
    let mut table = interner().write().unwrap();
    if let Some(id) = table.ids.get(&atom) {
        return *id;
    }
    let id = AtomId(u32::try_from(table.infos.len()).expect("atom table overflow"));
    if matches!(atom, Atom::Sym(_) | Atom::Jet(_)) {
        free.insert(id);
    }
    table.ids.insert(atom.clone(), id);
    table.infos.push(Arc::new(AtomInfo { atom, args, free }));
    id
}

fn info(id: AtomId) -> Arc<AtomInfo> {
    interner().read().unwrap().infos[id.0 as usize].clone()
}

impl AtomId {
    pub fn sym(name: &str) -> AtomId {
        intern(Atom::Sym(name.to_string()), Vec::new())
    }

    pub fn jet(coord: &JetCoord) -> AtomId {
        intern(Atom::Jet(coord.clone()), Vec::new())
    }

    /// Intern a function application whose arguments are given canonically.
    pub fn func(name: &str, orders: Vec<u32>, args: Vec<RatFn>) -> AtomId {
        let exprs = args.iter().map(RatFn::to_expr).collect();
        intern(
            Atom::Func(FuncApp {
                name: name.to_string(),
                orders,
                args: exprs,
            }),
            args,
        )
    }

    pub fn prim(p: Primitive, arg: RatFn) -> AtomId {
        intern(Atom::Prim(p, arg.to_expr()), vec![arg])
    }

    pub fn atom(self) -> Atom {
        info(self).atom.clone()
    }

    pub fn args(self) -> Vec<RatFn> {
        info(self).args.clone()
    }

    /// Symbols and jet coordinates the atom depends on (itself included).
    pub fn free_vars(self) -> BTreeSet<AtomId> {
        info(self).free.clone()
    }

    pub fn depends_on(self, var: AtomId) -> bool {
        info(self).free.contains(&var)
    }

    pub fn is_variable(self) -> bool {
        matches!(info(self).atom, Atom::Sym(_) | Atom::Jet(_))
    }
}

/// Product of atom powers, sorted by atom id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial(Vec<(AtomId, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn atom(a: AtomId, e: u32) -> Self {
        if e == 0 {
            Monomial::one()
        } else {
            Monomial(vec![(a, e)])
        }
    }

    pub fn factors(&self) -> &[(AtomId, u32)] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn exponent(&self, a: AtomId) -> u32 {
        self.0.iter().find(|(b, _)| *b == a).map_or(0, |(_, e)| *e)
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    /// Lower the exponent of `a` by `k`; `None` if it is smaller than `k`.
    pub fn reduce(&self, a: AtomId, k: u32) -> Option<Monomial> {
        let mut out = Vec::with_capacity(self.0.len());
        let mut found = k == 0;
        for &(b, e) in &self.0 {
            if b == a {
                if e < k {
                    return None;
                }
                found = true;
                if e > k {
                    out.push((b, e - k));
                }
            } else {
                out.push((b, e));
            }
        }
        found.then_some(Monomial(out))
    }

    pub fn to_expr(&self) -> Expr {
        let mut parts: Vec<(Atom, u32)> = self.0.iter().map(|(a, e)| (a.atom(), *e)).collect();
        parts.sort();
        Expr::product(
            parts
                .into_iter()
                .map(|(a, e)| Expr::pow(a.to_expr(), i64::from(e)))
                .collect(),
        )
    }

    /// Graded-lexicographic sort key over the structural atom order.
    fn display_key(&self) -> (Reverse<u32>, Vec<(Atom, Reverse<u32>)>) {
        let mut parts: Vec<(Atom, Reverse<u32>)> = self
            .0
            .iter()
            .map(|(a, e)| (a.atom(), Reverse(*e)))
            .collect();
        parts.sort();
        (Reverse(self.degree()), parts)
    }
}

/// Sparse multivariate polynomial with exact rational coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Poly(BTreeMap<Monomial, BigRational>);

impl Poly {
    pub fn zero() -> Self {
        Poly(BTreeMap::new())
    }

    pub fn constant(c: BigRational) -> Self {
        let mut m = BTreeMap::new();
        if !c.is_zero() {
            m.insert(Monomial::one(), c);
        }
        Poly(m)
    }

    pub fn one() -> Self {
        Poly::constant(BigRational::one())
    }

    pub fn atom(a: AtomId) -> Self {
        let mut m = BTreeMap::new();
        m.insert(Monomial::atom(a, 1), BigRational::one());
        Poly(m)
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, BigRational)>) -> Self {
        let mut p = Poly::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        match self.0.len() {
            0 => Some(BigRational::zero()),
            1 => self.0.get(&Monomial::one()).cloned(),
            _ => None,
        }
    }

    pub fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.0.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let (mut big, small) = if self.len() >= other.len() {
            (self.clone(), other)
        } else {
            (other.clone(), self)
        };
        for (m, c) in &small.0 {
            big.add_term(m.clone(), c.clone());
        }
        big
    }

    pub fn neg(&self) -> Poly {
        Poly(self.0.iter().map(|(m, c)| (m.clone(), -c)).collect())
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn scale(&self, k: &BigRational) -> Poly {
        if k.is_zero() {
            return Poly::zero();
        }
        Poly(self.0.iter().map(|(m, c)| (m.clone(), c * k)).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        if let Some(c) = self.as_constant() {
            return other.scale(&c);
        }
        if let Some(c) = other.as_constant() {
            return self.scale(&c);
        }
        let mut acc: HashMap<Monomial, BigRational> =
            HashMap::with_capacity(self.len() * other.len());
        for (m1, c1) in &self.0 {
            for (m2, c2) in &other.0 {
                let c = c1 * c2;
                match acc.entry(m1.mul(m2)) {
                    std::collections::hash_map::Entry::Vacant(v) => {
                        v.insert(c);
                    }
                    std::collections::hash_map::Entry::Occupied(mut o) => *o.get_mut() += c,
                }
            }
        }
        Poly(acc.into_iter().filter(|(_, c)| !c.is_zero()).collect())
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut result = Poly::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    pub fn atoms(&self) -> BTreeSet<AtomId> {
        self.0
            .keys()
            .flat_map(|m| m.0.iter().map(|(a, _)| *a))
            .collect()
    }

    pub fn degree_in(&self, a: AtomId) -> u32 {
        self.0.keys().map(|m| m.exponent(a)).max().unwrap_or(0)
    }

    /// Formal partial derivative with respect to an atom.
    pub fn partial(&self, a: AtomId) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.0 {
            let e = m.exponent(a);
            if e > 0 {
                let reduced = m.reduce(a, 1).unwrap();
                out.add_term(reduced, c * BigRational::from_integer(BigInt::from(e)));
            }
        }
        out
    }

    fn monomial_content(&self) -> Monomial {
        let mut iter = self.0.keys();
        let Some(first) = iter.next() else {
            return Monomial::one();
        };
        let mut content = first.0.clone();
        for m in iter {
            content = content
                .into_iter()
                .filter_map(|(a, e)| {
                    let f = m.exponent(a);
                    (f > 0).then_some((a, e.min(f)))
                })
                .collect();
            if content.is_empty() {
                break;
            }
        }
        Monomial(content)
    }

    fn divide_monomial(&self, m: &Monomial) -> Poly {
        Poly(
            self.0
                .iter()
                .map(|(t, c)| {
                    let mut r = t.clone();
                    for &(a, e) in &m.0 {
                        r = r.reduce(a, e).expect("monomial divides every term");
                    }
                    (r, c.clone())
                })
                .collect(),
        )
    }

    /// Coefficients as a polynomial in `t`.
    fn univariate(&self, t: AtomId) -> BTreeMap<u32, Poly> {
        let mut out: BTreeMap<u32, Poly> = BTreeMap::new();
        for (m, c) in &self.0 {
            let e = m.exponent(t);
            let rest = m.reduce(t, e).unwrap();
            out.entry(e).or_default().add_term(rest, c.clone());
        }
        out
    }

    /// Exact quotient `self / f`, if `f` divides `self`. The divisor must
    /// have a constant leading coefficient in one of its atoms.
    pub fn exact_div(&self, f: &Poly) -> Option<Poly> {
        if let Some(c) = f.as_constant() {
            return (!c.is_zero()).then(|| self.scale(&c.recip()));
        }
        let t = f.atoms().into_iter().find(|&a| {
            let u = f.univariate(a);
            u.iter()
                .next_back()
                .and_then(|(_, lc)| lc.as_constant())
                .is_some()
        })?;
        let fu = f.univariate(t);
        let (&fd, flc) = fu.iter().next_back().unwrap();
        let inv_lc = flc.as_constant().unwrap().recip();
        let mut rem = self.univariate(t);
        let mut quot = Poly::zero();
        loop {
            rem.retain(|_, p| !p.is_zero());
            let Some((&d, lc)) = rem.iter().next_back() else {
                break;
            };
            if d < fd {
                return None;
            }
            let q = lc.scale(&inv_lc);
            let shift = d - fd;
            for (&k, c) in &fu {
                let slot = rem.entry(k + shift).or_default();
                *slot = slot.sub(&c.mul(&q));
            }
            let qm = Poly(
                q.0.into_iter()
                    .map(|(m, c)| (m.mul(&Monomial::atom(t, shift)), c))
                    .collect(),
            );
            quot = quot.add(&qm);
        }
        Some(quot)
    }

    pub fn to_expr(&self) -> Expr {
        let mut terms: Vec<(_, &Monomial, &BigRational)> = self
            .0
            .iter()
            .map(|(m, c)| (m.display_key(), m, c))
            .collect();
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        Expr::sum(
            terms
                .into_iter()
                .map(|(_, m, c)| Expr::product(vec![Expr::constant(c.clone()), m.to_expr()]))
                .collect(),
        )
    }

    fn free_vars(&self) -> BTreeSet<AtomId> {
        let mut out = BTreeSet::new();
        for a in self.atoms() {
            out.extend(info(a).free.iter().copied());
        }
        out
    }
}

/// Split a nonzero polynomial into `scale * prod(factor^exp)` with every
/// factor normalized (no monomial content, leading coefficient one).
fn split_factor(p: &Poly) -> (BigRational, Vec<(Poly, u32)>) {
    debug_assert!(!p.is_zero());
    let content = p.monomial_content();
    let rest = if content.is_one() {
        p.clone()
    } else {
        p.divide_monomial(&content)
    };
    let mut factors: Vec<(Poly, u32)> =
        content.0.iter().map(|&(a, e)| (Poly::atom(a), e)).collect();
    let scale = if let Some(c) = rest.as_constant() {
        c
    } else {
        let lead = rest.0.values().next().unwrap().clone();
        factors.push((rest.scale(&lead.recip()), 1));
        lead
    };
    (scale, factors)
}

fn merge_factor(den: &mut Vec<(Poly, u32)>, f: Poly, e: u32) {
    match den.binary_search_by(|(g, _)| g.cmp(&f)) {
        Ok(i) => den[i].1 += e,
        Err(i) => den.insert(i, (f, e)),
    }
}

fn expand_factors(den: &[(Poly, u32)]) -> Poly {
    den.iter()
        .fold(Poly::one(), |acc, (f, e)| acc.mul(&f.pow(*e)))
}

/// Rational function `num / prod(den_i ^ e_i)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RatFn {
    num: Poly,
    den: Vec<(Poly, u32)>,
}

impl Default for RatFn {
    fn default() -> Self {
        RatFn::zero()
    }
}

impl From<Poly> for RatFn {
    fn from(p: Poly) -> Self {
        RatFn {
            num: p,
            den: Vec::new(),
        }
    }
}

impl RatFn {
    pub fn zero() -> Self {
        Poly::zero().into()
    }

    pub fn one() -> Self {
        Poly::one().into()
    }

    pub fn constant(c: BigRational) -> Self {
        Poly::constant(c).into()
    }

    pub fn int(v: i64) -> Self {
        RatFn::constant(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn atom(a: AtomId) -> Self {
        Poly::atom(a).into()
    }

    pub fn sym(name: &str) -> Self {
        RatFn::atom(AtomId::sym(name))
    }

    pub fn numerator(&self) -> &Poly {
        &self.num
    }

    pub fn denominator(&self) -> &[(Poly, u32)] {
        &self.den
    }

    pub fn denominator_poly(&self) -> Poly {
        expand_factors(&self.den)
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_empty()
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        if self.den.is_empty() {
            self.num.as_constant()
        } else {
            None
        }
    }

    /// All atoms in numerator and denominator.
    pub fn atoms(&self) -> BTreeSet<AtomId> {
        let mut out = self.num.atoms();
        for (f, _) in &self.den {
            out.extend(f.atoms());
        }
        out
    }

    /// Symbols and jet coordinates the function depends on, looking inside
    /// function arguments.
    pub fn free_vars(&self) -> BTreeSet<AtomId> {
        let mut out = self.num.free_vars();
        for (f, _) in &self.den {
            out.extend(f.free_vars());
        }
        out
    }

    pub fn depends_on(&self, var: AtomId) -> bool {
        self.atoms().into_iter().any(|a| a.depends_on(var))
    }

    fn cancel(mut self) -> RatFn {
        if self.num.is_zero() {
            self.den.clear();
            return self;
        }
        if self.den.is_empty() {
            return self;
        }
        let content = self.num.monomial_content();
        let mut removed = Monomial::one();
        let mut den = Vec::with_capacity(self.den.len());
        for (f, e) in std::mem::take(&mut self.den) {
            let single = f.len() == 1
                && f.0
                    .iter()
                    .next()
                    .is_some_and(|(m, c)| c.is_one() && m.0.len() == 1 && m.0[0].1 == 1);
            if single {
                let a = f.0.keys().next().unwrap().0[0].0;
                let k = content.exponent(a).min(e);
                if k > 0 {
                    removed = removed.mul(&Monomial::atom(a, k));
                }
                if e > k {
                    den.push((f, e - k));
                }
            } else {
                den.push((f, e));
            }
        }
        if !removed.is_one() {
            self.num = self.num.divide_monomial(&removed);
        }
        // Numerator proportional to a whole factor.
        if let Some(i) = den.iter().position(|(f, _)| f.len() == self.num.len()) {
            let (f, _) = &den[i];
            let ratio = ratio_if_proportional(&self.num, f);
            if let Some(k) = ratio {
                self.num = Poly::constant(k);
                den[i].1 -= 1;
                if den[i].1 == 0 {
                    den.remove(i);
                }
            }
        }
        self.den = den;
        self
    }

    pub fn neg(&self) -> RatFn {
        RatFn {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn scale(&self, k: &BigRational) -> RatFn {
        if k.is_zero() {
            return RatFn::zero();
        }
        RatFn {
            num: self.num.scale(k),
            den: self.den.clone(),
        }
    }

    pub fn add(&self, other: &RatFn) -> RatFn {
        if other.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return other.clone();
        }
        if self.den == other.den {
            return RatFn {
                num: self.num.add(&other.num),
                den: self.den.clone(),
            }
            .cancel();
        }
        let mut lcm: Vec<(Poly, u32)> = self.den.clone();
        for (f, e) in &other.den {
            match lcm.binary_search_by(|(g, _)| g.cmp(f)) {
                Ok(i) => lcm[i].1 = lcm[i].1.max(*e),
                Err(i) => lcm.insert(i, (f.clone(), *e)),
            }
        }
        let a = self.num.mul(&cofactor(&lcm, &self.den));
        let b = other.num.mul(&cofactor(&lcm, &other.den));
        RatFn {
            num: a.add(&b),
            den: lcm,
        }
        .cancel()
    }

    pub fn sub(&self, other: &RatFn) -> RatFn {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &RatFn) -> RatFn {
        if self.is_zero() || other.is_zero() {
            return RatFn::zero();
        }
        let mut den = self.den.clone();
        for (f, e) in &other.den {
            merge_factor(&mut den, f.clone(), *e);
        }
        RatFn {
            num: self.num.mul(&other.num),
            den,
        }
        .cancel()
    }

    pub fn inv(&self) -> Result<RatFn, KernelError> {
        if self.is_zero() {
            return Err(KernelError::DivisionByZero);
        }
        let (scale, factors) = split_factor(&self.num);
        let mut den = Vec::new();
        for (f, e) in factors {
            merge_factor(&mut den, f, e);
        }
        Ok(RatFn {
            num: expand_factors(&self.den).scale(&scale.recip()),
            den,
        }
        .cancel())
    }

    pub fn div(&self, other: &RatFn) -> Result<RatFn, KernelError> {
        Ok(self.mul(&other.inv()?))
    }

    pub fn pow(&self, e: i64) -> Result<RatFn, KernelError> {
        let mag = u32::try_from(e.unsigned_abs()).map_err(|_| KernelError::ExponentTooLarge(e))?;
        let p = RatFn {
            num: self.num.pow(mag),
            den: self
                .den
                .iter()
                .map(|(f, k)| (f.clone(), k * mag))
                .filter(|(_, k)| *k > 0)
                .collect(),
        };
        if e < 0 {
            p.inv()
        } else {
            Ok(p)
        }
    }

    /// Partial derivative with respect to a symbol or jet coordinate,
    /// applying the chain rule through function arguments and primitives.
    pub fn diff(&self, var: AtomId) -> Result<RatFn, KernelError> {
        if !self.free_vars().contains(&var) {
            return Ok(RatFn::zero());
        }
        let dnum = diff_poly(&self.num, var)?;
        if self.den.is_empty() {
            return Ok(dnum);
        }
        let inv_den = RatFn {
            num: Poly::one(),
            den: self.den.clone(),
        };
        let mut acc = RatFnSum::new();
        acc.push(dnum.mul(&inv_den));
        for (f, e) in &self.den {
            let df = diff_poly(f, var)?;
            if df.is_zero() {
                continue;
            }
            let over_f = RatFn {
                num: Poly::one(),
                den: vec![(f.clone(), 1)],
            };
            let term = self
                .mul(&df)
                .mul(&over_f)
                .scale(&BigRational::from_integer(BigInt::from(*e)));
            acc.push(term.neg());
        }
        Ok(acc.finish())
    }

    pub fn to_expr(&self) -> Expr {
        let num = self.num.to_expr();
        if self.den.is_empty() {
            return num;
        }
        let mut factors: Vec<Expr> = self
            .den
            .iter()
            .map(|(f, e)| Expr::pow(f.to_expr(), i64::from(*e)))
            .collect();
        factors.sort();
        Expr::quot(num, Expr::product(factors))
    }

    /// Evaluate the polynomial structure with replacement values for some
    /// atoms. Atoms without a replacement stand for themselves.
    pub fn compose(&self, values: &HashMap<AtomId, RatFn>) -> Result<RatFn, KernelError> {
        let num = eval_poly(&self.num, values);
        let mut out = num;
        for (f, e) in &self.den {
            let fv = eval_poly(f, values);
            out = out.mul(&fv.pow(-(i64::from(*e)))?);
        }
        Ok(out)
    }
}

fn ratio_if_proportional(p: &Poly, q: &Poly) -> Option<BigRational> {
    if p.len() != q.len() || p.is_zero() {
        return None;
    }
    let mut ratio: Option<BigRational> = None;
    for ((m1, c1), (m2, c2)) in p.0.iter().zip(q.0.iter()) {
        if m1 != m2 {
            return None;
        }
        let r = c1 / c2;
        match &ratio {
            None => ratio = Some(r),
            Some(k) if *k == r => {}
            Some(_) => return None,
        }
    }
    ratio
}

fn cofactor(lcm: &[(Poly, u32)], den: &[(Poly, u32)]) -> Poly {
    let mut out = Poly::one();
    for (f, e) in lcm {
        let have = den
            .binary_search_by(|(g, _)| g.cmp(f))
            .map_or(0, |i| den[i].1);
        if *e > have {
            out = out.mul(&f.pow(e - have));
        }
    }
    out
}

fn eval_poly(p: &Poly, values: &HashMap<AtomId, RatFn>) -> RatFn {
    let mut powers: HashMap<(AtomId, u32), RatFn> = HashMap::new();
    let mut acc = RatFnSum::new();
    let mut plain = Poly::zero();
    for (m, c) in &p.0 {
        let mut kept = Monomial::one();
        let mut replaced = RatFn::one();
        let mut any = false;
        for &(a, e) in &m.0 {
            match values.get(&a) {
                Some(v) => {
                    any = true;
                    let pw = powers
                        .entry((a, e))
                        .or_insert_with(|| v.pow(i64::from(e)).expect("nonnegative power"))
                        .clone();
                    replaced = replaced.mul(&pw);
                }
                None => kept = kept.mul(&Monomial::atom(a, e)),
            }
        }
        if !any {
            plain.add_term(kept, c.clone());
        } else if replaced.den.is_empty() {
            for (rm, rc) in &replaced.num.0 {
                plain.add_term(rm.mul(&kept), rc * c);
            }
        } else {
            let mut t = Poly::zero();
            t.add_term(kept, c.clone());
            acc.push(replaced.mul(&t.into()));
        }
    }
    acc.push(plain.into());
    acc.finish()
}

/// Sum of many rational functions: terms sharing a denominator are added
/// numerator-wise before any common denominator is formed.
#[derive(Default)]
pub struct RatFnSum {
    groups: HashMap<Vec<(Poly, u32)>, Poly>,
}

impl RatFnSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: RatFn) {
        if r.is_zero() {
            return;
        }
        let slot = self.groups.entry(r.den).or_default();
        *slot = slot.add(&r.num);
    }

    pub fn finish(self) -> RatFn {
        let mut groups: Vec<(Vec<(Poly, u32)>, Poly)> = self
            .groups
            .into_iter()
            .filter(|(_, n)| !n.is_zero())
            .collect();
        groups.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out = RatFn::zero();
        for (den, num) in groups {
            out = out.add(&RatFn { num, den }.cancel());
        }
        out
    }
}

fn diff_poly(p: &Poly, var: AtomId) -> Result<RatFn, KernelError> {
    let mut acc = RatFnSum::new();
    for a in p.atoms() {
        if !a.depends_on(var) {
            continue;
        }
        let Some(da) = atom_derivative(a, var)? else {
            continue;
        };
        let pa = p.partial(a);
        if pa.is_zero() {
            continue;
        }
        acc.push(RatFn::from(pa).mul(&da));
    }
    Ok(acc.finish())
}

fn unit_orders(orders: &[u32], slot: usize) -> Vec<u32> {
    let mut o = orders.to_vec();
    o[slot] += 1;
    o
}

/// d(atom)/d(var), cached.
pub fn atom_derivative(a: AtomId, var: AtomId) -> Result<Option<RatFn>, KernelError> {
    if a == var {
        return Ok(Some(RatFn::one()));
    }
    if let Some(hit) = deriv_cache().read().unwrap().get(&(a, var)) {
        return Ok(hit.clone());
    }
    let inf = info(a);
    if !inf.free.contains(&var) {
        return Ok(None);
    }
    let result = match &inf.atom {
        Atom::Sym(_) | Atom::Jet(_) => None,
        Atom::Func(app) => {
            let mut acc = RatFnSum::new();
            for (i, arg) in inf.args.iter().enumerate() {
                let da = arg.diff(var)?;
                if da.is_zero() {
                    continue;
                }
                let higher = AtomId::func(&app.name, unit_orders(&app.orders, i), inf.args.clone());
                acc.push(RatFn::atom(higher).mul(&da));
            }
            let r = acc.finish();
            (!r.is_zero()).then_some(r)
        }
        Atom::Prim(p, _) => {
            let arg = &inf.args[0];
            let da = arg.diff(var)?;
            if da.is_zero() {
                None
            } else {
                Some(primitive_derivative(*p, a, arg)?.mul(&da))
            }
        }
    };
    deriv_cache()
        .write()
        .unwrap()
        .insert((a, var), result.clone());
    Ok(result)
}

/// Outer derivative of a primitive at its argument.
fn primitive_derivative(p: Primitive, this: AtomId, arg: &RatFn) -> Result<RatFn, KernelError> {
    let two = RatFn::int(2);
    Ok(match p {
        Primitive::Sqrt => two.mul(&RatFn::atom(this)).inv()?,
        Primitive::Exp => RatFn::atom(this),
        Primitive::Ln => arg.inv()?,
        Primitive::Arctan => RatFn::one().add(&arg.mul(arg)).inv()?,
        Primitive::Artanh => RatFn::one().sub(&arg.mul(arg)).inv()?,
        Primitive::Erf => {
            let gauss = AtomId::prim(Primitive::Exp, arg.mul(arg).neg());
            let sqrt_pi = AtomId::prim(Primitive::Sqrt, RatFn::sym("pi"));
            two.mul(&RatFn::atom(gauss)).div(&RatFn::atom(sqrt_pi))?
        }
    })
}

/// How primitives are treated when converting to canonical form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimMode {
    /// Primitive applications are an error.
    Strict,
    /// Primitive applications become fresh indeterminates.
    Opaque,
}

pub fn to_ratfn(e: &Expr, mode: PrimMode) -> Result<RatFn, KernelError> {
    let mut memo = HashMap::new();
    convert(e, mode, &mut memo)
}

fn convert(
    e: &Expr,
    mode: PrimMode,
    memo: &mut HashMap<*const Node, RatFn>,
) -> Result<RatFn, KernelError> {
    let key = e.node() as *const Node;
    if let Some(hit) = memo.get(&key) {
        return Ok(hit.clone());
    }
    let r = match e.node() {
        Node::Const(c) => RatFn::constant(c.clone()),
        Node::Sym(s) => RatFn::atom(AtomId::sym(s)),
        Node::Jet(j) => RatFn::atom(AtomId::jet(j)),
        Node::Func(app) => {
            let args = app
                .args
                .iter()
                .map(|a| convert(a, mode, memo))
                .collect::<Result<Vec<_>, _>>()?;
            RatFn::atom(AtomId::func(&app.name, app.orders.clone(), args))
        }
        Node::Add(ts) => {
            let mut acc = RatFnSum::new();
            for t in ts {
                acc.push(convert(t, mode, memo)?);
            }
            acc.finish()
        }
        Node::Mul(fs) => {
            let mut out = RatFn::one();
            for f in fs {
                out = out.mul(&convert(f, mode, memo)?);
                if out.is_zero() {
                    break;
                }
            }
            out
        }
        Node::Pow(b, n) => convert(b, mode, memo)?.pow(*n)?,
        Node::Div(a, b) => {
            let den = convert(b, mode, memo)?;
            convert(a, mode, memo)?.div(&den)?
        }
        Node::Prim(p, a) => match mode {
            PrimMode::Strict => return Err(KernelError::UnsupportedPrimitive(p.name())),
            PrimMode::Opaque => RatFn::atom(AtomId::prim(*p, convert(a, mode, memo)?)),
        },
    };
    memo.insert(key, r.clone());
    Ok(r)
}

/// Coefficient of one monomial in the collection variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Collected {
    /// Exponents aligned with the collection variables.
    pub exponents: Vec<u32>,
    pub coefficient: RatFn,
}

/// Split `r` by monomials in `vars`. Fails if `r` is not polynomial in them.
pub fn collect(r: &RatFn, vars: &[AtomId]) -> Result<Vec<Collected>, KernelError> {
    for (f, _) in &r.den {
        for a in f.atoms() {
            if let Some(v) = vars.iter().find(|v| a.depends_on(**v)) {
                return Err(KernelError::NonPolynomial(v.atom().to_expr().to_string()));
            }
        }
    }
    let mut groups: BTreeMap<Vec<u32>, Poly> = BTreeMap::new();
    for (m, c) in &r.num.0 {
        let mut key = vec![0u32; vars.len()];
        let mut rest = Monomial::one();
        for &(a, e) in &m.0 {
            if let Some(i) = vars.iter().position(|v| *v == a) {
                key[i] = e;
            } else {
                if let Some(v) = vars.iter().find(|v| a.depends_on(**v)) {
                    return Err(KernelError::NonPolynomial(v.atom().to_expr().to_string()));
                }
                rest = rest.mul(&Monomial::atom(a, e));
            }
        }
        groups.entry(key).or_default().add_term(rest, c.clone());
    }
    let mut out: Vec<Collected> = groups
        .into_iter()
        .filter(|(_, p)| !p.is_zero())
        .map(|(exponents, num)| Collected {
            exponents,
            coefficient: RatFn {
                num,
                den: r.den.clone(),
            }
            .cancel(),
        })
        .collect();
    // graded lexicographic in the caller's variable order
    out.sort_by(|a, b| {
        let da: u32 = a.exponents.iter().sum();
        let db: u32 = b.exponents.iter().sum();
        db.cmp(&da).then_with(|| b.exponents.cmp(&a.exponents))
    });
    Ok(out)
}

/// Render a collected monomial key over the given variables.
pub fn monomial_expr(vars: &[AtomId], exponents: &[u32]) -> Expr {
    Expr::product(
        vars.iter()
            .zip(exponents)
            .filter(|(_, e)| **e > 0)
            .map(|(v, e)| Expr::pow(v.atom().to_expr(), i64::from(*e)))
            .collect(),
    )
}
