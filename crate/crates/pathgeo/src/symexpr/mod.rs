//! Exact symbolic expression core.
//!
//! Expressions are immutable trees over named symbols with exact rational
//! literals. Sums and products keep their children in a canonical order, so
//! structural equality (`==`) is decidable and stable. The usual calculus
//! operations live in the submodules: [`parse`], [`simplify`],
//! [`differentiate`], [`substitute`], [`evaluate`] and the probabilistic
//! equality oracle [`equivalent`].

mod diff;
mod equiv;
mod eval;
mod parse;
mod simplify;

pub use diff::{differentiate, substitute};
pub use equiv::{equivalent, equivalent_with, EquivConfig, EquivResult};
pub use eval::{evaluate, EvalError};
pub use parse::{parse, ParseError};
pub use simplify::{simplify, simplify_tracked, SideCondition};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

/// Unary functions kept as opaque atoms by the rewrite system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }
}

#[derive(Debug)]
pub(crate) enum Node {
    /// Exact rational literal.
    Num(BigRational),
    /// Float literal; never produced by `parse` or `simplify`, available for
    /// embedding numeric results programmatically.
    Float(f64),
    Sym(String),
    Sum(Vec<Expr>),
    Prod(Vec<Expr>),
    Pow(Expr, Expr),
    Func(Func, Expr),
}

/// Immutable symbolic expression. Cheap to clone (shared subtrees).
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

fn kind_rank(n: &Node) -> u8 {
    match n {
        Node::Num(_) => 0,
        Node::Float(_) => 1,
        Node::Sym(_) => 2,
        Node::Func(..) => 3,
        Node::Pow(..) => 4,
        Node::Prod(_) => 5,
        Node::Sum(_) => 6,
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Expr {}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        let (a, b) = (&*self.0, &*other.0);
        kind_rank(a).cmp(&kind_rank(b)).then_with(|| match (a, b) {
            (Node::Num(x), Node::Num(y)) => x.cmp(y),
            (Node::Float(x), Node::Float(y)) => x.total_cmp(y),
            (Node::Sym(x), Node::Sym(y)) => x.cmp(y),
            (Node::Func(f, x), Node::Func(g, y)) => f.cmp(g).then_with(|| x.cmp(y)),
            (Node::Pow(bx, ex), Node::Pow(by, ey)) => bx.cmp(by).then_with(|| ex.cmp(ey)),
            (Node::Prod(xs), Node::Prod(ys)) | (Node::Sum(xs), Node::Sum(ys)) => {
                xs.len().cmp(&ys.len()).then_with(|| xs.cmp(ys))
            }
            _ => unreachable!("kind ranks equal"),
        })
    }
}

impl std::hash::Hash for Expr {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        // Shallow signature; Ord does the fine discrimination in maps.
        kind_rank(&self.0).hash(state);
        match &*self.0 {
            Node::Num(q) => q.hash(state),
            Node::Float(x) => x.to_bits().hash(state),
            Node::Sym(s) => s.hash(state),
            Node::Func(f, a) => {
                f.hash(state);
                a.hash(state);
            }
            Node::Pow(b, e) => {
                b.hash(state);
                e.hash(state);
            }
            Node::Prod(xs) | Node::Sum(xs) => {
                xs.len().hash(state);
                for x in xs {
                    x.hash(state);
                }
            }
        }
    }
}

/// Map from symbol name to float value used by [`evaluate`].
pub type Bindings = BTreeMap<String, f64>;

/// Convenience constructor for [`Bindings`].
pub fn bindings<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Bindings {
    pairs.into_iter().map(|(k, v)| (k.into(), v)).collect()
}

impl Expr {
    pub(crate) fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn ptr(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }

    fn raw(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn int(v: i64) -> Expr {
        Expr::raw(Node::Num(BigRational::from_integer(BigInt::from(v))))
    }

    pub fn rational(num: i64, den: i64) -> Expr {
        assert!(den != 0, "rational literal with zero denominator");
        Expr::raw(Node::Num(BigRational::new(BigInt::from(num), BigInt::from(den))))
    }

    pub fn big_rational(q: BigRational) -> Expr {
        Expr::raw(Node::Num(q))
    }

    pub fn float(v: f64) -> Expr {
        Expr::raw(Node::Float(v))
    }

    pub fn sym(name: impl Into<String>) -> Expr {
        Expr::raw(Node::Sym(name.into()))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.node(), Node::Num(q) if q.is_zero())
    }

    pub fn is_one(&self) -> bool {
        matches!(self.node(), Node::Num(q) if q.is_one())
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self.node() {
            Node::Num(q) => Some(q),
            _ => None,
        }
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self.node() {
            Node::Sym(s) => Some(s),
            _ => None,
        }
    }

    /// n-ary sum with light normalization (flatten, fold, collect, sort).
    pub fn add(terms: impl IntoIterator<Item = Expr>) -> Expr {
        let mut rat = BigRational::zero();
        let mut flt: Option<f64> = None;
        // coefficient per canonical term key
        let mut coeffs: BTreeMap<Expr, BigRational> = BTreeMap::new();
        let mut stack: Vec<Expr> = terms.into_iter().collect();
        stack.reverse();
        while let Some(t) = stack.pop() {
            match t.node() {
                Node::Sum(xs) => {
                    for x in xs.iter().rev() {
                        stack.push(x.clone());
                    }
                }
                Node::Num(q) => rat += q,
                Node::Float(x) => *flt.get_or_insert(0.0) += x,
                _ => {
                    let (c, key) = split_coeff(&t);
                    *coeffs.entry(key).or_insert_with(BigRational::zero) += c;
                }
            }
        }
        let mut out: Vec<Expr> = Vec::with_capacity(coeffs.len() + 2);
        for (key, c) in coeffs {
            if c.is_zero() {
                continue;
            }
            out.push(attach_coeff(c, key));
        }
        if let Some(x) = flt {
            let x = x + rat.to_f64().unwrap_or(f64::NAN);
            out.push(Expr::float(x));
        } else if !rat.is_zero() {
            out.push(Expr::big_rational(rat));
        }
        out.sort();
        match out.len() {
            0 => Expr::zero(),
            1 => out.pop().expect("len checked"),
            _ => Expr::raw(Node::Sum(out)),
        }
    }

    /// n-ary product with light normalization (flatten, fold, merge powers, sort).
    pub fn mul(factors: impl IntoIterator<Item = Expr>) -> Expr {
        let mut rat = BigRational::one();
        let mut flt: Option<f64> = None;
        let mut pows: BTreeMap<Expr, Vec<Expr>> = BTreeMap::new();
        let mut stack: Vec<Expr> = factors.into_iter().collect();
        stack.reverse();
        while let Some(f) = stack.pop() {
            match f.node() {
                Node::Prod(xs) => {
                    for x in xs.iter().rev() {
                        stack.push(x.clone());
                    }
                }
                Node::Num(q) => {
                    if q.is_zero() {
                        return Expr::zero();
                    }
                    rat *= q;
                }
                Node::Float(x) => *flt.get_or_insert(1.0) *= x,
                Node::Pow(b, e) => pows.entry(b.clone()).or_default().push(e.clone()),
                _ => pows.entry(f.clone()).or_default().push(Expr::one()),
            }
        }
        let mut out: Vec<Expr> = Vec::with_capacity(pows.len() + 2);
        for (base, exps) in pows {
            let e = Expr::add(exps);
            // A cancellation like x*x^-1 is not folded here: the zero-exponent
            // power is kept so the deep tier can record the excluded locus.
            if e.is_zero() && base.as_rational().is_none() {
                out.push(Expr::raw(Node::Pow(base, e)));
                continue;
            }
            let p = Expr::pow(base, e);
            match p.node() {
                Node::Num(q) => rat *= q,
                Node::Float(x) => *flt.get_or_insert(1.0) *= x,
                _ if p.is_one() => {}
                _ => out.push(p),
            }
        }
        if let Some(x) = flt {
            let x = x * rat.to_f64().unwrap_or(f64::NAN);
            out.push(Expr::float(x));
        } else if !rat.is_one() {
            out.push(Expr::big_rational(rat));
        }
        out.sort();
        match out.len() {
            0 => Expr::one(),
            1 => out.pop().expect("len checked"),
            _ => Expr::raw(Node::Prod(out)),
        }
    }

    /// Power with light folding. `sqrt` is expressed as `pow(x, 1/2)`.
    pub fn pow(base: Expr, exp: Expr) -> Expr {
        if exp.is_zero() {
            // generic-point semantics: x^0 = 1 away from x = 0
            return Expr::one();
        }
        if exp.is_one() {
            return base;
        }
        if base.is_one() {
            return Expr::one();
        }
        if let (Node::Num(b), Node::Num(e)) = (base.node(), exp.node()) {
            if b.is_zero() {
                if e.is_positive() {
                    return Expr::zero();
                }
            } else if e.is_integer() {
                if let Some(k) = e.to_i64() {
                    if k.unsigned_abs() <= 64 {
                        let p = pow_rational(b, k);
                        return Expr::big_rational(p);
                    }
                }
            } else if let Some(q) = exact_rational_root(b, e) {
                return Expr::big_rational(q);
            }
        }
        // (x^r)^k -> x^(r k) for integer k
        if let Node::Pow(b2, e2) = base.node() {
            if matches!(exp.node(), Node::Num(q) if q.is_integer()) {
                let merged = Expr::mul([e2.clone(), exp.clone()]);
                return Expr::pow(b2.clone(), merged);
            }
        }
        Expr::raw(Node::Pow(base, exp))
    }

    pub fn func(f: Func, arg: Expr) -> Expr {
        Expr::raw(Node::Func(f, arg))
    }

    pub fn sqrt(arg: Expr) -> Expr {
        Expr::pow(arg, Expr::rational(1, 2))
    }

    pub fn neg(self) -> Expr {
        Expr::mul([Expr::int(-1), self])
    }

    pub fn recip(self) -> Expr {
        Expr::pow(self, Expr::int(-1))
    }

    /// Free symbols, sorted.
    pub fn free_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |n| {
            if let Node::Sym(s) = n {
                out.insert(s.clone());
            }
        });
        out
    }

    pub(crate) fn walk(&self, f: &mut impl FnMut(&Node)) {
        f(self.node());
        match self.node() {
            Node::Sum(xs) | Node::Prod(xs) => {
                for x in xs {
                    x.walk(f);
                }
            }
            Node::Pow(b, e) => {
                b.walk(f);
                e.walk(f);
            }
            Node::Func(_, a) => a.walk(f),
            _ => {}
        }
    }

    /// Number of nodes (shared subtrees counted once).
    pub fn node_count(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        let mut n = 0usize;
        while let Some(e) = stack.pop() {
            if !seen.insert(e.ptr()) {
                continue;
            }
            n += 1;
            match e.node() {
                Node::Sum(xs) | Node::Prod(xs) => stack.extend(xs.iter().cloned()),
                Node::Pow(b, x) => {
                    stack.push(b.clone());
                    stack.push(x.clone());
                }
                Node::Func(_, a) => stack.push(a.clone()),
                _ => {}
            }
        }
        n
    }

    /// Renders to text that `parse` accepts; `parse(render(e)) == e` for
    /// light-normalized expressions.
    pub fn render(&self) -> String {
        format!("{self}")
    }
}

/// Splits a term into (rational coefficient, canonical non-numeric key).
fn split_coeff(t: &Expr) -> (BigRational, Expr) {
    if let Node::Prod(xs) = t.node() {
        if let Some(Node::Num(q)) = xs.first().map(|x| x.node()) {
            let rest: Vec<Expr> = xs[1..].to_vec();
            let key = match rest.len() {
                1 => rest.into_iter().next().expect("len checked"),
                _ => Expr::raw(Node::Prod(rest)),
            };
            return (q.clone(), key);
        }
    }
    (BigRational::one(), t.clone())
}

fn attach_coeff(c: BigRational, key: Expr) -> Expr {
    if c.is_one() {
        return key;
    }
    let num = Expr::big_rational(c);
    match key.node() {
        Node::Prod(xs) => {
            let mut v = Vec::with_capacity(xs.len() + 1);
            v.push(num);
            v.extend(xs.iter().cloned());
            v.sort();
            Expr::raw(Node::Prod(v))
        }
        _ => {
            let mut v = vec![num, key];
            v.sort();
            Expr::raw(Node::Prod(v))
        }
    }
}

fn pow_rational(b: &BigRational, k: i64) -> BigRational {
    let mut acc = BigRational::one();
    let mut base = if k < 0 { b.recip() } else { b.clone() };
    let mut n = k.unsigned_abs();
    while n > 0 {
        if n & 1 == 1 {
            acc *= &base;
        }
        base = &base * &base;
        n >>= 1;
    }
    acc
}

/// `b^e` for rational non-integer `e` when the result is exactly rational
/// (perfect roots only, e.g. 4^(1/2) = 2).
fn exact_rational_root(b: &BigRational, e: &BigRational) -> Option<BigRational> {
    let den = e.denom().to_u32()?;
    if den > 8 || b.is_negative() {
        return None;
    }
    let root_num = b.numer().nth_root(den);
    let root_den = b.denom().nth_root(den);
    if &root_num.pow(den) != b.numer() || &root_den.pow(den) != b.denom() {
        return None;
    }
    let root = BigRational::new(root_num, root_den);
    let k = e.numer().to_i64()?;
    if k.unsigned_abs() > 64 {
        return None;
    }
    Some(pow_rational(&root, k))
}

// ---- operator sugar ----------------------------------------------------

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::add([self, rhs])
    }
}
impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::add([self, rhs.neg()])
    }
}
impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul([self, rhs])
    }
}
impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::mul([self, rhs.recip()])
    }
}
impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

// ---- rendering ----------------------------------------------------------

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Prec {
    Sum,
    Prod,
    Pow,
    Atom,
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr, ctx: Prec) -> fmt::Result {
    let prec = match e.node() {
        Node::Sum(_) => Prec::Sum,
        Node::Prod(_) => Prec::Prod,
        Node::Pow(..) => Prec::Pow,
        Node::Num(q) => {
            if q.is_negative() || !q.is_integer() {
                Prec::Sum // forces parens inside products/powers
            } else {
                Prec::Atom
            }
        }
        Node::Float(x) => {
            if *x < 0.0 {
                Prec::Sum
            } else {
                Prec::Atom
            }
        }
        _ => Prec::Atom,
    };
    let parens = (prec as u8) < (ctx as u8);
    if parens {
        write!(f, "(")?;
    }
    match e.node() {
        Node::Num(q) => {
            if q.is_integer() {
                write!(f, "{}", q.numer())?;
            } else {
                write!(f, "{}/{}", q.numer(), q.denom())?;
            }
        }
        Node::Float(x) => write!(f, "{x:?}")?,
        Node::Sym(s) => write!(f, "{s}")?,
        Node::Func(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(f, a, Prec::Sum)?;
            write!(f, ")")?;
        }
        Node::Pow(b, x) => {
            if let Node::Num(q) = x.node() {
                if *q == BigRational::new(BigInt::from(1), BigInt::from(2)) {
                    write!(f, "sqrt(")?;
                    write_expr(f, b, Prec::Sum)?;
                    write!(f, ")")?;
                    if parens {
                        write!(f, ")")?;
                    }
                    return Ok(());
                }
            }
            write_expr(f, b, Prec::Atom)?;
            write!(f, "^")?;
            write_expr(f, x, Prec::Atom)?;
        }
        Node::Prod(xs) => {
            // pull a leading -1 out as a sign
            let mut rest: &[Expr] = xs;
            if let Node::Num(q) = xs[0].node() {
                if *q == BigRational::from_integer(BigInt::from(-1)) {
                    write!(f, "-")?;
                    rest = &xs[1..];
                }
            }
            for (i, x) in rest.iter().enumerate() {
                if i > 0 {
                    write!(f, "*")?;
                }
                write_expr(f, x, Prec::Prod)?;
            }
        }
        Node::Sum(xs) => {
            for (i, x) in xs.iter().enumerate() {
                let (c, key) = split_coeff(x);
                if c.is_negative() {
                    write!(f, "{}", if i == 0 { "-" } else { " - " })?;
                    let abs = attach_coeff(-c, key);
                    write_expr(f, &abs, Prec::Prod)?;
                } else {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write_expr(f, x, Prec::Prod)?;
                }
            }
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, Prec::Sum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_ordering_makes_equality_structural() {
        let x = Expr::sym("x");
        let y = Expr::sym("y");
        let a = Expr::add([x.clone(), y.clone()]);
        let b = Expr::add([y, x]);
        assert_eq!(a, b);
    }

    #[test]
    fn light_collection() {
        let x = Expr::sym("x");
        let two_x = Expr::add([x.clone(), x.clone()]);
        assert_eq!(two_x, Expr::mul([Expr::int(2), x.clone()]));
        let zero = Expr::add([x.clone(), x.neg()]);
        assert!(zero.is_zero());
    }

    #[test]
    fn exact_rational_power() {
        let e = Expr::pow(Expr::int(2), Expr::int(3)) / Expr::int(4);
        assert_eq!(e, Expr::int(2));
        assert_eq!(Expr::pow(Expr::int(4), Expr::rational(1, 2)), Expr::int(2));
        assert_eq!(
            Expr::pow(Expr::int(2), Expr::rational(1, 2)).render(),
            "sqrt(2)"
        );
    }

    #[test]
    fn sqrt_squares_back() {
        let x = Expr::sym("x");
        let s = Expr::sqrt(x.clone());
        assert_eq!(Expr::mul([s.clone(), s]), x);
    }

    #[test]
    fn no_float_coercion_of_exact_arithmetic() {
        let e = Expr::rational(1, 3) + Expr::rational(1, 6);
        assert_eq!(e, Expr::rational(1, 2));
    }
}
