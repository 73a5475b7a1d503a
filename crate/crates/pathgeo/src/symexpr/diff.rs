//! Differentiation and substitution.

use super::{simplify, Expr, Func, Node};
use std::collections::BTreeMap;
use std::collections::HashMap;

/// Exact partial derivative `∂e/∂s`, simplified.
pub fn differentiate(e: &Expr, s: &str) -> Expr {
    let mut memo: HashMap<*const Node, Expr> = HashMap::new();
    let raw = diff_rec(e, s, &mut memo);
    simplify(&raw)
}

fn diff_rec(e: &Expr, s: &str, memo: &mut HashMap<*const Node, Expr>) -> Expr {
    if let Some(d) = memo.get(&e.ptr()) {
        return d.clone();
    }
    let d = match e.node() {
        Node::Num(_) | Node::Float(_) => Expr::zero(),
        Node::Sym(name) => {
            if name == s {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Sum(xs) => Expr::add(xs.iter().map(|x| diff_rec(x, s, memo))),
        Node::Prod(xs) => {
            // Leibniz over n factors
            let mut terms = Vec::with_capacity(xs.len());
            for (i, xi) in xs.iter().enumerate() {
                let di = diff_rec(xi, s, memo);
                if di.is_zero() {
                    continue;
                }
                let mut factors = vec![di];
                for (j, xj) in xs.iter().enumerate() {
                    if j != i {
                        factors.push(xj.clone());
                    }
                }
                terms.push(Expr::mul(factors));
            }
            Expr::add(terms)
        }
        Node::Pow(b, x) => {
            let db = diff_rec(b, s, memo);
            let dx = diff_rec(x, s, memo);
            let mut terms = Vec::new();
            if !db.is_zero() {
                // x * b^(x-1) * b'
                terms.push(Expr::mul([
                    x.clone(),
                    Expr::pow(b.clone(), x.clone() - Expr::one()),
                    db,
                ]));
            }
            if !dx.is_zero() {
                // b^x * log(b) * x'
                terms.push(Expr::mul([
                    e.clone(),
                    Expr::func(Func::Log, b.clone()),
                    dx,
                ]));
            }
            Expr::add(terms)
        }
        Node::Func(f, a) => {
            let da = diff_rec(a, s, memo);
            if da.is_zero() {
                Expr::zero()
            } else {
                let outer = match f {
                    Func::Exp => e.clone(),
                    Func::Log => Expr::pow(a.clone(), Expr::int(-1)),
                    Func::Sin => Expr::func(Func::Cos, a.clone()),
                    Func::Cos => Expr::func(Func::Sin, a.clone()).neg(),
                };
                Expr::mul([outer, da])
            }
        }
    };
    memo.insert(e.ptr(), d.clone());
    d
}

/// Simultaneous substitution of symbols by expressions, then simplify.
pub fn substitute(e: &Expr, map: &BTreeMap<String, Expr>) -> Expr {
    let mut memo: HashMap<*const Node, Expr> = HashMap::new();
    let raw = subst_rec(e, map, &mut memo);
    simplify(&raw)
}

fn subst_rec(
    e: &Expr,
    map: &BTreeMap<String, Expr>,
    memo: &mut HashMap<*const Node, Expr>,
) -> Expr {
    if let Some(r) = memo.get(&e.ptr()) {
        return r.clone();
    }
    let r = match e.node() {
        Node::Sym(name) => match map.get(name) {
            Some(rep) => rep.clone(),
            None => e.clone(),
        },
        Node::Num(_) | Node::Float(_) => e.clone(),
        Node::Sum(xs) => Expr::add(xs.iter().map(|x| subst_rec(x, map, memo))),
        Node::Prod(xs) => Expr::mul(xs.iter().map(|x| subst_rec(x, map, memo))),
        Node::Pow(b, x) => Expr::pow(subst_rec(b, map, memo), subst_rec(x, map, memo)),
        Node::Func(f, a) => Expr::func(*f, subst_rec(a, map, memo)),
    };
    memo.insert(e.ptr(), r.clone());
    r
}
