//! IEEE double evaluation with domain checking.

use super::{Bindings, Expr, Func, Node};
use num_traits::ToPrimitive;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound symbol '{0}'")]
    Unbound(String),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Evaluates `e` at the bindings `b`. Every free symbol must be bound and all
/// arguments must lie in the real domains of the operations involved.
pub fn evaluate(e: &Expr, b: &Bindings) -> Result<f64, EvalError> {
    let mut memo: HashMap<*const Node, f64> = HashMap::new();
    eval_rec(e, b, &mut memo)
}

fn eval_rec(
    e: &Expr,
    b: &Bindings,
    memo: &mut HashMap<*const Node, f64>,
) -> Result<f64, EvalError> {
    if let Some(&v) = memo.get(&e.ptr()) {
        return Ok(v);
    }
    let v = match e.node() {
        Node::Num(q) => q
            .to_f64()
            .ok_or_else(|| EvalError::Domain("rational out of f64 range".into()))?,
        Node::Float(x) => *x,
        Node::Sym(name) => *b
            .get(name)
            .ok_or_else(|| EvalError::Unbound(name.clone()))?,
        Node::Sum(xs) => {
            let mut acc = 0.0;
            for x in xs {
                acc += eval_rec(x, b, memo)?;
            }
            acc
        }
        Node::Prod(xs) => {
            let mut acc = 1.0;
            for x in xs {
                acc *= eval_rec(x, b, memo)?;
            }
            acc
        }
        Node::Pow(base, exp) => {
            let bv = eval_rec(base, b, memo)?;
            let ev = eval_rec(exp, b, memo)?;
            eval_pow(bv, ev)?
        }
        Node::Func(f, a) => {
            let av = eval_rec(a, b, memo)?;
            match f {
                Func::Exp => av.exp(),
                Func::Log => {
                    if av <= 0.0 {
                        return Err(EvalError::Domain(format!("log of non-positive {av}")));
                    }
                    av.ln()
                }
                Func::Sin => av.sin(),
                Func::Cos => av.cos(),
            }
        }
    };
    if !v.is_finite() {
        return Err(EvalError::Domain("non-finite value".into()));
    }
    memo.insert(e.ptr(), v);
    Ok(v)
}

fn eval_pow(base: f64, exp: f64) -> Result<f64, EvalError> {
    if base == 0.0 {
        if exp > 0.0 {
            return Ok(0.0);
        }
        if exp == 0.0 {
            return Ok(1.0);
        }
        return Err(EvalError::Domain("division by zero".into()));
    }
    let rounded = exp.round();
    if (exp - rounded).abs() < 1e-12 && rounded.abs() < 1e9 {
        let k = rounded as i32;
        return Ok(base.powi(k));
    }
    if base < 0.0 {
        return Err(EvalError::Domain(format!(
            "negative base {base} raised to non-integer exponent {exp}"
        )));
    }
    Ok(base.powf(exp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::{bindings, parse};

    #[test]
    fn flat_phi_vanishes_on_incident_point() {
        let e = parse("z - a*t - b").unwrap();
        let b = bindings([("z", 1.0), ("a", 1.0), ("t", 0.0), ("b", 1.0)]);
        assert_eq!(evaluate(&e, &b).unwrap(), 0.0);
    }

    #[test]
    fn sqrt_of_four() {
        let e = parse("sqrt(zp)").unwrap();
        assert_eq!(evaluate(&e, &bindings([("zp", 4.0)])).unwrap(), 2.0);
    }

    #[test]
    fn pole_is_domain_error() {
        let e = parse("1/(p - b)").unwrap();
        let err = evaluate(&e, &bindings([("p", 1.0), ("b", 1.0)])).unwrap_err();
        assert!(matches!(err, EvalError::Domain(_)));
    }

    #[test]
    fn unbound_symbol_reported() {
        let e = parse("x + y").unwrap();
        let err = evaluate(&e, &bindings([("x", 1.0)])).unwrap_err();
        assert_eq!(err, EvalError::Unbound("y".into()));
    }

    #[test]
    fn negative_base_integer_exponent_ok() {
        let e = parse("x^3").unwrap();
        assert_eq!(evaluate(&e, &bindings([("x", -2.0)])).unwrap(), -8.0);
        let s = parse("sqrt(x)").unwrap();
        assert!(evaluate(&s, &bindings([("x", -1.0)])).is_err());
    }
}
