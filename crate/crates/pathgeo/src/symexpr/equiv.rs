//! Probabilistic equality oracle.

use super::{evaluate, simplify_tracked, Bindings, EvalError, Expr, SideCondition};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Outcome of [`equivalent`]. `Indeterminate` is reported when every sample
/// hit a domain error, which is distinct from a witnessed inequality.
#[derive(Debug, Clone, PartialEq)]
pub enum EquivResult {
    Equivalent,
    NotEquivalent { witness: Bindings, lhs: f64, rhs: f64 },
    Indeterminate,
}

impl EquivResult {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, EquivResult::Equivalent)
    }
}

#[derive(Debug, Clone)]
pub struct EquivConfig {
    pub samples: usize,
    pub tol: f64,
    pub seed: u64,
    /// Per-symbol sampling range, drawn from `[-hi,-lo] ∪ [lo,hi]` to avoid
    /// coordinate singularities.
    pub lo: f64,
    pub hi: f64,
    /// Samples where a recorded side condition falls below this magnitude are
    /// rejected and redrawn.
    pub condition_guard: f64,
}

impl Default for EquivConfig {
    fn default() -> Self {
        EquivConfig {
            samples: 50,
            tol: 1e-9,
            seed: 0,
            lo: 0.1,
            hi: 2.0,
            condition_guard: 1e-6,
        }
    }
}

/// `true` iff `|e1 - e2| <= tol*(1 + |e1|)` at `samples` random points drawn
/// over the union of the free symbols; deterministic for a given seed.
pub fn equivalent(e1: &Expr, e2: &Expr, samples: usize, tol: f64, seed: u64) -> EquivResult {
    let cfg = EquivConfig { samples, tol, seed, ..EquivConfig::default() };
    let (s1, mut conds) = simplify_tracked(e1);
    let (s2, conds2) = simplify_tracked(e2);
    conds.extend(conds2);
    equivalent_with(&s1, &s2, &conds, &cfg)
}

/// Like [`equivalent`] but with explicit side conditions and configuration.
pub fn equivalent_with(
    e1: &Expr,
    e2: &Expr,
    conds: &[SideCondition],
    cfg: &EquivConfig,
) -> EquivResult {
    let mut syms: BTreeSet<String> = e1.free_symbols();
    syms.extend(e2.free_symbols());
    let syms: Vec<String> = syms.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut evaluated = 0usize;
    let mut draws = 0usize;
    let max_draws = cfg.samples * 40 + 200;
    while evaluated < cfg.samples && draws < max_draws {
        draws += 1;
        let mut b = Bindings::new();
        for s in &syms {
            let mag = rng.gen_range(cfg.lo..=cfg.hi);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            b.insert(s.clone(), sign * mag);
        }
        if !conditions_hold(conds, &b, cfg.condition_guard) {
            continue;
        }
        let v1 = match evaluate(e1, &b) {
            Ok(v) => v,
            Err(EvalError::Domain(_)) => continue,
            Err(e) => panic!("unbound symbol in equivalence check: {e}"),
        };
        let v2 = match evaluate(e2, &b) {
            Ok(v) => v,
            Err(EvalError::Domain(_)) => continue,
            Err(e) => panic!("unbound symbol in equivalence check: {e}"),
        };
        evaluated += 1;
        if (v1 - v2).abs() > cfg.tol * (1.0 + v1.abs()) {
            return EquivResult::NotEquivalent { witness: b, lhs: v1, rhs: v2 };
        }
    }
    if evaluated == 0 {
        return EquivResult::Indeterminate;
    }
    EquivResult::Equivalent
}

fn conditions_hold(conds: &[SideCondition], b: &Bindings, guard: f64) -> bool {
    for c in conds {
        let SideCondition::NonZero(e) = c;
        match evaluate(e, b) {
            Ok(v) if v.abs() > guard => {}
            _ => return false,
        }
    }
    true
}
