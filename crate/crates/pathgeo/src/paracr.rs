//! Defining functions and double fibrations: incidence, general position,
//! duality, PDE compatibility, Segre surfaces, and the catalog of concrete
//! para-CR structures.

use crate::numerics::{gauss_newton_solve, newton_solve, NewtonCfg, NumError};
use crate::par;
use crate::symexpr::{
    differentiate, equivalent, evaluate, parse, simplify, Bindings, EquivResult, EvalError, Expr,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParaCrError {
    #[error("point does not bind chart symbol '{0}'")]
    MissingCoordinate(String),
    #[error("defining function uses symbol '{0}' outside both charts")]
    UnknownSymbol(String),
    #[error("chart sizes inconsistent with n = {n}")]
    BadCharts { n: usize },
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("numeric solve failed: {0}")]
    Num(#[from] NumError),
    #[error("{0}")]
    Json(String),
    #[error("expression parse error: {0}")]
    Parse(String),
}

/// Defining function `Φ: M1 × M2 → ℝ` with coordinate charts for both
/// factors; `N = {Φ = 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefiningFunction {
    pub n: usize,
    /// Chart on M1: `t^1..t^n, z`.
    pub x_chart: Vec<String>,
    /// Chart on M2: `a_1..a_n, b`.
    pub y_chart: Vec<String>,
    #[serde(with = "expr_text")]
    pub phi: Expr,
}

mod expr_text {
    use crate::symexpr::{parse, Expr};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
        e.render().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Expr, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

impl DefiningFunction {
    pub fn new(
        n: usize,
        x_chart: Vec<String>,
        y_chart: Vec<String>,
        phi: Expr,
    ) -> Result<DefiningFunction, ParaCrError> {
        if x_chart.len() != n + 1 || y_chart.len() != n + 1 {
            return Err(ParaCrError::BadCharts { n });
        }
        for s in phi.free_symbols() {
            if !x_chart.contains(&s) && !y_chart.contains(&s) {
                return Err(ParaCrError::UnknownSymbol(s));
            }
        }
        Ok(DefiningFunction { n, x_chart, y_chart, phi })
    }

    pub fn from_json(text: &str) -> Result<DefiningFunction, ParaCrError> {
        let raw: DefiningFunction =
            serde_json::from_str(text).map_err(|e| ParaCrError::Json(e.to_string()))?;
        DefiningFunction::new(raw.n, raw.x_chart, raw.y_chart, raw.phi)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn all_symbols(&self) -> Vec<String> {
        self.x_chart.iter().chain(self.y_chart.iter()).cloned().collect()
    }

    /// Gradient components in chart order `(x_chart..., y_chart...)`.
    pub fn gradient(&self) -> Vec<Expr> {
        self.all_symbols()
            .iter()
            .map(|s| differentiate(&self.phi, s))
            .collect()
    }

    /// `dΦ ≠ 0` sampled at `count` seeded random points: gradient norm above
    /// `tol` at every one.
    pub fn check_nondegenerate(&self, count: usize, seed: u64, tol: f64) -> bool {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let grad = self.gradient();
        let syms = self.all_symbols();
        let mut checked = 0usize;
        let mut draws = 0usize;
        while checked < count && draws < 40 * count {
            draws += 1;
            let mut b = Bindings::new();
            for s in &syms {
                let mag: f64 = rng.gen_range(0.1..=2.0);
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                b.insert(s.clone(), sign * mag);
            }
            let norms: Result<Vec<f64>, _> =
                grad.iter().map(|g| evaluate(g, &b)).collect();
            match norms {
                Ok(v) => {
                    checked += 1;
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm <= tol {
                        return false;
                    }
                }
                Err(_) => continue,
            }
        }
        checked == count
    }
}

/// Point of one factor, bound in that factor's chart.
pub type FactorPoint = Bindings;

fn bind_chart(chart: &[String], pt: &FactorPoint, into: &mut Bindings) -> Result<(), ParaCrError> {
    for s in chart {
        let v = pt
            .get(s)
            .ok_or_else(|| ParaCrError::MissingCoordinate(s.clone()))?;
        into.insert(s.clone(), *v);
    }
    Ok(())
}

/// `|Φ(x, y)| ≤ tol`.
pub fn incidence(
    phi: &DefiningFunction,
    x: &FactorPoint,
    y: &FactorPoint,
    tol: f64,
) -> Result<bool, ParaCrError> {
    let mut b = Bindings::new();
    bind_chart(&phi.x_chart, x, &mut b)?;
    bind_chart(&phi.y_chart, y, &mut b)?;
    Ok(evaluate(&phi.phi, &b)?.abs() <= tol)
}

/// Which factor the points of a general-position query live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    X,
    Y,
}

/// Outcome of [`general_position`]; failing to find a common intersection
/// point is reported distinctly from a rank verdict.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneralPosition {
    InGeneralPosition,
    Degenerate { rank: usize },
    NoIntersection,
}

/// `k` points of one factor are in general position when the gradients of
/// their hypersurface constraints have rank `k` at a common intersection
/// point of the other factor (sought by a Gauss-Newton seeder from the
/// witness).
pub fn general_position(
    phi: &DefiningFunction,
    factor: Factor,
    pts: &[FactorPoint],
    witness: &FactorPoint,
    tol: f64,
) -> Result<GeneralPosition, ParaCrError> {
    let k = pts.len();
    assert!(k >= 1 && k <= phi.n + 1, "need 1 <= k <= n+1 points");
    let (own_chart, other_chart) = match factor {
        Factor::X => (&phi.x_chart, &phi.y_chart),
        Factor::Y => (&phi.y_chart, &phi.x_chart),
    };
    // constraints g_i(u) = Φ(p_i, u) over the other factor's coordinates u
    let grads: Vec<Vec<Expr>> = other_chart
        .iter()
        .map(|s| vec![differentiate(&phi.phi, s)])
        .collect();
    let mut seed = Vec::new();
    for s in other_chart {
        seed.push(
            *witness
                .get(s)
                .ok_or_else(|| ParaCrError::MissingCoordinate(s.clone()))?,
        );
    }
    let eval_at = |u: &[f64], pi: &FactorPoint, e: &Expr| -> Result<f64, NumError> {
        let mut b = Bindings::new();
        bind_chart(own_chart, pi, &mut b).map_err(|er| NumError::Eval(er.to_string()))?;
        for (s, v) in other_chart.iter().zip(u) {
            b.insert(s.clone(), *v);
        }
        evaluate(e, &b).map_err(|er| NumError::Eval(er.to_string()))
    };
    let system = |u: &[f64]| -> Result<(DVector<f64>, DMatrix<f64>), NumError> {
        let mut res = DVector::zeros(k);
        let mut jac = DMatrix::zeros(k, other_chart.len());
        for (i, pi) in pts.iter().enumerate() {
            res[i] = eval_at(u, pi, &phi.phi)?;
            for (c, g) in grads.iter().enumerate() {
                jac[(i, c)] = eval_at(u, pi, &g[0])?;
            }
        }
        Ok((res, jac))
    };
    let cfg = NewtonCfg::default();
    let sol = match gauss_newton_solve(system, &seed, &cfg) {
        Ok(s) => s,
        Err(NumError::NewtonDiverged { .. }) | Err(NumError::SingularJacobian { .. }) => {
            return Ok(GeneralPosition::NoIntersection)
        }
        Err(e) => return Err(e.into()),
    };
    let (_, jac) = system(&sol)?;
    let rank = crate::jetcalc::matrix_rank(jac, tol);
    if rank == k {
        Ok(GeneralPosition::InGeneralPosition)
    } else {
        Ok(GeneralPosition::Degenerate { rank })
    }
}

/// Compatibility of a symmetric right-hand-side array `f_{ij}` for the PDE
/// system `z_{ij} = f_{ij}(t, z, p)`:
/// `D_i f_{jk} = D_j f_{ik}` with `D_i = ∂_{t^i} + p_i ∂_z + f_{ij} ∂_{p_j}`,
/// via the sampling oracle.
pub fn compatibility_check(
    f: &[Vec<Expr>],
    t_syms: &[String],
    z_sym: &str,
    p_syms: &[String],
    samples: usize,
    tol: f64,
    seed: u64,
) -> bool {
    let n = f.len();
    let d_op = |i: usize, e: &Expr| -> Expr {
        let mut acc = differentiate(e, &t_syms[i])
            + Expr::sym(p_syms[i].clone()) * differentiate(e, z_sym);
        for j in 0..n {
            acc = acc + f[i][j].clone() * differentiate(e, &p_syms[j]);
        }
        simplify(&acc)
    };
    for i in 0..n {
        for j in (i + 1)..n {
            for k in 0..n {
                let lhs = d_op(i, &f[j][k]);
                let rhs = d_op(j, &f[i][k]);
                match equivalent(&lhs, &rhs, samples, tol, seed) {
                    EquivResult::Equivalent => {}
                    _ => return false,
                }
            }
        }
    }
    true
}

/// Swaps the roles of the two factor charts; involutive, and incidence is
/// preserved exactly since Φ itself is unchanged.
pub fn dualize(phi: &DefiningFunction) -> DefiningFunction {
    DefiningFunction {
        n: phi.n,
        x_chart: phi.y_chart.clone(),
        y_chart: phi.x_chart.clone(),
        phi: phi.phi.clone(),
    }
}

/// Which Segre-surface family to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaFamily {
    /// `Σ^1_x = {(x̂, ŷ) ∈ N | Φ(x_anchor, ŷ) = 0}`
    Sigma1,
    /// `Σ^2_y = {(x̂, ŷ) ∈ N | Φ(x̂, y_anchor) = 0}`
    Sigma2,
}

/// One sampled point of a Segre surface in the product chart, with its
/// max constraint residual.
#[derive(Debug, Clone, Serialize)]
pub struct SigmaSample {
    pub coords: Bindings,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaSampling {
    pub samples: Vec<SigmaSample>,
    pub skipped: usize,
}

/// Samples a Segre surface of a 3-dimensional structure (`n = 1`) on a
/// `grid × grid` seed grid: the free coordinates `(t̂, â)` range over the
/// grid box and `(ẑ, b̂)` are Newton-solved from the two constraints to
/// residual ≤ 1e-10. Diverged seeds are skipped and counted.
pub fn sample_sigma(
    phi: &DefiningFunction,
    family: SigmaFamily,
    anchor: &FactorPoint,
    grid: usize,
    range: (f64, f64),
) -> Result<SigmaSampling, ParaCrError> {
    assert_eq!(phi.n, 1, "surface sampling is for n = 1");
    let (t_hat, z_hat) = (phi.x_chart[0].clone(), phi.x_chart[1].clone());
    let (a_hat, b_hat) = (phi.y_chart[0].clone(), phi.y_chart[1].clone());
    // constraint 1: Φ(x̂, ŷ) = 0 always (the point lies on N);
    // constraint 2 per family, with the anchor substituted
    let anchored = {
        let mut map = std::collections::BTreeMap::new();
        let chart = match family {
            SigmaFamily::Sigma1 => &phi.x_chart,
            SigmaFamily::Sigma2 => &phi.y_chart,
        };
        for s in chart {
            let v = anchor
                .get(s)
                .ok_or_else(|| ParaCrError::MissingCoordinate(s.clone()))?;
            map.insert(s.clone(), Expr::float(*v));
        }
        crate::symexpr::substitute(&phi.phi, &map)
    };
    let unknowns = [z_hat.clone(), b_hat.clone()];
    let constraints = [phi.phi.clone(), anchored];
    let jac_exprs: Vec<Vec<Expr>> = constraints
        .iter()
        .map(|c| unknowns.iter().map(|u| differentiate(c, u)).collect())
        .collect();
    let (lo, hi) = range;
    let step = if grid > 1 { (hi - lo) / (grid as f64 - 1.0) } else { 0.0 };
    let seeds: Vec<(f64, f64)> = (0..grid)
        .flat_map(|i| (0..grid).map(move |j| (lo + step * i as f64, lo + step * j as f64)))
        .collect();
    let cfg = NewtonCfg::default();
    let results = par::map(&seeds, |&(tv, av)| {
        let fix = |u: &[f64]| {
            let mut b = Bindings::new();
            b.insert(t_hat.clone(), tv);
            b.insert(a_hat.clone(), av);
            b.insert(z_hat.clone(), u[0]);
            b.insert(b_hat.clone(), u[1]);
            b
        };
        let system = |u: &[f64]| -> Result<(DVector<f64>, DMatrix<f64>), NumError> {
            let b = fix(u);
            let mut res = DVector::zeros(2);
            let mut jac = DMatrix::zeros(2, 2);
            for (i, c) in constraints.iter().enumerate() {
                res[i] = evaluate(c, &b).map_err(|e| NumError::Eval(e.to_string()))?;
                for (jx, je) in jac_exprs[i].iter().enumerate() {
                    jac[(i, jx)] =
                        evaluate(je, &b).map_err(|e| NumError::Eval(e.to_string()))?;
                }
            }
            Ok((res, jac))
        };
        match newton_solve(system, &[tv * 0.5, av * 0.5], &cfg) {
            Ok(u) => {
                let b = fix(&u);
                let r = constraints
                    .iter()
                    .map(|c| evaluate(c, &b).map(f64::abs).unwrap_or(f64::INFINITY))
                    .fold(0.0f64, f64::max);
                if r <= 1e-10 {
                    Some(SigmaSample { coords: b, residual: r })
                } else {
                    None
                }
            }
            Err(_) => None,
        }
    });
    let mut samples = Vec::new();
    let mut skipped = 0usize;
    for r in results {
        match r {
            Some(s) => samples.push(s),
            None => skipped += 1,
        }
    }
    Ok(SigmaSampling { samples, skipped })
}

/// Writes Segre samples as CSV: chart symbols in product order, then the
/// residual column.
pub fn sigma_csv(phi: &DefiningFunction, sampling: &SigmaSampling) -> String {
    let syms = phi.all_symbols();
    let mut out = String::new();
    out.push_str(&syms.join(","));
    out.push_str(",residual\n");
    for s in &sampling.samples {
        let row: Vec<String> = syms
            .iter()
            .map(|k| format!("{:.17e}", s.coords.get(k).copied().unwrap_or(f64::NAN)))
            .collect();
        out.push_str(&row.join(","));
        out.push_str(&format!(",{:.3e}\n", s.residual));
    }
    out
}

/// Catalog entry: a defining function, its closed-form Lewy system when one
/// is printed, and sampling hints for the elimination recipe.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub phi: DefiningFunction,
    pub closed_form: Option<crate::jetcalc::SystemOde>,
    /// Index of the M2 coordinate eliminated by the recipe (the jet retains
    /// the other one).
    pub eliminated: usize,
    /// Box from which admissible jets `(t, z, v, z', v')` are drawn.
    pub jet_box: [(f64, f64); 5],
    pub provenance: &'static str,
}

/// The flat structure `Φ = z - a t - b` for 3-dimensional `N` (`n = 1`).
pub fn catalog_flat() -> CatalogEntry {
    let phi = DefiningFunction::new(
        1,
        vec!["t".into(), "z".into()],
        vec!["a".into(), "b".into()],
        parse("z - a*t - b").unwrap(),
    )
    .unwrap();
    CatalogEntry {
        name: "flat",
        phi,
        closed_form: Some(crate::lewy::flat_lewy_system(1, crate::lewy::LewyChart::PTM1).unwrap()),
        eliminated: 1, // solve Φ for b; the jet carries (t, z, a, z', a')
        jet_box: [(-1.5, 1.5), (-1.5, 1.5), (-1.5, 1.5), (-1.5, 1.5), (-1.5, 1.5)],
        provenance: "projective lines; self-dual",
    }
}

/// The self-dual non-flat structure of `z'' = sqrt(z')`:
/// `Φ = z - (t^3/12 + b t^2/4 + b^2 t/4 + a)` (`n = 1`).
pub fn catalog_cubic() -> CatalogEntry {
    let phi = DefiningFunction::new(
        1,
        vec!["t".into(), "z".into()],
        vec!["a".into(), "b".into()],
        parse("z - (t^3/12 + b*t^2/4 + b^2*t/4 + a)").unwrap(),
    )
    .unwrap();
    CatalogEntry {
        name: "cubic",
        phi,
        closed_form: Some(crate::lewy::cubic_lewy_system()),
        eliminated: 0, // solve Φ for a; the jet carries (t, z, b, z', b')
        // box restricted to the sheet where both radicals are real and the
        // closed form's branch is the generic one
        jet_box: [(0.5, 1.6), (-1.0, 1.0), (0.5, 1.8), (0.1, 0.9), (0.2, 1.4)],
        provenance: "general solution of z'' = sqrt(z')",
    }
}

/// Flat structure with `n` independent variables: `Φ = z - Σ a_i t^i - b`.
pub fn catalog_flat_n(n: usize) -> DefiningFunction {
    let x_chart: Vec<String> = (1..=n)
        .map(|i| format!("t{i}"))
        .chain(std::iter::once("z".to_string()))
        .collect();
    let y_chart: Vec<String> = (1..=n)
        .map(|i| format!("a{i}"))
        .chain(std::iter::once("b".to_string()))
        .collect();
    let phi = Expr::sym("z")
        - Expr::add((1..=n).map(|i| Expr::sym(format!("a{i}")) * Expr::sym(format!("t{i}"))))
        - Expr::sym("b");
    DefiningFunction::new(n, x_chart, y_chart, simplify(&phi)).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::bindings;

    #[test]
    fn incidence_flat_examples() {
        let entry = catalog_flat();
        let x = bindings([("t", 0.0), ("z", 0.0)]);
        let y1 = bindings([("a", 1.0), ("b", 0.0)]);
        let y2 = bindings([("a", 0.0), ("b", 1.0)]);
        assert!(incidence(&entry.phi, &x, &y1, 1e-12).unwrap());
        assert!(!incidence(&entry.phi, &x, &y2, 1e-12).unwrap());
    }

    #[test]
    fn incidence_cubic_origin() {
        let entry = catalog_cubic();
        let x = bindings([("t", 0.0), ("z", 0.0)]);
        let y = bindings([("a", 0.0), ("b", 0.0)]);
        assert!(incidence(&entry.phi, &x, &y, 1e-12).unwrap());
    }

    #[test]
    fn dualize_is_involutive_and_preserves_incidence() {
        let entry = catalog_cubic();
        let twice = dualize(&dualize(&entry.phi));
        assert_eq!(twice, entry.phi);
        let d = dualize(&entry.phi);
        let x = bindings([("t", 0.4), ("z", 0.3)]);
        let y = bindings([("a", 0.1), ("b", -0.2)]);
        // incidence(Φ, x, y) == incidence(dual Φ, y, x): same scalar
        assert_eq!(
            incidence(&entry.phi, &x, &y, 1e-9).unwrap(),
            incidence(&d, &y, &x, 1e-9).unwrap()
        );
    }

    #[test]
    fn catalog_gradients_nondegenerate() {
        assert!(catalog_flat().phi.check_nondegenerate(50, 3, 1e-8));
        assert!(catalog_cubic().phi.check_nondegenerate(50, 3, 1e-8));
        assert!(catalog_flat_n(2).check_nondegenerate(50, 3, 1e-8));
    }

    #[test]
    fn general_position_k1_and_k2() {
        let phi = catalog_flat_n(2);
        let x1 = bindings([("t1", 0.3), ("t2", -0.4), ("z", 0.8)]);
        let witness = bindings([("a1", 0.1), ("a2", 0.1), ("b", 0.1)]);
        // k = 1 is always in general position when dΦ ≠ 0
        assert_eq!(
            general_position(&phi, Factor::X, std::slice::from_ref(&x1), &witness, 1e-6).unwrap(),
            GeneralPosition::InGeneralPosition
        );
        // two generic points
        let x2 = bindings([("t1", -0.7), ("t2", 0.9), ("z", -0.2)]);
        assert_eq!(
            general_position(&phi, Factor::X, &[x1.clone(), x2], &witness, 1e-6).unwrap(),
            GeneralPosition::InGeneralPosition
        );
        // coincident hyperplanes: rank 1
        assert_eq!(
            general_position(&phi, Factor::X, &[x1.clone(), x1.clone()], &witness, 1e-6).unwrap(),
            GeneralPosition::Degenerate { rank: 1 }
        );
        // parallel translate with empty intersection is reported distinctly
        let x3 = bindings([("t1", 0.3), ("t2", -0.4), ("z", 1.8)]);
        assert_eq!(
            general_position(&phi, Factor::X, &[x1, x3], &witness, 1e-6).unwrap(),
            GeneralPosition::NoIntersection
        );
    }

    #[test]
    fn compatibility_examples() {
        let ts = vec!["t1".to_string(), "t2".to_string()];
        let ps = vec!["q1".to_string(), "q2".to_string()];
        let zero = vec![vec![Expr::zero(); 2]; 2];
        assert!(compatibility_check(&zero, &ts, "z", &ps, 30, 1e-9, 0));
        // constants are compatible
        let consts = vec![
            vec![Expr::int(3), Expr::rational(1, 2)],
            vec![Expr::rational(1, 2), Expr::int(-1)],
        ];
        assert!(compatibility_check(&consts, &ts, "z", &ps, 30, 1e-9, 0));
        // f11 = z fails: D_2 f_11 = q2 != 0 = D_1 f_12
        let bad = vec![
            vec![Expr::sym("z"), Expr::zero()],
            vec![Expr::zero(), Expr::zero()],
        ];
        assert!(!compatibility_check(&bad, &ts, "z", &ps, 30, 1e-9, 0));
    }

    #[test]
    fn compatibility_invariant_under_relabeling() {
        let ts = vec!["t1".to_string(), "t2".to_string()];
        let ps = vec!["q1".to_string(), "q2".to_string()];
        let f = vec![
            vec![parse("q2^2").unwrap(), Expr::zero()],
            vec![Expr::zero(), Expr::zero()],
        ];
        let relabeled = vec![
            vec![f[1][1].clone(), f[1][0].clone()],
            vec![f[0][1].clone(), f[0][0].clone()],
        ];
        assert_eq!(
            compatibility_check(&f, &ts, "z", &ps, 30, 1e-9, 0),
            compatibility_check(&relabeled, &ts, "z", &ps, 30, 1e-9, 0)
        );
    }

    #[test]
    fn sigma1_flat_is_linear_pair() {
        let entry = catalog_flat();
        let anchor = bindings([("t", 0.0), ("z", 0.0)]);
        let s = sample_sigma(&entry.phi, SigmaFamily::Sigma1, &anchor, 6, (-1.0, 1.0)).unwrap();
        assert!(s.samples.len() >= 30, "skipped {}", s.skipped);
        for pt in &s.samples {
            assert!(pt.residual <= 1e-10);
            // constraints: b̂ = 0 and ẑ = â t̂
            let b = pt.coords.get("b").unwrap();
            let z = pt.coords.get("z").unwrap();
            let a = pt.coords.get("a").unwrap();
            let t = pt.coords.get("t").unwrap();
            assert!(b.abs() < 1e-9);
            assert!((z - a * t).abs() < 1e-9);
        }
    }

    #[test]
    fn sigma_cubic_residuals() {
        let entry = catalog_cubic();
        let anchor = bindings([("t", 0.0), ("z", 0.0)]);
        let s = sample_sigma(&entry.phi, SigmaFamily::Sigma1, &anchor, 10, (-1.0, 1.0)).unwrap();
        assert!(s.samples.len() + s.skipped == 100);
        assert!(s.samples.len() > 50, "too many skipped: {}", s.skipped);
        assert!(s.samples.iter().all(|p| p.residual <= 1e-10));
        let csv = sigma_csv(&entry.phi, &s);
        assert!(csv.starts_with("t,z,a,b,residual\n"));
    }

    #[test]
    fn defining_function_json_round_trip() {
        let entry = catalog_cubic();
        let j = entry.phi.to_json();
        let back = DefiningFunction::from_json(&j).unwrap();
        assert_eq!(entry.phi, back);
    }
}
