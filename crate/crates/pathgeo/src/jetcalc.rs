//! Coordinates, vector fields, and distribution calculus on jet-space charts:
//! total derivative fields, Lie brackets, and pointwise rank/Frobenius tests.

use crate::par;
use crate::symexpr::{differentiate, evaluate, simplify, Bindings, EvalError, Expr};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JetError {
    #[error("chart mismatch: '{0}' vs '{1}'")]
    ChartMismatch(String, String),
    #[error("component count {got} does not match chart dimension {dim}")]
    BadComponents { got: usize, dim: usize },
    #[error("duplicate coordinate name '{0}'")]
    DuplicateName(String),
    #[error("evaluation failed at sample point: {0}")]
    Eval(#[from] EvalError),
    #[error("field '{sym}' used by a right-hand side is not a chart symbol")]
    UnknownSymbol { sym: String },
}

/// Ordered list of coordinate names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chart(Arc<Vec<String>>);

impl Chart {
    pub fn new(names: impl IntoIterator<Item = impl Into<String>>) -> Result<Chart, JetError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(JetError::DuplicateName(n.clone()));
            }
        }
        Ok(Chart(Arc::new(names)))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }

    fn label(&self) -> String {
        self.0.join(",")
    }
}

/// Vector field on a chart, one expression component per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub chart: Chart,
    pub comps: Vec<Expr>,
}

impl VectorField {
    pub fn new(chart: Chart, comps: Vec<Expr>) -> Result<VectorField, JetError> {
        if comps.len() != chart.dim() {
            return Err(JetError::BadComponents { got: comps.len(), dim: chart.dim() });
        }
        Ok(VectorField { chart, comps })
    }

    /// Coordinate field `∂_name`.
    pub fn coordinate(chart: Chart, name: &str) -> Result<VectorField, JetError> {
        let idx = chart
            .index_of(name)
            .ok_or_else(|| JetError::UnknownSymbol { sym: name.to_string() })?;
        let comps = (0..chart.dim())
            .map(|i| if i == idx { Expr::one() } else { Expr::zero() })
            .collect();
        Ok(VectorField { chart, comps })
    }

    /// Directional derivative of a scalar.
    pub fn apply(&self, f: &Expr) -> Expr {
        let terms = self
            .comps
            .iter()
            .zip(self.chart.names())
            .filter(|(c, _)| !c.is_zero())
            .map(|(c, name)| c.clone() * differentiate(f, name));
        simplify(&Expr::add(terms))
    }

    pub fn eval(&self, point: &Bindings) -> Result<Vec<f64>, EvalError> {
        self.comps.iter().map(|c| evaluate(c, point)).collect()
    }
}

/// System of `n` second-order ODEs `(z^i)'' = F^i(t, z, z')` on the chart
/// `(t, z^1..z^n, p^1..p^n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemOde {
    pub n: usize,
    pub independent: String,
    pub states: Vec<String>,
    pub derivs: Vec<String>,
    #[serde(with = "expr_list_text")]
    pub rhs: Vec<Expr>,
}

mod expr_list_text {
    use crate::symexpr::{parse, Expr};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Expr], s: S) -> Result<S::Ok, S::Error> {
        let texts: Vec<String> = v.iter().map(|e| e.render()).collect();
        texts.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Expr>, D::Error> {
        let texts: Vec<String> = Vec::deserialize(d)?;
        texts
            .iter()
            .map(|t| parse(t).map_err(serde::de::Error::custom))
            .collect()
    }
}

impl SystemOde {
    pub fn new(
        independent: impl Into<String>,
        states: Vec<String>,
        derivs: Vec<String>,
        rhs: Vec<Expr>,
    ) -> Result<SystemOde, JetError> {
        let independent = independent.into();
        let n = states.len();
        let chart_names: Vec<String> = std::iter::once(independent.clone())
            .chain(states.iter().cloned())
            .chain(derivs.iter().cloned())
            .collect();
        let chart = Chart::new(chart_names)?;
        if derivs.len() != n || rhs.len() != n {
            return Err(JetError::BadComponents { got: rhs.len(), dim: n });
        }
        for f in &rhs {
            for sym in f.free_symbols() {
                if chart.index_of(&sym).is_none() {
                    return Err(JetError::UnknownSymbol { sym });
                }
            }
        }
        Ok(SystemOde { n, independent, states, derivs, rhs })
    }

    /// Chart `(t, z^1..z^n, p^1..p^n)`.
    pub fn chart(&self) -> Chart {
        let names: Vec<String> = std::iter::once(self.independent.clone())
            .chain(self.states.iter().cloned())
            .chain(self.derivs.iter().cloned())
            .collect();
        Chart::new(names).expect("validated at construction")
    }

    pub fn from_json(text: &str) -> Result<SystemOde, String> {
        let sys: SystemOde = serde_json::from_str(text).map_err(|e| e.to_string())?;
        SystemOde::new(sys.independent, sys.states, sys.derivs, sys.rhs).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Total derivative vector field `X_F = ∂_t + p^i ∂_{z^i} + F^i ∂_{p^i}`.
pub fn total_derivative(sys: &SystemOde) -> VectorField {
    let chart = sys.chart();
    let mut comps = Vec::with_capacity(chart.dim());
    comps.push(Expr::one());
    for p in &sys.derivs {
        comps.push(Expr::sym(p.clone()));
    }
    for f in &sys.rhs {
        comps.push(f.clone());
    }
    VectorField { chart, comps }
}

/// Lie bracket `[v, w]^k = v(w^k) - w(v^k)`, simplified componentwise.
pub fn lie_bracket(v: &VectorField, w: &VectorField) -> Result<VectorField, JetError> {
    if v.chart != w.chart {
        return Err(JetError::ChartMismatch(v.chart.label(), w.chart.label()));
    }
    let comps = par::map(&(0..v.chart.dim()).collect::<Vec<_>>(), |&k| {
        simplify(&(v.apply(&w.comps[k]) - w.apply(&v.comps[k])))
    });
    Ok(VectorField { chart: v.chart.clone(), comps })
}

/// Numeric rank of the span of `fields` at `point` via singular values with
/// threshold `tol * (largest singular value)`.
pub fn distribution_rank(
    fields: &[VectorField],
    point: &Bindings,
    tol: f64,
) -> Result<usize, JetError> {
    let rows = fields.len();
    if rows == 0 {
        return Ok(0);
    }
    let dim = fields[0].chart.dim();
    for f in fields {
        if f.chart != fields[0].chart {
            return Err(JetError::ChartMismatch(f.chart.label(), fields[0].chart.label()));
        }
    }
    let mut data = Vec::with_capacity(rows * dim);
    for f in fields {
        data.extend(f.eval(point)?);
    }
    Ok(matrix_rank(DMatrix::from_row_slice(rows, dim, &data), tol))
}

pub(crate) fn matrix_rank(m: DMatrix<f64>, tol: f64) -> usize {
    let svals = m.singular_values();
    let smax = svals.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    svals.iter().filter(|&&s| s > tol * smax).count()
}

/// Outcome of [`frobenius_check`]. Rank drift across the sample points makes
/// the test inconclusive, which is reported distinctly from `false`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frobenius {
    Integrable,
    NotIntegrable,
    Inconclusive { reason: String },
}

impl Frobenius {
    pub fn is_integrable(&self) -> bool {
        matches!(self, Frobenius::Integrable)
    }
}

/// Pointwise Frobenius test: at every supplied point, every pairwise bracket
/// must stay in the span of the fields, and the span's rank must be constant.
pub fn frobenius_check(
    fields: &[VectorField],
    points: &[Bindings],
    tol: f64,
) -> Result<Frobenius, JetError> {
    if fields.len() < 2 || points.is_empty() {
        return Ok(Frobenius::Inconclusive { reason: "need >= 2 fields and >= 1 point".into() });
    }
    let mut brackets = Vec::new();
    for i in 0..fields.len() {
        for j in (i + 1)..fields.len() {
            brackets.push(lie_bracket(&fields[i], &fields[j])?);
        }
    }
    let base_rank = distribution_rank(fields, &points[0], tol)?;
    let verdicts = par::map(points, |pt| -> Result<(usize, bool), JetError> {
        let r = distribution_rank(fields, pt, tol)?;
        let mut closed = true;
        for br in &brackets {
            let mut all = fields.to_vec();
            all.push(br.clone());
            if distribution_rank(&all, pt, tol)? != r {
                closed = false;
                break;
            }
        }
        Ok((r, closed))
    });
    let mut closed_everywhere = true;
    for v in verdicts {
        let (r, closed) = v?;
        if r != base_rank {
            return Ok(Frobenius::Inconclusive {
                reason: format!("rank not constant across points ({base_rank} vs {r})"),
            });
        }
        closed_everywhere &= closed;
    }
    if closed_everywhere {
        Ok(Frobenius::Integrable)
    } else {
        Ok(Frobenius::NotIntegrable)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::{bindings, parse};

    fn chart_txp() -> Chart {
        Chart::new(["t", "z", "p"]).unwrap()
    }

    fn sys_zpp_zero() -> SystemOde {
        SystemOde::new("t", vec!["z".into()], vec!["p".into()], vec![Expr::zero()]).unwrap()
    }

    #[test]
    fn total_derivative_flat() {
        let x = total_derivative(&sys_zpp_zero());
        assert_eq!(x.comps, vec![Expr::one(), Expr::sym("p"), Expr::zero()]);
        // X_F applied to z is p for any F
        assert_eq!(x.apply(&Expr::sym("z")), Expr::sym("p"));
    }

    #[test]
    fn total_derivative_sqrt_rhs() {
        let sys = SystemOde::new(
            "t",
            vec!["z".into()],
            vec!["p".into()],
            vec![parse("sqrt(p)").unwrap()],
        )
        .unwrap();
        let x = total_derivative(&sys);
        assert_eq!(x.comps[2], parse("p^(1/2)").unwrap());
    }

    #[test]
    fn bracket_coordinate_fields() {
        let chart = chart_txp();
        let dt = VectorField::coordinate(chart.clone(), "t").unwrap();
        let t_dz =
            VectorField::new(chart.clone(), vec![Expr::zero(), Expr::sym("t"), Expr::zero()])
                .unwrap();
        let br = lie_bracket(&dt, &t_dz).unwrap();
        assert_eq!(br, VectorField::coordinate(chart, "z").unwrap());
    }

    #[test]
    fn bracket_antisymmetry_diagonal() {
        let chart = chart_txp();
        let v = VectorField::new(
            chart.clone(),
            vec![parse("t*z").unwrap(), parse("p^2").unwrap(), Expr::one()],
        )
        .unwrap();
        let br = lie_bracket(&v, &v).unwrap();
        assert!(br.comps.iter().all(|c| c.is_zero()));
    }

    #[test]
    fn bracket_total_derivative_with_vertical() {
        // [X_F, ∂_p] = -∂_z for z'' = 0
        let sys = sys_zpp_zero();
        let x = total_derivative(&sys);
        let dp = VectorField::coordinate(x.chart.clone(), "p").unwrap();
        let br = lie_bracket(&x, &dp).unwrap();
        assert_eq!(br.comps, vec![Expr::zero(), Expr::int(-1), Expr::zero()]);
    }

    #[test]
    fn rank_of_coordinate_plane() {
        let chart = chart_txp();
        let dt = VectorField::coordinate(chart.clone(), "t").unwrap();
        let dz = VectorField::coordinate(chart.clone(), "z").unwrap();
        let pt = bindings([("t", 0.3), ("z", -0.7), ("p", 1.1)]);
        assert_eq!(distribution_rank(&[dt.clone(), dz], &pt, 1e-9).unwrap(), 2);
        let two_dt =
            VectorField::new(chart, vec![Expr::int(2), Expr::zero(), Expr::zero()]).unwrap();
        assert_eq!(distribution_rank(&[dt, two_dt], &pt, 1e-9).unwrap(), 1);
    }

    #[test]
    fn rank_three_span_for_flat_system() {
        let sys = sys_zpp_zero();
        let x = total_derivative(&sys);
        let dp = VectorField::coordinate(x.chart.clone(), "p").unwrap();
        let br = lie_bracket(&x, &dp).unwrap();
        let pt = bindings([("t", 0.5), ("z", 0.2), ("p", -1.3)]);
        assert_eq!(distribution_rank(&[x, dp, br], &pt, 1e-9).unwrap(), 3);
    }

    #[test]
    fn frobenius_coordinate_plane_true_contact_false() {
        let chart = Chart::new(["x", "y", "w"]).unwrap();
        let dx = VectorField::coordinate(chart.clone(), "x").unwrap();
        let dy = VectorField::coordinate(chart.clone(), "y").unwrap();
        let pts: Vec<Bindings> = (0..5)
            .map(|i| {
                let s = 0.3 + 0.2 * i as f64;
                bindings([("x", s), ("y", -s), ("w", 0.5 * s)])
            })
            .collect();
        assert_eq!(
            frobenius_check(&[dx.clone(), dy], &pts, 1e-6).unwrap(),
            Frobenius::Integrable
        );
        // {∂_x, x∂_y + ∂_w}: bracket ∂_y escapes the span
        let contact =
            VectorField::new(chart, vec![Expr::zero(), Expr::sym("x"), Expr::one()]).unwrap();
        assert_eq!(
            frobenius_check(&[dx, contact], &pts, 1e-6).unwrap(),
            Frobenius::NotIntegrable
        );
    }

    #[test]
    fn jacobi_identity_on_polynomial_fields() {
        let chart = chart_txp();
        let mk = |a: &str, b: &str, c: &str| {
            VectorField::new(
                chart.clone(),
                vec![parse(a).unwrap(), parse(b).unwrap(), parse(c).unwrap()],
            )
            .unwrap()
        };
        let u = mk("z", "p*t", "1");
        let v = mk("p^2", "t", "z");
        let w = mk("1", "z*z", "t*p");
        let term = |a: &VectorField, b: &VectorField, c: &VectorField| {
            lie_bracket(a, &lie_bracket(b, c).unwrap()).unwrap()
        };
        let t1 = term(&u, &v, &w);
        let t2 = term(&v, &w, &u);
        let t3 = term(&w, &u, &v);
        for k in 0..3 {
            let s = simplify(&Expr::add([
                t1.comps[k].clone(),
                t2.comps[k].clone(),
                t3.comps[k].clone(),
            ]));
            assert!(s.is_zero(), "jacobi defect in component {k}: {s}");
        }
    }

    #[test]
    fn system_json_round_trip() {
        let sys = SystemOde::new(
            "t",
            vec!["z".into(), "b".into()],
            vec!["zp".into(), "bp".into()],
            vec![Expr::zero(), parse("-2*bp^2/(zp - b)").unwrap()],
        )
        .unwrap();
        let j = sys.to_json();
        let back = SystemOde::from_json(&j).unwrap();
        assert_eq!(sys, back);
        assert!(j.contains("\"independent\""));
    }
}
