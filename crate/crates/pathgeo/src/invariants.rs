//! Point invariants of ODE and PDE systems: torsion and curvature tensors of
//! a system of second-order ODEs, their binary quadric/quartic representation
//! for pairs, root profiles of those forms, the scalar invariants of one
//! equation, and the fundamental invariant of compatible PDE systems.

use crate::jetcalc::{total_derivative, SystemOde};
use crate::par;
use crate::symexpr::{differentiate, evaluate, simplify, Bindings, EvalError, Expr};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InvariantError {
    #[error("operation requires n >= 2 equations, got {0}")]
    NeedsSystem(usize),
    #[error("binary forms are defined for pairs (n = 2), got n = {0}")]
    NeedsPair(usize),
    #[error("symmetric input required: entry ({0},{1}) differs from ({1},{0})")]
    Asymmetric(usize, usize),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// Torsion `T^i_j` of a system of second-order ODEs; trace-free.
#[derive(Debug, Clone)]
pub struct TorsionTensor {
    pub n: usize,
    /// `entries[i][j] = T^i_j`
    pub entries: Vec<Vec<Expr>>,
}

impl TorsionTensor {
    pub fn is_zero(&self) -> bool {
        self.entries.iter().flatten().all(|e| e.is_zero())
    }

    pub fn trace(&self) -> Expr {
        simplify(&Expr::add((0..self.n).map(|i| self.entries[i][i].clone())))
    }

    pub fn eval(&self, point: &Bindings) -> Result<DMatrix<f64>, EvalError> {
        let mut data = Vec::with_capacity(self.n * self.n);
        for row in &self.entries {
            for e in row {
                data.push(evaluate(e, point)?);
            }
        }
        Ok(DMatrix::from_row_slice(self.n, self.n, &data))
    }
}

/// Curvature `C^i_{jkl}`, totally symmetric in `(j,k,l)` and trace-free.
#[derive(Debug, Clone)]
pub struct CurvatureTensor {
    pub n: usize,
    entries: Vec<Expr>,
}

impl CurvatureTensor {
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.n + j) * self.n + k) * self.n + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> &Expr {
        &self.entries[self.idx(i, j, k, l)]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_zero())
    }
}

/// `F^i_j = -F^i_{z^j} + 1/2 X_F(F^i_{p^j}) - 1/4 F^i_{p^k} F^k_{p^j}`.
fn f_matrix(sys: &SystemOde) -> Vec<Vec<Expr>> {
    let n = sys.n;
    let xf = total_derivative(sys);
    let dp: Vec<Vec<Expr>> = sys
        .rhs
        .iter()
        .map(|f| sys.derivs.iter().map(|p| differentiate(f, p)).collect())
        .collect();
    let idx: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let entries = par::map(&idx, |&(i, j)| {
        let dz = differentiate(&sys.rhs[i], &sys.states[j]);
        let xdp = xf.apply(&dp[i][j]);
        let quad = Expr::add((0..n).map(|k| dp[i][k].clone() * dp[k][j].clone()));
        simplify(
            &(Expr::rational(1, 2) * xdp - dz - Expr::rational(1, 4) * quad),
        )
    });
    let mut out = vec![Vec::with_capacity(n); n];
    for (pos, e) in entries.into_iter().enumerate() {
        out[pos / n].push(e);
    }
    out
}

/// Fels torsion: the trace-free part of the `F^i_j` matrix. For a pair of
/// equations this is `F^i_j - 1/2 δ^i_j F^k_k`; the general coefficient `1/n`
/// is the one that keeps the trace identity `T^i_i = 0` for every `n`.
pub fn fels_torsion(sys: &SystemOde) -> Result<TorsionTensor, InvariantError> {
    let n = sys.n;
    if n < 2 {
        return Err(InvariantError::NeedsSystem(n));
    }
    let fm = f_matrix(sys);
    let trace = Expr::add((0..n).map(|k| fm[k][k].clone()));
    let coeff = Expr::rational(1, n as i64);
    let entries: Vec<Vec<Expr>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        simplify(&(fm[i][j].clone() - coeff.clone() * trace.clone()))
                    } else {
                        fm[i][j].clone()
                    }
                })
                .collect()
        })
        .collect();
    Ok(TorsionTensor { n, entries })
}

/// Fels curvature `C^i_{jkl} = F^i_{p^j p^k p^l} - 3/(n+2) F^r_{r(jk} δ^i_{l)}`
/// with round brackets averaging over the `(j,k,l)` permutations. At `n = 2`
/// the coefficient is the printed `3/4`, and the choice makes `C^i_{ijk} = 0`
/// hold exactly.
pub fn fels_curvature(sys: &SystemOde) -> Result<CurvatureTensor, InvariantError> {
    let n = sys.n;
    if n < 2 {
        return Err(InvariantError::NeedsSystem(n));
    }
    // third derivatives F^i_{p^j p^k p^l}
    let mut d3 = vec![Expr::zero(); n * n * n * n];
    let at = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    for i in 0..n {
        let d1: Vec<Expr> = sys.derivs.iter().map(|p| differentiate(&sys.rhs[i], p)).collect();
        for j in 0..n {
            let d2: Vec<Expr> = sys.derivs.iter().map(|p| differentiate(&d1[j], p)).collect();
            for k in 0..n {
                for (l, p) in sys.derivs.iter().enumerate() {
                    d3[at(i, j, k, l)] = differentiate(&d2[k], p);
                }
            }
        }
    }
    // contracted F^r_{r jk}
    let mut frr = vec![Expr::zero(); n * n];
    for j in 0..n {
        for k in 0..n {
            frr[j * n + k] =
                simplify(&Expr::add((0..n).map(|r| d3[at(r, r, j, k)].clone())));
        }
    }
    let coeff = Expr::rational(3, (n + 2) as i64);
    let sixth = Expr::rational(1, 6);
    let mut entries = vec![Expr::zero(); n * n * n * n];
    let perms: [[usize; 3]; 6] =
        [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let jkl = [j, k, l];
                    let sym = Expr::add(perms.iter().filter_map(|p| {
                        let (a, b, c) = (jkl[p[0]], jkl[p[1]], jkl[p[2]]);
                        if i == c {
                            Some(frr[a * n + b].clone())
                        } else {
                            None
                        }
                    }));
                    entries[at(i, j, k, l)] = simplify(
                        &(d3[at(i, j, k, l)].clone()
                            - coeff.clone() * sixth.clone() * sym),
                    );
                }
            }
        }
    }
    Ok(CurvatureTensor { n, entries })
}

/// Binary quadric `A_0 (β^1)^2 + 2A_1 β^1 β^2 + A_2 (β^2)^2` representing the
/// torsion of a pair.
#[derive(Debug, Clone)]
pub struct BinaryQuadric {
    pub a: [Expr; 3],
}

/// Binary quartic `W_0 (β^1)^4 + 4W_1 (β^1)^3 β^2 + 6W_2 (β^1)^2 (β^2)^2 +
/// 4W_3 β^1 (β^2)^3 + W_4 (β^2)^4` representing the curvature of a pair.
#[derive(Debug, Clone)]
pub struct BinaryQuartic {
    pub w: [Expr; 5],
}

/// Coefficient extraction for pairs: `A_0 = T^2_1, A_1 = T^2_2, A_2 = -T^1_2`
/// and `W_0 = C^2_111, W_1 = C^2_211, W_2 = C^2_221, W_3 = C^2_222,
/// W_4 = -C^1_222`.
pub fn binary_forms(
    t: &TorsionTensor,
    c: &CurvatureTensor,
) -> Result<(BinaryQuadric, BinaryQuartic), InvariantError> {
    if t.n != 2 || c.n != 2 {
        return Err(InvariantError::NeedsPair(t.n.max(c.n)));
    }
    let quadric = BinaryQuadric {
        a: [
            t.entries[1][0].clone(),
            t.entries[1][1].clone(),
            simplify(&t.entries[0][1].clone().neg()),
        ],
    };
    let quartic = BinaryQuartic {
        w: [
            c.get(1, 0, 0, 0).clone(),
            c.get(1, 1, 0, 0).clone(),
            c.get(1, 1, 1, 0).clone(),
            c.get(1, 1, 1, 1).clone(),
            simplify(&c.get(0, 1, 1, 1).clone().neg()),
        ],
    };
    Ok((quadric, quartic))
}

impl BinaryQuadric {
    /// Dehomogenized polynomial coefficients `[x^2, x^1, x^0]` at `x = β^1/β^2`.
    pub fn poly_coeffs(&self, point: &Bindings) -> Result<Vec<f64>, EvalError> {
        Ok(vec![
            evaluate(&self.a[0], point)?,
            2.0 * evaluate(&self.a[1], point)?,
            evaluate(&self.a[2], point)?,
        ])
    }

    /// Value of the form on a vertical vector `(v1, v2)`.
    pub fn value_on(&self, point: &Bindings, v: (f64, f64)) -> Result<f64, EvalError> {
        let c = self.poly_coeffs(point)?;
        Ok(c[0] * v.0 * v.0 + c[1] * v.0 * v.1 + c[2] * v.1 * v.1)
    }
}

impl BinaryQuartic {
    /// Dehomogenized polynomial coefficients `[x^4 .. x^0]` at `x = β^1/β^2`.
    pub fn poly_coeffs(&self, point: &Bindings) -> Result<Vec<f64>, EvalError> {
        let w: Vec<f64> = self
            .w
            .iter()
            .map(|e| evaluate(e, point))
            .collect::<Result<_, _>>()?;
        Ok(vec![w[0], 4.0 * w[1], 6.0 * w[2], 4.0 * w[3], w[4]])
    }

    /// Value of the form on a vertical vector `(v1, v2)`.
    pub fn value_on(&self, point: &Bindings, v: (f64, f64)) -> Result<f64, EvalError> {
        let c = self.poly_coeffs(point)?;
        let (a, b) = v;
        Ok(c[0] * a.powi(4)
            + c[1] * a.powi(3) * b
            + c[2] * a.powi(2) * b.powi(2)
            + c[3] * a * b.powi(3)
            + c[4] * b.powi(4))
    }

    pub fn is_zero(&self) -> bool {
        self.w.iter().all(|e| e.is_zero())
    }
}

/// One root of a binary form at an evaluation point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RootEntry {
    /// Finite root value (real part when complex) or `None` for the point at
    /// infinity.
    pub value: Option<f64>,
    pub imag: f64,
    pub mult: usize,
    pub real: bool,
}

/// Root profile of a binary form at one evaluation point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RootProfile {
    pub roots: Vec<RootEntry>,
    pub degree: usize,
}

impl RootProfile {
    pub fn all_real(&self) -> bool {
        self.roots.iter().all(|r| r.real)
    }

    pub fn has_repeated(&self) -> bool {
        self.roots.iter().any(|r| r.mult > 1)
    }

    pub fn distinct_real_count(&self) -> usize {
        self.roots.iter().filter(|r| r.real).count()
    }

    /// True when the profile is exactly two distinct real roots of
    /// multiplicity two.
    pub fn is_two_double_real(&self) -> bool {
        self.roots.len() == 2
            && self.roots.iter().all(|r| r.real && r.mult == 2)
    }
}

/// Outcome of [`root_profile`]; a form whose coefficients all vanish at the
/// point has no roots to report, which is distinct from an error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ProfileOutcome {
    Profile(RootProfile),
    IdenticallyZero,
}

impl ProfileOutcome {
    pub fn profile(&self) -> Option<&RootProfile> {
        match self {
            ProfileOutcome::Profile(p) => Some(p),
            ProfileOutcome::IdenticallyZero => None,
        }
    }
}

/// Roots of the dehomogenized form via companion-matrix eigenvalues; nearby
/// roots are clustered into multiple roots (threshold `tol^(1/m)` for a
/// cluster of size `m`), and vanishing leading coefficients contribute a root
/// at infinity.
pub fn root_profile(coeffs: &[f64], tol: f64) -> ProfileOutcome {
    let degree = coeffs.len() - 1;
    let scale = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    if scale <= tol {
        return ProfileOutcome::IdenticallyZero;
    }
    let normed: Vec<f64> = coeffs.iter().map(|c| c / scale).collect();
    // strip vanishing leading coefficients -> roots at infinity
    let mut lead = 0usize;
    while lead < degree && normed[lead].abs() <= tol {
        lead += 1;
    }
    let inf_mult = lead;
    let finite: Vec<f64> = normed[lead..].to_vec();
    let fin_deg = finite.len() - 1;
    let mut roots: Vec<(f64, f64)> = Vec::new();
    if fin_deg > 0 {
        // companion matrix of the monic polynomial
        let lead_c = finite[0];
        let mut m = DMatrix::<f64>::zeros(fin_deg, fin_deg);
        for r in 1..fin_deg {
            m[(r, r - 1)] = 1.0;
        }
        for r in 0..fin_deg {
            m[(r, fin_deg - 1 - r)] = 0.0; // placeholder, filled below
        }
        // standard companion with coefficients down the last column
        let mut m = DMatrix::<f64>::zeros(fin_deg, fin_deg);
        for r in 1..fin_deg {
            m[(r, r - 1)] = 1.0;
        }
        for r in 0..fin_deg {
            m[(r, fin_deg - 1)] = -finite[fin_deg - r] / lead_c;
        }
        let eig = m.complex_eigenvalues();
        roots = eig.iter().map(|c| (c.re, c.im)).collect();
        roots.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }
    // greedy adaptive clustering: a cluster of size m may have diameter up to
    // tol^(1/m) (scaled by root magnitude)
    let mut entries: Vec<RootEntry> = Vec::new();
    let mut used = vec![false; roots.len()];
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        let mut cluster = vec![roots[i]];
        used[i] = true;
        loop {
            let m = cluster.len();
            let radius = tol.powf(1.0 / (m as f64 + 1.0));
            let center = cluster_center(&cluster);
            let scale_c = 1.0 + center.0.hypot(center.1);
            let mut grew = false;
            for (j, r) in roots.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let d = (r.0 - center.0).hypot(r.1 - center.1);
                if d <= radius * scale_c {
                    cluster.push(*r);
                    used[j] = true;
                    grew = true;
                    break;
                }
            }
            if !grew {
                break;
            }
        }
        let m = cluster.len();
        let center = cluster_center(&cluster);
        let diam = cluster
            .iter()
            .map(|r| (r.0 - center.0).hypot(r.1 - center.1))
            .fold(0.0f64, f64::max);
        let real_radius = diam.max(tol.powf(1.0 / m as f64)) * (1.0 + center.0.abs());
        let real = center.1.abs() <= real_radius;
        entries.push(RootEntry {
            value: Some(center.0),
            imag: if real { 0.0 } else { center.1 },
            mult: m,
            real,
        });
    }
    if inf_mult > 0 {
        entries.push(RootEntry { value: None, imag: 0.0, mult: inf_mult, real: true });
    }
    entries.sort_by(|a, b| match (&a.value, &b.value) {
        (Some(x), Some(y)) => x.total_cmp(y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    ProfileOutcome::Profile(RootProfile { roots: entries, degree })
}

fn cluster_center(cluster: &[(f64, f64)]) -> (f64, f64) {
    let n = cluster.len() as f64;
    let re = cluster.iter().map(|r| r.0).sum::<f64>() / n;
    let im = cluster.iter().map(|r| r.1).sum::<f64>() / n;
    (re, im)
}

/// Scalar invariants of one second-order ODE `z'' = F(t, z, p)`:
/// `Q1 = F_pppp` and
/// `P1 = X_F^2(F_pp) - 4 X_F(F_zp) - F_p X_F(F_pp) + 4 F_p F_zp - 3 F_z F_zpp + 6 F_zz`.
pub fn scalar_invariants(f: &Expr, t: &str, z: &str, p: &str) -> (Expr, Expr) {
    let sys = SystemOde::new(t, vec![z.to_string()], vec![p.to_string()], vec![f.clone()])
        .expect("one-equation system");
    let xf = total_derivative(&sys);
    let fp = differentiate(f, p);
    let fz = differentiate(f, z);
    let fpp = differentiate(&fp, p);
    let fzp = differentiate(&fz, p);
    let fzz = differentiate(&fz, z);
    let fzpp = differentiate(&fzp, p);
    let q1 = differentiate(&differentiate(&fpp, p), p);
    let xfpp = xf.apply(&fpp);
    let p1 = simplify(
        &(xf.apply(&xfpp) - Expr::int(4) * xf.apply(&fzp) - fp.clone() * xfpp
            + Expr::int(4) * fp * fzp
            - Expr::int(3) * fz * fzpp
            + Expr::int(6) * fzz),
    );
    (p1, q1)
}

/// Fundamental invariant `K^{il}_{jk}` of a compatible PDE system
/// `z_{ij} = f_{ij}(t, z, p)`:
///
/// `S^{il}_{jk} = -∂²f_{jk}/∂p_i∂p_l`, `S^i_j = S^{ik}_{jk}`, `S = S^{ij}_{ij}`,
/// `K^{il}_{jk} = S^{il}_{jk} - 4/(n+2) δ^{(i}_{(j} S^{l)}_{k)} +
///  1/((n+1)(n+2)) (δ^i_j δ^l_k + δ^l_j δ^i_k) S`,
/// symmetric in `(i,l)` and `(j,k)` and trace-free.
#[derive(Debug, Clone)]
pub struct ParaCrInvariant {
    pub n: usize,
    entries: Vec<Expr>,
}

impl ParaCrInvariant {
    fn at(&self, i: usize, l: usize, j: usize, k: usize) -> usize {
        ((i * self.n + l) * self.n + j) * self.n + k
    }

    pub fn get(&self, i: usize, l: usize, j: usize, k: usize) -> &Expr {
        &self.entries[self.at(i, l, j, k)]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_zero())
    }

    /// Contraction `K^{il}_{jl}`, which must vanish identically.
    pub fn trace(&self, i: usize, j: usize) -> Expr {
        simplify(&Expr::add((0..self.n).map(|l| self.get(i, l, j, l).clone())))
    }
}

pub fn paracr_invariant(
    f: &[Vec<Expr>],
    p_syms: &[String],
) -> Result<ParaCrInvariant, InvariantError> {
    let n = f.len();
    if n < 2 {
        return Err(InvariantError::NeedsSystem(n));
    }
    for (i, row) in f.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            if *e != f[j][i] {
                return Err(InvariantError::Asymmetric(i, j));
            }
        }
    }
    let at = |i: usize, l: usize, j: usize, k: usize| ((i * n + l) * n + j) * n + k;
    // S^{il}_{jk} = -f_{jk},p_i p_l
    let mut s4 = vec![Expr::zero(); n * n * n * n];
    for j in 0..n {
        for k in 0..n {
            let d1: Vec<Expr> = p_syms.iter().map(|p| differentiate(&f[j][k], p)).collect();
            for i in 0..n {
                for (l, p) in p_syms.iter().enumerate() {
                    s4[at(i, l, j, k)] = simplify(&differentiate(&d1[i], p).neg());
                }
            }
        }
    }
    let s2: Vec<Vec<Expr>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| simplify(&Expr::add((0..n).map(|k| s4[at(i, k, j, k)].clone()))))
                .collect()
        })
        .collect();
    let s0 = simplify(&Expr::add((0..n).map(|i| s2[i][i].clone())));
    let d = |a: usize, b: usize| if a == b { Expr::one() } else { Expr::zero() };
    let c1 = Expr::rational(4, (n + 2) as i64) * Expr::rational(1, 4);
    let c2 = Expr::rational(1, ((n + 1) * (n + 2)) as i64);
    let mut entries = vec![Expr::zero(); n * n * n * n];
    for i in 0..n {
        for l in 0..n {
            for j in 0..n {
                for k in 0..n {
                    // averaged symmetrization over (i,l) and (j,k)
                    let sym = Expr::add([
                        d(i, j) * s2[l][k].clone(),
                        d(i, k) * s2[l][j].clone(),
                        d(l, j) * s2[i][k].clone(),
                        d(l, k) * s2[i][j].clone(),
                    ]);
                    let tr = (d(i, j) * d(l, k) + d(l, j) * d(i, k)) * s0.clone();
                    entries[at(i, l, j, k)] = simplify(
                        &(s4[at(i, l, j, k)].clone() - c1.clone() * sym + c2.clone() * tr),
                    );
                }
            }
        }
    }
    Ok(ParaCrInvariant { n, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::{bindings, parse};

    fn pair(f1: &str, f2: &str) -> SystemOde {
        SystemOde::new(
            "t",
            vec!["z1".into(), "z2".into()],
            vec!["p1".into(), "p2".into()],
            vec![parse(f1).unwrap(), parse(f2).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn trivial_pair_has_zero_invariants() {
        let sys = pair("0", "0");
        assert!(fels_torsion(&sys).unwrap().is_zero());
        assert!(fels_curvature(&sys).unwrap().is_zero());
    }

    #[test]
    fn flat_lewy_pair_is_torsion_free_with_nonzero_curvature() {
        let sys = pair("0", "-2*p2^2/(p1 - z2)");
        let t = fels_torsion(&sys).unwrap();
        assert!(t.is_zero(), "T = {:?}", t.entries);
        let c = fels_curvature(&sys).unwrap();
        assert!(!c.is_zero());
        // quartic coefficients: W3 = W4 = 0 in these jet coordinates,
        // W0 = 12 p2^2/(p1-z2)^4 (cross-checked with an independent CAS)
        let (_, quartic) = binary_forms(&t, &c).unwrap();
        assert!(quartic.w[3].is_zero());
        assert!(quartic.w[4].is_zero());
        let w0_expected = parse("12*p2^2/(p1 - z2)^4").unwrap();
        assert!(simplify(&(quartic.w[0].clone() - w0_expected)).is_zero());
    }

    #[test]
    fn chains_pair_is_torsion_free() {
        // chains for n=1 written as a pair with independent variable z
        let sys = SystemOde::new(
            "z",
            vec!["t1".into(), "q1".into()],
            vec!["tp1".into(), "qp1".into()],
            vec![
                Expr::zero(),
                parse("2*qp1*tp1/(q1*tp1 - 1)*qp1").unwrap(),
            ],
        )
        .unwrap();
        let t = fels_torsion(&sys).unwrap();
        assert!(t.is_zero(), "chains torsion = {:?}", t.entries);
        // numeric cross-check at 10 points
        for i in 0..10 {
            let s = 0.3 + 0.11 * i as f64;
            let pt = bindings([
                ("z", s),
                ("t1", 1.0 + s),
                ("q1", 0.5 - s),
                ("tp1", 0.7 + 0.1 * s),
                ("qp1", -0.4 + 0.2 * s),
            ]);
            let m = t.eval(&pt).unwrap();
            assert!(m.norm() < 1e-12);
        }
    }

    #[test]
    fn trace_identities_on_random_polynomial_pair() {
        let sys = pair(
            "1/3*p1^3 + 2*p1*p2 - z1*p2^2 + t*z2",
            "p2^3 - 1/2*p1^2*p2 + z2*p1 + t^2",
        );
        let t = fels_torsion(&sys).unwrap();
        assert!(t.trace().is_zero());
        let c = fels_curvature(&sys).unwrap();
        // full symmetry in (j,k,l)
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        assert_eq!(c.get(i, j, k, l), c.get(i, k, j, l));
                        assert_eq!(c.get(i, j, k, l), c.get(i, j, l, k));
                    }
                }
            }
        }
        // trace C^i_{ijk} = 0
        for j in 0..2 {
            for k in 0..2 {
                let tr = simplify(&Expr::add(
                    (0..2).map(|i| c.get(i, i, j, k).clone()),
                ));
                assert!(tr.is_zero(), "C trace ({j},{k}) = {tr}");
            }
        }
    }

    #[test]
    fn cubic_in_p_has_pure_trace_curvature() {
        // third p-derivatives of a degree <= 2 polynomial vanish entirely
        let sys = pair("p1^2 + p2^2 + z1", "p1*p2 + t");
        let c = fels_curvature(&sys).unwrap();
        assert!(c.is_zero());
    }

    #[test]
    fn binary_form_extraction_diagonal_torsion() {
        let lam = parse("t").unwrap();
        let t = TorsionTensor {
            n: 2,
            entries: vec![
                vec![lam.clone(), Expr::zero()],
                vec![Expr::zero(), simplify(&lam.clone().neg())],
            ],
        };
        let c = fels_curvature(&pair("0", "0")).unwrap();
        let (quad, _) = binary_forms(&t, &c).unwrap();
        assert!(quad.a[0].is_zero());
        assert!(quad.a[2].is_zero());
        assert!(simplify(&(quad.a[1].clone() + lam)).is_zero());
    }

    #[test]
    fn root_profile_monomial_quartic() {
        // (W0..W4) = (0,0,1,0,0): 6 x^2 y^2 -> roots {0 (x2), inf (x2)}
        let out = root_profile(&[0.0, 0.0, 6.0, 0.0, 0.0], 1e-7);
        let p = out.profile().unwrap();
        assert!(p.is_two_double_real(), "{p:?}");
        assert_eq!(p.roots[0].value, Some(0.0));
        assert_eq!(p.roots[1].value, None);
    }

    #[test]
    fn root_profile_quadric_x_and_infinity() {
        // (0, 1, 0): 2xy -> {0, inf}, both simple real
        let out = root_profile(&[0.0, 2.0, 0.0], 1e-7);
        let p = out.profile().unwrap();
        assert_eq!(p.roots.len(), 2);
        assert!(p.roots.iter().all(|r| r.real && r.mult == 1));
        assert!(p.roots.iter().any(|r| r.value.is_none()));
    }

    #[test]
    fn root_profile_x4_minus_1() {
        let out = root_profile(&[1.0, 0.0, 0.0, 0.0, -1.0], 1e-7);
        let p = out.profile().unwrap();
        assert_eq!(p.roots.len(), 4);
        assert!(!p.has_repeated());
        let real: Vec<f64> = p.roots.iter().filter(|r| r.real).map(|r| r.value.unwrap()).collect();
        assert_eq!(real.len(), 2);
        assert!((real[0] + 1.0).abs() < 1e-8 && (real[1] - 1.0).abs() < 1e-8);
        assert_eq!(p.roots.iter().filter(|r| !r.real).count(), 2);
    }

    #[test]
    fn root_profile_zero_form() {
        assert!(matches!(
            root_profile(&[0.0, 0.0, 0.0], 1e-7),
            ProfileOutcome::IdenticallyZero
        ));
    }

    #[test]
    fn root_profile_scale_invariant() {
        let base = [1.0, -2.0, 0.5, 3.0, -1.0];
        let scaled: Vec<f64> = base.iter().map(|c| c * 37.5).collect();
        let p1 = root_profile(&base, 1e-7);
        let p2 = root_profile(&scaled, 1e-7);
        let (p1, p2) = (p1.profile().unwrap(), p2.profile().unwrap());
        assert_eq!(p1.roots.len(), p2.roots.len());
        for (a, b) in p1.roots.iter().zip(&p2.roots) {
            assert_eq!(a.mult, b.mult);
            assert_eq!(a.real, b.real);
            match (a.value, b.value) {
                (Some(x), Some(y)) => assert!((x - y).abs() < 1e-8),
                (None, None) => {}
                _ => panic!("profiles disagree"),
            }
        }
    }

    #[test]
    fn scalar_invariants_flat_and_sqrt() {
        let (p1, q1) = scalar_invariants(&Expr::zero(), "t", "z", "p");
        assert!(p1.is_zero() && q1.is_zero());
        let (p1, q1) = scalar_invariants(&parse("sqrt(p)").unwrap(), "t", "z", "p");
        assert!(simplify(&(q1 - parse("-15/16*p^(-7/2)").unwrap())).is_zero());
        assert!(simplify(&(p1 - parse("-15/16*p^(-5/2)").unwrap())).is_zero());
    }

    #[test]
    fn q1_vanishes_for_cubic_rhs() {
        let f = parse("2*p^3 - 1/3*p^2 + 5*p - 7").unwrap();
        let (_, q1) = scalar_invariants(&f, "t", "z", "p");
        assert!(q1.is_zero());
    }

    #[test]
    fn paracr_invariant_flat_and_linear() {
        let ps = vec!["q1".to_string(), "q2".to_string()];
        let zero = vec![
            vec![Expr::zero(), Expr::zero()],
            vec![Expr::zero(), Expr::zero()],
        ];
        assert!(paracr_invariant(&zero, &ps).unwrap().is_zero());
        let lin = vec![
            vec![parse("q1 + 2*q2").unwrap(), parse("q2").unwrap()],
            vec![parse("q2").unwrap(), parse("3*q1").unwrap()],
        ];
        assert!(paracr_invariant(&lin, &ps).unwrap().is_zero());
    }

    #[test]
    fn paracr_invariant_quadratic_example() {
        // f11 = q2^2, others 0: S^{22}_{11} = -2; traces vanish after correction
        let ps = vec!["q1".to_string(), "q2".to_string()];
        let f = vec![
            vec![parse("q2^2").unwrap(), Expr::zero()],
            vec![Expr::zero(), Expr::zero()],
        ];
        let k = paracr_invariant(&f, &ps).unwrap();
        assert!(!k.is_zero());
        assert!(simplify(&(k.get(1, 1, 0, 0).clone() + Expr::int(2))).is_zero());
        for i in 0..2 {
            for j in 0..2 {
                assert!(k.trace(i, j).is_zero(), "K trace ({i},{j}) nonzero");
            }
        }
        // symmetry in (i,l) and (j,k)
        for i in 0..2 {
            for l in 0..2 {
                for j in 0..2 {
                    for k2 in 0..2 {
                        assert_eq!(k.get(i, l, j, k2), k.get(l, i, j, k2));
                        assert_eq!(k.get(i, l, j, k2), k.get(i, l, k2, j));
                    }
                }
            }
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let ps = vec!["q1".to_string(), "q2".to_string()];
        let f = vec![
            vec![Expr::zero(), parse("q1").unwrap()],
            vec![parse("q2").unwrap(), Expr::zero()],
        ];
        assert!(matches!(
            paracr_invariant(&f, &ps),
            Err(InvariantError::Asymmetric(..))
        ));
    }
}
