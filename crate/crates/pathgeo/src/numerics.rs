//! Damped Newton solves and an embedded Runge–Kutta 4(5) stepper with
//! post-step projection onto a constraint manifold.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("newton did not converge after {iters} iterations (residual {residual:.3e})")]
    NewtonDiverged { iters: usize, residual: f64 },
    #[error("singular jacobian in newton solve (residual {residual:.3e})")]
    SingularJacobian { residual: f64 },
    #[error("step size underflow at parameter {at}")]
    StepUnderflow { at: f64 },
    #[error("function evaluation failed: {0}")]
    Eval(String),
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonCfg {
    pub max_iters: usize,
    pub residual_tol: f64,
    pub step_tol: f64,
}

impl Default for NewtonCfg {
    fn default() -> Self {
        // damped, max 50 iterations, convergence at step < 1e-12 or
        // residual < 1e-10
        NewtonCfg { max_iters: 50, residual_tol: 1e-10, step_tol: 1e-12 }
    }
}

/// Damped Newton for `f(x) = 0` with a square system. `f` returns the
/// residual vector and the Jacobian.
pub fn newton_solve<F>(f: F, x0: &[f64], cfg: &NewtonCfg) -> Result<Vec<f64>, NumError>
where
    F: Fn(&[f64]) -> Result<(DVector<f64>, DMatrix<f64>), NumError>,
{
    let mut x = DVector::from_row_slice(x0);
    let (mut res, mut jac) = f(x.as_slice())?;
    for _ in 0..cfg.max_iters {
        let rnorm = res.norm();
        if rnorm < cfg.residual_tol {
            return Ok(x.as_slice().to_vec());
        }
        let lu = jac.clone().lu();
        let dx = match lu.solve(&(-&res)) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => return Err(NumError::SingularJacobian { residual: rnorm }),
        };
        // backtracking damping on the residual norm
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..25 {
            let cand = &x + &dx * lambda;
            match f(cand.as_slice()) {
                Ok((r2, j2)) if r2.norm().is_finite() && r2.norm() < rnorm => {
                    x = cand;
                    res = r2;
                    jac = j2;
                    accepted = true;
                    break;
                }
                _ => lambda *= 0.5,
            }
        }
        if !accepted {
            // full step as a last resort
            let cand = &x + &dx;
            match f(cand.as_slice()) {
                Ok((r2, j2)) => {
                    x = cand;
                    res = r2;
                    jac = j2;
                }
                Err(e) => return Err(e),
            }
        }
        if (dx.norm() * lambda) < cfg.step_tol {
            break;
        }
    }
    let rnorm = res.norm();
    if rnorm < cfg.residual_tol {
        Ok(x.as_slice().to_vec())
    } else {
        Err(NumError::NewtonDiverged { iters: cfg.max_iters, residual: rnorm })
    }
}

/// Gauss–Newton least-squares solve for (possibly non-square) `f(x) = 0`,
/// used to seed intersections cut out by fewer constraints than unknowns.
pub fn gauss_newton_solve<F>(f: F, x0: &[f64], cfg: &NewtonCfg) -> Result<Vec<f64>, NumError>
where
    F: Fn(&[f64]) -> Result<(DVector<f64>, DMatrix<f64>), NumError>,
{
    let mut x = DVector::from_row_slice(x0);
    for _ in 0..cfg.max_iters {
        let (res, jac) = f(x.as_slice())?;
        let rnorm = res.norm();
        if rnorm < cfg.residual_tol {
            return Ok(x.as_slice().to_vec());
        }
        let jt = jac.transpose();
        let normal = &jt * &jac;
        let rhs = &jt * &res;
        let dx = match normal.lu().solve(&(-rhs)) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => return Err(NumError::SingularJacobian { residual: rnorm }),
        };
        if dx.norm() < cfg.step_tol {
            break;
        }
        x += dx;
    }
    let (res, _) = f(x.as_slice())?;
    if res.norm() < cfg.residual_tol {
        Ok(x.as_slice().to_vec())
    } else {
        Err(NumError::NewtonDiverged { iters: cfg.max_iters, residual: res.norm() })
    }
}

/// Orthogonal projection onto `g(x) = 0` by Gauss–Newton steps
/// `x ← x − Jᵀ(JJᵀ)⁻¹ g(x)`.
pub fn project_onto_constraints<F>(
    g: F,
    x0: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>, NumError>
where
    F: Fn(&[f64]) -> Result<(DVector<f64>, DMatrix<f64>), NumError>,
{
    let mut x = DVector::from_row_slice(x0);
    for _ in 0..max_iters {
        let (res, jac) = g(x.as_slice())?;
        if res.norm() < tol {
            return Ok(x.as_slice().to_vec());
        }
        let jt = jac.transpose();
        let gram = &jac * &jt;
        let lam = match gram.lu().solve(&res) {
            Some(l) if l.iter().all(|v| v.is_finite()) => l,
            _ => return Err(NumError::SingularJacobian { residual: res.norm() }),
        };
        x -= jt * lam;
    }
    let (res, _) = g(x.as_slice())?;
    if res.norm() < tol {
        Ok(x.as_slice().to_vec())
    } else {
        Err(NumError::NewtonDiverged { iters: max_iters, residual: res.norm() })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RkCfg {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for RkCfg {
    fn default() -> Self {
        RkCfg { abs_tol: 1e-10, rel_tol: 1e-8, h_min: 1e-12, h_max: 0.5 }
    }
}

/// One adaptive Dormand–Prince 4(5) step from `(s, y)`; returns
/// `(s_next, y_next, h_used, h_suggest)`.
pub fn rk45_step<F>(
    f: &F,
    s: f64,
    y: &[f64],
    h_try: f64,
    cfg: &RkCfg,
) -> Result<(f64, Vec<f64>, f64, f64), NumError>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>, NumError>,
{
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let dim = y.len();
    let sign = h_try.signum();
    let mut h = h_try.abs().clamp(cfg.h_min, cfg.h_max) * sign;
    for _ in 0..60 {
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        k.push(f(s, y)?);
        let mut failed = false;
        for stage in 0..6 {
            let mut ys = y.to_vec();
            for (j, kj) in k.iter().enumerate() {
                let a = A[stage][j];
                if a != 0.0 {
                    for d in 0..dim {
                        ys[d] += h * a * kj[d];
                    }
                }
            }
            match f(s + C[stage] * h, &ys) {
                Ok(ks) => k.push(ks),
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        if !failed {
            let mut y5 = y.to_vec();
            let mut y4 = y.to_vec();
            for (j, kj) in k.iter().enumerate() {
                for d in 0..dim {
                    y5[d] += h * B5[j] * kj[d];
                    y4[d] += h * B4[j] * kj[d];
                }
            }
            let mut err = 0.0f64;
            for d in 0..dim {
                let sc = cfg.abs_tol + cfg.rel_tol * y[d].abs().max(y5[d].abs());
                err = err.max(((y5[d] - y4[d]) / sc).abs());
            }
            if err <= 1.0 {
                let grow = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
                let h_next = (h.abs() * grow).min(cfg.h_max) * sign;
                return Ok((s + h, y5, h, h_next));
            }
            let shrink = (0.9 * err.powf(-0.25)).clamp(0.1, 0.9);
            h *= shrink;
        } else {
            h *= 0.5;
        }
        if h.abs() < cfg.h_min {
            return Err(NumError::StepUnderflow { at: s });
        }
    }
    Err(NumError::StepUnderflow { at: s })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_square_root() {
        let f = |x: &[f64]| {
            let r = DVector::from_row_slice(&[x[0] * x[0] - 2.0]);
            let j = DMatrix::from_row_slice(1, 1, &[2.0 * x[0]]);
            Ok((r, j))
        };
        let x = newton_solve(f, &[1.0], &NewtonCfg::default()).unwrap();
        assert!((x[0] - 2.0f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn newton_detects_singular() {
        let f = |_x: &[f64]| {
            let r = DVector::from_row_slice(&[1.0]);
            let j = DMatrix::from_row_slice(1, 1, &[0.0]);
            Ok((r, j))
        };
        assert!(matches!(
            newton_solve(f, &[0.0], &NewtonCfg::default()),
            Err(NumError::SingularJacobian { .. })
        ));
    }

    #[test]
    fn projection_reaches_circle() {
        let g = |x: &[f64]| {
            let r = DVector::from_row_slice(&[x[0] * x[0] + x[1] * x[1] - 1.0]);
            let j = DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]]);
            Ok((r, j))
        };
        let p = project_onto_constraints(g, &[1.3, 0.4], 1e-12, 50).unwrap();
        assert!((p[0] * p[0] + p[1] * p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rk45_integrates_exponential() {
        let f = |_s: f64, y: &[f64]| Ok(vec![y[0]]);
        let cfg = RkCfg::default();
        let mut s = 0.0;
        let mut y = vec![1.0];
        let mut h = 0.01f64;
        while s < 1.0 {
            let hh = h.min(1.0 - s).max(cfg.h_min);
            let (s2, y2, _, h2) = rk45_step(&f, s, &y, hh, &cfg).unwrap();
            s = s2;
            y = y2;
            h = h2;
        }
        assert!((y[0] - 1.0f64.exp()).abs() < 1e-7, "got {}", y[0]);
    }
}
