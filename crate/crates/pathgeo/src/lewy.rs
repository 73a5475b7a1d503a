//! Lewy curves: the numeric elimination recipe for their second-order
//! right-hand sides, the closed-form systems (flat pair, chains, the cubic
//! catalog pair), constrained trajectory tracing with residual monitoring,
//! and the recipe-vs-closed-form cross check.

use crate::jetcalc::SystemOde;
use crate::numerics::{
    newton_solve, project_onto_constraints, rk45_step, NewtonCfg, NumError, RkCfg,
};
use crate::paracr::{incidence, DefiningFunction, ParaCrError};
use crate::symexpr::{differentiate, evaluate, parse, simplify, Bindings, Expr};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LewyError {
    #[error("chart PTM1 requires n = 1, got n = {0}")]
    Ptm1NeedsN1(usize),
    #[error("recipe stage '{stage}' failed: {source}")]
    Stage { stage: &'static str, source: NumError },
    #[error("jet lies on the excluded locus: {0}")]
    ExcludedLocus(String),
    #[error("only {found} of the requested {want} admissible jets were found")]
    TooFewAdmissible { found: usize, want: usize },
    #[error("start point violates the constraints (residual {0:.3e})")]
    BadStart(f64),
    #[error("spec invariant violated: {0}")]
    BadSpec(String),
    #[error(transparent)]
    ParaCr(#[from] ParaCrError),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Coordinate chart in which a flat-model Lewy system is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LewyChart {
    /// `(t; z, b)`: `z'' = 0`, `b'' = -2 b'^2/(z' - b)` (n = 1 only).
    PTM1,
    /// `(z; t^i, a_i)`: `t'' = 0`, `a'' = -2 (a'·t')/(1 - a·t') a'`.
    PTstarM1,
}

/// Closed-form system for Lewy curves of the flat structure.
pub fn flat_lewy_system(n: usize, chart: LewyChart) -> Result<SystemOde, LewyError> {
    match chart {
        LewyChart::PTM1 => {
            if n != 1 {
                return Err(LewyError::Ptm1NeedsN1(n));
            }
            Ok(SystemOde::new(
                "t",
                vec!["z".into(), "b".into()],
                vec!["zp".into(), "bp".into()],
                vec![Expr::zero(), parse("-2*bp^2/(zp - b)").unwrap()],
            )
            .expect("static system"))
        }
        LewyChart::PTstarM1 => {
            let states: Vec<String> = (1..=n)
                .map(|i| format!("t{i}"))
                .chain((1..=n).map(|i| format!("a{i}")))
                .collect();
            let derivs: Vec<String> = (1..=n)
                .map(|i| format!("tp{i}"))
                .chain((1..=n).map(|i| format!("ap{i}")))
                .collect();
            let dot_apt = Expr::add(
                (1..=n).map(|i| Expr::sym(format!("ap{i}")) * Expr::sym(format!("tp{i}"))),
            );
            let dot_at = Expr::add(
                (1..=n).map(|i| Expr::sym(format!("a{i}")) * Expr::sym(format!("tp{i}"))),
            );
            let factor = simplify(
                &(Expr::int(-2) * dot_apt * Expr::pow(Expr::one() - dot_at, Expr::int(-1))),
            );
            let mut rhs = vec![Expr::zero(); n];
            for i in 1..=n {
                rhs.push(simplify(&(factor.clone() * Expr::sym(format!("ap{i}")))));
            }
            Ok(SystemOde::new("z", states, derivs, rhs).expect("static system"))
        }
    }
}

/// Closed-form system for chains of the flat structure:
/// `(t^i)'' = 0`, `(p_i)'' = 2 (p'·t')/(p·t' - 1) p_i'` with `z` independent.
pub fn chains_system(n: usize) -> SystemOde {
    let states: Vec<String> = (1..=n)
        .map(|i| format!("t{i}"))
        .chain((1..=n).map(|i| format!("p{i}")))
        .collect();
    let derivs: Vec<String> = (1..=n)
        .map(|i| format!("tp{i}"))
        .chain((1..=n).map(|i| format!("pp{i}")))
        .collect();
    let dot_ppt = Expr::add(
        (1..=n).map(|i| Expr::sym(format!("pp{i}")) * Expr::sym(format!("tp{i}"))),
    );
    let dot_pt = Expr::add(
        (1..=n).map(|i| Expr::sym(format!("p{i}")) * Expr::sym(format!("tp{i}"))),
    );
    let factor = simplify(
        &(Expr::int(2) * dot_ppt * Expr::pow(dot_pt - Expr::one(), Expr::int(-1))),
    );
    let mut rhs = vec![Expr::zero(); n];
    for i in 1..=n {
        rhs.push(simplify(&(factor.clone() * Expr::sym(format!("pp{i}")))));
    }
    SystemOde::new("z", states, derivs, rhs).expect("static system")
}

/// Closed-form pair for Lewy curves of the cubic catalog structure
/// (`z'' = sqrt(z')`). The second right-hand side is the elimination-recipe
/// result on the `+` sheet of the x̂-quadratic; cross-checked against the
/// recipe by `residual_check`.
pub fn cubic_lewy_system() -> SystemOde {
    let g = parse(
        "(-2*bp^2*(bp + 1)^2*(t + b) + 4*sqrt(zp)*bp^2 \
         + 2*bp^3*sqrt((t + b)^2*bp*(bp + 1) - 4*zp*bp)) \
         / (bp*(4*zp - (t + b)^2))",
    )
    .unwrap();
    SystemOde::new(
        "t",
        vec!["z".into(), "b".into()],
        vec!["zp".into(), "bp".into()],
        vec![parse("sqrt(zp)").unwrap(), g],
    )
    .expect("static system")
}

/// 1-jet `(t, z, v, z', v')` of a candidate Lewy curve in the chart that
/// retains one M2 coordinate `v` (the other is eliminated through `Φ = 0`).
#[derive(Debug, Clone, Copy)]
pub struct LewyJet {
    pub t: f64,
    pub z: f64,
    pub v: f64,
    pub zp: f64,
    pub vp: f64,
}

/// Newton seeds for the three solves of the recipe; continuation feeds the
/// previous accepted values back in.
#[derive(Debug, Clone, Copy)]
pub struct RecipeSeeds {
    pub w: f64,
    /// Seed for `(ŷ_0, ŷ_1)` in y-chart order.
    pub y_hat: [f64; 2],
    /// Seed for `(t̂, ẑ)`.
    pub x_hat: [f64; 2],
}

/// How the recipe's Newton solves are seeded.
#[derive(Debug, Clone, Copy)]
pub enum SeedRule {
    /// Deterministic fallback list derived from the jet; fine for structures
    /// whose solves are effectively linear (the flat catalog entry).
    Generic,
    /// Branch-consistent seeds for the cubic catalog entry, computed from the
    /// recipe's own quadratic solves on the `+` sheet.
    CubicSheet,
    /// Explicit seeds (continuation along a trace).
    Explicit(RecipeSeeds),
}

/// Second derivatives `(z'', v'')` produced by the recipe, plus the solved
/// configuration for branch inspection and continuation.
#[derive(Debug, Clone)]
pub struct LewyRhs {
    pub f: f64,
    pub g: f64,
    pub w: f64,
    pub wp: f64,
    pub y_hat: [f64; 2],
    pub x_hat: [f64; 2],
}

impl LewyRhs {
    pub fn seeds(&self) -> RecipeSeeds {
        RecipeSeeds { w: self.w, y_hat: self.y_hat, x_hat: self.x_hat }
    }
}

/// Precomputed first and second partials of a 3-dimensional defining
/// function, with one M2 coordinate designated for elimination.
pub struct LewyRecipe {
    pub phi: DefiningFunction,
    pub eliminated: usize,
    syms: [String; 4],
    d1: Vec<Expr>,
    d2: Vec<Vec<Expr>>,
}

impl LewyRecipe {
    pub fn new(phi: &DefiningFunction, eliminated: usize) -> LewyRecipe {
        assert_eq!(phi.n, 1, "the jet recipe is for n = 1");
        assert!(eliminated < 2);
        let syms = [
            phi.x_chart[0].clone(),
            phi.x_chart[1].clone(),
            phi.y_chart[0].clone(),
            phi.y_chart[1].clone(),
        ];
        let d1: Vec<Expr> = syms.iter().map(|s| differentiate(&phi.phi, s)).collect();
        let d2: Vec<Vec<Expr>> = d1
            .iter()
            .map(|d| syms.iter().map(|s| differentiate(d, s)).collect())
            .collect();
        LewyRecipe { phi: phi.clone(), eliminated, syms, d1, d2 }
    }

    /// Index (into `syms`) of the retained M2 coordinate.
    fn retained_slot(&self) -> usize {
        2 + (1 - self.eliminated)
    }

    fn eliminated_slot(&self) -> usize {
        2 + self.eliminated
    }

    fn bindings(&self, vals: [f64; 4]) -> Bindings {
        self.syms
            .iter()
            .cloned()
            .zip(vals)
            .collect()
    }

    fn eval(&self, e: &Expr, vals: [f64; 4]) -> Result<f64, NumError> {
        evaluate(e, &self.bindings(vals)).map_err(|er| NumError::Eval(er.to_string()))
    }

    fn seed_candidates(&self, jet: &LewyJet, rule: &SeedRule) -> Vec<RecipeSeeds> {
        match rule {
            SeedRule::Explicit(s) => vec![*s],
            SeedRule::Generic => {
                let w0 = jet.z - jet.v * jet.t;
                vec![
                    RecipeSeeds {
                        w: w0,
                        y_hat: [jet.zp, jet.z - jet.zp * jet.t],
                        x_hat: [jet.t + 0.5, jet.z + 0.5],
                    },
                    RecipeSeeds {
                        w: 0.1,
                        y_hat: [0.5, 0.5],
                        x_hat: [jet.t - 0.5, jet.z - 0.5],
                    },
                    RecipeSeeds { w: -0.1, y_hat: [-0.5, 0.5], x_hat: [-1.0, 0.4] },
                    RecipeSeeds { w: 1.0, y_hat: [jet.v, 0.0], x_hat: [1.0, 0.0] },
                ]
            }
            SeedRule::CubicSheet => {
                // Φ = z - (t³/12 + b t²/4 + b² t/4 + a), retained v = b.
                let (t, z, b, zp, bp) = (jet.t, jet.z, jet.v, jet.zp, jet.vp);
                if zp <= 0.0 || bp.abs() < 1e-9 {
                    return Vec::new();
                }
                let a = z - t.powi(3) / 12.0 - b * t * t / 4.0 - b * b * t / 4.0;
                let ap = zp - t * t / 4.0 - b * t / 2.0 - b * b / 4.0
                    - (t * t / 4.0 + b * t / 2.0) * bp;
                let disc = b * b - 4.0 * ap / bp;
                if disc < 0.0 {
                    return Vec::new();
                }
                let bhat = -t + 2.0 * zp.sqrt();
                let ahat = z - t.powi(3) / 12.0 - bhat * t * t / 4.0 - bhat * bhat * t / 4.0;
                let that = -b + disc.sqrt(); // + sheet
                let zhat = that.powi(3) / 12.0
                    + b * that * that / 4.0
                    + b * b * that / 4.0
                    + a;
                vec![RecipeSeeds { w: a, y_hat: [ahat, bhat], x_hat: [that, zhat] }]
            }
        }
    }

    /// The elimination recipe at one jet: solves the eliminated coordinate,
    /// the ŷ pair and x̂ pair, then the pair of linear second-derivative
    /// relations. Returns `(z'', v'')` with the solved configuration.
    pub fn rhs(&self, jet: &LewyJet, rule: &SeedRule) -> Result<LewyRhs, LewyError> {
        let seeds = self.seed_candidates(jet, rule);
        if seeds.is_empty() {
            return Err(LewyError::ExcludedLocus("no admissible branch seed".into()));
        }
        let mut last: Option<LewyError> = None;
        for s in &seeds {
            match self.rhs_seeded(jet, s) {
                Ok(r) => return Ok(r),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one seed"))
    }

    fn rhs_seeded(&self, jet: &LewyJet, seeds: &RecipeSeeds) -> Result<LewyRhs, LewyError> {
        let cfg = NewtonCfg::default();
        let ret = self.retained_slot();
        let eli = self.eliminated_slot();
        let base = |w: f64| -> [f64; 4] {
            let mut v = [jet.t, jet.z, 0.0, 0.0];
            v[ret] = jet.v;
            v[eli] = w;
            v
        };
        // 1. eliminated coordinate from Φ = 0
        let w = {
            let f = |u: &[f64]| {
                let vals = base(u[0]);
                let r = self.eval(&self.phi.phi, vals)?;
                let j = self.eval(&self.d1[eli], vals)?;
                Ok((DVector::from_row_slice(&[r]), DMatrix::from_row_slice(1, 1, &[j])))
            };
            newton_solve(f, &[seeds.w], &cfg)
                .map_err(|source| LewyError::Stage { stage: "eliminated coordinate", source })?[0]
        };
        let here = base(w);
        // 2. derivative of the eliminated coordinate from the total derivative
        let phi_w = self.eval(&self.d1[eli], here).map_err(LewyError::Num)?;
        if phi_w.abs() < 1e-12 {
            return Err(LewyError::ExcludedLocus(format!(
                "Φ_{} vanishes at the jet",
                self.syms[eli]
            )));
        }
        let wp = -(self.eval(&self.d1[0], here)?
            + self.eval(&self.d1[1], here)? * jet.zp
            + self.eval(&self.d1[ret], here)? * jet.vp)
            / phi_w;
        let mut yp = [0.0; 2];
        yp[self.eliminated] = wp;
        yp[1 - self.eliminated] = jet.vp;
        // 3. ŷ from Φ(x, ŷ) = 0 and its first t-derivative along lifts
        let y_hat = {
            let f = |u: &[f64]| {
                let vals = [jet.t, jet.z, u[0], u[1]];
                let r0 = self.eval(&self.phi.phi, vals)?;
                let r1 =
                    self.eval(&self.d1[0], vals)? + self.eval(&self.d1[1], vals)? * jet.zp;
                let j = DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        self.eval(&self.d1[2], vals)?,
                        self.eval(&self.d1[3], vals)?,
                        self.eval(&self.d2[0][2], vals)?
                            + self.eval(&self.d2[1][2], vals)? * jet.zp,
                        self.eval(&self.d2[0][3], vals)?
                            + self.eval(&self.d2[1][3], vals)? * jet.zp,
                    ],
                );
                Ok((DVector::from_row_slice(&[r0, r1]), j))
            };
            newton_solve(f, &seeds.y_hat, &cfg)
                .map_err(|source| LewyError::Stage { stage: "y-hat pair", source })?
        };
        // 4. x̂ from Φ(x̂, y) = 0 and tangency Φ_{y0} y0' + Φ_{y1} y1' = 0
        let x_hat = {
            let f = |u: &[f64]| {
                let vals = [u[0], u[1], here[2], here[3]];
                let r0 = self.eval(&self.phi.phi, vals)?;
                let r1 = self.eval(&self.d1[2], vals)? * yp[0]
                    + self.eval(&self.d1[3], vals)? * yp[1];
                let j = DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        self.eval(&self.d1[0], vals)?,
                        self.eval(&self.d1[1], vals)?,
                        self.eval(&self.d2[2][0], vals)? * yp[0]
                            + self.eval(&self.d2[3][0], vals)? * yp[1],
                        self.eval(&self.d2[2][1], vals)? * yp[0]
                            + self.eval(&self.d2[3][1], vals)? * yp[1],
                    ],
                );
                Ok((DVector::from_row_slice(&[r0, r1]), j))
            };
            newton_solve(f, &seeds.x_hat, &cfg)
                .map_err(|source| LewyError::Stage { stage: "x-hat pair", source })?
        };
        // 5. z'' from the second derivative of Φ(x, ŷ) = 0
        let at_yhat = [jet.t, jet.z, y_hat[0], y_hat[1]];
        let phi_z = self.eval(&self.d1[1], at_yhat)?;
        if phi_z.abs() < 1e-12 {
            return Err(LewyError::ExcludedLocus("Φ_z vanishes at ŷ".into()));
        }
        let zpp = -(self.eval(&self.d2[0][0], at_yhat)?
            + 2.0 * self.eval(&self.d2[0][1], at_yhat)? * jet.zp
            + self.eval(&self.d2[1][1], at_yhat)? * jet.zp * jet.zp)
            / phi_z;
        // 6. (y0'', y1'') from the second derivatives of Φ(x̂, y) = 0 and of
        //    Φ(x, y) = 0 along the curve
        let at_xhat = [x_hat[0], x_hat[1], here[2], here[3]];
        let r1 = self.eval(&self.d2[2][2], at_xhat)? * yp[0] * yp[0]
            + 2.0 * self.eval(&self.d2[2][3], at_xhat)? * yp[0] * yp[1]
            + self.eval(&self.d2[3][3], at_xhat)? * yp[1] * yp[1];
        let row1 = [self.eval(&self.d1[2], at_xhat)?, self.eval(&self.d1[3], at_xhat)?];
        let r2 = self.eval(&self.d2[0][0], here)?
            + self.eval(&self.d2[1][1], here)? * jet.zp * jet.zp
            + self.eval(&self.d2[2][2], here)? * yp[0] * yp[0]
            + self.eval(&self.d2[3][3], here)? * yp[1] * yp[1]
            + 2.0
                * (self.eval(&self.d2[0][1], here)? * jet.zp
                    + self.eval(&self.d2[0][2], here)? * yp[0]
                    + self.eval(&self.d2[0][3], here)? * yp[1]
                    + self.eval(&self.d2[1][2], here)? * jet.zp * yp[0]
                    + self.eval(&self.d2[1][3], here)? * jet.zp * yp[1]
                    + self.eval(&self.d2[2][3], here)? * yp[0] * yp[1])
            + self.eval(&self.d1[1], here)? * zpp;
        let row2 = [self.eval(&self.d1[2], here)?, self.eval(&self.d1[3], here)?];
        let m = DMatrix::from_row_slice(2, 2, &[row1[0], row1[1], row2[0], row2[1]]);
        let rhs = DVector::from_row_slice(&[-r1, -r2]);
        let ypp = m
            .lu()
            .solve(&rhs)
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or_else(|| LewyError::Stage {
                stage: "second-derivative pair",
                source: NumError::SingularJacobian { residual: 0.0 },
            })?;
        Ok(LewyRhs {
            f: zpp,
            g: ypp[1 - self.eliminated],
            w,
            wp,
            y_hat: [y_hat[0], y_hat[1]],
            x_hat: [x_hat[0], x_hat[1]],
        })
    }
}

// ---- residual check -------------------------------------------------------

/// Setup to cross-validate a closed-form system against the recipe.
pub struct RecipeSetup {
    pub phi: DefiningFunction,
    pub eliminated: usize,
    pub jet_box: [(f64, f64); 5],
    pub seed_rule: SeedRule,
}

impl RecipeSetup {
    pub fn from_catalog(entry: &crate::paracr::CatalogEntry) -> RecipeSetup {
        let seed_rule = match entry.name {
            "cubic" => SeedRule::CubicSheet,
            _ => SeedRule::Generic,
        };
        RecipeSetup {
            phi: entry.phi.clone(),
            eliminated: entry.eliminated,
            jet_box: entry.jet_box,
            seed_rule,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub trials: usize,
    pub admissible: usize,
    pub max_rel_dev: f64,
    pub seed: u64,
}

/// Draws random jets from the setup's box, runs the recipe, and compares both
/// right-hand sides with the closed-form system's; reports the max relative
/// deviation over the admissible jets.
pub fn residual_check(
    sys: &SystemOde,
    setup: &RecipeSetup,
    trials: usize,
    seed: u64,
    _tol: f64,
) -> Result<ResidualReport, LewyError> {
    assert_eq!(sys.n, 2, "closed-form Lewy systems are pairs");
    let recipe = LewyRecipe::new(&setup.phi, setup.eliminated);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut admissible = 0usize;
    let mut max_dev = 0.0f64;
    let mut draws = 0usize;
    let max_draws = trials * 60 + 100;
    while admissible < trials && draws < max_draws {
        draws += 1;
        let draw = |rng: &mut ChaCha8Rng, lohi: (f64, f64)| rng.gen_range(lohi.0..=lohi.1);
        let jet = LewyJet {
            t: draw(&mut rng, setup.jet_box[0]),
            z: draw(&mut rng, setup.jet_box[1]),
            v: draw(&mut rng, setup.jet_box[2]),
            zp: draw(&mut rng, setup.jet_box[3]),
            vp: draw(&mut rng, setup.jet_box[4]),
        };
        let rec = match recipe.rhs(&jet, &setup.seed_rule) {
            Ok(r) => r,
            Err(_) => continue,
        };
        // closed form at the same jet: states by position (z, v)
        let mut b = Bindings::new();
        b.insert(sys.independent.clone(), jet.t);
        b.insert(sys.states[0].clone(), jet.z);
        b.insert(sys.states[1].clone(), jet.v);
        b.insert(sys.derivs[0].clone(), jet.zp);
        b.insert(sys.derivs[1].clone(), jet.vp);
        let f_sys = match evaluate(&sys.rhs[0], &b) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let g_sys = match evaluate(&sys.rhs[1], &b) {
            Ok(v) => v,
            Err(_) => continue,
        };
        admissible += 1;
        let dev_f = (f_sys - rec.f).abs() / (1.0 + rec.f.abs());
        let dev_g = (g_sys - rec.g).abs() / (1.0 + rec.g.abs());
        max_dev = max_dev.max(dev_f).max(dev_g);
    }
    if admissible < trials / 2 {
        return Err(LewyError::TooFewAdmissible { found: admissible, want: trials });
    }
    Ok(ResidualReport { trials, admissible, max_rel_dev: max_dev, seed })
}

// ---- constrained tracing --------------------------------------------------

/// A Lewy curve's defining data: the structure's defining function plus the
/// parameter points in the two factors. Every pair `(x̂_i, ŷ_i)` must be
/// non-incident and the two point sets in general position.
#[derive(Debug, Clone)]
pub struct LewySpec {
    pub phi: DefiningFunction,
    pub x_hats: Vec<Bindings>,
    pub y_hats: Vec<Bindings>,
}

impl LewySpec {
    pub fn validate(&self, tol: f64) -> Result<(), LewyError> {
        if self.x_hats.len() != self.phi.n || self.y_hats.len() != self.phi.n {
            return Err(LewyError::BadSpec(format!(
                "need {} parameter points per factor",
                self.phi.n
            )));
        }
        for (xh, yh) in self.x_hats.iter().zip(&self.y_hats) {
            if incidence(&self.phi, xh, yh, tol)? {
                return Err(LewyError::BadSpec("parameter pair is incident".into()));
            }
        }
        if self.phi.n >= 2 {
            use crate::paracr::{general_position, Factor, GeneralPosition};
            let wx = &self.y_hats[0];
            let wy = &self.x_hats[0];
            for (factor, pts, witness) in [
                (Factor::X, &self.x_hats, wx),
                (Factor::Y, &self.y_hats, wy),
            ] {
                match general_position(&self.phi, factor, pts, witness, 1e-6)? {
                    GeneralPosition::InGeneralPosition => {}
                    other => {
                        return Err(LewyError::BadSpec(format!(
                            "parameter points not in general position: {other:?}"
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    /// All defining constraints of the curve as expressions over the product
    /// chart: `Φ(x, y)`, then `Φ(x̂_α, y)`, then `Φ(x, ŷ_α)`.
    pub fn constraints(&self) -> Result<Vec<Expr>, LewyError> {
        let mut out = vec![self.phi.phi.clone()];
        for xh in &self.x_hats {
            let mut map = std::collections::BTreeMap::new();
            for s in &self.phi.x_chart {
                let v = xh
                    .get(s)
                    .ok_or_else(|| LewyError::BadSpec(format!("x̂ misses '{s}'")))?;
                map.insert(s.clone(), Expr::float(*v));
            }
            out.push(crate::symexpr::substitute(&self.phi.phi, &map));
        }
        for yh in &self.y_hats {
            let mut map = std::collections::BTreeMap::new();
            for s in &self.phi.y_chart {
                let v = yh
                    .get(s)
                    .ok_or_else(|| LewyError::BadSpec(format!("ŷ misses '{s}'")))?;
                map.insert(s.clone(), Expr::float(*v));
            }
            out.push(crate::symexpr::substitute(&self.phi.phi, &map));
        }
        Ok(out)
    }
}

/// A numerically integrated Lewy curve with per-step residuals.
#[derive(Debug, Clone, Serialize)]
pub struct LewyTrace {
    /// Product-chart coordinate names, in column order.
    pub columns: Vec<String>,
    /// One row per accepted step: coordinate values.
    pub points: Vec<Vec<f64>>,
    /// Per-step residual of each defining constraint.
    pub residuals: Vec<Vec<f64>>,
    /// Step sizes taken.
    pub steps: Vec<f64>,
    /// Independent-variable switches: (step index, new chart symbol).
    pub chart_switches: Vec<(usize, String)>,
    pub max_residual: f64,
    /// Step at which the tolerance was first violated, if any.
    pub failed_at: Option<usize>,
}

impl LewyTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        for i in 0..self.residuals.first().map(Vec::len).unwrap_or(0) {
            out.push_str(&format!(",res{i}"));
        }
        out.push_str(",step\n");
        for (k, row) in self.points.iter().enumerate() {
            let coords: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            out.push_str(&coords.join(","));
            for r in &self.residuals[k] {
                out.push_str(&format!(",{r:.3e}"));
            }
            out.push_str(&format!(",{:.6e}\n", self.steps[k]));
        }
        out
    }
}

/// Traces the Lewy curve through `start` (a point of the product chart
/// satisfying all constraints to 1e-10) as the constrained intersection
/// flow: the velocity solves the differentiated constraints with the
/// independent coordinate's rate fixed to 1, integrated by RK45 with
/// post-step Newton projection back onto the constraint set.
pub fn trace_lewy(
    spec: &LewySpec,
    start: &Bindings,
    direction: f64,
    steps: usize,
    h0: f64,
    tol: f64,
) -> Result<LewyTrace, LewyError> {
    spec.validate(1e-8)?;
    let columns = spec.phi.all_symbols();
    let constraints = spec.constraints()?;
    let grads: Vec<Vec<Expr>> = constraints
        .iter()
        .map(|c| columns.iter().map(|s| differentiate(c, s)).collect())
        .collect();
    let m = constraints.len();
    let dim = columns.len();
    debug_assert_eq!(m + 1, dim);
    let start_vals: Vec<f64> = columns
        .iter()
        .map(|s| {
            start
                .get(s)
                .copied()
                .ok_or_else(|| LewyError::BadSpec(format!("start misses '{s}'")))
        })
        .collect::<Result<_, _>>()?;
    let bind = |vals: &[f64]| -> Bindings {
        columns.iter().cloned().zip(vals.iter().copied()).collect()
    };
    let residuals_at = |vals: &[f64]| -> Result<Vec<f64>, NumError> {
        let b = bind(vals);
        constraints
            .iter()
            .map(|c| evaluate(c, &b).map(f64::abs).map_err(|e| NumError::Eval(e.to_string())))
            .collect()
    };
    let r0 = residuals_at(&start_vals)?;
    let worst0 = r0.iter().cloned().fold(0.0, f64::max);
    if worst0 > 1e-10 {
        return Err(LewyError::BadStart(worst0));
    }
    // independent coordinate: t by default, may switch to z
    let t_idx = 0usize;
    let z_idx = spec.phi.n; // index of z in x_chart == product index
    let mut indep = t_idx;
    let mut chart_switches = Vec::new();
    let rk = RkCfg { rel_tol: tol, abs_tol: tol * 1e-2, ..RkCfg::default() };
    let proj_tol = tol * 1e-2;
    // velocity of the dependent coordinates when d(indep)/ds = 1
    let velocity = |indep: usize, vals: &[f64]| -> Result<Vec<f64>, NumError> {
        let b = bind(vals);
        let mut jac = DMatrix::zeros(m, m);
        let mut rhs = DVector::zeros(m);
        let mut col = 0usize;
        let mut dep_cols = Vec::with_capacity(m);
        for c in 0..dim {
            if c == indep {
                continue;
            }
            dep_cols.push(c);
            for (r, g) in grads.iter().enumerate() {
                jac[(r, col)] = evaluate(&g[c], &b).map_err(|e| NumError::Eval(e.to_string()))?;
            }
            col += 1;
        }
        for (r, g) in grads.iter().enumerate() {
            rhs[r] = -evaluate(&g[indep], &b).map_err(|e| NumError::Eval(e.to_string()))?;
        }
        let sol = jac
            .lu()
            .solve(&rhs)
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or(NumError::SingularJacobian { residual: 0.0 })?;
        let mut v = vec![0.0; dim];
        v[indep] = 1.0;
        for (k, c) in dep_cols.iter().enumerate() {
            v[*c] = sol[k];
        }
        Ok(v)
    };
    let mut vals = start_vals.clone();
    let mut points = vec![vals.clone()];
    let mut residual_log = vec![r0];
    let mut step_log = vec![0.0];
    let mut h = h0 * direction.signum();
    let mut max_residual = worst0;
    let mut failed_at = None;
    for k in 0..steps {
        // chart switch when the dependent velocities blow up
        let v = velocity(indep, &vals);
        let v = match v {
            Ok(v) if v.iter().map(|x| x.abs()).fold(0.0, f64::max) < 50.0 => v,
            _ => {
                let other = if indep == t_idx { z_idx } else { t_idx };
                indep = other;
                chart_switches.push((k, columns[indep].clone()));
                velocity(indep, &vals)?
            }
        };
        let _ = v;
        let indep_now = indep;
        let f = |_s: f64, dep: &[f64]| -> Result<Vec<f64>, NumError> {
            // dep carries all coordinates; indep evolves with rate 1
            let vv = velocity(indep_now, dep)?;
            Ok(vv)
        };
        let (_, next, h_used, h_next) = rk45_step(&f, 0.0, &vals, h, &rk)?;
        // orthogonal Newton projection back onto the constraint set
        let g = |x: &[f64]| -> Result<(DVector<f64>, DMatrix<f64>), NumError> {
            let b = bind(x);
            let mut res = DVector::zeros(m);
            let mut jac = DMatrix::zeros(m, dim);
            for (r, c) in constraints.iter().enumerate() {
                res[r] = evaluate(c, &b).map_err(|e| NumError::Eval(e.to_string()))?;
                for cdx in 0..dim {
                    jac[(r, cdx)] =
                        evaluate(&grads[r][cdx], &b).map_err(|e| NumError::Eval(e.to_string()))?;
                }
            }
            Ok((res, jac))
        };
        vals = project_onto_constraints(g, &next, proj_tol, 30)?;
        let res = residuals_at(&vals)?;
        let worst = res.iter().cloned().fold(0.0, f64::max);
        max_residual = max_residual.max(worst);
        points.push(vals.clone());
        residual_log.push(res);
        step_log.push(h_used);
        if worst > tol && failed_at.is_none() {
            failed_at = Some(k + 1);
            break;
        }
        h = h_next;
    }
    Ok(LewyTrace {
        columns,
        points,
        residuals: residual_log,
        steps: step_log,
        chart_switches,
        max_residual,
        failed_at,
    })
}

/// Finds a point on the Lewy curve of `spec` by Newton from a seeded random
/// start (deterministic in `seed`).
pub fn find_start(spec: &LewySpec, seed: u64) -> Result<Bindings, LewyError> {
    let columns = spec.phi.all_symbols();
    let constraints = spec.constraints()?;
    let grads: Vec<Vec<Expr>> = constraints
        .iter()
        .map(|c| columns.iter().map(|s| differentiate(c, s)).collect())
        .collect();
    let dim = columns.len();
    let m = constraints.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = |x: &[f64]| -> Result<(DVector<f64>, DMatrix<f64>), NumError> {
        let b: Bindings = columns.iter().cloned().zip(x.iter().copied()).collect();
        let mut res = DVector::zeros(m);
        let mut jac = DMatrix::zeros(m, dim);
        for (r, c) in constraints.iter().enumerate() {
            res[r] = evaluate(c, &b).map_err(|e| NumError::Eval(e.to_string()))?;
            for cdx in 0..dim {
                jac[(r, cdx)] =
                    evaluate(&grads[r][cdx], &b).map_err(|e| NumError::Eval(e.to_string()))?;
            }
        }
        Ok((res, jac))
    };
    for _ in 0..60 {
        let x0: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.2..1.2)).collect();
        if let Ok(x) = project_onto_constraints(&g, &x0, 1e-12, 80) {
            let b: Bindings = columns.iter().cloned().zip(x.iter().copied()).collect();
            return Ok(b);
        }
    }
    Err(LewyError::BadSpec("no start point found on the curve".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paracr::{catalog_cubic, catalog_flat};
    use crate::symexpr::bindings;

    #[test]
    fn flat_rhs_matches_printed_values() {
        let entry = catalog_flat();
        let recipe = LewyRecipe::new(&entry.phi, entry.eliminated);
        let jet = LewyJet { t: 0.0, z: 0.0, v: 0.0, zp: 1.0, vp: 1.0 };
        let r = recipe.rhs(&jet, &SeedRule::Generic).unwrap();
        assert!(r.f.abs() < 1e-12, "z'' = {}", r.f);
        assert!((r.g + 2.0).abs() < 1e-10, "v'' = {}", r.g);
        // v' = 0 kills the numerator
        let jet0 = LewyJet { t: 0.3, z: 0.4, v: 0.2, zp: 1.1, vp: 0.0 };
        let r0 = recipe.rhs(&jet0, &SeedRule::Generic).unwrap();
        assert!(r0.g.abs() < 1e-12);
    }

    #[test]
    fn flat_residual_check_tight() {
        let entry = catalog_flat();
        let sys = flat_lewy_system(1, LewyChart::PTM1).unwrap();
        let setup = RecipeSetup::from_catalog(&entry);
        let rep = residual_check(&sys, &setup, 20, 11, 1e-9).unwrap();
        assert!(rep.admissible >= 10);
        assert!(rep.max_rel_dev <= 1e-9, "max dev {}", rep.max_rel_dev);
    }

    #[test]
    fn cubic_residual_check() {
        let entry = catalog_cubic();
        let sys = cubic_lewy_system();
        let setup = RecipeSetup::from_catalog(&entry);
        let rep = residual_check(&sys, &setup, 12, 5, 1e-6).unwrap();
        assert!(rep.admissible >= 10);
        assert!(rep.max_rel_dev <= 1e-6, "max dev {}", rep.max_rel_dev);
    }

    #[test]
    fn chains_and_flat_lewy_coincide_after_renaming() {
        use crate::symexpr::equivalent;
        for n in 1..=3 {
            let chains = chains_system(n);
            let lewy = flat_lewy_system(n, LewyChart::PTstarM1).unwrap();
            // rename a_i -> p_i, ap_i -> pp_i
            let mut map = std::collections::BTreeMap::new();
            for i in 1..=n {
                map.insert(format!("a{i}"), Expr::sym(format!("p{i}")));
                map.insert(format!("ap{i}"), Expr::sym(format!("pp{i}")));
            }
            for k in 0..2 * n {
                let renamed = crate::symexpr::substitute(&lewy.rhs[k], &map);
                let r = equivalent(&renamed, &chains.rhs[k], 50, 1e-9, 3);
                assert!(r.is_equivalent(), "component {k} differs for n={n}: {r:?}");
            }
        }
    }

    #[test]
    fn chains_mismatched_chart_fails_against_flat_phi() {
        // chains written in the PT*M1 chart do not satisfy the PTM1 recipe:
        // the b = 1/a transformation is required first
        let entry = catalog_flat();
        let chains = chains_system(1);
        // express chains as a (t; z, b)-style pair by renaming only (no
        // transformation): t1 -> z-slot, p1 -> v-slot
        let renamed = SystemOde::new(
            "t",
            vec!["z".into(), "b".into()],
            vec!["zp".into(), "bp".into()],
            {
                let mut map = std::collections::BTreeMap::new();
                map.insert("t1".to_string(), Expr::sym("z"));
                map.insert("p1".to_string(), Expr::sym("b"));
                map.insert("tp1".to_string(), Expr::sym("zp"));
                map.insert("pp1".to_string(), Expr::sym("bp"));
                chains
                    .rhs
                    .iter()
                    .map(|e| crate::symexpr::substitute(e, &map))
                    .collect()
            },
        )
        .unwrap();
        let setup = RecipeSetup::from_catalog(&entry);
        match residual_check(&renamed, &setup, 16, 2, 1e-9) {
            Ok(rep) => assert!(rep.max_rel_dev > 1e-3, "unexpectedly matched: {rep:?}"),
            Err(LewyError::TooFewAdmissible { .. }) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn trace_flat_stays_on_constraints_and_projects_to_line() {
        let entry = catalog_flat();
        let spec = LewySpec {
            phi: entry.phi.clone(),
            x_hats: vec![bindings([("t", 1.0), ("z", 0.0)])],
            y_hats: vec![bindings([("a", 1.0), ("b", 0.0)])],
        };
        spec.validate(1e-9).unwrap();
        let start = find_start(&spec, 4).unwrap();
        let trace = trace_lewy(&spec, &start, 1.0, 200, 0.01, 1e-8).unwrap();
        assert!(trace.failed_at.is_none(), "failed at {:?}", trace.failed_at);
        assert!(trace.max_residual <= 1e-8);
        assert!(trace.points.len() >= 100);
        // projection to M1 is a straight line: check collinearity of (t, z)
        let ti = 0;
        let zi = 1;
        let p0 = &trace.points[0];
        let p1 = trace.points.last().unwrap();
        let dt = p1[ti] - p0[ti];
        let dz = p1[zi] - p0[zi];
        for p in &trace.points {
            let defect = (p[ti] - p0[ti]) * dz - (p[zi] - p0[zi]) * dt;
            assert!(defect.abs() <= 1e-6, "collinearity defect {defect}");
        }
    }

    #[test]
    fn trace_reverses_to_start() {
        let entry = catalog_cubic();
        let spec = LewySpec {
            phi: entry.phi.clone(),
            x_hats: vec![bindings([("t", 0.9), ("z", 0.4)])],
            y_hats: vec![bindings([("a", 0.3), ("b", 1.1)])],
        };
        let start = find_start(&spec, 9).unwrap();
        let fwd = trace_lewy(&spec, &start, 1.0, 60, 0.01, 1e-8).unwrap();
        assert!(fwd.failed_at.is_none());
        let end: Bindings = fwd
            .columns
            .iter()
            .cloned()
            .zip(fwd.points.last().unwrap().iter().copied())
            .collect();
        // integrate back for the same parameter span
        let span: f64 = fwd.steps.iter().sum();
        let back = trace_lewy(&spec, &end, -1.0, 400, 0.01, 1e-8).unwrap();
        // find the point on the reverse trace closest in parameter to -span
        let mut acc = 0.0;
        let mut best: Option<&Vec<f64>> = None;
        for (i, h) in back.steps.iter().enumerate() {
            acc += h;
            if acc.abs() >= span.abs() - 1e-9 {
                best = Some(&back.points[i]);
                break;
            }
        }
        let endback = best.expect("reverse trace long enough");
        for (k, col) in back.columns.iter().enumerate() {
            let orig = start.get(col).unwrap();
            assert!(
                (endback[k] - orig).abs() < 1e-6,
                "coordinate {col}: {} vs {}",
                endback[k],
                orig
            );
        }
    }

    #[test]
    fn halving_tolerance_reduces_residual() {
        let entry = catalog_flat();
        let spec = LewySpec {
            phi: entry.phi.clone(),
            x_hats: vec![bindings([("t", 0.7), ("z", -0.3)])],
            y_hats: vec![bindings([("a", -0.8), ("b", 0.6)])],
        };
        let start = find_start(&spec, 12).unwrap();
        let loose = trace_lewy(&spec, &start, 1.0, 100, 0.02, 1e-8).unwrap();
        let tight = trace_lewy(&spec, &start, 1.0, 100, 0.02, 0.5e-8).unwrap();
        assert!(
            tight.max_residual < loose.max_residual,
            "tight {} vs loose {}",
            tight.max_residual,
            loose.max_residual
        );
    }

    #[test]
    fn incident_spec_rejected() {
        let entry = catalog_flat();
        let spec = LewySpec {
            phi: entry.phi.clone(),
            x_hats: vec![bindings([("t", 0.0), ("z", 0.0)])],
            y_hats: vec![bindings([("a", 1.0), ("b", 0.0)])],
        };
        assert!(matches!(spec.validate(1e-9), Err(LewyError::BadSpec(_))));
    }

    #[test]
    fn unique_jet_through_perturbed_seeds() {
        // two runs from perturbed Newton seeds converge to the same 2-jet
        let entry = catalog_cubic();
        let recipe = LewyRecipe::new(&entry.phi, entry.eliminated);
        let jet = LewyJet { t: 1.1, z: 0.2, v: 1.2, zp: 0.5, vp: 0.8 };
        let base = recipe.rhs(&jet, &SeedRule::CubicSheet).unwrap();
        let mut seeds = base.seeds();
        seeds.w += 1e-3;
        seeds.y_hat[0] -= 1e-3;
        seeds.y_hat[1] += 1e-3;
        seeds.x_hat[0] += 1e-3;
        seeds.x_hat[1] -= 1e-3;
        let again = recipe.rhs(&jet, &SeedRule::Explicit(seeds)).unwrap();
        assert!((base.f - again.f).abs() < 1e-8);
        assert!((base.g - again.g).abs() < 1e-8);
    }
}
