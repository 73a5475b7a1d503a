//! Point invariants of systems of second-order ODEs, para-CR defining
//! functions, and Lewy curves.
//!
//! The crate is organized around five layers:
//!
//! * [`symexpr`] — exact symbolic expressions (parse, differentiate,
//!   simplify, substitute, evaluate, sampling-based equivalence),
//! * [`jetcalc`] — charts, vector fields, Lie brackets, and pointwise
//!   rank/Frobenius tests on jet-space charts,
//! * [`invariants`] — torsion/curvature of ODE systems, their binary
//!   quadric/quartic for pairs, root profiles, scalar invariants of one
//!   equation, and the para-CR fundamental invariant of PDE systems,
//! * [`paracr`] / [`lewy`] — defining functions, Segre surfaces, incidence
//!   and duality, the Lewy right-hand-side recipe, closed-form systems, and
//!   constrained curve tracing,
//! * [`characterize`] — the frame-level checks (torsion eigen-splitting,
//!   B-integrability, K-solvability, contact) and the classification report.
//!
//! Pointwise checks run data-parallel through [`par`] when the `parallel`
//! feature (default) is enabled; disabling it yields the same results
//! sequentially.


pub mod invariants;
pub mod lewy;
pub mod paracr;
pub mod jetcalc;

pub mod numerics;
pub mod par;



pub mod symexpr;

