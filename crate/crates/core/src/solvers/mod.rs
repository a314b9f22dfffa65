//! Reconstruction algorithms.
//!
//! All iterative solvers share the ADMM splitting `x = v` with scaled dual
//! `d` and sign convention `d_t = d_{t-1} - x_t + v_t`; they differ only in
//! the `v`-update. RED-GAP replaces the `x`-update by a Euclidean projection
//! onto `{x : A x = y}`.

mod admm;
mod gap;
mod linear;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::EchoVector;
use crate::linalg::{norm, scale, sub, LinearOperator, C64, ZERO};
use crate::model::{Reflectivity, SceneGrid};

pub use admm::{admm_reg, pnp_admm, red_admm, red_stationarity_residual};
pub use gap::red_gap;
pub use linear::{solve_x_subproblem, XSolution};

/// Residual above which an iteration is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Regularization weight. For RED-GAP it weighs the prior against the
    /// unit-weight proximity term and is dimensionless.
    pub lambda: f64,
    /// ADMM penalty.
    pub mu: f64,
    pub t_max: usize,
    /// Stop once the relative change of `x` drops below this.
    pub eps: f64,
    /// RED fixed-point steps per outer iteration.
    pub inner_j: usize,
    pub cg_tol: f64,
    pub cg_max: usize,
    /// Whether the noise variance is already folded into `lambda`. When
    /// false the effective weight is `lambda * noise_variance`.
    pub sigma_absorbed: bool,
    pub noise_variance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 0.1,
            mu: 1.0,
            t_max: 50,
            eps: 1e-3,
            inner_j: 3,
            cg_tol: 1e-6,
            cg_max: 200,
            sigma_absorbed: true,
            noise_variance: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("lambda", self.lambda)?;
        positive("mu", self.mu)?;
        positive("eps", self.eps)?;
        positive("cg_tol", self.cg_tol)?;
        positive("noise_variance", self.noise_variance)?;
        if self.t_max == 0 || self.inner_j == 0 || self.cg_max == 0 {
            return Err(Error::invalid("t_max, inner_j and cg_max must be >= 1"));
        }
        Ok(())
    }

    pub fn effective_lambda(&self) -> f64 {
        if self.sigma_absorbed {
            self.lambda
        } else {
            self.lambda * self.noise_variance
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mf,
    L1,
    Mcp,
    Pnp,
    RedAdmm,
    RedGap,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Mf,
        Method::L1,
        Method::Mcp,
        Method::Pnp,
        Method::RedAdmm,
        Method::RedGap,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Mf => "mf",
            Method::L1 => "l1",
            Method::Mcp => "mcp",
            Method::Pnp => "pnp",
            Method::RedAdmm => "red_admm",
            Method::RedGap => "red_gap",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub residual: f64,
    /// `1/2 ||y - A x_t||^2`
    pub data_fidelity: f64,
    /// Prior value at `v_t` where the method has one.
    pub prior: Option<f64>,
    pub cg_iterations: usize,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.records.last().map(|r| r.residual)
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual).collect()
    }

    pub fn clear_timing(&mut self) {
        self.records.iter_mut().for_each(|r| r.wall_seconds = 0.0);
    }
}

/// Split variables at exit, kept so stationarity can be checked afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitState {
    pub v: Vec<C64>,
    pub d: Vec<C64>,
    pub d_prev: Vec<C64>,
}

#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    pub method: Method,
    pub volume: Reflectivity,
    pub trace: SolverTrace,
    pub config: SolverConfig,
    pub converged: bool,
    pub warnings: Vec<String>,
    pub state: Option<SplitState>,
}

impl ReconstructionResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Relative change `||x_t - x_prev|| / ||x_prev||`; `0` when both vanish and
/// `+inf` when only `x_prev` does.
pub fn residual(x_t: &[C64], x_prev: &[C64]) -> f64 {
    let prev = norm(x_prev);
    let diff = norm(&sub(x_t, x_prev));
    if prev == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / prev
    }
}

pub(crate) fn check_problem(a: &dyn LinearOperator, grid: &SceneGrid, y: &EchoVector) -> Result<()> {
    if a.cols() != grid.len() {
        return Err(Error::invalid(format!(
            "operator has {} columns, grid has {} voxels",
            a.cols(),
            grid.len()
        )));
    }
    if a.rows() != y.len() {
        return Err(Error::invalid(format!(
            "operator has {} rows, echo has {} samples",
            a.rows(),
            y.len()
        )));
    }
    if !crate::linalg::all_finite(&y.values) {
        return Err(Error::NonFinite("echo"));
    }
    Ok(())
}

pub(crate) fn data_fidelity(a: &dyn LinearOperator, y: &[C64], x: &[C64]) -> Result<f64> {
    let mut ax = vec![ZERO; a.rows()];
    a.apply(x, &mut ax)?;
    Ok(0.5 * crate::linalg::dist(y, &ax).powi(2))
}

/// Matched-filter image `A^H y / M`.
pub fn matched_filter(
    a: &dyn LinearOperator,
    grid: &SceneGrid,
    y: &EchoVector,
) -> Result<ReconstructionResult> {
    check_problem(a, grid, y)?;
    let start = std::time::Instant::now();
    let mut x = vec![ZERO; a.cols()];
    a.apply_adjoint(&y.values, &mut x)?;
    let x = scale(1.0 / a.rows().max(1) as f64, &x);
    let record = IterationRecord {
        t: 1,
        residual: 0.0,
        data_fidelity: data_fidelity(a, &y.values, &x)?,
        prior: None,
        cg_iterations: 0,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(ReconstructionResult {
        method: Method::Mf,
        volume: Reflectivity { grid: *grid, values: x },
        trace: SolverTrace {
            records: vec![record],
        },
        config: SolverConfig::default(),
        converged: true,
        warnings: Vec::new(),
        state: None,
    })
}
