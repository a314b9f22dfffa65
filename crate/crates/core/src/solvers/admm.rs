use std::time::Instant;

use super::linear::solve_normal;
use super::{
    check_problem, data_fidelity, residual, IterationRecord, Method, ReconstructionResult,
    SolverConfig, SolverTrace, SplitState, DIVERGENCE_LIMIT,
};
use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::forward::EchoVector;
use crate::linalg::{dot, norm, sub, LinearOperator, C64, ZERO};
use crate::model::{Reflectivity, SceneGrid};
use crate::prox::{l1_norm, mcp_penalty, ProxKind};

enum VStep<'a> {
    Prox(ProxKind),
    Pnp(&'a dyn Denoiser),
    Red(&'a dyn Denoiser),
}

/// ADMM with an L1 or MCP proximal `v`-update at threshold `lambda / mu`.
pub fn admm_reg(
    a: &dyn LinearOperator,
    grid: &SceneGrid,
    y: &EchoVector,
    prox: ProxKind,
    cfg: &SolverConfig,
) -> Result<ReconstructionResult> {
    prox.validate()?;
    let method = match prox {
        ProxKind::L1 => Method::L1,
        ProxKind::Mcp { .. } => Method::Mcp,
    };
    run(a, grid, y, VStep::Prox(prox), method, cfg)
}

/// Plug-and-play ADMM: the denoiser replaces the proximal step.
pub fn pnp_admm(
    a: &dyn LinearOperator,
    grid: &SceneGrid,
    y: &EchoVector,
    denoiser: &dyn Denoiser,
    cfg: &SolverConfig,
) -> Result<ReconstructionResult> {
    run(a, grid, y, VStep::Pnp(denoiser), Method::Pnp, cfg)
}

/// RED-ADMM with `inner_j` fixed-point steps for the `v`-update.
pub fn red_admm(
    a: &dyn LinearOperator,
    grid: &SceneGrid,
    y: &EchoVector,
    denoiser: &dyn Denoiser,
    cfg: &SolverConfig,
) -> Result<ReconstructionResult> {
    run(a, grid, y, VStep::Red(denoiser), Method::RedAdmm, cfg)
}

/// Relative norm of `mu (v - x + d_prev) + lambda (v - D(v))`, which vanishes
/// at an exact RED-ADMM fixed point.
pub fn red_stationarity_residual(
    denoiser: &dyn Denoiser,
    result: &ReconstructionResult,
) -> Result<f64> {
    let state = result
        .state
        .as_ref()
        .ok_or_else(|| Error::invalid("result carries no split state"))?;
    let grid = &result.volume.grid;
    let lambda = result.config.effective_lambda();
    let mu = result.config.mu;
    let dv = denoiser.denoise(grid, &state.v)?;
    let r: Vec<C64> = (0..state.v.len())
        .map(|i| {
            (state.v[i] - result.volume.values[i] + state.d_prev[i]) * mu
                + (state.v[i] - dv[i]) * lambda
        })
        .collect();
    let denom = (lambda + mu) * norm(&state.v);
    Ok(if denom == 0.0 { norm(&r) } else { norm(&r) / denom })
}

fn run(
    a: &dyn LinearOperator,
    grid: &SceneGrid,
    y: &EchoVector,
    step: VStep<'_>,
    method: Method,
    cfg: &SolverConfig,
) -> Result<ReconstructionResult> {
    cfg.validate()?;
    check_problem(a, grid, y)?;
    let start = Instant::now();
    let n = a.cols();
    let lambda = cfg.effective_lambda();
    let mu = cfg.mu;

    let mut aty = vec![ZERO; n];
    a.apply_adjoint(&y.values, &mut aty)?;

    let mut x = vec![ZERO; n];
    let mut v = vec![ZERO; n];
    let mut d = vec![ZERO; n];
    let mut d_prev = vec![ZERO; n];
    // D(v) for the current v, reused as the first inner step of the next
    // RED iteration.
    let mut dv: Option<Vec<C64>> = None;
    let mut trace = SolverTrace::default();
    let mut warnings = Vec::new();
    let mut converged = false;

    for t in 1..=cfg.t_max {
        let x_prev = x.clone();
        let cg = solve_normal(a, &aty, &v, &d, mu, cfg.cg_tol, cfg.cg_max, &mut x)?;
        if !cg.converged {
            warnings.push(format!(
                "iteration {t}: x-update CG stopped at relative residual {:.3e}",
                cg.relative_residual
            ));
        }

        d_prev.copy_from_slice(&d);
        let target = sub(&x, &d_prev);
        let prior = match &step {
            VStep::Prox(kind) => {
                let thr = lambda / mu;
                v = target;
                kind.apply(&mut v, thr)?;
                Some(match kind {
                    ProxKind::L1 => lambda * l1_norm(&v),
                    ProxKind::Mcp { theta } => lambda * mcp_penalty(&v, thr, *theta),
                })
            }
            VStep::Pnp(den) => {
                v = den.denoise(grid, &target)?;
                None
            }
            VStep::Red(den) => {
                let w = 1.0 / (lambda + mu);
                for j in 0..cfg.inner_j {
                    let dm = match (j, dv.take()) {
                        (0, Some(cached)) => cached,
                        _ => den.denoise(grid, &v)?,
                    };
                    for i in 0..n {
                        v[i] = (dm[i] * lambda + target[i] * mu) * w;
                    }
                }
                let dnew = den.denoise(grid, &v)?;
                let energy = 0.5 * dot(&v, &sub(&v, &dnew)).re;
                dv = Some(dnew);
                Some(lambda * energy)
            }
        };

        for i in 0..n {
            d[i] = d_prev[i] - x[i] + v[i];
        }
        if !crate::linalg::all_finite(&x) || !crate::linalg::all_finite(&v) {
            return Err(Error::NonFinite("ADMM iterate"));
        }

        let re = residual(&x, &x_prev);
        if re.is_finite() && re > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                iteration: t,
                residual: re,
            });
        }
        trace.records.push(IterationRecord {
            t,
            residual: re,
            data_fidelity: data_fidelity(a, &y.values, &x)?,
            prior,
            cg_iterations: cg.iterations,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        if re < cfg.eps {
            converged = true;
            break;
        }
    }

    Ok(ReconstructionResult {
        method,
        volume: Reflectivity {
            grid: *grid,
            values: x,
        },
        trace,
        config: *cfg,
        converged,
        warnings,
        state: Some(SplitState { v, d, d_prev }),
    })
}
