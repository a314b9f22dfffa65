use std::time::Instant;

use super::linear::project_affine;
use super::{
    check_problem, data_fidelity, residual, IterationRecord, Method, ReconstructionResult,
    SolverConfig, SolverTrace, DIVERGENCE_LIMIT,
};
use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::forward::EchoVector;
use crate::linalg::{dot, norm, sub, LinearOperator, C64, ZERO};
use crate::model::{Reflectivity, SceneGrid};

const GRAM_JITTER: f64 = 1e-10;

/// RED-GAP: alternate the projection onto `{A x = y}` with `inner_j` steps of
/// `v = (x + lambda D(v)) / (1 + lambda)`.
pub fn red_gap(
    a: &dyn LinearOperator,
    grid: &SceneGrid,
    y: &EchoVector,
    denoiser: &dyn Denoiser,
    cfg: &SolverConfig,
) -> Result<ReconstructionResult> {
    cfg.validate()?;
    check_problem(a, grid, y)?;
    let start = Instant::now();
    let n = a.cols();
    let lambda = cfg.effective_lambda();
    let y_norm = norm(&y.values);

    let mut x = vec![ZERO; n];
    let mut v = vec![ZERO; n];
    let mut z = vec![ZERO; a.rows()];
    let mut dv: Option<Vec<C64>> = None;
    let mut trace = SolverTrace::default();
    let mut warnings = Vec::new();
    let mut converged = false;

    for t in 1..=cfg.t_max {
        let x_prev = std::mem::take(&mut x);
        let (xt, cg) = project_affine(a, &y.values, &v, GRAM_JITTER, cfg.cg_tol, cfg.cg_max, &mut z)?;
        x = xt;
        let fidelity = data_fidelity(a, &y.values, &x)?;
        if y_norm > 0.0 {
            let infeasibility = (2.0 * fidelity).sqrt() / y_norm;
            if infeasibility > 10.0 * cfg.cg_tol {
                warnings.push(format!(
                    "iteration {t}: projection infeasibility {infeasibility:.3e}"
                ));
            }
        }

        let w = 1.0 / (1.0 + lambda);
        for j in 0..cfg.inner_j {
            let dm = match (j, dv.take()) {
                (0, Some(cached)) => cached,
                _ => denoiser.denoise(grid, &v)?,
            };
            for i in 0..n {
                v[i] = (x[i] + dm[i] * lambda) * w;
            }
        }
        let dnew = denoiser.denoise(grid, &v)?;
        let prior = lambda * 0.5 * dot(&v, &sub(&v, &dnew)).re;
        dv = Some(dnew);

        if !crate::linalg::all_finite(&x) || !crate::linalg::all_finite(&v) {
            return Err(Error::NonFinite("GAP iterate"));
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
            data_fidelity: fidelity,
            prior: Some(prior),
            cg_iterations: cg.iterations,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        if re < cfg.eps {
            converged = true;
            break;
        }
    }

    Ok(ReconstructionResult {
        method: Method::RedGap,
        volume: Reflectivity {
            grid: *grid,
            values: x,
        },
        trace,
        config: *cfg,
        converged,
        warnings,
        state: None,
    })
}
