use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_volume, Denoiser};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, sub, C64};
use crate::model::SceneGrid;

/// RED prior value `1/2 Re(v^H (v - D(v)))`.
pub fn red_energy(d: &dyn Denoiser, grid: &SceneGrid, v: &[C64]) -> Result<f64> {
    let dv = d.denoise(grid, v)?;
    Ok(0.5 * dot(v, &sub(v, &dv)).re)
}

/// `sum_j Re<x_j - D(x_j), D(x_j) - D(x_{j+1})>` over the closed cycle of
/// points. A cyclically firmly nonexpansive denoiser scores `>= 0` on every
/// cycle; a negative score is evidence against that property.
pub fn cyclic_monotonicity_score(
    d: &dyn Denoiser,
    grid: &SceneGrid,
    points: &[Vec<C64>],
) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("cyclic monotonicity needs at least 2 points"));
    }
    let denoised = points
        .iter()
        .map(|p| d.denoise(grid, p))
        .collect::<Result<Vec<_>>>()?;
    let n = points.len();
    Ok((0..n)
        .map(|j| {
            let resid = sub(&points[j], &denoised[j]);
            let step = sub(&denoised[j], &denoised[(j + 1) % n]);
            dot(&resid, &step).re
        })
        .sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheckReport {
    /// Largest relative gap between the analytic directional derivative and
    /// its central finite difference.
    pub max_relative_error: f64,
    pub directions: usize,
    /// False when the denoiser is not linear-symmetric: the identity
    /// `grad = grad f + lambda (v - D(v))` then only holds approximately and
    /// the result is informational.
    pub strict: bool,
}

impl GradientCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_relative_error < tol
    }
}

/// Checks `grad f(v) + lambda (v - D(v))` against central finite differences of
/// `f + lambda * red_energy` along random unit directions.
#[allow(clippy::too_many_arguments)]
pub fn red_gradient_check(
    d: &dyn Denoiser,
    grid: &SceneGrid,
    v: &[C64],
    f: &dyn Fn(&[C64]) -> f64,
    f_grad: &[C64],
    lambda: f64,
    directions: usize,
    seed: u64,
) -> Result<GradientCheckReport> {
    check_volume(grid, v)?;
    check_volume(grid, f_grad)?;
    let dv = d.denoise(grid, v)?;
    let grad: Vec<C64> = f_grad
        .iter()
        .zip(v.iter().zip(&dv))
        .map(|(g, (x, dx))| g + (x - dx) * lambda)
        .collect();
    let objective = |x: &[C64]| -> Result<f64> { Ok(f(x) + lambda * red_energy(d, grid, x)?) };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-3 * norm(v).max(1e-3);
    let mut worst = 0.0f64;
    for _ in 0..directions {
        let mut dir: Vec<C64> = (0..v.len())
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                C64::new(re, im)
            })
            .collect();
        let s = 1.0 / norm(&dir);
        dir.iter_mut().for_each(|c| *c *= s);
        let plus: Vec<C64> = v.iter().zip(&dir).map(|(x, e)| x + e * eps).collect();
        let minus: Vec<C64> = v.iter().zip(&dir).map(|(x, e)| x - e * eps).collect();
        let fd = (objective(&plus)? - objective(&minus)?) / (2.0 * eps);
        let analytic = dot(&grad, &dir).re;
        let denom = analytic.abs().max(fd.abs());
        let rel = if denom == 0.0 { 0.0 } else { (fd - analytic).abs() / denom };
        worst = worst.max(rel);
    }
    Ok(GradientCheckReport {
        max_relative_error: worst,
        directions,
        strict: d.is_linear_symmetric(),
    })
}
