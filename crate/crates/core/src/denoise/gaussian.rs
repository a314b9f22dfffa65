use rayon::prelude::*;

use super::{check_radius, check_volume, reflect, Denoiser};
use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};
use crate::model::SceneGrid;

/// Normalized sampled Gaussian of half-width `radius`.
pub fn gaussian_kernel(radius: usize, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Separable Gaussian smoothing applied to the real and imaginary parts.
///
/// With mirror padding the resulting linear map is symmetric and preserves
/// the volume sum.
#[derive(Clone, Debug)]
pub struct Gaussian3d {
    radius: usize,
    kernel: Vec<f64>,
}

impl Gaussian3d {
    pub fn new(radius: usize, sigma: f64) -> Result<Self> {
        Ok(Gaussian3d {
            radius,
            kernel: gaussian_kernel(radius, sigma)?,
        })
    }

    fn pass(&self, dims: [usize; 3], axis: usize, input: &[C64], out: &mut [C64]) {
        let [nx, ny, _] = dims;
        let stride = [1, nx, nx * ny][axis];
        let n = dims[axis];
        let r = self.radius as isize;
        out.par_iter_mut().enumerate().for_each(|(idx, o)| {
            let pos = (idx / stride) % n;
            let base = idx - pos * stride;
            let mut acc = ZERO;
            for (t, w) in (-r..=r).zip(&self.kernel) {
                let q = reflect(pos as isize + t, n);
                acc += input[base + q * stride] * *w;
            }
            *o = acc;
        });
    }
}

impl Denoiser for Gaussian3d {
    fn denoise(&self, grid: &SceneGrid, v: &[C64]) -> Result<Vec<C64>> {
        check_volume(grid, v)?;
        check_radius(grid, self.radius, "gaussian kernel")?;
        let mut a = v.to_vec();
        let mut b = vec![ZERO; v.len()];
        for axis in 0..3 {
            self.pass(grid.dims, axis, &a, &mut b);
            std::mem::swap(&mut a, &mut b);
        }
        Ok(a)
    }

    fn is_linear_symmetric(&self) -> bool {
        true
    }

    fn name(&self) -> &'static str {
        "gaussian3d"
    }
}
