//! Volume denoisers used as RED and PnP priors, and the diagnostics built on
//! them.
//!
//! Every denoiser pads with half-sample symmetric (mirror) boundaries and is
//! a pure function of its input.

mod diagnostics;
mod external;
mod gaussian;
mod nlm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::model::{Reflectivity, SceneGrid};

pub use diagnostics::{
    cyclic_monotonicity_score, red_energy, red_gradient_check, GradientCheckReport,
};
pub use external::ExternalDenoiser;
pub use gaussian::{gaussian_kernel, Gaussian3d};
pub use nlm::{estimate_noise_sigma, Nlm3d};

/// A deterministic volume-to-volume map.
pub trait Denoiser: Send + Sync {
    fn denoise(&self, grid: &SceneGrid, v: &[C64]) -> Result<Vec<C64>>;

    /// True when the map is linear with a symmetric matrix, which makes the
    /// RED gradient identity exact.
    fn is_linear_symmetric(&self) -> bool {
        false
    }

    fn name(&self) -> &'static str;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DenoiserSpec {
    Identity {},
    Gaussian3d {
        radius: usize,
        sigma: f64,
    },
    Nlm3d {
        #[serde(default = "default_patch_radius")]
        patch_radius: usize,
        #[serde(default = "default_search_radius")]
        search_radius: usize,
        /// Fixed filtering bandwidth. When absent it is `h_factor` times a
        /// robust noise estimate of the input.
        #[serde(default)]
        bandwidth: Option<f64>,
        #[serde(default = "default_h_factor")]
        h_factor: f64,
    },
    /// Subprocess contract: `command args... <input.sarvol> <output.sarvol>`,
    /// exit status 0 on success.
    External {
        command: String,
        #[serde(default)]
        args: Vec<String>,
        deterministic: bool,
    },
}

fn default_patch_radius() -> usize {
    1
}

fn default_search_radius() -> usize {
    2
}

fn default_h_factor() -> f64 {
    4.0
}

impl DenoiserSpec {
    pub fn nlm_default() -> Self {
        DenoiserSpec::Nlm3d {
            patch_radius: default_patch_radius(),
            search_radius: default_search_radius(),
            bandwidth: None,
            h_factor: default_h_factor(),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Denoiser>> {
        Ok(match self {
            DenoiserSpec::Identity {} => Box::new(Identity),
            DenoiserSpec::Gaussian3d { radius, sigma } => Box::new(Gaussian3d::new(*radius, *sigma)?),
            DenoiserSpec::Nlm3d {
                patch_radius,
                search_radius,
                bandwidth,
                h_factor,
            } => Box::new(Nlm3d::new(*patch_radius, *search_radius, *bandwidth, *h_factor)?),
            DenoiserSpec::External {
                command,
                args,
                deterministic,
            } => Box::new(ExternalDenoiser::new(command, args.clone(), *deterministic)?),
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            DenoiserSpec::Identity {} => "identity",
            DenoiserSpec::Gaussian3d { .. } => "gaussian3d",
            DenoiserSpec::Nlm3d { .. } => "nlm3d",
            DenoiserSpec::External { .. } => "external",
        }
    }
}

pub struct Identity;

impl Denoiser for Identity {
    fn denoise(&self, grid: &SceneGrid, v: &[C64]) -> Result<Vec<C64>> {
        check_volume(grid, v)?;
        Ok(v.to_vec())
    }

    fn is_linear_symmetric(&self) -> bool {
        true
    }

    fn name(&self) -> &'static str {
        "identity"
    }
}

/// Denoises a reflectivity volume with the denoiser described by `spec`.
pub fn denoise(spec: &DenoiserSpec, v: &Reflectivity) -> Result<Reflectivity> {
    let d = spec.build()?;
    Ok(Reflectivity {
        grid: v.grid,
        values: d.denoise(&v.grid, &v.values)?,
    })
}

pub(crate) fn check_volume(grid: &SceneGrid, v: &[C64]) -> Result<()> {
    if v.len() != grid.len() {
        return Err(Error::invalid(format!(
            "volume of length {} does not fit grid {:?}",
            v.len(),
            grid.dims
        )));
    }
    Ok(())
}

pub(crate) fn check_radius(grid: &SceneGrid, radius: usize, what: &str) -> Result<()> {
    if let Some(&d) = grid.dims.iter().find(|&&d| radius > d) {
        return Err(Error::invalid(format!(
            "{what} radius {radius} exceeds volume extent {d}"
        )));
    }
    Ok(())
}

/// Half-sample symmetric reflection of `p` into `0..n`, valid for
/// `-n <= p < 2n`.
#[inline]
pub(crate) fn reflect(p: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if p < 0 {
        -1 - p
    } else if p >= n {
        2 * n - 1 - p
    } else {
        p
    };
    r as usize
}
