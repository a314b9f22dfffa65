//! Proximal operators of the L1 and MCP penalties for complex amplitudes.
//!
//! Both shrink the magnitude and keep the phase, which reduces to the usual
//! real-valued rules on the real line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxKind {
    L1,
    Mcp { theta: f64 },
}

impl ProxKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ProxKind::L1 => Ok(()),
            ProxKind::Mcp { theta } => check_theta(theta),
        }
    }

    /// Applies the operator with threshold `lambda` to every entry.
    pub fn apply(&self, values: &mut [C64], lambda: f64) -> Result<()> {
        match *self {
            ProxKind::L1 => values
                .iter_mut()
                .for_each(|v| *v = soft_threshold(*v, lambda)),
            ProxKind::Mcp { theta } => {
                check_theta(theta)?;
                values
                    .iter_mut()
                    .for_each(|v| *v = mcp_shrink(*v, lambda, theta));
            }
        }
        Ok(())
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 1.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("MCP theta must exceed 1, got {theta}")))
    }
}

/// Magnitude soft threshold: `max(|v| - lambda, 0) * v / |v|`.
pub fn soft_threshold(v: C64, lambda: f64) -> C64 {
    let mag = v.norm();
    if mag < lambda || mag == 0.0 {
        ZERO
    } else {
        v * ((mag - lambda) / mag)
    }
}

/// MCP firm threshold.
pub fn mcp_threshold(v: C64, lambda: f64, theta: f64) -> Result<C64> {
    check_theta(theta)?;
    Ok(mcp_shrink(v, lambda, theta))
}

fn mcp_shrink(v: C64, lambda: f64, theta: f64) -> C64 {
    let mag = v.norm();
    if mag < lambda || mag == 0.0 {
        ZERO
    } else if mag <= theta * lambda {
        v * (theta * (mag - lambda) / ((theta - 1.0) * mag))
    } else {
        v
    }
}

/// MCP penalty summed over a volume, used for objective logging.
pub fn mcp_penalty(x: &[C64], lambda: f64, theta: f64) -> f64 {
    x.iter()
        .map(|v| {
            let a = v.norm();
            if a <= theta * lambda {
                a - a * a / (2.0 * theta)
            } else {
                theta / 2.0
            }
        })
        .sum()
}

pub fn l1_norm(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm()).sum()
}
