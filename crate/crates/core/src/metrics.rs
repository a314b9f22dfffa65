//! Image-quality metrics on peak-normalized magnitude volumes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;

/// PSNR reported for a perfect reconstruction.
pub const PSNR_CAP_DB: f64 = 300.0;

const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub nmse: f64,
}

impl MetricReport {
    pub fn compute(reference: &[C64], estimate: &[C64]) -> Result<Self> {
        Ok(MetricReport {
            psnr_db: psnr(reference, estimate)?,
            ssim: ssim(reference, estimate)?,
            nmse: nmse(reference, estimate)?,
        })
    }
}

/// `|v| / max|v|`, or all zeros for a zero volume.
pub fn normalized_magnitude(v: &[C64]) -> Vec<f64> {
    let mags: Vec<f64> = v.iter().map(|c| c.norm()).collect();
    let peak = mags.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        mags.iter().map(|m| m / peak).collect()
    } else {
        mags
    }
}

fn prepare(reference: &[C64], estimate: &[C64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if reference.len() != estimate.len() {
        return Err(Error::invalid(format!(
            "metric inputs differ in size: {} vs {}",
            reference.len(),
            estimate.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::invalid("metric inputs are empty"));
    }
    if !crate::linalg::all_finite(reference) || !crate::linalg::all_finite(estimate) {
        return Err(Error::NonFinite("metric input"));
    }
    Ok((normalized_magnitude(reference), normalized_magnitude(estimate)))
}

fn require_nonzero(r: &[f64]) -> Result<()> {
    if r.iter().all(|v| *v == 0.0) {
        Err(Error::invalid("reference volume is all zero"))
    } else {
        Ok(())
    }
}

pub fn psnr(reference: &[C64], estimate: &[C64]) -> Result<f64> {
    let (r, e) = prepare(reference, estimate)?;
    require_nonzero(&r)?;
    let mse = r.iter().zip(&e).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / r.len() as f64;
    Ok(if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    })
}

/// Whole-volume SSIM with population statistics and dynamic range 1.
pub fn ssim(reference: &[C64], estimate: &[C64]) -> Result<f64> {
    let (r, e) = prepare(reference, estimate)?;
    let n = r.len() as f64;
    let mr = r.iter().sum::<f64>() / n;
    let me = e.iter().sum::<f64>() / n;
    let (mut vr, mut ve, mut cov) = (0.0, 0.0, 0.0);
    for (a, b) in r.iter().zip(&e) {
        vr += (a - mr) * (a - mr);
        ve += (b - me) * (b - me);
        cov += (a - mr) * (b - me);
    }
    vr /= n;
    ve /= n;
    cov /= n;
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    Ok((2.0 * mr * me + c1) * (2.0 * cov + c2) / ((mr * mr + me * me + c1) * (vr + ve + c2)))
}

pub fn nmse(reference: &[C64], estimate: &[C64]) -> Result<f64> {
    let (r, e) = prepare(reference, estimate)?;
    require_nonzero(&r)?;
    let num: f64 = r.iter().zip(&e).map(|(a, b)| (b - a).powi(2)).sum();
    let den: f64 = r.iter().map(|a| a * a).sum();
    Ok(num / den)
}
