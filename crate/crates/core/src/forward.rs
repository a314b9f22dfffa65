//! Measurement operator, echo simulation, undersampling and noise.
//!
//! Rows are indexed `(element m, frequency q)` with the element outer, and
//! entry `A[(m, q), n] = exp(-j 2 k_q R_mn)` where `R_mn` is the distance from
//! element `m` to voxel `n`.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot_plain, norm_sqr, LinearOperator, C64, ZERO};
use crate::model::{voxel_positions, ArrayGeometry, Reflectivity, SceneGrid, Waveform};

/// Default ceiling on explicit operator storage: 2 GiB.
pub const DEFAULT_MEMORY_BUDGET: u128 = 2 << 30;

#[derive(Clone, Copy, Debug, PartialEq)]
struct RowSpec {
    element: [f64; 3],
    k: f64,
}

#[derive(Clone, Debug)]
enum Storage {
    /// `a` is row-major `M x N`; `ah` holds the conjugate transpose row-major
    /// `N x M` so both products stream contiguous memory.
    Explicit { a: Vec<C64>, ah: Vec<C64> },
    Lazy,
}

/// Complex sensing matrix mapping reflectivity to echo samples.
#[derive(Clone, Debug)]
pub struct MeasurementOperator {
    grid: SceneGrid,
    voxels: Vec<[f64; 3]>,
    rows: Vec<RowSpec>,
    storage: Storage,
}

#[inline]
fn entry(row: &RowSpec, voxel: &[f64; 3]) -> C64 {
    let dx = row.element[0] - voxel[0];
    let dy = row.element[1] - voxel[1];
    let dz = row.element[2] - voxel[2];
    let r = (dx * dx + dy * dy + dz * dz).sqrt();
    let (s, c) = (2.0 * row.k * r).sin_cos();
    C64::new(c, -s)
}

impl MeasurementOperator {
    pub fn build(
        geom: &ArrayGeometry,
        wf: &Waveform,
        grid: &SceneGrid,
        explicit: bool,
    ) -> Result<Self> {
        Self::build_with_budget(geom, wf, grid, explicit, DEFAULT_MEMORY_BUDGET)
    }

    pub fn build_with_budget(
        geom: &ArrayGeometry,
        wf: &Waveform,
        grid: &SceneGrid,
        explicit: bool,
        budget_bytes: u128,
    ) -> Result<Self> {
        grid.validate()?;
        wf.validate()?;
        if geom.is_empty() {
            return Err(Error::invalid("array geometry has no elements"));
        }
        let ks = wf.wavenumbers();
        let rows: Vec<RowSpec> = geom
            .elements
            .iter()
            .flat_map(|&element| ks.iter().map(move |&k| RowSpec { element, k }))
            .collect();
        let voxels = voxel_positions(grid);
        for e in &geom.elements {
            for v in &voxels {
                let r2: f64 = (0..3).map(|a| (e[a] - v[a]).powi(2)).sum();
                if !(r2 > 0.0) {
                    return Err(Error::invalid(format!(
                        "element at {e:?} coincides with voxel at {v:?}"
                    )));
                }
            }
        }
        let mut op = MeasurementOperator {
            grid: *grid,
            voxels,
            rows,
            storage: Storage::Lazy,
        };
        if explicit {
            let required = op.explicit_bytes();
            if required > budget_bytes {
                return Err(Error::ResourceLimit {
                    required,
                    budget: budget_bytes,
                });
            }
            op.materialize();
        }
        Ok(op)
    }

    /// Bytes needed to hold the matrix and its adjoint explicitly.
    pub fn explicit_bytes(&self) -> u128 {
        2 * self.rows.len() as u128 * self.voxels.len() as u128 * 16
    }

    fn materialize(&mut self) {
        let n = self.voxels.len();
        let m = self.rows.len();
        let mut a = vec![ZERO; m * n];
        a.par_chunks_mut(n).zip(&self.rows).for_each(|(out, row)| {
            for (o, v) in out.iter_mut().zip(&self.voxels) {
                *o = entry(row, v);
            }
        });
        let mut ah = vec![ZERO; n * m];
        ah.par_chunks_mut(m).enumerate().for_each(|(col, out)| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = a[i * n + col].conj();
            }
        });
        self.storage = Storage::Explicit { a, ah };
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.voxels.len()
    }

    pub fn grid(&self) -> &SceneGrid {
        &self.grid
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self.storage, Storage::Explicit { .. })
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        match &self.storage {
            Storage::Explicit { a, .. } => a[row * self.cols() + col],
            Storage::Lazy => entry(&self.rows[row], &self.voxels[col]),
        }
    }

    /// Same operator in the other storage mode.
    pub fn to_lazy(&self) -> Self {
        MeasurementOperator {
            grid: self.grid,
            voxels: self.voxels.clone(),
            rows: self.rows.clone(),
            storage: Storage::Lazy,
        }
    }

    /// `out = A x`.
    pub fn forward_into(&self, x: &[C64], out: &mut [C64]) -> Result<()> {
        if x.len() != self.cols() || out.len() != self.rows() {
            return Err(Error::invalid(format!(
                "forward: operator is {}x{}, got x of length {} and output of length {}",
                self.rows(),
                self.cols(),
                x.len(),
                out.len()
            )));
        }
        let n = self.cols();
        match &self.storage {
            Storage::Explicit { a, .. } => {
                out.par_iter_mut()
                    .zip(a.par_chunks(n))
                    .for_each(|(o, row)| *o = dot_plain(row, x));
            }
            Storage::Lazy => {
                out.par_iter_mut().zip(&self.rows).for_each(|(o, row)| {
                    *o = self
                        .voxels
                        .iter()
                        .zip(x)
                        .fold(ZERO, |acc, (v, xi)| acc + entry(row, v) * xi);
                });
            }
        }
        Ok(())
    }

    /// `out = A^H y`.
    pub fn adjoint_into(&self, y: &[C64], out: &mut [C64]) -> Result<()> {
        if y.len() != self.rows() || out.len() != self.cols() {
            return Err(Error::invalid(format!(
                "adjoint: operator is {}x{}, got y of length {} and output of length {}",
                self.rows(),
                self.cols(),
                y.len(),
                out.len()
            )));
        }
        let m = self.rows();
        match &self.storage {
            Storage::Explicit { ah, .. } => {
                out.par_iter_mut()
                    .zip(ah.par_chunks(m))
                    .for_each(|(o, col)| *o = dot_plain(col, y));
            }
            Storage::Lazy => {
                out.par_iter_mut().zip(&self.voxels).for_each(|(o, v)| {
                    *o = self
                        .rows
                        .iter()
                        .zip(y)
                        .fold(ZERO, |acc, (row, yi)| acc + entry(row, v).conj() * yi);
                });
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[C64]) -> Result<Vec<C64>> {
        let mut out = vec![ZERO; self.rows()];
        self.forward_into(x, &mut out)?;
        Ok(out)
    }

    pub fn adjoint(&self, y: &[C64]) -> Result<Vec<C64>> {
        let mut out = vec![ZERO; self.cols()];
        self.adjoint_into(y, &mut out)?;
        Ok(out)
    }

    /// Operator restricted to the mask's rows, in mask order.
    pub fn subsample(&self, mask: &SamplingMask) -> Result<Self> {
        mask.check_against(self.rows())?;
        let rows: Vec<RowSpec> = mask.kept_rows.iter().map(|&r| self.rows[r]).collect();
        let storage = match &self.storage {
            Storage::Explicit { a, .. } => {
                let n = self.cols();
                let m = rows.len();
                let mut sub = Vec::with_capacity(m * n);
                for &r in &mask.kept_rows {
                    sub.extend_from_slice(&a[r * n..(r + 1) * n]);
                }
                let mut ah = vec![ZERO; n * m];
                ah.par_chunks_mut(m).enumerate().for_each(|(col, out)| {
                    for (i, o) in out.iter_mut().enumerate() {
                        *o = sub[i * n + col].conj();
                    }
                });
                Storage::Explicit { a: sub, ah }
            }
            Storage::Lazy => Storage::Lazy,
        };
        Ok(MeasurementOperator {
            grid: self.grid,
            voxels: self.voxels.clone(),
            rows,
            storage,
        })
    }
}

impl LinearOperator for MeasurementOperator {
    fn rows(&self) -> usize {
        self.rows.len()
    }

    fn cols(&self) -> usize {
        self.voxels.len()
    }

    fn apply(&self, x: &[C64], out: &mut [C64]) -> Result<()> {
        self.forward_into(x, out)
    }

    fn apply_adjoint(&self, y: &[C64], out: &mut [C64]) -> Result<()> {
        self.adjoint_into(y, out)
    }
}

/// `y = A x` for a reflectivity volume.
pub fn apply_forward(op: &MeasurementOperator, x: &Reflectivity) -> Result<EchoVector> {
    if x.grid.dims != op.grid().dims {
        return Err(Error::invalid(format!(
            "volume grid {:?} does not match operator grid {:?}",
            x.grid.dims,
            op.grid().dims
        )));
    }
    Ok(EchoVector::new(op.forward(&x.values)?))
}

/// `A^H y` as a volume on the operator's grid.
pub fn apply_adjoint(op: &MeasurementOperator, y: &EchoVector) -> Result<Reflectivity> {
    Ok(Reflectivity {
        grid: *op.grid(),
        values: op.adjoint(&y.values)?,
    })
}

/// Where an echo came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EchoMeta {
    pub sr: Option<f64>,
    pub snr_db: Option<f64>,
    pub seed: Option<u64>,
    pub scene: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EchoVector {
    pub values: Vec<C64>,
    pub meta: EchoMeta,
}

impl EchoVector {
    pub fn new(values: Vec<C64>) -> Self {
        EchoVector {
            values,
            meta: EchoMeta::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn subsample(&self, mask: &SamplingMask) -> Result<Self> {
        mask.check_against(self.len())?;
        let mut meta = self.meta.clone();
        meta.sr = Some(mask.sr);
        Ok(EchoVector {
            values: mask.kept_rows.iter().map(|&r| self.values[r]).collect(),
            meta,
        })
    }

    pub fn mean_power(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            norm_sqr(&self.values) / self.values.len() as f64
        }
    }
}

/// Rows kept at a given sampling rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingMask {
    pub total_rows: usize,
    pub kept_rows: Vec<usize>,
    pub sr: f64,
    pub seed: u64,
}

impl SamplingMask {
    pub fn full(total_rows: usize) -> Self {
        SamplingMask {
            total_rows,
            kept_rows: (0..total_rows).collect(),
            sr: 1.0,
            seed: 0,
        }
    }

    /// Explicit row subset, e.g. read back from disk.
    pub fn from_rows(total_rows: usize, mut kept_rows: Vec<usize>, seed: u64) -> Result<Self> {
        kept_rows.sort_unstable();
        kept_rows.dedup();
        if kept_rows.is_empty() {
            return Err(Error::invalid("mask keeps no rows"));
        }
        if let Some(&r) = kept_rows.iter().find(|&&r| r >= total_rows) {
            return Err(Error::invalid(format!(
                "mask row {r} out of range for {total_rows} rows"
            )));
        }
        let sr = kept_rows.len() as f64 / total_rows as f64;
        Ok(SamplingMask {
            total_rows,
            kept_rows,
            sr,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.kept_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept_rows.is_empty()
    }

    fn check_against(&self, rows: usize) -> Result<()> {
        if self.total_rows != rows {
            return Err(Error::invalid(format!(
                "mask built for {} rows applied to {} rows",
                self.total_rows, rows
            )));
        }
        if let Some(&r) = self.kept_rows.iter().find(|&&r| r >= rows) {
            return Err(Error::invalid(format!(
                "mask row {r} out of range for {rows} rows"
            )));
        }
        Ok(())
    }
}

/// Uniformly random row subset of size `round(sr * total_rows)`, sorted.
pub fn make_mask(total_rows: usize, sr: f64, seed: u64) -> Result<SamplingMask> {
    if !(sr > 0.0 && sr <= 1.0) {
        return Err(Error::invalid(format!("sampling rate must be in (0, 1], got {sr}")));
    }
    if total_rows == 0 {
        return Err(Error::invalid("cannot mask an empty measurement set"));
    }
    let count = ((sr * total_rows as f64).round() as usize).clamp(1, total_rows);
    let kept_rows = if count == total_rows {
        (0..total_rows).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = index::sample(&mut rng, total_rows, count).into_vec();
        rows.sort_unstable();
        rows
    };
    Ok(SamplingMask {
        total_rows,
        kept_rows,
        sr,
        seed,
    })
}

/// Complex Gaussian noise level for a clean echo at a target SNR.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRealization {
    pub snr_db: f64,
    pub seed: u64,
    /// Total complex variance `E|n|^2`.
    pub sigma2: f64,
}

impl NoiseRealization {
    pub fn for_signal(clean: &EchoVector, snr_db: f64, seed: u64) -> Result<Self> {
        if snr_db.is_nan() {
            return Err(Error::invalid("SNR is NaN"));
        }
        if snr_db == f64::INFINITY {
            return Ok(NoiseRealization {
                snr_db,
                seed,
                sigma2: 0.0,
            });
        }
        let power = clean.mean_power();
        if !(power > 0.0) {
            return Err(Error::invalid(
                "clean echo has zero power; a finite SNR is undefined",
            ));
        }
        Ok(NoiseRealization {
            snr_db,
            seed,
            sigma2: power * 10f64.powf(-snr_db / 10.0),
        })
    }
}

/// Adds circular complex Gaussian noise at `snr_db` relative to the mean echo
/// power. `f64::INFINITY` returns the echo untouched.
pub fn add_noise(clean: &EchoVector, snr_db: f64, seed: u64) -> Result<EchoVector> {
    let noise = NoiseRealization::for_signal(clean, snr_db, seed)?;
    let mut out = clean.clone();
    out.meta.snr_db = Some(snr_db);
    out.meta.seed = Some(seed);
    if noise.sigma2 == 0.0 {
        return Ok(out);
    }
    let s = (noise.sigma2 / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.values.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *v += C64::new(s * re, s * im);
    }
    Ok(out)
}
