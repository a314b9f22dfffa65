//! TOML run configuration.
//!
//! Every section except `seeds` falls back to the desk preset, so a config
//! file only needs the seeds and whatever it changes. Unknown keys are
//! rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::denoise::DenoiserSpec;
use crate::error::{Error, Result};
use crate::model::ScenePreset;
use crate::solvers::Method;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// One scene, mask and noise realization per seed.
    pub seeds: Vec<u64>,
    #[serde(default = "defaults::sr")]
    pub sr: Vec<f64>,
    /// `inf` means noise-free.
    #[serde(default = "defaults::snr_db")]
    pub snr_db: Vec<f64>,
    #[serde(default = "defaults::methods")]
    pub methods: Vec<Method>,
    /// When false every wall-clock field is written as 0 so reruns are
    /// byte-identical; real timings then go to `timings.csv` only.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub scene: SceneConfig,
    #[serde(default)]
    pub array: ArrayConfig,
    #[serde(default)]
    pub waveform: WaveformConfig,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default = "DenoiserSpec::nlm_default")]
    pub denoiser: DenoiserSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub preset: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            preset: "wireframe".into(),
            dims: [16, 16, 16],
            spacing: [0.02; 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayConfig {
    pub n_az: usize,
    pub n_el: usize,
    pub size_az: f64,
    pub size_el: f64,
    pub standoff: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            n_az: 8,
            n_el: 8,
            // 1.25 cm pitch: no grating lobes across a 32 cm scene at 1 m.
            size_az: 0.0875,
            size_el: 0.0875,
            standoff: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveformConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub n_freq: usize,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        WaveformConfig {
            carrier_hz: 37.5e9,
            bandwidth_hz: 3e9,
            n_freq: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorConfig {
    pub explicit: bool,
    pub budget_bytes: u64,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            explicit: true,
            budget_bytes: crate::forward::DEFAULT_MEMORY_BUDGET as u64,
        }
    }
}

/// Solver knobs in scale-free form. With `M` active measurement rows the
/// harness uses `mu = mu_scale * M`, L1/MCP weight
/// `lambda = sparse_lambda * max|A^H y|` (1 would zero the solution),
/// PnP/RED-ADMM weight `lambda = red_lambda * M`, and RED-GAP weight
/// `lambda = gap_lambda` as is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub t_max: usize,
    pub eps: f64,
    pub inner_j: usize,
    pub cg_tol: f64,
    pub cg_max: usize,
    pub mu_scale: f64,
    pub sparse_lambda: f64,
    pub red_lambda: f64,
    pub gap_lambda: f64,
    pub mcp_theta: f64,
    pub sigma_absorbed: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            t_max: 50,
            eps: 1e-3,
            inner_j: 3,
            cg_tol: 1e-6,
            cg_max: 100,
            mu_scale: 1.0,
            sparse_lambda: 0.1,
            red_lambda: 1.0,
            gap_lambda: 1.0,
            mcp_theta: 3.0,
            sigma_absorbed: true,
        }
    }
}

mod defaults {
    use crate::solvers::Method;

    pub fn sr() -> Vec<f64> {
        vec![0.75, 0.5, 0.25, 0.15]
    }

    pub fn snr_db() -> Vec<f64> {
        vec![20.0]
    }

    pub fn methods() -> Vec<Method> {
        Method::ALL.to_vec()
    }
}

impl RunConfig {
    /// The desk-scale preset with seeds 0, 1 and 2.
    pub fn desk() -> Self {
        RunConfig {
            seeds: vec![0, 1, 2],
            sr: defaults::sr(),
            snr_db: defaults::snr_db(),
            methods: defaults::methods(),
            record_timing: false,
            scene: SceneConfig::default(),
            array: ArrayConfig::default(),
            waveform: WaveformConfig::default(),
            operator: OperatorConfig::default(),
            solver: SolverSettings::default(),
            denoiser: DenoiserSpec::nlm_default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Value =
            toml::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: toml::Value) -> Result<Self> {
        let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (or the desk preset when `None`) and applies `key=value`
    /// overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str(&text).map_err(|e| Error::config("<root>", e.to_string()))?
            }
            None => toml::Value::try_from(Self::desk())
                .map_err(|e| Error::config("<root>", e.to_string()))?,
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<root>", e.to_string()))
    }

    pub fn scene_preset(&self) -> Result<ScenePreset> {
        self.scene
            .preset
            .parse()
            .map_err(|e: Error| Error::config("scene.preset", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.sr.is_empty() {
            return Err(Error::config("sr", "at least one sampling rate is required"));
        }
        for (i, &sr) in self.sr.iter().enumerate() {
            if !(sr > 0.0 && sr <= 1.0) {
                return Err(Error::config(format!("sr[{i}]"), format!("{sr} is outside (0, 1]")));
            }
        }
        if self.snr_db.is_empty() {
            return Err(Error::config("snr_db", "at least one SNR is required"));
        }
        for (i, &snr) in self.snr_db.iter().enumerate() {
            if snr.is_nan() || snr == f64::NEG_INFINITY {
                return Err(Error::config(format!("snr_db[{i}]"), format!("{snr} is not a valid SNR")));
            }
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "at least one method is required"));
        }
        self.scene_preset()?;
        if self.scene.dims.iter().any(|&d| d == 0) {
            return Err(Error::config("scene.dims", "every dimension must be >= 1"));
        }
        if self.scene.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::config("scene.spacing", "spacings must be positive"));
        }
        let a = &self.array;
        if a.n_az == 0 || a.n_el == 0 {
            return Err(Error::config("array", "element counts must be >= 1"));
        }
        if !(a.size_az > 0.0 && a.size_el > 0.0 && a.standoff > 0.0) {
            return Err(Error::config("array", "sizes and standoff must be positive"));
        }
        let w = &self.waveform;
        if !(w.carrier_hz > 0.0) || w.bandwidth_hz < 0.0 || w.n_freq == 0 {
            return Err(Error::config("waveform", "carrier must be positive, bandwidth nonnegative, n_freq >= 1"));
        }
        let s = &self.solver;
        let positive = [
            ("solver.eps", s.eps),
            ("solver.cg_tol", s.cg_tol),
            ("solver.mu_scale", s.mu_scale),
            ("solver.sparse_lambda", s.sparse_lambda),
            ("solver.red_lambda", s.red_lambda),
            ("solver.gap_lambda", s.gap_lambda),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        if s.t_max == 0 || s.inner_j == 0 || s.cg_max == 0 {
            return Err(Error::config("solver", "t_max, inner_j and cg_max must be >= 1"));
        }
        if !(s.mcp_theta > 1.0) {
            return Err(Error::config("solver.mcp_theta", "must exceed 1"));
        }
        Ok(())
    }
}

/// Applies one `dotted.key=value` override. The value is read as a TOML
/// literal and falls back to a bare string.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::config(key, "empty key segment"));
    }
    let value = parse_literal(raw.trim());
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut node = root;
    for (depth, part) in parts.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| {
            Error::config(parts[..depth].join("."), "not a table")
        })?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    node.as_table_mut()
        .ok_or_else(|| Error::config(parts.join("."), "not a table"))?
        .insert(last.to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: toml::Value,
    }
    toml::from_str::<Wrap>(&format!("v = {raw}"))
        .map(|w| w.v)
        .unwrap_or_else(|_| toml::Value::String(raw.to_string()))
}
