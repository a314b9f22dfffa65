//! Experiment harness: scene and echo simulation, per-cell reconstruction,
//! scoring, sweeps over sampling rate and SNR, diagnostics and the on-disk
//! run layout with its manifest.
//!
//! Output directory layout:
//!
//! ```text
//! config.toml            resolved config
//! scenes/seed{s}.sarvol  ground truth per seed
//! echoes/{cell}.csv      masked noisy echo with full-aperture row indices
//! volumes/{cell}_{method}.sarvol
//! traces/{cell}_{method}.csv
//! results.csv
//! timings.csv            wall-clock seconds, never hashed
//! diagnose.txt
//! manifest.toml          config echo, artifact hashes, versions
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::denoise::{
    cyclic_monotonicity_score, red_gradient_check, Denoiser, Gaussian3d, Identity,
};
use crate::error::{Error, Result};
use crate::forward::{
    add_noise, make_mask, EchoVector, MeasurementOperator, NoiseRealization, SamplingMask,
};
use crate::io::{self, format_number, ResultRow, RunConfig};
use crate::linalg::{dot, max_abs, norm, norm_sqr, sub, LinearOperator, C64, ZERO};
use crate::metrics::MetricReport;
use crate::model::{make_planar_array, scene_preset, Reflectivity, SceneGrid, Waveform};
use crate::prox::ProxKind;
use crate::solvers::{
    admm_reg, matched_filter, pnp_admm, red_admm, red_gap, red_stationarity_residual, Method,
    ReconstructionResult, SolverConfig,
};

const MASK_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const DIAGNOSE_STREAM: u64 = 3;

/// Independent seed for one purpose derived from a cell seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Resolved geometry and the full-aperture operator for a config.
pub struct Setup {
    pub config: RunConfig,
    pub grid: SceneGrid,
    pub operator: MeasurementOperator,
}

/// One (sr, snr, seed) measurement.
#[derive(Clone, Debug)]
pub struct Observation {
    pub sr: f64,
    pub snr_db: f64,
    pub seed: u64,
    pub mask: SamplingMask,
    pub echo: EchoVector,
    pub noise_sigma2: f64,
}

impl Observation {
    pub fn id(&self) -> String {
        cell_id(self.sr, self.snr_db, self.seed)
    }
}

pub fn cell_id(sr: f64, snr_db: f64, seed: u64) -> String {
    format!("sr{sr}_snr{snr_db}_seed{seed}")
}

impl Setup {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let grid = SceneGrid::centered(config.scene.dims, config.scene.spacing)?;
        let a = &config.array;
        let geom = make_planar_array(a.n_az, a.n_el, a.size_az, a.size_el, a.standoff)?;
        let w = &config.waveform;
        let wf = Waveform::new(w.carrier_hz, w.bandwidth_hz, w.n_freq)?;
        let operator = MeasurementOperator::build_with_budget(
            &geom,
            &wf,
            &grid,
            config.operator.explicit,
            config.operator.budget_bytes as u128,
        )?;
        Ok(Setup {
            config: config.clone(),
            grid,
            operator,
        })
    }

    pub fn scene(&self, seed: u64) -> Result<Reflectivity> {
        scene_preset(self.config.scene_preset()?, &self.grid, seed)
    }

    pub fn clean_echo(&self, scene: &Reflectivity) -> Result<EchoVector> {
        let mut echo = EchoVector::new(self.operator.forward(&scene.values)?);
        echo.meta.scene = Some(self.config.scene.preset.clone());
        Ok(echo)
    }

    /// Noise is drawn over the full aperture before masking, so for a fixed
    /// seed every SNR shares one noise pattern and every SR sees the same
    /// noise on the rows it keeps.
    pub fn observe(&self, clean: &EchoVector, sr: f64, snr_db: f64, seed: u64) -> Result<Observation> {
        let noise = NoiseRealization::for_signal(clean, snr_db, derive_seed(seed, NOISE_STREAM))?;
        let noisy = add_noise(clean, snr_db, noise.seed)?;
        let mask = make_mask(self.operator.rows(), sr, derive_seed(seed, MASK_STREAM))?;
        let mut echo = noisy.subsample(&mask)?;
        echo.meta.sr = Some(sr);
        echo.meta.seed = Some(seed);
        Ok(Observation {
            sr,
            snr_db,
            seed,
            mask,
            echo,
            noise_sigma2: noise.sigma2,
        })
    }

    /// Solver configuration the harness uses for `method` on an observation
    /// with `m_active` rows and matched-filter numerator peak `aty_peak`.
    pub fn solver_config(&self, method: Method, m_active: usize, aty_peak: f64, sigma2: f64) -> SolverConfig {
        let s = &self.config.solver;
        let mu = s.mu_scale * m_active as f64;
        let lambda = match method {
            Method::L1 | Method::Mcp => {
                if aty_peak > 0.0 {
                    s.sparse_lambda * aty_peak
                } else {
                    s.sparse_lambda
                }
            }
            Method::Pnp | Method::RedAdmm => s.red_lambda * m_active as f64,
            Method::RedGap => s.gap_lambda,
            Method::Mf => 1.0,
        };
        SolverConfig {
            lambda,
            mu,
            t_max: s.t_max,
            eps: s.eps,
            inner_j: s.inner_j,
            cg_tol: s.cg_tol,
            cg_max: s.cg_max,
            sigma_absorbed: s.sigma_absorbed,
            noise_variance: if sigma2 > 0.0 { sigma2 } else { 1.0 },
        }
    }

    pub fn denoiser(&self) -> Result<Box<dyn Denoiser>> {
        self.config.denoiser.build()
    }

    /// Runs `method` on an observation using the masked operator `op`.
    pub fn reconstruct(
        &self,
        method: Method,
        op: &dyn LinearOperator,
        obs: &Observation,
        denoiser: &dyn Denoiser,
    ) -> Result<ReconstructionResult> {
        let mut aty = vec![ZERO; op.cols()];
        op.apply_adjoint(&obs.echo.values, &mut aty)?;
        let cfg = self.solver_config(method, op.rows(), max_abs(&aty), obs.noise_sigma2);
        let grid = &self.grid;
        match method {
            Method::Mf => matched_filter(op, grid, &obs.echo),
            Method::L1 => admm_reg(op, grid, &obs.echo, ProxKind::L1, &cfg),
            Method::Mcp => admm_reg(
                op,
                grid,
                &obs.echo,
                ProxKind::Mcp {
                    theta: self.config.solver.mcp_theta,
                },
                &cfg,
            ),
            Method::Pnp => pnp_admm(op, grid, &obs.echo, denoiser, &cfg),
            Method::RedAdmm => red_admm(op, grid, &obs.echo, denoiser, &cfg),
            Method::RedGap => red_gap(op, grid, &obs.echo, denoiser, &cfg),
        }
    }
}

/// Everything produced for one (method, sr, snr, seed) cell.
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub row: ResultRow,
    pub result: Option<ReconstructionResult>,
    pub wall_seconds: f64,
}

fn row_for(method: Method, obs: &Observation) -> ResultRow {
    ResultRow {
        method: method.label().to_string(),
        sr: obs.sr,
        snr_db: obs.snr_db,
        seed: obs.seed,
        psnr_db: f64::NAN,
        ssim: f64::NAN,
        nmse: f64::NAN,
        iterations: 0,
        final_residual: f64::NAN,
        wall_seconds: 0.0,
        error: String::new(),
    }
}

fn score(
    method: Method,
    obs: &Observation,
    scene: &Reflectivity,
    outcome: Result<ReconstructionResult>,
    wall: f64,
    record_timing: bool,
) -> CellOutcome {
    let mut row = row_for(method, obs);
    let scored = outcome.and_then(|mut r| {
        let m = MetricReport::compute(&as_stored(&scene.values), &as_stored(&r.volume.values))?;
        if !record_timing {
            r.trace.clear_timing();
        }
        Ok((m, r))
    });
    match scored {
        Ok((m, r)) => {
            row.psnr_db = m.psnr_db;
            row.ssim = m.ssim;
            row.nmse = m.nmse;
            row.iterations = r.iterations();
            row.final_residual = r.trace.final_residual().unwrap_or(f64::NAN);
            row.wall_seconds = if record_timing { wall } else { 0.0 };
            CellOutcome {
                row,
                result: Some(r),
                wall_seconds: wall,
            }
        }
        Err(e) => {
            row.error = e.to_string();
            CellOutcome {
                row,
                result: None,
                wall_seconds: wall,
            }
        }
    }
}

/// Values rounded to the single-precision volume payload, so scores from a
/// sweep match scores recomputed from the written files.
fn as_stored(v: &[C64]) -> Vec<C64> {
    v.iter()
        .map(|c| C64::new(c.re as f32 as f64, c.im as f32 as f64))
        .collect()
}

struct Group {
    seed: u64,
    snr_db: f64,
    sr: f64,
}

/// In-memory result of a sweep, in deterministic cell order: seed, SNR, SR,
/// then method as listed in the config.
pub struct SweepOutput {
    pub scenes: BTreeMap<u64, Reflectivity>,
    pub observations: Vec<Observation>,
    pub cells: Vec<CellOutcome>,
}

impl SweepOutput {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.cells.iter().map(|c| c.row.clone()).collect()
    }

    pub fn all_succeeded(&self) -> bool {
        self.cells.iter().all(|c| !c.row.failed())
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

/// Runs every cell of the config. Cell failures become rows with an error
/// tag; only setup failures abort the sweep.
pub fn sweep(config: &RunConfig, jobs: usize) -> Result<SweepOutput> {
    let setup = Setup::new(config)?;
    let pool = thread_pool(jobs)?;
    pool.install(|| sweep_with(&setup))
}

fn sweep_with(setup: &Setup) -> Result<SweepOutput> {
    let cfg = &setup.config;
    let mut scenes = BTreeMap::new();
    let mut cleans = BTreeMap::new();
    for &seed in &cfg.seeds {
        let scene = setup.scene(seed)?;
        cleans.insert(seed, setup.clean_echo(&scene)?);
        scenes.insert(seed, scene);
    }
    let groups: Vec<Group> = cfg
        .seeds
        .iter()
        .flat_map(|&seed| {
            cfg.snr_db.iter().flat_map(move |&snr_db| {
                cfg.sr.iter().map(move |&sr| Group { seed, snr_db, sr })
            })
        })
        .collect();
    let denoiser = setup.denoiser()?;

    let per_group: Vec<(Option<Observation>, Vec<CellOutcome>)> = groups
        .par_iter()
        .map(|g| {
            let scene = &scenes[&g.seed];
            let obs = setup.observe(&cleans[&g.seed], g.sr, g.snr_db, g.seed);
            let prepared = obs.and_then(|o| {
                let op = setup.operator.subsample(&o.mask)?;
                Ok((o, op))
            });
            match prepared {
                Ok((obs, op)) => {
                    let cells = cfg
                        .methods
                        .iter()
                        .map(|&m| {
                            let start = Instant::now();
                            let r = setup.reconstruct(m, &op, &obs, denoiser.as_ref());
                            let wall = start.elapsed().as_secs_f64();
                            score(m, &obs, scene, r, wall, cfg.record_timing)
                        })
                        .collect();
                    (Some(obs), cells)
                }
                Err(e) => {
                    let cells = cfg
                        .methods
                        .iter()
                        .map(|&m| {
                            let mut row = row_for(m, &placeholder(g));
                            row.error = e.to_string();
                            CellOutcome {
                                row,
                                result: None,
                                wall_seconds: 0.0,
                            }
                        })
                        .collect();
                    (None, cells)
                }
            }
        })
        .collect();

    let mut observations = Vec::new();
    let mut cells = Vec::new();
    for (obs, c) in per_group {
        observations.extend(obs);
        cells.extend(c);
    }
    Ok(SweepOutput {
        scenes,
        observations,
        cells,
    })
}

fn placeholder(g: &Group) -> Observation {
    Observation {
        sr: g.sr,
        snr_db: g.snr_db,
        seed: g.seed,
        mask: SamplingMask::full(0),
        echo: EchoVector::new(Vec::new()),
        noise_sigma2: 0.0,
    }
}

/// Tracks files written under an output directory for the manifest.
pub struct RunDir {
    root: PathBuf,
    artifacts: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub artifacts: Vec<Artifact>,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["scenes", "echoes", "volumes", "traces"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(RunDir {
            root,
            artifacts: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn track(&mut self, rel: impl Into<PathBuf>) -> PathBuf {
        let rel = rel.into();
        self.artifacts.push(rel.clone());
        self.root.join(rel)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        let p = self.track(rel);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    pub fn write_config(&mut self, cfg: &RunConfig) -> Result<()> {
        self.write_text("config.toml", &cfg.to_toml_string()?)
    }

    pub fn write_scene(&mut self, seed: u64, scene: &Reflectivity) -> Result<()> {
        let p = self.track(format!("scenes/seed{seed}.sarvol"));
        io::write_volume(p, scene)
    }

    pub fn write_observation(&mut self, obs: &Observation) -> Result<()> {
        let p = self.track(format!("echoes/{}.csv", obs.id()));
        io::write_echo(p, &obs.echo, &obs.mask)
    }

    pub fn write_result(&mut self, obs_id: &str, r: &ReconstructionResult) -> Result<()> {
        let stem = format!("{obs_id}_{}", r.method.label());
        let p = self.track(format!("volumes/{stem}.sarvol"));
        io::write_volume(p, &r.volume)?;
        let p = self.track(format!("traces/{stem}.csv"));
        io::write_trace(p, &r.trace)
    }

    pub fn write_results(&mut self, rows: &[ResultRow]) -> Result<()> {
        let p = self.track("results.csv");
        io::write_results(p, rows)
    }

    /// Wall-clock timings are kept out of the manifest so it stays stable.
    pub fn write_timings(&self, cells: &[CellOutcome]) -> Result<()> {
        let mut text = String::from("method,sr,snr_db,seed,wall_seconds\n");
        for c in cells {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                c.row.method,
                format_number(c.row.sr),
                format_number(c.row.snr_db),
                c.row.seed,
                format_number(c.wall_seconds)
            ));
        }
        let p = self.root.join("timings.csv");
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    /// Hashes every tracked artifact and writes `manifest.toml`.
    pub fn finish(mut self, command: &str, cfg: &RunConfig) -> Result<Manifest> {
        self.artifacts.sort();
        self.artifacts.dedup();
        let artifacts = self
            .artifacts
            .iter()
            .map(|rel| {
                let p = self.root.join(rel);
                let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
                Ok(Artifact {
                    path: rel.to_string_lossy().replace('\\', "/"),
                    sha256: hex::encode(Sha256::digest(&bytes)),
                    bytes: bytes.len() as u64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            tool: "sarred".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: cfg.clone(),
            artifacts,
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::config("<manifest>", e.to_string()))?;
        let p = self.root.join("manifest.toml");
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(manifest)
    }
}

/// Runs a sweep and writes every artifact under `out`.
pub fn sweep_to_dir(config: &RunConfig, out: &Path, jobs: usize) -> Result<SweepOutput> {
    let output = sweep(config, jobs)?;
    let mut dir = RunDir::create(out)?;
    dir.write_config(config)?;
    for (seed, scene) in &output.scenes {
        dir.write_scene(*seed, scene)?;
    }
    for obs in &output.observations {
        dir.write_observation(obs)?;
    }
    for c in &output.cells {
        if let Some(r) = &c.result {
            dir.write_result(&cell_id(c.row.sr, c.row.snr_db, c.row.seed), r)?;
        }
    }
    dir.write_results(&output.rows())?;
    dir.write_timings(&output.cells)?;
    dir.finish("sweep", config)?;
    Ok(output)
}

/// Writes scenes and masked noisy echoes for every (sr, snr, seed).
pub fn simulate_to_dir(config: &RunConfig, out: &Path) -> Result<Vec<Observation>> {
    let setup = Setup::new(config)?;
    let mut dir = RunDir::create(out)?;
    dir.write_config(config)?;
    let mut all = Vec::new();
    for &seed in &config.seeds {
        let scene = setup.scene(seed)?;
        let clean = setup.clean_echo(&scene)?;
        dir.write_scene(seed, &scene)?;
        let p = dir.track(format!("echoes/clean_seed{seed}.csv"));
        io::write_echo(p, &clean, &SamplingMask::full(clean.len()))?;
        for &snr in &config.snr_db {
            for &sr in &config.sr {
                let obs = setup.observe(&clean, sr, snr, seed)?;
                dir.write_observation(&obs)?;
                all.push(obs);
            }
        }
    }
    dir.finish("simulate", config)?;
    Ok(all)
}

fn load_observation(setup: &Setup, root: &Path, sr: f64, snr_db: f64, seed: u64) -> Result<Observation> {
    let path = root.join("echoes").join(format!("{}.csv", cell_id(sr, snr_db, seed)));
    let (rows, echo) = io::read_echo(&path)?;
    let mask = SamplingMask::from_rows(setup.operator.rows(), rows, derive_seed(seed, MASK_STREAM))?;
    let sigma2 = if snr_db.is_finite() {
        let scene = setup.scene(seed)?;
        NoiseRealization::for_signal(&setup.clean_echo(&scene)?, snr_db, 0)?.sigma2
    } else {
        0.0
    };
    Ok(Observation {
        sr,
        snr_db,
        seed,
        mask,
        echo,
        noise_sigma2: sigma2,
    })
}

/// Reconstructs every cell from echo files previously written by
/// [`simulate_to_dir`] into the same directory. Returns the number of
/// failed cells.
pub fn reconstruct_dir(config: &RunConfig, root: &Path, jobs: usize) -> Result<usize> {
    let setup = Setup::new(config)?;
    let pool = thread_pool(jobs)?;
    let denoiser = setup.denoiser()?;
    let mut cells = Vec::new();
    for &seed in &config.seeds {
        for &snr in &config.snr_db {
            for &sr in &config.sr {
                cells.push((seed, snr, sr));
            }
        }
    }
    let outcomes: Vec<(String, Vec<(Method, Result<ReconstructionResult>, f64)>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(seed, snr, sr)| {
                let id = cell_id(sr, snr, seed);
                let loaded = load_observation(&setup, root, sr, snr, seed)
                    .and_then(|o| Ok((setup.operator.subsample(&o.mask)?, o)));
                let runs = config
                    .methods
                    .iter()
                    .map(|&m| {
                        let start = Instant::now();
                        let r = match &loaded {
                            Ok((op, obs)) => setup.reconstruct(m, op, obs, denoiser.as_ref()),
                            Err(e) => Err(Error::invalid(e.to_string())),
                        };
                        (m, r, start.elapsed().as_secs_f64())
                    })
                    .collect();
                (id, runs)
            })
            .collect()
    });

    let mut dir = RunDir::create(root)?;
    let mut failed = 0;
    let mut timing = String::from("cell,method,wall_seconds,error\n");
    for (id, runs) in outcomes {
        for (m, r, wall) in runs {
            match r {
                Ok(mut r) => {
                    if !config.record_timing {
                        r.trace.clear_timing();
                    }
                    dir.write_result(&id, &r)?;
                    timing.push_str(&format!("{id},{m},{},\n", format_number(wall)));
                }
                Err(e) => {
                    failed += 1;
                    timing.push_str(&format!("{id},{m},{},\"{}\"\n", format_number(wall), e.to_string().replace('"', "'")));
                }
            }
        }
    }
    let p = root.join("timings.csv");
    fs::write(&p, timing).map_err(|e| Error::io(&p, e))?;
    dir.finish("reconstruct", config)?;
    Ok(failed)
}

/// Scores volumes in `root` against the scenes there and writes
/// `results.csv`. Missing or unreadable files become error rows.
pub fn evaluate_dir(config: &RunConfig, root: &Path) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let scene = io::read_volume(root.join(format!("scenes/seed{seed}.sarvol")));
        for &snr in &config.snr_db {
            for &sr in &config.sr {
                let id = cell_id(sr, snr, seed);
                for &m in &config.methods {
                    let stem = format!("{id}_{}", m.label());
                    let mut row = ResultRow {
                        method: m.label().to_string(),
                        sr,
                        snr_db: snr,
                        seed,
                        psnr_db: f64::NAN,
                        ssim: f64::NAN,
                        nmse: f64::NAN,
                        iterations: 0,
                        final_residual: f64::NAN,
                        wall_seconds: 0.0,
                        error: String::new(),
                    };
                    let scored = (|| -> Result<_> {
                        let scene = scene.as_ref().map_err(|e| Error::invalid(e.to_string()))?;
                        let vol = io::read_volume(root.join(format!("volumes/{stem}.sarvol")))?;
                        let trace = io::read_trace(root.join(format!("traces/{stem}.csv")))?;
                        Ok((MetricReport::compute(&scene.values, &vol.values)?, trace))
                    })();
                    match scored {
                        Ok((metrics, trace)) => {
                            row.psnr_db = metrics.psnr_db;
                            row.ssim = metrics.ssim;
                            row.nmse = metrics.nmse;
                            row.iterations = trace.len();
                            row.final_residual = trace.final_residual().unwrap_or(f64::NAN);
                            row.wall_seconds = trace.records.last().map_or(0.0, |r| r.wall_seconds);
                        }
                        Err(e) => row.error = e.to_string(),
                    }
                    rows.push(row);
                }
            }
        }
    }
    let mut dir = RunDir::create(root)?;
    dir.write_results(&rows)?;
    dir.finish("evaluate", config)?;
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Warn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Finding {
    pub name: String,
    pub status: Status,
    pub value: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticReport {
    pub findings: Vec<Finding>,
}

impl DiagnosticReport {
    fn push(&mut self, name: &str, pass: bool, value: f64, detail: String) {
        self.findings.push(Finding {
            name: name.into(),
            status: if pass { Status::Pass } else { Status::Warn },
            value,
            detail,
        });
    }

    pub fn all_pass(&self) -> bool {
        self.findings.iter().all(|f| f.status == Status::Pass)
    }

    pub fn get(&self, name: &str) -> Option<&Finding> {
        self.findings.iter().find(|f| f.name == name)
    }

    pub fn render(&self) -> String {
        self.findings
            .iter()
            .map(|f| {
                let tag = match f.status {
                    Status::Pass => "PASS",
                    Status::Warn => "WARN",
                };
                format!("{tag} {} {} {}\n", f.name, format_number(f.value), f.detail)
            })
            .collect()
    }
}

/// Relative gap `|<A x, y> - <x, A^H y>| / (||A x|| ||y||)` for random `x, y`.
pub fn adjoint_mismatch(op: &dyn LinearOperator, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<C64> {
        (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    };
    let x = draw(op.cols());
    let y = draw(op.rows());
    let mut ax = vec![ZERO; op.rows()];
    op.apply(&x, &mut ax)?;
    let mut aty = vec![ZERO; op.cols()];
    op.apply_adjoint(&y, &mut aty)?;
    let lhs = dot(&y, &ax);
    let rhs = dot(&aty, &x);
    let scale = norm(&ax) * norm(&y);
    Ok(if scale == 0.0 { 0.0 } else { (lhs - rhs).norm() / scale })
}

/// Operator, gradient and denoiser checks on the first seed and SR of the
/// config.
pub fn diagnose(config: &RunConfig) -> Result<DiagnosticReport> {
    let setup = Setup::new(config)?;
    let seed = config.seeds[0];
    let mut report = DiagnosticReport::default();

    let adj = adjoint_mismatch(&setup.operator, derive_seed(seed, DIAGNOSE_STREAM))?;
    report.push("adjoint_identity", adj < 1e-10, adj, "relative, full aperture".into());

    let scene = setup.scene(seed)?;
    let clean = setup.clean_echo(&scene)?;
    let obs = setup.observe(&clean, config.sr[0], config.snr_db[0], seed)?;
    let op = setup.operator.subsample(&obs.mask)?;
    let mf = matched_filter(&op, &setup.grid, &obs.echo)?.volume.values;

    let y = obs.echo.values.clone();
    let f = |x: &[C64]| -> f64 {
        let mut ax = vec![ZERO; op.rows()];
        match op.apply(x, &mut ax) {
            Ok(()) => 0.5 * norm_sqr(&sub(&y, &ax)),
            Err(_) => f64::NAN,
        }
    };
    let mut ax = vec![ZERO; op.rows()];
    op.apply(&mf, &mut ax)?;
    let mut grad = vec![ZERO; op.cols()];
    op.apply_adjoint(&sub(&ax, &y), &mut grad)?;
    let lambda = setup
        .solver_config(Method::RedAdmm, op.rows(), 0.0, obs.noise_sigma2)
        .effective_lambda();

    let gauss = Gaussian3d::new(1, 1.0)?;
    let g = red_gradient_check(&gauss, &setup.grid, &mf, &f, &grad, lambda, 6, derive_seed(seed, DIAGNOSE_STREAM))?;
    report.push(
        "gradient_check_gaussian3d",
        g.passes(1e-5),
        g.max_relative_error,
        format!("{} directions", g.directions),
    );

    let den = setup.denoiser()?;
    let g = red_gradient_check(den.as_ref(), &setup.grid, &mf, &f, &grad, lambda, 4, derive_seed(seed, DIAGNOSE_STREAM))?;
    let name = format!("gradient_check_{}", den.name());
    if g.strict {
        report.push(&name, g.passes(1e-5), g.max_relative_error, "exact identity".into());
    } else {
        report.push(&name, true, g.max_relative_error, "informational, denoiser is not linear-symmetric".into());
    }

    // RED-ADMM iterates x_1..x_4, obtained as prefixes of one deterministic run.
    let base = setup.solver_config(Method::RedAdmm, op.rows(), 0.0, obs.noise_sigma2);
    let mut iterates = Vec::new();
    for t in 1..=4 {
        let cfg = SolverConfig {
            t_max: t,
            eps: f64::MIN_POSITIVE,
            ..base
        };
        iterates.push(red_admm(&op, &setup.grid, &obs.echo, den.as_ref(), &cfg)?.volume.values);
    }
    let scale = iterates.iter().map(|v| norm_sqr(v)).fold(0.0, f64::max);
    let tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let score = cyclic_monotonicity_score(den.as_ref(), &setup.grid, &iterates)?;
    report.push(
        &format!("cyclic_monotonicity_{}", den.name()),
        score >= -tol,
        score,
        "over RED-ADMM iterates 1..4".into(),
    );
    let score = cyclic_monotonicity_score(&Identity, &setup.grid, &iterates)?;
    report.push("cyclic_monotonicity_identity", score.abs() <= tol, score, "reference".into());
    let score = cyclic_monotonicity_score(&gauss, &setup.grid, &iterates)?;
    report.push("cyclic_monotonicity_gaussian3d", score >= -tol, score, "reference".into());

    let r = red_admm(&op, &setup.grid, &obs.echo, den.as_ref(), &base)?;
    let stat = red_stationarity_residual(den.as_ref(), &r)?;
    report.push(
        "red_admm_stationarity",
        !r.converged || stat < 1e-3,
        stat,
        format!("converged={} after {} iterations", r.converged, r.iterations()),
    );
    Ok(report)
}

pub fn diagnose_to_dir(config: &RunConfig, out: &Path) -> Result<DiagnosticReport> {
    let report = diagnose(config)?;
    let mut dir = RunDir::create(out)?;
    dir.write_config(config)?;
    dir.write_text("diagnose.txt", &report.render())?;
    dir.finish("diagnose", config)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut cfg = RunConfig::desk();
        cfg.seeds = vec![0];
        cfg.scene.dims = [6, 6, 4];
        cfg.scene.spacing = [0.03; 3];
        cfg.array.n_az = 4;
        cfg.array.n_el = 4;
        cfg.waveform.n_freq = 4;
        cfg.sr = vec![0.5];
        cfg.solver.t_max = 5;
        cfg
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(0, MASK_STREAM);
        let b = derive_seed(0, NOISE_STREAM);
        let c = derive_seed(1, MASK_STREAM);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derive_seed(0, MASK_STREAM));
    }

    #[test]
    fn full_rate_noise_free_echo_is_the_forward_model() {
        let mut cfg = small();
        cfg.sr = vec![1.0];
        cfg.snr_db = vec![f64::INFINITY];
        let setup = Setup::new(&cfg).unwrap();
        let scene = setup.scene(0).unwrap();
        let clean = setup.clean_echo(&scene).unwrap();
        let obs = setup.observe(&clean, 1.0, f64::INFINITY, 0).unwrap();
        assert_eq!(obs.echo.values, setup.operator.forward(&scene.values).unwrap());
        let obs = setup.observe(&clean, 0.25, 10.0, 0).unwrap();
        assert_eq!(obs.echo.len(), (0.25 * setup.operator.rows() as f64).round() as usize);
    }

    #[test]
    fn one_mf_cell_gives_one_row() {
        let mut cfg = small();
        cfg.methods = vec![Method::Mf];
        let out = sweep(&cfg, 1).unwrap();
        assert_eq!(out.cells.len(), 1);
        assert!(out.all_succeeded());
    }

    #[test]
    fn failing_cells_are_reported_not_fatal() {
        let mut cfg = small();
        cfg.methods = vec![Method::Mf, Method::Pnp];
        cfg.denoiser = crate::denoise::DenoiserSpec::External {
            command: "/nonexistent/denoiser".into(),
            args: vec![],
            deterministic: true,
        };
        let out = sweep(&cfg, 1).unwrap();
        assert_eq!(out.cells.len(), 2);
        assert!(!out.cells[0].row.failed());
        assert!(out.cells[1].row.failed());
        assert!(out.cells[1].row.psnr_db.is_nan());
    }

    #[test]
    fn sweep_rows_follow_grid_order() {
        let mut cfg = small();
        cfg.seeds = vec![3, 1];
        cfg.sr = vec![0.5, 0.25];
        cfg.methods = vec![Method::Mf, Method::L1];
        let out = sweep(&cfg, 2).unwrap();
        let keys: Vec<(u64, f64, String)> =
            out.rows().into_iter().map(|r| (r.seed, r.sr, r.method)).collect();
        assert_eq!(
            keys,
            vec![
                (3, 0.5, "mf".into()),
                (3, 0.5, "l1".into()),
                (3, 0.25, "mf".into()),
                (3, 0.25, "l1".into()),
                (1, 0.5, "mf".into()),
                (1, 0.5, "l1".into()),
                (1, 0.25, "mf".into()),
                (1, 0.25, "l1".into()),
            ]
        );
    }

    #[test]
    fn file_pipeline_matches_in_memory_sweep() {
        let mut cfg = small();
        cfg.methods = vec![Method::Mf, Method::Mcp, Method::RedAdmm];
        cfg.denoiser = crate::denoise::DenoiserSpec::Gaussian3d { radius: 1, sigma: 1.0 };
        let dir = tempfile::tempdir().unwrap();
        simulate_to_dir(&cfg, dir.path()).unwrap();
        assert_eq!(reconstruct_dir(&cfg, dir.path(), 1).unwrap(), 0);
        let rows = evaluate_dir(&cfg, dir.path()).unwrap();
        let mem = sweep(&cfg, 1).unwrap().rows();
        assert_eq!(rows.len(), mem.len());
        for (a, b) in rows.iter().zip(&mem) {
            assert!(a.same_as(b), "{a:?} vs {b:?}");
        }
        let manifest = fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
        assert!(manifest.contains("results.csv"));
    }

    #[test]
    fn evaluate_reports_missing_volumes() {
        let mut cfg = small();
        cfg.methods = vec![Method::Mf];
        let dir = tempfile::tempdir().unwrap();
        simulate_to_dir(&cfg, dir.path()).unwrap();
        let rows = evaluate_dir(&cfg, dir.path()).unwrap();
        assert!(rows[0].failed());
    }

    #[test]
    fn diagnose_small_problem() {
        let mut cfg = small();
        cfg.denoiser = crate::denoise::DenoiserSpec::Identity {};
        let r = diagnose(&cfg).unwrap();
        assert!(r.get("adjoint_identity").unwrap().status == Status::Pass);
        assert!(r.get("gradient_check_gaussian3d").unwrap().status == Status::Pass, "{}", r.render());
        assert_eq!(r.get("cyclic_monotonicity_identity").unwrap().value, 0.0);
        assert!(r.all_pass(), "{}", r.render());
    }
}
