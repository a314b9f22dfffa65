//! Acceptance run over the desk preset. Prints one PASS/FAIL line per
//! criterion. Failing criteria are reported without failing the test binary
//! unless ACCEPTANCE_STRICT is set.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sarred::denoise::{red_gradient_check, Gaussian3d};
use sarred::experiment::{sweep, sweep_to_dir, Setup, SweepOutput};
use sarred::forward::MeasurementOperator;
use sarred::io::RunConfig;
use sarred::linalg::{DenseMatrix, C64, ZERO};
use sarred::metrics::{nmse, psnr, ssim};
use sarred::model::{make_planar_array, SceneGrid, Waveform};
use sarred::prox::{mcp_threshold, soft_threshold};
use sarred::solvers::{red_admm, red_stationarity_residual, solve_x_subproblem, Method};

struct Line {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn line(name: &'static str, pass: bool, detail: impl Into<String>) -> Line {
    Line { name, pass, detail: detail.into() }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median PSNR over seeds keyed by (sr, snr, method label).
fn medians(out: &SweepOutput) -> BTreeMap<(String, String, String), f64> {
    let mut by: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for c in &out.cells {
        let r = &c.row;
        let v = if r.failed() { f64::NAN } else { r.psnr_db };
        by.entry((r.sr.to_string(), r.snr_db.to_string(), r.method.clone()))
            .or_default()
            .push(v);
    }
    by.into_iter().map(|(k, v)| (k, median(v))).collect()
}

fn key(sr: f64, snr: f64, m: Method) -> (String, String, String) {
    (sr.to_string(), snr.to_string(), m.label().to_string())
}

fn jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

const ORDER: [Method; 5] = [Method::RedAdmm, Method::Pnp, Method::Mcp, Method::L1, Method::Mf];

fn method_ordering() -> Line {
    let cfg = RunConfig::desk();
    let out = sweep(&cfg, jobs()).expect("ordering sweep");
    let med = medians(&out);
    let mut ok = true;
    let mut parts = Vec::new();
    for &sr in &cfg.sr {
        let p: Vec<f64> = ORDER.iter().map(|&m| med[&key(sr, 20.0, m)]).collect();
        let chain = p.windows(2).all(|w| w[0] > w[1]);
        let gap = p[0] - p[3];
        ok &= chain && gap >= 2.0;
        parts.push(format!(
            "sr {sr}: red {:.2} pnp {:.2} mcp {:.2} l1 {:.2} mf {:.2} (red-l1 {gap:+.2})",
            p[0], p[1], p[2], p[3], p[4]
        ));
    }
    line("method ordering", ok, parts.join("; "))
}

fn snr_sweep() -> (RunConfig, SweepOutput) {
    let mut cfg = RunConfig::desk();
    cfg.sr = vec![0.5];
    cfg.snr_db = vec![18.0, 12.0, 6.0, 0.0, -6.0];
    let out = sweep(&cfg, jobs()).expect("snr sweep");
    (cfg, out)
}

fn snr_robustness(cfg: &RunConfig, out: &SweepOutput) -> Line {
    let med = medians(out);
    let mut monotone = true;
    let mut red_top = true;
    let mut parts = Vec::new();
    for &m in &Method::ALL {
        let p: Vec<f64> = cfg.snr_db.iter().map(|&s| med[&key(0.5, s, m)]).collect();
        monotone &= p.windows(2).all(|w| w[1] <= w[0] + 0.3);
        parts.push(format!(
            "{} [{}]",
            m.label(),
            p.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ")
        ));
    }
    for &s in &cfg.snr_db {
        let red = med[&key(0.5, s, Method::RedAdmm)];
        red_top &= Method::ALL
            .iter()
            .filter(|&&m| m != Method::RedAdmm)
            .all(|&m| red > med[&key(0.5, s, m)]);
    }
    line(
        "snr robustness",
        monotone && red_top,
        format!("non-increasing {monotone}, red top {red_top}; {}", parts.join("; ")),
    )
}

fn convergence(out: &SweepOutput) -> Line {
    let mut ok = true;
    let mut parts = Vec::new();
    for c in out
        .cells
        .iter()
        .filter(|c| c.row.snr_db == -6.0 && c.row.method == Method::RedAdmm.label())
    {
        let Some(res) = &c.result else {
            ok = false;
            parts.push(format!("seed {}: {}", c.row.seed, c.row.error));
            continue;
        };
        let re = res.trace.residuals();
        let reached = re.iter().take(50).position(|&r| r < 1e-3).map(|i| i + 1);
        let tail_ok = re.windows(2).skip(4).all(|w| w[1] <= w[0]);
        ok &= reached.is_some() && tail_ok;
        parts.push(format!(
            "seed {}: Re<1e-3 at {}, final {:.2e} after {} its, non-increasing after 5: {tail_ok}",
            c.row.seed,
            reached.map_or("never".to_string(), |t| t.to_string()),
            re.last().copied().unwrap_or(f64::NAN),
            re.len()
        ));
    }
    line("red-admm convergence at -6 dB", ok, parts.join("; "))
}

fn parity(snr_out: &SweepOutput) -> Line {
    let mut cfg = RunConfig::desk();
    cfg.snr_db = vec![f64::INFINITY];
    cfg.methods = vec![Method::RedAdmm, Method::RedGap];
    let out = sweep(&cfg, jobs()).expect("parity sweep");
    let med = medians(&out);
    let mut ok = true;
    let mut parts = Vec::new();
    for &sr in &cfg.sr {
        let a = med[&key(sr, f64::INFINITY, Method::RedAdmm)];
        let g = med[&key(sr, f64::INFINITY, Method::RedGap)];
        ok &= (a - g).abs() <= 1.0;
        parts.push(format!("noise-free sr {sr}: admm {a:.2} gap {g:.2}"));
    }
    let snr = medians(snr_out);
    let a = snr[&key(0.5, 6.0, Method::RedAdmm)];
    let g = snr[&key(0.5, 6.0, Method::RedGap)];
    ok &= a >= g - 0.2;
    parts.push(format!("6 dB sr 0.5: admm {a:.2} gap {g:.2}"));
    line("admm/gap parity", ok, parts.join("; "))
}

// Brute-force minimizer of 0.5 (x - v)^2 + pen(x) on a fine grid.
fn grid_argmin(v: f64, pen: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi, n) = (-4.0, 4.0, 400_000);
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let f = 0.5 * (x - v) * (x - v) + pen(x);
        if f < best.0 {
            best = (f, x);
        }
    }
    best.1
}

fn gauss_jordan(mut m: Vec<Vec<C64>>, mut b: Vec<C64>) -> Vec<C64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].norm().total_cmp(&m[j][col].norm())).unwrap();
        m.swap(col, piv);
        b.swap(col, piv);
        let p = m[col][col];
        for k in col..n {
            m[col][k] /= p;
        }
        b[col] /= p;
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                for k in col..n {
                    let t = m[col][k];
                    m[r][k] -= f * t;
                }
                let t = b[col];
                b[r] -= f * t;
            }
        }
    }
    b
}

fn random_c(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn oracle_suites() -> Line {
    // Prox operators against grid search.
    let mut prox_err = 0.0f64;
    let (lam, theta) = (0.7, 2.5);
    for i in 0..=60 {
        let v = -3.0 + 0.1 * i as f64;
        let l1 = grid_argmin(v, |x| lam * x.abs());
        prox_err = prox_err.max((soft_threshold(C64::new(v, 0.0), lam).re - l1).abs());
        let mcp = grid_argmin(v, |x| {
            if x.abs() <= theta * lam {
                lam * x.abs() - x * x / (2.0 * theta)
            } else {
                0.5 * theta * lam * lam
            }
        });
        let got = mcp_threshold(C64::new(v, 0.0), lam, theta).unwrap().re;
        prox_err = prox_err.max((got - mcp).abs());
    }

    // Forward operator against a naive triple loop.
    let geom = make_planar_array(3, 2, 0.05, 0.04, 0.8).unwrap();
    let wf = Waveform::new(37.5e9, 3e9, 3).unwrap();
    let grid = SceneGrid::centered([3, 2, 2], [0.02; 3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_c(&mut rng, grid.len());
    let c = 299_792_458.0;
    let mut naive = Vec::new();
    for e in &geom.elements {
        for f in wf.frequencies() {
            let k = 2.0 * std::f64::consts::PI * f / c;
            let mut acc = ZERO;
            for (n, xn) in x.iter().enumerate() {
                let p = grid.position(n);
                let r = ((e[0] - p[0]).powi(2) + (e[1] - p[1]).powi(2) + (e[2] - p[2]).powi(2)).sqrt();
                acc += C64::from_polar(1.0, -2.0 * k * r) * xn;
            }
            naive.push(acc);
        }
    }
    let mut fwd_err = 0.0f64;
    for explicit in [true, false] {
        let op = MeasurementOperator::build(&geom, &wf, &grid, explicit).unwrap();
        let y = op.forward(&x).unwrap();
        for (a, b) in y.iter().zip(&naive) {
            fwd_err = fwd_err.max((a - b).norm());
        }
    }

    // CG x-step against a dense direct solve.
    let n = 8;
    let a = DenseMatrix::new(n, n, random_c(&mut rng, n * n)).unwrap();
    let (y, v, d) = (random_c(&mut rng, n), random_c(&mut rng, n), random_c(&mut rng, n));
    let mu = 0.5;
    let sol = solve_x_subproblem(&a, &y, &v, &d, mu, 1e-15, 200).unwrap();
    let h: Vec<Vec<C64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let s = (0..n).fold(ZERO, |acc, r| acc + a.get(r, i).conj() * a.get(r, j));
                    if i == j { s + mu } else { s }
                })
                .collect()
        })
        .collect();
    let b: Vec<C64> = (0..n)
        .map(|i| (0..n).fold(ZERO, |acc, r| acc + a.get(r, i).conj() * y[r]) + (v[i] + d[i]) * mu)
        .collect();
    let direct = gauss_jordan(h, b);
    let cg_err = sol.x.iter().zip(&direct).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);

    // Adjoint identity on the desk operator.
    let setup = Setup::new(&RunConfig::desk()).unwrap();
    let op = &setup.operator;
    let xs = random_c(&mut rng, op.cols());
    let ys = random_c(&mut rng, op.rows());
    let ax = op.forward(&xs).unwrap();
    let ahy = op.adjoint(&ys).unwrap();
    let lhs: C64 = ax.iter().zip(&ys).map(|(p, q)| p * q.conj()).sum();
    let rhs: C64 = xs.iter().zip(&ahy).map(|(p, q)| p * q.conj()).sum();
    let adj_err = (lhs - rhs).norm() / lhs.norm().max(rhs.norm());

    let ok = prox_err < 1e-4 && fwd_err < 1e-12 && cg_err < 1e-8 && adj_err < 1e-10;
    line(
        "oracle suites",
        ok,
        format!("prox {prox_err:.1e}, forward {fwd_err:.1e}, cg {cg_err:.1e}, adjoint {adj_err:.1e}"),
    )
}

fn analytic_checks() -> Line {
    let mut cfg = RunConfig::desk();
    cfg.solver.t_max = 300;
    let setup = Setup::new(&cfg).unwrap();
    let scene = setup.scene(0).unwrap();
    let clean = setup.clean_echo(&scene).unwrap();
    let obs = setup.observe(&clean, 0.5, 20.0, 0).unwrap();
    let op = setup.operator.subsample(&obs.mask).unwrap();
    let aty = op.adjoint(&obs.echo.values).unwrap();
    let peak = aty.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let scfg = setup.solver_config(Method::RedAdmm, op.rows(), peak, obs.noise_sigma2);
    let den = setup.denoiser().unwrap();
    let res = red_admm(&op, &setup.grid, &obs.echo, den.as_ref(), &scfg).unwrap();
    let stat = red_stationarity_residual(den.as_ref(), &res).unwrap();

    let gauss = Gaussian3d::new(1, 1.0).unwrap();
    let v: Vec<C64> = aty.iter().map(|c| c / op.rows() as f64).collect();
    let y = obs.echo.values.clone();
    let f = |x: &[C64]| -> f64 {
        let ax = op.forward(x).unwrap();
        0.5 * ax.iter().zip(&y).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>()
    };
    let r: Vec<C64> = op.forward(&v).unwrap().iter().zip(&y).map(|(p, q)| p - q).collect();
    let grad = op.adjoint(&r).unwrap();
    let check = red_gradient_check(&gauss, &setup.grid, &v, &f, &grad, op.rows() as f64, 8, 5).unwrap();

    let est = &res.volume.values;
    let self_ssim = ssim(est, est).unwrap();
    let self_nmse = nmse(est, est).unwrap();
    // Independent recomputation of the three metrics.
    let mag = |w: &[C64]| {
        let m: Vec<f64> = w.iter().map(|c| c.norm()).collect();
        let p = m.iter().cloned().fold(0.0, f64::max);
        m.into_iter().map(|x| x / p).collect::<Vec<f64>>()
    };
    let (rr, ee) = (mag(&scene.values), mag(est));
    let n = rr.len() as f64;
    let se: f64 = rr.iter().zip(&ee).map(|(a, b)| (a - b) * (a - b)).sum();
    let o_psnr = 10.0 * (n / se).log10();
    let o_nmse = se / rr.iter().map(|a| a * a).sum::<f64>();
    let (mr, me) = (rr.iter().sum::<f64>() / n, ee.iter().sum::<f64>() / n);
    let vr = rr.iter().map(|a| (a - mr) * (a - mr)).sum::<f64>() / n;
    let ve = ee.iter().map(|b| (b - me) * (b - me)).sum::<f64>() / n;
    let cv = rr.iter().zip(&ee).map(|(a, b)| (a - mr) * (b - me)).sum::<f64>() / n;
    let o_ssim = (2.0 * mr * me + 1e-4) * (2.0 * cv + 9e-4) / ((mr * mr + me * me + 1e-4) * (vr + ve + 9e-4));
    let metric_err = (psnr(&scene.values, est).unwrap() - o_psnr)
        .abs()
        .max((ssim(&scene.values, est).unwrap() - o_ssim).abs())
        .max((nmse(&scene.values, est).unwrap() - o_nmse).abs());

    let ok = stat < 1e-3
        && check.max_relative_error < 1e-5
        && self_ssim == 1.0
        && self_nmse == 0.0
        && metric_err < 1e-10;
    line(
        "analytic checks",
        ok,
        format!(
            "stationarity {stat:.2e} after {} its, gaussian gradient {:.1e}, ssim(v,v) {self_ssim}, nmse(v,v) {self_nmse}, metric oracle {metric_err:.1e}",
            res.trace.len(),
            check.max_relative_error
        ),
    )
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "timings.csv") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Line {
    let mut cfg = RunConfig::desk();
    cfg.seeds = vec![1];
    cfg.sr = vec![0.25];
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    sweep_to_dir(&cfg, &a, 1).unwrap();
    sweep_to_dir(&cfg, &b, jobs().max(2)).unwrap();
    let (fa, fb) = (files(&a), files(&b));
    let volumes = fa.keys().filter(|p| p.extension().is_some_and(|e| e == "sarvol")).count();
    let ok = fa == fb && fa.contains_key(Path::new("results.csv")) && volumes > 0;
    line(
        "determinism",
        ok,
        format!("{} files compared, {volumes} volumes, identical: {}", fa.len(), fa == fb),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut run = |f: &dyn Fn() -> Line| {
        let l = f();
        println!("{} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail);
        lines.push(l.pass);
    };
    run(&oracle_suites);
    run(&analytic_checks);
    run(&determinism);
    run(&method_ordering);
    let (cfg, snr_out) = snr_sweep();
    run(&|| snr_robustness(&cfg, &snr_out));
    run(&|| convergence(&snr_out));
    run(&|| parity(&snr_out));
    let failed = lines.iter().filter(|p| !**p).count();
    println!(
        "{} of {} criteria passed in {:.0} s",
        lines.len() - failed,
        lines.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
