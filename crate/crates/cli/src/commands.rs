//! One function per subcommand. Each returns its output files and a JSON summary.

use crate::settings::{self, f64_or, list_or, u64_or};
use crate::CliError;
use mlmoments::combinatoric_bounds::{summarize_slice, sweep_a4, sweep_a5, SweepRow};
use mlmoments::dsmc::{self, RunSpec};
use mlmoments::io::{read_trajectory, write_trajectory, Config};
use mlmoments::kernels::{doubling_grid, epsilon_decay_profile, EpsilonSequence};
use mlmoments::moment_bounds::{envelope_coverage, envelope_table, BoundConstants, MomentTrajectory, Provenance};
use mlmoments::partial_sums::{
    bootstrap_scan, estimate_tail_order, initial_ml_mass, propagation_search, BootstrapVerdict,
};
use mlmoments::povzner::{povzner_sweep, PovznerBound};
use mlmoments::specfun::{ln_mittag_leffler_detailed, MlMethod};
use serde_json::{json, Value};
use std::path::Path;

pub struct Report {
    /// (file name, contents); the first one goes to stdout when no output directory is given.
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Value,
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Usage(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
}

fn json_bytes(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("json value serializes");
    s.push(b'\n');
    s
}

fn trajectory(path: &Path) -> Result<MomentTrajectory, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(read_trajectory(f, Provenance::Simulated)?)
}

pub fn ml_eval(cfg: &Config) -> Result<Report, CliError> {
    let a_grid = list_or(cfg, "ml", "a", &[1.0, 2.0])?;
    let x_grid = list_or(cfg, "ml", "x", &[1.0, 4.0])?;
    let mut rows = Vec::new();
    for &a in &a_grid {
        for &x in &x_grid {
            let v = ln_mittag_leffler_detailed(a, x)?;
            let method = match v.method {
                MlMethod::Series { terms } => format!("series:{terms}"),
                MlMethod::Asymptotic => "asymptotic".into(),
            };
            rows.push(vec![
                a.to_string(),
                x.to_string(),
                format!("{:.10e}", v.ln_value.exp()),
                v.ln_value.to_string(),
                method,
            ]);
        }
    }
    let n = rows.len();
    Ok(Report {
        files: vec![(
            "ml_eval.csv".into(),
            csv_bytes(&["a", "x", "value", "ln_value", "method"], rows)?,
        )],
        summary: json!({ "rows": n }),
    })
}

pub fn eps_profile(cfg: &Config) -> Result<Report, CliError> {
    let k = settings::kernel(cfg)?;
    let beta = settings::beta(cfg)?;
    let q = list_or(cfg, "eps", "q", &doubling_grid(4.0, 1024.0))?;
    let p = epsilon_decay_profile(&k.angular, beta, &q)?;
    let rows = p
        .sequence
        .entries()
        .iter()
        .zip(&p.normalized)
        .map(|((q, e), (_, n))| vec![q.to_string(), e.to_string(), n.to_string()]);
    let files = vec![(
        "eps_profile.csv".into(),
        csv_bytes(&["q", "epsilon", "normalized"], rows)?,
    )];
    Ok(Report {
        files,
        summary: json!({
            "beta": beta,
            "nonincreasing_from": p.nonincreasing_from,
            "final_over_initial": p.final_over_initial,
            "final_over_32": p.final_over(32.0),
        }),
    })
}

pub fn povzner(cfg: &Config, seed: u64) -> Result<Report, CliError> {
    let k = settings::kernel(cfg)?;
    let rq = list_or(cfg, "povzner", "rq", &[4.0, 6.0, 9.4])?;
    let n = u64_or(cfg, "povzner", "samples", 10_000)? as usize;
    let spread = f64_or(cfg, "povzner", "spread", 3.0)?;
    let rel_tol = f64_or(cfg, "povzner", "rel_tol", 1e-9)?;
    let halves: Vec<f64> = rq.iter().map(|r| 0.5 * r).filter(|p| *p > 1.0).collect();
    let eps = EpsilonSequence::compute(&k.angular, settings::beta(cfg)?, &halves)?;
    let bound = PovznerBound::new(k, eps)?;
    let samples = povzner_sweep(&bound, &rq, n, spread, seed, rel_tol)?;
    let fmt = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
    let violations = samples.iter().filter(|s| s.margin < 0.0).count();
    let min_margin = samples.iter().map(|s| s.margin).fold(f64::INFINITY, f64::min);
    let rows = samples.iter().map(|s| {
        vec![
            fmt(&s.v),
            fmt(&s.v_star),
            s.rq.to_string(),
            s.direct.to_string(),
            s.bound.to_string(),
            s.margin.to_string(),
        ]
    });
    let csv = csv_bytes(&["v", "v_star", "rq", "direct", "bound", "margin"], rows)?;
    let summary = json!({ "samples": samples.len(), "violations": violations, "min_margin": min_margin });
    Ok(Report {
        files: vec![
            ("povzner_sweep.csv".into(), csv),
            ("povzner_summary.json".into(), json_bytes(&summary)),
        ],
        summary,
    })
}

type SliceSweep = fn(f64, &[u32]) -> mlmoments::Result<Vec<SweepRow>>;

pub fn beta_sums(cfg: &Config) -> Result<Report, CliError> {
    let lemma = cfg.get("beta", "lemma").unwrap_or("a4");
    let q = settings::int_grid(cfg.get("beta", "q").unwrap_or("3..300"))?;
    let from = u64_or(cfg, "beta", "monotone_from", 32)? as u32;
    let (params, sweep): (Vec<f64>, SliceSweep) = match lemma {
        "a4" => (list_or(cfg, "beta", "params", &[1.1, 1.5, 2.0, 3.0])?, sweep_a4),
        "a5" => (list_or(cfg, "beta", "params", &[0.5, 1.0])?, sweep_a5),
        other => return Err(CliError::Usage(format!("beta.lemma must be a4 or a5, got {other:?}"))),
    };
    let mut rows = Vec::new();
    let mut slices = Vec::new();
    for &p in &params {
        let r = sweep(p, &q)?;
        let s = summarize_slice(&r, from)?;
        slices.push(json!({
            "param": p,
            "max_over_min": s.max_over_min,
            "nonincreasing_from": s.nonincreasing_from,
            "last_increase": s.last_increase,
            "eventually_nonincreasing": s.eventually_nonincreasing(),
        }));
        rows.extend(r);
    }
    let csv = csv_bytes(
        &["q", "param", "sum", "normalized"],
        rows.iter().map(|r| {
            vec![
                r.q.to_string(),
                r.param.to_string(),
                r.sum.to_string(),
                r.normalized.to_string(),
            ]
        }),
    )?;
    Ok(Report {
        files: vec![("beta_sums.csv".into(), csv)],
        summary: json!({ "lemma": lemma, "slices": slices }),
    })
}

pub fn moment_envelope(cfg: &Config, path: &Path) -> Result<Report, CliError> {
    let traj = trajectory(path)?;
    let k = settings::kernel(cfg)?;
    let snap = traj.snapshot_at(0);
    let c = BoundConstants::new(k.angular.a_beta(2.0)?, k.gamma, snap.moment(0.0)?, snap.moment(2.0)?)?;
    let orders = list_or(cfg, "envelope", "orders", &[4.0])?;
    let sigmas = f64_or(cfg, "envelope", "sigmas", 3.0)?;
    let rows = envelope_table(&traj, &c, &orders)?;
    let strict = rows
        .iter()
        .filter(|r| r.value + sigmas * r.stderr <= r.envelope)
        .count();
    let csv = csv_bytes(
        &["t", "q", "value", "stderr", "envelope", "margin"],
        rows.iter().map(|r| {
            [r.t, r.q, r.value, r.stderr, r.envelope, r.margin]
                .iter()
                .map(f64::to_string)
                .collect()
        }),
    )?;
    Ok(Report {
        files: vec![("envelope.csv".into(), csv)],
        summary: json!({
            "points": rows.len(),
            "below_with_margin": strict as f64 / rows.len().max(1) as f64,
            "below_within_sigmas": envelope_coverage(&rows, sigmas),
            "sigmas": sigmas,
        }),
    })
}

pub fn run_spec(cfg: &Config, seed: u64) -> Result<RunSpec, CliError> {
    let horizon = f64_or(cfg, "run", "horizon", 1.0)?;
    let snapshots = match cfg.get_list("run", "snapshots")? {
        Some(s) => s,
        None => {
            let n = u64_or(cfg, "run", "snapshot_count", 10)?.max(1);
            (0..=n).map(|i| horizon * i as f64 / n as f64).collect()
        }
    };
    Ok(RunSpec {
        ic: settings::initial_condition(cfg)?,
        kernel: settings::kernel(cfg)?,
        horizon,
        snapshots,
        orders: list_or(
            cfg,
            "run",
            "orders",
            &(0..=20).map(|q| 2.0 * f64::from(q)).collect::<Vec<_>>(),
        )?,
        particles: u64_or(cfg, "run", "particles", 10_000)? as usize,
        seed,
        dt: settings::dt_policy(cfg)?,
        entropy_points: u64_or(cfg, "run", "entropy_points", 0)? as usize,
        budget: cfg.get_f64("run", "budget")?,
    })
}

pub fn dsmc_run(cfg: &Config, seed: u64) -> Result<Report, CliError> {
    let spec = run_spec(cfg, seed)?;
    let r = dsmc::run(&spec)?;
    let mut traj = Vec::new();
    write_trajectory(&r.trajectory, &mut traj)?;
    let mut files = vec![("trajectory.csv".to_string(), traj)];
    if !r.entropy.is_empty() {
        let rows = r
            .entropy
            .iter()
            .map(|e| vec![e.t.to_string(), e.entropy.to_string(), e.stderr.to_string()]);
        files.push(("entropy.csv".into(), csv_bytes(&["t", "entropy", "stderr"], rows)?));
    }
    Ok(Report {
        files,
        summary: json!({
            "steps": r.steps,
            "collisions": r.collisions,
            "energy_drift": r.energy_drift,
            "particles": spec.particles,
            "kernel": spec.kernel,
            "ic": spec.ic,
            "dt_policy": spec.dt,
        }),
    })
}

pub fn tail_report(cfg: &Config, path: &Path) -> Result<Report, CliError> {
    let traj = trajectory(path)?;
    let n_max = u64_or(cfg, "ml", "n_max", 200)? as u32;
    let mut report = serde_json::Map::new();
    if cfg.get("ml", "s").is_some() {
        let s = settings::required_f64(cfg, "ml", "s")?;
        let alpha0 = settings::required_f64(cfg, "ml", "alpha0")?;
        let halvings = u64_or(cfg, "ml", "halvings", 20)? as u32;
        let search = propagation_search(&traj, s, alpha0, n_max, halvings)?;
        let verdict = if search.alpha.is_some() { "PASS" } else { "FAIL" };
        report.insert("propagation".into(), json!({ "verdict": verdict, "search": search }));
    }
    if cfg.get("tail", "gamma").is_some() {
        let gamma = settings::required_f64(cfg, "tail", "gamma")?;
        let t = f64_or(cfg, "tail", "t", traj.horizon().min(1.0))?;
        let lo = u64_or(cfg, "tail", "q_lo", 2)? as u32;
        let hi = u64_or(cfg, "tail", "q_hi", 10)? as u32;
        let fit = estimate_tail_order(&traj, t, (lo, hi))?;
        let ratio = fit.s_hat / gamma;
        let verdict = if (0.7..=1.3).contains(&ratio) { "PASS" } else { "FAIL" };
        report.insert(
            "generation".into(),
            json!({ "verdict": verdict, "gamma": gamma, "t": t, "ratio": ratio, "fit": fit }),
        );
    }
    if report.is_empty() {
        return Err(CliError::Usage("tail-report needs ml.s/ml.alpha0 or tail.gamma".into()));
    }
    let summary = Value::Object(report);
    Ok(Report {
        files: vec![("tail_report.json".into(), json_bytes(&summary))],
        summary,
    })
}

pub fn bootstrap(cfg: &Config, path: &Path) -> Result<Report, CliError> {
    let traj = trajectory(path)?;
    let spec = settings::ml_spec(cfg, "alpha")?;
    let n_max = u64_or(cfg, "ml", "n_max", 200)? as u32;
    let m0 = match cfg.get_f64("ml", "m0")? {
        Some(m) => m,
        None => initial_ml_mass(&traj, &spec)?,
    };
    let r = bootstrap_scan(&traj, &spec, m0, n_max)?;
    let rows = r
        .n_grid
        .iter()
        .zip(&r.t_n)
        .map(|(n, t)| vec![n.to_string(), t.to_string()]);
    let csv = csv_bytes(&["n", "t_n"], rows)?;
    let summary = json!({
        "verdict": if r.verdict == BootstrapVerdict::Bounded { "bounded" } else { "collapse" },
        "report": r,
    });
    Ok(Report {
        files: vec![
            ("bootstrap.csv".into(), csv),
            ("bootstrap.json".into(), json_bytes(&summary)),
        ],
        summary,
    })
}
