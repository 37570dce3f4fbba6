use super::checks::{evaluate, Check};
use super::config::{ResolvedRun, RunConfig};
use super::records::{fmt_num, rows_from_csv, rows_to_csv, sort_rows, write_atomic, Row};
use crate::adjoint::{
    adjointness_defect, dissipation_measure, graph_defect, iul_functional, linearized_operator, mather_checks,
    phase_measure, radial_beta, radial_lambda, stationary_adjoint, support_diagnostics, weak_kam_identity_check,
    PhaseMeasure,
};
use crate::cell::{dp_u, solve_cell, CellSolution, CellSpec};
use crate::error::{Error, Result};
use crate::estimates::{averaging_mode_defect, energy_report, mode_vectors};
use crate::sde::{default_dt, drift_report, occupation_tv, rotation_reference, simulate_with, SimConfig};
use crate::testfn::catalog;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_SOLVER_FAILED: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "WEAKKAM_WORKERS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: usize,
    pub solver_failures: usize,
    pub checks: usize,
    pub failed_checks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub version: String,
    pub config: RunConfig,
    pub workers: usize,
    /// wall-clock seconds per stage, summed over jobs
    pub timings: BTreeMap<String, f64>,
    /// output files relative to the manifest directory
    pub files: BTreeMap<String, String>,
    pub failures: Vec<String>,
    pub checks: Vec<Check>,
    pub summary: Summary,
    pub exit_code: i32,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub rows: Vec<Row>,
    pub dir: PathBuf,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.manifest.exit_code
    }
}

fn worker_count(run: &ResolvedRun) -> usize {
    run.workers
        .or_else(|| {
            std::env::var(WORKERS_ENV)
                .ok()
                .and_then(|v| v.parse().ok())
                .filter(|&w| w > 0)
        })
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

struct Timer(BTreeMap<String, f64>);

impl Timer {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        *self.0.entry(stage.to_string()).or_insert(0.0) += t.elapsed().as_secs_f64();
        out
    }
}

struct ChainOutput {
    rows: Vec<Row>,
    timings: BTreeMap<String, f64>,
    files: Vec<(String, String)>,
}

fn job_seed(seed: u64, job: u64) -> u64 {
    seed.wrapping_add(job.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn sde_applies(run: &ResolvedRun, eps: f64, p: [f64; 2]) -> bool {
    let Some(s) = &run.sde else { return false };
    let eps_match = s.epsilon.iter().any(|e| (e - eps).abs() <= 1e-12 * eps);
    let p_match = match &s.momenta {
        None => true,
        Some(list) => list.iter().any(|q| q.iter().zip(p).all(|(a, b)| *a == b)),
    };
    eps_match && p_match
}

/// Everything after a successful solve; errors mark the row failed.
fn analyse(run: &ResolvedRun, sol: &CellSolution, job: u64, row: &mut Row, timer: &mut Timer) -> Result<PhaseMeasure> {
    let g = &sol.spec.grid;
    let d = g.dim();
    let w = g.cell_volume();
    let eps = sol.spec.epsilon;

    let (op, density) = timer.time("adjoint", || -> Result<_> {
        let op = linearized_operator(sol);
        let density = stationary_adjoint(&op)?;
        Ok((op, density))
    })?;
    let th = &density.theta.values;
    row.set("theta_mass", th.iter().sum::<f64>() * w);
    row.set("theta_dev", th.iter().fold(0.0f64, |m, t| m.max((t - 1.0).abs())));
    row.set("spectral_gap", density.spectral_gap);
    row.set("clipped", density.clipped);

    let mu = timer.time("measures", || -> Result<PhaseMeasure> {
        let mut rng = ChaCha8Rng::seed_from_u64(job_seed(run.seed, job));
        let phis: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        row.set("adjointness", adjointness_defect(&op, &density, &phis));
        let mu = phase_measure(sol, &density);
        let m = dissipation_measure(sol, &density)?;
        row.set("trace_mass", m.trace_mass);
        row.set("min_eig", m.min_eigenvalue);
        let mc = mather_checks(sol, &op, &density);
        row.set("res_a", mc.res_a);
        row.set("res_a_identity", mc.res_a_identity);
        row.set("res_b", mc.res_b);
        row.set("res_c_po", mc.res_c_po);
        row.set("res_c_raw", mc.res_c_raw);
        let ids = weak_kam_identity_check(sol, &op, &density, &m, &catalog(d, run.test_radius));
        let worst = |f: &dyn Fn(&crate::adjoint::IdentityResidual) -> f64| {
            ids.iter().map(f).fold(0.0f64, |a, b| a.max(b.abs()))
        };
        row.set("identity_discrete", worst(&|r| r.discrete));
        row.set("identity_imp", worst(&|r| r.imp));
        row.set("identity_veryimp", worst(&|r| r.veryimp));
        for (key, lambda) in [("iul0", 0.0), ("iul1", 1.0), ("iul5", 5.0)] {
            row.set(key, iul_functional(sol, &m, lambda).value);
        }
        if let Some(profile) = sol.spec.model.radial_profile() {
            let bound = sol.lipschitz;
            let (beta, r) = radial_beta(profile, bound);
            let lambda = radial_lambda(profile, beta, r, bound);
            row.set("radial_lambda", lambda);
            row.set("iul_radial", iul_functional(sol, &m, lambda).value);
            row.set("radial_beta_tm", beta * m.trace_mass);
        }
        match support_diagnostics(sol, &m) {
            Ok(s) => row.set("support_outside", s.outside_fraction),
            Err(_) => row.set("support_outside", f64::NAN),
        }
        if d == 2 {
            let comb: f64 = (0..g.len())
                .map(|i| m.entry(i, 0, 0) - 2.0 * m.entry(i, 0, 1) + m.entry(i, 1, 1))
                .sum::<f64>()
                * w;
            row.set("conserved_comb", comb.abs());
        }
        if run.traits.nonuniqueness {
            let psi = sol.spec.model.potential();
            let pts: Vec<[f64; 2]> = (0..g.len()).map(|i| g.coord(i)).collect();
            let p = sol.spec.p;
            let res_zero = pts
                .iter()
                .map(|&x| sol.spec.model.value(x, p).abs())
                .fold(0.0, f64::max);
            let res_psi = pts
                .iter()
                .map(|&x| {
                    let q = [p[0] + psi.gradient(x)[0], 0.0];
                    sol.spec.model.value(x, q).abs()
                })
                .fold(0.0, f64::max);
            let psi_vals: Vec<f64> = pts.iter().map(|&x| psi.value(x)).collect();
            let mean = psi_vals.iter().sum::<f64>() / psi_vals.len() as f64;
            let u = &sol.u.values;
            row.set("nonuniq_res_zero", res_zero);
            row.set("nonuniq_res_psi", res_psi);
            row.set("nonuniq_dist_zero", u.iter().fold(0.0, |m, v| m.max(v.abs())));
            row.set(
                "nonuniq_dist_psi",
                u.iter()
                    .zip(&psi_vals)
                    .fold(0.0, |m, (v, s)| m.max((v - (s - mean)).abs())),
            );
        }
        Ok(mu)
    })?;

    let dpu = timer.time("derivative", || dp_u(sol, None, &run.solver))?;
    for a in 0..d {
        row.set(&format!("dp_hbar{a}"), dpu.dp_hbar[a]);
    }
    row.set("dpu_identity", dpu.identity_residual);

    timer.time("estimates", || -> Result<()> {
        let e = energy_report(sol, &density, Some(&dpu))?;
        row.set("e2", e.e2);
        row.set("e2_raw", e.e2_raw);
        row.set("e3_ratio", e.e3_ratio());
        row.set("e3_rhs", e.e3_rhs);
        row.set("e2p", e.e2p.unwrap_or(f64::NAN));
        row.set("e2p_bound", e.e2p_bound.unwrap_or(f64::NAN));
        let mut all = true;
        let mut slack = f64::INFINITY;
        for k in mode_vectors(d) {
            let md = averaging_mode_defect(sol, &dpu, &density, &k)?;
            all &= md.holds();
            slack = slack.min(md.slack());
        }
        row.set("mode_all_hold", if all { 1.0 } else { 0.0 });
        row.set("mode_min_slack", slack);
        Ok(())
    })?;

    if sde_applies(run, eps, sol.spec.p) {
        let s = run.sde.as_ref().expect("checked");
        timer.time("sde", || -> Result<()> {
            let cfg = SimConfig {
                dt: s.dt.unwrap_or_else(|| default_dt(sol)),
                steps: s.steps,
                burn_in: s.burn_in.unwrap_or(s.steps / 10),
                replicates: s.replicates,
                batches: s.batches,
                seed: job_seed(run.seed ^ 0x5DE5_EED5, job),
                start: [0.0; 2],
            };
            let rep = simulate_with(sol, &cfg, Some(&dpu), &[])?;
            let (reference, _) = rotation_reference(sol, &density);
            row.set("sde_tv", occupation_tv(&rep, &density));
            for a in 0..d {
                row.set(&format!("sde_rot{a}"), rep.rotation.mean[a]);
                row.set(&format!("sde_rot{a}_se"), rep.rotation.stderr[a]);
                row.set(&format!("sde_rot_ref{a}"), reference[a]);
            }
            let dr = drift_report(sol, &dpu, &density, rep.drift_x.as_ref().expect("drift recorded"));
            for a in 0..d {
                row.set(&format!("sde_drift{a}"), dr.observed.mean[a]);
                row.set(&format!("sde_drift{a}_se"), dr.observed.stderr[a]);
            }
            row.set("sde_var", dr.variance);
            row.set("sde_var_pred", dr.variance_predicted);
            row.set("sde_var_bound", dr.variance_bound);
            row.set("sde_max_du", rep.max_du);
            row.set("sde_dt_warning", if rep.dt_warning { 1.0 } else { 0.0 });
            if s.dynkin_steps > 0 {
                let dcfg = SimConfig {
                    steps: s.dynkin_steps,
                    burn_in: s.dynkin_steps / 10,
                    ..cfg
                };
                let phis = catalog(d, run.test_radius);
                let dynk = simulate_with(sol, &dcfg, None, &phis)?.dynkin;
                row.set("sde_dynkin_fail", dynk.iter().filter(|r| !r.passes()).count() as f64);
                row.set("sde_dynkin_count", dynk.len() as f64);
            }
            Ok(())
        })?;
    }
    Ok(mu)
}

fn dump_fields(dir: &Path, stem: &str, sol: &CellSolution, theta: Option<&[f64]>) -> Result<Vec<(String, String)>> {
    let fields = dir.join("fields");
    std::fs::create_dir_all(&fields)?;
    let mut bytes = Vec::new();
    let mut arrays = vec![("u", sol.u.values.as_slice())];
    if let Some(t) = theta {
        arrays.push(("theta", t));
    }
    arrays.push(("du", sol.du.values.as_slice()));
    arrays.push(("d2u", sol.d2u.values.as_slice()));
    let mut index = Vec::new();
    for (name, a) in &arrays {
        index.push(serde_json::json!({"name": name, "offset": bytes.len(), "len": a.len()}));
        for v in a.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = serde_json::json!({
        "dims": sol.spec.grid.resolution(),
        "order": "node-major, axis 0 fastest; vector and matrix components interleaved per node",
        "dtype": "f64 little-endian",
        "epsilon": sol.spec.epsilon,
        "p": &sol.spec.p[..sol.spec.grid.dim()],
        "hbar": sol.hbar,
        "arrays": index,
    });
    let bin = format!("fields/{stem}.bin");
    let json = format!("fields/{stem}.json");
    write_atomic(&dir.join(&bin), &bytes)?;
    write_atomic(&dir.join(&json), serde_json::to_string_pretty(&header)?.as_bytes())?;
    Ok(vec![(format!("{stem}.bin"), bin), (format!("{stem}.json"), json)])
}

fn run_chain(run: &ResolvedRun, dir: &Path, ci: usize, p: [f64; 2]) -> ChainOutput {
    let d = run.grid.dim();
    let mut timer = Timer(BTreeMap::new());
    let mut rows = Vec::with_capacity(run.epsilon.len());
    let mut mus: Vec<Option<PhaseMeasure>> = Vec::new();
    let mut warm: Option<CellSolution> = None;
    let mut files = Vec::new();
    for (ei, &eps) in run.epsilon.iter().enumerate() {
        let job = (ci * 1000 + ei) as u64;
        let mut row = Row::new(eps, p);
        let spec = match CellSpec::new(run.model.clone(), &p[..d], eps, run.grid.clone()) {
            Ok(s) => s,
            Err(e) => {
                row.fail("spec", &e.to_string());
                rows.push(row);
                mus.push(None);
                continue;
            }
        };
        let init = warm.as_ref().map(|s| (s.u.values.as_slice(), s.hbar));
        let solved = timer.time("solve", || solve_cell(&spec, init, &run.solver));
        let sol = match solved {
            Ok(s) => s,
            Err(e) => {
                row.fail("solve", &e.to_string());
                rows.push(row);
                mus.push(None);
                continue;
            }
        };
        row.route = format!("{:?}", sol.route).to_lowercase();
        row.set("n", run.grid.len() as f64);
        row.set("hbar", sol.hbar);
        row.set("residual", sol.residual_inf);
        row.set("tolerance", sol.tolerance);
        row.set("iterations", sol.iterations as f64);
        row.set("limited_nodes", sol.limited_nodes as f64);
        row.set("lipschitz", sol.lipschitz);
        row.set("u_sum", sol.u.values.iter().sum::<f64>() * run.grid.cell_volume());
        row.set("u_inf", sol.u.max_abs());
        let mu = match analyse(run, &sol, job, &mut row, &mut timer) {
            Ok(mu) => Some(mu),
            Err(e) => {
                let stage = match e {
                    Error::DtTooLarge { .. } => "sde",
                    _ => "analysis",
                };
                row.fail(stage, &e.to_string());
                None
            }
        };
        if run.dump_fields {
            let stem = format!("e{ei}_p{ci}");
            let theta = stationary_adjoint(&linearized_operator(&sol)).ok();
            match dump_fields(dir, &stem, &sol, theta.as_ref().map(|t| t.theta.values.as_slice())) {
                Ok(f) => files.extend(f),
                Err(e) => row.fail("dump", &e.to_string()),
            }
        }
        mus.push(mu);
        rows.push(row);
        warm = Some(sol);
    }
    // graph defect of every atom set against the finest successful solution
    if let Some(reference) = &warm {
        timer.time("graph", || {
            for (row, mu) in rows.iter_mut().zip(&mus) {
                if let (true, Some(mu)) = (row.ok(), mu) {
                    let gd = graph_defect(mu, &run.model, reference);
                    row.set("graph_sup", gd.sup);
                    row.set("graph_l1", gd.l1);
                }
            }
        });
    }
    ChainOutput {
        rows,
        timings: timer.0,
        files,
    }
}

/// Executes every (eps, P) job of a resolved run and writes its artifacts.
pub fn run_resolved(run: &ResolvedRun) -> Result<RunOutcome> {
    let dir = run.output.clone();
    std::fs::create_dir_all(&dir)?;
    let workers = worker_count(run);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let chains: Vec<ChainOutput> = pool.install(|| {
        run.momenta
            .par_iter()
            .enumerate()
            .map(|(ci, &p)| run_chain(run, &dir, ci, p))
            .collect()
    });
    let mut rows = Vec::new();
    let mut timings: BTreeMap<String, f64> = BTreeMap::new();
    let mut files = BTreeMap::new();
    for c in chains {
        rows.extend(c.rows);
        for (k, v) in c.timings {
            *timings.entry(k).or_insert(0.0) += v;
        }
        files.extend(c.files);
    }
    timings.insert("total".into(), start.elapsed().as_secs_f64());
    sort_rows(&mut rows);
    let checks = evaluate(&rows, &run.traits, run.grid.dim());

    write_atomic(&dir.join("results.csv"), rows_to_csv(&rows).as_bytes())?;
    write_atomic(&dir.join("checks.csv"), checks_to_csv(&checks).as_bytes())?;
    write_atomic(&dir.join("config.toml"), run.echo.to_toml()?.as_bytes())?;
    files.insert("results".into(), "results.csv".into());
    files.insert("checks".into(), "checks.csv".into());
    files.insert("config".into(), "config.toml".into());

    let failures: Vec<String> = rows
        .iter()
        .filter(|r| !r.ok())
        .map(|r| format!("eps={} P={:?}: {}", r.eps, &r.p[..run.grid.dim()], r.status))
        .collect();
    let failed_checks = checks.iter().filter(|c| !c.passed).count();
    let exit_code = exit_code_for(failures.len(), failed_checks);
    let manifest = RunManifest {
        scenario: run.scenario.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: run.echo.clone(),
        workers,
        timings,
        files,
        summary: Summary {
            rows: rows.len(),
            solver_failures: failures.len(),
            checks: checks.len(),
            failed_checks,
        },
        failures,
        checks,
        exit_code,
    };
    write_atomic(
        &dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(RunOutcome { manifest, rows, dir })
}

fn exit_code_for(solver_failures: usize, failed_checks: usize) -> i32 {
    if solver_failures > 0 {
        EXIT_SOLVER_FAILED
    } else if failed_checks > 0 {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    }
}

pub fn run_scenario(cfg: &RunConfig) -> Result<RunOutcome> {
    run_resolved(&cfg.resolve()?)
}

pub fn checks_to_csv(checks: &[Check]) -> String {
    let mut out = String::from("name,scope,value,threshold,passed\n");
    for c in checks {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.name,
            c.scope,
            fmt_num(c.value),
            fmt_num(c.threshold),
            c.passed
        ));
    }
    out
}

#[derive(Clone, Debug)]
pub struct ManifestCheck {
    pub consistent: bool,
    pub mismatches: Vec<String>,
    pub failed_checks: usize,
    pub exit_code: i32,
}

/// Re-derives every check from the manifest's results CSV and compares the
/// verdicts with the ones recorded in the manifest.
pub fn check_manifest(path: &Path) -> Result<ManifestCheck> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut mismatches = Vec::new();
    for (key, rel) in &manifest.files {
        if !dir.join(rel).exists() {
            mismatches.push(format!("missing file {key}: {rel}"));
        }
    }
    let rows = rows_from_csv(&std::fs::read_to_string(dir.join("results.csv"))?)?;
    let run = manifest.config.resolve()?;
    let checks = evaluate(&rows, &run.traits, run.grid.dim());
    if checks.len() != manifest.checks.len() {
        mismatches.push(format!(
            "manifest lists {} checks, recomputed {}",
            manifest.checks.len(),
            checks.len()
        ));
    }
    for (a, b) in checks.iter().zip(&manifest.checks) {
        if a.name != b.name || a.scope != b.scope || a.passed != b.passed {
            mismatches.push(format!(
                "{} [{}]: recomputed {} vs manifest {} [{}] {}",
                a.name, a.scope, a.passed, b.name, b.scope, b.passed
            ));
        }
    }
    let failures = rows.iter().filter(|r| !r.ok()).count();
    let failed_checks = checks.iter().filter(|c| !c.passed).count();
    let exit_code = exit_code_for(failures, failed_checks);
    if exit_code != manifest.exit_code {
        mismatches.push(format!("exit code {} vs manifest {}", exit_code, manifest.exit_code));
    }
    Ok(ManifestCheck {
        consistent: mismatches.is_empty(),
        mismatches,
        failed_checks,
        exit_code,
    })
}
