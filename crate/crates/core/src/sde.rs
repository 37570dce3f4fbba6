//! Euler-Maruyama simulation of dx = -H_p(x, P + Du(x)) dt + eps dw on the
//! torus, used as a Monte-Carlo cross-check of the stationary density,
//! the rotation number, the drift of X = x + D_P u(x) and Dynkin's formula.

use crate::adjoint::ProjectedDensity;
use crate::cell::{CellSolution, MomentumDerivative};
use crate::error::{Error, Result};
use crate::grid::{central_diff, TorusGrid};
use crate::testfn::TestFunction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub steps: u64,
    pub burn_in: u64,
    pub replicates: usize,
    /// batches per replicate for the batch-means standard errors
    pub batches: usize,
    pub seed: u64,
    pub start: [f64; 2],
}

impl SimConfig {
    /// dt = min(1e-3, 0.05 h / max|H_p|), 10% burn-in, 16 replicates.
    pub fn default_for(sol: &CellSolution, steps: u64, seed: u64) -> Self {
        Self {
            dt: default_dt(sol),
            steps,
            burn_in: steps / 10,
            replicates: 16,
            batches: 10,
            seed,
            start: [0.0; 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps <= self.burn_in {
            return Err(Error::InvalidArgument("steps must exceed burn_in".into()));
        }
        if self.replicates < 2 || self.batches < 1 {
            return Err(Error::InvalidArgument("need at least 2 replicates and 1 batch".into()));
        }
        if self.steps - self.burn_in < self.batches as u64 {
            return Err(Error::InvalidArgument("fewer sampled steps than batches".into()));
        }
        Ok(())
    }
}

fn max_drift(sol: &CellSolution) -> f64 {
    let g = &sol.spec.grid;
    (0..g.len())
        .map(|i| {
            let b = sol.spec.model.grad_p(g.coord(i), sol.momentum(i));
            b[0].hypot(b[1])
        })
        .fold(0.0, f64::max)
}

fn min_spacing(g: &TorusGrid) -> f64 {
    (0..g.dim()).map(|a| g.spacing(a)).fold(f64::INFINITY, f64::min)
}

pub fn default_dt(sol: &CellSolution) -> f64 {
    let b = max_drift(sol);
    let h = min_spacing(&sol.spec.grid);
    if b > 0.0 {
        (0.05 * h / b).min(1e-3)
    } else {
        1e-3
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Estimate {
    pub mean: [f64; 2],
    pub stderr: [f64; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct DynkinResidual {
    pub name: String,
    /// (E[phi(end) - phi(start)] - E int generator dt) / T
    pub residual: f64,
    pub stderr: f64,
}

impl DynkinResidual {
    pub fn passes(&self) -> bool {
        self.residual.abs() <= 3.0 * self.stderr + 1e-12
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftSample {
    /// batch means of (X(T) - X(0)) / T
    pub drift: Estimate,
    /// mean over batches of |X(T) - X(0) + D_P Hbar T|^2 / T
    pub variance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimReport {
    pub dt: f64,
    /// sampled time per replicate (after burn-in)
    pub horizon: f64,
    /// occupation frequencies on the nodes, total mass 1
    pub occupation: Vec<f64>,
    /// unwrapped displacement / T for each replicate
    pub displacement: Vec<[f64; 2]>,
    pub rotation: Estimate,
    /// max |P + Du(x(t))| and max |Du(x(t))| along all paths
    pub max_momentum: f64,
    pub max_du: f64,
    /// dt max|H_p| exceeded 0.1 h
    pub dt_warning: bool,
    pub drift_x: Option<DriftSample>,
    pub dynkin: Vec<DynkinResidual>,
}

/// Weights of periodic bilinear interpolation.
struct Stencil {
    idx: [usize; 4],
    w: [f64; 4],
    len: usize,
}

impl Stencil {
    fn at(g: &TorusGrid, x: [f64; 2]) -> Self {
        let n0 = g.resolution()[0];
        let t0 = x[0].rem_euclid(1.0) * n0 as f64;
        let i0 = (t0.floor() as usize).min(n0 - 1);
        let f0 = t0 - i0 as f64;
        let j0 = (i0 + 1) % n0;
        if g.dim() == 1 {
            return Self {
                idx: [i0, j0, 0, 0],
                w: [1.0 - f0, f0, 0.0, 0.0],
                len: 2,
            };
        }
        let n1 = g.resolution()[1];
        let t1 = x[1].rem_euclid(1.0) * n1 as f64;
        let i1 = (t1.floor() as usize).min(n1 - 1);
        let f1 = t1 - i1 as f64;
        let j1 = (i1 + 1) % n1;
        Self {
            idx: [i0 + n0 * i1, j0 + n0 * i1, i0 + n0 * j1, j0 + n0 * j1],
            w: [(1.0 - f0) * (1.0 - f1), f0 * (1.0 - f1), (1.0 - f0) * f1, f0 * f1],
            len: 4,
        }
    }

    #[inline]
    fn eval(&self, v: &[f64], stride: usize, comp: usize) -> f64 {
        let mut s = 0.0;
        for k in 0..self.len {
            s += self.w[k] * v[self.idx[k] * stride + comp];
        }
        s
    }
}

fn nearest_node(g: &TorusGrid, x: [f64; 2]) -> usize {
    let mut idx = [0usize; 2];
    for (a, ia) in idx.iter_mut().enumerate().take(g.dim()) {
        let n = g.resolution()[a];
        *ia = ((x[a].rem_euclid(1.0) * n as f64).round() as usize) % n;
    }
    g.node(idx)
}

struct Ctx<'a> {
    sol: &'a CellSolution,
    cfg: &'a SimConfig,
    dpu: Option<&'a MomentumDerivative>,
    phis: &'a [TestFunction],
}

struct Batch {
    time: f64,
    dx: [f64; 2],
    dxx: [f64; 2],
    /// phi increment minus time-integrated generator, per test function
    dynkin: Vec<f64>,
}

impl Batch {
    fn new(nphi: usize) -> Self {
        Self {
            time: 0.0,
            dx: [0.0; 2],
            dxx: [0.0; 2],
            dynkin: vec![0.0; nphi],
        }
    }
}

fn close(b: &mut Batch, pg: &[(f64, f64)], x: [f64; 2], x0: [f64; 2], dpu: [f64; 2], dpu0: [f64; 2], d: usize) {
    for (o, (v, _)) in b.dynkin.iter_mut().zip(pg) {
        *o += *v;
    }
    for a in 0..d {
        b.dx[a] = x[a] - x0[a];
        b.dxx[a] = b.dx[a] + dpu[a] - dpu0[a];
    }
}

struct Replicate {
    counts: Vec<u64>,
    disp: [f64; 2],
    batches: Vec<Batch>,
    max_momentum: f64,
    max_du: f64,
}

impl Ctx<'_> {
    fn momentum(&self, st: &Stencil) -> ([f64; 2], [f64; 2]) {
        let d = self.sol.spec.grid.dim();
        let mut du = [0.0; 2];
        for (a, v) in du.iter_mut().enumerate().take(d) {
            *v = st.eval(&self.sol.du.values, d, a);
        }
        let p = [self.sol.spec.p[0] + du[0], self.sol.spec.p[1] + du[1]];
        (p, du)
    }

    fn dpu_at(&self, st: &Stencil) -> [f64; 2] {
        let mut v = [0.0; 2];
        if let Some(m) = self.dpu {
            let d = self.sol.spec.grid.dim();
            for (a, va) in v.iter_mut().enumerate().take(d) {
                *va = st.eval(&m.dpu.values, d, a);
            }
        }
        v
    }

    /// phi(x, p) and the generator of (x, p) applied to phi.
    fn phi_and_generator(&self, st: &Stencil, xw: [f64; 2], p: [f64; 2], out: &mut [(f64, f64)]) {
        let g = &self.sol.spec.grid;
        let d = g.dim();
        let sl = g.sym_len();
        let mut u2 = [[0.0; 2]; 2];
        for a in 0..d {
            for b in a..d {
                let v = st.eval(&self.sol.d2u.values, sl, g.sym_index(a, b));
                u2[a][b] = v;
                u2[b][a] = v;
            }
        }
        let e = self.sol.spec.model.eval(xw, p);
        let eps2 = self.sol.spec.epsilon * self.sol.spec.epsilon;
        for (f, o) in self.phis.iter().zip(out.iter_mut()) {
            let j = f.jet(xw, p);
            let mut gen = 0.0;
            for a in 0..d {
                gen += j.dp[a] * e.hx[a] - j.dx[a] * e.hp[a];
                gen += 0.5 * eps2 * j.dxx[a][a];
                for b in 0..d {
                    gen += eps2 * u2[a][b] * j.dxp[a][b];
                    for c in 0..d {
                        gen += 0.5 * eps2 * u2[a][b] * u2[a][c] * j.dpp[b][c];
                    }
                }
            }
            *o = (j.v, gen);
        }
    }

    fn replicate(&self, r: usize) -> Result<Replicate> {
        let sol = self.sol;
        let g = &sol.spec.grid;
        let d = g.dim();
        let cfg = self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        let sig = sol.spec.epsilon * cfg.dt.sqrt();
        let nphi = self.phis.len();
        let sampled = cfg.steps - cfg.burn_in;
        let blen = sampled / cfg.batches as u64;

        let mut x = cfg.start;
        let mut counts = vec![0u64; g.len()];
        let mut batches = Vec::with_capacity(cfg.batches);
        let mut cur = Batch::new(nphi);
        let mut pg = vec![(0.0, 0.0); nphi];
        let mut x_batch = x;
        let mut big_x0 = [0.0; 2];
        let (mut max_p, mut max_du) = (0.0f64, 0.0f64);

        for step in 0..cfg.steps {
            let xw = [x[0].rem_euclid(1.0), x[1].rem_euclid(1.0)];
            let st = Stencil::at(g, xw);
            let (p, du) = self.momentum(&st);
            if step >= cfg.burn_in {
                let k = step - cfg.burn_in;
                let bi = k / blen;
                let fresh = nphi > 0 && bi < cfg.batches as u64;
                if fresh {
                    self.phi_and_generator(&st, xw, p, &mut pg);
                }
                if k.is_multiple_of(blen) && bi <= cfg.batches as u64 {
                    let dpu = self.dpu_at(&st);
                    if k > 0 {
                        if !fresh && nphi > 0 {
                            self.phi_and_generator(&st, xw, p, &mut pg);
                        }
                        close(&mut cur, &pg, x, x_batch, dpu, big_x0, d);
                        batches.push(std::mem::replace(&mut cur, Batch::new(nphi)));
                    }
                    if bi < cfg.batches as u64 {
                        x_batch = x;
                        big_x0 = dpu;
                        for (o, (v, _)) in cur.dynkin.iter_mut().zip(&pg) {
                            *o -= *v;
                        }
                    }
                }
                if bi < cfg.batches as u64 {
                    counts[nearest_node(g, xw)] += 1;
                    cur.time += cfg.dt;
                    for (o, (_, gen)) in cur.dynkin.iter_mut().zip(&pg) {
                        *o -= gen * cfg.dt;
                    }
                    max_p = max_p.max(p[0].hypot(p[1]));
                    max_du = max_du.max(du[0].hypot(du[1]));
                }
            }
            let b = sol.spec.model.grad_p(xw, p);
            let mut jump = 0.0f64;
            for a in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                let dxa = -b[a] * cfg.dt + sig * z;
                jump = jump.max(dxa.abs());
                x[a] += dxa;
            }
            if jump > 0.5 || !jump.is_finite() {
                return Err(Error::DtTooLarge {
                    dt: cfg.dt,
                    limit: cfg.dt * 0.5 / jump,
                });
            }
        }
        // close the last batch at the final position
        if cfg.burn_in + blen * cfg.batches as u64 == cfg.steps {
            let xw = [x[0].rem_euclid(1.0), x[1].rem_euclid(1.0)];
            let st = Stencil::at(g, xw);
            let dpu = self.dpu_at(&st);
            if nphi > 0 {
                let (p, _) = self.momentum(&st);
                self.phi_and_generator(&st, xw, p, &mut pg);
            }
            close(&mut cur, &pg, x, x_batch, dpu, big_x0, d);
            batches.push(cur);
        }
        let total: f64 = batches.iter().map(|b| b.time).sum();
        let mut disp = [0.0; 2];
        for b in &batches {
            for a in 0..d {
                disp[a] += b.dx[a];
            }
        }
        for v in disp.iter_mut().take(d) {
            *v /= total;
        }
        Ok(Replicate {
            counts,
            disp,
            batches,
            max_momentum: max_p,
            max_du,
        })
    }
}

/// Mean and standard error of the mean.
fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::INFINITY);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// One pass over all replicates; the drift of X is recorded when `dpu` is
/// given and Dynkin residuals for every entry of `phis`.
pub fn simulate_with(
    sol: &CellSolution,
    cfg: &SimConfig,
    dpu: Option<&MomentumDerivative>,
    phis: &[TestFunction],
) -> Result<SimReport> {
    cfg.validate()?;
    let g = &sol.spec.grid;
    let d = g.dim();
    if let Some(m) = dpu {
        if m.dpu.grid != *g {
            return Err(Error::InvalidArgument("D_P u lives on another grid".into()));
        }
    }
    let ctx = Ctx { sol, cfg, dpu, phis };
    let reps: Vec<Replicate> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| ctx.replicate(r))
        .collect::<Result<Vec<_>>>()?;

    let mut counts = vec![0u64; g.len()];
    for r in &reps {
        for (c, v) in counts.iter_mut().zip(&r.counts) {
            *c += v;
        }
    }
    let total: u64 = counts.iter().sum();
    let occupation = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let batches: Vec<&Batch> = reps.iter().flat_map(|r| r.batches.iter()).collect();

    let component = |f: &dyn Fn(&Batch) -> f64| mean_stderr(&batches.iter().map(|b| f(b)).collect::<Vec<_>>());
    let mut rotation = Estimate {
        mean: [0.0; 2],
        stderr: [0.0; 2],
    };
    for a in 0..d {
        let (m, s) = component(&|b: &Batch| b.dx[a] / b.time);
        rotation.mean[a] = m;
        rotation.stderr[a] = s;
    }
    let drift_x = dpu.map(|m| {
        let mut drift = Estimate {
            mean: [0.0; 2],
            stderr: [0.0; 2],
        };
        for a in 0..d {
            let (mm, s) = component(&|b: &Batch| b.dxx[a] / b.time);
            drift.mean[a] = mm;
            drift.stderr[a] = s;
        }
        let variance = component(&|b: &Batch| {
            (0..d)
                .map(|a| {
                    let v = b.dxx[a] + m.dp_hbar[a] * b.time;
                    v * v
                })
                .sum::<f64>()
                / b.time
        })
        .0;
        DriftSample { drift, variance }
    });
    let dynkin = phis
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let (m, s) = component(&|b: &Batch| b.dynkin[k] / b.time);
            DynkinResidual {
                name: f.name(),
                residual: m,
                stderr: s,
            }
        })
        .collect();
    let horizon = batches.first().map(|b| b.time).unwrap_or(0.0) * cfg.batches as f64;
    Ok(SimReport {
        dt: cfg.dt,
        horizon,
        occupation,
        displacement: reps.iter().map(|r| r.disp).collect(),
        rotation,
        max_momentum: reps.iter().map(|r| r.max_momentum).fold(0.0, f64::max),
        max_du: reps.iter().map(|r| r.max_du).fold(0.0, f64::max),
        dt_warning: cfg.dt * max_drift(sol) > 0.1 * min_spacing(g),
        drift_x,
        dynkin,
    })
}

pub fn simulate(sol: &CellSolution, cfg: &SimConfig) -> Result<SimReport> {
    simulate_with(sol, cfg, None, &[])
}

pub fn dynkin_residuals(sol: &CellSolution, cfg: &SimConfig, phis: &[TestFunction]) -> Result<Vec<DynkinResidual>> {
    Ok(simulate_with(sol, cfg, None, phis)?.dynkin)
}

/// Mean unwrapped displacement per unit time with batch-means errors.
pub fn rotation_number_mc(sol: &CellSolution, cfg: &SimConfig) -> Result<Estimate> {
    Ok(simulate(sol, cfg)?.rotation)
}

/// -int H_p dtheta (the operational rotation number) and +int H_p dtheta.
pub fn rotation_reference(sol: &CellSolution, density: &ProjectedDensity) -> ([f64; 2], [f64; 2]) {
    let g = &sol.spec.grid;
    let w = g.cell_volume();
    let mut s = [0.0; 2];
    for i in 0..g.len() {
        let b = sol.spec.model.grad_p(g.coord(i), sol.momentum(i));
        let t = density.theta.values[i] * w;
        s[0] += b[0] * t;
        s[1] += b[1] * t;
    }
    ([-s[0], -s[1]], s)
}

/// Total variation between the occupation frequencies and theta h^n.
pub fn occupation_tv(report: &SimReport, density: &ProjectedDensity) -> f64 {
    let w = density.theta.grid.cell_volume();
    0.5 * report
        .occupation
        .iter()
        .zip(&density.theta.values)
        .map(|(o, t)| (o - t * w).abs())
        .sum::<f64>()
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftReport {
    pub observed: Estimate,
    /// -D_P Hbar
    pub expected: [f64; 2],
    pub within_3_stderr: bool,
    /// observed E|X(T) - X(0) + D_P Hbar T|^2 / T
    pub variance: f64,
    /// eps^2 int |I + D_x D_P u|^2 dtheta, the Ito prediction
    pub variance_predicted: f64,
    /// 2 n eps^2 + 2 int |D_P u|^2 dtheta + 2 int |H_p - D_P Hbar|^2 dtheta
    pub variance_bound: f64,
    pub slack: f64,
}

/// Grid integrals entering the variance diagnostic of X.
pub struct DriftIntegrals {
    pub dpu_sq: f64,
    pub hp_dev_sq: f64,
    pub ito: f64,
}

pub fn drift_integrals(sol: &CellSolution, dpu: &MomentumDerivative, density: &ProjectedDensity) -> DriftIntegrals {
    let g = &sol.spec.grid;
    let d = g.dim();
    let w = g.cell_volume();
    let grads: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|a| {
            let comp = dpu.dpu.component(a);
            (0..d).map(|b| central_diff(g, &comp, b)).collect()
        })
        .collect();
    let eps2 = sol.spec.epsilon * sol.spec.epsilon;
    let (mut dpu_sq, mut hp_dev_sq, mut ito) = (0.0, 0.0, 0.0);
    for i in 0..g.len() {
        let t = density.theta.values[i] * w;
        let b = sol.spec.model.grad_p(g.coord(i), sol.momentum(i));
        for a in 0..d {
            let v = dpu.dpu.values[i * d + a];
            dpu_sq += v * v * t;
            let dev = b[a] - dpu.dp_hbar[a];
            hp_dev_sq += dev * dev * t;
            for c in 0..d {
                let e = if a == c { 1.0 } else { 0.0 };
                let j = e + grads[a][c][i];
                ito += eps2 * j * j * t;
            }
        }
    }
    DriftIntegrals { dpu_sq, hp_dev_sq, ito }
}

/// Compares E[(X(T) - X(0)) / T] with -D_P Hbar for X = x + D_P u(x).
pub fn drift_check_x(
    sol: &CellSolution,
    dpu: &MomentumDerivative,
    density: &ProjectedDensity,
    cfg: &SimConfig,
) -> Result<DriftReport> {
    let rep = simulate_with(sol, cfg, Some(dpu), &[])?;
    Ok(drift_report(
        sol,
        dpu,
        density,
        rep.drift_x.as_ref().expect("drift recorded"),
    ))
}

pub fn drift_report(
    sol: &CellSolution,
    dpu: &MomentumDerivative,
    density: &ProjectedDensity,
    sample: &DriftSample,
) -> DriftReport {
    let d = sol.spec.grid.dim();
    let ints = drift_integrals(sol, dpu, density);
    let eps2 = sol.spec.epsilon * sol.spec.epsilon;
    let expected = [-dpu.dp_hbar[0], -dpu.dp_hbar[1]];
    let within = (0..d).all(|a| (sample.drift.mean[a] - expected[a]).abs() <= 3.0 * sample.drift.stderr[a]);
    let bound = 2.0 * d as f64 * eps2 + 2.0 * ints.dpu_sq + 2.0 * ints.hp_dev_sq;
    DriftReport {
        observed: sample.drift.clone(),
        expected,
        within_3_stderr: within,
        variance: sample.variance,
        variance_predicted: ints.ito,
        variance_bound: bound,
        slack: bound - sample.variance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{solve_cell, CellSpec, SolverOptions};
    use crate::hamiltonian::make_mechanical;
    use crate::potential::Potential;

    fn free(p: f64) -> CellSolution {
        let spec = CellSpec::new(
            make_mechanical(Potential::zero(1)).unwrap(),
            &[p],
            0.3,
            TorusGrid::new(&[64]).unwrap(),
        )
        .unwrap();
        solve_cell(&spec, None, &SolverOptions::default()).unwrap()
    }

    #[test]
    fn seeded_runs_are_identical() {
        let sol = free(1.0);
        let cfg = SimConfig::default_for(&sol, 20_000, 7);
        let a = simulate(&sol, &cfg).unwrap();
        let b = simulate(&sol, &cfg).unwrap();
        assert_eq!(a.occupation, b.occupation);
        assert_eq!(a.displacement, b.displacement);
        let mut other = cfg.clone();
        other.seed = 8;
        assert_ne!(simulate(&sol, &other).unwrap().displacement, a.displacement);
    }

    #[test]
    fn free_drift_is_minus_p() {
        let sol = free(1.0);
        let cfg = SimConfig {
            dt: 1e-3,
            ..SimConfig::default_for(&sol, 200_000, 1)
        };
        let r = simulate(&sol, &cfg).unwrap();
        assert!((r.rotation.mean[0] + 1.0).abs() <= 3.0 * r.rotation.stderr[0]);
        assert!((r.occupation.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(r.max_du <= sol.lipschitz + 1e-12);
    }

    #[test]
    fn constant_test_function_has_zero_residual() {
        use crate::testfn::{PShape, Trig, XMode};
        let sol = free(0.5);
        let cfg = SimConfig::default_for(&sol, 5_000, 3);
        let phi = TestFunction {
            mode: XMode {
                k: [0.0, 0.0],
                kind: Trig::Cos,
            },
            shape: PShape::One,
        };
        let r = dynkin_residuals(&sol, &cfg, &[phi]).unwrap();
        assert!(r[0].residual.abs() < 1e-14);
        assert!(r[0].passes());
    }

    #[test]
    fn huge_step_is_rejected() {
        let sol = free(1.0);
        let cfg = SimConfig {
            dt: 10.0,
            ..SimConfig::default_for(&sol, 100, 1)
        };
        assert!(matches!(simulate(&sol, &cfg), Err(Error::DtTooLarge { .. })));
    }
}
