//! Stationary density of the linearized operator, the phase-space and
//! dissipation measures built from it, and the identities they satisfy.

use crate::cell::CellSolution;
use crate::error::{Error, Result};
use crate::grid::{interpolate, GridField, Rank, TorusGrid};
use crate::hamiltonian::HamiltonianModel;
use crate::linalg::{Border, BorderedSolver, Dd, SparseMatrix};
use crate::testfn::{x_modes, TestFunction};
use serde::Serialize;

/// L v = -sum_a D_a v_aa + H_p(x, P + Du) . D v, with the diffusion
/// coefficients of the cell scheme; rows sum to zero and off-diagonals are
/// non-positive.
#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    pub grid: TorusGrid,
    pub matrix: SparseMatrix,
    pub scale: f64,
}

pub fn linearized_operator(sol: &CellSolution) -> LinearizedOperator {
    let g = &sol.spec.grid;
    let d = g.dim();
    let mut a = SparseMatrix::new(g.len());
    for i in 0..g.len() {
        let hp = sol.spec.model.grad_p(g.coord(i), sol.momentum(i));
        let mut diag = 0.0;
        for ax in 0..d {
            let h = g.spacing(ax);
            let c = sol.diffusion[i * d + ax] / (h * h);
            let b = hp[ax] / (2.0 * h);
            diag += 2.0 * c;
            a.add(i, g.shift(i, ax, 1), -c + b);
            a.add(i, g.shift(i, ax, -1), -c - b);
        }
        a.add(i, i, diag);
    }
    let scale = a.rows.iter().flatten().fold(0.0f64, |m, e| m.max(e.1.abs()));
    LinearizedOperator {
        grid: g.clone(),
        matrix: a,
        scale,
    }
}

impl LinearizedOperator {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matrix.mul(v)
    }
}

/// Probability density theta with L^T theta = 0 and sum theta h^n = 1.
#[derive(Clone, Debug)]
pub struct ProjectedDensity {
    pub theta: GridField,
    /// low-order part of theta from the refined solve
    pub theta_lo: Vec<f64>,
    pub spectral_gap: f64,
    /// most negative value clipped to zero
    pub clipped: f64,
}

pub fn stationary_adjoint(op: &LinearizedOperator) -> Result<ProjectedDensity> {
    let n = op.grid.len();
    // The deflated node should carry a large share of the mass, otherwise
    // the Schur complement underflows when theta spans many decades. Try
    // the default anchor, then a spread of others, and re-anchor at the
    // peak when the first success is badly placed.
    let stride = (n / 16).max(1);
    let mut anchors = vec![n - 1];
    anchors.extend((0..n).step_by(stride).map(|i| (i + stride / 2) % n));
    let mut first_err = None;
    for anchor in anchors {
        match stationary_adjoint_at(op, anchor) {
            Ok(d) => {
                let th = &d.theta.values;
                let (peak, &max) = th
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .expect("nonempty");
                if th[anchor] >= 1e-8 * max || peak == anchor {
                    return Ok(d);
                }
                return stationary_adjoint_at(op, peak).or(Ok(d));
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.expect("at least one anchor tried"))
}

fn stationary_adjoint_at(op: &LinearizedOperator, anchor: usize) -> Result<ProjectedDensity> {
    let g = &op.grid;
    let n = g.len();
    let w = g.cell_volume();
    let lt = op.matrix.transpose();
    let border = Border {
        cols: vec![vec![1.0; n]],
        rows: vec![vec![w; n]],
        corner: vec![0.0],
    };
    let solver = BorderedSolver::factor(lt, border, &g.band_order_anchored(anchor), 1).map_err(|e| match e {
        Error::Singular(_) => Error::AmbiguousDensity { gap: 0.0 },
        other => other,
    })?;
    let mut rhs = vec![0.0; n + 1];
    rhs[n] = 1.0;
    let (mut hi, mut lo) = solver.solve_refined(&rhs, 3);
    hi.truncate(n);
    lo.truncate(n);
    let max = hi.iter().fold(0.0f64, |m, v| m.max(*v));
    let min = hi.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-10 * max.max(1.0) {
        return Err(Error::Assembly(format!(
            "stationary vector changes sign (min {min:e}, max {max:e})"
        )));
    }
    let mut clipped = 0.0;
    if min < 0.0 {
        clipped = min;
        for (h, l) in hi.iter_mut().zip(lo.iter_mut()) {
            if *h < 0.0 {
                *h = 0.0;
                *l = 0.0;
            }
        }
        let mass: f64 = hi.iter().sum::<f64>() * w;
        hi.iter_mut().for_each(|v| *v /= mass);
        lo.iter_mut().for_each(|v| *v /= mass);
    }
    let gap = spectral_gap(&solver, n, w);
    if gap < 1e-12 * op.scale {
        return Err(Error::AmbiguousDensity { gap });
    }
    Ok(ProjectedDensity {
        theta: GridField::scalar(g, hi)?,
        theta_lo: lo,
        spectral_gap: gap,
        clipped,
    })
}

/// Modulus of the eigenvalue of L closest to zero on the complement of the
/// constants, by inverse iteration with the bordered factorization.
fn spectral_gap(solver: &BorderedSolver, n: usize, w: f64) -> f64 {
    let mut y: Vec<f64> = (0..n).map(|i| ((i * 7919 + 13) % 101) as f64 / 101.0 - 0.5).collect();
    let mut est = f64::INFINITY;
    for _ in 0..40 {
        let mean = y.iter().sum::<f64>() * w;
        let mut rhs: Vec<f64> = y.iter().map(|v| v - mean).collect();
        let norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        rhs.iter_mut().for_each(|v| *v /= norm);
        rhs.push(0.0);
        let z = solver.solve(&rhs);
        let zn = z[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
        est = 1.0 / zn;
        y = z[..n].to_vec();
    }
    est
}

/// Sum over nodes of theta (L phi) h^n, evaluated as sum phi (L^T theta)
/// in double-double with theta = hi + lo.
pub fn adjoint_pairing(op: &LinearizedOperator, density: &ProjectedDensity, phi: &[f64]) -> f64 {
    let th = &density.theta.values;
    let tl = &density.theta_lo;
    let mut acc = Dd::default();
    for (i, row) in op.matrix.rows.iter().enumerate() {
        let mut li = Dd::default();
        for &(j, v) in row {
            li = li.add_prod(v, phi[j]);
        }
        // theta_i (L phi)_i with theta_i = hi + lo
        acc = acc.add_prod(th[i], li.hi).add_prod(th[i], li.lo).add_prod(tl[i], li.hi);
    }
    acc.value() * op.grid.cell_volume()
}

/// max over phi of |int L phi dtheta| / ||phi||_inf.
pub fn adjointness_defect(op: &LinearizedOperator, density: &ProjectedDensity, phis: &[Vec<f64>]) -> f64 {
    phis.iter()
        .map(|phi| {
            let norm = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if norm == 0.0 {
                0.0
            } else {
                adjoint_pairing(op, density, phi).abs() / norm
            }
        })
        .fold(0.0, f64::max)
}

/// Atoms (x_i, P + Du(x_i)) with weight theta_i h^n.
#[derive(Clone, Debug)]
pub struct PhaseMeasure {
    pub x: Vec<[f64; 2]>,
    pub p: Vec<[f64; 2]>,
    pub weight: Vec<f64>,
}

pub fn phase_measure(sol: &CellSolution, density: &ProjectedDensity) -> PhaseMeasure {
    let g = &sol.spec.grid;
    let w = g.cell_volume();
    PhaseMeasure {
        x: (0..g.len()).map(|i| g.coord(i)).collect(),
        p: (0..g.len()).map(|i| sol.momentum(i)).collect(),
        weight: density.theta.values.iter().map(|t| t * w).collect(),
    }
}

impl PhaseMeasure {
    pub fn integrate(&self, f: impl Fn([f64; 2], [f64; 2]) -> f64) -> f64 {
        self.x
            .iter()
            .zip(&self.p)
            .zip(&self.weight)
            .map(|((x, p), w)| f(*x, *p) * w)
            .sum()
    }

    pub fn mass(&self) -> f64 {
        self.weight.iter().sum()
    }
}

/// m_kj = eps^2/2 u_{x_i x_k} u_{x_i x_j} theta, a symmetric-matrix field.
#[derive(Clone, Debug)]
pub struct DissipationMeasure {
    pub m: GridField,
    pub trace_mass: f64,
    pub min_eigenvalue: f64,
}

pub fn dissipation_measure(sol: &CellSolution, density: &ProjectedDensity) -> Result<DissipationMeasure> {
    let g = &sol.spec.grid;
    let d = g.dim();
    let sl = g.sym_len();
    let half = 0.5 * sol.spec.epsilon * sol.spec.epsilon;
    let mut m = vec![0.0; g.len() * sl];
    let mut trace_mass = 0.0;
    let mut min_eig = f64::INFINITY;
    for i in 0..g.len() {
        let th = density.theta.values[i];
        let mut mm = [[0.0; 2]; 2];
        for k in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for a in 0..d {
                    s += sol.hess(i, a, k) * sol.hess(i, a, j);
                }
                mm[k][j] = half * s * th;
            }
        }
        for k in 0..d {
            for j in k..d {
                m[i * sl + g.sym_index(k, j)] = mm[k][j];
            }
        }
        let tr = if d == 1 { mm[0][0] } else { mm[0][0] + mm[1][1] };
        let eig = if d == 1 {
            mm[0][0]
        } else {
            let det = mm[0][0] * mm[1][1] - mm[0][1] * mm[1][0];
            0.5 * tr - (0.25 * tr * tr - det).max(0.0).sqrt()
        };
        min_eig = min_eig.min(eig);
        trace_mass += tr;
    }
    trace_mass *= g.cell_volume();
    let scale = trace_mass.max(1e-300);
    if min_eig < -1e-10 * scale * g.len() as f64 {
        return Err(Error::Assembly(format!("dissipation density not PSD ({min_eig:e})")));
    }
    Ok(DissipationMeasure {
        m: GridField::new(g, Rank::SymMatrix, m)?,
        trace_mass,
        min_eigenvalue: min_eig,
    })
}

impl DissipationMeasure {
    pub fn entry(&self, i: usize, k: usize, j: usize) -> f64 {
        let g = &self.m.grid;
        self.m.values[i * g.sym_len() + g.sym_index(k, j)]
    }

    pub fn trace_at(&self, i: usize) -> f64 {
        (0..self.m.grid.dim()).map(|k| self.entry(i, k, k)).sum()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MatherChecks {
    /// int (H - Hbar)^2 dmu
    pub res_a: f64,
    /// |res_a - int (sum_a D_a u_aa)^2 dmu| with the scheme's diffusion
    /// D_a, which is eps^2/2 wherever the limiter is inactive
    pub res_a_identity: f64,
    /// |int (p - P) . H_p dmu|
    pub res_b: f64,
    /// max over modes of |int L phi dtheta| with the discrete operator
    pub res_c_po: f64,
    /// max over modes of |int H_p . D phi dmu| with exact derivatives
    pub res_c_raw: f64,
}

pub fn mather_checks(sol: &CellSolution, op: &LinearizedOperator, density: &ProjectedDensity) -> MatherChecks {
    let g = &sol.spec.grid;
    let d = g.dim();
    let w = g.cell_volume();
    let model = &sol.spec.model;
    let u = &sol.u.values;
    let (mut res_a, mut lap2, mut res_b) = (0.0, 0.0, 0.0);
    let modes = x_modes(d);
    let mut raw = vec![0.0; modes.len()];
    for i in 0..g.len() {
        let x = g.coord(i);
        let p = sol.momentum(i);
        let e = model.eval(x, p);
        let wt = density.theta.values[i] * w;
        res_a += (e.h - sol.hbar).powi(2) * wt;
        let mut visc = 0.0;
        for a in 0..d {
            let uaa = (u[g.shift(i, a, 1)] - 2.0 * u[i] + u[g.shift(i, a, -1)]) / (g.spacing(a) * g.spacing(a));
            visc += sol.diffusion[i * d + a] * uaa;
        }
        lap2 += visc * visc * wt;
        let mut dot = 0.0;
        for a in 0..d {
            dot += (p[a] - sol.spec.p[a]) * e.hp[a];
        }
        res_b += dot * wt;
        for (r, mode) in raw.iter_mut().zip(&modes) {
            let gphi = mode.gradient(x);
            *r += (e.hp[0] * gphi[0] + e.hp[1] * gphi[1]) * wt;
        }
    }
    let res_c_po = modes
        .iter()
        .map(|mode| {
            let phi: Vec<f64> = (0..g.len()).map(|i| mode.value(g.coord(i))).collect();
            adjoint_pairing(op, density, &phi).abs()
        })
        .fold(0.0, f64::max);
    MatherChecks {
        res_a,
        res_a_identity: (res_a - lap2).abs(),
        res_b: res_b.abs(),
        res_c_po,
        res_c_raw: raw.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityResidual {
    pub name: String,
    /// int L[phi(x, P + Du)] dtheta with the discrete operator
    pub discrete: f64,
    /// pointwise chain-rule form with the viscous correction terms
    pub imp: f64,
    /// int {phi, H} dmu + int phi_pp : dm
    pub veryimp: f64,
}

pub fn weak_kam_identity_check(
    sol: &CellSolution,
    op: &LinearizedOperator,
    density: &ProjectedDensity,
    m: &DissipationMeasure,
    catalog: &[TestFunction],
) -> Vec<IdentityResidual> {
    let g = &sol.spec.grid;
    let d = g.dim();
    let w = g.cell_volume();
    let eps2 = sol.spec.epsilon * sol.spec.epsilon;
    let model = &sol.spec.model;
    let pts: Vec<([f64; 2], [f64; 2])> = (0..g.len()).map(|i| (g.coord(i), sol.momentum(i))).collect();
    let evals: Vec<_> = pts.iter().map(|&(x, p)| model.eval(x, p)).collect();
    catalog
        .iter()
        .map(|f| {
            let psi: Vec<f64> = pts.iter().map(|&(x, p)| f.jet(x, p).v).collect();
            let discrete = adjoint_pairing(op, density, &psi);
            let (mut imp, mut bracket, mut diss) = (0.0, 0.0, 0.0);
            for i in 0..g.len() {
                let (x, p) = pts[i];
                let j = f.jet(x, p);
                let e = &evals[i];
                let mut pb = 0.0;
                let mut lapx = 0.0;
                let mut cross = 0.0;
                let mut quad = 0.0;
                for a in 0..d {
                    pb += j.dp[a] * e.hx[a] - j.dx[a] * e.hp[a];
                    lapx += j.dxx[a][a];
                    for b in 0..d {
                        cross += sol.hess(i, a, b) * j.dxp[a][b];
                        for k in 0..d {
                            quad += sol.hess(i, a, k) * sol.hess(i, a, b) * j.dpp[k][b];
                        }
                    }
                }
                let wt = density.theta.values[i] * w;
                imp += (pb + 0.5 * eps2 * lapx + eps2 * cross + 0.5 * eps2 * quad) * wt;
                bracket += pb * wt;
                let mut md = 0.0;
                for k in 0..d {
                    for b in 0..d {
                        md += j.dpp[k][b] * m.entry(i, k, b);
                    }
                }
                diss += md * w;
            }
            IdentityResidual {
                name: f.name(),
                discrete,
                imp,
                veryimp: bracket + diss,
            }
        })
        .collect()
}

/// int e^{lambda H}(lambda H_p H_p^T + H_pp) : dm, carried as
/// exp(log_scale) * scaled to avoid overflow.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IulValue {
    pub lambda: f64,
    pub log_scale: f64,
    pub scaled: f64,
    pub value: f64,
}

pub fn iul_functional(sol: &CellSolution, m: &DissipationMeasure, lambda: f64) -> IulValue {
    let g = &sol.spec.grid;
    let d = g.dim();
    let w = g.cell_volume();
    let model = &sol.spec.model;
    let evals: Vec<_> = (0..g.len()).map(|i| model.eval(g.coord(i), sol.momentum(i))).collect();
    let hmax = evals
        .iter()
        .enumerate()
        .filter(|(i, _)| m.trace_at(*i) > 0.0)
        .map(|(_, e)| e.h)
        .fold(f64::NEG_INFINITY, f64::max);
    let log_scale = if hmax.is_finite() { lambda * hmax } else { 0.0 };
    let mut scaled = 0.0;
    for (i, e) in evals.iter().enumerate() {
        let tr = m.trace_at(i);
        if tr == 0.0 {
            continue;
        }
        let weight = (lambda * e.h - log_scale).exp();
        let mut q = 0.0;
        for k in 0..d {
            for j in 0..d {
                q += (lambda * e.hp[k] * e.hp[j] + e.hpp[k][j]) * m.entry(i, k, j);
            }
        }
        scaled += weight * q * w;
    }
    IulValue {
        lambda,
        log_scale,
        scaled,
        value: scaled * log_scale.exp(),
    }
}

/// The lower bound constant min{Hr''(0)/2, min_[r,M] Hr'(s)/M} for a
/// radial profile, with r chosen so that Hr'(s)/s and Hr''(s) stay within
/// a quarter of Hr''(0) of each other below r.
pub fn radial_beta(profile: &[f64], m_bound: f64) -> (f64, f64) {
    let d1 = |s: f64| {
        profile
            .iter()
            .enumerate()
            .map(|(k, c)| c * (2 * k + 2) as f64 * s.powi(2 * k as i32 + 1))
            .sum::<f64>()
    };
    let d2 = |s: f64| {
        profile
            .iter()
            .enumerate()
            .map(|(k, c)| c * ((2 * k + 2) * (2 * k + 1)) as f64 * s.powi(2 * k as i32))
            .sum::<f64>()
    };
    let h0 = d2(0.0);
    let steps = 4000;
    let mut r = m_bound;
    for i in 1..=steps {
        let s = m_bound * i as f64 / steps as f64;
        let ratio = d1(s) / s;
        if !(ratio > 0.75 * h0 && (ratio - d2(s)).abs() < 0.25 * h0) {
            r = m_bound * (i - 1).max(1) as f64 / steps as f64;
            break;
        }
    }
    let min_slope = (0..=steps)
        .map(|i| r + (m_bound - r) * i as f64 / steps as f64)
        .map(|s| d1(s) / m_bound)
        .fold(f64::INFINITY, f64::min);
    ((0.5 * h0).min(min_slope), r)
}

/// Exponent making e^{lambda H}(lambda Hr'^2 + Hr'') >= beta e^{lambda H}
/// on [r, M] for a one-dimensional radial profile.
pub fn radial_lambda(profile: &[f64], beta: f64, r: f64, m_bound: f64) -> f64 {
    let d1 = |s: f64| {
        profile
            .iter()
            .enumerate()
            .map(|(k, c)| c * (2 * k + 2) as f64 * s.powi(2 * k as i32 + 1))
            .sum::<f64>()
    };
    let d2 = |s: f64| {
        profile
            .iter()
            .enumerate()
            .map(|(k, c)| c * ((2 * k + 2) * (2 * k + 1)) as f64 * s.powi(2 * k as i32))
            .sum::<f64>()
    };
    let steps = 4000;
    (0..=steps)
        .map(|i| r + (m_bound - r) * i as f64 / steps as f64)
        .map(|s| (beta - d2(s)) / (d1(s) * d1(s)))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct SupportReport {
    /// fraction of trace(m) carried by momenta outside the hull
    pub outside_fraction: f64,
    /// 1D: [lo, hi]; 2D: hull vertices
    pub hull: Vec<[f64; 2]>,
}

/// Fraction of the dissipation mass outside the convex hull of the
/// sublevel sets {q : H(x, q) <= Hbar} over all x.
pub fn support_diagnostics(sol: &CellSolution, m: &DissipationMeasure) -> Result<SupportReport> {
    let g = &sol.spec.grid;
    let model = &sol.spec.model;
    let d = g.dim();
    let radius = 1.5 * model.momentum_bound_hint(sol.spec.p).max(sol.lipschitz) + 1.0;
    let level = sol.hbar;
    let total: f64 = (0..g.len()).map(|i| m.trace_at(i)).sum();
    if total <= 0.0 {
        return Ok(SupportReport {
            outside_fraction: 0.0,
            hull: Vec::new(),
        });
    }
    let xs = sample_torus(d, if d == 1 { 512 } else { 32 });
    if d == 1 {
        let nq = 8192;
        let dq = 2.0 * radius / nq as f64;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &x in &xs {
            if model.value(x, [-radius, 0.0]) <= level || model.value(x, [radius, 0.0]) <= level {
                return Err(Error::DiagnosticSkipped(format!(
                    "sublevel set at x = {:.3} is unbounded in the sampling box",
                    x[0]
                )));
            }
            for k in 0..=nq {
                let q = -radius + dq * k as f64;
                if model.value(x, [q, 0.0]) <= level {
                    lo = lo.min(q);
                    hi = hi.max(q);
                }
            }
        }
        let (lo, hi) = (lo - 2.0 * dq, hi + 2.0 * dq);
        let outside: f64 = (0..g.len())
            .filter(|&i| {
                let p = sol.momentum(i)[0];
                p < lo || p > hi
            })
            .map(|i| m.trace_at(i))
            .sum();
        return Ok(SupportReport {
            outside_fraction: outside / total,
            hull: vec![[lo, hi]],
        });
    }
    let nq = 160;
    let dq = 2.0 * radius / nq as f64;
    let mut pts = Vec::new();
    for &x in &xs {
        for a in 0..=nq {
            for b in 0..=nq {
                let q = [-radius + dq * a as f64, -radius + dq * b as f64];
                if model.value(x, q) <= level {
                    if a == 0 || b == 0 || a == nq || b == nq {
                        return Err(Error::DiagnosticSkipped("sublevel set reaches the sampling box".into()));
                    }
                    pts.push(q);
                }
            }
        }
    }
    let hull = convex_hull(pts);
    let tol = 2.0 * dq;
    let outside: f64 = (0..g.len())
        .filter(|&i| outside_polygon(&hull, sol.momentum(i), tol))
        .map(|i| m.trace_at(i))
        .sum();
    Ok(SupportReport {
        outside_fraction: outside / total,
        hull,
    })
}

fn sample_torus(d: usize, per_axis: usize) -> Vec<[f64; 2]> {
    let m1 = if d > 1 { per_axis } else { 1 };
    let mut out = Vec::new();
    for j in 0..m1 {
        for i in 0..per_axis {
            out.push([i as f64 / per_axis as f64, j as f64 / per_axis as f64]);
        }
    }
    out
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain, counter-clockwise.
pub fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn outside_polygon(hull: &[[f64; 2]], p: [f64; 2], tol: f64) -> bool {
    if hull.len() < 3 {
        return true;
    }
    for k in 0..hull.len() {
        let a = hull[k];
        let b = hull[(k + 1) % hull.len()];
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        if len == 0.0 {
            continue;
        }
        // signed distance to the left of a->b is inside for a ccw hull
        if cross(a, b, p) / len < -tol {
            return true;
        }
    }
    false
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GraphDefect {
    pub sup: f64,
    pub l1: f64,
}

/// |H_p(x, p) . (p - P - Du_ref(x))| over the atoms of mu, against a
/// reference solution (possibly on another grid).
pub fn graph_defect(mu: &PhaseMeasure, model: &HamiltonianModel, reference: &CellSolution) -> GraphDefect {
    let rg = &reference.spec.grid;
    let d = rg.dim();
    let (mut sup, mut l1) = (0.0f64, 0.0);
    for ((x, p), w) in mu.x.iter().zip(&mu.p).zip(&mu.weight) {
        let e = model.eval(*x, *p);
        let mut s = 0.0;
        for a in 0..d {
            let du = interpolate(rg, &reference.du.values, d, a, *x);
            s += e.hp[a] * (p[a] - reference.spec.p[a] - du);
        }
        if *w > 0.0 {
            sup = sup.max(s.abs());
        }
        l1 += s.abs() * w;
    }
    GraphDefect { sup, l1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{solve_cell, CellSpec, SolverOptions};
    use crate::hamiltonian::{make_mechanical, make_radial};
    use crate::potential::{Potential, PotentialSpec};

    fn pendulum(n: usize, eps: f64, p: f64) -> CellSolution {
        let v = Potential::from_spec(&PotentialSpec::Cosine { amplitude: 1.0 }, 1).unwrap();
        let spec = CellSpec::new(make_mechanical(v).unwrap(), &[p], eps, TorusGrid::new(&[n]).unwrap()).unwrap();
        solve_cell(&spec, None, &SolverOptions::default()).unwrap()
    }

    #[test]
    fn operator_rows_sum_to_zero_and_offdiagonals_nonpositive() {
        let sol = pendulum(128, 0.05, 0.3);
        let op = linearized_operator(&sol);
        for (i, r) in op.matrix.rows.iter().enumerate() {
            let s: f64 = r.iter().map(|e| e.1).sum();
            assert!(s.abs() < 1e-9 * op.scale);
            for &(j, v) in r {
                if j != i {
                    assert!(v <= 1e-12 * op.scale);
                }
            }
        }
    }

    #[test]
    fn density_is_normalized_and_adjoint() {
        let sol = pendulum(256, 0.2, 0.5);
        let op = linearized_operator(&sol);
        let th = stationary_adjoint(&op).unwrap();
        let mass: f64 = th.theta.values.iter().sum::<f64>() / 256.0;
        assert!((mass - 1.0).abs() < 1e-12);
        assert!(th.theta.values.iter().all(|v| *v >= 0.0));
        let phi: Vec<f64> = (0..256).map(|i| ((i * 37) % 17) as f64 - 8.0).collect();
        assert!(adjointness_defect(&op, &th, &[phi]) < 1e-12);
        assert!(th.spectral_gap > 0.0);
    }

    #[test]
    fn rotation_identity_from_density() {
        // D_P Hbar = int H_p dtheta where the scheme is central
        let sol = pendulum(512, 0.3, 1.5);
        assert_eq!(sol.limited_nodes, 0);
        let op = linearized_operator(&sol);
        let th = stationary_adjoint(&op).unwrap();
        let mu = phase_measure(&sol, &th);
        let flux = mu.integrate(|x, p| sol.spec.model.grad_p(x, p)[0]);
        let dp = crate::cell::dp_u(&sol, Some(1e-3), &SolverOptions::default()).unwrap();
        assert!((flux - dp.dp_hbar[0]).abs() < 1e-6, "{flux} {}", dp.dp_hbar[0]);
    }

    #[test]
    fn hull_of_square() {
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let h = convex_hull(pts);
        assert_eq!(h.len(), 4);
        assert!(!outside_polygon(&h, [0.5, 0.2], 0.0));
        assert!(outside_polygon(&h, [1.5, 0.2], 0.1));
    }

    #[test]
    fn radial_beta_of_quadratic() {
        // Hr = s^2: Hr'' = 2, Hr'(s)/M = 2s/M >= 2r/M
        let (beta, r) = radial_beta(&[1.0], 2.0);
        assert!(r > 1.9);
        assert!((beta - 1.0).abs() < 1e-2, "{beta}");
        let _ = make_radial(&[1.0], 2.0, Potential::zero(1)).unwrap();
    }
}
