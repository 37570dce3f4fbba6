//! Viscous cell problem
//! -eps^2/2 Lap u + H(x, P + Du) = Hbar on the torus, mean(u) = 0.

use crate::error::{Error, Result};
use crate::grid::{composed_hessian, interleave, laplacian_values, GridField, Rank, TorusGrid};
use crate::hamiltonian::HamiltonianModel;
use crate::linalg::{Border, BorderedSolver, SparseMatrix};
use serde::Serialize;

#[derive(Clone, Debug)]
pub struct CellSpec {
    pub model: HamiltonianModel,
    pub p: [f64; 2],
    pub epsilon: f64,
    pub grid: TorusGrid,
}

impl CellSpec {
    pub fn new(model: HamiltonianModel, p: &[f64], epsilon: f64, grid: TorusGrid) -> Result<Self> {
        if model.dim() != grid.dim() {
            return Err(Error::InvalidArgument(format!(
                "model is {}-dimensional, grid is {}-dimensional",
                model.dim(),
                grid.dim()
            )));
        }
        if p.len() != grid.dim() {
            return Err(Error::InvalidArgument("P has the wrong dimension".into()));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        let mut pp = [0.0; 2];
        pp[..p.len()].copy_from_slice(p);
        Ok(Self {
            model,
            p: pp,
            epsilon,
            grid,
        })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    pub fn with_p(&self, p: [f64; 2]) -> Self {
        Self { p, ..self.clone() }
    }

    /// Default Newton tolerance: 1e-10 in 1D, 1e-8 in 2D.
    pub fn default_tolerance(&self) -> f64 {
        if self.grid.dim() == 1 {
            1e-10
        } else {
            1e-8
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tolerance: Option<f64>,
    pub max_iterations: usize,
    pub max_halvings: usize,
    pub fallbacks: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: None,
            max_iterations: 200,
            max_halvings: 30,
            fallbacks: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveRoute {
    Newton,
    PseudoTransient,
    DiscountedContinuation,
    EpsilonContinuation,
}

#[derive(Clone, Debug)]
pub struct CellSolution {
    pub spec: CellSpec,
    pub u: GridField,
    pub hbar: f64,
    /// central gradient D u (vector field)
    pub du: GridField,
    /// composed central Hessian (symmetric-matrix field)
    pub d2u: GridField,
    /// compact Laplacian of u
    pub lap: Vec<f64>,
    /// per-node, per-axis diffusion coefficient of the scheme (node-major)
    pub diffusion: Vec<f64>,
    /// nodes where the Peclet limiter raised the diffusion above eps^2/2
    pub limited_nodes: usize,
    pub residual_inf: f64,
    /// tolerance actually enforced (raised to the rounding floor if needed)
    pub tolerance: f64,
    pub lipschitz: f64,
    pub iterations: usize,
    pub route: SolveRoute,
}

impl CellSolution {
    /// Momentum P + Du(x_i) at node i.
    #[inline]
    pub fn momentum(&self, i: usize) -> [f64; 2] {
        let d = self.spec.grid.dim();
        let mut p = self.spec.p;
        for (a, pa) in p.iter_mut().enumerate().take(d) {
            *pa += self.du.values[i * d + a];
        }
        p
    }

    /// d2u entry (a, b) at node i.
    #[inline]
    pub fn hess(&self, i: usize, a: usize, b: usize) -> f64 {
        let g = &self.spec.grid;
        self.d2u.values[i * g.sym_len() + g.sym_index(a, b)]
    }
}

/// Smoothed max(1, t) used to limit the cell Peclet number: equal to 1
/// for t <= 3/4 and to t for t >= 5/4, C1 in between, never below max(1, t).
#[inline]
pub fn peclet_limiter(t: f64) -> (f64, f64) {
    const D: f64 = 0.25;
    if t <= 1.0 - D {
        (1.0, 0.0)
    } else if t >= 1.0 + D {
        (t, 1.0)
    } else {
        let s = t - 1.0 + D;
        (1.0 + s * s / (4.0 * D), s / (2.0 * D))
    }
}

/// Diffusion coefficient along one axis: eps^2/2 where the drift is
/// resolved, raised just enough to keep the stencil monotone elsewhere.
/// Returns the coefficient and its derivative with respect to |b|.
#[inline]
pub fn axis_diffusion(epsilon: f64, h: f64, b: f64) -> (f64, f64) {
    let e2 = epsilon * epsilon;
    let (g, dg) = peclet_limiter(b.abs() * h / e2);
    (0.5 * e2 * g, 0.5 * h * dg)
}

pub(crate) struct Workspace<'a> {
    pub(crate) spec: &'a CellSpec,
    pub(crate) coords: Vec<[f64; 2]>,
    pub(crate) pos: Vec<usize>,
}

impl<'a> Workspace<'a> {
    pub(crate) fn new(spec: &'a CellSpec) -> Self {
        let g = &spec.grid;
        Self {
            spec,
            coords: (0..g.len()).map(|i| g.coord(i)).collect(),
            pos: g.band_order(),
        }
    }

    pub(crate) fn gradients(&self, u: &[f64]) -> Vec<[f64; 2]> {
        let g = &self.spec.grid;
        let mut out = vec![self.spec.p; g.len()];
        for a in 0..g.dim() {
            let s = 0.5 / g.spacing(a);
            for (i, o) in out.iter_mut().enumerate() {
                o[a] += (u[g.shift(i, a, 1)] - u[g.shift(i, a, -1)]) * s;
            }
        }
        out
    }

    fn second(&self, u: &[f64], i: usize, a: usize) -> f64 {
        let g = &self.spec.grid;
        let h = g.spacing(a);
        (u[g.shift(i, a, 1)] - 2.0 * u[i] + u[g.shift(i, a, -1)]) / (h * h)
    }

    /// -sum_a D_a u_aa + H(x, P + Du) + lambda u - Hbar.
    pub(crate) fn residual(&self, u: &[f64], lambda: f64, hbar: f64) -> Vec<f64> {
        let g = &self.spec.grid;
        let p = self.gradients(u);
        (0..u.len())
            .map(|i| {
                let e = self.spec.model.eval(self.coords[i], p[i]);
                let mut visc = 0.0;
                for a in 0..g.dim() {
                    let (d, _) = axis_diffusion(self.spec.epsilon, g.spacing(a), e.hp[a]);
                    visc += d * self.second(u, i, a);
                }
                -visc + e.h + lambda * u[i] - hbar
            })
            .collect()
    }

    /// Exact Jacobian of `residual` with respect to u.
    fn jacobian(&self, u: &[f64], lambda: f64) -> SparseMatrix {
        let g = &self.spec.grid;
        let dim = g.dim();
        let p = self.gradients(u);
        let mut a = SparseMatrix::new(g.len());
        for i in 0..g.len() {
            let e = self.spec.model.eval(self.coords[i], p[i]);
            let mut beta = e.hp;
            let mut diffs = [0.0; 2];
            for ax in 0..dim {
                let (d, dd) = axis_diffusion(self.spec.epsilon, g.spacing(ax), e.hp[ax]);
                diffs[ax] = d;
                if dd != 0.0 {
                    let w = self.second(u, i, ax) * dd * e.hp[ax].signum();
                    for c in 0..dim {
                        beta[c] -= w * e.hpp[ax][c];
                    }
                }
            }
            let mut diag = lambda;
            for ax in 0..dim {
                let h = g.spacing(ax);
                let c = diffs[ax] / (h * h);
                let b = beta[ax] / (2.0 * h);
                diag += 2.0 * c;
                a.add(i, g.shift(i, ax, 1), -c + b);
                a.add(i, g.shift(i, ax, -1), -c - b);
            }
            a.add(i, i, diag);
        }
        a
    }

    /// Smallest residual that rounding lets us certify for this u.
    fn rounding_floor(&self, u: &[f64], res_scale: f64) -> f64 {
        let g = &self.spec.grid;
        let half = 0.5 * self.spec.epsilon * self.spec.epsilon;
        let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let stencil: f64 = (0..g.dim()).map(|a| 4.0 * half / (g.spacing(a) * g.spacing(a))).sum();
        16.0 * f64::EPSILON * (stencil * umax + res_scale)
    }

    fn h_scale(&self, u: &[f64], hbar: f64) -> f64 {
        let p = self.gradients(u);
        (0..u.len())
            .map(|i| self.spec.model.value(self.coords[i], p[i]).abs())
            .fold(hbar.abs(), f64::max)
    }

    /// Solve (J + shift I) d = -F, bordered by the mean constraint when
    /// lambda = 0.
    fn step(&self, u: &[f64], r: &[f64], lambda: f64, shift: f64) -> Result<Vec<f64>> {
        let n = u.len();
        let w = self.spec.grid.cell_volume();
        let bordered = lambda == 0.0;
        let mut jac = self.jacobian(u, lambda);
        if shift != 0.0 {
            jac.add_diagonal(shift);
        }
        let (border, deflate) = if bordered {
            (
                Border {
                    cols: vec![vec![-1.0; n]],
                    rows: vec![vec![w; n]],
                    corner: vec![0.0],
                },
                1,
            )
        } else {
            (Border::none(), 0)
        };
        let solver = match BorderedSolver::factor(jac.clone(), border.clone(), &self.pos, deflate) {
            Ok(s) => s,
            Err(Error::Singular(_)) => {
                let scale = jac.rows.iter().flatten().fold(0.0f64, |m, e| m.max(e.1.abs()));
                jac.add_diagonal(1e-8 * scale.max(1.0));
                BorderedSolver::factor(jac, border, &self.pos, deflate)?
            }
            Err(e) => return Err(e),
        };
        let mut rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        if bordered {
            rhs.push(-u.iter().sum::<f64>() * w);
        }
        Ok(solver.solve(&rhs))
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct NewtonOutcome {
    u: Vec<f64>,
    hbar: f64,
    residual: f64,
    tolerance: f64,
    iterations: usize,
}

/// Damped Newton (step halving on the l2 residual) for the bordered cell
/// system (lambda = 0) or the discounted system (lambda > 0).
fn newton(ws: &Workspace, mut u: Vec<f64>, mut hbar: f64, lambda: f64, opts: &SolverOptions) -> Result<NewtonOutcome> {
    let n = u.len();
    let tol = opts.tolerance.unwrap_or_else(|| ws.spec.default_tolerance());
    let bordered = lambda == 0.0;
    if bordered {
        let mean = u.iter().sum::<f64>() / n as f64;
        u.iter_mut().for_each(|v| *v -= mean);
    }
    let mut r = ws.residual(&u, lambda, hbar);
    let h_scale = ws.h_scale(&u, hbar);
    for it in 0..opts.max_iterations {
        let eff_tol = tol.max(ws.rounding_floor(&u, h_scale));
        let rn = inf_norm(&r);
        if rn <= eff_tol {
            return Ok(NewtonOutcome {
                u,
                hbar,
                residual: rn,
                tolerance: eff_tol,
                iterations: it,
            });
        }
        if !rn.is_finite() {
            break;
        }
        let step = ws.step(&u, &r, lambda, 0.0)?;
        let r2 = l2(&r);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, d)| a + alpha * d).collect();
            let th = if bordered { hbar + alpha * step[n] } else { hbar };
            let tr = ws.residual(&trial, lambda, th);
            if l2(&tr) < r2 || inf_norm(&tr) <= eff_tol {
                u = trial;
                hbar = th;
                r = tr;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                residual: rn,
                iterations: it + 1,
            });
        }
    }
    let rn = inf_norm(&r);
    let eff_tol = tol.max(ws.rounding_floor(&u, h_scale));
    if rn <= eff_tol {
        return Ok(NewtonOutcome {
            u,
            hbar,
            residual: rn,
            tolerance: eff_tol,
            iterations: opts.max_iterations,
        });
    }
    Err(Error::NoConvergence {
        residual: rn,
        iterations: opts.max_iterations,
    })
}

/// Pseudo-transient continuation: implicit Euler steps of the parabolic
/// flow u_t = -F(u) with a step size that grows as the residual falls.
fn pseudo_transient(
    ws: &Workspace,
    mut u: Vec<f64>,
    mut hbar: f64,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<NewtonOutcome> {
    let n = u.len();
    let tol = opts.tolerance.unwrap_or_else(|| ws.spec.default_tolerance());
    let bordered = lambda == 0.0;
    if bordered {
        let mean = u.iter().sum::<f64>() / n as f64;
        u.iter_mut().for_each(|v| *v -= mean);
    }
    let mut r = ws.residual(&u, lambda, hbar);
    let mut rn = l2(&r);
    let h_scale = ws.h_scale(&u, hbar);
    let mut tau = 1e-2;
    let budget = 5 * opts.max_iterations;
    for it in 0..budget {
        let eff_tol = tol.max(ws.rounding_floor(&u, h_scale));
        if inf_norm(&r) <= eff_tol {
            return Ok(NewtonOutcome {
                u,
                hbar,
                residual: inf_norm(&r),
                tolerance: eff_tol,
                iterations: it,
            });
        }
        let shift = if tau > 1e14 { 0.0 } else { 1.0 / tau };
        let step = ws.step(&u, &r, lambda, shift)?;
        let trial: Vec<f64> = u.iter().zip(&step).map(|(a, d)| a + d).collect();
        let th = if bordered { hbar + step[n] } else { hbar };
        let tr = ws.residual(&trial, lambda, th);
        let tn = l2(&tr);
        if tn.is_finite() && tn < 4.0 * rn {
            tau *= (rn / tn).clamp(0.2, 10.0);
            u = trial;
            hbar = th;
            r = tr;
            rn = tn;
        } else {
            tau *= 0.25;
            if tau < 1e-12 {
                break;
            }
        }
    }
    Err(Error::NoConvergence {
        residual: inf_norm(&r),
        iterations: budget,
    })
}

fn finish(spec: &CellSpec, out: NewtonOutcome, route: SolveRoute) -> Result<CellSolution> {
    let g = &spec.grid;
    let parts: Vec<Vec<f64>> = (0..g.dim()).map(|a| crate::grid::central_diff(g, &out.u, a)).collect();
    let du = GridField::new(g, Rank::Vector, interleave(&parts))?;
    let d2u = GridField::new(g, Rank::SymMatrix, composed_hessian(g, &out.u))?;
    let lap = laplacian_values(g, &out.u);
    let half = 0.5 * spec.epsilon * spec.epsilon;
    let mut diffusion = vec![0.0; g.len() * g.dim()];
    let mut limited_nodes = 0;
    for i in 0..g.len() {
        let mut p = spec.p;
        for a in 0..g.dim() {
            p[a] += du.values[i * g.dim() + a];
        }
        let hp = spec.model.grad_p(g.coord(i), p);
        let mut limited = false;
        for a in 0..g.dim() {
            let (d, _) = axis_diffusion(spec.epsilon, g.spacing(a), hp[a]);
            diffusion[i * g.dim() + a] = d;
            limited |= d > half;
        }
        limited_nodes += usize::from(limited);
    }
    let mut lipschitz = 0.0f64;
    for i in 0..g.len() {
        let mut s = 0.0;
        for a in 0..g.dim() {
            let pa = spec.p[a] + du.values[i * g.dim() + a];
            s += pa * pa;
        }
        lipschitz = lipschitz.max(s.sqrt());
    }
    Ok(CellSolution {
        spec: spec.clone(),
        u: GridField::scalar(g, out.u)?,
        hbar: out.hbar,
        du,
        d2u,
        lap,
        diffusion,
        limited_nodes,
        residual_inf: out.residual,
        tolerance: out.tolerance,
        lipschitz,
        iterations: out.iterations,
        route,
    })
}

fn initial_hbar(ws: &Workspace) -> f64 {
    let n = ws.coords.len();
    ws.coords
        .iter()
        .map(|&x| ws.spec.model.value(x, ws.spec.p))
        .sum::<f64>()
        / n as f64
}

/// Solve the cell problem. `initial` warm-starts from (u, Hbar) on the
/// same grid.
pub fn solve_cell(spec: &CellSpec, initial: Option<(&[f64], f64)>, opts: &SolverOptions) -> Result<CellSolution> {
    solve_cell_depth(spec, initial, opts, 0)
}

fn solve_cell_depth(
    spec: &CellSpec,
    initial: Option<(&[f64], f64)>,
    opts: &SolverOptions,
    depth: usize,
) -> Result<CellSolution> {
    let ws = Workspace::new(spec);
    let n = spec.grid.len();
    let (u0, h0) = match initial {
        Some((u, h)) if u.len() == n => (u.to_vec(), h),
        Some(_) => return Err(Error::InvalidArgument("initial guess lives on another grid".into())),
        None => (vec![0.0; n], initial_hbar(&ws)),
    };
    let first = newton(&ws, u0.clone(), h0, 0.0, opts);
    let err = match first {
        Ok(out) => return finish(spec, out, SolveRoute::Newton),
        Err(e) => e,
    };
    if !opts.fallbacks {
        return Err(err);
    }
    let (u0, h0) = match initial {
        Some((u, h)) => (u.to_vec(), h),
        None => (vec![0.0; n], initial_hbar(&ws)),
    };
    if let Ok(out) = pseudo_transient(&ws, u0, h0, 0.0, opts) {
        return finish(spec, out, SolveRoute::PseudoTransient);
    }
    // discounted continuation: lambda v + H(x, P + Dv) - eps^2/2 Lap v = 0
    let mut v: Option<Vec<f64>> = None;
    for k in 0..7 {
        let lambda = 10f64.powi(-k);
        let guess = v.clone().unwrap_or_else(|| vec![-h0 / lambda; n]);
        let Ok(out) = newton(&ws, guess, 0.0, lambda, opts) else {
            break;
        };
        let mean = out.u.iter().sum::<f64>() / n as f64;
        let hbar = -lambda * mean;
        let centred: Vec<f64> = out.u.iter().map(|x| x - mean).collect();
        if let Ok(out) = newton(&ws, centred, hbar, 0.0, opts) {
            return finish(spec, out, SolveRoute::DiscountedContinuation);
        }
        v = Some(out.u);
    }
    // epsilon continuation from a smoother problem
    if depth < 4 {
        if let Ok(coarse) = solve_cell_depth(&spec.with_epsilon(2.0 * spec.epsilon), None, opts, depth + 1) {
            let mut guess = coarse.u.values.clone();
            let mut hb = coarse.hbar;
            for s in [1.5, 1.25, 1.0] {
                let sub = spec.with_epsilon(s * spec.epsilon);
                let wsub = Workspace::new(&sub);
                match newton(&wsub, guess.clone(), hb, 0.0, opts) {
                    Ok(out) => {
                        if s == 1.0 {
                            return finish(spec, out, SolveRoute::EpsilonContinuation);
                        }
                        guess = out.u;
                        hb = out.hbar;
                    }
                    Err(_) => break,
                }
            }
        }
    }
    Err(err)
}

#[derive(Clone, Debug)]
pub struct DiscountedSolution {
    pub v: GridField,
    pub lambda: f64,
    pub residual_inf: f64,
}

/// Solve lambda v + H(x, P + Dv) - eps^2/2 Lap v = 0; -lambda v tends to
/// Hbar as lambda -> 0.
pub fn solve_discounted(
    spec: &CellSpec,
    lambda: f64,
    initial: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<DiscountedSolution> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    let ws = Workspace::new(spec);
    let n = spec.grid.len();
    let guess = match initial {
        Some(v) if v.len() == n => v.to_vec(),
        Some(_) => return Err(Error::InvalidArgument("initial guess lives on another grid".into())),
        None => vec![-initial_hbar(&ws) / lambda; n],
    };
    let out = match newton(&ws, guess.clone(), 0.0, lambda, opts) {
        Ok(out) => out,
        Err(_) if opts.fallbacks => pseudo_transient(&ws, guess, 0.0, lambda, opts)?,
        Err(e) => return Err(e),
    };
    Ok(DiscountedSolution {
        v: GridField::scalar(&spec.grid, out.u)?,
        lambda,
        residual_inf: out.residual,
    })
}

/// Discrete residual of a candidate (u, Hbar).
pub fn cell_residual(spec: &CellSpec, u: &[f64], hbar: f64) -> Vec<f64> {
    Workspace::new(spec).residual(u, 0.0, hbar)
}

#[derive(Clone, Debug)]
pub struct MomentumDerivative {
    /// D_P u as a vector field: component a is d u / d P_a
    pub dpu: GridField,
    pub dp_hbar: [f64; 2],
    /// sup-norm residual of the linearized identity
    /// -H_p . (e_a + D D_Pa u) + eps^2/2 Lap D_Pa u + D_Pa Hbar = 0
    pub identity_residual: f64,
    pub step: f64,
}

/// Default finite-difference step in P.
pub fn default_p_step(p: [f64; 2]) -> f64 {
    1e-3 * p[0].hypot(p[1]).max(1.0)
}

/// D_P u and D_P Hbar by central differences in P.
pub fn dp_u(sol: &CellSolution, step: Option<f64>, opts: &SolverOptions) -> Result<MomentumDerivative> {
    let spec = &sol.spec;
    let g = &spec.grid;
    let d = g.dim();
    let hp = step.unwrap_or_else(|| default_p_step(spec.p));
    let mut parts = Vec::with_capacity(d);
    let mut dp_hbar = [0.0; 2];
    for a in 0..d {
        let solve_at = |sign: f64| {
            let mut p = spec.p;
            p[a] += sign * hp;
            solve_cell(&spec.with_p(p), Some((&sol.u.values, sol.hbar)), opts)
        };
        let plus = solve_at(1.0)?;
        let minus = solve_at(-1.0)?;
        parts.push(
            plus.u
                .values
                .iter()
                .zip(&minus.u.values)
                .map(|(x, y)| (x - y) / (2.0 * hp))
                .collect::<Vec<f64>>(),
        );
        dp_hbar[a] = (plus.hbar - minus.hbar) / (2.0 * hp);
    }
    let half = 0.5 * spec.epsilon * spec.epsilon;
    let mut worst = 0.0f64;
    let coords: Vec<[f64; 2]> = (0..g.len()).map(|i| g.coord(i)).collect();
    for a in 0..d {
        let lap = laplacian_values(g, &parts[a]);
        let grads: Vec<Vec<f64>> = (0..d).map(|b| crate::grid::central_diff(g, &parts[a], b)).collect();
        for i in 0..g.len() {
            let hpv = spec.model.grad_p(coords[i], sol.momentum(i));
            let mut adv = 0.0;
            for b in 0..d {
                let e = if a == b { 1.0 } else { 0.0 };
                adv += hpv[b] * (e + grads[b][i]);
            }
            worst = worst.max((-adv + half * lap[i] + dp_hbar[a]).abs());
        }
    }
    Ok(MomentumDerivative {
        dpu: GridField::new(g, Rank::Vector, interleave(&parts))?,
        dp_hbar,
        identity_residual: worst,
        step: hp,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub p: [f64; 2],
    pub hbar: Option<f64>,
    pub residual: Option<f64>,
    pub error: Option<String>,
}

/// Hbar over a list of momenta, warm-starting each solve from the last
/// success; failures are recorded and skipped.
pub fn effective_hamiltonian_sweep(base: &CellSpec, momenta: &[[f64; 2]], opts: &SolverOptions) -> Vec<SweepPoint> {
    let mut last: Option<CellSolution> = None;
    momenta
        .iter()
        .map(|&p| {
            let spec = base.with_p(p);
            let init = last.as_ref().map(|s| (s.u.values.as_slice(), s.hbar));
            match solve_cell(&spec, init, opts) {
                Ok(sol) => {
                    let pt = SweepPoint {
                        p,
                        hbar: Some(sol.hbar),
                        residual: Some(sol.residual_inf),
                        error: None,
                    };
                    last = Some(sol);
                    pt
                }
                Err(e) => SweepPoint {
                    p,
                    hbar: None,
                    residual: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::make_mechanical;
    use crate::potential::{Potential, PotentialSpec};

    fn pendulum(n: usize, eps: f64, p: f64) -> CellSpec {
        let v = Potential::from_spec(&PotentialSpec::Cosine { amplitude: 1.0 }, 1).unwrap();
        CellSpec::new(make_mechanical(v).unwrap(), &[p], eps, TorusGrid::new(&[n]).unwrap()).unwrap()
    }

    #[test]
    fn free_particle_is_exact() {
        let spec = CellSpec::new(
            make_mechanical(Potential::zero(1)).unwrap(),
            &[0.7],
            0.1,
            TorusGrid::new(&[64]).unwrap(),
        )
        .unwrap();
        let sol = solve_cell(&spec, None, &SolverOptions::default()).unwrap();
        assert!((sol.hbar - 0.245).abs() < 1e-14);
        assert!(sol.u.max_abs() < 1e-14);
    }

    #[test]
    fn pendulum_residual_and_normalization() {
        let spec = pendulum(256, 0.2, 0.5);
        let sol = solve_cell(&spec, None, &SolverOptions::default()).unwrap();
        assert!(sol.residual_inf <= 1e-10);
        let r = cell_residual(&spec, &sol.u.values, sol.hbar);
        assert!(inf_norm(&r) <= 1e-10);
        assert!(sol.u.values.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn discounted_limit_approaches_hbar() {
        let spec = pendulum(128, 0.3, 0.2);
        let sol = solve_cell(&spec, None, &SolverOptions::default()).unwrap();
        let mut prev = f64::INFINITY;
        for lambda in [1e-1, 1e-2, 1e-3] {
            let d = solve_discounted(&spec, lambda, None, &SolverOptions::default()).unwrap();
            let mean = d.v.values.iter().sum::<f64>() / 128.0;
            let err = (-lambda * mean - sol.hbar).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn dpu_identity_shrinks_with_step() {
        let spec = pendulum(128, 0.3, 0.4);
        let opts = SolverOptions::default();
        let sol = solve_cell(&spec, None, &opts).unwrap();
        let a = dp_u(&sol, Some(2e-2), &opts).unwrap();
        let b = dp_u(&sol, Some(1e-2), &opts).unwrap();
        assert!(b.identity_residual < 0.5 * a.identity_residual);
    }

    #[test]
    fn rejects_bad_epsilon() {
        let g = TorusGrid::new(&[16]).unwrap();
        let m = make_mechanical(Potential::zero(1)).unwrap();
        assert!(CellSpec::new(m.clone(), &[0.0], 0.0, g.clone()).is_err());
        assert!(CellSpec::new(m, &[0.0], -1.0, g).is_err());
    }
}
