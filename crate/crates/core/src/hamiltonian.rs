//! Hamiltonian families H(x, p) with analytic first derivatives and
//! momentum Hessian.

use crate::error::{Error, Result};
use crate::potential::{Potential, PotentialSpec, TrigTerm};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const TAU: f64 = 2.0 * PI;

/// Everything the solvers need at one phase-space point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Eval {
    pub h: f64,
    pub hp: [f64; 2],
    pub hx: [f64; 2],
    pub hpp: [[f64; 2]; 2],
}

/// Parameters of the quartic family
/// kappa (q - floor)(q^3 - 3q - A cos 2 pi x), q = p - shift,
/// whose zero level set contains an S-shaped curve around the torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldShape {
    pub scale: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub shift: f64,
    pub floor: f64,
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Quadratic,
    QuasiconvexSquare,
    /// H = f(|p|^2) + V, f(q) = sum_k c[k] q^(k+1)
    Radial(Vec<f64>),
    /// H = sum_k c[k] p^k + V
    Poly1d(Vec<f64>),
    /// H = p (p - psi'(x)); the potential slot holds psi
    Nonunique,
    Fold(FoldShape),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianModel {
    dim: usize,
    kind: Kind,
    v: Potential,
    label: String,
}

/// Serializable description of a model, used by configs and bindings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Mechanical {
        dim: usize,
        potential: PotentialSpec,
    },
    QuasiconvexSquare {
        dim: usize,
        potential: PotentialSpec,
    },
    Radial {
        dim: usize,
        /// coefficients of s^2, s^4, ...
        profile: Vec<f64>,
        s_max: f64,
        potential: PotentialSpec,
    },
    OneDimNonconvex {
        /// coefficients of p^0, p^1, ...
        coefficients: Vec<f64>,
        potential: PotentialSpec,
    },
    Nonuniqueness {
        psi: PotentialSpec,
    },
    ConservedSum {
        profile: Vec<f64>,
        s_max: f64,
        /// V1 as terms in the single variable x1 + x2
        terms: Vec<TrigTerm>,
    },
    Counterexample(FoldShape),
}

impl ModelSpec {
    pub fn build(&self) -> Result<HamiltonianModel> {
        match self {
            ModelSpec::Mechanical { dim, potential } => make_mechanical(Potential::from_spec(potential, *dim)?),
            ModelSpec::QuasiconvexSquare { dim, potential } => {
                make_quasiconvex_square(Potential::from_spec(potential, *dim)?)
            }
            ModelSpec::Radial {
                dim,
                profile,
                s_max,
                potential,
            } => make_radial(profile, *s_max, Potential::from_spec(potential, *dim)?),
            ModelSpec::OneDimNonconvex {
                coefficients,
                potential,
            } => make_1d_nonconvex(coefficients, Potential::from_spec(potential, 1)?),
            ModelSpec::Nonuniqueness { psi } => make_nonuniqueness(Potential::from_spec(psi, 1)?),
            ModelSpec::ConservedSum { profile, s_max, terms } => make_conserved_sum(profile, *s_max, terms),
            ModelSpec::Counterexample(shape) => make_counterexample(*shape),
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("dimension {dim} not supported")))
    }
}

pub fn make_mechanical(v: Potential) -> Result<HamiltonianModel> {
    check_dim(v.dim())?;
    Ok(HamiltonianModel {
        dim: v.dim(),
        kind: Kind::Quadratic,
        label: "mechanical".into(),
        v,
    })
}

pub fn make_quasiconvex_square(v: Potential) -> Result<HamiltonianModel> {
    check_dim(v.dim())?;
    Ok(HamiltonianModel {
        dim: v.dim(),
        kind: Kind::QuasiconvexSquare,
        label: "quasiconvex-square".into(),
        v,
    })
}

fn poly(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |s, &a| s * t + a)
}

fn poly_deriv(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &a)| k as f64 * a).collect()
}

/// Radial part Hr(s) = sum_k c[k] s^(2k+2); requires Hr' > 0 on (0, s_max].
pub fn make_radial(profile: &[f64], s_max: f64, v: Potential) -> Result<HamiltonianModel> {
    check_dim(v.dim())?;
    validate_radial(profile, s_max)?;
    Ok(HamiltonianModel {
        dim: v.dim(),
        kind: Kind::Radial(profile.to_vec()),
        label: "radial".into(),
        v,
    })
}

fn validate_radial(profile: &[f64], s_max: f64) -> Result<()> {
    if profile.is_empty() || !(s_max > 0.0) {
        return Err(Error::InvalidProfile("empty profile or non-positive s_max".into()));
    }
    let lead = profile.iter().rev().find(|c| **c != 0.0).copied().unwrap_or(0.0);
    if lead <= 0.0 {
        return Err(Error::InvalidProfile("leading coefficient must be positive".into()));
    }
    // f'(q) in q = s^2 must stay positive on (0, s_max^2]
    let mut fq = vec![0.0];
    fq.extend_from_slice(profile);
    let d = poly_deriv(&fq);
    let samples = 4000;
    for i in 0..=samples {
        let s = s_max * (i.max(1) as f64) / samples as f64;
        let slope = 2.0 * s * poly(&d, s * s);
        if !(slope > 0.0) {
            return Err(Error::InvalidProfile(format!(
                "H_r'({s:.4}) = {slope:.3e} is not positive"
            )));
        }
    }
    Ok(())
}

/// One-dimensional H = P(p) + V(x) with even degree, positive leading
/// coefficient and a single critical point of P.
pub fn make_1d_nonconvex(coefficients: &[f64], v: Potential) -> Result<HamiltonianModel> {
    if v.dim() != 1 {
        return Err(Error::InvalidArgument("one-dimensional model".into()));
    }
    let deg = coefficients.iter().rposition(|c| *c != 0.0).unwrap_or(0);
    if deg < 2 || deg % 2 == 1 || coefficients[deg] <= 0.0 {
        return Err(Error::InvalidProfile(
            "polynomial must have even degree and positive leading coefficient".into(),
        ));
    }
    let d = poly_deriv(&coefficients[..=deg]);
    let bound = 1.0
        + d[..d.len() - 1]
            .iter()
            .map(|c| (c / d[d.len() - 1]).abs())
            .fold(0.0, f64::max);
    let n = 200_000;
    let mut changes = 0;
    let mut prev = poly(&d, -bound);
    for i in 1..=n {
        let p = -bound + 2.0 * bound * i as f64 / n as f64;
        let cur = poly(&d, p);
        if (prev < 0.0 && cur >= 0.0) || (prev > 0.0 && cur <= 0.0) {
            changes += 1;
        }
        prev = cur;
    }
    if changes != 1 {
        return Err(Error::InvalidProfile(format!(
            "momentum part has {changes} critical points, need exactly one"
        )));
    }
    Ok(HamiltonianModel {
        dim: 1,
        kind: Kind::Poly1d(coefficients[..=deg].to_vec()),
        label: "onedim-nonconvex".into(),
        v,
    })
}

/// H = p (p - psi'(x)); both u = 0 and u = psi solve the inviscid problem at P = 0.
pub fn make_nonuniqueness(psi: Potential) -> Result<HamiltonianModel> {
    if psi.dim() != 1 {
        return Err(Error::InvalidArgument("one-dimensional model".into()));
    }
    Ok(HamiltonianModel {
        dim: 1,
        kind: Kind::Nonunique,
        label: "nonuniqueness".into(),
        v: psi,
    })
}

/// Two-dimensional H = Hr(|p|) + V1(x1 + x2).
pub fn make_conserved_sum(profile: &[f64], s_max: f64, terms: &[TrigTerm]) -> Result<HamiltonianModel> {
    let lifted: Vec<TrigTerm> = terms
        .iter()
        .map(|t| {
            if t.k.len() != 1 {
                return Err(Error::InvalidArgument(
                    "conserved-sum potential terms take a single wave number".into(),
                ));
            }
            Ok(TrigTerm {
                k: vec![t.k[0], t.k[0]],
                cos: t.cos,
                sin: t.sin,
            })
        })
        .collect::<Result<_>>()?;
    let v = Potential::from_spec(
        &PotentialSpec::TrigPolynomial {
            constant: 0.0,
            terms: lifted,
        },
        2,
    )?;
    let mut m = make_radial(profile, s_max, v)?;
    m.label = "conserved-sum".into();
    Ok(m)
}

/// Real root of q^3 - 3q + a = 0 below -1 (exists for a > 2).
fn lowest_fold_root(a: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0 - a.abs(), -1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid * mid - 3.0 * mid + a < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn make_counterexample(shape: FoldShape) -> Result<HamiltonianModel> {
    let bad = |reason: &str| Error::InvalidShape {
        x: f64::NAN,
        p: f64::NAN,
        reason: reason.into(),
    };
    if !(shape.scale > 0.0) {
        return Err(bad("scale must be positive"));
    }
    if !(shape.amplitude > 2.0) {
        return Err(bad("amplitude must exceed 2 for the level set to fold"));
    }
    if !(shape.floor < lowest_fold_root(shape.amplitude)) {
        return Err(bad("floor must lie below the folded branch"));
    }
    let m = HamiltonianModel {
        dim: 1,
        kind: Kind::Fold(shape),
        label: "counterexample".into(),
        v: Potential::zero(1),
    };
    m.check_zero_level_set()?;
    Ok(m)
}

impl HamiltonianModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn potential(&self) -> &Potential {
        &self.v
    }

    /// True for families that are convex in p for every x.
    pub fn is_convex(&self) -> bool {
        match &self.kind {
            Kind::Quadratic | Kind::Nonunique => true,
            Kind::QuasiconvexSquare | Kind::Fold(_) => false,
            Kind::Radial(c) => {
                // f(|p|^2) is convex iff f' >= 0 and f' + 2 q f'' >= 0
                let mut fq = vec![0.0];
                fq.extend_from_slice(c);
                let d1 = poly_deriv(&fq);
                let d2 = poly_deriv(&d1);
                (0..=2000).all(|i| {
                    let q = 25.0 * i as f64 / 2000.0;
                    poly(&d1, q) >= 0.0 && poly(&d1, q) + 2.0 * q * poly(&d2, q) >= 0.0
                })
            }
            Kind::Poly1d(c) => {
                let d2 = poly_deriv(&poly_deriv(c));
                (0..=2000).all(|i| poly(&d2, -5.0 + 10.0 * i as f64 / 2000.0) >= 0.0)
            }
        }
    }

    /// Radial profile coefficients (of s^2, s^4, ...) if the model has one.
    pub fn radial_profile(&self) -> Option<&[f64]> {
        match &self.kind {
            Kind::Radial(c) => Some(c),
            _ => None,
        }
    }

    pub fn eval(&self, x: [f64; 2], p: [f64; 2]) -> Eval {
        let d = self.dim;
        let p = if d == 1 { [p[0], 0.0] } else { p };
        let q2 = p[0] * p[0] + p[1] * p[1];
        let mut e = Eval::default();
        match &self.kind {
            Kind::Quadratic => {
                e.h = 0.5 * q2 + self.v.value(x);
                e.hp = p;
                e.hx = self.v.gradient(x);
                e.hpp = [[1.0, 0.0], [0.0, 1.0]];
            }
            Kind::QuasiconvexSquare => {
                let w = q2 + self.v.value(x);
                let g = self.v.gradient(x);
                e.h = w * w;
                e.hp = [4.0 * w * p[0], 4.0 * w * p[1]];
                e.hx = [2.0 * w * g[0], 2.0 * w * g[1]];
                for i in 0..2 {
                    for j in 0..2 {
                        e.hpp[i][j] = 8.0 * p[i] * p[j] + if i == j { 4.0 * w } else { 0.0 };
                    }
                }
            }
            Kind::Radial(c) => {
                // f(q) = sum c_k q^(k+1)
                let (mut f, mut f1, mut f2) = (0.0, 0.0, 0.0);
                for (k, &a) in c.iter().enumerate() {
                    let n = (k + 1) as f64;
                    f += a * q2.powi(k as i32 + 1);
                    f1 += a * n * q2.powi(k as i32);
                    if k > 0 {
                        f2 += a * n * (n - 1.0) * q2.powi(k as i32 - 1);
                    }
                }
                e.h = f + self.v.value(x);
                e.hp = [2.0 * f1 * p[0], 2.0 * f1 * p[1]];
                e.hx = self.v.gradient(x);
                for i in 0..2 {
                    for j in 0..2 {
                        e.hpp[i][j] = 4.0 * f2 * p[i] * p[j] + if i == j { 2.0 * f1 } else { 0.0 };
                    }
                }
            }
            Kind::Poly1d(c) => {
                let t = p[0];
                let d1 = poly_deriv(c);
                let d2 = poly_deriv(&d1);
                e.h = poly(c, t) + self.v.value(x);
                e.hp[0] = poly(&d1, t);
                e.hpp[0][0] = poly(&d2, t);
                e.hx = self.v.gradient(x);
            }
            Kind::Nonunique => {
                let dpsi = self.v.gradient(x)[0];
                let d2psi = self.v.hessian(x)[0][0];
                e.h = p[0] * (p[0] - dpsi);
                e.hp[0] = 2.0 * p[0] - dpsi;
                e.hpp[0][0] = 2.0;
                e.hx[0] = -p[0] * d2psi;
            }
            Kind::Fold(s) => {
                let q = p[0] - s.shift;
                let c = (TAU * x[0]).cos();
                let g = q * q * q - 3.0 * q - s.amplitude * c;
                let l = q - s.floor;
                let gq = 3.0 * q * q - 3.0;
                e.h = s.scale * l * g;
                e.hp[0] = s.scale * (g + l * gq);
                e.hpp[0][0] = s.scale * (2.0 * gq + l * 6.0 * q);
                e.hx[0] = s.scale * l * s.amplitude * TAU * (TAU * x[0]).sin();
            }
        }
        if d == 1 {
            e.hp[1] = 0.0;
            e.hx[1] = 0.0;
            e.hpp[0][1] = 0.0;
            e.hpp[1][0] = 0.0;
            e.hpp[1][1] = 0.0;
        }
        e
    }

    #[inline]
    pub fn value(&self, x: [f64; 2], p: [f64; 2]) -> f64 {
        self.eval(x, p).h
    }

    #[inline]
    pub fn grad_p(&self, x: [f64; 2], p: [f64; 2]) -> [f64; 2] {
        self.eval(x, p).hp
    }

    #[inline]
    pub fn grad_x(&self, x: [f64; 2], p: [f64; 2]) -> [f64; 2] {
        self.eval(x, p).hx
    }

    #[inline]
    pub fn hess_pp(&self, x: [f64; 2], p: [f64; 2]) -> [[f64; 2]; 2] {
        self.eval(x, p).hpp
    }

    fn directions(&self) -> Vec<[f64; 2]> {
        if self.dim == 1 {
            vec![[1.0, 0.0], [-1.0, 0.0]]
        } else {
            (0..32)
                .map(|k| {
                    let t = TAU * k as f64 / 32.0;
                    [t.cos(), t.sin()]
                })
                .collect()
        }
    }

    fn x_samples(&self, per_axis: usize) -> Vec<[f64; 2]> {
        let m1 = if self.dim > 1 { per_axis } else { 1 };
        let mut out = Vec::with_capacity(per_axis * m1);
        for j in 0..m1 {
            for i in 0..per_axis {
                out.push([i as f64 / per_axis as f64, j as f64 / per_axis as f64]);
            }
        }
        out
    }

    /// Radius beyond which H(x, p) exceeds max_x H(x, P) for every sampled
    /// x; the viscosity gradients and the sublevel sets at the effective
    /// level stay inside this ball.
    pub fn momentum_bound_hint(&self, big_p: [f64; 2]) -> f64 {
        let xs = self.x_samples(if self.dim == 1 { 256 } else { 48 });
        let level = xs
            .iter()
            .map(|&x| self.value(x, big_p))
            .fold(f64::NEG_INFINITY, f64::max);
        let dirs = self.directions();
        let mut r_ok = 0.0f64;
        for &x in &xs {
            for dvec in &dirs {
                // largest sampled radius where H <= level
                let mut last_below = 0.0;
                let rmax = 64.0;
                let steps = 2048;
                for s in 0..=steps {
                    let r = rmax * s as f64 / steps as f64;
                    if self.value(x, [r * dvec[0], r * dvec[1]]) <= level {
                        last_below = r;
                    }
                }
                r_ok = r_ok.max(last_below);
            }
        }
        r_ok + 64.0 / 2048.0
    }

    /// Sampled check of the coercivity condition that
    /// H^2/2 + D_xH . p grows without bound: its minimum over |p| = R for
    /// an increasing sequence of radii.
    pub fn h3_scan(&self, radii: &[f64]) -> H3Report {
        let xs = self.x_samples(if self.dim == 1 { 128 } else { 32 });
        let dirs = self.directions();
        let minima: Vec<f64> = radii
            .iter()
            .map(|&r| {
                let mut m = f64::INFINITY;
                for &x in &xs {
                    for d in &dirs {
                        let p = [r * d[0], r * d[1]];
                        let e = self.eval(x, p);
                        let val = 0.5 * e.h * e.h + e.hx[0] * p[0] + e.hx[1] * p[1];
                        m = m.min(val);
                    }
                }
                m
            })
            .collect();
        let growing = minima.windows(2).all(|w| w[1] > w[0]) && minima.last().is_some_and(|m| *m > 0.0);
        H3Report {
            radii: radii.to_vec(),
            minima,
            growing,
        }
    }

    fn check_zero_level_set(&self) -> Result<()> {
        // dense sampling of {H = 0}: non-degenerate, bounded, not a graph
        let nx = 720;
        let (pmin, pmax, np) = (-12.0, 12.0, 24_000);
        let mut folded = false;
        for i in 0..nx {
            let x = [i as f64 / nx as f64, 0.0];
            let mut roots = 0;
            let mut prev = self.value(x, [pmin, 0.0]);
            if prev <= 0.0 || self.value(x, [pmax, 0.0]) <= 0.0 {
                return Err(Error::InvalidShape {
                    x: x[0],
                    p: pmin,
                    reason: "zero level set reaches the sampling box".into(),
                });
            }
            for k in 1..=np {
                let p = pmin + (pmax - pmin) * k as f64 / np as f64;
                let cur = self.value(x, [p, 0.0]);
                if (prev > 0.0) != (cur > 0.0) {
                    roots += 1;
                    let e = self.eval(x, [p, 0.0]);
                    let grad = e.hx[0].hypot(e.hp[0]);
                    if grad < 1e-6 {
                        return Err(Error::InvalidShape {
                            x: x[0],
                            p,
                            reason: "degenerate point on the zero level set".into(),
                        });
                    }
                }
                prev = cur;
            }
            if roots > 2 {
                folded = true;
            }
        }
        if !folded {
            return Err(Error::InvalidShape {
                x: f64::NAN,
                p: f64::NAN,
                reason: "zero level set is a graph over x".into(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct H3Report {
    pub radii: Vec<f64>,
    pub minima: Vec<f64>,
    pub growing: bool,
}
