use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const TAU: f64 = 2.0 * PI;

/// One term a cos(2 pi k.x) + b sin(2 pi k.x).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub k: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    /// amplitude * sum over axes of cos(2 pi x_a)
    Cosine {
        amplitude: f64,
    },
    TrigPolynomial {
        #[serde(default)]
        constant: f64,
        terms: Vec<TrigTerm>,
    },
    /// Samples at x = j/M of a 1-periodic function; evaluated through its
    /// trigonometric interpolant.
    Tabulated {
        values: Vec<f64>,
    },
}

/// Smooth periodic potential, always held as a trigonometric polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    dim: usize,
    constant: f64,
    terms: Vec<([f64; 2], f64, f64)>,
}

impl Potential {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            constant: 0.0,
            terms: Vec::new(),
        }
    }

    pub fn from_spec(spec: &PotentialSpec, dim: usize) -> Result<Self> {
        let mut v = Self::zero(dim);
        match spec {
            PotentialSpec::Zero => {}
            PotentialSpec::Cosine { amplitude } => {
                for a in 0..dim {
                    let mut k = [0.0; 2];
                    k[a] = 1.0;
                    v.terms.push((k, *amplitude, 0.0));
                }
            }
            PotentialSpec::TrigPolynomial { constant, terms } => {
                v.constant = *constant;
                for t in terms {
                    if t.k.len() != dim {
                        return Err(Error::InvalidArgument(format!(
                            "wave vector {:?} does not match dimension {dim}",
                            t.k
                        )));
                    }
                    let mut k = [0.0; 2];
                    for (a, &ka) in t.k.iter().enumerate() {
                        k[a] = ka as f64;
                    }
                    v.terms.push((k, t.cos, t.sin));
                }
            }
            PotentialSpec::Tabulated { values } => {
                if dim != 1 {
                    return Err(Error::InvalidArgument(
                        "tabulated potentials are one-dimensional".into(),
                    ));
                }
                let m = values.len();
                if m < 4 {
                    return Err(Error::InvalidArgument("need at least 4 samples".into()));
                }
                let mf = m as f64;
                v.constant = values.iter().sum::<f64>() / mf;
                for k in 1..=m / 2 {
                    let (mut a, mut b) = (0.0, 0.0);
                    for (j, &f) in values.iter().enumerate() {
                        let t = TAU * (k * j) as f64 / mf;
                        a += f * t.cos();
                        b += f * t.sin();
                    }
                    let nyquist = 2 * k == m;
                    let w = if nyquist { 1.0 / mf } else { 2.0 / mf };
                    v.terms
                        .push(([k as f64, 0.0], a * w, if nyquist { 0.0 } else { b * w }));
                }
            }
        }
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.iter().all(|t| t.1 == 0.0 && t.2 == 0.0)
    }

    #[inline]
    fn phase(&self, k: &[f64; 2], x: [f64; 2]) -> f64 {
        TAU * (k[0] * x[0] + if self.dim > 1 { k[1] * x[1] } else { 0.0 })
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.terms.iter().fold(self.constant, |s, (k, a, b)| {
            let t = self.phase(k, x);
            s + a * t.cos() + b * t.sin()
        })
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (k, a, b) in &self.terms {
            let t = self.phase(k, x);
            let d = TAU * (-a * t.sin() + b * t.cos());
            g[0] += d * k[0];
            g[1] += d * k[1];
        }
        g
    }

    pub fn hessian(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let mut h = [[0.0; 2]; 2];
        for (k, a, b) in &self.terms {
            let t = self.phase(k, x);
            let d = -TAU * TAU * (a * t.cos() + b * t.sin());
            for i in 0..2 {
                for j in 0..2 {
                    h[i][j] += d * k[i] * k[j];
                }
            }
        }
        h
    }

    /// Max and min over a sampling of the torus.
    pub fn range(&self, samples: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let s1 = if self.dim > 1 { samples } else { 1 };
        for i in 0..samples {
            for j in 0..s1 {
                let v = self.value([i as f64 / samples as f64, j as f64 / samples as f64]);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_interpolates_samples() {
        let m = 16;
        let values: Vec<f64> = (0..m)
            .map(|j| {
                let x = j as f64 / m as f64;
                (TAU * x).cos() + 0.3 * (2.0 * TAU * x).sin() + 0.1 * (8.0 * TAU * x).cos()
            })
            .collect();
        let v = Potential::from_spec(&PotentialSpec::Tabulated { values: values.clone() }, 1).unwrap();
        for (j, f) in values.iter().enumerate() {
            assert!((v.value([j as f64 / m as f64, 0.0]) - f).abs() < 1e-12);
        }
        let x = 0.123;
        let exact = (TAU * x).cos() + 0.3 * (2.0 * TAU * x).sin() + 0.1 * (8.0 * TAU * x).cos();
        assert!((v.value([x, 0.0]) - exact).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let spec = PotentialSpec::TrigPolynomial {
            constant: 0.5,
            terms: vec![
                TrigTerm {
                    k: vec![1, 2],
                    cos: 0.7,
                    sin: -0.2,
                },
                TrigTerm {
                    k: vec![0, 1],
                    cos: 0.0,
                    sin: 1.1,
                },
            ],
        };
        let v = Potential::from_spec(&spec, 2).unwrap();
        let x = [0.31, 0.77];
        let h = 1e-6;
        let g = v.gradient(x);
        let hs = v.hessian(x);
        for a in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            assert!(((v.value(xp) - v.value(xm)) / (2.0 * h) - g[a]).abs() < 1e-6);
            let gp = v.gradient(xp);
            let gm = v.gradient(xm);
            for b in 0..2 {
                assert!(((gp[b] - gm[b]) / (2.0 * h) - hs[a][b]).abs() < 1e-5);
            }
        }
    }
}
