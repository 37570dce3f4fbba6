//! Smooth test functions phi(x, p) = X(x) S(p): trigonometric modes in x
//! times a constant, a compact bump or a linear-times-bump in p.

use std::f64::consts::PI;

const TAU: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Trig {
    Cos,
    Sin,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XMode {
    pub k: [f64; 2],
    pub kind: Trig,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PShape {
    One,
    /// (1 - |p|^2/R^2)^3 inside the ball of radius R
    Bump {
        radius: f64,
    },
    /// p_axis times the bump
    LinearBump {
        radius: f64,
        axis: usize,
    },
}

/// Value and derivatives of a test function at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub dx: [f64; 2],
    pub dp: [f64; 2],
    pub dxx: [[f64; 2]; 2],
    pub dxp: [[f64; 2]; 2],
    pub dpp: [[f64; 2]; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestFunction {
    pub mode: XMode,
    pub shape: PShape,
}

impl XMode {
    /// value, gradient and Hessian
    fn jet(&self, x: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let t = TAU * (self.k[0] * x[0] + self.k[1] * x[1]);
        let (v, d1, d2) = match self.kind {
            Trig::Cos => (t.cos(), -t.sin(), -t.cos()),
            Trig::Sin => (t.sin(), t.cos(), -t.sin()),
        };
        let g = [TAU * self.k[0] * d1, TAU * self.k[1] * d1];
        let mut h = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                h[a][b] = TAU * TAU * self.k[a] * self.k[b] * d2;
            }
        }
        (v, g, h)
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.jet(x).0
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        self.jet(x).1
    }
}

impl PShape {
    fn jet(&self, p: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let bump = |r: f64| {
            let s = (p[0] * p[0] + p[1] * p[1]) / (r * r);
            if s >= 1.0 {
                return (0.0, [0.0; 2], [[0.0; 2]; 2]);
            }
            let w = 1.0 - s;
            let v = w * w * w;
            // d/dp_a = -6 w^2 p_a / r^2
            let c1 = -6.0 * w * w / (r * r);
            let g = [c1 * p[0], c1 * p[1]];
            let c2 = 24.0 * w / (r * r * r * r);
            let mut h = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    h[a][b] = c2 * p[a] * p[b] + if a == b { c1 } else { 0.0 };
                }
            }
            (v, g, h)
        };
        match *self {
            PShape::One => (1.0, [0.0; 2], [[0.0; 2]; 2]),
            PShape::Bump { radius } => bump(radius),
            PShape::LinearBump { radius, axis } => {
                let (b, bg, bh) = bump(radius);
                let l = p[axis];
                let mut g = [l * bg[0], l * bg[1]];
                g[axis] += b;
                let mut h = [[0.0; 2]; 2];
                for a in 0..2 {
                    for c in 0..2 {
                        h[a][c] =
                            l * bh[a][c] + if a == axis { bg[c] } else { 0.0 } + if c == axis { bg[a] } else { 0.0 };
                    }
                }
                (l * b, g, h)
            }
        }
    }
}

impl TestFunction {
    pub fn jet(&self, x: [f64; 2], p: [f64; 2]) -> Jet {
        let (xv, xg, xh) = self.mode.jet(x);
        let (pv, pg, ph) = self.shape.jet(p);
        let mut j = Jet {
            v: xv * pv,
            ..Jet::default()
        };
        for a in 0..2 {
            j.dx[a] = xg[a] * pv;
            j.dp[a] = xv * pg[a];
            for b in 0..2 {
                j.dxx[a][b] = xh[a][b] * pv;
                j.dxp[a][b] = xg[a] * pg[b];
                j.dpp[a][b] = xv * ph[a][b];
            }
        }
        j
    }

    pub fn name(&self) -> String {
        let t = match self.mode.kind {
            Trig::Cos => "cos",
            Trig::Sin => "sin",
        };
        let s = match self.shape {
            PShape::One => "one".to_string(),
            PShape::Bump { .. } => "bump".to_string(),
            PShape::LinearBump { axis, .. } => format!("p{axis}bump"),
        };
        format!("{t}({},{})*{s}", self.mode.k[0], self.mode.k[1])
    }
}

/// The eight x-modes used for the (po)-type residuals.
pub fn x_modes(dim: usize) -> Vec<XMode> {
    let ks: Vec<[f64; 2]> = if dim == 1 {
        (1..=4).map(|k| [k as f64, 0.0]).collect()
    } else {
        vec![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]]
    };
    ks.into_iter()
        .flat_map(|k| [XMode { k, kind: Trig::Cos }, XMode { k, kind: Trig::Sin }])
        .collect()
}

/// 8 x-modes times 3 p-shapes; `radius` should exceed the momentum range.
pub fn catalog(dim: usize, radius: f64) -> Vec<TestFunction> {
    let shapes = [
        PShape::One,
        PShape::Bump { radius },
        PShape::LinearBump { radius, axis: 0 },
    ];
    let mut out = Vec::with_capacity(24);
    for shape in shapes {
        for mode in x_modes(dim) {
            out.push(TestFunction { mode, shape });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jets_match_finite_differences() {
        let h = 1e-6;
        for f in catalog(2, 3.0) {
            let x = [0.13, 0.61];
            let p = [0.7, -0.4];
            let j = f.jet(x, p);
            for a in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[a] += h;
                xm[a] -= h;
                let mut pp = p;
                let mut pm = p;
                pp[a] += h;
                pm[a] -= h;
                let fdx = (f.jet(xp, p).v - f.jet(xm, p).v) / (2.0 * h);
                let fdp = (f.jet(x, pp).v - f.jet(x, pm).v) / (2.0 * h);
                assert!((fdx - j.dx[a]).abs() < 1e-6, "{}", f.name());
                assert!((fdp - j.dp[a]).abs() < 1e-6, "{}", f.name());
                for b in 0..2 {
                    let dxx = (f.jet(xp, p).dx[b] - f.jet(xm, p).dx[b]) / (2.0 * h);
                    let dpp = (f.jet(x, pp).dp[b] - f.jet(x, pm).dp[b]) / (2.0 * h);
                    let dxp = (f.jet(x, pp).dx[b] - f.jet(x, pm).dx[b]) / (2.0 * h);
                    assert!((dxx - j.dxx[a][b]).abs() < 1e-4, "{}", f.name());
                    assert!((dpp - j.dpp[a][b]).abs() < 1e-5, "{}", f.name());
                    assert!((dxp - j.dxp[b][a]).abs() < 1e-5, "{}", f.name());
                }
            }
        }
    }

    #[test]
    fn catalog_sizes() {
        assert_eq!(catalog(1, 2.0).len(), 24);
        assert_eq!(catalog(2, 2.0).len(), 24);
    }
}
