//! Uniform periodic grids on the unit torus and the finite-difference
//! operators used everywhere else.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Smallest admissible number of nodes per axis.
pub const MIN_RESOLUTION: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    n: [usize; 2],
    dim: usize,
}

impl TorusGrid {
    pub fn new(resolution: &[usize]) -> Result<Self> {
        let dim = resolution.len();
        if dim == 0 || dim > 2 {
            return Err(Error::InvalidArgument(format!(
                "grid dimension must be 1 or 2, got {dim}"
            )));
        }
        if let Some(&bad) = resolution.iter().find(|&&r| r < MIN_RESOLUTION) {
            return Err(Error::InvalidArgument(format!(
                "resolution {bad} is below the minimum {MIN_RESOLUTION}"
            )));
        }
        let mut n = [1, 1];
        n[..dim].copy_from_slice(resolution);
        Ok(Self { n, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> &[usize] {
        &self.n[..self.dim]
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        1.0 / self.n[axis] as f64
    }

    /// Volume h^n of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        [node % self.n[0], node / self.n[0]]
    }

    pub fn node(&self, idx: [usize; 2]) -> usize {
        idx[0] + self.n[0] * idx[1]
    }

    pub fn coord(&self, node: usize) -> [f64; 2] {
        let m = self.multi_index(node);
        [
            m[0] as f64 * self.spacing(0),
            if self.dim > 1 {
                m[1] as f64 * self.spacing(1)
            } else {
                0.0
            },
        ]
    }

    /// Periodic neighbour of `node` shifted by `offset` along `axis`.
    #[inline]
    pub fn shift(&self, node: usize, axis: usize, offset: isize) -> usize {
        let n0 = self.n[0];
        if axis == 0 {
            let i = node % n0;
            let base = node - i;
            base + (i as isize + offset).rem_euclid(n0 as isize) as usize
        } else {
            let j = node / n0;
            let i = node % n0;
            let n1 = self.n[1] as isize;
            i + n0 * (j as isize + offset).rem_euclid(n1) as usize
        }
    }

    /// Position of every node in an ordering whose nearest-neighbour
    /// couplings stay within a narrow band, wrap-around included.
    ///
    /// The slowest axis is visited as 0, N-1, 1, N-2, ... so that the
    /// periodic seam becomes a short-range coupling.
    pub fn band_order(&self) -> Vec<usize> {
        let slow = self.dim - 1;
        let ns = self.n[slow];
        let mut pos_of_layer = vec![0usize; ns];
        let (mut lo, mut hi) = (0usize, ns - 1);
        let mut k = 0;
        while lo <= hi {
            pos_of_layer[lo] = k;
            k += 1;
            if hi != lo {
                pos_of_layer[hi] = k;
                k += 1;
            }
            lo += 1;
            if hi == 0 {
                break;
            }
            hi -= 1;
        }
        let inner = if self.dim == 2 { self.n[0] } else { 1 };
        (0..self.len())
            .map(|node| {
                let m = self.multi_index(node);
                let layer = if self.dim == 2 { m[1] } else { m[0] };
                let within = if self.dim == 2 { m[0] } else { 0 };
                pos_of_layer[layer] * inner + within
            })
            .collect()
    }

    /// `band_order` of the torus translated so that `anchor` takes the
    /// last position. Translations keep the bandwidth.
    pub fn band_order_anchored(&self, anchor: usize) -> Vec<usize> {
        let base = self.band_order();
        let last = base.iter().position(|&p| p == self.len() - 1).expect("nonempty");
        let (a, l) = (self.multi_index(anchor), self.multi_index(last));
        (0..self.len())
            .map(|node| {
                let m = self.multi_index(node);
                let mut t = [0usize; 2];
                for ax in 0..self.dim {
                    t[ax] = (m[ax] + l[ax] + self.n[ax] - a[ax]) % self.n[ax];
                }
                base[self.node(t)]
            })
            .collect()
    }

    /// Number of distinct entries of a symmetric dim x dim matrix.
    pub fn sym_len(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    /// Storage slot of entry (a, b) of a symmetric matrix.
    pub fn sym_index(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        if self.dim == 1 {
            0
        } else {
            a + b
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rank {
    Scalar,
    Vector,
    SymMatrix,
}

impl Rank {
    pub fn components(self, dim: usize) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => dim,
            Rank::SymMatrix => dim * (dim + 1) / 2,
        }
    }
}

/// Node-major samples of a scalar, vector or symmetric-matrix field.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub grid: TorusGrid,
    pub rank: Rank,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: &TorusGrid, rank: Rank) -> Self {
        let len = grid.len() * rank.components(grid.dim());
        Self {
            grid: grid.clone(),
            rank,
            values: vec![0.0; len],
        }
    }

    pub fn new(grid: &TorusGrid, rank: Rank, values: Vec<f64>) -> Result<Self> {
        let expected = grid.len() * rank.components(grid.dim());
        if values.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "field has {} values, grid needs {expected}",
                values.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            rank,
            values,
        })
    }

    pub fn scalar(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, Rank::Scalar, values)
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coord(i))).collect();
        Self {
            grid: grid.clone(),
            rank: Rank::Scalar,
            values,
        }
    }

    pub fn components(&self) -> usize {
        self.rank.components(self.grid.dim())
    }

    pub fn get(&self, node: usize, comp: usize) -> f64 {
        self.values[node * self.components() + comp]
    }

    /// Component `comp` as a contiguous vector over nodes.
    pub fn component(&self, comp: usize) -> Vec<f64> {
        let c = self.components();
        self.values.iter().skip(comp).step_by(c).copied().collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn require_scalar(&self, what: &str) -> Result<()> {
        if self.rank != Rank::Scalar {
            return Err(Error::InvalidArgument(format!(
                "{what} needs a scalar field, got {:?}",
                self.rank
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientMode {
    Central,
    Upwind,
}

#[derive(Clone, Debug)]
pub enum Gradient {
    Central(GridField),
    Upwind { forward: GridField, backward: GridField },
}

pub fn central_diff(grid: &TorusGrid, v: &[f64], axis: usize) -> Vec<f64> {
    let s = 0.5 / grid.spacing(axis);
    (0..grid.len())
        .map(|i| (v[grid.shift(i, axis, 1)] - v[grid.shift(i, axis, -1)]) * s)
        .collect()
}

pub fn forward_diff(grid: &TorusGrid, v: &[f64], axis: usize) -> Vec<f64> {
    let s = 1.0 / grid.spacing(axis);
    (0..grid.len())
        .map(|i| (v[grid.shift(i, axis, 1)] - v[i]) * s)
        .collect()
}

pub fn backward_diff(grid: &TorusGrid, v: &[f64], axis: usize) -> Vec<f64> {
    let s = 1.0 / grid.spacing(axis);
    (0..grid.len())
        .map(|i| (v[i] - v[grid.shift(i, axis, -1)]) * s)
        .collect()
}

/// Compact (2n+1)-point Laplacian.
pub fn laplacian_values(grid: &TorusGrid, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for axis in 0..grid.dim() {
        let s = 1.0 / (grid.spacing(axis) * grid.spacing(axis));
        for (i, o) in out.iter_mut().enumerate() {
            *o += (v[grid.shift(i, axis, 1)] - 2.0 * v[i] + v[grid.shift(i, axis, -1)]) * s;
        }
    }
    out
}

/// Hessian built by composing central differences, stored as a node-major
/// symmetric-matrix field.
pub fn composed_hessian(grid: &TorusGrid, v: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let first: Vec<Vec<f64>> = (0..d).map(|a| central_diff(grid, v, a)).collect();
    let sl = grid.sym_len();
    let mut out = vec![0.0; grid.len() * sl];
    for a in 0..d {
        for b in a..d {
            let second = central_diff(grid, &first[a], b);
            let k = grid.sym_index(a, b);
            for (i, s) in second.into_iter().enumerate() {
                out[i * sl + k] = s;
            }
        }
    }
    out
}

/// Interleave per-axis component vectors into node-major storage.
pub fn interleave(parts: &[Vec<f64>]) -> Vec<f64> {
    let c = parts.len();
    let n = parts.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n * c];
    for (k, part) in parts.iter().enumerate() {
        for (i, v) in part.iter().enumerate() {
            out[i * c + k] = *v;
        }
    }
    out
}

pub fn gradient(field: &GridField, mode: GradientMode) -> Result<Gradient> {
    field.require_scalar("gradient")?;
    let g = &field.grid;
    let build = |f: fn(&TorusGrid, &[f64], usize) -> Vec<f64>| {
        let parts: Vec<Vec<f64>> = (0..g.dim()).map(|a| f(g, &field.values, a)).collect();
        GridField {
            grid: g.clone(),
            rank: Rank::Vector,
            values: interleave(&parts),
        }
    };
    Ok(match mode {
        GradientMode::Central => Gradient::Central(build(central_diff)),
        GradientMode::Upwind => Gradient::Upwind {
            forward: build(forward_diff),
            backward: build(backward_diff),
        },
    })
}

pub fn laplacian(field: &GridField) -> Result<GridField> {
    field.require_scalar("laplacian")?;
    Ok(GridField {
        grid: field.grid.clone(),
        rank: Rank::Scalar,
        values: laplacian_values(&field.grid, &field.values),
    })
}

/// Sum over nodes of f times the density (or the plain cell volume) times h^n.
pub fn integrate(field: &GridField, density: Option<&GridField>) -> Result<f64> {
    field.require_scalar("integrate")?;
    let w = field.grid.cell_volume();
    match density {
        None => Ok(field.values.iter().sum::<f64>() * w),
        Some(rho) => {
            rho.require_scalar("density")?;
            if rho.grid != field.grid {
                return Err(Error::InvalidArgument("density lives on another grid".into()));
            }
            let min = rho.values.iter().copied().fold(f64::INFINITY, f64::min);
            if min < -1e-12 {
                return Err(Error::InvalidDensity { min });
            }
            Ok(field.values.iter().zip(&rho.values).map(|(f, r)| f * r).sum::<f64>() * w)
        }
    }
}

/// Periodic linear interpolation of nodal values at a point of the torus.
pub fn interpolate(grid: &TorusGrid, v: &[f64], stride: usize, comp: usize, x: [f64; 2]) -> f64 {
    let n0 = grid.resolution()[0];
    let t0 = x[0].rem_euclid(1.0) * n0 as f64;
    let i0 = (t0.floor() as usize).min(n0 - 1);
    let f0 = t0 - i0 as f64;
    let j0 = (i0 + 1) % n0;
    if grid.dim() == 1 {
        return v[i0 * stride + comp] * (1.0 - f0) + v[j0 * stride + comp] * f0;
    }
    let n1 = grid.resolution()[1];
    let t1 = x[1].rem_euclid(1.0) * n1 as f64;
    let i1 = (t1.floor() as usize).min(n1 - 1);
    let f1 = t1 - i1 as f64;
    let j1 = (i1 + 1) % n1;
    let at = |a: usize, b: usize| v[(a + n0 * b) * stride + comp];
    (at(i0, i1) * (1.0 - f0) + at(j0, i1) * f0) * (1.0 - f1) + (at(i0, j1) * (1.0 - f0) + at(j0, j1) * f0) * f1
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_coarse_or_3d() {
        assert!(TorusGrid::new(&[4]).is_err());
        assert!(TorusGrid::new(&[8, 8, 8]).is_err());
        assert!(TorusGrid::new(&[]).is_err());
    }

    #[test]
    fn central_gradient_of_sine() {
        let g = TorusGrid::new(&[64]).unwrap();
        let f = GridField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
        let Gradient::Central(df) = gradient(&f, GradientMode::Central).unwrap() else {
            unreachable!()
        };
        let h = g.spacing(0);
        let factor = (2.0 * PI * h).sin() / h;
        for i in 0..g.len() {
            let x = g.coord(i)[0];
            assert!((df.values[i] - factor * (2.0 * PI * x).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_of_mode_matches_symbol() {
        let g = TorusGrid::new(&[32, 16]).unwrap();
        let f = GridField::from_fn(&g, |x| (2.0 * PI * (x[0] + 2.0 * x[1])).cos());
        let l = laplacian(&f).unwrap();
        let sym = |k: f64, h: f64| -4.0 * (PI * k * h).sin().powi(2) / (h * h);
        let s = sym(1.0, g.spacing(0)) + sym(2.0, g.spacing(1));
        for i in 0..g.len() {
            assert!((l.values[i] - s * f.values[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn integrate_checks_density() {
        let g = TorusGrid::new(&[8]).unwrap();
        let f = GridField::from_fn(&g, |_| 1.0);
        let mut rho = GridField::from_fn(&g, |_| 1.0);
        assert!((integrate(&f, Some(&rho)).unwrap() - 1.0).abs() < 1e-15);
        rho.values[3] = -1e-3;
        assert!(matches!(integrate(&f, Some(&rho)), Err(Error::InvalidDensity { .. })));
    }

    #[test]
    fn band_order_is_a_permutation_with_narrow_band() {
        for res in [vec![9usize], vec![16], vec![8, 9], vec![12, 10]] {
            let g = TorusGrid::new(&res).unwrap();
            let pos = g.band_order();
            let mut seen = pos.clone();
            seen.sort_unstable();
            assert_eq!(seen, (0..g.len()).collect::<Vec<_>>());
            let bw = if g.dim() == 1 { 2 } else { 2 * res[0] };
            for i in 0..g.len() {
                for a in 0..g.dim() {
                    for o in [-1, 1] {
                        let j = g.shift(i, a, o);
                        assert!(pos[i].abs_diff(pos[j]) <= bw);
                    }
                }
            }
        }
    }

    #[test]
    fn interpolation_reproduces_nodes_and_wraps() {
        let g = TorusGrid::new(&[8, 8]).unwrap();
        let f = GridField::from_fn(&g, |x| x[0] + 10.0 * x[1]);
        for i in 0..g.len() {
            let x = g.coord(i);
            assert!((interpolate(&g, &f.values, 1, 0, x) - f.values[i]).abs() < 1e-12);
        }
        let a = interpolate(&g, &f.values, 1, 0, [0.3, 0.6]);
        let b = interpolate(&g, &f.values, 1, 0, [1.3, -0.4]);
        assert!((a - b).abs() < 1e-12);
    }
}
