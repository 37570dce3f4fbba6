//! Direct solvers for the periodic stencil systems: a banded LU with partial
//! pivoting, a dense Schur border for the extra unknowns and compensated
//! (double-double) arithmetic for residuals.

use crate::error::{Error, Result};

/// Sparse square matrix stored as per-row (column, value) lists.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    pub n: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            rows: vec![Vec::new(); n],
        }
    }

    /// Accumulate `v` into entry (i, j).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let row = &mut self.rows[i];
        if let Some(e) = row.iter_mut().find(|e| e.0 == j) {
            e.1 += v;
        } else {
            row.push((j, v));
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut t = SparseMatrix::new(self.n);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                t.rows[j].push((i, v));
            }
        }
        t
    }

    pub fn add_diagonal(&mut self, s: f64) {
        for i in 0..self.n {
            self.add(i, i, s);
        }
    }
}

/// LU factors of a band matrix, row-major with room for pivoting fill.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    w: usize,
    data: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    /// `entries(i)` lists the nonzeros (j, a_ij) of row i.
    pub fn factor<F>(n: usize, kl: usize, ku: usize, entries: F) -> Result<Self>
    where
        F: Fn(usize) -> Vec<(usize, f64)>,
    {
        let w = 2 * kl + ku + 1;
        let mut data = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in entries(i) {
                if j + kl < i || j > i + ku {
                    return Err(Error::Assembly(format!("entry ({i},{j}) outside band ({kl},{ku})")));
                }
                data[i * w + j + kl - i] += v;
            }
        }
        let mut piv = vec![0usize; n];
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = scale * f64::EPSILON * 1e-3;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = data[k * w + kl].abs();
            for i in k + 1..=last {
                let v = data[i * w + k + kl - i].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tiny || !best.is_finite() {
                return Err(Error::Singular(k));
            }
            piv[k] = p;
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    data.swap(k * w + j + kl - k, p * w + j + kl - p);
                }
            }
            let pivot = data[k * w + kl];
            let (head, tail) = data.split_at_mut((k + 1) * w);
            let urow = &head[k * w + kl + 1..k * w + kl + 1 + (jmax - k)];
            for i in k + 1..=last {
                let row = &mut tail[(i - k - 1) * w..(i - k) * w];
                let lpos = k + kl - i;
                let l = row[lpos] / pivot;
                row[lpos] = l;
                if l != 0.0 {
                    let start = lpos + 1;
                    for (dst, &u) in row[start..start + urow.len()].iter_mut().zip(urow) {
                        *dst -= l * u;
                    }
                }
            }
        }
        Ok(Self {
            n,
            kl,
            ku,
            w,
            data,
            piv,
        })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, w) = (self.n, self.kl, self.w);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= self.data[i * w + k + kl - i] * bk;
                }
            }
        }
        let reach = kl + self.ku;
        for i in (0..n).rev() {
            let row = &self.data[i * w..(i + 1) * w];
            let mut s = b[i];
            for j in i + 1..=(i + reach).min(n - 1) {
                s -= row[j + kl - i] * b[j];
            }
            b[i] = s / row[kl];
        }
    }
}

/// Dense LU with partial pivoting, for the small Schur complements.
#[derive(Clone, Debug)]
pub struct DenseLu {
    n: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Self> {
        let mut piv = vec![0; n];
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x * n + k].abs().total_cmp(&a[y * n + k].abs()))
                .unwrap_or(k);
            if a[p * n + k].abs() <= scale * f64::EPSILON * 1e-3 {
                return Err(Error::Singular(k));
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
            }
            for i in k + 1..n {
                let l = a[i * n + k] / a[k * n + k];
                a[i * n + k] = l;
                for j in k + 1..n {
                    a[i * n + j] -= l * a[k * n + j];
                }
            }
        }
        Ok(Self { n, a, piv })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.piv[k]);
            for i in k + 1..n {
                b[i] -= self.a[i * n + k] * b[k];
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= self.a[i * n + j] * b[j];
            }
            b[i] = s / self.a[i * n + i];
        }
    }
}

/// Dense border attached to a sparse core:
///
/// ```text
/// [ A  B ] [x]   [f]
/// [ C  D ] [y] = [g]
/// ```
#[derive(Clone, Debug, Default)]
pub struct Border {
    /// Columns of B, each of length n.
    pub cols: Vec<Vec<f64>>,
    /// Rows of C, each of length n.
    pub rows: Vec<Vec<f64>>,
    /// D in row-major order.
    pub corner: Vec<f64>,
}

impl Border {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn size(&self) -> usize {
        self.cols.len()
    }
}

/// Factorization of a bordered sparse system.
///
/// `deflate` trailing unknowns of the band ordering are moved into the
/// dense block, which lets the core be singular with a null space of that
/// dimension as long as the full bordered matrix is regular.
pub struct BorderedSolver {
    n: usize,
    k: usize,
    a: SparseMatrix,
    border: Border,
    /// band position of each natural index
    pos: Vec<usize>,
    /// natural index at each band position
    order: Vec<usize>,
    core: usize,
    lu: BandLu,
    /// A11^{-1} B' stored by columns (band positions)
    x: Vec<Vec<f64>>,
    /// C' rows restricted to the core, band positions
    crow: Vec<Vec<f64>>,
    schur: DenseLu,
}

impl BorderedSolver {
    pub fn factor(a: SparseMatrix, border: Border, pos: &[usize], deflate: usize) -> Result<Self> {
        let n = a.n;
        let k = border.size();
        if border.rows.len() != k || border.corner.len() != k * k {
            return Err(Error::Assembly("border shape mismatch".into()));
        }
        if pos.len() != n || deflate >= n {
            return Err(Error::Assembly("ordering does not match the matrix".into()));
        }
        let mut order = vec![0usize; n];
        for (i, &p) in pos.iter().enumerate() {
            order[p] = i;
        }
        let core = n - deflate;
        let (mut kl, mut ku) = (0usize, 0usize);
        for (i, row) in a.rows.iter().enumerate() {
            let pi = pos[i];
            if pi >= core {
                continue;
            }
            for &(j, _) in row {
                let pj = pos[j];
                if pj >= core {
                    continue;
                }
                if pj < pi {
                    kl = kl.max(pi - pj);
                } else {
                    ku = ku.max(pj - pi);
                }
            }
        }
        let lu = BandLu::factor(core, kl, ku, |p| {
            a.rows[order[p]]
                .iter()
                .filter_map(|&(j, v)| (pos[j] < core).then_some((pos[j], v)))
                .collect()
        })?;

        let kk = deflate + k;
        // B' columns: A[core, deflated] then B[core]
        let mut bcols: Vec<Vec<f64>> = Vec::with_capacity(kk);
        for d in 0..deflate {
            let jn = order[core + d];
            let mut col = vec![0.0; core];
            for (p, c) in col.iter_mut().enumerate() {
                if let Some(&(_, v)) = a.rows[order[p]].iter().find(|e| e.0 == jn) {
                    *c = v;
                }
            }
            bcols.push(col);
        }
        for c in &border.cols {
            bcols.push((0..core).map(|p| c[order[p]]).collect());
        }
        // C' rows: A[deflated, core] then C[:, core]
        let mut crow: Vec<Vec<f64>> = Vec::with_capacity(kk);
        for d in 0..deflate {
            let mut r = vec![0.0; core];
            for &(j, v) in &a.rows[order[core + d]] {
                if pos[j] < core {
                    r[pos[j]] += v;
                }
            }
            crow.push(r);
        }
        for r in &border.rows {
            crow.push((0..core).map(|p| r[order[p]]).collect());
        }
        // D'
        let mut dd = vec![0.0; kk * kk];
        for r in 0..deflate {
            let row = &a.rows[order[core + r]];
            for c in 0..deflate {
                let jn = order[core + c];
                dd[r * kk + c] = row.iter().filter(|e| e.0 == jn).map(|e| e.1).sum();
            }
            for c in 0..k {
                dd[r * kk + deflate + c] = border.cols[c][order[core + r]];
            }
        }
        for r in 0..k {
            for c in 0..deflate {
                dd[(deflate + r) * kk + c] = border.rows[r][order[core + c]];
            }
            for c in 0..k {
                dd[(deflate + r) * kk + deflate + c] = border.corner[r * k + c];
            }
        }
        let x: Vec<Vec<f64>> = bcols
            .into_iter()
            .map(|mut c| {
                lu.solve_in_place(&mut c);
                c
            })
            .collect();
        for r in 0..kk {
            for c in 0..kk {
                dd[r * kk + c] -= dot(&crow[r], &x[c]);
            }
        }
        let schur = DenseLu::factor(kk, dd)?;
        Ok(Self {
            n,
            k,
            a,
            border,
            pos: pos.to_vec(),
            order,
            core,
            lu,
            x,
            crow,
            schur,
        })
    }

    pub fn dim(&self) -> usize {
        self.n + self.k
    }

    /// Solve for a right-hand side of length n + k (natural ordering,
    /// border unknowns last).
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, core) = (self.n, self.core);
        let kk = n - core + self.k;
        let mut y1: Vec<f64> = (0..core).map(|p| rhs[self.order[p]]).collect();
        self.lu.solve_in_place(&mut y1);
        let mut z2: Vec<f64> = (0..kk)
            .map(|r| {
                let g = if core + r < n {
                    rhs[self.order[core + r]]
                } else {
                    rhs[n + (core + r - n)]
                };
                g - dot(&self.crow[r], &y1)
            })
            .collect();
        self.schur.solve_in_place(&mut z2);
        for (c, zc) in z2.iter().enumerate() {
            for (y, xv) in y1.iter_mut().zip(&self.x[c]) {
                *y -= xv * zc;
            }
        }
        let mut out = vec![0.0; n + self.k];
        for p in 0..core {
            out[self.order[p]] = y1[p];
        }
        for (r, z) in z2.iter().enumerate() {
            let idx = core + r;
            if idx < n {
                out[self.order[idx]] = *z;
            } else {
                out[idx] = *z;
            }
        }
        out
    }

    /// Full bordered matrix times a vector given as hi + lo parts, evaluated
    /// in double-double and returned as `rhs - M z`.
    pub fn residual_dd(&self, rhs: &[f64], hi: &[f64], lo: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(n + self.k);
        for i in 0..n {
            let mut acc = Dd::from(rhs[i]);
            for &(j, v) in &self.a.rows[i] {
                acc = acc.sub_prod(v, hi[j]).sub_prod(v, lo[j]);
            }
            for (c, col) in self.border.cols.iter().enumerate() {
                acc = acc.sub_prod(col[i], hi[n + c]).sub_prod(col[i], lo[n + c]);
            }
            out.push(acc.value());
        }
        for r in 0..self.k {
            let mut acc = Dd::from(rhs[n + r]);
            let row = &self.border.rows[r];
            for j in 0..n {
                acc = acc.sub_prod(row[j], hi[j]).sub_prod(row[j], lo[j]);
            }
            for c in 0..self.k {
                let v = self.border.corner[r * self.k + c];
                acc = acc.sub_prod(v, hi[n + c]).sub_prod(v, lo[n + c]);
            }
            out.push(acc.value());
        }
        out
    }

    /// Solve with iterative refinement, residuals in double-double.
    /// Returns the solution as an unevaluated sum hi + lo.
    pub fn solve_refined(&self, rhs: &[f64], sweeps: usize) -> (Vec<f64>, Vec<f64>) {
        let mut hi = self.solve(rhs);
        let mut lo = vec![0.0; hi.len()];
        for _ in 0..sweeps {
            let r = self.residual_dd(rhs, &hi, &lo);
            let d = self.solve(&r);
            for i in 0..hi.len() {
                let s = Dd::from(hi[i]) + Dd::from(lo[i]) + Dd::from(d[i]);
                hi[i] = s.hi;
                lo[i] = s.lo;
            }
        }
        (hi, lo)
    }

    /// Band position of the natural index `i` (exposed for diagnostics).
    pub fn band_position(&self, i: usize) -> usize {
        self.pos[i]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unevaluated sum of two doubles.
#[derive(Clone, Copy, Debug, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

impl From<f64> for Dd {
    fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }
}

impl std::ops::Add for Dd {
    type Output = Dd;

    #[inline]
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = two_sum(s, e);
        Dd { hi, lo }
    }
}

impl Dd {
    #[inline]
    pub fn add_prod(self, a: f64, b: f64) -> Dd {
        let p = a * b;
        let err = a.mul_add(b, -p);
        self + Dd { hi: p, lo: err }
    }

    #[inline]
    pub fn sub_prod(self, a: f64, b: f64) -> Dd {
        self.add_prod(-a, b)
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize, shift: f64) -> SparseMatrix {
        let mut a = SparseMatrix::new(n);
        for i in 0..n {
            a.add(i, i, 2.0 + shift);
            a.add(i, (i + 1) % n, -1.0);
            a.add(i, (i + n - 1) % n, -1.0);
        }
        a
    }

    fn interleaved(n: usize) -> Vec<usize> {
        crate::grid::TorusGrid::new(&[n]).unwrap().band_order()
    }

    #[test]
    fn band_lu_matches_dense_solution() {
        let n = 12;
        let a = laplace_1d(n, 0.3);
        let pos = interleaved(n);
        let s = BorderedSolver::factor(a.clone(), Border::none(), &pos, 0).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = s.solve(&b);
        let r = a.mul(&x);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // [[0,1],[1,0]] style coupling inside a band
        let lu = BandLu::factor(3, 1, 1, |i| match i {
            0 => vec![(0, 0.0), (1, 2.0)],
            1 => vec![(0, 1.0), (1, 1.0), (2, 1.0)],
            _ => vec![(1, 1.0), (2, 3.0)],
        })
        .unwrap();
        let mut b = vec![2.0, 3.0, 4.0];
        lu.solve_in_place(&mut b);
        // exact solution of the system
        assert!((2.0 * b[1] - 2.0).abs() < 1e-14);
        assert!((b[0] + b[1] + b[2] - 3.0).abs() < 1e-14);
        assert!((b[1] + 3.0 * b[2] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn bordered_singular_core() {
        // singular periodic Laplacian, bordered by a mean constraint
        let n = 16;
        let a = laplace_1d(n, 0.0);
        let border = Border {
            cols: vec![vec![-1.0; n]],
            rows: vec![vec![1.0; n]],
            corner: vec![0.0],
        };
        let s = BorderedSolver::factor(a.clone(), border, &interleaved(n), 1).unwrap();
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        rhs.push(0.0);
        let z = s.solve(&rhs);
        let (x, c) = (&z[..n], z[n]);
        let ax = a.mul(x);
        for i in 0..n {
            assert!((ax[i] - c - rhs[i]).abs() < 1e-12);
        }
        assert!(x.iter().sum::<f64>().abs() < 1e-12);
        assert!(c.abs() < 1e-12);
    }

    #[test]
    fn refinement_reduces_residual() {
        let n = 64;
        let mut a = laplace_1d(n, 1e-6);
        for r in a.rows.iter_mut() {
            for e in r.iter_mut() {
                e.1 *= 1e6;
            }
        }
        let s = BorderedSolver::factor(a, Border::none(), &interleaved(n), 0).unwrap();
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let (hi, lo) = s.solve_refined(&b, 3);
        let r = s.residual_dd(&b, &hi, &lo);
        let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(rmax < 1e-9, "{rmax}");
    }

    #[test]
    fn dd_product_is_exact() {
        let a = 1.0 + f64::EPSILON;
        let acc = Dd::from(0.0).add_prod(a, a).sub_prod(1.0, 1.0);
        assert!((acc.value() - (2.0 * f64::EPSILON + f64::EPSILON * f64::EPSILON)).abs() < 1e-40);
    }
}
