#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

/// Inviscid effective Hamiltonian of H = p^2/2 + V(x) in one dimension by
/// quadrature: max V on the flat part, otherwise the level h with
/// int_0^1 sqrt(2 (h - V)) dx = |P|.
pub fn mechanical_hbar(v: impl Fn(f64) -> f64, p: f64) -> f64 {
    const M: usize = 200_000;
    let xs: Vec<f64> = (0..M).map(|i| (i as f64 + 0.5) / M as f64).collect();
    let vs: Vec<f64> = xs.iter().map(|&x| v(x)).collect();
    let vmax = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let action = |h: f64| vs.iter().map(|&vi| (2.0 * (h - vi)).max(0.0).sqrt()).sum::<f64>() / M as f64;
    if p.abs() <= action(vmax) {
        return vmax;
    }
    let (mut lo, mut hi) = (vmax, vmax + 1.0);
    while action(hi) < p.abs() {
        hi = vmax + 2.0 * (hi - vmax);
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if action(mid) < p.abs() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn pendulum_hbar(p: f64) -> f64 {
    mechanical_hbar(|x| (2.0 * PI * x).cos(), p)
}

/// Fresh scratch directory under the system temp dir.
pub fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("weakkam-{}-{}", name, std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
