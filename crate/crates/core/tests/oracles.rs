mod common;

use common::{mechanical_hbar, pendulum_hbar};
use std::f64::consts::PI;
use weakkam::adjoint::{linearized_operator, stationary_adjoint};
use weakkam::cell::{dp_u, effective_hamiltonian_sweep, solve_cell, CellSolution, CellSpec, SolverOptions};
use weakkam::grid::TorusGrid;
use weakkam::hamiltonian::{HamiltonianModel, ModelSpec};
use weakkam::potential::{PotentialSpec, TrigTerm};
use weakkam::sde::rotation_reference;

fn model(spec: ModelSpec) -> HamiltonianModel {
    spec.build().unwrap()
}

fn pendulum() -> HamiltonianModel {
    model(ModelSpec::Mechanical {
        dim: 1,
        potential: PotentialSpec::Cosine { amplitude: 1.0 },
    })
}

fn solve(m: &HamiltonianModel, p: f64, eps: f64, n: usize) -> CellSolution {
    let spec = CellSpec::new(m.clone(), &[p], eps, TorusGrid::new(&[n]).unwrap()).unwrap();
    solve_cell(&spec, None, &SolverOptions::default()).unwrap()
}

#[test]
fn quadrature_oracle_sanity() {
    // flat part ends at |P| = int 2|sin(pi x)| dx = 4/pi
    assert!((pendulum_hbar(0.0) - 1.0).abs() < 1e-9);
    assert!((pendulum_hbar(4.0 / PI - 1e-6) - 1.0).abs() < 1e-9);
    assert!(pendulum_hbar(2.0) > 2.0);
    // V = 0: Hbar = P^2/2
    assert!((mechanical_hbar(|_| 0.0, 1.5) - 1.125).abs() < 1e-9);
}

#[test]
fn pendulum_approaches_quadrature_oracle() {
    let m = pendulum();
    for p in [0.0, 2.0] {
        let s = solve(&m, p, 0.05, 1024);
        let err = (s.hbar - pendulum_hbar(p)).abs();
        assert!(
            err < 0.05,
            "P={p}: hbar {} oracle {} err {err}",
            s.hbar,
            pendulum_hbar(p)
        );
    }
}

#[test]
fn pendulum_hbar_is_even_and_nondecreasing_in_p() {
    let m = pendulum();
    let base = CellSpec::new(m, &[0.0], 0.1, TorusGrid::new(&[512]).unwrap()).unwrap();
    let ps: Vec<[f64; 2]> = [-2.0, -1.0, 0.0, 1.0, 1.5, 2.0].iter().map(|&p| [p, 0.0]).collect();
    let sweep = effective_hamiltonian_sweep(&base, &ps, &SolverOptions::default());
    let h: Vec<f64> = sweep.iter().map(|s| s.hbar.unwrap()).collect();
    assert!((h[0] - h[5]).abs() < 1e-8, "{h:?}");
    assert!((h[1] - h[3]).abs() < 1e-8, "{h:?}");
    assert!(h[2] <= h[3] + 1e-10 && h[3] <= h[4] && h[4] <= h[5], "{h:?}");
}

/// H = (p^2 + V)^2 with V >= 0 has Hbar = (Hbar_phi)^2 for phi = p^2 + V,
/// and phi = 2 (p^2/2 + V/2) is a scaled mechanical Hamiltonian.
#[test]
fn quasiconvex_square_matches_squared_mechanical_oracle() {
    let pot = PotentialSpec::TrigPolynomial {
        constant: 0.5,
        terms: vec![TrigTerm {
            k: vec![1],
            cos: 0.5,
            sin: 0.0,
        }],
    };
    let m = model(ModelSpec::QuasiconvexSquare { dim: 1, potential: pot });
    for p in [0.0, 2.0] {
        let s = solve(&m, p, 0.05, 1024);
        let phi = 2.0 * mechanical_hbar(|x| 0.25 * (1.0 + (2.0 * PI * x).cos()), p);
        let oracle = phi * phi;
        assert!((s.hbar - oracle).abs() < 0.05, "P={p}: {} vs {oracle}", s.hbar);
    }
}

#[test]
fn free_particle_derivatives() {
    let m = model(ModelSpec::Mechanical {
        dim: 2,
        potential: PotentialSpec::Zero,
    });
    let spec = CellSpec::new(m, &[0.3, -0.7], 0.2, TorusGrid::new(&[16, 16]).unwrap()).unwrap();
    let s = solve_cell(&spec, None, &SolverOptions::default()).unwrap();
    let d = dp_u(&s, None, &SolverOptions::default()).unwrap();
    assert!((d.dp_hbar[0] - 0.3).abs() < 1e-8 && (d.dp_hbar[1] + 0.7).abs() < 1e-8);
    assert!(d.dpu.max_abs() < 1e-8);
    assert!(d.identity_residual < 1e-6);
}

/// Integrating the P-derivative of the cell equation against theta gives
/// D_P Hbar = int H_p dtheta at every eps.
#[test]
fn mean_velocity_equals_hbar_slope() {
    let m = pendulum();
    for p in [0.5, 2.0] {
        let s = solve(&m, p, 0.1, 512);
        let theta = stationary_adjoint(&linearized_operator(&s)).unwrap();
        let (minus, _) = rotation_reference(&s, &theta);
        let d = dp_u(&s, None, &SolverOptions::default()).unwrap();
        assert!(
            (-minus[0] - d.dp_hbar[0]).abs() < 1e-5,
            "P={p}: {} vs {}",
            -minus[0],
            d.dp_hbar[0]
        );
    }
}

/// The nonuniqueness model keeps u = 0 at P = 0, so the drift is -psi'
/// and theta is the Gibbs density proportional to exp(2 psi / eps^2).
#[test]
fn nonuniqueness_density_is_gibbs() {
    let psi = PotentialSpec::TrigPolynomial {
        constant: 0.0,
        terms: vec![TrigTerm {
            k: vec![1],
            cos: 0.0,
            sin: 0.1,
        }],
    };
    let m = model(ModelSpec::Nonuniqueness { psi });
    let eps = 0.4;
    let s = solve(&m, 0.0, eps, 2048);
    assert!(s.u.max_abs() < 1e-10);
    let theta = stationary_adjoint(&linearized_operator(&s)).unwrap().theta.values;
    let n = theta.len();
    let gibbs: Vec<f64> = (0..n)
        .map(|i| (2.0 * 0.1 * (2.0 * PI * i as f64 / n as f64).sin() / (eps * eps)).exp())
        .collect();
    let z = gibbs.iter().sum::<f64>() / n as f64;
    let worst = theta
        .iter()
        .zip(&gibbs)
        .map(|(t, g)| (t - g / z).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-4, "max deviation {worst}");
}
