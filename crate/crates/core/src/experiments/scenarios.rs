use crate::hamiltonian::{FoldShape, ModelSpec};
use crate::potential::{PotentialSpec, TrigTerm};
use serde::{Deserialize, Serialize};

/// Which sweep-level checks apply to a scenario.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Traits {
    /// uniformly convex in p: e2_raw bounded, iul(0) small, H̄ convex in P
    #[serde(default)]
    pub uniformly_convex: bool,
    /// dissipation must vanish: trace_mass(finest) <= 1e-2 and <= coarsest / 4
    #[serde(default)]
    pub dissipation_decays: bool,
    /// resA, resB and raw resC drop by 4x over the sweep
    #[serde(default)]
    pub mather_decay: bool,
    /// trace_mass stays within a factor 3 of the coarsest value and above this floor
    #[serde(default)]
    pub plateau_floor: Option<f64>,
    #[serde(default)]
    pub conserved_sum: bool,
    /// exact free-particle solution
    #[serde(default)]
    pub free: bool,
    /// the radial lower bound iul(lambda) >= beta trace_mass applies
    #[serde(default)]
    pub radial_bound: bool,
    /// report the inviscid residuals of u = 0 and u = psi
    #[serde(default)]
    pub nonuniqueness: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSettings {
    /// epsilon values (from the sweep) at which to simulate
    pub epsilon: Vec<f64>,
    /// restrict to these momenta; all when absent
    #[serde(default)]
    pub momenta: Option<Vec<Vec<f64>>>,
    pub steps: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub burn_in: Option<u64>,
    /// steps of the separate Dynkin run over the test-function catalog; 0 skips it
    #[serde(default)]
    pub dynkin_steps: u64,
}

fn default_replicates() -> usize {
    16
}

fn default_batches() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
    pub model: ModelSpec,
    pub resolution: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub momenta: Vec<Vec<f64>>,
    pub sde: Option<SdeSettings>,
    /// p-radius of the bump test functions
    pub test_radius: f64,
    pub traits: Traits,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub name: String,
    pub description: String,
}

const SWEEP: [f64; 5] = [0.4, 0.2, 0.1, 0.05, 0.025];

fn cosine(amplitude: f64) -> PotentialSpec {
    PotentialSpec::Cosine { amplitude }
}

const RADIAL_PROFILE: [f64; 3] = [1.0, -0.2, 1.0 / 48.0];

/// The eight built-in scenarios.
pub fn catalog() -> Vec<Scenario> {
    vec![
        Scenario {
            name: "free",
            description: "H = |p|^2/2 with V = 0; exact solution u = 0, Hbar = |P|^2/2",
            model: ModelSpec::Mechanical {
                dim: 1,
                potential: PotentialSpec::Zero,
            },
            resolution: vec![256],
            epsilon: vec![0.1],
            momenta: vec![vec![0.0], vec![0.5], vec![1.0]],
            sde: None,
            test_radius: 4.0,
            traits: Traits {
                uniformly_convex: true,
                free: true,
                ..Traits::default()
            },
        },
        Scenario {
            name: "pendulum",
            description: "H = p^2/2 + cos(2 pi x); uniformly convex, dissipation vanishes",
            model: ModelSpec::Mechanical {
                dim: 1,
                potential: cosine(1.0),
            },
            resolution: vec![1024],
            epsilon: SWEEP.to_vec(),
            momenta: vec![vec![0.0], vec![0.5], vec![1.0], vec![2.0]],
            sde: Some(SdeSettings {
                epsilon: vec![0.1],
                momenta: Some(vec![vec![0.0], vec![2.0]]),
                steps: 10_000_000,
                replicates: 16,
                batches: 10,
                dt: None,
                burn_in: None,
                dynkin_steps: 1_000_000,
            }),
            test_radius: 4.0,
            traits: Traits {
                uniformly_convex: true,
                dissipation_decays: true,
                mather_decay: true,
                ..Traits::default()
            },
        },
        Scenario {
            name: "quasiconvex-square",
            description: "H = (p^2 + V)^2 with sign-changing V = -cos(2 pi x)/2; quasiconvex",
            model: ModelSpec::QuasiconvexSquare {
                dim: 1,
                potential: cosine(-0.5),
            },
            resolution: vec![1024],
            epsilon: SWEEP.to_vec(),
            momenta: vec![vec![0.0]],
            sde: None,
            test_radius: 4.0,
            traits: Traits {
                dissipation_decays: true,
                ..Traits::default()
            },
        },
        Scenario {
            name: "radial",
            description: "H = Hr(|p|) + cos(2 pi x) with Hr(s) = s^2 - s^4/5 + s^6/48 increasing but not convex",
            model: ModelSpec::Radial {
                dim: 1,
                profile: RADIAL_PROFILE.to_vec(),
                s_max: 4.0,
                potential: cosine(1.0),
            },
            resolution: vec![1024],
            epsilon: SWEEP.to_vec(),
            momenta: vec![vec![0.0]],
            sde: None,
            test_radius: 4.0,
            traits: Traits {
                dissipation_decays: true,
                mather_decay: true,
                radial_bound: true,
                ..Traits::default()
            },
        },
        Scenario {
            name: "onedim-nonconvex",
            description: "H = p^2 + p^3/10 - p^4/5 + p^6/48 + cos(2 pi x); one critical point in p",
            model: ModelSpec::OneDimNonconvex {
                coefficients: vec![0.0, 0.0, 1.0, 0.1, -0.2, 0.0, 1.0 / 48.0],
                potential: cosine(1.0),
            },
            resolution: vec![1024],
            epsilon: SWEEP.to_vec(),
            momenta: vec![vec![0.0], vec![1.0]],
            sde: None,
            test_radius: 4.0,
            traits: Traits::default(),
        },
        Scenario {
            name: "conserved-sum",
            description: "H = Hr(|p|) + V1(x1 + x2) on the 2-torus; p1 - p2 is conserved",
            model: ModelSpec::ConservedSum {
                profile: RADIAL_PROFILE.to_vec(),
                s_max: 4.0,
                terms: vec![TrigTerm {
                    k: vec![1],
                    cos: 0.5,
                    sin: 0.0,
                }],
            },
            resolution: vec![128, 128],
            epsilon: vec![0.2, 0.1],
            momenta: vec![vec![0.25, 0.25]],
            sde: None,
            test_radius: 4.0,
            traits: Traits {
                conserved_sum: true,
                ..Traits::default()
            },
        },
        Scenario {
            name: "nonuniqueness",
            description: "H = p (p - psi'(x)); u = 0 and u = psi both solve the inviscid problem",
            model: ModelSpec::Nonuniqueness {
                psi: PotentialSpec::TrigPolynomial {
                    constant: 0.0,
                    terms: vec![TrigTerm {
                        k: vec![1],
                        cos: 0.0,
                        sin: 0.1,
                    }],
                },
            },
            resolution: vec![1024],
            epsilon: SWEEP.to_vec(),
            momenta: vec![vec![0.0]],
            sde: None,
            test_radius: 4.0,
            traits: Traits {
                nonuniqueness: true,
                ..Traits::default()
            },
        },
        Scenario {
            name: "counterexample",
            description: "quartic H whose zero level set folds over the torus; dissipation persists",
            model: ModelSpec::Counterexample(FoldShape {
                scale: 1.0 / 16.0,
                amplitude: 3.0,
                shift: 0.0,
                floor: -3.0,
            }),
            resolution: vec![4096],
            epsilon: SWEEP.to_vec(),
            momenta: vec![vec![0.0]],
            sde: None,
            test_radius: 5.0,
            traits: Traits {
                plateau_floor: Some(0.5),
                ..Traits::default()
            },
        },
    ]
}

pub fn find(name: &str) -> Option<Scenario> {
    catalog().into_iter().find(|s| s.name == name)
}

pub fn list_scenarios() -> Vec<ScenarioEntry> {
    catalog()
        .into_iter()
        .map(|s| ScenarioEntry {
            name: s.name.into(),
            description: s.description.into(),
        })
        .collect()
}
