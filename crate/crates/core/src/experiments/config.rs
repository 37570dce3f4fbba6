use super::scenarios::{find, list_scenarios, SdeSettings, Traits};
use crate::cell::SolverOptions;
use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::hamiltonian::{HamiltonianModel, ModelSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub max_halvings: Option<usize>,
    #[serde(default)]
    pub fallbacks: Option<bool>,
}

/// A run as written in a config file. Everything except the scenario name
/// falls back to the scenario defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub resolution: Option<Vec<usize>>,
    #[serde(default)]
    pub epsilon: Option<Vec<f64>>,
    #[serde(default)]
    pub momenta: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub sde: Option<SdeSettings>,
    /// the simulation stage is skipped when false
    #[serde(default)]
    pub sde_enabled: Option<bool>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub dump_fields: bool,
}

impl RunConfig {
    pub fn for_scenario(name: &str) -> Self {
        Self {
            scenario: name.into(),
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Merge with the scenario defaults and validate.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        let sc = find(&self.scenario).ok_or_else(|| {
            let names: Vec<String> = list_scenarios().into_iter().map(|s| s.name).collect();
            Error::Config(format!(
                "unknown scenario '{}'; available: {}",
                self.scenario,
                names.join(", ")
            ))
        })?;
        let model_spec = self.model.clone().unwrap_or(sc.model.clone());
        let model = model_spec.build().map_err(|e| Error::Config(format!("model: {e}")))?;
        let resolution = self.resolution.clone().unwrap_or(sc.resolution.clone());
        let grid = TorusGrid::new(&resolution).map_err(|e| Error::Config(format!("grid: {e}")))?;
        if grid.dim() != model.dim() {
            return Err(Error::Config(format!(
                "grid is {}-dimensional but the model is {}-dimensional",
                grid.dim(),
                model.dim()
            )));
        }
        let mut epsilon = self.epsilon.clone().unwrap_or(sc.epsilon.clone());
        if epsilon.is_empty() {
            return Err(Error::Config("epsilon list is empty".into()));
        }
        if let Some(e) = epsilon.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {e}")));
        }
        epsilon.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        epsilon.dedup();
        let momenta = self.momenta.clone().unwrap_or(sc.momenta.clone());
        if momenta.is_empty() {
            return Err(Error::Config("momentum list is empty".into()));
        }
        let mut ps = Vec::with_capacity(momenta.len());
        for p in &momenta {
            if p.len() != model.dim() || p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!(
                    "momentum {p:?} does not match dimension {}",
                    model.dim()
                )));
            }
            let mut q = [0.0; 2];
            q[..p.len()].copy_from_slice(p);
            ps.push(q);
        }
        let mut solver = SolverOptions::default();
        let o = &self.solver;
        if let Some(t) = o.tolerance {
            if !(t > 0.0) {
                return Err(Error::Config("solver tolerance must be positive".into()));
            }
            solver.tolerance = Some(t);
        }
        if let Some(v) = o.max_iterations {
            solver.max_iterations = v;
        }
        if let Some(v) = o.max_halvings {
            solver.max_halvings = v;
        }
        if let Some(v) = o.fallbacks {
            solver.fallbacks = v;
        }
        let sde = if self.sde_enabled == Some(false) {
            None
        } else {
            self.sde.clone().or(sc.sde.clone())
        };
        if let Some(s) = &sde {
            if s.steps == 0 || s.replicates < 2 || s.batches == 0 {
                return Err(Error::Config(
                    "sde needs steps > 0, replicates >= 2 and batches >= 1".into(),
                ));
            }
            if let Some(b) = s.burn_in {
                if b >= s.steps {
                    return Err(Error::Config("sde burn_in must be below steps".into()));
                }
            }
            if let Some(dt) = s.dt {
                if !(dt > 0.0) {
                    return Err(Error::Config("sde dt must be positive".into()));
                }
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        let output = self
            .output
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(&self.scenario));
        let echo = RunConfig {
            scenario: self.scenario.clone(),
            model: Some(model_spec.clone()),
            resolution: Some(resolution.clone()),
            epsilon: Some(epsilon.clone()),
            momenta: Some(momenta.clone()),
            solver: self.solver.clone(),
            sde: sde.clone(),
            sde_enabled: Some(sde.is_some()),
            output: Some(output.clone()),
            seed: self.seed,
            workers: self.workers,
            dump_fields: self.dump_fields,
        };
        Ok(ResolvedRun {
            scenario: sc.name.to_string(),
            model_spec,
            model,
            grid,
            epsilon,
            momenta: ps,
            solver,
            sde,
            seed: self.seed,
            output,
            workers: self.workers,
            dump_fields: self.dump_fields,
            test_radius: sc.test_radius,
            traits: sc.traits.clone(),
            echo,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub scenario: String,
    pub model_spec: ModelSpec,
    pub model: HamiltonianModel,
    pub grid: TorusGrid,
    /// descending
    pub epsilon: Vec<f64>,
    pub momenta: Vec<[f64; 2]>,
    pub solver: SolverOptions,
    pub sde: Option<SdeSettings>,
    pub seed: u64,
    pub output: PathBuf,
    pub workers: Option<usize>,
    pub dump_fields: bool,
    pub test_radius: f64,
    pub traits: Traits,
    /// the fully expanded config, written to the manifest
    pub echo: RunConfig,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("scenario = \"free\"\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn zero_epsilon_is_rejected() {
        let cfg = RunConfig::from_toml("scenario = \"free\"\nepsilon = [0.0]\n").unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(err.to_string().contains("epsilon must be positive"), "{err}");
    }

    #[test]
    fn empty_epsilon_list_is_rejected() {
        let cfg = RunConfig::from_toml("scenario = \"pendulum\"\nepsilon = []\n").unwrap();
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn unknown_scenario_lists_catalog() {
        let err = RunConfig::for_scenario("nope").resolve().unwrap_err();
        assert!(err.to_string().contains("pendulum"), "{err}");
    }

    #[test]
    fn model_override_parses() {
        let text = r#"
scenario = "pendulum"
epsilon = [0.2, 0.1]
[model]
kind = "mechanical"
dim = 1
[model.potential]
kind = "trig-polynomial"
terms = [{ k = [2], cos = 0.3 }]
"#;
        let run = RunConfig::from_toml(text).unwrap().resolve().unwrap();
        assert_eq!(run.epsilon, vec![0.2, 0.1]);
        let shape = r#"
scenario = "counterexample"
[model]
kind = "counterexample"
scale = 0.0625
amplitude = 3.0
floor = -3.0
"#;
        assert!(RunConfig::from_toml(shape).unwrap().resolve().is_ok());
    }

    #[test]
    fn echo_round_trips() {
        let run = RunConfig::for_scenario("pendulum").resolve().unwrap();
        let text = run.echo.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, run.echo);
        assert_eq!(back.resolve().unwrap().echo, run.echo);
    }
}
