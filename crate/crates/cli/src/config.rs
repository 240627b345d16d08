//! Experiment configuration: one JSON file, flag overrides, stable hash.

use renorm_core::cocycle::CocycleFile;
use renorm_core::error::{Error, Result};
use renorm_core::iet::PermPair;
use renorm_core::num::fnv1a;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PermSpec {
    Named(String),
    Explicit {
        alphabet: Vec<String>,
        pi_top: Vec<usize>,
        pi_bottom: Vec<usize>,
    },
}

impl PermSpec {
    pub fn to_perm(&self) -> Result<PermPair> {
        match self {
            PermSpec::Named(name) => match name.as_str() {
                "rot2" => Ok(PermPair::reversal(2)),
                other => {
                    if let Some(d) = other.strip_prefix("rev") {
                        let d: usize = d
                            .parse()
                            .map_err(|_| Error::ConfigInvalid(format!("unknown permutation {other}")))?;
                        if !(2..=8).contains(&d) {
                            return Err(Error::ConfigInvalid("rev arity out of range".into()));
                        }
                        Ok(PermPair::reversal(d))
                    } else {
                        Err(Error::ConfigInvalid(format!("unknown permutation {other}")))
                    }
                }
            },
            PermSpec::Explicit {
                alphabet,
                pi_top,
                pi_bottom,
            } => PermPair::new(alphabet.clone(), pi_top.clone(), pi_bottom.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub permutation: PermSpec,
    pub seed: u64,
    pub precision_bits: u32,
    pub balance_radius: f64,
    pub balance_delta: f64,
    pub depth: usize,
    pub warmup: usize,
    pub trials: usize,
    pub jobs: usize,
    pub step_budget: usize,
    /// ‖Q(k)‖ cap for floor-resolved operations.
    pub mass_budget: u64,
    pub cocycle: Option<CocycleFile>,
    pub flow_time: f64,
    pub grid_dt: f64,
    pub window_a: (f64, f64),
    pub window_b: (f64, f64),
    pub s_values: Vec<f64>,
    pub out_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            permutation: PermSpec::Named("rev4".into()),
            seed: 1,
            precision_bits: 256,
            balance_radius: 2.0,
            balance_delta: 0.1,
            depth: 30,
            warmup: 20,
            trials: 1,
            jobs: 1,
            step_budget: 200_000,
            mass_budget: 10_000_000,
            cocycle: None,
            flow_time: 1e6,
            grid_dt: 0.25,
            window_a: (0.0, 1.0),
            window_b: (1.0, 2.0),
            s_values: vec![2.0, 4.0, 8.0],
            out_dir: "out".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.precision_bits < 64 || self.precision_bits > 8192 {
            return Err(Error::ConfigInvalid("precision_bits out of range".into()));
        }
        if !(0.0 < self.balance_delta && self.balance_delta < 1.0) {
            return Err(Error::ConfigInvalid("balance_delta must be in (0,1)".into()));
        }
        if self.balance_radius <= 0.0 {
            return Err(Error::ConfigInvalid("balance_radius must be positive".into()));
        }
        if self.depth == 0 {
            return Err(Error::ConfigInvalid("depth must be at least 1".into()));
        }
        self.permutation.to_perm()?;
        Ok(())
    }

    /// Stable content hash over the canonical JSON form.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        fnv1a(json.as_bytes())
    }
}
