//! Run configuration: a TOML file checked against the versioned schema in
//! `schema/config.schema.json` before anything is computed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::effective::AverageOptions;
use crate::environment::{EnvironmentLaw, Observable, WeightLaw};
use crate::error::{config_err, Result};
use crate::experiments::{
    BerryEsseenSetup, CensusSetup, CorrectorSetup, DataFn, ErgodicitySetup, HomogSetup, MuDecaySetup,
};
use crate::solver::SolveSettings;

pub const SCHEMA_VERSION: u32 = 1;

/// Names of the experiment kinds, as written in configs.
pub const EXPERIMENT_KINDS: [&str; 7] =
    ["homog_elliptic", "homog_parabolic", "corrector", "ergodicity", "berry_esseen", "census", "mu_decay"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    pub dim: usize,
    pub weights: WeightLaw,
    /// Declared ellipticity constant; the sharp one when absent.
    #[serde(default)]
    pub kappa: Option<f64>,
}

impl LawConfig {
    pub fn build(&self) -> Result<EnvironmentLaw> {
        match self.kappa {
            Some(k) => EnvironmentLaw::with_kappa(self.dim, self.weights.clone(), k),
            None => EnvironmentLaw::new(self.dim, self.weights.clone()),
        }
    }
}

/// Settings of an independent reference run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub horizon: u64,
    pub replicas: usize,
    pub walks: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
}

fn default_burn_in() -> f64 {
    0.1
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { horizon: 100_000, replicas: 8, walks: 100, burn_in: 0.1 }
    }
}

impl ReferenceConfig {
    /// Options for the reference run; the experiment replaces the seed.
    pub fn options(&self) -> AverageOptions {
        AverageOptions { burn_in: self.burn_in, ..AverageOptions::new(self.horizon, self.replicas, self.walks, 0) }
    }
}

fn default_psi() -> Observable {
    Observable::Const { value: 1.0 }
}

fn default_one() -> usize {
    1
}

fn default_max_bad_fraction() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentConfig {
    HomogElliptic {
        ladder: Vec<u32>,
        replicas: usize,
        f: DataFn,
        g: DataFn,
        #[serde(default = "default_psi")]
        psi: Observable,
        #[serde(default)]
        spacing: Option<f64>,
        #[serde(default)]
        reference: ReferenceConfig,
        #[serde(default)]
        solver: SolveSettings,
    },
    HomogParabolic {
        ladder: Vec<u32>,
        replicas: usize,
        f: DataFn,
        g: DataFn,
        #[serde(default = "default_psi")]
        psi: Observable,
        #[serde(default)]
        spacing: Option<f64>,
        #[serde(default)]
        reference: ReferenceConfig,
    },
    Corrector {
        ladder: Vec<u32>,
        replicas: usize,
        psi: Observable,
        #[serde(default)]
        reference: ReferenceConfig,
        #[serde(default)]
        solver: SolveSettings,
    },
    Ergodicity {
        ladder: Vec<u64>,
        replicas: usize,
        walks: usize,
        psi: Observable,
        #[serde(default)]
        reference: ReferenceConfig,
    },
    BerryEsseen {
        ladder: Vec<u64>,
        direction: Vec<f64>,
        walks: usize,
        #[serde(default = "default_one")]
        environments: usize,
        #[serde(default)]
        threshold: Option<f64>,
        #[serde(default)]
        reference: ReferenceConfig,
    },
    Census {
        radius: u32,
        gamma: f64,
        threshold: f64,
        alpha: f64,
        #[serde(default = "default_psi")]
        psi: Observable,
        environments: usize,
        #[serde(default = "default_max_bad_fraction")]
        max_bad_fraction: f64,
        #[serde(default)]
        reference: ReferenceConfig,
    },
    MuDecay {
        ladder: Vec<u32>,
        #[serde(default)]
        offsets: Vec<f64>,
        replicas: usize,
        psi: Observable,
        #[serde(default)]
        reference: ReferenceConfig,
        #[serde(default)]
        solver: SolveSettings,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default = "default_one")]
    pub workers: usize,
    /// Run directory, relative to the config file unless absolute.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub law: LawConfig,
    pub experiment: ExperimentConfig,
}

/// A configuration with its law built and its setup checked.
#[derive(Clone, Debug)]
pub struct Validated {
    pub config: Config,
    pub law: EnvironmentLaw,
    pub plan: Plan,
}

/// The experiment call a configuration resolves to.
#[derive(Clone, Debug)]
pub enum Plan {
    HomogElliptic(HomogSetup),
    HomogParabolic(HomogSetup),
    Corrector(CorrectorSetup),
    Ergodicity(ErgodicitySetup),
    BerryEsseen(BerryEsseenSetup),
    Census(CensusSetup),
    MuDecay(MuDecaySetup),
}

impl Config {
    /// Parse TOML text. Syntax and schema errors carry line and column.
    pub fn parse(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| config_err(format!("schema violation: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn kind(&self) -> &'static str {
        match self.experiment {
            ExperimentConfig::HomogElliptic { .. } => "homog_elliptic",
            ExperimentConfig::HomogParabolic { .. } => "homog_parabolic",
            ExperimentConfig::Corrector { .. } => "corrector",
            ExperimentConfig::Ergodicity { .. } => "ergodicity",
            ExperimentConfig::BerryEsseen { .. } => "berry_esseen",
            ExperimentConfig::Census { .. } => "census",
            ExperimentConfig::MuDecay { .. } => "mu_decay",
        }
    }

    /// SHA-256 of the canonical JSON form, so formatting changes in the file
    /// do not change the digest.
    pub fn digest(&self) -> String {
        let canon = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&canon);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Build the law and the experiment setup, running every invariant check.
    pub fn validate(&self) -> Result<Validated> {
        if self.workers == 0 {
            return Err(config_err("workers must be at least 1"));
        }
        let law = self.law.build()?;
        let seed = self.seed;
        let plan = match &self.experiment {
            ExperimentConfig::HomogElliptic { ladder, replicas, f, g, psi, spacing, reference, solver } => {
                let s = HomogSetup {
                    law: law.clone(),
                    ladder: ladder.clone(),
                    f: f.clone(),
                    g: g.clone(),
                    psi: psi.clone(),
                    replicas: *replicas,
                    seed,
                    reference: reference.options(),
                    spacing: *spacing,
                    solver: *solver,
                };
                s.validate(false)?;
                Plan::HomogElliptic(s)
            }
            ExperimentConfig::HomogParabolic { ladder, replicas, f, g, psi, spacing, reference } => {
                let s = HomogSetup {
                    law: law.clone(),
                    ladder: ladder.clone(),
                    f: f.clone(),
                    g: g.clone(),
                    psi: psi.clone(),
                    replicas: *replicas,
                    seed,
                    reference: reference.options(),
                    spacing: *spacing,
                    solver: SolveSettings::default(),
                };
                s.validate(true)?;
                Plan::HomogParabolic(s)
            }
            ExperimentConfig::Corrector { ladder, replicas, psi, reference, solver } => {
                let s = CorrectorSetup {
                    law: law.clone(),
                    ladder: ladder.clone(),
                    psi: psi.clone(),
                    replicas: *replicas,
                    seed,
                    reference: reference.options(),
                    solver: *solver,
                };
                s.validate()?;
                Plan::Corrector(s)
            }
            ExperimentConfig::Ergodicity { ladder, replicas, walks, psi, reference } => {
                let s = ErgodicitySetup {
                    law: law.clone(),
                    ladder: ladder.clone(),
                    psi: psi.clone(),
                    replicas: *replicas,
                    walks: *walks,
                    seed,
                    reference: reference.options(),
                };
                s.validate()?;
                Plan::Ergodicity(s)
            }
            ExperimentConfig::BerryEsseen { ladder, direction, walks, environments, threshold, reference } => {
                let s = BerryEsseenSetup {
                    law: law.clone(),
                    ladder: ladder.clone(),
                    direction: direction.clone(),
                    walks: *walks,
                    environments: *environments,
                    seed,
                    reference: reference.options(),
                    threshold: *threshold,
                };
                s.validate()?;
                Plan::BerryEsseen(s)
            }
            ExperimentConfig::Census {
                radius,
                gamma,
                threshold,
                alpha,
                psi,
                environments,
                max_bad_fraction,
                reference,
            } => {
                if !(*gamma > 0.0 && *gamma < 0.5) {
                    return Err(config_err(format!("census gamma = {gamma} not in (0, 1/2)")));
                }
                if !(*threshold > 0.0) || *environments == 0 || *radius == 0 {
                    return Err(config_err("census needs a positive threshold, radius and environment count"));
                }
                psi.validate(law.dim())?;
                Plan::Census(CensusSetup {
                    law: law.clone(),
                    radius: *radius,
                    gamma: *gamma,
                    threshold: *threshold,
                    alpha: *alpha,
                    psi: psi.clone(),
                    environments: *environments,
                    seed,
                    reference: reference.options(),
                    max_bad_fraction: *max_bad_fraction,
                })
            }
            ExperimentConfig::MuDecay { ladder, offsets, replicas, psi, reference, solver } => {
                let s = MuDecaySetup {
                    law: law.clone(),
                    ladder: ladder.clone(),
                    offsets: offsets.clone(),
                    psi: psi.clone(),
                    replicas: *replicas,
                    seed,
                    reference: reference.options(),
                    solver: *solver,
                };
                s.validate()?;
                Plan::MuDecay(s)
            }
        };
        Ok(Validated { config: self.clone(), law, plan })
    }
}
