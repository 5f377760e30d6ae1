use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ard_core::ard::{AscentConfig, AttackBox, FeasibleAttackSet, StealthModel, MIN_CLOUD_DRAWS, MIN_DIRECTIONS};
use ard_core::dq::{ParamBounds, N_COORDS, N_OP};
use ard_core::network::{
    demo, ApiSpec, ArdSpec, AssessConfig, BusType, GridSpec, ModeSpec, SystemDescription, VectorFitSpec,
};
use ard_core::surrogate::{DatasetMode, FitOptions};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateMode {
    WhiteboxOracle,
    RationalFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusAttack {
    #[serde(rename = "box", default)]
    pub attack_box: Option<AttackBox>,
    #[serde(default)]
    pub attackable: Option<[bool; N_COORDS]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    /// Offsets around each unit's nominal point: per unit for the operating
    /// point, fractions of nominal for control parameters.
    #[serde(rename = "box")]
    pub attack_box: AttackBox,
    pub attackable: [bool; N_COORDS],
    #[serde(default)]
    pub per_bus: BTreeMap<u32, BusAttack>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StealthSpec {
    pub bdd_weights: [f64; N_OP],
    pub eps1: f64,
    pub ids_weights: [f64; N_COORDS - N_OP],
    pub eps2: f64,
}

fn default_degree() -> usize {
    2
}
fn default_dataset_size() -> usize {
    200
}
fn default_ridge() -> f64 {
    1e-10
}
fn default_dataset_mode() -> DatasetMode {
    DatasetMode::ViaEra
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSpec {
    pub mode: SurrogateMode,
    #[serde(default = "default_degree")]
    pub basis_degree: usize,
    #[serde(default = "default_degree")]
    pub rho_degree: usize,
    #[serde(default = "default_dataset_size")]
    pub dataset_size: usize,
    #[serde(default = "default_dataset_mode")]
    pub dataset_mode: DatasetMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    /// Training domain, in the same offsets as the attack box.
    #[serde(rename = "box")]
    pub training_box: AttackBox,
    pub trainable: [bool; N_COORDS],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// System description, relative to the config file.
    pub system: PathBuf,
    /// Inverter buses to assess; empty means all.
    #[serde(default)]
    pub targets: Vec<u32>,
    #[serde(default)]
    pub grid: GridSpec,
    pub attack: AttackSpec,
    pub stealth: StealthSpec,
    pub surrogate: SurrogateSpec,
    pub vector_fit: VectorFitSpec,
    pub modes: ModeSpec,
    pub ard: ArdSpec,
    #[serde(default)]
    pub optimizer: AscentConfig,
    #[serde(default)]
    pub api: ApiSpec,
    /// Output directory, relative to the config file.
    pub output_dir: PathBuf,
}

/// A validated config with its system loaded and paths resolved.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: RunConfig,
    pub system: SystemDescription,
    pub output_dir: PathBuf,
}

fn bad<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply_seed(&mut self, seed: u64) {
        self.ard.seed = seed;
        self.surrogate.seed = seed;
    }

    pub fn assess(&self) -> AssessConfig {
        AssessConfig {
            grid: self.grid,
            vector_fit: self.vector_fit,
            modes: self.modes,
            ard: self.ard,
            optimizer: self.optimizer,
            api: self.api,
        }
    }

    pub fn stealth_model(&self, sys: &SystemDescription) -> StealthModel {
        let s = &self.stealth;
        StealthModel {
            bdd_weights: s.bdd_weights,
            eps1: s.eps1,
            ids_weights: s.ids_weights,
            eps2: s.eps2,
            bases: sys.bases,
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            basis_degree: self.surrogate.basis_degree,
            rho_degree: self.surrogate.rho_degree,
            ridge: self.surrogate.ridge,
            split_seed: self.surrogate.seed,
            ..FitOptions::default()
        }
    }

    pub fn omega(&self, sys: &SystemDescription, bus: u32) -> Result<FeasibleAttackSet, CliError> {
        let unit = sys
            .unit_at(bus)
            .ok_or_else(|| CliError::Config(format!("bus {bus} hosts no inverter unit")))?;
        let over = self.attack.per_bus.get(&bus);
        let b = over.and_then(|o| o.attack_box).unwrap_or(self.attack.attack_box);
        let mask = over.and_then(|o| o.attackable).unwrap_or(self.attack.attackable);
        FeasibleAttackSet::from_box(unit.params, &b, mask, &sys.bases)
            .map_err(|e| CliError::Config(format!("attack set for bus {bus}: {e}")))
    }

    pub fn training_bounds(&self, sys: &SystemDescription, bus: u32) -> Result<ParamBounds, CliError> {
        let unit = sys
            .unit_at(bus)
            .ok_or_else(|| CliError::Config(format!("bus {bus} hosts no inverter unit")))?;
        FeasibleAttackSet::from_box(unit.params, &self.surrogate.training_box, self.surrogate.trainable, &sys.bases)
            .map(|o| o.bounds)
            .map_err(|e| CliError::Config(format!("surrogate training box for bus {bus}: {e}")))
    }

    /// Resolves paths, loads the system and checks everything that does not
    /// need a numerical run.
    pub fn load(self, config_path: &Path) -> Result<Loaded, CliError> {
        let base = config_path.parent().unwrap_or(Path::new("."));
        let sys_path = base.join(&self.system);
        let text = fs::read_to_string(&sys_path).map_err(|e| CliError::Config(format!("{}: {e}", sys_path.display())))?;
        let system: SystemDescription =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", sys_path.display())))?;
        let output_dir = base.join(&self.output_dir);
        let mut loaded = Loaded {
            config: self,
            system,
            output_dir,
        };
        loaded.validate()?;
        Ok(loaded)
    }
}

impl Loaded {
    pub fn targets(&self) -> Vec<u32> {
        if self.config.targets.is_empty() {
            self.system.ibr_buses()
        } else {
            self.config.targets.clone()
        }
    }

    /// The requested bus, or the first target.
    pub fn bus_or_default(&self, bus: Option<u32>) -> Result<u32, CliError> {
        let bus = match bus {
            Some(b) => b,
            None => self.targets()[0],
        };
        if self.system.bus_kind(bus) != Some(BusType::Ibr) {
            return bad(format!("bus {bus} is not an inverter bus"));
        }
        Ok(bus)
    }

    fn validate(&mut self) -> Result<(), CliError> {
        let c = &self.config;
        if c.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {}", c.version));
        }
        self.system.validate().map_err(|e| CliError::Config(format!("system: {e}")))?;
        let targets = self.targets();
        if targets.is_empty() {
            return bad("system has no inverter buses");
        }
        for &b in &targets {
            if self.system.bus_kind(b) != Some(BusType::Ibr) {
                return bad(format!("target {b} is not an inverter bus"));
            }
            c.omega(&self.system, b)?;
            if c.surrogate.mode == SurrogateMode::RationalFit {
                c.training_bounds(&self.system, b)?;
            }
        }
        for b in c.attack.per_bus.keys() {
            if !targets.contains(b) {
                return bad(format!("attack override for bus {b}, which is not a target"));
            }
        }
        c.stealth_model(&self.system).validate().map_err(|e| CliError::Config(format!("stealth: {e}")))?;
        c.grid.build().map_err(|e| CliError::Config(format!("grid: {e}")))?;
        if c.vector_fit.n_poles == 0 || c.vector_fit.iterations == 0 {
            return bad("vector_fit needs n_poles >= 1 and iterations >= 1");
        }
        let (lo, hi) = c.modes.band_hz;
        if !(lo >= 0.0 && hi > lo) || c.modes.top_k == 0 {
            return bad("modes need 0 <= band lo < band hi and top_k >= 1");
        }
        if c.ard.n_samples < MIN_CLOUD_DRAWS {
            return bad(format!("ard.n_samples must be at least {MIN_CLOUD_DRAWS}"));
        }
        if c.ard.directions < MIN_DIRECTIONS {
            return bad(format!("ard.directions must be at least {MIN_DIRECTIONS}"));
        }
        if !(c.optimizer.alpha > 0.0) || c.optimizer.max_iter == 0 || c.optimizer.restarts == 0 {
            return bad("optimizer needs alpha > 0, max_iter >= 1, restarts >= 1");
        }
        if c.api.grid_resolution == 0 || !(0.0..=1.0).contains(&c.api.gamma) {
            return bad("api needs grid_resolution >= 1 and gamma in [0, 1]");
        }
        let s = &c.surrogate;
        if s.mode == SurrogateMode::RationalFit && s.dataset_size < 10 {
            return bad("surrogate.dataset_size must be at least 10");
        }
        Ok(())
    }
}

/// Shipped demo configs: `(name, system, config)`.
pub fn demo_configs() -> Vec<(&'static str, SystemDescription, RunConfig)> {
    let training = SurrogateSpec {
        mode: SurrogateMode::WhiteboxOracle,
        basis_degree: 2,
        rho_degree: 2,
        dataset_size: 200,
        dataset_mode: DatasetMode::ViaEra,
        seed: 3,
        ridge: 1e-10,
        training_box: AttackBox {
            lo: [-0.1, -0.1, 0.0, -0.25, -0.5, 0.0, 0.0, 0.0, 0.0],
            hi: [0.1, 0.1, 0.0, 0.25, 0.5, 0.0, 0.0, 0.0, 0.0],
        },
        trainable: [true, true, false, true, true, false, false, false, false],
    };
    let make = |sc: demo::Scenario| {
        let s = sc.stealth;
        RunConfig {
            version: CONFIG_VERSION,
            system: PathBuf::from("system.json"),
            targets: sc.targets.clone(),
            grid: sc.assess.grid,
            attack: AttackSpec {
                attack_box: sc.attack_box,
                attackable: sc.mask,
                per_bus: BTreeMap::new(),
            },
            stealth: StealthSpec {
                bdd_weights: s.bdd_weights,
                eps1: s.eps1,
                ids_weights: s.ids_weights,
                eps2: s.eps2,
            },
            surrogate: training.clone(),
            vector_fit: sc.assess.vector_fit,
            modes: sc.assess.modes,
            ard: sc.assess.ard,
            optimizer: sc.assess.optimizer,
            api: sc.assess.api,
            output_dir: PathBuf::from("out"),
        }
    };
    let four = demo::four_bus_scenario();
    let multi = demo::multi_bus_scenario();
    vec![
        ("four_bus", four.system.clone(), make(four)),
        ("multi_bus", multi.system.clone(), make(multi)),
    ]
}
