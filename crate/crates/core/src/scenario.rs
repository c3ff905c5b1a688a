//! JSON scenario configuration for the two-mass interferometer.
//!
//! Every field is optional; omitted fields take the documented defaults.
//!
//! ```json
//! {
//!   "model": "dp-monitoring",
//!   "m": 1.0, "a": 1.0, "d": 3.0, "sigma": 10.0,
//!   "kappa": 2.0,
//!   "constants": "natural",
//!   "time": { "t_max": 10.0, "n_points": 11 },
//!   "trajectories": { "n_traj": 10000, "dt": 0.001, "master_seed": 0, "scheme": "exponential" },
//!   "bipartition": [0]
//! }
//! ```

use serde::{Deserialize, Serialize};

use crate::entanglement::Bipartition;
use crate::error::{validation, Error, Result};
use crate::evolution::uniform_times;
use crate::generators::{dp_full_generator, feedback_averaged_generator, monitoring_generator, GeneratorTables};
use crate::model::{bmv_system, uniform_product_state, DensityMatrix, Kernel, ParticleSystem, PhysicalConstants};
use crate::trajectories::{EnsembleConfig, EnsembleMode, PhaseSign, Scheme};

/// Largest config file accepted, in bytes.
pub const MAX_CONFIG_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// DP monitoring dissipator alone.
    #[default]
    DpMonitoring,
    /// DP monitoring plus averaged feedback and pair potential.
    DpFull,
    /// CSL monitoring dissipator alone.
    CslMonitoring,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantsProfile {
    /// `G = hbar = 1`.
    #[default]
    Natural,
    Si,
}

impl ConstantsProfile {
    pub fn constants(self) -> PhysicalConstants {
        match self {
            Self::Natural => PhysicalConstants::natural(),
            Self::Si => PhysicalConstants::si(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeGrid {
    pub t_max: f64,
    pub n_points: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { t_max: 10.0, n_points: 11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryOptions {
    pub n_traj: usize,
    pub dt: f64,
    pub master_seed: u64,
    pub scheme: Scheme,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self { n_traj: 10_000, dt: 1e-3, master_seed: 0, scheme: Scheme::Exponential }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub model: ModelKind,
    pub m: f64,
    pub a: f64,
    pub d: f64,
    pub sigma: f64,
    /// DP monitoring strength; defaults to 2 for the DP models.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// CSL strength; required for `csl-monitoring`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub constants: ConstantsProfile,
    pub time: TimeGrid,
    pub trajectories: TrajectoryOptions,
    pub bipartition: Bipartition,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::DpMonitoring,
            m: 1.0,
            a: 1.0,
            d: 3.0,
            sigma: 10.0,
            kappa: None,
            gamma: None,
            constants: ConstantsProfile::Natural,
            time: TimeGrid::default(),
            trajectories: TrajectoryOptions::default(),
            bipartition: Bipartition::first_particle(),
        }
    }
}

impl ScenarioConfig {
    /// Parse and validate.
    pub fn from_json_str(text: &str) -> Result<Self> {
        if text.len() > MAX_CONFIG_BYTES {
            return validation(format!("config larger than {MAX_CONFIG_BYTES} bytes"));
        }
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse(format!("config is not UTF-8: {e}")))?;
        Self::from_json_str(text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("m", self.m), ("a", self.a), ("d", self.d), ("sigma", self.sigma), ("time.t_max", self.time.t_max), ("trajectories.dt", self.trajectories.dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return validation(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.time.n_points < 2 {
            return validation("time.n_points must be at least 2");
        }
        if self.trajectories.n_traj == 0 {
            return validation("trajectories.n_traj must be at least 1");
        }
        match self.model {
            ModelKind::CslMonitoring => {
                if self.kappa.is_some() {
                    return validation("csl-monitoring does not take kappa");
                }
                if self.gamma.is_none() {
                    return validation("csl-monitoring needs gamma");
                }
            }
            ModelKind::DpMonitoring | ModelKind::DpFull => {
                if self.gamma.is_some() {
                    return validation("DP models do not take gamma");
                }
            }
        }
        self.kernel().validate()?;
        if self.bipartition.left().iter().any(|&p| p >= 2) || self.bipartition.left().len() != 1 {
            return validation("bipartition must name exactly one of the two particles");
        }
        Ok(())
    }

    pub fn kernel(&self) -> Kernel {
        match self.model {
            ModelKind::CslMonitoring => Kernel::Csl { gamma: self.gamma.unwrap_or(f64::NAN) },
            _ => Kernel::Dp { kappa: self.kappa.unwrap_or(Kernel::DP_DEFAULT_KAPPA) },
        }
    }

    pub fn physical_constants(&self) -> PhysicalConstants {
        self.constants.constants()
    }

    pub fn system(&self) -> Result<ParticleSystem> {
        bmv_system(self.m, self.a, self.d, self.sigma)
    }

    /// The product superposition over all four configurations.
    pub fn initial_state(&self) -> Result<DensityMatrix> {
        Ok(uniform_product_state(&self.system()?))
    }

    pub fn times(&self) -> Vec<f64> {
        uniform_times(self.time.t_max, self.time.n_points)
    }

    /// Monitoring dissipator of the configured kernel (the unraveled part).
    pub fn monitoring_tables(&self) -> Result<GeneratorTables> {
        monitoring_generator(&self.system()?, &self.kernel(), &self.physical_constants())
    }

    /// Averaged generator of the configured model.
    pub fn averaged_tables(&self) -> Result<GeneratorTables> {
        let system = self.system()?;
        let k = self.physical_constants();
        match (self.model, self.kernel()) {
            (ModelKind::DpFull, Kernel::Dp { kappa }) if kappa == Kernel::DP_DEFAULT_KAPPA => dp_full_generator(&system, &k),
            (ModelKind::DpFull, Kernel::Dp { kappa }) => feedback_averaged_generator(&system, kappa, &k),
            _ => monitoring_generator(&system, &self.kernel(), &k),
        }
    }

    pub fn ensemble_mode(&self) -> EnsembleMode {
        match self.model {
            ModelKind::DpFull => EnsembleMode::WithBackaction,
            _ => EnsembleMode::MonitoringOnly,
        }
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            n_traj: self.trajectories.n_traj,
            dt: self.trajectories.dt,
            master_seed: self.trajectories.master_seed,
            times: self.times(),
            scheme: self.trajectories.scheme,
            mode: self.ensemble_mode(),
            phase_sign: PhaseSign::Nominal,
        }
    }
}
