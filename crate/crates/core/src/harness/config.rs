//! Experiment configuration, read from TOML. Every field has a default, so a
//! partial file overrides only what it names.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::estimator::EstimatorSpec;
use crate::modem::{AfdmConfig, DEFAULT_C2};
use crate::sbl::SblConfig;

/// Speed of light used by the velocity mapping, m/s.
pub const SPEED_OF_LIGHT: f64 = 3e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AfdmSection {
    pub n: usize,
    pub subcarrier_spacing_hz: f64,
    pub carrier_hz: f64,
    pub k_max: usize,
    pub l_max: usize,
    pub n_guard_doppler: usize,
    pub c2: f64,
}

impl Default for AfdmSection {
    fn default() -> Self {
        Self {
            n: 256,
            subcarrier_spacing_hz: 15e3,
            carrier_hz: 4e9,
            k_max: 3,
            l_max: 7,
            n_guard_doppler: 1,
            c2: DEFAULT_C2,
        }
    }
}

/// Path count and Doppler spread of the drawn channels. When `velocity_mps`
/// is set it overrides `k_max` and the grid uses the rounded-up value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub n_paths: usize,
    pub k_max: Option<f64>,
    pub velocity_mps: Option<f64>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            n_paths: 4,
            k_max: None,
            velocity_mps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSection {
    pub n_pilots: usize,
    pub pilot_boost_db: f64,
}

impl Default for FrameSection {
    fn default() -> Self {
        Self {
            n_pilots: 5,
            pilot_boost_db: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub r_tau: f64,
    pub r_nu: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            r_tau: 1.0,
            r_nu: 1.0,
        }
    }
}

/// Estimator hyperparameters. `P_bar` always follows from the window and
/// grid sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SblSection {
    pub rho: f64,
    pub gamma_prior_c: f64,
    pub gamma_prior_d: f64,
    pub support_threshold: f64,
    pub convergence_tol: f64,
    pub max_iters: usize,
}

impl Default for SblSection {
    fn default() -> Self {
        let d = SblConfig::new(1, 1);
        Self {
            rho: d.rho,
            gamma_prior_c: d.gamma_prior_c,
            gamma_prior_d: d.gamma_prior_d,
            support_threshold: d.support_threshold,
            convergence_tol: d.convergence_tol,
            max_iters: d.max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub afdm: AfdmSection,
    pub channel: ChannelSection,
    pub frame: FrameSection,
    pub grid: GridSection,
    pub sbl: SblSection,
    /// Estimator tags, see [`EstimatorSpec::parse`].
    pub estimators: Vec<String>,
    pub snr_db_list: Vec<f64>,
    pub n_trials: usize,
    pub seed: u64,
    pub output_path: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            afdm: AfdmSection::default(),
            channel: ChannelSection::default(),
            frame: FrameSection::default(),
            grid: GridSection::default(),
            sbl: SblSection::default(),
            estimators: [
                "sbl",
                "og-sbl",
                "gr-sbl:0.1",
                "gr-sbl:0.01",
                "ge-sbl",
                "genie",
            ]
            .map(String::from)
            .to_vec(),
            snr_db_list: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            n_trials: 100,
            seed: 1,
            output_path: "results.csv".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::InvalidConfig("n_trials must be at least 1".into()));
        }
        if self.snr_db_list.is_empty() || self.snr_db_list.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig(
                "snr_db_list must be a non-empty list of finite values".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators configured".into()));
        }
        self.estimator_specs()?;
        if let Some(v) = self.channel.velocity_mps {
            if !(v >= 0.0) {
                return Err(Error::InvalidConfig("velocity must be non-negative".into()));
            }
        }
        if let Some(k) = self.channel.k_max {
            if !(k >= 0.0) {
                return Err(Error::InvalidConfig(
                    "channel k_max must be non-negative".into(),
                ));
            }
        }
        self.afdm_config()?;
        self.sbl_config(1, 1).validate()
    }

    pub fn estimator_specs(&self) -> Result<Vec<EstimatorSpec>> {
        self.estimators
            .iter()
            .map(|t| EstimatorSpec::parse(t))
            .collect()
    }

    /// Maximum true Doppler of the drawn channels.
    pub fn true_k_max(&self) -> f64 {
        match (self.channel.velocity_mps, self.channel.k_max) {
            (Some(v), _) => {
                doppler_from_velocity(v, self.afdm.carrier_hz, self.afdm.subcarrier_spacing_hz)
            }
            (None, Some(k)) => k,
            (None, None) => self.afdm.k_max as f64,
        }
    }

    /// Waveform parameters. The integer Doppler span covers the true spread
    /// rounded up.
    pub fn afdm_config(&self) -> Result<AfdmConfig> {
        let a = &self.afdm;
        let k_grid = if self.channel.velocity_mps.is_some() || self.channel.k_max.is_some() {
            self.true_k_max().ceil() as usize
        } else {
            a.k_max
        };
        AfdmConfig::new(
            a.n,
            a.subcarrier_spacing_hz,
            a.carrier_hz,
            k_grid,
            a.l_max,
            a.n_guard_doppler,
            a.c2,
        )
    }

    pub fn sbl_config(&self, m_t: usize, m_s: usize) -> SblConfig {
        let s = &self.sbl;
        SblConfig {
            rho: s.rho,
            gamma_prior_c: s.gamma_prior_c,
            gamma_prior_d: s.gamma_prior_d,
            support_threshold: s.support_threshold,
            convergence_tol: s.convergence_tol,
            max_iters: s.max_iters,
            p_bar: SblConfig::p_bar_for(m_t, m_s),
        }
    }
}

/// Normalized maximum Doppler `v f_c / (c subcarrier_spacing)`.
pub fn doppler_from_velocity(v_mps: f64, carrier_hz: f64, subcarrier_spacing_hz: f64) -> f64 {
    v_mps * carrier_hz / (SPEED_OF_LIGHT * subcarrier_spacing_hz)
}

/// Velocity whose maximum Doppler is `k` bins.
pub fn velocity_for_doppler(k: f64, carrier_hz: f64, subcarrier_spacing_hz: f64) -> f64 {
    k * SPEED_OF_LIGHT * subcarrier_spacing_hz / carrier_hz
}
