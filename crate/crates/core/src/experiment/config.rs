use crate::devices::{AtomInit, ExtractionMethod, LaserParams, PiaParams};
use crate::error::{invalid, Error, Result};
use crate::homodyne::HomodyneConfig;
use crate::json::config_hash;
use crate::twinbeam::{outcome_distribution, TwinBeamConfig};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Largest total sample count accepted without `--paper-scale`.
pub const DESK_MAX_TOTAL_SAMPLES: u64 = 200_000_000;
/// Largest trajectory count accepted without `--paper-scale`.
pub const DESK_MAX_TRAJECTORIES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviceSpec {
    Pia(PiaDevice),
    Laser(LaserDevice),
    GreenCsv(GreenCsvDevice),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiaDevice {
    pub a_gain: f64,
    pub b_loss: f64,
    pub tau: f64,
    /// Fock cutoff used to simulate the device.
    pub dim: usize,
}

impl PiaDevice {
    pub fn params(&self) -> PiaParams {
        PiaParams { a_gain: self.a_gain, b_loss: self.b_loss, tau: self.tau }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GreenSource {
    #[default]
    Ode,
    QuantumJump,
}

fn default_trajectories() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserDevice {
    pub c_coop: f64,
    pub n_sat: f64,
    pub sigma0: f64,
    pub f_ratio: f64,
    pub gamma_cav: f64,
    pub t_star: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_override: Option<f64>,
    pub dim: usize,
    #[serde(default)]
    pub init: AtomInit,
    /// Which Green matrix drives the simulated data.
    #[serde(default)]
    pub green: GreenSource,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
}

impl LaserDevice {
    pub fn params(&self) -> LaserParams {
        LaserParams {
            c_coop: self.c_coop,
            n_sat: self.n_sat,
            sigma0: self.sigma0,
            f_ratio: self.f_ratio,
            gamma_cav: self.gamma_cav,
            t_star: self.t_star,
            g_override: self.g_override,
        }
    }

    /// Fig. 4 parameters on `dim` photon levels.
    pub fn fig4(dim: usize) -> Self {
        let p = LaserParams::fig4();
        Self {
            c_coop: p.c_coop,
            n_sat: p.n_sat,
            sigma0: p.sigma0,
            f_ratio: p.f_ratio,
            gamma_cav: p.gamma_cav,
            t_star: p.t_star,
            g_override: None,
            dim,
            init: AtomInit::Excited,
            green: GreenSource::Ode,
            trajectories: default_trajectories(),
        }
    }
}

/// Green matrix read from a `row,col,value,sigma` CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenCsvDevice {
    pub path: PathBuf,
    pub tau: f64,
}

impl DeviceSpec {
    /// Device dimension when it is known without reading files.
    pub fn dim(&self) -> Option<usize> {
        match self {
            DeviceSpec::Pia(p) => Some(p.dim),
            DeviceSpec::Laser(l) => Some(l.dim),
            DeviceSpec::GreenCsv(_) => None,
        }
    }

    pub fn tau(&self) -> f64 {
        match self {
            DeviceSpec::Pia(p) => p.tau,
            DeviceSpec::Laser(l) => l.t_star,
            DeviceSpec::GreenCsv(c) => c.tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DeviceSpec::Pia(p) => p.params().validate(),
            DeviceSpec::Laser(l) => {
                l.params().validate()?;
                if !(l.t_star > 0.0) {
                    return invalid("device: laser t_star must be positive for reconstruction");
                }
                if l.green == GreenSource::QuantumJump && l.trajectories == 0 {
                    return invalid("device: quantum-jump Green matrix needs trajectories > 0");
                }
                Ok(())
            }
            DeviceSpec::GreenCsv(c) => {
                if !(c.tau > 0.0 && c.tau.is_finite()) {
                    return invalid(format!("device: tau = {} must be finite and positive", c.tau));
                }
                Ok(())
            }
        }?;
        if let Some(d) = self.dim() {
            if d < 2 {
                return invalid(format!("device: dim = {d} must be at least 2"));
            }
        }
        Ok(())
    }
}

fn default_n_max() -> usize {
    24
}
fn default_tail_epsilon() -> f64 {
    1e-9
}
fn default_floor() -> f64 {
    1e-4
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionConfig {
    /// Side of the reconstructed Green matrix.
    pub size: usize,
    /// Rows and columns dropped from the comparison block at the truncation edge.
    pub guard: usize,
    /// Most outcomes beyond l entering the inversion of column l.
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_tail_epsilon")]
    pub tail_epsilon: f64,
    #[serde(default)]
    pub method: ExtractionMethod,
    /// Retry smaller blocks, then finite differences, when the logarithm fails.
    #[serde(default = "yes")]
    pub allow_fallback: bool,
    /// Outcomes with p_n at or above this are retained in addition to n ≤ n_outcome_max.
    #[serde(default = "default_floor")]
    pub outcome_floor: f64,
    /// Split samples across outcomes in proportion to p_n instead of equally.
    #[serde(default)]
    pub weighted_allocation: bool,
    /// Accumulate per-sample covariances for the joint tridiagonality test.
    #[serde(default)]
    pub covariance: bool,
}

impl ReconstructionConfig {
    pub fn compare(&self) -> usize {
        self.size - self.guard
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub device: DeviceSpec,
    pub twin_beam: TwinBeamConfig,
    pub homodyne: HomodyneConfig,
    pub reconstruction: ReconstructionConfig,
    pub seed: u64,
    /// Worker threads; does not affect any output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.twin_beam.validate()?;
        if self.twin_beam.series_ratio().abs() >= 1.0 {
            return invalid(format!(
                "twin_beam: kappa2 (1 - eta_d) = {} must be below 1/2 for the inversion series to converge",
                self.twin_beam.z()
            ));
        }
        self.homodyne.validate()?;
        let r = &self.reconstruction;
        if r.size == 0 || r.guard >= r.size {
            return invalid(format!("reconstruction: size = {} must exceed guard = {}", r.size, r.guard));
        }
        if self.homodyne.k_max + 1 < r.size {
            return invalid(format!("homodyne.k_max = {} does not cover reconstruction.size = {}", self.homodyne.k_max, r.size));
        }
        if self.twin_beam.n_outcome_max + 1 < r.size {
            return invalid(format!(
                "twin_beam.n_outcome_max = {} must reach the last reconstructed column {}",
                self.twin_beam.n_outcome_max,
                r.size - 1
            ));
        }
        if !(r.tail_epsilon > 0.0) {
            return invalid("reconstruction: tail_epsilon must be positive");
        }
        if !(r.outcome_floor > 0.0 && r.outcome_floor < 1.0) {
            return invalid(format!("reconstruction: outcome_floor = {} must lie in (0, 1)", r.outcome_floor));
        }
        if let Some(d) = self.device.dim() {
            self.check_dim(d)?;
        }
        if self.workers == Some(0) {
            return invalid("workers must be at least 1");
        }
        Ok(())
    }

    /// Cross-field requirement k_max + n_outcome_max + guard ≤ device dim.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        let need = self.homodyne.k_max + self.twin_beam.n_outcome_max + self.reconstruction.guard;
        if need > dim {
            return invalid(format!(
                "device dim {dim} is smaller than homodyne.k_max + twin_beam.n_outcome_max + reconstruction.guard = {need}"
            ));
        }
        Ok(())
    }

    /// Rejects runs beyond desk scale unless `paper_scale` is set.
    pub fn check_scale(&self, paper_scale: bool) -> Result<()> {
        let total = self.homodyne.samples_per_state.saturating_mul(self.retained_outcomes().len() as u64);
        let traj = match &self.device {
            DeviceSpec::Laser(l) if l.green == GreenSource::QuantumJump => l.trajectories,
            _ => 0,
        };
        if total <= DESK_MAX_TOTAL_SAMPLES && traj <= DESK_MAX_TRAJECTORIES {
            return Ok(());
        }
        if paper_scale {
            log::warn!("paper-scale run: {total} homodyne samples, {traj} trajectories");
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{total} samples / {traj} trajectories exceed the desk-scale caps ({DESK_MAX_TOTAL_SAMPLES} / {DESK_MAX_TRAJECTORIES}); pass --paper-scale to lift them"
            )))
        }
    }

    /// Outcomes n with p_n ≥ floor or n ≤ n_outcome_max, ascending.
    pub fn retained_outcomes(&self) -> Vec<usize> {
        let floor = self.reconstruction.outcome_floor;
        let mut out: Vec<usize> = (0..=self.twin_beam.n_outcome_max).collect();
        let mut n = self.twin_beam.n_outcome_max + 1;
        // p_n is geometric in n, so the first miss ends the scan
        while outcome_distribution(&self.twin_beam, n) >= floor {
            out.push(n);
            n += 1;
        }
        out
    }

    /// The configuration without run-environment fields, as echoed and hashed.
    pub fn canonical(&self) -> Self {
        Self { workers: None, output_dir: None, ..self.clone() }
    }

    pub fn hash(&self) -> Result<String> {
        config_hash(&self.canonical())
    }
}
