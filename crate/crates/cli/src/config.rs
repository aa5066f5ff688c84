//! Versioned experiment configuration.

use dampwave::hotspots::{Schedule, SearchParams};
use dampwave::initdata::InitDataSpec;
use dampwave::pde::EngineRule;
use dampwave::quadrature::QuadSpec;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Schema version understood by this binary.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub initial_data: InitDataSpec,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub search: SearchParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Either explicit times or a logarithmic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_range: Option<LogRange>,
    #[serde(default = "default_phi")]
    pub phi_exponent: f64,
    #[serde(default = "default_psi")]
    pub psi_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRange {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

fn default_phi() -> f64 {
    2.0 / 3.0
}

fn default_psi() -> f64 {
    1.0 / 3.0
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            times: None,
            log_range: Some(LogRange {
                start: 25.0,
                end: 200.0,
                count: 8,
            }),
            phi_exponent: default_phi(),
            psi_exponent: default_psi(),
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> dampwave::Result<Schedule> {
        let mut schedule = match (&self.times, &self.log_range) {
            (Some(times), None) => Schedule::new(times.clone())?,
            (None, Some(r)) => Schedule::log_range(r.start, r.end, r.count)?,
            _ => {
                return Err(dampwave::Error::Invalid {
                    op: "schedule",
                    msg: "give exactly one of `times` and `log_range`".into(),
                })
            }
        };
        schedule.phi_exponent = self.phi_exponent;
        schedule.psi_exponent = self.psi_exponent;
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Overrides of the default quadrature.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Fixed product rule of the main evaluation path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine_rule: Option<EngineRule>,
    /// Tolerances of the adaptive reference routes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<QuadSpec>,
}

impl ExperimentConfig {
    /// The shipped configuration: the asymmetric planar regression setup.
    pub fn default_for_dim(dim: usize) -> Self {
        let setup = dampwave::acceptance::standard_setup(dim);
        ExperimentConfig {
            version: SCHEMA_VERSION,
            initial_data: InitDataSpec {
                dim,
                f: setup.f.bumps.clone(),
                g: setup.g.bumps.clone(),
                normalize_l1: None,
            },
            schedule: ScheduleConfig::default(),
            quadrature: QuadratureConfig::default(),
            search: SearchParams::default(),
            output_dir: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if cfg.version != SCHEMA_VERSION {
            return Err(format!(
                "field `version`: expected {SCHEMA_VERSION}, found {}",
                cfg.version
            ));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
