//! Run configuration: a single TOML file describing the device, the solver
//! selection, the target response and the design problem. Units at this
//! boundary are eV, nm and V; conversion to SI happens here and nowhere else.

use std::path::PathBuf;

use serde::Deserialize;

use qbarrier_core::device::{Convention, DeviceSpec, TargetResponse};
use qbarrier_core::objective::{Quadrature, RobustSpec};
use qbarrier_core::optimizer::{GradientMode, MultiStart, OptimizerConfig};
use qbarrier_core::transmission::DeviceOptions;
use qbarrier_core::PhysicalConstants;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub device: DeviceSection,
    #[serde(default)]
    pub constants: ConstantsSection,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub solver: SolverSection,
    pub target: Option<TargetSection>,
    pub robust: Option<RobustSection>,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    pub quadrature: Option<QuadratureSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    /// Layer widths in nm; boundaries start at 0. Exclusive with boundaries_nm.
    pub widths_nm: Option<Vec<f64>>,
    /// Explicit boundaries x_0 < … < x_N in nm.
    pub boundaries_nm: Option<Vec<f64>>,
    /// Layer potentials U_1..U_N in eV.
    pub u_ev: Vec<f64>,
    #[serde(default)]
    pub outer_left_ev: f64,
    #[serde(default)]
    pub outer_right_ev: f64,
    /// Design bounds [U_L, U_R] in eV.
    pub bounds_ev: (f64, f64),
}

impl DeviceSection {
    pub fn to_spec(&self, constants: &PhysicalConstants) -> Result<DeviceSpec, CliError> {
        let boundaries_nm: Vec<f64> = match (&self.widths_nm, &self.boundaries_nm) {
            (Some(widths), None) => {
                let mut b = vec![0.0];
                for w in widths {
                    b.push(b.last().unwrap() + w);
                }
                b
            }
            (None, Some(b)) => b.clone(),
            _ => {
                return Err(CliError::Config(
                    "device needs exactly one of widths_nm, boundaries_nm".into(),
                ))
            }
        };
        let boundaries = boundaries_nm.iter().map(|b| b * 1e-9).collect();
        let u = self.u_ev.iter().map(|u| u * constants.e).collect();
        DeviceSpec::new(
            boundaries,
            u,
            self.outer_left_ev * constants.e,
            self.outer_right_ev * constants.e,
            (self.bounds_ev.0 * constants.e, self.bounds_ev.1 * constants.e),
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    pub hbar: Option<f64>,
    pub m0: Option<f64>,
    pub e: Option<f64>,
    pub effective_mass_factor: Option<f64>,
}

impl ConstantsSection {
    pub fn resolve(&self) -> PhysicalConstants {
        let mut c = PhysicalConstants::default();
        if let Some(v) = self.hbar {
            c.hbar = v;
        }
        if let Some(v) = self.m0 {
            c.m0 = v;
        }
        if let Some(v) = self.e {
            c.e = v;
        }
        if let Some(v) = self.effective_mass_factor {
            c.effective_mass_factor = v;
        }
        c
    }
}

/// Bias sweep for transmission, validate-wkb and oracle-compare. Points are
/// equally spaced over [v_min, v_max] including both ends; points = 0 emits
/// a header-only file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub energy_ev: f64,
    #[serde(default)]
    pub v_min: f64,
    pub v_max: f64,
    pub points: usize,
    /// Potentials for validate-wkb, eV; defaults to the device layers.
    pub u_ev: Option<Vec<f64>>,
}

impl SweepSection {
    pub fn biases(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.v_min],
            n => (0..n)
                .map(|i| self.v_min + i as f64 * (self.v_max - self.v_min) / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Registry name: hybrid-wkb, pcpm or fd.
    pub name: Option<String>,
    /// flux-ratio (probability current) or amplitude-only.
    pub convention: Option<String>,
    pub fallback_slices: Option<usize>,
    pub pcpm_slices: Option<usize>,
    pub fd_points: Option<usize>,
}

impl SolverSection {
    pub fn solver_name(&self) -> &str {
        self.name.as_deref().unwrap_or("hybrid-wkb")
    }

    pub fn options(&self) -> Result<DeviceOptions, CliError> {
        let mut o = DeviceOptions::default();
        if let Some(c) = &self.convention {
            o.convention = match c.as_str() {
                "flux-ratio" => Convention::FluxRatio,
                "amplitude-only" => Convention::AmplitudeOnly,
                other => {
                    return Err(CliError::Config(format!(
                        "unknown convention '{other}'; use flux-ratio or amplitude-only"
                    )))
                }
            };
        }
        if let Some(s) = self.fallback_slices {
            o.fallback_slices = s;
        }
        if let Some(s) = self.pcpm_slices {
            o.pcpm_slices = s;
        }
        if let Some(p) = self.fd_points {
            o.fd_points = p;
        }
        Ok(o)
    }
}

/// Target response for design: either explicit samples [[V, T_0], …] or the
/// linear shorthand T_0(V) = slope·V + intercept at V_i = v_min + i·ΔV/M,
/// i = 1..M (the origin is excluded, matching the shorthand's intent of
/// sampling strictly positive biases).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    /// Probe energy in eV shared by all samples.
    pub energy_ev: f64,
    pub samples: Option<Vec<(f64, f64)>>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    #[serde(default)]
    pub v_min: f64,
    pub v_max: Option<f64>,
    pub points: Option<usize>,
}

impl TargetSection {
    pub fn to_target(&self, constants: &PhysicalConstants) -> Result<TargetResponse, CliError> {
        let energy = self.energy_ev * constants.e;
        let samples = match (&self.samples, self.slope) {
            (Some(s), None) => s.clone(),
            (None, Some(slope)) => {
                let (intercept, v_max, points) =
                    match (self.intercept, self.v_max, self.points) {
                        (Some(i), Some(v), Some(p)) if p > 0 => (i, v, p),
                        _ => {
                            return Err(CliError::Config(
                                "linear target needs slope, intercept, v_max and points > 0"
                                    .into(),
                            ))
                        }
                    };
                (1..=points)
                    .map(|i| {
                        let v = self.v_min + i as f64 * (v_max - self.v_min) / points as f64;
                        (v, slope * v + intercept)
                    })
                    .collect()
            }
            _ => {
                return Err(CliError::Config(
                    "target needs exactly one of samples, slope/intercept".into(),
                ))
            }
        };
        TargetResponse::new(samples, energy).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Uncertainty model for robust design: a uniform box of half-width a_j (eV)
/// around each layer potential, integrated on a sparse grid whose level is
/// either fixed or chosen by the adaptive reference scan.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustSection {
    pub half_width_ev: Option<f64>,
    pub half_widths_ev: Option<Vec<f64>>,
    #[serde(default)]
    pub alpha: f64,
    pub level: Option<usize>,
    pub epsilon: Option<f64>,
    pub level_max: Option<usize>,
}

impl RobustSection {
    pub fn to_spec(&self, layers: usize) -> Result<RobustSpec, CliError> {
        let half_widths = match (&self.half_widths_ev, self.half_width_ev) {
            (Some(v), None) => v.clone(),
            (None, Some(a)) => vec![a; layers],
            _ => {
                return Err(CliError::Config(
                    "robust needs exactly one of half_width_ev, half_widths_ev".into(),
                ))
            }
        };
        let quadrature = match (self.level, self.epsilon, self.level_max) {
            (Some(level), None, None) => Quadrature::Fixed { level },
            (None, Some(epsilon), Some(level_max)) => Quadrature::Adaptive { epsilon, level_max },
            _ => {
                return Err(CliError::Config(
                    "robust needs either level (fixed) or epsilon + level_max (adaptive)".into(),
                ))
            }
        };
        Ok(RobustSpec {
            half_widths,
            alpha: self.alpha,
            quadrature,
        })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    /// Start point in eV; defaults to the device potentials.
    pub initial_u_ev: Option<Vec<f64>>,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub pg_tolerance: Option<f64>,
    /// analytic or finite-difference.
    pub gradient_mode: Option<String>,
    pub multistart: Option<MultiStartSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiStartSection {
    pub starts: usize,
    pub seed: u64,
}

impl OptimizerSection {
    pub fn to_config(
        &self,
        device: &DeviceSection,
    ) -> Result<OptimizerConfig, CliError> {
        let initial = self
            .initial_u_ev
            .clone()
            .unwrap_or_else(|| device.u_ev.clone());
        let mut config = OptimizerConfig::new(initial, device.bounds_ev);
        if let Some(n) = self.max_iterations {
            config.max_iterations = n;
        }
        if let Some(t) = self.tolerance {
            config.tolerance = t;
        }
        if let Some(t) = self.pg_tolerance {
            config.pg_tolerance = t;
        }
        if let Some(mode) = &self.gradient_mode {
            config.gradient_mode = match mode.as_str() {
                "analytic" => GradientMode::Analytic,
                "finite-difference" => GradientMode::FiniteDifference,
                other => {
                    return Err(CliError::Config(format!(
                        "unknown gradient_mode '{other}'; use analytic or finite-difference"
                    )))
                }
            };
        }
        if let Some(ms) = &self.multistart {
            config.multistart = Some(MultiStart {
                starts: ms.starts,
                seed: ms.seed,
            });
        }
        config
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }
}

/// Grid parameters for quadrature-export. Half-widths default to the robust
/// section, then to the unit box.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    pub level: usize,
    pub dimension: Option<usize>,
    pub half_widths_ev: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    /// csv (comma) or tsv (tab) for curve and table files.
    pub format: Option<String>,
}

impl OutputSection {
    pub fn delimiter(&self) -> Result<char, CliError> {
        match self.format.as_deref() {
            None | Some("csv") => Ok(','),
            Some("tsv") => Ok('\t'),
            Some(other) => Err(CliError::Config(format!(
                "unknown output format '{other}'; use csv or tsv"
            ))),
        }
    }
}

pub fn load(path: &std::path::Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    toml::from_str(&text).map_err(|e| {
        CliError::Config(format!("config {}: {e}", path.display()))
    })
}
