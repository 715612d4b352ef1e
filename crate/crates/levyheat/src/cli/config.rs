//! Declarative run configuration. Everything is schema-validated up
//! front and unknown keys are rejected, so a config that loads is a
//! config that runs.

use serde::{Deserialize, Serialize};

use crate::bounds::{QCase, QConvention, QProfile};
use crate::error::{Error, Result};
use crate::flow::{Coefficients, DriftSpec, SigmaSpec};
use crate::frozen::{AxisSpec, FrozenTolerances, SpaceGrid};
use crate::levy::{LevyModel, ToleranceSet};
use crate::linalg::VecD;
use crate::mc::SimConfig;
use crate::parametrix::{KernelParams, SeriesParams};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsSection {
    pub drift: DriftSpec,
    pub sigma: SigmaSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub center: Vec<f64>,
    pub half_width: f64,
    pub n: usize,
}

impl GridSection {
    pub fn build(&self) -> Result<SpaceGrid> {
        SpaceGrid::new(
            self.center
                .iter()
                .map(|c| AxisSpec { center: *c, half_width: self.half_width, n: self.n })
                .collect(),
        )
    }
}

fn default_bulk_frac() -> f64 {
    0.01
}

fn default_delta_h() -> f64 {
    1.0
}

fn default_zeta_max() -> f64 {
    100.0
}

fn default_kernel_samples() -> usize {
    21
}

fn default_kernel_box() -> f64 {
    2.5
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub t: f64,
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub grid: GridSection,
    /// Grid of the parametrix series; defaults to `grid`. A separate,
    /// narrower grid keeps the kernel tensor small while the histogram
    /// grid stays wide enough for coverage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_grid: Option<GridSection>,
    /// Freezing point of the frozen stage; defaults to x0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freezing_point: Option<Vec<f64>>,
    #[serde(default = "default_zeta_max")]
    pub zeta_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_case: Option<QCase>,
    #[serde(default)]
    pub q_convention: QConvention,
    #[serde(default = "default_delta_h")]
    pub delta_h: f64,
    #[serde(default = "default_bulk_frac")]
    pub bulk_frac: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_window: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<SeriesParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_tolerances: Option<FrozenTolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assumption_tolerances: Option<ToleranceSet>,
    #[serde(default = "default_kernel_samples")]
    pub kernel_samples: usize,
    #[serde(default = "default_kernel_box")]
    pub kernel_box: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: LevyModel,
    pub coefficients: CoefficientsSection,
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config does not match the schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let exp = &self.experiment;
        if exp.horizon <= exp.t {
            return Err(Error::Config("experiment needs horizon > t".into()));
        }
        if exp.x0.len() != self.model.d {
            return Err(Error::Config("x0 dimension mismatch".into()));
        }
        if exp.grid.center.len() != self.model.d {
            return Err(Error::Config("grid dimension mismatch".into()));
        }
        exp.grid.build()?;
        if let Some(sg) = &exp.series_grid {
            if sg.center.len() != self.model.d {
                return Err(Error::Config("series grid dimension mismatch".into()));
            }
            sg.build()?;
        }
        self.coefficients()?;
        Ok(())
    }

    pub fn coefficients(&self) -> Result<Coefficients> {
        Coefficients::new(
            self.model.d,
            self.coefficients.drift.clone(),
            self.coefficients.sigma.clone(),
        )
    }

    pub fn x0(&self) -> VecD {
        VecD::from_slice(&self.experiment.x0)
    }

    pub fn freezing_point(&self) -> VecD {
        self.experiment
            .freezing_point
            .as_ref()
            .map(|v| VecD::from_slice(v))
            .unwrap_or_else(|| self.x0())
    }

    pub fn q_profile(&self, coeffs: &Coefficients) -> Result<QProfile> {
        match self.experiment.q_case {
            Some(case) => QProfile::new(
                case,
                self.model.gamma,
                self.model.tempering.clone(),
                self.experiment.q_convention,
            ),
            None => {
                let mut profile = QProfile::for_model(&self.model, coeffs)?;
                if self.experiment.q_convention != QConvention::ProofMax {
                    profile = QProfile::new(
                        profile.case,
                        profile.gamma,
                        profile.qbar,
                        self.experiment.q_convention,
                    )?;
                }
                Ok(profile)
            }
        }
    }

    pub fn series_grid(&self) -> Result<SpaceGrid> {
        match &self.experiment.series_grid {
            Some(sg) => sg.build(),
            None => self.experiment.grid.build(),
        }
    }

    pub fn series_params(&self) -> SeriesParams {
        let mut p = self.experiment.series.clone().unwrap_or_default();
        if let Some(ft) = &self.experiment.frozen_tolerances {
            p.frozen_tol = ft.clone();
        }
        p
    }

    pub fn sim_config(&self) -> SimConfig {
        self.experiment.sim.clone().unwrap_or_default()
    }

    pub fn kernel_params(&self) -> KernelParams {
        self.experiment
            .series
            .as_ref()
            .map(|s| s.kernel.clone())
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "model": {
                "d": 1, "alpha": 1.0,
                "spectral": {"kind": "Atomic", "directions": [[1.0], [-1.0]],
                              "weights": [0.3183098861837907, 0.3183098861837907]},
                "tempering": {"kind": "None"},
                "gamma": 1.0, "flavor": "H1a",
                "closed_form": {"kind": "IsotropicStable", "c": 1.0}
            },
            "coefficients": {
                "drift": {"family": "Zero"},
                "sigma": {"family": "Constant", "value": 1.0}
            },
            "experiment": {
                "t": 0.0, "horizon": 0.5, "x0": [0.0],
                "grid": {"center": [0.0], "half_width": 40.0, "n": 512}
            }
        })
    }

    #[test]
    fn minimal_config_parses() {
        let cfg: RunConfig = serde_json::from_value(minimal_json()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.model.d, 1);
        assert_eq!(cfg.experiment.zeta_max, 100.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = minimal_json();
        v["experiment"]["unexpected_knob"] = serde_json::json!(1.0);
        let got: std::result::Result<RunConfig, _> = serde_json::from_value(v);
        assert!(got.is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut v = minimal_json();
        v["experiment"]["x0"] = serde_json::json!([0.0, 0.0]);
        let cfg: RunConfig = serde_json::from_value(v).unwrap();
        assert!(cfg.validate().is_err());
    }
}
