//! Experiment configuration: one JSON file drives every pipeline stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::DEFAULT_JITTER;
use crate::inference::{MapConfig, PriorSpec};
use crate::structural::{
    assemble_euler_bernoulli, assemble_shear_building, assemble_timoshenko, BeamProperties,
    Boundary, DampingSpec, FeModel, ShearBuildingSpec,
};
use crate::surrogate::TrainConfig;
use crate::truth::{ExcitationSpec, LoadSpec, NonlinearRestoring};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamTheory {
    EulerBernoulli,
    Timoshenko,
}

fn reference_beam() -> BeamProperties {
    BeamProperties::reference()
}

fn simply_supported() -> Boundary {
    Boundary::SimplySupported
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StructureSpec {
    Beam {
        theory: BeamTheory,
        elements: usize,
        #[serde(default = "reference_beam")]
        properties: BeamProperties,
        #[serde(default = "simply_supported")]
        boundary: Boundary,
    },
    ShearBuilding {
        building: ShearBuildingSpec,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub structure: StructureSpec,
    #[serde(default)]
    pub damping: DampingSpec,
    #[serde(default)]
    pub nonlinearity: NonlinearRestoring,
}

impl ModelSpec {
    /// Assembled matrices with the damping specification applied.
    pub fn assemble(&self) -> Result<FeModel> {
        let model = match &self.structure {
            StructureSpec::Beam {
                theory,
                elements,
                properties,
                boundary,
            } => match theory {
                BeamTheory::EulerBernoulli => {
                    assemble_euler_bernoulli(properties, *elements, boundary)?
                }
                BeamTheory::Timoshenko => assemble_timoshenko(properties, *elements, boundary)?,
            },
            StructureSpec::ShearBuilding { building } => assemble_shear_building(building)?,
        };
        model.with_damping(&self.damping)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub truth: ModelSpec,
    pub nominal: ModelSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationSection {
    pub dt: f64,
    pub duration: f64,
    pub train: Vec<LoadSpec>,
    pub test: Vec<LoadSpec>,
}

impl ExcitationSection {
    pub fn train_spec(&self) -> ExcitationSpec {
        ExcitationSpec {
            loads: self.train.clone(),
            duration: self.duration,
            dt: self.dt,
        }
    }

    pub fn test_spec(&self) -> ExcitationSpec {
        ExcitationSpec {
            loads: self.test.clone(),
            duration: self.duration,
            dt: self.dt,
        }
    }
}

fn default_noise_levels() -> Vec<f64> {
    vec![0.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub positions: Vec<f64>,
    /// Noise levels in percent of the mean channel RMS; every stage after
    /// `simulate` runs once per level.
    #[serde(default = "default_noise_levels")]
    pub noise_levels: Vec<f64>,
}

fn default_floor_db() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalSection {
    /// Retained mode count; chosen from the training spectra when absent.
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default = "default_floor_db")]
    pub floor_db: f64,
    /// Upper bound on the modes considered by the automatic selection.
    #[serde(default = "default_max_modes")]
    pub max_modes: usize,
}

fn default_max_modes() -> usize {
    20
}

impl Default for ModalSection {
    fn default() -> Self {
        ModalSection {
            count: None,
            floor_db: default_floor_db(),
            max_modes: default_max_modes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpSection {
    pub kernel: String,
    /// Process noise on the modal displacement/velocity blocks.
    pub jitter: f64,
    /// Prior variance of the initial modal states.
    pub sigma_q2: f64,
    /// Lower bound on the measurement noise std as a fraction of the mean
    /// channel RMS; keeps `R` positive for noiseless records.
    pub noise_floor: f64,
    pub priors: PriorSpec,
    pub optimizer: MapConfig,
}

impl Default for GpSection {
    fn default() -> Self {
        GpSection {
            kernel: "matern12".into(),
            jitter: DEFAULT_JITTER,
            sigma_q2: 1e-6,
            noise_floor: 1e-4,
            priors: PriorSpec::default(),
            optimizer: MapConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    /// Truth integrator substeps per sample (nonlinear truth only).
    pub truth_substeps: usize,
    /// RK4 substeps per sample for the rectified model.
    pub substeps: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        IntegratorSection {
            truth_substeps: crate::truth::DEFAULT_SUBSTEPS,
            substeps: crate::rectify::DEFAULT_SUBSTEPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    pub excitation: ExcitationSection,
    pub sensors: SensorSection,
    #[serde(default)]
    pub modal: ModalSection,
    #[serde(default)]
    pub gp: GpSection,
    #[serde(default)]
    pub surrogate: TrainConfig,
    #[serde(default)]
    pub integrator: IntegratorSection,
    /// Artifact directory, relative to the working directory.
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            config_error(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks that go beyond the schema; failures are config errors.
    pub fn validate(&self) -> Result<()> {
        let wrap = |r: Result<()>| r.map_err(|e| config_error(e.to_string()));
        if self.gp.kernel != "matern12" {
            return Err(config_error(format!(
                "unsupported kernel {:?}; only matern12 is available",
                self.gp.kernel
            )));
        }
        if !self.model.nominal.nonlinearity.is_linear() {
            return Err(config_error("the nominal model must be linear"));
        }
        wrap(self.model.truth.nonlinearity.validate())?;
        wrap(self.excitation.train_spec().steps().map(|_| ()))?;
        if self.excitation.train.is_empty() || self.excitation.test.is_empty() {
            return Err(config_error("train and test excitations need at least one load"));
        }
        if self.sensors.positions.is_empty() {
            return Err(config_error("at least one sensor position is required"));
        }
        if self.sensors.noise_levels.is_empty()
            || self.sensors.noise_levels.iter().any(|p| !(*p >= 0.0 && p.is_finite()))
        {
            return Err(config_error("noise levels must be a non-empty list of percentages >= 0"));
        }
        if self.modal.count == Some(0) || self.modal.max_modes == 0 {
            return Err(config_error("mode counts must be positive"));
        }
        if !(self.gp.noise_floor > 0.0) || !(self.gp.sigma_q2 > 0.0) || !(self.gp.jitter >= 0.0) {
            return Err(config_error("gp noise_floor and sigma_q2 must be positive, jitter >= 0"));
        }
        wrap(self.surrogate.validate())?;
        if self.integrator.substeps == 0 || self.integrator.truth_substeps == 0 {
            return Err(config_error("substep counts must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "t",
        "model": {
            "truth": {"structure": {"kind": "beam", "theory": "timoshenko", "elements": 10}},
            "nominal": {"structure": {"kind": "beam", "theory": "euler-bernoulli", "elements": 10}}
        },
        "excitation": {
            "dt": 0.001, "duration": 0.5,
            "train": [{"kind": "sinusoid", "x": 5.0, "amplitude": 1.0, "omega": 30.0}],
            "test": [{"kind": "sinusoid", "x": 5.0, "amplitude": 1.0, "omega": 20.0}]
        },
        "sensors": {"positions": [2.0, 5.0]}
    }"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.sensors.noise_levels, vec![0.0]);
        assert_eq!(cfg.surrogate, TrainConfig::default());
        assert_eq!(cfg.integrator.substeps, 10);
        assert_eq!(cfg.gp.kernel, "matern12");
        let m = cfg.model.truth.assemble().unwrap();
        assert_eq!(m.element_count, 10);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let bad = MINIMAL.replace("\"name\": \"t\",", "\"name\": \"t\", \"nmae\": 1,");
        let err = ExperimentConfig::from_json(&bad).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("nmae") && err.to_string().contains("line"));
        let nested = MINIMAL.replace("\"elements\": 10}}", "\"elements\": 10, \"lenght\": 3}}");
        assert!(ExperimentConfig::from_json(&nested).is_err());
    }

    #[test]
    fn semantic_errors_are_config_errors() {
        let nonlinear_nominal = MINIMAL.replace(
            "\"theory\": \"euler-bernoulli\", \"elements\": 10}",
            "\"theory\": \"euler-bernoulli\", \"elements\": 10}, \"nonlinearity\": {\"kind\": \"cubic-stiffness\", \"kappa3\": 1.0}",
        );
        assert!(matches!(
            ExperimentConfig::from_json(&nonlinear_nominal),
            Err(Error::Config(_))
        ));
        let bad_dt = MINIMAL.replace("\"duration\": 0.5", "\"duration\": 0.5004");
        assert!(matches!(ExperimentConfig::from_json(&bad_dt), Err(Error::Config(_))));
        let negative_noise = MINIMAL.replace("[2.0, 5.0]}", "[2.0, 5.0], \"noise_levels\": [-1]}");
        assert!(matches!(ExperimentConfig::from_json(&negative_noise), Err(Error::Config(_))));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn building_structure_parses() {
        let cfg = MINIMAL.replace(
            "{\"kind\": \"beam\", \"theory\": \"timoshenko\", \"elements\": 10}",
            "{\"kind\": \"shear-building\", \"building\": {\"story_masses\": [1.0, 1.0], \"story_stiffnesses\": [1.0, 1.0]}}",
        );
        let cfg: ExperimentConfig = serde_json::from_str(&cfg).unwrap();
        assert_eq!(cfg.model.truth.assemble().unwrap().n_dof(), 2);
    }
}
