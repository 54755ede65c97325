//! Staged batch workflow (simulate, infer, train-surrogate, predict,
//! report) with JSON/CSV artifacts and hash-chained provenance.

mod experiment;
pub mod io;
mod seeds;

pub use experiment::{
    alternate_basis, build_problem, infer, latent_force_report, measurement_sigma, nmse_against_truth,
    nominal_modal_response, predict, run_level, train_surrogate, transfer_nmse, Inference,
    LatentForceReport, LevelResult, LevelRun, Records, Scenario, Split,
};
pub use seeds::{derive_seed, sha256_hex};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelSpec, StructureSpec};
use crate::error::{Error, Result};
use crate::gp::GpHyperparams;
use crate::inference::StartTrace;
use crate::metrics::reduction_percent;
use crate::modal::{project_force, reconstruct, BasisArtifact, ModalBasis};
use crate::rectify::{mesh_transfer_model, PredictionSummary};
use crate::structural::{DofInfo, DofKind};
use crate::surrogate::SurrogateArtifact;
use crate::truth::{match_dofs, SensorData};
use io::{dof_label, file_hash, read_json, read_series, require, write_json, write_series};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Infer,
    TrainSurrogate,
    Predict,
    Report,
}

/// Hash of the resolved configuration and of every upstream file
/// (paths relative to the artifact directory).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub config: String,
    pub inputs: BTreeMap<String, String>,
}

/// One run of the pipeline: configuration plus artifact directory.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub config_hash: String,
}

impl Workspace {
    /// `seed` and `out` override the config file.
    pub fn new(mut config: ExperimentConfig, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self> {
        if let Some(s) = seed {
            config.seed = s;
        }
        let dir = out
            .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(format!("mre-out/{}", config.name)));
        config.output_dir = None;
        config.validate()?;
        let config_hash = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        Ok(Workspace {
            dir,
            config,
            config_hash,
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn provenance(&self, inputs: &[&str]) -> Result<Provenance> {
        let mut map = BTreeMap::new();
        for rel in inputs {
            map.insert(rel.to_string(), file_hash(&self.path(rel))?);
        }
        Ok(Provenance {
            config: self.config_hash.clone(),
            inputs: map,
        })
    }

    /// Recomputes every recorded hash; mismatches mean mixed provenance.
    fn verify(&self, what: &str, prov: &Provenance) -> Result<()> {
        if prov.config != self.config_hash {
            return Err(Error::IncompatibleArtifacts(format!(
                "{what} was produced under a different configuration; rerun from `mre simulate`"
            )));
        }
        for (rel, hash) in &prov.inputs {
            let path = self.path(rel);
            if !path.is_file() {
                return Err(Error::PipelineOrder(format!("{what} refers to missing {rel}")));
            }
            if &file_hash(&path)? != hash {
                return Err(Error::IncompatibleArtifacts(format!(
                    "{rel} changed after {what} was produced"
                )));
            }
        }
        Ok(())
    }

    pub fn level_dir(noise_percent: f64) -> String {
        format!("noise_{noise_percent}")
    }

    pub fn run(&self, stage: Stage, basis: Option<&Path>) -> Result<()> {
        match stage {
            Stage::Simulate => self.simulate(),
            Stage::Infer => self.infer(),
            Stage::TrainSurrogate => self.train_surrogate(),
            Stage::Predict => self.predict(basis),
            Stage::Report => self.report().map(|_| ()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEntry {
    pub noise_percent: f64,
    pub dir: String,
    pub seed: u64,
    pub sigma_n: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub dt: f64,
    pub steps: usize,
    pub truth_dofs: usize,
    pub nominal_dofs: usize,
    pub modes: usize,
    pub frequencies: Vec<f64>,
    pub damping_ratios: Vec<f64>,
    /// Translational damping per unit length of the beam models (N s/m^2).
    pub beam_c_w: BTreeMap<String, f64>,
    pub sensors: Vec<String>,
    pub levels: Vec<LevelEntry>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaArtifact {
    pub theta: GpHyperparams,
    pub log_posterior: f64,
    pub sigma_r: f64,
    pub starts: Vec<StartTrace>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceArtifact {
    pub noise_percent: f64,
    pub train_nominal_nmse: f64,
    pub inference_nmse: f64,
    pub reduction_percent: f64,
    pub latent: LatentForceReport,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferSection {
    pub source: String,
    pub frequencies: Vec<f64>,
    pub nmse: f64,
    pub summary: PredictionSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionManifest {
    pub noise_percent: f64,
    pub integrator: String,
    pub surrogate_sha256: String,
    pub summary: PredictionSummary,
    pub surrogate_hidden: usize,
    pub test_nominal_nmse: f64,
    pub rectified_nmse: f64,
    pub reduction_percent: f64,
    #[serde(default)]
    pub transfer: Option<TransferSection>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub noise_percent: f64,
    pub inference_nmse: f64,
    pub inference_reduction: f64,
    pub rectified_nmse: f64,
    pub rectified_reduction: f64,
    pub extrapolation_fraction: f64,
    pub transfer_nmse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub name: String,
    pub modes: usize,
    pub train_nominal_nmse: f64,
    pub test_nominal_nmse: f64,
    pub rows: Vec<TableRow>,
    pub provenance: Provenance,
}

const MANIFEST: &str = "manifest.json";
const BASIS: &str = "basis.json";
const TRAIN_TRUTH: &str = "train/truth.csv";
const TEST_TRUTH: &str = "test/truth.csv";
const ORACLE: &str = "train/oracle.csv";

fn labels(prefix: &str, m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("{prefix}[{i}]")).collect()
}

/// DOF descriptors recovered from `w@x` / `r@x` column labels.
fn parse_labels(names: &[String]) -> Result<Vec<DofInfo>> {
    names
        .iter()
        .enumerate()
        .map(|(node, n)| {
            let (k, x) = n.split_once('@').ok_or_else(|| {
                Error::IncompatibleArtifacts(format!("column {n} is not a DOF label"))
            })?;
            let kind = match k {
                "w" => DofKind::Translation,
                "r" => DofKind::Rotation,
                _ => {
                    return Err(Error::IncompatibleArtifacts(format!("unknown DOF kind in {n}")))
                }
            };
            let x = x
                .parse()
                .map_err(|_| Error::IncompatibleArtifacts(format!("bad coordinate in {n}")))?;
            Ok(DofInfo { x, kind, node })
        })
        .collect()
}

/// NMSE of `u` (rows on `dofs`) against a truth CSV.
fn nmse_vs_truth_file(truth: &io::Series, dofs: &[DofInfo], u: &DMatrix<f64>) -> Result<f64> {
    let truth_dofs = parse_labels(&truth.names)?;
    let map = match_dofs(dofs, &truth_dofs)?;
    crate::metrics::nmse(&truth.data, &u.select_rows(&map))
}

impl Workspace {
    fn simulate(&self) -> Result<()> {
        let s = Scenario::new(&self.config)?;
        std::fs::create_dir_all(self.path("train"))?;
        std::fs::create_dir_all(self.path("test"))?;
        write_json(&self.path("config.resolved.json"), &self.config)?;

        let rec = Records::new(&s)?;
        let truth_names: Vec<String> = rec.train.dofs.iter().map(dof_label).collect();
        write_series(&self.path(TRAIN_TRUTH), &rec.train.times, &truth_names, &rec.train.displacement)?;
        write_series(&self.path(TEST_TRUTH), &rec.test.times, &truth_names, &rec.test.displacement)?;
        let m = rec.basis.retained();
        write_series(&self.path(ORACLE), &rec.train.times, &labels("eta", m), &rec.oracle)?;

        let clean = s.observe(&rec.train, 0.0)?;
        write_json(
            &self.path(BASIS),
            &BasisArtifact::from_basis(&rec.basis, &clean.dofs, true),
        )?;
        let sensor_names: Vec<String> = clean
            .dofs
            .iter()
            .map(|&i| format!("y:{}", dof_label(&rec.train.dofs[i])))
            .collect();

        let mut levels = Vec::new();
        let mut inputs = vec![
            TRAIN_TRUTH.to_string(),
            TEST_TRUTH.to_string(),
            ORACLE.to_string(),
            BASIS.to_string(),
        ];
        for &p in &self.config.sensors.noise_levels {
            let dir = Self::level_dir(p);
            std::fs::create_dir_all(self.path(&dir))?;
            let sensors = s.observe(&rec.train, p)?;
            let rel = format!("{dir}/sensors.csv");
            write_series(&self.path(&rel), &rec.train.times, &sensor_names, &sensors.noisy)?;
            inputs.push(rel);
            levels.push(LevelEntry {
                noise_percent: p,
                dir,
                seed: s.noise_seed(p),
                sigma_n: sensors.sigma_n,
            });
        }
        let mut beam_c_w = BTreeMap::new();
        for (role, spec) in [("truth", &self.config.model.truth), ("nominal", &self.config.model.nominal)] {
            if let StructureSpec::Beam { properties, .. } = &spec.structure {
                beam_c_w.insert(role.to_string(), properties.c_w());
            }
        }
        let refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
        let manifest = Manifest {
            name: self.config.name.clone(),
            seed: self.config.seed,
            dt: s.dt(),
            steps: rec.train.steps(),
            truth_dofs: s.truth.n_dof(),
            nominal_dofs: s.nominal.n_dof(),
            modes: m,
            frequencies: rec.basis.frequencies.clone(),
            damping_ratios: rec.basis.damping_ratios(),
            beam_c_w,
            sensors: sensor_names,
            levels,
            provenance: self.provenance(&refs)?,
        };
        write_json(&self.path(MANIFEST), &manifest)?;
        info!("simulate: wrote {}", self.dir.display());
        Ok(())
    }

    fn manifest(&self, stage: &str) -> Result<Manifest> {
        require(&[self.path(MANIFEST)], stage, "simulate")?;
        let m: Manifest = read_json(&self.path(MANIFEST))?;
        self.verify(MANIFEST, &m.provenance)?;
        Ok(m)
    }

    fn basis(&self) -> Result<(ModalBasis, Vec<usize>)> {
        let art: BasisArtifact = read_json(&self.path(BASIS))?;
        Ok((art.to_basis()?, art.sensor_dofs))
    }

    fn infer(&self) -> Result<()> {
        let manifest = self.manifest("infer")?;
        let s = Scenario::new(&self.config)?;
        let (basis, sensor_dofs) = self.basis()?;
        let p = s.modal_force(&basis, Split::Train)?;
        let truth = read_series(&self.path(TRAIN_TRUTH))?;
        let oracle = read_series(&self.path(ORACLE))?.data;
        let nominal_u = reconstruct(&basis, &nominal_modal_response(&basis, &p, s.dt())?)?;
        let train_nominal_nmse = nmse_vs_truth_file(&truth, &basis.dofs, &nominal_u)?;
        for level in &manifest.levels {
            let rel = format!("{}/sensors.csv", level.dir);
            let noisy = read_series(&self.path(&rel))?.data;
            let sensors = SensorData {
                dofs: sensor_dofs.clone(),
                clean: noisy.clone(),
                noisy,
                sigma_n: level.sigma_n,
            };
            let problem = build_problem(&basis, &sensors, p.clone(), s.dt(), &self.config.gp)?;
            let sigma_r = problem.sigma_r;
            let seed = derive_seed(self.config.seed, &format!("map/{}", level.noise_percent));
            let inf = infer(problem, &self.config.gp, seed)?;
            let sm = &inf.smoothed;
            let m = basis.retained();
            let mut names = labels("q", m);
            names.extend(labels("dq", m));
            names.extend(labels("eta", m));
            names.extend(labels("sd_q", m));
            names.extend(labels("sd_dq", m));
            names.extend(labels("sd_eta", m));
            let var = sm.variances();
            let mut table = DMatrix::zeros(6 * m, sm.means.ncols());
            table.rows_mut(0, 3 * m).copy_from(&sm.means.rows(0, 3 * m));
            table
                .rows_mut(3 * m, 3 * m)
                .copy_from(&var.rows(0, 3 * m).map(|v| v.max(0.0).sqrt()));
            let smoothed_rel = format!("{}/smoothed.csv", level.dir);
            write_series(&self.path(&smoothed_rel), &truth.times, &names, &table)?;
            let prov = self.provenance(&[MANIFEST, BASIS, &rel])?;
            write_json(
                &self.path(&format!("{}/theta.json", level.dir)),
                &ThetaArtifact {
                    theta: inf.map.theta.clone(),
                    log_posterior: inf.map.log_posterior,
                    sigma_r,
                    starts: inf.map.traces.clone(),
                    provenance: prov,
                },
            )?;
            let u = reconstruct(&basis, &sm.q())?;
            let inference_nmse = nmse_vs_truth_file(&truth, &basis.dofs, &u)?;
            let latent = latent_force_report(&sm.eta(), &oracle, &p)?;
            write_json(
                &self.path(&format!("{}/inference.json", level.dir)),
                &InferenceArtifact {
                    noise_percent: level.noise_percent,
                    train_nominal_nmse,
                    inference_nmse,
                    reduction_percent: reduction_percent(train_nominal_nmse, inference_nmse),
                    latent,
                    provenance: self.provenance(&[
                        MANIFEST,
                        BASIS,
                        TRAIN_TRUTH,
                        ORACLE,
                        &smoothed_rel,
                    ])?,
                },
            )?;
            info!(
                "infer {}%: NMSE {inference_nmse:.5} (nominal {train_nominal_nmse:.5})",
                level.noise_percent
            );
        }
        Ok(())
    }

    fn train_surrogate(&self) -> Result<()> {
        let manifest = self.manifest("train-surrogate")?;
        let smoothed: Vec<PathBuf> = manifest
            .levels
            .iter()
            .map(|l| self.path(&format!("{}/smoothed.csv", l.dir)))
            .collect();
        require(&smoothed, "train-surrogate", "infer")?;
        let (basis, _) = self.basis()?;
        let s = Scenario::new(&self.config)?;
        let p_train = s.modal_force(&basis, Split::Train)?;
        for level in &manifest.levels {
            let rel = format!("{}/smoothed.csv", level.dir);
            let series = read_series(&self.path(&rel))?;
            let (q, dq) = (series.rows_with_prefix("q["), series.rows_with_prefix("dq["));
            let eta = series.rows_with_prefix("eta[");
            if eta.nrows() != basis.retained() || q.nrows() != eta.nrows() {
                return Err(Error::IncompatibleArtifacts(format!(
                    "{rel} has {} latent forces, basis retains {}",
                    eta.nrows(),
                    basis.retained()
                )));
            }
            let (sur, report) = train_surrogate(
                &basis,
                (&q, &dq, &eta),
                &p_train,
                s.dt(),
                self.config.integrator.substeps,
                &self.config.surrogate,
                derive_seed(self.config.seed, &format!("surrogate/{}", level.noise_percent)),
            )?;
            let mut art = SurrogateArtifact::new(&sur, &basis.frequencies, Some(report));
            let prov = self.provenance(&[BASIS, &rel])?;
            art.provenance.insert("config".into(), prov.config);
            for (k, v) in prov.inputs {
                art.provenance.insert(k, v);
            }
            write_json(&self.path(&format!("{}/surrogate.json", level.dir)), &art)?;
            info!("train-surrogate {}%: H = {}", level.noise_percent, sur.hidden());
        }
        Ok(())
    }

    fn load_surrogate(&self, rel: &str) -> Result<SurrogateArtifact> {
        let art: SurrogateArtifact = read_json(&self.path(rel))?;
        let mut inputs = art.provenance.clone();
        let config = inputs.remove("config").unwrap_or_default();
        self.verify(rel, &Provenance { config, inputs })?;
        Ok(art)
    }

    fn predict(&self, alt: Option<&Path>) -> Result<()> {
        let manifest = self.manifest("predict")?;
        let files: Vec<PathBuf> = manifest
            .levels
            .iter()
            .map(|l| self.path(&format!("{}/surrogate.json", l.dir)))
            .collect();
        require(&files, "predict", "train-surrogate")?;
        let s = Scenario::new(&self.config)?;
        let (basis, _) = self.basis()?;
        let dt = s.dt();
        let substeps = self.config.integrator.substeps;
        let p = s.modal_force(&basis, Split::Test)?;
        let truth = read_series(&self.path(TEST_TRUTH))?;
        let nominal_u = reconstruct(&basis, &nominal_modal_response(&basis, &p, dt)?)?;
        let test_nominal_nmse = nmse_vs_truth_file(&truth, &basis.dofs, &nominal_u)?;
        let names: Vec<String> = basis.dofs.iter().map(dof_label).collect();
        let alt_basis = alt.map(|a| load_alternate_basis(a, manifest.modes)).transpose()?;

        for level in &manifest.levels {
            let sur_rel = format!("{}/surrogate.json", level.dir);
            let art = self.load_surrogate(&sur_rel)?;
            let sur = art.to_surrogate()?;
            let pred = predict(&basis, &sur, &p, dt, substeps)?;
            let u = reconstruct(&basis, &pred.q)?;
            let pred_rel = format!("{}/prediction.csv", level.dir);
            write_series(&self.path(&pred_rel), &truth.times, &names, &u)?;
            let rectified_nmse = nmse_vs_truth_file(&truth, &basis.dofs, &u)?;

            let transfer = match &alt_basis {
                None => None,
                Some((source, b)) => {
                    let rect = mesh_transfer_model(b, sur.clone(), &art.frequencies)?;
                    let f = s.excitation(Split::Test).force_on_dofs(&b.dofs)?;
                    let tp = rect.predict(&project_force(b, &f)?, dt, substeps)?;
                    let tu = reconstruct(b, &tp.q)?;
                    let rel = format!("{}/prediction_transfer.csv", level.dir);
                    let tnames: Vec<String> = b.dofs.iter().map(dof_label).collect();
                    write_series(&self.path(&rel), &truth.times, &tnames, &tu)?;
                    Some(TransferSection {
                        source: source.clone(),
                        frequencies: b.frequencies.clone(),
                        nmse: nmse_vs_truth_file(&truth, &b.dofs, &tu)?,
                        summary: tp.summary(substeps),
                    })
                }
            };
            if pred.extrapolation_fraction > 0.0 {
                warn!(
                    "{:.1}% of prediction steps left the training range",
                    100.0 * pred.extrapolation_fraction
                );
            }
            write_json(
                &self.path(&format!("{}/prediction_manifest.json", level.dir)),
                &PredictionManifest {
                    noise_percent: level.noise_percent,
                    integrator: "rk4".into(),
                    surrogate_sha256: file_hash(&self.path(&sur_rel))?,
                    summary: pred.summary(substeps),
                    surrogate_hidden: sur.hidden(),
                    test_nominal_nmse,
                    rectified_nmse,
                    reduction_percent: reduction_percent(test_nominal_nmse, rectified_nmse),
                    transfer,
                    provenance: self.provenance(&[MANIFEST, BASIS, TEST_TRUTH, &sur_rel, &pred_rel])?,
                },
            )?;
            info!(
                "predict {}%: rectified {rectified_nmse:.5} vs nominal {test_nominal_nmse:.5}",
                level.noise_percent
            );
        }
        Ok(())
    }

    /// Collects every level into `results_table.{json,csv}`.
    pub fn report(&self) -> Result<ResultsTable> {
        let mut needed = vec![self.path(MANIFEST)];
        for &p in &self.config.sensors.noise_levels {
            let dir = Self::level_dir(p);
            needed.push(self.path(&format!("{dir}/inference.json")));
            needed.push(self.path(&format!("{dir}/prediction_manifest.json")));
        }
        require(&needed, "report", "simulate, infer, train-surrogate and predict")?;
        let manifest = self.manifest("report")?;
        let mut rows = Vec::new();
        let mut train_nominal = f64::NAN;
        let mut test_nominal = f64::NAN;
        let mut inputs = vec![MANIFEST.to_string()];
        for l in &manifest.levels {
            let inf_rel = format!("{}/inference.json", l.dir);
            let pred_rel = format!("{}/prediction_manifest.json", l.dir);
            let inf: InferenceArtifact = read_json(&self.path(&inf_rel))?;
            let pm: PredictionManifest = read_json(&self.path(&pred_rel))?;
            self.verify(&inf_rel, &inf.provenance)?;
            self.verify(&pred_rel, &pm.provenance)?;
            let sur_rel = format!("{}/surrogate.json", l.dir);
            self.load_surrogate(&sur_rel)?;
            train_nominal = inf.train_nominal_nmse;
            test_nominal = pm.test_nominal_nmse;
            rows.push(TableRow {
                noise_percent: l.noise_percent,
                inference_nmse: inf.inference_nmse,
                inference_reduction: inf.reduction_percent,
                rectified_nmse: pm.rectified_nmse,
                rectified_reduction: pm.reduction_percent,
                extrapolation_fraction: pm.summary.extrapolation_fraction,
                transfer_nmse: pm.transfer.as_ref().map(|t| t.nmse),
            });
            inputs.extend([inf_rel, pred_rel]);
        }
        let refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
        let table = ResultsTable {
            name: manifest.name.clone(),
            modes: manifest.modes,
            train_nominal_nmse: train_nominal,
            test_nominal_nmse: test_nominal,
            rows,
            provenance: self.provenance(&refs)?,
        };
        write_json(&self.path("results_table.json"), &table)?;
        write_table_csv(&self.path("results_table.csv"), &table)?;
        Ok(table)
    }
}

/// Wide, one-row layout: nominal columns, then per noise level the
/// inference and rectified NMSE with their reductions.
fn write_table_csv(path: &Path, t: &ResultsTable) -> Result<()> {
    let mut header = vec![
        "example".to_string(),
        "modes".into(),
        "nominal_train_nmse".into(),
        "nominal_test_nmse".into(),
    ];
    let mut row = vec![
        t.name.clone(),
        t.modes.to_string(),
        format!("{:.6e}", t.train_nominal_nmse),
        format!("{:.6e}", t.test_nominal_nmse),
    ];
    for r in &t.rows {
        let p = r.noise_percent;
        header.extend([
            format!("inference_nmse_{p}pct"),
            format!("inference_reduction_{p}pct"),
            format!("rectified_nmse_{p}pct"),
            format!("rectified_reduction_{p}pct"),
        ]);
        row.extend([
            format!("{:.6e}", r.inference_nmse),
            format!("{:.3}", r.inference_reduction),
            format!("{:.6e}", r.rectified_nmse),
            format!("{:.3}", r.rectified_reduction),
        ]);
        if let Some(tn) = r.transfer_nmse {
            header.push(format!("transfer_nmse_{p}pct"));
            row.push(format!("{tn:.6e}"));
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

/// `--basis` accepts a nominal model section (assembled and reduced to
/// `modes` modes) or a full basis artifact.
fn load_alternate_basis(path: &Path, modes: usize) -> Result<(String, ModalBasis)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let source = path.display().to_string();
    if let Ok(spec) = serde_json::from_str::<ModelSpec>(&text) {
        return Ok((source, alternate_basis(&spec, modes)?.1));
    }
    let art: BasisArtifact = serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!(
            "{} is neither a nominal model section nor a basis artifact: {e}",
            path.display()
        ))
    })?;
    Ok((source, art.to_basis()?))
}
