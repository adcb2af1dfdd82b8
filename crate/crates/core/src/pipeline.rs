//! Coarse-to-fine orchestration of inference and learning.
//!
//! A run pretrains the classifier on the sparse labels, then walks the
//! hierarchy from level `K` to level 0. At each level it grounds the rules
//! on the leaves created by the last refinement, initialises their truth
//! values from the classifier's cell probabilities, solves, scores the
//! result by entropy, retrains the classifier on the soft leaf labels and
//! picks the uncertain leaves to refine next. Leaves left unrefined keep the
//! label they were given at their own level.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{build_root, Frontier, HierarchyConfig};
use crate::knowledge::{ground_active, parse_kb, GroundCounts, KnowledgeBase};
use crate::learner::{
    cell_probability, predict, save_checkpoint, train, train_sparse_baseline, PixelClassifier,
    ReferenceClassifier, TrainParams, TrainReport,
};
use crate::metrics::{avu, classification_report, AvuReport, ClassificationReport, Confusion, PerClass};
use crate::psl::{
    binary_entropy, distance_sum, entropy_uncertainty, select_refinement_among, solve, RefinementRule,
    SolveOutcome, SolverParams, TruthAssignment,
};
use crate::raster::{
    load_label_map_pgm, load_label_map_raw, load_raster, load_sparse_labels, save_label_map,
    save_label_map_raw, FeatureStack, LabelMap, SparseLabels,
};

/// Run configuration, read from a flat TOML file. Every key is optional.
///
/// `thresholds` lists refinement thresholds in processing order
/// (`T_K, T_{K-1}, ..., T_1`); a shorter list repeats its last entry.
/// Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub raster: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,

    pub eta: usize,
    pub max_level: u32,

    pub anchor_tau: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub initial_step: f64,

    pub epochs: usize,
    pub learning_rate: f64,
    pub plateau_patience: usize,
    pub hidden: usize,

    /// `"threshold"` or `"budget"`.
    pub refine_mode: String,
    pub thresholds: Vec<f64>,
    pub refine_fraction: f64,
    /// Always refine coarse leaves that contain sparse labels, so each label
    /// ends up clamping only its own pixel.
    pub refine_labeled_cells: bool,

    pub lambda: f64,
    pub t_u: f64,
    pub seed: u64,
    /// Passes at level 0; values above 1 add inference/training
    /// alternations on the finest frontier.
    pub outer_rounds: usize,
    pub full_grounding: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let solver = SolverParams::default();
        let train = TrainParams::default();
        Self {
            raster: None,
            labels: None,
            kb: None,
            truth: None,
            output_dir: None,
            eta: 4,
            max_level: 2,
            anchor_tau: solver.anchor_tau,
            max_iters: solver.max_iters,
            tol: solver.tol,
            initial_step: solver.initial_step,
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            plateau_patience: train.plateau_patience,
            hidden: ReferenceClassifier::DEFAULT_HIDDEN,
            refine_mode: "threshold".into(),
            thresholds: vec![DEFAULT_THRESHOLD],
            refine_fraction: 0.25,
            refine_labeled_cells: true,
            lambda: 0.0,
            t_u: DEFAULT_THRESHOLD,
            seed: 42,
            outer_rounds: 1,
            full_grounding: false,
        }
    }
}

/// Entropy of a 0.9 / 0.1 label, in nats.
pub const DEFAULT_THRESHOLD: f64 = 0.325;

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file and resolves relative paths against its folder.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.raster,
            &mut cfg.labels,
            &mut cfg.kb,
            &mut cfg.truth,
            &mut cfg.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn hierarchy(&self) -> Result<HierarchyConfig> {
        HierarchyConfig::new(self.eta, self.max_level)
    }

    pub fn solver(&self) -> SolverParams {
        SolverParams {
            anchor_tau: self.anchor_tau,
            max_iters: self.max_iters,
            tol: self.tol,
            initial_step: self.initial_step,
            ..SolverParams::default()
        }
    }

    pub fn training(&self) -> TrainParams {
        TrainParams {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            plateau_patience: self.plateau_patience,
        }
    }

    /// Refinement rule applied to leaves produced at `level`.
    pub fn refinement(&self, level: u32) -> Result<RefinementRule> {
        match self.refine_mode.as_str() {
            "threshold" => {
                if self.thresholds.is_empty() {
                    return Err(Error::Config("thresholds must not be empty".into()));
                }
                let step = (self.max_level - level) as usize;
                let t = self.thresholds[step.min(self.thresholds.len() - 1)];
                Ok(RefinementRule::Threshold(t))
            }
            "budget" => {
                if !(0.0..=1.0).contains(&self.refine_fraction) {
                    return Err(Error::Config("refine_fraction must be in [0, 1]".into()));
                }
                Ok(RefinementRule::Budget(self.refine_fraction))
            }
            other => Err(Error::Config(format!("unknown refine_mode {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hierarchy()?;
        self.solver().validate()?;
        self.refinement(self.max_level)?;
        if self.hidden == 0 {
            return Err(Error::Config("hidden must be positive".into()));
        }
        if self.outer_rounds == 0 {
            return Err(Error::Config("outer_rounds must be >= 1".into()));
        }
        if !(self.t_u >= 0.0) {
            return Err(Error::Config("t_u must be >= 0".into()));
        }
        Ok(())
    }
}

/// Everything a run reads, already in memory.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub features: FeatureStack,
    pub sparse: SparseLabels,
    pub kb: KnowledgeBase,
    pub truth: Option<LabelMap>,
}

impl PipelineInputs {
    /// Reads the files named in `config`. Without a `kb` path the built-in
    /// flood rules are used. A `truth` path ending in `.pgm` is read as PGM,
    /// anything else as a raw `f32` map of the raster's shape.
    pub fn load(config: &PipelineConfig) -> Result<Self> {
        let raster = config
            .raster
            .as_ref()
            .ok_or_else(|| Error::Config("missing `raster` path".into()))?;
        let features = load_raster(raster).map_err(|e| e.in_stage("load raster"))?;
        let (rows, cols) = (features.rows(), features.cols());
        let sparse = match &config.labels {
            Some(p) => load_sparse_labels(p, rows, cols).map_err(|e| e.in_stage("load labels"))?,
            None => return Err(Error::Config("missing `labels` path".into())),
        };
        let kb = match &config.kb {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e).in_stage("load rules"))?;
                parse_kb(&text).map_err(|e| e.in_stage("load rules"))?
            }
            None => KnowledgeBase::default_flood(),
        };
        let truth = match &config.truth {
            Some(p) => Some(load_map(p, rows, cols).map_err(|e| e.in_stage("load truth"))?),
            None => None,
        };
        Ok(Self {
            features,
            sparse,
            kb,
            truth,
        })
    }
}

/// Reads a PGM (by extension) or raw `f32` label map.
pub fn load_map(path: &Path, rows: usize, cols: usize) -> Result<LabelMap> {
    let map = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        load_label_map_pgm(path)?
    } else {
        load_label_map_raw(path, rows, cols)?
    };
    if map.rows() != rows || map.cols() != cols {
        return Err(Error::Dimensions(format!(
            "{} is {}x{}, expected {rows}x{cols}",
            path.display(),
            map.rows(),
            map.cols()
        )));
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub inference_seconds: f64,
    pub training_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelScores {
    /// Accuracy of the inferred leaf labels expanded to pixels.
    pub inferred_accuracy: f64,
    /// Accuracy of the classifier after training at this level.
    pub classifier_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: u32,
    /// 0 for the coarse-to-fine pass, then 1, 2, ... for extra rounds.
    pub round: usize,
    pub n_leaves: usize,
    /// Leaves re-inferred at this level.
    pub n_active: usize,
    pub counts: GroundCounts,
    pub solver_iterations: usize,
    pub objective: f64,
    /// `sum_r w_r d_r + lambda * |ground rules|` at this level.
    pub logic_loss: f64,
    /// Active leaves with entropy below the level's threshold.
    pub n_certain: usize,
    pub n_selected: usize,
    pub scores: Option<LevelScores>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: String,
    pub pretrain_loss: f64,
    pub levels: Vec<LevelReport>,
    pub total_ground_rules: usize,
    pub total_inference_seconds: f64,
    pub total_training_seconds: f64,
    pub hierarchical_loss: f64,
    pub warnings: Vec<String>,
    pub evaluation: Option<Evaluation>,
    pub inferred_evaluation: Option<Evaluation>,
}

impl RunReport {
    /// The report with wall-clock fields zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> RunReport {
        let mut r = self.clone();
        r.total_inference_seconds = 0.0;
        r.total_training_seconds = 0.0;
        for l in &mut r.levels {
            l.timing = Timing::default();
        }
        r
    }
}

/// Maps and traces produced at one level.
#[derive(Debug, Clone)]
pub struct LevelArtifacts {
    pub level: u32,
    pub round: usize,
    pub frontier: Frontier,
    /// Soft label per leaf.
    pub leaf_labels: Vec<f64>,
    pub inferred: LabelMap,
    pub uncertainty: LabelMap,
    pub classifier: LabelMap,
    pub solve: SolveOutcome,
    pub training: TrainReport,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub levels: Vec<LevelArtifacts>,
    pub classifier: ReferenceClassifier,
    pub pretrain: TrainReport,
    /// Final classifier probabilities.
    pub probability: LabelMap,
    /// Entropy of `probability`.
    pub uncertainty: LabelMap,
}

impl RunOutcome {
    pub fn final_inferred(&self) -> &LabelMap {
        &self.levels.last().expect("at least one level").inferred
    }
}

/// Metrics document: per-class scores, macro-F1, accuracy and AvU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub per_class: PerClass,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub avu: AvuReport,
}

/// Scores a probability map against binary truth, skipping labelled pixels.
pub fn evaluate(
    pred: &LabelMap,
    truth: &LabelMap,
    uncertainty: &LabelMap,
    exclude: &SparseLabels,
    t_u: f64,
) -> Result<Evaluation> {
    if !pred.same_shape(uncertainty) {
        return Err(Error::Dimensions("uncertainty map shape differs from prediction".into()));
    }
    let report: ClassificationReport = classification_report(pred, truth, exclude)?;
    let avu = avu(pred, truth, uncertainty.values(), t_u, exclude)?;
    Ok(Evaluation {
        per_class: report.per_class,
        macro_f1: report.macro_f1,
        accuracy: report.accuracy.value,
        confusion: report.confusion,
        avu,
    })
}

/// Pixel entropy of a probability map.
pub fn entropy_map(p: &LabelMap) -> LabelMap {
    let u = p.values().iter().map(|&v| binary_entropy(v)).collect();
    LabelMap::new(p.rows(), p.cols(), u).expect("entropy is within [0, ln 2]")
}

fn accuracy(pred: &LabelMap, truth: &LabelMap, exclude: &SparseLabels) -> Result<f64> {
    Ok(classification_report(pred, truth, exclude)?.accuracy.value)
}

/// Trains the classifier on the sparse labels alone.
pub fn pretrain(inputs: &PipelineInputs, config: &PipelineConfig) -> Result<(ReferenceClassifier, TrainReport)> {
    let mut classifier = ReferenceClassifier::new(inputs.features.bands(), config.hidden, config.seed);
    let report = train_sparse_baseline(&mut classifier, &inputs.features, &inputs.sparse, &config.training())
        .map_err(|e| e.in_stage("pretrain"))?;
    Ok((classifier, report))
}

/// The sparse-label-only comparison arm.
pub fn run_baseline(inputs: &PipelineInputs, config: &PipelineConfig) -> Result<(LabelMap, Option<Evaluation>)> {
    config.validate()?;
    let (classifier, _) = pretrain(inputs, config)?;
    let p = predict(&classifier, &inputs.features)?;
    let evaluation = match &inputs.truth {
        Some(truth) => Some(evaluate(&p, truth, &entropy_map(&p), &inputs.sparse, config.t_u)?),
        None => None,
    };
    Ok((p, evaluation))
}

/// Selective coarse-to-fine run.
pub fn run(inputs: &PipelineInputs, config: &PipelineConfig) -> Result<RunOutcome> {
    run_with(inputs, config, config.full_grounding)
}

/// Baseline hierarchy run that refines every cell at every level.
pub fn run_full_grounding(inputs: &PipelineInputs, config: &PipelineConfig) -> Result<RunOutcome> {
    run_with(inputs, config, true)
}

struct LevelPass<'a> {
    inputs: &'a PipelineInputs,
    config: &'a PipelineConfig,
    solver: SolverParams,
    training: TrainParams,
}

struct PassResult {
    report: LevelReport,
    artifacts: LevelArtifacts,
    uncertainty: Vec<f64>,
}

impl LevelPass<'_> {
    /// Grounds, solves and trains on `frontier`; only `active` leaves are
    /// free, the others keep `previous` labels.
    fn execute(
        &self,
        classifier: &mut ReferenceClassifier,
        frontier: &Frontier,
        active: &[bool],
        previous: &[f64],
        level: u32,
        round: usize,
    ) -> Result<PassResult> {
        let features = &self.inputs.features;
        let n_active = active.iter().filter(|&&a| a).count();

        let started = Instant::now();
        let program = ground_active(
            &self.inputs.kb,
            frontier,
            features.elevation(),
            &self.inputs.sparse,
            Some(active),
        );
        let p = predict(classifier, features).map_err(|e| e.in_stage("predict"))?;
        let init: Vec<f64> = frontier
            .leaves()
            .iter()
            .enumerate()
            .map(|(i, cell)| if active[i] { cell_probability(&p, cell) } else { previous[i] })
            .collect();
        let frozen = active.iter().map(|a| !a).collect();
        let init = TruthAssignment::with_frozen(init, frozen)?;
        let solved = solve(&program, &init, &self.solver).map_err(|e| e.in_stage("inference"))?;
        let uncertainty = entropy_uncertainty(&solved.assignment).u;
        let inference_seconds = started.elapsed().as_secs_f64();

        let started = Instant::now();
        let labels = solved.assignment.values().to_vec();
        let training = if n_active > 0 {
            train(classifier, features, &labels, frontier, &self.training).map_err(|e| e.in_stage("training"))?
        } else {
            TrainReport::default()
        };
        let training_seconds = started.elapsed().as_secs_f64();

        let (rows, cols) = (features.rows(), features.cols());
        let inferred = LabelMap::new(rows, cols, frontier.upsample(&labels)?)?;
        let uncertainty_map = LabelMap::new(rows, cols, frontier.upsample(&uncertainty)?)?;
        let classifier_map = predict(classifier, features)?;
        let scores = match &self.inputs.truth {
            Some(truth) => Some(LevelScores {
                inferred_accuracy: accuracy(&inferred, truth, &self.inputs.sparse)?,
                classifier_accuracy: accuracy(&classifier_map, truth, &self.inputs.sparse)?,
            }),
            None => None,
        };
        let logic_distance = distance_sum(&program, &solved.assignment)?;
        let counts = program.counts();
        let report = LevelReport {
            level,
            round,
            n_leaves: frontier.len(),
            n_active,
            counts,
            solver_iterations: solved.iterations,
            objective: solved.objective,
            logic_loss: logic_distance + self.config.lambda * counts.n_ground_rules as f64,
            n_certain: 0,
            n_selected: 0,
            scores,
            timing: Timing {
                inference_seconds,
                training_seconds,
            },
        };
        Ok(PassResult {
            report,
            artifacts: LevelArtifacts {
                level,
                round,
                frontier: frontier.clone(),
                leaf_labels: labels,
                inferred,
                uncertainty: uncertainty_map,
                classifier: classifier_map,
                solve: solved,
                training,
            },
            uncertainty,
        })
    }
}

fn run_with(inputs: &PipelineInputs, config: &PipelineConfig, full: bool) -> Result<RunOutcome> {
    config.validate()?;
    let features = &inputs.features;
    let hierarchy = config.hierarchy()?;
    let (mut classifier, pretrain_report) = pretrain(inputs, config)?;
    let pass = LevelPass {
        inputs,
        config,
        solver: config.solver(),
        training: config.training(),
    };

    let mut warnings = Vec::new();
    let mut reports: Vec<LevelReport> = Vec::new();
    let mut artifacts: Vec<LevelArtifacts> = Vec::new();
    let mut frontier = build_root(features.rows(), features.cols(), hierarchy)?;
    let mut active = vec![true; frontier.len()];
    let mut labels = vec![0.0; frontier.len()];

    for level in (0..=config.max_level).rev() {
        let mut result = pass.execute(&mut classifier, &frontier, &active, &labels, level, 0)?;
        labels = result.artifacts.leaf_labels.clone();

        let rule = config.refinement(level)?;
        let certain_below = match rule {
            RefinementRule::Threshold(t) => t,
            RefinementRule::Budget(_) => config.t_u,
        };
        result.report.n_certain = (0..frontier.len())
            .filter(|&i| active[i] && result.uncertainty[i] < certain_below)
            .count();

        if level > 0 {
            let selected = if full {
                frontier.leaves().to_vec()
            } else {
                let um = crate::psl::UncertaintyMap {
                    u: result.uncertainty.clone(),
                };
                let mut picked = select_refinement_among(&um, &frontier, rule, Some(&active))?;
                if config.refine_labeled_cells {
                    picked.extend(frontier.leaves().iter().zip(&active).filter_map(|(c, &a)| {
                        let labelled = inputs.sparse.entries().iter().any(|e| c.contains(e.row, e.col));
                        (a && labelled).then_some(*c)
                    }));
                    picked.sort_unstable();
                    picked.dedup();
                }
                picked
            };
            result.report.n_selected = selected.len();
            if selected.is_empty() {
                warnings.push(format!(
                    "no cells selected for refinement at level {level}; finer levels keep the current labels"
                ));
            }
            let next = frontier.refine(&selected).map_err(|e| e.in_stage("refinement"))?;
            let mut next_labels = vec![0.0; next.len()];
            let mut next_active = vec![false; next.len()];
            for (i, cell) in next.leaves().iter().enumerate() {
                match frontier.index_of(cell) {
                    Some(j) => next_labels[i] = labels[j],
                    None => next_active[i] = true,
                }
            }
            frontier = next;
            labels = next_labels;
            active = next_active;
        }
        reports.push(result.report);
        artifacts.push(result.artifacts);
    }

    for round in 1..config.outer_rounds {
        let result = pass.execute(&mut classifier, &frontier, &active, &labels, 0, round)?;
        labels = result.artifacts.leaf_labels.clone();
        reports.push(result.report);
        artifacts.push(result.artifacts);
    }

    let probability = predict(&classifier, features)?;
    let uncertainty = entropy_map(&probability);
    let (evaluation, inferred_evaluation) = match &inputs.truth {
        Some(truth) => {
            let last = artifacts.last().expect("at least one level");
            (
                Some(evaluate(&probability, truth, &uncertainty, &inputs.sparse, config.t_u)?),
                Some(evaluate(&last.inferred, truth, &last.uncertainty, &inputs.sparse, config.t_u)?),
            )
        }
        None => (None, None),
    };

    let report = RunReport {
        mode: if full { "full" } else { "selective" }.into(),
        pretrain_loss: pretrain_report.best_loss,
        total_ground_rules: reports.iter().map(|r| r.counts.n_ground_rules).sum(),
        total_inference_seconds: reports.iter().map(|r| r.timing.inference_seconds).sum(),
        total_training_seconds: reports.iter().map(|r| r.timing.training_seconds).sum(),
        hierarchical_loss: reports.iter().map(|r| r.logic_loss).sum(),
        levels: reports,
        warnings,
        evaluation,
        inferred_evaluation,
    };
    Ok(RunOutcome {
        report,
        levels: artifacts,
        classifier,
        pretrain: pretrain_report,
        probability,
        uncertainty,
    })
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

/// Writes a map as an 8-bit PGM preview and a lossless raw sidecar.
pub fn write_map(dir: &Path, stem: &str, map: &LabelMap) -> Result<()> {
    save_label_map(map, dir.join(format!("{stem}.pgm")))?;
    save_label_map_raw(map, dir.join(format!("{stem}.raw")))
}

/// Entropy maps are stretched by `1 / ln 2` in the PGM preview only.
fn write_uncertainty(dir: &Path, stem: &str, map: &LabelMap) -> Result<()> {
    let scaled: Vec<f64> = map.values().iter().map(|u| (u / std::f64::consts::LN_2).min(1.0)).collect();
    save_label_map(
        &LabelMap::new(map.rows(), map.cols(), scaled)?,
        dir.join(format!("{stem}.pgm")),
    )?;
    save_label_map_raw(map, dir.join(format!("{stem}.raw")))
}

/// Writes per-level maps, frontiers and traces plus the run report,
/// metrics and model checkpoint.
pub fn write_artifacts(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    let stage = |e: Error| e.in_stage("write artifacts");
    fs::create_dir_all(dir).map_err(|e| stage(Error::io(dir, e)))?;
    for a in &outcome.levels {
        let stem = if a.round == 0 {
            format!("level{}", a.level)
        } else {
            format!("level{}_round{}", a.level, a.round)
        };
        write_map(dir, &format!("{stem}_inferred"), &a.inferred).map_err(stage)?;
        write_uncertainty(dir, &format!("{stem}_uncertainty"), &a.uncertainty).map_err(stage)?;
        write_map(dir, &format!("{stem}_classifier"), &a.classifier).map_err(stage)?;
        write(dir.join(format!("{stem}_frontier.csv")), a.frontier.to_csv()).map_err(stage)?;
        write(dir.join(format!("{stem}_solver.csv")), a.solve.trace_csv()).map_err(stage)?;
        write(dir.join(format!("{stem}_loss.csv")), a.training.loss_csv()).map_err(stage)?;
    }
    write(dir.join("pretrain_loss.csv"), outcome.pretrain.loss_csv()).map_err(stage)?;
    write_map(dir, "probability", &outcome.probability).map_err(stage)?;
    write_uncertainty(dir, "uncertainty", &outcome.uncertainty).map_err(stage)?;
    write_map(dir, "inferred", outcome.final_inferred()).map_err(stage)?;
    save_checkpoint(outcome.classifier.params(), dir.join("model.ckpt")).map_err(stage)?;
    write(dir.join("report.json"), serde_json::to_string_pretty(&outcome.report)?).map_err(stage)?;
    if let Some(ev) = &outcome.report.evaluation {
        write(dir.join("metrics.json"), serde_json::to_string_pretty(ev)?).map_err(stage)?;
    }
    Ok(())
}

/// Writes the baseline probability map, its entropy and metrics.
pub fn write_baseline(probability: &LabelMap, evaluation: Option<&Evaluation>, dir: &Path) -> Result<()> {
    let stage = |e: Error| e.in_stage("write artifacts");
    fs::create_dir_all(dir).map_err(|e| stage(Error::io(dir, e)))?;
    write_map(dir, "baseline_probability", probability).map_err(stage)?;
    write_uncertainty(dir, "baseline_uncertainty", &entropy_map(probability)).map_err(stage)?;
    if let Some(ev) = evaluation {
        write(dir.join("baseline_metrics.json"), serde_json::to_string_pretty(ev)?).map_err(stage)?;
    }
    Ok(())
}
