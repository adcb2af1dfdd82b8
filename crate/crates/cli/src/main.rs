use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use skihl::pipeline::{
    evaluate, load_map, run, run_baseline, run_full_grounding, write_artifacts, write_baseline,
    write_map, PipelineConfig, PipelineInputs, RunReport,
};
use skihl::raster::{load_sparse_labels, save_raster, save_sparse_labels, LabelMap, SparseLabels};
use skihl::synth::{describe, generate, ScenarioConfig};

#[derive(Parser)]
#[command(name = "skihl", version, about = "Hierarchical flood label inference from sparse labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario into the `raster`, `labels` and `truth` paths.
    Synth {
        #[arg(long)]
        config: PathBuf,
    },
    /// Coarse-to-fine inference and training.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Refine every cell at every level.
        #[arg(long)]
        full_grounding: bool,
    },
    /// Train on the sparse labels alone.
    Baseline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a probability map against truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        unc: PathBuf,
        /// Labelled pixels to leave out of the scores.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Needed when `--pred` is a raw map.
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long, default_value_t = skihl::pipeline::DEFAULT_THRESHOLD)]
        t_u: f64,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth { config } => synth(&config),
        Command::Run { config, full_grounding } => run_pipeline(&config, full_grounding),
        Command::Baseline { config } => baseline(&config),
        Command::Eval {
            pred,
            truth,
            unc,
            labels,
            rows,
            cols,
            t_u,
        } => eval(&pred, &truth, &unc, labels.as_deref(), rows.zip(cols), t_u),
    }
}

fn synth(config_path: &Path) -> Result<()> {
    let text = fs::read_to_string(config_path).with_context(|| format!("reading {}", config_path.display()))?;
    let scenario_config = ScenarioConfig::from_toml_str(&text)?;
    let paths = PipelineConfig::load(config_path)?;
    let (Some(raster), Some(labels)) = (&paths.raster, &paths.labels) else {
        bail!("config must name `raster` and `labels` output paths");
    };
    let scenario = generate(&scenario_config)?;
    let provenance = describe(&scenario_config, &scenario);
    if scenario.empty_flood {
        eprintln!("warning: water level is below the lowest ground; no pixel floods");
    }
    for path in [Some(raster), Some(labels), paths.truth.as_ref()].into_iter().flatten() {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    save_raster(&scenario.features, raster)?;
    save_sparse_labels(&scenario.sparse, labels)?;
    if let Some(truth) = &paths.truth {
        let stem = truth.with_extension("");
        let dir = stem.parent().unwrap_or(Path::new("."));
        let name = stem.file_name().and_then(|n| n.to_str()).unwrap_or("truth");
        write_map(dir, name, &scenario.truth)?;
    }
    let record = raster.with_extension("provenance.json");
    fs::write(&record, serde_json::to_string_pretty(&provenance)?)
        .with_context(|| format!("writing {}", record.display()))?;
    println!(
        "{}x{} raster, flood fraction {:.3}, {} flood / {} dry labels",
        scenario_config.rows,
        scenario_config.cols,
        provenance.flood_fraction,
        provenance.n_flood_labels,
        provenance.n_dry_labels
    );
    Ok(())
}

fn print_report(report: &RunReport) {
    println!("level round leaves active atoms rules clamped iters certain refined infer_s train_s");
    for l in &report.levels {
        println!(
            "{:>5} {:>5} {:>6} {:>6} {:>5} {:>5} {:>7} {:>5} {:>7} {:>7} {:>7.3} {:>7.3}",
            l.level,
            l.round,
            l.n_leaves,
            l.n_active,
            l.counts.n_atoms,
            l.counts.n_ground_rules,
            l.counts.n_clamped,
            l.solver_iterations,
            l.n_certain,
            l.n_selected,
            l.timing.inference_seconds,
            l.timing.training_seconds
        );
    }
    println!(
        "{} run: {} ground rules, inference {:.3}s, training {:.3}s",
        report.mode, report.total_ground_rules, report.total_inference_seconds, report.total_training_seconds
    );
    if let Some(ev) = &report.evaluation {
        println!("accuracy {:.4}, macro-F1 {:.4}, AvU {:.4}", ev.accuracy, ev.macro_f1, ev.avu.avu.value);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

fn run_pipeline(config_path: &Path, full_grounding: bool) -> Result<()> {
    let config = PipelineConfig::load(config_path)?;
    let inputs = PipelineInputs::load(&config)?;
    let outcome = if full_grounding {
        run_full_grounding(&inputs, &config)?
    } else {
        run(&inputs, &config)?
    };
    print_report(&outcome.report);
    match &config.output_dir {
        Some(dir) => write_artifacts(&outcome, dir)?,
        None => println!("{}", serde_json::to_string_pretty(&outcome.report)?),
    }
    Ok(())
}

fn baseline(config_path: &Path) -> Result<()> {
    let config = PipelineConfig::load(config_path)?;
    let inputs = PipelineInputs::load(&config)?;
    let (probability, evaluation) = run_baseline(&inputs, &config)?;
    if let Some(ev) = &evaluation {
        println!("baseline accuracy {:.4}, macro-F1 {:.4}", ev.accuracy, ev.macro_f1);
    }
    if let Some(dir) = &config.output_dir {
        write_baseline(&probability, evaluation.as_ref(), dir)?;
    }
    Ok(())
}

fn read_map(path: &Path, shape: Option<(usize, usize)>) -> Result<LabelMap> {
    let is_pgm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let (rows, cols) = match shape {
        Some(s) => s,
        None if is_pgm => {
            let map = skihl::raster::load_label_map_pgm(path)?;
            (map.rows(), map.cols())
        }
        None => bail!("{} is raw; pass --rows and --cols", path.display()),
    };
    Ok(load_map(path, rows, cols)?)
}

fn eval(
    pred: &Path,
    truth: &Path,
    unc: &Path,
    labels: Option<&Path>,
    shape: Option<(usize, usize)>,
    t_u: f64,
) -> Result<()> {
    let pred = read_map(pred, shape)?;
    let shape = Some((pred.rows(), pred.cols()));
    let truth = read_map(truth, shape)?;
    let unc = if unc.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        // previews store entropy divided by ln 2
        let map = read_map(unc, shape)?;
        let u = map.values().iter().map(|v| v * std::f64::consts::LN_2).collect();
        LabelMap::new(map.rows(), map.cols(), u)?
    } else {
        read_map(unc, shape)?
    };
    let exclude = match labels {
        Some(p) => load_sparse_labels(p, pred.rows(), pred.cols())?,
        None => SparseLabels::default(),
    };
    let ev = evaluate(&pred, &truth, &unc, &exclude, t_u)?;
    println!("{}", serde_json::to_string_pretty(&ev)?);
    Ok(())
}
