//! Command-line interface.
//!
//! Subcommands: `synth`, `order`, `train`, `score`, `evaluate`,
//! `mac-report`, `quantize-scan`. Every subcommand accepts `--seed N`
//! and `--config FILE` (a JSON object overriding that subcommand's
//! defaults). Exit codes: 0 success, 1 usage error, 2 data error,
//! 3 numeric error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contraction::{count_macs, plan_model};
use crate::dataset::{
    generate_synthetic, load_dataset, save_dataset, Dataset, FileFormat, SyntheticConfig,
};
use crate::embedding::{compute_qmi, embed, load_ordering, save_ordering, spectral_order};
use crate::error::{Result, TnError};
use crate::executor::execute_plan;
use crate::metrics::metrics_report;
use crate::model::{new_csmpo, reference_model, reference_smpo, ModelFile, TnModel, ARCH_SMPO_19_1};
use crate::quantization::{
    default_scan_formats, quantization_scan, FixedPointFormat, QuantConfig, RequantMode,
};
use crate::training::{
    anomaly_score, train, LossParams, ScoreCalibration, TrainConfig,
};

const USAGE: &str = "\
tn-trigger: tensor-network anomaly trigger toolkit

USAGE:
  tn-trigger <COMMAND> [flags]

COMMANDS:
  synth          generate a synthetic labeled dataset
                   --out FILE [--format csv|rawbin] [--seed N] [--config JSON]
  order          compute the mutual-information site ordering
                   --data FILE --out FILE [--format csv|rawbin]
                   [--max-events N] [--seed N] [--config JSON]
  train          train a model unsupervised on background events
                   --data FILE --arch 19-1|19-7-1|19-2-1 --out-model FILE
                   [--ordering FILE] [--out-history FILE] [--format csv|rawbin]
                   [--seed N] [--config JSON]
  score          score events with a trained model
                   --model FILE --data FILE --out FILE [--format csv|rawbin]
                   [--seed N] [--config JSON]
  evaluate       per-signal AUC and TPR at a fixed false-positive rate
                   --model FILE --data FILE --out FILE [--target-fpr F]
                   [--format csv|rawbin] [--seed N] [--config JSON]
  mac-report     multiply-accumulate cost table for an architecture
                   --arch 19-1|19-7-1|19-2-1 [--out-json FILE]
                   [--seed N] [--config JSON]
  quantize-scan  fixed-point precision scan of a trained model
                   --model FILE --data FILE [--formats 'W,I,RND,OVF;...']
                   [--out-csv FILE] [--out-json FILE] [--target-fpr F]
                   [--requant per_step|per_mac] [--seed N] [--config JSON]

Dataset --format defaults from the file extension (.csv -> csv, else rawbin).
";

/// Run the CLI on pre-split arguments (no program name), returning the
/// process exit status.
pub fn cli(args: &[String]) -> i32 {
    match run(args) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("{msg}");
            eprintln!("{USAGE}");
            1
        }
        Err(CliError::Tool(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

enum CliError {
    Usage(String),
    Tool(TnError),
}

impl From<TnError> for CliError {
    fn from(e: TnError) -> Self {
        match e {
            TnError::Config(msg) => CliError::Usage(format!("error: {msg}")),
            other => CliError::Tool(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn run(args: &[String]) -> CliResult<()> {
    let Some(command) = args.first() else {
        return Err(usage("error: missing command"));
    };
    if command == "--help" || command == "-h" || command == "help" {
        println!("{USAGE}");
        return Ok(());
    }
    let flags = parse_flags(&args[1..])?;
    match command.as_str() {
        "synth" => cmd_synth(flags),
        "order" => cmd_order(flags),
        "train" => cmd_train(flags),
        "score" => cmd_score(flags),
        "evaluate" => cmd_evaluate(flags),
        "mac-report" => cmd_mac_report(flags),
        "quantize-scan" => cmd_quantize_scan(flags),
        other => Err(usage(format!("error: unknown command '{other}'"))),
    }
}

struct Flags {
    values: BTreeMap<String, String>,
}

impl Flags {
    fn take(&mut self, name: &str) -> Option<String> {
        self.values.remove(name)
    }

    fn require(&mut self, name: &str) -> CliResult<String> {
        self.take(name)
            .ok_or_else(|| usage(format!("error: missing required flag --{name}")))
    }

    fn finish(self, command: &str) -> CliResult<()> {
        if let Some((name, _)) = self.values.into_iter().next() {
            return Err(usage(format!(
                "error: unknown flag --{name} for {command}"
            )));
        }
        Ok(())
    }

    fn seed(&mut self) -> CliResult<u64> {
        match self.take("seed") {
            None => Ok(0),
            Some(s) => s
                .parse()
                .map_err(|_| usage(format!("error: --seed '{s}' is not an integer"))),
        }
    }

    fn config<T: for<'de> Deserialize<'de> + Default>(&mut self) -> CliResult<T> {
        match self.take("config") {
            None => Ok(T::default()),
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Tool(TnError::Io(e)))?;
                serde_json::from_str(&text).map_err(|e| {
                    usage(format!("error: cannot parse config {path}: {e}"))
                })
            }
        }
    }

    fn target_fpr(&mut self, from_config: Option<f64>) -> CliResult<f64> {
        if let Some(s) = self.take("target-fpr") {
            return s
                .parse()
                .map_err(|_| usage(format!("error: --target-fpr '{s}' is not a number")));
        }
        Ok(from_config.unwrap_or(1e-5))
    }
}

fn parse_flags(args: &[String]) -> CliResult<Flags> {
    let mut values = BTreeMap::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        let Some(name) = arg.strip_prefix("--") else {
            return Err(usage(format!("error: unexpected argument '{arg}'")));
        };
        if name == "help" {
            return Err(usage(String::new()));
        }
        let Some(value) = args.get(i + 1) else {
            return Err(usage(format!("error: flag --{name} needs a value")));
        };
        if values.insert(name.to_string(), value.clone()).is_some() {
            return Err(usage(format!("error: flag --{name} given twice")));
        }
        i += 2;
    }
    Ok(Flags { values })
}

fn dataset_format(flags: &mut Flags, path: &Path) -> CliResult<FileFormat> {
    match flags.take("format").as_deref() {
        None => Ok(FileFormat::infer(path)),
        Some("csv") => Ok(FileFormat::Csv),
        Some("rawbin") => Ok(FileFormat::RawBin),
        Some(other) => Err(usage(format!("error: unknown dataset format '{other}'"))),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(TnError::from)?;
    std::fs::write(path, text).map_err(TnError::from)?;
    Ok(())
}

fn cmd_synth(mut flags: Flags) -> CliResult<()> {
    let out = PathBuf::from(flags.require("out")?);
    let seed = flags.seed()?;
    let cfg: SyntheticConfig = flags.config()?;
    let format = dataset_format(&mut flags, &out)?;
    flags.finish("synth")?;
    let data = generate_synthetic(&cfg, seed);
    save_dataset(&data, &out, format)?;
    println!(
        "wrote {} events ({} background, {} anomaly) to {}",
        data.len(),
        cfg.n_background,
        cfg.n_anomaly,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct OrderConfig {
    max_events: Option<usize>,
}

fn cmd_order(mut flags: Flags) -> CliResult<()> {
    let data_path = PathBuf::from(flags.require("data")?);
    let out = PathBuf::from(flags.require("out")?);
    let _seed = flags.seed()?;
    let cfg: OrderConfig = flags.config()?;
    let max_events = match flags.take("max-events") {
        Some(s) => Some(
            s.parse()
                .map_err(|_| usage(format!("error: --max-events '{s}' is not an integer")))?,
        ),
        None => cfg.max_events,
    };
    let format = dataset_format(&mut flags, &data_path)?;
    flags.finish("order")?;

    let dataset = load_dataset(&data_path, format)?;
    let mut events = dataset.background_events();
    if let Some(cap) = max_events {
        events.truncate(cap);
    }
    let qmi = compute_qmi(&events)?;
    let ordering = spectral_order(&qmi)?;
    if ordering.degenerate {
        eprintln!("warning: correlation graph is degenerate; canonical ordering kept");
    }
    save_ordering(&ordering.order, &out)?;
    println!("wrote ordering {:?} to {}", ordering.order, out.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct TrainCliConfig {
    batch_size: usize,
    learning_rate: Option<f64>,
    max_epochs: usize,
    patience: usize,
    min_delta: f64,
    splits: (f64, f64, f64),
    mu: Option<f64>,
    delta: Option<f64>,
    bond: usize,
    bond1: usize,
    bond2: usize,
    phys_mid: usize,
}

impl Default for TrainCliConfig {
    fn default() -> Self {
        let base = TrainConfig::default();
        TrainCliConfig {
            batch_size: base.batch_size,
            learning_rate: None,
            max_epochs: base.max_epochs,
            patience: base.patience,
            min_delta: base.min_delta,
            splits: base.splits,
            mu: None,
            delta: None,
            bond: 4,
            bond1: 2,
            bond2: 2,
            phys_mid: 3,
        }
    }
}

fn build_model(arch: &str, cfg: &TrainCliConfig, seed: u64) -> Result<TnModel> {
    if arch == ARCH_SMPO_19_1 {
        if cfg.bond == 4 {
            Ok(reference_smpo(seed))
        } else {
            let layer = crate::model::new_smpo(19, &[9], cfg.bond, 3, 3, seed)?;
            TnModel::single(layer, ARCH_SMPO_19_1)
        }
    } else {
        new_csmpo(arch, cfg.bond1, cfg.bond2, cfg.phys_mid, seed)
    }
}

fn cmd_train(mut flags: Flags) -> CliResult<()> {
    let data_path = PathBuf::from(flags.require("data")?);
    let arch = flags.require("arch")?;
    let out_model = PathBuf::from(flags.require("out-model")?);
    let out_history = flags.take("out-history").map(PathBuf::from);
    let ordering_path = flags.take("ordering").map(PathBuf::from);
    let seed = flags.seed()?;
    let cfg: TrainCliConfig = flags.config()?;
    let format = dataset_format(&mut flags, &data_path)?;
    flags.finish("train")?;

    let dataset = load_dataset(&data_path, format)?;
    let background = dataset.background_events();
    if background.len() < 10 {
        return Err(CliError::Tool(TnError::Config(format!(
            "need at least 10 background events to train, found {}",
            background.len()
        ))));
    }

    let mut model = build_model(&arch, &cfg, seed)?;
    if let Some(path) = ordering_path {
        let ordering = load_ordering(path)?;
        model = model.with_ordering(ordering)?;
    }
    let cascade = model.is_cascade();
    let train_cfg = TrainConfig {
        batch_size: cfg.batch_size,
        learning_rate: cfg
            .learning_rate
            .unwrap_or(TrainConfig::reference_for(cascade).learning_rate),
        max_epochs: cfg.max_epochs,
        patience: cfg.patience,
        min_delta: cfg.min_delta,
        seed,
        splits: cfg.splits,
        ..TrainConfig::default()
    };
    let reference_loss = LossParams::reference_for(cascade);
    let loss_params = LossParams::new(
        cfg.mu.unwrap_or(reference_loss.mu),
        cfg.delta.unwrap_or(reference_loss.delta),
    )?;

    let bkg = Dataset::unlabeled(background);
    let (train_set, valid_set, test_set) = bkg.split(train_cfg.splits, seed)?;
    println!(
        "training {arch} on {} events (valid {}, test {})",
        train_set.len(),
        valid_set.len(),
        test_set.len()
    );
    let report = train(&model, &train_set.events, &valid_set.events, &train_cfg, &loss_params)?;
    if let Some(reason) = &report.history.aborted {
        eprintln!("warning: training aborted early: {reason}");
    }

    // deployment prep: balance per-site weight scales (function-preserving,
    // keeps fixed-point intermediates in range), then calibrate the anomaly
    // score on the background test split
    let mut trained = report.model;
    crate::model::balance_site_gauge(&mut trained);
    let plan = plan_model(&trained)?;
    let mut norms = Vec::with_capacity(test_set.len());
    for event in &test_set.events {
        let mps = embed(event, &trained.ordering)?;
        norms.push(execute_plan(&plan, &trained, &mps)?);
    }
    let calibration = ScoreCalibration::from_norms(&norms)?;

    ModelFile::new(trained, seed)
        .with_calibration(calibration.median_bkg)
        .save(&out_model)?;
    println!(
        "saved model to {} (median_bkg {:.6})",
        out_model.display(),
        calibration.median_bkg
    );

    if let Some(path) = out_history {
        #[derive(Serialize)]
        struct HistoryFile<'a> {
            arch: &'a str,
            seed: u64,
            median_bkg: f64,
            history: &'a crate::training::TrainHistory,
        }
        write_json(
            &path,
            &HistoryFile {
                arch: &arch,
                seed,
                median_bkg: calibration.median_bkg,
                history: &report.history,
            },
        )?;
        println!("saved history to {}", path.display());
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::load(path)
}

fn score_dataset(
    model: &TnModel,
    dataset: &Dataset,
) -> Result<Vec<f64>> {
    let plan = plan_model(model)?;
    let mut norms = Vec::with_capacity(dataset.len());
    for event in &dataset.events {
        let mps = embed(event, &model.ordering)?;
        norms.push(execute_plan(&plan, model, &mps)?);
    }
    Ok(norms)
}

fn cmd_score(mut flags: Flags) -> CliResult<()> {
    let model_path = PathBuf::from(flags.require("model")?);
    let data_path = PathBuf::from(flags.require("data")?);
    let out = PathBuf::from(flags.require("out")?);
    let _seed = flags.seed()?;
    let _cfg: serde_json::Value = flags.config()?;
    let format = dataset_format(&mut flags, &data_path)?;
    flags.finish("score")?;

    let file = load_model(&model_path)?;
    let median = file.median_bkg.ok_or_else(|| {
        TnError::Config("model carries no calibration; train it first".into())
    })?;
    let cal = ScoreCalibration { median_bkg: median };
    let dataset = load_dataset(&data_path, format)?;
    let norms = score_dataset(&file.model, &dataset)?;

    #[derive(Serialize)]
    struct ScoreEntry<'a> {
        norm_sq: f64,
        score: f64,
        label: &'a str,
    }
    #[derive(Serialize)]
    struct ScoresFile<'a> {
        median_bkg: f64,
        entries: Vec<ScoreEntry<'a>>,
    }
    let entries: Vec<ScoreEntry> = norms
        .iter()
        .enumerate()
        .map(|(i, &n)| ScoreEntry {
            norm_sq: n,
            score: anomaly_score(n, &cal),
            label: dataset.label_of(i),
        })
        .collect();
    write_json(&out, &ScoresFile { median_bkg: median, entries })?;
    println!("scored {} events to {}", norms.len(), out.display());
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct EvaluateConfig {
    target_fpr: Option<f64>,
}

fn cmd_evaluate(mut flags: Flags) -> CliResult<()> {
    let model_path = PathBuf::from(flags.require("model")?);
    let data_path = PathBuf::from(flags.require("data")?);
    let out = PathBuf::from(flags.require("out")?);
    let _seed = flags.seed()?;
    let cfg: EvaluateConfig = flags.config()?;
    let target_fpr = flags.target_fpr(cfg.target_fpr)?;
    let format = dataset_format(&mut flags, &data_path)?;
    flags.finish("evaluate")?;

    let file = load_model(&model_path)?;
    let dataset = load_dataset(&data_path, format)?;
    let signal_labels = dataset.signal_labels();
    if signal_labels.is_empty() {
        return Err(CliError::Tool(TnError::Config(
            "evaluation dataset has no signal-labeled events".into(),
        )));
    }
    let norms = score_dataset(&file.model, &dataset)?;

    let mut bkg_norms = Vec::new();
    for (i, &n) in norms.iter().enumerate() {
        if dataset.label_of(i) == Dataset::BACKGROUND {
            bkg_norms.push(n);
        }
    }
    let cal = ScoreCalibration::from_norms(&bkg_norms)?;
    let bkg_scores: Vec<f64> = bkg_norms.iter().map(|&n| anomaly_score(n, &cal)).collect();
    let per_signal: Vec<(String, Vec<f64>)> = signal_labels
        .iter()
        .map(|label| {
            let scores: Vec<f64> = norms
                .iter()
                .enumerate()
                .filter(|(i, _)| dataset.label_of(*i) == label)
                .map(|(_, &n)| anomaly_score(n, &cal))
                .collect();
            (label.clone(), scores)
        })
        .collect();
    let report = metrics_report(cal.median_bkg, &bkg_scores, &per_signal, target_fpr)?;
    write_json(&out, &report)?;
    for sig in &report.per_signal {
        println!(
            "{:>12}: AUC {:.4}  TPR@{:.0e} {:.4}{}",
            sig.label,
            sig.auc,
            target_fpr,
            sig.tpr,
            if sig.resolution_warning {
                "  (background too small to resolve the target rate)"
            } else {
                ""
            }
        );
    }
    println!("wrote report to {}", out.display());
    Ok(())
}

fn cmd_mac_report(mut flags: Flags) -> CliResult<()> {
    let arch = flags.require("arch")?;
    let out_json = flags.take("out-json").map(PathBuf::from);
    let seed = flags.seed()?;
    let _cfg: serde_json::Value = flags.config()?;
    flags.finish("mac-report")?;

    let model = reference_model(&arch, seed)?;
    let plan = plan_model(&model)?;
    let report = count_macs(&plan);
    print!("{}", report.render_table());
    if let Some(path) = out_json {
        write_json(&path, &report)?;
        println!("wrote JSON report to {}", path.display());
    }
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct ScanConfig {
    formats: Option<Vec<String>>,
    target_fpr: Option<f64>,
    requant: Option<String>,
}

fn cmd_quantize_scan(mut flags: Flags) -> CliResult<()> {
    let model_path = PathBuf::from(flags.require("model")?);
    let data_path = PathBuf::from(flags.require("data")?);
    let out_csv = flags.take("out-csv").map(PathBuf::from);
    let out_json = flags.take("out-json").map(PathBuf::from);
    let _seed = flags.seed()?;
    let cfg: ScanConfig = flags.config()?;
    let target_fpr = flags.target_fpr(cfg.target_fpr)?;
    let formats_flag = flags.take("formats");
    let requant_flag = flags.take("requant").or(cfg.requant.clone());
    let format = dataset_format(&mut flags, &data_path)?;
    flags.finish("quantize-scan")?;

    let formats: Vec<FixedPointFormat> = match formats_flag
        .map(|s| s.split(';').map(str::to_string).collect::<Vec<_>>())
        .or(cfg.formats)
    {
        None => default_scan_formats(),
        Some(specs) => specs
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<_>>>()?,
    };
    let requant = match requant_flag.as_deref() {
        None | Some("per_step") => RequantMode::PerStep,
        Some("per_mac") => RequantMode::PerMac,
        Some(other) => {
            return Err(usage(format!("error: unknown requant mode '{other}'")));
        }
    };
    let base = QuantConfig {
        requant,
        ..QuantConfig::default()
    };

    let file = load_model(&model_path)?;
    let dataset = load_dataset(&data_path, format)?;
    let report = quantization_scan(&file.model, &dataset, &formats, &base, target_fpr)?;
    print!("{}", report.to_csv());
    if let Some(path) = out_csv {
        std::fs::write(&path, report.to_csv()).map_err(TnError::from)?;
        println!("wrote CSV to {}", path.display());
    }
    if let Some(path) = out_json {
        write_json(&path, &report)?;
        println!("wrote JSON to {}", path.display());
    }
    Ok(())
}
