//! The `ccrf` command-line driver: `synth`, `train`, `eval` and `ablate`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or shape error, 3 divergence,
//! 4 partial sweep failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::ablation::{corruption_grid, median, run_cell, synth_dataset, with_classes, CellResult};
use crate::config::{RunConfig, SweepKind};
use crate::data::corrupt::CorruptionSpec;
use crate::data::metrics::{DepthMetrics, SegMetrics};
use crate::error::Error;
use crate::io::checkpoint::{load_model, save_model};
use crate::io::dump::dump_inference;
use crate::io::manifest::{load_dataset, write_dataset};
use crate::losses::TaskLossKind;
use crate::model::Task;
use crate::plot::{LinePlot, Series};
use crate::training::{evaluate, train, MetricRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

pub const RUN_FILE: &str = "run.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";

const SEG_COLUMNS: [&str; 4] = ["pix_acc", "class_acc", "avg_jaccard", "freq_jaccard"];
const DEPTH_COLUMNS: [&str; 6] = ["rel", "log10", "rms", "δ1", "δ2", "δ3"];

/// Seed stride between repeated sweep runs; keeps their scenes disjoint.
const SWEEP_SEED_STRIDE: u64 = 1_000_000;

#[derive(Debug, Parser)]
#[command(name = "ccrf", about = "Deep continuous CRFs on superpixel graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// key=value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset manifest or the directory holding it.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Model checkpoint.
    #[arg(long, global = true)]
    pub ckpt: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = ["softmax", "tukey", "ls", "loglik"])]
    pub loss: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth,
    /// Train a model and write its checkpoint and history.
    Train,
    /// Evaluate a checkpoint on the test split (unary-only and full rows).
    Eval {
        /// Also dump R, A0, Z and Yhat of the first test example here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Loss-vs-class-count or loss-vs-corruption sweep.
    Ablate,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Eval { .. } => "eval",
            Command::Ablate => "ablate",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
    /// Some sweep cells failed; the rest of the report was written.
    Partial(usize),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run(Error::Divergence { .. }) => EXIT_DIVERGENCE,
            CliError::Run(_) => EXIT_DATA,
            CliError::Partial(_) => EXIT_PARTIAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
            CliError::Partial(n) => write!(f, "{n} sweep cell(s) failed"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Identity of one invocation, written to `run.txt` in the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub run_id: String,
}

impl RunManifest {
    pub fn new(command: &str, config_path: Option<&Path>, config: &RunConfig, out_dir: &Path) -> Self {
        Self {
            command: command.into(),
            config_path: config_path.map(Path::to_path_buf),
            seed: config.seed(),
            out_dir: out_dir.to_path_buf(),
            run_id: run_id(config),
        }
    }

    pub fn render(&self) -> String {
        let cfg = self.config_path.as_ref().map_or("-".into(), |p| p.display().to_string());
        format!(
            "run_id={}\ncommand={}\nconfig={cfg}\nseed={}\nout={}\n",
            self.run_id,
            self.command,
            self.seed,
            self.out_dir.display()
        )
    }

    /// Create the output directory, refusing one that belongs to another run.
    pub fn claim(&self) -> CliResult<()> {
        let file = self.out_dir.join(RUN_FILE);
        if let Ok(text) = fs::read_to_string(&file) {
            let existing = text.lines().find_map(|l| l.strip_prefix("run_id=")).unwrap_or("");
            if existing != self.run_id {
                return Err(CliError::Usage(format!(
                    "{} holds run {existing}, not {}; use a fresh --out",
                    self.out_dir.display(),
                    self.run_id
                )));
            }
        }
        fs::create_dir_all(&self.out_dir)?;
        fs::write(file, self.render())?;
        Ok(())
    }
}

/// Hex digest of the rendered configuration and seed.
pub fn run_id(config: &RunConfig) -> String {
    let mut h = Sha256::new();
    h.update(config.render().as_bytes());
    h.update(format!("seed={}\n", config.seed()).as_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("ccrf: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    if let Some(l) = &cli.loss {
        cfg.train.loss = l.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
    }
    Ok(cfg)
}

fn required<'a>(opt: &'a Option<PathBuf>, flag: &str, cmd: &str) -> CliResult<&'a Path> {
    opt.as_deref().ok_or_else(|| CliError::Usage(format!("{cmd} needs --{flag}")))
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = load_config(cli)?;
    let name = cli.command.name();
    let out = required(&cli.out, "out", name)?;
    let manifest = RunManifest::new(name, cli.config.as_deref(), &cfg, out);
    match cli.command {
        Command::Synth => cmd_synth(&cfg, &manifest),
        Command::Train => cmd_train(&cfg, required(&cli.data, "data", name)?, &manifest),
        Command::Eval { ref dump } => {
            cmd_eval(required(&cli.ckpt, "ckpt", name)?, required(&cli.data, "data", name)?, dump.as_deref(), &manifest)
        }
        Command::Ablate => cmd_ablate(&cfg, &manifest),
    }
}

pub fn cmd_synth(cfg: &RunConfig, manifest: &RunManifest) -> CliResult<()> {
    let data = synth_dataset(&cfg.scene, cfg.count, cfg.train_pct, cfg.val_pct)?;
    manifest.claim()?;
    write_dataset(&manifest.out_dir, &data)?;
    println!(
        "wrote {} train / {} val / {} test examples ({}) to {}",
        data.train.len(),
        data.val.len(),
        data.test.len(),
        data.task,
        manifest.out_dir.display()
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, data_path: &Path, manifest: &RunManifest) -> CliResult<()> {
    let data = load_dataset(data_path)?;
    if data.train.is_empty() {
        return Err(Error::InvalidArgument("dataset has no training examples".into()).into());
    }
    manifest.claim()?;
    let (model, history) = train(&data.train, &data.val, &cfg.model, &cfg.train)?;
    save_model(&model, &manifest.out_dir.join(CHECKPOINT_FILE))?;
    fs::write(manifest.out_dir.join(HISTORY_FILE), history.to_csv())?;
    let selection = if data.val.is_empty() { &data.train } else { &data.val };
    let metrics = evaluate(&model, selection, data.task, model.coupled)?;
    let (header, row) = metric_cells(&metrics);
    let best = history.best_epoch.map_or("none".into(), |e| e.to_string());
    println!("best epoch {best}; validation {}", header.iter().zip(&row).map(|(h, v)| format!("{h}={v:.4}")).collect::<Vec<_>>().join(" "));
    Ok(())
}

fn metric_cells(m: &MetricRecord) -> (Vec<&'static str>, Vec<f64>) {
    match m {
        MetricRecord::Segmentation(s) => (SEG_COLUMNS.to_vec(), seg_values(s).to_vec()),
        MetricRecord::Depth(d) => (DEPTH_COLUMNS.to_vec(), depth_values(d).to_vec()),
    }
}

fn seg_values(m: &SegMetrics) -> [f64; 4] {
    [m.pixel_acc, m.class_acc, m.avg_jaccard, m.freq_jaccard]
}

fn depth_values(m: &DepthMetrics) -> [f64; 6] {
    [m.rel, m.log10, m.rms, m.delta1, m.delta2, m.delta3]
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    fn markdown(&self) -> String {
        let mut out = format!("| {} |\n|", self.header.join(" | "));
        out.push_str(&"---|".repeat(self.header.len()));
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "| {} |", r.join(" | "));
        }
        out
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v:.6}")
}

pub fn cmd_eval(ckpt: &Path, data_path: &Path, dump: Option<&Path>, manifest: &RunManifest) -> CliResult<()> {
    let model = load_model(ckpt)?;
    let data = load_dataset(data_path)?;
    if data.test.is_empty() {
        return Err(Error::InvalidArgument("dataset has no test examples".into()).into());
    }
    model.check_task(data.task)?;
    if data.feature_dim() != Some(model.feature_dim()) {
        return Err(Error::Shape(format!(
            "checkpoint expects {} features, dataset has {:?}",
            model.feature_dim(),
            data.feature_dim()
        ))
        .into());
    }
    let mut table = Table { header: vec!["variant".into()], rows: vec![] };
    for (variant, coupled) in [("unary", false), ("full", true)] {
        let m = evaluate(&model, &data.test, data.task, coupled)?;
        let (header, values) = metric_cells(&m);
        if table.rows.is_empty() {
            table.header.extend(header.iter().map(|h| h.to_string()));
        }
        let mut row = vec![variant.to_string()];
        row.extend(values.into_iter().map(fmt_value));
        table.rows.push(row);
    }
    manifest.claim()?;
    fs::write(manifest.out_dir.join("eval.csv"), table.csv())?;
    fs::write(manifest.out_dir.join("eval.md"), table.markdown())?;
    if let Some(dir) = dump {
        let graph = &data.test[0].graph;
        let r = model.affinities(graph, true)?;
        let out = model.predict_with(graph, true)?;
        dump_inference(dir, r.view(), &out)?;
    }
    print!("{}", table.markdown());
    Ok(())
}

/// Reporting name of a loss in sweep tables.
fn sweep_name(loss: TaskLossKind) -> String {
    match loss {
        TaskLossKind::LogLikelihood => "log".into(),
        TaskLossKind::Tukey { .. } => "robust".into(),
        other => other.to_string(),
    }
}

struct Cell {
    label: String,
    loss: TaskLossKind,
    outcome: std::result::Result<Vec<f64>, String>,
}

/// Run one sweep cell over every seed and take field-wise medians.
fn sweep_cell(cfg: &RunConfig, task: Task, loss: TaskLossKind, corruption: Option<&CorruptionSpec>) -> std::result::Result<Vec<f64>, String> {
    let mut per_seed: Vec<Vec<f64>> = Vec::new();
    for k in 0..cfg.sweep.seeds as u64 {
        let seed = cfg.seed().wrapping_add(k * SWEEP_SEED_STRIDE);
        let mut scene = cfg.scene.with_seed(seed);
        scene.task = task;
        let mut train_cfg = cfg.train.clone();
        train_cfg.loss = loss;
        train_cfg.seed = seed;
        let cell: CellResult = synth_dataset(&scene, cfg.count, cfg.train_pct, cfg.val_pct)
            .and_then(|data| run_cell(&data, corruption, &cfg.model, &train_cfg))
            .map_err(|e| e.to_string())?;
        per_seed.push(metric_cells(&cell.full).1);
    }
    let width = per_seed[0].len();
    Ok((0..width).map(|j| median(&mut per_seed.iter().map(|r| r[j]).collect::<Vec<_>>())).collect())
}

pub fn cmd_ablate(cfg: &RunConfig, manifest: &RunManifest) -> CliResult<()> {
    let (label_header, columns, headline, cells) = match cfg.sweep.kind {
        SweepKind::Classes => {
            if cfg.sweep.classes.is_empty() {
                return Err(CliError::Usage("sweep_classes is empty".into()));
            }
            manifest.claim()?;
            let mut cells = Vec::new();
            for &m in &cfg.sweep.classes {
                let task = with_classes(&cfg.scene, m).task;
                for loss in [TaskLossKind::SOFTMAX, TaskLossKind::LogLikelihood] {
                    let outcome = sweep_cell(cfg, task, loss, None);
                    cells.push(Cell { label: m.to_string(), loss, outcome });
                }
            }
            ("classes", SEG_COLUMNS.to_vec(), 0, cells)
        }
        SweepKind::Corruption => {
            if cfg.scene.task != Task::Depth {
                return Err(CliError::Usage("the corruption sweep needs task=depth".into()));
            }
            manifest.claim()?;
            let mut cells = Vec::new();
            for spec in corruption_grid(cfg.sweep.noise_sigma, cfg.sweep.outlier_magnitude) {
                for loss in [TaskLossKind::LogLikelihood, TaskLossKind::Tukey { c: 1.0 }] {
                    let outcome = sweep_cell(cfg, Task::Depth, loss, Some(&spec));
                    cells.push(Cell { label: spec.label(), loss, outcome });
                }
            }
            ("corruption", DEPTH_COLUMNS.to_vec(), 2, cells)
        }
    };

    let mut table = Table { header: vec![label_header.into(), "loss".into()], rows: vec![] };
    table.header.extend(columns.iter().map(|c| c.to_string()));
    table.header.push("status".into());
    let mut failed = 0;
    for c in &cells {
        let mut row = vec![c.label.clone(), sweep_name(c.loss)];
        match &c.outcome {
            Ok(v) => {
                row.extend(v.iter().map(|&x| fmt_value(x)));
                row.push("ok".into());
            }
            Err(msg) => {
                failed += 1;
                eprintln!("ccrf: cell {} / {} failed: {msg}", c.label, sweep_name(c.loss));
                row.extend(columns.iter().map(|_| String::new()));
                row.push("failed".into());
            }
        }
        table.rows.push(row);
    }

    let mut labels: Vec<String> = Vec::new();
    for c in &cells {
        if !labels.contains(&c.label) {
            labels.push(c.label.clone());
        }
    }
    let mut losses: Vec<TaskLossKind> = Vec::new();
    for c in &cells {
        if !losses.contains(&c.loss) {
            losses.push(c.loss);
        }
    }
    let series = losses
        .iter()
        .map(|&loss| Series {
            name: sweep_name(loss),
            points: cells
                .iter()
                .filter(|c| c.loss == loss)
                .map(|c| {
                    let x = labels.iter().position(|l| *l == c.label).unwrap() as f64;
                    (x, c.outcome.as_ref().map_or(f64::NAN, |v| v[headline]))
                })
                .collect(),
        })
        .collect();
    let plot = LinePlot {
        title: format!("{} vs {label_header}", columns[headline]),
        x_label: label_header.into(),
        y_label: columns[headline].into(),
        x_ticks: labels,
        series,
    };
    fs::write(manifest.out_dir.join("ablate.csv"), table.csv())?;
    fs::write(manifest.out_dir.join("ablate.md"), table.markdown())?;
    fs::write(manifest.out_dir.join("ablate.svg"), plot.to_svg())?;
    print!("{}", table.markdown());
    if failed > 0 {
        return Err(CliError::Partial(failed));
    }
    Ok(())
}
