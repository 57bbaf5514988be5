//! `scalewave`: train and evaluate scale-equivariant 1-D networks, and run
//! the numerical property checks from the command line.
//!
//! Exit codes: 0 success, 1 a check failed or the run errored, 2 bad usage
//! or configuration.

mod run_config;
mod selftest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scalewave::datasets::{
    generate_task, read_manifest, write_manifest, write_wav, GaborAtom, SignalModel, Split, SyntheticTask, TaskData,
    WavClip,
};
use scalewave::group::GroupElement;
use scalewave::layers::{equivariance_probe, ProbeInput};
use scalewave::models::{preset, ArchitectureConfig, Model};
use scalewave::tensor::Precision;
use scalewave::trainer::{evaluate, train, Checkpoint, Dataset, EvalReport};
use scalewave::transforms::theorem::{verify_all, TheoremConfig};
use scalewave::Tensor;

use run_config::RunConfig;

#[derive(Parser)]
#[command(name = "scalewave", version, about = "Scale-equivariant 1-D convolutional networks")]
struct Cli {
    /// Directory for every output file.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single-threaded execution.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the Fourier, STFT and wavelet shift/scale relations on random signals.
    VerifyTransforms {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Measure per-layer equivariance error of a model's first layers.
    VerifyEquivariance(EquivarianceArgs),
    /// Train a model; flags override the config file, which overrides the preset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
    },
    /// Print the layer table and parameter counts.
    PrintArch {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Sample every spline filter at each scale of its grid.
    ExportFilters {
        /// Filters of a trained checkpoint; otherwise of a fresh model.
        #[arg(long, conflicts_with_all = ["preset", "config"])]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic task as a JSONL manifest (and optional WAV files).
    GenData {
        /// Task TOML; the desk task when absent.
        #[arg(long)]
        task: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write one 16-bit WAV per example.
        #[arg(long)]
        wav: bool,
    },
    /// Fast property checks of the whole library.
    Selftest,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    preset: Option<String>,
    /// Run file whose architecture to use.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<ArchitectureConfig> {
        let mut run = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.preset {
            run.preset = Some(p.clone());
            run.model = None;
        }
        run.architecture()
    }
}

#[derive(Args)]
struct DataArgs {
    /// JSONL manifest.
    #[arg(long, conflicts_with = "task")]
    data: Option<PathBuf>,
    /// Task TOML to generate; the desk task when neither is given.
    #[arg(long)]
    task: Option<PathBuf>,
    #[arg(long)]
    data_seed: Option<u64>,
}

#[derive(Args)]
struct EquivarianceArgs {
    #[arg(long, default_value = "desk-wnet")]
    preset: String,
    /// Group element `t0=<shift>,s0=<dilation>`, applied as (u, s) = (s0·t0, s0).
    #[arg(long, default_value = "t0=7,s0=2")]
    g: String,
    /// Input length (default: the preset's).
    #[arg(long)]
    len: Option<usize>,
    /// Convolution layers to probe (default 3 for samples, 1 for analytic).
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "samples")]
    input: ProbeKind,
    /// Pass threshold on the worst relative error (default 1e-10 / 2e-2).
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbeKind {
    /// Random samples; transformed by resampling the grid.
    Samples,
    /// A band-limited analytic signal sampled before and after the action.
    Analytic,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Wavelet penalty weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// JSONL manifest instead of a generated task.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Data-parallel shards per batch; results do not depend on --threads.
    #[arg(long)]
    shards: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

/// Bad flags or configuration; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// A property check ran but did not pass; exits with status 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct CheckFailed(String);

fn parse_g(s: &str) -> Result<GroupElement> {
    let (mut t0, mut s0) = (0.0, 1.0);
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| usage(format!("--g: expected key=value, got `{part}`")))?;
        let v: f64 = v.trim().parse().map_err(|_| usage(format!("--g: `{v}` is not a number")))?;
        match k.trim() {
            "t0" => t0 = v,
            "s0" => s0 = v,
            other => return Err(usage(format!("--g: unknown key `{other}` (expected t0, s0)"))),
        }
    }
    GroupElement::new(s0 * t0, s0).map_err(|e| usage(format!("--g: {e}")))
}

fn precision_override() -> Result<Option<Precision>> {
    match std::env::var("SCALEWAVE_PRECISION") {
        Ok(v) => Precision::parse(&v)
            .map(Some)
            .ok_or_else(|| usage(format!("SCALEWAVE_PRECISION must be f32 or f64, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_task(path: Option<&Path>) -> Result<SyntheticTask> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
        }
        None => Ok(SyntheticTask::desk()),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn check_input_len(arch: &ArchitectureConfig, data: &TaskData) -> Result<()> {
    if let Some(ex) = data.train.iter().chain(&data.val).chain(&data.test).next() {
        if ex.samples.len() != arch.input_len {
            return Err(usage(format!(
                "examples have {} samples but `{}` expects input_len {}",
                ex.samples.len(),
                arch.name,
                arch.input_len
            )));
        }
    }
    Ok(())
}

fn verify_transforms(out: &Path, trials: usize, n: usize, seed: u64) -> Result<()> {
    let cfg = TheoremConfig {
        n,
        trials,
        seed,
        ..Default::default()
    };
    // with fixed configuration, a contract violation can only come from the flags
    let reports = verify_all(&cfg).map_err(|e| match e {
        scalewave::Error::Contract(m) => usage(format!("--n/--trials: {m}")),
        e => e.into(),
    })?;
    let mut csv = String::from("property,trials,max_rel_err,threshold,passed\n");
    let mut failed = Vec::new();
    for r in &reports {
        let id = r.property.id();
        writeln!(csv, "{id},{},{:e},{},{}", r.trials, r.max_rel_err, opt(r.threshold), r.passed)?;
        println!("{:<40} {:>10.3e}  {}", id, r.max_rel_err, if r.passed { "PASS" } else { "FAIL" });
        if !r.passed {
            failed.push(id);
        }
    }
    write(&out.join("verify_transforms.csv"), &csv)?;
    if !failed.is_empty() {
        return Err(CheckFailed(format!("failed: {}", failed.join(", "))).into());
    }
    Ok(())
}

fn verify_equivariance(out: &Path, a: &EquivarianceArgs) -> Result<()> {
    let g = parse_g(&a.g)?;
    let mut cfg = preset(&a.preset)?;
    if let Some(len) = a.len {
        cfg.input_len = len;
    }
    let k = g.s.ln() / cfg.grid_base.ln();
    if (k - k.round()).abs() > 1e-9 {
        return Err(usage(format!("--g: s0 = {} is not a power of the grid base {}", g.s, cfg.grid_base)));
    }
    let len = cfg.input_len;
    let model = Model::build(&cfg, a.seed)?;
    let (input, n_layers, tol) = match a.input {
        ProbeKind::Samples => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let x = (0..cfg.in_channels * len).map(|_| rng.random_range(-1.0..1.0)).collect();
            (ProbeInput::Samples(Tensor::new(&[1, cfg.in_channels, len], x)?), 3, 1e-10)
        }
        ProbeKind::Analytic => {
            if cfg.in_channels != 1 {
                return Err(usage("--input analytic needs a single-channel model"));
            }
            let atom = GaborAtom {
                amplitude: 1.0,
                center: len as f64 / 4.0,
                width: len as f64 / 50.0,
                frequency: 0.04,
                phase: 0.3,
            };
            (ProbeInput::Model { model: SignalModel::new(vec![atom]), len }, 1, 2e-2)
        }
    };
    let stack = model.probe_stack(a.layers.unwrap_or(n_layers))?;
    let report = equivariance_probe(&stack, g, &input)?;
    let tol = a.tol.unwrap_or(tol);
    let mut csv = String::from("layer,rel_err\n");
    for (name, e) in &report.per_layer {
        writeln!(csv, "{name},{e:e}")?;
        println!("{name:<16} {e:.3e}");
    }
    write(&out.join("equivariance.csv"), &csv)?;
    println!("g = (u={}, s={}); max relative error {:.3e} (tol {tol:e})", g.u, g.s, report.max_rel_err);
    if !(report.max_rel_err <= tol) {
        return Err(CheckFailed(format!("equivariance error {:.3e} exceeds {tol:e}", report.max_rel_err)).into());
    }
    Ok(())
}

fn eval_csv(rows: &[(Split, usize, EvalReport)]) -> Result<String> {
    let mut csv = String::from("split,n,loss,accuracy,auc_class,auc_clip,map\n");
    for (split, n, r) in rows {
        let t = r.tagging.as_ref();
        writeln!(
            csv,
            "{split},{n},{:e},{},{},{},{}",
            r.loss,
            opt(r.accuracy),
            opt(t.map(|t| t.auc_per_class)),
            opt(t.map(|t| t.auc_per_clip)),
            opt(t.map(|t| t.map)),
        )?;
    }
    Ok(csv)
}

fn report_line(split: Split, r: &EvalReport) -> String {
    let mut s = format!("{split}: loss {:.4}", r.loss);
    if let Some(a) = r.accuracy {
        write!(s, ", accuracy {:.4}", a).unwrap();
    }
    if let Some(t) = &r.tagging {
        write!(s, ", AUC(class) {:.4}, AUC(clip) {:.4}, mAP {:.4}", t.auc_per_class, t.auc_per_clip, t.map).unwrap();
    }
    s
}

fn run_train(out: &Path, a: &TrainArgs) -> Result<()> {
    let mut run = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &a.preset {
        run.preset = Some(p.clone());
        run.model = None;
    }
    let t = &mut run.train;
    t.seed = a.seed.unwrap_or(t.seed);
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.lr = a.lr.unwrap_or(t.lr);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.lambda = a.lambda.or(t.lambda);
    t.max_steps = a.max_steps.or(t.max_steps);
    t.shards = a.shards.unwrap_or(t.shards);
    t.validate()?;
    if let Some(d) = &a.data {
        run.manifest = Some(d.clone());
    }
    run.data_seed = a.data_seed.unwrap_or(run.data_seed);

    let mut arch = run.architecture()?;
    if let Some(p) = precision_override()? {
        arch.precision = p;
    }
    // the echo pins everything a preset or default filled in
    run.model = Some(arch.clone());
    if run.manifest.is_none() {
        run.task = Some(run.task());
    }
    std::fs::create_dir_all(out)?;
    write(&out.join("config.toml"), &run.to_toml()?)?;

    let data = match &run.manifest {
        Some(m) => read_manifest(m).with_context(|| format!("reading {}", m.display()))?,
        None => generate_task(&run.task(), run.data_seed)?,
    };
    check_input_len(&arch, &data)?;
    let (train_ds, val_ds) = (Dataset::from_examples(&data.train)?, Dataset::from_examples(&data.val)?);

    let mut model = Model::build(&arch, run.train.seed)?;
    info!(
        "training {} ({} parameters) on {} / {} examples",
        arch.name,
        model.count_parameters().total,
        train_ds.len(),
        val_ds.len()
    );
    let outcome = train(&mut model, &train_ds, &val_ds, &run.train, Some(out))?;
    outcome.last.save(&out.join("last.swck"))?;
    let mut rows = Vec::new();
    let mut best = outcome.best.to_model()?;
    for split in [Split::Val, Split::Test] {
        let ex = data.split(split);
        if ex.is_empty() {
            continue;
        }
        let r = evaluate(&mut best, &Dataset::from_examples(ex)?, run.train.batch_size)?;
        println!("best checkpoint, {}", report_line(split, &r));
        rows.push((split, ex.len(), r));
    }
    write(&out.join("test.csv"), &eval_csv(&rows)?)?;
    println!("{} steps; outputs in {}", outcome.steps, out.display());
    Ok(())
}

fn run_eval(out: &Path, checkpoint: &Path, d: &DataArgs, split: Split, batch_size: usize) -> Result<()> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let mut model = ck.to_model()?;
    let data = match &d.data {
        Some(m) => read_manifest(m).with_context(|| format!("reading {}", m.display()))?,
        None => generate_task(&load_task(d.task.as_deref())?, d.data_seed.unwrap_or(0))?,
    };
    check_input_len(&model.config, &data)?;
    let ex = data.split(split);
    if ex.is_empty() {
        bail!("split {split} is empty");
    }
    let r = evaluate(&mut model, &Dataset::from_examples(ex)?, batch_size)?;
    println!("{}", report_line(split, &r));
    std::fs::create_dir_all(out)?;
    write(&out.join("eval.csv"), &eval_csv(&[(split, ex.len(), r)])?)
}

fn print_arch(out: &Path, arch: &ArchitectureConfig) -> Result<()> {
    let info = arch.infer()?;
    let mut csv = String::from("layer,output,kernel,max_width,scale_extent,params\n");
    let o = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    println!("{} (input {}x{})", arch.name, arch.in_channels, arch.input_len);
    println!("{:<20} {:<16} {:>6} {:>9} {:>6} {:>10}", "layer", "output", "kernel", "max width", "scales", "params");
    let mut total = 0;
    for l in &info {
        let dims = l.output.dims().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        writeln!(csv, "{},{dims},{},{},{},{}", l.name(), o(l.kernel), o(l.max_width), o(l.scale_extent), l.params)?;
        println!(
            "{:<20} {:<16} {:>6} {:>9} {:>6} {:>10}",
            l.name(),
            dims,
            o(l.kernel),
            o(l.max_width),
            o(l.scale_extent),
            l.params
        );
        total += l.params;
    }
    println!("total parameters: {total}");
    std::fs::create_dir_all(out)?;
    write(&out.join("arch.csv"), &csv)
}

fn export_filters(out: &Path, model: &Model) -> Result<()> {
    let filters = model.spline_filters();
    if filters.is_empty() {
        return Err(usage(format!("`{}` has no spline filters", model.config.name)));
    }
    let mut csv = String::from("param,scale,out,in,scale_tap,tap,value\n");
    for (name, f, grid) in &filters {
        for &s in &grid.scales {
            let k = f.sample(s)?;
            let shape = k.shape().to_vec();
            let (co, ci, ks, taps) = match shape[..] {
                [co, ci, taps] => (co, ci, 1, taps),
                [co, ci, ks, taps] => (co, ci, ks, taps),
                _ => bail!("unexpected filter shape {shape:?}"),
            };
            let v = k.data();
            for o in 0..co {
                for i in 0..ci {
                    for j in 0..ks {
                        for t in 0..taps {
                            let idx = ((o * ci + i) * ks + j) * taps + t;
                            let slot = if shape.len() == 4 { j.to_string() } else { String::new() };
                            writeln!(csv, "{name},{s},{o},{i},{slot},{t},{:e}", v[idx])?;
                        }
                    }
                }
            }
        }
        println!("{name}: {:?} coefficients, {} scales", f.coeffs.shape(), grid.scales.len());
    }
    std::fs::create_dir_all(out)?;
    write(&out.join("filters.csv"), &csv)
}

fn gen_data(out: &Path, task: Option<&Path>, seed: u64, wav: bool) -> Result<()> {
    let task = load_task(task)?;
    let data = generate_task(&task, seed)?;
    std::fs::create_dir_all(out)?;
    write_manifest(&out.join("manifest.jsonl"), &data)?;
    println!(
        "{} train / {} val / {} test examples of {} samples",
        data.train.len(),
        data.val.len(),
        data.test.len(),
        task.len
    );
    if wav {
        // one gain for the whole set keeps relative amplitudes
        let peak = Split::ALL
            .iter()
            .flat_map(|&s| data.split(s))
            .flat_map(|e| &e.samples)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let gain = if peak > 0.0 { 0.99 / peak } else { 1.0 };
        let dir = out.join("wav");
        std::fs::create_dir_all(&dir)?;
        for split in Split::ALL {
            for (i, ex) in data.split(split).iter().enumerate() {
                let clip = WavClip::mono(16_000, ex.samples.iter().map(|v| v * gain).collect());
                std::fs::write(dir.join(format!("{split}_{i:05}_c{}.wav", ex.label)), write_wav(&clip))?;
            }
        }
        println!("WAV files in {} (gain {gain:.4})", dir.display());
    }
    Ok(())
}

fn run_selftest(out: &Path) -> Result<()> {
    let checks = selftest::run()?;
    let mut csv = String::from("check,value,threshold,passed\n");
    let mut failed = Vec::new();
    for c in &checks {
        writeln!(csv, "{},{:e},{:e},{}", c.name, c.value, c.threshold, c.passed())?;
        println!("{:<40} {:>10.3e}  {}", c.name, c.value, if c.passed() { "PASS" } else { "FAIL" });
        if !c.passed() {
            failed.push(c.name.as_str());
        }
    }
    std::fs::create_dir_all(out)?;
    write(&out.join("selftest.csv"), &csv)?;
    if !failed.is_empty() {
        return Err(CheckFailed(format!("failed: {}", failed.join(", "))).into());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    if let Some(p) = precision_override()? {
        scalewave::tensor::set_precision(p);
    }
    let out = cli.out.as_path();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match &cli.command {
        Command::VerifyTransforms { trials, n, seed } => verify_transforms(out, *trials, *n, *seed),
        Command::VerifyEquivariance(a) => verify_equivariance(out, a),
        Command::Train(a) => run_train(out, a),
        Command::Eval {
            checkpoint,
            data,
            split,
            batch_size,
        } => run_eval(out, checkpoint, data, (*split).into(), *batch_size),
        Command::PrintArch { model } => print_arch(out, &model.resolve()?),
        Command::ExportFilters { checkpoint, model, seed } => {
            let m = match checkpoint {
                Some(p) => Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?.to_model()?,
                None => Model::build(&model.resolve()?, *seed)?,
            };
            export_filters(out, &m)
        }
        Command::GenData { task, seed, wav } => gen_data(out, task.as_deref(), *seed, *wav),
        Command::Selftest => run_selftest(out),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.is::<Usage>() {
        return 2;
    }
    match e.downcast_ref::<scalewave::Error>() {
        Some(scalewave::Error::Config { .. } | scalewave::Error::UnknownProperty(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.is::<CheckFailed>() {
                eprintln!("check failed: {e}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
