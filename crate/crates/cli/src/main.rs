use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shiftmatch::dataset::{export_dataset, import_dataset, read_pgm, LabeledDataset};
use shiftmatch::eval::{evaluate, generate_scores, load_scores_csv, save_scores_csv};
use shiftmatch::nn::{load_checkpoint, save_checkpoint};
use shiftmatch::train::{save_log_csv, train};
use shiftmatch::verify::{gradcheck_suite, selftest_suite, CheckResult};
use shiftmatch::{
    minimum_shifted_loss, Aggregation, Error, ErrorClass, ExperimentConfig, InputImage, LabeledMaps, LossKind,
    OptimizerKind, ParamsF32, Result, ShiftWindow,
};

#[derive(Parser, Debug)]
#[command(name = "shiftmatch", version, about = "Shift-tolerant feature-map matching: data, training, scoring, evaluation")]
struct Cli {
    /// Experiment config (TOML); command-line flags take precedence over it.
    #[arg(long, global = true, env = "SHIFTMATCH_CONFIG")]
    config: Option<PathBuf>,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset as `<out>/<class>/<sample>.pgm`.
    GenData(GenDataArgs),
    /// Train a network and write its checkpoint and per-epoch log.
    Train(TrainArgs),
    /// Match two images with a trained network.
    Match(MatchArgs),
    /// Write probe-versus-class scores for a dataset.
    Scores(ScoresArgs),
    /// Compute EER, ROC and CMC from a score file.
    Eval(EvalArgs),
    /// Finite-difference gradient checks.
    Gradcheck(SeedArgs),
    /// Oracle and invariant checks.
    Selftest(SeedArgs),
    /// Time feature extraction and matching.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Square image side in pixels.
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Subset {
    Train,
    Test,
    All,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossArg {
    Sstl,
    Triplet,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AggregationArg {
    Min,
    Mean,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "train")]
    subset: Subset,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    /// Shift window half-widths `W H`.
    #[arg(long, num_args = 2, value_names = ["W", "H"])]
    window: Option<Vec<u32>>,
}

#[derive(Args, Debug)]
struct MatchArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, num_args = 2, value_names = ["W", "H"])]
    window: Option<Vec<u32>>,
}

#[derive(Args, Debug)]
struct ScoresArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    subset: Subset,
    #[arg(long, num_args = 2, value_names = ["W", "H"])]
    window: Option<Vec<u32>>,
    #[arg(long, value_enum)]
    aggregation: Option<AggregationArg>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    /// ROC points as CSV.
    #[arg(long)]
    out: PathBuf,
    /// Summary text block.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Whitespace-separated ROC and CMC data for plotting.
    #[arg(long)]
    gnuplot: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SeedArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// Input side; the matched maps are a quarter of it.
    #[arg(long, default_value_t = 128)]
    size: usize,
}

fn window_arg(w: &Option<Vec<u32>>) -> Option<ShiftWindow> {
    w.as_ref().map(|v| ShiftWindow::new(v[0], v[1]))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_data(cfg: &ExperimentConfig, dir: &Path, subset: Subset) -> Result<LabeledDataset> {
    let ds = import_dataset(dir, cfg.data.resize.map(|[w, h]| (w, h)))?;
    Ok(match subset {
        Subset::All => ds,
        Subset::Train => cfg.data.split(&ds).train,
        Subset::Test => cfg.data.split(&ds).test,
    })
}

fn load_image(cfg: &ExperimentConfig, path: &Path) -> Result<InputImage> {
    let img = read_pgm(path)?;
    match cfg.data.resize {
        Some([w, h]) if (w, h) != (img.width(), img.height()) => img.resize(w, h),
        _ => Ok(img),
    }
}

fn print_checks(results: &[CheckResult]) -> Result<()> {
    for r in results {
        println!(
            "{} {} cases={} max_error={:.3e} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.cases,
            r.max_error,
            r.detail
        );
    }
    match results.iter().find(|r| !r.passed) {
        None => Ok(()),
        Some(r) => Err(Error::NumericalDivergence(format!("check {} failed", r.name))),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::GenData(a) => {
            let s = &mut cfg.synthetic;
            s.seed = a.seed.unwrap_or(s.seed);
            s.classes = a.classes.unwrap_or(s.classes);
            s.samples_per_class = a.samples.unwrap_or(s.samples_per_class);
            if let Some(side) = a.size {
                (s.width, s.height) = (side, side);
            }
            cfg.validate()?;
            let ds = shiftmatch::synth::generate(&cfg.synthetic)?;
            export_dataset(&ds, &a.out)?;
            println!("wrote {} images in {} classes to {}", ds.len(), ds.class_count(), a.out.display());
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            t.seed = a.seed.unwrap_or(t.seed);
            t.epochs = a.epochs.unwrap_or(t.epochs);
            t.batch_size = a.batch_size.unwrap_or(t.batch_size);
            t.learning_rate = a.learning_rate.unwrap_or(t.learning_rate);
            t.margin = a.margin.unwrap_or(t.margin);
            t.window = window_arg(&a.window).unwrap_or(t.window);
            if let Some(l) = a.loss {
                t.loss = match l {
                    LossArg::Sstl => LossKind::Sstl,
                    LossArg::Triplet => LossKind::Triplet,
                };
            }
            if let Some(o) = a.optimizer {
                t.optimizer = match o {
                    OptimizerArg::Sgd => OptimizerKind::Sgd,
                    OptimizerArg::Adam => OptimizerKind::Adam,
                };
            }
            cfg.train.validate()?;
            cfg.network.validate()?;
            let ds = load_data(&cfg, &a.data, a.subset)?;
            let out = train::<f32>(&ds, &cfg.network, &cfg.train)?;
            save_checkpoint(&out.params, &a.out)?;
            if let Some(log) = &a.log {
                save_log_csv(&out.log, log)?;
            }
            match out.log.last() {
                Some(r) => println!("epochs {} loss {} active_fraction {}", r.epoch, r.loss, r.active_fraction),
                None => println!("epochs 0"),
            }
        }
        Command::Match(a) => {
            let params: ParamsF32 = load_checkpoint(&a.ckpt)?;
            let window = window_arg(&a.window).unwrap_or(cfg.eval.window);
            let fa = params.forward(&load_image(&cfg, &a.a)?)?;
            let fb = params.forward(&load_image(&cfg, &a.b)?)?;
            let m = minimum_shifted_loss(&fa, &fb, window)?;
            println!("distance {}", m.distance);
            println!("offset {} {}", m.best_offset.w, m.best_offset.h);
        }
        Command::Scores(a) => {
            let params: ParamsF32 = load_checkpoint(&a.ckpt)?;
            cfg.eval.window = window_arg(&a.window).unwrap_or(cfg.eval.window);
            if let Some(agg) = a.aggregation {
                cfg.eval.aggregation = match agg {
                    AggregationArg::Min => Aggregation::Min,
                    AggregationArg::Mean => Aggregation::Mean,
                };
            }
            let ds = load_data(&cfg, &a.data, a.subset)?;
            let maps = LabeledMaps::embed(&params, &ds)?;
            let m = generate_scores(&maps, &cfg.eval)?;
            save_scores_csv(&m, &a.out)?;
            let (g, i) = m.score_set().counts();
            println!("genuine {g} imposter {i}");
        }
        Command::Eval(a) => {
            let report = evaluate(&load_scores_csv(&a.scores)?)?;
            report.write_roc_csv(fs::File::create(&a.out)?)?;
            if let Some(p) = &a.summary {
                fs::write(p, report.summary())?;
            }
            if let Some(p) = &a.gnuplot {
                report.write_gnuplot(fs::File::create(p)?)?;
            }
            print!("{}", report.summary());
        }
        Command::Gradcheck(a) => print_checks(&gradcheck_suite(a.seed)?)?,
        Command::Selftest(a) => print_checks(&selftest_suite(a.seed)?)?,
        Command::Bench(a) => bench(&cfg, &a)?,
    }
    Ok(())
}

fn bench(cfg: &ExperimentConfig, a: &BenchArgs) -> Result<()> {
    let params = ParamsF32::init(&cfg.network, cfg.train.seed)?;
    let img = InputImage::from_fn(a.size, a.size, |x, y| ((x * 7 + y * 3) % 17) as f32 / 16.0)?;
    let other = InputImage::from_fn(a.size, a.size, |x, y| ((x * 5 + y * 11) % 13) as f32 / 12.0)?;
    let (fa, fb) = (params.forward(&img)?, params.forward(&other)?);
    let iters = a.iters.max(1);
    let t = Instant::now();
    for _ in 0..iters {
        std::hint::black_box(params.forward(&img)?);
    }
    let extract = t.elapsed().as_secs_f64() / iters as f64;
    let t = Instant::now();
    for _ in 0..iters {
        std::hint::black_box(minimum_shifted_loss(&fa, &fb, cfg.eval.window)?);
    }
    let matching = t.elapsed().as_secs_f64() / iters as f64;
    println!("extract {}x{} -> {}x{}: {:.6} s", a.size, a.size, fa.width(), fa.height(), extract);
    println!(
        "match {}x{} window ({},{}): {:.6} s",
        fa.width(),
        fa.height(),
        cfg.eval.window.max_w,
        cfg.eval.window.max_h,
        matching
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            eprintln!("error class=validation kind=Usage message={first:?}");
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error class=validation kind=Threads message={:?}", e.to_string());
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (class, code) = match e.class() {
                ErrorClass::Validation => ("validation", 1),
                ErrorClass::Runtime => ("runtime", 2),
                ErrorClass::Io => ("io", 3),
            };
            eprintln!("error class={class} kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::from(code)
        }
    }
}
