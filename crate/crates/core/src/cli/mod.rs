//! Command-line harness: `run`, `eval-inverse`, `verify-theorem2`, `plot`.
//! Exit codes are 0 on success, 1 on runtime failure, 2 on usage or
//! configuration errors.

pub mod experiment;
pub mod plot;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::benchmarks::{by_name, Problem};
use crate::engine::artifacts::{read_manifest, read_tasks, HV_CURVE_FILE};
use crate::engine::{
    evaluate_inverse, mean_std, read_hv_curve, read_inverse_model, run, write_partial_run, write_run_dir, InverseEvaluation,
    InverseSampler, UniformSampler, UntrainedSampler,
};
use crate::error::Error;
use crate::generative::ConditionalGenerator;
use crate::metrics::{gain_bound_check, GainCheckConfig};
use crate::rng::{self, label};

pub use experiment::ExperimentConfig;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const EXPERIMENT_FILE: &str = "experiment.json";
pub const INVERSE_EVAL_FILE: &str = "inverse_eval.csv";
pub const INVERSE_SOLUTIONS_FILE: &str = "inverse_solutions.csv";
pub const INVERSE_SUMMARY_FILE: &str = "inverse_summary.txt";
pub const INVERSE_BASELINES_FILE: &str = "inverse_baselines.csv";

#[derive(Debug, Parser)]
#[command(name = "pmobo", version, about = "Parametric multi-task multi-objective Bayesian optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run U seeded optimizations and summarize final hypervolumes.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed; overrides `seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a run's inverse model on unseen tasks.
    EvalInverse {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        w: usize,
        /// Preference queries per task; 100 for two objectives, 1000 otherwise.
        #[arg(long)]
        s: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the CSVs; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also score uniform and untrained-generator baselines.
        #[arg(long)]
        baselines: bool,
    },
    /// Check that joint information gain never exceeds single-task gain.
    VerifyTheorem2 {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON trial grid; defaults cover K in {2,4,8}, T in {5,15}, M in {2,3}.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Per-row report CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render mean hypervolume curves of one or more run directories.
    Plot {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        #[arg(long, default_value = "hv_curve.svg")]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

fn usage(context: impl std::fmt::Display) -> impl FnOnce(Error) -> Failure {
    move |e| Failure::Usage(format!("{context}: {e}"))
}

fn runtime(context: impl std::fmt::Display) -> impl FnOnce(Error) -> Failure {
    move |e| Failure::Runtime(format!("{context}: {e}"))
}

/// Parses `args` (program name first) and executes the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run { config, out: dir, seed } => cmd_run(&config, dir, seed, out),
        Command::EvalInverse { run_dir, w, s, seed, out: dir, baselines } => {
            cmd_eval_inverse(&run_dir, w, s, seed, dir, baselines, out)
        }
        Command::VerifyTheorem2 { trials, seed, config, out: csv } => cmd_verify_theorem2(trials, seed, config, csv, out),
        Command::Plot { run_dirs, out: svg } => cmd_plot(&run_dirs, &svg, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))
}

fn csv_text(header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn cell(mean: f64, std: f64) -> String {
    format!("{mean:.4} ({std:.4})")
}

fn cmd_run(config: &Path, dir: Option<PathBuf>, seed: Option<u64>, out: &mut dyn Write) -> Result<i32, Failure> {
    let text =
        fs::read_to_string(config).map_err(|e| Failure::Usage(format!("reading {}: {e}", config.display())))?;
    let mut exp = ExperimentConfig::from_json(&text).map_err(usage("invalid config"))?;
    if let Some(s) = seed {
        exp.seed = s;
    }
    if let Some(d) = dir {
        exp.output_dir = Some(d);
    }
    let exp = exp.resolve().map_err(usage("invalid config"))?;
    let problem = exp.problem().map_err(usage("invalid config"))?;
    let engine = exp.engine();
    let root = exp.output_dir();
    fs::create_dir_all(&root).map_err(|e| Failure::Runtime(format!("creating {}: {e}", root.display())))?;
    let mut resolved = serde_json::to_string_pretty(&exp).expect("config serializes");
    resolved.push('\n');
    write_file(&root.join(EXPERIMENT_FILE), &resolved)?;

    let seeds = exp.run_seeds();
    let mut finals: Vec<Vec<f64>> = Vec::with_capacity(seeds.len());
    for (i, &s) in seeds.iter().enumerate() {
        let run_dir = root.join(format!("run_{i}"));
        match run(&problem, &engine, s) {
            Ok(art) => {
                write_run_dir(&run_dir, &art).map_err(runtime(format!("writing {}", run_dir.display())))?;
                let hv = art.final_hypervolumes();
                let _ = writeln!(out, "run {i} (seed {s}): mean final hypervolume {}", mean_std(&hv).0);
                finals.push(hv);
            }
            Err(failure) => {
                if let Some(state) = &failure.partial {
                    write_partial_run(&run_dir, &exp.benchmark, &engine, state, &failure.error)
                        .map_err(runtime(format!("writing {}", run_dir.display())))?;
                }
                return Err(Failure::Runtime(format!("run {i} (seed {s}) failed: {}", failure.error)));
            }
        }
    }

    let header: Vec<String> = ["method", "task", "runs", "mean", "std", "cell"].map(String::from).to_vec();
    let mut rows = Vec::new();
    let summary_row = |task: String, values: &[f64]| {
        let (m, s) = mean_std(values);
        vec![exp.method.name().to_string(), task, values.len().to_string(), m.to_string(), s.to_string(), cell(m, s)]
    };
    for k in 0..exp.num_tasks {
        let values: Vec<f64> = finals.iter().map(|f| f[k]).collect();
        rows.push(summary_row(k.to_string(), &values));
    }
    let pooled: Vec<f64> = finals.iter().map(|f| mean_std(f).0).collect();
    rows.push(summary_row("pooled".into(), &pooled));
    write_file(&root.join(SUMMARY_FILE), &csv_text(&header, &rows))?;
    let (m, s) = mean_std(&pooled);
    let _ = writeln!(out, "{} on {}: {}", exp.method, exp.benchmark, cell(m, s));
    Ok(0)
}

fn inverse_tables(ev: &InverseEvaluation) -> (String, String) {
    let v = ev.tasks.first().map_or(0, |t| t.theta.len());
    let mut header: Vec<String> = vec!["task".into()];
    header.extend((0..v).map(|i| format!("theta_{i}")));
    header.push("hv".into());
    let rows: Vec<Vec<String>> = ev
        .tasks
        .iter()
        .enumerate()
        .map(|(w, t)| {
            let mut r = vec![w.to_string()];
            r.extend(t.theta.iter().map(f64::to_string));
            r.push(t.hv.to_string());
            r
        })
        .collect();
    let eval = csv_text(&header, &rows);

    let first = ev.tasks.first();
    let (m, d) = first.map_or((0, 0), |t| (t.preferences[0].len(), t.solutions[0].len()));
    let mut header: Vec<String> = vec!["task".into(), "query".into()];
    header.extend((0..m).map(|i| format!("lambda_{i}")));
    header.extend((0..d).map(|i| format!("x_{i}")));
    header.extend((0..m).map(|i| format!("f_{i}")));
    let mut rows = Vec::new();
    for (w, t) in ev.tasks.iter().enumerate() {
        for (q, ((l, x), f)) in t.preferences.iter().zip(&t.solutions).zip(&t.objectives).enumerate() {
            let mut r = vec![w.to_string(), q.to_string()];
            r.extend(l.as_slice().iter().map(f64::to_string));
            r.extend(x.iter().map(f64::to_string));
            r.extend(f.iter().map(f64::to_string));
            rows.push(r);
        }
    }
    (eval, csv_text(&header, &rows))
}

fn cmd_eval_inverse(
    run_dir: &Path,
    w: usize,
    s: Option<usize>,
    seed: Option<u64>,
    dir: Option<PathBuf>,
    baselines: bool,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let manifest = read_manifest(run_dir).map_err(usage(format!("{} is not a run directory", run_dir.display())))?;
    let tasks = read_tasks(run_dir).map_err(usage(format!("{} is not a run directory", run_dir.display())))?;
    let model = read_inverse_model(run_dir)
        .map_err(usage("unreadable generator checkpoint"))?
        .ok_or_else(|| Failure::Usage(format!("{} has no generator checkpoint", run_dir.display())))?;
    let problem = by_name(&manifest.benchmark).map_err(usage("run directory names an unknown benchmark"))?;
    if w == 0 || s == Some(0) {
        return Err(Failure::Usage("--w and --s must be positive".into()));
    }
    let s = s.unwrap_or(if problem.num_objectives() == 2 { 100 } else { 1000 });
    let seed = seed.unwrap_or(manifest.seed);
    let dir = dir.unwrap_or_else(|| run_dir.to_path_buf());
    fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("creating {}: {e}", dir.display())))?;
    let score = |sampler: &dyn InverseSampler| {
        evaluate_inverse(sampler, &problem, w, s, &tasks.tasks, &tasks.hv_reference, seed).map_err(runtime("inverse evaluation"))
    };

    let ev = score(&model)?;
    let (eval, solutions) = inverse_tables(&ev);
    write_file(&dir.join(INVERSE_EVAL_FILE), &eval)?;
    write_file(&dir.join(INVERSE_SOLUTIONS_FILE), &solutions)?;
    let line = cell(ev.mean, ev.std);
    write_file(&dir.join(INVERSE_SUMMARY_FILE), &format!("{line}\n"))?;
    let _ = writeln!(out, "inverse model on {w} unseen tasks x {s} queries: {line}");

    if baselines {
        let generator = model.generator().expect("checkpoint restores a generator");
        let untrained = ConditionalGenerator::untrained(
            generator.kind(),
            generator.decision_dim(),
            generator.conditioning_dim(),
            &manifest.engine.generator,
            &mut rng::stream(seed, &[label::INVERSE_EVAL, 2]),
        )
        .map_err(runtime("untrained baseline"))?;
        let mut rows = vec![vec!["model".to_string(), ev.mean.to_string(), ev.std.to_string(), line.clone()]];
        let uniform = UniformSampler { d: problem.decision_dim() };
        for (name, sampler) in
            [("uniform", &uniform as &dyn InverseSampler), ("untrained", &UntrainedSampler(untrained) as &dyn InverseSampler)]
        {
            let b = score(sampler)?;
            let _ = writeln!(out, "{name} baseline: {}", cell(b.mean, b.std));
            rows.push(vec![name.to_string(), b.mean.to_string(), b.std.to_string(), cell(b.mean, b.std)]);
        }
        let header: Vec<String> = ["sampler", "mean", "std", "cell"].map(String::from).to_vec();
        write_file(&dir.join(INVERSE_BASELINES_FILE), &csv_text(&header, &rows))?;
    }
    Ok(0)
}

fn cmd_verify_theorem2(
    trials: usize,
    seed: u64,
    config: Option<PathBuf>,
    csv: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    if trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    let cfg = match config {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(|e| Failure::Usage(format!("reading {}: {e}", p.display())))?;
            serde_json::from_str::<GainCheckConfig>(&text).map_err(|e| Failure::Usage(format!("invalid grid: {e}")))?
        }
        None => GainCheckConfig::default(),
    };
    let report = gain_bound_check(trials, seed, &cfg).map_err(usage("invalid trial grid"))?;
    if let Some(path) = csv {
        report.write_csv_file(&path).map_err(runtime(format!("writing {}", path.display())))?;
    }
    let _ = writeln!(
        out,
        "{} trials, {} comparisons, {} violations, max violation {:e}, gap min {} mean {} max {}",
        report.trials,
        report.rows.len(),
        report.violations(),
        report.max_violation(),
        report.min_gap(),
        report.mean_gap(),
        report.max_gap()
    );
    Ok(if report.passed() { 0 } else { 1 })
}

fn cmd_plot(run_dirs: &[PathBuf], svg: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    let mut runs = Vec::with_capacity(run_dirs.len());
    for dir in run_dirs {
        let rows = read_hv_curve(&dir.join(HV_CURVE_FILE)).map_err(usage(format!("{}", dir.display())))?;
        if rows.is_empty() {
            return Err(Failure::Usage(format!("{}: empty {HV_CURVE_FILE}", dir.display())));
        }
        runs.push(rows);
    }
    let curves = plot::curves(&runs);
    write_file(svg, &plot::render_svg(&curves))?;
    let _ = writeln!(out, "wrote {} curve(s) to {}", curves.len(), svg.display());
    Ok(0)
}

