use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use compound_core::experiments::{
    collect_series, emit_plot, preset, read_rows, report_tables, rerun_cells,
    run_selftest, run_sweep, PlotSpec, RunManifest, SweepConfig, SystemFamily, MANIFEST_FILE, PRESETS,
};
use compound_core::models::{Dataset, DynamicsModel, ModelKind};
use compound_core::rollout::{evaluate, one_step_error_profile, ErrorProfile, RolloutMode};
use compound_core::systems::{
    generate_dataset, generate_lorenz_dataset, read_trajectories_csv, write_trajectories_csv, Cartpole, DatasetSpec,
    LorenzParams, PolicySpec, StateSpaceSpec,
};

#[derive(Parser)]
#[command(name = "compound", version, about = "Compounding-error experiments for learned dynamics models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trajectory dataset and write it as CSV.
    Generate(GenerateArgs),
    /// Fit a model to a trajectory CSV and save it as JSON.
    Train(TrainArgs),
    /// Per-step error percentiles of a saved model on a trajectory CSV.
    Eval(EvalArgs),
    /// Run a preset or a TOML sweep config.
    Sweep(SweepArgs),
    /// Render a results CSV as an SVG plot.
    Plot(PlotArgs),
    /// Print the tables of a finished run directory.
    Report(ReportArgs),
    /// Run the built-in oracle checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    StateSpace,
    Lorenz,
    Cartpole,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "state-space")]
    system: SystemArg,
    #[arg(long, default_value_t = 0.5)]
    pole: f64,
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    noise_mult: f64,
    #[arg(long)]
    regularized: bool,
    #[arg(long)]
    zero_inputs: bool,
    /// Lorenz initial coordinates are drawn from [lo, hi).
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [5.0, 10.0])]
    lorenz_init: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    trajs: usize,
    #[arg(long, default_value_t = 100)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Trajectory CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "D")]
    model: ModelKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    /// Hidden widths, e.g. `256,256`.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long)]
    no_norm: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Logged,
    Recomputed,
    OneStep,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    /// Uniform random actions in [-1, 1).
    Random,
    /// Cart-pole LQR rebuilt from each trajectory's policy seed.
    Lqr,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "logged")]
    mode: ModeArg,
    /// Policy for recomputed actions.
    #[arg(long, value_enum, default_value = "random")]
    policy: PolicyArg,
    /// CSV of `step,p50,p65,p95,n`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Preset name or path to a TOML config.
    target: Option<String>,
    #[arg(long, conflicts_with = "target")]
    preset: Option<String>,
    /// Overrides the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `runs/<experiment>`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Re-run only these cell indices in an existing output directory.
    #[arg(long)]
    cell: Vec<usize>,
    /// List the cells and exit.
    #[arg(long)]
    dry_run: bool,
    /// Skip the summary plot.
    #[arg(long)]
    no_plot: bool,
    /// Print the built-in preset names and exit.
    #[arg(long)]
    list: bool,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Columns naming a series; defaults to every column that varies.
    #[arg(long, value_delimiter = ',')]
    group_by: Vec<String>,
    /// `column=value`; repeatable.
    #[arg(long)]
    filter: Vec<String>,
    /// Series label that must appear, e.g. `model=D, pole=0.5`; repeatable.
    #[arg(long)]
    series: Vec<String>,
    #[arg(long, default_value = "")]
    title: String,
    /// Linear instead of logarithmic y axis.
    #[arg(long)]
    linear: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory containing `manifest.json`.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// `Ok(false)` means the command ran but something it was asked to do failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate(a) => generate(a).map(|_| true),
        Command::Train(a) => train(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Sweep(a) => sweep(a),
        Command::Plot(a) => plot(a).map(|_| true),
        Command::Report(a) => report(a).map(|_| true),
        Command::Selftest => Ok(selftest()),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let trajs = match a.system {
        SystemArg::StateSpace => {
            let spec = StateSpaceSpec {
                noise_mult: a.noise_mult,
                regularized: a.regularized,
                zero_inputs: a.zero_inputs,
                ..StateSpaceSpec::new(a.pole, a.dim)
            };
            generate_dataset(&DatasetSpec::state_space(spec, a.trajs, a.horizon), a.seed)?
        }
        SystemArg::Lorenz => generate_lorenz_dataset(
            a.lorenz_init[0],
            a.lorenz_init[1],
            a.trajs,
            a.horizon,
            &LorenzParams::default(),
            a.seed,
        )?,
        SystemArg::Cartpole => generate_dataset(&DatasetSpec::cartpole_lqr(Cartpole::default(), a.trajs, a.horizon), a.seed)?,
    };
    let file = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_trajectories_csv(BufWriter::new(file), &trajs)?;
    let truncated = trajs.iter().filter(|t| t.diverged).count();
    println!("wrote {} trajectories to {}", trajs.len(), a.out.display());
    if truncated > 0 {
        println!("{truncated} trajectories diverged and were truncated");
    }
    Ok(())
}

fn read_trajs(path: &Path) -> Result<Vec<compound_core::Trajectory>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_trajectories_csv(BufReader::new(file))?)
}

fn train(a: TrainArgs) -> Result<()> {
    let trajs = read_trajs(&a.data)?;
    let data = Dataset::from_trajectories(&trajs)?;
    let mut cfg = a.model.default_config(a.seed);
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(h) = a.hidden {
        cfg.hidden = h;
    }
    if let Some(k) = a.ensemble_size {
        cfg.ensemble_size = k;
    }
    cfg.normalization_enabled = !a.no_norm;
    let model = a.model.fit(&data, &cfg)?;
    model.save(BufWriter::new(File::create(&a.out)?))?;
    println!("trained {} on {} transitions -> {}", a.model, data.len(), a.out.display());
    Ok(())
}

fn print_profile(profile: &ErrorProfile) {
    let h = profile.horizon();
    let mut shown: Vec<usize> = vec![1, h.div_ceil(4), h.div_ceil(2), h];
    shown.dedup();
    println!("{:>6} {:>12} {:>12} {:>12} {:>5}", "step", "p50", "p65", "p95", "n");
    for t in shown.into_iter().filter(|t| *t >= 1 && *t <= h) {
        let p = &profile.steps[t - 1];
        println!("{t:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>5}", p.p50, p.p65, p.p95, profile.counts[t - 1]);
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = DynamicsModel::load(BufReader::new(File::open(&a.model)?))?;
    let trajs = read_trajs(&a.data)?;
    let profile = match a.mode {
        ModeArg::Logged => evaluate(&model, &trajs, &RolloutMode::Logged)?,
        ModeArg::OneStep => one_step_error_profile(&model, &trajs)?,
        ModeArg::Recomputed => {
            let spec = match a.policy {
                PolicyArg::Random => PolicySpec::random_actions(model.action_dim),
                PolicyArg::Lqr => {
                    // the CSV format has no seed columns, so per-trajectory gains are lost
                    if trajs.iter().all(|t| t.policy_seed == 0) {
                        bail!("trajectory CSVs do not record policy seeds; run recomputed LQR evaluation through a sweep");
                    }
                    PolicySpec::varied_lqr(Cartpole::default())
                }
            };
            evaluate(&model, &trajs, &RolloutMode::Recomputed(spec))?
        }
    };
    print_profile(&profile);
    if let Some(out) = a.out {
        profile.write_csv(BufWriter::new(File::create(&out)?))?;
    }
    Ok(())
}

fn load_target(target: &str, seed: Option<u64>) -> Result<SweepConfig> {
    let path = Path::new(target);
    let mut cfg = if path.extension().is_some_and(|e| e == "toml") || path.is_file() {
        SweepConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?
    } else {
        preset(target, seed.unwrap_or(0))?
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn sweep(a: SweepArgs) -> Result<bool> {
    if a.list {
        for p in PRESETS {
            println!("{p}");
        }
        return Ok(true);
    }
    let Some(target) = a.target.or(a.preset) else {
        bail!("name a preset or a config file (known presets: {})", PRESETS.join(", "));
    };
    let mut cfg = load_target(&target, a.seed)?;
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    let cells = cfg.cells();
    println!("sweep '{}': {} cells, root seed {}", cfg.experiment, cells.len(), cfg.seed);
    if a.dry_run {
        for c in &cells {
            println!("{:>4}  {}", c.index, c.key());
        }
        return Ok(true);
    }
    let out = a.out.unwrap_or_else(|| PathBuf::from("runs").join(&cfg.experiment));
    let manifest = if a.cell.is_empty() {
        run_sweep(&cfg, &out)?
    } else {
        rerun_cells(&cfg, &out, &a.cell)?
    };
    let failed: Vec<_> = manifest.failed().collect();
    for rec in &failed {
        eprintln!("cell {} failed: {}", rec.index, rec.error.as_deref().unwrap_or("unknown error"));
    }
    println!(
        "{} of {} cells succeeded in {:.1}s; results in {}",
        manifest.cells.len() - failed.len(),
        manifest.cells.len(),
        manifest.duration_secs,
        out.display()
    );
    if cfg.system.trains_models() && !a.no_plot {
        let spec = PlotSpec {
            title: cfg.experiment.clone(),
            ..PlotSpec::default()
        };
        let svg = out.join("results.svg");
        match emit_plot(&out.join(&manifest.results_path), &spec, &svg) {
            Ok(()) => println!("plot: {}", svg.display()),
            Err(e) => eprintln!("no plot: {e}"),
        }
    }
    Ok(failed.is_empty())
}

fn plot(a: PlotArgs) -> Result<()> {
    let filters = a
        .filter
        .iter()
        .map(|f| {
            f.split_once('=')
                .map(|(c, v)| (c.trim().to_string(), v.trim().to_string()))
                .with_context(|| format!("filter '{f}' is not column=value"))
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = PlotSpec {
        title: a.title,
        group_by: a.group_by,
        filters,
        series: a.series,
        log_y: !a.linear,
    };
    emit_plot(&a.results, &spec, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let manifest = RunManifest::load(&a.out.join(MANIFEST_FILE))
        .with_context(|| format!("no manifest in {}", a.out.display()))?;
    let cfg = SweepConfig::from_file(&a.out.join(&manifest.config_path))?;
    println!("{} ({} cells, seed {})", manifest.experiment, manifest.cell_count, manifest.root_seed);
    match cfg.system {
        SystemFamily::DataTable => print!("{}", report_tables(&manifest, &a.out)?),
        SystemFamily::DoubleIntegrator => {
            let text = std::fs::read_to_string(a.out.join("snr.csv"))?;
            println!("{:>6} {:>10} {:>10}", "dt", "snr", "std");
            for line in text.lines().skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                let num = |i: usize| f.get(i).and_then(|v| v.parse::<f64>().ok()).unwrap_or(f64::NAN);
                println!("{:>6} {:>10.4} {:>10.4}", f[0], num(1), num(2));
            }
        }
        _ => {
            let rows = read_rows(BufReader::new(File::open(a.out.join(&manifest.results_path))?))?;
            let series = collect_series(&rows, &PlotSpec::default())?;
            println!("{:<48} {:>12} {:>12} {:>12}", "series", "p50 @1", "p50 @H/2", "p50 @H");
            for s in series {
                let n = s.p50.len();
                println!("{:<48} {:>12.4e} {:>12.4e} {:>12.4e}", s.label, s.p50[0], s.p50[(n - 1) / 2], s.p50[n - 1]);
            }
        }
    }
    let failed: Vec<_> = manifest.failed().collect();
    if !failed.is_empty() {
        println!("{} failed cells:", failed.len());
        for rec in failed {
            println!("  {} {}: {}", rec.index, rec.key, rec.error.as_deref().unwrap_or(""));
        }
    }
    Ok(())
}

fn selftest() -> bool {
    let outcomes = run_selftest();
    for o in &outcomes {
        println!("{} {:<28} {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    outcomes.iter().all(|o| o.passed)
}
