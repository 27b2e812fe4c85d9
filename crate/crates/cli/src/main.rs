//! `catbbm`: spectral constants, ensemble simulation, theorem checks and plot data for
//! catalytic branching Brownian motion.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use catbbm::config::ExperimentConfig;
use catbbm::engine::{run_ensemble, EnsembleSpec};
use catbbm::spectral::compute_c_star;
use catbbm::verify::{stats, suite_exit_code, Suite, Theorem, TheoremReport};

/// Usage, configuration and runtime errors.
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "catbbm", version, about = "Catalytic branching Brownian motion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the principal eigenvalue, ground state and window constants as JSON.
    Spectral(Source),
    /// Run the ensemble and write one CSV row per replica and horizon plus a JSON summary.
    Simulate(Run),
    /// Run theorem checks and write one JSON report per check.
    Verify {
        #[command(flatten)]
        run: Run,
        /// A check name, a group (theorem1, theorem2, consistency) or `all`.
        #[arg(long, default_value = "all")]
        theorem: String,
        /// Paths per level of the discretization sweep.
        #[arg(long, default_value_t = 600_000)]
        sweep_paths: usize,
    },
    /// Write tidy CSV series for plotting.
    Plotdata(Run),
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Input {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shipped preset: point1d, twopoint1d or circle2d.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args, Debug)]
struct Source {
    #[command(flatten)]
    input: Input,
}

#[derive(Args, Debug)]
struct Run {
    #[command(flatten)]
    input: Input,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Output directory; defaults to the config's `output.dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Anything that stops a command; reported on stderr with exit code 2.
#[derive(Debug)]
struct Failure(String);

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure(e.to_string())
            }
        }
    )*};
}

failure_from!(catbbm::Error, std::io::Error, csv::Error, serde_json::Error);

type CliResult<T> = Result<T, Failure>;

fn load(input: &Input) -> CliResult<ExperimentConfig> {
    match (&input.config, &input.preset) {
        (Some(path), _) => Ok(ExperimentConfig::from_path(path)?),
        (None, Some(name)) => ExperimentConfig::preset(name).ok_or_else(|| {
            Failure(format!("unknown preset {name}; known: {}", catbbm::config::PRESETS.join(", ")))
        }),
        (None, None) => Err(Failure("one of --config or --preset is required".into())),
    }
}

impl Run {
    fn config(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = load(&self.input)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(n) = self.replicas {
            cfg.replicas = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> CliResult<PathBuf> {
        let dir = self.out.clone().or_else(|| cfg.output.dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| "out".into());
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn spectral(source: &Source) -> CliResult<()> {
    let cfg = load(&source.input)?;
    let rate = cfg.rate()?;
    let sol = cfg.solution()?;
    let windows: Vec<_> = cfg
        .windows(&sol)?
        .into_iter()
        .map(|w| -> CliResult<_> {
            Ok(json!({
                "label": w.label,
                "regime": w.window.schedule.regime(&sol)?,
                "c_star": compute_c_star(&sol, &rate, &w.window)?,
            }))
        })
        .collect::<CliResult<_>>()?;
    let doc = json!({
        "name": cfg.name,
        "lambda": sol.lambda(),
        "k": sol.k(),
        "critical_speed": sol.critical_speed(),
        "h_x0": sol.eval(&cfg.x0()),
        "solution": sol,
        "windows": windows,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

fn simulate(run: &Run) -> CliResult<()> {
    let cfg = run.config()?;
    let sol = cfg.solution()?;
    let windows = cfg.windows(&sol)?;
    let spec = EnsembleSpec::new(cfg.simulation()?, sol, windows)?;
    let ensemble = run_ensemble(&spec, cfg.replicas, cfg.seed)?;
    let dir = run.out_dir(&cfg)?;

    let mut csv = csv::Writer::from_path(dir.join("ensemble.csv"))?;
    let mut header = vec!["replica".to_string(), "t".into(), "population".into(), "max_norm".into(), "martingale".into()];
    header.extend(ensemble.labels.iter().cloned());
    csv.write_record(&header)?;
    for (i, rec) in ensemble.records.iter().enumerate() {
        for (j, t) in ensemble.checkpoints.iter().enumerate() {
            let mut row = vec![i.to_string(), t.to_string(), rec.population[j].to_string(), rec.max_norm[j].to_string(), rec.martingale[j].to_string()];
            row.extend(rec.counts[j].iter().map(u32::to_string));
            csv.write_record(&row)?;
        }
    }
    csv.flush()?;

    let horizons: Vec<_> = ensemble
        .checkpoints
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let (n_mean, n_se) = stats::mean_stderr(&ensemble.population(j));
            let (m_mean, m_se) = stats::mean_stderr(&ensemble.martingale(j));
            let windows: serde_json::Map<_, _> = ensemble
                .labels
                .iter()
                .enumerate()
                .map(|(w, label)| {
                    let (mean, se) = stats::mean_stderr(&ensemble.counts(j, w));
                    (label.clone(), json!({"mean": mean, "stderr": se}))
                })
                .collect();
            json!({
                "t": t,
                "population": {"mean": n_mean, "stderr": n_se},
                "martingale": {"mean": m_mean, "stderr": m_se},
                "max_norm_median": stats::median(&ensemble.max_norm(j)),
                "windows": windows,
            })
        })
        .collect();
    let summary = json!({"name": cfg.name, "seed": cfg.seed, "replicas": cfg.replicas, "horizons": horizons});
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!("wrote {} rows to {}", ensemble.len() * ensemble.checkpoints.len(), dir.join("ensemble.csv").display());
    Ok(())
}

/// Names accepted by `--theorem`.
const GROUPS: [&str; 5] = ["all", "theorem1", "theorem2", "theorem3", "consistency"];

fn known_theorem(name: &str) -> bool {
    GROUPS.contains(&name) || Theorem::ALL.iter().any(|t| t.name() == name) || matches!(name, "gumbel" | "sampler")
}

fn select(suite: &Suite, name: &str, sweep_paths: usize) -> CliResult<Vec<TheoremReport>> {
    let one = |r: catbbm::Result<TheoremReport>| r.map(|r| vec![r]).map_err(Failure::from);
    match name {
        "all" => Ok(suite.all(sweep_paths)?),
        "theorem1" => Ok(suite.theorem1()?),
        "theorem2" => Ok(suite.theorem2()?),
        "theorem3" | "t3_poisson" => one(suite.theorem3()),
        "consistency" => Ok(suite.consistency()?),
        "t1_critical" => one(suite.theorem1_critical()),
        "t1_supercritical" => one(suite.theorem1_supercritical()),
        "t2_subcritical" => one(suite.theorem2_subcritical()),
        "t2_critical" => one(suite.theorem2_critical()),
        "gumbel" | "gumbel_lt" => one(suite.gumbel()),
        "linear_growth" => one(suite.linear_growth()),
        "many_to_one" => one(suite.many_to_one_report()),
        "many_to_two" => one(suite.many_to_two_report()),
        "martingale" => one(suite.martingale_report()),
        "paley_zygmund" => one(suite.paley_zygmund_report()),
        "sampler" | "sampler_convergence" => one(suite.sampler_convergence(sweep_paths)),
        other => Err(Failure(format!("unknown theorem {other}"))),
    }
}

fn verify(run: &Run, theorem: &str, sweep_paths: usize) -> CliResult<u8> {
    if !known_theorem(theorem) {
        let mut names: Vec<&str> = GROUPS.to_vec();
        names.extend(Theorem::ALL.iter().map(|t| t.name()));
        return Err(Failure(format!("unknown theorem {theorem}; known: {}", names.join(", "))));
    }
    let cfg = run.config()?;
    let dir = run.out_dir(&cfg)?;
    let suite = Suite::new(cfg)?;
    let reports = select(&suite, theorem, sweep_paths)?;
    for r in &reports {
        let path = dir.join(format!("{}.json", r.theorem.name()));
        fs::write(&path, serde_json::to_string_pretty(r)? + "\n")?;
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        println!(
            "{:<20} {:<15} {}{}",
            r.theorem.name(),
            format!("{:?}", r.verdict).to_lowercase(),
            if r.hard { "hard" } else { "soft" },
            if failed.is_empty() { String::new() } else { format!("  failed: {}", failed.join(", ")) }
        );
    }
    Ok(suite_exit_code(&reports) as u8)
}

/// Columns of the plot data file.
pub const PLOT_COLUMNS: [&str; 7] = ["series", "t", "k", "value", "lower", "upper", "reference"];

fn plotdata(run: &Run) -> CliResult<()> {
    let cfg = run.config()?;
    let dir = run.out_dir(&cfg)?;
    let suite = Suite::new(cfg)?;
    let path = dir.join("plotdata.csv");
    write_plotdata(&suite, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_plotdata(suite: &Suite, path: &Path) -> CliResult<()> {
    let mut csv = csv::Writer::from_path(path)?;
    csv.write_record(PLOT_COLUMNS)?;
    let num = |x: f64| x.to_string();
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for s in &suite.theorem1_critical()?.statistics {
        csv.write_record(["normalized_survival".into(), num(s.t), String::new(), num(s.estimate), num(s.lower), num(s.upper), opt(s.reference)])?;
    }
    for s in &suite.linear_growth()?.statistics {
        let t = s.t;
        csv.write_record([
            "max_norm_over_t".into(),
            num(t),
            String::new(),
            num(s.estimate / t),
            num(s.lower / t),
            num(s.upper / t),
            opt(s.reference.map(|r| r / t)),
        ])?;
    }
    for s in &suite.theorem3()?.statistics {
        let k = s.label.trim_start_matches("pmf_");
        csv.write_record(["window_pmf".into(), num(s.t), k.into(), num(s.estimate), num(s.lower), num(s.upper), opt(s.reference)])?;
    }
    csv.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Spectral(source) => spectral(source).map(|_| 0),
        Command::Simulate(run) => simulate(run).map(|_| 0),
        Command::Verify { run, theorem, sweep_paths } => verify(run, theorem, *sweep_paths),
        Command::Plotdata(run) => plotdata(run).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
