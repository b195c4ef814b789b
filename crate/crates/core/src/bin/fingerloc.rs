use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fingerloc::eval::{self, Scheme};
use fingerloc::io;
use fingerloc::sim::{self, Environment};
use fingerloc::{prepare_queries, Config, Error, Method, Modules, Query, Result};

#[derive(Parser)]
#[command(name = "fingerloc", version, about = "WiFi fingerprint localization and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    /// Radio map JSON.
    #[arg(long)]
    map: PathBuf,
    /// Query CSV.
    #[arg(long)]
    queries: PathBuf,
    /// Configuration JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `lms.rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Survey a synthetic environment and generate query traces.
    Simulate {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        out_map: PathBuf,
        #[arg(long)]
        out_queries: PathBuf,
        /// Overrides the environment's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Localize every query and write per-query CSV.
    Localize {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value = "dorfin")]
        method: Method,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error statistics for one method.
    Evaluate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value = "dorfin")]
        method: Method,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Basic, each single module, and the full pipeline.
    Ablate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Mean dissimilarity of queries grouped by true location against every map location.
    Confusion {
        #[command(flatten)]
        inputs: Inputs,
        /// `basic` for plain Euclidean distance, `dorfin` for the full metric.
        #[arg(long, default_value = "dorfin")]
        metric: Method,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate on the map decimated to coarser grid spacings.
    Density {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        spacings: Vec<f64>,
        #[arg(long, default_value = "dorfin")]
        method: Method,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn load(inputs: &Inputs) -> Result<(fingerloc::RadioMap, Vec<Query>, Config)> {
    let mut config = match &inputs.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = inputs.seed {
        config.lms.rng_seed = seed;
    }
    let map = io::read_map(&inputs.map)?;
    let traces = io::read_queries_file(&inputs.queries)?;
    let queries = prepare_queries(&traces, &config);
    if queries.is_empty() {
        return Err(Error::EmptyQueries);
    }
    Ok((map, queries, config))
}

fn out_file(dir: &Path, name: &str) -> Result<fs::File> {
    fs::create_dir_all(dir)?;
    Ok(fs::File::create(dir.join(name))?)
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
    let mut f = out_file(dir, name)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn summary_rows<W: Write>(rows: &[(Option<f64>, &eval::ErrorSummary)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let with_spacing = rows.iter().any(|(s, _)| s.is_some());
    let mut header = vec![];
    if with_spacing {
        header.push("spacing_m");
    }
    header.extend(["method", "n", "mean_m", "p50_m", "p95_m", "max_m", "failures"]);
    out.write_record(&header)?;
    for (spacing, s) in rows {
        let mut rec = vec![];
        if let Some(sp) = spacing {
            rec.push(format!("{sp}"));
        }
        rec.extend([
            s.method.clone(),
            s.n.to_string(),
            format!("{:.4}", s.mean_m),
            format!("{:.4}", s.p50_m),
            format!("{:.4}", s.p95_m),
            format!("{:.4}", s.max_m),
            s.failures.to_string(),
        ]);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

fn metric_modules(m: Method) -> Result<Modules> {
    match m {
        Method::Dorfin => Ok(Modules::ALL),
        Method::Basic => Ok(Modules::NONE),
        other => Err(Error::InvalidArgument(format!(
            "confusion metric must be dorfin or basic, got {other}"
        ))),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            env,
            out_map,
            out_queries,
            seed,
        } => {
            let env = Environment::load(&env)?;
            let sim = sim::simulate(&env, seed.unwrap_or(env.seed))?;
            io::write_map(&sim.map, &out_map)?;
            io::write_queries_file(&sim.traces, &out_queries)?;
        }
        Command::Localize { inputs, method, out } => {
            let (map, queries, config) = load(&inputs)?;
            let outcomes = eval::run_queries(&map, &queries, Scheme::Method(method), &config);
            match out {
                Some(p) => io::write_results(&outcomes, std::io::BufWriter::new(fs::File::create(p)?))?,
                None => io::write_results(&outcomes, std::io::stdout().lock())?,
            }
        }
        Command::Evaluate {
            inputs,
            method,
            out_dir,
        } => {
            let (map, queries, config) = load(&inputs)?;
            let (summary, outcomes) = eval::evaluate_detailed(&map, &queries, Scheme::Method(method), &config)?;
            io::write_results(&outcomes, out_file(&out_dir, "results.csv")?)?;
            summary_rows(&[(None, &summary)], out_file(&out_dir, "summary.csv")?)?;
            write_json(&out_dir, "summary.json", &serde_json::to_value(&summary)?)?;
        }
        Command::Ablate { inputs, out_dir } => {
            let (map, queries, config) = load(&inputs)?;
            let ab = eval::ablation_suite(&map, &queries, &config)?;
            for w in &ab.warnings {
                eprintln!("warning: {w}");
            }
            let rows: Vec<_> = ab.rows.iter().map(|r| (None, r)).collect();
            summary_rows(&rows, out_file(&out_dir, "ablation.csv")?)?;
            write_json(
                &out_dir,
                "summary.json",
                &serde_json::json!({ "rows": ab.rows, "warnings": ab.warnings }),
            )?;
        }
        Command::Confusion {
            inputs,
            metric,
            out_dir,
        } => {
            let (map, queries, config) = load(&inputs)?;
            let cm = eval::confusion_matrix(&map, &queries, metric_modules(metric)?, &config)?;
            cm.write_csv(out_file(&out_dir, "confusion.csv")?)?;
        }
        Command::Density {
            inputs,
            spacings,
            method,
            out_dir,
        } => {
            let (map, queries, config) = load(&inputs)?;
            let sweep = eval::density_sweep(&map, &queries, &spacings, Scheme::Method(method), &config)?;
            let rows: Vec<_> = sweep.iter().map(|(s, r)| (Some(*s), r)).collect();
            summary_rows(&rows, out_file(&out_dir, "density.csv")?)?;
            let json: Vec<_> = sweep
                .iter()
                .map(|(s, r)| serde_json::json!({ "spacing_m": s, "summary": r }))
                .collect();
            write_json(&out_dir, "summary.json", &serde_json::Value::Array(json))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
