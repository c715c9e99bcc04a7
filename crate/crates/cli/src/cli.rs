//! Command-line interface.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{Grid, Pipeline, RunConfig};
use crate::dataset::{ingest, Dataset, Format};
use crate::error::{CliError, Result};
use crate::manifest::{InputInfo, Manifest};
use crate::run::{self, Sampler};
use crate::synthetic::synthetic;

#[derive(Debug, Parser)]
#[command(name = "fvddp", version, about = "Predictive inference for Fleming-Viot dependent Dirichlet processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter the data at one (theta, sigma) and write the final state.
    Filter(JobArgs),
    /// Predictive pmf with pointwise credible bands at a lag after the last time.
    Predict(JobArgs),
    /// Random partitions of `--draws` future observations.
    Partition {
        #[command(flatten)]
        job: JobArgs,
        #[arg(long, value_enum, default_value_t = SamplerArg::Coefficient)]
        sampler: SamplerArg,
    },
    /// Hyperparameter posterior over the grid, or holdout error per grid point.
    Hyper {
        #[command(flatten)]
        job: JobArgs,
        #[arg(long, value_enum, default_value_t = HyperMode::Posterior)]
        mode: HyperMode,
        /// Holdout batch time; defaults to the last time.
        #[arg(long)]
        test_time: Option<f64>,
    },
    /// Simulate the drifting two-component Poisson mixture.
    Synthetic {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        horizon: usize,
        #[arg(long, default_value_t = 15)]
        per_time: usize,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HyperMode {
    Posterior,
    Holdout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Coefficient,
    Conveyor,
}

#[derive(Debug, Args)]
pub struct JobArgs {
    /// Observations: CSV with header `time,value` or JSON `[{time, values}]`.
    #[arg(long)]
    pub data: PathBuf,
    /// `csv` or `json`; inferred from the extension when absent.
    #[arg(long)]
    pub format: Option<String>,
    /// Values `a,b,…`, weighted values `a@w,…` or a range `start:stop:step`.
    #[arg(long, default_value = "1")]
    pub theta_grid: String,
    #[arg(long, default_value = "1")]
    pub sigma_grid: String,
    /// Base measure `family:params`: poisson:m, negbin:r,p, binomial:n,p,
    /// uniform:lo,hi, set:v1,v2,…, table:v=p,….
    #[arg(long, default_value = "negbin:2,0.5")]
    pub base: String,
    #[arg(long, default_value_t = 1.0)]
    pub lag: f64,
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    #[arg(long, default_value_t = 500)]
    pub replicates: usize,
    #[arg(long, default_value_t = 10_000)]
    pub particles: usize,
    #[arg(long, default_value_t = fvddp::lattice::DEFAULT_PRUNE_EPS)]
    pub prune_eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Exact propagation only; oversized lattices fail.
    #[arg(long, conflicts_with = "approx")]
    pub exact: bool,
    /// Particle propagation throughout.
    #[arg(long)]
    pub approx: bool,
}

impl JobArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let c = RunConfig {
            theta_grid: Grid::parse(&self.theta_grid, "theta")?,
            sigma_grid: Grid::parse(&self.sigma_grid, "sigma")?,
            base: self.base.parse()?,
            lag: self.lag,
            draws: self.draws,
            replicates: self.replicates,
            particles: self.particles,
            prune_eps: self.prune_eps,
            seed: self.seed,
            pipeline: match (self.exact, self.approx) {
                (true, _) => Pipeline::Exact,
                (_, true) => Pipeline::Approx,
                _ => Pipeline::Auto,
            },
        };
        c.validate()?;
        Ok(c)
    }

    fn load(&self) -> Result<(Dataset, InputInfo)> {
        let bytes = fs::read(&self.data).map_err(|e| CliError::io(&self.data, e))?;
        let format = self.format.as_deref().map(str::parse::<Format>).transpose()?;
        let data = ingest(&self.data, format)?;
        Ok((data, InputInfo::new(&self.data, &bytes)))
    }
}

fn write(dir: &Path, name: &str, content: &str, manifest: &mut Manifest) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| CliError::io(&path, e))?;
    manifest.outputs.push(name.to_string());
    Ok(())
}

fn csv_string<S: serde::Serialize>(rows: &[S]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

/// Runs a job that writes into `--out`, always leaving a manifest behind.
fn job(name: &str, args: &JobArgs, body: impl FnOnce(&RunConfig, &Dataset, &mut Manifest) -> Result<()>) -> Result<()> {
    let start = Instant::now();
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let mut manifest = Manifest::new(name);
    let outcome = (|| {
        let config = args.config()?;
        manifest.config = Some(config.clone());
        manifest.seed = Some(config.seed);
        let (data, input) = args.load()?;
        manifest.input = Some(input);
        body(&config, &data, &mut manifest)
    })();
    if let Err(e) = &outcome {
        manifest.status = "error".into();
        manifest.error = Some(e.to_json());
    }
    manifest.runtime_seconds = start.elapsed().as_secs_f64();
    let path = args.out.join("manifest.json");
    fs::write(&path, json(&manifest)).map_err(|e| CliError::io(&path, e))?;
    outcome
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synthetic { seed, horizon, per_time, out, format } => {
            if horizon == 0 {
                return Err(CliError::Config("horizon must be at least 1".into()));
            }
            let data = synthetic(seed, horizon, per_time);
            let text = match format.parse::<Format>()? {
                Format::Csv => data.to_csv(),
                Format::Json => data.to_json() + "\n",
            };
            match out {
                Some(p) => fs::write(&p, text).map_err(|e| CliError::io(&p, e)),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Filter(args) => job("filter", &args, |config, data, m| {
            let state = run::run_filter(config, data)?;
            m.details = serde_json::json!({ "log_ml": state.log_marginal_likelihood(), "nodes": state.nodes().len() });
            write(&args.out, "filter.json", &(state.to_json()? + "\n"), m)
        }),
        Command::Predict(args) => job("predict", &args, |config, data, m| {
            let rep = run::run_predict(config, data)?;
            m.grid = rep.hyper.clone();
            m.details = serde_json::json!({ "pipelines": rep.pipelines, "lag": config.lag, "last_time": data.last_time() });
            write(&args.out, "predictive.csv", &csv_string(&rep.rows)?, m)
        }),
        Command::Partition { job: args, sampler } => job("partition", &args, |config, data, m| {
            let sampler = match sampler {
                SamplerArg::Coefficient => Sampler::Coefficient,
                SamplerArg::Conveyor => Sampler::Conveyor,
            };
            let rep = run::run_partition(config, data, sampler)?;
            m.grid = rep.hyper.clone();
            let lines: String = rep
                .samples
                .iter()
                .map(|s| serde_json::to_string(s).expect("serializable") + "\n")
                .collect();
            write(&args.out, "partitions.jsonl", &lines, m)?;
            #[derive(serde::Serialize)]
            struct Row {
                blocks: usize,
                count: usize,
            }
            let rows: Vec<Row> = rep.histogram.iter().map(|&(blocks, count)| Row { blocks, count }).collect();
            write(&args.out, "blocks.csv", &csv_string(&rows)?, m)
        }),
        Command::Hyper { job: args, mode, test_time } => job("hyper", &args, |config, data, m| match mode {
            HyperMode::Posterior => {
                let rows = run::run_hyper(config, data)?;
                m.grid = rows.clone();
                m.details = serde_json::json!({ "mode": "posterior" });
                write(&args.out, "hyper.csv", &csv_string(&rows)?, m)
            }
            HyperMode::Holdout => {
                let rep = run::run_holdout(config, data, test_time)?;
                let best = &rep.rows[rep.best];
                m.details = serde_json::json!({
                    "mode": "holdout",
                    "test_time": rep.test_time,
                    "best": { "theta": best.theta, "sigma": best.sigma, "sae": best.sae },
                });
                write(&args.out, "holdout.csv", &csv_string(&rep.rows)?, m)
            }
        }),
    }
}

/// Parses arguments and runs; returns the process exit code. Failures print a
/// JSON error object on standard error.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let v = serde_json::json!({ "error": { "kind": "usage", "message": e.to_string().trim() } });
            eprintln!("{v}");
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}
