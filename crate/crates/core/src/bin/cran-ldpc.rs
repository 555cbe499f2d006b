use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use cran_ldpc::cellular::{self, CalibrationCurve, Mapping};
use cran_ldpc::code_design::{build_default_palette, optimize, DesignProblem};
use cran_ldpc::density_evolution::{run_de, threshold, DeConfig, ThresholdOptions};
use cran_ldpc::ensemble::{CodePalette, DegreeDistribution};
use cran_ldpc::harness::{emit_results, sweep_rows, write_rows, SimConfig, Simulator, SweepVar};
use cran_ldpc::peeling::{peel_monte_carlo, sample_graph};
use cran_ldpc::schedulers::SchedulerKind;
use cran_ldpc::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "cran-ldpc",
    version,
    about = "LDPC decoding complexity and C-RAN scheduling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a density evolution trace as CSV (iteration,epsilon).
    De {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long)]
        eps0: f64,
        #[command(flatten)]
        de: DeArgs,
    },
    /// Print the erasure threshold of a code.
    Threshold {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long, default_value_t = 10_000)]
        grid: usize,
        #[arg(long, default_value_t = 1e-3)]
        x_lo: f64,
    },
    /// Design threshold-optimized check-regular codes into a palette file.
    Design {
        /// Target rates ("1/2" or "0.5"); default is the eight-rate palette.
        #[arg(long = "rate", value_parser = parse_rate)]
        rates: Vec<f64>,
        #[arg(long, default_value_t = 7)]
        dc: u32,
        #[arg(long, default_value_t = 200)]
        dmax: u32,
        /// Points of the convergence grid in each feasibility LP.
        #[arg(long, default_value_t = 500)]
        x_grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Peeling-decoder Monte Carlo on a sampled graph, CSV (trial,success,passes).
    PeelMc {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long)]
        eps0: f64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Calibrate the SINR-to-erasure curve with the default network parameters.
    Calibrate {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Calibration file to write.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Raw empirical CCDF table (sinr_db,ccdf) to write as CSV.
        #[arg(long)]
        ccdf: Option<PathBuf>,
    },
    /// Run one configuration for the selected schedulers.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Sweep one parameter.
    Sweep {
        #[arg(long, value_enum)]
        var: VarArg,
        #[arg(long, value_delimiter = ',', required = true)]
        points: Vec<f64>,
        #[command(flatten)]
        sim: SimArgs,
    },
}

#[derive(Args)]
struct CodeArgs {
    /// Palette label, e.g. "R=1/2 dc=7".
    #[arg(long, conflicts_with_all = ["dv", "dc"])]
    code: Option<String>,
    #[arg(long, requires = "dc")]
    dv: Option<u32>,
    #[arg(long, requires = "dv")]
    dc: Option<u32>,
    #[arg(long)]
    palette: Option<PathBuf>,
}

impl CodeArgs {
    fn distribution(&self) -> Result<DegreeDistribution> {
        if let (Some(dv), Some(dc)) = (self.dv, self.dc) {
            return DegreeDistribution::regular(dv, dc);
        }
        let palette = load_palette(self.palette.as_ref())?;
        let label = self.code.as_deref().unwrap_or("R=1/2 dc=7");
        palette
            .get(label)
            .map(|c| c.distribution().clone())
            .ok_or_else(|| Error::UnknownCode(label.to_string()))
    }
}

#[derive(Args)]
struct DeArgs {
    #[arg(long, default_value_t = 1e-3)]
    eps_thresh: f64,
    #[arg(long, default_value_t = 1000)]
    max_iters: u32,
}

impl DeArgs {
    fn config(&self) -> DeConfig {
        DeConfig {
            eps_thresh: self.eps_thresh,
            max_iters: self.max_iters,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchedulerArg {
    Mrs,
    Ejf,
    LocalLimit,
    Scc,
}

impl From<SchedulerArg> for SchedulerKind {
    fn from(s: SchedulerArg) -> Self {
        match s {
            SchedulerArg::Mrs => SchedulerKind::Mrs,
            SchedulerArg::Ejf => SchedulerKind::Ejf,
            SchedulerArg::LocalLimit => SchedulerKind::LocalLimit,
            SchedulerArg::Scc => SchedulerKind::Scc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VarArg {
    Alpha,
    Utilization,
    ClusterSize,
}

#[derive(Clone, Copy, ValueEnum)]
enum MappingArg {
    Exponential,
    Table,
}

#[derive(Args)]
struct SimArgs {
    /// Scheduler(s) to run; all four when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    scheduler: Vec<SchedulerArg>,
    #[arg(long, default_value_t = cellular::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = cellular::DEFAULT_UTILIZATION)]
    utilization: f64,
    #[arg(long, default_value_t = cellular::DEFAULT_CLUSTER)]
    cluster_size: usize,
    #[arg(long, default_value_t = cellular::DEFAULT_GAMMA_DB)]
    gamma_db: f64,
    #[arg(long, default_value_t = cellular::DEFAULT_S)]
    s: f64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Cluster budget; default 150 per cluster cell.
    #[arg(long)]
    c_server: Option<f64>,
    /// Local Limit per-user budget; default c_server / cluster size.
    #[arg(long)]
    c_loc: Option<f64>,
    #[arg(long)]
    palette: Option<PathBuf>,
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exponential")]
    mapping: MappingArg,
    #[command(flatten)]
    de: DeArgs,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        let schedulers = if self.scheduler.is_empty() {
            SchedulerKind::ALL.to_vec()
        } else {
            self.scheduler.iter().map(|&s| s.into()).collect()
        };
        SimConfig {
            alpha: self.alpha,
            utilization: self.utilization,
            cluster_size: self.cluster_size,
            gamma_db: self.gamma_db,
            s: self.s,
            trials: self.trials,
            seed: self.seed,
            schedulers,
            c_server: self.c_server,
            c_loc: self.c_loc,
            de: self.de.config(),
        }
    }

    fn simulator(&self) -> Result<Simulator> {
        let palette = load_palette(self.palette.as_ref())?;
        let curve = match &self.calibration {
            Some(p) => CalibrationCurve::load(p)?,
            None => CalibrationCurve::shipped(),
        };
        let mapping = match self.mapping {
            MappingArg::Exponential => Mapping::Exponential,
            MappingArg::Table => Mapping::Table,
        };
        Ok(Simulator::new(palette, curve.with_mapping(mapping)))
    }
}

fn parse_rate(s: &str) -> std::result::Result<f64, String> {
    let value = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|e| format!("{e}"))?;
            let d: f64 = d.trim().parse().map_err(|e| format!("{e}"))?;
            n / d
        }
        None => s.parse().map_err(|e| format!("{e}"))?,
    };
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(format!("rate {value} outside (0,1)"))
    }
}

fn load_palette(path: Option<&PathBuf>) -> Result<CodePalette> {
    match path {
        Some(p) => CodePalette::load(p),
        None => Ok(CodePalette::shipped()),
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn stdout_err(source: io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::De { code, eps0, de } => {
            let cfg = de.config();
            cfg.validate()?;
            let trace = run_de(&code.distribution()?, eps0, &cfg);
            let mut out = io::stdout().lock();
            writeln!(out, "iteration,epsilon").map_err(stdout_err)?;
            for (l, e) in trace.eps_sequence.iter().enumerate() {
                writeln!(out, "{l},{e}").map_err(stdout_err)?;
            }
            info!(
                "{:?} after {} iterations",
                trace.termination, trace.iterations
            );
        }
        Command::Threshold { code, grid, x_lo } => {
            let opts = ThresholdOptions {
                x_lo,
                grid_points: grid,
                ..ThresholdOptions::default()
            };
            println!("{:.8}", threshold(&code.distribution()?, &opts)?);
        }
        Command::Design {
            rates,
            dc,
            dmax,
            x_grid,
            out,
        } => {
            let palette = if rates.is_empty() {
                build_default_palette()?
            } else {
                let codes = rates
                    .iter()
                    .map(|&r| {
                        let mut p = DesignProblem::new(r, dc);
                        p.d_max = dmax;
                        p.x_grid_points = x_grid;
                        optimize(&p)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut codes = codes;
                codes.sort_by(|a, b| a.rate().total_cmp(&b.rate()));
                CodePalette::new(codes)?
            };
            for c in palette.codes() {
                println!(
                    "{:<14} rate {:.6} threshold {:.6}",
                    c.label(),
                    c.rate(),
                    c.threshold()
                );
            }
            match out {
                Some(path) => palette.save(path)?,
                None => println!("{}", palette.to_json()?),
            }
        }
        Command::PeelMc {
            code,
            n,
            eps0,
            trials,
            seed,
        } => {
            let dist = code.distribution()?;
            let h = sample_graph(&dist, n, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            w.write_record(["trial", "success", "passes"])
                .map_err(csv_err)?;
            for t in peel_monte_carlo(&h, eps0, trials, seed) {
                w.write_record([
                    t.trial.to_string(),
                    u8::from(t.success).to_string(),
                    t.passes.to_string(),
                ])
                .map_err(csv_err)?;
            }
            w.flush().map_err(stdout_err)?;
        }
        Command::Calibrate {
            trials,
            seed,
            out,
            ccdf,
        } => {
            let topo = cellular::default_topology();
            let samples = cellular::sample_cluster_sinr_db(
                &topo,
                cellular::DEFAULT_UTILIZATION,
                trials,
                seed,
            )?;
            let curve = cellular::calibrate_from_samples(&samples, trials, seed)?;
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            w.write_record(["a", "b", "fit_lo_db", "fit_hi_db", "samples", "seed"])
                .map_err(csv_err)?;
            w.write_record([
                curve.a.to_string(),
                curve.b.to_string(),
                curve.fit_range_db.0.to_string(),
                curve.fit_range_db.1.to_string(),
                curve.samples.to_string(),
                curve.seed.to_string(),
            ])
            .map_err(csv_err)?;
            w.flush().map_err(stdout_err)?;
            if let Some(path) = ccdf {
                let wrap = |source| Error::Csv {
                    path: path.clone(),
                    source,
                };
                let mut w = csv::Writer::from_path(&path).map_err(wrap)?;
                w.write_record(["sinr_db", "ccdf"]).map_err(wrap)?;
                for (x, p) in cellular::empirical_ccdf(&samples) {
                    w.write_record([x.to_string(), p.to_string()])
                        .map_err(wrap)?;
                }
                w.flush().map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
            }
            if let Some(path) = out {
                curve.save(path)?;
            }
        }
        Command::Simulate { sim } => {
            let cfg = sim.config();
            let result = sim.simulator()?.run_point(&cfg)?;
            write_results(&[result], sim.out.as_ref())?;
        }
        Command::Sweep { var, points, sim } => {
            let var = match var {
                VarArg::Alpha => SweepVar::Alpha,
                VarArg::Utilization => SweepVar::Utilization,
                VarArg::ClusterSize => SweepVar::ClusterSize,
            };
            let results = sim.simulator()?.run_sweep(&sim.config(), var, &points)?;
            write_results(&results, sim.out.as_ref())?;
        }
    }
    Ok(())
}

fn write_results(results: &[cran_ldpc::harness::PointResult], out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => emit_results(results, path),
        None => write_rows(&sweep_rows(results), io::stdout().lock()).map_err(csv_err),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
