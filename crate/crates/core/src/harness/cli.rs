//! Command-line interface.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Detector, ExperimentConfig};
use super::experiment::{self, Execution, Scenario};
use crate::error::{Error, Result};
use crate::flops::{self, FlopsParams};
use crate::rf::{self, PaConfig};
use crate::stm::{self, StmReservoir, StmSystem};

#[derive(Debug, Parser)]
#[command(name = "wesn", version, about = "MIMO-OFDM reservoir-computing symbol detection simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Master seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (1 runs sequentially); falls back to WESN_JOBS.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo BER sweep over a config file.
    BerSweep {
        #[arg(long)]
        config: PathBuf,
        /// Config override, `key=value`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Short-term memory capacity of a buffer, ESN or WESN.
    StmMeasure {
        /// buffer, esn or wesn.
        #[arg(long, default_value = "wesn")]
        system: String,
        #[arg(long, default_value_t = 32)]
        neurons: usize,
        #[arg(long, default_value_t = 16)]
        buffer: usize,
        #[arg(long, default_value_t = 4000)]
        samples: usize,
        /// Largest delay; twice the regressor width when absent.
        #[arg(long)]
        m_max: Option<usize>,
        #[arg(long, default_value_t = 0.9)]
        spectral_target: f64,
        #[arg(long, default_value_t = 0.1)]
        input_scale: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Symbolic FLOPS of every detector.
    FlopsTable {
        #[arg(long, default_value_t = 512)]
        nc: usize,
        #[arg(long, default_value_t = 4)]
        n: usize,
        /// Constellation size.
        #[arg(long = "mod", default_value_t = 16)]
        modulation: usize,
        /// Neurons plus buffer length.
        #[arg(long, default_value_t = 94)]
        neurons: usize,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// AM/AM curve of the RAPP amplifier.
    PaCurve {
        #[arg(long, default_value_t = 3.0)]
        p: f64,
        #[arg(long = "usat-db", default_value_t = -11.78, allow_hyphen_values = true)]
        usat_db: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Largest input amplitude relative to u_sat.
        #[arg(long, default_value_t = 4.0)]
        max_ratio: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One frame through every configured detector; prints per-detector BER
    /// and optionally writes the WESN decisions as a grid CSV.
    DemoDetect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Sweep point index.
        #[arg(long, default_value_t = 0)]
        point: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn emit(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, body)?;
        }
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn load_config(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    for kv in overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BerSweep { config, overrides, trials, common } => {
            let mut cfg = load_config(&config, &overrides, common.seed)?;
            if let Some(t) = trials {
                cfg.n_trials = t;
            }
            let reports = experiment::run_experiment(&cfg, Execution::from_jobs(common.jobs))?;
            let out = common.out.or(cfg.output.clone());
            emit(out.as_deref(), &experiment::reports_to_csv(&reports))
        }
        Command::StmMeasure { system, neurons, buffer, samples, m_max, spectral_target, input_scale, common } => {
            let sys = match system.to_ascii_lowercase().as_str() {
                "buffer" => StmSystem::Buffer { buffer_len: buffer },
                "esn" => StmSystem::Esn { n_neurons: neurons },
                "wesn" => StmSystem::Wesn { n_neurons: neurons, buffer_len: buffer },
                other => return Err(Error::UnknownMethod(other.to_string())),
            };
            let seed = common.seed.unwrap_or(0);
            let res = StmReservoir { spectral_target, input_scale, seed };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rep = stm::measure_mc(sys, &res, m_max, samples, &mut rng)?;
            eprintln!("{}: MC = {:.4} (noise floor {:.3e})", sys.name(), rep.mc_total, rep.noise_floor);
            emit(common.out.as_deref(), &rep.to_csv())
        }
        Command::FlopsTable { nc, n, modulation, neurons, delta, kappa, out } => {
            let p = FlopsParams {
                n_antennas: n,
                n_subcarriers: nc,
                n_neurons: neurons,
                delta: delta.unwrap_or(n as f64 / 7.0).min(1.0),
                kappa: kappa.unwrap_or(1.0),
                constellation_size: modulation,
            };
            emit(out.as_deref(), &flops::to_csv(&flops::flops_table(&p)?))
        }
        Command::PaCurve { p, usat_db, points, max_ratio, out } => {
            if points < 2 || !(max_ratio > 0.0) || !(p > 0.0) {
                return Err(Error::Config("pa-curve needs at least 2 points, positive p and max ratio".into()));
            }
            let cfg = PaConfig::rapp(usat_db, p, 0.0);
            let mut s = String::from("input_amplitude,output_amplitude\n");
            for (a, b) in rf::am_am_curve(&cfg, points, max_ratio) {
                s.push_str(&format!("{a:.6e},{b:.6e}\n"));
            }
            emit(out.as_deref(), &s)
        }
        Command::DemoDetect { config, overrides, point, common } => {
            let cfg = load_config(&config, &overrides, common.seed)?;
            let points = cfg.sweep_points();
            let pt = points
                .get(point)
                .ok_or_else(|| Error::Config(format!("sweep point {point} of {} does not exist", points.len())))?;
            let scn = Scenario::new(&cfg, pt)?;
            let frame = experiment::simulate_frame(&scn, cfg.master_seed, 0)?;
            let mut wesn_grid = None;
            for &det in &cfg.detectors {
                let d = experiment::run_detector(det, &scn, &frame)?;
                let (e, b) = experiment::data_bit_errors(&frame.grid, &frame.bits, &d.decided, &scn.constellation);
                eprintln!("{det}: {e} errors in {b} bits (BER {:.4e})", e as f64 / b as f64);
                if det == Detector::Wesn {
                    wesn_grid = Some(d.decided);
                }
            }
            match (wesn_grid, common.out) {
                (Some(g), Some(out)) => emit(Some(&out), &g.to_csv()),
                _ => Ok(()),
            }
        }
    }
}

/// Parses the process arguments and runs; returns the exit status.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
