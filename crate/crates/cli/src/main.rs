use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nvbus_cli::commands::{self, Checkpoint, GateSource, Overrides};
use nvbus_cli::config::RunConfig;
use nvbus_cli::CliError;
use nvbus_core::{FrameConvention, Mode};

#[derive(Parser)]
#[command(name = "nvbus", version, about = "NV-ensemble bus simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Effective,
}

#[derive(Clone, Copy, ValueEnum)]
enum FrameArg {
    Segment,
    Continuous,
}

#[derive(Clone, Copy, ValueEnum)]
enum GateArg {
    Ideal,
    Device,
}

#[derive(Clone, Copy, ValueEnum)]
enum AtArg {
    Initial,
    Final,
}

#[derive(Args)]
struct Common {
    /// Config file, or one of the bundled names (paper_state_transfer,
    /// paper_cphase, paper_cnot, paper_fast_transfer).
    #[arg(long, default_value = "paper_state_transfer")]
    config: String,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long = "theta-grid", value_name = "M")]
    theta_grid: Option<usize>,
    #[arg(long, value_name = "K")]
    nmax: Option<usize>,
    /// exact, rk4 or hybrid
    #[arg(long)]
    propagator: Option<String>,
    #[arg(long, value_enum)]
    frame: Option<FrameArg>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let o = Overrides {
            mode: self.mode.map(|m| match m {
                ModeArg::Full => Mode::Full,
                ModeArg::Effective => Mode::Effective,
            }),
            theta_grid: self.theta_grid,
            n_max: self.nmax,
            propagator: self.propagator.clone(),
            frame: self.frame.map(|f| match f {
                FrameArg::Segment => FrameConvention::Segment,
                FrameArg::Continuous => FrameConvention::Continuous,
            }),
        };
        o.apply(RunConfig::load(&self.config)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compile, propagate and score a protocol.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "nvbus-out")]
        out: PathBuf,
        /// Exit with status 4 when the result misses its acceptance threshold.
        #[arg(long)]
        assert: bool,
    },
    /// Formula vs calibrated durations for every transfer segment.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster-state schedule and stabilizers for a lattice.
    Cluster {
        /// Extents such as 4, 3x3 or 2x2x2.
        #[arg(long)]
        dims: String,
        #[arg(long, value_enum, default_value = "ideal")]
        gate: GateArg,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduced density matrix of the probe input as CSV.
    DumpRho {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "final")]
        at: AtArg,
        /// Comma-separated subsystems out of nve1, tlra, spq, tlrb, nve2.
        #[arg(long)]
        keep: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, out, assert } => {
            let cfg = common.load()?;
            let r = commands::run(&cfg, &out, assert)?;
            println!("protocol {} ({:?} mode, {})", cfg.protocol, cfg.mode, r.propagator);
            println!("total time {:.4} ns", r.timeline.total_ns);
            println!(
                "average fidelity {:.6} (min {:.6}, max {:.6}, M={})",
                r.fidelity.average,
                r.fidelity.min(),
                r.fidelity.max(),
                r.fidelity.grid
            );
            if let Some(g) = &r.gate {
                println!("gate metric {:.3e}, leakage {:.3e}", g.metric, g.leakage);
            }
            println!(
                "photon-2 max {:.3e}, final non-target {:.3e}",
                r.fidelity.leakage.max_photon2, r.fidelity.leakage.final_nontarget
            );
            println!("wrote {} to {}", r.files.join(", "), out.display());
            if let Some(a) = &r.assertion {
                if !a.pass {
                    return Err(CliError::Assert(a.detail.clone()));
                }
                println!("assert ok: {}", a.detail);
            }
        }
        Command::Calibrate { common, out } => {
            let cfg = common.load()?;
            let rows = commands::calibrate(&cfg)?;
            print!("{}", commands::calibration_table(&rows));
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("calibration.csv"), commands::calibration_csv(&rows)?)?;
            }
        }
        Command::Cluster { dims, gate, common, out } => {
            let dims = commands::parse_dims(&dims)?;
            let (source, cfg) = match gate {
                GateArg::Ideal => (GateSource::Ideal, None),
                GateArg::Device => {
                    let mut c = common;
                    if c.config == "paper_state_transfer" {
                        c.config = "paper_cphase".into();
                    }
                    (GateSource::Device, Some(c.load()?))
                }
            };
            let (report, lat) = commands::cluster(dims, source, cfg.as_ref())?;
            if let Some(w) = &report.warning {
                eprintln!("warning: {w}");
            }
            print!("{}", report.schedule.describe(&lat));
            if let Some(m) = report.gate_metric {
                println!("device gate metric {m:.3e}");
            }
            if let Some(s) = &report.stabilizers {
                let worst = s.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
                println!("stabilizers {s:?}");
                println!("max |<K>-1| {worst:.3e}");
            }
            if let Some(dir) = out {
                commands::write_cluster(&report, &lat, &dir)?;
            }
        }
        Command::DumpRho { common, at, keep, out } => {
            let cfg = common.load()?;
            let keep = keep.as_deref().map(commands::parse_slots).transpose()?;
            let at = match at {
                AtArg::Initial => Checkpoint::Initial,
                AtArg::Final => Checkpoint::Final,
            };
            let rho = commands::dump_rho(&cfg, at, keep)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    let name = match at {
                        Checkpoint::Initial => "rho_initial.csv",
                        Checkpoint::Final => "rho_final.csv",
                    };
                    commands::write_rho(&rho, std::fs::File::create(dir.join(name))?)?;
                }
                None => commands::write_rho(&rho, std::io::stdout().lock())?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
