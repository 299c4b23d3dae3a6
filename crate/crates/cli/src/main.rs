use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scqaoa::harness::{self, ConfigOverrides, ModelKind, RunConfig, EXIT_NOT_CONVERGED};
use scqaoa::model::XxzGrouping;
use scqaoa::Error;

/// Prepare spin-chain eigenstates with symmetry-conserving QAOA circuits.
#[derive(Parser)]
#[command(name = "scqaoa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one circuit and write its trace, angles, layer profile and summary.
    Prepare(Common),
    /// Final fidelity against circuit depth.
    SweepLayers(Common),
    /// Smallest converging depth against chain length.
    SweepSize(Common),
    /// Correlation length and smallest converging depth against lambda_x.
    SweepCoupling(Common),
    /// Lowest levels of each parity sector.
    Spectrum(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    /// Chain length L.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    lambda_x: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda_z: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda_zxx: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    /// XXZ grouping: bypauli or u1.
    #[arg(long, value_parser = parse_grouping)]
    grouping: Option<XxzGrouping>,
    /// Parity sector of the target, +1 or -1.
    #[arg(long, allow_negative_numbers = true)]
    sector: Option<i64>,
    #[arg(long)]
    state_index: Option<usize>,
    /// Circuit depth N.
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    min_layers: Option<usize>,
    #[arg(long)]
    max_layers: Option<usize>,
    /// Start layer sweeps at this depth and search down or up from it.
    #[arg(long)]
    layer_hint: Option<usize>,
    /// Stop layer sweeps at the first converged depth.
    #[arg(long)]
    stop_at_converged: bool,
    /// Comma-separated chain lengths for sweep-size.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Comma-separated lambda_x values for sweep-coupling.
    #[arg(long, value_delimiter = ',')]
    lambda_x_values: Option<Vec<f64>>,
    /// Levels per sector for spectrum.
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_grouping(s: &str) -> Result<XxzGrouping, String> {
    match s.to_ascii_lowercase().as_str() {
        "bypauli" | "by-pauli" => Ok(XxzGrouping::ByPauli),
        "u1" => Ok(XxzGrouping::U1),
        _ => Err(format!("unknown grouping {s:?} (expected bypauli or u1)")),
    }
}

impl Common {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            model: self.model,
            size: self.size,
            lambda_x: self.lambda_x,
            lambda_z: self.lambda_z,
            lambda_zxx: self.lambda_zxx,
            gamma: self.gamma,
            grouping: self.grouping,
            sector: self.sector,
            state_index: self.state_index,
            layers: self.layers,
            eta: self.eta,
            epsilon: self.epsilon,
            cutoff: self.cutoff,
            max_iters: self.max_iters,
            seed: self.seed,
            out: self.out.clone(),
            min_layers: self.min_layers,
            max_layers: self.max_layers,
            layer_hint: self.layer_hint,
            stop_at_converged: self.stop_at_converged.then_some(true),
            sizes: self.sizes.clone(),
            lambda_x_values: self.lambda_x_values.clone(),
            spectrum_states: self.states,
        }
    }
}

fn run(command: &Command, cfg: &RunConfig) -> scqaoa::Result<(serde_json::Value, bool)> {
    Ok(match command {
        Command::Prepare(_) => {
            let o = harness::cmd_prepare(cfg)?;
            (serde_json::to_value(&o.summary)?, o.summary.converged)
        }
        Command::SweepLayers(_) => {
            let s = harness::cmd_sweep_layers(cfg)?;
            let ok = s.n_c.is_some();
            (serde_json::json!({ "size": s.size, "n_c": s.n_c, "points": s.points }), ok)
        }
        Command::SweepSize(_) => {
            let s = harness::cmd_sweep_size(cfg)?;
            let ok = s.points.iter().all(|p| p.n_c.is_some());
            (serde_json::json!({ "points": s.points }), ok)
        }
        Command::SweepCoupling(_) => {
            let s = harness::cmd_sweep_coupling(cfg)?;
            let ok = s.points.iter().all(|p| p.n_c.is_some());
            (serde_json::json!({ "size": s.size, "points": s.points, "spearman": s.spearman }), ok)
        }
        Command::Spectrum(_) => (serde_json::to_value(harness::cmd_spectrum(cfg)?)?, true),
    })
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("{}", harness::error_report(e));
    ExitCode::from(harness::exit_code(e) as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors share the configuration exit code; 2 means "not converged"
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let common = match &cli.command {
        Command::Prepare(c)
        | Command::SweepLayers(c)
        | Command::SweepSize(c)
        | Command::SweepCoupling(c)
        | Command::Spectrum(c) => c,
    };
    let level = match common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let cfg = match RunConfig::resolve(common.config.as_deref(), &common.overrides()) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    match run(&cli.command, &cfg) {
        Ok((report, converged)) => {
            println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
            if converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_NOT_CONVERGED as u8)
            }
        }
        Err(e) => fail(&e),
    }
}
