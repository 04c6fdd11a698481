use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand as ClapSubcommand};

use ionlab::paley::NormParams;
use ionlab::solver::SimConfig;
use ionlab_cli::{
    run_experiment, CliError, DecayParams, DispersionParams, Experiment, ExperimentConfig, Lemma, NormsParams,
    ResonanceParams,
};

/// Numerical experiments on the 2D Euler-Poisson ion system.
///
/// Every output file gets a replay manifest (`<file>.manifest.json`, or
/// `run-manifest.json` for simulations) holding the configuration hash and
/// seed. Relative output paths are placed under $IONLAB_OUT_DIR when set.
/// Exit codes: 2 config error, 3 numeric guard tripped, 4 I/O error.
#[derive(Parser, Debug)]
#[command(name = "ionlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand, Debug)]
enum Command {
    /// Tabulate λ, λ′, λ″ on a uniform radial grid (CSV x,lambda,dlambda,d2lambda).
    Dispersion {
        /// Smallest radius.
        #[arg(long, default_value_t = 0.0)]
        x_min: f64,
        /// Largest radius.
        #[arg(long, default_value_t = 6.0)]
        x_max: f64,
        /// Number of rows.
        #[arg(long, default_value_t = 601)]
        points: usize,
        /// Output CSV.
        #[arg(long, default_value = "dispersion.csv")]
        out: PathBuf,
    },
    /// Sampling checks of the resonance lower bounds.
    Resonance {
        #[command(subcommand)]
        action: ResonanceAction,
    },
    /// Energy and truncated Z norms of a field file.
    Norms {
        /// Field file (binary grid format).
        #[arg(long = "in")]
        input: PathBuf,
        /// JSON with norm parameters (delta, N0..N3, gamma_scale); defaults if omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Output JSON.
        #[arg(long, default_value = "norms.json")]
        out: PathBuf,
    },
    /// Sup-norm decay of the linear flow from a radial frequency profile (CSV t,supnorm,l2norm).
    Decay {
        /// Dyadic shell index k (profile ψ_k).
        #[arg(long, allow_hyphen_values = true, conflicts_with = "gamma0_shell", required_unless_present = "gamma0_shell")]
        k: Option<i32>,
        /// Index n of the ball around γ₀ of radius ~ 2^{-n}/gamma_scale.
        #[arg(long)]
        gamma0_shell: Option<u32>,
        /// Scale of the γ₀ balls.
        #[arg(long, default_value_t = 64.0)]
        gamma_scale: f64,
        /// First sample time.
        #[arg(long, default_value_t = 10.0)]
        tmin: f64,
        /// Last sample time.
        #[arg(long, default_value_t = 1000.0)]
        tmax: f64,
        /// Number of log-spaced times.
        #[arg(long, default_value_t = 21)]
        count: usize,
        /// Grid points per side (power of two).
        #[arg(long, default_value_t = 1024)]
        grid: usize,
        /// Domain side length; defaults to the no-wrap minimum for tmax.
        #[arg(long)]
        domain_length: Option<f64>,
        /// Output CSV.
        #[arg(long, default_value = "decay.csv")]
        out: PathBuf,
    },
    /// Time-step the full system and record diagnostics.
    Simulate {
        /// Simulation config JSON (unknown keys rejected).
        #[arg(long)]
        config: PathBuf,
        /// Overrides initial_data.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (diagnostics.csv, snapshots, run-manifest.json).
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Run an experiment config JSON {subcommand, params, seed, out}.
    Run {
        /// Experiment config file.
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(ClapSubcommand, Debug)]
enum ResonanceAction {
    /// Sample a resonance lemma and write a JSON report.
    Verify {
        /// Which lower bound to sample.
        #[arg(long, value_enum)]
        lemma: Lemma,
        /// Number of samples.
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        /// Seed of the sampler.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Localization window (space, iterated); default 0.5.
        #[arg(long)]
        window: Option<f64>,
        /// Output frequency ξ as "x,y" (space); default (2γ₀+0.05, 0).
        #[arg(long, value_delimiter = ',', num_args = 2, allow_hyphen_values = true)]
        xi: Option<Vec<f64>>,
        /// Closeness κ (space).
        #[arg(long, default_value_t = 1e-4)]
        kappa: f64,
        /// Sign pattern, e.g. "++" (space) or "+-+" (iterated).
        #[arg(long, allow_hyphen_values = true)]
        signs: Option<String>,
        /// κ₁ (iterated).
        #[arg(long, default_value_t = 1e-8)]
        kappa1: f64,
        /// κ₂ (iterated).
        #[arg(long, default_value_t = 1e-3)]
        kappa2: f64,
        /// Output JSON.
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn config_of(cmd: Command) -> Result<ExperimentConfig, CliError> {
    let (exp, seed, out) = match cmd {
        Command::Dispersion { x_min, x_max, points, out } => {
            (Experiment::Dispersion(DispersionParams { x_min, x_max, points }), None, out)
        }
        Command::Resonance { action } => {
            let ResonanceAction::Verify { lemma, samples, seed, window, xi, kappa, signs, kappa1, kappa2, out } = action;
            let xi = xi.map(|v| [v[0], v[1]]);
            let p = ResonanceParams { lemma, samples, window, xi, kappa, signs, kappa1, kappa2 };
            (Experiment::Resonance(p), Some(seed), out)
        }
        Command::Norms { input, params, out } => {
            let norm_params: NormParams = match params {
                Some(p) => read_json(&p)?,
                None => NormParams::default(),
            };
            (Experiment::Norms(NormsParams { input, norm_params }), None, out)
        }
        Command::Decay { k, gamma0_shell, gamma_scale, tmin, tmax, count, grid, domain_length, out } => {
            let p = DecayParams { k, gamma0_shell, gamma_scale, tmin, tmax, count, grid, domain_length };
            (Experiment::Decay(p), None, out)
        }
        Command::Simulate { config, seed, out } => {
            let c: SimConfig = read_json(&config)?;
            (Experiment::Simulate(c), seed, out)
        }
        Command::Run { config } => return read_json(&config),
    };
    Ok(ExperimentConfig::new(&exp, seed, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match config_of(cli.command).and_then(|c| run_experiment(&c)) {
        Ok(w) => {
            for f in w.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ionlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
