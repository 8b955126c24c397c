use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use sympidx_cli::{configure_threads, run, validate, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "sympidx", version, about = "Symplectic index experiments")]
struct Cli {
    /// Directory for artifacts and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct SystemArgs {
    /// Magnetic system JSON file.
    #[arg(long, conflicts_with = "b")]
    config: Option<PathBuf>,
    /// Constant field on the flat torus (default 1).
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f64>,
}

impl SystemArgs {
    fn value(&self) -> Value {
        match (&self.config, self.b) {
            (Some(p), _) => json!(p),
            (None, Some(b)) => json!({ "metric": { "type": "flat" }, "field": { "type": "constant", "value": b } }),
            (None, None) => json!({ "metric": { "type": "flat" }, "field": { "type": "constant", "value": 1.0 } }),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Δ̃ and Conley-Zehnder index of a sampled symplectic path.
    Index {
        #[arg(long)]
        path: PathBuf,
    },
    /// Compare two constant quadratic Hamiltonians.
    Sturm {
        /// Rows separated by ';', entries by ','.
        #[arg(long)]
        s0: Option<String>,
        #[arg(long)]
        s1: Option<String>,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
        c0: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
        c1: f64,
        #[arg(long, allow_negative_numbers = true)]
        t: f64,
        #[arg(long, default_value_t = 64)]
        steps: usize,
    },
    /// Find a closed magnetic orbit and write its trajectory.
    Magnetic {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, allow_negative_numbers = true)]
        r: f64,
        #[arg(long, allow_negative_numbers = true)]
        theta: Option<f64>,
        #[arg(long, default_value_t = 1)]
        periods: usize,
    },
    /// Fit the growth of Δ̃ along iterates of a magnetic orbit.
    Growth {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, allow_negative_numbers = true)]
        r: f64,
        #[arg(long, allow_negative_numbers = true)]
        theta: Option<f64>,
        #[arg(long, default_value_t = 8)]
        k: usize,
    },
    /// Action and index levels of the model Hamiltonian.
    FloerLevels {
        #[arg(long)]
        m: u32,
        #[arg(long)]
        q: u32,
        #[arg(long, allow_negative_numbers = true)]
        r2: f64,
        #[arg(long, allow_negative_numbers = true)]
        eps0: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
        lam_min: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
        lam_max: f64,
        #[arg(long, allow_negative_numbers = true)]
        lambda0: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        h: Option<f64>,
        #[arg(long)]
        l_max: Option<u64>,
    },
    /// Periods of closed orbits across energy levels.
    Sweep {
        #[command(flatten)]
        system: SystemArgs,
        /// Comma separated, strictly decreasing.
        #[arg(long, allow_negative_numbers = true, value_delimiter = ',', required = true)]
        r: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    /// Run an experiment config file.
    Run { config: PathBuf },
    /// Check an experiment config file without running it.
    Validate { config: PathBuf },
}

fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>, String> {
    s.split(';')
        .map(|row| {
            row.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad matrix entry {x:?}: {e}")))
                .collect()
        })
        .collect()
}

fn config_from(cli: &Cli) -> Result<ExperimentConfig, String> {
    let (command, params) = match &cli.cmd {
        Cmd::Index { path } => (Command::Index, json!({ "path": path })),
        Cmd::Sturm { s0, s1, dim, c0, c1, t, steps } => {
            let s0 = s0.as_deref().map(parse_matrix).transpose()?;
            let s1 = s1.as_deref().map(parse_matrix).transpose()?;
            (
                Command::Sturm,
                json!({ "s0": s0, "s1": s1, "dim": dim, "c0": c0, "c1": c1, "t": t, "steps": steps }),
            )
        }
        Cmd::Magnetic { system, r, theta, periods } => (
            Command::Magnetic,
            json!({ "system": system.value(), "r": r, "theta": theta, "periods": periods }),
        ),
        Cmd::Growth { system, r, theta, k } => {
            (Command::Growth, json!({ "system": system.value(), "r": r, "theta": theta, "k": k }))
        }
        Cmd::FloerLevels { m, q, r2, eps0, lam_min, lam_max, lambda0, h, l_max } => (
            Command::FloerLevels,
            json!({
                "m": m, "q": q, "r2": r2, "eps0": eps0, "lam_min": lam_min, "lam_max": lam_max,
                "lambda0": lambda0, "h": h, "l_max": l_max,
            }),
        ),
        Cmd::Sweep { system, r, k } => (Command::Sweep, json!({ "system": system.value(), "r": r, "k": k })),
        Cmd::Run { config } | Cmd::Validate { config } => return ExperimentConfig::load(config),
    };
    Ok(ExperimentConfig::new(command, params, cli.seed, cli.out.clone()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = configure_threads() {
        eprintln!("{w}");
    }
    let config = match config_from(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Cmd::Validate { .. } = cli.cmd {
        let v = validate(&config);
        if v.is_empty() {
            println!("ok");
            return ExitCode::SUCCESS;
        }
        for msg in &v {
            println!("violation: {msg}");
        }
        return ExitCode::from(2);
    }
    let outcome = run(&config);
    for line in &outcome.lines {
        println!("{line}");
    }
    for msg in &outcome.violations {
        eprintln!("violation: {msg}");
    }
    if let Some(e) = &outcome.error {
        eprintln!("error ({} in {}): {}", e.name, e.module, e.message);
    }
    ExitCode::from(outcome.exit_code() as u8)
}
