use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hsem::harness::tables::{front_tables, write_tables_csv, TableMode};
use hsem::harness::{convergence_sweep, run_case, ConfigError, ControlMode, RunConfig, RunError, Stepping, Sweep};
use hsem::problems::ProblemKind;

#[derive(Parser)]
#[command(name = "hsem", version, about = "h-adaptive spectral-element advection-diffusion and Burgers solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one case and report the final error.
    Run(Common),
    /// Repeat a case over time steps or degrees and fit the convergence rate.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated fixed time steps.
        #[arg(long, value_delimiter = ',', conflicts_with = "degrees")]
        dts: Vec<f64>,
        /// Comma-separated polynomial degrees.
        #[arg(long, value_delimiter = ',')]
        degrees: Vec<usize>,
    },
    /// Burgers-front diagnostics per degree and mode.
    Tables {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "5,9,13")]
        degrees: Vec<usize>,
        /// Any of nonadaptive, adaptive, reference, control.
        #[arg(long, value_delimiter = ',', default_value = "nonadaptive,adaptive,reference,control")]
        modes: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    lmax: Option<u32>,
    #[arg(long, conflicts_with = "courant")]
    dt: Option<f64>,
    #[arg(long)]
    courant: Option<f64>,
    #[arg(long)]
    tfinal: Option<f64>,
    /// Uniform grid at the finest adaptive scale.
    #[arg(long)]
    control: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` settings applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Common {
    fn build(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = match (&self.config, &self.problem) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => {
                let kind = ProblemKind::parse(name).ok_or_else(|| ConfigError::Value {
                    key: "--problem".into(),
                    value: name.clone(),
                    reason: "expected heat, advection, burgers_front or nwave".into(),
                })?;
                RunConfig::for_problem(kind)
            }
            (None, None) => return Err(ConfigError::Inconsistent("give --config or --problem".into())),
        };
        if let (Some(_), Some(name)) = (&self.config, &self.problem) {
            if ProblemKind::parse(name) != Some(cfg.problem.kind) {
                return Err(ConfigError::Inconsistent("--problem disagrees with the config file".into()));
            }
        }
        if let Some(p) = self.degree {
            cfg.degree = p;
        }
        if let Some(l) = self.lmax {
            cfg.lmax = l;
        }
        if let Some(dt) = self.dt {
            cfg.time.stepping = Stepping::Fixed(dt);
        }
        if let Some(k) = self.courant {
            cfg.time.stepping = Stepping::Courant(k);
        }
        if let Some(t) = self.tfinal {
            cfg.time.t_final = t;
        }
        if self.control {
            cfg.control = ControlMode::UniformFinest;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = Some(o.clone());
        }
        for s in &self.sets {
            let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::Syntax { line: 0, text: s.clone() })?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.build()?;
            let s = run_case(&cfg)?;
            println!("problem {} degree {} lmax {}", cfg.problem.kind.name(), cfg.degree, cfg.lmax);
            println!("steps {} elements {} max_iterations {}", s.steps, s.elements, s.max_iterations);
            if let Some(e) = s.final_error {
                println!("error {e:e}");
            }
            if let Some((t, v, n)) = s.front {
                println!("t_max {t:.6} slope_max {v:.6} elements {n}");
            }
            for (t, n) in &s.snapshots {
                println!("snapshot t {t} elements {n}");
            }
        }
        Command::Sweep { common, dts, degrees } => {
            let cfg = common.build()?;
            let sweep = match (dts.is_empty(), degrees.is_empty()) {
                (false, _) => Sweep::Dt(dts),
                (true, false) => Sweep::Degree(degrees),
                (true, true) => return Err(ConfigError::Inconsistent("give --dts or --degrees".into()).into()),
            };
            let report = convergence_sweep(&cfg, &sweep)?;
            let mut out = std::io::stdout().lock();
            report.write_csv(&mut out).map_err(|e| RunError::Io { path: "stdout".into(), source: e })?;
        }
        Command::Tables { common, degrees, modes } => {
            let cfg = common.build()?;
            let modes = modes
                .iter()
                .map(|m| {
                    TableMode::parse(m).ok_or_else(|| ConfigError::Value { key: "--modes".into(), value: m.clone(), reason: "unknown mode".into() })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let rows = front_tables(&cfg, &degrees, &modes)?;
            let mut out = std::io::stdout().lock();
            write_tables_csv(&mut out, &rows).map_err(|e| RunError::Io { path: "stdout".into(), source: e })?;
            if let Some(d) = &cfg.output.dir {
                let path = d.join("tables.csv");
                let mut f = std::fs::File::create(&path).map_err(|e| RunError::Io { path: path.display().to_string(), source: e })?;
                write_tables_csv(&mut f, &rows).map_err(|e| RunError::Io { path: path.display().to_string(), source: e })?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
