//! Flat `section.key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::estimator::EstimatorConfig;
use crate::problems::{ProblemKind, ProblemSpec};
use crate::solver::PcgOptions;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("inconsistent configuration: {0}")]
    Inconsistent(String),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepping {
    Fixed(f64),
    Courant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Startup {
    Analytic,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    Off,
    UniformFinest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub stepping: Stepping,
    pub t_final: f64,
    pub dt_max: f64,
    pub bdf: usize,
    pub ext: usize,
    pub startup: Startup,
    pub adapt_every: usize,
    /// Include the diffusive term in the Courant bound.
    pub courant_diffusion: bool,
    /// Recompute cached advection rates after a mesh change instead of
    /// interpolating them.
    pub recompute_rates: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub trace: bool,
    pub trace_error: bool,
    pub tags: bool,
    pub dump_final: bool,
    /// Times the step sequence lands on exactly; element counts are recorded
    /// and fields dumped there.
    pub snapshots: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub degree: usize,
    pub grid: Vec<usize>,
    /// Explicit root vertex coordinates per direction; overrides `grid`.
    pub vertices: Option<Vec<Vec<f64>>>,
    pub lmax: u32,
    pub control: ControlMode,
    pub time: TimeConfig,
    pub estimator: EstimatorConfig,
    pub solver: PcgOptions,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Settings of the reference experiments for each problem.
    pub fn for_problem(kind: ProblemKind) -> Self {
        let problem = ProblemSpec::default_for(kind);
        let base_time = TimeConfig {
            stepping: Stepping::Fixed(1e-4),
            t_final: 0.05,
            dt_max: 1e-2,
            bdf: 3,
            ext: 3,
            startup: Startup::Analytic,
            adapt_every: 1,
            courant_diffusion: true,
            recompute_rates: false,
        };
        let output = OutputConfig { dir: None, trace: true, trace_error: true, tags: false, dump_final: false, snapshots: vec![] };
        let mut cfg = Self {
            problem,
            degree: 6,
            grid: vec![4, 4],
            vertices: None,
            lmax: 3,
            control: ControlMode::Off,
            time: base_time,
            estimator: EstimatorConfig::heat(),
            solver: PcgOptions::default(),
            output,
        };
        match kind {
            ProblemKind::Heat => {}
            ProblemKind::Advection => {
                cfg.degree = 8;
                cfg.time.t_final = 0.06;
                cfg.estimator = EstimatorConfig::derivative_only();
            }
            ProblemKind::BurgersFront => {
                cfg.degree = 13;
                cfg.grid = vec![4, 1];
                cfg.time.stepping = Stepping::Fixed(2e-4);
                cfg.time.t_final = 0.56;
                cfg.time.startup = Startup::Bootstrap;
                cfg.estimator = EstimatorConfig::derivative_only();
                cfg.output.trace_error = false;
            }
            ProblemKind::NWave => {
                cfg.degree = 8;
                cfg.lmax = 4;
                cfg.time.stepping = Stepping::Courant(0.15);
                cfg.time.t_final = 1.0;
                cfg.estimator = EstimatorConfig::derivative_only();
            }
        }
        cfg
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let kind = match pairs.iter().rev().find(|(k, _)| k == "problem.kind") {
            Some((k, v)) => ProblemKind::parse(v).ok_or_else(|| bad(k, v, "expected heat, advection, burgers_front or nwave"))?,
            None => return Err(ConfigError::Inconsistent("problem.kind is required".into())),
        };
        let mut cfg = Self::for_problem(kind);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), reason: e.to_string() })?;
        Self::parse(&text)
    }

    /// Sets one key; the problem kind itself is fixed at construction.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let p = &mut self.problem;
        match key {
            "problem.kind" => {
                let kind = ProblemKind::parse(value).ok_or_else(|| bad(key, value, "unknown problem"))?;
                if kind != p.kind {
                    return Err(ConfigError::Inconsistent("problem.kind cannot change after defaults are applied".into()));
                }
            }
            "problem.nu" => p.nu = num(key, value)?,
            "problem.sigma0" => p.sigma0 = num(key, value)?,
            "problem.a" => p.a = num(key, value)?,
            "problem.t0" => p.t0 = num(key, value)?,
            "problem.u2hat" => p.u2hat = num(key, value)?,
            "problem.c" => p.c = vec3(key, value)?,
            "problem.x0" => p.x0 = vec3(key, value)?,
            "problem.k" => p.k = vec3(key, value)?,
            "mesh.degree" => self.degree = int(key, value)?,
            "mesh.lmax" => self.lmax = int(key, value)? as u32,
            "mesh.grid" => self.grid = list(key, value)?.into_iter().map(|x| x as usize).collect(),
            "mesh.x_vertices" | "mesh.y_vertices" => {
                let mu = if key == "mesh.x_vertices" { 0 } else { 1 };
                let verts = self.vertices.get_or_insert_with(Vec::new);
                while verts.len() <= mu {
                    verts.push(Vec::new());
                }
                verts[mu] = list(key, value)?;
            }
            "mesh.control" => {
                self.control = match value {
                    "off" => ControlMode::Off,
                    "uniform-finest" | "uniform_finest" => ControlMode::UniformFinest,
                    _ => return Err(bad(key, value, "expected off or uniform-finest")),
                }
            }
            "time.dt" => self.time.stepping = Stepping::Fixed(num(key, value)?),
            "time.courant" => self.time.stepping = Stepping::Courant(num(key, value)?),
            "time.t_final" => self.time.t_final = num(key, value)?,
            "time.dt_max" => self.time.dt_max = num(key, value)?,
            "time.bdf" => self.time.bdf = int(key, value)?,
            "time.ext" => self.time.ext = int(key, value)?,
            "time.startup" => {
                self.time.startup = match value {
                    "analytic" => Startup::Analytic,
                    "bootstrap" => Startup::Bootstrap,
                    _ => return Err(bad(key, value, "expected analytic or bootstrap")),
                }
            }
            "time.adapt_every" => self.time.adapt_every = int(key, value)?,
            "time.courant_diffusion" => self.time.courant_diffusion = boolean(key, value)?,
            "time.recompute_rates" => self.time.recompute_rates = boolean(key, value)?,
            "estimator.spectral_threshold" => self.estimator.spectral_threshold = optional(key, value)?,
            "estimator.spectral_coarsen" => self.estimator.spectral_coarsen = num(key, value)?,
            "estimator.deriv_threshold" => self.estimator.deriv_threshold = optional(key, value)?,
            "estimator.deriv_coarsen" => self.estimator.deriv_coarsen = num(key, value)?,
            "estimator.lambda_threshold" => self.estimator.lambda_threshold = num(key, value)?,
            "estimator.fit_count" => self.estimator.fit_count = int(key, value)?,
            "estimator.lambda_floor" => self.estimator.lambda_floor = num(key, value)?,
            "solver.tol" => self.solver.tol = num(key, value)?,
            "solver.max_iterations" => self.solver.max_iterations = int(key, value)?,
            "solver.precondition" => self.solver.precondition = boolean(key, value)?,
            "output.dir" => self.output.dir = Some(PathBuf::from(value)),
            "output.trace" => self.output.trace = boolean(key, value)?,
            "output.trace_error" => self.output.trace_error = boolean(key, value)?,
            "output.tags" => self.output.tags = boolean(key, value)?,
            "output.dump_final" => self.output.dump_final = boolean(key, value)?,
            "output.snapshots" => self.output.snapshots = list(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let dim = self.problem.dim;
        self.problem.validate().map_err(|e| ConfigError::Inconsistent(e.to_string()))?;
        if self.degree < 1 {
            return Err(ConfigError::Inconsistent("mesh.degree must be at least 1".into()));
        }
        match &self.vertices {
            Some(v) => {
                if v.len() != dim && !(v.len() == 1 && dim > 1) {
                    return Err(ConfigError::Inconsistent(format!("vertex lists for {} directions, problem has {dim}", v.len())));
                }
            }
            None => {
                if self.grid.len() != dim || self.grid.iter().any(|&k| k == 0) {
                    return Err(ConfigError::Inconsistent(format!("mesh.grid needs {dim} positive counts")));
                }
            }
        }
        match self.time.stepping {
            Stepping::Fixed(dt) if !(dt > 0.0) => return Err(ConfigError::Inconsistent("time.dt must be positive".into())),
            Stepping::Courant(k) if !(k > 0.0) => return Err(ConfigError::Inconsistent("time.courant must be positive".into())),
            _ => {}
        }
        if !(1..=3).contains(&self.time.bdf) || !(1..=3).contains(&self.time.ext) {
            return Err(ConfigError::Inconsistent("time.bdf and time.ext must be 1, 2 or 3".into()));
        }
        if !(self.time.t_final > self.problem.t0) {
            return Err(ConfigError::Inconsistent("time.t_final must exceed the start time".into()));
        }
        if self.time.adapt_every == 0 || !(self.time.dt_max > 0.0) {
            return Err(ConfigError::Inconsistent("time.adapt_every and time.dt_max must be positive".into()));
        }
        for t in [self.estimator.spectral_threshold, self.estimator.deriv_threshold].into_iter().flatten() {
            if !(t > 0.0) {
                return Err(ConfigError::Inconsistent("thresholds must be positive".into()));
            }
        }
        if self.estimator.fit_count < 2 {
            return Err(ConfigError::Inconsistent("estimator.fit_count must be at least 2".into()));
        }
        Ok(())
    }

    /// Serializes every key, so that `parse(render())` reproduces the config.
    pub fn render(&self) -> String {
        let p = &self.problem;
        let mut s = String::new();
        let v3 = |v: [f64; 3]| v[..p.dim].iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let opt = |o: Option<f64>| o.map_or("off".to_string(), |x| format!("{x:?}"));
        let _ = writeln!(s, "problem.kind = {}", p.kind.name());
        let _ = writeln!(s, "problem.nu = {:?}", p.nu);
        let _ = writeln!(s, "problem.sigma0 = {:?}", p.sigma0);
        let _ = writeln!(s, "problem.a = {:?}", p.a);
        let _ = writeln!(s, "problem.t0 = {:?}", p.t0);
        let _ = writeln!(s, "problem.u2hat = {:?}", p.u2hat);
        let _ = writeln!(s, "problem.c = {}", v3(p.c));
        let _ = writeln!(s, "problem.x0 = {}", v3(p.x0));
        let _ = writeln!(s, "problem.k = {}", v3(p.k));
        let _ = writeln!(s, "mesh.degree = {}", self.degree);
        let _ = writeln!(s, "mesh.lmax = {}", self.lmax);
        let _ = writeln!(s, "mesh.grid = {}", self.grid.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","));
        if let Some(v) = &self.vertices {
            for (mu, name) in ["mesh.x_vertices", "mesh.y_vertices"].iter().enumerate().take(v.len()) {
                let _ = writeln!(s, "{name} = {}", v[mu].iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(","));
            }
        }
        let _ = writeln!(s, "mesh.control = {}", if self.control == ControlMode::Off { "off" } else { "uniform-finest" });
        match self.time.stepping {
            Stepping::Fixed(dt) => writeln!(s, "time.dt = {dt:?}"),
            Stepping::Courant(k) => writeln!(s, "time.courant = {k:?}"),
        }
        .ok();
        let t = &self.time;
        let _ = writeln!(s, "time.t_final = {:?}", t.t_final);
        let _ = writeln!(s, "time.dt_max = {:?}", t.dt_max);
        let _ = writeln!(s, "time.bdf = {}\ntime.ext = {}", t.bdf, t.ext);
        let _ = writeln!(s, "time.startup = {}", if t.startup == Startup::Analytic { "analytic" } else { "bootstrap" });
        let _ = writeln!(s, "time.adapt_every = {}", t.adapt_every);
        let _ = writeln!(s, "time.courant_diffusion = {}", t.courant_diffusion);
        let _ = writeln!(s, "time.recompute_rates = {}", t.recompute_rates);
        let e = &self.estimator;
        let _ = writeln!(s, "estimator.spectral_threshold = {}", opt(e.spectral_threshold));
        let _ = writeln!(s, "estimator.spectral_coarsen = {:?}", e.spectral_coarsen);
        let _ = writeln!(s, "estimator.deriv_threshold = {}", opt(e.deriv_threshold));
        let _ = writeln!(s, "estimator.deriv_coarsen = {:?}", e.deriv_coarsen);
        let _ = writeln!(s, "estimator.lambda_threshold = {:?}", e.lambda_threshold);
        let _ = writeln!(s, "estimator.fit_count = {}", e.fit_count);
        let _ = writeln!(s, "estimator.lambda_floor = {:?}", e.lambda_floor);
        let _ = writeln!(s, "solver.tol = {:?}", self.solver.tol);
        let _ = writeln!(s, "solver.max_iterations = {}", self.solver.max_iterations);
        let _ = writeln!(s, "solver.precondition = {}", self.solver.precondition);
        let o = &self.output;
        if let Some(d) = &o.dir {
            let _ = writeln!(s, "output.dir = {}", d.display());
        }
        let _ = writeln!(s, "output.trace = {}\noutput.trace_error = {}", o.trace, o.trace_error);
        let _ = writeln!(s, "output.tags = {}\noutput.dump_final = {}", o.tags, o.dump_final);
        if !o.snapshots.is_empty() {
            let _ = writeln!(s, "output.snapshots = {}", o.snapshots.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(","));
        }
        s
    }

    /// Root vertex coordinates per direction.
    pub fn root_vertices(&self) -> Vec<Vec<f64>> {
        let d = &self.problem.domain;
        let dim = self.problem.dim;
        (0..dim)
            .map(|mu| {
                if let Some(v) = self.vertices.as_ref().and_then(|v| v.get(mu)).filter(|v| !v.is_empty()) {
                    return v.clone();
                }
                let k = self.grid.get(mu).copied().unwrap_or(1);
                (0..=k).map(|i| d.lower[mu] + (d.upper[mu] - d.lower[mu]) * i as f64 / k as f64).collect()
            })
            .collect()
    }
}

fn bad(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::Value { key: key.to_string(), value: value.to_string(), reason: reason.to_string() }
}

fn num(key: &str, value: &str) -> Result<f64, ConfigError> {
    value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(key, value, "expected a finite number"))
}

fn int(key: &str, value: &str) -> Result<usize, ConfigError> {
    value.parse::<usize>().map_err(|_| bad(key, value, "expected a non-negative integer"))
}

fn boolean(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn optional(key: &str, value: &str) -> Result<Option<f64>, ConfigError> {
    match value {
        "off" | "none" | "disabled" => Ok(None),
        _ => num(key, value).map(Some),
    }
}

fn list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value.split(',').map(|s| num(key, s.trim())).collect()
}

fn vec3(key: &str, value: &str) -> Result<[f64; 3], ConfigError> {
    let v = list(key, value)?;
    if v.is_empty() || v.len() > 3 {
        return Err(bad(key, value, "expected one to three components"));
    }
    let mut out = [0.0; 3];
    out[..v.len()].copy_from_slice(&v);
    Ok(out)
}
