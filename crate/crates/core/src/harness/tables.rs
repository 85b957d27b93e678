//! Burgers-front diagnostics tables: nonadaptive, adaptive, reference and
//! control runs per degree.

use std::io::Write;

use super::config::{ControlMode, RunConfig};
use super::run::run_case;
use super::RunError;
use crate::problems::ProblemKind;

/// Root x-vertices of the nonadaptive front runs, clustered at the front.
pub const NONADAPTIVE_X: [f64; 5] = [-1.0, -0.05, 0.0, 0.05, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableMode {
    Nonadaptive,
    Adaptive,
    Reference,
    Control,
}

impl TableMode {
    pub fn name(self) -> &'static str {
        match self {
            TableMode::Nonadaptive => "nonadaptive",
            TableMode::Adaptive => "adaptive",
            TableMode::Reference => "reference",
            TableMode::Control => "control",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [TableMode::Nonadaptive, TableMode::Adaptive, TableMode::Reference, TableMode::Control].into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub mode: TableMode,
    pub degree: usize,
    pub t_max: f64,
    pub slope_max: f64,
    pub elements: usize,
}

pub fn nonadaptive_config(base: &RunConfig) -> RunConfig {
    let mut c = base.clone();
    c.vertices = Some(vec![NONADAPTIVE_X.to_vec()]);
    c.lmax = 0;
    c.control = ControlMode::Off;
    c
}

/// Uniform grid with about `elements` elements, keeping the root aspect ratio.
pub fn reference_config(base: &RunConfig, elements: usize) -> RunConfig {
    let mut c = base.clone();
    let roots: usize = base.grid.iter().product();
    let m = ((elements as f64 / roots as f64).powf(1.0 / base.grid.len() as f64).round() as usize).max(1);
    c.grid = base.grid.iter().map(|k| k * m).collect();
    c.vertices = None;
    c.lmax = 0;
    c.control = ControlMode::Off;
    c
}

/// Runs every requested mode for every degree. Reference runs need the
/// adaptive run of the same degree and are skipped otherwise.
pub fn front_tables(base: &RunConfig, degrees: &[usize], modes: &[TableMode]) -> Result<Vec<TableRow>, RunError> {
    if base.problem.kind != ProblemKind::BurgersFront {
        return Err(super::ConfigError::Inconsistent("tables are defined for the burgers_front problem".into()).into());
    }
    let mut rows = Vec::new();
    for &p in degrees {
        let mut at_peak = None;
        for &mode in modes {
            let mut base_p = base.clone();
            base_p.degree = p;
            let cfg = match mode {
                TableMode::Nonadaptive => nonadaptive_config(&base_p),
                TableMode::Adaptive => base_p,
                TableMode::Control => {
                    base_p.control = ControlMode::UniformFinest;
                    base_p
                }
                TableMode::Reference => match at_peak {
                    Some(n) => reference_config(&base_p, n),
                    None => continue,
                },
            };
            let mut cfg = cfg;
            if let Some(d) = &base.output.dir {
                cfg.output.dir = Some(d.join(format!("{}_p{p}", mode.name())));
            }
            let s = run_case(&cfg)?;
            let (t_max, slope_max, n) = s.front.unwrap_or((f64::NAN, f64::NAN, s.elements));
            if mode == TableMode::Adaptive {
                at_peak = Some(n);
            }
            rows.push(TableRow { mode, degree: p, t_max, slope_max, elements: n });
        }
    }
    Ok(rows)
}

pub fn write_tables_csv<W: Write>(out: &mut W, rows: &[TableRow]) -> std::io::Result<()> {
    writeln!(out, "mode,degree,t_max,slope_max,elements")?;
    for r in rows {
        writeln!(out, "{},{},{:.6},{:.6},{}", r.mode.name(), r.degree, r.t_max, r.slope_max, r.elements)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_grid_matches_count() {
        let base = RunConfig::for_problem(ProblemKind::BurgersFront);
        let c = reference_config(&base, 64);
        assert_eq!(c.grid, vec![16, 4]);
        assert_eq!(c.lmax, 0);
    }

    #[test]
    fn nonadaptive_vertices() {
        let base = RunConfig::for_problem(ProblemKind::BurgersFront);
        let c = nonadaptive_config(&base);
        assert_eq!(c.root_vertices()[0], NONADAPTIVE_X.to_vec());
        assert_eq!(c.root_vertices()[1], vec![0.0, 0.5]);
    }
}
