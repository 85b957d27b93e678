//! Temporal and spatial convergence sweeps.

use std::io::Write;

use log::info;

use super::config::{RunConfig, Stepping};
use super::run::run_case;
use super::RunError;
use crate::linalg::linear_fit;

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    Dt(Vec<f64>),
    Degree(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    pub error: f64,
    pub elements: usize,
    pub iterations: usize,
    pub element_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub temporal: bool,
    pub rows: Vec<SweepRow>,
    /// Slope of log error against log dt (temporal) or log10 error against P.
    pub slope: Option<f64>,
    pub correlation: Option<f64>,
    /// Number of points entering the fit.
    pub fitted: usize,
}

/// Fits log error against log dt over the largest steps whose consecutive
/// local slopes all exceed 2. Needs three such points.
pub fn temporal_fit(rows: &[SweepRow]) -> Option<(f64, f64, usize)> {
    let mut pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.error > 0.0).map(|r| (r.param.ln(), r.error.ln())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut start = pts.len().saturating_sub(1);
    while start > 0 {
        let (a, b) = (pts[start - 1], pts[start]);
        if (b.1 - a.1) / (b.0 - a.0) > 2.0 {
            start -= 1;
        } else {
            break;
        }
    }
    let seg = &pts[start..];
    if seg.len() < 3 {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = seg.iter().copied().unzip();
    let (_, slope, r) = linear_fit(&x, &y);
    Some((slope, r, seg.len()))
}

/// Fits log10 error against the degree over all points.
pub fn spatial_fit(rows: &[SweepRow]) -> Option<(f64, f64)> {
    if rows.len() < 2 || rows.iter().any(|r| !(r.error > 0.0)) {
        return None;
    }
    let x: Vec<f64> = rows.iter().map(|r| r.param).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.error.log10()).collect();
    let (_, slope, r) = linear_fit(&x, &y);
    Some((slope, r))
}

/// Runs `base` once per sweep point.
pub fn convergence_sweep(base: &RunConfig, sweep: &Sweep) -> Result<ConvergenceReport, RunError> {
    let points: Vec<(f64, RunConfig)> = match sweep {
        Sweep::Dt(list) => list
            .iter()
            .map(|&dt| {
                let mut c = base.clone();
                c.time.stepping = Stepping::Fixed(dt);
                (dt, c)
            })
            .collect(),
        Sweep::Degree(list) => list
            .iter()
            .map(|&p| {
                let mut c = base.clone();
                c.degree = p;
                (p as f64, c)
            })
            .collect(),
    };
    let mut rows = Vec::with_capacity(points.len());
    for (param, mut cfg) in points {
        if let Some(d) = &base.output.dir {
            cfg.output.dir = Some(d.join(format!("run_{param:e}")));
        }
        let s = run_case(&cfg)?;
        let error = s.final_error.unwrap_or(f64::NAN);
        info!("sweep point {param:e}: error {error:e}, {} elements", s.elements);
        rows.push(SweepRow { param, error, elements: s.elements, iterations: s.max_iterations, element_steps: s.element_steps });
    }
    let temporal = matches!(sweep, Sweep::Dt(_));
    let (slope, correlation, fitted) = if temporal {
        match temporal_fit(&rows) {
            Some((s, r, n)) => (Some(s), Some(r), n),
            None => (None, None, 0),
        }
    } else {
        match spatial_fit(&rows) {
            Some((s, r)) => (Some(s), Some(r), rows.len()),
            None => (None, None, 0),
        }
    };
    let report = ConvergenceReport { temporal, rows, slope, correlation, fitted };
    if let Some(d) = &base.output.dir {
        std::fs::create_dir_all(d).map_err(|e| RunError::io(d, e))?;
        let path = d.join("sweep.csv");
        let mut f = std::fs::File::create(&path).map_err(|e| RunError::io(&path, e))?;
        report.write_csv(&mut f).map_err(|e| RunError::io(&path, e))?;
    }
    Ok(report)
}

impl ConvergenceReport {
    /// `param,error,elements,iterations` rows followed by the fit as comments.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "param,error,elements,iterations")?;
        for r in &self.rows {
            writeln!(out, "{:e},{:e},{},{}", r.param, r.error, r.elements, r.iterations)?;
        }
        match (self.slope, self.correlation) {
            (Some(s), Some(r)) => writeln!(out, "# slope = {s:.6} correlation = {r:.6} points = {}", self.fitted),
            _ => writeln!(out, "# slope unavailable"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(param: f64, error: f64) -> SweepRow {
        SweepRow { param, error, elements: 1, iterations: 1, element_steps: 1 }
    }

    #[test]
    fn temporal_fit_drops_plateau() {
        let mut rows: Vec<SweepRow> = [4e-4, 2e-4, 1e-4, 5e-5].iter().map(|&dt: &f64| row(dt, 7.0 * dt.powi(3))).collect();
        rows.push(row(1e-5, 2e-12));
        rows.push(row(2.5e-5, 2.1e-12));
        let (slope, r, n) = temporal_fit(&rows).unwrap();
        assert!((slope - 3.0).abs() < 1e-9 && r > 0.999);
        assert_eq!(n, 4);
    }

    #[test]
    fn temporal_fit_needs_three_points() {
        let rows = vec![row(1e-3, 1e-6), row(5e-4, 1.25e-7), row(2.5e-4, 1.2e-7)];
        assert!(temporal_fit(&rows).is_none());
    }

    #[test]
    fn spatial_fit_recovers_rate() {
        let rows: Vec<SweepRow> = [4.0, 6.0, 8.0].iter().map(|&p: &f64| row(p, 10f64.powf(-0.5 * p))).collect();
        let (s, r) = spatial_fit(&rows).unwrap();
        assert!((s + 0.5).abs() < 1e-12 && (r + 1.0).abs() < 1e-12);
    }
}
