//! One simulation from configuration to final error.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{debug, info};

use super::config::{ControlMode, RunConfig, Startup, Stepping};
use super::RunError;
use crate::assembly::DofMap;
use crate::estimator::{tag_elements, write_tags_csv, Normalization};
use crate::mesh::Mesh;
use crate::operators::MeshOps;
use crate::problems::{FrontTracker, ProblemKind, ProblemSpec};
use crate::timestepping::{advance_step, advection_rates, courant_dt, Advection, StepParams, TimeState};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub elements: usize,
    pub iterations: usize,
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_error: Option<f64>,
    pub elements: usize,
    pub steps: usize,
    pub max_iterations: usize,
    pub total_iterations: usize,
    /// Sum over steps of the element count.
    pub element_steps: u64,
    pub trace: Vec<TraceRow>,
    /// `(time, element count)` at each configured snapshot.
    pub snapshots: Vec<(f64, usize)>,
    /// `(T_max, max slope, element count at the peak step)` for the Burgers front.
    pub front: Option<(f64, f64, usize)>,
    pub u0_norm: f64,
    pub ua0_norm: f64,
}

/// Euclidean norm over all components and local nodes.
pub fn nodal_norm(fields: &[Vec<f64>]) -> f64 {
    fields.iter().flat_map(|f| f.iter()).map(|v| v * v).sum::<f64>().sqrt()
}

/// `||u - u_a|| / ||u_a^0||` with the plain Euclidean nodal norm.
pub fn error_norm(u: &[Vec<f64>], ua: &[Vec<f64>], ua0_norm: f64) -> Result<f64, RunError> {
    if !(ua0_norm > 0.0) {
        return Err(RunError::ZeroNormalization);
    }
    let s: f64 = u.iter().zip(ua).flat_map(|(a, b)| a.iter().zip(b)).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s.sqrt() / ua0_norm)
}

/// Samples the analytic solution of every component at time `t`.
pub fn sample_exact(mesh: &Mesh, spec: &ProblemSpec, t: f64) -> Result<Vec<Vec<f64>>, RunError> {
    let ncomp = spec.components();
    let npe = mesh.nodes_per_element();
    let mut out = vec![Vec::with_capacity(mesh.n_local()); ncomp];
    for e in 0..mesh.len() {
        for i in 0..npe {
            let v = spec.exact(mesh.node_point(e, i), t)?;
            for (c, o) in out.iter_mut().enumerate() {
                o.push(v[c]);
            }
        }
    }
    Ok(out)
}

fn subdivide(v: &[f64], levels: u32) -> Vec<f64> {
    let parts = 1usize << levels;
    let mut out = vec![v[0]];
    for w in v.windows(2) {
        for k in 1..=parts {
            out.push(w[0] + (w[1] - w[0]) * k as f64 / parts as f64);
        }
    }
    out
}

/// Builds the starting mesh: the root grid, or for control runs the uniform
/// grid at the finest adaptive scale.
pub fn initial_mesh(cfg: &RunConfig) -> Result<Mesh, RunError> {
    let spec = &cfg.problem;
    let mut verts = cfg.root_vertices();
    let lmax = match cfg.control {
        ControlMode::Off => cfg.lmax,
        ControlMode::UniformFinest => {
            verts = verts.iter().map(|v| subdivide(v, cfg.lmax)).collect();
            0
        }
    };
    Ok(Mesh::from_root_grid(spec.dim, cfg.degree, lmax, &verts, spec.domain.periodic, spec.domain.dirichlet)?)
}

struct Discretization {
    dof: DofMap,
    ops: MeshOps,
    boundary: Vec<(usize, [f64; 3])>,
}

impl Discretization {
    fn new(mesh: &Mesh) -> Result<Self, RunError> {
        let dof = DofMap::build(mesh)?;
        let ops = MeshOps::new(mesh);
        let npe = mesh.nodes_per_element();
        let boundary = dof
            .dirichlet_local()
            .iter()
            .enumerate()
            .filter(|(_, &d)| d)
            .map(|(l, _)| (l, mesh.node_point(l / npe, l % npe)))
            .collect();
        Ok(Self { dof, ops, boundary })
    }

    fn boundary_data(&self, spec: &ProblemSpec, t: f64) -> Result<Option<Vec<Vec<f64>>>, RunError> {
        if self.boundary.is_empty() {
            return Ok(None);
        }
        let mut ub = vec![vec![0.0; self.dof.n_local()]; spec.components()];
        for &(l, x) in &self.boundary {
            for (c, v) in spec.exact(x, t)?.into_iter().enumerate() {
                ub[c][l] = v;
            }
        }
        Ok(Some(ub))
    }
}

fn velocity_fields(adv: &Advection, fields: &[Vec<f64>], dim: usize, nl: usize) -> Vec<Vec<f64>> {
    match adv {
        Advection::None => vec![],
        Advection::Constant(c) => (0..dim).map(|mu| vec![c[mu]; nl]).collect(),
        Advection::SelfField => fields.iter().take(dim).cloned().collect(),
    }
}

/// Runs one case. Artifacts go to `cfg.output.dir` when set.
pub fn run_case(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    let spec = &cfg.problem;
    let dim = spec.dim;
    let adv = spec.advection_kind();
    let adaptive = cfg.control == ControlMode::Off && cfg.lmax > 0;
    let out_dir = cfg.output.dir.as_deref();
    if let Some(d) = out_dir {
        std::fs::create_dir_all(d).map_err(|e| RunError::io(d, e))?;
        std::fs::write(d.join("config.txt"), cfg.render()).map_err(|e| RunError::io(d, e))?;
    }
    let mut tags_out = match (out_dir, cfg.output.tags) {
        (Some(d), true) => Some(BufWriter::new(File::create(d.join("tags.csv")).map_err(|e| RunError::io(d, e))?)),
        _ => None,
    };

    let t0 = spec.t0;
    let mut mesh = initial_mesh(cfg)?;
    let u0 = sample_exact(&mesh, spec, t0)?;
    let norm = Normalization { u0_norm: nodal_norm(&u0), length: spec.domain.longest(dim) };
    if !(norm.u0_norm > 0.0) {
        return Err(RunError::ZeroNormalization);
    }

    if adaptive {
        for pass in 0..=cfg.lmax {
            let ops = MeshOps::new(&mesh);
            let u = sample_exact(&mesh, spec, t0)?;
            let refs: Vec<&[f64]> = u.iter().map(Vec::as_slice).collect();
            let tags = tag_elements(&mesh, &ops, &refs, &cfg.estimator, &norm);
            if let Some(w) = tags_out.as_mut() {
                write_tags_csv(w, 0, &tags.metrics, pass == 0).map_err(|e| RunError::io(Path::new("tags.csv"), e))?;
            }
            let outcome = mesh.apply_dare(&mut [], &tags.refine, &BTreeSet::new())?;
            debug!("initial refinement pass {pass}: {} refined, {} elements", outcome.refined.len(), mesh.len());
            if !outcome.changed() {
                break;
            }
        }
    }
    let ua0 = sample_exact(&mesh, spec, t0)?;
    let ua0_norm = nodal_norm(&ua0);
    info!("{} start: {} elements, P = {}, ||u0|| = {:.6e}", spec.kind.name(), mesh.len(), cfg.degree, norm.u0_norm);

    let mut disc = Discretization::new(&mesh)?;
    let keep = cfg.time.bdf.max(cfg.time.ext);
    let mut snapshots: Vec<f64> = cfg.output.snapshots.iter().copied().filter(|&s| s > t0 && s < cfg.time.t_final).collect();
    snapshots.sort_by(f64::total_cmp);
    snapshots.push(cfg.time.t_final);
    let mut next_target = 0usize;

    let choose_dt = |mesh: &Mesh, fields: &[Vec<f64>], t: f64, target: f64| -> Result<f64, RunError> {
        let base = match cfg.time.stepping {
            Stepping::Fixed(dt) => dt,
            Stepping::Courant(kappa) => {
                let vel = velocity_fields(&adv, fields, dim, mesh.n_local());
                let refs: Vec<&[f64]> = vel.iter().map(Vec::as_slice).collect();
                courant_dt(mesh, &refs, spec.nu, kappa, cfg.time.courant_diffusion)?.0.min(cfg.time.dt_max)
            }
        };
        let left = target - t;
        Ok(if left <= base * (1.0 + 1e-9) { left } else { base })
    };

    let first_dt = choose_dt(&mesh, &ua0, t0, snapshots[0])?;
    let mut state = match cfg.time.startup {
        Startup::Analytic => {
            let mut st = TimeState { times: vec![], fields: vec![], rates: vec![], step: 0 };
            for m in 0..keep {
                let t = t0 - m as f64 * first_dt;
                let u = if m == 0 { ua0.clone() } else { sample_exact(&mesh, spec, t)? };
                st.rates.push(advection_rates(&disc.ops, &adv, &u));
                st.fields.push(u);
                st.times.push(t);
            }
            st
        }
        Startup::Bootstrap => {
            let rates = advection_rates(&disc.ops, &adv, &ua0);
            TimeState { times: vec![t0], fields: vec![ua0.clone()], rates: vec![rates], step: 0 }
        }
    };

    let params = StepParams { m_bdf: cfg.time.bdf, m_ext: cfg.time.ext, nu: spec.nu, advection: &adv, solver: cfg.solver };
    let track_front = spec.kind == ProblemKind::BurgersFront;
    let mut tracker = FrontTracker::new();
    let mut front_counts = Vec::new();
    if track_front {
        tracker.push(t0, max_abs(&disc.ops.derivative(0, &state.fields[0][0])?));
        front_counts.push(mesh.len());
    }
    let mut summary = RunSummary {
        final_error: None,
        elements: mesh.len(),
        steps: 0,
        max_iterations: 0,
        total_iterations: 0,
        element_steps: 0,
        trace: vec![],
        snapshots: vec![],
        front: None,
        u0_norm: norm.u0_norm,
        ua0_norm,
    };
    let mut trace_out = match (out_dir, cfg.output.trace) {
        (Some(d), true) => {
            let mut w = BufWriter::new(File::create(d.join("trace.csv")).map_err(|e| RunError::io(d, e))?);
            writeln!(w, "step,t,dt,elements,error").map_err(|e| RunError::io(d, e))?;
            Some(w)
        }
        _ => None,
    };

    while next_target < snapshots.len() {
        let t = state.time();
        let target = snapshots[next_target];
        let dt = if state.step == 0 && cfg.time.startup == Startup::Analytic { first_dt } else { choose_dt(&mesh, state.current(), t, target)? };
        let t_new = t + dt;
        let ub = disc.boundary_data(spec, t_new)?;
        let report = advance_step(&mut state, &disc.dof, &disc.ops, &params, dt, ub.as_deref())?;
        let landed = (state.time() - target).abs() <= 1e-12 * target.abs().max(1.0);
        if landed {
            state.times[0] = target;
        }
        summary.steps += 1;
        summary.max_iterations = summary.max_iterations.max(report.iterations);
        summary.total_iterations += report.iterations;
        summary.element_steps += mesh.len() as u64;

        if track_front {
            tracker.push(state.time(), max_abs(&disc.ops.derivative(0, &state.fields[0][0])?));
            front_counts.push(mesh.len());
        }
        let error = if cfg.output.trace_error && spec.has_exact() {
            let ua = sample_exact(&mesh, spec, state.time())?;
            Some(error_norm(state.current(), &ua, ua0_norm)?)
        } else {
            None
        };
        let row = TraceRow { step: state.step, t: state.time(), dt, elements: mesh.len(), iterations: report.iterations, error };
        debug!("step {} t {:.6} dt {:.3e} elements {} iterations {} error {:?}", row.step, row.t, row.dt, row.elements, row.iterations, row.error);
        if let Some(w) = trace_out.as_mut() {
            let e = row.error.map_or(String::new(), |e| format!("{e:e}"));
            writeln!(w, "{},{:?},{:e},{},{e}", row.step, row.t, row.dt, row.elements).map_err(|e| RunError::io(Path::new("trace.csv"), e))?;
        }
        summary.trace.push(row);

        if landed {
            if next_target + 1 < snapshots.len() {
                summary.snapshots.push((target, mesh.len()));
                if let Some(d) = out_dir {
                    write_fields(&d.join(format!("fields_{:06}.txt", state.step)), &mesh, state.current(), target)?;
                }
            }
            next_target += 1;
            if next_target == snapshots.len() {
                break;
            }
        }

        if adaptive && state.step % cfg.time.adapt_every == 0 {
            let refs: Vec<&[f64]> = state.current().iter().map(Vec::as_slice).collect();
            let tags = tag_elements(&mesh, &disc.ops, &refs, &cfg.estimator, &norm);
            if let Some(w) = tags_out.as_mut() {
                write_tags_csv(w, state.step, &tags.metrics, false).map_err(|e| RunError::io(Path::new("tags.csv"), e))?;
            }
            if !tags.refine.is_empty() || !tags.coarsen.is_empty() {
                let mut vecs = state.take_vectors();
                let outcome = mesh.apply_dare(&mut vecs, &tags.refine, &tags.coarsen)?;
                state.restore_vectors(vecs);
                if outcome.changed() {
                    disc = Discretization::new(&mesh)?;
                    if cfg.time.recompute_rates {
                        state.rates = state.fields.iter().map(|u| advection_rates(&disc.ops, &adv, u)).collect();
                    }
                    debug!("adapt at step {}: +{} -{} -> {} elements", state.step, outcome.refined.len(), outcome.coarsened.len(), mesh.len());
                }
            }
        }
    }
    if let Some(mut w) = trace_out {
        w.flush().map_err(|e| RunError::io(Path::new("trace.csv"), e))?;
    }
    if let Some(mut w) = tags_out {
        w.flush().map_err(|e| RunError::io(Path::new("tags.csv"), e))?;
    }

    summary.elements = mesh.len();
    if spec.has_exact() {
        let ua = sample_exact(&mesh, spec, state.time())?;
        summary.final_error = Some(error_norm(state.current(), &ua, ua0_norm)?);
    }
    if track_front {
        let samples = tracker.samples();
        let imax = (0..samples.len()).max_by(|&a, &b| samples[a].1.total_cmp(&samples[b].1)).unwrap_or(0);
        summary.front = tracker.peak().map(|(t, v)| (t, v, front_counts[imax]));
        if let Some(d) = out_dir {
            let mut w = BufWriter::new(File::create(d.join("front.csv")).map_err(|e| RunError::io(d, e))?);
            writeln!(w, "t,max_slope").map_err(|e| RunError::io(d, e))?;
            for (t, v) in samples {
                writeln!(w, "{t:?},{v:?}").map_err(|e| RunError::io(d, e))?;
            }
        }
    }
    if let Some(d) = out_dir {
        if cfg.output.dump_final {
            write_fields(&d.join("fields_final.txt"), &mesh, state.current(), state.time())?;
            std::fs::write(d.join("mesh_final.txt"), mesh.dump()).map_err(|e| RunError::io(d, e))?;
        }
    }
    info!(
        "{} done: t = {:.6}, {} steps, {} elements, error {:?}",
        spec.kind.name(),
        state.time(),
        summary.steps,
        summary.elements,
        summary.final_error
    );
    Ok(summary)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Field dump: a comment header, then one line per element and component
/// holding `root key component` and the nodal values in row-major order.
pub fn write_fields(path: &Path, mesh: &Mesh, fields: &[Vec<f64>], t: f64) -> Result<(), RunError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| RunError::io(path, e))?);
    let npe = mesh.nodes_per_element();
    let io = |e| RunError::io(path, e);
    writeln!(w, "# t = {t:?} degree = {} dim = {} components = {}", mesh.degree(), mesh.dim(), fields.len()).map_err(io)?;
    for (e, el) in mesh.elements().iter().enumerate() {
        for (c, f) in fields.iter().enumerate() {
            write!(w, "{} {} {c}", el.root(), el.key()).map_err(io)?;
            for v in &f[e * npe..(e + 1) * npe] {
                write!(w, " {v:e}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
