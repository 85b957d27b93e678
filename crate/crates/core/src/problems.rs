//! Analytic test problems: periodized Gaussian (heat and linear advection),
//! the stationary Burgers front, and the radial N-wave.

use thiserror::Error;

use crate::mesh::Domain;
use crate::timestepping::Advection;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("Gaussian width vanishes at t = {t} (singular time {singular})")]
    SingularTime { t: f64, singular: f64 },
    #[error("N-wave requires t > 0, got {0}")]
    NonPositiveTime(f64),
    #[error("invalid parameter {name} = {value}")]
    Parameter { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    Heat,
    Advection,
    BurgersFront,
    NWave,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Heat => "heat",
            ProblemKind::Advection => "advection",
            ProblemKind::BurgersFront => "burgers_front",
            ProblemKind::NWave => "nwave",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "heat" => Some(ProblemKind::Heat),
            "advection" | "linear_advection" => Some(ProblemKind::Advection),
            "burgers_front" | "burgers" => Some(ProblemKind::BurgersFront),
            "nwave" | "n_wave" => Some(ProblemKind::NWave),
            _ => None,
        }
    }
}

/// Initial Gaussian e-folding width.
pub const SIGMA0: f64 = std::f64::consts::SQRT_2 / 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub dim: usize,
    pub nu: f64,
    pub sigma0: f64,
    pub x0: [f64; 3],
    /// Constant advecting velocity of the linear problems.
    pub c: [f64; 3],
    pub u2hat: f64,
    /// Unit front direction of the Burgers front.
    pub k: [f64; 3],
    pub a: f64,
    pub t0: f64,
    pub domain: Domain,
}

impl ProblemSpec {
    pub fn heat(dim: usize) -> Self {
        Self {
            kind: ProblemKind::Heat,
            dim,
            nu: 0.1,
            sigma0: SIGMA0,
            x0: centre(dim),
            c: [0.0; 3],
            u2hat: 0.0,
            k: [1.0, 0.0, 0.0],
            a: 0.0,
            t0: 0.0,
            domain: Domain::unit(dim, true, false),
        }
    }

    pub fn advection(dim: usize) -> Self {
        Self { kind: ProblemKind::Advection, nu: 1e-4, c: [1.0, 0.0, 0.0], ..Self::heat(dim) }
    }

    /// Planar front from `-sin(pi x)` on `x in [-1, 1]` with `nu = 0.01/pi`, one
    /// square element row thick in the transverse direction.
    pub fn burgers_front() -> Self {
        let mut domain = Domain::unit(2, true, false);
        domain.lower = [-1.0, 0.0, 0.0];
        domain.upper = [1.0, 0.5, 0.0];
        Self {
            kind: ProblemKind::BurgersFront,
            dim: 2,
            nu: 0.01 / std::f64::consts::PI,
            sigma0: SIGMA0,
            x0: [0.0; 3],
            c: [0.0; 3],
            u2hat: 0.0,
            k: [1.0, 0.0, 0.0],
            a: 0.0,
            t0: 0.0,
            domain,
        }
    }

    pub fn nwave() -> Self {
        Self {
            kind: ProblemKind::NWave,
            dim: 2,
            nu: 5e-3,
            sigma0: SIGMA0,
            x0: centre(2),
            c: [0.0; 3],
            u2hat: 0.0,
            k: [1.0, 0.0, 0.0],
            a: 1e4,
            t0: 5e-2,
            domain: Domain::unit(2, false, true),
        }
    }

    pub fn default_for(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Heat => Self::heat(2),
            ProblemKind::Advection => Self::advection(2),
            ProblemKind::BurgersFront => Self::burgers_front(),
            ProblemKind::NWave => Self::nwave(),
        }
    }

    /// Number of solved components. The linear problems advance one scalar,
    /// since every velocity component obeys the same equation.
    pub fn components(&self) -> usize {
        match self.kind {
            ProblemKind::Heat | ProblemKind::Advection => 1,
            ProblemKind::BurgersFront | ProblemKind::NWave => self.dim,
        }
    }

    pub fn advection_kind(&self) -> Advection {
        match self.kind {
            ProblemKind::Heat => Advection::None,
            ProblemKind::Advection => Advection::Constant(self.c),
            ProblemKind::BurgersFront | ProblemKind::NWave => Advection::SelfField,
        }
    }

    pub fn has_exact(&self) -> bool {
        self.kind != ProblemKind::BurgersFront
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if !(self.nu >= 0.0) {
            return Err(ProblemError::Parameter { name: "nu", value: self.nu });
        }
        match self.kind {
            ProblemKind::Heat | ProblemKind::Advection if !(self.sigma0 > 0.0) => {
                Err(ProblemError::Parameter { name: "sigma0", value: self.sigma0 })
            }
            ProblemKind::NWave if !(self.a > 0.0) => Err(ProblemError::Parameter { name: "a", value: self.a }),
            ProblemKind::NWave if !(self.t0 > 0.0) => Err(ProblemError::Parameter { name: "t0", value: self.t0 }),
            _ => Ok(()),
        }
    }

    /// Analytic solution, one value per solved component. For the Burgers
    /// front only `t = t0` is available.
    pub fn exact(&self, x: [f64; 3], t: f64) -> Result<Vec<f64>, ProblemError> {
        match self.kind {
            ProblemKind::Heat | ProblemKind::Advection => Ok(vec![gaussian_solution(self, x, t)?]),
            ProblemKind::NWave => Ok(nwave_solution(self, x, t)?[..self.dim].to_vec()),
            ProblemKind::BurgersFront => Ok(burgers_front_init(self, x)[..self.dim].to_vec()),
        }
    }

    pub fn initial(&self, x: [f64; 3]) -> Result<Vec<f64>, ProblemError> {
        self.exact(x, self.t0)
    }
}

fn centre(dim: usize) -> [f64; 3] {
    let mut x = [0.0; 3];
    x.iter_mut().take(dim).for_each(|v| *v = 0.5);
    x
}

/// `sum_i exp(-((s + i) / sigma)^2)` truncated once new terms fall below
/// `1e-18` of the partial sum.
fn image_sum(s: f64, sigma: f64) -> f64 {
    let term = |i: f64| (-((s + i) / sigma).powi(2)).exp();
    let i0 = -s.round();
    let mut sum = term(i0);
    let mut k = 1.0;
    loop {
        let up = term(i0 + k);
        let down = term(i0 - k);
        sum += up + down;
        if up.max(down) < 1e-18 * sum || k > 1e6 {
            break;
        }
        k += 1.0;
    }
    sum
}

/// Periodized Gaussian of unit initial amplitude, advected by the constant
/// velocity `c` and diffusing with `nu`.
pub fn gaussian_solution(spec: &ProblemSpec, x: [f64; 3], t: f64) -> Result<f64, ProblemError> {
    let s2 = spec.sigma0 * spec.sigma0 + 4.0 * spec.nu * t;
    if s2 <= 0.0 {
        let singular = if spec.nu > 0.0 { -spec.sigma0 * spec.sigma0 / (4.0 * spec.nu) } else { f64::NEG_INFINITY };
        return Err(ProblemError::SingularTime { t, singular });
    }
    let sigma = s2.sqrt();
    let mut v = (spec.sigma0 / sigma).powi(spec.dim as i32);
    for mu in 0..spec.dim {
        v *= image_sum(x[mu] - spec.x0[mu] - spec.c[mu] * t, sigma);
    }
    Ok(v)
}

/// `k q(k · x)` with `q(y) = -sin(pi y) + u2hat sin(2 pi y)`.
pub fn burgers_front_init(spec: &ProblemSpec, x: [f64; 3]) -> [f64; 3] {
    use std::f64::consts::PI;
    let y: f64 = (0..spec.dim).map(|mu| spec.k[mu] * x[mu]).sum();
    let q = -(PI * y).sin() + spec.u2hat * (2.0 * PI * y).sin();
    let mut u = [0.0; 3];
    for mu in 0..spec.dim {
        u[mu] = spec.k[mu] * q;
    }
    u
}

/// Radial N-wave `(x - x0)/t * a / (a + t exp(r^2 / 4 nu t))`.
pub fn nwave_solution(spec: &ProblemSpec, x: [f64; 3], t: f64) -> Result<[f64; 3], ProblemError> {
    if !(t > 0.0) {
        return Err(ProblemError::NonPositiveTime(t));
    }
    let r2: f64 = (0..spec.dim).map(|mu| (x[mu] - spec.x0[mu]).powi(2)).sum();
    let z = r2 / (4.0 * spec.nu * t) + (t / spec.a).ln();
    let factor = if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    };
    let mut u = [0.0; 3];
    for mu in 0..spec.dim {
        u[mu] = (x[mu] - spec.x0[mu]) / t * factor;
    }
    Ok(u)
}

/// Heat-equation potential whose logarithmic gradient gives the N-wave.
pub fn nwave_potential(spec: &ProblemSpec, x: [f64; 3], t: f64) -> f64 {
    let r2: f64 = (0..spec.dim).map(|mu| (x[mu] - spec.x0[mu]).powi(2)).sum();
    1.0 + spec.a / t * (-r2 / (4.0 * spec.nu * t)).exp()
}

/// Running record of the maximum front slope over time.
#[derive(Debug, Clone, Default)]
pub struct FrontTracker {
    samples: Vec<(f64, f64)>,
}

impl FrontTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, slope: f64) {
        self.samples.push((t, slope));
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// `(T_max, max slope)` with the peak refined by the parabola through the
    /// discrete maximum and its two neighbours.
    pub fn peak(&self) -> Option<(f64, f64)> {
        let (i, &(t, v)) = self.samples.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?;
        if i == 0 || i + 1 == self.samples.len() {
            return Some((t, v));
        }
        let (t0, v0) = self.samples[i - 1];
        let (t2, v2) = self.samples[i + 1];
        Some(parabola_vertex([t0, t, t2], [v0, v, v2]).unwrap_or((t, v)))
    }
}

/// Vertex of the parabola through three points with distinct abscissae.
pub fn parabola_vertex(t: [f64; 3], v: [f64; 3]) -> Option<(f64, f64)> {
    let d01 = (v[1] - v[0]) / (t[1] - t[0]);
    let d12 = (v[2] - v[1]) / (t[2] - t[1]);
    let a = (d12 - d01) / (t[2] - t[0]);
    if !(a < 0.0) {
        return None;
    }
    let b = d01 - a * (t[0] + t[1]);
    let tv = -b / (2.0 * a);
    let vv = v[1] + d01 * (tv - t[1]) + a * (tv - t[0]) * (tv - t[1]);
    Some((tv, vv))
}
