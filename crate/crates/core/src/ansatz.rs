//! Polynomial scaling functions, inversion to normal-mode frequencies and
//! synthesis of the trap waveform `alpha(t)`, `beta(t)`.
//!
//! The scaling functions `rho(s)`, `s = t / t_f`, satisfy
//! `rho(0) = 1`, `rho(1) = gamma` and have vanishing first to fourth
//! derivatives at both ends. The mode frequencies follow from the Ermakov
//! equation, `Omega^2 = Omega0^2 / rho^4 - rho'' / rho`, and the trap
//! coefficients follow from the normal-mode relations.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::potential::{self, PotentialParams};
use crate::schedule::{ControlSchedule, Kinematics};
use crate::units::{TrapInput, TrapSpec, Unit};

/// Default number of waveform samples.
pub const DEFAULT_SAMPLES: usize = 2001;

/// Polynomial order of a scaling-function ansatz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum AnsatzOrder {
    /// Fully determined by the boundary conditions.
    Nine,
    /// Two free coefficients `a10`, `a11`.
    Eleven,
    /// Three free coefficients `c10`, `c11`, `c12`.
    Twelve,
}

impl AnsatzOrder {
    pub fn free_count(self) -> usize {
        match self {
            AnsatzOrder::Nine => 0,
            AnsatzOrder::Eleven => 2,
            AnsatzOrder::Twelve => 3,
        }
    }

    pub fn degree(self) -> u32 {
        u32::from(self)
    }
}

impl From<AnsatzOrder> for u32 {
    fn from(o: AnsatzOrder) -> u32 {
        match o {
            AnsatzOrder::Nine => 9,
            AnsatzOrder::Eleven => 11,
            AnsatzOrder::Twelve => 12,
        }
    }
}

impl TryFrom<u32> for AnsatzOrder {
    type Error = Error;

    fn try_from(v: u32) -> Result<Self> {
        match v {
            9 => Ok(AnsatzOrder::Nine),
            11 => Ok(AnsatzOrder::Eleven),
            12 => Ok(AnsatzOrder::Twelve),
            other => Err(Error::InvalidInput(format!("ansatz order must be 9, 11 or 12, got {other}"))),
        }
    }
}

impl fmt::Display for AnsatzOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u32::from(*self))
    }
}

/// A scaling function `rho(s)` with its terminal value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoPolynomial {
    pub order: AnsatzOrder,
    pub gamma: f64,
    pub coefficients: Polynomial,
}

// Coefficients of s^5..s^9 multiplying (1 - gamma) and each free parameter.
const SMOOTHSTEP: [f64; 5] = [-126.0, 420.0, -540.0, 315.0, -70.0];
const FREE_10: [f64; 5] = [-1.0, 5.0, -10.0, 10.0, -5.0];
const FREE_11: [f64; 5] = [-5.0, 24.0, -45.0, 40.0, -15.0];
const FREE_12: [f64; 5] = [-15.0, 70.0, -126.0, 105.0, -35.0];

fn assemble(order: AnsatzOrder, gamma: f64, free: &[f64]) -> Result<RhoPolynomial> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    if free.len() != order.free_count() {
        return Err(Error::WrongParameterCount { expected: order.free_count(), got: free.len() });
    }
    if let Some(bad) = free.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("free parameter is not finite: {bad}")));
    }
    let mut c = vec![0.0; order.degree() as usize + 1];
    c[0] = 1.0;
    let g = 1.0 - gamma;
    let tables = [FREE_10, FREE_11, FREE_12];
    for k in 0..5 {
        let mut v = SMOOTHSTEP[k] * g;
        for (p, table) in free.iter().zip(tables.iter()) {
            v += table[k] * p;
        }
        c[5 + k] = v;
    }
    for (i, p) in free.iter().enumerate() {
        c[10 + i] = *p;
    }
    Ok(RhoPolynomial { order, gamma, coefficients: Polynomial::new(c) })
}

/// Ninth-order scaling function, fully fixed by the ten boundary conditions.
pub fn build_rho_minus(gamma_minus: f64) -> Result<RhoPolynomial> {
    assemble(AnsatzOrder::Nine, gamma_minus, &[])
}

/// Stretch-mode scaling function of order 11 (`[a10, a11]`) or 12
/// (`[c10, c11, c12]`). Order 9 takes no free parameters.
pub fn build_rho_plus(gamma_plus: f64, free_params: &[f64], order: AnsatzOrder) -> Result<RhoPolynomial> {
    assemble(order, gamma_plus, free_params)
}

impl RhoPolynomial {
    pub fn coefficients(&self) -> &[f64] {
        self.coefficients.coeffs()
    }

    /// Value and derivatives 1..4 with respect to `s`.
    #[inline]
    pub fn eval_s(&self, s: f64) -> [f64; 5] {
        self.coefficients.eval_derivs(s)
    }

    /// Value and derivatives 1..4 with respect to `t = s * tau_f`.
    #[inline]
    pub fn eval_t(&self, t: f64, tau_f: f64) -> [f64; 5] {
        let mut r = self.eval_s(t / tau_f);
        let inv = 1.0 / tau_f;
        let mut scale = 1.0;
        for v in r.iter_mut().skip(1) {
            scale *= inv;
            *v *= scale;
        }
        r
    }

    /// The ten boundary-condition residuals in `s` units:
    /// `rho(0) - 1`, `rho^(k)(0)` for k = 1..4, `rho(1) - gamma`, `rho^(k)(1)`.
    pub fn boundary_residuals(&self) -> [f64; 10] {
        let p = &self.coefficients;
        let mut out = [0.0; 10];
        for (end, base) in [(0.0, 0usize), (1.0, 5usize)] {
            for k in 0..5 {
                out[base + k] = p.eval_derivative_compensated(k, end);
            }
        }
        out[0] -= 1.0;
        out[5] -= self.gamma;
        out
    }

    /// Smallest value on a uniform grid of `n` points over `[0, 1]`.
    pub fn min_on_grid(&self, n: usize) -> (f64, f64) {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                (self.coefficients.eval(s), s)
            })
            .fold((f64::INFINITY, 0.0), |acc, v| if v.0 < acc.0 { v } else { acc })
    }
}

/// `Omega^2` and its first two time derivatives from the time-jet of `rho`.
#[inline]
pub fn omega2_jet(r: &[f64; 5], omega0_sq: f64) -> [f64; 3] {
    let (p, p1, p2, p3, p4) = (r[0], r[1], r[2], r[3], r[4]);
    let inv = 1.0 / p;
    let inv2 = inv * inv;
    let inv4 = inv2 * inv2;
    let inv5 = inv4 * inv;
    let inv6 = inv5 * inv;
    let f0 = p2 * inv;
    let f1 = p3 * inv - p2 * p1 * inv2;
    let f2 = p4 * inv - 2.0 * p3 * p1 * inv2 - p2 * p2 * inv2 + 2.0 * p2 * p1 * p1 * inv2 * inv;
    [
        omega0_sq * inv4 - f0,
        -4.0 * omega0_sq * inv5 * p1 - f1,
        omega0_sq * (20.0 * inv6 * p1 * p1 - 4.0 * inv5 * p2) - f2,
    ]
}

/// `Omega^2` at `s` for a mode with initial frequency `omega0_mode`,
/// protocol duration `tau_f` (internal time units). May be negative.
pub fn omega_from_rho(rho: &RhoPolynomial, omega0_mode: f64, tau_f: f64, s: f64) -> Result<f64> {
    let r = rho.eval_t(s * tau_f, tau_f);
    if !(r[0] > 0.0) {
        return Err(Error::NonPositiveRho { rho: r[0], s });
    }
    Ok(omega0_mode * omega0_mode / r[0].powi(4) - r[2] / r[0])
}

/// Endpoint normal-mode frequencies (internal units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endpoints {
    pub omega_minus_initial: f64,
    pub omega_plus_initial: f64,
    pub omega_minus_final: f64,
    pub omega_plus_final: f64,
}

impl Endpoints {
    /// Single harmonic well at `t = 0`; at `t_f` the centre-of-mass frequency
    /// is back at `omega0` and the separation is `expansion * d0`.
    pub fn for_expansion(trap: &TrapSpec, expansion_factor: f64) -> Result<Self> {
        if !(expansion_factor > 0.0 && expansion_factor.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "expansion factor must be positive, got {expansion_factor}"
            )));
        }
        let c = trap.coulomb_internal();
        let d0 = potential::equilibrium_distance(trap.alpha0_internal(), 0.0, c)?;
        let start = potential::normal_modes(trap.alpha0_internal(), 0.0, d0, c)?;
        let df = expansion_factor * d0;
        let om_minus_final = 1.0;
        let om_plus_final = (om_minus_final * om_minus_final + 4.0 * c / df.powi(3)).sqrt();
        Ok(Endpoints {
            omega_minus_initial: start.omega_minus,
            omega_plus_initial: start.omega_plus,
            omega_minus_final: om_minus_final,
            omega_plus_final: om_plus_final,
        })
    }

    pub fn gamma_minus(&self) -> f64 {
        (self.omega_minus_initial / self.omega_minus_final).sqrt()
    }

    pub fn gamma_plus(&self) -> f64 {
        (self.omega_plus_initial / self.omega_plus_final).sqrt()
    }
}

/// Everything about the designed protocol at one instant (internal units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignPoint {
    pub t: f64,
    pub rho_minus: [f64; 5],
    pub rho_plus: [f64; 5],
    /// `Omega_-^2` and its first two time derivatives.
    pub omega2_minus: [f64; 3],
    pub omega2_plus: [f64; 3],
    pub separation: Kinematics,
    pub alpha: f64,
    pub alpha_dot: f64,
    pub beta: f64,
    pub beta_dot: f64,
}

/// A complete protocol: trap, duration, both scaling functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolDesign {
    pub trap: TrapSpec,
    /// Duration in seconds.
    pub t_f: f64,
    /// Duration in internal time units.
    pub tau_f: f64,
    pub expansion_factor: f64,
    pub endpoints: Endpoints,
    pub rho_minus: RhoPolynomial,
    pub rho_plus: RhoPolynomial,
    coulomb: f64,
}

impl ProtocolDesign {
    pub fn new(
        trap: &TrapSpec,
        t_f: f64,
        expansion_factor: f64,
        order: AnsatzOrder,
        free_params: &[f64],
    ) -> Result<Self> {
        if !(t_f > 0.0 && t_f.is_finite()) {
            return Err(Error::InvalidInput(format!("t_f must be positive, got {t_f}")));
        }
        let endpoints = Endpoints::for_expansion(trap, expansion_factor)?;
        let rho_minus = build_rho_minus(endpoints.gamma_minus())?;
        let rho_plus = build_rho_plus(endpoints.gamma_plus(), free_params, order)?;
        Ok(ProtocolDesign {
            trap: trap.clone(),
            t_f,
            tau_f: trap.from_si(t_f, Unit::Time),
            expansion_factor,
            endpoints,
            rho_minus,
            rho_plus,
            coulomb: trap.coulomb_internal(),
        })
    }

    /// Same duration and trap, different free parameters.
    pub fn with_free_params(&self, order: AnsatzOrder, free_params: &[f64]) -> Result<Self> {
        let rho_plus = build_rho_plus(self.endpoints.gamma_plus(), free_params, order)?;
        Ok(ProtocolDesign { rho_plus, ..self.clone() })
    }

    pub fn order(&self) -> AnsatzOrder {
        self.rho_plus.order
    }

    pub fn free_params(&self) -> Vec<f64> {
        self.rho_plus.coefficients()[10..].to_vec()
    }

    pub fn coulomb(&self) -> f64 {
        self.coulomb
    }

    /// Initial separation (internal).
    pub fn d_initial(&self) -> f64 {
        (4.0 * self.coulomb
            / (self.endpoints.omega_plus_initial.powi(2) - self.endpoints.omega_minus_initial.powi(2)))
        .cbrt()
    }

    /// Stretch-mode frequency and separation acceleration, the only inputs of
    /// the centre equation. Cheaper than [`Self::point`].
    #[inline]
    pub fn drive(&self, t: f64) -> Result<(f64, f64)> {
        let rp = self.rho_plus.eval_t(t, self.tau_f);
        let rm = self.rho_minus.eval_t(t, self.tau_f);
        if !(rp[0] > 0.0) {
            return Err(Error::NonPositiveRho { rho: rp[0], s: t / self.tau_f });
        }
        if !(rm[0] > 0.0) {
            return Err(Error::NonPositiveRho { rho: rm[0], s: t / self.tau_f });
        }
        let wp = omega2_jet(&rp, self.endpoints.omega_plus_initial.powi(2));
        let wm = omega2_jet(&rm, self.endpoints.omega_minus_initial.powi(2));
        let gap = wp[0] - wm[0];
        if !(gap > 0.0) {
            return Err(Error::GapClosed { t, gap });
        }
        let g1 = (wp[1] - wm[1]) / gap;
        let g2 = (wp[2] - wm[2]) / gap;
        let d = (4.0 * self.coulomb / gap).cbrt();
        Ok((wp[0], d * (4.0 / 9.0 * g1 * g1 - g2 / 3.0)))
    }

    /// Full state of the design at internal time `t`.
    pub fn point(&self, t: f64) -> Result<DesignPoint> {
        let s = t / self.tau_f;
        let rp = self.rho_plus.eval_t(t, self.tau_f);
        let rm = self.rho_minus.eval_t(t, self.tau_f);
        if !(rp[0] > 0.0) {
            return Err(Error::NonPositiveRho { rho: rp[0], s });
        }
        if !(rm[0] > 0.0) {
            return Err(Error::NonPositiveRho { rho: rm[0], s });
        }
        let wp = omega2_jet(&rp, self.endpoints.omega_plus_initial.powi(2));
        let wm = omega2_jet(&rm, self.endpoints.omega_minus_initial.powi(2));
        let gap = wp[0] - wm[0];
        if !(gap > 0.0) {
            return Err(Error::GapClosed { t, gap });
        }
        let g1 = (wp[1] - wm[1]) / gap;
        let g2 = (wp[2] - wm[2]) / gap;
        let d = (4.0 * self.coulomb / gap).cbrt();
        let d_dot = -d * g1 / 3.0;
        let d_ddot = d * (4.0 / 9.0 * g1 * g1 - g2 / 3.0);
        let alpha = (3.0 * wp[0] - 5.0 * wm[0]) / 8.0;
        let alpha_dot = (3.0 * wp[1] - 5.0 * wm[1]) / 8.0;
        let beta = potential::beta_from_equilibrium(alpha, d, self.coulomb);
        let d2 = d * d;
        let beta_dot = -10.0 * self.coulomb * d_dot / (d2 * d2 * d2) - 2.0 * alpha_dot / d2
            + 4.0 * alpha * d_dot / (d2 * d);
        Ok(DesignPoint {
            t,
            rho_minus: rm,
            rho_plus: rp,
            omega2_minus: wm,
            omega2_plus: wp,
            separation: Kinematics { d, d_dot, d_ddot },
            alpha,
            alpha_dot,
            beta,
            beta_dot,
        })
    }

    pub fn descriptor(&self) -> DesignDescriptor {
        let to_si_freq = |w: f64| w * self.trap.omega0;
        DesignDescriptor {
            trap: self.trap.input().clone(),
            t_f_s: self.t_f,
            expansion_factor: self.expansion_factor,
            order: self.order(),
            free_params: self.free_params(),
            gamma_minus: self.rho_minus.gamma,
            gamma_plus: self.rho_plus.gamma,
            rho_minus_coefficients: self.rho_minus.coefficients().to_vec(),
            rho_plus_coefficients: self.rho_plus.coefficients().to_vec(),
            omega_minus_initial_rad_s: to_si_freq(self.endpoints.omega_minus_initial),
            omega_plus_initial_rad_s: to_si_freq(self.endpoints.omega_plus_initial),
            omega_minus_final_rad_s: to_si_freq(self.endpoints.omega_minus_final),
            omega_plus_final_rad_s: to_si_freq(self.endpoints.omega_plus_final),
            d_initial_m: self.trap.to_si(self.d_initial(), Unit::Length),
        }
    }

    pub fn from_descriptor(desc: &DesignDescriptor) -> Result<Self> {
        let trap = desc.trap.build()?;
        ProtocolDesign::new(&trap, desc.t_f_s, desc.expansion_factor, desc.order, &desc.free_params)
    }
}

impl ControlSchedule for ProtocolDesign {
    fn duration(&self) -> f64 {
        self.tau_f
    }

    fn params(&self, t: f64) -> PotentialParams {
        match self.point(t) {
            Ok(p) => PotentialParams::new(p.alpha, p.beta),
            Err(_) => PotentialParams::new(f64::NAN, f64::NAN),
        }
    }

    fn separation(&self, t: f64) -> Kinematics {
        match self.point(t) {
            Ok(p) => p.separation,
            Err(_) => Kinematics { d: f64::NAN, d_dot: f64::NAN, d_ddot: f64::NAN },
        }
    }
}

/// JSON form of a design; replaying it rebuilds an identical protocol.
/// The coefficient and frequency fields are informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDescriptor {
    pub trap: TrapInput,
    pub t_f_s: f64,
    pub expansion_factor: f64,
    pub order: AnsatzOrder,
    pub free_params: Vec<f64>,
    pub gamma_minus: f64,
    pub gamma_plus: f64,
    pub rho_minus_coefficients: Vec<f64>,
    pub rho_plus_coefficients: Vec<f64>,
    pub omega_minus_initial_rad_s: f64,
    pub omega_plus_initial_rad_s: f64,
    pub omega_minus_final_rad_s: f64,
    pub omega_plus_final_rad_s: f64,
    pub d_initial_m: f64,
}

/// A sampled protocol. Values are internal; SI conversion happens on export.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub trap: TrapSpec,
    pub tau_f: f64,
    pub t: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_dot: Vec<f64>,
    pub beta: Vec<f64>,
    pub beta_dot: Vec<f64>,
    pub d: Vec<f64>,
    pub d_dot: Vec<f64>,
    pub d_ddot: Vec<f64>,
    pub omega2_minus: Vec<f64>,
    pub omega2_plus: Vec<f64>,
    pub source: Option<DesignDescriptor>,
}

/// Summary numbers printed after a design run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformDiagnostics {
    pub beta_max: f64,
    pub beta_max_si: f64,
    pub t_beta_max_s: f64,
    pub t_alpha_zero_s: Option<f64>,
    pub beta_min: f64,
    pub min_omega2_minus: f64,
    pub min_omega2_plus: f64,
}

/// Sample a design on a uniform grid including both endpoints.
pub fn synthesize_waveform(design: &ProtocolDesign, n_samples: usize) -> Result<Waveform> {
    if n_samples < 1001 {
        return Err(Error::InvalidInput(format!("need at least 1001 samples, got {n_samples}")));
    }
    let mut w = Waveform {
        trap: design.trap.clone(),
        tau_f: design.tau_f,
        t: Vec::with_capacity(n_samples),
        alpha: Vec::with_capacity(n_samples),
        alpha_dot: Vec::with_capacity(n_samples),
        beta: Vec::with_capacity(n_samples),
        beta_dot: Vec::with_capacity(n_samples),
        d: Vec::with_capacity(n_samples),
        d_dot: Vec::with_capacity(n_samples),
        d_ddot: Vec::with_capacity(n_samples),
        omega2_minus: Vec::with_capacity(n_samples),
        omega2_plus: Vec::with_capacity(n_samples),
        source: Some(design.descriptor()),
    };
    let last = n_samples - 1;
    for i in 0..n_samples {
        let t = if i == last { design.tau_f } else { design.tau_f * i as f64 / last as f64 };
        let p = design.point(t)?;
        w.t.push(t);
        w.alpha.push(p.alpha);
        w.alpha_dot.push(p.alpha_dot);
        w.beta.push(p.beta);
        w.beta_dot.push(p.beta_dot);
        w.d.push(p.separation.d);
        w.d_dot.push(p.separation.d_dot);
        w.d_ddot.push(p.separation.d_ddot);
        w.omega2_minus.push(p.omega2_minus[0]);
        w.omega2_plus.push(p.omega2_plus[0]);
    }
    Ok(w)
}

fn signed_sqrt(x: f64) -> f64 {
    x.signum() * x.abs().sqrt()
}

impl Waveform {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn diagnostics(&self) -> WaveformDiagnostics {
        let (imax, beta_max) = self
            .beta
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &b)| if b > acc.1 { (i, b) } else { acc });
        let t_alpha_zero = self.alpha.windows(2).zip(self.t.windows(2)).find_map(|(a, t)| {
            if a[0] > 0.0 && a[1] <= 0.0 {
                Some(t[0] + (t[1] - t[0]) * a[0] / (a[0] - a[1]))
            } else {
                None
            }
        });
        let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        WaveformDiagnostics {
            beta_max,
            beta_max_si: self.trap.to_si(beta_max, Unit::Beta),
            t_beta_max_s: self.trap.to_si(self.t[imax], Unit::Time),
            t_alpha_zero_s: t_alpha_zero.map(|t| self.trap.to_si(t, Unit::Time)),
            beta_min: min(&self.beta),
            min_omega2_minus: min(&self.omega2_minus),
            min_omega2_plus: min(&self.omega2_plus),
        }
    }

    /// CSV with header `t_s,alpha_si,beta_si,d_si,omega_minus,omega_plus`.
    /// Frequencies are in rad/s; a negative entry is `-sqrt(|Omega^2|)`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t_s", "alpha_si", "beta_si", "d_si", "omega_minus", "omega_plus"])?;
        let tr = &self.trap;
        for i in 0..self.len() {
            wtr.write_record(&[
                format!("{:.12e}", tr.to_si(self.t[i], Unit::Time)),
                format!("{:.12e}", tr.to_si(self.alpha[i], Unit::Alpha)),
                format!("{:.12e}", tr.to_si(self.beta[i], Unit::Beta)),
                format!("{:.12e}", tr.to_si(self.d[i], Unit::Length)),
                format!("{:.12e}", signed_sqrt(self.omega2_minus[i]) * tr.omega0),
                format!("{:.12e}", signed_sqrt(self.omega2_plus[i]) * tr.omega0),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    #[inline]
    fn locate(&self, t: f64) -> (usize, f64, f64) {
        let n = self.t.len();
        let h = self.tau_f / (n - 1) as f64;
        let i = ((t / h).floor().max(0.0) as usize).min(n - 2);
        let h = self.t[i + 1] - self.t[i];
        (i, ((t - self.t[i]) / h).clamp(0.0, 1.0), h)
    }
}

/// Cubic Hermite interpolation on one interval.
#[inline]
fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, u: f64, h: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * y0
        + (u3 - 2.0 * u2 + u) * h * m0
        + (-2.0 * u3 + 3.0 * u2) * y1
        + (u3 - u2) * h * m1
}

/// Derivative of [`hermite`] with respect to time.
#[inline]
fn hermite_slope(y0: f64, y1: f64, m0: f64, m1: f64, u: f64, h: f64) -> f64 {
    let u2 = u * u;
    ((6.0 * u2 - 6.0 * u) * y0
        + (3.0 * u2 - 4.0 * u + 1.0) * h * m0
        + (-6.0 * u2 + 6.0 * u) * y1
        + (3.0 * u2 - 2.0 * u) * h * m1)
        / h
}

impl ControlSchedule for Waveform {
    fn duration(&self) -> f64 {
        self.tau_f
    }

    fn params(&self, t: f64) -> PotentialParams {
        let (i, u, h) = self.locate(t);
        PotentialParams::new(
            hermite(self.alpha[i], self.alpha[i + 1], self.alpha_dot[i], self.alpha_dot[i + 1], u, h),
            hermite(self.beta[i], self.beta[i + 1], self.beta_dot[i], self.beta_dot[i + 1], u, h),
        )
    }

    fn separation(&self, t: f64) -> Kinematics {
        let (i, u, h) = self.locate(t);
        Kinematics {
            d: hermite(self.d[i], self.d[i + 1], self.d_dot[i], self.d_dot[i + 1], u, h),
            d_dot: hermite(self.d_dot[i], self.d_dot[i + 1], self.d_ddot[i], self.d_ddot[i + 1], u, h),
            // derivative of the interpolated velocity, so d_dot and d_ddot stay consistent
            d_ddot: hermite_slope(self.d_dot[i], self.d_dot[i + 1], self.d_ddot[i], self.d_ddot[i + 1], u, h),
        }
    }
}
