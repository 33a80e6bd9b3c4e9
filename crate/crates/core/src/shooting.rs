//! Stretch-mode centre equation, normal-mode energies and the shooting
//! search for the free ansatz coefficients.
//!
//! For each trial set of free coefficients the driven oscillator
//! `x'' + Omega+^2 x = -sqrt(m/2) d''` is integrated from rest, and the
//! stretch-mode energy at `t_f` is minimized with Nelder-Mead. At the
//! minimum `x(t_f) = x'(t_f) = 0` and the protocol leaves the harmonic
//! stretch mode unexcited.

use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzOrder, ProtocolDesign, Waveform};
use crate::error::{Error, Result};
use crate::nelder_mead::{self, NelderMeadOptions};
use crate::perturbation::{self, StretchState};
use crate::schedule::ControlSchedule;
use crate::units::TrapSpec;

/// Fixed RK4 steps across the protocol for the centre equation.
pub const DEFAULT_CENTER_STEPS: usize = 20_000;

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Source of `Omega+^2(t)` and `d''(t)` for the centre equation.
pub trait StretchDrive {
    fn duration(&self) -> f64;
    fn drive(&self, t: f64) -> Result<(f64, f64)>;
}

impl StretchDrive for ProtocolDesign {
    fn duration(&self) -> f64 {
        self.tau_f
    }

    #[inline]
    fn drive(&self, t: f64) -> Result<(f64, f64)> {
        ProtocolDesign::drive(self, t)
    }
}

/// Sampled waveforms interpolate linearly in `Omega+^2` and through the
/// Hermite-consistent acceleration; accuracy is limited by the sampling.
impl StretchDrive for Waveform {
    fn duration(&self) -> f64 {
        self.tau_f
    }

    fn drive(&self, t: f64) -> Result<(f64, f64)> {
        let n = self.t.len();
        let h = self.tau_f / (n - 1) as f64;
        let i = ((t / h).floor().max(0.0) as usize).min(n - 2);
        let u = ((t - self.t[i]) / (self.t[i + 1] - self.t[i])).clamp(0.0, 1.0);
        let w = self.omega2_plus[i] + u * (self.omega2_plus[i + 1] - self.omega2_plus[i]);
        Ok((w, self.separation(t).d_ddot))
    }
}

#[inline]
fn rk4_center<D: StretchDrive + ?Sized>(drive: &D, t: f64, x: f64, v: f64, h: f64) -> Result<(f64, f64)> {
    let accel = |t: f64, x: f64| -> Result<f64> {
        let (w, dd) = drive.drive(t)?;
        Ok(-w * x - INV_SQRT2 * dd)
    };
    let k1x = v;
    let k1v = accel(t, x)?;
    let k2x = v + 0.5 * h * k1v;
    let k2v = accel(t + 0.5 * h, x + 0.5 * h * k1x)?;
    let k3x = v + 0.5 * h * k2v;
    let k3v = accel(t + 0.5 * h, x + 0.5 * h * k2x)?;
    let k4x = v + h * k3v;
    let k4v = accel(t + h, x + h * k3x)?;
    Ok((
        x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    ))
}

/// `(x+(t_f), x+'(t_f))` from rest, without storing the trajectory.
pub fn center_terminal<D: StretchDrive + ?Sized>(drive: &D, steps: usize) -> Result<(f64, f64)> {
    let tau = drive.duration();
    let h = tau / steps as f64;
    let (mut x, mut v) = (0.0, 0.0);
    for k in 0..steps {
        (x, v) = rk4_center(drive, k as f64 * h, x, v, h)?;
    }
    if !(x.is_finite() && v.is_finite()) {
        return Err(Error::Integration { t: tau, reason: "non-finite centre".into() });
    }
    Ok((x, v))
}

/// Sampled solution of the centre equation (mass-weighted internal units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterTrajectory {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub x_dot: Vec<f64>,
    /// `max(|dx|, |dx'|)` at `t_f` between `steps` and `2 steps`, if computed.
    pub error_estimate: Option<f64>,
}

impl CenterTrajectory {
    pub fn terminal(&self) -> (f64, f64) {
        (*self.x.last().unwrap_or(&0.0), *self.x_dot.last().unwrap_or(&0.0))
    }
}

/// Integrate the centre equation, keeping roughly `samples` points.
pub fn integrate_x_plus<D: StretchDrive + ?Sized>(drive: &D, steps: usize, samples: usize) -> Result<CenterTrajectory> {
    if steps == 0 {
        return Err(Error::InvalidInput("need at least one integration step".into()));
    }
    let tau = drive.duration();
    let h = tau / steps as f64;
    let every = (steps / samples.max(1)).max(1);
    let mut out = CenterTrajectory { t: vec![0.0], x: vec![0.0], x_dot: vec![0.0], error_estimate: None };
    let (mut x, mut v) = (0.0, 0.0);
    for k in 0..steps {
        (x, v) = rk4_center(drive, k as f64 * h, x, v, h)?;
        if (k + 1) % every == 0 || k + 1 == steps {
            out.t.push(if k + 1 == steps { tau } else { (k + 1) as f64 * h });
            out.x.push(x);
            out.x_dot.push(v);
        }
    }
    Ok(out)
}

/// As [`integrate_x_plus`], plus a step-halving error estimate.
pub fn integrate_x_plus_checked<D: StretchDrive + ?Sized>(
    drive: &D,
    steps: usize,
    samples: usize,
) -> Result<CenterTrajectory> {
    let mut traj = integrate_x_plus(drive, steps, samples)?;
    let (x2, v2) = center_terminal(drive, 2 * steps)?;
    let (x1, v1) = traj.terminal();
    traj.error_estimate = Some((x1 - x2).abs().max((v1 - v2).abs()));
    Ok(traj)
}

/// Mean energy of the n-th expanding mode of an undriven normal mode.
pub fn nm_energy_minus(n: usize, rho: f64, rho_dot: f64, omega2: f64, omega0: f64) -> f64 {
    (2 * n + 1) as f64 / (4.0 * omega0) * (rho_dot * rho_dot + omega2 * rho * rho + omega0 * omega0 / (rho * rho))
}

/// Centre-of-packet contribution of the driven stretch mode.
///
/// The potential of the stretch mode is centred at
/// `-sqrt(m) d'' / (sqrt 2 Omega+^2)`, so the displacement enters as
/// `x + sqrt(m) d'' / (sqrt 2 Omega+^2)`.
pub fn center_energy(x: f64, x_dot: f64, omega2: f64, d_ddot: f64) -> f64 {
    if d_ddot == 0.0 {
        return 0.5 * x_dot * x_dot + 0.5 * omega2 * x * x;
    }
    let shifted = x + INV_SQRT2 * d_ddot / omega2;
    0.5 * x_dot * x_dot + 0.5 * omega2 * shifted * shifted
}

/// Mean energy of the n-th expanding mode of the driven stretch mode.
#[allow(clippy::too_many_arguments)]
pub fn nm_energy_plus(
    n: usize,
    rho: f64,
    rho_dot: f64,
    omega2: f64,
    omega0: f64,
    x: f64,
    x_dot: f64,
    d_ddot: f64,
) -> f64 {
    nm_energy_minus(n, rho, rho_dot, omega2, omega0) + center_energy(x, x_dot, omega2, d_ddot)
}

/// What the shooting search minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Stretch-mode ground energy at `t_f`.
    Plain,
    /// Plain plus the first-order cubic anharmonic shift.
    Perturbative,
    /// `x(t_f)^2 + x'(t_f)^2`.
    Residual,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Objective::Plain),
            "perturbative" => Ok(Objective::Perturbative),
            "residual" => Ok(Objective::Residual),
            other => Err(Error::InvalidInput(format!("unknown objective `{other}`"))),
        }
    }
}

/// The fixed part of a shooting problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ShootTemplate {
    pub trap: TrapSpec,
    /// Seconds.
    pub t_f: f64,
    pub expansion_factor: f64,
    pub order: AnsatzOrder,
}

impl ShootTemplate {
    pub fn new(trap: &TrapSpec, t_f: f64, order: AnsatzOrder) -> Self {
        ShootTemplate { trap: trap.clone(), t_f, expansion_factor: 10.0, order }
    }

    pub fn design(&self, free_params: &[f64]) -> Result<ProtocolDesign> {
        ProtocolDesign::new(&self.trap, self.t_f, self.expansion_factor, self.order, free_params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootOptions {
    pub simplex: NelderMeadOptions,
    pub center_steps: usize,
    /// Starting point; zeros when absent.
    pub initial: Option<Vec<f64>>,
    /// Number of trajectory samples kept in the result.
    pub samples: usize,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions { simplex: NelderMeadOptions::default(), center_steps: DEFAULT_CENTER_STEPS, initial: None, samples: 1000 }
    }
}

/// Outcome of one shooting search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingResult {
    pub order: AnsatzOrder,
    pub objective: Objective,
    pub t_f_s: f64,
    pub free_params: Vec<f64>,
    /// `(x+(t_f), x+'(t_f))`.
    pub terminal_residuals: (f64, f64),
    /// Objective at the optimum in units of `hbar omega0` (energy objectives
    /// include the zero-point term `Omega+(t_f)/2`).
    pub objective_value: f64,
    /// Stretch-mode energy above `Omega+(t_f)/2`.
    pub excess_energy: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub x_plus_trajectory: CenterTrajectory,
}

impl ShootingResult {
    pub fn design(&self, template: &ShootTemplate) -> Result<ProtocolDesign> {
        template.design(&self.free_params)
    }
}

/// Terminal stretch-mode quantities for a candidate design.
struct Terminal {
    x: f64,
    x_dot: f64,
    excess: f64,
    zero_point: f64,
    cubic: f64,
}

fn terminal(design: &ProtocolDesign, steps: usize) -> Result<Terminal> {
    let (x, x_dot) = center_terminal(design, steps)?;
    let (w, dd) = design.drive(design.tau_f)?;
    let ep = design.endpoints;
    let rho = design.rho_plus.eval_t(design.tau_f, design.tau_f);
    let zero_point = nm_energy_minus(0, rho[0], rho[1], w, ep.omega_plus_initial);
    let excess = center_energy(x, x_dot, w, dd);
    let state = StretchState { rho: rho[0], rho_dot: rho[1], x, omega0: ep.omega_plus_initial };
    let d_f = design.point(design.tau_f)?.separation.d;
    let cubic = perturbation::cubic_ground_shift(&state, d_f, design.coulomb());
    Ok(Terminal { x, x_dot, excess, zero_point, cubic })
}

fn score(objective: Objective, t: &Terminal) -> f64 {
    match objective {
        Objective::Plain => t.excess,
        Objective::Perturbative => t.excess + t.cubic,
        Objective::Residual => t.x * t.x + t.x_dot * t.x_dot,
    }
}

/// Find the free coefficients that minimize `objective`.
///
/// Failing to converge is not an error: the best point is returned with
/// `converged = false`.
pub fn shoot(template: &ShootTemplate, objective: Objective, options: &ShootOptions) -> Result<ShootingResult> {
    if objective == Objective::Perturbative && template.order != AnsatzOrder::Twelve {
        return Err(Error::InvalidInput("the perturbative objective needs the order-12 ansatz".into()));
    }
    let n = template.order.free_count();
    let x0 = match &options.initial {
        Some(v) if v.len() == n => v.clone(),
        Some(v) => return Err(Error::WrongParameterCount { expected: n, got: v.len() }),
        None => vec![0.0; n],
    };
    // coefficients are validated once here; trial points only swap rho_plus
    let base = template.design(&x0)?;
    let steps = options.center_steps;
    let eval = |p: &[f64]| -> f64 {
        base.with_free_params(template.order, p)
            .and_then(|d| terminal(&d, steps))
            .map(|t| score(objective, &t))
            .unwrap_or(f64::INFINITY)
    };
    let nm = nelder_mead::minimize(eval, &x0, &options.simplex);
    let design = base.with_free_params(template.order, &nm.x)?;
    let term = terminal(&design, steps)?;
    let traj = integrate_x_plus(&design, steps, options.samples)?;
    let objective_value = match objective {
        Objective::Residual => score(objective, &term),
        _ => term.zero_point + score(objective, &term),
    };
    Ok(ShootingResult {
        order: template.order,
        objective,
        t_f_s: template.t_f,
        free_params: nm.x,
        terminal_residuals: (term.x, term.x_dot),
        objective_value,
        excess_energy: term.excess,
        iterations: nm.iterations,
        evaluations: nm.evaluations,
        converged: nm.converged,
        x_plus_trajectory: traj,
    })
}

/// Shoot at every duration by continuation: from the longest duration
/// downward, each search warm-starts from the previous optimum. Results come
/// back in input order.
///
/// The zero-excess set generally has several roots; continuation keeps the
/// sweep on one smooth branch where independent searches would hop.
pub fn shoot_sweep(
    trap: &TrapSpec,
    durations: &[f64],
    order: AnsatzOrder,
    expansion_factor: f64,
    objective: Objective,
    options: &ShootOptions,
) -> Result<Vec<ShootingResult>> {
    let mut idx: Vec<usize> = (0..durations.len()).collect();
    idx.sort_by(|&a, &b| durations[b].total_cmp(&durations[a]));
    let mut out: Vec<Option<ShootingResult>> = vec![None; durations.len()];
    let mut opts = options.clone();
    for i in idx {
        let template = ShootTemplate { trap: trap.clone(), t_f: durations[i], expansion_factor, order };
        let res = shoot(&template, objective, &opts)?;
        opts.initial = Some(res.free_params.clone());
        out[i] = Some(res);
    }
    Ok(out.into_iter().map(|r| r.expect("every duration visited")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::Species;

    fn be9() -> TrapSpec {
        TrapSpec::new(Species::Beryllium9, 2.0e6).unwrap()
    }

    struct Resonant {
        omega: f64,
        eps: f64,
        tau: f64,
        zero: bool,
    }

    impl StretchDrive for Resonant {
        fn duration(&self) -> f64 {
            self.tau
        }
        fn drive(&self, t: f64) -> Result<(f64, f64)> {
            let dd = if self.zero { 0.0 } else { self.eps * (self.omega * t).sin() };
            Ok((self.omega * self.omega, dd))
        }
    }

    #[test]
    fn static_trap_leaves_center_at_rest() {
        let r = Resonant { omega: 1.3, eps: 0.0, tau: 50.0, zero: true };
        let traj = integrate_x_plus(&r, 2000, 100).unwrap();
        assert!(traj.x.iter().chain(&traj.x_dot).all(|v| *v == 0.0));
    }

    #[test]
    fn resonant_drive_matches_closed_form() {
        // x'' + w^2 x = -(eps / sqrt2) sin(w t), x(0) = x'(0) = 0
        // => x = (eps / sqrt2) (sin(w t) - w t cos(w t)) / (2 w^2) * (-1)
        let (w, eps, tau) = (1.7, 0.3, 40.0);
        let r = Resonant { omega: w, eps, tau, zero: false };
        let traj = integrate_x_plus_checked(&r, 40_000, 400).unwrap();
        let a = -eps * INV_SQRT2;
        for (t, x) in traj.t.iter().zip(&traj.x) {
            let exact = a * ((w * t).sin() - w * t * (w * t).cos()) / (2.0 * w * w);
            assert!((x - exact).abs() < 1e-9, "t = {t}: {x} vs {exact}");
        }
        assert!(traj.error_estimate.unwrap() < 1e-9);
    }

    #[test]
    fn initial_and_final_mode_energies() {
        assert!((nm_energy_minus(0, 1.0, 0.0, 1.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((nm_energy_minus(2, 1.0, 0.0, 1.0, 1.0) - 2.5).abs() < 1e-15);
        let om0 = 3f64.sqrt();
        let omf = 1.002f64.sqrt();
        let gamma = (om0 / omf).sqrt();
        let e = nm_energy_plus(0, gamma, 0.0, omf * omf, om0, 0.0, 0.0, 0.0);
        assert!((e - omf / 2.0).abs() < 1e-14);
    }

    #[test]
    fn center_energy_obeys_power_balance() {
        // dE/dt must equal the explicit time derivative of the stretch Hamiltonian,
        // which fixes the sign of the drive offset.
        let design = ShootTemplate::new(&be9(), 5.2e-6, AnsatzOrder::Eleven).design(&[0.0, 0.0]).unwrap();
        let traj = integrate_x_plus(&design, 20_000, 20_000).unwrap();
        let dt = traj.t[1] - traj.t[0];
        let energy = |i: usize| {
            let (w, dd) = design.drive(traj.t[i]).unwrap();
            center_energy(traj.x[i], traj.x_dot[i], w, dd)
        };
        let offset = |t: f64| {
            let (w, dd) = design.drive(t).unwrap();
            INV_SQRT2 * dd / w
        };
        for &i in &[4000usize, 9000, 15000] {
            let t = traj.t[i];
            let de = (energy(i + 1) - energy(i - 1)) / (2.0 * dt);
            let h = 1e-4;
            let (w, _) = design.drive(t).unwrap();
            let dw = (design.drive(t + h).unwrap().0 - design.drive(t - h).unwrap().0) / (2.0 * h);
            let dc = (offset(t + h) - offset(t - h)) / (2.0 * h);
            let y = traj.x[i] + offset(t);
            let explicit = 0.5 * dw * y * y + w * y * dc;
            assert!((de - explicit).abs() < 1e-4 * (1.0 + explicit.abs()), "{de} vs {explicit}");
        }
    }

    #[test]
    fn midprotocol_energy_above_ground_bound() {
        let design = ShootTemplate::new(&be9(), 5.2e-6, AnsatzOrder::Eleven).design(&[0.0, 0.0]).unwrap();
        let traj = integrate_x_plus(&design, 20_000, 100).unwrap();
        for (i, &t) in traj.t.iter().enumerate() {
            let p = design.point(t).unwrap();
            let w = p.omega2_plus[0];
            let e = nm_energy_plus(0, p.rho_plus[0], p.rho_plus[1], w, 3f64.sqrt(), traj.x[i], traj.x_dot[i], p.separation.d_ddot);
            assert!(e > 0.0);
            if w > 0.0 {
                assert!(e >= w.sqrt() / 2.0 - 1e-12);
            }
        }
    }

    #[test]
    fn perturbative_objective_needs_order_twelve() {
        let t = ShootTemplate::new(&be9(), 5.2e-6, AnsatzOrder::Eleven);
        assert!(shoot(&t, Objective::Perturbative, &ShootOptions::default()).is_err());
    }

    #[test]
    fn shooting_removes_stretch_excitation() {
        let t = ShootTemplate::new(&be9(), 5.2e-6, AnsatzOrder::Eleven);
        let opts = ShootOptions { center_steps: 5000, ..Default::default() };
        let r = shoot(&t, Objective::Plain, &opts).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.excess_energy < 1e-8);
        assert!(r.terminal_residuals.0.abs() < 1e-6 && r.terminal_residuals.1.abs() < 1e-6);
        let omf = 1.002f64.sqrt();
        assert!((r.objective_value - omf / 2.0) < 1e-8);
        let again = shoot(&t, Objective::Plain, &opts).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn long_protocols_need_no_correction() {
        let t = ShootTemplate::new(&be9(), 50e-6, AnsatzOrder::Eleven);
        let frozen = ShootOptions {
            center_steps: 5000,
            simplex: NelderMeadOptions { max_iters: 0, ..Default::default() },
            ..Default::default()
        };
        let at_origin = shoot(&t, Objective::Plain, &frozen).unwrap();
        assert!(at_origin.excess_energy < 1e-8, "{}", at_origin.excess_energy);
        let opt = shoot(&t, Objective::Plain, &ShootOptions { center_steps: 5000, ..Default::default() }).unwrap();
        assert!((opt.objective_value - 1.002f64.sqrt() / 2.0).abs() < 1e-10);
    }

    #[test]
    fn order_twelve_embedding_recovers_order_eleven() {
        let opts = ShootOptions { center_steps: 5000, ..Default::default() };
        let t11 = ShootTemplate::new(&be9(), 5.2e-6, AnsatzOrder::Eleven);
        let r11 = shoot(&t11, Objective::Plain, &opts).unwrap();
        let t12 = ShootTemplate::new(&be9(), 5.2e-6, AnsatzOrder::Twelve);
        let embedded = t12.design(&[r11.free_params[0], r11.free_params[1], 0.0]).unwrap();
        let (x, v) = center_terminal(&embedded, 5000).unwrap();
        assert_eq!((x, v), r11.terminal_residuals);
        let seeded = ShootOptions { initial: Some(vec![r11.free_params[0], r11.free_params[1], 0.0]), ..opts };
        let r12 = shoot(&t12, Objective::Perturbative, &seeded).unwrap();
        assert!(r12.objective_value <= r11.objective_value + 1e-12);
    }

    #[test]
    fn sweep_reports_in_input_order() {
        let opts = ShootOptions { center_steps: 2000, ..Default::default() };
        let r = shoot_sweep(&be9(), &[5.0e-6, 6.0e-6], AnsatzOrder::Eleven, 10.0, Objective::Plain, &opts).unwrap();
        assert_eq!(r[0].t_f_s, 5.0e-6);
        assert_eq!(r[1].t_f_s, 6.0e-6);
        assert!(r.iter().all(|x| x.converged));
    }
}
