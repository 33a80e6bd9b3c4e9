//! Classical propagation of the two-ion lab-frame Hamiltonian
//! `p1^2/2 + p2^2/2 + V(q1) + V(q2) + C/(q1 - q2)` under a control schedule.
//!
//! State and energies are in internal units (ion mass 1, energies in
//! `hbar omega0`); [`ClassicalState::to_si`] and the CSV export convert.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{self, PotentialParams};
use crate::schedule::ControlSchedule;
use crate::units::{TrapSpec, Unit};

pub const DEFAULT_STEPS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState {
    pub t: f64,
    pub q1: f64,
    pub q2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl ClassicalState {
    pub fn at_rest(q1: f64, q2: f64) -> Self {
        ClassicalState { t: 0.0, q1, q2, p1: 0.0, p2: 0.0 }
    }

    /// `(t [s], q1 [m], q2 [m], p1 [kg m/s], p2 [kg m/s])`.
    pub fn to_si(&self, trap: &TrapSpec) -> [f64; 5] {
        let p = trap.ion_mass * trap.scale(Unit::Length) / trap.scale(Unit::Time);
        [
            trap.to_si(self.t, Unit::Time),
            trap.to_si(self.q1, Unit::Length),
            trap.to_si(self.q2, Unit::Length),
            self.p1 * p,
            self.p2 * p,
        ]
    }

    fn check(&self) -> Result<()> {
        if !(self.q1.is_finite() && self.q2.is_finite() && self.p1.is_finite() && self.p2.is_finite()) {
            return Err(Error::Integration { t: self.t, reason: "non-finite state".into() });
        }
        if !(self.q1 > self.q2) {
            return Err(Error::OrderingViolated { q1: self.q1, q2: self.q2 });
        }
        Ok(())
    }
}

/// Total energy; `params` includes any tilt.
pub fn energy_classical(state: &ClassicalState, params: &PotentialParams, coulomb: f64) -> Result<f64> {
    let v = potential::potential_energy(params, coulomb, state.q1, state.q2)?;
    Ok(0.5 * (state.p1 * state.p1 + state.p2 * state.p2) + v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Rk4,
    /// Velocity Verlet (kick-drift-kick), second order and symplectic.
    Leapfrog,
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Integrator::Rk4),
            "leapfrog" => Ok(Integrator::Leapfrog),
            other => Err(Error::InvalidInput(format!("unknown integrator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalOptions {
    pub steps: usize,
    pub integrator: Integrator,
    /// Trajectory rows to keep (0 keeps only the endpoints).
    pub samples: usize,
}

impl Default for ClassicalOptions {
    fn default() -> Self {
        ClassicalOptions { steps: DEFAULT_STEPS, integrator: Integrator::Rk4, samples: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Classical,
    Quantum,
}

/// Harmonic energies of the two final normal modes about the reference minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeBreakdown {
    /// In-phase (centre-of-mass-like) mode, quanta.
    pub minus: f64,
    /// Out-of-phase (stretch-like) mode, quanta.
    pub plus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationReport {
    pub energy_final_j: f64,
    pub energy_reference_j: f64,
    /// `(E - E_ref) / (hbar omega0)`.
    pub excitation_quanta: f64,
    pub per_mode: Option<ModeBreakdown>,
    pub method: Method,
}

/// One trajectory row: `t, q1, q2, p1, p2, E` (internal).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub state: ClassicalState,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalRun {
    pub initial: ClassicalState,
    pub final_state: ClassicalState,
    pub trajectory: Vec<TrajectoryRow>,
    pub report: ExcitationReport,
}

impl ClassicalRun {
    pub fn write_csv<W: Write>(&self, trap: &TrapSpec, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "q1", "q2", "p1", "p2", "E"])?;
        for row in &self.trajectory {
            let s = row.state.to_si(trap);
            let e = trap.to_si(row.energy, Unit::Energy);
            w.write_record([s[0], s[1], s[2], s[3], s[4], e].iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, trap: &TrapSpec, path: &Path) -> Result<()> {
        self.write_csv(trap, std::fs::File::create(path)?)
    }
}

/// Rest state at the minimum of `params` (tilt included), seeded at `+-d/2`.
pub fn equilibrium_state(params: &PotentialParams, coulomb: f64, d: f64) -> Result<ClassicalState> {
    let guess = if params.lambda != 0.0 && params.alpha < 0.0 && params.beta > 0.0 {
        potential::tilted_well_minima(params).map(|(l, r)| (r, l)).unwrap_or((0.5 * d, -0.5 * d))
    } else {
        (0.5 * d, -0.5 * d)
    };
    let (q1, q2) = potential::find_minimum(params, coulomb, guess)?;
    Ok(ClassicalState::at_rest(q1, q2))
}

/// Lowest two-ion minimum of `params` over a handful of basins: the
/// symmetric guess, one ion per well, both ions in either well, and the
/// basin around `near` when given.
pub fn global_minimum_state(
    params: &PotentialParams,
    coulomb: f64,
    d: f64,
    near: Option<&ClassicalState>,
) -> Result<ClassicalState> {
    let mut seeds = vec![(0.5 * d, -0.5 * d)];
    if params.alpha < 0.0 && params.beta > 0.0 {
        if let Ok((l, r)) = potential::tilted_well_minima(params) {
            seeds.push((r, l));
            for w in [l, r] {
                let k = 2.0 * params.alpha + 12.0 * params.beta * w * w;
                if k > 0.0 {
                    let s = (2.0 * coulomb / k).cbrt();
                    seeds.push((w + 0.5 * s, w - 0.5 * s));
                }
            }
        }
    }
    if let Some(st) = near {
        if st.q1 > st.q2 {
            seeds.push((st.q1, st.q2));
        }
    }
    let mut best: Option<(f64, (f64, f64))> = None;
    for seed in seeds {
        let Ok((q1, q2)) = potential::find_minimum(params, coulomb, seed) else { continue };
        let Ok(e) = potential::potential_energy(params, coulomb, q1, q2) else { continue };
        if best.map_or(true, |(b, _)| e < b) {
            best = Some((e, (q1, q2)));
        }
    }
    let (_, (q1, q2)) = best.ok_or(Error::NoPositiveRoot { alpha: params.alpha, beta: params.beta })?;
    Ok(ClassicalState::at_rest(q1, q2))
}

#[inline]
fn forces(params: &PotentialParams, coulomb: f64, q1: f64, q2: f64) -> (f64, f64) {
    let g = potential::gradient(params, coulomb, q1, q2);
    (-g[0], -g[1])
}

/// `y = (q1, q2, p1, p2)`
#[inline]
fn rk4_step(
    coulomb: f64,
    y: [f64; 4],
    h: f64,
    start: &PotentialParams,
    mid: &PotentialParams,
    end: &PotentialParams,
) -> [f64; 4] {
    let deriv = |p: &PotentialParams, y: &[f64; 4]| {
        let (f1, f2) = forces(p, coulomb, y[0], y[1]);
        [y[2], y[3], f1, f2]
    };
    let add = |y: &[f64; 4], k: &[f64; 4], s: f64| [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2], y[3] + s * k[3]];
    let k1 = deriv(start, &y);
    let k2 = deriv(mid, &add(&y, &k1, 0.5 * h));
    let k3 = deriv(mid, &add(&y, &k2, 0.5 * h));
    let k4 = deriv(end, &add(&y, &k3, h));
    let mut out = y;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn biased<S: ControlSchedule + ?Sized>(schedule: &S, t: f64, lambda: f64) -> PotentialParams {
    schedule.params(t).with_bias(lambda)
}

/// Propagate from `initial` (or rest at the tilted initial equilibrium) to
/// the end of `schedule` with tilt `lambda` on each ion.
pub fn propagate_classical<S: ControlSchedule + ?Sized>(
    schedule: &S,
    trap: &TrapSpec,
    initial: Option<ClassicalState>,
    lambda: f64,
    opts: &ClassicalOptions,
) -> Result<ClassicalRun> {
    if opts.steps == 0 {
        return Err(Error::InvalidInput("need at least one step".into()));
    }
    let coulomb = trap.coulomb_internal();
    let tau = schedule.duration();
    let p0 = biased(schedule, 0.0, lambda);
    p0.validate()?;
    let initial = match initial {
        Some(s) => s,
        None => equilibrium_state(&p0, coulomb, schedule.separation(0.0).d)?,
    };
    initial.check()?;

    let h = tau / opts.steps as f64;
    let every = if opts.samples == 0 { opts.steps } else { (opts.steps / opts.samples).max(1) };
    let mut trajectory = vec![TrajectoryRow { state: initial, energy: energy_classical(&initial, &p0, coulomb)? }];
    let mut y = [initial.q1, initial.q2, initial.p1, initial.p2];
    let mut start = p0;
    for k in 0..opts.steps {
        let t = initial.t + k as f64 * h;
        let end_t = if k + 1 == opts.steps { initial.t + tau } else { t + h };
        let end = biased(schedule, end_t - initial.t, lambda);
        match opts.integrator {
            Integrator::Rk4 => {
                let mid = biased(schedule, t - initial.t + 0.5 * h, lambda);
                y = rk4_step(coulomb, y, h, &start, &mid, &end);
            }
            Integrator::Leapfrog => {
                let (f1, f2) = forces(&start, coulomb, y[0], y[1]);
                let (p1, p2) = (y[2] + 0.5 * h * f1, y[3] + 0.5 * h * f2);
                let (q1, q2) = (y[0] + h * p1, y[1] + h * p2);
                let (g1, g2) = forces(&end, coulomb, q1, q2);
                y = [q1, q2, p1 + 0.5 * h * g1, p2 + 0.5 * h * g2];
            }
        }
        start = end;
        let state = ClassicalState { t: end_t, q1: y[0], q2: y[1], p1: y[2], p2: y[3] };
        state.check()?;
        if (k + 1) % every == 0 || k + 1 == opts.steps {
            if trajectory.last().map(|r| r.state.t) != Some(end_t) {
                trajectory.push(TrajectoryRow { state, energy: energy_classical(&state, &end, coulomb)? });
            }
        }
    }
    let final_state = trajectory.last().expect("at least the initial row").state;
    let final_params = biased(schedule, tau, lambda);
    let report = classical_excitation(&final_state, &final_params, trap, schedule.separation(tau).d)?;
    Ok(ClassicalRun { initial, final_state, trajectory, report })
}

/// Excitation of `state` above the minimum of `params`.
pub fn classical_excitation(
    state: &ClassicalState,
    params: &PotentialParams,
    trap: &TrapSpec,
    d_guess: f64,
) -> Result<ExcitationReport> {
    let coulomb = trap.coulomb_internal();
    let min = global_minimum_state(params, coulomb, d_guess, Some(state))?;
    let e_ref = energy_classical(&min, params, coulomb)?;
    let e = energy_classical(state, params, coulomb)?;
    let per_mode = mode_breakdown(state, &min, params, coulomb);
    Ok(ExcitationReport {
        energy_final_j: trap.to_si(e, Unit::Energy),
        energy_reference_j: trap.to_si(e_ref, Unit::Energy),
        excitation_quanta: e - e_ref,
        per_mode,
        method: Method::Classical,
    })
}

fn mode_breakdown(
    state: &ClassicalState,
    min: &ClassicalState,
    params: &PotentialParams,
    coulomb: f64,
) -> Option<ModeBreakdown> {
    let h = potential::hessian(params, coulomb, min.q1, min.q2);
    let (a, b, c) = (h[0][0], h[0][1], h[1][1]);
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (k_lo, k_hi) = (mean - rad, mean + rad);
    if !(k_lo > 0.0) {
        return None;
    }
    // eigenvector of k_lo
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let v_hi = [theta.cos(), theta.sin()];
    let v_lo = [-theta.sin(), theta.cos()];
    let dq = [state.q1 - min.q1, state.q2 - min.q2];
    let p = [state.p1, state.p2];
    let energy = |v: [f64; 2], k: f64| {
        let x = dq[0] * v[0] + dq[1] * v[1];
        let m = p[0] * v[0] + p[1] * v[1];
        0.5 * m * m + 0.5 * k * x * x
    };
    let (e_lo, e_hi) = (energy(v_lo, k_lo), energy(v_hi, k_hi));
    // the in-phase mode has same-sign components
    if (v_lo[0] + v_lo[1]).abs() >= (v_hi[0] + v_hi[1]).abs() {
        Some(ModeBreakdown { minus: e_lo, plus: e_hi })
    } else {
        Some(ModeBreakdown { minus: e_hi, plus: e_lo })
    }
}
