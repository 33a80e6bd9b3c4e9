//! Non-optimized comparison protocol: a smooth but uncompensated separation.
//!
//! The separation follows `d(s) = d(0) + (d_f - d(0)) s^2 sin(pi s / 2)`,
//! `alpha` moves from `alpha0` to `alpha_f` along the smoothstep
//! `p_n(s) = 1 - (1 - s)^n (1 + n s)` (n = 2 is the cubic `3s^2 - 2s^3`), and
//! `beta` is whatever keeps `d(s)` an equilibrium.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{self, PotentialParams};
use crate::schedule::{ControlSchedule, Kinematics};
use crate::units::{TrapSpec, Unit};

use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRamp {
    pub tau_f: f64,
    pub d_initial: f64,
    pub d_final: f64,
    pub alpha_initial: f64,
    pub alpha_final: f64,
    pub smooth_order: u32,
    coulomb: f64,
}

impl ReferenceRamp {
    /// Ramp of duration `t_f` seconds from the single-well start to
    /// `expansion_factor` times the initial separation, ending at `-alpha0/2`.
    pub fn new(trap: &TrapSpec, t_f: f64, expansion_factor: f64, smooth_order: u32) -> Result<Self> {
        if !(t_f > 0.0 && t_f.is_finite()) {
            return Err(Error::InvalidInput(format!("t_f must be positive, got {t_f}")));
        }
        if !(expansion_factor > 1.0) {
            return Err(Error::InvalidInput(format!("expansion factor must exceed 1, got {expansion_factor}")));
        }
        if smooth_order < 2 {
            return Err(Error::InvalidInput("smoothstep order must be at least 2".into()));
        }
        let d0 = trap.d0_internal();
        let a0 = trap.alpha0_internal();
        Ok(ReferenceRamp {
            tau_f: trap.from_si(t_f, Unit::Time),
            d_initial: d0,
            d_final: expansion_factor * d0,
            alpha_initial: a0,
            alpha_final: -a0 / 2.0,
            smooth_order,
            coulomb: trap.coulomb_internal(),
        })
    }

    /// `(p, p', p'')` of the smoothstep in `s`.
    fn smoothstep(&self, s: f64) -> (f64, f64, f64) {
        let n = self.smooth_order as i32;
        let nf = n as f64;
        let u = 1.0 - s;
        let p = 1.0 - u.powi(n) * (1.0 + nf * s);
        let dp = nf * (nf + 1.0) * s * u.powi(n - 1);
        let ddp = nf * (nf + 1.0) * (u.powi(n - 1) - (nf - 1.0) * s * u.powi(n - 2));
        (p, dp, ddp)
    }

    pub fn alpha(&self, t: f64) -> f64 {
        let (p, _, _) = self.smoothstep((t / self.tau_f).clamp(0.0, 1.0));
        self.alpha_initial + (self.alpha_final - self.alpha_initial) * p
    }

    pub fn coulomb(&self) -> f64 {
        self.coulomb
    }

    /// Both normal-mode curvatures at the designed equilibrium, `(minus, plus)`.
    pub fn mode_curvatures(&self, t: f64) -> (f64, f64) {
        let p = self.params(t);
        potential::mode_eigenvalues(p.alpha, p.beta, self.separation(t).d, self.coulomb)
    }

    /// Smallest normal-mode curvature over a uniform grid of `n` points.
    pub fn min_curvature(&self, n: usize) -> f64 {
        (0..n)
            .map(|i| {
                let (m, p) = self.mode_curvatures(self.tau_f * i as f64 / (n - 1) as f64);
                m.min(p)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest smoothstep order whose ramp keeps both modes bound on a grid.
    pub fn min_stable_order(trap: &TrapSpec, expansion_factor: f64) -> Result<u32> {
        for n in 2..=20 {
            let r = ReferenceRamp::new(trap, 1e-6, expansion_factor, n)?;
            if r.min_curvature(2001) > 0.0 {
                return Ok(n);
            }
        }
        Err(Error::Unstable(f64::NAN))
    }
}

impl ControlSchedule for ReferenceRamp {
    fn duration(&self) -> f64 {
        self.tau_f
    }

    fn params(&self, t: f64) -> PotentialParams {
        let alpha = self.alpha(t);
        PotentialParams::new(alpha, potential::beta_from_equilibrium(alpha, self.separation(t).d, self.coulomb))
    }

    fn separation(&self, t: f64) -> Kinematics {
        let s = (t / self.tau_f).clamp(0.0, 1.0);
        let (sn, cs) = (0.5 * PI * s).sin_cos();
        let f = s * s * sn;
        let df = 2.0 * s * sn + 0.5 * PI * s * s * cs;
        let ddf = 2.0 * sn + 2.0 * PI * s * cs - 0.25 * PI * PI * s * s * sn;
        let delta = self.d_final - self.d_initial;
        Kinematics {
            d: self.d_initial + delta * f,
            d_dot: delta * df / self.tau_f,
            d_ddot: delta * ddf / (self.tau_f * self.tau_f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::Species;

    fn ramp(n: u32) -> ReferenceRamp {
        let trap = TrapSpec::new(Species::Beryllium9, 2.0e6).unwrap();
        ReferenceRamp::new(&trap, 5.2e-6, 10.0, n).unwrap()
    }

    #[test]
    fn endpoints() {
        let r = ramp(2);
        let (k0, k1) = (r.separation(0.0), r.separation(r.tau_f));
        assert_eq!(k0.d, r.d_initial);
        assert!((k1.d - r.d_final).abs() < 1e-12 * r.d_final);
        assert_eq!(k0.d_dot, 0.0);
        assert_eq!(r.alpha(0.0), r.alpha_initial);
        assert!((r.alpha(r.tau_f) - r.alpha_final).abs() < 1e-15);
        assert!(r.params(0.0).beta.abs() < 1e-15);
    }

    #[test]
    fn cubic_member_is_classic_smoothstep() {
        let r = ramp(2);
        for &s in &[0.1, 0.37, 0.8] {
            let (p, dp, ddp) = r.smoothstep(s);
            assert!((p - (3.0 * s * s - 2.0 * s * s * s)).abs() < 1e-15);
            assert!((dp - (6.0 * s - 6.0 * s * s)).abs() < 1e-14);
            assert!((ddp - (6.0 - 12.0 * s)).abs() < 1e-13);
        }
    }

    #[test]
    fn smoothstep_derivatives_match_differences() {
        let r = ramp(3);
        let h = 1e-5;
        for &s in &[0.2, 0.5, 0.9] {
            let (_, dp, ddp) = r.smoothstep(s);
            let (pp, dpp, _) = r.smoothstep(s + h);
            let (pm, dpm, _) = r.smoothstep(s - h);
            assert!((dp - (pp - pm) / (2.0 * h)).abs() < 1e-8);
            assert!((ddp - (dpp - dpm) / (2.0 * h)).abs() < 1e-7);
            let (_, d1, _) = r.smoothstep(0.0);
            let (_, d2, _) = r.smoothstep(1.0);
            assert_eq!((d1, d2), (0.0, 0.0));
        }
    }

    #[test]
    fn kinematics_match_differences() {
        let r = ramp(2);
        let h = 1e-4;
        for &t in &[5.0, 30.0, 60.0] {
            let (a, b, c) = (r.separation(t - h), r.separation(t), r.separation(t + h));
            assert!((b.d_dot - (c.d - a.d) / (2.0 * h)).abs() < 1e-6 * b.d_dot.abs().max(1.0));
            assert!((b.d_ddot - (c.d_dot - a.d_dot) / (2.0 * h)).abs() < 1e-6 * b.d_ddot.abs().max(1.0));
        }
    }

    #[test]
    fn designed_separation_is_equilibrium() {
        let r = ramp(3);
        for &t in &[0.0, 10.0, 40.0, r.tau_f] {
            let p = r.params(t);
            let d = r.separation(t).d;
            let g = potential::gradient(&p, r.coulomb, d / 2.0, -d / 2.0);
            assert!(g[0].abs() < 1e-9 && g[1].abs() < 1e-9);
        }
    }

    #[test]
    fn cubic_alpha_loses_stretch_confinement() {
        let trap = TrapSpec::new(Species::Beryllium9, 2.0e6).unwrap();
        assert!(ramp(2).min_curvature(2001) < 0.0);
        let n = ReferenceRamp::min_stable_order(&trap, 10.0).unwrap();
        assert_eq!(n, 3);
        assert!(ramp(n).min_curvature(2001) > 0.0);
    }
}
