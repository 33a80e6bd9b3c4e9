//! Time-dependent trap control as seen by the simulators.

use crate::potential::PotentialParams;

/// Equilibrium separation and its first two time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Kinematics {
    pub d: f64,
    pub d_dot: f64,
    pub d_ddot: f64,
}

/// A control protocol on `[0, duration]`, in internal units.
///
/// `params` never carries a tilt; simulators add the bias themselves.
pub trait ControlSchedule: Sync {
    fn duration(&self) -> f64;

    fn params(&self, t: f64) -> PotentialParams;

    fn separation(&self, t: f64) -> Kinematics;
}

/// Potential frozen at fixed coefficients, for stationarity checks.
#[derive(Debug, Clone, Copy)]
pub struct FrozenSchedule {
    pub params: PotentialParams,
    pub d: f64,
    pub duration: f64,
}

impl ControlSchedule for FrozenSchedule {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn params(&self, _t: f64) -> PotentialParams {
        PotentialParams { lambda: 0.0, ..self.params }
    }

    fn separation(&self, _t: f64) -> Kinematics {
        Kinematics { d: self.d, d_dot: 0.0, d_ddot: 0.0 }
    }
}

impl<S: ControlSchedule + ?Sized> ControlSchedule for &S {
    fn duration(&self) -> f64 {
        (**self).duration()
    }

    fn params(&self, t: f64) -> PotentialParams {
        (**self).params(t)
    }

    fn separation(&self, t: f64) -> Kinematics {
        (**self).separation(t)
    }
}
