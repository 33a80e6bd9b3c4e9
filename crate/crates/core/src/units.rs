//! Physical constants, ion species and the dimensionless unit system.
//!
//! Everything downstream of [`TrapSpec`] works in units where the ion mass,
//! the reduced Planck constant and the initial trap frequency are all one.
//! Lengths are then measured in `sqrt(hbar / (m omega0))`, times in
//! `1 / omega0` and energies in `hbar omega0`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant (J s), CODATA 2018.
pub const HBAR: f64 = 1.054571817e-34;
/// Elementary charge (C), exact.
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;
/// Vacuum permittivity (F/m), CODATA 2018.
pub const EPSILON0: f64 = 8.854187813e-12;
/// Atomic mass constant (kg), CODATA 2018.
pub const ATOMIC_MASS: f64 = 1.660539067e-27;
/// Electron mass (kg), CODATA 2018.
pub const ELECTRON_MASS: f64 = 9.109383702e-31;

/// Built-in singly charged ion species.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Species {
    #[serde(rename = "Be9+")]
    Beryllium9,
    #[serde(rename = "Ca40+")]
    Calcium40,
}

impl Species {
    /// Neutral atomic mass in unified atomic mass units.
    fn atomic_mass_u(self) -> f64 {
        match self {
            Species::Beryllium9 => 9.012183065,
            Species::Calcium40 => 39.96259086,
        }
    }

    /// Ion mass: atomic mass minus one electron.
    pub fn ion_mass(self) -> f64 {
        self.atomic_mass_u() * ATOMIC_MASS - ELECTRON_MASS
    }

    pub fn ion_charge(self) -> f64 {
        ELEMENTARY_CHARGE
    }

    pub fn label(self) -> &'static str {
        match self {
            Species::Beryllium9 => "Be9+",
            Species::Calcium40 => "Ca40+",
        }
    }
}

impl FromStr for Species {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Be9+" | "9Be+" | "Be9" | "Be" | "beryllium" => Ok(Species::Beryllium9),
            "Ca40+" | "40Ca+" | "Ca40" | "Ca" | "calcium" => Ok(Species::Calcium40),
            other => Err(Error::UnknownSpecies(other.to_string())),
        }
    }
}

/// The trap-spec block as it appears in JSON configuration files.
///
/// Either `species` or both `mass_kg` and `charge_C` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_kg: Option<f64>,
    #[serde(default, rename = "charge_C", skip_serializing_if = "Option::is_none")]
    pub charge_c: Option<f64>,
    pub omega0_hz: f64,
}

impl TrapInput {
    pub fn species(species: Species, omega0_hz: f64) -> Self {
        TrapInput {
            species: Some(species.label().to_string()),
            mass_kg: None,
            charge_c: None,
            omega0_hz,
        }
    }

    pub fn build(&self) -> Result<TrapSpec> {
        match (&self.species, self.mass_kg, self.charge_c) {
            (_, Some(m), Some(q)) => TrapSpec::from_mass_charge(m, q, self.omega0_hz),
            (Some(name), _, _) => TrapSpec::new(name.parse()?, self.omega0_hz),
            _ => Err(Error::InvalidInput(
                "trap block needs `species` or both `mass_kg` and `charge_C`".into(),
            )),
        }
    }
}

/// Ion species data, trap frequency and the derived scales.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapSpec {
    pub ion_mass: f64,
    pub ion_charge: f64,
    /// Angular frequency (rad/s).
    pub omega0: f64,
    /// `e^2 / (4 pi eps0)` in J m.
    pub coulomb_const: f64,
    /// Initial equilibrium separation in metres.
    pub d0: f64,
    /// `hbar omega0` in joules.
    pub energy_quantum: f64,
    /// Oscillator length `sqrt(hbar / (m omega0))` in metres.
    pub length_unit: f64,
    input: TrapInput,
}

impl TrapSpec {
    /// Trap for a built-in species at `omega0_hz = omega0 / 2pi`.
    pub fn new(species: Species, omega0_hz: f64) -> Result<Self> {
        let mut spec =
            Self::from_mass_charge(species.ion_mass(), species.ion_charge(), omega0_hz)?;
        spec.input = TrapInput::species(species, omega0_hz);
        Ok(spec)
    }

    pub fn from_mass_charge(mass_kg: f64, charge_c: f64, omega0_hz: f64) -> Result<Self> {
        if !(mass_kg > 0.0 && mass_kg.is_finite()) {
            return Err(Error::InvalidInput(format!("ion mass must be positive, got {mass_kg}")));
        }
        if !(charge_c != 0.0 && charge_c.is_finite()) {
            return Err(Error::InvalidInput(format!("ion charge must be non-zero, got {charge_c}")));
        }
        if !(omega0_hz > 0.0 && omega0_hz.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "trap frequency must be positive, got {omega0_hz}"
            )));
        }
        let omega0 = 2.0 * PI * omega0_hz;
        let coulomb_const = charge_c * charge_c / (4.0 * PI * EPSILON0);
        let d0 = (2.0 * coulomb_const / (mass_kg * omega0 * omega0)).cbrt();
        Ok(TrapSpec {
            ion_mass: mass_kg,
            ion_charge: charge_c,
            omega0,
            coulomb_const,
            d0,
            energy_quantum: HBAR * omega0,
            length_unit: (HBAR / (mass_kg * omega0)).sqrt(),
            input: TrapInput {
                species: None,
                mass_kg: Some(mass_kg),
                charge_c: Some(charge_c),
                omega0_hz,
            },
        })
    }

    /// The JSON block this trap was built from.
    pub fn input(&self) -> &TrapInput {
        &self.input
    }

    pub fn omega0_hz(&self) -> f64 {
        self.input.omega0_hz
    }

    /// Coulomb constant in internal units (`hbar omega0 * length_unit`).
    pub fn coulomb_internal(&self) -> f64 {
        self.coulomb_const / (self.energy_quantum * self.length_unit)
    }

    /// Initial separation in internal length units.
    pub fn d0_internal(&self) -> f64 {
        self.d0 / self.length_unit
    }

    /// Initial harmonic coefficient `m omega0^2 / 2`, which is 1/2 internally.
    pub fn alpha0_internal(&self) -> f64 {
        0.5
    }

    pub fn scale(&self, unit: Unit) -> f64 {
        let e = self.energy_quantum;
        let l = self.length_unit;
        match unit {
            Unit::Length => l,
            Unit::Time => 1.0 / self.omega0,
            Unit::Energy => e,
            Unit::Alpha => e / (l * l),
            Unit::Beta => e / (l * l * l * l),
            Unit::Force => e / l,
        }
    }

    /// Internal (dimensionless) value to SI.
    pub fn to_si(&self, value: f64, unit: Unit) -> f64 {
        value * self.scale(unit)
    }

    /// SI value to internal units.
    pub fn from_si(&self, value: f64, unit: Unit) -> f64 {
        value / self.scale(unit)
    }
}

/// Quantity kinds that cross the SI boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Length,
    Time,
    Energy,
    /// Harmonic coefficient, J/m^2.
    Alpha,
    /// Quartic coefficient, J/m^4 = N/m^3.
    Beta,
    Force,
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "length" => Ok(Unit::Length),
            "time" => Ok(Unit::Time),
            "energy" => Ok(Unit::Energy),
            "alpha" => Ok(Unit::Alpha),
            "beta" => Ok(Unit::Beta),
            "force" => Ok(Unit::Force),
            other => Err(Error::UnknownUnit(other.to_string())),
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Unit::Length => "length",
            Unit::Time => "time",
            Unit::Energy => "energy",
            Unit::Alpha => "alpha",
            Unit::Beta => "beta",
            Unit::Force => "force",
        };
        f.write_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn be9() -> TrapSpec {
        TrapSpec::new(Species::Beryllium9, 2.0e6).unwrap()
    }

    #[test]
    fn beryllium_equilibrium_distance() {
        let trap = be9();
        assert!((trap.d0 * 1e6 - 5.80).abs() < 0.01, "d0 = {}", trap.d0);
    }

    #[test]
    fn coulomb_constant_from_codata() {
        let trap = be9();
        let expected = 1.602176634e-19_f64.powi(2) / (4.0 * PI * 8.854187813e-12);
        assert!((trap.coulomb_const - expected).abs() / expected < 1e-15);
        assert!((trap.coulomb_const - 2.307e-28).abs() < 0.001e-28);
    }

    #[test]
    fn energy_and_length_scales() {
        let trap = be9();
        let e = trap.to_si(1.0, Unit::Energy);
        assert!((e - HBAR * 2.0 * PI * 2.0e6).abs() / e < 1e-15);
        assert!((e - 1.325e-27).abs() < 0.001e-27);
        let l = trap.to_si(1.0, Unit::Length);
        assert!((l * 1e9 - 23.7).abs() < 0.05, "length unit {l}");
    }

    #[test]
    fn unity_inputs_give_cube_root_two() {
        // m = 1 kg, charge chosen so C_c = 1, omega0 = 1 rad/s
        let charge = (4.0 * PI * EPSILON0).sqrt();
        let trap = TrapSpec::from_mass_charge(1.0, charge, 1.0 / (2.0 * PI)).unwrap();
        assert!((trap.coulomb_const - 1.0).abs() < 1e-14);
        assert!((trap.d0 - 2f64.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn derived_fields_are_consistent() {
        for &(sp, f) in &[(Species::Beryllium9, 2.0e6), (Species::Calcium40, 1.1e6)] {
            let t = TrapSpec::new(sp, f).unwrap();
            let lhs = t.d0.powi(3);
            let rhs = 2.0 * t.coulomb_const / (t.ion_mass * t.omega0 * t.omega0);
            assert!((lhs - rhs).abs() / rhs < 1e-14);
            // internal: 2 C / d0^3 = 1
            let c = t.coulomb_internal();
            assert!((2.0 * c / t.d0_internal().powi(3) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!("Yb171+".parse::<Species>(), Err(Error::UnknownSpecies(_))));
        assert!(TrapSpec::new(Species::Beryllium9, 0.0).is_err());
        assert!(TrapSpec::new(Species::Beryllium9, -1.0).is_err());
        assert!(TrapSpec::from_mass_charge(-1.0, 1e-19, 1e6).is_err());
        assert!(matches!("volts".parse::<Unit>(), Err(Error::UnknownUnit(_))));
    }

    #[test]
    fn trap_input_json_forms() {
        let a: TrapInput = serde_json::from_str(r#"{"species": "Be9+", "omega0_hz": 2.0e6}"#).unwrap();
        assert_eq!(a.build().unwrap(), be9());
        let m = Species::Beryllium9.ion_mass();
        let b: TrapInput = serde_json::from_str(&format!(
            r#"{{"mass_kg": {m:e}, "charge_C": 1.602176634e-19, "omega0_hz": 2.0e6}}"#
        ))
        .unwrap();
        let tb = b.build().unwrap();
        assert!((tb.d0 - be9().d0).abs() < 1e-18);
        let bad: TrapInput = serde_json::from_str(r#"{"omega0_hz": 2.0e6}"#).unwrap();
        assert!(bad.build().is_err());
    }

    #[test]
    fn unit_round_trips() {
        let trap = be9();
        for unit in [Unit::Length, Unit::Time, Unit::Energy, Unit::Alpha, Unit::Beta, Unit::Force] {
            for &x in &[1.0, -3.7, 1e-9, 12345.678] {
                let back = trap.from_si(trap.to_si(x, unit), unit);
                assert!((back - x).abs() <= 1e-14 * x.abs(), "{unit}: {x} -> {back}");
            }
            assert_eq!(unit.to_string().parse::<Unit>().unwrap(), unit);
        }
    }
}
