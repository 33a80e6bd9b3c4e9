//! External harmonic+quartic potential with Coulomb repulsion, the
//! equilibrium separation and the two normal modes.
//!
//! All quantities are in internal units (ion mass = 1). The Coulomb
//! constant is passed explicitly as `coulomb`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Instantaneous external-potential coefficients, `alpha q^2 + beta q^4 + lambda q`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PotentialParams {
    pub alpha: f64,
    pub beta: f64,
    /// Linear tilt (force units). Zero in every designed protocol.
    #[serde(default)]
    pub lambda: f64,
}

impl PotentialParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        PotentialParams { alpha, beta, lambda: 0.0 }
    }

    pub fn with_bias(self, lambda: f64) -> Self {
        PotentialParams { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.beta.is_finite() && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite potential {self:?}")));
        }
        if self.alpha < 0.0 && self.beta <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "alpha < 0 requires beta > 0 (alpha = {}, beta = {})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Single-ion external potential.
    #[inline]
    pub fn external(&self, q: f64) -> f64 {
        let q2 = q * q;
        self.alpha * q2 + self.beta * q2 * q2 + self.lambda * q
    }

    /// Derivative of the single-ion external potential.
    #[inline]
    pub fn external_slope(&self, q: f64) -> f64 {
        2.0 * self.alpha * q + 4.0 * self.beta * q * q * q + self.lambda
    }
}

/// Two-ion potential energy. Requires `q1 > q2`.
pub fn potential_energy(params: &PotentialParams, coulomb: f64, q1: f64, q2: f64) -> Result<f64> {
    if !(q1 > q2) {
        return Err(Error::OrderingViolated { q1, q2 });
    }
    Ok(params.external(q1) + params.external(q2) + coulomb / (q1 - q2))
}

/// Gradient `(dV/dq1, dV/dq2)`; no ordering check.
#[inline]
pub fn gradient(params: &PotentialParams, coulomb: f64, q1: f64, q2: f64) -> [f64; 2] {
    let r = q1 - q2;
    let f = coulomb / (r * r);
    [params.external_slope(q1) - f, params.external_slope(q2) + f]
}

/// Hessian of the two-ion potential.
pub fn hessian(params: &PotentialParams, coulomb: f64, q1: f64, q2: f64) -> [[f64; 2]; 2] {
    let r = q1 - q2;
    let c = 2.0 * coulomb / (r * r * r);
    let h = |q: f64| 2.0 * params.alpha + 12.0 * params.beta * q * q;
    [[h(q1) + c, -c], [-c, h(q2) + c]]
}

/// Positive root of `beta d^5 + 2 alpha d^3 - 2 C = 0`.
///
/// Bracketed Newton: the bracket `(0, hi]` is grown by doubling until the
/// quintic changes sign, and Newton steps that leave the bracket fall back to
/// bisection.
pub fn equilibrium_distance(alpha: f64, beta: f64, coulomb: f64) -> Result<f64> {
    let admissible = (alpha > 0.0 && beta >= 0.0) || (alpha <= 0.0 && beta > 0.0);
    if !admissible || !(coulomb > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::NoPositiveRoot { alpha, beta });
    }
    let f = |d: f64| {
        let d2 = d * d;
        let d3 = d2 * d;
        (beta * d2 * d3 + 2.0 * alpha * d3 - 2.0 * coulomb, 5.0 * beta * d2 * d2 + 6.0 * alpha * d2)
    };
    let mut hi = {
        let harmonic = if alpha > 0.0 { (coulomb / alpha).cbrt() } else { 0.0 };
        let quartic = if beta > 0.0 { (2.0 * coulomb / beta).powf(0.2) } else { 0.0 };
        harmonic.max(quartic)
    };
    while f(hi).0 < 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NoPositiveRoot { alpha, beta });
        }
    }
    let mut lo = 0.0;
    let mut d = hi;
    for _ in 0..200 {
        let (val, slope) = f(d);
        if val == 0.0 {
            return Ok(d);
        }
        if val < 0.0 {
            lo = d;
        } else {
            hi = d;
        }
        let newton = d - val / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - d).abs() <= 1e-15 * d {
            return Ok(next);
        }
        d = next;
    }
    Ok(d)
}

/// Instantaneous normal-mode frame at the symmetric equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalModeFrame {
    pub d: f64,
    pub omega_minus: f64,
    pub omega_plus: f64,
}

impl NormalModeFrame {
    pub fn eq_positions(&self) -> (f64, f64) {
        (0.5 * self.d, -0.5 * self.d)
    }

    /// Centre-of-mass eigenvector `(1, 1)/sqrt 2`.
    pub fn v_minus() -> [f64; 2] {
        [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2]
    }

    /// Stretch eigenvector `(1, -1)/sqrt 2`.
    pub fn v_plus() -> [f64; 2] {
        [std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2]
    }
}

/// Squared normal-mode frequencies `(lambda_minus, lambda_plus)`.
#[inline]
pub fn mode_eigenvalues(alpha: f64, beta: f64, d: f64, coulomb: f64) -> (f64, f64) {
    let lm = 2.0 * alpha + 3.0 * beta * d * d;
    (lm, lm + 4.0 * coulomb / (d * d * d))
}

pub fn normal_modes(alpha: f64, beta: f64, d: f64, coulomb: f64) -> Result<NormalModeFrame> {
    if !(d > 0.0) {
        return Err(Error::InvalidInput(format!("separation must be positive, got {d}")));
    }
    let (lm, lp) = mode_eigenvalues(alpha, beta, d, coulomb);
    if !(lm > 0.0) {
        return Err(Error::Unstable(lm));
    }
    Ok(NormalModeFrame { d, omega_minus: lm.sqrt(), omega_plus: lp.sqrt() })
}

/// `(alpha, beta, d)` from squared mode frequencies. Accepts negative squares
/// so long as the gap `omega_plus^2 - omega_minus^2` is positive.
pub fn frame_from_squared(om2_minus: f64, om2_plus: f64, coulomb: f64) -> Result<(f64, f64, f64)> {
    let gap = om2_plus - om2_minus;
    if !(gap > 0.0) {
        return Err(Error::InvalidInput(format!(
            "omega_plus^2 must exceed omega_minus^2 (gap = {gap})"
        )));
    }
    let alpha = (3.0 * om2_plus - 5.0 * om2_minus) / 8.0;
    let d = (4.0 * coulomb / gap).cbrt();
    let beta = beta_from_equilibrium(alpha, d, coulomb);
    Ok((alpha, beta, d))
}

pub fn frame_from_frequencies(omega_minus: f64, omega_plus: f64, coulomb: f64) -> Result<(f64, f64, f64)> {
    if !(omega_minus > 0.0 && omega_plus > omega_minus) {
        return Err(Error::InvalidInput(format!(
            "need omega_plus > omega_minus > 0, got ({omega_minus}, {omega_plus})"
        )));
    }
    frame_from_squared(omega_minus * omega_minus, omega_plus * omega_plus, coulomb)
}

/// Quartic coefficient that makes `d` the equilibrium separation for `alpha`.
#[inline]
pub fn beta_from_equilibrium(alpha: f64, d: f64, coulomb: f64) -> f64 {
    let d2 = d * d;
    2.0 * coulomb / (d2 * d2 * d) - 2.0 * alpha / d2
}

/// Local minimum of the two-ion potential nearest to `guess`, by damped
/// Newton iteration with backtracking on the energy.
pub fn find_minimum(params: &PotentialParams, coulomb: f64, guess: (f64, f64)) -> Result<(f64, f64)> {
    let (mut q1, mut q2) = guess;
    let mut energy = potential_energy(params, coulomb, q1, q2)?;
    for _ in 0..200 {
        let g = gradient(params, coulomb, q1, q2);
        let h = hessian(params, coulomb, q1, q2);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let (mut dx1, mut dx2) = if h[0][0] > 0.0 && det > 0.0 {
            (
                -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
                -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
            )
        } else {
            // steepest descent scaled by the largest curvature
            let scale = h[0][0].abs().max(h[1][1].abs()).max(1e-12);
            (-g[0] / scale, -g[1] / scale)
        };
        let mut accepted = false;
        for _ in 0..60 {
            let (n1, n2) = (q1 + dx1, q2 + dx2);
            if n1 > n2 {
                let e = potential_energy(params, coulomb, n1, n2)?;
                if e <= energy {
                    let step = dx1.abs().max(dx2.abs());
                    q1 = n1;
                    q2 = n2;
                    energy = e;
                    accepted = true;
                    if step <= 1e-14 * (1.0 + q1.abs().max(q2.abs())) {
                        return Ok((q1, q2));
                    }
                    break;
                }
            }
            dx1 *= 0.5;
            dx2 *= 0.5;
        }
        if !accepted {
            return Ok((q1, q2));
        }
    }
    Ok((q1, q2))
}

/// Minima of the single-ion tilted double well, `(left, right)`.
pub fn tilted_well_minima(params: &PotentialParams) -> Result<(f64, f64)> {
    if !(params.alpha < 0.0 && params.beta > 0.0) {
        return Err(Error::InvalidInput("double well needs alpha < 0 < beta".into()));
    }
    let q0 = (-params.alpha / (2.0 * params.beta)).sqrt();
    let newton = |mut q: f64| -> Result<f64> {
        for _ in 0..100 {
            let slope = params.external_slope(q);
            let curv = 2.0 * params.alpha + 12.0 * params.beta * q * q;
            if !(curv > 0.0) {
                return Err(Error::LostMinimum(params.lambda));
            }
            let step = slope / curv;
            q -= step;
            if step.abs() <= 1e-15 * q.abs().max(1.0) {
                break;
            }
        }
        let curv = 2.0 * params.alpha + 12.0 * params.beta * q * q;
        if curv > 0.0 { Ok(q) } else { Err(Error::LostMinimum(params.lambda)) }
    };
    let left = newton(-q0)?;
    let right = newton(q0)?;
    // both Newton runs collapsing into one well means the other minimum is gone
    if left >= 0.0 || right <= 0.0 {
        return Err(Error::LostMinimum(params.lambda));
    }
    Ok((left, right))
}

/// Energy difference between the left and right minima of the tilted double well.
pub fn well_energy_difference(params: &PotentialParams) -> Result<f64> {
    let (l, r) = tilted_well_minima(params)?;
    Ok(params.external(l) - params.external(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const C: f64 = 1.0;

    #[test]
    fn pure_coulomb() {
        let p = PotentialParams::default();
        assert_eq!(potential_energy(&p, C, 1.0, -1.0).unwrap(), 0.5);
    }

    #[test]
    fn harmonic_equilibrium_energy() {
        let p = PotentialParams::new(0.5, 0.0);
        let h = 2f64.cbrt() / 2.0;
        let v = potential_energy(&p, C, h, -h).unwrap();
        // independent: 2 * 0.5 * h^2 + 1 / (2h)
        let expect = h * h + 1.0 / (2.0 * h);
        assert!((v - expect).abs() < 1e-15);
        assert!((v - 3.0 * 2f64.powf(-4.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn tilt_cancels_at_symmetric_points() {
        let d = 2f64.cbrt();
        let p = PotentialParams::new(0.5, 0.0);
        let a = potential_energy(&p, C, d / 2.0, -d / 2.0).unwrap();
        let b = potential_energy(&p.with_bias(0.1), C, d / 2.0, -d / 2.0).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn ordering_enforced() {
        let p = PotentialParams::new(0.5, 0.0);
        assert!(matches!(potential_energy(&p, C, -1.0, 1.0), Err(Error::OrderingViolated { .. })));
        assert!(potential_energy(&p, C, 1.0, 1.0).is_err());
    }

    #[test]
    fn quintic_degenerates_to_cubic() {
        let d = equilibrium_distance(0.5, 0.0, C).unwrap();
        assert!((d - 2f64.cbrt()).abs() < 1e-14);
        assert!(equilibrium_distance(-1.0, 0.0, C).is_err());
        assert!(equilibrium_distance(0.0, 0.0, C).is_err());
    }

    #[test]
    fn double_well_round_trip() {
        let c: f64 = 7.35e6;
        let d0 = (2.0 * c).cbrt();
        let alpha = -0.25;
        let beta = beta_from_equilibrium(alpha, 10.0 * d0, c);
        let d = equilibrium_distance(alpha, beta, c).unwrap();
        assert!((d / (10.0 * d0) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn initial_and_final_mode_frequencies() {
        let c: f64 = 7.35e6;
        let d0 = (2.0 * c).cbrt();
        let nm = normal_modes(0.5, 0.0, d0, c).unwrap();
        assert!((nm.omega_minus - 1.0).abs() < 1e-14);
        assert!((nm.omega_plus - 3f64.sqrt()).abs() < 1e-14);

        let (a, b, d) = frame_from_frequencies(1.0, 1.002f64.sqrt(), c).unwrap();
        assert!((d / d0 - 10.0).abs() < 1e-12);
        assert!((a - (3.0 * 1.002 - 5.0) / 8.0).abs() < 1e-15);
        assert!(b > 0.0);
        let nm = normal_modes(a, b, d, c).unwrap();
        assert!((nm.omega_plus - 1.002f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn frame_from_initial_frequencies() {
        let c = 3.0;
        let (a, b, d) = frame_from_frequencies(1.0, 3f64.sqrt(), c).unwrap();
        assert!((a - 0.5).abs() < 1e-15);
        assert!(b.abs() < 1e-12);
        assert!((d - (2.0 * c).cbrt()).abs() < 1e-13);
        assert!(frame_from_frequencies(1.0, 1.0, c).is_err());
        assert!(frame_from_frequencies(2.0, 1.0, c).is_err());
    }

    #[test]
    fn unstable_configuration_rejected() {
        assert!(matches!(normal_modes(-1.0, 0.0, 1.0, 1.0), Err(Error::Unstable(_))));
    }

    #[test]
    fn hessian_structure_and_eigenvectors() {
        let c = 5.0;
        for &(alpha, beta) in &[(0.5, 0.0), (0.1, 0.02), (-0.3, 0.05)] {
            let d = equilibrium_distance(alpha, beta, c).unwrap();
            let h = hessian(&PotentialParams::new(alpha, beta), c, d / 2.0, -d / 2.0);
            assert_eq!(h[0][0], h[1][1]);
            assert_eq!(h[0][1], h[1][0]);
            assert!((h[0][1] + 2.0 * c / d.powi(3)).abs() < 1e-14 * c);
            let nm = normal_modes(alpha, beta, d, c).unwrap();
            for (v, om) in [(NormalModeFrame::v_minus(), nm.omega_minus), (NormalModeFrame::v_plus(), nm.omega_plus)] {
                let hv = [h[0][0] * v[0] + h[0][1] * v[1], h[1][0] * v[0] + h[1][1] * v[1]];
                let lam = om * om;
                assert!((hv[0] - lam * v[0]).abs() < 1e-12 * (1.0 + lam));
                assert!((hv[1] - lam * v[1]).abs() < 1e-12 * (1.0 + lam));
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_equilibrium() {
        let c: f64 = 7.35e6;
        for &(alpha, beta) in &[(0.5, 0.0), (0.0, 1e-6), (-0.25, 8.3e-8)] {
            let p = PotentialParams::new(alpha, beta);
            let d = equilibrium_distance(alpha, beta, c).unwrap();
            let h = 1e-4;
            let (q1, q2) = (d / 2.0, -d / 2.0);
            let v = |a: f64, b: f64| potential_energy(&p, c, a, b).unwrap();
            let g1 = (v(q1 + h, q2) - v(q1 - h, q2)) / (2.0 * h);
            let g2 = (v(q1, q2 + h) - v(q1, q2 - h)) / (2.0 * h);
            // finite-difference noise is eps * V / h
            let noise = 1e-16 * v(q1, q2).abs() / h;
            assert!(g1.abs() < 1e-8 + 10.0 * noise, "g1 = {g1}");
            assert!(g2.abs() < 1e-8 + 10.0 * noise, "g2 = {g2}");
            let g = gradient(&p, c, q1, q2);
            assert!(g[0].abs() < 1e-8 && g[1].abs() < 1e-8, "{g:?}");
        }
    }

    #[test]
    fn minimum_search_matches_equilibrium() {
        let c: f64 = 7.35e6;
        let p = PotentialParams::new(-0.25, 8.3e-8);
        let d = equilibrium_distance(p.alpha, p.beta, c).unwrap();
        let (q1, q2) = find_minimum(&p, c, (d / 2.0 + 3.0, -d / 2.0 + 1.0)).unwrap();
        assert!((q1 - d / 2.0).abs() < 1e-9 && (q2 + d / 2.0).abs() < 1e-9);
    }

    #[test]
    fn tilted_wells() {
        let p = PotentialParams::new(-0.25, 8.3e-8);
        let (l, r) = tilted_well_minima(&p).unwrap();
        assert!((l + r).abs() < 1e-9);
        assert_eq!(well_energy_difference(&p).unwrap().abs() < 1e-9, true);
        let q0 = r;
        let lam = 0.4;
        let de = well_energy_difference(&p.with_bias(lam)).unwrap();
        // to leading order the tilt lifts the right well by lambda * 2 q0
        assert!((de / (-2.0 * lam * q0) - 1.0).abs() < 1e-3, "de = {de}");
        let huge = p.with_bias(1e3);
        assert!(matches!(tilted_well_minima(&huge), Err(Error::LostMinimum(_))));
    }

    proptest! {
        #[test]
        fn quintic_residual_small(alpha in -2.0f64..2.0, beta in 1e-9f64..1.0, c in 0.1f64..1e7) {
            let d = equilibrium_distance(alpha, beta, c).unwrap();
            let terms = [beta * d.powi(5), 2.0 * alpha * d.powi(3), 2.0 * c];
            let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
            let res = terms[0] + terms[1] - terms[2];
            prop_assert!(res.abs() < 1e-12 * c.max(scale * 1e-3), "residual {res}, scale {scale}");
        }

        #[test]
        fn frequency_round_trip(om_m in 0.05f64..5.0, ratio in 1.0001f64..4.0, c in 0.1f64..1e7) {
            let om_p = om_m * ratio;
            let (a, b, d) = frame_from_frequencies(om_m, om_p, c).unwrap();
            let nm = normal_modes(a, b, d, c).unwrap();
            prop_assert!((nm.omega_minus / om_m - 1.0).abs() < 1e-10);
            prop_assert!((nm.omega_plus / om_p - 1.0).abs() < 1e-10);
            let diff = nm.omega_plus.powi(2) - nm.omega_minus.powi(2);
            prop_assert!((diff / (4.0 * c / d.powi(3)) - 1.0).abs() < 1e-10);
        }
    }
}
