//! First-order energy shifts from the anharmonic Coulomb terms.
//!
//! The Taylor terms of `C / (q1 - q2)` beyond second order act only on the
//! stretch coordinate. In the mass-weighted stretch coordinate `q+` the
//! j-th term is `(-1)^(j+1) C / d^(j+1) (sqrt(2/m) q+)^j`, and its shift is
//! its expectation in the expanding-mode state `|n>` with width `rho` and
//! centre `x`. Internal units throughout, so `m = 1`.

use crate::error::{Error, Result};

/// Coefficient multiplying `q+^j` in the j-th anharmonic term.
pub fn delta_v_coefficient(j: u32, d: f64, coulomb: f64) -> Result<f64> {
    if j < 3 {
        return Err(Error::InvalidInput(format!("anharmonic order must be at least 3, got {j}")));
    }
    if !(d > 0.0) {
        return Err(Error::InvalidInput(format!("separation must be positive, got {d}")));
    }
    let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
    Ok(sign * coulomb / d.powi(j as i32 + 1) * 2f64.powf(0.5 * j as f64))
}

/// `<n| sigma^k |n>` for the static oscillator eigenstate of frequency
/// `omega0` (unit mass, `hbar = 1`), from the ladder-operator representation
/// `sigma = (a + a^dagger) / sqrt(2 omega0)`.
pub fn oscillator_moment(n: usize, k: u32, omega0: f64) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let len = n + k as usize + 2;
    let mut v = vec![0.0; len];
    v[n] = 1.0;
    let scale = 1.0 / (2.0 * omega0).sqrt();
    for _ in 0..k {
        let mut next = vec![0.0; len];
        for m in 0..len {
            let mut acc = 0.0;
            if m > 0 {
                acc += (m as f64).sqrt() * v[m - 1];
            }
            if m + 1 < len {
                acc += ((m + 1) as f64).sqrt() * v[m + 1];
            }
            next[m] = acc * scale;
        }
        v = next;
    }
    v[n]
}

/// `<q+^j>` in the state with quantum number `n`, width scale `rho` and
/// centre `x`, where `sigma = (q+ - x) / rho`.
pub fn mode_moment(n: usize, j: u32, rho: f64, x: f64, omega0: f64) -> f64 {
    let mut binom = 1.0;
    let mut total = 0.0;
    for k in 0..=j {
        if k > 0 {
            binom = binom * (j - k + 1) as f64 / k as f64;
        }
        let m = oscillator_moment(n, k, omega0);
        if m != 0.0 {
            total += binom * x.powi((j - k) as i32) * rho.powi(k as i32) * m;
        }
    }
    total
}

/// Unperturbed stretch-mode snapshot at the final time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StretchState {
    pub rho: f64,
    pub rho_dot: f64,
    pub x: f64,
    /// Initial stretch frequency `Omega+(0)`, which fixes the basis states.
    pub omega0: f64,
}

/// First-order shift `<psi_n| delta V^(j) |psi_n>`. `rho_dot` only changes
/// the phase of the state and drops out.
pub fn delta_energy(n: usize, j: u32, state: &StretchState, d: f64, coulomb: f64) -> Result<f64> {
    let c = delta_v_coefficient(j, d, coulomb)?;
    Ok(c * mode_moment(n, j, state.rho, state.x, state.omega0))
}

/// Closed form of the cubic ground-state shift, `c3 (x^3 + 3 x s^2)`,
/// `s^2 = rho^2 / (2 omega0)`.
pub fn cubic_ground_shift(state: &StretchState, d: f64, coulomb: f64) -> f64 {
    let c3 = coulomb / d.powi(4) * 2f64.powf(1.5);
    let s2 = state.rho * state.rho / (2.0 * state.omega0);
    c3 * (state.x.powi(3) + 3.0 * state.x * s2)
}
