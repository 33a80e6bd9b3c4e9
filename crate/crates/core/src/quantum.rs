//! Split-operator propagation of the two-ion wavefunction.
//!
//! Coordinates are the centre of mass `Q = (q1 + q2)/2` (mass 2) and the
//! separation `r = q1 - q2` (mass 1/2). The separation axis is a window
//! `r = d(t) + y` that moves with the designed equilibrium distance, so a
//! modest uniform grid in `y` covers a separation growing by tens of
//! micrometres. Writing `psi(Q, r) = exp(i mu d' y) phi(Q, y)` removes the
//! frame velocity exactly; `phi` then evolves under
//!
//! `H' = P^2/(2M) + p_y^2/(2 mu) + V(Q, d + y) - V(0, d) + mu d'' y`
//!
//! up to a global phase. Lab-frame energies restore the boost,
//! `p_r = p_y + mu d'`. Internal units throughout (`hbar = m = omega0 = 1`).

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::classical::{ExcitationReport, Method};
use crate::error::{Error, Result};
use crate::potential::{self, PotentialParams};
use crate::schedule::ControlSchedule;
use crate::units::{TrapSpec, Unit};

const MASS_Q: f64 = 2.0;
const MASS_R: f64 = 0.5;

/// Default real-time steps per protocol.
pub const DEFAULT_STEPS: usize = 20_000;

/// Largest edge-to-peak amplitude ratio accepted after propagation.
pub const LEAKAGE_THRESHOLD: f64 = 1e-6;

/// Uniform grid: `Q` in `[-q_half, q_half)`, `y` in `[-y_half, y_half)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nq: usize,
    pub q_half: f64,
    pub ny: usize,
    pub y_half: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { nq: 64, q_half: 8.0, ny: 512, y_half: 32.0 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nq < 8 || self.ny < 8 || !(self.q_half > 0.0) || !(self.y_half > 0.0) {
            return Err(Error::InvalidInput(format!("degenerate grid {self:?}")));
        }
        Ok(())
    }

    pub fn dq(&self) -> f64 {
        2.0 * self.q_half / self.nq as f64
    }

    pub fn dy(&self) -> f64 {
        2.0 * self.y_half / self.ny as f64
    }

    pub fn q(&self, i: usize) -> f64 {
        -self.q_half + i as f64 * self.dq()
    }

    pub fn y(&self, j: usize) -> f64 {
        -self.y_half + j as f64 * self.dy()
    }

    /// Grid sized from a classical trajectory of the same protocol: the window
    /// covers the largest excursion from the moving frame plus a margin, and
    /// the spacing resolves the largest relative momentum. Point counts are
    /// powers of two.
    pub fn fit_trajectory<S: ControlSchedule + ?Sized>(schedule: &S, rows: &[crate::classical::TrajectoryRow]) -> Self {
        let (mut y_max, mut p_max, mut q_max, mut pq_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for row in rows {
            let s = row.state;
            let k = schedule.separation(s.t);
            y_max = y_max.max((s.q1 - s.q2 - k.d).abs());
            p_max = p_max.max((MASS_R * (s.p1 - s.p2 - k.d_dot)).abs());
            q_max = q_max.max((0.5 * (s.q1 + s.q2)).abs());
            pq_max = pq_max.max((s.p1 + s.p2).abs());
        }
        let size = |half: f64, p: f64, floor: usize| {
            let n = (2.0 * half * (p + 10.0) / PI).ceil() as usize;
            n.next_power_of_two().max(floor)
        };
        let y_half = (y_max + 16.0).ceil();
        let q_half = (q_max + 8.0).ceil();
        GridSpec { nq: size(q_half, pq_max, 32), q_half, ny: size(y_half, p_max, 128), y_half }
    }

    /// Both axes doubled in point count at fixed extent.
    pub fn refined(&self) -> GridSpec {
        GridSpec { nq: 2 * self.nq, ny: 2 * self.ny, ..*self }
    }

    fn cell(&self) -> f64 {
        self.dq() * self.dy()
    }
}

fn wavenumbers(n: usize, spacing: f64) -> Vec<f64> {
    let base = 2.0 * PI / (n as f64 * spacing);
    (0..n).map(|k| if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 } * base).collect()
}

/// Amplitudes `phi(Q_i, y_j)` stored row-major in `Q`, with the frame they
/// live in.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    pub grid: GridSpec,
    /// Frame separation: `r = d + y`.
    pub d: f64,
    /// Frame momentum boost `mu d'`.
    pub boost: f64,
    pub t: f64,
    pub amplitudes: Vec<Complex64>,
}

impl GridWavefunction {
    /// Separable Gaussian centred at `(q_centre, d + y_centre)` with the
    /// given harmonic frequencies for the two axes.
    pub fn gaussian(grid: GridSpec, d: f64, q_centre: f64, y_centre: f64, omega_q: f64, omega_y: f64) -> Result<Self> {
        grid.validate()?;
        let mut amplitudes = Vec::with_capacity(grid.nq * grid.ny);
        for i in 0..grid.nq {
            let dq = grid.q(i) - q_centre;
            for j in 0..grid.ny {
                let dy = grid.y(j) - y_centre;
                let e = -0.5 * MASS_Q * omega_q * dq * dq - 0.5 * MASS_R * omega_y * dy * dy;
                amplitudes.push(Complex64::new(e.exp(), 0.0));
            }
        }
        let mut wf = GridWavefunction { grid, d, boost: 0.0, t: 0.0, amplitudes };
        wf.normalize();
        Ok(wf)
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.cell()
    }

    pub fn normalize(&mut self) {
        let s = 1.0 / self.norm().sqrt();
        self.amplitudes.iter_mut().for_each(|a| *a *= s);
    }

    /// `max |phi|` on the outermost rows and columns relative to the global maximum.
    pub fn edge_ratio(&self) -> f64 {
        let (nq, ny) = (self.grid.nq, self.grid.ny);
        let peak = self.amplitudes.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let mut edge = 0.0f64;
        for i in 0..nq {
            for j in [0, ny - 1] {
                edge = edge.max(self.amplitudes[i * ny + j].norm());
            }
        }
        for j in 0..ny {
            for i in [0, nq - 1] {
                edge = edge.max(self.amplitudes[i * ny + j].norm());
            }
        }
        edge / peak
    }

    /// `(<Q>, <r>)`.
    pub fn mean_position(&self) -> (f64, f64) {
        let (mut q, mut y) = (0.0, 0.0);
        for i in 0..self.grid.nq {
            for j in 0..self.grid.ny {
                let p = self.amplitudes[i * self.grid.ny + j].norm_sqr();
                q += p * self.grid.q(i);
                y += p * self.grid.y(j);
            }
        }
        let c = self.grid.cell();
        (q * c, self.d + y * c)
    }

    /// Marginal densities `(|phi|^2 integrated over y, ... over Q)`.
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let (nq, ny) = (self.grid.nq, self.grid.ny);
        let mut mq = vec![0.0; nq];
        let mut my = vec![0.0; ny];
        for i in 0..nq {
            for j in 0..ny {
                let p = self.amplitudes[i * ny + j].norm_sqr();
                mq[i] += p * self.grid.dy();
                my[j] += p * self.grid.dq();
            }
        }
        (mq, my)
    }

    /// Marginal CSV `axis,x_m,density_per_m` with `axis` in {Q, r}.
    pub fn write_marginals_csv<W: Write>(&self, trap: &TrapSpec, out: W) -> Result<()> {
        let l = trap.scale(Unit::Length);
        let (mq, my) = self.marginals();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["axis", "x_m", "density_per_m"])?;
        for (i, p) in mq.iter().enumerate() {
            w.write_record(["Q".to_string(), format!("{:.12e}", self.grid.q(i) * l), format!("{:.12e}", p / l)])?;
        }
        for (j, p) in my.iter().enumerate() {
            let r = self.d + self.grid.y(j);
            w.write_record(["r".to_string(), format!("{:.12e}", r * l), format!("{:.12e}", p / l)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Binary snapshot: magic `IONWF001`, then little-endian
    /// `nq: u64, q_half: f64, ny: u64, y_half: f64, d: f64, boost: f64, t: f64`
    /// (internal units), then `nq * ny` interleaved `(re, im)` f64 pairs,
    /// row-major in `Q`. The lab wavefunction is
    /// `psi(Q, d + y) = exp(i boost y) phi(Q, y)`.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(SNAPSHOT_MAGIC)?;
        out.write_all(&(self.grid.nq as u64).to_le_bytes())?;
        out.write_all(&self.grid.q_half.to_le_bytes())?;
        out.write_all(&(self.grid.ny as u64).to_le_bytes())?;
        out.write_all(&self.grid.y_half.to_le_bytes())?;
        for v in [self.d, self.boost, self.t] {
            out.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(16 * self.amplitudes.len());
        for a in &self.amplitudes {
            buf.extend_from_slice(&a.re.to_le_bytes());
            buf.extend_from_slice(&a.im.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::InvalidInput("not a wavefunction snapshot".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |input: &mut R| -> Result<[u8; 8]> {
            input.read_exact(&mut word)?;
            Ok(word)
        };
        let nq = u64::from_le_bytes(next(&mut input)?) as usize;
        let q_half = f64::from_le_bytes(next(&mut input)?);
        let ny = u64::from_le_bytes(next(&mut input)?) as usize;
        let y_half = f64::from_le_bytes(next(&mut input)?);
        let d = f64::from_le_bytes(next(&mut input)?);
        let boost = f64::from_le_bytes(next(&mut input)?);
        let t = f64::from_le_bytes(next(&mut input)?);
        let grid = GridSpec { nq, q_half, ny, y_half };
        grid.validate()?;
        let mut raw = vec![0u8; 16 * nq * ny];
        input.read_exact(&mut raw)?;
        let amplitudes = raw
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                    f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
                )
            })
            .collect();
        Ok(GridWavefunction { grid, d, boost, t, amplitudes })
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        self.write_snapshot(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"IONWF001";

/// Instantaneous Hamiltonian data for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub params: PotentialParams,
    pub d: f64,
    pub boost: f64,
    /// Comoving force term `mu d''`.
    pub accel: f64,
}

impl Frame {
    /// Static frame (no motion) at separation `d`.
    pub fn fixed(params: PotentialParams, d: f64) -> Self {
        Frame { params, d, boost: 0.0, accel: 0.0 }
    }

    fn from_schedule<S: ControlSchedule + ?Sized>(schedule: &S, t: f64, lambda: f64) -> Self {
        let k = schedule.separation(t);
        Frame { params: schedule.params(t).with_bias(lambda), d: k.d, boost: MASS_R * k.d_dot, accel: MASS_R * k.d_ddot }
    }

    /// Lab reference energy `V(Q = 0, r = d)` without tilt, subtracted from the grid potential.
    pub fn reference_energy(&self, coulomb: f64) -> f64 {
        let d2 = self.d * self.d;
        let pair = if coulomb == 0.0 { 0.0 } else { coulomb / self.d };
        self.params.alpha * d2 / 2.0 + self.params.beta * d2 * d2 / 8.0 + pair
    }
}

/// Cancellation-free `V(Q, d + y) - V(0, d)`, lab potential (no comoving term).
#[inline]
fn potential_rel(p: &PotentialParams, coulomb: f64, d: f64, q: f64, y: f64) -> f64 {
    let r = d + y;
    let q2 = q * q;
    let dr2 = y * (2.0 * d + y); // r^2 - d^2
    let pair = if coulomb == 0.0 { 0.0 } else { coulomb * y / (d * r) };
    2.0 * p.alpha * q2 + 2.0 * p.beta * q2 * q2 + 3.0 * p.beta * q2 * r * r + 2.0 * p.lambda * q
        + 0.5 * p.alpha * dr2
        + p.beta * dr2 * (r * r + d * d) / 8.0
        - pair
}

/// FFT plans and work buffers for one grid.
pub struct SplitOperator {
    grid: GridSpec,
    coulomb: f64,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
    fft_q: Arc<dyn Fft<f64>>,
    ifft_q: Arc<dyn Fft<f64>>,
    /// Kinetic energy in transposed `[ky][kQ]` layout.
    kinetic: Vec<f64>,
    ky: Vec<f64>,
    work: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl SplitOperator {
    pub fn new(grid: GridSpec, coulomb: f64) -> Result<Self> {
        grid.validate()?;
        let mut planner = FftPlanner::new();
        let fft_y = planner.plan_fft_forward(grid.ny);
        let ifft_y = planner.plan_fft_inverse(grid.ny);
        let fft_q = planner.plan_fft_forward(grid.nq);
        let ifft_q = planner.plan_fft_inverse(grid.nq);
        let kq = wavenumbers(grid.nq, grid.dq());
        let ky = wavenumbers(grid.ny, grid.dy());
        let mut kinetic = Vec::with_capacity(grid.nq * grid.ny);
        for y in &ky {
            for q in &kq {
                kinetic.push(q * q / (2.0 * MASS_Q) + y * y / (2.0 * MASS_R));
            }
        }
        let scratch_len = [&fft_y, &ifft_y, &fft_q, &ifft_q].iter().map(|f| f.get_inplace_scratch_len()).max().unwrap_or(0);
        Ok(SplitOperator {
            grid,
            coulomb,
            fft_y,
            ifft_y,
            fft_q,
            ifft_q,
            kinetic,
            ky,
            work: vec![Complex64::default(); grid.nq * grid.ny],
            scratch: vec![Complex64::default(); scratch_len],
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Forward transform of `data` into `self.work` in `[ky][kQ]` layout (unnormalized).
    fn forward(&mut self, data: &mut [Complex64]) {
        let (nq, ny) = (self.grid.nq, self.grid.ny);
        self.fft_y.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.work, nq, ny);
        self.fft_q.process_with_scratch(&mut self.work, &mut self.scratch);
    }

    /// Inverse of [`Self::forward`] back into `data` (unnormalized).
    fn inverse(&mut self, data: &mut [Complex64]) {
        let (nq, ny) = (self.grid.nq, self.grid.ny);
        self.ifft_q.process_with_scratch(&mut self.work, &mut self.scratch);
        transpose(&self.work, data, ny, nq);
        self.ifft_y.process_with_scratch(data, &mut self.scratch);
    }

    fn potential_grid(&self, frame: &Frame, comoving: bool) -> Vec<f64> {
        let g = self.grid;
        let mut v = Vec::with_capacity(g.nq * g.ny);
        for i in 0..g.nq {
            let q = g.q(i);
            for j in 0..g.ny {
                let y = g.y(j);
                let mut e = potential_rel(&frame.params, self.coulomb, frame.d, q, y);
                if comoving {
                    e += frame.accel * y;
                }
                v.push(e);
            }
        }
        v
    }

    /// Lab-frame `<H> - V(0, d)` of `wf` for `frame` (the frame must match `wf`).
    pub fn energy(&mut self, wf: &GridWavefunction, frame: &Frame) -> f64 {
        let v = self.potential_grid(frame, false);
        let cell = self.grid.cell();
        let pot: f64 = wf.amplitudes.iter().zip(&v).map(|(a, e)| a.norm_sqr() * e).sum::<f64>() * cell;
        let mut data = wf.amplitudes.clone();
        self.forward(&mut data);
        let (nq, ny) = (self.grid.nq, self.grid.ny);
        let mut kin = 0.0;
        let mut total = 0.0;
        for jy in 0..ny {
            // kinetic in the comoving frame plus the boost cross terms
            let shift = (self.ky[jy] + wf.boost).powi(2) - self.ky[jy].powi(2);
            for iq in 0..nq {
                let idx = jy * nq + iq;
                let p = self.work[idx].norm_sqr();
                kin += p * (self.kinetic[idx] + shift / (2.0 * MASS_R));
                total += p;
            }
        }
        pot + kin / total * wf.norm()
    }

    /// One Strang step `exp(-iV dt/2) exp(-iT dt) exp(-iV dt/2)`, with
    /// `half_phase = exp(-i V dt / 2)` precomputed.
    fn real_step(&mut self, data: &mut [Complex64], half_phase: &[Complex64], kin_phase: &[Complex64]) {
        data.iter_mut().zip(half_phase).for_each(|(a, p)| *a *= p);
        self.forward(data);
        self.work.iter_mut().zip(kin_phase).for_each(|(a, p)| *a *= p);
        self.inverse(data);
        data.iter_mut().zip(half_phase).for_each(|(a, p)| *a *= p);
    }

    fn kinetic_phase(&self, dt: f64) -> Vec<Complex64> {
        let n = (self.grid.nq * self.grid.ny) as f64;
        self.kinetic.iter().map(|k| Complex64::from_polar(1.0 / n, -k * dt)).collect()
    }

    /// Ground state of the static potential `frame` by imaginary-time
    /// propagation from a harmonic Gaussian seeded at the classical minimum.
    pub fn ground_state(&mut self, frame: &Frame, opts: &GroundStateOptions) -> Result<(GridWavefunction, f64)> {
        let frame = Frame { boost: 0.0, accel: 0.0, ..*frame };
        frame.params.validate()?;
        let min = crate::classical::equilibrium_state(&frame.params, self.coulomb, frame.d)?;
        let (qc, rc) = (0.5 * (min.q1 + min.q2), min.q1 - min.q2);
        let h = potential::hessian(&frame.params, self.coulomb, min.q1, min.q2);
        // curvatures along Q and r for unit ion mass
        let kq = (h[0][0] + h[1][1] + 2.0 * h[0][1]) / MASS_Q;
        let kr = (h[0][0] + h[1][1] - 2.0 * h[0][1]) / 4.0 / MASS_R;
        let mut wf = GridWavefunction::gaussian(self.grid, frame.d, qc, rc - frame.d, kq.max(1e-3).sqrt(), kr.max(1e-3).sqrt())?;
        let v = self.potential_grid(&frame, false);
        let dtau = opts.dtau;
        let half: Vec<Complex64> = v.iter().map(|e| Complex64::new((-0.5 * dtau * e).exp(), 0.0)).collect();
        let n = (self.grid.nq * self.grid.ny) as f64;
        let kin: Vec<Complex64> = self.kinetic.iter().map(|k| Complex64::new((-k * dtau).exp() / n, 0.0)).collect();
        let mut energy = self.energy(&wf, &frame);
        let mut data = std::mem::take(&mut wf.amplitudes);
        for block in 0..opts.max_steps.div_ceil(opts.check_every) {
            for _ in 0..opts.check_every {
                self.real_step(&mut data, &half, &kin);
                let s = 1.0 / (data.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.cell()).sqrt();
                data.iter_mut().for_each(|a| *a *= s);
            }
            wf.amplitudes = std::mem::take(&mut data);
            let e = self.energy(&wf, &frame);
            let per_step = (e - energy).abs() / opts.check_every as f64;
            energy = e;
            if per_step < opts.tolerance && block > 0 {
                return Ok((wf, energy));
            }
            data = std::mem::take(&mut wf.amplitudes);
        }
        Err(Error::NonConvergence { iterations: opts.max_steps, best: energy })
    }

    /// Propagate `initial` through `schedule` with tilt `lambda`.
    pub fn propagate<S: ControlSchedule + ?Sized>(
        &mut self,
        schedule: &S,
        initial: &GridWavefunction,
        lambda: f64,
        steps: usize,
        mut observer: impl FnMut(usize, &GridWavefunction),
    ) -> Result<GridWavefunction> {
        if steps == 0 {
            return Err(Error::InvalidInput("need at least one step".into()));
        }
        if initial.grid != self.grid {
            return Err(Error::InvalidInput("wavefunction grid does not match the propagator".into()));
        }
        let f0 = Frame::from_schedule(schedule, 0.0, lambda);
        if (initial.d - f0.d).abs() > 1e-9 * f0.d || (initial.boost - f0.boost).abs() > 1e-12 {
            return Err(Error::InvalidInput("initial state is not in the schedule's starting frame".into()));
        }
        let tau = schedule.duration();
        let dt = tau / steps as f64;
        let kin = self.kinetic_phase(dt);
        let g = self.grid;
        let mut wf = initial.clone();
        let mut data = std::mem::take(&mut wf.amplitudes);
        let mut half = vec![Complex64::default(); data.len()];
        for k in 0..steps {
            let t0 = k as f64 * dt;
            let t1 = if k + 1 == steps { tau } else { t0 + dt };
            let mid = Frame::from_schedule(schedule, t0 + 0.5 * dt, lambda);
            let b = Frame::from_schedule(schedule, t1, lambda);
            for i in 0..g.nq {
                let q = g.q(i);
                for j in 0..g.ny {
                    let y = g.y(j);
                    let e = potential_rel(&mid.params, self.coulomb, mid.d, q, y) + mid.accel * y;
                    half[i * g.ny + j] = Complex64::from_polar(1.0, -0.5 * dt * e);
                }
            }
            self.real_step(&mut data, &half, &kin);
            if k % 256 == 255 && !data[0].re.is_finite() {
                return Err(Error::Integration { t: t1, reason: "non-finite amplitudes".into() });
            }
            wf.t = t1;
            wf.d = b.d;
            wf.boost = b.boost;
            if observer_wants(k, steps) {
                wf.amplitudes = std::mem::take(&mut data);
                observer(k + 1, &wf);
                data = std::mem::take(&mut wf.amplitudes);
            }
        }
        wf.amplitudes = data;
        if wf.amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::Integration { t: tau, reason: "non-finite amplitudes".into() });
        }
        let leak = wf.edge_ratio();
        if leak > LEAKAGE_THRESHOLD {
            return Err(Error::Leakage(leak));
        }
        Ok(wf)
    }
}

fn observer_wants(k: usize, steps: usize) -> bool {
    let every = (steps / 100).max(1);
    (k + 1) % every == 0 || k + 1 == steps
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for i in 0..rows {
        for j in 0..cols {
            dst[j * rows + i] = src[i * cols + j];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundStateOptions {
    pub dtau: f64,
    pub max_steps: usize,
    pub check_every: usize,
    /// Convergence when the energy changes by less than this per step.
    pub tolerance: f64,
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        GroundStateOptions { dtau: 0.01, max_steps: 20_000, check_every: 50, tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumOptions {
    /// Explicit grid; `None` fits one to a classical run of the same protocol.
    pub grid: Option<GridSpec>,
    pub steps: usize,
    pub ground: GroundStateOptions,
}

impl Default for QuantumOptions {
    fn default() -> Self {
        QuantumOptions { grid: None, steps: DEFAULT_STEPS, ground: GroundStateOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumRun {
    pub initial: GridWavefunction,
    pub final_state: GridWavefunction,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub final_ground_energy: f64,
    pub report: ExcitationReport,
}

/// Ground state of the initial (tilted) potential, propagation through the
/// schedule, and the excitation above the final (tilted) ground state.
pub fn simulate_quantum<S: ControlSchedule + ?Sized>(
    schedule: &S,
    trap: &TrapSpec,
    lambda: f64,
    opts: &QuantumOptions,
) -> Result<QuantumRun> {
    let grid = match opts.grid {
        Some(g) => g,
        None => {
            let copts = crate::classical::ClassicalOptions { samples: 4000, ..Default::default() };
            let run = crate::classical::propagate_classical(schedule, trap, None, lambda, &copts)?;
            GridSpec::fit_trajectory(schedule, &run.trajectory)
        }
    };
    let mut op = SplitOperator::new(grid, trap.coulomb_internal())?;
    let f0 = Frame::from_schedule(schedule, 0.0, lambda);
    let (mut initial, initial_energy) = op.ground_state(&f0, &opts.ground)?;
    initial.boost = f0.boost;
    let final_state = op.propagate(schedule, &initial, lambda, opts.steps, |_, _| {})?;
    let f1 = Frame::from_schedule(schedule, schedule.duration(), lambda);
    let final_energy = op.energy(&final_state, &f1);
    let (_, final_ground_energy) = op.ground_state(&f1, &opts.ground)?;
    let report = excitation_energy_quantum(final_energy, final_ground_energy, &f1, trap);
    Ok(QuantumRun { initial, final_state, initial_energy, final_energy, final_ground_energy, report })
}

/// Excitation `E - E0` from grid energies measured relative to the same frame reference.
pub fn excitation_energy_quantum(energy: f64, ground: f64, frame: &Frame, trap: &TrapSpec) -> ExcitationReport {
    let offset = frame.reference_energy(trap.coulomb_internal());
    ExcitationReport {
        energy_final_j: trap.to_si(energy + offset, Unit::Energy),
        energy_reference_j: trap.to_si(ground + offset, Unit::Energy),
        excitation_quanta: energy - ground,
        per_mode: None,
        method: Method::Quantum,
    }
}

/// Apply the stretch-mode raising operator of frequency `omega` about the
/// state's mean separation, `a+ = sqrt(mu w / 2) (y - <y>) - i p_y / sqrt(2 mu w)`,
/// and renormalize.
pub fn raise_stretch(op: &mut SplitOperator, wf: &GridWavefunction, omega: f64) -> GridWavefunction {
    let g = op.grid;
    let (_, r_mean) = wf.mean_position();
    let y_mean = r_mean - wf.d;
    let mut dphi = wf.amplitudes.clone();
    op.forward(&mut dphi);
    let n = (g.nq * g.ny) as f64;
    for jy in 0..g.ny {
        let k = op.ky[jy];
        for iq in 0..g.nq {
            // d/dy -> i k
            op.work[jy * g.nq + iq] *= Complex64::new(0.0, k / n);
        }
    }
    op.inverse(&mut dphi);
    let a = (MASS_R * omega / 2.0).sqrt();
    let b = 1.0 / (2.0 * MASS_R * omega).sqrt();
    let mut out = wf.clone();
    for i in 0..g.nq {
        for j in 0..g.ny {
            let idx = i * g.ny + j;
            // -i p = -i (-i d/dy) = -d/dy
            out.amplitudes[idx] = wf.amplitudes[idx] * a * (g.y(j) - y_mean) - dphi[idx] * b;
        }
    }
    out.normalize();
    out
}
