//! Derivative-free Nelder-Mead simplex minimizer.
//!
//! Classic coefficients (reflection 1, expansion 2, contraction 1/2,
//! shrink 1/2) and the accept/reject rules of the Lagarias et al. variant.
//! Non-finite objective values are treated as `+inf`, so infeasible points
//! are simply never accepted.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Initial simplex edge along each coordinate.
    pub step: f64,
    pub max_iters: usize,
    /// Convergence requires the simplex diameter (max-norm) below this.
    pub x_tol: f64,
    /// ... and the spread of objective values below this.
    pub f_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { step: 0.1, max_iters: 2000, x_tol: 1e-10, f_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const RHO: f64 = 1.0;
const CHI: f64 = 2.0;
const PSI: f64 = 0.5;
const SIGMA: f64 = 0.5;

pub fn minimize<F>(mut objective: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64]| {
        evals += 1;
        let v = objective(x);
        if v.is_finite() { v } else { f64::INFINITY }
    };

    if n == 0 {
        let f = eval(x0);
        return NelderMeadResult { x: vec![], f, iterations: 0, evaluations: 1, converged: true };
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.step;
        let f = eval(&v);
        simplex.push((v, f));
    }

    let point = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(ai, bi)| ai + t * (bi - ai)).collect()
    };

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // stable sort keeps earlier vertices first on ties, so runs are deterministic
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&best.0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        let spread = simplex[1..].iter().map(|(_, f)| (f - best.1).abs()).fold(0.0f64, f64::max);
        if diameter <= opts.x_tol && spread <= opts.f_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let (worst, f_worst) = simplex[n].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[n - 1].1;

        let xr = point(&centroid, &worst, -RHO);
        let fr = eval(&xr);
        if fr < f_best {
            let xe = point(&centroid, &worst, -RHO * CHI);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[n] = (xr, fr);
            continue;
        }
        let shrink = if fr < f_worst {
            let xc = point(&centroid, &worst, -RHO * PSI);
            let fc = eval(&xc);
            if fc <= fr {
                simplex[n] = (xc, fc);
                false
            } else {
                true
            }
        } else {
            let xcc = point(&centroid, &worst, PSI);
            let fcc = eval(&xcc);
            if fcc < f_worst {
                simplex[n] = (xcc, fcc);
                false
            } else {
                true
            }
        };
        if shrink {
            let anchor = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                let v = point(&anchor, &vertex.0, SIGMA);
                let f = eval(&v);
                *vertex = (v, f);
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    NelderMeadResult { x, f, iterations, evaluations: evals, converged }
}
