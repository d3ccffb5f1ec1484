//! Box-constrained Nelder–Mead minimization.

use serde::Serialize;

#[derive(Clone, Debug)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop once every vertex is within this ∞-norm distance of the best one.
    pub tol: f64,
    pub initial_step: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub trace: Vec<f64>,
    /// Number of trial points that had to be projected onto the box.
    pub projections: usize,
}

/// Minimizes `f` from `x0`. Non-finite objective values count as `+∞`.
/// Uses the dimension-adaptive coefficients of Gao and Han.
pub fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult {
    let n = x0.len();
    assert!(n > 0 && opts.lower.len() == n && opts.upper.len() == n);
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut projections = 0usize;
    let mut project = |x: &mut Vec<f64>| {
        let mut hit = false;
        for k in 0..n {
            let c = x[k].clamp(opts.lower[k], opts.upper[k]);
            if c != x[k] {
                hit = true;
                x[k] = c;
            }
        }
        if hit {
            projections += 1;
        }
    };
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut start = x0.to_vec();
    project(&mut start);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(&start);
    simplex.push((start.clone(), f0));
    for k in 0..n {
        let mut v = start.clone();
        v[k] += opts.initial_step;
        if v[k] > opts.upper[k] {
            v[k] = start[k] - opts.initial_step;
        }
        project(&mut v);
        let fv = eval(&v);
        simplex.push((v, fv));
    }

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for k in 0..n {
                centroid[k] += v[k] / nf;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (worst.0[k] - centroid[k])).collect() };

        let mut xr = along(-alpha);
        project(&mut xr);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let mut xe = along(-alpha * beta);
            project(&mut xe);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (mut xc, outside) = if fr < worst.1 { (along(-alpha * gamma), true) } else { (along(gamma), false) };
            project(&mut xc);
            let fc = eval(&xc);
            if (outside && fc <= fr) || (!outside && fc < worst.1) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for (v, fv) in simplex.iter_mut().skip(1) {
                    for k in 0..n {
                        v[k] = best[k] + delta * (v[k] - best[k]);
                    }
                    *fv = eval(v);
                }
            }
        }
        trace.push(simplex.iter().map(|s| s.1).fold(f64::INFINITY, f64::min));
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (mut x, mut fx) = simplex.swap_remove(0);
    // never return something worse than the (projected) start
    if !(fx <= f0) {
        x = start;
        fx = f0;
    }
    NelderMeadResult { x, f: fx, iterations, evaluations, converged, trace, projections }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(n: usize) -> NelderMeadOptions {
        NelderMeadOptions { max_iter: 5000, tol: 1e-8, initial_step: 0.5, lower: vec![-10.0; n], upper: vec![10.0; n] }
    }

    #[test]
    fn quadratic_minimum() {
        let r = nelder_mead(|x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + x[0] * x[1] * 0.5, &[0.0, 0.0], &opts(2));
        // gradient zero: 2(x-1) + 0.5y = 0, 6(y+2) + 0.5x = 0
        let y = -12.5 / 5.875;
        let x = 1.0 - 0.25 * y;
        assert!(r.converged);
        assert!((r.x[0] - x).abs() < 1e-6 && (r.x[1] - y).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_7d() {
        let f = |x: &[f64]| (0..6).map(|i| 100.0 * (x[i + 1] - x[i] * x[i]).powi(2) + (1.0 - x[i]).powi(2)).sum::<f64>();
        let mut o = opts(7);
        o.max_iter = 20_000;
        let r = nelder_mead(f, &[0.0; 7], &o);
        assert!(r.f < 1e-6, "{}", r.f);
    }

    #[test]
    fn respects_bounds_and_start() {
        let mut o = opts(2);
        o.lower = vec![0.5, -1.0];
        let r = nelder_mead(|x| x[0] * x[0] + x[1] * x[1], &[3.0, 2.0], &o);
        assert!((r.x[0] - 0.5).abs() < 1e-6 && r.x[1].abs() < 1e-6);
        assert!(r.projections > 0);
        // an objective that is infinite away from the start keeps the start
        let r = nelder_mead(|x| if x == [1.0, 1.0] { 0.0 } else { f64::NAN }, &[1.0, 1.0], &opts(2));
        assert_eq!(r.x, vec![1.0, 1.0]);
    }
}
