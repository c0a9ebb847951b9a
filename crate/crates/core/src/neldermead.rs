//! Nelder–Mead simplex minimization with restarts.

/// Stopping rules. The search stops when the simplex diameter falls below
/// `x_tol` and the spread of values below `f_tol_abs + f_tol_rel·|f_best|`, or
/// when the evaluation budget is spent. After convergence the simplex is rebuilt
/// around the best point `restarts` times, which escapes premature collapse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    pub x_tol: f64,
    pub f_tol_abs: f64,
    pub f_tol_rel: f64,
    pub initial_step: f64,
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 20_000, x_tol: 1e-10, f_tol_abs: 0.0, f_tol_rel: 1e-12, initial_step: 0.5, restarts: 4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    /// Best value at the end of each simplex pass (initial pass plus restarts).
    pub history: Vec<f64>,
}

pub fn minimize<F>(mut objective: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best_x = x0.to_vec();
    let mut best_f = eval(&best_x, &mut evals);
    let mut history = Vec::new();
    let mut step = opts.initial_step;
    for _pass in 0..=opts.restarts {
        if evals >= opts.max_evals {
            break;
        }
        let (x, f) = simplex_pass(&mut eval, &best_x, best_f, step, opts, &mut evals);
        if f <= best_f {
            best_x = x;
            best_f = f;
        }
        history.push(best_f);
        // Restart with a smaller but non-degenerate simplex.
        step = (step * 0.5).max(1e-3);
    }
    NelderMeadResult { x: best_x, value: best_f, evals, history }
}

fn simplex_pass<E>(eval: &mut E, x0: &[f64], f0: f64, step: f64, opts: &NelderMeadOptions, evals: &mut usize) -> (Vec<f64>, f64)
where
    E: FnMut(&[f64], &mut usize) -> f64,
{
    let dim = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += step;
        let f = eval(&x, evals);
        simplex.push((x, f));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_best = simplex[0].1;
        let f_worst = simplex[dim].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let spread_ok = f_worst.is_finite() && f_worst - f_best <= opts.f_tol_abs + opts.f_tol_rel * f_best.abs();
        if (diameter < opts.x_tol && spread_ok) || *evals >= opts.max_evals {
            break;
        }

        let centroid: Vec<f64> =
            (0..dim).map(|i| simplex[..dim].iter().map(|(x, _)| x[i]).sum::<f64>() / dim as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[dim].0).map(|(c, w)| c + t * (c - w)).collect()
        };
        let reflected = along(alpha);
        let f_r = eval(&reflected, evals);
        if f_r < f_best {
            let expanded = along(gamma);
            let f_e = eval(&expanded, evals);
            simplex[dim] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
            continue;
        }
        if f_r < simplex[dim - 1].1 {
            simplex[dim] = (reflected, f_r);
            continue;
        }
        let (contracted, f_c) = if f_r < f_worst {
            let x = along(rho);
            let f = eval(&x, evals);
            (x, f)
        } else {
            let x = along(-rho);
            let f = eval(&x, evals);
            (x, f)
        };
        if f_c < f_worst.min(f_r) {
            simplex[dim] = (contracted, f_c);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = anchor.iter().zip(&entry.0).map(|(a, p)| a + sigma * (p - a)).collect();
            let f = eval(&x, evals);
            *entry = (x, f);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(rosen, &[-1.2, 1.0], &NelderMeadOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r);
    }

    #[test]
    fn tolerates_infinite_regions() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::INFINITY } else { (x[0] - 2.0).powi(2) + x[1] * x[1] };
        let r = minimize(f, &[0.5, 0.5], &NelderMeadOptions::default());
        assert!((r.x[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn respects_budget() {
        let mut count = 0;
        let r = minimize(
            |x: &[f64]| {
                count += 1;
                x.iter().map(|v| v.sin().powi(2) + 0.01 * v * v).sum()
            },
            &[3.0; 5],
            &NelderMeadOptions { max_evals: 100, ..Default::default() },
        );
        assert!(r.evals <= 100 + 12);
    }
}
