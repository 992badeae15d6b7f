//! Derivative-free and quasi-Newton minimizers used by the likelihood fits:
//! a Nelder-Mead simplex for the warm-up stage and BFGS with central
//! difference gradients for the polish stage. Both minimize.

use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOpts {
    pub max_iter: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    pub init_step: f64,
}

impl Default for NelderMeadOpts {
    fn default() -> Self {
        NelderMeadOpts {
            max_iter: 2000,
            f_tol: 1e-10,
            x_tol: 1e-8,
            init_step: 0.25,
        }
    }
}

/// Standard Nelder-Mead with reflection/expansion/contraction/shrink.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    opts: &NelderMeadOpts,
) -> OptimOutcome {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    // Initial simplex: x0 plus a step along each axis.
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let fx0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), fx0));
    for i in 0..n {
        let mut xi = x0.to_vec();
        let h = if xi[i].abs() > 1e-8 {
            opts.init_step * xi[i].abs()
        } else {
            opts.init_step
        };
        xi[i] += h;
        let fi = eval(&xi, &mut evals);
        simplex.push((xi, fi));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0usize;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = (worst - best).abs();
        let x_spread = (0..n)
            .map(|j| {
                simplex
                    .iter()
                    .map(|(x, _)| x[j])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    })
            })
            .map(|(lo, hi)| hi - lo)
            .fold(0.0f64, f64::max);
        if spread <= opts.f_tol * (1.0 + best.abs()) && x_spread <= opts.x_tol {
            converged = true;
            break;
        }

        // Centroid of all but the worst.
        let mut centroid = vec![0.0; n];
        for (x, _) in simplex.iter().take(n) {
            for j in 0..n {
                centroid[j] += x[j] / n as f64;
            }
        }

        let mirror = |t: f64, from: &[f64]| -> Vec<f64> {
            (0..n).map(|j| centroid[j] + t * (centroid[j] - from[j])).collect()
        };

        let xr = mirror(alpha, &simplex[n].0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = mirror(gamma, &simplex[n].0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            // Contract toward the better of worst/reflected.
            let (base, fbase) = if fr < simplex[n].1 {
                (&xr, fr)
            } else {
                (&simplex[n].0.clone(), simplex[n].1)
            };
            let xc: Vec<f64> = (0..n)
                .map(|j| centroid[j] + rho * (base[j] - centroid[j]))
                .collect();
            let fc = eval(&xc, &mut evals);
            if fc < fbase {
                simplex[n] = (xc, fc);
            } else {
                // Shrink toward the best point.
                let best_x = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let xs: Vec<f64> = (0..n)
                        .map(|j| best_x[j] + sigma * (item.0[j] - best_x[j]))
                        .collect();
                    let fs = eval(&xs, &mut evals);
                    *item = (xs, fs);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    OptimOutcome {
        x: simplex[0].0.clone(),
        f: simplex[0].1,
        iterations,
        evals,
        converged,
    }
}

/// Central-difference gradient with per-coordinate relative steps.
pub fn numerical_gradient<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x: &[f64],
    rel_step: f64,
) -> Vec<f64> {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut xp = x.to_vec();
    for i in 0..n {
        let h = rel_step * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Hessian (symmetric by construction).
pub fn numerical_hessian<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x: &[f64],
    rel_step: f64,
) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let hs: Vec<f64> = x.iter().map(|v| rel_step * v.abs().max(1.0)).collect();
    let mut h = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + hs[i];
        let fp = f(&xp);
        xp[i] = x[i] - hs[i];
        let fm = f(&xp);
        xp[i] = x[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hs[i] * hs[i]);
    }
    for i in 0..n {
        for j in i + 1..n {
            xp[i] = x[i] + hs[i];
            xp[j] = x[j] + hs[j];
            let fpp = f(&xp);
            xp[j] = x[j] - hs[j];
            let fpm = f(&xp);
            xp[i] = x[i] - hs[i];
            let fmm = f(&xp);
            xp[j] = x[j] + hs[j];
            let fmp = f(&xp);
            xp[i] = x[i];
            xp[j] = x[j];
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hs[i] * hs[j]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOpts {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub grad_step: f64,
}

impl Default for BfgsOpts {
    fn default() -> Self {
        BfgsOpts {
            max_iter: 200,
            grad_tol: 1e-6,
            grad_step: 1e-6,
        }
    }
}

/// BFGS with numerical gradients and Armijo backtracking.
pub fn bfgs<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &BfgsOpts) -> OptimOutcome {
    let n = x0.len();
    let mut evals = 0usize;
    let mut feval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut x = x0.to_vec();
    let mut fx = feval(&x, &mut evals);
    let grad = |x: &[f64], evals: &mut usize, feval: &mut dyn FnMut(&[f64], &mut usize) -> f64| {
        let mut g = vec![0.0; n];
        let mut xp = x.to_vec();
        for i in 0..n {
            let h = opts.grad_step * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let fp = feval(&xp, evals);
            xp[i] = x[i] - h;
            let fm = feval(&xp, evals);
            xp[i] = x[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    };

    let mut g = grad(&x, &mut evals, &mut feval);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm <= opts.grad_tol {
            converged = true;
            break;
        }
        let gvec = nalgebra::DVector::from_column_slice(&g);
        let dir = -(&hinv * &gvec);
        let slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        let dir = if slope >= 0.0 {
            // Not a descent direction; reset the metric.
            hinv = DMatrix::identity(n, n);
            -gvec.clone()
        } else {
            dir
        };
        let slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();

        // Backtracking line search.
        let mut step = 1.0;
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = fx;
        for _ in 0..50 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            f_new = feval(&x_new, &mut evals);
            if f_new <= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || !f_new.is_finite() {
            break;
        }

        let g_new = grad(&x_new, &mut evals, &mut feval);
        let s = nalgebra::DVector::from_iterator(n, (0..n).map(|i| x_new[i] - x[i]));
        let yv = nalgebra::DVector::from_iterator(n, (0..n).map(|i| g_new[i] - g[i]));
        let sy: f64 = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho_k = 1.0 / sy;
            let ident = DMatrix::<f64>::identity(n, n);
            let left = &ident - rho_k * &s * yv.transpose();
            let right = &ident - rho_k * &yv * s.transpose();
            hinv = &left * &hinv * &right + rho_k * &s * s.transpose();
        }
        let f_change = (fx - f_new).abs();
        x = x_new.clone();
        fx = f_new;
        g = g_new;
        if f_change <= 1e-12 * (1.0 + fx.abs()) && step >= 1.0 {
            converged = true;
            break;
        }
    }

    OptimOutcome {
        x,
        f: fx,
        iterations,
        evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rosenbrock(x: &[f64]) -> f64 {
        let (a, b) = (1.0, 100.0);
        (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nelder_mead_solves_rosenbrock() {
        let r = nelder_mead(
            rosenbrock,
            &[-1.2, 1.0],
            &NelderMeadOpts {
                max_iter: 5000,
                ..Default::default()
            },
        );
        assert!(r.f < 1e-8, "f = {}", r.f);
    }

    #[test]
    fn bfgs_solves_quadratic_exactly() {
        let f = |x: &[f64]| {
            2.0 * (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2) + 0.5 * x[0] * x[1]
        };
        let r = bfgs(f, &[10.0, -10.0], &BfgsOpts::default());
        assert!(r.converged);
        let g = numerical_gradient(f, &r.x, 1e-6);
        assert!(g.iter().all(|v| v.abs() < 1e-4), "gradient {g:?}");
    }

    #[test]
    fn bfgs_polishes_rosenbrock_after_warmup() {
        let warm = nelder_mead(rosenbrock, &[-1.2, 1.0], &NelderMeadOpts::default());
        let r = bfgs(rosenbrock, &warm.x, &BfgsOpts::default());
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn hessian_of_quadratic() {
        let f = |x: &[f64]| 2.0 * x[0] * x[0] + 3.0 * x[1] * x[1] + x[0] * x[1];
        let h = numerical_hessian(f, &[0.3, -0.7], 1e-5);
        assert_relative_eq!(h[(0, 0)], 4.0, epsilon = 1e-4);
        assert_relative_eq!(h[(1, 1)], 6.0, epsilon = 1e-4);
        assert_relative_eq!(h[(0, 1)], 1.0, epsilon = 1e-4);
    }
}
