//! Dense quasi-Newton building blocks shared by the estimator and the planner.

pub(crate) fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Inverse-Hessian BFGS update with `sy = sᵀy > 0`; `h` is row-major.
pub(crate) fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct BfgsOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Length of the first trial step after every reset.
    pub step_init: f64,
    /// Stop after three consecutive steps whose decrease is below `f_rtol·(1 + |f|)`.
    pub f_rtol: f64,
}

/// Unconstrained BFGS with Armijo backtracking. Non-finite trial values are rejected.
pub(crate) fn minimize(x0: &[f64], eval: &dyn Fn(&[f64]) -> (f64, Vec<f64>), opts: &BfgsOptions) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = eval(&x);
    let mut h = identity(n);
    let mut fresh = true;
    let mut stalled = 0;
    for _ in 0..opts.max_iters {
        if !f.is_finite() || norm(&g) <= opts.grad_tol {
            break;
        }
        let mut d: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>()).collect();
        if dot(&d, &g) >= 0.0 {
            h = identity(n);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
        }
        if fresh {
            let s = opts.step_init / norm(&d).max(1e-300);
            d.iter_mut().for_each(|v| *v *= s);
        }
        let slope = dot(&g, &d);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let (ft, gt) = eval(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((x_new, f_new, g_new)) => {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
                    if fresh {
                        let scale = sy / dot(&y, &y);
                        h.iter_mut().for_each(|v| *v *= scale);
                    }
                    bfgs_update(&mut h, &s, &y, sy);
                    fresh = false;
                }
                stalled = if f - f_new <= opts.f_rtol * (1.0 + f.abs()) { stalled + 1 } else { 0 };
                x = x_new;
                f = f_new;
                g = g_new;
            }
            None if !fresh => {
                h = identity(n);
                fresh = true;
            }
            None => break,
        }
        if stalled >= 3 {
            break;
        }
    }
    (x, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_minimum() {
        let eval = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            (f, vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)])
        };
        let (x, f) = minimize(&[-1.2, 1.0], &eval, &BfgsOptions { max_iters: 500, grad_tol: 1e-10, step_init: 0.1, f_rtol: 0.0 });
        assert!(f < 1e-12, "{f}");
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
    }
}
