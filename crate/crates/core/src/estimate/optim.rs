//! Box-constrained quasi-Newton minimization with finite-difference gradients.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    pub max_iterations: usize,
    /// Relative objective change below which a step counts as stalled.
    pub f_tol: f64,
    /// Projected gradient norm for convergence.
    pub g_tol: f64,
    /// Finite-difference step.
    pub h: f64,
    /// Largest coordinate change in one step.
    pub max_step: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            f_tol: 1e-10,
            g_tol: 1e-6,
            h: 1e-5,
            max_step: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Objective value after each accepted step, starting from `x0`.
    pub trace: Vec<f64>,
}

struct Problem<'a, F> {
    f: F,
    lower: &'a [f64],
    upper: &'a [f64],
    opts: OptimOptions,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> Option<f64>> Problem<'_, F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        match (self.f)(x) {
            Some(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    }

    fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    fn gradient(&mut self, x: &[f64], fx: f64) -> Vec<f64> {
        let h = self.opts.h;
        let mut g = vec![0.0; x.len()];
        let mut probe = x.to_vec();
        for i in 0..x.len() {
            let up = x[i] + h <= self.upper[i];
            let down = x[i] - h >= self.lower[i];
            g[i] = match (down, up) {
                (true, true) => {
                    probe[i] = x[i] + h;
                    let fp = self.eval(&probe);
                    probe[i] = x[i] - h;
                    let fm = self.eval(&probe);
                    (fp - fm) / (2.0 * h)
                }
                (false, true) => {
                    probe[i] = x[i] + h;
                    (self.eval(&probe) - fx) / h
                }
                (true, false) => {
                    probe[i] = x[i] - h;
                    (fx - self.eval(&probe)) / h
                }
                (false, false) => 0.0,
            };
            probe[i] = x[i];
        }
        g
    }

    /// Coordinates pinned at a bound by the sign of the gradient.
    fn free(&self, x: &[f64], g: &[f64]) -> Vec<bool> {
        let tol = 1e-12;
        (0..x.len())
            .map(|i| !((x[i] <= self.lower[i] + tol && g[i] > 0.0) || (x[i] >= self.upper[i] - tol && g[i] < 0.0)))
            .collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn projected(g: &[f64], free: &[bool]) -> Vec<f64> {
    g.iter().zip(free).map(|(&v, &f)| if f { v } else { 0.0 }).collect()
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0`. `f`
/// returning `None` marks an infeasible point.
pub fn minimize<F>(f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: OptimOptions) -> OptimOutcome
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let n = x0.len();
    let mut p = Problem {
        f,
        lower,
        upper,
        opts,
        evaluations: 0,
    };
    let mut x = x0.to_vec();
    p.clamp(&mut x);
    let mut fx = p.eval(&x);
    let mut trace = vec![fx];
    if !fx.is_finite() {
        return OptimOutcome {
            x,
            f: fx,
            iterations: 0,
            evaluations: p.evaluations,
            gradient_norm: f64::NAN,
            converged: false,
            trace,
        };
    }
    let mut g = p.gradient(&x, fx);
    // Inverse Hessian approximation, row-major.
    let mut hinv = identity(n);
    let mut scaled = false;
    let mut stalls = 0;
    let mut converged = false;
    let mut iterations = 0;
    let mut pg_norm = norm(&projected(&g, &p.free(&x, &g)));

    while iterations < opts.max_iterations {
        let free = p.free(&x, &g);
        let pg = projected(&g, &free);
        pg_norm = norm(&pg);
        if pg_norm < opts.g_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut d: Vec<f64> = (0..n)
            .map(|i| {
                if !free[i] {
                    return 0.0;
                }
                -(0..n).filter(|&j| free[j]).map(|j| hinv[i * n + j] * pg[j]).sum::<f64>()
            })
            .collect();
        if dot(&d, &pg) >= 0.0 {
            hinv = identity(n);
            d = pg.iter().map(|v| -v).collect();
        }
        let biggest = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if biggest > opts.max_step {
            d.iter_mut().for_each(|v| *v *= opts.max_step / biggest);
        }

        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            p.clamp(&mut trial);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            let ft = p.eval(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * decrease.min(0.0) {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // No decrease along the search direction: the iterate is
            // stationary to working precision.
            converged = pg_norm < 1e3 * opts.g_tol;
            break;
        };

        let g_new = p.gradient(&x_new, f_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if !scaled {
                let gamma = sy / dot(&y, &y);
                hinv = identity(n).into_iter().map(|v| v * gamma).collect();
                scaled = true;
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }

        let rel = (fx - f_new).abs() / fx.abs().max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);
        if rel < opts.f_tol {
            stalls += 1;
            let pg_new = norm(&projected(&g, &p.free(&x, &g)));
            if stalls >= 2 && pg_new < 1e3 * opts.g_tol {
                pg_norm = pg_new;
                converged = true;
                break;
            }
        } else {
            stalls = 0;
        }
    }
    if !converged {
        pg_norm = norm(&projected(&g, &p.free(&x, &g)));
    }
    OptimOutcome {
        x,
        f: fx,
        iterations,
        evaluations: p.evaluations,
        gradient_norm: pg_norm,
        converged,
        trace,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
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
