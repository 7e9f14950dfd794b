//! Box-constrained limited-memory quasi-Newton maximization and a
//! finite-difference Hessian.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{OmegaError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimControl {
    pub max_iter: usize,
    /// Stop when the relative decrease is below `factr * eps`.
    pub factr: f64,
    /// Stop when the projected gradient sup-norm is at most this.
    pub pgtol: f64,
    pub memory: usize,
}

impl Default for OptimControl {
    fn default() -> Self {
        OptimControl {
            max_iter: 500,
            factr: 1e7,
            pgtol: 0.0,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimResult {
    pub theta: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
}

/// Feasible region: a box, optionally intersected with a capped sum over a
/// contiguous run of coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    pub bounds: Vec<(f64, f64)>,
    pub sum_cap: Option<SumCap>,
}

/// `Σ θ[start..end] <= cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumCap {
    pub start: usize,
    pub end: usize,
    pub cap: f64,
}

impl Constraints {
    pub fn boxed(bounds: Vec<(f64, f64)>) -> Self {
        Constraints { bounds, sum_cap: None }
    }

    /// Euclidean projection onto the feasible region.
    pub fn project(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(lo, hi);
        }
        let Some(c) = self.sum_cap else { return };
        let run = &self.bounds[c.start..c.end];
        if x[c.start..c.end].iter().sum::<f64>() <= c.cap {
            return;
        }
        // shift by λ >= 0 and clamp; the sum is monotone in λ
        let v = x[c.start..c.end].to_vec();
        let total = |lam: f64| v.iter().zip(run).map(|(vi, &(lo, hi))| (vi - lam).clamp(lo, hi)).sum::<f64>();
        let (mut a, mut b) = (0.0, v.iter().zip(run).map(|(vi, r)| vi - r.0).fold(0.0, f64::max));
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if total(m) > c.cap {
                a = m;
            } else {
                b = m;
            }
        }
        for (xi, (vi, &(lo, hi))) in x[c.start..c.end].iter_mut().zip(v.iter().zip(run)) {
            *xi = (vi - b).clamp(lo, hi);
        }
    }

    fn cap_active(&self, x: &[f64]) -> Option<SumCap> {
        self.sum_cap
            .filter(|c| x[c.start..c.end].iter().sum::<f64>() >= c.cap - 1e-12)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient that tolerates a one-sided non-finite stencil by falling back
/// to the other side.
fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], fx: f64, bounds: &[(f64, f64)]) -> Option<Vec<f64>> {
    let mut xt = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let h = f64::EPSILON.cbrt() * x[j].abs().max(1.0);
        let (lo, hi) = bounds[j];
        if lo == hi {
            g.push(0.0);
            continue;
        }
        let fp = if x[j] + h <= hi {
            xt[j] = x[j] + h;
            f(&xt)
        } else {
            f64::NAN
        };
        let fm = if x[j] - h >= lo {
            xt[j] = x[j] - h;
            f(&xt)
        } else {
            f64::NAN
        };
        xt[j] = x[j];
        let d = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - fx) / h,
            (false, true) => (fx - fm) / h,
            (false, false) => return None,
        };
        g.push(d);
    }
    Some(g)
}

/// Maximizes `f` over the feasible region from `theta0` (projected first).
///
/// Errors only when `f` is not finite at the start or its gradient cannot
/// be formed there; later failures end the run with `converged = false`.
pub fn maximize<F: Fn(&[f64]) -> f64>(
    f: F,
    theta0: &[f64],
    region: &Constraints,
    control: &OptimControl,
) -> Result<OptimResult> {
    let phi = |x: &[f64]| -f(x);
    let bounds = &region.bounds;
    let n = theta0.len();
    let mut x = theta0.to_vec();
    region.project(&mut x);
    let mut fx = phi(&x);
    if !fx.is_finite() {
        return Err(OmegaError::Numerical("objective is not finite at the starting value".into()));
    }
    let mut g = fd_gradient(&phi, &x, fx, bounds).ok_or(OmegaError::Gradient(0))?;
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let finish = |x: Vec<f64>, fx: f64, iterations, converged, message: &str| OptimResult {
        theta: x,
        value: -fx,
        iterations,
        converged,
        message: message.to_string(),
    };

    while iterations < control.max_iter {
        let mut probe: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
        region.project(&mut probe);
        let pg = probe.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if pg <= control.pgtol {
            return Ok(finish(x, fx, iterations, true, "projected gradient is zero"));
        }
        let free: Vec<bool> = (0..n)
            .map(|j| !((x[j] <= bounds[j].0 && g[j] > 0.0) || (x[j] >= bounds[j].1 && g[j] < 0.0)))
            .collect();
        let active = region.cap_active(&x);
        // zero fixed coordinates; on an active cap, keep the capped sum
        // from growing
        let restrict = |v: &mut Vec<f64>| {
            for (vj, &fr) in v.iter_mut().zip(&free) {
                if !fr {
                    *vj = 0.0;
                }
            }
            if let Some(c) = active {
                let idx: Vec<usize> = (c.start..c.end).filter(|&j| free[j]).collect();
                let total: f64 = idx.iter().map(|&j| v[j]).sum();
                if total > 0.0 && !idx.is_empty() {
                    let shift = total / idx.len() as f64;
                    idx.iter().for_each(|&j| v[j] -= shift);
                }
            }
        };

        let mut d = two_loop(&g, &mem);
        d.iter_mut().for_each(|v| *v = -*v);
        restrict(&mut d);
        if !(dot(&g, &d) < 0.0) || d.iter().any(|v| !v.is_finite()) {
            mem.clear();
            d = g.iter().map(|v| -v).collect();
            restrict(&mut d);
        }
        let mut alpha = if mem.is_empty() {
            (1.0 / d.iter().map(|v| v * v).sum::<f64>().sqrt()).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            region.project(&mut xn);
            if xn == x {
                break;
            }
            let fxn = phi(&xn);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            if fxn.is_finite() && fxn <= fx + 1e-4 * dot(&g, &step) {
                accepted = Some((xn, fxn, step));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fxn, s)) = accepted else {
            if !mem.is_empty() {
                mem.clear();
                continue;
            }
            return Ok(finish(x, fx, iterations, pg < 1e-5, "line search failed"));
        };
        let Some(gn) = fd_gradient(&phi, &xn, fxn, bounds) else {
            return Ok(finish(xn, fxn, iterations + 1, false, "gradient not finite"));
        };
        iterations += 1;
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > f64::EPSILON * dot(&y, &y) {
            if mem.len() == control.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let decrease = fx - fxn;
        x = xn;
        g = gn;
        let scale = fx.abs().max(fxn.abs()).max(1.0);
        fx = fxn;
        if decrease <= control.factr * f64::EPSILON * scale {
            return Ok(finish(x, fx, iterations, true, "relative reduction below tolerance"));
        }
    }
    Ok(finish(x, fx, iterations, false, "iteration limit reached"))
}

/// L-BFGS two-loop recursion: returns H·g.
fn two_loop(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = mem.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q
}

/// Hessian by central second differences with one Richardson step
/// (h and h/2), base step `eps^(1/4) * max(1, |θ_j|)`. A coordinate whose
/// stencil leaves the domain gets its step shrunk up to three times.
pub fn hessian<F: Fn(&[f64]) -> f64>(f: F, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = theta.len();
    let f0 = f(theta);
    if !f0.is_finite() {
        return Err(OmegaError::SingularHessian("objective is not finite at the estimate".into()));
    }
    let mut base = Vec::with_capacity(n);
    for j in 0..n {
        let mut h = f64::EPSILON.powf(0.25) * theta[j].abs().max(1.0);
        let mut ok = false;
        for _ in 0..4 {
            let mut x = theta.to_vec();
            x[j] = theta[j] + h;
            let a = f(&x);
            x[j] = theta[j] - h;
            let b = f(&x);
            if a.is_finite() && b.is_finite() {
                ok = true;
                break;
            }
            h /= 10.0;
        }
        if !ok {
            return Err(OmegaError::SingularHessian(format!("objective not finite around parameter {}", j + 1)));
        }
        base.push(h);
    }
    let at = |steps: &[(usize, f64)]| {
        let mut x = theta.to_vec();
        for &(j, s) in steps {
            x[j] += s;
        }
        f(&x)
    };
    let estimate = |scale: f64| -> Result<Vec<Vec<f64>>> {
        let h: Vec<f64> = base.iter().map(|b| b * scale).collect();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = (at(&[(i, h[i])]) - 2.0 * f0 + at(&[(i, -h[i])])) / (h[i] * h[i]);
            for j in 0..i {
                let v = (at(&[(i, h[i]), (j, h[j])]) - at(&[(i, h[i]), (j, -h[j])]) - at(&[(i, -h[i]), (j, h[j])])
                    + at(&[(i, -h[i]), (j, -h[j])]))
                    / (4.0 * h[i] * h[j]);
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        if m.iter().flatten().all(|v| v.is_finite()) {
            Ok(m)
        } else {
            Err(OmegaError::SingularHessian("objective not finite in the Hessian stencil".into()))
        }
    };
    let coarse = estimate(1.0)?;
    let fine = estimate(0.5)?;
    Ok((0..n)
        .map(|i| (0..n).map(|j| (4.0 * fine[i][j] - coarse[i][j]) / 3.0).collect())
        .collect())
}
