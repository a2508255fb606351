use super::Forward;
use crate::{Error, Result};

const MAX_ITERS: usize = 200;
const REL_DECREASE: f64 = 1e-10;
const FD_STEP: f64 = 1e-4;
const MAX_REJECTIONS: usize = 12;
/// Fractions of the record fitted in turn; short prefixes have a wide
/// basin of attraction and seed the longer fits.
const HORIZONS: [f64; 4] = [0.15, 0.3, 0.6, 1.0];

/// Levenberg-Marquardt over a growing prefix of the record.
pub(super) fn continuation(fwd: &mut Forward, x0: Vec<f64>) -> Result<(Vec<f64>, usize, bool)> {
    let full = fwd.problem.reference.n_steps();
    let mut x = x0;
    let mut total = 0;
    let mut converged = false;
    let mut last = 0;
    for frac in HORIZONS {
        let horizon = ((full as f64 * frac).round() as usize).clamp(2.min(full), full);
        if horizon <= last {
            continue;
        }
        last = horizon;
        let (next, iters, conv) = levenberg_marquardt(fwd, x, horizon)?;
        x = next;
        total += iters;
        converged = conv;
    }
    Ok((x, total, converged))
}

/// Minimizes the squared residual norm over the first `horizon` steps with
/// a central-difference Jacobian.
pub(super) fn levenberg_marquardt(
    fwd: &mut Forward,
    mut x: Vec<f64>,
    horizon: usize,
) -> Result<(Vec<f64>, usize, bool)> {
    let n = fwd.dim();
    fwd.clamp(&mut x);
    let mut r = fwd.residuals(&x, horizon)?;
    let mut f = sq_norm(&r);
    let mut lambda = 1e-3;

    for iter in 1..=MAX_ITERS {
        if f == 0.0 {
            return Ok((x, iter - 1, true));
        }
        let jac = jacobian(fwd, &x, horizon)?;
        let m = r.len();
        // normal equations
        let mut jtj = vec![0.0; n * n];
        let mut jtr = vec![0.0; n];
        for a in 0..n {
            for b in a..n {
                let s: f64 = (0..m).map(|i| jac[a][i] * jac[b][i]).sum();
                jtj[a * n + b] = s;
                jtj[b * n + a] = s;
            }
            jtr[a] = (0..m).map(|i| jac[a][i] * r[i]).sum();
        }

        let mut accepted = false;
        for _ in 0..MAX_REJECTIONS {
            let mut lhs = jtj.clone();
            for a in 0..n {
                lhs[a * n + a] += lambda * jtj[a * n + a].max(1e-12);
            }
            let step = match solve_dense(lhs, jtr.iter().map(|v| -v).collect(), n) {
                Some(s) => s,
                None => {
                    lambda *= 4.0;
                    continue;
                }
            };
            let mut trial: Vec<f64> = x.iter().zip(&step).map(|(x, s)| x + s).collect();
            fwd.clamp(&mut trial);
            let r_trial = match fwd.residuals(&trial, horizon) {
                Ok(r) => r,
                Err(Error::Numerical { .. }) => {
                    lambda *= 4.0;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let f_trial = sq_norm(&r_trial);
            if f_trial < f {
                let rel = (f - f_trial) / f;
                x = trial;
                r = r_trial;
                f = f_trial;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel < REL_DECREASE {
                    return Ok((x, iter, true));
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent direction at any damping: stationary point
            return Ok((x, iter, true));
        }
    }
    Ok((x, MAX_ITERS, false))
}

fn sq_norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Column-major Jacobian: `jac[j][i] = ∂r_i/∂x_j`.
fn jacobian(fwd: &mut Forward, x: &[f64], horizon: usize) -> Result<Vec<Vec<f64>>> {
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let h = FD_STEP * x[j].abs().max(1e-8);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let rp = fwd.residuals(&xp, horizon)?;
        let rm = fwd.residuals(&xm, horizon)?;
        out.push(rp.iter().zip(&rm).map(|(p, m)| (p - m) / (2.0 * h)).collect());
    }
    Ok(out)
}

/// Gaussian elimination with partial pivoting on a row-major `n × n` system.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            b.swap(pivot, col);
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / a[col * n + col];
            if factor != 0.0 {
                for k in col..n {
                    a[row * n + k] -= factor * a[col * n + k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * b[k]).sum();
        b[row] = (b[row] - s) / a[row * n + row];
    }
    b.iter().all(|v| v.is_finite()).then_some(b)
}
