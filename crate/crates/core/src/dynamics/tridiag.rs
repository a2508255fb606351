use crate::structure::SymTridiag;
use crate::{Error, Result};

/// Pre-factored symmetric tridiagonal system (Thomas algorithm).
#[derive(Debug, Clone)]
pub struct TridiagSolver {
    off: Vec<f64>,
    c_prime: Vec<f64>,
    inv_denom: Vec<f64>,
}

impl TridiagSolver {
    pub fn new(a: &SymTridiag) -> Result<Self> {
        let n = a.n();
        let mut c_prime = vec![0.0; n];
        let mut inv_denom = vec![0.0; n];
        for i in 0..n {
            let denom = if i == 0 {
                a.diag[0]
            } else {
                a.diag[i] - a.off[i - 1] * c_prime[i - 1]
            };
            if denom == 0.0 || !denom.is_finite() {
                return Err(Error::numerical(format!("singular tridiagonal system at row {i}"), 0));
            }
            inv_denom[i] = 1.0 / denom;
            if i + 1 < n {
                c_prime[i] = a.off[i] * inv_denom[i];
            }
        }
        Ok(Self {
            off: a.off.clone(),
            c_prime,
            inv_denom,
        })
    }

    /// Solves in place: `x` holds the right-hand side on entry.
    pub fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        x[0] *= self.inv_denom[0];
        for i in 1..n {
            x[i] = (x[i] - self.off[i - 1] * x[i - 1]) * self.inv_denom[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.c_prime[i] * x[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_against_product() {
        let a = SymTridiag {
            diag: vec![4.0, 5.0, 6.0, 3.0],
            off: vec![-1.0, 2.0, -0.5],
        };
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut b = vec![0.0; 4];
        a.mul_vec(&x, &mut b);
        TridiagSolver::new(&a).unwrap().solve(&mut b);
        for (got, want) in b.iter().zip(x) {
            assert!((got - want).abs() < 1e-14);
        }
    }
}
