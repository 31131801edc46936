//! Damped Newton iteration for small nonlinear systems.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::numeric_jacobian;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop once `max |f(x)| <= abs_tol`.
    pub abs_tol: f64,
    pub max_iterations: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `f(x) = 0` from `x0` with a central-difference Jacobian and step
/// halving on the residual norm. Also stops when a full step no longer moves
/// `x` beyond rounding.
pub fn newton_solve(f: impl Fn(&[f64]) -> Vec<f64>, x0: &[f64], opts: &NewtonOptions) -> Result<NewtonResult> {
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut res = max_abs(&fx);
    for it in 0..opts.max_iterations {
        if res <= opts.abs_tol {
            return Ok(NewtonResult { x, residual: res, iterations: it });
        }
        let jac: DMatrix<f64> = numeric_jacobian(&f, &x);
        let rhs = DVector::from_iterator(fx.len(), fx.iter().map(|v| -v));
        let Some(step) = jac.lu().solve(&rhs) else {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1e-6 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + lambda * s).collect();
            let ft = f(&trial);
            let rt = max_abs(&ft);
            if rt.is_finite() && (rt < res || (lambda == 1.0 && rt <= res)) {
                let moved = x
                    .iter()
                    .zip(&trial)
                    .any(|(a, b)| (a - b).abs() > 4.0 * f64::EPSILON * a.abs().max(1.0));
                x = trial;
                fx = ft;
                res = rt;
                accepted = true;
                if !moved {
                    return Ok(NewtonResult { x, residual: res, iterations: it + 1 });
                }
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            // No descent: we are at the rounding floor or at a non-root minimum.
            return if res <= opts.abs_tol * 1e3 {
                Ok(NewtonResult { x, residual: res, iterations: it })
            } else {
                Err(Error::NoConvergence { iterations: it, residual: res })
            };
        }
    }
    if res <= opts.abs_tol {
        Ok(NewtonResult { x, residual: res, iterations: opts.max_iterations })
    } else {
        Err(Error::NoConvergence { iterations: opts.max_iterations, residual: res })
    }
}
