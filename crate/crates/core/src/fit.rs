//! Weighted least squares for small fixed-size parameter vectors.
//!
//! Levenberg-Marquardt with Marquardt diagonal scaling and box bounds. The
//! damping follows the gain ratio between actual and linearly predicted
//! chi-square reduction. A proposed step is clipped to the box; a clipped
//! step of zero length is treated as convergence on the bound.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A model `f(x; params)` with an analytic gradient in the parameters.
pub trait Model<const N: usize> {
    fn eval(&self, x: f64, params: &[f64; N]) -> (f64, [f64; N]);
}

#[derive(Debug, Clone, Copy)]
pub struct Data<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub sigma: &'a [f64],
}

#[derive(Debug, Clone, Copy)]
pub struct Options<const N: usize> {
    pub lower: [f64; N],
    pub upper: [f64; N],
    pub max_iterations: usize,
    /// Converged when every component of the step is below
    /// `step_tolerance * (|param| + step_tolerance)`.
    pub step_tolerance: f64,
}

impl<const N: usize> Options<N> {
    pub fn bounded(lower: [f64; N], upper: [f64; N]) -> Self {
        Self {
            lower,
            upper,
            max_iterations: 200,
            step_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub chi2: f64,
    pub lambda: f64,
    pub params: Vec<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<const N: usize> {
    pub params: [f64; N],
    /// `(J^T W J)^-1` at the solution; infinite entries if singular.
    pub cov: [[f64; N]; N],
    pub chi2: f64,
    pub iterations: usize,
}

struct NormalEquations<const N: usize> {
    chi2: f64,
    jtj: [[f64; N]; N],
    jtr: [f64; N],
}

fn normal_equations<M: Model<N>, const N: usize>(
    model: &M,
    data: &Data<'_>,
    params: &[f64; N],
) -> NormalEquations<N> {
    let mut out = NormalEquations {
        chi2: 0.0,
        jtj: [[0.0; N]; N],
        jtr: [0.0; N],
    };
    for i in 0..data.x.len() {
        let (f, grad) = model.eval(data.x[i], params);
        let w = 1.0 / data.sigma[i];
        let r = (data.y[i] - f) * w;
        out.chi2 += r * r;
        for a in 0..N {
            let ja = grad[a] * w;
            out.jtr[a] += ja * r;
            for b in 0..N {
                out.jtj[a][b] += ja * grad[b] * w;
            }
        }
    }
    out
}

fn chi2_at<M: Model<N>, const N: usize>(model: &M, data: &Data<'_>, params: &[f64; N]) -> f64 {
    (0..data.x.len())
        .map(|i| {
            let r = (data.y[i] - model.eval(data.x[i], params).0) / data.sigma[i];
            r * r
        })
        .sum()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub(crate) fn solve<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[pivot][col].abs() > 0.0) || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let factor = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let tail: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

pub(crate) fn invert<const N: usize>(a: [[f64; N]; N]) -> Option<[[f64; N]; N]> {
    let mut inv = [[0.0; N]; N];
    for col in 0..N {
        let mut e = [0.0; N];
        e[col] = 1.0;
        let x = solve(a, e)?;
        for row in 0..N {
            inv[row][col] = x[row];
        }
    }
    Some(inv)
}

fn clamp<const N: usize>(mut params: [f64; N], opts: &Options<N>) -> [f64; N] {
    for i in 0..N {
        params[i] = params[i].clamp(opts.lower[i], opts.upper[i]);
    }
    params
}

pub fn levenberg_marquardt<M: Model<N>, const N: usize>(
    model: &M,
    data: Data<'_>,
    initial: [f64; N],
    opts: &Options<N>,
) -> Result<Solution<N>> {
    let n_points = data.x.len();
    if data.y.len() != n_points || data.sigma.len() != n_points {
        return Err(Error::invalid(
            "data length",
            n_points as f64,
            "x, y and sigma must have equal lengths",
        ));
    }
    if n_points < N {
        return Err(Error::InsufficientData {
            what: "least-squares fit",
            needed: N,
            found: n_points,
        });
    }
    if let Some(&s) = data.sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::invalid("sigma", s, "must be positive and finite"));
    }

    let mut params = clamp(initial, opts);
    let mut eqs = normal_equations(model, &data, &params);
    let mut lambda = 1e-3;
    let mut growth = 2.0;
    let mut trace = Vec::new();

    for iteration in 1..=opts.max_iterations {
        let mut damped = eqs.jtj;
        let mut rhs = eqs.jtr;
        for i in 0..N {
            let d = eqs.jtj[i][i];
            damped[i][i] = if d > 0.0 { d * (1.0 + lambda) } else { lambda };
        }
        // Parameters pinned on a bound by the gradient are held fixed.
        for i in 0..N {
            let pinned = (params[i] <= opts.lower[i] && eqs.jtr[i] < 0.0)
                || (params[i] >= opts.upper[i] && eqs.jtr[i] > 0.0);
            if pinned {
                for k in 0..N {
                    damped[i][k] = 0.0;
                    damped[k][i] = 0.0;
                }
                damped[i][i] = 1.0;
                rhs[i] = 0.0;
            }
        }
        let Some(delta) = solve(damped, rhs) else {
            lambda *= growth;
            growth *= 2.0;
            trace.push(IterationRecord {
                iteration,
                chi2: eqs.chi2,
                lambda,
                params: params.to_vec(),
                accepted: false,
            });
            continue;
        };

        let mut candidate = params;
        for i in 0..N {
            candidate[i] += delta[i];
        }
        let candidate = clamp(candidate, opts);
        let mut step = [0.0; N];
        for i in 0..N {
            step[i] = candidate[i] - params[i];
        }
        let small = (0..N).all(|i| {
            step[i].abs() <= opts.step_tolerance * (params[i].abs() + opts.step_tolerance)
        });

        // Linear model: chi2(h) ~ chi2 - 2 h.g + h.JtJ.h
        let mut predicted = 0.0;
        for a in 0..N {
            let jh: f64 = (0..N).map(|b| eqs.jtj[a][b] * step[b]).sum();
            predicted += step[a] * (2.0 * eqs.jtr[a] - jh);
        }
        let candidate_chi2 = chi2_at(model, &data, &candidate);
        let actual = eqs.chi2 - candidate_chi2;
        let accepted = actual >= 0.0 && candidate_chi2.is_finite();
        if accepted {
            params = candidate;
            eqs = normal_equations(model, &data, &params);
            let rho = if predicted > 0.0 {
                actual / predicted
            } else {
                1.0
            };
            let shrink = 1.0 - libm::pow(2.0 * rho - 1.0, 3.0);
            lambda = (lambda * shrink.clamp(1.0 / 3.0, 2.0)).max(1e-12);
            growth = 2.0;
        } else {
            lambda *= growth;
            growth *= 2.0;
        }
        trace.push(IterationRecord {
            iteration,
            chi2: eqs.chi2,
            lambda,
            params: params.to_vec(),
            accepted,
        });

        if small {
            let cov = invert(eqs.jtj).unwrap_or([[f64::INFINITY; N]; N]);
            return Ok(Solution {
                params,
                cov,
                chi2: eqs.chi2,
                iterations: iteration,
            });
        }
    }

    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        trace,
    })
}
