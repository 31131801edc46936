//! Exact quasi-stationary distribution of the univariate birth-death chain.
//!
//! The QSD `q` on `{1, .., N}` is the normalized left eigenvector of the
//! sub-generator restricted to the non-absorbing states. Writing
//! `theta = mu_1 q_1` for the killing rate, summing the balance equations over
//! `{1, .., n}` gives the forward relation
//!
//! ```text
//! mu_{n+1} q_{n+1} = lambda_n q_n + theta * (q_{n+1} + .. + q_N)
//! ```
//!
//! which is iterated to a fixed point (the tail sum is taken from the previous
//! sweep). Shifted inverse iteration on the transposed tridiagonal
//! sub-generator serves as fallback and as an independent second route.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BirthDeathRates;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_SWEEPS: usize = 100_000;

/// Sweeps without a tenfold residual improvement before the fixed point is
/// declared stalled.
const STALL_WINDOW: usize = 500;

/// Values above this are rescaled during the forward recursion.
const RESCALE_ABOVE: f64 = 1e200;

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Probability vector over the states `1..=N` (the absorbing state is excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// `probs[k]` is the probability of state `k + 1`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty probability vector".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("entry {p} is negative or non-finite")));
        }
        let total = compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("entries sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Normalizes a non-negative weight vector.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total = compensated_sum(weights.iter().copied());
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    /// Unit mass at state `n >= 1`.
    pub fn point_mass(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDistribution("state 0 is absorbing".into()));
        }
        let mut probs = vec![0.0; n];
        probs[n - 1] = 1.0;
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_state(&self) -> usize {
        self.probs.len()
    }

    /// Probability of state `n` (zero outside `1..=N`).
    pub fn prob(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.probs.get(n - 1).copied().unwrap_or(0.0)
        }
    }

    /// `(state, probability)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().enumerate().map(|(k, &p)| (k + 1, p))
    }
}

/// Cumulants `kappa_1 ..= kappa_k` in count units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantSet {
    pub kappa: Vec<f64>,
}

impl CumulantSet {
    /// `kappa_i`, 1-based.
    pub fn get(&self, i: usize) -> f64 {
        self.kappa[i - 1]
    }
}

/// Raw moments `mu_bar_1 ..= mu_bar_3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawMomentSet {
    pub mu_bar: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QsdMethod {
    /// Fixed point first, inverse iteration if it stalls.
    Auto,
    FixedPoint,
    InverseIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QsdOptions {
    /// Residual tolerance relative to `max_n (lambda_n + mu_n)`.
    pub tol: f64,
    pub max_sweeps: usize,
    pub method: QsdMethod,
}

impl Default for QsdOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            method: QsdMethod::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QsdSolution {
    pub distribution: Distribution,
    /// Killing rate `mu_1 q_1`; the eigenvalue is its negative.
    pub killing_rate: f64,
    /// Max absolute eigen-relation residual over the states.
    pub residual: f64,
    pub sweeps: usize,
    pub method: QsdMethod,
}

/// QSD with default iteration budget; see [`solve_qsd_with`].
pub fn solve_qsd(rates: &BirthDeathRates, tol: f64) -> Result<Distribution> {
    let opts = QsdOptions {
        tol,
        ..QsdOptions::default()
    };
    solve_qsd_with(rates, &opts).map(|s| s.distribution)
}

pub fn solve_qsd_with(rates: &BirthDeathRates, opts: &QsdOptions) -> Result<QsdSolution> {
    rates.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {}", opts.tol)));
    }
    if rates.max_state() == 1 {
        let distribution = Distribution::new(vec![1.0])?;
        return Ok(QsdSolution {
            distribution,
            killing_rate: rates.death[1],
            residual: 0.0,
            sweeps: 0,
            method: opts.method,
        });
    }
    match opts.method {
        QsdMethod::FixedPoint => fixed_point(rates, opts, false),
        QsdMethod::InverseIteration => inverse_iteration(rates, opts),
        QsdMethod::Auto => match fixed_point(rates, opts, true) {
            Ok(sol) => Ok(sol),
            Err(Error::NoConvergence { .. }) => {
                log::debug!("QSD fixed point stalled; switching to inverse iteration");
                inverse_iteration(rates, opts)
            }
            Err(e) => Err(e),
        },
    }
}

/// `max_n |lambda_{n-1} q_{n-1} + mu_{n+1} q_{n+1} - (lambda_n + mu_n - theta) q_n|`
/// with `theta = mu_1 q_1`. `q[k]` is the probability of state `k + 1`.
pub fn eigen_residual(rates: &BirthDeathRates, q: &[f64]) -> f64 {
    let top = rates.max_state();
    debug_assert_eq!(q.len(), top);
    let theta = rates.death[1] * q[0];
    let at = |n: usize| if n >= 1 && n <= top { q[n - 1] } else { 0.0 };
    (1..=top)
        .map(|n| {
            let inflow_below = if n >= 2 { rates.birth[n - 1] * at(n - 1) } else { 0.0 };
            let inflow_above = if n < top { rates.death[n + 1] * at(n + 1) } else { 0.0 };
            let out = (rates.birth[n] + rates.death[n]) * at(n);
            (inflow_below + inflow_above - out + theta * at(n)).abs()
        })
        .fold(0.0, f64::max)
}

fn normalize(v: &mut [f64]) {
    let total = compensated_sum(v.iter().copied());
    v.iter_mut().for_each(|x| *x /= total);
}

fn fixed_point(rates: &BirthDeathRates, opts: &QsdOptions, detect_stall: bool) -> Result<QsdSolution> {
    let top = rates.max_state();
    let scale = rates.max_total_rate();
    let target = opts.tol * scale;

    let mut q = vec![1.0 / top as f64; top];
    let mut next = vec![0.0; top];
    let mut tail = vec![0.0; top];
    let mut best = f64::INFINITY;
    let mut best_at = 0;
    let mut residual = f64::INFINITY;

    for sweep in 1..=opts.max_sweeps {
        // tail[k] = sum of q over states > k + 1
        let mut acc = 0.0;
        for k in (0..top).rev() {
            tail[k] = acc;
            acc += q[k];
        }

        next[0] = 1.0;
        let mut theta = rates.death[1];
        for k in 1..top {
            // state n = k + 1 from state n - 1 = k
            let n = k + 1;
            next[k] = (rates.birth[n - 1] * next[k - 1] + theta * tail[k - 1]) / rates.death[n];
            if next[k] > RESCALE_ABOVE {
                let f = 1.0 / next[k];
                next[..=k].iter_mut().for_each(|x| *x *= f);
                theta *= f;
            }
        }
        normalize(&mut next);
        std::mem::swap(&mut q, &mut next);

        residual = eigen_residual(rates, &q);
        if residual <= target {
            return Ok(QsdSolution {
                killing_rate: rates.death[1] * q[0],
                distribution: Distribution::new(q)?,
                residual,
                sweeps: sweep,
                method: QsdMethod::FixedPoint,
            });
        }
        if residual < 0.1 * best {
            best = residual;
            best_at = sweep;
        } else if detect_stall && sweep - best_at > STALL_WINDOW {
            return Err(Error::NoConvergence {
                iterations: sweep,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_sweeps,
        residual,
    })
}

/// Thomas factorization of the tridiagonal `-Q^T`, which is column-diagonally
/// dominant so no pivoting is needed.
struct TridiagonalLu {
    lower: Vec<f64>,
    upper: Vec<f64>,
    pivot: Vec<f64>,
}

impl TridiagonalLu {
    /// `lower[k]` couples row `k` to `k - 1`, `upper[k]` row `k` to `k + 1`.
    fn factor(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let m = diag.len();
        let mut pivot = diag;
        for k in 1..m {
            if pivot[k - 1] == 0.0 {
                return Err(Error::InvalidParameter("singular tridiagonal pivot".into()));
            }
            let l = lower[k] / pivot[k - 1];
            pivot[k] -= l * upper[k - 1];
        }
        if pivot[m - 1] == 0.0 {
            return Err(Error::InvalidParameter("singular tridiagonal pivot".into()));
        }
        Ok(Self { lower, upper, pivot })
    }

    fn solve(&self, b: &mut [f64]) {
        let m = b.len();
        for k in 1..m {
            b[k] -= self.lower[k] / self.pivot[k - 1] * b[k - 1];
        }
        b[m - 1] /= self.pivot[m - 1];
        for k in (0..m - 1).rev() {
            b[k] = (b[k] - self.upper[k] * b[k + 1]) / self.pivot[k];
        }
    }
}

fn inverse_iteration(rates: &BirthDeathRates, opts: &QsdOptions) -> Result<QsdSolution> {
    let top = rates.max_state();
    let scale = rates.max_total_rate();
    let target = opts.tol * scale;

    // (-Q^T)[n][n-1] = -lambda_{n-1}, (-Q^T)[n][n+1] = -mu_{n+1}
    let diag: Vec<f64> = (1..=top).map(|n| rates.birth[n] + rates.death[n]).collect();
    let lower: Vec<f64> = (1..=top)
        .map(|n| if n >= 2 { -rates.birth[n - 1] } else { 0.0 })
        .collect();
    let upper: Vec<f64> = (1..=top)
        .map(|n| if n < top { -rates.death[n + 1] } else { 0.0 })
        .collect();
    let lu = TridiagonalLu::factor(lower, diag, upper)?;

    let mut q = vec![1.0 / top as f64; top];
    let mut residual = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        lu.solve(&mut q);
        let peak = q.iter().copied().fold(0.0, f64::max);
        if !(peak.is_finite() && peak > 0.0) {
            return Err(Error::NoConvergence {
                iterations: sweep,
                residual,
            });
        }
        q.iter_mut().for_each(|x| *x = (*x / peak).max(0.0));
        normalize(&mut q);
        residual = eigen_residual(rates, &q);
        if residual <= target {
            return Ok(QsdSolution {
                killing_rate: rates.death[1] * q[0],
                distribution: Distribution::new(q)?,
                residual,
                sweeps: sweep,
                method: QsdMethod::InverseIteration,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_sweeps,
        residual,
    })
}

/// Raw moments `(mu_bar_1, .., mu_bar_k)`, `1 <= k <= 8`.
pub fn raw_moments(d: &Distribution, k: usize) -> Result<Vec<f64>> {
    if !(1..=8).contains(&k) {
        return Err(Error::InvalidParameter(format!("moment order must be in 1..=8, got {k}")));
    }
    Ok((1..=k as i32)
        .map(|j| compensated_sum(d.iter().map(|(n, p)| (n as f64).powi(j) * p)))
        .collect())
}

/// Cumulants up to `order` (`1..=4`) via central moments.
pub fn cumulants_from_distribution(d: &Distribution, order: usize) -> Result<CumulantSet> {
    if !(1..=4).contains(&order) {
        return Err(Error::InvalidParameter(format!("cumulant order must be in 1..=4, got {order}")));
    }
    let mean = compensated_sum(d.iter().map(|(n, p)| n as f64 * p));
    let central = |j: i32| compensated_sum(d.iter().map(|(n, p)| (n as f64 - mean).powi(j) * p));
    let m2 = central(2);
    let all = [mean, m2, central(3), central(4) - 3.0 * m2 * m2];
    Ok(CumulantSet {
        kappa: all[..order].to_vec(),
    })
}

pub fn cumulants_to_raw_moments(c: &CumulantSet) -> Result<RawMomentSet> {
    if c.kappa.len() < 3 {
        return Err(Error::InvalidParameter("need at least three cumulants".into()));
    }
    let (k1, k2, k3) = (c.kappa[0], c.kappa[1], c.kappa[2]);
    Ok(RawMomentSet {
        mu_bar: [k1, k2 + k1 * k1, k3 + 3.0 * k1 * k2 + k1 * k1 * k1],
    })
}
