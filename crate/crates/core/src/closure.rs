//! Moment-closure baselines for the Verhulst model.
//!
//! * Two-cumulant closure (`kappa_3 = 0`) in closed form.
//! * Three-cumulant closure (`kappa_4 = 0`): `A = 0` gives `kappa_2` and
//!   `B = 0` gives `kappa_3` as polynomials in `kappa_1`, and `C = 0` becomes
//!   a quartic in `kappa_1`. One of its roots is the trivial `kappa_1 = 0`;
//!   the acceptable one is picked by admissibility and linear stability.

use serde::{Deserialize, Serialize};

use crate::dynamics::{closed_rhs, jacobian_stability, Stability, StationaryPoint};
use crate::error::{Error, Result};
use crate::model::VerhulstParams;
use crate::newton::{newton_solve, NewtonOptions};
use crate::poly::Poly;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatisKiffeResult {
    pub kappa1: f64,
    pub kappa2: f64,
    /// Auxiliary rate, `1 / time`.
    pub gamma1: f64,
}

/// Stationary point of the two-cumulant closure, in closed form.
pub fn matis_kiffe_two_cumulant(p: &VerhulstParams) -> Result<MatisKiffeResult> {
    p.validate()?;
    let n = p.n_f64();
    let (r0, alpha) = (p.r0, p.alpha);
    let discriminant = (r0 - 1.0).powi(2) - 8.0 * (alpha + 1.0) * r0 / n;
    if discriminant < 0.0 {
        return Err(Error::ClosureBreakdown { discriminant });
    }
    let g = discriminant.sqrt();
    let s = r0 + alpha;
    Ok(MatisKiffeResult {
        kappa1: (3.0 * (r0 - 1.0) + g) * n / (4.0 * s),
        kappa2: ((r0 - 1.0).powi(2) + 4.0 * (alpha + 1.0) * r0 / n - (r0 - 1.0) * g) * n * n / (8.0 * s * s),
        gamma1: p.mu * g,
    })
}

/// The same stationary point found numerically from `A = B = 0` with
/// `kappa_3 = 0`, starting from the leading-order large-`N` values.
pub fn two_cumulant_newton(p: &VerhulstParams) -> Result<[f64; 2]> {
    p.validate()?;
    let n = p.n_f64();
    let s = p.r0 + p.alpha;
    let start = [(p.r0 - 1.0) * n / s, (1.0 + p.alpha) * p.r0 * n / (s * s)];
    let f = |x: &[f64]| {
        let r = closed_rhs(p, [x[0], x[1], 0.0], 0.0);
        vec![r[0], r[1]]
    };
    let opts = NewtonOptions {
        abs_tol: 1e-13 * p.mu * n,
        max_iterations: 200,
    };
    let r = newton_solve(f, &start, &opts)?;
    Ok([r.x[0], r.x[1]])
}

/// `kappa_2` and `kappa_3` as polynomials in `kappa_1` on `A = B = 0`, and
/// `C` restricted to that curve (`kappa_4 = 0`).
pub fn elimination_polynomials(p: &VerhulstParams) -> [Poly; 3] {
    let n = p.n_f64();
    let (r0, alpha) = (p.r0, p.alpha);
    let plus = (r0 + alpha) / n;
    let minus = (r0 - alpha) / n;
    let k1 = Poly::x();
    let k1sq = &k1 * &k1;

    let k2 = &k1.scale((r0 - 1.0) / plus) - &k1sq;
    let k1k2 = &k1 * &k2;

    // 2 plus k3 = (R0+1) k1 + 2(R0-1) k2 - minus (k1^2 + k2) - 4 plus k1 k2
    let mut rhs = &k1.scale(r0 + 1.0) + &k2.scale(2.0 * (r0 - 1.0));
    rhs = &rhs - &(&k1sq + &k2).scale(minus);
    rhs = &rhs - &k1k2.scale(4.0 * plus);
    let k3 = rhs.scale(1.0 / (2.0 * plus));

    let mut c = &(&k1 + &k3.scale(3.0)).scale(r0 - 1.0) + &k2.scale(3.0 * (r0 + 1.0));
    c = &c - &(&k1k2.scale(6.0) + &k3.scale(3.0)).scale(minus);
    let inner = &(&(&k1sq + &(&k1 * &k3).scale(6.0)) + &k2) + &(&k2 * &k2).scale(6.0);
    c = &c - &inner.scale(plus);
    [k2, k3, c]
}

/// One root of the closure quartic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarticRoot {
    pub re: f64,
    pub im: f64,
    /// `|im| < 1e-8 N`.
    pub real: bool,
    /// Back-solved `(kappa_1, kappa_2, kappa_3)` for real roots.
    pub kappa: Option<[f64; 3]>,
    pub admissible: bool,
    pub stability: Option<Stability>,
    pub eigen_real_parts: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureSolution {
    pub kappa: [f64; 3],
    /// Real parts of the candidate `kappa_1` values.
    pub all_roots: Vec<f64>,
    pub accepted_index: usize,
    pub stability: Stability,
    /// `max |mu (A, B, C)|` at the accepted point.
    pub residual: f64,
    pub candidates: Vec<QuarticRoot>,
}

/// All roots of the closure quartic, with back-solved cumulants for the real
/// ones. Admissibility and stability are filled by [`classify_candidates`].
pub fn closure_quartic_roots(p: &VerhulstParams) -> Result<Vec<QuarticRoot>> {
    p.validate()?;
    let n = p.n_f64();
    let [k2, k3, c] = elimination_polynomials(p);
    // Work in u = kappa_1 / N so the coefficients are O(1).
    let cu = c.rescale_argument(n);
    if cu.degree() != 4 {
        return Err(Error::NoAdmissibleRoot(format!("closure polynomial has degree {}", cu.degree())));
    }
    let mut roots: Vec<QuarticRoot> = cu
        .roots()
        .into_iter()
        .map(|z| {
            let (re, im) = (z.re * n, z.im * n);
            let real = im.abs() < 1e-8 * n;
            QuarticRoot {
                re,
                im,
                real,
                kappa: real.then(|| polish(p, [re, k2.eval(re), k3.eval(re)])),
                admissible: false,
                stability: None,
                eigen_real_parts: None,
            }
        })
        .collect();
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(roots)
}

/// A few Newton steps on the full system to remove elimination rounding.
fn polish(p: &VerhulstParams, k: [f64; 3]) -> [f64; 3] {
    let f = |x: &[f64]| closed_rhs(p, [x[0], x[1], x[2]], 0.0).to_vec();
    let opts = NewtonOptions {
        abs_tol: 1e-14 * p.mu * p.n_f64(),
        max_iterations: 8,
    };
    match newton_solve(f, &k, &opts) {
        Ok(r) if max_abs(&closed_rhs(p, [r.x[0], r.x[1], r.x[2]], 0.0)) <= max_abs(&closed_rhs(p, k, 0.0)) => {
            [r.x[0], r.x[1], r.x[2]]
        }
        _ => k,
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn admissible(p: &VerhulstParams, k1: f64) -> bool {
    k1 > 0.0 && k1 < p.n_f64()
}

/// Fills admissibility and stability labels.
pub fn classify_candidates(p: &VerhulstParams, roots: &mut [QuarticRoot]) {
    for r in roots.iter_mut() {
        if let Some(k) = r.kappa {
            r.admissible = admissible(p, k[0]);
            let sp = jacobian_stability(p, k, 0.0);
            r.stability = Some(sp.stability);
            r.eigen_real_parts = Some(sp.jacobian_eigen_real_parts);
        }
    }
}

/// Picks the unique admissible, stable candidate.
pub fn select_nonspurious(candidates: &[[f64; 3]], p: &VerhulstParams) -> Result<ClosureSolution> {
    if candidates.is_empty() {
        return Err(Error::NoAdmissibleRoot("empty candidate list".into()));
    }
    let mut roots: Vec<QuarticRoot> = candidates
        .iter()
        .map(|k| QuarticRoot {
            re: k[0],
            im: 0.0,
            real: true,
            kappa: Some(*k),
            admissible: false,
            stability: None,
            eigen_real_parts: None,
        })
        .collect();
    classify_candidates(p, &mut roots);
    pick(p, roots)
}

fn describe(roots: &[QuarticRoot]) -> String {
    roots
        .iter()
        .map(|r| match (r.kappa, r.stability) {
            (Some(k), Some(s)) => format!(
                "kappa1 = {:.6} ({}, {s})",
                k[0],
                if r.admissible { "admissible" } else { "outside (0, N)" }
            ),
            _ => format!("kappa1 = {:.6} {:+.6}i (complex)", r.re, r.im),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn pick(p: &VerhulstParams, roots: Vec<QuarticRoot>) -> Result<ClosureSolution> {
    let good: Vec<usize> = roots
        .iter()
        .enumerate()
        .filter(|(_, r)| r.admissible && r.stability == Some(Stability::Stable))
        .map(|(i, _)| i)
        .collect();
    match good.as_slice() {
        [] => Err(Error::NoAdmissibleRoot(describe(&roots))),
        [idx] => {
            let kappa = roots[*idx].kappa.expect("real root");
            Ok(ClosureSolution {
                kappa,
                all_roots: roots.iter().map(|r| r.re).collect(),
                accepted_index: *idx,
                stability: Stability::Stable,
                residual: max_abs(&closed_rhs(p, kappa, 0.0)),
                candidates: roots,
            })
        }
        _ => Err(Error::AmbiguousRoots(describe(&roots))),
    }
}

/// Stationary point of the three-cumulant closure with `kappa_4 = 0`.
pub fn cumulant_neglect_stationary(p: &VerhulstParams) -> Result<ClosureSolution> {
    let mut roots = closure_quartic_roots(p)?;
    classify_candidates(p, &mut roots);
    let limit = 1e-9 * p.mu * p.n_f64();
    let poorly_solved = roots
        .iter()
        .filter_map(|r| r.kappa)
        .any(|k| max_abs(&closed_rhs(p, k, 0.0)) > limit);
    if poorly_solved {
        log::debug!("elimination left large residuals; trying multistart Newton");
        let starts = multistart_roots(p);
        if !starts.is_empty() {
            return select_nonspurious(&starts, p);
        }
    }
    pick(p, roots)
}

/// Critical points of the closed system found by damped Newton from eight
/// starting points spread over `(0, N)`, deduplicated.
pub fn multistart_roots(p: &VerhulstParams) -> Vec<[f64; 3]> {
    let n = p.n_f64();
    let f = |x: &[f64]| closed_rhs(p, [x[0], x[1], x[2]], 0.0).to_vec();
    let opts = NewtonOptions {
        abs_tol: 1e-11 * p.mu * n,
        max_iterations: 300,
    };
    let mut found: Vec<[f64; 3]> = Vec::new();
    for j in 1..=8 {
        let k1 = n * j as f64 / 9.0;
        let start = [k1, k1 * (1.0 - k1 / n).max(0.05), 0.0];
        if let Ok(r) = newton_solve(f, &start, &opts) {
            let k = [r.x[0], r.x[1], r.x[2]];
            if !found.iter().any(|g| (g[0] - k[0]).abs() < 1e-6 * n) {
                found.push(k);
            }
        }
    }
    found
}

impl ClosureSolution {
    pub fn accepted_point(&self, p: &VerhulstParams) -> StationaryPoint {
        jacobian_stability(p, self.kappa, 0.0)
    }
}
