//! Cumulant equations of the Verhulst model and their stationary points.
//!
//! `A`, `B`, `C` are the right-hand sides of `d kappa_i / dt` for `i = 1, 2, 3`
//! in units where `mu = 1`; the physical derivative is `mu` times them.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VerhulstParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerhulstRhs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl VerhulstRhs {
    pub fn to_array(self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }
}

/// `A, B, C` at `kappa = (kappa_1, kappa_2, kappa_3, kappa_4)`.
pub fn rhs_abc(kappa: [f64; 4], p: &VerhulstParams) -> VerhulstRhs {
    let [k1, k2, k3, k4] = kappa;
    let n = p.n_f64();
    let (r0, alpha) = (p.r0, p.alpha);
    let plus = (r0 + alpha) / n;
    let minus = (r0 - alpha) / n;

    let a = (r0 - 1.0) * k1 - plus * (k1 * k1 + k2);
    let b = (r0 + 1.0) * k1 + 2.0 * (r0 - 1.0) * k2
        - minus * (k1 * k1 + k2)
        - plus * (4.0 * k1 * k2 + 2.0 * k3);
    let c = (r0 - 1.0) * (k1 + 3.0 * k3) + 3.0 * (r0 + 1.0) * k2
        - minus * (6.0 * k1 * k2 + 3.0 * k3)
        - plus * (k1 * k1 + 6.0 * k1 * k3 + k2 + 6.0 * k2 * k2 + 3.0 * k4);
    VerhulstRhs { a, b, c }
}

/// Time derivatives of the cumulants of the process conditioned on
/// non-extinction, given the QSD mass `q1` at state 1.
pub fn rhs_conditioned(kappa: [f64; 4], p: &VerhulstParams, q1: f64) -> Result<[f64; 3]> {
    if !(0.0..=1.0).contains(&q1) {
        return Err(Error::InvalidParameter(format!("q1 must lie in [0, 1], got {q1}")));
    }
    let [k1, k2, k3, _] = kappa;
    let base = rhs_abc(kappa, p);
    let mu1 = p.mu * (1.0 + p.alpha / p.n_f64());
    let kill = mu1 * q1;
    Ok([
        p.mu * base.a + kill * k1,
        p.mu * base.b + kill * (k2 - k1 * k1),
        p.mu * base.c + kill * (k1 * k1 * k1 - 3.0 * k1 * k2 + k3),
    ])
}

/// `mu (A, B, C)` with `kappa_4` held at `kappa4`.
pub fn closed_rhs(p: &VerhulstParams, kappa: [f64; 3], kappa4: f64) -> [f64; 3] {
    let r = rhs_abc([kappa[0], kappa[1], kappa[2], kappa4], p);
    [p.mu * r.a, p.mu * r.b, p.mu * r.c]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Marginal => "marginal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    pub kappa: [f64; 3],
    /// `max |mu (A, B, C)|` at `kappa`.
    pub residual: f64,
    pub stability: Stability,
    pub jacobian_eigen_real_parts: [f64; 3],
}

/// Central-difference Jacobian of `f` at `x`, with per-coordinate step
/// `max(1e-6, 1e-8 |x|)`.
pub fn numeric_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> DMatrix<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h = (1e-8 * norm).max(1e-6);
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

/// Real parts of the eigenvalues of `jac`, or `None` if the matrix has
/// non-finite entries.
pub fn eigen_real_parts(jac: &DMatrix<f64>) -> Option<Vec<f64>> {
    if jac.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let ev = jac.complex_eigenvalues();
    let re: Vec<f64> = ev.iter().map(|z| z.re).collect();
    re.iter().all(|v| v.is_finite()).then_some(re)
}

/// Stable iff every real part is below `-1e-9 * rate_scale`, unstable if any
/// exceeds `+1e-9 * rate_scale`, marginal otherwise.
pub fn classify(real_parts: &[f64], rate_scale: f64) -> Stability {
    let eps = 1e-9 * rate_scale;
    if real_parts.iter().any(|&r| r > eps) {
        Stability::Unstable
    } else if real_parts.iter().all(|&r| r < -eps) {
        Stability::Stable
    } else {
        Stability::Marginal
    }
}

/// Linear stability of an arbitrary autonomous system `x' = f(x)` at `x`.
pub fn stability_of(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], rate_scale: f64) -> (Stability, Vec<f64>) {
    let jac = numeric_jacobian(f, x);
    match eigen_real_parts(&jac) {
        Some(re) => (classify(&re, rate_scale), re),
        None => (Stability::Marginal, vec![f64::NAN; x.len()]),
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Classifies `point` as a critical point of the `kappa_4`-closed system.
pub fn jacobian_stability(p: &VerhulstParams, point: [f64; 3], closure_kappa4: f64) -> StationaryPoint {
    let f = |x: &[f64]| closed_rhs(p, [x[0], x[1], x[2]], closure_kappa4).to_vec();
    let (stability, re) = stability_of(f, &point, p.mu);
    let mut parts = [f64::NAN; 3];
    parts.copy_from_slice(&re);
    parts.sort_by(|a, b| b.total_cmp(a));
    StationaryPoint {
        kappa: point,
        residual: max_abs(&closed_rhs(p, point, closure_kappa4)),
        stability,
        jacobian_eigen_real_parts: parts,
    }
}

/// Sampled `(t, kappa_1, kappa_2, kappa_3)` path.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<(f64, [f64; 3])>,
}

impl Trajectory {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv_to(std::io::BufWriter::new(file))
    }

    pub fn write_csv_to(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "kappa1", "kappa2", "kappa3"])?;
        for (t, k) in &self.points {
            w.serialize((t, k[0], k[1], k[2]))?;
        }
        w.flush()?;
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau. The system is autonomous so the nodes are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const MAX_STEPS: usize = 10_000_000;
/// Steps between refreshes of the stability step cap.
const CAP_REFRESH: usize = 20;
/// `h |lambda|` bound keeping every Jacobian eigenvalue inside the method's
/// stability region (the real-axis limit is about 3.3).
const STABLE_H_LAMBDA: f64 = 2.5;

/// Largest step for which explicit integration of the linearization at `y`
/// is contractive; near an attracting point, larger steps let the iterate
/// hover at the error-tolerance level instead of converging.
fn stability_cap(p: &VerhulstParams, y: [f64; 3], kappa4: f64) -> f64 {
    let jac = numeric_jacobian(|x| closed_rhs(p, [x[0], x[1], x[2]], kappa4).to_vec(), &y);
    let radius = jac
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max);
    if radius.is_finite() && radius > 0.0 {
        STABLE_H_LAMBDA / radius
    } else {
        f64::INFINITY
    }
}

/// Integrates the `kappa_4`-closed system (with `q1 = 0`) from `init` until
/// `max |kappa'| < 1e-10 mu N` or `max_time` is reached.
pub fn integrate_to_stationarity(
    p: &VerhulstParams,
    init: [f64; 3],
    closure_kappa4: f64,
    max_time: f64,
) -> Result<StationaryPoint> {
    integrate_inner(p, init, closure_kappa4, max_time, None)
}

/// As [`integrate_to_stationarity`], also returning every accepted step.
pub fn integrate_recording(
    p: &VerhulstParams,
    init: [f64; 3],
    closure_kappa4: f64,
    max_time: f64,
) -> (Trajectory, Result<StationaryPoint>) {
    let mut traj = Trajectory::default();
    let res = integrate_inner(p, init, closure_kappa4, max_time, Some(&mut traj));
    (traj, res)
}

fn integrate_inner(
    p: &VerhulstParams,
    init: [f64; 3],
    kappa4: f64,
    max_time: f64,
    mut record: Option<&mut Trajectory>,
) -> Result<StationaryPoint> {
    p.validate()?;
    if !(max_time > 0.0) {
        return Err(Error::InvalidParameter(format!("max_time must be positive, got {max_time}")));
    }
    let n = p.n_f64();
    let atol = 1e-10 * n;
    let rtol = 1e-10;
    let target = 1e-10 * p.mu * n;
    let bound = 1e3 * n;
    let f = |y: &[f64; 3]| closed_rhs(p, *y, kappa4);

    let mut t = 0.0;
    let mut y = init;
    let mut k = [[0.0; 3]; 7];
    k[0] = f(&y);
    let mut h = (0.01 / p.mu).min(max_time);
    if let Some(tr) = record.as_deref_mut() {
        tr.points.push((t, y));
    }

    let mut cap = f64::INFINITY;
    for step in 0..MAX_STEPS {
        if step % CAP_REFRESH == 0 {
            cap = stability_cap(p, y, kappa4);
        }
        let rhs_norm = max_abs(&k[0]);
        if rhs_norm < target {
            return Ok(jacobian_stability(p, y, kappa4));
        }
        if t >= max_time {
            return Err(Error::NotStationary { time: t, state: y, rhs_norm });
        }
        h = h.min(cap).min(max_time - t);

        for s in 1..7 {
            let mut ys = y;
            for (i, yi) in ys.iter_mut().enumerate() {
                *yi += h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
            }
            k[s] = f(&ys);
        }
        let mut y5 = y;
        let mut err = 0.0_f64;
        for i in 0..3 {
            let d5: f64 = (0..7).map(|s| B5[s] * k[s][i]).sum();
            let d4: f64 = (0..7).map(|s| B4[s] * k[s][i]).sum();
            y5[i] = y[i] + h * d5;
            let sc = atol + rtol * y[i].abs().max(y5[i].abs());
            err = err.max((h * (d5 - d4) / sc).abs());
        }
        if !err.is_finite() {
            h *= 0.1;
            if h < 1e-300 {
                return Err(Error::TrajectoryEscaped { norm: f64::INFINITY, bound, time: t });
            }
            continue;
        }
        if err <= 1.0 {
            t += h;
            y = y5;
            // FSAL: the last stage is f at the new point.
            k[0] = k[6];
            let norm = max_abs(&y);
            if let Some(tr) = record.as_deref_mut() {
                tr.points.push((t, y));
            }
            if !(norm <= bound) {
                return Err(Error::TrajectoryEscaped { norm, bound, time: t });
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    let rhs_norm = max_abs(&k[0]);
    Err(Error::NotStationary { time: t, state: y, rhs_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sis100() -> VerhulstParams {
        VerhulstParams::sis(100, 2.0).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let p = sis100();
        let r = rhs_abc([0.0; 4], &p);
        assert_eq!(r.to_array(), [0.0; 3]);
        let r = rhs_abc([1.0, 0.0, 0.0, 0.0], &p);
        assert_relative_eq!(r.a, 0.98, max_relative = 1e-14);
        assert_relative_eq!(r.b, 2.98, max_relative = 1e-14);
        assert_relative_eq!(r.c, 0.98, max_relative = 1e-14);
        let r = rhs_abc([48.94, 52.0, -50.0, 0.0], &p);
        assert!(r.a.abs() <= 0.01, "A = {}", r.a);
    }

    #[test]
    fn conditioned_examples() {
        let p = sis100();
        let k = [3.0, 2.0, -1.0, 0.5];
        let base = rhs_abc(k, &p).to_array();
        assert_eq!(rhs_conditioned(k, &p, 0.0).unwrap(), base);

        let k = [1.0, 1.0, 0.0, 0.0];
        let base = rhs_abc(k, &p).to_array();
        let got = rhs_conditioned(k, &p, 1.0).unwrap();
        let mu1 = 1.0 + p.alpha / 100.0;
        for (i, add) in [1.0, 0.0, -2.0].iter().enumerate() {
            assert_relative_eq!(got[i] - base[i], mu1 * add, epsilon = 1e-12);
        }

        let p = VerhulstParams::new(10, 2.0, 10.0, 1.0).unwrap();
        let k = [2.0, 0.0, 0.0, 0.0];
        let base = rhs_abc(k, &p).to_array();
        let got = rhs_conditioned(k, &p, 0.5).unwrap();
        for (i, add) in [2.0, -4.0, 8.0].iter().enumerate() {
            assert_relative_eq!(got[i] - base[i], *add, epsilon = 1e-12);
        }
        assert!(rhs_conditioned(k, &p, 1.5).is_err());
    }

    #[test]
    fn numeric_jacobian_matches_hand_derivatives() {
        for (n, r0, alpha) in [(100, 2.0, 0.0), (400, 4.0, 1.0), (50, 1.5, 3.0)] {
            let p = VerhulstParams::new(n, r0, alpha, 1.0).unwrap();
            let nn = n as f64;
            let (k1, k2, k3) = (0.4 * nn, 0.3 * nn, -0.2 * nn);
            let pl = (r0 + alpha) / nn;
            let mi = (r0 - alpha) / nn;
            let hand = DMatrix::from_row_slice(
                3,
                3,
                &[
                    (r0 - 1.0) - 2.0 * pl * k1,
                    -pl,
                    0.0,
                    (r0 + 1.0) - 2.0 * mi * k1 - 4.0 * pl * k2,
                    2.0 * (r0 - 1.0) - mi - 4.0 * pl * k1,
                    -2.0 * pl,
                    (r0 - 1.0) - 6.0 * mi * k2 - pl * (2.0 * k1 + 6.0 * k3),
                    3.0 * (r0 + 1.0) - 6.0 * mi * k1 - pl * (1.0 + 12.0 * k2),
                    3.0 * (r0 - 1.0) - 3.0 * mi - 6.0 * pl * k1,
                ],
            );
            let num = numeric_jacobian(|x| closed_rhs(&p, [x[0], x[1], x[2]], 0.0).to_vec(), &[k1, k2, k3]);
            for (a, b) in num.iter().zip(hand.iter()) {
                assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn logistic_reduction_stability() {
        let (r0, alpha, n, mu) = (2.0, 0.5, 100.0, 1.3);
        let f = |x: &[f64]| vec![mu * (r0 - 1.0) * x[0] - mu * (r0 + alpha) * x[0] * x[0] / n];
        assert_eq!(stability_of(f, &[0.0], mu).0, Stability::Unstable);
        let eq = (r0 - 1.0) * n / (r0 + alpha);
        let (s, re) = stability_of(f, &[eq], mu);
        assert_eq!(s, Stability::Stable);
        assert_relative_eq!(re[0], -mu * (r0 - 1.0), max_relative = 1e-6);
    }

    #[test]
    fn origin_is_a_fixed_point() {
        let pt = integrate_to_stationarity(&sis100(), [0.0; 3], 0.0, 10.0).unwrap();
        assert_eq!(pt.kappa, [0.0; 3]);
        assert_eq!(pt.residual, 0.0);
    }

    #[test]
    fn integration_reaches_a_stable_point() {
        let p = sis100();
        let (traj, res) = integrate_recording(&p, [50.0, 50.0, 0.0], 0.0, 1e4);
        let pt = res.unwrap();
        assert_eq!(pt.stability, Stability::Stable);
        assert!(pt.residual < 1e-10 * 100.0);
        assert!(traj.points.len() > 2);
        assert!((pt.kappa[0] - 48.93).abs() < 0.2);

        let again = integrate_to_stationarity(&p, pt.kappa, 0.0, 1.0).unwrap();
        assert_eq!(again.kappa, pt.kappa);

        let mut buf = Vec::new();
        traj.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,kappa1,kappa2,kappa3\n"));
        assert_eq!(text.lines().count(), traj.points.len() + 1);
    }

    #[test]
    fn short_horizon_reports_last_state() {
        match integrate_to_stationarity(&sis100(), [50.0, 50.0, 0.0], 0.0, 0.01) {
            Err(Error::NotStationary { time, rhs_norm, .. }) => {
                assert!((time - 0.01).abs() < 1e-12);
                assert!(rhs_norm > 0.0);
            }
            other => panic!("expected NotStationary, got {other:?}"),
        }
    }

    #[test]
    fn divergent_start_escapes() {
        let p = sis100();
        let res = integrate_to_stationarity(&p, [-500.0, 0.0, 0.0], 0.0, 1e4);
        assert!(matches!(res, Err(Error::TrajectoryEscaped { .. })), "{res:?}");
    }
}
