//! Bivariate SIR chain: truncated sub-generator, its QSD, bivariate
//! cumulants, the cumulant equations and a jump simulator.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::asymptotic::sir_diffusion_approx;
use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::model::{sir_event_rates, SirEventKind, SirParams};
use crate::qsd::compensated_sum;

pub const MAX_STATES: usize = 10_000_000;
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-8;
/// Band storage above this many entries is not attempted.
const MAX_BAND_ENTRIES: usize = 200_000_000;

/// Sub-generator of the SIR chain on `{0..=s_max} x {1..=i_max}`.
///
/// Immigration out of `s = s_max` and infection out of `i = i_max` are
/// suppressed; removal from `i = 1` leaves the box and is the killing rate.
#[derive(Debug, Clone)]
pub struct SirGenerator {
    params: SirParams,
    s_max: usize,
    i_max: usize,
    /// Whether `i` is the fast index of the state ordering.
    i_inner: bool,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
    killing: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorStats {
    pub states: usize,
    pub nnz: usize,
    pub s_max: usize,
    pub i_max: usize,
}

pub fn build_truncated_generator(p: &SirParams, s_max: usize, i_max: usize) -> Result<SirGenerator> {
    p.validate()?;
    if i_max < 1 {
        return Err(Error::InvalidParameter("i_max must be at least 1".into()));
    }
    let states = (s_max + 1)
        .checked_mul(i_max)
        .filter(|&n| n <= MAX_STATES)
        .ok_or(Error::StateSpaceTooLarge {
            states: (s_max + 1).saturating_mul(i_max),
            limit: MAX_STATES,
        })?;

    let mut g = SirGenerator {
        params: *p,
        s_max,
        i_max,
        i_inner: i_max <= s_max + 1,
        row_start: Vec::with_capacity(states + 1),
        cols: Vec::with_capacity(3 * states),
        vals: Vec::with_capacity(3 * states),
        diag: vec![0.0; states],
        killing: vec![0.0; states],
    };
    g.row_start.push(0);
    for idx in 0..states {
        let (s, i) = g.state(idx);
        let mut out = 0.0;
        for ev in sir_event_rates(p, s as u64, i as u64) {
            if ev.rate == 0.0 {
                continue;
            }
            let ts = s as i64 + ev.delta_s as i64;
            let ti = i as i64 + ev.delta_i as i64;
            match ev.kind {
                SirEventKind::Immigration if s == s_max => continue,
                SirEventKind::Infection if i == i_max => continue,
                SirEventKind::Removal if ti == 0 => {
                    g.killing[idx] += ev.rate;
                    out += ev.rate;
                    continue;
                }
                _ => {}
            }
            g.cols.push(g.index(ts as usize, ti as usize));
            g.vals.push(ev.rate);
            out += ev.rate;
        }
        g.diag[idx] = -out;
        g.row_start.push(g.cols.len());
    }
    Ok(g)
}

impl SirGenerator {
    pub fn params(&self) -> &SirParams {
        &self.params
    }

    pub fn s_max(&self) -> usize {
        self.s_max
    }

    pub fn i_max(&self) -> usize {
        self.i_max
    }

    pub fn n_states(&self) -> usize {
        self.diag.len()
    }

    /// Stored entries, diagonal included.
    pub fn nnz(&self) -> usize {
        self.vals.len() + self.diag.len()
    }

    pub fn stats(&self) -> GeneratorStats {
        GeneratorStats {
            states: self.n_states(),
            nnz: self.nnz(),
            s_max: self.s_max,
            i_max: self.i_max,
        }
    }

    fn inner_len(&self) -> usize {
        if self.i_inner {
            self.i_max
        } else {
            self.s_max + 1
        }
    }

    pub fn index(&self, s: usize, i: usize) -> usize {
        debug_assert!(s <= self.s_max && (1..=self.i_max).contains(&i));
        if self.i_inner {
            s * self.i_max + (i - 1)
        } else {
            (i - 1) * (self.s_max + 1) + s
        }
    }

    pub fn state(&self, idx: usize) -> (usize, usize) {
        if self.i_inner {
            (idx / self.i_max, idx % self.i_max + 1)
        } else {
            (idx % (self.s_max + 1), idx / (self.s_max + 1) + 1)
        }
    }

    /// Off-diagonal `(target, rate)` pairs of row `idx`.
    pub fn row(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_start[idx]..self.row_start[idx + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn diagonal(&self, idx: usize) -> f64 {
        self.diag[idx]
    }

    /// Generator entry `G[from][to]`.
    pub fn entry(&self, from: (usize, usize), to: (usize, usize)) -> f64 {
        let a = self.index(from.0, from.1);
        let b = self.index(to.0, to.1);
        if a == b {
            self.diag[a]
        } else {
            self.row(a).filter(|(c, _)| *c == b).map(|(_, v)| v).sum()
        }
    }

    /// Rate at which mass leaves the box from `idx`.
    pub fn killing_rate(&self, idx: usize) -> f64 {
        self.killing[idx]
    }

    pub fn row_sum(&self, idx: usize) -> f64 {
        self.diag[idx] + self.row(idx).map(|(_, v)| v).sum::<f64>()
    }

    /// `max |G[k][k]|`.
    pub fn max_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// `q^T G`.
    pub fn left_apply(&self, q: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = q.iter().zip(&self.diag).map(|(a, d)| a * d).collect();
        for (k, &qk) in q.iter().enumerate() {
            if qk != 0.0 {
                for (j, r) in self.row(k) {
                    out[j] += qk * r;
                }
            }
        }
        out
    }
}

/// Probability vector over `{0..=s_max} x {1..=i_max}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateDistribution {
    s_max: usize,
    i_max: usize,
    /// Row-major in `s`: entry `s * i_max + (i - 1)`.
    probs: Vec<f64>,
}

impl BivariateDistribution {
    pub fn new(s_max: usize, i_max: usize, probs: Vec<f64>) -> Result<Self> {
        if i_max < 1 || probs.len() != (s_max + 1) * i_max {
            return Err(Error::InvalidDistribution(format!(
                "{} entries do not fit s_max = {s_max}, i_max = {i_max}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("entry {p} is negative or non-finite")));
        }
        let total = compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("entries sum to {total}, not 1")));
        }
        Ok(Self { s_max, i_max, probs })
    }

    /// Normalizes non-negative weights given as `(s, i, weight)` triples.
    pub fn from_weights(s_max: usize, i_max: usize, weights: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut probs = vec![0.0; (s_max + 1) * i_max];
        for (s, i, w) in weights {
            if s > s_max || i == 0 || i > i_max {
                return Err(Error::InvalidDistribution(format!("state ({s}, {i}) outside the box")));
            }
            probs[s * i_max + i - 1] += w;
        }
        let total = compensated_sum(probs.iter().copied());
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(s_max, i_max, probs)
    }

    pub fn s_max(&self) -> usize {
        self.s_max
    }

    pub fn i_max(&self) -> usize {
        self.i_max
    }

    pub fn prob(&self, s: usize, i: usize) -> f64 {
        if s > self.s_max || i == 0 || i > self.i_max {
            0.0
        } else {
            self.probs[s * self.i_max + i - 1]
        }
    }

    /// `(s, i, probability)` triples.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let im = self.i_max;
        self.probs.iter().enumerate().map(move |(k, &p)| (k / im, k % im + 1, p))
    }

    /// Mass on the outer layers `s = s_max` and `i = i_max`.
    pub fn boundary_mass(&self) -> f64 {
        compensated_sum(
            self.iter()
                .filter(|(s, i, _)| *s == self.s_max || *i == self.i_max)
                .map(|(_, _, p)| p),
        )
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv_to(std::io::BufWriter::new(file))
    }

    pub fn write_csv_to(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["s", "i", "prob"])?;
        for row in self.iter() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Default box: the mean plus six standard deviations of the leading-order
/// normal approximation, per coordinate.
pub fn default_truncation(p: &SirParams) -> Result<(usize, usize)> {
    p.validate()?;
    if p.r0 > 1.0 {
        let d = sir_diffusion_approx(p)?;
        let s_max = (d.k10 + 6.0 * d.k20.sqrt()).ceil() as usize;
        let i_max = (d.k01 + 6.0 * d.k02.sqrt()).ceil().max(2.0) as usize;
        Ok((s_max, i_max))
    } else {
        // Below threshold the infectives stay O(1) and S is close to Poisson(N).
        let n = p.n_f64();
        Ok(((n + 6.0 * n.sqrt()).ceil() as usize, (6.0 * n.sqrt()).ceil().max(2.0) as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirSolveOptions {
    /// Residual tolerance relative to the largest rate.
    pub tol: f64,
    pub max_iterations: usize,
    /// How often the box may be enlarged by 25% when boundary mass is too high.
    pub max_growths: usize,
}

impl Default for SirSolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iterations: 1000,
            max_growths: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirQsdSolution {
    pub distribution: BivariateDistribution,
    /// Eigenvalue of maximal real part; minus the killing rate.
    pub eigenvalue: f64,
    /// `max |q^T G - sigma q^T|`.
    pub residual: f64,
    pub iterations: usize,
    pub generator: GeneratorStats,
}

fn eigen_residual(gen: &SirGenerator, q: &[f64]) -> (f64, f64) {
    let qg = gen.left_apply(q);
    let sigma = compensated_sum(qg.iter().copied());
    let res = qg
        .iter()
        .zip(q)
        .fold(0.0_f64, |m, (a, b)| m.max((a - sigma * b).abs()));
    (sigma, res)
}

fn normalize_nonneg(v: &mut [f64]) -> Result<()> {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    let total = compensated_sum(v.iter().copied());
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::InvalidDistribution(format!("iterate has total mass {total}")));
    }
    v.iter_mut().for_each(|x| *x /= total);
    Ok(())
}

fn to_distribution(gen: &SirGenerator, q: &[f64]) -> Result<BivariateDistribution> {
    let mut probs = vec![0.0; q.len()];
    for (idx, &v) in q.iter().enumerate() {
        let (s, i) = gen.state(idx);
        probs[s * gen.i_max + i - 1] = v;
    }
    BivariateDistribution::new(gen.s_max, gen.i_max, probs)
}

fn check_boundary(gen: &SirGenerator, d: &BivariateDistribution) -> Result<()> {
    let mass = d.boundary_mass();
    if mass > BOUNDARY_MASS_LIMIT {
        return Err(Error::TruncationTooSmall {
            mass,
            limit: BOUNDARY_MASS_LIMIT,
            s_max: gen.s_max,
            i_max: gen.i_max,
        });
    }
    Ok(())
}

/// Inverse iteration on `-G^T + eps I` with a banded LU factorization.
pub fn solve_bivariate_qsd(gen: &SirGenerator, tol: f64) -> Result<SirQsdSolution> {
    let sol = solve_unchecked(gen, tol, SirSolveOptions::default().max_iterations)?;
    check_boundary(gen, &sol.distribution)?;
    Ok(sol)
}

fn solve_unchecked(gen: &SirGenerator, tol: f64, max_iterations: usize) -> Result<SirQsdSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let n = gen.n_states();
    let band = gen.inner_len();
    if n.saturating_mul(2 * band + 1) > MAX_BAND_ENTRIES {
        log::warn!("{n} states with bandwidth {band}: falling back to power iteration");
        return solve_bivariate_qsd_power(gen, tol, usize::MAX);
    }
    let scale = gen.max_rate();
    let shift = 1e-8 * scale;
    let mut m = BandedMatrix::zeros(n, band, band);
    for k in 0..n {
        m.add(k, k, -gen.diag[k] + shift);
        for (j, r) in gen.row(k) {
            m.add(j, k, -r);
        }
    }
    let lu = m.factor()?;

    let mut q = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iterations {
        lu.solve_in_place(&mut q);
        normalize_nonneg(&mut q)?;
        let (sigma, res) = eigen_residual(gen, &q);
        residual = res;
        if res <= tol * scale {
            return Ok(SirQsdSolution {
                distribution: to_distribution(gen, &q)?,
                eigenvalue: sigma,
                residual: res,
                iterations: it,
                generator: gen.stats(),
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        residual,
    })
}

/// Power iteration on `I + G / c` with `c = max |G[k][k]| + 1`. Slow but
/// independent of the factorization route.
pub fn solve_bivariate_qsd_power(gen: &SirGenerator, tol: f64, max_iterations: usize) -> Result<SirQsdSolution> {
    let n = gen.n_states();
    let scale = gen.max_rate();
    let c = scale + 1.0;
    let mut q = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iterations {
        let qg = gen.left_apply(&q);
        for (a, b) in q.iter_mut().zip(&qg) {
            *a += b / c;
        }
        normalize_nonneg(&mut q)?;
        if it % 50 == 0 || it == max_iterations {
            let (sigma, res) = eigen_residual(gen, &q);
            residual = res;
            if res <= tol * scale {
                return Ok(SirQsdSolution {
                    distribution: to_distribution(gen, &q)?,
                    eigenvalue: sigma,
                    residual: res,
                    iterations: it,
                    generator: gen.stats(),
                });
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        residual,
    })
}

/// QSD starting from [`default_truncation`], enlarging both bounds by 25%
/// until the boundary mass is at most [`BOUNDARY_MASS_LIMIT`].
pub fn solve_sir_qsd(p: &SirParams, opts: &SirSolveOptions) -> Result<SirQsdSolution> {
    let (s0, i0) = default_truncation(p)?;
    solve_sir_qsd_from(p, s0, i0, opts)
}

/// As [`solve_sir_qsd`], starting from an explicit box.
pub fn solve_sir_qsd_from(p: &SirParams, s_max: usize, i_max: usize, opts: &SirSolveOptions) -> Result<SirQsdSolution> {
    let (mut s_max, mut i_max) = (s_max, i_max);
    let mut last_err = None;
    for _ in 0..=opts.max_growths {
        let gen = build_truncated_generator(p, s_max, i_max)?;
        let sol = solve_unchecked(&gen, opts.tol, opts.max_iterations)?;
        match check_boundary(&gen, &sol.distribution) {
            Ok(()) => return Ok(sol),
            Err(e) => {
                log::debug!("{e}; growing the box");
                last_err = Some(e);
            }
        }
        s_max = (s_max as f64 * 1.25).ceil() as usize;
        i_max = (i_max as f64 * 1.25).ceil() as usize;
    }
    Err(last_err.expect("at least one attempt"))
}

/// First- and second-order cumulants, with optional third-order ones.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BivariateCumulantSet {
    pub k10: f64,
    pub k01: f64,
    pub k20: f64,
    pub k11: f64,
    pub k02: f64,
    pub k30: Option<f64>,
    pub k21: Option<f64>,
    pub k12: Option<f64>,
    pub k03: Option<f64>,
}

impl BivariateCumulantSet {
    /// `(k10, k01, k20, k11, k02)`.
    pub fn first_and_second(&self) -> [f64; 5] {
        [self.k10, self.k01, self.k20, self.k11, self.k02]
    }
}

/// Means, covariances and (for `order = 3`) third central mixed moments.
/// Second-order entries are filled for every order.
pub fn bivariate_cumulants(d: &BivariateDistribution, order: usize) -> Result<BivariateCumulantSet> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidParameter(format!("cumulant order must be in 1..=3, got {order}")));
    }
    let k10 = compensated_sum(d.iter().map(|(s, _, p)| s as f64 * p));
    let k01 = compensated_sum(d.iter().map(|(_, i, p)| i as f64 * p));
    let central = |a: i32, b: i32| {
        compensated_sum(d.iter().map(|(s, i, p)| (s as f64 - k10).powi(a) * (i as f64 - k01).powi(b) * p))
    };
    let mut k = BivariateCumulantSet {
        k10,
        k01,
        k20: central(2, 0),
        k11: central(1, 1),
        k02: central(0, 2),
        ..Default::default()
    };
    if order == 3 {
        k.k30 = Some(central(3, 0));
        k.k21 = Some(central(2, 1));
        k.k12 = Some(central(1, 2));
        k.k03 = Some(central(0, 3));
    }
    Ok(k)
}

/// Right-hand sides of the SIR cumulant equations (in units of `mu`), without
/// the exponentially small conditioning terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirRhs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

/// `A..E` for `d/dt (k10, k01, k20, k11, k02)`; missing `k21`, `k12` are 0.
pub fn sir_rhs(k: &BivariateCumulantSet, p: &SirParams) -> SirRhs {
    let n = p.n_f64();
    let (alpha, r0) = (p.alpha, p.r0);
    let ar = alpha * r0 / n;
    let k21 = k.k21.unwrap_or(0.0);
    let k12 = k.k12.unwrap_or(0.0);
    let k1 = k.k10 * k.k01 + k.k11;
    let k2 = k.k10 * k.k11 + k.k01 * k.k20 + k21;
    let k3 = k.k10 * k.k02 + k.k01 * k.k11 + k12;
    SirRhs {
        a: n - ar * k1 - k.k10,
        b: ar * k1 - alpha * k.k01,
        c: n + k.k10 + ar * (k1 - 2.0 * k2) - 2.0 * k.k20,
        d: ar * (k2 - k1 - k3) - (alpha + 1.0) * k.k11,
        e: alpha * k.k01 + ar * (k1 + 2.0 * k3) - 2.0 * alpha * k.k02,
        k1,
        k2,
        k3,
    }
}

/// Sampled `(t, s, i)` path of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirTrajectory {
    pub points: Vec<(f64, u64, u64)>,
    /// Whether the run ended by reaching `i = 0` before `t_end`.
    pub absorbed: bool,
}

impl SirTrajectory {
    pub fn write_csv_to(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "s", "i"])?;
        for row in &self.points {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv_to(std::io::BufWriter::new(file))
    }
}

/// Waiting time and kind of the next event from `(s, i)`, or `None` if every
/// rate is zero.
pub fn sample_event<R: Rng + ?Sized>(p: &SirParams, s: u64, i: u64, rng: &mut R) -> Option<(f64, SirEventKind)> {
    let events = sir_event_rates(p, s, i);
    let total: f64 = events.iter().map(|e| e.rate).sum();
    if !(total > 0.0) {
        return None;
    }
    let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
    let mut u = rng.random::<f64>() * total;
    let mut chosen = None;
    for e in &events {
        if e.rate > 0.0 {
            chosen = Some(e.kind);
            if u < e.rate {
                break;
            }
            u -= e.rate;
        }
    }
    chosen.map(|k| (wait, k))
}

/// Exact jump simulation from `start` until `t_end` or absorption in `i = 0`.
pub fn simulate_sir(p: &SirParams, start: (u64, u64), t_end: f64, seed: u64) -> Result<SirTrajectory> {
    p.validate()?;
    if !(t_end > 0.0) {
        return Err(Error::InvalidParameter(format!("t_end must be positive, got {t_end}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s, mut i) = start;
    let mut t = 0.0;
    let mut points = vec![(t, s, i)];
    while i > 0 {
        let Some((dt, kind)) = sample_event(p, s, i, &mut rng) else {
            break;
        };
        if t + dt > t_end {
            return Ok(SirTrajectory { points, absorbed: false });
        }
        t += dt;
        let (ds, di) = kind.delta();
        s = s.checked_add_signed(ds as i64).expect("event rates vanish at s = 0");
        i = i.checked_add_signed(di as i64).expect("event rates vanish at i = 0");
        points.push((t, s, i));
    }
    Ok(SirTrajectory {
        absorbed: i == 0,
        points,
    })
}
