//! Dense real polynomials with companion-matrix root finding.

use std::ops::{Add, Mul, Sub};

use nalgebra::{Complex, DMatrix};

/// Coefficients in ascending order: `c[0] + c[1] x + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub c: Vec<f64>,
}

impl Poly {
    pub fn new(c: Vec<f64>) -> Self {
        Self { c }
    }

    pub fn constant(v: f64) -> Self {
        Self { c: vec![v] }
    }

    /// The identity `x`.
    pub fn x() -> Self {
        Self { c: vec![0.0, 1.0] }
    }

    /// Index of the highest non-zero coefficient.
    pub fn degree(&self) -> usize {
        self.c.iter().rposition(|v| *v != 0.0).unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex<f64>) -> Complex<f64> {
        self.c.iter().rev().fold(Complex::new(0.0, 0.0), |acc, c| acc * z + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.c.len() <= 1 {
            return Poly::constant(0.0);
        }
        Poly::new(self.c.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect())
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::new(self.c.iter().map(|c| c * s).collect())
    }

    /// `p(s x)`.
    pub fn rescale_argument(&self, s: f64) -> Poly {
        let mut f = 1.0;
        Poly::new(
            self.c
                .iter()
                .map(|c| {
                    let v = c * f;
                    f *= s;
                    v
                })
                .collect(),
        )
    }

    /// All complex roots, from the eigenvalues of the companion matrix, each
    /// polished by a few Newton steps.
    pub fn roots(&self) -> Vec<Complex<f64>> {
        let deg = self.degree();
        if deg == 0 {
            return Vec::new();
        }
        let lead = self.c[deg];
        let mut comp = DMatrix::<f64>::zeros(deg, deg);
        for i in 1..deg {
            comp[(i, i - 1)] = 1.0;
        }
        for i in 0..deg {
            comp[(i, deg - 1)] = -self.c[i] / lead;
        }
        let dp = self.derivative();
        comp.complex_eigenvalues()
            .iter()
            .map(|&z0| {
                let mut z = z0;
                for _ in 0..8 {
                    let d = dp.eval_complex(z);
                    if d.norm() == 0.0 {
                        break;
                    }
                    let step = self.eval_complex(z) / d;
                    let next = z - step;
                    if !(next.re.is_finite() && next.im.is_finite())
                        || self.eval_complex(next).norm() > self.eval_complex(z).norm()
                    {
                        break;
                    }
                    z = next;
                }
                z
            })
            .collect()
    }
}

impl Add for &Poly {
    type Output = Poly;

    fn add(self, rhs: &Poly) -> Poly {
        let n = self.c.len().max(rhs.c.len());
        Poly::new(
            (0..n)
                .map(|k| self.c.get(k).unwrap_or(&0.0) + rhs.c.get(k).unwrap_or(&0.0))
                .collect(),
        )
    }
}

impl Sub for &Poly {
    type Output = Poly;

    fn sub(self, rhs: &Poly) -> Poly {
        self + &rhs.scale(-1.0)
    }
}

impl Mul for &Poly {
    type Output = Poly;

    fn mul(self, rhs: &Poly) -> Poly {
        let mut c = vec![0.0; self.c.len() + rhs.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            for (j, b) in rhs.c.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly::new(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_known_quartic() {
        // (x - 1)(x + 2)(x^2 + 1)
        let p = &(&Poly::new(vec![-1.0, 1.0]) * &Poly::new(vec![2.0, 1.0])) * &Poly::new(vec![1.0, 0.0, 1.0]);
        assert_eq!(p.degree(), 4);
        let mut roots = p.roots();
        roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let expect = [(-2.0, 0.0), (0.0, -1.0), (0.0, 1.0), (1.0, 0.0)];
        for (z, (re, im)) in roots.iter().zip(expect) {
            assert!((z.re - re).abs() < 1e-12 && (z.im - im).abs() < 1e-12, "{z}");
        }
    }

    #[test]
    fn algebra() {
        let p = Poly::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(p.eval(2.0), 17.0);
        assert_eq!(p.derivative().c, vec![2.0, 6.0]);
        assert_eq!(p.rescale_argument(2.0).c, vec![1.0, 4.0, 12.0]);
        assert_eq!((&p - &p).degree(), 0);
        assert_eq!((&p * &Poly::x()).c, vec![0.0, 1.0, 2.0, 3.0]);
    }
}
