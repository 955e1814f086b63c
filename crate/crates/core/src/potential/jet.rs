//! Nested first-order forward-mode dual numbers.
//!
//! `Dual<f64>` carries a gradient, `Dual<Dual<f64>>` a Hessian and
//! `Dual<Dual<Dual<f64>>>` the third-derivative tensor. Every level holds a
//! derivative vector of the full input dimension, so the cost per scalar op
//! is `(n + 1)^depth`; fine for the handful of coordinates used here.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

/// Arithmetic needed by the expression evaluator.
pub trait JetScalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// A constant with `n` (zero) derivative slots at every level.
    fn constant(c: f64, n: usize) -> Self;
    /// Innermost value, used for domain checks.
    fn real(&self) -> f64;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn powi(&self, p: i32) -> Self;
    fn powf(&self, p: f64) -> Self;
    fn scale(&self, s: f64) -> Self;
}

impl JetScalar for f64 {
    fn constant(c: f64, _n: usize) -> Self {
        c
    }
    fn real(&self) -> f64 {
        *self
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn powi(&self, p: i32) -> Self {
        f64::powi(*self, p)
    }
    fn powf(&self, p: f64) -> Self {
        f64::powf(*self, p)
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
}

/// Value plus first derivatives, both living in the inner scalar type.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual<T> {
    pub v: T,
    pub d: Vec<T>,
}

impl<T: JetScalar> Dual<T> {
    /// Seed variable `i` of `n` at point `x`. The inner level is seeded for the
    /// same variable so nested duals differentiate repeatedly.
    pub fn variable(x: f64, i: usize, n: usize) -> Self
    where
        T: Seed,
    {
        let d = (0..n)
            .map(|j| T::constant(if i == j { 1.0 } else { 0.0 }, n))
            .collect();
        Dual {
            v: T::seed(x, i, n),
            d,
        }
    }

    fn chain(&self, value: T, slope: T) -> Self {
        Dual {
            v: value,
            d: self.d.iter().map(|di| di.clone() * slope.clone()).collect(),
        }
    }
}

/// Scalars that can stand in for an independent variable.
pub trait Seed: JetScalar {
    fn seed(x: f64, i: usize, n: usize) -> Self;
}

impl Seed for f64 {
    fn seed(x: f64, _i: usize, _n: usize) -> Self {
        x
    }
}

impl<T: JetScalar + Seed> Seed for Dual<T> {
    fn seed(x: f64, i: usize, n: usize) -> Self {
        Dual::variable(x, i, n)
    }
}

impl<T: JetScalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Dual {
            v: self.v + rhs.v,
            d: self.d.into_iter().zip(rhs.d).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<T: JetScalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Dual {
            v: self.v - rhs.v,
            d: self.d.into_iter().zip(rhs.d).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<T: JetScalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let d = self
            .d
            .iter()
            .zip(&rhs.d)
            .map(|(a, b)| a.clone() * rhs.v.clone() + self.v.clone() * b.clone())
            .collect();
        Dual {
            v: self.v * rhs.v,
            d,
        }
    }
}

impl<T: JetScalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = T::constant(1.0, self.d.len()) / rhs.v.clone();
        let q = self.v.clone() * inv.clone();
        let d = self
            .d
            .iter()
            .zip(&rhs.d)
            .map(|(a, b)| (a.clone() - q.clone() * b.clone()) * inv.clone())
            .collect();
        Dual { v: q, d }
    }
}

impl<T: JetScalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual {
            v: -self.v,
            d: self.d.into_iter().map(|a| -a).collect(),
        }
    }
}

impl<T: JetScalar> JetScalar for Dual<T> {
    fn constant(c: f64, n: usize) -> Self {
        Dual {
            v: T::constant(c, n),
            d: vec![T::constant(0.0, n); n],
        }
    }

    fn real(&self) -> f64 {
        self.v.real()
    }

    fn exp(&self) -> Self {
        let e = self.v.exp();
        self.chain(e.clone(), e)
    }

    fn ln(&self) -> Self {
        let n = self.d.len();
        self.chain(self.v.ln(), T::constant(1.0, n) / self.v.clone())
    }

    fn sqrt(&self) -> Self {
        let s = self.v.sqrt();
        self.chain(s.clone(), (T::constant(1.0, self.d.len()) / s.clone()).scale(0.5))
    }

    fn sin(&self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }

    fn cos(&self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }

    fn powi(&self, p: i32) -> Self {
        let n = self.d.len();
        if p == 0 {
            return Self::constant(1.0, n);
        }
        let slope = self.v.powi(p - 1).scale(p as f64);
        self.chain(self.v.powi(p), slope)
    }

    fn powf(&self, p: f64) -> Self {
        let slope = self.v.powf(p - 1.0).scale(p);
        self.chain(self.v.powf(p), slope)
    }

    fn scale(&self, s: f64) -> Self {
        Dual {
            v: self.v.scale(s),
            d: self.d.iter().map(|a| a.scale(s)).collect(),
        }
    }
}

pub type Dual1 = Dual<f64>;
pub type Dual2 = Dual<Dual1>;
pub type Dual3 = Dual<Dual2>;

/// Value, gradient, Hessian and third-derivative tensor at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet3 {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub third: ThirdTensor,
}

/// Fully symmetric `n x n x n` tensor stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct ThirdTensor {
    n: usize,
    data: Vec<f64>,
}

impl ThirdTensor {
    pub fn zeros(n: usize) -> Self {
        ThirdTensor {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + l]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, l: usize, v: f64) {
        self.data[(i * self.n + j) * self.n + l] = v;
    }

    /// Contract the last two slots: `out_i = sum_jl T_ijl a_j b_l`.
    pub fn contract2(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| {
            let mut s = 0.0;
            for j in 0..self.n {
                for l in 0..self.n {
                    s += self.get(i, j, l) * a[j] * b[l];
                }
            }
            s
        })
    }

    /// Full contraction `sum_ijl T_ijl a_i b_j c_l`.
    pub fn contract3(&self, a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>) -> f64 {
        a.dot(&self.contract2(b, c))
    }

    /// Largest deviation between any two index permutations of an entry.
    pub fn asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let v = self.get(i, j, l);
                    for w in [
                        self.get(i, l, j),
                        self.get(j, i, l),
                        self.get(j, l, i),
                        self.get(l, i, j),
                        self.get(l, j, i),
                    ] {
                        worst = worst.max((v - w).abs());
                    }
                }
            }
        }
        worst
    }
}

impl Jet3 {
    pub(crate) fn from_dual(r: &Dual3, n: usize) -> Self {
        let value = r.v.v.v;
        let gradient = DVector::from_fn(n, |i, _| r.v.v.d[i]);
        let mut hessian = DMatrix::from_fn(n, n, |i, j| r.v.d[i].d[j]);
        let mut third = ThirdTensor::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    third.set(i, j, l, r.d[i].d[j].d[l]);
                }
            }
        }
        // Round-off can break symmetry slightly; average over permutations.
        hessian = (&hessian + hessian.transpose()) * 0.5;
        let raw = third.clone();
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let avg = (raw.get(i, j, l)
                        + raw.get(i, l, j)
                        + raw.get(j, i, l)
                        + raw.get(j, l, i)
                        + raw.get(l, i, j)
                        + raw.get(l, j, i))
                        / 6.0;
                    third.set(i, j, l, avg);
                }
            }
        }
        Jet3 {
            value,
            gradient,
            hessian,
            third,
        }
    }
}
