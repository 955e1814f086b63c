//! Complex-coefficient exterior algebra over a small real basis.
//!
//! Basis monomials are bitmasks over the generators `e_0 .. e_{n-1}`, with
//! the wedge ordered by increasing index. Used to expand pulled-back forms
//! by brute force, independently of any determinant routine.

use nalgebra::Complex;

pub type C64 = Complex<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Form {
    n: usize,
    coeffs: Vec<C64>,
}

impl Form {
    pub fn zero(n: usize) -> Self {
        assert!(n <= 16, "exterior algebra limited to 16 generators");
        Form {
            n,
            coeffs: vec![C64::new(0.0, 0.0); 1 << n],
        }
    }

    pub fn scalar(n: usize, c: C64) -> Self {
        let mut f = Form::zero(n);
        f.coeffs[0] = c;
        f
    }

    /// `Σ c_i e_i`.
    pub fn one_form(coeffs: &[C64]) -> Self {
        let mut f = Form::zero(coeffs.len());
        for (i, c) in coeffs.iter().enumerate() {
            f.coeffs[1 << i] = *c;
        }
        f
    }

    /// Add `c · e_i ∧ e_j` (any order of `i`, `j`).
    pub fn add_wedge2(&mut self, i: usize, j: usize, c: C64) {
        if i == j {
            return;
        }
        let (lo, hi, s) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
        self.coeffs[(1 << lo) | (1 << hi)] += c * s;
    }

    pub fn wedge(&self, other: &Form) -> Form {
        assert_eq!(self.n, other.n);
        let mut out = Form::zero(self.n);
        for (a, ca) in self.coeffs.iter().enumerate() {
            if ca.norm_sqr() == 0.0 {
                continue;
            }
            for (b, cb) in other.coeffs.iter().enumerate() {
                if a & b != 0 || cb.norm_sqr() == 0.0 {
                    continue;
                }
                out.coeffs[a | b] += ca * cb * merge_sign(a, b);
            }
        }
        out
    }

    /// Coefficient of `e_0 ∧ e_1 ∧ ... ∧ e_{n-1}`.
    pub fn top(&self) -> C64 {
        self.coeffs[(1 << self.n) - 1]
    }

    pub fn coeff(&self, mask: usize) -> C64 {
        self.coeffs[mask]
    }
}

/// Sign of reordering `(monomial a) ∧ (monomial b)` into increasing order.
fn merge_sign(a: usize, b: usize) -> f64 {
    let mut swaps = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        swaps += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    if swaps.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Wedge a list of one-forms and return the top coefficient.
pub fn wedge_top(one_forms: &[Form]) -> C64 {
    let n = one_forms.first().map_or(0, |f| f.n);
    one_forms
        .iter()
        .fold(Form::scalar(n, C64::new(1.0, 0.0)), |acc, f| acc.wedge(f))
        .top()
}
