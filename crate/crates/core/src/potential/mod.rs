//! Scalar expression DSL for potentials and fields, evaluated with exact
//! derivatives up to third order.

mod jet;
mod parse;

pub use jet::{Dual, Dual1, Dual2, Dual3, Jet3, JetScalar, Seed, ThirdTensor};
pub use parse::ParseError;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("expected a point of dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("logarithm of non-positive value {0}")]
    LogDomain(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of non-positive value {0}")]
    SqrtDomain(f64),
    #[error("non-integer power of non-positive base {0}")]
    PowDomain(f64),
    #[error("non-finite result")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Int(i32),
    Real(f64),
}

impl Exponent {
    fn from_value(v: f64) -> Self {
        if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 {
            Exponent::Int(v as i32)
        } else {
            Exponent::Real(v)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Exponent),
    Call(Func, Box<Node>),
}

impl Node {
    /// Evaluate a variable-free subtree.
    fn fold_constant(&self) -> Option<f64> {
        Some(match self {
            Node::Const(c) => *c,
            Node::Var(_) => return None,
            Node::Neg(a) => -a.fold_constant()?,
            Node::Add(a, b) => a.fold_constant()? + b.fold_constant()?,
            Node::Sub(a, b) => a.fold_constant()? - b.fold_constant()?,
            Node::Mul(a, b) => a.fold_constant()? * b.fold_constant()?,
            Node::Div(a, b) => a.fold_constant()? / b.fold_constant()?,
            Node::Pow(a, Exponent::Int(p)) => a.fold_constant()?.powi(*p),
            Node::Pow(a, Exponent::Real(p)) => a.fold_constant()?.powf(*p),
            Node::Call(f, a) => {
                let x = a.fold_constant()?;
                match f {
                    Func::Exp => x.exp(),
                    Func::Log => x.ln(),
                    Func::Sqrt => x.sqrt(),
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                }
            }
        })
    }

    fn eval<T: JetScalar>(&self, args: &[T], n: usize) -> Result<T, EvalError> {
        Ok(match self {
            Node::Const(c) => T::constant(*c, n),
            Node::Var(i) => args[*i].clone(),
            Node::Neg(a) => -a.eval(args, n)?,
            Node::Add(a, b) => a.eval(args, n)? + b.eval(args, n)?,
            Node::Sub(a, b) => a.eval(args, n)? - b.eval(args, n)?,
            Node::Mul(a, b) => a.eval(args, n)? * b.eval(args, n)?,
            Node::Div(a, b) => {
                let den = b.eval(args, n)?;
                if den.real() == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                a.eval(args, n)? / den
            }
            Node::Pow(a, Exponent::Int(p)) => {
                let base = a.eval(args, n)?;
                if *p < 0 && base.real() == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                base.powi(*p)
            }
            Node::Pow(a, Exponent::Real(p)) => {
                let base = a.eval(args, n)?;
                if base.real() <= 0.0 {
                    return Err(EvalError::PowDomain(base.real()));
                }
                base.powf(*p)
            }
            Node::Call(f, a) => {
                let x = a.eval(args, n)?;
                match f {
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x.real() <= 0.0 {
                            return Err(EvalError::LogDomain(x.real()));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x.real() <= 0.0 {
                            return Err(EvalError::SqrtDomain(x.real()));
                        }
                        x.sqrt()
                    }
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                }
            }
        })
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Node::Const(_) => None,
            Node::Var(i) => Some(*i),
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.max_var(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }
}

/// A parsed scalar expression over a fixed list of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    src: String,
    vars: Vec<String>,
    root: Node,
}

/// Parse `src` with the given variable names (in order).
pub fn parse_expr<S: AsRef<str>>(src: &str, vars: &[S]) -> Result<Expression, ParseError> {
    let vars: Vec<String> = vars.iter().map(|v| v.as_ref().to_string()).collect();
    let root = parse::parse(src, &vars)?;
    debug_assert!(root.max_var().is_none_or(|i| i < vars.len()));
    Ok(Expression {
        src: src.to_string(),
        vars,
        root,
    })
}

/// Variable names `prefix1 .. prefixN`.
pub fn numbered_vars(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

impl Expression {
    /// Parse over `x1..xn`.
    pub fn in_x(src: &str, n: usize) -> Result<Self, ParseError> {
        parse_expr(src, &numbered_vars("x", n))
    }

    /// Parse over `u1..un`.
    pub fn in_u(src: &str, n: usize) -> Result<Self, ParseError> {
        parse_expr(src, &numbered_vars("u", n))
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// True when no variable occurs in the expression.
    pub fn is_constant(&self) -> bool {
        self.root.max_var().is_none()
    }

    fn check_dim(&self, p: &[f64]) -> Result<(), EvalError> {
        if p.len() != self.dim() {
            return Err(EvalError::Dimension {
                expected: self.dim(),
                got: p.len(),
            });
        }
        Ok(())
    }

    fn eval_generic<T: Seed>(&self, p: &[f64]) -> Result<T, EvalError> {
        self.check_dim(p)?;
        let n = p.len();
        let args: Vec<T> = p
            .iter()
            .enumerate()
            .map(|(i, &x)| T::seed(x, i, n))
            .collect();
        let r = self.root.eval(&args, n)?;
        if !r.real().is_finite() {
            return Err(EvalError::NonFinite);
        }
        Ok(r)
    }

    pub fn eval(&self, p: &[f64]) -> Result<f64, EvalError> {
        self.eval_generic::<f64>(p)
    }

    /// Value and gradient.
    pub fn eval_grad(&self, p: &[f64]) -> Result<(f64, DVector<f64>), EvalError> {
        let r: Dual1 = self.eval_generic(p)?;
        Ok((r.v, DVector::from_vec(r.d)))
    }

    /// Value, gradient and (symmetrized) Hessian.
    pub fn eval_jet2(&self, p: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>), EvalError> {
        let n = p.len();
        let r: Dual2 = self.eval_generic(p)?;
        let g = DVector::from_fn(n, |i, _| r.v.d[i]);
        let h = DMatrix::from_fn(n, n, |i, j| r.d[i].d[j]);
        let h = (&h + h.transpose()) * 0.5;
        Ok((r.v.v, g, h))
    }

    pub fn eval_jet3(&self, p: &[f64]) -> Result<Jet3, EvalError> {
        let r: Dual3 = self.eval_generic(p)?;
        Ok(Jet3::from_dual(&r, p.len()))
    }
}
