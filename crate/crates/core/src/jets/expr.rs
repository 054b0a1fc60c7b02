//! Closed-form scalar expressions over chart coordinates `x1..xn` and
//! tangent coordinates `v1..vn`, compiled to a flat tape that evaluates over
//! any [`Scalar`].

use std::fmt;
use std::ops;

use serde_json::Value;

use super::scalar::Scalar;
use crate::error::{EvalError, EvalErrorKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    X(usize),
    V(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Add(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Vec<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, f64),
    Sqrt(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

impl Expr {
    pub fn x(i: usize) -> Expr {
        Expr::Var(Var::X(i))
    }

    pub fn v(i: usize) -> Expr {
        Expr::Var(Var::V(i))
    }

    pub fn c(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn pow(self, exponent: f64) -> Expr {
        Expr::Pow(Box::new(self), exponent)
    }

    pub fn sqrt(self) -> Expr {
        Expr::Sqrt(Box::new(self))
    }

    pub fn exp(self) -> Expr {
        Expr::Exp(Box::new(self))
    }

    pub fn log(self) -> Expr {
        Expr::Log(Box::new(self))
    }

    pub fn sin(self) -> Expr {
        Expr::Sin(Box::new(self))
    }

    pub fn cos(self) -> Expr {
        Expr::Cos(Box::new(self))
    }

    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        let terms: Vec<Expr> = terms.into_iter().collect();
        match terms.len() {
            0 => Expr::Const(0.0),
            1 => terms.into_iter().next().unwrap(),
            _ => Expr::Add(terms),
        }
    }

    pub fn product(factors: impl IntoIterator<Item = Expr>) -> Expr {
        let factors: Vec<Expr> = factors.into_iter().collect();
        match factors.len() {
            0 => Expr::Const(1.0),
            1 => factors.into_iter().next().unwrap(),
            _ => Expr::Mul(factors),
        }
    }

    /// `self * self`, folding `sqrt(e)^2 = e` and `e^p * e^p = e^(2p)`.
    pub fn squared(&self) -> Expr {
        match self {
            Expr::Sqrt(inner) => (**inner).clone(),
            Expr::Pow(inner, p) if 2.0 * p == 1.0 => (**inner).clone(),
            Expr::Pow(inner, p) if 2.0 * p == 0.5 => Expr::Sqrt(inner.clone()),
            Expr::Pow(inner, p) => Expr::Pow(inner.clone(), 2.0 * p),
            other => Expr::Mul(vec![other.clone(), other.clone()]),
        }
    }

    /// Highest chart/tangent index referenced, plus one.
    pub fn max_index(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(Var::X(i)) | Expr::Var(Var::V(i)) => i + 1,
            Expr::Add(t) | Expr::Mul(t) => t.iter().map(Expr::max_index).max().unwrap_or(0),
            Expr::Sub(a, b) | Expr::Div(a, b) => a.max_index().max(b.max_index()),
            Expr::Neg(a)
            | Expr::Pow(a, _)
            | Expr::Sqrt(a)
            | Expr::Exp(a)
            | Expr::Log(a)
            | Expr::Sin(a)
            | Expr::Cos(a) => a.max_index(),
        }
    }

    pub fn depends_on_x(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(Var::X(_)) => true,
            Expr::Var(Var::V(_)) => false,
            Expr::Add(t) | Expr::Mul(t) => t.iter().any(Expr::depends_on_x),
            Expr::Sub(a, b) | Expr::Div(a, b) => a.depends_on_x() || b.depends_on_x(),
            Expr::Neg(a)
            | Expr::Pow(a, _)
            | Expr::Sqrt(a)
            | Expr::Exp(a)
            | Expr::Log(a)
            | Expr::Sin(a)
            | Expr::Cos(a) => a.depends_on_x(),
        }
    }

    /// Nested-array form: numbers, variable names `"x1"`, `"v2"`, and
    /// `["op", args...]` with op in add, sub, mul, div, neg, pow, sqrt, exp,
    /// log, sin, cos. `pow` takes a numeric exponent.
    pub fn to_json(&self) -> Value {
        use serde_json::json;
        let unary = |name: &str, a: &Expr| json!([name, a.to_json()]);
        match self {
            Expr::Const(c) => json!(c),
            Expr::Var(Var::X(i)) => json!(format!("x{}", i + 1)),
            Expr::Var(Var::V(i)) => json!(format!("v{}", i + 1)),
            Expr::Add(t) | Expr::Mul(t) => {
                let name = if matches!(self, Expr::Add(_)) { "add" } else { "mul" };
                let mut items = vec![json!(name)];
                items.extend(t.iter().map(Expr::to_json));
                Value::Array(items)
            }
            Expr::Sub(a, b) => json!(["sub", a.to_json(), b.to_json()]),
            Expr::Div(a, b) => json!(["div", a.to_json(), b.to_json()]),
            Expr::Pow(a, p) => json!(["pow", a.to_json(), p]),
            Expr::Neg(a) => unary("neg", a),
            Expr::Sqrt(a) => unary("sqrt", a),
            Expr::Exp(a) => unary("exp", a),
            Expr::Log(a) => unary("log", a),
            Expr::Sin(a) => unary("sin", a),
            Expr::Cos(a) => unary("cos", a),
        }
    }

    /// Parses the nested-array form. `path` prefixes error messages.
    pub fn from_json(value: &Value, path: &str) -> Result<Expr, String> {
        match value {
            Value::Number(n) => n
                .as_f64()
                .map(Expr::Const)
                .ok_or_else(|| format!("{path}: number out of range")),
            Value::String(s) => parse_var(s).ok_or_else(|| {
                format!("{path}: unknown variable {s:?} (expected x1.., v1..)")
            }),
            Value::Array(items) => {
                let (head, args) = items
                    .split_first()
                    .ok_or_else(|| format!("{path}: empty expression array"))?;
                let op = head
                    .as_str()
                    .ok_or_else(|| format!("{path}[0]: operator must be a string"))?;
                let arg = |i: usize| -> Result<Expr, String> {
                    let v = args
                        .get(i)
                        .ok_or_else(|| format!("{path}: {op} expects an argument at {}", i + 1))?;
                    Expr::from_json(v, &format!("{path}[{}]", i + 1))
                };
                let arity = |k: usize| -> Result<(), String> {
                    if args.len() == k {
                        Ok(())
                    } else {
                        Err(format!("{path}: {op} takes {k} argument(s), got {}", args.len()))
                    }
                };
                match op {
                    "add" | "mul" => {
                        if args.is_empty() {
                            return Err(format!("{path}: {op} needs at least one argument"));
                        }
                        let terms = (0..args.len()).map(arg).collect::<Result<Vec<_>, _>>()?;
                        Ok(if op == "add" { Expr::sum(terms) } else { Expr::product(terms) })
                    }
                    "sub" => {
                        arity(2)?;
                        Ok(Expr::Sub(Box::new(arg(0)?), Box::new(arg(1)?)))
                    }
                    "div" => {
                        arity(2)?;
                        Ok(Expr::Div(Box::new(arg(0)?), Box::new(arg(1)?)))
                    }
                    "pow" => {
                        arity(2)?;
                        let p = args[1]
                            .as_f64()
                            .ok_or_else(|| format!("{path}[2]: pow exponent must be a number"))?;
                        Ok(arg(0)?.pow(p))
                    }
                    "neg" | "sqrt" | "exp" | "log" | "sin" | "cos" => {
                        arity(1)?;
                        let a = Box::new(arg(0)?);
                        Ok(match op {
                            "neg" => Expr::Neg(a),
                            "sqrt" => Expr::Sqrt(a),
                            "exp" => Expr::Exp(a),
                            "log" => Expr::Log(a),
                            "sin" => Expr::Sin(a),
                            _ => Expr::Cos(a),
                        })
                    }
                    other => Err(format!("{path}[0]: unknown operator {other:?}")),
                }
            }
            _ => Err(format!("{path}: expected number, variable name or array")),
        }
    }
}

fn parse_var(s: &str) -> Option<Expr> {
    let (kind, idx) = s.split_at(1.min(s.len()));
    let i: usize = idx.parse().ok()?;
    if i == 0 {
        return None;
    }
    match kind {
        "x" => Some(Expr::x(i - 1)),
        "v" => Some(Expr::v(i - 1)),
        _ => None,
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Expr {
        Expr::Const(c)
    }
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $build:expr) => {
        impl<R: Into<Expr>> ops::$trait<R> for Expr {
            type Output = Expr;
            fn $method(self, rhs: R) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $build;
                f(self, rhs.into())
            }
        }
        impl ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $build;
                f(Expr::Const(self), rhs)
            }
        }
    };
}

binary_op!(Add, add, |a, b| Expr::Add(vec![a, b]));
binary_op!(Sub, sub, |a, b| Expr::Sub(Box::new(a), Box::new(b)));
binary_op!(Mul, mul, |a, b| Expr::Mul(vec![a, b]));
binary_op!(Div, div, |a, b| Expr::Div(Box::new(a), Box::new(b)));

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(f64),
    Var(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    PowI(usize, i32),
    PowF(usize, f64),
    Sqrt(usize),
    Exp(usize),
    Log(usize),
    Sin(usize),
    Cos(usize),
}

/// Flattened expression. Variables are laid out as `x1..xn, v1..vn`.
#[derive(Clone, Debug)]
pub struct Tape {
    ops: Vec<Op>,
    labels: Vec<Option<String>>,
    dim: usize,
}

impl Tape {
    pub fn compile(expr: &Expr, dim: usize) -> Tape {
        let mut tape = Tape { ops: Vec::new(), labels: Vec::new(), dim };
        tape.emit(expr);
        tape
    }

    /// Number of variables (`2 * dim`).
    pub fn arity(&self) -> usize {
        2 * self.dim
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op, label: Option<String>) -> usize {
        self.ops.push(op);
        self.labels.push(label);
        self.ops.len() - 1
    }

    fn emit(&mut self, expr: &Expr) -> usize {
        let checked = || Some(expr.to_string());
        match expr {
            Expr::Const(c) => self.push(Op::Const(*c), None),
            Expr::Var(Var::X(i)) => self.push(Op::Var(*i), None),
            Expr::Var(Var::V(i)) => self.push(Op::Var(self.dim + *i), None),
            Expr::Add(terms) | Expr::Mul(terms) => {
                let is_add = matches!(expr, Expr::Add(_));
                let mut acc = self.emit(&terms[0]);
                for t in &terms[1..] {
                    let r = self.emit(t);
                    let op = if is_add { Op::Add(acc, r) } else { Op::Mul(acc, r) };
                    acc = self.push(op, None);
                }
                acc
            }
            Expr::Sub(a, b) => {
                let (a, b) = (self.emit(a), self.emit(b));
                self.push(Op::Sub(a, b), None)
            }
            Expr::Div(a, b) => {
                let (a, b) = (self.emit(a), self.emit(b));
                self.push(Op::Div(a, b), checked())
            }
            Expr::Neg(a) => {
                let a = self.emit(a);
                self.push(Op::Neg(a), None)
            }
            Expr::Pow(a, p) => {
                let a = self.emit(a);
                if p.fract() == 0.0 && p.abs() <= 64.0 {
                    let label = (*p < 0.0).then(|| expr.to_string());
                    self.push(Op::PowI(a, *p as i32), label)
                } else {
                    self.push(Op::PowF(a, *p), checked())
                }
            }
            Expr::Sqrt(a) => {
                let a = self.emit(a);
                self.push(Op::Sqrt(a), checked())
            }
            Expr::Exp(a) => {
                let a = self.emit(a);
                self.push(Op::Exp(a), None)
            }
            Expr::Log(a) => {
                let a = self.emit(a);
                self.push(Op::Log(a), checked())
            }
            Expr::Sin(a) => {
                let a = self.emit(a);
                self.push(Op::Sin(a), None)
            }
            Expr::Cos(a) => {
                let a = self.emit(a);
                self.push(Op::Cos(a), None)
            }
        }
    }

    fn fail(&self, at: usize, kind: EvalErrorKind) -> EvalError {
        EvalError {
            kind,
            subexpression: self.labels[at].clone().unwrap_or_default(),
        }
    }

    /// Evaluates the expression at `vars` (length `2 * dim`).
    pub fn eval<S: Scalar>(&self, vars: &[S]) -> Result<S, EvalError> {
        debug_assert_eq!(vars.len(), self.arity());
        let mut r: Vec<S> = Vec::with_capacity(self.ops.len());
        for (at, op) in self.ops.iter().enumerate() {
            let value = match *op {
                Op::Const(c) => S::cst(c),
                Op::Var(i) => vars[i],
                Op::Add(a, b) => r[a] + r[b],
                Op::Sub(a, b) => r[a] - r[b],
                Op::Mul(a, b) => r[a] * r[b],
                Op::Div(a, b) => {
                    if r[b].value() == 0.0 {
                        return Err(self.fail(at, EvalErrorKind::DivisionByZero));
                    }
                    r[a] / r[b]
                }
                Op::Neg(a) => -r[a],
                Op::PowI(a, p) => {
                    if p < 0 && r[a].value() == 0.0 {
                        return Err(self.fail(at, EvalErrorKind::DivisionByZero));
                    }
                    r[a].powi(p)
                }
                Op::PowF(a, p) => r[a]
                    .powf_checked(p)
                    .ok_or_else(|| self.fail(at, EvalErrorKind::NonPositivePowerBase))?,
                Op::Sqrt(a) => r[a]
                    .sqrt_checked()
                    .ok_or_else(|| self.fail(at, EvalErrorKind::NonPositiveSqrt))?,
                Op::Exp(a) => r[a].exp(),
                Op::Log(a) => r[a]
                    .ln_checked()
                    .ok_or_else(|| self.fail(at, EvalErrorKind::NonPositiveLog))?,
                Op::Sin(a) => r[a].sin_cos().0,
                Op::Cos(a) => r[a].sin_cos().1,
            };
            r.push(value);
        }
        Ok(*r.last().expect("compiled tape is never empty"))
    }
}
