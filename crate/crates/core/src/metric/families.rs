//! Built-in norm families, each a [`MetricFamily`] strategy registered by name.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::jets::{Expr, Tape};

/// A pointwise constraint `value(x) < 1` beyond the generic checks, e.g. the
/// Randers drift bound `|b|_a < 1`.
pub struct PointCheck {
    pub name: String,
    eval: Box<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>,
}

impl PointCheck {
    pub fn new(name: impl Into<String>, eval: impl Fn(&[f64]) -> Result<f64> + Send + Sync + 'static) -> Self {
        PointCheck { name: name.into(), eval: Box::new(eval) }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        (self.eval)(x)
    }
}

/// What a family produces from its parameters: expressions for `F` and `F^2`
/// over `(x1..xn, v1..vn)`.
pub struct FamilyModel {
    pub norm: Expr,
    pub norm_sq: Expr,
    pub checks: Vec<PointCheck>,
}

impl FamilyModel {
    fn from_norm(norm: Expr) -> FamilyModel {
        FamilyModel { norm_sq: norm.squared(), norm, checks: Vec::new() }
    }
}

pub trait MetricFamily: Send + Sync {
    fn name(&self) -> &'static str;

    fn build(&self, dimension: usize, params: &Value) -> Result<FamilyModel>;
}

pub struct FamilyRegistry {
    families: BTreeMap<&'static str, Box<dyn MetricFamily>>,
}

impl Default for FamilyRegistry {
    fn default() -> Self {
        let mut registry = FamilyRegistry::empty();
        registry.register(Box::new(Riemannian));
        registry.register(Box::new(MinkowskiQuartic));
        registry.register(Box::new(Randers));
        registry.register(Box::new(BerwaldProduct));
        registry.register(Box::new(CustomExpression));
        registry
    }
}

impl FamilyRegistry {
    pub fn empty() -> Self {
        FamilyRegistry { families: BTreeMap::new() }
    }

    /// The shared registry with every built-in family.
    pub fn builtin() -> &'static FamilyRegistry {
        static REGISTRY: OnceLock<FamilyRegistry> = OnceLock::new();
        REGISTRY.get_or_init(FamilyRegistry::default)
    }

    /// Adds (or replaces) a family under its own name.
    pub fn register(&mut self, family: Box<dyn MetricFamily>) {
        self.families.insert(family.name(), family);
    }

    pub fn get(&self, name: &str) -> Option<&dyn MetricFamily> {
        self.families.get(name).map(|f| f.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.families.keys().copied().collect()
    }
}

fn schema(path: &str, message: impl Into<String>) -> Error {
    Error::Schema { path: path.to_string(), message: message.into() }
}

fn param_f64(params: &Value, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .filter(|c| c.is_finite())
            .ok_or_else(|| schema(&format!("params.{key}"), "must be a finite number")),
    }
}

fn sum_sq(vars: impl Iterator<Item = Expr>) -> Expr {
    Expr::sum(vars.map(|e| e.clone() * e))
}

/// Conformal factor `4 / (1 -+ |x|^2)^2` of the Poincaré ball / stereographic sphere.
fn conformal(n: usize, sign: f64) -> Expr {
    let r2 = sum_sq((0..n).map(Expr::x));
    4.0 / (1.0 + sign * r2).pow(2.0)
}

/// A Riemannian metric tensor field given as expressions in `x`.
enum TensorField {
    Conformal(Expr),
    Matrix(Vec<Vec<Expr>>),
}

impl TensorField {
    fn parse(n: usize, value: Option<&Value>, path: &str) -> Result<TensorField> {
        match value {
            None => Ok(TensorField::Conformal(Expr::c(1.0))),
            Some(Value::String(name)) => match name.as_str() {
                "euclidean" => Ok(TensorField::Conformal(Expr::c(1.0))),
                "poincare" => Ok(TensorField::Conformal(conformal(n, -1.0))),
                "sphere" => Ok(TensorField::Conformal(conformal(n, 1.0))),
                other => Err(schema(path, format!("unknown preset {other:?}"))),
            },
            Some(Value::Array(rows)) => {
                if rows.len() != n {
                    return Err(schema(path, format!("tensor must have {n} rows")));
                }
                let mut m = Vec::with_capacity(n);
                for (i, row) in rows.iter().enumerate() {
                    let row = row
                        .as_array()
                        .filter(|r| r.len() == n)
                        .ok_or_else(|| schema(&format!("{path}[{i}]"), format!("row must have {n} entries")))?;
                    let parsed = row
                        .iter()
                        .enumerate()
                        .map(|(j, e)| {
                            let p = format!("{path}[{i}][{j}]");
                            let expr = Expr::from_json(e, &p).map_err(|m| schema(&p, m))?;
                            if expr.max_index() > n || contains_v(&expr) {
                                return Err(schema(&p, "tensor entries may only use x1..xn"));
                            }
                            Ok(expr)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    m.push(parsed);
                }
                for i in 0..n {
                    for j in 0..i {
                        if m[i][j] != m[j][i] {
                            return Err(schema(path, format!("tensor not symmetric at ({}, {})", i + 1, j + 1)));
                        }
                    }
                }
                Ok(TensorField::Matrix(m))
            }
            Some(_) => Err(schema(path, "expected a preset name or an n x n array of expressions")),
        }
    }

    /// `a_x(v, v)`.
    fn quadratic_form(&self, n: usize) -> Expr {
        match self {
            TensorField::Conformal(factor) => match factor {
                Expr::Const(c) if *c == 1.0 => sum_sq((0..n).map(Expr::v)),
                _ => factor.clone() * sum_sq((0..n).map(Expr::v)),
            },
            TensorField::Matrix(m) => {
                let mut terms = Vec::new();
                for i in 0..n {
                    terms.push(m[i][i].clone() * Expr::v(i) * Expr::v(i));
                    for j in (i + 1)..n {
                        terms.push(2.0 * m[i][j].clone() * Expr::v(i) * Expr::v(j));
                    }
                }
                Expr::sum(terms)
            }
        }
    }

    /// Evaluator for `|b|_a^2 = b^T a^{-1} b` at a point.
    fn dual_norm_sq(&self, n: usize, b: &[Expr]) -> impl Fn(&[f64]) -> Result<f64> + Send + Sync + 'static {
        let entries: Vec<Tape> = match self {
            TensorField::Conformal(factor) => vec![Tape::compile(factor, n)],
            TensorField::Matrix(m) => m.iter().flatten().map(|e| Tape::compile(e, n)).collect(),
        };
        let b: Vec<Tape> = b.iter().map(|e| Tape::compile(e, n)).collect();
        move |x: &[f64]| {
            let mut vars = x.to_vec();
            vars.extend(std::iter::repeat_n(0.0, n));
            let bv = b.iter().map(|t| t.eval(&vars)).collect::<std::result::Result<Vec<f64>, _>>()?;
            let a = if entries.len() == 1 {
                let f = entries[0].eval(&vars)?;
                nalgebra::DMatrix::from_diagonal_element(n, n, f)
            } else {
                let vals = entries.iter().map(|t| t.eval(&vars)).collect::<std::result::Result<Vec<f64>, _>>()?;
                nalgebra::DMatrix::from_row_slice(n, n, &vals)
            };
            let bv = nalgebra::DVector::from_vec(bv);
            let sol = a
                .lu()
                .solve(&bv)
                .ok_or_else(|| Error::Input(format!("Randers base metric singular at {x:?}")))?;
            Ok(bv.dot(&sol))
        }
    }
}

fn contains_v(e: &Expr) -> bool {
    match e {
        Expr::Const(_) => false,
        Expr::Var(crate::jets::Var::V(_)) => true,
        Expr::Var(_) => false,
        Expr::Add(t) | Expr::Mul(t) => t.iter().any(contains_v),
        Expr::Sub(a, b) | Expr::Div(a, b) => contains_v(a) || contains_v(b),
        Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sqrt(a) | Expr::Exp(a) | Expr::Log(a) | Expr::Sin(a) | Expr::Cos(a) => {
            contains_v(a)
        }
    }
}

/// `F = sqrt(g_x(v, v))`. Params: `{"preset": "euclidean" | "poincare" | "sphere"}`
/// or `{"tensor": [[expr, ...], ...]}`.
pub struct Riemannian;

impl MetricFamily for Riemannian {
    fn name(&self) -> &'static str {
        "riemannian"
    }

    fn build(&self, n: usize, params: &Value) -> Result<FamilyModel> {
        let field = match (params.get("preset"), params.get("tensor")) {
            (Some(_), Some(_)) => return Err(schema("params", "give either preset or tensor, not both")),
            (Some(p), None) => TensorField::parse(n, Some(p), "params.preset")?,
            (None, t) => TensorField::parse(n, t, "params.tensor")?,
        };
        let q = field.quadratic_form(n);
        Ok(FamilyModel { norm: q.clone().sqrt(), norm_sq: q, checks: Vec::new() })
    }
}

/// `F^4 = sum v_i^4 + c (sum v_i^2)^2`, independent of the base point.
/// Params: `{"c": 1.0}`.
pub struct MinkowskiQuartic;

pub(crate) fn quartic_form(vars: &[Expr], c: f64) -> Expr {
    let fourth = Expr::sum(vars.iter().map(|e| e.clone().pow(4.0)));
    let sq = sum_sq(vars.iter().cloned());
    if c == 0.0 {
        fourth
    } else {
        fourth + c * sq.pow(2.0)
    }
}

impl MetricFamily for MinkowskiQuartic {
    fn name(&self) -> &'static str {
        "minkowski_quartic"
    }

    fn build(&self, n: usize, params: &Value) -> Result<FamilyModel> {
        let c = param_f64(params, "c", 1.0)?;
        if c < 0.0 {
            return Err(schema("params.c", "must be non-negative"));
        }
        let v: Vec<Expr> = (0..n).map(Expr::v).collect();
        Ok(FamilyModel::from_norm(quartic_form(&v, c).pow(0.25)))
    }
}

/// `F = sqrt(a_x(v, v)) + b_x(v)`. Params: `{"a": preset or tensor, "b": [expr, ...]}`.
pub struct Randers;

impl MetricFamily for Randers {
    fn name(&self) -> &'static str {
        "randers"
    }

    fn build(&self, n: usize, params: &Value) -> Result<FamilyModel> {
        let field = TensorField::parse(n, params.get("a"), "params.a")?;
        let b_json = params
            .get("b")
            .and_then(Value::as_array)
            .ok_or_else(|| schema("params.b", "required: array of n expressions in x"))?;
        if b_json.len() != n {
            return Err(schema("params.b", format!("must have {n} entries")));
        }
        let b = b_json
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let p = format!("params.b[{i}]");
                let expr = Expr::from_json(e, &p).map_err(|m| schema(&p, m))?;
                if contains_v(&expr) {
                    return Err(schema(&p, "drift entries may only use x1..xn"));
                }
                Ok(expr)
            })
            .collect::<Result<Vec<_>>>()?;
        let alpha = field.quadratic_form(n).sqrt();
        let beta = Expr::sum(
            b.iter()
                .enumerate()
                .filter(|(_, e)| !matches!(e, Expr::Const(c) if *c == 0.0))
                .map(|(i, e)| e.clone() * Expr::v(i)),
        );
        let norm = alpha + beta;
        let dual = field.dual_norm_sq(n, &b);
        let check = PointCheck::new("randers drift |b|_a < 1", move |x| Ok(dual(x)?.sqrt()));
        Ok(FamilyModel { norm_sq: norm.squared(), norm, checks: vec![check] })
    }
}

/// Poincaré disk times a flat factor, combined as
/// `F^4 = F1^4 + F2^4 + c (F1^2 + F2^2)^2`.
///
/// The flat factor is a line (`flat_dim = 1`, `F2 = |w|`) or a quartic
/// Minkowski plane (`flat_dim = 2`, parameter `flat_c`). Dimension is
/// `2 + flat_dim`.
pub struct BerwaldProduct;

impl MetricFamily for BerwaldProduct {
    fn name(&self) -> &'static str {
        "berwald_product"
    }

    fn build(&self, n: usize, params: &Value) -> Result<FamilyModel> {
        let c = param_f64(params, "c", 1.0)?;
        let flat_c = param_f64(params, "flat_c", 1.0)?;
        let flat_dim = params.get("flat_dim").map(|v| v.as_u64()).unwrap_or(Some(1));
        let flat_dim = match flat_dim {
            Some(k @ 1..=2) => k as usize,
            _ => return Err(schema("params.flat_dim", "must be 1 or 2")),
        };
        if n != 2 + flat_dim {
            return Err(schema("dimension", format!("berwald_product with flat_dim {flat_dim} has dimension {}", 2 + flat_dim)));
        }
        if c <= 0.0 || flat_c < 0.0 {
            return Err(schema("params.c", "c must be positive and flat_c non-negative"));
        }
        let disk_sq = conformal(2, -1.0) * sum_sq((0..2).map(Expr::v));
        let flat: Vec<Expr> = (2..n).map(Expr::v).collect();
        let flat_sq = if flat_dim == 1 {
            flat[0].clone() * flat[0].clone()
        } else {
            quartic_form(&flat, flat_c).sqrt()
        };
        let q = disk_sq.clone().pow(2.0) + flat_sq.clone().pow(2.0) + c * (disk_sq + flat_sq).pow(2.0);
        Ok(FamilyModel::from_norm(q.pow(0.25)))
    }
}

/// `F^2` given directly as an expression tree. Params: `{"norm_sq": expr}`.
pub struct CustomExpression;

impl MetricFamily for CustomExpression {
    fn name(&self) -> &'static str {
        "custom_expression"
    }

    fn build(&self, _n: usize, params: &Value) -> Result<FamilyModel> {
        let raw = params.get("norm_sq").ok_or_else(|| schema("params.norm_sq", "required"))?;
        let norm_sq = Expr::from_json(raw, "params.norm_sq").map_err(|m| schema("params.norm_sq", m))?;
        Ok(FamilyModel { norm: norm_sq.clone().sqrt(), norm_sq, checks: Vec::new() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn registry_lists_builtin_families() {
        let names = FamilyRegistry::builtin().names();
        assert_eq!(
            names,
            vec!["berwald_product", "custom_expression", "minkowski_quartic", "randers", "riemannian"]
        );
    }

    #[test]
    fn custom_families_can_be_registered() {
        struct Scaled;
        impl MetricFamily for Scaled {
            fn name(&self) -> &'static str {
                "scaled"
            }
            fn build(&self, n: usize, params: &Value) -> Result<FamilyModel> {
                let k = param_f64(params, "k", 2.0)?;
                Ok(FamilyModel::from_norm((k * sum_sq((0..n).map(Expr::v))).sqrt()))
            }
        }
        let mut registry = FamilyRegistry::default();
        registry.register(Box::new(Scaled));
        let spec = crate::metric::MetricSpec {
            family: "scaled".into(),
            dimension: 2,
            params: json!({"k": 4.0}),
            chart_domain: crate::metric::ChartBox::cube(2, 1.0),
            region: None,
        };
        let m = crate::metric::Metric::from_spec_with(spec, &registry).unwrap();
        assert_eq!(m.eval_norm(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 10.0);
    }

    #[test]
    fn tensor_must_be_symmetric() {
        let err = Riemannian
            .build(2, &json!({"tensor": [[1.0, "x1"], [0.0, 1.0]]}))
            .err()
            .unwrap();
        assert!(err.to_string().contains("symmetric"));
    }

    #[test]
    fn randers_requires_drift() {
        assert!(Randers.build(2, &json!({"a": "euclidean"})).is_err());
        assert!(Randers.build(2, &json!({"b": [0.1]})).is_err());
    }

    #[test]
    fn randers_drift_check_uses_base_metric() {
        let model = Randers.build(2, &json!({"a": "poincare", "b": [0.5, 0.0]})).unwrap();
        // |b|_a = |b| (1 - |x|^2) / 2 at x = 0
        let val = model.checks[0].value(&[0.0, 0.0]).unwrap();
        assert!((val - 0.25).abs() < 1e-15);
    }

    #[test]
    fn berwald_product_dimension_is_checked() {
        assert!(BerwaldProduct.build(4, &json!({})).is_err());
        assert!(BerwaldProduct.build(4, &json!({"flat_dim": 2})).is_ok());
    }
}
