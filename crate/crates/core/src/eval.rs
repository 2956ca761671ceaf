//! Numeric evaluation of a model.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::model::{toposort, Expr, Model, ModelError, VariableKind};

/// The value of one variable: a scalar, or one number per dimension instance.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Value {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            Value::Scalar(v) => std::slice::from_ref(v),
            Value::Vector(v) => v,
        }
    }

    pub fn scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(v) => Some(*v),
            Value::Vector(_) => None,
        }
    }

    fn map2(&self, other: &Value, f: impl Fn(f64, f64) -> f64) -> Result<Value, (usize, usize)> {
        Ok(match (self, other) {
            (Value::Scalar(a), Value::Scalar(b)) => Value::Scalar(f(*a, *b)),
            (Value::Scalar(a), Value::Vector(b)) => Value::Vector(b.iter().map(|b| f(*a, *b)).collect()),
            (Value::Vector(a), Value::Scalar(b)) => Value::Vector(a.iter().map(|a| f(*a, *b)).collect()),
            (Value::Vector(a), Value::Vector(b)) => {
                if a.len() != b.len() {
                    return Err((a.len(), b.len()));
                }
                Value::Vector(a.iter().zip(b).map(|(a, b)| f(*a, *b)).collect())
            }
        })
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Scalar(v)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Scalar(v) => write!(f, "{v}"),
            Value::Vector(vs) => {
                f.write_str("[")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

/// Values of every model variable, keyed by canonical name.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Valuation {
    values: BTreeMap<String, Value>,
}

impl Valuation {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.values.iter()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("input `{0}` has no value and no default")]
    MissingInput(String),
    #[error("`{0}` is not an input variable")]
    UnknownInput(String),
    #[error("input `{name}` expects {expected} value(s), got {found}")]
    InputShape {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("`{0}` evaluates to a non-finite number")]
    DomainError(String),
    #[error("`{name}`: operand lengths {left} and {right} differ")]
    ShapeMismatch { name: String, left: usize, right: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Evaluates with scalar input overrides; a scalar given for a repeating
/// input applies to every instance.
pub fn evaluate(model: &Model, inputs: &BTreeMap<String, f64>) -> Result<Valuation, EvalError> {
    let inputs: BTreeMap<String, Value> = inputs.iter().map(|(k, v)| (k.clone(), Value::Scalar(*v))).collect();
    evaluate_values(model, &inputs)
}

/// Evaluates with input overrides that may be per-instance vectors.
pub fn evaluate_values(model: &Model, inputs: &BTreeMap<String, Value>) -> Result<Valuation, EvalError> {
    for name in inputs.keys() {
        match model.get(name) {
            Some(v) if v.kind == VariableKind::Input => {}
            _ => return Err(EvalError::UnknownInput(name.clone())),
        }
    }
    let order = toposort(model)?;
    let mut values: BTreeMap<String, Value> = BTreeMap::new();
    for name in order {
        let var = model.get(&name).expect("toposort yields model names");
        let width = model.cardinality(var.repeating);
        let value = match var.kind {
            VariableKind::Input | VariableKind::Parameter => {
                let given = match inputs.get(&name) {
                    Some(v) => v.clone(),
                    None => match &var.literals {
                        Some(lits) => literal_value(lits, var.repeating),
                        None => return Err(EvalError::MissingInput(name)),
                    },
                };
                shape_to(&name, given, var.repeating, width)?
            }
            VariableKind::Calculated | VariableKind::Output => {
                let expr = var.formula.as_ref().expect("calculated variables carry formulas");
                let v = eval_expr(expr, &values, &name)?;
                shape_to(&name, v, var.repeating, width)?
            }
        };
        if value.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(EvalError::DomainError(name));
        }
        values.insert(name, value);
    }
    Ok(Valuation { values })
}

fn literal_value(lits: &[f64], repeating: bool) -> Value {
    if repeating {
        Value::Vector(lits.to_vec())
    } else {
        Value::Scalar(lits[0])
    }
}

fn shape_to(name: &str, value: Value, repeating: bool, width: usize) -> Result<Value, EvalError> {
    match (value, repeating) {
        (Value::Scalar(v), true) => Ok(Value::Vector(vec![v; width])),
        (Value::Vector(v), true) if v.len() == width => Ok(Value::Vector(v)),
        (Value::Scalar(v), false) => Ok(Value::Scalar(v)),
        (Value::Vector(v), false) if v.len() == 1 => Ok(Value::Scalar(v[0])),
        (Value::Vector(v), _) => Err(EvalError::InputShape {
            name: name.to_string(),
            expected: width,
            found: v.len(),
        }),
    }
}

fn eval_expr(expr: &Expr, values: &BTreeMap<String, Value>, owner: &str) -> Result<Value, EvalError> {
    Ok(match expr {
        Expr::Number(n) => Value::Scalar(*n),
        Expr::Var(name) => values
            .get(name)
            .cloned()
            .ok_or_else(|| EvalError::MissingInput(name.clone()))?,
        Expr::Neg(inner) => match eval_expr(inner, values, owner)? {
            Value::Scalar(v) => Value::Scalar(-v),
            Value::Vector(v) => Value::Vector(v.into_iter().map(|x| -x).collect()),
        },
        Expr::Binary(op, lhs, rhs) => {
            let l = eval_expr(lhs, values, owner)?;
            let r = eval_expr(rhs, values, owner)?;
            l.map2(&r, |a, b| op.apply(a, b))
                .map_err(|(left, right)| EvalError::ShapeMismatch {
                    name: owner.to_string(),
                    left,
                    right,
                })?
        }
        Expr::Agg(_, name) => {
            let v = values.get(name).ok_or_else(|| EvalError::MissingInput(name.clone()))?;
            Value::Scalar(v.as_slice().iter().sum())
        }
    })
}
