//! Formula complexity rule and the decomposition that satisfies it.
//!
//! A formula should apply a single kind of operator or function. Chains of
//! one operator (`a + b + c`) are fine; `a + b * c` is not.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{mangle, Expr, Model, OpKind, Variable, VariableKind};
use crate::Severity;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplexityFinding {
    pub variable: String,
    pub distinct_ops: usize,
    pub ops: Vec<OpKind>,
    pub severity: Severity,
}

/// Reports every formula that mixes operator or function kinds.
pub fn complexity_check(model: &Model, strict: bool) -> Vec<ComplexityFinding> {
    let severity = if strict { Severity::Error } else { Severity::Warn };
    model
        .variables
        .iter()
        .filter_map(|var| {
            let ops = var.formula.as_ref()?.op_kinds();
            (ops.len() > 1).then(|| ComplexityFinding {
                variable: var.name.clone(),
                distinct_ops: ops.len(),
                ops: ops.into_iter().collect(),
                severity,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error("generated variable `{label}` collides with existing name `{name}`")]
    NameCollision { label: String, name: String },
}

/// Splits every mixed-operator formula into single-operator formulas.
///
/// Each extracted subexpression becomes a calculated variable labelled
/// `<parent label> term <k>`, numbered in depth-first, left-to-right
/// post-order and inserted just before its parent. Formulas that already use
/// a single operator kind are left untouched.
pub fn decompose(model: &Model) -> Result<Model, TransformError> {
    let mut taken: BTreeSet<String> = model.variables.iter().map(|v| v.name.clone()).collect();
    let mut variables = Vec::with_capacity(model.variables.len());
    for var in &model.variables {
        let Some(expr) = &var.formula else {
            variables.push(var.clone());
            continue;
        };
        if expr.op_kinds().len() <= 1 {
            variables.push(var.clone());
            continue;
        }
        let mut ctx = Extraction {
            model,
            parent: var,
            taken: &mut taken,
            extracted: Vec::new(),
        };
        let root = ctx.split_children(expr)?;
        variables.extend(ctx.extracted);
        let mut parent = var.clone();
        parent.formula = Some(root);
        variables.push(parent);
    }
    Ok(Model {
        dimension: model.dimension.clone(),
        variables,
    })
}

struct Extraction<'a> {
    model: &'a Model,
    parent: &'a Variable,
    taken: &'a mut BTreeSet<String>,
    extracted: Vec<Variable>,
}

impl Extraction<'_> {
    // Rebuilds `expr` keeping its root operator; children of another kind are
    // hoisted into new variables, children of the same kind stay inline.
    fn split_children(&mut self, expr: &Expr) -> Result<Expr, TransformError> {
        let kind = expr.root_op();
        Ok(match expr {
            Expr::Number(_) | Expr::Var(_) | Expr::Agg(..) => expr.clone(),
            Expr::Neg(inner) => Expr::negate(self.operand(inner, kind)?),
            Expr::Binary(op, lhs, rhs) => {
                let lhs = self.operand(lhs, kind)?;
                let rhs = self.operand(rhs, kind)?;
                Expr::binary(*op, lhs, rhs)
            }
        })
    }

    fn operand(&mut self, child: &Expr, parent_kind: Option<OpKind>) -> Result<Expr, TransformError> {
        match child.root_op() {
            None => Ok(child.clone()),
            Some(k) if Some(k) == parent_kind => self.split_children(child),
            Some(_) => {
                let formula = self.split_children(child)?;
                Ok(Expr::Var(self.hoist(formula)?))
            }
        }
    }

    fn hoist(&mut self, formula: Expr) -> Result<String, TransformError> {
        let label = format!("{} term {}", self.parent.label, self.extracted.len() + 1);
        let name = mangle(&label).expect("label is non-empty");
        if !self.taken.insert(name.clone()) {
            return Err(TransformError::NameCollision { label, name });
        }
        let repeating = self.is_repeating(&formula);
        self.extracted.push(Variable {
            label,
            name: name.clone(),
            kind: VariableKind::Calculated,
            repeating,
            formula: Some(formula),
            literals: None,
        });
        Ok(name)
    }

    fn is_repeating(&self, expr: &Expr) -> bool {
        let mut repeating = false;
        expr.walk_refs(&mut |name, in_agg| {
            if in_agg {
                return;
            }
            let var_repeats = self
                .model
                .get(name)
                .or_else(|| self.extracted.iter().find(|v| v.name == name))
                .is_some_and(|v| v.repeating);
            repeating |= var_repeats;
        });
        repeating
    }
}
