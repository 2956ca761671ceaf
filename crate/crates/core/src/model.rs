//! Domain types for a structured spreadsheet model: variables, the optional
//! repeating dimension and formula expressions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

/// How a variable obtains its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VariableKind {
    /// Entered by the user on the interface sheet.
    Input,
    /// A constant that is not usually changed.
    Parameter,
    /// Computed from a formula.
    Calculated,
    /// A calculated variable shown on the interface sheet.
    Output,
}

impl VariableKind {
    pub fn has_formula(self) -> bool {
        matches!(self, VariableKind::Calculated | VariableKind::Output)
    }
}

/// The model's single repeating dimension, e.g. `Region = [South, East, North]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dimension {
    pub name: String,
    pub instances: Vec<String>,
}

impl Dimension {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    pub fn apply(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            BinOp::Add => lhs + rhs,
            BinOp::Sub => lhs - rhs,
            BinOp::Mul => lhs * rhs,
            BinOp::Div => lhs / rhs,
            // powf(0, 0) is 1, which is the convention we keep.
            BinOp::Pow => lhs.powf(rhs),
        }
    }
}

/// Aggregate functions. Only `SUM` is supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggFn {
    Sum,
}

impl AggFn {
    pub fn name(self) -> &'static str {
        match self {
            AggFn::Sum => "SUM",
        }
    }

    pub fn from_name(name: &str) -> Option<AggFn> {
        if name.eq_ignore_ascii_case("SUM") {
            Some(AggFn::Sum)
        } else {
            None
        }
    }
}

/// One operator or function kind, as counted by the formula complexity rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Neg,
    Func(AggFn),
}

impl From<BinOp> for OpKind {
    fn from(op: BinOp) -> Self {
        match op {
            BinOp::Add => OpKind::Add,
            BinOp::Sub => OpKind::Sub,
            BinOp::Mul => OpKind::Mul,
            BinOp::Div => OpKind::Div,
            BinOp::Pow => OpKind::Pow,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpKind::Add => f.write_str("+"),
            OpKind::Sub => f.write_str("-"),
            OpKind::Mul => f.write_str("*"),
            OpKind::Div => f.write_str("/"),
            OpKind::Pow => f.write_str("^"),
            OpKind::Neg => f.write_str("neg"),
            OpKind::Func(agg) => f.write_str(agg.name()),
        }
    }
}

/// Formula expression tree. Variable references hold canonical names.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Number(f64),
    Var(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// The argument is always a bare reference to a repeating variable.
    Agg(AggFn, String),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn negate(inner: Expr) -> Expr {
        Expr::Neg(Box::new(inner))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Names referenced by this expression in first-appearance order, without
    /// duplicates. Aggregate arguments are included.
    pub fn references(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk_refs(&mut |name, _| {
            if !out.contains(&name) {
                out.push(name);
            }
        });
        out
    }

    /// Calls `f(name, inside_aggregate)` for every variable reference, left to right.
    pub fn walk_refs<'a>(&'a self, f: &mut impl FnMut(&'a str, bool)) {
        match self {
            Expr::Number(_) => {}
            Expr::Var(name) => f(name, false),
            Expr::Neg(inner) => inner.walk_refs(f),
            Expr::Binary(_, lhs, rhs) => {
                lhs.walk_refs(f);
                rhs.walk_refs(f);
            }
            Expr::Agg(_, name) => f(name, true),
        }
    }

    /// Distinct operator and function kinds used anywhere in the expression.
    pub fn op_kinds(&self) -> BTreeSet<OpKind> {
        let mut out = BTreeSet::new();
        self.collect_ops(&mut out);
        out
    }

    fn collect_ops(&self, out: &mut BTreeSet<OpKind>) {
        match self {
            Expr::Number(_) | Expr::Var(_) => {}
            Expr::Neg(inner) => {
                out.insert(OpKind::Neg);
                inner.collect_ops(out);
            }
            Expr::Binary(op, lhs, rhs) => {
                out.insert((*op).into());
                lhs.collect_ops(out);
                rhs.collect_ops(out);
            }
            Expr::Agg(agg, _) => {
                out.insert(OpKind::Func(*agg));
            }
        }
    }

    /// The operator kind at the root, `None` for leaves.
    pub fn root_op(&self) -> Option<OpKind> {
        match self {
            Expr::Number(_) | Expr::Var(_) => None,
            Expr::Neg(_) => Some(OpKind::Neg),
            Expr::Binary(op, _, _) => Some((*op).into()),
            Expr::Agg(agg, _) => Some(OpKind::Func(*agg)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub label: String,
    pub name: String,
    pub kind: VariableKind,
    pub repeating: bool,
    pub formula: Option<Expr>,
    pub literals: Option<Vec<f64>>,
}

impl Variable {
    /// Builds a variable whose canonical name is derived from `label`.
    pub fn new(label: impl Into<String>, kind: VariableKind, repeating: bool) -> Result<Self, ModelError> {
        let label = label.into();
        let name = mangle(&label)?;
        Ok(Variable {
            label: label.trim().to_string(),
            name,
            kind,
            repeating,
            formula: None,
            literals: None,
        })
    }

    pub fn with_formula(mut self, formula: Expr) -> Self {
        self.formula = Some(formula);
        self
    }

    pub fn with_literals(mut self, literals: Vec<f64>) -> Self {
        self.literals = Some(literals);
        self
    }

    pub fn is_calculated(&self) -> bool {
        self.kind.has_formula()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("label is empty")]
    EmptyLabel,
    #[error("variable `{0}` is declared more than once (after name mangling)")]
    DuplicateName(String),
    #[error("name `{0}` cannot be used because it reads as a cell reference")]
    NameLooksLikeCellRef(String),
    #[error("variable `{0}` is repeating but the model declares no dimension")]
    NoDimension(String),
    #[error("dimension `{dimension}` has duplicate instance `{instance}`")]
    DuplicateInstance { dimension: String, instance: String },
    #[error("dimension `{0}` has no instances")]
    EmptyDimension(String),
    #[error("variable `{0}` must carry a formula")]
    MissingFormula(String),
    #[error("variable `{0}` must not carry a formula")]
    UnexpectedFormula(String),
    #[error("parameter `{0}` has no value")]
    MissingLiteral(String),
    #[error("variable `{name}` expects {expected} value(s) but has {found}")]
    LiteralCount {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("variable `{variable}` references undeclared variable `{reference}`")]
    UnknownReference { variable: String, reference: String },
    #[error("dependency cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
}

/// A parsed formula list: one optional dimension and the declared variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub dimension: Option<Dimension>,
    pub variables: Vec<Variable>,
}

impl Model {
    /// Builds a model and checks every structural invariant except acyclicity,
    /// which [`toposort`] reports.
    pub fn new(dimension: Option<Dimension>, variables: Vec<Variable>) -> Result<Self, ModelError> {
        let model = Model { dimension, variables };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if let Some(dim) = &self.dimension {
            if dim.instances.is_empty() {
                return Err(ModelError::EmptyDimension(dim.name.clone()));
            }
            let mut seen = BTreeSet::new();
            for inst in &dim.instances {
                if !seen.insert(inst.as_str()) {
                    return Err(ModelError::DuplicateInstance {
                        dimension: dim.name.clone(),
                        instance: inst.clone(),
                    });
                }
            }
        }
        let mut names = BTreeSet::new();
        for var in &self.variables {
            if !names.insert(var.name.as_str()) {
                return Err(ModelError::DuplicateName(var.name.clone()));
            }
            check_name_usable(&var.name)?;
        }
        for var in &self.variables {
            self.validate_variable(var, &names)?;
        }
        Ok(())
    }

    fn validate_variable(&self, var: &Variable, names: &BTreeSet<&str>) -> Result<(), ModelError> {
        if var.repeating && self.dimension.is_none() {
            return Err(ModelError::NoDimension(var.name.clone()));
        }
        match (var.kind.has_formula(), &var.formula) {
            (true, None) => return Err(ModelError::MissingFormula(var.name.clone())),
            (false, Some(_)) => return Err(ModelError::UnexpectedFormula(var.name.clone())),
            _ => {}
        }
        if var.kind == VariableKind::Parameter && var.literals.is_none() {
            return Err(ModelError::MissingLiteral(var.name.clone()));
        }
        if let Some(lits) = &var.literals {
            let expected = self.cardinality(var.repeating);
            if lits.len() != expected {
                return Err(ModelError::LiteralCount {
                    name: var.name.clone(),
                    expected,
                    found: lits.len(),
                });
            }
        }
        if let Some(expr) = &var.formula {
            let mut missing = None;
            expr.walk_refs(&mut |name, _| {
                if missing.is_none() && !names.contains(name) {
                    missing = Some(name.to_string());
                }
            });
            if let Some(reference) = missing {
                return Err(ModelError::UnknownReference {
                    variable: var.name.clone(),
                    reference,
                });
            }
        }
        Ok(())
    }

    /// Number of values a variable holds: 1 for scalars, the dimension size otherwise.
    pub fn cardinality(&self, repeating: bool) -> usize {
        match (&self.dimension, repeating) {
            (Some(dim), true) => dim.len(),
            _ => 1,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn calculated(&self) -> impl Iterator<Item = &Variable> {
        self.variables.iter().filter(|v| v.is_calculated())
    }
}

/// Turns a display label into a spreadsheet name: every character outside
/// `[A-Za-z0-9_]` becomes `_`, and a leading digit gets a `_` prefix.
pub fn mangle(label: &str) -> Result<String, ModelError> {
    let label = label.trim();
    if label.is_empty() {
        return Err(ModelError::EmptyLabel);
    }
    let mut out: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if out.starts_with(|c: char| c.is_ascii_digit()) {
        out.insert(0, '_');
    }
    Ok(out)
}

/// True when a name would be read as an A1 or R1C1 cell reference by a
/// spreadsheet application.
pub fn looks_like_cell_ref(name: &str) -> bool {
    let bytes = name.as_bytes();
    let letters = bytes.iter().take_while(|b| b.is_ascii_alphabetic()).count();
    let digits = bytes.len() - letters;
    if (1..=3).contains(&letters) && digits > 0 && bytes[letters..].iter().all(u8::is_ascii_digit) {
        return true;
    }
    is_r1c1_like(name)
}

fn is_r1c1_like(name: &str) -> bool {
    let upper = name.to_ascii_uppercase();
    let Some(rest) = upper.strip_prefix('R') else {
        return upper == "C" || (upper.starts_with('C') && upper[1..].bytes().all(|b| b.is_ascii_digit()));
    };
    let row_digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    let rest = &rest[row_digits..];
    if rest.is_empty() {
        return true;
    }
    match rest.strip_prefix('C') {
        Some(col) => col.bytes().all(|b| b.is_ascii_digit()),
        None => false,
    }
}

fn check_name_usable(name: &str) -> Result<(), ModelError> {
    if looks_like_cell_ref(name) {
        Err(ModelError::NameLooksLikeCellRef(name.to_string()))
    } else {
        Ok(())
    }
}

/// A breach of the broadcast/aggregate shape rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeViolation {
    pub variable: String,
    pub operand: String,
    pub reason: ShapeReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeReason {
    /// A scalar formula uses a repeating variable outside an aggregate.
    RepeatingInScalar,
    /// An aggregate is applied to a scalar variable.
    AggregateOfScalar,
}

impl fmt::Display for ShapeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.reason {
            ShapeReason::RepeatingInScalar => write!(
                f,
                "scalar variable `{}` uses repeating variable `{}` outside an aggregate",
                self.variable, self.operand
            ),
            ShapeReason::AggregateOfScalar => write!(
                f,
                "variable `{}` aggregates scalar variable `{}`",
                self.variable, self.operand
            ),
        }
    }
}

/// Checks that scalar formulas only reach repeating variables through an
/// aggregate and that aggregates only apply to repeating variables.
pub fn check_shapes(model: &Model) -> Vec<ShapeViolation> {
    let repeating: HashMap<&str, bool> = model.variables.iter().map(|v| (v.name.as_str(), v.repeating)).collect();
    let mut out = Vec::new();
    for var in &model.variables {
        let Some(expr) = &var.formula else { continue };
        expr.walk_refs(&mut |name, in_agg| {
            let operand_repeats = repeating.get(name).copied().unwrap_or(false);
            let reason = if in_agg && !operand_repeats {
                Some(ShapeReason::AggregateOfScalar)
            } else if !in_agg && operand_repeats && !var.repeating {
                Some(ShapeReason::RepeatingInScalar)
            } else {
                None
            };
            if let Some(reason) = reason {
                out.push(ShapeViolation {
                    variable: var.name.clone(),
                    operand: name.to_string(),
                    reason,
                });
            }
        });
    }
    out
}

/// Orders variables so that every variable follows the variables it
/// references. Inputs and parameters come first in declaration order; the
/// calculated variables follow in depth-first post-order, visiting roots in
/// declaration order and dependencies in the order they appear in each formula.
pub fn toposort(model: &Model) -> Result<Vec<String>, ModelError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Fresh,
        Active,
        Done,
    }

    let index: BTreeMap<&str, usize> = model
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();
    let mut marks = vec![Mark::Fresh; model.variables.len()];
    let mut order = Vec::with_capacity(model.variables.len());

    for (i, var) in model.variables.iter().enumerate() {
        if !var.is_calculated() {
            marks[i] = Mark::Done;
            order.push(var.name.clone());
        }
    }

    let deps: Vec<Vec<usize>> = model
        .variables
        .iter()
        .map(|v| {
            v.formula
                .as_ref()
                .map(|e| {
                    e.references()
                        .into_iter()
                        .filter_map(|r| index.get(r).copied())
                        .collect()
                })
                .unwrap_or_default()
        })
        .collect();

    // Iterative DFS; each frame holds a variable and the next dependency slot to visit.
    for root in 0..model.variables.len() {
        if marks[root] != Mark::Fresh {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        marks[root] = Mark::Active;
        while let Some(frame) = stack.last_mut() {
            let (node, next) = *frame;
            match deps[node].get(next) {
                Some(&dep) => {
                    frame.1 += 1;
                    match marks[dep] {
                        Mark::Done => {}
                        Mark::Fresh => {
                            marks[dep] = Mark::Active;
                            stack.push((dep, 0));
                        }
                        Mark::Active => {
                            let start = stack.iter().position(|&(n, _)| n == dep).unwrap_or(0);
                            let cycle = stack[start..]
                                .iter()
                                .map(|&(n, _)| model.variables[n].name.clone())
                                .collect();
                            return Err(ModelError::CycleDetected(cycle));
                        }
                    }
                }
                None => {
                    marks[node] = Mark::Done;
                    order.push(model.variables[node].name.clone());
                    stack.pop();
                }
            }
        }
    }
    Ok(order)
}
