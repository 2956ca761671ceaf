#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssmi::dsl::parse_model;
use ssmi::eval::evaluate;
use ssmi::model::{AggFn, BinOp, Dimension, Expr, Model, Variable, VariableKind};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn model(name: &str) -> Model {
    parse_model(&fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

struct Gen {
    rng: ChaCha8Rng,
    vars: Vec<Variable>,
    dimension: Option<Dimension>,
}

impl Gen {
    fn literal(&mut self) -> f64 {
        (self.rng.random_range(0.5..10.0_f64) * 100.0).round() / 100.0
    }

    fn operand(&mut self, repeating: bool, depth: u32) -> Expr {
        let choice = self.rng.random_range(0..10);
        if depth >= 3 || choice < 4 {
            return self.leaf(repeating);
        }
        match choice {
            4 => Expr::negate(self.operand(repeating, depth + 1)),
            5 => {
                let base = self.operand(repeating, depth + 1);
                let exp = f64::from(self.rng.random_range(1..=3));
                Expr::binary(BinOp::Pow, base, Expr::Number(exp))
            }
            _ => {
                let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][self.rng.random_range(0..4)];
                let lhs = self.operand(repeating, depth + 1);
                let rhs = self.operand(repeating, depth + 1);
                Expr::binary(op, lhs, rhs)
            }
        }
    }

    fn leaf(&mut self, repeating: bool) -> Expr {
        if self.vars.is_empty() || self.rng.random_bool(0.1) {
            return Expr::Number(self.literal());
        }
        let i = self.rng.random_range(0..self.vars.len());
        let v = &self.vars[i];
        match (v.repeating, repeating) {
            (true, false) => Expr::Agg(AggFn::Sum, v.name.clone()),
            (true, true) if self.rng.random_bool(0.2) => Expr::Agg(AggFn::Sum, v.name.clone()),
            _ => Expr::Var(v.name.clone()),
        }
    }

    fn push(&mut self, kind: VariableKind) {
        let label = format!("Item {}", self.vars.len() + 1);
        let repeating = self.dimension.is_some() && self.rng.random_bool(0.5);
        let mut var = Variable::new(label, kind, repeating).expect("label is valid");
        let width = if repeating {
            self.dimension.as_ref().map_or(1, |d| d.len())
        } else {
            1
        };
        match kind {
            VariableKind::Input | VariableKind::Parameter => {
                let lits = (0..width).map(|_| self.literal()).collect();
                var = var.with_literals(lits);
            }
            _ => {
                let expr = self.operand(repeating, 0);
                var = var.with_formula(expr);
            }
        }
        self.vars.push(var);
    }
}

/// A random model that validates, passes the shape rule and evaluates to
/// finite, moderately sized numbers. Labels read `Item <k>`.
pub fn random_model(seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let dimension = rng.random_bool(0.7).then(|| {
            let n = rng.random_range(1..=4);
            Dimension {
                name: "Region".into(),
                instances: (0..n).map(|i| format!("R{}", i + 1)).collect(),
            }
        });
        let mut g = Gen {
            rng: ChaCha8Rng::seed_from_u64(rng.random()),
            vars: Vec::new(),
            dimension: dimension.clone(),
        };
        for _ in 0..rng.random_range(1..=3) {
            g.push(VariableKind::Input);
        }
        for _ in 0..rng.random_range(0..=3) {
            g.push(VariableKind::Parameter);
        }
        for _ in 0..rng.random_range(1..=8) {
            let kind = if rng.random_bool(0.3) {
                VariableKind::Output
            } else {
                VariableKind::Calculated
            };
            g.push(kind);
        }
        let Ok(model) = Model::new(dimension, g.vars) else {
            continue;
        };
        let sane = evaluate(&model, &BTreeMap::new()).is_ok_and(|v| {
            v.iter().all(|(_, val)| {
                val.as_slice()
                    .iter()
                    .all(|x| x.abs() < 1e12 && (*x == 0.0 || x.abs() > 1e-9))
            })
        });
        if sane {
            return model;
        }
    }
}

/// Random values for every input of `model`.
pub fn random_inputs(model: &Model, seed: u64) -> BTreeMap<String, f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model
        .variables
        .iter()
        .filter(|v| v.kind == VariableKind::Input)
        .map(|v| {
            (
                v.name.clone(),
                (rng.random_range(0.5..10.0_f64) * 100.0).round() / 100.0,
            )
        })
        .collect()
}

/// A random model with random inputs under which it still evaluates to
/// finite, moderately sized numbers.
pub fn random_case(seed: u64) -> (Model, BTreeMap<String, f64>) {
    let model = random_model(seed);
    for k in 0.. {
        let inputs = random_inputs(&model, seed.wrapping_mul(31).wrapping_add(k));
        let sane = evaluate(&model, &inputs)
            .is_ok_and(|v| v.iter().all(|(_, val)| val.as_slice().iter().all(|x| x.abs() < 1e12)));
        if sane {
            return (model, inputs);
        }
    }
    unreachable!()
}

pub struct Mutation {
    pub description: &'static str,
    pub sheet: &'static str,
    pub addr: &'static str,
    /// `None` clears the cell.
    pub cell: Option<ssmi::workbook::Cell>,
    pub expected: ssmi::audit::CheckId,
}

impl Mutation {
    pub fn apply(&self, wb: &ssmi::workbook::Workbook) -> ssmi::workbook::Workbook {
        let mut wb = wb.clone();
        let sheet = wb
            .sheet_mut(self.sheet)
            .unwrap_or_else(|| panic!("no sheet {}", self.sheet));
        let addr = self.addr.parse().unwrap();
        let styled = sheet.get(addr).is_some_and(|c| c.bold_italic);
        match &self.cell {
            Some(cell) => sheet.set(addr, cell.clone().styled(styled)),
            None => {
                sheet.cells.remove(&addr);
            }
        }
        wb
    }
}

/// Single-cell edits of the generated regional-profit workbook, each paired
/// with the check that must report it.
pub fn regional_mutations() -> Vec<Mutation> {
    use ssmi::audit::CheckId::*;
    use ssmi::workbook::Cell;
    let f = |t: &str| Some(Cell::formula(t));
    let lit = |v: f64| Some(Cell::literal(v));
    let m = |description, sheet, addr, cell, expected| Mutation {
        description,
        sheet,
        addr,
        cell,
        expected,
    };
    const R: &str = "Model Region";
    vec![
        m(
            "reference row points at the parameters sheet",
            R,
            "C10",
            f("=Parameters!B5"),
            A4,
        ),
        m(
            "definition reads a parameters cell",
            R,
            "B11",
            f("=B9*Parameters!B5"),
            A4,
        ),
        m(
            "scalar reference row replaced by a far cell",
            "Model",
            "B8",
            f("=Parameters!B5"),
            A4,
        ),
        m(
            "reference row points at another block's definition",
            R,
            "B10",
            f("=B7"),
            A4,
        ),
        m("reference row reuses another block's reference", R, "D10", f("=D5"), A4),
        m(
            "reference row reuses a reference on another sheet",
            R,
            "B5",
            f("=Model!B8"),
            A4,
        ),
        m(
            "definition reads another block's reference row",
            R,
            "B15",
            f("=B13*B6"),
            A4,
        ),
        m("absolute reference in a definition", R, "C11", f("=C9*$C$10"), A6),
        m("mixed row reference in a definition", R, "B7", f("=B5*B$6"), A6),
        m(
            "absolute references on the scalar sheet",
            "Model",
            "B9",
            f("=$B$6*B7^-B8"),
            A6,
        ),
        m("mixed column reference in a definition", R, "D23", f("=D21*$D22"), A6),
        m("definition replaced by its value", R, "C7", lit(3004.2), A8),
        m("reference replaced by a typed-in price", R, "B10", lit(375.0), A8),
        m(
            "scalar definition replaced by its value",
            "Model",
            "B9",
            lit(13062.0),
            A8,
        ),
        m("number typed into a separator row", R, "B8", lit(1.0), A8),
        m("one column reads its neighbour's price", R, "C11", f("=C9*B10"), A7),
        m("one column subtracts instead of adding", R, "D19", f("=D17-D18"), A7),
        m("one column references the wrong name", R, "C9", f("=Revenue"), A7),
        m("first column squares its demand", R, "B23", f("=B21*B21"), A7),
        m("partial copy leaves a definition cell empty", R, "D27", None, A7),
        m(
            "partial copy leaves an older formula behind",
            R,
            "D31",
            f("=D29+D30"),
            A7,
        ),
        m("partial copy leaves a reference cell empty", R, "D25", None, A7),
        m("name used inside a definition", R, "B31", f("=Revenue-B30"), A2),
        m(
            "definition reads another column of its block",
            R,
            "B19",
            f("=C17+B18"),
            A3,
        ),
        m("parameter value edited in place", "Parameters", "C10", lit(0.25), A9),
    ]
}
