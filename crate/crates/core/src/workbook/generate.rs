use std::collections::BTreeMap;

use thiserror::Error;

use super::{
    Cell, CellAddr, CellRange, CellRef, DefinedName, DefinitionBlock, Sheet, SheetKind, WExpr, WFormula, Workbook,
    ENTRY_SUFFIX, MAX_COLUMNS,
};
use crate::model::{check_shapes, toposort, Expr, Model, ModelError, ShapeViolation, Variable, VariableKind};

pub const INTERFACE_SHEET: &str = "Interface";
pub const PARAMETERS_SHEET: &str = "Parameters";
pub const MODEL_SHEET: &str = "Model";

/// First block row on the scalar model sheet.
pub const SCALAR_MODEL_FIRST_ROW: u32 = 6;
/// First block row on the repeating model sheet, below the instance header in row 3.
pub const REPEATING_MODEL_FIRST_ROW: u32 = 5;

const HEADER_ROW: u32 = 3;
const FIRST_DATA_COL: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("shape rule violated: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Shape(Vec<ShapeViolation>),
    #[error("{columns} dimension instances do not fit in a worksheet")]
    LayoutOverflow { columns: usize },
    #[error("defined name `{0}` would be created twice")]
    NameCollision(String),
}

struct Layout<'m> {
    model: &'m Model,
    width: u32,
    names: Vec<DefinedName>,
    blocks: Vec<DefinitionBlock>,
}

impl Layout<'_> {
    fn columns(&self, repeating: bool) -> std::ops::Range<u32> {
        let n = if repeating { self.width } else { 1 };
        FIRST_DATA_COL..FIRST_DATA_COL + n
    }

    fn span(&self, row: u32, repeating: bool) -> CellRange {
        let cols = self.columns(repeating);
        CellRange::row_span(row, cols.start, cols.end - 1)
    }

    fn add_name(&mut self, name: String, sheet: &str, range: CellRange) -> Result<(), GenerateError> {
        if self.names.iter().any(|n| n.name == name) {
            return Err(GenerateError::NameCollision(name));
        }
        self.names.push(DefinedName {
            name,
            sheet: sheet.to_string(),
            range,
        });
        Ok(())
    }

    fn write_header(&self, sheet: &mut Sheet) {
        if let Some(dim) = &self.model.dimension {
            sheet.set(CellAddr::new(1, HEADER_ROW), Cell::label(&dim.name));
            for (i, inst) in dim.instances.iter().enumerate() {
                sheet.set(CellAddr::new(FIRST_DATA_COL + i as u32, HEADER_ROW), Cell::label(inst));
            }
        }
    }

    fn content_start(&self) -> u32 {
        if self.model.dimension.is_some() {
            HEADER_ROW + 2
        } else {
            HEADER_ROW
        }
    }

    fn interface(&mut self) -> Result<Sheet, GenerateError> {
        let mut sheet = Sheet::new(INTERFACE_SHEET, SheetKind::Interface);
        sheet.set(CellAddr::new(1, 1), Cell::label(INTERFACE_SHEET));
        self.write_header(&mut sheet);
        let mut row = self.content_start();
        let inputs: Vec<&Variable> = self
            .model
            .variables
            .iter()
            .filter(|v| v.kind == VariableKind::Input)
            .collect();
        for var in &inputs {
            sheet.set(CellAddr::new(1, row), Cell::label(&var.label));
            for (i, col) in self.columns(var.repeating).enumerate() {
                let value = var.literals.as_ref().and_then(|l| l.get(i)).copied().unwrap_or(0.0);
                sheet.set(CellAddr::new(col, row), Cell::literal(value));
            }
            self.add_name(
                format!("{}{ENTRY_SUFFIX}", var.name),
                INTERFACE_SHEET,
                self.span(row, var.repeating),
            )?;
            row += 1;
        }
        if !inputs.is_empty() {
            row += 1;
        }
        for var in self.model.variables.iter().filter(|v| v.kind == VariableKind::Output) {
            sheet.set(CellAddr::new(1, row), Cell::label(&var.label));
            for col in self.columns(var.repeating) {
                sheet.set(CellAddr::new(col, row), Cell::formula(format!("={}", var.name)));
            }
            row += 1;
        }
        Ok(sheet)
    }

    fn parameters(&mut self) -> Result<Sheet, GenerateError> {
        let mut sheet = Sheet::new(PARAMETERS_SHEET, SheetKind::Parameters);
        sheet.set(CellAddr::new(1, 1), Cell::label(PARAMETERS_SHEET));
        self.write_header(&mut sheet);
        let model = self.model;
        for (row, var) in (self.content_start()..).zip(model.variables.iter().filter(|v| !v.is_calculated())) {
            sheet.set(CellAddr::new(1, row), Cell::label(&var.label));
            for (i, col) in self.columns(var.repeating).enumerate() {
                let cell = match var.kind {
                    VariableKind::Input => Cell::formula(format!("={}{ENTRY_SUFFIX}", var.name)),
                    _ => Cell::literal(var.literals.as_ref().and_then(|l| l.get(i)).copied().unwrap_or(0.0)),
                };
                sheet.set(CellAddr::new(col, row), cell);
            }
            self.add_name(var.name.clone(), PARAMETERS_SHEET, self.span(row, var.repeating))?;
        }
        Ok(sheet)
    }

    fn block(&mut self, sheet: &mut Sheet, start: u32, var: &Variable) -> Result<u32, GenerateError> {
        let expr = var.formula.as_ref().expect("calculated variables carry formulas");
        let mut refs: Vec<&str> = Vec::new();
        expr.walk_refs(&mut |name, in_agg| {
            if !in_agg && !refs.contains(&name) {
                refs.push(name);
            }
        });
        let mut ref_rows: BTreeMap<&str, u32> = BTreeMap::new();
        for (i, name) in refs.iter().enumerate() {
            let row = start + i as u32;
            ref_rows.insert(name, row);
            let referenced = self.model.get(name).expect("references resolve");
            sheet.set(CellAddr::new(1, row), Cell::label(&referenced.label));
            for col in self.columns(var.repeating) {
                sheet.set(CellAddr::new(col, row), Cell::formula(format!("={name}")));
            }
        }
        let def_row = start + refs.len() as u32;
        sheet.set(CellAddr::new(1, def_row), Cell::label(&var.label).styled(true));
        for col in self.columns(var.repeating) {
            let formula = WFormula::new(definition_expr(expr, &ref_rows, col));
            sheet.set(
                CellAddr::new(col, def_row),
                Cell::formula(formula.to_string()).styled(true),
            );
        }
        self.add_name(var.name.clone(), &sheet.name, self.span(def_row, var.repeating))?;
        self.blocks.push(DefinitionBlock {
            sheet: sheet.name.clone(),
            reference_rows: (start..def_row).collect(),
            definition_row: def_row,
            defined_variable: Some(var.name.clone()),
        });
        Ok(def_row + 2)
    }
}

fn definition_expr(expr: &Expr, ref_rows: &BTreeMap<&str, u32>, col: u32) -> WExpr {
    match expr {
        Expr::Number(n) => WExpr::Number(*n),
        Expr::Var(name) => WExpr::Ref(CellRef::relative(CellAddr::new(col, ref_rows[name.as_str()]))),
        Expr::Neg(inner) => WExpr::Neg(Box::new(definition_expr(inner, ref_rows, col))),
        Expr::Binary(op, lhs, rhs) => WExpr::binary(
            *op,
            definition_expr(lhs, ref_rows, col),
            definition_expr(rhs, ref_rows, col),
        ),
        Expr::Agg(agg, name) => WExpr::Func(*agg, vec![WExpr::Name(name.clone())]),
    }
}

/// Lays out a model as a workbook.
pub fn generate(model: &Model) -> Result<Workbook, GenerateError> {
    generate_with_blocks(model).map(|(wb, _)| wb)
}

/// Like [`generate`], also returning the definition blocks in layout order.
pub fn generate_with_blocks(model: &Model) -> Result<(Workbook, Vec<DefinitionBlock>), GenerateError> {
    model.validate()?;
    let violations = check_shapes(model);
    if !violations.is_empty() {
        return Err(GenerateError::Shape(violations));
    }
    let order = toposort(model)?;
    let width = model.dimension.as_ref().map_or(1, |d| d.len());
    if width as u64 >= u64::from(MAX_COLUMNS) {
        return Err(GenerateError::LayoutOverflow { columns: width });
    }
    let mut layout = Layout {
        model,
        width: width as u32,
        names: Vec::new(),
        blocks: Vec::new(),
    };

    let interface = layout.interface()?;
    let parameters = layout.parameters()?;

    let mut scalar = Sheet::new(MODEL_SHEET, SheetKind::Model);
    scalar.set(CellAddr::new(1, 1), Cell::label(MODEL_SHEET));
    let mut repeating = model.dimension.as_ref().map(|dim| {
        let name = format!("{MODEL_SHEET} {}", dim.name);
        let mut sheet = Sheet::new(name.clone(), SheetKind::ModelRepeating);
        sheet.set(CellAddr::new(1, 1), Cell::label(name));
        layout.write_header(&mut sheet);
        sheet
    });
    let mut scalar_row = SCALAR_MODEL_FIRST_ROW;
    let mut repeating_row = REPEATING_MODEL_FIRST_ROW;
    let mut used_repeating = false;
    for name in &order {
        let var = model.get(name).expect("toposort yields model names");
        if !var.is_calculated() {
            continue;
        }
        match (&mut repeating, var.repeating) {
            (Some(sheet), true) => {
                repeating_row = layout.block(sheet, repeating_row, var)?;
                used_repeating = true;
            }
            _ => scalar_row = layout.block(&mut scalar, scalar_row, var)?,
        }
    }

    let mut sheets = vec![interface, parameters, scalar];
    if let Some(sheet) = repeating.filter(|_| used_repeating) {
        sheets.push(sheet);
    }
    let names = order_names(model, layout.names);
    Ok((Workbook { sheets, names }, layout.blocks))
}

// Names follow declaration order, each entry name right after its variable.
fn order_names(model: &Model, names: Vec<DefinedName>) -> Vec<DefinedName> {
    let mut by_name: BTreeMap<String, DefinedName> = names.into_iter().map(|n| (n.name.clone(), n)).collect();
    let mut out = Vec::with_capacity(by_name.len());
    for var in &model.variables {
        if let Some(n) = by_name.remove(&var.name) {
            out.push(n);
        }
        if let Some(n) = by_name.remove(&format!("{}{ENTRY_SUFFIX}", var.name)) {
            out.push(n);
        }
    }
    out.extend(by_name.into_values());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_model;

    #[test]
    fn empty_model_has_three_sheets() {
        let m = parse_model("param Rate = 0.5\n").unwrap();
        let wb = generate(&m).unwrap();
        let kinds: Vec<_> = wb.sheets.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            vec![SheetKind::Interface, SheetKind::Parameters, SheetKind::Model]
        );
        assert_eq!(wb.names.len(), 1);
        assert_eq!(wb.names[0].sheet, PARAMETERS_SHEET);
    }

    #[test]
    fn simple_block_layout() {
        let m = parse_model("input Price = 10\nparam Qty = 3\ncalc out Revenue = Price * Qty\n").unwrap();
        let (wb, blocks) = generate_with_blocks(&m).unwrap();
        assert_eq!(wb.formula_at(MODEL_SHEET, "B6"), Some("=Price"));
        assert_eq!(wb.formula_at(MODEL_SHEET, "B7"), Some("=Qty"));
        assert_eq!(wb.formula_at(MODEL_SHEET, "B8"), Some("=B6*B7"));
        assert!(wb.cell(MODEL_SHEET, "A8".parse().unwrap()).unwrap().bold_italic);
        assert_eq!(blocks[0].reference_rows, vec![6, 7]);
        assert_eq!(wb.formula_at(PARAMETERS_SHEET, "B3"), Some("=Price__entry"));
        assert_eq!(wb.name("Revenue").unwrap().range.to_string(), "B8");
        assert_eq!(wb.name("Price__entry").unwrap().sheet, INTERFACE_SHEET);
        assert_eq!(wb.formula_at(INTERFACE_SHEET, "B5"), Some("=Revenue"));
    }

    #[test]
    fn repeated_reference_gets_one_row() {
        let m = parse_model("param x = 2\ncalc out y = x * x\n").unwrap();
        let wb = generate(&m).unwrap();
        assert_eq!(wb.formula_at(MODEL_SHEET, "B6"), Some("=x"));
        assert_eq!(wb.formula_at(MODEL_SHEET, "B7"), Some("=B6*B6"));
    }

    #[test]
    fn aggregate_renders_name_argument() {
        let m = parse_model("dimension D = [a, b]\nparam w over D = [1, 2]\ncalc out t = SUM(w)\n").unwrap();
        let wb = generate(&m).unwrap();
        assert_eq!(wb.formula_at(MODEL_SHEET, "B6"), Some("=SUM(w)"));
        assert_eq!(wb.sheets.len(), 3);
    }

    #[test]
    fn rejects_bad_models() {
        let m = parse_model("dimension D = [a, b]\nparam w over D = [1, 2]\ncalc out t = w\n").unwrap();
        assert!(matches!(generate(&m), Err(GenerateError::Shape(_))));
        let m = parse_model("calc a = b\ncalc b = a\n").unwrap();
        assert!(matches!(
            generate(&m),
            Err(GenerateError::Model(ModelError::CycleDetected(_)))
        ));
        let m = parse_model("input P = 1\nparam P__entry = 2\n").unwrap();
        assert!(matches!(generate(&m), Err(GenerateError::NameCollision(_))));
    }

    #[test]
    fn layout_overflow() {
        let labels: Vec<String> = (0..MAX_COLUMNS).map(|i| format!("i{i}")).collect();
        let src = format!(
            "dimension D = [{}]\nparam w over D = [{}]\n",
            labels.join(", "),
            vec!["1"; labels.len()].join(", ")
        );
        let m = parse_model(&src).unwrap();
        assert!(matches!(generate(&m), Err(GenerateError::LayoutOverflow { .. })));
    }
}
