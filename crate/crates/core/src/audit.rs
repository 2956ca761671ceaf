//! Conformance audit of a workbook against the definition-block rules.
//!
//! | check | rule                                                   | severity      |
//! |-------|--------------------------------------------------------|---------------|
//! | A1    | block structure, formula syntax, unknown names         | error         |
//! | A2    | names only in reference rows (SUM arguments excepted)  | error         |
//! | A3    | definition formulas use their own reference rows, same column | error  |
//! | A4    | far and transitive cell references                     | error         |
//! | A5    | definition formula mixes operator kinds                | warn / strict error |
//! | A6    | absolute or mixed references                           | error         |
//! | A7    | copy consistency across the columns of a repeating row | error         |
//! | A8    | literals on model sheets                               | error         |
//! | A9    | recomputed values differ from the model's evaluation   | error         |

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::eval::{evaluate_values, Value};
use crate::model::{Model, VariableKind};
use crate::workbook::{
    recompute, CellAddr, CellContent, CellRef, Sheet, SheetKind, WExpr, WFormula, Workbook, ENTRY_SUFFIX,
};
use crate::Severity;

/// Relative tolerance of the recompute-equivalence check.
pub const RECOMPUTE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum CheckId {
    A1,
    A2,
    A3,
    A4,
    A5,
    A6,
    A7,
    A8,
    A9,
}

impl CheckId {
    pub const ALL: [CheckId; 9] = [
        CheckId::A1,
        CheckId::A2,
        CheckId::A3,
        CheckId::A4,
        CheckId::A5,
        CheckId::A6,
        CheckId::A7,
        CheckId::A8,
        CheckId::A9,
    ];

    pub fn description(self) -> &'static str {
        match self {
            CheckId::A1 => "block structure",
            CheckId::A2 => "name placement",
            CheckId::A3 => "locality",
            CheckId::A4 => "far or transitive reference",
            CheckId::A5 => "formula complexity",
            CheckId::A6 => "absolute or mixed reference",
            CheckId::A7 => "copy consistency",
            CheckId::A8 => "tier separation",
            CheckId::A9 => "recompute equivalence",
        }
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Finding {
    pub check: CheckId,
    pub severity: Severity,
    pub sheet: String,
    pub cell: Option<CellAddr>,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.severity, self.check, self.sheet)?;
        if let Some(cell) = self.cell {
            write!(f, "!{cell}")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub findings: Vec<Finding>,
    pub summary: BTreeMap<CheckId, usize>,
    pub verdict: Verdict,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AuditOptions {
    /// Report formula complexity as an error instead of a warning.
    pub strict: bool,
}

#[derive(Serialize)]
struct JsonFinding<'a> {
    check: CheckId,
    severity: Severity,
    sheet: &'a str,
    cell: Option<String>,
    message: &'a str,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    findings: Vec<JsonFinding<'a>>,
    verdict: Verdict,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn has(&self, check: CheckId) -> bool {
        self.findings.iter().any(|f| f.check == check)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.findings {
            out.push_str(&f.to_string());
            out.push('\n');
        }
        let errors = self.errors().count();
        let warnings = self.findings.len() - errors;
        out.push_str(&format!(
            "verdict: {} ({errors} errors, {warnings} warnings)\n",
            self.verdict
        ));
        out
    }

    pub fn to_json(&self) -> String {
        let report = JsonReport {
            findings: self
                .findings
                .iter()
                .map(|f| JsonFinding {
                    check: f.check,
                    severity: f.severity,
                    sheet: &f.sheet,
                    cell: f.cell.map(|c| c.to_string()),
                    message: &f.message,
                })
                .collect(),
            verdict: self.verdict,
        };
        let mut out = serde_json::to_string_pretty(&report).expect("report serializes");
        out.push('\n');
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RowRole {
    Header,
    Reference(usize),
    Definition(usize),
}

#[derive(Clone, Debug)]
struct Block {
    first_row: u32,
    definition_row: u32,
}

#[derive(Clone, Default)]
struct Segmentation {
    roles: BTreeMap<u32, RowRole>,
    blocks: Vec<Block>,
}

impl Segmentation {
    fn of(sheet: &Sheet) -> Self {
        let mut rows: Vec<u32> = sheet.cells.keys().map(|a| a.row).collect();
        rows.dedup();
        let mut seg = Segmentation::default();
        let mut i = 0;
        while i < rows.len() {
            let mut j = i;
            while j + 1 < rows.len() && rows[j + 1] == rows[j] + 1 {
                j += 1;
            }
            let run = &rows[i..=j];
            let has_formula = run
                .iter()
                .any(|r| sheet.row(*r).any(|(_, c)| matches!(c.content, CellContent::Formula(_))));
            if has_formula {
                let id = seg.blocks.len();
                seg.blocks.push(Block {
                    first_row: run[0],
                    definition_row: run[run.len() - 1],
                });
                for r in &run[..run.len() - 1] {
                    seg.roles.insert(*r, RowRole::Reference(id));
                }
                seg.roles.insert(run[run.len() - 1], RowRole::Definition(id));
            } else {
                for r in run {
                    seg.roles.insert(*r, RowRole::Header);
                }
            }
            i = j + 1;
        }
        seg
    }

    fn role(&self, row: u32) -> Option<RowRole> {
        self.roles.get(&row).copied()
    }
}

struct Auditor<'w> {
    wb: &'w Workbook,
    options: AuditOptions,
    segments: BTreeMap<&'w str, Segmentation>,
    findings: Vec<Finding>,
}

impl<'w> Auditor<'w> {
    fn push(&mut self, check: CheckId, severity: Severity, sheet: &str, cell: Option<CellAddr>, message: String) {
        self.findings.push(Finding {
            check,
            severity,
            sheet: sheet.to_string(),
            cell,
            message,
        });
    }

    fn error(&mut self, check: CheckId, sheet: &str, cell: CellAddr, message: String) {
        self.push(check, Severity::Error, sheet, Some(cell), message);
    }

    fn parse_all(&mut self) -> BTreeMap<(usize, CellAddr), WFormula> {
        let mut parsed = BTreeMap::new();
        for (si, sheet) in self.wb.sheets.iter().enumerate() {
            for (addr, cell) in &sheet.cells {
                if let CellContent::Formula(text) = &cell.content {
                    match WFormula::parse(text) {
                        Ok(f) => {
                            parsed.insert((si, *addr), f);
                        }
                        Err(e) => self.error(CheckId::A1, &sheet.name, *addr, format!("unparsable formula: {e}")),
                    }
                }
            }
        }
        parsed
    }

    /// Classifies a reference leaving its block: transitive when it lands on a
    /// reference-row cell, far otherwise.
    fn outside_block(&mut self, sheet: &str, at: CellAddr, r: &CellRef) {
        let target_sheet = r.sheet.as_deref().unwrap_or(sheet);
        let role = self.segments.get(target_sheet).and_then(|s| s.role(r.row));
        let target = format!("{}!{}", target_sheet, r.addr());
        match role {
            Some(RowRole::Reference(_)) => self.error(
                CheckId::A4,
                sheet,
                at,
                format!("transitive reference to {target}, where a variable is used rather than defined"),
            ),
            _ => self.error(
                CheckId::A4,
                sheet,
                at,
                format!("far reference to {target}; use a name in a reference row"),
            ),
        }
    }

    fn check_names_exist(&mut self, sheet: &str, at: CellAddr, formula: &WFormula) {
        let mut unknown = Vec::new();
        formula.expr.visit_names(&mut |n, _| {
            if self.wb.name(n).is_none() && !unknown.contains(&n.to_string()) {
                unknown.push(n.to_string());
            }
        });
        for n in unknown {
            self.error(CheckId::A1, sheet, at, format!("unknown name `{n}`"));
        }
    }

    fn reference_cell(&mut self, sheet: &str, at: CellAddr, formula: &WFormula) {
        match &formula.expr {
            WExpr::Name(_) => {}
            WExpr::Ref(r) => self.outside_block(sheet, at, r),
            _ => self.error(
                CheckId::A1,
                sheet,
                at,
                format!("reference row holds `{formula}` instead of a single name"),
            ),
        }
    }

    fn definition_cell(&mut self, sheet: &str, at: CellAddr, block: &Block, formula: &WFormula) {
        let mut names = Vec::new();
        formula.expr.visit_names(&mut |n, in_func| {
            if !in_func && !names.contains(&n) {
                names.push(n);
            }
        });
        for n in names {
            self.error(
                CheckId::A2,
                sheet,
                at,
                format!("definition formula uses name `{n}`; names belong in reference rows"),
            );
        }
        let mut refs = Vec::new();
        formula.expr.visit_refs(&mut |r, _| refs.push(r.clone()));
        for r in refs {
            let same_sheet = r.sheet.as_deref().is_none_or(|s| s == sheet);
            let own_rows = block.first_row..block.definition_row;
            if same_sheet && own_rows.contains(&r.row) {
                if r.col != at.col {
                    self.error(
                        CheckId::A3,
                        sheet,
                        at,
                        format!("reference to {} reads another column of its block", r.addr()),
                    );
                }
            } else if same_sheet && r.row == block.definition_row {
                self.error(
                    CheckId::A3,
                    sheet,
                    at,
                    format!("reference to {} points into the definition row itself", r.addr()),
                );
            } else {
                self.outside_block(sheet, at, &r);
            }
        }
        let ops = formula.expr.op_kinds();
        if ops.len() > 1 {
            let severity = if self.options.strict {
                Severity::Error
            } else {
                Severity::Warn
            };
            let list: Vec<String> = ops.iter().map(ToString::to_string).collect();
            self.push(
                CheckId::A5,
                severity,
                sheet,
                Some(at),
                format!("formula mixes {} operator kinds ({})", ops.len(), list.join(" ")),
            );
        }
    }

    fn model_sheet(&mut self, si: usize, parsed: &BTreeMap<(usize, CellAddr), WFormula>) {
        let wb = self.wb;
        let sheet = &wb.sheets[si];
        let name = sheet.name.as_str();
        let seg = self.segments.get(name).cloned().unwrap_or_default();
        let mut missing_definition = Vec::new();
        for (addr, cell) in &sheet.cells {
            match &cell.content {
                CellContent::Literal(v) => {
                    self.error(
                        CheckId::A8,
                        name,
                        *addr,
                        format!("literal {v} on a model sheet; inputs belong on the interface or parameters sheet"),
                    );
                    continue;
                }
                CellContent::Label(_) => {
                    if addr.col > 1 && !matches!(seg.role(addr.row), Some(RowRole::Header) | None) {
                        self.error(
                            CheckId::A1,
                            name,
                            *addr,
                            "text in a data column of a definition block".into(),
                        );
                    }
                    continue;
                }
                CellContent::Formula(_) => {}
            }
            let Some(formula) = parsed.get(&(si, *addr)) else {
                continue;
            };
            if addr.col == 1 {
                self.error(CheckId::A1, name, *addr, "formula in the label column".into());
            }
            if formula.expr.has_absolute_ref() {
                self.error(
                    CheckId::A6,
                    name,
                    *addr,
                    format!("`{formula}` uses an absolute or mixed reference"),
                );
            }
            self.check_names_exist(name, *addr, formula);
            match seg.role(addr.row) {
                Some(RowRole::Reference(_)) => self.reference_cell(name, *addr, formula),
                Some(RowRole::Definition(id)) => {
                    let block = seg.blocks[id].clone();
                    self.definition_cell(name, *addr, &block, formula);
                }
                Some(RowRole::Header) | None => {}
            }
        }
        for (id, block) in seg.blocks.iter().enumerate() {
            let has_def = sheet
                .row(block.definition_row)
                .any(|(a, c)| a.col > 1 && matches!(c.content, CellContent::Formula(_)));
            if !has_def {
                missing_definition.push((id, block.definition_row));
            }
        }
        for (_, row) in missing_definition {
            let first_cell = sheet.row(row).map(|(a, _)| *a).next().unwrap_or(CellAddr::new(1, row));
            self.error(
                CheckId::A1,
                name,
                first_cell,
                "block does not end in a definition formula".into(),
            );
        }
        if sheet.kind == SheetKind::ModelRepeating {
            self.copy_consistency(si, parsed);
        }
    }

    fn copy_consistency(&mut self, si: usize, parsed: &BTreeMap<(usize, CellAddr), WFormula>) {
        let sheet = &self.wb.sheets[si];
        let width = sheet.max_col();
        if width < 3 {
            return;
        }
        let mut rows: Vec<u32> = sheet
            .cells
            .iter()
            .filter(|(a, c)| a.col > 1 && matches!(c.content, CellContent::Formula(_)))
            .map(|(a, _)| a.row)
            .collect();
        rows.dedup();
        for row in rows {
            let forms: Vec<String> = (2..=width)
                .map(|col| {
                    let addr = CellAddr::new(col, row);
                    match sheet.get(addr).map(|c| &c.content) {
                        None => "<empty>".to_string(),
                        Some(CellContent::Literal(v)) => format!("<literal {v}>"),
                        Some(CellContent::Label(l)) => format!("<text {l}>"),
                        Some(CellContent::Formula(text)) => match parsed.get(&(si, addr)) {
                            Some(f) => f.to_r1c1(addr),
                            None => format!("<unparsable {text}>"),
                        },
                    }
                })
                .collect();
            let mut counts: Vec<(&str, usize)> = Vec::new();
            for form in &forms {
                match counts.iter_mut().find(|(f, _)| f == form) {
                    Some((_, n)) => *n += 1,
                    None => counts.push((form, 1)),
                }
            }
            if counts.len() < 2 {
                continue;
            }
            let best = counts.iter().map(|(_, n)| *n).max().unwrap_or(0);
            let majority = counts.iter().find(|(_, n)| *n == best).map(|(f, _)| *f).unwrap_or("");
            let deviant: Vec<u32> = forms
                .iter()
                .enumerate()
                .filter(|(_, f)| f.as_str() != majority)
                .map(|(i, _)| i as u32 + 2)
                .collect();
            let letters: Vec<String> = deviant.iter().map(|c| crate::workbook::column_letters(*c)).collect();
            let located = deviant
                .iter()
                .map(|c| CellAddr::new(*c, row))
                .find(|a| sheet.get(*a).is_some());
            let message = format!(
                "row {row}: column(s) {} differ from the row's copied formula {majority}",
                letters.join(", ")
            );
            let name = sheet.name.clone();
            self.push(CheckId::A7, Severity::Error, &name, located, message);
        }
    }

    fn recompute_equivalence(&mut self, model: &Model) {
        let wb = self.wb;
        let fallback = wb.sheets.first().map(|s| s.name.clone()).unwrap_or_default();
        let recomputed = match recompute(wb, &BTreeMap::new()) {
            Ok(r) => r,
            Err(e) => {
                self.push(
                    CheckId::A9,
                    Severity::Error,
                    &fallback,
                    None,
                    format!("workbook does not recompute: {e}"),
                );
                return;
            }
        };
        let mut inputs = BTreeMap::new();
        for var in model.variables.iter().filter(|v| v.kind == VariableKind::Input) {
            let entry = wb
                .name(&format!("{}{ENTRY_SUFFIX}", var.name))
                .or_else(|| wb.name(&var.name));
            let Some(entry) = entry else {
                self.push(
                    CheckId::A9,
                    Severity::Error,
                    &fallback,
                    None,
                    format!("no cells hold input `{}`", var.name),
                );
                return;
            };
            let values: Vec<f64> = recomputed
                .name_values(entry)
                .into_iter()
                .map(|v| v.unwrap_or(0.0))
                .collect();
            let value = if var.repeating {
                Value::Vector(values)
            } else {
                Value::Scalar(values[0])
            };
            inputs.insert(var.name.clone(), value);
        }
        let valuation = match evaluate_values(model, &inputs) {
            Ok(v) => v,
            Err(e) => {
                self.push(
                    CheckId::A9,
                    Severity::Error,
                    &fallback,
                    None,
                    format!("model does not evaluate: {e}"),
                );
                return;
            }
        };
        for var in &model.variables {
            let Some(defined) = wb.name(&var.name) else {
                self.push(
                    CheckId::A9,
                    Severity::Error,
                    &fallback,
                    None,
                    format!("workbook has no name `{}`", var.name),
                );
                continue;
            };
            let expected = valuation
                .get(&var.name)
                .expect("every variable is evaluated")
                .as_slice();
            if defined.range.len() != expected.len() {
                self.push(
                    CheckId::A9,
                    Severity::Error,
                    &defined.sheet,
                    Some(defined.range.start),
                    format!(
                        "name `{}` covers {} cells, the model has {} values",
                        var.name,
                        defined.range.len(),
                        expected.len()
                    ),
                );
                continue;
            }
            for (addr, want) in defined.range.cells().zip(expected) {
                let got = recomputed.get(&defined.sheet, addr).unwrap_or(0.0);
                if !close(got, *want) {
                    self.push(
                        CheckId::A9,
                        Severity::Error,
                        &defined.sheet,
                        Some(addr),
                        format!("`{}` recomputes to {got}, the model evaluates to {want}", var.name),
                    );
                }
            }
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= RECOMPUTE_TOLERANCE * a.abs().max(b.abs())
}

/// Runs every check. A9 runs only when the model is supplied.
pub fn audit(wb: &Workbook, model: Option<&Model>, options: &AuditOptions) -> AuditReport {
    let mut auditor = Auditor {
        wb,
        options: *options,
        segments: wb
            .sheets
            .iter()
            .filter(|s| s.kind.is_model())
            .map(|s| (s.name.as_str(), Segmentation::of(s)))
            .collect(),
        findings: Vec::new(),
    };
    let parsed = auditor.parse_all();
    for (si, sheet) in wb.sheets.iter().enumerate() {
        if sheet.kind.is_model() {
            auditor.model_sheet(si, &parsed);
        }
    }
    if let Some(model) = model {
        auditor.recompute_equivalence(model);
    }

    let mut findings = auditor.findings;
    findings.sort_by_key(|f| {
        let sheet = wb.sheet_index(&f.sheet).unwrap_or(usize::MAX);
        let (row, col) = f.cell.map_or((0, 0), |c| (c.row, c.col));
        (sheet, row, col, f.check)
    });
    findings.dedup();
    let mut summary: BTreeMap<CheckId, usize> = BTreeMap::new();
    for f in &findings {
        *summary.entry(f.check).or_default() += 1;
    }
    let verdict = if findings.iter().any(|f| f.severity == Severity::Error) {
        Verdict::Fail
    } else {
        Verdict::Pass
    };
    AuditReport {
        findings,
        summary,
        verdict,
    }
}
