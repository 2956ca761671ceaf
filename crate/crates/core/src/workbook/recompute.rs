//! Cell-level recomputation of a workbook with spreadsheet name semantics.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{
    CellAddr, CellContent, CellRange, CellRef, DefinedName, FormulaError, WExpr, WFormula, Workbook, ENTRY_SUFFIX,
};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub sheet: String,
    pub addr: CellAddr,
}

impl CellKey {
    pub fn new(sheet: impl Into<String>, addr: CellAddr) -> Self {
        CellKey {
            sheet: sheet.into(),
            addr,
        }
    }
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}!{}", self.sheet, self.addr)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecomputeError {
    #[error("circular reference through {0}")]
    CellCycle(CellKey),
    #[error("{at}: name `{name}` has no cell in the referencing row or column")]
    NameIntersectionMiss { name: String, at: CellKey },
    #[error("{at}: unknown name `{name}`")]
    UnresolvedName { name: String, at: CellKey },
    #[error("{at}: unknown sheet `{sheet}`")]
    UnknownSheet { sheet: String, at: CellKey },
    #[error("{at}: {source}")]
    Formula { at: CellKey, source: FormulaError },
    #[error("{0} holds text where a number is needed")]
    NonNumeric(CellKey),
    #[error("{0}: a range is only valid as a SUM argument")]
    RangeInValueContext(CellKey),
    #[error("{0} evaluates to a non-finite number")]
    NonFinite(CellKey),
    #[error("no entry cell or literal cells named `{0}`")]
    UnknownEntry(String),
}

/// Values of every numeric cell after recomputation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Recomputed {
    values: BTreeMap<CellKey, f64>,
}

impl Recomputed {
    pub fn get(&self, sheet: &str, addr: CellAddr) -> Option<f64> {
        self.values.get(&CellKey::new(sheet, addr)).copied()
    }

    /// Values of the cells a defined name covers, in row-major order.
    pub fn name_values(&self, name: &DefinedName) -> Vec<Option<f64>> {
        name.range.cells().map(|a| self.get(&name.sheet, a)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellKey, &f64)> {
        self.values.iter()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Recomputes every formula cell. `entries` overrides literal cells by name:
/// `X` selects the interface entry `X__entry` when present, else the
/// literal cells named `X`. Empty cells read as 0.
pub fn recompute(wb: &Workbook, entries: &BTreeMap<String, f64>) -> Result<Recomputed, RecomputeError> {
    let mut overrides: BTreeMap<CellKey, f64> = BTreeMap::new();
    for (name, value) in entries {
        let target = wb
            .name(&format!("{name}{ENTRY_SUFFIX}"))
            .or_else(|| wb.name(name))
            .ok_or_else(|| RecomputeError::UnknownEntry(name.clone()))?;
        for addr in target.range.cells() {
            match wb.cell(&target.sheet, addr).map(|c| &c.content) {
                Some(CellContent::Literal(_)) => {
                    overrides.insert(CellKey::new(&target.sheet, addr), *value);
                }
                _ => return Err(RecomputeError::UnknownEntry(name.clone())),
            }
        }
    }

    let mut engine = Engine {
        wb,
        overrides,
        parsed: BTreeMap::new(),
        values: BTreeMap::new(),
        active: BTreeSet::new(),
    };
    for sheet in &wb.sheets {
        for (addr, cell) in &sheet.cells {
            if !matches!(cell.content, CellContent::Label(_)) {
                engine.cell_value(&CellKey::new(&sheet.name, *addr))?;
            }
        }
    }
    Ok(Recomputed { values: engine.values })
}

struct Engine<'w> {
    wb: &'w Workbook,
    overrides: BTreeMap<CellKey, f64>,
    parsed: BTreeMap<CellKey, WFormula>,
    values: BTreeMap<CellKey, f64>,
    active: BTreeSet<CellKey>,
}

impl Engine<'_> {
    fn cell_value(&mut self, key: &CellKey) -> Result<f64, RecomputeError> {
        if let Some(v) = self.values.get(key) {
            return Ok(*v);
        }
        if let Some(v) = self.overrides.get(key) {
            self.values.insert(key.clone(), *v);
            return Ok(*v);
        }
        let sheet = self.wb.sheet(&key.sheet).ok_or_else(|| RecomputeError::UnknownSheet {
            sheet: key.sheet.clone(),
            at: key.clone(),
        })?;
        let value = match sheet.get(key.addr).map(|c| &c.content) {
            None => return Ok(0.0),
            Some(CellContent::Label(_)) => return Err(RecomputeError::NonNumeric(key.clone())),
            Some(CellContent::Literal(v)) => *v,
            Some(CellContent::Formula(text)) => {
                if !self.active.insert(key.clone()) {
                    return Err(RecomputeError::CellCycle(key.clone()));
                }
                let formula = match self.parsed.get(key) {
                    Some(f) => f.clone(),
                    None => {
                        let f = WFormula::parse(text).map_err(|source| RecomputeError::Formula {
                            at: key.clone(),
                            source,
                        })?;
                        self.parsed.insert(key.clone(), f.clone());
                        f
                    }
                };
                let v = self.eval(&formula.expr, key)?;
                self.active.remove(key);
                v
            }
        };
        if !value.is_finite() {
            return Err(RecomputeError::NonFinite(key.clone()));
        }
        self.values.insert(key.clone(), value);
        Ok(value)
    }

    fn target(&self, r: &CellRef, at: &CellKey) -> CellKey {
        CellKey::new(r.sheet.clone().unwrap_or_else(|| at.sheet.clone()), r.addr())
    }

    fn defined(&self, name: &str, at: &CellKey) -> Result<&DefinedName, RecomputeError> {
        self.wb.name(name).ok_or_else(|| RecomputeError::UnresolvedName {
            name: name.to_string(),
            at: at.clone(),
        })
    }

    fn eval(&mut self, expr: &WExpr, at: &CellKey) -> Result<f64, RecomputeError> {
        Ok(match expr {
            WExpr::Number(n) => *n,
            WExpr::Ref(r) => self.cell_value(&self.target(r, at))?,
            WExpr::Range(..) => return Err(RecomputeError::RangeInValueContext(at.clone())),
            WExpr::Name(name) => {
                let defined = self.defined(name, at)?;
                let addr = intersect(&defined.range, at.addr).ok_or_else(|| RecomputeError::NameIntersectionMiss {
                    name: name.clone(),
                    at: at.clone(),
                })?;
                let key = CellKey::new(&defined.sheet, addr);
                self.cell_value(&key)?
            }
            WExpr::Neg(inner) => -self.eval(inner, at)?,
            WExpr::Binary(op, lhs, rhs) => {
                let l = self.eval(lhs, at)?;
                let r = self.eval(rhs, at)?;
                op.apply(l, r)
            }
            WExpr::Func(_, args) => {
                let mut total = 0.0;
                for arg in args {
                    total += match arg {
                        WExpr::Name(name) => {
                            let defined = self.defined(name, at)?;
                            let keys: Vec<CellKey> =
                                defined.range.cells().map(|a| CellKey::new(&defined.sheet, a)).collect();
                            self.sum_cells(&keys)?
                        }
                        WExpr::Range(a, b) => {
                            let (a, b) = (self.target(a, at), self.target(b, at));
                            let range = CellRange {
                                start: CellAddr::new(a.addr.col.min(b.addr.col), a.addr.row.min(b.addr.row)),
                                end: CellAddr::new(a.addr.col.max(b.addr.col), a.addr.row.max(b.addr.row)),
                            };
                            let keys: Vec<CellKey> = range.cells().map(|c| CellKey::new(&a.sheet, c)).collect();
                            self.sum_cells(&keys)?
                        }
                        other => self.eval(other, at)?,
                    };
                }
                total
            }
        })
    }

    // Text cells inside a summed range are skipped, as spreadsheets do.
    fn sum_cells(&mut self, keys: &[CellKey]) -> Result<f64, RecomputeError> {
        let mut total = 0.0;
        for key in keys {
            match self.cell_value(key) {
                Ok(v) => total += v,
                Err(RecomputeError::NonNumeric(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(total)
    }
}

/// Resolves a name used as a single value from `at`: a single cell is
/// absolute, a horizontal run picks the referencing column, a vertical run
/// the referencing row.
fn intersect(range: &CellRange, at: CellAddr) -> Option<CellAddr> {
    if range.is_single() {
        return Some(range.start);
    }
    if range.start.row == range.end.row {
        return (range.start.col..=range.end.col)
            .contains(&at.col)
            .then(|| CellAddr::new(at.col, range.start.row));
    }
    if range.start.col == range.end.col {
        return (range.start.row..=range.end.row)
            .contains(&at.row)
            .then(|| CellAddr::new(range.start.col, at.row));
    }
    None
}
