//! Workbook representation, layout generation and serialization.
//!
//! A workbook has one interface sheet, one parameters sheet and model sheets
//! made of definition blocks: `k` reference rows, each holding `=Name` in
//! every data column, followed by one bold-italic definition row whose
//! formula only uses relative references to the reference rows above it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

mod formula;
mod generate;
mod json;
mod recompute;
mod xlsx;

pub use formula::{normalize_r1c1, CellRef, FormulaError, WExpr, WFormula};
pub use generate::{
    generate, generate_with_blocks, GenerateError, INTERFACE_SHEET, MODEL_SHEET, PARAMETERS_SHEET,
    REPEATING_MODEL_FIRST_ROW, SCALAR_MODEL_FIRST_ROW,
};
pub use json::{read_json, write_json, SchemaError};
pub use recompute::{recompute, CellKey, RecomputeError, Recomputed};
pub use xlsx::{write_xlsx, xlsx_bytes, XlsxError, BOLD_ITALIC_STYLE};

/// Largest column index in an OOXML worksheet (`XFD`).
pub const MAX_COLUMNS: u32 = 16_384;
/// Largest row index in an OOXML worksheet.
pub const MAX_ROWS: u32 = 1_048_576;

/// Suffix of the names given to interface entry cells.
pub const ENTRY_SUFFIX: &str = "__entry";

/// A cell position; row and column are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellAddr {
    pub row: u32,
    pub col: u32,
}

impl CellAddr {
    pub fn new(col: u32, row: u32) -> Self {
        CellAddr { row, col }
    }
}

pub fn column_letters(mut col: u32) -> String {
    let mut out = Vec::new();
    while col > 0 {
        let rem = (col - 1) % 26;
        out.push(b'A' + rem as u8);
        col = (col - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

pub fn column_index(letters: &str) -> Option<u32> {
    if letters.is_empty() || letters.len() > 3 {
        return None;
    }
    let mut col: u32 = 0;
    for b in letters.bytes() {
        if !b.is_ascii_alphabetic() {
            return None;
        }
        col = col * 26 + u32::from(b.to_ascii_uppercase() - b'A' + 1);
    }
    (col <= MAX_COLUMNS).then_some(col)
}

impl fmt::Display for CellAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", column_letters(self.col), self.row)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddrParseError(pub String);

impl fmt::Display for AddrParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}` is not an A1 cell address", self.0)
    }
}

impl std::error::Error for AddrParseError {}

impl FromStr for CellAddr {
    type Err = AddrParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let split = s.find(|c: char| c.is_ascii_digit()).unwrap_or(s.len());
        let (letters, digits) = s.split_at(split);
        let col = column_index(letters).ok_or_else(|| AddrParseError(s.to_string()))?;
        if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(AddrParseError(s.to_string()));
        }
        let row: u32 = digits.parse().map_err(|_| AddrParseError(s.to_string()))?;
        if row > MAX_ROWS {
            return Err(AddrParseError(s.to_string()));
        }
        Ok(CellAddr { row, col })
    }
}

/// A rectangular cell range, inclusive on both ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellRange {
    pub start: CellAddr,
    pub end: CellAddr,
}

impl CellRange {
    pub fn single(addr: CellAddr) -> Self {
        CellRange { start: addr, end: addr }
    }

    pub fn row_span(row: u32, first_col: u32, last_col: u32) -> Self {
        CellRange {
            start: CellAddr::new(first_col, row),
            end: CellAddr::new(last_col, row),
        }
    }

    pub fn is_single(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, addr: CellAddr) -> bool {
        (self.start.row..=self.end.row).contains(&addr.row) && (self.start.col..=self.end.col).contains(&addr.col)
    }

    /// Cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = CellAddr> + '_ {
        (self.start.row..=self.end.row)
            .flat_map(move |row| (self.start.col..=self.end.col).map(move |col| CellAddr { row, col }))
    }

    pub fn len(&self) -> usize {
        ((self.end.row - self.start.row + 1) * (self.end.col - self.start.col + 1)) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for CellRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_single() {
            write!(f, "{}", self.start)
        } else {
            write!(f, "{}:{}", self.start, self.end)
        }
    }
}

impl FromStr for CellRange {
    type Err = AddrParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = match s.split_once(':') {
            Some((a, b)) => (a.parse::<CellAddr>()?, b.parse::<CellAddr>()?),
            None => {
                let a = s.parse::<CellAddr>()?;
                (a, a)
            }
        };
        if a.row > b.row || a.col > b.col {
            return Err(AddrParseError(s.to_string()));
        }
        Ok(CellRange { start: a, end: b })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellContent {
    Literal(f64),
    /// A1 formula text including the leading `=`.
    Formula(String),
    Label(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub content: CellContent,
    pub bold_italic: bool,
}

impl Cell {
    pub fn literal(v: f64) -> Self {
        Cell {
            content: CellContent::Literal(v),
            bold_italic: false,
        }
    }

    pub fn label(text: impl Into<String>) -> Self {
        Cell {
            content: CellContent::Label(text.into()),
            bold_italic: false,
        }
    }

    pub fn formula(text: impl Into<String>) -> Self {
        Cell {
            content: CellContent::Formula(text.into()),
            bold_italic: false,
        }
    }

    pub fn styled(mut self, bold_italic: bool) -> Self {
        self.bold_italic = bold_italic;
        self
    }

    pub fn formula_text(&self) -> Option<&str> {
        match &self.content {
            CellContent::Formula(f) => Some(f),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SheetKind {
    Interface,
    Parameters,
    Model,
    ModelRepeating,
}

impl SheetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SheetKind::Interface => "interface",
            SheetKind::Parameters => "parameters",
            SheetKind::Model => "model",
            SheetKind::ModelRepeating => "model_repeating",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "interface" => SheetKind::Interface,
            "parameters" => SheetKind::Parameters,
            "model" => SheetKind::Model,
            "model_repeating" => SheetKind::ModelRepeating,
            _ => return None,
        })
    }

    pub fn is_model(self) -> bool {
        matches!(self, SheetKind::Model | SheetKind::ModelRepeating)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sheet {
    pub name: String,
    pub kind: SheetKind,
    pub cells: BTreeMap<CellAddr, Cell>,
}

impl Sheet {
    pub fn new(name: impl Into<String>, kind: SheetKind) -> Self {
        Sheet {
            name: name.into(),
            kind,
            cells: BTreeMap::new(),
        }
    }

    pub fn get(&self, addr: CellAddr) -> Option<&Cell> {
        self.cells.get(&addr)
    }

    pub fn set(&mut self, addr: CellAddr, cell: Cell) {
        self.cells.insert(addr, cell);
    }

    pub fn max_col(&self) -> u32 {
        self.cells.keys().map(|a| a.col).max().unwrap_or(0)
    }

    /// Cells of one row, left to right.
    pub fn row(&self, row: u32) -> impl Iterator<Item = (&CellAddr, &Cell)> {
        self.cells
            .range(CellAddr { row, col: 0 }..=CellAddr { row, col: u32::MAX })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DefinedName {
    pub name: String,
    pub sheet: String,
    pub range: CellRange,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Workbook {
    pub sheets: Vec<Sheet>,
    pub names: Vec<DefinedName>,
}

impl Workbook {
    pub fn sheet(&self, name: &str) -> Option<&Sheet> {
        self.sheets.iter().find(|s| s.name == name)
    }

    pub fn sheet_mut(&mut self, name: &str) -> Option<&mut Sheet> {
        self.sheets.iter_mut().find(|s| s.name == name)
    }

    pub fn sheet_index(&self, name: &str) -> Option<usize> {
        self.sheets.iter().position(|s| s.name == name)
    }

    pub fn name(&self, name: &str) -> Option<&DefinedName> {
        self.names.iter().find(|n| n.name == name)
    }

    pub fn cell(&self, sheet: &str, addr: CellAddr) -> Option<&Cell> {
        self.sheet(sheet)?.get(addr)
    }

    /// Formula text of a cell given as `"B6"`, for tests and diagnostics.
    pub fn formula_at(&self, sheet: &str, addr: &str) -> Option<&str> {
        let addr: CellAddr = addr.parse().ok()?;
        self.cell(sheet, addr)?.formula_text()
    }
}

/// A laid-out definition block: reference rows followed by the definition row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DefinitionBlock {
    pub sheet: String,
    pub reference_rows: Vec<u32>,
    pub definition_row: u32,
    pub defined_variable: Option<String>,
}

impl DefinitionBlock {
    pub fn first_row(&self) -> u32 {
        self.reference_rows.first().copied().unwrap_or(self.definition_row)
    }

    pub fn contains_row(&self, row: u32) -> bool {
        (self.first_row()..=self.definition_row).contains(&row)
    }

    pub fn is_reference_row(&self, row: u32) -> bool {
        self.reference_rows.contains(&row)
    }
}

/// Sheet name as it must appear in a formula or defined-name reference.
pub fn quote_sheet_name(name: &str) -> String {
    let plain = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !crate::model::looks_like_cell_ref(name);
    if plain {
        name.to_string()
    } else {
        format!("'{}'", name.replace('\'', "''"))
    }
}
