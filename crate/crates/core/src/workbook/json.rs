//! Canonical JSON form of a workbook (`.wbjson`).
//!
//! ```text
//! {"names":[{"n":..,"range":"B7:D7","sheet":..}],
//!  "sheets":[{"cells":{"B6":{"f":"=B5*B6","s":"bi"},"A1":{"l":"Model"},"B3":{"v":375}},
//!             "kind":"model","name":"Model"}]}
//! ```
//!
//! Object keys are sorted and integral numbers carry no fraction, so the same
//! workbook always serializes to the same bytes.

use std::collections::BTreeSet;

use serde_json::{Map, Number, Value};
use thiserror::Error;

use super::{Cell, CellAddr, CellContent, CellRange, DefinedName, Sheet, SheetKind, Workbook};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pointer}: {message}")]
pub struct SchemaError {
    /// JSON pointer to the offending value; empty for the document root.
    pub pointer: String,
    pub message: String,
}

fn schema_err(pointer: impl Into<String>, message: impl Into<String>) -> SchemaError {
    SchemaError {
        pointer: pointer.into(),
        message: message.into(),
    }
}

fn number(v: f64) -> Value {
    const EXACT: f64 = 9_007_199_254_740_992.0;
    if v.fract() == 0.0 && v.abs() < EXACT && !(v == 0.0 && v.is_sign_negative()) {
        Value::Number(Number::from(v as i64))
    } else {
        Number::from_f64(v).map_or(Value::Null, Value::Number)
    }
}

/// Serializes a workbook. Non-finite literals, which no generated workbook
/// contains, are written as `null` and rejected by [`read_json`].
pub fn write_json(wb: &Workbook) -> Vec<u8> {
    let sheets: Vec<Value> = wb
        .sheets
        .iter()
        .map(|sheet| {
            let cells: Map<String, Value> = sheet
                .cells
                .iter()
                .map(|(addr, cell)| {
                    let mut obj = Map::new();
                    match &cell.content {
                        CellContent::Formula(f) => obj.insert("f".into(), Value::String(f.clone())),
                        CellContent::Literal(v) => obj.insert("v".into(), number(*v)),
                        CellContent::Label(l) => obj.insert("l".into(), Value::String(l.clone())),
                    };
                    if cell.bold_italic {
                        obj.insert("s".into(), Value::String("bi".into()));
                    }
                    (addr.to_string(), Value::Object(obj))
                })
                .collect();
            let mut obj = Map::new();
            obj.insert("name".into(), Value::String(sheet.name.clone()));
            obj.insert("kind".into(), Value::String(sheet.kind.as_str().into()));
            obj.insert("cells".into(), Value::Object(cells));
            Value::Object(obj)
        })
        .collect();
    let names: Vec<Value> = wb
        .names
        .iter()
        .map(|n| {
            let mut obj = Map::new();
            obj.insert("n".into(), Value::String(n.name.clone()));
            obj.insert("sheet".into(), Value::String(n.sheet.clone()));
            obj.insert("range".into(), Value::String(n.range.to_string()));
            Value::Object(obj)
        })
        .collect();
    let mut root = Map::new();
    root.insert("sheets".into(), Value::Array(sheets));
    root.insert("names".into(), Value::Array(names));
    let mut out = serde_json::to_vec_pretty(&Value::Object(root)).expect("in-memory JSON serialization");
    out.push(b'\n');
    out
}

fn escape_pointer(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn object<'v>(v: &'v Value, at: &str, keys: &[&str]) -> Result<&'v Map<String, Value>, SchemaError> {
    let obj = v.as_object().ok_or_else(|| schema_err(at, "expected an object"))?;
    if let Some(k) = obj.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(schema_err(format!("{at}/{}", escape_pointer(k)), "unknown key"));
    }
    Ok(obj)
}

fn string<'v>(obj: &'v Map<String, Value>, key: &str, at: &str) -> Result<&'v str, SchemaError> {
    let path = format!("{at}/{key}");
    obj.get(key)
        .ok_or_else(|| schema_err(&path, "missing"))?
        .as_str()
        .ok_or_else(|| schema_err(&path, "expected a string"))
}

fn array<'v>(obj: &'v Map<String, Value>, key: &str, at: &str) -> Result<&'v Vec<Value>, SchemaError> {
    let path = format!("{at}/{key}");
    obj.get(key)
        .ok_or_else(|| schema_err(&path, "missing"))?
        .as_array()
        .ok_or_else(|| schema_err(&path, "expected an array"))
}

fn read_cell(v: &Value, at: &str) -> Result<Cell, SchemaError> {
    let obj = object(v, at, &["f", "v", "l", "s"])?;
    let present: Vec<&str> = ["f", "v", "l"].into_iter().filter(|k| obj.contains_key(*k)).collect();
    if present.len() != 1 {
        return Err(schema_err(at, "a cell needs exactly one of `f`, `v`, `l`"));
    }
    let content = match present[0] {
        "f" => {
            let f = string(obj, "f", at)?;
            if !f.starts_with('=') {
                return Err(schema_err(format!("{at}/f"), "formula text must start with `=`"));
            }
            CellContent::Formula(f.to_string())
        }
        "v" => {
            let n = obj["v"]
                .as_f64()
                .filter(|n| n.is_finite())
                .ok_or_else(|| schema_err(format!("{at}/v"), "expected a finite number"))?;
            CellContent::Literal(n)
        }
        _ => CellContent::Label(string(obj, "l", at)?.to_string()),
    };
    let bold_italic = match obj.get("s") {
        None => false,
        Some(Value::String(s)) if s == "bi" => true,
        Some(_) => return Err(schema_err(format!("{at}/s"), "the only style is \"bi\"")),
    };
    Ok(Cell { content, bold_italic })
}

fn read_sheet(v: &Value, at: &str) -> Result<Sheet, SchemaError> {
    let obj = object(v, at, &["name", "kind", "cells"])?;
    let name = string(obj, "name", at)?;
    if name.is_empty() {
        return Err(schema_err(format!("{at}/name"), "sheet name is empty"));
    }
    let kind_text = string(obj, "kind", at)?;
    let kind = SheetKind::parse(kind_text)
        .ok_or_else(|| schema_err(format!("{at}/kind"), format!("unknown sheet kind `{kind_text}`")))?;
    let cells_at = format!("{at}/cells");
    let cells = obj
        .get("cells")
        .ok_or_else(|| schema_err(&cells_at, "missing"))?
        .as_object()
        .ok_or_else(|| schema_err(&cells_at, "expected an object"))?;
    let mut sheet = Sheet::new(name, kind);
    for (addr_text, cell) in cells {
        let cell_at = format!("{cells_at}/{}", escape_pointer(addr_text));
        let addr: CellAddr = addr_text
            .parse()
            .map_err(|e: super::AddrParseError| schema_err(&cell_at, e.to_string()))?;
        sheet.set(addr, read_cell(cell, &cell_at)?);
    }
    Ok(sheet)
}

/// Parses and validates a `.wbjson` document.
pub fn read_json(bytes: &[u8]) -> Result<Workbook, SchemaError> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| schema_err("", format!("invalid JSON: {e}")))?;
    let obj = object(&root, "", &["sheets", "names"])?;
    let mut wb = Workbook::default();
    let mut sheet_names = BTreeSet::new();
    for (i, v) in array(obj, "sheets", "")?.iter().enumerate() {
        let at = format!("/sheets/{i}");
        let sheet = read_sheet(v, &at)?;
        if !sheet_names.insert(sheet.name.clone()) {
            return Err(schema_err(
                format!("{at}/name"),
                format!("duplicate sheet `{}`", sheet.name),
            ));
        }
        wb.sheets.push(sheet);
    }
    for kind in [SheetKind::Interface, SheetKind::Parameters] {
        let count = wb.sheets.iter().filter(|s| s.kind == kind).count();
        if count != 1 {
            return Err(schema_err(
                "/sheets",
                format!("expected exactly one {} sheet, found {count}", kind.as_str()),
            ));
        }
    }
    let mut seen = BTreeSet::new();
    for (i, v) in array(obj, "names", "")?.iter().enumerate() {
        let at = format!("/names/{i}");
        let n = object(v, &at, &["n", "sheet", "range"])?;
        let name = string(n, "n", &at)?;
        if name.is_empty() || !seen.insert(name.to_string()) {
            return Err(schema_err(
                format!("{at}/n"),
                format!("empty or duplicate name `{name}`"),
            ));
        }
        let sheet = string(n, "sheet", &at)?;
        if !sheet_names.contains(sheet) {
            return Err(schema_err(format!("{at}/sheet"), format!("unknown sheet `{sheet}`")));
        }
        let range_text = string(n, "range", &at)?;
        let range: CellRange = range_text
            .parse()
            .map_err(|e: super::AddrParseError| schema_err(format!("{at}/range"), e.to_string()))?;
        wb.names.push(DefinedName {
            name: name.to_string(),
            sheet: sheet.to_string(),
            range,
        });
    }
    Ok(wb)
}
