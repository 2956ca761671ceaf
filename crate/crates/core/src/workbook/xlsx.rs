//! Minimal SpreadsheetML package writer.
//!
//! Strings are stored inline, formulas carry cached values when the workbook
//! recomputes cleanly, and the workbook asks for a full recalculation on load.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Cursor, Write};
use std::path::Path;

use thiserror::Error;
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipWriter};

use super::recompute::{recompute, Recomputed};
use super::{column_letters, quote_sheet_name, CellContent, Sheet, Workbook};

const MAIN_NS: &str = "http://schemas.openxmlformats.org/spreadsheetml/2006/main";
const REL_NS: &str = "http://schemas.openxmlformats.org/officeDocument/2006/relationships";
const PKG_REL_NS: &str = "http://schemas.openxmlformats.org/package/2006/relationships";
const MAX_SHEET_NAME: usize = 31;

#[derive(Debug, Error)]
pub enum XlsxError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("zip: {0}")]
    Zip(#[from] zip::result::ZipError),
    #[error("sheet name `{0}` is not allowed in a spreadsheet file (at most 31 characters, none of []:*?/\\)")]
    InvalidSheetName(String),
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn check_sheet_name(name: &str) -> Result<(), XlsxError> {
    let bad = name.chars().count() > MAX_SHEET_NAME
        || name.contains(['[', ']', ':', '*', '?', '/', '\\'])
        || name.starts_with('\'')
        || name.ends_with('\'');
    if bad {
        Err(XlsxError::InvalidSheetName(name.to_string()))
    } else {
        Ok(())
    }
}

fn content_types(sheets: usize) -> String {
    let mut out = String::from(
        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<Types xmlns="http://schemas.openxmlformats.org/package/2006/content-types"><Default Extension="rels" ContentType="application/vnd.openxmlformats-package.relationships+xml"/><Default Extension="xml" ContentType="application/xml"/><Override PartName="/xl/workbook.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml"/><Override PartName="/xl/styles.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.styles+xml"/>"#,
    );
    for i in 1..=sheets {
        let _ = write!(
            out,
            r#"<Override PartName="/xl/worksheets/sheet{i}.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.worksheet+xml"/>"#
        );
    }
    out.push_str("</Types>");
    out
}

fn root_rels() -> String {
    format!(
        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<Relationships xmlns="{PKG_REL_NS}"><Relationship Id="rId1" Type="{REL_NS}/officeDocument" Target="xl/workbook.xml"/></Relationships>"#
    )
}

fn workbook_rels(sheets: usize) -> String {
    let mut out = format!(
        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<Relationships xmlns="{PKG_REL_NS}">"#
    );
    for i in 1..=sheets {
        let _ = write!(
            out,
            r#"<Relationship Id="rId{i}" Type="{REL_NS}/worksheet" Target="worksheets/sheet{i}.xml"/>"#
        );
    }
    let _ = write!(
        out,
        r#"<Relationship Id="rId{}" Type="{REL_NS}/styles" Target="styles.xml"/></Relationships>"#,
        sheets + 1
    );
    out
}

fn workbook_xml(wb: &Workbook) -> String {
    let mut out = format!(
        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<workbook xmlns="{MAIN_NS}" xmlns:r="{REL_NS}"><sheets>"#
    );
    for (i, sheet) in wb.sheets.iter().enumerate() {
        let _ = write!(
            out,
            r#"<sheet name="{}" sheetId="{}" r:id="rId{}"/>"#,
            escape(&sheet.name),
            i + 1,
            i + 1
        );
    }
    out.push_str("</sheets>");
    if !wb.names.is_empty() {
        out.push_str("<definedNames>");
        for n in &wb.names {
            let abs = |a: super::CellAddr| format!("${}${}", column_letters(a.col), a.row);
            let mut target = format!("{}!{}", quote_sheet_name(&n.sheet), abs(n.range.start));
            if !n.range.is_single() {
                let _ = write!(target, ":{}", abs(n.range.end));
            }
            let _ = write!(
                out,
                r#"<definedName name="{}">{}</definedName>"#,
                escape(&n.name),
                escape(&target)
            );
        }
        out.push_str("</definedNames>");
    }
    out.push_str(r#"<calcPr calcId="0" fullCalcOnLoad="1"/></workbook>"#);
    out
}

const STYLES: &str = r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<styleSheet xmlns="http://schemas.openxmlformats.org/spreadsheetml/2006/main"><fonts count="2"><font><sz val="11"/><name val="Calibri"/></font><font><b/><i/><sz val="11"/><name val="Calibri"/></font></fonts><fills count="2"><fill><patternFill patternType="none"/></fill><fill><patternFill patternType="gray125"/></fill></fills><borders count="1"><border><left/><right/><top/><bottom/><diagonal/></border></borders><cellStyleXfs count="1"><xf numFmtId="0" fontId="0" fillId="0" borderId="0"/></cellStyleXfs><cellXfs count="2"><xf numFmtId="0" fontId="0" fillId="0" borderId="0" xfId="0"/><xf numFmtId="0" fontId="1" fillId="0" borderId="0" xfId="0" applyFont="1"/></cellXfs><cellStyles count="1"><cellStyle name="Normal" xfId="0" builtinId="0"/></cellStyles></styleSheet>"#;

/// Style index of the bold-italic cell format in `styles.xml`.
pub const BOLD_ITALIC_STYLE: u32 = 1;

fn sheet_xml(sheet: &Sheet, cached: Option<&Recomputed>) -> String {
    let mut rows: BTreeMap<u32, String> = BTreeMap::new();
    for (addr, cell) in &sheet.cells {
        let row = rows.entry(addr.row).or_default();
        let style = if cell.bold_italic {
            format!(r#" s="{BOLD_ITALIC_STYLE}""#)
        } else {
            String::new()
        };
        match &cell.content {
            CellContent::Literal(v) => {
                let _ = write!(row, r#"<c r="{addr}"{style}><v>{v}</v></c>"#);
            }
            CellContent::Label(text) => {
                let space = if text.trim() != text {
                    r#" xml:space="preserve""#
                } else {
                    ""
                };
                let _ = write!(
                    row,
                    r#"<c r="{addr}"{style} t="inlineStr"><is><t{space}>{}</t></is></c>"#,
                    escape(text)
                );
            }
            CellContent::Formula(text) => {
                let body = escape(text.strip_prefix('=').unwrap_or(text));
                match cached.and_then(|r| r.get(&sheet.name, *addr)) {
                    Some(v) => {
                        let _ = write!(row, r#"<c r="{addr}"{style}><f>{body}</f><v>{v}</v></c>"#);
                    }
                    None => {
                        let _ = write!(row, r#"<c r="{addr}"{style}><f>{body}</f></c>"#);
                    }
                }
            }
        }
    }
    let mut out = format!(
        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<worksheet xmlns="{MAIN_NS}"><sheetData>"#
    );
    for (r, cells) in rows {
        let _ = write!(out, r#"<row r="{r}">{cells}</row>"#);
    }
    out.push_str("</sheetData></worksheet>");
    out
}

/// Builds the package in memory. The output is deterministic: entries are
/// written in a fixed order with a fixed timestamp.
pub fn xlsx_bytes(wb: &Workbook) -> Result<Vec<u8>, XlsxError> {
    for sheet in &wb.sheets {
        check_sheet_name(&sheet.name)?;
    }
    let cached = recompute(wb, &BTreeMap::new()).ok();
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(DateTime::default());
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    let put = |zip: &mut ZipWriter<Cursor<Vec<u8>>>, name: &str, body: &str| -> Result<(), XlsxError> {
        zip.start_file(name, options)?;
        zip.write_all(body.as_bytes())?;
        Ok(())
    };
    put(&mut zip, "[Content_Types].xml", &content_types(wb.sheets.len()))?;
    put(&mut zip, "_rels/.rels", &root_rels())?;
    put(&mut zip, "xl/workbook.xml", &workbook_xml(wb))?;
    put(&mut zip, "xl/_rels/workbook.xml.rels", &workbook_rels(wb.sheets.len()))?;
    put(&mut zip, "xl/styles.xml", STYLES)?;
    for (i, sheet) in wb.sheets.iter().enumerate() {
        put(
            &mut zip,
            &format!("xl/worksheets/sheet{}.xml", i + 1),
            &sheet_xml(sheet, cached.as_ref()),
        )?;
    }
    Ok(zip.finish()?.into_inner())
}

pub fn write_xlsx(wb: &Workbook, path: impl AsRef<Path>) -> Result<(), XlsxError> {
    std::fs::write(path, xlsx_bytes(wb)?)?;
    Ok(())
}
