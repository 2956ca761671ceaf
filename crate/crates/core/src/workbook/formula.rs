//! Workbook formulas in A1 notation, parsed with spreadsheet precedence:
//! unary minus binds tighter than `^`, and `^` is left-associative.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use super::{column_index, column_letters, quote_sheet_name, CellAddr, MAX_ROWS};
use crate::model::{AggFn, BinOp, OpKind};

/// A cell reference as written in a formula. `sheet` is `None` for references
/// to the formula's own sheet.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CellRef {
    pub sheet: Option<String>,
    pub col: u32,
    pub row: u32,
    pub col_absolute: bool,
    pub row_absolute: bool,
}

impl CellRef {
    pub fn relative(addr: CellAddr) -> Self {
        CellRef {
            sheet: None,
            col: addr.col,
            row: addr.row,
            col_absolute: false,
            row_absolute: false,
        }
    }

    pub fn addr(&self) -> CellAddr {
        CellAddr::new(self.col, self.row)
    }

    pub fn is_relative(&self) -> bool {
        !self.col_absolute && !self.row_absolute
    }

    fn write_a1(&self, out: &mut String) {
        if let Some(sheet) = &self.sheet {
            out.push_str(&quote_sheet_name(sheet));
            out.push('!');
        }
        if self.col_absolute {
            out.push('$');
        }
        out.push_str(&column_letters(self.col));
        if self.row_absolute {
            out.push('$');
        }
        out.push_str(&self.row.to_string());
    }

    fn write_r1c1(&self, out: &mut String, at: CellAddr) {
        if let Some(sheet) = &self.sheet {
            out.push_str(&quote_sheet_name(sheet));
            out.push('!');
        }
        if self.row_absolute {
            out.push_str(&format!("R{}", self.row));
        } else {
            out.push_str(&format!("R[{}]", i64::from(self.row) - i64::from(at.row)));
        }
        if self.col_absolute {
            out.push_str(&format!("C{}", self.col));
        } else {
            out.push_str(&format!("C[{}]", i64::from(self.col) - i64::from(at.col)));
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WExpr {
    Number(f64),
    Ref(CellRef),
    Range(CellRef, CellRef),
    Name(String),
    Neg(Box<WExpr>),
    Binary(BinOp, Box<WExpr>, Box<WExpr>),
    Func(AggFn, Vec<WExpr>),
}

impl WExpr {
    pub fn binary(op: BinOp, lhs: WExpr, rhs: WExpr) -> WExpr {
        WExpr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Visits every cell reference (range endpoints included) with a flag
    /// telling whether it sits inside a function argument.
    pub fn visit_refs<'a>(&'a self, f: &mut impl FnMut(&'a CellRef, bool)) {
        self.visit(false, &mut |e, in_func| match e {
            WExpr::Ref(r) => f(r, in_func),
            WExpr::Range(a, b) => {
                f(a, in_func);
                f(b, in_func);
            }
            _ => {}
        });
    }

    /// Visits every name reference with the same flag as [`visit_refs`](Self::visit_refs).
    pub fn visit_names<'a>(&'a self, f: &mut impl FnMut(&'a str, bool)) {
        self.visit(false, &mut |e, in_func| {
            if let WExpr::Name(n) = e {
                f(n, in_func);
            }
        });
    }

    fn visit<'a>(&'a self, in_func: bool, f: &mut impl FnMut(&'a WExpr, bool)) {
        f(self, in_func);
        match self {
            WExpr::Neg(inner) => inner.visit(in_func, f),
            WExpr::Binary(_, lhs, rhs) => {
                lhs.visit(in_func, f);
                rhs.visit(in_func, f);
            }
            WExpr::Func(_, args) => args.iter().for_each(|a| a.visit(true, f)),
            _ => {}
        }
    }

    pub fn op_kinds(&self) -> BTreeSet<OpKind> {
        let mut out = BTreeSet::new();
        self.visit(false, &mut |e, _| match e {
            WExpr::Neg(_) => {
                out.insert(OpKind::Neg);
            }
            WExpr::Binary(op, ..) => {
                out.insert((*op).into());
            }
            WExpr::Func(agg, _) => {
                out.insert(OpKind::Func(*agg));
            }
            _ => {}
        });
        out
    }

    pub fn has_absolute_ref(&self) -> bool {
        let mut found = false;
        self.visit_refs(&mut |r, _| found |= !r.is_relative());
        found
    }

    fn precedence(&self) -> u8 {
        match self {
            WExpr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            WExpr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            WExpr::Binary(BinOp::Pow, ..) => 3,
            WExpr::Neg(_) => 4,
            WExpr::Number(n) if *n < 0.0 => 4,
            _ => 5,
        }
    }

    fn render(&self, out: &mut String, cell: &dyn Fn(&CellRef, &mut String)) {
        let wrap = |out: &mut String, e: &WExpr, parens: bool| {
            if parens {
                out.push('(');
            }
            e.render(out, cell);
            if parens {
                out.push(')');
            }
        };
        match self {
            WExpr::Number(n) => out.push_str(&format!("{n}")),
            WExpr::Ref(r) => cell(r, out),
            WExpr::Range(a, b) => {
                cell(a, out);
                out.push(':');
                cell(b, out);
            }
            WExpr::Name(n) => out.push_str(n),
            WExpr::Neg(inner) => {
                out.push('-');
                wrap(out, inner, inner.precedence() < 4);
            }
            WExpr::Binary(op, lhs, rhs) => {
                let own = self.precedence();
                wrap(out, lhs, lhs.precedence() < own);
                out.push_str(op.symbol());
                wrap(out, rhs, rhs.precedence() <= own);
            }
            WExpr::Func(agg, args) => {
                out.push_str(agg.name());
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    a.render(out, cell);
                }
                out.push(')');
            }
        }
    }
}

/// A parsed workbook formula.
#[derive(Clone, Debug, PartialEq)]
pub struct WFormula {
    pub expr: WExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("formula `{text}`: {message} at offset {offset}")]
pub struct FormulaError {
    pub text: String,
    pub offset: usize,
    pub message: String,
}

impl WFormula {
    pub fn new(expr: WExpr) -> Self {
        WFormula { expr }
    }

    /// Parses formula text; the leading `=` is optional.
    pub fn parse(text: &str) -> Result<WFormula, FormulaError> {
        let body = text.strip_prefix('=').unwrap_or(text);
        let offset = text.len() - body.len();
        let mut p = FormulaParser {
            src: body,
            pos: 0,
            full: text,
            base: offset,
        };
        p.skip_ws();
        let expr = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(WFormula { expr })
    }

    /// Renders the formula with relative references as `R[dr]C[dc]` offsets
    /// from `at` and absolute parts as `R<n>` / `C<n>`. Copies of one formula
    /// along a row produce identical strings.
    pub fn to_r1c1(&self, at: CellAddr) -> String {
        let mut out = String::new();
        self.expr.render(&mut out, &|r, out| r.write_r1c1(out, at));
        out
    }

    /// Formula text without the leading `=`, as stored in OOXML.
    pub fn body(&self) -> String {
        let mut out = String::new();
        self.expr.render(&mut out, &|r, out| r.write_a1(out));
        out
    }
}

impl fmt::Display for WFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "={}", self.body())
    }
}

/// Free-function form of [`WFormula::to_r1c1`].
pub fn normalize_r1c1(formula: &WFormula, at: CellAddr) -> String {
    formula.to_r1c1(at)
}

struct FormulaParser<'a> {
    src: &'a str,
    pos: usize,
    full: &'a str,
    base: usize,
}

impl FormulaParser<'_> {
    fn error(&self, message: &str) -> FormulaError {
        FormulaError {
            text: self.full.to_string(),
            offset: self.base + self.pos,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c == ' ') {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<WExpr, FormulaError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = WExpr::binary(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<WExpr, FormulaError> {
        let mut lhs = self.power()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = WExpr::binary(op, lhs, self.power()?);
        }
    }

    fn power(&mut self) -> Result<WExpr, FormulaError> {
        let mut lhs = self.unary()?;
        while self.eat('^') {
            lhs = WExpr::binary(BinOp::Pow, lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<WExpr, FormulaError> {
        if self.eat('-') {
            Ok(WExpr::Neg(Box::new(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<WExpr, FormulaError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("expected an operand")),
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(_) => self.reference_or_name(),
        }
    }

    fn number(&mut self) -> Result<WExpr, FormulaError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < bytes.len() && matches!(bytes[self.pos], b'e' | b'E') {
            let mut p = self.pos + 1;
            if p < bytes.len() && matches!(bytes[p], b'+' | b'-') {
                p += 1;
            }
            if p < bytes.len() && bytes[p].is_ascii_digit() {
                while p < bytes.len() && bytes[p].is_ascii_digit() {
                    p += 1;
                }
                self.pos = p;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(WExpr::Number)
            .map_err(|_| {
                self.pos = start;
                self.error("malformed number")
            })
    }

    fn sheet_prefix(&mut self) -> Result<Option<String>, FormulaError> {
        let rest = &self.src[self.pos..];
        if let Some(quoted) = rest.strip_prefix('\'') {
            let mut name = String::new();
            let mut chars = quoted.char_indices();
            while let Some((i, c)) = chars.next() {
                if c == '\'' {
                    if quoted[i + 1..].starts_with('\'') {
                        name.push('\'');
                        chars.next();
                        continue;
                    }
                    if !quoted[i + 1..].starts_with('!') {
                        return Err(self.error("expected `!` after quoted sheet name"));
                    }
                    self.pos += 1 + i + 2;
                    return Ok(Some(name));
                }
                name.push(c);
            }
            return Err(self.error("unterminated sheet name"));
        }
        let word_len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.'))
            .unwrap_or(rest.len());
        if word_len > 0 && rest[word_len..].starts_with('!') {
            self.pos += word_len + 1;
            return Ok(Some(rest[..word_len].to_string()));
        }
        Ok(None)
    }

    fn reference_or_name(&mut self) -> Result<WExpr, FormulaError> {
        let start = self.pos;
        let sheet = self.sheet_prefix()?;
        let word_start = self.pos;
        let rest = &self.src[self.pos..];
        let len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$'))
            .unwrap_or(rest.len());
        if len == 0 {
            return Err(self.error("expected a reference, name or number"));
        }
        let word = &rest[..len];
        self.pos += len;

        if let Some(r) = parse_cell_ref(word, sheet.clone()) {
            if self.src[self.pos..].starts_with(':') {
                self.pos += 1;
                let rest = &self.src[self.pos..];
                let len = rest
                    .find(|c: char| !(c.is_ascii_alphanumeric() || c == '$'))
                    .unwrap_or(rest.len());
                let end = parse_cell_ref(&rest[..len], sheet.clone())
                    .ok_or_else(|| self.error("expected a cell reference after `:`"))?;
                self.pos += len;
                return Ok(WExpr::Range(r, end));
            }
            return Ok(WExpr::Ref(r));
        }
        if word.contains('$') {
            self.pos = word_start;
            return Err(self.error("malformed cell reference"));
        }
        self.skip_ws();
        if self.peek() == Some('(') {
            if sheet.is_some() {
                self.pos = start;
                return Err(self.error("unexpected sheet prefix on function"));
            }
            let agg = AggFn::from_name(word).ok_or_else(|| {
                self.pos = word_start;
                self.error("unknown function")
            })?;
            self.pos += 1;
            let mut args = Vec::new();
            if !self.eat(')') {
                loop {
                    args.push(self.expr()?);
                    if self.eat(')') {
                        break;
                    }
                    if !self.eat(',') {
                        return Err(self.error("expected `,` or `)`"));
                    }
                }
            }
            return Ok(WExpr::Func(agg, args));
        }
        if sheet.is_some() {
            self.pos = start;
            return Err(self.error("sheet-scoped names are not supported"));
        }
        if !word.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
            self.pos = word_start;
            return Err(self.error("invalid name"));
        }
        Ok(WExpr::Name(word.to_string()))
    }
}

fn parse_cell_ref(word: &str, sheet: Option<String>) -> Option<CellRef> {
    let mut rest = word;
    let col_absolute = rest.starts_with('$');
    if col_absolute {
        rest = &rest[1..];
    }
    let letters = rest.bytes().take_while(u8::is_ascii_alphabetic).count();
    let col = column_index(&rest[..letters])?;
    rest = &rest[letters..];
    let row_absolute = rest.starts_with('$');
    if row_absolute {
        rest = &rest[1..];
    }
    if rest.is_empty() || rest.starts_with('0') || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let row: u32 = rest.parse().ok()?;
    if row == 0 || row > MAX_ROWS {
        return None;
    }
    Some(CellRef {
        sheet,
        col,
        row,
        col_absolute,
        row_absolute,
    })
}
