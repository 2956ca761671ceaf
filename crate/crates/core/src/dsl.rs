//! The `.ssmi` model language: a line-oriented formula list.
//!
//! ```text
//! # comment
//! dimension Region = [South, East, North]
//! input Price = 375
//! param Distribution over Region = [48%, 23%, 29%]
//! calc "Total Demand" = DemParA * DemParB ^ -Price
//! calc out Profit over Region = Revenue - Total_Cost
//! ```
//!
//! Labels containing spaces are double-quoted. Expressions refer to other
//! variables by canonical name (or by quoted label). Numbers may carry a
//! leading `$`, `_` or `,` digit separators and a trailing `%`. In literal
//! lists a comma directly followed by three digits is read as a digit
//! separator, so list items that are grouped numbers need a space after the
//! separating comma.
//!
//! Operator precedence, tightest first: `^` (right-associative), unary minus,
//! `*` `/`, `+` `-`. A unary minus may appear directly as the right operand of
//! `^`, so `a ^ -b` means `a ^ (-b)` while `-a ^ b` means `-(a ^ b)`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::model::{mangle, AggFn, BinOp, Dimension, Expr, Model, ModelError, Variable, VariableKind};

/// Position of a token in the source. Line and column are 1-based and count
/// characters, not bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("{span}: {message}")]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
    /// Set when the text is well formed but the model it describes is not,
    /// such as a dependency cycle or a reference to an undeclared variable.
    pub invalid_model: Option<ModelError>,
}

impl ParseError {
    fn new(span: SourceSpan, message: impl Into<String>) -> Self {
        ParseError {
            span,
            message: message.into(),
            invalid_model: None,
        }
    }

    fn invalid(span: SourceSpan, error: ModelError) -> Self {
        ParseError {
            span,
            message: error.to_string(),
            invalid_model: Some(error),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Number { value: f64, text: String },
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Eq,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::Number { text, .. } => format!("number `{text}`"),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

fn is_minus(c: char) -> bool {
    matches!(c, '-' | '\u{2013}' | '\u{2212}')
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    lookahead: Vec<char>,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.chars().peekable(),
            lookahead: Vec::new(),
            line: 1,
            column: 1,
        }
    }

    fn peek_n(&mut self, n: usize) -> Option<char> {
        while self.lookahead.len() <= n {
            let c = self.chars.next()?;
            self.lookahead.push(c);
        }
        Some(self.lookahead[n])
    }

    fn peek(&mut self) -> Option<char> {
        self.peek_n(0)
    }

    fn bump(&mut self) -> Option<char> {
        let c = if self.lookahead.is_empty() {
            self.chars.next()
        } else {
            Some(self.lookahead.remove(0))
        }?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn span_from(&self, line: usize, column: usize) -> SourceSpan {
        let length = if self.line == line {
            (self.column - column).max(1)
        } else {
            1
        };
        SourceSpan { line, column, length }
    }

    fn tokenize(mut self) -> Result<Vec<Token>, ParseError> {
        let mut out = Vec::new();
        loop {
            let (line, column) = (self.line, self.column);
            let Some(c) = self.peek() else {
                out.push(Token {
                    tok: Tok::Eof,
                    span: SourceSpan {
                        line,
                        column,
                        length: 1,
                    },
                });
                return Ok(out);
            };
            let tok = match c {
                '\n' => {
                    self.bump();
                    Tok::Newline
                }
                c if c.is_whitespace() => {
                    self.bump();
                    continue;
                }
                '#' => {
                    while self.peek().is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                    continue;
                }
                '"' => self.string(line, column)?,
                '$' | '0'..='9' | '.' => self.number(line, column)?,
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut ident = String::new();
                    while let Some(c) = self.peek().filter(|c| c.is_ascii_alphanumeric() || *c == '_') {
                        ident.push(c);
                        self.bump();
                    }
                    Tok::Ident(ident)
                }
                c => {
                    self.bump();
                    match c {
                        '[' => Tok::LBracket,
                        ']' => Tok::RBracket,
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        ',' => Tok::Comma,
                        '=' => Tok::Eq,
                        '+' => Tok::Plus,
                        '*' => Tok::Star,
                        '/' => Tok::Slash,
                        '^' => Tok::Caret,
                        c if is_minus(c) => Tok::Minus,
                        c => {
                            return Err(ParseError::new(
                                self.span_from(line, column),
                                format!("unexpected character `{c}`"),
                            ))
                        }
                    }
                }
            };
            out.push(Token {
                tok,
                span: self.span_from(line, column),
            });
        }
    }

    fn string(&mut self, line: usize, column: usize) -> Result<Tok, ParseError> {
        self.bump();
        let mut text = String::new();
        loop {
            match self.bump() {
                Some('"') => return Ok(Tok::Str(text)),
                Some('\\') => match self.bump() {
                    Some(c @ ('"' | '\\')) => text.push(c),
                    _ => {
                        return Err(ParseError::new(
                            self.span_from(line, column),
                            "invalid escape in quoted label",
                        ))
                    }
                },
                Some('\n') | None => {
                    return Err(ParseError::new(
                        SourceSpan {
                            line,
                            column,
                            length: 1,
                        },
                        "unterminated quoted label",
                    ))
                }
                Some(c) => text.push(c),
            }
        }
    }

    fn number(&mut self, line: usize, column: usize) -> Result<Tok, ParseError> {
        let mut raw = String::new();
        let mut digits = String::new();
        if self.peek() == Some('$') {
            raw.push('$');
            self.bump();
        }
        let err = |lx: &Self, msg: &str| ParseError::new(lx.span_from(line, column), msg.to_string());
        let mut int_digits = 0;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                digits.push(c);
                raw.push(c);
                int_digits += 1;
                self.bump();
            } else if int_digits > 0
                && ((c == '_' && self.peek_n(1).is_some_and(|d| d.is_ascii_digit()))
                    || (c == ',' && self.is_digit_group()))
            {
                raw.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if self.peek() == Some('.') && self.peek_n(1).is_some_and(|d| d.is_ascii_digit()) {
            digits.push('.');
            raw.push('.');
            self.bump();
            while let Some(c) = self.peek().filter(char::is_ascii_digit) {
                digits.push(c);
                raw.push(c);
                self.bump();
            }
        } else if int_digits == 0 {
            return Err(err(self, "expected digits"));
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let sign = self.peek_n(1).filter(|c| *c == '+' || *c == '-');
            let first = if sign.is_some() { self.peek_n(2) } else { self.peek_n(1) };
            if first.is_some_and(|d| d.is_ascii_digit()) {
                for _ in 0..(1 + sign.is_some() as usize) {
                    let c = self.bump().unwrap_or('e');
                    digits.push(c);
                    raw.push(c);
                }
                while let Some(c) = self.peek().filter(char::is_ascii_digit) {
                    digits.push(c);
                    raw.push(c);
                    self.bump();
                }
            }
        }
        let mut value: f64 = digits.parse().map_err(|_| err(self, "malformed number"))?;
        if self.peek() == Some('%') {
            raw.push('%');
            self.bump();
            value /= 100.0;
        }
        if self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(err(self, "malformed number"));
        }
        if !value.is_finite() {
            return Err(err(self, "number out of range"));
        }
        Ok(Tok::Number { value, text: raw })
    }

    // A comma directly followed by exactly three digits is a thousands separator.
    fn is_digit_group(&mut self) -> bool {
        (1..=3).all(|i| self.peek_n(i).is_some_and(|c| c.is_ascii_digit()))
            && !self.peek_n(4).is_some_and(|c| c.is_ascii_digit())
    }
}

const KEYWORDS: [&str; 6] = ["dimension", "input", "param", "calc", "out", "over"];

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

struct PendingVar {
    var: Variable,
    label_span: SourceSpan,
    refs: Vec<(String, SourceSpan)>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let idx = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn span(&self) -> SourceSpan {
        self.tokens[self.pos].span
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        ParseError::new(
            self.span(),
            format!("expected {expected}, found {}", self.peek().describe()),
        )
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<SourceSpan, ParseError> {
        if *self.peek() == tok {
            Ok(self.next().span)
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn label(&mut self) -> Result<(String, SourceSpan), ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) | Tok::Str(s) => Ok((s, self.next().span)),
            _ => Err(self.unexpected("a label")),
        }
    }

    fn end_of_statement(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Newline => {
                self.next();
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => Err(self.unexpected("end of line")),
        }
    }

    fn literal(&mut self) -> Result<(f64, SourceSpan), ParseError> {
        let start = self.span();
        let negative = if *self.peek() == Tok::Minus {
            self.next();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Number { value, .. } => {
                self.next();
                Ok((if negative { -value } else { value }, start))
            }
            _ => Err(self.unexpected("a number")),
        }
    }

    fn literals(&mut self) -> Result<(Vec<f64>, bool, SourceSpan), ParseError> {
        let start = self.span();
        if *self.peek() != Tok::LBracket {
            let (v, _) = self.literal()?;
            return Ok((vec![v], false, start));
        }
        self.next();
        let mut out = Vec::new();
        loop {
            out.push(self.literal()?.0);
            match self.peek() {
                Tok::Comma => {
                    self.next();
                }
                Tok::RBracket => {
                    self.next();
                    return Ok((out, true, start));
                }
                _ => return Err(self.unexpected("`,` or `]`")),
            }
        }
    }

    fn over(&mut self, dimension: &Option<(Dimension, SourceSpan)>) -> Result<bool, ParseError> {
        if !matches!(self.peek(), Tok::Ident(k) if k == "over") {
            return Ok(false);
        }
        self.next();
        let (name, span) = self.label()?;
        match dimension {
            Some((dim, _)) if dim.name == name => Ok(true),
            _ => Err(ParseError::new(span, format!("undeclared dimension `{name}`"))),
        }
    }

    fn expr(&mut self, refs: &mut Vec<(String, SourceSpan)>) -> Result<Expr, ParseError> {
        let mut lhs = self.term(refs)?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.term(refs)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self, refs: &mut Vec<(String, SourceSpan)>) -> Result<Expr, ParseError> {
        let mut lhs = self.unary(refs)?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.unary(refs)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self, refs: &mut Vec<(String, SourceSpan)>) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.next();
            Ok(Expr::negate(self.unary(refs)?))
        } else {
            self.power(refs)
        }
    }

    fn power(&mut self, refs: &mut Vec<(String, SourceSpan)>) -> Result<Expr, ParseError> {
        let base = self.primary(refs)?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.next();
        // The exponent is itself a unary expression, so `^` is right-associative.
        let exponent = self.unary(refs)?;
        Ok(Expr::binary(BinOp::Pow, base, exponent))
    }

    fn primary(&mut self, refs: &mut Vec<(String, SourceSpan)>) -> Result<Expr, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Number { value, .. } => {
                self.next();
                Ok(Expr::Number(value))
            }
            Tok::LParen => {
                self.next();
                let inner = self.expr(refs)?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) if *self.peek_at(1) == Tok::LParen => {
                let agg = AggFn::from_name(&name)
                    .ok_or_else(|| ParseError::new(span, format!("unknown function `{name}`")))?;
                self.next();
                self.next();
                let arg_span = self.span();
                let arg = match self.peek().clone() {
                    Tok::Ident(s) | Tok::Str(s) if *self.peek_at(1) == Tok::RParen => {
                        self.next();
                        s
                    }
                    _ => {
                        return Err(ParseError::new(
                            arg_span,
                            "aggregate argument must be a single variable reference",
                        ))
                    }
                };
                self.next();
                let name = mangle(&arg).map_err(|e| ParseError::new(arg_span, e.to_string()))?;
                refs.push((name.clone(), arg_span));
                Ok(Expr::Agg(agg, name))
            }
            Tok::Ident(s) | Tok::Str(s) => {
                self.next();
                let name = mangle(&s).map_err(|e| ParseError::new(span, e.to_string()))?;
                refs.push((name.clone(), span));
                Ok(Expr::Var(name))
            }
            _ => Err(self.unexpected("an expression")),
        }
    }
}

/// Parses `.ssmi` source into a validated [`Model`].
pub fn parse_model(source: &str) -> Result<Model, ParseError> {
    let tokens = Lexer::new(source).tokenize()?;
    let mut p = Parser { tokens, pos: 0 };
    let mut dimension: Option<(Dimension, SourceSpan)> = None;
    let mut pending: Vec<PendingVar> = Vec::new();
    let mut names: BTreeMap<String, SourceSpan> = BTreeMap::new();

    loop {
        let keyword = match p.peek().clone() {
            Tok::Eof => break,
            Tok::Newline => {
                p.next();
                continue;
            }
            Tok::Ident(k) if KEYWORDS[..4].contains(&k.as_str()) => {
                p.next();
                k
            }
            _ => return Err(p.unexpected("`dimension`, `input`, `param` or `calc`")),
        };

        if keyword == "dimension" {
            let (name, name_span) = p.label()?;
            if dimension.is_some() {
                return Err(ParseError::new(name_span, "only one dimension is supported"));
            }
            p.expect(Tok::Eq, "`=`")?;
            p.expect(Tok::LBracket, "`[`")?;
            let mut instances: Vec<String> = Vec::new();
            loop {
                let span = p.span();
                let label = match p.peek().clone() {
                    Tok::Ident(s) | Tok::Str(s) => s,
                    Tok::Number { text, .. } => text,
                    _ => return Err(p.unexpected("an instance label")),
                };
                p.next();
                if instances.contains(&label) {
                    return Err(ParseError::new(span, format!("duplicate instance `{label}`")));
                }
                instances.push(label);
                match p.peek() {
                    Tok::Comma => {
                        p.next();
                    }
                    Tok::RBracket => {
                        p.next();
                        break;
                    }
                    _ => return Err(p.unexpected("`,` or `]`")),
                }
            }
            p.end_of_statement()?;
            dimension = Some((Dimension { name, instances }, name_span));
            continue;
        }

        let output = keyword == "calc"
            && matches!(p.peek(), Tok::Ident(k) if k == "out")
            && matches!(p.peek_at(1), Tok::Ident(_) | Tok::Str(_));
        if output {
            p.next();
        }
        let (label, label_span) = p.label()?;
        let name = mangle(&label).map_err(|e| ParseError::new(label_span, e.to_string()))?;
        if names.contains_key(&name) {
            return Err(ParseError::new(
                label_span,
                format!("`{label}` duplicates an existing variable named `{name}`"),
            ));
        }
        if crate::model::looks_like_cell_ref(&name) {
            return Err(ParseError::new(
                label_span,
                format!("name `{name}` reads as a cell reference; choose another label"),
            ));
        }
        names.insert(name.clone(), label_span);
        let repeating = p.over(&dimension)?;
        let cardinality = match (&dimension, repeating) {
            (Some((dim, _)), true) => dim.len(),
            _ => 1,
        };

        let kind = match (keyword.as_str(), output) {
            ("input", _) => VariableKind::Input,
            ("param", _) => VariableKind::Parameter,
            (_, true) => VariableKind::Output,
            _ => VariableKind::Calculated,
        };
        let mut var = Variable {
            label: label.clone(),
            name,
            kind,
            repeating,
            formula: None,
            literals: None,
        };
        let mut refs = Vec::new();
        if kind.has_formula() {
            p.expect(Tok::Eq, "`=`")?;
            var.formula = Some(p.expr(&mut refs)?);
        } else if kind == VariableKind::Parameter || *p.peek() == Tok::Eq {
            p.expect(Tok::Eq, "`=`")?;
            let (values, bracketed, span) = p.literals()?;
            if repeating && values.len() != cardinality {
                return Err(ParseError::new(
                    span,
                    format!(
                        "`{label}` repeats over {} instances but {} value(s) were given",
                        cardinality,
                        values.len()
                    ),
                ));
            }
            if !repeating && bracketed {
                return Err(ParseError::new(
                    span,
                    format!("scalar `{label}` takes a single value, not a list"),
                ));
            }
            var.literals = Some(values);
        }
        p.end_of_statement()?;
        pending.push(PendingVar { var, label_span, refs });
    }

    for pv in &pending {
        for (name, span) in &pv.refs {
            if !names.contains_key(name) {
                let error = ModelError::UnknownReference {
                    variable: pv.var.name.clone(),
                    reference: name.clone(),
                };
                return Err(ParseError::invalid(*span, error));
            }
        }
    }

    let spans: Vec<SourceSpan> = pending.iter().map(|p| p.label_span).collect();
    let dim_span = dimension.as_ref().map(|(_, s)| *s);
    let model = Model {
        dimension: dimension.map(|(d, _)| d),
        variables: pending.into_iter().map(|p| p.var).collect(),
    };
    model.validate().map_err(|e| {
        let span = model_error_span(&model, &e, &spans).or(dim_span).unwrap_or(SourceSpan {
            line: 1,
            column: 1,
            length: 1,
        });
        ParseError::invalid(span, e)
    })?;
    Ok(model)
}

fn model_error_span(model: &Model, err: &ModelError, spans: &[SourceSpan]) -> Option<SourceSpan> {
    let name = match err {
        ModelError::DuplicateName(n)
        | ModelError::NameLooksLikeCellRef(n)
        | ModelError::NoDimension(n)
        | ModelError::MissingFormula(n)
        | ModelError::UnexpectedFormula(n)
        | ModelError::MissingLiteral(n) => n,
        ModelError::LiteralCount { name, .. } => name,
        ModelError::UnknownReference { variable, .. } => variable,
        _ => return None,
    };
    model.index_of(name).and_then(|i| spans.get(i).copied())
}

fn is_bare_label(label: &str) -> bool {
    let mut chars = label.chars();
    let starts_ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
    starts_ok && chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && !KEYWORDS.contains(&label)
}

fn write_label(out: &mut String, label: &str) {
    if is_bare_label(label) {
        out.push_str(label);
    } else {
        out.push('"');
        for c in label.chars() {
            if c == '"' || c == '\\' {
                out.push('\\');
            }
            out.push(c);
        }
        out.push('"');
    }
}

fn write_literals(out: &mut String, values: &[f64], list: bool) {
    let items: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
    if list {
        out.push('[');
        out.push_str(&items.join(", "));
        out.push(']');
    } else {
        out.push_str(&items.join(", "));
    }
}

// Binding strength used when emitting; larger binds tighter.
fn precedence(expr: &Expr) -> u8 {
    match expr {
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Binary(BinOp::Pow, ..) => 4,
        Expr::Number(n) if *n < 0.0 => 3,
        _ => 5,
    }
}

fn write_expr(out: &mut String, expr: &Expr) {
    let wrap = |out: &mut String, e: &Expr, parens: bool| {
        if parens {
            out.push('(');
            write_expr(out, e);
            out.push(')');
        } else {
            write_expr(out, e);
        }
    };
    match expr {
        Expr::Number(n) => out.push_str(&format!("{n}")),
        Expr::Var(name) => out.push_str(name),
        Expr::Agg(agg, name) => {
            out.push_str(agg.name());
            out.push('(');
            out.push_str(name);
            out.push(')');
        }
        Expr::Neg(inner) => {
            out.push('-');
            wrap(out, inner, precedence(inner) < 3);
        }
        Expr::Binary(BinOp::Pow, base, exponent) => {
            wrap(out, base, precedence(base) <= 4);
            out.push_str(" ^ ");
            wrap(out, exponent, precedence(exponent) < 3);
        }
        Expr::Binary(op, lhs, rhs) => {
            let own = precedence(expr);
            wrap(out, lhs, precedence(lhs) < own);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            wrap(out, rhs, precedence(rhs) <= own);
        }
    }
}

/// Renders an expression in `.ssmi` syntax with minimal parentheses.
pub fn format_expr(expr: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, expr);
    out
}

/// Emits `.ssmi` text that parses back into a structurally equal model.
pub fn emit_model(model: &Model) -> String {
    let mut out = String::new();
    if let Some(dim) = &model.dimension {
        out.push_str("dimension ");
        write_label(&mut out, &dim.name);
        out.push_str(" = [");
        for (i, inst) in dim.instances.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write_label(&mut out, inst);
        }
        out.push_str("]\n\n");
    }
    for var in &model.variables {
        out.push_str(match var.kind {
            VariableKind::Input => "input ",
            VariableKind::Parameter => "param ",
            VariableKind::Calculated => "calc ",
            VariableKind::Output => "calc out ",
        });
        write_label(&mut out, &var.label);
        if var.repeating {
            if let Some(dim) = &model.dimension {
                out.push_str(" over ");
                write_label(&mut out, &dim.name);
            }
        }
        if let Some(expr) = &var.formula {
            out.push_str(" = ");
            write_expr(&mut out, expr);
        } else if let Some(values) = &var.literals {
            out.push_str(" = ");
            write_literals(&mut out, values, var.repeating);
        }
        out.push('\n');
    }
    out
}
