//! Compiler and auditor for structured spreadsheet models.
//!
//! A model is written as a formula list in the `.ssmi` language, checked as a
//! dependency graph, laid out as a three-tier workbook of definition blocks
//! and evaluated numerically. Workbooks can be audited against the structural
//! rules that generated ones satisfy by construction.
//!
//! ```
//! let model = ssmi::dsl::parse_model("input Price = 10\ncalc out Twice = Price * 2\n").unwrap();
//! let wb = ssmi::workbook::generate(&model).unwrap();
//! let report = ssmi::audit::audit(&wb, Some(&model), &Default::default());
//! assert!(report.passed());
//! ```

pub mod audit;
pub mod dsl;
pub mod eval;
pub mod graph;
pub mod model;
pub mod transform;
pub mod workbook;

pub use model::{mangle, Model};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Severity of a finding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warn,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warn => "warn",
            Severity::Error => "error",
        })
    }
}
