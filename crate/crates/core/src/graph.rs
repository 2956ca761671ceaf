//! Graphviz rendering of a model's dependency graph.
//!
//! Inputs are boxes, parameters triangles, calculated variables circles and
//! outputs ellipses. Repeating variables sit in one dashed cluster named
//! after the dimension; edges run from a variable to the variables using it.

use std::fmt::Write as _;

use crate::model::{Model, Variable, VariableKind};

fn quote(text: &str) -> String {
    format!("\"{}\"", text.replace('\\', "\\\\").replace('"', "\\\""))
}

fn shape(kind: VariableKind) -> &'static str {
    match kind {
        VariableKind::Input => "box",
        VariableKind::Parameter => "triangle",
        VariableKind::Calculated => "circle",
        VariableKind::Output => "ellipse",
    }
}

fn node(out: &mut String, indent: &str, var: &Variable) {
    let _ = writeln!(
        out,
        "{indent}{} [label={}, shape={}];",
        quote(&var.name),
        quote(&var.label),
        shape(var.kind)
    );
}

pub fn to_dot(model: &Model) -> String {
    let mut out = String::from("digraph model {\n    rankdir=LR;\n");
    for var in model.variables.iter().filter(|v| !v.repeating) {
        node(&mut out, "    ", var);
    }
    if let Some(dim) = &model.dimension {
        let repeating: Vec<&Variable> = model.variables.iter().filter(|v| v.repeating).collect();
        if !repeating.is_empty() {
            let ident: String = dim
                .name
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
                .collect();
            let _ = writeln!(out, "    subgraph cluster_{ident} {{");
            let _ = writeln!(out, "        label={};", quote(&dim.name));
            out.push_str("        style=dashed;\n");
            for var in repeating {
                node(&mut out, "        ", var);
            }
            out.push_str("    }\n");
        }
    }
    for var in &model.variables {
        if let Some(formula) = &var.formula {
            for dep in formula.references() {
                let _ = writeln!(out, "    {} -> {};", quote(dep), quote(&var.name));
            }
        }
    }
    out.push_str("}\n");
    out
}
