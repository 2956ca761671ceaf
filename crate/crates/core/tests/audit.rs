mod common;

use common::{fixture_path, model, random_case, regional_mutations};
use ssmi::audit::{audit, AuditOptions, CheckId};
use ssmi::workbook::{generate, read_json, CellContent, Workbook};
use ssmi::Severity;

fn load(name: &str) -> Workbook {
    read_json(&std::fs::read(fixture_path(name)).unwrap()).unwrap()
}

#[test]
fn structured_items_fixture_passes_clean() {
    let report = audit(&load("items_ssmi.wbjson"), None, &AuditOptions::default());
    assert!(report.findings.is_empty(), "{}", report.to_text());
    assert!(report.passed());
}

#[test]
fn unstructured_items_fixture_has_a_transitive_reference() {
    let report = audit(&load("items_unstructured.wbjson"), None, &AuditOptions::default());
    assert!(!report.passed());
    let b14 = report
        .findings
        .iter()
        .find(|f| f.cell == Some("B14".parse().unwrap()))
        .expect("finding at B14");
    assert_eq!((b14.check, b14.severity), (CheckId::A4, Severity::Error));
    assert!(b14.message.starts_with("transitive"), "{}", b14.message);
    let far: Vec<String> = report
        .findings
        .iter()
        .filter(|f| f.check == CheckId::A4 && f.message.starts_with("far"))
        .map(|f| f.cell.unwrap().to_string())
        .collect();
    assert_eq!(far, ["B10", "B11", "B15"]);
    assert_eq!(report.summary[&CheckId::A8], 3);
}

// The hand-built workbook charges delivery on every delivered item while the
// model charges the items kept, so the values part ways at the last block.
#[test]
fn structured_fixture_against_the_items_model() {
    let report = audit(
        &load("items_ssmi.wbjson"),
        Some(&model("items.ssmi")),
        &AuditOptions::default(),
    );
    let a9: Vec<String> = report
        .findings
        .iter()
        .filter(|f| f.check == CheckId::A9)
        .map(|f| f.cell.unwrap().to_string())
        .collect();
    assert_eq!(a9, ["B16"]);
}

#[test]
fn generated_workbooks_pass() {
    let m = model("regional_profit.ssmi");
    let report = audit(&generate(&m).unwrap(), Some(&m), &AuditOptions::default());
    assert!(report.passed());
    assert!(report
        .findings
        .iter()
        .all(|f| f.check == CheckId::A5 && f.severity == Severity::Warn));
    assert_eq!(report.findings.len(), 1);
    assert!(!audit(&generate(&m).unwrap(), Some(&m), &AuditOptions { strict: true }).passed());

    for seed in 0..100 {
        let (m, _) = random_case(seed);
        let report = audit(&generate(&m).unwrap(), Some(&m), &AuditOptions::default());
        assert!(report.errors().next().is_none(), "seed {seed}\n{}", report.to_text());
    }
}

#[test]
fn every_mutation_is_caught_by_its_check() {
    let m = model("regional_profit.ssmi");
    let wb = generate(&m).unwrap();
    let corpus = regional_mutations();
    assert!(corpus.len() >= 20);
    for mutation in &corpus {
        let report = audit(&mutation.apply(&wb), Some(&m), &AuditOptions::default());
        assert!(
            report.errors().any(|f| f.check == mutation.expected),
            "{}: expected {}\n{}",
            mutation.description,
            mutation.expected,
            report.to_text()
        );
    }
}

#[test]
fn any_single_column_edit_breaks_copy_consistency() {
    let wb = generate(&model("regional_profit.ssmi")).unwrap();
    let sheet = wb.sheet("Model Region").unwrap();
    let mut edits = 0;
    for (addr, cell) in &sheet.cells {
        let CellContent::Formula(text) = &cell.content else {
            continue;
        };
        let mut mutated = wb.clone();
        let mut changed = cell.clone();
        changed.content = CellContent::Formula(format!("{text}+0"));
        mutated.sheet_mut("Model Region").unwrap().set(*addr, changed);
        let report = audit(&mutated, None, &AuditOptions::default());
        let a7 = report
            .findings
            .iter()
            .find(|f| f.check == CheckId::A7)
            .unwrap_or_else(|| panic!("{addr}"));
        assert_eq!(a7.cell, Some(*addr));
        edits += 1;
    }
    // seven three-row blocks across three regions
    assert_eq!(edits, 7 * 3 * 3);
}

#[test]
fn audit_is_deterministic() {
    let wb = load("items_unstructured.wbjson");
    let a = audit(&wb, None, &AuditOptions::default());
    let b = audit(&wb, None, &AuditOptions::default());
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());
}
