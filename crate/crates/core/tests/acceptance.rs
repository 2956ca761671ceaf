//! One line per acceptance criterion; exits non-zero when any fails.

mod common;

use std::collections::BTreeMap;
use std::io::{Cursor, Read};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use common::{fixture_path, model, random_case, regional_mutations, rel_diff};
use ssmi::audit::{audit, AuditOptions, CheckId};
use ssmi::dsl::{format_expr, parse_model};
use ssmi::eval::evaluate;
use ssmi::transform::{complexity_check, decompose};
use ssmi::workbook::{generate, read_json, recompute, write_json, xlsx_bytes, CellContent, Workbook};
use ssmi::{Model, Severity};

type Outcome = Result<(), String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn scalar(v: &ssmi::eval::Valuation, name: &str) -> Result<f64, String> {
    v.get(name)
        .and_then(|x| x.scalar())
        .ok_or_else(|| format!("{name} is not a scalar"))
}

fn regional_scenario() -> Outcome {
    let start = Instant::now();
    let source = std::fs::read_to_string(fixture_path("regional_profit.ssmi")).map_err(|e| e.to_string())?;
    let m = parse_model(&source).map_err(|e| e.to_string())?;
    let v = evaluate(&m, &BTreeMap::from([("Price".to_string(), 375.0)])).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let demand = scalar(&v, "Total_Demand")?;
    ensure!((demand - 13_062.0).abs() <= 1.0, "Total_Demand = {demand}");
    let revenue = v.get("Revenue").ok_or("no Revenue")?.as_slice();
    let want = [2_351_110.34, 1_126_573.70, 1_420_462.50];
    ensure!(revenue.len() == 3, "Revenue has {} elements", revenue.len());
    for (got, want) in revenue.iter().zip(want) {
        ensure!((got - want).abs() <= 0.005, "Revenue {got} vs {want}");
    }
    ensure!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    Ok(())
}

fn cost_to_the_cent() -> Outcome {
    let v = evaluate(&model("total_cost_split.ssmi"), &BTreeMap::new()).map_err(|e| e.to_string())?;
    let cents = |n: &str| scalar(&v, n).map(|x| (x * 100.0).round() as i64);
    ensure!(
        cents("Variable_Cost")? == 7_021_136,
        "Variable_Cost = {}",
        scalar(&v, "Variable_Cost")?
    );
    ensure!(
        cents("Total_Cost")? == 8_284_936,
        "Total_Cost = {}",
        scalar(&v, "Total_Cost")?
    );
    let v = evaluate(&model("total_cost.ssmi"), &BTreeMap::new()).map_err(|e| e.to_string())?;
    ensure!(
        (scalar(&v, "Total_Cost")? * 100.0).round() as i64 == 8_284_936,
        "undecomposed Total_Cost"
    );
    Ok(())
}

fn items_values_and_layout() -> Outcome {
    let m = model("items.ssmi");
    let v = evaluate(&m, &BTreeMap::new()).map_err(|e| e.to_string())?;
    for (name, want) in [
        ("Number_of_Items_Sold", 950.0),
        ("Total_Sales", 11_400.0),
        ("Total_Delivery_Cost", 7_600.0),
    ] {
        ensure!(scalar(&v, name)? == want, "{name} = {}", scalar(&v, name)?);
    }
    let wb = generate(&m).map_err(|e| e.to_string())?;
    for (addr, want) in [
        ("B6", "=Number_of_Items_Delivered"),
        ("B7", "=Number_of_Items_Returned"),
        ("B8", "=B6-B7"),
        ("B10", "=Number_of_Items_Sold"),
        ("B11", "=Unit_Price"),
        ("B12", "=B10*B11"),
        ("B15", "=Unit_Delivery_Cost"),
        ("B16", "=B14*B15"),
    ] {
        let got = wb.formula_at("Model", addr);
        ensure!(got == Some(want), "Model!{addr} = {got:?}, expected {want}");
    }
    for addr in ["B8", "B12", "B16"] {
        let cell = wb.cell("Model", addr.parse().unwrap()).ok_or("missing definition")?;
        ensure!(cell.bold_italic, "Model!{addr} is not bold-italic");
    }
    Ok(())
}

fn load(name: &str) -> Result<Workbook, String> {
    read_json(&std::fs::read(fixture_path(name)).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

fn audit_discrimination() -> Outcome {
    let report = audit(&load("items_unstructured.wbjson")?, None, &AuditOptions::default());
    ensure!(!report.passed(), "unstructured workbook passed");
    let hit = report.findings.iter().any(|f| {
        f.check == CheckId::A4
            && f.severity == Severity::Error
            && f.cell == Some("B14".parse().unwrap())
            && f.message.starts_with("transitive")
    });
    ensure!(hit, "no transitive A4 error at B14:\n{}", report.to_text());
    let report = audit(&load("items_ssmi.wbjson")?, None, &AuditOptions::default());
    ensure!(
        report.passed() && report.findings.is_empty(),
        "structured workbook:\n{}",
        report.to_text()
    );
    Ok(())
}

fn sound_round_trip(m: &Model, inputs: &BTreeMap<String, f64>) -> Outcome {
    let wb = generate(m).map_err(|e| e.to_string())?;
    let report = audit(&wb, Some(m), &AuditOptions::default());
    ensure!(report.errors().next().is_none(), "{}", report.to_text());
    let r = recompute(&wb, inputs).map_err(|e| e.to_string())?;
    let v = evaluate(m, inputs).map_err(|e| e.to_string())?;
    for var in &m.variables {
        let name = wb.name(&var.name).ok_or_else(|| format!("no name {}", var.name))?;
        let want = v.get(&var.name).unwrap().as_slice();
        let got = r.name_values(name);
        ensure!(got.len() == want.len(), "{}: length", var.name);
        for (g, w) in got.iter().zip(want) {
            let g = g.ok_or_else(|| format!("{} has an empty cell", var.name))?;
            ensure!(rel_diff(g, *w) <= 1e-9, "{}: {g} vs {w}", var.name);
        }
    }
    Ok(())
}

fn round_trip_soundness() -> Outcome {
    sound_round_trip(
        &model("regional_profit.ssmi"),
        &BTreeMap::from([("Price".to_string(), 375.0)]),
    )?;
    for seed in 0..100 {
        let (m, inputs) = random_case(seed);
        sound_round_trip(&m, &inputs).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(())
}

fn mutation_completeness() -> Outcome {
    let m = model("regional_profit.ssmi");
    let wb = generate(&m).map_err(|e| e.to_string())?;
    let corpus = regional_mutations();
    ensure!(corpus.len() >= 20, "only {} mutations", corpus.len());
    for mutation in &corpus {
        let report = audit(&mutation.apply(&wb), Some(&m), &AuditOptions::default());
        ensure!(
            report.errors().any(|f| f.check == mutation.expected),
            "{} ({}!{}) not reported as {}",
            mutation.description,
            mutation.sheet,
            mutation.addr,
            mutation.expected
        );
    }
    for sheet in wb
        .sheets
        .iter()
        .filter(|s| s.kind == ssmi::workbook::SheetKind::ModelRepeating)
    {
        for (addr, cell) in &sheet.cells {
            let CellContent::Formula(text) = &cell.content else {
                continue;
            };
            let mut mutated = wb.clone();
            let mut changed = cell.clone();
            changed.content = CellContent::Formula(format!("{text}*1"));
            mutated.sheet_mut(&sheet.name).unwrap().set(*addr, changed);
            let report = audit(&mutated, None, &AuditOptions::default());
            ensure!(
                report.errors().any(|f| f.check == CheckId::A7 && f.cell == Some(*addr)),
                "editing {}!{addr} alone went unnoticed",
                sheet.name
            );
        }
    }
    Ok(())
}

fn decompose_semantics() -> Outcome {
    for seed in 0..200 {
        let (m, inputs) = random_case(seed);
        let d = decompose(&m).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure!(
            complexity_check(&d, true).is_empty(),
            "seed {seed}: decomposed model still too complex"
        );
        let before = evaluate(&m, &inputs).map_err(|e| e.to_string())?;
        let after = evaluate(&d, &inputs).map_err(|e| e.to_string())?;
        for var in &m.variables {
            let a = before.get(&var.name).unwrap().as_slice();
            let b = after
                .get(&var.name)
                .ok_or_else(|| format!("seed {seed}: {} lost", var.name))?
                .as_slice();
            for (x, y) in a.iter().zip(b) {
                ensure!(rel_diff(*x, *y) <= 1e-12, "seed {seed} {}: {x} vs {y}", var.name);
            }
        }
    }
    let d = decompose(&model("total_cost.ssmi")).map_err(|e| e.to_string())?;
    let calcs: Vec<String> = d
        .variables
        .iter()
        .filter(|v| v.is_calculated())
        .map(|v| format!("{} = {}", v.name, format_expr(v.formula.as_ref().unwrap())))
        .collect();
    ensure!(
        calcs
            == [
                "Total_Cost_term_1 = Quantity * Unit_Cost",
                "Total_Cost = Fixed_Cost + Total_Cost_term_1"
            ],
        "split was {calcs:?}"
    );
    Ok(())
}

fn format_stability() -> Outcome {
    let wb = generate(&model("regional_profit.ssmi")).map_err(|e| e.to_string())?;
    let once = write_json(&wb);
    let again = write_json(&read_json(&once).map_err(|e| e.to_string())?);
    ensure!(once == again, "JSON write/read/write changed bytes");

    let bytes = xlsx_bytes(&wb).map_err(|e| e.to_string())?;
    ensure!(
        bytes == xlsx_bytes(&wb).map_err(|e| e.to_string())?,
        "xlsx output is not deterministic"
    );
    let mut zip = zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| e.to_string())?;
    let mut xml = String::new();
    zip.by_name("xl/workbook.xml")
        .map_err(|e| e.to_string())?
        .read_to_string(&mut xml)
        .map_err(|e| e.to_string())?;
    let mut reader = quick_xml::Reader::from_str(&xml);
    let mut names = Vec::new();
    loop {
        match reader.read_event().map_err(|e| e.to_string())? {
            quick_xml::events::Event::Eof => break,
            quick_xml::events::Event::Start(e) if e.name().as_ref() == b"definedName" => {
                let attr = e
                    .try_get_attribute("name")
                    .map_err(|e| e.to_string())?
                    .ok_or("definedName without a name")?;
                names.push(attr.unescape_value().map_err(|e| e.to_string())?.into_owned());
            }
            _ => {}
        }
    }
    let m = model("regional_profit.ssmi");
    ensure!(names.len() == 17, "{} defined names", names.len());
    for var in &m.variables {
        ensure!(names.contains(&var.name), "no defined name for {}", var.name);
    }
    let entries: Vec<&String> = names.iter().filter(|n| n.ends_with("__entry")).collect();
    ensure!(entries == ["Price__entry"], "entry names {entries:?}");
    Ok(())
}

fn main() -> ExitCode {
    std::panic::set_hook(Box::new(|_| {}));
    let criteria: [Criterion; 8] = [
        ("regional profit scenario at price 375", regional_scenario),
        ("fixed plus variable cost to the cent", cost_to_the_cent),
        ("items values and generated block layout", items_values_and_layout),
        (
            "audit separates unstructured from structured items workbooks",
            audit_discrimination,
        ),
        (
            "generated workbooks audit clean and recompute like the evaluator",
            round_trip_soundness,
        ),
        ("every scripted mutation is caught by its check", mutation_completeness),
        ("decomposition keeps values and removes complexity", decompose_semantics),
        ("JSON and xlsx output are stable", format_stability),
    ];
    let mut failed = 0;
    for (i, (title, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|payload| {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(()) => println!("PASS {} {title}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {title}: {why}", i + 1);
            }
        }
    }
    println!("note: criterion 8 also calls for opening the xlsx in a spreadsheet application; see the README");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
