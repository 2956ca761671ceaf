use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn ssmi(dir: &Path, args: &[&std::ffi::OsStr]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssmi"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

macro_rules! run {
    ($dir:expr $(, $arg:expr)* $(,)?) => {
        ssmi($dir, &[$(std::ffi::OsStr::new(&$arg)),*])
    };
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

#[test]
fn compile_writes_both_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run!(
        dir.path(),
        "compile",
        fixture("regional_profit.ssmi"),
        "--json",
        "t.wbjson",
        "--xlsx",
        "t.xlsx"
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("warn A5 Total_Demand"));
    let json = std::fs::read(dir.path().join("t.wbjson")).unwrap();
    assert_eq!(json, std::fs::read(fixture("regional_profit.wbjson")).unwrap());
    assert!(std::fs::read(dir.path().join("t.xlsx")).unwrap().starts_with(b"PK"));

    let again = run!(
        dir.path(),
        "compile",
        fixture("regional_profit.ssmi"),
        "--json",
        "u.wbjson"
    );
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(std::fs::read(dir.path().join("u.wbjson")).unwrap(), json);
    let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(leftovers, 3);
}

#[test]
fn compile_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = run!(dir.path(), "compile", fixture("cycle.ssmi"), "--json", "c.wbjson");
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("A -> B"), "{}", text(&out.stderr));

    let out = run!(dir.path(), "compile", "missing.ssmi");
    assert_eq!(out.status.code(), Some(3));

    let out = run!(
        dir.path(),
        "compile",
        fixture("regional_profit.ssmi"),
        "--strict",
        "--json",
        "s.wbjson"
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("error A5 Total_Demand"));

    std::fs::write(dir.path().join("bad.ssmi"), "calc = 1\n").unwrap();
    let out = run!(dir.path(), "compile", "bad.ssmi");
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("bad.ssmi:1:"), "{}", text(&out.stderr));

    let out = run!(dir.path(), "compile");
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn config_supplies_outputs_and_strictness() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("ssmi.toml"),
        "[compile]\njson = \"from_config.wbjson\"\n",
    )
    .unwrap();
    let out = run!(dir.path(), "compile", fixture("items.ssmi"));
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(dir.path().join("from_config.wbjson").is_file());

    std::fs::write(dir.path().join("strict.toml"), "strict = true\n").unwrap();
    let out = run!(
        dir.path(),
        "--config",
        "strict.toml",
        "compile",
        fixture("regional_profit.ssmi")
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());

    std::fs::write(dir.path().join("typo.toml"), "stirct = true\n").unwrap();
    let out = run!(dir.path(), "--config", "typo.toml", "eval", fixture("items.ssmi"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn audit_verdicts_and_formats() {
    let dir = tempfile::tempdir().unwrap();
    let out = run!(dir.path(), "audit", fixture("items_ssmi.wbjson"));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(text(&out.stdout), "verdict: pass (0 errors, 0 warnings)\n");

    let out = run!(dir.path(), "audit", fixture("items_unstructured.wbjson"));
    assert_eq!(out.status.code(), Some(1));
    assert!(
        text(&out.stdout).contains("error A4 Model!B14: transitive"),
        "{}",
        text(&out.stdout)
    );

    let out = run!(
        dir.path(),
        "audit",
        fixture("items_unstructured.wbjson"),
        "--format",
        "json"
    );
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"], "fail");
    let findings = report["findings"].as_array().unwrap();
    assert!(!findings.is_empty());
    for f in findings {
        let mut keys: Vec<&str> = f.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["cell", "check", "message", "severity", "sheet"]);
        assert!(["error", "warn"].contains(&f["severity"].as_str().unwrap()));
        assert!(f["check"].as_str().unwrap().starts_with('A'));
    }

    let out = run!(
        dir.path(),
        "audit",
        fixture("regional_profit.wbjson"),
        "--model",
        fixture("regional_profit.ssmi")
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stdout));
    let out = run!(
        dir.path(),
        "audit",
        fixture("regional_profit.wbjson"),
        "--model",
        fixture("regional_profit.ssmi"),
        "--strict"
    );
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(dir.path().join("broken.wbjson"), "{\"sheets\": 3, \"names\": []}").unwrap();
    let out = run!(dir.path(), "audit", "broken.wbjson");
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("/sheets"), "{}", text(&out.stderr));
}

#[test]
fn eval_reports_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let out = run!(
        dir.path(),
        "eval",
        fixture("regional_profit.ssmi"),
        "--set",
        "Price=375",
        "--report",
        "Total_Demand"
    );
    assert_eq!(out.status.code(), Some(0));
    let stdout = text(&out.stdout);
    let fields: Vec<&str> = stdout.split_whitespace().collect();
    assert_eq!(fields[0], "Total_Demand");
    assert!((fields[1].parse::<f64>().unwrap() - 13_062.0).abs() < 1.0);
    assert_eq!(fields[2], "13,062");

    let out = run!(
        dir.path(),
        "eval",
        fixture("regional_profit.ssmi"),
        "--set",
        "Price=375",
        "--report",
        "Revenue"
    );
    let lines: Vec<String> = text(&out.stdout).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 3);
    for (line, (region, want)) in
        lines
            .iter()
            .zip([("South", 2_351_110.34), ("East", 1_126_573.70), ("North", 1_420_462.50)])
    {
        let fields: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(fields[0], format!("Revenue[{region}]"));
        assert!((fields[1].parse::<f64>().unwrap() - want).abs() <= 0.005, "{line}");
    }

    let out = run!(dir.path(), "eval", fixture("regional_profit.ssmi"));
    let names: Vec<String> = text(&out.stdout)
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().to_string())
        .collect();
    assert_eq!(
        names,
        ["Profit[South]", "Profit[East]", "Profit[North]", "Total_Profit"]
    );

    for bad in [
        ["--report", "Nope"],
        ["--set", "Nope=1"],
        ["--set", "Price"],
        ["--set", "Price=cheap"],
        ["--set", "Distribution=1"],
    ] {
        let out = run!(dir.path(), "eval", fixture("regional_profit.ssmi"), bad[0], bad[1]);
        assert_eq!(out.status.code(), Some(2), "{bad:?}");
    }
}

#[test]
fn decompose_and_graph() {
    let dir = tempfile::tempdir().unwrap();
    let out = run!(dir.path(), "decompose", fixture("total_cost.ssmi"), "-o", "d.ssmi");
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::read(dir.path().join("d.ssmi")).unwrap(),
        std::fs::read(fixture("total_cost.decomposed.ssmi")).unwrap()
    );
    let out = run!(dir.path(), "decompose", fixture("total_cost_split.ssmi"));
    let once = out.stdout;
    std::fs::write(dir.path().join("split.ssmi"), &once).unwrap();
    let out = run!(dir.path(), "decompose", "split.ssmi");
    assert_eq!(out.stdout, once);

    std::fs::write(
        dir.path().join("collide.ssmi"),
        "param a = 1\nparam b = 2\ncalc \"X term 1\" = a\ncalc X = a + b * 2\n",
    )
    .unwrap();
    let out = run!(dir.path(), "decompose", "collide.ssmi", "-o", "never.ssmi");
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("never.ssmi").exists());

    let out = run!(dir.path(), "graph", fixture("regional_profit.ssmi"), "-o", "g.dot");
    assert_eq!(out.status.code(), Some(0));
    let dot = std::fs::read_to_string(dir.path().join("g.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("subgraph cluster_Region").count(), 1);
}
