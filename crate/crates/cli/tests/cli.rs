use std::fs;
use std::process::{Command, Output};

use tempfile::TempDir;

const PROGRAM: &str = r#"accel "opengemm"

func @f() {
  %0 = const 4096 : i64
  %1 = const 8 : i64
  for %2 = 0 to 64 step 8 {
    %3 = mul %2, %1 : i64
    %4 = setup "opengemm" (addr_a = %0, addr_b = %3) : state<"opengemm">
    %5 = launch %4 ops = 8192 : token<"opengemm">
    await %5
  }
}
"#;

fn accfg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_accfg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn identity_pipeline_prints_canonical_ir() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "p.ir", PROGRAM);
    let o = accfg(&["opt", &f, "--passes", ""]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), PROGRAM);
}

#[test]
fn full_pipeline_shrinks_per_iteration_fields() {
    let o = accfg(&["opt", "--bench", "opengemm", "--size", "128", "--all", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let passes: Vec<&str> = v["log"].as_array().unwrap().iter().map(|e| e["pass"].as_str().unwrap()).collect();
    assert_eq!(passes.len(), 9);
    let dir = TempDir::new().unwrap();
    let opt = write(&dir, "opt.ir", v["ir"].as_str().unwrap());
    let writes_per_launch = |args: &[&str]| {
        let v: serde_json::Value = serde_json::from_str(&stdout(&accfg(args))).unwrap();
        v["config_writes"].as_f64().unwrap() / v["launches"].as_f64().unwrap()
    };
    let base = writes_per_launch(&["sim", "--bench", "opengemm", "--size", "128", "--format", "json"]);
    let after = writes_per_launch(&["sim", &opt, "--accel", "opengemm", "--format", "json"]);
    assert!(after < base, "{base} -> {after}");
}

#[test]
fn missing_file_is_an_input_error() {
    assert_eq!(accfg(&["opt", "/nonexistent/p.ir"]).status.code(), Some(2));
    assert_eq!(accfg(&["sim", "/nonexistent/p.ir", "--accel", "opengemm"]).status.code(), Some(2));
}

#[test]
fn invalid_inputs_exit_two() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.ir", "func @f() {\n  %0 = add %1, %1 : i32\n}\n");
    assert_eq!(accfg(&["opt", &bad]).status.code(), Some(2));
    let twice = write(
        &dir,
        "twice.ir",
        "accel \"a\"\nfunc @f() {\n  %0 = setup \"a\" () : state<\"a\">\n  %1 = launch %0 ops = 1 : token<\"a\">\n  await %1\n  await %1\n}\n",
    );
    let o = accfg(&["opt", &twice]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[double-await]"));
    let f = write(&dir, "p.ir", PROGRAM);
    assert_eq!(accfg(&["opt", &f, "--passes", "nope"]).status.code(), Some(2));
    // No descriptor for the declared accelerator.
    assert_eq!(accfg(&["sim", &f]).status.code(), Some(2));
    assert_eq!(accfg(&["sim", &f, "--accel", "missing-preset"]).status.code(), Some(2));
    // Both sources at once.
    assert_eq!(accfg(&["sim", &f, "--bench", "opengemm", "--size", "32"]).status.code(), Some(2));
    assert_eq!(accfg(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn simulation_error_exits_one() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "p.ir",
        "accel \"opengemm\"\n\nfunc @f() {\n  %0 = const 1 : i64\n  %1 = setup \"opengemm\" (no_such_field = %0) : state<\"opengemm\">\n}\n",
    );
    assert_eq!(accfg(&["sim", &f, "--accel", "opengemm"]).status.code(), Some(1));
}

#[test]
fn empty_program_simulates_to_zero() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "e.ir", "func @f() {\n}\n");
    let o = accfg(&["sim", &f]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("total_cycles=0\n") && s.contains("total_ops=0\n"), "{s}");
}

#[test]
fn optimized_sequential_run_takes_fewer_cycles() {
    let cycles = |extra: &[&str]| {
        let mut args = vec!["sim", "--bench", "gemmini", "--size", "64", "--format", "json"];
        args.extend_from_slice(extra);
        let v: serde_json::Value = serde_json::from_str(&stdout(&accfg(&args))).unwrap();
        v["total_cycles"].as_u64().unwrap()
    };
    assert!(cycles(&["--all"]) < cycles(&["--passes", "trace"]));
}

#[test]
fn timeline_csv_has_lane_rows() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "p.ir", PROGRAM);
    let out = dir.path().join("t.csv");
    let o = accfg(&["sim", &f, "--accel", "opengemm", "--timeline", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("start_cycle,end_cycle,lane"));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.iter().any(|r| r.ends_with(",accel-busy")), "{csv}");
    assert!(rows.iter().all(|r| r.split(',').count() == 3));
}

#[test]
fn sim_csv_is_one_header_and_one_row() {
    let o = accfg(&["sim", "--bench", "opengemm", "--size", "32", "--format", "csv"]);
    let s = stdout(&o);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("total_cycles,setup_cycles,calc_cycles,"));
    assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
}

#[test]
fn roofline_csv_schema_and_bounds() {
    let o = accfg(&["roofline", "--bench", "gemmini", "--size", "64", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(
        lines[0],
        "label,i_oc,perf_ops_per_cycle,bound,roofline_seq_at_ioc,roofline_conc_at_ioc"
    );
    assert!(lines[1].starts_with("baseline,") && lines[1].contains(",configuration-bound,"), "{s}");

    let s = stdout(&accfg(&["roofline", "--bench", "opengemm", "--size", "128", "--format", "csv"]));
    let bound = |label: &str| {
        s.lines()
            .find(|l| l.starts_with(label))
            .unwrap()
            .split(',')
            .nth(3)
            .unwrap()
            .to_string()
    };
    assert_eq!(bound("baseline,"), "configuration-bound");
    assert_eq!(bound("dedup,"), "compute-bound");
}

fn report_json(args: &[&str]) -> serde_json::Value {
    let mut a = vec!["report", "--format", "json"];
    a.extend_from_slice(args);
    let o = accfg(&a);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&stdout(&o)).unwrap()
}

#[test]
fn report_sweep_is_ordered_and_deterministic() {
    let a = accfg(&["report", "--accel", "opengemm", "--format", "csv"]);
    let b = accfg(&["report", "--accel", "opengemm", "--format", "csv"]);
    assert_eq!(a.stdout, b.stdout);
    let s = stdout(&a);
    let sizes: Vec<&str> = s.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(sizes, ["32", "64", "128", "256", "geomean"]);
    let v = report_json(&["--accel", "opengemm"]);
    assert!(v["geomean_full_speedup"].as_f64().unwrap() >= 1.5);
}

#[test]
fn single_size_geomean_is_that_speedup() {
    let v = report_json(&["--accel", "opengemm", "--sizes", "64"]);
    let row = &v["rows"][0];
    for (g, r) in [("geomean_full_speedup", "full_speedup"), ("geomean_dedup_speedup", "dedup_speedup")] {
        let (g, r) = (v[g].as_f64().unwrap(), row[r].as_f64().unwrap());
        assert!((g - r).abs() <= 1e-12 * r, "{g} vs {r}");
    }
}

#[test]
fn sequential_sweep_overlap_columns_equal_dedup() {
    let v = report_json(&["--accel", "gemmini", "--sizes", "32,64"]);
    for row in v["rows"].as_array().unwrap() {
        assert_eq!(row["dedup_perf"], row["full_perf"]);
    }
}

#[test]
fn random_is_seeded() {
    let a = accfg(&["random", "--seed", "7"]);
    let b = accfg(&["random", "--seed", "7"]);
    let c = accfg(&["random", "--seed", "8"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let p = accfg::parse_program(&stdout(&a)).unwrap();
    accfg::verify(&p).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&stdout(&accfg(&["random", "--seed", "7", "--format", "json"]))).unwrap();
    assert_eq!(v["program"].as_str().unwrap(), stdout(&a));
    assert_eq!(v["descriptors"].as_array().unwrap().len(), 1);
}

#[test]
fn gen_rejects_program_file() {
    assert_eq!(accfg(&["gen", "x.ir", "--bench", "opengemm", "--size", "32"]).status.code(), Some(2));
    let o = accfg(&["gen", "--bench", "opengemm", "--size", "32"]);
    assert!(stdout(&o).starts_with("accel \"opengemm\""));
}
