use accfg::accel::{AcceleratorDescriptor, CostModel, FieldSpec, Scheme};
use accfg::ir::{walk_ops, OpKind, Program};
use accfg::random::{random_case, random_descriptor};
use accfg::sim::{emit_timeline, simulate, simulate_with, Lane, SimOptions};
use accfg::{parse_program, trace_equivalent};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn two_field(scheme: Scheme) -> AcceleratorDescriptor {
    AcceleratorDescriptor {
        name: "x".into(),
        scheme,
        peak_perf: 16.0,
        mem_bandwidth: None,
        fields: vec![
            FieldSpec { name: "a".into(), bytes: 4 },
            FieldSpec { name: "b".into(), bytes: 4 },
        ],
        cost: CostModel {
            write_cost: 4,
            arith_cost: 0,
            launch_cost: 1,
            await_poll_cost: 0,
            write_group: 1,
        },
    }
}

const PIPELINED: &str = r#"accel "x"
func @main() {
  %c = const 1 : i64
  %s0 = setup "x" (a = %c, b = %c) : state<"x">
  %t0 = launch %s0 ops = 256 : token<"x">
  %s1 = setup "x" (a = %c, b = %c) from %s0 : state<"x">
  await %t0
  %t1 = launch %s1 ops = 256 : token<"x">
  await %t1
}"#;

#[test]
fn concurrent_two_launch_hand_timeline() {
    // setup 0-8, issue 8-9, job 9-25; staged setup 9-17 overlaps the job,
    // await idles 17-25; issue 25-26, job 26-42, final await idles 26-42.
    let p = parse_program(PIPELINED).unwrap();
    let r = simulate_with(&p, &[two_field(Scheme::Concurrent)], SimOptions { record_timeline: true }).unwrap();
    assert_eq!(r.total_cycles, 8 + 1 + 2 * 16 + 1);
    assert_eq!(r.setup_cycles, 16);
    assert_eq!(r.launch_cycles, 2);
    assert_eq!(r.host_idle_cycles, 8 + 16);
    assert_eq!(r.accel_busy_cycles, 32);
    assert_eq!(r.trace[0].launch_cycle, 8);
    assert_eq!(r.trace[1].launch_cycle, 25);
    let setup_band = r.timeline.iter().find(|row| row.lane == Lane::HostSetup && row.start == 9).unwrap();
    let busy = r.timeline.iter().find(|row| row.lane == Lane::AccelBusy && row.start == 9).unwrap();
    assert!(setup_band.end <= busy.end);
}

#[test]
fn same_program_sequentially_serializes() {
    let p = parse_program(PIPELINED).unwrap();
    let r = simulate(&p, &[two_field(Scheme::Sequential)]).unwrap();
    // Every write and issue, plus both jobs, back to back.
    assert_eq!(r.total_cycles, 8 + 1 + 16 + 8 + 1 + 16);
    let c = simulate(&p, &[two_field(Scheme::Concurrent)]).unwrap();
    assert!(trace_equivalent(&r, &c));
}

#[test]
fn timeline_of_empty_result_is_header_only() {
    let p = parse_program("func @f() {}").unwrap();
    let r = simulate(&p, &[]).unwrap();
    assert_eq!(emit_timeline(&r), "start_cycle,end_cycle,lane\n");
}

#[test]
fn concurrent_await_on_finished_job_polls() {
    let p = parse_program(
        r#"accel "x"
        func @main() {
          %c = const 1 : i64
          %s = setup "x" (a = %c) : state<"x">
          %t = launch %s ops = 16 : token<"x">
          host_work 50
          await %t
        }"#,
    )
    .unwrap();
    let mut d = two_field(Scheme::Concurrent);
    d.cost.await_poll_cost = 1;
    let r = simulate(&p, &[d]).unwrap();
    assert_eq!(r.host_idle_cycles, 0);
    assert_eq!(r.other_host_cycles, 50 + 1);
}

fn field_writes(p: &Program) -> usize {
    let mut n = 0;
    for f in &p.functions {
        walk_ops(&f.body, &mut |op| {
            if let OpKind::Setup { fields, .. } | OpKind::Launch { fields, .. } = &op.kind {
                n += fields.len();
            }
        });
    }
    n
}

#[test]
fn random_programs_obey_accounting_invariants() {
    for seed in 0..300 {
        let case = random_case(seed);
        let r = simulate(&case.program, &case.descriptors).unwrap();
        let again = simulate(&case.program, &case.descriptors).unwrap();
        assert_eq!(r, again, "seed {seed}: nondeterministic");
        let host = r.setup_cycles + r.calc_cycles + r.other_host_cycles + r.host_idle_cycles + r.launch_cycles;
        assert_eq!(host, r.host_cycles, "seed {seed}: accounting closure");
        assert!(r.total_cycles >= r.host_cycles, "seed {seed}");
        assert_eq!(r.total_ops, r.trace.iter().map(|e| e.ops).sum::<u64>(), "seed {seed}");
        for e in &r.trace {
            let d = case.descriptors.iter().find(|d| d.name == e.accel).unwrap();
            assert_eq!(e.snapshot.len(), d.fields.len());
            for f in &d.fields {
                let v = e.snapshot[&f.name];
                assert!(f.bytes == 8 || v < 1u64 << (8 * f.bytes as u32));
            }
        }
        // Launches on one accelerator never overlap.
        let busy: u64 = r.accel_busy_cycles;
        if case.descriptors.len() == 1 {
            assert!(busy <= r.total_cycles, "seed {seed}");
        }
        if field_writes(&case.program) == 0 {
            assert_eq!(r.config_bytes_written, 0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn config_bandwidth_matches_simulated_writes(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = random_descriptor(&mut rng, "x", Scheme::Sequential);
        // Grouped writes only reach the peak rate on whole groups.
        let n = d.fields.len() as u64;
        d.cost.write_group = (1..=n).rev().find(|g| n % g == 0 && *g <= d.cost.write_group).unwrap();
        let mut src = String::from("accel \"x\"\nfunc @f() {\n  %v = const 3 : i64\n  %s = setup \"x\" (");
        let fields: Vec<String> = d.fields.iter().map(|f| format!("{} = %v", f.name)).collect();
        src.push_str(&fields.join(", "));
        src.push_str(") : state<\"x\">\n}\n");
        let r = simulate(&parse_program(&src).unwrap(), &[d.clone()]).unwrap();
        let measured = r.config_bytes_written as f64 / r.setup_cycles as f64;
        prop_assert!((measured - d.config_bandwidth()).abs() <= 1e-12 * measured);
    }

    #[test]
    fn job_duration_is_monotone_and_exact_when_divisible(peak in 1u64..4096, a in 0u64..1_000_000, b in 0u64..1_000_000) {
        let mut d = two_field(Scheme::Sequential);
        d.peak_perf = peak as f64;
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(d.job_duration(lo) <= d.job_duration(hi));
        prop_assert_eq!(d.job_duration(lo * peak), lo);
    }
}
