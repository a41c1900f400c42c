//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints its PASS/FAIL line even when the others succeed.

use std::process::ExitCode;
use std::time::Instant;

use accfg::accel::{AcceleratorDescriptor, Scheme};
use accfg::ir::{parse_program, print_program, verify, Program, Rule};
use accfg::passes::{run_pipeline, PassPipeline, PassRegistry};
use accfg::presets;
use accfg::random::{random_case, random_case_with, GenConfig};
use accfg::roofline::{
    attainable_combined, attainable_concurrent, attainable_sequential, classify, effective_config_bandwidth,
    geomean, knee, log_space, measure_point, scheme_roofline, Bound, RooflineInputs,
};
use accfg::sim::{first_trace_difference, simulate, SimResult};
use accfg::{benchgen, trace_equivalent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

type Outcome = Result<String, String>;

const SIZES: [u64; 4] = [32, 64, 128, 256];

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn run(p: &Program, pl: &PassPipeline, ds: &[AcceleratorDescriptor]) -> Result<Program, String> {
    run_pipeline(p, pl, ds).map(|(out, _)| out).map_err(|e| e.to_string())
}

fn sim(p: &Program, ds: &[AcceleratorDescriptor]) -> Result<SimResult, String> {
    simulate(p, ds).map_err(|e| e.to_string())
}

fn bench(d: &AcceleratorDescriptor, size: u64) -> Result<Program, String> {
    let template = presets::template_by_name(&d.name).ok_or("no template")?;
    benchgen::gen_tiled_matmul(&template.square(size), d).map_err(|e| e.to_string())
}

fn worked_example() -> Outcome {
    let (peak, bw, i_oc) = (512.0, 16.0 / 9.0, 204.8);
    let seq = 100.0 * attainable_sequential(peak, bw, i_oc) / peak;
    ensure!((41.0..=42.0).contains(&seq), "sequential {seq:.2}% of peak");
    let eff = effective_config_bandwidth(2560.0, 2325.0, 480.0, bw);
    ensure!((0.910..=0.916).contains(&eff), "effective bandwidth {eff:.4}");
    let with_eff = 100.0 * attainable_sequential(peak, eff, i_oc) / peak;
    ensure!((26.3..=27.3).contains(&with_eff), "with effective bandwidth {with_eff:.2}%");
    Ok(format!("{seq:.2}% of peak, bw_eff {eff:.4}, {with_eff:.2}% with bw_eff"))
}

fn knee_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 0..200 {
        let p: f64 = 10f64.powf(rng.gen_range(-1.0..5.0));
        let bw: f64 = 10f64.powf(rng.gen_range(-2.0..3.0));
        let k = knee(p, bw);
        let at = attainable_sequential(p, bw, k);
        ensure!(rel(at, p / 2.0) <= 1e-9, "pair {n}: {at} vs {}", p / 2.0);
        let ratio = |i: f64| attainable_concurrent(p, bw, i) / attainable_sequential(p, bw, i);
        let sweep = log_space(k / 1e3, k * 1e3, 241);
        let best = sweep.iter().copied().fold(0.0f64, |m, i| m.max(ratio(i)));
        ensure!(ratio(k) >= best * (1.0 - 1e-12), "pair {n}: ratio {} at knee below {best}", ratio(k));
    }
    Ok("200 pairs".into())
}

fn trace_equivalence() -> Outcome {
    let registry = PassRegistry::standard();
    let mut pipelines: Vec<(String, PassPipeline)> = registry
        .names()
        .into_iter()
        .map(|n| (n.to_string(), PassPipeline::from_names(&[n])))
        .collect();
    pipelines.push(("full".into(), PassPipeline::full()));
    let mut checks = 0;
    for seed in 0..1000 {
        let case = random_case(seed);
        let base = sim(&case.program, &case.descriptors)?;
        for (name, pl) in &pipelines {
            let out = run(&case.program, pl, &case.descriptors).map_err(|e| format!("seed {seed} {name}: {e}"))?;
            verify(&out).map_err(|e| format!("seed {seed} {name}: {} diagnostics", e.len()))?;
            let r = sim(&out, &case.descriptors)?;
            ensure!(
                trace_equivalent(&base, &r),
                "seed {seed} {name}: first difference at launch {:?}",
                first_trace_difference(&base, &r)
            );
            checks += 1;
        }
    }
    Ok(format!("{checks} program/pipeline pairs"))
}

fn dedup_moves_right_and_up() -> Outcome {
    let mut crossings = Vec::new();
    for d in [presets::gemmini(), presets::opengemm()] {
        let ds = [d.clone()];
        for size in SIZES {
            let p = bench(&d, size)?;
            let a = sim(&run(&p, &PassPipeline::from_names(&["trace"]), &ds)?, &ds)?;
            let b = sim(&run(&p, &PassPipeline::dedup_only(), &ds)?, &ds)?;
            let tag = format!("{} {size}", d.name);
            ensure!(b.config_bytes_written < a.config_bytes_written, "{tag}: bytes {} -> {}", a.config_bytes_written, b.config_bytes_written);
            ensure!(a.total_ops == b.total_ops, "{tag}: ops changed");
            let (pa, pb) = (measure_point(&a, &d, "baseline"), measure_point(&b, &d, "dedup"));
            ensure!(pb.i_oc > pa.i_oc, "{tag}: i_oc {} -> {}", pa.i_oc, pb.i_oc);
            ensure!(pb.perf > pa.perf, "{tag}: perf {} -> {}", pa.perf, pb.perf);
            let bw = d.config_bandwidth();
            if classify(&pa, d.peak_perf, bw) == Bound::ConfigurationBound
                && classify(&pb, d.peak_perf, bw) != Bound::ConfigurationBound
            {
                crossings.push(tag);
            }
        }
    }
    ensure!(!crossings.is_empty(), "no size leaves the configuration-bound regime");
    Ok(format!("knee crossed at {}", crossings.join(", ")))
}

fn overlap_hides_configuration() -> Outcome {
    let overlap = PassPipeline::from_names(&["pipeline", "overlap"]);
    let d = presets::opengemm();
    ensure!(d.scheme == Scheme::Concurrent, "opengemm preset is not concurrent");
    let ds = [d.clone()];
    let mut checked = Vec::new();
    for size in SIZES {
        let pre = run(&bench(&d, size)?, &PassPipeline::dedup_only(), &ds)?;
        let a = sim(&pre, &ds)?;
        let b = sim(&run(&pre, &overlap, &ds)?, &ds)?;
        let (pa, pb) = (measure_point(&a, &d, "dedup"), measure_point(&b, &d, "overlap"));
        ensure!(pa.i_oc.to_bits() == pb.i_oc.to_bits(), "size {size}: i_oc {} -> {}", pa.i_oc, pb.i_oc);
        ensure!(pb.perf > pa.perf, "size {size}: perf {} -> {}", pa.perf, pb.perf);
        let n = b.launches() as f64;
        let setup_per_iter = (b.setup_cycles + b.calc_cycles) as f64 / n;
        let job = b.accel_busy_cycles as f64 / n;
        if b.launches() >= 64 && setup_per_iter <= job {
            let roof = attainable_concurrent(d.peak_perf, pb.bw_effective, pb.i_oc);
            let err = rel(pb.perf, roof);
            ensure!(err <= 0.10, "size {size}: perf {:.1} vs roofline {roof:.1}", pb.perf);
            checked.push(format!("{size}: {:.1}%", 100.0 * err));
        }
    }
    ensure!(!checked.is_empty(), "no size meets the trip and setup conditions");
    let g = presets::gemmini();
    let gs = [g.clone()];
    for size in SIZES {
        let pre = run(&bench(&g, size)?, &PassPipeline::dedup_only(), &gs)?;
        ensure!(run(&pre, &overlap, &gs)? == pre.renumbered(), "sequential size {size} changed");
    }
    Ok(format!("off concurrent roofline by {}", checked.join(", ")))
}

fn end_to_end_sweep() -> Outcome {
    let d = presets::opengemm();
    let ds = [d.clone()];
    let mut speedups = Vec::new();
    let mut notes = Vec::new();
    for size in SIZES {
        let p = bench(&d, size)?;
        let a = sim(&run(&p, &PassPipeline::from_names(&["trace"]), &ds)?, &ds)?;
        let b = sim(&run(&p, &PassPipeline::full(), &ds)?, &ds)?;
        let (pa, pb) = (measure_point(&a, &d, "baseline"), measure_point(&b, &d, "full"));
        let simulated = a.total_cycles as f64 / b.total_cycles as f64;
        let predicted = attainable_concurrent(d.peak_perf, pb.bw_effective, pb.i_oc)
            / attainable_sequential(d.peak_perf, pa.bw_effective, pa.i_oc);
        let err = simulated / predicted - 1.0;
        ensure!(err.abs() <= 0.15, "size {size}: simulated {simulated:.3}x, predicted {predicted:.3}x");
        speedups.push(simulated);
        notes.push(format!("{size}: {:+.1}%", 100.0 * err));
    }
    let g = geomean(&speedups);
    ensure!(g >= 1.5, "geomean {g:.3}x");
    Ok(format!("geomean {g:.3}x, prediction error {}", notes.join(", ")))
}

fn simulator_below_roofline() -> Outcome {
    let config = GenConfig { accelerators: (1, 1), ..GenConfig::default() };
    let (mut worst, mut with_mem) = (0.0f64, 0);
    for seed in 0..500 {
        let case = random_case_with(seed, &config);
        let d = &case.descriptors[0];
        let r = sim(&case.program, &case.descriptors)?;
        if r.total_ops == 0 {
            continue;
        }
        let pt = measure_point(&r, d, "random");
        let roof = if r.config_bytes_written == 0 {
            d.peak_perf
        } else {
            scheme_roofline(d.scheme, d.peak_perf, pt.bw_effective, pt.i_oc)
        };
        let eps = r.issue_epsilon(d.cost.launch_cost);
        ensure!(pt.perf <= roof + eps + 1e-9 * roof, "seed {seed}: perf {} above {roof} + {eps}", pt.perf);
        worst = worst.max(pt.perf / roof);
        if let Some(mem) = d.mem_bandwidth {
            with_mem += 1;
            // The simulator moves no operand data, so the memory term is
            // checked as a ceiling that can only lower the bound.
            for i_op in log_space(1e-3, 1e6, 37) {
                let inputs = RooflineInputs {
                    peak_perf: d.peak_perf,
                    bw_config: pt.bw_effective,
                    bw_memory: Some(mem),
                    i_oc: pt.i_oc,
                    i_operational: Some(i_op),
                };
                let c = attainable_combined(&inputs);
                ensure!(c <= attainable_concurrent(d.peak_perf, pt.bw_effective, pt.i_oc), "seed {seed}: combined above config roofline");
                ensure!(c <= mem * i_op, "seed {seed}: combined above memory roofline");
            }
        }
    }
    Ok(format!("max perf/roofline {worst:.4}, {with_mem} with memory bandwidth"))
}

fn ir_hygiene() -> Outcome {
    let config = GenConfig { accelerators: (1, 2), max_depth: 3, ..GenConfig::default() };
    for seed in 0..1000 {
        let p = random_case_with(seed, &config).program;
        let text = print_program(&p);
        let back = parse_program(&text).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure!(back.structurally_eq(&p), "seed {seed}: round trip differs");
        ensure!(print_program(&back) == text, "seed {seed}: printing is not a fixpoint");
    }
    for (name, src, want) in common::INVALID {
        let p = parse_program(src).map_err(|e| format!("{name}: {e}"))?;
        let got: Vec<Rule> = verify(&p).err().unwrap_or_default().into_iter().map(|d| d.rule).collect();
        ensure!(got == want, "{name}: got {got:?}, want {want:?}");
    }
    Ok(format!("1000 round trips, {} invalid programs rejected", common::INVALID.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("worked gemmini example", worked_example),
        ("knee identity", knee_identity),
        ("trace equivalence", trace_equivalence),
        ("dedup prediction", dedup_moves_right_and_up),
        ("overlap prediction", overlap_hides_configuration),
        ("end-to-end sweep", end_to_end_sweep),
        ("simulator bound", simulator_below_roofline),
        ("ir hygiene", ir_hygiene),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}; {secs:.2}s)", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail}; {secs:.2}s)", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
