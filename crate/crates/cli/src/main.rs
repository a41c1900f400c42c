//! `accfg`: optimize, simulate and analyze accelerator dispatch programs.
//!
//! Exit codes: 0 ok, 1 simulation or analysis error, 2 input error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use accfg::benchgen::{gen_tiled_matmul, load_matmul_spec, load_sweep_template, BenchError, MatmulSpec};
use accfg::passes::{run_pipeline, PassError, PassLog, PassPipeline};
use accfg::random::{random_case_with, GenConfig};
use accfg::roofline::{geomean, measure_point, roofline_csv, RooflinePoint};
use accfg::sim::{emit_timeline, simulate_with, SimOptions};
use accfg::{load_descriptor, parse_program, presets, print_program, verify, AcceleratorDescriptor, Program, SimResult};

#[derive(Parser)]
#[command(name = "accfg", version, about = "Configuration-aware accelerator dispatch toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a pass pipeline and print the optimized IR.
    Opt(OptArgs),
    /// Simulate a program and print its cycle accounting.
    Sim(SimArgs),
    /// Measure roofline points for the baseline, dedup and full pipelines.
    Roofline(CommonArgs),
    /// Sweep square matmul sizes and report speedups.
    Report(ReportArgs),
    /// Emit a tiled matmul program.
    Gen(SourceArgs),
    /// Emit a seeded random program with matching descriptors.
    Random(RandomArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct SourceArgs {
    /// Program file in the textual IR.
    program: Option<PathBuf>,
    /// Matmul spec file or shipped template name (`gemmini`, `opengemm`).
    #[arg(long)]
    bench: Option<String>,
    /// Square problem size when `--bench` is a template.
    #[arg(long)]
    size: Option<u64>,
    /// Descriptor file or preset name. Repeatable.
    #[arg(long = "accel")]
    accels: Vec<String>,
}

#[derive(Args)]
struct PassArgs {
    /// Comma-separated pass names, applied in order.
    #[arg(long, conflicts_with = "all")]
    passes: Option<String>,
    /// The full pipeline.
    #[arg(long)]
    all: bool,
}

#[derive(Args)]
struct CommonArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct OptArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    passes: PassArgs,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    passes: PassArgs,
    /// Write the lane timeline as CSV.
    #[arg(long)]
    timeline: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Descriptor file or preset name.
    #[arg(long = "accel")]
    accel: String,
    /// Sweep template file or shipped template name. Defaults to the
    /// template named like the descriptor.
    #[arg(long)]
    bench: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
    sizes: Vec<u64>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct RandomArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of accelerators to declare.
    #[arg(long, default_value_t = 1)]
    accelerators: usize,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Run(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Run(_) => 1,
            CliError::Input(_) => 2,
        }
    }
}

impl From<PassError> for CliError {
    fn from(e: PassError) -> Self {
        match e {
            PassError::UnknownPass(_) => CliError::Input(e.to_string()),
            PassError::Verify { .. } => CliError::Run(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn descriptor(arg: &str) -> Result<AcceleratorDescriptor> {
    let path = Path::new(arg);
    if path.exists() {
        return load_descriptor(&read(path)?).map_err(|e| CliError::Input(format!("{arg}: {e}")));
    }
    presets::descriptor_by_name(arg).ok_or_else(|| CliError::Input(format!("no descriptor file or preset `{arg}`")))
}

fn bench_spec(bench: &str, size: Option<u64>) -> Result<MatmulSpec> {
    let bad = |e: BenchError| CliError::Input(format!("{bench}: {e}"));
    if let Some(t) = presets::template_by_name(bench) {
        let size = size.ok_or_else(|| CliError::Input(format!("template `{bench}` needs --size")))?;
        let spec = t.square(size);
        spec.validate().map_err(bad)?;
        return Ok(spec);
    }
    let text = read(Path::new(bench))?;
    match (load_matmul_spec(&text), size) {
        (Ok(spec), None) => Ok(spec),
        (Ok(_) | Err(BenchError::MissingDims), Some(size)) => {
            let spec = load_sweep_template(&text).map_err(bad)?.square(size);
            spec.validate().map_err(bad)?;
            Ok(spec)
        }
        (Err(e), _) => Err(bad(e)),
    }
}

/// Loads the program and its descriptors. Every declared accelerator must
/// have a descriptor when `need_all` is set.
fn load(source: &SourceArgs, need_all: bool) -> Result<(Program, Vec<AcceleratorDescriptor>)> {
    let mut descs = source.accels.iter().map(|a| descriptor(a)).collect::<Result<Vec<_>>>()?;
    let program = match (&source.program, &source.bench) {
        (Some(path), None) => {
            let p = parse_program(&read(path)?).map_err(|e| CliError::Input(format!("{}:{e}", path.display())))?;
            if let Err(diags) = verify(&p) {
                let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
                return Err(CliError::Input(lines.join("\n")));
            }
            p
        }
        (None, Some(bench)) => {
            if descs.is_empty() {
                descs.push(descriptor(bench)?);
            }
            let spec = bench_spec(bench, source.size)?;
            gen_tiled_matmul(&spec, &descs[0]).map_err(|e| CliError::Input(e.to_string()))?
        }
        _ => return Err(CliError::Input("give exactly one of a program file or --bench".into())),
    };
    if need_all {
        for a in &program.accelerators {
            if !descs.iter().any(|d| d.name == *a) {
                return Err(CliError::Input(format!("no descriptor for accelerator \"{a}\"")));
            }
        }
    }
    Ok((program, descs))
}

fn pipeline(args: &PassArgs, default_full: bool) -> Result<PassPipeline> {
    match (&args.passes, args.all) {
        (Some(list), _) => Ok(PassPipeline::parse(list)?),
        (None, true) => Ok(PassPipeline::full()),
        (None, false) if default_full => Ok(PassPipeline::full()),
        (None, false) => Ok(PassPipeline::from_names(&[])),
    }
}

fn run_sim(p: &Program, descs: &[AcceleratorDescriptor], timeline: bool) -> Result<SimResult> {
    simulate_with(p, descs, SimOptions { record_timeline: timeline }).map_err(|e| CliError::Run(e.to_string()))
}

fn log_text(log: &PassLog) -> String {
    log.iter().map(|e| format!("{e}\n")).collect()
}

fn cmd_opt(args: &OptArgs) -> Result<String> {
    let (program, descs) = load(&args.common.source, false)?;
    let (out, log) = run_pipeline(&program, &pipeline(&args.passes, true)?, &descs)?;
    let ir = print_program(&out);
    Ok(match args.common.format {
        Format::Json => json!({ "ir": ir, "log": log }).to_string() + "\n",
        Format::Csv => {
            let mut s = String::from("pass,setups,fields,bytes,setups_delta,fields_delta,bytes_delta\n");
            for e in &log {
                let d = |a: u64, b: u64| b as i64 - a as i64;
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    e.pass,
                    e.after.setups,
                    e.after.fields,
                    e.after.bytes,
                    d(e.before.setups as u64, e.after.setups as u64),
                    d(e.before.fields as u64, e.after.fields as u64),
                    d(e.before.bytes, e.after.bytes)
                ));
            }
            s
        }
        Format::Text => {
            eprint!("{}", log_text(&log));
            ir
        }
    })
}

fn cmd_sim(args: &SimArgs) -> Result<String> {
    let (program, descs) = load(&args.common.source, true)?;
    let (p, _) = run_pipeline(&program, &pipeline(&args.passes, false)?, &descs)?;
    let r = run_sim(&p, &descs, args.timeline.is_some())?;
    if let Some(path) = &args.timeline {
        fs::write(path, emit_timeline(&r)).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    }
    Ok(match args.common.format {
        Format::Text => r.summary_lines(),
        Format::Json => r.summary_json().to_string() + "\n",
        Format::Csv => {
            let summary = r.summary_lines();
            let (keys, vals): (Vec<&str>, Vec<&str>) = summary
                .lines()
                .filter_map(|l| l.split_once('='))
                .unzip();
            format!("{}\n{}\n", keys.join(","), vals.join(","))
        }
    })
}

const VARIANTS: [&str; 3] = ["baseline", "dedup", "full"];

fn variant(name: &str) -> PassPipeline {
    match name {
        "baseline" => PassPipeline::from_names(&["trace"]),
        "dedup" => PassPipeline::dedup_only(),
        _ => PassPipeline::full(),
    }
}

/// One roofline point per pipeline variant, measured against `desc`.
fn points(program: &Program, descs: &[AcceleratorDescriptor], desc: &AcceleratorDescriptor) -> Result<Vec<RooflinePoint>> {
    VARIANTS
        .iter()
        .map(|v| {
            let (p, _) = run_pipeline(program, &variant(v), descs)?;
            let r = run_sim(&p, descs, false)?;
            Ok(measure_point(&r, desc, *v))
        })
        .collect()
}

fn cmd_roofline(args: &CommonArgs) -> Result<String> {
    let (program, descs) = load(&args.source, true)?;
    let desc = match program.accelerators.first() {
        Some(a) => descs.iter().find(|d| d.name == *a).expect("checked by load"),
        None => descs
            .first()
            .ok_or_else(|| CliError::Input("roofline needs a descriptor".into()))?,
    };
    let pts = points(&program, &descs, desc)?;
    Ok(match args.format {
        Format::Csv => roofline_csv(&pts, desc),
        Format::Json => json!({ "accelerator": desc.name, "points": pts }).to_string() + "\n",
        Format::Text => {
            let mut s = format!("{:<10} {:>12} {:>14} {:>14}  bound\n", "variant", "i_oc", "perf", "bw_effective");
            for p in &pts {
                s.push_str(&format!(
                    "{:<10} {:>12.3} {:>14.3} {:>14.4}  {}\n",
                    p.label, p.i_oc, p.perf, p.bw_effective, p.bound
                ));
            }
            s
        }
    })
}

struct Row {
    size: u64,
    perf: [f64; 3],
}

fn cmd_report(args: &ReportArgs) -> Result<String> {
    let desc = descriptor(&args.accel)?;
    let template = match &args.bench {
        Some(b) => match presets::template_by_name(b) {
            Some(t) => t,
            None => load_sweep_template(&read(Path::new(b))?).map_err(|e| CliError::Input(format!("{b}: {e}")))?,
        },
        None => presets::template_by_name(&desc.name)
            .ok_or_else(|| CliError::Input(format!("no shipped template for `{}`; pass --bench", desc.name)))?,
    };
    if args.sizes.is_empty() {
        return Err(CliError::Input("empty --sizes".into()));
    }
    let descs = [desc.clone()];
    let rows: Vec<Row> = args
        .sizes
        .par_iter()
        .map(|&size| {
            let spec = template.square(size);
            spec.validate().map_err(|e| CliError::Input(format!("size {size}: {e}")))?;
            let program = gen_tiled_matmul(&spec, &desc).map_err(|e| CliError::Input(e.to_string()))?;
            let pts = points(&program, &descs, &desc)?;
            Ok(Row {
                size,
                perf: [pts[0].perf, pts[1].perf, pts[2].perf],
            })
        })
        .collect::<Result<_>>()?;
    let dedup_speedups: Vec<f64> = rows.iter().map(|r| r.perf[1] / r.perf[0]).collect();
    let full_speedups: Vec<f64> = rows.iter().map(|r| r.perf[2] / r.perf[0]).collect();
    let (gd, gf) = (geomean(&dedup_speedups), geomean(&full_speedups));
    Ok(match args.format {
        Format::Csv => {
            let mut s = String::from("size,baseline_perf,dedup_perf,full_perf,dedup_speedup,full_speedup\n");
            for (i, r) in rows.iter().enumerate() {
                s.push_str(&format!(
                    "{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                    r.size, r.perf[0], r.perf[1], r.perf[2], dedup_speedups[i], full_speedups[i]
                ));
            }
            s.push_str(&format!("geomean,,,,{gd:.6},{gf:.6}\n"));
            s
        }
        Format::Json => {
            let rows: Vec<_> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    json!({
                        "size": r.size,
                        "baseline_perf": r.perf[0],
                        "dedup_perf": r.perf[1],
                        "full_perf": r.perf[2],
                        "dedup_speedup": dedup_speedups[i],
                        "full_speedup": full_speedups[i],
                    })
                })
                .collect();
            json!({
                "accelerator": desc.name,
                "rows": rows,
                "geomean_dedup_speedup": gd,
                "geomean_full_speedup": gf,
            })
            .to_string()
                + "\n"
        }
        Format::Text => {
            let mut s = format!(
                "{:>6} {:>12} {:>12} {:>12} {:>9} {:>9}\n",
                "size", "baseline", "dedup", "full", "x dedup", "x full"
            );
            for (i, r) in rows.iter().enumerate() {
                s.push_str(&format!(
                    "{:>6} {:>12.3} {:>12.3} {:>12.3} {:>9.3} {:>9.3}\n",
                    r.size, r.perf[0], r.perf[1], r.perf[2], dedup_speedups[i], full_speedups[i]
                ));
            }
            s.push_str(&format!("{:>6} {:>12} {:>12} {:>12} {gd:>9.3} {gf:>9.3}\n", "geo", "", "", ""));
            s
        }
    })
}

fn cmd_gen(args: &SourceArgs) -> Result<String> {
    if args.program.is_some() || args.bench.is_none() {
        return Err(CliError::Input("gen takes --bench, not a program file".into()));
    }
    let (program, _) = load(args, false)?;
    Ok(print_program(&program))
}

fn cmd_random(args: &RandomArgs) -> Result<String> {
    if args.accelerators == 0 {
        return Err(CliError::Input("--accelerators must be at least 1".into()));
    }
    let config = GenConfig {
        accelerators: (args.accelerators, args.accelerators),
        ..GenConfig::default()
    };
    let case = random_case_with(args.seed, &config);
    let ir = print_program(&case.program);
    Ok(match args.format {
        Format::Json => json!({ "seed": args.seed, "program": ir, "descriptors": case.descriptors }).to_string() + "\n",
        _ => ir,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match &cli.command {
        Command::Opt(a) => cmd_opt(a),
        Command::Sim(a) => cmd_sim(a),
        Command::Roofline(a) => cmd_roofline(a),
        Command::Report(a) => cmd_report(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Random(a) => cmd_random(a),
    };
    match out {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            match &e {
                CliError::Input(m) | CliError::Run(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(e.code())
        }
    }
}
