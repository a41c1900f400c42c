//! Configuration roofline model.
//!
//! `i_oc` is accelerator operations per configuration byte. Concurrent
//! configuration overlaps writes with compute, so attainable performance is
//! the minimum of peak and configuration throughput; sequential
//! configuration serializes the two and the times add.

use std::fmt;

use serde::Serialize;

use crate::accel::{AcceleratorDescriptor, Scheme};
use crate::sim::SimResult;

pub const REL_TOL: f64 = 1e-9;
pub const KNEE_REL_TOL: f64 = 1e-6;

pub const ROOFLINE_CSV_HEADER: &str =
    "label,i_oc,perf_ops_per_cycle,bound,roofline_seq_at_ioc,roofline_conc_at_ioc";
pub const ROOFSURFACE_CSV_HEADER: &str = "i_operational,i_oc,attainable";

pub fn attainable_processor(peak: f64, bw_mem: f64, i_op: f64) -> f64 {
    peak.min(bw_mem * i_op)
}

pub fn attainable_concurrent(peak: f64, bw_cfg: f64, i_oc: f64) -> f64 {
    peak.min(bw_cfg * i_oc)
}

pub fn attainable_sequential(peak: f64, bw_cfg: f64, i_oc: f64) -> f64 {
    1.0 / (1.0 / peak + 1.0 / (bw_cfg * i_oc))
}

/// Bytes per cycle once parameter calculation time is charged alongside
/// the register writes. With no bytes and no time, falls back to `peak`.
pub fn effective_config_bandwidth(n_bytes: f64, t_calc: f64, t_set: f64, peak: f64) -> f64 {
    let t = t_calc + t_set;
    if t == 0.0 {
        if n_bytes == 0.0 {
            return peak;
        }
        return f64::INFINITY;
    }
    n_bytes / t
}

/// Knee abscissa: intensity where configuration and compute time match.
pub fn knee(peak: f64, bw_cfg: f64) -> f64 {
    peak / bw_cfg
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RooflineInputs {
    pub peak_perf: f64,
    pub bw_config: f64,
    pub bw_memory: Option<f64>,
    pub i_oc: f64,
    pub i_operational: Option<f64>,
}

/// Minimum of the compute, memory and configuration ceilings. Absent memory
/// terms are treated as unbounded.
pub fn attainable_combined(inputs: &RooflineInputs) -> f64 {
    let mem = match (inputs.bw_memory, inputs.i_operational) {
        (Some(bw), Some(i)) => bw * i,
        _ => f64::INFINITY,
    };
    inputs
        .peak_perf
        .min(mem)
        .min(inputs.bw_config * inputs.i_oc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    ConfigurationBound,
    ComputeBound,
    Knee,
}

impl Bound {
    pub fn name(self) -> &'static str {
        match self {
            Bound::ConfigurationBound => "configuration-bound",
            Bound::ComputeBound => "compute-bound",
            Bound::Knee => "knee",
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn classify_ioc(i_oc: f64, peak: f64, bw_cfg: f64) -> Bound {
    let cfg = bw_cfg * i_oc;
    if (cfg - peak).abs() <= KNEE_REL_TOL * peak {
        Bound::Knee
    } else if cfg < peak {
        Bound::ConfigurationBound
    } else {
        Bound::ComputeBound
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RooflinePoint {
    pub label: String,
    pub i_oc: f64,
    pub perf: f64,
    pub bound: Bound,
    /// Measured bytes per cycle of setup plus calculation time.
    pub bw_effective: f64,
}

pub fn classify(point: &RooflinePoint, peak: f64, bw_cfg: f64) -> Bound {
    classify_ioc(point.i_oc, peak, bw_cfg)
}

pub fn measure_point(
    r: &SimResult,
    d: &AcceleratorDescriptor,
    label: impl Into<String>,
) -> RooflinePoint {
    let i_oc = if r.total_ops == 0 {
        0.0
    } else if r.config_bytes_written == 0 {
        f64::INFINITY
    } else {
        r.total_ops as f64 / r.config_bytes_written as f64
    };
    let perf = r.perf();
    let bound = if r.total_ops == 0 {
        Bound::ConfigurationBound
    } else if i_oc.is_infinite() {
        Bound::ComputeBound
    } else {
        classify_ioc(i_oc, d.peak_perf, d.config_bandwidth())
    };
    RooflinePoint {
        label: label.into(),
        i_oc,
        perf,
        bound,
        bw_effective: effective_config_bandwidth(
            r.config_bytes_written as f64,
            r.calc_cycles as f64,
            r.setup_cycles as f64,
            d.config_bandwidth(),
        ),
    }
}

/// The scheme's own ceiling at a point, using its measured bandwidth.
pub fn scheme_roofline(scheme: Scheme, peak: f64, bw: f64, i_oc: f64) -> f64 {
    match scheme {
        Scheme::Sequential => attainable_sequential(peak, bw, i_oc),
        Scheme::Concurrent => attainable_concurrent(peak, bw, i_oc),
    }
}

/// Rounded to two decimals, as reported.
pub fn percent_of_peak(perf: f64, peak: f64) -> f64 {
    (perf / peak * 10_000.0).round() / 100.0
}

fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.6}")
    }
}

/// CSV with both scheme curves sampled at each point's intensity, using
/// the descriptor's peak configuration bandwidth.
pub fn roofline_csv(points: &[RooflinePoint], d: &AcceleratorDescriptor) -> String {
    let bw = d.config_bandwidth();
    let mut out = format!("{ROOFLINE_CSV_HEADER}\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.label,
            fmt_f64(p.i_oc),
            fmt_f64(p.perf),
            p.bound,
            fmt_f64(attainable_sequential(d.peak_perf, bw, p.i_oc)),
            fmt_f64(attainable_concurrent(d.peak_perf, bw, p.i_oc)),
        ));
    }
    out
}

/// `n` log-spaced samples over `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub i_operational: f64,
    pub i_oc: f64,
    pub attainable: f64,
}

/// Attainable performance over an intensity grid. Requires a memory
/// bandwidth; without one the memory term is unbounded.
pub fn roofsurface(d: &AcceleratorDescriptor, i_ops: &[f64], i_ocs: &[f64]) -> Vec<SurfacePoint> {
    let mut out = Vec::with_capacity(i_ops.len() * i_ocs.len());
    for &i_op in i_ops {
        for &i_oc in i_ocs {
            out.push(SurfacePoint {
                i_operational: i_op,
                i_oc,
                attainable: attainable_combined(&RooflineInputs {
                    peak_perf: d.peak_perf,
                    bw_config: d.config_bandwidth(),
                    bw_memory: d.mem_bandwidth,
                    i_oc,
                    i_operational: Some(i_op),
                }),
            });
        }
    }
    out
}

pub fn roofsurface_csv(points: &[SurfacePoint]) -> String {
    let mut out = format!("{ROOFSURFACE_CSV_HEADER}\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(p.i_operational),
            fmt_f64(p.i_oc),
            fmt_f64(p.attainable)
        ));
    }
    out
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn geomean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    (xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64).exp()
}
