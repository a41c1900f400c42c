//! Shipped descriptors and matmul templates.
//!
//! The OpenGeMM-like field list is a calibrated stand-in: the real
//! register map is not reproduced, only its scale (4-byte CSR writes,
//! 1024 ops/cycle peak, concurrent configuration).

use crate::accel::{load_descriptor, AcceleratorDescriptor};
use crate::benchgen::{load_sweep_template, SweepTemplate};

pub const GEMMINI_JSON: &str = include_str!("../data/gemmini.json");
pub const OPENGEMM_JSON: &str = include_str!("../data/opengemm.json");
pub const GEMMINI_MATMUL_JSON: &str = include_str!("../data/gemmini_matmul.json");
pub const OPENGEMM_MATMUL_JSON: &str = include_str!("../data/opengemm_matmul.json");

/// Sequential, 512 ops/cycle, ten 8-byte fields written in pairs at 9
/// cycles per pair.
pub fn gemmini() -> AcceleratorDescriptor {
    load_descriptor(GEMMINI_JSON).expect("shipped descriptor is valid")
}

/// Concurrent, 1024 ops/cycle, 4-byte fields.
pub fn opengemm() -> AcceleratorDescriptor {
    load_descriptor(OPENGEMM_JSON).expect("shipped descriptor is valid")
}

/// 16x16x16 weight-stationary tiles.
pub fn gemmini_matmul() -> SweepTemplate {
    load_sweep_template(GEMMINI_MATMUL_JSON).expect("shipped template is valid")
}

/// 8-by-K-by-8 tiles.
pub fn opengemm_matmul() -> SweepTemplate {
    load_sweep_template(OPENGEMM_MATMUL_JSON).expect("shipped template is valid")
}

pub fn descriptor_by_name(name: &str) -> Option<AcceleratorDescriptor> {
    match name {
        "gemmini" => Some(gemmini()),
        "opengemm" => Some(opengemm()),
        _ => None,
    }
}

pub fn template_by_name(name: &str) -> Option<SweepTemplate> {
    match name {
        "gemmini" => Some(gemmini_matmul()),
        "opengemm" => Some(opengemm_matmul()),
        _ => None,
    }
}
