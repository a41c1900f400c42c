//! Accelerator descriptors: register fields, configuration scheme and the
//! host/accelerator cost model shared by the simulator and roofline analysis.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("invalid descriptor JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown scheme \"{0}\" (expected \"sequential\" or \"concurrent\")")]
    UnknownScheme(String),
    #[error("peak_perf must be positive and finite, found {0}")]
    NonPositivePeak(f64),
    #[error("mem_bandwidth must be positive and finite, found {0}")]
    NonPositiveMemBandwidth(f64),
    #[error("descriptor name must not be empty")]
    EmptyName,
    #[error("descriptor declares no fields")]
    NoFields,
    #[error("field `{0}` declared twice")]
    DuplicateField(String),
    #[error("field `{name}` has width {bytes} bytes (expected 1..=8)")]
    FieldWidth { name: String, bytes: u8 },
    #[error("write_cost must be positive")]
    ZeroWriteCost,
    #[error("write_group must be at least 1")]
    ZeroWriteGroup,
}

/// Configuration scheme of an accelerator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Host stalls from launch until the job completes.
    Sequential,
    /// Host may stage the next configuration while a job runs.
    Concurrent,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Sequential => "sequential",
            Scheme::Concurrent => "concurrent",
        }
    }

    pub fn from_name(name: &str) -> Option<Scheme> {
        match name {
            "sequential" => Some(Scheme::Sequential),
            "concurrent" => Some(Scheme::Concurrent),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    pub bytes: u8,
}

fn default_arith_cost() -> u64 {
    3
}

fn default_launch_cost() -> u64 {
    1
}

fn default_write_group() -> u64 {
    1
}

/// Host cycle costs. `write_group` consecutive field writes inside one op
/// are charged a single `write_cost`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub write_cost: u64,
    #[serde(default = "default_arith_cost")]
    pub arith_cost: u64,
    #[serde(default = "default_launch_cost")]
    pub launch_cost: u64,
    #[serde(default)]
    pub await_poll_cost: u64,
    #[serde(default = "default_write_group")]
    pub write_group: u64,
}

impl CostModel {
    pub fn with_write_cost(write_cost: u64) -> Self {
        CostModel {
            write_cost,
            arith_cost: default_arith_cost(),
            launch_cost: default_launch_cost(),
            await_poll_cost: 0,
            write_group: default_write_group(),
        }
    }

    /// Cycles to perform `writes` field writes in one op.
    pub fn write_cycles(&self, writes: usize) -> u64 {
        (writes as u64).div_ceil(self.write_group) * self.write_cost
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceleratorDescriptor {
    pub name: String,
    pub scheme: Scheme,
    pub peak_perf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mem_bandwidth: Option<f64>,
    pub fields: Vec<FieldSpec>,
    pub cost: CostModel,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DescriptorFile {
    name: String,
    scheme: String,
    peak_perf: f64,
    #[serde(default)]
    mem_bandwidth: Option<f64>,
    fields: Vec<FieldSpec>,
    cost: CostModel,
}

impl AcceleratorDescriptor {
    pub fn validate(&self) -> Result<(), DescriptorError> {
        if self.name.is_empty() {
            return Err(DescriptorError::EmptyName);
        }
        if !(self.peak_perf.is_finite() && self.peak_perf > 0.0) {
            return Err(DescriptorError::NonPositivePeak(self.peak_perf));
        }
        if let Some(bw) = self.mem_bandwidth {
            if !(bw.is_finite() && bw > 0.0) {
                return Err(DescriptorError::NonPositiveMemBandwidth(bw));
            }
        }
        if self.fields.is_empty() {
            return Err(DescriptorError::NoFields);
        }
        let mut seen = HashSet::new();
        for f in &self.fields {
            if !seen.insert(f.name.as_str()) {
                return Err(DescriptorError::DuplicateField(f.name.clone()));
            }
            if !(1..=8).contains(&f.bytes) {
                return Err(DescriptorError::FieldWidth {
                    name: f.name.clone(),
                    bytes: f.bytes,
                });
            }
        }
        if self.cost.write_cost == 0 {
            return Err(DescriptorError::ZeroWriteCost);
        }
        if self.cost.write_group == 0 {
            return Err(DescriptorError::ZeroWriteGroup);
        }
        Ok(())
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn field_bytes(&self, name: &str) -> Option<u8> {
        self.fields.iter().find(|f| f.name == name).map(|f| f.bytes)
    }

    /// Peak configuration bandwidth in bytes/cycle: the mean field width
    /// times the write group, over the grouped write cost.
    pub fn config_bandwidth(&self) -> f64 {
        let total: u64 = self.fields.iter().map(|f| f.bytes as u64).sum();
        let mean = total as f64 / self.fields.len() as f64;
        mean * self.cost.write_group as f64 / self.cost.write_cost as f64
    }

    /// Cycles the accelerator is busy on a job of `ops` operations.
    pub fn job_duration(&self, ops: u64) -> u64 {
        if ops == 0 {
            return 0;
        }
        let peak = self.peak_perf;
        if peak.fract() == 0.0 && peak <= u64::MAX as f64 {
            ops.div_ceil(peak as u64)
        } else {
            (ops as f64 / peak).ceil() as u64
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }
}

/// Parses and validates a descriptor file. Unknown keys are rejected.
pub fn load_descriptor(text: &str) -> Result<AcceleratorDescriptor, DescriptorError> {
    let raw: DescriptorFile = serde_json::from_str(text)?;
    let scheme =
        Scheme::from_name(&raw.scheme).ok_or(DescriptorError::UnknownScheme(raw.scheme))?;
    let d = AcceleratorDescriptor {
        name: raw.name,
        scheme,
        peak_perf: raw.peak_perf,
        mem_bandwidth: raw.mem_bandwidth,
        fields: raw.fields,
        cost: raw.cost,
    };
    d.validate()?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn simple(bytes: u8, write_cost: u64, peak: f64) -> AcceleratorDescriptor {
        AcceleratorDescriptor {
            name: "x".into(),
            scheme: Scheme::Sequential,
            peak_perf: peak,
            mem_bandwidth: None,
            fields: vec![FieldSpec {
                name: "f".into(),
                bytes,
            }],
            cost: CostModel::with_write_cost(write_cost),
        }
    }

    #[test]
    fn gemmini_like_bandwidth_is_sixteen_ninths() {
        let d = presets::gemmini();
        assert_eq!(d.scheme, Scheme::Sequential);
        assert_eq!(d.peak_perf, 512.0);
        assert!((d.config_bandwidth() - 16.0 / 9.0).abs() < 1e-12);
        // The rounded figure is 1.78; truncating gives the commonly quoted 1.77.
        assert_eq!((d.config_bandwidth() * 100.0).round() / 100.0, 1.78);
    }

    #[test]
    fn opengemm_like_descriptor_loads() {
        let d = presets::opengemm();
        assert_eq!(d.scheme, Scheme::Concurrent);
        assert_eq!(d.peak_perf, 1024.0);
    }

    #[test]
    fn single_byte_field_unit_cost() {
        assert_eq!(simple(1, 1, 1.0).config_bandwidth(), 1.0);
    }

    #[test]
    fn unknown_scheme_rejected() {
        let text = r#"{"name":"x","scheme":"parallel","peak_perf":1,"fields":[{"name":"a","bytes":1}],"cost":{"write_cost":1}}"#;
        assert!(
            matches!(load_descriptor(text), Err(DescriptorError::UnknownScheme(s)) if s == "parallel")
        );
    }

    #[test]
    fn missing_and_invalid_keys_rejected() {
        let no_peak = r#"{"name":"x","scheme":"sequential","fields":[{"name":"a","bytes":1}],"cost":{"write_cost":1}}"#;
        assert!(matches!(
            load_descriptor(no_peak),
            Err(DescriptorError::Json(_))
        ));
        let zero_peak = r#"{"name":"x","scheme":"sequential","peak_perf":0,"fields":[{"name":"a","bytes":1}],"cost":{"write_cost":1}}"#;
        assert!(matches!(
            load_descriptor(zero_peak),
            Err(DescriptorError::NonPositivePeak(_))
        ));
        let extra = r#"{"name":"x","scheme":"sequential","peak_perf":1,"fields":[{"name":"a","bytes":1}],"cost":{"write_cost":1},"color":"red"}"#;
        assert!(matches!(
            load_descriptor(extra),
            Err(DescriptorError::Json(_))
        ));
        let fractional = r#"{"name":"x","scheme":"sequential","peak_perf":1,"fields":[{"name":"a","bytes":1}],"cost":{"write_cost":4.5}}"#;
        assert!(matches!(
            load_descriptor(fractional),
            Err(DescriptorError::Json(_))
        ));
        let wide = r#"{"name":"x","scheme":"sequential","peak_perf":1,"fields":[{"name":"a","bytes":9}],"cost":{"write_cost":1}}"#;
        assert!(matches!(
            load_descriptor(wide),
            Err(DescriptorError::FieldWidth { .. })
        ));
    }

    #[test]
    fn job_duration_ceiling() {
        assert_eq!(simple(1, 1, 512.0).job_duration(524_288), 1024);
        assert_eq!(simple(1, 1, 1024.0).job_duration(0), 0);
        assert_eq!(simple(1, 1, 100.0).job_duration(101), 2);
        assert_eq!(simple(1, 1, 2.5).job_duration(6), 3);
    }

    #[test]
    fn grouped_write_cycles() {
        let mut c = CostModel::with_write_cost(9);
        c.write_group = 2;
        assert_eq!(c.write_cycles(0), 0);
        assert_eq!(c.write_cycles(1), 9);
        assert_eq!(c.write_cycles(2), 9);
        assert_eq!(c.write_cycles(3), 18);
    }

    #[test]
    fn json_round_trip() {
        let d = presets::opengemm();
        assert_eq!(load_descriptor(&d.to_json()).unwrap(), d);
    }
}
