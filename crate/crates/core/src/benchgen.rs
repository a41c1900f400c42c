//! Tiled matrix-multiplication program generator.
//!
//! Elements are one byte, so addresses and strides are element offsets.
//! Induction variables step by the tile size in element units; loops
//! with a single iteration are not emitted.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accel::AcceleratorDescriptor;
use crate::ir::{ArithOp, Block, Function, Op, OpKind, Program, ValueId, ValueType, Workload};

pub const BASE_A: u64 = 0x1000_0000;
pub const BASE_B: u64 = 0x2000_0000;
pub const BASE_C: u64 = 0x3000_0000;
pub const BASE_D: u64 = 0x4000_0000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BenchError {
    #[error("invalid spec JSON: {0}")]
    Json(String),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("tile {tile} does not divide dimension {dim} ({name})")]
    NonDividing {
        name: &'static str,
        dim: u64,
        tile: u64,
    },
    #[error("field `{0}` is not declared by the accelerator")]
    UnknownField(String),
    #[error("field `{0}` mapped twice")]
    DuplicateField(String),
    #[error("unknown quantity `{0}`")]
    UnknownQuantity(String),
    #[error("field `{0}` has role {1} but no source")]
    MissingSource(String, String),
    #[error("packed field `{0}` has no pack entries")]
    EmptyPack(String),
    #[error("field `{0}` depends on a loop index but is marked global")]
    NotGlobal(String),
    #[error("M, N and K are required")]
    MissingDims,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Addr,
    Stride,
    Size,
    Packed,
}

impl Role {
    fn name(self) -> &'static str {
        match self {
            Role::Addr => "addr",
            Role::Stride => "stride",
            Role::Size => "size",
            Role::Packed => "packed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackPart {
    pub src_role: String,
    pub shift_bits: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMapping {
    pub field: String,
    pub role: Role,
    pub loop_dependent: bool,
    /// Quantity written for non-packed roles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pack: Vec<PackPart>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatmulSpec {
    pub m: u64,
    pub n: u64,
    pub k: u64,
    pub tile_m: u64,
    pub tile_n: u64,
    pub tile_k: u64,
    pub field_map: Vec<FieldMapping>,
}

impl MatmulSpec {
    pub const ELEMENT_OPS_PER_MAC: u64 = 2;

    pub fn ops_per_launch(&self) -> u64 {
        Self::ELEMENT_OPS_PER_MAC * self.tile_m * self.tile_n * self.tile_k
    }

    pub fn launches(&self) -> u64 {
        (self.m / self.tile_m) * (self.n / self.tile_n) * (self.k / self.tile_k)
    }

    pub fn total_ops(&self) -> u64 {
        Self::ELEMENT_OPS_PER_MAC * self.m * self.n * self.k
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        for (name, v) in [
            ("M", self.m),
            ("N", self.n),
            ("K", self.k),
            ("tile_m", self.tile_m),
            ("tile_n", self.tile_n),
            ("tile_k", self.tile_k),
        ] {
            if v == 0 {
                return Err(BenchError::NonPositive(name));
            }
        }
        for (name, dim, tile) in [
            ("M", self.m, self.tile_m),
            ("N", self.n, self.tile_n),
            ("K", self.k, self.tile_k),
        ] {
            if dim % tile != 0 {
                return Err(BenchError::NonDividing { name, dim, tile });
            }
        }
        let mut seen = Vec::new();
        for f in &self.field_map {
            if seen.contains(&&f.field) {
                return Err(BenchError::DuplicateField(f.field.clone()));
            }
            seen.push(&f.field);
            let quantities = self.sources(f)?;
            let depends = quantities.iter().any(|q| self.varies(q));
            if depends && !f.loop_dependent {
                return Err(BenchError::NotGlobal(f.field.clone()));
            }
        }
        Ok(())
    }

    fn sources(&self, f: &FieldMapping) -> Result<Vec<Quantity>, BenchError> {
        if f.role == Role::Packed {
            if f.pack.is_empty() {
                return Err(BenchError::EmptyPack(f.field.clone()));
            }
            f.pack
                .iter()
                .map(|p| Quantity::parse(&p.src_role))
                .collect()
        } else {
            let src = f
                .source
                .as_deref()
                .ok_or_else(|| BenchError::MissingSource(f.field.clone(), f.role.name().into()))?;
            Ok(vec![Quantity::parse(src)?])
        }
    }

    fn trips(&self) -> [u64; 3] {
        [
            self.m / self.tile_m,
            self.n / self.tile_n,
            self.k / self.tile_k,
        ]
    }

    /// Whether the quantity changes across emitted loop iterations.
    fn varies(&self, q: &Quantity) -> bool {
        let t = self.trips();
        q.loops().iter().any(|&l| t[l] > 1)
    }
}

/// Named host-side quantities a field can be loaded from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Quantity {
    AddrA,
    AddrB,
    AddrC,
    AddrD,
    StrideA,
    StrideB,
    StrideC,
    StrideD,
    SizeM,
    SizeN,
    SizeK,
    Iv(usize),
    Lit(u64),
}

impl Quantity {
    fn parse(s: &str) -> Result<Quantity, BenchError> {
        Ok(match s {
            "addr_a" => Quantity::AddrA,
            "addr_b" => Quantity::AddrB,
            "addr_c" => Quantity::AddrC,
            "addr_d" => Quantity::AddrD,
            "stride_a" => Quantity::StrideA,
            "stride_b" => Quantity::StrideB,
            "stride_c" => Quantity::StrideC,
            "stride_d" => Quantity::StrideD,
            "size_m" => Quantity::SizeM,
            "size_n" => Quantity::SizeN,
            "size_k" => Quantity::SizeK,
            "iv_m" => Quantity::Iv(0),
            "iv_n" => Quantity::Iv(1),
            "iv_k" => Quantity::Iv(2),
            _ => match s.strip_prefix("lit:").and_then(|n| n.parse().ok()) {
                Some(n) => Quantity::Lit(n),
                None => return Err(BenchError::UnknownQuantity(s.into())),
            },
        })
    }

    /// Loop indices (0 = m, 1 = n, 2 = k) the quantity reads.
    fn loops(&self) -> &'static [usize] {
        match self {
            Quantity::AddrA => &[0, 2],
            Quantity::AddrB => &[2, 1],
            Quantity::AddrC | Quantity::AddrD => &[0, 1],
            Quantity::Iv(0) => &[0],
            Quantity::Iv(1) => &[1],
            Quantity::Iv(_) => &[2],
            _ => &[],
        }
    }
}

/// Tile extent in a sweep template: a fixed count or the whole dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TileDim {
    Fixed(u64),
    Full(FullMarker),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FullMarker {
    Full,
}

impl TileDim {
    fn resolve(self, dim: u64) -> u64 {
        match self {
            TileDim::Fixed(t) => t,
            TileDim::Full(_) => dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    #[serde(rename = "M", default)]
    m: Option<u64>,
    #[serde(rename = "N", default)]
    n: Option<u64>,
    #[serde(rename = "K", default)]
    k: Option<u64>,
    tile_m: TileDim,
    tile_n: TileDim,
    tile_k: TileDim,
    field_map: Vec<FieldMapping>,
}

/// Tile shape and field mapping, instantiated per square problem size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepTemplate {
    pub tile_m: TileDim,
    pub tile_n: TileDim,
    pub tile_k: TileDim,
    pub field_map: Vec<FieldMapping>,
}

impl SweepTemplate {
    pub fn instantiate(&self, m: u64, n: u64, k: u64) -> MatmulSpec {
        MatmulSpec {
            m,
            n,
            k,
            tile_m: self.tile_m.resolve(m),
            tile_n: self.tile_n.resolve(n),
            tile_k: self.tile_k.resolve(k),
            field_map: self.field_map.clone(),
        }
    }

    pub fn square(&self, size: u64) -> MatmulSpec {
        self.instantiate(size, size, size)
    }
}

fn parse_file(text: &str) -> Result<SpecFile, BenchError> {
    serde_json::from_str(text).map_err(|e| BenchError::Json(e.to_string()))
}

/// Parses a spec file with concrete `M`, `N`, `K`. Tiles may be `"full"`.
pub fn load_matmul_spec(text: &str) -> Result<MatmulSpec, BenchError> {
    let f = parse_file(text)?;
    let (Some(m), Some(n), Some(k)) = (f.m, f.n, f.k) else {
        return Err(BenchError::MissingDims);
    };
    let spec = SweepTemplate {
        tile_m: f.tile_m,
        tile_n: f.tile_n,
        tile_k: f.tile_k,
        field_map: f.field_map,
    }
    .instantiate(m, n, k);
    spec.validate()?;
    Ok(spec)
}

/// Parses a spec file as a template; problem dimensions, if present, are
/// ignored.
pub fn load_sweep_template(text: &str) -> Result<SweepTemplate, BenchError> {
    let f = parse_file(text)?;
    Ok(SweepTemplate {
        tile_m: f.tile_m,
        tile_n: f.tile_n,
        tile_k: f.tile_k,
        field_map: f.field_map,
    })
}

struct Gen<'s> {
    spec: &'s MatmulSpec,
    func: Function,
    ivs: [Option<ValueId>; 3],
    cache: HashMap<String, ValueId>,
}

impl Gen<'_> {
    fn int(&mut self) -> ValueId {
        self.func.new_value(ValueType::INDEX)
    }

    fn konst(&mut self, ops: &mut Vec<Op>, value: u64) -> ValueId {
        let r = self.int();
        ops.push(Op::new(vec![r], OpKind::Const { value }));
        r
    }

    fn arith(&mut self, ops: &mut Vec<Op>, op: ArithOp, lhs: ValueId, rhs: ValueId) -> ValueId {
        let r = self.int();
        ops.push(Op::new(vec![r], OpKind::Arith { op, lhs, rhs }));
        r
    }

    fn iv(&mut self, ops: &mut Vec<Op>, l: usize) -> ValueId {
        match self.ivs[l] {
            Some(v) => v,
            None => self.konst(ops, 0),
        }
    }

    /// base + row * row_len + col
    fn address(
        &mut self,
        ops: &mut Vec<Op>,
        base: u64,
        row: usize,
        row_len: u64,
        col: usize,
    ) -> ValueId {
        let b = self.konst(ops, base);
        let r = self.iv(ops, row);
        let len = self.konst(ops, row_len);
        let off = self.arith(ops, ArithOp::Mul, r, len);
        let c = self.iv(ops, col);
        let t = self.arith(ops, ArithOp::Add, b, off);
        self.arith(ops, ArithOp::Add, t, c)
    }

    fn quantity(&mut self, ops: &mut Vec<Op>, q: &Quantity) -> ValueId {
        let s = self.spec;
        match q {
            Quantity::AddrA => self.address(ops, BASE_A, 0, s.k, 2),
            Quantity::AddrB => self.address(ops, BASE_B, 2, s.n, 1),
            Quantity::AddrC => self.address(ops, BASE_C, 0, s.n, 1),
            Quantity::AddrD => self.address(ops, BASE_D, 0, s.n, 1),
            Quantity::StrideA => self.konst(ops, s.k),
            Quantity::StrideB | Quantity::StrideC | Quantity::StrideD => self.konst(ops, s.n),
            Quantity::SizeM => self.konst(ops, s.tile_m),
            Quantity::SizeN => self.konst(ops, s.tile_n),
            Quantity::SizeK => self.konst(ops, s.tile_k),
            Quantity::Iv(l) => self.iv(ops, *l),
            Quantity::Lit(n) => self.konst(ops, *n),
        }
    }

    fn field_value(&mut self, ops: &mut Vec<Op>, f: &FieldMapping) -> ValueId {
        let quantities = self.spec.sources(f).expect("validated");
        let mut acc: Option<ValueId> = None;
        for (q, part) in quantities
            .iter()
            .zip(f.pack.iter().map(Some).chain(std::iter::repeat(None)))
        {
            let mut v = self.quantity(ops, q);
            let shift = part.map_or(0, |p| p.shift_bits);
            if shift > 0 {
                let sh = self.konst(ops, shift as u64);
                v = self.arith(ops, ArithOp::Shl, v, sh);
            }
            acc = Some(match acc {
                None => v,
                Some(a) => self.arith(ops, ArithOp::Or, a, v),
            });
        }
        acc.expect("at least one source")
    }
}

/// Emits `@matmul` driving `accel` over a weight-stationary loop nest
/// (m outer, k innermost).
pub fn gen_tiled_matmul(
    spec: &MatmulSpec,
    accel: &AcceleratorDescriptor,
) -> Result<Program, BenchError> {
    spec.validate()?;
    for f in &spec.field_map {
        if accel.field_index(&f.field).is_none() {
            return Err(BenchError::UnknownField(f.field.clone()));
        }
    }
    let mut g = Gen {
        spec,
        func: Function::new("matmul"),
        ivs: [None; 3],
        cache: HashMap::new(),
    };
    let trips = spec.trips();
    let tiles = [spec.tile_m, spec.tile_n, spec.tile_k];
    let dims = [spec.m, spec.n, spec.k];
    let emitted: Vec<usize> = (0..3).filter(|&l| trips[l] > 1).collect();
    for &l in &emitted {
        g.ivs[l] = Some(g.int());
    }

    let mut pre = Vec::new();
    let mut globals = Vec::new();
    for f in &spec.field_map {
        if !f.loop_dependent {
            let v = g.field_value(&mut pre, f);
            g.cache.insert(f.field.clone(), v);
            globals.push(f.field.clone());
        }
    }

    let mut body = Vec::new();
    let mut fields = Vec::new();
    for f in &spec.field_map {
        let v = match g.cache.get(&f.field) {
            Some(v) => *v,
            None => g.field_value(&mut body, f),
        };
        fields.push((f.field.clone(), v));
    }
    let state = g.func.new_value(ValueType::State(accel.name.clone()));
    body.push(Op::new(
        vec![state],
        OpKind::Setup {
            accel: accel.name.clone(),
            fields,
            input: None,
        },
    ));
    let token = g.func.new_value(ValueType::Token(accel.name.clone()));
    body.push(Op::new(
        vec![token],
        OpKind::Launch {
            state,
            fields: Vec::new(),
            ops: Workload::Const(spec.ops_per_launch()),
        },
    ));
    body.push(Op::new(vec![], OpKind::Await { token }));

    let mut ops = body;
    for &l in emitted.iter().rev() {
        ops.push(Op::new(vec![], OpKind::Yield { values: vec![] }));
        let iv = g.ivs[l].expect("emitted loop has an iv");
        ops = vec![Op::new(
            vec![],
            OpKind::For {
                lower: 0,
                upper: dims[l] as i64,
                step: tiles[l] as i64,
                inits: vec![],
                body: Block::new(vec![iv], ops),
            },
        )];
    }
    pre.extend(ops);
    g.func.body = Block::new(vec![], pre);
    Ok(Program {
        accelerators: vec![accel.name.clone()],
        functions: vec![g.func.renumbered()],
    })
}

/// One program per square size, in input order.
pub fn sweep(
    sizes: &[u64],
    template: &SweepTemplate,
    accel: &AcceleratorDescriptor,
) -> Result<Vec<(u64, Program)>, BenchError> {
    sizes
        .iter()
        .map(|&s| Ok((s, gen_tiled_matmul(&template.square(s), accel)?)))
        .collect()
}
