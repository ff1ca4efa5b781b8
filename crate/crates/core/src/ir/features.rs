//! Autophase-style and InstCount feature vectors over a scanned module.
//!
//! Every feature is a whole-module sum over function bodies, so features of
//! two concatenated modules (with disjoint function names) add elementwise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::opcode::Opcode;
use super::parse::{BlockStats, FunctionStats, IrModule};

/// Width of the Autophase vector.
pub const AUTOPHASE_DIM: usize = 56;

/// Version tag of [`AUTOPHASE_FEATURES`] and its counting rules.
pub const AUTOPHASE_SCHEMA_ID: &str = "autophase-compilergym-v1";

/// Feature names in vector order (CompilerGym's Autophase observation).
pub const AUTOPHASE_FEATURES: [&str; AUTOPHASE_DIM] = [
    "BBNumArgsHi",
    "BBNumArgsLo",
    "onePred",
    "onePredOneSuc",
    "onePredTwoSuc",
    "oneSuccessor",
    "twoPred",
    "twoPredOneSuc",
    "twoEach",
    "twoSuccessor",
    "morePreds",
    "BB03Phi",
    "BBHiPhi",
    "BBNoPhi",
    "BeginPhi",
    "BranchCount",
    "returnInt",
    "CriticalCount",
    "NumEdges",
    "const32Bit",
    "const64Bit",
    "numConstZeroes",
    "numConstOnes",
    "UncondBranches",
    "binaryConstArg",
    "NumAShrInst",
    "NumAddInst",
    "NumAllocaInst",
    "NumAndInst",
    "BlockMid",
    "BlockLow",
    "NumBitCastInst",
    "NumBrInst",
    "NumCallInst",
    "NumGetElementPtrInst",
    "NumICmpInst",
    "NumLShrInst",
    "NumLoadInst",
    "NumMulInst",
    "NumOrInst",
    "NumPHIInst",
    "NumRetInst",
    "NumSExtInst",
    "NumSelectInst",
    "NumShlInst",
    "NumStoreInst",
    "NumSubInst",
    "NumTruncInst",
    "NumXorInst",
    "NumZExtInst",
    "TotalBlocks",
    "TotalInsts",
    "TotalMemInst",
    "TotalFuncs",
    "ArgsPhi",
    "testUnary",
];

/// Index of `TotalInsts`, the default key feature for probe alignment.
pub const TOTAL_INSTS_INDEX: usize = 51;

pub fn autophase_index(name: &str) -> Option<usize> {
    AUTOPHASE_FEATURES.iter().position(|&n| n == name)
}

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("feature vector must have {expected} entries, got {actual}")]
    WrongLength { expected: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
    schema_id: String,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, FeatureError> {
        if values.len() != AUTOPHASE_DIM {
            return Err(FeatureError::WrongLength {
                expected: AUTOPHASE_DIM,
                actual: values.len(),
            });
        }
        Ok(Self {
            values,
            schema_id: AUTOPHASE_SCHEMA_ID.to_string(),
        })
    }

    pub fn zeros() -> Self {
        Self::new(vec![0.0; AUTOPHASE_DIM]).expect("fixed width")
    }

    pub fn from_counts(counts: &[u64; AUTOPHASE_DIM]) -> Self {
        Self::new(counts.iter().map(|&c| c as f64).collect()).expect("fixed width")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn schema_id(&self) -> &str {
        &self.schema_id
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        autophase_index(name).map(|i| self.values[i])
    }

    /// Integer view; entries are rounded and clamped at zero.
    pub fn counts(&self) -> Vec<u64> {
        self.values.iter().map(|v| v.max(0.0).round() as u64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstCountVector {
    /// Counts aligned with [`Opcode::ALL`].
    pub values: Vec<u64>,
    pub total_instructions: u64,
}

impl InstCountVector {
    pub fn get(&self, op: Opcode) -> u64 {
        self.values[op.index()]
    }

    pub fn names() -> impl Iterator<Item = &'static str> {
        Opcode::ALL.iter().map(|o| o.as_str())
    }

    pub fn as_map(&self) -> std::collections::BTreeMap<String, u64> {
        Self::names()
            .zip(&self.values)
            .map(|(n, &v)| (n.to_string(), v))
            .collect()
    }

    pub fn from_map(map: &std::collections::BTreeMap<String, u64>) -> Self {
        let values: Vec<u64> = Self::names().map(|n| map.get(n).copied().unwrap_or(0)).collect();
        let total_instructions = values.iter().sum();
        Self {
            values,
            total_instructions,
        }
    }
}

fn block_features(out: &mut [u64; AUTOPHASE_DIM], b: &BlockStats) {
    let preds = b.predecessors;
    let succs = b.successors.len();
    let phi_args = b.phi_args();
    let phis = b.phi_count();
    let insts = b.insts.len();

    let mut bump = |name: &str, cond: bool| {
        if cond {
            out[autophase_index(name).expect("schema name")] += 1;
        }
    };
    bump("BBNumArgsHi", phi_args > 5);
    bump("BBNumArgsLo", (1..=5).contains(&phi_args));
    bump("onePred", preds == 1);
    bump("onePredOneSuc", preds == 1 && succs == 1);
    bump("onePredTwoSuc", preds == 1 && succs == 2);
    bump("oneSuccessor", succs == 1);
    bump("twoPred", preds == 2);
    bump("twoPredOneSuc", preds == 2 && succs == 1);
    bump("twoEach", preds == 2 && succs == 2);
    bump("twoSuccessor", succs == 2);
    bump("morePreds", preds > 2);
    bump("BB03Phi", (1..=3).contains(&phis));
    bump("BBHiPhi", phis > 3);
    bump("BBNoPhi", phis == 0);
    bump("BlockMid", (15..=500).contains(&insts));
    bump("BlockLow", insts < 15);
    out[autophase_index("BeginPhi").unwrap()] += phis as u64;
    out[autophase_index("ArgsPhi").unwrap()] += phi_args;
}

const OPCODE_FEATURES: &[(&str, Opcode)] = &[
    ("NumAShrInst", Opcode::AShr),
    ("NumAddInst", Opcode::Add),
    ("NumAllocaInst", Opcode::Alloca),
    ("NumAndInst", Opcode::And),
    ("NumBitCastInst", Opcode::BitCast),
    ("NumBrInst", Opcode::Br),
    ("NumCallInst", Opcode::Call),
    ("NumGetElementPtrInst", Opcode::GetElementPtr),
    ("NumICmpInst", Opcode::ICmp),
    ("NumLShrInst", Opcode::LShr),
    ("NumLoadInst", Opcode::Load),
    ("NumMulInst", Opcode::Mul),
    ("NumOrInst", Opcode::Or),
    ("NumPHIInst", Opcode::Phi),
    ("NumRetInst", Opcode::Ret),
    ("NumSExtInst", Opcode::SExt),
    ("NumSelectInst", Opcode::Select),
    ("NumShlInst", Opcode::Shl),
    ("NumStoreInst", Opcode::Store),
    ("NumSubInst", Opcode::Sub),
    ("NumTruncInst", Opcode::Trunc),
    ("NumXorInst", Opcode::Xor),
    ("NumZExtInst", Opcode::ZExt),
];

fn function_features(out: &mut [u64; AUTOPHASE_DIM], f: &FunctionStats) {
    let idx = |name: &str| autophase_index(name).expect("schema name");
    for b in &f.blocks {
        block_features(out, b);
        for inst in &b.insts {
            let op = inst.opcode();
            if op == Opcode::Br {
                out[idx("BranchCount")] += 1;
            }
            if inst.unconditional_branch {
                out[idx("UncondBranches")] += 1;
            }
            if inst.returns_int {
                out[idx("returnInt")] += 1;
            }
            out[idx("const32Bit")] += u64::from(inst.const_i32);
            out[idx("const64Bit")] += u64::from(inst.const_i64);
            out[idx("numConstZeroes")] += u64::from(inst.const_zero);
            out[idx("numConstOnes")] += u64::from(inst.const_one);
            if op.is_binary() && inst.has_literal_operand {
                out[idx("binaryConstArg")] += 1;
            }
            if op.is_memory() {
                out[idx("TotalMemInst")] += 1;
            }
            if op.is_unary() {
                out[idx("testUnary")] += 1;
            }
        }
    }
    for (name, op) in OPCODE_FEATURES {
        out[idx(name)] += f.instruction_counts.get(op).copied().unwrap_or(0);
    }
    out[idx("CriticalCount")] += f.edge_counts.critical;
    out[idx("NumEdges")] += f.edge_counts.edges;
    out[idx("TotalBlocks")] += f.basic_block_count as u64;
    out[idx("TotalInsts")] += f.instruction_total();
    if f.basic_block_count > 0 {
        out[idx("TotalFuncs")] += 1;
    }
}

/// Raw Autophase counts for a module.
pub fn autophase_counts(m: &IrModule) -> [u64; AUTOPHASE_DIM] {
    let mut out = [0u64; AUTOPHASE_DIM];
    for f in &m.functions {
        function_features(&mut out, f);
    }
    out
}

pub fn extract_autophase(m: &IrModule) -> FeatureVector {
    FeatureVector::from_counts(&autophase_counts(m))
}

pub fn extract_instcount(m: &IrModule) -> InstCountVector {
    let mut values = vec![0u64; Opcode::ALL.len()];
    for f in &m.functions {
        for (op, &n) in &f.instruction_counts {
            values[op.index()] += n;
        }
    }
    let total_instructions = values.iter().sum();
    InstCountVector {
        values,
        total_instructions,
    }
}

pub fn instruction_count(m: &IrModule) -> u64 {
    m.functions.iter().map(FunctionStats::instruction_total).sum()
}
