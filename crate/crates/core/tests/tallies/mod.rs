//! Hand-counted feature tallies for the IR fixtures.
//!
//! Each entry lists only the nonzero entries; every other feature must be zero.
#![allow(dead_code)]

use std::collections::BTreeMap;

use spectrum_forge::ir::{extract_autophase, extract_instcount, parse_ir, AUTOPHASE_DIM, AUTOPHASE_FEATURES};

pub struct Tally {
    pub file: &'static str,
    pub autophase: &'static [(&'static str, u64)],
    pub insts: &'static [(&'static str, u64)],
}

pub const F01_TWO_BLOCKS: Tally = Tally {
    file: "f01_two_blocks.ll",
    autophase: &[
        ("onePred", 1),
        ("oneSuccessor", 1),
        ("BBNoPhi", 2),
        ("BranchCount", 1),
        ("NumEdges", 1),
        ("const32Bit", 2),
        ("numConstOnes", 1),
        ("UncondBranches", 1),
        ("binaryConstArg", 2),
        ("NumAddInst", 3),
        ("BlockLow", 2),
        ("NumBrInst", 1),
        ("NumRetInst", 1),
        ("TotalBlocks", 2),
        ("TotalInsts", 5),
        ("TotalFuncs", 1),
    ],
    insts: &[
        ("add", 3),
        ("br", 1),
        ("ret", 1),
    ],
};

pub const F02_MINIMAL: Tally = Tally {
    file: "f02_minimal.ll",
    autophase: &[
        ("BBNoPhi", 1),
        ("BlockLow", 1),
        ("NumRetInst", 1),
        ("TotalBlocks", 1),
        ("TotalInsts", 1),
        ("TotalFuncs", 1),
    ],
    insts: &[
        ("ret", 1),
    ],
};

pub const F03_LOOP: Tally = Tally {
    file: "f03_loop.ll",
    autophase: &[
        ("BBNumArgsLo", 1),
        ("onePred", 1),
        ("oneSuccessor", 1),
        ("twoPred", 1),
        ("twoEach", 1),
        ("twoSuccessor", 1),
        ("BB03Phi", 1),
        ("BBNoPhi", 2),
        ("BeginPhi", 2),
        ("BranchCount", 2),
        ("CriticalCount", 1),
        ("NumEdges", 3),
        ("const32Bit", 3),
        ("numConstZeroes", 2),
        ("numConstOnes", 1),
        ("UncondBranches", 1),
        ("binaryConstArg", 1),
        ("NumAddInst", 2),
        ("BlockLow", 3),
        ("NumBrInst", 2),
        ("NumICmpInst", 1),
        ("NumPHIInst", 2),
        ("NumRetInst", 1),
        ("TotalBlocks", 3),
        ("TotalInsts", 8),
        ("TotalFuncs", 1),
        ("ArgsPhi", 4),
    ],
    insts: &[
        ("add", 2),
        ("br", 2),
        ("icmp", 1),
        ("phi", 2),
        ("ret", 1),
    ],
};

pub const F04_MEMORY: Tally = Tally {
    file: "f04_memory.ll",
    autophase: &[
        ("BBNoPhi", 1),
        ("const32Bit", 1),
        ("NumAllocaInst", 1),
        ("BlockLow", 1),
        ("NumBitCastInst", 1),
        ("NumGetElementPtrInst", 1),
        ("NumLoadInst", 2),
        ("NumRetInst", 1),
        ("NumSExtInst", 1),
        ("NumStoreInst", 3),
        ("NumTruncInst", 1),
        ("NumZExtInst", 1),
        ("TotalBlocks", 1),
        ("TotalInsts", 12),
        ("TotalMemInst", 5),
        ("TotalFuncs", 1),
        ("testUnary", 7),
    ],
    insts: &[
        ("alloca", 1),
        ("bitcast", 1),
        ("getelementptr", 1),
        ("load", 2),
        ("ret", 1),
        ("sext", 1),
        ("store", 3),
        ("trunc", 1),
        ("zext", 1),
    ],
};

pub const F05_CALLS: Tally = Tally {
    file: "f05_calls.ll",
    autophase: &[
        ("BBNoPhi", 1),
        ("returnInt", 3),
        ("const32Bit", 3),
        ("const64Bit", 1),
        ("numConstZeroes", 2),
        ("numConstOnes", 1),
        ("binaryConstArg", 1),
        ("BlockLow", 1),
        ("NumCallInst", 4),
        ("NumMulInst", 1),
        ("NumRetInst", 1),
        ("NumSubInst", 1),
        ("TotalBlocks", 1),
        ("TotalInsts", 7),
        ("TotalFuncs", 1),
    ],
    insts: &[
        ("call", 4),
        ("mul", 1),
        ("sub", 1),
        ("ret", 1),
    ],
};

pub const F06_SWITCH: Tally = Tally {
    file: "f06_switch.ll",
    autophase: &[
        ("BBNumArgsLo", 1),
        ("onePred", 4),
        ("onePredOneSuc", 4),
        ("oneSuccessor", 4),
        ("morePreds", 1),
        ("BB03Phi", 1),
        ("BBNoPhi", 5),
        ("BeginPhi", 1),
        ("BranchCount", 4),
        ("NumEdges", 8),
        ("const32Bit", 7),
        ("numConstZeroes", 2),
        ("numConstOnes", 1),
        ("UncondBranches", 4),
        ("BlockLow", 6),
        ("NumBrInst", 4),
        ("NumPHIInst", 1),
        ("NumRetInst", 1),
        ("TotalBlocks", 6),
        ("TotalInsts", 7),
        ("TotalFuncs", 1),
        ("ArgsPhi", 4),
    ],
    insts: &[
        ("switch", 1),
        ("br", 4),
        ("phi", 1),
        ("ret", 1),
    ],
};

pub const F07_BITS: Tally = Tally {
    file: "f07_bits.ll",
    autophase: &[
        ("BBNumArgsLo", 1),
        ("onePred", 2),
        ("onePredOneSuc", 2),
        ("oneSuccessor", 2),
        ("twoPred", 1),
        ("twoSuccessor", 1),
        ("BB03Phi", 1),
        ("BBNoPhi", 3),
        ("BeginPhi", 1),
        ("BranchCount", 3),
        ("NumEdges", 4),
        ("const64Bit", 7),
        ("numConstZeroes", 1),
        ("numConstOnes", 2),
        ("UncondBranches", 2),
        ("binaryConstArg", 6),
        ("NumAShrInst", 1),
        ("NumAndInst", 1),
        ("BlockLow", 4),
        ("NumBrInst", 3),
        ("NumLShrInst", 1),
        ("NumOrInst", 1),
        ("NumPHIInst", 1),
        ("NumRetInst", 1),
        ("NumSelectInst", 1),
        ("NumShlInst", 1),
        ("NumXorInst", 1),
        ("TotalBlocks", 4),
        ("TotalInsts", 12),
        ("TotalFuncs", 1),
        ("ArgsPhi", 2),
    ],
    insts: &[
        ("and", 1),
        ("or", 1),
        ("br", 3),
        ("shl", 1),
        ("lshr", 1),
        ("ashr", 1),
        ("xor", 1),
        ("phi", 1),
        ("select", 1),
        ("ret", 1),
    ],
};

pub const F08_LONG_BLOCK: Tally = Tally {
    file: "f08_long_block.ll",
    autophase: &[
        ("BBNoPhi", 2),
        ("NumAddInst", 14),
        ("BlockMid", 1),
        ("BlockLow", 1),
        ("NumRetInst", 2),
        ("TotalBlocks", 2),
        ("TotalInsts", 16),
        ("TotalFuncs", 2),
    ],
    insts: &[
        ("add", 14),
        ("ret", 2),
    ],
};

pub const F09_EXCEPTIONS: Tally = Tally {
    file: "f09_exceptions.ll",
    autophase: &[
        ("onePred", 2),
        ("twoSuccessor", 1),
        ("BBNoPhi", 3),
        ("NumEdges", 2),
        ("binaryConstArg", 1),
        ("BlockLow", 3),
        ("NumRetInst", 1),
        ("NumSelectInst", 1),
        ("TotalBlocks", 3),
        ("TotalInsts", 8),
        ("TotalFuncs", 1),
        ("testUnary", 1),
    ],
    insts: &[
        ("fneg", 1),
        ("fmul", 1),
        ("invoke", 1),
        ("fcmp", 1),
        ("select", 1),
        ("ret", 1),
        ("landingpad", 1),
        ("resume", 1),
    ],
};

/// Same function as f01 buried in comments, metadata and attributes.
pub const F10_NOISY: Tally = Tally {
    file: "f10_noisy.ll",
    autophase: F01_TWO_BLOCKS.autophase,
    insts: F01_TWO_BLOCKS.insts,
};

pub const F11_OZ_QUARTER: Tally = Tally {
    file: "f11_oz_quarter.ll",
    autophase: &[
        ("BBNoPhi", 1),
        ("const32Bit", 3),
        ("numConstZeroes", 1),
        ("numConstOnes", 1),
        ("binaryConstArg", 3),
        ("NumAddInst", 2),
        ("NumAndInst", 1),
        ("BlockLow", 1),
        ("NumLoadInst", 1),
        ("NumMulInst", 2),
        ("NumOrInst", 1),
        ("NumRetInst", 1),
        ("NumShlInst", 1),
        ("NumStoreInst", 1),
        ("NumSubInst", 1),
        ("NumXorInst", 1),
        ("TotalBlocks", 1),
        ("TotalInsts", 12),
        ("TotalMemInst", 2),
        ("TotalFuncs", 1),
        ("testUnary", 1),
    ],
    insts: &[
        ("add", 2),
        ("mul", 2),
        ("sub", 1),
        ("store", 1),
        ("load", 1),
        ("xor", 1),
        ("and", 1),
        ("or", 1),
        ("shl", 1),
        ("ret", 1),
    ],
};

pub const ALL: &[&Tally] = &[
    &F01_TWO_BLOCKS,
    &F02_MINIMAL,
    &F03_LOOP,
    &F04_MEMORY,
    &F05_CALLS,
    &F06_SWITCH,
    &F07_BITS,
    &F08_LONG_BLOCK,
    &F09_EXCEPTIONS,
    &F10_NOISY,
    &F11_OZ_QUARTER,
];

pub fn dense(sparse: &[(&str, u64)]) -> Vec<u64> {
    let mut out = vec![0u64; AUTOPHASE_DIM];
    for &(name, v) in sparse {
        let i = AUTOPHASE_FEATURES
            .iter()
            .position(|&n| n == name)
            .unwrap_or_else(|| panic!("unknown feature {name}"));
        assert_eq!(out[i], 0, "{name} listed twice");
        out[i] = v;
    }
    out
}

/// Every disagreement between the extractors and the hand tally, one line each.
pub fn mismatches(t: &Tally, text: &str) -> Vec<String> {
    let module = match parse_ir(text) {
        Ok(m) => m,
        Err(e) => return vec![format!("{}: {e}", t.file)],
    };
    let got = extract_autophase(&module).counts();
    let want = dense(t.autophase);
    let mut out: Vec<String> = (0..AUTOPHASE_DIM)
        .filter(|&i| got[i] != want[i])
        .map(|i| format!("{}: {} got {} want {}", t.file, AUTOPHASE_FEATURES[i], got[i], want[i]))
        .collect();

    let got_ic: BTreeMap<String, u64> = extract_instcount(&module).as_map().into_iter().filter(|&(_, v)| v > 0).collect();
    let want_ic: BTreeMap<String, u64> = t.insts.iter().map(|&(n, v)| (n.to_string(), v)).collect();
    if got_ic != want_ic {
        out.push(format!("{}: opcodes got {got_ic:?} want {want_ic:?}", t.file));
    }
    let total: u64 = t.insts.iter().map(|&(_, v)| v).sum();
    if got[51] != total {
        out.push(format!("{}: TotalInsts {} vs opcode tally {total}", t.file, got[51]));
    }
    out
}
