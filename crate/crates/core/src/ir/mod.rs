//! Textual LLVM IR scanning and static feature extraction.

mod features;
mod opcode;
mod parse;

pub use features::{
    autophase_counts, autophase_index, extract_autophase, extract_instcount, instruction_count,
    FeatureError, FeatureVector, InstCountVector, AUTOPHASE_DIM, AUTOPHASE_FEATURES,
    AUTOPHASE_SCHEMA_ID, TOTAL_INSTS_INDEX,
};
pub use opcode::Opcode;
pub use parse::{parse_ir, BlockStats, EdgeCounts, FunctionStats, InstInfo, IrModule, ParseError};

pub(crate) use parse::{analyze_instruction, block_label, defined_name, instruction_rhs, strip_comment};
