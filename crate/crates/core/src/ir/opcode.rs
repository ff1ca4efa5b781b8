//! LLVM instruction opcodes recognized by the scanner.
//!
//! The order follows LLVM's `Instruction.def` and is the InstCount schema
//! order. Anything the scanner does not recognize lands in [`Opcode::Other`].

use std::fmt;
use std::str::FromStr;

macro_rules! opcodes {
    ($($variant:ident => $name:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum Opcode {
            $($variant,)*
            Other,
        }

        impl Opcode {
            /// Every opcode in schema order, `Other` last.
            pub const ALL: &'static [Opcode] = &[$(Opcode::$variant,)* Opcode::Other];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(Opcode::$variant => $name,)*
                    Opcode::Other => "other",
                }
            }

            /// Maps an IR mnemonic to its opcode; unknown mnemonics map to `Other`.
            pub fn from_mnemonic(s: &str) -> Opcode {
                match s {
                    $($name => Opcode::$variant,)*
                    _ => Opcode::Other,
                }
            }
        }
    };
}

opcodes! {
    Ret => "ret",
    Br => "br",
    Switch => "switch",
    IndirectBr => "indirectbr",
    Invoke => "invoke",
    Resume => "resume",
    Unreachable => "unreachable",
    CleanupRet => "cleanupret",
    CatchRet => "catchret",
    CatchSwitch => "catchswitch",
    CallBr => "callbr",
    FNeg => "fneg",
    Add => "add",
    FAdd => "fadd",
    Sub => "sub",
    FSub => "fsub",
    Mul => "mul",
    FMul => "fmul",
    UDiv => "udiv",
    SDiv => "sdiv",
    FDiv => "fdiv",
    URem => "urem",
    SRem => "srem",
    FRem => "frem",
    Shl => "shl",
    LShr => "lshr",
    AShr => "ashr",
    And => "and",
    Or => "or",
    Xor => "xor",
    Alloca => "alloca",
    Load => "load",
    Store => "store",
    GetElementPtr => "getelementptr",
    Fence => "fence",
    AtomicCmpXchg => "cmpxchg",
    AtomicRmw => "atomicrmw",
    Trunc => "trunc",
    ZExt => "zext",
    SExt => "sext",
    FpToUi => "fptoui",
    FpToSi => "fptosi",
    UiToFp => "uitofp",
    SiToFp => "sitofp",
    FpTrunc => "fptrunc",
    FpExt => "fpext",
    PtrToInt => "ptrtoint",
    IntToPtr => "inttoptr",
    BitCast => "bitcast",
    AddrSpaceCast => "addrspacecast",
    CleanupPad => "cleanuppad",
    CatchPad => "catchpad",
    ICmp => "icmp",
    FCmp => "fcmp",
    Phi => "phi",
    Call => "call",
    Select => "select",
    VaArg => "va_arg",
    ExtractElement => "extractelement",
    InsertElement => "insertelement",
    ShuffleVector => "shufflevector",
    ExtractValue => "extractvalue",
    InsertValue => "insertvalue",
    LandingPad => "landingpad",
    Freeze => "freeze",
}

impl Opcode {
    /// Position of this opcode in [`Opcode::ALL`].
    pub fn index(self) -> usize {
        Opcode::ALL
            .iter()
            .position(|&o| o == self)
            .expect("opcode present in schema")
    }

    pub fn is_terminator(self) -> bool {
        matches!(
            self,
            Opcode::Ret
                | Opcode::Br
                | Opcode::Switch
                | Opcode::IndirectBr
                | Opcode::Invoke
                | Opcode::Resume
                | Opcode::Unreachable
                | Opcode::CleanupRet
                | Opcode::CatchRet
                | Opcode::CatchSwitch
                | Opcode::CallBr
        )
    }

    /// Two-operand arithmetic and bitwise operators.
    pub fn is_binary(self) -> bool {
        matches!(
            self,
            Opcode::Add
                | Opcode::FAdd
                | Opcode::Sub
                | Opcode::FSub
                | Opcode::Mul
                | Opcode::FMul
                | Opcode::UDiv
                | Opcode::SDiv
                | Opcode::FDiv
                | Opcode::URem
                | Opcode::SRem
                | Opcode::FRem
                | Opcode::Shl
                | Opcode::LShr
                | Opcode::AShr
                | Opcode::And
                | Opcode::Or
                | Opcode::Xor
        )
    }

    pub fn is_cast(self) -> bool {
        matches!(
            self,
            Opcode::Trunc
                | Opcode::ZExt
                | Opcode::SExt
                | Opcode::FpToUi
                | Opcode::FpToSi
                | Opcode::UiToFp
                | Opcode::SiToFp
                | Opcode::FpTrunc
                | Opcode::FpExt
                | Opcode::PtrToInt
                | Opcode::IntToPtr
                | Opcode::BitCast
                | Opcode::AddrSpaceCast
        )
    }

    /// Single-operand instructions (LLVM's `UnaryInstruction` hierarchy plus `fneg`).
    pub fn is_unary(self) -> bool {
        self.is_cast()
            || matches!(
                self,
                Opcode::Alloca
                    | Opcode::Load
                    | Opcode::VaArg
                    | Opcode::ExtractValue
                    | Opcode::Freeze
                    | Opcode::FNeg
            )
    }

    pub fn is_memory(self) -> bool {
        matches!(
            self,
            Opcode::Load
                | Opcode::Store
                | Opcode::AtomicRmw
                | Opcode::AtomicCmpXchg
                | Opcode::Fence
        )
    }

    /// Instructions without side effects, safe for the mock optimizer to drop when unused.
    pub fn is_pure(self) -> bool {
        self.is_binary()
            || self.is_cast()
            || matches!(
                self,
                Opcode::FNeg
                    | Opcode::ICmp
                    | Opcode::FCmp
                    | Opcode::Phi
                    | Opcode::Select
                    | Opcode::GetElementPtr
                    | Opcode::ExtractElement
                    | Opcode::InsertElement
                    | Opcode::ShuffleVector
                    | Opcode::ExtractValue
                    | Opcode::InsertValue
                    | Opcode::Freeze
                    | Opcode::Alloca
                    | Opcode::Load
            )
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Opcode {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Opcode::from_mnemonic(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_has_unique_names() {
        let mut names: Vec<_> = Opcode::ALL.iter().map(|o| o.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), Opcode::ALL.len());
        assert_eq!(*Opcode::ALL.last().unwrap(), Opcode::Other);
    }

    #[test]
    fn mnemonics_round_trip() {
        for &op in Opcode::ALL {
            if op != Opcode::Other {
                assert_eq!(Opcode::from_mnemonic(op.as_str()), op);
            }
            assert_eq!(Opcode::ALL[op.index()], op);
        }
        assert_eq!(Opcode::from_mnemonic("frobnicate"), Opcode::Other);
    }
}
