//! Deterministic stand-in optimizer used by the `mock-opt` binary.
//!
//! Passes are line-level rewrites of function bodies. They are not meant to
//! preserve program semantics, only to change static features in ways that
//! are easy to count by hand:
//!
//! | pass | effect |
//! |------|--------|
//! | `drop-<op>` | delete every single-line `<op>` instruction |
//! | `drop1-<op>` | delete the first `<op>` instruction of the module |
//! | `dup-<op>` | duplicate every `<op>` instruction (copies get a `.dup` result name) |
//! | `dce`, `die`, `bdce` | one sweep deleting side-effect-free instructions whose result is unused |
//! | `adce`, `globaldce` | `dce` repeated until nothing changes |
//! | `instcombine`, `instsimplify`, `aggressive-instcombine` | fold `x+0`, `x-0`, `x\|0`, `x^0`, shifts by 0, `x*1`, `x/1`, `x&-1` into `x` |
//! | `early-cse`, `early-cse-memssa`, `gvn`, `newgvn` | per-block CSE of identical side-effect-free right-hand sides (loads excluded) |
//! | `mem2reg`, `sroa` | delete allocas and the loads/stores that address them; loaded values become `undef` |
//! | `strip`, `strip-debug-declare`, `strip-nondebug` | delete `llvm.dbg.*` calls |
//! | `crash` | fail with a nonzero exit |
//! | `hang` | never finish |
//! | `nondet` | append a time-dependent comment |
//! | anything else | no change |
//!
//! `-Oz` runs [`OZ_PIPELINE`].

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::ir::{analyze_instruction, block_label, defined_name, instruction_rhs, strip_comment, Opcode};

/// Passes run for the mock `-Oz` alias.
pub const OZ_PIPELINE: &[&str] = &["instcombine", "early-cse", "adce"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MockError {
    #[error("pass '{0}' crashed")]
    Crash(String),
    #[error("pass '{0}' never terminates")]
    Hang(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LineKind {
    Outside,
    /// `define ... {` through the closing `}`, exclusive of instructions.
    Structure,
    Label,
    Inst,
    /// Lines of a multi-line instruction after its first.
    Continuation,
}

struct Lines {
    text: Vec<String>,
    kind: Vec<LineKind>,
    /// Function index for body lines.
    func: Vec<Option<usize>>,
    /// Block ordinal (within the function) for instruction lines.
    block: Vec<usize>,
    removed: Vec<bool>,
}

impl Lines {
    fn new(input: &str) -> Self {
        let text: Vec<String> = input.lines().map(str::to_string).collect();
        let n = text.len();
        let mut kind = vec![LineKind::Outside; n];
        let mut func = vec![None; n];
        let mut block = vec![0; n];
        let mut in_body = false;
        let mut fidx = 0;
        let mut bidx = 0;
        let mut depth = 0i32;
        let mut opening = false;
        for (i, raw) in text.iter().enumerate() {
            let line = strip_comment(raw).trim();
            if !in_body {
                if line.starts_with("define") || opening {
                    kind[i] = LineKind::Structure;
                    if line.ends_with('{') {
                        in_body = true;
                        opening = false;
                        bidx = 0;
                    } else {
                        opening = true;
                    }
                }
                continue;
            }
            func[i] = Some(fidx);
            if depth > 0 {
                kind[i] = LineKind::Continuation;
                depth += balance(line);
                continue;
            }
            if line == "}" {
                kind[i] = LineKind::Structure;
                in_body = false;
                fidx += 1;
                continue;
            }
            if line.is_empty() || line.starts_with('#') || line.starts_with('!') {
                kind[i] = LineKind::Structure;
            } else if block_label(line).is_some() {
                kind[i] = LineKind::Label;
                bidx += 1;
            } else if line.starts_with("catch ") || line.starts_with("filter ") || line.starts_with("to ") || line == "cleanup" {
                kind[i] = LineKind::Continuation;
            } else {
                kind[i] = LineKind::Inst;
                block[i] = bidx;
                depth = balance(line).max(0);
            }
        }
        Lines {
            removed: vec![false; n],
            text,
            kind,
            func,
            block,
        }
    }

    fn code(&self, i: usize) -> &str {
        strip_comment(&self.text[i]).trim()
    }

    fn opcode(&self, i: usize) -> Opcode {
        analyze_instruction(self.code(i)).0.opcode()
    }

    /// Live single-line instructions.
    fn insts(&self) -> Vec<usize> {
        (0..self.text.len())
            .filter(|&i| {
                !self.removed[i]
                    && self.kind[i] == LineKind::Inst
                    && balance(self.code(i)) <= 0
                    && self.kind.get(i + 1) != Some(&LineKind::Continuation)
            })
            .collect()
    }

    fn uses_in_function(&self, f: usize, name: &str, except: usize) -> bool {
        (0..self.text.len()).any(|j| {
            j != except && !self.removed[j] && self.func[j] == Some(f) && mentions(self.code(j), name)
        })
    }

    /// Replaces `%from` with `to` in the body of function `f`.
    fn rename_in_function(&mut self, f: usize, from: &str, to: &str) {
        for j in 0..self.text.len() {
            if self.func[j] == Some(f) && !self.removed[j] && mentions(&self.text[j], from) {
                self.text[j] = replace_name(&self.text[j], from, to);
            }
        }
    }

    fn render(&self, trailing_newline: bool) -> String {
        let mut out: Vec<&str> = Vec::with_capacity(self.text.len());
        for (i, l) in self.text.iter().enumerate() {
            if !self.removed[i] {
                out.push(l);
            }
        }
        let mut s = out.join("\n");
        if trailing_newline {
            s.push('\n');
        }
        s
    }
}

fn balance(line: &str) -> i32 {
    line.chars().fold(0, |d, c| match c {
        '[' => d + 1,
        ']' => d - 1,
        _ => d,
    })
}

fn ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '-' | '$' | '.' | '_')
}

fn find_name(line: &str, name: &str) -> Vec<usize> {
    let pat = format!("%{name}");
    let mut hits = Vec::new();
    let mut from = 0;
    while let Some(p) = line[from..].find(&pat) {
        let start = from + p;
        let end = start + pat.len();
        let before_ok = start == 0 || !ident_char(line[..start].chars().last().unwrap());
        let after_ok = line[end..].chars().next().is_none_or(|c| !ident_char(c));
        if before_ok && after_ok {
            hits.push(start);
        }
        from = end;
    }
    hits
}

fn mentions(line: &str, name: &str) -> bool {
    !find_name(line, name).is_empty()
}

fn replace_name(line: &str, from: &str, to: &str) -> String {
    let hits = find_name(line, from);
    let mut out = String::with_capacity(line.len());
    let mut last = 0;
    for h in hits {
        out.push_str(&line[last..h]);
        out.push_str(to);
        last = h + from.len() + 1;
    }
    out.push_str(&line[last..]);
    out
}

fn drop_all(lines: &mut Lines, op: Opcode, first_only: bool) {
    for i in lines.insts() {
        if lines.opcode(i) == op {
            lines.removed[i] = true;
            if first_only {
                return;
            }
        }
    }
}

fn duplicate(lines: &mut Lines, op: Opcode) {
    let targets: BTreeSet<usize> = lines.insts().into_iter().filter(|&i| lines.opcode(i) == op).collect();
    if targets.is_empty() {
        return;
    }
    let mut text = Vec::new();
    let mut kind = Vec::new();
    let mut func = Vec::new();
    let mut block = Vec::new();
    let mut removed = Vec::new();
    for i in 0..lines.text.len() {
        let mut push = |t: String| {
            text.push(t);
            kind.push(lines.kind[i]);
            func.push(lines.func[i]);
            block.push(lines.block[i]);
            removed.push(lines.removed[i]);
        };
        push(lines.text[i].clone());
        if targets.contains(&i) {
            let copy = match defined_name(lines.code(i)) {
                Some(n) => {
                    let rhs = instruction_rhs(lines.code(i));
                    let indent: String = lines.text[i].chars().take_while(|c| c.is_whitespace()).collect();
                    format!("{indent}%{n}.dup = {rhs}")
                }
                None => lines.text[i].clone(),
            };
            push(copy);
        }
    }
    *lines = Lines {
        text,
        kind,
        func,
        block,
        removed,
    };
}

/// One sweep of dead-code elimination. Returns whether anything changed.
fn dce_sweep(lines: &mut Lines) -> bool {
    let mut changed = false;
    for i in lines.insts() {
        let f = lines.func[i].expect("body line");
        if !lines.opcode(i).is_pure() {
            continue;
        }
        let Some(name) = defined_name(lines.code(i)) else { continue };
        if !lines.uses_in_function(f, &name, i) {
            lines.removed[i] = true;
            changed = true;
        }
    }
    changed
}

fn identity_operand(code: &str) -> Option<String> {
    let rhs = instruction_rhs(code);
    let mut words = rhs.split_whitespace();
    let op = Opcode::from_mnemonic(words.next()?);
    let neutral: &[&str] = match op {
        Opcode::Add | Opcode::Sub | Opcode::Or | Opcode::Xor | Opcode::Shl | Opcode::LShr | Opcode::AShr => &["0"],
        Opcode::Mul | Opcode::SDiv | Opcode::UDiv => &["1"],
        Opcode::And => &["-1"],
        _ => return None,
    };
    let (lhs, rhs_operand) = rhs.rsplit_once(',')?;
    if !neutral.contains(&rhs_operand.trim()) {
        return None;
    }
    let first = lhs.split_whitespace().last()?;
    first.strip_prefix('%').map(str::to_string)
}

fn instcombine(lines: &mut Lines) {
    for i in lines.insts() {
        if lines.removed[i] {
            continue;
        }
        let code = lines.code(i).to_string();
        let (Some(name), Some(src)) = (defined_name(&code), identity_operand(&code)) else {
            continue;
        };
        let f = lines.func[i].expect("body line");
        lines.removed[i] = true;
        lines.rename_in_function(f, &name, &format!("%{src}"));
    }
}

fn cse(lines: &mut Lines) {
    let mut seen: HashMap<(usize, usize, String), String> = HashMap::new();
    for i in lines.insts() {
        if lines.removed[i] {
            continue;
        }
        let code = lines.code(i).to_string();
        let op = lines.opcode(i);
        if !op.is_pure() || matches!(op, Opcode::Load | Opcode::Alloca | Opcode::Phi) {
            continue;
        }
        let Some(name) = defined_name(&code) else { continue };
        let f = lines.func[i].expect("body line");
        let key = (f, lines.block[i], instruction_rhs(&code).to_string());
        match seen.get(&key) {
            Some(prev) => {
                let prev = prev.clone();
                lines.removed[i] = true;
                lines.rename_in_function(f, &name, &format!("%{prev}"));
            }
            None => {
                seen.insert(key, name);
            }
        }
    }
}

fn promote_allocas(lines: &mut Lines) {
    let mut slots: Vec<(usize, String)> = Vec::new();
    for i in lines.insts() {
        if lines.opcode(i) == Opcode::Alloca {
            if let Some(n) = defined_name(lines.code(i)) {
                slots.push((lines.func[i].expect("body line"), n));
                lines.removed[i] = true;
            }
        }
    }
    for (f, slot) in slots {
        for i in lines.insts() {
            if lines.func[i] != Some(f) || !mentions(lines.code(i), &slot) {
                continue;
            }
            match lines.opcode(i) {
                Opcode::Store => lines.removed[i] = true,
                Opcode::Load => {
                    let code = lines.code(i).to_string();
                    lines.removed[i] = true;
                    if let Some(n) = defined_name(&code) {
                        lines.rename_in_function(f, &n, "undef");
                    }
                }
                _ => {}
            }
        }
    }
}

fn strip_debug(lines: &mut Lines) {
    for i in lines.insts() {
        if lines.opcode(i) == Opcode::Call && lines.code(i).contains("@llvm.dbg.") {
            lines.removed[i] = true;
        }
    }
}

fn apply_one(lines: &mut Lines, pass: &str) -> Result<(), MockError> {
    if let Some(op) = pass.strip_prefix("drop1-") {
        drop_all(lines, Opcode::from_mnemonic(op), true);
    } else if let Some(op) = pass.strip_prefix("drop-") {
        drop_all(lines, Opcode::from_mnemonic(op), false);
    } else if let Some(op) = pass.strip_prefix("dup-") {
        duplicate(lines, Opcode::from_mnemonic(op));
    } else {
        match pass {
            "dce" | "die" | "bdce" => {
                dce_sweep(lines);
            }
            "adce" | "globaldce" => while dce_sweep(lines) {},
            "instcombine" | "instsimplify" | "aggressive-instcombine" => instcombine(lines),
            "early-cse" | "early-cse-memssa" | "gvn" | "newgvn" => cse(lines),
            "mem2reg" | "sroa" => promote_allocas(lines),
            "strip" | "strip-debug-declare" | "strip-nondebug" => strip_debug(lines),
            "crash" => return Err(MockError::Crash(pass.to_string())),
            "hang" => return Err(MockError::Hang(pass.to_string())),
            _ => {}
        }
    }
    Ok(())
}

/// Runs `passes` in order over `input`.
///
/// `nondet` is handled by the binary, since this function is pure.
pub fn run_passes<S: AsRef<str>>(input: &str, passes: &[S]) -> Result<String, MockError> {
    let mut lines = Lines::new(input);
    for p in passes {
        apply_one(&mut lines, p.as_ref())?;
    }
    Ok(lines.render(input.ends_with('\n')))
}
