//! Line-oriented structural scanner for textual LLVM IR.
//!
//! The scanner only recognizes what the feature extractors need: function
//! definitions, block labels, instruction mnemonics, a handful of operand
//! shapes and terminator targets. It never validates types or SSA form.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::opcode::Opcode;
use crate::digest::sha256_hex;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("no function definition found in IR text")]
    NoFunction,
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Per-instruction facts gathered by the scanner.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InstInfo {
    pub opcode: Option<Opcode>,
    /// Integer literal operands typed `i32`.
    pub const_i32: u32,
    /// Integer literal operands typed `i64`.
    pub const_i64: u32,
    pub const_zero: u32,
    pub const_one: u32,
    /// At least one operand is a numeric or boolean literal.
    pub has_literal_operand: bool,
    /// A `call` whose result type is an integer.
    pub returns_int: bool,
    pub phi_incoming: u32,
    pub unconditional_branch: bool,
}

impl InstInfo {
    pub fn opcode(&self) -> Opcode {
        self.opcode.unwrap_or(Opcode::Other)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockStats {
    /// `None` for an unlabeled entry block.
    pub label: Option<String>,
    pub insts: Vec<InstInfo>,
    /// Successor block indices, one per CFG edge (duplicates kept).
    pub successors: Vec<usize>,
    /// Number of incoming CFG edges.
    pub predecessors: usize,
}

impl BlockStats {
    pub fn phi_count(&self) -> usize {
        self.insts
            .iter()
            .take_while(|i| i.opcode() == Opcode::Phi)
            .count()
    }

    pub fn phi_args(&self) -> u64 {
        self.insts.iter().map(|i| u64::from(i.phi_incoming)).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeCounts {
    pub edges: u64,
    /// Edges leaving a multi-successor block into a multi-predecessor block.
    pub critical: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionStats {
    pub name: String,
    pub basic_block_count: usize,
    pub instruction_counts: BTreeMap<Opcode, u64>,
    pub edge_counts: EdgeCounts,
    pub blocks: Vec<BlockStats>,
}

impl FunctionStats {
    fn from_blocks(name: String, mut blocks: Vec<BlockStats>, targets: Vec<Vec<String>>) -> Self {
        let index: HashMap<&str, usize> = blocks
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.label.as_deref().map(|l| (l, i)))
            .collect();
        let resolved: Vec<Vec<usize>> = targets
            .iter()
            .map(|ts| ts.iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
            .collect();
        for (block, succ) in blocks.iter_mut().zip(resolved) {
            block.successors = succ;
        }
        let mut preds = vec![0usize; blocks.len()];
        for b in &blocks {
            for &s in &b.successors {
                preds[s] += 1;
            }
        }
        let mut edge_counts = EdgeCounts::default();
        for b in &blocks {
            edge_counts.edges += b.successors.len() as u64;
            if b.successors.len() > 1 {
                edge_counts.critical += b.successors.iter().filter(|&&s| preds[s] > 1).count() as u64;
            }
        }
        for (b, p) in blocks.iter_mut().zip(preds) {
            b.predecessors = p;
        }

        let mut instruction_counts = BTreeMap::new();
        for inst in blocks.iter().flat_map(|b| &b.insts) {
            *instruction_counts.entry(inst.opcode()).or_insert(0) += 1;
        }
        FunctionStats {
            name,
            basic_block_count: blocks.len(),
            instruction_counts,
            edge_counts,
            blocks,
        }
    }

    pub fn instruction_total(&self) -> u64 {
        self.instruction_counts.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrModule {
    pub source_path: Option<PathBuf>,
    pub functions: Vec<FunctionStats>,
    /// SHA-256 of the source bytes, hex encoded.
    pub raw_text_hash: String,
}

impl IrModule {
    pub fn parse_file(path: impl AsRef<Path>) -> Result<Self, ParseError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut module = parse_ir(&text)?;
        module.source_path = Some(path.to_path_buf());
        Ok(module)
    }
}

/// Scans textual IR into per-function statistics.
pub fn parse_ir(text: &str) -> Result<IrModule, ParseError> {
    let mut functions = Vec::new();
    let mut lines = text.lines();

    while let Some(raw) = lines.next() {
        let line = strip_comment(raw).trim();
        if !starts_with_word(line, "define") {
            continue;
        }
        let name = function_name(line).unwrap_or_default();
        if !line.ends_with('{') {
            // Attribute groups or long signatures may push the brace down.
            let mut opened = false;
            for raw in lines.by_ref() {
                if strip_comment(raw).trim().ends_with('{') {
                    opened = true;
                    break;
                }
            }
            if !opened {
                break;
            }
        }
        functions.push(scan_body(name, &mut lines));
    }

    if functions.is_empty() {
        return Err(ParseError::NoFunction);
    }
    Ok(IrModule {
        source_path: None,
        functions,
        raw_text_hash: sha256_hex(text.as_bytes()),
    })
}

fn scan_body<'a>(name: String, lines: &mut impl Iterator<Item = &'a str>) -> FunctionStats {
    let mut blocks: Vec<BlockStats> = Vec::new();
    let mut targets: Vec<Vec<String>> = Vec::new();
    let mut pending = String::new();
    let mut depth = 0i32;

    let flush = |pending: &mut String, blocks: &mut Vec<BlockStats>, targets: &mut Vec<Vec<String>>| {
        if pending.is_empty() {
            return;
        }
        if blocks.is_empty() {
            blocks.push(BlockStats::default());
            targets.push(Vec::new());
        }
        let (info, succ) = analyze_instruction(pending);
        blocks.last_mut().unwrap().insts.push(info);
        targets.last_mut().unwrap().extend(succ);
        pending.clear();
    };

    for raw in lines.by_ref() {
        let line = strip_comment(raw).trim();
        if depth > 0 {
            pending.push(' ');
            pending.push_str(line);
            depth = (depth + bracket_balance(line)).max(0);
            continue;
        }
        if line == "}" {
            break;
        }
        if line.is_empty() || line.starts_with('#') || line.starts_with('!') {
            continue;
        }
        if let Some(label) = block_label(line) {
            flush(&mut pending, &mut blocks, &mut targets);
            blocks.push(BlockStats {
                label: Some(label),
                ..BlockStats::default()
            });
            targets.push(Vec::new());
            continue;
        }
        if is_clause(line) && !pending.is_empty() {
            pending.push(' ');
            pending.push_str(line);
            continue;
        }
        if is_clause(line) {
            // Clause of an already flushed landingpad; nothing to count.
            continue;
        }
        // Held until the next instruction so clause lines can attach.
        flush(&mut pending, &mut blocks, &mut targets);
        pending.push_str(line);
        depth = bracket_balance(line).max(0);
    }
    flush(&mut pending, &mut blocks, &mut targets);
    FunctionStats::from_blocks(name, blocks, targets)
}

/// Continuation lines of `landingpad` (clauses) and `invoke`/`callbr` (`to label ...`).
fn is_clause(line: &str) -> bool {
    starts_with_word(line, "catch") || starts_with_word(line, "filter") || starts_with_word(line, "to") || line == "cleanup"
}

fn starts_with_word(line: &str, word: &str) -> bool {
    line.strip_prefix(word)
        .is_some_and(|rest| rest.is_empty() || rest.starts_with(char::is_whitespace))
}

/// Removes a trailing `;` comment, respecting double-quoted strings.
pub(crate) fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            ';' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn bracket_balance(line: &str) -> i32 {
    let mut in_quotes = false;
    let mut depth = 0;
    for c in line.chars() {
        match c {
            '"' => in_quotes = !in_quotes,
            '[' if !in_quotes => depth += 1,
            ']' if !in_quotes => depth -= 1,
            _ => {}
        }
    }
    depth
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '-' | '$' | '.' | '_')
}

/// Parses an identifier body (after the sigil): quoted or bare.
fn read_name(s: &str) -> Option<String> {
    if let Some(rest) = s.strip_prefix('"') {
        let end = rest.find('"')?;
        return Some(rest[..end].to_string());
    }
    let end = s.find(|c: char| !is_ident_char(c)).unwrap_or(s.len());
    (end > 0).then(|| s[..end].to_string())
}

fn function_name(line: &str) -> Option<String> {
    let at = line.find('@')?;
    read_name(&line[at + 1..])
}

pub(crate) fn block_label(line: &str) -> Option<String> {
    let body = line.strip_suffix(':')?;
    if let Some(quoted) = body.strip_prefix('"') {
        let inner = quoted.strip_suffix('"')?;
        return (!inner.contains('"')).then(|| inner.to_string());
    }
    (!body.is_empty() && body.chars().all(is_ident_char)).then(|| body.to_string())
}

/// Splits `%x = rhs` into `rhs`; lines without a result are returned whole.
pub(crate) fn instruction_rhs(line: &str) -> &str {
    let Some(rest) = line.strip_prefix('%').or_else(|| line.strip_prefix('@')) else {
        return line;
    };
    let after_name = if let Some(q) = rest.strip_prefix('"') {
        match q.find('"') {
            Some(end) => &q[end + 1..],
            None => return line,
        }
    } else {
        let end = rest.find(|c: char| !is_ident_char(c)).unwrap_or(rest.len());
        &rest[end..]
    };
    match after_name.trim_start().strip_prefix('=') {
        Some(rhs) => rhs.trim_start(),
        None => line,
    }
}

/// Result name defined by an instruction line, without the `%` sigil.
pub(crate) fn defined_name(line: &str) -> Option<String> {
    let rest = line.strip_prefix('%')?;
    let name = read_name(rest)?;
    (instruction_rhs(line).len() < line.len()).then_some(name)
}

/// Splits on whitespace while keeping parenthesized groups attached to their token.
fn paren_tokens(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = None;
    for (i, c) in s.char_indices() {
        match c {
            '(' => {
                depth += 1;
                start.get_or_insert(i);
            }
            ')' => {
                depth -= 1;
                start.get_or_insert(i);
            }
            c if c.is_whitespace() && depth <= 0 => {
                if let Some(st) = start.take() {
                    out.push(&s[st..i]);
                }
            }
            _ => {
                start.get_or_insert(i);
            }
        }
    }
    if let Some(st) = start {
        out.push(&s[st..]);
    }
    out
}

fn is_int_type(tok: &str) -> Option<u32> {
    tok.strip_prefix('i')
        .filter(|d| !d.is_empty() && d.chars().all(|c| c.is_ascii_digit()))
        .and_then(|d| d.parse().ok())
}

fn is_type_token(tok: &str) -> bool {
    is_int_type(tok).is_some()
        || matches!(
            tok,
            "void" | "half" | "bfloat" | "float" | "double" | "fp128" | "x86_fp80" | "ppc_fp128" | "ptr"
                | "label" | "metadata" | "token" | "x86_amx"
        )
        || tok.starts_with('%')
        || tok.starts_with('{')
        || tok.starts_with('<')
        || tok.starts_with('[')
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Literal {
    Int(i128),
    Float,
}

fn parse_literal(tok: &str) -> Option<Literal> {
    let tok = tok.trim();
    match tok {
        "true" => return Some(Literal::Int(1)),
        "false" => return Some(Literal::Int(0)),
        _ => {}
    }
    let digits = tok.strip_prefix('-').unwrap_or(tok);
    if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
        return tok.parse().ok().map(Literal::Int);
    }
    if digits.starts_with("0x") && digits.len() > 2 && digits[2..].chars().all(|c| c.is_ascii_hexdigit())
    {
        return Some(Literal::Float);
    }
    let looks_float = digits.chars().next().is_some_and(|c| c.is_ascii_digit())
        && digits
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-'));
    looks_float.then_some(Literal::Float)
}

fn tally_typed(info: &mut InstInfo, width: Option<u32>, operand: &str) {
    let Some(lit) = parse_literal(operand) else {
        return;
    };
    info.has_literal_operand = true;
    if let (Some(w), Literal::Int(v)) = (width, lit) {
        match w {
            32 => info.const_i32 += 1,
            64 => info.const_i64 += 1,
            _ => {}
        }
        match v {
            0 => info.const_zero += 1,
            1 => info.const_one += 1,
            _ => {}
        }
    }
}

const MODIFIERS: &[&str] = &[
    "nuw", "nsw", "exact", "disjoint", "nneg", "samesign", "fast", "nnan", "ninf", "nsz", "arcp",
    "contract", "afn", "reassoc", "eq", "ne", "ugt", "uge", "ult", "ule", "sgt", "sge", "slt", "sle",
    "oeq", "ogt", "oge", "olt", "ole", "one", "ord", "ueq", "une", "uno", "true", "false",
];

/// Splits `s` at commas that are not nested in brackets of any kind.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '[' | '(' | '{' | '<' => depth += 1,
            ']' | ')' | '}' | '>' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out
}

/// Consumes a (possibly aggregate) type at the front of `s`; returns (type, rest).
fn take_type(s: &str) -> (&str, &str) {
    let s = s.trim_start();
    let closing = match s.chars().next() {
        Some('<') => Some(('<', '>')),
        Some('[') => Some(('[', ']')),
        Some('{') => Some(('{', '}')),
        _ => None,
    };
    if let Some((open, close)) = closing {
        let mut depth = 0;
        for (i, c) in s.char_indices() {
            if c == open {
                depth += 1;
            } else if c == close {
                depth -= 1;
                if depth == 0 {
                    return (&s[..=i], &s[i + 1..]);
                }
            }
        }
        return (s, "");
    }
    let end = s.find(char::is_whitespace).unwrap_or(s.len());
    (&s[..end], &s[end..])
}

/// Element width of an integer or integer-vector type.
fn int_width(ty: &str) -> Option<u32> {
    if let Some(w) = is_int_type(ty) {
        return Some(w);
    }
    let inner = ty.strip_prefix('<')?.strip_suffix('>')?;
    let elem = inner.split_whitespace().last()?;
    is_int_type(elem)
}

fn strip_modifiers(mut s: &str) -> &str {
    loop {
        let t = s.trim_start();
        let word_end = t.find(char::is_whitespace).unwrap_or(t.len());
        if word_end > 0 && MODIFIERS.contains(&&t[..word_end]) {
            s = &t[word_end..];
        } else {
            return t;
        }
    }
}

fn label_targets(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = s;
    while let Some(pos) = rest.find("label") {
        let before_ok = pos == 0 || !is_ident_char(rest[..pos].chars().last().unwrap());
        let after = &rest[pos + "label".len()..];
        rest = after;
        if !before_ok || !after.starts_with(char::is_whitespace) {
            continue;
        }
        if let Some(name) = after.trim_start().strip_prefix('%').and_then(read_name) {
            out.push(name);
        }
    }
    out
}

/// Analyzes one (possibly multi-line, joined) instruction.
pub(crate) fn analyze_instruction(text: &str) -> (InstInfo, Vec<String>) {
    let rhs = instruction_rhs(text);
    let mut words = rhs.split_whitespace().peekable();
    while matches!(words.peek(), Some(&("tail" | "musttail" | "notail"))) {
        words.next();
    }
    let mnemonic = words.next().unwrap_or("").trim_end_matches(',');
    let opcode = Opcode::from_mnemonic(mnemonic);
    let mut info = InstInfo {
        opcode: Some(opcode),
        ..InstInfo::default()
    };
    let after_op = rhs
        .find(mnemonic)
        .map(|p| &rhs[p + mnemonic.len()..])
        .unwrap_or("");

    if opcode.is_binary() || matches!(opcode, Opcode::ICmp | Opcode::FCmp) {
        let (ty, rest) = take_type(strip_modifiers(after_op));
        let width = int_width(ty);
        for operand in split_top_level(rest).into_iter().take(2) {
            tally_typed(&mut info, width, operand);
        }
    } else if opcode == Opcode::Phi {
        let (ty, rest) = take_type(strip_modifiers(after_op));
        let width = int_width(ty);
        for group in split_top_level(rest) {
            let Some(inner) = group.strip_prefix('[').and_then(|g| g.strip_suffix(']')) else {
                continue;
            };
            info.phi_incoming += 1;
            if let Some(value) = split_top_level(inner).first() {
                tally_typed(&mut info, width, value);
            }
        }
    } else {
        let toks: Vec<&str> = rhs
            .split(|c: char| c.is_whitespace() || matches!(c, '(' | ')' | ',' | '[' | ']' | '{' | '}' | '<' | '>'))
            .filter(|t| !t.is_empty())
            .collect();
        for pair in toks.windows(2) {
            if let Some(w) = is_int_type(pair[0]) {
                tally_typed(&mut info, Some(w), pair[1]);
            }
        }
    }

    if opcode == Opcode::Call {
        info.returns_int = paren_tokens(after_op)
            .into_iter()
            .find(|t| is_type_token(t))
            .and_then(is_int_type)
            .is_some();
    }

    let targets = if opcode.is_terminator() {
        label_targets(after_op)
    } else {
        Vec::new()
    };
    if opcode == Opcode::Br {
        info.unconditional_branch = after_op.trim_start().starts_with("label") && targets.len() == 1;
    }
    (info, targets)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BLOCKS: &str = r#"
define i32 @f(i32 %a) {
entry:
  %x = add i32 %a, 1
  %y = add i32 %x, %a
  br label %exit

exit:
  %z = add i32 %y, 2
  ret i32 %z
}
"#;

    fn count(f: &FunctionStats, op: Opcode) -> u64 {
        f.instruction_counts.get(&op).copied().unwrap_or(0)
    }

    #[test]
    fn empty_text_is_an_error() {
        assert!(matches!(parse_ir(""), Err(ParseError::NoFunction)));
        assert!(matches!(
            parse_ir("declare i32 @puts(ptr)\n"),
            Err(ParseError::NoFunction)
        ));
    }

    #[test]
    fn two_block_function() {
        let m = parse_ir(TWO_BLOCKS).unwrap();
        assert_eq!(m.functions.len(), 1);
        let f = &m.functions[0];
        assert_eq!(f.name, "f");
        assert_eq!(f.basic_block_count, 2);
        assert_eq!(count(f, Opcode::Add), 3);
        assert_eq!(count(f, Opcode::Br), 1);
        assert_eq!(count(f, Opcode::Ret), 1);
        assert_eq!(f.instruction_total(), 5);
        assert_eq!(f.edge_counts, EdgeCounts { edges: 1, critical: 0 });
        assert_eq!(f.blocks[1].predecessors, 1);
    }

    #[test]
    fn comments_and_metadata_do_not_count() {
        let noisy = r#"
; ModuleID = 'noisy'
source_filename = "noisy.c"
@g = global i32 0, align 4

; leading comment
define i32 @f(i32 %a) #0 {
entry:                                   ; no preds
  ; a comment line
  %x = add i32 %a, 1, !dbg !7
  %y = add i32 %x, %a ; trailing comment
  br label %exit, !llvm.loop !9

exit:                                    ; preds = %entry
  %z = add i32 %y, 2
  ret i32 %z
}

declare void @llvm.dbg.value(metadata, metadata, metadata)
attributes #0 = { nounwind }
!7 = !DILocation(line: 1, scope: !8)
"#;
        let a = parse_ir(TWO_BLOCKS).unwrap();
        let b = parse_ir(noisy).unwrap();
        assert_eq!(a.functions, b.functions);
    }

    #[test]
    fn implicit_entry_and_numbered_labels() {
        let text = "define void @g(i1 %c) {\n  br i1 %c, label %1, label %2\n1:\n  br label %2\n2:\n  ret void\n}\n";
        let f = &parse_ir(text).unwrap().functions[0];
        assert_eq!(f.basic_block_count, 3);
        assert_eq!(f.blocks[0].successors, vec![1, 2]);
        assert_eq!(f.blocks[2].predecessors, 2);
        // entry has two successors, block 2 two predecessors
        assert_eq!(f.edge_counts, EdgeCounts { edges: 3, critical: 1 });
    }

    #[test]
    fn multiline_switch_is_one_instruction() {
        let text = r#"define void @s(i32 %v) {
entry:
  switch i32 %v, label %d [
    i32 0, label %a
    i32 1, label %a
  ]
a:
  ret void
d:
  ret void
}"#;
        let f = &parse_ir(text).unwrap().functions[0];
        assert_eq!(f.instruction_total(), 3);
        assert_eq!(f.blocks[0].successors, vec![2, 1, 1]);
        let sw = &f.blocks[0].insts[0];
        assert_eq!(sw.const_i32, 2);
        assert_eq!((sw.const_zero, sw.const_one), (1, 1));
    }

    #[test]
    fn landingpad_clauses_are_not_instructions() {
        let text = r#"define void @h() personality ptr @p {
entry:
  invoke void @x() to label %ok unwind label %bad
ok:
  ret void
bad:
  %lp = landingpad { ptr, i32 }
          catch ptr null
          cleanup
  resume { ptr, i32 } %lp
}"#;
        let f = &parse_ir(text).unwrap().functions[0];
        assert_eq!(f.instruction_total(), 4);
        assert_eq!(f.blocks[0].successors, vec![1, 2]);
    }

    #[test]
    fn split_invoke_keeps_its_targets() {
        let text = "define void @h() personality ptr @p {\nentry:\n  invoke void @x(i32 3)\n          to label %ok unwind label %bad\nok:\n  ret void\nbad:\n  %lp = landingpad { ptr, i32 }\n          cleanup\n  resume { ptr, i32 } %lp\n}\n";
        let f = &parse_ir(text).unwrap().functions[0];
        assert_eq!(f.instruction_total(), 4);
        assert_eq!(count(f, Opcode::Invoke), 1);
        assert_eq!(f.blocks[0].successors, vec![1, 2]);
        assert_eq!(f.blocks[0].insts[0].const_i32, 1);
    }

    #[test]
    fn operand_literals() {
        let (i, _) = analyze_instruction("%r = add nsw i32 %a, 0");
        assert_eq!((i.const_i32, i.const_zero, i.has_literal_operand), (1, 1, true));
        let (i, _) = analyze_instruction("%r = fmul fast double %a, 2.000000e+00");
        assert!(i.has_literal_operand);
        assert_eq!(i.const_i32 + i.const_i64, 0);
        let (i, _) = analyze_instruction("%p = phi i64 [ 0, %entry ], [ %n, %loop ]");
        assert_eq!((i.phi_incoming, i.const_i64, i.const_zero), (2, 1, 1));
        let (i, _) = analyze_instruction("%c = tail call noundef i32 (ptr, ...) @printf(ptr @s, i64 1)");
        assert!(i.returns_int);
        assert_eq!((i.const_i64, i.const_one), (1, 1));
        let (i, _) = analyze_instruction("call void @f(i32 7)");
        assert!(!i.returns_int);
        assert_eq!(i.const_i32, 1);
        let (i, _) = analyze_instruction("%q = getelementptr inbounds [4 x i32], ptr @a, i64 0, i64 2");
        assert_eq!((i.const_i64, i.const_zero), (2, 1));
    }

    #[test]
    fn quoted_names() {
        assert_eq!(block_label("\"my block\":"), Some("my block".into()));
        assert_eq!(instruction_rhs("%\"a=b\" = add i32 1, 2"), "add i32 1, 2");
        assert_eq!(defined_name("%x.1 = load i32, ptr %p"), Some("x.1".into()));
        assert_eq!(defined_name("store i32 0, ptr %p"), None);
        assert_eq!(label_targets(" label %\"my block\""), vec!["my block".to_string()]);
    }

    #[test]
    fn strip_comment_respects_strings() {
        assert_eq!(strip_comment("@s = constant [3 x i8] c\"a;b\" ; c"), "@s = constant [3 x i8] c\"a;b\" ");
    }
}
