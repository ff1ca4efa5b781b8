//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::Duration;

use spectrum_forge::ir::{instruction_count, parse_ir};
use spectrum_forge::probe::{OptimizerDriver, Program};

pub fn mock_opt() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_mock-opt"))
}

pub fn mock_driver() -> OptimizerDriver {
    let mut d = OptimizerDriver::new(mock_opt());
    d.timeout = Duration::from_secs(30);
    d
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture(name: &str) -> String {
    let path = fixtures_dir().join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn program(name: &str) -> Program {
    Program::new(name.trim_end_matches(".ll"), fixture(name))
}

pub fn count(text: &str) -> u64 {
    instruction_count(&parse_ir(text).unwrap())
}

/// One function: `adds` add instructions, then `stores` store instructions, then `ret`.
pub fn straight_line(name: &str, adds: usize, stores: usize) -> String {
    let mut s = format!("define i32 @{name}(i32 %a, ptr %p) {{\nentry:\n");
    let mut prev = "%a".to_string();
    for i in 0..adds {
        s.push_str(&format!("  %v{i} = add i32 {prev}, %a\n"));
        prev = format!("%v{i}");
    }
    for _ in 0..stores {
        s.push_str("  store i32 %a, ptr %p, align 4\n");
    }
    s.push_str("  ret i32 %a\n}\n");
    s
}

/// Every length-`len` sequence over `pool.len()` passes, lexicographic order.
pub fn all_sequences(pool: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..pool).map(move |p| {
                    let mut t = s.clone();
                    t.push(p);
                    t
                })
            })
            .collect();
    }
    out
}
