//! `opt`-compatible stand-in with deterministic line-level passes.
//!
//! Accepts `-passes=a,b,c` or legacy `-a -b -c` flags, `-Oz`, `-S`, `-o <file>`
//! and one input path (`-` for stdin). See `spectrum_forge::mock` for what
//! each pass does.

use std::io::{Read, Write};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use spectrum_forge::mock::{self, MockError, OZ_PIPELINE};

fn main() -> ExitCode {
    let mut passes: Vec<String> = Vec::new();
    let mut input: Option<String> = None;
    let mut output: Option<String> = None;
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        if arg == "-o" {
            output = args.next();
        } else if arg == "-S" || arg == "-disable-output" {
        } else if let Some(list) = arg.strip_prefix("-passes=") {
            passes.extend(list.split(',').filter(|p| !p.is_empty()).map(str::to_string));
        } else if arg == "-Oz" || arg == "-Os" || arg == "-O2" || arg == "-O3" {
            passes.extend(OZ_PIPELINE.iter().map(|p| p.to_string()));
        } else if arg == "-" {
            input = Some(arg);
        } else if let Some(pass) = arg.strip_prefix('-') {
            passes.push(pass.trim_start_matches('-').to_string());
        } else {
            input = Some(arg);
        }
    }

    let mut text = String::new();
    let read = match input.as_deref() {
        None | Some("-") => std::io::stdin().read_to_string(&mut text).map(|_| ()),
        Some(path) => std::fs::read_to_string(path).map(|t| text = t),
    };
    if let Err(e) = read {
        eprintln!("mock-opt: cannot read input: {e}");
        return ExitCode::from(2);
    }

    let mut result = match mock::run_passes(&text, &passes) {
        Ok(out) => out,
        Err(MockError::Hang(_)) => loop {
            std::thread::sleep(std::time::Duration::from_secs(3600));
        },
        Err(e) => {
            eprintln!("mock-opt: {e}");
            return ExitCode::from(1);
        }
    };
    if passes.iter().any(|p| p == "nondet") {
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or_default();
        result.push_str(&format!("; nonce {nanos} {}\n", std::process::id()));
    }

    let written = match output.as_deref() {
        None | Some("-") => std::io::stdout().write_all(result.as_bytes()),
        Some(path) => std::fs::write(path, result.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("mock-opt: cannot write output: {e}");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
