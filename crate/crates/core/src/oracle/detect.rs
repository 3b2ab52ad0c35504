//! Recognition of sanitizer and Valgrind reports.
//!
//! AddressSanitizer reports are recognized by the lines
//!
//! ```text
//! ==<pid>==ERROR: AddressSanitizer: <class> ...
//! SUMMARY: AddressSanitizer: <class> ...
//! ```
//!
//! The `SUMMARY` class wins when both are present; a numeric `SUMMARY` token
//! (`24 byte(s) leaked ...`) means a leak. `ERROR: LeakSanitizer:` maps to
//! `memory-leak`, `attempting double-free` to `double-free` and `attempting
//! free on address which was not malloc()-ed` to `bad-free`.
//!
//! Valgrind reports are recognized by the first of
//!
//! ```text
//! ==<pid>== Invalid read of size <n>           -> invalid-read
//! ==<pid>== Invalid write of size <n>          -> invalid-write
//! ==<pid>== Invalid free() / delete / delete[] -> invalid-free
//! ==<pid>== Mismatched free() / delete / ...   -> mismatched-free
//! ==<pid>== Conditional jump or move depends on uninitialised value(s) -> use-of-uninitialized-value
//! ==<pid>== Process terminating with default action of signal <n> (<NAME>)
//! ```
//!
//! where signal 11 maps to `SEGV`, 8 to `FPE`, 7 to `BUS` and 6 to `ABRT`.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Lines kept after the first report line when no end marker is found.
const MAX_BLOCK: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub class: String,
    pub excerpt: String,
}

fn asan_error() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"ERROR: (AddressSanitizer|LeakSanitizer): ?(.*)$").expect("regex")
    })
}

fn asan_summary() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"SUMMARY: AddressSanitizer: (\S+)").expect("regex"))
}

fn valgrind_error() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^==\d+== (Invalid read of size|Invalid write of size|Invalid free\(\)|Mismatched free\(\)|Conditional jump or move depends on uninitialised|Process terminating with default action of signal (\d+))",
        )
        .expect("regex")
    })
}

fn asan_class(rest: &str, sanitizer: &str) -> String {
    if sanitizer == "LeakSanitizer" {
        return "memory-leak".into();
    }
    if rest.starts_with("attempting double-free") {
        return "double-free".into();
    }
    if rest.starts_with("attempting free on address which was not malloc") {
        return "bad-free".into();
    }
    if rest.starts_with("requested allocation size") {
        return "allocation-size-too-big".into();
    }
    rest.split_whitespace()
        .next()
        .unwrap_or("unknown")
        .to_string()
}

fn signal_class(n: u32) -> String {
    match n {
        11 => "SEGV".into(),
        8 => "FPE".into(),
        7 => "BUS".into(),
        6 => "ABRT".into(),
        n => format!("signal-{n}"),
    }
}

/// Finds the first detector report in `text`.
pub fn classify_detector_output(text: &str) -> Option<Detection> {
    let lines: Vec<&str> = text.lines().collect();
    if let Some(start) = lines.iter().position(|l| asan_error().is_match(l)) {
        let caps = asan_error().captures(lines[start]).expect("matched");
        let mut class = asan_class(&caps[2], &caps[1]);
        let summary = lines[start..]
            .iter()
            .position(|l| asan_summary().is_match(l))
            .map(|i| start + i);
        if let Some(end) = summary {
            let token = &asan_summary().captures(lines[end]).expect("matched")[1];
            class = if token.chars().all(|c| c.is_ascii_digit()) {
                "memory-leak".into()
            } else {
                token.to_string()
            };
        }
        let end = summary.unwrap_or((start + MAX_BLOCK).min(lines.len() - 1));
        return Some(Detection {
            class,
            excerpt: lines[start..=end].join("\n"),
        });
    }
    if let Some(start) = lines.iter().position(|l| valgrind_error().is_match(l)) {
        let caps = valgrind_error().captures(lines[start]).expect("matched");
        let class = match &caps[1] {
            s if s.starts_with("Invalid read") => "invalid-read".to_string(),
            s if s.starts_with("Invalid write") => "invalid-write".to_string(),
            s if s.starts_with("Invalid free") => "invalid-free".to_string(),
            s if s.starts_with("Mismatched") => "mismatched-free".to_string(),
            s if s.starts_with("Conditional") => "use-of-uninitialized-value".to_string(),
            _ => signal_class(caps[2].parse().unwrap_or(0)),
        };
        // A Valgrind record ends at the first bare `==pid== ` line.
        let end = lines[start + 1..]
            .iter()
            .position(|l| l.trim_end().ends_with("==") && l.starts_with("=="))
            .map_or((start + MAX_BLOCK).min(lines.len() - 1), |i| start + 1 + i);
        return Some(Detection {
            class,
            excerpt: lines[start..=end].join("\n"),
        });
    }
    None
}

/// Masks process ids and addresses so identical crashes give identical evidence.
pub fn normalize_evidence(text: &str) -> String {
    static PID: OnceLock<Regex> = OnceLock::new();
    static ADDR: OnceLock<Regex> = OnceLock::new();
    let pid = PID.get_or_init(|| Regex::new(r"==\d+==").expect("regex"));
    let addr = ADDR.get_or_init(|| Regex::new(r"0x[0-9a-fA-F]{6,}").expect("regex"));
    let text = pid.replace_all(text, "==PID==");
    addr.replace_all(&text, "0xADDR").into_owned()
}
