//! Acceptance suite: one pass/fail line per criterion, each within its
//! time budget. Exits non-zero if any criterion fails.

mod correspondence;
mod facebook;
mod gen;
mod has_soundness;
mod injection;
mod roundtrip;
mod semantics_items;
mod storage;

use std::panic;
use std::process::ExitCode;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn semantics() -> Outcome {
    let mut failed = Vec::new();
    for (name, check) in semantics_items::ITEMS {
        if let Err(e) = check() {
            failed.push(format!("{name}: {e}"));
        }
    }
    if failed.is_empty() {
        Ok(format!(
            "{}/{} event rules match",
            semantics_items::ITEMS.len(),
            semantics_items::ITEMS.len()
        ))
    } else {
        Err(failed.join("\n"))
    }
}

/// Name, time budget in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

const CRITERIA: [Criterion; 7] = [
    ("policy-level event rules", 1, semantics),
    ("compliance violation detection", 30, injection::run),
    ("HAS deduction soundness", 60, has_soundness::run),
    ("social-network example", 5, facebook::run),
    ("storage mapping", 1, storage::run),
    (
        "policy/architecture correspondence",
        60,
        correspondence::run,
    ),
    ("parser round trip", 10, roundtrip::run),
];

fn main() -> ExitCode {
    let mut all = true;
    for (n, (name, budget, check)) in CRITERIA.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > Duration::from_secs(budget) => {
                Err(format!("{detail}, but took {took:.2?} (budget {budget} s)"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("[PASS] {} {name}: {detail} ({took:.2?})", n + 1),
            Err(detail) => {
                all = false;
                println!("[FAIL] {} {name}: {detail}", n + 1);
            }
        }
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
