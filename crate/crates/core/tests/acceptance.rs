//! Runs every acceptance criterion with the pinned seed and prints one line
//! per criterion. Set `BL_ACCEPTANCE=3,8` to run a subset and `BL_WORKERS`
//! to fix the thread count.

use std::process::ExitCode;

use branchlab::acceptance::{run_criterion, ACCEPTANCE_SEED, CRITERIA};
use branchlab::par::resolve_workers;

fn main() -> ExitCode {
    let selected: Vec<u32> = match std::env::var("BL_ACCEPTANCE") {
        Ok(v) if !v.trim().is_empty() => v.split(',').filter_map(|s| s.trim().parse().ok()).collect(),
        _ => CRITERIA.iter().map(|c| c.0).collect(),
    };
    let workers = resolve_workers(None);
    let mut failed = 0;
    for id in selected {
        match run_criterion(id, ACCEPTANCE_SEED, workers) {
            Ok(o) => {
                println!("{}", o.line());
                failed += !o.passed as u32;
            }
            Err(e) => {
                println!("criterion {id:>2} FAIL error: {e}");
                failed += 1;
            }
        }
    }
    println!("acceptance: {failed} criteria failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
