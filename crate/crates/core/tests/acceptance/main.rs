//! Acceptance suite: runs every criterion and prints one line per result.

mod accounting;
mod common;
mod convergence;
mod dynamics;
mod gradcheck;
mod graphs;
mod late_timing;
mod streaming;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

type Criterion = (usize, &'static str, fn() -> Result<String, String>);

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        (1, "transpose duality", dynamics::transpose_duality),
        (2, "SRM oracle equivalence", dynamics::srm_oracle_equivalence),
        (3, "gradient check on relaxed models", gradcheck::gradient_check),
        (4, "MST oracle", graphs::mst_oracle),
        (5, "graph counts", graphs::graph_counts),
        (6, "location orders", graphs::location_orders),
        (7, "end-of-stream equivalence", streaming::end_of_stream_equivalence),
        (8, "loss identities", accounting::loss_identities),
        (9, "time weighting", streaming::time_weighting),
        (10, "synthetic convergence", convergence::synthetic_convergence),
        (11, "hybrid beats branch on late-timing task", late_timing::hybrid_beats_branch),
        (12, "energy accounting", accounting::energy_accounting),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str()) || *p == id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {id:>2} {name} [{secs:.2}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id:>2} {name} [{secs:.2}s]: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
