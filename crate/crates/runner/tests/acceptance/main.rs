//! Acceptance suite: one PASS/FAIL line per criterion.

#[path = "../../../core/tests/common/mod.rs"]
mod grid_oracles;
#[path = "../../../nn/tests/common/mod.rs"]
mod nn_fixtures;

mod checks;
mod gradients;
mod smoke;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

type Check = fn() -> Result<String, String>;

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: Check,
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let strict = args.iter().any(|a| a == "--strict");
    let only: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let criteria = [
        Criterion { name: "graph_soundness", limit: Some(Duration::from_secs(300)), run: checks::graph_soundness },
        Criterion { name: "beacon_cover", limit: Some(Duration::from_secs(60)), run: checks::beacon_cover },
        Criterion { name: "attention", limit: None, run: checks::attention },
        Criterion { name: "gradient_check", limit: Some(Duration::from_secs(120)), run: gradients::gradient_check },
        Criterion { name: "loss_identities", limit: None, run: checks::loss_identities },
        Criterion { name: "triplet", limit: None, run: checks::triplet },
        Criterion { name: "oracle_optimality", limit: None, run: checks::oracle_optimality },
        Criterion { name: "navigation_success", limit: None, run: checks::navigation_success },
        Criterion { name: "training_smoke", limit: Some(Duration::from_secs(3600)), run: smoke::training_smoke },
        Criterion { name: "determinism", limit: None, run: checks::determinism },
    ];
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria.iter().filter(|c| only.is_empty() || only.iter().any(|o| c.name.contains(o.as_str()))) {
        ran += 1;
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let elapsed = t0.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("runtime {:.1}s exceeds {}s", elapsed.as_secs_f64(), limit.as_secs())),
            (o, _) => o,
        };
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {} ({:.1}s): {detail}", c.name, elapsed.as_secs_f64());
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
