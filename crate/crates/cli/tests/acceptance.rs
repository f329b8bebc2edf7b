//! Runs every acceptance criterion at its full tolerance and sample size,
//! printing one PASS/FAIL line each. Exits non-zero when an asserted
//! criterion fails. `LERW3D_ACCEPTANCE_ONLY=3,5` restricts the run.

use std::process::ExitCode;
use std::time::Instant;

use lerw3d_cli::acceptance::{run_criterion, Context};

fn main() -> ExitCode {
    let ids: Vec<u8> = match std::env::var("LERW3D_ACCEPTANCE_ONLY") {
        Ok(v) => v.split(',').filter_map(|x| x.trim().parse().ok()).collect(),
        Err(_) => (1..=14).collect(),
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut ctx = Context::new(20240601, workers);
    let mut failed = Vec::new();
    for id in ids {
        let t0 = Instant::now();
        match run_criterion(&mut ctx, id) {
            Ok(o) => {
                println!("{} ({:.1} s)", o.line(), t0.elapsed().as_secs_f64());
                if !o.pass && o.asserted {
                    failed.push(id);
                }
            }
            Err(e) => {
                println!("FAIL [{id:>2}] error: {e}");
                failed.push(id);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all asserted criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {failed:?}");
        ExitCode::FAILURE
    }
}
