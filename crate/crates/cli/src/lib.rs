//! Command-line front end: run configuration, binary checkpoints and the
//! experiment subcommands (`train`, `attack`, `lipschitz`, `ablate`,
//! `report`, `gradcheck`, `gen-cbf`).

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod output;

use kantsc::gradcheck::{gradcheck_suite, SuiteCase};

/// Runs the gradient-check suite and prints one line per case.
pub fn cmd_gradcheck(n_seeds: u64) -> Vec<SuiteCase> {
    let cases = gradcheck_suite(n_seeds);
    for c in &cases {
        println!(
            "{} {:<18} seed {:>2}  max rel err params {:.2e} input {:.2e}",
            if c.report.passed { "ok  " } else { "FAIL" },
            c.name,
            c.seed,
            c.report.max_rel_error_params,
            c.report.max_rel_error_input
        );
    }
    cases
}
