//! Acceptance suite: one line per criterion, nonzero exit on any failure.
//!
//! Runs without the libtest harness so the verdict lines are always shown.
//! Criterion numbers given as arguments restrict the run, e.g.
//! `cargo test --test acceptance -- 1 9`.

use std::process::ExitCode;

use lsmetro::acceptance::{run_criterion, AcceptanceOptions, Studies, NAMES};

fn main() -> ExitCode {
    let picked: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|i| (1..=NAMES.len()).contains(i))
        .collect();
    let selected: Vec<usize> = if picked.is_empty() { (1..=NAMES.len()).collect() } else { picked };

    let options = AcceptanceOptions::default();
    let studies = match Studies::for_criteria(&options, &selected) {
        Ok(s) => s,
        Err(e) => {
            println!("study failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(s) = &studies.ladder {
        println!("ladder study: {} seeds in {:.1} s", options.seeds, s.seconds);
    }
    if let Some(s) = &studies.triple {
        println!("triple study: {} seeds in {:.1} s", options.triple_seeds, s.seconds);
    }
    let work = tempfile::tempdir().expect("temporary directory");

    let mut failed = 0;
    for &i in &selected {
        let v = run_criterion(i, &options, &studies, work.path());
        println!("{}", v.line());
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} of {} criteria passed", selected.len() - failed, selected.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
