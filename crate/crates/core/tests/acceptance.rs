use filament_core::verify::{all_ids, run_suite};

fn main() {
    let report = run_suite(0.5, &all_ids(), |c| println!("{}", c.line()));
    println!("acceptance: {} passed, {} failed", report.passed, report.failed);
}
