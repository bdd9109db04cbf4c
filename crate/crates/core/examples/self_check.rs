//! Runs the invariant battery, then again with a corrupted derivative.

use sepunmix::experiments::selfcheck::{self_check, Fault};
use sepunmix::experiments::ExperimentConfig;

fn main() -> sepunmix::Result<()> {
    let cfg = ExperimentConfig::default();
    for fault in [Fault::None, Fault::FlipFirstDerivative] {
        let report = self_check(&cfg, fault)?;
        println!("{fault:?}: passed = {}", report.passed());
        for c in report.checks.iter().filter(|c| !c.passed()) {
            println!("  {} failed {} of {} (worst {:.2e})", c.name, c.failures, c.count, c.worst);
        }
    }
    Ok(())
}
