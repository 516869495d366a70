//! `gradcheck`: finite-difference verification of every analytic gradient.

use camomap::gradcheck::{self, LOSS_REL_TOL, POOL_REL_TOL};
use camomap::{Error, Result};

pub fn run(seed: u64, cases: usize) -> Result<()> {
    let report = gradcheck::run(seed, cases);
    println!(
        "box coordinate gradients:   max normalized error {:.3e} (tolerance {POOL_REL_TOL:.0e}, {} cases)",
        report.max_rel_error_box, report.box_cases
    );
    println!(
        "feature value adjoints:     max normalized error {:.3e} (tolerance {POOL_REL_TOL:.0e})",
        report.max_rel_error_features
    );
    println!(
        "loss gradients:             max normalized error {:.3e} (tolerance {LOSS_REL_TOL:.0e})",
        report.max_rel_error_losses
    );
    if report.passed() {
        println!("gradcheck PASS");
        Ok(())
    } else {
        Err(Error::InvalidInput(
            "gradcheck FAIL: a gradient diverged from finite differences".into(),
        ))
    }
}
