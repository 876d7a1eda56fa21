//! Quadratic term switched into the plant dynamics at t = 40 s, with and
//! without reconfiguration.

use passiguard::scenario::{self, Scenario, BUNDLED};

fn main() -> passiguard::Result<()> {
    let text = BUNDLED.iter().find(|(n, _)| *n == "ex2_nonlinear").map(|(_, t)| *t).unwrap_or_default();
    for mitigation in ["on", "off"] {
        let s = Scenario::load_with_overrides(text, &[("mitigation".into(), mitigation.into())])?;
        let summary = scenario::report(&scenario::run(&s)?);
        println!("--- mitigation {mitigation}");
        for line in summary.to_string().lines().filter(|l| !l.starts_with('#')).take(12) {
            println!("{line}");
        }
    }
    Ok(())
}
