//! Design every wrapper case around the lead compensator and certify each one
//! on the probe signals.

use passiguard::linsys::{gain_bound, tf_to_ss, FrequencySweep, DEFAULT_GAIN_SAFETY};
use passiguard::mmatrix::{certify_default, design_ifofp, design_ifp, design_ofp, design_passive};
use passiguard::plants::lead_controller;

fn main() -> passiguard::Result<()> {
    let controller = tf_to_ss(&lead_controller())?;
    let gamma = gain_bound(&controller, &FrequencySweep::default(), DEFAULT_GAIN_SAFETY)?;
    println!("gamma {gamma:.6}");
    let designs = [
        design_passive(gamma)?,
        design_ofp(gamma, 0.5)?,
        design_ifp(gamma, 0.5)?,
        design_ifofp(gamma, 0.3, 0.6)?,
    ];
    for m in &designs {
        let cert = certify_default(m, &controller, 1)?;
        let (eps, delta) = m.claimed_indices().unwrap_or((0.0, 0.0));
        println!(
            "{:<7} M = [{:+.4} {:+.4}; {:+.4} {:+.4}]  claims eps {eps:.4} delta {delta:.4}  residual {:+.2e} {}",
            m.case.to_string(),
            m.m11,
            m.m12,
            m.m21,
            m.m22,
            cert.min_residual(),
            if cert.passed() { "ok" } else { "FAILED" }
        );
        if let Some(w) = &m.warning {
            println!("        {w}");
        }
    }
    Ok(())
}
