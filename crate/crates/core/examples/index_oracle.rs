//! Realize the example plant and compensators and print their grid indices.

use passiguard::linsys::{gain_bound, l2_gain, tf_to_ss, true_indices_lti, FrequencySweep, DEFAULT_GAIN_SAFETY};
use passiguard::plants::{ex1_tf, lag_controller, lead_controller};

fn main() -> passiguard::Result<()> {
    let sweep = FrequencySweep::default();
    for (name, tf) in [("plant", ex1_tf()), ("lead", lead_controller()), ("lag", lag_controller())] {
        let ss = tf_to_ss(&tf)?;
        let idx = true_indices_lti(&ss, &sweep)?;
        println!(
            "{name:<6} order {} nu {:+.6} rho {:+.6} gain {:.6} gamma {:.6}",
            ss.order(),
            idx.nu,
            idx.rho,
            l2_gain(&ss, &sweep)?,
            gain_bound(&ss, &sweep, DEFAULT_GAIN_SAFETY)?
        );
        println!("       A = {:?}", ss.a.as_slice());
    }
    Ok(())
}
