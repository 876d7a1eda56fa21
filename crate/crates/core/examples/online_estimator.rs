//! Running index estimates of a first-order lag driven by a square wave,
//! cumulative and over a 5 s moving window.

use passiguard::linsys::{tf_to_ss, true_indices_lti, FrequencySweep, RationalTF};
use passiguard::mmatrix::{simulate_wrapped, MMatrix};
use passiguard::passivity::{EstimatorConfig, PassivityEstimate};

fn main() -> passiguard::Result<()> {
    let tf = RationalTF::new(vec![2.0], vec![1.0, 1.5])?;
    let ss = tf_to_ss(&tf)?;
    let oracle = true_indices_lti(&ss, &FrequencySweep::default())?;
    println!("oracle nu {:+.4} rho {:+.4}", oracle.nu, oracle.rho);

    let dt = 1e-3;
    let e: Vec<f64> = (0..30_000)
        .map(|k| if (k as f64 * dt) % 6.0 < 3.0 { 1.0 } else { -1.0 })
        .collect();
    let y = simulate_wrapped(&MMatrix::identity(), &ss, &e, dt)?;

    let mut cumulative = PassivityEstimate::cumulative();
    let mut windowed = PassivityEstimate::new(EstimatorConfig {
        window: Some(5.0),
        ..EstimatorConfig::default()
    });
    for (k, (&ek, &yk)) in e.iter().zip(&y).enumerate() {
        cumulative.update(ek, yk, dt);
        windowed.update(ek, yk, dt);
        if k % 5000 == 0 && k > 0 {
            println!(
                "t {:5.1}  cumulative rho {:+.4} nu {:+.4}  window rho {:+.4} nu {:+.4}",
                k as f64 * dt,
                cumulative.rho_bar().unwrap_or(f64::NAN),
                cumulative.nu_bar().unwrap_or(f64::NAN),
                windowed.rho_bar().unwrap_or(f64::NAN),
                windowed.nu_bar().unwrap_or(f64::NAN),
            );
        }
    }
    Ok(())
}
