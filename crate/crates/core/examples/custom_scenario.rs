//! Build a scenario from config text with a user plant, apply overrides the
//! way `--set` does, and write the three output files.

use passiguard::scenario::{self, parse_override, Scenario};

const CONFIG: &str = r#"
name = "custom"
mitigation = "on"

[plant]
kind = "tf"
num = [1.0, 2.0]
den = [1.0, 1.0, 4.0]

[controller]
gain = 1.0
num = [1.0, 1.0]
den = [1.0, 3.0]

[reference]
kind = "step"

[thresholds]
rho0 = 0.0
nu0 = 0.0

[estimator]
window = 10.0

[solver]
dt = 0.001
t_end = 30.0
"#;

fn main() -> passiguard::Result<()> {
    let overrides = ["reference.amplitude=2.0", "solver.method=\"euler\""]
        .iter()
        .map(|s| parse_override(s))
        .collect::<passiguard::Result<Vec<_>>>()?;
    let s = Scenario::load_with_overrides(CONFIG, &overrides)?;
    println!("scenario hash {}", s.hash);
    let log = scenario::run(&s)?;
    let dir = std::env::temp_dir().join("passiguard-custom");
    let summary = scenario::write_outputs(&log, &dir)?;
    println!("{summary}");
    println!("files written to {}", dir.display());
    Ok(())
}
