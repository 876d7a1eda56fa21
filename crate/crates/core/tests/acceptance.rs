//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::fs;
use std::time::{Duration, Instant};

use passiguard::cli::run_suite;
use passiguard::linsys::{tf_to_ss, true_indices_lti, FrequencySweep, RationalTF};
use passiguard::mmatrix::{
    certify_default, design_ifofp, design_ifp, design_ofp, design_passive, ConstraintKind, MMatrix,
    CERTIFY_TOL, CONSTRAINT_MARGIN,
};
use passiguard::passivity::PassivityEstimate;
use passiguard::plants::{ex1_tf, lag_controller, lead_controller, plant_ex2, FaultKind, FaultSchedule};
use passiguard::scenario::{self, Scenario, BUNDLED};
use passiguard::simcore::{step_ode, Method, Plant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn timed(id: u32, title: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed > limit {
            o.pass = false;
            o.detail.push_str(&format!("; runtime {:.1?} exceeds {:.0?}", elapsed, limit));
        }
    }
    println!(
        "{} [{id}] {title}: {} ({:.2?})",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed
    );
    o.pass
}

fn estimator_bound() -> Outcome {
    const TOL: f64 = 1e-3;
    // Startup quadrature error relative to the tiny denominators scales as
    // dt^2 / t^2; 1e-4 keeps it well inside TOL from the first sample.
    let dt = 1e-4;
    let n = 200_000;
    let sweep = FrequencySweep::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_nu = f64::INFINITY;
    let mut worst_rho = f64::INFINITY;
    let mut rho_checked = 0;
    let mut violations = Vec::new();
    for p in 0..50 {
        let tf = common::random_plant(&mut rng);
        let oracle = true_indices_lti(&tf_to_ss(&tf).unwrap(), &sweep).unwrap();
        // The OFP bound over a finite horizon needs rho >= 0.
        let check_rho = oracle.rho >= 0.0;
        for (f, family) in common::FAMILIES.iter().enumerate() {
            let e = common::signal(f, n, dt, 1000 + p as u64);
            let y = common::open_loop(&tf, &e, dt);
            let mut est = PassivityEstimate::cumulative();
            if check_rho {
                rho_checked += 1;
            }
            for (k, (&ek, &yk)) in e.iter().zip(&y).enumerate() {
                est.update(ek, yk, dt);
                if let Some(nu) = est.nu_bar() {
                    let slack = nu - oracle.nu;
                    worst_nu = worst_nu.min(slack);
                    if slack < -TOL {
                        violations.push(format!("plant {p} {family} nu at t={:.3}: {slack:.3e}", k as f64 * dt));
                    }
                }
                if let (true, Some(rho)) = (check_rho, est.rho_bar()) {
                    let slack = rho - oracle.rho;
                    worst_rho = worst_rho.min(slack);
                    if slack < -TOL {
                        violations.push(format!("plant {p} {family} rho at t={:.3}: {slack:.3e}", k as f64 * dt));
                    }
                }
            }
        }
    }
    let detail = format!(
        "500 runs, min nu_bar-nu {worst_nu:.3e}, min rho_bar-rho {worst_rho:.3e} over {rho_checked} runs with rho>=0, {} violations{}",
        violations.len(),
        violations.first().map(|v| format!(", first: {v}")).unwrap_or_default()
    );
    outcome(violations.is_empty(), detail)
}

fn synthesis_grid() -> Outcome {
    let controllers = [
        (0.5, RationalTF::first_order(0.5, 0.91, 1.08)),
        (1.37, lead_controller()),
        (5.806, lag_controller()),
    ];
    let mut cases = 0;
    let mut worst_slack = f64::INFINITY;
    let mut worst_residual = f64::INFINITY;
    let mut failures = Vec::new();
    for (gamma, tf) in &controllers {
        let ss = tf_to_ss(tf).unwrap();
        for target in [0.1, 0.5] {
            let designs: [(&str, passiguard::Result<MMatrix>); 4] = [
                ("passive", design_passive(*gamma)),
                ("ofp", design_ofp(*gamma, target)),
                ("ifp", design_ifp(*gamma, target)),
                ("ifofp", design_ifofp(*gamma, target, target)),
            ];
            for (label, m) in designs {
                cases += 1;
                let m = match m {
                    Ok(m) => m,
                    Err(e) => {
                        failures.push(format!("{label} gamma={gamma} target={target}: {e}"));
                        continue;
                    }
                };
                for c in m.constraints() {
                    if c.kind != ConstraintKind::Equal {
                        worst_slack = worst_slack.min(c.slack);
                    }
                    if !c.holds() {
                        failures.push(format!("{label} gamma={gamma} target={target}: {} slack {:e}", c.label, c.slack));
                    }
                }
                let cert = certify_default(&m, &ss, 7).unwrap();
                worst_residual = worst_residual.min(cert.min_residual());
                if !cert.passed() {
                    failures.push(format!(
                        "{label} gamma={gamma} target={target}: residual {:e}",
                        cert.min_residual()
                    ));
                }
            }
        }
    }
    outcome(
        failures.is_empty() && cases == 24,
        format!(
            "{cases} cases, equalities exact, min inequality slack {worst_slack:.3e} (need >= {CONSTRAINT_MARGIN:e}), min certification residual {worst_residual:.3e} (need >= {CERTIFY_TOL:e}){}",
            failures.first().map(|f| format!(", first failure: {f}")).unwrap_or_default()
        ),
    )
}

fn run_both(name: &str) -> (scenario::RunLog, scenario::RunLog) {
    let on = Scenario::bundled(name).unwrap();
    let off = Scenario::load_with_overrides(
        BUNDLED.iter().find(|(n, _)| *n == name).unwrap().1,
        &[("mitigation".into(), "off".into())],
    )
    .unwrap();
    let (on, off) = std::thread::scope(|s| {
        let a = s.spawn(|| scenario::run(&on).unwrap());
        let b = s.spawn(|| scenario::run(&off).unwrap());
        (a.join().unwrap(), b.join().unwrap())
    });
    (on, off)
}

fn boundedness_contrast(name: &str, window: Option<(f64, f64)>) -> Outcome {
    let (on, off) = run_both(name);
    let son = scenario::report(&on);
    let soff = scenario::report(&off);
    let t_end = Scenario::bundled(name).unwrap().config.solver.t_end;
    let off_ok = soff.divergence_time.is_some_and(|t| t < t_end);
    let on_ok = son.divergence_time.is_none() && son.sup_y <= 20.0;
    let recon_ok = son.reconfigurations >= 1;
    let timing_ok = match window {
        Some((lo, hi)) => son.first_fault.is_some_and(|t| (lo..=hi).contains(&t)),
        None => son.first_fault.is_some(),
    };
    outcome(
        off_ok && on_ok && recon_ok && timing_ok,
        format!(
            "off: diverged at {:?} s; on: sup|y| {:.4}, diverged {:?}, {} reconfigurations, first fault event {:?} s",
            soff.divergence_time, son.sup_y, son.divergence_time, son.reconfigurations, son.first_fault
        ),
    )
}

fn spring_scenario() -> Outcome {
    let s = Scenario::bundled("ex3_spring").unwrap();
    let log = scenario::run(&s).unwrap();
    let sum = scenario::report(&log);
    let bounded = sum.divergence_time.is_none() && sum.sup_y <= 20.0;
    let detected = sum.first_fault.is_some_and(|t| t > 40.0);
    let margin_ok = sum
        .min_margin_after_final
        .is_some_and(|m| m >= sum.eps_margin - 1e-9);
    outcome(
        bounded && detected && margin_ok,
        format!(
            "sup|y| {:.4}, diverged {:?}, first fault event {:?} s, {} reconfigurations, min margin after last reconfiguration {:?} (need >= {})",
            sum.sup_y,
            sum.divergence_time,
            sum.first_fault,
            sum.reconfigurations,
            sum.min_margin_after_final,
            sum.eps_margin
        ),
    )
}

fn identity_equivalence() -> Outcome {
    let mut compared = 0usize;
    let mut mismatch = None;
    for (name, _) in BUNDLED {
        let s = Scenario::bundled(name).unwrap();
        let t_fault = s.config.fault.map_or(s.config.solver.t_end, |f| f.t_start);
        let mut a = s.stepper(false).unwrap();
        let mut b = s.stepper(true).unwrap();
        while a.time() < t_fault {
            let ra = a.step().unwrap();
            let rb = b.step().unwrap();
            compared += 1;
            let same = match (&ra, &rb) {
                (Ok(x), Ok(y)) => [x.t, x.r, x.e, x.y, x.u]
                    .iter()
                    .zip([y.t, y.r, y.e, y.y, y.u])
                    .all(|(p, q)| p.to_bits() == q.to_bits()),
                _ => false,
            };
            let states = a.plant_state().iter().chain(a.controller_state()).map(|v| v.to_bits()).eq(
                b.plant_state().iter().chain(b.controller_state()).map(|v| v.to_bits()),
            );
            if !(same && states) {
                mismatch = Some(format!("{name} at t={}", a.time()));
                break;
            }
        }
    }
    outcome(
        mismatch.is_none(),
        match mismatch {
            None => format!("{compared} pre-fault steps bit-identical across 3 scenarios"),
            Some(m) => format!("first mismatch {m}"),
        },
    )
}

fn linearization() -> Outcome {
    let plant = plant_ex2(FaultSchedule {
        kind: FaultKind::DynamicsSwap,
        t_start: 0.0,
        t_full: 0.0,
        magnitude: 1.0,
    })
    .unwrap();
    let a = tf_to_ss(&ex1_tf()).unwrap().a;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for j in 0..2 {
        let mut xp = [0.0; 2];
        let mut xm = [0.0; 2];
        xp[j] = h;
        xm[j] = -h;
        let (mut fp, mut fm) = ([0.0; 2], [0.0; 2]);
        plant.derivative(&xp, 0.0, 1.0, &mut fp);
        plant.derivative(&xm, 0.0, 1.0, &mut fm);
        for i in 0..2 {
            let jac = (fp[i] - fm[i]) / (2.0 * h);
            worst = worst.max((jac - a[(i, j)]).abs());
        }
    }
    outcome(worst <= 1e-6, format!("max |J - A| = {worst:.3e} with fault active"))
}

fn hygiene() -> Outcome {
    let err = |dt: f64| {
        let n = (1.0 / dt).round() as usize;
        let mut x = vec![1.0];
        for k in 0..n {
            x = step_ode(|_, x, _, dx| dx[0] = -x[0], k as f64 * dt, &x, 0.0, dt, Method::Rk4).unwrap();
        }
        (x[0] - (-1.0f64).exp()).abs()
    };
    let ratio = err(0.1) / err(0.05);
    let order_ok = (12.0..=20.0).contains(&ratio);

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_suite(&[], Some(a.path())).unwrap();
    run_suite(&[], Some(b.path())).unwrap();
    let mut files: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    files.sort();
    let differing: Vec<_> = files
        .iter()
        .filter(|f| fs::read(a.path().join(f)).ok() != fs::read(b.path().join(f)).ok())
        .map(|f| f.to_string_lossy().into_owned())
        .collect();
    outcome(
        order_ok && differing.is_empty() && files.len() == 18,
        format!(
            "RK4 error ratio {ratio:.3}; {} suite files compared, {} differ{}",
            files.len(),
            differing.len(),
            differing.first().map(|f| format!(" ({f})")).unwrap_or_default()
        ),
    )
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        timed(1, "estimator bound", Some(secs(120)), estimator_bound),
        timed(2, "wrapper constraints and certification", Some(secs(60)), synthesis_grid),
        timed(3, "ex1_delay boundedness contrast", Some(secs(30)), || {
            boundedness_contrast("ex1_delay", Some((35.0, 45.0)))
        }),
        timed(4, "ex2_nonlinear boundedness contrast", Some(secs(30)), || {
            boundedness_contrast("ex2_nonlinear", None)
        }),
        timed(5, "ex3_spring mitigated run", Some(secs(30)), spring_scenario),
        timed(6, "identity wrapper equivalence", None, identity_equivalence),
        timed(7, "linearization of the switched plant", None, linearization),
        timed(8, "numerical hygiene", None, hygiene),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
