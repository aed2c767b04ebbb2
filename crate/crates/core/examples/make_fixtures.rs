//! Regenerates the bundled synthetic trial dataset at `fixtures/synthetic_trial.csv`.
//!
//! The scenario below is frozen; rerunning this example rewrites the exact same
//! file. The seed is searched so the realized arm split is 145 treated versus
//! 152 control and the first-stage partial F clears the two-instrument
//! threshold with room to spare.

use std::fmt::Write as _;
use std::path::Path;

use mediv::estimators::{fit_two_stage, partial_f};
use mediv::simlab::{generate, MediatorKind, ScenarioSpec};

fn trial_spec(seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        n: 297,
        p: 2,
        theta_r_mean: -1.0,
        theta_m_mean: -2.5,
        theta_r_sd: 0.4,
        theta_m_sd: 0.6,
        tau_r_true: vec![0.0, 0.0],
        tau_m_true: vec![0.0, 0.0],
        alpha: 1.5,
        beta: vec![0.7, -0.6],
        gamma: vec![0.0, 0.8, 0.4, -0.3, 1.6, 1.2],
        confounding: 1.2,
        noise_sd: 3.0,
        mediator_kind: MediatorKind::BinaryThreshold,
        seed,
        ..ScenarioSpec::default()
    }
}

fn main() {
    let mut chosen = None;
    for seed in 0..5000 {
        let spec = trial_spec(seed);
        let (data, _) = generate(&spec).unwrap();
        let treated = data.r().iter().filter(|&&r| r == 1.0).count();
        if treated != 145 {
            continue;
        }
        let diag = partial_f(&data).unwrap();
        if diag.partial_f < 14.0 || diag.partial_f > 60.0 {
            continue;
        }
        chosen = Some((seed, data, diag));
        break;
    }
    let (seed, data, diag) = chosen.expect("no seed produced the target arm split");

    let fit = fit_two_stage(&data).unwrap();
    println!(
        "seed {seed}: treated 145 / control 152, partial F = {:.2}, theta_r = {:.2}, theta_m = {:.2}",
        diag.partial_f, fit.theta_r, fit.theta_m
    );

    let mut csv = String::from("outcome,arm,adherent,severity,support\n");
    for i in 0..data.n() {
        writeln!(
            csv,
            "{:.6},{},{},{:.6},{:.6}",
            data.y()[i],
            data.r()[i] as i64,
            data.m()[i] as i64,
            data.x().get(i, 0),
            data.x().get(i, 1),
        )
        .unwrap();
    }

    let out = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic_trial.csv");
    std::fs::write(&out, csv).unwrap();
    println!("wrote {}", out.display());
}
