//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use epirecon::calibrate::{calibrate, CalibrationProblem};
use epirecon::chain::{analytic_chain, lie_chain};
use epirecon::discriminate::{
    closeness_bound_check, discriminate_approach1, discriminate_approach2, Thresholds, Verdict,
};
use epirecon::models::{output_jets, regression_residual, ModelId, Recovered};
use epirecon::ode::{GridSpec, State};
use epirecon::reconstruct::{
    reconstruct_multitime, reconstruct_wronskian, recover_theta, wronskian_batch, ReconOptions,
};
use epirecon::Error;
use rand::RngExt;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Case 1 Wronskian reconstruction at every grid time.
fn criterion1() -> Outcome {
    let clock = Instant::now();
    let m = model_of(ModelId::Sirs);
    let chain = analytic_chain(m.as_ref(), &case1(), 5).unwrap();
    let results = wronskian_batch(m.as_ref(), &chain, &ReconOptions::default());
    let elapsed = clock.elapsed().as_secs_f64();
    let sigma = &m.r(&CASE1_THETA)[0];
    let (mut sigma_err, mut x0_err) = (0.0f64, 0.0f64);
    let (mut cond_lo, mut cond_hi) = (f64::INFINITY, 0.0f64);
    let mut failures = 0;
    for r in &results {
        match r {
            Ok(r) => {
                sigma_err = sigma_err.max(max_rel_err(&r.sigma()[0], sigma));
                x0_err = x0_err.max((r.x0_hat[0] - 0.9).abs().max((r.x0_hat[1] - 0.1).abs()));
                cond_lo = cond_lo.min(r.max_cond());
                cond_hi = cond_hi.max(r.max_cond());
            }
            Err(_) => failures += 1,
        }
    }
    let pass = results.len() == 161
        && failures == 0
        && sigma_err <= 1e-9
        && cond_lo >= 1e2
        && cond_hi <= 1e7
        && x0_err <= 1e-9
        && elapsed < 1.0;
    outcome(
        pass,
        format!(
            "{} times, max sigma rel err {sigma_err:.2e}, cond [{cond_lo:.2e}, {cond_hi:.2e}], \
             max x0 err {x0_err:.2e}, {elapsed:.3}s",
            results.len()
        ),
    )
}

/// Parameter-map round trip on 1000 draws per identifiable model.
fn criterion2() -> Outcome {
    let clock = Instant::now();
    let mut rng = rng(2);
    let mut worst = 0.0f64;
    let mut failures = 0;
    let ids = [
        ModelId::Sirs,
        ModelId::SirDemog,
        ModelId::Sirv,
        ModelId::SirIncidence,
        ModelId::SivDemog,
    ];
    for id in ids {
        let m = model_of(id);
        for _ in 0..1000 {
            let (theta, _) = draw(id, &mut rng);
            match recover_theta(m.as_ref(), &m.r(&theta), &ReconOptions::default()) {
                Ok(Recovered::Full(back)) => worst = worst.max(max_rel_err(&back, &theta)),
                _ => failures += 1,
            }
        }
    }
    let elapsed = clock.elapsed().as_secs_f64();
    outcome(
        failures == 0 && worst <= 1e-12 && elapsed < 1.0,
        format!("5000 draws, max rel err {worst:.2e}, {failures} failures, {elapsed:.3}s"),
    )
}

/// Regression identity on Lie-derivative chains, 100 draws per model.
fn criterion3() -> Outcome {
    let mut rng = rng(3);
    let ids = [
        ModelId::Sirs,
        ModelId::Sir,
        ModelId::SirDemog,
        ModelId::Sirv,
        ModelId::SirIncidence,
        ModelId::SivDemog,
    ];
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut failures = 0;
    for id in ids {
        let m = model_of(id);
        let order = m.blocks().iter().map(|b| b.top_order).max().unwrap();
        for _ in 0..100 {
            let (theta, x0) = draw(id, &mut rng);
            let traj = simulate(id, &theta, &x0, H, T_MAX);
            let Ok(chain) = lie_chain(m.as_ref(), &traj, order) else {
                failures += 1;
                continue;
            };
            let sigma = m.r(&theta);
            for i in 1..chain.len() - 1 {
                let outs = output_jets(&chain.point(i));
                for block in 0..m.blocks().len() {
                    let g0 = m.rhs(block, &outs, &sigma).map(|j| j.value());
                    let res = regression_residual(m.as_ref(), block, &outs, &sigma);
                    match (g0, res) {
                        (Ok(g0), Ok(res)) => {
                            worst = worst.max(res.value().abs() / g0.abs().max(1.0));
                            checked += 1;
                        }
                        _ => failures += 1,
                    }
                }
            }
        }
    }
    outcome(
        failures == 0 && worst <= 1e-8,
        format!("{checked} points, max scaled residual {worst:.2e}, {failures} failures"),
    )
}

/// Multi-start calibration on Case 2 daily data.
fn criterion4() -> Outcome {
    let clock = Instant::now();
    let traj = case2();
    let obs: Vec<(f64, f64)> = (0..=5).map(|d| (d as f64, 0.3 * traj.states[d * 32][1])).collect();
    let mut problem = CalibrationProblem::new(obs);
    problem.starts = 20;
    problem.seed = 42;
    let run = match calibrate(&problem) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("calibration failed: {e}")),
    };
    let elapsed = clock.elapsed().as_secs_f64();
    let target = [0.1, 0.25 / 0.3, 0.225];
    let fits: Vec<_> = run.results.iter().filter(|r| r.objective < 1e-8).collect();
    let close = fits
        .iter()
        .any(|r| r.converged && r.combos.iter().zip(target).all(|(c, t)| (c - t).abs() <= 1e-2));
    let spread = |f: &dyn Fn(&epirecon::CalibrationResult) -> f64| {
        let v: Vec<f64> = fits.iter().map(|r| f(r)).collect();
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let combo_spread = (0..3).map(|c| spread(&|r| r.combos[c])).fold(0.0, f64::max);
    let k_spread = spread(&|r| r.theta_hat[0]);
    let beta_spread = spread(&|r| r.theta_hat[1]);
    let s0_spread = spread(&|r| r.theta_hat[4]);
    let witness = k_spread > 0.1 || beta_spread > 0.1 || s0_spread > 0.1;
    let pass = close && !fits.is_empty() && combo_spread <= 1e-2 && witness && elapsed < 300.0;
    outcome(
        pass,
        format!(
            "{} fits below 1e-8 of {} runs ({} infeasible starts), best {:.2e}, combo spread {combo_spread:.2e}, \
             spread k {k_spread:.3} beta {beta_spread:.3} S0 {s0_spread:.3}, {elapsed:.1}s",
            fits.len(),
            run.results.len(),
            run.failed_starts.len(),
            run.results[0].objective
        ),
    )
}

/// Both discrimination approaches on the two exact chains.
fn criterion5() -> Outcome {
    let m = model_of(ModelId::SirsExt);
    let th = Thresholds::default();
    let w = (0.0, T_MAX + H);
    let c1 = analytic_chain(m.as_ref(), &case1(), 3).unwrap();
    let c2 = analytic_chain(m.as_ref(), &case2(), 3).unwrap();
    let (Ok(a11), Ok(a21), Ok(a12), Ok(a22)) = (
        discriminate_approach1(&c1, w, &th),
        discriminate_approach2(&c1, w, &th),
        discriminate_approach1(&c2, w, &th),
        discriminate_approach2(&c2, w, &th),
    ) else {
        return outcome(false, "a discrimination call failed".into());
    };
    let mu_err = (a11.sigma[2] - 0.05).abs();
    let sir_mag = a12.sigma[0].abs().max(a12.sigma[2].abs());
    let pass = a11.verdict == Verdict::Sirs
        && a21.verdict == Verdict::Sirs
        && a12.verdict == Verdict::Sir
        && a22.verdict == Verdict::Sir
        && mu_err <= 1e-6
        && sir_mag <= 1e-8;
    outcome(
        pass,
        format!(
            "case1 {}/{}, case2 {}/{}, |sigma3 - mu| {mu_err:.2e}, case2 max(|sigma1|,|sigma3|) {sir_mag:.2e}",
            a11.verdict.as_str(),
            a21.verdict.as_str(),
            a12.verdict.as_str(),
            a22.verdict.as_str()
        ),
    )
}

/// SIR/SIRS closeness bound on the comparison configuration.
fn criterion6() -> Outcome {
    match closeness_bound_check(2.5, 1.0, 0.001, &State(vec![0.9, 0.1]), &GridSpec::new(H, 25.0)) {
        Ok(r) => {
            let ratio = r
                .gap
                .iter()
                .zip(&r.bound)
                .skip(1)
                .map(|(g, b)| g / b)
                .fold(0.0, f64::max);
            outcome(
                true,
                format!(
                    "L = {:.4}, {} points, max gap {:.3e}, max gap/bound {ratio:.3e}",
                    r.lipschitz,
                    r.times.len(),
                    r.max_gap
                ),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

/// Fourth-order central difference of `f` at interior index `i`.
fn central_difference(f: &[f64], i: usize, h: f64) -> f64 {
    (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h)
}

fn rk4_error(h: f64) -> f64 {
    let traj = simulate(ModelId::Sirs, &CASE1_THETA, &CASE_X0, h, T_MAX);
    let refs = reference(ModelId::Sirs, &CASE1_THETA, &CASE_X0, &traj.times);
    traj.states
        .iter()
        .zip(&refs)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

/// Analytic derivatives against differences of the next-lower order, and
/// the RK4 convergence rate against a Dormand-Prince reference.
fn criterion7() -> Outcome {
    let h = 1.0 / 512.0;
    let mut worst = 0.0f64;
    for (id, theta) in [(ModelId::Sirs, CASE1_THETA), (ModelId::SirsExt, CASE2_THETA)] {
        let m = model_of(id);
        let traj = simulate(id, &theta, &CASE_X0, h, T_MAX);
        let chain = analytic_chain(m.as_ref(), &traj, 3).unwrap();
        for k in 1..=3 {
            let lower = chain.series(0, k - 1);
            let upper = chain.series(0, k);
            let scale = upper.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for i in 2..chain.len() - 2 {
                let fd = central_difference(&lower, i, h);
                worst = worst.max((fd - upper[i]).abs() / scale);
            }
        }
    }
    let ratios = [rk4_error(0.25) / rk4_error(0.125), rk4_error(0.125) / rk4_error(0.0625)];
    let pass = worst <= 1e-6 && ratios.iter().all(|r| (12.0..=20.0).contains(r));
    outcome(
        pass,
        format!(
            "max rel derivative err {worst:.2e}, RK4 halving ratios {:.2}, {:.2}",
            ratios[0], ratios[1]
        ),
    )
}

/// Chains started at an equilibrium must be refused by both methods.
fn criterion8() -> Outcome {
    let mut rng = rng(8);
    let opts = ReconOptions::default();
    let (mut trials, mut refused) = (0, 0);
    let mut unexpected = Vec::new();
    for id in [ModelId::Sirs, ModelId::SirDemog] {
        let m = model_of(id);
        for n in 0..50 {
            let theta = loop {
                let (theta, _) = draw(id, &mut rng);
                if m.equilibria(&theta).ee.is_some() {
                    break theta;
                }
            };
            let eq = m.equilibria(&theta);
            let x0 = if n % 2 == 0 { eq.dfe.unwrap() } else { eq.ee.unwrap() };
            let traj = simulate(id, &theta, &x0, H, T_MAX);
            let chain = lie_chain(m.as_ref(), &traj, 5).unwrap();
            let at = chain.times[rng.random_range(0..chain.len())];
            trials += 1;
            let multi = reconstruct_multitime(m.as_ref(), &chain, (0.0, T_MAX + H), &opts);
            let wr = reconstruct_wronskian(m.as_ref(), &chain, at, &opts);
            match (&multi, &wr) {
                (Err(Error::SingularEverywhere { .. }), Err(Error::WronskianVanishes { .. })) => {
                    refused += 1
                }
                _ => unexpected.push(format!(
                    "{id} {}: {:?} / {:?}",
                    if n % 2 == 0 { "DFE" } else { "EE" },
                    multi.as_ref().err().map(Error::kind),
                    wr.as_ref().err().map(Error::kind)
                )),
            }
        }
    }
    let mut detail = format!("{refused}/{trials} trials refused by both methods");
    if let Some(first) = unexpected.first() {
        detail.push_str(&format!("; first exception: {first}"));
    }
    outcome(refused == trials, detail)
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 Wronskian reconstruction on Case 1", criterion1),
        ("2 parameter-map round trip", criterion2),
        ("3 regression identity", criterion3),
        ("4 daily-data calibration", criterion4),
        ("5 SIR/SIRS discrimination", criterion5),
        ("6 SIR/SIRS closeness bound", criterion6),
        ("7 derivative and integrator oracles", criterion7),
        ("8 equilibrium starts refused", criterion8),
    ];
    let mut all = true;
    for (name, run) in criteria {
        let o = run();
        all &= o.pass;
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
