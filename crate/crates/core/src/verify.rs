//! Runtime invariant checks over recorded executions.
//!
//! Each check returns a [`CheckResult`] instead of panicking so the CLI can
//! print a report. [`run_suite`] accepts an optional weight policy, which
//! lets tests inject deliberately corrupted weights and confirm the checks
//! actually fire.

use serde::Serialize;

use crate::adversary::{build_indistinguishability_witness, view_discrepancy, AdversaryView};
use crate::paillier::{FixedPointCodec, Keypair};
use crate::rng::experiment_rng;
use crate::sim::{run_experiment, run_with_policy, ExecutionTrace, ExperimentConfig, Mode, SimError};
use crate::weights::{WeightPolicy, SUM_TOLERANCE};
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

/// `|sum_i s_i(k) - sum_i x_i(0)| <= 1e-9 (1 + |sum x(0)|)` at every round.
pub fn mass_conservation(trace: &ExecutionTrace) -> CheckResult {
    let total: f64 = trace.x0.iter().sum();
    let tol = 1e-9 * (1.0 + total.abs());
    let worst = (0..trace.trajectory.len())
        .map(|k| (trace.trajectory.s_at(k).iter().sum::<f64>() - total).abs())
        .fold(0.0, f64::max);
    CheckResult::new("mass-conservation", worst <= tol, format!("max drift {worst:.3e}, tolerance {tol:.3e}"))
}

/// Every recorded s- and w-column sums to one.
pub fn column_stochasticity(trace: &ExecutionTrace) -> CheckResult {
    let mut worst: f64 = 0.0;
    for rw in trace.schedule.rounds.iter().flatten() {
        worst = worst.max((rw.s_sum() - 1.0).abs()).max((rw.w_sum() - 1.0).abs());
    }
    CheckResult::new(
        "column-stochasticity",
        worst <= SUM_TOLERANCE,
        format!("max column-sum error {worst:.3e}"),
    )
}

/// `w_i(k) = 1` exactly for `k <= K + 1` and `w_i(k) >= eps^N` afterwards.
pub fn weight_lower_bound(trace: &ExecutionTrace) -> CheckResult {
    let k_star = trace.params.big_k + 1;
    let n = trace.graph.node_count();
    let floor = trace.params.epsilon.powi(n as i32);
    let mut not_one = 0;
    let mut below = 0;
    let mut min_late = f64::INFINITY;
    for (k, states) in trace.trajectory.rounds.iter().enumerate() {
        for st in states {
            if k <= k_star {
                not_one += usize::from(st.w != 1.0);
            } else {
                min_late = min_late.min(st.w);
                below += usize::from(st.w < floor);
            }
        }
    }
    CheckResult::new(
        "weight-lower-bound",
        not_one == 0 && below == 0,
        format!("{not_one} early w != 1, {below} late w below {floor:.3e} (min {min_late:.3e})"),
    )
}

/// Replays a witness that moves mass from `target` to `helper` and compares
/// the members' views.
pub fn witness_replay(
    trace: &ExecutionTrace,
    members: &[usize],
    target: usize,
    helper: usize,
    alt_x0: f64,
) -> Result<CheckResult, SimError> {
    let witness = build_indistinguishability_witness(trace, members, target, alt_x0, helper)?;
    let replayed = witness.replay(&trace.graph, trace.params)?;
    let gap = view_discrepancy(&AdversaryView::collect(trace, members), &AdversaryView::collect(&replayed, members));
    Ok(CheckResult::new("witness-replay", gap <= 1e-9, format!("max view discrepancy {gap:.3e}")))
}

/// Encrypt/decrypt identity and homomorphic addition on random fixed-point
/// values.
pub fn crypto_roundtrip(key_bits: u64, samples: usize, seed: u64) -> Result<CheckResult, SimError> {
    let mut rng = experiment_rng(seed);
    let key = Keypair::generate(key_bits, &mut rng)?;
    let codec = FixedPointCodec::for_key(&key.public);
    let quantum = 2f64.powi(-(codec.fractional_bits() as i32));
    let mut failures = 0;
    for _ in 0..samples {
        let a: f64 = rng.gen_range(-1e6..1e6);
        let b: f64 = rng.gen_range(-1e6..1e6);
        let ca = key.public.encrypt(&codec.encode(a)?, &mut rng)?;
        let cb = key.public.encrypt(&codec.encode(b)?, &mut rng)?;
        let da = codec.decode(&key.decrypt(&ca)?);
        let sum = codec.decode(&key.decrypt(&key.public.add(&ca, &cb)?)?);
        failures += usize::from((da - a).abs() > quantum || (sum - (a + b)).abs() > 2.0 * quantum);
    }
    Ok(CheckResult::new(
        "crypto-roundtrip",
        failures == 0,
        format!("{failures} of {samples} samples outside quantization bound"),
    ))
}

/// Runs the configured experiment (with `policy` if given) and applies every
/// applicable check.
pub fn run_suite(config: &ExperimentConfig, policy: Option<&mut dyn WeightPolicy>) -> Result<Vec<CheckResult>, SimError> {
    let out = match policy {
        Some(p) => run_with_policy(config, p)?,
        None => run_experiment(config)?,
    };
    let trace = &out.trace;
    let mut results = vec![mass_conservation(trace), column_stochasticity(trace)];
    if config.mode != Mode::Algorithm0 {
        results.push(weight_lower_bound(trace));
    }
    if let Some(adv) = &config.adversary {
        if let Some(target) = adv.target {
            let helper = trace.graph.neighborhood(target).into_iter().find(|h| !adv.members.contains(h));
            if let Some(helper) = helper {
                let alt = trace.x0[target] + 13.0;
                if alt != 0.0 && trace.x0[helper] - 13.0 != 0.0 {
                    results.push(witness_replay(trace, &adv.members, target, helper, alt)?);
                }
            }
        }
    }
    if config.mode == Mode::Algorithm2 {
        results.push(crypto_roundtrip(config.key_bits, 100, config.seed)?);
    }
    Ok(results)
}
