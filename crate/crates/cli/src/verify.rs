//! Self-checking batteries behind the `verify` subcommand. Each suite
//! re-derives a claim the library depends on and reports machine-readable
//! pass/fail per check, so a build can prove its own invariants in the
//! field without the test harness.

use ndarray::{Array1, Array2};
use num_bigint::BigUint;
use quadricflow_core::gradflow::{self, Dataset, LossKind};
use quadricflow_core::stats::{
    f_cdf, monte_carlo_obstruction, obstruction_probability, InitScheme, ObstructionQuery,
};
use quadricflow_core::topology::{
    betti, effective_component_count, poincare_polynomial, InvariantSignature,
};
use quadricflow_core::{bilinear, rng, Activation, Params};
use serde::Serialize;

use crate::errors::{CliError, Result};
use crate::experiment;
use crate::trajectory;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Check {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn collect(suite: &str, checks: Vec<Check>) -> SuiteReport {
        SuiteReport {
            suite: suite.to_string(),
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub failed_checks: Vec<String>,
    pub suites: Vec<SuiteReport>,
}

/// Charges along a full-batch descent run must stay put, pinned out-weight
/// signs must never flip, and the residual charge motion must shrink
/// monotonically with the step size.
pub fn conservation_suite(seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();

    let (quiet_seed, quiet) = experiment::conserving_toy_run(seed)?;
    let drift = trajectory::max_drift(&quiet.obstructed).max(trajectory::max_drift(&quiet.good));
    checks.push(Check::new(
        "toy_drift_below_one_percent",
        drift < 0.01,
        format!(
            "seed {quiet_seed}: max relative charge drift {drift:.3e} \
             across both configurations, 500 steps at h = 0.01"
        ),
    ));

    let mut flip_steps = trajectory::sign_flip_steps(&quiet.obstructed);
    flip_steps.extend(trajectory::sign_flip_steps(&quiet.good));

    // Fixed h * steps: a first-order integrator's charge error scales with
    // h, so halving the step along the same flow span must lower the drift.
    let shown_seed = experiment::representative_toy_seed(seed)?;
    let data = experiment::toy_dataset(shown_seed);
    let good = experiment::standardize(&experiment::toy_init(shown_seed), &[-0.1, 0.1], &[1, 1])?;
    let mut drifts = Vec::new();
    for (h, steps) in [(0.04, 125), (0.02, 250), (0.01, 500), (0.005, 1000)] {
        let mut cfg = gradflow::TrainConfig::new(LossKind::Mse, h, steps);
        cfg.record_stride = 1;
        let records = gradflow::train(&good, &data, &cfg)?;
        flip_steps.extend(trajectory::sign_flip_steps(&records));
        drifts.push(trajectory::max_drift(&records));
    }
    checks.push(Check::new(
        "sign_vector_constant_on_every_run",
        flip_steps.is_empty(),
        format!("flips at steps {flip_steps:?} over six runs"),
    ));
    checks.push(Check::new(
        "drift_shrinks_monotonically_with_step_size",
        drifts.windows(2).all(|w| w[1] < w[0]),
        format!("seed {shown_seed}: drift {drifts:?} for h = 0.04, 0.02, 0.01, 0.005"),
    ));
    Ok(SuiteReport::collect("conservation", checks))
}

/// Exhaustive cross-check of the component-count formulas on every small
/// signature: polynomial beta_0 against the closed form, total cell count,
/// and the effective count in the scalar-output regime.
pub fn topology_suite() -> Result<SuiteReport> {
    let mut beta_mismatches = Vec::new();
    let mut sum_mismatches = Vec::new();
    let mut effective_mismatches = Vec::new();
    let mut cases = 0usize;
    for d in 1..=3usize {
        for e in 1..=3usize {
            for l_plus in 0..=4usize {
                for l_minus in 0..=4usize {
                    if l_plus + l_minus == 0 {
                        continue;
                    }
                    cases += 1;
                    let sig = InvariantSignature::from_counts(d, e, false, l_plus, l_minus, 0)
                        .map_err(CliError::math)?;
                    let poly = poincare_polynomial(&sig);
                    if betti(&sig, 0) != quadricflow_core::topology::beta0_closed_form(&sig) {
                        beta_mismatches.push(format!("d={d} e={e} l+={l_plus} l-={l_minus}"));
                    }
                    let total: BigUint = poly.iter().cloned().sum();
                    if total != BigUint::from(1u32) << (l_plus + l_minus) {
                        sum_mismatches.push(format!("d={d} e={e} l+={l_plus} l-={l_minus}"));
                    }
                    if e == 1 && d > 1 {
                        match effective_component_count(&sig) {
                            Ok(n) if n == 1 + l_minus => {}
                            other => effective_mismatches
                                .push(format!("d={d} l+={l_plus} l-={l_minus}: {other:?}")),
                        }
                    }
                }
            }
        }
    }
    let checks = vec![
        Check::new(
            "polynomial_beta0_equals_closed_form",
            beta_mismatches.is_empty(),
            format!("{cases} signatures checked; mismatches: {beta_mismatches:?}"),
        ),
        Check::new(
            "coefficients_sum_to_cell_count",
            sum_mismatches.is_empty(),
            format!("{cases} signatures checked; mismatches: {sum_mismatches:?}"),
        ),
        Check::new(
            "effective_count_is_one_plus_l_minus",
            effective_mismatches.is_empty(),
            format!("scalar-output regime; mismatches: {effective_mismatches:?}"),
        ),
    ];
    Ok(SuiteReport::collect("topology", checks))
}

/// A random net and batch whose pre-activations sit safely away from the
/// kink, so central differences are valid.
fn smooth_instance(seed: u64, case: u64) -> (Params, Dataset) {
    // Each rejection round consumes a fresh stream pair.
    for round in 0..64 {
        let base = case * 64 + round;
        let mut gen = rng::stream_rng(seed, 10 + 2 * base);
        let (d, l, e) = (3, 4, 2);
        let mut w1 = Array2::zeros((l, d));
        for v in w1.iter_mut() {
            *v = rng::standard_normal(&mut gen);
        }
        let mut w2 = Array2::zeros((e, l));
        for v in w2.iter_mut() {
            *v = rng::standard_normal(&mut gen);
        }
        let b1 = Array1::from_iter((0..l).map(|_| rng::standard_normal(&mut gen)));
        let b2 = Array1::from_iter((0..e).map(|_| rng::standard_normal(&mut gen)));
        let theta = Params::new(w1, w2, Some(b1), Some(b2), Activation::Relu)
            .expect("finite by construction");

        let mut data_gen = rng::stream_rng(seed, 10 + 2 * base + 1);
        let n = 6;
        let mut x = Array2::zeros((n, d));
        for v in x.iter_mut() {
            *v = rng::standard_normal(&mut data_gen);
        }
        let mut y = Array2::zeros((n, e));
        for v in y.iter_mut() {
            *v = rng::standard_normal(&mut data_gen);
        }
        let data = Dataset::new(x, y).expect("finite by construction");

        let margin = x_margin(&theta, &data);
        if margin > 1e-3 {
            return (theta, data);
        }
    }
    unreachable!("a smooth configuration appears within a few draws");
}

/// Smallest |pre-activation| over the batch.
fn x_margin(theta: &Params, data: &Dataset) -> f64 {
    let mut z = data.inputs().dot(&theta.w1().t());
    if let Some(b1) = theta.b1() {
        z += b1;
    }
    z.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

pub fn gradcheck_suite(seed: u64) -> Result<SuiteReport> {
    let mut worst_rel = 0.0f64;
    let mut worst_balance = 0.0f64;
    let points = 50;
    for case in 0..points {
        let (theta, data) = smooth_instance(seed, case);
        let g = gradflow::grad(&theta, &data, LossKind::Mse).map_err(CliError::math)?;
        let fd = gradflow::finite_diff_grad(&theta, &data, LossKind::Mse, 1e-6)
            .map_err(CliError::math)?;
        let pairs = g
            .w1()
            .iter()
            .zip(fd.w1().iter())
            .chain(g.w2().iter().zip(fd.w2().iter()))
            .chain(g.b1().unwrap().iter().zip(fd.b1().unwrap().iter()))
            .chain(g.b2().unwrap().iter().zip(fd.b2().unwrap().iter()));
        for (a, b) in pairs {
            worst_rel = worst_rel.max((a - b).abs() / (1.0 + a.abs()));
        }
        let norm2: f64 = theta
            .w1()
            .iter()
            .chain(theta.w2().iter())
            .map(|v| v * v)
            .sum::<f64>()
            + theta.b1().unwrap().iter().map(|v| v * v).sum::<f64>()
            + theta.b2().unwrap().iter().map(|v| v * v).sum::<f64>();
        for k in 0..theta.l() {
            let r = bilinear(&theta, &g, k).map_err(CliError::math)?.abs();
            worst_balance = worst_balance.max(r / (1.0 + norm2));
        }
    }
    let checks = vec![
        Check::new(
            "finite_difference_agreement",
            worst_rel < 1e-5,
            format!("worst relative deviation {worst_rel:.3e} over {points} smooth points"),
        ),
        Check::new(
            "per_neuron_balance",
            worst_balance < 1e-10,
            format!("worst normalized residual {worst_balance:.3e}"),
        ),
    ];
    Ok(SuiteReport::collect("gradcheck", checks))
}

/// Random scalar-output queries whose closed-form trap probability sits in
/// a statistically testable band.
fn healthy_queries(seed: u64, count: usize) -> Vec<ObstructionQuery> {
    let mut gen = rng::stream_rng(seed, 9);
    use rand::Rng;
    let mut queries = Vec::new();
    while queries.len() < count {
        let d = gen.random_range(1..=6usize);
        let l = gen.random_range(1..=8usize);
        let log_ratio = 3.0 * (2.0 * gen.random::<f64>() - 1.0);
        let q = ObstructionQuery {
            d,
            l,
            scheme: InitScheme::Normal {
                sigma1_sq: log_ratio.exp(),
                sigma2_sq: 1.0,
            },
        };
        let p = obstruction_probability(&q).expect("normal scheme has a closed form");
        if (0.05..0.95).contains(&p) {
            queries.push(q);
        }
    }
    queries
}

pub fn prob_suite(seed: u64, trials: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let median = f_cdf(1, 1, 1.0).map_err(CliError::math)?;
    checks.push(Check::new(
        "f_cdf_median_one_one",
        (median - 0.5).abs() < 1e-10,
        format!("F_{{1,1}}(1) = {median}"),
    ));

    let mut worst_sigma = 0.0f64;
    let mut details = Vec::new();
    for (i, q) in healthy_queries(seed, 10).iter().enumerate() {
        let exact = obstruction_probability(q).map_err(CliError::math)?;
        let mc = monte_carlo_obstruction(q, trials, seed.wrapping_add(i as u64))
            .map_err(CliError::math)?;
        let sigmas = if mc.std_error > 0.0 {
            (mc.estimate - exact).abs() / mc.std_error
        } else {
            f64::INFINITY
        };
        worst_sigma = worst_sigma.max(sigmas);
        details.push(format!(
            "d={} l={} exact={exact:.4} mc={:.4}",
            q.d, q.l, mc.estimate
        ));
    }
    checks.push(Check::new(
        "monte_carlo_within_three_sigma",
        worst_sigma <= 3.0,
        format!(
            "worst deviation {worst_sigma:.2} standard errors over {} trials each; {}",
            trials,
            details.join("; ")
        ),
    ));

    let mut violations = Vec::new();
    for d in 1..=3usize {
        for l in 4..=16usize {
            let kaiming = obstruction_probability(&ObstructionQuery {
                d,
                l,
                scheme: InitScheme::Kaiming,
            })
            .map_err(CliError::math)?;
            let xavier = obstruction_probability(&ObstructionQuery {
                d,
                l,
                scheme: InitScheme::Xavier,
            })
            .map_err(CliError::math)?;
            if xavier < kaiming - 1e-15 {
                violations.push(format!("d={d} l={l}"));
            }
        }
    }
    checks.push(Check::new(
        "xavier_at_least_kaiming_small_d",
        violations.is_empty(),
        format!("d in 1..=3, l in 4..=16; violations: {violations:?}"),
    ));
    Ok(SuiteReport::collect("prob", checks))
}

pub fn run_suites(which: &str, seed: u64, trials: u64) -> Result<VerifyReport> {
    let suites: Vec<SuiteReport> = match which {
        "all" => vec![
            conservation_suite(seed)?,
            topology_suite()?,
            gradcheck_suite(seed)?,
            prob_suite(seed, trials)?,
        ],
        "conservation" => vec![conservation_suite(seed)?],
        "topology" => vec![topology_suite()?],
        "gradcheck" => vec![gradcheck_suite(seed)?],
        "prob" => vec![prob_suite(seed, trials)?],
        other => {
            return Err(CliError::Input(format!(
                "unknown suite {other:?}; expected all|conservation|topology|gradcheck|prob"
            )))
        }
    };
    let failed_checks: Vec<String> = suites
        .iter()
        .flat_map(|s| {
            s.checks
                .iter()
                .filter(|c| !c.passed)
                .map(move |c| format!("{}/{}", s.suite, c.name))
        })
        .collect();
    Ok(VerifyReport {
        passed: failed_checks.is_empty(),
        failed_checks,
        suites,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology_suite_passes() {
        let report = topology_suite().unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn gradcheck_suite_passes() {
        let report = gradcheck_suite(0).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn prob_suite_passes_with_modest_trials() {
        let report = prob_suite(0, 20_000).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn unknown_suite_is_an_input_error() {
        assert!(run_suites("nope", 0, 10).is_err());
    }
}
