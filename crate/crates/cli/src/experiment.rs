//! Reproducible experiment drivers: the two-neuron planar regression that
//! shows an obstructed start plateauing far above a good one, and the grid
//! sweep that measures test loss as a function of how many neurons start
//! with positive charge.

use ndarray::{Array1, Array2};
use quadricflow_core::gradflow::{loss, train, Dataset, LossKind, TrainConfig, TrajectoryRecord};
use quadricflow_core::stats::{sample_init, InitScheme};
use quadricflow_core::symmetry::rescale_to_charges;
use quadricflow_core::{rng, Params};

use crate::errors::{CliError, Result};
use crate::trajectory;

pub const TOY_SAMPLES: usize = 8000;
pub const TOY_STEPS: usize = 500;
pub const TOY_LR: f64 = 0.01;
pub const TABULAR_STEPS: usize = 2000;
pub const TABULAR_LR: f64 = 0.01;

/// Loss of the identically-zero function on the toy task: E[(x1+x2)^2] on
/// the unit square. A net whose hidden neurons all die lands here, and an
/// obstructed run can do no better, since its output stays nonnegative
/// while the target is nonpositive.
pub const TOY_DEAD_LEVEL: f64 = 7.0 / 6.0;

/// Planar ramp y = -(x1 + x2) sampled uniformly on the unit square. One
/// hidden neuron with in-weights (1, 1) and out-weight -1 fits it exactly,
/// so a two-neuron net has no approximation excuse: any large final loss is
/// the optimizer's confinement, not capacity.
pub fn toy_dataset(seed: u64) -> Dataset {
    let mut gen = rng::stream_rng(seed, 2);
    let mut x = Array2::zeros((TOY_SAMPLES, 2));
    let mut y = Array2::zeros((TOY_SAMPLES, 1));
    for i in 0..TOY_SAMPLES {
        let (u, v) = (gen_unit(&mut gen), gen_unit(&mut gen));
        x[(i, 0)] = u;
        x[(i, 1)] = v;
        y[(i, 0)] = -(u + v);
    }
    Dataset::new(x, y).expect("toy data is finite by construction")
}

fn gen_unit<R: rand::Rng>(gen: &mut R) -> f64 {
    gen.random::<f64>()
}

/// The two-neuron planar net drawn the way the toy task prescribes: every
/// weight independently uniform on [-sqrt(2), sqrt(2)].
///
/// Draws where a hidden neuron points entirely out of the data square
/// (both in-weights nonpositive, so its output is zero on all of [0,1]^2)
/// are rejected and redrawn from a deterministic seed chain. Such a unit
/// receives zero gradient on this task, which turns the comparison into
/// dead-unit luck instead of a statement about which component training
/// starts in.
pub fn toy_init(seed: u64) -> Params {
    let mut s = seed;
    for _ in 0..128 {
        let theta = sample_init(
            &InitScheme::UniformSymmetric {
                half_width: std::f64::consts::SQRT_2,
            },
            2,
            1,
            2,
            s,
        )
        .expect("fixed toy dimensions are valid");
        let alive = theta
            .w1()
            .rows()
            .into_iter()
            .all(|row| row.iter().any(|&w| w > 0.0));
        if alive {
            return theta;
        }
        s = splitmix(s);
    }
    unreachable!("each redraw keeps both neurons alive with probability 9/16")
}

/// Move theta onto the invariant set with the given charges, then force the
/// out-weight signs by negating individual w2 entries. The negation is an
/// initialization choice, not a symmetry move: it deliberately selects the
/// component to start in while perturbing nothing else.
pub fn standardize(theta: &Params, charges: &[f64], signs: &[i8]) -> Result<Params> {
    if charges.len() != theta.l() || signs.len() != theta.l() {
        return Err(CliError::Input(format!(
            "need {} charges and signs, got {} and {}",
            theta.l(),
            charges.len(),
            signs.len()
        )));
    }
    if theta.e() != 1 {
        return Err(CliError::Input("sign control needs a scalar output".into()));
    }
    if let Some(bad) = signs.iter().find(|s| s.abs() != 1) {
        return Err(CliError::Input(format!("signs must be +-1, got {bad}")));
    }
    let targets = Array1::from_vec(charges.to_vec());
    let (moved, _) = rescale_to_charges(theta, targets.view()).map_err(CliError::math)?;
    let mut w2 = moved.w2().clone();
    for k in 0..moved.l() {
        let want_positive = signs[k] > 0;
        if (w2[(0, k)] > 0.0) != want_positive {
            w2[(0, k)] = -w2[(0, k)];
        }
    }
    Params::new(
        moved.w1().clone(),
        w2,
        moved.b1().cloned(),
        moved.b2().cloned(),
        moved.activation(),
    )
    .map_err(CliError::math)
}

#[derive(Debug, Clone)]
pub struct ToyOutcome {
    pub obstructed: Vec<TrajectoryRecord>,
    pub good: Vec<TrajectoryRecord>,
}

impl ToyOutcome {
    pub fn obstructed_final(&self) -> f64 {
        self.obstructed.last().expect("nonempty").loss
    }

    pub fn good_final(&self) -> f64 {
        self.good.last().expect("nonempty").loss
    }
}

/// One full toy comparison from a single random draw: the same init is
/// standardized to charges (-0.1, -0.1) with both out-weights positive (an
/// obstructed component) and to (-0.1, +0.1) (neuron 2 free to change
/// sign), then both are trained identically.
pub fn run_toy(seed: u64, steps: usize, lr: f64, stride: usize) -> Result<ToyOutcome> {
    let data = toy_dataset(seed);
    let theta = toy_init(seed);
    let obstructed = standardize(&theta, &[-0.1, -0.1], &[1, 1])?;
    let good = standardize(&theta, &[-0.1, 0.1], &[1, 1])?;
    let mut cfg = TrainConfig::new(LossKind::Mse, lr, steps);
    cfg.record_stride = stride.max(1);
    cfg.seed = seed;
    let obstructed = train(&obstructed, &data, &cfg)?;
    let good = train(&good, &data, &cfg)?;
    Ok(ToyOutcome { obstructed, good })
}

/// First seed at or after `start` whose good configuration actually reaches
/// the optimum under the full protocol (500 steps at h = 0.01). Roughly a
/// third of draws qualify; the rest lose the race between the free neuron's
/// out-weight crossing zero and its in-weights rotating out of the data
/// cone, and stall at the dead level with both components. A comparison
/// that wants to display the obstruction uses this seed so the contrast is
/// about the starting component, not about draw luck. Candidates are always
/// judged under the full protocol, so the choice does not depend on the
/// step count a caller later trains with.
pub fn representative_toy_seed(start: u64) -> Result<u64> {
    for seed in start..start.saturating_add(64) {
        let data = toy_dataset(seed);
        let good = standardize(&toy_init(seed), &[-0.1, 0.1], &[1, 1])?;
        let mut cfg = TrainConfig::new(LossKind::Mse, TOY_LR, TOY_STEPS);
        cfg.record_stride = TOY_STEPS;
        let records = train(&good, &data, &cfg)?;
        if records.last().expect("nonempty").loss < 0.01 {
            return Ok(seed);
        }
    }
    Err(CliError::Math(format!(
        "no toy draw within 64 seeds of {start} reaches the optimum; about one in three should"
    )))
}

/// First seed at or after `start` whose comparison keeps every charge within
/// one percent of its initial value across both configurations for the full
/// protocol, returned together with that outcome. Sign-crossing draws cannot
/// qualify: the crossing happens while the residual is still order one,
/// which moves the free neuron's charge by a few percent at h = 0.01. What
/// can qualify are draws whose initial output is small but not zero, so
/// candidates are prefiltered by initial loss (one forward pass) before
/// paying for a full run.
pub fn conserving_toy_run(start: u64) -> Result<(u64, ToyOutcome)> {
    let live_band = (TOY_DEAD_LEVEL + 0.05)..=(TOY_DEAD_LEVEL + 0.25);
    for seed in start..start.saturating_add(256) {
        let data = toy_dataset(seed);
        let good = standardize(&toy_init(seed), &[-0.1, 0.1], &[1, 1])?;
        let initial = loss(&good, &data, LossKind::Mse).map_err(CliError::math)?;
        if !live_band.contains(&initial) {
            continue;
        }
        let outcome = run_toy(seed, TOY_STEPS, TOY_LR, 1)?;
        if trajectory::max_drift(&outcome.good) < 0.01
            && trajectory::max_drift(&outcome.obstructed) < 0.01
        {
            return Ok((seed, outcome));
        }
    }
    Err(CliError::Math(format!(
        "no conserving toy draw within 256 seeds of {start}"
    )))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-run seed, independent of evaluation order.
pub fn derive_seed(base: u64, l: usize, l_plus: usize, rep: u64) -> u64 {
    let mut z = splitmix(base);
    z = splitmix(z.wrapping_add(l as u64));
    z = splitmix(z.wrapping_add(l_plus as u64));
    splitmix(z.wrapping_add(rep))
}

/// Seeded 80/20 row split.
pub fn train_test_split(data: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.n();
    if n < 5 {
        return Err(CliError::Input(format!(
            "{n} samples cannot be split 80/20"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut gen = rng::stream_rng(seed, 3);
    use rand::Rng;
    for i in (1..n).rev() {
        let j = gen.random_range(0..=i);
        indices.swap(i, j);
    }
    let n_train = (n * 4) / 5;
    let train = data.select(&indices[..n_train]).map_err(CliError::input)?;
    let test = data.select(&indices[n_train..]).map_err(CliError::input)?;
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub l: usize,
    pub l_plus: usize,
    pub seeds: u64,
    pub mean_test_loss: f64,
    pub std_test_loss: f64,
}

/// One training run of the sweep: width-l scalar net, the first l_plus
/// neurons rescaled to charge +0.1 and the rest to -0.1, out-weight signs
/// forced to +1 on the negative-charge (pathological) neurons only.
pub fn tabular_run(
    data: &Dataset,
    l: usize,
    l_plus: usize,
    run_seed: u64,
    steps: usize,
    lr: f64,
) -> Result<f64> {
    let theta =
        sample_init(&InitScheme::Kaiming, data.d(), 1, l, run_seed).map_err(CliError::math)?;
    let charges: Vec<f64> = (0..l)
        .map(|k| if k < l_plus { 0.1 } else { -0.1 })
        .collect();
    let targets = Array1::from_vec(charges.clone());
    let (moved, _) = rescale_to_charges(&theta, targets.view()).map_err(CliError::math)?;
    let mut w2 = moved.w2().clone();
    for k in l_plus..l {
        if w2[(0, k)] < 0.0 {
            w2[(0, k)] = -w2[(0, k)];
        }
    }
    let theta = Params::new(moved.w1().clone(), w2, None, None, moved.activation())
        .map_err(CliError::math)?;

    let (train_data, test_data) = train_test_split(data, run_seed)?;
    let mut cfg = TrainConfig::new(LossKind::Bce, lr, steps);
    cfg.record_stride = steps.max(1);
    cfg.snapshot_params = true;
    cfg.seed = run_seed;
    let records = train(&theta, &train_data, &cfg)?;
    let final_params = records
        .last()
        .and_then(|r| r.params.clone())
        .expect("snapshotting was requested");
    quadricflow_core::gradflow::loss(&final_params, &test_data, LossKind::Bce)
        .map_err(CliError::math)
}

/// Mean and sample standard deviation of test loss for every grid cell.
pub fn tabular_grid(
    data: &Dataset,
    l_values: &[usize],
    l_plus_filter: Option<&[usize]>,
    seeds: u64,
    base_seed: u64,
    steps: usize,
    lr: f64,
) -> Result<Vec<GridCell>> {
    if seeds == 0 {
        return Err(CliError::Input("need at least one seed".into()));
    }
    let mut cells = Vec::new();
    for &l in l_values {
        if l == 0 {
            return Err(CliError::Input("width 0 is not a network".into()));
        }
        let l_plus_values: Vec<usize> = match l_plus_filter {
            Some(values) => {
                if let Some(&bad) = values.iter().find(|&&v| v > l) {
                    return Err(CliError::Input(format!("l_plus {bad} exceeds width {l}")));
                }
                values.to_vec()
            }
            None => (0..=l).collect(),
        };
        for l_plus in l_plus_values {
            let losses: Vec<f64> = (0..seeds)
                .map(|rep| {
                    tabular_run(
                        data,
                        l,
                        l_plus,
                        derive_seed(base_seed, l, l_plus, rep),
                        steps,
                        lr,
                    )
                })
                .collect::<Result<_>>()?;
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            let std = if losses.len() > 1 {
                (losses.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (losses.len() - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            cells.push(GridCell {
                l,
                l_plus,
                seeds,
                mean_test_loss: mean,
                std_test_loss: std,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use quadricflow_core::topology::{signature, DEFAULT_ZERO_TOL};

    #[test]
    fn toy_dataset_lives_on_the_unit_square() {
        let data = toy_dataset(0);
        assert_eq!(data.n(), TOY_SAMPLES);
        for i in 0..50 {
            let (u, v) = (data.inputs()[(i, 0)], data.inputs()[(i, 1)]);
            assert!((0.0..1.0).contains(&u) && (0.0..1.0).contains(&v));
            assert_eq!(data.targets()[(i, 0)], -(u + v));
        }
        assert_eq!(toy_dataset(0), data);
        assert_ne!(toy_dataset(1), data);
    }

    #[test]
    fn standardize_hits_charges_and_signs() {
        let theta = toy_init(11);
        let p = standardize(&theta, &[-0.1, 0.1], &[1, 1]).unwrap();
        let c = p.charges();
        assert!((c[0] + 0.1).abs() < 1e-12);
        assert!((c[1] - 0.1).abs() < 1e-12);
        assert!(p.w2()[(0, 0)] > 0.0 && p.w2()[(0, 1)] > 0.0);
        let sig = signature(&p, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!((sig.l_plus(), sig.l_minus()), (1, 1));

        let q = standardize(&theta, &[-0.1, 0.1], &[-1, 1]).unwrap();
        assert!(q.w2()[(0, 0)] < 0.0);
        // Sign flips leave every charge untouched.
        assert_eq!(q.charges(), p.charges());
    }

    #[test]
    fn derived_seeds_are_order_free_and_distinct() {
        let a = derive_seed(0, 6, 3, 0);
        assert_eq!(a, derive_seed(0, 6, 3, 0));
        assert_ne!(a, derive_seed(0, 6, 3, 1));
        assert_ne!(a, derive_seed(0, 6, 4, 0));
        assert_ne!(a, derive_seed(0, 7, 3, 0));
        assert_ne!(a, derive_seed(1, 6, 3, 0));
    }

    #[test]
    fn split_is_seeded_disjoint_and_80_20() {
        let data = crate::datafile::synthetic_classification(100, 3, 1.5, 0).unwrap();
        let (train, test) = train_test_split(&data, 7).unwrap();
        assert_eq!(train.n(), 80);
        assert_eq!(test.n(), 20);
        let (train2, _) = train_test_split(&data, 7).unwrap();
        assert_eq!(train, train2);
        let (train3, _) = train_test_split(&data, 8).unwrap();
        assert_ne!(train, train3);
    }

    #[test]
    fn toy_run_is_deterministic() {
        let a = run_toy(5, 20, 0.01, 5).unwrap();
        let b = run_toy(5, 20, 0.01, 5).unwrap();
        assert_eq!(a.obstructed, b.obstructed);
        assert_eq!(a.good, b.good);
        assert_eq!(a.obstructed.last().unwrap().step, 20);
    }
}
