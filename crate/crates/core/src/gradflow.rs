//! Full-batch gradient descent as a first-order stand-in for the continuous
//! flow, with charge and sign tracking along the trajectory.
//!
//! The analytic gradient satisfies the per-neuron balance identity
//! <theta, grad>_k = 0 exactly (up to rounding) for any loss that reaches the
//! parameters only through the network function; the discrete update
//! therefore moves each charge by O(h^2) per step, and the recorded
//! `max_charge_drift` measures how far the invariant actually wandered.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::net::Params;
use crate::topology::{self, SignVector, DEFAULT_ZERO_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean over samples of the squared Euclidean error (no 1/2 factor).
    Mse,
    /// Binary cross-entropy through a logistic link; scalar output,
    /// targets in {0, 1}.
    Bce,
}

/// Input/target pairs, row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array2<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 || y.ncols() == 0 {
            return Err(Error::Dataset("empty inputs or targets".into()));
        }
        if x.nrows() != y.nrows() {
            return Err(Error::Dataset(format!(
                "{} input rows vs {} target rows",
                x.nrows(),
                y.nrows()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite entry".into()));
        }
        Ok(Dataset { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn e(&self) -> usize {
        self.y.ncols()
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.y
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::Dataset("empty selection".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::Dataset(format!(
                "row {bad} out of range for {} samples",
                self.n()
            )));
        }
        Ok(Dataset {
            x: self.x.select(Axis(0), indices),
            y: self.y.select(Axis(0), indices),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    /// Step size h of theta -> theta - h grad.
    pub learning_rate: f64,
    pub steps: usize,
    /// Record every this many steps; step 0 and the final step always.
    pub record_stride: usize,
    /// Reserved label for the run; full-batch descent draws no randomness.
    pub seed: u64,
    /// Store a parameter snapshot in every record.
    pub snapshot_params: bool,
}

impl TrainConfig {
    pub fn new(loss: LossKind, learning_rate: f64, steps: usize) -> Self {
        TrainConfig {
            loss,
            learning_rate,
            steps,
            record_stride: 1,
            seed: 0,
            snapshot_params: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub loss: f64,
    pub charges: Array1<f64>,
    /// Out-weight signs at the initially negative-charge neurons; populated
    /// when the output is scalar and at least one such neuron exists. None
    /// inside such a run means an out-weight reached exactly zero.
    pub sign: Option<SignVector>,
    /// max_k |c_k - c_k(0)| / max(|c_k(0)|, zero tolerance)
    pub max_charge_drift: f64,
    pub params: Option<Params>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    /// Loss or parameters stopped being finite; `records` holds everything
    /// recorded before that step.
    #[error("training diverged at step {step}")]
    Diverged {
        step: usize,
        records: Vec<TrajectoryRecord>,
    },
    #[error(transparent)]
    Core(#[from] Error),
}

fn check_data(theta: &Params, data: &Dataset) -> Result<()> {
    if theta.d() != data.d() || theta.e() != data.e() {
        return Err(Error::ShapeMismatch {
            context: "dataset",
            expected: format!("d={}, e={}", theta.d(), theta.e()),
            got: format!("d={}, e={}", data.d(), data.e()),
        });
    }
    Ok(())
}

fn check_bce_targets(data: &Dataset) -> Result<()> {
    if data.e() != 1 {
        return Err(Error::LossDomain(format!(
            "binary cross-entropy needs a scalar output, got e = {}",
            data.e()
        )));
    }
    if data.y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::LossDomain(
            "binary cross-entropy targets must be exactly 0 or 1".into(),
        ));
    }
    Ok(())
}

/// Hidden pre-activations, activations, and outputs for the whole batch.
fn batch_forward(theta: &Params, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let mut z = x.dot(&theta.w1().t());
    if let Some(b1) = theta.b1() {
        z += b1;
    }
    let act = theta.activation();
    let a = z.mapv(|v| act.apply(v));
    let mut o = a.dot(&theta.w2().t());
    if let Some(b2) = theta.b2() {
        o += b2;
    }
    (z, a, o)
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let t = v.exp();
        t / (1.0 + t)
    }
}

const BCE_CLAMP: f64 = 1e-12;

fn loss_from_outputs(o: &Array2<f64>, y: &Array2<f64>, kind: LossKind) -> f64 {
    let n = o.nrows() as f64;
    match kind {
        LossKind::Mse => {
            let mut sum = 0.0;
            for (oi, yi) in o.iter().zip(y.iter()) {
                let r = oi - yi;
                sum += r * r;
            }
            sum / n
        }
        LossKind::Bce => {
            // The clamp keeps the reported value finite at saturated
            // outputs; the gradient below uses the exact derivative.
            let mut sum = 0.0;
            for (oi, yi) in o.iter().zip(y.iter()) {
                let p = sigmoid(*oi).clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                sum -= yi * p.ln() + (1.0 - yi) * (1.0 - p).ln();
            }
            sum / n
        }
    }
}

/// Mean loss of theta on the dataset.
pub fn loss(theta: &Params, data: &Dataset, kind: LossKind) -> Result<f64> {
    check_data(theta, data)?;
    if kind == LossKind::Bce {
        check_bce_targets(data)?;
    }
    let (_, _, o) = batch_forward(theta, data.inputs());
    Ok(loss_from_outputs(&o, data.targets(), kind))
}

/// Loss and its analytic gradient in one pass; the gradient is returned as a
/// point of the same parameter space.
pub fn loss_and_grad(theta: &Params, data: &Dataset, kind: LossKind) -> Result<(f64, Params)> {
    check_data(theta, data)?;
    if kind == LossKind::Bce {
        check_bce_targets(data)?;
    }
    let x = data.inputs();
    let y = data.targets();
    let (z, a, o) = batch_forward(theta, x);
    let value = loss_from_outputs(&o, y, kind);

    let n = x.nrows() as f64;
    let g_o = match kind {
        LossKind::Mse => {
            let mut g = &o - y;
            g.mapv_inplace(|v| 2.0 * v / n);
            g
        }
        LossKind::Bce => {
            let mut g = o;
            ndarray::Zip::from(&mut g).and(y).for_each(|gi, &yi| {
                *gi = (sigmoid(*gi) - yi) / n;
            });
            g
        }
    };
    let g_a = g_o.dot(theta.w2());
    let act = theta.activation();
    let g_z = &g_a * &z.mapv(|v| act.subgradient(v));
    let g_w1 = g_z.t().dot(x);
    let g_w2 = g_o.t().dot(&a);
    let g_b1 = theta.b1().map(|_| g_z.sum_axis(Axis(0)));
    let g_b2 = theta.b2().map(|_| g_o.sum_axis(Axis(0)));
    let grad = Params::from_parts_unchecked(g_w1, g_w2, g_b1, g_b2, theta.activation());
    Ok((value, grad))
}

/// Analytic full-batch gradient.
pub fn grad(theta: &Params, data: &Dataset, kind: LossKind) -> Result<Params> {
    loss_and_grad(theta, data, kind).map(|(_, g)| g)
}

/// Central-difference gradient using only the loss function; the analytic
/// gradient's independent check.
pub fn finite_diff_grad(
    theta: &Params,
    data: &Dataset,
    kind: LossKind,
    fd_h: f64,
) -> Result<Params> {
    if !fd_h.is_finite() || fd_h <= 0.0 {
        return Err(Error::InvalidArgument {
            what: "fd_h",
            value: format!("{fd_h}"),
        });
    }
    check_data(theta, data)?;
    let eval = |p: &Params| -> Result<f64> { loss(p, data, kind) };

    let mut g_w1 = theta.w1().clone();
    let mut g_w2 = theta.w2().clone();
    let mut g_b1 = theta.b1().cloned();
    let mut g_b2 = theta.b2().cloned();

    for idx in 0..theta.w1().len() {
        let (r, c) = (idx / theta.d(), idx % theta.d());
        let base = theta.w1()[(r, c)];
        let mut w1 = theta.w1().clone();
        w1[(r, c)] = base + fd_h;
        let plus = eval(&Params::from_parts_unchecked(
            w1.clone(),
            theta.w2().clone(),
            theta.b1().cloned(),
            theta.b2().cloned(),
            theta.activation(),
        ))?;
        w1[(r, c)] = base - fd_h;
        let minus = eval(&Params::from_parts_unchecked(
            w1,
            theta.w2().clone(),
            theta.b1().cloned(),
            theta.b2().cloned(),
            theta.activation(),
        ))?;
        g_w1[(r, c)] = (plus - minus) / (2.0 * fd_h);
    }
    for idx in 0..theta.w2().len() {
        let (r, c) = (idx / theta.l(), idx % theta.l());
        let base = theta.w2()[(r, c)];
        let mut w2 = theta.w2().clone();
        w2[(r, c)] = base + fd_h;
        let plus = eval(&Params::from_parts_unchecked(
            theta.w1().clone(),
            w2.clone(),
            theta.b1().cloned(),
            theta.b2().cloned(),
            theta.activation(),
        ))?;
        w2[(r, c)] = base - fd_h;
        let minus = eval(&Params::from_parts_unchecked(
            theta.w1().clone(),
            w2,
            theta.b1().cloned(),
            theta.b2().cloned(),
            theta.activation(),
        ))?;
        g_w2[(r, c)] = (plus - minus) / (2.0 * fd_h);
    }
    if let Some(b1) = theta.b1() {
        let g = g_b1.as_mut().unwrap();
        for k in 0..b1.len() {
            let mut bp = b1.clone();
            bp[k] = b1[k] + fd_h;
            let plus = eval(&Params::from_parts_unchecked(
                theta.w1().clone(),
                theta.w2().clone(),
                Some(bp.clone()),
                theta.b2().cloned(),
                theta.activation(),
            ))?;
            bp[k] = b1[k] - fd_h;
            let minus = eval(&Params::from_parts_unchecked(
                theta.w1().clone(),
                theta.w2().clone(),
                Some(bp),
                theta.b2().cloned(),
                theta.activation(),
            ))?;
            g[k] = (plus - minus) / (2.0 * fd_h);
        }
    }
    if let Some(b2) = theta.b2() {
        let g = g_b2.as_mut().unwrap();
        for j in 0..b2.len() {
            let mut bp = b2.clone();
            bp[j] = b2[j] + fd_h;
            let plus = eval(&Params::from_parts_unchecked(
                theta.w1().clone(),
                theta.w2().clone(),
                theta.b1().cloned(),
                Some(bp.clone()),
                theta.activation(),
            ))?;
            bp[j] = b2[j] - fd_h;
            let minus = eval(&Params::from_parts_unchecked(
                theta.w1().clone(),
                theta.w2().clone(),
                theta.b1().cloned(),
                Some(bp),
                theta.activation(),
            ))?;
            g[j] = (plus - minus) / (2.0 * fd_h);
        }
    }
    Ok(Params::from_parts_unchecked(
        g_w1,
        g_w2,
        g_b1,
        g_b2,
        theta.activation(),
    ))
}

fn params_all_finite(p: &Params) -> bool {
    p.w1().iter().all(|v| v.is_finite())
        && p.w2().iter().all(|v| v.is_finite())
        && p.b1().is_none_or(|b| b.iter().all(|v| v.is_finite()))
        && p.b2().is_none_or(|b| b.iter().all(|v| v.is_finite()))
}

/// Run theta_{t+1} = theta_t - h grad for `cfg.steps` steps, recording step
/// 0, every `record_stride`-th step, and the final step. Divergence
/// (non-finite loss or parameters) aborts with the records gathered so far.
pub fn train(
    theta0: &Params,
    data: &Dataset,
    cfg: &TrainConfig,
) -> std::result::Result<Vec<TrajectoryRecord>, TrainError> {
    if !cfg.learning_rate.is_finite() || cfg.learning_rate <= 0.0 {
        return Err(Error::InvalidArgument {
            what: "learning_rate",
            value: format!("{}", cfg.learning_rate),
        }
        .into());
    }
    if cfg.record_stride == 0 {
        return Err(Error::InvalidArgument {
            what: "record_stride",
            value: "0".into(),
        }
        .into());
    }
    check_data(theta0, data)?;
    if cfg.loss == LossKind::Bce {
        check_bce_targets(data)?;
    }

    let c0 = theta0.charges();
    let sig0 = topology::signature(theta0, DEFAULT_ZERO_TOL)?;
    let track_signs = theta0.e() == 1 && sig0.l_minus() >= 1;
    let neg0: Vec<usize> = sig0.neg_indices().to_vec();

    let make_record = |theta: &Params, step: usize, value: f64| -> TrajectoryRecord {
        let charges = theta.charges();
        let drift = charges
            .iter()
            .zip(c0.iter())
            .map(|(&c, &c_init)| (c - c_init).abs() / c_init.abs().max(DEFAULT_ZERO_TOL))
            .fold(0.0, f64::max);
        let sign = if track_signs {
            topology::signs_at(theta, &neg0, 0.0).ok()
        } else {
            None
        };
        TrajectoryRecord {
            step,
            loss: value,
            charges,
            sign,
            max_charge_drift: drift,
            params: cfg.snapshot_params.then(|| theta.clone()),
        }
    };

    let mut records = Vec::new();
    let mut theta = theta0.clone();
    for t in 0..=cfg.steps {
        let last = t == cfg.steps;
        let (value, g) = if last {
            (loss(&theta, data, cfg.loss)?, None)
        } else {
            let (v, g) = loss_and_grad(&theta, data, cfg.loss)?;
            (v, Some(g))
        };
        if !value.is_finite() || !params_all_finite(&theta) {
            return Err(TrainError::Diverged { step: t, records });
        }
        if t % cfg.record_stride == 0 || last {
            records.push(make_record(&theta, t, value));
        }
        if let Some(g) = g {
            let h = cfg.learning_rate;
            let w1 = theta.w1() - &g.w1().mapv(|v| v * h);
            let w2 = theta.w2() - &g.w2().mapv(|v| v * h);
            let b1 = theta.b1().map(|b| b - &g.b1().unwrap().mapv(|v| v * h));
            let b2 = theta.b2().map(|b| b - &g.b2().unwrap().mapv(|v| v * h));
            theta = Params::from_parts_unchecked(w1, w2, b1, b2, theta.activation());
        }
    }
    Ok(records)
}
