//! Two-layer network parameters, the per-neuron bilinear form, and charges.
//!
//! The network is f(x) = W2 sigma(W1 x + b1) + b2 with an elementwise
//! positively homogeneous activation. Row k of `w1` holds neuron k's
//! in-weights and column k of `w2` its out-weights, so each hidden neuron
//! owns one row/column pair. The signed quantity
//!
//!   <theta, eta>_k = sum_i W1_ki V1_ki (+ b1_k p1_k) - sum_j W2_jk V2_jk
//!
//! is the bilinear form of an indefinite inner product attached to neuron k;
//! its quadratic form c_k = <theta, theta>_k is the neuron's charge.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Derivative value used at the activation kink z = 0.
///
/// Any element of the subdifferential works for the balance identity because
/// sigma(0) = 0; the value is fixed once so runs are bit-reproducible. The
/// `subgrad-one` feature flips it to 1 to exercise that independence.
pub const SUBGRAD_AT_ZERO: f64 = if cfg!(feature = "subgrad-one") {
    1.0
} else {
    0.0
};

/// Elementwise activation between the layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// max(z, 0)
    Relu,
    /// max(z, gamma z) with gamma in [0, 1]; gamma = 1 is the identity map.
    LeakyRelu { gamma: f64 },
}

impl Activation {
    pub fn leaky(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidGamma(gamma));
        }
        Ok(Activation::LeakyRelu { gamma })
    }

    /// sigma(z). Positively homogeneous: sigma(a z) = a sigma(z) for a >= 0.
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { gamma } => {
                if z > 0.0 {
                    z
                } else {
                    gamma * z
                }
            }
        }
    }

    /// Subgradient selection sigma'(z); at z = 0 returns [`SUBGRAD_AT_ZERO`].
    pub fn subgradient(self, z: f64) -> f64 {
        if z == 0.0 {
            return SUBGRAD_AT_ZERO;
        }
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { gamma } => {
                if z > 0.0 {
                    1.0
                } else {
                    gamma
                }
            }
        }
    }
}

/// Parameters of a two-layer network, or equally a tangent direction at one:
/// the parameter space is a plain vector space, so gradients reuse this type.
///
/// Invariants: `w1` is l x d, `w2` is e x l with l, d, e >= 1; biases are
/// either both present (lengths l and e) or both absent; every entry finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    w1: Array2<f64>,
    w2: Array2<f64>,
    b1: Option<Array1<f64>>,
    b2: Option<Array1<f64>>,
    activation: Activation,
}

fn all_finite2(a: &Array2<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

fn all_finite1(a: &Array1<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

impl Params {
    pub fn new(
        w1: Array2<f64>,
        w2: Array2<f64>,
        b1: Option<Array1<f64>>,
        b2: Option<Array1<f64>>,
        activation: Activation,
    ) -> Result<Self> {
        let (l, d) = w1.dim();
        let (e, l2) = w2.dim();
        if l == 0 || d == 0 || e == 0 {
            return Err(Error::ShapeMismatch {
                context: "params",
                expected: "positive dimensions".into(),
                got: format!("l={l}, d={d}, e={e}"),
            });
        }
        if l2 != l {
            return Err(Error::ShapeMismatch {
                context: "params",
                expected: format!("w2 with {l} columns"),
                got: format!("{l2} columns"),
            });
        }
        match (&b1, &b2) {
            (None, None) => {}
            (Some(b1), Some(b2)) => {
                if b1.len() != l || b2.len() != e {
                    return Err(Error::ShapeMismatch {
                        context: "params",
                        expected: format!("b1 of length {l}, b2 of length {e}"),
                        got: format!("{} and {}", b1.len(), b2.len()),
                    });
                }
            }
            _ => return Err(Error::BiasModeMismatch),
        }
        if let Activation::LeakyRelu { gamma } = activation {
            Activation::leaky(gamma)?;
        }
        if !all_finite2(&w1)
            || !all_finite2(&w2)
            || !b1.as_ref().is_none_or(all_finite1)
            || !b2.as_ref().is_none_or(all_finite1)
        {
            return Err(Error::NonFinite("params"));
        }
        Ok(Params {
            w1,
            w2,
            b1,
            b2,
            activation,
        })
    }

    /// Bias-free constructor; the common case throughout.
    pub fn linearless(w1: Array2<f64>, w2: Array2<f64>, activation: Activation) -> Result<Self> {
        Params::new(w1, w2, None, None, activation)
    }

    pub(crate) fn from_parts_unchecked(
        w1: Array2<f64>,
        w2: Array2<f64>,
        b1: Option<Array1<f64>>,
        b2: Option<Array1<f64>>,
        activation: Activation,
    ) -> Self {
        Params {
            w1,
            w2,
            b1,
            b2,
            activation,
        }
    }

    pub fn d(&self) -> usize {
        self.w1.ncols()
    }

    pub fn e(&self) -> usize {
        self.w2.nrows()
    }

    pub fn l(&self) -> usize {
        self.w1.nrows()
    }

    pub fn w1(&self) -> &Array2<f64> {
        &self.w1
    }

    pub fn w2(&self) -> &Array2<f64> {
        &self.w2
    }

    pub fn b1(&self) -> Option<&Array1<f64>> {
        self.b1.as_ref()
    }

    pub fn b2(&self) -> Option<&Array1<f64>> {
        self.b2.as_ref()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn with_bias(&self) -> bool {
        self.b1.is_some()
    }

    fn check_neuron(&self, k: usize) -> Result<()> {
        if k >= self.l() {
            return Err(Error::NeuronIndex { k, l: self.l() });
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView1<f64>) -> Result<()> {
        if x.len() != self.d() {
            return Err(Error::ShapeMismatch {
                context: "input",
                expected: format!("length {}", self.d()),
                got: format!("length {}", x.len()),
            });
        }
        Ok(())
    }

    /// f(x) = W2 sigma(W1 x + b1) + b2.
    ///
    /// Accumulates neuron contributions in index order, so the result is
    /// bit-identical to summing [`Params::neuron_forward`] over k.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_input(&x)?;
        let mut out = match &self.b2 {
            Some(b2) => b2.clone(),
            None => Array1::zeros(self.e()),
        };
        for k in 0..self.l() {
            let a = self.hidden_unit(k, &x);
            for j in 0..self.e() {
                out[j] += self.w2[(j, k)] * a;
            }
        }
        Ok(out)
    }

    fn hidden_unit(&self, k: usize, x: &ArrayView1<f64>) -> f64 {
        let mut z: f64 = self
            .w1
            .row(k)
            .iter()
            .zip(x.iter())
            .map(|(w, xi)| w * xi)
            .sum();
        if let Some(b1) = &self.b1 {
            z += b1[k];
        }
        self.activation.apply(z)
    }

    /// Contribution of hidden neuron k alone: W2[:, k] sigma(W1[k, :] . x).
    /// No-bias networks only; biases are not attributable to single neurons.
    pub fn neuron_forward(&self, k: usize, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if self.with_bias() {
            return Err(Error::BiasUnsupported);
        }
        self.check_neuron(k)?;
        self.check_input(&x)?;
        let a = self.hidden_unit(k, &x);
        Ok(self.w2.column(k).mapv(|w| w * a))
    }

    /// c_k = <theta, theta>_k, the charge of neuron k. Conserved by the
    /// training dynamics whenever the balance identity holds.
    pub fn charges(&self) -> Array1<f64> {
        Array1::from_iter((0..self.l()).map(|k| bilinear_unchecked(self, self, k)))
    }
}

fn bilinear_unchecked(theta: &Params, eta: &Params, k: usize) -> f64 {
    let mut v: f64 = theta
        .w1
        .row(k)
        .iter()
        .zip(eta.w1.row(k).iter())
        .map(|(a, b)| a * b)
        .sum();
    if let (Some(b1a), Some(b1b)) = (&theta.b1, &eta.b1) {
        v += b1a[k] * b1b[k];
    }
    let out: f64 = theta
        .w2
        .column(k)
        .iter()
        .zip(eta.w2.column(k).iter())
        .map(|(a, b)| a * b)
        .sum();
    v - out
}

/// The indefinite inner product of neuron k between two points (or a point
/// and a tangent vector) of the same parameter space.
pub fn bilinear(theta: &Params, eta: &Params, k: usize) -> Result<f64> {
    if theta.d() != eta.d() || theta.e() != eta.e() || theta.l() != eta.l() {
        return Err(Error::ShapeMismatch {
            context: "bilinear",
            expected: format!("l={}, d={}, e={}", theta.l(), theta.d(), theta.e()),
            got: format!("l={}, d={}, e={}", eta.l(), eta.d(), eta.e()),
        });
    }
    if theta.with_bias() != eta.with_bias() {
        return Err(Error::BiasModeMismatch);
    }
    theta.check_neuron(k)?;
    Ok(bilinear_unchecked(theta, eta, k))
}
