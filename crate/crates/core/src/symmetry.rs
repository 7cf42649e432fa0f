//! Function-preserving reparameterizations and movement along a level set.
//!
//! Positive per-neuron rescalings (diag(a) W1, W2 diag(a)^-1) and hidden
//! neuron permutations both leave the computed function unchanged; the
//! rescalings are exactly the moves available inside one level set without
//! changing charges times anything else. `rescale_to_charges` solves for the
//! unique rescaling onto a prescribed charge vector, and `map_to_sign`
//! composes a permutation with such a rescaling to land in a prescribed
//! connected component without changing the function.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::net::Params;
use crate::rng;
use crate::topology::{sign_vector, signature, SignVector, DEFAULT_ZERO_TOL};

/// Positive per-neuron scale factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Rescaling(Array1<f64>);

impl Rescaling {
    pub fn new(alpha: Array1<f64>) -> Result<Self> {
        for (k, &a) in alpha.iter().enumerate() {
            if !a.is_finite() || a <= 0.0 {
                return Err(Error::NonPositiveRescale { k, value: a });
            }
        }
        Ok(Rescaling(alpha))
    }

    pub fn identity(l: usize) -> Self {
        Rescaling(Array1::ones(l))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn inverse(&self) -> Rescaling {
        Rescaling(self.0.mapv(|a| 1.0 / a))
    }
}

/// Relabeling of hidden neurons. Neuron i of the result is neuron
/// `image[i]` of the argument, so charges move by the same lookup:
/// charges(permute(theta, pi))[i] = charges(theta)[pi[i]].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    image: Vec<usize>,
}

impl Permutation {
    pub fn identity(l: usize) -> Self {
        Permutation {
            image: (0..l).collect(),
        }
    }

    pub fn from_image(image: Vec<usize>) -> Result<Self> {
        let l = image.len();
        let mut seen = vec![false; l];
        for &j in &image {
            if j >= l {
                return Err(Error::InvalidPermutation(format!(
                    "index {j} out of range for length {l}"
                )));
            }
            if seen[j] {
                return Err(Error::InvalidPermutation(format!("index {j} repeats")));
            }
            seen[j] = true;
        }
        Ok(Permutation { image })
    }

    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    pub fn apply(&self, i: usize) -> usize {
        self.image[i]
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.image.len()];
        for (i, &j) in self.image.iter().enumerate() {
            inv[j] = i;
        }
        Permutation { image: inv }
    }

    /// The single permutation equal to applying `self` first, `after` next:
    /// permute(permute(theta, self), after) == permute(theta, self.then(after)).
    pub fn then(&self, after: &Permutation) -> Result<Permutation> {
        if self.len() != after.len() {
            return Err(Error::InvalidPermutation(format!(
                "lengths differ: {} vs {}",
                self.len(),
                after.len()
            )));
        }
        Ok(Permutation {
            image: after.image.iter().map(|&i| self.image[i]).collect(),
        })
    }
}

fn check_len(l: usize, got: usize, context: &'static str) -> Result<()> {
    if l != got {
        return Err(Error::ShapeMismatch {
            context,
            expected: format!("length {l}"),
            got: format!("length {got}"),
        });
    }
    Ok(())
}

/// (diag(a) W1, W2 diag(a)^-1), with the hidden bias scaled like the rows it
/// belongs to. Leaves the function unchanged by positive homogeneity and
/// moves every charge by c_k -> a_k^2 |in_k|^2 - a_k^-2 |out_k|^2.
pub fn rescale(theta: &Params, alpha: &Rescaling) -> Result<Params> {
    check_len(theta.l(), alpha.len(), "rescale")?;
    let mut w1 = theta.w1().clone();
    let mut w2 = theta.w2().clone();
    let mut b1 = theta.b1().cloned();
    for k in 0..theta.l() {
        let a = alpha.0[k];
        let inv = 1.0 / a;
        w1.row_mut(k).mapv_inplace(|v| v * a);
        if let Some(b1) = b1.as_mut() {
            b1[k] *= a;
        }
        w2.column_mut(k).mapv_inplace(|v| v * inv);
    }
    Params::new(w1, w2, b1, theta.b2().cloned(), theta.activation())
}

/// Relabel hidden neurons: row i of the result is row pi[i] of theta, and
/// likewise for out-columns and hidden biases. Output biases stay put.
pub fn permute(theta: &Params, pi: &Permutation) -> Result<Params> {
    check_len(theta.l(), pi.len(), "permute")?;
    let mut w1 = theta.w1().clone();
    let mut w2 = theta.w2().clone();
    let mut b1 = theta.b1().cloned();
    for i in 0..theta.l() {
        let src = pi.image[i];
        w1.row_mut(i).assign(&theta.w1().row(src));
        w2.column_mut(i).assign(&theta.w2().column(src));
        if let Some(b1) = b1.as_mut() {
            b1[i] = theta.b1().unwrap()[src];
        }
    }
    Params::new(w1, w2, b1, theta.b2().cloned(), theta.activation())
}

/// The rescaling that slides past a permutation: rescale(permute(theta, pi), alpha)
/// equals permute(rescale(theta, interchange), pi), entry-for-entry.
pub fn interchange_rescaling(alpha: &Rescaling, pi: &Permutation) -> Result<Rescaling> {
    check_len(pi.len(), alpha.len(), "interchange_rescaling")?;
    let mut tilde = Array1::ones(alpha.len());
    for i in 0..alpha.len() {
        tilde[pi.image[i]] = alpha.0[i];
    }
    Ok(Rescaling(tilde))
}

/// The unique positive rescaling taking theta's charges to `c_target`,
/// together with the result of applying it.
///
/// Per neuron the scale solves A a^4 - c a^2 - C = 0 with A = |in_k|^2 and
/// C = |out_k|^2, which has exactly one positive root when A, C > 0. A
/// vanishing layer pins the reachable signs: A = 0 reaches only negative
/// charges, C = 0 only positive ones, and a fully zero neuron only 0.
pub fn rescale_to_charges(
    theta: &Params,
    c_target: ArrayView1<f64>,
) -> Result<(Params, Rescaling)> {
    check_len(theta.l(), c_target.len(), "rescale_to_charges")?;
    if c_target.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("target charges"));
    }
    let mut alpha = Array1::ones(theta.l());
    for k in 0..theta.l() {
        let mut a: f64 = theta.w1().row(k).iter().map(|v| v * v).sum();
        if let Some(b1) = theta.b1() {
            a += b1[k] * b1[k];
        }
        let c: f64 = theta.w2().column(k).iter().map(|v| v * v).sum();
        let t = c_target[k];
        alpha[k] = match (a == 0.0, c == 0.0) {
            (false, false) => {
                let disc = (t * t + 4.0 * a * c).sqrt();
                if t >= 0.0 {
                    // direct root; no cancellation for t >= 0
                    ((t + disc) / (2.0 * a)).sqrt()
                } else {
                    // rationalized form avoids cancellation for t < 0
                    (2.0 * c / (disc - t)).sqrt()
                }
            }
            (true, false) => {
                if t < 0.0 {
                    (c / -t).sqrt()
                } else {
                    return Err(Error::RescaleZeroIn { k, target: t });
                }
            }
            (false, true) => {
                if t > 0.0 {
                    (t / a).sqrt()
                } else {
                    return Err(Error::RescaleZeroOut { k, target: t });
                }
            }
            (true, true) => {
                if t == 0.0 {
                    1.0
                } else {
                    return Err(Error::RescaleDegenerate { k, target: t });
                }
            }
        };
    }
    let alpha = Rescaling::new(alpha)?;
    let rescaled = rescale(theta, &alpha)?;
    Ok((rescaled, alpha))
}

/// Move theta to the connected component labelled `target` without changing
/// the function it computes or its charge vector: permute negative-charge
/// neurons so the out-weight signs line up, then rescale the charges back.
///
/// Matching positions keep their neuron; mismatches are paired off in index
/// order, so the permutation displaces as few neurons as possible. If the
/// sign vector already matches, theta is returned as-is.
pub fn map_to_sign(theta: &Params, target: &SignVector) -> Result<Params> {
    let sig = signature(theta, DEFAULT_ZERO_TOL)?;
    let current = sign_vector(theta, &sig)?;
    if target.len() != current.len() {
        return Err(Error::SignLength {
            expected: current.len(),
            got: target.len(),
        });
    }
    if target.sum() != current.sum() {
        return Err(Error::SignSumMismatch {
            from: current.sum(),
            to: target.sum(),
        });
    }
    if current == *target {
        return Ok(theta.clone());
    }

    let s = current.entries();
    let t = target.entries();
    let m = s.len();
    // rho is a bijection on the negative-charge positions with
    // s[rho[j]] == t[j]: fixed where they already agree, mismatches paired
    // in index order by the sign they need.
    let mut rho: Vec<usize> = (0..m).collect();
    let needs_plus = (0..m).filter(|&j| s[j] != t[j] && t[j] == 1);
    let has_plus = (0..m).filter(|&i| s[i] != t[i] && s[i] == 1);
    for (j, i) in needs_plus.zip(has_plus) {
        rho[j] = i;
    }
    let needs_minus = (0..m).filter(|&j| s[j] != t[j] && t[j] == -1);
    let has_minus = (0..m).filter(|&i| s[i] != t[i] && s[i] == -1);
    for (j, i) in needs_minus.zip(has_minus) {
        rho[j] = i;
    }

    let neg = sig.neg_indices();
    let mut image: Vec<usize> = (0..theta.l()).collect();
    for j in 0..m {
        image[neg[j]] = neg[rho[j]];
    }
    let pi = Permutation::from_image(image)?;
    let permuted = permute(theta, &pi)?;
    let (restored, _) = rescale_to_charges(&permuted, sig.charges())?;
    Ok(restored)
}

/// Monte Carlo function-equality check on standard-normal inputs: false as
/// soon as one sampled x gives |f_a(x) - f_b(x)| > tol (1 + |f_a(x)|) in the
/// Euclidean norm.
pub fn observationally_equivalent(
    a: &Params,
    b: &Params,
    n_samples: usize,
    seed: u64,
    tol: f64,
) -> Result<bool> {
    if a.d() != b.d() || a.e() != b.e() {
        return Err(Error::ShapeMismatch {
            context: "observationally_equivalent",
            expected: format!("d={}, e={}", a.d(), a.e()),
            got: format!("d={}, e={}", b.d(), b.e()),
        });
    }
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::InvalidArgument {
            what: "tol",
            value: format!("{tol}"),
        });
    }
    let mut rng = rng::stream_rng(seed, 0);
    let mut x = Array1::zeros(a.d());
    for _ in 0..n_samples {
        x.mapv_inplace(|_| rng::standard_normal(&mut rng));
        let fa = a.forward(x.view())?;
        let fb = b.forward(x.view())?;
        let diff = (&fa - &fb).iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = fa.iter().map(|v| v * v).sum::<f64>().sqrt();
        if diff > tol * (1.0 + scale) {
            return Ok(false);
        }
    }
    Ok(true)
}
