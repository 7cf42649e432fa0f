//! The level set picked out by a charge vector, and what it looks like.
//!
//! Fixing the charge vector c confines training to a product of quadrics,
//! one per neuron. A neuron with positive charge contributes a sphere factor
//! in its in-weights, one with negative charge a sphere factor in its
//! out-weights, and a zero-charge neuron a contractible double cone. The
//! Betti numbers of the product are read off an integer polynomial; with a
//! scalar output the connected components are labelled by the signs of the
//! out-weights at the negative-charge neurons, and explicit in-set paths
//! between same-label points can be written down.

use ndarray::{Array1, ArrayView1};
use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::net::Params;

/// Charges within this distance of zero are classified as zero unless the
/// caller picks another tolerance.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// Classification of one neuron's charge against the zero tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeClass {
    Positive,
    Zero,
    Negative,
}

/// Everything about a parameter point that the level-set topology depends
/// on: dimensions, bias mode, and the charge classification.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantSignature {
    c: Array1<f64>,
    d: usize,
    e: usize,
    with_bias: bool,
    zero_tol: f64,
    l_plus: usize,
    l_minus: usize,
    l_zero: usize,
    neg_indices: Vec<usize>,
}

impl InvariantSignature {
    /// A signature with the given class counts and placeholder charges
    /// (+1 / -1 / 0 blocks in that order). Lets the polynomial and count
    /// routines be exercised without materializing weights.
    pub fn from_counts(
        d: usize,
        e: usize,
        with_bias: bool,
        l_plus: usize,
        l_minus: usize,
        l_zero: usize,
    ) -> Result<Self> {
        if d == 0 || e == 0 || l_plus + l_minus + l_zero == 0 {
            return Err(Error::InvalidArgument {
                what: "signature counts",
                value: format!("d={d}, e={e}, l={}", l_plus + l_minus + l_zero),
            });
        }
        let mut c = Vec::new();
        c.extend(std::iter::repeat_n(1.0, l_plus));
        c.extend(std::iter::repeat_n(-1.0, l_minus));
        c.extend(std::iter::repeat_n(0.0, l_zero));
        let neg_indices = (l_plus..l_plus + l_minus).collect();
        Ok(InvariantSignature {
            c: Array1::from_vec(c),
            d,
            e,
            with_bias,
            zero_tol: DEFAULT_ZERO_TOL,
            l_plus,
            l_minus,
            l_zero,
            neg_indices,
        })
    }

    pub fn charges(&self) -> ArrayView1<'_, f64> {
        self.c.view()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn e(&self) -> usize {
        self.e
    }

    pub fn l(&self) -> usize {
        self.c.len()
    }

    pub fn with_bias(&self) -> bool {
        self.with_bias
    }

    pub fn zero_tol(&self) -> f64 {
        self.zero_tol
    }

    pub fn l_plus(&self) -> usize {
        self.l_plus
    }

    pub fn l_minus(&self) -> usize {
        self.l_minus
    }

    pub fn l_zero(&self) -> usize {
        self.l_zero
    }

    /// Indices of the negative-charge neurons, ascending.
    pub fn neg_indices(&self) -> &[usize] {
        &self.neg_indices
    }

    /// Dimension of the vector a neuron's charge counts positively: the
    /// in-weights row, plus the hidden bias when present.
    pub fn in_dim(&self) -> usize {
        if self.with_bias {
            self.d + 1
        } else {
            self.d
        }
    }

    pub fn class_of(&self, k: usize) -> ChargeClass {
        classify(self.c[k], self.zero_tol)
    }
}

fn classify(c: f64, zero_tol: f64) -> ChargeClass {
    if c > zero_tol {
        ChargeClass::Positive
    } else if c < -zero_tol {
        ChargeClass::Negative
    } else {
        ChargeClass::Zero
    }
}

/// Classify every neuron's charge against `zero_tol`.
pub fn signature(theta: &Params, zero_tol: f64) -> Result<InvariantSignature> {
    if !zero_tol.is_finite() || zero_tol <= 0.0 {
        return Err(Error::InvalidArgument {
            what: "zero_tol",
            value: format!("{zero_tol}"),
        });
    }
    let c = theta.charges();
    let mut l_plus = 0;
    let mut l_minus = 0;
    let mut l_zero = 0;
    let mut neg_indices = Vec::new();
    for (k, &ck) in c.iter().enumerate() {
        match classify(ck, zero_tol) {
            ChargeClass::Positive => l_plus += 1,
            ChargeClass::Zero => l_zero += 1,
            ChargeClass::Negative => {
                l_minus += 1;
                neg_indices.push(k);
            }
        }
    }
    Ok(InvariantSignature {
        c,
        d: theta.d(),
        e: theta.e(),
        with_bias: theta.with_bias(),
        zero_tol,
        l_plus,
        l_minus,
        l_zero,
        neg_indices,
    })
}

/// Coefficient vector of the level set's Poincare polynomial, exact
/// integers, index i = i-th Betti number.
///
/// Each positive-charge neuron contributes a factor (1 + x^(in_dim - 1)),
/// each negative-charge neuron (1 + x^(e - 1)); zero-charge neurons are
/// contractible and contribute nothing.
pub fn poincare_polynomial(sig: &InvariantSignature) -> Vec<BigUint> {
    let mut poly = vec![BigUint::one()];
    let p = sig.in_dim() - 1;
    let q = sig.e - 1;
    for _ in 0..sig.l_plus {
        mul_one_plus_x_pow(&mut poly, p);
    }
    for _ in 0..sig.l_minus {
        mul_one_plus_x_pow(&mut poly, q);
    }
    poly
}

/// poly *= (1 + x^exp); exp = 0 doubles every coefficient.
fn mul_one_plus_x_pow(poly: &mut Vec<BigUint>, exp: usize) {
    if exp == 0 {
        for coeff in poly.iter_mut() {
            *coeff = &*coeff + &*coeff;
        }
        return;
    }
    let old_len = poly.len();
    poly.resize(old_len + exp, BigUint::zero());
    for i in (0..old_len).rev() {
        let add = poly[i].clone();
        poly[i + exp] += add;
    }
}

/// i-th Betti number of the level set; zero beyond the top degree.
pub fn betti(sig: &InvariantSignature, i: usize) -> BigUint {
    let poly = poincare_polynomial(sig);
    let value = poly.get(i).cloned().unwrap_or_else(BigUint::zero);
    if i == 0 {
        debug_assert_eq!(value, beta0_closed_form(sig));
    }
    value
}

/// Number of connected components by the case-split formula, written out
/// independently of the polynomial expansion so the two routes cross-check.
pub fn beta0_closed_form(sig: &InvariantSignature) -> BigUint {
    let two_pow = |k: usize| BigUint::one() << k;
    if sig.with_bias {
        // The in-sphere has dimension d >= 1, hence is connected; only a
        // scalar output contributes 0-spheres.
        if sig.e == 1 {
            two_pow(sig.l_minus)
        } else {
            BigUint::one()
        }
    } else {
        match (sig.d == 1, sig.e == 1) {
            (false, false) => BigUint::one(),
            (true, false) => two_pow(sig.l_plus),
            (false, true) => two_pow(sig.l_minus),
            (true, true) => two_pow(sig.l_plus + sig.l_minus),
        }
    }
}

/// Sign labels of the negative-charge neurons' out-weights, the coordinates
/// that cannot cross zero inside the level set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(entries: Vec<i8>) -> Result<Self> {
        if let Some(&bad) = entries.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument {
                what: "sign entry",
                value: format!("{bad}"),
            });
        }
        Ok(SignVector(entries))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[i8] {
        &self.0
    }

    pub fn sum(&self) -> i64 {
        self.0.iter().map(|&s| s as i64).sum()
    }
}

impl std::fmt::Display for SignVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", if *s > 0 { "+1" } else { "-1" })?;
        }
        write!(f, ")")
    }
}

/// Signs of theta's out-weights at `indices`, requiring each to clear
/// `zero_tol` in magnitude. Scalar-output networks only.
pub(crate) fn signs_at(theta: &Params, indices: &[usize], zero_tol: f64) -> Result<SignVector> {
    let mut s = Vec::with_capacity(indices.len());
    for &k in indices {
        let w = theta.w2()[(0, k)];
        if w.abs() <= zero_tol {
            return Err(Error::ZeroOutWeight { k });
        }
        s.push(if w > 0.0 { 1 } else { -1 });
    }
    Ok(SignVector(s))
}

fn check_component_regime(sig: &InvariantSignature) -> Result<()> {
    if sig.e != 1 {
        return Err(Error::UnsupportedRegime(format!(
            "sign labels need a scalar output, got e = {}",
            sig.e
        )));
    }
    if sig.in_dim() <= 1 {
        return Err(Error::UnsupportedRegime(
            "sign labels need in-dimension > 1 (d = 1 without bias has extra components)".into(),
        ));
    }
    Ok(())
}

/// The sign label of theta's connected component within its level set.
pub fn sign_vector(theta: &Params, sig: &InvariantSignature) -> Result<SignVector> {
    check_component_regime(sig)?;
    if sig.l() != theta.l() {
        return Err(Error::ShapeMismatch {
            context: "sign_vector",
            expected: format!("{} neurons", sig.l()),
            got: format!("{}", theta.l()),
        });
    }
    if sig.l_minus == 0 {
        return Err(Error::UnsupportedRegime(
            "no negative-charge neurons: the level set is connected and carries no sign label"
                .into(),
        ));
    }
    signs_at(theta, &sig.neg_indices, sig.zero_tol)
}

/// Whether a and b can be joined by a path inside their common level set.
/// Classification (tolerance and all) is taken from `a`.
pub fn same_component(a: &Params, b: &Params, zero_tol: f64) -> Result<bool> {
    if a.d() != b.d() || a.e() != b.e() || a.l() != b.l() || a.with_bias() != b.with_bias() {
        return Err(Error::ShapeMismatch {
            context: "same_component",
            expected: format!("matching shapes (l={}, d={}, e={})", a.l(), a.d(), a.e()),
            got: format!("l={}, d={}, e={}", b.l(), b.d(), b.e()),
        });
    }
    let sig = signature(a, zero_tol)?;
    check_component_regime(&sig)?;
    let cb = b.charges();
    for (k, (&ca, &cbk)) in sig.c.iter().zip(cb.iter()).enumerate() {
        let delta = (ca - cbk).abs();
        if delta > zero_tol {
            return Err(Error::ChargeMismatch {
                k,
                delta,
                tol: zero_tol,
            });
        }
    }
    if sig.l_minus == 0 {
        return Ok(true);
    }
    let sa = signs_at(a, &sig.neg_indices, 0.0)?;
    let sb = signs_at(b, &sig.neg_indices, 0.0)?;
    Ok(sa == sb)
}

/// Number of components that differ as functions, not merely as labels:
/// permuting neurons identifies components with equal sign sum.
pub fn effective_component_count(sig: &InvariantSignature) -> Result<usize> {
    if sig.e == 1 && sig.in_dim() > 1 {
        return Ok(1 + sig.l_minus);
    }
    if beta0_closed_form(sig).is_one() {
        return Ok(1);
    }
    Err(Error::UnsupportedRegime(format!(
        "no effective-component count in the d = 1, e = {} regime (the level set has {} components)",
        sig.e,
        beta0_closed_form(sig)
    )))
}

/// Whether two sign vectors label the same effective component: exactly
/// when their sums agree.
pub fn same_effective(s: &SignVector, t: &SignVector) -> Result<bool> {
    if s.len() != t.len() {
        return Err(Error::SignLength {
            expected: s.len(),
            got: t.len(),
        });
    }
    Ok(s.sum() == t.sum())
}

/// Piecewise-smooth path from a to b inside their common level set,
/// returned as n_steps + 1 waypoints with endpoints a and b verbatim.
///
/// Per neuron: negative charge contracts the in-vector to zero and back out
/// (the out-weight magnitude follows the quadric, its sign never moves);
/// zero charge contracts the whole neuron through the origin; positive
/// charge walks the in-direction along a great circle while the out-weight
/// interpolates linearly and the in-radius follows the quadric. Output
/// biases interpolate linearly; they do not enter any charge.
pub fn connecting_path(a: &Params, b: &Params, n_steps: usize) -> Result<Vec<Params>> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument {
            what: "n_steps",
            value: "0".into(),
        });
    }
    if a.activation() != b.activation() {
        return Err(Error::InvalidArgument {
            what: "activation",
            value: "endpoints carry different activations".into(),
        });
    }
    // Shares the shape, regime, charge-agreement, and sign checks.
    if !same_component(a, b, DEFAULT_ZERO_TOL)? {
        return Err(Error::DifferentComponent);
    }
    let sig = signature(a, DEFAULT_ZERO_TOL)?;
    let cb = b.charges();

    let in_a: Vec<Array1<f64>> = (0..a.l()).map(|k| in_vector(a, k)).collect();
    let in_b: Vec<Array1<f64>> = (0..b.l()).map(|k| in_vector(b, k)).collect();

    let mut waypoints = Vec::with_capacity(n_steps + 1);
    waypoints.push(a.clone());
    for i in 1..n_steps {
        let t = i as f64 / n_steps as f64;
        let mut w1 = a.w1().clone();
        let mut b1 = a.b1().cloned();
        let mut w2 = a.w2().clone();
        for k in 0..a.l() {
            let (inn, out) = match sig.class_of(k) {
                ChargeClass::Negative => neg_waypoint(
                    t,
                    &in_a[k],
                    &in_b[k],
                    sig.c[k],
                    cb[k],
                    if a.w2()[(0, k)] > 0.0 { 1.0 } else { -1.0 },
                ),
                ChargeClass::Zero => {
                    zero_waypoint(t, &in_a[k], &in_b[k], a.w2()[(0, k)], b.w2()[(0, k)])
                }
                ChargeClass::Positive => pos_waypoint(
                    t,
                    &in_a[k],
                    &in_b[k],
                    sig.c[k],
                    cb[k],
                    a.w2()[(0, k)],
                    b.w2()[(0, k)],
                ),
            };
            for j in 0..a.d() {
                w1[(k, j)] = inn[j];
            }
            if let Some(b1) = b1.as_mut() {
                b1[k] = inn[a.d()];
            }
            w2[(0, k)] = out;
        }
        let b2 = match (a.b2(), b.b2()) {
            (Some(pa), Some(pb)) => Some(pa * (1.0 - t) + pb * t),
            _ => None,
        };
        waypoints.push(Params::new(w1, w2, b1, b2, a.activation())?);
    }
    waypoints.push(b.clone());
    Ok(waypoints)
}

/// In-weights row extended by the hidden bias when present; the vector whose
/// squared norm the charge counts positively.
fn in_vector(theta: &Params, k: usize) -> Array1<f64> {
    let row = theta.w1().row(k);
    match theta.b1() {
        Some(b1) => {
            let mut v = Array1::zeros(row.len() + 1);
            v.slice_mut(ndarray::s![..row.len()]).assign(&row);
            v[row.len()] = b1[k];
            v
        }
        None => row.to_owned(),
    }
}

fn norm(v: &Array1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// First half contracts a's in-vector to zero on a's quadric sheet, second
/// half grows b's back out on b's; the out-weight keeps the shared sign s.
fn neg_waypoint(
    t: f64,
    in_a: &Array1<f64>,
    in_b: &Array1<f64>,
    ca: f64,
    cb: f64,
    s: f64,
) -> (Array1<f64>, f64) {
    let (inn, c) = if t <= 0.5 {
        (in_a.mapv(|v| v * (1.0 - 2.0 * t)), ca)
    } else {
        (in_b.mapv(|v| v * (2.0 * t - 1.0)), cb)
    };
    let out = s * (-c + inn.iter().map(|v| v * v).sum::<f64>()).sqrt();
    (inn, out)
}

/// Radial contraction through the origin, which a zero-charge double cone
/// contains.
fn zero_waypoint(
    t: f64,
    in_a: &Array1<f64>,
    in_b: &Array1<f64>,
    out_a: f64,
    out_b: f64,
) -> (Array1<f64>, f64) {
    if t <= 0.5 {
        let r = 1.0 - 2.0 * t;
        (in_a.mapv(|v| v * r), out_a * r)
    } else {
        let r = 2.0 * t - 1.0;
        (in_b.mapv(|v| v * r), out_b * r)
    }
}

/// Great-circle walk of the in-direction with linearly interpolated
/// out-weight; the in-radius is solved from the quadric at every step.
fn pos_waypoint(
    t: f64,
    in_a: &Array1<f64>,
    in_b: &Array1<f64>,
    ca: f64,
    cb: f64,
    out_a: f64,
    out_b: f64,
) -> (Array1<f64>, f64) {
    let ua = in_a.mapv(|v| v / norm(in_a));
    let ub = in_b.mapv(|v| v / norm(in_b));
    let u = sphere_interpolate(&ua, &ub, t);
    let out = out_a * (1.0 - t) + out_b * t;
    let c = ca * (1.0 - t) + cb * t;
    let r = (c + out * out).sqrt();
    (u.mapv(|v| v * r), out)
}

/// Unit-sphere interpolation between unit vectors, robust at the parallel
/// and antipodal extremes (the latter routes through an orthogonal
/// direction, which exists because the sphere dimension is >= 1).
fn sphere_interpolate(ua: &Array1<f64>, ub: &Array1<f64>, t: f64) -> Array1<f64> {
    let dot = ua.iter().zip(ub.iter()).map(|(x, y)| x * y).sum::<f64>();
    let dot = dot.clamp(-1.0, 1.0);
    if dot > 1.0 - 1e-12 {
        let v = ua * (1.0 - t) + ub * t;
        let n = norm(&v);
        return v.mapv(|x| x / n);
    }
    if dot < -1.0 + 1e-12 {
        let v = orthogonal_unit(ua);
        return if t <= 0.5 {
            slerp(ua, &v, 2.0 * t)
        } else {
            slerp(&v, ub, 2.0 * t - 1.0)
        };
    }
    slerp(ua, ub, t)
}

fn slerp(p: &Array1<f64>, q: &Array1<f64>, t: f64) -> Array1<f64> {
    let dot = p
        .iter()
        .zip(q.iter())
        .map(|(x, y)| x * y)
        .sum::<f64>()
        .clamp(-1.0, 1.0);
    let omega = dot.acos();
    let sin_omega = omega.sin();
    if sin_omega < 1e-12 {
        let v = p * (1.0 - t) + q * t;
        let n = norm(&v);
        return v.mapv(|x| x / n);
    }
    p * (((1.0 - t) * omega).sin() / sin_omega) + q * ((t * omega).sin() / sin_omega)
}

/// A unit vector orthogonal to u, built from the coordinate u leans on
/// least.
fn orthogonal_unit(u: &Array1<f64>) -> Array1<f64> {
    let i_min = u
        .iter()
        .enumerate()
        .min_by(|(_, x), (_, y)| x.abs().partial_cmp(&y.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let mut v = Array1::zeros(u.len());
    v[i_min] = 1.0;
    let proj = u[i_min];
    let v = &v - &u.mapv(|x| x * proj);
    let n = norm(&v);
    v.mapv(|x| x / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Activation;
    use ndarray::array;

    fn relu_net(w1: ndarray::Array2<f64>, w2: ndarray::Array2<f64>) -> Params {
        Params::linearless(w1, w2, Activation::Relu).unwrap()
    }

    fn sig_of(theta: &Params) -> InvariantSignature {
        signature(theta, DEFAULT_ZERO_TOL).unwrap()
    }

    #[test]
    fn signature_splits_charges_by_sign() {
        let p = relu_net(array![[1.0, 0.0], [0.0, 2.0]], array![[3.0, 1.0]]);
        let sig = sig_of(&p); // charges (-8, 3)
        assert_eq!((sig.l_plus(), sig.l_minus(), sig.l_zero()), (1, 1, 0));
        assert_eq!(sig.neg_indices(), &[0]);
        assert_eq!(sig.class_of(0), ChargeClass::Negative);
        assert_eq!(sig.class_of(1), ChargeClass::Positive);
    }

    #[test]
    fn signature_zero_band_is_inclusive() {
        // Charge within 1e-12 of zero classifies as zero at tol 1e-9.
        let x = (1.0f64 - 1e-12).sqrt();
        let p = relu_net(array![[x, 0.0], [3.0, 0.0]], array![[1.0, 2.0]]);
        let sig = sig_of(&p);
        assert!(p.charges()[0].abs() < 1e-9);
        assert_eq!((sig.l_plus(), sig.l_minus(), sig.l_zero()), (1, 0, 1));
    }

    #[test]
    fn signature_rejects_bad_tolerance() {
        let p = relu_net(array![[1.0]], array![[1.0]]);
        assert!(signature(&p, 0.0).is_err());
        assert!(signature(&p, f64::NAN).is_err());
    }

    #[test]
    fn poincare_single_balanced_neuron_is_constant_one() {
        let sig = InvariantSignature::from_counts(3, 2, false, 0, 0, 1).unwrap();
        assert_eq!(poincare_polynomial(&sig), vec![BigUint::from(1u32)]);
    }

    #[test]
    fn poincare_matches_hand_expansion() {
        // (1 + x^2)^2 (1 + x) = 1 + x + 2x^2 + 2x^3 + x^4 + x^5.
        let sig = InvariantSignature::from_counts(3, 2, false, 2, 1, 0).unwrap();
        let coeffs: Vec<u32> = poincare_polynomial(&sig)
            .iter()
            .map(|b| b.try_into().unwrap())
            .collect();
        assert_eq!(coeffs, vec![1, 1, 2, 2, 1, 1]);
    }

    #[test]
    fn poincare_scalar_output_doubles_per_negative_neuron() {
        // d=2, e=1: (1 + x)^1 (1 + 1)^2 = 4 + 4x.
        let sig = InvariantSignature::from_counts(2, 1, false, 1, 2, 0).unwrap();
        let coeffs: Vec<u32> = poincare_polynomial(&sig)
            .iter()
            .map(|b| b.try_into().unwrap())
            .collect();
        assert_eq!(coeffs, vec![4, 4]);
    }

    #[test]
    fn poincare_bias_mode_uses_full_in_dimension() {
        // bias, d=2: sphere factor x^2 per positive neuron.
        let sig = InvariantSignature::from_counts(2, 2, true, 1, 1, 0).unwrap();
        let coeffs: Vec<u32> = poincare_polynomial(&sig)
            .iter()
            .map(|b| b.try_into().unwrap())
            .collect();
        // (1 + x^2)(1 + x) = 1 + x + x^2 + x^3
        assert_eq!(coeffs, vec![1, 1, 1, 1]);
    }

    #[test]
    fn betti_sum_is_two_to_the_sphere_count() {
        for (lp, lm) in [(0usize, 0usize), (1, 0), (2, 3), (4, 4)] {
            let sig = InvariantSignature::from_counts(3, 2, false, lp, lm, 1).unwrap();
            let sum: BigUint = poincare_polynomial(&sig).into_iter().sum();
            assert_eq!(sum, BigUint::from(1u32) << (lp + lm));
        }
    }

    #[test]
    fn beta0_closed_form_covers_all_regimes() {
        let cases = [
            ((3, 2, false, 2, 2), 1u64),
            ((1, 2, false, 2, 1), 4),
            ((3, 1, false, 1, 2), 4),
            ((1, 1, false, 2, 2), 16),
        ];
        for ((d, e, wb, lp, lm), want) in cases {
            let sig = InvariantSignature::from_counts(d, e, wb, lp, lm, 0).unwrap();
            assert_eq!(beta0_closed_form(&sig), BigUint::from(want));
            assert_eq!(betti(&sig, 0), BigUint::from(want));
        }
        // bias mode ignores d
        let sig = InvariantSignature::from_counts(1, 1, true, 2, 3, 0).unwrap();
        assert_eq!(beta0_closed_form(&sig), BigUint::from(8u32));
        let sig = InvariantSignature::from_counts(1, 2, true, 2, 3, 0).unwrap();
        assert_eq!(beta0_closed_form(&sig), BigUint::from(1u32));
    }

    #[test]
    fn sign_vector_reads_out_weight_signs_in_order() {
        let p = relu_net(
            array![[0.1, 0.0], [9.0, 0.0], [0.2, 0.1]],
            array![[-1.5, 0.2, 2.4]],
        );
        // charges: 0.01 - 2.25 < 0, 81 - 0.04 > 0, 0.05 - 5.76 < 0
        let sig = sig_of(&p);
        assert_eq!(sig.neg_indices(), &[0, 2]);
        let s = sign_vector(&p, &sig).unwrap();
        assert_eq!(s.entries(), &[-1, 1]);
        assert_eq!(s.sum(), 0);
    }

    #[test]
    fn sign_vector_needs_scalar_output_and_width() {
        let p = relu_net(array![[0.1, 0.0]], array![[1.0], [1.0]]);
        let sig = sig_of(&p);
        assert!(matches!(
            sign_vector(&p, &sig),
            Err(Error::UnsupportedRegime(_))
        ));

        let narrow = relu_net(array![[0.1]], array![[2.0]]);
        let sig = sig_of(&narrow);
        assert!(matches!(
            sign_vector(&narrow, &sig),
            Err(Error::UnsupportedRegime(_))
        ));

        let all_pos = relu_net(array![[2.0, 0.0]], array![[1.0]]);
        let sig = sig_of(&all_pos);
        assert!(matches!(
            sign_vector(&all_pos, &sig),
            Err(Error::UnsupportedRegime(_))
        ));
    }

    #[test]
    fn same_component_detects_sign_disagreement() {
        let a = relu_net(array![[0.3, 0.4], [1.0, 2.0]], array![[1.0, 0.1]]);
        assert!(same_component(&a, &a, DEFAULT_ZERO_TOL).unwrap());

        // Flip the negative-charge out-weight: same charges, other component.
        let mut w2 = a.w2().clone();
        w2[(0, 0)] = -w2[(0, 0)];
        let b = relu_net(a.w1().clone(), w2);
        assert_eq!(a.charges(), b.charges());
        assert!(!same_component(&a, &b, DEFAULT_ZERO_TOL).unwrap());
    }

    #[test]
    fn same_component_rejects_different_charges() {
        let a = relu_net(array![[0.3, 0.4]], array![[1.0]]);
        let b = relu_net(array![[0.3, 0.4]], array![[2.0]]);
        assert!(matches!(
            same_component(&a, &b, DEFAULT_ZERO_TOL),
            Err(Error::ChargeMismatch { k: 0, .. })
        ));
    }

    #[test]
    fn effective_component_count_by_regime() {
        let sig = InvariantSignature::from_counts(3, 1, false, 1, 2, 0).unwrap();
        assert_eq!(effective_component_count(&sig).unwrap(), 3);

        let sig = InvariantSignature::from_counts(3, 2, false, 4, 4, 0).unwrap();
        assert_eq!(effective_component_count(&sig).unwrap(), 1);

        // d = 1 with no sphere-splitting neurons is still connected.
        let sig = InvariantSignature::from_counts(1, 2, false, 0, 3, 0).unwrap();
        assert_eq!(effective_component_count(&sig).unwrap(), 1);

        let sig = InvariantSignature::from_counts(1, 2, false, 2, 0, 0).unwrap();
        assert!(effective_component_count(&sig).is_err());

        let sig = InvariantSignature::from_counts(1, 1, true, 2, 2, 0).unwrap();
        assert_eq!(effective_component_count(&sig).unwrap(), 3);
    }

    #[test]
    fn same_effective_compares_sums() {
        let s = SignVector::new(vec![1, -1, 1]).unwrap();
        let t = SignVector::new(vec![1, 1, -1]).unwrap();
        let u = SignVector::new(vec![1, 1, 1]).unwrap();
        assert!(same_effective(&s, &t).unwrap());
        assert!(!same_effective(&s, &u).unwrap());
        let short = SignVector::new(vec![1]).unwrap();
        assert!(same_effective(&s, &short).is_err());
    }

    /// Partner of `a` on the same level set: given in-rows, the out-weights
    /// are solved from a's charges, with sign choices per neuron.
    fn partner(a: &Params, in_rows: ndarray::Array2<f64>, out_signs: &[f64]) -> Params {
        let ca = a.charges();
        let l = a.l();
        let mut w2 = ndarray::Array2::zeros((1, l));
        for k in 0..l {
            let n2: f64 = in_rows.row(k).iter().map(|v| v * v).sum();
            w2[(0, k)] = out_signs[k] * (n2 - ca[k]).sqrt();
        }
        relu_net(in_rows, w2)
    }

    fn max_charge_deviation(points: &[Params], c_ref: &Array1<f64>) -> f64 {
        points
            .iter()
            .flat_map(|p| {
                let c = p.charges();
                (0..c.len()).map(move |k| (c[k] - c_ref[k]).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn connecting_path_stays_on_the_level_set() {
        // One neuron of each charge class.
        let a = relu_net(
            array![[2.0, 0.0], [0.3, 0.0], [1.0, 1.0]],
            array![[1.0, 2.0, (2.0f64).sqrt()]],
        );
        let sig = sig_of(&a);
        assert_eq!((sig.l_plus(), sig.l_minus(), sig.l_zero()), (1, 1, 1));

        // Same charges and matching negative-neuron sign, fresh directions;
        // the positive and zero neurons' out-weights flip sign on the way.
        let b = partner(
            &a,
            array![[0.0, (7.0f64).sqrt()], [1.1, -0.4], [-0.5, -0.5]],
            &[-1.0, 1.0, -1.0],
        );
        let path = connecting_path(&a, &b, 40).unwrap();
        assert_eq!(path.len(), 41);
        assert_eq!(path[0], a);
        assert_eq!(path[40], b);
        assert!(max_charge_deviation(&path, &a.charges()) < 1e-8);
        for p in &path {
            assert!(p.w2()[(0, 1)] > 0.0, "negative-charge sign moved");
        }
    }

    #[test]
    fn connecting_path_handles_antipodal_in_directions() {
        let a = relu_net(array![[2.0, 0.0]], array![[1.0]]);
        let b = partner(&a, array![[-2.0, 0.0]], &[-1.0]);
        let path = connecting_path(&a, &b, 64).unwrap();
        assert!(max_charge_deviation(&path, &a.charges()) < 1e-8);
        assert_eq!(path[0], a);
        assert_eq!(path[64], b);
    }

    #[test]
    fn connecting_path_trivial_and_minimal_cases() {
        let a = relu_net(array![[0.3, 0.4], [1.0, 2.0]], array![[1.0, 0.1]]);
        let path = connecting_path(&a, &a, 5).unwrap();
        assert_eq!(path.len(), 6);
        assert!(max_charge_deviation(&path, &a.charges()) < 1e-8);

        let two = connecting_path(&a, &a, 1).unwrap();
        assert_eq!(two, vec![a.clone(), a]);
    }

    #[test]
    fn connecting_path_refuses_different_components() {
        let a = relu_net(array![[0.3, 0.4]], array![[1.0]]);
        let mut w2 = a.w2().clone();
        w2[(0, 0)] = -w2[(0, 0)];
        let b = relu_net(a.w1().clone(), w2);
        assert_eq!(connecting_path(&a, &b, 10), Err(Error::DifferentComponent));
        assert_eq!(
            connecting_path(&a, &a, 0),
            Err(Error::InvalidArgument {
                what: "n_steps",
                value: "0".into()
            })
        );
    }
}
