//! Seeded initializers and the closed-form probability that a random start
//! already contains a trapped neuron.
//!
//! With a scalar output, a neuron whose charge comes out negative pins the
//! sign of its out-weight for the rest of training, and one bad sign is
//! enough to lock the run out of the zero-loss set. For independent
//! zero-mean normal entries the per-neuron survival probability is an F
//! distribution value: ||in||^2 / sigma1^2 is chi-square with d degrees of
//! freedom, out^2 / sigma2^2 is chi-square with 1, so
//! P[c_k >= 0] = P[F_{1,d} <= d sigma1^2 / sigma2^2], and independence
//! across neurons gives P[some neuron trapped] = 1 - F_cdf(...)^l.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::net::{Activation, Params};
use crate::rng;

/// Entry distributions for the two weight matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// Independent N(0, sigma1_sq) first-layer and N(0, sigma2_sq)
    /// second-layer entries.
    Normal { sigma1_sq: f64, sigma2_sq: f64 },
    /// Fan-in scaled normals: sigma1_sq = 2/d, sigma2_sq = 2/l.
    Kaiming,
    /// Fan-sum scaled normals: sigma1_sq = 2/(d+l), sigma2_sq = 2/(1+l).
    Xavier,
    /// Independent U(-half_width, half_width) entries in both layers; no
    /// closed-form trap probability here, Monte Carlo only.
    UniformSymmetric { half_width: f64 },
}

impl InitScheme {
    fn validate(&self) -> Result<()> {
        match *self {
            InitScheme::Normal {
                sigma1_sq,
                sigma2_sq,
            } => {
                for (what, v) in [("sigma1_sq", sigma1_sq), ("sigma2_sq", sigma2_sq)] {
                    if !v.is_finite() || v <= 0.0 {
                        return Err(Error::InvalidArgument {
                            what,
                            value: format!("{v}"),
                        });
                    }
                }
                Ok(())
            }
            InitScheme::UniformSymmetric { half_width } => {
                if !half_width.is_finite() || half_width <= 0.0 {
                    return Err(Error::InvalidArgument {
                        what: "half_width",
                        value: format!("{half_width}"),
                    });
                }
                Ok(())
            }
            InitScheme::Kaiming | InitScheme::Xavier => Ok(()),
        }
    }

    /// Per-layer variances for the normal family, with the fan-in taken
    /// from (d, l); None for the uniform scheme.
    pub fn normal_variances(&self, d: usize, l: usize) -> Option<(f64, f64)> {
        match *self {
            InitScheme::Normal {
                sigma1_sq,
                sigma2_sq,
            } => Some((sigma1_sq, sigma2_sq)),
            InitScheme::Kaiming => Some((2.0 / d as f64, 2.0 / l as f64)),
            InitScheme::Xavier => Some((2.0 / (d + l) as f64, 2.0 / (1 + l) as f64)),
            InitScheme::UniformSymmetric { .. } => None,
        }
    }
}

fn check_dims(d: usize, e: usize, l: usize) -> Result<()> {
    for (what, v) in [("d", d), ("e", e), ("l", l)] {
        if v == 0 {
            return Err(Error::InvalidArgument {
                what,
                value: "0".into(),
            });
        }
    }
    Ok(())
}

/// Draw a bias-free ReLU net. The first layer consumes its own generator
/// stream and the second another, each filled in row-major order, so adding
/// neurons or outputs never reshuffles the other layer's draws.
pub fn sample_init(scheme: &InitScheme, d: usize, e: usize, l: usize, seed: u64) -> Result<Params> {
    scheme.validate()?;
    check_dims(d, e, l)?;
    let fill = |shape: (usize, usize), stream: u64, sd_or_width: f64| -> Array2<f64> {
        let mut rng = rng::stream_rng(seed, stream);
        let mut m = Array2::zeros(shape);
        for v in m.iter_mut() {
            *v = match scheme {
                InitScheme::UniformSymmetric { .. } => {
                    rng::symmetric_uniform(&mut rng, sd_or_width)
                }
                _ => sd_or_width * rng::standard_normal(&mut rng),
            };
        }
        m
    };
    let (p1, p2) = match scheme {
        InitScheme::UniformSymmetric { half_width } => (*half_width, *half_width),
        _ => {
            let (v1, v2) = scheme.normal_variances(d, l).unwrap();
            (v1.sqrt(), v2.sqrt())
        }
    };
    let w1 = fill((l, d), 0, p1);
    let w2 = fill((e, l), 1, p2);
    Params::linearless(w1, w2, Activation::Relu)
}

// Lanczos approximation, g = 7, nine coefficients; relative error below
// 1e-13 on the positive axis.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection keeps the series argument above 1/2.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const BETA_EPS: f64 = 1e-14;
const BETA_MAX_ITER: usize = 300;

// Continued fraction for the incomplete beta, evaluated by the modified
// Lentz scheme. Converges in a few dozen iterations for
// x < (a + 1)/(a + b + 2); the caller routes the other half through the
// symmetry I_x(a,b) = 1 - I_{1-x}(b,a).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < BETA_EPS {
            break;
        }
    }
    h
}

// Regularized incomplete beta I_x(a, b) for a, b > 0.
fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front =
        (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of the F distribution with (d1, d2) degrees of freedom.
pub fn f_cdf(d1: usize, d2: usize, x: f64) -> Result<f64> {
    if d1 == 0 || d2 == 0 {
        return Err(Error::InvalidArgument {
            what: "degrees of freedom",
            value: format!("({d1}, {d2})"),
        });
    }
    if x.is_nan() {
        return Err(Error::InvalidArgument {
            what: "x",
            value: "NaN".into(),
        });
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let (d1f, d2f) = (d1 as f64, d2 as f64);
    let u = d1f * x / (d1f * x + d2f);
    Ok(reg_inc_beta(0.5 * d1f, 0.5 * d2f, u))
}

/// A width-l scalar-output architecture plus an initialization scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstructionQuery {
    pub d: usize,
    pub l: usize,
    pub scheme: InitScheme,
}

/// Closed-form probability that at least one neuron starts with negative
/// charge: 1 - F_cdf(1, d, d sigma1^2 / sigma2^2)^l. Normal-family schemes
/// only; the uniform scheme has no closed form and must go through the
/// Monte Carlo path.
pub fn obstruction_probability(q: &ObstructionQuery) -> Result<f64> {
    check_dims(q.d, 1, q.l)?;
    q.scheme.validate()?;
    let (s1, s2) = q
        .scheme
        .normal_variances(q.d, q.l)
        .ok_or(Error::UnsupportedScheme)?;
    let arg = q.d as f64 * s1 / s2;
    let keep = f_cdf(1, q.d, arg)?;
    Ok(1.0 - keep.powi(q.l as i32))
}

/// Whether one simulated draw of the query's net contains a negative-charge
/// neuron. Trial `trial` under `seed` reads its own generator stream,
/// drawing per neuron the d in-weights then the out-weight, so estimates
/// are reproducible and shards can be farmed out and merged.
pub fn obstruction_trial(q: &ObstructionQuery, seed: u64, trial: u64) -> Result<bool> {
    check_dims(q.d, 1, q.l)?;
    q.scheme.validate()?;
    let mut rng = rng::stream_rng(seed, trial);
    let mut draw: Box<dyn FnMut(usize) -> f64> = match q.scheme {
        InitScheme::UniformSymmetric { half_width } => {
            Box::new(move |_| rng::symmetric_uniform(&mut rng, half_width))
        }
        _ => {
            let (s1, s2) = q.scheme.normal_variances(q.d, q.l).unwrap();
            let sds = [s1.sqrt(), s2.sqrt()];
            Box::new(move |layer| sds[layer] * rng::standard_normal(&mut rng))
        }
    };
    for _ in 0..q.l {
        let in_sq: f64 = (0..q.d).map(|_| draw(0).powi(2)).sum();
        let out = draw(1);
        if in_sq - out * out < 0.0 {
            return Ok(true);
        }
    }
    Ok(false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    /// Binomial standard error sqrt(p(1-p)/trials).
    pub std_error: f64,
    pub trials: u64,
}

/// Monte Carlo estimate of the trap probability over `trials` independent
/// draws.
pub fn monte_carlo_obstruction(q: &ObstructionQuery, trials: u64, seed: u64) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::InvalidArgument {
            what: "trials",
            value: "0".into(),
        });
    }
    let mut hits = 0u64;
    for t in 0..trials {
        if obstruction_trial(q, seed, t)? {
            hits += 1;
        }
    }
    let p = hits as f64 / trials as f64;
    Ok(McEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
    })
}

/// Closed-form probabilities over a (d, l) grid; row i maps to d_values[i],
/// column j to l_values[j].
pub fn prob_grid(
    d_values: &[usize],
    l_values: &[usize],
    scheme: &InitScheme,
) -> Result<Array2<f64>> {
    if d_values.is_empty() || l_values.is_empty() {
        return Err(Error::InvalidArgument {
            what: "grid axes",
            value: "empty".into(),
        });
    }
    let mut grid = Array2::zeros((d_values.len(), l_values.len()));
    for (i, &d) in d_values.iter().enumerate() {
        for (j, &l) in l_values.iter().enumerate() {
            grid[(i, j)] = obstruction_probability(&ObstructionQuery {
                d,
                l,
                scheme: *scheme,
            })?;
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, FisherSnedecor};

    #[test]
    fn f_cdf_at_unit_point_with_one_and_one_dof() {
        // F_{1,1} is the square of a standard Cauchy, so its median is 1.
        let v = f_cdf(1, 1, 1.0).unwrap();
        assert!((v - 0.5).abs() < 1e-10, "{v}");
    }

    #[test]
    fn f_cdf_with_two_and_two_dof_is_elementary() {
        // F_{2,2}(x) = x / (1 + x).
        for x in [0.25, 0.5, 1.0, 3.0, 10.0] {
            let v = f_cdf(2, 2, x).unwrap();
            assert!((v - x / (1.0 + x)).abs() < 1e-12, "x = {x}: {v}");
        }
    }

    #[test]
    fn f_cdf_edges() {
        assert_eq!(f_cdf(3, 5, 0.0).unwrap(), 0.0);
        assert_eq!(f_cdf(3, 5, -2.0).unwrap(), 0.0);
        assert_eq!(f_cdf(3, 5, f64::INFINITY).unwrap(), 1.0);
        assert!((f_cdf(3, 5, 1e12).unwrap() - 1.0).abs() < 1e-9);
        assert!(f_cdf(0, 5, 1.0).is_err());
        assert!(f_cdf(3, 5, f64::NAN).is_err());
    }

    #[test]
    fn f_cdf_matches_reference_implementation() {
        for &d1 in &[1usize, 2, 3, 7, 10, 64] {
            for &d2 in &[1usize, 2, 3, 7, 10, 64] {
                let dist = FisherSnedecor::new(d1 as f64, d2 as f64).unwrap();
                for &x in &[0.1, 0.5, 1.0, 2.0, 10.0] {
                    let ours = f_cdf(d1, d2, x).unwrap();
                    let reference = dist.cdf(x);
                    assert!(
                        (ours - reference).abs() < 1e-10,
                        "F_{{{d1},{d2}}}({x}): {ours} vs {reference}"
                    );
                }
            }
        }
    }

    #[test]
    fn f_cdf_is_monotone_in_x() {
        let mut prev = 0.0;
        for i in 1..200 {
            let x = i as f64 * 0.1;
            let v = f_cdf(1, 8, x).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn single_neuron_line_input_is_a_coin_flip() {
        // d = 1 with equal variances: P[w^2 < v^2] = 1/2 by symmetry.
        let q = ObstructionQuery {
            d: 1,
            l: 1,
            scheme: InitScheme::Normal {
                sigma1_sq: 1.0,
                sigma2_sq: 1.0,
            },
        };
        let p = obstruction_probability(&q).unwrap();
        assert!((p - 0.5).abs() < 1e-12, "{p}");
        let q2 = ObstructionQuery { l: 2, ..q };
        let p2 = obstruction_probability(&q2).unwrap();
        assert!((p2 - 0.75).abs() < 1e-12, "{p2}");
    }

    #[test]
    fn wide_fan_in_scaling_makes_traps_rare() {
        let q = ObstructionQuery {
            d: 64,
            l: 64,
            scheme: InitScheme::Kaiming,
        };
        let p = obstruction_probability(&q).unwrap();
        assert!(p < 1e-3, "{p}");
        assert!(p > 0.0);
    }

    #[test]
    fn fan_sum_scaling_is_never_safer_than_fan_in() {
        for d in [1usize, 2, 3] {
            for l in [4usize, 8, 16] {
                let kaiming = obstruction_probability(&ObstructionQuery {
                    d,
                    l,
                    scheme: InitScheme::Kaiming,
                })
                .unwrap();
                let xavier = obstruction_probability(&ObstructionQuery {
                    d,
                    l,
                    scheme: InitScheme::Xavier,
                })
                .unwrap();
                assert!(
                    xavier >= kaiming - 1e-15,
                    "d = {d}, l = {l}: xavier {xavier} < kaiming {kaiming}"
                );
            }
        }
    }

    #[test]
    fn uniform_scheme_has_no_closed_form() {
        let q = ObstructionQuery {
            d: 2,
            l: 2,
            scheme: InitScheme::UniformSymmetric { half_width: 1.0 },
        };
        assert_eq!(obstruction_probability(&q), Err(Error::UnsupportedScheme));
        // But the sampler accepts it.
        assert!(monte_carlo_obstruction(&q, 100, 0).is_ok());
    }

    #[test]
    fn sampled_nets_are_reproducible_and_seed_sensitive() {
        let s = InitScheme::Kaiming;
        let a = sample_init(&s, 3, 2, 4, 99).unwrap();
        let b = sample_init(&s, 3, 2, 4, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_init(&s, 3, 2, 4, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn layer_streams_are_independent_of_other_layer_shape() {
        // Changing e must not move the first layer's draws.
        let s = InitScheme::Kaiming;
        let a = sample_init(&s, 3, 1, 4, 7).unwrap();
        let b = sample_init(&s, 3, 5, 4, 7).unwrap();
        assert_eq!(a.w1(), b.w1());
    }

    #[test]
    fn sampled_variances_track_the_scheme() {
        let (d, e, l) = (16, 1, 64);
        let p = sample_init(&InitScheme::Kaiming, d, e, l, 42).unwrap();
        let var1 = p.w1().iter().map(|v| v * v).sum::<f64>() / (d * l) as f64;
        assert!((var1 - 2.0 / d as f64).abs() < 0.2 / d as f64, "{var1}");
        let var2 = p.w2().iter().map(|v| v * v).sum::<f64>() / (e * l) as f64;
        assert!((var2 - 2.0 / l as f64).abs() < 0.8 / l as f64, "{var2}");

        let u = sample_init(
            &InitScheme::UniformSymmetric { half_width: 0.5 },
            d,
            e,
            l,
            42,
        )
        .unwrap();
        assert!(u.w1().iter().all(|v| v.abs() < 0.5));
        let var_u = u.w1().iter().map(|v| v * v).sum::<f64>() / (d * l) as f64;
        assert!((var_u - 0.25 / 3.0).abs() < 0.01, "{var_u}");
    }

    #[test]
    fn monte_carlo_agrees_with_the_closed_form() {
        let q = ObstructionQuery {
            d: 2,
            l: 4,
            scheme: InitScheme::Kaiming,
        };
        let exact = obstruction_probability(&q).unwrap();
        let mc = monte_carlo_obstruction(&q, 20_000, 1234).unwrap();
        assert!(
            (mc.estimate - exact).abs() <= 3.0 * mc.std_error,
            "exact {exact}, estimate {} +- {}",
            mc.estimate,
            mc.std_error
        );
    }

    #[test]
    fn trials_are_stream_sharded() {
        let q = ObstructionQuery {
            d: 2,
            l: 3,
            scheme: InitScheme::Kaiming,
        };
        let whole = monte_carlo_obstruction(&q, 500, 9).unwrap();
        let manual = (0..500u64)
            .filter(|&t| obstruction_trial(&q, 9, t).unwrap())
            .count();
        assert_eq!(whole.estimate, manual as f64 / 500.0);
    }

    #[test]
    fn grid_rows_and_columns_follow_the_axes() {
        let d_values = [1usize, 2, 4];
        let l_values = [1usize, 8];
        let grid = prob_grid(&d_values, &l_values, &InitScheme::Kaiming).unwrap();
        assert_eq!(grid.dim(), (3, 2));
        for (i, &d) in d_values.iter().enumerate() {
            for (j, &l) in l_values.iter().enumerate() {
                let p = obstruction_probability(&ObstructionQuery {
                    d,
                    l,
                    scheme: InitScheme::Kaiming,
                })
                .unwrap();
                assert_eq!(grid[(i, j)], p);
            }
        }
        // With fixed entry variances, more neurons mean more chances to
        // trap one. (Not true of the fan-in schemes, whose per-neuron odds
        // improve with width.)
        let fixed = InitScheme::Normal {
            sigma1_sq: 1.0,
            sigma2_sq: 1.0,
        };
        let grid = prob_grid(&d_values, &l_values, &fixed).unwrap();
        for i in 0..3 {
            assert!(grid[(i, 1)] >= grid[(i, 0)]);
        }
    }
}
