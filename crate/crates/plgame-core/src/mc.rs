//! Monte Carlo oracles for the kernel moments and the averaging operator.
//!
//! These are independent of the closed forms and the quadrature: uniform
//! rejection sampling in the unit ball from its bounding cube, plain or
//! ratio estimators with delta-method standard errors. Tests use them to
//! validate every closed-form constant and the quadrature rules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Which kernel moment to estimate. All directional quantities are invariant
/// under the choice of the unit direction, so the oracle fixes z = e1 (and,
/// for the shell fraction, the auxiliary half-space direction x = e2).
#[derive(Debug, Clone, PartialEq)]
pub enum MomentKind {
    /// Plain mean of `(h1)_+^{p-2}`: the normalization constant gamma.
    Gamma,
    /// Ratio mean of `(h1)_+^{p-1}` over `(h1)_+^{p-2}`: gamma_{N,p+1}/gamma_{N,p}.
    FirstMoment,
    /// Ratio mean of `|h1|^p` over `|h1|^{p-2}`: (p-1)/(N+p).
    AxialP,
    /// Ratio mean of `|h1|^{p-2} h2^2` over `|h1|^{p-2}`: 1/(N+p).
    Cross,
    /// Ratio mean of `|h|^2 |h1|^{p-2}` over `|h1|^{p-2}`: (N+p-2)/(N+p).
    Radial,
    /// Kernel mass of the half-shell `{1/2 <= |h| < 1, x.h >= 0}`:
    /// 1/2 - 2^{-(N+p-1)}.
    Theta,
    /// Plain ball average of `prod |h_i|^{a_i}`.
    Monomial(Vec<f64>),
}

/// Estimate plus its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl McEstimate {
    /// |estimate - reference| measured in standard errors.
    pub fn sigmas_from(&self, reference: f64) -> f64 {
        (self.estimate - reference).abs() / self.std_error.max(1e-300)
    }
}

const MIN_SAMPLES: usize = 10_000;

/// Uniform point in the open unit ball by rejection from the bounding cube.
pub fn sample_unit_ball<R: Rng>(dim: usize, rng: &mut R) -> Point {
    loop {
        let mut h = [0.0; 3];
        let mut n2 = 0.0;
        for c in h.iter_mut().take(dim) {
            *c = rng.gen_range(-1.0..1.0);
            n2 += *c * *c;
        }
        if n2 < 1.0 {
            return h;
        }
    }
}

/// Monte Carlo estimate of one kernel moment.
pub fn mc_moment_oracle(
    dim: usize,
    p: f64,
    kind: &MomentKind,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_SAMPLES} samples, got {samples}"
        )));
    }
    if !(p > 1.0) {
        return Err(Error::InvalidExponent(format!("p must exceed 1, got {p}")));
    }
    if let MomentKind::Monomial(exps) = kind {
        if exps.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "monomial oracle needs {dim} exponents, got {}",
                exps.len()
            )));
        }
        if exps.iter().any(|a| *a <= -1.0) {
            return Err(Error::InvalidExponent(
                "monomial exponents must be > -1".into(),
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        MomentKind::Gamma => Ok(mean_estimate(samples, || {
            let h = sample_unit_ball(dim, &mut rng);
            plus_pow(h[0], p - 2.0)
        })),
        MomentKind::Monomial(exps) => Ok(mean_estimate(samples, || {
            let h = sample_unit_ball(dim, &mut rng);
            let mut v = 1.0;
            for (i, a) in exps.iter().enumerate() {
                v *= h[i].abs().powf(*a);
            }
            v
        })),
        MomentKind::FirstMoment => Ok(ratio_estimate(samples, || {
            let h = sample_unit_ball(dim, &mut rng);
            (plus_pow(h[0], p - 1.0), plus_pow(h[0], p - 2.0))
        })),
        MomentKind::AxialP => Ok(ratio_estimate(samples, || {
            let h = sample_unit_ball(dim, &mut rng);
            let w = h[0].abs().powf(p - 2.0);
            (h[0].abs().powf(p), w)
        })),
        MomentKind::Cross => Ok(ratio_estimate(samples, || {
            let h = sample_unit_ball(dim, &mut rng);
            let w = h[0].abs().powf(p - 2.0);
            (w * h[1] * h[1], w)
        })),
        MomentKind::Radial => Ok(ratio_estimate(samples, || {
            let h = sample_unit_ball(dim, &mut rng);
            let w = h[0].abs().powf(p - 2.0);
            let r2 = h[..dim].iter().map(|c| c * c).sum::<f64>();
            (w * r2, w)
        })),
        MomentKind::Theta => Ok(ratio_estimate(samples, || {
            let h = sample_unit_ball(dim, &mut rng);
            let w = h[0].abs().powf(p - 2.0);
            let r2 = h[..dim].iter().map(|c| c * c).sum::<f64>();
            let in_shell = r2 >= 0.25 && h[1] >= 0.0;
            (if in_shell { w } else { 0.0 }, w)
        })),
    }
}

/// Monte Carlo estimate of the kernel-weighted average of `u` over the
/// eps-ball at `x` in direction `z`, i.e. the quantity the quadrature rule
/// approximates. Ratio estimator over uniform ball samples.
pub fn mc_average_oracle<F: FnMut(&[f64]) -> f64>(
    mut u: F,
    x: &Point,
    z: &Point,
    dim: usize,
    p: f64,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_SAMPLES} samples, got {samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ratio_estimate(samples, || {
        let h = sample_unit_ball(dim, &mut rng);
        let t = (0..dim).map(|i| z[i] * h[i]).sum::<f64>();
        let w = plus_pow(t, p - 2.0);
        if w == 0.0 {
            return (0.0, 0.0);
        }
        let mut pt = [0.0; 3];
        for i in 0..dim {
            pt[i] = x[i] + eps * h[i];
        }
        (w * u(&pt[..dim]), w)
    }))
}

fn plus_pow(t: f64, a: f64) -> f64 {
    if t > 0.0 {
        t.powf(a)
    } else {
        0.0
    }
}

fn mean_estimate<F: FnMut() -> f64>(n: usize, mut draw: F) -> McEstimate {
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..n {
        let v = draw();
        sum += v;
        sum2 += v * v;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum2 / nf - mean * mean).max(0.0);
    McEstimate {
        estimate: mean,
        std_error: (var / nf).sqrt(),
        samples: n,
    }
}

/// Ratio estimator X̄/Ȳ with the delta-method standard error.
fn ratio_estimate<F: FnMut() -> (f64, f64)>(n: usize, mut draw: F) -> McEstimate {
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let (x, y) = draw();
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let nf = n as f64;
    let (mx, my) = (sx / nf, sy / nf);
    let vx = (sxx / nf - mx * mx).max(0.0);
    let vy = (syy / nf - my * my).max(0.0);
    let cxy = sxy / nf - mx * my;
    let r = mx / my;
    let var = (vx - 2.0 * r * cxy + r * r * vy).max(0.0) / (my * my);
    McEstimate {
        estimate: r,
        std_error: (var / nf).sqrt(),
        samples: n,
    }
}
