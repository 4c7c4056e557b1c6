//! Samplers and analytic mass/density functions for the five co-location
//! laws: active/inactive durations, activation degree, link creation delay,
//! and link duration.
//!
//! Every sampler is an inverse-CDF transform of exactly one uniform, so a
//! stream's draw index fully determines each value.

use rand::Rng;

use crate::error::{invalid, Result};

#[inline]
fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

fn check_open_unit(field: &'static str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must lie in (0, 1), got {p}")))
    }
}

/// `P(t) = p (1 - p)^(t - 1)` on `{1, 2, ...}`.
#[derive(Clone, Copy, Debug)]
pub struct Geometric {
    p: f64,
    ln_q: f64,
}

impl Geometric {
    pub fn new(p: f64) -> Result<Self> {
        check_open_unit("p", p)?;
        Ok(Self {
            p,
            ln_q: (-p).ln_1p(),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn pmf(&self, t: u64) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.p * ((t - 1) as f64 * self.ln_q).exp()
        }
    }

    pub fn mean(&self) -> f64 {
        1.0 / self.p
    }

    /// Maps `u` in `[0, 1)` to a draw.
    pub fn quantile(&self, u: f64) -> u64 {
        let x = (-u).ln_1p() / self.ln_q;
        1 + x.floor() as u64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.quantile(uniform(rng))
    }
}

pub fn sample_geometric<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<u64> {
    Ok(Geometric::new(p)?.sample(rng))
}

/// Geometric delay on `{0, ..., t_max}`:
/// `P(t) = p (1 - p)^t / (1 - (1 - p)^(t_max + 1))`.
#[derive(Clone, Copy, Debug)]
pub struct TruncatedGeometric {
    p: f64,
    t_max: u64,
    ln_q: f64,
    norm: f64,
}

impl TruncatedGeometric {
    pub fn new(p: f64, t_max: u64) -> Result<Self> {
        check_open_unit("p_c", p)?;
        let ln_q = (-p).ln_1p();
        Ok(Self {
            p,
            t_max,
            ln_q,
            norm: -((t_max + 1) as f64 * ln_q).exp_m1(),
        })
    }

    pub fn t_max(&self) -> u64 {
        self.t_max
    }

    pub fn pmf(&self, t: u64) -> f64 {
        if t > self.t_max {
            0.0
        } else {
            self.p * (t as f64 * self.ln_q).exp() / self.norm
        }
    }

    pub fn cdf(&self, t: u64) -> f64 {
        if t >= self.t_max {
            1.0
        } else {
            -((t + 1) as f64 * self.ln_q).exp_m1() / self.norm
        }
    }

    pub fn quantile(&self, u: f64) -> u64 {
        let y = u * self.norm;
        let x = (-y).ln_1p() / self.ln_q;
        (x.floor() as u64).min(self.t_max)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.quantile(uniform(rng))
    }
}

pub fn sample_truncated_geometric<R: Rng + ?Sized>(
    p_c: f64,
    t_max: u64,
    rng: &mut R,
) -> Result<u64> {
    Ok(TruncatedGeometric::new(p_c, t_max)?.sample(rng))
}

/// Power law `f(x) = alpha x^-(alpha+1) / (xi^-alpha - psi^-alpha)` on `[xi, psi]`.
#[derive(Clone, Copy, Debug)]
pub struct BoundedPowerLaw {
    alpha: f64,
    xi: f64,
    psi: f64,
    lo_term: f64,
    hi_term: f64,
}

impl BoundedPowerLaw {
    pub fn new(alpha: f64, xi: f64, psi: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(invalid("alpha", format!("must be positive, got {alpha}")));
        }
        if !(xi > 0.0 && xi < psi && psi <= 1.0) {
            return Err(invalid(
                "xi",
                format!("bounds must satisfy 0 < xi < psi <= 1, got xi={xi}, psi={psi}"),
            ));
        }
        Ok(Self {
            alpha,
            xi,
            psi,
            lo_term: xi.powf(-alpha),
            hi_term: psi.powf(-alpha),
        })
    }

    pub fn density(&self, x: f64) -> f64 {
        if x < self.xi || x > self.psi {
            0.0
        } else {
            self.alpha * x.powf(-(self.alpha + 1.0)) / (self.lo_term - self.hi_term)
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.xi {
            0.0
        } else if x >= self.psi {
            1.0
        } else {
            (self.lo_term - x.powf(-self.alpha)) / (self.lo_term - self.hi_term)
        }
    }

    pub fn mean(&self) -> f64 {
        let a = self.alpha;
        let z = self.lo_term - self.hi_term;
        if (a - 1.0).abs() < 1e-12 {
            a / z * (self.psi / self.xi).ln()
        } else {
            a / z * (self.xi.powf(1.0 - a) - self.psi.powf(1.0 - a)) / (a - 1.0)
        }
    }

    /// `u = 0` maps to `xi`, `u = 1` to `psi`.
    pub fn quantile(&self, u: f64) -> f64 {
        let x = (self.lo_term - u * (self.lo_term - self.hi_term)).powf(-1.0 / self.alpha);
        x.clamp(self.xi, self.psi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(uniform(rng))
    }
}

pub fn sample_bounded_power_law<R: Rng + ?Sized>(
    alpha: f64,
    xi: f64,
    psi: f64,
    rng: &mut R,
) -> Result<f64> {
    Ok(BoundedPowerLaw::new(alpha, xi, psi)?.sample(rng))
}

/// `P(d = k) = (1 - lambda) lambda^(k - 1)` on `{1, 2, ...}`.
#[derive(Clone, Copy, Debug)]
pub struct ActivationDegree {
    lambda: f64,
    ln_lambda: f64,
}

impl ActivationDegree {
    pub fn new(lambda: f64) -> Result<Self> {
        check_open_unit("lambda", lambda)?;
        Ok(Self {
            lambda,
            ln_lambda: lambda.ln(),
        })
    }

    pub fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            0.0
        } else {
            (1.0 - self.lambda) * ((k - 1) as f64 * self.ln_lambda).exp()
        }
    }

    pub fn mean(&self) -> f64 {
        1.0 / (1.0 - self.lambda)
    }

    pub fn quantile(&self, u: f64) -> u64 {
        let x = (-u).ln_1p() / self.ln_lambda;
        1 + x.floor() as u64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.quantile(uniform(rng))
    }
}

pub fn sample_activation_degree<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<u64> {
    Ok(ActivationDegree::new(lambda)?.sample(rng))
}

const SINGULARITY_EPS: f64 = 1e-9;

/// `(psi^x - xi^x) / x`, continuous through `x = 0`.
fn power_gap(x: f64, ln_xi: f64, ln_psi: f64) -> f64 {
    if x.abs() < SINGULARITY_EPS {
        (ln_psi - ln_xi) + 0.5 * x * (ln_psi * ln_psi - ln_xi * ln_xi)
    } else {
        ((x * ln_psi).exp_m1() - (x * ln_xi).exp_m1()) / x
    }
}

/// Degree law obtained by mixing the activation degree over a power-law
/// lambda on `[xi, psi]`. Caller guarantees valid arguments.
pub(crate) fn bounded_mixture_pmf_unchecked(d: u64, alpha: f64, xi: f64, psi: f64) -> f64 {
    let ln_xi = xi.ln();
    let ln_psi = psi.ln();
    let norm = alpha / (xi.powf(-alpha) - psi.powf(-alpha));
    let d = d as f64;
    let p = norm * (power_gap(d - alpha - 1.0, ln_xi, ln_psi) - power_gap(d - alpha, ln_xi, ln_psi));
    p.max(0.0)
}

/// Closed-form degree distribution of the mixture with `psi = 1`:
///
/// `Pr(d) = alpha / (xi^-alpha - 1) * [(1 - xi^(d-alpha-1)) / (d-alpha-1) - (1 - xi^(d-alpha)) / (d-alpha)]`
pub fn mixture_degree_pmf(d: u64, alpha: f64, xi: f64) -> Result<f64> {
    bounded_mixture_degree_pmf(d, alpha, xi, 1.0)
}

/// Same mixture with a finite upper bound `psi <= 1` on lambda, which is the
/// law the generator actually samples from.
pub fn bounded_mixture_degree_pmf(d: u64, alpha: f64, xi: f64, psi: f64) -> Result<f64> {
    if d < 1 {
        return Err(invalid("d", "degree must be at least 1"));
    }
    BoundedPowerLaw::new(alpha, xi, psi)?;
    Ok(bounded_mixture_pmf_unchecked(d, alpha, xi, psi))
}
