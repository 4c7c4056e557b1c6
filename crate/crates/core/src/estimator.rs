//! Maximum-likelihood fitting of the model parameters from co-location
//! interaction samples (CIP).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::distributions::bounded_mixture_pmf_unchecked;
use crate::error::{parse_err, Result, SpdtError};
use crate::graph::TemporalGraph;
use crate::params::{SpdtParams, TimeGrid, SECONDS_PER_DAY};

pub const DEFAULT_PSI: f64 = 0.999;
pub const DEFAULT_ETA: f64 = 1.0;

/// Raw interaction samples, in seconds where applicable.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CipSamples {
    pub active_durations: Vec<f64>,
    /// Activations per day of each user, averaged over the observation.
    pub activation_frequencies: Vec<f64>,
    pub degrees: Vec<u64>,
    /// `(delay, paired active duration)`.
    pub creation_delays: Vec<(f64, f64)>,
    pub link_durations: Vec<f64>,
    pub observation_days: f64,
    pub delta_sec: f64,
}

impl CipSamples {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(parse_err(0, format!("invalid CIP sample: {what}")));
        if self.active_durations.iter().any(|&t| !(t > 0.0)) {
            return bad("active duration must be positive");
        }
        if self.link_durations.iter().any(|&t| !(t > 0.0)) {
            return bad("link duration must be positive");
        }
        if self.activation_frequencies.iter().any(|&h| !(h >= 0.0)) {
            return bad("frequency must be non-negative");
        }
        if self.degrees.contains(&0) {
            return bad("degree must be at least 1");
        }
        if self
            .creation_delays
            .iter()
            .any(|&(tc, ta)| !(tc >= 0.0) || tc > ta + self.delta_sec)
        {
            return bad("delay outside [0, duration + delta]");
        }
        Ok(())
    }

    /// Reads the samples a generator produced back out of a graph.
    pub fn from_graph(g: &TemporalGraph) -> Self {
        let step = f64::from(g.step_seconds);
        let mut per_host = vec![0u32; g.n_nodes as usize];
        for c in &g.copies {
            per_host[c.host as usize] += 1;
        }
        let days = f64::from(g.horizon) * step / f64::from(SECONDS_PER_DAY);
        let degrees = g
            .copy_degrees()
            .into_iter()
            .filter(|&d| d > 0)
            .map(u64::from)
            .collect();
        CipSamples {
            active_durations: g
                .copies
                .iter()
                .map(|c| f64::from(c.duration()) * step)
                .collect(),
            activation_frequencies: per_host.iter().map(|&n| f64::from(n) / days).collect(),
            degrees,
            creation_delays: g
                .links
                .iter()
                .map(|l| {
                    let c = g.copy_of(l);
                    (
                        f64::from(l.delay(c)) * step,
                        f64::from(c.duration()) * step,
                    )
                })
                .collect(),
            link_durations: g
                .links
                .iter()
                .map(|l| f64::from(l.duration()) * step)
                .collect(),
            observation_days: days,
            delta_sec: f64::from(g.delta_steps) * step,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#observation_days={}", self.observation_days)?;
        writeln!(w, "#delta_sec={}", self.delta_sec)?;
        for t in &self.active_durations {
            writeln!(w, "TA {t}")?;
        }
        for h in &self.activation_frequencies {
            writeln!(w, "H {h}")?;
        }
        for d in &self.degrees {
            writeln!(w, "D {d}")?;
        }
        for (tc, ta) in &self.creation_delays {
            writeln!(w, "TC {tc} {ta}")?;
        }
        for t in &self.link_durations {
            writeln!(w, "TD {t}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut cip = CipSamples::default();
        let mut days = None;
        let mut delta = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let n = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let num = |s: Option<&str>| -> Result<f64> {
                let s = s.ok_or_else(|| parse_err(n, "missing value"))?;
                s.parse::<f64>()
                    .map_err(|e| parse_err(n, format!("`{s}`: {e}")))
            };
            if let Some(rest) = line.strip_prefix('#') {
                match rest.split_once('=') {
                    Some(("observation_days", v)) => days = Some(num(Some(v.trim()))?),
                    Some(("delta_sec", v)) => delta = Some(num(Some(v.trim()))?),
                    _ => return Err(parse_err(n, format!("unknown header `{line}`"))),
                }
                continue;
            }
            let mut parts = line.split_ascii_whitespace();
            let tag = parts.next().unwrap_or("");
            match tag {
                "TA" => cip.active_durations.push(num(parts.next())?),
                "H" => cip.activation_frequencies.push(num(parts.next())?),
                "D" => {
                    let s = parts.next().ok_or_else(|| parse_err(n, "missing value"))?;
                    cip.degrees.push(
                        s.parse::<u64>()
                            .map_err(|e| parse_err(n, format!("`{s}`: {e}")))?,
                    );
                }
                "TC" => {
                    let tc = num(parts.next())?;
                    let ta = num(parts.next())?;
                    cip.creation_delays.push((tc, ta));
                }
                "TD" => cip.link_durations.push(num(parts.next())?),
                other => return Err(parse_err(n, format!("unknown record `{other}`"))),
            }
            if parts.next().is_some() {
                return Err(parse_err(n, "trailing fields"));
            }
        }
        cip.observation_days = days.ok_or_else(|| parse_err(0, "missing #observation_days"))?;
        cip.delta_sec = delta.ok_or_else(|| parse_err(0, "missing #delta_sec"))?;
        cip.validate()?;
        Ok(cip)
    }
}

/// `rho = n / sum(t_a)` over durations already in steps.
pub fn estimate_rho_steps(durations: &[u64]) -> Result<f64> {
    if durations.is_empty() {
        return Err(SpdtError::EmptySample("active durations"));
    }
    let total: u64 = durations.iter().sum();
    Ok(durations.len() as f64 / total as f64)
}

/// Geometric MLE for the active-period law. Returns a per-second rate.
pub fn estimate_rho(active_durations_sec: &[f64], grid: TimeGrid) -> Result<f64> {
    let steps: Vec<u64> = active_durations_sec
        .iter()
        .map(|&t| grid.duration_steps(t))
        .collect();
    Ok(estimate_rho_steps(&steps)? / f64::from(grid.step_seconds()))
}

/// Inverts the Poisson MLE condition `z q rho / (q + rho) = mean(h)`, where
/// each `h` counts activations over `z` steps. All rates per step.
pub fn estimate_q(activation_counts: &[f64], rho_step: f64, z_steps: f64) -> Result<f64> {
    if activation_counts.is_empty() {
        return Err(SpdtError::EmptySample("activation frequencies"));
    }
    let mean = activation_counts.iter().sum::<f64>() / activation_counts.len() as f64;
    let limit = z_steps * rho_step;
    if mean >= limit {
        return Err(SpdtError::InconsistentFrequency {
            mean_frequency: mean,
            limit,
        });
    }
    Ok(rho_step * mean / (limit - mean))
}

/// Outcome of the two-parameter degree-law fit.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub xi: f64,
    pub psi: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// The optimum sits on the edge of the search box.
    pub at_boundary: bool,
}

const ALPHA_RANGE: (f64, f64) = (0.5, 10.0);
const XI_RANGE: (f64, f64) = (0.01, 0.99);
const MAX_ITERATIONS: usize = 500;

/// Degree histogram as `(value, count)` pairs.
fn degree_histogram(degrees: &[u64]) -> Vec<(u64, f64)> {
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for &d in degrees {
        *counts.entry(d).or_default() += 1;
    }
    counts.into_iter().map(|(d, c)| (d, c as f64)).collect()
}

/// Log-likelihood of a degree histogram under the bounded mixture law.
pub fn mixture_log_likelihood(hist: &[(u64, f64)], alpha: f64, xi: f64, psi: f64) -> f64 {
    hist.iter()
        .map(|&(d, c)| {
            let p = bounded_mixture_pmf_unchecked(d, alpha, xi, psi);
            if p > 0.0 {
                c * p.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(y: f64) -> f64 {
    (y / (1.0 - y)).ln()
}

fn to_params(theta: [f64; 2]) -> (f64, f64) {
    (
        ALPHA_RANGE.0 + (ALPHA_RANGE.1 - ALPHA_RANGE.0) * sigmoid(theta[0]),
        XI_RANGE.0 + (XI_RANGE.1 - XI_RANGE.0) * sigmoid(theta[1]),
    )
}

fn to_theta(alpha: f64, xi: f64) -> [f64; 2] {
    [
        logit((alpha - ALPHA_RANGE.0) / (ALPHA_RANGE.1 - ALPHA_RANGE.0)),
        logit((xi - XI_RANGE.0) / (XI_RANGE.1 - XI_RANGE.0)),
    ]
}

struct Objective<'a> {
    hist: &'a [(u64, f64)],
    n: f64,
    psi: f64,
}

impl Objective<'_> {
    /// Mean negative log-likelihood in unconstrained coordinates.
    fn value(&self, theta: [f64; 2]) -> f64 {
        let (a, x) = to_params(theta);
        let ll = mixture_log_likelihood(self.hist, a, x, self.psi);
        if ll.is_finite() {
            -ll / self.n
        } else {
            f64::INFINITY
        }
    }

    fn gradient(&self, theta: [f64; 2]) -> [f64; 2] {
        let h = 1e-6;
        let mut g = [0.0; 2];
        for i in 0..2 {
            let mut hi = theta;
            let mut lo = theta;
            hi[i] += h;
            lo[i] -= h;
            g[i] = (self.value(hi) - self.value(lo)) / (2.0 * h);
        }
        g
    }
}

struct Minimum {
    theta: [f64; 2],
    value: f64,
    iterations: usize,
    converged: bool,
}

/// BFGS with Armijo backtracking in the unconstrained coordinates.
fn bfgs(obj: &Objective<'_>, start: [f64; 2]) -> Minimum {
    let mut x = start;
    let mut f = obj.value(x);
    let mut g = obj.gradient(x);
    let mut h_inv = [[1.0, 0.0], [0.0, 1.0]];
    for it in 1..=MAX_ITERATIONS {
        if g[0].abs().max(g[1].abs()) < 1e-9 {
            return Minimum { theta: x, value: f, iterations: it, converged: true };
        }
        let mut dir = [
            -(h_inv[0][0] * g[0] + h_inv[0][1] * g[1]),
            -(h_inv[1][0] * g[0] + h_inv[1][1] * g[1]),
        ];
        let mut slope = dir[0] * g[0] + dir[1] * g[1];
        if slope >= 0.0 {
            // Lost descent: restart from steepest descent.
            h_inv = [[1.0, 0.0], [0.0, 1.0]];
            dir = [-g[0], -g[1]];
            slope = -(g[0] * g[0] + g[1] * g[1]);
        }
        let mut step = 1.0;
        let (x_new, f_new) = loop {
            let cand = [x[0] + step * dir[0], x[1] + step * dir[1]];
            let fc = obj.value(cand);
            if fc <= f + 1e-4 * step * slope {
                break (cand, fc);
            }
            step *= 0.5;
            if step < 1e-12 {
                break (x, f);
            }
        };
        let improvement = f - f_new;
        if step < 1e-12 || improvement <= 1e-13 * (1.0 + f.abs()) {
            return Minimum { theta: x_new, value: f_new, iterations: it, converged: true };
        }
        let g_new = obj.gradient(x_new);
        let s = [x_new[0] - x[0], x_new[1] - x[1]];
        let y = [g_new[0] - g[0], g_new[1] - g[1]];
        let sy = s[0] * y[0] + s[1] * y[1];
        if sy > 1e-16 {
            let hy = [
                h_inv[0][0] * y[0] + h_inv[0][1] * y[1],
                h_inv[1][0] * y[0] + h_inv[1][1] * y[1],
            ];
            let yhy = y[0] * hy[0] + y[1] * hy[1];
            for i in 0..2 {
                for j in 0..2 {
                    h_inv[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy)
                        - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        x = x_new;
        f = f_new;
        g = g_new;
    }
    Minimum { theta: x, value: f, iterations: MAX_ITERATIONS, converged: false }
}

/// Fits `(alpha, xi)` of the degree mixture with `psi` fixed, by grid-seeded
/// quasi-Newton maximization of the likelihood with three restarts.
pub fn estimate_power_law(degrees: &[u64]) -> Result<PowerLawFit> {
    estimate_power_law_with_psi(degrees, DEFAULT_PSI)
}

pub fn estimate_power_law_with_psi(degrees: &[u64], psi: f64) -> Result<PowerLawFit> {
    if degrees.is_empty() {
        return Err(SpdtError::EmptySample("activation degrees"));
    }
    if degrees.contains(&0) {
        return Err(crate::error::invalid("degrees", "degree must be at least 1"));
    }
    if degrees.len() < 1000 {
        log::warn!(
            "fitting the degree law on only {} samples; estimates will be noisy",
            degrees.len()
        );
    }
    let hist = degree_histogram(degrees);
    let obj = Objective {
        hist: &hist,
        n: degrees.len() as f64,
        psi,
    };
    let mut grid: Vec<(f64, [f64; 2])> = Vec::new();
    for ai in 0..19 {
        for xi_i in 0..19 {
            let alpha = 0.75 + 0.5 * ai as f64;
            let xi = 0.04 + 0.05 * xi_i as f64;
            if xi >= psi {
                continue;
            }
            let theta = to_theta(alpha, xi);
            grid.push((obj.value(theta), theta));
        }
    }
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<Minimum> = None;
    let mut total_iterations = 0;
    for &(_, start) in grid.iter().take(3) {
        let m = bfgs(&obj, start);
        total_iterations += m.iterations;
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let best = best.expect("grid is non-empty");
    let (alpha, xi) = to_params(best.theta);
    if !best.converged {
        return Err(SpdtError::NoConvergence {
            iterations: total_iterations,
            alpha,
            xi,
        });
    }
    let near = |v: f64, (lo, hi): (f64, f64)| (v - lo) < 1e-3 * (hi - lo) || (hi - v) < 1e-3 * (hi - lo);
    Ok(PowerLawFit {
        alpha,
        xi,
        psi,
        log_likelihood: -best.value * obj.n,
        iterations: total_iterations,
        at_boundary: near(alpha, ALPHA_RANGE) || near(xi, XI_RANGE),
    })
}

/// Sufficient statistics for the creation-probability likelihood.
#[derive(Clone, Debug)]
pub struct DelaySamples {
    m: f64,
    sum_delay: f64,
    /// Support maximum `t_a + delta` with multiplicities.
    windows: Vec<(u64, f64)>,
}

impl DelaySamples {
    /// `pairs` holds `(delay, active duration)` in steps.
    pub fn new(pairs: &[(u64, u64)], delta_steps: u64) -> Result<Self> {
        if pairs.is_empty() {
            return Err(SpdtError::EmptySample("creation delays"));
        }
        let mut windows: BTreeMap<u64, u64> = BTreeMap::new();
        let mut sum_delay = 0.0;
        for &(tc, ta) in pairs {
            let t_max = ta + delta_steps;
            if tc > t_max {
                return Err(crate::error::invalid(
                    "creation_delays",
                    format!("delay {tc} exceeds window {t_max}"),
                ));
            }
            sum_delay += tc as f64;
            *windows.entry(t_max).or_default() += 1;
        }
        Ok(Self {
            m: pairs.len() as f64,
            sum_delay,
            windows: windows.into_iter().map(|(t, c)| (t, c as f64)).collect(),
        })
    }

    /// Derivative of the truncated-geometric log-likelihood in `p`.
    pub fn score(&self, p: f64) -> f64 {
        let ln_q = (-p).ln_1p();
        let trunc: f64 = self
            .windows
            .iter()
            .map(|&(t_max, c)| {
                let k = (t_max + 1) as f64;
                let tail = (t_max as f64 * ln_q).exp();
                let norm = -(k * ln_q).exp_m1();
                c * k * tail / norm
            })
            .sum();
        self.m / p - self.sum_delay / (1.0 - p) - trunc
    }
}

/// Result of the link-creation fit, per step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcFit {
    pub p_c: f64,
    /// The likelihood increases all the way to the upper bracket.
    pub at_upper_bracket: bool,
}

pub const PC_BRACKET: (f64, f64) = (1e-8, 1.0 - 1e-8);

/// Solves the score equation for the per-step creation probability.
pub fn estimate_pc(samples: &DelaySamples) -> Result<PcFit> {
    let (mut lo, mut hi) = PC_BRACKET;
    let s_lo = samples.score(lo);
    let s_hi = samples.score(hi);
    if s_hi >= 0.0 {
        return Ok(PcFit {
            p_c: hi,
            at_upper_bracket: true,
        });
    }
    if !(s_lo > 0.0) {
        return Err(SpdtError::NoSignChange { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if samples.score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(PcFit {
        p_c: 0.5 * (lo + hi),
        at_upper_bracket: false,
    })
}

/// Everything `fit_all` learned, including sample sizes.
#[derive(Clone, Debug)]
pub struct FitReport {
    pub params: SpdtParams,
    pub n_active: usize,
    pub n_users: usize,
    pub n_degrees: usize,
    pub n_delays: usize,
    pub n_link_durations: usize,
    pub power_law: PowerLawFit,
    pub pc: PcFit,
}

pub fn fit_report(cip: &CipSamples, step_seconds: u32) -> Result<FitReport> {
    let grid = TimeGrid::new(step_seconds)?;
    if cip.link_durations.is_empty() {
        return Err(SpdtError::EmptySample("link durations"));
    }
    if !(cip.observation_days > 0.0) {
        return Err(crate::error::invalid("observation_days", "must be positive"));
    }
    let step = f64::from(step_seconds);
    let rho_sec = estimate_rho(&cip.active_durations, grid)?;
    let rho_step = rho_sec * step;

    let z = cip.observation_days * f64::from(SECONDS_PER_DAY) / step;
    let counts: Vec<f64> = cip
        .activation_frequencies
        .iter()
        .map(|h| h * cip.observation_days)
        .collect();
    let q_step = estimate_q(&counts, rho_step, z)?;

    let power_law = estimate_power_law(&cip.degrees)?;

    let delta_steps = grid.nearest_steps(cip.delta_sec);
    let pairs: Vec<(u64, u64)> = cip
        .creation_delays
        .iter()
        .map(|&(tc, ta)| {
            let ta = grid.duration_steps(ta);
            (grid.ceil_steps(tc).min(ta + delta_steps), ta)
        })
        .collect();
    let pc = estimate_pc(&DelaySamples::new(&pairs, delta_steps)?)?;

    let params = SpdtParams {
        rho_per_sec: rho_sec,
        q_per_sec: q_step / step,
        alpha: power_law.alpha,
        xi: power_law.xi,
        psi: power_law.psi,
        p_c_per_sec: pc.p_c / step,
        p_b_per_sec: rho_sec,
        delta_sec: cip.delta_sec,
        eta: DEFAULT_ETA,
        step_seconds,
    }
    .validate()?;
    Ok(FitReport {
        params,
        n_active: cip.active_durations.len(),
        n_users: cip.activation_frequencies.len(),
        n_degrees: cip.degrees.len(),
        n_delays: cip.creation_delays.len(),
        n_link_durations: cip.link_durations.len(),
        power_law,
        pc,
    })
}

/// Runs the four estimators and assembles a parameter set with
/// `p_b = rho`, `eta = 1`, and `psi = 0.999`.
pub fn fit_all(cip: &CipSamples, step_seconds: u32) -> Result<SpdtParams> {
    Ok(fit_report(cip, step_seconds)?.params)
}
