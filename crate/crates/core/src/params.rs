//! Model parameters, time discretization, and the key-value parameter file.

use std::fmt::Write as _;

use crate::error::{invalid, parse_err, Result};

/// Upper clamp on any per-step probability derived from a rate.
pub const PROBABILITY_CEILING: f64 = 1.0 - 1e-9;

pub const SECONDS_PER_DAY: u32 = 86_400;

/// Integer time-step index. All graph time is kept in steps.
pub type Step = u32;

/// Converts between seconds (I/O boundary) and integer steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimeGrid {
    step_seconds: u32,
}

impl TimeGrid {
    pub fn new(step_seconds: u32) -> Result<Self> {
        if step_seconds == 0 {
            return Err(invalid("step_seconds", "must be positive"));
        }
        Ok(Self { step_seconds })
    }

    pub fn step_seconds(&self) -> u32 {
        self.step_seconds
    }

    /// Seconds to steps, rounding up; an observed 70 s period occupies one step.
    pub fn ceil_steps(&self, seconds: f64) -> u64 {
        (seconds / f64::from(self.step_seconds)).ceil().max(0.0) as u64
    }

    /// Like [`ceil_steps`](Self::ceil_steps) but never below one step.
    pub fn duration_steps(&self, seconds: f64) -> u64 {
        self.ceil_steps(seconds).max(1)
    }

    pub fn nearest_steps(&self, seconds: f64) -> u64 {
        (seconds / f64::from(self.step_seconds)).round().max(0.0) as u64
    }

    pub fn seconds(&self, steps: u64) -> f64 {
        steps as f64 * f64::from(self.step_seconds)
    }

    /// Steps per day, if the step divides a day evenly.
    pub fn steps_per_day(&self) -> Option<u32> {
        SECONDS_PER_DAY.is_multiple_of(self.step_seconds).then(|| SECONDS_PER_DAY / self.step_seconds)
    }
}

/// Linear rate-to-probability conversion, `rate * step`, clamped below one.
pub fn per_step_probability(rate_per_sec: f64, step_seconds: u32) -> Result<f64> {
    if step_seconds == 0 {
        return Err(invalid("step_seconds", "must be positive"));
    }
    if !(rate_per_sec > 0.0) || !rate_per_sec.is_finite() {
        return Err(invalid("rate", format!("must be positive, got {rate_per_sec}")));
    }
    let p = rate_per_sec * f64::from(step_seconds);
    if p >= 1.0 {
        return Err(invalid(
            "rate",
            format!("per-step probability {p} is not below 1"),
        ));
    }
    Ok(p.min(PROBABILITY_CEILING))
}

/// The full fitted parameter set. Rates are per second.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdtParams {
    pub rho_per_sec: f64,
    pub q_per_sec: f64,
    pub alpha: f64,
    pub xi: f64,
    pub psi: f64,
    pub p_c_per_sec: f64,
    pub p_b_per_sec: f64,
    pub delta_sec: f64,
    pub eta: f64,
    pub step_seconds: u32,
}

impl SpdtParams {
    /// Values fitted to the Shanghai location-update corpus, 5-minute steps.
    pub fn paper_fitted() -> Self {
        Self {
            rho_per_sec: 2.83e-4,
            q_per_sec: 2.23e-5,
            alpha: 2.98,
            xi: 0.25,
            psi: 0.999,
            p_c_per_sec: 9.33e-5,
            p_b_per_sec: 2.83e-4,
            delta_sec: 10_800.0,
            eta: 1.0,
            step_seconds: 300,
        }
    }

    pub fn validate(self) -> Result<Self> {
        validate_params(self)
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            step_seconds: self.step_seconds,
        }
    }

    /// Per-step quantities used by the generator. Assumes a validated set.
    pub fn per_step(&self) -> Result<StepParams> {
        let s = self.step_seconds;
        Ok(StepParams {
            rho: per_step_probability(self.rho_per_sec, s)?,
            q: per_step_probability(self.q_per_sec, s)?,
            p_c: per_step_probability(self.p_c_per_sec, s)?,
            p_b: per_step_probability(self.p_b_per_sec, s)?,
            delta_steps: self.grid().nearest_steps(self.delta_sec) as Step,
            alpha: self.alpha,
            xi: self.xi,
            psi: self.psi,
            eta: self.eta,
        })
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    fn fields(&self) -> [(&'static str, String); 10] {
        [
            ("rho_per_sec", self.rho_per_sec.to_string()),
            ("q_per_sec", self.q_per_sec.to_string()),
            ("alpha", self.alpha.to_string()),
            ("xi", self.xi.to_string()),
            ("psi", self.psi.to_string()),
            ("p_c_per_sec", self.p_c_per_sec.to_string()),
            ("p_b_per_sec", self.p_b_per_sec.to_string()),
            ("delta_sec", self.delta_sec.to_string()),
            ("eta", self.eta.to_string()),
            ("step_seconds", self.step_seconds.to_string()),
        ]
    }

    /// Parses the `key = value` format. Every field must appear exactly once;
    /// unknown keys are rejected. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut slots: [Option<String>; 10] = Default::default();
        const KEYS: [&str; 10] = [
            "rho_per_sec",
            "q_per_sec",
            "alpha",
            "xi",
            "psi",
            "p_c_per_sec",
            "p_b_per_sec",
            "delta_sec",
            "eta",
            "step_seconds",
        ];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(i + 1, "expected `key = value`"))?;
            let key = key.trim();
            let idx = KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| parse_err(i + 1, format!("unknown key `{key}`")))?;
            if slots[idx].replace(value.trim().to_string()).is_some() {
                return Err(parse_err(i + 1, format!("duplicate key `{key}`")));
            }
        }
        let take = |idx: usize| -> Result<f64> {
            let v = slots[idx]
                .as_deref()
                .ok_or_else(|| parse_err(0, format!("missing key `{}`", KEYS[idx])))?;
            v.parse::<f64>()
                .map_err(|e| parse_err(0, format!("`{}`: {e}", KEYS[idx])))
        };
        let step = slots[9]
            .as_deref()
            .ok_or_else(|| parse_err(0, "missing key `step_seconds`"))?
            .parse::<u32>()
            .map_err(|e| parse_err(0, format!("`step_seconds`: {e}")))?;
        Self {
            rho_per_sec: take(0)?,
            q_per_sec: take(1)?,
            alpha: take(2)?,
            xi: take(3)?,
            psi: take(4)?,
            p_c_per_sec: take(5)?,
            p_b_per_sec: take(6)?,
            delta_sec: take(7)?,
            eta: take(8)?,
            step_seconds: step,
        }
        .validate()
    }
}

/// Per-step probabilities and integer window derived from [`SpdtParams`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepParams {
    pub rho: f64,
    pub q: f64,
    pub p_c: f64,
    pub p_b: f64,
    pub delta_steps: Step,
    pub alpha: f64,
    pub xi: f64,
    pub psi: f64,
    pub eta: f64,
}

impl StepParams {
    /// Equilibrium probability of being active, `q / (q + rho)`.
    pub fn active_fraction(&self) -> f64 {
        self.q / (self.q + self.rho)
    }

    /// Per-step probability of an inactive-to-active transition.
    pub fn activation_probability(&self) -> f64 {
        self.rho * self.q / (self.q + self.rho)
    }
}

pub fn validate_params(p: SpdtParams) -> Result<SpdtParams> {
    if p.step_seconds == 0 {
        return Err(invalid("step_seconds", "must be positive"));
    }
    let rates = [
        ("rho_per_sec", p.rho_per_sec),
        ("q_per_sec", p.q_per_sec),
        ("p_c_per_sec", p.p_c_per_sec),
        ("p_b_per_sec", p.p_b_per_sec),
    ];
    for (field, rate) in rates {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(invalid(field, format!("rate must be positive, got {rate}")));
        }
        let prob = rate * f64::from(p.step_seconds);
        if prob >= 1.0 {
            return Err(invalid(
                field,
                format!("per-step probability {prob} is not below 1"),
            ));
        }
    }
    if !(p.alpha > 0.0) || !p.alpha.is_finite() {
        return Err(invalid("alpha", "must be positive"));
    }
    if !(p.xi > 0.0) {
        return Err(invalid("xi", "lambda lower bound must be positive"));
    }
    if !(p.psi <= 1.0) {
        return Err(invalid("psi", "lambda upper bound must not exceed 1"));
    }
    if !(p.xi < p.psi) {
        return Err(invalid("xi", "must be below psi"));
    }
    if !(p.delta_sec >= 0.0) || !p.delta_sec.is_finite() {
        return Err(invalid("delta_sec", "must be non-negative"));
    }
    if !(p.eta > 0.0) {
        return Err(invalid("eta", "must be positive"));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::SpdtError;

    fn field_of(err: SpdtError) -> &'static str {
        match err {
            SpdtError::InvalidParam { field, .. } => field,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn paper_set_is_valid() {
        assert!(validate_params(SpdtParams::paper_fitted()).is_ok());
    }

    #[test]
    fn zero_xi_rejected() {
        let p = SpdtParams {
            xi: 0.0,
            ..SpdtParams::paper_fitted()
        };
        assert_eq!(field_of(validate_params(p).unwrap_err()), "xi");
    }

    #[test]
    fn rho_probability_at_one_rejected() {
        let p = SpdtParams {
            rho_per_sec: 1.0 / 300.0,
            ..SpdtParams::paper_fitted()
        };
        assert_eq!(field_of(validate_params(p).unwrap_err()), "rho_per_sec");
    }

    #[test]
    fn per_step_conversion() {
        let rho = per_step_probability(2.83e-4, 300).unwrap();
        assert!((rho - 0.0849).abs() < 1e-12);
        assert!((rho - 0.085).abs() < 1e-3);
        let q = per_step_probability(2.23e-5, 300).unwrap();
        assert!((q - 6.69e-3).abs() < 1e-15);
        assert!(per_step_probability(2.83e-4, 0).is_err());
        assert!(per_step_probability(1.0, 1).is_err());
    }

    #[test]
    fn per_step_paper_values() {
        let sp = SpdtParams::paper_fitted().per_step().unwrap();
        assert_eq!(sp.delta_steps, 36);
        assert!((sp.active_fraction() - 0.0730).abs() < 5e-5);
    }

    #[test]
    fn param_file_round_trip() {
        let p = SpdtParams::paper_fitted();
        let text = p.to_file_string();
        assert_eq!(SpdtParams::parse(&text).unwrap(), p);
    }

    #[test]
    fn param_file_rejects_unknown_and_missing() {
        let mut text = SpdtParams::paper_fitted().to_file_string();
        text.push_str("beta = 2\n");
        assert!(matches!(
            SpdtParams::parse(&text),
            Err(SpdtError::Parse { .. })
        ));
        let missing: String = SpdtParams::paper_fitted()
            .to_file_string()
            .lines()
            .filter(|l| !l.starts_with("eta"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(SpdtParams::parse(&missing).is_err());
    }
}
