//! Airborne exposure along links and the daily SIR process.

use std::io::Write;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::generator::BadnModel;
use crate::graph::{LinkComponent, NodeId, SpdtLink, TemporalGraph};
use crate::params::SECONDS_PER_DAY;
use crate::rng::{domain, RandomSource};

#[derive(Clone, Debug, PartialEq)]
pub struct DiseaseParams {
    /// Infectiousness per PFU.
    pub sigma: f64,
    /// Particle generation rate of an infected host, PFU/s.
    pub g: f64,
    /// Breathing rate, m^3/s.
    pub p_pulmonary: f64,
    /// Proximity volume, m^3.
    pub volume: f64,
    /// Particle removal rate, 1/s.
    pub r: f64,
    pub infectious_days_min: u32,
    pub infectious_days_max: u32,
    pub n_seeds: u32,
    pub horizon_days: u32,
    /// Split a link's exposure across the days it spans instead of charging
    /// it all to the day it starts.
    pub split_at_midnight: bool,
}

impl Default for DiseaseParams {
    fn default() -> Self {
        Self {
            sigma: 0.33,
            g: 0.304,
            p_pulmonary: 7.5e-3 / 60.0,
            volume: 2512.0,
            r: 1.0 / 3600.0,
            infectious_days_min: 3,
            infectious_days_max: 5,
            n_seeds: 500,
            horizon_days: 32,
            split_at_midnight: false,
        }
    }
}

impl DiseaseParams {
    pub fn with_r_per_hour(mut self, r: f64) -> Self {
        self.r = r / 3600.0;
        self
    }

    pub fn validate(self) -> Result<Self> {
        for (field, v) in [
            ("sigma", self.sigma),
            ("g", self.g),
            ("p_pulmonary", self.p_pulmonary),
            ("volume", self.volume),
            ("r", self.r),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(field, format!("must be positive, got {v}")));
            }
        }
        if self.infectious_days_min == 0 {
            return Err(invalid("infectious_days_min", "must be positive"));
        }
        if self.infectious_days_min > self.infectious_days_max {
            return Err(invalid("infectious_days_max", "must not be below the minimum"));
        }
        Ok(self)
    }

    /// `g p / (V r^2)`.
    fn scale(&self) -> f64 {
        self.g * self.p_pulmonary / (self.volume * self.r * self.r)
    }
}

/// Link times in seconds: host presence `[t_s, t_l]`, neighbor presence
/// `[t_s_prime, t_l_prime]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkTimes {
    pub t_s: f64,
    pub t_l: f64,
    pub t_s_prime: f64,
    pub t_l_prime: f64,
}

impl LinkTimes {
    pub fn of(g: &TemporalGraph, link: &SpdtLink) -> Self {
        let c = g.copy_of(link);
        let s = f64::from(g.step_seconds);
        Self {
            t_s: f64::from(c.t_s) * s,
            t_l: f64::from(c.t_l) * s,
            t_s_prime: f64::from(link.t_s_prime) * s,
            t_l_prime: f64::from(link.t_l_prime) * s,
        }
    }

    pub fn component(&self) -> LinkComponent {
        if self.t_l_prime <= self.t_l {
            LinkComponent::DirectOnly
        } else if self.t_s_prime >= self.t_l {
            LinkComponent::IndirectOnly
        } else {
            LinkComponent::Both
        }
    }
}

/// Inhaled dose over the neighbor's stay, closed form of the two-phase
/// well-mixed concentration model.
pub fn link_exposure(lt: LinkTimes, dp: &DiseaseParams) -> Result<f64> {
    if !(dp.r > 0.0) {
        return Err(invalid("r", "particle removal rate must be positive"));
    }
    if !(lt.t_s <= lt.t_l && lt.t_s <= lt.t_s_prime && lt.t_s_prime <= lt.t_l_prime) {
        return Err(invalid("link", format!("inconsistent link times {lt:?}")));
    }
    Ok(closed_form(lt, dp.r) * dp.scale())
}

/// Bracketed term of the closed form, times `r^2 V / (g p)`.
fn closed_form(lt: LinkTimes, r: f64) -> f64 {
    let LinkTimes {
        t_s,
        t_l,
        t_s_prime: a,
        t_l_prime: b,
    } = lt;
    let e = |x: f64| (-r * x).exp();
    let v = match lt.component() {
        // t_i = t_l'; the two t_l terms cancel.
        LinkComponent::DirectOnly => r * (b - a) + e(b - t_s) - e(a - t_s),
        // t_i = t_l
        LinkComponent::Both => r * (t_l - a) + 1.0 - e(b - t_l) + e(b - t_s) - e(a - t_s),
        // t_i = t_s'
        LinkComponent::IndirectOnly => e(a - t_l) - e(b - t_l) + e(b - t_s) - e(a - t_s),
    };
    v.max(0.0)
}

/// Dose inhaled between `from` and `to`, a sub-window of the neighbor's
/// stay, by integrating the concentration directly.
pub fn window_exposure(lt: LinkTimes, from: f64, to: f64, dp: &DiseaseParams) -> f64 {
    let r = dp.r;
    let from = from.max(lt.t_s_prime);
    let to = to.min(lt.t_l_prime);
    if to <= from {
        return 0.0;
    }
    // Integral of r^2 C V / g, taken piecewise around the host's departure.
    let mut total = 0.0;
    if from < lt.t_l {
        let hi = to.min(lt.t_l);
        let u = from - lt.t_s;
        total += r * (hi - from) + (-r * u).exp() * (-r * (hi - from)).exp_m1();
    }
    if to > lt.t_l {
        let lo = from.max(lt.t_l);
        let filled = -(-r * (lt.t_l - lt.t_s)).exp_m1();
        total += filled * (-r * (lo - lt.t_l)).exp() * -(-r * (to - lo)).exp_m1();
    }
    (total * dp.scale()).max(0.0)
}

/// `1 - exp(-sigma E)`, kept strictly below one.
pub fn infection_probability(exposure: f64, sigma: f64) -> Result<f64> {
    if !(exposure >= 0.0) {
        return Err(invalid("exposure", format!("must be non-negative, got {exposure}")));
    }
    if !(sigma >= 0.0) {
        return Err(invalid("sigma", "must be non-negative"));
    }
    Ok(infection_probability_unchecked(exposure, sigma))
}

const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

fn infection_probability_unchecked(exposure: f64, sigma: f64) -> f64 {
    (-(-sigma * exposure).exp_m1()).min(BELOW_ONE)
}

/// Per-day directed contacts with their exposure.
pub trait ContactSource: Sync {
    fn n_nodes(&self) -> u32;
    /// Calls `f(neighbor, exposure)` for each contact `host` seeds on `day`.
    fn for_each_contact(&self, host: NodeId, day: u32, f: &mut dyn FnMut(NodeId, f64));
}

/// Exposures of a temporal graph, indexed by `(host, day)`.
pub struct GraphExposure {
    n_nodes: u32,
    n_days: u32,
    offsets: Vec<usize>,
    entries: Vec<(NodeId, f64)>,
}

impl GraphExposure {
    pub fn build(g: &TemporalGraph, dp: &DiseaseParams) -> Result<Self> {
        if !(dp.r > 0.0) {
            return Err(invalid("r", "particle removal rate must be positive"));
        }
        let day = f64::from(SECONDS_PER_DAY);
        // (day, host, neighbor, exposure), in link order.
        let pieces: Vec<(u32, NodeId, NodeId, f64)> = g
            .links
            .par_iter()
            .flat_map_iter(|l| {
                let lt = LinkTimes::of(g, l);
                let host = g.copy_of(l).host;
                let d0 = (lt.t_s_prime / day).floor() as u32;
                let d1 = if dp.split_at_midnight {
                    ((lt.t_l_prime / day).ceil() as u32).max(d0 + 1)
                } else {
                    d0 + 1
                };
                (d0..d1).filter_map(move |d| {
                    let e = if dp.split_at_midnight {
                        window_exposure(lt, f64::from(d) * day, f64::from(d + 1) * day, dp)
                    } else {
                        closed_form(lt, dp.r) * dp.scale()
                    };
                    (e > 0.0 || !dp.split_at_midnight).then_some((d, host, l.neighbor, e))
                })
            })
            .collect();
        let n_days = pieces.iter().map(|p| p.0 + 1).max().unwrap_or(0);
        let key = |d: u32, h: NodeId| h as usize * n_days as usize + d as usize;
        let mut offsets = vec![0usize; g.n_nodes as usize * n_days as usize + 1];
        for &(d, h, _, _) in &pieces {
            offsets[key(d, h) + 1] += 1;
        }
        for i in 1..offsets.len() {
            offsets[i] += offsets[i - 1];
        }
        let mut fill = offsets.clone();
        let mut entries = vec![(0, 0.0); pieces.len()];
        for &(d, h, v, e) in &pieces {
            let k = key(d, h);
            entries[fill[k]] = (v, e);
            fill[k] += 1;
        }
        Ok(Self {
            n_nodes: g.n_nodes,
            n_days,
            offsets,
            entries,
        })
    }

    pub fn n_days(&self) -> u32 {
        self.n_days
    }

    /// Total exposure charged to each day.
    pub fn daily_totals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_days as usize];
        for h in 0..self.n_nodes {
            for d in 0..self.n_days {
                self.for_each_contact(h, d, &mut |_, e| out[d as usize] += e);
            }
        }
        out
    }
}

impl ContactSource for GraphExposure {
    fn n_nodes(&self) -> u32 {
        self.n_nodes
    }

    fn for_each_contact(&self, host: NodeId, day: u32, f: &mut dyn FnMut(NodeId, f64)) {
        if day >= self.n_days || host >= self.n_nodes {
            return;
        }
        let k = host as usize * self.n_days as usize + day as usize;
        for &(v, e) in &self.entries[self.offsets[k]..self.offsets[k + 1]] {
            f(v, e);
        }
    }
}

/// BADN contacts regenerated on demand; every link is a one-step direct
/// contact.
pub struct BadnExposure {
    model: BadnModel,
    per_link: f64,
}

impl BadnExposure {
    pub fn new(model: BadnModel, dp: &DiseaseParams) -> Result<Self> {
        let s = f64::from(model.step_seconds);
        let lt = LinkTimes {
            t_s: 0.0,
            t_l: s,
            t_s_prime: 0.0,
            t_l_prime: s,
        };
        let per_link = link_exposure(lt, dp)?;
        Ok(Self { model, per_link })
    }

    pub fn per_link(&self) -> f64 {
        self.per_link
    }
}

impl ContactSource for BadnExposure {
    fn n_nodes(&self) -> u32 {
        self.model.n_nodes
    }

    fn for_each_contact(&self, host: NodeId, day: u32, f: &mut dyn FnMut(NodeId, f64)) {
        if day >= self.model.n_days() {
            return;
        }
        self.model.for_each_activation(host, day, |_, nbrs| {
            for &v in nbrs {
                f(v, self.per_link);
            }
        });
    }
}

/// Daily compartment counts of one run. Seeds are infected on day 0 and are
/// not counted in `new_infections`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpidemicTimeSeries {
    pub run: u32,
    pub seed: u64,
    pub seeds: Vec<NodeId>,
    pub susceptible: Vec<u32>,
    pub infected: Vec<u32>,
    pub recovered: Vec<u32>,
    pub new_infections: Vec<u32>,
}

impl EpidemicTimeSeries {
    /// Infections by transmission over the horizon.
    pub fn total_infected(&self) -> u64 {
        self.new_infections.iter().map(|&x| u64::from(x)).sum()
    }

    pub fn peak_infected(&self) -> u32 {
        self.infected.iter().copied().max().unwrap_or(0)
    }

    /// First day reaching the peak.
    pub fn peak_day(&self) -> u32 {
        let peak = self.peak_infected();
        self.infected.iter().position(|&x| x == peak).unwrap_or(0) as u32
    }
}

const NEVER: u32 = u32::MAX;

/// One SIR realization on its own stream.
pub fn run_once<S: ContactSource + ?Sized>(
    source: &S,
    dp: &DiseaseParams,
    seed: u64,
    run: u32,
) -> Result<EpidemicTimeSeries> {
    let n = source.n_nodes();
    if dp.n_seeds > n {
        return Err(invalid(
            "n_seeds",
            format!("{} seeds for {n} nodes", dp.n_seeds),
        ));
    }
    let mut rng = RandomSource::for_domain(seed, domain::SIR, u64::from(run));
    let days = dp.horizon_days as usize;
    let mut infected_on = vec![NEVER; n as usize];
    let mut recovers_on = vec![NEVER; n as usize];
    let duration = |rng: &mut RandomSource| -> u32 {
        rng.random_range(dp.infectious_days_min..=dp.infectious_days_max)
    };
    let mut seeds: Vec<NodeId> = index::sample(&mut rng, n as usize, dp.n_seeds as usize)
        .into_iter()
        .map(|i| i as NodeId)
        .collect();
    seeds.sort_unstable();
    let mut active: Vec<NodeId> = Vec::with_capacity(seeds.len());
    for &s in &seeds {
        infected_on[s as usize] = 0;
        recovers_on[s as usize] = duration(&mut rng);
        active.push(s);
    }

    let mut ts = EpidemicTimeSeries {
        run,
        seed,
        seeds,
        susceptible: Vec::with_capacity(days),
        infected: Vec::with_capacity(days),
        recovered: Vec::with_capacity(days),
        new_infections: Vec::with_capacity(days),
    };
    let mut dose = vec![0.0f64; n as usize];
    let mut touched: Vec<NodeId> = Vec::new();
    let mut recovered = 0u32;
    let mut pending: Vec<NodeId> = Vec::new();
    for day in 0..dp.horizon_days {
        let new_today = pending.len() as u32;
        active.append(&mut pending);
        active.retain(|&v| {
            let gone = recovers_on[v as usize] <= day;
            recovered += u32::from(gone);
            !gone
        });
        let infected = active.len() as u32;
        ts.susceptible.push(n - infected - recovered);
        ts.infected.push(infected);
        ts.recovered.push(recovered);
        ts.new_infections.push(new_today);

        for &h in &active {
            source.for_each_contact(h, day, &mut |v, e| {
                if infected_on[v as usize] == NEVER && e > 0.0 {
                    if dose[v as usize] == 0.0 {
                        touched.push(v);
                    }
                    dose[v as usize] += e;
                }
            });
        }
        touched.sort_unstable();
        for &v in &touched {
            let p = infection_probability_unchecked(dose[v as usize], dp.sigma);
            dose[v as usize] = 0.0;
            if rng.random::<f64>() < p {
                infected_on[v as usize] = day + 1;
                recovers_on[v as usize] = day + 1 + duration(&mut rng);
                pending.push(v);
            }
        }
        touched.clear();
    }
    Ok(ts)
}

/// Independent runs `0..runs`, in run order for any worker count.
pub fn run_sir<S: ContactSource + ?Sized>(
    source: &S,
    dp: &DiseaseParams,
    seed: u64,
    runs: u32,
) -> Result<Vec<EpidemicTimeSeries>> {
    let dp = dp.clone().validate()?;
    (0..runs)
        .into_par_iter()
        .map(|k| run_once(source, &dp, seed, k))
        .collect()
}

pub fn write_series<W: Write>(mut w: W, runs: &[EpidemicTimeSeries]) -> Result<()> {
    writeln!(w, "run,day,S,I,R,new_I")?;
    for ts in runs {
        for d in 0..ts.infected.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                ts.run, d, ts.susceptible[d], ts.infected[d], ts.recovered[d], ts.new_infections[d]
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Sample mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-run peak prevalence, peak day, and total infections, then mean and
/// standard deviation rows.
pub fn write_summary<W: Write>(mut w: W, runs: &[EpidemicTimeSeries]) -> Result<()> {
    writeln!(w, "run,peak_I,peak_day,total_I")?;
    for ts in runs {
        writeln!(
            w,
            "{},{},{},{}",
            ts.run,
            ts.peak_infected(),
            ts.peak_day(),
            ts.total_infected()
        )?;
    }
    let col = |f: &dyn Fn(&EpidemicTimeSeries) -> f64| -> (f64, f64) {
        mean_std(&runs.iter().map(f).collect::<Vec<_>>())
    };
    let peak = col(&|t| f64::from(t.peak_infected()));
    let day = col(&|t| f64::from(t.peak_day()));
    let total = col(&|t| t.total_infected() as f64);
    if !runs.is_empty() {
        writeln!(w, "mean,{:.4},{:.4},{:.4}", peak.0, day.0, total.0)?;
        writeln!(w, "std,{:.4},{:.4},{:.4}", peak.1, day.1, total.1)?;
    }
    w.flush()?;
    Ok(())
}
