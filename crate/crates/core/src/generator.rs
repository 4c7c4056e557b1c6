//! Synthetic SPDT graph generation and the SPST / BADN baselines.
//!
//! Hosts are generated independently: each owns one random stream and its
//! own contact history, and reads the shared per-node lambdas. The graph is
//! therefore identical for any worker count.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;

use crate::distributions::{ActivationDegree, BoundedPowerLaw, Geometric, TruncatedGeometric};
use crate::error::{invalid, Result, SpdtError};
use crate::graph::{ActiveCopy, LinkComponent, NodeId, SpdtLink, TemporalGraph};
use crate::params::{SpdtParams, Step, StepParams, TimeGrid};
use crate::rng::{domain, RandomSource};

/// Alternating active / inactive period lengths of one node, in steps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivityTimeline {
    pub node: NodeId,
    pub initially_active: bool,
    pub periods: Vec<Step>,
}

impl ActivityTimeline {
    /// `(t_s, t_l)` of every active period.
    pub fn active_intervals(&self) -> Vec<(Step, Step)> {
        let mut out = Vec::new();
        let mut t = 0;
        let mut active = self.initially_active;
        for &len in &self.periods {
            if active {
                out.push((t, t + len));
            }
            t += len;
            active = !active;
        }
        out
    }

    pub fn active_steps(&self) -> u64 {
        self.active_intervals()
            .iter()
            .map(|(s, l)| u64::from(l - s))
            .sum()
    }
}

/// Two-state activity process. The initial state is active with the
/// equilibrium probability `q / (q + rho)`; periods are geometric with `rho`
/// (active) and `q` (inactive). The last period is cut at the horizon.
pub fn generate_timeline<R: Rng + ?Sized>(
    node: NodeId,
    sp: &StepParams,
    horizon: Step,
    rng: &mut R,
) -> Result<ActivityTimeline> {
    let active_len = Geometric::new(sp.rho)?;
    let inactive_len = Geometric::new(sp.q)?;
    let initially_active = rng.random::<f64>() < sp.active_fraction();
    let mut periods = Vec::new();
    let mut t: u64 = 0;
    let mut active = initially_active;
    while t < u64::from(horizon) {
        let len = if active {
            active_len.sample(rng)
        } else {
            inactive_len.sample(rng)
        };
        let len = len.min(u64::from(horizon) - t);
        periods.push(len as Step);
        t += len;
        active = !active;
    }
    Ok(ActivityTimeline {
        node,
        initially_active,
        periods,
    })
}

/// One bounded power-law lambda per node, drawn in node order.
pub fn assign_lambdas<R: Rng + ?Sized>(
    n_nodes: usize,
    sp: &StepParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let law = BoundedPowerLaw::new(sp.alpha, sp.xi, sp.psi)?;
    Ok((0..n_nodes).map(|_| law.sample(rng)).collect())
}

/// Nodes a host has already contacted, in first-contact order.
#[derive(Clone, Debug, Default)]
pub struct ContactHistory {
    members: Vec<NodeId>,
    set: HashSet<NodeId>,
}

impl ContactHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// `n_t`, the number of distinct contacts so far.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.set.contains(&node)
    }

    pub fn members(&self) -> &[NodeId] {
        &self.members
    }

    pub fn insert(&mut self, node: NodeId) -> bool {
        let fresh = self.set.insert(node);
        if fresh {
            self.members.push(node);
        }
        fresh
    }
}

/// Draws nodes with probability proportional to lambda.
#[derive(Clone, Debug)]
pub struct AttractivenessSampler {
    prefix: Vec<f64>,
}

const NEW_NEIGHBOR_TRIES: usize = 64;

impl AttractivenessSampler {
    pub fn new(lambdas: &[f64]) -> Self {
        let mut acc = 0.0;
        let prefix = lambdas
            .iter()
            .map(|l| {
                acc += l;
                acc
            })
            .collect();
        Self { prefix }
    }

    pub fn n_nodes(&self) -> usize {
        self.prefix.len()
    }

    fn weight(&self, i: usize) -> f64 {
        if i == 0 {
            self.prefix[0]
        } else {
            self.prefix[i] - self.prefix[i - 1]
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeId {
        let total = *self.prefix.last().expect("non-empty population");
        let target = rng.random::<f64>() * total;
        let idx = self.prefix.partition_point(|&c| c <= target);
        idx.min(self.prefix.len() - 1) as NodeId
    }

    /// Samples a node that `accept` admits, by rejection against the global
    /// law; falls back to an explicit scan if rejection keeps failing.
    fn sample_where<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        accept: impl Fn(NodeId) -> bool,
    ) -> Option<NodeId> {
        for _ in 0..NEW_NEIGHBOR_TRIES {
            let v = self.sample(rng);
            if accept(v) {
                return Some(v);
            }
        }
        let total: f64 = (0..self.n_nodes())
            .filter(|&i| accept(i as NodeId))
            .map(|i| self.weight(i))
            .sum();
        if !(total > 0.0) {
            return None;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = None;
        for i in 0..self.n_nodes() {
            if accept(i as NodeId) {
                acc += self.weight(i);
                last = Some(i as NodeId);
                if acc > target {
                    return last;
                }
            }
        }
        last
    }
}

/// Picks `d` distinct neighbors for one active copy using the reinforcement
/// rule: repeat a known contact with probability `n_t / (n_t + eta)`,
/// otherwise pick a new node by attractiveness.
///
/// A slot that lands on a neighbor already used by this copy is redrawn, so
/// the effective repeat probability is `unused / (unused + eta)` where
/// `unused` counts history members not yet chosen for this copy.
pub fn select_neighbors<R: Rng + ?Sized>(
    host: NodeId,
    d: usize,
    history: &mut ContactHistory,
    sampler: &AttractivenessSampler,
    eta: f64,
    rng: &mut R,
) -> Result<Vec<NodeId>> {
    let available = sampler.n_nodes().saturating_sub(1);
    if d > available {
        return Err(SpdtError::PopulationExhausted {
            requested: d,
            available,
        });
    }
    let mut chosen: Vec<NodeId> = Vec::with_capacity(d);
    let mut chosen_set: HashSet<NodeId> = HashSet::with_capacity(d);
    for _ in 0..d {
        let n_t = history.len();
        let unused = n_t - chosen.len();
        let new_possible = n_t < available;
        let repeat = if !new_possible {
            true
        } else {
            let p_repeat = unused as f64 / (unused as f64 + eta);
            rng.random::<f64>() < p_repeat
        };
        let pick = if repeat {
            pick_unused(history, &chosen_set, unused, rng)
        } else {
            let v = sampler
                .sample_where(rng, |v| v != host && !history.contains(v))
                .expect("new candidates exist when history is incomplete");
            history.insert(v);
            v
        };
        chosen_set.insert(pick);
        chosen.push(pick);
    }
    Ok(chosen)
}

fn pick_unused<R: Rng + ?Sized>(
    history: &ContactHistory,
    chosen: &HashSet<NodeId>,
    unused: usize,
    rng: &mut R,
) -> NodeId {
    let members = history.members();
    let n_t = members.len();
    if unused * 8 >= n_t {
        loop {
            let idx = ((rng.random::<f64>() * n_t as f64) as usize).min(n_t - 1);
            if !chosen.contains(&members[idx]) {
                return members[idx];
            }
        }
    }
    let idx = ((rng.random::<f64>() * unused as f64) as usize).min(unused - 1);
    *members
        .iter()
        .filter(|m| !chosen.contains(m))
        .nth(idx)
        .expect("unused count is exact")
}

/// Draws arrival delay and stay for each neighbor of `copy`.
pub fn generate_links<R: Rng + ?Sized>(
    copy_index: u32,
    copy: &ActiveCopy,
    neighbors: &[NodeId],
    sp: &StepParams,
    rng: &mut R,
) -> Result<Vec<SpdtLink>> {
    let t_max = u64::from(copy.duration()) + u64::from(sp.delta_steps);
    let delay = TruncatedGeometric::new(sp.p_c, t_max)?;
    let stay = Geometric::new(sp.p_b)?;
    Ok(neighbors
        .iter()
        .map(|&neighbor| {
            let t_c = delay.sample(rng) as Step;
            let t_d = stay.sample(rng).min(u64::from(u32::MAX / 2)) as Step;
            let t_s_prime = copy.t_s + t_c;
            SpdtLink {
                copy: copy_index,
                neighbor,
                t_s_prime,
                t_l_prime: t_s_prime.saturating_add(t_d),
            }
        })
        .collect())
}

struct HostOutput {
    copies: Vec<ActiveCopy>,
    // link.copy holds the host-local copy index until assembly
    links: Vec<SpdtLink>,
}

fn generate_host(
    host: NodeId,
    sp: &StepParams,
    lambdas: &[f64],
    sampler: &AttractivenessSampler,
    horizon: Step,
    seed: u64,
) -> Result<HostOutput> {
    let mut rng = RandomSource::for_domain(seed, domain::HOST, u64::from(host));
    let timeline = generate_timeline(host, sp, horizon, &mut rng)?;
    let degree_law = ActivationDegree::new(lambdas[host as usize])?;
    let max_degree = sampler.n_nodes() - 1;
    let mut history = ContactHistory::new();
    let mut copies = Vec::new();
    let mut links = Vec::new();
    for (copy_id, (t_s, t_l)) in timeline.active_intervals().into_iter().enumerate() {
        let copy = ActiveCopy {
            host,
            copy_id: copy_id as u32,
            t_s,
            t_l,
        };
        let d = (degree_law.sample(&mut rng) as usize).min(max_degree);
        let neighbors = select_neighbors(host, d, &mut history, sampler, sp.eta, &mut rng)?;
        links.extend(generate_links(copy_id as u32, &copy, &neighbors, sp, &mut rng)?);
        copies.push(copy);
    }
    Ok(HostOutput { copies, links })
}

/// Generates a full SPDT graph over `horizon` steps.
pub fn synthesize_graph(
    params: &SpdtParams,
    n_nodes: u32,
    horizon: Step,
    seed: u64,
) -> Result<TemporalGraph> {
    if n_nodes < 2 {
        return Err(invalid("n_nodes", "need at least two nodes"));
    }
    let params = params.clone().validate()?;
    let sp = params.per_step()?;
    let mut lambda_rng = RandomSource::for_domain(seed, domain::LAMBDA, 0);
    let lambdas = assign_lambdas(n_nodes as usize, &sp, &mut lambda_rng)?;
    let sampler = AttractivenessSampler::new(&lambdas);
    let per_host: Vec<HostOutput> = (0..n_nodes)
        .into_par_iter()
        .map(|h| generate_host(h, &sp, &lambdas, &sampler, horizon, seed))
        .collect::<Result<_>>()?;

    let mut g = TemporalGraph::empty(n_nodes, horizon, params.step_seconds, sp.delta_steps);
    g.copies.reserve(per_host.iter().map(|h| h.copies.len()).sum());
    g.links.reserve(per_host.iter().map(|h| h.links.len()).sum());
    for out in per_host {
        let base = g.copies.len() as u32;
        g.copies.extend(out.copies);
        g.links.extend(out.links.into_iter().map(|mut l| {
            l.copy += base;
            l
        }));
    }
    g.lambdas = Some(lambdas);
    Ok(g)
}

/// Same-place-same-time projection: drops indirect-only links and cuts
/// links that outlast the host at the host's departure.
pub fn clip_to_spst(g: &TemporalGraph) -> TemporalGraph {
    let links = g
        .links
        .iter()
        .filter_map(|l| match g.component(l) {
            LinkComponent::DirectOnly => Some(*l),
            LinkComponent::IndirectOnly => None,
            LinkComponent::Both => Some(SpdtLink {
                t_l_prime: g.copy_of(l).t_l,
                ..*l
            }),
        })
        .collect();
    TemporalGraph {
        links,
        ..g.clone()
    }
}

/// Activation potential `f * dt / T` with `T` one day.
pub fn activation_potential(activations_per_day: f64, stay_minutes: f64) -> f64 {
    activations_per_day * stay_minutes / 1440.0
}

/// Basic activity-driven network: each step every node activates with
/// probability `p` and links to `m` distinct uniformly random nodes for one
/// step.
///
/// Each `(host, day)` cell has its own stream, so contacts of any host-day
/// can be regenerated on demand without materializing the graph.
#[derive(Clone, Debug)]
pub struct BadnModel {
    pub n_nodes: u32,
    pub activation_p: f64,
    pub m: u32,
    pub horizon: Step,
    pub step_seconds: u32,
    pub seed: u64,
    steps_per_day: Step,
    gap: Geometric,
}

impl BadnModel {
    pub fn new(
        n_nodes: u32,
        activation_p: f64,
        m: u32,
        horizon: Step,
        step_seconds: u32,
        seed: u64,
    ) -> Result<Self> {
        let gap = Geometric::new(activation_p)?;
        if m == 0 {
            return Err(invalid("m", "must be at least 1"));
        }
        if m >= n_nodes {
            return Err(invalid("m", format!("{m} links need more than {n_nodes} nodes")));
        }
        let steps_per_day = TimeGrid::new(step_seconds)?
            .steps_per_day()
            .ok_or_else(|| invalid("step_seconds", "must divide one day"))?;
        Ok(Self {
            n_nodes,
            activation_p,
            m,
            horizon,
            step_seconds,
            seed,
            steps_per_day,
            gap,
        })
    }

    pub fn steps_per_day(&self) -> Step {
        self.steps_per_day
    }

    pub fn n_days(&self) -> u32 {
        self.horizon.div_ceil(self.steps_per_day)
    }

    /// Calls `f(step, neighbors)` for each activation of `host` during `day`.
    pub fn for_each_activation(&self, host: NodeId, day: u32, mut f: impl FnMut(Step, &[NodeId])) {
        let start = day * self.steps_per_day;
        let end = (start + self.steps_per_day).min(self.horizon);
        if start >= end {
            return;
        }
        let stream = (u64::from(host) << 32) | u64::from(day);
        let mut rng = RandomSource::for_domain(self.seed, domain::BADN, stream);
        let others = f64::from(self.n_nodes - 1);
        let mut picked: Vec<NodeId> = Vec::with_capacity(self.m as usize);
        let mut t = u64::from(start) + self.gap.sample(&mut rng) - 1;
        while t < u64::from(end) {
            picked.clear();
            while picked.len() < self.m as usize {
                let mut v = ((rng.random::<f64>() * others) as NodeId).min(self.n_nodes - 2);
                if v >= host {
                    v += 1;
                }
                if !picked.contains(&v) {
                    picked.push(v);
                }
            }
            f(t as Step, &picked);
            t += self.gap.sample(&mut rng);
        }
    }

    pub fn materialize(&self) -> TemporalGraph {
        let mut g = TemporalGraph::empty(self.n_nodes, self.horizon, self.step_seconds, 0);
        for host in 0..self.n_nodes {
            let mut copy_id = 0;
            for day in 0..self.n_days() {
                self.for_each_activation(host, day, |t, neighbors| {
                    let idx = g.copies.len() as u32;
                    g.copies.push(ActiveCopy {
                        host,
                        copy_id,
                        t_s: t,
                        t_l: t + 1,
                    });
                    copy_id += 1;
                    g.links.extend(neighbors.iter().map(|&neighbor| SpdtLink {
                        copy: idx,
                        neighbor,
                        t_s_prime: t,
                        t_l_prime: t + 1,
                    }));
                });
            }
        }
        g
    }
}

pub fn generate_badn(
    n_nodes: u32,
    activation_p: f64,
    m: u32,
    horizon: Step,
    step_seconds: u32,
    seed: u64,
) -> Result<TemporalGraph> {
    Ok(BadnModel::new(n_nodes, activation_p, m, horizon, step_seconds, seed)?.materialize())
}
