//! Raw location updates to proximity visits, SPDT links, CIP samples, and
//! ingested temporal graphs. Also the day-copy densification of sparse
//! ingested graphs.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, parse_err, Result};
use crate::estimator::CipSamples;
use crate::graph::{ActiveCopy, NodeId, SpdtLink, TemporalGraph};
use crate::params::{Step, TimeGrid, SECONDS_PER_DAY};
use crate::rng::{domain, RandomSource};

pub const DEFAULT_RADIUS_M: f64 = 20.0;
pub const DEFAULT_MAX_GAP_S: i64 = 1800;
pub const DEFAULT_DELTA_S: i64 = 10_800;
/// Side of the spatial hash used when pairing visits.
const CELL_M: f64 = 40.0;
const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoordSystem {
    /// Planar coordinates in meters.
    Meters,
    /// `x` is longitude and `y` latitude, in degrees.
    Degrees,
}

impl CoordSystem {
    pub fn distance(self, (x1, y1): (f64, f64), (x2, y2): (f64, f64)) -> f64 {
        match self {
            CoordSystem::Meters => (x1 - x2).hypot(y1 - y2),
            CoordSystem::Degrees => {
                let (p1, p2) = (y1.to_radians(), y2.to_radians());
                let dp = p2 - p1;
                let dl = (x2 - x1).to_radians();
                let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
                2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocationUpdate {
    pub user: u64,
    pub x: f64,
    pub y: f64,
    /// Epoch seconds.
    pub t: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateLog {
    pub coords: CoordSystem,
    pub updates: Vec<LocationUpdate>,
    /// Malformed records that were skipped.
    pub skipped: usize,
}

/// Reads `user,x,y,t` records under a `#coords=meters|degrees` header. A
/// `user,x,y,t` column line is optional.
pub fn parse_updates<R: BufRead>(r: R) -> Result<UpdateLog> {
    let mut coords = None;
    let mut updates = Vec::new();
    let mut skipped = 0;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("coords=") {
                coords = Some(match v.trim() {
                    "meters" => CoordSystem::Meters,
                    "degrees" => CoordSystem::Degrees,
                    other => return Err(parse_err(i + 1, format!("unknown coords `{other}`"))),
                });
            }
            continue;
        }
        if line.eq_ignore_ascii_case("user,x,y,t") {
            continue;
        }
        match parse_record(line) {
            Some(u) => updates.push(u),
            None => skipped += 1,
        }
    }
    let coords = coords.ok_or_else(|| parse_err(0, "missing `#coords=` header"))?;
    if skipped > 0 {
        log::warn!("skipped {skipped} malformed location records");
    }
    Ok(UpdateLog {
        coords,
        updates,
        skipped,
    })
}

fn parse_record(line: &str) -> Option<LocationUpdate> {
    let mut f = line.split(',').map(str::trim);
    let user = f.next()?.parse().ok()?;
    let x: f64 = f.next()?.parse().ok()?;
    let y: f64 = f.next()?.parse().ok()?;
    let t = f.next()?.parse().ok()?;
    if f.next().is_some() || !x.is_finite() || !y.is_finite() {
        return None;
    }
    Some(LocationUpdate { user, x, y, t })
}

/// A run of one user's updates near the first one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProximityVisit {
    pub user: u64,
    pub anchor: (f64, f64),
    pub t_first: i64,
    pub t_last: i64,
    pub count: u32,
}

impl ProximityVisit {
    pub fn span(&self) -> i64 {
        self.t_last - self.t_first
    }
}

/// Greedy visit segmentation. Output is ordered by `(user, t_first)`.
pub fn extract_visits(
    updates: &[LocationUpdate],
    coords: CoordSystem,
    radius_m: f64,
    max_gap_s: i64,
) -> Vec<ProximityVisit> {
    let mut sorted = updates.to_vec();
    sorted.sort_by_key(|u| (u.user, u.t));
    let users: Vec<&[LocationUpdate]> = sorted.chunk_by(|a, b| a.user == b.user).collect();
    users
        .par_iter()
        .flat_map_iter(|ups| visits_of_user(ups, coords, radius_m, max_gap_s))
        .collect()
}

fn visits_of_user(
    ups: &[LocationUpdate],
    coords: CoordSystem,
    radius_m: f64,
    max_gap_s: i64,
) -> Vec<ProximityVisit> {
    let mut out = Vec::new();
    let mut cur: Option<ProximityVisit> = None;
    for u in ups {
        if let Some(v) = cur.as_mut() {
            if u.t - v.t_last <= max_gap_s && coords.distance(v.anchor, (u.x, u.y)) <= radius_m {
                v.t_last = u.t;
                v.count += 1;
                continue;
            }
            out.push(*v);
        }
        cur = Some(ProximityVisit {
            user: u.user,
            anchor: (u.x, u.y),
            t_first: u.t,
            t_last: u.t,
            count: 1,
        });
    }
    out.extend(cur);
    out
}

/// An ingested graph with its samples and the dense-to-original user map.
#[derive(Clone, Debug)]
pub struct RealGraph {
    pub graph: TemporalGraph,
    pub cip: CipSamples,
    /// `users[node]` is the original id of `node`.
    pub users: Vec<u64>,
}

#[derive(Clone, Copy, Debug)]
pub struct IngestConfig {
    pub coords: CoordSystem,
    pub radius_m: f64,
    pub delta_sec: i64,
    pub step_seconds: u32,
}

impl IngestConfig {
    pub fn new(coords: CoordSystem) -> Self {
        Self {
            coords,
            radius_m: DEFAULT_RADIUS_M,
            delta_sec: DEFAULT_DELTA_S,
            step_seconds: 300,
        }
    }
}

struct PlanarIndex {
    cells: HashMap<(i64, i64), Vec<usize>>,
    lat0_cos: f64,
    coords: CoordSystem,
}

impl PlanarIndex {
    fn project(&self, (x, y): (f64, f64)) -> (f64, f64) {
        match self.coords {
            CoordSystem::Meters => (x, y),
            CoordSystem::Degrees => {
                let k = EARTH_RADIUS_M.to_radians();
                (x * k * self.lat0_cos, y * k)
            }
        }
    }

    fn cell(&self, p: (f64, f64)) -> (i64, i64) {
        let (x, y) = self.project(p);
        ((x / CELL_M).floor() as i64, (y / CELL_M).floor() as i64)
    }
}

/// A raw link before discretization.
struct RawLink {
    neighbor_visit: usize,
}

/// Pairs host visits with qualifying neighbor visits and emits the graph
/// and its CIP samples. Host visits without links produce no copy.
pub fn build_real_graph(visits: &[ProximityVisit], cfg: IngestConfig) -> Result<RealGraph> {
    let grid = TimeGrid::new(cfg.step_seconds)?;
    if cfg.delta_sec < 0 {
        return Err(invalid("delta_sec", "must be non-negative"));
    }
    let mut visits = visits.to_vec();
    visits.sort_by_key(|v| (v.user, v.t_first, v.t_last));
    let mut users: Vec<u64> = visits.iter().map(|v| v.user).collect();
    users.dedup();
    let node_of: HashMap<u64, NodeId> = users
        .iter()
        .enumerate()
        .map(|(i, &u)| (u, i as NodeId))
        .collect();
    let delta_steps = grid.nearest_steps(cfg.delta_sec as f64) as Step;
    let step = i64::from(cfg.step_seconds);

    if visits.is_empty() {
        return Ok(RealGraph {
            graph: TemporalGraph::empty(0, 0, cfg.step_seconds, delta_steps),
            cip: CipSamples {
                delta_sec: cfg.delta_sec as f64,
                ..CipSamples::default()
            },
            users,
        });
    }

    let lat0 = visits.iter().map(|v| v.anchor.1).sum::<f64>() / visits.len() as f64;
    let mut index = PlanarIndex {
        cells: HashMap::new(),
        lat0_cos: lat0.to_radians().cos(),
        coords: cfg.coords,
    };
    for (i, v) in visits.iter().enumerate() {
        if v.count >= 2 {
            let c = index.cell(v.anchor);
            index.cells.entry(c).or_default().push(i);
        }
    }

    let per_host: Vec<Vec<RawLink>> = visits
        .par_iter()
        .map(|host| {
            let (cx, cy) = index.cell(host.anchor);
            let mut found = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(bucket) = index.cells.get(&(cx + dx, cy + dy)) else {
                        continue;
                    };
                    for &j in bucket {
                        let nb = &visits[j];
                        if nb.user != host.user
                            && nb.t_first >= host.t_first
                            && nb.t_first <= host.t_last + cfg.delta_sec
                            && cfg.coords.distance(host.anchor, nb.anchor) <= cfg.radius_m
                        {
                            found.push(RawLink { neighbor_visit: j });
                        }
                    }
                }
            }
            found.sort_by_key(|l| {
                let nb = &visits[l.neighbor_visit];
                (nb.t_first, nb.user, nb.t_last, l.neighbor_visit)
            });
            found
        })
        .collect();

    let t_min = visits.iter().map(|v| v.t_first).min().unwrap_or(0);
    let t_max = visits.iter().map(|v| v.t_last).max().unwrap_or(0);
    let day = i64::from(SECONDS_PER_DAY);
    let origin = t_min.div_euclid(day) * day;
    let observation_days = ((t_max - origin).div_euclid(day) + 1) as f64;
    let to_step = |t: i64| ((t - origin).div_euclid(step)) as Step;
    let span_steps = |s: i64| (s.max(0) as u64).div_ceil(step as u64).max(1) as Step;
    let sample_span = |s: i64| if s > 0 { s as f64 } else { step as f64 };

    let mut g = TemporalGraph::empty(users.len() as u32, 0, cfg.step_seconds, delta_steps);
    let mut cip = CipSamples {
        observation_days,
        delta_sec: cfg.delta_sec as f64,
        ..CipSamples::default()
    };
    let mut copies_per_user = vec![0u32; users.len()];
    let mut horizon: Step = 0;
    let mut prev: Option<(NodeId, Step)> = None;
    for (v, raw) in visits.iter().zip(&per_host) {
        if raw.is_empty() {
            continue;
        }
        let host = node_of[&v.user];
        let mut t_s = to_step(v.t_first);
        if let Some((h, last_tl)) = prev {
            if h == host {
                t_s = t_s.max(last_tl);
            }
        }
        let t_l = t_s + span_steps(v.span());
        let copy_index = g.copies.len() as u32;
        let copy_id = copies_per_user[host as usize];
        copies_per_user[host as usize] += 1;
        g.copies.push(ActiveCopy {
            host,
            copy_id,
            t_s,
            t_l,
        });
        prev = Some((host, t_l));
        horizon = horizon.max(t_l);

        let ta_sec = sample_span(v.span());
        cip.active_durations.push(ta_sec);
        cip.degrees.push(raw.len() as u64);
        for l in raw {
            let nb = &visits[l.neighbor_visit];
            let t_s_prime = to_step(nb.t_first).clamp(t_s, t_l + delta_steps);
            let t_l_prime = t_s_prime + span_steps(nb.span());
            g.links.push(SpdtLink {
                copy: copy_index,
                neighbor: node_of[&nb.user],
                t_s_prime,
                t_l_prime,
            });
            horizon = horizon.max(t_l_prime);
            cip.creation_delays
                .push(((nb.t_first - v.t_first) as f64, ta_sec));
            cip.link_durations.push(sample_span(nb.span()));
        }
    }
    let days_steps = (observation_days * f64::from(SECONDS_PER_DAY) / step as f64).ceil() as Step;
    g.horizon = horizon.max(days_steps);
    cip.activation_frequencies = copies_per_user
        .iter()
        .map(|&c| f64::from(c) / observation_days)
        .collect();
    Ok(RealGraph {
        graph: g,
        cip,
        users,
    })
}

/// Fills each host's empty days with a copy of one of its active days,
/// chosen uniformly per empty day. Replicated copies that would overlap a
/// kept copy are dropped. Hosts with no active day stay empty.
pub fn densify(g: &TemporalGraph, horizon_days: u32, seed: u64) -> Result<TemporalGraph> {
    let spd = TimeGrid::new(g.step_seconds)?
        .steps_per_day()
        .ok_or_else(|| invalid("step_seconds", "must divide one day"))?;
    let offsets = g.link_offsets();
    let mut by_host: Vec<Vec<usize>> = vec![Vec::new(); g.n_nodes as usize];
    for (i, c) in g.copies.iter().enumerate() {
        by_host[c.host as usize].push(i);
    }

    let per_host: Vec<Vec<(ActiveCopy, Vec<SpdtLink>)>> = by_host
        .par_iter()
        .enumerate()
        .map(|(host, idxs)| {
            let mut days: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for &i in idxs {
                days.entry(g.copies[i].t_s / spd).or_default().push(i);
            }
            let active: Vec<u32> = days.keys().copied().collect();
            // Originals are always kept; replicas fill gaps in time order.
            let mut kept: BTreeMap<Step, (Step, Option<i64>, usize)> = BTreeMap::new();
            for &i in idxs {
                let c = &g.copies[i];
                kept.insert(c.t_s, (c.t_l, None, i));
            }
            if !active.is_empty() {
                let mut rng = RandomSource::for_domain(seed, domain::DENSIFY, host as u64);
                let mut replicas = Vec::new();
                for target in 0..horizon_days {
                    if days.contains_key(&target) {
                        continue;
                    }
                    let pick = active[rng.random_range(0..active.len())];
                    let shift = (i64::from(target) - i64::from(pick)) * i64::from(spd);
                    for &i in &days[&pick] {
                        let c = &g.copies[i];
                        let t_s = (i64::from(c.t_s) + shift) as Step;
                        replicas.push((t_s, (i64::from(c.t_l) + shift) as Step, shift, i));
                    }
                }
                replicas.sort_unstable();
                for (t_s, t_l, shift, i) in replicas {
                    let clash_before = kept
                        .range(..=t_s)
                        .next_back()
                        .is_some_and(|(_, &(end, _, _))| end > t_s);
                    let clash_after = kept.range(t_s..t_l).next().is_some();
                    if !clash_before && !clash_after {
                        kept.insert(t_s, (t_l, Some(shift), i));
                    }
                }
            }
            kept.into_iter()
                .enumerate()
                .map(|(copy_id, (t_s, (t_l, shift, i)))| {
                    let shift = shift.unwrap_or(0);
                    let copy = ActiveCopy {
                        host: host as NodeId,
                        copy_id: copy_id as u32,
                        t_s,
                        t_l,
                    };
                    let links = g.links[offsets[i]..offsets[i + 1]]
                        .iter()
                        .map(|l| SpdtLink {
                            t_s_prime: (i64::from(l.t_s_prime) + shift) as Step,
                            t_l_prime: (i64::from(l.t_l_prime) + shift) as Step,
                            ..*l
                        })
                        .collect();
                    (copy, links)
                })
                .collect()
        })
        .collect();

    let mut out = TemporalGraph {
        horizon: g.horizon.max(horizon_days * spd),
        copies: Vec::new(),
        links: Vec::new(),
        ..g.clone()
    };
    for host in per_host {
        for (copy, links) in host {
            let idx = out.copies.len() as u32;
            out.horizon = out.horizon.max(copy.t_l);
            out.copies.push(copy);
            for l in links {
                out.horizon = out.horizon.max(l.t_l_prime);
                out.links.push(SpdtLink { copy: idx, ..l });
            }
        }
    }
    Ok(out)
}
