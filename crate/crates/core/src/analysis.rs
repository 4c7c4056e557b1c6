//! Static projections, network statistics, and error metrics.

use std::io::Write;

use crate::diffusion::mean_std;
use crate::distributions::{bounded_mixture_degree_pmf, Geometric, TruncatedGeometric};
use crate::error::{invalid, Result, SpdtError};
use crate::graph::{NodeId, TemporalGraph};
use crate::params::StepParams;

/// Time-collapsed graph: an edge `u -> v` iff some link `u -> v` exists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StaticGraph {
    pub n_nodes: u32,
    out_offsets: Vec<usize>,
    out_targets: Vec<NodeId>,
    und_offsets: Vec<usize>,
    und_targets: Vec<NodeId>,
}

fn csr(n: usize, mut edges: Vec<(NodeId, NodeId)>) -> (Vec<usize>, Vec<NodeId>) {
    edges.sort_unstable();
    edges.dedup();
    let mut offsets = vec![0usize; n + 1];
    for &(u, _) in &edges {
        offsets[u as usize + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    (offsets, edges.into_iter().map(|(_, v)| v).collect())
}

impl StaticGraph {
    pub fn from_edges(n_nodes: u32, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Self {
        let directed: Vec<(NodeId, NodeId)> = edges.into_iter().filter(|(u, v)| u != v).collect();
        let undirected: Vec<(NodeId, NodeId)> =
            directed.iter().flat_map(|&(u, v)| [(u, v), (v, u)]).collect();
        let (out_offsets, out_targets) = csr(n_nodes as usize, directed);
        let (und_offsets, und_targets) = csr(n_nodes as usize, undirected);
        Self {
            n_nodes,
            out_offsets,
            out_targets,
            und_offsets,
            und_targets,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.out_targets.len()
    }

    pub fn out_neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.out_targets[self.out_offsets[u as usize]..self.out_offsets[u as usize + 1]]
    }

    /// Sorted neighbors in the undirected form.
    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.und_targets[self.und_offsets[u as usize]..self.und_offsets[u as usize + 1]]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.out_neighbors(u).binary_search(&v).is_ok()
    }

    pub fn out_degrees(&self) -> Vec<u32> {
        self.out_offsets.windows(2).map(|w| (w[1] - w[0]) as u32).collect()
    }

    pub fn in_degrees(&self) -> Vec<u32> {
        let mut d = vec![0u32; self.n_nodes as usize];
        for &v in &self.out_targets {
            d[v as usize] += 1;
        }
        d
    }

    /// The same graph with every edge reversed.
    pub fn reversed(&self) -> Self {
        let edges = (0..self.n_nodes)
            .flat_map(|u| self.out_neighbors(u).iter().map(move |&v| (v, u)))
            .collect::<Vec<_>>();
        Self::from_edges(self.n_nodes, edges)
    }
}

pub fn project_static(g: &TemporalGraph) -> StaticGraph {
    StaticGraph::from_edges(
        g.n_nodes,
        g.links.iter().map(|l| (g.copy_of(l).host, l.neighbor)),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegreeStats {
    pub in_degrees: Vec<u32>,
    pub out_degrees: Vec<u32>,
    /// `hist[k]` nodes have degree `k`.
    pub in_histogram: Vec<u64>,
    pub out_histogram: Vec<u64>,
    /// Pearson correlation of in- and out-degree over all nodes; NaN when
    /// either degree sequence is constant.
    pub pearson: f64,
}

fn degree_histogram(deg: &[u32]) -> Vec<u64> {
    let max = deg.iter().copied().max().unwrap_or(0) as usize;
    let mut h = vec![0u64; max + 1];
    for &d in deg {
        h[d as usize] += 1;
    }
    h
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(SpdtError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

pub fn degree_stats(sg: &StaticGraph) -> Result<DegreeStats> {
    if sg.n_nodes < 2 {
        return Err(invalid("graph", "degree statistics need at least two nodes"));
    }
    let in_degrees = sg.in_degrees();
    let out_degrees = sg.out_degrees();
    let xs: Vec<f64> = in_degrees.iter().map(|&d| f64::from(d)).collect();
    let ys: Vec<f64> = out_degrees.iter().map(|&d| f64::from(d)).collect();
    Ok(DegreeStats {
        in_histogram: degree_histogram(&in_degrees),
        out_histogram: degree_histogram(&out_degrees),
        pearson: pearson(&xs, &ys)?,
        in_degrees,
        out_degrees,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub local: Vec<f64>,
    pub mean: f64,
}

/// Local clustering over the undirected form, by degree-ordered triangle
/// enumeration. Nodes of degree below two score zero.
pub fn clustering_coefficients(sg: &StaticGraph) -> Clustering {
    let n = sg.n_nodes as usize;
    let deg: Vec<usize> = (0..sg.n_nodes).map(|u| sg.neighbors(u).len()).collect();
    let rank = |u: NodeId| (deg[u as usize], u);
    // Each edge kept once, pointing to the higher rank.
    let forward: Vec<Vec<NodeId>> = (0..sg.n_nodes)
        .map(|u| {
            sg.neighbors(u)
                .iter()
                .copied()
                .filter(|&v| rank(v) > rank(u))
                .collect()
        })
        .collect();
    let mut triangles = vec![0u64; n];
    let mut mark = vec![false; n];
    for u in 0..n {
        for &v in &forward[u] {
            mark[v as usize] = true;
        }
        for &v in &forward[u] {
            for &w in &forward[v as usize] {
                if mark[w as usize] {
                    triangles[u] += 1;
                    triangles[v as usize] += 1;
                    triangles[w as usize] += 1;
                }
            }
        }
        for &v in &forward[u] {
            mark[v as usize] = false;
        }
    }
    let local: Vec<f64> = (0..n)
        .map(|u| {
            let d = deg[u] as f64;
            if deg[u] < 2 {
                0.0
            } else {
                triangles[u] as f64 / (d * (d - 1.0) / 2.0)
            }
        })
        .collect();
    let mean = if n == 0 {
        0.0
    } else {
        local.iter().sum::<f64>() / n as f64
    };
    Clustering { local, mean }
}

/// Euclidean distance between two proportion histograms.
pub fn rse(observed: &[f64], reference: &[f64]) -> Result<f64> {
    if observed.len() != reference.len() {
        return Err(SpdtError::LengthMismatch {
            left: observed.len(),
            right: reference.len(),
        });
    }
    Ok(observed
        .iter()
        .zip(reference)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Proportions over unit bins `lo..=cap`, then one bin pooling `> cap`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: u64,
    pub cap: u64,
    pub proportions: Vec<f64>,
}

impl Histogram {
    pub fn from_samples(samples: &[u64], lo: u64, cap: u64) -> Self {
        let mut counts = vec![0u64; (cap - lo + 2) as usize];
        for &s in samples {
            let i = if s > cap { cap - lo + 1 } else { s.saturating_sub(lo) };
            counts[i as usize] += 1;
        }
        let n = samples.len().max(1) as f64;
        Self {
            lo,
            cap,
            proportions: counts.into_iter().map(|c| c as f64 / n).collect(),
        }
    }

    /// Binning with `cap` at the 99.9th percentile of the samples.
    pub fn auto(samples: &[u64], lo: u64) -> Self {
        Self::from_samples(samples, lo, percentile(samples, 0.999).max(lo))
    }

    /// Reference histogram from a pmf, tail mass `1 - sum` in the last bin.
    pub fn from_pmf(pmf: impl Fn(u64) -> f64, lo: u64, cap: u64) -> Self {
        let mut proportions: Vec<f64> = (lo..=cap).map(pmf).collect();
        let head: f64 = proportions.iter().sum();
        proportions.push((1.0 - head).max(0.0));
        Self {
            lo,
            cap,
            proportions,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin,proportion")?;
        for (i, p) in self.proportions.iter().enumerate() {
            let v = self.lo + i as u64;
            if v > self.cap {
                writeln!(w, ">{},{p}", self.cap)?;
            } else {
                writeln!(w, "{v},{p}")?;
            }
        }
        Ok(())
    }
}

/// Nearest-rank percentile.
pub fn percentile(samples: &[u64], q: f64) -> u64 {
    if samples.is_empty() {
        return 0;
    }
    let mut s = samples.to_vec();
    let k = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1;
    *s.select_nth_unstable(k).1
}

/// Steps between consecutive active copies of each host.
pub fn inactive_gaps(g: &TemporalGraph) -> Vec<u64> {
    g.copies
        .windows(2)
        .filter(|w| w[0].host == w[1].host)
        .map(|w| u64::from(w[1].t_s - w[0].t_l))
        .collect()
}

/// RSE of one CIP marginal of a graph against its model law.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalFit {
    pub name: &'static str,
    pub samples: usize,
    pub rse: f64,
}

/// Compares the active duration, inactive gap, degree, creation delay, and
/// link duration histograms of `g` (in steps) with the laws implied by `sp`.
pub fn cip_marginal_rse(g: &TemporalGraph, sp: &StepParams) -> Result<Vec<MarginalFit>> {
    let active: Vec<u64> = g.copies.iter().map(|c| u64::from(c.duration())).collect();
    let gaps = inactive_gaps(g);
    let degrees: Vec<u64> = g
        .copy_degrees()
        .into_iter()
        .filter(|&d| d > 0)
        .map(u64::from)
        .collect();
    let delays: Vec<u64> = g
        .links
        .iter()
        .map(|l| u64::from(l.delay(g.copy_of(l))))
        .collect();
    let stays: Vec<u64> = g.links.iter().map(|l| u64::from(l.duration())).collect();

    let ta_law = Geometric::new(sp.rho)?;
    let tw_law = Geometric::new(sp.q)?;
    let td_law = Geometric::new(sp.p_b)?;
    let delta = u64::from(sp.delta_steps);
    // Delay marginal mixes the truncated law over the active duration.
    let ta_support = (1..)
        .take_while(|&t| ta_law.pmf(t) > 1e-14 || t < 2)
        .collect::<Vec<u64>>();
    let delay_laws: Vec<(f64, TruncatedGeometric)> = ta_support
        .iter()
        .map(|&t| Ok((ta_law.pmf(t), TruncatedGeometric::new(sp.p_c, t + delta)?)))
        .collect::<Result<_>>()?;
    let tc_pmf = |k: u64| -> f64 { delay_laws.iter().map(|(w, law)| w * law.pmf(k)).sum() };

    let fit = |name: &'static str, xs: &[u64], lo: u64, pmf: &dyn Fn(u64) -> f64| -> Result<MarginalFit> {
        if xs.is_empty() {
            return Err(SpdtError::EmptySample(name));
        }
        let obs = Histogram::auto(xs, lo);
        let reference = Histogram::from_pmf(pmf, lo, obs.cap);
        Ok(MarginalFit {
            name,
            samples: xs.len(),
            rse: rse(&obs.proportions, &reference.proportions)?,
        })
    };
    Ok(vec![
        fit("active_duration", &active, 1, &|t| ta_law.pmf(t))?,
        fit("inactive_gap", &gaps, 1, &|t| tw_law.pmf(t))?,
        fit("degree", &degrees, 1, &|d| {
            bounded_mixture_degree_pmf(d, sp.alpha, sp.xi, sp.psi).unwrap_or(0.0)
        })?,
        fit("creation_delay", &delays, 0, &tc_pmf)?,
        fit("link_duration", &stays, 1, &|t| td_law.pmf(t))?,
    ])
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApeReport {
    /// Signed `100 (real - observed) / real`; `None` on days with zero real value.
    pub per_day: Vec<Option<f64>>,
    pub skipped_days: usize,
    /// Mean of `|APE|` over compared days.
    pub mape: f64,
    /// Standard deviation of `|APE|` over compared days.
    pub std: f64,
    /// APE of the series totals.
    pub cumulative: f64,
}

pub fn ape_mape(real: &[f64], observed: &[f64]) -> Result<ApeReport> {
    if real.len() != observed.len() {
        return Err(SpdtError::LengthMismatch {
            left: real.len(),
            right: observed.len(),
        });
    }
    if !real.iter().any(|&r| r > 0.0) {
        return Err(invalid("real", "series has no positive value"));
    }
    let per_day: Vec<Option<f64>> = real
        .iter()
        .zip(observed)
        .map(|(&r, &o)| (r > 0.0).then(|| 100.0 * (r - o) / r))
        .collect();
    let abs: Vec<f64> = per_day.iter().flatten().map(|a| a.abs()).collect();
    let (mape, std) = mean_std(&abs);
    let tr: f64 = real.iter().sum();
    let to: f64 = observed.iter().sum();
    Ok(ApeReport {
        skipped_days: per_day.iter().filter(|a| a.is_none()).count(),
        per_day,
        mape,
        std,
        cumulative: 100.0 * (tr - to) / tr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ActiveCopy, SpdtLink};

    #[test]
    fn repeat_links_collapse() {
        let mut g = TemporalGraph::empty(2, 100, 300, 36);
        g.copies.push(ActiveCopy { host: 0, copy_id: 0, t_s: 0, t_l: 10 });
        for k in 0..5 {
            g.links.push(SpdtLink { copy: 0, neighbor: 1, t_s_prime: k, t_l_prime: k + 1 });
        }
        let sg = project_static(&g);
        assert_eq!(sg.n_edges(), 1);
        assert!(sg.has_edge(0, 1) && !sg.has_edge(1, 0));
        assert_eq!(project_static(&TemporalGraph::empty(3, 1, 300, 0)).n_edges(), 0);
    }

    #[test]
    fn star_and_triangle() {
        let star = StaticGraph::from_edges(5, (1..5).map(|v| (0, v)));
        let ds = degree_stats(&star).unwrap();
        assert_eq!(ds.out_degrees[0], 4);
        assert!(ds.in_degrees[1..].iter().all(|&d| d == 1));
        let c = clustering_coefficients(&star);
        assert!(c.local.iter().all(|&x| x == 0.0));

        let tri = StaticGraph::from_edges(3, [(0, 1), (1, 2), (2, 0)]);
        let c = clustering_coefficients(&tri);
        assert_eq!(c.local, vec![1.0; 3]);
        assert_eq!(c.mean, 1.0);
    }

    #[test]
    fn reversal_keeps_correlation() {
        let sg = StaticGraph::from_edges(6, [(0, 1), (0, 2), (1, 2), (3, 0), (4, 0), (5, 4), (2, 5)]);
        let a = degree_stats(&sg).unwrap().pearson;
        let b = degree_stats(&sg.reversed()).unwrap().pearson;
        assert!((a - b).abs() < 1e-12);
        assert!(degree_stats(&StaticGraph::from_edges(1, [])).is_err());
    }

    #[test]
    fn rse_values() {
        assert_eq!(rse(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert!((rse(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(rse(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn histogram_pools_tail() {
        let h = Histogram::from_samples(&[1, 1, 2, 3, 9], 1, 3);
        assert_eq!(h.proportions, vec![0.4, 0.2, 0.2, 0.2]);
        let r = Histogram::from_pmf(|k| 0.5f64.powi(k as i32), 1, 2);
        assert_eq!(r.proportions, vec![0.5, 0.25, 0.25]);
        assert_eq!(percentile(&[5, 1, 3, 2, 4], 0.5), 3);
    }

    #[test]
    fn ape_arithmetic() {
        let r = ape_mape(&[100.0, 0.0, 50.0], &[80.0, 3.0, 50.0]).unwrap();
        assert_eq!(r.per_day, vec![Some(20.0), None, Some(0.0)]);
        assert_eq!(r.skipped_days, 1);
        assert_eq!(r.mape, 10.0);
        let same = ape_mape(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(same.per_day.iter().flatten().all(|&a| a == 0.0));
        assert!(ape_mape(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    }
}
