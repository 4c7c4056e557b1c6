//! Temporal SPDT graph: active copies, their links, and the line-oriented
//! graph file.
//!
//! A copy occupies the half-open step interval `[t_s, t_l)` and keeps
//! accepting links until it expires at `t_l + delta`. A link records when the
//! neighbor arrived (`t_s_prime`) and left (`t_l_prime`).

use std::io::{BufRead, Write};

use crate::error::{parse_err, Result, SpdtError};
use crate::params::Step;

pub type NodeId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActiveCopy {
    pub host: NodeId,
    pub copy_id: u32,
    pub t_s: Step,
    pub t_l: Step,
}

impl ActiveCopy {
    pub fn duration(&self) -> Step {
        self.t_l - self.t_s
    }

    pub fn expiry(&self, delta_steps: Step) -> Step {
        self.t_l + delta_steps
    }
}

/// Which part of the host's presence a link overlaps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LinkComponent {
    /// Neighbor leaves before (or when) the host leaves.
    DirectOnly,
    /// Neighbor arrives after the host has left.
    IndirectOnly,
    /// Neighbor overlaps the host and stays past its departure.
    Both,
}

impl LinkComponent {
    /// Classifies a link against its copy's departure step. Requires
    /// `t_s_prime < t_l_prime`.
    pub fn classify(t_l: Step, t_s_prime: Step, t_l_prime: Step) -> Self {
        if t_s_prime >= t_l {
            LinkComponent::IndirectOnly
        } else if t_l_prime <= t_l {
            LinkComponent::DirectOnly
        } else {
            LinkComponent::Both
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpdtLink {
    /// Index into [`TemporalGraph::copies`].
    pub copy: u32,
    pub neighbor: NodeId,
    pub t_s_prime: Step,
    pub t_l_prime: Step,
}

impl SpdtLink {
    pub fn delay(&self, copy: &ActiveCopy) -> Step {
        self.t_s_prime - copy.t_s
    }

    pub fn duration(&self) -> Step {
        self.t_l_prime - self.t_s_prime
    }
}

/// Copies are ordered by `(host, copy_id)`; links are grouped by copy in
/// the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalGraph {
    pub n_nodes: u32,
    pub horizon: Step,
    pub step_seconds: u32,
    pub delta_steps: Step,
    pub copies: Vec<ActiveCopy>,
    pub links: Vec<SpdtLink>,
    /// Per-node accessibility; `None` for ingested or baseline graphs.
    pub lambdas: Option<Vec<f64>>,
}

impl TemporalGraph {
    pub fn empty(n_nodes: u32, horizon: Step, step_seconds: u32, delta_steps: Step) -> Self {
        Self {
            n_nodes,
            horizon,
            step_seconds,
            delta_steps,
            copies: Vec::new(),
            links: Vec::new(),
            lambdas: None,
        }
    }

    pub fn copy_of(&self, link: &SpdtLink) -> &ActiveCopy {
        &self.copies[link.copy as usize]
    }

    pub fn component(&self, link: &SpdtLink) -> LinkComponent {
        let copy = self.copy_of(link);
        LinkComponent::classify(copy.t_l, link.t_s_prime, link.t_l_prime)
    }

    /// Offsets such that copy `i` owns `links[offsets[i]..offsets[i + 1]]`.
    pub fn link_offsets(&self) -> Vec<usize> {
        let mut offsets = vec![0usize; self.copies.len() + 1];
        for l in &self.links {
            offsets[l.copy as usize + 1] += 1;
        }
        for i in 0..self.copies.len() {
            offsets[i + 1] += offsets[i];
        }
        offsets
    }

    /// Number of links owned by each copy.
    pub fn copy_degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.copies.len()];
        for l in &self.links {
            deg[l.copy as usize] += 1;
        }
        deg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SpdtError::InvalidGraph(msg));
        if self.step_seconds == 0 {
            return bad("step_seconds must be positive".into());
        }
        if let Some(l) = &self.lambdas {
            if l.len() != self.n_nodes as usize {
                return bad(format!("{} lambdas for {} nodes", l.len(), self.n_nodes));
            }
        }
        for (i, c) in self.copies.iter().enumerate() {
            if c.host >= self.n_nodes {
                return bad(format!("copy {i}: host {} out of range", c.host));
            }
            if c.t_s >= c.t_l {
                return bad(format!("copy {i}: t_s {} >= t_l {}", c.t_s, c.t_l));
            }
            if c.t_l > self.horizon {
                return bad(format!("copy {i}: t_l {} beyond horizon", c.t_l));
            }
            if i > 0 {
                let prev = &self.copies[i - 1];
                if (prev.host, prev.copy_id) >= (c.host, c.copy_id) {
                    return bad(format!("copy {i}: copies not ordered by (host, copy_id)"));
                }
                if prev.host == c.host && c.t_s < prev.t_l {
                    return bad(format!(
                        "host {}: copies {} and {} overlap",
                        c.host, prev.copy_id, c.copy_id
                    ));
                }
            }
        }
        let mut last_copy = 0u32;
        for (i, l) in self.links.iter().enumerate() {
            if l.copy as usize >= self.copies.len() {
                return bad(format!("link {i}: unknown copy {}", l.copy));
            }
            if l.copy < last_copy {
                return bad(format!("link {i}: links not grouped by copy"));
            }
            last_copy = l.copy;
            let c = self.copy_of(l);
            if l.neighbor >= self.n_nodes || l.neighbor == c.host {
                return bad(format!("link {i}: bad neighbor {}", l.neighbor));
            }
            if l.t_s_prime < c.t_s || l.t_s_prime > c.expiry(self.delta_steps) {
                return bad(format!(
                    "link {i}: arrival {} outside [{}, {}]",
                    l.t_s_prime,
                    c.t_s,
                    c.expiry(self.delta_steps)
                ));
            }
            if l.t_l_prime <= l.t_s_prime {
                return bad(format!("link {i}: non-positive duration"));
            }
        }
        Ok(())
    }

    /// Writes the graph file. Output is a pure function of the graph.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#nodes={}", self.n_nodes)?;
        writeln!(w, "#horizon={}", self.horizon)?;
        writeln!(w, "#step_seconds={}", self.step_seconds)?;
        writeln!(w, "#delta_steps={}", self.delta_steps)?;
        let offsets = self.link_offsets();
        for (i, c) in self.copies.iter().enumerate() {
            let links = &self.links[offsets[i]..offsets[i + 1]];
            if links.is_empty() {
                writeln!(w, "{} {} {} {} - - -", c.host, c.copy_id, c.t_s, c.t_l)?;
            }
            for l in links {
                writeln!(
                    w,
                    "{} {} {} {} {} {} {}",
                    c.host, c.copy_id, c.t_s, c.t_l, l.neighbor, l.t_s_prime, l.t_l_prime
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_file_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Reads and validates a graph file.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut header: [Option<u32>; 4] = [None; 4];
        const KEYS: [&str; 4] = ["nodes", "horizon", "step_seconds", "delta_steps"];
        let mut copies: Vec<ActiveCopy> = Vec::new();
        let mut links = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| parse_err(lineno, "bad header line"))?;
                let idx = KEYS
                    .iter()
                    .position(|x| *x == k.trim())
                    .ok_or_else(|| parse_err(lineno, format!("unknown header `{k}`")))?;
                let v = v
                    .trim()
                    .parse::<u32>()
                    .map_err(|e| parse_err(lineno, e.to_string()))?;
                header[idx] = Some(v);
                continue;
            }
            let fields: Vec<&str> = line.split_ascii_whitespace().collect();
            if fields.len() != 7 {
                return Err(parse_err(lineno, "expected 7 fields"));
            }
            let num = |s: &str| -> Result<u32> {
                s.parse::<u32>()
                    .map_err(|e| parse_err(lineno, format!("`{s}`: {e}")))
            };
            let copy = ActiveCopy {
                host: num(fields[0])?,
                copy_id: num(fields[1])?,
                t_s: num(fields[2])?,
                t_l: num(fields[3])?,
            };
            let same_as_last = copies
                .last()
                .is_some_and(|c| c.host == copy.host && c.copy_id == copy.copy_id);
            if same_as_last {
                if *copies.last().unwrap() != copy {
                    return Err(parse_err(lineno, "inconsistent copy times"));
                }
            } else {
                copies.push(copy);
            }
            let copy_idx = (copies.len() - 1) as u32;
            if fields[4..] == ["-", "-", "-"] {
                if same_as_last {
                    return Err(parse_err(lineno, "linkless marker for a copy with links"));
                }
                continue;
            }
            links.push(SpdtLink {
                copy: copy_idx,
                neighbor: num(fields[4])?,
                t_s_prime: num(fields[5])?,
                t_l_prime: num(fields[6])?,
            });
        }
        let get = |idx: usize| header[idx].ok_or_else(|| parse_err(0, format!("missing #{}", KEYS[idx])));
        let g = TemporalGraph {
            n_nodes: get(0)?,
            horizon: get(1)?,
            step_seconds: get(2)?,
            delta_steps: get(3)?,
            copies,
            links,
            lambdas: None,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn from_file_str(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }
}
