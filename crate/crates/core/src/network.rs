//! Diffusion on river networks shaped as rooted binary trees.
//!
//! Each edge carries a coordinate `x` in `[0, l_e]` with `x = 0` at its
//! downstream node. Inside an edge the process has diffusivity `D_e` and
//! drift `-v_e` (downstream). The root node is absorbing and leaves reflect.
//! At a junction the process behaves like a Walsh spider in the Brownian
//! coordinate `b = x / sqrt(D_e)` with edge weights `A_e sqrt(D_e)`, which
//! makes the edge through which it first leaves a small neighbourhood of
//! the node distributed in proportion to `A_e D_e`, and whose generator
//! carries the matching condition `sum_e A_e D_e du_e/dn = 0` (outward
//! derivatives).

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::paths::{par_paths, PathSample, SimConfig, Step};
use crate::rng::PathRng;
use crate::stats::MeanEstimate;

/// One channel segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub id: String,
    /// Downstream neighbour; `None` for the edge ending at the root.
    pub parent: Option<String>,
    pub length: f64,
    pub velocity: f64,
    pub area: f64,
    pub diffusivity: f64,
}

/// Validated rooted binary tree of edges.
#[derive(Debug, Clone, PartialEq)]
pub struct RiverNetwork {
    edges: Vec<Edge>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
    index: HashMap<String, usize>,
}

/// Position on the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkPosition {
    pub edge_id: String,
    pub x: f64,
}

impl RiverNetwork {
    pub fn from_edges(edges: Vec<Edge>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Network("the network has no edges".into()));
        }
        let mut index = HashMap::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            for (name, v, min) in [("length", e.length, 0.0), ("area", e.area, 0.0), ("diffusivity", e.diffusivity, 0.0)] {
                if !(v.is_finite() && v > min) {
                    return Err(Error::Network(format!("edge {}: {name} must be finite and positive, got {v}", e.id)));
                }
            }
            if !(e.velocity.is_finite() && e.velocity >= 0.0) {
                return Err(Error::Network(format!("edge {}: velocity must be finite and nonnegative", e.id)));
            }
            if index.insert(e.id.clone(), i).is_some() {
                return Err(Error::Network(format!("duplicate edge id {}", e.id)));
            }
        }
        let mut parent = vec![None; edges.len()];
        let mut children = vec![Vec::new(); edges.len()];
        let mut roots = Vec::new();
        for (i, e) in edges.iter().enumerate() {
            match &e.parent {
                None => roots.push(i),
                Some(p) => {
                    let &pi = index.get(p).ok_or_else(|| Error::Network(format!("edge {}: unknown parent {p}", e.id)))?;
                    if pi == i {
                        return Err(Error::Network(format!("edge {} is its own parent", e.id)));
                    }
                    parent[i] = Some(pi);
                    children[pi].push(i);
                }
            }
        }
        if roots.len() != 1 {
            return Err(Error::Network(format!("expected exactly one edge draining to the root, found {}", roots.len())));
        }
        for (i, c) in children.iter().enumerate() {
            if !(c.is_empty() || c.len() == 2) {
                return Err(Error::Network(format!(
                    "edge {} has {} upstream edges; junctions join exactly two",
                    edges[i].id,
                    c.len()
                )));
            }
        }
        // every edge must drain to the root
        let root = roots[0];
        let mut seen = vec![false; edges.len()];
        let mut stack = vec![root];
        while let Some(e) = stack.pop() {
            seen[e] = true;
            stack.extend(children[e].iter().copied());
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Network(format!("edge {} is on a cycle disconnected from the root", edges[i].id)));
        }
        Ok(Self { edges, parent, children, root, index })
    }

    /// Parses one edge per line: `edge_id parent_id length velocity area
    /// diffusivity`, with `ROOT` as the parent of the outlet edge. Text after
    /// `#` is ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(Error::Parse { line: k + 1, reason: format!("expected 6 fields, found {}", fields.len()) });
            }
            let num = |j: usize, name: &str| -> Result<f64> {
                fields[j]
                    .parse::<f64>()
                    .map_err(|e| Error::Parse { line: k + 1, reason: format!("{name} `{}`: {e}", fields[j]) })
            };
            edges.push(Edge {
                id: fields[0].to_string(),
                parent: (fields[1] != "ROOT").then(|| fields[1].to_string()),
                length: num(2, "length")?,
                velocity: num(3, "velocity")?,
                area: num(4, "area")?,
                diffusivity: num(5, "diffusivity")?,
            });
        }
        Self::from_edges(edges)
    }

    /// Writes the network in the format read by [`parse`](Self::parse).
    pub fn to_text(&self) -> String {
        let mut s = String::from("# edge_id parent_id length velocity area diffusivity\n");
        for e in &self.edges {
            s.push_str(&format!(
                "{} {} {} {} {} {}\n",
                e.id,
                e.parent.as_deref().unwrap_or("ROOT"),
                e.length,
                e.velocity,
                e.area,
                e.diffusivity
            ));
        }
        s
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, i: usize) -> &Edge {
        &self.edges[i]
    }

    pub fn edge_index(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::Network(format!("unknown edge {id}")))
    }

    pub fn root_edge(&self) -> usize {
        self.root
    }

    pub fn parent(&self, e: usize) -> Option<usize> {
        self.parent[e]
    }

    pub fn children(&self, e: usize) -> &[usize] {
        &self.children[e]
    }

    pub fn is_leaf(&self, e: usize) -> bool {
        self.children[e].is_empty()
    }

    pub fn max_diffusivity(&self) -> f64 {
        self.edges.iter().map(|e| e.diffusivity).fold(0.0, f64::max)
    }

    pub fn min_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min)
    }

    /// Edges meeting at the upstream node of `e` (itself first), or `None` at a leaf.
    pub fn junction(&self, e: usize) -> Option<[usize; 3]> {
        match self.children[e].as_slice() {
            [c1, c2] => Some([e, *c1, *c2]),
            _ => None,
        }
    }

    /// Relative discharge imbalance `|A0 v0 - A1 v1 - A2 v2| / (A0 v0)` at
    /// each junction exceeding `1e-9`, keyed by the downstream edge.
    pub fn discharge_imbalances(&self) -> Vec<(String, f64)> {
        (0..self.edges.len())
            .filter_map(|e| {
                let [e0, e1, e2] = self.junction(e)?;
                let q = |i: usize| self.edges[i].area * self.edges[i].velocity;
                let scale = q(e0).abs().max(q(e1).abs() + q(e2).abs()).max(f64::MIN_POSITIVE);
                let rel = (q(e0) - q(e1) - q(e2)).abs() / scale;
                (rel > 1e-9).then(|| (self.edges[e0].id.clone(), rel))
            })
            .collect()
    }

    /// Limit probabilities `A_e D_e / sum A D` of leaving the upstream node
    /// of `e` through each incident edge.
    pub fn junction_exit_law(&self, e: usize) -> Option<[(usize, f64); 3]> {
        let j = self.junction(e)?;
        let w = j.map(|i| self.edges[i].area * self.edges[i].diffusivity);
        let total: f64 = w.iter().sum();
        Some([(j[0], w[0] / total), (j[1], w[1] / total), (j[2], w[2] / total)])
    }

    pub fn position(&self, p: &NetworkPosition) -> Result<(usize, f64)> {
        let e = self.edge_index(&p.edge_id)?;
        if !(0.0..=self.edges[e].length).contains(&p.x) {
            return Err(invalid("x", format!("{} outside [0, {}] on edge {}", p.x, self.edges[e].length, p.edge_id)));
        }
        Ok((e, p.x))
    }
}

/// State of one walker.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Walker {
    edge: usize,
    x: f64,
    alive: bool,
}

/// Path sampler on a network for a fixed step size.
#[derive(Debug, Clone)]
pub struct NetworkStepper<'a> {
    net: &'a RiverNetwork,
    /// Node neighbourhood radius `3 sqrt(max D dt)`.
    delta: f64,
    /// Cumulative spider weights `A sqrt(D)` per junction, indexed by downstream edge.
    spider: Vec<Option<([usize; 3], [f64; 3])>>,
}

impl<'a> NetworkStepper<'a> {
    pub fn new(net: &'a RiverNetwork, dt: f64) -> Result<Self> {
        crate::error::ensure_positive("dt", dt)?;
        let delta = 3.0 * (net.max_diffusivity() * dt).sqrt();
        let reach = 2.0 * (delta + 6.0 * (net.max_diffusivity() * dt).sqrt());
        if net.min_length() <= reach {
            return Err(invalid(
                "dt",
                format!("steps reach {reach} but the shortest edge is {}; reduce dt", net.min_length()),
            ));
        }
        let spider = (0..net.edges.len())
            .map(|e| {
                net.junction(e).map(|j| {
                    let w = j.map(|i| net.edges[i].area * net.edges[i].diffusivity.sqrt());
                    let total: f64 = w.iter().sum();
                    (j, [w[0] / total, (w[0] + w[1]) / total, 1.0])
                })
            })
            .collect();
        Ok(Self { net, delta, spider })
    }

    fn pick(&self, node: usize, rng: &mut PathRng) -> usize {
        let (edges, cum) = self.spider[node].expect("junction");
        let u: f64 = rng.random();
        edges[cum.iter().position(|&c| u < c).unwrap_or(2)]
    }

    /// Position at distance `d` from the upstream node of `node` along `edge`.
    fn x_from_node(&self, node: usize, edge: usize, d: f64) -> f64 {
        if edge == node {
            self.net.edges[edge].length - d
        } else {
            d
        }
    }

    /// Exact Walsh-spider step from B-distance `r` on `edge` around the
    /// upstream node of `node`; returns the new edge and physical distance.
    fn spider_step(&self, node: usize, edge: usize, r: f64, step: Step, rng: &mut PathRng) -> (usize, f64) {
        let w = r + step.sqrt_dt * rng.sample::<f64, _>(StandardNormal);
        let hit = w <= 0.0 || rng.random::<f64>() < (-2.0 * r * w / step.dt).exp();
        let next = if hit { self.pick(node, rng) } else { edge };
        (next, w.abs() * self.net.edges[next].diffusivity.sqrt())
    }

    /// Moves an out-of-range position back onto the network: through the
    /// root (absorbed), a leaf (folded) or a junction (spider choice).
    fn settle(&self, mut s: Walker, rng: &mut PathRng) -> Walker {
        for _ in 0..8 {
            let e = &self.net.edges[s.edge];
            if s.x < 0.0 {
                match self.net.parent[s.edge] {
                    None => return Walker { x: 0.0, alive: false, ..s },
                    Some(p) => {
                        let b = -s.x / e.diffusivity.sqrt();
                        let next = self.pick(p, rng);
                        s = Walker { edge: next, x: self.x_from_node(p, next, b * self.net.edges[next].diffusivity.sqrt()), alive: true };
                    }
                }
            } else if s.x > e.length {
                if self.net.is_leaf(s.edge) {
                    s.x = 2.0 * e.length - s.x;
                } else {
                    let b = (s.x - e.length) / e.diffusivity.sqrt();
                    let node = s.edge;
                    let next = self.pick(node, rng);
                    s = Walker { edge: next, x: self.x_from_node(node, next, b * self.net.edges[next].diffusivity.sqrt()), alive: true };
                }
            } else {
                return s;
            }
        }
        Walker { x: s.x.clamp(0.0, self.net.edges[s.edge].length), ..s }
    }

    fn step(&self, s: Walker, step: Step, rng: &mut PathRng) -> Walker {
        if !s.alive {
            return s;
        }
        let e = &self.net.edges[s.edge];
        let near_up = !self.net.is_leaf(s.edge) && e.length - s.x < self.delta;
        let near_down = self.net.parent[s.edge].is_some() && s.x < self.delta;
        if near_up || near_down {
            let (node, dist) = if near_up { (s.edge, e.length - s.x) } else { (self.net.parent[s.edge].expect("checked"), s.x) };
            let (next, d) = self.spider_step(node, s.edge, dist / e.diffusivity.sqrt(), step, rng);
            let x = self.x_from_node(node, next, d) - self.net.edges[next].velocity * step.dt;
            return self.settle(Walker { edge: next, x, alive: true }, rng);
        }
        let sd = (e.diffusivity * step.dt).sqrt();
        let y = s.x - e.velocity * step.dt + sd * rng.sample::<f64, _>(StandardNormal);
        if s.edge == self.net.root && y > 0.0 && s.x < 8.0 * sd {
            let p = (-2.0 * s.x * y / (e.diffusivity * step.dt)).exp();
            if rng.random::<f64>() < p {
                return Walker { x: 0.0, alive: false, ..s };
            }
        }
        self.settle(Walker { x: y, ..s }, rng)
    }
}

/// Trajectories on the network; `edges` holds the edge index of every
/// point. Absorbed paths stay at `x = 0` of the root edge.
pub fn simulate_network_path(net: &RiverNetwork, start: &NetworkPosition, config: &SimConfig) -> Result<Vec<PathSample>> {
    config.validate()?;
    let (edge, x) = net.position(start)?;
    let stepper = NetworkStepper::new(net, config.dt)?;
    let grid = config.grid();
    Ok(par_paths(config.n_paths, config.seed, |_, rng| {
        let mut s = Walker { edge, x, alive: true };
        let mut times = vec![0.0];
        let mut positions = vec![x];
        let mut edges = vec![edge];
        for i in 0..grid.n_steps {
            s = stepper.step(s, grid.step(i), rng);
            times.push(grid.time(i + 1));
            positions.push(s.x);
            edges.push(s.edge);
        }
        PathSample { times, positions, edges: Some(edges) }
    }))
}

/// Fraction of paths started at the upstream node of `node_edge` that first
/// reach distance `epsilon` from the node along each incident edge.
pub fn junction_exit_frequencies(
    net: &RiverNetwork,
    node_edge: &str,
    epsilon: f64,
    config: &SimConfig,
) -> Result<Vec<(String, MeanEstimate, f64)>> {
    config.validate()?;
    crate::error::ensure_positive("epsilon", epsilon)?;
    let node = net.edge_index(node_edge)?;
    let law = net.junction_exit_law(node).ok_or_else(|| invalid("node_edge", format!("edge {node_edge} ends at a leaf")))?;
    if law.iter().any(|(e, _)| net.edges[*e].length <= epsilon) {
        return Err(invalid("epsilon", "must be shorter than every incident edge"));
    }
    let stepper = NetworkStepper::new(net, config.dt)?;
    let grid = config.grid();
    let exits = par_paths(config.n_paths, config.seed, |_, rng| {
        let mut s = Walker { edge: node, x: net.edges[node].length, alive: true };
        for i in 0..grid.n_steps {
            s = stepper.step(s, grid.step(i), rng);
            let dist = if s.edge == node {
                net.edges[node].length - s.x
            } else if law.iter().any(|(e, _)| *e == s.edge) {
                s.x
            } else {
                f64::INFINITY
            };
            if dist >= epsilon {
                return Some(s.edge);
            }
        }
        None
    });
    if let Some(unexited) = Some(exits.iter().filter(|e| e.is_none()).count()).filter(|&n| n > 0) {
        return Err(Error::HorizonTooShort { fraction: unexited as f64 / exits.len() as f64 });
    }
    Ok(law
        .iter()
        .map(|&(e, p)| {
            let hits = exits.iter().filter(|x| **x == Some(e)).count();
            (net.edges[e].id.clone(), MeanEstimate::proportion(hits, exits.len()), p)
        })
        .collect())
}

/// One histogram bin of a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBin {
    pub edge_id: String,
    pub x_lo: f64,
    pub x_hi: f64,
    pub count: usize,
    pub mass: f64,
}

impl KernelBin {
    pub fn center(&self) -> f64 {
        0.5 * (self.x_lo + self.x_hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub bins: Vec<KernelBin>,
    pub absorbed_count: usize,
    pub absorbed_fraction: f64,
    pub n_paths: usize,
}

impl KernelEstimate {
    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum::<usize>() + self.absorbed_count
    }
}

/// Equal-width bins along every edge (the last bin on an edge may be shorter).
pub fn edge_bins(net: &RiverNetwork, bin_width: f64) -> Vec<(usize, f64, f64)> {
    let mut bins = Vec::new();
    for (e, edge) in net.edges.iter().enumerate() {
        let n = (edge.length / bin_width - 1e-9).ceil().max(1.0) as usize;
        for k in 0..n {
            bins.push((e, k as f64 * bin_width, ((k + 1) as f64 * bin_width).min(edge.length)));
        }
    }
    bins
}

fn histogram(net: &RiverNetwork, bin_width: f64, finals: &[Walker]) -> KernelEstimate {
    let layout = edge_bins(net, bin_width);
    let mut offset = vec![0; net.edges.len()];
    for (k, (e, lo, _)) in layout.iter().enumerate() {
        if *lo == 0.0 {
            offset[*e] = k;
        }
    }
    let mut counts = vec![0usize; layout.len()];
    let mut absorbed = 0;
    for s in finals {
        if !s.alive {
            absorbed += 1;
            continue;
        }
        let n_e = (net.edges[s.edge].length / bin_width - 1e-9).ceil().max(1.0) as usize;
        let k = ((s.x / bin_width) as usize).min(n_e - 1);
        counts[offset[s.edge] + k] += 1;
    }
    let n = finals.len();
    KernelEstimate {
        bins: layout
            .iter()
            .zip(&counts)
            .map(|(&(e, lo, hi), &c)| KernelBin { edge_id: net.edges[e].id.clone(), x_lo: lo, x_hi: hi, count: c, mass: c as f64 / n as f64 })
            .collect(),
        absorbed_count: absorbed,
        absorbed_fraction: absorbed as f64 / n as f64,
        n_paths: n,
    }
}

/// Histogram of positions at `t_end` (absorbed paths counted separately).
pub fn network_histogram_mc(net: &RiverNetwork, start: &NetworkPosition, t_end: f64, bin_width: f64, config: &SimConfig) -> Result<KernelEstimate> {
    crate::error::ensure_positive("bin_width", bin_width)?;
    let cfg = SimConfig { horizon: t_end, ..*config };
    cfg.validate()?;
    let (edge, x) = net.position(start)?;
    let stepper = NetworkStepper::new(net, cfg.dt)?;
    let grid = cfg.grid();
    let finals = par_paths(cfg.n_paths, cfg.seed, |_, rng| {
        let mut s = Walker { edge, x, alive: true };
        for i in 0..grid.n_steps {
            s = stepper.step(s, grid.step(i), rng);
            if !s.alive {
                break;
            }
        }
        s
    });
    Ok(histogram(net, bin_width, &finals))
}

/// Dispersal kernel `P_y(X(tau) in dx)` with `tau ~ Exponential(sigma)`,
/// independent of the path.
pub fn dispersal_kernel_mc(
    net: &RiverNetwork,
    start: &NetworkPosition,
    sigma: f64,
    bin_width: f64,
    config: &SimConfig,
) -> Result<KernelEstimate> {
    crate::error::ensure_positive("sigma", sigma)?;
    crate::error::ensure_positive("bin_width", bin_width)?;
    crate::error::ensure_positive("dt", config.dt)?;
    let (edge, x) = net.position(start)?;
    let stepper = NetworkStepper::new(net, config.dt)?;
    let settle = Exp::new(sigma).map_err(|e| invalid("sigma", e.to_string()))?;
    let full = Step::new(config.dt);
    let finals = par_paths(config.n_paths, config.seed, |_, rng| {
        let tau: f64 = rng.sample(settle);
        let n_full = (tau / config.dt).floor() as u64;
        let rest = tau - n_full as f64 * config.dt;
        let mut s = Walker { edge, x, alive: true };
        for _ in 0..n_full {
            s = stepper.step(s, full, rng);
            if !s.alive {
                return s;
            }
        }
        if rest > 0.0 {
            s = stepper.step(s, Step::new(rest), rng);
        }
        s
    });
    Ok(histogram(net, bin_width, &finals))
}

/// Mass of the kernel `sqrt(sigma / (2 D)) exp(-|x - y| sqrt(2 sigma / D))`
/// on `[lo, hi]`.
pub fn laplace_kernel_mass(sigma: f64, d: f64, y: f64, lo: f64, hi: f64) -> f64 {
    let k = (2.0 * sigma / d).sqrt();
    // cumulative distribution of the two-sided exponential with rate k centred at y
    let cdf = |x: f64| if x < y { 0.5 * (k * (x - y)).exp() } else { 1.0 - 0.5 * (-k * (x - y)).exp() };
    cdf(hi) - cdf(lo)
}

/// Concentration profile on one edge from the network PDE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeProfile {
    pub edge_id: String,
    pub x: Vec<f64>,
    /// Mass per unit length `A_e c_e(x)`.
    pub q: Vec<f64>,
}

impl EdgeProfile {
    /// Integral of the piecewise-linear interpolant of `q` over `[lo, hi]`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let mut total = 0.0;
        for j in 0..self.x.len() - 1 {
            let (a, b) = (self.x[j].max(lo), self.x[j + 1].min(hi));
            if b <= a {
                continue;
            }
            let h = self.x[j + 1] - self.x[j];
            let at = |x: f64| self.q[j] + (self.q[j + 1] - self.q[j]) * (x - self.x[j]) / h;
            total += 0.5 * (b - a) * (at(a) + at(b));
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSolution {
    pub t_end: f64,
    pub edges: Vec<EdgeProfile>,
    pub times: Vec<f64>,
    /// Mass left in the network after each step.
    pub mass: Vec<f64>,
    /// Cumulative mass absorbed at the root after each step.
    pub absorbed: Vec<f64>,
}

impl NetworkSolution {
    /// Expected mass per histogram bin, aligned with [`edge_bins`].
    pub fn bin_masses(&self, net: &RiverNetwork, bin_width: f64) -> Vec<f64> {
        edge_bins(net, bin_width).iter().map(|&(e, lo, hi)| self.edges[e].mass_between(lo, hi)).collect()
    }
}

/// Discretization of the forward equation on the tree: a vertex per grid
/// point, shared vertices at junctions, the root vertex held at zero.
struct TreeSystem {
    cap: Vec<f64>,
    diag: Vec<f64>,
    parent: Vec<usize>,
    /// Row `i` coefficient of `c_parent` in `L`.
    to_parent: Vec<f64>,
    /// Row `parent` coefficient of `c_i` in `L`.
    from_child: Vec<f64>,
    /// Vertices ordered from the root outwards.
    order: Vec<usize>,
    /// Per edge, the vertex of every grid point from downstream to upstream.
    points: Vec<Vec<usize>>,
    xs: Vec<Vec<f64>>,
    /// Conductance and advection of the link into the root.
    root_link: (usize, f64, f64),
}

impl TreeSystem {
    fn build(net: &RiverNetwork, dx: f64) -> Self {
        let n_edges = net.edges.len();
        // vertex 0 is the root; each edge owns its interior points and its upstream vertex
        let mut n_vertices = 1;
        let mut upstream = vec![0; n_edges];
        let mut cells = vec![0; n_edges];
        for e in 0..n_edges {
            cells[e] = ((net.edges[e].length / dx).round() as usize).max(2);
        }
        let mut points = vec![Vec::new(); n_edges];
        let mut xs = vec![Vec::new(); n_edges];
        // breadth-first so a parent's upstream vertex exists before its children use it
        let mut queue = std::collections::VecDeque::from([net.root]);
        let mut edge_order = Vec::with_capacity(n_edges);
        while let Some(e) = queue.pop_front() {
            edge_order.push(e);
            queue.extend(net.children[e].iter().copied());
        }
        for &e in &edge_order {
            let down = net.parent[e].map_or(0, |p| upstream[p]);
            let n = cells[e];
            let h = net.edges[e].length / n as f64;
            let mut pts = vec![down];
            for _ in 1..=n {
                pts.push(n_vertices);
                n_vertices += 1;
            }
            upstream[e] = pts[n];
            xs[e] = (0..=n).map(|j| if j == n { net.edges[e].length } else { j as f64 * h }).collect();
            points[e] = pts;
        }
        let mut cap = vec![0.0; n_vertices];
        let mut diag = vec![0.0; n_vertices];
        let mut parent = vec![usize::MAX; n_vertices];
        let mut to_parent = vec![0.0; n_vertices];
        let mut from_child = vec![0.0; n_vertices];
        let mut root_link = (0, 0.0, 0.0);
        let mut order = vec![0];
        for &e in &edge_order {
            let edge = &net.edges[e];
            for j in 0..cells[e] {
                let (lo, hi) = (points[e][j], points[e][j + 1]);
                let h = xs[e][j + 1] - xs[e][j];
                let g = 0.5 * edge.area * edge.diffusivity / h;
                let a = edge.area * edge.velocity;
                cap[lo] += 0.5 * edge.area * h;
                cap[hi] += 0.5 * edge.area * h;
                // flux into lo: g (c_hi - c_lo) + a c_hi
                diag[lo] -= g;
                diag[hi] -= g + a;
                parent[hi] = lo;
                to_parent[hi] = g;
                from_child[hi] = g + a;
                order.push(hi);
                if lo == 0 {
                    root_link = (hi, g, a);
                }
            }
        }
        Self { cap, diag, parent, to_parent, from_child, order, points, xs, root_link }
    }

    /// Solves `(C/dt - L) c_new = C/dt c_old` with `c_root = 0`.
    fn implicit_step(&self, c: &mut [f64], dt: f64, d: &mut [f64]) -> Result<()> {
        let n = c.len();
        for i in 0..n {
            d[i] = self.cap[i] / dt - self.diag[i];
            c[i] *= self.cap[i] / dt;
        }
        d[0] = 1.0;
        c[0] = 0.0;
        // eliminate children into parents, leaves first
        for &i in self.order.iter().skip(1).rev() {
            let p = self.parent[i];
            if p == 0 {
                continue;
            }
            if !(d[i].abs() > 1e-300) {
                return Err(Error::SingularSystem { row: i, pivot: d[i] });
            }
            let m = -self.from_child[i] / d[i];
            d[p] -= m * (-self.to_parent[i]);
            c[p] -= m * c[i];
        }
        for &i in self.order.iter().skip(1) {
            let p = self.parent[i];
            c[i] = (c[i] + self.to_parent[i] * c[p]) / d[i];
        }
        Ok(())
    }
}

/// Forward (Fokker–Planck) equation for the network process solved by
/// backward Euler on a grid of spacing about `dx`, from a unit mass at
/// `start`. The concentration `c` is continuous at nodes, mass per length is
/// `A_e c_e`, fluxes `A_e ((1/2) D_e c_x + v_e c)` balance at junctions, the
/// root holds `c = 0` and leaves have zero flux.
pub fn network_pde_crosscheck(net: &RiverNetwork, start: &NetworkPosition, t_end: f64, dx: f64, dt: f64) -> Result<NetworkSolution> {
    crate::error::ensure_positive("t_end", t_end)?;
    crate::error::ensure_positive("dx", dx)?;
    crate::error::ensure_positive("dt", dt)?;
    if net.edges.len() > 15 {
        return Err(invalid("network", "the PDE cross-check is limited to 15 edges"));
    }
    let (edge, x0) = net.position(start)?;
    let sys = TreeSystem::build(net, dx);
    let n = sys.cap.len();
    let mut c = vec![0.0; n];
    let xs = &sys.xs[edge];
    let j = xs.partition_point(|&x| x <= x0).saturating_sub(1).min(xs.len() - 2);
    let w = (x0 - xs[j]) / (xs[j + 1] - xs[j]);
    for (k, share) in [(j, 1.0 - w), (j + 1, w)] {
        let v = sys.points[edge][k];
        if v != 0 && share > 0.0 {
            c[v] += share / sys.cap[v];
        }
    }
    let mass_of = |c: &[f64]| crate::stats::compensated_sum(sys.cap.iter().zip(c).skip(1).map(|(a, b)| a * b));
    let steps = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut d = vec![0.0; n];
    let mut times = vec![0.0];
    let mut mass = vec![mass_of(&c)];
    let mut absorbed = vec![1.0 - mass[0]];
    let (first, g, a) = sys.root_link;
    for k in 0..steps {
        sys.implicit_step(&mut c, h, &mut d)?;
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        let inflow = h * (g + a) * c[first];
        times.push((k + 1) as f64 * h);
        mass.push(mass_of(&c));
        absorbed.push(absorbed[k] + inflow);
    }
    let edges = net
        .edges
        .iter()
        .enumerate()
        .map(|(e, edge)| EdgeProfile {
            edge_id: edge.id.clone(),
            x: sys.xs[e].clone(),
            q: sys.points[e].iter().map(|&v| edge.area * c[v]).collect(),
        })
        .collect();
    Ok(NetworkSolution { t_end, edges, times, mass, absorbed })
}
