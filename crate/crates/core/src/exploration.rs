//! Walk-like exploration that samples an Erdős–Rényi graph on the go.
//!
//! The process starts at a uniform vertex. Whenever it stands on a vertex for
//! the first time, every pair between that vertex and the still-unvisited
//! vertices is explored and found open with probability `p = rho / n`.
//! It then moves to a uniform open neighbor, unless the current vertex has
//! none or no unvisited vertex is adjacent to an explored open edge, in
//! which case it jumps to a uniform vertex among all `n`. Pairs between two
//! unvisited vertices are never explored, so the graph induced on the
//! unvisited set is a fresh G(N, p).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::critical::{solve_xi, DEFAULT_TOL};
use crate::engine::{
    aggregate, binomial_two_sided_pvalue, chi_square_pvalue, ks_uniform_pvalue, merge_sparse_bins,
    run_trials, EstimateCI, RngStream, StreamRng,
};
use crate::error::{Error, Result};
use crate::graph::{geometric_skip, sample_gnp, Graph, Vertex};
use crate::walk::walk_time;

/// Unvisited vertices: swap-remove array with a position index.
#[derive(Debug, Clone)]
struct UnvisitedSet {
    items: Vec<Vertex>,
    pos: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl UnvisitedSet {
    fn full(n: usize) -> Self {
        UnvisitedSet {
            items: (0..n as Vertex).collect(),
            pos: (0..n as u32).collect(),
        }
    }

    fn contains(&self, v: Vertex) -> bool {
        self.pos[v as usize] != ABSENT
    }

    fn remove(&mut self, v: Vertex) {
        let i = self.pos[v as usize];
        debug_assert_ne!(i, ABSENT);
        let last = *self.items.last().unwrap();
        self.items.swap_remove(i as usize);
        if last != v {
            self.pos[last as usize] = i;
        }
        self.pos[v as usize] = ABSENT;
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advance {
    /// Moved to a uniform open neighbor.
    Walked,
    /// Jumped to a uniform vertex (current component covered).
    Jumped,
    /// Already covered; nothing happened.
    Covered,
}

#[derive(Debug, Clone)]
pub struct ExplorationState {
    n: usize,
    p: f64,
    ln_q: f64,
    step: u64,
    current: Vertex,
    visited: Vec<bool>,
    n_visited: usize,
    explored_adjacency: Vec<Vec<Vertex>>,
    unvisited: UnvisitedSet,
    on_frontier: Vec<bool>,
    frontier_count: usize,
    jumps: u64,
    covered: bool,
    rng: StreamRng,
}

impl ExplorationState {
    pub fn new(n: usize, rho: f64, stream: RngStream) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        if rho.is_nan() || rho < 0.0 {
            return Err(Error::InvalidParameter(format!("rho = {rho} must be nonnegative")));
        }
        if rho > n as f64 {
            return Err(Error::EdgeProbabilityExceedsOne { rho, n });
        }
        let p = rho / n as f64;
        let mut rng = stream.rng();
        let v0 = rng.gen_range(0..n) as Vertex;
        let mut state = ExplorationState {
            n,
            p,
            ln_q: (-p).ln_1p(),
            step: 0,
            current: v0,
            visited: vec![false; n],
            n_visited: 0,
            explored_adjacency: vec![Vec::new(); n],
            unvisited: UnvisitedSet::full(n),
            on_frontier: vec![false; n],
            frontier_count: 0,
            jumps: 0,
            covered: false,
            rng,
        };
        state.visit(v0);
        Ok(state)
    }

    /// Marks `v` visited and explores all pairs from `v` to unvisited vertices.
    fn visit(&mut self, v: Vertex) {
        self.visited[v as usize] = true;
        self.n_visited += 1;
        self.unvisited.remove(v);
        if self.on_frontier[v as usize] {
            self.on_frontier[v as usize] = false;
            self.frontier_count -= 1;
        }
        if self.p > 0.0 {
            let len = self.unvisited.len() as u64;
            let mut i = geometric_skip(&mut self.rng, self.ln_q);
            while i < len {
                let w = self.unvisited.items[i as usize];
                self.explored_adjacency[v as usize].push(w);
                self.explored_adjacency[w as usize].push(v);
                if !self.on_frontier[w as usize] {
                    self.on_frontier[w as usize] = true;
                    self.frontier_count += 1;
                }
                i = i.saturating_add(1).saturating_add(geometric_skip(&mut self.rng, self.ln_q));
            }
        }
        if self.unvisited.len() == 0 {
            self.covered = true;
        }
    }

    /// One step of the exploration.
    pub fn advance(&mut self) -> Advance {
        if self.covered {
            return Advance::Covered;
        }
        let neighbors = &self.explored_adjacency[self.current as usize];
        let (next, kind) = if !neighbors.is_empty() && self.frontier_count > 0 {
            let i = self.rng.gen_range(0..neighbors.len());
            (neighbors[i], Advance::Walked)
        } else {
            self.jumps += 1;
            (self.rng.gen_range(0..self.n) as Vertex, Advance::Jumped)
        };
        self.step += 1;
        self.current = next;
        if !self.visited[next as usize] {
            self.visit(next);
        }
        kind
    }

    /// Advances until `step == t` or the graph is covered.
    pub fn run_to(&mut self, t: u64) {
        while self.step < t && !self.covered {
            self.advance();
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn current(&self) -> Vertex {
        self.current
    }

    pub fn is_visited(&self, v: Vertex) -> bool {
        self.visited[v as usize]
    }

    pub fn visited_count(&self) -> usize {
        self.n_visited
    }

    pub fn unvisited_count(&self) -> usize {
        self.unvisited.len()
    }

    pub fn frontier_count(&self) -> usize {
        self.frontier_count
    }

    pub fn jumps(&self) -> u64 {
        self.jumps
    }

    pub fn covered(&self) -> bool {
        self.covered
    }

    /// Open edges found so far at `v`.
    pub fn explored_neighbors(&self, v: Vertex) -> &[Vertex] {
        &self.explored_adjacency[v as usize]
    }

    /// The graph of explored open edges.
    pub fn explored_graph(&self) -> Graph {
        let edges: Vec<(Vertex, Vertex)> = (0..self.n as Vertex)
            .flat_map(|a| {
                self.explored_adjacency[a as usize]
                    .iter()
                    .filter(move |&&b| b > a)
                    .map(move |&b| (a, b))
            })
            .collect();
        Graph::from_edges(self.n, &edges).expect("explored edges form a simple graph")
    }

    /// Recomputes the bookkeeping from scratch and reports the first
    /// inconsistency.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if !self.visited[self.current as usize] {
            return Err("current vertex not visited".into());
        }
        let visited = self.visited.iter().filter(|&&b| b).count();
        if visited != self.n_visited || visited + self.unvisited.len() != self.n {
            return Err(format!(
                "visited {visited} + unvisited {} != n {}",
                self.unvisited.len(),
                self.n
            ));
        }
        for (i, &v) in self.unvisited.items.iter().enumerate() {
            if self.visited[v as usize] || self.unvisited.pos[v as usize] != i as u32 {
                return Err(format!("unvisited index corrupt at {v}"));
            }
        }
        let mut frontier = 0;
        for v in 0..self.n {
            let adj = &self.explored_adjacency[v];
            if self.visited[v] == self.unvisited.contains(v as Vertex) {
                return Err(format!("membership of {v} disagrees with visited flag"));
            }
            if !self.visited[v] {
                if adj.iter().any(|&w| !self.visited[w as usize]) {
                    return Err(format!("explored edge between unvisited vertices at {v}"));
                }
                if !adj.is_empty() {
                    frontier += 1;
                }
                if self.on_frontier[v] != !adj.is_empty() {
                    return Err(format!("frontier flag wrong at {v}"));
                }
            }
        }
        if frontier != self.frontier_count {
            return Err(format!(
                "frontier count {} but {frontier} frontier vertices",
                self.frontier_count
            ));
        }
        if self.covered != (self.unvisited.len() == 0) {
            return Err("covered flag inconsistent".into());
        }
        Ok(())
    }

    /// Materialises the graph induced on the unvisited vertices. Its pairs
    /// are unexplored, so each is sampled afresh with probability `p` from
    /// `stream`; the exploration's own generator is untouched.
    pub fn vacant_snapshot(&self, stream: RngStream) -> Result<VacantGraphSnapshot> {
        let mut vertices = self.unvisited.items.clone();
        vertices.sort_unstable();
        let graph = sample_gnp(vertices.len(), self.p, &mut stream.rng())?;
        Ok(VacantGraphSnapshot {
            vertices,
            graph,
            t: self.step,
        })
    }
}

pub fn new_exploration(n: usize, rho: f64, stream: RngStream) -> Result<ExplorationState> {
    ExplorationState::new(n, rho, stream)
}

/// Unvisited vertices at time `t` with a freshly sampled induced graph.
/// Local vertex `i` of `graph` is `vertices[i]`.
#[derive(Debug, Clone)]
pub struct VacantGraphSnapshot {
    pub vertices: Vec<Vertex>,
    pub graph: Graph,
    pub t: u64,
}

/// Default burn-in `ceil(ln^3 n)` added to the exploration time.
pub fn default_burn_in(n: usize) -> u64 {
    (n as f64).ln().powi(3).ceil().max(0.0) as u64
}

/// Exploration time for level `u`: the walk time plus burn-in. For `rho <= 1`
/// there is no giant and the time scale is zero.
pub fn exploration_time(n: usize, rho: f64, u: f64, burn_in: u64) -> Result<u64> {
    if rho <= 1.0 {
        return Ok(burn_in);
    }
    let xi = solve_xi(rho, DEFAULT_TOL)?;
    Ok(walk_time(u, rho, xi, n)? + burn_in)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErLawReport {
    pub n: usize,
    pub rho: f64,
    pub u: f64,
    pub trials: usize,
    pub t_steps: u64,
    /// KS p-value of the per-trial edge-count binomial p-values; `None` when
    /// the test is degenerate (`p = 0`).
    pub ks_pvalue_edges: Option<f64>,
    pub degree_chisq_pvalue: Option<f64>,
    pub mean_vacant_fraction: f64,
    /// Mean of `|Vbar| rho / n`.
    pub mean_vacant_mean_degree: f64,
    pub skipped: Option<String>,
}

struct TrialSnapshot {
    n_vertices: usize,
    edges: usize,
    degree_counts: Vec<u64>,
}

/// Runs explorations to `t`, snapshots the vacant graph and tests it against
/// G(N, p): edge counts via binomial p-values pooled into a KS uniformity
/// test, and the pooled degree histogram against Binomial(N - 1, p).
pub fn er_law_check(
    n: usize,
    rho: f64,
    u: f64,
    n_trials: usize,
    burn_in: u64,
    stream: RngStream,
) -> Result<ErLawReport> {
    if n_trials < 50 {
        return Err(Error::InvalidParameter(format!(
            "er_law_check needs at least 50 trials, got {n_trials}"
        )));
    }
    let t = exploration_time(n, rho, u, burn_in)?;
    let snapshots = run_trials(&(), n_trials, stream.fork_seed(), |_, s| {
        let mut state = ExplorationState::new(n, rho, s.split(0))?;
        state.run_to(t);
        let snap = state.vacant_snapshot(s.split(1))?;
        let mut degree_counts = Vec::new();
        for x in 0..snap.graph.n() as Vertex {
            let d = snap.graph.degree(x);
            if degree_counts.len() <= d {
                degree_counts.resize(d + 1, 0);
            }
            degree_counts[d] += 1;
        }
        Ok(TrialSnapshot {
            n_vertices: snap.vertices.len(),
            edges: snap.graph.m(),
            degree_counts,
        })
    })?;
    let p = rho / n as f64;
    let fractions: Vec<f64> = snapshots.iter().map(|s| s.n_vertices as f64 / n as f64).collect();
    let mean_vacant_fraction = aggregate(&fractions)?.mean;
    let mut report = ErLawReport {
        n,
        rho,
        u,
        trials: n_trials,
        t_steps: t,
        ks_pvalue_edges: None,
        degree_chisq_pvalue: None,
        mean_vacant_fraction,
        mean_vacant_mean_degree: mean_vacant_fraction * rho,
        skipped: None,
    };
    if p == 0.0 {
        report.skipped = Some("edge test skipped: p=0".into());
        return Ok(report);
    }

    let pvalues = snapshots
        .iter()
        .map(|s| {
            let pairs = (s.n_vertices as u64) * (s.n_vertices as u64).saturating_sub(1) / 2;
            binomial_two_sided_pvalue(s.edges as u64, pairs, p)
        })
        .collect::<Result<Vec<f64>>>()?;
    report.ks_pvalue_edges = Some(ks_uniform_pvalue(&pvalues)?);

    let max_d = snapshots.iter().map(|s| s.degree_counts.len()).max().unwrap_or(1) + 5;
    let mut observed = vec![0.0; max_d + 1];
    let mut expected = vec![0.0; max_d + 1];
    for s in &snapshots {
        for (d, &c) in s.degree_counts.iter().enumerate() {
            observed[d] += c as f64;
        }
        if s.n_vertices == 0 {
            continue;
        }
        // Binomial(N - 1, p) pmf, last bin holds the upper tail
        let trials = (s.n_vertices - 1) as f64;
        let mut pmf = (trials * (-p).ln_1p()).exp();
        let mut cdf = 0.0;
        for d in 0..max_d {
            expected[d] += s.n_vertices as f64 * pmf;
            cdf += pmf;
            pmf *= (trials - d as f64).max(0.0) / (d as f64 + 1.0) * p / (1.0 - p);
        }
        expected[max_d] += s.n_vertices as f64 * (1.0 - cdf).max(0.0);
    }
    let (o, e) = merge_sparse_bins(&observed, &expected, 5.0);
    report.degree_chisq_pvalue = if o.len() >= 2 {
        Some(chi_square_pvalue(&o, &e, 0)?)
    } else {
        None
    };
    Ok(report)
}

/// Mean `|Vbar^u| / n` over `n_trials` explorations run to
/// `walk_time(u) + burn_in`. Trial streams depend only on `stream`, so calls
/// with different `u` share their random numbers.
pub fn mean_vacant_fraction(
    n: usize,
    rho: f64,
    u: f64,
    n_trials: usize,
    burn_in: u64,
    stream: RngStream,
) -> Result<EstimateCI> {
    let t = exploration_time(n, rho, u, burn_in)?;
    let fractions = run_trials(&(), n_trials, stream.fork_seed(), |_, s| {
        let mut state = ExplorationState::new(n, rho, s)?;
        state.run_to(t);
        Ok(state.unvisited_count() as f64 / n as f64)
    })?;
    aggregate(&fractions)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub u: f64,
    pub evaluations: usize,
}

/// Bisection for the `u` where the mean vacant mean degree
/// `|Vbar^u| rho / n` crosses 1, using common random numbers across `u`.
pub fn vacant_degree_crossing(
    n: usize,
    rho: f64,
    n_trials: usize,
    burn_in: u64,
    tol_u: f64,
    stream: RngStream,
) -> Result<Crossing> {
    let excess = |u: f64| -> Result<f64> {
        Ok(mean_vacant_fraction(n, rho, u, n_trials, burn_in, stream)?.mean * rho - 1.0)
    };
    let mut evaluations = 0;
    let mut hi = 1.0;
    loop {
        evaluations += 1;
        if excess(hi)? <= 0.0 {
            break;
        }
        hi *= 2.0;
        if hi > crate::critical::U_MAX_LIMIT {
            return Err(Error::NoSignChange { u_max: hi });
        }
    }
    let mut lo = 0.0;
    while hi - lo > tol_u {
        let mid = 0.5 * (lo + hi);
        evaluations += 1;
        if excess(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Crossing {
        u: 0.5 * (lo + hi),
        evaluations,
    })
}
