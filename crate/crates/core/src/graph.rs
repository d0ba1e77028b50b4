//! Erdős–Rényi sampling, connected components and typical-graph checks.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::RngStream;
use crate::error::{Error, Result};

pub type Vertex = u32;

/// Label used for vertices outside a masked labeling.
pub const NO_COMPONENT: u32 = u32::MAX;

/// Undirected simple graph in compressed sparse row form. Neighbor lists are
/// sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    m: usize,
    offsets: Vec<usize>,
    targets: Vec<Vertex>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            n,
            m: 0,
            offsets: vec![0; n + 1],
            targets: Vec::new(),
        }
    }

    /// Builds a graph from undirected edges. Self-loops and duplicate edges
    /// are rejected.
    pub fn from_edges(n: usize, edges: &[(Vertex, Vertex)]) -> Result<Self> {
        let mut degree = vec![0usize; n];
        for &(a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) out of range for n = {n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at {a}")));
            }
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut targets = vec![0 as Vertex; offsets[n]];
        for &(a, b) in edges {
            targets[fill[a as usize]] = b;
            fill[a as usize] += 1;
            targets[fill[b as usize]] = a;
            fill[b as usize] += 1;
        }
        for x in 0..n {
            let list = &mut targets[offsets[x]..offsets[x + 1]];
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate edge at vertex {x}"
                )));
            }
        }
        Ok(Graph {
            n,
            m: edges.len(),
            offsets,
            targets,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn neighbors(&self, x: Vertex) -> &[Vertex] {
        let x = x as usize;
        &self.targets[self.offsets[x]..self.offsets[x + 1]]
    }

    #[inline]
    pub fn degree(&self, x: Vertex) -> usize {
        let x = x as usize;
        self.offsets[x + 1] - self.offsets[x]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n as Vertex).map(|x| self.degree(x)).max().unwrap_or(0)
    }

    pub fn has_edge(&self, a: Vertex, b: Vertex) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    /// Each undirected edge once, as `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (Vertex, Vertex)> + '_ {
        (0..self.n as Vertex).flat_map(move |a| {
            self.neighbors(a)
                .iter()
                .filter(move |&&b| b > a)
                .map(move |&b| (a, b))
        })
    }

    /// Writes the edge-list dump: header `n m`, then one `u v` per line.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.n, self.m)?;
        for (a, b) in self.edges() {
            writeln!(w, "{a} {b}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidParameter("empty edge list".into()))??;
        let parse_pair = |line: &str| -> Result<(usize, usize)> {
            let mut it = line.split_whitespace().map(|t| t.parse::<usize>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) => Ok((a, b)),
                _ => Err(Error::InvalidParameter(format!("bad edge-list line {line:?}"))),
            }
        };
        let (n, m) = parse_pair(&header)?;
        let mut edges = Vec::with_capacity(m);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (a, b) = parse_pair(&line)?;
            edges.push((a as Vertex, b as Vertex));
        }
        if edges.len() != m {
            return Err(Error::InvalidParameter(format!(
                "header announces {m} edges, found {}",
                edges.len()
            )));
        }
        Graph::from_edges(n, &edges)
    }

    /// Subgraph induced by `keep`, on the original vertex ids (vertices not
    /// kept become isolated).
    pub fn induced_edges(&self, keep: &[bool]) -> Vec<(Vertex, Vertex)> {
        self.edges()
            .filter(|&(a, b)| keep[a as usize] && keep[b as usize])
            .collect()
    }
}

/// Geometric gap between successes of Bernoulli(`p`) trials: the number of
/// failures before the next success. `ln_q` is `ln(1 - p)`.
#[inline]
pub(crate) fn geometric_skip<R: Rng + ?Sized>(rng: &mut R, ln_q: f64) -> u64 {
    // 1 - U lies in (0, 1], so the log is finite
    let u: f64 = 1.0 - rng.gen::<f64>();
    let g = (u.ln() / ln_q).floor();
    if g >= u64::MAX as f64 {
        u64::MAX
    } else {
        g as u64
    }
}

/// G(n, p) by geometric skipping over the lexicographic enumeration of the
/// `n(n-1)/2` vertex pairs. Expected cost O(n + m).
pub fn sample_gnp<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("edge probability {p} outside [0, 1]")));
    }
    let mut edges = Vec::new();
    if n >= 2 && p > 0.0 {
        let ln_q = (-p).ln_1p();
        // row a holds pairs (a, a+1..n)
        let mut row = 0usize;
        let mut col = 0u64; // offset within the current row
        let mut skip = geometric_skip(rng, ln_q);
        loop {
            let mut remaining = skip;
            loop {
                let row_len = (n - 1 - row) as u64;
                if col + remaining < row_len {
                    col += remaining;
                    break;
                }
                remaining -= row_len - col;
                row += 1;
                col = 0;
                if row >= n - 1 {
                    break;
                }
            }
            if row >= n - 1 {
                break;
            }
            let a = row as Vertex;
            let b = (row as u64 + 1 + col) as Vertex;
            edges.push((a, b));
            // advance past the chosen pair
            col += 1;
            skip = geometric_skip(rng, ln_q);
        }
    }
    Graph::from_edges(n, &edges)
}

/// G(n, p = rho / n).
pub fn sample_er(n: usize, rho: f64, stream: RngStream) -> Result<Graph> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::InvalidParameter(format!("rho = {rho} must be nonnegative")));
    }
    if rho > n as f64 {
        return Err(Error::EdgeProbabilityExceedsOne { rho, n });
    }
    sample_gnp(n, rho / n as f64, &mut stream.rng())
}

/// Connected components, ordered by size descending with ties broken by the
/// smallest vertex id. Component 0 is the giant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentLabeling {
    /// Component id per vertex; [`NO_COMPONENT`] for masked-out vertices.
    pub label: Vec<u32>,
    pub sizes: Vec<usize>,
    /// Vertices of each component, ascending.
    pub members: Vec<Vec<Vertex>>,
}

impl ComponentLabeling {
    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn size(&self, rank: usize) -> usize {
        self.sizes.get(rank).copied().unwrap_or(0)
    }
}

pub fn components(g: &Graph) -> ComponentLabeling {
    components_masked(g, None)
}

/// Components of the subgraph induced by `mask` (all vertices when `None`).
pub fn components_masked(g: &Graph, mask: Option<&[bool]>) -> ComponentLabeling {
    let n = g.n();
    let included = |x: usize| mask.map_or(true, |m| m[x]);
    let mut raw = vec![NO_COMPONENT; n];
    let mut groups: Vec<Vec<Vertex>> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if raw[start] != NO_COMPONENT || !included(start) {
            continue;
        }
        let id = groups.len() as u32;
        raw[start] = id;
        queue.push_back(start as Vertex);
        let mut members = Vec::new();
        while let Some(x) = queue.pop_front() {
            members.push(x);
            for &y in g.neighbors(x) {
                if raw[y as usize] == NO_COMPONENT && included(y as usize) {
                    raw[y as usize] = id;
                    queue.push_back(y);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    // discovery order is by smallest member, so a stable sort on size keeps
    // the smallest-vertex tie-break
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| groups[b].len().cmp(&groups[a].len()));
    let mut rank = vec![0u32; groups.len()];
    for (r, &old) in order.iter().enumerate() {
        rank[old] = r as u32;
    }
    let label = raw
        .into_iter()
        .map(|l| if l == NO_COMPONENT { l } else { rank[l as usize] })
        .collect();
    let mut members: Vec<Vec<Vertex>> = vec![Vec::new(); groups.len()];
    for (old, group) in groups.into_iter().enumerate() {
        members[rank[old] as usize] = group;
    }
    let sizes = members.iter().map(Vec::len).collect();
    ComponentLabeling {
        label,
        sizes,
        members,
    }
}

/// Id of the largest component, `None` for an empty labeling.
pub fn giant(labeling: &ComponentLabeling) -> Option<usize> {
    (!labeling.is_empty()).then_some(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalityReport {
    pub giant_size_ok: bool,
    pub small_components_ok: bool,
    pub max_degree_ok: bool,
    pub giant_size: usize,
    pub xi_n: f64,
    pub max_degree: usize,
    pub largest_small_component: usize,
}

impl TypicalityReport {
    pub fn all_ok(&self) -> bool {
        self.giant_size_ok && self.small_components_ok && self.max_degree_ok
    }
}

/// Default constant `C` in the small-component bound `C log n`.
pub const DEFAULT_SMALL_COMP_CONSTANT: f64 = 30.0;

/// Checks the three typical-graph properties: giant size within `n^{3/4}`
/// of `xi n`, non-giant components simple (edges <= vertices) and of size at
/// most `C log n`, and maximum degree at most `log n`.
pub fn typicality(
    g: &Graph,
    labeling: &ComponentLabeling,
    rho: f64,
    small_comp_constant: f64,
) -> Result<TypicalityReport> {
    let n = g.n();
    if n < 2 {
        return Err(Error::InvalidParameter("typicality needs n >= 2".into()));
    }
    let nf = n as f64;
    let xi = if rho > 1.0 {
        crate::critical::solve_xi(rho, crate::critical::DEFAULT_TOL)?
    } else {
        0.0
    };
    let giant_size = labeling.size(0);
    let xi_n = xi * nf;
    let giant_size_ok = (giant_size as f64 - xi_n).abs() <= nf.powf(0.75);

    let mut edge_count = vec![0usize; labeling.sizes.len()];
    for (a, b) in g.edges() {
        let l = labeling.label[a as usize];
        debug_assert_eq!(l, labeling.label[b as usize]);
        edge_count[l as usize] += 1;
    }
    let bound = small_comp_constant * nf.ln();
    let small_components_ok = (1..labeling.sizes.len())
        .all(|c| edge_count[c] <= labeling.sizes[c] && labeling.sizes[c] as f64 <= bound);
    let max_degree = g.max_degree();
    Ok(TypicalityReport {
        giant_size_ok,
        small_components_ok,
        max_degree_ok: max_degree as f64 <= nf.ln(),
        giant_size,
        xi_n,
        max_degree,
        largest_small_component: labeling.size(1),
    })
}

/// Average degree over the giant component.
pub fn mean_giant_degree(g: &Graph, labeling: &ComponentLabeling) -> Result<f64> {
    let giant = labeling
        .members
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty labeling".into()))?;
    let total: usize = giant.iter().map(|&x| g.degree(x)).sum();
    Ok(total as f64 / giant.len() as f64)
}
