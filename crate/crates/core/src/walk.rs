//! Simple random walk on a fixed component of a graph.

use std::collections::{HashMap, HashSet, VecDeque};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{aggregate, derive_stream, EstimateCI, RngStream};
use crate::error::{Error, Result};
use crate::graph::{components_masked, ComponentLabeling, Graph, Vertex};

/// Sentinel first-visit time of a vertex the walk never reached.
pub const NEVER: u64 = u64::MAX;

/// Largest component accepted by [`spectral_gap`].
pub const SPECTRAL_SIZE_CAP: usize = 5000;

/// Convergence tolerance on the Ritz residual in [`spectral_gap`].
pub const SPECTRAL_TOL: f64 = 1e-8;

/// Walk length `round(u rho (2 - xi) xi n)`.
pub fn walk_time(u: f64, rho: f64, xi: f64, n: usize) -> Result<u64> {
    if u.is_nan() || u < 0.0 {
        return Err(Error::InvalidParameter(format!("u = {u} must be nonnegative")));
    }
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidParameter(format!("xi = {xi} must lie in (0, 1)")));
    }
    if rho.is_nan() || rho <= 1.0 {
        return Err(Error::InvalidParameter(format!("rho = {rho} must exceed 1")));
    }
    Ok((u * rho * (2.0 - xi) * xi * n as f64).round() as u64)
}

/// Default ball radius `floor(gamma ln n)` with `gamma = 0.99 / (6 ln rho)`,
/// at least 1.
pub fn default_radius(n: usize, rho: f64) -> usize {
    if rho <= 1.0 {
        return 1;
    }
    let gamma = 0.99 / (6.0 * rho.ln());
    ((gamma * (n as f64).ln()).floor() as usize).max(1)
}

/// Degree-proportional sampler over a component (prefix sums plus binary
/// search).
#[derive(Debug, Clone)]
pub struct StationarySampler {
    vertices: Vec<Vertex>,
    cumulative: Vec<u64>,
}

impl StationarySampler {
    pub fn new(g: &Graph, component: &[Vertex]) -> Result<Self> {
        if component.is_empty() {
            return Err(Error::InvalidParameter("empty component".into()));
        }
        let mut total = 0u64;
        let cumulative: Vec<u64> = component
            .iter()
            .map(|&x| {
                total += g.degree(x) as u64;
                total
            })
            .collect();
        if total == 0 && component.len() > 1 {
            return Err(Error::Disconnected(format!(
                "component of {} vertices has no edges",
                component.len()
            )));
        }
        Ok(StationarySampler {
            vertices: component.to_vec(),
            cumulative,
        })
    }

    pub fn total_degree(&self) -> u64 {
        *self.cumulative.last().unwrap()
    }

    /// Stationary mass of `x`; a lone vertex carries mass 1.
    pub fn pi(&self, g: &Graph, x: Vertex) -> f64 {
        if self.total_degree() == 0 {
            return 1.0;
        }
        g.degree(x) as f64 / self.total_degree() as f64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vertex {
        let total = self.total_degree();
        if total == 0 {
            return self.vertices[0];
        }
        let r = rng.gen_range(0..total);
        let idx = self.cumulative.partition_point(|&c| c <= r);
        self.vertices[idx]
    }
}

pub fn stationary_start(g: &Graph, component: &[Vertex], stream: RngStream) -> Result<Vertex> {
    let sampler = StationarySampler::new(g, component)?;
    Ok(sampler.sample(&mut stream.rng()))
}

#[inline]
fn step<R: Rng + ?Sized>(g: &Graph, x: Vertex, rng: &mut R) -> Vertex {
    let nb = g.neighbors(x);
    if nb.is_empty() {
        x
    } else {
        nb[rng.gen_range(0..nb.len())]
    }
}

/// First-visit time of every vertex for a stationary walk of `t_max` steps
/// (`X_0` is visited at time 0). Vertices never visited hold [`NEVER`].
pub fn first_visit_times<R: Rng + ?Sized>(
    g: &Graph,
    sampler: &StationarySampler,
    t_max: u64,
    rng: &mut R,
) -> Vec<u64> {
    let mut first = vec![NEVER; g.n()];
    let mut x = sampler.sample(rng);
    first[x as usize] = 0;
    for k in 1..=t_max {
        x = step(g, x, rng);
        if first[x as usize] == NEVER {
            first[x as usize] = k;
        }
    }
    first
}

/// Component vertices not visited by the walk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VacantSet {
    /// Indexed by graph vertex; false outside the host component.
    pub membership: Vec<bool>,
    pub size: usize,
}

impl VacantSet {
    pub fn from_first_visits(first: &[u64], component: &[Vertex], t: u64) -> Self {
        let mut membership = vec![false; first.len()];
        let mut size = 0;
        for &x in component {
            if first[x as usize] == NEVER || first[x as usize] > t {
                membership[x as usize] = true;
                size += 1;
            }
        }
        VacantSet { membership, size }
    }
}

/// Runs `X_0 ~ pi` plus `t` uniform-neighbor steps and returns the vacant set.
pub fn run_walk_vacant(g: &Graph, component: &[Vertex], t: u64, stream: RngStream) -> Result<VacantSet> {
    let sampler = StationarySampler::new(g, component)?;
    let first = first_visit_times(g, &sampler, t, &mut stream.rng());
    Ok(VacantSet::from_first_visits(&first, component, t))
}

/// Components of the subgraph induced by the vacant vertices.
pub fn vacant_components(g: &Graph, vacant: &VacantSet) -> ComponentLabeling {
    components_masked(g, Some(&vacant.membership))
}

/// First hitting time of `x` for a stationary walk, `None` if it exceeds `cap`.
pub fn hitting_time<R: Rng + ?Sized>(
    g: &Graph,
    sampler: &StationarySampler,
    x: Vertex,
    cap: u64,
    rng: &mut R,
) -> Option<u64> {
    let mut y = sampler.sample(rng);
    if y == x {
        return Some(0);
    }
    for k in 1..=cap {
        y = step(g, y, rng);
        if y == x {
            return Some(k);
        }
    }
    None
}

pub fn hitting_times(
    g: &Graph,
    sampler: &StationarySampler,
    x: Vertex,
    cap: u64,
    n_walks: usize,
    stream: RngStream,
) -> Vec<Option<u64>> {
    let mut rng = stream.rng();
    (0..n_walks)
        .map(|_| hitting_time(g, sampler, x, cap, &mut rng))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingTail {
    pub ts: Vec<u64>,
    /// Empirical `P[H_x > t]` for each entry of `ts`.
    pub tail: Vec<f64>,
    /// Estimated `E[H_x]`; with censoring this is the exponential MLE
    /// `sum(min(H, cap)) / #uncensored`.
    pub mean_hitting: f64,
    pub censored_fraction: f64,
    pub n_walks: usize,
}

impl HittingTail {
    pub fn from_times(ts: &[u64], times: &[Option<u64>]) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::NoSamples);
        }
        let cap = ts.iter().copied().max().unwrap_or(0);
        let n = times.len() as f64;
        let tail = ts
            .iter()
            .map(|&t| times.iter().filter(|h| h.map_or(true, |h| h > t)).count() as f64 / n)
            .collect();
        let uncensored = times.iter().filter(|h| h.map_or(false, |h| h <= cap)).count();
        let total: f64 = times
            .iter()
            .map(|h| h.map_or(cap, |h| h.min(cap)) as f64)
            .sum();
        let mean_hitting = if uncensored == 0 {
            f64::INFINITY
        } else {
            total / uncensored as f64
        };
        Ok(HittingTail {
            ts: ts.to_vec(),
            tail,
            mean_hitting,
            censored_fraction: 1.0 - uncensored as f64 / n,
            n_walks: times.len(),
        })
    }

    /// `sup_t |P[H > t] - exp(-t / E[H])|` over the grid.
    pub fn exponential_discrepancy(&self) -> f64 {
        self.ts
            .iter()
            .zip(&self.tail)
            .map(|(&t, &p)| (p - (-(t as f64) / self.mean_hitting).exp()).abs())
            .fold(0.0, f64::max)
    }
}

/// Empirical tail of `H_x` for stationary starts, censored at `max(ts)`.
pub fn estimate_hitting_tail(
    g: &Graph,
    component: &[Vertex],
    x: Vertex,
    ts: &[u64],
    n_walks: usize,
    stream: RngStream,
) -> Result<HittingTail> {
    if n_walks == 0 {
        return Err(Error::InvalidParameter("n_walks must be positive".into()));
    }
    if !component.contains(&x) {
        return Err(Error::InvalidParameter(format!("vertex {x} not in component")));
    }
    let sampler = StationarySampler::new(g, component)?;
    let cap = ts.iter().copied().max().unwrap_or(0);
    let times = hitting_times(g, &sampler, x, cap, n_walks, stream);
    HittingTail::from_times(ts, &times)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeEstimate {
    pub vertex: Vertex,
    pub radius: usize,
    /// Probability that the walk from `x` leaves `B(x, r)` before returning.
    pub p_escape: EstimateCI,
    pub pi_x: f64,
    /// Set when the ball has no outer boundary (component inside the ball).
    pub no_boundary: bool,
}

impl EscapeEstimate {
    /// Dirichlet-form value `P_x[escape] pi(x)`.
    pub fn equilibrium_mass(&self) -> f64 {
        self.p_escape.mean * self.pi_x
    }
}

/// Vertices within graph distance `r` of `x`, and whether any vertex lies at
/// distance exactly `r + 1`.
pub fn ball(g: &Graph, x: Vertex, r: usize) -> (HashSet<Vertex>, bool) {
    let mut dist: HashMap<Vertex, usize> = HashMap::new();
    dist.insert(x, 0);
    let mut queue = VecDeque::from([x]);
    let mut has_boundary = false;
    while let Some(y) = queue.pop_front() {
        let d = dist[&y];
        for &z in g.neighbors(y) {
            if dist.contains_key(&z) {
                continue;
            }
            if d == r {
                has_boundary = true;
            } else {
                dist.insert(z, d + 1);
                queue.push_back(z);
            }
        }
    }
    (dist.into_keys().collect(), has_boundary)
}

pub fn escape_probability(
    g: &Graph,
    component: &[Vertex],
    x: Vertex,
    r: usize,
    n_walks: usize,
    stream: RngStream,
) -> Result<EscapeEstimate> {
    if r == 0 {
        return Err(Error::InvalidParameter("radius must be at least 1".into()));
    }
    if n_walks == 0 {
        return Err(Error::InvalidParameter("n_walks must be positive".into()));
    }
    if !component.contains(&x) {
        return Err(Error::InvalidParameter(format!("vertex {x} not in component")));
    }
    let sampler = StationarySampler::new(g, component)?;
    let pi_x = sampler.pi(g, x);
    let (inside, has_boundary) = ball(g, x, r);
    if !has_boundary {
        return Ok(EscapeEstimate {
            vertex: x,
            radius: r,
            p_escape: aggregate(&vec![0.0; n_walks])?,
            pi_x,
            no_boundary: true,
        });
    }
    let mut rng = stream.rng();
    let outcomes: Vec<f64> = (0..n_walks)
        .map(|_| {
            let mut y = step(g, x, &mut rng);
            loop {
                if y == x {
                    return 0.0;
                }
                if !inside.contains(&y) {
                    return 1.0;
                }
                y = step(g, y, &mut rng);
            }
        })
        .collect();
    Ok(EscapeEstimate {
        vertex: x,
        radius: r,
        p_escape: aggregate(&outcomes)?,
        pi_x,
        no_boundary: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacancyCheck {
    /// Fraction of stationary walks of length `t` that never visit `x`.
    pub empirical: f64,
    /// `exp(-t p_escape pi(x))`.
    pub prediction: f64,
    pub escape: EscapeEstimate,
}

pub fn vacancy_prediction(t: u64, escape: &EscapeEstimate) -> f64 {
    (-(t as f64) * escape.equilibrium_mass()).exp()
}

pub fn vacancy_prediction_check(
    g: &Graph,
    component: &[Vertex],
    x: Vertex,
    r: usize,
    t: u64,
    n_walks: usize,
    stream: RngStream,
) -> Result<VacancyCheck> {
    let escape = escape_probability(g, component, x, r, n_walks, stream.split(0))?;
    let sampler = StationarySampler::new(g, component)?;
    let times = hitting_times(g, &sampler, x, t, n_walks, stream.split(1));
    let empirical = times.iter().filter(|h| h.is_none()).count() as f64 / n_walks as f64;
    Ok(VacancyCheck {
        empirical,
        prediction: vacancy_prediction(t, &escape),
        escape,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGap {
    /// Smallest eigenvalue of `I - P` over nonconstant functions.
    pub gap: f64,
    pub bipartite: bool,
    pub lanczos_steps: usize,
}

pub fn is_bipartite(g: &Graph, component: &[Vertex]) -> bool {
    let mut side: HashMap<Vertex, bool> = HashMap::with_capacity(component.len());
    for &start in component {
        if side.contains_key(&start) {
            continue;
        }
        side.insert(start, false);
        let mut queue = VecDeque::from([start]);
        while let Some(y) = queue.pop_front() {
            let s = side[&y];
            for &z in g.neighbors(y) {
                match side.get(&z) {
                    Some(&t) if t == s => return false,
                    Some(_) => {}
                    None => {
                        side.insert(z, !s);
                        queue.push_back(z);
                    }
                }
            }
        }
    }
    true
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Spectral gap of the walk on a connected component.
///
/// Works with the symmetrisation `S = D^{-1/2} A D^{-1/2}`, which is similar
/// to `P` and has top eigenvector `sqrt(deg)`. The largest eigenvalue of `S`
/// on the orthogonal complement of that vector (equivalently of `P` on
/// pi-mean-zero functions) is found by Lanczos iteration with full
/// reorthogonalisation, i.e. power iteration accelerated over its Krylov
/// space with the constant mode deflated. Iteration stops once the top Ritz
/// pair has residual at most [`SPECTRAL_TOL`] or the Krylov space is exhausted.
pub fn spectral_gap(g: &Graph, component: &[Vertex]) -> Result<SpectralGap> {
    spectral_gap_with_cap(g, component, SPECTRAL_SIZE_CAP)
}

pub fn spectral_gap_with_cap(g: &Graph, component: &[Vertex], cap: usize) -> Result<SpectralGap> {
    let k = component.len();
    if k > cap {
        return Err(Error::ComponentTooLarge { size: k, cap });
    }
    if k < 2 {
        return Err(Error::InvalidParameter(
            "spectral gap needs a component of at least 2 vertices".into(),
        ));
    }
    let mut local = HashMap::with_capacity(k);
    for (i, &x) in component.iter().enumerate() {
        local.insert(x, i);
    }
    let mut nbrs: Vec<Vec<usize>> = Vec::with_capacity(k);
    for &x in component {
        let mut list = Vec::with_capacity(g.degree(x));
        for y in g.neighbors(x) {
            match local.get(y) {
                Some(&j) => list.push(j),
                None => {
                    return Err(Error::Disconnected(format!(
                        "vertex {x} has a neighbor outside the component"
                    )))
                }
            }
        }
        if list.is_empty() {
            return Err(Error::Disconnected(format!("vertex {x} is isolated")));
        }
        nbrs.push(list);
    }
    let inv_sqrt_deg: Vec<f64> = nbrs.iter().map(|l| 1.0 / (l.len() as f64).sqrt()).collect();
    let apply = |v: &[f64], out: &mut [f64]| {
        for i in 0..k {
            let s: f64 = nbrs[i].iter().map(|&j| v[j] * inv_sqrt_deg[j]).sum();
            out[i] = s * inv_sqrt_deg[i];
        }
    };
    let top: Vec<f64> = {
        let v: Vec<f64> = nbrs.iter().map(|l| (l.len() as f64).sqrt()).collect();
        let norm = dot(&v, &v).sqrt();
        v.into_iter().map(|x| x / norm).collect()
    };
    let orthogonalize = |w: &mut Vec<f64>, basis: &[Vec<f64>]| {
        for _ in 0..2 {
            let c = dot(w, &top);
            axpy(w, -c, &top);
            for q in basis {
                let c = dot(w, q);
                axpy(w, -c, q);
            }
        }
    };

    let mut rng = derive_stream(0x5eed_5eed, k as u64).rng();
    let mut q: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() - 0.5).collect();
    orthogonalize(&mut q, &[]);
    let norm = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= norm);

    let max_steps = (k - 1).min(2000);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; k];
    let theta = loop {
        let j = basis.len() - 1;
        apply(&basis[j], &mut w);
        let alpha = dot(&w, &basis[j]);
        alphas.push(alpha);
        let mut next = w.clone();
        orthogonalize(&mut next, &basis);
        let beta = dot(&next, &next).sqrt();
        let steps = alphas.len();
        let exhausted = steps >= max_steps || beta < 1e-12;
        if exhausted || steps % 5 == 0 || steps < 5 {
            let mut t = DMatrix::<f64>::zeros(steps, steps);
            for i in 0..steps {
                t[(i, i)] = alphas[i];
                if i + 1 < steps {
                    t[(i, i + 1)] = betas[i];
                    t[(i + 1, i)] = betas[i];
                }
            }
            let eig = t.symmetric_eigen();
            let (imax, &tmax) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap();
            let residual = beta * eig.eigenvectors[(steps - 1, imax)].abs();
            if exhausted || residual <= SPECTRAL_TOL {
                break tmax;
            }
        }
        betas.push(beta);
        next.iter_mut().for_each(|x| *x /= beta);
        basis.push(next);
    };
    Ok(SpectralGap {
        gap: 1.0 - theta,
        bipartite: is_bipartite(g, component),
        lanczos_steps: alphas.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::derive_stream;
    use crate::graph::{components, sample_er};

    fn path(n: u32) -> Graph {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::from_edges(n as usize, &edges).unwrap()
    }

    fn cycle(n: u32) -> Graph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::from_edges(n as usize, &edges).unwrap()
    }

    fn complete(n: u32) -> Graph {
        let edges: Vec<_> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        Graph::from_edges(n as usize, &edges).unwrap()
    }

    fn all(g: &Graph) -> Vec<Vertex> {
        (0..g.n() as Vertex).collect()
    }

    #[test]
    fn walk_time_examples() {
        assert_eq!(walk_time(0.0, 2.0, 0.7968, 1000).unwrap(), 0);
        assert_eq!(walk_time(1.0, 2.0, 0.5, 100).unwrap(), 150);
        let t = walk_time(1.0, 2.0, 0.796812, 100_000).unwrap();
        // 2 * 1.203188 * 0.796812 * 1e5 = 191742.9...
        let exact = 2.0 * (2.0 - 0.796812) * 0.796812 * 1e5;
        assert!((t as f64 - exact).abs() <= 0.5);
        assert!((t as i64 - 191_742).abs() <= 1);
        assert!(walk_time(-1.0, 2.0, 0.5, 10).is_err());
        assert!(walk_time(1.0, 0.5, 0.5, 10).is_err());
        assert!(walk_time(1.0, 2.0, 1.0, 10).is_err());
    }

    #[test]
    fn default_radius_respects_constraint() {
        let r = default_radius(100_000, 2.0);
        let gamma = 0.99 / (6.0 * 2f64.ln());
        assert_eq!(r, (gamma * 100_000f64.ln()).floor() as usize);
        assert!(6.0 * gamma * 2f64.ln() < 1.0);
    }

    #[test]
    fn stationary_start_examples() {
        let single = Graph::empty(1);
        assert_eq!(stationary_start(&single, &[0], derive_stream(0, 0)).unwrap(), 0);
        assert!(StationarySampler::new(&Graph::empty(3), &[0, 1, 2]).is_err());

        let p = path(3);
        let sampler = StationarySampler::new(&p, &all(&p)).unwrap();
        let mut rng = derive_stream(4, 0).rng();
        let draws = 1_000_000;
        let ones = (0..draws).filter(|_| sampler.sample(&mut rng) == 1).count();
        let f = ones as f64 / draws as f64;
        assert!((f - 0.5).abs() < 0.002, "{f}");

        let c = cycle(10);
        let sampler = StationarySampler::new(&c, &all(&c)).unwrap();
        let mut counts = [0f64; 10];
        for _ in 0..100_000 {
            counts[sampler.sample(&mut rng) as usize] += 1.0;
        }
        let p = crate::engine::chi_square_pvalue(&counts, &[10_000.0; 10], 0).unwrap();
        assert!(p > 0.001, "{p}");
    }

    #[test]
    fn vacant_set_examples() {
        let c = cycle(50);
        let comp = all(&c);
        let v = run_walk_vacant(&c, &comp, 0, derive_stream(1, 1)).unwrap();
        assert_eq!(v.size, 49);

        let tri = cycle(3);
        let sampler = StationarySampler::new(&tri, &[0, 1, 2]).unwrap();
        let mut rng = derive_stream(2, 2).rng();
        let first = first_visit_times(&tri, &sampler, 200, &mut rng);
        let cover = *first.iter().max().unwrap();
        let v = VacantSet::from_first_visits(&first, &[0, 1, 2], cover);
        assert_eq!(v.size, 0);

        let p = path(4);
        let mut membership = vec![true; 4];
        membership[1] = false;
        let vac = VacantSet { membership, size: 3 };
        assert_eq!(vacant_components(&p, &vac).sizes, vec![2, 1]);
        let none = VacantSet { membership: vec![false; 4], size: 0 };
        assert!(vacant_components(&p, &none).is_empty());
        let full = VacantSet { membership: vec![true; 4], size: 4 };
        assert_eq!(vacant_components(&p, &full).sizes, vec![4]);
    }

    #[test]
    fn walks_are_monotone_and_consistent() {
        let g = sample_er(2000, 2.0, derive_stream(8, 0)).unwrap();
        let l = components(&g);
        let comp = &l.members[0];
        for seed in 0..5 {
            let mut prev: Option<VacantSet> = None;
            for t in [0u64, 10, 100, 1000, 5000] {
                let v = run_walk_vacant(&g, comp, t, derive_stream(seed, 9)).unwrap();
                let visited = comp.iter().filter(|&&x| !v.membership[x as usize]).count();
                assert_eq!(visited + v.size, comp.len());
                if let Some(p) = &prev {
                    assert!(v.membership.iter().zip(&p.membership).all(|(&a, &b)| !a || b));
                }
                prev = Some(v);
            }
        }
    }

    #[test]
    fn every_step_follows_an_edge() {
        let g = sample_er(500, 3.0, derive_stream(2, 0)).unwrap();
        let comp = components(&g).members[0].clone();
        let sampler = StationarySampler::new(&g, &comp).unwrap();
        let mut rng = derive_stream(3, 0).rng();
        let mut x = sampler.sample(&mut rng);
        for _ in 0..10_000 {
            let y = step(&g, x, &mut rng);
            assert!(g.has_edge(x, y));
            x = y;
        }
    }

    /// Exact P[H_x > t] from a stationary start by propagating the
    /// sub-probability vector of the chain killed at `x`.
    fn exact_tail(g: &Graph, x: Vertex, ts: &[u64]) -> Vec<f64> {
        let n = g.n();
        let total: f64 = (0..n as Vertex).map(|v| g.degree(v) as f64).sum();
        let mut mass: Vec<f64> = (0..n as Vertex).map(|v| g.degree(v) as f64 / total).collect();
        mass[x as usize] = 0.0;
        let t_max = *ts.iter().max().unwrap();
        let mut out = Vec::new();
        for t in 0..=t_max {
            if ts.contains(&t) {
                out.push(mass.iter().sum());
            }
            let mut next = vec![0.0; n];
            for v in 0..n as Vertex {
                let d = g.degree(v) as f64;
                for &w in g.neighbors(v) {
                    next[w as usize] += mass[v as usize] / d;
                }
            }
            next[x as usize] = 0.0;
            mass = next;
        }
        out
    }

    #[test]
    fn hitting_tail_examples() {
        let lone = Graph::empty(1);
        let h = estimate_hitting_tail(&lone, &[0], 0, &[0, 1], 100, derive_stream(0, 0)).unwrap();
        assert_eq!(h.tail, vec![0.0, 0.0]);

        let edge = path(2);
        let ts = [0u64, 1, 2, 5];
        let exact = exact_tail(&edge, 0, &ts);
        let h = estimate_hitting_tail(&edge, &[0, 1], 0, &ts, 20_000, derive_stream(0, 1)).unwrap();
        for (e, a) in exact.iter().zip(&h.tail) {
            assert!((e - a).abs() < 0.02, "{exact:?} vs {:?}", h.tail);
        }

        let c = cycle(7);
        let ts = [0u64, 3, 10, 30];
        let exact = exact_tail(&c, 2, &ts);
        let h = estimate_hitting_tail(&c, &all(&c), 2, &ts, 20_000, derive_stream(0, 2)).unwrap();
        for (e, a) in exact.iter().zip(&h.tail) {
            assert!((e - a).abs() < 0.02, "{exact:?} vs {:?}", h.tail);
        }
    }

    #[test]
    fn escape_on_cycle_matches_gamblers_ruin() {
        let c = cycle(100);
        let comp = all(&c);
        for r in 1..=10 {
            let e = escape_probability(&c, &comp, 0, r, 10_000, derive_stream(r as u64, 3)).unwrap();
            let exact = 1.0 / (r as f64 + 1.0);
            assert!(!e.no_boundary);
            assert!(
                (e.p_escape.mean - exact).abs() <= 4.0 * e.p_escape.std_error.max(1e-3),
                "r = {r}: {} vs {exact}",
                e.p_escape.mean
            );
            if r == 4 {
                assert!((e.p_escape.mean - 0.2).abs() <= 0.01);
            }
            assert!((e.pi_x - 0.01).abs() < 1e-15);
        }
    }

    #[test]
    fn escape_without_boundary() {
        let star_edges: Vec<_> = (1..6u32).map(|i| (0, i)).collect();
        let star = Graph::from_edges(6, &star_edges).unwrap();
        let e = escape_probability(&star, &all(&star), 0, 1, 100, derive_stream(0, 0)).unwrap();
        assert!(e.no_boundary);
        assert_eq!(e.p_escape.mean, 0.0);
        let edge = path(2);
        let e = escape_probability(&edge, &[0, 1], 0, 1, 100, derive_stream(0, 0)).unwrap();
        assert_eq!(e.p_escape.mean, 0.0);
        assert_eq!(vacancy_prediction(1000, &e), 1.0);
        assert!(escape_probability(&edge, &[0, 1], 0, 0, 100, derive_stream(0, 0)).is_err());
    }

    #[test]
    fn vacancy_at_time_zero() {
        let c = cycle(20);
        let check = vacancy_prediction_check(&c, &all(&c), 3, 2, 0, 20_000, derive_stream(1, 0)).unwrap();
        assert_eq!(check.prediction, 1.0);
        assert!((check.empirical - (1.0 - 1.0 / 20.0)).abs() < 0.01);
    }

    #[test]
    fn spectral_gap_closed_forms() {
        for m in [3u32, 5, 8, 20] {
            let g = complete(m);
            let s = spectral_gap(&g, &all(&g)).unwrap();
            let exact = m as f64 / (m as f64 - 1.0);
            assert!((s.gap - exact).abs() < 1e-8, "K_{m}: {}", s.gap);
        }
        for m in [5u32, 10, 64, 301] {
            let g = cycle(m);
            let s = spectral_gap(&g, &all(&g)).unwrap();
            let exact = 1.0 - (2.0 * std::f64::consts::PI / m as f64).cos();
            assert!((s.gap - exact).abs() < 1e-8, "C_{m}: {} vs {exact}", s.gap);
            assert_eq!(s.bipartite, m % 2 == 0);
        }
        let e = path(2);
        let s = spectral_gap(&e, &[0, 1]).unwrap();
        assert!((s.gap - 2.0).abs() < 1e-12);
        assert!(s.bipartite);
    }

    #[test]
    fn spectral_gap_matches_dense_eigensolver() {
        let g = sample_er(400, 3.0, derive_stream(6, 6)).unwrap();
        let comp = components(&g).members[0].clone();
        let k = comp.len();
        let idx: HashMap<Vertex, usize> = comp.iter().enumerate().map(|(i, &x)| (x, i)).collect();
        let mut s = DMatrix::<f64>::zeros(k, k);
        for (i, &x) in comp.iter().enumerate() {
            for y in g.neighbors(x) {
                let j = idx[y];
                s[(i, j)] = 1.0 / ((g.degree(x) * g.degree(*y)) as f64).sqrt();
            }
        }
        let mut ev: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        let dense_gap = 1.0 - ev[1];
        let lanczos = spectral_gap(&g, &comp).unwrap();
        assert!((lanczos.gap - dense_gap).abs() < 1e-8, "{} vs {dense_gap}", lanczos.gap);
    }

    #[test]
    fn spectral_gap_rejects_large_components() {
        let g = cycle(10);
        assert!(matches!(
            spectral_gap_with_cap(&g, &all(&g), 5),
            Err(Error::ComponentTooLarge { .. })
        ));
    }
}
