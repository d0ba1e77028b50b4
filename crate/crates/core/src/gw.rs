//! Poisson Galton-Watson trees, root capacity by conductance recursion, and
//! Monte Carlo estimation of `E[exp(-u cap)]` over trees conditioned on
//! non-extinction.
//!
//! Conditioning uses the backbone decomposition: a node with an infinite
//! line of descent has `K* ~ Poisson(rho xi | >= 1)` such children plus
//! `K° ~ Poisson(rho (1 - xi))` doomed children, each doomed child rooting an
//! ordinary Poisson(`rho (1 - xi)`) tree (subcritical, dies out).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical::{solve_xi, DEFAULT_TOL};
use crate::engine::{aggregate, EstimateCI, RngStream};
use crate::error::{Error, Result};

/// Per-tree node budget for materialised trees.
pub const DEFAULT_NODE_BUDGET: usize = 10_000_000;
pub const DEFAULT_RADIUS: usize = 40;
/// Depth cap is `radius + DEFAULT_DEPTH_MARGIN` unless given.
pub const DEFAULT_DEPTH_MARGIN: usize = 10;
/// Levels below the root sampled exactly by [`CapacityMethod::Pooled`].
pub const DEFAULT_EXACT_LEVELS: usize = 8;
/// Radius offset of the truncation diagnostic.
pub const DIAGNOSTIC_RADIUS_OFFSET: usize = 5;

const POOL_CHUNK: usize = 4096;

/// Poisson(`lambda`) by sequential inversion of the uniform `u`.
pub fn poisson_inverse(lambda: f64, u: f64) -> u64 {
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= lambda / k as f64;
        let next = cdf + p;
        if next == cdf {
            break;
        }
        cdf = next;
    }
    k
}

pub fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    poisson_inverse(lambda, rng.gen::<f64>())
}

/// Poisson(`lambda`) conditioned to be at least 1, by inversion restricted
/// to `(P[0], 1)`.
pub fn sample_poisson_positive<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    let p0 = (-lambda).exp();
    let u = p0 + (1.0 - p0) * rng.gen::<f64>();
    poisson_inverse(lambda, u).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub parent: Option<u32>,
    pub children: Vec<u32>,
    pub depth: u32,
    pub backbone: bool,
}

/// Rooted tree truncated at `depth_cap`. Node 0 is the root and every parent
/// precedes its children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GWTree {
    pub nodes: Vec<TreeNode>,
    pub depth_cap: usize,
    pub conditioned: bool,
}

impl GWTree {
    pub fn root_degree(&self) -> usize {
        self.nodes[0].children.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of nodes at each depth `0..=depth_cap`.
    pub fn generation_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.depth_cap + 1];
        for node in &self.nodes {
            sizes[node.depth as usize] += 1;
        }
        sizes
    }

    /// Builds a tree from child lists (node 0 is the root); for tests and
    /// hand-made examples.
    pub fn from_children(children: Vec<Vec<u32>>, depth_cap: usize) -> Result<Self> {
        let mut nodes: Vec<TreeNode> = children
            .iter()
            .map(|c| TreeNode {
                parent: None,
                children: c.clone(),
                depth: 0,
                backbone: false,
            })
            .collect();
        for (v, c) in children.iter().enumerate() {
            for &w in c {
                let w = w as usize;
                if w <= v || w >= nodes.len() || nodes[w].parent.is_some() {
                    return Err(Error::InvalidParameter(format!(
                        "child {w} of {v} breaks the parent-before-child tree layout"
                    )));
                }
                nodes[w].parent = Some(v as u32);
                nodes[w].depth = nodes[v].depth + 1;
                if nodes[w].depth as usize > depth_cap {
                    return Err(Error::InvalidParameter("tree deeper than its cap".into()));
                }
            }
        }
        if nodes.iter().skip(1).any(|n| n.parent.is_none()) {
            return Err(Error::InvalidParameter("unreachable node".into()));
        }
        Ok(GWTree {
            nodes,
            depth_cap,
            conditioned: false,
        })
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Plain(f64),
    Backbone,
    Doomed,
}

fn grow<R: Rng + ?Sized>(
    root_kind: Kind,
    offspring: (f64, f64),
    depth_cap: usize,
    budget: usize,
    rng: &mut R,
) -> Result<GWTree> {
    let (lambda_star, lambda_doomed) = offspring;
    let mut nodes = vec![TreeNode {
        parent: None,
        children: Vec::new(),
        depth: 0,
        backbone: matches!(root_kind, Kind::Backbone),
    }];
    let mut stack: Vec<(u32, Kind)> = vec![(0, root_kind)];
    while let Some((v, kind)) = stack.pop() {
        let depth = nodes[v as usize].depth;
        if depth as usize >= depth_cap {
            continue;
        }
        let (n_backbone, n_other, other_kind) = match kind {
            Kind::Plain(l) => (0, sample_poisson(l, rng), Kind::Plain(l)),
            Kind::Backbone => (
                sample_poisson_positive(lambda_star, rng),
                sample_poisson(lambda_doomed, rng),
                Kind::Doomed,
            ),
            Kind::Doomed => (0, sample_poisson(lambda_doomed, rng), Kind::Doomed),
        };
        let total = (n_backbone + n_other) as usize;
        if nodes.len() + total > budget {
            return Err(Error::NodeBudgetExceeded { budget });
        }
        for i in 0..total {
            let backbone = (i as u64) < n_backbone;
            let w = nodes.len() as u32;
            nodes.push(TreeNode {
                parent: Some(v),
                children: Vec::new(),
                depth: depth + 1,
                backbone,
            });
            nodes[v as usize].children.push(w);
            stack.push((w, if backbone { Kind::Backbone } else { other_kind }));
        }
    }
    Ok(GWTree {
        nodes,
        depth_cap,
        conditioned: matches!(root_kind, Kind::Backbone),
    })
}

/// Poisson(`rho`) Galton-Watson tree truncated at depth `depth_cap`.
pub fn sample_gw_with<R: Rng + ?Sized>(rho: f64, depth_cap: usize, budget: usize, rng: &mut R) -> Result<GWTree> {
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::InvalidParameter(format!("rho = {rho} must be nonnegative")));
    }
    grow(Kind::Plain(rho), (0.0, 0.0), depth_cap, budget, rng)
}

pub fn sample_gw(rho: f64, depth_cap: usize, stream: RngStream) -> Result<GWTree> {
    sample_gw_with(rho, depth_cap, DEFAULT_NODE_BUDGET, &mut stream.rng())
}

/// Offspring means `(rho xi, rho (1 - xi))` of the backbone decomposition.
pub fn backbone_offspring(rho: f64) -> Result<(f64, f64)> {
    if rho.is_nan() || rho <= 1.0 {
        return Err(Error::Subcritical("conditioning undefined for rho <= 1".into()));
    }
    let xi = solve_xi(rho, DEFAULT_TOL)?;
    Ok((rho * xi, rho * (1.0 - xi)))
}

/// Poisson(`rho`) tree conditioned on non-extinction, truncated at `depth_cap`.
pub fn sample_gw_conditioned_with<R: Rng + ?Sized>(
    rho: f64,
    depth_cap: usize,
    budget: usize,
    rng: &mut R,
) -> Result<GWTree> {
    let offspring = backbone_offspring(rho)?;
    grow(Kind::Backbone, offspring, depth_cap, budget, rng)
}

pub fn sample_gw_conditioned(rho: f64, depth_cap: usize, stream: RngStream) -> Result<GWTree> {
    sample_gw_conditioned_with(rho, depth_cap, DEFAULT_NODE_BUDGET, &mut stream.rng())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub capacity: f64,
    pub escape_probability: f64,
    pub root_degree: usize,
    pub radius: usize,
}

/// Contribution of an edge to a child of conductance `c`: the series
/// combination of the unit edge and the child's subtree.
#[inline]
fn series(c: f64) -> f64 {
    c / (1.0 + c)
}

/// Effective conductance from the root to the nodes at depth `radius + 1`
/// (grounded), with unit edge conductances.
pub fn conductance_to_boundary(tree: &GWTree, radius: usize) -> Result<CapacityResult> {
    if radius >= tree.depth_cap {
        return Err(Error::RadiusExceedsTruncation {
            radius,
            depth_cap: tree.depth_cap,
        });
    }
    let boundary = radius as u32 + 1;
    let mut conductance = vec![0.0f64; tree.nodes.len()];
    for v in (0..tree.nodes.len()).rev() {
        let node = &tree.nodes[v];
        if node.depth >= boundary {
            continue;
        }
        conductance[v] = node
            .children
            .iter()
            .map(|&c| {
                if tree.nodes[c as usize].depth == boundary {
                    1.0
                } else {
                    series(conductance[c as usize])
                }
            })
            .sum();
    }
    let root_degree = tree.root_degree();
    let capacity = conductance[0];
    Ok(CapacityResult {
        capacity,
        escape_probability: if root_degree == 0 {
            0.0
        } else {
            capacity / root_degree as f64
        },
        root_degree,
        radius,
    })
}

/// Capacity of a spherically symmetric tree in which every node at depth `d`
/// has `branching[d]` children, with the nodes at depth `radius + 1`
/// grounded. Needs `branching.len() > radius`.
pub fn spherically_symmetric_capacity(branching: &[usize], radius: usize) -> Result<f64> {
    if branching.len() <= radius {
        return Err(Error::RadiusExceedsTruncation {
            radius,
            depth_cap: branching.len(),
        });
    }
    let mut c = branching[radius] as f64;
    for d in (0..radius).rev() {
        c = branching[d] as f64 * series(c);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CapacityMethod {
    /// Materialise each conditioned tree to depth `radius + 1`.
    ExactTrees,
    /// Sample the top `exact_levels` of each tree exactly and draw deeper
    /// backbone subtree conductances from per-height pools built bottom-up
    /// (population dynamics on the conductance recursion).
    Pooled { exact_levels: usize, pool_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityConfig {
    pub rho: f64,
    pub depth_cap: usize,
    pub radius: usize,
    pub n_trees: usize,
    pub method: CapacityMethod,
    pub node_budget: usize,
}

impl CapacityConfig {
    pub fn new(rho: f64, n_trees: usize) -> Self {
        CapacityConfig {
            rho,
            depth_cap: DEFAULT_RADIUS + DEFAULT_DEPTH_MARGIN,
            radius: DEFAULT_RADIUS,
            n_trees,
            method: CapacityMethod::Pooled {
                exact_levels: DEFAULT_EXACT_LEVELS,
                pool_size: n_trees.max(10_000),
            },
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }

    pub fn with_radius(mut self, radius: usize, depth_cap: usize) -> Self {
        self.radius = radius;
        self.depth_cap = depth_cap;
        self
    }

    pub fn with_method(mut self, method: CapacityMethod) -> Self {
        self.method = method;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.radius >= self.depth_cap {
            return Err(Error::RadiusExceedsTruncation {
                radius: self.radius,
                depth_cap: self.depth_cap,
            });
        }
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be positive".into()));
        }
        if let CapacityMethod::Pooled { pool_size, .. } = self.method {
            if pool_size == 0 {
                return Err(Error::InvalidParameter("pool_size must be positive".into()));
            }
        }
        backbone_offspring(self.rho).map(|_| ())
    }
}

/// Root capacities of a fixed sample of conditioned trees, at the configured
/// radius and at `radius - 5`. Reusing one sample across `u` gives common
/// random numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySample {
    pub rho: f64,
    pub xi: f64,
    pub radius: usize,
    pub capacities: Vec<f64>,
    pub capacities_short: Option<Vec<f64>>,
    pub n_aborted: usize,
}

impl CapacitySample {
    /// Estimate of `E[exp(-u cap)]`.
    pub fn functional(&self, u: f64) -> EstimateCI {
        functional_of(&self.capacities, u)
    }

    /// The same at radius `radius - 5`, when defined.
    pub fn functional_short(&self, u: f64) -> Option<EstimateCI> {
        self.capacities_short.as_deref().map(|c| functional_of(c, u))
    }
}

fn functional_of(capacities: &[f64], u: f64) -> EstimateCI {
    let values: Vec<f64> = capacities.iter().map(|&c| (-u * c).exp()).collect();
    aggregate(&values).expect("capacity sample is non-empty")
}

struct Pools {
    lambda_star: f64,
    lambda_doomed: f64,
    /// `by_height[h]` holds conductances of backbone nodes `h` levels above
    /// the grounded boundary; index 0 is unused.
    by_height: Vec<Vec<f64>>,
}

impl Pools {
    /// Series contribution of a child at `height` levels above the boundary.
    fn child_term<R: Rng + ?Sized>(&self, height: usize, backbone: bool, exact_left: usize, rng: &mut R) -> f64 {
        if height == 0 {
            return 1.0;
        }
        let c = if backbone {
            self.backbone(height, exact_left, rng)
        } else {
            self.doomed(height, rng)
        };
        series(c)
    }

    fn backbone<R: Rng + ?Sized>(&self, height: usize, exact_left: usize, rng: &mut R) -> f64 {
        if exact_left == 0 {
            let pool = &self.by_height[height];
            return pool[rng.gen_range(0..pool.len())];
        }
        let k_star = sample_poisson_positive(self.lambda_star, rng);
        let k_doomed = sample_poisson(self.lambda_doomed, rng);
        let mut c = 0.0;
        for _ in 0..k_star {
            c += self.child_term(height - 1, true, exact_left - 1, rng);
        }
        for _ in 0..k_doomed {
            c += self.child_term(height - 1, false, 0, rng);
        }
        c
    }

    fn doomed<R: Rng + ?Sized>(&self, height: usize, rng: &mut R) -> f64 {
        let k = sample_poisson(self.lambda_doomed, rng);
        (0..k).map(|_| self.child_term(height - 1, false, 0, rng)).sum()
    }

    fn build(lambda_star: f64, lambda_doomed: f64, max_height: usize, pool_size: usize, stream: RngStream) -> Self {
        let mut pools = Pools {
            lambda_star,
            lambda_doomed,
            by_height: vec![Vec::new()],
        };
        for h in 1..=max_height {
            let level = stream.split(h as u64);
            let chunks = pool_size.div_ceil(POOL_CHUNK);
            let values: Vec<f64> = (0..chunks)
                .into_par_iter()
                .flat_map_iter(|c| {
                    let mut rng = level.split(c as u64).rng();
                    let len = POOL_CHUNK.min(pool_size - c * POOL_CHUNK);
                    let pools = &pools;
                    (0..len)
                        .map(|_| pools.backbone(h, 1, &mut rng))
                        .collect::<Vec<_>>()
                })
                .collect();
            pools.by_height.push(values);
        }
        pools
    }
}

/// Samples root capacities of `n_trees` conditioned trees.
pub fn sample_capacities(cfg: &CapacityConfig, stream: RngStream) -> Result<CapacitySample> {
    cfg.validate()?;
    let (lambda_star, lambda_doomed) = backbone_offspring(cfg.rho)?;
    let xi = lambda_star / cfg.rho;
    let short_radius = cfg.radius.checked_sub(DIAGNOSTIC_RADIUS_OFFSET);
    match cfg.method {
        CapacityMethod::ExactTrees => {
            let per_tree: Vec<Result<(f64, Option<f64>)>> = (0..cfg.n_trees)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream.split(i as u64).rng();
                    let tree = sample_gw_conditioned_with(
                        cfg.rho,
                        cfg.radius + 1,
                        cfg.node_budget,
                        &mut rng,
                    )?;
                    let full = conductance_to_boundary(&tree, cfg.radius)?.capacity;
                    let short = match short_radius {
                        Some(r) => Some(conductance_to_boundary(&tree, r)?.capacity),
                        None => None,
                    };
                    Ok((full, short))
                })
                .collect();
            let mut capacities = Vec::with_capacity(cfg.n_trees);
            let mut short = Vec::with_capacity(cfg.n_trees);
            let mut n_aborted = 0;
            for r in per_tree {
                match r {
                    Ok((c, s)) => {
                        capacities.push(c);
                        short.extend(s);
                    }
                    Err(Error::NodeBudgetExceeded { .. }) => n_aborted += 1,
                    Err(e) => return Err(e),
                }
            }
            if capacities.is_empty() {
                return Err(Error::NodeBudgetExceeded {
                    budget: cfg.node_budget,
                });
            }
            Ok(CapacitySample {
                rho: cfg.rho,
                xi,
                radius: cfg.radius,
                capacities,
                capacities_short: short_radius.map(|_| short),
                n_aborted,
            })
        }
        CapacityMethod::Pooled {
            exact_levels,
            pool_size,
        } => {
            let exact_levels = exact_levels.max(1);
            let max_height = (cfg.radius + 1).saturating_sub(exact_levels);
            let pools = Pools::build(lambda_star, lambda_doomed, max_height, pool_size, stream.split(0));
            let roots = |radius: usize, tag: u64| -> Vec<f64> {
                let base = stream.split(tag);
                (0..cfg.n_trees)
                    .into_par_iter()
                    .map(|i| pools.backbone(radius + 1, exact_levels, &mut base.split(i as u64).rng()))
                    .collect()
            };
            Ok(CapacitySample {
                rho: cfg.rho,
                xi,
                radius: cfg.radius,
                capacities: roots(cfg.radius, 1),
                capacities_short: short_radius.map(|r| roots(r, 2)),
                n_aborted: 0,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalEstimate {
    pub u: f64,
    pub estimate: EstimateCI,
    pub estimate_at_radius_minus_5: Option<EstimateCI>,
    pub n_aborted_trees: usize,
}

/// Monte Carlo estimate of `E[exp(-u cap)]` over conditioned trees.
pub fn mc_capacity_functional(u: f64, cfg: &CapacityConfig, stream: RngStream) -> Result<FunctionalEstimate> {
    if u.is_nan() || u < 0.0 {
        return Err(Error::InvalidParameter(format!("u = {u} must be nonnegative")));
    }
    let sample = sample_capacities(cfg, stream)?;
    Ok(FunctionalEstimate {
        u,
        estimate: sample.functional(u),
        estimate_at_radius_minus_5: sample.functional_short(u),
        n_aborted_trees: sample.n_aborted,
    })
}
