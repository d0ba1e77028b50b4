//! Composite experiments: u-sweeps of the vacant component structure,
//! size relations between the exploration and the giant-component walk,
//! second-component scaling, and per-vertex vacancy and hitting diagnostics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::critical::{predicted_vacant_fraction, solve_xi, zeta_or_zero, DEFAULT_TOL};
use crate::engine::{aggregate, run_trials, RngStream};
use crate::error::{Error, Result};
use crate::exploration::mean_vacant_fraction;
use crate::graph::{components, sample_er, Graph, Vertex};
use crate::gw::CapacitySample;
use crate::walk::{
    default_radius, estimate_hitting_tail, first_visit_times, vacancy_prediction_check, vacant_components,
    walk_time, StationarySampler, VacantSet,
};

/// One `(u, trial)` cell of a sweep. Column order is the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub n: usize,
    pub rho: f64,
    pub u: f64,
    pub trial: usize,
    pub seed: u64,
    pub t_steps: u64,
    pub giant_size: usize,
    pub vacant_size: usize,
    pub c1_vacant: usize,
    pub c2_vacant: usize,
    pub zeta_predicted: f64,
    pub vacant_fraction_predicted: f64,
}

impl SweepRecord {
    pub fn check(&self) -> std::result::Result<(), String> {
        let ordered = self.c2_vacant <= self.c1_vacant
            && self.c1_vacant <= self.vacant_size
            && self.vacant_size <= self.giant_size
            && self.giant_size <= self.n;
        if ordered {
            Ok(())
        } else {
            Err(format!("size ordering violated: {self:?}"))
        }
    }
}

pub const SWEEP_CSV_HEADER: &str =
    "n,rho,u,trial,seed,t_steps,giant_size,vacant_size,c1_vacant,c2_vacant,zeta_predicted,vacant_fraction_predicted";

/// Vacant-set observables of one walk at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VacantObservation {
    pub t_steps: u64,
    pub giant_size: usize,
    pub vacant_size: usize,
    pub c1_vacant: usize,
    pub c2_vacant: usize,
}

fn check_grid(u_grid: &[f64]) -> Result<()> {
    if u_grid.is_empty() {
        return Err(Error::InvalidParameter("empty u grid".into()));
    }
    if u_grid.iter().any(|u| !u.is_finite() || *u < 0.0) {
        return Err(Error::InvalidParameter("u values must be finite and nonnegative".into()));
    }
    if u_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("u grid must be ascending".into()));
    }
    Ok(())
}

/// Samples `G(n, rho/n)`, runs one stationary walk on its giant up to the
/// largest level, and reads off the vacant set at every level (walk
/// prefixes nest, so the sets are monotone in `u`).
pub fn observe_vacant_levels(n: usize, rho: f64, u_grid: &[f64], stream: RngStream) -> Result<Vec<VacantObservation>> {
    check_grid(u_grid)?;
    let xi = solve_xi(rho, DEFAULT_TOL)?;
    let g = sample_er(n, rho, stream.split(0))?;
    let labeling = components(&g);
    let giant = labeling
        .members
        .first()
        .ok_or_else(|| Error::InvalidParameter("graph has no vertices".into()))?;
    let times = u_grid
        .iter()
        .map(|&u| walk_time(u, rho, xi, n))
        .collect::<Result<Vec<u64>>>()?;
    let sampler = StationarySampler::new(&g, giant)?;
    let first = first_visit_times(&g, &sampler, *times.last().unwrap(), &mut stream.split(1).rng());
    Ok(times
        .into_iter()
        .map(|t| observe(&g, giant, &first, t))
        .collect())
}

fn observe(g: &Graph, giant: &[Vertex], first: &[u64], t: u64) -> VacantObservation {
    let vacant = VacantSet::from_first_visits(first, giant, t);
    let vc = vacant_components(g, &vacant);
    VacantObservation {
        t_steps: t,
        giant_size: giant.len(),
        vacant_size: vacant.size,
        c1_vacant: vc.size(0),
        c2_vacant: vc.size(1),
    }
}

/// Predicted `(zeta(u), |V^u| / n)` from a capacity sample.
pub fn predictions(rho: f64, capacity: &CapacitySample, u: f64) -> Result<(f64, f64)> {
    let f = capacity.functional(u).mean;
    Ok((zeta_or_zero(rho, f, DEFAULT_TOL)?, predicted_vacant_fraction(rho, f)?.vacant_fraction))
}

/// Sweep over `u_grid` with `n_trials` graphs. Trial `i` uses one graph and
/// one walk for every level; predictions come from the shared `capacity`
/// sample, evaluated exactly at each `u`.
pub fn sweep_vacant_structure(
    n: usize,
    rho: f64,
    u_grid: &[f64],
    n_trials: usize,
    capacity: &CapacitySample,
    stream: RngStream,
) -> Result<Vec<SweepRecord>> {
    check_grid(u_grid)?;
    if (capacity.rho - rho).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "capacity sample is for rho = {}, sweep has rho = {rho}",
            capacity.rho
        )));
    }
    let preds = u_grid
        .iter()
        .map(|&u| predictions(rho, capacity, u))
        .collect::<Result<Vec<_>>>()?;
    let per_trial = run_trials(&(), n_trials, stream.fork_seed(), |_, s| {
        observe_vacant_levels(n, rho, u_grid, s)
    })?;
    let mut records = Vec::with_capacity(u_grid.len() * n_trials);
    for (k, &u) in u_grid.iter().enumerate() {
        for (trial, obs) in per_trial.iter().enumerate() {
            let o = obs[k];
            records.push(SweepRecord {
                n,
                rho,
                u,
                trial,
                seed: stream.root_seed,
                t_steps: o.t_steps,
                giant_size: o.giant_size,
                vacant_size: o.vacant_size,
                c1_vacant: o.c1_vacant,
                c2_vacant: o.c2_vacant,
                zeta_predicted: preds[k].0,
                vacant_fraction_predicted: preds[k].1,
            });
        }
    }
    Ok(records)
}

pub fn write_sweep_csv<W: std::io::Write>(records: &[SweepRecord], w: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(true).from_writer(w);
    if records.is_empty() {
        writer.write_record(SWEEP_CSV_HEADER.split(','))?;
    }
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: std::io::Read>(r: R) -> Result<Vec<SweepRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRelationReport {
    pub n: usize,
    pub rho: f64,
    pub u: f64,
    pub trials: usize,
    pub burn_in: u64,
    pub mean_vbar: f64,
    pub mean_v: f64,
    pub gap: f64,
    pub predicted_gap: f64,
    /// `|gap - predicted_gap| / n`.
    pub discrepancy_fraction: f64,
}

/// Compares the exploration's unvisited count with the walk's vacant set on
/// the giant: `mean |Vbar^u| - mean |V^u|` against `(1 - xi) n`.
pub fn size_relation_check(
    n: usize,
    rho: f64,
    u: f64,
    n_trials: usize,
    burn_in: u64,
    stream: RngStream,
) -> Result<SizeRelationReport> {
    let xi = solve_xi(rho, DEFAULT_TOL)?;
    let mean_vbar = mean_vacant_fraction(n, rho, u, n_trials, burn_in, stream.split(0))?.mean * n as f64;
    let sizes = run_trials(&(), n_trials, stream.split(1).fork_seed(), |_, s| {
        Ok(observe_vacant_levels(n, rho, &[u], s)?[0].vacant_size as f64)
    })?;
    let mean_v = aggregate(&sizes)?.mean;
    let gap = mean_vbar - mean_v;
    let predicted_gap = (1.0 - xi) * n as f64;
    Ok(SizeRelationReport {
        n,
        rho,
        u,
        trials: n_trials,
        burn_in,
        mean_vbar,
        mean_v,
        gap,
        predicted_gap,
        discrepancy_fraction: (gap - predicted_gap).abs() / n as f64,
    })
}

/// Which vacant component a second-component check tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Below `u*`: the second-largest vacant component.
    C2Vacant,
    /// Above `u*`: the largest vacant component.
    C1Vacant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondComponentReport {
    pub n: usize,
    pub rho: f64,
    pub u: f64,
    pub trials: usize,
    pub observable: Observable,
    pub values: Vec<usize>,
    pub max_value: usize,
    pub ratio_to_n: f64,
    pub ratio_to_log7_n: f64,
}

/// Largest over trials of `c2_vacant` (when `u < u_star`) or `c1_vacant`
/// (otherwise).
pub fn second_component_check(
    n: usize,
    rho: f64,
    u: f64,
    u_star: f64,
    n_trials: usize,
    stream: RngStream,
) -> Result<SecondComponentReport> {
    let observable = if u < u_star {
        Observable::C2Vacant
    } else {
        Observable::C1Vacant
    };
    let values = run_trials(&(), n_trials, stream.fork_seed(), |_, s| {
        let o = observe_vacant_levels(n, rho, &[u], s)?[0];
        Ok(match observable {
            Observable::C2Vacant => o.c2_vacant,
            Observable::C1Vacant => o.c1_vacant,
        })
    })?;
    let max_value = values.iter().copied().max().unwrap_or(0);
    let nf = n as f64;
    Ok(SecondComponentReport {
        n,
        rho,
        u,
        trials: n_trials,
        observable,
        values,
        max_value,
        ratio_to_n: max_value as f64 / nf,
        ratio_to_log7_n: max_value as f64 / nf.ln().powi(7),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub points: Vec<SecondComponentReport>,
    /// Least-squares slope of `ln(max_value)` against `ln n`; `None` when a
    /// maximum is zero.
    pub log_log_slope: Option<f64>,
}

/// Runs [`second_component_check`] across `ns`; a slope below 1 indicates
/// sublinear growth.
pub fn second_component_scaling(
    ns: &[usize],
    rho: f64,
    u: f64,
    u_star: f64,
    n_trials: usize,
    stream: RngStream,
) -> Result<ScalingReport> {
    let points = ns
        .iter()
        .enumerate()
        .map(|(i, &n)| second_component_check(n, rho, u, u_star, n_trials, stream.split(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let log_log_slope = if points.len() >= 2 && points.iter().all(|p| p.max_value > 0) {
        let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| (p.max_value as f64).ln()).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    Ok(ScalingReport { points, log_log_slope })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacancyRow {
    pub vertex: Vertex,
    pub degree: usize,
    pub pi_x: f64,
    pub p_escape: f64,
    pub empirical_vacancy: f64,
    pub predicted_vacancy: f64,
    pub abs_error: f64,
    /// Sup-distance between the hitting tail and its exponential fit; absent
    /// when no hitting walks were requested.
    pub hitting_discrepancy: Option<f64>,
    pub mean_hitting: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacancyReport {
    pub n: usize,
    pub rho: f64,
    pub u: f64,
    pub t_steps: u64,
    pub radius: usize,
    pub giant_size: usize,
    pub rows: Vec<VacancyRow>,
    pub mean_abs_error: f64,
    pub max_hitting_discrepancy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VacancyConfig {
    pub n: usize,
    pub rho: f64,
    pub u: f64,
    pub n_vertices: usize,
    /// Walks per vertex for the escape and vacancy estimates.
    pub n_walks: usize,
    /// Walks per vertex for the hitting tail; 0 skips it.
    pub hitting_walks: usize,
    /// Ball radius; `None` uses [`default_radius`].
    pub radius: Option<usize>,
}

/// Grid of `points` times evenly spaced up to `u_max rho (2 - xi) xi n`.
pub fn hitting_grid(n: usize, rho: f64, u_max: f64, points: usize) -> Result<Vec<u64>> {
    let xi = solve_xi(rho, DEFAULT_TOL)?;
    (1..=points)
        .map(|k| walk_time(u_max * k as f64 / points as f64, rho, xi, n))
        .collect()
}

/// Grid used by the vacancy report's hitting tails.
pub const HITTING_GRID_POINTS: usize = 10;
pub const HITTING_GRID_U_MAX: f64 = 3.0;

/// Probes uniformly chosen giant vertices: empirical vacancy at the walk
/// time of level `u` against `exp(-t p_esc pi(x))`, and optionally the
/// exponential fit of the hitting-time tail.
pub fn hitting_and_vacancy_report(cfg: &VacancyConfig, stream: RngStream) -> Result<VacancyReport> {
    if cfg.n_vertices == 0 || cfg.n_walks == 0 {
        return Err(Error::InvalidParameter("n_vertices and n_walks must be positive".into()));
    }
    let xi = solve_xi(cfg.rho, DEFAULT_TOL)?;
    let t = walk_time(cfg.u, cfg.rho, xi, cfg.n)?;
    let radius = cfg.radius.unwrap_or_else(|| default_radius(cfg.n, cfg.rho));
    let g = sample_er(cfg.n, cfg.rho, stream.split(0))?;
    let labeling = components(&g);
    let giant = labeling
        .members
        .first()
        .ok_or_else(|| Error::InvalidParameter("graph has no vertices".into()))?;
    let mut pick = stream.split(1).rng();
    let probes: Vec<Vertex> = (0..cfg.n_vertices)
        .map(|_| giant[pick.gen_range(0..giant.len())])
        .collect();
    let grid = hitting_grid(cfg.n, cfg.rho, HITTING_GRID_U_MAX, HITTING_GRID_POINTS)?;
    let rows = run_trials(&probes, probes.len(), stream.split(2).fork_seed(), |probes, s| {
        let x = probes[s.stream_id as usize];
        let check = vacancy_prediction_check(&g, giant, x, radius, t, cfg.n_walks, s.split(0))?;
        let tail = if cfg.hitting_walks > 0 {
            Some(estimate_hitting_tail(&g, giant, x, &grid, cfg.hitting_walks, s.split(1))?)
        } else {
            None
        };
        Ok(VacancyRow {
            vertex: x,
            degree: g.degree(x),
            pi_x: check.escape.pi_x,
            p_escape: check.escape.p_escape.mean,
            empirical_vacancy: check.empirical,
            predicted_vacancy: check.prediction,
            abs_error: (check.empirical - check.prediction).abs(),
            hitting_discrepancy: tail.as_ref().map(|h| h.exponential_discrepancy()),
            mean_hitting: tail.as_ref().map(|h| h.mean_hitting),
        })
    })?;
    let errors: Vec<f64> = rows.iter().map(|r| r.abs_error).collect();
    let max_hitting_discrepancy = rows
        .iter()
        .filter_map(|r| r.hitting_discrepancy)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))));
    Ok(VacancyReport {
        n: cfg.n,
        rho: cfg.rho,
        u: cfg.u,
        t_steps: t,
        radius,
        giant_size: giant.len(),
        mean_abs_error: aggregate(&errors)?.mean,
        rows,
        max_hitting_discrepancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::derive_stream;
    use crate::gw::{sample_capacities, CapacityConfig};
    use proptest::prelude::*;

    fn small_capacity(rho: f64) -> CapacitySample {
        sample_capacities(&CapacityConfig::new(rho, 500).with_radius(10, 12), derive_stream(9, 9)).unwrap()
    }

    #[test]
    fn u_zero_removes_only_the_start() {
        let cap = small_capacity(2.0);
        let recs = sweep_vacant_structure(2000, 2.0, &[0.0], 4, &cap, derive_stream(1, 0)).unwrap();
        assert_eq!(recs.len(), 4);
        for r in &recs {
            assert_eq!(r.t_steps, 0);
            assert_eq!(r.vacant_size, r.giant_size - 1);
            assert!(r.c1_vacant + r.c2_vacant <= r.giant_size - 1);
            assert!((r.vacant_fraction_predicted - solve_xi(2.0, 1e-12).unwrap()).abs() < 1e-9);
            r.check().unwrap();
        }
    }

    #[test]
    fn sweep_is_monotone_and_ordered() {
        let cap = small_capacity(2.0);
        let grid = [0.0, 0.2, 0.5, 1.0, 2.0];
        let recs = sweep_vacant_structure(3000, 2.0, &grid, 3, &cap, derive_stream(2, 0)).unwrap();
        for trial in 0..3 {
            let row: Vec<&SweepRecord> = recs.iter().filter(|r| r.trial == trial).collect();
            assert_eq!(row.len(), grid.len());
            for w in row.windows(2) {
                assert!(w[1].vacant_size <= w[0].vacant_size);
                assert!(w[1].t_steps >= w[0].t_steps);
                assert_eq!(w[0].giant_size, w[1].giant_size);
            }
            let zetas: Vec<f64> = row.iter().map(|r| r.zeta_predicted).collect();
            assert!(zetas.windows(2).all(|w| w[1] <= w[0]));
        }
        recs.iter().for_each(|r| r.check().unwrap());
    }

    #[test]
    fn sweep_rejects_bad_grids_and_mismatched_capacity() {
        let cap = small_capacity(2.0);
        assert!(sweep_vacant_structure(100, 2.0, &[0.5, 0.1], 1, &cap, derive_stream(0, 0)).is_err());
        assert!(sweep_vacant_structure(100, 2.0, &[-0.1], 1, &cap, derive_stream(0, 0)).is_err());
        assert!(sweep_vacant_structure(100, 3.0, &[0.1], 1, &cap, derive_stream(0, 0)).is_err());
    }

    #[test]
    fn csv_round_trip_and_header() {
        let cap = small_capacity(2.0);
        let recs = sweep_vacant_structure(500, 2.0, &[0.0, 0.3], 2, &cap, derive_stream(3, 0)).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), SWEEP_CSV_HEADER);
        assert_eq!(read_sweep_csv(&buf[..]).unwrap(), recs);
        let mut empty = Vec::new();
        write_sweep_csv(&[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim_end(), SWEEP_CSV_HEADER);
    }

    #[test]
    fn size_relation_direction_at_u_zero() {
        let r = size_relation_check(3000, 2.0, 0.0, 4, 10, derive_stream(4, 0)).unwrap();
        assert!(r.mean_vbar > r.mean_v);
        assert!(r.discrepancy_fraction < 0.05, "{r:?}");
    }

    #[test]
    fn size_relation_at_large_rho() {
        let r = size_relation_check(5000, 8.0, 0.2, 4, 10, derive_stream(5, 0)).unwrap();
        assert!(r.predicted_gap < 2.0);
        assert!(r.discrepancy_fraction <= 0.03, "{r:?}");
    }

    #[test]
    fn second_component_reports() {
        let r = second_component_check(3000, 2.0, 0.0, 1.0, 3, derive_stream(6, 0)).unwrap();
        assert_eq!(r.observable, Observable::C2Vacant);
        assert_eq!(r.values.len(), 3);
        assert!(r.max_value < 3000);
        let r = second_component_check(3000, 2.0, 3.0, 1.0, 3, derive_stream(6, 0)).unwrap();
        assert_eq!(r.observable, Observable::C1Vacant);
        let s = second_component_scaling(&[1000, 2000], 2.0, 3.0, 1.0, 2, derive_stream(7, 0)).unwrap();
        assert_eq!(s.points.len(), 2);
    }

    #[test]
    fn vacancy_at_u_zero() {
        let cfg = VacancyConfig {
            n: 2000,
            rho: 2.0,
            u: 0.0,
            n_vertices: 5,
            n_walks: 4000,
            hitting_walks: 0,
            radius: None,
        };
        let r = hitting_and_vacancy_report(&cfg, derive_stream(8, 0)).unwrap();
        for row in &r.rows {
            assert_eq!(row.predicted_vacancy, 1.0);
            let sd = (row.pi_x * (1.0 - row.pi_x) / 4000.0).sqrt();
            assert!((row.empirical_vacancy - (1.0 - row.pi_x)).abs() <= 5.0 * sd + 1e-12);
            assert!(row.hitting_discrepancy.is_none());
        }
        assert!(r.max_hitting_discrepancy.is_none());
    }

    #[test]
    fn hitting_grid_is_increasing() {
        let g = hitting_grid(5000, 2.0, 3.0, 10).unwrap();
        assert_eq!(g.len(), 10);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn observations_respect_ordering(seed in 0u64..1000, n in 100usize..800) {
            let obs = observe_vacant_levels(n, 2.0, &[0.0, 0.3, 1.0], derive_stream(seed, 1)).unwrap();
            for w in obs.windows(2) {
                prop_assert!(w[1].vacant_size <= w[0].vacant_size);
            }
            for o in obs {
                prop_assert!(o.c2_vacant <= o.c1_vacant && o.c1_vacant <= o.vacant_size);
                prop_assert!(o.vacant_size <= o.giant_size && o.giant_size <= n);
            }
        }
    }
}
