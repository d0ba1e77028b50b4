//! Law of the sampled graph: exact enumeration on tiny graphs, and the
//! typical-graph properties at desk scale.

use vacantlab::critical::solve_xi;
use vacantlab::engine::{aggregate, chi_square_pvalue, derive_stream, merge_sparse_bins};
use vacantlab::graph::{components, mean_giant_degree, sample_er, typicality, DEFAULT_SMALL_COMP_CONSTANT};
use statrs::distribution::{Binomial, DiscreteCDF};

fn pair_index(n: usize, a: usize, b: usize) -> usize {
    // lexicographic index of a < b
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

fn enumeration_pvalue(n: usize, rho: f64, samples: u64, seed: u64) -> f64 {
    let pairs = n * (n - 1) / 2;
    let p = rho / n as f64;
    let mut observed = vec![0.0; 1 << pairs];
    for i in 0..samples {
        let g = sample_er(n, rho, derive_stream(seed, i)).unwrap();
        let mask = g
            .edges()
            .fold(0usize, |m, (a, b)| m | 1 << pair_index(n, a as usize, b as usize));
        observed[mask] += 1.0;
    }
    let expected: Vec<f64> = (0..1usize << pairs)
        .map(|mask| {
            let m = mask.count_ones() as i32;
            samples as f64 * p.powi(m) * (1.0 - p).powi(pairs as i32 - m)
        })
        .collect();
    let (o, e) = merge_sparse_bins(&observed, &expected, 5.0);
    chi_square_pvalue(&o, &e, 0).unwrap()
}

#[test]
fn every_labelled_graph_on_four_vertices_has_its_probability() {
    let p = enumeration_pvalue(4, 2.0, 200_000, 11);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn every_labelled_graph_on_five_vertices_has_its_probability() {
    let p = enumeration_pvalue(5, 2.0, 300_000, 12);
    assert!(p > 0.001, "p = {p}");
    let p = enumeration_pvalue(5, 0.5, 300_000, 13);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn typical_graph_rates_at_n_1e5() {
    let n = 100_000usize;
    let trials = 100u64;
    let mut giant_ok = 0;
    let mut small_ok = 0;
    let mut degree_ok = 0;
    for i in 0..trials {
        let g = sample_er(n, 2.0, derive_stream(21, i)).unwrap();
        let r = typicality(&g, &components(&g), 2.0, DEFAULT_SMALL_COMP_CONSTANT).unwrap();
        giant_ok += usize::from(r.giant_size_ok);
        small_ok += usize::from(r.small_components_ok);
        degree_ok += usize::from(r.max_degree_ok);
    }
    assert!(giant_ok >= 99, "giant flag {giant_ok}/100");
    assert!(small_ok >= 99, "small-component flag {small_ok}/100");
    // max degree <= ln n = 11.51 fails whenever some degree reaches 12; the
    // degrees are nearly independent Binomial(n - 1, 2 / n)
    let tail = 1.0 - Binomial::new(2.0 / n as f64, n as u64 - 1).unwrap().cdf(11);
    let rate = (1.0 - tail).powi(n as i32);
    let sd = (trials as f64 * rate * (1.0 - rate)).sqrt();
    let expected = trials as f64 * rate;
    assert!(
        (degree_ok as f64 - expected).abs() <= 4.0 * sd,
        "degree flag {degree_ok}/100, expected {expected:.1}"
    );
}

#[test]
fn giant_mean_degree_matches_rho_two_minus_xi() {
    let xi = solve_xi(2.0, 1e-12).unwrap();
    let means: Vec<f64> = (0..20)
        .map(|i| {
            let g = sample_er(100_000, 2.0, derive_stream(22, i)).unwrap();
            mean_giant_degree(&g, &components(&g)).unwrap()
        })
        .collect();
    let m = aggregate(&means).unwrap().mean;
    assert!((m - 2.0 * (2.0 - xi)).abs() <= 0.02, "{m}");
}
