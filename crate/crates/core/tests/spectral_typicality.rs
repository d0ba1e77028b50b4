use vacantlab::engine::derive_stream;
use vacantlab::graph::{components, sample_er};
use vacantlab::walk::spectral_gap;

/// The constant `c` in `gap >= c / log^2 n` is unspecified; at n = 3000 the
/// giant's gap times `log^2 n` ranges over roughly [0.24, 1.2].
const GAP_CONSTANT: f64 = 0.2;

#[test]
fn giant_spectral_gap_is_at_least_c_over_log_squared() {
    let n = 3000usize;
    let bound = GAP_CONSTANT / (n as f64).ln().powi(2);
    let trials = 50;
    let mut ok = 0;
    for i in 0..trials {
        let g = sample_er(n, 2.0, derive_stream(41, i)).unwrap();
        let giant = components(&g).members.swap_remove(0);
        let gap = spectral_gap(&g, &giant).unwrap();
        ok += usize::from(gap.gap >= bound);
    }
    assert!(ok as f64 >= 0.95 * trials as f64, "{ok}/{trials} above {bound}");
}
