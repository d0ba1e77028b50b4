//! Deterministic randomness, ordered parallel trials and the handful of
//! statistics the experiments need.
//!
//! Every random quantity in the crate is drawn from a [`RngStream`]: an
//! immutable `(root_seed, stream_id)` pair that instantiates a ChaCha8
//! generator. The root seed is expanded into the 256-bit ChaCha key with
//! SplitMix64 and the stream id is used as ChaCha's 64-bit stream (nonce), so
//! deriving a stream is O(1) and distinct ids never share keystream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Generator type handed to simulation code.
pub type StreamRng = ChaCha8Rng;

/// Environment variable capping the worker count of the global pool.
pub const THREADS_ENV: &str = "VACANTLAB_THREADS";

/// Above this many trials the binomial test switches to the normal
/// approximation.
pub const BINOMIAL_EXACT_MAX_TRIALS: u64 = 100_000;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// One step of SplitMix64 (Steele, Lea & Flood). Fixed across releases.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-dependent combination of two words.
pub fn mix64(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a) ^ b.wrapping_mul(GOLDEN_GAMMA).rotate_left(17))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub root_seed: u64,
    pub stream_id: u64,
}

pub fn derive_stream(root_seed: u64, stream_id: u64) -> RngStream {
    RngStream {
        root_seed,
        stream_id,
    }
}

impl RngStream {
    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut key = [0u8; 32];
        let mut state = self.root_seed;
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(GOLDEN_GAMMA);
            chunk.copy_from_slice(&splitmix64(state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream for a sub-purpose. The child lives under a new root seed
    /// derived from both fields of the parent, with `tag` as its stream id.
    pub fn split(&self, tag: u64) -> RngStream {
        derive_stream(self.fork_seed(), tag)
    }

    /// Root seed for a family of child streams (e.g. the trials of a
    /// sub-experiment).
    pub fn fork_seed(&self) -> u64 {
        mix64(self.root_seed, self.stream_id)
    }
}

/// Worker cap from `VACANTLAB_THREADS`, if set to a positive integer.
pub fn configured_threads() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
}

/// Pool with the given worker count, or the `VACANTLAB_THREADS` cap, or all
/// available cores.
pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads.or_else(configured_threads) {
        builder = builder.num_threads(t);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

/// Runs `n_trials` independent trials; trial `i` receives
/// `derive_stream(root_seed, i)`. Output is in trial order regardless of
/// how many workers the ambient rayon pool has. The first failing trial (by
/// index) is reported.
pub fn run_trials<C, T, F>(config: &C, n_trials: usize, root_seed: u64, trial_fn: F) -> Result<Vec<T>>
where
    C: Sync + ?Sized,
    T: Send,
    F: Fn(&C, RngStream) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = (0..n_trials)
        .into_par_iter()
        .map(|i| trial_fn(config, derive_stream(root_seed, i as u64)))
        .collect();
    let mut out = Vec::with_capacity(n_trials);
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(e) => {
                return Err(Error::Trial {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(out)
}

/// Monte Carlo estimate with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateCI {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub ci95_low: f64,
    pub ci95_high: f64,
    /// Set when `n_samples == 1`; the interval collapses to the mean.
    pub degenerate: bool,
}

impl EstimateCI {
    pub fn half_width(&self) -> f64 {
        1.96 * self.std_error
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn aggregate(samples: &[f64]) -> Result<EstimateCI> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::NoSamples);
    }
    let mean = compensated_sum(samples.iter().copied()) / n as f64;
    if n == 1 {
        return Ok(EstimateCI {
            mean,
            std_error: 0.0,
            n_samples: 1,
            ci95_low: mean,
            ci95_high: mean,
            degenerate: true,
        });
    }
    let ss = compensated_sum(samples.iter().map(|&x| (x - mean) * (x - mean)));
    let sd = (ss / (n - 1) as f64).sqrt();
    let std_error = sd / (n as f64).sqrt();
    let half = 1.96 * std_error;
    Ok(EstimateCI {
        mean,
        std_error,
        n_samples: n,
        ci95_low: mean - half,
        ci95_high: mean + half,
        degenerate: false,
    })
}

/// Survival function of the Kolmogorov distribution, P[K > x].
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // P[K <= x] = sqrt(2 pi)/x * sum_k exp(-(2k-1)^2 pi^2 / (8 x^2))
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut cdf = 0.0;
        for k in 1..=20 {
            let j = (2 * k - 1) as f64;
            cdf += (-j * j * pi2 / (8.0 * x * x)).exp();
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / x;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// One-sample Kolmogorov-Smirnov statistic against Uniform[0,1].
pub fn ks_uniform_statistic(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    if let Some(bad) = samples.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidParameter(format!(
            "KS sample {bad} outside [0, 1]"
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i + 1) as f64 / n - x;
            lo.max(hi)
        })
        .fold(0.0f64, f64::max);
    Ok(d)
}

/// KS p-value against Uniform[0,1] from the asymptotic Kolmogorov law.
pub fn ks_uniform_pvalue(samples: &[f64]) -> Result<f64> {
    let d = ks_uniform_statistic(samples)?;
    Ok(kolmogorov_survival((samples.len() as f64).sqrt() * d))
}

fn ln_binomial_pmf(k: u64, m: u64, p: f64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p == 1.0 {
        return if k == m { 0.0 } else { f64::NEG_INFINITY };
    }
    let (kf, mf) = (k as f64, m as f64);
    ln_gamma(mf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(mf - kf + 1.0)
        + kf * p.ln()
        + (mf - kf) * (1.0 - p).ln()
}

/// Two-sided p-value for `k` successes in `m` Bernoulli(`p`) trials.
///
/// For `m <= BINOMIAL_EXACT_MAX_TRIALS` this is the exact test summing the
/// probabilities of all outcomes no more likely than `k`; above it, the
/// continuity-corrected normal approximation.
pub fn binomial_two_sided_pvalue(k: u64, m: u64, p: f64) -> Result<f64> {
    if k > m {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds m = {m}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p = {p} outside [0, 1]")));
    }
    if m <= BINOMIAL_EXACT_MAX_TRIALS {
        let observed = ln_binomial_pmf(k, m, p);
        if observed == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        // relative slack as in R's binom.test
        let threshold = observed + (1.0 + 1e-7f64).ln();
        let total = compensated_sum((0..=m).filter_map(|j| {
            let l = ln_binomial_pmf(j, m, p);
            (l <= threshold).then(|| l.exp())
        }));
        Ok(total.min(1.0))
    } else {
        let mean = m as f64 * p;
        let var = mean * (1.0 - p);
        if var == 0.0 {
            return Ok(if (k as f64 - mean).abs() < 0.5 { 1.0 } else { 0.0 });
        }
        let z = ((k as f64 - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        Ok((2.0 * normal.sf(z)).min(1.0))
    }
}

/// Pearson chi-square goodness-of-fit p-value. Bins are used as given;
/// `extra_dof` is subtracted from `bins - 1` for fitted parameters.
pub fn chi_square_pvalue(observed: &[f64], expected: &[f64], extra_dof: usize) -> Result<f64> {
    if observed.len() != expected.len() {
        return Err(Error::InvalidParameter(
            "observed and expected bin counts differ in length".into(),
        ));
    }
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&o, &e)| (o - e) * (o - e) / e)
        .sum();
    let bins = expected.iter().filter(|&&e| e > 0.0).count();
    if bins < 2 + extra_dof {
        return Err(Error::InvalidParameter("too few bins for chi-square".into()));
    }
    let dof = (bins - 1 - extra_dof) as f64;
    let chi = ChiSquared::new(dof).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(chi.sf(stat))
}

/// Merges adjacent bins from both ends until each merged bin has expected
/// count at least `min_expected`. Returns the merged (observed, expected).
pub fn merge_sparse_bins(observed: &[f64], expected: &[f64], min_expected: f64) -> (Vec<f64>, Vec<f64>) {
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        o_acc += o;
        e_acc += e;
        if e_acc >= min_expected {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        if let (Some(lo), Some(le)) = (obs.last_mut(), exp.last_mut()) {
            *lo += o_acc;
            *le += e_acc;
        } else {
            obs.push(o_acc);
            exp.push(e_acc);
        }
    }
    (obs, exp)
}

/// Two-sample chi-square homogeneity test on count histograms. Cells with a
/// pooled count below `min_pooled` are lumped together.
pub fn chi_square_two_sample_pvalue(a: &[u64], b: &[u64], min_pooled: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter("histograms differ in length".into()));
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return Err(Error::NoSamples);
    }
    let mut cells: Vec<(u64, u64)> = Vec::new();
    let mut lump = (0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        if x + y >= min_pooled {
            cells.push((x, y));
        } else {
            lump.0 += x;
            lump.1 += y;
        }
    }
    if lump.0 + lump.1 > 0 {
        cells.push(lump);
    }
    if cells.len() < 2 {
        return Ok(1.0);
    }
    let (fa, fb) = (na as f64, nb as f64);
    let stat: f64 = cells
        .iter()
        .map(|&(x, y)| {
            let (x, y) = (x as f64, y as f64);
            let t = x + y;
            let ea = t * fa / (fa + fb);
            let eb = t * fb / (fa + fb);
            (x - ea).powi(2) / ea + (y - eb).powi(2) / eb
        })
        .sum();
    let chi = ChiSquared::new((cells.len() - 1) as f64)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(chi.sf(stat))
}
