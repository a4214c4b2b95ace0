//! Convergence diagnostics and the independent reference sampler.
//!
//! Samples are compared through the diagonal of the rotation matrix,
//! `(g₁₁, g₂₂, g₃₃)`. Convergence curves are the MMD between the first `N`
//! samples of a chain and the whole chain under a Gaussian kernel.

use nalgebra::Vector3;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::group::{haar_sample, GroupElement};
use crate::model::{Potential, TracePotential};
use crate::sampler::Trace;

/// Sets larger than this are subsampled before kernel sums.
pub const MMD_SUBSAMPLE_CAP: usize = 2000;

/// Seed of the subsampling RNG used by the MMD diagnostics.
pub const DIAGNOSTIC_SEED: u64 = 0x5eed_d1a6;

pub type Feature = Vector3<f64>;

pub fn features(g: &GroupElement) -> Feature {
    g.matrix().diagonal()
}

pub fn trace_features(trace: &Trace) -> Vec<Feature> {
    trace.positions().map(features).collect()
}

/// `exp(−‖x − y‖² / (2σ²))` with `σ = bandwidth`.
pub fn gaussian_kernel(x: &Feature, y: &Feature, bandwidth: f64) -> f64 {
    (-(x - y).norm_squared() / (2.0 * bandwidth * bandwidth)).exp()
}

fn mean_kernel(xs: &[Feature], ys: &[Feature], bandwidth: f64) -> f64 {
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let mut total = 0.0;
    for x in xs {
        let mut row = 0.0;
        for y in ys {
            row += (-(x - y).norm_squared() * inv).exp();
        }
        total += row;
    }
    total / (xs.len() * ys.len()) as f64
}

/// Biased (V-statistic) MMD between two sample sets.
///
/// Returns the square root of `mean k(X,X) − 2 mean k(X,Y) + mean k(Y,Y)`,
/// clamped at zero. Panics on an empty set.
pub fn mmd(xs: &[Feature], ys: &[Feature], bandwidth: f64) -> f64 {
    assert!(!xs.is_empty() && !ys.is_empty(), "mmd of an empty sample set");
    let kxx = mean_kernel(xs, xs, bandwidth);
    let kyy = mean_kernel(ys, ys, bandwidth);
    let kxy = mean_kernel(xs, ys, bandwidth);
    (kxx - 2.0 * kxy + kyy).max(0.0).sqrt()
}

/// Uniform subsample without replacement, capped at [`MMD_SUBSAMPLE_CAP`].
///
/// The selected indices depend only on the set length, so two sets of the
/// same length are subsampled identically.
pub fn subsample(xs: &[Feature]) -> Vec<Feature> {
    if xs.len() <= MMD_SUBSAMPLE_CAP {
        return xs.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(DIAGNOSTIC_SEED ^ xs.len() as u64);
    let mut idx = index::sample(&mut rng, xs.len(), MMD_SUBSAMPLE_CAP).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| xs[i]).collect()
}

/// MMD of chain prefixes against the whole chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdCurve {
    pub checkpoints: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn mmd_curve(trace: &Trace, checkpoints: &[usize], bandwidth: f64) -> MmdCurve {
    mmd_curve_features(&trace_features(trace), checkpoints, bandwidth)
}

/// [`mmd_curve`] on precomputed features. Checkpoints beyond the sequence
/// length are clamped to it.
pub fn mmd_curve_features(all: &[Feature], checkpoints: &[usize], bandwidth: f64) -> MmdCurve {
    let whole = subsample(all);
    let kyy = mean_kernel(&whole, &whole, bandwidth);
    let values = checkpoints
        .iter()
        .map(|&n| {
            let prefix = subsample(&all[..n.clamp(1, all.len())]);
            let kxx = mean_kernel(&prefix, &prefix, bandwidth);
            let kxy = mean_kernel(&prefix, &whole, bandwidth);
            (kxx - 2.0 * kxy + kyy).max(0.0).sqrt()
        })
        .collect();
    MmdCurve { checkpoints: checkpoints.to_vec(), values }
}

/// Normalized empirical autocorrelation at lags `0..=max_lag`.
///
/// Uses the overall mean and the `1/n` normalization. A constant series is
/// reported as perfectly correlated.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Vec<f64> {
    assert!(series.len() > max_lag, "series shorter than max_lag + 1");
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let var: f64 = centered.iter().map(|x| x * x).sum();
    if var == 0.0 {
        return vec![1.0; max_lag + 1];
    }
    (0..=max_lag)
        .map(|k| {
            let c: f64 = centered[..n - k].iter().zip(&centered[k..]).map(|(a, b)| a * b).sum();
            c / var
        })
        .collect()
}

/// Autocorrelation of each diagonal entry of `g`, averaged over the three
/// entries, after dropping `burn_in` samples.
pub fn feature_autocorrelation(trace: &Trace, max_lag: usize, burn_in: usize) -> Vec<f64> {
    let feats = trace_features(trace);
    let feats = &feats[burn_in.min(feats.len())..];
    let mut avg = vec![0.0; max_lag + 1];
    for c in 0..3 {
        let series: Vec<f64> = feats.iter().map(|f| f[c]).collect();
        for (a, r) in avg.iter_mut().zip(autocorrelation(&series, max_lag)) {
            *a += r / 3.0;
        }
    }
    avg
}

/// `g_t z` for each sample; `z` should be a unit vector.
pub fn sphere_projection(trace: &Trace, z: &Vector3<f64>) -> Vec<Vector3<f64>> {
    trace.positions().map(|g| g.act(z)).collect()
}

/// Exact i.i.d. samples from `∝ e^{−βV(g)} dHaar(g)` for the trace potential.
///
/// Haar proposals are accepted with probability `e^{−β(V(g) − V_min)}`,
/// which is at most one because `V_min` is the global minimum of `V`.
pub fn rejection_oracle<R: Rng + ?Sized>(alpha: f64, beta: f64, n: usize, rng: &mut R) -> Vec<GroupElement> {
    let potential = TracePotential::new(alpha);
    let v_min = potential.minimum();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let g = haar_sample(rng);
        let accept = (-beta * (potential.value(&g) - v_min)).exp();
        if rng.random::<f64>() < accept {
            out.push(g);
        }
    }
    out
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic at level `level`.
pub fn ks_critical_value(level: f64, n: usize, m: usize) -> f64 {
    let c = (-(0.5 * level).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}
