use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Unsupported("a slope needs at least two paired points".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::NonFinite("log-log slope of non-positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if den == 0.0 {
        return Err(Error::Unsupported("slope over a single distinct x".into()));
    }
    Ok(num / den)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(Error::Unsupported("correlation needs at least three pairs".into()));
    }
    let (ma, mb) = (mean(a), mean(b));
    let c: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Unsupported("correlation of a constant sample".into()));
    }
    Ok(c / (va * vb).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
}

/// Slope of the per-`x` means with a 95% percentile bootstrap interval.
/// Each resample redraws the seeds at every `x` independently.
pub fn bootstrap_slope(xs: &[f64], samples: &[Vec<f64>], resamples: usize, seed: u64) -> Result<SlopeEstimate> {
    if xs.len() != samples.len() || samples.iter().any(|s| s.is_empty()) {
        return Err(Error::Unsupported("every axis value needs at least one sample".into()));
    }
    let means: Vec<f64> = samples.iter().map(|s| mean(s)).collect();
    let slope = loglog_slope(xs, &means)?;
    let mut rng = seeding::stream_rng(seed, seeding::SWEEP, 0);
    let mut draws = Vec::with_capacity(resamples);
    let mut m = vec![0.0; xs.len()];
    for _ in 0..resamples {
        for (mi, s) in m.iter_mut().zip(samples) {
            *mi = (0..s.len()).map(|_| s[rng.gen_range(0..s.len())]).sum::<f64>() / s.len() as f64;
        }
        if let Ok(v) = loglog_slope(xs, &m) {
            draws.push(v);
        }
    }
    let (ci_low, ci_high) = if draws.is_empty() {
        (slope, slope)
    } else {
        draws.sort_by(f64::total_cmp);
        (quantile(&draws, 0.025), quantile(&draws, 0.975))
    };
    Ok(SlopeEstimate {
        slope,
        ci_low,
        ci_high,
        resamples: draws.len(),
    })
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}
