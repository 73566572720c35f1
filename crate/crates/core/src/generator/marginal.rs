//! Per-column marginal models: Gaussian KDE for numerics, empirical
//! frequency tables for categoricals. Both expose a quantile function
//! (copula uniforms in, values out) and a rank transform used when the
//! copula is fitted.

use statrs::distribution::{ContinuousCDF, Normal};

/// Reference points kept per KDE; larger fits are thinned by quantiles.
const MAX_REFS: usize = 1024;
/// Resolution of the precomputed CDF grid the quantile function inverts.
const GRID: usize = 2048;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Linear-interpolation quantile of pre-sorted values.
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Average ranks (1-based, ties averaged) of a sequence.
pub(crate) fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Gaussian kernel density estimate with Silverman bandwidth, sampled by
/// inverting a precomputed CDF grid over the truncated support
/// [min − 3h, max + 3h].
#[derive(Debug, Clone)]
pub(crate) struct KdeMarginal {
    /// Degenerate (constant-column) fallback.
    constant: Option<f64>,
    lo: f64,
    hi: f64,
    cdf: Vec<f64>,
}

impl KdeMarginal {
    pub(crate) fn fit(values: &[f64]) -> KdeMarginal {
        let n = values.len();
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);

        let mean = sorted.iter().sum::<f64>() / n as f64;
        let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1).max(1) as f64;
        let std = var.sqrt();
        let iqr = sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25);
        let scale = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
        let h = 0.9 * scale * (n as f64).powf(-0.2);
        if h <= 0.0 || h.is_nan() {
            return KdeMarginal {
                constant: Some(sorted[0]),
                lo: sorted[0],
                hi: sorted[0],
                cdf: Vec::new(),
            };
        }

        // Thin large fits to quantile-spaced reference points; the KDE over
        // them is an accurate, cheaper stand-in for the full-data KDE.
        let refs: Vec<f64> = if n <= MAX_REFS {
            sorted.clone()
        } else {
            (0..MAX_REFS)
                .map(|i| sorted_quantile(&sorted, (i as f64 + 0.5) / MAX_REFS as f64))
                .collect()
        };

        let lo = sorted[0] - 3.0 * h;
        let hi = sorted[n - 1] + 3.0 * h;
        let normal = std_normal();
        let raw = |t: f64| -> f64 {
            refs.iter().map(|r| normal.cdf((t - r) / h)).sum::<f64>() / refs.len() as f64
        };
        let (raw_lo, raw_hi) = (raw(lo), raw(hi));
        let span = raw_hi - raw_lo;
        let step = (hi - lo) / (GRID - 1) as f64;
        let mut cdf: Vec<f64> = (0..GRID)
            .map(|j| ((raw(lo + j as f64 * step) - raw_lo) / span).clamp(0.0, 1.0))
            .collect();
        cdf[0] = 0.0;
        cdf[GRID - 1] = 1.0;
        // Guard monotonicity against rounding.
        for j in 1..GRID {
            if cdf[j] < cdf[j - 1] {
                cdf[j] = cdf[j - 1];
            }
        }
        KdeMarginal {
            constant: None,
            lo,
            hi,
            cdf,
        }
    }

    /// Support the sampler can emit values in.
    pub(crate) fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Inverse CDF via binary search plus linear interpolation on the grid.
    pub(crate) fn quantile(&self, u: f64) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        let u = u.clamp(0.0, 1.0);
        let step = (self.hi - self.lo) / (GRID - 1) as f64;
        // First index with cdf >= u.
        let j = self.cdf.partition_point(|&c| c < u);
        if j == 0 {
            return self.lo;
        }
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.lo + ((j - 1) as f64 + frac) * step
    }
}

/// Empirical distribution of a categorical column. Values are held in
/// frequency order (count descending, value ascending) with cumulative
/// probabilities; each value's interval midpoint serves as its quantile in
/// the copula's rank transform.
#[derive(Debug, Clone)]
pub(crate) struct FreqMarginal {
    values: Vec<String>,
    cum: Vec<f64>,
    midpoints: Vec<f64>,
}

impl FreqMarginal {
    pub(crate) fn fit<S: AsRef<str>>(observed: &[S]) -> FreqMarginal {
        let mut counts: Vec<(String, usize)> = Vec::new();
        for v in observed {
            let v = v.as_ref();
            match counts.iter_mut().find(|(value, _)| value == v) {
                Some((_, c)) => *c += 1,
                None => counts.push((v.to_owned(), 1)),
            }
        }
        counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let total = observed.len() as f64;
        let mut cum = Vec::with_capacity(counts.len());
        let mut midpoints = Vec::with_capacity(counts.len());
        let mut acc = 0.0;
        for (_, count) in &counts {
            let p = *count as f64 / total;
            midpoints.push(acc + p / 2.0);
            acc += p;
            cum.push(acc);
        }
        *cum.last_mut().unwrap() = 1.0;
        FreqMarginal {
            values: counts.into_iter().map(|(v, _)| v).collect(),
            cum,
            midpoints,
        }
    }

    pub(crate) fn quantile(&self, u: f64) -> &str {
        let j = self.cum.partition_point(|&c| c <= u);
        &self.values[j.min(self.values.len() - 1)]
    }

    /// Quantile midpoint of a value seen at fit time.
    pub(crate) fn midpoint_of(&self, value: &str) -> Option<f64> {
        self.values
            .iter()
            .position(|v| v == value)
            .map(|i| self.midpoints[i])
    }

    #[cfg(test)]
    pub(crate) fn probability_of(&self, value: &str) -> f64 {
        match self.values.iter().position(|v| v == value) {
            Some(0) => self.cum[0],
            Some(i) => self.cum[i] - self.cum[i - 1],
            None => 0.0,
        }
    }
}
