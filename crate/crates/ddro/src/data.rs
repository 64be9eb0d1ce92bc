//! Samples, order statistics, random streams and the statistical thresholds
//! (bootstrap, Kolmogorov-Smirnov, chi-square quantile, binomial order index)
//! that calibrate every uncertainty set.

use std::collections::HashMap;
use std::io::Read;
use std::sync::{OnceLock, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{DdroError, Result};

/// Known lower/upper bounds on the support of each coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SupportBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(DdroError::validation(
                "support_box",
                "lower and upper must be non-empty and of equal length",
            ));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(DdroError::validation(
                    "support_box",
                    format!("coordinate {i}: need finite lower <= upper, got [{l}, {u}]"),
                ));
            }
        }
        Ok(SupportBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Parses `lo1:hi1,lo2:hi2,...`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for part in spec.split(',') {
            let (l, u) = part.split_once(':').ok_or_else(|| {
                DdroError::validation("box", format!("expected lo:hi, got '{part}'"))
            })?;
            let l: f64 = l
                .trim()
                .parse()
                .map_err(|_| DdroError::validation("box", format!("bad lower bound '{l}'")))?;
            let u: f64 = u
                .trim()
                .parse()
                .map_err(|_| DdroError::validation("box", format!("bad upper bound '{u}'")))?;
            lower.push(l);
            upper.push(u);
        }
        SupportBox::new(lower, upper)
    }

    /// δ*(v | box).
    pub fn support(&self, v: &[f64]) -> f64 {
        v.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&vi, (&l, &u))| (vi * l).max(vi * u))
            .sum()
    }
}

/// N×d matrix of i.i.d. samples, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n: usize,
    d: usize,
    samples: Vec<f64>,
    column_names: Vec<String>,
    support_box: Option<SupportBox>,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(DdroError::validation("samples", "need at least one row"));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(DdroError::validation("samples", "need at least one column"));
        }
        let mut samples = Vec::with_capacity(n * d);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(DdroError::validation(
                    "samples",
                    format!("row {j} has {} values, expected {d}", row.len()),
                ));
            }
            samples.extend_from_slice(row);
        }
        Self::from_flat(n, d, samples)
    }

    pub fn from_flat(n: usize, d: usize, samples: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 || samples.len() != n * d {
            return Err(DdroError::validation(
                "samples",
                format!("expected {n}x{d} values, got {}", samples.len()),
            ));
        }
        if let Some(k) = samples.iter().position(|x| !x.is_finite()) {
            return Err(DdroError::validation(
                "samples",
                format!("non-finite value at row {}, column {}", k / d, k % d),
            ));
        }
        let column_names = (0..d).map(|i| format!("u{}", i + 1)).collect();
        Ok(Dataset {
            n,
            d,
            samples,
            column_names,
            support_box: None,
        })
    }

    /// Reads a CSV document: a header row followed by one sample per row.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| DdroError::validation("csv", e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let d = names.len();
        let mut samples = Vec::new();
        let mut n = 0;
        for (j, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| DdroError::validation("csv", e.to_string()))?;
            if rec.len() != d {
                return Err(DdroError::validation(
                    "csv",
                    format!("row {} has {} cells, header has {d}", j + 1, rec.len()),
                ));
            }
            for (i, cell) in rec.iter().enumerate() {
                let x: f64 = cell.parse().map_err(|_| {
                    DdroError::validation(
                        "csv",
                        format!("row {}, column '{}': '{cell}' is not a number", j + 1, names[i]),
                    )
                })?;
                samples.push(x);
            }
            n += 1;
        }
        let mut ds = Self::from_flat(n, d, samples)?;
        ds.column_names = names;
        Ok(ds)
    }

    pub fn with_support_box(mut self, b: SupportBox) -> Result<Self> {
        if b.dim() != self.d {
            return Err(DdroError::validation(
                "support_box",
                format!("box has dimension {}, data has {}", b.dim(), self.d),
            ));
        }
        for j in 0..self.n {
            for i in 0..self.d {
                let x = self.get(j, i);
                if x < b.lower[i] || x > b.upper[i] {
                    return Err(DdroError::validation(
                        "support_box",
                        format!("sample ({j}, {i}) = {x} outside [{}, {}]", b.lower[i], b.upper[i]),
                    ));
                }
            }
        }
        self.support_box = Some(b);
        Ok(self)
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d {
            return Err(DdroError::validation("column_names", "length must equal d"));
        }
        self.column_names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.samples[j * self.d + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.samples[j * self.d..(j + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks(self.d)
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.n).map(|j| self.get(j, i)).collect()
    }

    pub fn flat(&self) -> &[f64] {
        &self.samples
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn support_box(&self) -> Option<&SupportBox> {
        self.support_box.as_ref()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for r in self.rows() {
            for (mi, x) in m.iter_mut().zip(r) {
                *mi += x;
            }
        }
        m.iter_mut().for_each(|x| *x /= self.n as f64);
        m
    }

    /// Rows selected by index (with repetition), keeping names and box.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let mut samples = Vec::with_capacity(idx.len() * self.d);
        for &j in idx {
            samples.extend_from_slice(self.row(j));
        }
        Dataset {
            n: idx.len(),
            d: self.d,
            samples,
            column_names: self.column_names.clone(),
            support_box: self.support_box.clone(),
        }
    }

    /// SHA-256 over shape, samples and box.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"ddro-dataset-v1");
        h.update((self.n as u64).to_le_bytes());
        h.update((self.d as u64).to_le_bytes());
        for x in &self.samples {
            h.update(x.to_le_bytes());
        }
        if let Some(b) = &self.support_box {
            for x in b.lower.iter().chain(&b.upper) {
                h.update(x.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-coordinate sorted columns, with the support box bounds as sentinels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalOrderStats {
    pub sorted: Vec<Vec<f64>>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

impl MarginalOrderStats {
    pub fn n(&self) -> usize {
        self.sorted.first().map_or(0, Vec::len)
    }

    /// û_i^(0), û_i^(1), …, û_i^(N+1) for coordinate i.
    pub fn with_sentinels(&self, i: usize) -> Result<Vec<f64>> {
        let (lo, hi) = match (&self.lower, &self.upper) {
            (Some(l), Some(u)) => (l[i], u[i]),
            _ => return Err(DdroError::SupportBoxRequired),
        };
        let mut out = Vec::with_capacity(self.n() + 2);
        out.push(lo);
        out.extend_from_slice(&self.sorted[i]);
        out.push(hi);
        Ok(out)
    }

    /// û_i^(k) with the 1-based order index; 0 and N+1 resolve to the sentinels.
    pub fn order_stat(&self, i: usize, k: usize) -> Result<f64> {
        let n = self.n();
        if k == 0 {
            self.lower.as_ref().map(|l| l[i]).ok_or(DdroError::SupportBoxRequired)
        } else if k == n + 1 {
            self.upper.as_ref().map(|u| u[i]).ok_or(DdroError::SupportBoxRequired)
        } else if k <= n {
            Ok(self.sorted[i][k - 1])
        } else {
            Err(DdroError::validation("k", format!("order index {k} exceeds N+1")))
        }
    }
}

pub fn order_statistics(data: &Dataset) -> MarginalOrderStats {
    let sorted = (0..data.d())
        .map(|i| {
            let mut c = data.column(i);
            c.sort_by(f64::total_cmp);
            c
        })
        .collect();
    MarginalOrderStats {
        sorted,
        lower: data.support_box().map(|b| b.lower.clone()),
        upper: data.support_box().map(|b| b.upper.clone()),
    }
}

/// Finite-support distribution over points a_0 … a_{n−1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub support: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(DdroError::validation("probs", "need one probability per support point"));
        }
        let d = support[0].len();
        if d == 0 || support.iter().any(|a| a.len() != d) {
            return Err(DdroError::validation("support", "points must share a positive dimension"));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(DdroError::validation("probs", "must be nonnegative"));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(DdroError::validation("probs", format!("sum to {s}, not 1")));
        }
        Ok(DiscreteDistribution { support, probs })
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    /// Draws `n` i.i.d. rows.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Dataset {
        let mut cum = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for p in &self.probs {
            acc += p;
            cum.push(acc);
        }
        let d = self.dim();
        let mut samples = Vec::with_capacity(n * d);
        for _ in 0..n {
            let r: f64 = rng.gen::<f64>() * acc;
            let k = cum.partition_point(|&c| c <= r).min(self.probs.len() - 1);
            samples.extend_from_slice(&self.support[k]);
        }
        Dataset::from_flat(n, d, samples).expect("support points are finite")
    }

    /// VaR_ε(v) = inf{t : P(ũᵀv ≤ t) ≥ 1−ε}, by enumeration.
    pub fn value_at_risk(&self, v: &[f64], eps: f64) -> f64 {
        let mut vals: Vec<(f64, f64)> = self
            .support
            .iter()
            .zip(&self.probs)
            .map(|(a, &p)| (dot(a, v), p))
            .collect();
        vals.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut cum = 0.0;
        for &(t, p) in &vals {
            cum += p;
            if cum >= 1.0 - eps - 1e-12 {
                return t;
            }
        }
        vals.last().map(|x| x.0).unwrap_or(0.0)
    }
}

/// Mean, standard deviation and 10%/90% quantiles of a replication series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q10: f64,
    pub q90: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        let q = |p: f64| s[((p * n).ceil() as usize).clamp(1, s.len()) - 1];
        Summary {
            mean,
            sd,
            q10: q(0.1),
            q90: q(0.9),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A reproducible random stream identified by (master_seed, stream_id).
///
/// Streams are ChaCha8 keyed by the master seed with the stream id selecting
/// the ChaCha stream, so distinct ids never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomSource {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RandomSource {
    pub fn new(master_seed: u64) -> Self {
        RandomSource {
            master_seed,
            stream_id: 0,
        }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        RandomSource {
            master_seed: self.master_seed,
            stream_id,
        }
    }

    /// Child source for sub-task `index`; children of distinct parents or
    /// distinct indices are distinct streams.
    pub fn derive(&self, index: u64) -> RandomSource {
        RandomSource {
            master_seed: splitmix64(self.master_seed ^ splitmix64(self.stream_id.wrapping_add(1))),
            stream_id: index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.master_seed);
        r.set_stream(self.stream_id);
        r
    }
}

/// Multinomial counts of one with-replacement resample of size `n`.
pub fn resample_counts(n: usize, source: &RandomSource) -> Vec<u32> {
    let mut rng = source.rng();
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.gen_range(0..n)] += 1;
    }
    counts
}

/// Row indices of one with-replacement resample of size `n`; consistent with
/// [`resample_counts`] for the same source.
pub fn resample_indices(n: usize, source: &RandomSource) -> Vec<usize> {
    let mut rng = source.rng();
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// The ⌈n_b(1−α)⌉-th smallest statistic, i.e. the bootstrap (1−α)-quantile.
pub fn upper_order_statistic(stats: &mut [f64], alpha: f64) -> f64 {
    stats.sort_by(f64::total_cmp);
    let nb = stats.len();
    let k = ((nb as f64) * (1.0 - alpha) - 1e-9).ceil().max(1.0) as usize;
    stats[k.min(nb) - 1]
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(DdroError::validation("alpha", format!("must lie in (0,1), got {alpha}")))
    }
}

/// Runs `n_b` resamples and returns, for each of the `k` statistics the
/// closure reports, its values across replicates. Replicate `r` draws from
/// `rng.derive(r)`.
pub fn bootstrap_replicates<F>(
    n_rows: usize,
    n_b: usize,
    k: usize,
    rng: &RandomSource,
    mut stat: F,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&[u32]) -> Vec<f64>,
{
    if n_b == 0 {
        return Err(DdroError::validation("n_b", "must be positive"));
    }
    let mut out = vec![Vec::with_capacity(n_b); k];
    for r in 0..n_b {
        let counts = resample_counts(n_rows, &rng.derive(r as u64));
        let s = stat(&counts);
        debug_assert_eq!(s.len(), k);
        for (slot, x) in out.iter_mut().zip(s) {
            if !x.is_finite() {
                return Err(DdroError::NonFiniteStatistic { replicate: r });
            }
            slot.push(x);
        }
    }
    Ok(out)
}

/// Bootstrap threshold of a dataset statistic.
pub fn bootstrap_threshold<F>(
    data: &Dataset,
    statistic: F,
    alpha: f64,
    n_b: usize,
    rng: &RandomSource,
) -> Result<f64>
where
    F: Fn(&Dataset) -> f64,
{
    check_alpha(alpha)?;
    if n_b == 0 {
        return Err(DdroError::validation("n_b", "must be positive"));
    }
    let mut stats = Vec::with_capacity(n_b);
    for r in 0..n_b {
        let idx = resample_indices(data.n(), &rng.derive(r as u64));
        let x = statistic(&data.select_rows(&idx));
        if !x.is_finite() {
            return Err(DdroError::NonFiniteStatistic { replicate: r });
        }
        stats.push(x);
    }
    Ok(upper_order_statistic(&mut stats, alpha))
}

const KS_REPLICATIONS: usize = 20_000;
const KS_SEED: u64 = 0x6b73_5f6e_756c_6c31;

fn ks_cache() -> &'static RwLock<HashMap<(usize, u64), f64>> {
    static CACHE: OnceLock<RwLock<HashMap<(usize, u64), f64>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Two-sided KS statistic of sorted uniforms against the uniform CDF.
pub(crate) fn ks_statistic_sorted(u: &[f64]) -> f64 {
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(k, &x)| {
            let k = k as f64;
            ((k + 1.0) / n - x).max(x - k / n)
        })
        .fold(0.0, f64::max)
}

/// Γ^KS(n, α): the (1−α)-quantile of the two-sided statistic D_n under the
/// null, by Monte-Carlo with a fixed seed. Results are cached per (n, α).
pub fn ks_threshold(n: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(DdroError::validation("n", "must be positive"));
    }
    let key = (n, alpha.to_bits());
    if let Some(&g) = ks_cache().read().expect("ks cache poisoned").get(&key) {
        return Ok(g);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(KS_SEED ^ splitmix64(n as u64));
    let mut stats = Vec::with_capacity(KS_REPLICATIONS);
    let mut u = vec![0.0; n];
    for _ in 0..KS_REPLICATIONS {
        // Sorted uniforms as normalized partial sums of exponential spacings.
        let mut s = 0.0;
        for x in u.iter_mut() {
            s += rng.sample::<f64, _>(Exp1);
            *x = s;
        }
        let total = s + rng.sample::<f64, _>(Exp1);
        u.iter_mut().for_each(|x| *x /= total);
        stats.push(ks_statistic_sorted(&u));
    }
    let g = upper_order_statistic(&mut stats, alpha);
    ks_cache().write().expect("ks cache poisoned").insert(key, g);
    Ok(g)
}

/// Quantile of the chi-square distribution by bisection on the regularized
/// lower incomplete gamma function.
pub fn chi2_quantile(dof: f64, p: f64) -> Result<f64> {
    if !(dof > 0.0) {
        return Err(DdroError::validation("dof", "must be positive"));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(DdroError::validation("p", format!("must lie in [0,1), got {p}")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let cdf = |x: f64| gamma_lr(dof / 2.0, x / 2.0);
    let mut hi = dof.max(1.0);
    while cdf(hi) < p {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(DdroError::numeric("chi2_quantile: bracket expansion overflowed"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi.max(1.0) {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(DdroError::numeric("chi2_quantile: bisection did not converge"))
}

/// Smallest k with Σ_{j=k}^{n} C(n,j)(ε/d)^{n−j}(1−ε/d)^j ≤ α/(2d); n+1 if none.
pub fn quantile_index_s(n: usize, eps: f64, d: usize, alpha: f64) -> Result<usize> {
    check_alpha(alpha)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(DdroError::validation("eps", format!("must lie in (0,1), got {eps}")));
    }
    if d == 0 || n == 0 {
        return Err(DdroError::validation("n, d", "must be positive"));
    }
    let q = eps / d as f64;
    let thr = alpha / (2.0 * d as f64);
    let nf = n as f64;
    let ln_c = |j: f64| ln_gamma(nf + 1.0) - ln_gamma(j + 1.0) - ln_gamma(nf - j + 1.0);
    let ln_term = |j: usize| {
        let j = j as f64;
        let a = if nf - j > 0.0 { (nf - j) * q.ln() } else { 0.0 };
        ln_c(j) + a + j * (1.0 - q).ln()
    };
    // Accumulate the upper tail from j = n downward in log space.
    let mut ln_tail = f64::NEG_INFINITY;
    let mut best = n + 1;
    for j in (0..=n).rev() {
        let t = ln_term(j);
        let m = ln_tail.max(t);
        ln_tail = m + ((ln_tail - m).exp() + (t - m).exp()).ln();
        if ln_tail <= thr.ln() {
            best = j;
        } else {
            break;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn order_stats_with_box() {
        let ds = Dataset::from_rows(&[vec![3.0], vec![1.0], vec![2.0]])
            .unwrap()
            .with_support_box(SupportBox::new(vec![0.0], vec![5.0]).unwrap())
            .unwrap();
        let os = order_statistics(&ds);
        assert_eq!(os.with_sentinels(0).unwrap(), vec![0.0, 1.0, 2.0, 3.0, 5.0]);
    }

    #[test]
    fn order_stats_constant_column() {
        let ds = Dataset::from_rows(&vec![vec![4.5]; 7]).unwrap();
        let os = order_statistics(&ds);
        assert!(os.sorted[0].iter().all(|&x| x == 4.5));
        assert_eq!(os.with_sentinels(0), Err(DdroError::SupportBoxRequired));
    }

    #[test]
    fn order_stats_uniform_median() {
        let mut rng = RandomSource::new(11).rng();
        let rows: Vec<Vec<f64>> = (0..10_000).map(|_| vec![rng.gen::<f64>()]).collect();
        let os = order_statistics(&Dataset::from_rows(&rows).unwrap());
        assert!((os.order_stat(0, 5000).unwrap() - 0.5).abs() < 0.02);
    }

    #[test]
    fn csv_rejects_non_numeric() {
        let ok = Dataset::from_csv_reader("a,b\n1,2\n3,4.5\n".as_bytes()).unwrap();
        assert_eq!(ok.n(), 2);
        assert_eq!(ok.column_names(), &["a".to_string(), "b".to_string()]);
        let bad = Dataset::from_csv_reader("a,b\n1,x\n".as_bytes());
        assert!(matches!(bad, Err(DdroError::Validation { .. })));
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = RandomSource::new(5);
        let a: Vec<u64> = (0..4).map(|_| 0).scan(s.rng(), |r, _: u64| Some(r.gen())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(s.rng(), |r, _: u64| Some(r.gen())).collect();
        let c: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(s.with_stream(1).rng(), |r, _: u64| Some(r.gen()))
            .collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(s.derive(0), s.derive(1));
    }

    #[test]
    fn bootstrap_constant_statistic() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let t = bootstrap_threshold(&ds, |_| 0.0, 0.1, 200, &RandomSource::new(1)).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn bootstrap_picks_hand_enumerated_order_statistic() {
        // Replay the four resample streams independently and pick the
        // ⌈4·0.75⌉ = 3rd smallest resample mean.
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        let src = RandomSource::new(2024);
        let mut means: Vec<f64> = (0..4)
            .map(|r| {
                let mut rng = src.derive(r).rng();
                (0..4).map(|_| (rng.gen_range(0..4usize) + 1) as f64).sum::<f64>() / 4.0
            })
            .collect();
        means.sort_by(f64::total_cmp);
        let t = bootstrap_threshold(&ds, |s| s.mean()[0], 0.25, 4, &src).unwrap();
        assert_eq!(t, means[2]);
    }

    #[test]
    fn bootstrap_flags_non_finite() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let e = bootstrap_threshold(&ds, |_| f64::NAN, 0.1, 10, &RandomSource::new(1));
        assert_eq!(e, Err(DdroError::NonFiniteStatistic { replicate: 0 }));
    }

    #[test]
    fn chi2_known_values() {
        assert_abs_diff_eq!(chi2_quantile(1.0, 0.95).unwrap(), 3.841459, epsilon = 1e-3);
        assert_abs_diff_eq!(chi2_quantile(2.0, 0.5).unwrap(), 2.0 * 2f64.ln(), epsilon = 1e-6);
        assert_eq!(chi2_quantile(3.0, 0.0).unwrap(), 0.0);
        assert!(chi2_quantile(3.0, 1e-12).unwrap() < 1e-5);
    }

    #[test]
    fn chi2_matches_squared_normals() {
        let mut rng = RandomSource::new(3).rng();
        let m = 200_000;
        let mut x: Vec<f64> = (0..m)
            .map(|_| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                z * z
            })
            .collect();
        let q = upper_order_statistic(&mut x, 0.05);
        assert!((q - chi2_quantile(1.0, 0.95).unwrap()).abs() < 0.06);
    }

    #[test]
    fn quantile_index_examples() {
        assert_eq!(quantile_index_s(10, 0.1, 1, 0.1).unwrap(), 11);
        assert_eq!(quantile_index_s(29, 0.1, 1, 0.1).unwrap(), 29);
    }

    #[test]
    fn quantile_index_matches_direct_sum() {
        // Direct (non-log) binomial tail for moderate n.
        for &(n, eps, d, alpha) in &[(60usize, 0.2, 2usize, 0.1), (120, 0.1, 1, 0.05), (45, 0.3, 3, 0.2)] {
            let q: f64 = eps / d as f64;
            let binom = |j: usize| -> f64 {
                let mut c = 1.0f64;
                for t in 0..j {
                    c *= (n - t) as f64 / (t + 1) as f64;
                }
                c * q.powi((n - j) as i32) * (1.0 - q).powi(j as i32)
            };
            let tail = |k: usize| (k..=n).map(binom).sum::<f64>();
            let thr = alpha / (2.0 * d as f64);
            let expected = (0..=n).find(|&k| tail(k) <= thr).unwrap_or(n + 1);
            assert_eq!(quantile_index_s(n, eps, d, alpha).unwrap(), expected);
        }
    }

    #[test]
    fn quantile_index_ratio_decreases() {
        let r: Vec<f64> = [100usize, 1000, 10_000]
            .iter()
            .map(|&n| quantile_index_s(n, 0.1, 1, 0.1).unwrap() as f64 / n as f64)
            .collect();
        assert!(r[0] > r[1] && r[1] > r[2] && r[2] > 0.9);
    }

    #[test]
    fn ks_small_sample_oracle() {
        // Independent oracle: sort raw uniforms rather than using spacings.
        let mut rng = RandomSource::new(99).rng();
        let n = 100;
        let mut stats: Vec<f64> = (0..200_000)
            .map(|_| {
                let mut u: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                u.sort_by(f64::total_cmp);
                ks_statistic_sorted(&u)
            })
            .collect();
        let oracle = upper_order_statistic(&mut stats, 0.2);
        let g = ks_threshold(100, 0.2).unwrap();
        assert!((g - oracle).abs() < 0.003, "{g} vs {oracle}");
        assert!((g - 0.1073).abs() < 0.003);
    }

    /// P(K ≤ x) for the Kolmogorov distribution.
    fn kolmogorov_cdf(x: f64) -> f64 {
        1.0 - 2.0
            * (1..200)
                .map(|k| {
                    let k = k as f64;
                    let sgn = if (k as i64) % 2 == 1 { 1.0 } else { -1.0 };
                    sgn * (-2.0 * k * k * x * x).exp()
                })
                .sum::<f64>()
    }

    #[test]
    fn ks_large_sample_asymptotics() {
        let (mut lo, mut hi) = (0.5, 3.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if kolmogorov_cdf(mid) < 0.95 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 1.358).abs() < 1e-3);
        let g = ks_threshold(1000, 0.05).unwrap() * 1000f64.sqrt();
        assert!((g / lo - 1.0).abs() < 0.03, "{g}");
    }

    #[test]
    fn ks_alpha_near_one_goes_to_zero() {
        assert!(ks_threshold(50, 0.999_99).unwrap() < ks_threshold(50, 0.5).unwrap() / 2.0);
    }
}
