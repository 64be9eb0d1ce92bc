//! Probabilistic bounds on the waiting time of the n-th customer in a G/G/1
//! queue, from FB or CS sets fitted to service and interarrival samples.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ks_threshold, Dataset, RandomSource, SupportBox};
use crate::error::{DdroError, Result};
use crate::scalar::bisect_increasing;
use crate::sets::{fit_cs, fit_fb, SetParams};

/// Samples capped at a bound: min(X, bound).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Capped {
    Exponential { mean: f64, bound: f64 },
    Pareto { shape: f64, scale: f64, bound: f64 },
}

impl Capped {
    pub fn bound(&self) -> f64 {
        match *self {
            Capped::Exponential { bound, .. } | Capped::Pareto { bound, .. } => bound,
        }
    }

    /// Inverse-CDF draw; the tail beyond the bound lands on the bound.
    pub fn draw(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen();
        let x = match *self {
            Capped::Exponential { mean, .. } => -mean * (1.0 - u).ln(),
            Capped::Pareto { shape, scale, .. } => scale * (1.0 - u).powf(-1.0 / shape),
        };
        x.min(self.bound())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Capped::Exponential { mean, bound } => mean * (1.0 - (-bound / mean).exp()),
            Capped::Pareto { shape, scale, bound } => {
                if bound <= scale {
                    return bound;
                }
                // E min(X, b) = ∫₀ᵇ P(X > x) dx.
                let tail = if (shape - 1.0).abs() < 1e-12 {
                    scale * (bound / scale).ln()
                } else {
                    scale * (1.0 - (bound / scale).powf(1.0 - shape)) / (shape - 1.0)
                };
                scale + tail
            }
        }
    }
}

/// Service and interarrival laws of a queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueModel {
    pub service: Capped,
    pub interarrival: Capped,
}

impl Default for QueueModel {
    /// Exponential service with mean 3.05 capped at 15.25 and Pareto(1.1)
    /// interarrivals capped at 15: means 3.029 and 3.372, about 90% load.
    fn default() -> Self {
        QueueModel {
            service: Capped::Exponential {
                mean: 3.05,
                bound: 15.25,
            },
            interarrival: Capped::Pareto {
                shape: 1.1,
                scale: 1.0,
                bound: 15.0,
            },
        }
    }
}

impl QueueModel {
    pub fn sample(&self, n: usize, rng: &RandomSource) -> QueueData {
        let mut r = rng.rng();
        let mut service = Vec::with_capacity(n);
        let mut interarrival = Vec::with_capacity(n);
        for _ in 0..n {
            service.push(self.service.draw(&mut r));
            interarrival.push(self.interarrival.draw(&mut r));
        }
        QueueData {
            service,
            interarrival,
            service_bound: self.service.bound(),
            interarrival_bound: self.interarrival.bound(),
        }
    }

    /// Draws of W̃_n from independent queues started empty.
    pub fn simulate_wn(&self, n: usize, reps: usize, rng: &RandomSource) -> Vec<f64> {
        let mut r = rng.rng();
        let mut x = vec![0.0; n];
        let mut t = vec![0.0; n];
        (0..reps)
            .map(|_| {
                for j in 0..n {
                    x[j] = self.service.draw(&mut r);
                    t[j] = self.interarrival.draw(&mut r);
                }
                *simulate_lindley(&x, &t).expect("equal lengths").last().unwrap_or(&0.0)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueData {
    pub service: Vec<f64>,
    pub interarrival: Vec<f64>,
    pub service_bound: f64,
    pub interarrival_bound: f64,
}

impl QueueData {
    pub fn new(service: Vec<f64>, interarrival: Vec<f64>, service_bound: f64, interarrival_bound: f64) -> Result<Self> {
        if service.len() != interarrival.len() || service.is_empty() {
            return Err(DdroError::validation("data", "need equally many service and interarrival samples"));
        }
        for (name, xs, b) in [("service", &service, service_bound), ("interarrival", &interarrival, interarrival_bound)] {
            if !(b > 0.0 && b.is_finite()) {
                return Err(DdroError::validation(name, "bound must be positive and finite"));
            }
            if let Some(x) = xs.iter().find(|&&x| !(0.0..=b).contains(&x)) {
                return Err(DdroError::validation(name, format!("sample {x} outside [0, {b}]")));
            }
        }
        Ok(QueueData {
            service,
            interarrival,
            service_bound,
            interarrival_bound,
        })
    }

    pub fn n(&self) -> usize {
        self.service.len()
    }

    fn dataset(&self) -> Result<Dataset> {
        let rows: Vec<Vec<f64>> = self.service.iter().zip(&self.interarrival).map(|(&x, &t)| vec![x, t]).collect();
        Dataset::from_rows(&rows)?.with_support_box(SupportBox::new(
            vec![0.0, 0.0],
            vec![self.service_bound, self.interarrival_bound],
        )?)
    }

    fn slice(&self, from: usize, to: usize) -> QueueData {
        QueueData {
            service: self.service[from..to].to_vec(),
            interarrival: self.interarrival[from..to].to_vec(),
            ..*self
        }
    }
}

/// W₁ = 0, W_{j+1} = max(0, W_j + x_j − t_{j+1}).
pub fn simulate_lindley(service: &[f64], interarrival: &[f64]) -> Result<Vec<f64>> {
    if service.len() != interarrival.len() {
        return Err(DdroError::validation("interarrival", "must have as many entries as service"));
    }
    let n = service.len();
    let mut w = Vec::with_capacity(n);
    if n == 0 {
        return Ok(w);
    }
    w.push(0.0);
    for j in 1..n {
        let prev = w[j - 1];
        w.push((prev + service[j - 1] - interarrival[j]).max(0.0));
    }
    Ok(w)
}

/// Sizes of the busy periods of the recursion: runs of customers starting
/// at a customer who finds the queue empty (W = 0 exactly). The trailing
/// run is dropped because it may be cut short by the end of the data.
pub fn busy_periods(service: &[f64], interarrival: &[f64]) -> Result<Vec<usize>> {
    let w = simulate_lindley(service, interarrival)?;
    let starts: Vec<usize> = (0..w.len()).filter(|&j| w[j] == 0.0).collect();
    Ok(starts.windows(2).map(|s| s[1] - s[0]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Fb,
    Cs,
}

/// The scalars the bounds need, fitted on (service, interarrival) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum QueueBoundParams {
    /// Forward mean bound and deviation of service, backward ones of
    /// interarrival.
    Fb { m_f1: f64, m_b2: f64, sigma_f1: f64, sigma_b2: f64 },
    /// Means, variances and the two bootstrap thresholds.
    Cs { mu1: f64, mu2: f64, var1: f64, var2: f64, gamma1: f64, gamma2: f64 },
}

impl QueueBoundParams {
    pub fn fit(data: &QueueData, kind: BoundKind, alpha: f64, n_b: usize, rng: &RandomSource) -> Result<Self> {
        let ds = data.dataset()?;
        match kind {
            BoundKind::Fb => {
                let set = fit_fb(&ds, alpha, n_b, false, rng)?;
                let SetParams::Fb(p) = set.params() else { unreachable!() };
                Ok(QueueBoundParams::Fb {
                    m_f1: p.m_f[0],
                    m_b2: p.m_b[1],
                    sigma_f1: p.sigma_f[0],
                    sigma_b2: p.sigma_b[1],
                })
            }
            BoundKind::Cs => {
                let set = fit_cs(&ds, alpha, n_b, rng)?;
                let SetParams::Cs(p) = set.params() else { unreachable!() };
                Ok(QueueBoundParams::Cs {
                    mu1: p.mu_hat[0],
                    mu2: p.mu_hat[1],
                    var1: p.sigma_hat[0],
                    var2: p.sigma_hat[3],
                    gamma1: p.gamma1,
                    gamma2: p.gamma2,
                })
            }
        }
    }

    /// Drift per customer.
    fn drift(&self) -> f64 {
        match *self {
            QueueBoundParams::Fb { m_f1, m_b2, .. } => m_f1 - m_b2,
            QueueBoundParams::Cs { mu1, mu2, .. } => mu1 - mu2,
        }
    }

    /// Smallest W with P(partial sum over s customers > W) ≤ ε guaranteed,
    /// i.e. drift·s + c(ε)·√s. Inverse of [`Self::term`].
    #[cfg(test)]
    fn level(&self, s: f64, eps: f64) -> f64 {
        self.drift() * s + self.scale(eps) * s.sqrt()
    }

    fn scale(&self, eps: f64) -> f64 {
        match *self {
            QueueBoundParams::Fb { sigma_f1, sigma_b2, .. } => {
                (2.0 * (1.0 / eps).ln() * (sigma_f1 * sigma_f1 + sigma_b2 * sigma_b2)).sqrt()
            }
            QueueBoundParams::Cs { var1, var2, gamma1, gamma2, .. } => {
                gamma1 + ((1.0 / eps - 1.0) * (var1 + var2 + 2.0 * gamma2)).sqrt()
            }
        }
    }

    /// ε_s(W): the level whose bound over s customers equals W; 1 when W is
    /// below every such bound.
    fn term(&self, s: f64, w: f64) -> f64 {
        let excess = (w - self.drift() * s) / s.sqrt();
        match *self {
            QueueBoundParams::Fb { sigma_f1, sigma_b2, .. } => {
                if excess <= 0.0 {
                    return 1.0;
                }
                let v = sigma_f1 * sigma_f1 + sigma_b2 * sigma_b2;
                if v == 0.0 {
                    return 0.0;
                }
                (-excess * excess / (2.0 * v)).exp()
            }
            QueueBoundParams::Cs { var1, var2, gamma1, gamma2, .. } => {
                let r = excess - gamma1;
                if r <= 0.0 {
                    return 1.0;
                }
                let v = var1 + var2 + 2.0 * gamma2;
                if v == 0.0 {
                    return 0.0;
                }
                1.0 / (r * r / v + 1.0)
            }
        }
    }
}

fn check_args(n: usize, eps_bar: f64) -> Result<()> {
    if n < 2 {
        return Err(DdroError::validation("n", "need n ≥ 2"));
    }
    if !(eps_bar > 0.0 && eps_bar < 1.0) {
        return Err(DdroError::validation("eps", format!("must lie in (0,1), got {eps_bar}")));
    }
    Ok(())
}

/// Union bound with ε̄/n per term, maximized over the continuous number of
/// summed customers s ∈ (0, n].
pub fn w1(params: &QueueBoundParams, n: usize, eps_bar: f64) -> Result<f64> {
    check_args(n, eps_bar)?;
    let a = params.drift();
    let c = params.scale(eps_bar / n as f64);
    let nf = n as f64;
    let value = if a >= 0.0 || nf < c * c / (4.0 * a * a) {
        a * nf + c * nf.sqrt()
    } else {
        c * c / (-4.0 * a)
    };
    Ok(value.max(0.0))
}

/// Root W of Σ_{s∈S} ε_s(W) = rhs; 0 when the sum is already below rhs at 0.
fn sum_root(params: &QueueBoundParams, terms: usize, rhs: f64, hi: f64) -> Result<f64> {
    let total = |w: f64| (1..=terms).map(|s| params.term(s as f64, w)).sum::<f64>();
    if terms == 0 || total(0.0) <= rhs {
        return Ok(0.0);
    }
    let mut hi = hi.max(1.0);
    let mut expansions = 0;
    while total(hi) > rhs {
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(DdroError::numeric("waiting-time equation has no root in range"));
        }
    }
    Ok(bisect_increasing(|w| rhs - total(w), 0.0, hi, 1e-12 * (1.0 + hi)))
}

/// Bound with the per-term ε optimized: the root of Σ_{j<n} ε_{n−j}(W) = ε̄.
pub fn w2(params: &QueueBoundParams, n: usize, eps_bar: f64) -> Result<f64> {
    let hi = w1(params, n, eps_bar)? + 1.0;
    sum_root(params, n - 1, eps_bar, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W3Result {
    pub bound: f64,
    /// Busy-period index k achieving the minimum, 1-based; `None` when the
    /// bound fell back to w2.
    pub k: Option<usize>,
    pub busy_periods: usize,
    pub gamma_ks: f64,
    pub fallback: bool,
}

/// Truncated bound: busy periods from the first half of the data, set
/// parameters from the second half. Holds at level 2α overall.
pub fn w3(
    data: &QueueData,
    n: usize,
    eps_bar: f64,
    alpha: f64,
    kind: BoundKind,
    n_b: usize,
    rng: &RandomSource,
) -> Result<W3Result> {
    check_args(n, eps_bar)?;
    let total = data.n();
    if total < 4 {
        return Err(DdroError::validation("data", "need at least 4 samples to split"));
    }
    let half = total.div_ceil(2);
    let first = data.slice(0, half);
    let second = data.slice(half, total);
    let params = QueueBoundParams::fit(&second, kind, alpha, n_b, rng)?;
    let mut sizes = busy_periods(&first.service, &first.interarrival)?;
    sizes.sort_unstable();
    let big_k = sizes.len();
    let fallback = |gamma_ks: f64| -> Result<W3Result> {
        Ok(W3Result {
            bound: w2(&params, n, eps_bar)?,
            k: None,
            busy_periods: big_k,
            gamma_ks,
            fallback: true,
        })
    };
    if big_k < 2 {
        return fallback(f64::NAN);
    }
    let gamma_ks = ks_threshold(big_k, alpha)?;
    let hi = w1(&params, n, eps_bar)? + 1.0;
    let mut best: Option<(f64, usize)> = None;
    for k in 1..big_k {
        let rhs = eps_bar - (1.0 - k as f64 / big_k as f64 + gamma_ks);
        if rhs <= 0.0 {
            continue;
        }
        let terms = n.min(sizes[k - 1]) - 1;
        let w = sum_root(&params, terms, rhs, hi)?;
        if best.map_or(true, |(b, _)| w < b) {
            best = Some((w, k));
        }
    }
    match best {
        Some((bound, k)) => Ok(W3Result {
            bound,
            k: Some(k),
            busy_periods: big_k,
            gamma_ks,
            fallback: false,
        }),
        None => fallback(gamma_ks),
    }
}

/// Sample Kingman-type bound with Markov's inequality:
/// (σ̂_t²μ̂_x² + σ̂_x²μ̂_t²) / (2ε̄ μ̂_t² (μ̂_t − μ̂_x)).
pub fn kingman_sample(data: &QueueData, eps_bar: f64) -> Result<f64> {
    if !(eps_bar > 0.0 && eps_bar < 1.0) {
        return Err(DdroError::validation("eps", format!("must lie in (0,1), got {eps_bar}")));
    }
    let moments = |xs: &[f64]| {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = if xs.len() > 1 {
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (m, v)
    };
    let (mx, vx) = moments(&data.service);
    let (mt, vt) = moments(&data.interarrival);
    if mt <= mx {
        return Err(DdroError::UnstableSample { mean_x: mx, mean_t: mt });
    }
    Ok((vt * mx * mx + vx * mt * mt) / (2.0 * eps_bar * mt * mt * (mt - mx)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    W1,
    W2,
    W3,
    Kingman,
}

impl std::str::FromStr for Variant {
    type Err = DdroError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "w1" => Ok(Variant::W1),
            "2" | "w2" => Ok(Variant::W2),
            "3" | "w3" => Ok(Variant::W3),
            "king" | "kingman" => Ok(Variant::Kingman),
            _ => Err(DdroError::validation("variant", format!("unknown variant '{s}'"))),
        }
    }
}

/// Parses names such as `fb2`, `cs1`, `kingman`.
pub fn parse_variant(s: &str) -> Result<(BoundKind, Variant)> {
    let s = s.trim().to_ascii_lowercase();
    if s == "kingman" || s == "king" {
        return Ok((BoundKind::Fb, Variant::Kingman));
    }
    let (kind, rest) = if let Some(r) = s.strip_prefix("fb") {
        (BoundKind::Fb, r)
    } else if let Some(r) = s.strip_prefix("cs") {
        (BoundKind::Cs, r)
    } else {
        return Err(DdroError::validation("variant", format!("unknown variant '{s}', expected fb1..3, cs1..3 or kingman")));
    };
    let v: Variant = rest.parse()?;
    if v == Variant::Kingman {
        return Err(DdroError::validation("variant", format!("unknown variant '{s}'")));
    }
    Ok((kind, v))
}

/// One bound computation from raw data.
pub struct BoundRequest {
    pub kind: BoundKind,
    pub variant: Variant,
    pub n: usize,
    pub alpha: f64,
    pub n_b: usize,
}

impl BoundRequest {
    pub fn compute(&self, data: &QueueData, eps_bar: f64, rng: &RandomSource) -> Result<f64> {
        match self.variant {
            Variant::Kingman => kingman_sample(data, eps_bar),
            Variant::W3 => Ok(w3(data, self.n, eps_bar, self.alpha, self.kind, self.n_b, rng)?.bound),
            v => {
                let p = QueueBoundParams::fit(data, self.kind, self.alpha, self.n_b, rng)?;
                if v == Variant::W1 {
                    w1(&p, self.n, eps_bar)
                } else {
                    w2(&p, self.n, eps_bar)
                }
            }
        }
    }
}

/// Bounds over a grid of ε, made non-increasing by carrying the smallest
/// bound seen at smaller ε forward (a bound valid at ε stays valid above).
/// Results are in ascending ε order.
pub fn cdf_envelope(data: &QueueData, req: &BoundRequest, eps_grid: &[f64], rng: &RandomSource) -> Result<Vec<(f64, f64)>> {
    let mut grid = eps_grid.to_vec();
    if grid.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(DdroError::validation("eps_grid", "every ε must lie in (0,1)"));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let out = match req.variant {
        // Fit once; the bound functions are cheap.
        Variant::W1 | Variant::W2 => {
            let p = QueueBoundParams::fit(data, req.kind, req.alpha, req.n_b, rng)?;
            grid.iter()
                .map(|&e| Ok((e, if req.variant == Variant::W1 { w1(&p, req.n, e)? } else { w2(&p, req.n, e)? })))
                .collect::<Result<Vec<_>>>()?
        }
        _ => grid.iter().map(|&e| Ok((e, req.compute(data, e, rng)?))).collect::<Result<Vec<_>>>()?,
    };
    let mut best = f64::INFINITY;
    Ok(out
        .into_iter()
        .map(|(e, b)| {
            best = best.min(b);
            (e, best)
        })
        .collect())
}

/// Bounds per replication, for each requested (kind, variant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueReplication {
    pub seed: u64,
    pub bounds: Vec<f64>,
}

/// Draws N samples per seed and evaluates every request on them.
pub fn replicate(
    model: &QueueModel,
    big_n: usize,
    eps_bar: f64,
    requests: &[BoundRequest],
    seeds: &[u64],
) -> Result<Vec<QueueReplication>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let root = RandomSource::new(seed);
            let data = model.sample(big_n, &root.derive(0));
            // W1 and W2 of one kind share a fit; W3 refits on its own half.
            let mut fits: Vec<(BoundKind, f64, usize, QueueBoundParams)> = Vec::new();
            let mut bounds = Vec::with_capacity(requests.len());
            for (i, r) in requests.iter().enumerate() {
                let b = match r.variant {
                    Variant::W1 | Variant::W2 => {
                        let found = fits
                            .iter()
                            .find(|(k, a, nb, _)| *k == r.kind && *a == r.alpha && *nb == r.n_b)
                            .map(|f| f.3);
                        let p = match found {
                            Some(p) => p,
                            None => {
                                let p = QueueBoundParams::fit(&data, r.kind, r.alpha, r.n_b, &root.derive(1 + i as u64))?;
                                fits.push((r.kind, r.alpha, r.n_b, p));
                                p
                            }
                        };
                        if r.variant == Variant::W1 {
                            w1(&p, r.n, eps_bar)?
                        } else {
                            w2(&p, r.n, eps_bar)?
                        }
                    }
                    _ => r.compute(&data, eps_bar, &root.derive(1 + i as u64))?,
                };
                bounds.push(b);
            }
            Ok(QueueReplication { seed, bounds })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn fb(a: f64, sf: f64, sb: f64) -> QueueBoundParams {
        QueueBoundParams::Fb {
            m_f1: a,
            m_b2: 0.0,
            sigma_f1: sf,
            sigma_b2: sb,
        }
    }

    fn cs(a: f64, g1: f64) -> QueueBoundParams {
        QueueBoundParams::Cs {
            mu1: a,
            mu2: 0.0,
            var1: 1.0,
            var2: 2.0,
            gamma1: g1,
            gamma2: 0.25,
        }
    }

    /// max(0, max_j Σ_{l=j}^{n−1} x_l − Σ_{l=j+1}^{n} t_l), 1-based.
    fn double_max(x: &[f64], t: &[f64], n: usize) -> f64 {
        let mut best: f64 = 0.0;
        for j in 1..=n {
            let s: f64 = (j..n).map(|l| x[l - 1]).sum::<f64>() - (j + 1..=n).map(|l| t[l - 1]).sum::<f64>();
            best = best.max(s);
        }
        best
    }

    #[test]
    fn lindley_hand_cases() {
        assert!(simulate_lindley(&[0.0; 5], &[1.0; 5]).unwrap().iter().all(|&w| w == 0.0));
        let w = simulate_lindley(&[2.0; 6], &[1.0; 6]).unwrap();
        for (j, wj) in w.iter().enumerate() {
            assert_eq!(*wj, j as f64);
        }
        assert!(simulate_lindley(&[1.0], &[]).unwrap_err().is_validation());
    }

    #[test]
    fn lindley_matches_double_max() {
        // Multiples of 1/64 keep every partial sum exact, so both orders of
        // summation agree bit for bit.
        let model = QueueModel::default();
        let d = model.sample(40, &RandomSource::new(8));
        let grid = |xs: &[f64]| xs.iter().map(|x| (x * 64.0).round() / 64.0).collect::<Vec<f64>>();
        let (x, t) = (grid(&d.service), grid(&d.interarrival));
        let w = simulate_lindley(&x, &t).unwrap();
        for n in 1..=40 {
            assert_eq!(w[n - 1], double_max(&x, &t, n), "n = {n}");
        }
        assert!(w.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn capped_means() {
        let m = QueueModel::default();
        assert_abs_diff_eq!(m.service.mean(), 3.029, epsilon = 1e-3);
        assert_abs_diff_eq!(m.interarrival.mean(), 3.372, epsilon = 1e-3);
        let d = m.sample(200_000, &RandomSource::new(1));
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        assert_abs_diff_eq!(mean(&d.service), m.service.mean(), epsilon = 0.05);
        assert_abs_diff_eq!(mean(&d.interarrival), m.interarrival.mean(), epsilon = 0.05);
        assert!(d.service.iter().all(|&x| (0.0..=15.25).contains(&x)));
        assert!(d.interarrival.iter().all(|&x| (1.0..=15.0).contains(&x)));
    }

    #[test]
    fn busy_period_sizes() {
        // W = 0, 1, 0, 0, 2, 0: periods start at 0, 2, 3, 5.
        let x = [2.0, 0.5, 0.0, 3.0, 0.0, 0.0];
        let t = [9.0, 1.0, 1.5, 1.0, 1.0, 5.0];
        assert_eq!(simulate_lindley(&x, &t).unwrap(), vec![0.0, 1.0, 0.0, 0.0, 2.0, 0.0]);
        assert_eq!(busy_periods(&x, &t).unwrap(), vec![2, 1, 2]);
    }

    #[test]
    fn w1_branches() {
        // Unstable drift: linear growth at s = n.
        let p = fb(0.5, 1.0, 1.0);
        let c = (2.0 * (10.0f64 / 0.5).ln() * 2.0).sqrt();
        assert_abs_diff_eq!(w1(&p, 10, 0.5).unwrap(), 0.5 * 10.0 + c * 10f64.sqrt(), epsilon = 1e-12);
        // Stable drift −1 and n large: interior maximum of −s + c√s.
        let p = fb(-1.0, 1.0, 1.0);
        let n = 1000;
        let l = (n as f64 / 0.5).ln();
        assert!((n as f64) >= l * 2.0 / 2.0);
        assert_abs_diff_eq!(w1(&p, n, 0.5).unwrap(), l * 2.0 / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn w2_single_term_inverts() {
        for p in [fb(-0.3, 1.2, 0.7), fb(0.4, 0.5, 0.5)] {
            let QueueBoundParams::Fb { sigma_f1, sigma_b2, .. } = p else { unreachable!() };
            let v = sigma_f1 * sigma_f1 + sigma_b2 * sigma_b2;
            let want = (p.drift() + (2.0 * v * (1.0 / 0.2f64).ln()).sqrt()).max(0.0);
            assert_abs_diff_eq!(w2(&p, 2, 0.2).unwrap(), want, epsilon = 1e-8);
        }
        let p = cs(-0.2, 0.3);
        let want = -0.2 + 0.3 + (4.0f64 * 3.5).sqrt();
        let alt = p.level(1.0, 0.2);
        assert_abs_diff_eq!(w2(&p, 2, 0.2).unwrap(), alt, epsilon = 1e-8);
        assert_abs_diff_eq!(alt, want, epsilon = 1e-12);
    }

    #[test]
    fn term_inverts_level() {
        for p in [fb(-0.3, 1.2, 0.7), cs(-0.2, 0.3)] {
            for s in [1.0, 3.0, 9.0] {
                for e in [0.01, 0.2, 0.6] {
                    assert_abs_diff_eq!(p.term(s, p.level(s, e)), e, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn kingman_scaling() {
        let flat = QueueData::new(vec![1.0; 10], vec![2.0; 10], 5.0, 5.0).unwrap();
        assert_eq!(kingman_sample(&flat, 0.5).unwrap(), 0.0);
        let d = QueueModel::default().sample(5000, &RandomSource::new(3));
        let a = kingman_sample(&d, 0.2).unwrap();
        let b = kingman_sample(&d, 0.4).unwrap();
        assert_abs_diff_eq!(a, 2.0 * b, epsilon = 1e-12 * a);
        let unstable = QueueData::new(vec![2.0; 3], vec![1.0; 3], 5.0, 5.0).unwrap();
        assert!(kingman_sample(&unstable, 0.5).is_err());
    }

    #[test]
    fn w3_falls_back_without_busy_periods() {
        // Service always outlasts the gap: the queue never empties again.
        let d = QueueData::new(vec![3.0; 40], vec![1.0; 40], 5.0, 5.0).unwrap();
        let r = w3(&d, 10, 0.5, 0.1, BoundKind::Fb, 200, &RandomSource::new(1)).unwrap();
        assert!(r.fallback);
        assert_eq!(r.k, None);
    }

    #[test]
    fn envelope_is_monotone_and_consistent() {
        let d = QueueModel::default().sample(2000, &RandomSource::new(4));
        let req = BoundRequest {
            kind: BoundKind::Fb,
            variant: Variant::W2,
            n: 10,
            alpha: 0.2,
            n_b: 200,
        };
        let grid: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
        let env = cdf_envelope(&d, &req, &grid, &RandomSource::new(5)).unwrap();
        for w in env.windows(2) {
            assert!(w[1].1 <= w[0].1);
        }
        let mid = env.iter().find(|(e, _)| *e == 0.5).unwrap().1;
        assert_abs_diff_eq!(mid, req.compute(&d, 0.5, &RandomSource::new(5)).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn variant_names() {
        assert_eq!(parse_variant("fb2").unwrap(), (BoundKind::Fb, Variant::W2));
        assert_eq!(parse_variant("CS3").unwrap(), (BoundKind::Cs, Variant::W3));
        assert_eq!(parse_variant("kingman").unwrap().1, Variant::Kingman);
        assert!(parse_variant("fb4").is_err());
        assert!(parse_variant("xx1").is_err());
    }

    fn any_params() -> impl Strategy<Value = QueueBoundParams> {
        prop_oneof![
            (-2.0..1.0f64, 0.0..3.0f64, 0.0..3.0f64).prop_map(|(a, f, b)| fb(a, f, b)),
            (-2.0..1.0f64, 0.0..1.0f64).prop_map(|(a, g)| cs(a, g)),
        ]
    }

    proptest! {
        #[test]
        fn w2_never_exceeds_w1(p in any_params(), n in 2usize..60, e in 0.01..0.99f64) {
            let a = w1(&p, n, e).unwrap();
            let b = w2(&p, n, e).unwrap();
            prop_assert!(b >= 0.0);
            prop_assert!(b <= a + 1e-9 * (1.0 + a));
        }

        #[test]
        fn bounds_grow_with_n(p in any_params(), e in 0.05..0.95f64) {
            let mut prev = (0.0, 0.0);
            for n in [2usize, 5, 10, 50] {
                let cur = (w1(&p, n, e).unwrap(), w2(&p, n, e).unwrap());
                prop_assert!(cur.0 >= prev.0 - 1e-9 && cur.1 >= prev.1 - 1e-9);
                prev = cur;
            }
        }
    }
}
