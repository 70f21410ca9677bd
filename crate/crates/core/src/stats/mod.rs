//! Statistical tests used by the analyses: correlations, Welch t-test,
//! Mantel permutation test, Fisher z comparison of correlations, one-way
//! ANOVA and the two-sample Kolmogorov-Smirnov test.
//!
//! Everything here is self-contained; the CDF kernels live in [`dist`].

pub mod dist;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("constant input has no correlation")]
    ConstantInput,
    #[error("both samples have zero variance")]
    ZeroVariance,
    #[error("hypothesis matrix is constant off the diagonal")]
    DegenerateHypothesis,
    #[error("correlation magnitude must be below 1, got {0}")]
    DegenerateCorrelation(f64),
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("matrices must be square and of equal order")]
    ShapeMismatch,
    #[error("input contains a non-finite value")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// Correlation flavour used by alignment and Mantel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMethod {
    #[default]
    Pearson,
    Spearman,
}

impl CorrelationMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pearson => "pearson",
            Self::Spearman => "spearman",
        }
    }
}

impl std::str::FromStr for CorrelationMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pearson" => Ok(Self::Pearson),
            "spearman" => Ok(Self::Spearman),
            other => Err(format!("unknown correlation method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: String,
    pub statistic: f64,
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n - 1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewSamples {
            needed: 3,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Result<f64> {
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson_unchecked(x, y)
}

/// 1-based ranks, ties share their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Rank correlation: Pearson over average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson_unchecked(&ranks(x), &ranks(y))
}

pub fn correlation(x: &[f64], y: &[f64], method: CorrelationMethod) -> Result<f64> {
    match method {
        CorrelationMethod::Pearson => pearson(x, y),
        CorrelationMethod::Spearman => spearman(x, y),
    }
}

/// Two-sample t-test with unequal variances and Welch-Satterthwaite df.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFewSamples {
                needed: 2,
                got: s.len(),
            });
        }
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = sample_variance(a) / na;
    let vb = sample_variance(b) / nb;
    let se2 = va + vb;
    if se2 == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(TestResult {
        method: "welch_t".into(),
        statistic: t,
        p_value: dist::t_two_sided(t, df),
        df: Some(df),
        n: Some(a.len() + b.len()),
    })
}

/// Strictly-upper-triangle entries in row-major order.
pub fn upper_triangle(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(m[[i, j]]);
        }
    }
    out
}

fn permuted_upper(m: &Array2<f64>, perm: &[usize], out: &mut Vec<f64>) {
    out.clear();
    let n = m.nrows();
    for i in 0..n {
        let pi = perm[i];
        for &pj in perm.iter().skip(i + 1) {
            out.push(m[[pi, pj]]);
        }
    }
}

/// Mantel test between a similarity matrix `m` and hypothesis `h`.
///
/// The observed statistic is the correlation of the strictly-upper
/// triangles. The null permutes `h` jointly over rows and columns; permutation
/// `k` draws from the stream `(seed, k)`, so the result does not depend on
/// scheduling. One-sided p = (1 + #{r_perm ≥ r_obs}) / (n_perm + 1).
pub fn mantel(
    m: &Array2<f64>,
    h: &Array2<f64>,
    n_perm: usize,
    method: CorrelationMethod,
    seed: u64,
) -> Result<TestResult> {
    let n = m.nrows();
    if m.ncols() != n || h.nrows() != n || h.ncols() != n {
        return Err(StatsError::ShapeMismatch);
    }
    if n < 4 {
        return Err(StatsError::TooFewSamples { needed: 4, got: n });
    }
    let hu = upper_triangle(h);
    if hu.iter().all(|v| *v == hu[0]) {
        return Err(StatsError::DegenerateHypothesis);
    }
    let mu = upper_triangle(m);
    let observed = correlation(&mu, &hu, method)?;

    // Spearman: rank once, permutation only reorders the ranks.
    let (m_vals, h_mat) = match method {
        CorrelationMethod::Pearson => (mu, h.clone()),
        CorrelationMethod::Spearman => {
            let hr = ranks(&hu);
            let mut ranked = Array2::<f64>::zeros((n, n));
            let mut k = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    ranked[[i, j]] = hr[k];
                    ranked[[j, i]] = hr[k];
                    k += 1;
                }
            }
            (ranks(&mu), ranked)
        }
    };

    let tol = 1e-12 * observed.abs().max(1.0);
    let exceed: usize = (0..n_perm)
        .into_par_iter()
        .map_init(Vec::new, |buf, k| {
            let perm = SplitMix64::new(seed, k as u64).permutation(n);
            permuted_upper(&h_mat, &perm, buf);
            match pearson_unchecked(&m_vals, buf) {
                Ok(r) if r >= observed - tol => 1,
                _ => 0,
            }
        })
        .sum();

    Ok(TestResult {
        method: format!("mantel_{}", method.name()),
        statistic: observed,
        p_value: (1 + exceed) as f64 / (n_perm + 1) as f64,
        df: None,
        n: Some(n_perm),
    })
}

/// Compares two independent correlations through Fisher's z transform.
pub fn fisher_z_compare(r1: f64, n1: usize, r2: f64, n2: usize) -> Result<TestResult> {
    for r in [r1, r2] {
        if !r.is_finite() || r.abs() >= 1.0 {
            return Err(StatsError::DegenerateCorrelation(r));
        }
    }
    for n in [n1, n2] {
        if n <= 3 {
            return Err(StatsError::TooFewSamples { needed: 4, got: n });
        }
    }
    let se = (1.0 / (n1 as f64 - 3.0) + 1.0 / (n2 as f64 - 3.0)).sqrt();
    let z = (r1.atanh() - r2.atanh()) / se;
    Ok(TestResult {
        method: "fisher_z".into(),
        statistic: z,
        p_value: dist::normal_two_sided(z),
        df: None,
        n: Some(n1 + n2),
    })
}

/// One-way ANOVA F test.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    for g in groups {
        if g.len() < 2 {
            return Err(StatsError::TooFewSamples {
                needed: 2,
                got: g.len(),
            });
        }
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / total as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    let df1 = (groups.len() - 1) as f64;
    let df2 = (total - groups.len()) as f64;
    let (f, p) = if ss_within == 0.0 {
        if ss_between == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = (ss_between / df1) / (ss_within / df2);
        (f, dist::f_sf(f, df1, df2))
    };
    Ok(TestResult {
        method: "anova_oneway".into(),
        statistic: f,
        p_value: p,
        df: Some(df1),
        n: Some(total),
    })
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// `Q_KS(sqrt(n·m/(n+m)) · D)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    for s in [a, b] {
        if s.is_empty() {
            return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
        }
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let v = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= v {
            i += 1;
        }
        while j < xb.len() && xb[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    Ok(TestResult {
        method: "ks_two_sample".into(),
        statistic: d,
        p_value: dist::kolmogorov_sf(en * d),
        df: None,
        n: Some(a.len() + b.len()),
    })
}
