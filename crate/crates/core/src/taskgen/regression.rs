use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::suite::SuiteItem;
use super::text::PromptBuilder;
use super::{tags, Result, TaskgenError};
use crate::rng::SplitMix64;

const PREFIX: &str = "Here are a set of point coordinates that all fall on the same line: ";
const MIN_EXAMPLES: usize = 2;
const MAX_EXAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub slope: f64,
    pub intercept: f64,
    pub id: String,
}

impl LineSpec {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeKind {
    InRange,
    OutOfRange,
}

impl RangeKind {
    pub fn name(self) -> &'static str {
        match self {
            RangeKind::InRange => "in_range",
            RangeKind::OutOfRange => "out_of_range",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionPrompt {
    #[serde(flatten)]
    pub item: SuiteItem,
    pub line: LineSpec,
    pub example_points: Vec<(f64, f64)>,
    pub x_t: f64,
    pub y_t: f64,
    pub range_kind: RangeKind,
}

impl RegressionPrompt {
    pub fn rendered(&self) -> &str {
        &self.item.prompt
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn render(
    points: &[(f64, f64)],
    x_t: f64,
) -> (
    String,
    std::collections::BTreeMap<String, Vec<crate::tensorstore::Span>>,
) {
    let mut b = PromptBuilder::new();
    b.push(PREFIX);
    let start = b.pos();
    for (i, (x, y)) in points.iter().enumerate() {
        if i > 0 {
            b.push("; ");
        }
        b.push_seg("point", &format!("({x:.2},{y:.2})"));
    }
    b.close("examples", start);
    b.push("; ");
    b.push_seg("query", &format!("({x_t:.2},"));
    b.close("prompt", 0);
    b.finish()
}

fn build(
    id: String,
    line: &LineSpec,
    points: Vec<(f64, f64)>,
    x_t: f64,
    range_kind: RangeKind,
) -> RegressionPrompt {
    let (text, segments) = render(&points, x_t);
    let item = SuiteItem::new(id, text, segments)
        .label("slope", line.slope)
        .label("intercept", line.intercept)
        .label("line_id", &line.id)
        .label("range_kind", range_kind.name())
        .label("n_examples", points.len())
        .label("icl_count", points.len() - MIN_EXAMPLES);
    RegressionPrompt {
        item,
        y_t: round2(line.eval(x_t)),
        line: line.clone(),
        example_points: points,
        x_t,
        range_kind,
    }
}

/// The fixture lines: integer slopes 6, 8, 10, ... paired with intercepts 0 and 5.
pub fn fixture_line(index: usize) -> LineSpec {
    LineSpec {
        slope: (6 + 2 * (index / 2)) as f64,
        intercept: if index.is_multiple_of(2) { 0.0 } else { 5.0 },
        id: format!("line{index:02}"),
    }
}

/// Generates `n_lines * prompts_per_line` regression prompts.
///
/// Prompt `k` (global index) shows `2 + k mod 7` example points and queries
/// inside the example range when `k` is even, beyond it otherwise. All
/// coordinates are drawn on a 0.01 grid so the printed values are exact.
pub fn gen_regression_suite(
    n_lines: usize,
    prompts_per_line: usize,
    seed: u64,
) -> Result<Vec<RegressionPrompt>> {
    if n_lines == 0 || prompts_per_line == 0 {
        return Err(TaskgenError::InvalidArgument(
            "n_lines and prompts_per_line must be at least 1".into(),
        ));
    }
    let mut out = Vec::with_capacity(n_lines * prompts_per_line);
    for l in 0..n_lines {
        let line = fixture_line(l);
        for j in 0..prompts_per_line {
            let k = l * prompts_per_line + j;
            let mut rng = SplitMix64::keyed(seed, &[tags::REGRESSION, k as u64]);
            let count = MIN_EXAMPLES + k % (MAX_EXAMPLES - MIN_EXAMPLES + 1);
            // Hundredths on [0, 1).
            let mut xs: Vec<u64> = Vec::with_capacity(count);
            while xs.len() < count {
                let x = rng.below(100) as u64;
                if !xs.contains(&x) {
                    xs.push(x);
                }
            }
            let lo = *xs.iter().min().unwrap();
            let hi = *xs.iter().max().unwrap();
            let (range_kind, x_t) = if k.is_multiple_of(2) {
                (
                    RangeKind::InRange,
                    lo + rng.below((hi - lo + 1) as usize) as u64,
                )
            } else {
                (RangeKind::OutOfRange, 200 + rng.below(101) as u64)
            };
            let points = xs
                .iter()
                .map(|&x| {
                    let x = x as f64 / 100.0;
                    (x, round2(line.eval(x)))
                })
                .collect();
            out.push(build(
                format!("reg-{k:04}"),
                &line,
                points,
                x_t as f64 / 100.0,
                range_kind,
            ));
        }
    }
    Ok(out)
}

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)").expect("number regex"));

/// First decimal number in `text`.
pub fn parse_numeric_response(text: &str) -> Result<f64> {
    let m = NUMBER.find(text).ok_or(TaskgenError::NoNumberFound)?;
    m.as_str()
        .parse::<f64>()
        .map_err(|_| TaskgenError::NoNumberFound)
}

/// Absolute error of a prediction.
pub fn score_regression(y_t: f64, y_hat: f64) -> f64 {
    (y_t - y_hat).abs()
}

/// Ordinary least-squares line through `points`, as `(slope, intercept)`.
pub fn fit_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn factorial(n: usize) -> usize {
    (1..=n).fold(1usize, |acc, k| acc.saturating_mul(k))
}

fn all_orderings(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::with_capacity(factorial(n));
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Up to `max_perms` distinct orderings of the example points.
///
/// When every ordering fits, all are returned in lexicographic order;
/// otherwise distinct orderings are sampled without replacement.
pub fn permute_icl_examples(
    prompt: &RegressionPrompt,
    max_perms: usize,
    seed: u64,
) -> Result<Vec<RegressionPrompt>> {
    if max_perms == 0 {
        return Err(TaskgenError::InvalidArgument(
            "max_perms must be at least 1".into(),
        ));
    }
    let n = prompt.example_points.len();
    let orders = if factorial(n) <= max_perms {
        all_orderings(n)
    } else {
        let mut rng = SplitMix64::keyed(seed, &[tags::PERMUTE]);
        let mut picked: Vec<Vec<usize>> = Vec::with_capacity(max_perms);
        while picked.len() < max_perms {
            let p = rng.permutation(n);
            if !picked.contains(&p) {
                picked.push(p);
            }
        }
        picked
    };
    Ok(orders
        .into_iter()
        .enumerate()
        .map(|(i, order)| {
            let points = order.iter().map(|&j| prompt.example_points[j]).collect();
            let mut p = build(
                format!("{}-p{i}", prompt.item.id),
                &prompt.line,
                points,
                prompt.x_t,
                prompt.range_kind,
            );
            p.y_t = prompt.y_t;
            p.item.labels.insert("permutation".into(), i.to_string());
            p.item
                .labels
                .insert("source_id".into(), prompt.item.id.clone());
            p
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_shape() {
        let suite = gen_regression_suite(16, 16, 7).unwrap();
        assert_eq!(suite.len(), 256);
        let inside = suite
            .iter()
            .filter(|p| p.range_kind == RangeKind::InRange)
            .count();
        assert_eq!(inside, 128);
        for p in &suite {
            let n = p.example_points.len();
            assert!((2..=8).contains(&n));
            let lo = p
                .example_points
                .iter()
                .map(|q| q.0)
                .fold(f64::INFINITY, f64::min);
            let hi = p
                .example_points
                .iter()
                .map(|q| q.0)
                .fold(f64::NEG_INFINITY, f64::max);
            match p.range_kind {
                RangeKind::InRange => assert!(lo <= p.x_t && p.x_t <= hi),
                RangeKind::OutOfRange => assert!(p.x_t > hi),
            }
            assert!(p.rendered().starts_with(PREFIX));
            assert!(p.rendered().ends_with(&format!("; ({:.2},", p.x_t)));
        }
    }

    #[test]
    fn parse_first_number() {
        assert_eq!(parse_numeric_response("14.80); (0.9").unwrap(), 14.80);
        assert_eq!(parse_numeric_response("-3").unwrap(), -3.0);
        assert!(matches!(
            parse_numeric_response("no idea"),
            Err(TaskgenError::NoNumberFound)
        ));
    }

    #[test]
    fn score_is_absolute_error() {
        assert_eq!(score_regression(22.2, 22.2), 0.0);
        assert!((score_regression(14.8, 15.0) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn two_points_give_two_orderings() {
        let suite = gen_regression_suite(1, 1, 3).unwrap();
        assert_eq!(suite[0].example_points.len(), 2);
        let v = permute_icl_examples(&suite[0], 5, 0).unwrap();
        assert_eq!(v.len(), 2);
        assert_ne!(v[0].example_points, v[1].example_points);
    }
}
