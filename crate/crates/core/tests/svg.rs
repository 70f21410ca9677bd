use iclscope::report::svg::{heatmap, histogram, histogram_counts, line_chart, Series};
use ndarray::Array2;
use proptest::prelude::*;
use regex::Regex;

fn attr(svg: &str, name: &str) -> Vec<String> {
    let re = Regex::new(&format!(r#"\b{name}="([^"]*)""#)).unwrap();
    re.captures_iter(svg).map(|c| c[1].to_string()).collect()
}

fn numbers(svg: &str, name: &str) -> Vec<f64> {
    attr(svg, name).iter().map(|s| s.parse().unwrap()).collect()
}

#[test]
fn heatmap_cells_carry_exact_values() {
    let order: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let m = Array2::from_shape_fn((3, 3), |(i, j)| {
        if i == j {
            1.0
        } else {
            0.1 * (i + j) as f64 - 0.25
        }
    });
    let svg = heatmap("t", &order, &m);
    assert_eq!(attr(&svg, "data-kind"), ["heatmap"]);
    let rows = numbers(&svg, "data-row");
    let cols = numbers(&svg, "data-col");
    let vals = numbers(&svg, "data-value");
    assert_eq!(vals.len(), 9);
    for ((r, c), v) in rows.iter().zip(&cols).zip(&vals) {
        assert_eq!(*v, m[[*r as usize, *c as usize]]);
    }
    let min = numbers(&svg, "data-min")[0];
    let max = numbers(&svg, "data-max")[0];
    assert_eq!((min, max), (-0.15, 1.0));
}

#[test]
fn line_chart_points_round_trip() {
    let series = vec![
        Series {
            name: "probe".into(),
            points: vec![(0.0, 0.2), (1.0, 0.55), (2.0, 0.9)],
        },
        Series {
            name: "chance".into(),
            points: vec![(0.0, 0.2), (2.0, 0.2)],
        },
    ];
    let svg = line_chart("acc", "layer", "accuracy", &series);
    let re = Regex::new(r#"<circle [^>]*data-series="([^"]*)" data-x="([^"]*)" data-y="([^"]*)""#)
        .unwrap();
    let points: Vec<(String, f64, f64)> = re
        .captures_iter(&svg)
        .map(|c| {
            (
                c[1].to_string(),
                c[2].parse().unwrap(),
                c[3].parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(points.len(), 5);
    let probe: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 == "probe")
        .map(|p| (p.1, p.2))
        .collect();
    assert_eq!(probe, series[0].points);
}

#[test]
fn histogram_counts_match_svg() {
    let groups = vec![
        ("icl".to_string(), vec![0.0, 0.1, 0.5, 0.9, 1.0]),
        ("plain".to_string(), vec![0.2, 0.3]),
    ];
    let svg = histogram("ratios", "ratio", &groups, 4);
    let total: f64 = numbers(&svg, "data-count").iter().sum();
    assert_eq!(total, 7.0);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(128) })]

    #[test]
    fn histogram_counts_every_value_once(values in prop::collection::vec(-10.0f64..10.0, 1..60), bins in 1usize..12) {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let counts = histogram_counts(&values, bins, lo, hi);
        prop_assert_eq!(counts.len(), bins);
        prop_assert_eq!(counts.iter().sum::<usize>(), values.len());
    }
}
