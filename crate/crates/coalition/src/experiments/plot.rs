//! Minimal self-contained SVG line charts for sweep reports. Output is a
//! plain string with no external assets, so charts render anywhere and
//! stay byte-deterministic.

/// One polyline: a name for the legend and `(x, y)` samples in plot order.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Axis scaling for the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YScale {
    Linear,
    /// Base-10 log axis; non-positive samples are dropped.
    Log,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Renders a line chart. Returns `None` when no series has two or more
/// drawable points (e.g. everything was non-positive on a log axis).
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    y_scale: YScale,
) -> Option<String> {
    let drawable: Vec<(usize, Vec<(f64, f64)>)> = series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .copied()
                .filter(|&(x, y)| {
                    x.is_finite() && y.is_finite() && (y_scale == YScale::Linear || y > 0.0)
                })
                .map(|(x, y)| match y_scale {
                    YScale::Linear => (x, y),
                    YScale::Log => (x, y.log10()),
                })
                .collect();
            (i, pts)
        })
        .filter(|(_, pts)| !pts.is_empty())
        .collect();
    if !drawable.iter().any(|(_, pts)| pts.len() >= 2) {
        return None;
    }

    let all = drawable.iter().flat_map(|(_, pts)| pts.iter().copied());
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in all {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let to_px = |x: f64, y: f64| {
        (
            MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w,
            MARGIN_TOP + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h,
        )
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    ));

    // Gridlines and tick labels.
    for tick in ticks(x_min, x_max, 6) {
        let (px, _) = to_px(tick, y_min);
        svg.push_str(&format!(
            "<line x1=\"{px:.1}\" y1=\"{}\" x2=\"{px:.1}\" y2=\"{}\" stroke=\"#ddd\"/>\n",
            MARGIN_TOP,
            MARGIN_TOP + plot_h
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_TOP + plot_h + 18.0,
            format_tick(tick)
        ));
    }
    for tick in ticks(y_min, y_max, 6) {
        let (_, py) = to_px(x_min, tick);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py:.1}\" x2=\"{}\" y2=\"{py:.1}\" stroke=\"#ddd\"/>\n",
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        ));
        let label = match y_scale {
            YScale::Linear => format_tick(tick),
            YScale::Log => format!("1e{}", format_tick(tick)),
        };
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{label}</text>\n",
            MARGIN_LEFT - 8.0,
            py + 4.0
        ));
    }

    // Axes.
    svg.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#333\"/>\n",
        MARGIN_LEFT, MARGIN_TOP
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    ));

    // Series polylines, markers, and legend.
    for (slot, (series_idx, pts)) in drawable.iter().enumerate() {
        let color = PALETTE[series_idx % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                let (px, py) = to_px(x, y);
                format!("{px:.1},{py:.1}")
            })
            .collect();
        if pts.len() >= 2 {
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
                path.join(" ")
            ));
        }
        for &(x, y) in pts {
            let (px, py) = to_px(x, y);
            svg.push_str(&format!(
                "<circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"2.6\" fill=\"{color}\"/>\n"
            ));
        }
        let ly = MARGIN_TOP + 14.0 + 18.0 * slot as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly:.1}\" x2=\"{}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            MARGIN_LEFT + plot_w + 10.0,
            MARGIN_LEFT + plot_w + 34.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\">{}</text>\n",
            MARGIN_LEFT + plot_w + 40.0,
            ly + 4.0,
            escape(&series[*series_idx].name)
        ));
    }

    svg.push_str("</svg>\n");
    Some(svg)
}

/// Round tick positions covering `[lo, hi]` with roughly `want` steps.
fn ticks(lo: f64, hi: f64, want: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw_step = span / want.max(1) as f64;
    let mag = 10f64.powf(raw_step.log10().floor());
    let norm = raw_step / mag;
    let step = mag
        * if norm <= 1.0 {
            1.0
        } else if norm <= 2.0 {
            2.0
        } else if norm <= 5.0 {
            5.0
        } else {
            10.0
        };
    let first = (lo / step).ceil() * step;
    let mut out = Vec::new();
    let mut t = first;
    while t <= hi + 1e-9 * span {
        out.push(t);
        t += step;
    }
    out
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let rounded = (v * 1e6).round() / 1e6;
    if rounded == rounded.trunc() && rounded.abs() < 1e9 {
        format!("{}", rounded as i64)
    } else {
        format!("{rounded}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_series() -> Vec<Series> {
        vec![
            Series {
                name: "a".into(),
                points: vec![(10.0, 1.0), (20.0, 0.5), (30.0, 0.25)],
            },
            Series {
                name: "b".into(),
                points: vec![(10.0, 2.0), (20.0, 1.5), (30.0, 1.2)],
            },
        ]
    }

    #[test]
    fn renders_linear_and_log_charts() {
        for scale in [YScale::Linear, YScale::Log] {
            let svg = line_chart("t", "x", "y", &demo_series(), scale).unwrap();
            assert!(svg.starts_with("<svg"));
            assert!(svg.ends_with("</svg>\n"));
            assert_eq!(svg.matches("<polyline").count(), 2);
            assert!(svg.contains(">a</text>"));
            assert!(svg.contains(">b</text>"));
        }
    }

    #[test]
    fn log_axis_drops_non_positive_points() {
        let series = vec![Series {
            name: "a".into(),
            points: vec![(1.0, 0.0), (2.0, 10.0), (3.0, 100.0)],
        }];
        let svg = line_chart("t", "x", "y", &series, YScale::Log).unwrap();
        // Only the two positive samples survive as markers.
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn chart_without_drawable_lines_is_none() {
        let series = vec![Series {
            name: "a".into(),
            points: vec![(1.0, -1.0), (2.0, 0.0)],
        }];
        assert!(line_chart("t", "x", "y", &series, YScale::Log).is_none());
    }

    #[test]
    fn output_is_deterministic() {
        let a = line_chart("t", "x", "y", &demo_series(), YScale::Log).unwrap();
        let b = line_chart("t", "x", "y", &demo_series(), YScale::Log).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn escapes_markup_in_labels() {
        let svg = line_chart("a<b&c", "x", "y", &demo_series(), YScale::Linear).unwrap();
        assert!(svg.contains("a&lt;b&amp;c"));
        assert!(!svg.contains("a<b"));
    }
}
