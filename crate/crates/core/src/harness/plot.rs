use std::fmt::Write as _;
use std::path::Path;

use crate::harness::{CurveTable, HarnessError, Method};
use crate::numfmt::write_atomic;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

/// Mean curve and ±1 standard deviation of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub method: Method,
    pub steps: Vec<u64>,
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl PlotSeries {
    pub fn from_table(table: &CurveTable) -> Vec<PlotSeries> {
        let agg = table.aggregate();
        table
            .methods()
            .into_iter()
            .map(|m| {
                let rows: Vec<_> = agg.iter().filter(|a| a.method == m).collect();
                PlotSeries {
                    method: m,
                    steps: rows.iter().map(|a| a.step).collect(),
                    mean: rows.iter().map(|a| a.mean).collect(),
                    stddev: rows.iter().map(|a| a.stddev).collect(),
                }
            })
            .collect()
    }

    /// Recovers the series embedded in a rendered plot.
    pub fn parse_svg(svg: &str) -> Result<Vec<PlotSeries>, HarnessError> {
        let mut out = Vec::new();
        for chunk in svg.split("<polyline").skip(1) {
            let tag = &chunk[..chunk.find("/>").ok_or_else(|| HarnessError::Parse("unterminated polyline".into()))?];
            let method: Method = attr(tag, "data-method")?.parse()?;
            let nums = |name: &str| -> Result<Vec<f64>, HarnessError> {
                attr(tag, name)?
                    .split_whitespace()
                    .map(|x| x.parse().map_err(|_| HarnessError::Parse(format!("bad number `{x}`"))))
                    .collect()
            };
            let steps = nums("data-steps")?.into_iter().map(|x| x as u64).collect();
            out.push(PlotSeries { method, steps, mean: nums("data-mean")?, stddev: nums("data-stddev")? });
        }
        Ok(out)
    }
}

fn attr<'a>(tag: &'a str, name: &str) -> Result<&'a str, HarnessError> {
    let key = format!("{name}=\"");
    let start = tag.find(&key).ok_or_else(|| HarnessError::Parse(format!("missing attribute {name}")))? + key.len();
    let end = tag[start..].find('"').ok_or_else(|| HarnessError::Parse(format!("unterminated {name}")))?;
    Ok(&tag[start..start + end])
}

fn color(m: Method) -> &'static str {
    match m {
        Method::Shaping => "#d62728",
        Method::Shielding => "#1f77b4",
        Method::Baseline => "#2ca02c",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Renders mean lines with ±1 stddev bands as a standalone SVG document.
pub fn render_svg(table: &CurveTable) -> Result<String, HarnessError> {
    if table.is_empty() {
        return Err(HarnessError::EmptyTable);
    }
    let series = PlotSeries::from_table(table);
    let x_max = table.last_step().unwrap_or(1).max(1) as f64;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for s in &series {
        for (m, d) in s.mean.iter().zip(&s.stddev) {
            y_lo = y_lo.min(m - d);
            y_hi = y_hi.max(m + d);
        }
    }
    if y_hi - y_lo < 1e-12 {
        y_lo -= 0.5;
        y_hi += 0.5;
    } else {
        let pad = 0.05 * (y_hi - y_lo);
        y_lo -= pad;
        y_hi += pad;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |step: f64| LEFT + step / x_max * plot_w;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    if let Some(m) = &table.manifest {
        let _ = writeln!(svg, "<metadata>config: {}\nhash: {}</metadata>", escape(&m.config), escape(&m.hash));
    }
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, y0, x1, y1) = (LEFT, TOP + plot_h, LEFT + plot_w, TOP);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let xv = f * x_max;
        let yv = y_lo + f * (y_hi - y_lo);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(xv),
            y0 + 18.0,
            xv.round()
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.3}</text>"#,
            x0 - 6.0,
            py(yv) + 4.0,
            yv
        );
    }
    let _ = writeln!(
        svg,
        r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">Number of Steps</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text class="y-label" x="0" y="0" text-anchor="middle" transform="translate(20 {:.2}) rotate(-90)">Average Reward</text>"#,
        TOP + plot_h / 2.0
    );
    for s in &series {
        let upper: Vec<String> = s
            .steps
            .iter()
            .zip(s.mean.iter().zip(&s.stddev))
            .map(|(&t, (m, d))| format!("{:.2},{:.2}", px(t as f64), py(m + d)))
            .collect();
        let lower: Vec<String> = s
            .steps
            .iter()
            .zip(s.mean.iter().zip(&s.stddev))
            .rev()
            .map(|(&t, (m, d))| format!("{:.2},{:.2}", px(t as f64), py(m - d)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polygon class="band" data-method="{}" points="{} {}" fill="{}" fill-opacity="0.2" stroke="none"/>"#,
            s.method,
            upper.join(" "),
            lower.join(" "),
            color(s.method)
        );
        let line: Vec<String> =
            s.steps.iter().zip(&s.mean).map(|(&t, m)| format!("{:.2},{:.2}", px(t as f64), py(*m))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="mean" data-method="{}" data-steps="{}" data-mean="{}" data-stddev="{}" points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            s.method,
            join(&s.steps),
            join(&s.mean),
            join(&s.stddev),
            line.join(" "),
            color(s.method)
        );
    }
    let _ = writeln!(svg, r#"<g class="legend">"#);
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = LEFT + plot_w + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="3"/>"#,
            x + 25.0,
            color(s.method)
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, x + 32.0, y + 4.0, s.method.legend());
    }
    svg.push_str("</g>\n</svg>\n");
    Ok(svg)
}

pub fn emit_plot(table: &CurveTable, out: &Path) -> Result<(), HarnessError> {
    let svg = render_svg(table)?;
    Ok(write_atomic(out, svg.as_bytes())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::CurveRow;

    #[test]
    fn flat_single_method() {
        let rows = (0..3)
            .flat_map(|seed| (1..=4).map(move |i| CurveRow { method: Method::Baseline, seed, step: i * 10, value: 0.5 }))
            .collect();
        let svg = render_svg(&CurveTable::new(rows)).unwrap();
        let series = PlotSeries::parse_svg(&svg).unwrap();
        assert_eq!(series.len(), 1);
        assert!(series[0].stddev.iter().all(|&d| d == 0.0));
        assert!(series[0].mean.iter().all(|&m| m == 0.5));
        assert!(svg.contains("Number of Steps") && svg.contains("Average Reward"));
    }

    #[test]
    fn empty_table_is_an_error() {
        assert!(matches!(render_svg(&CurveTable::default()), Err(HarnessError::EmptyTable)));
    }
}
