//! Static log–log SVG charts of error against `n`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::summary::{Quartiles, SummaryRow};

const WIDTH: f64 = 560.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;

/// `(file name, label, accessor)` for one plotted norm.
pub type PlotSpec = (&'static str, &'static str, fn(&SummaryRow) -> Quartiles);

pub const PLOTS: [PlotSpec; 3] = [
    ("err_l1_vs_n.svg", "‖θ̂ − θ₀‖₁", |r| r.err_l1),
    ("err_l2_vs_n.svg", "‖θ̂ − θ₀‖₂", |r| r.err_l2),
    ("err_linf_vs_n.svg", "‖θ̂ − θ₀‖∞", |r| r.err_linf),
];

pub fn write_plots(rows: &[SummaryRow], dir: &Path) -> Result<()> {
    for (file, label, get) in PLOTS {
        let points: Vec<(f64, Quartiles)> = rows.iter().map(|r| (r.n as f64, get(r))).collect();
        fs::write(dir.join(file), render(label, &points))?;
    }
    Ok(())
}

/// Median as a solid line with markers, quartiles dashed. Points with a
/// non-positive or NaN value are left out, since the axes are logarithmic.
pub fn render(label: &str, points: &[(f64, Quartiles)]) -> String {
    // (class, extra attributes, points)
    type Series<'a> = (&'a str, &'a str, Vec<(f64, f64)>);
    let series: [Series; 3] = [
        ("median", "", collect(points, |q| q.median)),
        ("q25", "stroke-dasharray=\"4 3\"", collect(points, |q| q.q25)),
        ("q75", "stroke-dasharray=\"4 3\"", collect(points, |q| q.q75)),
    ];
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.2.iter().copied()).collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">median {label} vs n (log–log)</text>",
        WIDTH / 2.0
    );
    if all.is_empty() {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">no positive values</text>",
            WIDTH / 2.0,
            HEIGHT / 2.0
        );
        svg.push_str("</svg>\n");
        return svg;
    }
    let range = |vals: Vec<f64>| {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min).log10();
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max).log10();
        let pad = if hi - lo < 1e-9 { 0.5 } else { 0.05 * (hi - lo) };
        (lo - pad, hi + pad)
    };
    let (x0, x1) = range(all.iter().map(|p| p.0).collect());
    let (y0, y1) = range(all.iter().map(|p| p.1).collect());
    let sx = |x: f64| MARGIN + (x.log10() - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y.log10() - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let _ = writeln!(
        svg,
        "<path d=\"M{m} {t} V{b} H{r}\" fill=\"none\" stroke=\"black\"/>",
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for &(x, _) in points {
        if x > 0.0 {
            let _ = writeln!(
                svg,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{x}</text>",
                sx(x),
                HEIGHT - MARGIN + 18.0
            );
        }
    }
    for k in (y0.ceil() as i32)..=(y1.floor() as i32) {
        let y = 10f64.powi(k);
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">1e{k}</text>",
            MARGIN - 6.0,
            sy(y) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">n</text>",
        WIDTH / 2.0,
        HEIGHT - 16.0
    );
    for (name, style, pts) in &series {
        if pts.is_empty() {
            continue;
        }
        let d: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| format!("{}{:.2} {:.2}", if i == 0 { "M" } else { "L" }, sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            "<path class=\"{name}\" d=\"{}\" fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"{}\" {style}/>",
            d.join(" "),
            if *name == "median" { 2 } else { 1 }
        );
        if *name == "median" {
            for &(x, y) in pts {
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f4e9c\"/>",
                    sx(x),
                    sy(y)
                );
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn collect(points: &[(f64, Quartiles)], get: fn(&Quartiles) -> f64) -> Vec<(f64, f64)> {
    points
        .iter()
        .map(|(x, q)| (*x, get(q)))
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .collect()
}
