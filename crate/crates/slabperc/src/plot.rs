//! Minimal standalone SVG plots for the experiment records: no external
//! renderer, just axes, polylines, points, and an optional fitted line.

use crate::harness::{EstimateRecord, OneArmReport};

const W: f64 = 640.0;
const H: f64 = 480.0;
const ML: f64 = 70.0; // margins
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 55.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn from_points(pts: &[(f64, f64)]) -> Frame {
        let mut f = Frame { x0: f64::MAX, x1: f64::MIN, y0: f64::MAX, y1: f64::MIN };
        for &(x, y) in pts {
            f.x0 = f.x0.min(x);
            f.x1 = f.x1.max(x);
            f.y0 = f.y0.min(y);
            f.y1 = f.y1.max(y);
        }
        if f.x0 == f.x1 {
            f.x0 -= 0.5;
            f.x1 += 0.5;
        }
        if f.y0 == f.y1 {
            f.y0 -= 0.5;
            f.y1 += 0.5;
        }
        let (dx, dy) = (f.x1 - f.x0, f.y1 - f.y0);
        f.x0 -= 0.05 * dx;
        f.x1 += 0.05 * dx;
        f.y0 -= 0.08 * dy;
        f.y1 += 0.08 * dy;
        f
    }

    fn px(&self, x: f64) -> f64 {
        ML + (x - self.x0) / (self.x1 - self.x0) * (W - ML - MR)
    }

    fn py(&self, y: f64) -> f64 {
        H - MB - (y - self.y0) / (self.y1 - self.y0) * (H - MT - MB)
    }
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Generic scatter/line chart over named series, with an optional
/// straight line y = slope*x + intercept drawn across the frame.
pub fn svg_chart(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[(String, Vec<(f64, f64)>)],
    fitted: Option<(f64, f64)>,
) -> String {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, pts)| pts.iter().copied()).collect();
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"13\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    if all.is_empty() {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">no data</text>\n</svg>\n",
            W / 2.0,
            H / 2.0
        ));
        return out;
    }
    let f = Frame::from_points(&all);
    // Axes box and tick labels at the corners of the data frame.
    out.push_str(&format!(
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n",
        W - ML - MR,
        H - MT - MB
    ));
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let xv = f.x0 + frac * (f.x1 - f.x0);
        let yv = f.y0 + frac * (f.y1 - f.y0);
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"#333\">{:.3}</text>\n",
            f.px(xv),
            H - MB + 18.0,
            xv
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" fill=\"#333\">{:.3}</text>\n",
            ML - 6.0,
            f.py(yv) + 4.0,
            yv
        ));
        out.push_str(&format!(
            "<line x1=\"{ML}\" y1=\"{0:.1}\" x2=\"{1}\" y2=\"{0:.1}\" stroke=\"#eee\"/>\n",
            f.py(yv),
            W - MR
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>\n",
        W / 2.0
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{xlabel}</text>\n",
        W / 2.0,
        H - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{ylabel}</text>\n",
        H / 2.0,
        H / 2.0
    ));
    if let Some((slope, intercept)) = fitted {
        let (xa, xb) = (f.x0, f.x1);
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" \
             stroke=\"#999\" stroke-dasharray=\"6 4\"/>\n",
            f.px(xa),
            f.py(slope * xa + intercept),
            f.px(xb),
            f.py(slope * xb + intercept)
        ));
    }
    for (si, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let path: Vec<String> = sorted
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", f.px(x), f.py(y)))
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            path.join(" ")
        ));
        for &(x, y) in &sorted {
            out.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>\n",
                f.px(x),
                f.py(y)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>\n",
            W - MR - 150.0,
            MT + 18.0 + 16.0 * si as f64
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Log-log one-arm decay with the fitted polynomial line.
pub fn one_arm_plot(report: &OneArmReport) -> String {
    let pts: Vec<(f64, f64)> = report
        .records
        .iter()
        .filter(|r| r.successes > 0)
        .map(|r| {
            let n = r.params["n"].as_f64().unwrap();
            let p = r.successes as f64 / r.trials as f64;
            (n.ln(), p.ln())
        })
        .collect();
    // Recover the intercept from the fitted slope and the point means.
    let mx = crate::stats::mean(&pts.iter().map(|p| p.0).collect::<Vec<_>>());
    let my = crate::stats::mean(&pts.iter().map(|p| p.1).collect::<Vec<_>>());
    let slope = -report.delta_hat;
    let fit = (!pts.is_empty()).then_some((slope, my - slope * mx));
    svg_chart(
        &format!("one-arm decay (delta = {:.3})", report.delta_hat),
        "log n",
        "log P",
        &[("one-arm".to_string(), pts)],
        fit,
    )
}

/// Crossing probability against n, one series per aspect ratio.
pub fn box_crossing_plot(records: &[EstimateRecord]) -> String {
    let mut by_rho: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in records {
        let rho = r.params["rho"].as_f64().unwrap_or(1.0);
        let n = r.params["n"].as_f64().unwrap_or(0.0);
        let name = format!("rho = {rho}");
        match by_rho.iter_mut().find(|(s, _)| *s == name) {
            Some((_, pts)) => pts.push((n, r.estimate)),
            None => by_rho.push((name, vec![(n, r.estimate)])),
        }
    }
    svg_chart("box crossing at criticality", "n", "f(n, rho n)", &by_rho, None)
}

/// Intersection probability of the two stopped invasions against N.
pub fn single_tree_plot(records: &[EstimateRecord]) -> String {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.params["n"].as_f64().unwrap_or(0.0), r.estimate))
        .collect();
    svg_chart(
        "stopped-invasion intersection",
        "N",
        "P[intersect]",
        &[("invasions from 0 and x".to_string(), pts)],
        None,
    )
}
