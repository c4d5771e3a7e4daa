//! Report emission: CSV tables and SVG charts.
//!
//! Everything here is a pure function of its input, formatted with fixed
//! precision, so the output bytes are reproducible.

use std::fmt::Write as _;

use crate::bench::BenchReport;
use crate::engine::PredictionRecord;

pub const MODELS_CSV_HEADER: &str = "model,mean_j3d_m,stddev_j3d_m,repeats";
pub const TRAJECTORIES_CSV_HEADER: &str = "model,uav_id,mean_j3d_m";

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

pub fn models_csv(report: &BenchReport) -> String {
    let mut out = format!("{MODELS_CSV_HEADER}\n");
    for m in &report.models {
        writeln!(out, "{},{:?},{:?},{}", m.model, m.mean_j3d_m, m.stddev_j3d_m, m.repeats).unwrap();
    }
    out
}

pub fn trajectories_csv(report: &BenchReport) -> String {
    let mut out = format!("{TRAJECTORIES_CSV_HEADER}\n");
    for t in &report.trajectories {
        writeln!(out, "{},{},{:?}", t.model, t.uav_id, t.mean_j3d_m).unwrap();
    }
    out
}

/// Prediction records as CSV, one row per record. Error columns are empty
/// for records without realized points.
pub fn records_csv(records: &[PredictionRecord]) -> String {
    let mut out = String::from(
        "t,pred1_lat,pred1_lon,pred1_alt,pred2_lat,pred2_lon,pred2_alt,j3d_step1_m,j3d_step2_m,j3d_avg_m\n",
    );
    for r in records {
        let [p1, p2] = &r.predicted;
        write!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.t, p1.lat, p1.lon, p1.alt, p2.lat, p2.lon, p2.alt
        )
        .unwrap();
        match &r.errors {
            Some(e) => writeln!(out, ",{:?},{:?},{:?}", e.step1.j3d, e.step2.j3d, e.average.j3d).unwrap(),
            None => out.push_str(",,,\n"),
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Upper axis bound: the smallest 1, 2 or 5 times a power of ten at or above
/// `max`.
fn nice_ceiling(max: f64) -> f64 {
    if !(max > 0.0) || !max.is_finite() {
        return 1.0;
    }
    let mag = 10f64.powf(max.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&v| v >= max)
        .unwrap_or(10.0 * mag)
}

struct Frame {
    width: f64,
    height: f64,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    y_max: f64,
}

impl Frame {
    fn new(width: f64, height: f64, y_max: f64) -> Self {
        Self {
            width,
            height,
            left: 64.0,
            right: 16.0,
            top: 36.0,
            bottom: 72.0,
            y_max: nice_ceiling(y_max),
        }
    }

    fn plot_w(&self) -> f64 {
        self.width - self.left - self.right
    }

    fn plot_h(&self) -> f64 {
        self.height - self.top - self.bottom
    }

    fn y(&self, v: f64) -> f64 {
        self.top + self.plot_h() * (1.0 - v / self.y_max)
    }

    fn open(&self, out: &mut String, title: &str) {
        writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
            w = self.width,
            h = self.height
        )
        .unwrap();
        writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            self.width / 2.0,
            escape(title)
        )
        .unwrap();
    }

    fn axes(&self, out: &mut String, y_label: &str) {
        let x0 = self.left;
        let y0 = self.top + self.plot_h();
        for i in 0..=5 {
            let v = self.y_max * i as f64 / 5.0;
            let y = self.y(v);
            writeln!(
                out,
                r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
                x0 + self.plot_w()
            )
            .unwrap();
            writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 6.0,
                y + 4.0,
                trim_num(v)
            )
            .unwrap();
        }
        writeln!(
            out,
            r#"<line x1="{x0:.2}" y1="{:.2}" x2="{x0:.2}" y2="{y0:.2}" stroke="black"/>"#,
            self.top
        )
        .unwrap();
        writeln!(
            out,
            r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{:.2}" y2="{y0:.2}" stroke="black"/>"#,
            x0 + self.plot_w()
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
            self.top + self.plot_h() / 2.0,
            self.top + self.plot_h() / 2.0,
            escape(y_label)
        )
        .unwrap();
    }
}

fn trim_num(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

/// Overall mean error per model with ±1 standard deviation whiskers.
pub fn model_bar_svg(report: &BenchReport) -> String {
    let top = report
        .models
        .iter()
        .map(|m| m.mean_j3d_m + m.stddev_j3d_m)
        .fold(0.0, f64::max);
    let width = (120.0 + 90.0 * report.models.len() as f64).max(360.0);
    let f = Frame::new(width, 360.0, top);
    let mut out = String::new();
    f.open(&mut out, "Average prediction error by model");
    f.axes(&mut out, "mean 3D error (m)");
    let slot = f.plot_w() / report.models.len().max(1) as f64;
    for (i, m) in report.models.iter().enumerate() {
        let x = f.left + slot * i as f64 + slot * 0.2;
        let bw = slot * 0.6;
        let y = f.y(m.mean_j3d_m);
        let base = f.y(0.0);
        writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{bw:.2}" height="{:.2}" fill="{}"/>"#,
            base - y,
            PALETTE[i % PALETTE.len()]
        )
        .unwrap();
        let cx = x + bw / 2.0;
        let lo = f.y((m.mean_j3d_m - m.stddev_j3d_m).max(0.0));
        let hi = f.y(m.mean_j3d_m + m.stddev_j3d_m);
        writeln!(out, r#"<line x1="{cx:.2}" y1="{lo:.2}" x2="{cx:.2}" y2="{hi:.2}" stroke="black"/>"#).unwrap();
        writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{:.2}</text>"#,
            hi - 6.0,
            m.mean_j3d_m
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            base + 18.0,
            escape(&m.model)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Per-trajectory mean error, one group of bars per trajectory and one bar
/// per model.
pub fn trajectory_bar_svg(report: &BenchReport) -> String {
    let models: Vec<&str> = report.models.iter().map(|m| m.model.as_str()).collect();
    let mut ids: Vec<&str> = Vec::new();
    for t in &report.trajectories {
        if !ids.contains(&t.uav_id.as_str()) {
            ids.push(&t.uav_id);
        }
    }
    let top = report.trajectories.iter().map(|t| t.mean_j3d_m).fold(0.0, f64::max);
    let width = (160.0 + ids.len() as f64 * (12.0 * models.len() as f64 + 16.0)).max(480.0);
    let f = Frame::new(width, 400.0, top);
    let mut out = String::new();
    f.open(&mut out, "Average prediction error by trajectory");
    f.axes(&mut out, "mean 3D error (m)");
    let group = f.plot_w() / ids.len().max(1) as f64;
    let bw = group * 0.8 / models.len().max(1) as f64;
    let base = f.y(0.0);
    for (g, id) in ids.iter().enumerate() {
        let gx = f.left + group * g as f64 + group * 0.1;
        for (k, model) in models.iter().enumerate() {
            if let Some(t) = report.trajectory(model, id) {
                let y = f.y(t.mean_j3d_m);
                writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{y:.2}" width="{bw:.2}" height="{:.2}" fill="{}"/>"#,
                    gx + bw * k as f64,
                    base - y,
                    PALETTE[k % PALETTE.len()]
                )
                .unwrap();
            }
        }
        let cx = gx + group * 0.4;
        writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="end" transform="rotate(-45 {cx:.2} {:.2})">{}</text>"#,
            base + 14.0,
            base + 14.0,
            escape(id)
        )
        .unwrap();
    }
    legend(&mut out, &f, &models);
    out.push_str("</svg>\n");
    out
}

fn legend(out: &mut String, f: &Frame, names: &[&str]) {
    let x = f.width - f.right - 130.0;
    for (k, name) in names.iter().enumerate() {
        let y = f.top + 4.0 + 16.0 * k as f64;
        writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="10" height="10" fill="{}"/>"#,
            PALETTE[k % PALETTE.len()]
        )
        .unwrap();
        writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 14.0, y + 9.0, escape(name)).unwrap();
    }
}

/// Per-step two-step-averaged 3D error against the prediction step.
/// Each series is `(label, first_step, values)`.
pub fn step_error_svg(title: &str, series: &[(&str, usize, &[f64])]) -> String {
    let top = series
        .iter()
        .flat_map(|(_, _, v)| v.iter().copied())
        .fold(0.0, f64::max);
    let first = series.iter().map(|s| s.1).min().unwrap_or(0);
    let last = series
        .iter()
        .map(|(_, s, v)| s + v.len().saturating_sub(1))
        .max()
        .unwrap_or(first);
    let f = Frame::new(640.0, 360.0, top);
    let span = (last - first).max(1) as f64;
    let xs = |step: usize| f.left + f.plot_w() * (step - first) as f64 / span;
    let mut out = String::new();
    f.open(&mut out, title);
    f.axes(&mut out, "mean 3D error (m)");
    let base = f.y(0.0);
    let ticks = (last - first).clamp(1, 10);
    for i in 0..=ticks {
        let step = first + (last - first) * i / ticks;
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{step}</text>"#,
            xs(step),
            base + 16.0
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">prediction step t</text>"#,
        f.left + f.plot_w() / 2.0,
        base + 36.0
    )
    .unwrap();
    for (k, (_, start, values)) in series.iter().enumerate() {
        let pts: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{:.2},{:.2}", xs(start + i), f.y(*v)))
            .collect();
        writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            pts.join(" "),
            PALETTE[k % PALETTE.len()]
        )
        .unwrap();
    }
    let names: Vec<&str> = series.iter().map(|s| s.0).collect();
    legend(&mut out, &f, &names);
    out.push_str("</svg>\n");
    out
}

/// Per-step chart for one record list. Records without realized errors are
/// skipped.
pub fn records_step_svg(label: &str, records: &[PredictionRecord]) -> String {
    let realized: Vec<(usize, f64)> = records
        .iter()
        .filter_map(|r| r.errors.map(|e| (r.t, e.average.j3d)))
        .collect();
    let first = realized.first().map_or(0, |r| r.0);
    let values: Vec<f64> = realized.iter().map(|r| r.1).collect();
    step_error_svg("Prediction error over time", &[(label, first, &values)])
}
