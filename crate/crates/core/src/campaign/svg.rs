//! x-t diagram of one run: longitudinal position of every vehicle over
//! time, with collision markers and the two phase instants.

use std::fmt::Write;

use super::CampaignReport;
use crate::monitor::MonitorVerdict;
use crate::sim::{CollisionKind, ConcreteTrace, VEHICLES};

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

pub fn render_run_svg(trace: &ConcreteTrace, verdict: &MonitorVerdict) -> String {
    let t_max = trace.samples.last().map_or(1.0, |s| s.t).max(trace.dt);
    let xs = trace.samples.iter().flat_map(|s| s.vehicles.iter().map(|v| v.x));
    let (x_min, x_max) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let (x_min, x_max) = if x_min.is_finite() { (x_min, x_max.max(x_min + 1.0)) } else { (0.0, 1.0) };
    let px = |t: f64| MARGIN + (W - 2.0 * MARGIN) * t / t_max;
    let py = |x: f64| H - MARGIN - (H - 2.0 * MARGIN) * (x - x_min) / (x_max - x_min);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, "<title>{} {}</title>", trace.scenario_id, verdict.outcome);
    let _ = writeln!(
        s,
        r##"<rect x="{m}" y="{m}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#888"/>"##,
        m = MARGIN,
        w = W - 2.0 * MARGIN,
        h = H - 2.0 * MARGIN
    );
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12">t [s] (0 to {t_max:.2})</text>"#, W / 2.0 - 40.0, H - 12.0);
    let _ = writeln!(s, r#"<text x="4" y="{:.1}" font-size="12">x [m]</text>"#, MARGIN - 8.0);

    for (k, id) in VEHICLES.iter().enumerate() {
        let mut d = String::new();
        for (i, sample) in trace.samples.iter().enumerate() {
            let v = &sample.vehicles[k];
            let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, px(sample.t), py(v.x));
        }
        let _ = writeln!(s, r#"<path class="vehicle" data-id="{id}" d="{d}" fill="none" stroke="{}" stroke-width="1.5"/>"#, COLORS[k]);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{}">{id}</text>"#,
            W - MARGIN + 4.0,
            MARGIN + 14.0 * k as f64 + 10.0,
            COLORS[k]
        );
    }

    if let Some((ta, tb)) = verdict.phase_times {
        for (name, t) in [("A", ta), ("B", tb)] {
            let x = px(t);
            let _ = writeln!(
                s,
                r##"<line class="phase" x1="{x:.2}" y1="{MARGIN}" x2="{x:.2}" y2="{:.1}" stroke="#555" stroke-dasharray="4 3"/>"##,
                H - MARGIN
            );
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.1}" font-size="11">phase {name} ({t:.2} s)</text>"#, x + 3.0, MARGIN - 4.0);
        }
    }

    for e in &trace.events {
        let Some(sample) = trace.samples.iter().min_by(|a, b| (a.t - e.t).abs().total_cmp(&(b.t - e.t).abs())) else {
            continue;
        };
        let k = VEHICLES.iter().position(|v| *v == e.pair[1]).unwrap_or(0);
        let kind = match e.kind {
            CollisionKind::FrontalCollision => "frontal",
            CollisionKind::OtherCollision => "other",
        };
        let _ = writeln!(
            s,
            r##"<circle class="collision" data-kind="{kind}" cx="{:.2}" cy="{:.2}" r="5" fill="none" stroke="#000" stroke-width="2"/>"##,
            px(e.t),
            py(sample.vehicles[k].x)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grouped bar chart of the coverage table: one group per row, one bar
/// per count.
pub fn render_coverage_svg(report: &CampaignReport) -> String {
    const SERIES: [(&str, &str); 3] =
        [("coverage OK", "#2ca02c"), ("property FAIL", "#d62728"), ("coverage OK and property FAIL", "#9467bd")];
    let rows: Vec<_> = report.rows.iter().chain(std::iter::once(&report.union_row)).collect();
    let top = rows.iter().map(|r| r.total).max().unwrap_or(1).max(1) as f64;
    let group_w = (W - 2.0 * MARGIN) / rows.len().max(1) as f64;
    let bar_w = group_w / 4.0;
    let py = |v: f64| H - MARGIN - (H - 2.0 * MARGIN) * v / top;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, "<title>coverage {}</title>", report.metadata.agent_label);
    let _ = writeln!(
        s,
        r##"<line x1="{MARGIN}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#888"/>"##,
        H - MARGIN,
        W - MARGIN,
        H - MARGIN
    );
    for (g, row) in rows.iter().enumerate() {
        let x0 = MARGIN + g as f64 * group_w + bar_w / 2.0;
        let values = [row.coverage_ok, row.property_fail, row.cover_ok_and_prop_fail];
        for (k, (&v, (name, color))) in values.iter().zip(SERIES).enumerate() {
            let x = x0 + k as f64 * bar_w;
            let y = py(v as f64);
            let _ = writeln!(
                s,
                r#"<rect class="bar" data-row="{}" data-series="{name}" x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                row.label,
                bar_w * 0.9,
                H - MARGIN - y
            );
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="10">{v}</text>"#, x, y - 3.0);
        }
        let _ = writeln!(s, r#"<text x="{x0:.2}" y="{:.1}" font-size="11">{}</text>"#, H - MARGIN + 16.0, row.label);
    }
    for (k, (name, color)) in SERIES.iter().enumerate() {
        let y = 16.0 + 14.0 * k as f64;
        let _ = writeln!(s, r#"<rect x="{MARGIN}" y="{:.1}" width="10" height="10" fill="{color}"/>"#, y - 9.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{y:.1}" font-size="11">{name}</text>"#, MARGIN + 14.0);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VehicleId;
    use crate::monitor::Outcome;
    use crate::sim::{CollisionEvent, Sample, VehicleSample};

    #[test]
    fn collision_and_phase_markers() {
        let v = |x: f64, lane: u8| VehicleSample { x, y: lane as f64 * 3.5, lane, speed: 1.0 };
        let trace = ConcreteTrace {
            scenario_id: "c22_64_level".into(),
            dt: 0.5,
            samples: (0..4)
                .map(|k| Sample { t: k as f64 * 0.5, vehicles: [v(k as f64, 1), v(5.0, 1), v(0.0, 2)], throttle: 0.0, brake: 0.0 })
                .collect(),
            events: vec![CollisionEvent { t: 1.0, kind: CollisionKind::FrontalCollision, pair: [VehicleId::Ego, VehicleId::Car1] }],
        };
        let verdict = MonitorVerdict {
            scenario_id: trace.scenario_id.clone(),
            spec_id: "c22_64".into(),
            offset: 0.0,
            compliance: true,
            property_ok: false,
            outcome: Outcome::CoverOkPropFail,
            first_violation_t: Some(1.0),
            phase_times: Some((0.5, 1.5)),
        };
        let svg = render_run_svg(&trace, &verdict);
        assert_eq!(svg.matches(r#"class="collision""#).count(), 1);
        assert_eq!(svg.matches(r#"class="phase""#).count(), 2);
        assert_eq!(svg.matches(r#"class="vehicle""#).count(), 3);
        assert!(svg.ends_with("</svg>\n"));
    }
}
