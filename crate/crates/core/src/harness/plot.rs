//! Standalone SVG rendering of a bound trace.
//!
//! The restricted objective o_W is drawn as a line. Each iteration's o_I is a
//! mark: large for full-oracle events, small for cache events.

use std::fmt::Write;

use crate::trainer::{Tier, TraceRow};

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

pub fn trace_svg(rows: &[TraceRow], title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );

    let values: Vec<f64> = rows
        .iter()
        .flat_map(|r| [r.o_w, r.o_i])
        .filter(|v| v.is_finite())
        .collect();
    if rows.is_empty() || values.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let (mut lo, mut hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let first = rows[0].iteration as f64;
    let last = rows[rows.len() - 1].iteration as f64;
    let span = (last - first).max(1.0);
    let x = |it: usize| PAD + (it as f64 - first) / span * (W - 2.0 * PAD);
    let y = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);

    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}"/></g>"#,
        b = H - PAD,
        r = W - PAD
    );
    let label = |s: &mut String, x: f64, y: f64, anchor: &str, text: String| {
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{text}</text>"#
        );
    };
    label(&mut s, PAD - 4.0, H - PAD + 4.0, "end", format!("{lo:.4}"));
    label(&mut s, PAD - 4.0, PAD + 4.0, "end", format!("{hi:.4}"));
    label(&mut s, PAD, H - PAD + 16.0, "middle", format!("{first}"));
    label(&mut s, W - PAD, H - PAD + 16.0, "middle", format!("{last}"));
    label(&mut s, W / 2.0, H - 12.0, "middle", "iteration".into());

    let points: Vec<String> = rows
        .iter()
        .filter(|r| r.o_w.is_finite())
        .map(|r| format!("{:.2},{:.2}", x(r.iteration), y(r.o_w)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
        points.join(" ")
    );
    for r in rows.iter().filter(|r| r.o_i.is_finite()) {
        let (radius, colour) = match r.tier {
            Tier::Cache => (1.5, "gray"),
            Tier::MoveMaking => (4.0, "darkorange"),
            Tier::Exact => (4.0, "firebrick"),
        };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{radius}" fill="{colour}"><title>{} {}</title></circle>"#,
            x(r.iteration),
            y(r.o_i),
            r.tier.as_str(),
            r.o_i
        );
    }
    let legend = [
        ("steelblue", "o_W"),
        ("darkorange", "o_I move-making"),
        ("firebrick", "o_I exact"),
        ("gray", "o_I cache"),
    ];
    for (k, (colour, text)) in legend.iter().enumerate() {
        let ly = PAD + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<circle cx="{}" cy="{ly}" r="4" fill="{colour}"/>"#,
            W - PAD - 110.0
        );
        label(&mut s, W - PAD - 100.0, ly + 4.0, "start", text.to_string());
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marks_by_tier() {
        let rows: Vec<TraceRow> = [Tier::MoveMaking, Tier::Cache, Tier::Cache, Tier::Exact]
            .into_iter()
            .enumerate()
            .map(|(k, tier)| TraceRow {
                iteration: k + 1,
                tier,
                o_w: k as f64,
                o_i: k as f64 + 1.0,
                oracle_calls_cumulative: 0,
                wall_ms: 0,
            })
            .collect();
        let svg = trace_svg(&rows, "a<b");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches(r#"r="1.5""#).count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn empty_trace_is_valid() {
        let svg = trace_svg(&[], "empty");
        assert!(svg.contains("</svg>"));
    }
}
