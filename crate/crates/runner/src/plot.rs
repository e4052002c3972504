//! SVG trajectory renderings.

use std::fmt::Write;

use bplan_core::{BeliefMap, Cell, Knowledge, Point};

use crate::episode::{Episode, StepRecord};

/// Pixels per meter.
const SCALE: f64 = 12.0;

fn fill(k: Knowledge) -> &'static str {
    match k {
        Knowledge::Free => "#ffffff",
        Knowledge::Occupied => "#333333",
        Knowledge::Unknown => "#b8b8b8",
    }
}

/// Renders the belief raster, the trajectory from `start` through every
/// record's pose, distinct chosen beacons, and start/target glyphs.
pub fn render_svg(belief: &BeliefMap, start: Point, target: Option<Point>, records: &[StepRecord]) -> String {
    let cs = belief.cell_size() * SCALE;
    let (w, h) = (belief.width(), belief.height());
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.2}" height="{:.2}" viewBox="0 0 {:.2} {:.2}">"#,
        w as f64 * cs,
        h as f64 * cs,
        w as f64 * cs,
        h as f64 * cs
    );
    s.push_str("<g id=\"raster\" shape-rendering=\"crispEdges\">\n");
    for y in 0..h {
        let mut x = 0;
        while x < w {
            let k = belief.get(Cell::new(x, y));
            let run = (x..w).take_while(|&xx| belief.get(Cell::new(xx, y)) == k).count();
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                x as f64 * cs,
                y as f64 * cs,
                run as f64 * cs,
                cs,
                fill(k)
            );
            x += run;
        }
    }
    s.push_str("</g>\n");
    if !records.is_empty() {
        let pts: Vec<String> = std::iter::once(start)
            .chain(records.iter().map(|r| r.pose))
            .map(|p| format!("{:.2},{:.2}", p.x * SCALE, p.y * SCALE))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline id="trajectory" fill="none" stroke="#1f5fbf" stroke-width="2" points="{}"/>"##,
            pts.join(" ")
        );
    }
    let mut beacons: Vec<Point> = Vec::new();
    for b in records.iter().filter_map(|r| r.beacon) {
        if !beacons.contains(&b) {
            beacons.push(b);
        }
    }
    for b in &beacons {
        let _ = writeln!(
            s,
            r##"<circle class="beacon" cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="#e08a00" stroke-width="2"/>"##,
            b.x * SCALE,
            b.y * SCALE,
            cs * 0.6
        );
    }
    let _ = writeln!(
        s,
        r##"<circle id="start" cx="{:.2}" cy="{:.2}" r="{:.2}" fill="#2aa02a"/>"##,
        start.x * SCALE,
        start.y * SCALE,
        cs * 0.5
    );
    if let Some(t) = target {
        let (x, y, r) = (t.x * SCALE, t.y * SCALE, cs * 0.6);
        let _ = writeln!(
            s,
            r##"<path id="target" d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="#d62728" stroke-width="3"/>"##,
            x - r,
            y - r,
            x + r,
            y + r,
            x - r,
            y + r,
            x + r,
            y - r
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn render_episode(ep: &Episode) -> String {
    render_svg(&ep.belief, ep.start, ep.target, &ep.records)
}
