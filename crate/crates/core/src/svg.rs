//! Static SVG figures: layered timeline graphs and F1 boxplots.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::graph::{EventId, GraphError, TimelineGraph, UnorderedPair};
use crate::metrics::AggregateRow;

const NODE_W: f64 = 130.0;
const NODE_H: f64 = 28.0;
const COL_GAP: f64 = 60.0;
const ROW_GAP: f64 = 16.0;
const MARGIN: f64 = 20.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn truncate(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_string()
    } else {
        let mut t: String = s.chars().take(max - 1).collect();
        t.push('…');
        t
    }
}

/// Left-to-right layered drawing: one column per layer, arrows for the
/// transitive reduction of the COEX-expanded graph, dashed links for COEX.
pub fn timeline_svg(title: &str, graph: &TimelineGraph) -> Result<String, GraphError> {
    let layers = graph.layering()?;
    let mut pos: BTreeMap<&EventId, (f64, f64)> = BTreeMap::new();
    let rows = layers.iter().map(Vec::len).max().unwrap_or(0);
    for (c, layer) in layers.iter().enumerate() {
        for (r, id) in layer.iter().enumerate() {
            let x = MARGIN + c as f64 * (NODE_W + COL_GAP);
            let y = MARGIN + 24.0 + r as f64 * (NODE_H + ROW_GAP);
            pos.insert(id, (x, y));
        }
    }
    let width = MARGIN * 2.0 + layers.len().max(1) as f64 * (NODE_W + COL_GAP) - COL_GAP;
    let height = MARGIN * 2.0 + 24.0 + rows.max(1) as f64 * (NODE_H + ROW_GAP) - ROW_GAP;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    s.push_str(
        r##"<defs><marker id="arrow" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="6" markerHeight="6" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="#444"/></marker></defs>"##,
    );
    s.push('\n');
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-weight="bold">{}</text>"#,
        MARGIN + 4.0,
        escape(title)
    );

    let expanded = graph.expand_coex();
    for (a, b) in expanded.transitive_reduction()? {
        let ((ax, ay), (bx, by)) = (pos[&a], pos[&b]);
        let _ = writeln!(
            s,
            r##"<line class="edge" data-from="{}" data-to="{}" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#444" marker-end="url(#arrow)"/>"##,
            escape(a.as_str()),
            escape(b.as_str()),
            ax + NODE_W,
            ay + NODE_H / 2.0,
            bx,
            by + NODE_H / 2.0
        );
    }
    for UnorderedPair(a, b) in graph.coex_links() {
        let ((ax, ay), (bx, by)) = (pos[a], pos[b]);
        let _ = writeln!(
            s,
            r##"<line class="coex" data-from="{}" data-to="{}" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#c60" stroke-dasharray="4 3"/>"##,
            escape(a.as_str()),
            escape(b.as_str()),
            ax + NODE_W / 2.0,
            ay + NODE_H,
            bx + NODE_W / 2.0,
            by
        );
    }
    for e in graph.events() {
        let (x, y) = pos[&e.id];
        let label = format!("{}. {}", e.index, truncate(&e.mention, 16));
        let _ = writeln!(
            s,
            r##"<g class="event" data-id="{}"><rect x="{x:.1}" y="{y:.1}" width="{NODE_W}" height="{NODE_H}" rx="5" fill="#eef3fb" stroke="#345"/><text x="{:.1}" y="{:.1}">{}</text></g>"##,
            escape(e.id.as_str()),
            x + 8.0,
            y + NODE_H / 2.0 + 4.0,
            escape(&label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// One box per aggregate row on a 0..1 axis. Values use the CSV's
/// six-decimal formatting in `data-*` attributes.
pub fn boxplot_svg(title: &str, rows: &[AggregateRow]) -> String {
    const BOX_W: f64 = 40.0;
    const SLOT: f64 = 80.0;
    const PLOT_H: f64 = 240.0;
    let left = 50.0;
    let top = 40.0;
    let width = left + rows.len().max(1) as f64 * SLOT + MARGIN;
    let height = top + PLOT_H + 60.0;
    let y = |v: f64| top + (1.0 - v.clamp(0.0, 1.0)) * PLOT_H;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="20" font-weight="bold">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.1}" stroke="#000"/>"##,
        top + PLOT_H
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{left}" y2="{:.1}" stroke="#000"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            left - 4.0,
            y(v),
            y(v),
            left - 6.0,
            y(v) + 4.0
        );
    }
    for (i, row) in rows.iter().enumerate() {
        let st = &row.stats;
        let cx = left + SLOT * (i as f64 + 0.5);
        let x0 = cx - BOX_W / 2.0;
        let label: Vec<String> = row.group.values().cloned().collect();
        let label = if label.is_empty() {
            "all".to_string()
        } else {
            label.join(" / ")
        };
        let _ = writeln!(
            s,
            r#"<g class="box" data-group="{}" data-count="{}" data-median="{:.6}" data-q1="{:.6}" data-q3="{:.6}" data-whisker-low="{:.6}" data-whisker-high="{:.6}">"#,
            escape(&label),
            st.count,
            st.median,
            st.q1,
            st.q3,
            st.whisker_low,
            st.whisker_high
        );
        let _ = writeln!(
            s,
            r##"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="#333"/>"##,
            y(st.whisker_high),
            y(st.whisker_low)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{x0:.1}" y="{:.1}" width="{BOX_W}" height="{:.1}" fill="#cfe0f5" stroke="#333"/>"##,
            y(st.q3),
            (y(st.q1) - y(st.q3)).max(0.0)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{x0:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#c00" stroke-width="2"/>"##,
            y(st.median),
            x0 + BOX_W,
            y(st.median)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            top + PLOT_H + 16.0,
            escape(&truncate(&label, 14))
        );
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}
