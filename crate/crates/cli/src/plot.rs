//! Bar chart of per-cluster dynamic fractions.

use std::fmt::Write;

use union_core::pipeline::ClusterStats;

pub const MOBILE_COLOR: &str = "#d95f02";
pub const STATIC_COLOR: &str = "#7570b3";

/// Clusters sorted by ascending dynamic fraction, ties by cluster id.
pub fn sorted_clusters(clusters: &[ClusterStats]) -> Vec<ClusterStats> {
    let mut out = clusters.to_vec();
    out.sort_by(|a, b| {
        a.dynamic_fraction
            .total_cmp(&b.dynamic_fraction)
            .then(a.cluster_id.cmp(&b.cluster_id))
    });
    out
}

pub fn fractions_csv(sorted: &[ClusterStats], threshold: f64) -> String {
    let mut s = String::from("rank,cluster_id,members,dynamic,dynamic_fraction,is_mobile\n");
    for (rank, c) in sorted.iter().enumerate() {
        let _ = writeln!(
            s,
            "{rank},{},{},{},{},{}",
            c.cluster_id,
            c.members,
            c.dynamic,
            c.dynamic_fraction,
            c.dynamic_fraction >= threshold
        );
    }
    s
}

pub fn fractions_svg(sorted: &[ClusterStats], threshold: f64) -> String {
    let (w, h) = (640.0, 360.0);
    let (left, right, top, bottom) = (56.0, 16.0, 24.0, 40.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let y_max = sorted
        .iter()
        .map(|c| c.dynamic_fraction)
        .fold(threshold, f64::max)
        .max(1e-9)
        * 1.1;
    let y = |v: f64| top + plot_h * (1.0 - v / y_max);
    let slot = plot_w / sorted.len().max(1) as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{left}" y2="{}" stroke="black"/>"#,
        top,
        top + plot_h
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        top + plot_h,
        left + plot_w,
        top + plot_h
    );
    for (i, c) in sorted.iter().enumerate() {
        let color = if c.dynamic_fraction >= threshold {
            MOBILE_COLOR
        } else {
            STATIC_COLOR
        };
        let x = left + slot * (i as f64 + 0.1);
        let top_y = y(c.dynamic_fraction);
        let _ = writeln!(
            s,
            r#"<rect class="bar" data-cluster="{}" data-fraction="{}" x="{x:.2}" y="{top_y:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
            c.cluster_id,
            c.dynamic_fraction,
            slot * 0.8,
            top + plot_h - top_y
        );
    }
    let ty = y(threshold);
    let _ = writeln!(
        s,
        r#"<line class="threshold" x1="{left}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="red" stroke-dasharray="6 4"/>"#,
        left + plot_w
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end" fill="red">X = {threshold}</text>"#,
        left + plot_w,
        ty - 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">clusters (sorted)</text>"#,
        left + plot_w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">dynamic fraction</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    s.push_str("</svg>\n");
    s
}
