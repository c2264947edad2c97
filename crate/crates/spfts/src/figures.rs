//! Standalone SVG figures, each paired with a CSV of the plotted points.

use std::fmt::Write;

use nalgebra::DMatrix;
use spfts_core::diagnostics::spurious_vector;

const PANEL_W: f64 = 260.0;
const PANEL_H: f64 = 160.0;
const MARGIN: f64 = 28.0;
const SAMPLE_COLOR: &str = "#1f5fa8";
const LIMIT_COLOR: &str = "#c0392b";

pub struct Figure {
    pub svg: String,
    pub csv: String,
}

fn polyline(points: &[(f64, f64)], color: &str, dashed: bool) -> String {
    let mut s = String::new();
    for (x, y) in points {
        let _ = write!(s, "{x:.2},{y:.2} ");
    }
    let dash = if dashed {
        r#" stroke-dasharray="5,3""#
    } else {
        ""
    };
    format!(
        r#"<polyline fill="none" stroke="{color}" stroke-width="1.4"{dash} points="{}"/>"#,
        s.trim_end()
    )
}

fn header(width: f64, height: f64, title: &str, config_hash: &str) -> String {
    format!(
        concat!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#,
            "\n<!-- config_hash: {hash} -->\n",
            r#"<rect width="100%" height="100%" fill="white"/>"#,
            "\n",
            r#"<text x="{cx}" y="18" text-anchor="middle" font-size="14">{title}</text>"#,
            "\n"
        ),
        w = width,
        h = height,
        hash = config_hash,
        cx = width / 2.0,
        title = title
    )
}

/// Leading eigenvectors (columns of `vectors`) against their cosine limits,
/// one panel per eigenvector.
pub fn eigenvector_overlay(vectors: &DMatrix<f64>, title: &str, config_hash: &str) -> Figure {
    let (t_len, k_max) = vectors.shape();
    let cols = k_max.clamp(1, 4);
    let rows = k_max.div_ceil(cols).max(1);
    let width = cols as f64 * (PANEL_W + MARGIN) + MARGIN;
    let height = rows as f64 * (PANEL_H + MARGIN) + 2.0 * MARGIN;
    let mut svg = header(width, height, title, config_hash);
    let mut csv = String::from("k,t,eigenvector,limit\n");
    for k in 0..k_max {
        let u = vectors.column(k);
        let limit: Option<Vec<f64>> = spurious_vector(k + 1, t_len)
            .ok()
            .map(|d| d.iter().copied().collect());
        let scale = u
            .iter()
            .chain(limit.iter().flatten())
            .fold(1e-12f64, |m, v| m.max(v.abs()));
        let (ox, oy) = (
            MARGIN + (k % cols) as f64 * (PANEL_W + MARGIN),
            2.0 * MARGIN + (k / cols) as f64 * (PANEL_H + MARGIN),
        );
        let map = |t: usize, v: f64| {
            let x = ox + PANEL_W * t as f64 / (t_len.max(2) - 1) as f64;
            let y = oy + PANEL_H / 2.0 - v / scale * PANEL_H / 2.0 * 0.95;
            (x, y)
        };
        let _ = writeln!(
            svg,
            r##"<rect x="{ox}" y="{oy}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#999"/>"##
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{ox}" y1="{y}" x2="{x2}" y2="{y}" stroke="#ddd"/>"##,
            y = oy + PANEL_H / 2.0,
            x2 = ox + PANEL_W
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11">k = {}</text>"#,
            ox + 4.0,
            oy + 12.0,
            k + 1
        );
        let sample: Vec<(f64, f64)> = u.iter().enumerate().map(|(t, v)| map(t, *v)).collect();
        svg.push_str(&polyline(&sample, SAMPLE_COLOR, false));
        svg.push('\n');
        if let Some(d) = &limit {
            let pts: Vec<(f64, f64)> = d.iter().enumerate().map(|(t, v)| map(t, *v)).collect();
            svg.push_str(&polyline(&pts, LIMIT_COLOR, true));
            svg.push('\n');
        }
        for t in 0..t_len {
            let lim = limit
                .as_ref()
                .map_or_else(String::new, |d| format!("{:?}", d[t]));
            let _ = writeln!(csv, "{},{},{:?},{}", k + 1, t + 1, u[t], lim);
        }
    }
    svg.push_str("</svg>\n");
    Figure { svg, csv }
}

/// Variance shares against `6 / (k pi)^2`.
pub fn scree(shares: &[f64], theory: &[f64], title: &str, config_hash: &str) -> Figure {
    let k_max = shares.len().min(theory.len()).max(1);
    let (w, h) = (2.0 * PANEL_W, 1.5 * PANEL_H);
    let width = w + 2.0 * MARGIN;
    let height = h + 3.0 * MARGIN;
    let mut svg = header(width, height, title, config_hash);
    let top = shares.iter().chain(theory).fold(1e-12f64, |m, v| m.max(*v));
    let (ox, oy) = (MARGIN, 2.0 * MARGIN);
    let map = |k: usize, v: f64| {
        let x = ox + w * (k as f64 + 0.5) / k_max as f64;
        (x, oy + h - v / top * h * 0.95)
    };
    let _ = writeln!(
        svg,
        r##"<rect x="{ox}" y="{oy}" width="{w}" height="{h}" fill="none" stroke="#999"/>"##
    );
    let mut csv = String::from("k,share,theory\n");
    for k in 0..k_max {
        let (x, y) = map(k, shares[k]);
        let (_, yt) = map(k, theory[k]);
        let _ = writeln!(
            svg,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{SAMPLE_COLOR}"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{yt:.2}" x2="{:.2}" y2="{yt:.2}" stroke="{LIMIT_COLOR}" stroke-width="2"/>"#,
            x - 8.0,
            x + 8.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#,
            oy + h + 14.0,
            k + 1
        );
        let _ = writeln!(csv, "{},{:?},{:?}", k + 1, shares[k], theory[k]);
    }
    svg.push_str("</svg>\n");
    Figure { svg, csv }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_has_one_panel_per_vector() {
        let v = DMatrix::from_fn(10, 3, |t, k| ((t + k) as f64).sin());
        let fig = eigenvector_overlay(&v, "test", "abc");
        assert_eq!(fig.svg.matches("<polyline").count(), 6);
        assert!(fig.svg.contains("config_hash: abc"));
        assert_eq!(fig.csv.lines().count(), 1 + 30);
    }

    #[test]
    fn scree_rows() {
        let fig = scree(&[0.6, 0.15], &[0.607, 0.152], "s", "h");
        assert_eq!(fig.csv.lines().count(), 3);
        assert_eq!(fig.svg.matches("<circle").count(), 2);
    }
}
