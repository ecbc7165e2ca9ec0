//! Minimal SVG rendering: learning curves with quartile bands, and a 2-D
//! PCA projection of real versus imagined latents.

use super::embeddings::EmbeddingRow;
use super::metrics::MetricsRow;
use crate::error::{usage, Result};
use nalgebra::DMatrix;
use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let span = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        Self {
            x: span(&mut xs.clone()),
            y: span(&mut ys.clone()),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn axes(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            out,
            r##"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            r - l,
            b - t
        );
        let _ = writeln!(out, r##"<text x="{}" y="30" text-anchor="middle" font-size="16">{title}</text>"##, WIDTH / 2.0);
        let _ = writeln!(out, r##"<text x="{}" y="{}" text-anchor="middle" font-size="12">{xlabel}</text>"##, WIDTH / 2.0, HEIGHT - 16.0);
        let _ = writeln!(
            out,
            r##"<text x="16" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {})">{ylabel}</text>"##,
            HEIGHT / 2.0,
            HEIGHT / 2.0
        );
        for i in 0..=4 {
            let f = f64::from(i) / 4.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let _ = writeln!(out, r##"<text x="{:.1}" y="{}" text-anchor="middle" font-size="10">{}</text>"##, self.px(xv), b + 14.0, tick(xv));
            let _ = writeln!(out, r##"<text x="{}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"##, l - 4.0, self.py(yv) + 3.0, tick(yv));
        }
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn legend(out: &mut String, labels: &[(String, &str)]) {
    for (i, (label, color)) in labels.iter().enumerate() {
        let y = MARGIN + 14.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN - 140.0;
        let _ = writeln!(out, r##"<rect x="{x}" y="{}" width="10" height="10" fill="{color}"/>"##, y - 9.0);
        let _ = writeln!(out, r##"<text x="{}" y="{y}" font-size="11">{label}</text>"##, x + 14.0);
    }
}

/// Median evaluation return against env steps, one line per series with a
/// shaded 25–75% band.
pub fn metrics_svg(series: &[(String, Vec<MetricsRow>)]) -> Result<String> {
    if series.iter().all(|s| s.1.is_empty()) {
        return Err(usage("nothing to plot"));
    }
    let rows = || series.iter().flat_map(|s| s.1.iter());
    let frame = Frame::fit(
        rows().map(|r| r.env_steps as f64),
        rows().flat_map(|r| [r.eval_return_q25, r.eval_return_q75, r.eval_return_median]),
    );
    let mut out = header();
    frame.axes(&mut out, "Evaluation return", "env steps", "median return (25-75%)");
    let mut labels = Vec::new();
    for (i, (label, rows)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper: Vec<String> = rows.iter().map(|r| format!("{:.2},{:.2}", frame.px(r.env_steps as f64), frame.py(r.eval_return_q75))).collect();
        let lower: Vec<String> = rows.iter().rev().map(|r| format!("{:.2},{:.2}", frame.px(r.env_steps as f64), frame.py(r.eval_return_q25))).collect();
        let _ = writeln!(out, r##"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"##, upper.join(" "), lower.join(" "));
        let line: Vec<String> = rows.iter().map(|r| format!("{:.2},{:.2}", frame.px(r.env_steps as f64), frame.py(r.eval_return_median))).collect();
        let _ = writeln!(out, r##"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"##, line.join(" "));
        labels.push((label.clone(), color));
    }
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Projects the rows of `points` onto their first two principal components.
pub fn pca_2d(points: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let dim = points.first().map_or(0, Vec::len);
    if points.len() < 2 || dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(usage("PCA needs at least two points of equal positive dimension"));
    }
    let n = points.len();
    let mut m = DMatrix::from_fn(n, dim, |i, j| points[i][j]);
    let mean = m.row_mean();
    for mut row in m.row_iter_mut() {
        row -= &mean;
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    // singular values are not guaranteed sorted
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let axis = |c: usize| order.get(c).map(|&i| v_t.row(i).transpose());
    let proj = |c: usize| axis(c).map(|a| &m * a);
    let (p0, p1) = (proj(0).expect("at least one component"), proj(1));
    Ok((0..n).map(|i| [p0[i], p1.as_ref().map_or(0.0, |p| p[i])]).collect())
}

/// Scatter of real latents and imagined latents by depth, in PCA space.
pub fn embeddings_svg(rows: &[EmbeddingRow]) -> Result<String> {
    let k = rows.first().map_or(0, |r| r.imagined.len());
    let mut points: Vec<Vec<f64>> = rows.iter().map(|r| r.real.clone()).collect();
    for d in 0..k {
        points.extend(rows.iter().map(|r| r.imagined[d].clone()));
    }
    let proj = pca_2d(&points)?;
    let frame = Frame::fit(proj.iter().map(|p| p[0]), proj.iter().map(|p| p[1]));
    let mut out = header();
    frame.axes(&mut out, "Latent states (PCA)", "component 1", "component 2");
    let mut labels = vec![("real".to_string(), "#000000")];
    labels.extend((1..=k).map(|d| (format!("imagined, depth {d}"), PALETTE[(d - 1) % PALETTE.len()])));
    for (group, chunk) in proj.chunks(rows.len()).enumerate() {
        let color = labels[group].1;
        for p in chunk {
            let _ = writeln!(
                out,
                r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" fill-opacity="0.6"/>"##,
                frame.px(p[0]),
                frame.py(p[1])
            );
        }
    }
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::LossBreakdown;

    #[test]
    fn pca_recovers_the_dominant_direction() {
        // points along (1, 1, 0) with a little spread along (0, 0, 1)
        let pts: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = f64::from(i) - 9.5;
                vec![t, t, 0.01 * (-1f64).powi(i)]
            })
            .collect();
        let p = pca_2d(&pts).unwrap();
        for (i, q) in p.iter().enumerate() {
            let t = i as f64 - 9.5;
            assert!((q[0].abs() - t.abs() * 2f64.sqrt()).abs() < 1e-5);
            assert!(q[1].abs() < 0.02);
        }
        assert!(pca_2d(&pts[..1]).is_err());
    }

    #[test]
    fn svgs_are_well_formed() {
        let row = |s: u64, m: f64| MetricsRow {
            env_steps: s,
            episodes: 1,
            train_steps: 0,
            eval_return_median: m,
            eval_return_q25: m - 1.0,
            eval_return_q75: m + 1.0,
            win_or_success_rate: None,
            loss: LossBreakdown::default(),
            epsilon: 1.0,
            wall_clock: 0.0,
        };
        let svg = metrics_svg(&[("qmix".into(), vec![row(0, 0.0), row(10, 2.0)])]).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(metrics_svg(&[]).is_err());

        let rows: Vec<EmbeddingRow> = (0..4)
            .map(|i| EmbeddingRow {
                episode: 0,
                step: i,
                real: vec![i as f64, 1.0],
                imagined: vec![vec![0.5, i as f64]],
            })
            .collect();
        let svg = embeddings_svg(&rows).unwrap();
        assert_eq!(svg.matches("<circle").count(), 8);
    }
}
