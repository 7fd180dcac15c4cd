//! Frame-grid PNGs and metric-curve SVGs.

use std::fmt::Write as _;
use std::path::Path;

use image::GrayImage;
use sftformer_autograd::Tensor;

use crate::error::{CliError, CliResult};

/// Shared `[0, 1] -> 0..=255` mapping for every rendered frame.
pub fn to_gray(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// One row per `[t, h, w]` stack; rows are left-aligned and padded black to
/// the longest. The image is `(rows * h) x (t_max * w)`.
pub fn frame_grid(rows: &[&Tensor<f32>]) -> CliResult<GrayImage> {
    let (h, w) = match rows.first().map(|r| r.shape()) {
        Some([_, h, w]) => (*h, *w),
        _ => return Err(CliError::runtime("frame grid needs [t, h, w] rows")),
    };
    let t_max = rows.iter().map(|r| r.shape()[0]).max().unwrap_or(0);
    let mut img = GrayImage::new((t_max * w) as u32, (rows.len() * h) as u32);
    for (r, frames) in rows.iter().enumerate() {
        if frames.shape()[1..] != [h, w] {
            return Err(CliError::runtime("frame grid rows differ in frame size"));
        }
        for (i, &v) in frames.data().iter().enumerate() {
            let (t, y, x) = (i / (h * w), (i / w) % h, i % w);
            img.put_pixel((t * w + x) as u32, (r * h + y) as u32, image::Luma([to_gray(v)]));
        }
    }
    Ok(img)
}

pub fn save_png(img: &GrayImage, path: &Path) -> CliResult<()> {
    img.save(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub struct Series<'a> {
    pub label: String,
    pub values: &'a [Option<f64>],
    pub dashed: bool,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Line chart over lead times 1..=n. Missing values break the line.
pub fn curve_svg(title: &str, series: &[Series<'_>], colors: &[usize]) -> String {
    let (width, height, left, right, top, bottom) = (640.0, 400.0, 60.0, 170.0, 40.0, 50.0);
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(1).max(2);
    let present = series.iter().flat_map(|s| s.values.iter().flatten().copied());
    let (lo, hi) = present.fold((0.0f64, 1.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let px = |i: usize| left + (width - left - right) * i as f64 / (n - 1) as f64;
    let py = |v: f64| top + (height - top - bottom) * (hi - v) / (hi - lo);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{title}</text>"#, width / 2.0);
    let (x0, x1, y0, y1) = (left, width - right, py(lo), py(hi));
    let _ = writeln!(s, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, x0 - 6.0, py(v) + 4.0);
    }
    for i in 0..n {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, px(i), y0 + 16.0, i + 1);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">lead time</text>"#, (x0 + x1) / 2.0, height - 10.0);
    for (k, (series, &c)) in series.iter().zip(colors).enumerate() {
        let color = PALETTE[c % PALETTE.len()];
        let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let mut d = String::new();
        let mut pen_down = false;
        for (i, v) in series.values.iter().enumerate() {
            match v {
                Some(v) => {
                    let _ = write!(d, "{}{:.1},{:.1} ", if pen_down { "L" } else { "M" }, px(i), py(*v));
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        let _ = writeln!(s, r#"<path d="{}" stroke="{color}" stroke-width="2" fill="none"{dash}/>"#, d.trim_end());
        let ly = top + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            x1 + 10.0,
            x1 + 34.0,
            x1 + 40.0,
            ly + 4.0,
            series.label
        );
    }
    s.push_str("</svg>\n");
    s
}
