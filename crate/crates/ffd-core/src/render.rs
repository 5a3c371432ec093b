//! Static figure export: accuracy-vs-threshold curves and attention
//! heatmaps as PNG, plus raw matrix dumps as delimited text. Everything is
//! drawn directly into pixel buffers — no plotting toolkit, so outputs are
//! byte-reproducible.

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::threshold::ThresholdReport;

const CANVAS_W: u32 = 640;
const CANVAS_H: u32 = 480;
const MARGIN_L: u32 = 60;
const MARGIN_R: u32 = 20;
const MARGIN_T: u32 = 20;
const MARGIN_B: u32 = 50;

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([64, 64, 64]);
const GRID: Rgb<u8> = Rgb([224, 224, 224]);
const CURVE: Rgb<u8> = Rgb([31, 119, 180]);
const MARKER: Rgb<u8> = Rgb([214, 39, 40]);

/// Plot a threshold report: the accuracy staircase over candidate
/// thresholds with a vertical marker at the selected optimum.
pub fn render_threshold_curve(report: &ThresholdReport, path: &Path) -> Result<()> {
    if report.curve.is_empty() {
        return Err(Error::InvalidInput("threshold curve has no points".into()));
    }
    let mut img = RgbImage::from_pixel(CANVAS_W, CANVAS_H, BACKGROUND);

    let (mut x_lo, mut x_hi) = report
        .curve
        .iter()
        .map(|p| p.tau)
        .chain(std::iter::once(report.tau_ot))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
            (lo.min(t), hi.max(t))
        });
    if x_hi - x_lo < 1e-12 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let pad = 0.05 * (x_hi - x_lo);
    let (x_lo, x_hi) = (x_lo - pad, x_hi + pad);

    let to_px = |tau: f64, acc: f64| -> (i64, i64) {
        let w = f64::from(CANVAS_W - MARGIN_L - MARGIN_R);
        let h = f64::from(CANVAS_H - MARGIN_T - MARGIN_B);
        let x = f64::from(MARGIN_L) + (tau - x_lo) / (x_hi - x_lo) * w;
        let y = f64::from(CANVAS_H - MARGIN_B) - acc * h;
        (x.round() as i64, y.round() as i64)
    };

    // Horizontal gridlines at accuracy quarters, then the axes frame.
    for q in 0..=4 {
        let (x0, y) = to_px(x_lo, f64::from(q) * 0.25);
        let (x1, _) = to_px(x_hi, 0.0);
        draw_line(&mut img, (x0, y), (x1, y), GRID);
    }
    let origin = to_px(x_lo, 0.0);
    draw_line(&mut img, origin, to_px(x_hi, 0.0), AXIS);
    draw_line(&mut img, origin, to_px(x_lo, 1.0), AXIS);

    // Accuracy is a step function of the threshold: hold each level until
    // the next candidate.
    let mut prev: Option<(i64, i64)> = None;
    for point in &report.curve {
        let px = to_px(point.tau, point.acc);
        if let Some(last) = prev {
            draw_line(&mut img, last, (px.0, last.1), CURVE);
            draw_line(&mut img, (px.0, last.1), px, CURVE);
        }
        draw_disc(&mut img, px, 2, CURVE);
        prev = Some(px);
    }

    let (mx, _) = to_px(report.tau_ot, 0.0);
    draw_line(&mut img, (mx, i64::from(MARGIN_T)), (mx, origin.1), MARKER);
    let best = to_px(report.tau_ot, report.acc_at_tau);
    draw_disc(&mut img, best, 3, MARKER);

    img.save(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Render a heat matrix as a PNG: min-max normalize, map through a fixed
/// warm color ramp, and nearest-neighbor upscale by `upscale`.
pub fn render_heatmap(map: ArrayView2<'_, f64>, upscale: usize, path: &Path) -> Result<()> {
    let (h, w) = map.dim();
    if h == 0 || w == 0 {
        return Err(Error::InvalidInput("empty heatmap".into()));
    }
    if upscale == 0 {
        return Err(Error::Config("heatmap upscale factor must be positive".into()));
    }
    if map.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("heatmap contains non-finite values".into()));
    }
    let (lo, hi) = map
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    let img = RgbImage::from_fn((w * upscale) as u32, (h * upscale) as u32, |x, y| {
        let v = map[[y as usize / upscale, x as usize / upscale]];
        // A flat map renders mid-ramp rather than dividing by zero.
        let t = if span > 0.0 { (v - lo) / span } else { 0.5 };
        heat_color(t)
    });
    img.save(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Write a matrix as delimited text, one row per line, full float
/// precision.
pub fn write_matrix_csv(matrix: ArrayView2<'_, f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for row in matrix.rows() {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Black → purple → orange → yellow ramp over t in [0,1].
fn heat_color(t: f64) -> Rgb<u8> {
    const STOPS: [(f64, [f64; 3]); 4] = [
        (0.0, [0.0, 0.0, 0.0]),
        (0.35, [120.0, 28.0, 109.0]),
        (0.7, [237.0, 105.0, 37.0]),
        (1.0, [252.0, 255.0, 164.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    let mut rgb = STOPS[STOPS.len() - 1].1;
    for pair in STOPS.windows(2) {
        let ((t0, c0), (t1, c1)) = (pair[0], pair[1]);
        if t <= t1 {
            let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            rgb = [
                c0[0] + f * (c1[0] - c0[0]),
                c0[1] + f * (c1[1] - c0[1]),
                c0[2] + f * (c1[2] - c0[2]),
            ];
            break;
        }
    }
    Rgb([rgb[0].round() as u8, rgb[1].round() as u8, rgb[2].round() as u8])
}

fn draw_line(img: &mut RgbImage, from: (i64, i64), to: (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let steps = dx.abs().max(dy.abs()).max(1);
    for i in 0..=steps {
        let x = from.0 + dx * i / steps;
        let y = from.1 + dy * i / steps;
        put_pixel(img, x, y, color);
    }
}

fn draw_disc(img: &mut RgbImage, center: (i64, i64), radius: i64, color: Rgb<u8>) {
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if dx * dx + dy * dy <= radius * radius {
                put_pixel(img, center.0 + dx, center.1 + dy, color);
            }
        }
    }
}

fn put_pixel(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if (0..i64::from(img.width())).contains(&x) && (0..i64::from(img.height())).contains(&y) {
        img.put_pixel(x as u32, y as u32, color);
    }
}
