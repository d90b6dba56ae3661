//! Raster plots of sweep tables: heatmaps over two swept parameters, line
//! series, and bar summaries with one-standard-deviation whiskers.
//!
//! Axis extremes are printed with a small built-in digit font; everything
//! else is left to the CSV the plot was drawn from.

use std::path::Path;
use std::str::FromStr;

use image::{Rgb, RgbImage};
use thiserror::Error;

use crate::lab::table::{Table, TableError};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("nothing to plot: {0}")]
    Empty(String),
    #[error("unknown plot kind {0:?} (expected heatmap, series or bars)")]
    UnknownKind(String),
    #[error("writing image: {0}")]
    Image(#[from] image::ImageError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    Heatmap,
    Series,
    Bars,
}

impl FromStr for PlotKind {
    type Err = PlotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heatmap" => Ok(PlotKind::Heatmap),
            "series" => Ok(PlotKind::Series),
            "bars" => Ok(PlotKind::Bars),
            other => Err(PlotError::UnknownKind(other.to_string())),
        }
    }
}

const WIDTH: u32 = 640;
const HEIGHT: u32 = 480;
const LEFT: u32 = 60;
const RIGHT: u32 = 80;
const TOP: u32 = 20;
const BOTTOM: u32 = 40;
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GREY: Rgb<u8> = Rgb([110, 110, 110]);
const PALETTE: [Rgb<u8>; 6] = [
    Rgb([31, 119, 180]),
    Rgb([214, 39, 40]),
    Rgb([44, 160, 44]),
    Rgb([255, 127, 14]),
    Rgb([148, 103, 189]),
    Rgb([23, 190, 207]),
];

/// 3x5 glyphs, one row per entry, high bit on the left.
fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 3, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 2, 2],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '.' => [0, 0, 0, 0, 2],
        '-' => [0, 0, 7, 0, 0],
        'e' => [0, 7, 7, 4, 7],
        _ => return None,
    })
}

fn draw_text(img: &mut RgbImage, x: u32, y: u32, text: &str, color: Rgb<u8>) {
    const SCALE: u32 = 2;
    let mut cx = x;
    for c in text.chars() {
        if let Some(rows) = glyph(c) {
            for (ry, bits) in rows.iter().enumerate() {
                for rx in 0..3 {
                    if bits & (4 >> rx) != 0 {
                        for dy in 0..SCALE {
                            for dx in 0..SCALE {
                                put(img, cx + rx * SCALE + dx, y + ry as u32 * SCALE + dy, color);
                            }
                        }
                    }
                }
            }
        }
        cx += 4 * SCALE;
    }
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 0.01 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn put(img: &mut RgbImage, x: u32, y: u32, color: Rgb<u8>) {
    if x < img.width() && y < img.height() {
        img.put_pixel(x, y, color);
    }
}

fn fill(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, color: Rgb<u8>) {
    for y in y0..y1 {
        for x in x0..x1 {
            put(img, x, y, color);
        }
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 {
            put(img, x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn canvas() -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, WHITE);
    let (x0, y1) = (LEFT - 1, HEIGHT - BOTTOM);
    line(
        &mut img,
        (x0 as i64, TOP as i64),
        (x0 as i64, y1 as i64),
        BLACK,
    );
    line(
        &mut img,
        (x0 as i64, y1 as i64),
        ((WIDTH - RIGHT) as i64, y1 as i64),
        BLACK,
    );
    img
}

fn axis_labels(img: &mut RgbImage, (x_lo, x_hi): (f64, f64), (y_lo, y_hi): (f64, f64)) {
    let y_base = HEIGHT - BOTTOM + 8;
    draw_text(img, LEFT, y_base, &label(x_lo), GREY);
    let hi = label(x_hi);
    draw_text(img, WIDTH - RIGHT - 8 * hi.len() as u32, y_base, &hi, GREY);
    draw_text(img, 4, HEIGHT - BOTTOM - 10, &label(y_lo), GREY);
    draw_text(img, 4, TOP, &label(y_hi), GREY);
}

/// Viridis-like ramp for `t` in [0, 1].
fn ramp(t: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    } * 4.0;
    let i = (t.floor() as usize).min(3);
    let f = t - i as f64;
    let c = |k: usize| (STOPS[i][k] + (STOPS[i + 1][k] - STOPS[i][k]) * f).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Mean `metric` over a grid of `x` by `y` values.
pub fn heatmap(table: &Table, x: &str, y: &str, metric: &str) -> Result<RgbImage, PlotError> {
    if table.rows.is_empty() {
        return Err(PlotError::Empty("table has no rows".into()));
    }
    let means = table.means_by(&[x, y], metric)?;
    let xs = distinct(means.keys().map(|k| k[0].0));
    let ys = distinct(means.keys().map(|k| k[1].0));
    let lo = means.values().copied().fold(f64::INFINITY, f64::min);
    let hi = means.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut img = canvas();
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let cw = plot_w as f64 / xs.len() as f64;
    let ch = plot_h as f64 / ys.len() as f64;
    for (key, v) in &means {
        let i = xs.iter().position(|&x| x == key[0].0).expect("from keys");
        let j = ys.iter().position(|&y| y == key[1].0).expect("from keys");
        let x0 = LEFT + (i as f64 * cw) as u32;
        let x1 = LEFT + ((i + 1) as f64 * cw) as u32;
        // First y value at the bottom.
        let y1 = HEIGHT - BOTTOM - (j as f64 * ch) as u32;
        let y0 = HEIGHT - BOTTOM - ((j + 1) as f64 * ch) as u32;
        fill(&mut img, x0, y0, x1, y1, ramp((v - lo) / span));
    }
    // Colour bar.
    let bx = WIDTH - RIGHT + 20;
    for py in 0..plot_h {
        let t = 1.0 - py as f64 / plot_h as f64;
        fill(&mut img, bx, TOP + py, bx + 14, TOP + py + 1, ramp(t));
    }
    draw_text(&mut img, bx - 10, TOP.saturating_sub(14), &label(hi), GREY);
    draw_text(&mut img, bx - 10, HEIGHT - BOTTOM + 8, &label(lo), GREY);
    axis_labels(
        &mut img,
        (xs[0], xs[xs.len() - 1]),
        (ys[0], ys[ys.len() - 1]),
    );
    Ok(img)
}

/// One line per group: mean `y` against `x`.
pub fn series(table: &Table, group: &str, x: &str, y: &str) -> Result<RgbImage, PlotError> {
    if table.rows.is_empty() {
        return Err(PlotError::Empty("table has no rows".into()));
    }
    let groups: Vec<String> = {
        let mut seen: Vec<String> = Vec::new();
        for g in table.text(group)? {
            if !seen.iter().any(|s| s == g) {
                seen.push(g.to_string());
            }
        }
        seen
    };
    let mut lines = Vec::new();
    for g in &groups {
        let sub = table.filter(group, g)?;
        let means = sub.means_by(&[x], y)?;
        lines.push(
            means
                .into_iter()
                .map(|(k, v)| (k[0].0, v))
                .collect::<Vec<_>>(),
        );
    }
    let x_lo = lines
        .iter()
        .flatten()
        .map(|p| p.0)
        .fold(f64::INFINITY, f64::min);
    let x_hi = lines
        .iter()
        .flatten()
        .map(|p| p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let y_hi = lines.iter().flatten().map(|p| p.1).fold(0.0, f64::max);
    let x_span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
    let y_span = if y_hi > 0.0 { y_hi } else { 1.0 };

    let mut img = canvas();
    let plot_w = f64::from(WIDTH - LEFT - RIGHT);
    let plot_h = f64::from(HEIGHT - TOP - BOTTOM);
    let to_px = |(x, y): (f64, f64)| {
        (
            (f64::from(LEFT) + (x - x_lo) / x_span * plot_w).round() as i64,
            (f64::from(HEIGHT - BOTTOM) - y / y_span * plot_h).round() as i64,
        )
    };
    for (k, pts) in lines.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for w in pts.windows(2) {
            line(&mut img, to_px(w[0]), to_px(w[1]), color);
        }
        if pts.len() == 1 {
            let (px, py) = to_px(pts[0]);
            fill(
                &mut img,
                px as u32 - 2,
                py as u32 - 2,
                px as u32 + 3,
                py as u32 + 3,
                color,
            );
        }
        // Legend swatch.
        let ly = TOP + 14 * k as u32;
        fill(
            &mut img,
            WIDTH - RIGHT + 10,
            ly,
            WIDTH - RIGHT + 24,
            ly + 8,
            color,
        );
    }
    axis_labels(&mut img, (x_lo, x_hi), (0.0, y_hi));
    Ok(img)
}

/// Mean bars with one-standard-deviation whiskers.
pub fn bars(groups: &[(String, Vec<f64>)]) -> Result<RgbImage, PlotError> {
    if groups.is_empty() || groups.iter().any(|(_, v)| v.is_empty()) {
        return Err(PlotError::Empty("bar groups must be non-empty".into()));
    }
    let stats: Vec<(f64, f64)> = groups
        .iter()
        .map(|(_, v)| {
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            let var = if v.len() > 1 {
                v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            (m, var.sqrt())
        })
        .collect();
    let y_hi = stats.iter().map(|(m, s)| m + s).fold(0.0, f64::max);
    let y_span = if y_hi > 0.0 { y_hi } else { 1.0 };
    let mut img = canvas();
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = f64::from(HEIGHT - TOP - BOTTOM);
    let slot = plot_w / groups.len() as u32;
    let base = HEIGHT - BOTTOM;
    let to_y = |v: f64| (f64::from(base) - v.max(0.0) / y_span * plot_h).round() as u32;
    for (k, &(m, s)) in stats.iter().enumerate() {
        let x0 = LEFT + k as u32 * slot + slot / 5;
        let x1 = LEFT + (k as u32 + 1) * slot - slot / 5;
        fill(&mut img, x0, to_y(m), x1, base, PALETTE[k % PALETTE.len()]);
        let xm = i64::from((x0 + x1) / 2);
        let (top, bottom) = (i64::from(to_y(m + s)), i64::from(to_y(m - s)));
        line(&mut img, (xm, top), (xm, bottom), BLACK);
        line(&mut img, (xm - 4, top), (xm + 4, top), BLACK);
        line(&mut img, (xm - 4, bottom), (xm + 4, bottom), BLACK);
    }
    axis_labels(&mut img, (1.0, groups.len() as f64), (0.0, y_hi));
    Ok(img)
}

/// Picks sensible columns for `kind` from a sweep or series table.
pub fn render(table: &Table, kind: PlotKind) -> Result<RgbImage, PlotError> {
    if table.rows.is_empty() {
        return Err(PlotError::Empty("table has no rows".into()));
    }
    let axes = table.axis_columns();
    let hgmp = if table.has_column("model") {
        table.filter("model", "hgmp")?
    } else {
        table.clone()
    };
    match kind {
        PlotKind::Heatmap => {
            if axes.len() < 2 {
                return Err(PlotError::Empty(
                    "a heatmap needs a sweep over two parameters".into(),
                ));
            }
            heatmap(&hgmp, &axes[0], &axes[1], "eta_t")
        }
        PlotKind::Series if table.has_column("iteration") => {
            let group = axes.first().map(String::as_str).unwrap_or("model");
            series(&hgmp, group, "iteration", "eta_t")
        }
        PlotKind::Series => {
            let x = axes
                .first()
                .ok_or_else(|| PlotError::Empty("a series needs a swept parameter".into()))?;
            series(table, "model", x, "eta_t")
        }
        PlotKind::Bars => {
            if let Some(axis) = axes.first() {
                return bars(&hgmp.group_by(axis, "eta_t")?);
            }
            let agents: Vec<&String> = table
                .headers
                .iter()
                .filter(|h| h.starts_with("eta_h") || h.starts_with("eta_g"))
                .collect();
            if agents.is_empty() {
                return Err(PlotError::Empty("no per-agent columns".into()));
            }
            let groups = agents
                .into_iter()
                .map(|h| Ok((h.clone(), hgmp.numeric(h)?)))
                .collect::<Result<Vec<_>, PlotError>>()?;
            bars(&groups)
        }
    }
}

pub fn save(img: &RgbImage, path: &Path) -> Result<(), PlotError> {
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
