//! Minimal static line plots for 1-D profiles.

use std::path::Path;

use image::{Rgb, RgbImage};

const W: u32 = 900;
const H: u32 = 360;
const MARGIN: u32 = 30;

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < W && (y as u32) < H {
            img.put_pixel(x as u32, y as u32, c);
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

/// Plot `ys` against `xs` with thin reference lines at the integer levels
/// inside the value range.
pub fn profile_png(xs: &[f64], ys: &[f64], path: &Path) -> image::ImageResult<()> {
    let mut img = RgbImage::from_pixel(W, H, Rgb([255, 255, 255]));
    let (xmin, xmax) = (xs[0], xs[xs.len() - 1]);
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil().max(lo + 1.0);
    let px = |x: f64| (MARGIN as f64 + (x - xmin) / (xmax - xmin).max(1e-300) * (W - 2 * MARGIN) as f64) as i64;
    let py = |y: f64| (H as f64 - MARGIN as f64 - (y - lo) / (hi - lo) * (H - 2 * MARGIN) as f64) as i64;

    let grey = Rgb([200, 200, 200]);
    let mut level = lo;
    while level <= hi {
        line(&mut img, (px(xmin), py(level)), (px(xmax), py(level)), grey);
        level += 1.0;
    }
    // integer tile boundaries as ticks
    let mut t = xmin.ceil();
    while t <= xmax {
        let x = px(t);
        line(&mut img, (x, H as i64 - MARGIN as i64), (x, H as i64 - MARGIN as i64 + 4), Rgb([0, 0, 0]));
        t += 1.0;
    }
    let blue = Rgb([20, 60, 200]);
    for k in 1..xs.len() {
        line(&mut img, (px(xs[k - 1]), py(ys[k - 1])), (px(xs[k]), py(ys[k])), blue);
    }
    img.save(path)
}
