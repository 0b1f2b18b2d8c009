use crate::error::{Error, Result};
use crate::image::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Mean absolute error over pixels and channels, with its gradient
/// (`sign(rendered − target) / (H·W·C)`).
pub fn photo_loss(rendered: &Image, target: &Image) -> Result<(f64, Image)> {
    rendered.check_same_shape(target)?;
    let n = rendered.data.len().max(1) as f64;
    let mut grad = Image::new(rendered.width, rendered.height, rendered.channels);
    let mut sum = 0.0;
    for ((g, a), b) in grad.data.iter_mut().zip(&rendered.data).zip(&target.data) {
        let d = a - b;
        sum += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((sum / n, grad))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable Gaussian filter with zero padding, output the same size.
fn blur(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let xx = x as isize + i as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    s += kv * plane[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let yy = y as isize + i as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    s += kv * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = s;
        }
    }
    out
}

/// `1 − SSIM` averaged over pixels and channels, with the gradient with
/// respect to `rendered`.
pub fn ssim_loss(rendered: &Image, target: &Image) -> Result<(f64, Image)> {
    rendered.check_same_shape(target)?;
    let (w, h, ch) = (rendered.width, rendered.height, rendered.channels);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let k = gaussian_kernel();
    let n = (w * h * ch) as f64;
    let mut grad = Image::new(w, h, ch);
    let mut total = 0.0;
    for c in 0..ch {
        let x = rendered.channel(c).data;
        let y = target.channel(c).data;
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let (mx, my) = (blur(&x, w, h, &k), blur(&y, w, h, &k));
        let (wxx, wyy, wxy) = (blur(&xx, w, h, &k), blur(&yy, w, h, &k), blur(&xy, w, h, &k));
        let mut da = vec![0.0; w * h];
        let mut db = vec![0.0; w * h];
        let mut dc = vec![0.0; w * h];
        for p in 0..w * h {
            let (ux, uy) = (mx[p], my[p]);
            let vx = wxx[p] - ux * ux;
            let vy = wyy[p] - uy * uy;
            let cxy = wxy[p] - ux * uy;
            let a1 = 2.0 * ux * uy + SSIM_C1;
            let a2 = 2.0 * cxy + SSIM_C2;
            let b1 = ux * ux + uy * uy + SSIM_C1;
            let b2 = vx + vy + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            // Grouped so that identical windows give exactly zero.
            da[p] = s * ((2.0 * uy / a1 - 2.0 * ux / b1) + (2.0 * ux / b2 - 2.0 * uy / a2));
            db[p] = -s / b2;
            dc[p] = 2.0 * s / a2;
        }
        let (ga, gb, gc) = (blur(&da, w, h, &k), blur(&db, w, h, &k), blur(&dc, w, h, &k));
        for p in 0..w * h {
            grad.data[p * ch + c] = -(ga[p] + 2.0 * x[p] * gb[p] + y[p] * gc[p]) / n;
        }
    }
    Ok((1.0 - total / n, grad))
}
