//! Photometric losses with analytic pixel gradients.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.map(|t| t / sum)
}

/// Separable 11×11 Gaussian filter, zero padded, output the size of the input.
/// The kernel is symmetric so this operator is its own transpose.
fn blur(plane: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let sx = x as isize + k as isize - r;
                if sx >= 0 && (sx as usize) < w {
                    acc += t * plane[y * w + sx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let sy = y as isize + k as isize - r;
                if sy >= 0 && (sy as usize) < h {
                    acc += t * tmp[sy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn rgb_planes(img: &ImageBuffer) -> [Vec<f64>; 3] {
    let c = img.channels();
    let n = img.width() * img.height();
    let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (i, px) in img.data().chunks(c).enumerate() {
        for ch in 0..3 {
            planes[ch][i] = px[ch];
        }
    }
    planes
}

fn check_pair(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() || a.channels() < 3 || b.channels() < 3 {
        return Err(Error::ShapeMismatch(format!(
            "cannot compare {} with {}",
            a.shape_string(),
            b.shape_string()
        )));
    }
    Ok(())
}

/// Mean SSIM over RGB and its gradient with respect to `x` (3 channels).
pub fn ssim_with_grad(x: &ImageBuffer, y: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
    check_pair(x, y)?;
    let (w, h) = (x.width(), x.height());
    let n = w * h;
    let taps = gaussian_taps();
    let xs = rgb_planes(x);
    let ys = rgb_planes(y);
    let norm = 1.0 / (3 * n) as f64;
    let mut total = 0.0;
    let mut grad = ImageBuffer::new(w, h, 3);
    for ch in 0..3 {
        let (xp, yp) = (&xs[ch], &ys[ch]);
        let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).collect::<Vec<_>>();
        let mu_x = blur(xp, w, h, &taps);
        let mu_y = blur(yp, w, h, &taps);
        let m_xx = blur(&sq(xp, xp), w, h, &taps);
        let m_yy = blur(&sq(yp, yp), w, h, &taps);
        let m_xy = blur(&sq(xp, yp), w, h, &taps);
        let mut g_m1 = vec![0.0; n];
        let mut g_m2 = vec![0.0; n];
        let mut g_m12 = vec![0.0; n];
        for p in 0..n {
            let (mx, my) = (mu_x[p], mu_y[p]);
            let sxx = m_xx[p] - mx * mx;
            let syy = m_yy[p] - my * my;
            let sxy = m_xy[p] - mx * my;
            let a1 = 2.0 * mx * my + SSIM_C1;
            let a2 = 2.0 * sxy + SSIM_C2;
            let b1 = mx * mx + my * my + SSIM_C1;
            let b2 = sxx + syy + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            let ds_dmx = 2.0 * my * a2 / (b1 * b2) - 2.0 * mx * s / b1;
            let ds_dsxx = -s / b2;
            let ds_dsxy = 2.0 * a1 / (b1 * b2);
            g_m1[p] = norm * (ds_dmx - 2.0 * mx * ds_dsxx - my * ds_dsxy);
            g_m2[p] = norm * ds_dsxx;
            g_m12[p] = norm * ds_dsxy;
        }
        let b1 = blur(&g_m1, w, h, &taps);
        let b2 = blur(&g_m2, w, h, &taps);
        let b12 = blur(&g_m12, w, h, &taps);
        let g = grad.data_mut();
        for p in 0..n {
            g[3 * p + ch] = b1[p] + 2.0 * xp[p] * b2[p] + yp[p] * b12[p];
        }
    }
    Ok((total * norm, grad))
}

pub fn ssim(x: &ImageBuffer, y: &ImageBuffer) -> Result<f64> {
    Ok(ssim_with_grad(x, y)?.0)
}

/// `L = (1 − λ)·L1 + λ·(1 − SSIM)/2` over RGB, with its gradient with respect
/// to `render` as a 3-channel image. Either input may carry an alpha channel,
/// which is ignored.
pub fn photometric_loss(render: &ImageBuffer, target: &ImageBuffer, lambda: f64) -> Result<(f64, ImageBuffer)> {
    check_pair(render, target)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("loss lambda {lambda} outside [0, 1]")));
    }
    let (w, h) = (render.width(), render.height());
    let n = (w * h * 3) as f64;
    let (rc, tc) = (render.channels(), target.channels());
    let mut l1 = 0.0;
    let mut grad = ImageBuffer::new(w, h, 3);
    {
        let g = grad.data_mut();
        for (p, (r, t)) in render.data().chunks(rc).zip(target.data().chunks(tc)).enumerate() {
            for ch in 0..3 {
                let d = r[ch] - t[ch];
                l1 += d.abs();
                let s = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                g[3 * p + ch] = (1.0 - lambda) * s / n;
            }
        }
    }
    l1 /= n;
    let mut loss = (1.0 - lambda) * l1;
    if lambda > 0.0 {
        let (s, gs) = ssim_with_grad(render, target)?;
        loss += lambda * (1.0 - s) / 2.0;
        for (g, d) in grad.data_mut().iter_mut().zip(gs.data()) {
            *g -= 0.5 * lambda * d;
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> ImageBuffer {
        ImageBuffer::from_vec(w, h, c, (0..w * h * c).map(|_| rng.random()).collect()).unwrap()
    }

    /// Direct windowed SSIM: explicit 2D window sums at every pixel.
    fn reference_ssim(x: &ImageBuffer, y: &ImageBuffer) -> f64 {
        let (w, h) = (x.width() as isize, x.height() as isize);
        let mut win = [[0.0; 11]; 11];
        let mut sum = 0.0;
        for i in 0..11 {
            for j in 0..11 {
                let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
                win[i][j] = (-(di * di + dj * dj) / 4.5).exp();
                sum += win[i][j];
            }
        }
        let mut total = 0.0;
        for ch in 0..3 {
            for py in 0..h {
                for px in 0..w {
                    let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for i in 0..11 {
                        for j in 0..11 {
                            let (sy, sx) = (py + i as isize - 5, px + j as isize - 5);
                            if sx < 0 || sy < 0 || sx >= w || sy >= h {
                                continue;
                            }
                            let k = win[i][j] / sum;
                            let a = x.pixel(sx as usize, sy as usize)[ch];
                            let b = y.pixel(sx as usize, sy as usize)[ch];
                            mx += k * a;
                            my += k * b;
                            xx += k * a * a;
                            yy += k * b * b;
                            xy += k * a * b;
                        }
                    }
                    let (vx, vy, cxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
                    total += (2.0 * mx * my + 1e-4) * (2.0 * cxy + 9e-4)
                        / ((mx * mx + my * my + 1e-4) * (vx + vy + 9e-4));
                }
            }
        }
        total / (3 * w * h) as f64
    }

    #[test]
    fn identical_images_have_zero_loss_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, 12, 9, 3);
        let (l, g) = photometric_loss(&a, &a, 0.2).unwrap();
        assert_abs_diff_eq!(l, 0.0, epsilon = 1e-12);
        assert!(g.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pure_l1_of_constant_offset() {
        let t = ImageBuffer::filled(8, 8, 3, 0.4);
        let r = ImageBuffer::filled(8, 8, 3, 0.5);
        let (l, _) = photometric_loss(&r, &t, 0.0).unwrap();
        assert_abs_diff_eq!(l, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn ssim_matches_direct_window_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&mut rng, 17, 13, 3);
        let b = random(&mut rng, 17, 13, 4);
        assert_abs_diff_eq!(ssim(&a, &b).unwrap(), reference_ssim(&a, &b), epsilon = 1e-5);
        assert_abs_diff_eq!(ssim(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn loss_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random(&mut rng, 16, 16, 3);
        let t = random(&mut rng, 16, 16, 3);
        let (_, g) = photometric_loss(&r, &t, 0.2).unwrap();
        let h = 1e-6;
        for _ in 0..10 {
            let i = rng.random_range(0..r.data().len());
            let mut p = r.clone();
            p.data_mut()[i] += h;
            let mut m = r.clone();
            m.data_mut()[i] -= h;
            let num = (photometric_loss(&p, &t, 0.2).unwrap().0 - photometric_loss(&m, &t, 0.2).unwrap().0) / (2.0 * h);
            assert!((num - g.data()[i]).abs() <= 1e-6 * g.data()[i].abs().max(1e-3), "{num} vs {}", g.data()[i]);
        }
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let a = ImageBuffer::new(4, 4, 3);
        let b = ImageBuffer::new(4, 5, 3);
        assert!(photometric_loss(&a, &b, 0.2).is_err());
    }
}
