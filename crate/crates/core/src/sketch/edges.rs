//! Edge detectors producing binary maps (255 edge on 0).

use std::collections::VecDeque;

use crate::image::{ImageKind, ViewImage};

use super::SketchParams;

/// Canny edge detector: Gaussian blur, Sobel gradients, non-maximum
/// suppression, double threshold and hysteresis.
///
/// Gradient magnitudes are unnormalized Sobel responses (a clean step of
/// height `s` peaks at `4s` before blurring), which is the scale the
/// `canny_low`/`canny_high` thresholds are expressed in.
pub fn canny(img: &ViewImage, p: &SketchParams) -> ViewImage {
    let (w, h) = (img.width, img.height);
    let src: Vec<f64> = img.pixels.iter().map(|&v| v as f64).collect();
    let blurred = gaussian_blur(&src, w, h, p.gaussian_sigma);
    let (gx, gy) = sobel(&blurred, w, h);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();

    let mut thin = vec![0.0; w * h];
    if w >= 3 && h >= 3 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let i = y * w + x;
                let m = mag[i];
                if m == 0.0 {
                    continue;
                }
                let (before, after) = match direction_sector(gx[i], gy[i]) {
                    0 => (i - 1, i + 1),
                    1 => (i - w - 1, i + w + 1),
                    2 => (i - w, i + w),
                    _ => (i - w + 1, i + w - 1),
                };
                // Asymmetric comparison keeps exactly one pixel of a plateau.
                if m > mag[before] && m >= mag[after] {
                    thin[i] = m;
                }
            }
        }
    }

    let mut out = vec![0u8; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= p.canny_high && m > 0.0 {
            out[i] = 255;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if out[j] == 0 && thin[j] >= p.canny_low && thin[j] > 0.0 {
                    out[j] = 255;
                    queue.push_back(j);
                }
            }
        }
    }
    ViewImage::from_pixels(w, h, out, ImageKind::Edge).expect("sized")
}

/// Quantizes the gradient direction into one of four sectors:
/// 0 horizontal, 1 diagonal (down-right), 2 vertical, 3 anti-diagonal.
fn direction_sector(gx: f64, gy: f64) -> u8 {
    let mut angle = gy.atan2(gx).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if !(22.5..157.5).contains(&angle) {
        0
    } else if angle < 67.5 {
        1
    } else if angle < 112.5 {
        2
    } else {
        3
    }
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian blur with clamped borders.
pub(crate) fn gaussian_blur(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * src[y * w + clamp(x as isize + t as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * tmp[clamp(y as isize + t as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// 3x3 Sobel derivatives with clamped borders. `gy` grows downward.
pub(crate) fn sobel(src: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |x: isize, y: isize| -> f64 {
        let cx = x.clamp(0, w as isize - 1) as usize;
        let cy = y.clamp(0, h as isize - 1) as usize;
        src[cy * w + cx]
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        }
    }
    (gx, gy)
}

/// Thresholded absolute response of the 3x3 Laplacian (center 4, cross -1).
pub fn laplacian_edge(img: &ViewImage, p: &SketchParams) -> ViewImage {
    let (w, h) = (img.width, img.height);
    let at = |x: isize, y: isize| -> f64 {
        let cx = x.clamp(0, w as isize - 1) as usize;
        let cy = y.clamp(0, h as isize - 1) as usize;
        img.pixels[cy * w + cx] as f64
    };
    let mut out = vec![0u8; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let r = 4.0 * at(x, y) - at(x - 1, y) - at(x + 1, y) - at(x, y - 1) - at(x, y + 1);
            if r.abs() >= p.laplacian_threshold && r != 0.0 {
                out[y as usize * w + x as usize] = 255;
            }
        }
    }
    ViewImage::from_pixels(w, h, out, ImageKind::Edge).expect("sized")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(w: usize, h: usize, at: usize) -> ViewImage {
        let mut img = ViewImage::filled(w, h, 0, ImageKind::Shaded);
        for y in 0..h {
            for x in at..w {
                img.set(x, y, 255);
            }
        }
        img
    }

    #[test]
    fn constant_image_has_no_edges() {
        let img = ViewImage::filled(32, 32, 90, ImageKind::Shaded);
        assert_eq!(canny(&img, &SketchParams::default()).count_on(), 0);
        assert_eq!(laplacian_edge(&img, &SketchParams::default()).count_on(), 0);
    }

    #[test]
    fn vertical_step_gives_single_line_at_step() {
        let img = step(64, 48, 32);
        let e = canny(&img, &SketchParams::default());
        assert!(e.is_binary());
        for y in 1..47 {
            let cols: Vec<usize> = (0..64).filter(|&x| e.get(x, y) == 255).collect();
            assert_eq!(cols.len(), 1, "row {y}: {cols:?}");
            // The step lies between columns 31 and 32.
            assert!((cols[0] as f64 - 31.5).abs() <= 1.0);
        }
    }

    #[test]
    fn laplacian_of_single_pixel() {
        let mut img = ViewImage::filled(7, 7, 0, ImageKind::Shaded);
        img.set(3, 3, 255);
        let p = SketchParams {
            laplacian_threshold: 1.0,
            ..Default::default()
        };
        let e = laplacian_edge(&img, &p);
        // By hand: center 4*255, the four cross neighbours -255, diagonals 0.
        let on: Vec<(usize, usize)> = (0..7)
            .flat_map(|y| (0..7).map(move |x| (x, y)))
            .filter(|&(x, y)| e.get(x, y) == 255)
            .collect();
        assert_eq!(on, vec![(3, 2), (2, 3), (3, 3), (4, 3), (3, 4)]);
    }

    #[test]
    fn laplacian_of_ramp_is_zero_inside() {
        let mut img = ViewImage::filled(20, 10, 0, ImageKind::Shaded);
        for y in 0..10 {
            for x in 0..20 {
                img.set(x, y, (x * 10 + y * 3) as u8);
            }
        }
        let p = SketchParams {
            laplacian_threshold: 1.0,
            ..Default::default()
        };
        let e = laplacian_edge(&img, &p);
        for y in 1..9 {
            for x in 1..19 {
                assert_eq!(e.get(x, y), 0);
            }
        }
    }

    #[test]
    fn gaussian_kernel_normalized() {
        let k = gaussian_kernel(1.4);
        assert_eq!(k.len(), 11);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
