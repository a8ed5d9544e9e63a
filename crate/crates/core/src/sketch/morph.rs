//! Pixel-level transforms: dilation, color reversal and content cropping.

use crate::error::{Error, Result};
use crate::image::{ImageKind, ViewImage};

/// Binary dilation with a `(2r+1) x (2r+1)` square structuring element.
pub fn dilate(img: &ViewImage, radius: usize) -> Result<ViewImage> {
    if let Some(&v) = img.pixels.iter().find(|&&p| p != 0 && p != 255) {
        return Err(Error::NonBinaryImage(v));
    }
    if radius == 0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width, img.height);
    // A square element separates into a horizontal and a vertical max filter.
    let mut rows = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            rows[y * w + x] = *img.pixels[y * w + lo..=y * w + hi].iter().max().unwrap();
        }
    }
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).map(|yy| rows[yy * w + x]).max().unwrap();
        }
    }
    ViewImage::from_pixels(w, h, out, img.kind)
}

pub fn invert(img: &ViewImage) -> ViewImage {
    ViewImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| 255 - p).collect(),
        kind: img.kind,
    }
}

/// Square crop window `(left, top, side)` around the dark content of a sketch
/// (pixels below 128). The window may extend past the image borders.
pub fn content_square(img: &ViewImage) -> Option<(isize, isize, usize)> {
    let (w, h) = (img.width, img.height);
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if img.get(x, y) < 128 {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
    }
    if x0 == usize::MAX {
        return None;
    }
    let bw = x1 - x0 + 1;
    let bh = y1 - y0 + 1;
    let side = bw.max(bh);
    let left = x0 as isize - ((side - bw) / 2) as isize;
    let top = y0 as isize - ((side - bh) / 2) as isize;
    Some((left, top, side))
}

/// Crops a dark-on-light sketch to a square around its content, resizes it
/// (nearest neighbour) to `out_size - 2*pad` and centers it on an
/// `out_size` canvas. The result is binary with content = 255 on 0.
pub fn crop_to_content(img: &ViewImage, out_size: usize, pad: usize) -> Result<ViewImage> {
    if out_size <= 2 * pad {
        return Err(Error::InvalidArgument(format!(
            "output size {out_size} leaves no room inside padding {pad}"
        )));
    }
    let (left, top, side) = content_square(img).ok_or(Error::EmptySketch)?;
    let mut square = ViewImage::filled(side, side, 0, ImageKind::Sketch);
    for sy in 0..side {
        let y = top + sy as isize;
        if y < 0 || y >= img.height as isize {
            continue;
        }
        for sx in 0..side {
            let x = left + sx as isize;
            if x < 0 || x >= img.width as isize {
                continue;
            }
            if img.get(x as usize, y as usize) < 128 {
                square.set(sx, sy, 255);
            }
        }
    }
    let inner = out_size - 2 * pad;
    let scaled = square.resize_nearest(inner, inner);
    let mut out = ViewImage::filled(out_size, out_size, 0, ImageKind::Sketch);
    for y in 0..inner {
        let dst = (y + pad) * out_size + pad;
        out.pixels[dst..dst + inner].copy_from_slice(&scaled.pixels[y * inner..(y + 1) * inner]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_dilate(img: &ViewImage, r: usize) -> ViewImage {
        let mut out = img.clone();
        let r = r as isize;
        for y in 0..img.height as isize {
            for x in 0..img.width as isize {
                let mut v = 0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx >= 0 && ny >= 0 && nx < img.width as isize && ny < img.height as isize
                        {
                            v = v.max(img.get(nx as usize, ny as usize));
                        }
                    }
                }
                out.set(x as usize, y as usize, v);
            }
        }
        out
    }

    #[test]
    fn dilate_single_pixel() {
        let mut img = ViewImage::filled(7, 7, 0, ImageKind::Edge);
        img.set(3, 3, 255);
        let d = dilate(&img, 1).unwrap();
        assert_eq!(d.count_on(), 9);
        for y in 2..=4 {
            for x in 2..=4 {
                assert_eq!(d.get(x, y), 255);
            }
        }
        assert_eq!(dilate(&img, 0).unwrap(), img);
    }

    #[test]
    fn dilate_rejects_gray() {
        let img = ViewImage::filled(3, 3, 17, ImageKind::Shaded);
        assert!(matches!(dilate(&img, 1), Err(Error::NonBinaryImage(17))));
    }

    #[test]
    fn invert_basics() {
        let img = ViewImage::filled(4, 4, 0, ImageKind::Edge);
        assert!(invert(&img).pixels.iter().all(|&p| p == 255));
    }

    #[test]
    fn crop_window_of_small_content() {
        let mut img = ViewImage::filled(10, 10, 255, ImageKind::Sketch);
        for y in 2..=5 {
            for x in 3..=4 {
                img.set(x, y, 0);
            }
        }
        // Hand-traced: bbox rows 2..=5, cols 3..=4 -> side 4, widened one
        // column each way to cols 2..=5.
        assert_eq!(content_square(&img), Some((2, 2, 4)));
        let out = crop_to_content(&img, 24, 2).unwrap();
        // Content occupies the middle half of the 20x20 interior.
        assert_eq!(out.get(12, 12), 255);
        assert_eq!(out.get(4, 12), 0);
        assert_eq!(out.get(1, 1), 0);
    }

    #[test]
    fn tight_square_is_plain_resize_and_pad() {
        let img = ViewImage::filled(8, 8, 0, ImageKind::Sketch);
        let out = crop_to_content(&img, 20, 5).unwrap();
        for y in 0..20 {
            for x in 0..20 {
                let inside = (5..15).contains(&x) && (5..15).contains(&y);
                assert_eq!(out.get(x, y), if inside { 255 } else { 0 });
            }
        }
    }

    #[test]
    fn blank_page_is_empty_sketch() {
        let img = ViewImage::filled(16, 16, 255, ImageKind::Sketch);
        assert!(matches!(
            crop_to_content(&img, 224, 5),
            Err(Error::EmptySketch)
        ));
    }

    fn binary_image(bits: Vec<bool>, w: usize) -> ViewImage {
        let h = bits.len() / w;
        let pixels = bits[..w * h]
            .iter()
            .map(|&b| if b { 255 } else { 0 })
            .collect();
        ViewImage::from_pixels(w, h, pixels, ImageKind::Edge).unwrap()
    }

    proptest! {
        #[test]
        fn dilation_composes(bits in proptest::collection::vec(proptest::bool::weighted(0.05), 400)) {
            let img = binary_image(bits, 20);
            let twice = dilate(&dilate(&img, 1).unwrap(), 1).unwrap();
            let direct = dilate(&img, 2).unwrap();
            prop_assert_eq!(&twice, &direct);
            prop_assert_eq!(&direct, &brute_dilate(&img, 2));
        }

        #[test]
        fn invert_mean_and_involution(pixels in proptest::collection::vec(any::<u8>(), 64)) {
            let img = ViewImage::from_pixels(8, 8, pixels, ImageKind::Shaded).unwrap();
            let inv = invert(&img);
            prop_assert!((inv.mean() - (255.0 - img.mean())).abs() < 1e-9);
            prop_assert_eq!(invert(&inv), img);
        }
    }
}
