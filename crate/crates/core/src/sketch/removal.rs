//! Stroke-level random edge removal.
//!
//! Edge pixels are grouped into 8-connected strokes. Each stroke is walked
//! depth-first and the walk is cut into segments of random length, so long
//! strokes get split. Segments are erased in random order until the target
//! pixel count is reached; the last one may be erased only partially.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::image::ViewImage;

const MIN_SEGMENT: usize = 6;
const MAX_SEGMENT: usize = 30;

/// Depth-first pixel order of every 8-connected component, components in
/// raster-scan order of their first pixel.
pub fn strokes(img: &ViewImage) -> Vec<Vec<usize>> {
    let (w, h) = (img.width, img.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if img.pixels[start] == 0 || seen[start] {
            continue;
        }
        let mut order = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            order.push(i);
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for (dx, dy) in [
                (1, 0),
                (1, 1),
                (0, 1),
                (-1, 1),
                (-1, 0),
                (-1, -1),
                (0, -1),
                (1, -1),
            ] {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if img.pixels[j] != 0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        out.push(order);
    }
    out
}

/// Erases `round(fraction * edge_pixels)` edge pixels, stroke segment by
/// stroke segment. The output edge set is always a subset of the input.
pub fn random_edge_removal<R: Rng + ?Sized>(
    img: &ViewImage,
    fraction: f64,
    rng: &mut R,
) -> ViewImage {
    let fraction = fraction.clamp(0.0, 1.0);
    let total = img.count_on();
    let target = (fraction * total as f64).round() as usize;
    if target == 0 {
        return img.clone();
    }

    let mut segments: Vec<Vec<usize>> = Vec::new();
    for stroke in strokes(img) {
        let mut rest = stroke.as_slice();
        while !rest.is_empty() {
            let len = rng.random_range(MIN_SEGMENT..=MAX_SEGMENT).min(rest.len());
            segments.push(rest[..len].to_vec());
            rest = &rest[len..];
        }
    }
    segments.shuffle(rng);

    let mut out = img.clone();
    let mut removed = 0;
    for seg in &segments {
        if removed == target {
            break;
        }
        let take = seg.len().min(target - removed);
        // A partial cut keeps a random contiguous run of the segment.
        let offset = if take < seg.len() {
            rng.random_range(0..=seg.len() - take)
        } else {
            0
        };
        for &i in &seg[offset..offset + take] {
            out.pixels[i] = 0;
        }
        removed += take;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageKind;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lines(count: usize) -> ViewImage {
        // Horizontal strokes of 50 pixels, two rows apart.
        let mut img = ViewImage::filled(60, 2 * count + 2, 0, ImageKind::Edge);
        for k in 0..count {
            for x in 5..55 {
                img.set(x, 2 * k + 1, 255);
            }
        }
        img
    }

    #[test]
    fn zero_and_full_fraction() {
        let img = lines(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(random_edge_removal(&img, 0.0, &mut rng), img);
        assert_eq!(random_edge_removal(&img, 1.0, &mut rng).count_on(), 0);
    }

    #[test]
    fn thirty_percent_of_thousand_pixels() {
        let img = lines(20);
        assert_eq!(img.count_on(), 1000);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = random_edge_removal(&img, 0.3, &mut rng);
        let removed = 1000 - out.count_on();
        assert!((250..=350).contains(&removed), "{removed}");
        for (a, b) in img.pixels.iter().zip(&out.pixels) {
            assert!(*b == 0 || *a == 255);
        }
    }

    #[test]
    fn strokes_are_eight_connected_components() {
        let mut img = ViewImage::filled(5, 5, 0, ImageKind::Edge);
        img.set(0, 0, 255);
        img.set(1, 1, 255);
        img.set(4, 4, 255);
        let s = strokes(&img);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].len(), 2);
    }

    proptest! {
        #[test]
        fn removal_is_subset_and_seeded(
            bits in proptest::collection::vec(proptest::bool::weighted(0.3), 900),
            fraction in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let pixels = bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
            let img = ViewImage::from_pixels(30, 30, pixels, ImageKind::Edge).unwrap();
            let a = random_edge_removal(&img, fraction, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = random_edge_removal(&img, fraction, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(&a, &b);
            for (src, dst) in img.pixels.iter().zip(&a.pixels) {
                prop_assert!(*dst == 0 || *src == 255);
            }
            let target = (fraction * img.count_on() as f64).round() as usize;
            prop_assert_eq!(img.count_on() - a.count_on(), target);
        }
    }
}
