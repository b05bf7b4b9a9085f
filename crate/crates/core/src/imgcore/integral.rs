use super::{Image, Rect};
use crate::error::{Error, Result};

/// Summed-area table with a zero first row and column.
///
/// Entry `(x, y)` holds the sum of all source samples at coordinates
/// strictly less than `x` and `y`, so the table is `(w + 1) x (h + 1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    stride: usize,
    table: Vec<u64>,
}

impl IntegralImage {
    fn build(img: &Image, f: impl Fn(u8) -> u64) -> Result<Self> {
        if !img.is_gray() {
            return Err(Error::invalid(format!(
                "integral image needs a single channel, got {}",
                img.channels()
            )));
        }
        let (w, h) = (img.width(), img.height());
        let stride = w + 1;
        let mut table = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let row = &img.data()[y * w..(y + 1) * w];
            let mut run = 0u64;
            for (x, &v) in row.iter().enumerate() {
                run += f(v);
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + run;
            }
        }
        Ok(IntegralImage {
            width: w,
            height: h,
            stride,
            table,
        })
    }

    /// Width of the source image.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Height of the source image.
    pub fn height(&self) -> usize {
        self.height
    }

    /// Table entry; `x <= width`, `y <= height`.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u64 {
        self.table[y * self.stride + x]
    }

    /// Sum over `r` from exactly four table lookups.
    pub fn rect_sum(&self, r: &Rect) -> Result<u64> {
        if r.right() as usize > self.width || r.bottom() as usize > self.height {
            return Err(Error::OutOfBounds(format!(
                "rect {r:?} outside {}x{} image",
                self.width, self.height
            )));
        }
        Ok(self.sum(
            r.x as usize,
            r.y as usize,
            r.right() as usize,
            r.bottom() as usize,
        ))
    }

    /// Sum over `[x0, x1) x [y0, y1)` without bounds checking beyond the
    /// slice index.
    #[inline]
    pub fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> u64 {
        let s = self.stride;
        let t = &self.table;
        // D + A - (B + C); never underflows for non-negative sources
        (t[y1 * s + x1] + t[y0 * s + x0]) - (t[y0 * s + x1] + t[y1 * s + x0])
    }

    /// Sum over a rectangle given as flat offsets from a window origin.
    #[inline]
    pub(crate) fn sum_at(&self, base: usize, offs: &[usize; 4]) -> u64 {
        let t = &self.table;
        (t[base + offs[3]] + t[base + offs[0]]) - (t[base + offs[1]] + t[base + offs[2]])
    }

    pub(crate) fn stride(&self) -> usize {
        self.stride
    }
}

/// Integral image of the gray samples.
pub fn integral(img: &Image) -> Result<IntegralImage> {
    IntegralImage::build(img, |v| v as u64)
}

/// Integral image of squared gray samples (window variance).
pub fn integral_squared(img: &Image) -> Result<IntegralImage> {
    IntegralImage::build(img, |v| (v as u64) * (v as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_entry(img: &Image, x: usize, y: usize) -> u64 {
        let mut s = 0;
        for yy in 0..y {
            for xx in 0..x {
                s += img.luma(xx, yy) as u64;
            }
        }
        s
    }

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |_, _| rng.gen())
    }

    #[test]
    fn zero_image_gives_zero_table() {
        let ii = integral(&Image::filled(4, 4, 1, 0)).unwrap();
        for y in 0..=4 {
            for x in 0..=4 {
                assert_eq!(ii.at(x, y), 0);
            }
        }
    }

    #[test]
    fn ones_bottom_right_is_pixel_count() {
        let ii = integral(&Image::filled(2, 2, 1, 1)).unwrap();
        assert_eq!(ii.at(2, 2), 4);
        assert_eq!(ii.rect_sum(&Rect::new(0, 0, 2, 2)).unwrap(), 4);
    }

    #[test]
    fn zero_area_rect_is_zero() {
        let ii = integral(&Image::filled(5, 5, 1, 200)).unwrap();
        assert_eq!(ii.rect_sum(&Rect::new(2, 3, 0, 2)).unwrap(), 0);
        assert_eq!(ii.rect_sum(&Rect::new(2, 3, 2, 0)).unwrap(), 0);
    }

    #[test]
    fn every_entry_matches_naive_on_8x8() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 8, 8);
        let ii = integral(&img).unwrap();
        for y in 0..=8 {
            for x in 0..=8 {
                assert_eq!(ii.at(x, y), naive_entry(&img, x, y), "entry ({x},{y})");
            }
        }
    }

    #[test]
    fn out_of_bounds_rect_rejected() {
        let ii = integral(&Image::filled(4, 4, 1, 1)).unwrap();
        assert!(matches!(
            ii.rect_sum(&Rect::new(2, 2, 3, 1)),
            Err(Error::OutOfBounds(_))
        ));
    }

    #[test]
    fn rgb_rejected() {
        assert!(integral(&Image::filled(2, 2, 3, 1)).is_err());
    }

    #[test]
    fn table_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = random_image(&mut rng, 13, 9);
        let ii = integral(&img).unwrap();
        for y in 0..=9 {
            for x in 0..=13 {
                if x > 0 {
                    assert!(ii.at(x, y) >= ii.at(x - 1, y));
                }
                if y > 0 {
                    assert!(ii.at(x, y) >= ii.at(x, y - 1));
                }
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn adjacent_rects_add(
            seed in 0u64..1000,
            x in 0u32..10, y in 0u32..10, w1 in 0u32..6, w2 in 0u32..6, h in 0u32..8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = random_image(&mut rng, 24, 20);
            let ii = integral(&img).unwrap();
            let a = Rect::new(x, y, w1, h);
            let b = Rect::new(x + w1, y, w2, h);
            let ab = Rect::new(x, y, w1 + w2, h);
            proptest::prop_assert_eq!(
                ii.rect_sum(&ab).unwrap(),
                ii.rect_sum(&a).unwrap() + ii.rect_sum(&b).unwrap()
            );
        }
    }
}
