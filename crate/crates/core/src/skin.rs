//! Hue-threshold skin gate for cascade detections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{Image, Rect};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkinParams {
    /// Hue band in degrees; `hue_low > hue_high` wraps through 0.
    pub hue_low: f64,
    pub hue_high: f64,
    pub sat_min: f64,
    pub val_min: f64,
    pub min_skin_fraction: f64,
}

impl Default for SkinParams {
    fn default() -> Self {
        SkinParams {
            hue_low: 340.0,
            hue_high: 50.0,
            sat_min: 0.15,
            val_min: 0.15,
            min_skin_fraction: 0.4,
        }
    }
}

impl SkinParams {
    pub fn validate(&self) -> Result<()> {
        let deg = |h: f64| (0.0..=360.0).contains(&h);
        let frac = |f: f64| (0.0..=1.0).contains(&f);
        if !deg(self.hue_low)
            || !deg(self.hue_high)
            || !frac(self.sat_min)
            || !frac(self.val_min)
            || !frac(self.min_skin_fraction)
        {
            return Err(Error::invalid(format!("skin parameters out of range: {self:?}")));
        }
        Ok(())
    }

    fn hue_in_band(&self, h: f64) -> bool {
        if self.hue_low <= self.hue_high {
            h >= self.hue_low && h <= self.hue_high
        } else {
            h >= self.hue_low || h <= self.hue_high
        }
    }

    pub fn is_skin(&self, rgb: [u8; 3]) -> bool {
        let hsv = rgb_to_hue(rgb[0], rgb[1], rgb[2]);
        match hsv.hue {
            Some(h) => self.hue_in_band(h) && hsv.saturation >= self.sat_min && hsv.value >= self.val_min,
            None => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hsv {
    /// Degrees in `[0, 360)`, `None` for achromatic pixels.
    pub hue: Option<f64>,
    pub saturation: f64,
    pub value: f64,
}

pub fn rgb_to_hue(r: u8, g: u8, b: u8) -> Hsv {
    let (rf, gf, bf) = (r as f64, g as f64, b as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let value = max as f64 / 255.0;
    if max == min {
        return Hsv {
            hue: None,
            saturation: 0.0,
            value,
        };
    }
    let delta = (max - min) as f64;
    let h = if max == r {
        60.0 * ((gf - bf) / delta)
    } else if max == g {
        60.0 * ((bf - rf) / delta) + 120.0
    } else {
        60.0 * ((rf - gf) / delta) + 240.0
    };
    let hue = if h < 0.0 { h + 360.0 } else { h };
    Hsv {
        hue: Some(hue),
        saturation: delta / max as f64,
        value,
    }
}

/// Skin pixels in `region` and their fraction of its area.
#[derive(Clone, Debug, PartialEq)]
pub struct SkinMask {
    pub region: Rect,
    /// Row-major over the region.
    pub mask: Vec<bool>,
    pub fraction: f64,
}

pub fn skin_fraction(img: &Image, region: &Rect, p: &SkinParams) -> Result<SkinMask> {
    if region.is_empty() {
        return Err(Error::invalid("empty skin region"));
    }
    if !img.contains(region) {
        return Err(Error::OutOfBounds(format!(
            "region {region:?} outside {}x{} frame",
            img.width(),
            img.height()
        )));
    }
    let mut mask = Vec::with_capacity(region.area() as usize);
    for y in region.y..region.bottom() {
        for x in region.x..region.right() {
            mask.push(p.is_skin(img.pixel_rgb(x as usize, y as usize)));
        }
    }
    let count = mask.iter().filter(|&&m| m).count();
    Ok(SkinMask {
        region: *region,
        fraction: count as f64 / mask.len() as f64,
        mask,
    })
}

pub fn verify_face(img: &Image, bbox: &Rect, p: &SkinParams) -> Result<bool> {
    Ok(skin_fraction(img, bbox, p)?.fraction >= p.min_skin_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn patch(w: usize, h: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Image {
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                data.extend_from_slice(&f(x, y));
            }
        }
        Image::rgb(w, h, data).unwrap()
    }

    #[test]
    fn primary_hues() {
        assert_eq!(rgb_to_hue(255, 0, 0).hue, Some(0.0));
        assert_eq!(rgb_to_hue(0, 255, 0).hue, Some(120.0));
        assert_eq!(rgb_to_hue(0, 0, 255).hue, Some(240.0));
        let gray = rgb_to_hue(128, 128, 128);
        assert_eq!(gray.hue, None);
        assert!(!SkinParams::default().is_skin([128, 128, 128]));
    }

    #[test]
    fn skin_tone_patch_is_all_skin() {
        // hue 60 * 30 / 90 = 20 deg, sat 90 / 220, val 220 / 255
        let hsv = rgb_to_hue(220, 160, 130);
        assert!((hsv.hue.unwrap() - 20.0).abs() < 1e-12);
        let img = patch(8, 6, |_, _| [220, 160, 130]);
        let m = skin_fraction(&img, &Rect::new(0, 0, 8, 6), &SkinParams::default()).unwrap();
        assert_eq!(m.fraction, 1.0);
    }

    #[test]
    fn blue_patch_is_not_skin() {
        let img = patch(8, 6, |_, _| [0, 0, 255]);
        let m = skin_fraction(&img, &Rect::new(0, 0, 8, 6), &SkinParams::default()).unwrap();
        assert_eq!(m.fraction, 0.0);
    }

    #[test]
    fn half_and_half() {
        let img = patch(8, 6, |x, _| if x < 4 { [220, 160, 130] } else { [0, 0, 255] });
        let m = skin_fraction(&img, &Rect::new(0, 0, 8, 6), &SkinParams::default()).unwrap();
        assert_eq!(m.fraction, 0.5);
    }

    #[test]
    fn verify_threshold_boundary() {
        let p = SkinParams::default();
        // 2 of 5 columns skin: exactly 0.4
        let img = patch(5, 4, |x, _| if x < 2 { [220, 160, 130] } else { [0, 0, 255] });
        let r = Rect::new(0, 0, 5, 4);
        assert_eq!(skin_fraction(&img, &r, &p).unwrap().fraction, 0.4);
        assert!(verify_face(&img, &r, &p).unwrap());
        assert!(verify_face(&img, &Rect::new(0, 0, 2, 4), &p).unwrap());
        assert!(!verify_face(&img, &Rect::new(2, 0, 3, 4), &p).unwrap());
    }

    #[test]
    fn empty_region_rejected() {
        let img = patch(4, 4, |_, _| [1, 2, 3]);
        assert!(matches!(
            skin_fraction(&img, &Rect::new(1, 1, 0, 3), &SkinParams::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    proptest! {
        #[test]
        fn fraction_matches_mask_and_permutation(
            px in proptest::collection::vec(any::<[u8; 3]>(), 24),
            rot in 0usize..24,
        ) {
            let p = SkinParams::default();
            let img = patch(6, 4, |x, y| px[y * 6 + x]);
            let m = skin_fraction(&img, &Rect::new(0, 0, 6, 4), &p).unwrap();
            let count = m.mask.iter().filter(|&&b| b).count();
            prop_assert_eq!(m.fraction, count as f64 / 24.0);
            let shifted = patch(6, 4, |x, y| px[(y * 6 + x + rot) % 24]);
            let m2 = skin_fraction(&shifted, &Rect::new(0, 0, 6, 4), &p).unwrap();
            prop_assert_eq!(m.fraction, m2.fraction);
        }

        #[test]
        fn widening_band_never_lowers_fraction(
            px in proptest::collection::vec(any::<[u8; 3]>(), 16),
            lo in 0.0f64..180.0, hi in 0.0f64..180.0, widen in 0.0f64..60.0,
        ) {
            let img = patch(4, 4, |x, y| px[y * 4 + x]);
            let r = Rect::new(0, 0, 4, 4);
            let (lo, hi) = (lo.min(hi), lo.max(hi));
            let narrow = SkinParams { hue_low: lo + 60.0, hue_high: hi + 60.0, ..SkinParams::default() };
            let wide = SkinParams { hue_low: (lo + 60.0 - widen).max(0.0), hue_high: (hi + 60.0 + widen).min(360.0), ..narrow.clone() };
            let a = skin_fraction(&img, &r, &narrow).unwrap().fraction;
            let b = skin_fraction(&img, &r, &wide).unwrap().fraction;
            prop_assert!(b >= a);
        }
    }
}
