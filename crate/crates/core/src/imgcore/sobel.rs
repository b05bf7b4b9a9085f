use super::Image;
use crate::error::{Error, Result};

/// Derivative order and aperture of a Sobel filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SobelParams {
    pub xorder: u8,
    pub yorder: u8,
    pub aperture: usize,
}

impl SobelParams {
    pub const DX: SobelParams = SobelParams {
        xorder: 1,
        yorder: 0,
        aperture: 3,
    };
    pub const DY: SobelParams = SobelParams {
        xorder: 0,
        yorder: 1,
        aperture: 3,
    };

    fn validate(&self) -> Result<()> {
        if self.xorder + self.yorder != 1 || self.xorder > 1 || self.yorder > 1 {
            return Err(Error::invalid(format!(
                "sobel supports first derivatives only, got xorder={} yorder={}",
                self.xorder, self.yorder
            )));
        }
        if self.aperture != 3 {
            return Err(Error::invalid(format!(
                "sobel aperture must be 3, got {}",
                self.aperture
            )));
        }
        Ok(())
    }

    /// Correlation kernel, row-major.
    pub fn kernel(&self) -> [[i32; 3]; 3] {
        if self.xorder == 1 {
            [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
        } else {
            [[-1, -2, -1], [0, 0, 0], [1, 2, 1]]
        }
    }
}

impl Default for SobelParams {
    fn default() -> Self {
        Self::DX
    }
}

/// Signed derivative image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gradient {
    pub width: usize,
    pub height: usize,
    pub data: Vec<i32>,
}

impl Gradient {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> i32 {
        self.data[y * self.width + x]
    }
}

/// 3x3 Sobel derivative with replicate-edge borders.
pub fn sobel(img: &Image, p: SobelParams) -> Result<Gradient> {
    p.validate()?;
    if !img.is_gray() {
        return Err(Error::invalid("sobel needs a single channel image"));
    }
    let (w, h) = (img.width(), img.height());
    if w < p.aperture || h < p.aperture {
        return Err(Error::invalid(format!(
            "image {w}x{h} smaller than {0}x{0} kernel",
            p.aperture
        )));
    }
    let src = img.data();
    let mut data = vec![0i32; w * h];
    let at = |x: usize, y: usize| src[y * w + x] as i32;
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            data[y * w + x] = if p.xorder == 1 {
                (at(xp, ym) - at(xm, ym)) + 2 * (at(xp, y) - at(xm, y)) + (at(xp, yp) - at(xm, yp))
            } else {
                (at(xm, yp) - at(xm, ym)) + 2 * (at(x, yp) - at(x, ym)) + (at(xp, yp) - at(xp, ym))
            };
        }
    }
    Ok(Gradient {
        width: w,
        height: h,
        data,
    })
}
