use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Horizontal and vertical distance maps of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct HvMaps {
    pub height: usize,
    pub width: usize,
    pub horizontal: Vec<f64>,
    pub vertical: Vec<f64>,
}

impl HvMaps {
    /// Takes channels 0 (horizontal) and 1 (vertical) of batch item `n`.
    pub fn from_tensor(t: &Tensor4, n: usize) -> Result<Self> {
        if t.channels() != 2 || n >= t.batch() {
            return Err(Error::Invalid(format!(
                "hv tensor {:?} has no two-channel item {n}",
                t.shape()
            )));
        }
        let plane = t.height() * t.width();
        let item = t.item_slice(n);
        Ok(Self {
            height: t.height(),
            width: t.width(),
            horizontal: item[..plane].to_vec(),
            vertical: item[plane..].to_vec(),
        })
    }
}

/// 3×3 Sobel response with replicated borders; `along_x` differentiates
/// along columns.
fn sobel(map: &[f64], h: usize, w: usize, along_x: bool) -> Vec<f64> {
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        map[y * w + x]
    };
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let v = if along_x {
                (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                    - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1))
            } else {
                (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                    - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1))
            };
            out[y as usize * w + x as usize] = v;
        }
    }
    out
}

fn min_max_normalize(v: &mut [f64]) {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !(hi > lo) {
        v.fill(0.0);
        return;
    }
    let span = hi - lo;
    for x in v {
        *x = (*x - lo) / span;
    }
}

/// Per-pixel maximum of `|Sobel_x(horizontal)|` and `|Sobel_y(vertical)|`,
/// each min-max normalised to `[0, 1]` over the image first.
pub fn sobel_gradients(hv: &HvMaps) -> Vec<f64> {
    let (h, w) = (hv.height, hv.width);
    if h == 0 || w == 0 {
        return Vec::new();
    }
    let mut gx: Vec<f64> = sobel(&hv.horizontal, h, w, true).into_iter().map(f64::abs).collect();
    let mut gy: Vec<f64> = sobel(&hv.vertical, h, w, false).into_iter().map(f64::abs).collect();
    min_max_normalize(&mut gx);
    min_max_normalize(&mut gy);
    gx.iter().zip(&gy).map(|(a, b)| a.max(*b)).collect()
}
