//! Training targets derived from ground-truth instance and class maps.

use crate::label::LabelMap;
use crate::tensor::Tensor4;

/// Horizontal and vertical distance maps, `(1, 2, h, w)`.
///
/// Every instance gets signed per-pixel offsets from its centroid (mean pixel
/// coordinate). Negative offsets are divided by the largest negative
/// magnitude and positive offsets by the largest positive one, so each
/// instance spans `[-1, 1]` along each axis. Background is 0.
pub fn hv_maps(instances: &LabelMap) -> Tensor4 {
    let (h, w) = instances.dims();
    let k = instances.max_label() as usize;
    let mut sum = vec![(0.0f64, 0.0f64, 0usize); k + 1];
    for y in 0..h {
        for x in 0..w {
            let id = instances.get(y, x) as usize;
            if id > 0 {
                let s = &mut sum[id];
                s.0 += x as f64;
                s.1 += y as f64;
                s.2 += 1;
            }
        }
    }
    let centroid: Vec<(f64, f64)> = sum
        .iter()
        .map(|&(sx, sy, n)| {
            if n == 0 {
                (0.0, 0.0)
            } else {
                (sx / n as f64, sy / n as f64)
            }
        })
        .collect();

    // (min dx, max dx, min dy, max dy)
    let mut range = vec![(0.0f64, 0.0f64, 0.0f64, 0.0f64); k + 1];
    for y in 0..h {
        for x in 0..w {
            let id = instances.get(y, x) as usize;
            if id > 0 {
                let (cx, cy) = centroid[id];
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let r = &mut range[id];
                r.0 = r.0.min(dx);
                r.1 = r.1.max(dx);
                r.2 = r.2.min(dy);
                r.3 = r.3.max(dy);
            }
        }
    }

    let scale = |d: f64, lo: f64, hi: f64| {
        if d < 0.0 && lo < 0.0 {
            d / -lo
        } else if d > 0.0 && hi > 0.0 {
            d / hi
        } else {
            0.0
        }
    };
    let mut out = Tensor4::zeros([1, 2, h, w]);
    for y in 0..h {
        for x in 0..w {
            let id = instances.get(y, x) as usize;
            if id > 0 {
                let (cx, cy) = centroid[id];
                let r = range[id];
                out.set(0, 0, y, x, scale(x as f64 - cx, r.0, r.1));
                out.set(0, 1, y, x, scale(y as f64 - cy, r.2, r.3));
            }
        }
    }
    out
}

/// Converts an interleaved `h×w×3` RGB byte image to a `(1, 3, h, w)` tensor
/// centred on zero, with 0 and 255 mapping to -1 and 1.
pub fn image_to_tensor(rgb: &[u8], height: usize, width: usize) -> Tensor4 {
    assert_eq!(rgb.len(), height * width * 3, "rgb buffer length");
    Tensor4::from_fn([1, 3, height, width], |[_, c, y, x]| {
        rgb[(y * width + x) * 3 + c] as f64 / 127.5 - 1.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_instance_spans_unit_range() {
        let inst = LabelMap::from_fn(7, 7, |y, x| (y >= 1 && y <= 5 && x >= 2 && x <= 4) as u32);
        let hv = hv_maps(&inst);
        assert_eq!(hv.get(0, 0, 3, 2), -1.0);
        assert_eq!(hv.get(0, 0, 3, 4), 1.0);
        assert_eq!(hv.get(0, 0, 3, 3), 0.0);
        assert_eq!(hv.get(0, 1, 1, 3), -1.0);
        assert_eq!(hv.get(0, 1, 5, 3), 1.0);
        assert_eq!(hv.get(0, 1, 4, 3), 0.5);
        assert_eq!(hv.get(0, 0, 0, 0), 0.0);
        assert!(hv.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn single_pixel_instance_is_zero() {
        let mut inst = LabelMap::zeros(3, 3);
        inst.set(1, 1, 1);
        assert!(hv_maps(&inst).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn image_conversion_scales_channels() {
        let rgb = [255u8, 0, 51, 0, 255, 0];
        let t = image_to_tensor(&rgb, 1, 2);
        assert_eq!(t.get(0, 0, 0, 0), 1.0);
        assert_eq!(t.get(0, 1, 0, 0), -1.0);
        assert!((t.get(0, 2, 0, 0) + 0.6).abs() < 1e-15);
        assert_eq!(t.get(0, 1, 0, 1), 1.0);
    }
}
