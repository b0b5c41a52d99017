//! Dense rank-4 tensors in `(batch, channel, height, width)` order.

use crate::error::ShapeError;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self, ShapeError> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(ShapeError::DataLength {
                shape,
                found: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.iter().product());
        for n in 0..shape[0] {
            for c in 0..shape[1] {
                for y in 0..shape[2] {
                    for x in 0..shape[3] {
                        data.push(f([n, c, y, x]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f64) {
        let i = self.offset(n, c, y, x);
        self.data[i] = v;
    }

    /// Number of values in one batch item.
    pub fn item_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn item_slice(&self, n: usize) -> &[f64] {
        let l = self.item_len();
        &self.data[n * l..(n + 1) * l]
    }

    pub fn item_slice_mut(&mut self, n: usize) -> &mut [f64] {
        let l = self.item_len();
        &mut self.data[n * l..(n + 1) * l]
    }

    /// Copies batch item `n` into its own single-item tensor.
    pub fn item(&self, n: usize) -> Tensor4 {
        Tensor4 {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.item_slice(n).to_vec(),
        }
    }

    /// Concatenates tensors along the batch axis.
    pub fn stack(items: &[Tensor4]) -> Result<Tensor4, ShapeError> {
        let Some(first) = items.first() else {
            return Ok(Tensor4::zeros([0, 0, 0, 0]));
        };
        let [_, c, h, w] = first.shape;
        let mut data = Vec::with_capacity(items.iter().map(|t| t.len()).sum());
        let mut n = 0;
        for t in items {
            check_dim("channels", c, t.shape[1])?;
            check_dim("height", h, t.shape[2])?;
            check_dim("width", w, t.shape[3])?;
            data.extend_from_slice(&t.data);
            n += t.shape[0];
        }
        Ok(Tensor4 {
            shape: [n, c, h, w],
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor4 {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<(), ShapeError> {
    if expected != found {
        return Err(ShapeError::Mismatch { what, expected, found });
    }
    Ok(())
}

pub(crate) fn check_same_shape(a: &Tensor4, b: &Tensor4) -> Result<(), ShapeError> {
    check_dim("batch", a.shape[0], b.shape[0])?;
    check_dim("channels", a.shape[1], b.shape[1])?;
    check_dim("height", a.shape[2], b.shape[2])?;
    check_dim("width", a.shape[3], b.shape[3])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_length_is_checked() {
        assert!(Tensor4::from_vec([1, 2, 2, 2], vec![0.0; 8]).is_ok());
        assert!(matches!(
            Tensor4::from_vec([1, 2, 2, 2], vec![0.0; 7]),
            Err(ShapeError::DataLength { found: 7, .. })
        ));
    }

    #[test]
    fn stack_and_item_agree() {
        let a = Tensor4::from_fn([1, 2, 3, 3], |[_, c, y, x]| (c * 9 + y * 3 + x) as f64);
        let b = a.map(|v| -v);
        let s = Tensor4::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), [2, 2, 3, 3]);
        assert_eq!(s.item(0), a);
        assert_eq!(s.item(1), b);
        assert_eq!(s.get(1, 1, 2, 0), -15.0);
    }

    #[test]
    fn stack_rejects_channel_mismatch() {
        let a = Tensor4::zeros([1, 2, 3, 3]);
        let b = Tensor4::zeros([1, 3, 3, 3]);
        let err = Tensor4::stack(&[a, b]).unwrap_err();
        assert_eq!(
            err,
            ShapeError::Mismatch {
                what: "channels",
                expected: 2,
                found: 3
            }
        );
    }
}
