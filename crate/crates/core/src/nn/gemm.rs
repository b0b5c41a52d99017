//! Safe wrapper over `matrixmultiply::dgemm` for row-major slices.

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Trans {
    No,
    Yes,
}

/// `c = a · b + beta · c`, where `a` is `m×k` and `b` is `k×n` after the
/// requested transposes. Stored matrices are row-major and contiguous.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: Trans, b: &[f64], tb: Trans, beta: f64, c: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = match ta {
        Trans::No => (k as isize, 1),
        Trans::Yes => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Trans::No => (n as isize, 1),
        Trans::Yes => (1, k as isize),
    };
    // SAFETY: the asserts above guarantee every index the kernel touches is in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transposes_match_naive_product() {
        let (m, k, n) = (3, 4, 2);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let mut want = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for l in 0..k {
                    want[i * n + j] += a[i * k + l] * b[l * n + j];
                }
            }
        }
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, &a, Trans::No, &b, Trans::No, 0.0, &mut c);
        assert_eq!(c, want);

        let mut at = vec![0.0; m * k];
        for i in 0..m {
            for l in 0..k {
                at[l * m + i] = a[i * k + l];
            }
        }
        let mut bt = vec![0.0; k * n];
        for l in 0..k {
            for j in 0..n {
                bt[j * k + l] = b[l * n + j];
            }
        }
        let mut c2 = vec![0.0; m * n];
        gemm(m, k, n, &at, Trans::Yes, &bt, Trans::Yes, 0.0, &mut c2);
        for (x, y) in c2.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
