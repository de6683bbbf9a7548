//! Orthonormal fast Walsh-Hadamard transform.
//!
//! The transform is the Sylvester-ordered Hadamard matrix scaled by
//! `d^{-1/2}`, so it is symmetric and its own inverse. Rows of a tensor are
//! transformed independently (right multiplication `X·H`).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor2D;

/// Largest order [`naive_hadamard`] will materialise.
pub const MAX_DENSE_ORDER: usize = 1 << 14;

/// A power-of-two transform length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HadamardSize(usize);

impl HadamardSize {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 || !d.is_power_of_two() {
            return Err(Error::NotPowerOfTwo { len: d });
        }
        Ok(Self(d))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// In-place unnormalised butterfly over a power-of-two slice.
#[inline]
fn butterfly(v: &mut [f64]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// Applies the orthonormal transform to `v` in place.
pub fn fwht_in_place(v: &mut [f64]) -> Result<()> {
    let n = HadamardSize::new(v.len())?.get();
    butterfly(v);
    let norm = 1.0 / (n as f64).sqrt();
    v.iter_mut().for_each(|x| *x *= norm);
    Ok(())
}

/// Returns `H·v` for the orthonormal Sylvester Hadamard matrix.
pub fn fwht_vector(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    fwht_in_place(&mut out)?;
    Ok(out)
}

/// Rows below this count are transformed on the calling thread.
const PAR_MIN_ROWS: usize = 64;

/// Transforms every row of `x`; equals `X·H`.
pub fn fwht_rows(x: &Tensor2D) -> Result<Tensor2D> {
    let d = HadamardSize::new(x.cols())?.get();
    let norm = 1.0 / (d as f64).sqrt();
    let mut out = x.clone();
    let kernel = |row: &mut [f64]| {
        butterfly(row);
        row.iter_mut().for_each(|v| *v *= norm);
    };
    if x.rows() >= PAR_MIN_ROWS {
        // Rows are independent and each row's arithmetic is fixed, so the
        // result does not depend on scheduling.
        out.rows_mut().collect::<Vec<_>>().into_par_iter().for_each(kernel);
    } else {
        out.rows_mut().for_each(kernel);
    }
    Ok(out)
}

/// Single-threaded variant of [`fwht_rows`].
pub fn fwht_rows_serial(x: &Tensor2D) -> Result<Tensor2D> {
    let d = HadamardSize::new(x.cols())?.get();
    let norm = 1.0 / (d as f64).sqrt();
    let mut out = x.clone();
    for row in out.rows_mut() {
        butterfly(row);
        row.iter_mut().for_each(|v| *v *= norm);
    }
    Ok(out)
}

/// Dense orthonormal Sylvester Hadamard matrix, built by the block recursion
/// `H_2n = [[H_n, H_n], [H_n, -H_n]] / sqrt(2)`.
pub fn naive_hadamard(size: HadamardSize) -> Result<Tensor2D> {
    let d = size.get();
    if d > MAX_DENSE_ORDER {
        return Err(Error::HadamardTooLarge(d));
    }
    let mut h = vec![1.0_f64];
    let mut n = 1;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    while n < d {
        let m = 2 * n;
        let mut next = vec![0.0; m * m];
        for i in 0..n {
            for j in 0..n {
                let v = h[i * n + j] * r;
                next[i * m + j] = v;
                next[i * m + j + n] = v;
                next[(i + n) * m + j] = v;
                next[(i + n) * m + j + n] = -v;
            }
        }
        h = next;
        n = m;
    }
    Tensor2D::new(d, d, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::tensor::matmul;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeededRng::new(seed, 0);
        (0..n).map(|_| rng.standard_normal()).collect()
    }

    #[test]
    fn small_vectors() {
        assert_eq!(fwht_vector(&[1.0, 1.0, 1.0, 1.0]).unwrap(), vec![2.0, 0.0, 0.0, 0.0]);
        assert_eq!(fwht_vector(&[1.0, 0.0, 0.0, 0.0]).unwrap(), vec![0.5; 4]);
        assert_eq!(fwht_vector(&[3.5]).unwrap(), vec![3.5]);
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(fwht_vector(&[1.0; 6]), Err(Error::NotPowerOfTwo { len: 6 })));
        assert!(matches!(fwht_vector(&[]), Err(Error::NotPowerOfTwo { len: 0 })));
        let x = Tensor2D::zeros(2, 12);
        assert!(fwht_rows(&x).is_err());
        assert!(HadamardSize::new(3).is_err());
    }

    #[test]
    fn dense_small_orders() {
        let h1 = naive_hadamard(HadamardSize::new(1).unwrap()).unwrap();
        assert_eq!(h1.data(), &[1.0]);
        let h2 = naive_hadamard(HadamardSize::new(2).unwrap()).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(h2.data(), &[r, r, r, -r]);
        let h8 = naive_hadamard(HadamardSize::new(8).unwrap()).unwrap();
        let id = matmul(&h8, &h8).unwrap();
        assert!(id.sub(&Tensor2D::identity(8)).unwrap().max_abs() < 1e-12);
        assert!(matches!(
            naive_hadamard(HadamardSize::new(1 << 15).unwrap()),
            Err(Error::HadamardTooLarge(_))
        ));
    }

    #[test]
    fn vector_matches_dense_256() {
        let v = random_vec(256, 9);
        let h = naive_hadamard(HadamardSize::new(256).unwrap()).unwrap();
        let dense = matmul(&h, &Tensor2D::new(256, 1, v.clone()).unwrap()).unwrap();
        let fast = fwht_vector(&v).unwrap();
        for (a, b) in fast.iter().zip(dense.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rows_match_dense_and_involute() {
        let mut rng = SeededRng::new(5, 0);
        let x = Tensor2D::from_fn(16, 64, |_, _| rng.standard_normal()).unwrap();
        let h = naive_hadamard(HadamardSize::new(64).unwrap()).unwrap();
        let fast = fwht_rows(&x).unwrap();
        assert!(fast.sub(&matmul(&x, &h).unwrap()).unwrap().max_abs() < 1e-10);
        let back = fwht_rows(&fast).unwrap();
        assert!(back.sub(&x).unwrap().max_abs() < 1e-10);

        let one = Tensor2D::new(1, 64, x.row(0).to_vec()).unwrap();
        assert_eq!(fwht_rows(&one).unwrap().data(), fwht_vector(x.row(0)).unwrap().as_slice());
    }

    #[test]
    fn parallel_and_serial_agree_bitwise() {
        let mut rng = SeededRng::new(8, 0);
        let x = Tensor2D::from_fn(300, 128, |_, _| rng.standard_normal()).unwrap();
        assert_eq!(fwht_rows(&x).unwrap(), fwht_rows_serial(&x).unwrap());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pow2_vec() -> impl Strategy<Value = Vec<f64>> {
            (0u32..=12).prop_flat_map(|k| prop::collection::vec(-100.0f64..100.0, 1usize << k))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn parseval(v in pow2_vec()) {
                let n0: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                let out = fwht_vector(&v).unwrap();
                let n1: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((n0 - n1).abs() <= 1e-10 * n0.max(1e-300));
            }

            #[test]
            fn involution(v in pow2_vec()) {
                let back = fwht_vector(&fwht_vector(&v).unwrap()).unwrap();
                let scale = v.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
                for (a, b) in back.iter().zip(&v) {
                    prop_assert!((a - b).abs() <= 1e-10 * scale);
                }
            }

            #[test]
            fn linearity(k in 0u32..=10, a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
                let n = 1usize << k;
                let u = random_vec(n, seed);
                let w = random_vec(n, seed + 1);
                let comb: Vec<f64> = u.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
                let lhs = fwht_vector(&comb).unwrap();
                let fu = fwht_vector(&u).unwrap();
                let fw = fwht_vector(&w).unwrap();
                for i in 0..n {
                    prop_assert!((lhs[i] - (a * fu[i] + b * fw[i])).abs() <= 1e-10);
                }
            }
        }
    }
}
