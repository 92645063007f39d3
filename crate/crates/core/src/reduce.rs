//! Deterministic pairwise summation.
//!
//! Every sum in the crate goes through [`tree_sum`] or [`par_tree_sum`]. The
//! reduction tree depends only on the length of the index range: ranges are
//! halved at `len / 2` until at most [`LEAF`] elements remain, which are then
//! added left to right. The parallel variant hands subtrees to `rayon::join`
//! but never changes the tree, so serial and parallel results are
//! bit-identical for any thread count.

use std::ops::Add;

/// Largest range summed sequentially.
pub const LEAF: usize = 32;

/// Ranges at least this long are split across rayon workers.
const PAR_MIN: usize = 1 << 12;

pub fn tree_sum<T, F>(len: usize, f: F) -> T
where
    T: Copy + Default + Add<Output = T>,
    F: Fn(usize) -> T,
{
    tree_range(0, len, &f)
}

fn tree_range<T, F>(lo: usize, hi: usize, f: &F) -> T
where
    T: Copy + Default + Add<Output = T>,
    F: Fn(usize) -> T,
{
    if hi - lo <= LEAF {
        let mut acc = T::default();
        for i in lo..hi {
            acc = acc + f(i);
        }
        return acc;
    }
    let mid = lo + (hi - lo) / 2;
    tree_range(lo, mid, f) + tree_range(mid, hi, f)
}

/// Same tree as [`tree_sum`], evaluated on the rayon pool.
pub fn par_tree_sum<T, F>(len: usize, f: F) -> T
where
    T: Copy + Default + Add<Output = T> + Send,
    F: Fn(usize) -> T + Sync,
{
    par_range(0, len, &f)
}

fn par_range<T, F>(lo: usize, hi: usize, f: &F) -> T
where
    T: Copy + Default + Add<Output = T> + Send,
    F: Fn(usize) -> T + Sync,
{
    if hi - lo < PAR_MIN {
        return tree_range(lo, hi, f);
    }
    let mid = lo + (hi - lo) / 2;
    let (a, b) = rayon::join(|| par_range(lo, mid, f), || par_range(mid, hi, f));
    a + b
}

pub fn sum_slice<T>(values: &[T]) -> T
where
    T: Copy + Default + Add<Output = T>,
{
    tree_sum(values.len(), |i| values[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn serial_and_parallel_agree_bitwise() {
        let vals: Vec<f64> = (0..100_003).map(|i| ((i as f64) * 0.731).sin() * 1e3).collect();
        let a = tree_sum(vals.len(), |i| vals[i]);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let b = pool.install(|| par_tree_sum(vals.len(), |i| vals[i]));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn complex_and_empty() {
        let z: Complex64 = tree_sum(0, |_| Complex64::new(1.0, 1.0));
        assert_eq!(z, Complex64::new(0.0, 0.0));
        let s: Complex64 = tree_sum(10, |i| Complex64::new(i as f64, -(i as f64)));
        assert_eq!(s, Complex64::new(45.0, -45.0));
    }
}
