//! Halton points with a random (Cranley–Patterson) shift.

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// Point `index` of the `dim`-dimensional Halton sequence (index 0 is skipped
/// since it is the origin). `dim` is at most 16.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton supports at most {} dimensions", PRIMES.len());
    PRIMES[..dim].iter().map(|&p| radical_inverse(index + 1, p)).collect()
}

/// Halton point shifted modulo 1.
pub(crate) fn shifted_halton(index: u64, shift: &[f64]) -> Vec<f64> {
    halton(index, shift.len())
        .into_iter()
        .zip(shift)
        .map(|(h, s)| (h + s).fract())
        .collect()
}
