//! Standalone D-PSGD reference on ring(n) with f_i(w) = (w - c_i)^2 / 2.
//!
//! Plain scalar arithmetic with no library code, so the frozen floor in the
//! acceptance suite is measured independently of the implementation under
//! test.

/// Max over nodes of |w_i - w*| after `rounds` rounds of `local_steps`
/// gradient steps followed by Metropolis-Hastings averaging.
pub fn ring_max_deviation(centers: &[f64], eta: f64, local_steps: usize, rounds: usize) -> f64 {
    let n = centers.len();
    assert!(n >= 3, "ring needs three nodes");
    let w_star = centers.iter().sum::<f64>() / n as f64;
    // every ring node has degree 2, so each MH weight is 1/(1+2)
    let off = 1.0 / 3.0;
    let diag = 1.0 - 2.0 * off;
    let mut w = vec![0.0f64; n];
    for _ in 0..rounds {
        for (wi, &c) in w.iter_mut().zip(centers) {
            for _ in 0..local_steps {
                *wi -= eta * (*wi - c);
            }
        }
        let prev = w.clone();
        for i in 0..n {
            let left = prev[(i + n - 1) % n];
            let right = prev[(i + 1) % n];
            w[i] = diag * prev[i] + off * left + off * right;
        }
    }
    w.iter().map(|wi| (wi - w_star).abs()).fold(0.0, f64::max)
}

/// Floor recorded from `ring_max_deviation(0..8, 0.05, 5, 500)`.
pub const RING8_FLOOR: f64 = 1.3081055150474117;
