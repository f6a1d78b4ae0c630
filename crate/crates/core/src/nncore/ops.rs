use rand::Rng;

use super::{dim_err, NnError};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Dot product with four partial sums.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out += W x` for a row-major `W` with `x.len()` columns.
pub fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), cols * out.len());
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `dx += W^T dy`.
pub fn matvec_t_acc(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let cols = dx.len();
    debug_assert_eq!(w.len(), cols * dy.len());
    for (&g, row) in dy.iter().zip(w.chunks_exact(cols)) {
        if g == 0.0 {
            continue;
        }
        for (d, &wv) in dx.iter_mut().zip(row) {
            *d += g * wv;
        }
    }
}

/// `dW += dy x^T`.
pub fn outer_acc(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    debug_assert_eq!(dw.len(), cols * dy.len());
    for (&g, row) in dy.iter().zip(dw.chunks_exact_mut(cols)) {
        if g == 0.0 {
            continue;
        }
        for (d, &xv) in row.iter_mut().zip(x) {
            *d += g * xv;
        }
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[target]` and its gradient `softmax - one_hot(target)`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>), NnError> {
    if target >= logits.len() {
        return Err(NnError::IndexOutOfRange { index: target, len: logits.len() });
    }
    let logp = log_softmax(logits);
    let mut grad: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    grad[target] -= 1.0;
    Ok((-logp[target], grad))
}

/// Inverted dropout mask: kept units carry `1/(1-p)`, dropped units 0.
/// Outside training the mask is all ones.
pub fn dropout_mask<R: Rng>(length: usize, probability: f64, training: bool, rng: &mut R) -> Result<Vec<f64>, NnError> {
    if !(0.0..1.0).contains(&probability) {
        return Err(NnError::InvalidProbability(probability));
    }
    if !training || probability == 0.0 {
        return Ok(vec![1.0; length]);
    }
    let keep = 1.0 / (1.0 - probability);
    Ok((0..length).map(|_| if rng.gen::<f64>() < probability { 0.0 } else { keep }).collect())
}

pub(crate) fn check_len(what: &str, expected: usize, got: usize) -> Result<(), NnError> {
    if expected != got {
        return Err(dim_err(format!("{what} of length {expected}"), got));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_loss_is_ln_v() {
        for v in [2usize, 3, 7] {
            let (loss, grad) = softmax_cross_entropy(&vec![0.3; v], 1).unwrap();
            assert!((loss - (v as f64).ln()).abs() < 1e-12);
            for (i, g) in grad.iter().enumerate() {
                let expected = if i == 1 { 1.0 / v as f64 - 1.0 } else { 1.0 / v as f64 };
                assert!((g - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn large_logits_are_stable() {
        let (loss, grad) = softmax_cross_entropy(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.is_finite() && loss < 1e-12);
        assert!(grad.iter().all(|g| g.is_finite()));
        assert!(softmax_cross_entropy(&[0.0], 1).is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let logits: Vec<f64> = (0..6).map(|_| rng.gen_range(-20.0..20.0)).collect();
            let p = softmax(&logits);
            assert!(p.iter().all(|&x| x >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dropout_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(dropout_mask(10, 0.0, true, &mut rng).unwrap().iter().all(|&m| m == 1.0));
        assert!(dropout_mask(10, 0.9, false, &mut rng).unwrap().iter().all(|&m| m == 1.0));
        assert!(dropout_mask(10, 1.0, true, &mut rng).is_err());
        let mask = dropout_mask(100_000, 0.5, true, &mut rng).unwrap();
        let mean = mask.iter().sum::<f64>() / mask.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
        let a = dropout_mask(32, 0.5, true, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = dropout_mask(32, 0.5, true, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matvec_helpers_agree() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut y = [0.0; 2];
        matvec_acc(&w, &[1.0, 0.0, -1.0], &mut y);
        assert_eq!(y, [-2.0, -2.0]);
        let mut dx = [0.0; 3];
        matvec_t_acc(&w, &[1.0, 1.0], &mut dx);
        assert_eq!(dx, [5.0, 7.0, 9.0]);
        let mut dw = [0.0; 6];
        outer_acc(&mut dw, &[1.0, 2.0], &[1.0, 0.0, 3.0]);
        assert_eq!(dw, [1.0, 0.0, 3.0, 2.0, 0.0, 6.0]);
    }
}
