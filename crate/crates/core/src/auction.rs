//! Sealed single-bid alternation auction with uniform valuations and linear
//! bids `b_i(v) = B_i v`. The highest bidder responds first and therefore is
//! the one that alternates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const INVERSE_TOL: f64 = 1e-13;

/// Probability that each participant submits the highest bid.
///
/// `W_m = \int_0^1 prod_{j != m} min(1, B_m v / B_j) dv`, integrated exactly
/// piece by piece since the integrand is a monomial between breakpoints.
pub fn win_probabilities(b: &[f64]) -> Result<Vec<f64>> {
    check_bids(b)?;
    Ok((0..b.len()).map(|m| win_probability(b, m)).collect())
}

fn win_probability(b: &[f64], m: usize) -> f64 {
    let bm = b[m];
    let mut cuts: Vec<f64> = b
        .iter()
        .enumerate()
        .filter(|&(j, &bj)| j != m && bj < bm)
        .map(|(_, &bj)| bj / bm)
        .collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        // factors still below their cap on this segment contribute (B_m / B_j) v
        let mut coef = 1.0;
        let mut k = 0i32;
        for (j, &bj) in b.iter().enumerate() {
            if j != m && bm * mid < bj {
                coef *= bm / bj;
                k += 1;
            }
        }
        total += coef * (hi.powi(k + 1) - lo.powi(k + 1)) / f64::from(k + 1);
    }
    total
}

/// Bid scales reproducing the target probabilities, largest target anchored at 1.
pub fn bids_from_probabilities(w: &[f64]) -> Result<Vec<f64>> {
    if w.is_empty() {
        return Err(Error::InfeasibleAuction("no participants".into()));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InfeasibleAuction(format!("probabilities sum to {sum}")));
    }
    if let Some(i) = w.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::InfeasibleAuction(format!(
            "participant {i} has probability {}; a zero bid cannot be represented",
            w[i]
        )));
    }
    let n = w.len();
    let anchor = (0..n).max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a))).unwrap();
    // start from the proportional guess and refine coordinate-wise by bisection
    let mut b: Vec<f64> = w.iter().map(|&x| x / w[anchor]).collect();
    for _ in 0..2000 {
        let mut worst = 0.0f64;
        for i in 0..n {
            if i == anchor {
                continue;
            }
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                b[i] = mid;
                if win_probability(&b, i) < w[i] {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-16 {
                    break;
                }
            }
            b[i] = 0.5 * (lo + hi);
        }
        for i in 0..n {
            worst = worst.max((win_probability(&b, i) - w[i]).abs());
        }
        if worst < INVERSE_TOL {
            break;
        }
    }
    Ok(b)
}

/// Alternation response delay for participant `m`: `1 - beta`
/// with `beta` uniform on `(0, B_m]`.
pub fn bid_response_delay(w: &[f64], m: usize, rng_seed: u64) -> Result<f64> {
    let b = bids_from_probabilities(w)?;
    if m >= b.len() {
        return Err(Error::InvalidParameter(format!("participant {m} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(sample_delay(b[m], &mut rng))
}

pub(crate) fn sample_delay<R: Rng>(bm: f64, rng: &mut R) -> f64 {
    // gen::<f64>() is in [0,1); 1 - u lies in (0,1]
    let beta = bm * (1.0 - rng.gen::<f64>());
    1.0 - beta
}

/// Index of the participant whose delay expires first, ties by index.
pub fn first_to_alternate(delays: &[f64]) -> usize {
    let mut best = 0;
    for (i, &d) in delays.iter().enumerate() {
        if d < delays[best] {
            best = i;
        }
    }
    best
}

fn check_bids(b: &[f64]) -> Result<()> {
    if b.is_empty() {
        return Err(Error::InvalidParameter("empty bid profile".into()));
    }
    if b.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
        return Err(Error::InvalidParameter("bid scales must lie in (0, 1]".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn forward_examples() {
        assert_eq!(win_probabilities(&[1.0, 1.0]).unwrap(), vec![0.5, 0.5]);
        let w = win_probabilities(&[2.0 / 3.0, 1.0]).unwrap();
        assert_abs_diff_eq!(w[1], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 1.0 / 3.0, epsilon = 1e-15);
        for x in win_probabilities(&[1.0, 1.0, 1.0]).unwrap() {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert!(win_probabilities(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn forward_matches_sampling() {
        let b = [0.3, 0.8, 1.0];
        let w = win_probabilities(&b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut hits = [0u32; 3];
        for _ in 0..n {
            let bids: Vec<f64> = b.iter().map(|&x| x * rng.gen::<f64>()).collect();
            let top = (0..3).max_by(|&i, &j| bids[i].total_cmp(&bids[j])).unwrap();
            hits[top] += 1;
        }
        for i in 0..3 {
            let f = f64::from(hits[i]) / n as f64;
            let sd = (w[i] * (1.0 - w[i]) / n as f64).sqrt();
            assert!((f - w[i]).abs() < 4.0 * sd, "{i}: {f} vs {}", w[i]);
        }
    }

    #[test]
    fn inverse_examples() {
        let b = bids_from_probabilities(&[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(b[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b[1], 1.0, epsilon = 1e-12);
        let b = bids_from_probabilities(&[1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert_abs_diff_eq!(b[0], 2.0 / 3.0, epsilon = 1e-9);
        assert_eq!(b[1], 1.0);
        assert!(bids_from_probabilities(&[0.0, 1.0]).is_err());
        assert!(bids_from_probabilities(&[0.4, 0.4]).is_err());
    }

    #[test]
    fn delay_sampling() {
        let w = [1.0 / 3.0, 2.0 / 3.0];
        let b = bids_from_probabilities(&w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut second = 0;
        for _ in 0..n {
            let d: Vec<f64> = b.iter().map(|&x| sample_delay(x, &mut rng)).collect();
            assert!(d.iter().all(|&x| (0.0..1.0).contains(&x)));
            if first_to_alternate(&d) == 1 {
                second += 1;
            }
        }
        let f = f64::from(second) / n as f64;
        assert!((f - 2.0 / 3.0).abs() < 0.01);
        let d = bid_response_delay(&[0.5, 0.5], 0, 3).unwrap();
        assert!((0.0..1.0).contains(&d));
        assert_eq!(d, bid_response_delay(&[0.5, 0.5], 0, 3).unwrap());
    }

    #[test]
    fn near_degenerate_limit() {
        let eps = 1e-3;
        let w = [eps, 1.0 - eps];
        let b = bids_from_probabilities(&w).unwrap();
        let got = win_probabilities(&b).unwrap();
        assert_abs_diff_eq!(got[1], 1.0 - eps, epsilon = 1e-9);
    }
}
