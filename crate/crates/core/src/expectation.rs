//! Combinatorial oracle for expected hull sizes of lifted random walks.
//!
//! Expected face and vertex counts reduce to ratios of Stirling numbers of
//! the first kind to (n−1)!, which have closed forms in partial sums of the
//! harmonic series. Two independent routes are provided — the explicit
//! closed forms and the ω-recursion — and must agree exactly in rational
//! arithmetic. Only ratios are ever formed; factorials never materialize.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Zero};
use thiserror::Error;

use crate::calibrate::ln_gamma;

#[derive(Debug, Error)]
pub enum ExpectationError {
    #[error("n must be >= 2, got {0}")]
    NTooSmall(u64),
    #[error("stirling index m = {0} unsupported (closed forms cover m <= 6)")]
    UnsupportedIndex(usize),
    #[error("dimension p = {0} unsupported (p <= 5)")]
    UnsupportedDimension(usize),
}

/// Partial sums σ_k = Σ_{i=1}^{n−1} i^{−k}, k = 1..=k_max, accumulated with
/// Neumaier-compensated summation.
#[derive(Debug, Clone)]
pub struct HarmonicTable {
    pub n: u64,
    sigma: Vec<f64>,
}

impl HarmonicTable {
    pub fn new(n: u64, k_max: usize) -> Result<Self, ExpectationError> {
        if n < 2 {
            return Err(ExpectationError::NTooSmall(n));
        }
        let mut sums = vec![0.0f64; k_max];
        let mut comps = vec![0.0f64; k_max];
        for i in 1..n {
            let inv = 1.0 / i as f64;
            let mut term = 1.0;
            for k in 0..k_max {
                term *= inv;
                let s = sums[k] + term;
                comps[k] += if sums[k].abs() >= term.abs() {
                    (sums[k] - s) + term
                } else {
                    (term - s) + sums[k]
                };
                sums[k] = s;
            }
        }
        let sigma = sums.iter().zip(&comps).map(|(s, c)| s + c).collect();
        Ok(Self { n, sigma })
    }

    /// σ_k, 1-based k.
    pub fn sigma(&self, k: usize) -> f64 {
        self.sigma[k - 1]
    }
}

fn sigma_rational(n: u64, k: usize) -> BigRational {
    let mut acc = BigRational::zero();
    for i in 1..n {
        let denom = BigInt::from(i).pow(k as u32);
        acc += BigRational::new(BigInt::one(), denom);
    }
    acc
}

/// [n m]/(n−1)! via the explicit harmonic closed forms, m ≤ 6.
pub fn stirling_ratio(n: u64, m: usize) -> Result<f64, ExpectationError> {
    if n < 2 {
        return Err(ExpectationError::NTooSmall(n));
    }
    if m > 6 {
        return Err(ExpectationError::UnsupportedIndex(m));
    }
    if m == 0 {
        // [n 0] = 1 by the convention used alongside these formulas.
        return Ok((-ln_gamma(n as f64)).exp());
    }
    let h = HarmonicTable::new(n, 5)?;
    let (s1, s2, s3, s4, s5) = (h.sigma(1), h.sigma(2), h.sigma(3), h.sigma(4), h.sigma(5));
    Ok(match m {
        1 => 1.0,
        2 => s1,
        3 => (s1 * s1 - s2) / 2.0,
        4 => s1.powi(3) / 6.0 - s1 * s2 / 2.0 + s3 / 3.0,
        5 => s1.powi(4) / 24.0 - s1 * s1 * s2 / 4.0 + s1 * s3 / 3.0 + s2 * s2 / 8.0 - s4 / 4.0,
        6 => {
            s1.powi(5) / 120.0 - s1.powi(3) * s2 / 12.0 + s1 * s1 * s3 / 6.0
                + s1 * s2 * s2 / 8.0
                - s1 * s4 / 4.0
                - s2 * s3 / 6.0
                + s5 / 5.0
        }
        _ => unreachable!(),
    })
}

/// Same ratio via the ω-recursion:
/// ω(n,0) = 1, ω(n,m) = Σ_{k=0}^{m−1} (1−m)_k σ_{k+1} ω(n, m−1−k),
/// and [n m]/(n−1)! = ω(n, m−1)/(m−1)!.
pub fn stirling_ratio_omega(n: u64, m: usize) -> Result<f64, ExpectationError> {
    if n < 2 {
        return Err(ExpectationError::NTooSmall(n));
    }
    if m > 6 {
        return Err(ExpectationError::UnsupportedIndex(m));
    }
    if m == 0 {
        return Ok((-ln_gamma(n as f64)).exp());
    }
    let h = HarmonicTable::new(n, m.max(1))?;
    let mut omega = vec![0.0f64; m];
    omega[0] = 1.0;
    for mm in 1..m {
        let mut acc = 0.0;
        // Pochhammer (1−mm)_k built iteratively over integers.
        let mut poch = 1.0f64;
        for k in 0..mm {
            if k > 0 {
                poch *= (1 - mm as i64 + (k as i64 - 1)) as f64;
            }
            acc += poch * h.sigma(k + 1) * omega[mm - 1 - k];
        }
        omega[mm] = acc;
    }
    let mut factorial = 1.0f64;
    for i in 2..m {
        factorial *= i as f64;
    }
    Ok(omega[m - 1] / factorial)
}

/// Exact-rational closed forms, for cross-checking n ≤ 30.
pub fn stirling_ratio_rational(n: u64, m: usize) -> Result<BigRational, ExpectationError> {
    if n < 2 {
        return Err(ExpectationError::NTooSmall(n));
    }
    if m > 6 {
        return Err(ExpectationError::UnsupportedIndex(m));
    }
    if m == 0 {
        let mut fact = BigInt::one();
        for i in 2..n {
            fact *= BigInt::from(i);
        }
        return Ok(BigRational::new(BigInt::one(), fact));
    }
    let s: Vec<BigRational> = (1..=5).map(|k| sigma_rational(n, k)).collect();
    let r = |num: i64, den: i64| BigRational::new(BigInt::from(num), BigInt::from(den));
    let (s1, s2, s3, s4, s5) = (&s[0], &s[1], &s[2], &s[3], &s[4]);
    Ok(match m {
        1 => BigRational::one(),
        2 => s1.clone(),
        3 => (s1 * s1 - s2) * r(1, 2),
        4 => s1 * s1 * s1 * r(1, 6) - s1 * s2 * r(1, 2) + s3 * r(1, 3),
        5 => {
            s1 * s1 * s1 * s1 * r(1, 24) - s1 * s1 * s2 * r(1, 4)
                + s1 * s3 * r(1, 3)
                + s2 * s2 * r(1, 8)
                - s4 * r(1, 4)
        }
        6 => {
            s1 * s1 * s1 * s1 * s1 * r(1, 120) - s1 * s1 * s1 * s2 * r(1, 12)
                + s1 * s1 * s3 * r(1, 6)
                + s1 * s2 * s2 * r(1, 8)
                - s1 * s4 * r(1, 4)
                - s2 * s3 * r(1, 6)
                + s5 * r(1, 5)
        }
        _ => unreachable!(),
    })
}

/// Exact-rational ω-recursion.
pub fn stirling_ratio_omega_rational(n: u64, m: usize) -> Result<BigRational, ExpectationError> {
    if n < 2 {
        return Err(ExpectationError::NTooSmall(n));
    }
    if m > 6 {
        return Err(ExpectationError::UnsupportedIndex(m));
    }
    if m == 0 {
        return stirling_ratio_rational(n, 0);
    }
    let sig: Vec<BigRational> = (1..=m.max(1)).map(|k| sigma_rational(n, k)).collect();
    let mut omega = vec![BigRational::zero(); m];
    omega[0] = BigRational::one();
    for mm in 1..m {
        let mut acc = BigRational::zero();
        let mut poch = BigInt::one();
        for k in 0..mm {
            if k > 0 {
                poch *= BigInt::from(1 - mm as i64 + (k as i64 - 1));
            }
            acc += BigRational::from(poch.clone()) * &sig[k] * &omega[mm - 1 - k];
        }
        omega[mm] = acc;
    }
    let mut fact = BigInt::one();
    for i in 2..m {
        fact *= BigInt::from(i);
    }
    Ok(&omega[m - 1] / BigRational::from(fact))
}

/// Expected (faces, vertices) of the convex hull of the lifted cumulative-sum
/// walk after n points, in dimension p+1:
/// `E(U) = 2·p!·[n p+1]/(n−1)!` and `E(V) = 2·Σ_{l≥0} [n p+1−2l]/(n−1)!`.
pub fn expected_counts(n: u64, p: usize) -> Result<(f64, f64), ExpectationError> {
    if p == 0 || p > 5 {
        return Err(ExpectationError::UnsupportedDimension(p));
    }
    if n < 2 {
        return Err(ExpectationError::NTooSmall(n));
    }
    let mut factorial = 1.0f64;
    for i in 2..=p {
        factorial *= i as f64;
    }
    let faces = 2.0 * factorial * stirling_ratio(n, p + 1)?;
    let mut vertices = 0.0;
    let mut m = p + 1;
    loop {
        vertices += stirling_ratio(n, m)?;
        if m < 2 {
            break;
        }
        m -= 2;
    }
    Ok((faces, 2.0 * vertices))
}
