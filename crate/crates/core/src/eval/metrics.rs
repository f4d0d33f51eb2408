//! pass@k and percentage formatting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassAtKQuery {
    /// Samples drawn for the instance.
    pub n: u32,
    /// Successful samples.
    pub c: u32,
    pub k: u32,
}

impl PassAtKQuery {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return Err(Error::Validation(format!(
                "pass@k query needs 1 <= k <= n; got n={}, k={}",
                self.n, self.k
            )));
        }
        if self.c > self.n {
            return Err(Error::Validation(format!(
                "pass@k query needs c <= n; got n={}, c={}",
                self.n, self.c
            )));
        }
        Ok(())
    }
}

/// Unbiased estimator `1 - C(n-c, k) / C(n, k)`, evaluated as the product
/// `prod_{i=n-c+1}^{n} (1 - k/i)` so no binomial is ever formed.
pub fn pass_at_k(q: PassAtKQuery) -> Result<f64> {
    q.validate()?;
    let PassAtKQuery { n, c, k } = q;
    if c == 0 {
        return Ok(0.0);
    }
    if n - c < k {
        return Ok(1.0);
    }
    let mut miss = 1.0f64;
    for i in (n - c + 1)..=n {
        miss *= 1.0 - k as f64 / i as f64;
    }
    Ok(1.0 - miss)
}

/// Mean pass@k over instances. Each row holds one instance's samples; rows
/// shorter than `k` are an error.
pub fn mean_pass_at_k(matrix: &[Vec<bool>], k: u32) -> Result<f64> {
    if matrix.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for row in matrix {
        let c = row.iter().filter(|&&b| b).count() as u32;
        total += pass_at_k(PassAtKQuery {
            n: row.len() as u32,
            c,
            k,
        })?;
    }
    Ok(total / matrix.len() as f64)
}

/// `count / total` as a percentage with `decimals` places, rounded half-up
/// in exact integer arithmetic. A zero total renders as zero.
pub fn percent_of(count: usize, total: usize, decimals: u32) -> String {
    let scale = 10u128.pow(decimals);
    let units = if total == 0 {
        0
    } else {
        (2 * count as u128 * 100 * scale + total as u128) / (2 * total as u128)
    };
    fixed(units, scale, decimals)
}

/// A fraction in [0, 1] as a percentage, rounded half-up. A tiny tolerance
/// absorbs binary representation error so 0.432 renders as 43.2.
pub fn percent_from_fraction(value: f64, decimals: u32) -> String {
    let scale = 10u128.pow(decimals);
    let scaled = value * 100.0 * scale as f64;
    let units = (scaled + 0.5 + 1e-9).floor().max(0.0) as u128;
    fixed(units, scale, decimals)
}

fn fixed(units: u128, scale: u128, decimals: u32) -> String {
    if decimals == 0 {
        return units.to_string();
    }
    format!(
        "{}.{:0width$}",
        units / scale,
        units % scale,
        width = decimals as usize
    )
}
