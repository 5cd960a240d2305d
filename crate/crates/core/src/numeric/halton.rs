use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::normal::std_normal_quantile;
use crate::{Error, Result};

/// Primes used as Halton bases, one per random-coefficient dimension.
pub const HALTON_PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109,
    113, 127, 131,
];

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

#[inline]
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv_base = 1.0 / base as f64;
    let mut scale = inv_base;
    let mut value = 0.0;
    while index > 0 {
        value += (index % base) as f64 * scale;
        index /= base;
        scale *= inv_base;
    }
    value
}

/// Radical inverse of `index` in a prime `base`; lies strictly inside (0,1).
pub fn halton_element(index: u64, base: u64) -> Result<f64> {
    if index == 0 {
        return Err(Error::Argument("Halton index must be >= 1".into()));
    }
    if !is_prime(base) {
        return Err(Error::Argument(format!("Halton base {base} is not prime")));
    }
    Ok(radical_inverse(index, base))
}

/// Standard-normal simulation draws, laid out observation-major:
/// `values[((obs * n_draws) + draw) * n_random + dim]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawMatrix {
    pub n_obs: usize,
    pub n_draws: usize,
    pub n_random: usize,
    pub primes: Vec<u64>,
    pub discard: u64,
    values: Vec<f64>,
}

impl DrawMatrix {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The `n_draws × n_random` block belonging to one observation.
    pub fn block(&self, obs: usize) -> &[f64] {
        let width = self.n_draws * self.n_random;
        &self.values[obs * width..(obs + 1) * width]
    }

    pub fn get(&self, obs: usize, draw: usize, dim: usize) -> f64 {
        self.values[(obs * self.n_draws + draw) * self.n_random + dim]
    }

    /// Halton index used for `(obs, draw)`; identical across dimensions.
    pub fn halton_index(&self, obs: usize, draw: usize) -> u64 {
        self.discard + (obs * self.n_draws + draw) as u64 + 1
    }
}

/// Builds the Halton draw grid: dimension `d` uses the `d`-th prime, each
/// observation gets its own contiguous block of `n_draws` sequence elements
/// after skipping the first `discard`, and every element is mapped through the
/// standard-normal quantile.
pub fn make_draws(n_obs: usize, n_draws: usize, n_random: usize, discard: u64) -> Result<DrawMatrix> {
    if n_obs == 0 || n_draws == 0 || n_random == 0 {
        return Err(Error::Argument(format!(
            "draw counts must be >= 1 (n_obs={n_obs}, n_draws={n_draws}, n_random={n_random})"
        )));
    }
    if n_random > HALTON_PRIMES.len() {
        return Err(Error::Argument(format!(
            "{n_random} random dimensions exceed the {} supported Halton primes",
            HALTON_PRIMES.len()
        )));
    }
    let primes = HALTON_PRIMES[..n_random].to_vec();
    let width = n_draws * n_random;
    let mut values = vec![0.0; n_obs * width];
    values
        .par_chunks_mut(width)
        .enumerate()
        .try_for_each(|(obs, block)| -> Result<()> {
            for draw in 0..n_draws {
                let index = discard + (obs * n_draws + draw) as u64 + 1;
                for (dim, &base) in primes.iter().enumerate() {
                    block[draw * n_random + dim] = std_normal_quantile(radical_inverse(index, base))?;
                }
            }
            Ok(())
        })?;
    Ok(DrawMatrix {
        n_obs,
        n_draws,
        n_random,
        primes,
        discard,
        values,
    })
}
