//! Random draws shared by the simulator and the equilibrium probes.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{invalid, Result};

/// One Dirichlet(α) draw, built from independent Gamma(α_j, 1) variates
/// normalized to sum to one.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, concentration: &[f64]) -> Result<Vec<f64>> {
    if concentration.is_empty() {
        return Err(invalid("concentration", "must not be empty"));
    }
    let mut draws = Vec::with_capacity(concentration.len());
    for &a in concentration {
        let gamma = Gamma::new(a, 1.0).map_err(|e| invalid("concentration", e.to_string()))?;
        draws.push(gamma.sample(rng));
    }
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter_mut().for_each(|g| *g /= total);
    } else {
        // every gamma underflowed; only possible for tiny concentrations
        let j = rng.random_range(0..draws.len());
        draws.iter_mut().for_each(|g| *g = 0.0);
        draws[j] = 1.0;
    }
    Ok(draws)
}

/// Uniform draw on [lo, hi).
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dirichlet_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let d = dirichlet(&mut rng, &[1.0; 10]).unwrap();
            let s: f64 = d.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(d.iter().all(|x| *x >= 0.0));
        }
        assert!(dirichlet(&mut rng, &[]).is_err());
        assert!(dirichlet(&mut rng, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn flat_dirichlet_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let mut acc = [0.0; 4];
        for _ in 0..n {
            for (a, d) in acc.iter_mut().zip(dirichlet(&mut rng, &[1.0; 4]).unwrap()) {
                *a += d;
            }
        }
        for a in acc {
            assert!((a / n as f64 - 0.25).abs() < 0.01);
        }
    }
}
