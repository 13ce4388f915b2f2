use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemConfig {
    pub n_iterations: usize,
    pub population: usize,
    pub elite_fraction: f64,
    pub std_floor: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            n_iterations: 2,
            population: 64,
            elite_fraction: 0.1,
            std_floor: 1e-3,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_iterations >= 1, "CEM needs at least one iteration");
        ensure!(self.population >= 1, "CEM population must be positive");
        ensure!(
            self.elite_fraction > 0.0 && self.elite_fraction <= 1.0,
            "elite fraction must be in (0, 1]"
        );
        ensure!(self.std_floor >= 0.0, "std floor must be non-negative");
        Ok(())
    }

    pub fn n_elite(&self) -> usize {
        ((self.population as f64 * self.elite_fraction).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemResult {
    /// Best action seen across all iterations.
    pub action: Vec<f64>,
    pub value: f64,
    /// Mean objective over the elite set after each iteration.
    pub elite_means: Vec<f64>,
}

/// Maximizes `objective` over the box `[low, high]`.
///
/// The search starts from a Gaussian centred at zero (clamped into the box)
/// with standard deviation half the range. Elites carry over between
/// iterations, so the elite mean never decreases.
pub fn cem_maximize<F, R>(
    mut objective: F,
    low: &[f64],
    high: &[f64],
    config: &CemConfig,
    rng: &mut R,
) -> Result<CemResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
    R: Rng + ?Sized,
{
    config.validate()?;
    ensure!(
        low.len() == high.len() && !low.is_empty(),
        "action bounds must be non-empty and of equal length"
    );
    ensure!(
        low.iter().zip(high).all(|(l, h)| l <= h),
        "action lower bound exceeds upper bound"
    );
    let dim = low.len();
    let mut mean: Vec<f64> = low
        .iter()
        .zip(high)
        .map(|(l, h)| 0.0f64.clamp(*l, *h))
        .collect();
    let mut std: Vec<f64> = low
        .iter()
        .zip(high)
        .map(|(l, h)| ((h - l) / 2.0).max(config.std_floor))
        .collect();
    let n_elite = config.n_elite();
    let mut elites: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut elite_means = Vec::with_capacity(config.n_iterations);

    for _ in 0..config.n_iterations {
        let mut pool = std::mem::take(&mut elites);
        for _ in 0..config.population {
            let a: Vec<f64> = (0..dim)
                .map(|i| {
                    let z: f64 = rng.sample(StandardNormal);
                    (mean[i] + std[i] * z).clamp(low[i], high[i])
                })
                .collect();
            let q = objective(&a)?;
            ensure!(q.is_finite(), "CEM objective returned {q}");
            pool.push((q, a));
        }
        // Stable sort keeps earlier (carried-over) candidates first on ties.
        pool.sort_by(|x, y| y.0.total_cmp(&x.0));
        pool.truncate(n_elite);
        elite_means.push(pool.iter().map(|e| e.0).sum::<f64>() / pool.len() as f64);
        for i in 0..dim {
            let m = pool.iter().map(|e| e.1[i]).sum::<f64>() / pool.len() as f64;
            let v = pool.iter().map(|e| (e.1[i] - m).powi(2)).sum::<f64>() / pool.len() as f64;
            mean[i] = m;
            std[i] = v.sqrt().max(config.std_floor);
        }
        elites = pool;
    }
    let (value, action) = elites.swap_remove(0);
    Ok(CemResult {
        action,
        value,
        elite_means,
    })
}

/// CEM argmax of a network taking `[state, action]` and returning one value.
pub fn cem_argmax<R: Rng + ?Sized>(
    net: &Mlp,
    state: &[f64],
    low: &[f64],
    high: &[f64],
    config: &CemConfig,
    rng: &mut R,
) -> Result<CemResult> {
    ensure!(
        net.input_dim() == state.len() + low.len() && net.output_dim() == 1,
        "network shape {:?} does not take [state({}), action({})] -> 1",
        net.sizes(),
        state.len(),
        low.len()
    );
    let mut input = state.to_vec();
    input.resize(state.len() + low.len(), 0.0);
    cem_maximize(
        |a| {
            input[state.len()..].copy_from_slice(a);
            Ok(net.forward(&input)?[0])
        },
        low,
        high,
        config,
        rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn finds_quadratic_peak() {
        let cfg = CemConfig {
            n_iterations: 5,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = cem_maximize(
            |a| Ok(-(a[0] - 0.3).powi(2)),
            &[-1.0],
            &[1.0],
            &cfg,
            &mut rng,
        )
        .unwrap();
        assert!((r.action[0] - 0.3).abs() < 1e-2);
    }

    #[test]
    fn constant_objective_stays_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = cem_maximize(
            |_| Ok(1.0),
            &[0.5, -2.0],
            &[0.7, -1.0],
            &CemConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert!((0.5..=0.7).contains(&r.action[0]));
        assert!((-2.0..=-1.0).contains(&r.action[1]));
    }

    #[test]
    fn elite_means_never_decrease() {
        let cfg = CemConfig {
            n_iterations: 8,
            population: 16,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[3, 16, 1], &mut rng).unwrap();
        let r = cem_argmax(&net, &[0.1, -0.4], &[-1.0], &[1.0], &cfg, &mut rng).unwrap();
        for w in r.elite_means.windows(2) {
            assert!(w[1] >= w[0]);
        }
        let q = net.forward(&[0.1, -0.4, r.action[0]]).unwrap()[0];
        assert_eq!(q, r.value);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = CemConfig {
            elite_fraction: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(cem_maximize(|_| Ok(0.0), &[0.0], &[1.0], &cfg, &mut rng).is_err());
        assert_eq!(CemConfig::default().n_elite(), 7);
    }
}
