use nalgebra::DMatrix;

use super::{sign, AttackConfig, AttackMask, Perturbation};
use crate::error::{shape_mismatch, Result};
use crate::nn::{input_gradients, sum_se_with_gradient, MlpModel};
use crate::radio::BetaMatrix;

/// Gradient access to a model under the attack loss `L = −Σ_k SE_k`, where the
/// SE is evaluated at the adversary's belief of the physical channel.
#[derive(Debug, Clone, Copy)]
pub struct Adversary<'a> {
    pub model: &'a MlpModel,
    pub total_power: f64,
    pub noise_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BimResult {
    /// attacked input, dB
    pub x_adv: Vec<f64>,
    /// sum of the masked dB-domain loss gradients over all iterations
    pub rho: Vec<f64>,
    pub delta: Perturbation,
}

impl<'a> Adversary<'a> {
    pub fn new(model: &'a MlpModel, total_power: f64, noise_power: f64) -> Self {
        Self {
            model,
            total_power,
            noise_power,
        }
    }

    fn standardized(&self, x_db: &[f64]) -> Result<Vec<f64>> {
        self.model.feature_stats().standardize_db(x_db)
    }

    /// `(L, ∂L/∂x_dB)` per row.
    pub fn loss_gradients(
        &self,
        xs_db: &[Vec<f64>],
        beliefs: &[BetaMatrix],
    ) -> Result<Vec<(f64, Vec<f64>)>> {
        let xs = xs_db
            .iter()
            .map(|x| self.standardized(x))
            .collect::<Result<Vec<_>>>()?;
        let std = &self.model.feature_stats().std;
        let out = input_gradients(self.model, &xs, beliefs, self.total_power, self.noise_power)?;
        Ok(out
            .into_iter()
            .map(|(j, g)| (-j, g.iter().zip(std).map(|(g, s)| -g / s).collect()))
            .collect())
    }

    /// Attack loss per row, forward pass only.
    pub fn losses(&self, xs_db: &[Vec<f64>], beliefs: &[BetaMatrix]) -> Result<Vec<f64>> {
        if xs_db.len() != beliefs.len() {
            return Err(shape_mismatch(xs_db.len(), beliefs.len()));
        }
        if xs_db.is_empty() {
            return Ok(Vec::new());
        }
        let xs = xs_db
            .iter()
            .map(|x| self.standardized(x))
            .collect::<Result<Vec<_>>>()?;
        let batch = DMatrix::from_fn(xs[0].len(), xs.len(), |r, c| xs[c][r]);
        let nu = self.model.forward_batch(&batch);
        beliefs
            .iter()
            .enumerate()
            .map(|(c, b)| {
                sum_se_with_gradient(b, nu.column(c).as_slice(), self.total_power, self.noise_power)
                    .map(|(j, _)| -j)
            })
            .collect()
    }

    /// BIM on every row at once:
    /// `x ← Clip_ε{x + α·sign(∇L)}` restricted to modifiable entries.
    pub fn bim_batch(
        &self,
        starts_db: &[Vec<f64>],
        beliefs: &[BetaMatrix],
        mask: &AttackMask,
        cfg: &AttackConfig,
    ) -> Result<Vec<BimResult>> {
        cfg.validate()?;
        if let Some(x) = starts_db.iter().find(|x| x.len() != mask.len()) {
            return Err(shape_mismatch(mask.len(), x.len()));
        }
        let mut xs = starts_db.to_vec();
        let mut rhos = vec![vec![0.0; mask.len()]; xs.len()];
        for _ in 0..cfg.bim_iters {
            let grads = self.loss_gradients(&xs, beliefs)?;
            for ((x, rho), (start, (_, g))) in xs
                .iter_mut()
                .zip(&mut rhos)
                .zip(starts_db.iter().zip(grads))
            {
                for i in 0..x.len() {
                    if !mask.modifiable[i] {
                        continue;
                    }
                    rho[i] += g[i];
                    let stepped = x[i] + cfg.alpha * sign(g[i]);
                    x[i] = stepped.clamp(start[i] - cfg.epsilon, start[i] + cfg.epsilon);
                }
            }
        }
        xs.into_iter()
            .zip(rhos)
            .zip(starts_db)
            .map(|((x_adv, rho), start)| {
                let delta = Perturbation {
                    delta: x_adv
                        .iter()
                        .zip(start)
                        .zip(&mask.modifiable)
                        .map(|((a, s), &ok)| if ok { a - s } else { 0.0 })
                        .collect(),
                };
                delta.check(mask, cfg.epsilon)?;
                Ok(BimResult { x_adv, rho, delta })
            })
            .collect()
    }

    pub fn bim(
        &self,
        x_start_db: &[f64],
        beta_belief: &BetaMatrix,
        mask: &AttackMask,
        cfg: &AttackConfig,
    ) -> Result<BimResult> {
        let mut out = self.bim_batch(
            std::slice::from_ref(&x_start_db.to_vec()),
            std::slice::from_ref(beta_belief),
            mask,
            cfg,
        )?;
        Ok(out.pop().expect("one row"))
    }

    /// One full-budget sign step: BIM with a single iteration and `α = ε`.
    pub fn fgsm(
        &self,
        x_db: &[f64],
        beta_belief: &BetaMatrix,
        mask: &AttackMask,
        cfg: &AttackConfig,
    ) -> Result<Vec<f64>> {
        let one_step = AttackConfig {
            alpha: cfg.epsilon,
            bim_iters: 1,
            ..cfg.clone()
        };
        Ok(self.bim(x_db, beta_belief, mask, &one_step)?.x_adv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{make_mask, Threat};
    use crate::features::FeatureStats;
    use crate::nn::Activation;

    fn setup() -> (MlpModel, BetaMatrix, Vec<f64>) {
        let mean: Vec<f64> = (0..8).map(|i| -110.0 - i as f64).collect();
        let stats = FeatureStats {
            mean: mean.clone(),
            std: vec![8.0; 8],
        };
        let model =
            MlpModel::new(&[8, 12, 8], Activation::Silu, Activation::Sigmoid, stats, 21).unwrap();
        let x: Vec<f64> = mean.iter().enumerate().map(|(i, m)| m + (i as f64 - 3.0) * 2.5).collect();
        let beta = BetaMatrix::from_db(4, 2, &x).unwrap();
        (model, beta, x)
    }

    #[test]
    fn fgsm_is_one_step_bim() {
        let (model, beta, x) = setup();
        let adv = Adversary::new(&model, 0.2, 1e-12);
        let mask = make_mask(Threat::Full, &[], 4, 2).unwrap();
        let cfg = AttackConfig::with_epsilon(6.0);
        let one = AttackConfig {
            alpha: 6.0,
            bim_iters: 1,
            ..cfg.clone()
        };
        assert_eq!(adv.fgsm(&x, &beta, &mask, &cfg).unwrap(), adv.bim(&x, &beta, &mask, &one).unwrap().x_adv);
    }

    #[test]
    fn zero_budget_leaves_input() {
        let (model, beta, x) = setup();
        let adv = Adversary::new(&model, 0.2, 1e-12);
        let mask = make_mask(Threat::Full, &[], 4, 2).unwrap();
        let r = adv.bim(&x, &beta, &mask, &AttackConfig::with_epsilon(0.0)).unwrap();
        assert_eq!(r.x_adv, x);
    }

    #[test]
    fn masked_entries_never_move_and_budget_holds() {
        let (model, beta, x) = setup();
        let adv = Adversary::new(&model, 0.2, 1e-12);
        let mask = make_mask(Threat::MaliciousRus, &[1, 3], 4, 2).unwrap();
        let cfg = AttackConfig::with_epsilon(5.0);
        let r = adv.bim(&x, &beta, &mask, &cfg).unwrap();
        for i in 0..8 {
            if mask.modifiable[i] {
                assert!((r.x_adv[i] - x[i]).abs() <= 5.0 + 1e-12);
            } else {
                assert_eq!(r.x_adv[i], x[i]);
                assert_eq!(r.rho[i], 0.0);
            }
        }
        r.delta.check(&mask, 5.0).unwrap();
    }

    #[test]
    fn fgsm_follows_the_loss_gradient_sign() {
        let (model, beta, x) = setup();
        let adv = Adversary::new(&model, 0.2, 1e-12);
        let mask = make_mask(Threat::Full, &[], 4, 2).unwrap();
        let cfg = AttackConfig::with_epsilon(0.5);
        let g = &adv.loss_gradients(std::slice::from_ref(&x), std::slice::from_ref(&beta)).unwrap()[0].1;
        let step = adv.fgsm(&x, &beta, &mask, &cfg).unwrap();
        for i in 0..8 {
            assert_eq!(step[i] - x[i], 0.5 * sign(g[i]));
        }
    }

    #[test]
    fn small_bim_steps_raise_the_loss() {
        let (model, beta, x) = setup();
        let adv = Adversary::new(&model, 0.2, 1e-12);
        let mask = make_mask(Threat::Full, &[], 4, 2).unwrap();
        let cfg = AttackConfig {
            epsilon: 0.05,
            alpha: 0.005,
            ..AttackConfig::default()
        };
        let r = adv.bim(&x, &beta, &mask, &cfg).unwrap();
        let before = adv.losses(std::slice::from_ref(&x), std::slice::from_ref(&beta)).unwrap()[0];
        let after = adv.losses(std::slice::from_ref(&r.x_adv), std::slice::from_ref(&beta)).unwrap()[0];
        assert!(after > before, "{after} <= {before}");
    }
}
