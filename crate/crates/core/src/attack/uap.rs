use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{sign, Adversary, AttackConfig, AttackMask, Perturbation};
use crate::error::{shape_mismatch, Error, Result};
use crate::radio::BetaMatrix;

const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UapOutcome {
    pub perturbation: Perturbation,
    /// largest two singular values of the stacked gradients
    pub top_singular_values: Vec<f64>,
    /// the top two singular values tie; the direction is still deterministic
    pub degenerate_spectrum: bool,
    /// `+1` if `ε·sign(v₁)` was kept, `−1` for its negation
    pub chosen_sign: i8,
    /// total attack loss over the pool for `+δ` and `−δ`
    pub pool_losses: [f64; 2],
}

/// Top right singular vector with its largest-magnitude entry made positive,
/// and the singular values in decreasing order.
pub(crate) fn principal_direction(p: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let svd = p.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v: Vec<f64> = v_t.row(order[0]).iter().copied().collect();
    let lead = v
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
        .0;
    if v[lead] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    (v, values)
}

impl Adversary<'_> {
    /// Universal perturbation from `N` pool rows that carry the live input's
    /// known entries. Inputs are dB vectors.
    pub fn m_uap(
        &self,
        x_partial_db: &[f64],
        mask: &AttackMask,
        pool_db: &[Vec<f64>],
        cfg: &AttackConfig,
    ) -> Result<UapOutcome> {
        cfg.validate()?;
        if pool_db.is_empty() {
            return Err(Error::EmptySamples);
        }
        if x_partial_db.len() != mask.len() {
            return Err(shape_mismatch(mask.len(), x_partial_db.len()));
        }
        let x_hat: Vec<Vec<f64>> = pool_db
            .iter()
            .map(|row| {
                if row.len() != mask.len() {
                    return Err(shape_mismatch(mask.len(), row.len()));
                }
                Ok(row
                    .iter()
                    .zip(x_partial_db)
                    .zip(&mask.known)
                    .map(|((r, x), &known)| if known { *x } else { *r })
                    .collect())
            })
            .collect::<Result<_>>()?;
        let beliefs = x_hat
            .iter()
            .map(|x| BetaMatrix::from_db(mask.num_rus, mask.num_ues, x))
            .collect::<Result<Vec<_>>>()?;

        let runs = self.bim_batch(&x_hat, &beliefs, mask, cfg)?;
        let p = DMatrix::from_fn(runs.len(), mask.len(), |r, c| runs[r].rho[c]);
        let (v1, values) = principal_direction(&p);
        let degenerate = values.len() > 1 && values[0] - values[1] <= TIE_TOL * values[0].max(f64::MIN_POSITIVE);

        let plus: Vec<f64> = v1.iter().map(|v| cfg.epsilon * sign(*v)).collect();
        let minus: Vec<f64> = plus.iter().map(|d| -d).collect();
        let total = |delta: &[f64]| -> Result<f64> {
            let shifted: Vec<Vec<f64>> = x_hat
                .iter()
                .map(|x| x.iter().zip(delta).map(|(a, d)| a + d).collect())
                .collect();
            Ok(self.losses(&shifted, &beliefs)?.iter().sum())
        };
        let pool_losses = [total(&plus)?, total(&minus)?];
        let (chosen_sign, mut delta) = if pool_losses[1] > pool_losses[0] {
            (-1, minus)
        } else {
            (1, plus)
        };
        if cfg.mask_uap {
            for (d, &ok) in delta.iter_mut().zip(&mask.modifiable) {
                if !ok {
                    *d = 0.0;
                }
            }
        }
        let perturbation = Perturbation { delta };
        if cfg.mask_uap {
            perturbation.check(mask, cfg.epsilon)?;
        }
        Ok(UapOutcome {
            perturbation,
            top_singular_values: values.into_iter().take(2).collect(),
            degenerate_spectrum: degenerate,
            chosen_sign,
            pool_losses,
        })
    }
}
