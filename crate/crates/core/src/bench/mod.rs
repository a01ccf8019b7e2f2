//! End-to-end evaluation: craft perturbations on fresh instances, let the CP
//! allocate from the reported channel, and score the allocation on the true one.

mod report;
mod stats;

pub use report::{EvalReport, ExportFormat, Metric, ReportFingerprint, ScenarioRow, METRICS};
pub use stats::{bootstrap_se, compute_cdf, mean_of, percentile_of, Cdf};

use std::path::PathBuf;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{
    apply_attack, gaussian_attack, make_mask, Adversary, AttackConfig, AttackMask, Perturbation,
    Threat,
};
use crate::error::{Error, Result};
use crate::nn::{predict_allocation, MlpModel};
use crate::radio::{BetaMatrix, SpectralMetrics};
use crate::rng::{stream, Domain};
use crate::scenario::{sample_scenario_with, Dataset, NetworkConfig};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    Gaussian,
    Fgsm,
    Bim,
    MUap,
}

impl AttackKind {
    fn uses_model(self) -> bool {
        matches!(self, Self::Fgsm | Self::Bim | Self::MUap)
    }
}

/// Which model the adversary differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Original,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: AttackKind,
    pub crafted_with: ModelRole,
    pub threat: Threat,
    /// share of RUs (or UEs) that are malicious; ignored for a full threat
    pub malicious_fraction: f64,
    /// fixed malicious set overriding the per-instance random one
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub malicious_indices: Option<Vec<usize>>,
    /// dB
    pub epsilon: f64,
}

impl ScenarioSpec {
    pub fn clean() -> Self {
        Self {
            kind: AttackKind::None,
            crafted_with: ModelRole::Surrogate,
            threat: Threat::Full,
            malicious_fraction: 1.0,
            malicious_indices: None,
            epsilon: 0.0,
        }
    }

    pub fn label(&self) -> String {
        let kind = serde_json::to_value(self.kind).expect("unit enum");
        let threat = serde_json::to_value(self.threat).expect("unit enum");
        let role = serde_json::to_value(self.crafted_with).expect("unit enum");
        format!(
            "{}/{}/{}/f={}/eps={}",
            kind.as_str().unwrap_or_default(),
            role.as_str().unwrap_or_default(),
            threat.as_str().unwrap_or_default(),
            self.malicious_fraction,
            self.epsilon
        )
    }
}

/// Attack campaign: the cartesian product of budgets, attack kinds and
/// crafting models under one threat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignSpec {
    pub threat: Threat,
    pub malicious_fraction: f64,
    pub malicious_indices: Option<Vec<usize>>,
    pub epsilons: Vec<f64>,
    pub kinds: Vec<AttackKind>,
    pub crafted_with: Vec<ModelRole>,
    pub uap_samples: usize,
    pub bim_iters: usize,
    /// BIM step as a fraction of ε
    pub alpha_ratio: f64,
    pub mask_uap: bool,
    pub include_clean: bool,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        Self {
            threat: Threat::Full,
            malicious_fraction: 1.0,
            malicious_indices: None,
            epsilons: vec![8.0],
            kinds: vec![AttackKind::Gaussian, AttackKind::MUap],
            crafted_with: vec![ModelRole::Surrogate],
            uap_samples: 16,
            bim_iters: 10,
            alpha_ratio: 1.0 / 8.0,
            mask_uap: true,
            include_clean: true,
        }
    }
}

impl CampaignSpec {
    pub fn scenarios(&self) -> Vec<ScenarioSpec> {
        let mut out = Vec::new();
        if self.include_clean {
            out.push(ScenarioSpec::clean());
        }
        for &epsilon in &self.epsilons {
            for &kind in &self.kinds {
                let roles: &[ModelRole] = if kind.uses_model() {
                    &self.crafted_with
                } else {
                    &self.crafted_with[..self.crafted_with.len().min(1)]
                };
                for &crafted_with in roles {
                    out.push(ScenarioSpec {
                        kind,
                        crafted_with,
                        threat: self.threat,
                        malicious_fraction: self.malicious_fraction,
                        malicious_indices: self.malicious_indices.clone(),
                        epsilon,
                    });
                }
            }
        }
        out
    }

    pub fn attack_config(&self, epsilon: f64) -> AttackConfig {
        AttackConfig {
            epsilon,
            alpha: epsilon * self.alpha_ratio,
            bim_iters: self.bim_iters,
            uap_samples: self.uap_samples,
            mask_uap: self.mask_uap,
            ..AttackConfig::with_epsilon(epsilon)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.uap_samples >= 1
            && self.bim_iters >= 1
            && self.alpha_ratio > 0.0
            && self.alpha_ratio <= 1.0
            && (0.0..=1.0).contains(&self.malicious_fraction)
            && self.epsilons.iter().all(|e| *e >= 0.0 && e.is_finite())
            && !self.crafted_with.is_empty();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad campaign {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Epsilon,
    MaliciousFraction,
}

/// Everything a CLI run needs; paths are resolved at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// dataset file; its network config is used throughout and its test
    /// split is the adversary's sample pool
    pub dataset: PathBuf,
    pub original_model: PathBuf,
    pub surrogate_model: PathBuf,
    #[serde(default)]
    pub campaign: CampaignSpec,
    #[serde(default = "default_instances")]
    pub instances: usize,
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_instances() -> usize {
    2000
}

fn default_seed() -> u64 {
    4242
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 {
            return Err(Error::InvalidConfig("instances must be at least 1".into()));
        }
        for p in [&self.dataset, &self.original_model, &self.surrogate_model] {
            if !p.exists() {
                return Err(Error::InvalidConfig(format!("{} does not exist", p.display())));
            }
        }
        self.campaign.validate()
    }

    /// Loads every input, evaluates the campaign (or a sweep of it) and
    /// writes the report files to `output_dir`.
    pub fn run(&self, sweep: Option<(SweepAxis, &[f64])>) -> Result<EvalReport> {
        self.validate()?;
        let dataset = Dataset::load(&self.dataset)?;
        let original = MlpModel::load(&self.original_model)?;
        let surrogate = MlpModel::load(&self.surrogate_model)?;
        let ctx = EvalContext::new(&dataset.config, &original, &surrogate, &dataset, self.instances, self.seed)?;
        let report = match sweep {
            None => ctx.run_campaign(&self.campaign)?,
            Some((axis, values)) => ctx.sweep(&self.campaign, axis, values)?,
        };
        report.save_all(&self.output_dir)?;
        Ok(report)
    }
}

/// Shared state of one evaluation: models, fresh instances and the pool.
pub struct EvalContext<'a> {
    pub config: &'a NetworkConfig,
    pub original: &'a MlpModel,
    pub surrogate: &'a MlpModel,
    /// β_true per instance
    pub instances: Vec<BetaMatrix>,
    /// adversary-accessible held-out samples, dB
    pub pool: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Per-instance outcome of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct InstanceOutcome {
    pub se: Vec<f64>,
    pub min_se: f64,
    pub sum_se: f64,
    pub ee: f64,
    pub budget_ok: bool,
    pub degenerate: bool,
}

impl<'a> EvalContext<'a> {
    /// Instances come from the `Instances` stream of `seed`, which never
    /// overlaps the dataset's scenario stream.
    pub fn new(
        config: &'a NetworkConfig,
        original: &'a MlpModel,
        surrogate: &'a MlpModel,
        dataset: &Dataset,
        n_instances: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_instances == 0 {
            return Err(Error::EmptySamples);
        }
        let instances = (0..n_instances as u64)
            .into_par_iter()
            .map(|i| {
                sample_scenario_with(config, &mut stream(seed, Domain::Instances, i)).map(|(_, b)| b)
            })
            .collect::<Result<Vec<_>>>()?;
        let pool: Vec<Vec<f64>> = dataset.test().iter().map(|s| s.beta.to_db()).collect();
        if pool.is_empty() {
            return Err(Error::InvalidConfig("dataset has no test split for the pool".into()));
        }
        Ok(Self {
            config,
            original,
            surrogate,
            instances,
            pool,
            seed,
        })
    }

    fn model(&self, role: ModelRole) -> &MlpModel {
        match role {
            ModelRole::Original => self.original,
            ModelRole::Surrogate => self.surrogate,
        }
    }

    /// Malicious set of instance `i`: a prefix of a per-instance permutation,
    /// so larger fractions contain smaller ones.
    pub fn malicious_set(&self, spec: &ScenarioSpec, i: usize) -> Vec<usize> {
        if let Some(fixed) = &spec.malicious_indices {
            return fixed.clone();
        }
        let (m, k) = (self.config.num_rus, self.config.num_ues);
        let (n, domain_index) = match spec.threat {
            Threat::Full => return Vec::new(),
            Threat::MaliciousRus => (m, 2 * i as u64),
            Threat::MaliciousUes => (k, 2 * i as u64 + 1),
        };
        let count = ((spec.malicious_fraction * n as f64).round() as usize)
            .clamp(usize::from(spec.malicious_fraction > 0.0), n);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut stream(self.seed, Domain::Malicious, domain_index));
        perm.truncate(count);
        perm.sort_unstable();
        perm
    }

    fn pool_rows(&self, i: usize, n: usize) -> Vec<Vec<f64>> {
        let mut rng = stream(self.seed, Domain::Pool, i as u64);
        let take = n.min(self.pool.len());
        index::sample(&mut rng, self.pool.len(), take)
            .into_iter()
            .map(|j| self.pool[j].clone())
            .collect()
    }

    fn craft(
        &self,
        spec: &ScenarioSpec,
        campaign: &CampaignSpec,
        i: usize,
        mask: &AttackMask,
    ) -> Result<(Perturbation, bool)> {
        let beta = &self.instances[i];
        let cfg = campaign.attack_config(spec.epsilon);
        let adv = Adversary::new(
            self.model(spec.crafted_with),
            self.config.total_power,
            self.config.noise_power,
        );
        let x_db = beta.to_db();
        match spec.kind {
            AttackKind::None => Ok((Perturbation::zero(mask.len()), false)),
            AttackKind::Gaussian => Ok((
                gaussian_attack(beta, mask, &cfg, &mut stream(self.seed, Domain::Gaussian, i as u64))?,
                false,
            )),
            AttackKind::Fgsm | AttackKind::Bim => {
                // unknown entries come from a pool row, as for the universal attack
                let filler = self.pool_rows(i, 1).pop().expect("non-empty pool");
                let x_hat: Vec<f64> = x_db
                    .iter()
                    .zip(&filler)
                    .zip(&mask.known)
                    .map(|((x, f), &known)| if known { *x } else { *f })
                    .collect();
                let belief = BetaMatrix::from_db(mask.num_rus, mask.num_ues, &x_hat)?;
                let x_adv = if spec.kind == AttackKind::Fgsm {
                    adv.fgsm(&x_hat, &belief, mask, &cfg)?
                } else {
                    adv.bim(&x_hat, &belief, mask, &cfg)?.x_adv
                };
                let delta = x_adv
                    .iter()
                    .zip(&x_hat)
                    .zip(&mask.modifiable)
                    .map(|((a, s), &ok)| if ok { a - s } else { 0.0 })
                    .collect();
                Ok((Perturbation { delta }, false))
            }
            AttackKind::MUap => {
                let pool = self.pool_rows(i, campaign.uap_samples);
                let out = adv.m_uap(&x_db, mask, &pool, &cfg)?;
                Ok((out.perturbation, out.degenerate_spectrum))
            }
        }
    }

    pub(crate) fn evaluate_instance(
        &self,
        spec: &ScenarioSpec,
        campaign: &CampaignSpec,
        i: usize,
    ) -> Result<InstanceOutcome> {
        let (m, k) = (self.config.num_rus, self.config.num_ues);
        let mask = make_mask(spec.threat, &self.malicious_set(spec, i), m, k)?;
        let (delta, degenerate) = self.craft(spec, campaign, i, &mask)?;
        let budget_ok = !campaign.mask_uap && spec.kind == AttackKind::MUap
            || delta.check(&mask, spec.epsilon).is_ok();
        let beta = &self.instances[i];
        let reported = apply_attack(beta, &delta)?;
        let eta = predict_allocation(self.original, &reported)?;
        let c = self.config;
        let metrics = SpectralMetrics::evaluate(beta, &eta, c.total_power, c.noise_power, c.bandwidth)?;
        Ok(InstanceOutcome {
            se: metrics.se,
            min_se: metrics.min_se,
            sum_se: metrics.sum_se,
            ee: metrics.ee,
            budget_ok,
            degenerate,
        })
    }

    /// Metrics of one scenario over every instance.
    pub fn evaluate_scenario(&self, spec: &ScenarioSpec, campaign: &CampaignSpec) -> Result<ScenarioRow> {
        campaign.validate()?;
        let outcomes = (0..self.instances.len())
            .into_par_iter()
            .map(|i| self.evaluate_instance(spec, campaign, i))
            .collect::<Result<Vec<_>>>()?;
        ScenarioRow::aggregate(spec.clone(), &outcomes, self.seed)
    }

    pub fn run_campaign(&self, campaign: &CampaignSpec) -> Result<EvalReport> {
        let rows = campaign
            .scenarios()
            .iter()
            .map(|s| self.evaluate_scenario(s, campaign))
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalReport {
            fingerprint: self.fingerprint(),
            rows,
        })
    }

    /// One campaign per axis value (ascending), sharing every instance.
    pub fn sweep(&self, campaign: &CampaignSpec, axis: SweepAxis, values: &[f64]) -> Result<EvalReport> {
        if values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidConfig("sweep values must be sorted ascending".into()));
        }
        let mut rows = Vec::new();
        if campaign.include_clean {
            rows.push(self.evaluate_scenario(&ScenarioSpec::clean(), campaign)?);
        }
        for &v in values {
            let mut c = CampaignSpec {
                include_clean: false,
                ..campaign.clone()
            };
            match axis {
                SweepAxis::Epsilon => c.epsilons = vec![v],
                SweepAxis::MaliciousFraction => c.malicious_fraction = v,
            }
            for s in c.scenarios() {
                rows.push(self.evaluate_scenario(&s, &c)?);
            }
        }
        Ok(EvalReport {
            fingerprint: self.fingerprint(),
            rows,
        })
    }

    pub fn fingerprint(&self) -> ReportFingerprint {
        ReportFingerprint {
            seed: self.seed,
            instances: self.instances.len(),
            pool_size: self.pool.len(),
            network: self.config.clone(),
            original_model: self.original.fingerprint(),
            surrogate_model: self.surrogate.fingerprint(),
        }
    }
}

/// Median min-SE of the oracle labels and of the model's allocations over a
/// dataset's test split.
pub fn model_quality(dataset: &Dataset, model: &MlpModel) -> Result<(f64, f64)> {
    let c = &dataset.config;
    let pairs = dataset
        .test()
        .par_iter()
        .map(|s| {
            let ev = |eta| SpectralMetrics::evaluate(&s.beta, eta, c.total_power, c.noise_power, c.bandwidth);
            let analytic = ev(&s.eta)?.min_se;
            let predicted = ev(&predict_allocation(model, &s.beta)?)?.min_se;
            Ok((analytic, predicted))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (a, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok((compute_cdf(&a)?.median(), compute_cdf(&p)?.median()))
}
