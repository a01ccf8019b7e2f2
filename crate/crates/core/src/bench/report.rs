use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stats::{bootstrap_se, compute_cdf, mean_of, percentile_of};
use super::{InstanceOutcome, ScenarioSpec, BOOTSTRAP_RESAMPLES};
use crate::error::{Error, Result};
use crate::scenario::NetworkConfig;

/// Metric names in report order.
pub const METRICS: [&str; 6] = [
    "median_se",
    "p5_se",
    "median_min_se",
    "p5_min_se",
    "mean_ee",
    "mean_sum_se",
];

/// Identifies every input a report depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFingerprint {
    pub seed: u64,
    pub instances: usize,
    pub pool_size: usize,
    pub network: NetworkConfig,
    pub original_model: String,
    pub surrogate_model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    /// bootstrap standard error over instances
    pub bootstrap_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: ScenarioSpec,
    pub label: String,
    pub instances: usize,
    pub metrics: Vec<Metric>,
    pub budget_checks: usize,
    pub budget_violations: usize,
    pub degenerate_spectra: usize,
    /// pooled per-user SE, `(value, probability)`
    pub se_cdf: Vec<(f64, f64)>,
    /// per-instance minimum SE, `(value, probability)`
    pub min_se_cdf: Vec<(f64, f64)>,
    /// per-user SE, instance-major
    pub per_user_se: Vec<f64>,
    /// per-instance minimum SE in instance order
    pub min_se: Vec<f64>,
    /// per-instance EE in instance order
    pub ee: Vec<f64>,
}

impl ScenarioRow {
    pub(crate) fn aggregate(scenario: ScenarioSpec, outcomes: &[InstanceOutcome], seed: u64) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::EmptySamples);
        }
        let per_user: Vec<Vec<f64>> = outcomes.iter().map(|o| o.se.clone()).collect();
        let min_se: Vec<f64> = outcomes.iter().map(|o| o.min_se).collect();
        let ee: Vec<f64> = outcomes.iter().map(|o| o.ee).collect();
        let sum_se: Vec<f64> = outcomes.iter().map(|o| o.sum_se).collect();
        let pooled: Vec<f64> = per_user.iter().flatten().copied().collect();
        let se_cdf = compute_cdf(&pooled)?;
        let min_cdf = compute_cdf(&min_se)?;
        let singletons = |v: &[f64]| v.iter().map(|x| vec![*x]).collect::<Vec<_>>();
        let (min_groups, ee_groups, sum_groups) = (singletons(&min_se), singletons(&ee), singletons(&sum_se));
        let boot = |groups: &[Vec<f64>], stat: &dyn Fn(&mut [f64]) -> f64| {
            bootstrap_se(groups, BOOTSTRAP_RESAMPLES, seed, stat)
        };
        let mut eev = ee.clone();
        let mut sumv = sum_se.clone();
        let values = [
            (se_cdf.median(), boot(&per_user, &|b| percentile_of(b, 0.5))),
            (se_cdf.p5(), boot(&per_user, &|b| percentile_of(b, 0.05))),
            (min_cdf.median(), boot(&min_groups, &|b| percentile_of(b, 0.5))),
            (min_cdf.p5(), boot(&min_groups, &|b| percentile_of(b, 0.05))),
            (mean_of(&mut eev), boot(&ee_groups, &mean_of)),
            (mean_of(&mut sumv), boot(&sum_groups, &mean_of)),
        ];
        let metrics = METRICS
            .iter()
            .zip(values)
            .map(|(name, (value, se))| Metric {
                name: (*name).to_string(),
                value,
                bootstrap_se: se,
            })
            .collect();
        Ok(Self {
            label: scenario.label(),
            scenario,
            instances: outcomes.len(),
            metrics,
            budget_checks: outcomes.len(),
            budget_violations: outcomes.iter().filter(|o| !o.budget_ok).count(),
            degenerate_spectra: outcomes.iter().filter(|o| o.degenerate).count(),
            se_cdf: se_cdf.series(),
            min_se_cdf: min_cdf.series(),
            per_user_se: pooled,
            min_se,
            ee,
        })
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    fn value(&self, name: &str) -> f64 {
        self.metric(name).map_or(f64::NAN, |m| m.value)
    }

    pub fn median_se(&self) -> f64 {
        self.value("median_se")
    }

    pub fn p5_se(&self) -> f64 {
        self.value("p5_se")
    }

    pub fn median_min_se(&self) -> f64 {
        self.value("median_min_se")
    }

    pub fn mean_ee(&self) -> f64 {
        self.value("mean_ee")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Json,
    /// metric records; see [`EvalReport::write_csv`]
    Csv,
    /// CDF series; see [`EvalReport::write_cdf_csv`]
    CdfCsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fingerprint: ReportFingerprint,
    pub rows: Vec<ScenarioRow>,
}

impl EvalReport {
    pub fn find(&self, spec: &ScenarioSpec) -> Option<&ScenarioRow> {
        self.rows.iter().find(|r| &r.scenario == spec)
    }

    /// sha256 of the fingerprint's canonical JSON.
    pub fn fingerprint_hash(&self) -> String {
        let json = serde_json::to_vec(&self.fingerprint).expect("plain data");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One record per scenario and metric.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "scenario",
            "label",
            "kind",
            "crafted_with",
            "threat",
            "malicious_fraction",
            "epsilon",
            "metric",
            "value",
            "bootstrap_se",
        ])?;
        for (i, row) in self.rows.iter().enumerate() {
            let s = &row.scenario;
            let tag = |v: serde_json::Value| v.as_str().unwrap_or_default().to_string();
            let (kind, role, threat) = (
                tag(serde_json::to_value(s.kind)?),
                tag(serde_json::to_value(s.crafted_with)?),
                tag(serde_json::to_value(s.threat)?),
            );
            for m in &row.metrics {
                w.write_record([
                    i.to_string(),
                    row.label.clone(),
                    kind.clone(),
                    role.clone(),
                    threat.clone(),
                    s.malicious_fraction.to_string(),
                    s.epsilon.to_string(),
                    m.name.clone(),
                    m.value.to_string(),
                    m.bootstrap_se.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Both CDF series of every scenario.
    pub fn write_cdf_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "label", "series", "value", "probability"])?;
        for (i, row) in self.rows.iter().enumerate() {
            for (series, points) in [("se", &row.se_cdf), ("min_se", &row.min_se_cdf)] {
                for (v, p) in points {
                    w.write_record([
                        i.to_string(),
                        row.label.clone(),
                        series.to_string(),
                        v.to_string(),
                        p.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn export(&self, format: ExportFormat, path: impl AsRef<Path>) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        match format {
            ExportFormat::Json => {
                let mut file = file;
                file.write_all(self.to_json()?.as_bytes())?;
                file.flush()?;
                Ok(())
            }
            ExportFormat::Csv => self.write_csv(file),
            ExportFormat::CdfCsv => self.write_cdf_csv(file),
        }
    }

    /// `report.json`, `metrics.csv` and `cdf.csv` under `dir`.
    pub fn save_all(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.export(ExportFormat::Json, dir.join("report.json"))?;
        self.export(ExportFormat::Csv, dir.join("metrics.csv"))?;
        self.export(ExportFormat::CdfCsv, dir.join("cdf.csv"))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
