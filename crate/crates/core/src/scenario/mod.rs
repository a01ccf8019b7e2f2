//! Network geometry, large-scale fading and labelled datasets.

pub(crate) mod dataset;
mod pathloss;

pub use dataset::{gen_dataset, gen_dataset_mmf, Dataset, DatasetOptions, LabeledSample};
pub use pathloss::{pathloss_db, PathLossParams};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::{db_to_linear, BetaMatrix};
use crate::rng::{self, Domain};

/// Physical and statistical parameters of one D-MIMO deployment.
///
/// Defaults reproduce the reference deployment: 16 RUs on a grid over a
/// 500 m square, 4 UEs, 0.2 W per RU, −92 dBm noise, 20 MHz per user and
/// 8 dB log-normal shadowing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub num_rus: usize,
    pub num_ues: usize,
    /// meters
    pub area_side: f64,
    /// P_t, watts per RU
    pub total_power: f64,
    /// σ², watts per UE
    pub noise_power: f64,
    /// Hz per UE
    pub bandwidth: f64,
    /// dB
    pub shadowing_std: f64,
    pub pathloss: PathLossParams,
    pub master_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_rus: 16,
            num_ues: 4,
            area_side: 500.0,
            total_power: 0.2,
            noise_power: dbm_to_watts(-92.0),
            bandwidth: 20e6,
            shadowing_std: 8.0,
            pathloss: PathLossParams::default(),
            master_seed: 2024,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.num_rus == 0 || self.num_ues == 0 {
            return fail("num_rus and num_ues must be positive");
        }
        if !(self.area_side > 0.0) {
            return fail("area_side must be positive");
        }
        if !(self.total_power > 0.0 && self.noise_power > 0.0 && self.bandwidth > 0.0) {
            return fail("total_power, noise_power and bandwidth must be positive");
        }
        if !(self.shadowing_std >= 0.0) {
            return fail("shadowing_std must be non-negative");
        }
        let pl = &self.pathloss;
        if !(pl.d0 > 0.0 && pl.d0 < pl.d1) {
            return fail("path loss breakpoints need 0 < d0 < d1");
        }
        Ok(())
    }

    /// Number of model features, M·K.
    pub fn dim(&self) -> usize {
        self.num_rus * self.num_ues
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub ru_positions: Vec<Point>,
    pub ue_positions: Vec<Point>,
}

/// √M × √M RU grid, centred in the square with half a cell of margin.
pub fn place_rus(config: &NetworkConfig) -> Result<Vec<Point>> {
    let side = (config.num_rus as f64).sqrt().round() as usize;
    if side * side != config.num_rus {
        return Err(Error::NonSquareRuCount(config.num_rus));
    }
    let spacing = config.area_side / side as f64;
    let mut out = Vec::with_capacity(config.num_rus);
    for row in 0..side {
        for col in 0..side {
            out.push(Point {
                x: spacing * (col as f64 + 0.5),
                y: spacing * (row as f64 + 0.5),
            });
        }
    }
    Ok(out)
}

/// `num_ues` i.i.d. uniform points in the square.
pub fn sample_ue_positions<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Vec<Point> {
    (0..config.num_ues)
        .map(|_| Point {
            x: rng.gen::<f64>() * config.area_side,
            y: rng.gen::<f64>() * config.area_side,
        })
        .collect()
}

/// Path loss plus i.i.d. log-normal shadowing, returned in linear scale.
pub fn gen_beta<R: Rng + ?Sized>(
    config: &NetworkConfig,
    placement: &Placement,
    rng: &mut R,
) -> Result<BetaMatrix> {
    let (m_count, k_count) = (placement.ru_positions.len(), placement.ue_positions.len());
    let shadow = Normal::new(0.0, config.shadowing_std)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut values = Vec::with_capacity(m_count * k_count);
    for ru in &placement.ru_positions {
        for ue in &placement.ue_positions {
            let db = pathloss_db(ru.distance(ue), &config.pathloss) + shadow.sample(rng);
            values.push(db_to_linear(db));
        }
    }
    BetaMatrix::new(m_count, k_count, values)
}

/// Draws scenario `index` from the stream keyed by `(seed, index)`.
pub fn sample_scenario(
    config: &NetworkConfig,
    seed: u64,
    index: u64,
) -> Result<(Placement, BetaMatrix)> {
    sample_scenario_with(config, &mut rng::stream(seed, Domain::Scenario, index))
}

/// Draws UE positions and then fading from `rng`.
pub fn sample_scenario_with<R: Rng + ?Sized>(
    config: &NetworkConfig,
    rng: &mut R,
) -> Result<(Placement, BetaMatrix)> {
    let placement = Placement {
        ru_positions: place_rus(config)?,
        ue_positions: sample_ue_positions(config, rng),
    };
    let beta = gen_beta(config, &placement, rng)?;
    Ok((placement, beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn grid_of_sixteen() {
        let cfg = NetworkConfig::default();
        let rus = place_rus(&cfg).unwrap();
        assert_eq!(rus.len(), 16);
        assert_eq!(rus[0], Point { x: 62.5, y: 62.5 });
        assert_eq!(rus[1].x - rus[0].x, 125.0);
        assert_eq!(rus[4].y - rus[0].y, 125.0);
        assert_eq!(rus[15], Point { x: 437.5, y: 437.5 });
    }

    #[test]
    fn single_ru_sits_in_the_centre() {
        let cfg = NetworkConfig {
            num_rus: 1,
            ..Default::default()
        };
        assert_eq!(place_rus(&cfg).unwrap(), vec![Point { x: 250.0, y: 250.0 }]);
    }

    #[test]
    fn non_square_ru_count_is_rejected() {
        let cfg = NetworkConfig {
            num_rus: 15,
            ..Default::default()
        };
        assert!(matches!(place_rus(&cfg), Err(Error::NonSquareRuCount(15))));
    }

    #[test]
    fn interior_nearest_neighbour_spacing_is_constant() {
        let rus = place_rus(&NetworkConfig::default()).unwrap();
        for (i, a) in rus.iter().enumerate() {
            let nearest = rus
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| a.distance(b))
                .fold(f64::INFINITY, f64::min);
            assert!((nearest - 125.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ue_sampling() {
        let cfg = NetworkConfig::default();
        let a = sample_ue_positions(&cfg, &mut rng::stream(1, Domain::Scenario, 0));
        let b = sample_ue_positions(&cfg, &mut rng::stream(1, Domain::Scenario, 0));
        assert_eq!(a, b);
        assert!(a
            .iter()
            .all(|p| (0.0..=500.0).contains(&p.x) && (0.0..=500.0).contains(&p.y)));

        let none = NetworkConfig {
            num_ues: 0,
            ..Default::default()
        };
        assert!(sample_ue_positions(&none, &mut rng::stream(1, Domain::Scenario, 0)).is_empty());

        let many = NetworkConfig {
            num_ues: 100_000,
            ..Default::default()
        };
        let pts = sample_ue_positions(&many, &mut rand_chacha::ChaCha8Rng::seed_from_u64(9));
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / pts.len() as f64;
        assert!((mx - 250.0).abs() < 5.0);
        assert!((my - 250.0).abs() < 5.0);
    }

    #[test]
    fn zero_shadowing_is_pure_geometry() {
        let cfg = NetworkConfig {
            shadowing_std: 0.0,
            ..Default::default()
        };
        let p = Point { x: 100.0, y: 321.0 };
        let placement = Placement {
            ru_positions: place_rus(&cfg).unwrap(),
            ue_positions: vec![p, Point { x: 10.0, y: 10.0 }, p, p],
        };
        let beta = gen_beta(&cfg, &placement, &mut rng::stream(0, Domain::Scenario, 0)).unwrap();
        for m in 0..16 {
            assert_eq!(beta.get(m, 0), beta.get(m, 2));
            assert_eq!(beta.get(m, 0), beta.get(m, 3));
            let d = placement.ru_positions[m].distance(&p);
            let expect = db_to_linear(pathloss_db(d, &cfg.pathloss));
            assert!((beta.get(m, 0) / expect - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scenario_is_deterministic() {
        let cfg = NetworkConfig::default();
        let (pa, ba) = sample_scenario(&cfg, 5, 17).unwrap();
        let (pb, bb) = sample_scenario(&cfg, 5, 17).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(ba, bb);
        let (_, bc) = sample_scenario(&cfg, 5, 18).unwrap();
        assert_ne!(ba, bc);
    }

    #[test]
    fn config_validation() {
        assert!(NetworkConfig::default().validate().is_ok());
        let mut bad = NetworkConfig::default();
        bad.pathloss.d0 = 60.0;
        assert!(bad.validate().is_err());
        let bad = NetworkConfig {
            noise_power: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
