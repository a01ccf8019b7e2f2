use serde::{Deserialize, Serialize};

/// Three-slope path-loss model: 35 dB/decade beyond `d1`, 20 dB/decade
/// between `d0` and `d1`, flat below `d0`. The fixed offset is the
/// Hata-COST231 term for the given carrier and antenna heights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathLossParams {
    /// meters
    pub d0: f64,
    /// meters
    pub d1: f64,
    pub carrier_freq_mhz: f64,
    /// meters
    pub ru_height: f64,
    /// meters
    pub ue_height: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            d0: 10.0,
            d1: 50.0,
            carrier_freq_mhz: 1900.0,
            ru_height: 15.0,
            ue_height: 1.65,
        }
    }
}

impl PathLossParams {
    /// Hata-COST231 constant L in dB.
    pub fn offset_db(&self) -> f64 {
        let lf = self.carrier_freq_mhz.log10();
        46.3 + 33.9 * lf - 13.82 * self.ru_height.log10() - (1.1 * lf - 0.7) * self.ue_height
            + (1.56 * lf - 0.8)
    }
}

const MIN_DISTANCE_M: f64 = 1.0;

/// Channel gain in dB (a negative number) at `distance` meters.
pub fn pathloss_db(distance: f64, params: &PathLossParams) -> f64 {
    let km = |m: f64| m / 1000.0;
    let d = distance.max(MIN_DISTANCE_M);
    let offset = params.offset_db();
    if d > params.d1 {
        -offset - 35.0 * km(d).log10()
    } else if d > params.d0 {
        -offset - 15.0 * km(params.d1).log10() - 20.0 * km(d).log10()
    } else {
        -offset - 15.0 * km(params.d1).log10() - 20.0 * km(params.d0).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn far_slope_is_35_db_per_decade() {
        let p = PathLossParams::default();
        let diff = pathloss_db(2.0 * p.d1, &p) - pathloss_db(p.d1, &p);
        assert!((diff + 35.0 * 2f64.log10()).abs() < 1e-9);
        assert!((diff + 10.536).abs() < 1e-3);
    }

    #[test]
    fn flat_below_d0_and_continuous() {
        let p = PathLossParams::default();
        let flat = pathloss_db(p.d0, &p);
        for d in [0.0, 0.3, 1.0, 5.0, 9.999] {
            assert_eq!(pathloss_db(d, &p), flat);
        }
        for b in [p.d0, p.d1] {
            let lo = pathloss_db(b * (1.0 - 1e-12), &p);
            let hi = pathloss_db(b * (1.0 + 1e-12), &p);
            assert!((lo - hi).abs() < 1e-9);
        }
    }

    #[test]
    fn gain_never_increases_with_distance() {
        let p = PathLossParams::default();
        let mut prev = f64::INFINITY;
        for i in 0..2000 {
            let g = pathloss_db(i as f64 * 0.5, &p);
            assert!(g <= prev);
            prev = g;
        }
    }

    #[test]
    fn reference_offset() {
        // 46.3 + 33.9·log10(1900) − 13.82·log10(15) − (1.1·log10(1900) − 0.7)·1.65 + 1.56·log10(1900) − 0.8
        let l = PathLossParams::default().offset_db();
        assert!((l - 140.7151).abs() < 1e-3, "{l}");
    }
}
