use serde::{Deserialize, Serialize};

/// Distinct cities closer than this are treated as this far apart.
pub const DISTANCE_FLOOR_KM: f64 = 1.0;

/// `log(max(D, 1 km))` for distinct cities and exactly 0 for the origin.
pub fn log_distance(distance_km: f64, same_city: bool) -> f64 {
    if same_city {
        0.0
    } else {
        distance_km.max(DISTANCE_FLOOR_KM).ln()
    }
}

/// Friends enter utility as `log(1 + count)`.
pub fn log_friends(count: u32) -> f64 {
    f64::from(count).ln_1p()
}

/// Attributes of one destination relative to one chooser's origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltCovariates {
    pub same_city: bool,
    pub log_friends: f64,
    pub log_distance: f64,
    pub out_of_state: bool,
}

/// Network and distance coefficients. `stay` is the bonus for remaining in
/// the origin city; every term enters utility additively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub gamma: f64,
    pub stay: f64,
    pub delta_v: f64,
    pub delta_vs: f64,
    pub delta_fn: f64,
    pub delta_vn: f64,
    pub delta_vsn: f64,
}

impl Coefficients {
    pub const TABLE6: Coefficients = Coefficients {
        gamma: 0.71,
        stay: 6.3,
        delta_v: -0.55,
        delta_vs: 0.05,
        delta_fn: -0.57,
        delta_vn: 0.08,
        delta_vsn: -0.02,
    };

    pub const ZERO: Coefficients = Coefficients {
        gamma: 0.0,
        stay: 0.0,
        delta_v: 0.0,
        delta_vs: 0.0,
        delta_fn: 0.0,
        delta_vn: 0.0,
        delta_vsn: 0.0,
    };

    /// Sum of all network and distance terms.
    pub fn network_distance_utility(&self, x: &AltCovariates) -> f64 {
        let same = f64::from(u8::from(x.same_city));
        let oos = f64::from(u8::from(x.out_of_state));
        let (n, ld) = (x.log_friends, x.log_distance);
        self.gamma * n
            + self.stay * same
            + self.delta_v * ld
            + self.delta_vs * ld * oos
            + self.delta_fn * same * n
            + self.delta_vn * ld * n
            + self.delta_vsn * ld * oos * n
    }

    /// Distance terms only (no network level or interactions).
    pub fn distance_utility(&self, x: &AltCovariates) -> f64 {
        let same = f64::from(u8::from(x.same_city));
        let oos = f64::from(u8::from(x.out_of_state));
        self.stay * same + self.delta_v * x.log_distance + self.delta_vs * x.log_distance * oos
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_city_with_ten_friends() {
        let x = AltCovariates {
            same_city: true,
            log_friends: log_friends(10),
            log_distance: log_distance(0.0, true),
            out_of_state: false,
        };
        let v = Coefficients::TABLE6.network_distance_utility(&x);
        let want = 6.3 + 0.71 * 11f64.ln() - 0.57 * 11f64.ln();
        assert!((v - want).abs() < 1e-14);
    }

    #[test]
    fn friend_change_at_far_city_is_linear_in_log_friends() {
        let c = Coefficients::TABLE6;
        let base = AltCovariates {
            same_city: false,
            log_friends: log_friends(5),
            log_distance: log_distance(800.0, false),
            out_of_state: true,
        };
        let more = AltCovariates {
            log_friends: log_friends(10),
            ..base
        };
        let dn = more.log_friends - base.log_friends;
        let want = (c.gamma + c.delta_vn * base.log_distance + c.delta_vsn * base.log_distance) * dn;
        let got = c.network_distance_utility(&more) - c.network_distance_utility(&base);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn distance_floor() {
        assert_eq!(log_distance(0.3, false), 0.0);
        assert_eq!(log_distance(0.0, true), 0.0);
        assert!((log_distance(100.0, false) - 100f64.ln()).abs() < 1e-15);
    }
}
