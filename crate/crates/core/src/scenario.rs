//! Reproducible single-cell instances and the equal-power baseline.
//!
//! Users are dropped uniformly in a disc around the BS. Every link gets
//! log-distance path loss times i.i.d. unit-mean exponential (Rayleigh power)
//! fading per subchannel. Randomness comes from ChaCha8 seeded with
//! `seed`; each user and each link type draws from its own stream so that
//! adding users leaves the existing draws untouched.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping3d::RateTensor;
use crate::model::{
    downlink_rate_unchecked, uplink_rate_unchecked, Assignment3D, PowerAllocation, Scenario, SCENARIO_FORMAT_VERSION,
};

/// Name of the generator and stream layout; bump when draws change.
pub const RNG_SCHEME: &str = "chacha8-streams-v1";

const STREAM_UUE_POS: u64 = 1 << 48;
const STREAM_DUE_POS: u64 = 2 << 48;
const STREAM_UUE_BS: u64 = 3 << 48;
const STREAM_BS_DUE: u64 = 4 << 48;
const STREAM_UUE_DUE: u64 = 5 << 48;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

/// Reference gain at 1 m giving a 10 dB mean cell-edge SNR per subchannel
/// when a 20 dBm BS splits its power equally over 64 subchannels of a
/// 180 kHz band with -126 dBm/Hz noise and exponent 3.7 at 200 m.
pub fn default_reference_gain_db() -> f64 {
    let (k, radius, exponent) = (64.0f64, 200.0f64, 3.7);
    let noise_dbm = -126.0 + linear_to_db(180e3 / k);
    let per_sub_dbm = 20.0 - linear_to_db(k);
    let edge_gain_db = noise_dbm + 10.0 - per_sub_dbm;
    edge_gain_db + 10.0 * exponent * radius.log10()
}

fn d_radius() -> f64 {
    200.0
}
fn d_uue() -> usize {
    8
}
fn d_due() -> usize {
    8
}
fn d_sub() -> usize {
    64
}
fn d_noise() -> f64 {
    -126.0
}
fn d_bw() -> f64 {
    180e3
}
fn d_si() -> f64 {
    3.0
}
fn d_bs_power() -> f64 {
    20.0
}
fn d_uue_offset() -> f64 {
    -5.0
}
fn d_exponent() -> f64 {
    3.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    #[serde(default = "d_radius")]
    pub cell_radius_m: f64,
    #[serde(rename = "M", default = "d_uue")]
    pub num_uue: usize,
    #[serde(rename = "N", default = "d_due")]
    pub num_due: usize,
    #[serde(rename = "K", default = "d_sub")]
    pub num_sub: usize,
    #[serde(default = "d_noise")]
    pub noise_density_dbm_hz: f64,
    #[serde(default = "d_bw")]
    pub bandwidth_hz: f64,
    /// Self-interference power above the BS noise floor.
    #[serde(default = "d_si")]
    pub si_over_noise_db: f64,
    #[serde(default = "d_bs_power")]
    pub bs_power_dbm: f64,
    /// Uplink user budget relative to the BS budget.
    #[serde(default = "d_uue_offset")]
    pub uue_power_offset_db: f64,
    #[serde(default = "d_exponent")]
    pub pathloss_exponent: f64,
    #[serde(default = "default_reference_gain_db")]
    pub reference_gain_db: f64,
    /// Downlink-user noise relative to BS receiver noise.
    #[serde(default)]
    pub due_noise_offset_db: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            cell_radius_m: d_radius(),
            num_uue: d_uue(),
            num_due: d_due(),
            num_sub: d_sub(),
            noise_density_dbm_hz: d_noise(),
            bandwidth_hz: d_bw(),
            si_over_noise_db: d_si(),
            bs_power_dbm: d_bs_power(),
            uue_power_offset_db: d_uue_offset(),
            pathloss_exponent: d_exponent(),
            reference_gain_db: default_reference_gain_db(),
            due_noise_offset_db: 0.0,
            seed: 0,
        }
    }
}

impl ScenarioParams {
    pub fn with_size(mut self, num_uue: usize, num_due: usize, num_sub: usize) -> Self {
        self.num_uue = num_uue;
        self.num_due = num_due;
        self.num_sub = num_sub;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_radius_m.is_finite() && self.cell_radius_m > 0.0) {
            return Err(Error::validation("cell_radius_m", "must be finite and > 0"));
        }
        for (field, v) in [("M", self.num_uue), ("N", self.num_due), ("K", self.num_sub)] {
            if v == 0 {
                return Err(Error::validation(field, "must be at least 1"));
            }
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(Error::validation("bandwidth_hz", "must be finite and > 0"));
        }
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent >= 0.0) {
            return Err(Error::validation("pathloss_exponent", "must be finite and >= 0"));
        }
        for (field, v) in [
            ("noise_density_dbm_hz", self.noise_density_dbm_hz),
            ("si_over_noise_db", self.si_over_noise_db),
            ("bs_power_dbm", self.bs_power_dbm),
            ("uue_power_offset_db", self.uue_power_offset_db),
            ("reference_gain_db", self.reference_gain_db),
            ("due_noise_offset_db", self.due_noise_offset_db),
        ] {
            if !v.is_finite() {
                return Err(Error::validation(field, "must be finite"));
            }
        }
        Ok(())
    }

    pub fn subchannel_bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz / self.num_sub as f64
    }
}

/// User positions in metres, BS at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub uue: Vec<(f64, f64)>,
    pub due: Vec<(f64, f64)>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn drop_in_disc(rng: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    (r * theta.cos(), r * theta.sin())
}

pub fn place_users(params: &ScenarioParams) -> Layout {
    let place = |base: u64, count: usize| {
        (0..count)
            .map(|i| drop_in_disc(&mut stream_rng(params.seed, base | i as u64), params.cell_radius_m))
            .collect()
    };
    Layout {
        uue: place(STREAM_UUE_POS, params.num_uue),
        due: place(STREAM_DUE_POS, params.num_due),
    }
}

fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

pub fn generate_scenario(params: &ScenarioParams) -> Result<Scenario> {
    params.validate()?;
    let layout = place_users(params);
    let (m_count, n_count, k_count) = (params.num_uue, params.num_due, params.num_sub);
    let ref_gain = db_to_linear(params.reference_gain_db);
    // distances clamp at the 1 m reference
    let mean_gain = |d: f64| ref_gain * d.max(1.0).powf(-params.pathloss_exponent);
    let faded = |stream: u64, mean: f64| -> Vec<f64> {
        let mut rng = stream_rng(params.seed, stream);
        (0..k_count)
            .map(|_| {
                let fade: f64 = Exp1.sample(&mut rng);
                mean * fade
            })
            .collect::<Vec<f64>>()
    };

    let bs = (0.0, 0.0);
    let g_ub = (0..m_count)
        .map(|m| faded(STREAM_UUE_BS | m as u64, mean_gain(distance(layout.uue[m], bs))))
        .collect();
    let g_bn = (0..n_count)
        .map(|n| faded(STREAM_BS_DUE | n as u64, mean_gain(distance(layout.due[n], bs))))
        .collect();
    let g_mn = (0..m_count)
        .map(|m| {
            (0..n_count)
                .map(|n| {
                    let stream = STREAM_UUE_DUE | ((m as u64) << 24) | n as u64;
                    faded(stream, mean_gain(distance(layout.uue[m], layout.due[n])))
                })
                .collect()
        })
        .collect();

    let sigma2_bs = dbm_to_watts(params.noise_density_dbm_hz) * params.subchannel_bandwidth_hz();
    let bs_budget = dbm_to_watts(params.bs_power_dbm);
    let scenario = Scenario {
        format_version: SCENARIO_FORMAT_VERSION,
        num_uue: m_count,
        num_due: n_count,
        num_sub: k_count,
        g_ub,
        g_bn,
        g_mn,
        sigma2_si: sigma2_bs * db_to_linear(params.si_over_noise_db),
        sigma2_bs,
        sigma2_due: sigma2_bs * db_to_linear(params.due_noise_offset_db),
        bs_budget,
        uue_budget: vec![bs_budget * db_to_linear(params.uue_power_offset_db); m_count],
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Same channels, different BS budget; uplink budgets follow the same offset.
pub fn with_bs_power(scenario: &Scenario, bs_power_dbm: f64, uue_power_offset_db: f64) -> Scenario {
    let mut s = scenario.clone();
    s.bs_budget = dbm_to_watts(bs_power_dbm);
    s.uue_budget = vec![s.bs_budget * db_to_linear(uue_power_offset_db); s.num_uue];
    s
}

/// BS power split evenly over subchannels; each uplink user splits its
/// budget evenly over the subchannels it owns.
pub fn equal_power_allocation(scenario: &Scenario, assignment: &Assignment3D) -> Result<PowerAllocation> {
    assignment.validate(scenario.dims())?;
    let p_down = scenario.bs_budget / scenario.num_sub as f64;
    let owned: Vec<usize> = (0..scenario.num_uue)
        .map(|m| assignment.subchannels_of_uue(m))
        .collect();
    let mut powers = PowerAllocation::new();
    for t in assignment.triples() {
        powers.insert(t, scenario.uue_budget[t.uue] / owned[t.uue] as f64, p_down)?;
    }
    Ok(powers)
}

/// Per-triple rates under equal power, assuming each uplink user fills its
/// subchannel capacity. Exact for every feasible mapping when `M = N = K`.
pub fn equal_power_rates(scenario: &Scenario) -> Result<RateTensor> {
    let dims = scenario.dims();
    let p_down = scenario.bs_budget / dims.sub as f64;
    let cap = dims.uue_cap() as f64;
    RateTensor::from_fn(dims, |m, n, k| {
        let g = scenario.gains_unchecked(m, n, k);
        let p_up = scenario.uue_budget[m] / cap;
        uplink_rate_unchecked(p_up, g.a_ub) + downlink_rate_unchecked(p_down, p_up, g.a_bn, g.a_mn)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{total_throughput, Dims};

    #[test]
    fn self_interference_and_budget_offsets() {
        let params = ScenarioParams {
            bs_power_dbm: 20.0,
            ..ScenarioParams::default()
        }
        .with_size(2, 2, 4);
        let s = generate_scenario(&params).unwrap();
        assert!((s.sigma2_si / s.sigma2_bs - 1.9952623149688795).abs() < 1e-12);
        assert!((watts_to_dbm(s.uue_budget[0]) - 15.0).abs() < 1e-9);
        assert!((watts_to_dbm(s.bs_budget) - 20.0).abs() < 1e-9);
        assert_eq!(s.sigma2_due, s.sigma2_bs);
        let expected_noise = dbm_to_watts(-126.0) * 180e3 / 4.0;
        assert!((s.sigma2_bs - expected_noise).abs() <= 1e-12 * expected_noise);
    }

    #[test]
    fn seed_determinism() {
        let params = ScenarioParams {
            seed: 42,
            ..ScenarioParams::default()
        };
        let a = generate_scenario(&params).unwrap();
        let b = generate_scenario(&params).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = generate_scenario(&ScenarioParams { seed: 43, ..params }).unwrap();
        assert_ne!(a.g_ub, c.g_ub);
    }

    #[test]
    fn adding_users_keeps_existing_draws() {
        let small = generate_scenario(&ScenarioParams::default().with_size(2, 2, 8)).unwrap();
        let big = generate_scenario(&ScenarioParams::default().with_size(3, 4, 8)).unwrap();
        assert_eq!(small.g_ub[..], big.g_ub[..2]);
        assert_eq!(small.g_bn[..], big.g_bn[..2]);
        assert_eq!(small.g_mn[1][..2], big.g_mn[1][..2]);
    }

    #[test]
    fn gains_positive_and_users_inside_cell() {
        for seed in 0..20 {
            let params = ScenarioParams {
                seed,
                ..ScenarioParams::default()
            };
            let s = generate_scenario(&params).unwrap();
            let all = s.g_ub.iter().chain(&s.g_bn).chain(s.g_mn.iter().flatten()).flatten();
            assert!(all.into_iter().all(|g| g.is_finite() && *g > 0.0));
            let layout = place_users(&params);
            for p in layout.uue.iter().chain(&layout.due) {
                assert!(p.0.hypot(p.1) <= params.cell_radius_m);
            }
        }
    }

    #[test]
    fn db_round_trip() {
        for x in [1e-15, 3.7e-3, 1.0, 42.0, 9.9e6] {
            assert!((dbm_to_watts(watts_to_dbm(x)) - x).abs() <= 1e-9 * x);
            assert!((db_to_linear(linear_to_db(x)) - x).abs() <= 1e-9 * x);
        }
    }

    #[test]
    fn invalid_params() {
        let bad = ScenarioParams {
            cell_radius_m: 0.0,
            ..ScenarioParams::default()
        };
        assert!(matches!(generate_scenario(&bad), Err(Error::Validation { .. })));
        let bad = ScenarioParams::default().with_size(0, 1, 1);
        assert!(matches!(generate_scenario(&bad), Err(Error::Validation { .. })));
    }

    #[test]
    fn equal_power_examples() {
        let mut s = generate_scenario(&ScenarioParams::default().with_size(2, 2, 4)).unwrap();
        s.bs_budget = 2.0;
        s.uue_budget = vec![0.8, 0.8];
        let a = Assignment3D::from_pairs(vec![(0, 0), (1, 1), (0, 1), (1, 0)]);
        let p = equal_power_allocation(&s, &a).unwrap();
        assert!(p.iter().all(|(_, lp)| lp.down == 0.5));
        assert!(p.iter().all(|(_, lp)| lp.up == 0.4));
        assert_eq!(p.total_down(), 2.0);
        assert_eq!(p.up_per_uue(2), vec![0.8, 0.8]);

        let mut wide = generate_scenario(&ScenarioParams::default().with_size(1, 8, 8)).unwrap();
        wide.uue_budget = vec![0.8];
        let a = Assignment3D::from_pairs((0..8).map(|n| (0, n)).collect());
        let p = equal_power_allocation(&wide, &a).unwrap();
        assert!(p.iter().all(|(_, lp)| (lp.up - 0.1).abs() < 1e-15));
    }

    #[test]
    fn equal_power_rates_match_throughput_in_square_mode() {
        let s = generate_scenario(
            &ScenarioParams {
                seed: 3,
                ..ScenarioParams::default()
            }
            .with_size(4, 4, 4),
        )
        .unwrap();
        let rates = equal_power_rates(&s).unwrap();
        assert_eq!(rates.dims(), Dims::new(4, 4, 4));
        let a = crate::mapping3d::random_3d(&rates, 1);
        let p = equal_power_allocation(&s, &a).unwrap();
        let t = total_throughput(&a, &p, &s).unwrap();
        assert!((t - rates.objective(&a)).abs() <= 1e-12 * t);
    }
}
