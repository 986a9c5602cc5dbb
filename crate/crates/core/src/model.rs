//! Physical quantities of one full-duplex OFDMA cell and the per-subchannel
//! rate model.
//!
//! All quantities are linear SI units. Rates are spectral efficiencies in
//! bits/s/Hz per subchannel (base-2 logarithm); conversion to bits/s happens
//! only when results are reported.

use std::collections::BTreeMap;
use std::f64::consts::LOG2_E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version tag written into every serialized [`Scenario`].
pub const SCENARIO_FORMAT_VERSION: u32 = 1;

fn default_format_version() -> u32 {
    SCENARIO_FORMAT_VERSION
}

/// One problem instance: channel power gains, noise powers and budgets.
///
/// Gains are `|h|^2` (dimensionless), noise powers and budgets are watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    /// Number of uplink users.
    #[serde(rename = "M")]
    pub num_uue: usize,
    /// Number of downlink users.
    #[serde(rename = "N")]
    pub num_due: usize,
    /// Number of subchannels.
    #[serde(rename = "K")]
    pub num_sub: usize,
    /// Uplink user -> BS gain, `[m][k]`.
    pub g_ub: Vec<Vec<f64>>,
    /// BS -> downlink user gain, `[n][k]`.
    pub g_bn: Vec<Vec<f64>>,
    /// Uplink user -> downlink user interference gain, `[m][n][k]`.
    pub g_mn: Vec<Vec<Vec<f64>>>,
    /// Residual self-interference power at the BS receiver.
    #[serde(rename = "sigma2_D")]
    pub sigma2_si: f64,
    /// BS receiver noise power.
    #[serde(rename = "sigma2_B")]
    pub sigma2_bs: f64,
    /// Downlink user receiver noise power.
    #[serde(rename = "sigma2_N")]
    pub sigma2_due: f64,
    /// BS total transmit power budget.
    #[serde(rename = "P_b")]
    pub bs_budget: f64,
    /// Per uplink user transmit power budget.
    #[serde(rename = "P_m")]
    pub uue_budget: Vec<f64>,
}

impl Scenario {
    pub fn dims(&self) -> Dims {
        Dims::new(self.num_uue, self.num_due, self.num_sub)
    }

    /// Checks dimensions, signs and finiteness of every field.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != SCENARIO_FORMAT_VERSION {
            return Err(Error::validation(
                "format_version",
                format!(
                    "unsupported version {} (expected {})",
                    self.format_version, SCENARIO_FORMAT_VERSION
                ),
            ));
        }
        let (m, n, k) = (self.num_uue, self.num_due, self.num_sub);
        for (field, v) in [("M", m), ("N", n), ("K", k)] {
            if v == 0 {
                return Err(Error::validation(field, "must be at least 1"));
            }
        }
        check_matrix("g_ub", &self.g_ub, m, k)?;
        check_matrix("g_bn", &self.g_bn, n, k)?;
        if self.g_mn.len() != m {
            return Err(Error::validation(
                "g_mn",
                format!("expected {m} rows, found {}", self.g_mn.len()),
            ));
        }
        for (i, slab) in self.g_mn.iter().enumerate() {
            check_matrix(&format!("g_mn[{i}]"), slab, n, k)?;
        }
        for (field, v) in [
            ("sigma2_D", self.sigma2_si),
            ("sigma2_B", self.sigma2_bs),
            ("sigma2_N", self.sigma2_due),
            ("P_b", self.bs_budget),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(field, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.uue_budget.len() != m {
            return Err(Error::validation(
                "P_m",
                format!("expected {m} entries, found {}", self.uue_budget.len()),
            ));
        }
        for (i, &v) in self.uue_budget.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(
                    format!("P_m[{i}]"),
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        Ok(())
    }

    pub fn equivalent_gains(&self, uue: usize, due: usize, sub: usize) -> Result<EquivalentGains> {
        check_index("uue", uue, self.num_uue)?;
        check_index("due", due, self.num_due)?;
        check_index("subchannel", sub, self.num_sub)?;
        Ok(self.gains_unchecked(uue, due, sub))
    }

    pub(crate) fn gains_unchecked(&self, uue: usize, due: usize, sub: usize) -> EquivalentGains {
        EquivalentGains {
            a_ub: self.g_ub[uue][sub] / (self.sigma2_si + self.sigma2_bs),
            a_bn: self.g_bn[due][sub] / self.sigma2_due,
            a_mn: self.g_mn[uue][due][sub] / self.sigma2_due,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Parses and validates a scenario document.
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("line {} column {}: {}", e.line(), e.column(), e)))?;
        scenario.validate()?;
        Ok(scenario)
    }
}

fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::Index { what, index, len })
    }
}

fn check_matrix(field: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<()> {
    if rows.len() != nrows {
        return Err(Error::validation(
            field,
            format!("expected {nrows} rows, found {}", rows.len()),
        ));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::validation(
                format!("{field}[{i}]"),
                format!("expected {ncols} entries, found {}", row.len()),
            ));
        }
        if let Some((j, v)) = row.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::validation(
                format!("{field}[{i}][{j}]"),
                format!("gain must be finite and >= 0, got {v}"),
            ));
        }
    }
    Ok(())
}

/// Channel gains of one triple normalised by the relevant noise floor (1/W).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalentGains {
    /// `|h_mb|^2 / (sigma_D^2 + sigma_B^2)`
    pub a_ub: f64,
    /// `|h_bn|^2 / sigma_N^2`
    pub a_bn: f64,
    /// `|h_mn|^2 / sigma_N^2`
    pub a_mn: f64,
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_nan() || v < 0.0 {
        Err(Error::Domain(format!("{name} must be >= 0, got {v}")))
    } else {
        Ok(())
    }
}

#[inline]
pub(crate) fn log2_1p(x: f64) -> f64 {
    x.ln_1p() * LOG2_E
}

#[inline]
pub(crate) fn uplink_rate_unchecked(p_up: f64, a_ub: f64) -> f64 {
    log2_1p(p_up * a_ub)
}

#[inline]
pub(crate) fn downlink_rate_unchecked(p_down: f64, p_up: f64, a_bn: f64, a_mn: f64) -> f64 {
    log2_1p(p_down * a_bn / (p_up * a_mn + 1.0))
}

/// `log2(1 + p_up * a_ub)`: uplink spectral efficiency at the BS.
pub fn uplink_rate(p_up: f64, a_ub: f64) -> Result<f64> {
    check_nonneg("p_up", p_up)?;
    check_nonneg("a_ub", a_ub)?;
    Ok(uplink_rate_unchecked(p_up, a_ub))
}

/// `log2(1 + p_down * a_bn / (p_up * a_mn + 1))`: downlink spectral efficiency
/// with the co-channel uplink transmission as interference.
pub fn downlink_rate(p_down: f64, p_up: f64, a_bn: f64, a_mn: f64) -> Result<f64> {
    check_nonneg("p_down", p_down)?;
    check_nonneg("p_up", p_up)?;
    check_nonneg("a_bn", a_bn)?;
    check_nonneg("a_mn", a_mn)?;
    Ok(downlink_rate_unchecked(p_down, p_up, a_bn, a_mn))
}

pub fn pair_rate(p_up: f64, p_down: f64, gains: &EquivalentGains) -> Result<f64> {
    Ok(uplink_rate(p_up, gains.a_ub)? + downlink_rate(p_down, p_up, gains.a_bn, gains.a_mn)?)
}

/// One `(uplink user, downlink user, subchannel)` index triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub uue: usize,
    pub due: usize,
    pub sub: usize,
}

impl Triple {
    pub fn new(uue: usize, due: usize, sub: usize) -> Self {
        Triple { uue, due, sub }
    }
}

/// Problem sizes plus the per-user subchannel capacities they imply.
///
/// Each uplink user may own at most `ceil(K / M)` subchannels and each
/// downlink user at most `ceil(K / N)`. With `M = N = K` both caps are 1 and
/// every user is used exactly once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub uue: usize,
    pub due: usize,
    pub sub: usize,
}

impl Dims {
    pub fn new(uue: usize, due: usize, sub: usize) -> Self {
        Dims { uue, due, sub }
    }

    pub fn is_square(&self) -> bool {
        self.uue == self.due && self.due == self.sub
    }

    pub fn uue_cap(&self) -> usize {
        self.sub.div_ceil(self.uue)
    }

    pub fn due_cap(&self) -> usize {
        self.sub.div_ceil(self.due)
    }
}

/// A binary 3D mapping: exactly one `(uue, due)` pair per subchannel.
///
/// Stored as a vector indexed by subchannel so the "each subchannel exactly
/// once" constraint holds by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment3D {
    pairs: Vec<(usize, usize)>,
}

impl Assignment3D {
    /// Builds an assignment from `pairs[k] = (uue, due)`.
    pub fn from_pairs(pairs: Vec<(usize, usize)>) -> Self {
        Assignment3D { pairs }
    }

    /// Builds an assignment from an arbitrary list of triples over `num_sub`
    /// subchannels, rejecting duplicates and uncovered subchannels.
    pub fn from_triples(triples: &[Triple], num_sub: usize) -> Result<Self> {
        let mut slots: Vec<Option<(usize, usize)>> = vec![None; num_sub];
        for t in triples {
            check_index("subchannel", t.sub, num_sub)?;
            if slots[t.sub].replace((t.uue, t.due)).is_some() {
                return Err(Error::Consistency(format!("subchannel {} assigned twice", t.sub)));
            }
        }
        let pairs = slots
            .into_iter()
            .enumerate()
            .map(|(k, s)| s.ok_or_else(|| Error::Consistency(format!("subchannel {k} unassigned"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Assignment3D { pairs })
    }

    pub fn empty() -> Self {
        Assignment3D { pairs: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, sub: usize) -> (usize, usize) {
        self.pairs[sub]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.pairs.iter().enumerate().map(|(k, &(m, n))| Triple::new(m, n, k))
    }

    /// Subchannels owned by uplink user `uue`.
    pub fn subchannels_of_uue(&self, uue: usize) -> usize {
        self.pairs.iter().filter(|(m, _)| *m == uue).count()
    }

    /// Checks ranges and the per-user capacity constraints of `dims`.
    pub fn validate(&self, dims: Dims) -> Result<()> {
        if self.pairs.len() != dims.sub {
            return Err(Error::Consistency(format!(
                "assignment covers {} subchannels, expected {}",
                self.pairs.len(),
                dims.sub
            )));
        }
        let mut uue_load = vec![0usize; dims.uue];
        let mut due_load = vec![0usize; dims.due];
        for &(m, n) in &self.pairs {
            check_index("uue", m, dims.uue)?;
            check_index("due", n, dims.due)?;
            uue_load[m] += 1;
            due_load[n] += 1;
        }
        if let Some(m) = uue_load.iter().position(|&c| c > dims.uue_cap()) {
            return Err(Error::Consistency(format!(
                "uplink user {m} owns {} subchannels (cap {})",
                uue_load[m],
                dims.uue_cap()
            )));
        }
        if let Some(n) = due_load.iter().position(|&c| c > dims.due_cap()) {
            return Err(Error::Consistency(format!(
                "downlink user {n} owns {} subchannels (cap {})",
                due_load[n],
                dims.due_cap()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkPowers {
    pub up: f64,
    pub down: f64,
}

/// Virtual powers keyed by assigned triple; zero everywhere off the mapping.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PowerAllocation {
    entries: BTreeMap<Triple, LinkPowers>,
}

impl PowerAllocation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, triple: Triple, up: f64, down: f64) -> Result<()> {
        check_nonneg("p_up", up)?;
        check_nonneg("p_down", down)?;
        self.entries.insert(triple, LinkPowers { up, down });
        Ok(())
    }

    pub fn get(&self, triple: &Triple) -> Option<LinkPowers> {
        self.entries.get(triple).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Triple, &LinkPowers)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_down(&self) -> f64 {
        self.entries.values().map(|p| p.down).sum()
    }

    /// Sum of virtual uplink power per uplink user.
    pub fn up_per_uue(&self, num_uue: usize) -> Vec<f64> {
        let mut sums = vec![0.0; num_uue];
        for (t, p) in &self.entries {
            sums[t.uue] += p.up;
        }
        sums
    }

    pub(crate) fn scale(&mut self, uue_factor: &[f64], down_factor: f64) {
        for (t, p) in self.entries.iter_mut() {
            p.up *= uue_factor[t.uue];
            p.down *= down_factor;
        }
    }
}

/// System sum rate of `assignment` under `powers`.
pub fn total_throughput(assignment: &Assignment3D, powers: &PowerAllocation, scenario: &Scenario) -> Result<f64> {
    let mut total = 0.0;
    for t in assignment.triples() {
        let p = powers
            .get(&t)
            .ok_or_else(|| Error::Consistency(format!("no power entry for triple {t:?}")))?;
        let gains = scenario.equivalent_gains(t.uue, t.due, t.sub)?;
        total += pair_rate(p.up, p.down, &gains)?;
    }
    Ok(total)
}
