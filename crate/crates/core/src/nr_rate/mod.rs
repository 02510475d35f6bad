//! Peak downlink data rate of an NR carrier set (TS 38.306, clause 4.1.2).
//!
//! Per carrier `j` the rate in Mbps is
//!
//! ```text
//! 1e-6 * v_layers * Q_m * f * R * (N_PRB * 12 / T_s(mu)) * (1 - OH) * dl_fraction
//! ```
//!
//! and the carrier rates are summed. `R` is the code rate of the selected MCS
//! row; at the top of the 256QAM table it equals the standard's `R_max` of
//! 948/1024. `dl_fraction` is the share of slots carrying downlink data in a
//! TDD pattern and defaults to 1, which gives the plain formula.
//!
//! Everything is computed with exact rationals and converted to decimal only
//! when rendered.

pub mod decimal;
pub mod tables;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

pub use tables::{mcs_lookup, prb_lookup, McsEntry, McsTableId, TableSet};

use crate::error::{Error, Result};

/// Digits after the decimal point when rendering Mbps.
pub const MBPS_DIGITS: usize = 6;

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// OFDM symbol duration `1e-3 / (14 * 2^mu)` seconds, exact.
pub fn symbol_duration(mu: u32) -> Result<BigRational> {
    if mu > 3 {
        return Err(Error::invalid(format!("numerology {mu} outside 0..=3")));
    }
    Ok(ratio(1, 1000 * 14 * (1 << mu)))
}

pub fn symbol_duration_s(mu: u32) -> Result<f64> {
    symbol_duration(mu).map(|t| decimal::to_f64(&t))
}

/// Overheads listed in TS 38.306: DL FR1, DL FR2, UL FR1, UL FR2.
pub fn standard_overheads() -> [BigRational; 4] {
    [ratio(14, 100), ratio(18, 100), ratio(8, 100), ratio(10, 100)]
}

pub fn standard_scaling_factors() -> [BigRational; 4] {
    [ratio(1, 1), ratio(8, 10), ratio(75, 100), ratio(4, 10)]
}

/// One component carrier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CarrierSpec", into = "CarrierSpec")]
pub struct CarrierConfig {
    pub v_layers: u32,
    pub mcs_table: McsTableId,
    pub scaling_factor: BigRational,
    pub bandwidth_mhz: u32,
    pub scs_khz: u32,
    pub n_prb: u32,
    pub numerology_mu: u32,
    pub overhead: BigRational,
    /// Permit an overhead outside the standard set (still `0 <= OH < 1`).
    pub custom_overhead: bool,
    pub tdd_dl_fraction: BigRational,
}

impl CarrierConfig {
    /// A single-layer carrier with `f = 1`, FR1 downlink overhead and no TDD
    /// factor. `N_PRB` comes from the FR1 table.
    pub fn new(bandwidth_mhz: u32, scs_khz: u32, mcs_table: McsTableId) -> Result<Self> {
        let numerology_mu = numerology_for_scs(scs_khz)?;
        let n_prb = prb_lookup(bandwidth_mhz, scs_khz)?;
        Ok(CarrierConfig {
            v_layers: 1,
            mcs_table,
            scaling_factor: BigRational::one(),
            bandwidth_mhz,
            scs_khz,
            n_prb,
            numerology_mu,
            overhead: ratio(14, 100),
            custom_overhead: false,
            tdd_dl_fraction: BigRational::one(),
        })
    }

    /// The testbed cell: 40 MHz at 30 kHz (106 PRBs), 256QAM table, 70 % downlink slots.
    pub fn testbed() -> Self {
        CarrierConfig::new(40, 30, McsTableId::Qam256)
            .expect("40 MHz / 30 kHz is in the FR1 table")
            .with_tdd_dl_fraction(ratio(7, 10))
    }

    pub fn with_layers(mut self, v_layers: u32) -> Self {
        self.v_layers = v_layers;
        self
    }

    pub fn with_scaling_factor(mut self, f: BigRational) -> Self {
        self.scaling_factor = f;
        self
    }

    pub fn with_overhead(mut self, overhead: BigRational) -> Self {
        self.custom_overhead = !standard_overheads().contains(&overhead);
        self.overhead = overhead;
        self
    }

    pub fn with_tdd_dl_fraction(mut self, fraction: BigRational) -> Self {
        self.tdd_dl_fraction = fraction;
        self
    }

    pub fn with_n_prb(mut self, n_prb: u32) -> Self {
        self.n_prb = n_prb;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_layers == 0 {
            return Err(Error::invalid("v_layers must be >= 1"));
        }
        if !standard_scaling_factors().contains(&self.scaling_factor) {
            return Err(Error::invalid(format!(
                "scaling factor {} not in {{1, 0.8, 0.75, 0.4}}",
                decimal::render(&self.scaling_factor, 4)
            )));
        }
        let mu = numerology_for_scs(self.scs_khz)?;
        if mu != self.numerology_mu {
            return Err(Error::invalid(format!(
                "numerology {} inconsistent with {} kHz subcarrier spacing (expected {mu})",
                self.numerology_mu, self.scs_khz
            )));
        }
        if self.n_prb == 0 {
            return Err(Error::invalid("n_prb must be > 0"));
        }
        if self.overhead < BigRational::zero() || self.overhead >= BigRational::one() {
            return Err(Error::invalid("overhead must satisfy 0 <= OH < 1"));
        }
        if !self.custom_overhead && !standard_overheads().contains(&self.overhead) {
            return Err(Error::invalid(format!(
                "overhead {} not in {{0.14, 0.18, 0.08, 0.10}}; set custom_overhead to override",
                decimal::render(&self.overhead, 4)
            )));
        }
        if self.tdd_dl_fraction <= BigRational::zero() || self.tdd_dl_fraction > BigRational::one() {
            return Err(Error::invalid("tdd_dl_fraction must be in (0, 1]"));
        }
        Ok(())
    }

    /// Rate of this carrier alone at `mcs_index`, exact Mbps.
    pub fn rate(&self, mcs_index: u32) -> Result<BigRational> {
        self.rate_with(TableSet::embedded(), mcs_index)
    }

    pub fn rate_with(&self, tables: &TableSet, mcs_index: u32) -> Result<BigRational> {
        self.validate()?;
        let entry = tables.mcs(self.mcs_table, mcs_index)?;
        let symbols_per_second = BigRational::one() / symbol_duration(self.numerology_mu)?;
        let resource_elements = BigRational::from_integer(BigInt::from(self.n_prb) * 12);
        let rate = BigRational::from_integer(BigInt::from(self.v_layers))
            * BigInt::from(entry.q_m)
            * &self.scaling_factor
            * &entry.code_rate
            * resource_elements
            * symbols_per_second
            * (BigRational::one() - &self.overhead)
            * &self.tdd_dl_fraction
            / BigInt::from(1_000_000);
        Ok(rate)
    }
}

pub fn numerology_for_scs(scs_khz: u32) -> Result<u32> {
    match scs_khz {
        15 => Ok(0),
        30 => Ok(1),
        60 => Ok(2),
        120 => Ok(3),
        other => Err(Error::invalid(format!(
            "subcarrier spacing {other} kHz not in {{15, 30, 60, 120}}"
        ))),
    }
}

/// File form of [`CarrierConfig`]: decimals as JSON numbers, `n_prb` and
/// `numerology_mu` optional (looked up / derived when absent).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarrierSpec {
    #[serde(default = "one_u32")]
    pub v_layers: u32,
    pub mcs_table: McsTableId,
    #[serde(default = "one_f64")]
    pub scaling_factor: f64,
    pub bandwidth_mhz: u32,
    pub scs_khz: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_prb: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numerology_mu: Option<u32>,
    #[serde(default = "default_overhead")]
    pub overhead: f64,
    #[serde(default)]
    pub custom_overhead: bool,
    #[serde(default = "one_f64")]
    pub tdd_dl_fraction: f64,
}

fn one_u32() -> u32 {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn default_overhead() -> f64 {
    0.14
}

impl TryFrom<CarrierSpec> for CarrierConfig {
    type Error = Error;

    fn try_from(spec: CarrierSpec) -> Result<Self> {
        let numerology_mu = match spec.numerology_mu {
            Some(mu) => mu,
            None => numerology_for_scs(spec.scs_khz)?,
        };
        let n_prb = match spec.n_prb {
            Some(n) => n,
            None => prb_lookup(spec.bandwidth_mhz, spec.scs_khz)?,
        };
        let config = CarrierConfig {
            v_layers: spec.v_layers,
            mcs_table: spec.mcs_table,
            scaling_factor: decimal::from_f64(spec.scaling_factor)?,
            bandwidth_mhz: spec.bandwidth_mhz,
            scs_khz: spec.scs_khz,
            n_prb,
            numerology_mu,
            overhead: decimal::from_f64(spec.overhead)?,
            custom_overhead: spec.custom_overhead,
            tdd_dl_fraction: decimal::from_f64(spec.tdd_dl_fraction)?,
        };
        config.validate()?;
        Ok(config)
    }
}

impl From<CarrierConfig> for CarrierSpec {
    fn from(c: CarrierConfig) -> Self {
        CarrierSpec {
            v_layers: c.v_layers,
            mcs_table: c.mcs_table,
            scaling_factor: decimal::to_f64(&c.scaling_factor),
            bandwidth_mhz: c.bandwidth_mhz,
            scs_khz: c.scs_khz,
            n_prb: Some(c.n_prb),
            numerology_mu: Some(c.numerology_mu),
            overhead: decimal::to_f64(&c.overhead),
            custom_overhead: c.custom_overhead,
            tdd_dl_fraction: decimal::to_f64(&c.tdd_dl_fraction),
        }
    }
}

/// Result of a rate computation.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    total: BigRational,
    per_carrier: Vec<BigRational>,
    pub mcs_indices: Vec<u32>,
    pub timestamp_s: Option<f64>,
}

impl RateEstimate {
    pub fn exact(&self) -> &BigRational {
        &self.total
    }

    pub fn exact_per_carrier(&self) -> &[BigRational] {
        &self.per_carrier
    }

    pub fn mbps(&self) -> f64 {
        decimal::to_f64(&self.total)
    }

    pub fn per_carrier_mbps(&self) -> Vec<f64> {
        self.per_carrier.iter().map(decimal::to_f64).collect()
    }

    /// Decimal Mbps with [`MBPS_DIGITS`] fractional digits.
    pub fn render(&self) -> String {
        decimal::render(&self.total, MBPS_DIGITS)
    }

    /// The rendered value read back as `f64`; what goes over the wire.
    pub fn rendered_mbps(&self) -> f64 {
        self.render().parse().expect("rendered decimal parses")
    }

    pub fn at(mut self, timestamp_s: f64) -> Self {
        self.timestamp_s = Some(timestamp_s);
        self
    }

    /// An estimate already reduced to a decimal value, e.g. one received over the wire.
    pub fn from_mbps(mbps: f64, mcs_indices: Vec<u32>) -> Result<Self> {
        let total = decimal::from_f64(mbps)?;
        Ok(RateEstimate {
            per_carrier: vec![total.clone()],
            total,
            mcs_indices,
            timestamp_s: None,
        })
    }
}

impl Serialize for RateEstimate {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("RateEstimate", 4)?;
        s.serialize_field("mbps", &self.rendered_mbps())?;
        let per: Vec<f64> = self
            .per_carrier
            .iter()
            .map(|r| decimal::render(r, MBPS_DIGITS).parse::<f64>().unwrap_or(f64::NAN))
            .collect();
        s.serialize_field("per_carrier_mbps", &per)?;
        s.serialize_field("mcs_indices", &self.mcs_indices)?;
        s.serialize_field("timestamp_s", &self.timestamp_s)?;
        s.end()
    }
}

/// Sum of per-carrier rates, each carrier at its own MCS index.
pub fn max_data_rate(carriers: &[(CarrierConfig, u32)]) -> Result<RateEstimate> {
    max_data_rate_with(TableSet::embedded(), carriers)
}

pub fn max_data_rate_with(tables: &TableSet, carriers: &[(CarrierConfig, u32)]) -> Result<RateEstimate> {
    if carriers.is_empty() {
        return Err(Error::invalid("carrier list is empty"));
    }
    let per_carrier = carriers
        .iter()
        .map(|(carrier, mcs)| carrier.rate_with(tables, *mcs))
        .collect::<Result<Vec<_>>>()?;
    let total = per_carrier.iter().fold(BigRational::zero(), |acc, r| acc + r);
    Ok(RateEstimate {
        total,
        per_carrier,
        mcs_indices: carriers.iter().map(|(_, mcs)| *mcs).collect(),
        timestamp_s: None,
    })
}

/// A cell made of one or more carriers that share the MCS reported for the UE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub carriers: Vec<CarrierConfig>,
}

impl CellConfig {
    pub fn single(carrier: CarrierConfig) -> Self {
        CellConfig {
            carriers: vec![carrier],
        }
    }

    pub fn testbed() -> Self {
        CellConfig::single(CarrierConfig::testbed())
    }

    pub fn validate(&self) -> Result<()> {
        if self.carriers.is_empty() {
            return Err(Error::invalid("cell has no carriers"));
        }
        let table = self.carriers[0].mcs_table;
        if self.carriers.iter().any(|c| c.mcs_table != table) {
            return Err(Error::invalid("all carriers of a cell must use the same MCS table"));
        }
        self.carriers.iter().try_for_each(CarrierConfig::validate)
    }

    pub fn mcs_table(&self) -> McsTableId {
        self.carriers[0].mcs_table
    }

    pub fn estimate(&self, mcs_index: u32) -> Result<RateEstimate> {
        let pairs: Vec<_> = self.carriers.iter().map(|c| (c.clone(), mcs_index)).collect();
        max_data_rate(&pairs)
    }

    /// Estimates for every defined index of the cell's table.
    pub fn rate_table(&self) -> Result<RateTable> {
        self.validate()?;
        let rates = (0..=self.mcs_table().max_index())
            .map(|mcs| self.estimate(mcs))
            .collect::<Result<Vec<_>>>()?;
        Ok(RateTable { rates })
    }
}

/// Precomputed estimates indexed by MCS.
#[derive(Debug, Clone)]
pub struct RateTable {
    rates: Vec<RateEstimate>,
}

impl RateTable {
    pub fn get(&self, mcs_index: u32) -> Option<&RateEstimate> {
        self.rates.get(mcs_index as usize)
    }

    pub fn max_index(&self) -> u32 {
        self.rates.len() as u32 - 1
    }

    pub fn mbps(&self, mcs_index: u32) -> f64 {
        self.get(mcs_index).map(RateEstimate::mbps).unwrap_or(0.0)
    }
}
