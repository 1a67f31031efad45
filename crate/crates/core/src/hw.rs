//! Device classes, the operating-cost model, and marginal cost-per-resource analytics.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HwError {
    #[error("device class {0} has no operating-cost override and no TDP")]
    MissingTdp(String),
    #[error("unknown device class {0}")]
    UnknownClass(String),
    #[error("device class {name}: {reason}")]
    InvalidClass { name: String, reason: String },
    #[error("duplicate device class {0}")]
    DuplicateClass(String),
    #[error("invalid cost parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceClass {
    pub name: String,
    #[serde(default)]
    pub vendor: String,
    pub capex_usd: f64,
    pub mem_capacity_gb: f64,
    /// GB/s.
    pub mem_bandwidth_gbps_bytes: f64,
    pub tflops_fp16: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tflops_fp8: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tdp_watts: Option<f64>,
    pub scaleup_bw_gbps_bits: f64,
    pub scaleout_bw_gbps_bits: f64,
    /// Published $/hr; takes precedence over the derived annuity + energy cost.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op_cost_usd_per_hr: Option<f64>,
    pub max_per_chassis: u32,
    /// General-purpose throughput in abstract CPU units per second; absent means
    /// the class is not modeled as a bottleneck for CPU-side work.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gp_compute_units: Option<f64>,
    /// Fields whose values are assumptions rather than published data.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assumed_fields: Vec<String>,
}

impl DeviceClass {
    pub fn validate(&self) -> Result<(), HwError> {
        let bad = |reason: &str| HwError::InvalidClass {
            name: self.name.clone(),
            reason: reason.into(),
        };
        if !(self.capex_usd > 0.0) {
            return Err(bad("capex_usd must be > 0"));
        }
        let required = [
            ("mem_capacity_gb", self.mem_capacity_gb),
            ("mem_bandwidth_gbps_bytes", self.mem_bandwidth_gbps_bytes),
            ("tflops_fp16", self.tflops_fp16),
            ("scaleup_bw_gbps_bits", self.scaleup_bw_gbps_bits),
            ("scaleout_bw_gbps_bits", self.scaleout_bw_gbps_bits),
        ];
        for (field, v) in required {
            if !(v > 0.0) {
                return Err(bad(&format!("{field} must be > 0")));
            }
        }
        let optional = [
            ("tflops_fp8", self.tflops_fp8),
            ("tdp_watts", self.tdp_watts),
            ("op_cost_usd_per_hr", self.op_cost_usd_per_hr),
            ("gp_compute_units", self.gp_compute_units),
        ];
        for (field, v) in optional {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(bad(&format!("{field} must be > 0 when present")));
                }
            }
        }
        if self.max_per_chassis < 1 {
            return Err(bad("max_per_chassis must be >= 1"));
        }
        Ok(())
    }

    /// Peak TFLOP/s for the given element width (1 byte selects FP8 when available).
    pub fn tflops_for(&self, bytes_per_element: u8) -> f64 {
        match (bytes_per_element, self.tflops_fp8) {
            (1, Some(fp8)) => fp8,
            _ => self.tflops_fp16,
        }
    }

    pub fn is_assumed(&self, field: &str) -> bool {
        self.assumed_fields.iter().any(|f| f == field)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModelParams {
    pub amortization_years: f64,
    pub annual_interest_rate: f64,
    pub energy_usd_per_kwh: f64,
    pub hours_per_month: f64,
    pub utilization_fraction: f64,
}

impl Default for CostModelParams {
    fn default() -> Self {
        CostModelParams {
            amortization_years: 4.0,
            annual_interest_rate: 0.08,
            energy_usd_per_kwh: 0.40,
            hours_per_month: 730.0,
            utilization_fraction: 1.0,
        }
    }
}

impl CostModelParams {
    pub fn validate(&self) -> Result<(), HwError> {
        let positive = [
            ("amortization_years", self.amortization_years),
            ("energy_usd_per_kwh", self.energy_usd_per_kwh),
            ("hours_per_month", self.hours_per_month),
            ("utilization_fraction", self.utilization_fraction),
        ];
        for (field, v) in positive {
            if !(v > 0.0) {
                return Err(HwError::InvalidParams(format!("{field} must be > 0")));
            }
        }
        if !(self.annual_interest_rate >= 0.0) {
            return Err(HwError::InvalidParams("annual_interest_rate must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareCatalog {
    #[serde(default)]
    pub cost_params: CostModelParams,
    pub classes: Vec<DeviceClass>,
}

impl HardwareCatalog {
    pub fn new(classes: Vec<DeviceClass>) -> Self {
        HardwareCatalog {
            cost_params: CostModelParams::default(),
            classes,
        }
    }

    pub fn get(&self, name: &str) -> Option<&DeviceClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&DeviceClass, HwError> {
        self.get(name).ok_or_else(|| HwError::UnknownClass(name.into()))
    }

    pub fn validate(&self) -> Result<(), HwError> {
        self.cost_params.validate()?;
        for (i, c) in self.classes.iter().enumerate() {
            c.validate()?;
            if self.classes[..i].iter().any(|o| o.name == c.name) {
                return Err(HwError::DuplicateClass(c.name.clone()));
            }
        }
        Ok(())
    }

    pub fn hourly_cost(&self, name: &str) -> Result<f64, HwError> {
        hourly_cost(self.require(name)?, &self.cost_params)
    }

    /// Copy of the catalog restricted to the named classes (in the given order).
    pub fn restricted(&self, names: &[&str]) -> Result<HardwareCatalog, HwError> {
        let classes = names
            .iter()
            .map(|n| self.require(n).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(HardwareCatalog {
            cost_params: self.cost_params.clone(),
            classes,
        })
    }
}

impl core::ops::Index<&str> for HardwareCatalog {
    type Output = DeviceClass;

    fn index(&self, name: &str) -> &DeviceClass {
        self.get(name)
            .unwrap_or_else(|| panic!("unknown device class {name}"))
    }
}

/// Level payment per period for principal `p` at periodic rate `r` over `n` periods.
pub fn annuity_payment(p: f64, r: f64, n: f64) -> f64 {
    if r == 0.0 {
        return p / n;
    }
    // (1+r)^n - 1 via expm1/log1p keeps precision for small r
    let growth_minus_one = libm::expm1(n * libm::log1p(r));
    p * r * (growth_minus_one + 1.0) / growth_minus_one
}

/// $/hr for one device: the published override if present, else amortized
/// capex (monthly annuity spread over `hours_per_month`) plus energy at TDP.
pub fn hourly_cost(d: &DeviceClass, p: &CostModelParams) -> Result<f64, HwError> {
    if let Some(op) = d.op_cost_usd_per_hr {
        return Ok(op);
    }
    let tdp = d.tdp_watts.ok_or_else(|| HwError::MissingTdp(d.name.clone()))?;
    Ok(derived_hourly_cost(d.capex_usd, tdp, p))
}

pub fn derived_hourly_cost(capex_usd: f64, tdp_watts: f64, p: &CostModelParams) -> f64 {
    let months = p.amortization_years * 12.0;
    let monthly = annuity_payment(capex_usd, p.annual_interest_rate / 12.0, months);
    monthly / p.hours_per_month + tdp_watts / 1000.0 * p.energy_usd_per_kwh * p.utilization_fraction
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostBasis {
    Capex,
    Opex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCostRow {
    pub class: String,
    pub usd_per_gbps_bw: f64,
    pub usd_per_tflop_fp16: f64,
    pub usd_per_tflop_fp8: Option<f64>,
    pub usd_per_gb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginalMetric {
    Bandwidth,
    TflopFp16,
    TflopFp8,
    Capacity,
}

impl MarginalCostRow {
    pub fn metric(&self, m: MarginalMetric) -> Option<f64> {
        match m {
            MarginalMetric::Bandwidth => Some(self.usd_per_gbps_bw),
            MarginalMetric::TflopFp16 => Some(self.usd_per_tflop_fp16),
            MarginalMetric::TflopFp8 => self.usd_per_tflop_fp8,
            MarginalMetric::Capacity => Some(self.usd_per_gb),
        }
    }
}

pub fn marginal_costs(
    catalog: &HardwareCatalog,
    basis: CostBasis,
) -> Result<Vec<MarginalCostRow>, HwError> {
    catalog
        .classes
        .iter()
        .map(|d| {
            let cost = match basis {
                CostBasis::Capex => d.capex_usd,
                CostBasis::Opex => hourly_cost(d, &catalog.cost_params)?,
            };
            Ok(MarginalCostRow {
                class: d.name.clone(),
                usd_per_gbps_bw: cost / d.mem_bandwidth_gbps_bytes,
                usd_per_tflop_fp16: cost / d.tflops_fp16,
                usd_per_tflop_fp8: d.tflops_fp8.map(|t| cost / t),
                usd_per_gb: cost / d.mem_capacity_gb,
            })
        })
        .collect()
}

/// Class names ordered from most to least cost-efficient (lowest $/unit first)
/// on the metric; rows without the metric are omitted.
pub fn rank_by(rows: &[MarginalCostRow], metric: MarginalMetric) -> Vec<String> {
    let mut v: Vec<(f64, &str)> = rows
        .iter()
        .filter_map(|r| r.metric(metric).map(|x| (x, r.class.as_str())))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    v.into_iter().map(|(_, n)| String::from(n)).collect()
}

const ASSUMED: [&str; 5] = [
    "tdp_watts",
    "scaleup_bw_gbps_bits",
    "scaleout_bw_gbps_bits",
    "max_per_chassis",
    "vendor_fp8_ratio",
];

#[allow(clippy::too_many_arguments)]
fn builtin_class(
    name: &str,
    vendor: &str,
    capex_usd: f64,
    mem_capacity_gb: f64,
    mem_bandwidth_gbps_bytes: f64,
    tflops_fp16: f64,
    op_cost_usd_per_hr: f64,
    fp8: bool,
    tdp_watts: f64,
    scaleup_bw_gbps_bits: f64,
    scaleout_bw_gbps_bits: f64,
) -> DeviceClass {
    let mut assumed: Vec<String> = ASSUMED[..4].iter().map(|s| String::from(*s)).collect();
    if fp8 {
        assumed.push("tflops_fp8".into());
    }
    DeviceClass {
        name: name.into(),
        vendor: vendor.into(),
        capex_usd,
        mem_capacity_gb,
        mem_bandwidth_gbps_bytes,
        tflops_fp16,
        tflops_fp8: fp8.then_some(2.0 * tflops_fp16),
        tdp_watts: Some(tdp_watts),
        scaleup_bw_gbps_bits,
        scaleout_bw_gbps_bits,
        op_cost_usd_per_hr: Some(op_cost_usd_per_hr),
        max_per_chassis: 8,
        gp_compute_units: None,
        assumed_fields: assumed,
    }
}

/// The six accelerators with published cost, memory, bandwidth, FP16 TFLOPs,
/// and operating cost. FP8 is 2× FP16 where the part supports it; TDP and
/// interconnect figures are vendor datasheet values and listed in `assumed_fields`.
pub fn builtin_catalog() -> HardwareCatalog {
    HardwareCatalog::new(alloc::vec![
        builtin_class("A40", "NVIDIA", 3_000.0, 48.0, 696.0, 75.0, 0.15, false, 300.0, 900.0, 200.0),
        builtin_class("A100", "NVIDIA", 8_000.0, 80.0, 2039.0, 322.0, 0.25, false, 400.0, 4800.0, 200.0),
        builtin_class("Gaudi3", "Intel", 12_500.0, 128.0, 3700.0, 1678.0, 0.49, true, 900.0, 4800.0, 400.0),
        builtin_class("MI300x", "AMD", 20_000.0, 192.0, 5300.0, 1307.0, 0.52, true, 750.0, 7168.0, 400.0),
        builtin_class("H100", "NVIDIA", 25_000.0, 80.0, 3350.0, 1979.0, 0.60, true, 700.0, 7200.0, 400.0),
        builtin_class("B200", "NVIDIA", 40_000.0, 192.0, 8000.0, 2250.0, 0.83, true, 1000.0, 14400.0, 400.0),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bare(capex: f64, tdp: f64) -> DeviceClass {
        let mut d = builtin_catalog()["A40"].clone();
        d.capex_usd = capex;
        d.tdp_watts = Some(tdp);
        d.op_cost_usd_per_hr = None;
        d
    }

    /// Month-by-month loan schedule: finds the level payment that amortizes
    /// the principal to zero by bisection.
    fn schedule_payment(p: f64, annual: f64, months: u32) -> f64 {
        let r = annual / 12.0;
        let remaining = |pay: f64| {
            let mut bal = p;
            for _ in 0..months {
                bal = bal * (1.0 + r) - pay;
            }
            bal
        };
        let (mut lo, mut hi) = (0.0, p);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if remaining(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn builtin_matches_published_table() {
        let c = builtin_catalog();
        assert_eq!(c.classes.len(), 6);
        assert_eq!(c["H100"].tflops_fp16, 1979.0);
        assert_eq!(c["A40"].capex_usd, 3000.0);
        let rows: Vec<(&str, f64, f64, f64, f64, f64)> = c
            .classes
            .iter()
            .map(|d| {
                (
                    d.name.as_str(),
                    d.capex_usd,
                    d.mem_capacity_gb,
                    d.mem_bandwidth_gbps_bytes,
                    d.tflops_fp16,
                    d.op_cost_usd_per_hr.unwrap(),
                )
            })
            .collect();
        assert_eq!(
            rows,
            [
                ("A40", 3000.0, 48.0, 696.0, 75.0, 0.15),
                ("A100", 8000.0, 80.0, 2039.0, 322.0, 0.25),
                ("Gaudi3", 12500.0, 128.0, 3700.0, 1678.0, 0.49),
                ("MI300x", 20000.0, 192.0, 5300.0, 1307.0, 0.52),
                ("H100", 25000.0, 80.0, 3350.0, 1979.0, 0.60),
                ("B200", 40000.0, 192.0, 8000.0, 2250.0, 0.83),
            ]
        );
        assert!(c.validate().is_ok());
        assert!(c["H100"].is_assumed("tflops_fp8"));
        assert_eq!(c["A40"].tflops_fp8, None);
        assert!(!c["A40"].is_assumed("tflops_fp8"));
    }

    #[test]
    fn override_takes_precedence() {
        let c = builtin_catalog();
        assert_eq!(hourly_cost(&c["B200"], &c.cost_params).unwrap(), 0.83);
    }

    #[test]
    fn derived_cost_matches_loan_schedule() {
        let p = CostModelParams::default();
        let oracle = schedule_payment(3000.0, 0.08, 48) / 730.0;
        let got = hourly_cost(&bare(3000.0, 0.0 + f64::MIN_POSITIVE), &p).unwrap();
        assert!((got - oracle).abs() < 1e-9);
        assert!((got - 0.1003).abs() < 1e-3);

        let with_energy = hourly_cost(&bare(3000.0, 300.0), &p).unwrap();
        assert!((with_energy - (oracle + 0.12)).abs() < 1e-9);
        assert!((with_energy - 0.2203).abs() < 1e-3);
    }

    #[test]
    fn zero_rate_is_straight_line() {
        let p = CostModelParams {
            annual_interest_rate: 0.0,
            ..Default::default()
        };
        let got = derived_hourly_cost(1.0, 0.0, &p);
        assert_eq!(got, 1.0 / (48.0 * 730.0));
    }

    #[test]
    fn missing_tdp_and_bad_capex() {
        let mut d = bare(3000.0, 1.0);
        d.tdp_watts = None;
        assert_eq!(
            hourly_cost(&d, &CostModelParams::default()),
            Err(HwError::MissingTdp("A40".into()))
        );
        d.capex_usd = 0.0;
        assert!(d.validate().is_err());
    }

    #[test]
    fn marginal_cost_cells() {
        let rows = marginal_costs(&builtin_catalog(), CostBasis::Capex).unwrap();
        let row = |n: &str| rows.iter().find(|r| r.class == n).unwrap().clone();
        assert!((row("Gaudi3").usd_per_gbps_bw - 12500.0 / 3700.0).abs() < 1e-12);
        assert!((row("Gaudi3").usd_per_gbps_bw - 3.378).abs() < 1e-3);
        assert!((row("H100").usd_per_tflop_fp16 - 12.63).abs() < 1e-2);
        assert_eq!(row("A40").usd_per_gb, 62.5);
        assert_eq!(row("A40").usd_per_tflop_fp8, None);

        let opex = marginal_costs(&builtin_catalog(), CostBasis::Opex).unwrap();
        let mi = opex.iter().find(|r| r.class == "MI300x").unwrap();
        assert!((mi.usd_per_gb - 0.52 / 192.0).abs() < 1e-15);
    }

    #[test]
    fn capex_rankings() {
        let rows = marginal_costs(&builtin_catalog(), CostBasis::Capex).unwrap();
        let bw = rank_by(&rows, MarginalMetric::Bandwidth);
        assert_eq!(&bw[..2], ["Gaudi3", "MI300x"]);
        let mut fp16: Vec<String> = rank_by(&rows, MarginalMetric::TflopFp16)[..3].to_vec();
        fp16.sort();
        assert_eq!(fp16, ["Gaudi3", "H100", "MI300x"]);
    }

    #[test]
    fn opex_capacity_leader_is_mi300x() {
        let rows = marginal_costs(&builtin_catalog(), CostBasis::Opex).unwrap();
        assert_eq!(rank_by(&rows, MarginalMetric::Capacity)[0], "MI300x");
    }

    proptest! {
        #[test]
        fn hourly_cost_monotone(capex in 1.0f64..1e5, rate in 0.0f64..0.3, tdp in 0.0f64..2000.0,
                                bump in 1.001f64..2.0) {
            let p = CostModelParams { annual_interest_rate: rate, ..Default::default() };
            let base = derived_hourly_cost(capex, tdp, &p);
            prop_assert!(derived_hourly_cost(capex * bump, tdp, &p) > base);
            prop_assert!(derived_hourly_cost(capex, tdp * bump + 1.0, &p) > base);
            let p2 = CostModelParams { annual_interest_rate: rate * bump + 1e-4, ..Default::default() };
            prop_assert!(derived_hourly_cost(capex, tdp, &p2) > base);
        }

        #[test]
        fn annuity_converges_to_straight_line(p in 1.0f64..1e6, n in 1u32..600, exp in 9i32..15) {
            let r = libm::pow(10.0, -(exp as f64));
            let straight = p / n as f64;
            let got = annuity_payment(p, r, n as f64);
            // first-order gap is (n + 1) r / 2
            let allowed = 1e-9_f64.max((n as f64 + 1.0) * r);
            prop_assert!(((got - straight) / straight).abs() <= allowed);
        }
    }
}
