use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::{transfer_ms, PlanError};
use crate::graph::{SlaMode, SlaSpec};
use crate::hw::{DeviceClass, HardwareCatalog};
use crate::perf::{
    decode_time_ms, kv_cache_bytes, max_batch, prefill_time_ms, Efficiency, ModelSpec, ParallelismConfig,
    WorkloadShape,
};

/// A `prefill::decode` pairing, e.g. `H100::Gaudi3`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairLabel {
    pub prefill: String,
    pub decode: String,
}

impl PairLabel {
    pub fn new(prefill: &str, decode: &str) -> Self {
        PairLabel {
            prefill: prefill.into(),
            decode: decode.into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self, PlanError> {
        match s.split_once("::") {
            Some((p, d)) if !p.is_empty() && !d.is_empty() && !d.contains("::") => Ok(PairLabel::new(p, d)),
            _ => Err(PlanError::InvalidLabel(s.into())),
        }
    }
}

impl fmt::Display for PairLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}", self.prefill, self.decode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    pub tp_options: Vec<u32>,
    pub pp_options: Vec<u32>,
    /// Upper limit on the batch search, on top of the memory limit.
    pub batch_cap: u64,
    /// Largest allowed relative gap between prefill and decode pool rates.
    pub rate_tolerance: f64,
    pub max_pool: u32,
    /// Pairings to evaluate; `None` means every ordered pair of classes.
    pub pairs: Option<Vec<PairLabel>>,
    pub prefill_eff: Efficiency,
    pub decode_eff: Efficiency,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            tp_options: vec![1, 2, 4, 8],
            pp_options: vec![1, 2],
            batch_cap: 4096,
            rate_tolerance: 0.10,
            max_pool: 4096,
            pairs: None,
            prefill_eff: Efficiency::PREFILL,
            decode_eff: Efficiency::DECODE,
        }
    }
}

/// The cheapest configuration found for one stage on one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageChoice {
    pub class: String,
    /// `replicas` is the pool size after rate matching.
    pub parallelism: ParallelismConfig,
    pub batch: u64,
    /// TTFT for prefill, TBT for decode.
    pub latency_ms: f64,
    /// Requests completed per second by one replica.
    pub requests_per_sec: f64,
    /// $/hr of one replica.
    pub usd_per_hr: f64,
}

impl StageChoice {
    fn usd_per_request(&self) -> f64 {
        self.usd_per_hr / (3600.0 * self.requests_per_sec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcoRow {
    pub label: String,
    pub prefill_class: String,
    pub decode_class: String,
    pub model: String,
    pub precision: String,
    pub isl: u64,
    pub osl: u64,
    pub sla_mode: SlaMode,
    pub feasible: bool,
    /// Why the pairing is infeasible.
    pub binding: Option<String>,
    pub prefill: Option<StageChoice>,
    pub decode: Option<StageChoice>,
    pub ttft_ms: f64,
    pub tbt_ms: f64,
    /// KV-cache hand-off for one request; it delays the second token only.
    pub kv_transfer_ms: f64,
    pub second_token_ms: f64,
    pub tokens_per_sec: f64,
    pub cost_per_hr: f64,
    pub cost_per_1m_tokens: f64,
    /// Output tokens/s per $/hr.
    pub tokens_per_sec_per_dollar: f64,
    pub tco_ratio_vs_baseline: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Stage {
    Prefill,
    Decode,
}

struct StageCtx<'a> {
    m: &'a ModelSpec,
    isl: u64,
    osl: u64,
    class: &'a DeviceClass,
    hourly: f64,
    sla: &'a SlaSpec,
    opts: &'a SweepOptions,
}

impl StageCtx<'_> {
    fn bound(&self, stage: Stage) -> Option<f64> {
        if self.sla.mode != SlaMode::Latency {
            return None;
        }
        match stage {
            Stage::Prefill => self.sla.ttft_ms,
            Stage::Decode => self.sla.tbt_ms,
        }
    }

    /// Latency of one configuration, or `None` if the model does not fit.
    fn latency(&self, stage: Stage, par: &ParallelismConfig, bs: u64) -> Option<f64> {
        let shape = WorkloadShape::new(self.isl, self.osl, bs);
        match stage {
            Stage::Prefill => prefill_time_ms(self.m, &shape, self.class, par, &self.opts.prefill_eff)
                .ok()
                .map(|e| e.ttft_ms),
            Stage::Decode => decode_time_ms(self.m, &shape, self.class, par, &self.opts.decode_eff)
                .ok()
                .map(|e| e.tbt_ms),
        }
    }

    fn choice(&self, stage: Stage, par: ParallelismConfig, bs: u64, latency_ms: f64) -> StageChoice {
        let per_request_ms = match stage {
            Stage::Prefill => latency_ms,
            Stage::Decode => latency_ms * self.osl as f64,
        };
        StageChoice {
            class: self.class.name.clone(),
            parallelism: par,
            batch: bs,
            latency_ms,
            requests_per_sec: bs as f64 * 1000.0 / per_request_ms,
            usd_per_hr: self.hourly * par.devices() as f64,
        }
    }

    fn batch_limit(&self, stage: Stage, par: &ParallelismConfig) -> u64 {
        // prefill holds only the prompt's cache; decode grows it to isl + osl
        let osl = if stage == Stage::Prefill { 0 } else { self.osl };
        max_batch(self.m, &WorkloadShape::new(self.isl, osl, 1), self.class, par).min(self.opts.batch_cap)
    }

    /// Cheapest $/request over tp, pp and batch: powers of two up to the
    /// memory limit, then ±25% around the best power.
    fn best(&self, stage: Stage) -> Result<StageChoice, String> {
        let mut best: Option<StageChoice> = None;
        let mut fits = false;
        let mut fastest = f64::INFINITY;
        let bound = self.bound(stage);
        for &tp in &self.opts.tp_options {
            if tp > self.class.max_per_chassis {
                continue;
            }
            for &pp in &self.opts.pp_options {
                let par = ParallelismConfig::new(tp, pp);
                let limit = self.batch_limit(stage, &par);
                if limit == 0 {
                    continue;
                }
                let mut eval = |bs: u64, local: &mut Option<StageChoice>| {
                    let Some(ms) = self.latency(stage, &par, bs) else {
                        return;
                    };
                    fits = true;
                    fastest = fastest.min(ms);
                    if bound.is_some_and(|b| ms > b) || !(ms > 0.0) {
                        return;
                    }
                    let c = self.choice(stage, par, bs, ms);
                    if local.as_ref().is_none_or(|l| c.usd_per_request() < l.usd_per_request()) {
                        *local = Some(c);
                    }
                };
                let mut local = None;
                let mut bs = 1;
                while bs <= limit {
                    eval(bs, &mut local);
                    bs *= 2;
                }
                if let Some(b) = local.as_ref().map(|c| c.batch) {
                    for f in [0.75, 0.875, 1.125, 1.25] {
                        let r = (libm::round(b as f64 * f) as u64).clamp(1, limit);
                        if r != b {
                            eval(r, &mut local);
                        }
                    }
                }
                if let Some(c) = local {
                    if best.as_ref().is_none_or(|b| c.usd_per_request() < b.usd_per_request()) {
                        best = Some(c);
                    }
                }
            }
        }
        let name = match stage {
            Stage::Prefill => "ttft",
            Stage::Decode => "tbt",
        };
        best.ok_or_else(|| match (fits, bound) {
            (false, _) => format!("{} does not fit {} on {}", self.m.name, name_of(stage), self.class.name),
            (true, Some(b)) => format!("{name}: fastest {} is {fastest:.3} ms, bound {b} ms", self.class.name),
            (true, None) => format!("no usable {} configuration on {}", name_of(stage), self.class.name),
        })
    }
}

fn name_of(stage: Stage) -> &'static str {
    match stage {
        Stage::Prefill => "prefill",
        Stage::Decode => "decode",
    }
}

/// Smallest pool sizes `(n_prefill, n_decode)` whose aggregate rates differ
/// by at most `tol` of the larger; the closest pair if none within `max_pool`.
pub fn rate_match(r_prefill: f64, r_decode: f64, tol: f64, max_pool: u32) -> (u32, u32) {
    let gap = |np: u32, nd: u32| {
        let (a, b) = (np as f64 * r_prefill, nd as f64 * r_decode);
        (a - b).abs() / a.max(b)
    };
    let mut closest = (1, 1, gap(1, 1));
    for np in 1..=max_pool.max(1) {
        let x = np as f64 * r_prefill / r_decode;
        let lo = (libm::floor(x) as u32).max(1);
        for nd in [lo, lo + 1] {
            let g = gap(np, nd);
            if g <= tol {
                return (np, nd);
            }
            if g < closest.2 {
                closest = (np, nd, g);
            }
        }
    }
    (closest.0, closest.1)
}

fn infeasible_row(base: TcoRow, reason: String) -> TcoRow {
    TcoRow {
        feasible: false,
        binding: Some(reason),
        ..base
    }
}

#[allow(clippy::too_many_arguments)]
fn pair_row(
    m: &ModelSpec,
    isl: u64,
    osl: u64,
    sla: &SlaSpec,
    catalog: &HardwareCatalog,
    pair: &PairLabel,
    prefill: &Result<StageChoice, String>,
    decode: &Result<StageChoice, String>,
    opts: &SweepOptions,
) -> TcoRow {
    let base = TcoRow {
        label: pair.to_string(),
        prefill_class: pair.prefill.clone(),
        decode_class: pair.decode.clone(),
        model: m.name.clone(),
        precision: m.precision.clone(),
        isl,
        osl,
        sla_mode: sla.mode,
        feasible: true,
        binding: None,
        prefill: None,
        decode: None,
        ttft_ms: 0.0,
        tbt_ms: 0.0,
        kv_transfer_ms: 0.0,
        second_token_ms: 0.0,
        tokens_per_sec: 0.0,
        cost_per_hr: 0.0,
        cost_per_1m_tokens: 0.0,
        tokens_per_sec_per_dollar: 0.0,
        tco_ratio_vs_baseline: 0.0,
    };
    let (p, d) = match (prefill, decode) {
        (Ok(p), Ok(d)) => (p, d),
        (Err(e), _) | (_, Err(e)) => return infeasible_row(base, e.clone()),
    };
    let (np, nd) = rate_match(p.requests_per_sec, d.requests_per_sec, opts.rate_tolerance, opts.max_pool);
    let requests = (np as f64 * p.requests_per_sec).min(nd as f64 * d.requests_per_sec);
    let tokens_per_sec = requests * osl as f64;
    let cost_per_hr = np as f64 * p.usd_per_hr + nd as f64 * d.usd_per_hr;
    let (pc, dc) = (&catalog[pair.prefill.as_str()], &catalog[pair.decode.as_str()]);
    let link = (pc.scaleout_bw_gbps_bits * p.parallelism.devices() as f64)
        .min(dc.scaleout_bw_gbps_bits * d.parallelism.devices() as f64);
    let kv_ms = transfer_ms(kv_cache_bytes(m, isl, 1), link);
    let mut p = p.clone();
    let mut d = d.clone();
    p.parallelism.replicas = np;
    d.parallelism.replicas = nd;
    TcoRow {
        ttft_ms: p.latency_ms,
        tbt_ms: d.latency_ms,
        kv_transfer_ms: kv_ms,
        second_token_ms: d.latency_ms + kv_ms,
        tokens_per_sec,
        cost_per_hr,
        cost_per_1m_tokens: cost_per_hr / (3600.0 * tokens_per_sec) * 1e6,
        tokens_per_sec_per_dollar: tokens_per_sec / cost_per_hr,
        prefill: Some(p),
        decode: Some(d),
        ..base
    }
}

/// Evaluates prefill::decode pairings of `m` at `shape` (batch ignored).
///
/// Each class gets its cheapest $/request configuration per stage within the
/// SLA's TTFT/TBT bounds (throughput mode has none). A pairing runs pools of
/// both configurations sized by [`rate_match`]; its cost per token is the
/// pools' $/hr over their output tokens/s. The baseline row is always
/// evaluated, rows are normalized against it, and the result is sorted by
/// ratio (descending) then label.
pub fn sweep_pairs(
    m: &ModelSpec,
    shape: &WorkloadShape,
    catalog: &HardwareCatalog,
    sla: &SlaSpec,
    baseline: &PairLabel,
    opts: &SweepOptions,
) -> Result<Vec<TcoRow>, PlanError> {
    m.validate()?;
    catalog.validate()?;
    sla.validate()?;
    if shape.osl_tokens == 0 {
        return Err(crate::perf::PerfError::InvalidInput("osl_tokens must be >= 1 for a sweep".into()).into());
    }
    for class in [&baseline.prefill, &baseline.decode] {
        if catalog.get(class).is_none() {
            return Err(PlanError::BaselineInfeasible {
                label: baseline.to_string(),
                reason: format!("class {class} is not in the catalog"),
            });
        }
    }
    let mut pairs: Vec<PairLabel> = match &opts.pairs {
        Some(p) => p.clone(),
        None => catalog
            .classes
            .iter()
            .flat_map(|a| catalog.classes.iter().map(|b| PairLabel::new(&a.name, &b.name)))
            .collect(),
    };
    if !pairs.contains(baseline) {
        pairs.push(baseline.clone());
    }
    for p in &pairs {
        catalog.require(&p.prefill)?;
        catalog.require(&p.decode)?;
    }

    let mut stages = alloc::collections::BTreeMap::new();
    for c in &catalog.classes {
        let ctx = StageCtx {
            m,
            isl: shape.isl_tokens,
            osl: shape.osl_tokens,
            class: c,
            hourly: catalog.hourly_cost(&c.name)?,
            sla,
            opts,
        };
        stages.insert(c.name.clone(), (ctx.best(Stage::Prefill), ctx.best(Stage::Decode)));
    }
    let mut rows: Vec<TcoRow> = pairs
        .iter()
        .map(|pair| {
            let (p, _) = &stages[&pair.prefill];
            let (_, d) = &stages[&pair.decode];
            pair_row(m, shape.isl_tokens, shape.osl_tokens, sla, catalog, pair, p, d, opts)
        })
        .collect();
    normalize_vs_baseline(&mut rows, &baseline.to_string())?;
    Ok(rows)
}

/// Sets each feasible row's ratio to baseline cost-per-token over its own
/// (infeasible rows get 0) and sorts by ratio descending, then label.
pub fn normalize_vs_baseline(rows: &mut [TcoRow], baseline: &str) -> Result<(), PlanError> {
    let base = rows
        .iter()
        .find(|r| r.label == baseline)
        .ok_or_else(|| PlanError::BaselineMissing(baseline.into()))?;
    if !base.feasible {
        return Err(PlanError::BaselineInfeasible {
            label: baseline.into(),
            reason: base.binding.clone().unwrap_or_default(),
        });
    }
    let base_cost = base.cost_per_1m_tokens;
    for r in rows.iter_mut() {
        r.tco_ratio_vs_baseline = if r.feasible { base_cost / r.cost_per_1m_tokens } else { 0.0 };
    }
    rows.sort_by(|a, b| {
        b.tco_ratio_vs_baseline
            .total_cmp(&a.tco_ratio_vs_baseline)
            .then_with(|| a.label.cmp(&b.label))
    });
    Ok(())
}
