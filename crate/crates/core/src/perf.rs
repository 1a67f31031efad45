//! Roofline latency models for prefill and decode, KV-cache sizing, and
//! disaggregation bandwidth requirements.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::hw::DeviceClass;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerfError {
    #[error("model {model} needs {need_gb:.2} GB per device on {class} but only {have_gb:.2} GB is available")]
    ModelTooLarge {
        model: String,
        class: String,
        need_gb: f64,
        have_gb: f64,
    },
    #[error("invalid parallelism: {0}")]
    InvalidParallelism(String),
    #[error("division by zero: {0} must be > 0")]
    DivideByZero(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown model {0}")]
    UnknownModel(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub params_billion: f64,
    pub n_layers: u64,
    pub d_model: u64,
    pub n_heads: u64,
    pub n_kv_heads: u64,
    pub bytes_per_element: u8,
    #[serde(default)]
    pub precision: String,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), PerfError> {
        let bad = |r: &str| PerfError::InvalidInput(format!("model {}: {r}", self.name));
        if !(self.params_billion > 0.0) {
            return Err(bad("params_billion must be > 0"));
        }
        if self.n_layers == 0 || self.d_model == 0 || self.n_heads == 0 || self.n_kv_heads == 0 {
            return Err(bad("layer and head counts must be >= 1"));
        }
        if self.n_kv_heads > self.n_heads {
            return Err(bad("n_kv_heads must not exceed n_heads"));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(bad("n_heads must divide d_model"));
        }
        if !matches!(self.bytes_per_element, 1 | 2) {
            return Err(bad("bytes_per_element must be 1 or 2"));
        }
        Ok(())
    }

    pub fn weight_bytes(&self) -> f64 {
        self.params_billion * 1e9 * self.bytes_per_element as f64
    }

    pub fn head_dim(&self) -> u64 {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCatalog {
    pub models: Vec<ModelSpec>,
}

impl ModelCatalog {
    pub fn get(&self, name: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&ModelSpec, PerfError> {
        self.get(name).ok_or_else(|| PerfError::UnknownModel(name.into()))
    }

    pub fn validate(&self) -> Result<(), PerfError> {
        for (i, m) in self.models.iter().enumerate() {
            m.validate()?;
            if self.models[..i].iter().any(|o| o.name == m.name) {
                return Err(PerfError::InvalidInput(format!("duplicate model {}", m.name)));
            }
        }
        Ok(())
    }
}

fn llama(name: &str, params: f64, layers: u64, d_model: u64, heads: u64, bpe: u8) -> ModelSpec {
    ModelSpec {
        name: name.into(),
        params_billion: params,
        n_layers: layers,
        d_model,
        n_heads: heads,
        n_kv_heads: 8,
        bytes_per_element: bpe,
        precision: if bpe == 1 { "fp8".into() } else { "fp16".into() },
    }
}

/// Llama 3 8B and 70B in FP16 and FP8 (architecture constants from the public model cards).
pub fn builtin_models() -> ModelCatalog {
    ModelCatalog {
        models: alloc::vec![
            llama("llama3-8b-fp16", 8.0, 32, 4096, 32, 2),
            llama("llama3-8b-fp8", 8.0, 32, 4096, 32, 1),
            llama("llama3-70b-fp16", 70.0, 80, 8192, 64, 2),
            llama("llama3-70b-fp8", 70.0, 80, 8192, 64, 1),
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadShape {
    pub isl_tokens: u64,
    #[serde(default)]
    pub osl_tokens: u64,
    #[serde(default = "one")]
    pub batch_size: u64,
}

fn one() -> u64 {
    1
}

impl WorkloadShape {
    pub fn new(isl_tokens: u64, osl_tokens: u64, batch_size: u64) -> Self {
        WorkloadShape {
            isl_tokens,
            osl_tokens,
            batch_size,
        }
    }

    pub fn with_batch(self, batch_size: u64) -> Self {
        WorkloadShape { batch_size, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelismConfig {
    pub tp_degree: u32,
    pub pp_degree: u32,
    pub replicas: u32,
}

impl Default for ParallelismConfig {
    fn default() -> Self {
        ParallelismConfig {
            tp_degree: 1,
            pp_degree: 1,
            replicas: 1,
        }
    }
}

impl ParallelismConfig {
    pub fn new(tp_degree: u32, pp_degree: u32) -> Self {
        ParallelismConfig {
            tp_degree,
            pp_degree,
            replicas: 1,
        }
    }

    /// Devices used by one replica.
    pub fn devices(&self) -> u32 {
        self.tp_degree * self.pp_degree
    }

    pub fn validate(&self, class: &DeviceClass) -> Result<(), PerfError> {
        if self.tp_degree < 1 || self.pp_degree < 1 || self.replicas < 1 {
            return Err(PerfError::InvalidParallelism(
                "tp, pp and replicas must all be >= 1".into(),
            ));
        }
        if self.tp_degree > class.max_per_chassis {
            return Err(PerfError::InvalidParallelism(format!(
                "tp {} exceeds {} devices per chassis on {}",
                self.tp_degree, class.max_per_chassis, class.name
            )));
        }
        Ok(())
    }
}

/// Fraction of peak compute (`mfu`) and memory bandwidth actually achieved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub mfu: f64,
    pub mem_efficiency: f64,
}

impl Efficiency {
    pub const PREFILL: Efficiency = Efficiency {
        mfu: 0.5,
        mem_efficiency: 1.0,
    };
    pub const DECODE: Efficiency = Efficiency {
        mfu: 0.5,
        mem_efficiency: 0.9,
    };

    /// Given MFU with ideal memory streaming.
    pub fn mfu(mfu: f64) -> Self {
        Efficiency {
            mfu,
            mem_efficiency: 1.0,
        }
    }

    fn validate(&self) -> Result<(), PerfError> {
        let ok = |x: f64| x > 0.0 && x <= 1.0;
        if !ok(self.mfu) || !ok(self.mem_efficiency) {
            return Err(PerfError::InvalidInput(
                "efficiencies must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Compute,
    Memory,
    Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfEstimate {
    pub ttft_ms: f64,
    pub tbt_ms: f64,
    pub tokens_per_sec: f64,
    pub flops_used: f64,
    pub bytes_moved: f64,
    pub bound: Bound,
    pub compute_ms: f64,
    pub memory_ms: f64,
    /// Tensor-parallel synchronization (δ).
    pub comm_overhead_ms: f64,
    /// Pipeline-stage activation transfers (d).
    pub pipeline_transfer_ms: f64,
}

/// `2 · layers · d_model · (kv_heads / heads) · isl · bs · bpe`, exact.
pub fn kv_cache_bytes(m: &ModelSpec, isl: u64, bs: u64) -> u64 {
    // d_model · kv/heads = head_dim · kv_heads, which keeps everything integral
    let per_token = 2 * m.n_layers as u128 * m.head_dim() as u128 * m.n_kv_heads as u128;
    let total = per_token * isl as u128 * bs as u128 * m.bytes_per_element as u128;
    u64::try_from(total).unwrap_or(u64::MAX)
}

fn link_rate_gbps(bytes: f64, window_ms: f64, devices: u32) -> Result<f64, PerfError> {
    if !(window_ms > 0.0) {
        return Err(PerfError::DivideByZero("time window"));
    }
    if devices == 0 {
        return Err(PerfError::DivideByZero("device count"));
    }
    Ok(8.0 * bytes / (window_ms / 1000.0 * devices as f64) / 1e9)
}

/// Link rate each prefill device needs to ship its KV cache within one TTFT.
pub fn peak_egress_gbps(kv_bytes: u64, ttft_ms: f64, n_prefill_gpu: u32) -> Result<f64, PerfError> {
    link_rate_gbps(kv_bytes as f64, ttft_ms, n_prefill_gpu)
}

/// Link rate each decode device needs to absorb a KV cache within one TBT.
pub fn peak_ingress_gbps(kv_bytes: u64, tbt_ms: f64, n_decode_gpu: u32) -> Result<f64, PerfError> {
    link_rate_gbps(kv_bytes as f64, tbt_ms, n_decode_gpu)
}

fn transfer_ms(bytes: f64, link_gbps: f64) -> f64 {
    if bytes == 0.0 {
        return 0.0;
    }
    bytes * 8.0 / (link_gbps * 1e9) * 1000.0
}

/// Ring all-reduce time per forward pass for tensor parallelism (δ).
pub fn comm_overhead_ms(m: &ModelSpec, batch: u64, seq: u64, tp: u32, link_gbps: f64) -> f64 {
    if tp <= 1 {
        return 0.0;
    }
    let tp = tp as f64;
    let bytes = 2.0 * (tp - 1.0) / tp
        * m.n_layers as f64
        * m.d_model as f64
        * batch as f64
        * seq as f64
        * m.bytes_per_element as f64;
    transfer_ms(bytes, link_gbps)
}

/// Activation hand-off between pipeline stages (d): one `bs · seq · d_model`
/// tensor per stage boundary, over scale-up when the replica fits one chassis.
pub fn pipeline_transfer_ms(
    m: &ModelSpec,
    batch: u64,
    seq: u64,
    par: &ParallelismConfig,
    class: &DeviceClass,
) -> f64 {
    if par.pp_degree <= 1 {
        return 0.0;
    }
    let link = if par.devices() <= class.max_per_chassis {
        class.scaleup_bw_gbps_bits
    } else {
        class.scaleout_bw_gbps_bits
    };
    let bytes = (par.pp_degree - 1) as f64
        * batch as f64
        * seq as f64
        * m.d_model as f64
        * m.bytes_per_element as f64;
    transfer_ms(bytes, link)
}

fn check_fit(m: &ModelSpec, class: &DeviceClass, par: &ParallelismConfig) -> Result<(), PerfError> {
    let per_device = m.weight_bytes() / par.devices() as f64;
    let have = class.mem_capacity_gb * 1e9;
    if per_device > have {
        return Err(PerfError::ModelTooLarge {
            model: m.name.clone(),
            class: class.name.clone(),
            need_gb: per_device / 1e9,
            have_gb: class.mem_capacity_gb,
        });
    }
    Ok(())
}

struct Roofline {
    flops: f64,
    bytes: f64,
    compute_ms: f64,
    memory_ms: f64,
    delta: f64,
    d: f64,
}

impl Roofline {
    fn time_ms(&self) -> f64 {
        self.compute_ms.max(self.memory_ms) + self.delta + self.d
    }

    fn bound(&self) -> Bound {
        let net = self.delta + self.d;
        if net > self.compute_ms && net > self.memory_ms {
            Bound::Network
        } else if self.compute_ms >= self.memory_ms {
            Bound::Compute
        } else {
            Bound::Memory
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn roofline(
    m: &ModelSpec,
    class: &DeviceClass,
    par: &ParallelismConfig,
    eff: &Efficiency,
    flops: f64,
    kv_bytes: f64,
    batch: u64,
    seq: u64,
) -> Result<Roofline, PerfError> {
    m.validate()?;
    par.validate(class)?;
    eff.validate()?;
    check_fit(m, class, par)?;
    let tp = par.tp_degree as f64;
    let (bytes, compute_ms, memory_ms) = if flops == 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        let peak = class.tflops_for(m.bytes_per_element) * 1e12 * eff.mfu * tp;
        let bytes = m.weight_bytes() / tp + kv_bytes;
        let bw = class.mem_bandwidth_gbps_bytes * 1e9 * eff.mem_efficiency;
        (bytes, flops / peak * 1000.0, bytes / bw * 1000.0)
    };
    Ok(Roofline {
        flops,
        bytes,
        compute_ms,
        memory_ms,
        delta: comm_overhead_ms(m, batch, seq, par.tp_degree, class.scaleup_bw_gbps_bits),
        d: pipeline_transfer_ms(m, batch, seq, par, class),
    })
}

/// Time to first token for a batch: one forward pass over `isl · bs` tokens.
pub fn prefill_time_ms(
    m: &ModelSpec,
    shape: &WorkloadShape,
    class: &DeviceClass,
    par: &ParallelismConfig,
    eff: &Efficiency,
) -> Result<PerfEstimate, PerfError> {
    let tokens = shape.isl_tokens * shape.batch_size;
    let flops = 2.0 * m.params_billion * 1e9 * tokens as f64;
    let kv = kv_cache_bytes(m, shape.isl_tokens, shape.batch_size) as f64;
    if tokens == 0 {
        let r = roofline(m, class, par, eff, 0.0, 0.0, 0, 0)?;
        return Ok(estimate(&r, r.time_ms(), 0.0, 0.0));
    }
    let r = roofline(m, class, par, eff, flops, kv, shape.batch_size, shape.isl_tokens)?;
    let ttft = r.time_ms();
    Ok(estimate(&r, ttft, 0.0, tokens as f64 * 1000.0 / ttft))
}

/// Time between tokens: every step streams the weights plus the batch's KV
/// cache at mean context `isl + osl / 2`.
pub fn decode_time_ms(
    m: &ModelSpec,
    shape: &WorkloadShape,
    class: &DeviceClass,
    par: &ParallelismConfig,
    eff: &Efficiency,
) -> Result<PerfEstimate, PerfError> {
    if shape.batch_size == 0 {
        return Err(PerfError::InvalidInput("batch_size must be >= 1".into()));
    }
    let flops = 2.0 * m.params_billion * 1e9 * shape.batch_size as f64;
    let context = shape.isl_tokens + shape.osl_tokens / 2;
    let kv = kv_cache_bytes(m, context, shape.batch_size) as f64;
    let r = roofline(m, class, par, eff, flops, kv, shape.batch_size, 1)?;
    let tbt = r.time_ms();
    Ok(estimate(&r, 0.0, tbt, shape.batch_size as f64 * 1000.0 / tbt))
}

fn estimate(r: &Roofline, ttft_ms: f64, tbt_ms: f64, tokens_per_sec: f64) -> PerfEstimate {
    PerfEstimate {
        ttft_ms,
        tbt_ms,
        tokens_per_sec,
        flops_used: r.flops,
        bytes_moved: r.bytes,
        bound: r.bound(),
        compute_ms: r.compute_ms,
        memory_ms: r.memory_ms,
        comm_overhead_ms: r.delta,
        pipeline_transfer_ms: r.d,
    }
}

/// Largest batch whose KV cache (full `isl + osl` context) fits next to the
/// weight shard. Pipeline stages split the weights like tensor ranks do.
pub fn max_batch(m: &ModelSpec, shape: &WorkloadShape, class: &DeviceClass, par: &ParallelismConfig) -> u64 {
    let shards = par.devices().max(1) as f64;
    let residual = class.mem_capacity_gb * 1e9 - m.weight_bytes() / shards;
    if residual <= 0.0 {
        return 0;
    }
    let per_seq = kv_cache_bytes(m, shape.isl_tokens + shape.osl_tokens, 1);
    if per_seq == 0 {
        return u64::MAX;
    }
    libm::floor(residual / per_seq as f64) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hw::builtin_catalog;
    use proptest::prelude::*;

    fn model(name: &str) -> ModelSpec {
        builtin_models().get(name).unwrap().clone()
    }

    fn h100() -> DeviceClass {
        builtin_catalog()["H100"].clone()
    }

    fn tp1() -> ParallelismConfig {
        ParallelismConfig::default()
    }

    #[test]
    fn kv_examples() {
        assert_eq!(kv_cache_bytes(&model("llama3-8b-fp16"), 1000, 1), 131_072_000);
        assert_eq!(kv_cache_bytes(&model("llama3-8b-fp16"), 0, 1), 0);
        assert_eq!(kv_cache_bytes(&model("llama3-70b-fp16"), 32768, 1), 10_737_418_240);
        assert_eq!(kv_cache_bytes(&model("llama3-8b-fp8"), 1000, 1), 65_536_000);
    }

    #[test]
    fn bandwidth_examples() {
        assert_eq!(peak_egress_gbps(0, 10.0, 1).unwrap(), 0.0);
        assert!((peak_egress_gbps(1_000_000_000, 250.0, 1).unwrap() - 32.0).abs() < 1e-9);
        let big = peak_egress_gbps(10_737_418_240, 2000.0, 4).unwrap();
        assert!((big - 10.74).abs() < 5e-3);
        assert!((peak_ingress_gbps(1_000_000_000, 20.0, 8).unwrap() - 50.0).abs() < 1e-9);
        assert_eq!(peak_egress_gbps(1, 0.0, 1), Err(PerfError::DivideByZero("time window")));
        assert_eq!(peak_ingress_gbps(1, 1.0, 0), Err(PerfError::DivideByZero("device count")));

        let m = model("llama3-8b-fp16");
        let one = peak_ingress_gbps(kv_cache_bytes(&m, 512, 1), 20.0, 1).unwrap();
        let four = peak_ingress_gbps(kv_cache_bytes(&m, 512, 4), 20.0, 1).unwrap();
        assert!((four - 4.0 * one).abs() < 1e-9);
    }

    #[test]
    fn prefill_8b_on_h100() {
        let m = model("llama3-8b-fp16");
        let shape = WorkloadShape::new(1000, 0, 1);
        let e = prefill_time_ms(&m, &shape, &h100(), &tp1(), &Efficiency::mfu(1.0)).unwrap();
        assert!((e.compute_ms - 1.6e13 / 1.979e15 * 1e3).abs() < 1e-9);
        assert!((e.compute_ms - 8.09).abs() < 1e-2);
        assert!((e.memory_ms - 4.82).abs() < 5e-3);
        assert!((e.ttft_ms - 8.09).abs() < 1e-2);
        assert_eq!(e.bound, Bound::Compute);

        let half = prefill_time_ms(&m, &shape, &h100(), &tp1(), &Efficiency::mfu(0.5)).unwrap();
        assert!((half.ttft_ms - 16.17).abs() < 5e-3);

        let empty = prefill_time_ms(&m, &WorkloadShape::new(0, 0, 1), &h100(), &tp1(), &Efficiency::mfu(1.0))
            .unwrap();
        assert_eq!(empty.ttft_ms, 0.0);
        let empty_tp2 = prefill_time_ms(
            &m,
            &WorkloadShape::new(0, 0, 1),
            &h100(),
            &ParallelismConfig::new(2, 1),
            &Efficiency::mfu(1.0),
        )
        .unwrap();
        assert_eq!(empty_tp2.ttft_ms, empty_tp2.comm_overhead_ms);
    }

    #[test]
    fn decode_8b_on_h100() {
        let m = model("llama3-8b-fp16");
        let eff = Efficiency::mfu(1.0);
        let e = decode_time_ms(&m, &WorkloadShape::new(0, 0, 1), &h100(), &tp1(), &eff).unwrap();
        assert!((e.tbt_ms - 16e9 / 3350e9 * 1e3).abs() < 1e-12);
        assert!((e.tbt_ms - 4.78).abs() < 5e-3);
        assert_eq!(e.bound, Bound::Memory);

        let e2 = decode_time_ms(&m, &WorkloadShape::new(0, 0, 2), &h100(), &tp1(), &eff).unwrap();
        assert_eq!(e2.tbt_ms, e.tbt_ms);
        assert!((e2.tokens_per_sec - 2.0 * e.tokens_per_sec).abs() < 1e-9);

        // scale-up link large enough that δ(2) is small but nonzero; compare the roofline alone
        let e_tp2 = decode_time_ms(&m, &WorkloadShape::new(0, 0, 1), &h100(), &ParallelismConfig::new(2, 1), &eff)
            .unwrap();
        assert!(e_tp2.tbt_ms - e_tp2.comm_overhead_ms < e.tbt_ms);
    }

    #[test]
    fn comm_overhead_examples() {
        let mut m = model("llama3-8b-fp16");
        assert_eq!(comm_overhead_ms(&m, 1, 1, 1, 400.0), 0.0);
        m.n_layers = 1;
        let d = comm_overhead_ms(&m, 1, 1, 2, 400.0);
        assert!((d - 8.0 * 4096.0 * 2.0 / 400e9 * 1e3).abs() < 1e-15);
        assert!((d - 1.64e-4).abs() < 1e-6);
    }

    #[test]
    fn pipeline_adds_stage_transfers() {
        let m = model("llama3-70b-fp16");
        let shape = WorkloadShape::new(1024, 0, 1);
        let class = h100();
        let pp = ParallelismConfig::new(2, 2);
        let e = prefill_time_ms(&m, &shape, &class, &pp, &Efficiency::PREFILL).unwrap();
        let want_d = 1024.0 * 8192.0 * 2.0 * 8.0 / (7200.0 * 1e9) * 1e3;
        assert!((e.pipeline_transfer_ms - want_d).abs() < 1e-12);
        // 16 devices span two chassis, so stages talk over scale-out
        let wide = ParallelismConfig::new(8, 2);
        let e = prefill_time_ms(&m, &shape, &class, &wide, &Efficiency::PREFILL).unwrap();
        let want_d = 1024.0 * 8192.0 * 2.0 * 8.0 / (400.0 * 1e9) * 1e3;
        assert!((e.pipeline_transfer_ms - want_d).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let m = model("llama3-70b-fp16");
        let shape = WorkloadShape::new(128, 0, 1);
        assert!(matches!(
            prefill_time_ms(&m, &shape, &h100(), &tp1(), &Efficiency::PREFILL),
            Err(PerfError::ModelTooLarge { .. })
        ));
        assert!(prefill_time_ms(&m, &shape, &h100(), &ParallelismConfig::new(2, 1), &Efficiency::PREFILL).is_ok());
        assert!(matches!(
            prefill_time_ms(&m, &shape, &h100(), &ParallelismConfig::new(16, 1), &Efficiency::PREFILL),
            Err(PerfError::InvalidParallelism(_))
        ));
        assert!(matches!(
            prefill_time_ms(&m, &shape, &h100(), &ParallelismConfig::new(2, 1), &Efficiency::mfu(0.0)),
            Err(PerfError::InvalidInput(_))
        ));
    }

    #[test]
    fn max_batch_examples() {
        let m = model("llama3-8b-fp16");
        let shape = WorkloadShape::new(4096, 512, 1);
        assert_eq!(kv_cache_bytes(&m, 4608, 1), 603_979_776);
        assert_eq!(max_batch(&m, &shape, &h100(), &tp1()), 105);

        let big = model("llama3-70b-fp16");
        assert_eq!(max_batch(&big, &shape, &h100(), &tp1()), 0);

        let mut roomy = h100();
        roomy.mem_capacity_gb = 160.0;
        let doubled = max_batch(&m, &shape, &roomy, &tp1());
        assert_eq!(doubled, 238);
        assert!(doubled > 2 * 105);
    }

    #[test]
    fn egress_for_70b_long_context_fits_commodity_links() {
        let m = model("llama3-70b-fp16");
        let shape = WorkloadShape::new(32768, 0, 1);
        let kv = kv_cache_bytes(&m, 32768, 1);
        for class in &builtin_catalog().classes {
            for tp in [1u32, 2, 4, 8] {
                let par = ParallelismConfig::new(tp, 1);
                let Ok(e) = prefill_time_ms(&m, &shape, class, &par, &Efficiency::PREFILL) else {
                    continue;
                };
                let gbps = peak_egress_gbps(kv, e.ttft_ms, tp).unwrap();
                assert!(gbps < 400.0, "{} tp={tp}: {gbps}", class.name);
            }
        }
    }

    #[test]
    fn builtin_models_are_valid() {
        builtin_models().validate().unwrap();
        let mut m = model("llama3-8b-fp16");
        m.n_kv_heads = 64;
        assert!(m.validate().is_err());
    }

    proptest! {
        #[test]
        fn kv_is_linear(isl in 0u64..100_000, bs in 1u64..64, k in 1u64..5) {
            let m = model("llama3-8b-fp16");
            let base = kv_cache_bytes(&m, isl, bs);
            prop_assert_eq!(kv_cache_bytes(&m, isl * k, bs), k * base);
            prop_assert_eq!(kv_cache_bytes(&m, isl, bs * k), k * base);
            let mut deep = m.clone();
            deep.n_layers *= k;
            prop_assert_eq!(kv_cache_bytes(&deep, isl, bs), k * base);
            prop_assert_eq!(kv_cache_bytes(&model("llama3-8b-fp16"), isl, bs),
                            2 * kv_cache_bytes(&model("llama3-8b-fp8"), isl, bs));
        }

        #[test]
        fn roofline_monotone_and_labelled(isl in 1u64..8192, bs in 1u64..16,
                                           tf in 50.0f64..3000.0, bw in 300.0f64..9000.0,
                                           scale in 1.01f64..4.0) {
            let m = model("llama3-8b-fp16");
            let shape = WorkloadShape::new(isl, 256, bs);
            let mut c = h100();
            c.tflops_fp16 = tf;
            c.mem_bandwidth_gbps_bytes = bw;
            let eff = Efficiency::PREFILL;
            let p = prefill_time_ms(&m, &shape, &c, &tp1(), &eff).unwrap();
            let d = decode_time_ms(&m, &shape, &c, &tp1(), &eff).unwrap();
            for e in [&p, &d] {
                let want = if e.compute_ms >= e.memory_ms { Bound::Compute } else { Bound::Memory };
                prop_assert_eq!(e.bound, want);
            }
            prop_assert!((d.tokens_per_sec * d.tbt_ms / 1000.0 - bs as f64).abs() < 1e-9 * bs as f64);

            let mut faster = c.clone();
            faster.tflops_fp16 *= scale;
            prop_assert!(prefill_time_ms(&m, &shape, &faster, &tp1(), &eff).unwrap().ttft_ms <= p.ttft_ms);
            prop_assert!(decode_time_ms(&m, &shape, &faster, &tp1(), &eff).unwrap().tbt_ms <= d.tbt_ms);
            let mut wider = c.clone();
            wider.mem_bandwidth_gbps_bytes *= scale;
            prop_assert!(prefill_time_ms(&m, &shape, &wider, &tp1(), &eff).unwrap().ttft_ms <= p.ttft_ms);
            prop_assert!(decode_time_ms(&m, &shape, &wider, &tp1(), &eff).unwrap().tbt_ms <= d.tbt_ms);
        }

        #[test]
        fn egress_dimension_check(kv in 0u64..1u64 << 40, ttft in 0.1f64..1e5, n in 1u32..64) {
            let g = peak_egress_gbps(kv, ttft, n).unwrap();
            let back = g * 1e9 * n as f64 * ttft / 1000.0;
            prop_assert!((back - 8.0 * kv as f64).abs() <= 1e-12 * (8.0 * kv as f64).max(1.0));
        }

        #[test]
        fn delta_nondecreasing_in_tp(tp in 1u32..16, bs in 1u64..64, seq in 1u64..4096) {
            let m = model("llama3-70b-fp16");
            prop_assert!(comm_overhead_ms(&m, bs, seq, tp + 1, 400.0) >= comm_overhead_ms(&m, bs, seq, tp, 400.0));
        }
    }
}
