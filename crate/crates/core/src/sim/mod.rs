//! Discrete-event simulation of a [`PlacementPlan`].
//!
//! Every planned task is a FIFO server with `replicas` slots and a service
//! time equal to its analytic time. Transfers with nonzero time serialize on
//! a link per `(source class, destination class)` pair. A task starts only
//! after all of its inbound transfers have finished.

use alloc::collections::{BTreeMap, BinaryHeap, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::graph::TaskKind;
use crate::planner::PlacementPlan;


pub const SIM_SCHEMA: &str = "sim/v1";

/// Upper edges of the queue-wait histogram buckets, in ms. The last bucket is unbounded.
pub const WAIT_BUCKETS_MS: [f64; 6] = [0.0, 1.0, 10.0, 100.0, 1000.0, 10000.0];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("duration must be positive")]
    ZeroDuration,
    #[error("invalid arrivals: {0}")]
    InvalidArrivals(String),
}

/// Request arrival process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arrivals {
    /// One request every `ms`, starting at 0.
    Interval { ms: f64 },
    /// Seeded Poisson process at `per_sec` requests per second.
    Poisson { per_sec: f64 },
    /// `count` requests at time 0.
    Burst { count: u64 },
}

impl Arrivals {
    fn validate(&self) -> Result<(), SimError> {
        let ok = match *self {
            Arrivals::Interval { ms } => ms.is_finite() && ms > 0.0,
            Arrivals::Poisson { per_sec } => per_sec.is_finite() && per_sec > 0.0,
            Arrivals::Burst { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidArrivals(self.to_string()))
        }
    }

    /// Arrival times in `[0, horizon)`, at most `max` of them.
    pub fn times(&self, horizon_ms: f64, seed: u64, max: usize) -> Result<Vec<f64>, SimError> {
        self.validate()?;
        let mut out = Vec::new();
        match *self {
            Arrivals::Interval { ms } => {
                let mut k = 0u64;
                loop {
                    let t = k as f64 * ms;
                    if t >= horizon_ms || out.len() >= max {
                        break;
                    }
                    out.push(t);
                    k += 1;
                }
            }
            Arrivals::Poisson { per_sec } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mean_ms = 1000.0 / per_sec;
                let mut t = 0.0;
                loop {
                    // 53 random bits; 1 - u lies in (0, 1]
                    let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                    t += -libm::log(1.0 - u) * mean_ms;
                    if t >= horizon_ms || out.len() >= max {
                        break;
                    }
                    out.push(t);
                }
            }
            Arrivals::Burst { count } => {
                if horizon_ms > 0.0 {
                    out.resize(count.min(max as u64) as usize, 0.0);
                }
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Arrivals {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arrivals::Interval { ms } => write!(f, "interval:{ms}"),
            Arrivals::Poisson { per_sec } => write!(f, "poisson:{per_sec}"),
            Arrivals::Burst { count } => write!(f, "burst:{count}"),
        }
    }
}

impl FromStr for Arrivals {
    type Err = SimError;

    /// `interval:<ms>`, `poisson:<per second>` or `burst:<count>`.
    fn from_str(s: &str) -> Result<Self, SimError> {
        let bad = || SimError::InvalidArrivals(s.to_string());
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let a = match kind {
            "interval" => Arrivals::Interval { ms: value.parse().map_err(|_| bad())? },
            "poisson" => Arrivals::Poisson { per_sec: value.parse().map_err(|_| bad())? },
            "burst" => Arrivals::Burst { count: value.parse().map_err(|_| bad())? },
            _ => return Err(bad()),
        };
        a.validate()?;
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub arrivals: Arrivals,
    pub duration_ms: f64,
    pub seed: u64,
    pub max_requests: usize,
    /// Record every event in the report.
    pub trace: bool,
}

impl SimOptions {
    pub fn new(arrivals: Arrivals, duration_ms: f64, seed: u64) -> Self {
        SimOptions {
            arrivals,
            duration_ms,
            seed,
            max_requests: 1_000_000,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TaskEnd,
    TransferEnd,
    RequestArrival,
    TaskStart,
    TransferStart,
}

/// `node` is a task index, or a transfer index for transfer events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time_ms: f64,
    pub kind: EventKind,
    pub request: u64,
    pub node: usize,
}

impl SimEvent {
    fn key(&self) -> (EventKind, u64, usize) {
        (self.kind, self.request, self.node)
    }
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time_ms
            .total_cmp(&other.time_ms)
            .then_with(|| self.key().cmp(&other.key()))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub id: u64,
    pub arrival_ms: f64,
    /// `None` while in flight at the horizon.
    pub e2e_ms: Option<f64>,
    pub ttft_ms: Option<f64>,
    /// Per-token time of each finished decode task.
    pub tbt_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerStats {
    pub task: String,
    pub class: String,
    pub replicas: u32,
    pub utilization: f64,
    pub served: u64,
    pub mean_wait_ms: f64,
    /// Counts per [`WAIT_BUCKETS_MS`] bucket plus one overflow bucket.
    pub wait_histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub src_class: String,
    pub dst_class: String,
    pub utilization: f64,
    pub transfers: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub schema: String,
    pub graph: String,
    pub arrivals: String,
    pub duration_ms: f64,
    pub seed: u64,
    pub admitted: u64,
    pub completed: u64,
    pub in_flight: u64,
    pub requests: Vec<RequestRecord>,
    pub devices: Vec<ServerStats>,
    pub links: Vec<LinkStats>,
    pub throughput_requests_per_sec: f64,
    pub throughput_tokens_per_sec: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<SimEvent>>,
}

impl SimReport {
    fn completed_mean(&self, f: impl Fn(&RequestRecord) -> Option<f64>) -> Option<f64> {
        let xs: Vec<f64> = self.requests.iter().filter(|r| r.e2e_ms.is_some()).filter_map(f).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    }

    pub fn mean_e2e_ms(&self) -> Option<f64> {
        self.completed_mean(|r| r.e2e_ms)
    }

    pub fn mean_ttft_ms(&self) -> Option<f64> {
        self.completed_mean(|r| r.ttft_ms)
    }

    /// Mean of each completed request's worst decode per-token time.
    pub fn mean_tbt_ms(&self) -> Option<f64> {
        self.completed_mean(|r| r.tbt_ms.iter().copied().reduce(f64::max))
    }
}

struct Server {
    slots: u32,
    busy: u32,
    service_ms: f64,
    queue: VecDeque<(u64, f64)>,
    busy_ms: f64,
    served: u64,
    wait_sum: f64,
    hist: Vec<u64>,
}

impl Server {
    fn new(slots: u32, service_ms: f64) -> Self {
        Server {
            slots,
            busy: 0,
            service_ms,
            queue: VecDeque::new(),
            busy_ms: 0.0,
            served: 0,
            wait_sum: 0.0,
            hist: vec![0; WAIT_BUCKETS_MS.len() + 1],
        }
    }

    fn record_wait(&mut self, wait: f64) {
        self.wait_sum += wait;
        let b = WAIT_BUCKETS_MS.iter().position(|&e| wait <= e).unwrap_or(WAIT_BUCKETS_MS.len());
        self.hist[b] += 1;
    }
}

struct Link {
    busy: bool,
    queue: VecDeque<(u64, usize, f64)>,
    busy_ms: f64,
    transfers: u64,
}

struct Request {
    arrival: f64,
    waiting: Vec<usize>,
    left: usize,
    first_prefill_end: Option<f64>,
    tbt: Vec<f64>,
    done: Option<f64>,
}

struct Topology {
    preds: Vec<usize>,
    out: Vec<Vec<usize>>,
    xfer: Vec<(usize, usize, f64, Option<usize>)>,
}

fn topology(plan: &PlacementPlan) -> Result<(Topology, Vec<(String, String)>), SimError> {
    let index: BTreeMap<&str, usize> = plan.tasks.iter().enumerate().map(|(i, t)| (t.id.as_str(), i)).collect();
    if index.len() != plan.tasks.len() {
        return Err(SimError::InvalidPlan("duplicate task ids".into()));
    }
    for t in &plan.tasks {
        if !(t.service_ms.is_finite() && t.service_ms >= 0.0) {
            return Err(SimError::InvalidPlan(format!("task {} has service time {}", t.id, t.service_ms)));
        }
        if t.parallelism.replicas == 0 {
            return Err(SimError::InvalidPlan(format!("task {} has zero replicas", t.id)));
        }
    }
    plan.finish_times().map_err(|e| SimError::InvalidPlan(e.to_string()))?;

    let n = plan.tasks.len();
    let mut topo = Topology {
        preds: vec![0; n],
        out: vec![Vec::new(); n],
        xfer: Vec::new(),
    };
    let mut links: Vec<(String, String)> = Vec::new();
    for x in &plan.transfers {
        let look = |id: &str| index.get(id).copied().ok_or_else(|| SimError::InvalidPlan(format!("transfer names unknown task {id}")));
        let (s, d) = (look(&x.src)?, look(&x.dst)?);
        if !(x.ms.is_finite() && x.ms >= 0.0) {
            return Err(SimError::InvalidPlan(format!("transfer {}->{} takes {} ms", x.src, x.dst, x.ms)));
        }
        let link = (x.ms > 0.0).then(|| {
            let key = (plan.tasks[s].class.clone(), plan.tasks[d].class.clone());
            match links.iter().position(|l| *l == key) {
                Some(i) => i,
                None => {
                    links.push(key);
                    links.len() - 1
                }
            }
        });
        topo.preds[d] += 1;
        topo.out[s].push(topo.xfer.len());
        topo.xfer.push((s, d, x.ms, link));
    }
    Ok((topo, links))
}

struct Sim<'a> {
    plan: &'a PlacementPlan,
    topo: Topology,
    horizon: f64,
    now: f64,
    heap: BinaryHeap<core::cmp::Reverse<SimEvent>>,
    servers: Vec<Server>,
    links: Vec<Link>,
    requests: Vec<Request>,
    trace: Option<Vec<SimEvent>>,
}

impl Sim<'_> {
    fn push(&mut self, time_ms: f64, kind: EventKind, request: u64, node: usize) {
        self.heap.push(core::cmp::Reverse(SimEvent { time_ms, kind, request, node }));
    }

    fn log(&mut self, kind: EventKind, request: u64, node: usize) {
        if let Some(t) = &mut self.trace {
            t.push(SimEvent { time_ms: self.now, kind, request, node });
        }
    }

    fn busy_within_horizon(&self, ms: f64) -> f64 {
        (self.now + ms).min(self.horizon) - self.now
    }

    fn start_task(&mut self, r: u64, task: usize, ready_at: f64) {
        let ms = self.servers[task].service_ms;
        let within = self.busy_within_horizon(ms);
        let s = &mut self.servers[task];
        s.busy += 1;
        s.busy_ms += within;
        s.record_wait(self.now - ready_at);
        self.log(EventKind::TaskStart, r, task);
        self.push(self.now + ms, EventKind::TaskEnd, r, task);
    }

    fn task_ready(&mut self, r: u64, task: usize) {
        let s = &mut self.servers[task];
        if s.busy < s.slots {
            self.start_task(r, task, self.now);
        } else {
            s.queue.push_back((r, self.now));
        }
    }

    fn start_transfer(&mut self, r: u64, x: usize, link: usize) {
        let ms = self.topo.xfer[x].2;
        let within = self.busy_within_horizon(ms);
        let l = &mut self.links[link];
        l.busy = true;
        l.busy_ms += within;
        l.transfers += 1;
        self.log(EventKind::TransferStart, r, x);
        self.push(self.now + ms, EventKind::TransferEnd, r, x);
    }

    fn input_arrived(&mut self, r: u64, task: usize) {
        let w = &mut self.requests[r as usize].waiting[task];
        *w -= 1;
        if *w == 0 {
            self.task_ready(r, task);
        }
    }

    fn task_end(&mut self, r: u64, task: usize) {
        self.log(EventKind::TaskEnd, r, task);
        let next = {
            let s = &mut self.servers[task];
            s.busy -= 1;
            s.served += 1;
            s.queue.pop_front()
        };
        if let Some((q, ready_at)) = next {
            self.start_task(q, task, ready_at);
        }

        let t = &self.plan.tasks[task];
        let (kind, out_tokens, service) = (t.kind, t.out_tokens, t.service_ms);
        let now = self.now;
        let req = &mut self.requests[r as usize];
        match kind {
            TaskKind::Prefill => {
                req.first_prefill_end = Some(req.first_prefill_end.map_or(now - req.arrival, |x: f64| x.min(now - req.arrival)));
            }
            TaskKind::Decode if out_tokens > 0 => req.tbt.push(service / out_tokens as f64),
            _ => {}
        }
        req.left -= 1;
        if req.left == 0 {
            req.done = Some(now);
        }

        for i in 0..self.topo.out[task].len() {
            let x = self.topo.out[task][i];
            let (_, dst, _, link) = self.topo.xfer[x];
            match link {
                None => self.input_arrived(r, dst),
                Some(l) if !self.links[l].busy => self.start_transfer(r, x, l),
                Some(l) => self.links[l].queue.push_back((r, x, now)),
            }
        }
    }

    fn transfer_end(&mut self, r: u64, x: usize) {
        self.log(EventKind::TransferEnd, r, x);
        let (_, dst, _, link) = self.topo.xfer[x];
        let l = link.expect("only linked transfers emit events");
        self.links[l].busy = false;
        if let Some((q, qx, _)) = self.links[l].queue.pop_front() {
            self.start_transfer(q, qx, l);
        }
        self.input_arrived(r, dst);
    }

    fn arrive(&mut self, r: u64) {
        self.log(EventKind::RequestArrival, r, 0);
        let n = self.plan.tasks.len();
        let req = &mut self.requests[r as usize];
        if n == 0 {
            req.done = Some(self.now);
            return;
        }
        for task in 0..n {
            if self.topo.preds[task] == 0 {
                self.task_ready(r, task);
            }
        }
    }
}

/// Runs `plan` under `opts.arrivals` until `opts.duration_ms`. Requests still
/// running at the horizon are reported as in flight.
pub fn simulate_plan(plan: &PlacementPlan, opts: &SimOptions) -> Result<SimReport, SimError> {
    if !(opts.duration_ms.is_finite() && opts.duration_ms > 0.0) {
        return Err(SimError::ZeroDuration);
    }
    let (topo, link_keys) = topology(plan)?;
    let arrivals = opts.arrivals.times(opts.duration_ms, opts.seed, opts.max_requests)?;
    let n = plan.tasks.len();

    let mut sim = Sim {
        plan,
        horizon: opts.duration_ms,
        now: 0.0,
        heap: BinaryHeap::new(),
        servers: plan.tasks.iter().map(|t| Server::new(t.parallelism.replicas, t.service_ms)).collect(),
        links: link_keys
            .iter()
            .map(|_| Link {
                busy: false,
                queue: VecDeque::new(),
                busy_ms: 0.0,
                transfers: 0,
            })
            .collect(),
        requests: arrivals
            .iter()
            .map(|&a| Request {
                arrival: a,
                waiting: topo.preds.clone(),
                left: n,
                first_prefill_end: None,
                tbt: Vec::new(),
                done: None,
            })
            .collect(),
        topo,
        trace: opts.trace.then(Vec::new),
    };
    for (r, &a) in arrivals.iter().enumerate() {
        sim.push(a, EventKind::RequestArrival, r as u64, 0);
    }

    while let Some(core::cmp::Reverse(ev)) = sim.heap.pop() {
        if ev.time_ms > sim.horizon {
            break;
        }
        sim.now = ev.time_ms;
        match ev.kind {
            EventKind::RequestArrival => sim.arrive(ev.request),
            EventKind::TaskEnd => sim.task_end(ev.request, ev.node),
            EventKind::TransferEnd => sim.transfer_end(ev.request, ev.node),
            EventKind::TaskStart | EventKind::TransferStart => unreachable!("starts are not queued"),
        }
    }

    let tokens_per_request: u64 = plan.tasks.iter().filter(|t| t.kind == TaskKind::Decode).map(|t| t.out_tokens).sum();
    let requests: Vec<RequestRecord> = sim
        .requests
        .iter()
        .enumerate()
        .map(|(i, r)| RequestRecord {
            id: i as u64,
            arrival_ms: r.arrival,
            e2e_ms: r.done.map(|d| d - r.arrival),
            ttft_ms: r.first_prefill_end,
            tbt_ms: r.tbt.clone(),
        })
        .collect();
    let completed = requests.iter().filter(|r| r.e2e_ms.is_some()).count() as u64;
    let secs = opts.duration_ms / 1000.0;
    let devices = plan
        .tasks
        .iter()
        .zip(&sim.servers)
        .map(|(t, s)| {
            let started: u64 = s.hist.iter().sum();
            ServerStats {
                task: t.id.clone(),
                class: t.class.clone(),
                replicas: s.slots,
                utilization: (s.busy_ms / (opts.duration_ms * s.slots as f64)).clamp(0.0, 1.0),
                served: s.served,
                mean_wait_ms: if started == 0 { 0.0 } else { s.wait_sum / started as f64 },
                wait_histogram: s.hist.clone(),
            }
        })
        .collect();
    let links = link_keys
        .into_iter()
        .zip(&sim.links)
        .map(|((src_class, dst_class), l)| LinkStats {
            src_class,
            dst_class,
            utilization: (l.busy_ms / opts.duration_ms).clamp(0.0, 1.0),
            transfers: l.transfers,
        })
        .collect();

    Ok(SimReport {
        schema: SIM_SCHEMA.into(),
        graph: plan.graph.clone(),
        arrivals: opts.arrivals.to_string(),
        duration_ms: opts.duration_ms,
        seed: opts.seed,
        admitted: requests.len() as u64,
        completed,
        in_flight: requests.len() as u64 - completed,
        requests,
        devices,
        links,
        throughput_requests_per_sec: completed as f64 / secs,
        throughput_tokens_per_sec: (completed * tokens_per_request) as f64 / secs,
        trace: sim.trace,
    })
}

/// Sustainable request rate of `plan`: the slowest task (service over
/// replicas) or link (summed transfer time per request) sets it.
pub fn bottleneck_requests_per_sec(plan: &PlacementPlan) -> f64 {
    let class = |id: &str| plan.task(id).map(|t| t.class.clone()).unwrap_or_default();
    let mut link_ms: BTreeMap<(String, String), f64> = BTreeMap::new();
    for x in plan.transfers.iter().filter(|x| x.ms > 0.0) {
        *link_ms.entry((class(&x.src), class(&x.dst))).or_default() += x.ms;
    }
    let slowest = plan
        .tasks
        .iter()
        .map(|t| t.service_ms / t.parallelism.replicas.max(1) as f64)
        .chain(link_ms.into_values())
        .fold(0.0, f64::max);
    if slowest == 0.0 {
        f64::INFINITY
    } else {
        1000.0 / slowest
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub metric: String,
    pub simulated: f64,
    pub analytic: f64,
    /// `|simulated - analytic| / analytic`, or the absolute gap when analytic is 0.
    pub relative: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub tolerance: f64,
    pub deviations: Vec<Deviation>,
}

impl Comparison {
    pub fn within_tolerance(&self) -> bool {
        self.deviations.iter().all(|d| !d.flagged)
    }

    pub fn get(&self, metric: &str) -> Option<&Deviation> {
        self.deviations.iter().find(|d| d.metric == metric)
    }
}

pub const LATENCY_TOLERANCE: f64 = 0.01;

fn deviation(metric: &str, simulated: f64, analytic: f64, tolerance: f64) -> Deviation {
    let gap = (simulated - analytic).abs();
    let relative = if analytic == 0.0 { gap } else { gap / analytic.abs() };
    Deviation {
        metric: metric.into(),
        simulated,
        analytic,
        relative,
        flagged: relative > tolerance,
    }
}

/// Mean simulated e2e, ttft and tbt against the plan's critical path, ttft
/// and tbt. Deviations above [`LATENCY_TOLERANCE`] are flagged, not errors.
pub fn compare_to_analytic(report: &SimReport, plan: &PlacementPlan) -> Comparison {
    let tol = LATENCY_TOLERANCE;
    let mut deviations = Vec::new();
    if let (Some(sim), Ok(cp)) = (report.mean_e2e_ms(), plan.critical_path_ms()) {
        deviations.push(deviation("e2e_ms", sim, cp, tol));
    }
    if let (Some(sim), Some(a)) = (report.mean_ttft_ms(), plan.ttft_ms) {
        deviations.push(deviation("ttft_ms", sim, a, tol));
    }
    if let (Some(sim), Some(a)) = (report.mean_tbt_ms(), plan.tbt_ms) {
        deviations.push(deviation("tbt_ms", sim, a, tol));
    }
    Comparison { tolerance: tol, deviations }
}
