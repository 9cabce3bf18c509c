//! Experiment execution: scenarios, single runs, resumable sweeps and the
//! files they emit.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, Mode, Scenario, TopologyName, TraceFormat};
use crate::engine::{trace_to_csv, trace_to_vcd, Netlist, PulseEvent};
use crate::error::{Error, Result};
use crate::flitsim::{make_pattern, FlitSim, Metrics, PatternKind, SimOptions, Traffic};
use crate::packet::{bits_per_packet, EpochConfig, Packet};
use crate::perf::{self, CaseFractions, PerfTopology, TrafficCase};
use crate::router::crossval::{crossvalidate, exhaustive_single_epoch, random_epochs};
use crate::router::netlist::{build_router_netlist, run_netlist_epochs, EpochInput};
use crate::router::{Policy, Router, RouterConfig};
use crate::topology::{Network, Target};

/// Per-epoch packets seen at each endpoint: `[epoch][endpoint]`.
pub type EndpointTimeline = Vec<Vec<Option<Packet>>>;

/// Packets that left the network at each endpoint.
#[derive(Debug, Clone)]
pub struct StitchedRun {
    pub outputs: EndpointTimeline,
    /// Per element, in evaluation order: name, netlist and pulse trace.
    pub traces: Vec<(String, Netlist, Vec<PulseEvent>)>,
}

/// Runs a network with zero-delay links one element at a time over all
/// epochs, feeding each element's outputs to its successors.
fn stitch(
    net: &Network,
    inputs: &EndpointTimeline,
    mut element: impl FnMut(
        usize,
        &[EpochInput],
    ) -> Result<(
        Vec<(Option<Packet>, Option<Packet>)>,
        Option<(Netlist, Vec<PulseEvent>)>,
    )>,
) -> Result<StitchedRun> {
    let epochs = inputs.len();
    let n = net.elements.len();
    let mut pending: Vec<Vec<EpochInput>> = vec![
        vec![
            EpochInput {
                rand_bit: Some(false),
                ..EpochInput::default()
            };
            epochs
        ];
        n
    ];
    for (k, row) in inputs.iter().enumerate() {
        for (ep, pkt) in row.iter().enumerate() {
            if let (Some(p), Some((id, port))) = (pkt, net.inject.get(ep).copied().flatten()) {
                let slot = &mut pending[id][k];
                if port == 0 {
                    slot.a = Some(p.clone());
                } else {
                    slot.b = Some(p.clone());
                }
            }
        }
    }
    let mut outputs = vec![vec![None; net.num_endpoints()]; epochs];
    let mut traces = Vec::new();
    for &e in &net.order {
        if net.outputs[e].iter().any(|l| l.delay_epochs > 0) {
            return Err(Error::InvalidSize(
                "element-wise stitching needs zero-delay links".into(),
            ));
        }
        let (outs, trace) = element(e, &pending[e])?;
        if let Some((nl, tr)) = trace {
            traces.push((net.elements[e].name.clone(), nl, tr));
        }
        for (k, (top, bottom)) in outs.into_iter().enumerate() {
            for (p, pkt) in [top, bottom].into_iter().enumerate() {
                let Some(pkt) = pkt else { continue };
                match net.outputs[e][p].target {
                    Target::Element { id, port } => {
                        let slot = &mut pending[id][k];
                        if port == 0 {
                            slot.a = Some(pkt);
                        } else {
                            slot.b = Some(pkt);
                        }
                    }
                    Target::Endpoint(ep) => outputs[k][ep] = Some(pkt),
                }
            }
        }
    }
    Ok(StitchedRun { outputs, traces })
}

/// Cell-level simulation of every element.
pub fn run_pulse_network(
    net: &Network,
    policy: Policy,
    inputs: &EndpointTimeline,
) -> Result<StitchedRun> {
    stitch(net, inputs, |e, seq| {
        let cfg = RouterConfig::new(policy, net.elements[e].thr_slot, net.epoch)?;
        let run = run_netlist_epochs(&cfg, seq)?;
        Ok((run.outputs, Some((run.netlist, run.trace))))
    })
}

/// Behavioral counterpart of [`run_pulse_network`].
pub fn run_behavioral_network(
    net: &Network,
    policy: Policy,
    inputs: &EndpointTimeline,
) -> Result<StitchedRun> {
    stitch(net, inputs, |e, seq| {
        let mut r = Router::new(RouterConfig::new(
            policy,
            net.elements[e].thr_slot,
            net.epoch,
        )?);
        let outs = seq
            .iter()
            .map(|i| {
                let o = r.route_epoch(i.a.as_ref(), i.b.as_ref(), i.rand_bit);
                (o.top, o.bottom)
            })
            .collect();
        Ok((outs, None))
    })
}

/// Two packets that both request the top output in two consecutive epochs.
pub fn fig9_inputs() -> EndpointTimeline {
    let a = Packet::new(1, [1, 4, 9]);
    let b = Packet::new(1, [2, 6]);
    vec![
        vec![Some(a.clone()), Some(b.clone())],
        vec![Some(a), Some(b)],
    ]
}

/// Inputs 1 and 3 send to destination 2 and input 2 to destination 4, twice.
/// Zero-based `(epoch, source, destination)`.
pub fn fig11_script() -> Vec<(u64, usize, usize)> {
    vec![
        (0, 0, 1),
        (0, 1, 3),
        (0, 2, 1),
        (1, 0, 1),
        (1, 1, 3),
        (1, 2, 1),
    ]
}

/// Input 1 to destination 2; inputs 2 and 3 both to destination 3.
pub fn fig14_script() -> Vec<(u64, usize, usize)> {
    vec![(0, 0, 1), (0, 1, 2), (0, 2, 2)]
}

fn script_timeline(
    script: &[(u64, usize, usize)],
    endpoints: usize,
    epochs: usize,
) -> EndpointTimeline {
    let mut t = vec![vec![None; endpoints]; epochs];
    for &(k, src, dst) in script {
        t[k as usize][src] = Some(Packet::new(dst as u32 + 1, [src as u32 + 1]));
    }
    t
}

fn random_timeline(
    net: &Network,
    kind: PatternKind,
    rate: f64,
    seed: u64,
    epochs: usize,
) -> Result<EndpointTimeline> {
    let n = net.num_endpoints();
    let pattern = make_pattern(kind, n, rate, seed)?;
    let slots = net.epoch.n_data_slots();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..epochs)
        .map(|_| {
            (0..n)
                .map(|src| {
                    rng.gen_bool(rate).then(|| {
                        let dst = pattern.destination(src, &mut rng);
                        let data: Vec<u32> = (1..=slots).filter(|_| rng.gen_bool(0.3)).collect();
                        Packet::new(dst as u32 + 1, data)
                    })
                })
                .collect()
        })
        .collect())
}

/// How sweep points are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Worker threads; `None` uses all cores. Sequential without the
    /// `parallel` feature.
    Parallel(Option<usize>),
}

pub fn map_points<T, R, F>(points: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => points.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel(workers) => {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new()
                .num_threads(workers.unwrap_or(0))
                .build()
            {
                Ok(pool) => pool.install(|| points.par_iter().map(&f).collect()),
                Err(_) => points.iter().map(f).collect(),
            }
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel(_) => points.iter().map(f).collect(),
    }
}

/// One CSV row split into its key columns and the rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub key: Vec<String>,
    pub values: Vec<String>,
}

fn cmp_key(a: &[String], b: &[String]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = match (x.parse::<f64>(), y.parse::<f64>()) {
            (Ok(p), Ok(q)) => p.total_cmp(&q),
            _ => x.cmp(y),
        };
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub key_columns: Vec<&'static str>,
    pub value_columns: Vec<&'static str>,
    pub rows: Vec<Row>,
}

impl Table {
    fn new(key_columns: &[&'static str], value_columns: &[&'static str]) -> Self {
        Table {
            key_columns: key_columns.to_vec(),
            value_columns: value_columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn sort(&mut self) {
        self.rows.sort_by(|a, b| cmp_key(&a.key, &b.key));
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = self
            .key_columns
            .iter()
            .chain(&self.value_columns)
            .copied()
            .collect();
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.key.iter().chain(&r.values))
                .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Rows of a previously written table with the same header.
    fn read_existing(&self, path: &Path) -> Result<Vec<Row>> {
        if !path.exists() {
            return Ok(Vec::new());
        }
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let header: Vec<String> = r
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_string)
            .collect();
        let expected: Vec<&str> = self
            .key_columns
            .iter()
            .chain(&self.value_columns)
            .copied()
            .collect();
        if header != expected {
            return Ok(Vec::new());
        }
        let k = self.key_columns.len();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let f: Vec<String> = rec.iter().map(str::to_string).collect();
            rows.push(Row {
                key: f[..k].to_vec(),
                values: f[k..].to_vec(),
            });
        }
        Ok(rows)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

pub const FLIT_KEYS: [&str; 5] = ["topology", "pattern", "data_period_ps", "rate", "seed"];
pub const FLIT_VALUES: [&str; 7] = [
    "throughput_bps_per_port",
    "delivered_per_epoch_per_port",
    "deflection_prob",
    "latency_p50",
    "latency_p99",
    "worst_endpoint_fraction",
    "max_queue_depth",
];
pub const ANALYTIC_KEYS: [&str; 3] = ["data_period_ps", "case", "baseline"];
pub const ANALYTIC_VALUES: [&str; 5] = [
    "gbps_per_port",
    "gbps_per_port_per_jj",
    "jj",
    "efficiency",
    "ratio",
];

fn flit_row(
    topo: TopologyName,
    kind: PatternKind,
    epoch: &EpochConfig,
    rate: f64,
    seed: u64,
    m: &Metrics,
) -> Row {
    let bits = if epoch.n_data_slots() < 2 {
        0.0
    } else {
        bits_per_packet(epoch).unwrap_or(0.0)
    };
    let bps = m.throughput_per_port * bits / (epoch.epoch().0 as f64 * 1e-12);
    Row {
        key: vec![
            topo.name().into(),
            kind.name().into(),
            epoch.data_period.0.to_string(),
            f6(rate),
            seed.to_string(),
        ],
        values: vec![
            format!("{bps:.1}"),
            f6(m.throughput_per_port),
            f6(m.deflection_prob),
            format!("{}", m.latency_p50),
            format!("{}", m.latency_p99),
            f6(m.worst_endpoint_fraction),
            m.max_queue_depth.to_string(),
        ],
    }
}

fn sim_options(cfg: &ExperimentConfig, seed: u64) -> Result<SimOptions> {
    Ok(SimOptions {
        policy: cfg.policy()?,
        rand_q: cfg.router.rand_q,
        seed,
        reinject: cfg.traffic.reinject,
        ..SimOptions::default()
    })
}

/// Flit-level measurement at one point.
pub fn flit_point(
    cfg: &ExperimentConfig,
    kind: PatternKind,
    data_period: u64,
    rate: f64,
    seed: u64,
) -> Result<Row> {
    let epoch = cfg.epoch_config_at(data_period)?;
    let net = cfg.experiment.topology.build(epoch)?;
    let pattern = make_pattern(kind, net.num_endpoints(), rate, seed)?;
    let mut sim = FlitSim::new(&net, Traffic::Pattern(pattern), sim_options(cfg, seed)?)?;
    let m = sim.measure(cfg.traffic.warmup, cfg.traffic.sample);
    Ok(flit_row(
        cfg.experiment.topology,
        kind,
        &epoch,
        rate,
        seed,
        &m,
    ))
}

/// Saturated accepted throughput per port of the 2×2 mesh: uniform traffic,
/// and the best and worst over all named patterns.
pub fn measure_mesh_fractions(
    data_period: u64,
    policy: Policy,
    seed: u64,
    warmup: u64,
    sample: u64,
) -> Result<CaseFractions> {
    let epoch = EpochConfig::new(8, data_period)?;
    let net = TopologyName::Mesh8.build(epoch)?;
    let opts = SimOptions {
        policy,
        seed,
        ..SimOptions::default()
    };
    let mut by_kind = BTreeMap::new();
    for kind in PatternKind::ALL {
        let p = make_pattern(kind, 8, 1.0, seed)?;
        let mut sim = FlitSim::new(&net, Traffic::Pattern(p), opts)?;
        by_kind.insert(kind.name(), sim.measure(warmup, sample).throughput_per_port);
    }
    let best = by_kind.values().copied().fold(0.0, f64::max);
    let worst = by_kind.values().copied().fold(1.0, f64::min);
    Ok(CaseFractions {
        best,
        uniform: by_kind["uniform"],
        worst,
    })
}

fn perf_topology(cfg: &ExperimentConfig) -> Result<PerfTopology> {
    Ok(match cfg.experiment.topology {
        TopologyName::Router2 => PerfTopology::Router2,
        TopologyName::Butterfly4 => PerfTopology::Butterfly4,
        TopologyName::Mesh8 => {
            let f = match cfg.analytic.mesh_fractions {
                Some([best, uniform, worst]) => CaseFractions {
                    best,
                    uniform,
                    worst,
                },
                None => measure_mesh_fractions(
                    cfg.epoch.data_period,
                    cfg.policy()?,
                    cfg.traffic.seed,
                    cfg.traffic.warmup,
                    cfg.traffic.sample,
                )?,
            };
            PerfTopology::Mesh8(f)
        }
        other => {
            return Err(Error::Config {
                line: 0,
                msg: format!("no analytic model for {}", other.name()),
            })
        }
    })
}

pub fn analytic_point(
    topo: &PerfTopology,
    base: &perf::BaselineSpec,
    case: TrafficCase,
    data_period: u64,
) -> Result<Row> {
    let p = perf::pastnoc_goodput(data_period, topo, case)?;
    let ratio = perf::improvement_factor(p.gbps_per_port_per_jj, base.gbps_per_port_per_jj(case));
    Ok(Row {
        key: vec![
            data_period.to_string(),
            case.name().into(),
            base.name.clone(),
        ],
        values: vec![
            f6(p.gbps_per_port),
            format!("{:.9}", p.gbps_per_port_per_jj),
            p.jj.to_string(),
            f6(p.efficiency),
            f6(ratio),
        ],
    })
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub execution: Execution,
    pub trace: Option<TraceFormat>,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        RunOptions {
            out: out.into(),
            seed: None,
            execution: Execution::Parallel(None),
            trace: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub rows: usize,
    /// Points skipped because a previous run already produced them.
    pub resumed: usize,
    pub mismatches: usize,
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    mode: Mode,
    topology: &'static str,
    seeds: Vec<u64>,
    features: Vec<&'static str>,
    assumptions: Vec<String>,
    provenance: BTreeMap<&'static str, &'static str>,
    outputs: Vec<String>,
    config: String,
}

fn assumptions(cfg: &ExperimentConfig) -> Vec<String> {
    let mut v = vec![
        "payload bits per packet: m = n - n/e distinct pulses of log2(n) bits, n = data slots"
            .to_string(),
        "router propagation delay: control period + 33 ps".to_string(),
        "misdelivered packets are re-injected ahead of fresh traffic".to_string(),
        "mesh routing: Y then X dimension order, destination tag inside each node".to_string(),
        format!(
            "router area: {} JJ round robin, {} JJ randomized",
            crate::topology::ROUTER_JJ_ROUND_ROBIN,
            crate::topology::ROUTER_JJ_RANDOMIZED
        ),
    ];
    if cfg.experiment.mode == Mode::Analytic {
        if let Ok(b) = perf::baseline(&cfg.analytic.baseline) {
            v.push(format!("baseline {}", b.assumption()));
        }
    }
    if !cfg.traffic.reinject {
        v.push("re-injection disabled: misdelivered packets are discarded".into());
    }
    v
}

fn provenance(mode: Mode) -> BTreeMap<&'static str, &'static str> {
    let pairs: &[(&str, &str)] = match mode {
        Mode::Flit => &[
            (
                "throughput_bps_per_port",
                "flitsim::measure x packet::bits_per_packet",
            ),
            ("delivered_per_epoch_per_port", "flitsim::measure"),
            ("deflection_prob", "flitsim::measure"),
            ("latency_p50", "flitsim::measure"),
            ("latency_p99", "flitsim::measure"),
            ("worst_endpoint_fraction", "flitsim::measure"),
            ("max_queue_depth", "flitsim::measure"),
        ],
        Mode::Analytic => &[
            ("gbps_per_port", "perf::pastnoc_goodput"),
            ("gbps_per_port_per_jj", "perf::pastnoc_goodput"),
            ("jj", "topology::Network::area"),
            ("efficiency", "perf::PerfTopology::delivery_efficiency"),
            ("ratio", "perf::improvement_factor"),
        ],
        Mode::Pulse => &[
            ("packet", "router::netlist::run_netlist_epochs"),
            ("behavioral", "router::Router::route_epoch"),
        ],
    };
    pairs.iter().copied().collect()
}

struct Emitter<'a> {
    out: &'a Path,
    files: Vec<PathBuf>,
}

impl Emitter<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::create_dir_all(self.out)?;
        let p = self.out.join(name);
        std::fs::write(&p, contents)?;
        self.files.push(p);
        Ok(())
    }

    fn metadata(&mut self, cfg: &ExperimentConfig, command: &str, seeds: Vec<u64>) -> Result<()> {
        let mut outputs: Vec<String> = self
            .files
            .iter()
            .filter_map(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .collect();
        outputs.push("metadata.json".into());
        let md = Metadata {
            tool: "pastnoc",
            version: env!("CARGO_PKG_VERSION"),
            command,
            mode: cfg.experiment.mode,
            topology: cfg.experiment.topology.name(),
            seeds,
            features: if cfg!(feature = "parallel") {
                vec!["parallel"]
            } else {
                vec![]
            },
            assumptions: assumptions(cfg),
            provenance: provenance(cfg.experiment.mode),
            outputs,
            config: cfg.to_toml(),
        };
        let s = serde_json::to_string_pretty(&md)?;
        self.write("metadata.json", &s)
    }
}

#[derive(Serialize)]
struct AreaJson {
    topology: &'static str,
    policy: Policy,
    data_period_ps: u64,
    network: crate::topology::AreaManifest,
    total_without_retimers: u32,
    router_modules: Option<crate::router::netlist::JjReport>,
}

fn area_json(cfg: &ExperimentConfig) -> Result<String> {
    let epoch = cfg.epoch_config()?;
    let policy = cfg.policy()?;
    let net = cfg.experiment.topology.build(epoch)?;
    let area = net.area(policy);
    let router_modules = RouterConfig::new(policy, cfg.router.threshold, epoch)
        .ok()
        .and_then(|rc| build_router_netlist(&rc).ok())
        .and_then(|rn| rn.jj_report().ok());
    let j = AreaJson {
        topology: cfg.experiment.topology.name(),
        policy,
        data_period_ps: epoch.data_period.0,
        total_without_retimers: area.router_jj,
        network: area,
        router_modules,
    };
    Ok(serde_json::to_string_pretty(&j)?)
}

fn pulse_table(run: &StitchedRun, reference: &StitchedRun) -> (Table, usize) {
    let mut t = Table::new(&["epoch", "endpoint"], &["packet", "behavioral", "match"]);
    let mut mismatches = 0;
    for (k, (row, rrow)) in run.outputs.iter().zip(&reference.outputs).enumerate() {
        for (ep, (p, r)) in row.iter().zip(rrow).enumerate() {
            if p.is_none() && r.is_none() {
                continue;
            }
            let show = |x: &Option<Packet>| {
                x.as_ref()
                    .map_or_else(|| "-".to_string(), Packet::to_string)
            };
            let ok = p == r;
            mismatches += usize::from(!ok);
            t.rows.push(Row {
                key: vec![k.to_string(), (ep + 1).to_string()],
                values: vec![show(p), show(r), ok.to_string()],
            });
        }
    }
    (t, mismatches)
}

fn write_traces(em: &mut Emitter, run: &StitchedRun, fmt: TraceFormat) -> Result<()> {
    for (name, nl, tr) in &run.traces {
        let safe = name.replace('.', "_");
        match fmt {
            TraceFormat::None => {}
            TraceFormat::Vcd => em.write(&format!("trace_{safe}.vcd"), &trace_to_vcd(nl, tr))?,
            TraceFormat::Csv => em.write(&format!("trace_{safe}.csv"), &trace_to_csv(nl, tr))?,
        }
    }
    Ok(())
}

/// Cell-level run of a scenario or of seeded random traffic, checked
/// against the behavioral model.
pub fn pulse_run(cfg: &ExperimentConfig, seed: u64) -> Result<(StitchedRun, StitchedRun)> {
    let epoch = cfg.epoch_config()?;
    let net = cfg.experiment.topology.build(epoch)?;
    let policy = cfg.policy()?;
    let inputs = match cfg.experiment.scenario {
        Some(Scenario::Fig9) => fig9_inputs(),
        Some(Scenario::Fig11) => script_timeline(&fig11_script(), 4, 2),
        Some(Scenario::Fig14) => unreachable!("validated"),
        None => {
            let kind: PatternKind = cfg.traffic.pattern.parse()?;
            random_timeline(
                &net,
                kind,
                cfg.traffic.rate,
                seed,
                cfg.traffic.sample.min(10_000) as usize,
            )?
        }
    };
    let pulse = run_pulse_network(&net, policy, &inputs)?;
    let beh = run_behavioral_network(&net, policy, &inputs)?;
    Ok((pulse, beh))
}

/// Flit-level scripted scenario: one row per packet exit.
pub fn flit_scenario(cfg: &ExperimentConfig, scenario: Scenario, seed: u64) -> Result<Table> {
    let epoch = cfg.epoch_config()?;
    let net = cfg.experiment.topology.build(epoch)?;
    let (script, reinject, epochs) = match scenario {
        Scenario::Fig9 => (vec![(0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 0)], false, 2),
        Scenario::Fig11 => (fig11_script(), false, 2),
        Scenario::Fig14 => (fig14_script(), true, 8),
    };
    let opts = SimOptions {
        reinject,
        ..sim_options(cfg, seed)?
    };
    let mut sim = FlitSim::new(&net, Traffic::Script(script), opts)?;
    let mut t = Table::new(
        &["epoch", "src"],
        &["dst", "exit", "delivered", "hops", "deflections"],
    );
    for _ in 0..epochs {
        let k = sim.epoch();
        let ev = sim.step();
        let exits = ev
            .delivered
            .iter()
            .map(|r| (r.dst, r))
            .chain(ev.misdelivered.iter().map(|(ep, r)| (*ep, r)));
        for (exit, r) in exits {
            t.rows.push(Row {
                key: vec![k.to_string(), (r.src + 1).to_string()],
                values: vec![
                    (r.dst + 1).to_string(),
                    (exit + 1).to_string(),
                    (exit == r.dst).to_string(),
                    r.hops.to_string(),
                    r.deflections.to_string(),
                ],
            });
        }
    }
    t.sort();
    Ok(t)
}

/// `simulate`: one run of the configured experiment.
pub fn simulate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let seed = opts.seed.unwrap_or(cfg.traffic.seed);
    let mut em = Emitter {
        out: &opts.out,
        files: Vec::new(),
    };
    let mut outcome = RunOutcome::default();
    let table = match cfg.experiment.mode {
        Mode::Pulse => {
            let (pulse, beh) = pulse_run(cfg, seed)?;
            let (t, mismatches) = pulse_table(&pulse, &beh);
            outcome.mismatches = mismatches;
            write_traces(&mut em, &pulse, opts.trace.unwrap_or(cfg.output.trace))?;
            t
        }
        Mode::Flit => match cfg.experiment.scenario {
            Some(s) => flit_scenario(cfg, s, seed)?,
            None => {
                let mut t = Table::new(&FLIT_KEYS, &FLIT_VALUES);
                let kind: PatternKind = cfg.traffic.pattern.parse()?;
                t.rows.push(flit_point(
                    cfg,
                    kind,
                    cfg.epoch.data_period,
                    cfg.traffic.rate,
                    seed,
                )?);
                t
            }
        },
        Mode::Analytic => {
            let topo = perf_topology(cfg)?;
            let base = perf::baseline(&cfg.analytic.baseline)?;
            let mut t = Table::new(&ANALYTIC_KEYS, &ANALYTIC_VALUES);
            for case in cfg.cases()? {
                t.rows
                    .push(analytic_point(&topo, &base, case, cfg.epoch.data_period)?);
            }
            t
        }
    };
    outcome.rows = table.rows.len();
    em.write("results.csv", &table.to_csv()?)?;
    em.write("area.json", &area_json(cfg)?)?;
    em.metadata(cfg, "simulate", vec![seed])?;
    outcome.files = em.files;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
enum Point {
    Flit {
        kind: PatternKind,
        dp: u64,
        rate: f64,
        seed: u64,
    },
    Analytic {
        case: TrafficCase,
        dp: u64,
    },
}

/// `sweep`: the cross product of the configured axes, one row per point.
/// Rows already present in `results.csv` are kept and not recomputed.
pub fn sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let seeds = match opts.seed {
        Some(s) => vec![s],
        None => cfg.sweep_seeds(),
    };
    let dps = cfg.sweep_data_periods();
    let (mut table, points) = match cfg.experiment.mode {
        Mode::Flit => {
            let mut pts = Vec::new();
            for kind in cfg.patterns() {
                let kind = kind?;
                for &dp in &dps {
                    for &rate in &cfg.sweep_rates() {
                        for &seed in &seeds {
                            pts.push(Point::Flit {
                                kind,
                                dp,
                                rate,
                                seed,
                            });
                        }
                    }
                }
            }
            (Table::new(&FLIT_KEYS, &FLIT_VALUES), pts)
        }
        Mode::Analytic => {
            let mut pts = Vec::new();
            for case in cfg.cases()? {
                for &dp in &dps {
                    pts.push(Point::Analytic { case, dp });
                }
            }
            (Table::new(&ANALYTIC_KEYS, &ANALYTIC_VALUES), pts)
        }
        Mode::Pulse => {
            return Err(Error::Config {
                line: 0,
                msg: "sweeps run in flit or analytic mode".into(),
            });
        }
    };
    let topo = match cfg.experiment.mode {
        Mode::Analytic => Some(perf_topology(cfg)?),
        _ => None,
    };
    let base = perf::baseline(&cfg.analytic.baseline)?;
    let key_of = |p: &Point| -> Vec<String> {
        match p {
            Point::Flit {
                kind,
                dp,
                rate,
                seed,
            } => {
                vec![
                    cfg.experiment.topology.name().into(),
                    kind.name().into(),
                    dp.to_string(),
                    f6(*rate),
                    seed.to_string(),
                ]
            }
            Point::Analytic { case, dp } => {
                vec![dp.to_string(), case.name().into(), base.name.clone()]
            }
        }
    };
    let results_path = opts.out.join("results.csv");
    let existing = table.read_existing(&results_path)?;
    let done: std::collections::BTreeSet<Vec<String>> =
        existing.iter().map(|r| r.key.clone()).collect();
    let todo: Vec<Point> = points
        .iter()
        .filter(|p| !done.contains(&key_of(p)))
        .cloned()
        .collect();
    let wanted: std::collections::BTreeSet<Vec<String>> = points.iter().map(key_of).collect();
    let resumed = points.len() - todo.len();

    let computed = map_points(&todo, opts.execution, |p| match p {
        Point::Flit {
            kind,
            dp,
            rate,
            seed,
        } => flit_point(cfg, *kind, *dp, *rate, *seed),
        Point::Analytic { case, dp } => {
            analytic_point(topo.as_ref().expect("analytic"), &base, *case, *dp)
        }
    });
    table.rows = existing
        .into_iter()
        .filter(|r| wanted.contains(&r.key))
        .collect();
    for r in computed {
        table.rows.push(r?);
    }
    table.sort();

    let mut em = Emitter {
        out: &opts.out,
        files: Vec::new(),
    };
    em.write("results.csv", &table.to_csv()?)?;
    em.write("area.json", &area_json(cfg)?)?;
    em.metadata(cfg, "sweep", seeds)?;
    Ok(RunOutcome {
        files: em.files,
        rows: table.rows.len(),
        resumed,
        mismatches: 0,
    })
}

/// `analyze`: area manifest, router graph and crossover table.
pub fn analyze(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let epoch = cfg.epoch_config()?;
    let net = cfg.experiment.topology.build(epoch)?;
    let mut em = Emitter {
        out: &opts.out,
        files: Vec::new(),
    };
    em.write("area.json", &area_json(cfg)?)?;
    em.write("topology.dot", &net.to_dot())?;
    let mut rows = 0;
    if let Ok(topo) = perf_topology(cfg) {
        let mut t = Table::new(
            &["baseline", "case"],
            &["crossover_ps", "baseline_assumption"],
        );
        for base in perf::baseline_catalog() {
            for case in cfg.cases()? {
                let x = match perf::crossover(
                    &topo,
                    &base,
                    case,
                    perf::GRID_STEP_PS,
                    cfg.analytic.search_max,
                ) {
                    Ok(dp) => dp.to_string(),
                    Err(Error::NoCrossover { .. }) => "none".into(),
                    Err(e) => return Err(e),
                };
                t.rows.push(Row {
                    key: vec![base.name.clone(), case.name().into()],
                    values: vec![x, base.assumption()],
                });
            }
        }
        rows = t.rows.len();
        em.write("crossover.csv", &t.to_csv()?)?;
        let base = perf::baseline(&cfg.analytic.baseline)?;
        let curve = perf::curve(
            &topo,
            &base,
            perf::GRID_STEP_PS,
            cfg.epoch.data_period.max(perf::GRID_STEP_PS) * 8,
        )?;
        em.write("curve.csv", &perf::curve_csv(&curve, &base))?;
    }
    em.metadata(cfg, "analyze", vec![cfg.traffic.seed])?;
    Ok(RunOutcome {
        files: em.files,
        rows,
        resumed: 0,
        mismatches: 0,
    })
}

#[derive(Serialize)]
struct ValidationJson {
    policy: Policy,
    threshold: u32,
    destinations: u32,
    data_period_ps: u64,
    sequences: usize,
    epochs: usize,
    mismatches: usize,
    first_mismatch: Option<String>,
}

/// `validate`: cell-level router against the behavioral model, exhaustive
/// single epochs plus a seeded random sequence. Mismatches are an error.
pub fn validate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let seed = opts.seed.unwrap_or(cfg.traffic.seed);
    let d = cfg.epoch.destinations.unwrap_or(2).max(2);
    let epoch = EpochConfig::new(d, cfg.epoch.data_period)?;
    let rc = RouterConfig::new(cfg.policy()?, cfg.router.threshold, epoch)?;
    let mut seqs = exhaustive_single_epoch(&rc);
    seqs.push(random_epochs(
        &rc,
        cfg.traffic.sample.min(5_000) as usize,
        seed,
    ));
    let report = crossvalidate(&rc, &seqs)?;
    let j = ValidationJson {
        policy: rc.policy,
        threshold: rc.thr_slot,
        destinations: d,
        data_period_ps: epoch.data_period.0,
        sequences: report.sequences,
        epochs: report.epochs,
        mismatches: report.mismatches.len(),
        first_mismatch: report.mismatches.first().map(|m| format!("{m:?}")),
    };
    let mut em = Emitter {
        out: &opts.out,
        files: Vec::new(),
    };
    em.write("validation.json", &serde_json::to_string_pretty(&j)?)?;
    em.metadata(cfg, "validate", vec![seed])?;
    if !report.passed() {
        return Err(Error::Mismatch(report.mismatches.len()));
    }
    Ok(RunOutcome {
        files: em.files,
        rows: report.epochs,
        resumed: 0,
        mismatches: 0,
    })
}
