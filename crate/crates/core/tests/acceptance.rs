//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the binary exits non-zero if any criterion fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pastnoc::cells::{CellInstance, CellKind};
use pastnoc::config::ExperimentConfig;
use pastnoc::engine::SimTime;
use pastnoc::flitsim::{
    livelock_probe, make_pattern, FlitSim, PatternKind, SimOptions, StepEvents, Traffic,
};
use pastnoc::packet::{expected_pulses_asymptotic, expected_pulses_exact, EpochConfig};
use pastnoc::perf::{self, PerfTopology, TrafficCase};
use pastnoc::router::crossval::{crossvalidate, exhaustive_single_epoch, random_epochs};
use pastnoc::router::netlist::build_router_netlist;
use pastnoc::router::{Policy, RouterConfig};
use pastnoc::runner::{fig11_script, fig14_script, fig9_inputs, pulse_run};
use pastnoc::topology::{build_bounce_pair, build_butterfly, build_mesh, router_pd};

const PULSES_TOL: f64 = 1e-3;
const MONTE_CARLO_TOL: f64 = 0.05;
const MONTE_CARLO_TRIALS: u32 = 1_000_000;
const DELAY_TOL_PS: u64 = 1;
const DEFLECTION_TOL: f64 = 0.02;
const RANDOM_CROSSVAL_EPOCHS: usize = 1000;
const LIVELOCK_EPOCHS: u64 = 10_000;
const LIVELOCK_SEEDS: u64 = 100;
const FACTOR: f64 = 5.0;
const STUDY_EPOCHS: u64 = 100_000;
const STUDY_WARMUP: u64 = 1_000;
const STUDY_BUDGET_SECS: u64 = 600;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c1_expected_pulses() -> Check {
    let asym = expected_pulses_asymptotic(64);
    let exact = expected_pulses_exact(64);
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let mut total = 0u64;
    for _ in 0..MONTE_CARLO_TRIALS {
        let mut hit = 0u64;
        for _ in 0..64 {
            hit |= 1 << rng.gen_range(0..64);
        }
        total += u64::from(hit.count_ones());
    }
    let mc = total as f64 / f64::from(MONTE_CARLO_TRIALS);
    let msg = format!("asymptotic {asym:.4}, exact {exact:.4}, monte carlo {mc:.4}");
    ensure(
        (asym - 40.455).abs() < PULSES_TOL && (exact - mc).abs() < MONTE_CARLO_TOL,
        msg,
    )
}

/// Reference cell semantics over a whole stimulus, written independently of
/// the event-driven cell model. Returns `(output port, input index)` pairs.
fn reference(kind: CellKind, stim: &[(u8, u64)]) -> Vec<(u8, usize)> {
    let mut out = Vec::new();
    let mut state = [false; 3];
    let mut toggle = 0u8;
    for (i, &(p, t)) in stim.iter().enumerate() {
        let p = usize::from(p);
        match kind {
            CellKind::Splitter => out.extend([(0, i), (1, i)]),
            CellKind::Merger => {
                if i == 0 || stim[i - 1].1 != t {
                    out.push((0, i));
                }
            }
            CellKind::LastArrival => {
                state[p] = true;
                if state[0] && state[1] {
                    state = [false; 3];
                    out.push((0, i));
                }
            }
            CellKind::Inhibit => match p {
                1 => state[0] = true,
                _ if state[0] => state[0] = false,
                _ => out.push((0, i)),
            },
            CellKind::Ndro => match p {
                0 if state[0] => out.push((0, i)),
                1 => state[0] = true,
                2 => state[0] = false,
                _ => {}
            },
            CellKind::AndClocked => {
                if p == 2 {
                    if state[0] && state[1] {
                        out.push((0, i));
                    }
                    state = [false; 3];
                } else {
                    state[p] = true;
                }
            }
            CellKind::Tff => {
                out.push((toggle, i));
                toggle ^= 1;
            }
            CellKind::Dff | CellKind::Dff2 => {
                if p == 0 {
                    state[0] = true;
                } else if state[0] {
                    state[0] = false;
                    out.push((p as u8 - 1, i));
                }
            }
            CellKind::ShiftRegister => out.push((0, i)),
        }
    }
    out
}

fn stimuli(ports: u8) -> Vec<Vec<(u8, u64)>> {
    let mut all = Vec::new();
    for len in 2..=3u32 {
        let combos = u32::from(ports).pow(len);
        for code in 0..combos {
            for gaps in 0..(1u32 << (len - 1)) {
                let (mut c, mut t) = (code, 0u64);
                let mut s = Vec::new();
                for k in 0..len {
                    if k > 0 && gaps >> (k - 1) & 1 == 1 {
                        t += 40;
                    }
                    s.push(((c % u32::from(ports)) as u8, t));
                    c /= u32::from(ports);
                }
                all.push(s);
            }
        }
    }
    all
}

fn c2_truth_tables() -> Check {
    let mut cases = 0;
    for kind in CellKind::ALL {
        for stim in stimuli(kind.num_inputs()) {
            let mut cell = CellInstance::new(kind);
            let mut got = Vec::new();
            for (i, &(p, t)) in stim.iter().enumerate() {
                for (o, at) in cell.evaluate(p, SimTime(t)).map_err(|e| e.to_string())? {
                    if at < SimTime(t) + kind.default_delay() {
                        return Err(format!(
                            "{} output before its delay on {stim:?}",
                            kind.name()
                        ));
                    }
                    got.push((o, i));
                }
            }
            let want = reference(kind, &stim);
            if got != want {
                return Err(format!(
                    "{} on {stim:?}: got {got:?}, want {want:?}",
                    kind.name()
                ));
            }
            cases += 1;
        }
    }
    Ok(format!(
        "{cases} stimuli over {} cells",
        CellKind::ALL.len()
    ))
}

fn router_cfg(policy: Policy) -> RouterConfig {
    RouterConfig::new(policy, 1, EpochConfig::new(2, 300).unwrap()).unwrap()
}

fn c3_router_area() -> Check {
    let rr = build_router_netlist(&router_cfg(Policy::RoundRobin)).map_err(|e| e.to_string())?;
    let rnd = build_router_netlist(&router_cfg(Policy::RandomizedRR)).map_err(|e| e.to_string())?;
    let (a, b) = (
        rr.jj_report().unwrap().total(),
        rnd.jj_report().unwrap().total(),
    );
    let d = rr.propagation_delay().0;
    ensure(
        a == 481 && b == 505 && d.abs_diff(213) <= DELAY_TOL_PS,
        format!("{a} JJ, {d} ps, randomized {b} JJ"),
    )
}

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).unwrap()
}

fn c4_fig9() -> Check {
    let c = cfg("[experiment]\nmode = \"pulse\"\ntopology = \"router2\"\nscenario = \"fig9\"\n");
    let (pulse, beh) = pulse_run(&c, 1).map_err(|e| e.to_string())?;
    let [a, b] = [fig9_inputs()[0][0].clone(), fig9_inputs()[0][1].clone()];
    let (_, nl, trace) = &pulse.traces[0];
    let count = |name: &str| {
        trace
            .iter()
            .filter(|e| nl.wire_name(e.wire) == name)
            .count()
    };
    let counts = (count("S1"), count("S2"), count("C"));
    let ok = pulse.outputs == vec![vec![a.clone(), b.clone()], vec![b, a]]
        && pulse.outputs == beh.outputs;
    ensure(
        ok && counts == (1, 1, 1),
        format!("winners A then B, S1/S2/C pulses {counts:?}"),
    )
}

fn outcome(ev: &StepEvents) -> Vec<(usize, usize)> {
    let mut v: Vec<(usize, usize)> = ev.delivered.iter().map(|r| (r.src, r.dst)).collect();
    v.extend(ev.misdelivered.iter().map(|(ep, r)| (r.src, *ep)));
    v.sort_unstable();
    v
}

fn c5_fig11() -> Check {
    let c =
        cfg("[experiment]\nmode = \"pulse\"\ntopology = \"butterfly4\"\nscenario = \"fig11\"\n");
    let (pulse, beh) = pulse_run(&c, 1).map_err(|e| e.to_string())?;
    let exits = |k: usize| -> Vec<Option<u32>> {
        pulse.outputs[k]
            .iter()
            .map(|p| {
                p.as_ref()
                    .map(|p| p.data_slots.iter().next().copied().unwrap())
            })
            .collect()
    };
    let pulse_ok = pulse.outputs == beh.outputs
        && exits(0) == vec![Some(3), Some(1), None, Some(2)]
        && exits(1) == vec![Some(1), Some(3), None, Some(2)];
    let e = EpochConfig::new(4, 300).unwrap();
    let net = build_butterfly(4, e, router_pd(&e)).unwrap();
    let o = SimOptions {
        reinject: false,
        ..SimOptions::default()
    };
    let mut sim =
        FlitSim::new(&net, Traffic::Script(fig11_script()), o).map_err(|e| e.to_string())?;
    let flit = [outcome(&sim.step()), outcome(&sim.step())];
    let flit_ok = flit == [vec![(0, 1), (1, 3), (2, 0)], vec![(0, 0), (1, 3), (2, 1)]];
    ensure(
        pulse_ok && flit_ok,
        format!("pulse {pulse_ok}, flit (src, exit) {flit:?}"),
    )
}

fn c6_fig14() -> Check {
    let e = EpochConfig::new(8, 300).unwrap();
    let net = build_mesh(2, 2, 2, e, router_pd(&e)).unwrap();
    let mut sim = FlitSim::new(&net, Traffic::Script(fig14_script()), SimOptions::default())
        .map_err(|e| e.to_string())?;
    let mut seen = Vec::new();
    for _ in 0..8 {
        seen.extend(
            sim.step()
                .delivered
                .into_iter()
                .filter(|r| r.dst == 2)
                .map(|r| (r.src + 1, r.deliver_epoch.unwrap())),
        );
    }
    ensure(
        seen == vec![(3, 0), (2, 2)],
        format!("destination 3 receives (source, epoch) {seen:?}"),
    )
}

fn c7_crossval() -> Check {
    let mut epochs = 0;
    for policy in [
        Policy::FixedPriority,
        Policy::RoundRobin,
        Policy::RandomizedRR,
    ] {
        let c = router_cfg(policy);
        let mut seqs = exhaustive_single_epoch(&c);
        seqs.push(random_epochs(&c, RANDOM_CROSSVAL_EPOCHS, 7));
        let r = crossvalidate(&c, &seqs).map_err(|e| e.to_string())?;
        if !r.passed() {
            return Err(format!("{policy:?}: {} mismatches", r.mismatches.len()));
        }
        epochs += r.epochs;
    }
    Ok(format!("{epochs} epochs, 0 mismatches"))
}

fn c8_deflection() -> Check {
    let e = EpochConfig::new(2, 300).unwrap();
    let net = build_butterfly(2, e, router_pd(&e)).unwrap();
    let p = make_pattern(PatternKind::UniformRandom, 2, 1.0, 3).unwrap();
    let m = FlitSim::new(
        &net,
        Traffic::Pattern(p),
        SimOptions {
            seed: 3,
            ..SimOptions::default()
        },
    )
    .unwrap()
    .measure(1000, 100_000);
    let e = EpochConfig::new(4, 300).unwrap();
    let net = build_butterfly(4, e, router_pd(&e)).unwrap();
    let p = make_pattern(PatternKind::WorstCase, 4, 1.0, 5).unwrap();
    let o = SimOptions {
        seed: 5,
        reinject: false,
        ..SimOptions::default()
    };
    let w = FlitSim::new(&net, Traffic::Pattern(p), o)
        .unwrap()
        .measure(1000, 100_000);
    let (h0, h1) = (w.per_hop_deflection[0], w.per_hop_deflection[1]);
    let ok = (m.deflection_prob - 0.25).abs() < DEFLECTION_TOL
        && (h0 - 0.5).abs() < DEFLECTION_TOL
        && (h1 - 0.25).abs() < DEFLECTION_TOL;
    ensure(
        ok,
        format!(
            "uniform 2x2 {:.4}, worst butterfly {h0:.4} then {h1:.4}",
            m.deflection_prob
        ),
    )
}

fn c9_livelock() -> Check {
    let e = EpochConfig::new(3, 0).unwrap();
    let net = build_bounce_pair(e).unwrap();
    let rr = livelock_probe(
        &net,
        SimOptions {
            policy: Policy::RoundRobin,
            ..SimOptions::default()
        },
        LIVELOCK_EPOCHS,
    )
    .map_err(|e| e.to_string())?;
    let mut worst = 0;
    let mut delivered = 0;
    for seed in 0..LIVELOCK_SEEDS {
        let o = SimOptions {
            policy: Policy::RandomizedRR,
            rand_q: 0.25,
            seed,
            ..SimOptions::default()
        };
        if let Some(k) = livelock_probe(&net, o, LIVELOCK_EPOCHS)
            .unwrap()
            .delivered_epoch
        {
            delivered += 1;
            worst = worst.max(k);
        }
    }
    let msg = format!(
        "round robin undelivered after {LIVELOCK_EPOCHS} epochs: {}, randomized delivered {delivered}/{LIVELOCK_SEEDS} (latest epoch {worst})",
        rr.delivered_epoch.is_none()
    );
    ensure(
        rr.delivered_epoch.is_none() && delivered == LIVELOCK_SEEDS,
        msg,
    )
}

fn c10_curves() -> Check {
    const LO: u64 = 15;
    const HI: u64 = 60_000;
    // Saturated throughput of the 8-endpoint mesh from a short flit-level run.
    let fr = pastnoc::runner::measure_mesh_fractions(300, Policy::RoundRobin, 1, 200, 5_000)
        .map_err(|e| e.to_string())?;
    let mesh = PerfTopology::Mesh8(fr);
    let pairs: [(PerfTopology, &str, [Option<u64>; 3]); 6] = [
        (PerfTopology::Router2, "banyan2x2", [None, Some(300), None]),
        (
            PerfTopology::Butterfly4,
            "banyan4x4",
            [Some(450), Some(930), Some(1890)],
        ),
        (PerfTopology::Butterfly4, "crossbar4x4", [None; 3]),
        (
            PerfTopology::Butterfly4,
            "srnoc",
            [None, Some(960), Some(465)],
        ),
        (mesh, "banyan8x8", [Some(255), Some(255), Some(360)]),
        (mesh, "crossbar8x8", [None; 3]),
    ];
    let mut lines = Vec::new();
    let mut exceeded = false;
    for (topo, name, reference) in &pairs {
        let base = perf::baseline(name).map_err(|e| e.to_string())?;
        let grid: Vec<u64> = perf::grid(LO, HI).collect();
        let points: Vec<[perf::CurvePoint; 3]> = grid
            .iter()
            .map(|&dp| TrafficCase::ALL.map(|c| perf::pastnoc_goodput(dp, topo, c).unwrap()))
            .collect();
        let goodput: Vec<[f64; 3]> = points.iter().map(|p| p.map(|q| q.gbps_per_port)).collect();
        let series: Vec<[f64; 3]> = points
            .iter()
            .map(|p| p.map(|q| q.gbps_per_port_per_jj))
            .collect();
        for (k, w) in goodput.windows(2).enumerate() {
            for (c, (b, a)) in w[0].iter().zip(&w[1]).enumerate() {
                if a <= b {
                    return Err(format!(
                        "{name}: curve {c} not increasing at {} ps",
                        grid[k + 1]
                    ));
                }
            }
        }
        if let Some(v) = goodput.iter().find(|v| !(v[0] >= v[1] && v[1] >= v[2])) {
            return Err(format!("{name}: case order violated {v:?}"));
        }
        let mut ours = Vec::new();
        for (c, case) in TrafficCase::ALL.into_iter().enumerate() {
            let b = base.gbps_per_port_per_jj(case);
            let flips = series
                .windows(2)
                .filter(|w| (w[0][c] >= b) != (w[1][c] >= b))
                .count();
            let x = perf::crossover(topo, &base, case, LO, HI)
                .map_err(|e| format!("{name} {case:?}: {e}"))?;
            if flips > 1 {
                return Err(format!("{name} {case:?}: {flips} crossings"));
            }
            ours.push(x);
            exceeded |= perf::period_for_factor(topo, &base, case, FACTOR, LO, HI).is_ok();
        }
        let fmt = |v: Option<u64>| v.map_or("-".to_string(), |x| x.to_string());
        lines.push(format!(
            "{name} ours {ours:?} reference [{}, {}, {}]",
            fmt(reference[0]),
            fmt(reference[1]),
            fmt(reference[2])
        ));
    }
    for l in &lines {
        println!("      crossover (best, uniform, worst) ps: {l}");
    }
    ensure(
        exceeded,
        format!(
            "{} baselines, unique crossovers, {FACTOR}x reached: {exceeded}",
            lines.len()
        ),
    )
}

fn c11_study() -> Check {
    let start = Instant::now();
    let e = EpochConfig::new(32, 300).unwrap();
    let pd = router_pd(&e);
    let nets = [
        ("cmesh32", build_mesh(4, 4, 2, e, pd).unwrap()),
        ("bfly32", build_butterfly(32, e, pd).unwrap()),
    ];
    let kinds = [
        PatternKind::UniformRandom,
        PatternKind::Tornado,
        PatternKind::BitComp,
        PatternKind::Shuffle,
        PatternKind::Transpose,
    ];
    let mut summary = Vec::new();
    for (name, net) in &nets {
        for (i, &kind) in kinds.iter().enumerate() {
            let seed = 100 + i as u64;
            let p = make_pattern(kind, 32, 1.0, seed).map_err(|e| e.to_string())?;
            let mut sim = FlitSim::new(
                net,
                Traffic::Pattern(p),
                SimOptions {
                    seed,
                    ..SimOptions::default()
                },
            )
            .unwrap();
            let mut broken = None;
            let m = sim.run_measure(STUDY_WARMUP, STUDY_EPOCHS - STUDY_WARMUP, |s| {
                if broken.is_none() && !s.conserved() {
                    broken = Some(s.epoch());
                }
            });
            if let Some(k) = broken {
                return Err(format!(
                    "{name} {}: conservation broken at epoch {k}",
                    kind.name()
                ));
            }
            if m.delivered == 0 || m.throughput_per_port > m.offered_per_port + 1e-9 {
                return Err(format!(
                    "{name} {}: throughput {}",
                    kind.name(),
                    m.throughput_per_port
                ));
            }
            summary.push(format!(
                "{name}/{}={:.3}",
                kind.name(),
                m.throughput_per_port
            ));
        }
    }
    let secs = start.elapsed().as_secs();
    println!(
        "      saturation throughput per port: {}",
        summary.join(" ")
    );
    ensure(
        secs < STUDY_BUDGET_SECS,
        format!("10 points x {STUDY_EPOCHS} epochs conserved, {secs} s"),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("expected pulse count", c1_expected_pulses),
        ("cell truth tables", c2_truth_tables),
        ("router area and delay", c3_router_area),
        ("two-input conflict scenario", c4_fig9),
        ("butterfly conflict scenario", c5_fig11),
        ("mesh path-length scenario", c6_fig14),
        ("netlist and behavioral equivalence", c7_crossval),
        ("deflection statistics", c8_deflection),
        ("livelock", c9_livelock),
        ("goodput curves and crossovers", c10_curves),
        ("32-endpoint study", c11_study),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|s| name.contains(s.as_str())) {
            continue;
        }
        let t = Instant::now();
        let r = f();
        let ms = t.elapsed().as_millis();
        match r {
            Ok(m) => println!("criterion {:>2} PASS {name}: {m} ({ms} ms)", i + 1),
            Err(m) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {m} ({ms} ms)", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
