use proptest::prelude::*;

use pastnoc::cells::{CellInstance, CellKind};
use pastnoc::config::ExperimentConfig;
use pastnoc::engine::SimTime;
use pastnoc::flitsim::{make_pattern, table_pattern, FlitSim, PatternKind, SimOptions, Traffic};
use pastnoc::packet::EpochConfig;
use pastnoc::perf::{pastnoc_goodput, PerfTopology, TrafficCase};
use pastnoc::router::Policy;
use pastnoc::topology::{build_butterfly, build_mesh, router_pd};

fn pattern_kind() -> impl Strategy<Value = PatternKind> {
    prop::sample::select(PatternKind::ALL.to_vec())
}

fn policy() -> impl Strategy<Value = Policy> {
    prop::sample::select(vec![
        Policy::FixedPriority,
        Policy::RoundRobin,
        Policy::RandomizedRR,
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cell_outputs_never_precede_inputs(
        kind in prop::sample::select(CellKind::ALL.to_vec()),
        pulses in prop::collection::vec((0u8..3, 0u64..50), 1..12),
    ) {
        let mut cell = CellInstance::new(kind);
        let mut t = 0;
        for (p, gap) in pulses {
            t += gap;
            for (o, at) in cell.evaluate(p % kind.num_inputs(), SimTime(t)).unwrap() {
                prop_assert!(o < kind.num_outputs());
                prop_assert!(at >= SimTime(t));
            }
        }
    }

    #[test]
    fn butterfly_has_one_uncontended_path(log_k in 1u32..6, src in 0usize..32, dst in 0usize..32) {
        let k = 1usize << log_k;
        let (src, dst) = (src % k, dst % k);
        let e = EpochConfig::new(k as u32, 300).unwrap();
        let net = build_butterfly(k, e, router_pd(&e)).unwrap();
        let mut sim = FlitSim::new(&net, Traffic::Script(vec![(0, src, dst)]), SimOptions::default()).unwrap();
        let ev = sim.step();
        prop_assert_eq!(ev.delivered.len(), 1);
        prop_assert_eq!(ev.delivered[0].hops, log_k);
        prop_assert_eq!(ev.delivered[0].deflections, 0);
    }

    #[test]
    fn flit_sim_conserves_packets(
        kind in pattern_kind(),
        rate in 0.0f64..=1.0,
        seed in any::<u64>(),
        policy in policy(),
        mesh in any::<bool>(),
        reinject in any::<bool>(),
    ) {
        let e = EpochConfig::new(8, 300).unwrap();
        let net = if mesh { build_mesh(2, 2, 2, e, router_pd(&e)) } else { build_butterfly(8, e, router_pd(&e)) }.unwrap();
        let p = make_pattern(kind, 8, rate, seed).unwrap();
        let o = SimOptions { policy, seed, reinject, ..SimOptions::default() };
        let mut sim = FlitSim::new(&net, Traffic::Pattern(p), o).unwrap();
        let mut ok = true;
        let m = sim.run_measure(20, 300, |s| ok &= s.conserved());
        prop_assert!(ok);
        prop_assert!(m.throughput_per_port <= 1.0 + 1e-9);
        prop_assert_eq!(sim.created(), sim.delivered() + sim.discarded() + sim.queued() + sim.in_flight());
    }

    #[test]
    fn admissibility_matches_destination_load(table in prop::collection::vec(0usize..4, 4), rate in 0.05f64..=1.0) {
        let mut counts = [0usize; 4];
        for &d in &table {
            counts[d] += 1;
        }
        let worst = *counts.iter().max().unwrap() as f64 * rate;
        prop_assert_eq!(table_pattern(table, rate, 1).is_ok(), worst <= 1.0 + 1e-9);
    }

    // Below ten slots the fixed control period dominates and doubling the
    // data period can more than double goodput.
    #[test]
    fn goodput_rises_with_diminishing_returns(steps in 10u64..200, topo in 0usize..2, case in 0usize..3) {
        let topo = [PerfTopology::Router2, PerfTopology::Butterfly4][topo];
        let case = TrafficCase::ALL[case];
        let dp = steps * 15;
        let a = pastnoc_goodput(dp, &topo, case).unwrap().gbps_per_port;
        let b = pastnoc_goodput(2 * dp, &topo, case).unwrap().gbps_per_port;
        prop_assert!(b > a);
        prop_assert!(b < 2.0 * a);
    }

    #[test]
    fn config_round_trips(rate in 0.0f64..=1.0, seed in 0..i64::MAX as u64, steps in 1u64..100, mesh in any::<bool>()) {
        let topology = if mesh { "mesh8" } else { "butterfly4" };
        let text = format!(
            "[experiment]\nmode = \"flit\"\ntopology = \"{topology}\"\n[epoch]\ndata_period = {}\n[traffic]\nrate = {rate}\nseed = {seed}\n",
            steps * 15
        );
        let cfg = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }
}
