//! Closed-form throughput per port per JJ for PaST-NoC networks and binary
//! baselines, plus crossover search over the data period.

use serde::Serialize;

use crate::engine::SimTime;
use crate::error::{Error, Result};
use crate::packet::{bits_per_packet, EpochConfig};
use crate::router::Policy;
use crate::topology::{build_mesh, router_pd, ROUTER_JJ_ROUND_ROBIN};

/// Grid step for data-period sweeps.
pub const GRID_STEP_PS: u64 = 15;

/// Control period for `d` destinations: one 60 ps slot per destination plus
/// the reserved slot.
pub fn scale_control_period(d: u32) -> Result<SimTime> {
    if d < 2 {
        return Err(Error::InvalidEpochConfig(format!(
            "{d} destinations, need at least 2"
        )));
    }
    Ok(SimTime(u64::from(d + 1) * 60))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TrafficCase {
    Best,
    Uniform,
    Worst,
}

impl TrafficCase {
    pub const ALL: [TrafficCase; 3] = [TrafficCase::Best, TrafficCase::Uniform, TrafficCase::Worst];

    pub fn name(self) -> &'static str {
        match self {
            TrafficCase::Best => "best",
            TrafficCase::Uniform => "uniform",
            TrafficCase::Worst => "worst",
        }
    }
}

/// Measured worst-endpoint fractions used where no closed form exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseFractions {
    pub best: f64,
    pub uniform: f64,
    pub worst: f64,
}

impl CaseFractions {
    pub fn get(&self, case: TrafficCase) -> f64 {
        match case {
            TrafficCase::Best => self.best,
            TrafficCase::Uniform => self.uniform,
            TrafficCase::Worst => self.worst,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PerfTopology {
    Router2,
    Butterfly4,
    Mesh8(CaseFractions),
}

impl PerfTopology {
    pub fn num_destinations(&self) -> u32 {
        match self {
            PerfTopology::Router2 => 2,
            PerfTopology::Butterfly4 => 4,
            PerfTopology::Mesh8(_) => 8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PerfTopology::Router2 => "router2",
            PerfTopology::Butterfly4 => "butterfly4",
            PerfTopology::Mesh8(_) => "mesh8",
        }
    }

    pub fn jj_count(&self, cfg: &EpochConfig) -> Result<u32> {
        Ok(match self {
            PerfTopology::Router2 => ROUTER_JJ_ROUND_ROBIN,
            PerfTopology::Butterfly4 => 4 * ROUTER_JJ_ROUND_ROBIN,
            PerfTopology::Mesh8(_) => {
                build_mesh(2, 2, 2, *cfg, router_pd(cfg))?
                    .area(Policy::RoundRobin)
                    .total_jj
            }
        })
    }

    /// Deflection probability at each element on the way to the destination.
    pub fn per_hop_deflection(&self, case: TrafficCase) -> Option<&'static [f64]> {
        Some(match (self, case) {
            (PerfTopology::Mesh8(_), _) => return None,
            (_, TrafficCase::Best) => &[],
            (PerfTopology::Router2, TrafficCase::Uniform) => &[0.25],
            (PerfTopology::Router2, TrafficCase::Worst) => &[0.5],
            (PerfTopology::Butterfly4, TrafficCase::Uniform) => &[0.25, 0.25],
            (PerfTopology::Butterfly4, TrafficCase::Worst) => &[0.5, 0.25],
        })
    }

    /// Fraction of injection slots that end in a correct delivery.
    pub fn delivery_efficiency(&self, case: TrafficCase) -> f64 {
        match (self, self.per_hop_deflection(case)) {
            (PerfTopology::Mesh8(f), _) => f.get(case),
            (_, Some(p)) => reinjection_fixed_point(p, 1.0).delivered,
            (_, None) => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowBalance {
    /// Fraction of epochs in which an endpoint injects anything.
    pub occupancy: f64,
    /// Re-injected packets per epoch per endpoint.
    pub reinjected: f64,
    /// Correctly delivered packets per epoch per endpoint.
    pub delivered: f64,
    pub iterations: u32,
}

/// Steady state of an endpoint that re-injects misdelivered packets ahead
/// of fresh ones offered at rate `offered`. Deflection probabilities scale
/// with occupancy, since a conflict needs a second packet.
pub fn reinjection_fixed_point(per_hop: &[f64], offered: f64) -> FlowBalance {
    let success = |rho: f64| per_hop.iter().map(|p| 1.0 - p * rho).product::<f64>();
    let mut rho = offered.clamp(0.0, 1.0);
    let mut iterations = 0;
    for i in 1..=10_000 {
        iterations = i;
        let next = (offered + rho * (1.0 - success(rho))).min(1.0);
        let done = (next - rho).abs() < 1e-13;
        rho = next;
        if done {
            break;
        }
    }
    let s = success(rho);
    FlowBalance {
        occupancy: rho,
        reinjected: rho * (1.0 - s),
        delivered: rho * s,
        iterations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub data_period_ps: u64,
    pub bits_per_packet: f64,
    pub epoch_ps: u64,
    pub efficiency: f64,
    pub jj: u32,
    pub gbps_per_port: f64,
    pub gbps_per_port_per_jj: f64,
}

/// Correctly delivered payload per port per JJ. Periods too short to hold
/// two data slots carry no payload.
pub fn pastnoc_goodput(
    data_period_ps: u64,
    topo: &PerfTopology,
    case: TrafficCase,
) -> Result<CurvePoint> {
    let cfg = EpochConfig::new(topo.num_destinations(), data_period_ps)?;
    let bits = if cfg.n_data_slots() < 2 {
        0.0
    } else {
        bits_per_packet(&cfg)?
    };
    let epoch = cfg.epoch().0;
    let efficiency = topo.delivery_efficiency(case);
    let jj = topo.jj_count(&cfg)?;
    // One bit per picosecond is 1000 Gb/s.
    let gbps = bits / epoch as f64 * 1000.0 * efficiency;
    Ok(CurvePoint {
        data_period_ps,
        bits_per_packet: bits,
        epoch_ps: epoch,
        efficiency,
        jj,
        gbps_per_port: gbps,
        gbps_per_port_per_jj: gbps / f64::from(jj),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineSpec {
    pub name: String,
    pub jj_count: u32,
    pub clock_ghz: f64,
    /// Fraction of the port bandwidth usable in each traffic case.
    pub case_share: [f64; 3],
}

impl BaselineSpec {
    fn binary(name: &str, jj_count: u32) -> Self {
        BaselineSpec {
            name: name.into(),
            jj_count,
            clock_ghz: 40.0,
            case_share: [1.0; 3],
        }
    }

    /// Throughput per port: one bit per clock cycle, scaled by the case share.
    pub fn gbps_per_port(&self, case: TrafficCase) -> f64 {
        let idx = TrafficCase::ALL
            .iter()
            .position(|&c| c == case)
            .expect("case");
        self.clock_ghz * self.case_share[idx]
    }

    pub fn gbps_per_port_per_jj(&self, case: TrafficCase) -> f64 {
        self.gbps_per_port(case) / f64::from(self.jj_count)
    }

    pub fn assumption(&self) -> String {
        format!(
            "{}: {} JJ, {} GHz x 1 bit/cycle/port, case shares {:?}",
            self.name, self.jj_count, self.clock_ghz, self.case_share
        )
    }
}

pub const BANYAN_2X2_JJ: u32 = 1184;

pub fn baseline_catalog() -> Vec<BaselineSpec> {
    vec![
        BaselineSpec::binary("banyan2x2", BANYAN_2X2_JJ),
        BaselineSpec::binary("banyan4x4", 4300),
        BaselineSpec::binary("crossbar4x4", 4316),
        BaselineSpec::binary("banyan8x8", 12 * BANYAN_2X2_JJ),
        BaselineSpec::binary("crossbar8x8", 4 * 4316),
        // A single source at full rate uses a quarter of the slots.
        BaselineSpec {
            name: "srnoc".into(),
            jj_count: 528,
            clock_ghz: 40.0,
            case_share: [1.0, 1.0, 0.25],
        },
    ]
}

pub fn baseline(name: &str) -> Result<BaselineSpec> {
    baseline_catalog()
        .into_iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::Config {
            line: 0,
            msg: format!("unknown baseline '{name}'"),
        })
}

pub fn improvement_factor(pastnoc: f64, baseline: f64) -> f64 {
    if baseline == 0.0 {
        f64::INFINITY
    } else {
        pastnoc / baseline
    }
}

/// Data-period grid `lo..=hi` in [`GRID_STEP_PS`] steps.
pub fn grid(lo: u64, hi: u64) -> impl Iterator<Item = u64> {
    (lo..=hi).step_by(GRID_STEP_PS as usize)
}

/// Smallest grid data period at which PaST-NoC reaches the baseline.
pub fn crossover(
    topo: &PerfTopology,
    base: &BaselineSpec,
    case: TrafficCase,
    lo: u64,
    hi: u64,
) -> Result<u64> {
    let target = base.gbps_per_port_per_jj(case);
    for dp in grid(lo, hi) {
        if pastnoc_goodput(dp, topo, case)?.gbps_per_port_per_jj >= target {
            return Ok(dp);
        }
    }
    Err(Error::NoCrossover { lo, hi })
}

/// Smallest grid data period at which the improvement factor reaches `factor`.
pub fn period_for_factor(
    topo: &PerfTopology,
    base: &BaselineSpec,
    case: TrafficCase,
    factor: f64,
    lo: u64,
    hi: u64,
) -> Result<u64> {
    let target = base.gbps_per_port_per_jj(case);
    for dp in grid(lo, hi) {
        let v = pastnoc_goodput(dp, topo, case)?.gbps_per_port_per_jj;
        if improvement_factor(v, target) >= factor {
            return Ok(dp);
        }
    }
    Err(Error::NoCrossover { lo, hi })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub data_period_ps: u64,
    pub case: TrafficCase,
    pub gbps_per_port: f64,
    pub gbps_per_port_per_jj: f64,
    pub baseline: String,
    pub ratio: f64,
}

pub fn curve(topo: &PerfTopology, base: &BaselineSpec, lo: u64, hi: u64) -> Result<Vec<CurveRow>> {
    let mut rows = Vec::new();
    for case in TrafficCase::ALL {
        let b = base.gbps_per_port_per_jj(case);
        for dp in grid(lo, hi) {
            let p = pastnoc_goodput(dp, topo, case)?;
            rows.push(CurveRow {
                data_period_ps: dp,
                case,
                gbps_per_port: p.gbps_per_port,
                gbps_per_port_per_jj: p.gbps_per_port_per_jj,
                baseline: base.name.clone(),
                ratio: improvement_factor(p.gbps_per_port_per_jj, b),
            });
        }
    }
    Ok(rows)
}

pub fn curve_csv(rows: &[CurveRow], base: &BaselineSpec) -> String {
    let mut s = format!(
        "# baseline {}\n# payload model: m = n - n/e pulses of log2(n) bits\n",
        base.assumption()
    );
    s.push_str("data_period_ps,case,gbps_per_port,gbps_per_port_per_jj,baseline,ratio\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{:.6},{:.9},{},{:.6}\n",
            r.data_period_ps,
            r.case.name(),
            r.gbps_per_port,
            r.gbps_per_port_per_jj,
            r.baseline,
            r.ratio
        ));
    }
    s
}
