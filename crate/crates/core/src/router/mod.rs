//! The 2×2 router: a fast behavioral model and a cell-level netlist.
//!
//! Arbitration follows the first-arriving control pulse. The first packet
//! picks a crossbar setting from its own request: an early (before `Thr`)
//! pulse on A gives S1, a late one on A gives S2, and symmetrically for B.
//! Under round robin, every second conflict inverts that setting.

pub mod crossval;
pub mod lfsr;
pub mod netlist;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::{Error, Result};
use crate::packet::{EpochConfig, Packet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    FixedPriority,
    RoundRobin,
    RandomizedRR,
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "fixedpriority" | "fixed" | "fp" => Ok(Policy::FixedPriority),
            "roundrobin" | "rr" => Ok(Policy::RoundRobin),
            "randomizedrr" | "randomized" | "rrr" => Ok(Policy::RandomizedRR),
            _ => Err(Error::UnsupportedPolicy(s.to_string())),
        }
    }
}

/// Control signal times relative to the epoch start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub e1: SimTime,
    pub thr: SimTime,
    pub e2: SimTime,
    pub e3: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouterConfig {
    pub policy: Policy,
    /// Control pulses in slots `1..=thr_slot` request the top output.
    pub thr_slot: u32,
    pub epoch: EpochConfig,
}

impl RouterConfig {
    pub fn new(policy: Policy, thr_slot: u32, epoch: EpochConfig) -> Result<Self> {
        epoch.validate()?;
        if thr_slot > epoch.num_destinations {
            return Err(Error::InvalidEpochConfig(format!(
                "threshold slot {thr_slot} outside 0..={}",
                epoch.num_destinations
            )));
        }
        Ok(RouterConfig {
            policy,
            thr_slot,
            epoch,
        })
    }

    pub fn schedule(&self) -> ControlSchedule {
        let slot = self.epoch.control_slot.0;
        ControlSchedule {
            e1: SimTime::ZERO,
            thr: SimTime(u64::from(self.thr_slot) * slot),
            e2: SimTime(u64::from(self.epoch.num_destinations) * slot),
            e3: self.epoch.control_period(),
        }
    }

    /// Input shift register length: one control period.
    pub fn input_delay_stages(&self) -> u32 {
        (self.epoch.control_period().0 / self.epoch.data_spacing.0) as u32
    }

    pub fn requests_top(&self, destination: u32) -> bool {
        destination <= self.thr_slot
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouterState {
    /// Conflict-detection toggle; a C pulse is emitted when it falls back to 0.
    pub rr_phase: bool,
    pub conflicts: u64,
    pub c_pulses: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Port {
    Top,
    Bottom,
}

impl Port {
    pub fn other(self) -> Port {
        match self {
            Port::Top => Port::Bottom,
            Port::Bottom => Port::Top,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grant {
    pub requested: Port,
    pub assigned: Port,
}

impl Grant {
    pub fn deflected(&self) -> bool {
        self.requested != self.assigned
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingDecision {
    /// `Some(true)` is S1 (A to top, B to bottom); `None` when idle.
    pub straight: Option<bool>,
    pub conflict: bool,
    pub c_emitted: bool,
    pub a: Option<Grant>,
    pub b: Option<Grant>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochOutput {
    pub decision: RoutingDecision,
    pub top: Option<Packet>,
    pub bottom: Option<Packet>,
}

#[derive(Debug, Clone)]
pub struct Router {
    pub cfg: RouterConfig,
    pub state: RouterState,
}

impl Router {
    pub fn new(cfg: RouterConfig) -> Self {
        Router {
            cfg,
            state: RouterState::default(),
        }
    }

    /// One epoch. Ties in arrival time go to A.
    pub fn route_epoch(
        &mut self,
        a: Option<&Packet>,
        b: Option<&Packet>,
        rand_bit: Option<bool>,
    ) -> EpochOutput {
        let cfg = &self.cfg;
        let req = |p: &Packet| {
            if cfg.requests_top(p.destination) {
                Port::Top
            } else {
                Port::Bottom
            }
        };
        let randomize = cfg.policy == Policy::RandomizedRR && rand_bit == Some(true);
        if randomize {
            self.state.rr_phase = !self.state.rr_phase;
        }
        let (first_is_a, first_req) = match (a, b) {
            (None, None) => {
                return EpochOutput {
                    decision: RoutingDecision {
                        straight: None,
                        conflict: false,
                        c_emitted: false,
                        a: None,
                        b: None,
                    },
                    top: None,
                    bottom: None,
                }
            }
            (Some(pa), None) => (true, req(pa)),
            (None, Some(pb)) => (false, req(pb)),
            (Some(pa), Some(pb)) => {
                if pa.destination <= pb.destination {
                    (true, req(pa))
                } else {
                    (false, req(pb))
                }
            }
        };
        let conflict = match (a, b) {
            (Some(pa), Some(pb)) => req(pa) == req(pb),
            _ => false,
        };
        let mut c_emitted = false;
        if conflict {
            self.state.conflicts += 1;
            if cfg.policy != Policy::FixedPriority {
                let was = self.state.rr_phase;
                self.state.rr_phase = !was;
                if was && !randomize {
                    c_emitted = true;
                    self.state.c_pulses += 1;
                }
            }
        }
        // S1 when the first arrival's request matches its own row.
        let mut straight = first_is_a == (first_req == Port::Top);
        if c_emitted {
            straight = !straight;
        }
        let route = |is_a: bool| {
            if straight == is_a {
                Port::Top
            } else {
                Port::Bottom
            }
        };
        let ga = a.map(|p| Grant {
            requested: req(p),
            assigned: route(true),
        });
        let gb = b.map(|p| Grant {
            requested: req(p),
            assigned: route(false),
        });
        let mut top = None;
        let mut bottom = None;
        for (g, p) in [(ga, a), (gb, b)] {
            if let (Some(g), Some(p)) = (g, p) {
                match g.assigned {
                    Port::Top => top = Some(p.clone()),
                    Port::Bottom => bottom = Some(p.clone()),
                }
            }
        }
        EpochOutput {
            decision: RoutingDecision {
                straight: Some(straight),
                conflict,
                c_emitted,
                a: ga,
                b: gb,
            },
            top,
            bottom,
        }
    }
}
