//! Behavioral models of the superconducting cell library.
//!
//! Every cell is stateful and reacts to instantaneous input pulses. Port
//! numbering per kind:
//!
//! | kind          | inputs                      | outputs        |
//! |---------------|-----------------------------|----------------|
//! | Splitter      | 0 in                        | 0, 1           |
//! | Merger        | 0, 1                        | 0              |
//! | LastArrival   | 0, 1                        | 0              |
//! | Inhibit       | 0 data, 1 inhibit           | 0              |
//! | Ndro          | 0 clock, 1 set, 2 reset     | 0              |
//! | AndClocked    | 0 a, 1 b, 2 clock           | 0              |
//! | Tff           | 0 in                        | 0 first, 1 second |
//! | Dff           | 0 data, 1 clock             | 0              |
//! | Dff2          | 0 data, 1 clock1, 2 clock2  | 0, 1           |
//! | ShiftRegister | 0 in                        | 0              |

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellKind {
    Splitter,
    Merger,
    LastArrival,
    Inhibit,
    Ndro,
    AndClocked,
    Tff,
    Dff,
    Dff2,
    ShiftRegister,
}

impl CellKind {
    pub const ALL: [CellKind; 10] = [
        CellKind::Splitter,
        CellKind::Merger,
        CellKind::LastArrival,
        CellKind::Inhibit,
        CellKind::Ndro,
        CellKind::AndClocked,
        CellKind::Tff,
        CellKind::Dff,
        CellKind::Dff2,
        CellKind::ShiftRegister,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Splitter => "splitter",
            CellKind::Merger => "merger",
            CellKind::LastArrival => "last_arrival",
            CellKind::Inhibit => "inhibit",
            CellKind::Ndro => "ndro",
            CellKind::AndClocked => "and",
            CellKind::Tff => "tff",
            CellKind::Dff => "dff",
            CellKind::Dff2 => "dff2",
            CellKind::ShiftRegister => "shift_register",
        }
    }

    pub fn num_inputs(self) -> u8 {
        match self {
            CellKind::Splitter | CellKind::Tff | CellKind::ShiftRegister => 1,
            CellKind::Merger | CellKind::LastArrival | CellKind::Inhibit | CellKind::Dff => 2,
            CellKind::Ndro | CellKind::AndClocked | CellKind::Dff2 => 3,
        }
    }

    pub fn num_outputs(self) -> u8 {
        match self {
            CellKind::Splitter | CellKind::Tff | CellKind::Dff2 => 2,
            _ => 1,
        }
    }

    /// Default propagation delay in picoseconds.
    ///
    /// Only module-level delays are specified; these per-cell values are a
    /// calibration fixture chosen so the composed router modules land on the
    /// reference module delays (see `router::netlist`).
    pub fn default_delay(self) -> SimTime {
        SimTime(match self {
            CellKind::Splitter => 4,
            CellKind::Merger => 5,
            CellKind::LastArrival => 7,
            CellKind::Inhibit => 7,
            CellKind::Ndro => 7,
            CellKind::AndClocked => 8,
            CellKind::Tff => 8,
            CellKind::Dff => 6,
            CellKind::Dff2 => 7,
            // Clock-to-out of the last stage, on top of the stage delays.
            CellKind::ShiftRegister => 12,
        })
    }
}

/// Options that change the JJ count of a cell instance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JjOptions {
    /// Outputs with their output junctions removed (DFF2 only).
    pub unused_outputs: u8,
    /// Number of stages (shift register only).
    pub stages: u32,
}

/// Junctions removed per unused DFF2 output.
pub const JJ_PER_UNUSED_OUTPUT: u32 = 2;
/// Fixed input/clocking overhead of a flux-based shift register.
pub const SHIFT_REGISTER_BASE_JJ: u32 = 10;
/// Junctions per flux shift register stage.
pub const SHIFT_REGISTER_JJ_PER_STAGE: u32 = 1;

pub fn jj_count_of(kind: CellKind, opts: JjOptions) -> u32 {
    match kind {
        CellKind::Splitter => 3,
        CellKind::Merger => 5,
        CellKind::LastArrival => 6,
        CellKind::Inhibit => 8,
        CellKind::Ndro => 7,
        CellKind::AndClocked => 11,
        CellKind::Tff => 10,
        CellKind::Dff => 4,
        CellKind::Dff2 => 12 - JJ_PER_UNUSED_OUTPUT * u32::from(opts.unused_outputs.min(2)),
        CellKind::ShiftRegister => {
            SHIFT_REGISTER_BASE_JJ + SHIFT_REGISTER_JJ_PER_STAGE * opts.stages
        }
    }
}

/// Stage clocking of a shift register: pulses are captured on the next
/// stage-clock edge (`phase + k * period`) and leave `stages` periods later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftRegisterParams {
    pub stages: u32,
    pub period: SimTime,
    pub phase: SimTime,
}

impl ShiftRegisterParams {
    /// Exit time for a pulse entering at `t`, excluding clock-to-out delay.
    pub fn exit_time(&self, t: SimTime) -> SimTime {
        let p = self.period.0.max(1);
        let ph = self.phase.0 % p;
        let captured = if t.0 <= ph {
            ph
        } else {
            ph + (t.0 - ph).div_ceil(p) * p
        };
        SimTime(captured + u64::from(self.stages) * p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum CellState {
    Stateless,
    Merger { last_out: Option<SimTime> },
    LastArrival { seen: [bool; 2] },
    Inhibit { armed: bool },
    Ndro { set: bool },
    And { seen: [bool; 2] },
    Tff { next_second: bool },
    Dff { stored: bool },
    ShiftRegister(ShiftRegisterParams),
}

/// Per-instance anomaly counters. They never change outputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CellWarnings {
    /// Two merger inputs landed on the same output instant.
    pub merger_collisions: u64,
    /// A DFF/DFF2 received a datum while already holding one.
    pub overwrites: u64,
}

#[derive(Debug, Clone)]
pub struct CellInstance {
    pub kind: CellKind,
    pub delay: SimTime,
    pub jj_opts: JjOptions,
    pub warnings: CellWarnings,
    state: CellState,
    last_input: SimTime,
}

impl CellInstance {
    pub fn new(kind: CellKind) -> Self {
        Self::with_delay(kind, kind.default_delay())
    }

    pub fn with_delay(kind: CellKind, delay: SimTime) -> Self {
        let state = match kind {
            CellKind::Splitter => CellState::Stateless,
            CellKind::Merger => CellState::Merger { last_out: None },
            CellKind::LastArrival => CellState::LastArrival { seen: [false; 2] },
            CellKind::Inhibit => CellState::Inhibit { armed: false },
            CellKind::Ndro => CellState::Ndro { set: false },
            CellKind::AndClocked => CellState::And { seen: [false; 2] },
            CellKind::Tff => CellState::Tff { next_second: false },
            CellKind::Dff | CellKind::Dff2 => CellState::Dff { stored: false },
            CellKind::ShiftRegister => CellState::ShiftRegister(ShiftRegisterParams {
                stages: 1,
                period: SimTime(1),
                phase: SimTime(0),
            }),
        };
        CellInstance {
            kind,
            delay,
            jj_opts: JjOptions::default(),
            warnings: CellWarnings::default(),
            state,
            last_input: SimTime(0),
        }
    }

    pub fn shift_register(params: ShiftRegisterParams, delay: SimTime) -> Self {
        let mut cell = Self::with_delay(CellKind::ShiftRegister, delay);
        cell.state = CellState::ShiftRegister(params);
        cell.jj_opts.stages = params.stages;
        cell
    }

    /// Marks DFF2 outputs whose junctions are removed.
    pub fn trim_unused_outputs(mut self, n: u8) -> Self {
        self.jj_opts.unused_outputs = n;
        self
    }

    pub fn jj_count(&self) -> u32 {
        jj_count_of(self.kind, self.jj_opts)
    }

    pub fn shift_register_params(&self) -> Option<ShiftRegisterParams> {
        match self.state {
            CellState::ShiftRegister(p) => Some(p),
            _ => None,
        }
    }

    /// Toggle state of a TFF: `true` once an odd number of pulses arrived.
    pub fn tff_phase(&self) -> Option<bool> {
        match self.state {
            CellState::Tff { next_second } => Some(next_second),
            _ => None,
        }
    }

    /// Delivers one pulse on `port` at `t` and returns the produced
    /// `(output port, time)` pulses.
    pub fn evaluate(&mut self, port: u8, t: SimTime) -> Result<Vec<(u8, SimTime)>> {
        if port >= self.kind.num_inputs() {
            return Err(Error::UnknownPort {
                kind: self.kind,
                port,
            });
        }
        debug_assert!(t >= self.last_input, "cell received a pulse out of order");
        self.last_input = t;
        let out = t + self.delay;
        let pulses = match &mut self.state {
            CellState::Stateless => vec![(0, out), (1, out)],
            CellState::Merger { last_out } => {
                if *last_out == Some(out) {
                    self.warnings.merger_collisions += 1;
                    vec![]
                } else {
                    *last_out = Some(out);
                    vec![(0, out)]
                }
            }
            CellState::LastArrival { seen } => {
                seen[port as usize] = true;
                if seen[0] && seen[1] {
                    *seen = [false; 2];
                    vec![(0, out)]
                } else {
                    vec![]
                }
            }
            CellState::Inhibit { armed } => match port {
                0 if *armed => {
                    *armed = false;
                    vec![]
                }
                0 => vec![(0, out)],
                _ => {
                    *armed = true;
                    vec![]
                }
            },
            CellState::Ndro { set } => match port {
                0 if *set => vec![(0, out)],
                0 => vec![],
                1 => {
                    *set = true;
                    vec![]
                }
                _ => {
                    *set = false;
                    vec![]
                }
            },
            CellState::And { seen } => match port {
                2 => {
                    let fire = seen[0] && seen[1];
                    *seen = [false; 2];
                    if fire {
                        vec![(0, out)]
                    } else {
                        vec![]
                    }
                }
                p => {
                    seen[p as usize] = true;
                    vec![]
                }
            },
            CellState::Tff { next_second } => {
                let o = u8::from(*next_second);
                *next_second = !*next_second;
                vec![(o, out)]
            }
            CellState::Dff { stored } => {
                if port == 0 {
                    if *stored {
                        self.warnings.overwrites += 1;
                    }
                    *stored = true;
                    vec![]
                } else if *stored {
                    *stored = false;
                    vec![(port - 1, out)]
                } else {
                    vec![]
                }
            }
            CellState::ShiftRegister(params) => vec![(0, params.exit_time(t) + self.delay)],
        };
        Ok(pulses)
    }
}

/// One row of the exported cell library manifest.
#[derive(Debug, Clone, Serialize)]
pub struct CellManifestEntry {
    pub name: &'static str,
    pub jj_count: u32,
    pub default_delay_ps: u64,
}

pub fn cell_manifest() -> Vec<CellManifestEntry> {
    CellKind::ALL
        .iter()
        .map(|&k| CellManifestEntry {
            name: k.name(),
            jj_count: jj_count_of(k, JjOptions::default()),
            default_delay_ps: k.default_delay().0,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feed(cell: &mut CellInstance, pulses: &[(u8, u64)]) -> Vec<(u8, u64)> {
        pulses
            .iter()
            .flat_map(|&(p, t)| cell.evaluate(p, SimTime(t)).unwrap())
            .map(|(p, t)| (p, t.0))
            .collect()
    }

    #[test]
    fn table_jj_counts() {
        let none = JjOptions::default();
        assert_eq!(jj_count_of(CellKind::Splitter, none), 3);
        assert_eq!(jj_count_of(CellKind::Merger, none), 5);
        assert_eq!(jj_count_of(CellKind::LastArrival, none), 6);
        assert_eq!(jj_count_of(CellKind::Inhibit, none), 8);
        assert_eq!(jj_count_of(CellKind::Ndro, none), 7);
        assert_eq!(jj_count_of(CellKind::AndClocked, none), 11);
        assert_eq!(jj_count_of(CellKind::Tff, none), 10);
        assert_eq!(jj_count_of(CellKind::Dff, none), 4);
        assert_eq!(jj_count_of(CellKind::Dff2, none), 12);
        let trimmed = JjOptions {
            unused_outputs: 1,
            ..none
        };
        assert_eq!(jj_count_of(CellKind::Dff2, trimmed), 10);
    }

    #[test]
    fn tff_alternates() {
        let mut c = CellInstance::with_delay(CellKind::Tff, SimTime(3));
        assert_eq!(
            feed(&mut c, &[(0, 0), (0, 10), (0, 20)]),
            vec![(0, 3), (1, 13), (0, 23)]
        );
    }

    #[test]
    fn inhibit_blocks_following_data_pulse() {
        let mut c = CellInstance::with_delay(CellKind::Inhibit, SimTime(2));
        assert_eq!(feed(&mut c, &[(1, 4), (0, 5)]), vec![]);
        // The blocked pulse consumed the inhibition.
        assert_eq!(feed(&mut c, &[(0, 9)]), vec![(0, 11)]);
        // Data before inhibit propagates.
        let mut c = CellInstance::with_delay(CellKind::Inhibit, SimTime(2));
        assert_eq!(feed(&mut c, &[(0, 5), (1, 10)]), vec![(0, 7)]);
    }

    #[test]
    fn ndro_set_then_reset() {
        let mut c = CellInstance::with_delay(CellKind::Ndro, SimTime(1));
        let out = feed(&mut c, &[(1, 0), (0, 10), (2, 20), (0, 30)]);
        assert_eq!(out, vec![(0, 11)]);
    }

    #[test]
    fn shift_register_ten_stages() {
        let p = ShiftRegisterParams {
            stages: 10,
            period: SimTime(15),
            phase: SimTime(0),
        };
        let mut c = CellInstance::shift_register(p, SimTime(0));
        assert_eq!(feed(&mut c, &[(0, 0)]), vec![(0, 150)]);
        // Off-grid pulses are captured on the next edge.
        assert_eq!(feed(&mut c, &[(0, 16)]), vec![(0, 180)]);
        assert_eq!(c.jj_count(), 20);
    }

    #[test]
    fn dff2_overwrite_is_counted() {
        let mut c = CellInstance::with_delay(CellKind::Dff2, SimTime(1));
        assert_eq!(
            feed(&mut c, &[(0, 0), (0, 1), (2, 5), (1, 6)]),
            vec![(1, 6)]
        );
        assert_eq!(c.warnings.overwrites, 1);
    }

    #[test]
    fn merger_collision_emits_once() {
        let mut c = CellInstance::with_delay(CellKind::Merger, SimTime(1));
        assert_eq!(feed(&mut c, &[(0, 5), (1, 5)]), vec![(0, 6)]);
        assert_eq!(c.warnings.merger_collisions, 1);
    }

    #[test]
    fn unknown_port_rejected() {
        let mut c = CellInstance::new(CellKind::Splitter);
        assert!(matches!(
            c.evaluate(1, SimTime(0)),
            Err(Error::UnknownPort { .. })
        ));
    }
}
