use thiserror::Error;

use crate::cells::CellKind;
use crate::engine::SimTime;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pulse scheduled at {at} ps but simulation time is already {now} ps")]
    SchedulingInPast { at: SimTime, now: SimTime },
    #[error("{kind:?} has no input port {port}")]
    UnknownPort { kind: CellKind, port: u8 },
    #[error("wire `{0}` already has a sink; fanout needs a splitter")]
    FanoutViolation(String),
    #[error("wire `{0}` already has a driver")]
    MultipleDrivers(String),
    #[error("unknown wire `{0}`")]
    UnknownWire(String),
    #[error("destination {dest} outside 1..={max}")]
    DestinationOutOfRange { dest: u32, max: u32 },
    #[error("data slot {slot} outside 1..={max}")]
    SlotOutOfRange { slot: u32, max: u32 },
    #[error("no control pulse in epoch")]
    NoControlPulse,
    #[error("pulse at {0} ps falls in the reserved control slot")]
    PulseInForbiddenSlot(SimTime),
    #[error("data pulses {first} ps and {second} ps closer than the minimum spacing")]
    SpacingViolation { first: SimTime, second: SimTime },
    #[error("invalid epoch configuration: {0}")]
    InvalidEpochConfig(String),
    #[error("linear feedback shift register state must be nonzero")]
    ZeroState,
    #[error("unsupported policy for this operation: {0}")]
    UnsupportedPolicy(String),
    #[error("invalid topology size: {0}")]
    InvalidSize(String),
    #[error("invalid mesh geometry: {0}")]
    InvalidGeometry(String),
    #[error("inadmissible traffic pattern: {0}")]
    InadmissiblePattern(String),
    #[error("no crossover within {lo}..={hi} ps")]
    NoCrossover { lo: u64, hi: u64 },
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("config field `{0}` is missing")]
    MissingField(String),
    #[error("{0} epochs differ between netlist and behavioral model")]
    Mismatch(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
