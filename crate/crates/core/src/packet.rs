//! Epoch layout, race-logic packet encoding and payload capacity.
//!
//! An epoch is a control period of `D + 1` slots (one per destination plus a
//! trailing empty slot) followed by a data period of `n` data slots spaced
//! `SP` apart. A packet has exactly one control pulse and at most one pulse
//! per data slot.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::{Error, Result};

pub const DEFAULT_CONTROL_SLOT_PS: u64 = 60;
pub const MIN_DATA_SPACING_PS: u64 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpochConfig {
    pub num_destinations: u32,
    pub control_slot: SimTime,
    pub data_spacing: SimTime,
    pub data_period: SimTime,
}

impl EpochConfig {
    pub fn new(num_destinations: u32, data_period_ps: u64) -> Result<Self> {
        let cfg = EpochConfig {
            num_destinations,
            control_slot: SimTime(DEFAULT_CONTROL_SLOT_PS),
            data_spacing: SimTime(MIN_DATA_SPACING_PS),
            data_period: SimTime(data_period_ps),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_destinations == 0 {
            return Err(Error::InvalidEpochConfig("at least one destination".into()));
        }
        if self.data_spacing.0 < MIN_DATA_SPACING_PS {
            return Err(Error::InvalidEpochConfig(format!(
                "data spacing {} ps below {MIN_DATA_SPACING_PS} ps",
                self.data_spacing
            )));
        }
        if self.control_slot.0 < 2 || !self.control_slot.0.is_multiple_of(2) {
            return Err(Error::InvalidEpochConfig(
                "control slot must be even and >= 2 ps".into(),
            ));
        }
        if !self.data_period.0.is_multiple_of(self.data_spacing.0) {
            return Err(Error::InvalidEpochConfig(format!(
                "data period {} ps not a multiple of {} ps",
                self.data_period, self.data_spacing
            )));
        }
        Ok(())
    }

    /// `(D + 1)` control slots.
    pub fn control_period(&self) -> SimTime {
        SimTime(u64::from(self.num_destinations + 1) * self.control_slot.0)
    }

    pub fn epoch(&self) -> SimTime {
        self.control_period() + self.data_period
    }

    pub fn n_data_slots(&self) -> u32 {
        (self.data_period.0 / self.data_spacing.0) as u32
    }

    /// Offset of the control pulse for `destination` from epoch start.
    pub fn control_offset(&self, destination: u32) -> SimTime {
        SimTime(u64::from(destination - 1) * self.control_slot.0 + self.control_slot.0 / 2)
    }

    /// Offset of data slot `slot` (1-based) from epoch start.
    pub fn data_offset(&self, slot: u32) -> SimTime {
        self.control_period() + SimTime(u64::from(slot - 1) * self.data_spacing.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Packet {
    pub destination: u32,
    pub data_slots: BTreeSet<u32>,
}

impl Packet {
    pub fn new(destination: u32, data: impl IntoIterator<Item = u32>) -> Self {
        Packet {
            destination,
            data_slots: data.into_iter().collect(),
        }
    }

    pub fn validate(&self, cfg: &EpochConfig) -> Result<()> {
        if self.destination == 0 || self.destination > cfg.num_destinations {
            return Err(Error::DestinationOutOfRange {
                dest: self.destination,
                max: cfg.num_destinations,
            });
        }
        let n = cfg.n_data_slots();
        if let Some(&bad) = self.data_slots.iter().find(|&&s| s == 0 || s > n) {
            return Err(Error::SlotOutOfRange { slot: bad, max: n });
        }
        Ok(())
    }
}

impl fmt::Display for Packet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data: Vec<String> = self.data_slots.iter().map(u32::to_string).collect();
        write!(f, "dest={} data=[{}]", self.destination, data.join(","))
    }
}

impl FromStr for Packet {
    type Err = String;

    /// Parses `dest=3 data=[1,5,9]`; `data` may be omitted.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        let rest = s
            .strip_prefix("dest=")
            .ok_or_else(|| format!("expected `dest=` in `{s}`"))?;
        let (dest, data) = match rest.split_once(char::is_whitespace) {
            Some((d, tail)) => (d, Some(tail.trim())),
            None => (rest, None),
        };
        let destination = dest
            .parse::<u32>()
            .map_err(|e| format!("bad destination: {e}"))?;
        let mut slots = BTreeSet::new();
        if let Some(tail) = data {
            let list = tail
                .strip_prefix("data=[")
                .and_then(|t| t.strip_suffix(']'))
                .ok_or_else(|| format!("expected `data=[...]` in `{tail}`"))?;
            for item in list.split(',').map(str::trim).filter(|x| !x.is_empty()) {
                let v = item
                    .parse::<u32>()
                    .map_err(|e| format!("bad slot `{item}`: {e}"))?;
                if !slots.insert(v) {
                    return Err(format!("slot {v} repeated"));
                }
            }
        }
        Ok(Packet {
            destination,
            data_slots: slots,
        })
    }
}

/// Pulse times of `pkt` in an epoch starting at `epoch_start`, ascending.
pub fn encode_packet(
    cfg: &EpochConfig,
    pkt: &Packet,
    epoch_start: SimTime,
) -> Result<Vec<SimTime>> {
    pkt.validate(cfg)?;
    let mut out = Vec::with_capacity(1 + pkt.data_slots.len());
    out.push(epoch_start + cfg.control_offset(pkt.destination));
    out.extend(
        pkt.data_slots
            .iter()
            .map(|&k| epoch_start + cfg.data_offset(k)),
    );
    Ok(out)
}

/// Inverse of [`encode_packet`]. Data pulses are snapped to the nearest slot
/// so small uniform path skews are tolerated.
pub fn decode_packet(
    cfg: &EpochConfig,
    pulses: &[SimTime],
    epoch_start: SimTime,
) -> Result<Packet> {
    let mut sorted: Vec<SimTime> = pulses.to_vec();
    sorted.sort();
    let cp = cfg.control_period();
    let slot = cfg.control_slot.0;
    let sp = cfg.data_spacing.0;
    let mut destination = None;
    let mut data = BTreeSet::new();
    let mut last_data: Option<SimTime> = None;
    for &t in &sorted {
        if t < epoch_start {
            return Err(Error::SlotOutOfRange {
                slot: 0,
                max: cfg.n_data_slots(),
            });
        }
        let rel = t - epoch_start;
        if rel < cp {
            let idx = (rel.0 / slot) as u32 + 1;
            if idx > cfg.num_destinations {
                return Err(Error::PulseInForbiddenSlot(t));
            }
            if destination.replace(idx).is_some() {
                return Err(Error::PulseInForbiddenSlot(t));
            }
            continue;
        }
        if let Some(prev) = last_data {
            if t.0 - prev.0 < sp {
                return Err(Error::SpacingViolation {
                    first: prev,
                    second: t,
                });
            }
        }
        last_data = Some(t);
        let k = ((rel.0 - cp.0 + sp / 2) / sp) as u32 + 1;
        if k > cfg.n_data_slots() {
            return Err(Error::SlotOutOfRange {
                slot: k,
                max: cfg.n_data_slots(),
            });
        }
        data.insert(k);
    }
    let destination = destination.ok_or(Error::NoControlPulse)?;
    Ok(Packet {
        destination,
        data_slots: data,
    })
}

/// Expected occupied slots for `n` uniformly placed pulses, large-`n` form `n - n/e`.
pub fn expected_pulses_asymptotic(n: u32) -> f64 {
    let n = f64::from(n);
    n - n / std::f64::consts::E
}

/// Exact expected number of occupied bins for `n` balls in `n` bins.
pub fn expected_pulses_exact(n: u32) -> f64 {
    assert!(n >= 1, "needs at least one slot");
    let nf = f64::from(n);
    nf * (1.0 - (1.0 - 1.0 / nf).powi(n as i32))
}

/// Splits a multiset of slot values into packets, first fit, so that no
/// packet carries the same slot twice.
pub fn pack_values(cfg: &EpochConfig, values: &[u32]) -> Result<Vec<BTreeSet<u32>>> {
    let n = cfg.n_data_slots();
    let mut packets: Vec<BTreeSet<u32>> = Vec::new();
    for &v in values {
        if v == 0 || v > n {
            return Err(Error::SlotOutOfRange { slot: v, max: n });
        }
        match packets.iter_mut().find(|p| !p.contains(&v)) {
            Some(p) => {
                p.insert(v);
            }
            None => packets.push(BTreeSet::from([v])),
        }
    }
    Ok(packets)
}

/// Payload bits per packet: `m` pulses of `log2(n)` bits each.
pub fn bits_per_packet(cfg: &EpochConfig) -> Result<f64> {
    bits_for_slots(cfg.n_data_slots())
}

pub fn bits_for_slots(n: u32) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidEpochConfig(format!(
            "{n} data slots carry no resolution"
        )));
    }
    Ok(expected_pulses_asymptotic(n) * f64::from(n).log2())
}
