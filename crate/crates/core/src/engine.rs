//! Discrete-event kernel carrying picosecond pulses between cell instances.
//!
//! Events are `(time, wire)` pairs kept in an ordered set, which gives both
//! coalescing of duplicate pulses and a deterministic processing order for
//! simultaneous pulses (ascending wire id).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::ops::{Add, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cells::{CellInstance, CellKind, CellWarnings};
use crate::error::{Error, Result};

/// Simulation time in integer picoseconds.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn ps(self) -> u64 {
        self.0
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WireId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId(pub u32);

/// An instantaneous pulse on a wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PulseEvent {
    pub time: SimTime,
    pub wire: WireId,
}

impl PulseEvent {
    pub fn new(time: u64, wire: WireId) -> Self {
        PulseEvent {
            time: SimTime(time),
            wire,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    Input,
    Cell(CellId, u8),
}

#[derive(Debug, Clone)]
pub struct Wire {
    pub name: String,
    pub driver: Driver,
    pub sink: Option<(CellId, u8)>,
}

#[derive(Debug, Clone)]
pub struct PlacedCell {
    pub cell: CellInstance,
    pub name: String,
    /// Grouping used for area and delay reports.
    pub module: &'static str,
    outputs: Vec<Option<WireId>>,
}

/// Cells, point-to-point wires and the set of probed wires.
#[derive(Debug, Clone, Default)]
pub struct Netlist {
    cells: Vec<PlacedCell>,
    wires: Vec<Wire>,
    by_name: BTreeMap<String, WireId>,
    probes: BTreeSet<WireId>,
}

impl Netlist {
    pub fn new() -> Self {
        Self::default()
    }

    fn new_wire(&mut self, name: String, driver: Driver) -> Result<WireId> {
        if self.by_name.contains_key(&name) {
            return Err(Error::MultipleDrivers(name));
        }
        let id = WireId(self.wires.len() as u32);
        self.by_name.insert(name.clone(), id);
        self.wires.push(Wire {
            name,
            driver,
            sink: None,
        });
        Ok(id)
    }

    /// Adds a primary input driven only by scheduled stimulus.
    pub fn add_input(&mut self, name: impl Into<String>) -> Result<WireId> {
        self.new_wire(name.into(), Driver::Input)
    }

    pub fn add_cell(
        &mut self,
        name: impl Into<String>,
        module: &'static str,
        cell: CellInstance,
    ) -> CellId {
        let id = CellId(self.cells.len() as u32);
        let n = cell.kind.num_outputs() as usize;
        self.cells.push(PlacedCell {
            cell,
            name: name.into(),
            module,
            outputs: vec![None; n],
        });
        id
    }

    /// Creates the wire driven by `port` of `cell`.
    pub fn output(&mut self, cell: CellId, port: u8, name: impl Into<String>) -> Result<WireId> {
        let name = name.into();
        let placed = &self.cells[cell.0 as usize];
        if port >= placed.cell.kind.num_outputs() {
            return Err(Error::UnknownPort {
                kind: placed.cell.kind,
                port,
            });
        }
        if placed.outputs[port as usize].is_some() {
            return Err(Error::MultipleDrivers(name));
        }
        let w = self.new_wire(name, Driver::Cell(cell, port))?;
        self.cells[cell.0 as usize].outputs[port as usize] = Some(w);
        Ok(w)
    }

    /// Attaches the single sink of `wire`.
    pub fn connect(&mut self, wire: WireId, cell: CellId, port: u8) -> Result<()> {
        let kind = self.cells[cell.0 as usize].cell.kind;
        if port >= kind.num_inputs() {
            return Err(Error::UnknownPort { kind, port });
        }
        let w = &mut self.wires[wire.0 as usize];
        if w.sink.is_some() {
            return Err(Error::FanoutViolation(w.name.clone()));
        }
        w.sink = Some((cell, port));
        Ok(())
    }

    pub fn probe(&mut self, wire: WireId) {
        self.probes.insert(wire);
    }

    pub fn wire(&self, name: &str) -> Result<WireId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownWire(name.to_string()))
    }

    pub fn wire_name(&self, id: WireId) -> &str {
        &self.wires[id.0 as usize].name
    }

    pub fn wires(&self) -> &[Wire] {
        &self.wires
    }

    pub fn cells(&self) -> &[PlacedCell] {
        &self.cells
    }

    pub fn cell_mut(&mut self, id: CellId) -> &mut CellInstance {
        &mut self.cells[id.0 as usize].cell
    }

    pub fn cell(&self, id: CellId) -> &CellInstance {
        &self.cells[id.0 as usize].cell
    }

    pub fn cell_output(&self, id: CellId, port: u8) -> Option<WireId> {
        self.cells[id.0 as usize]
            .outputs
            .get(port as usize)
            .copied()
            .flatten()
    }

    pub fn probes(&self) -> &BTreeSet<WireId> {
        &self.probes
    }

    pub fn jj_total(&self) -> u32 {
        self.cells.iter().map(|c| c.cell.jj_count()).sum()
    }

    /// JJ totals grouped by module tag.
    pub fn jj_by_module(&self) -> BTreeMap<&'static str, u32> {
        let mut m = BTreeMap::new();
        for c in &self.cells {
            *m.entry(c.module).or_insert(0) += c.cell.jj_count();
        }
        m
    }

    pub fn warnings(&self) -> CellWarnings {
        self.cells
            .iter()
            .fold(CellWarnings::default(), |mut acc, c| {
                acc.merger_collisions += c.cell.warnings.merger_collisions;
                acc.overwrites += c.cell.warnings.overwrites;
                acc
            })
    }
}

/// Seeded uniform per-stage jitter applied to shift register outputs.
#[derive(Debug, Clone)]
pub struct Jitter {
    /// Maximum deviation per stage, in ps.
    pub amplitude: u64,
    rng: ChaCha8Rng,
}

impl Jitter {
    pub fn new(amplitude: u64, seed: u64) -> Self {
        Jitter {
            amplitude,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn sample(&mut self, stages: u32) -> i64 {
        let a = self.amplitude as i64;
        (0..stages).map(|_| self.rng.gen_range(-a..=a)).sum()
    }
}

pub struct Simulator {
    netlist: Netlist,
    queue: BTreeSet<(SimTime, WireId)>,
    now: SimTime,
    jitter: Option<Jitter>,
    processed: u64,
}

impl Simulator {
    pub fn new(netlist: Netlist) -> Self {
        Simulator {
            netlist,
            queue: BTreeSet::new(),
            now: SimTime::ZERO,
            jitter: None,
            processed: 0,
        }
    }

    pub fn with_jitter(mut self, jitter: Jitter) -> Self {
        self.jitter = Some(jitter);
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn netlist(&self) -> &Netlist {
        &self.netlist
    }

    pub fn netlist_mut(&mut self) -> &mut Netlist {
        &mut self.netlist
    }

    pub fn into_netlist(self) -> Netlist {
        self.netlist
    }

    /// Number of pulses delivered so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn schedule(&mut self, event: PulseEvent) -> Result<()> {
        if event.time < self.now {
            return Err(Error::SchedulingInPast {
                at: event.time,
                now: self.now,
            });
        }
        self.queue.insert((event.time, event.wire));
        Ok(())
    }

    /// Processes every pending event with `time <= t` and returns the pulses
    /// seen on probed wires, in `(time, wire)` order.
    pub fn run_until(&mut self, t: SimTime) -> Vec<PulseEvent> {
        let mut trace = Vec::new();
        while let Some(&(time, wire)) = self.queue.first() {
            if time > t {
                break;
            }
            self.queue.pop_first();
            self.now = time;
            self.processed += 1;
            if self.netlist.probes.contains(&wire) {
                trace.push(PulseEvent { time, wire });
            }
            let Some((cell_id, port)) = self.netlist.wires[wire.0 as usize].sink else {
                continue;
            };
            let placed = &mut self.netlist.cells[cell_id.0 as usize];
            let outputs = placed
                .cell
                .evaluate(port, time)
                .expect("netlist connects only valid ports");
            let sr_stages =
                (placed.cell.kind == CellKind::ShiftRegister).then_some(placed.cell.jj_opts.stages);
            for (out_port, mut out_time) in outputs {
                if let (Some(stages), Some(j)) = (sr_stages, self.jitter.as_mut()) {
                    let dt = j.sample(stages);
                    out_time = SimTime((out_time.0 as i64 + dt).max(time.0 as i64) as u64);
                }
                if let Some(w) = placed.outputs[out_port as usize] {
                    self.queue.insert((out_time, w));
                }
            }
        }
        if t > self.now {
            self.now = t;
        }
        trace
    }
}

/// Renders a trace as VCD; every pulse toggles its one-bit signal.
pub fn trace_to_vcd(netlist: &Netlist, trace: &[PulseEvent]) -> String {
    let probes: Vec<WireId> = netlist.probes().iter().copied().collect();
    let code = |i: usize| -> String {
        let mut s = String::new();
        let mut n = i;
        loop {
            s.push((b'!' + (n % 94) as u8) as char);
            n /= 94;
            if n == 0 {
                break;
            }
        }
        s
    };
    let ids: BTreeMap<WireId, String> = probes
        .iter()
        .enumerate()
        .map(|(i, &w)| (w, code(i)))
        .collect();
    let mut out = String::new();
    out.push_str("$timescale 1ps $end\n$scope module pastnoc $end\n");
    for &w in &probes {
        let _ = writeln!(out, "$var wire 1 {} {} $end", ids[&w], netlist.wire_name(w));
    }
    out.push_str("$upscope $end\n$enddefinitions $end\n#0\n$dumpvars\n");
    for &w in &probes {
        let _ = writeln!(out, "0{}", ids[&w]);
    }
    out.push_str("$end\n");
    let mut level: BTreeMap<WireId, bool> = probes.iter().map(|&w| (w, false)).collect();
    let mut current: Option<SimTime> = None;
    for ev in trace {
        if current != Some(ev.time) {
            let _ = writeln!(out, "#{}", ev.time);
            current = Some(ev.time);
        }
        let Some(l) = level.get_mut(&ev.wire) else {
            continue;
        };
        *l = !*l;
        let _ = writeln!(out, "{}{}", u8::from(*l), ids[&ev.wire]);
    }
    out
}

pub fn trace_to_csv(netlist: &Netlist, trace: &[PulseEvent]) -> String {
    let mut out = String::from("time_ps,wire\n");
    for ev in trace {
        let _ = writeln!(out, "{},{}", ev.time, netlist.wire_name(ev.wire));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn splitter_net(delay: u64) -> (Netlist, WireId, WireId, WireId) {
        let mut n = Netlist::new();
        let a = n.add_input("a").unwrap();
        let s = n.add_cell(
            "s",
            "t",
            CellInstance::with_delay(CellKind::Splitter, SimTime(delay)),
        );
        n.connect(a, s, 0).unwrap();
        let o0 = n.output(s, 0, "o0").unwrap();
        let o1 = n.output(s, 1, "o1").unwrap();
        n.probe(a);
        n.probe(o0);
        n.probe(o1);
        (n, a, o0, o1)
    }

    #[test]
    fn splitter_emits_on_both_outputs() {
        let (n, a, o0, o1) = splitter_net(4);
        let mut sim = Simulator::new(n);
        sim.schedule(PulseEvent::new(0, a)).unwrap();
        let tr = sim.run_until(SimTime(100));
        assert_eq!(
            tr,
            vec![
                PulseEvent::new(0, a),
                PulseEvent::new(4, o0),
                PulseEvent::new(4, o1)
            ]
        );
    }

    #[test]
    fn duplicate_events_coalesce() {
        let (n, a, ..) = splitter_net(4);
        let mut sim = Simulator::new(n);
        sim.schedule(PulseEvent::new(0, a)).unwrap();
        sim.schedule(PulseEvent::new(0, a)).unwrap();
        assert_eq!(sim.run_until(SimTime(10)).len(), 3);
    }

    #[test]
    fn past_scheduling_rejected() {
        let (n, a, ..) = splitter_net(4);
        let mut sim = Simulator::new(n);
        sim.run_until(SimTime(10));
        assert!(matches!(
            sim.schedule(PulseEvent::new(5, a)),
            Err(Error::SchedulingInPast { .. })
        ));
    }

    #[test]
    fn empty_queue_gives_empty_trace() {
        let (n, ..) = splitter_net(4);
        let mut sim = Simulator::new(n);
        assert!(sim.run_until(SimTime(1000)).is_empty());
    }

    #[test]
    fn fanout_needs_splitter() {
        let mut n = Netlist::new();
        let a = n.add_input("a").unwrap();
        let m1 = n.add_cell("m1", "t", CellInstance::new(CellKind::Merger));
        let m2 = n.add_cell("m2", "t", CellInstance::new(CellKind::Merger));
        n.connect(a, m1, 0).unwrap();
        assert!(matches!(
            n.connect(a, m2, 0),
            Err(Error::FanoutViolation(_))
        ));
    }

    #[test]
    fn vcd_and_csv_render() {
        let (n, a, ..) = splitter_net(4);
        let mut sim = Simulator::new(n);
        sim.schedule(PulseEvent::new(0, a)).unwrap();
        let tr = sim.run_until(SimTime(10));
        let vcd = trace_to_vcd(sim.netlist(), &tr);
        assert!(vcd.contains("$var wire 1 ! a $end"));
        assert!(vcd.contains("#4\n1\"\n1#"));
        let csv = trace_to_csv(sim.netlist(), &tr);
        assert_eq!(csv, "time_ps,wire\n0,a\n4,o0\n4,o1\n");
    }
}
