//! Cell-level 2×2 router.
//!
//! Each input is split into a front-end copy, which reaches the arbitration
//! logic within the first control period, and a shift-register copy delayed
//! by one control period, which carries the packet through the crossbar.
//! Arbitration runs on the front-end copies:
//!
//! * `P`, a DFF2 loaded at `E1`, passes the first arriving control pulse to
//!   the A-first or B-first side.
//! * Four window NDROs classify that pulse as before or after `Thr`; the base
//!   setting S1/S2 is latched in one of two storage cells.
//! * The conflict detector (clocked AND plus TFF) emits `C` every second
//!   conflict, which moves the latched token to the opposite setting.
//! * `E3` reads the token out into S1 or S2 after `XR` has cleared the
//!   crossbar, so the crossbar is configured before the delayed control
//!   pulse reaches it.
//!
//! Every input-to-output path has the same delay, `control period + 33` ps.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::cells::{CellInstance, CellKind, ShiftRegisterParams};
use crate::engine::{CellId, Driver, Netlist, PulseEvent, SimTime, Simulator, WireId};
use crate::error::{Error, Result};
use crate::packet::{decode_packet, encode_packet, Packet};

use super::{Policy, RouterConfig};

pub const MOD_CONFLICT: &str = "conflict_detection";
pub const MOD_STAGE1: &str = "routing_stage1";
pub const MOD_STAGE2: &str = "routing_stage2";
pub const MOD_CROSSBAR: &str = "crossbar";
pub const MOD_RESETTABLE_LA: &str = "resettable_la";
pub const MOD_SHIFT: &str = "shift_registers";
pub const MOD_MISC: &str = "misc";
pub const MOD_RANDOM: &str = "randomization";

/// Reference area budget of the round-robin router, per module.
pub const REFERENCE_MODULE_JJ: [(&str, u32); 7] = [
    (MOD_CONFLICT, 27),
    (MOD_STAGE1, 87),
    (MOD_STAGE2, 91),
    (MOD_CROSSBAR, 89),
    (MOD_RESETTABLE_LA, 34),
    (MOD_SHIFT, 44),
    (MOD_MISC, 109),
];
pub const RANDOMIZATION_JJ: u32 = 24;

/// Fixed part of the in-to-out delay on top of one control period.
pub const PATH_OVERHEAD_PS: u64 = 33;
const SR_CLOCK_TO_OUT: u64 = 12;
const OUTPUT_MERGER_DELAY: u64 = 5;
const XBAR_SPLIT_DELAY: u64 = 4;
const FRONT_SPLIT_A: u64 = 4;
/// One extra picosecond on B so simultaneous control pulses resolve to A.
const FRONT_SPLIT_B: u64 = 5;

/// Offsets of the router's schedule wires from the epoch start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NetlistSchedule {
    pub e1: SimTime,
    pub thr: SimTime,
    pub e2: SimTime,
    /// Crossbar reset, after the previous epoch's last pulse has passed.
    pub xr: SimTime,
    /// Readout of the latched decision into S1/S2.
    pub e3: SimTime,
    pub rand_load: SimTime,
    pub rand_gate_reset: SimTime,
    pub rand_pulse: SimTime,
    pub rand_sample: SimTime,
}

impl NetlistSchedule {
    pub fn for_config(cfg: &RouterConfig) -> Self {
        let s = cfg.schedule();
        let cp = cfg.epoch.control_period();
        NetlistSchedule {
            e1: s.e1,
            thr: s.thr,
            e2: s.e2,
            xr: cp + SimTime(6),
            e3: cp + SimTime(10),
            rand_load: SimTime(0),
            rand_gate_reset: SimTime(1),
            rand_pulse: SimTime(5),
            rand_sample: SimTime(15),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Ports {
    a: WireId,
    b: WireId,
    e1: WireId,
    thr: WireId,
    e2: WireId,
    xr: WireId,
    e3: WireId,
    rand: Option<RandPorts>,
    top: WireId,
    bottom: WireId,
}

#[derive(Debug, Clone, Copy)]
struct RandPorts {
    load: WireId,
    gate_reset: WireId,
    pulse: WireId,
    sample: WireId,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModuleJj {
    pub module: String,
    /// Junctions in modelled cells.
    pub cells: u32,
    /// Budget not represented by cells (interconnect, bias and the control
    /// regeneration cells that this arbitration scheme does not need).
    pub allowance: u32,
}

impl ModuleJj {
    pub fn total(&self) -> u32 {
        self.cells + self.allowance
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JjReport {
    pub policy: Policy,
    pub modules: Vec<ModuleJj>,
}

impl JjReport {
    pub fn total(&self) -> u32 {
        self.modules.iter().map(ModuleJj::total).sum()
    }

    pub fn cells_total(&self) -> u32 {
        self.modules.iter().map(|m| m.cells).sum()
    }

    pub fn module(&self, name: &str) -> Option<&ModuleJj> {
        self.modules.iter().find(|m| m.module == name)
    }
}

struct Builder {
    nl: Netlist,
    counter: u32,
}

impl Builder {
    fn cell(&mut self, name: &str, module: &'static str, cell: CellInstance) -> CellId {
        self.nl.add_cell(name, module, cell)
    }

    fn kind(&mut self, name: &str, module: &'static str, kind: CellKind) -> CellId {
        self.cell(name, module, CellInstance::new(kind))
    }

    fn out(&mut self, c: CellId, port: u8, name: &str) -> Result<WireId> {
        self.nl.output(c, port, name)
    }

    fn conn(&mut self, w: WireId, c: CellId, port: u8) -> Result<()> {
        self.nl.connect(w, c, port)
    }

    /// Balanced splitter tree giving `n` copies of `w`.
    fn fanout(&mut self, w: WireId, n: usize, module: &'static str) -> Result<Vec<WireId>> {
        if n <= 1 {
            return Ok(vec![w]);
        }
        self.counter += 1;
        let base = format!("{}_s{}", self.nl.wire_name(w), self.counter);
        let s = self.kind(&base, module, CellKind::Splitter);
        self.conn(w, s, 0)?;
        let l = self.out(s, 0, &format!("{base}a"))?;
        let r = self.out(s, 1, &format!("{base}b"))?;
        let mut left = self.fanout(l, n.div_ceil(2), module)?;
        left.extend(self.fanout(r, n / 2, module)?);
        Ok(left)
    }

    fn merge(&mut self, name: &str, module: &'static str, x: WireId, y: WireId) -> Result<WireId> {
        let m = self.kind(name, module, CellKind::Merger);
        self.conn(x, m, 0)?;
        self.conn(y, m, 1)?;
        self.out(m, 0, name)
    }
}

/// A built router netlist together with its port map and schedule.
#[derive(Debug, Clone)]
pub struct RouterNetlist {
    pub cfg: RouterConfig,
    pub netlist: Netlist,
    pub schedule: NetlistSchedule,
    ports: Ports,
}

pub fn build_router_netlist(cfg: &RouterConfig) -> Result<RouterNetlist> {
    cfg.epoch.validate()?;
    let d = cfg.epoch.num_destinations;
    if d < 2 || cfg.thr_slot < 1 || cfg.thr_slot >= d {
        return Err(Error::InvalidEpochConfig(format!(
            "cell-level router needs 1 <= thr_slot < D, got thr_slot {} with D = {d}",
            cfg.thr_slot
        )));
    }
    let rr = cfg.policy != Policy::FixedPriority;
    let mut b = Builder {
        nl: Netlist::new(),
        counter: 0,
    };

    let a_in = b.nl.add_input("A")?;
    let b_in = b.nl.add_input("B")?;
    let e1 = b.nl.add_input("E1")?;
    let thr = b.nl.add_input("THR")?;
    let e2 = b.nl.add_input("E2")?;
    let xr = b.nl.add_input("XR")?;
    let e3 = b.nl.add_input("E3")?;

    // Front end.
    let sfa = b.cell(
        "front_split_a",
        MOD_MISC,
        CellInstance::with_delay(CellKind::Splitter, SimTime(FRONT_SPLIT_A)),
    );
    let sfb = b.cell(
        "front_split_b",
        MOD_MISC,
        CellInstance::with_delay(CellKind::Splitter, SimTime(FRONT_SPLIT_B)),
    );
    b.conn(a_in, sfa, 0)?;
    b.conn(b_in, sfb, 0)?;
    let a_sr = b.out(sfa, 0, "a_sr")?;
    let a_f = b.out(sfa, 1, "a_f")?;
    let b_sr = b.out(sfb, 0, "b_sr")?;
    let b_f = b.out(sfb, 1, "b_f")?;

    let e1s = b.fanout(e1, 5, MOD_MISC)?;
    let thrs = b.fanout(thr, if rr { 5 } else { 4 }, MOD_MISC)?;
    let e2s = b.fanout(e2, if rr { 3 } else { 2 }, MOD_MISC)?;

    let dfa = b.kind("first_a", MOD_MISC, CellKind::Dff);
    let dfb = b.kind("first_b", MOD_MISC, CellKind::Dff);
    b.conn(e1s[0], dfa, 0)?;
    b.conn(a_f, dfa, 1)?;
    b.conn(e1s[1], dfb, 0)?;
    b.conn(b_f, dfb, 1)?;
    let a1st = b.out(dfa, 0, "a1st")?;
    let b1st = b.out(dfb, 0, "b1st")?;

    // Input shift registers, one control period long.
    let stages = cfg.input_delay_stages();
    let period = cfg.epoch.data_spacing;
    let mk_sr = |phase: u64| {
        CellInstance::shift_register(
            ShiftRegisterParams {
                stages,
                period,
                phase: SimTime(phase % period.0),
            },
            SimTime(SR_CLOCK_TO_OUT),
        )
    };
    let sra = b.cell("sr_a", MOD_SHIFT, mk_sr(FRONT_SPLIT_A));
    let srb = b.cell("sr_b", MOD_SHIFT, mk_sr(FRONT_SPLIT_B));
    b.conn(a_sr, sra, 0)?;
    b.conn(b_sr, srb, 0)?;
    let am = b.out(sra, 0, "Am")?;
    let bm = b.out(srb, 0, "Bm")?;

    // Conflict detection.
    let mut rand_ports = None;
    let (a_p, b_p, c) = if rr {
        let sca = b.kind("cd_split_a", MOD_CONFLICT, CellKind::Splitter);
        let scb = b.kind("cd_split_b", MOD_CONFLICT, CellKind::Splitter);
        b.conn(a1st, sca, 0)?;
        b.conn(b1st, scb, 0)?;
        let a_and = b.out(sca, 0, "a1_and")?;
        let a_p = b.out(sca, 1, "a1_p")?;
        let b_and = b.out(scb, 0, "b1_and")?;
        let b_p = b.out(scb, 1, "b1_p")?;
        let clk = b.merge("and_clk", MOD_MISC, thrs[4], e2s[2])?;
        let and = b.kind("cd_and", MOD_CONFLICT, CellKind::AndClocked);
        b.conn(a_and, and, 0)?;
        b.conn(b_and, and, 1)?;
        b.conn(clk, and, 2)?;
        let conflict = b.out(and, 0, "conflict")?;
        let tff = b.kind("cd_tff", MOD_CONFLICT, CellKind::Tff);
        let randomized = cfg.policy == Policy::RandomizedRR;
        let c_raw = b.out(tff, 1, if randomized { "C_raw" } else { "C" })?;
        let c = if randomized {
            let load = b.nl.add_input("RL")?;
            let gate_reset = b.nl.add_input("RC")?;
            let pulse = b.nl.add_input("R")?;
            let sample = b.nl.add_input("RS")?;
            rand_ports = Some(RandPorts {
                load,
                gate_reset,
                pulse,
                sample,
            });
            let tok = b.kind("rand_token", MOD_RANDOM, CellKind::Dff2);
            b.conn(load, tok, 0)?;
            b.conn(pulse, tok, 1)?;
            b.conn(sample, tok, 2)?;
            let y_toggle = b.out(tok, 0, "rand_toggle")?;
            let y_keep = b.out(tok, 1, "rand_keep")?;
            let tin = b.merge("rand_tff_in", MOD_RANDOM, conflict, y_toggle)?;
            b.conn(tin, tff, 0)?;
            let gate = b.kind("rand_gate", MOD_RANDOM, CellKind::Ndro);
            b.conn(c_raw, gate, 0)?;
            b.conn(y_keep, gate, 1)?;
            b.conn(gate_reset, gate, 2)?;
            b.out(gate, 0, "C")?
        } else {
            b.conn(conflict, tff, 0)?;
            c_raw
        };
        (a_p, b_p, Some(c))
    } else {
        (a1st, b1st, None)
    };

    // First-arrival arbitration.
    let p = b.kind("first_token", MOD_STAGE2, CellKind::Dff2);
    b.conn(e1s[2], p, 0)?;
    b.conn(a_p, p, 1)?;
    b.conn(b_p, p, 2)?;
    let fa = b.out(p, 0, "A_first")?;
    let fb = b.out(p, 1, "B_first")?;
    let fas = b.fanout(fa, 2, MOD_STAGE2)?;
    let fbs = b.fanout(fb, 2, MOD_STAGE2)?;
    let window =
        |b: &mut Builder, name: &str, clk: WireId, set: WireId, reset: WireId| -> Result<WireId> {
            let n = b.kind(name, MOD_STAGE2, CellKind::Ndro);
            b.conn(clk, n, 0)?;
            b.conn(set, n, 1)?;
            b.conn(reset, n, 2)?;
            b.out(n, 0, &format!("{name}_out"))
        };
    let ae = window(&mut b, "win_a_early", fas[0], e1s[3], thrs[0])?;
    let al = window(&mut b, "win_a_late", fas[1], thrs[1], e2s[0])?;
    let be = window(&mut b, "win_b_early", fbs[0], e1s[4], thrs[2])?;
    let bl = window(&mut b, "win_b_late", fbs[1], thrs[3], e2s[1])?;
    let x1 = b.merge("base_s1", MOD_STAGE2, ae, bl)?;
    let x2 = b.merge("base_s2", MOD_STAGE2, al, be)?;

    // Decision latch and round-robin flip.
    let (s1, s2) = if let Some(c) = c {
        let e3s = b.fanout(e3, 4, MOD_STAGE1)?;
        let cs = b.fanout(c, 2, MOD_STAGE1)?;
        let q1 = b.kind("latch_s1", MOD_STAGE1, CellKind::Dff2);
        let q2 = b.kind("latch_s2", MOD_STAGE1, CellKind::Dff2);
        for (q, x, i) in [(q1, x1, 0), (q2, x2, 1)] {
            b.conn(x, q, 0)?;
            b.conn(e3s[i], q, 1)?;
            b.conn(cs[i], q, 2)?;
        }
        let q1_o = b.out(q1, 0, "latch_s1_keep")?;
        let q1_x = b.out(q1, 1, "latch_s1_flip")?;
        let q2_o = b.out(q2, 0, "latch_s2_keep")?;
        let q2_x = b.out(q2, 1, "latch_s2_flip")?;
        let f1 = b.kind("flipped_s1", MOD_STAGE1, CellKind::Dff);
        let f2 = b.kind("flipped_s2", MOD_STAGE1, CellKind::Dff);
        b.conn(q1_x, f1, 0)?;
        b.conn(e3s[2], f1, 1)?;
        b.conn(q2_x, f2, 0)?;
        b.conn(e3s[3], f2, 1)?;
        let f1_o = b.out(f1, 0, "flipped_s1_out")?;
        let f2_o = b.out(f2, 0, "flipped_s2_out")?;
        // A flipped S1 token becomes S2 and vice versa.
        let s1 = b.merge("S1", MOD_STAGE1, q1_o, f2_o)?;
        let s2 = b.merge("S2", MOD_STAGE1, q2_o, f1_o)?;
        (s1, s2)
    } else {
        let e3s = b.fanout(e3, 2, MOD_STAGE2)?;
        let q1 = b.kind("latch_s1", MOD_STAGE2, CellKind::Dff);
        let q2 = b.kind("latch_s2", MOD_STAGE2, CellKind::Dff);
        b.conn(x1, q1, 0)?;
        b.conn(e3s[0], q1, 1)?;
        b.conn(x2, q2, 0)?;
        b.conn(e3s[1], q2, 1)?;
        (b.out(q1, 0, "S1")?, b.out(q2, 0, "S2")?)
    };

    // Data crossbar.
    let ams = b.fanout(am, 2, MOD_CROSSBAR)?;
    let bms = b.fanout(bm, 2, MOD_CROSSBAR)?;
    let s1s = b.fanout(s1, 2, MOD_CROSSBAR)?;
    let s2s = b.fanout(s2, 2, MOD_CROSSBAR)?;
    let xrs = b.fanout(xr, 4, MOD_CROSSBAR)?;
    let cp = cfg.epoch.control_period().0;
    let fixed = SR_CLOCK_TO_OUT + XBAR_SPLIT_DELAY + OUTPUT_MERGER_DELAY;
    let pd = cp + PATH_OVERHEAD_PS;
    let ndro_a = pd - cp - fixed - FRONT_SPLIT_A;
    let ndro_b = pd - cp - fixed - FRONT_SPLIT_B;
    let xpoint = |b: &mut Builder, name: &str, clk, set, reset, delay| -> Result<WireId> {
        let n = b.cell(
            name,
            MOD_CROSSBAR,
            CellInstance::with_delay(CellKind::Ndro, SimTime(delay)),
        );
        b.conn(clk, n, 0)?;
        b.conn(set, n, 1)?;
        b.conn(reset, n, 2)?;
        b.out(n, 0, &format!("{name}_out"))
    };
    let a_top = xpoint(&mut b, "x_a_top", ams[0], s1s[0], xrs[0], ndro_a)?;
    let a_bot = xpoint(&mut b, "x_a_bot", ams[1], s2s[0], xrs[1], ndro_a)?;
    let b_top = xpoint(&mut b, "x_b_top", bms[0], s2s[1], xrs[2], ndro_b)?;
    let b_bot = xpoint(&mut b, "x_b_bot", bms[1], s1s[1], xrs[3], ndro_b)?;
    let top = b.merge("OUT_TOP", MOD_CROSSBAR, a_top, b_top)?;
    let bottom = b.merge("OUT_BOTTOM", MOD_CROSSBAR, a_bot, b_bot)?;

    let mut nl = b.nl;
    for w in [a_in, b_in, top, bottom] {
        nl.probe(w);
    }
    for name in ["S1", "S2", "C"] {
        if let Ok(w) = nl.wire(name) {
            nl.probe(w);
        }
    }
    Ok(RouterNetlist {
        cfg: *cfg,
        netlist: nl,
        schedule: NetlistSchedule::for_config(cfg),
        ports: Ports {
            a: a_in,
            b: b_in,
            e1,
            thr,
            e2,
            xr,
            e3,
            rand: rand_ports,
            top,
            bottom,
        },
    })
}

impl RouterNetlist {
    /// In-to-out delay of every packet pulse.
    pub fn propagation_delay(&self) -> SimTime {
        self.cfg.epoch.control_period() + SimTime(PATH_OVERHEAD_PS)
    }

    pub fn jj_report(&self) -> Result<JjReport> {
        let measured = self.netlist.jj_by_module();
        let mut modules = Vec::new();
        for (name, budget) in REFERENCE_MODULE_JJ {
            let skip = self.cfg.policy == Policy::FixedPriority
                && (name == MOD_CONFLICT || name == MOD_STAGE1);
            if skip {
                continue;
            }
            let cells = measured.get(name).copied().unwrap_or(0);
            if cells > budget {
                return Err(Error::InvalidGeometry(format!(
                    "module {name} uses {cells} JJ, above its {budget} JJ budget"
                )));
            }
            modules.push(ModuleJj {
                module: name.to_string(),
                cells,
                allowance: budget - cells,
            });
        }
        if let Some(&cells) = measured.get(MOD_RANDOM) {
            modules.push(ModuleJj {
                module: MOD_RANDOM.to_string(),
                cells,
                allowance: RANDOMIZATION_JJ.saturating_sub(cells),
            });
        }
        Ok(JjReport {
            policy: self.cfg.policy,
            modules,
        })
    }

    /// Stimulus for one epoch starting at `start`.
    pub fn epoch_stimulus(
        &self,
        start: SimTime,
        a: Option<&Packet>,
        b: Option<&Packet>,
        rand_bit: Option<bool>,
    ) -> Result<Vec<PulseEvent>> {
        let s = &self.schedule;
        let p = &self.ports;
        let ev = |off: SimTime, w| PulseEvent {
            time: start + off,
            wire: w,
        };
        let mut out = vec![
            ev(s.e1, p.e1),
            ev(s.thr, p.thr),
            ev(s.e2, p.e2),
            ev(s.xr, p.xr),
            ev(s.e3, p.e3),
        ];
        if let Some(r) = p.rand {
            out.push(ev(s.rand_load, r.load));
            out.push(ev(s.rand_gate_reset, r.gate_reset));
            out.push(ev(s.rand_sample, r.sample));
            if rand_bit == Some(true) {
                out.push(ev(s.rand_pulse, r.pulse));
            }
        }
        for (pkt, w) in [(a, p.a), (b, p.b)] {
            if let Some(pkt) = pkt {
                for t in encode_packet(&self.cfg.epoch, pkt, start)? {
                    out.push(PulseEvent { time: t, wire: w });
                }
            }
        }
        Ok(out)
    }

    pub fn output_wires(&self) -> (WireId, WireId) {
        (self.ports.top, self.ports.bottom)
    }

    /// Longest cell-delay path inside each module.
    pub fn module_delays(&self) -> BTreeMap<&'static str, SimTime> {
        module_delays(&self.netlist)
    }
}

/// Longest path through each module, counting only wires whose driver and
/// sink belong to the same module. Shift registers count their full delay.
pub fn module_delays(nl: &Netlist) -> BTreeMap<&'static str, SimTime> {
    let cells = nl.cells();
    let own = |i: usize| {
        let c = &cells[i].cell;
        match c.shift_register_params() {
            Some(p) => c.delay.0 + u64::from(p.stages) * p.period.0,
            None => c.delay.0,
        }
    };
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); cells.len()];
    for w in nl.wires() {
        if let (Driver::Cell(src, _), Some((dst, _))) = (w.driver, w.sink) {
            let (s, d) = (src.0 as usize, dst.0 as usize);
            if cells[s].module == cells[d].module {
                succ[s].push(d);
            }
        }
    }
    fn longest(
        i: usize,
        succ: &[Vec<usize>],
        own: &dyn Fn(usize) -> u64,
        memo: &mut HashMap<usize, u64>,
    ) -> u64 {
        if let Some(&v) = memo.get(&i) {
            return v;
        }
        let tail = succ[i]
            .iter()
            .map(|&j| longest(j, succ, own, memo))
            .max()
            .unwrap_or(0);
        let v = own(i) + tail;
        memo.insert(i, v);
        v
    }
    let mut memo = HashMap::new();
    let mut out: BTreeMap<&'static str, SimTime> = BTreeMap::new();
    for (i, cell) in cells.iter().enumerate() {
        let v = longest(i, &succ, &own, &mut memo);
        let e = out.entry(cell.module).or_insert(SimTime::ZERO);
        if v > e.0 {
            *e = SimTime(v);
        }
    }
    out
}

/// Input of one epoch in a netlist run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EpochInput {
    pub a: Option<Packet>,
    pub b: Option<Packet>,
    pub rand_bit: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct NetlistRun {
    /// `(top, bottom)` packets per epoch.
    pub outputs: Vec<(Option<Packet>, Option<Packet>)>,
    pub trace: Vec<PulseEvent>,
    pub netlist: Netlist,
}

/// Simulates consecutive epochs on a fresh netlist and decodes the outputs.
pub fn run_netlist_epochs(cfg: &RouterConfig, epochs: &[EpochInput]) -> Result<NetlistRun> {
    let rn = build_router_netlist(cfg)?;
    let e = cfg.epoch.epoch();
    let pd = rn.propagation_delay();
    let mut events = Vec::new();
    for (k, inp) in epochs.iter().enumerate() {
        let start = SimTime(k as u64 * e.0);
        events.extend(rn.epoch_stimulus(start, inp.a.as_ref(), inp.b.as_ref(), inp.rand_bit)?);
    }
    let (top_w, bot_w) = rn.output_wires();
    let mut sim = Simulator::new(rn.netlist.clone());
    for ev in events {
        sim.schedule(ev)?;
    }
    let end = SimTime(epochs.len() as u64 * e.0) + pd + e;
    let trace = sim.run_until(end);
    let n = epochs.len();
    let mut buckets: Vec<[Vec<SimTime>; 2]> = vec![[Vec::new(), Vec::new()]; n];
    for ev in &trace {
        let side = if ev.wire == top_w {
            0
        } else if ev.wire == bot_w {
            1
        } else {
            continue;
        };
        let k = ((ev.time.0.saturating_sub(pd.0)) / e.0) as usize;
        if ev.time < pd || k >= n {
            return Err(Error::SlotOutOfRange { slot: 0, max: 0 });
        }
        buckets[k][side].push(ev.time);
    }
    let mut outputs = Vec::with_capacity(n);
    for (k, [top, bot]) in buckets.into_iter().enumerate() {
        let start = SimTime(k as u64 * e.0) + pd;
        let dec = |v: Vec<SimTime>| -> Result<Option<Packet>> {
            if v.is_empty() {
                Ok(None)
            } else {
                decode_packet(&cfg.epoch, &v, start).map(Some)
            }
        };
        outputs.push((dec(top)?, dec(bot)?));
    }
    Ok(NetlistRun {
        outputs,
        trace,
        netlist: sim.into_netlist(),
    })
}
