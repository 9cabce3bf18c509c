//! Differential testing of the cell-level router against the behavioral model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::packet::Packet;

use super::netlist::{run_netlist_epochs, EpochInput};
use super::{Router, RouterConfig};

#[derive(Debug, Clone, Serialize)]
pub struct EpochMismatch {
    pub sequence: usize,
    pub epoch: usize,
    pub netlist: (Option<Packet>, Option<Packet>),
    pub behavioral: (Option<Packet>, Option<Packet>),
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CrossvalReport {
    pub sequences: usize,
    pub epochs: usize,
    pub mismatches: Vec<EpochMismatch>,
}

impl CrossvalReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Runs every sequence through both models, each from a reset state.
pub fn crossvalidate(cfg: &RouterConfig, sequences: &[Vec<EpochInput>]) -> Result<CrossvalReport> {
    let mut report = CrossvalReport::default();
    for (si, seq) in sequences.iter().enumerate() {
        if seq.is_empty() {
            report.sequences += 1;
            continue;
        }
        let net = run_netlist_epochs(cfg, seq)?;
        let mut router = Router::new(*cfg);
        for (k, inp) in seq.iter().enumerate() {
            let out = router.route_epoch(inp.a.as_ref(), inp.b.as_ref(), inp.rand_bit);
            let beh = (out.top, out.bottom);
            if net.outputs[k] != beh {
                report.mismatches.push(EpochMismatch {
                    sequence: si,
                    epoch: k,
                    netlist: net.outputs[k].clone(),
                    behavioral: beh,
                });
            }
        }
        report.sequences += 1;
        report.epochs += seq.len();
    }
    Ok(report)
}

/// Every pair of (absent or any destination) inputs, once from each
/// round-robin phase. The phase is primed by a leading conflict epoch.
pub fn exhaustive_single_epoch(cfg: &RouterConfig) -> Vec<Vec<EpochInput>> {
    let d = cfg.epoch.num_destinations;
    let n = cfg.epoch.n_data_slots();
    let choices: Vec<Option<u32>> = std::iter::once(None).chain((1..=d).map(Some)).collect();
    let payload_a: Vec<u32> = [1, 3, n]
        .into_iter()
        .filter(|&s| s >= 1 && s <= n)
        .collect();
    let payload_b: Vec<u32> = [2, n / 2]
        .into_iter()
        .filter(|&s| s >= 1 && s <= n)
        .collect();
    let mut out = Vec::new();
    for primed in [false, true] {
        for &da in &choices {
            for &db in &choices {
                let mut seq = Vec::new();
                if primed {
                    let p = Packet::new(1, []);
                    seq.push(EpochInput {
                        a: Some(p.clone()),
                        b: Some(p),
                        rand_bit: Some(false),
                    });
                }
                seq.push(EpochInput {
                    a: da.map(|d| Packet::new(d, payload_a.iter().copied())),
                    b: db.map(|d| Packet::new(d, payload_b.iter().copied())),
                    rand_bit: Some(false),
                });
                out.push(seq);
            }
        }
    }
    out
}

/// One seeded sequence of random epochs with random payloads.
pub fn random_epochs(cfg: &RouterConfig, epochs: usize, seed: u64) -> Vec<EpochInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.epoch.num_destinations;
    let n = cfg.epoch.n_data_slots();
    let pkt = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.75) {
            let data: Vec<u32> = (1..=n).filter(|_| rng.gen_bool(0.3)).collect();
            Some(Packet::new(rng.gen_range(1..=d), data))
        } else {
            None
        }
    };
    (0..epochs)
        .map(|_| {
            let a = pkt(&mut rng);
            let b = pkt(&mut rng);
            EpochInput {
                a,
                b,
                rand_bit: Some(rng.gen_bool(0.25)),
            }
        })
        .collect()
}
