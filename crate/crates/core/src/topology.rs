//! Networks composed of 2×2 routers: destination-tag butterflies and
//! concentrated meshes whose nodes are butterflies.
//!
//! A network is a set of 2×2 elements whose outputs feed other elements or
//! endpoints. Links inside a butterfly are absorbed by the per-column control
//! schedule and take zero epochs. Links between mesh nodes go through
//! retimers that realign packets to an epoch boundary and take
//! `ceil(P / E)` epochs, where `P` is the node's propagation delay.

use std::fmt::Write as _;

use serde::Serialize;

use crate::engine::SimTime;
use crate::error::{Error, Result};
use crate::packet::EpochConfig;
use crate::router::Policy;

/// Area of the reference round-robin router.
pub const ROUTER_JJ_ROUND_ROBIN: u32 = 481;
/// Area of the reference router with randomized round robin.
pub const ROUTER_JJ_RANDOMIZED: u32 = ROUTER_JJ_ROUND_ROBIN + 24;
/// Propagation delay of the reference two-destination router.
pub const REFERENCE_PD_PS: u64 = 213;

pub fn router_jj(policy: Policy) -> u32 {
    match policy {
        Policy::RandomizedRR => ROUTER_JJ_RANDOMIZED,
        _ => ROUTER_JJ_ROUND_ROBIN,
    }
}

/// Router propagation delay for a given control period: the input shift
/// register spans one control period and the rest of the path adds 33 ps.
pub fn router_pd(epoch: &EpochConfig) -> SimTime {
    epoch.control_period() + SimTime(crate::router::netlist::PATH_OVERHEAD_PS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Target {
    Element { id: usize, port: usize },
    Endpoint(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Link {
    pub target: Target,
    pub delay_epochs: u32,
    /// Shift register stages on this link, zero inside a butterfly.
    pub retimer_stages: u32,
}

impl Link {
    fn direct(target: Target) -> Self {
        Link {
            target,
            delay_epochs: 0,
            retimer_stages: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Element {
    pub name: String,
    /// Slots `1..=thr_slot` leave through the top output.
    pub thr_slot: u32,
    /// Column inside its butterfly; control signals are offset by `column * PD`.
    pub column: u32,
    /// Mesh node the element belongs to (0 for a plain butterfly).
    pub node: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TopologyKind {
    Butterfly {
        k: usize,
    },
    Mesh {
        rows: usize,
        cols: usize,
        concentration: usize,
        node_radix: usize,
    },
    Custom,
}

#[derive(Debug, Clone, Serialize)]
pub struct Network {
    pub kind: TopologyKind,
    pub epoch: EpochConfig,
    pub pd: SimTime,
    pub elements: Vec<Element>,
    pub outputs: Vec<[Link; 2]>,
    /// Injection port of each endpoint.
    pub inject: Vec<Option<(usize, usize)>>,
    /// Evaluation order respecting zero-delay links.
    pub order: Vec<usize>,
}

fn log2_exact(k: usize) -> Option<u32> {
    (k >= 2 && k.is_power_of_two()).then(|| k.trailing_zeros())
}

struct Draft {
    elements: Vec<Element>,
    outputs: Vec<[Link; 2]>,
}

impl Draft {
    /// Adds a butterfly whose output port `i` feeds `outs[i]` and carries the
    /// destination slots in `(bounds[i], bounds[i + 1]]`. Returns its input ports.
    fn butterfly(
        &mut self,
        outs: &[Link],
        bounds: &[u32],
        column: u32,
        node: usize,
        prefix: &str,
    ) -> Vec<(usize, usize)> {
        let m = outs.len();
        let half = m / 2;
        let next = (m > 2).then(|| {
            let up = self.butterfly(
                &outs[..half],
                &bounds[..=half],
                column + 1,
                node,
                &format!("{prefix}u"),
            );
            let lo = self.butterfly(
                &outs[half..],
                &bounds[half..],
                column + 1,
                node,
                &format!("{prefix}l"),
            );
            (up, lo)
        });
        let mut inputs = Vec::with_capacity(m);
        for j in 0..half {
            let links = match &next {
                Some((up, lo)) => [
                    Link::direct(Target::Element {
                        id: up[j].0,
                        port: up[j].1,
                    }),
                    Link::direct(Target::Element {
                        id: lo[j].0,
                        port: lo[j].1,
                    }),
                ],
                None => [outs[0], outs[1]],
            };
            let id = self.elements.len();
            self.elements.push(Element {
                name: format!("{prefix}{column}.{j}"),
                thr_slot: bounds[half],
                column,
                node,
            });
            self.outputs.push(links);
            inputs.push((id, 0));
            inputs.push((id, 1));
        }
        inputs
    }
}

impl Network {
    fn finish(
        kind: TopologyKind,
        epoch: EpochConfig,
        pd: SimTime,
        draft: Draft,
        inject: Vec<Option<(usize, usize)>>,
    ) -> Result<Self> {
        let n = draft.elements.len();
        let mut indeg = vec![0usize; n];
        for links in &draft.outputs {
            for l in links {
                if let (Target::Element { id, .. }, 0) = (l.target, l.delay_epochs) {
                    indeg[id] += 1;
                }
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop() {
            order.push(i);
            for l in &draft.outputs[i] {
                if let (Target::Element { id, .. }, 0) = (l.target, l.delay_epochs) {
                    indeg[id] -= 1;
                    if indeg[id] == 0 {
                        ready.push(id);
                    }
                }
            }
        }
        if order.len() != n {
            return Err(Error::InvalidGeometry(
                "zero-delay cycle between elements".into(),
            ));
        }
        Ok(Network {
            kind,
            epoch,
            pd,
            elements: draft.elements,
            outputs: draft.outputs,
            inject,
            order,
        })
    }

    pub fn num_endpoints(&self) -> usize {
        self.inject.len()
    }

    /// Control signal offset of an element.
    pub fn schedule_offset(&self, element: usize) -> SimTime {
        SimTime(u64::from(self.elements[element].column) * self.pd.0)
    }

    pub fn area(&self, policy: Policy) -> AreaManifest {
        let per_router = router_jj(policy);
        let mut retimers = 0u32;
        let mut retimer_jj = 0u32;
        for l in self.outputs.iter().flatten() {
            if l.delay_epochs > 0 {
                retimers += 1;
                retimer_jj += retimer_jj_for(l.retimer_stages);
            }
        }
        let routers = self.elements.len() as u32;
        let router_total = routers * per_router;
        let total = router_total + retimer_jj;
        AreaManifest {
            routers,
            jj_per_router: per_router,
            router_jj: router_total,
            retimers,
            retimer_jj,
            total_jj: total,
            retimer_share: if total == 0 {
                0.0
            } else {
                f64::from(retimer_jj) / f64::from(total)
            },
        }
    }

    /// Graphviz rendering of elements and endpoints.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph network {\n  rankdir=LR;\n");
        for (i, e) in self.elements.iter().enumerate() {
            let _ = writeln!(
                s,
                "  r{i} [shape=box,label=\"{} thr={}\"];",
                e.name, e.thr_slot
            );
        }
        for (ep, inj) in self.inject.iter().enumerate() {
            let _ = writeln!(s, "  e{ep} [shape=circle,label=\"{}\"];", ep + 1);
            if let Some((id, port)) = inj {
                let _ = writeln!(s, "  e{ep} -> r{id} [label=\"in{port}\"];");
            }
        }
        for (i, links) in self.outputs.iter().enumerate() {
            for (p, l) in links.iter().enumerate() {
                let dst = match l.target {
                    Target::Element { id, .. } => format!("r{id}"),
                    Target::Endpoint(e) => format!("e{e}"),
                };
                let style = if l.delay_epochs > 0 {
                    ",style=dashed"
                } else {
                    ""
                };
                let _ = writeln!(
                    s,
                    "  r{i} -> {dst} [label=\"{}\"{style}];",
                    if p == 0 { "top" } else { "bot" }
                );
            }
        }
        s.push_str("}\n");
        s
    }
}

pub fn retimer_jj_for(stages: u32) -> u32 {
    crate::cells::SHIFT_REGISTER_BASE_JJ + crate::cells::SHIFT_REGISTER_JJ_PER_STAGE * stages
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AreaManifest {
    pub routers: u32,
    pub jj_per_router: u32,
    pub router_jj: u32,
    pub retimers: u32,
    pub retimer_jj: u32,
    pub total_jj: u32,
    pub retimer_share: f64,
}

/// `k`-input destination-tag butterfly with `log2 k` columns of `k/2` routers.
pub fn build_butterfly(k: usize, epoch: EpochConfig, pd: SimTime) -> Result<Network> {
    log2_exact(k).ok_or_else(|| {
        Error::InvalidSize(format!("butterfly size {k} is not a power of two >= 2"))
    })?;
    if (epoch.num_destinations as usize) < k {
        return Err(Error::InvalidSize(format!(
            "{k} endpoints need at least {k} destinations, epoch has {}",
            epoch.num_destinations
        )));
    }
    let mut d = Draft {
        elements: Vec::new(),
        outputs: Vec::new(),
    };
    let outs: Vec<Link> = (0..k).map(|e| Link::direct(Target::Endpoint(e))).collect();
    let bounds: Vec<u32> = (0..=k as u32).collect();
    let inputs = d.butterfly(&outs, &bounds, 0, 0, "");
    Network::finish(
        TopologyKind::Butterfly { k },
        epoch,
        pd,
        d,
        inputs.into_iter().map(Some).collect(),
    )
}

/// Epochs a packet needs to cross one mesh node and its retimer, and the
/// retimer length in stages.
pub fn mesh_hop(epoch: &EpochConfig, node_delay: SimTime) -> (u32, u32) {
    let e = epoch.epoch().0.max(1);
    let hops = node_delay.0.div_ceil(e).max(1);
    let slack = hops * e - node_delay.0;
    (hops as u32, slack.div_ceil(epoch.data_spacing.0) as u32)
}

/// `rows × cols` mesh with `concentration` endpoints per node and Y-then-X
/// dimension-order routing. Each node is a butterfly sized to its ports;
/// missing neighbors become loopback links.
pub fn build_mesh(
    rows: usize,
    cols: usize,
    concentration: usize,
    epoch: EpochConfig,
    pd: SimTime,
) -> Result<Network> {
    if rows == 0 || cols == 0 || concentration == 0 || rows * cols < 2 {
        return Err(Error::InvalidGeometry(format!(
            "{rows}x{cols} grid with concentration {concentration}"
        )));
    }
    let endpoints = rows * cols * concentration;
    if (epoch.num_destinations as usize) < endpoints {
        return Err(Error::InvalidGeometry(format!(
            "{endpoints} endpoints need at least {endpoints} destinations, epoch has {}",
            epoch.num_destinations
        )));
    }
    let degree = (rows - 1).min(2) + (cols - 1).min(2);
    let radix = (concentration + degree).next_power_of_two().max(2);
    let depth = radix.trailing_zeros();
    let (hop_epochs, stages) = mesh_hop(&epoch, SimTime(u64::from(depth) * pd.0));

    // Port layout per node: north, west, locals, east, south, padding.
    #[derive(Clone, Copy)]
    enum Role {
        Dir(isize, isize),
        Local(usize),
        Pad,
    }
    let node_of = |r: usize, c: usize| r * cols + c;
    let mut layouts: Vec<Vec<(Role, u32, u32)>> = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let base = node_of(r, c) * concentration;
            let row_start = r * cols * concentration;
            let row_end = row_start + cols * concentration;
            let mut ports = vec![
                (Role::Dir(-1, 0), 0u32, row_start as u32),
                (Role::Dir(0, -1), row_start as u32, base as u32),
            ];
            for j in 0..concentration {
                ports.push((
                    Role::Local(base + j),
                    (base + j) as u32,
                    (base + j + 1) as u32,
                ));
            }
            ports.push((
                Role::Dir(0, 1),
                (base + concentration) as u32,
                row_end as u32,
            ));
            ports.push((Role::Dir(1, 0), row_end as u32, endpoints as u32));
            // A missing neighbor always has an empty interval.
            ports.retain(|p| match p.0 {
                Role::Dir(dr, dc) => {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    nr >= 0 && nc >= 0 && nr < rows as isize && nc < cols as isize
                }
                _ => true,
            });
            while ports.len() < radix {
                ports.push((Role::Pad, endpoints as u32, endpoints as u32));
            }
            if ports.len() > radix {
                return Err(Error::InvalidGeometry("node radix overflow".into()));
            }
            layouts.push(ports);
        }
    }

    // Build each node's butterfly with placeholder outputs, then wire.
    let mut d = Draft {
        elements: Vec::new(),
        outputs: Vec::new(),
    };
    let mut node_inputs = Vec::new();
    let mut node_output_slots = Vec::new();
    for (n, ports) in layouts.iter().enumerate() {
        let mut bounds = vec![ports[0].1];
        bounds.extend(ports.iter().map(|p| p.2));
        let first = d.outputs.len();
        let placeholder: Vec<Link> = (0..radix)
            .map(|i| Link::direct(Target::Endpoint(usize::MAX - i)))
            .collect();
        let inputs = d.butterfly(&placeholder, &bounds, 0, n, &format!("n{n}."));
        let mut slots = vec![(0usize, 0usize); radix];
        for (eid, links) in d.outputs.iter().enumerate().skip(first) {
            for (p, l) in links.iter().enumerate() {
                if let Target::Endpoint(x) = l.target {
                    if x > usize::MAX - radix {
                        slots[usize::MAX - x] = (eid, p);
                    }
                }
            }
        }
        node_inputs.push(inputs);
        node_output_slots.push(slots);
    }
    let port_of_dir = |ports: &[(Role, u32, u32)], dr: isize, dc: isize| {
        ports
            .iter()
            .position(|p| matches!(p.0, Role::Dir(a, b) if a == dr && b == dc))
            .expect("direction port")
    };
    let retimed = |target| Link {
        target,
        delay_epochs: hop_epochs,
        retimer_stages: stages,
    };
    let mut inject = vec![None; endpoints];
    for r in 0..rows {
        for c in 0..cols {
            let n = node_of(r, c);
            for (i, &(role, _, _)) in layouts[n].iter().enumerate() {
                let (eid, p) = node_output_slots[n][i];
                let link = match role {
                    Role::Local(ep) => {
                        let (iid, ip) = node_inputs[n][i];
                        inject[ep] = Some((iid, ip));
                        Link::direct(Target::Endpoint(ep))
                    }
                    Role::Dir(dr, dc) => {
                        let m = node_of((r as isize + dr) as usize, (c as isize + dc) as usize);
                        let back = port_of_dir(&layouts[m], -dr, -dc);
                        let (iid, ip) = node_inputs[m][back];
                        retimed(Target::Element { id: iid, port: ip })
                    }
                    Role::Pad => {
                        let (iid, ip) = node_inputs[n][i];
                        retimed(Target::Element { id: iid, port: ip })
                    }
                };
                d.outputs[eid][p] = link;
            }
        }
    }
    let kind = TopologyKind::Mesh {
        rows,
        cols,
        concentration,
        node_radix: radix,
    };
    Network::finish(kind, epoch, pd, d, inject)
}

/// Two routers arranged so that a packet deflected at `X` bounces through
/// `Y` and returns two epochs later. Endpoint 0 injects at `X` input B and
/// receives `X`'s top output; endpoint 1 injects at `Y` input B and receives
/// `Y`'s bottom output; endpoint 2 only exists as a destination. Both routers
/// send slots 1 to 3 to the top.
pub fn build_bounce_pair(epoch: EpochConfig) -> Result<Network> {
    if epoch.num_destinations < 3 {
        return Err(Error::InvalidSize(
            "bounce pair needs three destinations".into(),
        ));
    }
    let one = |target| Link {
        target,
        delay_epochs: 1,
        retimer_stages: 0,
    };
    let d = Draft {
        elements: vec![
            Element {
                name: "X".into(),
                thr_slot: 3,
                column: 0,
                node: 0,
            },
            Element {
                name: "Y".into(),
                thr_slot: 3,
                column: 0,
                node: 1,
            },
        ],
        outputs: vec![
            [
                Link::direct(Target::Endpoint(0)),
                one(Target::Element { id: 1, port: 0 }),
            ],
            [
                one(Target::Element { id: 0, port: 0 }),
                Link::direct(Target::Endpoint(1)),
            ],
        ],
    };
    let pd = router_pd(&epoch);
    Network::finish(
        TopologyKind::Custom,
        epoch,
        pd,
        d,
        vec![Some((0, 1)), Some((1, 1)), None],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bfly4() -> Network {
        let e = EpochConfig::new(4, 300).unwrap();
        build_butterfly(4, e, router_pd(&e)).unwrap()
    }

    fn element(net: &Network, name: &str) -> usize {
        net.elements.iter().position(|e| e.name == name).unwrap()
    }

    #[test]
    fn butterfly4_shape() {
        let net = bfly4();
        assert_eq!(net.elements.len(), 4);
        assert_eq!(net.area(Policy::RoundRobin).total_jj, 1924);
        let a = net.inject[0].unwrap().0;
        assert_eq!(net.inject[1].unwrap().0, a);
        assert_eq!(net.elements[a].thr_slot, 2);
        let c = element(&net, "u1.0");
        let dd = element(&net, "l1.0");
        assert_eq!(net.elements[c].thr_slot, 1);
        assert_eq!(net.elements[dd].thr_slot, 3);
        // A's top feeds C input A, B's top feeds C input B.
        let b = net.inject[2].unwrap().0;
        assert_eq!(net.outputs[a][0].target, Target::Element { id: c, port: 0 });
        assert_eq!(net.outputs[b][0].target, Target::Element { id: c, port: 1 });
        assert_eq!(net.schedule_offset(c), net.pd);
    }

    #[test]
    fn butterfly_sizes() {
        let e = EpochConfig::new(32, 300).unwrap();
        let net = build_butterfly(32, e, router_pd(&e)).unwrap();
        assert_eq!(net.elements.len(), 16 * 5);
        assert!(build_butterfly(6, e, router_pd(&e)).is_err());
        assert!(build_butterfly(1, e, router_pd(&e)).is_err());
    }

    #[test]
    fn fig_mesh_geometry() {
        let e = EpochConfig::new(8, 300).unwrap();
        let net = build_mesh(2, 2, 2, e, router_pd(&e)).unwrap();
        assert_eq!(net.num_endpoints(), 8);
        assert_eq!(net.elements.len(), 16);
        let area = net.area(Policy::RoundRobin);
        assert_eq!(area.router_jj, 4 * 1924);
        assert_eq!(area.retimers, 8);
    }

    #[test]
    fn mesh_hop_formula() {
        // E = 840, P = 2 * 573: two epochs per hop, 534 ps of retiming.
        let e = EpochConfig::new(8, 300).unwrap();
        assert_eq!(mesh_hop(&e, SimTime(1146)), (2, 36));
        // E > P: one epoch, (E - P) / SP stages.
        let e = EpochConfig::new(8, 1500).unwrap();
        assert_eq!(
            mesh_hop(&e, SimTime(426)),
            (1, (2040 - 426u32).div_ceil(15))
        );
    }

    #[test]
    fn mesh_7912_closest_configuration() {
        // 4 nodes of 1924 leave 216 JJ, i.e. eight retimers of 17 stages.
        let e = EpochConfig::new(8, 855).unwrap();
        let net = build_mesh(2, 2, 2, e, router_pd(&e)).unwrap();
        assert_eq!(net.area(Policy::RoundRobin).total_jj, 7912);
    }

    #[test]
    fn cmesh32_builds() {
        let e = EpochConfig::new(32, 300).unwrap();
        let net = build_mesh(4, 4, 2, e, router_pd(&e)).unwrap();
        assert_eq!(net.num_endpoints(), 32);
        assert_eq!(net.elements.len(), 16 * 12);
        assert!(matches!(net.kind, TopologyKind::Mesh { node_radix: 8, .. }));
        assert!(net.to_dot().starts_with("digraph"));
    }

    #[test]
    fn invalid_geometry() {
        let e = EpochConfig::new(8, 300).unwrap();
        assert!(build_mesh(1, 1, 2, e, SimTime(213)).is_err());
        assert!(build_mesh(4, 4, 2, e, SimTime(213)).is_err());
    }
}
