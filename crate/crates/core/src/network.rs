//! Typed network graph and the constant matrices of the DAE model.
//!
//! Nodes are partitioned into junctions, tanks and reservoirs; links into
//! pipes and pumps. Every partition keeps the order in which elements were
//! given, and that order defines the rows/columns of [`DaeMatrices`].

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydraulics::{HeadlossFormula, ResistanceSpec};
use crate::sparse::CsrMatrix;
use crate::units::FlowUnit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("link `{link}` references unknown node `{node}`")]
    DanglingReference { link: String, node: String },
    #[error("demand pattern references unknown junction `{0}`")]
    UnknownDemandNode(String),
    #[error("`{id}`: invalid {field}: {reason}")]
    InvariantViolation {
        id: String,
        field: &'static str,
        reason: String,
    },
    #[error("time step must be positive, got {0}")]
    NonPositiveTimeStep(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tank {
    /// Cross-sectional area (ft²).
    pub area: f64,
    pub initial_head: f64,
    pub head_min: f64,
    pub head_max: f64,
    /// Head below which the safety objective is active.
    pub safety_head: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Junction { demand_pattern_id: Option<String> },
    Tank(Tank),
    Reservoir { head: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    /// Elevation (ft). For junctions this is also the lower head bound.
    pub elevation: f64,
    pub kind: NodeKind,
}

impl Node {
    pub fn junction(id: impl Into<String>, elevation: f64) -> Self {
        Node {
            id: id.into(),
            elevation,
            kind: NodeKind::Junction {
                demand_pattern_id: None,
            },
        }
    }

    pub fn reservoir(id: impl Into<String>, head: f64) -> Self {
        Node {
            id: id.into(),
            elevation: head,
            kind: NodeKind::Reservoir { head },
        }
    }

    pub fn tank(id: impl Into<String>, elevation: f64, tank: Tank) -> Self {
        Node {
            id: id.into(),
            elevation,
            kind: NodeKind::Tank(tank),
        }
    }
}

/// Pump head curve `gain = s²(h0 − r (q/s)^ν)`, with `q` expressed in
/// `flow_unit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpCurve {
    pub shutoff_head: f64,
    pub coefficient: f64,
    pub exponent: f64,
    pub flow_unit: FlowUnit,
}

impl PumpCurve {
    /// Curve coefficient `r` for flows given in `unit`.
    pub fn coefficient_in(&self, unit: FlowUnit) -> f64 {
        // r_a q_a^ν = r_b q_b^ν with q_a = q_b * (b per a)
        let ratio = unit.cfs_per_unit() / self.flow_unit.cfs_per_unit();
        self.coefficient * ratio.powf(self.exponent)
    }

    pub fn coefficient_cfs(&self) -> f64 {
        self.coefficient_in(FlowUnit::Cfs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LinkKind {
    Pipe(ResistanceSpec),
    Pump(PumpCurve),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: String,
    pub from: String,
    pub to: String,
    pub kind: LinkKind,
    /// Flow bounds in cfs, positive along `from -> to`.
    pub flow_min: f64,
    pub flow_max: f64,
}

impl Link {
    pub fn pipe(
        id: impl Into<String>,
        from: impl Into<String>,
        to: impl Into<String>,
        spec: ResistanceSpec,
        flow_bound: f64,
    ) -> Self {
        Link {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            kind: LinkKind::Pipe(spec),
            flow_min: -flow_bound,
            flow_max: flow_bound,
        }
    }

    pub fn pump(
        id: impl Into<String>,
        from: impl Into<String>,
        to: impl Into<String>,
        curve: PumpCurve,
        flow_max: f64,
    ) -> Self {
        Link {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            kind: LinkKind::Pump(curve),
            flow_min: 0.0,
            flow_max,
        }
    }
}

/// Per-junction demand series in cfs, one value per sampling step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DemandPattern {
    pub series: BTreeMap<String, Vec<f64>>,
}

impl DemandPattern {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, junction: impl Into<String>, values: Vec<f64>) {
        self.series.insert(junction.into(), values);
    }

    /// Common series length, or `None` when the lengths disagree.
    pub fn len(&self) -> Option<usize> {
        let mut lens = self.series.values().map(Vec::len);
        match lens.next() {
            None => Some(0),
            Some(first) => lens.all(|l| l == first).then_some(first),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeClass {
    Junction,
    Tank,
    Reservoir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkClass {
    Pipe,
    Pump,
}

/// Problems reported by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    /// The node is not connected to any fixed-head source (tank or reservoir).
    UnreachableNode(String),
    /// The graph has more than one connected component.
    Disconnected { components: usize },
    InvariantViolation {
        id: String,
        field: &'static str,
        reason: String,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UnreachableNode(id) => write!(f, "node `{id}` is not reachable from any tank or reservoir"),
            Diagnostic::Disconnected { components } => {
                write!(f, "network has {components} connected components")
            }
            Diagnostic::InvariantViolation { id, field, reason } => {
                write!(f, "`{id}`: invalid {field}: {reason}")
            }
        }
    }
}

/// A structurally sound network: ids are unique and every reference resolves.
///
/// Use [`build_network`] to also enforce the physical invariants.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<Node>,
    links: Vec<Link>,
    node_index: HashMap<String, usize>,
    link_index: HashMap<String, usize>,
    junctions: Vec<usize>,
    tanks: Vec<usize>,
    reservoirs: Vec<usize>,
    pipes: Vec<usize>,
    pumps: Vec<usize>,
    node_slot: Vec<(NodeClass, usize)>,
    link_slot: Vec<(LinkClass, usize)>,
    link_ends: Vec<(usize, usize)>,
    inflow: Vec<Vec<usize>>,
    outflow: Vec<Vec<usize>>,
    /// Demand series (cfs) indexed by junction slot.
    demands: Vec<Vec<f64>>,
    pattern_len: usize,
}

impl Network {
    /// Index the parts and check ids/references, without physical checks.
    pub fn assemble(nodes: Vec<Node>, links: Vec<Link>, patterns: &DemandPattern) -> Result<Network, NetworkError> {
        let mut node_index = HashMap::with_capacity(nodes.len());
        let mut node_slot = Vec::with_capacity(nodes.len());
        let (mut junctions, mut tanks, mut reservoirs) = (Vec::new(), Vec::new(), Vec::new());
        for (i, node) in nodes.iter().enumerate() {
            if node_index.insert(node.id.clone(), i).is_some() {
                return Err(NetworkError::DuplicateId(node.id.clone()));
            }
            let slot = match node.kind {
                NodeKind::Junction { .. } => {
                    junctions.push(i);
                    (NodeClass::Junction, junctions.len() - 1)
                }
                NodeKind::Tank(_) => {
                    tanks.push(i);
                    (NodeClass::Tank, tanks.len() - 1)
                }
                NodeKind::Reservoir { .. } => {
                    reservoirs.push(i);
                    (NodeClass::Reservoir, reservoirs.len() - 1)
                }
            };
            node_slot.push(slot);
        }

        let mut link_index = HashMap::with_capacity(links.len());
        let mut link_slot = Vec::with_capacity(links.len());
        let mut link_ends = Vec::with_capacity(links.len());
        let (mut pipes, mut pumps) = (Vec::new(), Vec::new());
        let mut inflow = vec![Vec::new(); nodes.len()];
        let mut outflow = vec![Vec::new(); nodes.len()];
        for (i, link) in links.iter().enumerate() {
            if link_index.insert(link.id.clone(), i).is_some() {
                return Err(NetworkError::DuplicateId(link.id.clone()));
            }
            let lookup = |id: &str| {
                node_index
                    .get(id)
                    .copied()
                    .ok_or_else(|| NetworkError::DanglingReference {
                        link: link.id.clone(),
                        node: id.to_string(),
                    })
            };
            let from = lookup(&link.from)?;
            let to = lookup(&link.to)?;
            outflow[from].push(i);
            inflow[to].push(i);
            link_ends.push((from, to));
            let slot = match link.kind {
                LinkKind::Pipe(_) => {
                    pipes.push(i);
                    (LinkClass::Pipe, pipes.len() - 1)
                }
                LinkKind::Pump(_) => {
                    pumps.push(i);
                    (LinkClass::Pump, pumps.len() - 1)
                }
            };
            link_slot.push(slot);
        }

        let pattern_len = patterns.series.values().map(Vec::len).max().unwrap_or(0);
        let mut demands = vec![vec![0.0; pattern_len]; junctions.len()];
        for (id, series) in &patterns.series {
            match node_index.get(id).map(|&i| node_slot[i]) {
                Some((NodeClass::Junction, slot)) => demands[slot] = series.clone(),
                _ => return Err(NetworkError::UnknownDemandNode(id.clone())),
            }
        }

        Ok(Network {
            nodes,
            links,
            node_index,
            link_index,
            junctions,
            tanks,
            reservoirs,
            pipes,
            pumps,
            node_slot,
            link_slot,
            link_ends,
            inflow,
            outflow,
            demands,
            pattern_len,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.node_index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn link(&self, id: &str) -> Option<&Link> {
        self.link_index.get(id).map(|&i| &self.links[i])
    }

    pub fn node_position(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn link_position(&self, id: &str) -> Option<usize> {
        self.link_index.get(id).copied()
    }

    pub fn n_junctions(&self) -> usize {
        self.junctions.len()
    }

    pub fn n_tanks(&self) -> usize {
        self.tanks.len()
    }

    pub fn n_reservoirs(&self) -> usize {
        self.reservoirs.len()
    }

    pub fn n_pipes(&self) -> usize {
        self.pipes.len()
    }

    pub fn n_pumps(&self) -> usize {
        self.pumps.len()
    }

    /// Node indices of the junction partition, in slot order.
    pub fn junctions(&self) -> &[usize] {
        &self.junctions
    }

    pub fn tanks(&self) -> &[usize] {
        &self.tanks
    }

    pub fn reservoirs(&self) -> &[usize] {
        &self.reservoirs
    }

    /// Link indices of the pipe partition, in slot order.
    pub fn pipes(&self) -> &[usize] {
        &self.pipes
    }

    pub fn pumps(&self) -> &[usize] {
        &self.pumps
    }

    /// Partition and position within the partition of node `i`.
    pub fn node_slot(&self, i: usize) -> (NodeClass, usize) {
        self.node_slot[i]
    }

    pub fn link_slot(&self, i: usize) -> (LinkClass, usize) {
        self.link_slot[i]
    }

    /// (from, to) node indices of link `i`.
    pub fn link_ends(&self, i: usize) -> (usize, usize) {
        self.link_ends[i]
    }

    /// Links oriented into node `i` (the set N_i^in).
    pub fn inflow_links(&self, i: usize) -> &[usize] {
        &self.inflow[i]
    }

    /// Links oriented out of node `i` (the set N_i^out).
    pub fn outflow_links(&self, i: usize) -> &[usize] {
        &self.outflow[i]
    }

    pub fn tank(&self, slot: usize) -> &Tank {
        match &self.nodes[self.tanks[slot]].kind {
            NodeKind::Tank(t) => t,
            _ => unreachable!("tank partition holds a non-tank node"),
        }
    }

    pub fn reservoir_head(&self, slot: usize) -> f64 {
        match self.nodes[self.reservoirs[slot]].kind {
            NodeKind::Reservoir { head } => head,
            _ => unreachable!("reservoir partition holds a non-reservoir node"),
        }
    }

    pub fn pipe_spec(&self, slot: usize) -> &ResistanceSpec {
        match &self.links[self.pipes[slot]].kind {
            LinkKind::Pipe(spec) => spec,
            _ => unreachable!("pipe partition holds a pump"),
        }
    }

    pub fn pump_curve(&self, slot: usize) -> &PumpCurve {
        match &self.links[self.pumps[slot]].kind {
            LinkKind::Pump(curve) => curve,
            _ => unreachable!("pump partition holds a pipe"),
        }
    }

    pub fn initial_tank_heads(&self) -> Vec<f64> {
        (0..self.n_tanks()).map(|t| self.tank(t).initial_head).collect()
    }

    pub fn reservoir_heads(&self) -> Vec<f64> {
        (0..self.n_reservoirs()).map(|r| self.reservoir_head(r)).collect()
    }

    /// Length of the stored demand series.
    pub fn pattern_len(&self) -> usize {
        self.pattern_len
    }

    /// Demands (cfs) of all junctions at `step`; past the end of the series
    /// the last value is held.
    pub fn demands_at(&self, step: usize) -> Vec<f64> {
        self.demands
            .iter()
            .map(|series| match series.len() {
                0 => 0.0,
                n => series[step.min(n - 1)],
            })
            .collect()
    }

    /// Demands for `len` consecutive steps starting at `start`.
    pub fn demand_forecast(&self, start: usize, len: usize) -> Vec<Vec<f64>> {
        (start..start + len).map(|k| self.demands_at(k)).collect()
    }

    /// Replace the demand series.
    pub fn with_demands(mut self, patterns: &DemandPattern) -> Result<Network, NetworkError> {
        let pattern_len = patterns.series.values().map(Vec::len).max().unwrap_or(0);
        let mut demands = vec![vec![0.0; pattern_len]; self.junctions.len()];
        for (id, series) in &patterns.series {
            match self.node_index.get(id).map(|&i| self.node_slot[i]) {
                Some((NodeClass::Junction, slot)) => demands[slot] = series.clone(),
                _ => return Err(NetworkError::UnknownDemandNode(id.clone())),
            }
        }
        self.demands = demands;
        self.pattern_len = pattern_len;
        Ok(self)
    }
}

/// Assemble a network and reject it if any physical invariant fails.
pub fn build_network(nodes: Vec<Node>, links: Vec<Link>, patterns: &DemandPattern) -> Result<Network, NetworkError> {
    let net = Network::assemble(nodes, links, patterns)?;
    if let Some(Diagnostic::InvariantViolation { id, field, reason }) = invariant_diagnostics(&net).into_iter().next() {
        return Err(NetworkError::InvariantViolation { id, field, reason });
    }
    Ok(net)
}

/// Connectivity and invariant diagnostics; empty when the network is usable.
pub fn validate(net: &Network) -> Vec<Diagnostic> {
    let mut out = invariant_diagnostics(net);

    let n = net.nodes.len();
    let mut adjacency = vec![Vec::new(); n];
    for &(a, b) in &net.link_ends {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }

    let mut component = vec![usize::MAX; n];
    let mut components = 0;
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        component[start] = components;
        while let Some(i) = queue.pop_front() {
            for &j in &adjacency[i] {
                if component[j] == usize::MAX {
                    component[j] = components;
                    queue.push_back(j);
                }
            }
        }
        components += 1;
    }
    if components > 1 {
        out.push(Diagnostic::Disconnected { components });
    }

    let sourced: HashSet<usize> = net.tanks.iter().chain(&net.reservoirs).map(|&i| component[i]).collect();
    for &j in &net.junctions {
        if !sourced.contains(&component[j]) {
            out.push(Diagnostic::UnreachableNode(net.nodes[j].id.clone()));
        }
    }
    out
}

fn invariant_diagnostics(net: &Network) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut bad = |id: &str, field: &'static str, reason: String| {
        out.push(Diagnostic::InvariantViolation {
            id: id.to_string(),
            field,
            reason,
        })
    };

    for node in &net.nodes {
        if !node.elevation.is_finite() {
            bad(&node.id, "elevation", "must be finite".into());
        }
        match &node.kind {
            NodeKind::Tank(t) => {
                if !(t.area > 0.0 && t.area.is_finite()) {
                    bad(&node.id, "area", format!("must be positive, got {}", t.area));
                }
                if !(t.head_min <= t.head_max) {
                    bad(
                        &node.id,
                        "head_min",
                        format!("{} exceeds head_max {}", t.head_min, t.head_max),
                    );
                }
                if !(t.head_min <= t.initial_head && t.initial_head <= t.head_max) {
                    bad(
                        &node.id,
                        "initial_head",
                        format!("{} outside [{}, {}]", t.initial_head, t.head_min, t.head_max),
                    );
                }
                if !(t.head_min <= t.safety_head && t.safety_head <= t.head_max) {
                    bad(
                        &node.id,
                        "safety_head",
                        format!("{} outside [{}, {}]", t.safety_head, t.head_min, t.head_max),
                    );
                }
            }
            NodeKind::Reservoir { head } => {
                if !head.is_finite() {
                    bad(&node.id, "head", "must be finite".into());
                }
            }
            NodeKind::Junction { .. } => {}
        }
    }

    for (i, link) in net.links.iter().enumerate() {
        let (a, b) = net.link_ends[i];
        if a == b {
            bad(&link.id, "to", "link must join two distinct nodes".into());
        }
        if !(link.flow_min < link.flow_max) {
            bad(
                &link.id,
                "flow_min",
                format!("{} must be below flow_max {}", link.flow_min, link.flow_max),
            );
        }
        match &link.kind {
            LinkKind::Pipe(spec) => {
                if !(spec.length > 0.0 && spec.length.is_finite()) {
                    bad(&link.id, "length", format!("must be positive, got {}", spec.length));
                }
                if !(spec.diameter > 0.0 && spec.diameter.is_finite()) {
                    bad(&link.id, "diameter", format!("must be positive, got {}", spec.diameter));
                }
                let roughness_ok = match spec.formula {
                    HeadlossFormula::HazenWilliams { c_hw } => c_hw > 0.0,
                    HeadlossFormula::DarcyWeisbach { friction_factor, .. } => friction_factor > 0.0,
                    HeadlossFormula::ChezyManning { c_cm } => c_cm > 0.0,
                };
                if !roughness_ok {
                    bad(
                        &link.id,
                        "roughness",
                        "roughness/friction parameter must be positive".into(),
                    );
                }
            }
            LinkKind::Pump(curve) => {
                if !(curve.shutoff_head > 0.0) {
                    bad(
                        &link.id,
                        "shutoff_head",
                        format!("must be positive, got {}", curve.shutoff_head),
                    );
                }
                if !(curve.coefficient > 0.0) {
                    bad(
                        &link.id,
                        "coefficient",
                        format!("must be positive, got {}", curve.coefficient),
                    );
                }
                if !(curve.exponent > 1.0) {
                    bad(&link.id, "exponent", format!("must exceed 1, got {}", curve.exponent));
                }
                if link.flow_min < 0.0 {
                    bad(
                        &link.id,
                        "flow_min",
                        format!("pump flow must be nonnegative, got {}", link.flow_min),
                    );
                }
            }
        }
    }
    out
}

/// The constant matrices of the DAE model
///
/// ```text
/// x(k+1) = A x(k) + B_u u(k) + B_v v(k)
///      0 = E_u u(k) + E_v v(k) + E_d d(k)
///      0 = E_x x(k) + E_l l(k) + E_r h_R + Φ(u, v, s)
/// ```
///
/// Energy rows are ordered pipes first, then pumps. `E_r` carries the fixed
/// reservoir heads, which the compact model folds into Φ.
#[derive(Debug, Clone)]
pub struct DaeMatrices {
    pub dt: f64,
    pub a: CsrMatrix,
    pub b_u: CsrMatrix,
    pub b_v: CsrMatrix,
    pub e_u: CsrMatrix,
    pub e_v: CsrMatrix,
    pub e_d: CsrMatrix,
    pub e_x: CsrMatrix,
    pub e_l: CsrMatrix,
    pub e_r: CsrMatrix,
}

impl DaeMatrices {
    pub fn n_tanks(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_junctions(&self) -> usize {
        self.e_u.nrows()
    }

    pub fn n_pumps(&self) -> usize {
        self.b_u.ncols()
    }

    pub fn n_pipes(&self) -> usize {
        self.b_v.ncols()
    }
}

struct Triplets {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    fn new(nrows: usize, ncols: usize) -> Self {
        Triplets {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    fn push(&mut self, r: usize, c: usize, v: f64) {
        self.entries.push((r, c, v));
    }

    fn build(self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.nrows, self.ncols, self.entries)
    }
}

/// Build the DAE matrices for sampling time `dt` (seconds).
pub fn incidence_matrices(net: &Network, dt: f64) -> Result<DaeMatrices, NetworkError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(NetworkError::NonPositiveTimeStep(dt));
    }
    let (nt, nj, nr) = (net.n_tanks(), net.n_junctions(), net.n_reservoirs());
    let (np, nm) = (net.n_pipes(), net.n_pumps());

    let mut a = Triplets::new(nt, nt);
    let mut b_u = Triplets::new(nt, nm);
    let mut b_v = Triplets::new(nt, np);
    let mut e_u = Triplets::new(nj, nm);
    let mut e_v = Triplets::new(nj, np);
    let mut e_d = Triplets::new(nj, nj);
    let mut e_x = Triplets::new(np + nm, nt);
    let mut e_l = Triplets::new(np + nm, nj);
    let mut e_r = Triplets::new(np + nm, nr);

    for t in 0..nt {
        a.push(t, t, 1.0);
    }
    for j in 0..nj {
        e_d.push(j, j, -1.0);
    }

    for (link, &(from, to)) in net.link_ends.iter().enumerate() {
        let (class, slot) = net.link_slot[link];
        for (node, sign) in [(to, 1.0), (from, -1.0)] {
            match net.node_slot[node] {
                (NodeClass::Tank, t) => {
                    let w = sign * dt / net.tank(t).area;
                    match class {
                        LinkClass::Pipe => b_v.push(t, slot, w),
                        LinkClass::Pump => b_u.push(t, slot, w),
                    }
                }
                (NodeClass::Junction, j) => match class {
                    LinkClass::Pipe => e_v.push(j, slot, sign),
                    LinkClass::Pump => e_u.push(j, slot, sign),
                },
                (NodeClass::Reservoir, _) => {}
            }
        }

        // energy row: +h_from − h_to
        let row = match class {
            LinkClass::Pipe => slot,
            LinkClass::Pump => np + slot,
        };
        for (node, sign) in [(from, 1.0), (to, -1.0)] {
            match net.node_slot[node] {
                (NodeClass::Tank, t) => e_x.push(row, t, sign),
                (NodeClass::Junction, j) => e_l.push(row, j, sign),
                (NodeClass::Reservoir, r) => e_r.push(row, r, sign),
            }
        }
    }

    Ok(DaeMatrices {
        dt,
        a: a.build(),
        b_u: b_u.build(),
        b_v: b_v.build(),
        e_u: e_u.build(),
        e_v: e_v.build(),
        e_d: e_d.build(),
        e_x: e_x.build(),
        e_l: e_l.build(),
        e_r: e_r.build(),
    })
}
