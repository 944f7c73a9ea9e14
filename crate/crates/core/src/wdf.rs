//! Wave digital filter building blocks.
//!
//! Ports use voltage waves `a = v + R0 i` (incident) and `b = v - R0 i`
//! (reflected). A tree is stored as an arena: leaves are one-port elements,
//! interior nodes are three-port series/parallel adaptors whose upward port
//! is adapted (reflection-free), and a single unadapted element sits at the
//! root. Capacitors are discretized with the bilinear transform.
//!
//! Series adaptors follow the loop convention (all port voltages sum to
//! zero), so every series level flips the orientation of its children with
//! respect to the netlist. Each node records that polarity; [`WdfTree::voltage`]
//! and [`WdfTree::current`] report values in netlist orientation, running
//! from the node's terminal nearest the root's positive side to the other.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WdfError {
    #[error("element `{name}`: value must be positive and finite, got {value}")]
    InvalidValue { name: String, value: f64 },
    #[error("sample rate must be positive and finite, got {0}")]
    SampleRate(f64),
    #[error("`{0}` cannot be adapted and may only sit at the root")]
    RootConflict(String),
    #[error("the root must be a one-port element, `{0}` is an adaptor")]
    AdaptorAtRoot(String),
    #[error("a {0} cannot terminate the root")]
    UnsupportedRoot(&'static str),
    #[error("node `{0}` is used more than once")]
    NodeReused(String),
    #[error("node `{0}` is not connected to the tree")]
    Detached(String),
    #[error("node `{0}` has no source voltage to set")]
    NotASource(String),
    #[error("diode solver did not converge (residual {residual:e} V)")]
    NonConvergence { residual: f64 },
}

/// One WDF port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WdfPort {
    /// Port resistance in ohms.
    pub r0: f64,
    /// Wave travelling into the element.
    pub a: f64,
    /// Wave reflected by the element.
    pub b: f64,
}

impl WdfPort {
    pub fn new(r0: f64) -> Self {
        Self { r0, a: 0.0, b: 0.0 }
    }

    #[inline]
    pub fn voltage(&self) -> f64 {
        wave_to_voltage(self.a, self.b)
    }

    #[inline]
    pub fn current(&self) -> f64 {
        wave_to_current(self.a, self.b, self.r0)
    }

    /// Waves that correspond to voltage `v` and current `i` at this port.
    pub fn waves_from(v: f64, i: f64, r0: f64) -> (f64, f64) {
        (v + r0 * i, v - r0 * i)
    }
}

#[inline]
pub fn wave_to_voltage(a: f64, b: f64) -> f64 {
    0.5 * (a + b)
}

#[inline]
pub fn wave_to_current(a: f64, b: f64, r0: f64) -> f64 {
    (a - b) / (2.0 * r0)
}

/// Antiparallel Shockley diode pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiodePair {
    /// Saturation current in amperes.
    pub is: f64,
    /// Thermal voltage in volts.
    pub vt: f64,
    /// Ideality factor.
    pub n: f64,
}

impl DiodePair {
    /// 1N34A-like germanium parameters.
    pub const GERMANIUM: DiodePair = DiodePair {
        is: 2.52e-9,
        vt: 25.85e-3,
        n: 1.75,
    };

    pub fn current(&self, v: f64) -> f64 {
        2.0 * self.is * (v / (self.n * self.vt)).sinh()
    }

    pub fn reflect(&self, a: f64, r0: f64) -> Result<f64, WdfError> {
        diode_pair_reflect(a, r0, self.is, self.vt, self.n)
    }
}

const DIODE_MAX_ITER: usize = 50;
const DIODE_TOL: f64 = 1e-9;

/// Reflected wave of an antiparallel diode pair terminating a port of
/// resistance `r0`.
///
/// Solves `v + r0 * 2 Is sinh(v / (n Vt)) = |a|` for `v` in `[0, |a|]` by
/// Newton's method started right of the root (where the residual is convex
/// and Newton approaches monotonically), falling back to bisection whenever
/// a step would leave the bracket. The result is exactly odd in `a`.
pub fn diode_pair_reflect(a: f64, r0: f64, is: f64, vt: f64, n: f64) -> Result<f64, WdfError> {
    if a == 0.0 {
        return Ok(0.0);
    }
    let mag = a.abs();
    let nvt = n * vt;
    let k = 2.0 * is * r0;
    let residual = |v: f64| v + k * (v / nvt).sinh() - mag;

    // At the "ignore the linear term" guess the residual equals the guess,
    // so it is always a valid upper bracket.
    let mut hi = (nvt * (mag / k).asinh()).min(mag);
    let mut lo = 0.0;
    let mut v = hi;
    let mut g = residual(v);
    let tol = 1e-13 * mag.max(1.0);
    for _ in 0..DIODE_MAX_ITER {
        if g.abs() <= tol {
            break;
        }
        if g > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let slope = 1.0 + k / nvt * (v / nvt).cosh();
        let mut next = v - g / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == v {
            break;
        }
        v = next;
        g = residual(v);
    }
    if g.is_nan() || g.abs() > DIODE_TOL {
        return Err(WdfError::NonConvergence { residual: g });
    }
    Ok((2.0 * v - mag) * a.signum())
}

/// One-port element kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WdfElement {
    Resistor { r: f64 },
    /// `state` holds the previous sample's incident wave.
    Capacitor { c: f64, state: f64 },
    /// Thevenin source; `vs` is stored in port orientation.
    ResistiveSource { r: f64, vs: f64 },
    IdealSource { vs: f64 },
    Diodes(DiodePair),
}

impl WdfElement {
    pub fn is_adaptable(&self) -> bool {
        !matches!(self, WdfElement::IdealSource { .. } | WdfElement::Diodes(_))
    }

    /// Port resistance when used as a leaf.
    pub fn port_resistance(&self, fs: f64) -> f64 {
        match *self {
            WdfElement::Resistor { r } | WdfElement::ResistiveSource { r, .. } => r,
            WdfElement::Capacitor { c, .. } => 1.0 / (2.0 * fs * c),
            WdfElement::IdealSource { .. } | WdfElement::Diodes(_) => f64::NAN,
        }
    }

    /// Reflected wave of an adapted leaf.
    #[inline]
    pub fn reflect(&self) -> f64 {
        match *self {
            WdfElement::Resistor { .. } => 0.0,
            WdfElement::Capacitor { state, .. } => state,
            WdfElement::ResistiveSource { vs, .. } => vs,
            WdfElement::IdealSource { .. } | WdfElement::Diodes(_) => f64::NAN,
        }
    }

    /// Reflected wave when terminating a port of resistance `r0` at the root.
    pub fn reflect_at_root(&self, a: f64, r0: f64) -> Result<f64, WdfError> {
        Ok(match *self {
            WdfElement::Resistor { r } => a * (r - r0) / (r + r0),
            WdfElement::Capacitor { .. } => return Err(WdfError::UnsupportedRoot("capacitor")),
            WdfElement::ResistiveSource { r, vs } => {
                let rho = (r - r0) / (r + r0);
                rho * a + (1.0 - rho) * vs
            }
            WdfElement::IdealSource { vs } => 2.0 * vs - a,
            WdfElement::Diodes(d) => d.reflect(a, r0)?,
        })
    }
}

/// Adaptor connection type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptorKind {
    Series,
    Parallel,
}

/// A three-port adaptor with port 0 facing the parent and adapted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WdfAdaptor {
    pub kind: AdaptorKind,
    /// Port resistances of the two children.
    pub child_r: [f64; 2],
}

impl WdfAdaptor {
    /// Resistance of the adapted upward port.
    pub fn up_resistance(&self) -> f64 {
        let [r1, r2] = self.child_r;
        match self.kind {
            AdaptorKind::Series => r1 + r2,
            AdaptorKind::Parallel => r1 * r2 / (r1 + r2),
        }
    }

    /// Scattering coefficients for the two child ports.
    pub fn gammas(&self) -> [f64; 2] {
        let [r1, r2] = self.child_r;
        match self.kind {
            AdaptorKind::Series => {
                let r0 = r1 + r2;
                [r1 / r0, r2 / r0]
            }
            AdaptorKind::Parallel => {
                let (g1, g2) = (1.0 / r1, 1.0 / r2);
                let g0 = g1 + g2;
                [g1 / g0, g2 / g0]
            }
        }
    }

    /// Reflected waves for incident waves `[up, child1, child2]`.
    pub fn scatter(&self, incident: [f64; 3]) -> [f64; 3] {
        let [a0, a1, a2] = incident;
        let [g1, g2] = self.gammas();
        match self.kind {
            AdaptorKind::Series => {
                let sum = a0 + a1 + a2;
                [-(a1 + a2), a1 - g1 * sum, a2 - g2 * sum]
            }
            AdaptorKind::Parallel => {
                let b0 = g1 * a1 + g2 * a2;
                [b0, a0 + b0 - a1, a0 + b0 - a2]
            }
        }
    }
}

/// Handle to a node of a [`WdfTree`] or [`TreeBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, PartialEq)]
enum NodeKind {
    Element(WdfElement),
    Adaptor {
        kind: AdaptorKind,
        children: [usize; 2],
        gamma: [f64; 2],
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    name: String,
    kind: NodeKind,
    port: WdfPort,
    parent: Option<usize>,
    polarity: f64,
}

/// Incremental construction of a [`WdfTree`].
#[derive(Debug, Default)]
pub struct TreeBuilder {
    nodes: Vec<Node>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: &str, kind: NodeKind) -> NodeId {
        self.nodes.push(Node {
            name: name.to_string(),
            kind,
            port: WdfPort::new(f64::NAN),
            parent: None,
            polarity: 1.0,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn element(&mut self, name: &str, element: WdfElement) -> NodeId {
        self.push(name, NodeKind::Element(element))
    }

    pub fn resistor(&mut self, name: &str, r: f64) -> NodeId {
        self.element(name, WdfElement::Resistor { r })
    }

    pub fn capacitor(&mut self, name: &str, c: f64) -> NodeId {
        self.element(name, WdfElement::Capacitor { c, state: 0.0 })
    }

    pub fn resistive_source(&mut self, name: &str, r: f64) -> NodeId {
        self.element(name, WdfElement::ResistiveSource { r, vs: 0.0 })
    }

    pub fn ideal_source(&mut self, name: &str) -> NodeId {
        self.element(name, WdfElement::IdealSource { vs: 0.0 })
    }

    pub fn diode_pair(&mut self, name: &str, diodes: DiodePair) -> NodeId {
        self.element(name, WdfElement::Diodes(diodes))
    }

    fn adaptor(&mut self, name: &str, kind: AdaptorKind, first: NodeId, second: NodeId) -> NodeId {
        self.push(
            name,
            NodeKind::Adaptor {
                kind,
                children: [first.0, second.0],
                gamma: [0.0; 2],
            },
        )
    }

    pub fn series(&mut self, name: &str, first: NodeId, second: NodeId) -> NodeId {
        self.adaptor(name, AdaptorKind::Series, first, second)
    }

    pub fn parallel(&mut self, name: &str, first: NodeId, second: NodeId) -> NodeId {
        self.adaptor(name, AdaptorKind::Parallel, first, second)
    }

    /// Finish the tree with `root` terminating the upward port of `top`.
    pub fn build(mut self, root: NodeId, top: NodeId, fs: f64) -> Result<WdfTree, WdfError> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(WdfError::SampleRate(fs));
        }
        match self.nodes[root.0].kind {
            NodeKind::Adaptor { .. } => {
                return Err(WdfError::AdaptorAtRoot(self.nodes[root.0].name.clone()));
            }
            NodeKind::Element(WdfElement::Capacitor { .. }) => {
                return Err(WdfError::UnsupportedRoot("capacitor"));
            }
            NodeKind::Element(_) => {}
        }
        for node in &self.nodes {
            if let NodeKind::Element(e) = &node.kind {
                let values: &[f64] = match e {
                    WdfElement::Resistor { r } | WdfElement::ResistiveSource { r, .. } => &[*r],
                    WdfElement::Capacitor { c, .. } => &[*c],
                    WdfElement::Diodes(d) => &[d.is, d.vt, d.n],
                    WdfElement::IdealSource { .. } => &[],
                };
                if let Some(&bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    return Err(WdfError::InvalidValue {
                        name: node.name.clone(),
                        value: bad,
                    });
                }
            }
        }

        // Walk from the top assigning parents and polarities.
        let mut visited = vec![false; self.nodes.len()];
        visited[root.0] = true;
        let mut pre_order = Vec::new();
        let mut stack = vec![(top.0, None::<usize>, 1.0)];
        while let Some((idx, parent, polarity)) = stack.pop() {
            if visited[idx] {
                return Err(WdfError::NodeReused(self.nodes[idx].name.clone()));
            }
            visited[idx] = true;
            let node = &mut self.nodes[idx];
            node.parent = parent;
            node.polarity = polarity;
            pre_order.push(idx);
            match &node.kind {
                NodeKind::Element(e) if !e.is_adaptable() => {
                    return Err(WdfError::RootConflict(node.name.clone()));
                }
                NodeKind::Element(_) => {}
                NodeKind::Adaptor { kind, children, .. } => {
                    let child_polarity = match kind {
                        AdaptorKind::Series => -polarity,
                        AdaptorKind::Parallel => polarity,
                    };
                    for &c in children.iter().rev() {
                        stack.push((c, Some(idx), child_polarity));
                    }
                }
            }
        }
        if let Some(idx) = visited.iter().position(|v| !v) {
            return Err(WdfError::Detached(self.nodes[idx].name.clone()));
        }
        let post_order = pre_order.iter().rev().copied().collect();

        let mut tree = WdfTree {
            nodes: self.nodes,
            root: root.0,
            top: top.0,
            pre_order,
            post_order,
            fs,
        };
        tree.adapt();
        Ok(tree)
    }
}

/// A connected WDF tree with one root element.
#[derive(Debug, Clone, PartialEq)]
pub struct WdfTree {
    nodes: Vec<Node>,
    root: usize,
    top: usize,
    pre_order: Vec<usize>,
    post_order: Vec<usize>,
    fs: f64,
}

/// Waves at the root after one sample: `a` arrives from the tree, `b` is
/// the root's reflection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootWaves {
    pub a: f64,
    pub b: f64,
}

impl WdfTree {
    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn root(&self) -> NodeId {
        NodeId(self.root)
    }

    pub fn top(&self) -> NodeId {
        NodeId(self.top)
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(NodeId)
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn port(&self, id: NodeId) -> &WdfPort {
        &self.nodes[id.0].port
    }

    pub fn element(&self, id: NodeId) -> Option<&WdfElement> {
        match &self.nodes[id.0].kind {
            NodeKind::Element(e) => Some(e),
            NodeKind::Adaptor { .. } => None,
        }
    }

    /// Iterate over `(id, name)` for every node.
    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &str)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i), n.name.as_str()))
    }

    /// Netlist-orientation sign of a node's port voltage.
    pub fn polarity(&self, id: NodeId) -> f64 {
        self.nodes[id.0].polarity
    }

    /// Port voltage in netlist orientation.
    pub fn voltage(&self, id: NodeId) -> f64 {
        let node = &self.nodes[id.0];
        node.polarity * node.port.voltage()
    }

    /// Current through a node in netlist orientation.
    pub fn current(&self, id: NodeId) -> f64 {
        let node = &self.nodes[id.0];
        node.polarity * node.port.current()
    }

    /// Recompute every port resistance and scattering coefficient.
    pub fn adapt(&mut self) {
        for i in 0..self.post_order.len() {
            let idx = self.post_order[i];
            self.adapt_node(idx);
        }
        let r_top = self.nodes[self.top].port.r0;
        self.nodes[self.root].port.r0 = r_top;
    }

    fn adapt_node(&mut self, idx: usize) {
        let fs = self.fs;
        let r0 = match self.nodes[idx].kind {
            NodeKind::Element(e) => e.port_resistance(fs),
            NodeKind::Adaptor { kind, children, .. } => {
                let adaptor = WdfAdaptor {
                    kind,
                    child_r: [self.nodes[children[0]].port.r0, self.nodes[children[1]].port.r0],
                };
                if let NodeKind::Adaptor { gamma, .. } = &mut self.nodes[idx].kind {
                    *gamma = adaptor.gammas();
                }
                adaptor.up_resistance()
            }
        };
        self.nodes[idx].port.r0 = r0;
    }

    /// Re-adapt only the ancestors of a changed leaf.
    fn readapt_from(&mut self, idx: usize) {
        let mut cursor = Some(idx);
        while let Some(i) = cursor {
            self.adapt_node(i);
            cursor = self.nodes[i].parent;
        }
        let r_top = self.nodes[self.top].port.r0;
        self.nodes[self.root].port.r0 = r_top;
    }

    fn element_mut(&mut self, id: NodeId) -> &mut WdfElement {
        let node = &mut self.nodes[id.0];
        match &mut node.kind {
            NodeKind::Element(e) => e,
            NodeKind::Adaptor { .. } => panic!("node `{}` is an adaptor", node.name),
        }
    }

    /// Change a resistor or resistive-source resistance and re-adapt.
    pub fn set_resistance(&mut self, id: NodeId, r: f64) -> Result<(), WdfError> {
        if !(r.is_finite() && r > 0.0) {
            return Err(WdfError::InvalidValue {
                name: self.nodes[id.0].name.clone(),
                value: r,
            });
        }
        match self.element_mut(id) {
            WdfElement::Resistor { r: old } | WdfElement::ResistiveSource { r: old, .. } => *old = r,
            _ => {
                return Err(WdfError::InvalidValue {
                    name: self.nodes[id.0].name.clone(),
                    value: r,
                })
            }
        }
        if id.0 != self.root {
            self.readapt_from(id.0);
        }
        Ok(())
    }

    pub fn set_capacitance(&mut self, id: NodeId, c: f64) -> Result<(), WdfError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(WdfError::InvalidValue {
                name: self.nodes[id.0].name.clone(),
                value: c,
            });
        }
        match self.element_mut(id) {
            WdfElement::Capacitor { c: old, .. } => *old = c,
            _ => {
                return Err(WdfError::InvalidValue {
                    name: self.nodes[id.0].name.clone(),
                    value: c,
                })
            }
        }
        self.readapt_from(id.0);
        Ok(())
    }

    /// Set a source's voltage, given in netlist orientation.
    pub fn set_source(&mut self, id: NodeId, v: f64) -> Result<(), WdfError> {
        let polarity = self.nodes[id.0].polarity;
        match &mut self.nodes[id.0].kind {
            NodeKind::Element(WdfElement::ResistiveSource { vs, .. }) => *vs = polarity * v,
            NodeKind::Element(WdfElement::IdealSource { vs }) => *vs = polarity * v,
            _ => return Err(WdfError::NotASource(self.nodes[id.0].name.clone())),
        }
        Ok(())
    }

    /// Clear all reactive state and waves.
    pub fn reset(&mut self) {
        for node in &mut self.nodes {
            node.port.a = 0.0;
            node.port.b = 0.0;
            match &mut node.kind {
                NodeKind::Element(WdfElement::Capacitor { state, .. })
                | NodeKind::Element(WdfElement::ResistiveSource { vs: state, .. })
                | NodeKind::Element(WdfElement::IdealSource { vs: state }) => *state = 0.0,
                _ => {}
            }
        }
    }

    /// Stored wave power `Σ state² / R0` over all capacitors.
    pub fn stored_energy(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Element(WdfElement::Capacitor { state, .. }) => Some(state * state / n.port.r0),
                _ => None,
            })
            .sum()
    }

    /// One sample: reflect leaves to root, resolve the root, propagate back
    /// down, and advance every capacitor once.
    pub fn process(&mut self) -> Result<RootWaves, WdfError> {
        for i in 0..self.post_order.len() {
            let idx = self.post_order[i];
            let b = match self.nodes[idx].kind {
                NodeKind::Element(e) => e.reflect(),
                NodeKind::Adaptor {
                    kind,
                    children: [c1, c2],
                    gamma: [g1, g2],
                } => {
                    let (b1, b2) = (self.nodes[c1].port.b, self.nodes[c2].port.b);
                    match kind {
                        AdaptorKind::Series => -(b1 + b2),
                        AdaptorKind::Parallel => g1 * b1 + g2 * b2,
                    }
                }
            };
            self.nodes[idx].port.b = b;
        }

        let a_root = self.nodes[self.top].port.b;
        let r_top = self.nodes[self.top].port.r0;
        let b_root = match self.nodes[self.root].kind {
            NodeKind::Element(e) => e.reflect_at_root(a_root, r_top)?,
            NodeKind::Adaptor { .. } => unreachable!("checked at build"),
        };
        let root = &mut self.nodes[self.root].port;
        root.a = a_root;
        root.b = b_root;
        self.nodes[self.top].port.a = b_root;

        for i in 0..self.pre_order.len() {
            let idx = self.pre_order[i];
            match self.nodes[idx].kind {
                NodeKind::Adaptor {
                    kind,
                    children: [c1, c2],
                    gamma: [g1, g2],
                } => {
                    let a0 = self.nodes[idx].port.a;
                    let (b1, b2) = (self.nodes[c1].port.b, self.nodes[c2].port.b);
                    let (d1, d2) = match kind {
                        AdaptorKind::Series => {
                            let sum = a0 + b1 + b2;
                            (b1 - g1 * sum, b2 - g2 * sum)
                        }
                        AdaptorKind::Parallel => {
                            let b0 = self.nodes[idx].port.b;
                            (a0 + b0 - b1, a0 + b0 - b2)
                        }
                    };
                    self.nodes[c1].port.a = d1;
                    self.nodes[c2].port.a = d2;
                }
                NodeKind::Element(WdfElement::Capacitor { .. }) => {
                    let incident = self.nodes[idx].port.a;
                    if let NodeKind::Element(WdfElement::Capacitor { state, .. }) = &mut self.nodes[idx].kind {
                        *state = incident;
                    }
                }
                NodeKind::Element(_) => {}
            }
        }
        Ok(RootWaves { a: a_root, b: b_root })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wave_conversions() {
        assert_eq!(wave_to_voltage(1.0, 1.0), 1.0);
        assert_eq!(wave_to_voltage(1.0, -1.0), 0.0);
        assert_eq!(wave_to_voltage(0.8, 0.2), 0.5);
        assert_eq!(wave_to_current(0.3, 0.3, 10.0), 0.0);
        assert_eq!(wave_to_current(1.0, -1.0, 1.0), 1.0);
        assert_eq!(wave_to_current(1.0, 0.0, 500.0), 0.001);
    }

    #[test]
    fn element_reflections() {
        assert_eq!(WdfElement::Resistor { r: 1e3 }.reflect(), 0.0);
        assert_eq!(WdfElement::Capacitor { c: 1e-6, state: 0.0 }.reflect(), 0.0);
        assert_eq!(WdfElement::ResistiveSource { r: 10.0, vs: 4.5 }.reflect(), 4.5);
        let cap = WdfElement::Capacitor { c: 1e-6, state: 0.0 };
        assert!((cap.port_resistance(48000.0) - 1.0 / (2.0 * 48000.0 * 1e-6)).abs() < 1e-12);
    }

    #[test]
    fn series_equal_split() {
        let s = WdfAdaptor {
            kind: AdaptorKind::Series,
            child_r: [100.0, 100.0],
        };
        let b = s.scatter([1.0, 0.0, 0.0]);
        assert_eq!(b[1], -0.5);
        assert_eq!(b[2], -0.5);
        assert_eq!(s.up_resistance(), 200.0);
    }

    #[test]
    fn adapted_ports_are_reflection_free() {
        for kind in [AdaptorKind::Series, AdaptorKind::Parallel] {
            let ad = WdfAdaptor {
                kind,
                child_r: [330.0, 4700.0],
            };
            let b_lo = ad.scatter([-3.0, 0.4, 0.9])[0];
            let b_hi = ad.scatter([7.0, 0.4, 0.9])[0];
            assert_eq!(b_lo, b_hi);
        }
    }

    #[test]
    fn parallel_equal_voltages() {
        let p = WdfAdaptor {
            kind: AdaptorKind::Parallel,
            child_r: [220.0, 1e4],
        };
        let r = [p.up_resistance(), 220.0, 1e4];
        // All three ports at 0.7 V with currents that sum to zero.
        let i1 = 1e-3;
        let i2 = -2.5e-4;
        let i0 = -(i1 + i2);
        let a = [0.7 + r[0] * i0, 0.7 + r[1] * i1, 0.7 + r[2] * i2];
        let b = p.scatter(a);
        for k in 0..3 {
            assert!((wave_to_voltage(a[k], b[k]) - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn kirchhoff_through_scatter() {
        let s = WdfAdaptor {
            kind: AdaptorKind::Series,
            child_r: [50.0, 75.0],
        };
        let r = [s.up_resistance(), 50.0, 75.0];
        let a = [0.3, -1.1, 2.0];
        let b = s.scatter(a);
        let v: f64 = (0..3).map(|k| wave_to_voltage(a[k], b[k])).sum();
        assert!(v.abs() < 1e-12);
        let i: Vec<f64> = (0..3).map(|k| wave_to_current(a[k], b[k], r[k])).collect();
        assert!((i[0] - i[1]).abs() < 1e-12 && (i[1] - i[2]).abs() < 1e-12);
    }

    #[test]
    fn voltage_divider() {
        let mut b = TreeBuilder::new();
        let src = b.resistive_source("V", 1e3);
        let r = b.resistor("R", 1e3);
        let short = b.resistor("short", 1e-9);
        let s = b.series("S", src, r);
        let mut tree = b.build(short, s, 44100.0).unwrap();
        tree.set_source(src, 1.0).unwrap();
        tree.process().unwrap();
        assert!((tree.voltage(r).abs() - 0.5).abs() < 1e-9);
        // Same orientation along the loop: source reads 1 - 0.5 across its terminals.
        assert!((tree.voltage(src) + tree.voltage(r)).abs() < 1e-9);
    }

    #[test]
    fn root_conflict_and_structure_errors() {
        let mut b = TreeBuilder::new();
        let v = b.ideal_source("Vin");
        let d = b.diode_pair("D", DiodePair::GERMANIUM);
        let r = b.resistor("R", 1e3);
        let p = b.parallel("P", d, r);
        assert_eq!(b.build(v, p, 44100.0).unwrap_err(), WdfError::RootConflict("D".into()));

        let mut b = TreeBuilder::new();
        let v = b.ideal_source("Vin");
        let r = b.resistor("R", 1e3);
        let _stray = b.resistor("Rx", 1e3);
        assert_eq!(b.build(v, r, 44100.0).unwrap_err(), WdfError::Detached("Rx".into()));

        let mut b = TreeBuilder::new();
        let v = b.ideal_source("Vin");
        let r = b.resistor("R", -5.0);
        assert!(matches!(b.build(v, r, 44100.0), Err(WdfError::InvalidValue { .. })));

        let mut b = TreeBuilder::new();
        let v = b.ideal_source("Vin");
        let r = b.resistor("R", 1.0);
        let s = b.series("S", r, r);
        assert_eq!(b.build(v, s, 44100.0).unwrap_err(), WdfError::NodeReused("R".into()));
    }

    #[test]
    fn all_resistor_tree_is_silent() {
        let mut b = TreeBuilder::new();
        let v = b.ideal_source("Vin");
        let r1 = b.resistor("R1", 1e3);
        let r2 = b.resistor("R2", 2e3);
        let r3 = b.resistor("R3", 3e3);
        let p = b.parallel("P", r2, r3);
        let s = b.series("S", r1, p);
        let mut tree = b.build(v, s, 44100.0).unwrap();
        for _ in 0..10 {
            let w = tree.process().unwrap();
            assert_eq!((w.a, w.b), (0.0, 0.0));
        }
        for (id, _) in tree.nodes() {
            assert_eq!(tree.port(id).a, 0.0);
            assert_eq!(tree.port(id).b, 0.0);
        }
    }

    #[test]
    fn diode_pair_basics() {
        let d = DiodePair::GERMANIUM;
        assert_eq!(d.reflect(0.0, 1e3).unwrap(), 0.0);
        let b = d.reflect(10.0, 1e3).unwrap();
        let v = wave_to_voltage(10.0, b);
        assert!(v > 0.5 && v < 0.7, "{v}");
        assert_eq!(d.reflect(-10.0, 1e3).unwrap(), -b);
        assert!(matches!(
            diode_pair_reflect(f64::NAN, 1e3, 1e-9, 0.025, 1.0),
            Err(WdfError::NonConvergence { .. })
        ));
    }
}
