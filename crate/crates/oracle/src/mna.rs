//! Modified nodal analysis: trapezoidal transient and small-signal AC.
//!
//! Netlist lines (`*` starts a comment, node `0` is ground):
//!
//! ```text
//! Rname p q ohms
//! Cname p q farads
//! Vname p q IN            driven by the simulation input
//! Vname p q volts         constant
//! Dname p q IS=.. N=.. VT=..   antiparallel diode pair
//! Oname out inp inn       ideal op-amp (v(inp) = v(inn))
//! ```
//!
//! Element currents are reported flowing from `p` to `q` through the
//! element (for op-amps: out of the output pin into the node).

use std::collections::HashMap;

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Resistor(f64),
    Capacitor(f64),
    Source(Option<f64>),
    Diodes { is: f64, n: f64, vt: f64 },
    OpAmp,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    kind: Kind,
    /// Node indices; `None` is ground. For op-amps: out, inp, inn.
    nodes: Vec<Option<usize>>,
    /// Index of the extra MNA unknown (sources, op-amps).
    branch: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Netlist {
    elements: Vec<Element>,
    node_names: Vec<String>,
    node_index: HashMap<String, usize>,
    n_branches: usize,
}

impl Netlist {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut net = Netlist {
            elements: Vec::new(),
            node_names: Vec::new(),
            node_index: HashMap::new(),
            n_branches: 0,
        };
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('*') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |m: &str| format!("line {}: {m}: `{line}`", ln + 1);
            let name = fields[0].to_string();
            let want = |n: usize| if fields.len() < n { Err(err("too few fields")) } else { Ok(()) };
            let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
            let kind = match name.chars().next().unwrap().to_ascii_uppercase() {
                'R' => {
                    want(4)?;
                    Kind::Resistor(num(fields[3])?)
                }
                'C' => {
                    want(4)?;
                    Kind::Capacitor(num(fields[3])?)
                }
                'V' => {
                    want(4)?;
                    if fields[3].eq_ignore_ascii_case("IN") {
                        Kind::Source(None)
                    } else {
                        Kind::Source(Some(num(fields[fields.len() - 1])?))
                    }
                }
                'D' => {
                    want(3)?;
                    let mut params = HashMap::new();
                    for f in &fields[3..] {
                        let (k, v) = f.split_once('=').ok_or_else(|| err("expected KEY=value"))?;
                        params.insert(k.to_ascii_uppercase(), num(v)?);
                    }
                    let get = |k: &str| params.get(k).copied().ok_or_else(|| err("missing diode parameter"));
                    Kind::Diodes {
                        is: get("IS")?,
                        n: get("N")?,
                        vt: get("VT")?,
                    }
                }
                'O' => {
                    want(4)?;
                    Kind::OpAmp
                }
                _ => return Err(err("unknown element")),
            };
            let n_nodes = if kind == Kind::OpAmp { 3 } else { 2 };
            let nodes = fields[1..=n_nodes].iter().map(|n| net.node(n)).collect();
            let branch = match kind {
                Kind::Source(_) | Kind::OpAmp => {
                    net.n_branches += 1;
                    Some(net.n_branches - 1)
                }
                _ => None,
            };
            net.elements.push(Element {
                name,
                kind,
                nodes,
                branch,
            });
        }
        Ok(net)
    }

    fn node(&mut self, name: &str) -> Option<usize> {
        if name == "0" || name.eq_ignore_ascii_case("gnd") {
            return None;
        }
        if let Some(&i) = self.node_index.get(name) {
            return Some(i);
        }
        self.node_names.push(name.to_string());
        self.node_index.insert(name.to_string(), self.node_names.len() - 1);
        Some(self.node_names.len() - 1)
    }

    fn size(&self) -> usize {
        self.node_names.len() + self.n_branches
    }

    fn branch_row(&self, b: usize) -> usize {
        self.node_names.len() + b
    }

    fn element(&self, name: &str) -> &Element {
        self.elements
            .iter()
            .find(|e| e.name == name)
            .unwrap_or_else(|| panic!("no element `{name}`"))
    }

    /// Small-signal response with the `IN` source at 1 V and diodes open.
    /// Returns the complex voltage at `node`.
    pub fn ac_voltage(&self, node: &str, freq: f64) -> Complex64 {
        let s = Complex64::new(0.0, 2.0 * std::f64::consts::PI * freq);
        let n = self.size();
        let mut a = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        let mut rhs = vec![Complex64::new(0.0, 0.0); n];
        for e in &self.elements {
            match e.kind {
                Kind::Resistor(r) => stamp_g(&mut a, e.nodes[0], e.nodes[1], Complex64::new(1.0 / r, 0.0)),
                Kind::Capacitor(c) => stamp_g(&mut a, e.nodes[0], e.nodes[1], s * c),
                Kind::Diodes { .. } => {}
                Kind::Source(value) => {
                    let k = self.branch_row(e.branch.unwrap());
                    stamp_source(&mut a, k, e.nodes[0], e.nodes[1], Complex64::new(1.0, 0.0));
                    rhs[k] = Complex64::new(if value.is_none() { 1.0 } else { 0.0 }, 0.0);
                }
                Kind::OpAmp => stamp_opamp(&mut a, self.branch_row(e.branch.unwrap()), &e.nodes, Complex64::new(1.0, 0.0)),
            }
        }
        let x = solve(a, rhs);
        self.node_index.get(node).map(|&i| x[i]).unwrap_or_default()
    }
}

fn stamp_g<T>(a: &mut [Vec<T>], p: Option<usize>, q: Option<usize>, g: T)
where
    T: Copy + std::ops::AddAssign + std::ops::SubAssign,
{
    if let Some(p) = p {
        a[p][p] += g;
    }
    if let Some(q) = q {
        a[q][q] += g;
    }
    if let (Some(p), Some(q)) = (p, q) {
        a[p][q] -= g;
        a[q][p] -= g;
    }
}

fn stamp_source<T>(a: &mut [Vec<T>], k: usize, p: Option<usize>, q: Option<usize>, one: T)
where
    T: Copy + std::ops::AddAssign + std::ops::SubAssign,
{
    if let Some(p) = p {
        a[p][k] += one;
        a[k][p] += one;
    }
    if let Some(q) = q {
        a[q][k] -= one;
        a[k][q] -= one;
    }
}

fn stamp_opamp<T>(a: &mut [Vec<T>], k: usize, nodes: &[Option<usize>], one: T)
where
    T: Copy + std::ops::AddAssign + std::ops::SubAssign,
{
    // Output current variable enters the output node; constraint v+ = v-.
    if let Some(out) = nodes[0] {
        a[out][k] -= one;
    }
    if let Some(p) = nodes[1] {
        a[k][p] += one;
    }
    if let Some(m) = nodes[2] {
        a[k][m] -= one;
    }
}

trait Field:
    Copy
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::SubAssign
{
    fn magnitude(self) -> f64;
}

impl Field for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Field for Complex64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// Gaussian elimination with partial pivoting.
fn solve<T: Field>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Vec<T> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].magnitude().total_cmp(&a[j][col].magnitude()))
            .unwrap();
        assert!(a[pivot][col].magnitude() > 0.0, "singular MNA matrix");
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f.magnitude() == 0.0 {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = b.clone();
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

/// Trapezoidal-rule transient simulation.
#[derive(Debug, Clone)]
pub struct Transient {
    net: Netlist,
    dt: f64,
    x: Vec<f64>,
    /// Per element: (previous voltage, previous current) for capacitors.
    cap_hist: Vec<(f64, f64)>,
    currents: Vec<f64>,
    pub newton_iterations: usize,
}

impl Transient {
    pub fn new(net: Netlist, fs: f64) -> Self {
        let n = net.size();
        let m = net.elements.len();
        Self {
            net,
            dt: 1.0 / fs,
            x: vec![0.0; n],
            cap_hist: vec![(0.0, 0.0); m],
            currents: vec![0.0; m],
            newton_iterations: 0,
        }
    }

    fn v(&self, node: Option<usize>) -> f64 {
        node.map(|i| self.x[i]).unwrap_or(0.0)
    }

    /// Advance one sample with the `IN` source(s) at `input` volts.
    pub fn step(&mut self, input: f64) {
        let n = self.net.size();
        let mut base = vec![vec![0.0; n]; n];
        let mut rhs0 = vec![0.0; n];
        for (idx, e) in self.net.elements.iter().enumerate() {
            let (p, q) = (e.nodes[0], e.nodes.get(1).copied().flatten());
            match e.kind {
                Kind::Resistor(r) => stamp_g(&mut base, p, q, 1.0 / r),
                Kind::Capacitor(c) => {
                    let geq = 2.0 * c / self.dt;
                    let (v_prev, i_prev) = self.cap_hist[idx];
                    let ieq = -geq * v_prev - i_prev;
                    stamp_g(&mut base, p, q, geq);
                    if let Some(p) = p {
                        rhs0[p] -= ieq;
                    }
                    if let Some(q) = q {
                        rhs0[q] += ieq;
                    }
                }
                Kind::Source(value) => {
                    let k = self.net.branch_row(e.branch.unwrap());
                    stamp_source(&mut base, k, p, q, 1.0);
                    rhs0[k] = value.unwrap_or(input);
                }
                Kind::OpAmp => stamp_opamp(&mut base, self.net.branch_row(e.branch.unwrap()), &e.nodes, 1.0),
                Kind::Diodes { .. } => {}
            }
        }

        let has_diodes = self.net.elements.iter().any(|e| matches!(e.kind, Kind::Diodes { .. }));
        if !has_diodes {
            self.x = solve(base, rhs0);
        } else {
            let mut x = self.x.clone();
            let mut converged = false;
            for iter in 0..500 {
                let mut a = base.clone();
                let mut rhs = rhs0.clone();
                for e in &self.net.elements {
                    if let Kind::Diodes { is, n, vt } = e.kind {
                        let (p, q) = (e.nodes[0], e.nodes[1]);
                        let vd = p.map(|i| x[i]).unwrap_or(0.0) - q.map(|i| x[i]).unwrap_or(0.0);
                        let nvt = n * vt;
                        let i0 = 2.0 * is * (vd / nvt).sinh();
                        let g = 2.0 * is / nvt * (vd / nvt).cosh();
                        let ieq = i0 - g * vd;
                        stamp_g(&mut a, p, q, g);
                        if let Some(p) = p {
                            rhs[p] -= ieq;
                        }
                        if let Some(q) = q {
                            rhs[q] += ieq;
                        }
                    }
                }
                let x_new = solve(a, rhs);
                // limit diode-voltage steps to keep the exponentials tame
                let mut max_dvd: f64 = 0.0;
                for e in &self.net.elements {
                    if let Kind::Diodes { .. } = e.kind {
                        let vd = |x: &[f64]| {
                            e.nodes[0].map(|i| x[i]).unwrap_or(0.0) - e.nodes[1].map(|i| x[i]).unwrap_or(0.0)
                        };
                        max_dvd = max_dvd.max((vd(&x_new) - vd(&x)).abs());
                    }
                }
                let scale = if max_dvd > 0.1 { 0.1 / max_dvd } else { 1.0 };
                let mut delta: f64 = 0.0;
                let mut size: f64 = 0.0;
                for i in 0..n {
                    let d = scale * (x_new[i] - x[i]);
                    x[i] += d;
                    delta = delta.max(d.abs());
                    size = size.max(x[i].abs());
                }
                self.newton_iterations += 1;
                if scale == 1.0 && delta <= 1e-13 * (1.0 + size) {
                    converged = true;
                    let _ = iter;
                    break;
                }
            }
            assert!(converged, "MNA Newton iteration failed to converge");
            self.x = x;
        }

        for (idx, e) in self.net.elements.iter().enumerate() {
            let (p, q) = (e.nodes[0], e.nodes.get(1).copied().flatten());
            let vd = self.v(p) - self.v(q);
            self.currents[idx] = match e.kind {
                Kind::Resistor(r) => vd / r,
                Kind::Capacitor(c) => {
                    let geq = 2.0 * c / self.dt;
                    let (v_prev, i_prev) = self.cap_hist[idx];
                    let i = geq * (vd - v_prev) - i_prev;
                    self.cap_hist[idx] = (vd, i);
                    i
                }
                Kind::Source(_) => self.x[self.net.branch_row(e.branch.unwrap())],
                Kind::OpAmp => self.x[self.net.branch_row(e.branch.unwrap())],
                Kind::Diodes { is, n, vt } => 2.0 * is * (vd / (n * vt)).sinh(),
            };
        }
    }

    pub fn voltage(&self, node: &str) -> f64 {
        self.net.node_index.get(node).map(|&i| self.x[i]).unwrap_or(0.0)
    }

    pub fn current(&self, element: &str) -> f64 {
        let idx = self
            .net
            .elements
            .iter()
            .position(|e| e.name == element)
            .unwrap_or_else(|| panic!("no element `{element}`"));
        self.currents[idx]
    }

    /// Voltage across an element, first node minus second.
    pub fn element_voltage(&self, element: &str) -> f64 {
        let e = self.net.element(element);
        self.v(e.nodes[0]) - self.v(e.nodes.get(1).copied().flatten())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divider_and_rc_step() {
        let net = Netlist::parse("V1 in 0 IN\nR1 in out 1000\nR2 out 0 1000\n").unwrap();
        let mut sim = Transient::new(net, 1000.0);
        sim.step(1.0);
        assert!((sim.voltage("out") - 0.5).abs() < 1e-15);
        assert!((sim.current("R1") - 5e-4).abs() < 1e-15);

        // RC low-pass: tau = 1 ms, step response after 5 ms ~ 1 - e^-5.
        let net = Netlist::parse("V1 in 0 IN\nR1 in out 1000\nC1 out 0 1e-6\n").unwrap();
        let mut sim = Transient::new(net, 1e6);
        for _ in 0..5000 {
            sim.step(1.0);
        }
        assert!((sim.voltage("out") - (1.0 - (-5.0f64).exp())).abs() < 1e-5);
    }

    #[test]
    fn opamp_inverting_gain() {
        let net = Netlist::parse("V1 in 0 IN\nR1 in m 1000\nR2 m out 4700\nO1 out 0 m\n").unwrap();
        let mut sim = Transient::new(net.clone(), 1000.0);
        sim.step(0.1);
        assert!((sim.voltage("out") + 0.47).abs() < 1e-12);
        assert!((net.ac_voltage("out", 1000.0) + 4.7).norm() < 1e-12);
    }

    #[test]
    fn diode_clamps() {
        let net = Netlist::parse("V1 in 0 IN\nR1 in d 1000\nD1 d 0 IS=2.52e-9 N=1.75 VT=0.02585\n").unwrap();
        let mut sim = Transient::new(net, 1000.0);
        sim.step(10.0);
        let v = sim.voltage("d");
        assert!(v > 0.5 && v < 0.7);
        let i = sim.current("D1");
        assert!((i - (10.0 - v) / 1000.0).abs() < 1e-12);
        sim.step(-10.0);
        assert!((sim.voltage("d") + v).abs() < 1e-12);
    }
}
