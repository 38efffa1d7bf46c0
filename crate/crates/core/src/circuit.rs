//! Terminal-agnostic Boolean circuits.
//!
//! A [`Circuit`] is a set of nets joined by fan-in-2 gates (plus `NOT`). Gates
//! carry no direction as far as consistency is concerned: a gate is satisfied
//! when the tuple of values on its terminals is one of the rows of its truth
//! table. Compilers additionally record a topological gate order so the same
//! circuit can be evaluated forward as an oracle.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NetId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CircuitError {
    #[error("circuit has no orientation; forward evaluation is undefined")]
    NoOrientation,
    #[error("net {0} is not driven by any gate and has no input value")]
    MissingInput(NetId),
    #[error("assignment is partial: net {0} has no value")]
    PartialAssignment(NetId),
    #[error("net {net} out of range (circuit has {num_nets} nets)")]
    NetOutOfRange { net: NetId, num_nets: usize },
    #[error("{kind} gate expects {expected} terminals, got {got}")]
    Arity {
        kind: GateKind,
        expected: usize,
        got: usize,
    },
    #[error("invalid orientation: {0}")]
    BadOrientation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    And,
    Or,
    Xor,
    Nand,
    Nor,
    Not,
}

impl GateKind {
    pub const ALL: [GateKind; 6] = [
        GateKind::And,
        GateKind::Or,
        GateKind::Xor,
        GateKind::Nand,
        GateKind::Nor,
        GateKind::Not,
    ];

    /// Number of input terminals.
    pub fn arity(self) -> usize {
        match self {
            GateKind::Not => 1,
            _ => 2,
        }
    }

    /// Output value of the gate's proposition for the given inputs.
    pub fn apply(self, inputs: &[bool]) -> bool {
        match self {
            GateKind::Not => !inputs[0],
            GateKind::And => inputs[0] && inputs[1],
            GateKind::Or => inputs[0] || inputs[1],
            GateKind::Xor => inputs[0] ^ inputs[1],
            GateKind::Nand => !(inputs[0] && inputs[1]),
            GateKind::Nor => !(inputs[0] || inputs[1]),
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GateKind::And => "AND",
            GateKind::Or => "OR",
            GateKind::Xor => "XOR",
            GateKind::Nand => "NAND",
            GateKind::Nor => "NOR",
            GateKind::Not => "NOT",
        };
        f.write_str(s)
    }
}

/// All terminal tuples `(in1, [in2,] out)` consistent with `kind`.
///
/// Rows are listed with the first input varying fastest, so for `AND` the
/// result is `(0,0,0), (1,0,0), (0,1,0), (1,1,1)`.
pub fn truth_rows(kind: GateKind) -> Vec<Vec<bool>> {
    let arity = kind.arity();
    (0..1usize << arity)
        .map(|bits| {
            let mut row: Vec<bool> = (0..arity).map(|i| bits >> i & 1 == 1).collect();
            let out = kind.apply(&row);
            row.push(out);
            row
        })
        .collect()
}

/// Whether a full terminal tuple (inputs followed by output) is a truth-table row.
pub fn row_consistent(kind: GateKind, terminals: &[bool]) -> bool {
    let (out, ins) = terminals.split_last().expect("gate has terminals");
    kind.apply(ins) == *out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    /// Input nets followed by the output net.
    pub terminals: Vec<NetId>,
}

impl Gate {
    pub fn new(kind: GateKind, terminals: Vec<NetId>) -> Result<Self, CircuitError> {
        if terminals.len() != kind.arity() + 1 {
            return Err(CircuitError::Arity {
                kind,
                expected: kind.arity() + 1,
                got: terminals.len(),
            });
        }
        Ok(Gate { kind, terminals })
    }

    pub fn inputs(&self) -> &[NetId] {
        &self.terminals[..self.terminals.len() - 1]
    }

    pub fn output(&self) -> NetId {
        *self.terminals.last().expect("gate has terminals")
    }
}

/// A (possibly partial) map from net id to logic value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(pub BTreeMap<NetId, bool>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, net: NetId) -> Option<bool> {
        self.0.get(&net).copied()
    }

    pub fn set(&mut self, net: NetId, value: bool) {
        self.0.insert(net, value);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every net in `0..num_nets` has a value.
    pub fn is_total(&self, num_nets: usize) -> bool {
        (0..num_nets).all(|n| self.0.contains_key(&n))
    }

    pub fn iter(&self) -> impl Iterator<Item = (NetId, bool)> + '_ {
        self.0.iter().map(|(&n, &v)| (n, v))
    }

    /// Dense view; `None` if any net below `num_nets` is missing.
    pub fn to_dense(&self, num_nets: usize) -> Option<Vec<bool>> {
        (0..num_nets).map(|n| self.get(n)).collect()
    }

    pub fn from_dense(values: &[bool]) -> Self {
        Assignment(values.iter().copied().enumerate().collect())
    }

    /// Reads `bits` (little-endian net list) as an unsigned integer.
    pub fn read_uint(&self, bits: &[NetId]) -> Option<u64> {
        bits.iter().enumerate().try_fold(0u64, |acc, (i, &net)| {
            self.get(net).map(|b| acc | (u64::from(b) << i))
        })
    }
}

impl FromIterator<(NetId, bool)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (NetId, bool)>>(iter: I) -> Self {
        Assignment(iter.into_iter().collect())
    }
}

/// Which constraint a consistency check found broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Violation {
    Gate(usize),
    Pin(NetId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Consistency {
    pub ok: bool,
    /// Gate violations in gate index order, then pin violations in net order.
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    num_nets: usize,
    pins: BTreeMap<NetId, bool>,
    gates: Vec<Gate>,
    orientation: Option<Vec<usize>>,
}

impl Circuit {
    /// Builds a circuit, checking terminal ranges and, when given, that
    /// `orientation` is a topological order in which every driven net has
    /// exactly one driver.
    pub fn new(
        num_nets: usize,
        gates: Vec<Gate>,
        pins: BTreeMap<NetId, bool>,
        orientation: Option<Vec<usize>>,
    ) -> Result<Self, CircuitError> {
        for gate in &gates {
            if gate.terminals.len() != gate.kind.arity() + 1 {
                return Err(CircuitError::Arity {
                    kind: gate.kind,
                    expected: gate.kind.arity() + 1,
                    got: gate.terminals.len(),
                });
            }
            if let Some(&net) = gate.terminals.iter().find(|&&n| n >= num_nets) {
                return Err(CircuitError::NetOutOfRange { net, num_nets });
            }
        }
        if let Some(&net) = pins.keys().find(|&&n| n >= num_nets) {
            return Err(CircuitError::NetOutOfRange { net, num_nets });
        }
        let circuit = Circuit {
            num_nets,
            pins,
            gates,
            orientation,
        };
        if let Some(order) = &circuit.orientation {
            circuit.validate_orientation(order)?;
        }
        Ok(circuit)
    }

    fn validate_orientation(&self, order: &[usize]) -> Result<(), CircuitError> {
        if order.len() != self.gates.len() {
            return Err(CircuitError::BadOrientation(format!(
                "order lists {} gates, circuit has {}",
                order.len(),
                self.gates.len()
            )));
        }
        let mut seen = vec![false; self.gates.len()];
        let mut driver = vec![None; self.num_nets];
        for &g in order {
            if g >= self.gates.len() || std::mem::replace(&mut seen[g], true) {
                return Err(CircuitError::BadOrientation(format!(
                    "gate {g} missing or repeated"
                )));
            }
            let out = self.gates[g].output();
            if driver[out].replace(g).is_some() {
                return Err(CircuitError::BadOrientation(format!(
                    "net {out} driven by more than one gate"
                )));
            }
        }
        let mut ready: Vec<bool> = driver.iter().map(Option::is_none).collect();
        for &g in order {
            let gate = &self.gates[g];
            if let Some(&net) = gate.inputs().iter().find(|&&n| !ready[n]) {
                return Err(CircuitError::BadOrientation(format!(
                    "gate {g} reads net {net} before it is driven"
                )));
            }
            ready[gate.output()] = true;
        }
        Ok(())
    }

    pub fn num_nets(&self) -> usize {
        self.num_nets
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn pins(&self) -> &BTreeMap<NetId, bool> {
        &self.pins
    }

    pub fn pin(&self, net: NetId) -> Option<bool> {
        self.pins.get(&net).copied()
    }

    pub fn orientation(&self) -> Option<&[usize]> {
        self.orientation.as_deref()
    }

    /// Nets not written by any gate (the free inputs of an oriented circuit).
    pub fn undriven_nets(&self) -> Vec<NetId> {
        let mut driven = vec![false; self.num_nets];
        for gate in &self.gates {
            driven[gate.output()] = true;
        }
        (0..self.num_nets).filter(|&n| !driven[n]).collect()
    }

    /// Evaluates gates in orientation order. Pins are not enforced.
    pub fn eval_forward(&self, inputs: &Assignment) -> Result<Assignment, CircuitError> {
        let order = self
            .orientation
            .as_ref()
            .ok_or(CircuitError::NoOrientation)?;
        let mut values: Vec<Option<bool>> = vec![None; self.num_nets];
        for net in self.undriven_nets() {
            values[net] = Some(inputs.get(net).ok_or(CircuitError::MissingInput(net))?);
        }
        let mut buf = Vec::with_capacity(2);
        for &g in order {
            let gate = &self.gates[g];
            buf.clear();
            for &net in gate.inputs() {
                buf.push(values[net].ok_or(CircuitError::MissingInput(net))?);
            }
            values[gate.output()] = Some(gate.kind.apply(&buf));
        }
        Ok(values
            .into_iter()
            .enumerate()
            .map(|(n, v)| (n, v.expect("every net driven or input")))
            .collect())
    }

    /// Checks every gate row and every pin against a total assignment.
    pub fn check_consistent(&self, a: &Assignment) -> Result<Consistency, CircuitError> {
        let values = a.to_dense(self.num_nets).ok_or_else(|| {
            let missing = (0..self.num_nets)
                .find(|&n| a.get(n).is_none())
                .unwrap_or(0);
            CircuitError::PartialAssignment(missing)
        })?;
        Ok(self.check_dense(&values))
    }

    pub(crate) fn check_dense(&self, values: &[bool]) -> Consistency {
        let mut violations = Vec::new();
        let mut row = Vec::with_capacity(3);
        for (i, gate) in self.gates.iter().enumerate() {
            row.clear();
            row.extend(gate.terminals.iter().map(|&n| values[n]));
            if !row_consistent(gate.kind, &row) {
                violations.push(Violation::Gate(i));
            }
        }
        for (&net, &pin) in &self.pins {
            if values[net] != pin {
                violations.push(Violation::Pin(net));
            }
        }
        Consistency {
            ok: violations.is_empty(),
            violations,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CircuitDoc::from(self)).expect("circuit serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CircuitJsonError> {
        let doc: CircuitDoc = serde_json::from_str(text)?;
        Ok(doc.try_into()?)
    }
}

#[derive(Debug, Error)]
pub enum CircuitJsonError {
    #[error("malformed circuit JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// On-disk shape of a circuit.
#[derive(Debug, Serialize, Deserialize)]
struct CircuitDoc {
    nets: usize,
    pins: BTreeMap<NetId, u8>,
    gates: Vec<Gate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orientation: Option<Vec<usize>>,
}

impl From<&Circuit> for CircuitDoc {
    fn from(c: &Circuit) -> Self {
        CircuitDoc {
            nets: c.num_nets,
            pins: c.pins.iter().map(|(&n, &b)| (n, u8::from(b))).collect(),
            gates: c.gates.clone(),
            orientation: c.orientation.clone(),
        }
    }
}

impl TryFrom<CircuitDoc> for Circuit {
    type Error = CircuitError;

    fn try_from(doc: CircuitDoc) -> Result<Self, Self::Error> {
        let pins = doc.pins.into_iter().map(|(n, b)| (n, b != 0)).collect();
        Circuit::new(doc.nets, doc.gates, pins, doc.orientation)
    }
}

/// Incremental construction of oriented circuits. Gates are recorded in
/// creation order, which is always a valid topological order.
#[derive(Debug, Default)]
pub struct CircuitBuilder {
    num_nets: usize,
    gates: Vec<Gate>,
    pins: BTreeMap<NetId, bool>,
}

impl CircuitBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn net(&mut self) -> NetId {
        self.num_nets += 1;
        self.num_nets - 1
    }

    pub fn nets(&mut self, count: usize) -> Vec<NetId> {
        (0..count).map(|_| self.net()).collect()
    }

    /// Adds a gate driving a fresh net and returns that net.
    pub fn gate(&mut self, kind: GateKind, inputs: &[NetId]) -> NetId {
        assert_eq!(inputs.len(), kind.arity(), "{kind} arity");
        let out = self.net();
        let mut terminals = inputs.to_vec();
        terminals.push(out);
        self.gates.push(Gate { kind, terminals });
        out
    }

    pub fn pin(&mut self, net: NetId, value: bool) {
        self.pins.insert(net, value);
    }

    pub fn num_nets(&self) -> usize {
        self.num_nets
    }

    /// `(sum, carry)` of two bits.
    pub fn half_adder(&mut self, a: NetId, b: NetId) -> (NetId, NetId) {
        let sum = self.gate(GateKind::Xor, &[a, b]);
        let carry = self.gate(GateKind::And, &[a, b]);
        (sum, carry)
    }

    /// `(sum, carry)` of three bits, built from XOR/AND/OR.
    pub fn full_adder(&mut self, a: NetId, b: NetId, c: NetId) -> (NetId, NetId) {
        let ab = self.gate(GateKind::Xor, &[a, b]);
        let sum = self.gate(GateKind::Xor, &[ab, c]);
        let c1 = self.gate(GateKind::And, &[a, b]);
        let c2 = self.gate(GateKind::And, &[ab, c]);
        let carry = self.gate(GateKind::Or, &[c1, c2]);
        (sum, carry)
    }

    /// Ripple-carry addition of two little-endian bit vectors in which `None`
    /// stands for a constant zero. The result is one column wider than the
    /// wider operand unless no carry can reach that column.
    pub fn add(&mut self, a: &[Option<NetId>], b: &[Option<NetId>]) -> Vec<Option<NetId>> {
        let width = a.len().max(b.len());
        let mut out = Vec::with_capacity(width + 1);
        let mut carry: Option<NetId> = None;
        for i in 0..width {
            let bits: Vec<NetId> = [
                a.get(i).copied().flatten(),
                b.get(i).copied().flatten(),
                carry,
            ]
            .into_iter()
            .flatten()
            .collect();
            let (sum, next) = match bits.as_slice() {
                [] => (None, None),
                [x] => (Some(*x), None),
                [x, y] => {
                    let (s, c) = self.half_adder(*x, *y);
                    (Some(s), Some(c))
                }
                [x, y, z] => {
                    let (s, c) = self.full_adder(*x, *y, *z);
                    (Some(s), Some(c))
                }
                _ => unreachable!(),
            };
            out.push(sum);
            carry = next;
        }
        out.push(carry);
        while out.len() > width.max(1) && out.last() == Some(&None) {
            out.pop();
        }
        out
    }

    pub fn build(self) -> Circuit {
        let order = (0..self.gates.len()).collect();
        Circuit::new(self.num_nets, self.gates, self.pins, Some(order))
            .expect("builder produces valid circuits")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(row: &[u8]) -> Vec<bool> {
        row.iter().map(|&b| b == 1).collect()
    }

    #[test]
    fn and_rows_match_table() {
        let rows = truth_rows(GateKind::And);
        let expected: Vec<Vec<bool>> = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 1]]
            .iter()
            .map(|r| bits(r))
            .collect();
        assert_eq!(rows, expected);
    }

    #[test]
    fn not_and_xor_rows() {
        assert_eq!(
            truth_rows(GateKind::Not),
            vec![bits(&[0, 1]), bits(&[1, 0])]
        );
        let xor: Vec<Vec<bool>> = [[0, 0, 0], [1, 0, 1], [0, 1, 1], [1, 1, 0]]
            .iter()
            .map(|r| bits(r))
            .collect();
        assert_eq!(truth_rows(GateKind::Xor), xor);
    }

    #[test]
    fn row_counts() {
        for kind in GateKind::ALL {
            assert_eq!(truth_rows(kind).len(), 1 << kind.arity());
        }
    }

    fn single_and() -> Circuit {
        let mut b = CircuitBuilder::new();
        let x = b.net();
        let y = b.net();
        b.gate(GateKind::And, &[x, y]);
        b.build()
    }

    #[test]
    fn forward_and() {
        let c = single_and();
        let out = c
            .eval_forward(&Assignment::from_dense(&[true, true]))
            .unwrap();
        assert_eq!(out.get(2), Some(true));
    }

    #[test]
    fn forward_requires_orientation_and_inputs() {
        let c = single_and();
        let bare = Circuit::new(3, c.gates().to_vec(), BTreeMap::new(), None).unwrap();
        assert_eq!(
            bare.eval_forward(&Assignment::new()),
            Err(CircuitError::NoOrientation)
        );
        let partial: Assignment = [(0, true)].into_iter().collect();
        assert_eq!(c.eval_forward(&partial), Err(CircuitError::MissingInput(1)));
    }

    #[test]
    fn consistency_of_and_rows() {
        let c = single_and();
        let ok = c
            .check_consistent(&Assignment::from_dense(&[true, true, true]))
            .unwrap();
        assert!(ok.ok && ok.violations.is_empty());
        let bad = c
            .check_consistent(&Assignment::from_dense(&[true, true, false]))
            .unwrap();
        assert_eq!(bad.violations, vec![Violation::Gate(0)]);
        assert!(matches!(
            c.check_consistent(&Assignment::from_dense(&[true])),
            Err(CircuitError::PartialAssignment(1))
        ));
    }

    #[test]
    fn pins_are_reported_after_gates() {
        let mut b = CircuitBuilder::new();
        let x = b.net();
        let y = b.net();
        let z = b.gate(GateKind::Or, &[x, y]);
        b.pin(z, true);
        b.pin(x, true);
        let c = b.build();
        let r = c
            .check_consistent(&Assignment::from_dense(&[false, false, true]))
            .unwrap();
        assert_eq!(r.violations, vec![Violation::Gate(0), Violation::Pin(0)]);
    }

    #[test]
    fn rejects_bad_orientation() {
        let g0 = Gate::new(GateKind::Not, vec![0, 1]).unwrap();
        let g1 = Gate::new(GateKind::Not, vec![1, 2]).unwrap();
        let err = Circuit::new(
            3,
            vec![g0.clone(), g1.clone()],
            BTreeMap::new(),
            Some(vec![1, 0]),
        );
        assert!(matches!(err, Err(CircuitError::BadOrientation(_))));
        let dup = Gate::new(GateKind::Not, vec![0, 2]).unwrap();
        let err = Circuit::new(3, vec![g1, dup], BTreeMap::new(), Some(vec![0, 1]));
        assert!(matches!(err, Err(CircuitError::BadOrientation(_))));
        assert!(Gate::new(GateKind::And, vec![0, 1]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut b = CircuitBuilder::new();
        let x = b.net();
        let y = b.net();
        let s = b.gate(GateKind::Xor, &[x, y]);
        let n = b.gate(GateKind::Not, &[s]);
        b.pin(n, false);
        let c = b.build();
        let text = c.to_json();
        assert!(text.contains("\"nets\"") && text.contains("\"XOR\""));
        assert_eq!(Circuit::from_json(&text).unwrap(), c);

        let plain =
            r#"{"nets": 3, "pins": {"2": 1}, "gates": [{"kind": "NAND", "terminals": [0, 1, 2]}]}"#;
        let c = Circuit::from_json(plain).unwrap();
        assert_eq!(c.orientation(), None);
        assert_eq!(c.pin(2), Some(true));
        assert!(Circuit::from_json(
            r#"{"nets": 1, "pins": {}, "gates": [{"kind": "NOT", "terminals": [0, 4]}]}"#
        )
        .is_err());
    }

    #[test]
    fn adder_sums_small_numbers() {
        for x in 0..8u64 {
            for y in 0..4u64 {
                let mut b = CircuitBuilder::new();
                let xa = b.nets(3);
                let ya = b.nets(2);
                let wrap = |v: &Vec<NetId>| v.iter().map(|&n| Some(n)).collect::<Vec<_>>();
                let sum = b.add(&wrap(&xa), &wrap(&ya));
                let c = b.build();
                let mut input = Assignment::new();
                for (i, &n) in xa.iter().enumerate() {
                    input.set(n, x >> i & 1 == 1);
                }
                for (i, &n) in ya.iter().enumerate() {
                    input.set(n, y >> i & 1 == 1);
                }
                let out = c.eval_forward(&input).unwrap();
                let nets: Vec<NetId> = sum.iter().map(|n| n.unwrap()).collect();
                assert_eq!(out.read_uint(&nets), Some(x + y));
            }
        }
    }
}
