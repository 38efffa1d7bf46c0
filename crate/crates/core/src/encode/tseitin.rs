//! Gate-consistency clausification.
//!
//! Each gate is constrained directly over its own terminal nets, so no
//! auxiliary variables are introduced and the satisfying assignments of the
//! result are exactly the consistent assignments of the circuit.

use crate::circuit::{Circuit, Gate, GateKind};

use super::clause::{Canonical, Clause, ClauseSystem, Literal};

/// Consistency clauses of one gate, before canonicalization.
pub fn gate_clauses(gate: &Gate) -> Vec<Vec<Literal>> {
    use Literal as L;
    let t = &gate.terminals;
    match gate.kind {
        GateKind::Not => {
            let (a, c) = (t[0], t[1]);
            vec![vec![L::pos(a), L::pos(c)], vec![L::neg(a), L::neg(c)]]
        }
        kind => {
            let (a, b, c) = (t[0], t[1], t[2]);
            match kind {
                GateKind::And => vec![
                    vec![L::neg(c), L::pos(a)],
                    vec![L::neg(c), L::pos(b)],
                    vec![L::pos(c), L::neg(a), L::neg(b)],
                ],
                GateKind::Or => vec![
                    vec![L::pos(c), L::neg(a)],
                    vec![L::pos(c), L::neg(b)],
                    vec![L::neg(c), L::pos(a), L::pos(b)],
                ],
                GateKind::Nand => vec![
                    vec![L::pos(c), L::pos(a)],
                    vec![L::pos(c), L::pos(b)],
                    vec![L::neg(c), L::neg(a), L::neg(b)],
                ],
                GateKind::Nor => vec![
                    vec![L::neg(c), L::neg(a)],
                    vec![L::neg(c), L::neg(b)],
                    vec![L::pos(c), L::pos(a), L::pos(b)],
                ],
                GateKind::Xor => vec![
                    vec![L::neg(a), L::neg(b), L::neg(c)],
                    vec![L::pos(a), L::pos(b), L::neg(c)],
                    vec![L::pos(a), L::neg(b), L::pos(c)],
                    vec![L::neg(a), L::pos(b), L::pos(c)],
                ],
                GateKind::Not => unreachable!(),
            }
        }
    }
}

/// Clausifies a circuit: gate clauses in gate order, then one unit clause per
/// pinned net in net order. Gates that repeat a net may yield duplicate
/// literals (merged) or tautologies (dropped).
pub fn tseitin(circuit: &Circuit) -> ClauseSystem {
    let mut clauses = Vec::new();
    for gate in circuit.gates() {
        for lits in gate_clauses(gate) {
            if let Canonical::Clause(c, _) = Clause::canonical(lits) {
                clauses.push(c);
            }
        }
    }
    for (&net, &value) in circuit.pins() {
        clauses.push(Clause::new(vec![Literal {
            net,
            positive: value,
        }]));
    }
    ClauseSystem::new(circuit.num_nets(), clauses)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::circuit::{Assignment, CircuitBuilder};

    #[test]
    fn and_gate_clauses() {
        let mut b = CircuitBuilder::new();
        let x = b.net();
        let y = b.net();
        b.gate(GateKind::And, &[x, y]);
        let sys = tseitin(&b.build());
        let expected = vec![
            Clause::new(vec![Literal::neg(2), Literal::pos(0)]),
            Clause::new(vec![Literal::neg(2), Literal::pos(1)]),
            Clause::new(vec![Literal::pos(2), Literal::neg(0), Literal::neg(1)]),
        ];
        assert_eq!(sys.clauses, expected);
    }

    #[test]
    fn clause_counts_per_kind() {
        for (kind, count) in [
            (GateKind::And, 3),
            (GateKind::Or, 3),
            (GateKind::Nand, 3),
            (GateKind::Nor, 3),
            (GateKind::Xor, 4),
            (GateKind::Not, 2),
        ] {
            let terminals = (0..=kind.arity()).collect();
            let gate = Gate::new(kind, terminals).unwrap();
            assert_eq!(gate_clauses(&gate).len(), count, "{kind}");
        }
    }

    #[test]
    fn pin_becomes_unit_clause() {
        let c = Circuit::new(1, vec![], BTreeMap::from([(0, true)]), None).unwrap();
        let sys = tseitin(&c);
        assert_eq!(sys.clauses, vec![Clause::new(vec![Literal::pos(0)])]);
    }

    #[test]
    fn xor_into_and_matches_consistency() {
        let mut b = CircuitBuilder::new();
        let x = b.net();
        let y = b.net();
        let z = b.net();
        let s = b.gate(GateKind::Xor, &[x, y]);
        b.gate(GateKind::And, &[s, z]);
        let c = b.build();
        let sys = tseitin(&c);
        let n = c.num_nets();
        assert_eq!(n, 5);
        for bits in 0..1u32 << n {
            let values: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            let consistent = c
                .check_consistent(&Assignment::from_dense(&values))
                .unwrap()
                .ok;
            assert_eq!(sys.satisfied_by(&values), consistent, "{values:?}");
        }
    }
}
