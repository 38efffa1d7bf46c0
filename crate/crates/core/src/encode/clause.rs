use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SystemJsonError;
use crate::circuit::{Assignment, NetId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub net: NetId,
    /// `true` means the net must be logical 1 for the literal to hold.
    pub positive: bool,
}

impl Literal {
    pub fn pos(net: NetId) -> Self {
        Literal {
            net,
            positive: true,
        }
    }

    pub fn neg(net: NetId) -> Self {
        Literal {
            net,
            positive: false,
        }
    }

    /// `+1.0` or `-1.0`.
    pub fn sign(self) -> f64 {
        if self.positive {
            1.0
        } else {
            -1.0
        }
    }

    pub fn holds(self, value: bool) -> bool {
        value == self.positive
    }

    /// Builds from a signed 1-based DIMACS-style integer.
    pub fn from_dimacs(lit: i64) -> Self {
        Literal {
            net: (lit.unsigned_abs() - 1) as NetId,
            positive: lit > 0,
        }
    }

    pub fn to_dimacs(self) -> i64 {
        let v = self.net as i64 + 1;
        if self.positive {
            v
        } else {
            -v
        }
    }
}

/// Outcome of canonicalizing a literal list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Canonical {
    Clause(Clause, usize),
    Tautology,
    Empty,
}

/// A disjunction of literals over distinct nets, sorted by net id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Clause {
    literals: Vec<Literal>,
}

impl Clause {
    /// Sorts, merges duplicate literals and detects complementary pairs.
    /// Returns the clause together with the number of merged duplicates.
    pub fn canonical(mut literals: Vec<Literal>) -> Canonical {
        if literals.is_empty() {
            return Canonical::Empty;
        }
        literals.sort();
        let before = literals.len();
        literals.dedup();
        let merged = before - literals.len();
        if literals.windows(2).any(|w| w[0].net == w[1].net) {
            return Canonical::Tautology;
        }
        Canonical::Clause(Clause { literals }, merged)
    }

    /// Convenience constructor for known-good literal lists.
    ///
    /// Panics on empty or tautological input.
    pub fn new(literals: Vec<Literal>) -> Self {
        match Clause::canonical(literals) {
            Canonical::Clause(c, _) => c,
            other => panic!("not a proper clause: {other:?}"),
        }
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    pub fn satisfied_by(&self, values: &[bool]) -> bool {
        self.literals.iter().any(|l| l.holds(values[l.net]))
    }
}

/// A CNF formula over nets `0..num_nets`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseSystem {
    pub num_nets: usize,
    pub clauses: Vec<Clause>,
    /// Problem-level names (e.g. `p3`, `sel0`) for selected nets.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub origin: BTreeMap<String, NetId>,
}

impl ClauseSystem {
    pub fn new(num_nets: usize, clauses: Vec<Clause>) -> Self {
        debug_assert!(clauses
            .iter()
            .all(|c| c.literals().iter().all(|l| l.net < num_nets)));
        ClauseSystem {
            num_nets,
            clauses,
            origin: BTreeMap::new(),
        }
    }

    pub fn with_origin(mut self, origin: BTreeMap<String, NetId>) -> Self {
        self.origin = origin;
        self
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.num_nets == 0 && self.clauses.is_empty()
    }

    /// Indices of clauses violated by a dense assignment.
    pub fn violated(&self, values: &[bool]) -> Vec<usize> {
        self.clauses
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.satisfied_by(values))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn satisfied_by(&self, values: &[bool]) -> bool {
        self.clauses.iter().all(|c| c.satisfied_by(values))
    }

    /// `false` for partial assignments.
    pub fn satisfied_by_assignment(&self, a: &Assignment) -> bool {
        a.to_dense(self.num_nets)
            .is_some_and(|values| self.satisfied_by(&values))
    }

    /// Reads the JSON form, re-checking net ranges and canonicalizing
    /// every clause.
    pub fn from_json(text: &str) -> Result<Self, SystemJsonError> {
        let raw: ClauseSystem =
            serde_json::from_str(text).map_err(|e| SystemJsonError::Json(e.to_string()))?;
        let mut clauses = Vec::with_capacity(raw.clauses.len());
        for (index, clause) in raw.clauses.into_iter().enumerate() {
            if let Some(l) = clause.literals().iter().find(|l| l.net >= raw.num_nets) {
                return Err(SystemJsonError::NetOutOfRange {
                    clause: index,
                    net: l.net,
                });
            }
            match Clause::canonical(clause.literals().to_vec()) {
                Canonical::Clause(c, _) => clauses.push(c),
                _ => return Err(SystemJsonError::Degenerate { clause: index }),
            }
        }
        for (name, &net) in &raw.origin {
            if net >= raw.num_nets {
                return Err(SystemJsonError::OriginOutOfRange {
                    name: name.clone(),
                    net,
                });
            }
        }
        Ok(ClauseSystem::new(raw.num_nets, clauses).with_origin(raw.origin))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("system serializes")
    }

    /// DIMACS CNF text of the system.
    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.num_nets, self.clauses.len());
        for clause in &self.clauses {
            for lit in clause.literals() {
                out.push_str(&lit.to_dimacs().to_string());
                out.push(' ');
            }
            out.push_str("0\n");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::SystemJsonError;
    use super::*;

    #[test]
    fn json_round_trip_and_validation() {
        let sys = ClauseSystem::new(3, vec![Clause::new(vec![Literal::pos(0), Literal::neg(2)])])
            .with_origin(BTreeMap::from([("sel0".to_string(), 0)]));
        assert_eq!(ClauseSystem::from_json(&sys.to_json()).unwrap(), sys);
        let bad = r#"{"num_nets":1,"clauses":[[{"net":1,"positive":true}]]}"#;
        assert_eq!(
            ClauseSystem::from_json(bad),
            Err(SystemJsonError::NetOutOfRange { clause: 0, net: 1 })
        );
        let taut =
            r#"{"num_nets":1,"clauses":[[{"net":0,"positive":true},{"net":0,"positive":false}]]}"#;
        assert_eq!(
            ClauseSystem::from_json(taut),
            Err(SystemJsonError::Degenerate { clause: 0 })
        );
        assert!(matches!(
            ClauseSystem::from_json("{"),
            Err(SystemJsonError::Json(_))
        ));
    }

    #[test]
    fn canonical_merges_and_drops() {
        let c = Clause::canonical(vec![Literal::pos(2), Literal::neg(0), Literal::pos(2)]);
        assert_eq!(
            c,
            Canonical::Clause(Clause::new(vec![Literal::neg(0), Literal::pos(2)]), 1)
        );
        assert_eq!(
            Clause::canonical(vec![Literal::pos(1), Literal::neg(1)]),
            Canonical::Tautology
        );
        assert_eq!(Clause::canonical(vec![]), Canonical::Empty);
    }

    #[test]
    fn dimacs_literals() {
        assert_eq!(Literal::from_dimacs(-3), Literal::neg(2));
        assert_eq!(Literal::pos(0).to_dimacs(), 1);
    }

    #[test]
    fn satisfaction() {
        let sys = ClauseSystem::new(
            2,
            vec![
                Clause::new(vec![Literal::pos(0), Literal::neg(1)]),
                Clause::new(vec![Literal::pos(1)]),
            ],
        );
        assert!(sys.satisfied_by(&[true, true]));
        assert_eq!(sys.violated(&[false, true]), vec![0]);
        let partial: Assignment = [(0, true)].into_iter().collect();
        assert!(!sys.satisfied_by_assignment(&partial));
    }
}
