//! Propositional analysis of conditions by exhaustive enumeration.
//!
//! Atoms are `(signal_type, name)` pairs treated as Boolean variables.
//! Softmax-exclusive groups contribute at-most-one constraints. With at most
//! [`MAX_ATOMS`] variables every question is answered by walking the 2^n
//! assignments, which keeps the procedure obviously correct.

use std::fmt;

use thiserror::Error;

use crate::dsl::{Atom, CondKind, Condition, Program, SignalType};

/// Enumeration bound.
pub const MAX_ATOMS: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomKey {
    pub signal_type: SignalType,
    pub name: String,
}

impl AtomKey {
    pub fn new(signal_type: SignalType, name: impl Into<String>) -> Self {
        AtomKey {
            signal_type,
            name: name.into(),
        }
    }
}

impl From<&Atom> for AtomKey {
    fn from(a: &Atom) -> Self {
        AtomKey::new(a.signal_type, a.name.clone())
    }
}

impl fmt::Display for AtomKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({:?})", self.signal_type, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("analysis incomplete: {0} distinct atoms exceed the enumeration bound of {MAX_ATOMS}")]
    UniverseOverflow(usize),
    #[error("atom {0} is not part of the analysis universe")]
    UnknownAtom(AtomKey),
}

/// Truth values for every atom of a universe, one bit per atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment(pub u32);

impl Assignment {
    pub fn get(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }
}

#[derive(Debug, Clone, Default)]
pub struct AtomUniverse {
    atoms: Vec<AtomKey>,
    exclusive: Vec<Vec<usize>>,
}

impl AtomUniverse {
    /// Universe over `atoms`, deduplicated in first-seen order.
    pub fn new(atoms: impl IntoIterator<Item = AtomKey>) -> Result<Self, AnalysisError> {
        let mut out: Vec<AtomKey> = Vec::new();
        for a in atoms {
            if !out.contains(&a) {
                out.push(a);
            }
        }
        if out.len() > MAX_ATOMS {
            return Err(AnalysisError::UniverseOverflow(out.len()));
        }
        Ok(AtomUniverse {
            atoms: out,
            exclusive: Vec::new(),
        })
    }

    pub fn from_conditions<'a>(conds: impl IntoIterator<Item = &'a Condition>) -> Result<Self, AnalysisError> {
        let mut keys = Vec::new();
        for c in conds {
            c.for_each_atom(&mut |a, _| keys.push(AtomKey::from(a)));
        }
        Self::new(keys)
    }

    /// Add an at-most-one constraint. Members outside the universe are
    /// ignored; a constraint left with fewer than two members is dropped.
    pub fn add_exclusive<'a>(&mut self, set: impl IntoIterator<Item = &'a AtomKey>) {
        let mut idx: Vec<usize> = set.into_iter().filter_map(|k| self.index(k)).collect();
        idx.sort_unstable();
        idx.dedup();
        if idx.len() >= 2 && !self.exclusive.contains(&idx) {
            self.exclusive.push(idx);
        }
    }

    /// Add the at-most-one constraints implied by `program`'s groups.
    pub fn with_groups(mut self, program: &Program) -> Self {
        for set in group_exclusivity(program) {
            self.add_exclusive(&set);
        }
        self
    }

    pub fn atoms(&self) -> &[AtomKey] {
        &self.atoms
    }

    pub fn exclusive_sets(&self) -> &[Vec<usize>] {
        &self.exclusive
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn index(&self, key: &AtomKey) -> Option<usize> {
        self.atoms.iter().position(|a| a == key)
    }

    pub fn is_feasible(&self, a: Assignment) -> bool {
        self.exclusive
            .iter()
            .all(|set| set.iter().filter(|&&i| a.get(i)).count() <= 1)
    }

    /// All assignments that respect the exclusivity constraints.
    pub fn feasible(&self) -> impl Iterator<Item = Assignment> + '_ {
        let masks: Vec<u32> = self
            .exclusive
            .iter()
            .map(|s| s.iter().fold(0u32, |m, &i| m | 1 << i))
            .collect();
        (0..1u64 << self.atoms.len())
            .map(|bits| Assignment(bits as u32))
            .filter(move |a| masks.iter().all(|m| (a.0 & m).count_ones() <= 1))
    }

    /// Number of assignments enumerated for one query.
    pub fn assignment_count(&self) -> u64 {
        1u64 << self.atoms.len()
    }
}

/// At-most-one sets contributed by groups whose threshold exceeds 1/k.
pub fn group_exclusivity(program: &Program) -> Vec<Vec<AtomKey>> {
    program
        .groups
        .iter()
        .filter(|g| g.guarantees_exclusion())
        .map(|g| {
            g.members
                .iter()
                .filter_map(|m| program.signal(m))
                .map(|s| AtomKey::new(s.signal_type, s.name.clone()))
                .collect::<Vec<_>>()
        })
        .filter(|set| set.len() >= 2)
        .collect()
}

/// A condition lowered onto universe indices.
#[derive(Debug, Clone)]
pub enum Formula {
    Var(usize),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn compile(c: &Condition, u: &AtomUniverse) -> Result<Formula, AnalysisError> {
        Ok(match &c.kind {
            CondKind::Atom(a) => {
                let key = AtomKey::from(a);
                Formula::Var(u.index(&key).ok_or(AnalysisError::UnknownAtom(key))?)
            }
            CondKind::Not(inner) => Formula::Not(Box::new(Self::compile(inner, u)?)),
            CondKind::And(l, r) => Formula::And(Box::new(Self::compile(l, u)?), Box::new(Self::compile(r, u)?)),
            CondKind::Or(l, r) => Formula::Or(Box::new(Self::compile(l, u)?), Box::new(Self::compile(r, u)?)),
        })
    }

    pub fn eval(&self, a: Assignment) -> bool {
        match self {
            Formula::Var(i) => a.get(*i),
            Formula::Not(f) => !f.eval(a),
            Formula::And(l, r) => l.eval(a) && r.eval(a),
            Formula::Or(l, r) => l.eval(a) || r.eval(a),
        }
    }
}

/// A feasible assignment satisfying `cond`, if any.
pub fn witness(cond: &Condition, u: &AtomUniverse) -> Result<Option<Assignment>, AnalysisError> {
    let f = Formula::compile(cond, u)?;
    Ok(u.feasible().find(|&a| f.eval(a)))
}

pub fn satisfiable(cond: &Condition, u: &AtomUniverse) -> Result<bool, AnalysisError> {
    Ok(witness(cond, u)?.is_some())
}

/// Whether every feasible assignment satisfying `lo` also satisfies `hi`.
pub fn implies(lo: &Condition, hi: &Condition, u: &AtomUniverse) -> Result<bool, AnalysisError> {
    let lo = Formula::compile(lo, u)?;
    let hi = Formula::compile(hi, u)?;
    Ok(!u.feasible().any(|a| lo.eval(a) && !hi.eval(a)))
}

pub fn equivalent_cond(x: &Condition, y: &Condition, u: &AtomUniverse) -> Result<bool, AnalysisError> {
    Ok(implies(x, y, u)? && implies(y, x, u)?)
}

/// Whether some feasible assignment makes every condition in `all` true.
pub fn jointly_satisfiable(all: &[&Condition], u: &AtomUniverse) -> Result<bool, AnalysisError> {
    let fs = all
        .iter()
        .map(|c| Formula::compile(c, u))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(u.feasible().any(|a| fs.iter().all(|f| f.eval(a))))
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use proptest::prelude::*;

    use super::*;
    use crate::dsl::SignalType::Keyword;

    fn a(n: &str) -> Condition {
        Condition::atom(Keyword, n)
    }
    fn d(n: &str) -> Condition {
        Condition::atom(SignalType::Domain, n)
    }
    fn key(n: &str) -> AtomKey {
        AtomKey::new(Keyword, n)
    }

    fn universe(conds: &[&Condition]) -> AtomUniverse {
        AtomUniverse::from_conditions(conds.iter().copied()).unwrap()
    }

    #[test]
    fn contradiction_is_unsat() {
        let c = Condition::and(d("math"), Condition::not(d("math")));
        assert!(!satisfiable(&c, &universe(&[&c])).unwrap());
    }

    #[test]
    fn single_atom_is_sat() {
        let c = a("a");
        assert!(satisfiable(&c, &universe(&[&c])).unwrap());
    }

    #[test]
    fn exclusivity_blocks_conjunction() {
        let c = Condition::and(a("a"), a("b"));
        let mut u = universe(&[&c]);
        assert!(satisfiable(&c, &u).unwrap());
        u.add_exclusive(&[key("a"), key("b")]);
        assert!(!satisfiable(&c, &u).unwrap());
    }

    #[test]
    fn implication_examples() {
        let ab = Condition::and(a("a"), a("b"));
        let u = universe(&[&ab]);
        assert!(implies(&ab, &a("a"), &u).unwrap());
        assert!(!implies(&a("a"), &ab, &u).unwrap());

        let not_b = Condition::not(a("b"));
        let mut u = universe(&[&a("a"), &not_b]);
        assert!(!implies(&a("a"), &not_b, &u).unwrap());
        u.add_exclusive(&[key("a"), key("b")]);
        assert!(implies(&a("a"), &not_b, &u).unwrap());
    }

    #[test]
    fn equivalence_examples() {
        let ab = Condition::or(a("a"), a("b"));
        let ba = Condition::or(a("b"), a("a"));
        let u = universe(&[&ab]);
        assert!(equivalent_cond(&ab, &ba, &u).unwrap());

        let nna = Condition::not(Condition::not(a("a")));
        let u = universe(&[&nna]);
        assert!(equivalent_cond(&a("a"), &nna, &u).unwrap());

        let conj = Condition::and(a("a"), a("b"));
        let u = universe(&[&conj]);
        assert!(!equivalent_cond(&a("a"), &conj, &u).unwrap());
    }

    #[test]
    fn overflow_is_an_error_not_a_pass() {
        let many: Vec<AtomKey> = (0..25).map(|i| key(&format!("s{i}"))).collect();
        assert_eq!(
            AtomUniverse::new(many).unwrap_err(),
            AnalysisError::UniverseOverflow(25)
        );
        let ok: Vec<AtomKey> = (0..24).map(|i| key(&format!("s{i}"))).collect();
        assert!(AtomUniverse::new(ok).is_ok());
    }

    #[test]
    fn unknown_atom_is_reported() {
        let u = universe(&[&a("a")]);
        assert!(matches!(satisfiable(&a("zz"), &u), Err(AnalysisError::UnknownAtom(_))));
    }

    // ---- independent truth-table oracle ----

    const NAMES: [&str; 6] = ["p", "q", "r", "s", "t", "u"];

    fn arb_cond() -> impl Strategy<Value = Condition> {
        let leaf = (0..NAMES.len()).prop_map(|i| a(NAMES[i]));
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(Condition::not),
                (inner.clone(), inner.clone()).prop_map(|(l, r)| Condition::and(l, r)),
                (inner.clone(), inner).prop_map(|(l, r)| Condition::or(l, r)),
            ]
        })
    }

    fn arb_exclusive() -> impl Strategy<Value = Vec<Vec<usize>>> {
        prop::collection::vec(prop::collection::btree_set(0..NAMES.len(), 2..4), 0..3)
            .prop_map(|sets| sets.into_iter().map(|s| s.into_iter().collect()).collect())
    }

    /// Truth-table over all six names with a HashMap valuation.
    fn oracle_rows(excl: &[Vec<usize>]) -> Vec<HashMap<&'static str, bool>> {
        let mut rows = Vec::new();
        for bits in 0..(1u32 << NAMES.len()) {
            let ok = excl
                .iter()
                .all(|set| set.iter().filter(|&&i| bits >> i & 1 == 1).count() <= 1);
            if ok {
                rows.push(
                    NAMES
                        .iter()
                        .enumerate()
                        .map(|(i, n)| (*n, bits >> i & 1 == 1))
                        .collect(),
                );
            }
        }
        rows
    }

    fn truth(c: &Condition, row: &HashMap<&'static str, bool>) -> bool {
        c.eval(&mut |atom| row[atom.name.as_str()])
    }

    fn full_universe(excl: &[Vec<usize>]) -> AtomUniverse {
        let mut u = AtomUniverse::new(NAMES.iter().map(|n| key(n))).unwrap();
        for set in excl {
            let keys: Vec<AtomKey> = set.iter().map(|&i| key(NAMES[i])).collect();
            u.add_exclusive(&keys);
        }
        u
    }

    proptest! {
        #[test]
        fn agrees_with_truth_table(x in arb_cond(), y in arb_cond(), excl in arb_exclusive()) {
            let rows = oracle_rows(&excl);
            let u = full_universe(&excl);
            let sat = rows.iter().any(|r| truth(&x, r));
            let imp = rows.iter().all(|r| !truth(&x, r) || truth(&y, r));
            let eqv = rows.iter().all(|r| truth(&x, r) == truth(&y, r));
            prop_assert_eq!(satisfiable(&x, &u).unwrap(), sat);
            prop_assert_eq!(implies(&x, &y, &u).unwrap(), imp);
            prop_assert_eq!(equivalent_cond(&x, &y, &u).unwrap(), eqv);
        }

        #[test]
        fn constraints_never_create_satisfiability(x in arb_cond(), excl in arb_exclusive(), extra in prop::collection::btree_set(0..NAMES.len(), 2..4)) {
            let before = full_universe(&excl);
            let mut more = excl.clone();
            more.push(extra.into_iter().collect());
            let after = full_universe(&more);
            if !satisfiable(&x, &before).unwrap() {
                prop_assert!(!satisfiable(&x, &after).unwrap());
            }
        }

        #[test]
        fn implies_is_reflexive_and_transitive(x in arb_cond(), y in arb_cond(), z in arb_cond(), excl in arb_exclusive()) {
            let u = full_universe(&excl);
            prop_assert!(implies(&x, &x, &u).unwrap());
            if implies(&x, &y, &u).unwrap() && implies(&y, &z, &u).unwrap() {
                prop_assert!(implies(&x, &z, &u).unwrap());
            }
        }
    }
}
