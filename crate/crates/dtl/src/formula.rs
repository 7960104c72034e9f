//! Formula syntax, closures and types.
//!
//! Internally a formula is built from exactly five constructors: atoms,
//! `!` (negation), `&` (conjunction), `[]` (interior), `X` (next) and
//! `*` (henceforth). Implication, disjunction and `<>` are parser sugar
//! and are desugared eagerly (see [`crate::parser`]).
//!
//! The *closure* of a formula `f` is `sub(f) ∪ ¬sub(f)` where double
//! negations are identified with the unnegated formula. Membership
//! vectors are kept in a fixed, documented order — subformulas of `f`
//! in post-order, followed by the remaining negations in the same
//! order — so that type bit patterns are stable across runs and can be
//! used for canonical frame hashing.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::bits::Bits;

/// A DTL formula over the five internal constructors.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Var(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    /// Topological interior, written `[]`.
    Box(Box<Formula>),
    /// One step of the dynamics, written `X`.
    Next(Box<Formula>),
    /// All finite iterates of the dynamics, written `*`.
    Henceforth(Box<Formula>),
}

impl Formula {
    pub fn var(name: impl Into<String>) -> Formula {
        Formula::Var(name.into())
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn boxed(f: Formula) -> Formula {
        Formula::Box(Box::new(f))
    }

    pub fn next(f: Formula) -> Formula {
        Formula::Next(Box::new(f))
    }

    pub fn henceforth(f: Formula) -> Formula {
        Formula::Henceforth(Box::new(f))
    }

    /// `a -> b`, desugared to `!(a & !b)`.
    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::not(Formula::and(a, Formula::not(b)))
    }

    /// `a | b`, desugared to `!(!a & !b)`.
    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::not(Formula::and(Formula::not(a), Formula::not(b)))
    }

    /// `<>f`, desugared to `![]!f`.
    pub fn diamond(f: Formula) -> Formula {
        Formula::not(Formula::boxed(Formula::not(f)))
    }

    /// Negation with one level of `!!` cancelled, so that negating a
    /// closure entry never produces a double negation.
    pub fn negated(&self) -> Formula {
        match self {
            Formula::Not(x) => (**x).clone(),
            other => Formula::not(other.clone()),
        }
    }

    /// Strips top-level double negations: `!!!!p` and `!!p` both refer
    /// to the closure entry of `p`.
    pub fn strip_double_negation(&self) -> &Formula {
        let mut f = self;
        while let Formula::Not(inner) = f {
            if let Formula::Not(inner2) = &**inner {
                f = inner2;
            } else {
                break;
            }
        }
        f
    }
}

/// Prints the operand of a unary connective, parenthesising
/// conjunctions so the output reparses to the same tree.
fn fmt_operand(f: &Formula, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    if matches!(f, Formula::And(_, _)) {
        write!(out, "({f})")
    } else {
        write!(out, "{f}")
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Var(name) => write!(out, "{name}"),
            Formula::Not(x) => {
                write!(out, "!")?;
                fmt_operand(x, out)
            }
            Formula::Box(x) => {
                write!(out, "[]")?;
                fmt_operand(x, out)
            }
            Formula::Next(x) => {
                write!(out, "X")?;
                fmt_operand(x, out)
            }
            Formula::Henceforth(x) => {
                write!(out, "*")?;
                fmt_operand(x, out)
            }
            Formula::And(a, b) => {
                // `&` is parsed left-associatively: the left operand may
                // print bare, the right operand needs parentheses when it
                // is itself a conjunction.
                if matches!(**a, Formula::And(_, _)) {
                    write!(out, "{a}")?;
                } else {
                    fmt_operand(a, out)?;
                }
                write!(out, " & ")?;
                fmt_operand(b, out)
            }
        }
    }
}

impl fmt::Debug for Formula {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, out)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error("formula `{0}` is not in the closure")]
    UnknownFormula(String),
    #[error("membership set is not a type: {0}")]
    NotAType(TypeViolation),
    #[error("types were built over different closures")]
    ClosureMismatch,
}

/// The first closure condition violated by a membership set, in the
/// fixed scan order (negation pairs by ascending entry index, then
/// conjunction entries by ascending index).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeViolation {
    /// Exactly one of `f`, `!f` must be a member.
    Negation { formula: Formula },
    /// `a & b` must be a member iff both `a` and `b` are.
    Conjunction { formula: Formula },
}

impl fmt::Display for TypeViolation {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeViolation::Negation { formula } => {
                write!(out, "negation condition fails at `{formula}`")
            }
            TypeViolation::Conjunction { formula } => {
                write!(out, "conjunction condition fails at `{formula}`")
            }
        }
    }
}

/// Structural kind of a closure entry, with child entry indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Var,
    Not { body: usize },
    And { left: usize, right: usize },
    Box { body: usize },
    Next { body: usize },
    Henceforth { body: usize },
}

/// The closure `sub±(f)` of a formula, with entry order fixed.
///
/// Entries `0..size()` are the distinct subformulas of `f` in
/// post-order (double negations identified); the remaining entries are
/// the negations that are not themselves subformulas, in the same
/// order as their unnegated partners.
pub struct Closure {
    formula: Formula,
    signed: Vec<Formula>,
    index: HashMap<Formula, usize>,
    neg: Vec<usize>,
    kind: Vec<EntryKind>,
    positives: usize,
    and_nodes: Vec<usize>,
    box_nodes: Vec<usize>,
    next_nodes: Vec<usize>,
    star_nodes: Vec<usize>,
    /// Indices of entries `!*g` for each `*g` entry; the pending
    /// obligations ("eventualities") of the temporal machinery.
    eventualities: Vec<usize>,
    variables: Vec<String>,
}

impl Closure {
    /// Builds the closure of `f`. This is the only constructor; all
    /// types, frames and models over `f` share the result via `Arc`.
    pub fn of(f: &Formula) -> Arc<Closure> {
        let mut signed: Vec<Formula> = Vec::new();
        let mut index: HashMap<Formula, usize> = HashMap::new();
        collect_subformulas(f, &mut signed, &mut index);
        let positives = signed.len();

        // Append the missing negations, in the order of their partners.
        for i in 0..positives {
            let neg = signed[i].negated();
            if !index.contains_key(&neg) {
                index.insert(neg.clone(), signed.len());
                signed.push(neg);
            }
        }

        let neg: Vec<usize> = signed.iter().map(|g| index[&g.negated()]).collect();
        let kind: Vec<EntryKind> = signed
            .iter()
            .map(|g| match g {
                Formula::Var(_) => EntryKind::Var,
                Formula::Not(x) => EntryKind::Not {
                    body: index[x.strip_double_negation()],
                },
                Formula::And(a, b) => EntryKind::And {
                    left: index[a.strip_double_negation()],
                    right: index[b.strip_double_negation()],
                },
                Formula::Box(x) => EntryKind::Box {
                    body: index[x.strip_double_negation()],
                },
                Formula::Next(x) => EntryKind::Next {
                    body: index[x.strip_double_negation()],
                },
                Formula::Henceforth(x) => EntryKind::Henceforth {
                    body: index[x.strip_double_negation()],
                },
            })
            .collect();

        let picks = |want: fn(&EntryKind) -> bool| -> Vec<usize> {
            kind.iter()
                .enumerate()
                .filter(|(_, k)| want(k))
                .map(|(i, _)| i)
                .collect()
        };
        let and_nodes = picks(|k| matches!(k, EntryKind::And { .. }));
        let box_nodes = picks(|k| matches!(k, EntryKind::Box { .. }));
        let next_nodes = picks(|k| matches!(k, EntryKind::Next { .. }));
        let star_nodes = picks(|k| matches!(k, EntryKind::Henceforth { .. }));
        let eventualities = star_nodes.iter().map(|&s| neg[s]).collect();

        let mut variables: Vec<String> = signed
            .iter()
            .filter_map(|g| match g {
                Formula::Var(name) => Some(name.clone()),
                _ => None,
            })
            .collect();
        variables.sort();
        variables.dedup();

        Arc::new(Closure {
            formula: f.clone(),
            signed,
            index,
            neg,
            kind,
            positives,
            and_nodes,
            box_nodes,
            next_nodes,
            star_nodes,
            eventualities,
            variables,
        })
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    /// Total number of signed entries.
    pub fn len(&self) -> usize {
        self.signed.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a closure always contains at least one entry
    }

    /// `|f|`: the number of distinct subformulas (double negations
    /// identified). Norm bounds for frame enumeration are stated in
    /// multiples of this.
    pub fn size(&self) -> usize {
        self.positives
    }

    pub fn entry(&self, i: usize) -> &Formula {
        &self.signed[i]
    }

    pub fn entries(&self) -> impl Iterator<Item = &Formula> {
        self.signed.iter()
    }

    /// Index of `f` in the closure, identifying `!!g` with `g`.
    pub fn index_of(&self, f: &Formula) -> Option<usize> {
        self.index.get(f.strip_double_negation()).copied()
    }

    /// Index of the (identified) negation of entry `i`.
    pub fn negation_of(&self, i: usize) -> usize {
        self.neg[i]
    }

    pub fn kind(&self, i: usize) -> EntryKind {
        self.kind[i]
    }

    pub fn and_nodes(&self) -> &[usize] {
        &self.and_nodes
    }

    pub fn box_nodes(&self) -> &[usize] {
        &self.box_nodes
    }

    pub fn next_nodes(&self) -> &[usize] {
        &self.next_nodes
    }

    pub fn star_nodes(&self) -> &[usize] {
        &self.star_nodes
    }

    /// Entries of the form `!*g` (one per `*`-entry).
    pub fn eventualities(&self) -> &[usize] {
        &self.eventualities
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    /// Whether two closure handles denote the same closure. Cheap
    /// pointer check first; falls back to comparing the formula so
    /// that independently built closures of the same formula compare
    /// equal.
    pub fn same(a: &Arc<Closure>, b: &Arc<Closure>) -> bool {
        Arc::ptr_eq(a, b) || a.formula == b.formula
    }
}

impl fmt::Debug for Closure {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(out, "Closure(|{}| = {}, {:?})", self.formula, self.positives, self.signed)
    }
}

/// Post-order collection of subformulas with double-negation
/// identification.
fn collect_subformulas(
    f: &Formula,
    signed: &mut Vec<Formula>,
    index: &mut HashMap<Formula, usize>,
) {
    match f {
        Formula::Var(_) => {}
        Formula::Not(x) => collect_subformulas(x, signed, index),
        Formula::And(a, b) => {
            collect_subformulas(a, signed, index);
            collect_subformulas(b, signed, index);
        }
        Formula::Box(x) | Formula::Next(x) | Formula::Henceforth(x) => {
            collect_subformulas(x, signed, index)
        }
    }
    let stripped = f.strip_double_negation();
    if !index.contains_key(stripped) {
        index.insert(stripped.clone(), signed.len());
        signed.push(stripped.clone());
    }
}

/// A type over a closure: a membership vector satisfying the negation
/// and conjunction closure conditions.
#[derive(Clone)]
pub struct PhiType {
    closure: Arc<Closure>,
    members: Bits,
}

impl PartialEq for PhiType {
    fn eq(&self, other: &Self) -> bool {
        debug_assert!(Closure::same(&self.closure, &other.closure));
        self.members == other.members
    }
}

impl Eq for PhiType {}

impl std::hash::Hash for PhiType {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.members.hash(state);
    }
}

impl PartialOrd for PhiType {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PhiType {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.members.cmp(&other.members)
    }
}

impl PhiType {
    /// Builds a type from an explicit list of member formulas; the
    /// membership of every other closure entry is `false`, so the list
    /// must name one formula of every complementary pair.
    pub fn from_members<'a>(
        closure: &Arc<Closure>,
        members: impl IntoIterator<Item = &'a Formula>,
    ) -> Result<PhiType, TypeError> {
        let mut bits = Bits::new(closure.len());
        for f in members {
            let i = closure
                .index_of(f)
                .ok_or_else(|| TypeError::UnknownFormula(f.to_string()))?;
            bits.set(i, true);
        }
        PhiType::from_bits(closure, bits)
    }

    pub fn from_bits(closure: &Arc<Closure>, bits: Bits) -> Result<PhiType, TypeError> {
        if let Some(v) = type_violation(closure, &bits) {
            return Err(TypeError::NotAType(v));
        }
        Ok(PhiType {
            closure: closure.clone(),
            members: bits,
        })
    }

    pub(crate) fn from_bits_unchecked(closure: &Arc<Closure>, bits: Bits) -> PhiType {
        debug_assert!(type_violation(closure, &bits).is_none());
        PhiType {
            closure: closure.clone(),
            members: bits,
        }
    }

    pub fn closure(&self) -> &Arc<Closure> {
        &self.closure
    }

    pub fn bits(&self) -> &Bits {
        &self.members
    }

    pub fn contains_idx(&self, i: usize) -> bool {
        self.members.get(i)
    }

    /// Membership of `f`; `Err` if `f` is outside the closure.
    pub fn contains(&self, f: &Formula) -> Result<bool, TypeError> {
        self.closure
            .index_of(f)
            .map(|i| self.members.get(i))
            .ok_or_else(|| TypeError::UnknownFormula(f.to_string()))
    }

    /// Member formulas in closure order.
    pub fn member_formulas(&self) -> Vec<Formula> {
        self.members
            .iter_ones()
            .map(|i| self.closure.entry(i).clone())
            .collect()
    }
}

impl fmt::Debug for PhiType {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self
            .member_formulas()
            .iter()
            .map(|f| f.to_string())
            .collect();
        write!(out, "{{{}}}", names.join(", "))
    }
}

/// The first closure condition violated by `bits`, or `None` if `bits`
/// describes a type. Scan order: negation pairs by ascending entry
/// index, then conjunction entries by ascending index, so a rejected
/// set always reports the same single violation.
pub fn type_violation(closure: &Closure, bits: &Bits) -> Option<TypeViolation> {
    for i in 0..closure.len() {
        if bits.get(i) == bits.get(closure.negation_of(i)) {
            return Some(TypeViolation::Negation {
                formula: closure.entry(i).clone(),
            });
        }
    }
    for &i in closure.and_nodes() {
        let EntryKind::And { left, right } = closure.kind(i) else {
            unreachable!()
        };
        if bits.get(i) != (bits.get(left) && bits.get(right)) {
            return Some(TypeViolation::Conjunction {
                formula: closure.entry(i).clone(),
            });
        }
    }
    None
}

/// Whether `bits` is a type over `closure`.
pub fn is_type(closure: &Closure, bits: &Bits) -> bool {
    type_violation(closure, bits).is_none()
}

/// Entry indices whose membership is free when enumerating types:
/// atoms and modal nodes. Negation entries are forced by their body
/// and conjunction entries by their operands.
fn free_nodes(closure: &Closure) -> Vec<usize> {
    (0..closure.size())
        .filter(|&i| {
            matches!(
                closure.kind(i),
                EntryKind::Var | EntryKind::Box { .. } | EntryKind::Next { .. } | EntryKind::Henceforth { .. }
            )
        })
        .collect()
}

/// Enumerates every type over the closure, in ascending order of the
/// free-node assignment (and therefore deterministically). The count
/// is `2^k` where `k` is the number of atom and modal subformulas.
pub fn enumerate_types(closure: &Arc<Closure>) -> impl Iterator<Item = PhiType> + '_ {
    let free = free_nodes(closure);
    assert!(
        free.len() < 60,
        "type space 2^{} is too large to enumerate",
        free.len()
    );
    let total: u64 = 1 << free.len();
    (0..total).map(move |mask| {
        let mut bits = Bits::new(closure.len());
        let mut free_pos = 0;
        // Positives are in post-order, so children precede parents.
        for i in 0..closure.size() {
            let value = match closure.kind(i) {
                EntryKind::Var
                | EntryKind::Box { .. }
                | EntryKind::Next { .. }
                | EntryKind::Henceforth { .. } => {
                    let v = mask >> free_pos & 1 == 1;
                    free_pos += 1;
                    v
                }
                EntryKind::Not { body } => !bits.get(body),
                EntryKind::And { left, right } => bits.get(left) && bits.get(right),
            };
            bits.set(i, value);
        }
        for i in closure.size()..closure.len() {
            let value = !bits.get(closure.negation_of(i));
            bits.set(i, value);
        }
        PhiType::from_bits_unchecked(closure, bits)
    })
}

/// `{ g in sub± : <>g in t }` where `<>g = ![]!g` (double negations
/// identified). Returned in closure order.
pub fn type_diamond(t: &PhiType) -> Vec<Formula> {
    let closure = t.closure();
    let mut out = Vec::new();
    for &b in closure.box_nodes() {
        let EntryKind::Box { body } = closure.kind(b) else {
            unreachable!()
        };
        if t.contains_idx(closure.negation_of(b)) {
            out.push(closure.entry(closure.negation_of(body)).clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn closure_of(src: &str) -> Arc<Closure> {
        Closure::of(&parse(src).unwrap())
    }

    #[test]
    fn negated_cancels_one_level() {
        let p = Formula::var("p");
        assert_eq!(p.negated(), Formula::not(p.clone()));
        assert_eq!(Formula::not(p.clone()).negated(), p);
    }

    #[test]
    fn closure_order_of_conjunction() {
        // sub(p & q) in post-order is p, q, p & q; negations follow in
        // the same order.
        let c = closure_of("p & q");
        let names: Vec<String> = c.entries().map(|f| f.to_string()).collect();
        assert_eq!(names, vec!["p", "q", "p & q", "!p", "!q", "!(p & q)"]);
        assert_eq!(c.size(), 3);
    }

    #[test]
    fn closure_identifies_double_negations() {
        let c = closure_of("!!p");
        let names: Vec<String> = c.entries().map(|f| f.to_string()).collect();
        assert_eq!(names, vec!["p", "!p"]);
    }

    /// Hand-enumerated closure of the desugared `*[]p -> []*p`, the
    /// running three-world example. Positives in post-order:
    ///   p, []p, *[]p, *p, []*p, ![]*p, *[]p & ![]*p, !(*[]p & ![]*p)
    /// and the negations not already present:
    ///   !p, ![]p, !*[]p, !*p
    /// for 12 entries in total. (The negation of `![]*p` is `[]*p` and
    /// the negation of the implication is the conjunction itself, both
    /// already listed.)
    #[test]
    fn closure_of_running_example() {
        let c = closure_of("*[]p -> []*p");
        let names: Vec<String> = c.entries().map(|f| f.to_string()).collect();
        assert_eq!(
            names,
            vec![
                "p",
                "[]p",
                "*[]p",
                "*p",
                "[]*p",
                "![]*p",
                "*[]p & ![]*p",
                "!(*[]p & ![]*p)",
                "!p",
                "![]p",
                "!*[]p",
                "!*p",
            ]
        );
        assert_eq!(c.size(), 8);
        assert_eq!(c.len(), 12);
        // Every entry has its negation in the closure.
        for i in 0..c.len() {
            let j = c.negation_of(i);
            assert_eq!(c.negation_of(j), i);
            assert_ne!(i, j);
        }
    }

    /// Brute-force oracle: every subset of the signed entries, filtered
    /// through `is_type`, must match `enumerate_types` exactly.
    fn brute_force_types(c: &Arc<Closure>) -> Vec<Bits> {
        let n = c.len();
        assert!(n <= 16);
        let mut out = Vec::new();
        for mask in 0u32..1 << n {
            let mut bits = Bits::new(n);
            for i in 0..n {
                bits.set(i, mask >> i & 1 == 1);
            }
            if is_type(c, &bits) {
                out.push(bits);
            }
        }
        out
    }

    #[test]
    fn type_counts_match_brute_force() {
        for (src, expect) in [
            ("p & q", 4),    // free: p, q
            ("*p", 4),       // free: p, *p
            ("!p", 2),       // free: p only; !p is forced
            ("Xp & X!p", 8), // free: p, Xp, X!p
        ] {
            let c = closure_of(src);
            let brute = brute_force_types(&c);
            let mut fast: Vec<Bits> = enumerate_types(&c).map(|t| t.bits().clone()).collect();
            assert_eq!(fast.len(), expect, "count for {src}");
            fast.sort();
            let mut brute = brute;
            brute.sort();
            assert_eq!(fast, brute, "type sets for {src}");
        }
    }

    #[test]
    fn rejected_subsets_report_one_violation() {
        let c = closure_of("p & q");
        // Empty set: p and !p both absent.
        let bits = Bits::new(c.len());
        match type_violation(&c, &bits) {
            Some(TypeViolation::Negation { formula }) => assert_eq!(formula.to_string(), "p"),
            other => panic!("expected negation violation, got {other:?}"),
        }
        // {p, q, !p&q-complement...}: conjunction missing while both
        // operands are present.
        let mut bits = Bits::new(c.len());
        for f in ["p", "q", "!(p & q)"] {
            bits.set(c.index_of(&parse(f).unwrap()).unwrap(), true);
        }
        match type_violation(&c, &bits) {
            Some(TypeViolation::Conjunction { formula }) => {
                assert_eq!(formula.to_string(), "p & q")
            }
            other => panic!("expected conjunction violation, got {other:?}"),
        }
    }

    #[test]
    fn diamond_members_of_a_type() {
        let c = closure_of("*[]p -> []*p");
        // A type containing ![]*p has !*p among its diamonds.
        let t = enumerate_types(&c)
            .find(|t| t.contains(&parse("![]*p").unwrap()).unwrap())
            .unwrap();
        let diamonds = type_diamond(&t);
        assert!(diamonds.contains(&parse("!*p").unwrap()));
    }

    #[test]
    fn membership_lookup_strips_double_negations() {
        let c = closure_of("p & q");
        let t = PhiType::from_members(
            &c,
            &[
                parse("p").unwrap(),
                parse("!q").unwrap(),
                parse("!(p & q)").unwrap(),
            ],
        )
        .unwrap();
        assert!(t.contains(&parse("!!p").unwrap()).unwrap());
        assert!(!t.contains(&parse("q").unwrap()).unwrap());
        assert!(t.contains(&parse("r").unwrap()).is_err());
    }
}
