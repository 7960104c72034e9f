//! Temporal steps between frames: sensible type pairs, continuity and
//! non-confluence of world relations, the temporal successor relation
//! `⇉`, successor reduction, and the `⊕`-assembly with its coherence
//! and admission conditions.
//!
//! A relation `g` between the worlds of two frames abstracts one
//! application of the transition function: `(w, v) ∈ g` says that
//! world `w` may step to world `v` at the next instant. Sensibility
//! constrains the types across a step, continuity makes `g` behave
//! like a continuous map, and non-confluence keeps preimages of
//! comparable worlds comparable — the property that lets tree-like
//! frames step to tree-like frames.

use thiserror::Error;

use crate::formula::{Closure, EntryKind, PhiType};
use crate::frames::{self, LocalFrame, TypedFrame};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemporalError {
    #[error("relation endpoints live over different closures")]
    ClosureMismatch,
    #[error("pair ({0}, {1}) is out of range")]
    PairOutOfRange(usize, usize),
    #[error("relation is not total: source world {0} has no successor")]
    NotTotal(usize),
    #[error("the cluster type set is empty")]
    EmptyTypeSet,
    #[error("designated type is not a member of the type set")]
    RootTypeNotInSet,
    #[error("frames are not related by a temporal step")]
    NotASuccessor,
}

/// A total relation between the worlds of two typed frames. Totality
/// on the source is a construction invariant; sensibility, continuity
/// and non-confluence are separate checks so that defective relations
/// can be examined and reported on.
///
/// The endpoints are plain typed frames: temporal steps between local
/// frames pass their underlying frames, and a transition relation on a
/// single frame (as in a quasimodel) uses the same frame on both
/// sides.
#[derive(Debug, Clone)]
pub struct FrameRelation {
    source: TypedFrame,
    target: TypedFrame,
    /// Sorted successor list per source world.
    succ: Vec<Vec<usize>>,
}

impl FrameRelation {
    pub fn new<I>(
        source: TypedFrame,
        target: TypedFrame,
        pairs: I,
    ) -> Result<FrameRelation, TemporalError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if !Closure::same(source.closure(), target.closure()) {
            return Err(TemporalError::ClosureMismatch);
        }
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); source.len()];
        for (w, v) in pairs {
            if w >= source.len() || v >= target.len() {
                return Err(TemporalError::PairOutOfRange(w, v));
            }
            if !succ[w].contains(&v) {
                succ[w].push(v);
            }
        }
        for list in &mut succ {
            list.sort();
        }
        if let Some(w) = succ.iter().position(|list| list.is_empty()) {
            return Err(TemporalError::NotTotal(w));
        }
        Ok(FrameRelation {
            source,
            target,
            succ,
        })
    }

    pub fn source(&self) -> &TypedFrame {
        &self.source
    }

    pub fn target(&self) -> &TypedFrame {
        &self.target
    }

    pub fn successors(&self, w: usize) -> &[usize] {
        &self.succ[w]
    }

    pub fn contains(&self, w: usize, v: usize) -> bool {
        self.succ[w].binary_search(&v).is_ok()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (w, list) in self.succ.iter().enumerate() {
            for &v in list {
                out.push((w, v));
            }
        }
        out
    }

    /// Every pair has sensible types.
    pub fn all_pairs_sensible(&self) -> bool {
        self.succ.iter().enumerate().all(|(w, list)| {
            list.iter()
                .all(|&v| sensible_pair(self.source.type_of(w), self.target.type_of(v)))
        })
    }
}

/// The two clauses tying a type to a candidate successor type: `Og` in
/// `t` iff `g` in `s`, and `*g` in `t` iff `g` in `t` and `*g` in `s`.
///
/// Panics if the types live over different closures; relations between
/// differently-closed objects are rejected before type-level checks
/// run.
pub fn sensible_pair(t: &PhiType, s: &PhiType) -> bool {
    assert!(
        Closure::same(t.closure(), s.closure()),
        "sensible_pair: types over different closures"
    );
    let closure = t.closure();
    for &i in closure.next_nodes() {
        let EntryKind::Next { body } = closure.kind(i) else {
            unreachable!()
        };
        if t.contains_idx(i) != s.contains_idx(body) {
            return false;
        }
    }
    for &i in closure.star_nodes() {
        let EntryKind::Henceforth { body } = closure.kind(i) else {
            unreachable!()
        };
        if t.contains_idx(i) != (t.contains_idx(body) && s.contains_idx(i)) {
            return false;
        }
    }
    true
}

/// The first sensibility clause violated by the ordered pair, as text
/// for validation reports, or `None` when the pair is sensible.
pub(crate) fn sensibility_violation(t: &PhiType, s: &PhiType) -> Option<String> {
    assert!(
        Closure::same(t.closure(), s.closure()),
        "sensibility_violation: types over different closures"
    );
    let closure = t.closure();
    for &i in closure.next_nodes() {
        let EntryKind::Next { body } = closure.kind(i) else {
            unreachable!()
        };
        if t.contains_idx(i) != s.contains_idx(body) {
            let (here, there) = if t.contains_idx(i) {
                ("claims", "lacks")
            } else {
                ("rejects", "has")
            };
            return Some(format!(
                "type {here} `{}` but the successor type {there} `{}`",
                closure.entry(i),
                closure.entry(body),
            ));
        }
    }
    for &i in closure.star_nodes() {
        let EntryKind::Henceforth { body } = closure.kind(i) else {
            unreachable!()
        };
        if t.contains_idx(i) != (t.contains_idx(body) && s.contains_idx(i)) {
            let here = if t.contains_idx(i) { "claims" } else { "rejects" };
            return Some(format!(
                "type {here} `{}` against `{}` here and `{}` at the successor",
                closure.entry(i),
                closure.entry(body),
                closure.entry(i),
            ));
        }
    }
    None
}

/// Square completion: whenever `(w, v)` is in the relation and `w`
/// sees `w'` in the source, some `(w', v')` is in the relation with
/// `v` seeing `v'` in the target.
pub fn is_continuous(rel: &FrameRelation) -> bool {
    let src = rel.source().relation();
    let tgt = rel.target().relation();
    for w in 0..rel.source().len() {
        for &v in rel.successors(w) {
            for w2 in src.row(w) {
                let ok = rel.successors(w2).iter().any(|&v2| tgt.get(v, v2));
                if !ok {
                    return false;
                }
            }
        }
    }
    true
}

/// Preimages of comparable worlds are comparable: whenever `(w, v)`
/// and `(w', v')` are in the relation and `v` sees `v'` in the target,
/// `w` sees `w'` in the source.
pub fn is_non_confluent(rel: &FrameRelation) -> bool {
    let src = rel.source().relation();
    let tgt = rel.target().relation();
    let pairs = rel.pairs();
    for &(w, v) in &pairs {
        for &(w2, v2) in &pairs {
            if tgt.get(v, v2) && !src.get(w, w2) {
                return false;
            }
        }
    }
    true
}

/// Decides `a ⇉ b`: searches for a total relation `g ⊆ W_a × W_b`
/// whose pairs are all sensible, which is continuous and
/// non-confluent, and which relates the roots. Returns the first
/// witness in a fixed order (successor sets ascending by size, then
/// lexicographically), or `None` when no witness exists.
pub fn temporal_successor(a: &LocalFrame, b: &LocalFrame) -> Option<FrameRelation> {
    assert!(
        Closure::same(a.closure(), b.closure()),
        "temporal_successor: frames over different closures"
    );
    let candidates: Vec<Vec<usize>> = (0..a.len())
        .map(|w| {
            (0..b.len())
                .filter(|&v| sensible_pair(a.type_of(w), b.type_of(v)))
                .collect()
        })
        .collect();
    if candidates.iter().any(|c| c.is_empty()) {
        return None;
    }
    if !candidates[a.root()].contains(&b.root()) {
        return None;
    }
    // Per-world choice lists: every nonempty subset of the candidates,
    // ascending by size then lexicographically; the root world must
    // keep the target root.
    let order = a.topological_world_order();
    let choices: Vec<Vec<Vec<usize>>> = (0..a.len())
        .map(|w| {
            let must = if w == a.root() { Some(b.root()) } else { None };
            subsets_ascending(&candidates[w], must)
        })
        .collect();

    let mut assigned: Vec<Option<usize>> = vec![None; a.len()]; // index into choices[w]
    if !assign_successors(a, b, &order, &choices, &mut assigned, 0) {
        return None;
    }
    let mut pairs = Vec::new();
    for w in 0..a.len() {
        for &v in &choices[w][assigned[w].unwrap()] {
            pairs.push((w, v));
        }
    }
    let rel = FrameRelation::new(a.frame().clone(), b.frame().clone(), pairs)
        .expect("search assigns a successor set to every world");
    debug_assert!(rel.all_pairs_sensible() && is_continuous(&rel) && is_non_confluent(&rel));
    Some(rel)
}

/// Nonempty subsets of `cands` (sorted ascending), ordered by size
/// then lexicographically, each containing `must` when given.
fn subsets_ascending(cands: &[usize], must: Option<usize>) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let n = cands.len();
    for mask in 1u64..(1 << n) {
        let subset: Vec<usize> = (0..n)
            .filter(|&i| mask & (1 << i) != 0)
            .map(|i| cands[i])
            .collect();
        if let Some(m) = must {
            if !subset.contains(&m) {
                continue;
            }
        }
        out.push(subset);
    }
    out.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.cmp(y)));
    out
}

fn assign_successors(
    a: &LocalFrame,
    b: &LocalFrame,
    order: &[usize],
    choices: &[Vec<Vec<usize>>],
    assigned: &mut Vec<Option<usize>>,
    k: usize,
) -> bool {
    if k == order.len() {
        return true;
    }
    let u = order[k];
    'next_choice: for ci in 0..choices[u].len() {
        let set_u = &choices[u][ci];
        // Check continuity and non-confluence against every world
        // assigned so far. Each condition instance involves exactly
        // two source worlds, so checking at the later of the two
        // covers everything.
        for &u2 in &order[..k] {
            let set_u2 = &choices[u2][assigned[u2].unwrap()];
            if a.r(u2, u) {
                // (u2, v2) with the edge u2 -> u needs a landing spot in set_u.
                for &v2 in set_u2 {
                    if !set_u.iter().any(|&v| b.r(v2, v)) {
                        continue 'next_choice;
                    }
                }
            }
            if a.r(u, u2) {
                for &v in set_u {
                    if !set_u2.iter().any(|&v2| b.r(v, v2)) {
                        continue 'next_choice;
                    }
                }
            }
            for &v in set_u {
                for &v2 in set_u2 {
                    if (b.r(v, v2) && !a.r(u, u2)) || (b.r(v2, v) && !a.r(u2, u)) {
                        continue 'next_choice;
                    }
                }
            }
        }
        assigned[u] = Some(ci);
        if assign_successors(a, b, order, choices, assigned, k + 1) {
            return true;
        }
        assigned[u] = None;
    }
    false
}

/// Shrinks a temporal successor: given `a ⇉ b`, greedily deletes
/// non-root worlds of `b` (leaf-most first) while the step from `a`
/// survives, until the norm bound `‖a‖ + |f|` holds or no deletion
/// preserves the step. Every deletion keeps a local frame and embeds
/// into its predecessor, so the result embeds into `b`.
pub fn reduce_successor(a: &LocalFrame, b: &LocalFrame) -> Result<LocalFrame, TemporalError> {
    if temporal_successor(a, b).is_none() {
        return Err(TemporalError::NotASuccessor);
    }
    let bound = a.measures().norm() + a.closure().size();
    let mut d = b.clone();
    'shrink: while d.measures().norm() > bound {
        let mut victims = d.topological_world_order();
        victims.reverse();
        for w in victims {
            if w == d.root() {
                continue;
            }
            let candidate = delete_world(&d, w);
            if temporal_successor(a, &candidate).is_some() {
                d = candidate;
                continue 'shrink;
            }
        }
        break; // no single deletion preserves the step
    }
    debug_assert!(frames::embeds(&d, b).is_some());
    Ok(d)
}

/// The restriction of `d` to all worlds except `w` (which must not be
/// the root), rooted as before.
fn delete_world(d: &LocalFrame, w: usize) -> LocalFrame {
    let keep: Vec<usize> = (0..d.len()).filter(|&u| u != w).collect();
    let types: Vec<PhiType> = keep.iter().map(|&u| d.type_of(u).clone()).collect();
    let r = d.frame().relation().restrict(&keep);
    let root = keep.iter().position(|&u| u == d.root()).unwrap();
    let frame = TypedFrame::new(d.closure().clone(), types, r)
        .expect("restriction of a frame is a frame");
    LocalFrame::new(frame, root).expect("deleting a non-root world keeps a local frame")
}

/// `[T ⊕ A]_t`: the frame with cluster `T` at the bottom (rooted at
/// the world typed `t`) and each member of `A` glued above it as a
/// disjoint subtree. Duplicate types in `T` are collapsed: `T` is a
/// set. The result is always tree-like and rooted; whether it is a
/// valid frame (box condition) is exactly coherence of `⟨T, A⟩`.
pub fn oplus(
    types: &[PhiType],
    frames_above: &[LocalFrame],
    t: &PhiType,
) -> Result<LocalFrame, TemporalError> {
    if types.is_empty() {
        return Err(TemporalError::EmptyTypeSet);
    }
    let closure = types[0].closure().clone();
    for s in types {
        if !Closure::same(s.closure(), &closure) {
            return Err(TemporalError::ClosureMismatch);
        }
    }
    for a in frames_above {
        if !Closure::same(a.closure(), &closure) {
            return Err(TemporalError::ClosureMismatch);
        }
    }
    let mut cluster: Vec<PhiType> = Vec::new();
    for s in types {
        if !cluster.contains(s) {
            cluster.push(s.clone());
        }
    }
    let root_index = cluster
        .iter()
        .position(|s| s == t)
        .ok_or(TemporalError::RootTypeNotInSet)?;
    Ok(frames::assemble(&closure, &cluster, frames_above, root_index)
        .expect("assembly of a nonempty matching cluster is a local frame"))
}

/// Coherence of `⟨T, A⟩`: for every `[]g` and every `t ∈ T`, `[]g ∈ t`
/// iff `g` belongs to every member of `T` and `[]g` belongs to the
/// root type of every member of `A`. Exactly the box condition of
/// `[T ⊕ A]_t` (for any choice of root).
pub fn is_coherent(types: &[PhiType], frames_above: &[LocalFrame]) -> bool {
    if types.is_empty() {
        return true;
    }
    let closure = types[0].closure().clone();
    let cluster: Vec<&PhiType> = types.iter().collect();
    let child_roots: Vec<&PhiType> = frames_above.iter().map(|a| a.root_type()).collect();
    frames::coherent_cluster(&closure, &cluster, &child_roots)
}

/// Whether the triple `⟨T, A, t⟩` admits the frame `b`: the root types
/// `(t(b), t)` must be sensible, and either some member of `A` is a
/// temporal successor of `b` directly, or (a) every world of `b`'s
/// root cluster has a sensible partner in `T` and (b) some set of
/// subframe representatives of `b` injects into `A` along `⇉`.
///
/// When this holds, `b ⇉ [T ⊕ A]_t`.
pub fn admits(types: &[PhiType], frames_above: &[LocalFrame], t: &PhiType, b: &LocalFrame) -> bool {
    assert!(
        types.contains(t),
        "admits: designated type must belong to the type set"
    );
    if !sensible_pair(b.root_type(), t) {
        return false;
    }
    // Clause 1: b steps into some member of A directly.
    if frames_above
        .iter()
        .any(|a| temporal_successor(b, a).is_some())
    {
        return true;
    }
    // Clause 2a: every root-cluster world of b has a sensible partner in T.
    let root_cluster_ok = b
        .root_cluster_types()
        .iter()
        .all(|tw| types.iter().any(|s| sensible_pair(tw, s)));
    if !root_cluster_ok {
        return false;
    }
    // Clause 2b: some choice of representatives (one per ∼-class
    // immediately below b) injects into A along ⇉. A is a set: collapse
    // canonical duplicates first.
    let mut targets: Vec<&LocalFrame> = Vec::new();
    for a in frames_above {
        if !targets
            .iter()
            .any(|x| x.canonical_form() == a.canonical_form())
        {
            targets.push(a);
        }
    }
    let classes = frames::immediate_subframe_classes(b);
    inject_classes(&classes, &targets, &mut vec![false; targets.len()], 0)
}

/// Picks one representative from each class and matches it injectively
/// into `targets` along `⇉`, backtracking over both choices.
fn inject_classes(
    classes: &[Vec<LocalFrame>],
    targets: &[&LocalFrame],
    used: &mut Vec<bool>,
    k: usize,
) -> bool {
    if k == classes.len() {
        return true;
    }
    for rep in &classes[k] {
        for (j, target) in targets.iter().enumerate() {
            if used[j] {
                continue;
            }
            if temporal_successor(rep, target).is_some() {
                used[j] = true;
                if inject_classes(classes, targets, used, k + 1) {
                    return true;
                }
                used[j] = false;
            }
        }
    }
    false
}
