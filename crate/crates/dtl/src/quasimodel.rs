//! Non-deterministic quasimodels and their realizing-path machinery.
//!
//! A quasimodel pairs a typed frame with a temporal transition
//! relation `g`. Validation checks the frame axioms, totality and
//! sensibility of `g`, continuity (square completion over the frame
//! order), and the ω-sensibility biconditional — every `!*g` in a type
//! must be answered by a `g`-refuting world reachable through the
//! transition relation, and conversely. Infinite paths are represented
//! as lassos (finite prefix plus nonempty cycle); the module provides
//! the eventuality-chasing extension of a finite path to a realizing
//! lasso, pointwise lifting of paths along the frame order, and the
//! shift and basis-membership operations of the limit construction.

use std::collections::VecDeque;
use std::sync::Arc;

use thiserror::Error;

use crate::bits::Bits;
use crate::finite_model::{self, FiniteDynModel};
use crate::formula::{Closure, EntryKind, Formula, PhiType, TypeError};
use crate::frames::{validate_typed_frame, TypedFrame, ValidationClause, ValidationReport};
use crate::temporal::sensibility_violation;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QuasiError {
    #[error("transition edge ({}, {}) out of range for {worlds} worlds", edge.0, edge.1)]
    EdgeOutOfRange { edge: (usize, usize), worlds: usize },
    #[error("world {world} out of range for {worlds} worlds")]
    WorldOutOfRange { world: usize, worlds: usize },
    #[error("paths must contain at least one world")]
    EmptyPath,
    #[error("positions {at} and {} are not joined by a transition edge", at + 1)]
    NotAPath { at: usize },
    #[error("lasso cycles must be nonempty")]
    EmptyCycle,
    #[error("the cycle's last world has no transition edge back to its first")]
    NoWrapEdge,
    #[error("world {v0} is not above world {w0} in the frame order")]
    NotRelated { w0: usize, v0: usize },
    #[error("the quasimodel violates its invariants: {0}")]
    InvalidQuasimodel(&'static str),
}

/// A typed frame with a temporal transition relation `g`, kept as
/// ascending successor lists. Construction checks index ranges only;
/// the semantic clauses are the business of [`validate_quasimodel`],
/// which reports rather than fails so that broken inputs can be
/// described. The reflexive-transitive reachability of `g` is computed
/// once and cached; quasimodels are immutable afterwards.
#[derive(Clone)]
pub struct Quasimodel {
    frame: TypedFrame,
    succ: Vec<Vec<usize>>,
    reach: Vec<Bits>,
}

impl std::fmt::Debug for Quasimodel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Quasimodel({} worlds, g = {:?})",
            self.len(),
            self.edges()
        )
    }
}

impl Quasimodel {
    pub fn new(
        frame: TypedFrame,
        g: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Quasimodel, QuasiError> {
        let n = frame.len();
        let mut succ = vec![Vec::new(); n];
        for (w, v) in g {
            if w >= n || v >= n {
                return Err(QuasiError::EdgeOutOfRange {
                    edge: (w, v),
                    worlds: n,
                });
            }
            succ[w].push(v);
        }
        for list in &mut succ {
            list.sort_unstable();
            list.dedup();
        }
        let reach = forward_reachability(&succ);
        Ok(Quasimodel { frame, succ, reach })
    }

    pub fn frame(&self) -> &TypedFrame {
        &self.frame
    }

    pub fn closure(&self) -> &Arc<Closure> {
        self.frame.closure()
    }

    pub fn len(&self) -> usize {
        self.frame.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame.is_empty()
    }

    /// Transition successors of `w`, ascending.
    pub fn successors(&self, w: usize) -> &[usize] {
        &self.succ[w]
    }

    pub fn has_edge(&self, w: usize, v: usize) -> bool {
        self.succ[w].binary_search(&v).is_ok()
    }

    /// Whether `v` is reachable from `w` by a (possibly empty) chain
    /// of transition edges.
    pub fn reaches(&self, w: usize, v: usize) -> bool {
        self.reach[w].get(v)
    }

    /// All transition edges, ascending by source then target.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (w, list) in self.succ.iter().enumerate() {
            for &v in list {
                out.push((w, v));
            }
        }
        out
    }
}

/// Reflexive-transitive closure of the successor lists, one bit row
/// per source world.
fn forward_reachability(succ: &[Vec<usize>]) -> Vec<Bits> {
    let n = succ.len();
    let mut rows: Vec<Bits> = (0..n)
        .map(|w| {
            let mut row = Bits::new(n);
            row.set(w, true);
            for &v in &succ[w] {
                row.set(v, true);
            }
            row
        })
        .collect();
    for k in 0..n {
        let row_k = rows[k].clone();
        for w in 0..n {
            if rows[w].get(k) {
                rows[w].union_with(&row_k);
            }
        }
    }
    rows
}

/// Checks every quasimodel clause and itemizes failures by world:
/// the frame axioms first, then totality, sensibility and continuity
/// of the transition relation, then the ω-sensibility biconditional
/// in both directions via the cached reachability closure.
pub fn validate_quasimodel(q: &Quasimodel) -> ValidationReport {
    let mut report = validate_typed_frame(&q.frame);
    let closure = q.closure();
    for w in 0..q.len() {
        if q.succ[w].is_empty() {
            report.push(
                Some(w),
                ValidationClause::GTotality,
                "world has no transition successor".to_string(),
            );
        }
    }
    for w in 0..q.len() {
        for &v in &q.succ[w] {
            if let Some(violation) = sensibility_violation(q.frame.type_of(w), q.frame.type_of(v))
            {
                report.push(
                    Some(w),
                    ValidationClause::GSensibility,
                    format!("edge ({w}, {v}): {violation}"),
                );
            }
        }
    }
    let r = q.frame.relation();
    for w in 0..q.len() {
        for &v in &q.succ[w] {
            for w2 in r.row(w) {
                if !q.succ[w2].iter().any(|&v2| r.get(v, v2)) {
                    report.push(
                        Some(w),
                        ValidationClause::GContinuity,
                        format!(
                            "edge ({w}, {v}): world {w2} above {w} has no transition successor above {v}"
                        ),
                    );
                }
            }
        }
    }
    for ev in eventuality_table(closure) {
        let star = closure.negation_of(ev.neg_star);
        let mut refuters = Bits::new(q.len());
        for x in 0..q.len() {
            if q.frame.type_of(x).contains_idx(ev.neg_body) {
                refuters.set(x, true);
            }
        }
        for w in 0..q.len() {
            let witnessed = q.reach[w].iter_ones().any(|v| refuters.get(v));
            if q.frame.type_of(w).contains_idx(ev.neg_star) {
                if !witnessed {
                    report.push(
                        Some(w),
                        ValidationClause::OmegaSensibility,
                        format!(
                            "`{}` is in the type but no reachable world contains `{}`",
                            closure.entry(ev.neg_star),
                            closure.entry(ev.neg_body),
                        ),
                    );
                }
            } else if witnessed {
                report.push(
                    Some(w),
                    ValidationClause::OmegaSensibility,
                    format!(
                        "`{}` is in the type yet some reachable world contains `{}`",
                        closure.entry(star),
                        closure.entry(ev.neg_body),
                    ),
                );
            }
        }
    }
    report
}

/// The first world whose type contains `psi`, if any. `psi` must be
/// in the closure, up to double negation.
pub fn satisfies(q: &Quasimodel, psi: &Formula) -> Result<Option<usize>, TypeError> {
    let i = q
        .closure()
        .index_of(psi)
        .ok_or_else(|| TypeError::UnknownFormula(psi.to_string()))?;
    Ok((0..q.len()).find(|&w| q.frame.type_of(w).contains_idx(i)))
}

/// An ultimately periodic path, denoting the infinite sequence
/// `prefix · cycle · cycle · …`. Constructed against a quasimodel so
/// that every consecutive pair — inside the prefix, across the
/// junction, inside the cycle, and around the wrap — is a transition
/// edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LassoPath {
    prefix: Vec<usize>,
    cycle: Vec<usize>,
}

impl LassoPath {
    pub fn new(
        q: &Quasimodel,
        prefix: Vec<usize>,
        cycle: Vec<usize>,
    ) -> Result<LassoPath, QuasiError> {
        if cycle.is_empty() {
            return Err(QuasiError::EmptyCycle);
        }
        let n = q.len();
        for &w in prefix.iter().chain(cycle.iter()) {
            if w >= n {
                return Err(QuasiError::WorldOutOfRange {
                    world: w,
                    worlds: n,
                });
            }
        }
        let combined: Vec<usize> = prefix.iter().chain(cycle.iter()).copied().collect();
        for at in 0..combined.len() - 1 {
            if !q.has_edge(combined[at], combined[at + 1]) {
                return Err(QuasiError::NotAPath { at });
            }
        }
        if !q.has_edge(*cycle.last().unwrap(), cycle[0]) {
            return Err(QuasiError::NoWrapEdge);
        }
        Ok(LassoPath { prefix, cycle })
    }

    pub fn prefix(&self) -> &[usize] {
        &self.prefix
    }

    pub fn cycle(&self) -> &[usize] {
        &self.cycle
    }

    /// The world at position `n` of the denoted infinite path.
    pub fn world_at(&self, n: usize) -> usize {
        if n < self.prefix.len() {
            self.prefix[n]
        } else {
            self.cycle[(n - self.prefix.len()) % self.cycle.len()]
        }
    }
}

/// Drops the head of the denoted path: the prefix loses its first
/// world, and a pure cycle rotates left.
pub fn shift(p: &LassoPath) -> LassoPath {
    if p.prefix.is_empty() {
        let mut cycle = p.cycle.clone();
        cycle.rotate_left(1);
        LassoPath {
            prefix: Vec::new(),
            cycle,
        }
    } else {
        LassoPath {
            prefix: p.prefix[1..].to_vec(),
            cycle: p.cycle.clone(),
        }
    }
}

/// Membership of `candidate` in the basic open `R_N(center)`: the
/// frame order must relate the two denoted paths pointwise at every
/// position up to and including `n`.
pub fn basis_member(q: &Quasimodel, center: &LassoPath, n: usize, candidate: &LassoPath) -> bool {
    (0..=n).all(|i| q.frame.r(center.world_at(i), candidate.world_at(i)))
}

/// One eventuality of the closure: the index of `!*g` and of the
/// refuting body `!g`.
pub(crate) struct Eventuality {
    pub(crate) neg_star: usize,
    pub(crate) neg_body: usize,
}

pub(crate) fn eventuality_table(closure: &Closure) -> Vec<Eventuality> {
    closure
        .eventualities()
        .iter()
        .map(|&e| {
            let star = closure.negation_of(e);
            let EntryKind::Henceforth { body } = closure.kind(star) else {
                unreachable!("eventualities negate `*` entries")
            };
            Eventuality {
                neg_star: e,
                neg_body: closure.negation_of(body),
            }
        })
        .collect()
}

/// Whether the lasso realizes every eventuality along the denoted
/// infinite path: any `!*g` at position `n` is answered by `!g` at
/// some position `K ≥ n`. Obligations repeat with the cycle, so
/// positions up to `prefix + cycle` with witnesses sought within
/// `prefix + 2·cycle` decide the whole path.
pub fn is_realizing(q: &Quasimodel, p: &LassoPath) -> bool {
    let evs = eventuality_table(q.closure());
    let first = p.prefix.len() + p.cycle.len();
    let horizon = p.prefix.len() + 2 * p.cycle.len();
    for n in 0..first {
        let t = q.frame.type_of(p.world_at(n));
        for ev in &evs {
            if t.contains_idx(ev.neg_star)
                && !(n..horizon).any(|k| q.frame.type_of(p.world_at(k)).contains_idx(ev.neg_body))
            {
                return false;
            }
        }
    }
    true
}

/// Shortest transition path from `start` to a world satisfying
/// `goal`, both endpoints included. `within` restricts every world
/// after `start` to a sorted member list; `min_steps` of 1 forbids
/// the zero-length answer (used to close cycles). Successor lists are
/// ascending, so breadth-first order makes the answer deterministic.
fn bfs_path(
    q: &Quasimodel,
    start: usize,
    within: Option<&[usize]>,
    min_steps: usize,
    goal: impl Fn(usize) -> bool,
) -> Option<Vec<usize>> {
    let allowed = |v: usize| within.is_none_or(|s| s.binary_search(&v).is_ok());
    if min_steps == 0 && goal(start) {
        return Some(vec![start]);
    }
    let n = q.len();
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for &v in q.successors(start) {
        if allowed(v) && !seen[v] {
            seen[v] = true;
            parent[v] = Some(start);
            queue.push_back(v);
        }
    }
    while let Some(x) = queue.pop_front() {
        if goal(x) {
            let mut path = vec![x];
            let mut cur = x;
            loop {
                let p = parent[cur].expect("breadth-first parents reach back to the start");
                path.push(p);
                if p == start {
                    break;
                }
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for &v in q.successors(x) {
            if allowed(v) && !seen[v] {
                seen[v] = true;
                parent[v] = Some(x);
                queue.push_back(v);
            }
        }
    }
    None
}

/// Reflexive reachability from `start` through edges staying inside
/// `within`.
fn reach_within(q: &Quasimodel, start: usize, within: &[usize]) -> Bits {
    let mut row = Bits::new(q.len());
    row.set(start, true);
    let mut queue = VecDeque::from([start]);
    while let Some(x) = queue.pop_front() {
        for &v in q.successors(x) {
            if within.binary_search(&v).is_ok() && !row.get(v) {
                row.set(v, true);
                queue.push_back(v);
            }
        }
    }
    row
}

/// Strongly connected components of the transition relation restricted
/// to `alive` (sorted), each component sorted, ordered by least member.
fn components_within(q: &Quasimodel, alive: &[usize]) -> Vec<Vec<usize>> {
    let reach: Vec<Bits> = alive.iter().map(|&w| reach_within(q, w, alive)).collect();
    let pos = |w: usize| alive.binary_search(&w).expect("member of alive");
    let mut assigned = Bits::new(q.len());
    let mut comps = Vec::new();
    for &w in alive {
        if assigned.get(w) {
            continue;
        }
        let comp: Vec<usize> = alive
            .iter()
            .copied()
            .filter(|&v| reach[pos(w)].get(v) && reach[pos(v)].get(w))
            .collect();
        for &v in &comp {
            assigned.set(v, true);
        }
        comps.push(comp);
    }
    comps
}

/// A self-realizing cycle component reachable from `start`: a
/// strongly connected world set carrying at least one internal edge,
/// in which every member's eventualities are refuted by some member.
/// Worlds that can never sit on such a cycle are pruned and the
/// components recomputed until one qualifies; `None` is only possible
/// when the quasimodel is not ω-sensible.
fn good_cycle_component(q: &Quasimodel, start: usize) -> Option<Vec<usize>> {
    let evs = eventuality_table(q.closure());
    let mut alive: Vec<usize> = q.reach[start].iter_ones().collect();
    loop {
        if alive.is_empty() {
            return None;
        }
        let mut survivors: Vec<usize> = Vec::new();
        for comp in components_within(q, &alive) {
            let internal_edge = comp
                .iter()
                .any(|&w| q.successors(w).iter().any(|&v| comp.binary_search(&v).is_ok()));
            if !internal_edge {
                continue;
            }
            let ok_world = |w: usize| {
                evs.iter().all(|ev| {
                    !q.frame.type_of(w).contains_idx(ev.neg_star)
                        || comp
                            .iter()
                            .any(|&v| q.frame.type_of(v).contains_idx(ev.neg_body))
                })
            };
            if comp.iter().all(|&w| ok_world(w)) {
                return Some(comp);
            }
            survivors.extend(comp.iter().copied().filter(|&w| ok_world(w)));
        }
        if survivors.len() == alive.len() {
            return None;
        }
        survivors.sort_unstable();
        alive = survivors;
    }
}

/// Extends a finite transition path to a realizing lasso. Each
/// eventuality pending at the endpoint is chased — in closure order —
/// to its nearest refuter (worlds already refuting are skipped, so
/// every chase advances); the path is then routed into a reachable
/// self-realizing component and closed into a cycle visiting a
/// refuter of every eventuality the component carries. Shortest
/// witnesses and smallest world indices make the result deterministic.
///
/// Validity of `q` is not re-checked here; dead ends that only a
/// non-ω-sensible or non-total quasimodel can produce surface as
/// `InvalidQuasimodel`.
pub fn extend_to_realizing(q: &Quasimodel, path: &[usize]) -> Result<LassoPath, QuasiError> {
    if path.is_empty() {
        return Err(QuasiError::EmptyPath);
    }
    for &w in path {
        if w >= q.len() {
            return Err(QuasiError::WorldOutOfRange {
                world: w,
                worlds: q.len(),
            });
        }
    }
    for at in 0..path.len() - 1 {
        if !q.has_edge(path[at], path[at + 1]) {
            return Err(QuasiError::NotAPath { at });
        }
    }
    let evs = eventuality_table(q.closure());
    let mut prefix = path.to_vec();
    for ev in &evs {
        let end = *prefix.last().unwrap();
        let t = q.frame.type_of(end);
        if !t.contains_idx(ev.neg_star) || t.contains_idx(ev.neg_body) {
            continue;
        }
        let seg = bfs_path(q, end, None, 0, |v| {
            q.frame.type_of(v).contains_idx(ev.neg_body)
        })
        .ok_or(QuasiError::InvalidQuasimodel(
            "a pending eventuality has no reachable refuter",
        ))?;
        prefix.extend_from_slice(&seg[1..]);
    }
    let end = *prefix.last().unwrap();
    let comp = good_cycle_component(q, end).ok_or(QuasiError::InvalidQuasimodel(
        "no self-realizing cycle is reachable",
    ))?;
    let seg = bfs_path(q, end, None, 0, |v| comp.binary_search(&v).is_ok())
        .expect("the component was assembled from worlds reachable from the endpoint");
    prefix.extend_from_slice(&seg[1..]);
    let entry = prefix.pop().expect("prefix still holds the given path");
    let mut cycle = vec![entry];
    for ev in &evs {
        if !comp
            .iter()
            .any(|&w| q.frame.type_of(w).contains_idx(ev.neg_star))
        {
            continue;
        }
        if cycle
            .iter()
            .any(|&w| q.frame.type_of(w).contains_idx(ev.neg_body))
        {
            continue;
        }
        let cur = *cycle.last().unwrap();
        let seg = bfs_path(q, cur, Some(&comp), 0, |v| {
            q.frame.type_of(v).contains_idx(ev.neg_body)
        })
        .expect("the component refutes every eventuality it carries");
        cycle.extend_from_slice(&seg[1..]);
    }
    let cur = *cycle.last().unwrap();
    let seg = bfs_path(q, cur, Some(&comp), 1, |v| v == entry)
        .expect("the component is strongly connected with an internal edge");
    cycle.extend_from_slice(&seg[1..seg.len() - 1]);
    let lasso = LassoPath::new(q, prefix, cycle).expect("the construction only walks edges");
    debug_assert!(is_realizing(q, &lasso));
    Ok(lasso)
}

/// Reads a finite model as a quasimodel: worlds are the points, the
/// frame order is the model's preorder (the specialization order of
/// the carried topology), each world gets the type its point
/// evaluates to, and the transition relation is the graph of the
/// self-map. The result always validates: the semantic equations are
/// exactly the frame and sensibility clauses, monotonicity of the map
/// is continuity of its graph, and the `*`-equation supplies the
/// ω-witnesses.
pub fn from_finite_model(m: &FiniteDynModel, phi: &Formula) -> Quasimodel {
    let ev = finite_model::evaluate(m, phi);
    let types: Vec<PhiType> = (0..m.len()).map(|x| finite_model::type_at(&ev, x)).collect();
    let frame = TypedFrame::new(ev.closure().clone(), types, m.order().clone())
        .expect("the model's preorder and semantic types form a frame");
    let graph = (0..m.len()).map(|x| (x, m.step(x)));
    Quasimodel::new(frame, graph).expect("the map's graph stays in range")
}

/// Lifts a transition path pointwise along the frame order: given
/// `R w₀ v₀`, produces a transition path `⟨vₙ⟩` of the same length
/// with `R wₙ vₙ` throughout, completing one continuity square per
/// step (smallest candidate world first). A dead end is impossible
/// when the quasimodel is continuous.
pub fn lift_path(q: &Quasimodel, path: &[usize], v0: usize) -> Result<Vec<usize>, QuasiError> {
    if path.is_empty() {
        return Err(QuasiError::EmptyPath);
    }
    for &w in path.iter().chain([&v0]) {
        if w >= q.len() {
            return Err(QuasiError::WorldOutOfRange {
                world: w,
                worlds: q.len(),
            });
        }
    }
    for at in 0..path.len() - 1 {
        if !q.has_edge(path[at], path[at + 1]) {
            return Err(QuasiError::NotAPath { at });
        }
    }
    if !q.frame.r(path[0], v0) {
        return Err(QuasiError::NotRelated { w0: path[0], v0 });
    }
    let mut lifted = vec![v0];
    for &w_next in &path[1..] {
        let cur = *lifted.last().unwrap();
        let next = q
            .successors(cur)
            .iter()
            .copied()
            .find(|&v| q.frame.r(w_next, v))
            .ok_or(QuasiError::InvalidQuasimodel(
                "a continuity square cannot be completed",
            ))?;
        lifted.push(next);
    }
    Ok(lifted)
}
