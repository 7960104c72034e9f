//! The validity semi-decision procedure.
//!
//! One side searches for *partial families of paths*: finite sets of
//! tree-like local frames, each carrying an efficient `⇉`-path of a
//! prescribed length that stays inside the set. A complete, empty
//! enumeration at some depth proves the input valid. The other side
//! searches directly for a satisfying quasimodel of the negation; a
//! hit refutes validity with a concrete certificate. Both sides are
//! metered in deterministic work units, so every verdict is a pure
//! function of the formula and the budget — never of wall time or
//! worker count.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::formula::{enumerate_types, Closure, EntryKind, Formula, PhiType, TypeError};
use crate::frames::{
    embeds, frames_with_norm_exact_capped, CanonicalKey, LocalFrame, TypedFrame,
};
use crate::quasimodel::{eventuality_table, validate_quasimodel, Eventuality, Quasimodel};
use crate::rel::Relation;
use crate::temporal::{reduce_successor, sensible_pair, temporal_successor};

/// Hard ceiling on the number of frames a single norm stratum may
/// materialize, independently of the work budget. Strata grow
/// super-exponentially; this keeps a generous budget from committing
/// gigabytes of memory before the charge is even booked.
const MAX_STRATUM_FRAMES: u64 = 200_000;

/// Hard ceiling on the number of types materialized for one closure.
const MAX_TYPES: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("position {position} is out of range for a path of length {length}")]
    PositionOutOfRange { position: usize, length: usize },
    #[error("({n}, {m1}, {m2}) is not an inefficiency of this path")]
    NotAnInefficiency { n: usize, m1: usize, m2: usize },
    #[error("a spliced step could not be re-derived as a temporal successor")]
    ReductionFailed,
}

// ---------------------------------------------------------------------------
// Realization profiles.

/// When an eventuality pending at a path position is discharged: at an
/// absolute position of the path, or never within the inspected
/// horizon. `At(k) < At(k')` for `k < k'`, and every `At` precedes
/// `Never`, so maxima pick the latest obligation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Realization {
    At(usize),
    Never,
}

impl Realization {
    pub fn is_finite(self) -> bool {
        matches!(self, Realization::At(_))
    }

    /// Whether the time lies strictly beyond position `m`.
    fn beyond(self, m: usize) -> bool {
        match self {
            Realization::At(k) => m < k,
            Realization::Never => true,
        }
    }
}

/// The realization times of one path position: for every `!*g` in the
/// root type there, the least position `K ≥ N` whose root type
/// contains `!g`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RealizationProfile {
    position: usize,
    times: Vec<(usize, Realization)>,
}

impl RealizationProfile {
    pub fn position(&self) -> usize {
        self.position
    }

    /// `(closure index of !*g, realization time)` pairs, ascending by
    /// closure index.
    pub fn times(&self) -> &[(usize, Realization)] {
        &self.times
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The latest realization time, `At(0)` when nothing is pending.
    pub fn rho_inf(&self) -> Realization {
        self.times
            .iter()
            .map(|&(_, t)| t)
            .max()
            .unwrap_or(Realization::At(0))
    }

    /// The latest *finite* realization time, `0` when there is none.
    pub fn rho_fin(&self) -> usize {
        self.times
            .iter()
            .filter_map(|&(_, t)| match t {
                Realization::At(k) => Some(k),
                Realization::Never => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Whether some obligation of this position is still undischarged
    /// strictly after position `m`.
    pub fn pending_beyond(&self, m: usize) -> bool {
        self.rho_inf().beyond(m)
    }

    /// Whether some obligation of this position is discharged strictly
    /// between positions `lo` and `hi`.
    pub fn realizes_between(&self, lo: usize, hi: usize) -> bool {
        self.times
            .iter()
            .any(|&(_, t)| matches!(t, Realization::At(k) if lo < k && k < hi))
    }
}

/// The eventualities of a type: its members of the form `!*g`.
pub fn eventualities(t: &PhiType) -> Vec<Formula> {
    let closure = t.closure();
    closure
        .eventualities()
        .iter()
        .filter(|&&i| t.contains_idx(i))
        .map(|&i| closure.entry(i).clone())
        .collect()
}

fn profile_times(
    evs: &[Eventuality],
    roots: &[&PhiType],
    position: usize,
) -> Vec<(usize, Realization)> {
    let here = roots[position];
    evs.iter()
        .filter(|ev| here.contains_idx(ev.neg_star))
        .map(|ev| {
            let found =
                (position..roots.len()).find(|&k| roots[k].contains_idx(ev.neg_body));
            (
                ev.neg_star,
                found.map(Realization::At).unwrap_or(Realization::Never),
            )
        })
        .collect()
}

/// The realization profile of a path of local frames at one position.
/// For every eventuality `!*g` in that position's root type, the time
/// is the least `K ≥ position` whose root type contains the refuting
/// body `!g`, and `Never` if no inspected position does.
pub fn realization_profile(
    path: &[LocalFrame],
    position: usize,
) -> Result<RealizationProfile, SearchError> {
    if position >= path.len() {
        return Err(SearchError::PositionOutOfRange {
            position,
            length: path.len(),
        });
    }
    let evs = eventuality_table(path[position].closure());
    let roots: Vec<&PhiType> = path.iter().map(|a| a.root_type()).collect();
    Ok(RealizationProfile {
        position,
        times: profile_times(&evs, &roots, position),
    })
}

// ---------------------------------------------------------------------------
// Inefficiencies of paths.

/// The lexicographically least inefficiency of the path, if any:
/// positions `N ≤ M1 < M2` such that the frame at `M1` embeds into the
/// frame at `M2`, some obligation of the frame at `N` is still pending
/// after `M2`, and nothing of `N`'s is discharged strictly between
/// `M1` and `M2` — a stretch that could be skipped without losing a
/// single discharge. Consecutive path frames are assumed `⇉`-related;
/// the function itself only reads root types and embeddings.
pub fn find_inefficiency(path: &[LocalFrame]) -> Option<(usize, usize, usize)> {
    if path.is_empty() {
        return None;
    }
    let evs = eventuality_table(path[0].closure());
    let roots: Vec<&PhiType> = path.iter().map(|a| a.root_type()).collect();
    let profiles: Vec<Vec<(usize, Realization)>> = (0..path.len())
        .map(|n| profile_times(&evs, &roots, n))
        .collect();
    let mut embed_memo: HashMap<(usize, usize), bool> = HashMap::new();
    for n in 0..path.len() {
        for m1 in n..path.len() {
            for m2 in (m1 + 1)..path.len() {
                if !profiles[n].iter().any(|&(_, t)| t.beyond(m2)) {
                    continue;
                }
                if profiles[n]
                    .iter()
                    .any(|&(_, t)| matches!(t, Realization::At(k) if m1 < k && k < m2))
                {
                    continue;
                }
                let embedded = *embed_memo
                    .entry((m1, m2))
                    .or_insert_with(|| embeds(&path[m1], &path[m2]).is_some());
                if embedded {
                    return Some((n, m1, m2));
                }
            }
        }
    }
    None
}

/// Whether every step of the path grows the norm by at most the
/// closure size: `‖a_{i+1}‖ ≤ ‖a_i‖ + |φ|`.
pub fn norm_growth_ok(path: &[LocalFrame]) -> bool {
    path.windows(2).all(|w| {
        w[1].measures().norm() <= w[0].measures().norm() + w[0].closure().size()
    })
}

/// Whether the path is efficient: bounded norm growth at every step
/// and no inefficiency anywhere.
pub fn is_efficient(path: &[LocalFrame]) -> bool {
    norm_growth_ok(path) && find_inefficiency(path).is_none()
}

/// Removes one inefficiency `(N, M1, M2)`: keeps the prefix up to
/// `M1`, drops positions `M1+1 ..= M2`, and re-derives the tail. The
/// junction is sound because the frame at `M1` embeds into the one at
/// `M2` and embeddings compose with temporal steps; each re-derived
/// tail frame is reduced so the norm growth bound is restored. The
/// result is strictly shorter and still a `⇉`-path.
pub fn remove_inefficiency(
    path: &[LocalFrame],
    triple: (usize, usize, usize),
) -> Result<Vec<LocalFrame>, SearchError> {
    let (n, m1, m2) = triple;
    let bad = SearchError::NotAnInefficiency { n, m1, m2 };
    if n > m1 || m1 >= m2 || m2 >= path.len() {
        return Err(bad);
    }
    let profile = realization_profile(path, n)?;
    if !profile.pending_beyond(m2)
        || profile.realizes_between(m1, m2)
        || embeds(&path[m1], &path[m2]).is_none()
    {
        return Err(bad);
    }
    let mut out: Vec<LocalFrame> = path[..=m1].to_vec();
    for next in &path[m2 + 1..] {
        let prev = out.last().expect("the kept prefix is nonempty");
        let reduced =
            reduce_successor(prev, next).map_err(|_| SearchError::ReductionFailed)?;
        out.push(reduced);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Strata and partial families.

/// The stratum where a frame first appears: the least `k` with
/// `‖a‖ ≤ (k + 1) · |φ|`.
pub fn stratum(a: &LocalFrame) -> usize {
    a.measures()
        .norm()
        .div_ceil(a.closure().size())
        .saturating_sub(1)
}

/// A depth-`N` partial family of paths: finitely many local frames
/// (one per isomorphism class, keyed by canonical form), each carrying
/// an efficient `⇉`-path of length `N − k + 1` — where `k` is the
/// frame's stratum — that starts at the frame itself and never leaves
/// the family.
#[derive(Debug, Clone)]
pub struct PartialFamily {
    depth: usize,
    frames: BTreeMap<CanonicalKey, LocalFrame>,
    paths: BTreeMap<CanonicalKey, Vec<CanonicalKey>>,
}

impl PartialFamily {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Member frames in canonical-key order.
    pub fn frames(&self) -> impl Iterator<Item = &LocalFrame> {
        self.frames.values()
    }

    pub fn frame(&self, key: &CanonicalKey) -> Option<&LocalFrame> {
        self.frames.get(key)
    }

    /// The path assigned to a member, as canonical keys.
    pub fn path_of(&self, key: &CanonicalKey) -> Option<&[CanonicalKey]> {
        self.paths.get(key).map(|p| p.as_slice())
    }

    /// The path assigned to a member, resolved to frames.
    pub fn path_frames(&self, key: &CanonicalKey) -> Option<Vec<&LocalFrame>> {
        let path = self.paths.get(key)?;
        path.iter().map(|k| self.frames.get(k)).collect()
    }

    /// A stratum-0 member whose root type contains `goal`, if any.
    /// `None` also covers goals outside the member closure.
    pub fn satisfying_member(&self, goal: &Formula) -> Option<&LocalFrame> {
        self.frames.values().find(|a| {
            stratum(a) == 0
                && a.closure()
                    .index_of(goal)
                    .is_some_and(|i| a.root_type().contains_idx(i))
        })
    }

    /// Whether the family satisfies `goal`: some stratum-0 member
    /// carries it in its root type.
    pub fn satisfies(&self, goal: &Formula) -> bool {
        self.satisfying_member(goal).is_some()
    }

    /// The restriction to a smaller depth: members of stratum at most
    /// `depth` keep the prescribed-length prefix of their path.
    /// Bounded norm growth keeps those prefixes inside the restricted
    /// member set, so the result is again a partial family.
    pub fn restrict(&self, depth: usize) -> PartialFamily {
        assert!(
            depth <= self.depth,
            "restriction only shrinks the depth ({} to {depth})",
            self.depth
        );
        let frames: BTreeMap<CanonicalKey, LocalFrame> = self
            .frames
            .iter()
            .filter(|(_, a)| stratum(a) <= depth)
            .map(|(k, a)| (k.clone(), a.clone()))
            .collect();
        let paths = frames
            .iter()
            .map(|(key, a)| {
                let full = &self.paths[key];
                (key.clone(), full[..=depth - stratum(a)].to_vec())
            })
            .collect();
        PartialFamily {
            depth,
            frames,
            paths,
        }
    }

    /// Re-derives every family invariant from scratch: key
    /// consistency, stratum bounds, path lengths, membership,
    /// `⇉`-adjacency of consecutive path frames, and efficiency of
    /// every path. Returns the first violation as text.
    pub fn check(&self) -> Result<(), String> {
        for key in self.paths.keys() {
            if !self.frames.contains_key(key) {
                return Err(format!("a path is stored for the non-member {key:?}"));
            }
        }
        for (key, a) in &self.frames {
            if a.canonical_form() != key {
                return Err(format!("a frame is stored under the foreign key {key:?}"));
            }
            let k = stratum(a);
            if k > self.depth {
                return Err(format!(
                    "member {key:?} has stratum {k}, beyond depth {}",
                    self.depth
                ));
            }
            let Some(path) = self.paths.get(key) else {
                return Err(format!("member {key:?} has no path"));
            };
            if path.len() != self.depth - k + 1 {
                return Err(format!(
                    "the path of {key:?} has length {} instead of {}",
                    path.len(),
                    self.depth - k + 1
                ));
            }
            if path[0] != *key {
                return Err(format!("the path of {key:?} does not start at it"));
            }
            let resolved: Option<Vec<&LocalFrame>> =
                path.iter().map(|k| self.frames.get(k)).collect();
            let Some(resolved) = resolved else {
                return Err(format!("the path of {key:?} leaves the family"));
            };
            let owned: Vec<LocalFrame> = resolved.into_iter().cloned().collect();
            for (i, pair) in owned.windows(2).enumerate() {
                if temporal_successor(&pair[0], &pair[1]).is_none() {
                    return Err(format!(
                        "the path of {key:?} breaks the temporal step at position {i}"
                    ));
                }
            }
            if !is_efficient(&owned) {
                return Err(format!("the path of {key:?} is not efficient"));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Work metering.

/// Deterministic work accounting. One unit is charged per type or
/// frame drawn from an enumerator, per memo-missing `⇉` or embedding
/// decision, per search node, and per transition relation the
/// certifier validates. Verdicts depend only on the formula and the
/// budget.
#[derive(Debug, Clone, Copy)]
struct Meter {
    spent: u64,
    limit: u64,
}

struct OutOfBudget;

impl Meter {
    fn new(limit: u64) -> Meter {
        Meter { spent: 0, limit }
    }

    fn charge(&mut self, units: u64) -> Result<(), OutOfBudget> {
        if units > self.limit.saturating_sub(self.spent) {
            self.spent = self.limit;
            Err(OutOfBudget)
        } else {
            self.spent += units;
            Ok(())
        }
    }

    fn remaining(&self) -> u64 {
        self.limit.saturating_sub(self.spent)
    }

    fn dead(&self) -> bool {
        self.spent >= self.limit
    }
}

// ---------------------------------------------------------------------------
// The family searcher.

/// The outcome of one depth-bounded family enumeration. When
/// `complete` is true the listing covered every partial family shape
/// over the full stratum, so an empty `families` list is a proof that
/// no partial family of this depth satisfies the goal.
#[derive(Debug, Clone)]
pub struct FamilyEnumeration {
    pub depth: usize,
    pub families: Vec<PartialFamily>,
    pub complete: bool,
    pub work: u64,
}

impl FamilyEnumeration {
    /// Emptiness counts as evidence only when the enumeration is
    /// complete.
    pub fn proves_empty(&self) -> bool {
        self.complete && self.families.is_empty()
    }
}

/// Enumerates partial families of paths of the given depth over the
/// closure of `phi` that satisfy `goal` (a signed subformula of
/// `phi`), within `budget` work units.
///
/// When every norm stratum up to the depth bound fits the budget, the
/// enumeration is complete: it runs a greatest-fixpoint pruning over
/// the full frame pool and returns one generated family per surviving
/// satisfying seed, so an empty result proves there are none. When a
/// stratum is too large, a greedy streaming finder takes over: it can
/// still produce families (witnessing that the depth is inhabited) but
/// its silence proves nothing, and `complete` stays false.
pub fn enumerate_partial_families(
    phi: &Formula,
    depth: usize,
    goal: &Formula,
    budget: u64,
) -> Result<FamilyEnumeration, TypeError> {
    let closure = Closure::of(phi);
    let goal_idx = closure
        .index_of(goal)
        .ok_or_else(|| TypeError::UnknownFormula(goal.to_string()))?;
    let mut meter = Meter::new(budget);
    let enumeration = |families, complete, meter: &Meter| FamilyEnumeration {
        depth,
        families,
        complete,
        work: meter.spent,
    };
    let Ok(types) = materialize_types(&closure, &mut meter) else {
        return Ok(enumeration(Vec::new(), false, &meter));
    };
    if !types.iter().any(|t| t.contains_idx(goal_idx)) {
        // No type carries the goal, so no frame can root a satisfying
        // family at any depth: the stream is empty and provably so.
        return Ok(enumeration(Vec::new(), true, &meter));
    }
    let mut ctx = SearchContext::new(closure, types);
    let result = ctx.families_at_depth(depth, goal_idx, &mut meter);
    Ok(enumeration(
        result.families,
        result.complete,
        &meter,
    ))
}

fn materialize_types(
    closure: &Arc<Closure>,
    meter: &mut Meter,
) -> Result<Arc<Vec<PhiType>>, OutOfBudget> {
    let cap = usize::try_from(meter.remaining())
        .unwrap_or(usize::MAX)
        .min(MAX_TYPES);
    let types: Vec<PhiType> = enumerate_types(closure).take(cap + 1).collect();
    if types.len() > cap {
        meter.charge(u64::MAX)?;
        unreachable!("charging past the cap always fails");
    }
    meter.charge(types.len() as u64)?;
    Ok(Arc::new(types))
}

struct DepthResult {
    families: Vec<PartialFamily>,
    complete: bool,
    out_of_budget: bool,
}

enum StratumGate {
    Open(Arc<Vec<LocalFrame>>),
    Refused,
}

/// Memoized machinery shared across depths: materialized norm strata
/// and `⇉`/embedding decisions keyed by canonical forms (both
/// relations are isomorphism-invariant).
struct SearchContext {
    closure: Arc<Closure>,
    types: Arc<Vec<PhiType>>,
    evs: Vec<Eventuality>,
    strata: Vec<Arc<Vec<LocalFrame>>>,
    type_edges: Option<Vec<Vec<usize>>>,
    step_memo: HashMap<(CanonicalKey, CanonicalKey), bool>,
    embed_memo: HashMap<(CanonicalKey, CanonicalKey), bool>,
}

impl SearchContext {
    fn new(closure: Arc<Closure>, types: Arc<Vec<PhiType>>) -> SearchContext {
        let evs = eventuality_table(&closure);
        SearchContext {
            closure,
            types,
            evs,
            strata: Vec::new(),
            type_edges: None,
            step_memo: HashMap::new(),
            embed_memo: HashMap::new(),
        }
    }

    /// Whether some goal-carrying type starts a walk of `depth + 1`
    /// vertices in the type-sensibility digraph. A `⇉`-step relates
    /// the root types of its endpoints sensibly, so the root types of
    /// any family walk form such a digraph walk — a negative answer
    /// proves the depth empty without inspecting a single frame.
    fn type_walk_exists(
        &mut self,
        depth: usize,
        goal_idx: usize,
        meter: &mut Meter,
    ) -> Result<bool, OutOfBudget> {
        let m = self.types.len();
        if self.type_edges.is_none() {
            meter.charge((m as u64).saturating_mul(m as u64))?;
            let edges: Vec<Vec<usize>> = (0..m)
                .map(|i| {
                    (0..m)
                        .filter(|&j| sensible_pair(&self.types[i], &self.types[j]))
                        .collect()
                })
                .collect();
            self.type_edges = Some(edges);
        }
        let edges = self.type_edges.as_ref().expect("just filled");
        // `alive[i]`: a walk of the required residual length starts at
        // type `i`. The sequence is monotonically shrinking, so a
        // stable round is a fixpoint covering all larger depths.
        let mut alive = vec![true; m];
        for _ in 0..depth {
            let next: Vec<bool> = (0..m)
                .map(|i| edges[i].iter().any(|&j| alive[j]))
                .collect();
            if next == alive {
                break;
            }
            alive = next;
        }
        Ok((0..m).any(|i| alive[i] && self.types[i].contains_idx(goal_idx)))
    }

    /// The frames of norm exactly `n`, materializing strata on demand.
    /// Beyond the second stratum, an extrapolated size — cubic in the
    /// latest stratum-to-stratum ratio — must fit both the remaining
    /// budget and the hard frame cap, otherwise the stratum stays
    /// closed and `Refused` is returned. A genuine budget exhaustion
    /// while charging for materialized frames is an error.
    fn stratum_frames(
        &mut self,
        n: usize,
        meter: &mut Meter,
    ) -> Result<StratumGate, OutOfBudget> {
        while self.strata.len() < n {
            let next = self.strata.len() + 1;
            if next > 2 {
                let last = self.strata[next - 2].len() as u64;
                let prev = (self.strata[next - 3].len() as u64).max(1);
                let ratio = last.div_ceil(prev).max(1);
                let predicted = ratio.saturating_mul(ratio).saturating_mul(last.max(1));
                if predicted > meter.remaining().min(MAX_STRATUM_FRAMES) {
                    return Ok(StratumGate::Refused);
                }
            }
            // The builder is capped by the affordable frame count, so
            // the budget bounds memory even for the always-attempted
            // strata 1 and 2 (box-free closures make even norm 2
            // combinatorial). An overflowing build has done the capped
            // amount of work before giving up.
            let cap = usize::try_from(meter.remaining().min(MAX_STRATUM_FRAMES))
                .unwrap_or(usize::MAX);
            let Some(frames) =
                frames_with_norm_exact_capped(&self.closure, &self.types, next, cap)
            else {
                meter.charge(cap as u64)?;
                return Ok(StratumGate::Refused);
            };
            let count = frames.len() as u64;
            self.strata.push(Arc::new(frames));
            meter.charge(count)?;
        }
        Ok(StratumGate::Open(self.strata[n - 1].clone()))
    }

    /// Whether `a ⇉ b`, memoized by canonical forms.
    fn step(
        &mut self,
        a: &LocalFrame,
        b: &LocalFrame,
        meter: &mut Meter,
    ) -> Result<bool, OutOfBudget> {
        let key = (a.canonical_form().clone(), b.canonical_form().clone());
        if let Some(&hit) = self.step_memo.get(&key) {
            return Ok(hit);
        }
        meter.charge(1)?;
        let hit = temporal_successor(a, b).is_some();
        self.step_memo.insert(key, hit);
        Ok(hit)
    }

    /// Whether `a ⊴ b`, memoized by canonical forms.
    fn embed(
        &mut self,
        a: &LocalFrame,
        b: &LocalFrame,
        meter: &mut Meter,
    ) -> Result<bool, OutOfBudget> {
        let key = (a.canonical_form().clone(), b.canonical_form().clone());
        if let Some(&hit) = self.embed_memo.get(&key) {
            return Ok(hit);
        }
        meter.charge(1)?;
        let hit = embeds(a, b).is_some();
        self.embed_memo.insert(key, hit);
        Ok(hit)
    }

    /// Whether appending `cand` keeps the walk efficient. Exact: the
    /// status of a triple `(N, M1, M2)` only reads positions up to
    /// `M2`, so prefixes of efficient walks are efficient and the only
    /// new triples to rule out are those whose `M2` is the appended
    /// position.
    fn extension_ok(
        &mut self,
        walk: &[LocalFrame],
        cand: &LocalFrame,
        meter: &mut Meter,
    ) -> Result<bool, OutOfBudget> {
        let m = walk.len();
        if cand.measures().norm()
            > walk[m - 1].measures().norm() + self.closure.size()
        {
            return Ok(false);
        }
        let roots: Vec<&PhiType> = walk
            .iter()
            .map(|a| a.root_type())
            .chain(std::iter::once(cand.root_type()))
            .collect();
        let profiles: Vec<Vec<(usize, Realization)>> =
            (0..m).map(|n| profile_times(&self.evs, &roots, n)).collect();
        let pending: Vec<bool> = profiles
            .iter()
            .map(|p| p.iter().any(|&(_, t)| t.beyond(m)))
            .collect();
        if !pending.iter().any(|&b| b) {
            return Ok(true);
        }
        for m1 in 0..m {
            let culprit = (0..=m1).any(|n| {
                pending[n]
                    && !profiles[n]
                        .iter()
                        .any(|&(_, t)| matches!(t, Realization::At(k) if m1 < k && k < m))
            });
            if !culprit {
                continue;
            }
            if self.embed(&walk[m1], cand, meter)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn families_at_depth(
        &mut self,
        depth: usize,
        goal_idx: usize,
        meter: &mut Meter,
    ) -> DepthResult {
        match self.type_walk_exists(depth, goal_idx, meter) {
            Ok(true) => {}
            Ok(false) => {
                return DepthResult {
                    families: Vec::new(),
                    complete: true,
                    out_of_budget: false,
                }
            }
            Err(OutOfBudget) => {
                return DepthResult {
                    families: Vec::new(),
                    complete: false,
                    out_of_budget: true,
                }
            }
        }
        match self.full_families(depth, goal_idx, meter) {
            Ok(Some(families)) => DepthResult {
                families,
                complete: true,
                out_of_budget: false,
            },
            Ok(None) => {
                let (families, out_of_budget) =
                    self.greedy_families(depth, goal_idx, meter);
                DepthResult {
                    families,
                    complete: false,
                    out_of_budget,
                }
            }
            Err(OutOfBudget) => DepthResult {
                families: Vec::new(),
                complete: false,
                out_of_budget: true,
            },
        }
    }

    /// The complete route: materialize every stratum up to the depth
    /// bound, then prune the pool to its greatest fixpoint — a frame
    /// survives iff it has an efficient walk of its prescribed length
    /// through surviving frames. Families are closed under union and
    /// any family is a subset of the pool that the pruning preserves,
    /// so the surviving satisfying seeds enumerate exactly the
    /// satisfiable ones; no survivor means provably no family.
    /// `Ok(None)` means a stratum was refused and the caller should
    /// fall back to the greedy finder.
    fn full_families(
        &mut self,
        depth: usize,
        goal_idx: usize,
        meter: &mut Meter,
    ) -> Result<Option<Vec<PartialFamily>>, OutOfBudget> {
        let bound = (depth + 1) * self.closure.size();
        let mut pool: Vec<LocalFrame> = Vec::new();
        for n in 1..=bound {
            match self.stratum_frames(n, meter)? {
                StratumGate::Open(s) => pool.extend(s.iter().cloned()),
                StratumGate::Refused => return Ok(None),
            }
        }
        let seeds: Vec<usize> = pool
            .iter()
            .enumerate()
            .filter(|(_, a)| stratum(a) == 0 && a.root_type().contains_idx(goal_idx))
            .map(|(i, _)| i)
            .collect();
        if seeds.is_empty() {
            return Ok(Some(Vec::new()));
        }
        let lengths: Vec<usize> = pool.iter().map(|a| depth - stratum(a) + 1).collect();
        let mut alive = vec![true; pool.len()];
        let mut walks: Vec<Option<Vec<usize>>> = vec![None; pool.len()];
        loop {
            let mut changed = false;
            for i in 0..pool.len() {
                if !alive[i] {
                    continue;
                }
                if let Some(w) = &walks[i] {
                    if w.iter().all(|&x| alive[x]) {
                        continue;
                    }
                }
                match self.find_walk(&pool, &alive, i, lengths[i], meter)? {
                    Some(w) => walks[i] = Some(w),
                    None => {
                        alive[i] = false;
                        walks[i] = None;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut families = Vec::new();
        for &seed in &seeds {
            if !alive[seed] {
                continue;
            }
            // The family generated by the seed: close it under path
            // membership.
            let mut members: Vec<usize> = Vec::new();
            let mut queue = vec![seed];
            while let Some(i) = queue.pop() {
                if members.contains(&i) {
                    continue;
                }
                members.push(i);
                queue.extend(
                    walks[i]
                        .as_ref()
                        .expect("surviving frames carry walks")
                        .iter()
                        .copied(),
                );
            }
            let mut frames = BTreeMap::new();
            let mut paths = BTreeMap::new();
            for &i in &members {
                let key = pool[i].canonical_form().clone();
                frames.insert(key.clone(), pool[i].clone());
                paths.insert(
                    key,
                    walks[i]
                        .as_ref()
                        .expect("surviving frames carry walks")
                        .iter()
                        .map(|&x| pool[x].canonical_form().clone())
                        .collect(),
                );
            }
            families.push(PartialFamily {
                depth,
                frames,
                paths,
            });
        }
        Ok(Some(families))
    }

    /// Depth-first search for an efficient `⇉`-walk of exactly `len`
    /// positions starting at `pool[start]` and drawing every frame
    /// from the alive part of the pool. Complete: prefix pruning is
    /// exact, candidates are exhausted in pool order.
    fn find_walk(
        &mut self,
        pool: &[LocalFrame],
        alive: &[bool],
        start: usize,
        len: usize,
        meter: &mut Meter,
    ) -> Result<Option<Vec<usize>>, OutOfBudget> {
        let mut idx = vec![start];
        let mut frames = vec![pool[start].clone()];
        if self.walk_dfs(pool, alive, len, &mut idx, &mut frames, meter)? {
            Ok(Some(idx))
        } else {
            Ok(None)
        }
    }

    fn walk_dfs(
        &mut self,
        pool: &[LocalFrame],
        alive: &[bool],
        len: usize,
        idx: &mut Vec<usize>,
        frames: &mut Vec<LocalFrame>,
        meter: &mut Meter,
    ) -> Result<bool, OutOfBudget> {
        meter.charge(1)?;
        if idx.len() == len {
            return Ok(true);
        }
        let last = frames.last().expect("walks are nonempty").clone();
        for (x, cand) in pool.iter().enumerate() {
            if !alive[x] {
                continue;
            }
            if !self.step(&last, cand, meter)? {
                continue;
            }
            if !self.extension_ok(frames, cand, meter)? {
                continue;
            }
            idx.push(x);
            frames.push(cand.clone());
            if self.walk_dfs(pool, alive, len, idx, frames, meter)? {
                return Ok(true);
            }
            idx.pop();
            frames.pop();
        }
        Ok(false)
    }

    /// The streaming route, used when the full pool is out of reach:
    /// found families are genuine, not finding one proves nothing. A
    /// first pass probes every satisfying seed for a one-frame family
    /// — the bare seed at depth 0, a self-loop lasso otherwise — at
    /// one `⇉`-check apiece. Only when that pass comes up empty does
    /// the depth-first extension search run, walking `⇉` forward from
    /// each seed with every prefix kept efficient, closing cycles
    /// through frames already on the walk where possible.
    fn greedy_families(
        &mut self,
        depth: usize,
        goal_idx: usize,
        meter: &mut Meter,
    ) -> (Vec<PartialFamily>, bool) {
        let mut families = Vec::new();
        let mut seeds: Vec<LocalFrame> = Vec::new();
        for n in 1..=self.closure.size() {
            match self.stratum_frames(n, meter) {
                Ok(StratumGate::Open(stratum)) => seeds.extend(
                    stratum
                        .iter()
                        .filter(|a| a.root_type().contains_idx(goal_idx))
                        .cloned(),
                ),
                Ok(StratumGate::Refused) => break,
                Err(OutOfBudget) => return (families, true),
            }
        }
        for seed in &seeds {
            let probe = self.seed_family(seed, depth, meter);
            match probe {
                Ok(Some(f)) => families.push(f),
                Ok(None) => {}
                Err(OutOfBudget) => return (families, true),
            }
        }
        if !families.is_empty() {
            return (families, false);
        }
        for seed in &seeds {
            let mut walk = vec![seed.clone()];
            match self.greedy_walk(&mut walk, depth, meter) {
                Ok(Some(f)) => families.push(f),
                Ok(None) => {}
                Err(OutOfBudget) => return (families, true),
            }
        }
        (families, false)
    }

    /// The cheapest family shapes a seed can carry: itself alone at
    /// depth 0, or its own unrolled self-loop at positive depths.
    fn seed_family(
        &mut self,
        seed: &LocalFrame,
        depth: usize,
        meter: &mut Meter,
    ) -> Result<Option<PartialFamily>, OutOfBudget> {
        meter.charge(1)?;
        let walk = [seed.clone()];
        if depth == 0 {
            Ok(self.deadend_family(&walk, 0))
        } else if self.step(seed, seed, meter)? {
            self.lasso_family(&walk, 0, depth, meter)
        } else {
            Ok(None)
        }
    }

    fn greedy_walk(
        &mut self,
        walk: &mut Vec<LocalFrame>,
        depth: usize,
        meter: &mut Meter,
    ) -> Result<Option<PartialFamily>, OutOfBudget> {
        meter.charge(1)?;
        let pos = walk.len() - 1;
        for j in 0..=pos {
            if self.step(&walk[pos], &walk[j], meter)? {
                if let Some(f) = self.lasso_family(walk, j, depth, meter)? {
                    return Ok(Some(f));
                }
            }
        }
        if pos == depth {
            return Ok(self.deadend_family(walk, depth));
        }
        let size = self.closure.size();
        let cap_norm = (walk[pos].measures().norm() + size).min((depth + 1) * size);
        for n in 1..=cap_norm {
            let stratum = match self.stratum_frames(n, meter)? {
                StratumGate::Open(s) => s,
                StratumGate::Refused => break,
            };
            for cand in stratum.iter() {
                let last = walk.last().expect("walks are nonempty").clone();
                if !self.step(&last, cand, meter)? {
                    continue;
                }
                if !self.extension_ok(walk, cand, meter)? {
                    continue;
                }
                walk.push(cand.clone());
                let out = self.greedy_walk(walk, depth, meter)?;
                walk.pop();
                if out.is_some() {
                    return Ok(out);
                }
            }
        }
        Ok(None)
    }

    /// Builds the family determined by closing the walk's last frame
    /// back to position `j`: every member's path unrolls around the
    /// cycle from its first occurrence. Fails (with `None`) when some
    /// unrolled path is inefficient.
    fn lasso_family(
        &mut self,
        walk: &[LocalFrame],
        j: usize,
        depth: usize,
        meter: &mut Meter,
    ) -> Result<Option<PartialFamily>, OutOfBudget> {
        let pos = walk.len() - 1;
        let cycle = pos - j + 1;
        let at = |i: usize| -> &LocalFrame {
            if i <= pos {
                &walk[i]
            } else {
                &walk[j + (i - j) % cycle]
            }
        };
        let mut first: BTreeMap<CanonicalKey, usize> = BTreeMap::new();
        for (i, a) in walk.iter().enumerate() {
            first.entry(a.canonical_form().clone()).or_insert(i);
        }
        let mut frames = BTreeMap::new();
        let mut paths = BTreeMap::new();
        for (key, &i) in &first {
            let a = &walk[i];
            let len = depth - stratum(a) + 1;
            let eps: Vec<LocalFrame> = (i..i + len).map(|x| at(x).clone()).collect();
            meter.charge(eps.len() as u64)?;
            if !is_efficient(&eps) {
                return Ok(None);
            }
            frames.insert(key.clone(), a.clone());
            paths.insert(
                key.clone(),
                eps.iter().map(|b| b.canonical_form().clone()).collect(),
            );
        }
        Ok(Some(PartialFamily {
            depth,
            frames,
            paths,
        }))
    }

    /// Builds the family read off a full-length walk with no cycle:
    /// each member's path is the sub-walk from its first occurrence,
    /// which requires that occurrence to sit no later than the
    /// member's stratum. Sub-walks of an efficient walk are efficient,
    /// so nothing needs re-checking.
    fn deadend_family(&self, walk: &[LocalFrame], depth: usize) -> Option<PartialFamily> {
        debug_assert_eq!(walk.len(), depth + 1);
        let mut first: BTreeMap<CanonicalKey, usize> = BTreeMap::new();
        for (i, a) in walk.iter().enumerate() {
            first.entry(a.canonical_form().clone()).or_insert(i);
        }
        for &i in first.values() {
            if stratum(&walk[i]) < i {
                return None;
            }
        }
        let mut frames = BTreeMap::new();
        let mut paths = BTreeMap::new();
        for (key, &i) in &first {
            let a = &walk[i];
            let len = depth - stratum(a) + 1;
            frames.insert(key.clone(), a.clone());
            paths.insert(
                key.clone(),
                walk[i..i + len]
                    .iter()
                    .map(|b| b.canonical_form().clone())
                    .collect(),
            );
        }
        Some(PartialFamily {
            depth,
            frames,
            paths,
        })
    }
}

// ---------------------------------------------------------------------------
// The satisfiability certifier.

/// Outcome of the bounded search for a satisfying quasimodel.
/// `Exhausted` means every candidate up to the world bound was ruled
/// out — which says nothing about larger quasimodels, hence nothing
/// about validity of the negation.
#[derive(Debug, Clone)]
pub enum SatOutcome {
    Found {
        quasimodel: Quasimodel,
        world: usize,
        work: u64,
    },
    Exhausted {
        work: u64,
    },
    OutOfBudget {
        work: u64,
    },
}

/// Searches for a quasimodel over the closure of `psi` with at most
/// `max_worlds` worlds that satisfies `psi`, spending at most `budget`
/// work units. World counts are tried in ascending order; within one
/// count, candidate preorders, world type assignments and transition
/// relations are enumerated in a fixed order, so the first hit — and
/// therefore the verdict — is deterministic. Preorder classes are
/// examined in parallel, but outcomes are folded back in class order
/// against the sequential budget, so the verdict is identical for any
/// worker count.
pub fn find_satisfying_quasimodel(
    psi: &Formula,
    max_worlds: usize,
    budget: u64,
) -> SatOutcome {
    let closure = Closure::of(psi);
    let goal_idx = closure
        .index_of(psi)
        .expect("a formula indexes its own closure");
    let mut meter = Meter::new(budget);
    let Ok(types) = materialize_types(&closure, &mut meter) else {
        return SatOutcome::OutOfBudget { work: meter.spent };
    };
    if !types.iter().any(|t| t.contains_idx(goal_idx)) {
        return SatOutcome::Exhausted { work: meter.spent };
    }
    for n in 1..=max_worlds {
        match certify_at_size(&closure, &types, goal_idx, n, &mut meter) {
            Ok(Some((quasimodel, world))) => {
                assert!(
                    validate_quasimodel(&quasimodel).is_ok(),
                    "certificates re-validate by construction"
                );
                return SatOutcome::Found {
                    quasimodel,
                    world,
                    work: meter.spent,
                };
            }
            Ok(None) => {}
            Err(OutOfBudget) => return SatOutcome::OutOfBudget { work: meter.spent },
        }
    }
    SatOutcome::Exhausted { work: meter.spent }
}

struct ClassOutcome {
    cost: u64,
    truncated: bool,
    found: Option<(u64, Quasimodel, usize)>,
}

/// Runs every `n`-world preorder class and folds the outcomes in class
/// order, reproducing exactly what a sequential scan with one shared
/// meter would conclude: a certificate found within the cumulative
/// budget wins; a class that would have overrun it exhausts the
/// search.
fn certify_at_size(
    closure: &Arc<Closure>,
    types: &Arc<Vec<PhiType>>,
    goal_idx: usize,
    n: usize,
    meter: &mut Meter,
) -> Result<Option<(Quasimodel, usize)>, OutOfBudget> {
    let classes = crate::finite_model::preorder_classes(n);
    let cap = meter.remaining();
    let outcomes: Vec<ClassOutcome> = classes
        .par_iter()
        .map(|order| certify_class(closure, types, goal_idx, order, cap))
        .collect();
    for outcome in outcomes {
        if let Some((at, quasimodel, world)) = outcome.found {
            meter.charge(at)?;
            return Ok(Some((quasimodel, world)));
        }
        meter.charge(outcome.cost)?;
        if outcome.truncated {
            return Err(OutOfBudget);
        }
    }
    Ok(None)
}

struct ClassSearch<'a> {
    closure: &'a Arc<Closure>,
    types: &'a [PhiType],
    goal_idx: usize,
    order: &'a Relation,
    cap: u64,
    cost: u64,
    truncated: bool,
    found: Option<(u64, Quasimodel, usize)>,
}

fn certify_class(
    closure: &Arc<Closure>,
    types: &[PhiType],
    goal_idx: usize,
    order: &Relation,
    cap: u64,
) -> ClassOutcome {
    let mut search = ClassSearch {
        closure,
        types,
        goal_idx,
        order,
        cap,
        cost: 0,
        truncated: false,
        found: None,
    };
    let mut picked = Vec::with_capacity(order.size());
    search.assign(&mut picked);
    ClassOutcome {
        cost: search.cost,
        truncated: search.truncated,
        found: search.found,
    }
}

impl ClassSearch<'_> {
    /// Books `units` of sequential work; false once the cap is hit.
    fn spend(&mut self, units: u64) -> bool {
        self.cost = self.cost.saturating_add(units);
        if self.cost > self.cap {
            self.cost = self.cap;
            self.truncated = true;
            false
        } else {
            true
        }
    }

    /// Assigns types to worlds in index order, pruning with the
    /// positive half of the box condition as soon as both endpoints of
    /// an order edge are typed.
    fn assign(&mut self, picked: &mut Vec<usize>) {
        if self.truncated || self.found.is_some() {
            return;
        }
        if picked.len() == self.order.size() {
            self.leaf(picked);
            return;
        }
        for ti in 0..self.types.len() {
            if !self.spend(1) {
                return;
            }
            if !self.prefix_ok(picked, ti) {
                continue;
            }
            picked.push(ti);
            self.assign(picked);
            picked.pop();
            if self.truncated || self.found.is_some() {
                return;
            }
        }
    }

    fn prefix_ok(&self, picked: &[usize], ti: usize) -> bool {
        let w = picked.len();
        let t_new = &self.types[ti];
        for &b in self.closure.box_nodes() {
            let EntryKind::Box { body } = self.closure.kind(b) else {
                unreachable!("box nodes have box kinds")
            };
            if t_new.contains_idx(b) && !t_new.contains_idx(body) {
                return false;
            }
            for (v, &tv) in picked.iter().enumerate() {
                let t_old = &self.types[tv];
                if self.order.get(v, w)
                    && t_old.contains_idx(b)
                    && !t_new.contains_idx(body)
                {
                    return false;
                }
                if self.order.get(w, v)
                    && t_new.contains_idx(b)
                    && !t_old.contains_idx(body)
                {
                    return false;
                }
            }
        }
        true
    }

    /// A full assignment: check the negative half of the box
    /// condition and the presence of the goal, then enumerate
    /// transition relations as one nonempty subset of sensible
    /// partners per world, validating each candidate quasimodel.
    fn leaf(&mut self, picked: &[usize]) {
        let n = self.order.size();
        for w in 0..n {
            let tw = &self.types[picked[w]];
            for &b in self.closure.box_nodes() {
                let EntryKind::Box { body } = self.closure.kind(b) else {
                    unreachable!("box nodes have box kinds")
                };
                if !tw.contains_idx(b) {
                    let refuted = (0..n).any(|v| {
                        self.order.get(w, v)
                            && !self.types[picked[v]].contains_idx(body)
                    });
                    if !refuted {
                        return;
                    }
                }
            }
        }
        let Some(goal_world) =
            (0..n).find(|&w| self.types[picked[w]].contains_idx(self.goal_idx))
        else {
            return;
        };
        let cands: Vec<Vec<usize>> = (0..n)
            .map(|w| {
                (0..n)
                    .filter(|&v| {
                        sensible_pair(&self.types[picked[w]], &self.types[picked[v]])
                    })
                    .collect()
            })
            .collect();
        if cands.iter().any(|c| c.is_empty()) {
            return;
        }
        let frame = TypedFrame::new(
            self.closure.clone(),
            picked.iter().map(|&ti| self.types[ti].clone()).collect(),
            self.order.clone(),
        )
        .expect("assembled frames are structurally sound");
        let mut masks: Vec<u32> = vec![1; n];
        loop {
            if !self.spend(1) {
                return;
            }
            let mut pairs = Vec::new();
            for w in 0..n {
                for (i, &v) in cands[w].iter().enumerate() {
                    if masks[w] & (1 << i) != 0 {
                        pairs.push((w, v));
                    }
                }
            }
            let q = Quasimodel::new(frame.clone(), pairs)
                .expect("candidate edges are in range");
            if validate_quasimodel(&q).is_ok() {
                self.found = Some((self.cost, q, goal_world));
                return;
            }
            if !bump(&mut masks, &cands) {
                return;
            }
        }
    }
}

/// Advances the per-world subset odometer (last world fastest);
/// false once every combination has been visited.
fn bump(masks: &mut [u32], cands: &[Vec<usize>]) -> bool {
    for w in (0..masks.len()).rev() {
        let limit = (1u32 << cands[w].len()) - 1;
        if masks[w] < limit {
            masks[w] += 1;
            for m in &mut masks[w + 1..] {
                *m = 1;
            }
            return true;
        }
        masks[w] = 1;
    }
    false
}

// ---------------------------------------------------------------------------
// The validity driver.

/// What the family prover established at one depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthStatus {
    /// Satisfying families were found (so this depth refutes nothing).
    Inhabited { families: usize },
    /// No family was found, but the enumeration was incomplete.
    Open,
    /// The prover ran out of budget at this depth.
    OutOfBudget,
}

/// The evidence gathered when neither side settled the question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownStatus {
    /// Family-prover status per examined depth.
    pub depths: Vec<(usize, DepthStatus)>,
    /// Every quasimodel with at most this many worlds was ruled out.
    pub certified_world_bound: usize,
    /// Whether some side was stopped by the budget rather than the
    /// configured bounds.
    pub out_of_budget: bool,
    /// Work units actually spent.
    pub work: u64,
}

/// The verdict of the bounded validity search.
#[derive(Debug, Clone)]
pub enum Verdict {
    /// Proved valid: the complete family enumeration at this depth is
    /// empty.
    Valid { depth: usize },
    /// Refuted: a quasimodel satisfying the negation, which holds in
    /// the type of `world`.
    NotValid {
        certificate: Quasimodel,
        world: usize,
    },
    /// Neither proof nor refutation within the bounds and budget.
    Unknown(UnknownStatus),
}

/// Bounded validity search for `phi`: interleaves the family prover
/// (depths `0 ..= max_depth`) with the quasimodel certifier for the
/// negation (`depth + 1` worlds at depth `depth`), under one shared
/// budget. A complete empty family enumeration proves validity; a
/// satisfying quasimodel refutes it; otherwise the accumulated
/// evidence is returned as `Unknown`. Deterministic for a fixed
/// formula, bounds and budget, independent of the worker count.
pub fn decide_validity(phi: &Formula, max_depth: usize, budget: u64) -> Verdict {
    let closure = Closure::of(phi);
    let goal = phi.negated();
    let goal_idx = closure
        .index_of(&goal)
        .expect("the negated input indexes the signed closure");
    let mut meter = Meter::new(budget);
    let mut depths: Vec<(usize, DepthStatus)> = Vec::new();
    let mut certified_world_bound = 0usize;
    let mut certifier_starved = false;

    let unknown = |depths: Vec<(usize, DepthStatus)>,
                   certified_world_bound: usize,
                   out_of_budget: bool,
                   meter: &Meter| {
        Verdict::Unknown(UnknownStatus {
            depths,
            certified_world_bound,
            out_of_budget,
            work: meter.spent,
        })
    };

    let Ok(types) = materialize_types(&closure, &mut meter) else {
        return unknown(depths, certified_world_bound, true, &meter);
    };
    if !types.iter().any(|t| t.contains_idx(goal_idx)) {
        // No type can carry the negation, so no frame roots a
        // satisfying family at any depth: the depth-0 enumeration is
        // empty and complete.
        return Verdict::Valid { depth: 0 };
    }

    let mut ctx = SearchContext::new(closure.clone(), types.clone());
    for depth in 0..=max_depth {
        let result = ctx.families_at_depth(depth, goal_idx, &mut meter);
        if result.complete && result.families.is_empty() {
            return Verdict::Valid { depth };
        }
        let status = if result.out_of_budget {
            DepthStatus::OutOfBudget
        } else if result.families.is_empty() {
            DepthStatus::Open
        } else {
            DepthStatus::Inhabited {
                families: result.families.len(),
            }
        };
        depths.push((depth, status));

        if !certifier_starved {
            match certify_at_size(&closure, &types, goal_idx, depth + 1, &mut meter) {
                Ok(Some((certificate, world))) => {
                    assert!(
                        validate_quasimodel(&certificate).is_ok(),
                        "certificates re-validate by construction"
                    );
                    return Verdict::NotValid { certificate, world };
                }
                Ok(None) => certified_world_bound = depth + 1,
                Err(OutOfBudget) => certifier_starved = true,
            }
        }
        if meter.dead() {
            break;
        }
    }
    let starved = certifier_starved
        || meter.dead()
        || depths
            .iter()
            .any(|&(_, s)| s == DepthStatus::OutOfBudget);
    unknown(depths, certified_world_bound, starved, &meter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;
    use crate::quasimodel::satisfies;
    use crate::rel::Relation;

    fn closure_of(src: &str) -> Arc<Closure> {
        Closure::of(&parse(src).unwrap())
    }

    fn ty(closure: &Arc<Closure>, members: &[&str]) -> PhiType {
        let wanted: Vec<Formula> = members.iter().map(|s| parse(s).unwrap()).collect();
        let mut list = Vec::new();
        for i in 0..closure.size() {
            let f = closure.entry(i).clone();
            if wanted.contains(&f) {
                list.push(f);
            } else {
                list.push(f.negated());
            }
        }
        PhiType::from_members(closure, list.iter()).unwrap()
    }

    fn singleton(closure: &Arc<Closure>, members: &[&str]) -> LocalFrame {
        let t = ty(closure, members);
        let frame =
            TypedFrame::new(closure.clone(), vec![t], Relation::identity(1)).unwrap();
        LocalFrame::new(frame, 0).unwrap()
    }

    /// One four-world cluster over `*p`: every type in one clique.
    fn fat_cluster(closure: &Arc<Closure>) -> LocalFrame {
        let types = vec![
            ty(closure, &["p", "*p"]),
            ty(closure, &["p"]),
            ty(closure, &["*p"]),
            ty(closure, &[]),
        ];
        let mut r = Relation::new(4);
        for i in 0..4 {
            for j in 0..4 {
                r.set(i, j, true);
            }
        }
        let frame = TypedFrame::new(closure.clone(), types, r).unwrap();
        LocalFrame::new(frame, 0).unwrap()
    }

    #[test]
    fn profiles_report_the_first_refutation() {
        let c = closure_of("*p");
        let pending = singleton(&c, &["p"]);
        let refuted = singleton(&c, &[]);
        let path = vec![pending.clone(), pending.clone(), refuted.clone()];

        let p0 = realization_profile(&path, 0).unwrap();
        assert_eq!(p0.times().len(), 1);
        assert_eq!(p0.times()[0].1, Realization::At(2));
        assert_eq!(p0.rho_inf(), Realization::At(2));
        assert_eq!(p0.rho_fin(), 2);
        assert!(p0.pending_beyond(1));
        assert!(!p0.pending_beyond(2));
        assert!(!p0.realizes_between(0, 2));
        assert!(p0.realizes_between(1, 3));

        let p2 = realization_profile(&path, 2).unwrap();
        assert_eq!(p2.times()[0].1, Realization::At(2));

        let err = realization_profile(&path, 3).unwrap_err();
        assert_eq!(
            err,
            SearchError::PositionOutOfRange {
                position: 3,
                length: 3
            }
        );
    }

    #[test]
    fn unrefuted_obligations_never_realize() {
        let c = closure_of("*p");
        let pending = singleton(&c, &["p"]);
        let path = vec![pending.clone(), pending];
        let p0 = realization_profile(&path, 0).unwrap();
        assert_eq!(p0.rho_inf(), Realization::Never);
        assert_eq!(p0.rho_fin(), 0);
        assert!(p0.pending_beyond(usize::MAX - 1));
    }

    #[test]
    fn obligation_free_positions_have_empty_profiles() {
        let c = closure_of("*p");
        let star = singleton(&c, &["p", "*p"]);
        let path = vec![star];
        let p0 = realization_profile(&path, 0).unwrap();
        assert!(p0.is_empty());
        assert_eq!(p0.rho_inf(), Realization::At(0));
        assert_eq!(p0.rho_fin(), 0);
        assert!(!p0.pending_beyond(0));
    }

    #[test]
    fn the_refuting_path_of_the_motivating_formula_realizes_at_one() {
        let c = closure_of("*[]p -> []*p");
        let v = singleton(&c, &["p", "[]p", "!([]*p)", "!(*[]p & !([]*p))"]);
        let w = singleton(&c, &["!([]*p)", "!(*[]p & !([]*p))"]);
        let path = vec![v.clone(), w.clone(), w.clone()];
        let p0 = realization_profile(&path, 0).unwrap();
        // Both obligations of the first root (`!*[]p` and `!*p`) are
        // discharged by the second position.
        assert_eq!(p0.times().len(), 2);
        assert!(p0.times().iter().all(|&(_, t)| t == Realization::At(1)));
        assert_eq!(p0.rho_inf(), Realization::At(1));
        assert_eq!(p0.rho_fin(), 1);
    }

    #[test]
    fn eventualities_are_the_negated_star_members() {
        let c = closure_of("*[]p -> []*p");
        let t_v = ty(&c, &["p", "[]p", "!([]*p)", "!(*[]p & !([]*p))"]);
        let evs = eventualities(&t_v);
        assert_eq!(evs.len(), 2);
        let neg_star_box = parse("!(*[]p)").unwrap();
        let neg_star_p = parse("!(*p)").unwrap();
        assert!(evs.contains(&neg_star_box));
        assert!(evs.contains(&neg_star_p));

        let t_u = ty(&c, &["p", "[]p", "*[]p", "*p", "!([]*p)", "*[]p & !([]*p)"]);
        assert!(eventualities(&t_u).is_empty());
    }

    #[test]
    fn repeating_a_pending_frame_is_the_least_inefficiency() {
        let c = closure_of("*p");
        let pending = singleton(&c, &["p"]);
        let refuted = singleton(&c, &[]);

        let path = vec![pending.clone(), pending.clone(), refuted.clone()];
        assert_eq!(find_inefficiency(&path), Some((0, 0, 1)));
        assert!(!is_efficient(&path));

        let spliced = remove_inefficiency(&path, (0, 0, 1)).unwrap();
        assert_eq!(spliced.len(), 2);
        assert!(temporal_successor(&spliced[0], &spliced[1]).is_some());
        assert!(is_efficient(&spliced));
        assert_eq!(find_inefficiency(&spliced), None);

        let forever = vec![pending.clone(), pending.clone()];
        assert_eq!(find_inefficiency(&forever), Some((0, 0, 1)));
    }

    #[test]
    fn obligation_free_repetition_is_efficient() {
        let c = closure_of("*p");
        let star = singleton(&c, &["p", "*p"]);
        let path = vec![star.clone(), star.clone(), star.clone()];
        assert_eq!(find_inefficiency(&path), None);
        assert!(is_efficient(&path));
    }

    #[test]
    fn norm_jumps_break_efficiency_without_an_inefficiency() {
        let c = closure_of("*p");
        let star = singleton(&c, &["p", "*p"]);
        let big = fat_cluster(&c);
        assert_eq!(big.measures().norm(), 4);
        // 4 > 1 + |φ| = 3, so the growth bound fails although no
        // skippable stretch exists.
        let path = vec![star, big];
        assert!(!norm_growth_ok(&path));
        assert!(!is_efficient(&path));
        assert_eq!(find_inefficiency(&path), None);
    }

    #[test]
    fn repeated_removal_terminates_in_an_efficient_path() {
        let c = closure_of("*p");
        let pending = singleton(&c, &["p"]);
        let refuted = singleton(&c, &[]);
        let mut path = vec![
            pending.clone(),
            pending.clone(),
            pending.clone(),
            refuted.clone(),
        ];
        let mut rounds = 0;
        while let Some(triple) = find_inefficiency(&path) {
            let shorter = remove_inefficiency(&path, triple).unwrap();
            assert!(shorter.len() < path.len());
            assert!(norm_growth_ok(&shorter));
            for pair in shorter.windows(2) {
                assert!(temporal_successor(&pair[0], &pair[1]).is_some());
            }
            path = shorter;
            rounds += 1;
            assert!(rounds <= 4, "removal must terminate");
        }
        assert!(is_efficient(&path));
        assert_eq!(path.len(), 2);
    }

    #[test]
    fn removal_rejects_triples_that_are_not_inefficiencies() {
        let c = closure_of("*p");
        let star = singleton(&c, &["p", "*p"]);
        let pending = singleton(&c, &["p"]);
        let path = vec![star.clone(), star.clone()];
        assert_eq!(
            remove_inefficiency(&path, (0, 0, 1)).unwrap_err(),
            SearchError::NotAnInefficiency { n: 0, m1: 0, m2: 1 }
        );
        let short = vec![pending.clone()];
        assert_eq!(
            remove_inefficiency(&short, (0, 0, 1)).unwrap_err(),
            SearchError::NotAnInefficiency { n: 0, m1: 0, m2: 1 }
        );
        assert_eq!(
            remove_inefficiency(&path, (1, 0, 1)).unwrap_err(),
            SearchError::NotAnInefficiency { n: 1, m1: 0, m2: 1 }
        );
    }

    #[test]
    fn strata_are_read_off_the_norm() {
        let c = closure_of("*p");
        let small = singleton(&c, &["p"]);
        assert_eq!(small.measures().norm(), 1);
        assert_eq!(stratum(&small), 0);
        let big = fat_cluster(&c);
        assert_eq!(stratum(&big), 1);
    }

    #[test]
    fn boolean_contradictions_make_a_provably_empty_stream() {
        let phi = parse("p & !p").unwrap();
        let out = enumerate_partial_families(&phi, 0, &phi, 10_000).unwrap();
        assert!(out.complete);
        assert!(out.families.is_empty());
        assert!(out.proves_empty());
    }

    #[test]
    fn goals_outside_the_closure_are_rejected() {
        let phi = parse("p").unwrap();
        let foreign = parse("q").unwrap();
        assert!(enumerate_partial_families(&phi, 0, &foreign, 10_000).is_err());
    }

    #[test]
    fn satisfiable_goals_have_complete_families_at_small_depths() {
        let phi = parse("p").unwrap();
        let goal = parse("!p").unwrap();
        for depth in 0..=2 {
            let out = enumerate_partial_families(&phi, depth, &goal, 500_000).unwrap();
            assert!(out.complete, "depth {depth} should enumerate completely");
            assert!(!out.families.is_empty(), "depth {depth} should be inhabited");
            for family in &out.families {
                family.check().unwrap();
                assert!(family.satisfies(&goal));
                assert_eq!(family.depth(), depth);
            }
        }
    }

    #[test]
    fn families_restrict_to_smaller_depths() {
        let phi = parse("p").unwrap();
        let goal = parse("!p").unwrap();
        let out = enumerate_partial_families(&phi, 2, &goal, 500_000).unwrap();
        let family = &out.families[0];
        for depth in 0..=2 {
            let small = family.restrict(depth);
            assert_eq!(small.depth(), depth);
            small.check().unwrap();
            assert!(small.satisfies(&goal));
        }
    }

    #[test]
    fn the_streaming_finder_survives_the_motivating_formula() {
        let phi = parse("*[]p -> []*p").unwrap();
        let goal = phi.negated();
        for depth in 0..=2 {
            let out = enumerate_partial_families(&phi, depth, &goal, 400_000).unwrap();
            assert!(
                !out.families.is_empty(),
                "depth {depth} should stream at least one family"
            );
            for family in &out.families {
                family.check().unwrap();
                assert!(family.satisfies(&goal));
            }
        }
    }

    #[test]
    fn broken_families_fail_the_checker() {
        let c = closure_of("*p");
        let star = singleton(&c, &["p", "*p"]);
        let key = star.canonical_form().clone();
        let mut frames = BTreeMap::new();
        frames.insert(key.clone(), star);
        let orphan = PartialFamily {
            depth: 0,
            frames,
            paths: BTreeMap::new(),
        };
        assert!(orphan.check().is_err());
    }

    #[test]
    fn propositional_tautologies_validate_at_depth_zero() {
        let phi = parse("p | !p").unwrap();
        match decide_validity(&phi, 3, 100_000) {
            Verdict::Valid { depth } => assert_eq!(depth, 0),
            other => panic!("expected Valid, got {other:?}"),
        }
    }

    #[test]
    fn atomic_formulas_are_refuted_by_a_single_world() {
        let phi = parse("p").unwrap();
        match decide_validity(&phi, 2, 100_000) {
            Verdict::NotValid { certificate, world } => {
                assert_eq!(certificate.len(), 1);
                assert!(validate_quasimodel(&certificate).is_ok());
                assert_eq!(
                    satisfies(&certificate, &phi.negated()).unwrap(),
                    Some(world)
                );
            }
            other => panic!("expected NotValid, got {other:?}"),
        }
    }

    #[test]
    fn the_star_axiom_validates_past_the_type_screen() {
        // `*p -> p` is valid, but its negation does have types; the
        // proof only lands at depth 1, where the complete enumeration
        // finds the lone seed without any temporal successor.
        let phi = parse("*p -> p").unwrap();
        match decide_validity(&phi, 2, 1_000_000) {
            Verdict::Valid { depth } => assert_eq!(depth, 1),
            other => panic!("expected Valid at depth 1, got {other:?}"),
        }
    }

    #[test]
    fn starved_searches_admit_not_knowing() {
        let phi = parse("*[]p -> []*p").unwrap();
        match decide_validity(&phi, 0, 3_000) {
            Verdict::Unknown(status) => {
                assert!(status.work <= 3_000);
            }
            other => panic!("expected Unknown, got {other:?}"),
        }
    }

    #[test]
    fn the_motivating_formula_is_refuted_with_three_worlds() {
        let phi = parse("*[]p -> []*p").unwrap();
        match decide_validity(&phi, 2, 20_000_000) {
            Verdict::NotValid { certificate, world } => {
                assert_eq!(certificate.len(), 3);
                assert!(validate_quasimodel(&certificate).is_ok());
                let neg = phi.negated();
                let carrier = satisfies(&certificate, &neg).unwrap();
                assert!(carrier.is_some());
                assert!(certificate
                    .frame()
                    .type_of(world)
                    .contains(&neg)
                    .unwrap());
            }
            other => panic!("expected NotValid, got {other:?}"),
        }
    }

    #[test]
    fn satisfiable_atoms_get_a_single_world_certificate() {
        let psi = parse("p").unwrap();
        match find_satisfying_quasimodel(&psi, 2, 10_000) {
            SatOutcome::Found {
                quasimodel, world, ..
            } => {
                assert_eq!(quasimodel.len(), 1);
                assert_eq!(world, 0);
                assert!(validate_quasimodel(&quasimodel).is_ok());
                assert_eq!(satisfies(&quasimodel, &psi).unwrap(), Some(0));
            }
            other => panic!("expected Found, got {other:?}"),
        }
    }

    #[test]
    fn boolean_contradictions_exhaust_without_candidates() {
        let psi = parse("p & !p").unwrap();
        assert!(matches!(
            find_satisfying_quasimodel(&psi, 3, 100_000),
            SatOutcome::Exhausted { .. }
        ));
    }

    #[test]
    fn clashing_next_obligations_exhaust_small_bounds() {
        let psi = parse("Xp & X!p").unwrap();
        assert!(matches!(
            find_satisfying_quasimodel(&psi, 3, 1_000_000),
            SatOutcome::Exhausted { .. }
        ));
    }

    #[test]
    fn the_negated_motivating_formula_needs_three_worlds() {
        let psi = parse("!(*[]p -> []*p)").unwrap();
        match find_satisfying_quasimodel(&psi, 3, 10_000_000) {
            SatOutcome::Found {
                quasimodel, world, ..
            } => {
                assert_eq!(quasimodel.len(), 3);
                assert!(validate_quasimodel(&quasimodel).is_ok());
                let carrier = satisfies(&quasimodel, &psi).unwrap().unwrap();
                assert_eq!(carrier, world);
            }
            other => panic!("expected Found, got {other:?}"),
        }
        // The same search exhausts when capped below three worlds.
        assert!(matches!(
            find_satisfying_quasimodel(&psi, 2, 10_000_000),
            SatOutcome::Exhausted { .. }
        ));
    }

    #[test]
    fn tiny_budgets_cut_the_search_off_honestly() {
        let psi = parse("!(*[]p -> []*p)").unwrap();
        assert!(matches!(
            find_satisfying_quasimodel(&psi, 3, 50),
            SatOutcome::OutOfBudget { .. }
        ));
    }

    #[test]
    fn verdicts_are_identical_across_worker_counts() {
        let phi = parse("*[]p -> []*p").unwrap();
        let psi = phi.negated();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                (
                    format!("{:?}", decide_validity(&phi, 1, 400_000)),
                    format!("{:?}", find_satisfying_quasimodel(&psi, 3, 200_000)),
                    format!("{:?}", find_satisfying_quasimodel(&psi, 2, 2_000_000)),
                )
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn box_free_type_explosions_respect_the_budget() {
        // Sixteen unconstrained types make even the norm-2 stratum
        // combinatorial; the budget must bound the attempt (space and
        // time) rather than let the pool materialize first.
        let phi = parse("X(X(Xp))").unwrap();
        let goal = phi.negated();
        let enumeration = enumerate_partial_families(&phi, 1, &goal, 50_000)
            .expect("the goal lies in the closure");
        assert!(enumeration.work <= 50_000);
        assert!(
            !enumeration.complete,
            "a refused stratum cannot claim completeness"
        );
    }
}
