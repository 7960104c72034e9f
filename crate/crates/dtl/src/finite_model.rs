//! Finite Aleksandroff dynamic topological models.
//!
//! A finite topological space is exactly a finite preorder — the opens
//! are the up-sets, and arbitrary intersections of opens stay open —
//! so models carry their topology as a preorder together with a
//! monotone (= continuous) self-map and a valuation. The module
//! evaluates formulas exactly (`*` by scanning each point's forward
//! orbit; the greatest-fixpoint characterization is provided alongside
//! and cross-checked in tests), extracts types, searches for finite
//! countermodels by brute-force enumeration, checks simulations and
//! ω-simulations against typed frames, and restricts a frame through
//! the domain of an ω-simulation.
//!
//! The refutation oracle is a refuter only: finite spaces validate
//! strictly more formulas than dynamic topological systems at large,
//! so an exhausted search never certifies validity.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::bits::Bits;
use crate::formula::{Closure, EntryKind, Formula, PhiType, TypeError};
use crate::frames::{TypedFrame, ValidationClause, ValidationReport};
use crate::quasimodel::Quasimodel;
use crate::rel::Relation;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("models must have at least one point")]
    Empty,
    #[error("the order covers {order} points but the map covers {map}")]
    SizeMismatch { order: usize, map: usize },
    #[error("the map sends point {point} to {image}, out of range for {points} points")]
    MapOutOfRange {
        point: usize,
        image: usize,
        points: usize,
    },
    #[error("the order is not reflexive at point {0}")]
    OrderNotReflexive(usize),
    #[error("the order relates {0} ≤ {1} ≤ {2} but not {0} ≤ {2}")]
    OrderNotTransitive(usize, usize, usize),
    #[error("the map is not monotone: {x} ≤ {y} but the images are unrelated")]
    NotMonotone { x: usize, y: usize },
    #[error("the valuation of `{var}` mentions point {point}, out of range for {points} points")]
    ValuationOutOfRange {
        var: String,
        point: usize,
        points: usize,
    },
    #[error("pair ({world}, {point}) out of range for {worlds} worlds and {points} points")]
    PairOutOfRange {
        world: usize,
        point: usize,
        worlds: usize,
        points: usize,
    },
    #[error("the relation would be restricted to an empty domain")]
    EmptyDomain,
}

/// A finite dynamic topological model in Aleksandroff form: a preorder
/// (up-sets are the opens), a monotone self-map, and a valuation.
/// Variables absent from the valuation are false everywhere.
#[derive(Debug, Clone)]
pub struct FiniteDynModel {
    order: Relation,
    map: Vec<usize>,
    valuation: BTreeMap<String, Bits>,
}

impl FiniteDynModel {
    pub fn new(
        order: Relation,
        map: Vec<usize>,
        valuation: impl IntoIterator<Item = (String, Vec<usize>)>,
    ) -> Result<FiniteDynModel, ModelError> {
        let n = order.size();
        if n == 0 {
            return Err(ModelError::Empty);
        }
        if map.len() != n {
            return Err(ModelError::SizeMismatch {
                order: n,
                map: map.len(),
            });
        }
        for (point, &image) in map.iter().enumerate() {
            if image >= n {
                return Err(ModelError::MapOutOfRange {
                    point,
                    image,
                    points: n,
                });
            }
        }
        if let Some(x) = (0..n).find(|&x| !order.get(x, x)) {
            return Err(ModelError::OrderNotReflexive(x));
        }
        if let Some(&(x, y, z)) = order.transitivity_gaps().first() {
            return Err(ModelError::OrderNotTransitive(x, y, z));
        }
        for x in 0..n {
            for y in order.row(x) {
                if !order.get(map[x], map[y]) {
                    return Err(ModelError::NotMonotone { x, y });
                }
            }
        }
        let mut rows: BTreeMap<String, Bits> = BTreeMap::new();
        for (var, members) in valuation {
            if let Some(&point) = members.iter().find(|&&point| point >= n) {
                return Err(ModelError::ValuationOutOfRange {
                    var,
                    point,
                    points: n,
                });
            }
            let row = rows.entry(var).or_insert_with(|| Bits::new(n));
            for point in members {
                row.set(point, true);
            }
        }
        Ok(FiniteDynModel {
            order,
            map,
            valuation: rows,
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty models
    }

    /// The preorder carrying the topology; opens are its up-sets.
    pub fn order(&self) -> &Relation {
        &self.order
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    /// One application of the self-map.
    pub fn step(&self, x: usize) -> usize {
        self.map[x]
    }

    pub fn true_at(&self, var: &str, x: usize) -> bool {
        self.valuation.get(var).is_some_and(|row| row.get(x))
    }

    pub fn valuation(&self) -> &BTreeMap<String, Bits> {
        &self.valuation
    }
}

/// The valuation of every closure entry over a model: one point set
/// per signed entry, in closure order.
pub struct Evaluation {
    closure: Arc<Closure>,
    sets: Vec<Bits>,
}

impl Evaluation {
    pub fn closure(&self) -> &Arc<Closure> {
        &self.closure
    }

    pub fn set_of_idx(&self, i: usize) -> &Bits {
        &self.sets[i]
    }

    pub fn set_of(&self, f: &Formula) -> Result<&Bits, TypeError> {
        self.closure
            .index_of(f)
            .map(|i| &self.sets[i])
            .ok_or_else(|| TypeError::UnknownFormula(f.to_string()))
    }

    pub fn holds(&self, f: &Formula, x: usize) -> Result<bool, TypeError> {
        Ok(self.set_of(f)?.get(x))
    }
}

/// Evaluates every member of `sub±(phi)` over the model: `&` and `!`
/// are Boolean, `[]` is interior (the points all of whose upper bounds
/// satisfy the body), `X` is preimage under the map, and `*` holds at
/// a point when the body holds along its entire forward orbit.
pub fn evaluate(m: &FiniteDynModel, phi: &Formula) -> Evaluation {
    evaluate_closure(m, &Closure::of(phi))
}

/// As [`evaluate`], against a prebuilt closure.
pub fn evaluate_closure(m: &FiniteDynModel, closure: &Arc<Closure>) -> Evaluation {
    let n = m.len();
    let mut sets = vec![Bits::new(n); closure.len()];
    for i in 0..closure.size() {
        sets[i] = match closure.kind(i) {
            EntryKind::Var => {
                let Formula::Var(name) = closure.entry(i) else {
                    unreachable!("variable entries are variables")
                };
                m.valuation
                    .get(name)
                    .cloned()
                    .unwrap_or_else(|| Bits::new(n))
            }
            EntryKind::Not { body } => complement(&sets[body]),
            EntryKind::And { left, right } => {
                let mut bits = sets[left].clone();
                bits.intersect_with(&sets[right]);
                bits
            }
            EntryKind::Box { body } => {
                let mut bits = Bits::new(n);
                for x in 0..n {
                    if m.order.row(x).all(|y| sets[body].get(y)) {
                        bits.set(x, true);
                    }
                }
                bits
            }
            EntryKind::Next { body } => {
                let mut bits = Bits::new(n);
                for x in 0..n {
                    if sets[body].get(m.map[x]) {
                        bits.set(x, true);
                    }
                }
                bits
            }
            EntryKind::Henceforth { body } => {
                let mut bits = Bits::new(n);
                'point: for x in 0..n {
                    let mut seen = Bits::new(n);
                    let mut y = x;
                    while !seen.get(y) {
                        if !sets[body].get(y) {
                            continue 'point;
                        }
                        seen.set(y, true);
                        y = m.map[y];
                    }
                    bits.set(x, true);
                }
                bits
            }
        };
    }
    for i in 0..closure.size() {
        let j = closure.negation_of(i);
        if j >= closure.size() {
            sets[j] = complement(&sets[i]);
        }
    }
    Evaluation {
        closure: closure.clone(),
        sets,
    }
}

fn complement(bits: &Bits) -> Bits {
    let mut out = Bits::new(bits.len());
    for x in 0..bits.len() {
        out.set(x, !bits.get(x));
    }
    out
}

/// The alternative characterization of `*`: the greatest subset of
/// `body` that the map never leaves, computed by shrinking to a
/// fixpoint. Equal to the orbit scan used by [`evaluate_closure`].
pub fn henceforth_via_fixpoint(m: &FiniteDynModel, body: &Bits) -> Bits {
    let mut current = body.clone();
    loop {
        let mut next = Bits::new(m.len());
        for x in current.iter_ones() {
            if current.get(m.map[x]) {
                next.set(x, true);
            }
        }
        if next == current {
            return current;
        }
        current = next;
    }
}

/// The φ-type a point evaluates to.
pub fn type_of(m: &FiniteDynModel, x: usize, phi: &Formula) -> PhiType {
    type_at(&evaluate(m, phi), x)
}

/// The type of `x` under an existing evaluation.
pub fn type_at(ev: &Evaluation, x: usize) -> PhiType {
    let mut bits = Bits::new(ev.closure.len());
    for (i, set) in ev.sets.iter().enumerate() {
        if set.get(x) {
            bits.set(i, true);
        }
    }
    PhiType::from_bits(&ev.closure, bits).expect("semantic valuations satisfy the type conditions")
}

/// Outcome of the bounded refutation search. An exhausted search says
/// nothing about validity at large — finite spaces validate strictly
/// more — only that no countermodel exists within the size bound.
#[derive(Debug, Clone)]
pub enum OracleOutcome {
    /// The formula fails at this point of this model.
    Refuted { model: FiniteDynModel, point: usize },
    /// No countermodel exists with at most the requested points.
    Exhausted,
    /// The time budget ran out first.
    BudgetExceeded,
}

/// Searches for a finite countermodel of `phi` by exhaustive
/// enumeration: preorders up to isomorphism (by least permuted
/// adjacency encoding), monotone maps, then valuations over the
/// formula's variables. Preorder classes are scanned in parallel, but
/// the first refutation in enumeration order is returned, so the
/// outcome does not depend on the worker count. `Exhausted` is only
/// reported when every branch ran to completion within the budget.
pub fn oracle_refute(phi: &Formula, max_points: usize, budget: Duration) -> OracleOutcome {
    assert!(max_points >= 1, "the search needs at least one point");
    let closure = Closure::of(phi);
    let phi_idx = closure
        .index_of(phi)
        .expect("a formula is in its own closure");
    let vars = closure.variables().to_vec();
    let deadline = Instant::now() + budget;
    let out_of_time = AtomicBool::new(false);
    for n in 1..=max_points {
        let found = preorder_classes(n)
            .par_iter()
            .find_map_first(|order| -> Option<(FiniteDynModel, usize)> {
                for map in monotone_maps(order) {
                    if Instant::now() > deadline {
                        out_of_time.store(true, Ordering::Relaxed);
                        return None;
                    }
                    for valuation in Valuations::new(n, &vars) {
                        let m = FiniteDynModel::new(order.clone(), map.clone(), valuation)
                            .expect("enumerated models are well-formed");
                        let ev = evaluate_closure(&m, &closure);
                        if let Some(x) = (0..n).find(|&x| !ev.sets[phi_idx].get(x)) {
                            return Some((m, x));
                        }
                    }
                }
                None
            });
        if let Some((model, point)) = found {
            return OracleOutcome::Refuted { model, point };
        }
        if out_of_time.load(Ordering::Relaxed) {
            return OracleOutcome::BudgetExceeded;
        }
    }
    OracleOutcome::Exhausted
}

/// All preorders on `n` points up to isomorphism, one least
/// representative per class, ascending by adjacency encoding.
pub(crate) fn preorder_classes(n: usize) -> Vec<Relation> {
    let off_diagonal: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j)
        .collect();
    let mut classes = Vec::new();
    let mut perms = Vec::new();
    permutations(n, &mut (0..n).collect::<Vec<_>>(), 0, &mut perms);
    'mask: for mask in 0u64..(1 << off_diagonal.len()) {
        let mut r = Relation::identity(n);
        for (bit, &(i, j)) in off_diagonal.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                r.set(i, j, true);
            }
        }
        if !r.is_transitive() {
            continue;
        }
        // Keep only the least encoding among all relabelings.
        let own = encode(&r);
        for perm in &perms {
            let mut relabeled = Relation::identity(n);
            for i in 0..n {
                for j in 0..n {
                    if r.get(i, j) {
                        relabeled.set(perm[i], perm[j], true);
                    }
                }
            }
            if encode(&relabeled) < own {
                continue 'mask;
            }
        }
        classes.push(r);
    }
    classes
}

fn encode(r: &Relation) -> Bits {
    let n = r.size();
    let mut bits = Bits::new(n * n);
    for i in 0..n {
        for j in 0..n {
            if r.get(i, j) {
                bits.set(i * n + j, true);
            }
        }
    }
    bits
}

fn permutations(n: usize, scratch: &mut Vec<usize>, at: usize, out: &mut Vec<Vec<usize>>) {
    if at == n {
        out.push(scratch.clone());
        return;
    }
    for i in at..n {
        scratch.swap(at, i);
        permutations(n, scratch, at + 1, out);
        scratch.swap(at, i);
    }
}

/// All monotone self-maps of the preorder, lexicographically
/// ascending.
pub(crate) fn monotone_maps(order: &Relation) -> Vec<Vec<usize>> {
    let n = order.size();
    let mut out = Vec::new();
    let mut partial = Vec::with_capacity(n);
    assign_maps(order, &mut partial, &mut out);
    out
}

fn assign_maps(order: &Relation, partial: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    let n = order.size();
    let x = partial.len();
    if x == n {
        out.push(partial.clone());
        return;
    }
    'image: for y in 0..n {
        for (x2, &y2) in partial.iter().enumerate() {
            if order.get(x2, x) && !order.get(y2, y) {
                continue 'image;
            }
            if order.get(x, x2) && !order.get(y, y2) {
                continue 'image;
            }
        }
        partial.push(y);
        assign_maps(order, partial, out);
        partial.pop();
    }
}

/// Odometer over all valuations of the given variables on `n` points.
struct Valuations<'a> {
    n: usize,
    vars: &'a [String],
    masks: Vec<u64>,
    done: bool,
}

impl<'a> Valuations<'a> {
    fn new(n: usize, vars: &'a [String]) -> Valuations<'a> {
        assert!(n < 64, "valuation masks cover up to 63 points");
        Valuations {
            n,
            vars,
            masks: vec![0; vars.len()],
            done: false,
        }
    }
}

impl Iterator for Valuations<'_> {
    type Item = Vec<(String, Vec<usize>)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self
            .vars
            .iter()
            .zip(&self.masks)
            .map(|(var, &mask)| {
                let points = (0..self.n).filter(|&x| mask & (1 << x) != 0).collect();
                (var.clone(), points)
            })
            .collect();
        // Advance the odometer.
        let mut at = 0;
        loop {
            if at == self.masks.len() {
                self.done = true;
                break;
            }
            self.masks[at] += 1;
            if self.masks[at] < (1 << self.n) {
                break;
            }
            self.masks[at] = 0;
            at += 1;
        }
        Some(item)
    }
}

/// A typed frame, a model, and a candidate relation between their
/// carriers. Construction checks index ranges; the semantic conditions
/// are decided by [`check_simulation`] and [`check_omega_simulation`].
#[derive(Clone)]
pub struct SimulationCandidate {
    frame: TypedFrame,
    model: FiniteDynModel,
    chi: Vec<(usize, usize)>,
}

impl SimulationCandidate {
    pub fn new(
        frame: TypedFrame,
        model: FiniteDynModel,
        chi: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<SimulationCandidate, ModelError> {
        let worlds = frame.len();
        let points = model.len();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (world, point) in chi {
            if world >= worlds || point >= points {
                return Err(ModelError::PairOutOfRange {
                    world,
                    point,
                    worlds,
                    points,
                });
            }
            pairs.push((world, point));
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(SimulationCandidate {
            frame,
            model,
            chi: pairs,
        })
    }

    pub fn frame(&self) -> &TypedFrame {
        &self.frame
    }

    pub fn model(&self) -> &FiniteDynModel {
        &self.model
    }

    pub fn chi(&self) -> &[(usize, usize)] {
        &self.chi
    }
}

/// Checks the two simulation conditions and itemizes failures:
/// type preservation (a related point evaluates to exactly the
/// world's type) and continuity of the relation (the preimage of
/// every up-set of points is up-closed among worlds, checked
/// pointwise: above a related world, every order-successor must be
/// related to some point above the point).
///
/// Panics if the frame is not typed over the closure of `phi`.
pub fn check_simulation(c: &SimulationCandidate, phi: &Formula) -> ValidationReport {
    let closure = Closure::of(phi);
    assert!(
        Closure::same(c.frame.closure(), &closure),
        "check_simulation: frame typed over a different closure"
    );
    let ev = evaluate_closure(&c.model, &closure);
    let mut report = ValidationReport::default();
    for &(w, x) in &c.chi {
        let point_type = type_at(&ev, x);
        if point_type.bits() != c.frame.type_of(w).bits() {
            let i = (0..closure.len())
                .find(|&i| point_type.contains_idx(i) != c.frame.type_of(w).contains_idx(i))
                .expect("unequal types differ somewhere");
            report.push(
                Some(w),
                ValidationClause::TypeCondition,
                format!(
                    "pair ({w}, {x}): the world's type and the point's evaluation disagree on `{}`",
                    closure.entry(i),
                ),
            );
        }
    }
    for &(w, x) in &c.chi {
        for w2 in c.frame.relation().row(w) {
            let covered = c
                .chi
                .iter()
                .any(|&(v, y)| v == w2 && c.model.order.get(x, y));
            if !covered {
                report.push(
                    Some(w),
                    ValidationClause::ChiContinuity,
                    format!(
                        "pair ({w}, {x}): world {w2} above {w} is related to no point above {x}"
                    ),
                );
            }
        }
    }
    report
}

/// Checks the simulation conditions plus the ω-condition that the
/// map factors through the transition relation: for every related
/// pair, some temporal successor of the world is related to the image
/// of the point.
///
/// Panics if the frame is not typed over the closure of `phi`, or if
/// `g` mentions worlds outside the frame.
pub fn check_omega_simulation(
    c: &SimulationCandidate,
    g: &[(usize, usize)],
    phi: &Formula,
) -> ValidationReport {
    let worlds = c.frame.len();
    assert!(
        g.iter().all(|&(w, v)| w < worlds && v < worlds),
        "check_omega_simulation: transition edge out of range"
    );
    let mut report = check_simulation(c, phi);
    for &(w, x) in &c.chi {
        let fx = c.model.step(x);
        let stepped = g
            .iter()
            .any(|&(w2, v)| w2 == w && c.chi.binary_search(&(v, fx)).is_ok());
        if !stepped {
            report.push(
                Some(w),
                ValidationClause::ChiStep,
                format!(
                    "pair ({w}, {x}): no temporal successor of {w} is related to the image point {fx}"
                ),
            );
        }
    }
    report
}

/// Restricts the frame and transition relation to the worlds the
/// relation covers. When the relation is an ω-simulation the result
/// is a quasimodel: the domain is up-closed (it is the preimage of
/// the whole space), so continuity survives the restriction, the
/// ω-condition keeps the restricted transitions total, and reachable
/// refuters stay reachable.
pub fn restrict_to_domain(
    frame: &TypedFrame,
    g: &[(usize, usize)],
    chi: &[(usize, usize)],
) -> Result<Quasimodel, ModelError> {
    let worlds = frame.len();
    assert!(
        g.iter().all(|&(w, v)| w < worlds && v < worlds),
        "restrict_to_domain: transition edge out of range"
    );
    assert!(
        chi.iter().all(|&(w, _)| w < worlds),
        "restrict_to_domain: related world out of range"
    );
    let mut dom: Vec<usize> = chi.iter().map(|&(w, _)| w).collect();
    dom.sort_unstable();
    dom.dedup();
    if dom.is_empty() {
        return Err(ModelError::EmptyDomain);
    }
    let types: Vec<PhiType> = dom.iter().map(|&w| frame.type_of(w).clone()).collect();
    let order = frame.relation().restrict(&dom);
    let restricted = TypedFrame::new(frame.closure().clone(), types, order)
        .expect("a restriction of a well-formed frame is well-formed");
    let position = |w: usize| dom.binary_search(&w).ok();
    let edges: Vec<(usize, usize)> = g
        .iter()
        .filter_map(|&(w, v)| Some((position(w)?, position(v)?)))
        .collect();
    Ok(Quasimodel::new(restricted, edges).expect("restricted edges stay in range"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;
    use crate::quasimodel::validate_quasimodel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain(n: usize) -> Relation {
        let mut r = Relation::identity(n);
        for i in 0..n {
            for j in i + 1..n {
                r.set(i, j, true);
            }
        }
        r
    }

    fn model(order: Relation, map: Vec<usize>, p_at: Vec<usize>) -> FiniteDynModel {
        FiniteDynModel::new(order, map, [("p".to_string(), p_at)]).unwrap()
    }

    #[test]
    fn constructor_rejections() {
        assert_eq!(
            FiniteDynModel::new(Relation::new(0), vec![], []).err(),
            Some(ModelError::Empty)
        );
        assert_eq!(
            FiniteDynModel::new(Relation::identity(2), vec![0], []).err(),
            Some(ModelError::SizeMismatch { order: 2, map: 1 })
        );
        assert_eq!(
            FiniteDynModel::new(Relation::identity(1), vec![3], []).err(),
            Some(ModelError::MapOutOfRange {
                point: 0,
                image: 3,
                points: 1
            })
        );
        let mut bare = Relation::new(2);
        bare.set(0, 0, true);
        assert_eq!(
            FiniteDynModel::new(bare, vec![0, 1], []).err(),
            Some(ModelError::OrderNotReflexive(1))
        );
        let mut gap = Relation::identity(3);
        gap.set(0, 1, true);
        gap.set(1, 2, true);
        assert_eq!(
            FiniteDynModel::new(gap, vec![0, 1, 2], []).err(),
            Some(ModelError::OrderNotTransitive(0, 1, 2))
        );
        // 0 ≤ 1 but the images swap against the order.
        assert_eq!(
            FiniteDynModel::new(chain(2), vec![1, 0], []).err(),
            Some(ModelError::NotMonotone { x: 0, y: 1 })
        );
        assert_eq!(
            FiniteDynModel::new(Relation::identity(1), vec![0], [("p".to_string(), vec![4])])
                .err(),
            Some(ModelError::ValuationOutOfRange {
                var: "p".to_string(),
                point: 4,
                points: 1
            })
        );
    }

    #[test]
    fn evaluation_matches_the_semantic_equations() {
        // A fixed point where p holds satisfies *p.
        let m = model(Relation::identity(1), vec![0], vec![0]);
        let ev = evaluate(&m, &parse("*p").unwrap());
        assert!(ev.holds(&parse("*p").unwrap(), 0).unwrap());

        // On a two-point chain with p only at the top, the interior
        // of V(p) is the top alone.
        let m = model(chain(2), vec![0, 1], vec![1]);
        let ev = evaluate(&m, &parse("[]p").unwrap());
        assert!(!ev.holds(&parse("[]p").unwrap(), 0).unwrap());
        assert!(ev.holds(&parse("[]p").unwrap(), 1).unwrap());

        // X reads the valuation through the map: a swap exchanges the
        // two points.
        let m = model(Relation::identity(2), vec![1, 0], vec![0]);
        let ev = evaluate(&m, &parse("Xp").unwrap());
        assert!(!ev.holds(&parse("Xp").unwrap(), 0).unwrap());
        assert!(ev.holds(&parse("Xp").unwrap(), 1).unwrap());
        // ...and *p fails everywhere since the orbit leaves p.
        let ev = evaluate(&m, &parse("*p").unwrap());
        assert!(!ev.holds(&parse("*p").unwrap(), 0).unwrap());
        assert!(!ev.holds(&parse("*p").unwrap(), 1).unwrap());
    }

    #[test]
    fn interior_is_idempotent_on_enumerated_models() {
        let phi = parse("[][]p").unwrap();
        let inner = parse("[]p").unwrap();
        for order in preorder_classes(3) {
            for map in monotone_maps(&order) {
                for valuation in Valuations::new(3, &["p".to_string()]) {
                    let m = FiniteDynModel::new(order.clone(), map.clone(), valuation).unwrap();
                    let ev = evaluate(&m, &phi);
                    assert_eq!(ev.set_of(&phi).unwrap(), ev.set_of(&inner).unwrap());
                }
            }
        }
    }

    #[test]
    fn orbit_scan_agrees_with_the_fixpoint_characterization() {
        let phi = parse("*p").unwrap();
        let body = parse("p").unwrap();
        for order in preorder_classes(3) {
            for map in monotone_maps(&order) {
                for valuation in Valuations::new(3, &["p".to_string()]) {
                    let m = FiniteDynModel::new(order.clone(), map.clone(), valuation).unwrap();
                    let ev = evaluate(&m, &phi);
                    let via_fixpoint = henceforth_via_fixpoint(&m, ev.set_of(&body).unwrap());
                    assert_eq!(ev.set_of(&phi).unwrap(), &via_fixpoint);
                }
            }
        }
    }

    /// Direct recursive evaluation, sets be damned: the reference the
    /// closure-table evaluator is checked against.
    fn naive(m: &FiniteDynModel, f: &Formula, x: usize) -> bool {
        match f {
            Formula::Var(name) => m.true_at(name, x),
            Formula::Not(body) => !naive(m, body, x),
            Formula::And(a, b) => naive(m, a, x) && naive(m, b, x),
            Formula::Box(body) => m.order().row(x).all(|y| naive(m, body, y)),
            Formula::Next(body) => naive(m, body, m.step(x)),
            Formula::Henceforth(body) => {
                let mut y = x;
                for _ in 0..=m.len() {
                    if !naive(m, body, y) {
                        return false;
                    }
                    y = m.step(y);
                }
                true
            }
        }
    }

    #[test]
    fn evaluation_agrees_with_a_naive_reimplementation() {
        let formulas: Vec<Formula> = [
            "*p",
            "[]p & Xq",
            "*(!p & q)",
            "XXp",
            "*[]p -> []*p",
            "X[]q -> []Xq",
        ]
        .iter()
        .map(|s| parse(s).unwrap())
        .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..60 {
            let n = rng.gen_range(1..=4);
            // A random preorder: the reflexive-transitive closure of a
            // random edge set.
            let mut seed = Relation::identity(n);
            for i in 0..n {
                for j in 0..n {
                    if rng.gen_bool(0.3) {
                        seed.set(i, j, true);
                    }
                }
            }
            let order = seed.reflexive_transitive_closure();
            let maps = monotone_maps(&order);
            let map = maps[rng.gen_range(0..maps.len())].clone();
            let mut valuation = Vec::new();
            for var in ["p", "q"] {
                let points: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
                valuation.push((var.to_string(), points));
            }
            let m = FiniteDynModel::new(order, map, valuation).unwrap();
            for phi in &formulas {
                let ev = evaluate(&m, phi);
                for entry in ev.closure().entries() {
                    for x in 0..m.len() {
                        assert_eq!(
                            ev.holds(entry, x).unwrap(),
                            naive(&m, entry, x),
                            "disagreement on {entry} at {x}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn types_are_read_off_the_evaluation() {
        let phi = parse("*p").unwrap();
        let m = model(Relation::identity(1), vec![0], vec![0]);
        let t = type_of(&m, 0, &phi);
        assert!(t.contains(&parse("p").unwrap()).unwrap());
        assert!(t.contains(&parse("*p").unwrap()).unwrap());

        // On a swap, the types distinguish the points exactly when
        // the valuation does.
        let distinguished = model(Relation::identity(2), vec![1, 0], vec![0]);
        assert_ne!(
            type_of(&distinguished, 0, &phi).bits(),
            type_of(&distinguished, 1, &phi).bits()
        );
        let uniform = model(Relation::identity(2), vec![1, 0], vec![0, 1]);
        assert_eq!(
            type_of(&uniform, 0, &phi).bits(),
            type_of(&uniform, 1, &phi).bits()
        );
    }

    #[test]
    fn oracle_refutes_trivial_and_modal_mixes() {
        let generous = Duration::from_secs(60);
        match oracle_refute(&parse("p").unwrap(), 1, generous) {
            OracleOutcome::Refuted { model, point } => {
                assert_eq!(model.len(), 1);
                assert!(!model.true_at("p", point));
            }
            other => panic!("expected a refutation, got {other:?}"),
        }

        // []p -> Xp is not valid: the map may leave the open set.
        match oracle_refute(&parse("[]p -> Xp").unwrap(), 2, generous) {
            OracleOutcome::Refuted { model, point } => {
                assert!(model.len() <= 2);
                // Verify the witness independently.
                let phi = parse("[]p -> Xp").unwrap();
                assert!(!naive(&model, &phi, point));
            }
            other => panic!("expected a refutation, got {other:?}"),
        }
    }

    #[test]
    fn oracle_exhausts_on_finitely_valid_formulas() {
        let generous = Duration::from_secs(120);
        // Continuity of the map is exactly what makes this hold.
        assert!(matches!(
            oracle_refute(&parse("X[]p -> []Xp").unwrap(), 3, generous),
            OracleOutcome::Exhausted
        ));
        // Valid on all finite models despite failing on infinite ones.
        assert!(matches!(
            oracle_refute(&parse("*[]p -> []*p").unwrap(), 3, generous),
            OracleOutcome::Exhausted
        ));
    }

    #[test]
    fn oracle_reports_an_exceeded_budget() {
        assert!(matches!(
            oracle_refute(&parse("X[]p -> []Xp").unwrap(), 4, Duration::ZERO),
            OracleOutcome::BudgetExceeded
        ));
    }

    #[test]
    fn preorder_classes_are_canonical_and_complete() {
        // Distinct preorders on 1, 2 and 3 points up to isomorphism.
        assert_eq!(preorder_classes(1).len(), 1);
        assert_eq!(preorder_classes(2).len(), 3);
        assert_eq!(preorder_classes(3).len(), 9);
        // Every class representative really is a preorder.
        for r in preorder_classes(3) {
            assert!(r.is_preorder());
        }
    }

    #[test]
    fn monotone_maps_respect_the_order() {
        // On a discrete order every self-map is monotone.
        assert_eq!(monotone_maps(&Relation::identity(2)).len(), 4);
        // On the 2-chain, the swap is excluded: 0 ≤ 1 forces
        // f(0) ≤ f(1).
        let maps = monotone_maps(&chain(2));
        assert_eq!(maps, vec![vec![0, 0], vec![0, 1], vec![1, 1]]);
    }

    #[test]
    fn identity_pairing_simulates_its_own_reading() {
        let phi = parse("*p").unwrap();
        let m = model(chain(2), vec![0, 1], vec![1]);
        let q = crate::quasimodel::from_finite_model(&m, &phi);
        let chi: Vec<(usize, usize)> = (0..m.len()).map(|x| (x, x)).collect();
        let c = SimulationCandidate::new(q.frame().clone(), m, chi).unwrap();
        assert!(check_simulation(&c, &phi).is_ok());
        assert!(check_omega_simulation(&c, &q.edges(), &phi).is_ok());
    }

    #[test]
    fn simulation_failures_are_itemized() {
        let phi = parse("*p").unwrap();

        // Type preservation: relate a world to a point of the wrong
        // type.
        let m = model(Relation::identity(2), vec![1, 0], vec![0]);
        let q = crate::quasimodel::from_finite_model(&m, &phi);
        let c = SimulationCandidate::new(q.frame().clone(), m.clone(), [(0, 1)]).unwrap();
        let report = check_simulation(&c, &phi);
        assert_eq!(report.items.len(), 1);
        assert_eq!(report.items[0].clause, ValidationClause::TypeCondition);
        assert_eq!(report.items[0].world, Some(0));

        // Continuity of the relation: on a chain model, relating only
        // the bottom world leaves its upper neighbour uncovered.
        let m = model(chain(2), vec![0, 1], vec![1]);
        let q = crate::quasimodel::from_finite_model(&m, &phi);
        let c = SimulationCandidate::new(q.frame().clone(), m.clone(), [(0, 0)]).unwrap();
        let report = check_simulation(&c, &phi);
        assert_eq!(report.items.len(), 1);
        assert_eq!(report.items[0].clause, ValidationClause::ChiContinuity);

        // The ω-condition: drop the pair the map needs.
        let m = model(Relation::identity(2), vec![1, 0], vec![0, 1]);
        let q = crate::quasimodel::from_finite_model(&m, &phi);
        let chi = vec![(0usize, 0usize), (1, 1)];
        let c = SimulationCandidate::new(q.frame().clone(), m.clone(), chi).unwrap();
        assert!(check_omega_simulation(&c, &q.edges(), &phi).is_ok());
        let dropped = SimulationCandidate::new(q.frame().clone(), m, [(0, 0)]).unwrap();
        let report = check_omega_simulation(&dropped, &q.edges(), &phi);
        assert_eq!(report.items.len(), 1);
        assert_eq!(report.items[0].clause, ValidationClause::ChiStep);
        assert_eq!(report.items[0].world, Some(0));
    }

    #[test]
    fn restriction_of_an_omega_simulation_is_a_quasimodel() {
        let phi = parse("*p").unwrap();

        // Full domain: the restriction is the identity.
        let m = model(chain(2), vec![0, 1], vec![1]);
        let q = crate::quasimodel::from_finite_model(&m, &phi);
        let chi: Vec<(usize, usize)> = (0..m.len()).map(|x| (x, x)).collect();
        let restricted = restrict_to_domain(q.frame(), &q.edges(), &chi).unwrap();
        assert_eq!(restricted.len(), q.len());
        assert!(validate_quasimodel(&restricted).is_ok());

        // Proper domain: drop the first point of a three-point chase.
        // The remaining worlds are closed under the map, so the
        // ω-simulation conditions hold and so does the restriction.
        let m = model(Relation::identity(3), vec![1, 2, 2], vec![0, 1]);
        let q = crate::quasimodel::from_finite_model(&m, &phi);
        let chi = vec![(1usize, 1usize), (2, 2)];
        let c = SimulationCandidate::new(q.frame().clone(), m, chi.clone()).unwrap();
        assert!(check_omega_simulation(&c, &q.edges(), &phi).is_ok());
        let restricted = restrict_to_domain(q.frame(), &q.edges(), &chi).unwrap();
        assert_eq!(restricted.len(), 2);
        assert!(validate_quasimodel(&restricted).is_ok());

        assert_eq!(
            restrict_to_domain(q.frame(), &q.edges(), &[]).err(),
            Some(ModelError::EmptyDomain)
        );
    }

    #[test]
    fn every_small_model_reads_as_a_valid_quasimodel() {
        for phi in [parse("*p").unwrap(), parse("X[]p -> []Xp").unwrap()] {
            for order in preorder_classes(3) {
                for map in monotone_maps(&order) {
                    for valuation in Valuations::new(3, &["p".to_string()]) {
                        let m =
                            FiniteDynModel::new(order.clone(), map.clone(), valuation).unwrap();
                        let q = crate::quasimodel::from_finite_model(&m, &phi);
                        let report = validate_quasimodel(&q);
                        assert!(report.is_ok(), "items: {:?}", report.items);

                        // The identity pairing is an ω-simulation of
                        // the model by its own reading.
                        let chi: Vec<(usize, usize)> = (0..m.len()).map(|x| (x, x)).collect();
                        let c =
                            SimulationCandidate::new(q.frame().clone(), m.clone(), chi).unwrap();
                        assert!(check_omega_simulation(&c, &q.edges(), &phi).is_ok());
                    }
                }
            }
        }
    }
}
