//! Typed Kripke frames, tree-like local frames, and the embedding
//! order between them.
//!
//! A *typed frame* is a preordered set of worlds with a type at each
//! world; the box condition ties `[]`-membership to truth in the
//! R-upset. A *local frame* additionally has a root that sees every
//! world, and its cluster quotient (worlds that see each other) must
//! form a tree growing upward from the root cluster.
//!
//! Frames are compared by the embedding order `b ⊴ a`: an injection of
//! worlds that is exact for R in both directions, preserves types, and
//! maps root to root. Tree-likeness makes a complete canonical
//! invariant cheap to compute (a sorted encoding of the cluster tree),
//! which backs memoization and isomorphism-free enumeration.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::formula::{Closure, EntryKind, PhiType};
use crate::rel::Relation;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("a frame needs at least one world")]
    Empty,
    #[error("frame has {worlds} worlds but the relation covers {relation}")]
    SizeMismatch { worlds: usize, relation: usize },
    #[error("world {0} is typed over a different closure")]
    ClosureMismatch(usize),
    #[error("world index {0} is out of range")]
    WorldOutOfRange(usize),
    #[error("accessibility is not reflexive at world {0}")]
    NotReflexive(usize),
    #[error("accessibility is not transitive: {0} R {1} R {2} but not {0} R {2}")]
    NotTransitive(usize, usize, usize),
    #[error("root {root} does not reach world {world}")]
    Unreachable { root: usize, world: usize },
    #[error("cluster quotient is not a tree: clusters of worlds {0} and {1} are incomparable predecessors of the cluster of world {2}")]
    NotTreeLike(usize, usize, usize),
    #[error("designated root type is not in the root cluster")]
    RootTypeMissing,
}

/// Which validation clause an item reports against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationClause {
    Reflexivity,
    Transitivity,
    BoxCondition,
    TypeCondition,
    GTotality,
    GSensibility,
    GContinuity,
    OmegaSensibility,
    ChiContinuity,
    ChiStep,
}

/// One itemized validation failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationItem {
    /// World the failure is anchored at, when there is one.
    pub world: Option<usize>,
    pub clause: ValidationClause,
    pub detail: String,
}

/// Empty report = the checked object satisfies every clause.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub items: Vec<ValidationItem>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.items.is_empty()
    }

    pub(crate) fn push(&mut self, world: Option<usize>, clause: ValidationClause, detail: String) {
        self.items.push(ValidationItem {
            world,
            clause,
            detail,
        });
    }
}

/// A preordered set of typed worlds. Construction checks only
/// structural sanity (sizes, shared closure); the accessibility axioms
/// and the box condition are checked by [`validate_typed_frame`] so
/// that ill-typed assemblies can be built and then reported on.
#[derive(Clone)]
pub struct TypedFrame {
    closure: Arc<Closure>,
    types: Vec<PhiType>,
    r: Relation,
}

impl TypedFrame {
    pub fn new(
        closure: Arc<Closure>,
        types: Vec<PhiType>,
        r: Relation,
    ) -> Result<TypedFrame, FrameError> {
        if types.is_empty() {
            return Err(FrameError::Empty);
        }
        if r.size() != types.len() {
            return Err(FrameError::SizeMismatch {
                worlds: types.len(),
                relation: r.size(),
            });
        }
        for (w, t) in types.iter().enumerate() {
            if !Closure::same(t.closure(), &closure) {
                return Err(FrameError::ClosureMismatch(w));
            }
        }
        Ok(TypedFrame { closure, types, r })
    }

    pub fn closure(&self) -> &Arc<Closure> {
        &self.closure
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn type_of(&self, w: usize) -> &PhiType {
        &self.types[w]
    }

    pub fn types(&self) -> &[PhiType] {
        &self.types
    }

    pub fn relation(&self) -> &Relation {
        &self.r
    }

    pub fn r(&self, w: usize, v: usize) -> bool {
        self.r.get(w, v)
    }
}

impl fmt::Debug for TypedFrame {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(out, "TypedFrame({} worlds, R = {:?})", self.len(), self.r)
    }
}

/// Checks the accessibility axioms and the box condition, itemizing
/// every violation: a reflexivity/transitivity gap, a `[]g` claimed at
/// a world where some successor lacks `g`, or a `[]g` refuted at a
/// world where every successor has `g`.
pub fn validate_typed_frame(frame: &TypedFrame) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = frame.len();
    let r = frame.relation();
    for w in 0..n {
        if !r.get(w, w) {
            report.push(
                Some(w),
                ValidationClause::Reflexivity,
                format!("world {w} does not see itself"),
            );
        }
    }
    for (i, j, k) in r.transitivity_gaps() {
        report.push(
            Some(i),
            ValidationClause::Transitivity,
            format!("{i} R {j} and {j} R {k} but not {i} R {k}"),
        );
    }
    let closure = frame.closure();
    for w in 0..n {
        for &b in closure.box_nodes() {
            let EntryKind::Box { body } = closure.kind(b) else {
                unreachable!()
            };
            let everywhere = r.row(w).all(|v| frame.type_of(v).contains_idx(body));
            let claimed = frame.type_of(w).contains_idx(b);
            if claimed && !everywhere {
                let witness = r
                    .row(w)
                    .find(|&v| !frame.type_of(v).contains_idx(body))
                    .unwrap();
                report.push(
                    Some(w),
                    ValidationClause::BoxCondition,
                    format!(
                        "`{}` is in the type of {w} but `{}` fails at successor {witness}",
                        closure.entry(b),
                        closure.entry(body)
                    ),
                );
            } else if !claimed && everywhere {
                report.push(
                    Some(w),
                    ValidationClause::BoxCondition,
                    format!(
                        "`{}` is absent at {w} although `{}` holds at every successor",
                        closure.entry(b),
                        closure.entry(body)
                    ),
                );
            }
        }
    }
    report
}

/// Cluster quotient of a local frame. Clusters are numbered in
/// discovery order from the root; `order` is the induced partial order
/// (which is a tree).
#[derive(Debug, Clone)]
pub struct Clusters {
    pub of_world: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub root: usize,
    order: Relation,
}

impl Clusters {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Whether cluster `c` sees cluster `d` (i.e. `d` is `c` or above).
    pub fn le(&self, c: usize, d: usize) -> bool {
        self.order.get(c, d)
    }
}

/// Height, width and depth of a local frame, measured on the cluster
/// tree: `hgt` is the longest chain (a singleton frame has height 1),
/// `wdt` the largest antichain, `dpt` the largest cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameNorm {
    pub hgt: usize,
    pub wdt: usize,
    pub dpt: usize,
}

impl FrameNorm {
    /// `max(hgt, wdt, dpt)` — the quantity the search strata bound.
    pub fn norm(&self) -> usize {
        self.hgt.max(self.wdt).max(self.dpt)
    }
}

/// Canonical invariant of a local frame: equal keys iff the frames are
/// isomorphic as rooted typed frames.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey(Arc<[u8]>);

impl fmt::Debug for CanonicalKey {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(out, "CanonicalKey(")?;
        for b in self.0.iter().take(12) {
            write!(out, "{b:02x}")?;
        }
        if self.0.len() > 12 {
            write!(out, "…")?;
        }
        write!(out, ")")
    }
}

/// A tree-like local frame: a typed frame with a designated root that
/// sees every world, whose accessibility is a preorder and whose
/// cluster quotient is a tree. The box condition is *not* required
/// here — run [`validate_typed_frame`] to check it — so that assembled
/// candidates can be validated rather than rejected unseen.
#[derive(Clone)]
pub struct LocalFrame {
    frame: TypedFrame,
    root: usize,
    clusters: Clusters,
    norm: FrameNorm,
    canon: CanonicalKey,
}

impl LocalFrame {
    pub fn new(frame: TypedFrame, root: usize) -> Result<LocalFrame, FrameError> {
        let n = frame.len();
        if root >= n {
            return Err(FrameError::WorldOutOfRange(root));
        }
        let r = frame.relation();
        for w in 0..n {
            if !r.get(w, w) {
                return Err(FrameError::NotReflexive(w));
            }
        }
        if let Some(&(i, j, k)) = r.transitivity_gaps().first() {
            return Err(FrameError::NotTransitive(i, j, k));
        }
        for w in 0..n {
            if !r.get(root, w) {
                return Err(FrameError::Unreachable { root, world: w });
            }
        }
        let clusters = compute_clusters(&frame, root)?;
        let norm = compute_norm(&clusters);
        let canon = compute_canonical_key(&frame, root, &clusters);
        Ok(LocalFrame {
            frame,
            root,
            clusters,
            norm,
            canon,
        })
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
        false // local frames always contain the root
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// `t(a)`: the type of the root world.
    pub fn root_type(&self) -> &PhiType {
        self.frame.type_of(self.root)
    }

    pub fn type_of(&self, w: usize) -> &PhiType {
        self.frame.type_of(w)
    }

    pub fn r(&self, w: usize, v: usize) -> bool {
        self.frame.r(w, v)
    }

    pub fn clusters(&self) -> &Clusters {
        &self.clusters
    }

    pub fn measures(&self) -> FrameNorm {
        self.norm
    }

    pub fn canonical_form(&self) -> &CanonicalKey {
        &self.canon
    }

    /// Types of the worlds in the root cluster, in world order.
    pub fn root_cluster_types(&self) -> Vec<&PhiType> {
        self.clusters.members[self.clusters.root]
            .iter()
            .map(|&w| self.frame.type_of(w))
            .collect()
    }

    /// The generated subframe `a^v`: the restriction to `R(v)`, rooted
    /// at `v`.
    pub fn subframe(&self, v: usize) -> LocalFrame {
        let keep: Vec<usize> = (0..self.len()).filter(|&w| self.r(v, w)).collect();
        let root = keep.iter().position(|&w| w == v).expect("v sees itself");
        let types: Vec<PhiType> = keep.iter().map(|&w| self.frame.type_of(w).clone()).collect();
        let r = self.frame.relation().restrict(&keep);
        let frame = TypedFrame::new(self.closure().clone(), types, r)
            .expect("restriction of a frame is a frame");
        LocalFrame::new(frame, root).expect("generated subframe of a local frame is local")
    }

    /// Worlds ordered root-cluster first, then by cluster depth; the
    /// order in which successor searches assign them.
    pub fn topological_world_order(&self) -> Vec<usize> {
        let mut depth = vec![0usize; self.clusters.len()];
        let mut stack = vec![self.clusters.root];
        while let Some(c) = stack.pop() {
            for &d in &self.clusters.children[c] {
                depth[d] = depth[c] + 1;
                stack.push(d);
            }
        }
        let mut worlds: Vec<usize> = (0..self.len()).collect();
        worlds.sort_by_key(|&w| (depth[self.clusters.of_world[w]], w));
        worlds
    }
}

impl fmt::Debug for LocalFrame {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            out,
            "LocalFrame({} worlds, root {}, {} clusters, norm {})",
            self.len(),
            self.root,
            self.clusters.len(),
            self.norm.norm()
        )
    }
}

fn compute_clusters(frame: &TypedFrame, root: usize) -> Result<Clusters, FrameError> {
    let n = frame.len();
    let r = frame.relation();
    let mut of_world = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    // Discovery order: scan worlds from the root first, then ascending.
    let scan: Vec<usize> = std::iter::once(root)
        .chain((0..n).filter(|&w| w != root))
        .collect();
    for &w in &scan {
        if of_world[w] != usize::MAX {
            continue;
        }
        let c = members.len();
        let mates: Vec<usize> = (0..n).filter(|&v| r.get(w, v) && r.get(v, w)).collect();
        for &v in &mates {
            of_world[v] = c;
        }
        members.push(mates);
    }
    let k = members.len();
    let mut order = Relation::new(k);
    for c in 0..k {
        for d in 0..k {
            if r.get(members[c][0], members[d][0]) {
                order.set(c, d, true);
            }
        }
    }
    // Tree-likeness: the strict predecessors of every cluster must form
    // a chain.
    for c in 0..k {
        let preds: Vec<usize> = (0..k).filter(|&d| d != c && order.get(d, c)).collect();
        for (i, &d1) in preds.iter().enumerate() {
            for &d2 in &preds[i + 1..] {
                if !order.get(d1, d2) && !order.get(d2, d1) {
                    return Err(FrameError::NotTreeLike(
                        members[d1][0],
                        members[d2][0],
                        members[c][0],
                    ));
                }
            }
        }
    }
    // Parents: the strict predecessors of a cluster form a chain, so
    // the parent is their maximum.
    let mut parent = vec![None; k];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); k];
    for c in 0..k {
        parent[c] = (0..k)
            .filter(|&d| d != c && order.get(d, c))
            .max_by(|&d1, &d2| {
                if order.get(d1, d2) {
                    std::cmp::Ordering::Less
                } else {
                    std::cmp::Ordering::Greater
                }
            });
    }
    for c in 0..k {
        if let Some(p) = parent[c] {
            children[p].push(c);
        }
    }
    for list in &mut children {
        list.sort();
    }
    let root_cluster = of_world[root];
    Ok(Clusters {
        of_world,
        members,
        parent,
        children,
        root: root_cluster,
        order,
    })
}

fn compute_norm(clusters: &Clusters) -> FrameNorm {
    fn walk(clusters: &Clusters, c: usize) -> (usize, usize) {
        // returns (height, width) of the subtree at c
        let mut h = 0;
        let mut w_sum = 0;
        for &d in &clusters.children[c] {
            let (dh, dw) = walk(clusters, d);
            h = h.max(dh);
            w_sum += dw;
        }
        (h + 1, w_sum.max(1))
    }
    let (hgt, wdt) = walk(clusters, clusters.root);
    let dpt = clusters.members.iter().map(|m| m.len()).max().unwrap_or(0);
    FrameNorm { hgt, wdt, dpt }
}

fn bits_bytes(bits: &Bits) -> Vec<u8> {
    bits.words().iter().flat_map(|w| w.to_le_bytes()).collect()
}

fn compute_canonical_key(frame: &TypedFrame, root: usize, clusters: &Clusters) -> CanonicalKey {
    fn encode_cluster(frame: &TypedFrame, clusters: &Clusters, c: usize) -> Vec<u8> {
        let mut member_blobs: Vec<Vec<u8>> = clusters.members[c]
            .iter()
            .map(|&w| bits_bytes(frame.type_of(w).bits()))
            .collect();
        member_blobs.sort();
        let mut child_blobs: Vec<Vec<u8>> = clusters.children[c]
            .iter()
            .map(|&d| encode_cluster(frame, clusters, d))
            .collect();
        child_blobs.sort();
        let mut out = Vec::new();
        out.push(b'C');
        out.extend((member_blobs.len() as u32).to_le_bytes());
        for blob in member_blobs {
            out.extend((blob.len() as u32).to_le_bytes());
            out.extend(blob);
        }
        out.extend((child_blobs.len() as u32).to_le_bytes());
        for blob in child_blobs {
            out.extend((blob.len() as u32).to_le_bytes());
            out.extend(blob);
        }
        out
    }
    let mut out = vec![b'F', 1u8];
    let root_blob = bits_bytes(frame.type_of(root).bits());
    out.extend((root_blob.len() as u32).to_le_bytes());
    out.extend(root_blob);
    out.extend(encode_cluster(frame, clusters, clusters.root));
    CanonicalKey(out.into())
}

/// Free-function spelling of [`LocalFrame::measures`].
pub fn measures(a: &LocalFrame) -> FrameNorm {
    a.measures()
}

/// Free-function spelling of [`LocalFrame::canonical_form`].
pub fn canonical_form(a: &LocalFrame) -> CanonicalKey {
    a.canonical_form().clone()
}

// ---------------------------------------------------------------------------
// The embedding order.

/// Searches for an embedding of `a` into `b`: an injective world map
/// that is R-exact in both directions, preserves types, and sends root
/// to root. Returns the world pairs of a witness.
pub fn embeds(a: &LocalFrame, b: &LocalFrame) -> Option<Vec<(usize, usize)>> {
    if !Closure::same(a.closure(), b.closure()) {
        return None;
    }
    let na = a.measures();
    let nb = b.measures();
    if a.len() > b.len() || na.hgt > nb.hgt || na.wdt > nb.wdt || na.dpt > nb.dpt {
        return None;
    }
    if a.root_type() != b.root_type() {
        return None;
    }
    let ca = a.clusters();
    let cb = b.clusters();
    let mut world_map: HashMap<usize, usize> = HashMap::new();
    if !inject_cluster(a, b, ca.root, cb.root, Some((a.root(), b.root())), &mut world_map) {
        return None;
    }
    let a_children = ca.children[ca.root].clone();
    let b_children = cb.children[cb.root].clone();
    if embed_forest(a, b, &a_children, &b_children, &mut world_map) {
        let mut pairs: Vec<(usize, usize)> = world_map.into_iter().collect();
        pairs.sort();
        Some(pairs)
    } else {
        None
    }
}

/// Type-preserving injection of cluster `ka` (of `a`) into cluster `kb`
/// (of `b`), with an optional pinned pair, recorded into `world_map`.
/// Within a cluster any type-matching injection is exact for R, so a
/// greedy per-type matching suffices.
fn inject_cluster(
    a: &LocalFrame,
    b: &LocalFrame,
    ka: usize,
    kb: usize,
    pin: Option<(usize, usize)>,
    world_map: &mut HashMap<usize, usize>,
) -> bool {
    let mut used: Vec<usize> = Vec::new();
    if let Some((wa, wb)) = pin {
        if a.type_of(wa) != b.type_of(wb) {
            return false;
        }
        world_map.insert(wa, wb);
        used.push(wb);
    }
    for &wa in &a.clusters().members[ka] {
        if pin.map(|(p, _)| p == wa).unwrap_or(false) {
            continue;
        }
        let target = b.clusters().members[kb]
            .iter()
            .find(|&&wb| !used.contains(&wb) && b.type_of(wb) == a.type_of(wa));
        match target {
            Some(&wb) => {
                world_map.insert(wa, wb);
                used.push(wb);
            }
            None => return false,
        }
    }
    true
}

/// Embeds the forest of `a`-cluster subtrees `as_` into the forest of
/// `b`-cluster subtrees `bs`, keeping images of distinct trees
/// incomparable. Each `b`-tree receives a subset of the `a`-trees: a
/// lone tree may anchor anywhere inside it, two or more must be pushed
/// down into its children (anchoring at its root would make the images
/// comparable).
fn embed_forest(
    a: &LocalFrame,
    b: &LocalFrame,
    as_: &[usize],
    bs: &[usize],
    world_map: &mut HashMap<usize, usize>,
) -> bool {
    if as_.is_empty() {
        return true;
    }
    // Assign each a-tree an owning b-tree index, backtracking over the
    // resulting groups.
    fn assign(
        a: &LocalFrame,
        b: &LocalFrame,
        as_: &[usize],
        bs: &[usize],
        i: usize,
        groups: &mut Vec<Vec<usize>>,
        world_map: &mut HashMap<usize, usize>,
    ) -> bool {
        if i == as_.len() {
            let snapshot = world_map.clone();
            for (j, group) in groups.iter().enumerate() {
                let ok = match group.len() {
                    0 => true,
                    1 => embed_tree_anywhere(a, b, group[0], bs[j], world_map),
                    _ => {
                        let b_children = b.clusters().children[bs[j]].clone();
                        embed_forest(a, b, group, &b_children, world_map)
                    }
                };
                if !ok {
                    *world_map = snapshot;
                    return false;
                }
            }
            return true;
        }
        for j in 0..bs.len() {
            groups[j].push(as_[i]);
            if assign(a, b, as_, bs, i + 1, groups, world_map) {
                return true;
            }
            groups[j].pop();
        }
        false
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); bs.len()];
    assign(a, b, as_, bs, 0, &mut groups, world_map)
}

/// Embeds the `a`-cluster subtree rooted at `ka` somewhere inside the
/// `b`-cluster subtree rooted at `kb` (at its root or deeper).
fn embed_tree_anywhere(
    a: &LocalFrame,
    b: &LocalFrame,
    ka: usize,
    kb: usize,
    world_map: &mut HashMap<usize, usize>,
) -> bool {
    let snapshot = world_map.clone();
    if embed_tree_rooted(a, b, ka, kb, world_map) {
        return true;
    }
    *world_map = snapshot.clone();
    for &kb_child in &b.clusters().children[kb] {
        if embed_tree_anywhere(a, b, ka, kb_child, world_map) {
            return true;
        }
        *world_map = snapshot.clone();
    }
    false
}

/// Embeds the `a`-subtree at `ka` with its root cluster mapped exactly
/// onto cluster `kb`.
fn embed_tree_rooted(
    a: &LocalFrame,
    b: &LocalFrame,
    ka: usize,
    kb: usize,
    world_map: &mut HashMap<usize, usize>,
) -> bool {
    if a.clusters().members[ka].len() > b.clusters().members[kb].len() {
        return false;
    }
    let snapshot = world_map.clone();
    if !inject_cluster(a, b, ka, kb, None, world_map) {
        *world_map = snapshot;
        return false;
    }
    let a_children = a.clusters().children[ka].clone();
    let b_children = b.clusters().children[kb].clone();
    if embed_forest(a, b, &a_children, &b_children, world_map) {
        true
    } else {
        *world_map = snapshot;
        false
    }
}

/// `b ⪯ a`: `b` is isomorphic (as a rooted typed frame) to a generated
/// subframe of `a`.
pub fn preceq(b: &LocalFrame, a: &LocalFrame) -> bool {
    let kb = b.canonical_form();
    subframe_keys(a).contains(kb)
}

/// Canonical keys of all generated subframes of `a` (including `a`
/// itself). Distinct worlds of one cluster give at most one key per
/// root type.
fn subframe_keys(a: &LocalFrame) -> Vec<CanonicalKey> {
    let mut keys: Vec<CanonicalKey> = (0..a.len())
        .map(|v| a.subframe(v).canonical_form().clone())
        .collect();
    keys.sort();
    keys.dedup();
    keys
}

/// `a ∼ b`: mutual `⪯`.
pub fn sim(a: &LocalFrame, b: &LocalFrame) -> bool {
    preceq(a, b) && preceq(b, a)
}

fn strictly_precedes(b: &LocalFrame, a: &LocalFrame) -> bool {
    preceq(b, a) && !preceq(a, b)
}

/// `b ≺₁ a`: `b` strictly precedes `a` with no subframe class strictly
/// in between.
pub fn prec1(b: &LocalFrame, a: &LocalFrame) -> bool {
    if !strictly_precedes(b, a) {
        return false;
    }
    for rep in distinct_proper_subframes(a) {
        if strictly_precedes(b, &rep) && strictly_precedes(&rep, a) {
            return false;
        }
    }
    true
}

/// One generated subframe per canonical class, excluding the class of
/// `a` itself; sorted by canonical key.
fn distinct_proper_subframes(a: &LocalFrame) -> Vec<LocalFrame> {
    let mut reps: Vec<LocalFrame> = Vec::new();
    let mut seen: Vec<CanonicalKey> = vec![a.canonical_form().clone()];
    for v in 0..a.len() {
        let sub = a.subframe(v);
        if !seen.contains(sub.canonical_form()) {
            seen.push(sub.canonical_form().clone());
            reps.push(sub);
        }
    }
    reps.sort_by(|x, y| x.canonical_form().cmp(y.canonical_form()));
    reps
}

/// Canonical-distinct generated subframes of `a`, grouped into
/// `∼`-classes and restricted to the classes immediately below `a`
/// (`≺₁ a`). Each inner list is sorted by canonical key; the outer
/// list is sorted by its first member's key. `≺₁` is `∼`-invariant, so
/// testing one member per group suffices.
pub(crate) fn immediate_subframe_classes(a: &LocalFrame) -> Vec<Vec<LocalFrame>> {
    let candidates = distinct_proper_subframes(a);
    let mut groups: Vec<Vec<LocalFrame>> = Vec::new();
    'next: for c in candidates {
        for group in &mut groups {
            if sim(&c, &group[0]) {
                group.push(c);
                continue 'next;
            }
        }
        groups.push(vec![c]);
    }
    groups.retain(|group| prec1(&group[0], a));
    for group in &mut groups {
        group.sort_by(|x, y| x.canonical_form().cmp(y.canonical_form()));
    }
    groups.sort_by(|x, y| x[0].canonical_form().cmp(y[0].canonical_form()));
    groups
}

/// One representative per `∼`-class of the frames immediately below
/// `a` in the subframe order (`b ≺₁ a`), sorted by canonical key.
pub fn subframe_representatives(a: &LocalFrame) -> Vec<LocalFrame> {
    immediate_subframe_classes(a)
        .into_iter()
        .map(|group| group.into_iter().next().unwrap())
        .collect()
}

// ---------------------------------------------------------------------------
// Assembly and enumeration.

/// Builds the frame with root cluster `cluster` (its `root_index`-th
/// member becomes the root world) and the given child subtrees glued
/// strictly above the cluster. This is the raw construction behind
/// both frame enumeration and the temporal `⊕` operation; the box
/// condition is *not* checked.
pub(crate) fn assemble(
    closure: &Arc<Closure>,
    cluster: &[PhiType],
    children: &[LocalFrame],
    root_index: usize,
) -> Result<LocalFrame, FrameError> {
    if cluster.is_empty() {
        return Err(FrameError::Empty);
    }
    if root_index >= cluster.len() {
        return Err(FrameError::RootTypeMissing);
    }
    // World order: the root-cluster block (pinned root first), then
    // each child block.
    let mut types: Vec<PhiType> = Vec::new();
    types.push(cluster[root_index].clone());
    for (i, t) in cluster.iter().enumerate() {
        if i != root_index {
            types.push(t.clone());
        }
    }
    let block = types.len();
    let mut offsets = Vec::new();
    for child in children {
        offsets.push(types.len());
        types.extend(child.frame().types().iter().cloned());
    }
    let n = types.len();
    let mut r = Relation::new(n);
    for w in 0..block {
        for v in 0..n {
            r.set(w, v, true);
        }
    }
    for (child, &off) in children.iter().zip(offsets.iter()) {
        for w in 0..child.len() {
            for v in 0..child.len() {
                if child.r(w, v) {
                    r.set(off + w, off + v, true);
                }
            }
        }
    }
    let frame = TypedFrame::new(closure.clone(), types, r)?;
    LocalFrame::new(frame, 0)
}

/// Box-compatibility of a set of types living in one cluster: all
/// members agree on every `[]`-entry, and every body required by a
/// member's `[]`-entry holds at every member. Necessary for the
/// cluster to appear in any valid frame.
fn cluster_compatible(closure: &Closure, types: &[&PhiType]) -> bool {
    for &b in closure.box_nodes() {
        let EntryKind::Box { body } = closure.kind(b) else {
            unreachable!()
        };
        let claimed = types[0].contains_idx(b);
        if types.iter().any(|t| t.contains_idx(b) != claimed) {
            return false;
        }
        if claimed && types.iter().any(|t| !t.contains_idx(body)) {
            return false;
        }
    }
    true
}

/// The box condition at a root cluster `cluster` glued under children
/// with root types `child_roots`: `[]g` is in the cluster types iff
/// `g` holds throughout the cluster and `[]g` holds at every child
/// root. (Children are assumed internally valid, so `[]g` at their
/// root is equivalent to `g` throughout them.)
pub(crate) fn coherent_cluster(
    closure: &Closure,
    cluster: &[&PhiType],
    child_roots: &[&PhiType],
) -> bool {
    for &b in closure.box_nodes() {
        let EntryKind::Box { body } = closure.kind(b) else {
            unreachable!()
        };
        let everywhere = cluster.iter().all(|t| t.contains_idx(body))
            && child_roots.iter().all(|t| t.contains_idx(b));
        for t in cluster {
            if t.contains_idx(b) != everywhere {
                return false;
            }
        }
    }
    true
}

/// Streams every tree-like local frame over the types of the closure
/// whose norm is at most `(k + 1) * |f|`, one per isomorphism class,
/// filtered by `pred`. Frames are produced in ascending norm, then in
/// a fixed structural order. Every produced frame passes
/// [`validate_typed_frame`].
pub fn enumerate_frames<'a, F>(
    closure: &'a Arc<Closure>,
    k: usize,
    pred: F,
) -> impl Iterator<Item = LocalFrame> + 'a
where
    F: Fn(&LocalFrame) -> bool + 'a,
{
    let bound = (k + 1) * closure.size();
    enumerate_frames_norm(closure, bound).filter(move |f| pred(f))
}

/// Streams every tree-like local frame with norm at most `bound`, one
/// per isomorphism class, ascending by norm. Materializes each norm
/// stratum internally; callers that need work accounting should count
/// the frames they draw.
pub fn enumerate_frames_norm(
    closure: &Arc<Closure>,
    bound: usize,
) -> impl Iterator<Item = LocalFrame> + '_ {
    let types: Arc<Vec<PhiType>> = Arc::new(crate::formula::enumerate_types(closure).collect());
    (1..=bound).flat_map(move |n| frames_with_norm_exact(closure, &types, n).into_iter())
}

/// All frames with norm exactly `n`, in a fixed structural order.
pub(crate) fn frames_with_norm_exact(
    closure: &Arc<Closure>,
    types: &[PhiType],
    n: usize,
) -> Vec<LocalFrame> {
    frames_with_norm_exact_capped(closure, types, n, usize::MAX)
        .expect("an uncapped enumeration always completes")
}

/// Capped variant of [`frames_with_norm_exact`]: returns `None` as
/// soon as more than `cap` frames would have to be held in memory, so
/// a caller's work budget bounds the space of the attempt instead of
/// the stratum's true size (box-free closures make even the norm-2
/// stratum combinatorial).
pub(crate) fn frames_with_norm_exact_capped(
    closure: &Arc<Closure>,
    types: &[PhiType],
    n: usize,
    cap: usize,
) -> Option<Vec<LocalFrame>> {
    // Clusters: box-compatible subsets of types, size ≤ n, as sorted
    // type-index lists, ordered by (size, lex).
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut stack: Vec<(Vec<usize>, usize)> = vec![(Vec::new(), 0)];
    while let Some((prefix, from)) = stack.pop() {
        for i in from..types.len() {
            let mut next = prefix.clone();
            next.push(i);
            let refs: Vec<&PhiType> = next.iter().map(|&j| &types[j]).collect();
            if !cluster_compatible(closure, &refs) {
                continue;
            }
            if !next.is_empty() {
                if clusters.len() >= cap.saturating_mul(2) {
                    return None;
                }
                clusters.push(next.clone());
            }
            if next.len() < n {
                stack.push((next, i + 1));
            }
        }
    }
    clusters.sort_by_key(|c| (c.len(), c.clone()));

    // Trees by height; each entry carries its frame (rooted at the
    // first cluster member) per distinct root type.
    #[derive(Clone)]
    struct Tree {
        frame_per_root: Vec<LocalFrame>, // one per distinct root type, ascending
        norm: FrameNorm,
        /// Representative frame used when this tree is someone's child.
        child_frame: LocalFrame,
    }

    impl HasWidth for Tree {
        fn width(&self) -> usize {
            self.norm.wdt
        }
    }

    let build = |cluster: &[usize], children: &[&Tree]| -> Option<Tree> {
        let cluster_types: Vec<PhiType> = cluster.iter().map(|&i| types[i].clone()).collect();
        let refs: Vec<&PhiType> = cluster_types.iter().collect();
        let child_frames: Vec<LocalFrame> =
            children.iter().map(|t| t.child_frame.clone()).collect();
        let child_roots: Vec<&PhiType> = child_frames.iter().map(|f| f.root_type()).collect();
        if !coherent_cluster(closure, &refs, &child_roots) {
            return None;
        }
        let mut frame_per_root = Vec::new();
        let mut seen_root: Vec<&PhiType> = Vec::new();
        for i in 0..cluster_types.len() {
            if seen_root.contains(&&cluster_types[i]) {
                continue;
            }
            seen_root.push(&cluster_types[i]);
            let frame = assemble(closure, &cluster_types, &child_frames, i).ok()?;
            frame_per_root.push(frame);
        }
        let norm = frame_per_root[0].measures();
        let child_frame = frame_per_root[0].clone();
        Some(Tree {
            frame_per_root,
            norm,
            child_frame,
        })
    };

    // Frames held across all levels so far; one extra per tree for its
    // child representative. Visited child choices are counted too, so
    // the cap bounds time as well as space when coherence filters
    // almost everything out.
    let mut held: usize = 0;
    let visit_bound = cap.saturating_mul(4);
    let mut visits: usize = 0;

    let mut by_height: Vec<Vec<Tree>> = Vec::new();
    // Height 1: bare clusters.
    let mut level: Vec<Tree> = Vec::new();
    for cluster in &clusters {
        if let Some(t) = build(cluster, &[]) {
            held += t.frame_per_root.len() + 1;
            if held > cap {
                return None;
            }
            level.push(t);
        }
    }
    by_height.push(level);

    for h in 2..=n {
        let mut level: Vec<Tree> = Vec::new();
        // Children: multisets of trees of height ≤ h-1 with at least
        // one of height exactly h-1 and total width ≤ n. Represented
        // as non-decreasing index sequences into the pool.
        let pool: Vec<&Tree> = by_height.iter().flatten().collect();
        let tall_from = by_height[..h - 2].iter().map(|l| l.len()).sum::<usize>();
        for cluster in &clusters {
            let mut choice: Vec<usize> = Vec::new();
            let completed = multiset_children(
                &pool,
                tall_from,
                n,
                &mut choice,
                &mut |children: &[&Tree]| {
                    visits += 1;
                    if visits > visit_bound {
                        return false;
                    }
                    if let Some(t) = build(cluster, children) {
                        held += t.frame_per_root.len() + 1;
                        if held > cap {
                            return false;
                        }
                        level.push(t);
                    }
                    true
                },
            );
            if !completed {
                return None;
            }
        }
        by_height.push(level);
    }

    let mut out: Vec<LocalFrame> = Vec::new();
    for level in &by_height {
        for tree in level {
            if tree.norm.norm() == n {
                out.extend(tree.frame_per_root.iter().cloned());
            }
        }
    }
    Some(out)
}

/// Enumerates non-decreasing index sequences into `pool` (a multiset
/// choice of child subtrees) whose total width fits in `bound` and
/// which include at least one index ≥ `tall_from` (so the assembled
/// tree has the intended height). Invokes `emit` on each choice; an
/// `emit` returning `false` aborts the remaining walk.
fn multiset_children<'t, T, F>(
    pool: &[&'t T],
    tall_from: usize,
    bound: usize,
    choice: &mut Vec<usize>,
    emit: &mut F,
) -> bool
where
    T: HasWidth,
    F: FnMut(&[&'t T]) -> bool,
{
    fn rec<'t, T: HasWidth, F: FnMut(&[&'t T]) -> bool>(
        pool: &[&'t T],
        tall_from: usize,
        width_left: usize,
        from: usize,
        choice: &mut Vec<usize>,
        emit: &mut F,
    ) -> bool {
        if !choice.is_empty() && choice.iter().any(|&i| i >= tall_from) {
            let refs: Vec<&T> = choice.iter().map(|&i| pool[i]).collect();
            if !emit(&refs) {
                return false;
            }
        }
        for i in from..pool.len() {
            let w = pool[i].width();
            if w > width_left {
                continue;
            }
            choice.push(i);
            let keep_going = rec(pool, tall_from, width_left - w, i, choice, emit);
            choice.pop();
            if !keep_going {
                return false;
            }
        }
        true
    }
    rec(pool, tall_from, bound, 0, choice, emit)
}

pub(crate) trait HasWidth {
    fn width(&self) -> usize;
}
