//! JSON wire formats shared between the library and the `dtl` binary.
//!
//! Types are written as their *positive* members: the formulas of the
//! closure the type contains. Everything unlisted is implicitly
//! negated, and listings may also name negated entries explicitly.
//! Preorders of typed frames are completed reflexively and
//! transitively on load (the loader reports how many pairs it added);
//! finite dynamic models are strict and reject incomplete preorders.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::finite_model::{FiniteDynModel, ModelError};
use crate::formula::{Closure, Formula, PhiType, TypeError};
use crate::frames::{FrameError, TypedFrame};
use crate::parser::{parse, ParseError};
use crate::quasimodel::{QuasiError, Quasimodel};
use crate::rel::Relation;

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("world {0}: {1}")]
    BadMember(usize, ParseError),
    #[error("world {world} lists {formula}, which is not in the closure")]
    ForeignFormula { world: usize, formula: String },
    #[error("world {world} lists {formula} both positively and negatively")]
    ContradictoryMembers { world: usize, formula: String },
    #[error("world {world}: {source}")]
    BadType {
        world: usize,
        #[source]
        source: TypeError,
    },
    #[error("world ids must be exactly 0..{expected}, got {got:?}")]
    BadWorldIds { expected: usize, got: Vec<usize> },
    #[error("order pair ({0}, {1}) is out of range")]
    OrderOutOfRange(usize, usize),
    #[error("the root {0} is not a world")]
    RootOutOfRange(usize),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Quasimodel(#[from] QuasiError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One world of a typed frame: its id and the members of its type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldDto {
    pub id: usize,
    #[serde(rename = "type")]
    pub members: Vec<String>,
}

/// A typed frame: worlds, preorder pairs, and an optional designated
/// root (meaningful for tree-like local frames).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameDto {
    pub worlds: Vec<WorldDto>,
    pub order: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<usize>,
}

/// A quasimodel: a typed frame plus the transition relation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuasimodelDto {
    #[serde(flatten)]
    pub frame: FrameDto,
    pub g: Vec<(usize, usize)>,
}

/// A relation between the worlds of two typed frames, as used for
/// temporal successors and embeddings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameRelationDto {
    pub source: FrameDto,
    pub target: FrameDto,
    pub pairs: Vec<(usize, usize)>,
}

/// A finite dynamic model in Aleksandroff form: `order` must already
/// be a preorder, `f` maps each point to its image, and `valuation`
/// lists the points where each variable holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDto {
    pub points: usize,
    pub order: Vec<(usize, usize)>,
    pub f: Vec<usize>,
    #[serde(default)]
    pub valuation: BTreeMap<String, Vec<usize>>,
}

/// A typed frame reconstructed from its wire form.
#[derive(Debug)]
pub struct LoadedFrame {
    pub frame: TypedFrame,
    pub root: Option<usize>,
    /// Reflexive and transitive pairs the loader had to add to make
    /// the listed order a preorder. Zero for fully listed orders.
    pub added_order_pairs: usize,
}

/// A quasimodel reconstructed from its wire form. Structural only:
/// run the validator to check the quasimodel conditions.
#[derive(Debug)]
pub struct LoadedQuasimodel {
    pub quasimodel: Quasimodel,
    pub root: Option<usize>,
    pub added_order_pairs: usize,
}

/// Renders a type as the list of its positive members.
fn members_of(t: &PhiType) -> Vec<String> {
    let closure = t.closure();
    (0..closure.size())
        .filter(|&i| t.contains_idx(i))
        .map(|i| closure.entry(i).to_string())
        .collect()
}

pub fn frame_to_dto(frame: &TypedFrame, root: Option<usize>) -> FrameDto {
    FrameDto {
        worlds: (0..frame.len())
            .map(|w| WorldDto {
                id: w,
                members: members_of(frame.type_of(w)),
            })
            .collect(),
        order: frame.relation().pairs(),
        root,
    }
}

pub fn quasimodel_to_dto(q: &Quasimodel) -> QuasimodelDto {
    QuasimodelDto {
        frame: frame_to_dto(q.frame(), None),
        g: q.edges(),
    }
}

pub fn model_to_dto(m: &FiniteDynModel) -> ModelDto {
    ModelDto {
        points: m.len(),
        order: m.order().pairs(),
        f: m.map().to_vec(),
        valuation: m
            .valuation()
            .iter()
            .map(|(var, row)| (var.clone(), row.iter_ones().collect()))
            .collect(),
    }
}

/// Reconstructs one type from its listed members. Each complementary
/// pair of the closure is represented by its un-negated side; pairs
/// with no listed member default to the negated side, and listing both
/// sides of one pair is a contradiction.
fn type_from_members(
    closure: &Arc<Closure>,
    world: usize,
    members: &[String],
) -> Result<PhiType, JsonError> {
    // The representative of an entry's pair: the side that is not a
    // negation (always among the positive entries).
    let rep_of = |idx: usize| -> usize {
        if matches!(closure.kind(idx), crate::formula::EntryKind::Not { .. }) {
            closure.negation_of(idx)
        } else {
            idx
        }
    };
    let mut polarity: Vec<Option<bool>> = vec![None; closure.size()];
    for text in members {
        let f = parse(text).map_err(|e| JsonError::BadMember(world, e))?;
        let Some(idx) = closure.index_of(&f) else {
            return Err(JsonError::ForeignFormula {
                world,
                formula: text.clone(),
            });
        };
        let rep = rep_of(idx);
        let value = rep == idx;
        if polarity[rep].is_some_and(|v| v != value) {
            return Err(JsonError::ContradictoryMembers {
                world,
                formula: closure.entry(rep).to_string(),
            });
        }
        polarity[rep] = Some(value);
    }
    let list: Vec<Formula> = (0..closure.size())
        .filter(|&i| rep_of(i) == i)
        .map(|i| {
            if polarity[i].unwrap_or(false) {
                closure.entry(i).clone()
            } else {
                closure.entry(i).negated()
            }
        })
        .collect();
    PhiType::from_members(closure, list.iter())
        .map_err(|source| JsonError::BadType { world, source })
}

/// Rebuilds the preorder from listed pairs, completing it reflexively
/// and transitively; counts the added pairs.
fn order_from_pairs(
    n: usize,
    pairs: &[(usize, usize)],
) -> Result<(Relation, usize), JsonError> {
    let mut r = Relation::new(n);
    for &(i, j) in pairs {
        if i >= n || j >= n {
            return Err(JsonError::OrderOutOfRange(i, j));
        }
        r.set(i, j, true);
    }
    let listed = r.pairs().len();
    let closed = r.reflexive_transitive_closure();
    let added = closed.pairs().len() - listed;
    Ok((closed, added))
}

pub fn frame_from_dto(
    dto: &FrameDto,
    closure: &Arc<Closure>,
) -> Result<LoadedFrame, JsonError> {
    let n = dto.worlds.len();
    let mut ids: Vec<usize> = dto.worlds.iter().map(|w| w.id).collect();
    ids.sort_unstable();
    if ids != (0..n).collect::<Vec<_>>() {
        return Err(JsonError::BadWorldIds {
            expected: n,
            got: ids,
        });
    }
    let mut types: Vec<Option<PhiType>> = vec![None; n];
    for world in &dto.worlds {
        types[world.id] = Some(type_from_members(closure, world.id, &world.members)?);
    }
    let types: Vec<PhiType> = types.into_iter().map(|t| t.expect("ids are dense")).collect();
    let (order, added_order_pairs) = order_from_pairs(n, &dto.order)?;
    if let Some(root) = dto.root {
        if root >= n {
            return Err(JsonError::RootOutOfRange(root));
        }
    }
    let frame = TypedFrame::new(closure.clone(), types, order)?;
    Ok(LoadedFrame {
        frame,
        root: dto.root,
        added_order_pairs,
    })
}

pub fn quasimodel_from_dto(
    dto: &QuasimodelDto,
    closure: &Arc<Closure>,
) -> Result<LoadedQuasimodel, JsonError> {
    let loaded = frame_from_dto(&dto.frame, closure)?;
    let quasimodel = Quasimodel::new(loaded.frame, dto.g.iter().copied())?;
    Ok(LoadedQuasimodel {
        quasimodel,
        root: loaded.root,
        added_order_pairs: loaded.added_order_pairs,
    })
}

/// Strict: the listed order must already be a preorder, the map and
/// valuation are validated against it.
pub fn model_from_dto(dto: &ModelDto) -> Result<FiniteDynModel, JsonError> {
    let n = dto.points;
    let mut order = Relation::new(n);
    for &(i, j) in &dto.order {
        if i >= n || j >= n {
            return Err(JsonError::OrderOutOfRange(i, j));
        }
        order.set(i, j, true);
    }
    let model = FiniteDynModel::new(
        order,
        dto.f.clone(),
        dto.valuation
            .iter()
            .map(|(var, points)| (var.clone(), points.clone())),
    )?;
    Ok(model)
}

/// Renders a quasimodel for Graphviz: solid arrows for the
/// non-reflexive part of the preorder, dashed arrows for the
/// transition relation, and each world labeled with its positive
/// members.
pub fn to_dot(q: &Quasimodel) -> String {
    use std::fmt::Write;
    let frame = q.frame();
    let mut out = String::from("digraph quasimodel {\n");
    out.push_str("  rankdir=BT;\n  node [shape=box, fontname=\"monospace\"];\n");
    for w in 0..frame.len() {
        let label = members_of(frame.type_of(w)).join("\\n");
        writeln!(out, "  w{w} [label=\"w{w}\\n{label}\"];").expect("string writes");
    }
    for (i, j) in frame.relation().pairs() {
        if i != j {
            writeln!(out, "  w{i} -> w{j};").expect("string writes");
        }
    }
    for (i, j) in q.edges() {
        writeln!(out, "  w{i} -> w{j} [style=dashed, constraint=false];")
            .expect("string writes");
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quasimodel::validate_quasimodel;

    fn running_closure() -> Arc<Closure> {
        Closure::of(&parse("*[]p -> []*p").unwrap())
    }

    fn sample_quasimodel() -> Quasimodel {
        crate::samples::refuting_quasimodel()
    }

    #[test]
    fn quasimodels_round_trip_through_json() {
        let q = sample_quasimodel();
        let dto = quasimodel_to_dto(&q);
        let text = serde_json::to_string_pretty(&dto).unwrap();
        let back: QuasimodelDto = serde_json::from_str(&text).unwrap();
        let loaded = quasimodel_from_dto(&back, &running_closure()).unwrap();
        assert_eq!(loaded.added_order_pairs, 0);
        assert_eq!(loaded.quasimodel.len(), q.len());
        assert_eq!(loaded.quasimodel.edges(), q.edges());
        for w in 0..q.len() {
            assert_eq!(
                loaded.quasimodel.frame().type_of(w),
                q.frame().type_of(w)
            );
        }
        assert!(validate_quasimodel(&loaded.quasimodel).is_ok());
    }

    #[test]
    fn sparse_orders_are_completed_and_counted() {
        let q = sample_quasimodel();
        let mut dto = quasimodel_to_dto(&q);
        // Keep only the non-reflexive pair; the loader must restore
        // the three reflexive ones.
        dto.frame.order.retain(|&(i, j)| i != j);
        let loaded = quasimodel_from_dto(&dto, &running_closure()).unwrap();
        assert_eq!(loaded.added_order_pairs, 3);
        assert!(validate_quasimodel(&loaded.quasimodel).is_ok());
    }

    #[test]
    fn listings_may_negate_entries_explicitly() {
        let closure = running_closure();
        let t = type_from_members(&closure, 0, &["!p".to_string()]).unwrap();
        let p_idx = closure.index_of(&parse("p").unwrap()).unwrap();
        assert!(!t.contains_idx(p_idx));
    }

    #[test]
    fn contradictory_listings_are_rejected() {
        let closure = running_closure();
        let err = type_from_members(
            &closure,
            0,
            &["p".to_string(), "!p".to_string()],
        )
        .unwrap_err();
        assert!(matches!(err, JsonError::ContradictoryMembers { .. }));
    }

    #[test]
    fn foreign_formulas_are_rejected() {
        let closure = running_closure();
        let err = type_from_members(&closure, 0, &["q".to_string()]).unwrap_err();
        assert!(matches!(err, JsonError::ForeignFormula { .. }));
    }

    #[test]
    fn world_ids_must_be_dense() {
        let q = sample_quasimodel();
        let mut dto = quasimodel_to_dto(&q);
        dto.frame.worlds[2].id = 5;
        let err = quasimodel_from_dto(&dto, &running_closure()).unwrap_err();
        assert!(matches!(err, JsonError::BadWorldIds { .. }));
    }

    #[test]
    fn models_round_trip_and_reject_broken_orders() {
        let m = crate::samples::chain_model();
        let dto = model_to_dto(&m);
        let text = serde_json::to_string(&dto).unwrap();
        let back: ModelDto = serde_json::from_str(&text).unwrap();
        let loaded = model_from_dto(&back).unwrap();
        assert_eq!(loaded.map(), m.map());
        assert_eq!(loaded.order().pairs(), m.order().pairs());

        let mut broken = model_to_dto(&m);
        broken.order.retain(|&(i, j)| i == j);
        broken.order.push((0, 1));
        broken.order.push((1, 2));
        // (0, 2) is missing, so the strict loader must refuse.
        assert!(model_from_dto(&broken).is_err());
    }

    #[test]
    fn dot_output_draws_both_relations() {
        let q = sample_quasimodel();
        let dot = to_dot(&q);
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("w0 -> w1;"));
        assert!(dot.contains("style=dashed"));
    }

    #[test]
    fn frame_relations_serialize() {
        let q = sample_quasimodel();
        let dto = FrameRelationDto {
            source: frame_to_dto(q.frame(), Some(0)),
            target: frame_to_dto(q.frame(), Some(0)),
            pairs: vec![(0, 0), (1, 1), (2, 2)],
        };
        let text = serde_json::to_string(&dto).unwrap();
        let back: FrameRelationDto = serde_json::from_str(&text).unwrap();
        assert_eq!(back.pairs.len(), 3);
        assert_eq!(back.source.root, Some(0));
    }
}
