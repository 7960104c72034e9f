//! Ready-made example objects: the motivating formula, a quasimodel
//! refuting it, and a small finite dynamic model. The files under
//! `samples/` at the workspace root are the JSON renderings of these
//! constructors.

use std::sync::Arc;

use crate::finite_model::FiniteDynModel;
use crate::formula::{Closure, Formula, PhiType};
use crate::frames::TypedFrame;
use crate::parser::parse;
use crate::quasimodel::Quasimodel;
use crate::rel::Relation;

/// `*[]p -> []*p`: the commutation of henceforth and interior. Not
/// DTL-valid — its negation is satisfiable, but only from three worlds
/// up, which makes it the engine's running example for every layer.
pub fn box_henceforth_commutation() -> Formula {
    parse("*[]p -> []*p").expect("the sample parses")
}

fn type_of(closure: &Arc<Closure>, members: &[&str]) -> PhiType {
    let wanted: Vec<Formula> = members
        .iter()
        .map(|s| parse(s).expect("sample members parse"))
        .collect();
    let mut list = Vec::new();
    for i in 0..closure.size() {
        let f = closure.entry(i).clone();
        if wanted.contains(&f) {
            list.push(f);
        } else {
            list.push(f.negated());
        }
    }
    PhiType::from_members(closure, list.iter()).expect("sample types are coherent")
}

/// A three-world quasimodel satisfying `!(*[]p -> []*p)`: the root
/// world holds `*[]p` but can see a world where `*p` fails, because
/// the seen world's obligation `!*p` is discharged along a transition
/// path that leaves the root's own future untouched.
pub fn refuting_quasimodel() -> Quasimodel {
    let closure = Closure::of(&box_henceforth_commutation());
    let t_u = type_of(
        &closure,
        &["p", "[]p", "*[]p", "*p", "!([]*p)", "*[]p & !([]*p)"],
    );
    let t_v = type_of(&closure, &["p", "[]p", "!([]*p)", "!(*[]p & !([]*p))"]);
    let t_w = type_of(&closure, &["!([]*p)", "!(*[]p & !([]*p))"]);
    let mut r = Relation::identity(3);
    r.set(0, 1, true);
    let frame =
        TypedFrame::new(closure, vec![t_u, t_v, t_w], r).expect("the sample frame is sound");
    Quasimodel::new(frame, [(0, 0), (1, 1), (1, 2), (2, 2)])
        .expect("the sample edges are in range")
}

/// A three-point chain `0 ⊑ 1 ⊑ 2` whose map climbs the chain and
/// parks at the top; `p` holds on the upper two points.
pub fn chain_model() -> FiniteDynModel {
    let mut order = Relation::identity(3);
    order.set(0, 1, true);
    order.set(1, 2, true);
    order.set(0, 2, true);
    FiniteDynModel::new(order, vec![1, 2, 2], [("p".to_string(), vec![1, 2])])
        .expect("the sample model is sound")
}
