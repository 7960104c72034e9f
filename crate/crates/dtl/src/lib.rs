//! Decision-procedure engine for dynamic topological logic (DTL).
//!
//! DTL is a tri-modal propositional logic interpreted over dynamic
//! topological systems: a topological space together with a continuous
//! self-map. `[]` is topological interior, `X` reads the valuation one
//! application of the map into the future, and `*` quantifies over all
//! finite iterates of the map.
//!
//! The engine works with the *non-deterministic quasimodel* presentation
//! of DTL satisfiability:
//!
//! * [`formula`] — abstract syntax, parsing, closures and types,
//! * [`frames`] — tree-like local Kripke frames and the embedding order,
//! * [`temporal`] — temporal successors between local frames,
//! * [`quasimodel`] — quasimodel validation and realizing paths,
//! * [`finite_model`] — finite Aleksandroff models, a brute-force
//!   refutation oracle, and simulation checkers,
//! * [`search`] — efficient families of paths and the semi-decision
//!   procedure for validity,
//! * [`json`] — serialization formats shared with the `dtl` binary.

pub mod bits;
pub mod finite_model;
pub mod formula;
pub mod frames;
pub mod json;
pub mod parser;
pub mod quasimodel;
pub mod rel;
pub mod samples;
pub mod search;
pub mod temporal;

pub use formula::{Closure, Formula, PhiType};
pub use frames::{FrameNorm, LocalFrame, TypedFrame};
