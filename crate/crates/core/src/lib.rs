//! Failure-recovery runtime for behavior-tree robot task execution.
//!
//! A backchaining planner grows a behavior tree from goal literals over a
//! skill catalog; the tree is executed against a deterministic tabletop
//! simulator while a pluggable reasoner verifies the plan before execution
//! and checks every skill activation at run time.

pub mod literal;
pub mod scene;
pub mod skill;
pub mod bt;
pub mod planner;
pub mod simulator;
pub mod verdict;
pub mod history;
pub mod reasoner;
pub mod pipeline;
pub mod replay;
pub mod suite;
