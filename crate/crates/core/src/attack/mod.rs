//! Attack surfaces, attacker objectives and the attacker's meta-MDP.

mod compact;
mod constraints;
mod meta;
mod objective;

pub use compact::build_meta_mdp_compact;
pub use constraints::{
    build_constraints, AttackConstraints, ConstraintBuild, ConstraintRules, Surface, SurfaceRule,
    SurfaceToggles,
};
pub use meta::{
    build_meta_mdp, Interaction, MetaAction, MetaBuildOptions, MetaKind, MetaMdp, MetaState,
    MetaStep,
};
pub use objective::{AttackerObjective, RawObjective};
