//! Deterministic simulator for teleoperating an omnidirectional aerial
//! manipulator through a haptic handle.
//!
//! A [`Session`] advances the vehicle, its impedance controller, the contact
//! world and the task on a fixed tick. Given a scenario and the operator
//! inputs, every run is bit-identical, which is what makes logs replayable.
//!
//! ```
//! use omav_teleop::scenario::{bundled, load_scenario};
//! use omav_teleop::{run_session, InputSource, Session};
//!
//! let scenario = load_scenario(bundled("push").unwrap()).unwrap();
//! let start = scenario.start;
//! let out = run_session(Session::new(scenario).unwrap(), InputSource::Replay(Vec::new())).unwrap();
//! // nobody touched the handle
//! assert_eq!(out.state.vehicle, start);
//! ```

// `!(x <= limit)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod dynamics;
pub mod log;
pub mod pilot;
pub mod protocol;
pub mod scenario;
pub mod session;
pub mod so3;
pub mod task;
pub mod world;

pub use teleop_stats as stats;

pub use coupling::{CouplingParams, HandleState};
pub use dynamics::{ImpedanceParams, ReferenceState, RigidState, Wrench6};
pub use session::{run_session, InputFrame, InputSource, Session};
pub use so3::{Rot3, Vec3};

/// The guide's code listings, compiled and run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/attitude.md")]
    pub mod attitude {}
    #[doc = include_str!("../../../book/src/impedance.md")]
    pub mod impedance {}
    #[doc = include_str!("../../../book/src/coupling.md")]
    pub mod coupling {}
    #[doc = include_str!("../../../book/src/contact.md")]
    pub mod contact {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub mod scenarios {}
    #[doc = include_str!("../../../book/src/sessions.md")]
    pub mod sessions {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    pub mod protocol {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    pub mod statistics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
