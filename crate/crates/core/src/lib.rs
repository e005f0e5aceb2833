//! Teleoperation digital twin: UR3 kinematics, haptic workspace mapping, a
//! simulated tube-grasping scene with a depth camera, depth-based object
//! localization, synthetic COCO data, mask evaluation, session metrics and
//! the live 50 Hz server.

pub mod classes;
pub mod control;
pub mod dataset;
pub mod detection;
pub mod eval;
pub mod kinematics;
pub mod mask;
pub mod metrics;
pub mod pose;
pub mod protocol;
pub mod server;
pub mod sim;

pub use classes::ObjectClass;
pub use control::{ControlConfig, EeTarget, HapticSample};
pub use detection::{Detection, Part};
pub use kinematics::{DhModel, EePose, JointConfig, SelectionWeights};
pub use mask::{Mask, PixelRect};
pub use metrics::{MetricsReport, SessionLog};
pub use pose::{EstimateMode, ObjectEstimate};
pub use protocol::{ControlMsg, StateMsg, PROTOCOL_VERSION};
pub use server::{Session, SessionConfig};
pub use sim::{Scene, SimEvent};
