//! `robot.toml` loader: one section per joint plus an optional `[tool]`.
//!
//! ```toml
//! [tool]
//! offset = 0.0
//!
//! [joint1]
//! a = 0.0
//! d = 0.1519
//! alpha = 1.5707963267948966
//! theta_offset = 0.0
//! lo = -6.283185307179586
//! hi = 6.283185307179586
//! ```
//!
//! `theta_offset`, `lo` and `hi` may be omitted (defaults 0 and ±2π).

use std::f64::consts::TAU;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use super::{DhModel, DhRow, JointLimit, KinematicsError};

#[derive(Debug, Error)]
pub enum RobotConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing robot config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Model(#[from] KinematicsError),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JointSection {
    a: f64,
    d: f64,
    alpha: f64,
    #[serde(default)]
    theta_offset: f64,
    #[serde(default = "neg_tau")]
    lo: f64,
    #[serde(default = "pos_tau")]
    hi: f64,
}

fn neg_tau() -> f64 {
    -TAU
}
fn pos_tau() -> f64 {
    TAU
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ToolSection {
    #[serde(default)]
    offset: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotFile {
    #[serde(default)]
    tool: ToolSection,
    joint1: JointSection,
    joint2: JointSection,
    joint3: JointSection,
    joint4: JointSection,
    joint5: JointSection,
    joint6: JointSection,
}

pub fn parse_robot_config(text: &str) -> Result<DhModel, RobotConfigError> {
    let file: RobotFile = toml::from_str(text)?;
    let joints = [
        file.joint1,
        file.joint2,
        file.joint3,
        file.joint4,
        file.joint5,
        file.joint6,
    ];
    let model = DhModel {
        rows: std::array::from_fn(|i| DhRow {
            a: joints[i].a,
            d: joints[i].d,
            alpha: joints[i].alpha,
            theta_offset: joints[i].theta_offset,
        }),
        limits: std::array::from_fn(|i| JointLimit {
            lo: joints[i].lo,
            hi: joints[i].hi,
        }),
        tool_offset: file.tool.offset,
    };
    model.validate()?;
    Ok(model)
}

pub fn load_robot_config(path: impl AsRef<Path>) -> Result<DhModel, RobotConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| RobotConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_robot_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const UR3: &str = include_str!("../../../../config/robot.toml");

    #[test]
    fn bundled_config_matches_builtin_ur3() {
        let m = parse_robot_config(UR3).unwrap();
        let ur3 = DhModel::ur3();
        for i in 0..6 {
            assert!((m.rows[i].a - ur3.rows[i].a).abs() < 1e-12);
            assert!((m.rows[i].d - ur3.rows[i].d).abs() < 1e-12);
            assert!((m.rows[i].alpha - ur3.rows[i].alpha).abs() < 1e-12);
        }
        assert_eq!(m.limits, ur3.limits);
    }

    #[test]
    fn missing_joint_is_parse_error() {
        let text = UR3.split("[joint6]").next().unwrap();
        assert!(matches!(
            parse_robot_config(text),
            Err(RobotConfigError::Parse(_))
        ));
    }

    #[test]
    fn inverted_limits_rejected() {
        let text = UR3.replacen("[joint2]\n", "[joint2]\nlo = 1.0\nhi = -1.0\n", 1);
        assert!(matches!(
            parse_robot_config(&text),
            Err(RobotConfigError::Model(_)) | Err(RobotConfigError::Parse(_))
        ));
    }
}
