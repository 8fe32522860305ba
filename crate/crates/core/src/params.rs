//! Per-joint hardware/controller parameters and the analytic gravity model
//! constants, with the two shipped robot presets and TOML (de)serialization.

use crate::joints::{JointVector, JOINT_COUNT};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Standard gravitational acceleration, m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("joint {joint}: {what}")]
    Joint { joint: usize, what: String },
    #[error("gravity model: {0}")]
    Gravity(String),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("expected {expected} per-joint values, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Link masses, centre-of-mass offsets and link lengths of the arm gravity
/// model, shared by both arms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GravityParams {
    /// Mass of the second link, kg.
    pub m2: f64,
    /// Mass of the third link, kg.
    pub m3: f64,
    /// Mass of the fourth link, kg.
    pub m4: f64,
    /// Joint-to-centre-of-mass distance of the second link, m.
    pub c2: f64,
    /// Joint-to-centre-of-mass distance of the third link, m.
    pub c3: f64,
    /// Joint-to-centre-of-mass distance of the fourth link, m.
    pub c4: f64,
    /// Length of the second link, m.
    pub l2: f64,
    /// Length of the third link, m.
    pub l3: f64,
    /// Gravitational acceleration, m/s².
    pub g: f64,
}

/// The three products of masses and lengths the gravity torques are linear
/// in. These are what inverse-dynamics identification can actually recover.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LumpedGravity {
    /// c2·m2 + (c3 + l2)·m3
    pub p1: f64,
    /// c4·m4
    pub p2: f64,
    /// (l2 + l3)·m4
    pub p3: f64,
    /// Gravitational acceleration, m/s².
    pub g: f64,
}

impl GravityParams {
    pub fn sciurus17() -> Self {
        GravityParams {
            m2: 0.1936,
            m3: 0.1936,
            m4: 0.3112,
            c2: 0.1936,
            c3: 0.1936,
            c4: 0.3948,
            l2: 0.1903,
            l3: 0.1870,
            g: STANDARD_GRAVITY,
        }
    }

    pub fn foodly_typer() -> Self {
        GravityParams {
            m2: 0.1958,
            m3: 0.1958,
            m4: 0.3203,
            c2: 0.1958,
            c3: 0.1958,
            c4: 0.3965,
            l2: 0.1933,
            l3: 0.1909,
            g: STANDARD_GRAVITY,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let fields = [
            ("m2", self.m2),
            ("m3", self.m3),
            ("m4", self.m4),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("l2", self.l2),
            ("l3", self.l3),
            ("g", self.g),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v <= 0.0 {
                return Err(ParamError::Gravity(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn lumped(&self) -> LumpedGravity {
        LumpedGravity {
            p1: self.c2 * self.m2 + (self.c3 + self.l2) * self.m3,
            p2: self.c4 * self.m4,
            p3: (self.l2 + self.l3) * self.m4,
            g: self.g,
        }
    }

    /// Builds a full parameter set that reproduces the given lumped values
    /// exactly while keeping this set's link geometry where possible. Used to
    /// export identified parameters in the regular config schema.
    pub fn with_lumped(&self, lumped: &LumpedGravity) -> GravityParams {
        let m4 = lumped.p3 / (self.l2 + self.l3);
        let c4 = lumped.p2 / m4;
        // Split p1 evenly between the two terms it lumps.
        let m2 = 0.5 * lumped.p1 / self.c2;
        let m3 = 0.5 * lumped.p1 / (self.c3 + self.l2);
        GravityParams {
            m2,
            m3,
            m4,
            c2: self.c2,
            c3: self.c3,
            c4,
            l2: self.l2,
            l3: self.l3,
            g: lumped.g,
        }
    }

    /// Notes about suspicious values that are still loaded verbatim, e.g.
    /// centre-of-mass distances numerically identical to link masses or a
    /// fourth-link centre of mass beyond the end of the arm.
    pub fn sanity_notes(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if (self.c2 - self.m2).abs() < 1e-12 && (self.c3 - self.m3).abs() < 1e-12 {
            notes.push(
                "c2/c3 numerically equal m2/m3; values are used as configured".to_string(),
            );
        }
        if self.c4 > self.l2 + self.l3 {
            notes.push(format!(
                "c4 = {} lies beyond l2 + l3 = {}; values are used as configured",
                self.c4,
                self.l2 + self.l3
            ));
        }
        notes
    }
}

/// Per-joint inertia, friction, filter cutoffs and controller gains,
/// plus the gravity model constants.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotParams {
    /// Joint inertia J, kg·m².
    pub inertia: JointVector,
    /// Viscous friction coefficient D, N·m·s.
    pub viscous: JointVector,
    /// Low-pass cutoff f_C shared by DOB, RFOB and pseudo-differentiation, rad/s.
    pub cutoff: JointVector,
    /// Position P gain.
    pub kp: JointVector,
    /// Position D gain.
    pub kd: JointVector,
    /// Force P gain.
    pub kf: JointVector,
    /// Gravity model constants.
    pub gravity: GravityParams,
}

/// Names of the shipped presets.
pub const PRESET_NAMES: [&str; 2] = ["sciurus17", "foodly-typer"];

impl RobotParams {
    pub fn sciurus17() -> Self {
        // Right-arm rows; the left arm mirrors them.
        let kp8 = [50.0, 15.0, 30.0, 30.0, 10.0, 35.0, 20.0, 80.0];
        let kd8 = [20.0, 40.0, 33.0, 20.0, 20.0, 20.0, 20.0, 20.0];
        let kf8 = [0.9, 0.4, 0.5, 0.5, 0.7, 0.7, 0.5, 0.9];
        let j8 = [0.1099, 0.1147, 0.0432, 0.0582, 0.005676, 0.0066, 0.006281, 0.006891];
        let d8 = [0.4105, 0.7655, 0.2187, 0.2687, 0.0400, 0.0391, 0.0500, 0.021];
        RobotParams {
            inertia: from_arm_and_torso(&j8, [0.1000, 0.0050, 0.0050]),
            viscous: from_arm_and_torso(&d8, [0.0, 0.0, 0.0]),
            cutoff: from_arm_and_torso(&[30.0; 8], [15.0, 20.0, 20.0]),
            kp: from_arm_and_torso(&kp8, [40.0, 128.0, 128.0]),
            kd: from_arm_and_torso(&kd8, [20.0, 20.0, 20.0]),
            kf: from_arm_and_torso(&kf8, [0.0, 0.0, 0.0]),
            gravity: GravityParams::sciurus17(),
        }
    }

    pub fn foodly_typer() -> Self {
        let kp8 = [50.0, 15.0, 30.0, 30.0, 10.0, 35.0, 20.0, 150.0];
        let kd8 = [20.0, 40.0, 33.0, 40.0, 20.0, 20.0, 20.0, 20.0];
        let kf8 = [0.9, 0.4, 0.5, 0.5, 0.7, 0.7, 0.5, 0.9];
        let j8 = [0.0649, 0.1067, 0.0536, 0.0506, 0.0100, 0.0130, 0.0120, 0.0130];
        let d8 = [0.1609, 0.4466, 0.2730, 0.1706, 0.0400, 0.0391, 0.0500, 0.0210];
        RobotParams {
            inertia: from_arm_and_torso(&j8, [0.2000, 0.0100, 0.0100]),
            viscous: from_arm_and_torso(&d8, [0.0, 0.0, 0.0]),
            cutoff: from_arm_and_torso(&[30.0; 8], [15.0, 20.0, 20.0]),
            kp: from_arm_and_torso(&kp8, [40.0, 128.0, 128.0]),
            kd: from_arm_and_torso(&kd8, [20.0, 20.0, 20.0]),
            kf: from_arm_and_torso(&kf8, [0.0, 0.0, 0.0]),
            gravity: GravityParams::foodly_typer(),
        }
    }

    pub fn preset(name: &str) -> Result<Self, ParamError> {
        match name {
            "sciurus17" => Ok(Self::sciurus17()),
            "foodly-typer" => Ok(Self::foodly_typer()),
            other => Err(ParamError::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for i in 0..JOINT_COUNT {
            let joint = i + 1;
            if !(self.inertia[i].is_finite() && self.inertia[i] > 0.0) {
                return Err(ParamError::Joint {
                    joint,
                    what: format!("inertia must be > 0, got {}", self.inertia[i]),
                });
            }
            if !(self.viscous[i].is_finite() && self.viscous[i] >= 0.0) {
                return Err(ParamError::Joint {
                    joint,
                    what: format!("viscous friction must be >= 0, got {}", self.viscous[i]),
                });
            }
            if !(self.cutoff[i].is_finite() && self.cutoff[i] > 0.0) {
                return Err(ParamError::Joint {
                    joint,
                    what: format!("cutoff must be > 0, got {}", self.cutoff[i]),
                });
            }
            for (name, v) in [("kp", self.kp[i]), ("kd", self.kd[i]), ("kf", self.kf[i])] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(ParamError::Joint {
                        joint,
                        what: format!("{name} must be >= 0, got {v}"),
                    });
                }
            }
        }
        self.gravity.validate()
    }

    pub fn to_toml_string(&self) -> String {
        let file = RobotParamsFile::from(self);
        toml::to_string_pretty(&file).expect("parameter serialization cannot fail")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ParamError> {
        let file: RobotParamsFile =
            toml::from_str(text).map_err(|e| ParamError::Parse(e.to_string()))?;
        let params = file.into_params()?;
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<(), ParamError> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ParamError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

fn from_arm_and_torso(arm: &[f64; 8], torso: [f64; 3]) -> JointVector {
    JointVector::from_fn(|i| match i {
        0..=7 => arm[i],
        8..=15 => arm[i - 8],
        _ => torso[i - 16],
    })
}

/// On-disk schema of a robot parameter file.
#[derive(Serialize, Deserialize)]
struct RobotParamsFile {
    joints: JointTables,
    gravity: GravityParams,
}

#[derive(Serialize, Deserialize)]
struct JointTables {
    inertia: Vec<f64>,
    viscous: Vec<f64>,
    cutoff: Vec<f64>,
    kp: Vec<f64>,
    kd: Vec<f64>,
    kf: Vec<f64>,
}

impl From<&RobotParams> for RobotParamsFile {
    fn from(p: &RobotParams) -> Self {
        RobotParamsFile {
            joints: JointTables {
                inertia: p.inertia.as_slice().to_vec(),
                viscous: p.viscous.as_slice().to_vec(),
                cutoff: p.cutoff.as_slice().to_vec(),
                kp: p.kp.as_slice().to_vec(),
                kd: p.kd.as_slice().to_vec(),
                kf: p.kf.as_slice().to_vec(),
            },
            gravity: p.gravity,
        }
    }
}

impl RobotParamsFile {
    fn into_params(self) -> Result<RobotParams, ParamError> {
        let take = |v: Vec<f64>| {
            JointVector::from_slice(&v).ok_or(ParamError::BadLength {
                expected: JOINT_COUNT,
                got: v.len(),
            })
        };
        Ok(RobotParams {
            inertia: take(self.joints.inertia)?,
            viscous: take(self.joints.viscous)?,
            cutoff: take(self.joints.cutoff)?,
            kp: take(self.joints.kp)?,
            kd: take(self.joints.kd)?,
            kf: take(self.joints.kf)?,
            gravity: self.gravity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::joints::TORSO_HEAD;

    #[test]
    fn presets_validate() {
        for name in PRESET_NAMES {
            RobotParams::preset(name).unwrap().validate().unwrap();
        }
        assert!(RobotParams::preset("nonexistent").is_err());
    }

    #[test]
    fn preset_tables_spot_checks() {
        let s = RobotParams::sciurus17();
        assert_eq!(s.inertia[0], 0.1099);
        assert_eq!(s.viscous[1], 0.7655);
        assert_eq!(s.kp[7], 80.0);
        // Left arm mirrors the right.
        assert_eq!(s.inertia[8], s.inertia[0]);
        assert_eq!(s.kp[15], s.kp[7]);
        // Torso/head rows.
        assert_eq!(s.cutoff[16], 15.0);
        assert_eq!(s.cutoff[17], 20.0);
        assert_eq!(s.kp[17], 128.0);

        let f = RobotParams::foodly_typer();
        assert_eq!(f.inertia[0], 0.0649);
        assert_eq!(f.viscous[0], 0.1609);
        assert_eq!(f.kp[7], 150.0);
        assert_eq!(f.kd[3], 40.0);
        assert_eq!(f.inertia[16], 0.2000);
    }

    #[test]
    fn torso_and_head_run_position_only() {
        for name in PRESET_NAMES {
            let p = RobotParams::preset(name).unwrap();
            for i in TORSO_HEAD {
                assert_eq!(p.kf[i], 0.0);
                assert_eq!(p.viscous[i], 0.0);
            }
        }
    }

    #[test]
    fn toml_round_trip() {
        let p = RobotParams::foodly_typer();
        let text = p.to_toml_string();
        let q = RobotParams::from_toml_str(&text).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_bad_values() {
        let mut p = RobotParams::sciurus17();
        p.inertia[3] = 0.0;
        assert!(p.validate().is_err());
        let mut p = RobotParams::sciurus17();
        p.cutoff[0] = -1.0;
        assert!(p.validate().is_err());
        let mut p = RobotParams::sciurus17();
        p.gravity.m4 = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn lumped_round_trip() {
        let g = GravityParams::foodly_typer();
        let lumped = g.lumped();
        let rebuilt = g.with_lumped(&lumped);
        let l2 = rebuilt.lumped();
        assert!((l2.p1 - lumped.p1).abs() < 1e-12);
        assert!((l2.p2 - lumped.p2).abs() < 1e-12);
        assert!((l2.p3 - lumped.p3).abs() < 1e-12);
        rebuilt.validate().unwrap();
    }

    #[test]
    fn table_values_are_flagged_not_fixed() {
        let notes = GravityParams::sciurus17().sanity_notes();
        assert_eq!(notes.len(), 2);
    }
}
