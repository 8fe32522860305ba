//! Ground-truth manipulator dynamics: diagonal inertia and viscous friction
//! per joint, analytic arm gravity, and a compliant spring-damper contact
//! that supplies reaction torques.

use crate::joints::{JointVector, JOINT_COUNT};
use crate::params::{GravityParams, LumpedGravity, RobotParams};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("non-finite {which} torque at joint {joint}")]
    NonFiniteTorque { which: &'static str, joint: usize },
}

/// Instantaneous state of one simulated robot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantState {
    /// Joint angles, rad.
    pub theta: JointVector,
    /// Joint velocities, rad/s.
    pub omega: JointVector,
    /// Simulated time, s.
    pub time: f64,
}

impl PlantState {
    pub fn at_rest(theta: JointVector) -> Self {
        PlantState { theta, omega: JointVector::ZERO, time: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.omega.is_finite() && self.time.is_finite()
    }

    /// Total kinetic energy 1/2 Σ J_i ω_i².
    pub fn kinetic_energy(&self, params: &RobotParams) -> f64 {
        (0..JOINT_COUNT)
            .map(|i| 0.5 * params.inertia[i] * self.omega[i] * self.omega[i])
            .sum()
    }
}

/// Multiplicative mismatch between the plant's true inertia/friction and the
/// nominal values the controller and observers are given. 1.0 means exact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelMismatch {
    pub inertia_scale: f64,
    pub viscous_scale: f64,
}

impl ModelMismatch {
    pub const EXACT: ModelMismatch = ModelMismatch { inertia_scale: 1.0, viscous_scale: 1.0 };

    /// The stock robustness perturbation: +10% inertia, -10% friction.
    pub fn default_perturbation() -> Self {
        ModelMismatch { inertia_scale: 1.1, viscous_scale: 0.9 }
    }

    pub fn apply(&self, nominal: &RobotParams) -> RobotParams {
        let mut true_params = nominal.clone();
        true_params.inertia = nominal.inertia * self.inertia_scale;
        true_params.viscous = nominal.viscous * self.viscous_scale;
        true_params
    }
}

impl Default for ModelMismatch {
    fn default() -> Self {
        ModelMismatch::EXACT
    }
}

/// One-sided spring-damper wall per joint. A joint in the `enabled` set is in
/// contact while its angle exceeds the engagement angle; the produced torque
/// opposes penetration and is zero on the free side.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactModel {
    /// Engagement angle per joint, rad.
    pub engage: JointVector,
    /// Wall stiffness, N·m/rad.
    pub stiffness: f64,
    /// Wall damping, N·m·s/rad.
    pub damping: f64,
    /// Joints the wall acts on.
    pub enabled: [bool; JOINT_COUNT],
}

impl ContactModel {
    pub fn none() -> Self {
        ContactModel {
            engage: JointVector::ZERO,
            stiffness: 0.0,
            damping: 0.0,
            enabled: [false; JOINT_COUNT],
        }
    }

    /// Wall on a single joint.
    pub fn single(joint: usize, engage: f64, stiffness: f64, damping: f64) -> Self {
        let mut model = ContactModel::none();
        model.engage[joint] = engage;
        model.stiffness = stiffness;
        model.damping = damping;
        model.enabled[joint] = true;
        model
    }

    pub fn is_active(&self) -> bool {
        self.enabled.iter().any(|e| *e)
    }

    /// Shift every enabled engagement angle by `offset` (environment moved).
    pub fn displaced(&self, offset: f64) -> ContactModel {
        let mut moved = self.clone();
        for i in 0..JOINT_COUNT {
            if moved.enabled[i] {
                moved.engage[i] += offset;
            }
        }
        moved
    }
}

/// Reaction torque of the contact model at the given state.
pub fn contact_torque(state: &PlantState, model: &ContactModel) -> JointVector {
    JointVector::from_fn(|i| {
        if !model.enabled[i] {
            return 0.0;
        }
        let penetration = state.theta[i] - model.engage[i];
        if penetration <= 0.0 {
            0.0
        } else {
            model.stiffness * penetration + model.damping * state.omega[i]
        }
    })
}

/// Arm gravity torques. Nonzero only at joints 1-4 and 9-12; shoulder/elbow
/// terms of both arms, grippers, wrists and torso/head contribute nothing.
pub fn gravity_torque(theta: &JointVector, params: &GravityParams) -> JointVector {
    gravity_torque_lumped(theta, &params.lumped())
}

/// Gravity torques from the lumped parameters (the form identification
/// recovers). `gravity_torque` delegates here.
pub fn gravity_torque_lumped(theta: &JointVector, lp: &LumpedGravity) -> JointVector {
    let mut g = JointVector::ZERO;
    let (p1, p2, p3, ga) = (lp.p1, lp.p2, lp.p3, lp.g);

    // Right arm, joints 1-4 (indices 0-3).
    let (s1, c1) = theta[0].sin_cos();
    let (s2, c2) = theta[1].sin_cos();
    let (s3, c3) = theta[2].sin_cos();
    let (s4, c4) = theta[3].sin_cos();
    g[0] = ga * (-p1 * s1 * s2 - p2 * (s4 * c1 * c3 + s3 * s4 * c2 * s1 - c4 * s2 * s1) - p3 * s2 * s1);
    g[1] = ga * (p1 * c2 + p2 * (-s2 * s3 * s4 - c4 * c2) + p3 * c2) * c1;
    g[2] = ga * p2 * (s1 * s3 + c1 * c2 * c3) * s4;
    g[3] = ga * p2 * ((s2 * s4 + s3 * c2 * c4) * c1 - s1 * c3 * c4);

    // Left arm, joints 9-12 (indices 8-11).
    let (s9, c9) = theta[8].sin_cos();
    let (s10, c10) = theta[9].sin_cos();
    let (s11, c11) = theta[10].sin_cos();
    let (s12, c12) = theta[11].sin_cos();
    g[8] = ga * (p1 * s9 * s10 - p2 * (s12 * c11 * c9 + s11 * s12 * c10 * s9 + c12 * s10 * s9) + p3 * s10 * s9);
    g[9] = -ga * (p1 * c10 + p2 * (s11 * s12 * s10 - c12 * c10) + p3 * c10) * c9;
    g[10] = ga * p2 * (s11 * s9 + c11 * c9 * c10) * s12;
    g[11] = ga * p2 * ((s11 * c12 * c10 - s12 * s10) * c9 - s9 * c11 * c12);

    g
}

/// Advance the plant one fixed step with semi-implicit Euler:
/// per joint, J·ω̇ = τ_ref − τ_ext − D·ω − g(θ), then θ integrates the
/// updated velocity. `tau_ext` is the reaction torque from contact or an
/// operator acting on the robot.
pub fn plant_step(
    state: &PlantState,
    tau_ref: &JointVector,
    tau_ext: &JointVector,
    dt: f64,
    params: &RobotParams,
) -> Result<PlantState, PlantError> {
    debug_assert!(dt > 0.0);
    for i in 0..JOINT_COUNT {
        if !tau_ref[i].is_finite() {
            return Err(PlantError::NonFiniteTorque { which: "reference", joint: i + 1 });
        }
        if !tau_ext[i].is_finite() {
            return Err(PlantError::NonFiniteTorque { which: "external", joint: i + 1 });
        }
    }
    let gravity = gravity_torque(&state.theta, &params.gravity);
    let mut next = *state;
    for i in 0..JOINT_COUNT {
        let accel = (tau_ref[i] - tau_ext[i] - params.viscous[i] * state.omega[i] - gravity[i])
            / params.inertia[i];
        next.omega[i] = state.omega[i] + dt * accel;
        next.theta[i] = state.theta[i] + dt * next.omega[i];
    }
    next.time = state.time + dt;
    Ok(next)
}
