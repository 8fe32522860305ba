//! Dual-rate closed-loop inference: the 500 Hz bilateral follower law runs
//! every tick, the policy issues a fresh command every tenth tick and the
//! previous command is held in between.

use super::dataset::{ArmSelection, Normalization};
use super::lstm::{policy_forward, HiddenState, NetworkParams};
use super::scene::{select_target, ObjectScene};
use super::PolicyBundle;
use crate::bilateral::{side_torque, RobotSetup, SideSignals};
use crate::joints::{JointVector, JOINT_COUNT};
use crate::motionlog::{LogMetadata, LogRow, MotionLog, TorqueChannel};
use crate::observers::{ObserverState, PseudoDiff};
use crate::plant::{contact_torque, plant_step, ContactModel};
use crate::{SimError, CONTROL_DT, CONTROL_RATE};

/// Ticks between command updates (500 Hz loop, 50 Hz policy).
pub const COMMAND_INTERVAL: usize = 10;

/// Inference session parameters.
#[derive(Clone, Debug)]
pub struct InferenceSetup {
    pub follower: RobotSetup,
    pub contact: ContactModel,
    pub duration: f64,
    pub seed: u64,
    pub config_hash: String,
}

/// Raw (unnormalized) state of the selected joints at a command boundary:
/// angles, velocities, reaction estimates, concatenated.
pub type ArmState = Vec<f64>;

/// Raw command triple for the selected joints: angles, velocities, torques.
pub type ArmCommand = Vec<f64>;

/// Run the loop with an arbitrary command source. The commander sees the
/// follower's raw selected-joint state every `COMMAND_INTERVAL` ticks and
/// returns the raw command triple to hold until the next update. Joints
/// outside the selection hold their initial pose through the same law.
pub fn run_inference_with<F>(
    mut commander: F,
    arm: &ArmSelection,
    setup: &InferenceSetup,
    object_xy: (f64, f64),
) -> Result<MotionLog, SimError>
where
    F: FnMut(u64, &ArmState) -> ArmCommand,
{
    if !(setup.duration > 0.0) {
        return Err(SimError::BadInput("duration must be positive".into()));
    }
    setup.follower.params.validate()?;
    let params = setup.follower.params.clone();
    let truth = setup.follower.mismatch.apply(&params);
    let mut plant = crate::plant::PlantState::at_rest(setup.follower.initial_pose);
    let mut diffs: Vec<PseudoDiff> =
        (0..JOINT_COUNT).map(|i| PseudoDiff::new(params.cutoff[i], CONTROL_DT)).collect();
    for (i, d) in diffs.iter_mut().enumerate() {
        d.init_at(plant.theta[i]);
    }
    let mut observers = ObserverState::new(&params, CONTROL_DT);
    let mut tau_prev = JointVector::ZERO;

    let hold_pose = setup.follower.initial_pose;
    let mut command = SideSignals {
        theta: hold_pose,
        omega: JointVector::ZERO,
        tau_res_hat: JointVector::ZERO,
        tau_dis_hat: JointVector::ZERO,
    };

    let mut log = MotionLog::new(LogMetadata {
        seed: setup.seed,
        leader_preset: String::from("policy"),
        follower_preset: setup.follower.preset.clone(),
        config_hash: setup.config_hash.clone(),
        torque_channel: TorqueChannel::Response,
        object_xy: Some(object_xy),
    });

    let ticks = (setup.duration * CONTROL_RATE).round() as u64;
    for tick in 0..ticks {
        let theta = plant.theta;
        let mut omega_hat = JointVector::ZERO;
        for i in 0..JOINT_COUNT {
            omega_hat[i] = diffs[i].update(theta[i]);
        }
        let tau_dis = observers.dob_update(&tau_prev, &omega_hat, &theta, &params);
        let tau_res = observers.rfob_update(&tau_prev, &omega_hat, &theta, &params);

        if tick % COMMAND_INTERVAL as u64 == 0 {
            let mut state = Vec::with_capacity(arm.state_width());
            for &j in &arm.joints {
                state.push(theta[j]);
            }
            for &j in &arm.joints {
                state.push(omega_hat[j]);
            }
            for &j in &arm.joints {
                state.push(tau_res[j]);
            }
            let raw = commander(tick / COMMAND_INTERVAL as u64, &state);
            let n = arm.joints.len();
            debug_assert_eq!(raw.len(), 3 * n);
            command.theta = hold_pose;
            command.omega = JointVector::ZERO;
            command.tau_res_hat = JointVector::ZERO;
            for (pos, &j) in arm.joints.iter().enumerate() {
                command.theta[j] = raw[pos];
                command.omega[j] = raw[n + pos];
                command.tau_res_hat[j] = raw[2 * n + pos];
            }
        }

        let own = SideSignals {
            theta,
            omega: omega_hat,
            tau_res_hat: tau_res,
            tau_dis_hat: tau_dis,
        };
        let tau_ref = side_torque(&own, &command, &params);

        log.rows.push(LogRow {
            t: tick as f64 * CONTROL_DT,
            theta_l: command.theta,
            omega_l: command.omega,
            tau_l: command.tau_res_hat,
            theta_f: theta,
            omega_f: omega_hat,
            tau_f: tau_res,
        });

        let contact = contact_torque(&plant, &setup.contact);
        plant = plant_step(&plant, &tau_ref, &contact, CONTROL_DT, &truth)
            .map_err(|e| SimError::NonFinite { tick, what: e.to_string() })?;
        if !plant.is_finite() {
            return Err(SimError::NonFinite { tick, what: "follower state".into() });
        }
        tau_prev = tau_ref;
    }
    Ok(log)
}

/// Policy-driven inference on a scene: pick a target, then drive the
/// follower from the trained network with normalization applied around it.
/// Fails when the scene offers no eligible object.
pub fn run_inference(
    bundle: &PolicyBundle,
    setup: &InferenceSetup,
    scene: &ObjectScene,
) -> Result<MotionLog, SimError> {
    let target =
        select_target(scene).ok_or_else(|| SimError::BadInput("no eligible pick target in scene".into()))?;
    let center = scene.objects[target];
    run_policy(&bundle.net, &bundle.stats, &bundle.arm, setup, (center.x, center.y))
}

/// Drive the follower from a network toward fixed object coordinates.
pub fn run_policy(
    net: &NetworkParams,
    stats: &Normalization,
    arm: &ArmSelection,
    setup: &InferenceSetup,
    object_xy: (f64, f64),
) -> Result<MotionLog, SimError> {
    if net.cfg.state_width != arm.state_width() || net.cfg.output_width != arm.state_width() {
        return Err(SimError::BadInput(format!(
            "network widths ({}, {}) do not match the {}-joint selection",
            net.cfg.state_width,
            net.cfg.output_width,
            arm.joints.len()
        )));
    }
    let mut hidden = HiddenState::zeros(&net.cfg);
    run_inference_with(
        |_, state: &ArmState| {
            let mut raw = state.clone();
            raw.push(object_xy.0);
            raw.push(object_xy.1);
            let normalized = stats.normalize_input(&raw);
            let predicted = policy_forward(net, &normalized, &mut hidden);
            stats.denormalize_target(&predicted)
        },
        arm,
        setup,
        object_xy,
    )
}
