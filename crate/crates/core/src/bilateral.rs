//! Four-channel bilateral controller coupling a leader and a follower plant,
//! plus the scripted operator standing in for the human.
//!
//! Per joint the torque reference is
//!   τ_l = (J_l/2)·(K_p·(θ_f−θ_l) + K_d·(ω̂_f−ω̂_l)) − (K_f/2)·(τ̂_f+τ̂_l) + τ̂_l_dis
//! and symmetrically for the follower. Velocities are pseudo-differentiated,
//! reaction torques come from the RFOB, and τ̂_dis (gravity compensation plus
//! DOB output) realizes acceleration control. Each robot uses its own inertia
//! and gains, which is the only dimensionally consistent choice when leader
//! and follower hardware differ.

use crate::joints::{JointVector, JOINT_COUNT};
use crate::motionlog::{LogMetadata, LogRow, MotionLog, TorqueChannel};
use crate::observers::{ObserverState, PseudoDiff};
use crate::params::RobotParams;
use crate::plant::{contact_torque, plant_step, ContactModel, ModelMismatch, PlantState};
use crate::{SimError, CONTROL_DT};

/// Time-parameterized joint reference, linearly interpolated between
/// waypoints and held beyond the ends.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<(f64, JointVector)>,
}

impl Trajectory {
    /// Constant pose for any time.
    pub fn hold(pose: JointVector) -> Self {
        Trajectory { waypoints: vec![(0.0, pose)] }
    }

    pub fn from_waypoints(mut waypoints: Vec<(f64, JointVector)>) -> Result<Self, SimError> {
        if waypoints.is_empty() {
            return Err(SimError::BadInput("trajectory needs at least one waypoint".into()));
        }
        waypoints.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in waypoints.windows(2) {
            if pair[1].0 - pair[0].0 <= 0.0 {
                return Err(SimError::BadInput("trajectory timestamps must be strictly increasing".into()));
            }
        }
        Ok(Trajectory { waypoints })
    }

    /// Smooth reach from `start` to `end` between t0 and t1 using the
    /// minimum-jerk time scaling 10u³−15u⁴+6u⁵, densely sampled so linear
    /// interpolation reproduces it closely.
    pub fn min_jerk_reach(start: JointVector, end: JointVector, t0: f64, t1: f64) -> Self {
        assert!(t1 > t0);
        let samples = 200;
        let mut waypoints = Vec::with_capacity(samples + 1);
        for k in 0..=samples {
            let u = k as f64 / samples as f64;
            let s = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
            let pose = start + (end - start) * s;
            waypoints.push((t0 + u * (t1 - t0), pose));
        }
        Trajectory { waypoints }
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints.last().map(|(t, _)| *t).unwrap_or(0.0)
    }

    pub fn sample(&self, t: f64) -> JointVector {
        match self.waypoints.binary_search_by(|(wt, _)| wt.total_cmp(&t)) {
            Ok(i) => self.waypoints[i].1,
            Err(0) => self.waypoints[0].1,
            Err(i) if i == self.waypoints.len() => self.waypoints[i - 1].1,
            Err(i) => {
                let (t0, p0) = self.waypoints[i - 1];
                let (t1, p1) = self.waypoints[i];
                let alpha = (t - t0) / (t1 - t0);
                p0 + (p1 - p0) * alpha
            }
        }
    }

    /// CSV of `t,q1..q19` rows; `#` lines are ignored.
    pub fn from_csv(text: &str) -> Result<Self, SimError> {
        let mut waypoints = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if idx == 0 && trimmed.starts_with('t') {
                continue; // optional header
            }
            let values: Result<Vec<f64>, _> =
                trimmed.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let values = values
                .map_err(|_| SimError::BadInput(format!("trajectory line {}: bad float", idx + 1)))?;
            if values.len() != JOINT_COUNT + 1 {
                return Err(SimError::BadInput(format!(
                    "trajectory line {}: expected {} columns, got {}",
                    idx + 1,
                    JOINT_COUNT + 1,
                    values.len()
                )));
            }
            let pose = JointVector::from_slice(&values[1..]).unwrap();
            waypoints.push((values[0], pose));
        }
        Trajectory::from_waypoints(waypoints)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for j in 1..=JOINT_COUNT {
            out.push_str(&format!(",q{j}"));
        }
        out.push('\n');
        for (t, pose) in &self.waypoints {
            out.push_str(&format!("{t}"));
            for v in pose.iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// PD servo toward a scripted reference, applied to the leader as an
/// external torque. Stands in for the human hand.
#[derive(Clone, Debug)]
pub struct OperatorModel {
    pub trajectory: Trajectory,
    /// Hand stiffness per joint, N·m/rad.
    pub stiffness: JointVector,
    /// Hand damping per joint, N·m·s/rad.
    pub damping: JointVector,
}

impl OperatorModel {
    pub fn new(trajectory: Trajectory, stiffness: JointVector, damping: JointVector) -> Self {
        OperatorModel { trajectory, stiffness, damping }
    }

    /// A hand that never pushes; the pair is left to its own dynamics.
    pub fn passive() -> Self {
        OperatorModel {
            trajectory: Trajectory::hold(JointVector::ZERO),
            stiffness: JointVector::ZERO,
            damping: JointVector::ZERO,
        }
    }

    /// Torque the hand applies to the leader at time `t`.
    pub fn torque(&self, t: f64, theta: &JointVector, omega: &JointVector) -> JointVector {
        let reference = self.trajectory.sample(t);
        JointVector::from_fn(|i| {
            self.stiffness[i] * (reference[i] - theta[i]) - self.damping[i] * omega[i]
        })
    }
}

/// Measured/estimated signals of one robot, the inputs of the control law.
#[derive(Clone, Copy, Debug)]
pub struct SideSignals {
    pub theta: JointVector,
    pub omega: JointVector,
    pub tau_res_hat: JointVector,
    pub tau_dis_hat: JointVector,
}

/// The four-channel control law. Returns (leader, follower) torque
/// references. Swapping the argument pairs swaps the outputs.
pub fn bilateral_torques(
    leader: &SideSignals,
    follower: &SideSignals,
    leader_params: &RobotParams,
    follower_params: &RobotParams,
) -> (JointVector, JointVector) {
    let leader_tau = side_torque(leader, follower, leader_params);
    let follower_tau = side_torque(follower, leader, follower_params);
    (leader_tau, follower_tau)
}

/// Torque reference for `own` coupling toward `other` under `own`'s gains.
/// This is also the follower law of motion playback, with `other` frozen to
/// recorded or predicted commands.
pub fn side_torque(own: &SideSignals, other: &SideSignals, params: &RobotParams) -> JointVector {
    JointVector::from_fn(|i| {
        let position_term = params.kp[i] * (other.theta[i] - own.theta[i])
            + params.kd[i] * (other.omega[i] - own.omega[i]);
        0.5 * params.inertia[i] * position_term
            - 0.5 * params.kf[i] * (other.tau_res_hat[i] + own.tau_res_hat[i])
            + own.tau_dis_hat[i]
    })
}

/// One robot of a teleoperation pair.
#[derive(Clone, Debug)]
pub struct RobotSetup {
    pub params: RobotParams,
    /// Preset or config name recorded in log metadata.
    pub preset: String,
    /// Plant-side deviation from the nominal parameters.
    pub mismatch: ModelMismatch,
    pub initial_pose: JointVector,
}

impl RobotSetup {
    pub fn from_preset(name: &str) -> Result<Self, SimError> {
        Ok(RobotSetup {
            params: RobotParams::preset(name)?,
            preset: name.to_string(),
            mismatch: ModelMismatch::EXACT,
            initial_pose: JointVector::ZERO,
        })
    }
}

/// Everything a teleoperation session needs.
#[derive(Clone, Debug)]
pub struct TeleopSetup {
    pub leader: RobotSetup,
    pub follower: RobotSetup,
    pub operator: OperatorModel,
    pub contact: ContactModel,
    pub duration: f64,
    pub seed: u64,
    /// Hash recorded in the log metadata.
    pub config_hash: String,
    /// Object coordinates stamped into the logs of imitation teach sessions.
    pub object_xy: Option<(f64, f64)>,
}

/// Session metrics computed on the fly.
#[derive(Clone, Debug, Default)]
pub struct TeleopSummary {
    pub ticks: u64,
    /// Mean |θ_l − θ_f| per joint over the final 10% of the session.
    pub steady_sync_error: JointVector,
    /// Mean |τ̂_l + τ̂_f| per joint over ticks with plant-truth contact.
    pub mean_force_sum: JointVector,
    /// Mean |contact torque| per joint over the same ticks.
    pub mean_contact: JointVector,
    /// Ticks with nonzero plant-truth contact torque, per joint.
    pub contact_ticks: [u64; JOINT_COUNT],
}

/// Result of a teleoperation session: the response recording, the command
/// recording (same schema, torque columns hold τ_ref) and ground truth for
/// verification.
#[derive(Clone, Debug)]
pub struct TeleopOutcome {
    pub log: MotionLog,
    pub command_log: MotionLog,
    /// Plant-truth contact torque on the follower, one entry per tick.
    pub contact_truth: Vec<JointVector>,
    pub summary: TeleopSummary,
}

/// Per-robot integration state inside the loop.
struct Runtime {
    nominal: RobotParams,
    truth: RobotParams,
    plant: PlantState,
    diffs: Vec<PseudoDiff>,
    observers: ObserverState,
    tau_prev: JointVector,
}

impl Runtime {
    fn new(setup: &RobotSetup) -> Result<Self, SimError> {
        setup.params.validate()?;
        let truth = setup.mismatch.apply(&setup.params);
        let plant = PlantState::at_rest(setup.initial_pose);
        let mut diffs: Vec<PseudoDiff> = (0..JOINT_COUNT)
            .map(|i| PseudoDiff::new(setup.params.cutoff[i], CONTROL_DT))
            .collect();
        for (i, d) in diffs.iter_mut().enumerate() {
            d.init_at(plant.theta[i]);
        }
        Ok(Runtime {
            nominal: setup.params.clone(),
            truth,
            plant,
            diffs,
            observers: ObserverState::new(&setup.params, CONTROL_DT),
            tau_prev: JointVector::ZERO,
        })
    }

    /// Measure and update estimates using the torque applied over the last
    /// interval.
    fn observe(&mut self) -> SideSignals {
        let theta = self.plant.theta;
        let mut omega_hat = JointVector::ZERO;
        for i in 0..JOINT_COUNT {
            omega_hat[i] = self.diffs[i].update(theta[i]);
        }
        let tau_dis = self.observers.dob_update(&self.tau_prev, &omega_hat, &theta, &self.nominal);
        let tau_res = self.observers.rfob_update(&self.tau_prev, &omega_hat, &theta, &self.nominal);
        SideSignals { theta, omega: omega_hat, tau_res_hat: tau_res, tau_dis_hat: tau_dis }
    }

    fn step(&mut self, tau_ref: &JointVector, tau_ext: &JointVector, tick: u64) -> Result<(), SimError> {
        self.plant = plant_step(&self.plant, tau_ref, tau_ext, CONTROL_DT, &self.truth)
            .map_err(|e| SimError::NonFinite { tick, what: e.to_string() })?;
        if !self.plant.is_finite() {
            return Err(SimError::NonFinite { tick, what: "plant state".into() });
        }
        self.tau_prev = *tau_ref;
        Ok(())
    }
}

/// Run a bilateral teleoperation session at 500 Hz. The operator torque acts
/// on the leader, contact torque on the follower; both robots' angles,
/// pseudo-differentiated velocities and reaction estimates are logged every
/// tick. Deterministic: no randomness enters the loop, the seed is recorded
/// for provenance.
pub fn run_teleop(setup: &TeleopSetup) -> Result<TeleopOutcome, SimError> {
    if !(setup.duration > 0.0) {
        return Err(SimError::BadInput("duration must be positive".into()));
    }
    let mut leader = Runtime::new(&setup.leader)?;
    let mut follower = Runtime::new(&setup.follower)?;

    let metadata = LogMetadata {
        seed: setup.seed,
        leader_preset: setup.leader.preset.clone(),
        follower_preset: setup.follower.preset.clone(),
        config_hash: setup.config_hash.clone(),
        torque_channel: TorqueChannel::Response,
        object_xy: setup.object_xy,
    };
    let mut log = MotionLog::new(metadata.clone());
    let mut command_log = MotionLog::new(LogMetadata {
        torque_channel: TorqueChannel::Command,
        ..metadata
    });

    let ticks = (setup.duration * crate::CONTROL_RATE).round() as u64;
    let steady_window_start = ticks - (ticks / 10).max(1);
    let mut contact_truth = Vec::with_capacity(ticks as usize);
    let mut summary = TeleopSummary { ticks, ..TeleopSummary::default() };
    let mut steady_samples = 0u64;

    for tick in 0..ticks {
        let t = tick as f64 * CONTROL_DT;
        let leader_signals = leader.observe();
        let follower_signals = follower.observe();

        let (tau_l, tau_f) = bilateral_torques(
            &leader_signals,
            &follower_signals,
            &leader.nominal,
            &follower.nominal,
        );

        log.rows.push(LogRow {
            t,
            theta_l: leader_signals.theta,
            omega_l: leader_signals.omega,
            tau_l: leader_signals.tau_res_hat,
            theta_f: follower_signals.theta,
            omega_f: follower_signals.omega,
            tau_f: follower_signals.tau_res_hat,
        });
        command_log.rows.push(LogRow {
            t,
            theta_l: leader_signals.theta,
            omega_l: leader_signals.omega,
            tau_l,
            theta_f: follower_signals.theta,
            omega_f: follower_signals.omega,
            tau_f,
        });

        let hand = setup.operator.torque(t, &leader.plant.theta, &leader.plant.omega);
        let contact = contact_torque(&follower.plant, &setup.contact);
        contact_truth.push(contact);

        for i in 0..JOINT_COUNT {
            if contact[i] != 0.0 {
                summary.contact_ticks[i] += 1;
                summary.mean_contact[i] += contact[i].abs();
                summary.mean_force_sum[i] +=
                    (leader_signals.tau_res_hat[i] + follower_signals.tau_res_hat[i]).abs();
            }
            if tick >= steady_window_start {
                summary.steady_sync_error[i] +=
                    (leader_signals.theta[i] - follower_signals.theta[i]).abs();
            }
        }
        if tick >= steady_window_start {
            steady_samples += 1;
        }

        // The hand pushing the leader is an external assist: reaction
        // torque is its negation.
        leader.step(&tau_l, &(-hand), tick)?;
        follower.step(&tau_f, &contact, tick)?;
    }

    for i in 0..JOINT_COUNT {
        if steady_samples > 0 {
            summary.steady_sync_error[i] /= steady_samples as f64;
        }
        if summary.contact_ticks[i] > 0 {
            summary.mean_contact[i] /= summary.contact_ticks[i] as f64;
            summary.mean_force_sum[i] /= summary.contact_ticks[i] as f64;
        }
    }

    Ok(TeleopOutcome { log, command_log, contact_truth, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::gravity_torque;

    fn zero_signals() -> SideSignals {
        SideSignals {
            theta: JointVector::ZERO,
            omega: JointVector::ZERO,
            tau_res_hat: JointVector::ZERO,
            tau_dis_hat: JointVector::ZERO,
        }
    }

    #[test]
    fn identical_states_leave_only_disturbance_compensation() {
        let params = RobotParams::foodly_typer();
        let mut leader = zero_signals();
        let mut follower = zero_signals();
        leader.tau_dis_hat = JointVector::splat(0.3);
        follower.tau_dis_hat = JointVector::splat(-0.2);
        let (tau_l, tau_f) = bilateral_torques(&leader, &follower, &params, &params);
        assert_eq!(tau_l, leader.tau_dis_hat);
        assert_eq!(tau_f, follower.tau_dis_hat);
    }

    #[test]
    fn position_error_term_matches_hand_computation() {
        // Joint 1, J = 0.0649, Kp = 50, 0.1 rad error:
        // (J/2)·Kp·dθ = 0.0649/2·50·0.1.
        let params = RobotParams::foodly_typer();
        let leader = zero_signals();
        let mut follower = zero_signals();
        follower.theta[0] = 0.1;
        let (tau_l, tau_f) = bilateral_torques(&leader, &follower, &params, &params);
        let expected = 0.0649 / 2.0 * 50.0 * 0.1;
        assert!((tau_l[0] - expected).abs() < 1e-12, "{} vs {expected}", tau_l[0]);
        assert!((tau_f[0] + expected).abs() < 1e-12);
    }

    #[test]
    fn balanced_reaction_estimates_cancel_force_term() {
        let params = RobotParams::sciurus17();
        let mut leader = zero_signals();
        let mut follower = zero_signals();
        leader.tau_res_hat = JointVector::splat(0.4);
        follower.tau_res_hat = JointVector::splat(-0.4);
        let (tau_l, tau_f) = bilateral_torques(&leader, &follower, &params, &params);
        assert_eq!(tau_l, JointVector::ZERO);
        assert_eq!(tau_f, JointVector::ZERO);
    }

    #[test]
    fn law_is_symmetric_under_role_swap() {
        let lp = RobotParams::sciurus17();
        let fp = RobotParams::foodly_typer();
        let mut a = zero_signals();
        let mut b = zero_signals();
        a.theta[2] = 0.2;
        a.tau_res_hat[2] = 0.1;
        b.omega[2] = -0.4;
        b.tau_dis_hat[2] = 0.05;
        let (tau_a, tau_b) = bilateral_torques(&a, &b, &lp, &fp);
        let (tau_b2, tau_a2) = bilateral_torques(&b, &a, &fp, &lp);
        assert_eq!(tau_a, tau_a2);
        assert_eq!(tau_b, tau_b2);
    }

    fn reach_setup(duration: f64) -> TeleopSetup {
        let mut target = JointVector::ZERO;
        target[0] = 0.5;
        target[1] = 0.4;
        target[3] = -0.3;
        target[9] = 0.3;
        let trajectory =
            Trajectory::min_jerk_reach(JointVector::ZERO, target, 0.5, duration * 0.6);
        TeleopSetup {
            leader: RobotSetup::from_preset("sciurus17").unwrap(),
            follower: RobotSetup::from_preset("foodly-typer").unwrap(),
            operator: OperatorModel::new(
                trajectory,
                JointVector::splat(30.0),
                JointVector::splat(3.0),
            ),
            contact: ContactModel::none(),
            duration,
            seed: 1,
            config_hash: String::new(),
            object_xy: None,
        }
    }

    #[test]
    fn free_pair_converges_from_offset_start() {
        let mut setup = reach_setup(4.0);
        setup.operator = OperatorModel::passive();
        setup.leader.initial_pose[4] = 0.05;
        setup.leader.initial_pose[6] = -0.04;
        let outcome = run_teleop(&setup).unwrap();
        let last = outcome.log.rows.last().unwrap();
        for i in 0..JOINT_COUNT {
            assert!(
                (last.theta_l[i] - last.theta_f[i]).abs() < 1e-3,
                "joint {} error {}",
                i + 1,
                (last.theta_l[i] - last.theta_f[i]).abs()
            );
        }
    }

    #[test]
    fn follower_tracks_guided_reach() {
        let outcome = run_teleop(&reach_setup(6.0)).unwrap();
        for i in 0..JOINT_COUNT {
            assert!(
                outcome.summary.steady_sync_error[i] < 1e-2,
                "joint {} steady error {}",
                i + 1,
                outcome.summary.steady_sync_error[i]
            );
        }
        // The leader actually went somewhere.
        let last = outcome.log.rows.last().unwrap();
        assert!(last.theta_l[0] > 0.4);
    }

    #[test]
    fn contact_balances_reaction_estimates() {
        let mut setup = reach_setup(6.0);
        // Wall in the path of joint 1.
        setup.contact = ContactModel::single(0, 0.3, 50.0, 1.0);
        let outcome = run_teleop(&setup).unwrap();
        assert!(outcome.summary.contact_ticks[0] > 1_000, "never reached the wall");
        let ratio = outcome.summary.mean_force_sum[0] / outcome.summary.mean_contact[0];
        assert!(ratio < 0.05, "force sum ratio {ratio}");
    }

    #[test]
    fn command_log_shares_motion_columns_with_response_log() {
        let outcome = run_teleop(&reach_setup(1.0)).unwrap();
        assert_eq!(outcome.command_log.rows.len(), outcome.log.rows.len());
        for (c, r) in outcome.command_log.rows.iter().zip(outcome.log.rows.iter()) {
            assert_eq!(c.theta_l, r.theta_l);
            assert_eq!(c.omega_f, r.omega_f);
            assert_ne!(c.tau_l, r.tau_l); // commands vs estimates
        }
        assert_eq!(outcome.command_log.metadata.torque_channel, TorqueChannel::Command);
    }

    #[test]
    fn sessions_are_deterministic() {
        let setup = reach_setup(1.5);
        let a = run_teleop(&setup).unwrap();
        let b = run_teleop(&setup).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.command_log, b.command_log);
    }

    #[test]
    fn gravity_holds_pair_at_rest() {
        // With both robots released at the zero pose and no operator, the
        // disturbance compensation keeps them from falling.
        let mut setup = reach_setup(3.0);
        setup.operator = OperatorModel::passive();
        let outcome = run_teleop(&setup).unwrap();
        let last = outcome.log.rows.last().unwrap();
        let g = gravity_torque(&last.theta_f, &setup.follower.params.gravity);
        assert!(g.max_abs() > 0.5, "zero pose must be gravity loaded");
        assert!(last.theta_f.max_abs() < 5e-3, "follower drifted {:?}", last.theta_f);
        assert!(last.theta_l.max_abs() < 5e-3, "leader drifted {:?}", last.theta_l);
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let mut pose = JointVector::ZERO;
        pose[2] = 1.25;
        let traj = Trajectory::min_jerk_reach(JointVector::ZERO, pose, 0.0, 2.0);
        let text = traj.to_csv();
        let back = Trajectory::from_csv(&text).unwrap();
        for t in [0.0, 0.37, 1.2, 1.9, 2.0] {
            assert!((traj.sample(t)[2] - back.sample(t)[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_clamps_outside_span() {
        let mut pose = JointVector::ZERO;
        pose[0] = 1.0;
        let traj = Trajectory::min_jerk_reach(JointVector::ZERO, pose, 1.0, 2.0);
        assert_eq!(traj.sample(0.0)[0], 0.0);
        assert_eq!(traj.sample(5.0)[0], 1.0);
    }
}
