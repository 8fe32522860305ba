//! Motion playback: recorded leader responses become the command stream of a
//! follower running the same bilateral follower law, giving hybrid
//! position/force reproduction without an operator in the loop.

use crate::bilateral::{side_torque, RobotSetup, SideSignals};
use crate::joints::{JointVector, JOINT_COUNT};
use crate::motionlog::{double_speed, zero_phase_filter, LogMetadata, LogRow, MotionLog, TorqueChannel};
use crate::observers::{ObserverState, PseudoDiff};
use crate::plant::{contact_torque, plant_step, ContactModel, PlantState};
use crate::{SimError, CONTROL_DT};

/// Commands of one tick: the saved leader responses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplayCommand {
    pub theta: JointVector,
    pub omega: JointVector,
    pub tau: JointVector,
}

/// A 500 Hz command stream extracted from a recording.
#[derive(Clone, Debug)]
pub struct ReplayStream {
    pub rate: f64,
    pub commands: Vec<ReplayCommand>,
    /// Metadata of the source recording.
    pub source: LogMetadata,
}

/// Playback speed selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Speedup {
    X1,
    X2,
}

impl Speedup {
    pub fn factor(&self) -> usize {
        match self {
            Speedup::X1 => 1,
            Speedup::X2 => 2,
        }
    }
}

/// Extract the command stream from a teach recording, optionally zero-phase
/// filtered at the given per-joint cutoffs and/or double-speed resampled
/// (filtering first, then speed-up).
pub fn prepare_replay(
    log: &MotionLog,
    speedup: Speedup,
    filter: bool,
    cutoffs: &JointVector,
) -> ReplayStream {
    let mut working;
    let source = if filter {
        working = zero_phase_filter(log, cutoffs);
        &working
    } else {
        log
    };
    if speedup == Speedup::X2 {
        working = double_speed(source);
        ReplayStream::from_log(&working)
    } else {
        ReplayStream::from_log(source)
    }
}

impl ReplayStream {
    /// Leader columns of a log, verbatim.
    pub fn from_log(log: &MotionLog) -> ReplayStream {
        ReplayStream {
            rate: log.rate,
            commands: log
                .rows
                .iter()
                .map(|row| ReplayCommand { theta: row.theta_l, omega: row.omega_l, tau: row.tau_l })
                .collect(),
            source: log.metadata.clone(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.commands.len() as f64 / self.rate
    }
}

/// Playback session parameters.
#[derive(Clone, Debug)]
pub struct MocopySetup {
    pub follower: RobotSetup,
    pub contact: ContactModel,
    /// Number of playback cycles.
    pub repeat: u32,
    /// Length of the position ramp returning to the start pose between
    /// cycles, s.
    pub reset_seconds: f64,
    /// Extra time holding the final command after the last cycle, s.
    pub hold_seconds: f64,
    pub seed: u64,
    pub config_hash: String,
}

impl MocopySetup {
    pub fn new(follower: RobotSetup, contact: ContactModel) -> Self {
        MocopySetup {
            follower,
            contact,
            repeat: 1,
            reset_seconds: 1.0,
            hold_seconds: 0.0,
            seed: 0,
            config_hash: String::new(),
        }
    }
}

/// Run the motion-copying loop. Each tick the follower receives the next
/// recorded command triple and applies the bilateral follower law with the
/// leader signals frozen to the recording; the stream holds its final
/// command once exhausted, and with `repeat > 1` a position ramp returns to
/// the start pose between cycles. Commands never depend on follower state.
///
/// The output log's leader columns hold the commands as issued, the follower
/// columns the simulated response.
pub fn run_motion_copy(stream: &ReplayStream, setup: &MocopySetup) -> Result<MotionLog, SimError> {
    if stream.commands.is_empty() {
        return Err(SimError::BadInput("empty command stream".into()));
    }
    if setup.repeat == 0 {
        return Err(SimError::BadInput("repeat must be at least 1".into()));
    }
    setup.follower.params.validate()?;

    let params = setup.follower.params.clone();
    let truth = setup.follower.mismatch.apply(&params);
    let first = stream.commands[0];
    let mut plant = PlantState::at_rest(first.theta);
    let mut diffs: Vec<PseudoDiff> =
        (0..JOINT_COUNT).map(|i| PseudoDiff::new(params.cutoff[i], CONTROL_DT)).collect();
    for (i, d) in diffs.iter_mut().enumerate() {
        d.init_at(plant.theta[i]);
    }
    let mut observers = ObserverState::new(&params, CONTROL_DT);
    let mut tau_prev = JointVector::ZERO;

    let mut log = MotionLog::new(LogMetadata {
        seed: setup.seed,
        leader_preset: stream.source.leader_preset.clone(),
        follower_preset: setup.follower.preset.clone(),
        config_hash: setup.config_hash.clone(),
        torque_channel: TorqueChannel::Response,
        object_xy: stream.source.object_xy,
    });

    // Build the tick-by-tick command schedule: cycles separated by reset
    // ramps, then the terminal hold.
    let reset_ticks = (setup.reset_seconds * stream.rate).round() as usize;
    let hold_ticks = (setup.hold_seconds * stream.rate).round() as usize;
    let mut schedule: Vec<ReplayCommand> = Vec::new();
    for cycle in 0..setup.repeat {
        if cycle > 0 && reset_ticks > 0 {
            let from = *stream.commands.last().unwrap();
            for k in 0..reset_ticks {
                let alpha = (k + 1) as f64 / reset_ticks as f64;
                schedule.push(ReplayCommand {
                    theta: from.theta + (first.theta - from.theta) * alpha,
                    omega: JointVector::ZERO,
                    tau: JointVector::ZERO,
                });
            }
        }
        schedule.extend(stream.commands.iter().copied());
    }
    let last = *schedule.last().unwrap();
    schedule.extend(std::iter::repeat(last).take(hold_ticks));

    let dt = 1.0 / stream.rate;
    for (tick, command) in schedule.iter().enumerate() {
        let t = tick as f64 * dt;
        let theta = plant.theta;
        let mut omega_hat = JointVector::ZERO;
        for i in 0..JOINT_COUNT {
            omega_hat[i] = diffs[i].update(theta[i]);
        }
        let tau_dis = observers.dob_update(&tau_prev, &omega_hat, &theta, &params);
        let tau_res = observers.rfob_update(&tau_prev, &omega_hat, &theta, &params);

        let own = SideSignals { theta, omega: omega_hat, tau_res_hat: tau_res, tau_dis_hat: tau_dis };
        let frozen_leader = SideSignals {
            theta: command.theta,
            omega: command.omega,
            tau_res_hat: command.tau,
            tau_dis_hat: JointVector::ZERO,
        };
        let tau_ref = side_torque(&own, &frozen_leader, &params);

        log.rows.push(LogRow {
            t,
            theta_l: command.theta,
            omega_l: command.omega,
            tau_l: command.tau,
            theta_f: theta,
            omega_f: omega_hat,
            tau_f: tau_res,
        });

        let contact = contact_torque(&plant, &setup.contact);
        plant = plant_step(&plant, &tau_ref, &contact, dt, &truth)
            .map_err(|e| SimError::NonFinite { tick: tick as u64, what: e.to_string() })?;
        if !plant.is_finite() {
            return Err(SimError::NonFinite { tick: tick as u64, what: "follower state".into() });
        }
        tau_prev = tau_ref;
    }

    Ok(log)
}

/// Per-joint RMS between the replayed and originally recorded follower
/// trajectories, over the overlapping prefix.
pub fn follower_rms(replay: &MotionLog, recording: &MotionLog) -> JointVector {
    let n = replay.rows.len().min(recording.rows.len());
    if n == 0 {
        return JointVector::ZERO;
    }
    let mut acc = JointVector::ZERO;
    for k in 0..n {
        let d = replay.rows[k].theta_f - recording.rows[k].theta_f;
        acc += d.zip_map(&d, |a, b| a * b);
    }
    acc.map(|v| (v / n as f64).sqrt())
}
