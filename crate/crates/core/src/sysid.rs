//! Inverse-dynamics identification from teleoperation command recordings:
//! regressor construction, recursive least squares, and held-out evaluation.
//!
//! The free-motion model per joint is τ = J·θ̈ + D·θ̇ + Φ(θ)·p with the
//! three lumped gravity parameters p = (p1, p2, p3). Every term of the
//! regression — target torque, velocity, gravity regressors — is passed
//! through the same double low-pass chain that produces the filtered
//! acceleration, so the regression equation matches the recorded signal
//! path sample for sample instead of mixing filter orders.

use crate::motionlog::{MotionLog, TorqueChannel};
use crate::observers::{FilterState, PseudoDiff};
use crate::params::{LumpedGravity, RobotParams};
use crate::plant::gravity_torque_lumped;
use thiserror::Error;

/// Default velocity magnitude below which a sample is considered non-moving
/// and excluded, rad/s.
pub const DEFAULT_MOTION_THRESHOLD: f64 = 0.05;

/// Default diagonal of the initial RLS gain matrix.
pub const DEFAULT_INITIAL_GAIN: f64 = 1e8;

#[derive(Debug, Error)]
pub enum SysidError {
    #[error("log torque columns hold {0:?}, identification needs command recordings")]
    WrongChannel(TorqueChannel),
    #[error("log too short: {0} rows")]
    TooShort(usize),
    #[error("dimension mismatch: regressor width {got}, expected {expected}")]
    Dimension { got: usize, expected: usize },
}

/// The four separately excited joint groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JointGroup {
    /// Joints 1-4: right shoulder/elbow, gravity loaded.
    RightUpper,
    /// Joints 5-8: right wrist and gripper, gravity free.
    RightWrist,
    /// Joints 9-12: left shoulder/elbow, gravity loaded.
    LeftUpper,
    /// Joints 13-16: left wrist and gripper, gravity free.
    LeftWrist,
}

impl JointGroup {
    pub const ALL: [JointGroup; 4] =
        [JointGroup::RightUpper, JointGroup::RightWrist, JointGroup::LeftUpper, JointGroup::LeftWrist];

    /// 0-based joint indices of the group.
    pub fn joints(&self) -> [usize; 4] {
        match self {
            JointGroup::RightUpper => [0, 1, 2, 3],
            JointGroup::RightWrist => [4, 5, 6, 7],
            JointGroup::LeftUpper => [8, 9, 10, 11],
            JointGroup::LeftWrist => [12, 13, 14, 15],
        }
    }

    /// Whether the group's torques carry gravity terms.
    pub fn has_gravity(&self) -> bool {
        matches!(self, JointGroup::RightUpper | JointGroup::LeftUpper)
    }

    /// Identified parameter count: J and D per joint, plus (p1, p2, p3) for
    /// gravity-loaded groups.
    pub fn param_count(&self) -> usize {
        if self.has_gravity() {
            11
        } else {
            8
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.param_count());
        for j in self.joints() {
            names.push(format!("J{}", j + 1));
            names.push(format!("D{}", j + 1));
        }
        if self.has_gravity() {
            names.extend(["p1".to_string(), "p2".to_string(), "p3".to_string()]);
        }
        names
    }

    /// Parses the CLI spelling: "1-4", "5-8", "9-12", "13-16".
    pub fn parse(s: &str) -> Option<JointGroup> {
        match s {
            "1-4" => Some(JointGroup::RightUpper),
            "5-8" => Some(JointGroup::RightWrist),
            "9-12" => Some(JointGroup::LeftUpper),
            "13-16" => Some(JointGroup::LeftWrist),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            JointGroup::RightUpper => "1-4",
            JointGroup::RightWrist => "5-8",
            JointGroup::LeftUpper => "9-12",
            JointGroup::LeftWrist => "13-16",
        }
    }
}

/// One sample of the regression: coefficients of the identified parameters
/// and the (filtered) measured torque command they should explain.
#[derive(Clone, Debug)]
pub struct RegressorRow {
    /// 0-based joint the row belongs to.
    pub joint: usize,
    pub regressor: Vec<f64>,
    pub target: f64,
}

/// All rows surviving the motion filter, time-major.
#[derive(Clone, Debug)]
pub struct RegressorSet {
    pub group: JointGroup,
    pub rows: Vec<RegressorRow>,
    /// Samples dropped by the motion filter, per group joint.
    pub dropped: [usize; 4],
}

#[derive(Clone, Copy, Debug)]
pub struct RegressorOptions {
    /// |ω| below this drops the sample, rad/s.
    pub motion_threshold: f64,
}

impl Default for RegressorOptions {
    fn default() -> Self {
        RegressorOptions { motion_threshold: DEFAULT_MOTION_THRESHOLD }
    }
}

/// Builds the regression for one joint group from a free-motion command
/// recording (follower side). Returns an empty row set, not an error, when
/// nothing survives the motion filter.
pub fn build_regressor(
    log: &MotionLog,
    group: JointGroup,
    params: &RobotParams,
    opts: &RegressorOptions,
) -> Result<RegressorSet, SysidError> {
    if log.metadata.torque_channel != TorqueChannel::Command {
        return Err(SysidError::WrongChannel(log.metadata.torque_channel));
    }
    let n = log.rows.len();
    if n < 3 {
        return Err(SysidError::TooShort(n));
    }
    let dt = log.dt();
    let joints = group.joints();
    let width = group.param_count();

    // Per-joint filtered series.
    struct Series {
        accel: Vec<f64>,    // double-filtered acceleration, index k holds H²a[k-1]
        omega_f: Vec<f64>,  // H²·ω
        tau_f: Vec<f64>,    // H²·τ
        omega_raw: Vec<f64>,
        phi_f: [Vec<f64>; 3], // H²·Φ columns (gravity groups only)
    }

    let unit_lumps = [
        LumpedGravity { p1: 1.0, p2: 0.0, p3: 0.0, g: params.gravity.g },
        LumpedGravity { p1: 0.0, p2: 1.0, p3: 0.0, g: params.gravity.g },
        LumpedGravity { p1: 0.0, p2: 0.0, p3: 1.0, g: params.gravity.g },
    ];

    let mut series: Vec<Series> = Vec::with_capacity(4);
    for &j in &joints {
        let cutoff = params.cutoff[j];
        let mut accel_diff = PseudoDiff::new(cutoff, dt);
        let mut omega_lpf = FilterState::new(cutoff, dt);
        let mut tau_lpf = [FilterState::new(cutoff, dt), FilterState::new(cutoff, dt)];
        let mut phi_lpf: Vec<[FilterState; 2]> = (0..3)
            .map(|_| [FilterState::new(cutoff, dt), FilterState::new(cutoff, dt)])
            .collect();

        let mut s = Series {
            accel: Vec::with_capacity(n),
            omega_f: Vec::with_capacity(n),
            tau_f: Vec::with_capacity(n),
            omega_raw: Vec::with_capacity(n),
            phi_f: [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)],
        };
        accel_diff.init_at(log.rows[0].omega_f[j]);
        for row in &log.rows {
            let omega = row.omega_f[j];
            s.omega_raw.push(omega);
            s.accel.push(accel_diff.update(omega));
            // The logged velocity is already once-filtered, one more pass
            // matches the double-filtered acceleration.
            s.omega_f.push(omega_lpf.update(omega));
            let tau_once = tau_lpf[0].update(row.tau_f[j]);
            s.tau_f.push(tau_lpf[1].update(tau_once));
            if group.has_gravity() {
                for (p, lump) in unit_lumps.iter().enumerate() {
                    let phi = gravity_torque_lumped(&row.theta_f, lump)[j];
                    let phi_once = phi_lpf[p][0].update(phi);
                    s.phi_f[p].push(phi_lpf[p][1].update(phi_once));
                }
            }
        }
        series.push(s);
    }

    let mut rows = Vec::new();
    let mut dropped = [0usize; 4];
    for m in 0..n - 1 {
        for (jj, &j) in joints.iter().enumerate() {
            let s = &series[jj];
            if s.omega_raw[m].abs() < opts.motion_threshold {
                dropped[jj] += 1;
                continue;
            }
            let mut regressor = vec![0.0; width];
            regressor[2 * jj] = s.accel[m + 1];
            regressor[2 * jj + 1] = s.omega_f[m];
            if group.has_gravity() {
                for p in 0..3 {
                    regressor[8 + p] = s.phi_f[p][m];
                }
            }
            rows.push(RegressorRow { joint: j, regressor, target: s.tau_f[m] });
        }
    }
    Ok(RegressorSet { group, rows, dropped })
}

/// Recursive least squares with exponential forgetting.
#[derive(Clone, Debug)]
pub struct RlsState {
    pub estimate: Vec<f64>,
    /// Covariance-like gain matrix, row-major.
    pub gain: Vec<f64>,
    pub forgetting: f64,
    /// Updates skipped because the innovation denominator vanished.
    pub skipped: u64,
    pub updates: u64,
    dim: usize,
}

impl RlsState {
    pub fn new(dim: usize, forgetting: f64) -> Self {
        Self::with_initial_gain(dim, forgetting, DEFAULT_INITIAL_GAIN)
    }

    pub fn with_initial_gain(dim: usize, forgetting: f64, initial_gain: f64) -> Self {
        assert!(forgetting > 0.0 && forgetting <= 1.0);
        let mut gain = vec![0.0; dim * dim];
        for i in 0..dim {
            gain[i * dim + i] = initial_gain;
        }
        RlsState { estimate: vec![0.0; dim], gain, forgetting, skipped: 0, updates: 0, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The gain matrix must stay symmetric with positive diagonal; it is
    /// re-symmetrized every update, so this only fails on numerical
    /// breakdown.
    pub fn gain_is_spd_like(&self) -> bool {
        (0..self.dim).all(|i| self.gain[i * self.dim + i] > 0.0)
    }
}

/// One RLS update. Skips (and counts) samples whose innovation denominator
/// is below 1e-12.
pub fn rls_update(state: &mut RlsState, row: &RegressorRow) -> Result<(), SysidError> {
    let d = state.dim;
    if row.regressor.len() != d {
        return Err(SysidError::Dimension { got: row.regressor.len(), expected: d });
    }
    let phi = &row.regressor;
    // P·φ
    let mut p_phi = vec![0.0; d];
    for i in 0..d {
        let mut acc = 0.0;
        for j in 0..d {
            acc += state.gain[i * d + j] * phi[j];
        }
        p_phi[i] = acc;
    }
    let denom = state.forgetting + phi.iter().zip(&p_phi).map(|(a, b)| a * b).sum::<f64>();
    if denom.abs() < 1e-12 {
        state.skipped += 1;
        return Ok(());
    }
    let innovation =
        row.target - phi.iter().zip(&state.estimate).map(|(a, b)| a * b).sum::<f64>();
    for i in 0..d {
        state.estimate[i] += p_phi[i] / denom * innovation;
    }
    // P ← (P − (Pφ)(Pφ)ᵀ/denom)/λ, symmetrized.
    for i in 0..d {
        for j in 0..d {
            state.gain[i * d + j] =
                (state.gain[i * d + j] - p_phi[i] * p_phi[j] / denom) / state.forgetting;
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (state.gain[i * d + j] + state.gain[j * d + i]);
            state.gain[i * d + j] = avg;
            state.gain[j * d + i] = avg;
        }
    }
    debug_assert!(state.gain_is_spd_like());
    state.updates += 1;
    Ok(())
}

/// Identified parameters of one group.
#[derive(Clone, Debug)]
pub struct IdentifiedParams {
    pub group: JointGroup,
    pub estimate: Vec<f64>,
    pub names: Vec<String>,
}

impl IdentifiedParams {
    pub fn from_estimate(group: JointGroup, estimate: Vec<f64>) -> Self {
        IdentifiedParams { group, names: group.param_names(), estimate }
    }

    /// Inertia of a 0-based joint index, if it belongs to the group.
    pub fn inertia(&self, joint: usize) -> Option<f64> {
        let pos = self.group.joints().iter().position(|&j| j == joint)?;
        Some(self.estimate[2 * pos])
    }

    pub fn viscous(&self, joint: usize) -> Option<f64> {
        let pos = self.group.joints().iter().position(|&j| j == joint)?;
        Some(self.estimate[2 * pos + 1])
    }

    /// Lumped gravity parameters, for gravity-loaded groups.
    pub fn lumped_gravity(&self, g: f64) -> Option<LumpedGravity> {
        if !self.group.has_gravity() {
            return None;
        }
        Some(LumpedGravity {
            p1: self.estimate[8],
            p2: self.estimate[9],
            p3: self.estimate[10],
            g,
        })
    }

    /// Merge the identified values into a copy of `base`: per-joint J and D,
    /// and for gravity groups a gravity model reproducing the identified
    /// lumps exactly.
    pub fn to_robot_params(&self, base: &RobotParams) -> RobotParams {
        let mut out = base.clone();
        for (pos, &j) in self.group.joints().iter().enumerate() {
            out.inertia[j] = self.estimate[2 * pos];
            out.viscous[j] = self.estimate[2 * pos + 1];
        }
        if let Some(lumped) = self.lumped_gravity(base.gravity.g) {
            out.gravity = base.gravity.with_lumped(&lumped);
        }
        out
    }
}

/// The reference parameter vector a ground-truth `RobotParams` implies for a
/// group, in the identified layout.
pub fn param_vector_from(params: &RobotParams, group: JointGroup) -> Vec<f64> {
    let mut v = Vec::with_capacity(group.param_count());
    for j in group.joints() {
        v.push(params.inertia[j]);
        v.push(params.viscous[j]);
    }
    if group.has_gravity() {
        let lumped = params.gravity.lumped();
        v.extend([lumped.p1, lumped.p2, lumped.p3]);
    }
    v
}

/// Convenience: full sequential pass over a command recording.
pub fn identify(
    log: &MotionLog,
    group: JointGroup,
    params: &RobotParams,
    opts: &RegressorOptions,
    forgetting: f64,
) -> Result<(IdentifiedParams, RlsState), SysidError> {
    let set = build_regressor(log, group, params, opts)?;
    let mut state = RlsState::new(group.param_count(), forgetting);
    for row in &set.rows {
        rls_update(&mut state, row)?;
    }
    Ok((IdentifiedParams::from_estimate(group, state.estimate.clone()), state))
}

/// Per-joint RMS torque error of a parameter vector on a regressor set.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub group: JointGroup,
    /// (0-based joint, RMS, sample count)
    pub per_joint: Vec<(usize, f64, usize)>,
    pub overall_rms: f64,
    pub samples: usize,
}

/// Evaluates a parameter vector on a held-out command recording: RMS of
/// target minus regressor·estimate over moving samples only.
pub fn evaluate_params(
    estimate: &[f64],
    test_log: &MotionLog,
    group: JointGroup,
    params: &RobotParams,
    opts: &RegressorOptions,
) -> Result<EvalReport, SysidError> {
    if estimate.len() != group.param_count() {
        return Err(SysidError::Dimension { got: estimate.len(), expected: group.param_count() });
    }
    let set = build_regressor(test_log, group, params, opts)?;
    let mut sums: std::collections::BTreeMap<usize, (f64, usize)> = std::collections::BTreeMap::new();
    let mut total = 0.0;
    for row in &set.rows {
        let predicted: f64 =
            row.regressor.iter().zip(estimate).map(|(a, b)| a * b).sum();
        let err = row.target - predicted;
        let entry = sums.entry(row.joint).or_insert((0.0, 0));
        entry.0 += err * err;
        entry.1 += 1;
        total += err * err;
    }
    let samples: usize = sums.values().map(|(_, c)| c).sum();
    let per_joint = sums
        .into_iter()
        .map(|(j, (sq, c))| (j, (sq / c.max(1) as f64).sqrt(), c))
        .collect();
    Ok(EvalReport {
        group,
        per_joint,
        overall_rms: if samples > 0 { (total / samples as f64).sqrt() } else { 0.0 },
        samples,
    })
}

/// Splits a recording into a training head and a re-gridded test tail of the
/// given length.
pub fn split_for_test(log: &MotionLog, test_seconds: f64) -> (MotionLog, MotionLog) {
    let test_rows = ((test_seconds * log.rate).round() as usize).min(log.rows.len());
    let split = log.rows.len() - test_rows;
    let mut train = log.clone();
    let mut test = log.clone();
    train.rows.truncate(split);
    test.rows = log.rows[split..].to_vec();
    let dt = log.dt();
    for (k, row) in test.rows.iter_mut().enumerate() {
        row.t = k as f64 * dt;
    }
    (train, test)
}
