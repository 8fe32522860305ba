//! Signal-processing blocks of the acceleration-control loop: first-order
//! low-pass filters, band-limited pseudo-differentiation, and the
//! disturbance / reaction-force observers built on them.
//!
//! The velocity-form observer per joint filters τ + f_C·J·ω and subtracts
//! f_C·J·ω again; at steady state this recovers the lumped torque the
//! nominal model does not explain. The DOB runs on gravity-compensated
//! torque and reports model gravity plus the filtered remainder, the RFOB
//! runs on the raw torque command and strips modeled friction and gravity,
//! leaving the external (contact) torque.

use crate::joints::{JointVector, JOINT_COUNT};
use crate::params::RobotParams;
use crate::plant::gravity_torque;

/// Discrete realization of the first-order filters. Backward Euler is the
/// default; Tustin is available behind this switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Discretization {
    #[default]
    BackwardEuler,
    Tustin,
}

/// First-order discrete low-pass with unity DC gain.
#[derive(Clone, Copy, Debug)]
pub struct FilterState {
    prev_output: f64,
    prev_input: f64,
    /// Cutoff, rad/s.
    pub cutoff: f64,
    /// Sample period, s.
    pub dt: f64,
    pub method: Discretization,
}

impl FilterState {
    pub fn new(cutoff: f64, dt: f64) -> Self {
        assert!(cutoff > 0.0 && dt > 0.0);
        FilterState {
            prev_output: 0.0,
            prev_input: 0.0,
            cutoff,
            dt,
            method: Discretization::BackwardEuler,
        }
    }

    pub fn with_method(cutoff: f64, dt: f64, method: Discretization) -> Self {
        FilterState { method, ..FilterState::new(cutoff, dt) }
    }

    /// Force the internal state to a steady-state operating point, as if the
    /// filter had seen `value` forever.
    pub fn reset_to(&mut self, value: f64) {
        self.prev_output = value;
        self.prev_input = value;
    }

    pub fn output(&self) -> f64 {
        self.prev_output
    }

    /// One filter update; returns the new output.
    pub fn update(&mut self, x: f64) -> f64 {
        let k = self.dt * self.cutoff;
        let y = match self.method {
            Discretization::BackwardEuler => (self.prev_output + k * x) / (1.0 + k),
            Discretization::Tustin => {
                ((2.0 - k) * self.prev_output + k * (x + self.prev_input)) / (2.0 + k)
            }
        };
        self.prev_input = x;
        self.prev_output = y;
        y
    }
}

/// One low-pass update, the free-function form of [`FilterState::update`].
pub fn low_pass(state: &mut FilterState, x: f64) -> f64 {
    state.update(x)
}

/// Band-limited differentiator s·f_C/(s + f_C), realized as
/// f_C·(x − lowpass(x)).
#[derive(Clone, Copy, Debug)]
pub struct PseudoDiff {
    lpf: FilterState,
}

impl PseudoDiff {
    pub fn new(cutoff: f64, dt: f64) -> Self {
        PseudoDiff { lpf: FilterState::new(cutoff, dt) }
    }

    /// Start from a known initial sample so the first output is zero instead
    /// of a spike proportional to it.
    pub fn init_at(&mut self, x0: f64) {
        self.lpf.reset_to(x0);
    }

    pub fn update(&mut self, x: f64) -> f64 {
        let filtered = self.lpf.update(x);
        self.lpf.cutoff * (x - filtered)
    }
}

/// One pseudo-differentiation update, the free-function form of
/// [`PseudoDiff::update`].
pub fn pseudo_diff(state: &mut PseudoDiff, x: f64) -> f64 {
    state.update(x)
}

/// Per-robot observer block: one DOB and one RFOB filter per joint plus the
/// latest estimates.
#[derive(Clone, Debug)]
pub struct ObserverState {
    dob: Vec<FilterState>,
    rfob: Vec<FilterState>,
    /// Latest disturbance estimate (gravity compensation + DOB output), N·m.
    pub tau_dis_hat: JointVector,
    /// Latest reaction-torque estimate, N·m.
    pub tau_res_hat: JointVector,
}

impl ObserverState {
    pub fn new(params: &RobotParams, dt: f64) -> Self {
        let make = |_: usize| (0..JOINT_COUNT).map(|i| FilterState::new(params.cutoff[i], dt));
        ObserverState {
            dob: make(0).collect(),
            rfob: make(1).collect(),
            tau_dis_hat: JointVector::ZERO,
            tau_res_hat: JointVector::ZERO,
        }
    }

    /// Seed the filters with their standstill fixed point: the robot held
    /// at `theta` with zero velocity and the gravity-balancing torque
    /// applied. Avoids a spurious sag and reaction-force spike on loop
    /// start.
    pub fn init_at_hold(&mut self, theta: &JointVector, params: &RobotParams) {
        let gravity = gravity_torque(theta, &params.gravity);
        for i in 0..JOINT_COUNT {
            self.dob[i].reset_to(0.0);
            self.rfob[i].reset_to(gravity[i]);
        }
        self.tau_dis_hat = gravity;
        self.tau_res_hat = JointVector::ZERO;
    }

    /// Disturbance estimate update. Per joint:
    /// τ̂_dis = g_model(θ) + LPF((τ_ref − g_model) + f_C·J·ω) − f_C·J·ω.
    /// The observer loop runs on gravity-compensated torque; the model
    /// gravity is added back outside the filter.
    pub fn dob_update(
        &mut self,
        tau_ref: &JointVector,
        omega: &JointVector,
        theta: &JointVector,
        params: &RobotParams,
    ) -> JointVector {
        let gravity = gravity_torque(theta, &params.gravity);
        for i in 0..JOINT_COUNT {
            let momentum_term = params.cutoff[i] * params.inertia[i] * omega[i];
            let filtered = self.dob[i].update(tau_ref[i] - gravity[i] + momentum_term);
            self.tau_dis_hat[i] = gravity[i] + filtered - momentum_term;
        }
        self.tau_dis_hat
    }

    /// Reaction-torque estimate update. Per joint:
    /// τ̂_res = LPF(τ_ref + f_C·J·ω) − f_C·J·ω − D·ω − g_model(θ).
    pub fn rfob_update(
        &mut self,
        tau_ref: &JointVector,
        omega: &JointVector,
        theta: &JointVector,
        params: &RobotParams,
    ) -> JointVector {
        let gravity = gravity_torque(theta, &params.gravity);
        for i in 0..JOINT_COUNT {
            let momentum_term = params.cutoff[i] * params.inertia[i] * omega[i];
            let filtered = self.rfob[i].update(tau_ref[i] + momentum_term);
            self.tau_res_hat[i] =
                filtered - momentum_term - params.viscous[i] * omega[i] - gravity[i];
        }
        self.tau_res_hat
    }
}
