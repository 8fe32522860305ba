//! Joint indexing conventions and the 19-wide joint vector.
//!
//! Joints are numbered 1..=19 in configs, CSV headers and CLI flags:
//! right arm 1-8, left arm 9-16, torso/head 17-19, grippers at 8 and 16.
//! In code everything is 0-based (joint n lives at index n-1).

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

/// Number of joints of the simulated manipulators.
pub const JOINT_COUNT: usize = 19;

/// 0-based index range of the right arm (joints 1-8).
pub const RIGHT_ARM: std::ops::Range<usize> = 0..8;
/// 0-based index range of the left arm (joints 9-16).
pub const LEFT_ARM: std::ops::Range<usize> = 8..16;
/// 0-based index range of torso and head (joints 17-19).
pub const TORSO_HEAD: std::ops::Range<usize> = 16..19;
/// 0-based index of the right gripper (joint 8).
pub const RIGHT_GRIPPER: usize = 7;
/// 0-based index of the left gripper (joint 16).
pub const LEFT_GRIPPER: usize = 15;

/// Fixed-size real vector with one entry per joint. Used for angles (rad),
/// velocities (rad/s) and torques (N·m).
#[derive(Clone, Copy, PartialEq)]
pub struct JointVector(pub [f64; JOINT_COUNT]);

impl JointVector {
    pub const ZERO: JointVector = JointVector([0.0; JOINT_COUNT]);

    pub fn splat(value: f64) -> Self {
        JointVector([value; JOINT_COUNT])
    }

    pub fn from_fn(mut f: impl FnMut(usize) -> f64) -> Self {
        let mut out = [0.0; JOINT_COUNT];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f(i);
        }
        JointVector(out)
    }

    pub fn from_slice(values: &[f64]) -> Option<Self> {
        if values.len() != JOINT_COUNT {
            return None;
        }
        let mut out = [0.0; JOINT_COUNT];
        out.copy_from_slice(values);
        Some(JointVector(out))
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        JointVector::from_fn(|i| f(self.0[i]))
    }

    pub fn zip_map(&self, other: &JointVector, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        JointVector::from_fn(|i| f(self.0[i], other.0[i]))
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Default for JointVector {
    fn default() -> Self {
        JointVector::ZERO
    }
}

impl fmt::Debug for JointVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl Index<usize> for JointVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for JointVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for JointVector {
    type Output = JointVector;
    fn add(self, rhs: JointVector) -> JointVector {
        self.zip_map(&rhs, |a, b| a + b)
    }
}

impl AddAssign for JointVector {
    fn add_assign(&mut self, rhs: JointVector) {
        *self = *self + rhs;
    }
}

impl Sub for JointVector {
    type Output = JointVector;
    fn sub(self, rhs: JointVector) -> JointVector {
        self.zip_map(&rhs, |a, b| a - b)
    }
}

impl Neg for JointVector {
    type Output = JointVector;
    fn neg(self) -> JointVector {
        self.map(|v| -v)
    }
}

impl Mul<f64> for JointVector {
    type Output = JointVector;
    fn mul(self, rhs: f64) -> JointVector {
        self.map(|v| v * rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_ranges_cover_all_joints() {
        assert_eq!(RIGHT_ARM.len() + LEFT_ARM.len() + TORSO_HEAD.len(), JOINT_COUNT);
        assert!(RIGHT_ARM.contains(&RIGHT_GRIPPER));
        assert!(LEFT_ARM.contains(&LEFT_GRIPPER));
    }

    #[test]
    fn arithmetic_is_elementwise() {
        let a = JointVector::from_fn(|i| i as f64);
        let b = JointVector::splat(2.0);
        let c = a + b * 3.0;
        assert_eq!(c[0], 6.0);
        assert_eq!(c[18], 24.0);
        assert_eq!((a - a).max_abs(), 0.0);
    }

    #[test]
    fn finiteness_check() {
        let mut v = JointVector::ZERO;
        assert!(v.is_finite());
        v[7] = f64::NAN;
        assert!(!v.is_finite());
    }
}
