//! `(cos, sin)` encoding of angular state coordinates.

use std::f64::consts::TAU;

use crate::error::{invalid, shape, Result};
use crate::systems::Trajectory;

fn check_indices(len: usize, idx: &[usize]) -> Result<()> {
    if idx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(format!("angle indices {idx:?} must be strictly increasing")));
    }
    if idx.last().is_some_and(|&i| i >= len) {
        return Err(shape(format!("angle index {:?} out of range for width {len}", idx.last())));
    }
    Ok(())
}

/// Replaces each flagged coordinate `theta` with `(cos theta, sin theta)`.
pub fn expand_angles(s: &[f64], angle_indices: &[usize]) -> Result<Vec<f64>> {
    check_indices(s.len(), angle_indices)?;
    let mut out = Vec::with_capacity(s.len() + angle_indices.len());
    let mut flagged = angle_indices.iter().peekable();
    for (i, &v) in s.iter().enumerate() {
        if flagged.next_if_eq(&&i).is_some() {
            out.push(v.cos());
            out.push(v.sin());
        } else {
            out.push(v);
        }
    }
    Ok(out)
}

/// Inverse of [`expand_angles`]; angles come back in `[0, 2pi)`.
/// `angle_indices` refer to the collapsed layout.
pub fn collapse_angles(expanded: &[f64], angle_indices: &[usize]) -> Result<Vec<f64>> {
    let width = expanded
        .len()
        .checked_sub(angle_indices.len())
        .ok_or_else(|| shape("expanded vector shorter than its angle count"))?;
    check_indices(width, angle_indices)?;
    let mut out = Vec::with_capacity(width);
    let mut flagged = angle_indices.iter().peekable();
    let mut j = 0;
    for i in 0..width {
        if flagged.next_if_eq(&&i).is_some() {
            let (c, s) = (expanded[j], expanded[j + 1]);
            if c.hypot(s) < 1e-6 {
                return Err(invalid(format!("(cos, sin) = ({c}, {s}) has no direction")));
            }
            let mut theta = s.atan2(c);
            if theta < 0.0 {
                theta += TAU;
            }
            if theta >= TAU {
                theta = 0.0;
            }
            out.push(theta);
            j += 2;
        } else {
            out.push(expanded[j]);
            j += 1;
        }
    }
    Ok(out)
}

/// Expands every state of a trajectory; actions are left alone.
pub fn expand_trajectory(traj: &Trajectory, angle_indices: &[usize]) -> Result<Trajectory> {
    let states = traj
        .states
        .iter()
        .map(|s| expand_angles(s, angle_indices))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        states,
        ..traj.clone()
    })
}
