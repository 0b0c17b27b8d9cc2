use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::numerics::Matrix;
use crate::systems::Trajectory;

/// What the network is trained to output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formulation {
    /// `s' - s`, added back onto the input state at prediction time.
    Delta,
    /// `s'` directly (the "-S" variants).
    TrueState,
}

impl Formulation {
    pub fn as_str(self) -> &'static str {
        match self {
            Formulation::Delta => "delta",
            Formulation::TrueState => "true_state",
        }
    }
}

/// Flattened `(s, a, s')` transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub states: Matrix,
    pub actions: Matrix,
    pub next_states: Matrix,
}

impl Dataset {
    pub fn new(states: Matrix, actions: Matrix, next_states: Matrix) -> Result<Self> {
        let n = states.rows();
        if actions.rows() != n || next_states.shape() != states.shape() {
            return Err(shape(format!(
                "transition blocks {:?} / {:?} / {:?}",
                states.shape(),
                actions.shape(),
                next_states.shape()
            )));
        }
        Ok(Self {
            states,
            actions,
            next_states,
        })
    }

    pub fn from_trajectories(trajs: &[Trajectory]) -> Result<Self> {
        let ds = trajs.first().map_or(0, Trajectory::state_dim);
        let da = trajs
            .iter()
            .find(|t| !t.actions.is_empty())
            .map_or(0, Trajectory::action_dim);
        let n: usize = trajs.iter().map(Trajectory::horizon).sum();
        if n == 0 {
            return Err(Error::Empty("no transitions in trajectories".into()));
        }
        let mut s = Vec::with_capacity(n * ds);
        let mut a = Vec::with_capacity(n * da);
        let mut sn = Vec::with_capacity(n * ds);
        for traj in trajs {
            for (t, act) in traj.actions.iter().enumerate() {
                if traj.states[t].len() != ds || act.len() != da {
                    return Err(shape("trajectories disagree on state/action width"));
                }
                s.extend_from_slice(&traj.states[t]);
                a.extend_from_slice(act);
                sn.extend_from_slice(&traj.states[t + 1]);
            }
        }
        Self::new(
            Matrix::from_vec(n, ds, s)?,
            Matrix::from_vec(n, da, a)?,
            Matrix::from_vec(n, ds, sn)?,
        )
    }

    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.states.cols()
    }

    pub fn action_dim(&self) -> usize {
        self.actions.cols()
    }

    pub fn target(&self, i: usize, formulation: Formulation) -> Vec<f64> {
        let next = self.next_states.row(i);
        match formulation {
            Formulation::TrueState => next.to_vec(),
            Formulation::Delta => next.iter().zip(self.states.row(i)).map(|(n, s)| n - s).collect(),
        }
    }

    pub fn targets(&self, formulation: Formulation) -> Matrix {
        match formulation {
            Formulation::TrueState => self.next_states.clone(),
            Formulation::Delta => self
                .next_states
                .sub(&self.states)
                .expect("shapes checked at construction"),
        }
    }
}
