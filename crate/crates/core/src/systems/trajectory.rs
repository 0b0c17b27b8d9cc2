use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::StateSpaceSpec;
use super::policy::{Policy, PolicySpec};
use super::{Cartpole, Dynamics, LinearSystem, LorenzParams};
use crate::error::{invalid, Error, Result};
use crate::numerics::{derive_seed, Rng};

/// States beyond this magnitude count as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e12;

/// One episode: `states.len() == actions.len() + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub system_seed: u64,
    pub policy_seed: u64,
    /// Set when the rollout was cut short by [`DIVERGENCE_BOUND`].
    #[serde(default)]
    pub diverged: bool,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn action_dim(&self) -> usize {
        self.actions.first().map_or(0, Vec::len)
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.states[0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialState {
    StandardNormal,
    Uniform { lo: f64, hi: f64 },
    Fixed(Vec<f64>),
}

impl InitialState {
    pub fn sample(&self, dim: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        match self {
            InitialState::StandardNormal => Ok((0..dim).map(|_| rng.normal(0.0, 1.0)).collect()),
            InitialState::Uniform { lo, hi } => Ok((0..dim).map(|_| rng.uniform(*lo, *hi)).collect()),
            InitialState::Fixed(s) if s.len() == dim => Ok(s.clone()),
            InitialState::Fixed(s) => Err(invalid(format!(
                "fixed initial state of length {} for dim {dim}",
                s.len()
            ))),
        }
    }
}

/// Which environment produces the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SystemSpec {
    /// A state-space family; `resample` draws fresh `(A, B)` per trajectory.
    StateSpace { spec: StateSpaceSpec, resample: bool },
    Lorenz(LorenzParams),
    Cartpole(Cartpole),
}

impl SystemSpec {
    pub fn state_dim(&self) -> usize {
        match self {
            SystemSpec::StateSpace { spec, .. } => spec.dim,
            SystemSpec::Lorenz(_) => 3,
            SystemSpec::Cartpole(_) => 4,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            SystemSpec::StateSpace { spec, .. } => spec.action_dim,
            SystemSpec::Lorenz(_) => 0,
            SystemSpec::Cartpole(_) => 1,
        }
    }
}

enum Env {
    Linear(LinearSystem),
    Lorenz(LorenzParams),
    Cartpole(Cartpole),
}

impl Env {
    fn dynamics(&self) -> &dyn Dynamics {
        match self {
            Env::Linear(s) => s,
            Env::Lorenz(p) => p,
            Env::Cartpole(c) => c,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub system: SystemSpec,
    pub policy: PolicySpec,
    pub init: InitialState,
    pub n_traj: usize,
    pub horizon: usize,
}

impl DatasetSpec {
    /// Default state-space recipe: fresh system per trajectory, `s0 ~ N(0, I)`,
    /// uniform random actions in `[-1, 1)`.
    pub fn state_space(spec: StateSpaceSpec, n_traj: usize, horizon: usize) -> Self {
        let action_dim = spec.action_dim;
        Self {
            system: SystemSpec::StateSpace { spec, resample: true },
            policy: PolicySpec::random_actions(action_dim),
            init: InitialState::StandardNormal,
            n_traj,
            horizon,
        }
    }

    pub fn lorenz(params: LorenzParams, init_lo: f64, init_hi: f64, n_traj: usize, horizon: usize) -> Self {
        Self {
            system: SystemSpec::Lorenz(params),
            policy: PolicySpec::Fixed(Policy::Constant(Vec::new())),
            init: InitialState::Uniform { lo: init_lo, hi: init_hi },
            n_traj,
            horizon,
        }
    }

    pub fn cartpole_lqr(cartpole: Cartpole, n_traj: usize, horizon: usize) -> Self {
        Self {
            system: SystemSpec::Cartpole(cartpole),
            policy: PolicySpec::varied_lqr(cartpole),
            init: InitialState::Uniform { lo: -0.2, hi: 0.2 },
            n_traj,
            horizon,
        }
    }
}

/// Rolls `dynamics` forward under `policy` from `s0`, truncating (and
/// flagging) the trajectory if the state leaves [`DIVERGENCE_BOUND`].
pub fn simulate(
    dynamics: &dyn Dynamics,
    policy: &Policy,
    s0: Vec<f64>,
    horizon: usize,
    rng: &mut Rng,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut diverged = false;
    states.push(s0);
    for _ in 0..horizon {
        let s = states.last().expect("non-empty");
        let a = policy.act(s, rng)?;
        let next = dynamics.step(s, &a, rng)?;
        if next.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
            diverged = true;
            break;
        }
        actions.push(a);
        states.push(next);
    }
    Ok(Trajectory {
        states,
        actions,
        system_seed: 0,
        policy_seed: 0,
        diverged,
    })
}

/// Generates `spec.n_traj` trajectories. Trajectory `i` draws everything
/// from streams derived from `(seed, i)`, so the output is independent of
/// scheduling.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64) -> Result<Vec<Trajectory>> {
    if spec.n_traj == 0 || spec.horizon == 0 {
        return Err(invalid("dataset needs at least one trajectory and one step"));
    }
    let shared = match &spec.system {
        SystemSpec::StateSpace { spec: ss, resample: false } => {
            Some(ss.sample(&mut Rng::new(derive_seed(seed, u64::MAX)))?)
        }
        _ => None,
    };
    (0..spec.n_traj)
        .into_par_iter()
        .map(|i| {
            let traj_seed = derive_seed(seed, i as u64);
            let system_seed = derive_seed(traj_seed, 0);
            let policy_seed = derive_seed(traj_seed, 1);
            let env = match (&spec.system, &shared) {
                (_, Some(sys)) => Env::Linear(sys.clone()),
                (SystemSpec::StateSpace { spec: ss, .. }, None) => {
                    Env::Linear(ss.sample(&mut Rng::new(system_seed))?)
                }
                (SystemSpec::Lorenz(p), None) => {
                    p.validate()?;
                    Env::Lorenz(*p)
                }
                (SystemSpec::Cartpole(c), None) => {
                    c.validate()?;
                    Env::Cartpole(*c)
                }
            };
            let policy = spec.policy.instantiate(policy_seed)?;
            let mut rng = Rng::new(derive_seed(traj_seed, 2));
            let dynamics = env.dynamics();
            let s0 = spec.init.sample(dynamics.state_dim(), &mut rng)?;
            let mut traj = simulate(dynamics, &policy, s0, spec.horizon, &mut rng)?;
            traj.system_seed = match &env {
                Env::Linear(sys) => sys.seed,
                _ => system_seed,
            };
            traj.policy_seed = policy_seed;
            Ok(traj)
        })
        .collect()
}

/// Lorenz trajectories with every initial coordinate drawn from
/// `U(init_lo, init_hi)`.
pub fn generate_lorenz_dataset(
    init_lo: f64,
    init_hi: f64,
    n_traj: usize,
    length: usize,
    params: &LorenzParams,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if !(init_lo < init_hi) {
        return Err(invalid(format!("initial range [{init_lo}, {init_hi})")));
    }
    generate_dataset(&DatasetSpec::lorenz(*params, init_lo, init_hi, n_traj, length), seed)
}

/// Writes trajectories as `traj_id,t,s_0..,a_0..` with 17 significant digits.
/// The final row of each trajectory leaves the action fields empty.
pub fn write_trajectories_csv<W: Write>(out: W, trajs: &[Trajectory]) -> Result<()> {
    let ds = trajs.first().map_or(0, Trajectory::state_dim);
    let da = trajs
        .iter()
        .find(|t| !t.actions.is_empty())
        .map_or(0, Trajectory::action_dim);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["traj_id".to_string(), "t".to_string()];
    header.extend((0..ds).map(|i| format!("s_{i}")));
    header.extend((0..da).map(|i| format!("a_{i}")));
    w.write_record(&header)?;
    for (id, traj) in trajs.iter().enumerate() {
        for (t, s) in traj.states.iter().enumerate() {
            let mut row = vec![id.to_string(), t.to_string()];
            row.extend(s.iter().map(|v| format_float(*v)));
            match traj.actions.get(t) {
                Some(a) => row.extend(a.iter().map(|v| format_float(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), da)),
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectories_csv<R: Read>(input: R) -> Result<Vec<Trajectory>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let ds = header.iter().filter(|h| h.starts_with("s_")).count();
    let da = header.iter().filter(|h| h.starts_with("a_")).count();
    if header.len() != 2 + ds + da {
        return Err(Error::Parse(format!("unexpected trajectory header {header:?}")));
    }
    let mut out: Vec<Trajectory> = Vec::new();
    let mut current: Option<usize> = None;
    for rec in r.records() {
        let rec = rec?;
        let id: usize = parse_field(&rec[0])?;
        if current != Some(id) {
            out.push(Trajectory {
                states: Vec::new(),
                actions: Vec::new(),
                system_seed: 0,
                policy_seed: 0,
                diverged: false,
            });
            current = Some(id);
        }
        let traj = out.last_mut().expect("pushed above");
        let s = (0..ds).map(|i| parse_field(&rec[2 + i])).collect::<Result<Vec<f64>>>()?;
        traj.states.push(s);
        let raw: Vec<&str> = (0..da).map(|i| &rec[2 + ds + i]).collect();
        if da > 0 && raw.iter().all(|f| !f.is_empty()) {
            traj.actions
                .push(raw.iter().map(|f| parse_field(f)).collect::<Result<Vec<f64>>>()?);
        } else if da == 0 {
            traj.actions.push(Vec::new());
        }
    }
    // actionless systems: every row pushed an empty action, drop the extra
    for traj in &mut out {
        if da == 0 {
            traj.actions.pop();
        }
        if traj.states.len() != traj.actions.len() + 1 {
            return Err(Error::Parse(format!(
                "trajectory with {} states and {} actions",
                traj.states.len(),
                traj.actions.len()
            )));
        }
    }
    Ok(out)
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_field<T: std::str::FromStr>(f: &str) -> Result<T> {
    f.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad numeric field {f:?}")))
}
