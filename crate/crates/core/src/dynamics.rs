//! Sampled-data double-integrator agents.
//!
//! With sampling period `T` and zero-order-hold inputs every agent evolves as
//!
//! ```text
//! x[k+1] = x[k] + T v[k] + (T^2/2) u[k]
//! v[k+1] = v[k] + T u[k]
//! ```
//!
//! Positions are stored offset-adjusted (`x_hat = x - delta`), so formation
//! offsets only matter when converting back to raw positions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Digraph, NodeSet};

/// Relative slack on the closed gain interval, so boundary parameters survive rounding.
const GAIN_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Sampling period `T`.
    pub period: f64,
    /// Velocity damping gain.
    pub alpha: f64,
    /// Agent count.
    pub agents: usize,
    /// Number of extreme neighbours discarded on each side by the filter.
    pub f: usize,
}

impl SimParams {
    pub fn new(period: f64, alpha: f64, agents: usize, f: usize) -> Self {
        SimParams {
            period,
            alpha,
            agents,
            f,
        }
    }

    /// `T - alpha T^2 / 2`, the gain from velocity to position over one step
    /// under pure damping.
    pub fn velocity_gain(&self) -> f64 {
        self.period - self.alpha * self.period * self.period / 2.0
    }

    /// Errors unless the gain condition `1 + T^2/2 <= alpha T <= 2 - T^2/2` holds.
    pub fn ensure_valid(&self) -> Result<()> {
        if validate_params(self)? {
            Ok(())
        } else {
            let t = self.period;
            Err(Error::Params(format!(
                "alpha*T = {} outside [{}, {}] (T = {t}, alpha = {})",
                self.alpha * t,
                1.0 + t * t / 2.0,
                2.0 - t * t / 2.0,
                self.alpha
            )))
        }
    }
}

/// Checks `1 + T^2/2 <= alpha T <= 2 - T^2/2` (closed interval).
pub fn validate_params(p: &SimParams) -> Result<bool> {
    if !(p.period > 0.0 && p.period.is_finite()) {
        return Err(Error::input(format!("sampling period must be positive, got {}", p.period)));
    }
    if !(p.alpha > 0.0 && p.alpha.is_finite()) {
        return Err(Error::input(format!("alpha must be positive, got {}", p.alpha)));
    }
    let t = p.period;
    let gain = p.alpha * t;
    let lo = 1.0 + t * t / 2.0;
    let hi = 2.0 - t * t / 2.0;
    Ok(gain >= lo * (1.0 - GAIN_SLACK) && gain <= hi * (1.0 + GAIN_SLACK))
}

/// Positions, velocities and formation offsets of all agents at one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    /// Offset-adjusted positions `x_hat_i = x_i - delta_i`.
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub offsets: Vec<f64>,
    pub step: usize,
}

impl NetworkState {
    pub fn new(positions: Vec<f64>, velocities: Vec<f64>) -> Result<Self> {
        let offsets = vec![0.0; positions.len()];
        Self::with_offsets(positions, velocities, offsets)
    }

    pub fn with_offsets(positions: Vec<f64>, velocities: Vec<f64>, offsets: Vec<f64>) -> Result<Self> {
        let n = positions.len();
        if velocities.len() != n || offsets.len() != n {
            return Err(Error::input(format!(
                "state vectors disagree in length: {} positions, {} velocities, {} offsets",
                n,
                velocities.len(),
                offsets.len()
            )));
        }
        if let Some(i) = positions
            .iter()
            .chain(&velocities)
            .chain(&offsets)
            .position(|x| !x.is_finite())
        {
            return Err(Error::NonFinite { agent: i % n, step: 0 });
        }
        Ok(NetworkState {
            positions,
            velocities,
            offsets,
            step: 0,
        })
    }

    /// Builds the offset-adjusted state from raw positions `x_i`.
    pub fn from_raw(raw: &[f64], velocities: Vec<f64>, offsets: Vec<f64>) -> Result<Self> {
        if raw.len() != offsets.len() {
            return Err(Error::input("raw positions and offsets disagree in length"));
        }
        let positions = raw.iter().zip(&offsets).map(|(x, d)| x - d).collect();
        Self::with_offsets(positions, velocities, offsets)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn raw_positions(&self) -> Vec<f64> {
        self.positions.iter().zip(&self.offsets).map(|(x, d)| x + d).collect()
    }
}

/// Control inputs `u_i[k]` of all agents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlVector(pub Vec<f64>);

impl ControlVector {
    pub fn zeros(n: usize) -> Self {
        ControlVector(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Advances every agent (normal or not) by one sampling period.
pub fn step_state(s: &NetworkState, u: &ControlVector, p: &SimParams) -> Result<NetworkState> {
    let n = s.len();
    if u.0.len() != n {
        return Err(Error::input(format!("control has length {}, state has {n}", u.0.len())));
    }
    let t = p.period;
    let mut positions = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    for i in 0..n {
        let x = next_position(s.positions[i], s.velocities[i], u.0[i], t);
        let v = s.velocities[i] + t * u.0[i];
        if !x.is_finite() || !v.is_finite() {
            return Err(Error::NonFinite { agent: i, step: s.step + 1 });
        }
        positions.push(x);
        velocities.push(v);
    }
    Ok(NetworkState {
        positions,
        velocities,
        offsets: s.offsets.clone(),
        step: s.step + 1,
    })
}

/// Position after one period, evaluated exactly as [`step_state`] does.
pub(crate) fn next_position(x: f64, v: f64, u: f64, t: f64) -> f64 {
    x + t * v + (t * t / 2.0) * u
}

/// `-sum_j a_ij (x_hat_i - x_hat_j) - alpha v_i` over the given `(weight, neighbour position)` samples.
///
/// Every engine goes through this function so that equivalent configurations
/// produce bit-identical controls.
pub(crate) fn control_from_samples(
    own_position: f64,
    own_velocity: f64,
    samples: impl IntoIterator<Item = (f64, f64)>,
    alpha: f64,
) -> f64 {
    let mut coupling = 0.0;
    for (w, x_j) in samples {
        coupling += w * (x_j - own_position);
    }
    coupling - alpha * own_velocity
}

/// The unfiltered control law over every edge of `g`.
pub fn nominal_control(s: &NetworkState, g: &Digraph, p: &SimParams) -> Result<ControlVector> {
    if g.node_count() != s.len() {
        return Err(Error::input("graph and state disagree on the agent count"));
    }
    Ok(ControlVector(
        (0..s.len())
            .map(|i| {
                control_from_samples(
                    s.positions[i],
                    s.velocities[i],
                    g.in_neighbors(i).map(|(j, w)| (w, s.positions[j])),
                    p.alpha,
                )
            })
            .collect(),
    ))
}

/// `diag(1 for normal agents, 0 for malicious)`.
pub(crate) fn normal_selector(n: usize, malicious: &NodeSet) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j && !malicious.contains(&i) { 1.0 } else { 0.0 })
}

/// The Laplacian with malicious rows zeroed.
pub(crate) fn normal_laplacian(g: &Digraph, malicious: &NodeSet) -> DMatrix<f64> {
    let mut l = g.laplacian();
    for &m in malicious {
        if m < l.nrows() {
            l.row_mut(m).fill(0.0);
        }
    }
    l
}

/// `R = I - alpha T diag(normal)` and `Q = T I - (alpha T^2/2) diag(normal)`.
pub(crate) fn rq_matrices(n: usize, p: &SimParams, malicious: &NodeSet) -> (DMatrix<f64>, DMatrix<f64>) {
    let t = p.period;
    let sel = normal_selector(n, malicious);
    let eye = DMatrix::<f64>::identity(n, n);
    let r = &eye - &sel * (p.alpha * t);
    let q = &eye * t - &sel * (p.alpha * t * t / 2.0);
    (r, q)
}

/// Two-step position matrices: for `k >= 1`,
/// `x_hat[k+1] = Phi1 x_hat[k] + Phi2 x_hat[k-1] + (T^2/2)(u_M[k] + u_M[k-1])`,
/// where `gk` and `gk_prev` are the effective (filtered) graphs at `k` and `k-1`.
pub fn phi_matrices(
    gk: &Digraph,
    gk_prev: &Digraph,
    p: &SimParams,
    malicious: &NodeSet,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    p.ensure_valid()?;
    let n = gk.node_count();
    if gk_prev.node_count() != n {
        return Err(Error::input("graphs disagree on the agent count"));
    }
    let half_t2 = p.period * p.period / 2.0;
    let (r, _) = rq_matrices(n, p, malicious);
    let eye = DMatrix::<f64>::identity(n, n);
    let phi1 = &r + &eye - normal_laplacian(gk, malicious) * half_t2;
    let phi2 = -&r - normal_laplacian(gk_prev, malicious) * half_t2;
    Ok((phi1, phi2))
}
