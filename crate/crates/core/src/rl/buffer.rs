use nalgebra::DMatrix;
use rand::Rng;

use super::RlError;

/// One stored step. `obs`/`next_obs` are the joint observation and
/// `action` the joint normalised action.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// A sampled minibatch; columns are samples.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: DMatrix<f64>,
    pub action: DMatrix<f64>,
    pub reward: Vec<f64>,
    pub next_obs: DMatrix<f64>,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}

/// Fixed-capacity ring buffer with uniform sampling. Storage grows on
/// demand up to the capacity.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    obs_dim: usize,
    act_dim: usize,
    capacity: usize,
    obs: Vec<f64>,
    action: Vec<f64>,
    reward: Vec<f64>,
    next_obs: Vec<f64>,
    done: Vec<bool>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(obs_dim: usize, act_dim: usize, capacity: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            capacity,
            obs: Vec::new(),
            action: Vec::new(),
            reward: Vec::new(),
            next_obs: Vec::new(),
            done: Vec::new(),
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) {
        debug_assert_eq!(t.obs.len(), self.obs_dim);
        debug_assert_eq!(t.action.len(), self.act_dim);
        if self.len() < self.capacity {
            self.obs.extend_from_slice(&t.obs);
            self.action.extend_from_slice(&t.action);
            self.reward.push(t.reward);
            self.next_obs.extend_from_slice(&t.next_obs);
            self.done.push(t.done);
        } else {
            let i = self.head;
            self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.obs);
            self.action[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(&t.action);
            self.reward[i] = t.reward;
            self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.next_obs);
            self.done[i] = t.done;
        }
        self.head = (self.head + 1) % self.capacity;
    }

    pub fn sample_indices(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<usize>, RlError> {
        if self.is_empty() {
            return Err(RlError::EmptyBuffer);
        }
        Ok((0..n).map(|_| rng.random_range(0..self.len())).collect())
    }

    pub fn gather(&self, idx: &[usize]) -> Batch {
        let (d, a) = (self.obs_dim, self.act_dim);
        let cols = |src: &[f64], w: usize| {
            DMatrix::from_fn(w, idx.len(), |r, c| src[idx[c] * w + r])
        };
        Batch {
            obs: cols(&self.obs, d),
            action: cols(&self.action, a),
            reward: idx.iter().map(|&i| self.reward[i]).collect(),
            next_obs: cols(&self.next_obs, d),
            done: idx.iter().map(|&i| self.done[i]).collect(),
        }
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Batch, RlError> {
        let idx = self.sample_indices(n, rng)?;
        Ok(self.gather(&idx))
    }
}
