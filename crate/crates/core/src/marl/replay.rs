use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// One joint bodyguard step. Every vector is indexed by bodyguard.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub next_observations: Vec<Vec<f64>>,
    pub done: bool,
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("train.buffer_capacity", "must be >= 1"));
        }
        Ok(ReplayBuffer {
            capacity,
            storage: Vec::new(),
            inserted: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            let slot = (self.inserted % self.capacity as u64) as usize;
            self.storage[slot] = t;
        }
        self.inserted += 1;
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.storage.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }

    /// `batch` indices drawn uniformly with replacement.
    pub fn sample_indices(&self, batch: usize, rng: &mut SimRng) -> Result<Vec<usize>> {
        if batch == 0 || self.len() < batch {
            return Err(Error::contract(format!(
                "cannot sample {batch} from a buffer holding {}",
                self.len()
            )));
        }
        let n = self.len();
        Ok((0..batch).map(|_| rng.random_range(0..n)).collect())
    }

    pub fn sample(&self, batch: usize, rng: &mut SimRng) -> Result<Batch> {
        let idx = self.sample_indices(batch, rng)?;
        Batch::gather(self, &idx)
    }
}

/// Column-stacked minibatch, one matrix per bodyguard.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub observations: Vec<Array2<f64>>,
    pub actions: Vec<Array2<f64>>,
    /// `batch x n_agents`.
    pub rewards: Array2<f64>,
    pub next_observations: Vec<Array2<f64>>,
    /// 1.0 where the episode ended.
    pub done: Array1<f64>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.done.len()
    }

    pub fn n_agents(&self) -> usize {
        self.observations.len()
    }

    pub fn gather(buffer: &ReplayBuffer, indices: &[usize]) -> Result<Self> {
        let picked: Vec<&Transition> = indices
            .iter()
            .map(|&i| {
                buffer
                    .get(i)
                    .ok_or_else(|| Error::contract(format!("replay index {i} out of range")))
            })
            .collect::<Result<_>>()?;
        Batch::from_transitions(&picked)
    }

    pub fn from_transitions(ts: &[&Transition]) -> Result<Self> {
        let first = ts
            .first()
            .ok_or_else(|| Error::contract("empty minibatch"))?;
        let n = first.observations.len();
        let b = ts.len();
        let stack = |f: &dyn Fn(&Transition) -> &Vec<Vec<f64>>, agent: usize| -> Result<Array2<f64>> {
            let width = f(first)[agent].len();
            let mut m = Array2::zeros((b, width));
            for (r, t) in ts.iter().enumerate() {
                let row = &f(t)[agent];
                if row.len() != width {
                    return Err(Error::contract("ragged transition vectors in minibatch"));
                }
                m.row_mut(r).assign(&ndarray::ArrayView1::from(row.as_slice()));
            }
            Ok(m)
        };
        for t in ts {
            if t.observations.len() != n
                || t.actions.len() != n
                || t.rewards.len() != n
                || t.next_observations.len() != n
            {
                return Err(Error::contract("transition agent counts disagree"));
            }
        }
        let mut observations = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        let mut next_observations = Vec::with_capacity(n);
        for agent in 0..n {
            observations.push(stack(&|t| &t.observations, agent)?);
            actions.push(stack(&|t| &t.actions, agent)?);
            next_observations.push(stack(&|t| &t.next_observations, agent)?);
        }
        let rewards = Array2::from_shape_fn((b, n), |(r, a)| ts[r].rewards[a]);
        let done = ts.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect();
        Ok(Batch {
            observations,
            actions,
            rewards,
            next_observations,
            done,
        })
    }
}
