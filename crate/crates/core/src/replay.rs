//! Rehearsal: replay distributions, replay streams and replay buffers.
//!
//! A replay stream is a cursor into the stored sequence that only ever moves
//! forward by one or jumps back to the start. Resetting it with the right
//! probability each time the learner advances makes the position it reads
//! follow a chosen distribution over example ages.
//!
//! Ages are 1-based: when the learner has seen examples `1..=t`, example `i`
//! has age `t - i + 1`, so the newest example has age 1.

use std::collections::VecDeque;

use crate::error::{arg_err, Error, Result};
use crate::rng::{self, Rng64};

/// `log_4(5)`, the Pareto shape used for recency-biased replay.
pub fn default_pareto_shape() -> f64 {
    5f64.ln() / 4f64.ln()
}

/// Unnormalized replay mass over example ages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplayDistribution {
    Uniform,
    /// `rate * exp(-rate * a)`
    Exponential { rate: f64 },
    /// `shape / (a / scale)^(shape + 1)` for `a >= scale`, and `shape` for
    /// younger ages (the Pareto support starts at the scale).
    Pareto { scale: f64, shape: f64 },
}

impl ReplayDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Uniform => Ok(()),
            Self::Exponential { rate } if rate > 0.0 && rate.is_finite() => Ok(()),
            Self::Exponential { .. } => arg_err("exponential rate must be positive"),
            Self::Pareto { scale, shape }
                if scale > 0.0 && shape > 0.0 && scale.is_finite() && shape.is_finite() =>
            {
                Ok(())
            }
            Self::Pareto { .. } => arg_err("pareto scale and shape must be positive"),
        }
    }

    fn mass_unchecked(&self, age: u64) -> f64 {
        let a = age as f64;
        match *self {
            Self::Uniform => 1.0,
            Self::Exponential { rate } => rate * (-rate * a).exp(),
            Self::Pareto { scale, shape } => shape / (a.max(scale) / scale).powf(shape + 1.0),
        }
    }
}

pub fn replay_mass(dist: &ReplayDistribution, age: u64) -> Result<f64> {
    dist.validate()?;
    if age < 1 {
        return arg_err("replay age must be >= 1");
    }
    Ok(dist.mass_unchecked(age))
}

/// Probability of resetting a stream when the learner advances from `t_prev`
/// to `t_new`:
///
/// ```text
/// sum_{a = t_prev+1}^{t_new} mass(a) / sum_{a = 1}^{t_new} mass(a)
/// ```
///
/// For uniform replay this is `(t_new - t_prev) / t_new`, i.e. `1 / t_new`
/// for unit steps. `t_prev = 0` is the first step and always resets.
pub fn reset_probability(dist: &ReplayDistribution, t_prev: u64, t_new: u64) -> Result<f64> {
    dist.validate()?;
    if t_prev >= t_new {
        return arg_err(format!("t_prev {t_prev} must be < t_new {t_new}"));
    }
    if t_prev == 0 {
        return Ok(1.0);
    }
    if let ReplayDistribution::Uniform = dist {
        return Ok((t_new - t_prev) as f64 / t_new as f64);
    }
    let total: f64 = (1..=t_new).map(|a| dist.mass_unchecked(a)).sum();
    let recent: f64 = (t_prev + 1..=t_new).map(|a| dist.mass_unchecked(a)).sum();
    Ok(ratio(recent, total))
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// `K` replay streams sharing one replay distribution.
#[derive(Debug, Clone)]
pub struct ReplayStreamSet {
    dist: ReplayDistribution,
    positions: Vec<u64>,
    t: u64,
    /// `prefix[a] = sum_{b=1}^{a} mass(b)`
    prefix: Vec<f64>,
}

impl ReplayStreamSet {
    pub fn new(num_streams: usize, dist: ReplayDistribution) -> Result<Self> {
        dist.validate()?;
        Ok(Self {
            dist,
            positions: vec![1; num_streams],
            t: 0,
            prefix: vec![0.0],
        })
    }

    pub fn num_streams(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[u64] {
        &self.positions
    }

    pub fn learner_time(&self) -> u64 {
        self.t
    }

    pub fn distribution(&self) -> ReplayDistribution {
        self.dist
    }

    fn reset_prob(&mut self, t_prev: u64, t_new: u64) -> f64 {
        if t_prev == 0 {
            return 1.0;
        }
        if let ReplayDistribution::Uniform = self.dist {
            return (t_new - t_prev) as f64 / t_new as f64;
        }
        while (self.prefix.len() as u64) <= t_new {
            let a = self.prefix.len() as u64;
            let next = self.prefix[a as usize - 1] + self.dist.mass_unchecked(a);
            self.prefix.push(next);
        }
        let total = self.prefix[t_new as usize];
        ratio(total - self.prefix[t_prev as usize], total)
    }

    /// Advances the learner to `t_new` and reads `reads` consecutive examples
    /// from every stream.
    ///
    /// Each stream first resets to position 1 with
    /// `reset_probability(t, t_new)`, then reads; a stream that would read
    /// past `t_new` restarts at 1. Returned indices are 1-based.
    pub fn streams_step(&mut self, t_new: u64, reads: usize, rng: &mut Rng64) -> Result<Vec<Vec<u64>>> {
        if t_new <= self.t {
            return arg_err(format!(
                "learner must advance: t = {}, t_new = {t_new}",
                self.t
            ));
        }
        let p = self.reset_prob(self.t, t_new);
        let mut out = Vec::with_capacity(self.positions.len());
        for pos in self.positions.iter_mut() {
            if rng::uniform01(rng) < p {
                *pos = 1;
            }
            let mut read = Vec::with_capacity(reads);
            for _ in 0..reads {
                if *pos > t_new {
                    *pos = 1;
                }
                read.push(*pos);
                *pos += 1;
            }
            out.push(read);
        }
        self.t = t_new;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferPolicy {
    Fifo,
    Reservoir,
}

/// Bounded in-memory replay buffer.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    policy: BufferPolicy,
    items: VecDeque<(u64, T)>,
    seen: u64,
    last_index: Option<u64>,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: usize, policy: BufferPolicy) -> Self {
        Self {
            capacity,
            policy,
            items: VecDeque::with_capacity(capacity),
            seen: 0,
            last_index: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items_seen(&self) -> u64 {
        self.seen
    }

    /// Original indices of the stored items, in slot order.
    pub fn indices(&self) -> Vec<u64> {
        self.items.iter().map(|(i, _)| *i).collect()
    }

    /// Offers one item. FIFO evicts the oldest item when full. Reservoir keeps
    /// the `n`-th offered item with probability `capacity / n`, replacing a
    /// uniformly chosen slot, so every item seen so far is retained with
    /// equal probability.
    pub fn insert(&mut self, item: T, index: u64, rng: &mut Rng64) -> Result<()> {
        if self.last_index.is_some_and(|last| index <= last) {
            return arg_err("buffer indices must be strictly increasing");
        }
        self.last_index = Some(index);
        self.seen += 1;
        if self.capacity == 0 {
            return Ok(());
        }
        match self.policy {
            BufferPolicy::Fifo => {
                if self.items.len() == self.capacity {
                    self.items.pop_front();
                }
                self.items.push_back((index, item));
            }
            BufferPolicy::Reservoir => {
                if self.items.len() < self.capacity {
                    self.items.push_back((index, item));
                } else {
                    let j = rng::index(rng, self.seen as usize);
                    if j < self.capacity {
                        self.items[j] = (index, item);
                    }
                }
            }
        }
        Ok(())
    }

    /// Uniform sample with replacement over the current contents.
    pub fn sample(&self, batch_size: usize, rng: &mut Rng64) -> Result<Vec<(u64, T)>> {
        if self.items.is_empty() {
            return Err(Error::Argument("cannot sample from an empty buffer".into()));
        }
        Ok((0..batch_size)
            .map(|_| self.items[rng::index(rng, self.items.len())].clone())
            .collect())
    }
}
