//! Uniform experience replay with a ring buffer and a binary snapshot format.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::Scalar;

/// One environment step. Actions are stored in the flat critic encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub state: Vec<T>,
    pub obs: Vec<Vec<T>>,
    pub action: Vec<T>,
    pub reward: T,
    pub next_state: Vec<T>,
    pub next_obs: Vec<Vec<T>>,
    pub done: bool,
}

/// Dimensions every stored transition must match.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionShape {
    pub state_dim: usize,
    pub n_agents: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
}

impl TransitionShape {
    fn check<T>(&self, t: &Transition<T>) -> Result<()> {
        let ok = t.state.len() == self.state_dim
            && t.next_state.len() == self.state_dim
            && t.action.len() == self.action_dim
            && t.obs.len() == self.n_agents
            && t.next_obs.len() == self.n_agents
            && t.obs.iter().chain(&t.next_obs).all(|o| o.len() == self.obs_dim);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!("transition does not match buffer shape {self:?}")))
        }
    }
}

/// Minibatch laid out row-per-transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub states: Array2<T>,
    /// One `(batch, obs_dim)` matrix per agent.
    pub obs: Vec<Array2<T>>,
    pub actions: Array2<T>,
    pub rewards: Array1<T>,
    pub next_states: Array2<T>,
    pub next_obs: Vec<Array2<T>>,
    /// 1 for terminal transitions, 0 otherwise.
    pub dones: Array1<T>,
    /// Buffer slots the rows were drawn from.
    pub indices: Vec<usize>,
}

impl<T> Batch<T> {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten first.
#[derive(Debug, Clone, PartialEq)]
pub struct Buffer<T> {
    shape: TransitionShape,
    capacity: usize,
    items: Vec<Transition<T>>,
    cursor: usize,
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"OMDPGRB\0";
const SNAPSHOT_VERSION: u32 = 1;

impl<T: Scalar> Buffer<T> {
    pub fn new(capacity: usize, shape: TransitionShape) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            shape,
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn shape(&self) -> TransitionShape {
        self.shape
    }

    pub fn push(&mut self, transition: Transition<T>) -> Result<()> {
        self.shape.check(&transition)?;
        if self.items.len() < self.capacity {
            self.items.push(transition);
        } else {
            self.items[self.cursor] = transition;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    pub fn get(&self, slot: usize) -> Option<&Transition<T>> {
        self.items.get(slot)
    }

    /// Stored transitions from oldest to newest.
    pub fn iter_chronological(&self) -> impl Iterator<Item = &Transition<T>> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// Uniform sample with replacement. Any non-empty buffer can serve a batch;
    /// the training loop separately waits for `warmup >= batch_size` transitions.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch<T>> {
        if self.items.is_empty() || batch_size == 0 {
            return Err(Error::NotReady {
                size: self.items.len(),
                requested: batch_size,
            });
        }
        let indices: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..self.items.len())).collect();
        Ok(self.gather(&indices))
    }

    /// Batch of the given slots, in order.
    pub fn gather(&self, indices: &[usize]) -> Batch<T> {
        let s = self.shape;
        let b = indices.len();
        let mut states = Array2::zeros((b, s.state_dim));
        let mut next_states = Array2::zeros((b, s.state_dim));
        let mut actions = Array2::zeros((b, s.action_dim));
        let mut obs = vec![Array2::zeros((b, s.obs_dim)); s.n_agents];
        let mut next_obs = vec![Array2::zeros((b, s.obs_dim)); s.n_agents];
        let mut rewards = Array1::zeros(b);
        let mut dones = Array1::zeros(b);
        for (row, &idx) in indices.iter().enumerate() {
            let t = &self.items[idx];
            fill_row(&mut states, row, &t.state);
            fill_row(&mut next_states, row, &t.next_state);
            fill_row(&mut actions, row, &t.action);
            for i in 0..s.n_agents {
                fill_row(&mut obs[i], row, &t.obs[i]);
                fill_row(&mut next_obs[i], row, &t.next_obs[i]);
            }
            rewards[row] = t.reward;
            dones[row] = if t.done { T::one() } else { T::zero() };
        }
        Batch {
            states,
            obs,
            actions,
            rewards,
            next_states,
            next_obs,
            dones,
            indices: indices.to_vec(),
        }
    }

    /// Writes a versioned snapshot: header, ring bookkeeping, then raw records as little-endian `f64`.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_u32::<LittleEndian>(SNAPSHOT_VERSION)?;
        let s = self.shape;
        for v in [s.state_dim, s.n_agents, s.obs_dim, s.action_dim, self.capacity, self.cursor, self.items.len()] {
            w.write_u64::<LittleEndian>(v as u64)?;
        }
        for t in &self.items {
            write_values(&mut w, &t.state)?;
            for o in &t.obs {
                write_values(&mut w, o)?;
            }
            write_values(&mut w, &t.action)?;
            w.write_f64::<LittleEndian>(t.reward.as_f64())?;
            write_values(&mut w, &t.next_state)?;
            for o in &t.next_obs {
                write_values(&mut w, o)?;
            }
            w.write_u8(t.done as u8)?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Format("not a replay snapshot".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Format(format!("unsupported replay snapshot version {version}")));
        }
        let mut header = [0usize; 7];
        for h in &mut header {
            *h = r.read_u64::<LittleEndian>()? as usize;
        }
        let [state_dim, n_agents, obs_dim, action_dim, capacity, cursor, len] = header;
        let shape = TransitionShape {
            state_dim,
            n_agents,
            obs_dim,
            action_dim,
        };
        if len > capacity || cursor >= capacity.max(1) {
            return Err(Error::Format("inconsistent ring bookkeeping".into()));
        }
        let mut buf = Self::new(capacity, shape)?;
        for _ in 0..len {
            let state = read_values(&mut r, state_dim)?;
            let obs = (0..n_agents).map(|_| read_values(&mut r, obs_dim)).collect::<Result<_>>()?;
            let action = read_values(&mut r, action_dim)?;
            let reward = T::lit(r.read_f64::<LittleEndian>()?);
            let next_state = read_values(&mut r, state_dim)?;
            let next_obs = (0..n_agents).map(|_| read_values(&mut r, obs_dim)).collect::<Result<_>>()?;
            let done = r.read_u8()? != 0;
            buf.items.push(Transition {
                state,
                obs,
                action,
                reward,
                next_state,
                next_obs,
                done,
            });
        }
        buf.cursor = cursor;
        Ok(buf)
    }
}

fn fill_row<T: Scalar>(m: &mut Array2<T>, row: usize, values: &[T]) {
    for (dst, &v) in m.row_mut(row).iter_mut().zip(values) {
        *dst = v;
    }
}

fn write_values<W: Write, T: Scalar>(w: &mut W, values: &[T]) -> Result<()> {
    for &v in values {
        w.write_f64::<LittleEndian>(v.as_f64())?;
    }
    Ok(())
}

fn read_values<R: Read, T: Scalar>(r: &mut R, n: usize) -> Result<Vec<T>> {
    (0..n).map(|_| Ok(T::lit(r.read_f64::<LittleEndian>()?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use proptest::prelude::*;

    const SHAPE: TransitionShape = TransitionShape {
        state_dim: 2,
        n_agents: 2,
        obs_dim: 1,
        action_dim: 2,
    };

    fn item(k: usize) -> Transition<f64> {
        let x = k as f64;
        Transition {
            state: vec![x, -x],
            obs: vec![vec![x], vec![x + 0.5]],
            action: vec![x * 0.1, -x * 0.1],
            reward: x,
            next_state: vec![x + 1.0, -x - 1.0],
            next_obs: vec![vec![x + 1.0], vec![x + 1.5]],
            done: k % 3 == 0,
        }
    }

    #[test]
    fn push_grows_until_capacity() {
        let mut b = Buffer::new(3, SHAPE).unwrap();
        b.push(item(0)).unwrap();
        assert_eq!(b.len(), 1);
        for k in 1..4 {
            b.push(item(k)).unwrap();
        }
        assert_eq!(b.len(), 3);
        let rewards: Vec<f64> = b.iter_chronological().map(|t| t.reward).collect();
        assert_eq!(rewards, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn malformed_transition_is_rejected() {
        let mut b = Buffer::new(3, SHAPE).unwrap();
        let mut t = item(1);
        t.action.pop();
        assert!(matches!(b.push(t), Err(Error::Shape(_))));
    }

    #[test]
    fn underfilled_buffer_is_not_ready() {
        let b: Buffer<f64> = Buffer::new(10, SHAPE).unwrap();
        let mut r = substream(0, Stream::Replay(0));
        assert!(matches!(b.sample(1, &mut r), Err(Error::NotReady { .. })));
    }

    #[test]
    fn single_item_batch_repeats_it() {
        let mut b = Buffer::new(10, SHAPE).unwrap();
        b.push(item(7)).unwrap();
        let batch = b.sample(4, &mut substream(0, Stream::Replay(0))).unwrap();
        assert_eq!(batch.indices, vec![0; 4]);
        assert!(batch.rewards.iter().all(|&r| r == 7.0));
        assert_eq!(batch.obs[1].column(0).to_vec(), vec![7.5; 4]);
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let mut b = Buffer::new(100, SHAPE).unwrap();
        for k in 0..50 {
            b.push(item(k)).unwrap();
        }
        let a = b.sample(16, &mut substream(3, Stream::Replay(0))).unwrap();
        let a2 = b.sample(16, &mut substream(3, Stream::Replay(0))).unwrap();
        let c = b.sample(16, &mut substream(3, Stream::Replay(1))).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a.indices, c.indices);
    }

    #[test]
    fn sample_frequencies_are_uniform() {
        let mut b = Buffer::new(10, SHAPE).unwrap();
        for k in 0..10 {
            b.push(item(k)).unwrap();
        }
        let mut counts = [0usize; 10];
        let mut r = substream(11, Stream::Replay(0));
        let draws = 100_000;
        for _ in 0..draws / 10 {
            for idx in b.sample(10, &mut r).unwrap().indices {
                counts[idx] += 1;
            }
        }
        let p = 0.1;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn ten_thousand_pushes_keep_last_capacity() {
        let cap = 257;
        let mut b = Buffer::new(cap, SHAPE).unwrap();
        let mut model: Vec<usize> = Vec::new();
        for k in 0..10_000 {
            b.push(item(k)).unwrap();
            model.push(k);
        }
        let mut expected: Vec<f64> = model[model.len() - cap..].iter().map(|&k| k as f64).collect();
        let all: Vec<usize> = (0..b.len()).collect();
        let mut got: Vec<f64> = b.gather(&all).rewards.to_vec();
        expected.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        assert_eq!(got, expected);
    }

    #[test]
    fn sampling_never_returns_evicted_entries() {
        let mut b = Buffer::new(20, SHAPE).unwrap();
        for k in 0..95 {
            b.push(item(k)).unwrap();
        }
        let batch = b.sample(20, &mut substream(1, Stream::Replay(2))).unwrap();
        assert!(batch.rewards.iter().all(|&r| r >= 75.0));
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let mut b = Buffer::new(5, SHAPE).unwrap();
        for k in 0..8 {
            b.push(item(k)).unwrap();
        }
        let mut bytes = Vec::new();
        b.write_snapshot(&mut bytes).unwrap();
        let back: Buffer<f64> = Buffer::read_snapshot(bytes.as_slice()).unwrap();
        assert_eq!(back, b);
        bytes[0] = b'X';
        assert!(matches!(Buffer::<f64>::read_snapshot(bytes.as_slice()), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn size_is_min_of_pushes_and_capacity(cap in 1usize..40, pushes in 0usize..120) {
            let mut b = Buffer::new(cap, SHAPE).unwrap();
            for k in 0..pushes {
                b.push(item(k)).unwrap();
            }
            prop_assert_eq!(b.len(), pushes.min(cap));
            let newest = b.iter_chronological().last().map(|t| t.reward);
            prop_assert_eq!(newest, pushes.checked_sub(1).map(|k| k as f64));
        }
    }
}
