//! Centralized critic ensemble with pessimistic out-of-distribution targets.
//!
//! Every head maps `[state | flat joint action]` to a scalar. Heads are
//! trained on their own replay minibatch against a smoothed TD target and,
//! weighted by `lambda_pu`, against a pessimistic target at joint actions where
//! later agents were replaced by greedy policy outputs.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Activation, AdamConfig, MlpGrads, MlpParams, OptState};
use crate::Scalar;

/// Selects online or target parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Online,
    Target,
}

/// Anything that evaluates a set of Q-heads on `[state | joint action]` rows.
///
/// Implemented by [`CriticEnsemble`] and by test stubs and exact oracles.
pub trait CriticHeads<T: Scalar> {
    fn n_heads(&self) -> usize;
    fn input_dim(&self) -> usize;

    /// Per-row value of one head.
    fn values(&self, head: usize, which: Which, inputs: ArrayView2<T>) -> Result<Array1<T>>;

    /// Online per-row values plus the gradient of each row's value with respect to its input row.
    fn values_and_input_grad(&self, head: usize, inputs: ArrayView2<T>) -> Result<(Array1<T>, Array2<T>)>;
}

/// PU and target-smoothing hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PuConfig<T> {
    pub beta: T,
    pub lambda_pu: T,
    pub sigma: T,
    pub clip: T,
}

impl<T: Scalar> Default for PuConfig<T> {
    fn default() -> Self {
        Self {
            beta: T::lit(0.5),
            lambda_pu: T::lit(0.1),
            sigma: T::lit(0.2),
            clip: T::lit(0.5),
        }
    }
}

impl<T: Scalar> PuConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta.is_finite()
            && self.beta >= T::zero()
            && self.lambda_pu.is_finite()
            && self.lambda_pu >= T::zero()
            && self.sigma.is_finite()
            && self.sigma > T::zero()
            && self.clip.is_finite()
            && self.clip > T::zero();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "PU config needs beta >= 0, lambda_pu >= 0, sigma > 0, clip > 0 (got {self:?})"
            )))
        }
    }
}

/// Row-wise `[states | actions]`.
pub fn critic_input<T: Scalar>(states: ArrayView2<T>, actions: ArrayView2<T>) -> Result<Array2<T>> {
    if states.nrows() != actions.nrows() {
        return Err(Error::Shape(format!(
            "{} state rows vs {} action rows",
            states.nrows(),
            actions.nrows()
        )));
    }
    concatenate(Axis(1), &[states, actions]).map_err(|e| Error::Shape(e.to_string()))
}

/// One value per head for a single (state, joint action).
pub fn ensemble_q<T: Scalar, C: CriticHeads<T> + ?Sized>(
    critic: &C,
    state: &[T],
    joint_action: &[T],
    which: Which,
) -> Result<Vec<T>> {
    if state.len() + joint_action.len() != critic.input_dim() {
        return Err(Error::Shape(format!(
            "state {} + action {} != critic input {}",
            state.len(),
            joint_action.len(),
            critic.input_dim()
        )));
    }
    let row: Vec<T> = state.iter().chain(joint_action).copied().collect();
    let x = ArrayView2::from_shape((1, row.len()), &row).map_err(|e| Error::Shape(e.to_string()))?;
    (0..critic.n_heads())
        .map(|h| Ok(critic.values(h, which, x)?[0]))
        .collect()
}

/// Population standard deviation across heads.
pub fn uncertainty<T: Scalar>(q: &[T]) -> Result<T> {
    if q.len() < 2 {
        return Err(Error::Config(format!("uncertainty needs at least 2 heads, got {}", q.len())));
    }
    // Shifted by the first head so that identical heads give exactly zero.
    let n = T::lit(q.len() as f64);
    let mean = q.iter().map(|&v| v - q[0]).sum::<T>() / n;
    let var = q.iter().map(|&v| (v - q[0] - mean) * (v - q[0] - mean)).sum::<T>() / n;
    Ok(var.sqrt())
}

/// `r + gamma * (1 - done) * q_next`.
pub fn bootstrap<T: Scalar>(
    rewards: ArrayView1<T>,
    dones: ArrayView1<T>,
    gamma: T,
    q_next: ArrayView1<T>,
) -> Array1<T> {
    let mut y = rewards.to_owned();
    for ((y, &d), &q) in y.iter_mut().zip(dones).zip(q_next) {
        if d == T::zero() {
            *y += gamma * q;
        }
    }
    y
}

/// TD target of one head given the (already smoothed) target-policy next actions.
pub fn true_target<T: Scalar, C: CriticHeads<T> + ?Sized>(
    critic: &C,
    head: usize,
    rewards: ArrayView1<T>,
    dones: ArrayView1<T>,
    next_states: ArrayView2<T>,
    next_actions: ArrayView2<T>,
    gamma: T,
) -> Result<Array1<T>> {
    let x = critic_input(next_states, next_actions)?;
    let q = critic.values(head, Which::Target, x.view())?;
    Ok(bootstrap(rewards, dones, gamma, q.view()))
}

/// TD target bootstrapped from the minimum over all target heads.
pub fn min_head_target<T: Scalar, C: CriticHeads<T> + ?Sized>(
    critic: &C,
    rewards: ArrayView1<T>,
    dones: ArrayView1<T>,
    next_states: ArrayView2<T>,
    next_actions: ArrayView2<T>,
    gamma: T,
) -> Result<Array1<T>> {
    let x = critic_input(next_states, next_actions)?;
    let mut q = critic.values(0, Which::Target, x.view())?;
    for h in 1..critic.n_heads() {
        let qh = critic.values(h, Which::Target, x.view())?;
        q.zip_mut_with(&qh, |a, &b| *a = a.min(b));
    }
    Ok(bootstrap(rewards, dones, gamma, q.view()))
}

/// Pessimistic target of `head` at OOD rows, plus the per-row uncertainty.
///
/// The uncertainty is taken across all target heads at the same input.
pub fn pu_target<T: Scalar, C: CriticHeads<T> + ?Sized>(
    critic: &C,
    head: usize,
    ood_inputs: ArrayView2<T>,
    beta: T,
) -> Result<(Array1<T>, Array1<T>)> {
    let all: Vec<Array1<T>> = (0..critic.n_heads())
        .map(|h| critic.values(h, Which::Target, ood_inputs))
        .collect::<Result<_>>()?;
    let rows = ood_inputs.nrows();
    let mut y = Array1::zeros(rows);
    let mut u = Array1::zeros(rows);
    let mut col = vec![T::zero(); all.len()];
    for r in 0..rows {
        for (c, q) in col.iter_mut().zip(&all) {
            *c = q[r];
        }
        u[r] = uncertainty(&col)?;
        y[r] = all[head][r] - beta * u[r];
    }
    Ok((y, u))
}

/// Combined head loss `mse(q, y_true) + lambda * mse(q_ood, y_pu)` and its parameter gradient.
///
/// Targets are constants; only `online` receives gradient.
pub fn gqc_loss<T: Scalar>(
    online: &MlpParams<T>,
    true_inputs: ArrayView2<T>,
    y_true: ArrayView1<T>,
    ood: Option<(ArrayView2<T>, ArrayView1<T>)>,
    lambda_pu: T,
) -> Result<(T, MlpGrads<T>)> {
    let n_true = true_inputs.nrows();
    if n_true == 0 || y_true.len() != n_true {
        return Err(Error::Shape(format!("{n_true} true rows with {} targets", y_true.len())));
    }
    let (x, n_ood) = match ood {
        Some((xo, yo)) => {
            if yo.len() != xo.nrows() {
                return Err(Error::Shape(format!("{} OOD rows with {} targets", xo.nrows(), yo.len())));
            }
            (concatenate(Axis(0), &[true_inputs, xo]).map_err(|e| Error::Shape(e.to_string()))?, xo.nrows())
        }
        None => (true_inputs.to_owned(), 0),
    };
    let (q, cache) = online.forward_batch(x.view())?;
    let mut grad_out = Array2::zeros((n_true + n_ood, 1));
    let two = T::lit(2.0);
    let inv_true = T::one() / T::lit(n_true as f64);
    let mut loss_true = T::zero();
    for r in 0..n_true {
        let e = q[[r, 0]] - y_true[r];
        loss_true += e * e;
        grad_out[[r, 0]] = two * e * inv_true;
    }
    let mut loss = loss_true * inv_true;
    if let Some((_, yo)) = ood {
        if n_ood > 0 {
            let inv_ood = T::one() / T::lit(n_ood as f64);
            let mut loss_ood = T::zero();
            for r in 0..n_ood {
                let e = q[[n_true + r, 0]] - yo[r];
                loss_ood += e * e;
                grad_out[[n_true + r, 0]] = lambda_pu * two * e * inv_ood;
            }
            loss += lambda_pu * loss_ood * inv_ood;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "critic loss {loss} (true rows {n_true}, OOD rows {n_ood})"
        )));
    }
    let (grads, _) = online.backward(&cache, grad_out.view())?;
    Ok((loss, grads))
}

/// `C_k` online heads, their target copies and one optimizer state per head.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticEnsemble<T> {
    online: Vec<MlpParams<T>>,
    target: Vec<MlpParams<T>>,
    opt: Vec<OptState<T>>,
    state_dim: usize,
    action_dim: usize,
}

impl<T: Scalar> CriticEnsemble<T> {
    /// Fresh heads with ReLU hidden layers and a linear output, initialized in head order from `rng`.
    pub fn new<R: Rng + ?Sized>(
        n_heads: usize,
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        adam: AdamConfig<T>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut acts = vec![Activation::Relu; hidden.len()];
        acts.push(Activation::Identity);
        let online = (0..n_heads)
            .map(|_| MlpParams::new(&sizes, &acts, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_heads(online, state_dim, action_dim, adam)
    }

    /// Wraps given online heads; targets start as exact copies.
    pub fn from_heads(online: Vec<MlpParams<T>>, state_dim: usize, action_dim: usize, adam: AdamConfig<T>) -> Result<Self> {
        let target = online.clone();
        let opt = online
            .iter()
            .map(|h| OptState::new(h, adam))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(online, target, opt, state_dim, action_dim)
    }

    pub fn from_parts(
        online: Vec<MlpParams<T>>,
        target: Vec<MlpParams<T>>,
        opt: Vec<OptState<T>>,
        state_dim: usize,
        action_dim: usize,
    ) -> Result<Self> {
        if online.len() < 2 {
            return Err(Error::Config(format!("critic ensemble needs at least 2 heads, got {}", online.len())));
        }
        if target.len() != online.len() || opt.len() != online.len() {
            return Err(Error::Shape("online, target and optimizer counts differ".into()));
        }
        for (h, (o, t)) in online.iter().zip(&target).enumerate() {
            if !o.same_shape(t) || o.in_dim() != state_dim + action_dim || o.out_dim() != 1 {
                return Err(Error::Shape(format!("critic head {h} has the wrong shape")));
            }
        }
        Ok(Self {
            online,
            target,
            opt,
            state_dim,
            action_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn online(&self, head: usize) -> &MlpParams<T> {
        &self.online[head]
    }

    pub fn target(&self, head: usize) -> &MlpParams<T> {
        &self.target[head]
    }

    pub fn online_mut(&mut self, head: usize) -> &mut MlpParams<T> {
        &mut self.online[head]
    }

    pub fn target_mut(&mut self, head: usize) -> &mut MlpParams<T> {
        &mut self.target[head]
    }

    pub fn opt_state(&self, head: usize) -> &OptState<T> {
        &self.opt[head]
    }

    /// One optimizer step on a head's online parameters.
    pub fn apply_grads(&mut self, head: usize, grads: &MlpGrads<T>) -> Result<()> {
        self.opt[head].step(&mut self.online[head], grads)
    }

    /// Soft update of every target head towards its online head.
    pub fn update_targets(&mut self, tau: T) -> Result<()> {
        for (t, o) in self.target.iter_mut().zip(&self.online) {
            t.soft_update_from(o, tau)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.online.iter().chain(&self.target).all(|h| h.is_finite())
    }
}

impl<T: Scalar> CriticHeads<T> for CriticEnsemble<T> {
    fn n_heads(&self) -> usize {
        self.online.len()
    }

    fn input_dim(&self) -> usize {
        self.state_dim + self.action_dim
    }

    fn values(&self, head: usize, which: Which, inputs: ArrayView2<T>) -> Result<Array1<T>> {
        let net = match which {
            Which::Online => &self.online[head],
            Which::Target => &self.target[head],
        };
        Ok(net.predict_batch(inputs)?.column(0).to_owned())
    }

    fn values_and_input_grad(&self, head: usize, inputs: ArrayView2<T>) -> Result<(Array1<T>, Array2<T>)> {
        let net = &self.online[head];
        let (q, cache) = net.forward_batch(inputs)?;
        let ones = Array2::from_elem((inputs.nrows(), 1), T::one());
        let g = net.backward_input(&cache, ones.view())?;
        Ok((q.column(0).to_owned(), g))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::numkit::{fd_gradcheck, Dense};
    use crate::rng::{substream, Stream};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    /// Heads returning fixed per-head constants, for arithmetic checks.
    pub(crate) struct ConstHeads {
        pub online: Vec<f64>,
        pub target: Vec<f64>,
        pub dim: usize,
    }

    impl CriticHeads<f64> for ConstHeads {
        fn n_heads(&self) -> usize {
            self.online.len()
        }
        fn input_dim(&self) -> usize {
            self.dim
        }
        fn values(&self, head: usize, which: Which, inputs: ArrayView2<f64>) -> Result<Array1<f64>> {
            let v = match which {
                Which::Online => self.online[head],
                Which::Target => self.target[head],
            };
            Ok(Array1::from_elem(inputs.nrows(), v))
        }
        fn values_and_input_grad(&self, head: usize, inputs: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
            Ok((
                Array1::from_elem(inputs.nrows(), self.online[head]),
                Array2::zeros(inputs.raw_dim()),
            ))
        }
    }

    fn ensemble(seed: u64, heads: usize) -> CriticEnsemble<f64> {
        let mut rng = substream(seed, Stream::Init);
        CriticEnsemble::new(heads, 3, 4, &[8, 8], AdamConfig::critic(), &mut rng).unwrap()
    }

    fn random_rows(seed: u64, rows: usize, cols: usize) -> Array2<f64> {
        let mut rng = substream(seed, Stream::Replay(0));
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identical_heads_agree() {
        let e = ensemble(1, 2);
        let head = e.online(0).clone();
        let e = CriticEnsemble::from_heads(vec![head.clone(), head.clone(), head], 3, 4, AdamConfig::critic()).unwrap();
        let q = ensemble_q(&e, &[0.1, 0.2, 0.3], &[0.5, -0.5, 0.0, 1.0], Which::Online).unwrap();
        assert_eq!(q[0], q[1]);
        assert_eq!(q[1], q[2]);
    }

    #[test]
    fn constant_offset_between_heads() {
        let e = ensemble(2, 2);
        let mut shifted = e.online(0).clone();
        let last = shifted.layers().len() - 1;
        shifted.layers_mut()[last].bias[0] += 0.75;
        let e2 = CriticEnsemble::from_heads(vec![e.online(0).clone(), shifted], 3, 4, AdamConfig::critic()).unwrap();
        let q = ensemble_q(&e2, &[0.3, -0.2, 0.9], &[0.1, 0.2, 0.3, 0.4], Which::Online).unwrap();
        assert!((q[1] - q[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn ensemble_matches_independent_forward() {
        let e = ensemble(3, 5);
        let s = [0.4, -0.1, 0.7];
        let a = [0.2, 0.0, -0.9, 0.3];
        let q = ensemble_q(&e, &s, &a, Which::Online).unwrap();
        let input: Vec<f64> = s.iter().chain(&a).copied().collect();
        for (h, &qh) in q.iter().enumerate() {
            assert_eq!(qh, e.online(h).forward(&input).unwrap().0[0]);
        }
        assert!(ensemble_q(&e, &s, &a[..3], Which::Online).is_err());
    }

    #[test]
    fn uncertainty_cases() {
        assert_eq!(uncertainty(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert_eq!(uncertainty(&[0.1f64; 7]).unwrap(), 0.0);
        assert_eq!(uncertainty(&[0.0, 2.0]).unwrap(), 1.0);
        assert!(matches!(uncertainty(&[1.0]), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn uncertainty_is_absolutely_homogeneous(
            q in proptest::collection::vec(-10.0f64..10.0, 2..8),
            c in -5.0f64..5.0,
        ) {
            let u = uncertainty(&q).unwrap();
            let scaled: Vec<f64> = q.iter().map(|v| v * c).collect();
            let us = uncertainty(&scaled).unwrap();
            prop_assert!(u >= 0.0);
            prop_assert!((us - c.abs() * u).abs() <= 1e-9 * (1.0 + u * c.abs()));
        }
    }

    #[test]
    fn true_target_arithmetic() {
        let stub = ConstHeads {
            online: vec![0.0, 0.0],
            target: vec![2.0, 5.0],
            dim: 2,
        };
        let ns = array![[0.0]];
        let na = array![[0.0]];
        let y = true_target(&stub, 0, array![1.0].view(), array![0.0].view(), ns.view(), na.view(), 0.9).unwrap();
        assert!((y[0] - 2.8).abs() < 1e-12);
        let y = true_target(&stub, 0, array![1.0].view(), array![1.0].view(), ns.view(), na.view(), 0.9).unwrap();
        assert_eq!(y[0], 1.0);
        let y = true_target(&stub, 1, array![1.5].view(), array![0.0].view(), ns.view(), na.view(), 0.0).unwrap();
        assert_eq!(y[0], 1.5);
        let y = min_head_target(&stub, array![1.0].view(), array![0.0].view(), ns.view(), na.view(), 0.5).unwrap();
        assert_eq!(y[0], 2.0);
    }

    #[test]
    fn pu_target_arithmetic() {
        let stub = ConstHeads {
            online: vec![0.0, 0.0],
            target: vec![1.0, 3.0],
            dim: 1,
        };
        let x = array![[0.0]];
        let (y, u) = pu_target(&stub, 0, x.view(), 1.0).unwrap();
        assert_eq!(u[0], 1.0);
        assert_eq!(y[0], 0.0);
        let (y, _) = pu_target(&stub, 1, x.view(), 0.0).unwrap();
        assert_eq!(y[0], 3.0);
        let same = ConstHeads {
            online: vec![0.0; 3],
            target: vec![4.0; 3],
            dim: 1,
        };
        for beta in [0.0, 0.5, 7.0] {
            assert_eq!(pu_target(&same, 2, x.view(), beta).unwrap().0[0], 4.0);
        }
    }

    #[test]
    fn pu_target_is_pessimistic_and_monotone_in_beta() {
        let stub = ConstHeads {
            online: vec![0.0; 4],
            target: vec![1.0, 1.5, -0.5, 2.0],
            dim: 1,
        };
        let x = array![[0.0]];
        let max_q = 2.0;
        for head in 0..4 {
            let mut prev = f64::INFINITY;
            for k in 0..=20 {
                let beta = k as f64 * 0.25;
                let y = pu_target(&stub, head, x.view(), beta).unwrap().0[0];
                assert!(y <= prev);
                if beta > 0.0 {
                    assert!(y < max_q);
                }
                prev = y;
            }
        }
    }

    fn linear_head(w: f64, b: f64) -> MlpParams<f64> {
        MlpParams::from_layers(vec![Dense {
            weight: array![[w]],
            bias: array![b],
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn loss_arithmetic() {
        let head = linear_head(0.0, 1.0);
        let x = array![[0.0]];
        let (l, _) = gqc_loss(&head, x.view(), array![3.0].view(), None, 0.1).unwrap();
        assert_eq!(l, 4.0);
        let (l, g) = gqc_loss(&head, x.view(), array![1.0].view(), Some((x.view(), array![1.0].view())), 0.1).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        // lambda = 0 ignores the OOD term entirely.
        let (l0, g0) = gqc_loss(&head, x.view(), array![3.0].view(), Some((x.view(), array![-9.0].view())), 0.0).unwrap();
        let (l1, g1) = gqc_loss(&head, x.view(), array![3.0].view(), None, 0.0).unwrap();
        assert_eq!(l0, l1);
        assert_eq!(g0.flatten(), g1.flatten());
    }

    #[test]
    fn loss_rejects_non_finite() {
        let head = linear_head(0.0, 1.0);
        let x = array![[0.0]];
        assert!(matches!(
            gqc_loss(&head, x.view(), array![f64::NAN].view(), None, 0.1),
            Err(Error::NonFinite(_))
        ));
    }

    pub(crate) fn gqc_loss_gradcheck(seed: u64) -> f64 {
        let e = ensemble(seed, 3);
        let xt = random_rows(seed, 6, 7);
        let xo = random_rows(seed + 1000, 6, 7);
        let yt = Array1::from_iter((0..6).map(|i| 0.3 * i as f64 - 0.5));
        let (yo, _) = pu_target(&e, 1, xo.view(), 0.5).unwrap();
        let head = e.online(1).clone();
        let (_, g) = gqc_loss(&head, xt.view(), yt.view(), Some((xo.view(), yo.view())), 0.1).unwrap();
        let mut probe = head.clone();
        fd_gradcheck(
            |p| {
                probe.assign_flat(p).unwrap();
                gqc_loss(&probe, xt.view(), yt.view(), Some((xo.view(), yo.view())), 0.1).unwrap().0
            },
            &g.flatten(),
            &head.flatten(),
            1e-5,
        )
        .unwrap()
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let err = gqc_loss_gradcheck(seed);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn target_heads_get_no_gradient() {
        let mut e = ensemble(7, 3);
        let xt = random_rows(7, 5, 7);
        let xo = random_rows(8, 5, 7);
        let yt = Array1::from_elem(5, 0.2);
        let (yo_before, _) = pu_target(&e, 0, xo.view(), 0.5).unwrap();
        let (_, g_before) = gqc_loss(e.online(0), xt.view(), yt.view(), Some((xo.view(), yo_before.view())), 0.1).unwrap();
        let target_before = e.target(0).clone();
        for h in 0..3 {
            let t = e.target_mut(h);
            t.layers_mut()[0].weight.mapv_inplace(|w| w * 1.3 + 0.01);
        }
        let (yo_after, _) = pu_target(&e, 0, xo.view(), 0.5).unwrap();
        assert_ne!(yo_before, yo_after);
        // Same targets through the perturbed ensemble give the same online gradient.
        let (_, g_same) = gqc_loss(e.online(0), xt.view(), yt.view(), Some((xo.view(), yo_before.view())), 0.1).unwrap();
        assert_eq!(g_before.flatten(), g_same.flatten());
        // The gradient has the online head's shape only; targets are untouched by a step.
        let (_, g) = gqc_loss(e.online(0), xt.view(), yt.view(), Some((xo.view(), yo_after.view())), 0.1).unwrap();
        let perturbed = e.target(0).clone();
        e.apply_grads(0, &g).unwrap();
        assert_eq!(e.target(0), &perturbed);
        assert_ne!(&perturbed, &target_before);
    }

    #[test]
    fn heads_stay_distinct_under_independent_batches() {
        // Start from identical heads; only the replay stream differs.
        let base = ensemble(11, 2);
        let head = base.online(0).clone();
        let mut e = CriticEnsemble::from_heads(vec![head.clone(), head], 3, 4, AdamConfig::critic()).unwrap();
        let data = random_rows(12, 64, 7);
        let y = data.column(0).mapv(|v| v.sin());
        let mut rngs = [substream(5, Stream::Replay(0)), substream(5, Stream::Replay(1))];
        for _ in 0..1000 {
            for (h, rng) in rngs.iter_mut().enumerate() {
                let idx: Vec<usize> = (0..8).map(|_| rng.random_range(0..64)).collect();
                let x = data.select(Axis(0), &idx);
                let yb = y.select(Axis(0), &idx);
                let (_, g) = gqc_loss(e.online(h), x.view(), yb.view(), None, 0.0).unwrap();
                e.apply_grads(h, &g).unwrap();
            }
        }
        assert_ne!(e.online(0), e.online(1));
    }

    #[test]
    fn soft_update_of_targets() {
        let mut e = ensemble(13, 2);
        for h in 0..2 {
            e.online_mut(h).layers_mut()[0].bias.fill(2.0);
            e.target_mut(h).layers_mut()[0].bias.fill(0.0);
        }
        e.update_targets(0.5).unwrap();
        assert!(e.target(1).layers()[0].bias.iter().all(|&b| b == 1.0));
        assert!(e.update_targets(0.0).is_err());
    }

    #[test]
    fn ensemble_needs_two_heads() {
        let mut rng = substream(0, Stream::Init);
        assert!(matches!(
            CriticEnsemble::<f64>::new(1, 2, 2, &[4], AdamConfig::critic(), &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let e = ensemble(17, 2);
        let x = random_rows(17, 1, 7);
        let (_, g) = e.values_and_input_grad(1, x.view()).unwrap();
        let err = fd_gradcheck(
            |p| {
                let row = ArrayView2::from_shape((1, 7), p).unwrap();
                e.values(1, Which::Online, row).unwrap()[0]
            },
            &g.row(0).to_vec(),
            &x.row(0).to_vec(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
