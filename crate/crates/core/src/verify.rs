//! Finite-difference gradient suite over the networks and losses used in training.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ccga::{actor_loss_with_base, candidates, ActorObjective, GroupedActors};
use crate::envs::{ActionSpace, GroupSpec};
use crate::error::Result;
use crate::gqc::{gqc_loss, pu_target, CriticEnsemble, Which};
use crate::numkit::{fd_gradcheck, Activation, AdamConfig, MlpParams};

const FD_STEP: f64 = 1e-5;

/// Worst relative error of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub seed: u64,
    pub max_rel_err: f64,
}

fn rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
}

/// Parameter and input gradients of a squared-error loss through an MLP with
/// tanh, ReLU and linear layers.
pub fn mlp_check(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = MlpParams::<f64>::new(
        &[5, 8, 7, 3],
        &[Activation::Tanh, Activation::Relu, Activation::Identity],
        &mut rng,
    )?;
    let x = rows(&mut rng, 4, 5);
    let y = rows(&mut rng, 4, 3);
    let loss = |p: &MlpParams<f64>, x: &Array2<f64>| -> f64 {
        let out = p.predict_batch(x.view()).expect("shapes are fixed");
        0.5 * (&out - &y).mapv(|v| v * v).sum()
    };
    let (out, cache) = net.forward_batch(x.view())?;
    let g_out = &out - &y;
    let (grads, g_in) = net.backward(&cache, g_out.view())?;
    let mut probe = net.clone();
    let e_params = fd_gradcheck(
        |p| {
            probe.assign_flat(p).expect("length is fixed");
            loss(&probe, &x)
        },
        &grads.flatten(),
        &net.flatten(),
        FD_STEP,
    )?;
    let shape = x.raw_dim();
    let e_input = fd_gradcheck(
        |p| loss(&net, &Array2::from_shape_vec(shape, p.to_vec()).expect("length is fixed")),
        &g_in.iter().copied().collect::<Vec<_>>(),
        &x.iter().copied().collect::<Vec<_>>(),
        FD_STEP,
    )?;
    Ok(e_params.max(e_input))
}

/// Combined true-transition and pessimistic loss of one critic head.
pub fn gqc_loss_check(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = CriticEnsemble::<f64>::new(4, 3, 4, &[10, 10], AdamConfig::critic(), &mut rng)?;
    let xt = rows(&mut rng, 6, 7);
    let xo = rows(&mut rng, 6, 7);
    let yt = rows(&mut rng, 6, 1).column(0).to_owned();
    let (yo, _) = pu_target(&e, 1, xo.view(), 0.5)?;
    let head = e.online(1).clone();
    let (_, g) = gqc_loss(&head, xt.view(), yt.view(), Some((xo.view(), yo.view())), 0.1)?;
    let mut probe = head.clone();
    fd_gradcheck(
        |p| {
            probe.assign_flat(p).expect("length is fixed");
            gqc_loss(&probe, xt.view(), yt.view(), Some((xo.view(), yo.view())), 0.1)
                .map(|r| r.0)
                .unwrap_or(f64::NAN)
        },
        &g.flatten(),
        &head.flatten(),
        FD_STEP,
    )
}

/// Actor loss (min over heads of the marginal objective) with respect to every
/// group's parameters; the non-candidate slots are held fixed.
pub fn actor_pipeline_check(seed: u64, objective: ActorObjective) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = GroupSpec::from_assignment(vec![0, 1, 0])?;
    let space = ActionSpace::Continuous { dim: 2 };
    let actors = GroupedActors::<f64>::new(groups, 3, space, &[6], AdamConfig::actor(), 0.1, &mut rng)?;
    let critic = CriticEnsemble::<f64>::new(3, 2, 6, &[10, 10], AdamConfig::critic(), &mut rng)?;
    let obs: Vec<Array2<f64>> = (0..3).map(|_| rows(&mut rng, 4, 3)).collect();
    let states = rows(&mut rng, 4, 2);
    let base = match objective {
        ActorObjective::Dpg => rows(&mut rng, 4, 6),
        ActorObjective::Omq => actors.greedy_joint(&obs, Which::Online)?,
    };
    let cand = candidates(&actors, &obs, 1.0, &mut rng)?;
    let out = actor_loss_with_base(&actors, &critic, states.view(), base.view(), &cand, objective, 1.0)?;
    let analytic: Vec<f64> = out.grads.iter().flat_map(|g| g.flatten()).collect();
    let point: Vec<f64> = (0..actors.n_groups()).flat_map(|g| actors.group_online(g).flatten()).collect();
    let mut probe = actors.clone();
    fd_gradcheck(
        |p| {
            let mut off = 0;
            for g in 0..probe.n_groups() {
                let k = probe.group_online(g).n_params();
                probe.group_online_mut(g).assign_flat(&p[off..off + k]).expect("length is fixed");
                off += k;
            }
            let mut fixed = ChaCha8Rng::seed_from_u64(0);
            candidates(&probe, &obs, 1.0, &mut fixed)
                .and_then(|c| actor_loss_with_base(&probe, &critic, states.view(), base.view(), &c, objective, 1.0))
                .map(|l| l.loss)
                .unwrap_or(f64::NAN)
        },
        &analytic,
        &point,
        FD_STEP,
    )
}

/// Every check on each of `seeds`.
pub fn gradient_suite(seeds: impl IntoIterator<Item = u64>) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for seed in seeds {
        out.push(CheckResult { name: "mlp", seed, max_rel_err: mlp_check(seed)? });
        out.push(CheckResult { name: "gqc_loss", seed, max_rel_err: gqc_loss_check(seed)? });
        out.push(CheckResult {
            name: "actor_dpg",
            seed,
            max_rel_err: actor_pipeline_check(seed, ActorObjective::Dpg)?,
        });
        out.push(CheckResult {
            name: "actor_omq",
            seed,
            max_rel_err: actor_pipeline_check(seed, ActorObjective::Omq)?,
        });
    }
    Ok(out)
}
