//! Exact ground truth on enumerable games: sequential Q tables, exact marginal
//! values, and the sequential policy-ratio drift diagnostic.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use crate::ccga::{argmax, GreedyActor};
use crate::envs::{ActionLayout, ActionSpace, ExactGame, GroupSpec, MAX_ENUMERATION};
use crate::error::{Error, Result};
use crate::gqc::{CriticHeads, Which};

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn check_size(game: &ExactGame) -> Result<()> {
    let entries = (game.n_actions() as u128)
        .checked_pow(game.n_agents() as u32)
        .unwrap_or(u128::MAX);
    if entries > MAX_ENUMERATION {
        return Err(Error::TooLarge {
            entries,
            limit: MAX_ENUMERATION,
        });
    }
    Ok(())
}

/// Independent softmax policy per agent over `m` actions.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    logits: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(logits: Vec<Vec<f64>>) -> Result<Self> {
        let m = logits.first().map_or(0, Vec::len);
        if m < 2 || logits.iter().any(|l| l.len() != m) {
            return Err(Error::Shape("tabular policy needs equal-length logit rows of at least 2 actions".into()));
        }
        if logits.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tabular policy logits".into()));
        }
        Ok(Self { logits })
    }

    pub fn uniform(n_agents: usize, n_actions: usize) -> Self {
        Self {
            logits: vec![vec![0.0; n_actions]; n_agents],
        }
    }

    /// Logits drawn uniformly from `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(n_agents: usize, n_actions: usize, scale: f64, rng: &mut R) -> Self {
        Self {
            logits: (0..n_agents)
                .map(|_| (0..n_actions).map(|_| rng.random_range(-scale..=scale)).collect())
                .collect(),
        }
    }

    /// Policy whose probabilities underflow to an exact point mass on `joint`.
    pub fn point_mass(joint: &[usize], n_actions: usize) -> Self {
        Self {
            logits: joint
                .iter()
                .map(|&a| (0..n_actions).map(|k| if k == a { 0.0 } else { -1e4 }).collect())
                .collect(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.logits.len()
    }

    pub fn n_actions(&self) -> usize {
        self.logits[0].len()
    }

    pub fn logits(&self, agent: usize) -> &[f64] {
        &self.logits[agent]
    }

    pub fn probs(&self, agent: usize) -> Vec<f64> {
        softmax(&self.logits[agent])
    }

    /// Argmax action (first maximum).
    pub fn greedy(&self, agent: usize) -> usize {
        argmax(self.logits[agent].iter().copied())
    }
}

impl GreedyActor<f64> for TabularPolicy {
    fn layout(&self) -> ActionLayout {
        ActionLayout::new(self.n_agents(), ActionSpace::Discrete { n: self.n_actions() })
    }

    fn greedy_slot(&self, agent: usize, _obs: &[f64]) -> Result<Vec<f64>> {
        let mut slot = vec![0.0; self.n_actions()];
        slot[self.greedy(agent)] = 1.0;
        Ok(slot)
    }
}

/// Sequential Q values `Q(a_{1:i})` for every prefix length `i = 0..=n`.
///
/// Level `i` is indexed lexicographically by the prefix (agent 0 most
/// significant); level 0 holds `V`, level `n` the payoff tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialQ {
    n_actions: usize,
    levels: Vec<Vec<f64>>,
}

impl SequentialQ {
    pub fn value(&self) -> f64 {
        self.levels[0][0]
    }

    pub fn q(&self, prefix: &[usize]) -> f64 {
        let idx = prefix.iter().fold(0, |acc, &a| acc * self.n_actions + a);
        self.levels[prefix.len()][idx]
    }

    pub fn level(&self, len: usize) -> &[f64] {
        &self.levels[len]
    }
}

/// Exact sequential Q of `policy` on `game`: `Q(a_{1:i}) = E_{a_{i+1:n} ~ pi}[R(a)]`.
pub fn exact_q(game: &ExactGame, policy: &TabularPolicy) -> Result<SequentialQ> {
    check_size(game)?;
    let n = game.n_agents();
    let m = game.n_actions();
    if policy.n_agents() != n || policy.n_actions() != m {
        return Err(Error::Shape("policy does not match game dimensions".into()));
    }
    let mut levels = vec![Vec::new(); n + 1];
    levels[n] = game.payoff_table().to_vec();
    for i in (0..n).rev() {
        let p = policy.probs(i);
        let next = &levels[i + 1];
        levels[i] = (0..next.len() / m)
            .map(|prefix| (0..m).map(|a| p[a] * next[prefix * m + a]).sum())
            .collect();
    }
    Ok(SequentialQ { n_actions: m, levels })
}

/// `R(a_{1:i-1}, a_i, a^g) - R(a_{1:i-1}, 0, a^g)` with `a^g` the per-agent policy argmax.
///
/// `prefix` holds the actions of agents `0..=agent`.
pub fn exact_omq(game: &ExactGame, policy: &TabularPolicy, agent: usize, prefix: &[usize]) -> Result<f64> {
    check_size(game)?;
    let n = game.n_agents();
    if agent >= n || prefix.len() != agent + 1 || prefix.iter().any(|&a| a >= game.n_actions()) {
        return Err(Error::Shape(format!("prefix {prefix:?} for agent {agent} of {n}")));
    }
    let mut joint = prefix.to_vec();
    joint.extend((agent + 1..n).map(|j| policy.greedy(j)));
    let with = game.payoff(&joint);
    joint[agent] = 0;
    Ok(with - game.payoff(&joint))
}

/// Critic stub whose every head returns the exact payoff of the decoded joint action.
///
/// Inputs are `[state | one-hot slots]`; each slot decodes to its argmax.
#[derive(Debug, Clone)]
pub struct ExactQHeads {
    table: SequentialQ,
    n_agents: usize,
    state_dim: usize,
    heads: usize,
}

impl ExactQHeads {
    pub fn new(table: SequentialQ, n_agents: usize, state_dim: usize, heads: usize) -> Self {
        Self {
            table,
            n_agents,
            state_dim,
            heads,
        }
    }

    fn decode(&self, row: ndarray::ArrayView1<f64>) -> Vec<usize> {
        let m = self.table.n_actions;
        (0..self.n_agents)
            .map(|i| {
                let start = self.state_dim + i * m;
                argmax(row.iter().skip(start).take(m).copied())
            })
            .collect()
    }
}

impl CriticHeads<f64> for ExactQHeads {
    fn n_heads(&self) -> usize {
        self.heads
    }

    fn input_dim(&self) -> usize {
        self.state_dim + self.n_agents * self.table.n_actions
    }

    fn values(&self, _head: usize, _which: Which, inputs: ArrayView2<f64>) -> Result<Array1<f64>> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Shape(format!("{} input columns, expected {}", inputs.ncols(), self.input_dim())));
        }
        Ok(inputs.rows().into_iter().map(|r| self.table.q(&self.decode(r))).collect())
    }

    fn values_and_input_grad(&self, _head: usize, _inputs: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        Err(Error::Shape("the exact payoff lookup is not differentiable".into()))
    }
}

/// How shared parameters and the pre-update snapshot interact in the diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Private logits per agent.
    NoPs,
    /// Shared group logits read live: later group members see earlier updates.
    ParPsDrifted,
    /// Shared group logits with every policy snapshotted before any update.
    ParPsFpb,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::NoPs, Scheme::ParPsDrifted, Scheme::ParPsFpb];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::NoPs => "nops",
            Scheme::ParPsDrifted => "parps_drifted",
            Scheme::ParPsFpb => "parps_fpb",
        }
    }
}

/// Sequential ratios `F_i` per scheme (indexed by position in the update order)
/// and log-ratio gaps relative to the FPB scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub lr: f64,
    pub ordering: Vec<usize>,
    pub reference: Vec<usize>,
    pub nops: Vec<f64>,
    pub drifted: Vec<f64>,
    pub fpb: Vec<f64>,
}

impl RatioReport {
    pub fn ratios(&self, scheme: Scheme) -> &[f64] {
        match scheme {
            Scheme::NoPs => &self.nops,
            Scheme::ParPsDrifted => &self.drifted,
            Scheme::ParPsFpb => &self.fpb,
        }
    }

    /// `|log F_i^scheme - log F_i^FPB|` at update position `pos`.
    pub fn gap(&self, scheme: Scheme, pos: usize) -> f64 {
        (self.ratios(scheme)[pos].ln() - self.fpb[pos].ln()).abs()
    }

    /// Gap of the last agent in the order; the third agent on the standard instance.
    pub fn drift_gap(&self) -> f64 {
        self.gap(Scheme::ParPsDrifted, self.fpb.len() - 1)
    }

    pub fn nops_gap(&self) -> f64 {
        self.gap(Scheme::NoPs, self.fpb.len() - 1)
    }

    /// One row per (scheme, agent).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,position,agent,ratio,log_ratio,gap_vs_fpb\n");
        for scheme in Scheme::ALL {
            for (pos, &f) in self.ratios(scheme).iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.17e},{:.17e},{:.17e}",
                    scheme.name(),
                    pos + 1,
                    self.ordering[pos] + 1,
                    f,
                    f.ln(),
                    self.gap(scheme, pos)
                );
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let last = self.fpb.len();
        format!(
            "learning rate {}\nupdate order {:?}\nreference joint action {:?}\n\
             F_{last}: nops {:.9} drifted {:.9} fpb {:.9}\n\
             |log F_{last} drifted - log F_{last} fpb| = {:.6e}\n\
             |log F_{last} nops - log F_{last} fpb| = {:.6e}\n",
            self.lr,
            self.ordering.iter().map(|a| a + 1).collect::<Vec<_>>(),
            self.reference,
            self.nops[last - 1],
            self.drifted[last - 1],
            self.fpb[last - 1],
            self.drift_gap(),
            self.nops_gap()
        )
    }
}

/// Expected payoff for each action of `agent` with every other agent drawn from `views`.
fn marginal_payoff(game: &ExactGame, agent: usize, views: &[Vec<f64>]) -> Vec<f64> {
    let n = game.n_agents();
    let mut q = vec![0.0; game.n_actions()];
    for (idx, &r) in game.payoff_table().iter().enumerate() {
        let joint = game.joint_of(idx);
        let mut w = 1.0;
        for j in 0..n {
            if j != agent {
                w *= views[j][joint[j]];
            }
        }
        q[joint[agent]] += w * r;
    }
    q
}

fn run_scheme(
    game: &ExactGame,
    groups: &GroupSpec,
    init: &[Vec<f64>],
    lr: f64,
    scheme: Scheme,
    reference: &[usize],
) -> Vec<f64> {
    let n = game.n_agents();
    let owner = |i: usize| if scheme == Scheme::NoPs { i } else { groups.group_of(i) };
    let mut params: Vec<Vec<f64>> = match scheme {
        Scheme::NoPs => (0..n).map(|i| init[groups.group_of(i)].clone()).collect(),
        _ => init.to_vec(),
    };
    let snapshot: Vec<Vec<f64>> = (0..n).map(|i| softmax(&init[groups.group_of(i)])).collect();
    let order = groups.ordering();
    let mut updated: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut before: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut ratios = Vec::with_capacity(n);
    for (pos, &i) in order.iter().enumerate() {
        before[i] = softmax(&params[owner(i)]);
        let views: Vec<Vec<f64>> = (0..n)
            .map(|j| match &updated[j] {
                Some(p) => p.clone(),
                None if j == i => before[i].clone(),
                None if scheme == Scheme::ParPsFpb => snapshot[j].clone(),
                None => softmax(&params[owner(j)]),
            })
            .collect();
        let q = marginal_payoff(game, i, &views);
        let p = &before[i];
        let mean: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
        for (k, theta) in params[owner(i)].iter_mut().enumerate() {
            *theta += lr * p[k] * (q[k] - mean);
        }
        updated[i] = Some(softmax(&params[owner(i)]));
        let mut f = 1.0;
        for &j in &order[..pos] {
            let num = match scheme {
                Scheme::ParPsDrifted => softmax(&params[owner(j)])[reference[j]],
                _ => updated[j].as_ref().expect("predecessor updated")[reference[j]],
            };
            let den = match scheme {
                Scheme::ParPsFpb => snapshot[j][reference[j]],
                _ => before[j][reference[j]],
            };
            f *= num / den;
        }
        ratios.push(f);
    }
    ratios
}

/// Sequential exact policy-gradient pass on every agent in the group ordering,
/// reporting `F_i = pi_bar_{1:i-1}(a) / pi_{1:i-1}(a)` at `reference` under each scheme.
///
/// `init` holds one logit row per group; under NoPS each agent starts from a
/// private copy of its group's row. Each agent takes one ascent step of size
/// `lr` on its expected payoff with predecessors at their updated policies.
/// `F_i` is formed once agent `i` has been updated: the drifted scheme reads
/// the predecessors' policies from the live shared parameters at that moment,
/// the other schemes use the policies recorded right after each predecessor's
/// own update. Successors are seen live, except under FPB where the pre-update
/// snapshot is used.
pub fn ratio_diagnostic(
    game: &ExactGame,
    init: &[Vec<f64>],
    lr: f64,
    reference: Option<&[usize]>,
) -> Result<RatioReport> {
    check_size(game)?;
    let groups = game.groups();
    if init.len() != groups.n_groups() || init.iter().any(|l| l.len() != game.n_actions()) {
        return Err(Error::Shape(format!(
            "need {} logit rows of {} actions",
            groups.n_groups(),
            game.n_actions()
        )));
    }
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::Config(format!("learning rate {lr} must be finite and >= 0")));
    }
    let reference = match reference {
        Some(r) if r.len() == game.n_agents() && r.iter().all(|&a| a < game.n_actions()) => r.to_vec(),
        Some(r) => return Err(Error::Shape(format!("reference joint action {r:?} does not fit the game"))),
        None => game.enumerate()?.1,
    };
    let run = |s| run_scheme(game, groups, init, lr, s, &reference);
    Ok(RatioReport {
        lr,
        ordering: groups.ordering().to_vec(),
        reference: reference.clone(),
        nops: run(Scheme::NoPs),
        drifted: run(Scheme::ParPsDrifted),
        fpb: run(Scheme::ParPsFpb),
    })
}
