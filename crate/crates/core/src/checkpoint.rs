//! Versioned binary checkpoint of critic heads, grouped actors and their optimizer states.
//!
//! Layout (little endian): magic `OMDPGCKP`, `u32` version, `u64` update count,
//! the critic block and the actor block. Every real number is stored as `f64`,
//! so both `f32` and `f64` learners round-trip exactly.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use crate::ccga::GroupedActors;
use crate::envs::{ActionSpace, GroupSpec};
use crate::error::{Error, Result};
use crate::gqc::{CriticEnsemble, CriticHeads};
use crate::numkit::{Activation, AdamConfig, Dense, MlpGrads, MlpParams, OptState};
use crate::Scalar;

const MAGIC: &[u8; 8] = b"OMDPGCKP";
const VERSION: u32 = 1;

fn write_real<W: Write, T: Scalar>(w: &mut W, v: T) -> Result<()> {
    w.write_f64::<LE>(v.as_f64())?;
    Ok(())
}

fn read_real<R: Read, T: Scalar>(r: &mut R) -> Result<T> {
    Ok(T::lit(r.read_f64::<LE>()?))
}

fn write_usizes<W: Write>(w: &mut W, v: &[usize]) -> Result<()> {
    w.write_u32::<LE>(v.len() as u32)?;
    for &x in v {
        w.write_u64::<LE>(x as u64)?;
    }
    Ok(())
}

fn read_usizes<R: Read>(r: &mut R) -> Result<Vec<usize>> {
    let n = r.read_u32::<LE>()? as usize;
    (0..n).map(|_| Ok(r.read_u64::<LE>()? as usize)).collect()
}

fn write_net<W: Write, T: Scalar>(w: &mut W, net: &MlpParams<T>) -> Result<()> {
    w.write_u32::<LE>(net.layers().len() as u32)?;
    for layer in net.layers() {
        w.write_u32::<LE>(layer.out_dim() as u32)?;
        w.write_u32::<LE>(layer.in_dim() as u32)?;
        w.write_u8(layer.activation.code())?;
        for &v in layer.weight.iter().chain(layer.bias.iter()) {
            write_real(w, v)?;
        }
    }
    Ok(())
}

fn read_net<R: Read, T: Scalar>(r: &mut R) -> Result<MlpParams<T>> {
    let depth = r.read_u32::<LE>()? as usize;
    if depth == 0 || depth > 64 {
        return Err(Error::Format(format!("implausible layer count {depth}")));
    }
    let mut layers = Vec::with_capacity(depth);
    for _ in 0..depth {
        let out = r.read_u32::<LE>()? as usize;
        let inp = r.read_u32::<LE>()? as usize;
        if out == 0 || inp == 0 || out * inp > 1 << 26 {
            return Err(Error::Format(format!("implausible layer shape {out}x{inp}")));
        }
        let activation = Activation::from_code(r.read_u8()?)?;
        let w: Vec<T> = (0..out * inp).map(|_| read_real(r)).collect::<Result<_>>()?;
        let b: Vec<T> = (0..out).map(|_| read_real(r)).collect::<Result<_>>()?;
        layers.push(Dense {
            weight: Array2::from_shape_vec((out, inp), w).map_err(|e| Error::Format(e.to_string()))?,
            bias: Array1::from(b),
            activation,
        });
    }
    MlpParams::from_layers(layers)
}

fn write_grads<W: Write, T: Scalar>(w: &mut W, g: &MlpGrads<T>) -> Result<()> {
    for v in g.flatten() {
        write_real(w, v)?;
    }
    Ok(())
}

fn read_grads<R: Read, T: Scalar>(r: &mut R, like: &MlpParams<T>) -> Result<MlpGrads<T>> {
    let mut g = MlpGrads::zeros_like(like);
    for (gw, gb) in &mut g.layers {
        for v in gw.iter_mut().chain(gb.iter_mut()) {
            *v = read_real(r)?;
        }
    }
    Ok(g)
}

fn write_opt<W: Write, T: Scalar>(w: &mut W, o: &OptState<T>) -> Result<()> {
    for v in [o.config.lr, o.config.beta1, o.config.beta2, o.config.eps] {
        write_real(w, v)?;
    }
    w.write_u64::<LE>(o.step)?;
    write_grads(w, &o.first)?;
    write_grads(w, &o.second)
}

fn read_opt<R: Read, T: Scalar>(r: &mut R, like: &MlpParams<T>) -> Result<OptState<T>> {
    let config = AdamConfig {
        lr: read_real(r)?,
        beta1: read_real(r)?,
        beta2: read_real(r)?,
        eps: read_real(r)?,
    };
    config.validate()?;
    let step = r.read_u64::<LE>()?;
    Ok(OptState {
        config,
        first: read_grads(r, like)?,
        second: read_grads(r, like)?,
        step,
    })
}

/// Serializes the learner state.
pub fn write_checkpoint<W: Write, T: Scalar>(
    mut w: W,
    critic: &CriticEnsemble<T>,
    actors: &GroupedActors<T>,
    updates: u64,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u64::<LE>(updates)?;

    w.write_u32::<LE>(critic.n_heads() as u32)?;
    w.write_u64::<LE>(critic.state_dim() as u64)?;
    w.write_u64::<LE>(critic.action_dim() as u64)?;
    for h in 0..critic.n_heads() {
        write_net(&mut w, critic.online(h))?;
        write_net(&mut w, critic.target(h))?;
        write_opt(&mut w, critic.opt_state(h))?;
    }

    let groups = actors.groups();
    write_usizes(&mut w, groups.assignment())?;
    write_usizes(&mut w, groups.ordering())?;
    let layout = crate::ccga::GreedyActor::layout(actors);
    match layout.space {
        ActionSpace::Continuous { dim } => {
            w.write_u8(0)?;
            w.write_u64::<LE>(dim as u64)?;
        }
        ActionSpace::Discrete { n } => {
            w.write_u8(1)?;
            w.write_u64::<LE>(n as u64)?;
        }
    }
    w.write_u64::<LE>(actors.obs_dim() as u64)?;
    write_real(&mut w, actors.exploration_sigma())?;
    for g in 0..actors.n_groups() {
        write_net(&mut w, actors.group_online(g))?;
        write_net(&mut w, actors.group_target(g))?;
        write_opt(&mut w, actors.group_opt(g))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a checkpoint written by [`write_checkpoint`].
pub fn read_checkpoint<R: Read, T: Scalar>(mut r: R) -> Result<(CriticEnsemble<T>, GroupedActors<T>, u64)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let updates = r.read_u64::<LE>()?;

    let heads = r.read_u32::<LE>()? as usize;
    let state_dim = r.read_u64::<LE>()? as usize;
    let action_dim = r.read_u64::<LE>()? as usize;
    if heads > 1024 {
        return Err(Error::Format(format!("implausible head count {heads}")));
    }
    let (mut online, mut target, mut opt) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..heads {
        let o = read_net(&mut r)?;
        let t = read_net(&mut r)?;
        let s = read_opt(&mut r, &o)?;
        online.push(o);
        target.push(t);
        opt.push(s);
    }
    let critic = CriticEnsemble::from_parts(online, target, opt, state_dim, action_dim)?;

    let assignment = read_usizes(&mut r)?;
    let ordering = read_usizes(&mut r)?;
    let groups = GroupSpec::new(assignment, ordering)?;
    let kind = r.read_u8()?;
    let size = r.read_u64::<LE>()? as usize;
    let space = match kind {
        0 => ActionSpace::Continuous { dim: size },
        1 => ActionSpace::Discrete { n: size },
        k => return Err(Error::Format(format!("unknown action space tag {k}"))),
    };
    let obs_dim = r.read_u64::<LE>()? as usize;
    let sigma = read_real(&mut r)?;
    let (mut online, mut target, mut opt) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..groups.n_groups() {
        let o = read_net(&mut r)?;
        let t = read_net(&mut r)?;
        let s = read_opt(&mut r, &o)?;
        online.push(o);
        target.push(t);
        opt.push(s);
    }
    let actors = GroupedActors::from_parts(online, target, opt, groups, space, obs_dim, sigma)?;
    Ok((critic, actors, updates))
}
