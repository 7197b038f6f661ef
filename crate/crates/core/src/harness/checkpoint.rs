//! Binary checkpoint of a [`LearnerBundle`].
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes   "VIPGCKPT"
//! version      u32       1
//! digest       32 bytes  scenario digest
//! algorithm    u8        0 = maddpg, 1 = ddpg
//! critic_obs   u8        0 = own, 1 = all
//! shared       u8        0 / 1
//! reserved     u8        0
//! n_agents     u32
//! obs_dim      u32
//! act_dim      u32
//! n_slots      u32       learner slots that follow
//! per slot:
//!   noise_scale  f64
//!   network x4   actor, critic, target_actor, target_critic
//!     n_sizes    u32
//!     sizes      u32 x n_sizes
//!     output     u8       0 = identity, 1 = tanh
//!     params     f64 x P  per layer: weight row-major (out x in), then bias
//!   optimizer x2 actor_opt, critic_opt (shapes follow actor / critic)
//!     step       u64
//!     lr, beta1, beta2, epsilon   f64 x 4
//!     first moment  f64 x P
//!     second moment f64 x P
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::marl::{AgentNets, Algorithm, CriticLayout, CriticObs, LearnerBundle};
use crate::nn::{Activation, Adam, AdamConfig, Dense, Mlp};
use crate::scenario::ScenarioDigest;

pub const MAGIC: &[u8; 8] = b"VIPGCKPT";
pub const VERSION: u32 = 1;

/// Bytes before the first slot.
pub const HEADER_LEN: usize = 8 + 4 + 32 + 4 + 4 * 4;

pub fn save_checkpoint(bundle: &LearnerBundle, digest: &ScenarioDigest, path: &Path) -> Result<()> {
    let bytes = encode(bundle, digest)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected: &ScenarioDigest) -> Result<LearnerBundle> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, expected)
}

pub fn encode(bundle: &LearnerBundle, digest: &ScenarioDigest) -> Result<Vec<u8>> {
    if !bundle.is_finite() {
        return Err(Error::contract("refusing to checkpoint non-finite parameters"));
    }
    let l = &bundle.layout;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&digest.0);
    out.push(match l.algorithm {
        Algorithm::Maddpg => 0,
        Algorithm::Ddpg => 1,
    });
    out.push(match l.critic_obs {
        CriticObs::Own => 0,
        CriticObs::All => 1,
    });
    out.push(bundle.shared as u8);
    out.push(0);
    for v in [l.n_agents, l.obs_dim, l.act_dim, bundle.agents.len()] {
        out.extend_from_slice(&u32_of(v)?.to_le_bytes());
    }
    for a in &bundle.agents {
        out.extend_from_slice(&a.noise_scale.to_le_bytes());
        for net in [&a.actor, &a.critic, &a.target_actor, &a.target_critic] {
            write_net(&mut out, net)?;
        }
        write_opt(&mut out, &a.actor_opt);
        write_opt(&mut out, &a.critic_opt);
    }
    Ok(out)
}

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::contract(format!("{v} does not fit the checkpoint format")))
}

fn write_net(out: &mut Vec<u8>, net: &Mlp) -> Result<()> {
    let sizes = net.sizes();
    out.extend_from_slice(&u32_of(sizes.len())?.to_le_bytes());
    for s in sizes {
        out.extend_from_slice(&u32_of(s)?.to_le_bytes());
    }
    out.push(match net.output_activation() {
        Activation::Identity => 0,
        Activation::Tanh => 1,
    });
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(())
}

fn write_layers(out: &mut Vec<u8>, layers: &[Dense]) {
    for l in layers {
        for v in l.weight.iter().chain(l.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn write_opt(out: &mut Vec<u8>, opt: &Adam) {
    out.extend_from_slice(&opt.step.to_le_bytes());
    let c = opt.config;
    for v in [c.learning_rate, c.beta1, c.beta2, c.epsilon] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_layers(out, &opt.first_moment);
    write_layers(out, &opt.second_moment);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Corrupt {
                what: "checkpoint",
                message: format!("truncated at byte {} (wanted {n} more)", self.pos),
            }),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn layers_like(&mut self, shape: &[Dense]) -> Result<Vec<Dense>> {
        shape
            .iter()
            .map(|l| {
                let (rows, cols) = l.weight.dim();
                let w: Vec<f64> = (0..rows * cols).map(|_| self.f64()).collect::<Result<_>>()?;
                let b: Vec<f64> = (0..rows).map(|_| self.f64()).collect::<Result<_>>()?;
                Ok(Dense {
                    weight: Array2::from_shape_vec((rows, cols), w).expect("sized"),
                    bias: Array1::from(b),
                })
            })
            .collect()
    }

    fn net(&mut self) -> Result<Mlp> {
        let n = self.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(corrupt(format!("implausible layer count {n}")));
        }
        let sizes: Vec<usize> = (0..n).map(|_| self.u32().map(|s| s as usize)).collect::<Result<_>>()?;
        let act = match self.u8()? {
            0 => Activation::Identity,
            1 => Activation::Tanh,
            other => return Err(corrupt(format!("unknown activation tag {other}"))),
        };
        let params: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if params.saturating_mul(8) > self.bytes.len() - self.pos {
            return Err(corrupt("network larger than the remaining file".into()));
        }
        let shape: Vec<Dense> = sizes
            .windows(2)
            .map(|w| Dense {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Mlp::from_layers(self.layers_like(&shape)?, act)
    }

    fn opt(&mut self, shape: &Mlp) -> Result<Adam> {
        let step = self.u64()?;
        let config = AdamConfig {
            learning_rate: self.f64()?,
            beta1: self.f64()?,
            beta2: self.f64()?,
            epsilon: self.f64()?,
        };
        let first_moment = self.layers_like(shape.layers())?;
        let second_moment = self.layers_like(shape.layers())?;
        Ok(Adam {
            config,
            step,
            first_moment,
            second_moment,
        })
    }
}

fn corrupt(message: String) -> Error {
    Error::Corrupt {
        what: "checkpoint",
        message,
    }
}

pub fn decode(bytes: &[u8], expected: &ScenarioDigest) -> Result<LearnerBundle> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Version {
            what: "checkpoint",
            found: version,
            expected: VERSION,
        });
    }
    let digest = ScenarioDigest(r.take(32)?.try_into().expect("32 bytes"));
    if &digest != expected {
        return Err(Error::DigestMismatch {
            found: digest.to_string(),
            expected: expected.to_string(),
        });
    }
    let algorithm = match r.u8()? {
        0 => Algorithm::Maddpg,
        1 => Algorithm::Ddpg,
        t => return Err(corrupt(format!("unknown algorithm tag {t}"))),
    };
    let critic_obs = match r.u8()? {
        0 => CriticObs::Own,
        1 => CriticObs::All,
        t => return Err(corrupt(format!("unknown critic_obs tag {t}"))),
    };
    let shared = match r.u8()? {
        0 => false,
        1 => true,
        t => return Err(corrupt(format!("bad shared flag {t}"))),
    };
    r.u8()?;
    let layout = CriticLayout {
        algorithm,
        critic_obs,
        n_agents: r.u32()? as usize,
        obs_dim: r.u32()? as usize,
        act_dim: r.u32()? as usize,
    };
    let slots = r.u32()? as usize;
    let expected_slots = if shared { 1 } else { layout.n_agents };
    if slots != expected_slots {
        return Err(corrupt(format!("{slots} learner slots, expected {expected_slots}")));
    }
    let mut agents = Vec::with_capacity(slots);
    for _ in 0..slots {
        let noise_scale = r.f64()?;
        let actor = r.net()?;
        let critic = r.net()?;
        let target_actor = r.net()?;
        let target_critic = r.net()?;
        let actor_opt = r.opt(&actor)?;
        let critic_opt = r.opt(&critic)?;
        let shapes_ok = actor.input_dim() == layout.obs_dim
            && actor.output_dim() == layout.act_dim
            && critic.input_dim() == layout.input_dim()
            && critic.output_dim() == 1
            && target_actor.same_shape(&actor)
            && target_critic.same_shape(&critic);
        if !shapes_ok {
            return Err(corrupt("network shapes disagree with the header layout".into()));
        }
        agents.push(AgentNets {
            actor,
            critic,
            target_actor,
            target_critic,
            actor_opt,
            critic_opt,
            noise_scale,
        });
    }
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(LearnerBundle {
        layout,
        shared,
        agents,
    })
}
