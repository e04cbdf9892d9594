//! Versioned binary checkpoints.
//!
//! Layout: the 8-byte magic `CMADDPG\0`, a little-endian `u32` format
//! version, then named fields until a field called `end`. Each field is
//! `u16` name length, UTF-8 name, one kind byte, and a payload:
//!
//! | kind | payload                                   |
//! |------|-------------------------------------------|
//! | 1    | `u64`                                     |
//! | 2    | `u64` count, then `count` × `f64`         |
//! | 3    | `u64` length, then raw bytes              |
//! | 4    | `u128`                                    |
//! | 5    | `u64` count, then `count` × `u64`         |
//!
//! All integers and floats are little-endian, so a checkpoint restores the
//! exact bit patterns it was written from.

use std::collections::HashMap;
use std::path::Path;

use coop_maddpg::env::{Team, WorldConfig};
use coop_maddpg::maddpg::{
    AgentLearner, ReplayBuffer, RngState, TargetRule, TrainConfig, TrainerSnapshot, Transition,
};
use coop_maddpg::neural::{Adam, Mlp};

use crate::config::ExperimentConfig;
use crate::{io_err, HarnessError, Result};

pub const MAGIC: &[u8; 8] = b"CMADDPG\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A saved training state together with the experiment it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub experiment: ExperimentConfig,
    pub run_seed: u64,
    pub snapshot: TrainerSnapshot,
}

enum Field {
    U64(u64),
    F64s(Vec<f64>),
    Bytes(Vec<u8>),
    U128(u128),
    U64s(Vec<u64>),
}

struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn new() -> Self {
        let mut buf = MAGIC.to_vec();
        buf.extend(CHECKPOINT_VERSION.to_le_bytes());
        Self { buf }
    }

    fn name(&mut self, name: &str, kind: u8) {
        self.buf.extend((name.len() as u16).to_le_bytes());
        self.buf.extend(name.as_bytes());
        self.buf.push(kind);
    }

    fn u64(&mut self, name: &str, v: u64) {
        self.name(name, 1);
        self.buf.extend(v.to_le_bytes());
    }

    fn f64s(&mut self, name: &str, v: &[f64]) {
        self.name(name, 2);
        self.buf.extend((v.len() as u64).to_le_bytes());
        for x in v {
            self.buf.extend(x.to_le_bytes());
        }
    }

    fn bytes(&mut self, name: &str, v: &[u8]) {
        self.name(name, 3);
        self.buf.extend((v.len() as u64).to_le_bytes());
        self.buf.extend(v);
    }

    fn u128(&mut self, name: &str, v: u128) {
        self.name(name, 4);
        self.buf.extend(v.to_le_bytes());
    }

    fn u64s(&mut self, name: &str, v: &[u64]) {
        self.name(name, 5);
        self.buf.extend((v.len() as u64).to_le_bytes());
        for x in v {
            self.buf.extend(x.to_le_bytes());
        }
    }

    fn mlp(&mut self, prefix: &str, net: &Mlp) {
        let sizes: Vec<u64> = net.layer_sizes().iter().map(|&s| s as u64).collect();
        self.u64s(&format!("{prefix}.sizes"), &sizes);
        self.f64s(&format!("{prefix}.params"), &net.to_flat());
    }

    fn adam(&mut self, prefix: &str, opt: &Adam) {
        self.u64(&format!("{prefix}.timestep"), opt.timestep);
        self.f64s(&format!("{prefix}.hyper"), &[opt.beta1, opt.beta2, opt.eps]);
        let flat = |layers: &[coop_maddpg::neural::Dense]| -> Vec<f64> {
            layers
                .iter()
                .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
                .collect()
        };
        self.f64s(&format!("{prefix}.m"), &flat(&opt.first_moment));
        self.f64s(&format!("{prefix}.v"), &flat(&opt.second_moment));
    }
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let s = &ckpt.snapshot;
    let mut e = Encoder::new();
    e.bytes("experiment", ckpt.experiment.to_toml().as_bytes());
    e.u64("run_seed", ckpt.run_seed);
    e.bytes("train", toml::to_string(&s.train).expect("serializes").as_bytes());
    e.bytes("world", toml::to_string(&s.world).expect("serializes").as_bytes());
    e.u64(
        "rule",
        match s.rule {
            TargetRule::Cooperative => 0,
            TargetRule::Reference => 1,
        },
    );
    e.u64("episodes_done", s.episodes_done as u64);
    e.u64("total_steps", s.total_steps);
    e.bytes("rng.seed", &s.rng.seed);
    e.u64("rng.stream", s.rng.stream);
    e.u128("rng.word_pos", s.rng.word_pos);

    e.u64("agents", s.learners.len() as u64);
    for (k, l) in s.learners.iter().enumerate() {
        e.u64(
            &format!("agent{k}.team"),
            match l.team {
                Team::Red => 0,
                Team::Green => 1,
            },
        );
        e.mlp(&format!("agent{k}.actor"), &l.actor);
        e.mlp(&format!("agent{k}.critic"), &l.critic);
        e.mlp(&format!("agent{k}.target_actor"), &l.target_actor);
        e.mlp(&format!("agent{k}.target_critic"), &l.target_critic);
        e.adam(&format!("agent{k}.actor_opt"), &l.actor_opt);
        e.adam(&format!("agent{k}.critic_opt"), &l.critic_opt);
    }

    let b = &s.buffer;
    let slots = b.slots();
    let dims = slots
        .first()
        .map(|t| [t.obs.len(), t.actions.len(), t.rewards.len()])
        .unwrap_or([0; 3]);
    e.u64("buffer.capacity", b.capacity() as u64);
    e.u64("buffer.cursor", b.cursor() as u64);
    e.u64("buffer.len", slots.len() as u64);
    e.u64s("buffer.dims", &dims.map(|d| d as u64));
    let gather = |f: &dyn Fn(&Transition) -> &[f64]| -> Vec<f64> {
        slots.iter().flat_map(|t| f(t).iter().copied()).collect()
    };
    e.f64s("buffer.obs", &gather(&|t| &t.obs));
    e.f64s("buffer.actions", &gather(&|t| &t.actions));
    e.f64s("buffer.rewards", &gather(&|t| &t.rewards));
    e.f64s("buffer.next_obs", &gather(&|t| &t.next_obs));
    let done: Vec<u64> = slots.iter().map(|t| t.done as u64).collect();
    e.u64s("buffer.done", &done);
    e.name("end", 0);
    e.buf
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

fn truncated() -> HarnessError {
    HarnessError::Checkpoint("file is truncated".into())
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(truncated)?;
        let out = self.data.get(self.pos..end).ok_or_else(truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn count(&mut self, width: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.saturating_mul(width) > self.data.len() - self.pos {
            return Err(truncated());
        }
        Ok(n)
    }
}

fn parse_fields(data: &[u8]) -> Result<HashMap<String, Field>> {
    let mut c = Cursor { data, pos: 0 };
    if c.take(MAGIC.len()).map_err(|_| bad("not a checkpoint file"))? != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)"));
    }
    let version = u32::from_le_bytes(c.array()?);
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "unsupported version {version}, this build reads version {CHECKPOINT_VERSION}"
        )));
    }
    let mut fields = HashMap::new();
    loop {
        let len = u16::from_le_bytes(c.array()?) as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| bad("field name is not UTF-8"))?
            .to_string();
        let kind = c.take(1)?[0];
        if name == "end" {
            break;
        }
        let value = match kind {
            1 => Field::U64(c.u64()?),
            2 => {
                let n = c.count(8)?;
                Field::F64s(
                    (0..n)
                        .map(|_| c.array().map(f64::from_le_bytes))
                        .collect::<Result<_>>()?,
                )
            }
            3 => {
                let n = c.count(1)?;
                Field::Bytes(c.take(n)?.to_vec())
            }
            4 => Field::U128(u128::from_le_bytes(c.array()?)),
            5 => {
                let n = c.count(8)?;
                Field::U64s((0..n).map(|_| c.u64()).collect::<Result<_>>()?)
            }
            other => return Err(bad(format!("field {name} has unknown kind {other}"))),
        };
        fields.insert(name, value);
    }
    if c.pos != data.len() {
        return Err(bad("trailing bytes after end marker"));
    }
    Ok(fields)
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Checkpoint(msg.into())
}

struct Fields(HashMap<String, Field>);

impl Fields {
    fn get(&self, name: &str) -> Result<&Field> {
        self.0.get(name).ok_or_else(|| bad(format!("missing field {name}")))
    }

    fn u64(&self, name: &str) -> Result<u64> {
        match self.get(name)? {
            Field::U64(v) => Ok(*v),
            _ => Err(bad(format!("field {name} should be an integer"))),
        }
    }

    fn u128(&self, name: &str) -> Result<u128> {
        match self.get(name)? {
            Field::U128(v) => Ok(*v),
            _ => Err(bad(format!("field {name} should be a 128-bit integer"))),
        }
    }

    fn f64s(&self, name: &str) -> Result<&[f64]> {
        match self.get(name)? {
            Field::F64s(v) => Ok(v),
            _ => Err(bad(format!("field {name} should be a float array"))),
        }
    }

    fn u64s(&self, name: &str) -> Result<&[u64]> {
        match self.get(name)? {
            Field::U64s(v) => Ok(v),
            _ => Err(bad(format!("field {name} should be an integer array"))),
        }
    }

    fn bytes(&self, name: &str) -> Result<&[u8]> {
        match self.get(name)? {
            Field::Bytes(v) => Ok(v),
            _ => Err(bad(format!("field {name} should be a byte string"))),
        }
    }

    fn text(&self, name: &str) -> Result<&str> {
        std::str::from_utf8(self.bytes(name)?).map_err(|_| bad(format!("field {name} is not UTF-8")))
    }

    fn mlp(&self, prefix: &str) -> Result<Mlp> {
        let sizes: Vec<usize> = self
            .u64s(&format!("{prefix}.sizes"))?
            .iter()
            .map(|&s| s as usize)
            .collect();
        let mut net = Mlp::zeros(&sizes).map_err(|e| bad(format!("{prefix}: {e}")))?;
        net.set_flat(self.f64s(&format!("{prefix}.params"))?)
            .map_err(|e| bad(format!("{prefix}: {e}")))?;
        Ok(net)
    }

    fn adam(&self, prefix: &str, shape_of: &Mlp) -> Result<Adam> {
        let mut opt = Adam::new(shape_of);
        opt.timestep = self.u64(&format!("{prefix}.timestep"))?;
        match self.f64s(&format!("{prefix}.hyper"))? {
            &[b1, b2, eps] => {
                opt.beta1 = b1;
                opt.beta2 = b2;
                opt.eps = eps;
            }
            _ => return Err(bad(format!("{prefix}.hyper must hold 3 values"))),
        }
        let moment = |name: &str| -> Result<Vec<coop_maddpg::neural::Dense>> {
            let mut m = Mlp::zeros(&shape_of.layer_sizes()).expect("valid sizes");
            m.set_flat(self.f64s(&format!("{prefix}.{name}"))?)
                .map_err(|e| bad(format!("{prefix}.{name}: {e}")))?;
            Ok(m.into_layers())
        };
        opt.first_moment = moment("m")?;
        opt.second_moment = moment("v")?;
        Ok(opt)
    }
}

pub fn decode(data: &[u8]) -> Result<Checkpoint> {
    let f = Fields(parse_fields(data)?);
    let experiment = ExperimentConfig::from_toml(f.text("experiment")?)
        .map_err(|e| bad(format!("embedded experiment config: {e}")))?;
    let train: TrainConfig =
        toml::from_str(f.text("train")?).map_err(|e| bad(format!("embedded train config: {e}")))?;
    let world: WorldConfig =
        toml::from_str(f.text("world")?).map_err(|e| bad(format!("embedded world config: {e}")))?;
    let rule = match f.u64("rule")? {
        0 => TargetRule::Cooperative,
        1 => TargetRule::Reference,
        other => return Err(bad(format!("unknown target rule {other}"))),
    };
    let seed: [u8; 32] = f
        .bytes("rng.seed")?
        .try_into()
        .map_err(|_| bad("rng.seed must be 32 bytes"))?;
    let rng = RngState {
        seed,
        stream: f.u64("rng.stream")?,
        word_pos: f.u128("rng.word_pos")?,
    };

    let agents = f.u64("agents")? as usize;
    let mut learners = Vec::with_capacity(agents);
    for k in 0..agents {
        let team = match f.u64(&format!("agent{k}.team"))? {
            0 => Team::Red,
            1 => Team::Green,
            other => return Err(bad(format!("agent{k} has unknown team {other}"))),
        };
        let actor = f.mlp(&format!("agent{k}.actor"))?;
        let critic = f.mlp(&format!("agent{k}.critic"))?;
        let actor_opt = f.adam(&format!("agent{k}.actor_opt"), &actor)?;
        let critic_opt = f.adam(&format!("agent{k}.critic_opt"), &critic)?;
        learners.push(AgentLearner {
            team,
            target_actor: f.mlp(&format!("agent{k}.target_actor"))?,
            target_critic: f.mlp(&format!("agent{k}.target_critic"))?,
            actor,
            critic,
            actor_opt,
            critic_opt,
        });
    }

    let len = f.u64("buffer.len")? as usize;
    let dims: Vec<usize> = f.u64s("buffer.dims")?.iter().map(|&d| d as usize).collect();
    let [obs_dim, act_dim, rew_dim] = dims[..] else {
        return Err(bad("buffer.dims must hold 3 values"));
    };
    let split = |name: &str, width: usize| -> Result<Vec<Vec<f64>>> {
        let flat = f.f64s(name)?;
        if flat.len() != len * width {
            return Err(bad(format!("{name} has {} values, expected {}", flat.len(), len * width)));
        }
        Ok(if width == 0 {
            vec![Vec::new(); len]
        } else {
            flat.chunks(width).map(<[f64]>::to_vec).collect()
        })
    };
    let obs = split("buffer.obs", obs_dim)?;
    let actions = split("buffer.actions", act_dim)?;
    let rewards = split("buffer.rewards", rew_dim)?;
    let next_obs = split("buffer.next_obs", obs_dim)?;
    let done = f.u64s("buffer.done")?;
    if done.len() != len {
        return Err(bad("buffer.done length mismatch"));
    }
    let entries: Vec<Transition> = obs
        .into_iter()
        .zip(actions)
        .zip(rewards)
        .zip(next_obs)
        .zip(done)
        .map(|((((obs, actions), rewards), next_obs), &d)| Transition {
            obs,
            actions,
            rewards,
            next_obs,
            done: d != 0,
        })
        .collect();
    let buffer = ReplayBuffer::from_parts(
        f.u64("buffer.capacity")? as usize,
        entries,
        f.u64("buffer.cursor")? as usize,
    )
    .map_err(|e| bad(e.to_string()))?;

    Ok(Checkpoint {
        experiment,
        run_seed: f.u64("run_seed")?,
        snapshot: TrainerSnapshot {
            train,
            world,
            rule,
            learners,
            buffer,
            rng,
            episodes_done: f.u64("episodes_done")? as usize,
            total_steps: f.u64("total_steps")?,
        },
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, encode(ckpt)).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let data = std::fs::read(path).map_err(io_err(path))?;
    decode(&data).map_err(|e| match e {
        HarnessError::Checkpoint(m) => HarnessError::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use coop_maddpg::maddpg::Trainer;

    fn small_experiment() -> ExperimentConfig {
        ExperimentConfig {
            train: TrainConfig {
                episodes: 4,
                batch_size: 16,
                warmup: 16,
                update_every: 10,
                buffer_capacity: 60,
                hidden_sizes: vec![8],
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    fn checkpoint_after(episodes: usize) -> Checkpoint {
        let exp = small_experiment();
        let mut t = Trainer::new(exp.train_for_seed(5), exp.world.clone()).unwrap();
        for _ in 0..episodes {
            t.run_episode().unwrap();
        }
        Checkpoint {
            snapshot: t.snapshot(&exp.world),
            experiment: exp,
            run_seed: 5,
        }
    }

    #[test]
    fn fresh_round_trip_is_exact() {
        let c = checkpoint_after(0);
        assert_eq!(decode(&encode(&c)).unwrap(), c);
    }

    #[test]
    fn wrapped_buffer_round_trip_is_exact() {
        // 4 episodes × 25 steps overflow the 60-slot ring
        let c = checkpoint_after(4);
        assert!(c.snapshot.buffer.cursor() != 0 && c.snapshot.buffer.len() == 60);
        let back = decode(&encode(&c)).unwrap();
        assert_eq!(back, c);
        for (a, b) in back.snapshot.learners[0]
            .critic
            .to_flat()
            .iter()
            .zip(c.snapshot.learners[0].critic.to_flat())
        {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bumped_version_is_rejected() {
        let mut bytes = encode(&checkpoint_after(0));
        bytes[8..12].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
        let err = decode(&bytes).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }

    #[test]
    fn truncation_is_rejected() {
        let bytes = encode(&checkpoint_after(1));
        for cut in [0, 5, 13, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(HarnessError::Checkpoint(_))), "cut {cut}");
        }
    }
}
