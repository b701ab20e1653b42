//! Binary checkpoint container.
//!
//! Versioned little-endian format holding both network shape tables and
//! flat parameter vectors, the exploration σ, the observation layout
//! version, the producing config hash, optimizer state and the iteration
//! counter. Round-trips are bit-exact.

use std::io::Write as _;
use std::path::Path;

use super::adam::Adam;
use super::policy::GaussianPolicy;
use super::{Mlp, MlpSpec, NnError};

const MAGIC: &[u8; 8] = b"MMCKPT01";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub obs_layout_version: u32,
    pub config_hash: u64,
    pub iteration: u64,
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub adam_policy: Adam,
    pub adam_value: Adam,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for v in vs {
            self.f64(*v);
        }
    }
    fn spec(&mut self, s: &MlpSpec) {
        self.u32(s.input as u32);
        self.u32(s.hidden.len() as u32);
        for h in &s.hidden {
            self.u32(*h as u32);
        }
        self.u32(s.output as u32);
        self.u8(s.output_tanh as u8);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.at + n > self.buf.len() {
            return Err(NnError::CorruptCheckpoint("unexpected end of file".into()));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, NnError> {
        let n = self.u64()? as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }
    fn spec(&mut self) -> Result<MlpSpec, NnError> {
        let input = self.u32()? as usize;
        let n_hidden = self.u32()? as usize;
        let mut hidden = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden.push(self.u32()? as usize);
        }
        let output = self.u32()? as usize;
        let output_tanh = self.u8()? != 0;
        Ok(MlpSpec {
            input,
            hidden,
            output,
            output_tanh,
        })
    }
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(CHECKPOINT_FORMAT_VERSION);
    w.u32(ck.obs_layout_version);
    w.u64(ck.config_hash);
    w.u64(ck.iteration);
    w.f64(ck.policy.sigma);
    w.spec(&ck.policy.mean.spec);
    w.spec(&ck.value.spec);
    w.f64s(&ck.policy.mean.flatten());
    w.f64s(&ck.value.flatten());
    for adam in [&ck.adam_policy, &ck.adam_value] {
        w.u64(adam.step_count);
        w.f64(adam.learning_rate);
        let (m, v) = adam.state();
        w.f64s(m);
        w.f64s(v);
    }
    w.buf
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, NnError> {
    let mut r = Reader { buf: bytes, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(NnError::CorruptCheckpoint("bad magic".into()));
    }
    let format = r.u32()?;
    if format != CHECKPOINT_FORMAT_VERSION {
        return Err(NnError::CorruptCheckpoint(format!(
            "unsupported format version {format}"
        )));
    }
    let obs_layout_version = r.u32()?;
    let config_hash = r.u64()?;
    let iteration = r.u64()?;
    let sigma = r.f64()?;
    let policy_spec = r.spec()?;
    let value_spec = r.spec()?;
    let policy_params = r.f64s()?;
    let value_params = r.f64s()?;

    let mut policy_mean = Mlp::zeros(policy_spec);
    policy_mean.unflatten_into(&policy_params)?;
    let mut value = Mlp::zeros(value_spec);
    value.unflatten_into(&value_params)?;

    let mut adams = Vec::new();
    for params in [&policy_params, &value_params] {
        let step_count = r.u64()?;
        let lr = r.f64()?;
        let m = r.f64s()?;
        let v = r.f64s()?;
        if m.len() != params.len() || v.len() != params.len() {
            return Err(NnError::CorruptCheckpoint("optimizer state size mismatch".into()));
        }
        let mut adam = Adam::new(params.len(), lr);
        adam.restore(m, v, step_count);
        adams.push(adam);
    }
    let adam_value = adams.pop().unwrap();
    let adam_policy = adams.pop().unwrap();

    Ok(Checkpoint {
        obs_layout_version,
        config_hash,
        iteration,
        policy: GaussianPolicy::new(policy_mean, sigma),
        value,
        adam_policy,
        adam_value,
    })
}

pub fn save(ck: &Checkpoint, path: &Path) -> Result<(), NnError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(ck))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint, NnError> {
    decode(&std::fs::read(path)?)
}

/// Validates the stored observation-layout version against the binary's.
pub fn check_layout(ck: &Checkpoint, expected: u32) -> Result<(), NnError> {
    if ck.obs_layout_version != expected {
        return Err(NnError::LayoutVersionMismatch {
            expected,
            got: ck.obs_layout_version,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_checkpoint() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pspec = MlpSpec {
            input: 7,
            hidden: vec![5, 4],
            output: 3,
            output_tanh: true,
        };
        let vspec = MlpSpec {
            input: 7,
            hidden: vec![5],
            output: 1,
            output_tanh: false,
        };
        let policy = GaussianPolicy::new(Mlp::init(pspec.clone(), 1.0, 0.01, &mut rng), 0.03);
        let value = Mlp::init(vspec.clone(), 1.0, 1.0, &mut rng);
        let mut adam_policy = Adam::new(pspec.param_count(), 1e-4);
        let mut adam_value = Adam::new(vspec.param_count(), 1e-4);
        // Dirty the optimizer state so the round trip is non-trivial.
        let mut p = policy.mean.flatten();
        let g = vec![0.01; p.len()];
        adam_policy.step(&mut p, &g);
        let mut v = value.flatten();
        let g = vec![-0.02; v.len()];
        adam_value.step(&mut v, &g);
        Checkpoint {
            obs_layout_version: 1,
            config_hash: 0xDEAD_BEEF_1234_5678,
            iteration: 42,
            policy,
            value,
            adam_policy,
            adam_value,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample_checkpoint();
        let bytes = encode(&ck);
        let back = decode(&bytes).unwrap();
        assert_eq!(encode(&back), bytes);
        assert_eq!(back.iteration, 42);
        assert_eq!(back.config_hash, ck.config_hash);
        assert_eq!(back.policy.mean.flatten(), ck.policy.mean.flatten());
        assert_eq!(back.value.flatten(), ck.value.flatten());
        assert_eq!(back.adam_policy.state().0, ck.adam_policy.state().0);
    }

    #[test]
    fn layout_mismatch_is_detected() {
        let ck = sample_checkpoint();
        assert!(check_layout(&ck, 1).is_ok());
        assert!(matches!(
            check_layout(&ck, 2),
            Err(NnError::LayoutVersionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let ck = sample_checkpoint();
        let mut bytes = encode(&ck);
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(NnError::CorruptCheckpoint(_))));
    }
}
