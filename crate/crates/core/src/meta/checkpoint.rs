//! Binary checkpoint of a [`MetaState`].
//!
//! Layout (all integers little-endian):
//! magic `MIGNNCKP`, version `u32`, seed `u64`, kept epoch `u64`,
//! Adam step `u64` and `lr, beta1, beta2, eps` as `f64`,
//! rng key (32 bytes), stream `u64`, word position `u128`,
//! config text (`u64` length + UTF-8), array count `u32`, then per array
//! a name (`u32` length + UTF-8), rank `u32` and dims `u64`;
//! finally every array's values as `f64` in manifest order.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::encoders::ParamVector;
use crate::error::{Error, Result};
use crate::gradcore::Tensor;
use crate::meta::{Adam, GraphPrior, MetaConfig, MetaState};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"MIGNNCKP";
pub const VERSION: u32 = 1;

fn manifest<T: Scalar>(state: &MetaState<T>) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let flat = |t: &Tensor<T>| t.to_f64_vec();
    let mut out = vec![("theta".to_string(), vec![state.theta.len()], flat(&state.theta.data))];
    for (name, off, shape) in state.prior.layout.segments() {
        let n: usize = shape.iter().product();
        out.push((name, shape, flat(&state.prior.data)[off..off + n].to_vec()));
    }
    for (k, which) in ["theta", "phi"].iter().enumerate() {
        let len = state.adam.m[k].len();
        out.push((format!("adam.m.{which}"), vec![len], flat(&state.adam.m[k])));
        out.push((format!("adam.v.{which}"), vec![len], flat(&state.adam.v[k])));
    }
    out
}

pub fn to_bytes<T: Scalar>(state: &MetaState<T>) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.extend_from_slice(&state.seed.to_le_bytes());
    b.extend_from_slice(&(state.epoch as u64).to_le_bytes());
    let a = &state.adam;
    b.extend_from_slice(&a.step.to_le_bytes());
    for v in [a.lr, a.beta1, a.beta2, a.eps] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b.extend_from_slice(&state.rng.get_seed());
    b.extend_from_slice(&state.rng.get_stream().to_le_bytes());
    b.extend_from_slice(&state.rng.get_word_pos().to_le_bytes());
    let cfg = state.config.to_kv();
    b.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    b.extend_from_slice(cfg.as_bytes());
    let arrays = manifest(state);
    b.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, shape, _) in &arrays {
        b.extend_from_slice(&(name.len() as u32).to_le_bytes());
        b.extend_from_slice(name.as_bytes());
        b.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            b.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for (_, _, values) in &arrays {
        for v in values {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("text field is not UTF-8".into()))
    }
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<MetaState<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let seed = r.u64()?;
    let epoch = r.u64()? as usize;
    let step = r.u64()?;
    let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let mut rng = ChaCha8Rng::from_seed(r.array::<32>()?);
    rng.set_stream(r.u64()?);
    rng.set_word_pos(u128::from_le_bytes(r.array()?));
    let cfg_len = r.u64()? as usize;
    let config = MetaConfig::from_kv(&r.string(cfg_len)?)?;

    let skeleton = MetaState::<T>::from_parts(
        ParamVector::from_data(&config.spec, Tensor::zeros(&[config.spec.param_len()]))?,
        GraphPrior::zeros(MetaState::<T>::layout(&config)),
        config.clone(),
        seed,
        rng.clone(),
    );
    let expected = manifest(&skeleton);
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!("{count} arrays, expected {}", expected.len())));
    }
    for (name, shape, _) in &expected {
        let len = r.u32()? as usize;
        let got = r.string(len)?;
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if &got != name || &dims != shape {
            return Err(Error::Checkpoint(format!(
                "array `{got}` {dims:?} does not match expected `{name}` {shape:?}"
            )));
        }
    }
    let mut read = |n: usize| -> Result<Vec<T>> { (0..n).map(|_| r.f64().map(T::of)).collect() };
    let theta = read(skeleton.theta.len())?;
    let phi = read(skeleton.prior.data.len())?;
    let (mt, vt) = (read(theta.len())?, read(theta.len())?);
    let (mp, vp) = (read(phi.len())?, read(phi.len())?);
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let adam = Adam {
        lr,
        beta1,
        beta2,
        eps,
        step,
        m: vec![Tensor::vector(mt), Tensor::vector(mp)],
        v: vec![Tensor::vector(vt), Tensor::vector(vp)],
    };
    Ok(MetaState {
        theta: ParamVector::from_data(&config.spec, Tensor::vector(theta))?,
        prior: GraphPrior::from_data(skeleton.prior.layout, Tensor::vector(phi))?,
        adam,
        config,
        seed,
        rng,
        epoch,
    })
}

pub fn save<T: Scalar>(state: &MetaState<T>, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(state))?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<MetaState<T>> {
    let bytes = fs::read(path).map_err(|e| Error::Load { path: path.to_path_buf(), msg: e.to_string() })?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{Arch, EncoderSpec};
    use crate::meta::HyperParams;
    use rand::RngCore;

    fn state() -> MetaState<f64> {
        let cfg = MetaConfig::new(EncoderSpec::new(Arch::Gcn, 3, 2), HyperParams::default(), false);
        let mut s = MetaState::init(&cfg, 42);
        s.adam.step = 7;
        s.adam.m[0].data_mut()[3] = -1.25e-7;
        s.adam.v[1].data_mut()[5] = 3.5;
        s.rng.next_u64();
        s.epoch = 12;
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = state();
        let bytes = to_bytes(&s);
        let back: MetaState<f64> = from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = to_bytes(&state());
        assert!(matches!(from_bytes::<f64>(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes::<f64>(&bad), Err(Error::Checkpoint(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(from_bytes::<f64>(&extra), Err(Error::Checkpoint(_))));
    }
}
