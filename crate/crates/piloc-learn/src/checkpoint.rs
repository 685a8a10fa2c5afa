//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic            8 bytes  "PILOCNET"
//! layout_version   u32
//! shared_trunk     u8
//! spec_digest      32 bytes (sha256 of layout version + canonical spec JSON)
//! spec_len         u32
//! spec_json        spec_len bytes UTF-8
//! param_count      u64
//! params           param_count x f64
//! optimizer_flag   u8 (0 = none, 1 = adam)
//! [adam]           step u64, m: param_count x f64, v: param_count x f64
//! ```
//!
//! Parameters are stored as f64 regardless of the in-memory scalar type;
//! loading an f64 checkpoint into an f64 network reproduces bit-identical
//! forward outputs.

use std::io::{self, Read, Write};

use piloc_core::scalar::Scalar;
use thiserror::Error;

use crate::net::Network;
use crate::optim::{Adam, AdamConfig};
use crate::spec::{LayerSpec, LAYOUT_VERSION};

pub const MAGIC: &[u8; 8] = b"PILOCNET";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic; not a checkpoint file")]
    BadMagic,
    #[error("layout version {got} unsupported (expected {LAYOUT_VERSION})")]
    BadVersion { got: u32 },
    #[error("spec digest mismatch; file is corrupt or from another layout")]
    DigestMismatch,
    #[error("malformed spec JSON: {0}")]
    BadSpec(#[from] serde_json::Error),
    #[error("declared parameter count {got} does not match spec ({expected})")]
    BadParamCount { expected: usize, got: usize },
    #[error("invalid network: {0}")]
    Net(#[from] crate::net::NetError),
    #[error("unknown optimizer flag {0}")]
    BadOptimizerFlag(u8),
}

/// Optimizer state carried alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn of<T: Scalar>(adam: &Adam<T>) -> Self {
        AdamState {
            step: adam.step,
            m: adam.m.iter().map(|x| x.to_f64_lossy()).collect(),
            v: adam.v.iter().map(|x| x.to_f64_lossy()).collect(),
        }
    }

    pub fn into_adam<T: Scalar>(self, config: AdamConfig) -> Adam<T> {
        Adam {
            config,
            step: self.step,
            m: self.m.into_iter().map(T::of).collect(),
            v: self.v.into_iter().map(T::of).collect(),
        }
    }
}

pub fn write<T: Scalar, W: Write>(
    out: &mut W,
    net: &Network<T>,
    optimizer: Option<&AdamState>,
) -> Result<(), CheckpointError> {
    let spec = net.spec();
    out.write_all(MAGIC)?;
    out.write_all(&LAYOUT_VERSION.to_le_bytes())?;
    out.write_all(&[spec.shared_trunk as u8])?;
    out.write_all(&spec.digest())?;
    let spec_json = spec.canonical_json();
    out.write_all(&(spec_json.len() as u32).to_le_bytes())?;
    out.write_all(spec_json.as_bytes())?;
    out.write_all(&(net.param_count() as u64).to_le_bytes())?;
    for p in net.params() {
        out.write_all(&p.to_f64_lossy().to_le_bytes())?;
    }
    match optimizer {
        None => out.write_all(&[0u8])?,
        Some(adam) => {
            out.write_all(&[1u8])?;
            out.write_all(&adam.step.to_le_bytes())?;
            for x in adam.m.iter().chain(adam.v.iter()) {
                out.write_all(&x.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read<T: Scalar, R: Read>(
    input: &mut R,
) -> Result<(Network<T>, Option<AdamState>), CheckpointError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(input)?;
    if version != LAYOUT_VERSION {
        return Err(CheckpointError::BadVersion { got: version });
    }
    let shared_trunk = read_u8(input)? != 0;
    let mut digest = [0u8; 32];
    input.read_exact(&mut digest)?;
    let spec_len = read_u32(input)? as usize;
    let mut spec_bytes = vec![0u8; spec_len];
    input.read_exact(&mut spec_bytes)?;
    let spec: LayerSpec = serde_json::from_slice(&spec_bytes)?;
    if spec.digest() != digest || spec.shared_trunk != shared_trunk {
        return Err(CheckpointError::DigestMismatch);
    }
    let count = read_u64(input)? as usize;
    if count != spec.param_count() {
        return Err(CheckpointError::BadParamCount {
            expected: spec.param_count(),
            got: count,
        });
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        params.push(T::of(read_f64(input)?));
    }
    let optimizer = match read_u8(input)? {
        0 => None,
        1 => {
            let step = read_u64(input)?;
            let mut m = Vec::with_capacity(count);
            for _ in 0..count {
                m.push(read_f64(input)?);
            }
            let mut v = Vec::with_capacity(count);
            for _ in 0..count {
                v.push(read_f64(input)?);
            }
            Some(AdamState { step, m, v })
        }
        flag => return Err(CheckpointError::BadOptimizerFlag(flag)),
    };
    Ok((Network::new(spec, params)?, optimizer))
}

pub fn save_file<T: Scalar>(
    path: &std::path::Path,
    net: &Network<T>,
    optimizer: Option<&AdamState>,
) -> Result<(), CheckpointError> {
    // Write-then-rename keeps partially written files invisible.
    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut f = io::BufWriter::new(std::fs::File::create(&tmp)?);
        write(&mut f, net, optimizer)?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_file<T: Scalar>(
    path: &std::path::Path,
) -> Result<(Network<T>, Option<AdamState>), CheckpointError> {
    let mut f = io::BufReader::new(std::fs::File::open(path)?);
    read(&mut f)
}

fn read_u8<R: Read>(r: &mut R) -> io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::mini_spec;
    use piloc_core::perception::ObservationStack;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn obs(seed: u64) -> ObservationStack<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ObservationStack {
            height: 8,
            width: 8,
            window: 5,
            obstacle: (0..64).map(|_| rng.gen()).collect(),
            exploration: (0..64).map(|_| rng.gen()).collect(),
            pheromone: (0..25).map(|_| rng.gen()).collect(),
        }
    }

    #[test]
    fn round_trip_reproduces_forward_bit_exactly() {
        let net = Network::<f64>::init(mini_spec(true), 7).unwrap();
        let mut bytes = Vec::new();
        write(&mut bytes, &net, None).unwrap();
        let (back, opt) = read::<f64, _>(&mut bytes.as_slice()).unwrap();
        assert!(opt.is_none());
        assert_eq!(back.params(), net.params());
        let o = obs(1);
        let a = net.forward(&o).unwrap();
        let b = back.forward(&o).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn optimizer_state_round_trips() {
        let net = Network::<f64>::init(mini_spec(true), 2).unwrap();
        let mut adam = Adam::<f64>::new(net.param_count(), AdamConfig::default());
        let grads: Vec<f64> = (0..net.param_count()).map(|i| (i as f64).sin()).collect();
        let mut params = net.params().to_vec();
        adam.apply(&mut params, &grads);
        adam.apply(&mut params, &grads);
        let state = AdamState::of(&adam);
        let mut bytes = Vec::new();
        write(&mut bytes, &net, Some(&state)).unwrap();
        let (_, opt) = read::<f64, _>(&mut bytes.as_slice()).unwrap();
        assert_eq!(opt.unwrap(), state);
    }

    #[test]
    fn corrupt_magic_rejected() {
        let net = Network::<f64>::init(mini_spec(true), 0).unwrap();
        let mut bytes = Vec::new();
        write(&mut bytes, &net, None).unwrap();
        bytes[0] ^= 0xff;
        assert!(matches!(
            read::<f64, _>(&mut bytes.as_slice()),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn tampered_spec_fails_digest() {
        let net = Network::<f64>::init(mini_spec(true), 0).unwrap();
        let mut bytes = Vec::new();
        write(&mut bytes, &net, None).unwrap();
        // Flip a byte inside the embedded spec JSON region.
        let spec_start = 8 + 4 + 1 + 32 + 4;
        bytes[spec_start + 3] ^= 0x01;
        assert!(matches!(
            read::<f64, _>(&mut bytes.as_slice()),
            Err(CheckpointError::DigestMismatch) | Err(CheckpointError::BadSpec(_))
        ));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = Network::<f64>::init(mini_spec(false), 5).unwrap();
        save_file(&path, &net, None).unwrap();
        let (back, _) = load_file::<f64>(&path).unwrap();
        assert_eq!(back.params(), net.params());
        assert_eq!(back.spec(), net.spec());
    }
}
