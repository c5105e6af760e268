//! Versioned binary checkpoints for Q-network parameters.
//!
//! Layout: magic, format version, architecture and input-shape echo, a
//! free-text config echo, then each named tensor as a shape header plus
//! little-endian f32 data, and a trailing marker. Parameters are
//! maintained f32-representable by the network, so a save/load cycle
//! reproduces Q-values bit-exactly.

use crate::net::{ArchConfig, NetError, NetShape, QNetwork};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"SGQN";
const TRAILER: &[u8; 4] = b"END.";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupted checkpoint: {0}")]
    Corrupted(String),
    #[error("checkpoint does not match the expected network: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

fn write_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_str(r: &mut impl Read) -> Result<String, CheckpointError> {
    let len = read_u32(r)? as usize;
    if len > 1 << 24 {
        return Err(CheckpointError::Corrupted(format!(
            "string length {len} is implausible"
        )));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CheckpointError::Corrupted(format!("bad utf-8: {e}")))
}

pub fn save_checkpoint(
    net: &QNetwork,
    config_echo: &str,
    w: &mut impl Write,
) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    write_u32(w, CHECKPOINT_VERSION)?;
    for v in [
        net.arch.n_k,
        net.arch.n_c,
        net.arch.s_k,
        net.arch.hidden_sizes[0],
        net.arch.hidden_sizes[1],
        net.arch.hidden_sizes[2],
        net.arch.action_count,
        net.shape.local_side,
        net.shape.global_side,
        net.shape.in_channels,
    ] {
        write_u32(w, v as u32)?;
    }
    write_str(w, config_echo)?;
    let tensors = net.params.tensor_refs();
    write_u32(w, tensors.len() as u32)?;
    for t in tensors {
        write_str(w, &t.name)?;
        write_u32(w, t.dims.len() as u32)?;
        for &d in &t.dims {
            write_u32(w, d as u32)?;
        }
        for &v in t.data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.write_all(TRAILER)?;
    Ok(())
}

/// Reads a checkpoint back into a freshly built network, verifying every
/// tensor name and shape against the stored architecture.
pub fn load_checkpoint(r: &mut impl Read) -> Result<(QNetwork, String), CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let mut fields = [0usize; 10];
    for f in fields.iter_mut() {
        *f = read_u32(r)? as usize;
    }
    let arch = ArchConfig {
        n_k: fields[0],
        n_c: fields[1],
        s_k: fields[2],
        hidden_sizes: [fields[3], fields[4], fields[5]],
        action_count: fields[6],
    };
    let shape = NetShape {
        local_side: fields[7],
        global_side: fields[8],
        in_channels: fields[9],
    };
    let config_echo = read_str(r)?;
    let mut net = QNetwork::new(arch, shape, 0)?;
    let tensor_count = read_u32(r)? as usize;
    let expected: Vec<(String, Vec<usize>, usize)> = net
        .params
        .tensor_refs()
        .iter()
        .map(|t| (t.name.clone(), t.dims.clone(), t.data.len()))
        .collect();
    if tensor_count != expected.len() {
        return Err(CheckpointError::Mismatch(format!(
            "file has {tensor_count} tensors, architecture implies {}",
            expected.len()
        )));
    }
    let mut loaded: Vec<Vec<f64>> = Vec::with_capacity(tensor_count);
    for (name, dims, len) in &expected {
        let got_name = read_str(r)?;
        if got_name != *name {
            return Err(CheckpointError::Mismatch(format!(
                "expected tensor {name}, found {got_name}"
            )));
        }
        let ndims = read_u32(r)? as usize;
        let mut got_dims = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            got_dims.push(read_u32(r)? as usize);
        }
        if got_dims != *dims {
            return Err(CheckpointError::Mismatch(format!(
                "tensor {name}: expected dims {dims:?}, found {got_dims:?}"
            )));
        }
        let mut data = Vec::with_capacity(*len);
        let mut buf = [0u8; 4];
        for _ in 0..*len {
            r.read_exact(&mut buf)
                .map_err(|_| CheckpointError::Corrupted(format!("truncated in tensor {name}")))?;
            data.push(f32::from_le_bytes(buf) as f64);
        }
        loaded.push(data);
    }
    let mut trailer = [0u8; 4];
    r.read_exact(&mut trailer)
        .map_err(|_| CheckpointError::Corrupted("missing trailer".into()))?;
    if &trailer != TRAILER {
        return Err(CheckpointError::Corrupted("bad trailer".into()));
    }
    for (dst, src) in net.params.tensors_mut().into_iter().zip(loaded) {
        *dst = src;
    }
    Ok((net, config_echo))
}

pub fn save_checkpoint_file(
    net: &QNetwork,
    config_echo: &str,
    path: &Path,
) -> Result<(), CheckpointError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    save_checkpoint(net, config_echo, &mut file)?;
    file.flush()?;
    Ok(())
}

pub fn load_checkpoint_file(path: &Path) -> Result<(QNetwork, String), CheckpointError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    load_checkpoint(&mut file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{NetInput, OBS_CHANNELS};
    use crate::rng::rng_from;
    use rand::Rng as _;

    fn net(seed: u64) -> QNetwork {
        QNetwork::new(
            ArchConfig {
                n_k: 2,
                n_c: 4,
                s_k: 3,
                hidden_sizes: [12, 12, 12],
                action_count: 6,
            },
            NetShape {
                local_side: 7,
                global_side: 5,
                in_channels: OBS_CHANNELS,
            },
            seed,
        )
        .unwrap()
    }

    fn roundtrip(n: &QNetwork, echo: &str) -> (QNetwork, String) {
        let mut buf = Vec::new();
        save_checkpoint(n, echo, &mut buf).unwrap();
        load_checkpoint(&mut buf.as_slice()).unwrap()
    }

    #[test]
    fn parameters_roundtrip_bit_exactly() {
        let original = net(5);
        let (loaded, echo) = roundtrip(&original, "seed = 5\nproj = 7\n");
        assert_eq!(echo, "seed = 5\nproj = 7\n");
        assert_eq!(loaded.params, original.params);
        assert_eq!(loaded.arch, original.arch);
        assert_eq!(loaded.shape, original.shape);
    }

    #[test]
    fn q_values_roundtrip_bit_exactly() {
        let original = net(9);
        let (loaded, _) = roundtrip(&original, "");
        let mut rng = rng_from(10);
        for _ in 0..20 {
            let input = NetInput {
                local: (0..OBS_CHANNELS * 49).map(|_| rng.random::<f64>()).collect(),
                global: (0..OBS_CHANNELS * 25).map(|_| rng.random::<f64>()).collect(),
                budget: rng.random(),
            };
            let a = original.forward(&input).unwrap();
            let b = loaded.forward(&input).unwrap();
            assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn truncated_and_corrupt_files_error() {
        let original = net(1);
        let mut buf = Vec::new();
        save_checkpoint(&original, "echo", &mut buf).unwrap();
        let cut = &buf[..buf.len() - 9];
        assert!(load_checkpoint(&mut &cut[..]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            load_checkpoint(&mut bad.as_slice()),
            Err(CheckpointError::BadMagic)
        ));
        let mut wrong_version = buf.clone();
        wrong_version[4] = 99;
        assert!(matches!(
            load_checkpoint(&mut wrong_version.as_slice()),
            Err(CheckpointError::UnsupportedVersion(99))
        ));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let original = net(3);
        save_checkpoint_file(&original, "cfg", &path).unwrap();
        let (loaded, echo) = load_checkpoint_file(&path).unwrap();
        assert_eq!(loaded.params, original.params);
        assert_eq!(echo, "cfg");
    }
}
