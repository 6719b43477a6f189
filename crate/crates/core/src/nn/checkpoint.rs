//! Weight checkpoints: magic `GQN1`, layer count, input shape, one spec
//! record per layer, then every weight and bias as little-endian `f64` in
//! declaration order.
//!
//! ```text
//! "GQN1" | u32 layers | u32 h, w, c
//! per layer: u8 tag (1 conv, 2 dense) | u8 activation (0 linear, 1 relu)
//!            conv: u32 out_channels, kernel, stride   dense: u32 out_units
//! per layer: weights then bias, f64 LE
//! ```

use alloc::vec::Vec;

use thiserror::Error;

use super::{Activation, LayerSpec, Network, NnError};

pub const MAGIC: &[u8; 4] = b"GQN1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckpointError {
    #[error("not a weight checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0:?}")]
    VersionMismatch(u8),
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("unknown {what} tag {tag}")]
    UnknownTag { what: &'static str, tag: u8 },
    #[error("{0} trailing bytes after weights")]
    TrailingBytes(usize),
    #[error("checkpoint architecture does not match the network")]
    ArchitectureMismatch,
    #[error("invalid architecture: {0}")]
    Invalid(NnError),
}

pub fn save_weights(net: &Network) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + net.parameter_count() * 8);
    out.extend_from_slice(MAGIC);
    let specs = net.specs();
    out.extend_from_slice(&(specs.len() as u32).to_le_bytes());
    for d in net.input_shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for spec in &specs {
        let act = match spec.activation() {
            Activation::Linear => 0u8,
            Activation::Relu => 1u8,
        };
        match *spec {
            LayerSpec::Conv2d {
                out_channels,
                kernel_size,
                stride,
                ..
            } => {
                out.extend_from_slice(&[1, act]);
                for v in [out_channels, kernel_size, stride] {
                    out.extend_from_slice(&(v as u32).to_le_bytes());
                }
            }
            LayerSpec::Dense { out_units, .. } => {
                out.extend_from_slice(&[2, act]);
                out.extend_from_slice(&(out_units as u32).to_le_bytes());
            }
        }
    }
    for p in net.parameters() {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Truncated(self.bytes.len()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(f64::from_le_bytes(a))
    }
}

/// Rebuilds a network, architecture included, from checkpoint bytes.
pub fn load_weights(bytes: &[u8]) -> Result<Network, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if &magic[..3] != b"GQN" {
        return Err(CheckpointError::BadMagic);
    }
    if magic[3] != MAGIC[3] {
        return Err(CheckpointError::VersionMismatch(magic[3]));
    }
    let count = r.u32()?;
    let input = [r.u32()?, r.u32()?, r.u32()?];
    let mut specs = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let tag = r.u8()?;
        let activation = match r.u8()? {
            0 => Activation::Linear,
            1 => Activation::Relu,
            t => {
                return Err(CheckpointError::UnknownTag {
                    what: "activation",
                    tag: t,
                })
            }
        };
        specs.push(match tag {
            1 => LayerSpec::Conv2d {
                out_channels: r.u32()?,
                kernel_size: r.u32()?,
                stride: r.u32()?,
                activation,
            },
            2 => LayerSpec::Dense {
                out_units: r.u32()?,
                activation,
            },
            t => {
                return Err(CheckpointError::UnknownTag {
                    what: "layer",
                    tag: t,
                })
            }
        });
    }
    let mut net = Network::zeroed(input, &specs).map_err(CheckpointError::Invalid)?;
    let needed = net.parameter_count() * 8;
    if bytes.len() - r.pos < needed {
        return Err(CheckpointError::Truncated(bytes.len()));
    }
    for p in net.parameters_mut() {
        for v in p.iter_mut() {
            *v = r.f64()?;
        }
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(net)
}

impl Network {
    /// Loads checkpoint weights into this network; the stored architecture
    /// must match exactly.
    pub fn load_weights(&mut self, bytes: &[u8]) -> Result<(), CheckpointError> {
        let loaded = load_weights(bytes)?;
        if loaded.input_shape() != self.input_shape() || loaded.specs() != self.specs() {
            return Err(CheckpointError::ArchitectureMismatch);
        }
        self.copy_parameters_from(&loaded)
            .map_err(|_| CheckpointError::ArchitectureMismatch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use alloc::vec;

    #[test]
    fn round_trip_gdqn() {
        let net = Network::gdqn(3, 7).unwrap();
        let bytes = save_weights(&net);
        assert_eq!(&bytes[..4], b"GQN1");
        let back = load_weights(&bytes).unwrap();
        assert_eq!(back, net);
        let x = Tensor::new(
            vec![84, 84, 1],
            (0..84 * 84).map(|i| (i % 17) as f64 / 17.0).collect(),
        )
        .unwrap();
        let a = net.forward(&x).unwrap();
        let b = back.forward(&x).unwrap();
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn truncated_stream() {
        let bytes = save_weights(&Network::gdqn(3, 0).unwrap());
        for cut in [0, 3, 10, 30, bytes.len() - 1] {
            assert!(load_weights(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        assert!(matches!(
            load_weights(&bytes[..bytes.len() - 8]),
            Err(CheckpointError::Truncated(_))
        ));
    }

    #[test]
    fn version_and_magic() {
        let mut bytes = save_weights(&Network::gdqn(3, 0).unwrap());
        bytes[3] = b'2';
        assert_eq!(
            load_weights(&bytes).unwrap_err(),
            CheckpointError::VersionMismatch(b'2')
        );
        bytes[0] = b'X';
        assert_eq!(load_weights(&bytes).unwrap_err(), CheckpointError::BadMagic);
    }

    #[test]
    fn mismatched_architecture() {
        let bytes = save_weights(&Network::gdqn(3, 0).unwrap());
        let mut other = Network::gdqn(12, 0).unwrap();
        assert_eq!(
            other.load_weights(&bytes).unwrap_err(),
            CheckpointError::ArchitectureMismatch
        );
        let mut same = Network::gdqn(3, 99).unwrap();
        same.load_weights(&bytes).unwrap();
        assert_eq!(same, Network::gdqn(3, 0).unwrap());
    }
}
