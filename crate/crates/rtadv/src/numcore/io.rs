//! Binary serialization of networks: the `RTADV-NN` format.
//!
//! Layout (all integers little-endian):
//! ```text
//! magic    8 bytes  b"RTADV-NN"
//! version  u32      currently 1
//! meta     u32 count, then per entry: klen u32, key, vlen u32, value (UTF-8)
//! layers   u32 count, then per layer a kind byte + fixed fields
//! params   per layer: u64 count, then count f64 (raw IEEE-754 bits)
//! ```
//! f64 round-trips are bit-exact by construction. Any truncation or field
//! mismatch yields a structured error naming the offending record.

use std::path::Path;

use super::layer::{Activation, LayerSpec};
use super::network::Network;
use crate::error::{Result, RtError};

pub const NN_MAGIC: &[u8; 8] = b"RTADV-NN";
pub const NN_VERSION: u32 = 1;

fn act_code(a: Activation) -> u8 {
    match a {
        Activation::Linear => 0,
        Activation::Relu => 1,
        Activation::Tanh => 2,
    }
}

fn act_from(code: u8, what: &str) -> Result<Activation> {
    match code {
        0 => Ok(Activation::Linear),
        1 => Ok(Activation::Relu),
        2 => Ok(Activation::Tanh),
        other => Err(RtError::format(what, format!("unknown activation code {other}"))),
    }
}

/// Byte reader tracking its offset so errors can name the failure point.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8], what: &'static str) -> Self {
        Reader { buf, pos: 0, what }
    }

    pub fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(RtError::format(
                self.what,
                format!(
                    "unexpected end of file at byte {} while reading {field} ({} bytes wanted, {} left)",
                    self.pos,
                    n,
                    self.buf.len() - self.pos
                ),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    pub fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    pub fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    pub fn string(&mut self, field: &str) -> Result<String> {
        let len = self.u32(&format!("{field} length"))? as usize;
        let bytes = self.take(len, field)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| RtError::format(self.what, format!("{field} is not valid UTF-8")))
    }

    pub fn expect_eof(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(RtError::format(
                self.what,
                format!("{} trailing bytes after byte {}", self.buf.len() - self.pos, self.pos),
            ));
        }
        Ok(())
    }
}

pub(crate) fn push_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn encode_layer(out: &mut Vec<u8>, spec: &LayerSpec) {
    match *spec {
        LayerSpec::Framing { frame_len } => {
            out.push(0);
            out.extend_from_slice(&(frame_len as u32).to_le_bytes());
        }
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
            activation,
        } => {
            out.push(1);
            out.extend_from_slice(&(in_channels as u32).to_le_bytes());
            out.extend_from_slice(&(out_channels as u32).to_le_bytes());
            out.extend_from_slice(&(kernel as u32).to_le_bytes());
            out.push(act_code(activation));
        }
        LayerSpec::MaxPool1d { width } => {
            out.push(2);
            out.extend_from_slice(&(width as u32).to_le_bytes());
        }
        LayerSpec::Recurrent { input_dim, hidden } => {
            out.push(3);
            out.extend_from_slice(&(input_dim as u32).to_le_bytes());
            out.extend_from_slice(&(hidden as u32).to_le_bytes());
        }
        LayerSpec::Dense {
            input_dim,
            output_dim,
            activation,
        } => {
            out.push(4);
            out.extend_from_slice(&(input_dim as u32).to_le_bytes());
            out.extend_from_slice(&(output_dim as u32).to_le_bytes());
            out.push(act_code(activation));
        }
    }
}

fn decode_layer(r: &mut Reader, index: usize) -> Result<LayerSpec> {
    let what = "RTADV-NN file";
    let kind = r.u8(&format!("layer {index} kind"))?;
    let spec = match kind {
        0 => LayerSpec::Framing {
            frame_len: r.u32(&format!("layer {index} frame_len"))? as usize,
        },
        1 => LayerSpec::Conv1d {
            in_channels: r.u32(&format!("layer {index} in_channels"))? as usize,
            out_channels: r.u32(&format!("layer {index} out_channels"))? as usize,
            kernel: r.u32(&format!("layer {index} kernel"))? as usize,
            activation: act_from(r.u8(&format!("layer {index} activation"))?, what)?,
        },
        2 => LayerSpec::MaxPool1d {
            width: r.u32(&format!("layer {index} width"))? as usize,
        },
        3 => LayerSpec::Recurrent {
            input_dim: r.u32(&format!("layer {index} input_dim"))? as usize,
            hidden: r.u32(&format!("layer {index} hidden"))? as usize,
        },
        4 => LayerSpec::Dense {
            input_dim: r.u32(&format!("layer {index} input_dim"))? as usize,
            output_dim: r.u32(&format!("layer {index} output_dim"))? as usize,
            activation: act_from(r.u8(&format!("layer {index} activation"))?, what)?,
        },
        other => {
            return Err(RtError::format(
                what,
                format!("layer {index}: unknown layer kind {other}"),
            ))
        }
    };
    Ok(spec)
}

pub fn encode_network(net: &Network, meta: &[(String, String)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(NN_MAGIC);
    out.extend_from_slice(&NN_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    for (k, v) in meta {
        push_string(&mut out, k);
        push_string(&mut out, v);
    }
    out.extend_from_slice(&(net.specs().len() as u32).to_le_bytes());
    for spec in net.specs() {
        encode_layer(&mut out, spec);
    }
    for block in net.param_blocks() {
        out.extend_from_slice(&(block.len() as u64).to_le_bytes());
        for &v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_network(buf: &[u8]) -> Result<(Network, Vec<(String, String)>)> {
    let what = "RTADV-NN file";
    let mut r = Reader::new(buf, what);
    let magic = r.take(8, "magic")?;
    if magic != NN_MAGIC {
        return Err(RtError::format(what, format!("bad magic {magic:?}")));
    }
    let version = r.u32("version")?;
    if version != NN_VERSION {
        return Err(RtError::format(what, format!("unsupported version {version}")));
    }
    let meta_count = r.u32("metadata count")? as usize;
    let mut meta = Vec::with_capacity(meta_count);
    for i in 0..meta_count {
        let k = r.string(&format!("metadata key {i}"))?;
        let v = r.string(&format!("metadata value {i}"))?;
        meta.push((k, v));
    }
    let layer_count = r.u32("layer count")? as usize;
    let mut specs = Vec::with_capacity(layer_count);
    for i in 0..layer_count {
        specs.push(decode_layer(&mut r, i)?);
    }
    let mut params = Vec::with_capacity(layer_count);
    for (i, spec) in specs.iter().enumerate() {
        let n = r.u64(&format!("layer {i} parameter count"))? as usize;
        if n != spec.param_count() {
            return Err(RtError::format(
                what,
                format!(
                    "layer {i} ({}) declares {n} parameters, spec wants {}",
                    spec.kind_name(),
                    spec.param_count()
                ),
            ));
        }
        let mut block = Vec::with_capacity(n);
        for j in 0..n {
            block.push(r.f64(&format!("layer {i} parameter {j}"))?);
        }
        params.push(block);
    }
    r.expect_eof()?;
    // Seed is irrelevant: parameters are overwritten wholesale.
    let mut net = Network::new(specs, 0)?;
    net.set_params(params)?;
    Ok((net, meta))
}

pub fn save_network(path: &Path, net: &Network, meta: &[(String, String)]) -> Result<()> {
    std::fs::write(path, encode_network(net, meta))?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<(Network, Vec<(String, String)>)> {
    let buf = std::fs::read(path)?;
    decode_network(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::layer::{Activation, LayerSpec};

    fn sample_net() -> Network {
        Network::new(
            vec![
                LayerSpec::Framing { frame_len: 4 },
                LayerSpec::Conv1d {
                    in_channels: 1,
                    out_channels: 2,
                    kernel: 3,
                    activation: Activation::Relu,
                },
                LayerSpec::MaxPool1d { width: 2 },
                LayerSpec::Recurrent {
                    input_dim: 4,
                    hidden: 3,
                },
                LayerSpec::Dense {
                    input_dim: 3,
                    output_dim: 2,
                    activation: Activation::Tanh,
                },
            ],
            77,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let net = sample_net();
        let meta = vec![("purpose".to_string(), "test".to_string())];
        let bytes = encode_network(&net, &meta);
        let (back, meta2) = decode_network(&bytes).unwrap();
        assert_eq!(back.specs(), net.specs());
        assert_eq!(meta2, meta);
        for (a, b) in net.param_blocks().iter().zip(back.param_blocks()) {
            let abits: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
            let bbits: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
            assert_eq!(abits, bbits);
        }
    }

    #[test]
    fn truncated_file_names_failing_record() {
        let net = sample_net();
        let bytes = encode_network(&net, &[]);
        let cut = &bytes[..bytes.len() - 9];
        let err = decode_network(cut).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("unexpected end of file") && msg.contains("parameter"),
            "unhelpful error: {msg}"
        );
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = encode_network(&sample_net(), &[]);
        bytes[0] = b'X';
        let err = decode_network(&bytes).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_network(&sample_net(), &[]);
        bytes.push(0);
        let err = decode_network(&bytes).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.nn");
        let net = sample_net();
        save_network(&path, &net, &[("k".into(), "v".into())]).unwrap();
        let (back, meta) = load_network(&path).unwrap();
        assert_eq!(back.param_blocks(), net.param_blocks());
        assert_eq!(meta, vec![("k".to_string(), "v".to_string())]);
    }
}
