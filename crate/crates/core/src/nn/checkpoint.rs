//! Binary weight checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "MFHVCKPT"
//! version   u32      1
//! config    u32 length + UTF-8 JSON of NetConfig
//! count     u32      number of tensors
//! tensor*   u32 name length, name bytes, u32 rank, rank × u64 dims,
//!           product(dims) × f64
//! ```

use std::io::{Read, Write};

use super::network::{NetConfig, ToyHovernet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MFHVCKPT";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(net: &ToyHovernet, out: &mut W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let config = serde_json::to_vec(net.config())?;
    out.write_all(&(config.len() as u32).to_le_bytes())?;
    out.write_all(&config)?;
    let layers = net.layers();
    out.write_all(&(2 * layers.len() as u32).to_le_bytes())?;
    for (name, conv) in layers {
        let shape = conv.weight.shape();
        write_tensor(out, &format!("{name}.weight"), &shape, conv.weight.data())?;
        write_tensor(out, &format!("{name}.bias"), &[conv.bias.len()], &conv.bias)?;
    }
    Ok(())
}

fn write_tensor<W: Write>(out: &mut W, name: &str, dims: &[usize], data: &[f64]) -> Result<()> {
    out.write_all(&(name.len() as u32).to_le_bytes())?;
    out.write_all(name.as_bytes())?;
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Checkpoint("truncated file".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<ToyHovernet> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(input)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let clen = read_u32(input)? as usize;
    let mut cbytes = vec![0u8; clen];
    input.read_exact(&mut cbytes).map_err(truncated)?;
    let config: NetConfig = serde_json::from_slice(&cbytes)?;
    let mut net = ToyHovernet::zeros(config).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    let names: Vec<String> = net.layers().into_iter().map(|(n, _)| n).collect();

    let count = read_u32(input)? as usize;
    if count != 2 * names.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {count}",
            2 * names.len()
        )));
    }
    let mut layers = net.layers_mut();
    for (i, layer) in layers.iter_mut().enumerate() {
        for part in ["weight", "bias"] {
            let nlen = read_u32(input)? as usize;
            let mut nb = vec![0u8; nlen];
            input.read_exact(&mut nb).map_err(truncated)?;
            let name = String::from_utf8(nb).map_err(|_| Error::Checkpoint("non-UTF-8 tensor name".into()))?;
            let expected_name = format!("{}.{part}", names[i]);
            if name != expected_name {
                return Err(Error::Checkpoint(format!(
                    "expected tensor {expected_name}, found {name}"
                )));
            }
            let rank = read_u32(input)? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(read_u64(input)? as usize);
            }
            let dst: &mut [f64] = if part == "weight" {
                let want = layer.weight.shape().to_vec();
                if dims != want {
                    return Err(Error::Checkpoint(format!(
                        "{name}: shape {dims:?}, model expects {want:?}"
                    )));
                }
                layer.weight.data_mut()
            } else {
                if dims != [layer.bias.len()] {
                    return Err(Error::Checkpoint(format!(
                        "{name}: shape {dims:?}, model expects [{}]",
                        layer.bias.len()
                    )));
                }
                &mut layer.bias
            };
            let mut buf = vec![0u8; dst.len() * 8];
            input.read_exact(&mut buf).map_err(truncated)?;
            for (d, chunk) in dst.iter_mut().zip(buf.chunks_exact(8)) {
                *d = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            }
        }
    }
    Ok(net)
}

pub fn save_checkpoint(net: &ToyHovernet, path: &std::path::Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(net, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<ToyHovernet> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::NetConfig;

    #[test]
    fn round_trip_is_exact() {
        let net = ToyHovernet::new(NetConfig::default(), 11).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn truncation_and_magic_are_reported() {
        let net = ToyHovernet::new(NetConfig::default(), 11).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        let cut = &buf[..buf.len() - 3];
        let err = read_checkpoint(&mut &cut[..]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
        let mut bad = buf.clone();
        bad[0] = b'X';
        let err = read_checkpoint(&mut bad.as_slice()).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }
}
