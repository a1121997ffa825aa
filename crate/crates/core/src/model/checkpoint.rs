//! `FBMP` checkpoint files: a header describing the architecture followed
//! by named float64 tensors, all little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{Architecture, ModelParams, Tensor};

const MAGIC: &[u8; 4] = b"FBMP";
const VERSION: u16 = 1;

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.num_values() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let (tag, arg) = match params.arch() {
        Architecture::Softmax => (0u8, 0u32),
        Architecture::Mlp { hidden } => (1, hidden as u32),
        Architecture::TinyConv { filters } => (2, filters as u32),
    };
    out.push(tag);
    out.extend_from_slice(&arg.to_le_bytes());
    let (h, w) = params.image_shape();
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(params.num_classes() as u32).to_le_bytes());
    out.extend_from_slice(&(params.tensors().len() as u32).to_le_bytes());
    for t in params.tensors() {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated(format!(
                "need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)
        .map_err(|_| Error::MalformedHeader("file too short".into()))?
        != MAGIC
    {
        return Err(Error::MalformedHeader("bad magic, expected FBMP".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported version {version}"
        )));
    }
    let tag = r.u8()?;
    let arg = r.u32()?;
    let arch = match tag {
        0 => Architecture::Softmax,
        1 => Architecture::Mlp { hidden: arg },
        2 => Architecture::TinyConv { filters: arg },
        other => {
            return Err(Error::MalformedHeader(format!(
                "unknown architecture tag {other}"
            )))
        }
    };
    let h = r.u32()?;
    let w = r.u32()?;
    let classes = r.u32()?;
    let count = r.u32()?;
    let mut tensors = Vec::with_capacity(count.min(16));
    for _ in 0..count {
        let name_len = usize::from(r.u16()?);
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::MalformedHeader("tensor name is not UTF-8".into()))?;
        let ndims = usize::from(r.u8()?);
        let shape = (0..ndims).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        tensors.push(Tensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    ModelParams::from_tensors(arch, (h, w), classes, tensors)
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(params))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use crate::rng::{Purpose, RngStream};

    #[test]
    fn round_trip_all_archs() {
        let mut r = RngStream::new(1, Purpose::Init);
        for arch in [
            Architecture::Softmax,
            Architecture::Mlp { hidden: 5 },
            Architecture::TinyConv { filters: 2 },
        ] {
            let p = init_params(arch, (4, 6), 3, &mut r).unwrap();
            let bytes = encode_checkpoint(&p);
            assert_eq!(&bytes[..4], b"FBMP");
            assert_eq!(decode_checkpoint(&bytes).unwrap(), p);
        }
    }

    #[test]
    fn corrupt_files() {
        let p = ModelParams::zeros(Architecture::Softmax, (2, 2), 2).unwrap();
        let bytes = encode_checkpoint(&p);
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'Q';
        assert!(matches!(
            decode_checkpoint(&bad),
            Err(Error::MalformedHeader(_))
        ));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(
            decode_checkpoint(&extra),
            Err(Error::MalformedHeader(_))
        ));
    }
}
