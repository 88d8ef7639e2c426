//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic "SHFTMTCH" | version u32 | scalar width u8
//! stem_len u32 | stem_len x (channels u32, kernel u32, stride u32)
//! residual_blocks u32 | block_kernel u32 | head_kernel u32 | norm_epsilon f64
//! tensor_count u32 | tensor_count x (len u64, len x scalar)
//! sha256 of everything above (32 bytes)
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::network::{Architecture, NetworkParameters, StemLayer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"SHFTMTCH";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

pub fn encode_checkpoint<T: Scalar>(params: &NetworkParameters<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(T::BYTES as u8);
    let arch = params.architecture();
    let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    u32le(&mut out, arch.stem.len());
    for l in &arch.stem {
        u32le(&mut out, l.channels);
        u32le(&mut out, l.kernel);
        u32le(&mut out, l.stride);
    }
    u32le(&mut out, arch.residual_blocks);
    u32le(&mut out, arch.block_kernel);
    u32le(&mut out, arch.head_kernel);
    out.extend_from_slice(&arch.norm_epsilon.to_le_bytes());
    let tensors = params.tensors();
    u32le(&mut out, tensors.len());
    for t in tensors {
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for &v in t {
            v.write_le(&mut out);
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::CorruptFile("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        usize::try_from(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
            .map_err(|_| Error::CorruptFile("tensor length overflow".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<NetworkParameters<T>> {
    if bytes.len() < MAGIC.len() {
        return Err(Error::CorruptFile("file shorter than header".into()));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::VersionMismatch("not a shiftmatch checkpoint (bad magic)".into()));
    }
    if bytes.len() < MAGIC.len() + 4 + 1 + DIGEST_LEN {
        return Err(Error::CorruptFile("file truncated".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch(format!(
            "format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::CorruptFile("checksum mismatch".into()));
    }

    let mut r = Reader { bytes: body, pos: 12 };
    let width = r.take(1)?[0] as usize;
    if width != 4 && width != 8 {
        return Err(Error::CorruptFile(format!("unknown scalar width {width}")));
    }
    let stem_len = r.u32()?;
    let mut stem = Vec::new();
    for _ in 0..stem_len {
        stem.push(StemLayer {
            channels: r.u32()?,
            kernel: r.u32()?,
            stride: r.u32()?,
        });
    }
    let arch = Architecture {
        stem,
        residual_blocks: r.u32()?,
        block_kernel: r.u32()?,
        head_kernel: r.u32()?,
        norm_epsilon: r.f64()?,
    };
    arch.validate()
        .map_err(|e| Error::CorruptFile(format!("invalid architecture: {e}")))?;
    let mut params = NetworkParameters::<T>::zeros(&arch);
    let count = r.u32()?;
    let mut tensors = params.tensors_mut();
    if count != tensors.len() {
        return Err(Error::CorruptFile(format!(
            "{count} tensors stored, architecture needs {}",
            tensors.len()
        )));
    }
    for t in tensors.iter_mut() {
        let len = r.u64()?;
        if len != t.len() {
            return Err(Error::CorruptFile(format!("tensor of {len} values, expected {}", t.len())));
        }
        let raw = r.take(len * width)?;
        for (dst, chunk) in t.iter_mut().zip(raw.chunks_exact(width)) {
            *dst = if width == T::BYTES {
                T::read_le(chunk)
            } else if width == 4 {
                T::of(f64::from(f32::read_le(chunk)))
            } else {
                T::of(f64::read_le(chunk))
            };
        }
    }
    drop(tensors);
    if r.pos != body.len() {
        return Err(Error::CorruptFile("trailing bytes after tensors".into()));
    }
    Ok(params)
}

pub fn save_checkpoint<T: Scalar>(params: &NetworkParameters<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(params))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<NetworkParameters<T>> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::input::InputImage;

    fn params() -> NetworkParameters<f32> {
        NetworkParameters::init(&Architecture::reference(), 42).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = params();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        save_checkpoint(&p, &path).unwrap();
        let q: NetworkParameters<f32> = load_checkpoint(&path).unwrap();
        for (a, b) in p.tensors().iter().zip(q.tensors()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let img = InputImage::from_fn(32, 32, |x, y| ((x + 2 * y) % 5) as f32 / 4.0).unwrap();
        assert_eq!(p.forward(&img).unwrap(), q.forward(&img).unwrap());
        assert_eq!(encode_checkpoint(&q), fs::read(&path).unwrap());
    }

    #[test]
    fn widening_load() {
        let p = params();
        let q: NetworkParameters<f64> = decode_checkpoint(&encode_checkpoint(&p)).unwrap();
        assert_eq!(q.cast::<f32>(), p);
    }

    #[test]
    fn truncated_is_corrupt() {
        let bytes = encode_checkpoint(&params());
        for cut in [4, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                decode_checkpoint::<f32>(&bytes[..cut]),
                Err(Error::CorruptFile(_))
            ));
        }
    }

    #[test]
    fn flipped_byte_is_corrupt() {
        let mut bytes = encode_checkpoint(&params());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(decode_checkpoint::<f32>(&bytes), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn wrong_magic_or_version() {
        let mut bytes = encode_checkpoint(&params());
        bytes[0] = b'X';
        assert!(matches!(decode_checkpoint::<f32>(&bytes), Err(Error::VersionMismatch(_))));
        let mut bytes = encode_checkpoint(&params());
        bytes[8] = 9;
        assert!(matches!(decode_checkpoint::<f32>(&bytes), Err(Error::VersionMismatch(_))));
    }

    #[test]
    fn missing_file_is_io() {
        let err = load_checkpoint::<f32>(Path::new("/nonexistent/ckpt")).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
