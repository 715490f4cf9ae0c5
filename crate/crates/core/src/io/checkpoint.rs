//! Binary checkpoints: the full map plus optional optimizer state.
//!
//! Layout (little endian): magic `GGS1`, u32 version, u32 parameter count
//! per Gaussian, u64 Gaussian count, 3×f64 background, n×P f64 parameters,
//! u8 optimizer flag, and when set: f64 β1, β2, ε, u64 step, n×P f64 first
//! moments, n×P f64 second moments. A trailing u64 FNV-1a hash covers every
//! preceding byte.

use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{Fnv, Gaussian, GaussianMap, PARAMS_PER_GAUSSIAN};
use crate::train::Adam;

pub const MAGIC: &[u8; 4] = b"GGS1";
pub const VERSION: u32 = 1;

const P: usize = PARAMS_PER_GAUSSIAN;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub map: GaussianMap,
    pub optimizer: Option<Adam<P>>,
}

fn hash(bytes: &[u8]) -> u64 {
    let mut h = Fnv::new();
    h.write_bytes(bytes);
    h.finish()
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let n = ck.map.len();
    if let Some(opt) = &ck.optimizer {
        if opt.rows() != n {
            return Err(Error::ContractViolation(format!("optimizer has {} rows for {n} gaussians", opt.rows())));
        }
    }
    let mut out = Vec::with_capacity(40 + n * P * 8 * 3);
    let mut buf = [0u8; 8];
    let mut f = |out: &mut Vec<u8>, v: f64| {
        LittleEndian::write_f64(&mut buf, v);
        out.extend_from_slice(&buf);
    };
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(P as u32).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for v in ck.map.background.iter() {
        f(&mut out, *v);
    }
    for g in &ck.map.gaussians {
        for v in g.to_params() {
            f(&mut out, v);
        }
    }
    match &ck.optimizer {
        None => out.push(0),
        Some(opt) => {
            out.push(1);
            f(&mut out, opt.beta1);
            f(&mut out, opt.beta2);
            f(&mut out, opt.eps);
            out.extend_from_slice(&opt.step.to_le_bytes());
            for row in opt.m.iter().chain(&opt.v) {
                for v in row {
                    f(&mut out, *v);
                }
            }
        }
    }
    let h = hash(&out);
    out.extend_from_slice(&h.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse { offset: self.bytes.len() as u64, message: format!("truncated while reading {what}") });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4, what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(LittleEndian::read_u64(self.take(8, what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(LittleEndian::read_f64(self.take(8, what)?))
    }

    fn rows(&mut self, n: usize, what: &str) -> Result<Vec<[f64; P]>> {
        let raw = self.take(n * P * 8, what)?;
        Ok(raw
            .chunks_exact(P * 8)
            .map(|c| std::array::from_fn(|k| LittleEndian::read_f64(&c[k * 8..k * 8 + 8])))
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let perr = |offset: usize, message: String| Error::Parse { offset: offset as u64, message };
    if bytes.len() < 8 {
        return Err(perr(bytes.len(), "file too short for a checkpoint".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(perr(0, "not a GGS1 checkpoint".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(perr(4, format!("unsupported checkpoint version {version}")));
    }
    let p = r.u32("parameter count")? as usize;
    if p != P {
        return Err(perr(8, format!("checkpoint stores {p} parameters per gaussian, expected {P}")));
    }
    if LittleEndian::read_u64(tail) != hash(body) {
        return Err(perr(body.len(), "checksum mismatch".into()));
    }
    let n = r.u64("gaussian count")? as usize;
    // each gaussian needs P doubles; reject counts the body cannot hold
    if n > body.len() / (P * 8) {
        return Err(perr(12, format!("gaussian count {n} exceeds the payload")));
    }
    let background = Vector3::new(r.f64("background")?, r.f64("background")?, r.f64("background")?);
    let gaussians: Vec<Gaussian> = r.rows(n, "gaussian parameters")?.iter().map(Gaussian::from_params).collect();
    let flag_at = r.pos;
    let optimizer = match r.take(1, "optimizer flag")?[0] {
        0 => None,
        1 => {
            let (beta1, beta2, eps) = (r.f64("beta1")?, r.f64("beta2")?, r.f64("eps")?);
            let step = r.u64("step")?;
            let m = r.rows(n, "first moments")?;
            let v = r.rows(n, "second moments")?;
            Some(Adam { beta1, beta2, eps, step, m, v })
        }
        other => return Err(perr(flag_at, format!("bad optimizer flag {other}"))),
    };
    if r.pos != body.len() {
        return Err(perr(r.pos, "trailing bytes after checkpoint payload".into()));
    }
    Ok(Checkpoint { map: GaussianMap::new(gaussians, background), optimizer })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    super::write_atomic(path, &encode_checkpoint(ck)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector4;
    use proptest::prelude::*;

    fn sample(n: usize, with_opt: bool) -> Checkpoint {
        let gs = (0..n)
            .map(|i| {
                let f = i as f64 + 1.0;
                Gaussian::new(
                    Vector3::new(f, -f / 3.0, 1e-7 * f),
                    Vector4::new(0.9, 0.1, f.sin(), 0.2),
                    Vector3::new(0.1, 0.2 / f, 0.3),
                    Vector3::new(0.25, 0.5, 1.0 / f),
                    0.3,
                    1.0 / (f + 1.0),
                )
                .unwrap()
            })
            .collect();
        let optimizer = with_opt.then(|| {
            let mut a = Adam::<P>::new(n, 1e-15);
            a.step = 42;
            for (i, (m, v)) in a.m.iter_mut().zip(a.v.iter_mut()).enumerate() {
                m[i % P] = -0.5 * i as f64;
                v[(i + 3) % P] = 1e-9 * i as f64;
            }
            a
        });
        Checkpoint { map: GaussianMap::new(gs, Vector3::new(0.1, 0.2, 0.3)), optimizer }
    }

    #[test]
    fn round_trip_is_exact() {
        for (n, opt) in [(0, false), (0, true), (7, false), (7, true)] {
            let ck = sample(n, opt);
            assert_eq!(decode_checkpoint(&encode_checkpoint(&ck).unwrap()).unwrap(), ck);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode_checkpoint(&sample(3, true)).unwrap();
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(decode_checkpoint(&flipped), Err(Error::Parse { .. })));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(decode_checkpoint(&magic).unwrap_err().to_string().contains("GGS1"));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn optimizer_row_mismatch_is_rejected() {
        let mut ck = sample(3, true);
        ck.optimizer.as_mut().unwrap().m.pop();
        ck.optimizer.as_mut().unwrap().v.pop();
        assert!(encode_checkpoint(&ck).is_err());
    }

    proptest! {
        #[test]
        fn never_panics_on_mutations(pos in 0usize..2000, byte in any::<u8>(), cut in 0usize..64) {
            let mut bytes = encode_checkpoint(&sample(4, true)).unwrap();
            let i = pos % bytes.len();
            bytes[i] = byte;
            bytes.truncate(bytes.len().saturating_sub(cut));
            let _ = decode_checkpoint(&bytes);
        }

        #[test]
        fn never_panics_on_garbage(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
            let _ = decode_checkpoint(&bytes);
        }
    }
}
