//! Framework-neutral checkpoint container and weight-space interpolation
//! between a synthetic-trained and a real-finetuned model.
//!
//! File layout (all integers little-endian):
//! `"WSOUP1\0\0"`, u32 tensor count, then per tensor a u32-length-prefixed
//! UTF-8 name, u8 rank, rank × u64 dims and `prod(dims)` f32 values; then a
//! u32 metadata count and that many pairs of length-prefixed strings.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fsutil::atomic_write;

pub const MAGIC: &[u8; 8] = b"WSOUP1\0\0";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<u64>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<u64>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        match numel(&shape) {
            Some(n) if n == data.len() as u64 => Ok(Self { name, shape, data }),
            _ => Err(Error::Format(format!(
                "tensor {name:?}: shape {shape:?} does not hold {} values",
                data.len()
            ))),
        }
    }

    fn bit_eq(&self, other: &Tensor) -> bool {
        self.name == other.name
            && self.shape == other.shape
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn numel(shape: &[u64]) -> Option<u64> {
    shape.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d))
}

/// Ordered tensors plus string metadata, both kept in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    tensors: Vec<Tensor>,
    pub metadata: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn new(tensors: Vec<Tensor>, metadata: Vec<(String, String)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for t in &tensors {
            if !seen.insert(t.name.as_str()) {
                return Err(Error::DuplicateTensor(t.name.clone()));
            }
        }
        Ok(Self { tensors, metadata })
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.metadata.push((key.to_string(), value)),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Equality on raw float bits, so NaN payloads compare too.
    pub fn bit_eq(&self, other: &Checkpoint) -> bool {
        self.metadata == other.metadata
            && self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.bit_eq(b))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.num_parameters());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.push(t.shape.len() as u8);
            for d in &t.shape {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8, "magic").ok() != Some(MAGIC.as_slice()) {
            return Err(Error::Format("not a weight checkpoint (bad magic)".into()));
        }
        let count = r.u32("tensor count")?;
        let mut tensors = Vec::new();
        for i in 0..count {
            let name = r.string(&format!("tensor {i} name"))?;
            let rank = r.take(1, "rank")?[0] as usize;
            let shape = (0..rank)
                .map(|_| r.u64("dimension"))
                .collect::<Result<Vec<_>>>()?;
            let n = numel(&shape)
                .and_then(|n| n.checked_mul(4))
                .filter(|&b| b <= usize::MAX as u64)
                .ok_or_else(|| Error::Format(format!("tensor {name:?} shape {shape:?} overflows")))?;
            let raw = r.take(n as usize, &format!("data of tensor {name:?}"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Tensor { name, shape, data });
        }
        let n_meta = r.u32("metadata count")?;
        let mut metadata = Vec::new();
        for _ in 0..n_meta {
            let k = r.string("metadata key")?;
            let v = r.string("metadata value")?;
            metadata.push((k, v));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after metadata",
                bytes.len() - r.pos
            )));
        }
        Checkpoint::new(tensors, metadata)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::TruncatedFile(format!("{what} at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Format(format!("{what} is not UTF-8")))
    }
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path.as_ref(), &ckpt.to_bytes())
}

/// `(1 − alpha)·a + alpha·b` for every tensor. `alpha` of exactly 0 or 1
/// returns a bit-exact copy of that endpoint's tensors. Metadata records
/// both sources and alpha.
pub fn interpolate(a: &Checkpoint, b: &Checkpoint, alpha: f64) -> Result<Checkpoint> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if a.tensors.len() != b.tensors.len() {
        return Err(Error::IncompatibleCheckpoints(format!(
            "{} vs {} tensors",
            a.tensors.len(),
            b.tensors.len()
        )));
    }
    for (ta, tb) in a.tensors.iter().zip(&b.tensors) {
        if ta.name != tb.name || ta.shape != tb.shape {
            return Err(Error::IncompatibleCheckpoints(format!(
                "{:?} {:?} vs {:?} {:?}",
                ta.name, ta.shape, tb.name, tb.shape
            )));
        }
    }
    let tensors = if alpha == 0.0 {
        a.tensors.clone()
    } else if alpha == 1.0 {
        b.tensors.clone()
    } else {
        a.tensors
            .par_iter()
            .zip(&b.tensors)
            .map(|(ta, tb)| Tensor {
                name: ta.name.clone(),
                shape: ta.shape.clone(),
                data: ta
                    .data
                    .iter()
                    .zip(&tb.data)
                    .map(|(&x, &y)| ((1.0 - alpha) * x as f64 + alpha * y as f64) as f32)
                    .collect(),
            })
            .collect()
    };
    let source = |c: &Checkpoint| c.meta("source").unwrap_or("unnamed").to_string();
    let metadata = vec![
        ("source".to_string(), "interpolated".to_string()),
        ("source_a".to_string(), source(a)),
        ("source_b".to_string(), source(b)),
        ("alpha".to_string(), format!("{alpha}")),
    ];
    Ok(Checkpoint { tensors, metadata })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair() -> (Checkpoint, Checkpoint) {
        let a = Checkpoint::new(
            vec![
                Tensor::new("conv.w", vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, f32::NAN, 7.0]).unwrap(),
                Tensor::new("bn.mean", vec![4], vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
            ],
            vec![("source".into(), "synthetic".into())],
        )
        .unwrap();
        let b = Checkpoint::new(
            vec![
                Tensor::new("conv.w", vec![2, 3], vec![2.0; 6]).unwrap(),
                Tensor::new("bn.mean", vec![4], vec![1.0, 1.0, 1.0, 1.0]).unwrap(),
            ],
            vec![("source".into(), "real-finetuned".into())],
        )
        .unwrap();
        (a, b)
    }

    #[test]
    fn empty_round_trip() {
        let c = Checkpoint::default();
        assert!(Checkpoint::from_bytes(&c.to_bytes()).unwrap().bit_eq(&c));
    }

    #[test]
    fn round_trip_keeps_nan_payloads() {
        let (mut a, _) = pair();
        a.tensors[0].data[4] = f32::from_bits(0x7fc0_1234);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wsoup");
        write_checkpoint(&a, &p).unwrap();
        let back = read_checkpoint(&p).unwrap();
        assert!(back.bit_eq(&a));
        assert_eq!(back.tensors[0].data[4].to_bits(), 0x7fc0_1234);
        assert_eq!(std::fs::read(&p).unwrap(), a.to_bytes());
    }

    #[test]
    fn decode_errors() {
        let (a, _) = pair();
        let mut bytes = a.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));

        // declared count 2 with one tensor present
        let one = Checkpoint::new(vec![a.tensors[1].clone()], vec![]).unwrap();
        let mut bytes = one.to_bytes();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::TruncatedFile(_))));

        let dup = Checkpoint {
            tensors: vec![a.tensors[1].clone(), a.tensors[1].clone()],
            metadata: vec![],
        };
        assert!(matches!(
            Checkpoint::from_bytes(&dup.to_bytes()),
            Err(Error::DuplicateTensor(_))
        ));
        let full = a.to_bytes();
        for cut in [9, 20, full.len() - 3] {
            assert!(matches!(Checkpoint::from_bytes(&full[..cut]), Err(Error::TruncatedFile(_))));
        }
    }

    #[test]
    fn endpoints_and_midpoint() {
        let (a, b) = pair();
        let i0 = interpolate(&a, &b, 0.0).unwrap();
        assert!(i0.tensors.iter().zip(&a.tensors).all(|(x, y)| x.bit_eq(y)));
        let i1 = interpolate(&a, &b, 1.0).unwrap();
        assert!(i1.tensors.iter().zip(&b.tensors).all(|(x, y)| x.bit_eq(y)));
        assert_eq!(i1.meta("alpha"), Some("1"));
        assert_eq!(i1.meta("source_a"), Some("synthetic"));

        let s = |x: f32| Checkpoint::new(vec![Tensor::new("s", vec![], vec![x]).unwrap()], vec![]).unwrap();
        let mid = interpolate(&s(2.0), &s(4.0), 0.5).unwrap();
        assert_eq!(mid.tensors[0].data, vec![3.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (a, b) = pair();
        assert!(matches!(interpolate(&a, &b, 1.5), Err(Error::InvalidAlpha(_))));
        assert!(matches!(interpolate(&a, &b, -0.1), Err(Error::InvalidAlpha(_))));
        assert!(matches!(interpolate(&a, &b, f64::NAN), Err(Error::InvalidAlpha(_))));
        let mut c = b.clone();
        c.tensors[1].shape = vec![2, 2];
        assert!(matches!(interpolate(&a, &c, 0.5), Err(Error::IncompatibleCheckpoints(_))));
        let mut d = b.clone();
        d.tensors.swap(0, 1);
        assert!(matches!(interpolate(&a, &d, 0.5), Err(Error::IncompatibleCheckpoints(_))));
    }

    fn ckpt(data: Vec<f32>) -> Checkpoint {
        let n = data.len() as u64;
        Checkpoint::new(vec![Tensor::new("w", vec![n], data).unwrap()], vec![]).unwrap()
    }

    proptest! {
        #[test]
        fn self_interpolation_is_identity(v in prop::collection::vec(-1e3f32..1e3, 1..32), alpha in 0.0f64..=1.0) {
            let a = ckpt(v);
            let out = interpolate(&a, &a, alpha).unwrap();
            prop_assert_eq!(&out.tensors, &a.tensors);
        }

        #[test]
        fn repeated_interpolation_composes(
            v in prop::collection::vec((-1e3f32..1e3, -1e3f32..1e3), 1..32),
            alpha in 0.0f64..=1.0,
            gamma in 0.0f64..=1.0,
        ) {
            let a = ckpt(v.iter().map(|p| p.0).collect());
            let b = ckpt(v.iter().map(|p| p.1).collect());
            let two = interpolate(&interpolate(&a, &b, alpha).unwrap(), &b, gamma).unwrap();
            let one = interpolate(&a, &b, alpha + gamma - alpha * gamma).unwrap();
            let scale = v.iter().map(|p| p.0.abs().max(p.1.abs())).fold(1.0f32, f32::max);
            for (x, y) in two.tensors[0].data.iter().zip(&one.tensors[0].data) {
                prop_assert!((x - y).abs() <= 1e-6 * scale, "{} vs {}", x, y);
            }
        }
    }
}
