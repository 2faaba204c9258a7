//! QWF: a bit-exact little-endian array container.
//!
//! Layout: `b"QWF1"`, one kind byte (0 = complex128, 1 = float64), a `u32`
//! rank, `rank` `u64` extents, then the row-major payload. Complex entries
//! are stored as interleaved doubles, real part first.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::SpinorField;
use crate::matcore::ComplexMatrix;
use crate::relativity::TetradField;
use crate::synth::CoinSet;

pub const MAGIC: [u8; 4] = *b"QWF1";

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Complex(Vec<Complex64>),
    Real(Vec<f64>),
}

impl Payload {
    fn len(&self) -> usize {
        match self {
            Payload::Complex(v) => v.len(),
            Payload::Real(v) => v.len(),
        }
    }

    fn kind(&self) -> u8 {
        match self {
            Payload::Complex(_) => 0,
            Payload::Real(_) => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QwfArray {
    shape: Vec<u64>,
    payload: Payload,
}

impl QwfArray {
    pub fn new(shape: Vec<u64>, payload: Payload) -> Result<Self> {
        let count = shape
            .iter()
            .try_fold(1u64, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::Format("extent product overflows".into()))?;
        if count != payload.len() as u64 {
            return Err(Error::Format(format!(
                "shape {shape:?} holds {count} entries but the payload has {}",
                payload.len()
            )));
        }
        Ok(Self { shape, payload })
    }

    pub fn shape(&self) -> &[u64] {
        &self.shape
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn into_payload(self) -> Payload {
        self.payload
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let rank = u32::try_from(self.shape.len()).map_err(|_| Error::Format("rank too large".into()))?;
        let mut buf = Vec::with_capacity(9 + 8 * self.shape.len() + 16 * self.payload.len());
        buf.extend_from_slice(&MAGIC);
        buf.push(self.payload.kind());
        buf.extend_from_slice(&rank.to_le_bytes());
        for n in &self.shape {
            buf.extend_from_slice(&n.to_le_bytes());
        }
        match &self.payload {
            Payload::Complex(v) => {
                for z in v {
                    buf.extend_from_slice(&z.re.to_le_bytes());
                    buf.extend_from_slice(&z.im.to_le_bytes());
                }
            }
            Payload::Real(v) => {
                for x in v {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("missing QWF1 magic".into()));
        }
        let kind = cur.take(1)?[0];
        let rank = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes")) as usize;
        let mut shape = Vec::with_capacity(rank.min(64));
        for _ in 0..rank {
            shape.push(cur.u64()?);
        }
        let count = shape
            .iter()
            .try_fold(1u64, |acc: u64, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::Format("extent product overflows".into()))?;
        let width = match kind {
            0 => 16,
            1 => 8,
            k => return Err(Error::Format(format!("unknown payload kind {k}"))),
        };
        let expected = count
            .checked_mul(width)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        let rest = (bytes.len() - cur.pos) as u64;
        if rest != expected {
            return Err(Error::Format(format!(
                "payload has {rest} bytes, header implies {expected}"
            )));
        }
        let count = count as usize;
        let payload = if kind == 0 {
            let mut v = Vec::with_capacity(count);
            for _ in 0..count {
                let re = cur.f64()?;
                let im = cur.f64()?;
                v.push(Complex64::new(re, im));
            }
            Payload::Complex(v)
        } else {
            let mut v = Vec::with_capacity(count);
            for _ in 0..count {
                v.push(cur.f64()?);
            }
            Payload::Real(v)
        };
        Ok(Self { shape, payload })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn extents(dims: &[usize], tail: &[usize]) -> Vec<u64> {
    dims.iter().chain(tail).map(|&n| n as u64).collect()
}

fn complex_payload(a: QwfArray, what: &str) -> Result<(Vec<u64>, Vec<Complex64>)> {
    match a.payload {
        Payload::Complex(v) => Ok((a.shape, v)),
        Payload::Real(_) => Err(Error::Format(format!("{what} needs a complex payload"))),
    }
}

fn usize_shape(shape: &[u64]) -> Result<Vec<usize>> {
    shape
        .iter()
        .map(|&n| usize::try_from(n).map_err(|_| Error::Format("extent exceeds address space".into())))
        .collect()
}

/// Shape `dims ++ [spin_dim]`.
pub fn spinor_to_qwf(psi: &SpinorField) -> QwfArray {
    QwfArray {
        shape: extents(psi.dims(), &[psi.spin_dim()]),
        payload: Payload::Complex(psi.amplitudes().to_vec()),
    }
}

/// Spacing is not part of the container and is supplied by the caller.
pub fn spinor_from_qwf(a: QwfArray, eps: f64) -> Result<SpinorField> {
    let (shape, v) = complex_payload(a, "spinor field")?;
    if shape.len() < 2 {
        return Err(Error::Format("spinor field needs rank at least 2".into()));
    }
    let shape = usize_shape(&shape)?;
    let (dims, k) = shape.split_at(shape.len() - 1);
    SpinorField::from_amplitudes(dims, k[0], eps, v)
}

/// Per-site square matrices, shape `dims ++ [k, k]`.
pub fn matrices_to_qwf(dims: &[usize], field: &[ComplexMatrix]) -> Result<QwfArray> {
    let k = field.first().map_or(0, |m| m.rows());
    let mut v = Vec::with_capacity(field.len() * k * k);
    for m in field {
        if m.rows() != k || m.cols() != k {
            return Err(Error::Shape("matrix field entries differ in size".into()));
        }
        v.extend_from_slice(m.as_slice());
    }
    QwfArray::new(extents(dims, &[k, k]), Payload::Complex(v))
}

pub fn matrices_from_qwf(a: QwfArray) -> Result<(Vec<usize>, Vec<ComplexMatrix>)> {
    let (shape, v) = complex_payload(a, "matrix field")?;
    if shape.len() < 3 || shape[shape.len() - 1] != shape[shape.len() - 2] {
        return Err(Error::Format(format!(
            "shape {shape:?} is not a field of square matrices"
        )));
    }
    let shape = usize_shape(&shape)?;
    let k = shape[shape.len() - 1];
    let dims = shape[..shape.len() - 2].to_vec();
    let mats = if k == 0 {
        Vec::new()
    } else {
        v.chunks_exact(k * k)
            .map(|c| ComplexMatrix::from_row_major(k, k, c.to_vec()))
            .collect()
    };
    Ok((dims, mats))
}

/// Coin slots as `[n_slots, 2, 4s, 4s]` (encoding, then coin) and the
/// site-to-slot table as a real array of shape `dims`.
pub fn coinset_to_qwf(coins: &CoinSet) -> (QwfArray, QwfArray) {
    let k4 = coins.spin_dim() * 2;
    let mut v = Vec::with_capacity(coins.n_slots() * 2 * k4 * k4);
    for (e, w) in coins.encodings().iter().zip(coins.coins()) {
        v.extend_from_slice(e.as_slice());
        v.extend_from_slice(w.as_slice());
    }
    let slots = QwfArray {
        shape: vec![coins.n_slots() as u64, 2, k4 as u64, k4 as u64],
        payload: Payload::Complex(v),
    };
    let index = QwfArray {
        shape: extents(coins.dims(), &[]),
        payload: Payload::Real(coins.slot_of_site().iter().map(|&s| s as f64).collect()),
    };
    (slots, index)
}

pub fn coinset_from_qwf(slots: QwfArray, index: QwfArray, axis: usize, eps: f64) -> Result<CoinSet> {
    let (shape, v) = complex_payload(slots, "coin slots")?;
    if shape.len() != 4 || shape[1] != 2 || shape[2] != shape[3] {
        return Err(Error::Format(format!(
            "coin slots have shape {shape:?}, expected [n, 2, k, k]"
        )));
    }
    let shape = usize_shape(&shape)?;
    let k4 = shape[2];
    let mut encodings = Vec::with_capacity(shape[0]);
    let mut coins = Vec::with_capacity(shape[0]);
    for slot in v.chunks_exact(2 * k4 * k4) {
        encodings.push(ComplexMatrix::from_row_major(k4, k4, slot[..k4 * k4].to_vec()));
        coins.push(ComplexMatrix::from_row_major(k4, k4, slot[k4 * k4..].to_vec()));
    }
    let dims = usize_shape(&index.shape)?;
    let table = match index.payload {
        Payload::Real(v) => v,
        Payload::Complex(_) => return Err(Error::Format("slot table needs a real payload".into())),
    };
    let slot_of_site = table
        .into_iter()
        .map(|x| {
            if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
                Ok(x as u32)
            } else {
                Err(Error::Format(format!("slot index {x} is not a non-negative integer")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    CoinSet::from_parts(&dims, axis, eps, slot_of_site, encodings, coins)
}

/// Real payload of shape `dims ++ [4, 4]` with entry `[.., mu, a] = e^mu_a`.
pub fn tetrad_to_qwf(t: &TetradField) -> QwfArray {
    QwfArray {
        shape: extents(t.dims(), &[4, 4]),
        payload: Payload::Real(t.tetrads().iter().flatten().copied().collect()),
    }
}

pub fn tetrad_from_qwf(a: QwfArray, eps: f64, mass: f64) -> Result<TetradField> {
    let shape = usize_shape(&a.shape)?;
    let v = match a.payload {
        Payload::Real(v) => v,
        Payload::Complex(_) => return Err(Error::Format("tetrad field needs a real payload".into())),
    };
    if shape.len() < 3 || shape[shape.len() - 2..] != [4, 4] {
        return Err(Error::Format(format!("tetrad shape {shape:?} does not end in [4, 4]")));
    }
    let dims = &shape[..shape.len() - 2];
    let tetrads = v.chunks_exact(16).map(|c| c.try_into().expect("16 entries")).collect();
    TetradField::new(dims, eps, mass, tetrads)
}

pub fn write_file(path: &std::path::Path, a: &QwfArray) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    a.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_file(path: &std::path::Path) -> Result<QwfArray> {
    QwfArray::from_bytes(&std::fs::read(path)?)
}
