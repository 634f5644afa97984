//! Binary checkpoint of a field and its RNG position.
//!
//! Little-endian layout:
//!
//! ```text
//! "VTRC"  u32 version  u32 cutoff  f64 t  u32 modes
//! modes × { i32 k1, i32 k2, f64 re, f64 im }     half lattice, storage order
//! u32 algorithm  u64 seed  u32 stream  u64 counter  u8 reflect
//! ```

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::noise::{RngAlgorithm, RngState};
use crate::spectral::{half_lattice, mode_count, SpectralField};

pub const MAGIC: &[u8; 4] = b"VTRC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub field: SpectralField,
    pub rng: RngState,
}

impl Snapshot {
    pub fn encode(&self) -> Vec<u8> {
        let n = self.field.cutoff();
        let modes = self.field.coeffs().len();
        let mut out = Vec::with_capacity(24 + modes * 24 + 25);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&(modes as u32).to_le_bytes());
        for (k, c) in self.field.iter() {
            out.extend_from_slice(&k.k1.to_le_bytes());
            out.extend_from_slice(&k.k2.to_le_bytes());
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }
        out.extend_from_slice(&self.rng.algorithm.id().to_le_bytes());
        out.extend_from_slice(&self.rng.seed.to_le_bytes());
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.counter.to_le_bytes());
        out.push(self.rng.reflect as u8);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not a snapshot".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported snapshot version {version}"
            )));
        }
        let n = r.u32()? as usize;
        if n == 0 {
            return Err(Error::Format("cutoff 0".into()));
        }
        let t = r.f64()?;
        let modes = r.u32()? as usize;
        if modes != mode_count(n) {
            return Err(Error::Format(format!(
                "cutoff {n} needs {} modes, header says {modes}",
                mode_count(n)
            )));
        }
        let mut coeffs = Vec::with_capacity(modes);
        for k in half_lattice(n) {
            let (k1, k2) = (r.i32()?, r.i32()?);
            if (k1, k2) != (k.k1, k.k2) {
                return Err(Error::Format(format!(
                    "mode ({k1}, {k2}) out of order, expected ({}, {})",
                    k.k1, k.k2
                )));
            }
            coeffs.push(Complex64::new(r.f64()?, r.f64()?));
        }
        let algorithm = RngAlgorithm::from_id(r.u32()?)
            .ok_or_else(|| Error::Format("unknown RNG algorithm".into()))?;
        let seed = r.u64()?;
        let stream = r.u32()?;
        let counter = r.u64()?;
        let reflect = match r.take(1)?[0] {
            0 => false,
            1 => true,
            b => return Err(Error::Format(format!("bad reflect flag {b}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            t,
            field: SpectralField::from_coeffs(n, coeffs)?,
            rng: RngState {
                algorithm,
                seed,
                stream,
                counter,
                reflect,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format(format!(
                "truncated snapshot: needed {end} bytes, have {}",
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Wavevector;

    fn sample() -> Snapshot {
        let k = Wavevector::new(2, -1).unwrap();
        let mut rng = RngState::new(0xdead_beef_0123, 7).reflected();
        rng.advance(12345);
        Snapshot {
            t: 0.125,
            field: SpectralField::from_modes(3, [(k, Complex64::new(0.1, -f64::MIN_POSITIVE))])
                .unwrap(),
            rng,
        }
    }

    #[test]
    fn layout_is_fixed() {
        let b = sample().encode();
        assert_eq!(&b[..4], b"VTRC");
        assert_eq!(b.len(), 24 + 24 * 24 + 25);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(b[12..20].try_into().unwrap()), 0.125);
        // first record is (1, 0)
        assert_eq!(i32::from_le_bytes(b[24..28].try_into().unwrap()), 1);
        assert_eq!(*b.last().unwrap(), 1);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample();
        let b = s.encode();
        let back = Snapshot::decode(&b).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.encode(), b);
    }

    #[test]
    fn corrupt_inputs_are_format_errors() {
        let b = sample().encode();
        for cut in [0, 3, 20, 100, b.len() - 1] {
            assert!(matches!(Snapshot::decode(&b[..cut]), Err(Error::Format(_))));
        }
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(Snapshot::decode(&bad), Err(Error::Format(_))));
        let mut bad = b.clone();
        bad[4] = 9;
        assert!(matches!(Snapshot::decode(&bad), Err(Error::Format(_))));
        let mut bad = b;
        bad.push(0);
        assert!(matches!(Snapshot::decode(&bad), Err(Error::Format(_))));
    }
}
