//! Binary tensor block: `"KZTN"`, version byte, rank (u64 LE), extents
//! (u64 LE each), then `(re, im)` pairs as f64 LE in row-major order.

use std::io::{Read, Write};

use super::DenseTensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const TENSOR_MAGIC: &[u8; 4] = b"KZTN";
pub const TENSOR_VERSION: u8 = 1;

/// Ranks above this are rejected when reading, to fail fast on garbage.
const MAX_RANK: u64 = 16;

pub fn write_tensor<S: Scalar, W: Write>(w: &mut W, t: &DenseTensor<S>) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&[TENSOR_VERSION])?;
    w.write_all(&(t.rank() as u64).to_le_bytes())?;
    for &e in t.shape() {
        w.write_all(&(e as u64).to_le_bytes())?;
    }
    for v in t.data() {
        let (re, im) = v.to_parts();
        w.write_all(&re.to_le_bytes())?;
        w.write_all(&im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<S: Scalar, R: Read>(r: &mut R) -> Result<DenseTensor<S>> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut version = [0u8; 1];
    read_exact(r, &mut version)?;
    if version[0] != TENSOR_VERSION {
        return Err(Error::Format(format!(
            "unsupported tensor version {} (expected {TENSOR_VERSION})",
            version[0]
        )));
    }
    let rank = read_u64(r)?;
    if rank > MAX_RANK {
        return Err(Error::Format(format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        let e = read_u64(r)?;
        if e == 0 || e > u32::MAX as u64 {
            return Err(Error::Format(format!("implausible extent {e}")));
        }
        shape.push(e as usize);
    }
    let len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        let re = f64::from_bits(read_u64(r)?);
        let im = f64::from_bits(read_u64(r)?);
        data.push(S::from_parts(re, im).ok_or_else(|| {
            Error::Format("complex value in a real-typed tensor block".into())
        })?);
    }
    DenseTensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated tensor block".into()),
        _ => Error::Io(e),
    })
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as c64;
    use proptest::prelude::*;

    #[test]
    fn layout_is_bit_exact() {
        let t = DenseTensor::new(vec![1, 2], vec![c64::new(1.0, -2.0), c64::new(0.5, 0.0)]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert_eq!(&buf[..4], b"KZTN");
        assert_eq!(buf[4], 1);
        assert_eq!(u64::from_le_bytes(buf[5..13].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[13..21].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[21..29].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(buf[29..37].try_into().unwrap()), 1.0);
        assert_eq!(f64::from_le_bytes(buf[37..45].try_into().unwrap()), -2.0);
        assert_eq!(buf.len(), 29 + 2 * 16);
    }

    #[test]
    fn corrupt_blocks_are_format_errors() {
        let t = DenseTensor::<c64>::identity(2);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();

        let mut bad_version = buf.clone();
        bad_version[4] = 9;
        assert!(matches!(read_tensor::<c64, _>(&mut bad_version.as_slice()), Err(Error::Format(_))));

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_tensor::<c64, _>(&mut bad_magic.as_slice()), Err(Error::Format(_))));

        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(read_tensor::<c64, _>(&mut &truncated[..]), Err(Error::Format(_))));
    }

    #[test]
    fn real_reader_refuses_imaginary_parts() {
        let t = DenseTensor::new(vec![1], vec![c64::new(0.0, 1.0)]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert!(read_tensor::<f64, _>(&mut buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            shape in proptest::collection::vec(1usize..4, 0..4),
            seed in any::<u64>(),
        ) {
            let mut s = seed;
            let t = DenseTensor::from_fn(&shape, |_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                c64::new(f64::from_bits(s >> 12 | 0x3ff0_0000_0000_0000) - 1.5, (s % 1000) as f64 * 1e-3)
            });
            let mut buf = Vec::new();
            write_tensor(&mut buf, &t).unwrap();
            let back: DenseTensor<c64> = read_tensor(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            for (a, b) in back.data().iter().zip(t.data()) {
                prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
                prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
        }
    }
}
