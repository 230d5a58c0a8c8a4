//! Binary parameter checkpoints.
//!
//! Layout (little endian): magic `TRLNN001`, `u32` layer-size count, the
//! sizes as `u32`, `u8` head tag, two `f64` head bounds, `u64` parameter
//! count, then every weight and bias as `f64` in the flat row-major order of
//! [`MlpParams`].

use std::io::{Read, Write};

use super::mlp::{Head, MlpParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TRLNN001";

pub fn write_params<W: Write>(p: &MlpParams, w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(p.sizes().len() as u32).to_le_bytes())?;
    for s in p.sizes() {
        w.write_all(&(*s as u32).to_le_bytes())?;
    }
    let (lo, hi) = p.head().bounds();
    w.write_all(&[p.head().tag()])?;
    w.write_all(&lo.to_le_bytes())?;
    w.write_all(&hi.to_le_bytes())?;
    w.write_all(&(p.num_params() as u64).to_le_bytes())?;
    for v in p.params() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_params<R: Read>(r: &mut R) -> Result<MlpParams> {
    let magic: [u8; 8] = read_array(r)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a parameter checkpoint (bad magic)".into()));
    }
    let n = u32::from_le_bytes(read_array(r)?) as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::Parse(format!("implausible layer count {n}")));
    }
    let mut sizes = Vec::with_capacity(n);
    for _ in 0..n {
        sizes.push(u32::from_le_bytes(read_array(r)?) as usize);
    }
    let [tag] = read_array::<1, _>(r)?;
    let lo = f64::from_le_bytes(read_array(r)?);
    let hi = f64::from_le_bytes(read_array(r)?);
    let head = Head::from_tag(tag, lo, hi).ok_or_else(|| Error::Parse(format!("unknown head tag {tag}")))?;
    let count = u64::from_le_bytes(read_array(r)?) as usize;
    let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    if count != expected {
        return Err(Error::Parse(format!(
            "header declares {count} parameters but sizes {sizes:?} need {expected}"
        )));
    }
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(f64::from_le_bytes(read_array(r)?));
    }
    MlpParams::from_parts(sizes, head, data)
}

pub fn to_bytes(p: &MlpParams) -> Vec<u8> {
    let mut out = Vec::new();
    write_params(p, &mut out).expect("writing to a Vec cannot fail");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn round_trip_is_exact(seed in any::<u64>(), hidden in 1usize..12, depth in 0usize..3, tag in 0u8..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let head = Head::from_tag(tag, -7.5, 1.25).unwrap();
            let p = MlpParams::with_hidden(3, depth, hidden, 4, head, &mut rng).unwrap();
            let bytes = to_bytes(&p);
            let q = read_params(&mut bytes.as_slice()).unwrap();
            prop_assert_eq!(p, q);
        }
    }

    #[test]
    fn truncated_file_is_an_error() {
        let p = MlpParams::zeros(&[2, 3, 1], Head::Linear).unwrap();
        let bytes = to_bytes(&p);
        assert!(read_params(&mut &bytes[..bytes.len() - 3]).is_err());
        assert!(read_params(&mut &b"garbage!"[..]).is_err());
    }
}
