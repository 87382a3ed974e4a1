//! Binary lattice dump: `u64 LE` header `(T, U, K̃)` followed by
//! `T·(U+1)·K̃` little-endian f64 log-probabilities, row-major.

use super::lattice::PosteriorLattice;
use crate::error::{MtlabError, Result};
use crate::numerics::Array3;

pub fn write_lattice(post: &PosteriorLattice) -> Vec<u8> {
    let (t, rows, k) = post.0.dims();
    let mut out = Vec::with_capacity(24 + 8 * post.0.as_slice().len());
    for v in [t, rows - 1, k] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for x in post.0.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn read_lattice(bytes: &[u8]) -> Result<PosteriorLattice> {
    if bytes.len() < 24 {
        return Err(MtlabError::Parse("lattice dump shorter than header".into()));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap()) as usize;
    let (t, u, k) = (word(0), word(1), word(2));
    let n = t
        .checked_mul(u + 1)
        .and_then(|x| x.checked_mul(k))
        .ok_or_else(|| MtlabError::Parse("lattice dump dimensions overflow".into()))?;
    if bytes.len() != 24 + 8 * n {
        return Err(MtlabError::Parse(format!(
            "lattice dump for {t}x{}x{k} needs {} bytes, got {}",
            u + 1,
            24 + 8 * n,
            bytes.len()
        )));
    }
    let data = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(PosteriorLattice(Array3::from_vec(t, u + 1, k, data)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let post = PosteriorLattice(Array3::from_fn(2, 3, 4, |a, b, c| -((a + b + c) as f64)));
        let bytes = write_lattice(&post);
        assert_eq!(&bytes[..8], &2u64.to_le_bytes());
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(read_lattice(&bytes).unwrap(), post);
        assert!(read_lattice(&bytes[..bytes.len() - 1]).is_err());
    }
}
