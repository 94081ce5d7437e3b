use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::format::{self, ByteReader, ByteWriter};
use crate::kernels;
use crate::tac::kmeans::{lloyd, LloydConfig};
use crate::tac::token_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PqConfig {
    pub subspaces: usize,
    pub bits: u32,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for PqConfig {
    fn default() -> Self {
        PqConfig {
            subspaces: 32,
            bits: 8,
            iterations: 10,
            seed: 0,
        }
    }
}

/// Product quantizer: `subspaces` independent codebooks of `2^bits`
/// codewords, each `sub_dim` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct PqCodec {
    dim: usize,
    subspaces: usize,
    bits: u32,
    /// `subspaces x 2^bits x sub_dim`, row-major.
    codebooks: Vec<f32>,
}

impl PqCodec {
    pub fn from_parts(dim: usize, subspaces: usize, bits: u32, codebooks: Vec<f32>) -> Result<Self> {
        check_shape(dim, subspaces, bits)?;
        let expected = subspaces * (1usize << bits) * (dim / subspaces);
        if codebooks.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: codebooks.len(),
            });
        }
        if let Some(i) = codebooks.iter().position(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!("codebook entry {i} is not finite")));
        }
        Ok(PqCodec {
            dim,
            subspaces,
            bits,
            codebooks,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subspaces(&self) -> usize {
        self.subspaces
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn codewords(&self) -> usize {
        1 << self.bits
    }

    pub fn sub_dim(&self) -> usize {
        self.dim / self.subspaces
    }

    pub fn codebooks(&self) -> &[f32] {
        &self.codebooks
    }

    pub fn codeword(&self, m: usize, k: usize) -> &[f32] {
        let s = self.sub_dim();
        let at = (m * self.codewords() + k) * s;
        &self.codebooks[at..at + s]
    }

    /// Bytes of codes per encoded vector.
    pub fn code_bytes(&self) -> usize {
        self.subspaces
    }

    /// Exhaustive nearest codeword per subspace; ties go to the lower index.
    pub fn encode_into(&self, v: &[f32], codes: &mut [u8]) {
        let s = self.sub_dim();
        let k = self.codewords();
        for (m, code) in codes.iter_mut().enumerate().take(self.subspaces) {
            let sub = &v[m * s..(m + 1) * s];
            let book = &self.codebooks[m * k * s..(m + 1) * k * s];
            let (best, _) = kernels::nearest_exact(sub, book, s);
            *code = best as u8;
        }
    }

    pub fn encode(&self, v: &[f32]) -> Vec<u8> {
        let mut codes = vec![0u8; self.subspaces];
        self.encode_into(v, &mut codes);
        codes
    }

    pub fn decode_into(&self, codes: &[u8], out: &mut [f32]) {
        let s = self.sub_dim();
        for (m, &c) in codes.iter().enumerate() {
            out[m * s..(m + 1) * s].copy_from_slice(self.codeword(m, c as usize));
        }
    }

    pub fn decode(&self, codes: &[u8]) -> Vec<f32> {
        let mut out = vec![0f32; self.dim];
        self.decode_into(codes, &mut out);
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(format::MAGIC_CODEC);
        w.u32(self.dim as u32);
        w.u32(self.subspaces as u32);
        w.u32(self.bits);
        w.u32(self.sub_dim() as u32);
        w.f32s(&self.codebooks);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = ByteReader::with_header(bytes, path, format::MAGIC_CODEC)?;
        let dim = r.u32()? as usize;
        let subspaces = r.u32()? as usize;
        let bits = r.u32()?;
        let sub_dim = r.u32()? as usize;
        check_shape(dim, subspaces, bits).map_err(|e| r.header_err(e.to_string()))?;
        if sub_dim * subspaces != dim {
            return Err(r.header_err("sub_dim inconsistent with dim and subspace count"));
        }
        let n = subspaces * (1usize << bits) * sub_dim;
        let expected = (r.position() + n * 4) as u64;
        if bytes.len() as u64 != expected {
            return Err(Error::SizeMismatch {
                path: path.to_path_buf(),
                expected,
                actual: bytes.len() as u64,
            });
        }
        let codebooks = r.f32s(n)?;
        PqCodec::from_parts(dim, subspaces, bits, codebooks)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        format::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        PqCodec::from_bytes(&format::read_file(path)?, path)
    }
}

fn check_shape(dim: usize, subspaces: usize, bits: u32) -> Result<()> {
    if subspaces == 0 || !dim.is_multiple_of(subspaces) {
        return Err(Error::SubspaceMismatch { dim, subspaces });
    }
    if !(1..=8).contains(&bits) {
        return Err(Error::Precondition(format!("code width must be 1..=8 bits, got {bits}")));
    }
    Ok(())
}

/// Trains one codebook per subspace with Lloyd's k-means on the
/// corresponding slice of every sample row.
pub fn train_pq(sample: &[f32], dim: usize, cfg: &PqConfig) -> Result<PqCodec> {
    check_shape(dim, cfg.subspaces, cfg.bits)?;
    if !sample.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: sample.len(),
        });
    }
    let n = sample.len() / dim;
    let k = 1usize << cfg.bits;
    if n < k {
        return Err(Error::Precondition(format!(
            "codec training needs at least {k} residuals, got {n}"
        )));
    }
    let s = dim / cfg.subspaces;
    let books: Vec<Vec<f32>> = (0..cfg.subspaces)
        .into_par_iter()
        .map(|m| {
            let sub: Vec<f32> = sample
                .chunks_exact(dim)
                .flat_map(|row| row[m * s..(m + 1) * s].iter().copied())
                .collect();
            lloyd(
                &sub,
                s,
                &LloydConfig {
                    k,
                    iterations: cfg.iterations,
                    seed: token_seed(cfg.seed, m as u32),
                    normalize: false,
                },
            )
            .map(|r| r.centroids)
        })
        .collect::<Result<_>>()?;
    PqCodec::from_parts(dim, cfg.subspaces, cfg.bits, books.concat())
}

/// Up to `cap` unit-normalized residuals `t - c`, skipping zero residuals.
/// Rows are drawn uniformly without replacement and kept in corpus order.
pub fn residual_sample(
    vectors: &[f32],
    centroid_ids: &[u32],
    centroids: &[f32],
    dim: usize,
    cap: usize,
    seed: u64,
) -> Vec<f32> {
    let n = centroid_ids.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = if n > cap {
        rand::seq::index::sample(&mut rng, n, cap).into_vec()
    } else {
        (0..n).collect()
    };
    rows.sort_unstable();
    let mut out = Vec::with_capacity(rows.len() * dim);
    let mut r = vec![0f32; dim];
    for row in rows {
        let c = centroid_ids[row] as usize;
        residual_into(&vectors[row * dim..(row + 1) * dim], &centroids[c * dim..(c + 1) * dim], &mut r);
        if kernels::normalize(&mut r) > 0.0 {
            out.extend_from_slice(&r);
        }
    }
    out
}

pub(crate) fn residual_into(t: &[f32], c: &[f32], out: &mut [f32]) {
    for ((o, a), b) in out.iter_mut().zip(t).zip(c) {
        *o = a - b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_rows(n: usize, dim: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f32> = (0..n * dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        kernels::normalize_rows(&mut v, dim);
        v
    }

    #[test]
    fn rejects_indivisible_dim() {
        let cfg = PqConfig { subspaces: 5, bits: 2, iterations: 1, seed: 0 };
        assert!(matches!(
            train_pq(&random_rows(8, 32, 0), 32, &cfg),
            Err(Error::SubspaceMismatch { dim: 32, subspaces: 5 })
        ));
    }

    #[test]
    fn exactly_k_distinct_rows_become_codewords() {
        let rows = random_rows(4, 8, 1);
        let cfg = PqConfig { subspaces: 2, bits: 2, iterations: 3, seed: 5 };
        let codec = train_pq(&rows, 8, &cfg).unwrap();
        for row in rows.chunks(8) {
            let rec = codec.decode(&codec.encode(row));
            assert_eq!(rec, row);
        }
    }

    #[test]
    fn thirty_two_subspaces_of_eight_bits_is_32_bytes() {
        let codec = PqCodec::from_parts(128, 32, 8, vec![0.0; 32 * 256 * 4]).unwrap();
        assert_eq!(codec.code_bytes(), 32);
        assert_eq!(codec.encode(&[0.0; 128]).len(), 32);
    }

    #[test]
    fn beats_random_codewords_on_held_out_data() {
        let dim = 16;
        let train = random_rows(2000, dim, 2);
        let held = random_rows(500, dim, 3);
        let cfg = PqConfig { subspaces: 4, bits: 4, iterations: 8, seed: 1 };
        let codec = train_pq(&train, dim, &cfg).unwrap();
        // random baseline: codewords are random training subvectors
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = dim / 4;
        let mut books = Vec::new();
        for m in 0..4 {
            for _ in 0..16 {
                let r = rng.gen_range(0..2000);
                books.extend_from_slice(&train[r * dim + m * s..r * dim + (m + 1) * s]);
            }
        }
        let random = PqCodec::from_parts(dim, 4, 4, books).unwrap();
        let mse = |c: &PqCodec| -> f64 {
            held.chunks(dim)
                .map(|v| kernels::l2_sq_f64(v, &c.decode(&c.encode(v))))
                .sum::<f64>()
                / 500.0
        };
        assert!(mse(&codec) <= mse(&random), "{} > {}", mse(&codec), mse(&random));
    }

    #[test]
    fn reencoding_a_decoded_vector_is_idempotent() {
        let dim = 12;
        let codec = train_pq(&random_rows(64, dim, 4), dim, &PqConfig { subspaces: 3, bits: 3, iterations: 4, seed: 2 })
            .unwrap();
        for v in random_rows(50, dim, 5).chunks(dim) {
            let codes = codec.encode(v);
            assert_eq!(codec.encode(&codec.decode(&codes)), codes);
        }
    }

    #[test]
    fn codec_file_roundtrip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let codec = train_pq(&random_rows(32, 8, 6), 8, &PqConfig { subspaces: 4, bits: 3, iterations: 2, seed: 0 })
            .unwrap();
        let p = dir.path().join("codec.bin");
        codec.save(&p).unwrap();
        assert_eq!(PqCodec::load(&p).unwrap(), codec);
        let b = std::fs::read(&p).unwrap();
        std::fs::write(&p, &b[..b.len() - 4]).unwrap();
        assert!(matches!(PqCodec::load(&p), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn zero_residuals_are_skipped_in_sample() {
        let vectors = vec![1.0, 0.0, 0.0, 1.0];
        let centroids = vec![1.0, 0.0];
        let s = residual_sample(&vectors, &[0, 0], &centroids, 2, 10, 0);
        assert_eq!(s.len(), 2);
        let expect = std::f32::consts::FRAC_1_SQRT_2;
        assert!((s[0] + expect).abs() < 1e-6 && (s[1] - expect).abs() < 1e-6);
    }
}
