//! Dense f32 kernels.
//!
//! `dot` and `l2_sq` use a fixed 8-lane accumulation order so results are
//! identical on every platform. [`CentroidBlocks`] is the hot nearest-centroid
//! search used by k-means and assignment; it dispatches to an AVX2+FMA
//! implementation at runtime when available.

use std::sync::OnceLock;

const LANES: usize = 8;

// Short vectors dominate the callers, so the plain loops (which inline and
// autovectorize) beat a runtime-dispatched call here.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    dot_scalar(a, b)
}

#[inline]
pub fn l2_sq(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    l2_sq_scalar(a, b)
}

/// Hints the cache to fetch `v`; a no-op where unsupported.
#[inline]
pub fn prefetch(v: &[f32]) {
    #[cfg(target_arch = "x86_64")]
    {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
        for line in v.chunks(16) {
            // SAFETY: prefetch never faults and sse is part of the x86_64 baseline.
            unsafe { _mm_prefetch::<_MM_HINT_T0>(line.as_ptr() as *const i8) };
        }
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = v;
}

/// `out[i] = l2_sq(row_i, center)` for every row of `points`; bit-identical
/// to calling `l2_sq` per row.
pub fn l2_sq_rows(points: &[f32], dim: usize, center: &[f32], out: &mut [f32]) {
    assert_eq!(center.len(), dim);
    assert_eq!(out.len() * dim, points.len());
    #[cfg(target_arch = "x86_64")]
    {
        if dim >= LANES && use_avx2() {
            // SAFETY: avx2 was detected at runtime.
            unsafe { l2_sq_rows_avx2(points, dim, center, out) };
            return;
        }
    }
    for (o, p) in out.iter_mut().zip(points.chunks_exact(dim)) {
        *o = l2_sq_scalar(p, center);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn l2_sq_rows_avx2(points: &[f32], dim: usize, center: &[f32], out: &mut [f32]) {
    for (o, p) in out.iter_mut().zip(points.chunks_exact(dim)) {
        *o = l2_sq_avx2(p, center);
    }
}

#[inline]
fn dot_scalar(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let base = c * LANES;
        for l in 0..LANES {
            acc[l] += a[base + l] * b[base + l];
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * LANES..a.len() {
        tail += a[i] * b[i];
    }
    reduce_lanes(acc) + tail
}

#[inline]
fn l2_sq_scalar(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let base = c * LANES;
        for l in 0..LANES {
            let d = a[base + l] - b[base + l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * LANES..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    reduce_lanes(acc) + tail
}

// Separate multiply and add (no FMA) keep these bit-identical to the scalar
// versions.
#[cfg(all(test, target_arch = "x86_64"))]
#[target_feature(enable = "avx2")]
unsafe fn dot_avx2(a: &[f32], b: &[f32]) -> f32 {
    use std::arch::x86_64::*;
    let chunks = a.len() / LANES;
    let mut acc = _mm256_setzero_ps();
    for c in 0..chunks {
        let x = _mm256_loadu_ps(a.as_ptr().add(c * LANES));
        let y = _mm256_loadu_ps(b.as_ptr().add(c * LANES));
        acc = _mm256_add_ps(acc, _mm256_mul_ps(x, y));
    }
    let mut lanes = [0.0f32; LANES];
    _mm256_storeu_ps(lanes.as_mut_ptr(), acc);
    let mut tail = 0.0f32;
    for i in chunks * LANES..a.len() {
        tail += a[i] * b[i];
    }
    reduce_lanes(lanes) + tail
}

#[cfg(target_arch = "x86_64")]
#[inline]
#[target_feature(enable = "avx2")]
unsafe fn l2_sq_avx2(a: &[f32], b: &[f32]) -> f32 {
    use std::arch::x86_64::*;
    let chunks = a.len() / LANES;
    let mut acc = _mm256_setzero_ps();
    for c in 0..chunks {
        let x = _mm256_loadu_ps(a.as_ptr().add(c * LANES));
        let y = _mm256_loadu_ps(b.as_ptr().add(c * LANES));
        let d = _mm256_sub_ps(x, y);
        acc = _mm256_add_ps(acc, _mm256_mul_ps(d, d));
    }
    let mut lanes = [0.0f32; LANES];
    _mm256_storeu_ps(lanes.as_mut_ptr(), acc);
    let mut tail = 0.0f32;
    for i in chunks * LANES..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    reduce_lanes(lanes) + tail
}

#[inline]
fn reduce_lanes(acc: [f32; LANES]) -> f32 {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

pub fn l2_sq_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = f64::from(*x) - f64::from(*y);
            d * d
        })
        .sum()
}

pub fn norm(a: &[f32]) -> f32 {
    a.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt() as f32
}

/// Scales `v` to unit L2 norm. Zero vectors are left untouched; returns the
/// original norm.
pub fn normalize(v: &mut [f32]) -> f32 {
    let n = norm(v);
    if n > 0.0 {
        let inv = 1.0 / f64::from(n);
        for x in v.iter_mut() {
            *x = (f64::from(*x) * inv) as f32;
        }
    }
    n
}

pub fn normalize_rows(data: &mut [f32], dim: usize) {
    for row in data.chunks_exact_mut(dim) {
        normalize(row);
    }
}

/// Index of the smallest `l2_sq` row, ties to the lowest index.
pub fn nearest_exact(x: &[f32], rows: &[f32], dim: usize) -> (usize, f32) {
    let mut best = (0usize, f32::INFINITY);
    for (i, row) in rows.chunks_exact(dim).enumerate() {
        let d = l2_sq(x, row);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

const BLOCK: usize = 16;
/// Points scored together per pass over the centroid blocks.
const GROUP: usize = 4;

fn use_avx2() -> bool {
    static DETECTED: OnceLock<bool> = OnceLock::new();
    *DETECTED.get_or_init(|| {
        #[cfg(target_arch = "x86_64")]
        {
            std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
        }
        #[cfg(not(target_arch = "x86_64"))]
        {
            false
        }
    })
}

/// Centroids packed dimension-major in blocks of 16 for nearest-centroid
/// search via `|c|^2 - 2<x, c>`.
pub struct CentroidBlocks {
    dim: usize,
    count: usize,
    blocks: Vec<f32>,
    norms: Vec<f32>,
}

impl CentroidBlocks {
    pub fn new(centroids: &[f32], dim: usize) -> Self {
        assert!(dim > 0 && centroids.len().is_multiple_of(dim));
        let count = centroids.len() / dim;
        let nblocks = count.div_ceil(BLOCK);
        let mut blocks = vec![0.0f32; nblocks * BLOCK * dim];
        let mut norms = vec![f32::INFINITY; nblocks * BLOCK];
        for (c, row) in centroids.chunks_exact(dim).enumerate() {
            let (b, lane) = (c / BLOCK, c % BLOCK);
            let base = b * BLOCK * dim;
            for (k, v) in row.iter().enumerate() {
                blocks[base + k * BLOCK + lane] = *v;
            }
            norms[c] = dot(row, row);
        }
        CentroidBlocks {
            dim,
            count,
            blocks,
            norms,
        }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Nearest centroid of every row of `points`; distances are approximate
    /// squared L2 (clamped at zero).
    pub fn nearest_batch(&self, points: &[f32], ids: &mut [u32], dists: &mut [f32]) {
        let dim = self.dim;
        let n = points.len() / dim;
        assert_eq!(ids.len(), n);
        assert_eq!(dists.len(), n);
        if self.count == 0 {
            return;
        }
        let mut i = 0;
        while i < n {
            // short final groups repeat their last point
            let xs: [&[f32]; GROUP] = std::array::from_fn(|p| {
                let r = (i + p).min(n - 1);
                &points[r * dim..(r + 1) * dim]
            });
            let best = self.nearest_group(xs);
            for p in 0..GROUP.min(n - i) {
                ids[i + p] = best[p].0;
                dists[i + p] = (best[p].1 + dot(xs[p], xs[p])).max(0.0);
            }
            i += GROUP;
        }
    }

    pub fn nearest(&self, x: &[f32]) -> (u32, f32) {
        let r = self.nearest_group([x; GROUP])[0];
        (r.0, (r.1 + dot(x, x)).max(0.0))
    }

    fn nearest_group(&self, xs: [&[f32]; GROUP]) -> [(u32, f32); GROUP] {
        #[cfg(target_arch = "x86_64")]
        {
            if use_avx2() {
                // SAFETY: avx2 and fma were detected at runtime.
                return unsafe { self.nearest_group_avx2(xs) };
            }
        }
        self.nearest_group_scalar(xs)
    }

    fn nearest_group_scalar(&self, xs: [&[f32]; GROUP]) -> [(u32, f32); GROUP] {
        let dim = self.dim;
        let mut best = [(u32::MAX, f32::INFINITY); GROUP];
        for (b, block) in self.blocks.chunks_exact(BLOCK * dim).enumerate() {
            let mut acc = [[0.0f32; BLOCK]; GROUP];
            for k in 0..dim {
                let row = &block[k * BLOCK..(k + 1) * BLOCK];
                for p in 0..GROUP {
                    let v = xs[p][k];
                    for l in 0..BLOCK {
                        acc[p][l] += v * row[l];
                    }
                }
            }
            for l in 0..BLOCK {
                let idx = b * BLOCK + l;
                let nrm = self.norms[idx];
                for p in 0..GROUP {
                    let d = nrm - 2.0 * acc[p][l];
                    if d < best[p].1 {
                        best[p] = (idx as u32, d);
                    }
                }
            }
        }
        best.map(fix_unset)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn nearest_group_avx2(&self, xs: [&[f32]; GROUP]) -> [(u32, f32); GROUP] {
        use std::arch::x86_64::*;

        let dim = self.dim;
        let two = _mm256_set1_ps(2.0);
        let step = _mm256_set1_epi32(BLOCK as i32);
        let mut idx = [_mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7), _mm256_setr_epi32(8, 9, 10, 11, 12, 13, 14, 15)];
        let mut best = [[_mm256_set1_ps(f32::INFINITY); 2]; GROUP];
        let mut best_id = [[_mm256_set1_epi32(-1); 2]; GROUP];

        let nblocks = self.norms.len() / BLOCK;
        let bptr = self.blocks.as_ptr();
        let nptr = self.norms.as_ptr();
        for b in 0..nblocks {
            let base = bptr.add(b * BLOCK * dim);
            let mut acc = [[_mm256_setzero_ps(); 2]; GROUP];
            for k in 0..dim {
                let row = base.add(k * BLOCK);
                let c = [_mm256_loadu_ps(row), _mm256_loadu_ps(row.add(8))];
                for p in 0..GROUP {
                    let v = _mm256_set1_ps(*xs[p].get_unchecked(k));
                    acc[p][0] = _mm256_fmadd_ps(v, c[0], acc[p][0]);
                    acc[p][1] = _mm256_fmadd_ps(v, c[1], acc[p][1]);
                }
            }
            let nrm = [_mm256_loadu_ps(nptr.add(b * BLOCK)), _mm256_loadu_ps(nptr.add(b * BLOCK + 8))];
            for p in 0..GROUP {
                for h in 0..2 {
                    let d = _mm256_fnmadd_ps(two, acc[p][h], nrm[h]);
                    let m = _mm256_cmp_ps::<_CMP_LT_OQ>(d, best[p][h]);
                    best[p][h] = _mm256_blendv_ps(best[p][h], d, m);
                    best_id[p][h] = _mm256_castps_si256(_mm256_blendv_ps(
                        _mm256_castsi256_ps(best_id[p][h]),
                        _mm256_castsi256_ps(idx[h]),
                        m,
                    ));
                }
            }
            idx[0] = _mm256_add_epi32(idx[0], step);
            idx[1] = _mm256_add_epi32(idx[1], step);
        }

        let mut out = [(u32::MAX, f32::INFINITY); GROUP];
        for p in 0..GROUP {
            let mut d = [0.0f32; BLOCK];
            let mut ix = [0i32; BLOCK];
            _mm256_storeu_ps(d.as_mut_ptr(), best[p][0]);
            _mm256_storeu_ps(d.as_mut_ptr().add(8), best[p][1]);
            _mm256_storeu_si256(ix.as_mut_ptr() as *mut __m256i, best_id[p][0]);
            _mm256_storeu_si256(ix.as_mut_ptr().add(8) as *mut __m256i, best_id[p][1]);
            for l in 0..BLOCK {
                if ix[l] < 0 {
                    continue;
                }
                let id = ix[l] as u32;
                if d[l] < out[p].1 || (d[l] == out[p].1 && id < out[p].0) {
                    out[p] = (id, d[l]);
                }
            }
            out[p] = fix_unset(out[p]);
        }
        out
    }
}

fn fix_unset(best: (u32, f32)) -> (u32, f32) {
    if best.0 == u32::MAX {
        (0, f32::INFINITY)
    } else {
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn dot_matches_f64_reference() {
        for len in [1, 3, 8, 13, 32, 128] {
            let a = random(len, 1);
            let b = random(len, 2);
            let exact: f64 = a.iter().zip(&b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
            assert!((f64::from(dot(&a, &b)) - exact).abs() < 1e-5, "len {len}");
            let l2: f64 = l2_sq_f64(&a, &b);
            assert!((f64::from(l2_sq(&a, &b)) - l2).abs() < 1e-4);
        }
    }

    #[test]
    fn vector_paths_match_scalar_bitwise() {
        for len in [8, 13, 32, 100] {
            let a = random(len, 3);
            let b = random(len, 4);
            if use_avx2() {
                let (d, l) = unsafe { (dot_avx2(&a, &b), l2_sq_avx2(&a, &b)) };
                assert_eq!(d.to_bits(), dot_scalar(&a, &b).to_bits());
                assert_eq!(l.to_bits(), l2_sq_scalar(&a, &b).to_bits());
            }
            let rows = random(len * 5, 9);
            let mut out = vec![0.0; 5];
            l2_sq_rows(&rows, len, &a, &mut out);
            for (i, o) in out.iter().enumerate() {
                assert_eq!(o.to_bits(), l2_sq(&rows[i * len..(i + 1) * len], &a).to_bits());
            }
        }
    }

    #[test]
    fn normalize_handles_zero() {
        let mut z = vec![0.0f32; 4];
        assert_eq!(normalize(&mut z), 0.0);
        assert_eq!(z, vec![0.0; 4]);
        let mut v = vec![3.0f32, 4.0];
        normalize(&mut v);
        assert!((v[0] - 0.6).abs() < 1e-7 && (v[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn blocked_search_agrees_with_exact_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &(dim, k) in &[(4usize, 1usize), (5, 7), (32, 17), (32, 64), (12, 33)] {
            let cents = random(dim * k, rng.gen());
            let blocks = CentroidBlocks::new(&cents, dim);
            let pts = random(dim * 41, rng.gen());
            let mut ids = vec![0u32; 41];
            let mut ds = vec![0f32; 41];
            blocks.nearest_batch(&pts, &mut ids, &mut ds);
            for (i, p) in pts.chunks_exact(dim).enumerate() {
                let (want, wd) = nearest_exact(p, &cents, dim);
                let got = ids[i] as usize;
                let gd = l2_sq(p, &cents[got * dim..(got + 1) * dim]);
                assert!(got == want || (gd - wd).abs() < 1e-5, "dim {dim} k {k} pt {i}");
                assert!((ds[i] - gd).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let cents = vec![1.0f32, 0.0, 1.0, 0.0, 0.0, 1.0];
        let blocks = CentroidBlocks::new(&cents, 2);
        assert_eq!(blocks.nearest(&[1.0, 0.0]).0, 0);
        let blocks = CentroidBlocks::new(&[0.0, 1.0, 0.0, 1.0], 2);
        assert_eq!(blocks.nearest(&[0.0, 1.0]).0, 0);
    }
}
