//! Cache-blocked general matrix multiply.
//!
//! `C (+)= op(A) · op(B)` with row-major storage. Operands are packed into
//! `MR`-row and `NR`-column panels per `(MC, KC, NC)` block and a register
//! tile micro-kernel does the arithmetic. Each output element is accumulated
//! with `k` ascending from its starting value, in every blocking and on any
//! number of worker threads, so results match a plain triple loop bit for bit.

use rayon::prelude::*;

use super::Element;

/// Rows of `C` per parallel work item and per packed `A` block.
pub const MC: usize = 64;
/// Depth of a packed block.
pub const KC: usize = 256;
/// Columns of `C` per packed `B` block.
pub const NC: usize = 2048;
/// Register tile height.
pub const MR: usize = 4;
/// Register tile width.
pub const NR: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transpose {
    No,
    Yes,
}

/// `c[m×n] = op(a)[m×k] · op(b)[k×n]`, or `c += ...` when `accumulate`.
///
/// With `Transpose::Yes`, `a` is stored as `k×m` and `b` as `n×k`.
///
/// # Panics
/// If a slice is shorter than its dimensions require.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Element>(
    trans_a: Transpose,
    trans_b: Transpose,
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    assert!(a.len() >= m * k, "gemm: lhs too short");
    assert!(b.len() >= k * n, "gemm: rhs too short");
    assert!(c.len() >= m * n, "gemm: output too short");
    if m == 0 || n == 0 {
        return;
    }
    let c = &mut c[..m * n];
    if k == 0 {
        if !accumulate {
            c.iter_mut().for_each(|x| *x = T::zero());
        }
        return;
    }

    let mut bpack = vec![T::zero(); KC * NC.min(n).div_ceil(NR) * NR];
    for jc in (0..n).step_by(NC) {
        let nc = NC.min(n - jc);
        for pc in (0..k).step_by(KC) {
            let kc = KC.min(k - pc);
            pack_b(trans_b, b, k, n, pc, kc, jc, nc, &mut bpack);
            let overwrite = pc == 0 && !accumulate;
            let bpack = &bpack[..];
            c.par_chunks_mut(MC * n).enumerate().for_each_init(
                || vec![T::zero(); MC * KC],
                |apack, (block, c_rows)| {
                    let ic = block * MC;
                    let mc = c_rows.len() / n;
                    pack_a(trans_a, a, m, k, ic, mc, pc, kc, apack);
                    for jr in (0..nc).step_by(NR) {
                        let nr = NR.min(nc - jr);
                        let bp = &bpack[(jr / NR) * NR * kc..][..NR * kc];
                        for ir in (0..mc).step_by(MR) {
                            let mr = MR.min(mc - ir);
                            let ap = &apack[(ir / MR) * MR * kc..][..MR * kc];
                            let offset = ir * n + jc + jr;
                            micro_kernel(kc, ap, bp, &mut c_rows[offset..], n, mr, nr, overwrite);
                        }
                    }
                },
            );
        }
    }
}

/// Pack rows `ic..ic+mc`, depth `pc..pc+kc` of `op(a)` into `MR`-row panels
/// laid out `[panel][p][r]`, zero-padding the ragged last panel.
#[allow(clippy::too_many_arguments)]
fn pack_a<T: Element>(
    trans: Transpose,
    a: &[T],
    m: usize,
    k: usize,
    ic: usize,
    mc: usize,
    pc: usize,
    kc: usize,
    out: &mut [T],
) {
    for (panel, ir) in (0..mc).step_by(MR).enumerate() {
        let dst = &mut out[panel * MR * kc..][..MR * kc];
        let rows = MR.min(mc - ir);
        for p in 0..kc {
            for r in 0..MR {
                dst[p * MR + r] = if r < rows {
                    let (i, kk) = (ic + ir + r, pc + p);
                    match trans {
                        Transpose::No => a[i * k + kk],
                        Transpose::Yes => a[kk * m + i],
                    }
                } else {
                    T::zero()
                };
            }
        }
    }
}

/// Pack depth `pc..pc+kc`, columns `jc..jc+nc` of `op(b)` into `NR`-column
/// panels laid out `[panel][p][c]`.
#[allow(clippy::too_many_arguments)]
fn pack_b<T: Element>(
    trans: Transpose,
    b: &[T],
    k: usize,
    n: usize,
    pc: usize,
    kc: usize,
    jc: usize,
    nc: usize,
    out: &mut [T],
) {
    for (panel, jr) in (0..nc).step_by(NR).enumerate() {
        let dst = &mut out[panel * NR * kc..][..NR * kc];
        let cols = NR.min(nc - jr);
        for p in 0..kc {
            let kk = pc + p;
            let row = &mut dst[p * NR..][..NR];
            match trans {
                Transpose::No => {
                    let src = &b[kk * n + jc + jr..][..cols];
                    row[..cols].copy_from_slice(src);
                }
                Transpose::Yes => {
                    for (cidx, slot) in row[..cols].iter_mut().enumerate() {
                        *slot = b[(jc + jr + cidx) * k + kk];
                    }
                }
            }
            row[cols..].iter_mut().for_each(|x| *x = T::zero());
        }
    }
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn micro_kernel<T: Element>(
    kc: usize,
    ap: &[T],
    bp: &[T],
    c: &mut [T],
    ldc: usize,
    mr: usize,
    nr: usize,
    overwrite: bool,
) {
    if mr == MR && nr == NR {
        let mut acc = [[T::zero(); NR]; MR];
        if !overwrite {
            for (r, row) in acc.iter_mut().enumerate() {
                *row = c[r * ldc..][..NR].try_into().expect("NR row");
            }
        }
        tile_dispatch(kc, ap, bp, &mut acc);
        for (r, row) in acc.iter().enumerate() {
            c[r * ldc..][..NR].copy_from_slice(row);
        }
    } else {
        let mut acc = [[T::zero(); NR]; MR];
        if !overwrite {
            for (r, row) in acc.iter_mut().enumerate().take(mr) {
                row[..nr].copy_from_slice(&c[r * ldc..][..nr]);
            }
        }
        tile_dispatch(kc, ap, bp, &mut acc);
        for (r, row) in acc.iter().enumerate().take(mr) {
            c[r * ldc..][..nr].copy_from_slice(&row[..nr]);
        }
    }
}

/// Uses AVX2 registers when the CPU has them. No fused multiply-add, so
/// rounding is identical on either path.
#[inline(always)]
fn tile_dispatch<T: Element>(kc: usize, ap: &[T], bp: &[T], out: &mut [[T; NR]; MR]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        unsafe { tile_avx2(kc, ap, bp, out) };
        return;
    }
    tile(kc, ap, bp, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn tile_avx2<T: Element>(kc: usize, ap: &[T], bp: &[T], out: &mut [[T; NR]; MR]) {
    tile(kc, ap, bp, out)
}

#[inline(always)]
fn tile<T: Element>(kc: usize, ap: &[T], bp: &[T], out: &mut [[T; NR]; MR]) {
    let mut acc = *out;
    let (ap, bp) = (&ap[..MR * kc], &bp[..NR * kc]);
    for p in 0..kc {
        let a: &[T; MR] = ap[p * MR..][..MR].try_into().expect("MR panel");
        let b: &[T; NR] = bp[p * NR..][..NR].try_into().expect("NR panel");
        for r in 0..MR {
            for j in 0..NR {
                acc[r][j] += a[r] * b[j];
            }
        }
    }
    *out = acc;
}
