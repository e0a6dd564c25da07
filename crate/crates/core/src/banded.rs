//! Square banded matrices, banded LU with partial pivoting, and a symmetric
//! tridiagonal eigensolver (Sturm bisection + inverse iteration).

use crate::error::{invalid, Result};

/// Square `n × n` matrix with `kl` sub- and `ku` super-diagonals, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0, 0);
        m.data.fill(1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> usize {
        self.kl
    }

    pub fn upper(&self) -> usize {
        self.ku
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < self.n && j < self.n && self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Panics if `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(i < self.n && j < self.n && self.in_band(i, j), "({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// Column range of row `i` inside the band.
    fn row_cols(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        i.saturating_sub(self.kl)..=(i + self.ku).min(self.n - 1)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in self.row_cols(i) {
                acc += self.data[self.idx(i, j)] * x[j];
            }
            *yi = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// Banded product `self · other`.
    pub fn mul(&self, other: &BandMatrix) -> BandMatrix {
        assert_eq!(self.n, other.n);
        let mut out = BandMatrix::zeros(self.n, self.kl + other.kl, self.ku + other.ku);
        for i in 0..self.n {
            for k in self.row_cols(i) {
                let a = self.data[self.idx(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in other.row_cols(k) {
                    let idx = out.idx(i, j);
                    out.data[idx] += a * other.data[other.idx(k, j)];
                }
            }
        }
        out
    }

    /// `a·self + b·other`, widened to the larger band.
    pub fn combine(&self, a: f64, other: &BandMatrix, b: f64) -> BandMatrix {
        assert_eq!(self.n, other.n);
        let mut out = BandMatrix::zeros(self.n, self.kl.max(other.kl), self.ku.max(other.ku));
        for i in 0..self.n {
            for j in self.row_cols(i) {
                let idx = out.idx(i, j);
                out.data[idx] += a * self.data[self.idx(i, j)];
            }
            for j in other.row_cols(i) {
                let idx = out.idx(i, j);
                out.data[idx] += b * other.data[other.idx(i, j)];
            }
        }
        out
    }

    pub fn add_diagonal(&mut self, d: &[f64]) {
        assert_eq!(d.len(), self.n);
        for (i, di) in d.iter().enumerate() {
            let k = self.idx(i, i);
            self.data[k] += di;
        }
    }

    pub fn shift(&mut self, s: f64) {
        for i in 0..self.n {
            let k = self.idx(i, i);
            self.data[k] += s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Nonzero entries as `(row, col, value)`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in self.row_cols(i) {
                let v = self.data[self.idx(i, j)];
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    pub fn lu(&self) -> std::result::Result<BandLu, SingularPivot> {
        BandLu::factor(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularPivot {
    pub index: usize,
}

impl std::fmt::Display for SingularPivot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "zero pivot at row {}", self.index)
    }
}

impl std::error::Error for SingularPivot {}

/// Banded LU factorization with row interchanges (upper band widens to `kl + ku`).
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    width: usize,
    /// Row `r` holds columns `r − kl ..= r + kl + ku`.
    rows: Vec<f64>,
    multipliers: Vec<f64>,
    pivots: Vec<usize>,
    min_pivot: f64,
    max_entry: f64,
}

impl BandLu {
    fn factor(a: &BandMatrix) -> std::result::Result<Self, SingularPivot> {
        let n = a.n;
        let kl = a.kl;
        let span = kl + a.ku;
        let width = kl + span + 1;
        let at = |r: usize, c: usize| r * width + (c + kl - r);
        let mut rows = vec![0.0; n * width];
        for i in 0..n {
            for j in a.row_cols(i) {
                rows[at(i, j)] = a.data[a.idx(i, j)];
            }
        }
        let mut multipliers = vec![0.0; n * kl.max(1)];
        let mut pivots = vec![0; n];
        let mut min_pivot = f64::INFINITY;
        let max_entry = a.max_abs();

        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + span).min(n - 1);
            let mut p = k;
            let mut best = rows[at(k, k)].abs();
            for r in k + 1..=last_row {
                let v = rows[at(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            pivots[k] = p;
            if best == 0.0 {
                return Err(SingularPivot { index: k });
            }
            min_pivot = min_pivot.min(best);
            if p != k {
                for c in k..=last_col {
                    rows.swap(at(k, c), at(p, c));
                }
            }
            let pivot = rows[at(k, k)];
            for r in k + 1..=last_row {
                let l = rows[at(r, k)] / pivot;
                multipliers[k * kl + (r - k - 1)] = l;
                rows[at(r, k)] = 0.0;
                if l != 0.0 {
                    for c in k + 1..=last_col {
                        rows[at(r, c)] -= l * rows[at(k, c)];
                    }
                }
            }
        }
        Ok(Self {
            n,
            kl,
            width,
            rows,
            multipliers,
            pivots,
            min_pivot,
            max_entry,
        })
    }

    /// `min |pivot| / max |a_ij|`; tiny values flag near-singularity.
    pub fn pivot_ratio(&self) -> f64 {
        self.min_pivot / self.max_entry
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let kl = self.kl;
        let span = self.width - kl - 1;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for r in k + 1..=(k + kl).min(n - 1) {
                b[r] -= self.multipliers[k * kl + (r - k - 1)] * bk;
            }
        }
        for i in (0..n).rev() {
            let base = i * self.width + kl - i;
            let mut acc = b[i];
            for c in i + 1..=(i + span).min(n - 1) {
                acc -= self.rows[base + c] * b[c];
            }
            b[i] = acc / self.rows[base + i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Number of eigenvalues of the symmetric tridiagonal `(diag, off)` below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut d = diag[0] - x;
    if d < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        if d.abs() < tiny {
            d = -tiny;
        }
        d = diag[i] - x - off[i - 1] * off[i - 1] / d;
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest `count` eigenpairs of the symmetric tridiagonal matrix with
/// diagonal `diag` and off-diagonal `off`. Eigenvectors are Euclidean-orthonormal.
pub fn sym_tridiagonal_lowest(
    diag: &[f64],
    off: &[f64],
    count: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = diag.len();
    if off.len() + 1 != n {
        return Err(invalid("off-diagonal length must be n - 1"));
    }
    if count == 0 || count > n {
        return Err(invalid(format!("requested {count} eigenpairs of a {n}×{n} matrix")));
    }
    // Gershgorin interval
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let norm = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let pad = 1e-12 * norm;
    lo -= pad;
    hi += pad;

    let mut values = Vec::with_capacity(count);
    for k in 0..count {
        // k-th smallest: smallest x with sturm_count(x) > k
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if sturm_count(diag, off, mid) > k {
                b = mid;
            } else {
                a = mid;
            }
        }
        values.push(0.5 * (a + b));
    }

    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(count);
    let cluster = 1e-3 * norm;
    for (k, &lambda) in values.iter().enumerate() {
        let mut t = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            t.set(i, i, diag[i] - lambda);
            if i + 1 < n {
                t.set(i, i + 1, off[i]);
                t.set(i + 1, i, off[i]);
            }
        }
        let lu = match t.lu() {
            Ok(lu) => lu,
            Err(_) => {
                t.shift(-f64::EPSILON * norm);
                t.lu().map_err(|e| invalid(format!("inverse iteration failed: {e}")))?
            }
        };
        // deterministic, non-degenerate start
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * (k as f64 + 1.618)).sin())
            .collect();
        for _ in 0..4 {
            lu.solve_in_place(&mut v);
            for (j, u) in vectors.iter().enumerate() {
                if (values[j] - lambda).abs() < cluster {
                    let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
                }
            }
            let nrm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= nrm);
        }
        vectors.push(v);
    }
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_mul(a: &BandMatrix, x: &[f64]) -> Vec<f64> {
        (0..a.dim())
            .map(|i| (0..a.dim()).map(|j| a.get(i, j) * x[j]).sum())
            .collect()
    }

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> BandMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                m.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        m
    }

    #[test]
    fn product_matches_dense() {
        let a = random_band(12, 1, 2, 1);
        let b = random_band(12, 2, 1, 2);
        let c = a.mul(&b);
        assert_eq!((c.lower(), c.upper()), (3, 3));
        for i in 0..12 {
            for j in 0..12 {
                let want: f64 = (0..12).map(|k| a.get(i, k) * b.get(k, j)).sum();
                assert!((c.get(i, j) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let mut m = BandMatrix::zeros(3, 1, 1);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        // column 2 is empty
        assert_eq!(m.lu().unwrap_err(), SingularPivot { index: 2 });
    }

    proptest! {
        #[test]
        fn lu_solves_random_band_systems(seed in 0u64..500, n in 3usize..40, kl in 0usize..3, ku in 0usize..3) {
            let mut a = random_band(n, kl, ku, seed);
            a.shift((kl + ku + 1) as f64);
            let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
            let b = dense_mul(&a, &x);
            let lu = a.lu().unwrap();
            let got = lu.solve(&b);
            let err = got.iter().zip(&x).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-10, "err = {}", err);
        }
    }

    #[test]
    fn tridiagonal_eigen_of_discrete_laplacian() {
        // Dirichlet second difference: eigenvalues 2 − 2cos(kπ/(n+1))
        let n = 50;
        let diag = vec![2.0; n];
        let off = vec![-1.0; n - 1];
        let (vals, vecs) = sym_tridiagonal_lowest(&diag, &off, 5).unwrap();
        for (k, v) in vals.iter().enumerate() {
            let want = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((v - want).abs() < 1e-12, "{v} vs {want}");
        }
        for i in 0..5 {
            for j in 0..5 {
                let d: f64 = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
        assert!(sym_tridiagonal_lowest(&diag, &off, 0).is_err());
        assert!(sym_tridiagonal_lowest(&diag, &off, n + 1).is_err());
    }
}
