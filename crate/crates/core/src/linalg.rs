//! Dense least squares via Householder QR.
//!
//! Columns are scaled to unit Euclidean norm before factorizing, so the rank
//! test compares diagonal entries of `R` on a common scale regardless of the
//! units of each predictor.

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row slices, all of length `cols`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], cols: usize) -> Self {
        let mut m = Self::zeros(rows.len(), cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            assert_eq!(row.len(), cols, "row {i} has wrong length");
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// `self · v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (j, &vj) in v.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.column(j)) {
                *o += x * vj;
            }
        }
        out
    }

    /// `selfᵀ · v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        (0..self.cols).map(|j| dot(self.column(j), v)).collect()
    }

    /// Induced ∞-norm (largest absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[j * self.rows + i]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    // Scale to avoid overflow on large head-counts.
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * a.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

/// Diagonal entries of the scaled `R` below this are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Why a least-squares problem has no unique solution.
#[derive(Debug, Clone, PartialEq)]
pub struct RankDeficiency {
    /// Indices of the columns taking part in the linear dependence.
    pub columns: Vec<usize>,
    /// Ratio of the largest to the smallest diagonal entry of the scaled `R`.
    pub condition: f64,
}

/// Unique minimizer of `‖X·β − y‖₂` for a full-column-rank `X`.
pub fn least_squares(x: &Matrix, y: &[f64]) -> Result<Vec<f64>, RankDeficiency> {
    let (n, p) = (x.rows(), x.cols());
    assert_eq!(y.len(), n);
    assert!(n >= p, "need at least as many rows as columns");

    let mut a = x.clone();
    let mut scale = vec![0.0; p];
    for (j, s) in scale.iter_mut().enumerate() {
        *s = norm2(a.column(j));
        if *s == 0.0 {
            return Err(RankDeficiency {
                columns: vec![j],
                condition: f64::INFINITY,
            });
        }
        a.column_mut(j).iter_mut().for_each(|v| *v /= *s);
    }

    let mut b = y.to_vec();
    for k in 0..p {
        // Reflector H = I − 2vvᵀ/(vᵀv) mapping a[k.., k] onto a multiple of e₁.
        let col = &a.column(k)[k..];
        let alpha = norm2(col);
        if alpha == 0.0 {
            continue;
        }
        let alpha = if col[0] > 0.0 { -alpha } else { alpha };
        let mut v = col.to_vec();
        v[0] -= alpha;
        let vtv = dot(&v, &v);
        if vtv == 0.0 {
            continue;
        }
        for j in k..p {
            let c = &mut a.column_mut(j)[k..];
            let f = 2.0 * dot(&v, c) / vtv;
            c.iter_mut().zip(&v).for_each(|(ci, vi)| *ci -= f * vi);
        }
        let bk = &mut b[k..];
        let f = 2.0 * dot(&v, bk) / vtv;
        bk.iter_mut().zip(&v).for_each(|(bi, vi)| *bi -= f * vi);
    }

    let diag: Vec<f64> = (0..p).map(|k| a[(k, k)].abs()).collect();
    let dmax = diag.iter().copied().fold(0.0, f64::max);
    let dmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if dmin > 0.0 {
        dmax / dmin
    } else {
        f64::INFINITY
    };

    if let Some(k) = diag.iter().position(|d| *d <= RANK_TOLERANCE) {
        // Column k is (numerically) a combination of columns 0..k; solving the
        // leading triangle for that combination shows which ones take part.
        let weights = back_substitute(&a, k, |i| a[(i, k)]);
        let mut columns: Vec<usize> = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| w.abs() > 1e-8)
            .map(|(i, _)| i)
            .collect();
        columns.push(k);
        return Err(RankDeficiency { columns, condition });
    }

    let z = back_substitute(&a, p, |i| b[i]);
    Ok(z.iter().zip(&scale).map(|(zi, s)| zi / s).collect())
}

/// Solves the leading `m × m` upper triangle of `r` against `rhs(i)`.
fn back_substitute(r: &Matrix, m: usize, rhs: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut z = vec![0.0; m];
    for i in (0..m).rev() {
        let mut acc = rhs(i);
        for j in i + 1..m {
            acc -= r[(i, j)] * z[j];
        }
        z[i] = acc / r[(i, i)];
    }
    z
}
