//! Small dense linear-algebra helpers for the tiny systems used here.

/// Pivot tolerance for eliminations.
pub(crate) const PIVOT_TOL: f64 = 1e-10;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Basis of `{v : M v = 0}` for `M` given by rows of length `ncols`.
pub(crate) fn nullspace(rows: &[Vec<f64>], ncols: usize) -> Vec<Vec<f64>> {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == m.len() {
            break;
        }
        let (best, val) = (r..m.len())
            .map(|i| (i, m[i][c].abs()))
            .fold((r, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= PIVOT_TOL {
            continue;
        }
        m.swap(r, best);
        let p = m[r][c];
        for v in m[r].iter_mut() {
            *v /= p;
        }
        for i in 0..m.len() {
            if i != r {
                let factor = m[i][c];
                if factor != 0.0 {
                    for j in 0..ncols {
                        m[i][j] -= factor * m[r][j];
                    }
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&fc| {
            let mut v = vec![0.0; ncols];
            v[fc] = 1.0;
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -m[row][fc];
            }
            v
        })
        .collect()
}

/// Incrementally maintained orthonormal basis (modified Gram-Schmidt with one
/// reorthogonalization pass).
#[derive(Debug, Clone, Default)]
pub(crate) struct OrthoBasis {
    vectors: Vec<Vec<f64>>,
}

impl OrthoBasis {
    #[cfg(test)]
    pub(crate) fn rank(&self) -> usize {
        self.vectors.len()
    }

    fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut w = v.to_vec();
        for _ in 0..2 {
            for q in &self.vectors {
                let d = dot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= d * qi;
                }
            }
        }
        w
    }

    /// Adds `v` if it is independent of the current span (relative tolerance
    /// `tol`); returns whether it was added.
    pub(crate) fn try_push(&mut self, v: &[f64], tol: f64) -> bool {
        let scale = norm(v);
        if scale == 0.0 {
            return false;
        }
        let w = self.residual(v);
        let n = norm(&w);
        if n <= tol * scale {
            return false;
        }
        self.vectors.push(w.into_iter().map(|x| x / n).collect());
        true
    }
}

/// Solves `Σ_k c_k columns[k] = target` for linearly independent columns.
/// Returns the coefficients and the residual norm.
pub(crate) fn solve_in_span(columns: &[Vec<f64>], target: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = columns.len();
    // Thin QR via modified Gram-Schmidt (twice) so that R is upper triangular.
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut r = vec![vec![0.0; n]; n];
    for (k, col) in columns.iter().enumerate() {
        let mut w = col.clone();
        for _ in 0..2 {
            for (j, qj) in q.iter().enumerate() {
                let d = dot(qj, &w);
                r[j][k] += d;
                for (wi, qi) in w.iter_mut().zip(qj) {
                    *wi -= d * qi;
                }
            }
        }
        let nw = norm(&w);
        if nw <= PIVOT_TOL * norm(col).max(1.0) {
            return None;
        }
        r[k][k] = nw;
        q.push(w.into_iter().map(|x| x / nw).collect());
    }
    let qt_b: Vec<f64> = q.iter().map(|qj| dot(qj, target)).collect();
    let mut c = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| r[k][j] * c[j]).sum();
        c[k] = (qt_b[k] - s) / r[k][k];
    }
    let mut resid = target.to_vec();
    for (col, ck) in columns.iter().zip(&c) {
        for (ri, ai) in resid.iter_mut().zip(col) {
            *ri -= ck * ai;
        }
    }
    Some((c, norm(&resid)))
}

/// Gaussian elimination with partial pivoting for a square system.
pub fn solve_square(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[piv][c].abs() <= PIVOT_TOL {
            return None;
        }
        m.swap(c, piv);
        for i in c + 1..n {
            let f = m[i][c] / m[c][c];
            if f != 0.0 {
                for j in c..=n {
                    m[i][j] -= f * m[c][j];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    Some(x)
}
