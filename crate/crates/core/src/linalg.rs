//! Small dense vector/matrix helpers used across the crate.
//!
//! All problems here are desk-scale (n of a few, constraint counts in the
//! tens), so plain `Vec<f64>` plus Gaussian elimination is the right tool.

/// Dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean distance between two points.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `y += s * x`.
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// `a - b` as a new vector.
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `s * a` as a new vector.
pub fn scale(s: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| s * x).collect()
}

/// Max absolute entry; 0 for the empty vector.
pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solve the k x k system `m y = rhs` in place by Gaussian elimination with
/// partial pivoting. Returns `None` when the matrix is numerically singular
/// (pivot below `tol`). `m` is row-major and is destroyed.
pub fn solve_dense(m: &mut [Vec<f64>], rhs: &mut [f64], tol: f64) -> Option<Vec<f64>> {
    let k = rhs.len();
    debug_assert!(m.len() == k && m.iter().all(|row| row.len() == k));
    for col in 0..k {
        let (pivot_row, pivot_val) = (col..k)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if pivot_val <= tol {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for r in col + 1..k {
            let factor = m[r][col] / m[col][col];
            if factor == 0.0 {
                continue;
            }
            for c in col..k {
                m[r][c] -= factor * m[col][c];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    let mut y = vec![0.0; k];
    for row in (0..k).rev() {
        let mut acc = rhs[row];
        for c in row + 1..k {
            acc -= m[row][c] * y[c];
        }
        y[row] = acc / m[row][row];
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_small_system() {
        let mut m = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let mut rhs = vec![5.0, 10.0];
        let y = solve_dense(&mut m, &mut rhs, 1e-12).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-12);
        assert!((y[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn singular_detected() {
        let mut m = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        let mut rhs = vec![1.0, 2.0];
        assert!(solve_dense(&mut m, &mut rhs, 1e-12).is_none());
    }
}
