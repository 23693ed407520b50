use rand::Rng;
use rand_distr::StandardNormal;

/// Orthogonal initialization of a `rows × cols` row-major matrix.
///
/// A Gaussian matrix is orthonormalized with two passes of modified
/// Gram-Schmidt. When `rows <= cols` the rows of the result are orthonormal,
/// otherwise the columns are. The result is scaled by `gain`.
pub fn orthogonal_init<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    assert!(rows >= 1 && cols >= 1, "orthogonal_init needs a non-empty shape");
    // Orthonormalize `k` vectors of length `n`, then lay them out as rows or columns.
    let (k, n) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();

    for j in 0..k {
        let (done, rest) = basis.split_at_mut(j);
        let v = &mut rest[0];
        for _pass in 0..2 {
            for q in done.iter() {
                let proj = dot(q, v);
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= proj * qi);
            }
        }
        let norm = dot(v, v).sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|vi| *vi /= norm);
        } else {
            // Degenerate draw: fall back to a unit vector orthogonal to `done`.
            *v = fallback_unit(done, n);
        }
    }

    let mut out = vec![0.0; rows * cols];
    if rows <= cols {
        for (r, q) in basis.iter().enumerate() {
            for (c, &x) in q.iter().enumerate() {
                out[r * cols + c] = gain * x;
            }
        }
    } else {
        for (c, q) in basis.iter().enumerate() {
            for (r, &x) in q.iter().enumerate() {
                out[r * cols + c] = gain * x;
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fallback_unit(done: &[Vec<f64>], n: usize) -> Vec<f64> {
    for axis in 0..n {
        let mut v = vec![0.0; n];
        v[axis] = 1.0;
        for q in done {
            let proj = dot(q, &v);
            v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= proj * qi);
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|vi| *vi /= norm);
            return v;
        }
    }
    unreachable!("fewer than n orthonormal vectors always leave a free axis")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Gram matrix of the rows (`by_rows`) or columns of a row-major matrix.
    fn gram(w: &[f64], rows: usize, cols: usize, by_rows: bool) -> Vec<Vec<f64>> {
        let (k, n) = if by_rows { (rows, cols) } else { (cols, rows) };
        let at = |i: usize, j: usize| if by_rows { w[i * cols + j] } else { w[j * cols + i] };
        (0..k)
            .map(|i| (0..k).map(|j| (0..n).map(|l| at(i, l) * at(j, l)).sum()).collect())
            .collect()
    }

    fn assert_scaled_identity(g: &[Vec<f64>], scale: f64, tol: f64) {
        for (i, row) in g.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                let want = if i == j { scale } else { 0.0 };
                assert!((x - want).abs() < tol, "gram[{i}][{j}] = {x}, want {want}");
            }
        }
    }

    #[test]
    fn square_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = orthogonal_init(4, 4, 1.0, &mut rng);
        assert_scaled_identity(&gram(&w, 4, 4, true), 1.0, 1e-10);
    }

    #[test]
    fn gain_scales_gram_by_gain_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = orthogonal_init(2, 2, 2.0, &mut rng);
        assert_scaled_identity(&gram(&w, 2, 2, true), 4.0, 1e-10);
    }

    #[test]
    fn tall_matrix_has_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = orthogonal_init(64, 8, 1.0, &mut rng);
        assert_scaled_identity(&gram(&w, 64, 8, false), 1.0, 1e-8);
    }

    #[test]
    fn wide_and_tall_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(r, c) in &[(1, 1), (1, 7), (7, 1), (3, 64), (64, 64), (64, 3), (16, 5)] {
            let w = orthogonal_init(r, c, 1.0, &mut rng);
            assert_scaled_identity(&gram(&w, r, c, r <= c), 1.0, 1e-10);
        }
    }

    #[test]
    fn same_seed_same_matrix() {
        let a = orthogonal_init(5, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        let b = orthogonal_init(5, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }
}
