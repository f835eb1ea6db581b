//! Dense ridge regression with an unpenalised intercept.

/// Solves `(XᵀX + λI) w = Xᵀy` on centred data and returns `(w, bias)`.
/// `None` when the normal matrix is not positive definite.
pub(crate) fn ridge_fit(rows: &[&[f64]], targets: &[f64], lambda: f64) -> Option<(Vec<f64>, f64)> {
    let n = rows.len();
    let dim = rows[0].len();
    let inv_n = 1.0 / n as f64;

    let mut mean = vec![0.0; dim];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m *= inv_n);
    let target_mean = targets.iter().sum::<f64>() * inv_n;

    // normal matrix (lower triangle) and right-hand side
    let mut gram = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    let mut centred = vec![0.0; dim];
    for (row, &t) in rows.iter().zip(targets) {
        for ((c, v), m) in centred.iter_mut().zip(row.iter()).zip(&mean) {
            *c = v - m;
        }
        let yc = t - target_mean;
        for i in 0..dim {
            let ci = centred[i];
            if ci == 0.0 {
                continue;
            }
            rhs[i] += ci * yc;
            let g = &mut gram[i * dim..i * dim + i + 1];
            for (gij, cj) in g.iter_mut().zip(&centred[..=i]) {
                *gij += ci * cj;
            }
        }
    }
    for i in 0..dim {
        gram[i * dim + i] += lambda;
    }

    let scale = (0..dim).map(|i| gram[i * dim + i]).fold(0.0, f64::max);
    let chol = cholesky(&mut gram, dim, scale)?;
    let weights = cholesky_solve(chol, dim, rhs);
    let bias = target_mean - weights.iter().zip(&mean).map(|(w, m)| w * m).sum::<f64>();
    Some((weights, bias))
}

/// In-place lower Cholesky factor. Pivots below a relative tolerance are
/// treated as singular.
fn cholesky(a: &mut [f64], dim: usize, scale: f64) -> Option<&[f64]> {
    let tol = scale.max(f64::MIN_POSITIVE) * 1e-12;
    for j in 0..dim {
        let mut d = a[j * dim + j];
        for k in 0..j {
            d -= a[j * dim + k] * a[j * dim + k];
        }
        if !(d > tol) {
            return None;
        }
        let d = d.sqrt();
        a[j * dim + j] = d;
        for i in j + 1..dim {
            let mut s = a[i * dim + j];
            for k in 0..j {
                s -= a[i * dim + k] * a[j * dim + k];
            }
            a[i * dim + j] = s / d;
        }
    }
    Some(a)
}

fn cholesky_solve(l: &[f64], dim: usize, mut b: Vec<f64>) -> Vec<f64> {
    for i in 0..dim {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * dim + k] * b[k];
        }
        b[i] = s / l[i * dim + i];
    }
    for i in (0..dim).rev() {
        let mut s = b[i];
        for k in i + 1..dim {
            s -= l[k * dim + i] * b[k];
        }
        b[i] = s / l[i * dim + i];
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_linear_map() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let x = i as f64;
                vec![x.sin(), (0.3 * x).cos(), x * 0.1]
            })
            .collect();
        let targets: Vec<f64> = rows
            .iter()
            .map(|r| 2.0 * r[0] - 0.5 * r[1] + 3.0 * r[2] + 7.0)
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let (w, b) = ridge_fit(&refs, &targets, 0.0).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-9);
        assert!((w[1] + 0.5).abs() < 1e-9);
        assert!((w[2] - 3.0).abs() < 1e-9);
        assert!((b - 7.0).abs() < 1e-9);
    }

    #[test]
    fn duplicate_column_is_singular_without_ridge() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(ridge_fit(&refs, &t, 0.0).is_none());
        let (w, _) = ridge_fit(&refs, &t, 1e-3).unwrap();
        assert!((w[0] - w[1]).abs() < 1e-12);
    }
}
