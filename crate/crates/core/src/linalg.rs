//! Small dense linear algebra on `f64`.

use crate::Error;

/// Solves the square system stored as an augmented matrix `[A | b]`.
pub fn solve_augmented(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>, Error> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .ok_or_else(|| Error::Numeric("empty system".into()))?;
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::Numeric("singular matrix".into()));
        }
        a.swap(col, piv);
        let p = a[col][col];
        for row in (col + 1)..n {
            let f = a[row][col] / p;
            if f == 0.0 {
                continue;
            }
            for k in col..=n {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = a[row][n];
        for k in (row + 1)..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Ok(x)
}

/// Inverse by Gauss–Jordan with partial pivoting; also returns the ratio of
/// the smallest to the largest pivot as a crude conditioning indicator.
pub fn invert(m: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, f64), Error> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(1e-300);
    let mut min_piv = f64::INFINITY;
    let mut max_piv = 0.0f64;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty");
        let pv = a[piv][col].abs();
        if pv <= 1e-13 * scale {
            return Err(Error::Numeric(format!(
                "singular matrix (pivot {pv:e} at column {col})"
            )));
        }
        min_piv = min_piv.min(pv);
        max_piv = max_piv.max(pv);
        a.swap(col, piv);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = a[row][col];
            if f == 0.0 {
                continue;
            }
            for k in 0..2 * n {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let inv = a.into_iter().map(|r| r[n..].to_vec()).collect();
    let cond = if n == 0 { 1.0 } else { min_piv / max_piv };
    Ok((inv, cond))
}

pub fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}
