//! Eigensolver for symmetric tridiagonal matrices: Sturm-sequence bisection
//! for selected eigenvalues and inverse iteration for their eigenvectors.

/// Number of eigenvalues strictly less than `x`, from the signs of the LDLT
/// pivots (Sturm sequence).
pub fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let n = diag.len();
    debug_assert_eq!(off.len(), n.saturating_sub(1));
    if n == 0 {
        return 0;
    }
    // Pivots near zero are nudged to keep the recurrence finite; the count is
    // unaffected for x away from an exact eigenvalue.
    let scale = matrix_scale(diag, off);
    let pivmin = f64::EPSILON * f64::EPSILON * scale.max(f64::MIN_POSITIVE);

    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..n {
        if q.abs() < pivmin {
            q = if q < 0.0 { -pivmin } else { pivmin };
        }
        q = (diag[i] - x) - off[i - 1] * off[i - 1] / q;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn matrix_scale(diag: &[f64], off: &[f64]) -> f64 {
    diag.iter()
        .chain(off.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn gershgorin_bounds(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let right = if i < n - 1 { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - left - right);
        hi = hi.max(diag[i] + left + right);
    }
    let pad = 1.0 + f64::EPSILON * hi.abs().max(lo.abs()).max(1.0);
    (lo - pad, hi + pad)
}

/// The `count` largest eigenvalues, in decreasing order, via bisection.
pub fn largest_eigenvalues(diag: &[f64], off: &[f64], count: usize) -> Vec<f64> {
    let n = diag.len();
    assert!(count <= n, "requested {count} eigenvalues of a {n}x{n} matrix");
    let (glo, ghi) = gershgorin_bounds(diag, off);

    let mut out = Vec::with_capacity(count);
    for idx in (n - count..n).rev() {
        let (mut lo, mut hi) = (glo, ghi);
        for _ in 0..120 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 2.0 * f64::EPSILON * mid.abs().max(1.0) {
                break;
            }
            if sturm_count(diag, off, mid) <= idx {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    out
}

// LU factorization of (T - lambda I) with partial pivoting. Row swaps fill in
// a second superdiagonal.
struct ShiftedLu {
    dia: Vec<f64>,
    sup1: Vec<f64>,
    sup2: Vec<f64>,
    mult: Vec<f64>,
    swapped: Vec<bool>,
}

impl ShiftedLu {
    fn factor(diag: &[f64], off: &[f64], lambda: f64) -> ShiftedLu {
        let n = diag.len();
        let mut dia: Vec<f64> = diag.iter().map(|d| d - lambda).collect();
        let mut sup1 = vec![0.0; n];
        let mut sup2 = vec![0.0; n];
        let sub: Vec<f64> = off.to_vec();
        sup1[..n - 1].copy_from_slice(off);
        let mut mult = vec![0.0; n];
        let mut swapped = vec![false; n];

        let tiny = f64::EPSILON * matrix_scale(diag, off).max(f64::MIN_POSITIVE);
        for i in 0..n - 1 {
            if dia[i].abs() >= sub[i].abs() {
                let pivot = if dia[i] == 0.0 { tiny } else { dia[i] };
                dia[i] = pivot;
                let m = sub[i] / pivot;
                mult[i] = m;
                dia[i + 1] -= m * sup1[i];
                // sup2[i] stays zero.
            } else {
                // Swap rows i and i+1.
                swapped[i] = true;
                let m = dia[i] / sub[i];
                mult[i] = m;
                let old_sup1_next = if i + 1 < n - 1 { sup1[i + 1] } else { 0.0 };
                dia[i] = sub[i];
                let new_dia_next = sup1[i] - m * dia[i + 1];
                sup1[i] = dia[i + 1];
                sup2[i] = old_sup1_next;
                dia[i + 1] = new_dia_next;
                if i + 1 < n - 1 {
                    sup1[i + 1] = -m * old_sup1_next;
                }
            }
        }
        if dia[n - 1] == 0.0 {
            dia[n - 1] = tiny;
        }
        ShiftedLu {
            dia,
            sup1,
            sup2,
            mult,
            swapped,
        }
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.mult[i] * b[i];
        }
        b[n - 1] /= self.dia[n - 1];
        if n >= 2 {
            b[n - 2] = (b[n - 2] - self.sup1[n - 2] * b[n - 1]) / self.dia[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.sup1[i] * b[i + 1] - self.sup2[i] * b[i + 2]) / self.dia[i];
        }
    }
}

/// Eigenvector for an accurately known eigenvalue, by inverse iteration.
///
/// `orthogonal_to` holds previously computed eigenvectors; the iterate is
/// re-orthogonalized against them so that near-degenerate eigenvalues still
/// yield an orthonormal set. The returned vector has unit norm; its sign is
/// unspecified.
pub fn eigenvector(
    diag: &[f64],
    off: &[f64],
    eigenvalue: f64,
    orthogonal_to: &[Vec<f64>],
) -> Vec<f64> {
    let n = diag.len();
    let lu = ShiftedLu::factor(diag, off, eigenvalue);

    // Deterministic quasi-random start vector, so results are reproducible
    // and not accidentally orthogonal to the target eigenvector.
    let mut v: Vec<f64> = (0..n)
        .map(|k| {
            let t = (k as f64 * 0.754_877_666_246_692_8).fract();
            2.0 * t - 1.0 + 1e-3
        })
        .collect();
    orthogonalize(&mut v, orthogonal_to);
    normalize(&mut v);

    let mut prev = v.clone();
    for _ in 0..12 {
        lu.solve_in_place(&mut v);
        orthogonalize(&mut v, orthogonal_to);
        normalize(&mut v);
        let overlap: f64 = v.iter().zip(&prev).map(|(a, b)| a * b).sum();
        if 1.0 - overlap.abs() < 1e-14 {
            break;
        }
        prev.copy_from_slice(&v);
    }
    v
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        for (x, y) in v.iter_mut().zip(b) {
            *x -= dot * y;
        }
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm > 0.0, "inverse iteration produced a zero vector");
    for x in v.iter_mut() {
        *x /= norm;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(diag: &[f64], off: &[f64]) -> DMatrix<f64> {
        let n = diag.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag[i]
            } else if i.abs_diff(j) == 1 {
                off[i.min(j)]
            } else {
                0.0
            }
        })
    }

    #[test]
    fn chain_eigenvalues_are_analytic() {
        // d = 0, e = 1: eigenvalues 2 cos(k pi / (n+1)), k = 1..n.
        let n = 60;
        let diag = vec![0.0; n];
        let off = vec![1.0; n - 1];
        let got = largest_eigenvalues(&diag, &off, n);
        for (i, &ev) in got.iter().enumerate() {
            let k = (i + 1) as f64;
            let exact = 2.0 * (k * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((ev - exact).abs() < 1e-12, "i={i}: {ev} vs {exact}");
        }
    }

    #[test]
    fn matches_dense_eigendecomposition() {
        let n = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let diag: Vec<f64> = (0..n).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
        let off: Vec<f64> = (0..n - 1).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();

        let eig = nalgebra::SymmetricEigen::new(dense(&diag, &off));
        let mut dense_evals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        dense_evals.sort_by(|a, b| b.total_cmp(a));

        let count = 6;
        let got = largest_eigenvalues(&diag, &off, count);
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for (i, &ev) in got.iter().enumerate() {
            assert!(
                (ev - dense_evals[i]).abs() < 1e-11,
                "eigenvalue {i}: {ev} vs {}",
                dense_evals[i]
            );

            let v = eigenvector(&diag, &off, ev, &basis);
            // Residual check: ||T v - ev v|| should be tiny.
            let tv = dense(&diag, &off) * DMatrix::from_column_slice(n, 1, &v);
            let resid: f64 = (0..n)
                .map(|r| (tv[(r, 0)] - ev * v[r]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(resid < 1e-10, "eigenvector {i}: residual {resid}");
            basis.push(v);
        }

        // Pairwise orthonormality of the computed vectors.
        for i in 0..basis.len() {
            for j in 0..=i {
                let dot: f64 = basis[i].iter().zip(&basis[j]).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-11, "gram[{i}][{j}] = {dot}");
            }
        }
    }

    #[test]
    fn sturm_count_brackets_spectrum() {
        let diag = [1.0, 3.0];
        let off = [-1.0];
        // Eigenvalues of [[1,-1],[-1,3]] are 2 -+ sqrt(2).
        assert_eq!(sturm_count(&diag, &off, 0.0), 0);
        assert_eq!(sturm_count(&diag, &off, 1.0), 1);
        assert_eq!(sturm_count(&diag, &off, 4.0), 2);
    }
}
