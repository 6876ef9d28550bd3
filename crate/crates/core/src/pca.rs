//! Principal component analysis via covariance eigendecomposition.
//!
//! The symmetric eigenproblem is solved with cyclic Jacobi rotations,
//! which keeps the basis exactly orthonormal by construction.

use crate::mat::Mat;
use crate::{Error, Result};

/// Mean vector and top-k orthonormal component rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// k x d, rows are components in descending eigenvalue order.
    pub components: Mat,
    /// Eigenvalues matching the retained components.
    pub eigenvalues: Vec<f64>,
}

impl PcaBasis {
    pub fn retained(&self) -> usize {
        self.components.rows
    }

    pub fn input_dim(&self) -> usize {
        self.components.cols
    }
}

/// Fit a PCA basis on row-major samples, retaining `k` components.
///
/// Components are eigenvectors of the sample covariance in descending
/// eigenvalue order; each one's sign is fixed so its largest-magnitude
/// entry is positive.
pub fn pca_fit(data: &[Vec<f64>], k: usize) -> Result<PcaBasis> {
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyInput("pca data"));
    }
    let d = data[0].len();
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!(
            "retained components {k} out of range for dimension {d}"
        )));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!(
            "need at least {k} samples, got {n}"
        )));
    }
    for row in data {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
    }

    let mut mean = vec![0.0; d];
    for row in data {
        crate::mat::add_scaled(&mut mean, row, 1.0);
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Covariance, upper triangle mirrored.
    let mut cov = Mat::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in data {
        for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(&mean)) {
            *c = v - m;
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            let dst = &mut cov.data[i * d..(i + 1) * d];
            for (j, &cj) in centered.iter().enumerate().skip(i) {
                dst[j] += ci * cj;
            }
        }
    }
    let scale = 1.0 / n as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov.get(i, j) * scale;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }

    let (eigenvalues, vectors) = jacobi_eigen(&mut cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigenvalues[b].partial_cmp(&eigenvalues[a]).unwrap());

    let mut components = Mat::zeros(k, d);
    let mut retained_values = Vec::with_capacity(k);
    for (row, &src) in order.iter().take(k).enumerate() {
        retained_values.push(eigenvalues[src]);
        // Eigenvectors are columns of the accumulated rotation matrix.
        let mut comp: Vec<f64> = (0..d).map(|i| vectors.get(i, src)).collect();
        let mut max_idx = 0;
        for (i, v) in comp.iter().enumerate() {
            if v.abs() > comp[max_idx].abs() {
                max_idx = i;
            }
        }
        if comp[max_idx] < 0.0 {
            for v in &mut comp {
                *v = -*v;
            }
        }
        components.row_mut(row).copy_from_slice(&comp);
    }

    Ok(PcaBasis {
        mean,
        components,
        eigenvalues: retained_values,
    })
}

/// Project a vector onto the retained components.
pub fn pca_transform(basis: &PcaBasis, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != basis.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.input_dim(),
            got: v.len(),
        });
    }
    let centered: Vec<f64> = v.iter().zip(&basis.mean).map(|(a, m)| a - m).collect();
    Ok(basis.components.matvec(&centered))
}

/// Map projected coordinates back to the input space.
pub fn pca_inverse(basis: &PcaBasis, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != basis.retained() {
        return Err(Error::DimensionMismatch {
            expected: basis.retained(),
            got: y.len(),
        });
    }
    let mut out = basis.mean.clone();
    basis.components.matvec_t_add(y, &mut out);
    Ok(out)
}

/// Cyclic Jacobi for a symmetric matrix. Destroys `a`; returns
/// (eigenvalues, eigenvector matrix with eigenvectors as columns).
fn jacobi_eigen(a: &mut Mat) -> (Vec<f64>, Mat) {
    let d = a.rows;
    let mut v = Mat::from_fn(d, d, |r, c| if r == c { 1.0 } else { 0.0 });
    if d == 1 {
        return (vec![a.get(0, 0)], v);
    }
    let norm: f64 = a.data.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let tol = 1e-13 * norm;
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a.get(p, q).powi(2);
            }
        }
        if (2.0 * off).sqrt() <= tol {
            break;
        }
        for p in 0..d - 1 {
            for q in (p + 1)..d {
                let apq = a.get(p, q);
                if apq.abs() <= tol / (d as f64) {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Update rows/columns p and q of the symmetric matrix.
                for i in 0..d {
                    if i != p && i != q {
                        let aip = a.get(i, p);
                        let aiq = a.get(i, q);
                        let nip = c * aip - s * aiq;
                        let niq = s * aip + c * aiq;
                        a.set(i, p, nip);
                        a.set(p, i, nip);
                        a.set(i, q, niq);
                        a.set(q, i, niq);
                    }
                }
                let npp = c * c * app - 2.0 * s * c * apq + s * s * aqq;
                let nqq = s * s * app + 2.0 * s * c * apq + c * c * aqq;
                a.set(p, p, npp);
                a.set(q, q, nqq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);

                for i in 0..d {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }
    let eig: Vec<f64> = (0..d).map(|i| a.get(i, i)).collect();
    (eig, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn line_in_2d_recovers_direction() {
        // Points on y = x: one component carries everything.
        let data: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let basis = pca_fit(&data, 1).unwrap();
        let c = basis.components.row(0);
        let inv2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c[0] - inv2).abs() < 1e-10);
        assert!((c[1] - inv2).abs() < 1e-10);
        for row in &data {
            let y = pca_transform(&basis, row).unwrap();
            let back = pca_inverse(&basis, &y).unwrap();
            for (a, b) in row.iter().zip(&back) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn full_rank_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let data: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..20).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let basis = pca_fit(&data, 20).unwrap();
        for row in data.iter().take(20) {
            let back = pca_inverse(&basis, &pca_transform(&basis, row).unwrap()).unwrap();
            for (a, b) in row.iter().zip(&back) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn full_rank_transform_is_isometry() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let data: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let basis = pca_fit(&data, 8).unwrap();
        for pair in data.windows(2).take(10) {
            let da: f64 = pair[0]
                .iter()
                .zip(&pair[1])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let ta = pca_transform(&basis, &pair[0]).unwrap();
            let tb = pca_transform(&basis, &pair[1]).unwrap();
            let dt: f64 = ta.iter().zip(&tb).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!((da - dt).abs() < 1e-8);
        }
    }

    #[test]
    fn components_orthonormal_and_sorted() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let data: Vec<Vec<f64>> = (0..60)
            .map(|_| {
                let t: f64 = rng.gen_range(-3.0..3.0);
                let e: f64 = rng.gen_range(-0.1..0.1);
                vec![t, 2.0 * t + e, -t + e, rng.gen_range(-0.05..0.05)]
            })
            .collect();
        let basis = pca_fit(&data, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot = crate::mat::dot(basis.components.row(i), basis.components.row(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-8, "{i},{j}: {dot}");
            }
        }
        for w in basis.eigenvalues.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
    }

    #[test]
    fn k_out_of_range_rejected() {
        let data = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        assert!(pca_fit(&data, 3).is_err());
        assert!(pca_fit(&data, 0).is_err());
    }
}
