//! Tensor subspaces attached to the horizontal layer: the commutant-valued
//! 2-forms Xi, the domain D = R^{2n} (x) Xi, its antisymmetrization image
//! Sigma inside the 3-tensors, and the orthogonal projectors onto both.

use nalgebra::{DMatrix, DVector, SVD};

use crate::clifford::CliffordModule;
use crate::{HtypeError, Result};

/// Rank cutoff for nullspace and range computations, relative to the largest
/// singular value.
pub const RANK_CUTOFF: f64 = 1e-8;

/// Orthogonal projectors onto Sigma (3-tensors) and Xi (2-forms), with the
/// partial inverse Theta of the antisymmetrization on D.
#[derive(Debug, Clone)]
pub struct ProjectorPair {
    n2: usize,
    k: usize,
    /// Orthonormal basis of Xi, each a 2n x 2n antisymmetric matrix.
    xi_basis: Vec<DMatrix<f64>>,
    /// Orthonormal basis of Sigma as columns, tensors flattened to length (2n)^3.
    sigma_basis: DMatrix<f64>,
    /// Antisymmetrization restricted to D, as a matrix (2n)^3 x dim D.
    a12_on_d: DMatrix<f64>,
    /// Pseudo-inverse of a12_on_d; maps Sigma back into D coordinates.
    theta: DMatrix<f64>,
}


impl ProjectorPair {
    /// Builds the subspaces for the horizontal layer of the given module.
    /// Xi = { A antisymmetric : [A, J_i] = 0 for all i } via an SVD nullspace;
    /// the singular spectrum must show a clear gap at the rank cutoff.
    pub fn new(module: &CliffordModule) -> Result<Self> {
        let n2 = module.n2();
        let k = module.k();
        let dim_a = n2 * (n2 - 1) / 2;
        // antisymmetric basis E_{ab} = e_a e_b^T - e_b e_a^T, a < b
        let mut pairs = Vec::with_capacity(dim_a);
        for a in 0..n2 {
            for b in (a + 1)..n2 {
                pairs.push((a, b));
            }
        }
        // constraint rows: entries of [A, J_i] for each i, as functions of the
        // antisymmetric coordinates
        let mut constraints = DMatrix::zeros(k * n2 * n2, dim_a);
        for (col, &(a, b)) in pairs.iter().enumerate() {
            let mut e = DMatrix::zeros(n2, n2);
            e[(a, b)] = 1.0;
            e[(b, a)] = -1.0;
            for i in 0..k {
                let j = module.generator(i);
                let comm = &e * j - j * &e;
                for r in 0..n2 {
                    for c in 0..n2 {
                        constraints[(i * n2 * n2 + r * n2 + c, col)] = comm[(r, c)];
                    }
                }
            }
        }
        let null = nullspace(&constraints)?;
        let xi_basis: Vec<DMatrix<f64>> = null
            .column_iter()
            .map(|col| {
                let mut m: DMatrix<f64> = DMatrix::zeros(n2, n2);
                for (idx, &(a, b)) in pairs.iter().enumerate() {
                    m[(a, b)] += col[idx];
                    m[(b, a)] -= col[idx];
                }
                // Frobenius-normalize: each pair coordinate fills two entries
                let norm = m.norm();
                m / norm
            })
            .collect();
        let dim_xi = xi_basis.len();
        if dim_xi == 0 {
            return Err(HtypeError::VerificationFailure(
                "the commutant 2-form space is trivial".into(),
            ));
        }
        // D = span { e_a (x) E_r }: a 3-tensor tau with tau(a, ., .) = E_r
        // slices. Flattened index (a, b, c) -> a + 2n b + (2n)^2 c.
        let dim_d = n2 * dim_xi;
        let n3 = n2 * n2 * n2;
        let mut d_basis = DMatrix::zeros(n3, dim_d);
        for a in 0..n2 {
            for (r, e) in xi_basis.iter().enumerate() {
                let col = a * dim_xi + r;
                for b in 0..n2 {
                    for c in 0..n2 {
                        d_basis[(a + n2 * b + n2 * n2 * c, col)] = e[(b, c)];
                    }
                }
            }
        }
        // antisymmetrization in the first two slots, acting on D
        let mut a12_on_d = DMatrix::zeros(n3, dim_d);
        for col in 0..dim_d {
            for a in 0..n2 {
                for b in 0..n2 {
                    for c in 0..n2 {
                        let idx = a + n2 * b + n2 * n2 * c;
                        let swapped = b + n2 * a + n2 * n2 * c;
                        a12_on_d[(idx, col)] =
                            0.5 * (d_basis[(idx, col)] - d_basis[(swapped, col)]);
                    }
                }
            }
        }
        // Sigma = image; injectivity on D is part of the construction
        let (sigma_basis, rank) = range(&a12_on_d)?;
        if rank != dim_d {
            return Err(HtypeError::VerificationFailure(format!(
                "antisymmetrization is not injective on D: rank {rank} < dim {dim_d}"
            )));
        }
        let theta = pseudo_inverse(&a12_on_d)?;
        Ok(ProjectorPair {
            n2,
            k,
            xi_basis,
            sigma_basis,
            a12_on_d,
            theta,
        })
    }

    pub fn dim_xi(&self) -> usize {
        self.xi_basis.len()
    }

    pub fn dim_sigma(&self) -> usize {
        self.sigma_basis.ncols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn xi_basis(&self) -> &[DMatrix<f64>] {
        &self.xi_basis
    }

    /// Orthogonal projection of an antisymmetric-candidate 2-form onto Xi.
    pub fn project_xi(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n2, self.n2);
        for e in &self.xi_basis {
            let coeff = m.dot(e);
            out += e * coeff;
        }
        out
    }

    /// Orthogonal projection of a 3-tensor (flattened, index a + 2n b + (2n)^2 c)
    /// onto Sigma.
    pub fn project_sigma(&self, tau: &DVector<f64>) -> DVector<f64> {
        &self.sigma_basis * (self.sigma_basis.transpose() * tau)
    }

    /// Antisymmetrization of a D element given by its coefficient vector.
    pub fn a12(&self, d_coeffs: &DVector<f64>) -> DVector<f64> {
        &self.a12_on_d * d_coeffs
    }

    /// Theta: the inverse of the antisymmetrization on its image. Returns the
    /// D element (as per-slot 2-forms) whose antisymmetrization is the Sigma
    /// part of tau.
    pub fn theta_of(&self, tau: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let coeffs = &self.theta * tau;
        (0..self.n2)
            .map(|a| {
                let mut m = DMatrix::zeros(self.n2, self.n2);
                for (r, e) in self.xi_basis.iter().enumerate() {
                    m += e * coeffs[a * self.dim_xi() + r];
                }
                m
            })
            .collect()
    }

    /// Flattens a 3-tensor given as slices tau(a, ., .).
    pub fn flatten_slices(&self, slices: &[DMatrix<f64>]) -> DVector<f64> {
        let n2 = self.n2;
        let mut out = DVector::zeros(n2 * n2 * n2);
        for (a, s) in slices.iter().enumerate() {
            for b in 0..n2 {
                for c in 0..n2 {
                    out[a + n2 * b + n2 * n2 * c] = s[(b, c)];
                }
            }
        }
        out
    }
}

/// Orthonormal nullspace basis with a verified spectral gap at the cutoff.
fn nullspace(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = SVD::new(m.clone(), false, true);
    let vt = svd.v_t.as_ref().unwrap();
    let smax = svd.singular_values.max();
    let cutoff = RANK_CUTOFF * smax.max(1.0);
    let mut below = Vec::new();
    let mut above_min = f64::INFINITY;
    let ncols = m.ncols();
    for i in 0..ncols {
        let s = if i < svd.singular_values.len() {
            svd.singular_values[i]
        } else {
            0.0
        };
        if s < cutoff {
            below.push(i);
        } else {
            above_min = above_min.min(s);
        }
    }
    if !below.is_empty() && above_min.is_finite() {
        let largest_below = below
            .iter()
            .map(|&i| {
                if i < svd.singular_values.len() {
                    svd.singular_values[i]
                } else {
                    0.0
                }
            })
            .fold(0.0f64, f64::max);
        if largest_below > 1e-6 * above_min {
            return Err(HtypeError::VerificationFailure(format!(
                "no clear spectral gap in nullspace computation: {largest_below} vs {above_min}"
            )));
        }
    }
    let mut basis = DMatrix::zeros(ncols, below.len());
    for (j, &i) in below.iter().enumerate() {
        basis.set_column(j, &vt.row(i).transpose());
    }
    Ok(basis)
}

/// Orthonormal range basis and numerical rank.
fn range(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    let svd = SVD::new(m.clone(), true, false);
    let u = svd.u.as_ref().unwrap();
    let smax = svd.singular_values.max();
    let cutoff = RANK_CUTOFF * smax.max(1.0);
    let rank = svd.singular_values.iter().filter(|&&s| s >= cutoff).count();
    let mut basis = DMatrix::zeros(m.nrows(), rank);
    let mut col = 0;
    for i in 0..svd.singular_values.len() {
        if svd.singular_values[i] >= cutoff {
            basis.set_column(col, &u.column(i));
            col += 1;
        }
    }
    Ok((basis, rank))
}

fn pseudo_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    SVD::new(m.clone(), true, true)
        .pseudo_inverse(RANK_CUTOFF)
        .map_err(|e| HtypeError::VerificationFailure(format!("pseudo-inverse failed: {e}")))
}
