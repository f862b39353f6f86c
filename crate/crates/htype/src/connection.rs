//! The canonical connection of a conformally changed structure, solved
//! pointwise from its defining linear conditions, with torsion, curvature
//! trace, and the conformal-constant calibration.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::flat::FlatContactStructure;
use crate::group::{GroupPoint, HTypeGroup};
use crate::jet::{FieldSpec, Jet2, ScalarField};
use crate::projectors::ProjectorPair;
use crate::{HtypeError, Result};

/// Tolerance for the algebraic condition families (metricity, commutant,
/// Q-tensor, Reeb commutant).
pub const ALGEBRAIC_TOL: f64 = 1e-8;
/// Tolerance for the condition families involving first derivatives of the
/// conformal factor (torsion and vertical normalizations).
pub const DERIVATIVE_TOL: f64 = 1e-7;
/// Required uniqueness certificate: smallest singular value of the condition
/// system over the machine-noise floor.
pub const GAP_REQUIREMENT: f64 = 1e6;

/// Worst residual of each defining condition family, evaluated at the solved
/// connection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectionResiduals {
    pub metricity: f64,
    pub commutant: f64,
    pub q_tensor: f64,
    pub reeb_commutant: f64,
    pub torsion_sigma: f64,
    pub vertical_xi: f64,
}

impl ConnectionResiduals {
    pub fn pass(&self) -> bool {
        self.metricity <= ALGEBRAIC_TOL
            && self.commutant <= ALGEBRAIC_TOL
            && self.q_tensor <= ALGEBRAIC_TOL
            && self.reeb_commutant <= ALGEBRAIC_TOL
            && self.torsion_sigma <= DERIVATIVE_TOL
            && self.vertical_xi <= DERIVATIVE_TOL
    }
}

/// The connection at a point: A_a is the matrix of the covariant derivative
/// along X_a in the left-invariant frame, B_j along T_j.
#[derive(Debug, Clone)]
pub struct ConnectionAtPoint {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    /// Coefficients in the rescaled orthonormal frame f^(-1/2) X_a; exactly
    /// antisymmetric by metricity.
    pub gamma_rescaled: Vec<DMatrix<f64>>,
    pub residuals: ConnectionResiduals,
    /// Uniqueness certificate: sigma_min / (sigma_max * machine epsilon).
    pub gap: f64,
}

/// Conformal-constant calibration summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureSummary {
    pub c_conformal: f64,
    /// Relative spread of the per-point constants.
    pub spread: f64,
    pub samples: usize,
    pub worst_connection_residual: f64,
}

struct PointData {
    fv: f64,
    /// frame derivatives X_a f
    xf: DVector<f64>,
    /// vertical derivatives T_j f
    tf: DVector<f64>,
    /// Reeb corrections X_j as horizontal frame components
    xvec: Vec<DVector<f64>>,
    /// dxj[j][(a, b)] = X_b applied to the component function (X_j)_a
    dxj: Vec<DMatrix<f64>>,
}

/// Pointwise solver for the canonical connection of the structure scaled by a
/// positive conformal factor.
pub struct FrameConnection {
    group: HTypeGroup,
    flat: FlatContactStructure,
    projectors: ProjectorPair,
}

impl FrameConnection {
    pub fn new(group: HTypeGroup) -> Result<Self> {
        let projectors = ProjectorPair::new(group.module())?;
        let flat = FlatContactStructure::new(group.clone());
        Ok(FrameConnection {
            group,
            flat,
            projectors,
        })
    }

    pub fn group(&self) -> &HTypeGroup {
        &self.group
    }

    pub fn projectors(&self) -> &ProjectorPair {
        &self.projectors
    }

    fn point_data(&self, f: &Jet2, p: &GroupPoint) -> PointData {
        let g = &self.group;
        let n2 = g.n2();
        let k = g.k();
        let fv = f.v;
        let xf = g.horizontal_gradient_of_jet(f, p);
        let tf = DVector::from_fn(k, |j, _| f.g[n2 + j]);
        let hess = g.frame_hessian_of_jet(f, p);
        let mut xvec = Vec::with_capacity(k);
        let mut dxj = Vec::with_capacity(k);
        for j in 0..k {
            let jj = g.module().generator(j);
            xvec.push(jj * &xf / (fv * fv));
            let mut d = DMatrix::zeros(n2, n2);
            for b in 0..n2 {
                let v = DVector::from_fn(n2, |d_, _| {
                    hess[(b, d_)] / (fv * fv) - 2.0 * xf[d_] * xf[b] / (fv * fv * fv)
                });
                d.set_column(b, &(jj * v));
            }
            dxj.push(d);
        }
        PointData {
            fv,
            xf,
            tf,
            xvec,
            dxj,
        }
    }

    /// All defining-condition residuals for candidate coefficients, grouped by
    /// family: metricity, commutant, Q-tensor, Reeb commutant, torsion Sigma
    /// part, vertical Xi part.
    fn residual_families(
        &self,
        data: &PointData,
        a: &[DMatrix<f64>],
        b: &[DMatrix<f64>],
    ) -> [Vec<f64>; 6] {
        let g = &self.group;
        let n2 = g.n2();
        let k = g.k();
        let mut fam: [Vec<f64>; 6] = Default::default();

        // metricity: A_a + A_a^T = (X_a f / f) I, B_j + B_j^T = (T_j f / f) I
        for al in 0..n2 {
            let m = &a[al] + a[al].transpose()
                - DMatrix::identity(n2, n2) * (data.xf[al] / data.fv);
            fam[0].extend(m.iter());
        }
        for j in 0..k {
            let m =
                &b[j] + b[j].transpose() - DMatrix::identity(n2, n2) * (data.tf[j] / data.fv);
            fam[0].extend(m.iter());
        }

        // commutators [A_a, J_i] lie in the span of the J_j
        let comm: Vec<Vec<DMatrix<f64>>> = (0..n2)
            .map(|al| {
                (0..k)
                    .map(|i| {
                        let ji = g.module().generator(i);
                        &a[al] * ji - ji * &a[al]
                    })
                    .collect()
            })
            .collect();
        for al in 0..n2 {
            for i in 0..k {
                let mut rem = comm[al][i].clone();
                for j in 0..k {
                    let jj = g.module().generator(j);
                    rem -= jj * (comm[al][i].dot(jj) / (n2 as f64));
                }
                fam[1].extend(rem.iter());
            }
        }

        // Q-tensor vanishes
        for i in 0..k {
            let ji = g.module().generator(i);
            for al in 0..n2 {
                for be in 0..n2 {
                    let mut q = ji * (&comm[al][i] * unit(n2, be))
                        - ji * (&comm[be][i] * unit(n2, al));
                    for ga in 0..n2 {
                        q += &comm[ga][i] * unit(n2, al) * ji[(ga, be)]
                            - &comm[ga][i] * unit(n2, be) * ji[(ga, al)];
                    }
                    fam[2].extend(q.iter());
                }
            }
        }

        // the derivative along the corrected Reeb field commutes with every J_i
        for j in 0..k {
            let mut along = &b[j] / data.fv;
            for al in 0..n2 {
                along += &a[al] * data.xvec[j][al];
            }
            for i in 0..k {
                let ji = g.module().generator(i);
                let c = &along * ji - ji * along.clone();
                fam[3].extend(c.iter());
            }
        }

        // Sigma part of the horizontal torsion vanishes
        let n3 = n2 * n2 * n2;
        let mut tau = DVector::zeros(n3);
        for al in 0..n2 {
            for be in 0..n2 {
                for ga in 0..n2 {
                    let mut v = a[al][(ga, be)] - a[be][(ga, al)];
                    for l in 0..k {
                        v += data.fv * g.structure_matrix(l)[(al, be)] * data.xvec[l][ga];
                    }
                    tau[al + n2 * be + n2 * n2 * ga] = v;
                }
            }
        }
        fam[4].extend(self.projectors.project_sigma(&tau).iter());

        // Xi part of the vertical derivative (relative to the bracket with the
        // corrected Reeb field) vanishes
        for j in 0..k {
            let mut e = DMatrix::zeros(n2, n2);
            for be in 0..n2 {
                let mut col = &b[j] * unit(n2, be) / data.fv;
                for al in 0..n2 {
                    col += &a[al] * unit(n2, be) * data.xvec[j][al];
                }
                // minus the horizontal part of [T~_j, X_be]
                col += &data.xvec[j] * (data.xf[be] / data.fv);
                for l in 0..k {
                    let mut coeff = 0.0;
                    for al in 0..n2 {
                        coeff += data.xvec[j][al] * g.structure_matrix(l)[(al, be)];
                    }
                    col += &data.xvec[l] * (data.fv * coeff);
                }
                for al in 0..n2 {
                    col[al] += data.dxj[j][(al, be)];
                }
                e.set_column(be, &col);
            }
            fam[5].extend(self.projectors.project_xi(&e).iter());
        }
        fam
    }

    fn unpack(&self, u: &DVector<f64>) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let n2 = self.group.n2();
        let k = self.group.k();
        let block = n2 * n2;
        let mat = |m: usize| {
            DMatrix::from_fn(n2, n2, |r, c| u[m * block + c * n2 + r])
        };
        (
            (0..n2).map(&mat).collect(),
            (n2..n2 + k).map(&mat).collect(),
        )
    }

    /// Solves the defining linear system at p for the conformal factor f and
    /// certifies uniqueness through the singular spectrum.
    pub fn solve<F: ScalarField>(&self, f: &F, p: &GroupPoint) -> Result<ConnectionAtPoint> {
        let jet = f.jet(p);
        if jet.v <= 0.0 {
            return Err(HtypeError::InvalidParameter(
                "conformal factor must be positive".into(),
            ));
        }
        let data = self.point_data(&jet, p);
        let n2 = self.group.n2();
        let k = self.group.k();
        let unknowns = (n2 + k) * n2 * n2;
        let eval = |u: &DVector<f64>| -> DVector<f64> {
            let (a, b) = self.unpack(u);
            let fams = self.residual_families(&data, &a, &b);
            DVector::from_vec(fams.into_iter().flatten().collect())
        };
        let base = eval(&DVector::zeros(unknowns));
        let rows = base.len();
        let mut m = DMatrix::zeros(rows, unknowns);
        for i in 0..unknowns {
            let mut e = DVector::zeros(unknowns);
            e[i] = 1.0;
            m.set_column(i, &(eval(&e) - &base));
        }
        let svd = SVD::new(m.clone(), true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let gap = smin / (smax * f64::EPSILON);
        if gap < GAP_REQUIREMENT {
            return Err(HtypeError::UniquenessViolation(format!(
                "singular spectrum does not certify a unique solution: gap {gap:.3e}"
            )));
        }
        let u = svd
            .solve(&(-&base), 1e-13 * smax)
            .map_err(|e| HtypeError::VerificationFailure(e.to_string()))?;
        let (a, b) = self.unpack(&u);
        let fams = self.residual_families(&data, &a, &b);
        let maxabs =
            |v: &Vec<f64>| v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let residuals = ConnectionResiduals {
            metricity: maxabs(&fams[0]),
            commutant: maxabs(&fams[1]),
            q_tensor: maxabs(&fams[2]),
            reeb_commutant: maxabs(&fams[3]),
            torsion_sigma: maxabs(&fams[4]),
            vertical_xi: maxabs(&fams[5]),
        };
        if !residuals.pass() {
            return Err(HtypeError::VerificationFailure(format!(
                "connection conditions not satisfied at the solution: {residuals:?}"
            )));
        }
        let gamma_rescaled = (0..n2)
            .map(|al| {
                (&a[al] - DMatrix::identity(n2, n2) * (data.xf[al] / (2.0 * jet.v)))
                    / jet.v.sqrt()
            })
            .collect();
        Ok(ConnectionAtPoint {
            a,
            b,
            gamma_rescaled,
            residuals,
            gap,
        })
    }

    /// The connection of the unscaled flat structure: identically zero in the
    /// left-invariant frame.
    pub fn flat_connection(&self) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let n2 = self.group.n2();
        let k = self.group.k();
        (
            vec![DMatrix::zeros(n2, n2); n2],
            vec![DMatrix::zeros(n2, n2); k],
        )
    }

    /// Closed-form horizontal coefficients: the conformal part plus the
    /// commutant-valued correction recovered from the torsion normalization.
    /// Cross-check only; the solver above is authoritative.
    pub fn closed_form_horizontal<F: ScalarField>(
        &self,
        f: &F,
        p: &GroupPoint,
    ) -> Result<Vec<DMatrix<f64>>> {
        let jet = f.jet(p);
        let data = self.point_data(&jet, p);
        let g = &self.group;
        let n2 = g.n2();
        let k = g.k();
        let n3 = n2 * n2 * n2;
        // torsion of the pure-trace part (X_a f / 2f) I
        let mut tau0 = DVector::zeros(n3);
        for al in 0..n2 {
            for be in 0..n2 {
                for ga in 0..n2 {
                    let mut v = 0.0;
                    if ga == be {
                        v += data.xf[al] / (2.0 * data.fv);
                    }
                    if ga == al {
                        v -= data.xf[be] / (2.0 * data.fv);
                    }
                    for l in 0..k {
                        v += data.fv * g.structure_matrix(l)[(al, be)] * data.xvec[l][ga];
                    }
                    tau0[al + n2 * be + n2 * n2 * ga] = v;
                }
            }
        }
        // the Xi-valued antisymmetric part cancels the Sigma component of tau0
        let slices = self.projectors.theta_of(&(-&tau0 * 0.5));
        Ok((0..n2)
            .map(|al| {
                DMatrix::identity(n2, n2) * (data.xf[al] / (2.0 * data.fv))
                    - slices[al].clone()
            })
            .collect())
    }

    /// Frame second derivative of the A coefficients: order-4 central
    /// differences along the group curve s -> p (s e_a, 0), re-solving the
    /// connection at the displaced points.
    fn frame_derivative_of_a<F: ScalarField>(
        &self,
        f: &F,
        p: &GroupPoint,
        al: usize,
    ) -> Result<Vec<DMatrix<f64>>> {
        let n2 = self.group.n2();
        let k = self.group.k();
        let h = 1e-3 * (1.0 + p.coords().norm());
        let at = |s: f64| -> Result<Vec<DMatrix<f64>>> {
            let mut step = DVector::zeros(n2);
            step[al] = s;
            let q = self.group.group_law(p, &GroupPoint::new(step, DVector::zeros(k)));
            Ok(self.solve(f, &q)?.a)
        };
        let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
        Ok((0..n2)
            .map(|be| {
                (&p1[be] * 8.0 - &m1[be] * 8.0 - &p2[be] + &m2[be]) / (12.0 * h)
            })
            .collect())
    }

    /// Scalar curvature trace of the connection with respect to the rescaled
    /// metric.  The overall sign is chosen so that the calibrated conformal
    /// constant is positive and the Yamabe quotient is bounded below by zero.
    pub fn scalar_curvature<F: ScalarField>(&self, f: &F, p: &GroupPoint) -> Result<f64> {
        let n2 = self.group.n2();
        let k = self.group.k();
        let here = self.solve(f, p)?;
        let jet = f.jet(p);
        let da: Vec<Vec<DMatrix<f64>>> = (0..n2)
            .map(|al| self.frame_derivative_of_a(f, p, al))
            .collect::<Result<_>>()?;
        let mut total = 0.0;
        for al in 0..n2 {
            for be in 0..n2 {
                let mut r = &da[al][be] - &da[be][al] + &here.a[al] * &here.a[be]
                    - &here.a[be] * &here.a[al];
                for j in 0..k {
                    r -= &here.b[j] * self.group.structure_matrix(j)[(al, be)];
                }
                total -= r[(be, al)];
            }
        }
        Ok(total / jet.v)
    }

    /// Horizontal Laplacian of u2 with respect to the structure scaled by f.
    pub fn sublaplacian_conformal<F: ScalarField, G: ScalarField>(
        &self,
        f: &F,
        u2: &G,
        p: &GroupPoint,
    ) -> Result<f64> {
        let n2 = self.group.n2();
        let conn = self.solve(f, p)?;
        let fjet = f.jet(p);
        let ujet = u2.jet(p);
        let hess = self.group.frame_hessian_of_jet(&ujet, p);
        let grad = self.group.horizontal_gradient_of_jet(&ujet, p);
        let mut total = 0.0;
        for al in 0..n2 {
            total += hess[(al, al)];
            for ga in 0..n2 {
                total -= conn.a[al][(ga, al)] * grad[ga];
            }
        }
        Ok(total / fjet.v)
    }

    /// Calibrates the conformal constant C: the curvature of the structure
    /// scaled by u^(4/(Q-2)) must equal u^(-(Q+2)/(Q-2)) (-C Laplacian u),
    /// so C is the per-point ratio, constant across points and factors.
    pub fn calibrate_conformal_constant(
        &self,
        samples: usize,
        seed: u64,
    ) -> Result<CurvatureSummary> {
        let g = &self.group;
        let e = g.critical_exponent();
        let q = g.homogeneous_dimension() as f64;
        let u = FieldSpec::random_positive(g.n2(), g.k(), seed.wrapping_add(17), 3);
        let f = FieldSpec::Power {
            base: Box::new(u.clone()),
            exponent: 4.0 / (q - 2.0),
        };
        let mut ratios = Vec::new();
        let mut worst_res = 0.0f64;
        for p in self.flat.sample_points(4 * samples, seed) {
            if ratios.len() >= samples {
                break;
            }
            let ujet = u.jet(&p);
            let lap = g.sublaplacian_of_jet(&ujet, &p);
            // skip points where the Laplacian is too small to divide by
            if lap.abs() < 0.05 {
                continue;
            }
            let kt = self.scalar_curvature(&f, &p)?;
            worst_res = worst_res.max(self.solve(&f, &p)?.residuals.torsion_sigma);
            ratios.push(kt * ujet.v.powf(e) / (-lap));
        }
        if ratios.len() < samples.min(20) {
            return Err(HtypeError::VerificationFailure(
                "too few usable calibration points".into(),
            ));
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let spread = ratios
            .iter()
            .map(|r| (r - mean).abs() / mean.abs())
            .fold(0.0f64, f64::max);
        if spread > 1e-4 {
            return Err(HtypeError::VerificationFailure(format!(
                "conformal constant is not constant across points: spread {spread:.3e}"
            )));
        }
        Ok(CurvatureSummary {
            c_conformal: mean,
            spread,
            samples: ratios.len(),
            worst_connection_residual: worst_res,
        })
    }

    /// Debug helper: the assembled linear system at a point.
    #[doc(hidden)]
    pub fn debug_system<F: ScalarField>(
        &self,
        f: &F,
        p: &GroupPoint,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let jet = f.jet(p);
        let data = self.point_data(&jet, p);
        let n2 = self.group.n2();
        let k = self.group.k();
        let unknowns = (n2 + k) * n2 * n2;
        let eval = |u: &DVector<f64>| -> DVector<f64> {
            let (a, b) = self.unpack(u);
            let fams = self.residual_families(&data, &a, &b);
            DVector::from_vec(fams.into_iter().flatten().collect())
        };
        let base = eval(&DVector::zeros(unknowns));
        let rows = base.len();
        let mut m = DMatrix::zeros(rows, unknowns);
        for i in 0..unknowns {
            let mut e = DVector::zeros(unknowns);
            e[i] = 1.0;
            m.set_column(i, &(eval(&e) - &base));
        }
        (m, -base)
    }
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}
