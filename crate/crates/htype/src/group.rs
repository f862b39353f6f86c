//! H-type group built from a Clifford module: structure constants, group law
//! in exponential coordinates, dilations, left-invariant frame, horizontal
//! gradient and sublaplacian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clifford::CliffordModule;
use crate::jet::{Jet2, ScalarField};
use crate::{HtypeError, Result};

/// A point (x, t) in exponential coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint {
    pub x: DVector<f64>,
    pub t: DVector<f64>,
}

impl GroupPoint {
    pub fn new(x: DVector<f64>, t: DVector<f64>) -> Self {
        GroupPoint { x, t }
    }

    pub fn origin(n2: usize, k: usize) -> Self {
        GroupPoint {
            x: DVector::zeros(n2),
            t: DVector::zeros(k),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len() + self.t.len()
    }

    /// Concatenated coordinates (x_1..x_2n, t_1..t_k).
    pub fn coords(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.dim());
        c.rows_mut(0, self.x.len()).copy_from(&self.x);
        c.rows_mut(self.x.len(), self.t.len()).copy_from(&self.t);
        c
    }

    pub fn from_coords(c: &DVector<f64>, n2: usize, k: usize) -> Self {
        GroupPoint {
            x: c.rows(0, n2).into_owned(),
            t: c.rows(n2, k).into_owned(),
        }
    }

    /// Parse "x1,...,x2n;t1,...,tk".
    pub fn parse(s: &str, n2: usize, k: usize) -> Result<Self> {
        let (xs, ts) = s
            .split_once(';')
            .ok_or_else(|| HtypeError::InvalidParameter(format!("point '{s}': missing ';'")))?;
        let parse_list = |part: &str, want: usize, name: &str| -> Result<DVector<f64>> {
            let vals: std::result::Result<Vec<f64>, _> =
                part.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|_| {
                HtypeError::InvalidParameter(format!("point '{s}': bad {name} coordinates"))
            })?;
            if vals.len() != want {
                return Err(HtypeError::InvalidParameter(format!(
                    "point '{s}': expected {want} {name} coordinates, got {}",
                    vals.len()
                )));
            }
            Ok(DVector::from_column_slice(&vals))
        };
        Ok(GroupPoint {
            x: parse_list(xs, n2, "horizontal")?,
            t: parse_list(ts, k, "vertical")?,
        })
    }
}

/// An H-type group: the module plus derived structure constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HTypeGroup {
    module: CliffordModule,
    #[serde(skip)]
    structure: Vec<DMatrix<f64>>,
}

impl HTypeGroup {
    /// Derive the group from a verified module. Structure constants are
    /// c[j][a][b] = <J_j e_a, e_b>, i.e. the transpose of J_j.
    pub fn from_module(module: CliffordModule) -> Result<Self> {
        let report = module.verify(1e-10);
        if !report.pass {
            return Err(HtypeError::CliffordViolation(format!(
                "module fails verification: antisymmetry {:.3e}, relation {:.3e}",
                report.max_antisymmetry_residual, report.max_relation_residual
            )));
        }
        let structure = module.generators().iter().map(|j| j.transpose()).collect();
        Ok(HTypeGroup { module, structure })
    }

    pub fn module(&self) -> &CliffordModule {
        &self.module
    }

    pub fn n2(&self) -> usize {
        self.module.n2()
    }

    pub fn k(&self) -> usize {
        self.module.k()
    }

    pub fn dim(&self) -> usize {
        self.n2() + self.k()
    }

    /// Homogeneous dimension Q = 2n + 2k.
    pub fn homogeneous_dimension(&self) -> usize {
        self.n2() + 2 * self.k()
    }

    /// Critical exponent (Q+2)/(Q-2).
    pub fn critical_exponent(&self) -> f64 {
        let q = self.homogeneous_dimension() as f64;
        (q + 2.0) / (q - 2.0)
    }

    /// Structure-constant matrix c_j with entries c[j][a][b].
    pub fn structure_matrix(&self, j: usize) -> &DMatrix<f64> {
        &self.structure[j]
    }

    /// [x, y]_j = <J_j x, y>.
    pub fn bracket(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.k(), |j, _| (self.module.generator(j) * x).dot(y))
    }

    /// (x,t) . (x',t') = (x + x', t + t' + [x,x']/2).
    pub fn group_law(&self, p: &GroupPoint, q: &GroupPoint) -> GroupPoint {
        GroupPoint {
            x: &p.x + &q.x,
            t: &p.t + &q.t + self.bracket(&p.x, &q.x) * 0.5,
        }
    }

    pub fn inverse(&self, p: &GroupPoint) -> GroupPoint {
        GroupPoint {
            x: -&p.x,
            t: -&p.t,
        }
    }

    /// Anisotropic dilation (x, t) -> (lambda x, lambda^2 t).
    pub fn dilation(&self, lambda: f64, p: &GroupPoint) -> Result<GroupPoint> {
        if lambda <= 0.0 {
            return Err(HtypeError::InvalidParameter(format!(
                "dilation parameter must be positive, got {lambda}"
            )));
        }
        Ok(GroupPoint {
            x: &p.x * lambda,
            t: &p.t * (lambda * lambda),
        })
    }

    /// Coordinate components of the left-invariant frame vector
    /// X_a = d_{x_a} + (1/2) sum_j (J_j x)_a d_{t_j}.
    pub fn frame_vector(&self, p: &GroupPoint, alpha: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        v[alpha] = 1.0;
        for j in 0..self.k() {
            v[self.n2() + j] = 0.5 * (self.module.generator(j) * &p.x)[alpha];
        }
        v
    }

    /// All 2n frame vectors as columns of a (2n+k) x 2n matrix.
    pub fn frame_matrix(&self, p: &GroupPoint) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.n2());
        for a in 0..self.n2() {
            m.set_column(a, &self.frame_vector(p, a));
        }
        m
    }

    /// The affine coordinate map of left translation by p.
    pub fn left_translation_affine(&self, p: &GroupPoint) -> (DMatrix<f64>, DVector<f64>) {
        let dim = self.dim();
        let mut a = DMatrix::identity(dim, dim);
        for j in 0..self.k() {
            let row = self.module.generator(j) * &p.x * 0.5;
            for g in 0..self.n2() {
                a[(self.n2() + j, g)] = row[g];
            }
        }
        (a, p.coords())
    }

    /// The linear coordinate map of the dilation by lambda.
    pub fn dilation_affine(&self, lambda: f64) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.n2() {
            a[(i, i)] = lambda;
        }
        for j in 0..self.k() {
            a[(self.n2() + j, self.n2() + j)] = lambda * lambda;
        }
        a
    }

    /// Frame derivatives X_a u for a = 1..2n.
    pub fn horizontal_gradient(&self, u: &dyn ScalarField, p: &GroupPoint) -> DVector<f64> {
        let jet = u.jet(p);
        self.horizontal_gradient_of_jet(&jet, p)
    }

    pub fn horizontal_gradient_of_jet(&self, jet: &Jet2, p: &GroupPoint) -> DVector<f64> {
        let frame = self.frame_matrix(p);
        frame.transpose() * &jet.g
    }

    /// Reeb derivatives T_j u = d_{t_j} u.
    pub fn vertical_gradient_of_jet(&self, jet: &Jet2) -> DVector<f64> {
        jet.g.rows(self.n2(), self.k()).into_owned()
    }

    /// Second frame derivatives W[a][b] = X_a X_b u (not symmetrized):
    /// X_a X_b u = X_a^T H X_b + (1/2) sum_l (J_l)_{ba} u_{t_l}.
    pub fn frame_hessian_of_jet(&self, jet: &Jet2, p: &GroupPoint) -> DMatrix<f64> {
        let frame = self.frame_matrix(p);
        let mut w = frame.transpose() * &jet.h * &frame;
        for l in 0..self.k() {
            let ut = jet.g[self.n2() + l];
            for a in 0..self.n2() {
                for b in 0..self.n2() {
                    w[(a, b)] += 0.5 * self.module.generator(l)[(b, a)] * ut;
                }
            }
        }
        w
    }

    /// Mixed derivatives T_j X_b u as a k x 2n matrix.
    pub fn reeb_frame_hessian_of_jet(&self, jet: &Jet2, p: &GroupPoint) -> DMatrix<f64> {
        let frame = self.frame_matrix(p);
        let vert = jet.h.rows(self.n2(), self.k());
        vert * frame
    }

    /// Sublaplacian: trace of the frame Hessian.
    pub fn sublaplacian(&self, u: &dyn ScalarField, p: &GroupPoint) -> f64 {
        let jet = u.jet(p);
        self.sublaplacian_of_jet(&jet, p)
    }

    pub fn sublaplacian_of_jet(&self, jet: &Jet2, p: &GroupPoint) -> f64 {
        self.frame_hessian_of_jet(jet, p).trace()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::build_generators;
    use crate::jet::{AffinePullback, FieldSpec};
    use rand::Rng;
    use rand::SeedableRng;

    fn h1() -> HTypeGroup {
        HTypeGroup::from_module(build_generators(1, 1).unwrap()).unwrap()
    }

    fn random_point(rng: &mut impl Rng, n2: usize, k: usize) -> GroupPoint {
        GroupPoint::new(
            DVector::from_fn(n2, |_, _| 4.0 * rng.random::<f64>() - 2.0),
            DVector::from_fn(k, |_, _| 4.0 * rng.random::<f64>() - 2.0),
        )
    }

    #[test]
    fn structure_constants_of_h1() {
        let g = h1();
        // c[1][a][b] = <J_1 e_a, e_b> with J_1 e_1 = e_2
        let c = g.structure_matrix(0);
        assert_eq!(c[(0, 1)], 1.0);
        assert_eq!(c[(1, 0)], -1.0);
        assert_eq!(c[(0, 0)], 0.0);
        assert_eq!(c[(1, 1)], 0.0);
        // antisymmetry exact
        assert_eq!((c.transpose() + c).norm(), 0.0);
    }

    #[test]
    fn homogeneous_dimension_quaternionic() {
        let g = HTypeGroup::from_module(build_generators(3, 1).unwrap()).unwrap();
        assert_eq!(g.homogeneous_dimension(), 10);
    }

    #[test]
    fn bracket_matches_j_pairing() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let g = HTypeGroup::from_module(build_generators(3, 1).unwrap()).unwrap();
        for _ in 0..20 {
            let x = DVector::from_fn(4, |_, _| rng.random::<f64>() - 0.5);
            let y = DVector::from_fn(4, |_, _| rng.random::<f64>() - 0.5);
            let tvec = DVector::from_fn(3, |_, _| rng.random::<f64>() - 0.5);
            let lhs = g.bracket(&x, &y).dot(&tvec);
            let jt = g.module().j_of(tvec.as_slice());
            let rhs = (jt * &x).dot(&y);
            assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn group_law_identity_inverse_and_heisenberg_product() {
        let g = h1();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let p = random_point(&mut rng, 2, 1);
        let id = GroupPoint::origin(2, 1);
        assert_eq!(g.group_law(&id, &p), p);
        let prod = g.group_law(&p, &g.inverse(&p));
        assert!(prod.x.norm() <= 1e-15 && prod.t.norm() <= 1e-15);
        // (e1,0).(e2,0) = (e1+e2, 1/2)
        let e1 = GroupPoint::new(DVector::from_column_slice(&[1.0, 0.0]), DVector::zeros(1));
        let e2 = GroupPoint::new(DVector::from_column_slice(&[0.0, 1.0]), DVector::zeros(1));
        let r = g.group_law(&e1, &e2);
        assert_eq!(r.x, DVector::from_column_slice(&[1.0, 1.0]));
        assert!((r.t[0] - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn group_law_is_associative() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for k in [1usize, 2, 3] {
            let g = HTypeGroup::from_module(build_generators(k, 1).unwrap()).unwrap();
            for _ in 0..30 {
                let (p, q, r) = (
                    random_point(&mut rng, g.n2(), k),
                    random_point(&mut rng, g.n2(), k),
                    random_point(&mut rng, g.n2(), k),
                );
                let a = g.group_law(&g.group_law(&p, &q), &r);
                let b = g.group_law(&p, &g.group_law(&q, &r));
                assert!((a.coords() - b.coords()).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn dilation_is_an_automorphism() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let g = HTypeGroup::from_module(build_generators(2, 1).unwrap()).unwrap();
        assert!(g.dilation(0.0, &GroupPoint::origin(4, 2)).is_err());
        for _ in 0..100 {
            let lambda = 0.2 + 3.0 * rng.random::<f64>();
            let p = random_point(&mut rng, 4, 2);
            let q = random_point(&mut rng, 4, 2);
            let a = g.dilation(lambda, &g.group_law(&p, &q)).unwrap();
            let b = g.group_law(
                &g.dilation(lambda, &p).unwrap(),
                &g.dilation(lambda, &q).unwrap(),
            );
            assert!((a.coords() - b.coords()).norm() <= 1e-12);
        }
        // lambda = 2 on (e1, e1)
        let p = GroupPoint::new(
            DVector::from_column_slice(&[1.0, 0.0, 0.0, 0.0]),
            DVector::from_column_slice(&[1.0, 0.0]),
        );
        let d = g.dilation(2.0, &p).unwrap();
        assert_eq!(d.x[0], 2.0);
        assert_eq!(d.t[0], 4.0);
    }

    #[test]
    fn frame_at_origin_and_at_e1() {
        let g = h1();
        let origin = GroupPoint::origin(2, 1);
        let f0 = g.frame_matrix(&origin);
        assert_eq!(f0[(0, 0)], 1.0);
        assert_eq!(f0[(2, 0)], 0.0);
        assert_eq!(f0[(2, 1)], 0.0);
        // at p = (e1, 0): X_2 = d_{x2} + 1/2 d_t
        let p = GroupPoint::new(DVector::from_column_slice(&[1.0, 0.0]), DVector::zeros(1));
        let x2 = g.frame_vector(&p, 1);
        assert_eq!(x2[1], 1.0);
        assert!((x2[2] - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn frame_is_pushforward_of_left_translation() {
        // columns of d L_p at the identity must equal the frame vectors
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let g = HTypeGroup::from_module(build_generators(2, 1).unwrap()).unwrap();
        let p = random_point(&mut rng, 4, 2);
        let (a, _) = g.left_translation_affine(&p);
        let h = 1e-5;
        for alpha in 0..4 {
            let mut dir = DVector::zeros(6);
            dir[alpha] = 1.0;
            let plus = g.group_law(&p, &GroupPoint::from_coords(&(&dir * h), 4, 2));
            let minus = g.group_law(&p, &GroupPoint::from_coords(&(&dir * -h), 4, 2));
            let fd = (plus.coords() - minus.coords()) / (2.0 * h);
            let exact = &a * &dir;
            assert!((&fd - &exact).norm() <= 1e-9);
            assert!((exact - g.frame_vector(&p, alpha)).norm() <= 1e-12);
        }
    }

    #[test]
    fn frame_commutator_matches_structure_constants() {
        // [X_a, X_b]u = sum_j c[j][a][b] u_{t_j} on exact jets
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        let g = HTypeGroup::from_module(build_generators(3, 1).unwrap()).unwrap();
        let u = FieldSpec::random_positive(4, 3, 31, 3);
        for _ in 0..10 {
            let p = random_point(&mut rng, 4, 3);
            let jet = u.jet(&p);
            let w = g.frame_hessian_of_jet(&jet, &p);
            for a in 0..4 {
                for b in 0..4 {
                    let comm = w[(a, b)] - w[(b, a)];
                    let mut expect = 0.0;
                    for j in 0..3 {
                        expect += g.structure_matrix(j)[(a, b)] * jet.g[4 + j];
                    }
                    assert!((comm - expect).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn gradient_examples() {
        let g = h1();
        let p = GroupPoint::new(DVector::from_column_slice(&[1.0, 0.0]), DVector::zeros(1));
        let grad_const = g.horizontal_gradient(&FieldSpec::Const { value: 3.0 }, &p);
        assert_eq!(grad_const.norm(), 0.0);
        // u = x1
        let u = FieldSpec::Poly {
            c0: 0.0,
            linear: vec![1.0, 0.0, 0.0],
        };
        let grad = g.horizontal_gradient(&u, &p);
        assert_eq!(grad[0], 1.0);
        assert_eq!(grad[1], 0.0);
        // u = t1 at (e1, 0): (0, 1/2)
        let u = FieldSpec::Poly {
            c0: 0.0,
            linear: vec![0.0, 0.0, 1.0],
        };
        let grad = g.horizontal_gradient(&u, &p);
        assert!(grad[0].abs() <= 1e-15);
        assert!((grad[1] - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn sublaplacian_of_x_squared_is_4n() {
        // u = |x|^2 as a product of polys summed: use Gaussian-free quadratic
        // via Product(poly, poly) per coordinate
        let g = HTypeGroup::from_module(build_generators(2, 1).unwrap()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(37);
        let p = random_point(&mut rng, 4, 2);
        let mut total = 0.0;
        for a in 0..4 {
            let mut linear = vec![0.0; 6];
            linear[a] = 1.0;
            let xa = FieldSpec::Poly { c0: 0.0, linear };
            let sq = FieldSpec::Product(Box::new(xa.clone()), Box::new(xa));
            total += g.sublaplacian(&sq, &p);
        }
        assert!((total - 8.0).abs() <= 1e-12, "expected 4n = 8, got {total}");
        assert_eq!(g.sublaplacian(&FieldSpec::Const { value: 5.0 }, &p), 0.0);
    }

    #[test]
    fn sublaplacian_is_left_invariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let g = HTypeGroup::from_module(build_generators(2, 1).unwrap()).unwrap();
        let u = FieldSpec::random_positive(4, 2, 43, 4);
        for _ in 0..50 {
            let p = random_point(&mut rng, 4, 2);
            let q = random_point(&mut rng, 4, 2);
            let (a, b) = g.left_translation_affine(&p);
            let pulled = AffinePullback {
                inner: u.clone(),
                matrix: a,
                offset: b,
                n2: 4,
                k: 2,
            };
            let lhs = g.sublaplacian(&pulled, &q);
            let rhs = g.sublaplacian(&u, &g.group_law(&p, &q));
            assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn sublaplacian_is_homogeneous_of_degree_two() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(47);
        let g = h1();
        let u = FieldSpec::random_positive(2, 1, 53, 3);
        for _ in 0..20 {
            let lambda = 0.3 + 2.0 * rng.random::<f64>();
            let p = random_point(&mut rng, 2, 1);
            let pulled = AffinePullback {
                inner: u.clone(),
                matrix: g.dilation_affine(lambda),
                offset: DVector::zeros(3),
                n2: 2,
                k: 1,
            };
            let lhs = g.sublaplacian(&pulled, &p);
            let rhs = lambda * lambda * g.sublaplacian(&u, &g.dilation(lambda, &p).unwrap());
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn point_parsing() {
        let p = GroupPoint::parse("1,2;3", 2, 1).unwrap();
        assert_eq!(p.x[1], 2.0);
        assert_eq!(p.t[0], 3.0);
        assert!(GroupPoint::parse("1,2,3", 2, 1).is_err());
        assert!(GroupPoint::parse("1;3", 2, 1).is_err());
    }
}
