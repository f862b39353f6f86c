//! Real Clifford-module generator families and the Iwasawa-type test.
//!
//! A module is a family of k antisymmetric 2n x 2n matrices J_1..J_k with
//! J_i J_j + J_j J_i = -2 delta_ij I. Generators are built as tensor words
//! over the 2x2 blocks {I, s1, s3, eps}, chosen by a deterministic
//! backtracking search, so all entries are exactly 0 or +-1.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{HtypeError, Result};

/// Default tolerance for the algebraic relations of a constructed module.
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// Default tolerance for the least-squares membership test of `is_iwasawa_type`.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Generators of a real Clifford module acting on the horizontal space.
#[derive(Debug, Clone, PartialEq)]
pub struct CliffordModule {
    k: usize,
    n2: usize,
    generators: Vec<DMatrix<f64>>,
}

/// Residuals of the two defining relations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub max_antisymmetry_residual: f64,
    pub max_relation_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// A counterexample to the Iwasawa condition: J_{t1} J_{t2} e_x does not lie
/// in span{J_1 e_x, ..., J_k e_x}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IwasawaWitness {
    pub basis_vector: usize,
    pub center_pair: (usize, usize),
    pub residual: f64,
}

/// Minimal dimension of a real representation of the Clifford algebra with k
/// negative generators: d(1..8) = 2,4,4,8,8,8,8,16 and d(k+8) = 16 d(k).
pub fn min_rep_dim(k: usize) -> usize {
    const TABLE: [usize; 8] = [2, 4, 4, 8, 8, 8, 8, 16];
    if k == 0 {
        1
    } else if k <= 8 {
        TABLE[k - 1]
    } else {
        16 * min_rep_dim(k - 8)
    }
}

// Tensor-word letters. A word is antisymmetric and squares to -I iff it
// contains an odd number of eps factors; two words anticommute iff they
// differ by an anticommuting pair in an odd number of positions.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Letter {
    Id,
    S1,
    S3,
    Eps,
}

impl Letter {
    fn block(self) -> DMatrix<f64> {
        match self {
            Letter::Id => DMatrix::identity(2, 2),
            Letter::S1 => DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            Letter::S3 => DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            Letter::Eps => DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
        }
    }
}

const ALPHABET: [Letter; 4] = [Letter::Id, Letter::S1, Letter::S3, Letter::Eps];

fn positions_anticommute(a: Letter, b: Letter) -> bool {
    a != Letter::Id && b != Letter::Id && a != b
}

fn words_anticommute(w1: &[Letter], w2: &[Letter]) -> bool {
    let n = w1
        .iter()
        .zip(w2)
        .filter(|(a, b)| positions_anticommute(**a, **b))
        .count();
    n % 2 == 1
}

fn odd_eps(w: &[Letter]) -> bool {
    w.iter().filter(|l| **l == Letter::Eps).count() % 2 == 1
}

fn all_words(len: usize) -> Vec<Vec<Letter>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * 4);
        for w in &out {
            for l in ALPHABET {
                let mut v = w.clone();
                v.push(l);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Lexicographically-first family of k pairwise-anticommuting odd-eps words
/// of the given length. Deterministic; existence at the minimal length is the
/// Radon-Hurwitz bound.
fn search_words(len: usize, k: usize) -> Option<Vec<Vec<Letter>>> {
    let candidates: Vec<Vec<Letter>> = all_words(len).into_iter().filter(|w| odd_eps(w)).collect();
    let mut chosen: Vec<usize> = Vec::new();
    fn backtrack(candidates: &[Vec<Letter>], chosen: &mut Vec<usize>, start: usize, k: usize) -> bool {
        if chosen.len() == k {
            return true;
        }
        for idx in start..candidates.len() {
            if chosen
                .iter()
                .all(|&c| words_anticommute(&candidates[c], &candidates[idx]))
            {
                chosen.push(idx);
                if backtrack(candidates, chosen, idx + 1, k) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    if backtrack(&candidates, &mut chosen, 0, k) {
        Some(chosen.into_iter().map(|i| candidates[i].clone()).collect())
    } else {
        None
    }
}

fn word_matrix(w: &[Letter]) -> DMatrix<f64> {
    let mut m = DMatrix::from_element(1, 1, 1.0);
    for l in w {
        m = m.kronecker(&l.block());
    }
    m
}

fn block_diag(m: &DMatrix<f64>, copies: usize) -> DMatrix<f64> {
    let d = m.nrows();
    let mut out = DMatrix::zeros(d * copies, d * copies);
    for c in 0..copies {
        out.view_mut((c * d, c * d), (d, d)).copy_from(m);
    }
    out
}

/// Build the deterministic generator family with 2n = multiplicity * d(k).
pub fn build_generators(k: usize, multiplicity: usize) -> Result<CliffordModule> {
    if k == 0 || multiplicity == 0 {
        return Err(HtypeError::InvalidParameter(
            "k and multiplicity must be at least 1".into(),
        ));
    }
    let d = min_rep_dim(k);
    let len = d.trailing_zeros() as usize;
    let words = search_words(len, k).ok_or_else(|| {
        HtypeError::CliffordViolation(format!("no generator family of size {k} in dimension {d}"))
    })?;
    let generators: Vec<DMatrix<f64>> = words
        .iter()
        .map(|w| block_diag(&word_matrix(w), multiplicity))
        .collect();
    Ok(CliffordModule {
        k,
        n2: d * multiplicity,
        generators,
    })
}

impl CliffordModule {
    /// Wrap an explicit generator family, checking the Clifford relations.
    pub fn from_generators(generators: Vec<DMatrix<f64>>) -> Result<Self> {
        if generators.is_empty() {
            return Err(HtypeError::InvalidParameter("empty generator list".into()));
        }
        let n2 = generators[0].nrows();
        if n2 == 0 || n2 % 2 != 0 {
            return Err(HtypeError::InvalidParameter(
                "horizontal dimension must be a positive even integer".into(),
            ));
        }
        for g in &generators {
            if g.nrows() != n2 || g.ncols() != n2 {
                return Err(HtypeError::InvalidParameter(
                    "generators must be square matrices of a common size".into(),
                ));
            }
        }
        let module = CliffordModule {
            k: generators.len(),
            n2,
            generators,
        };
        let report = module.verify(1e-10);
        if !report.pass {
            return Err(HtypeError::CliffordViolation(format!(
                "antisymmetry residual {:.3e}, relation residual {:.3e}",
                report.max_antisymmetry_residual, report.max_relation_residual
            )));
        }
        Ok(module)
    }

    /// Dimension of the center.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Dimension 2n of the horizontal space.
    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn generators(&self) -> &[DMatrix<f64>] {
        &self.generators
    }

    pub fn generator(&self, i: usize) -> &DMatrix<f64> {
        &self.generators[i]
    }

    /// J_T for a center vector T = sum c_i theta^i.
    pub fn j_of(&self, coeffs: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n2, self.n2);
        for (c, g) in coeffs.iter().zip(&self.generators) {
            m += g * *c;
        }
        m
    }

    /// Residuals of antisymmetry and the polarized Clifford relation.
    pub fn verify(&self, tolerance: f64) -> VerificationReport {
        let n2 = self.n2;
        let id = DMatrix::<f64>::identity(n2, n2);
        let mut anti: f64 = 0.0;
        let mut rel: f64 = 0.0;
        for (i, ji) in self.generators.iter().enumerate() {
            anti = anti.max((ji.transpose() + ji).norm());
            for (j, jj) in self.generators.iter().enumerate() {
                let target = if i == j { &id * -2.0 } else { DMatrix::zeros(n2, n2) };
                rel = rel.max((ji * jj + jj * ji - target).norm());
            }
        }
        VerificationReport {
            max_antisymmetry_residual: anti,
            max_relation_residual: rel,
            tolerance,
            pass: anti <= tolerance && rel <= tolerance,
        }
    }

    /// Closure test of the Iwasawa condition: for each horizontal basis vector
    /// X and orthogonal center pair (i, j), J_i J_j X must lie in
    /// span{J_1 X, ..., J_k X}. Vacuously true for k = 1.
    pub fn is_iwasawa_type(&self, tolerance: f64) -> (bool, Option<IwasawaWitness>) {
        if self.k == 1 {
            return (true, None);
        }
        let mut worst: Option<IwasawaWitness> = None;
        for x in 0..self.n2 {
            let ex = DVector::from_fn(self.n2, |r, _| if r == x { 1.0 } else { 0.0 });
            // columns J_1 x .. J_k x
            let mut basis = DMatrix::zeros(self.n2, self.k);
            for (c, g) in self.generators.iter().enumerate() {
                basis.set_column(c, &(g * &ex));
            }
            let svd = basis.clone().svd(true, true);
            for i in 0..self.k {
                for j in (i + 1)..self.k {
                    let target = &self.generators[i] * (&self.generators[j] * &ex);
                    let coeffs = svd.solve(&target, 1e-13).expect("svd solve");
                    let residual = (&basis * coeffs - &target).norm();
                    if residual > tolerance {
                        let update = match &worst {
                            Some(w) => residual > w.residual,
                            None => true,
                        };
                        if update {
                            worst = Some(IwasawaWitness {
                                basis_vector: x,
                                center_pair: (i, j),
                                residual,
                            });
                        }
                    }
                }
            }
        }
        match worst {
            Some(w) => (false, Some(w)),
            None => (true, None),
        }
    }
}

// JSON schema: {"k": int, "n2": int, "generators": [[row-major floats]]}.
#[derive(Serialize, Deserialize)]
struct ModuleWire {
    k: usize,
    n2: usize,
    generators: Vec<Vec<f64>>,
}

impl Serialize for CliffordModule {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let wire = ModuleWire {
            k: self.k,
            n2: self.n2,
            generators: self
                .generators
                .iter()
                .map(|g| {
                    let mut row_major = Vec::with_capacity(self.n2 * self.n2);
                    for r in 0..self.n2 {
                        for c in 0..self.n2 {
                            row_major.push(g[(r, c)]);
                        }
                    }
                    row_major
                })
                .collect(),
        };
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CliffordModule {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let wire = ModuleWire::deserialize(deserializer)?;
        if wire.generators.len() != wire.k {
            return Err(D::Error::custom(format!(
                "field 'generators': expected {} matrices, got {}",
                wire.k,
                wire.generators.len()
            )));
        }
        let mut generators = Vec::with_capacity(wire.k);
        for (i, flat) in wire.generators.iter().enumerate() {
            if flat.len() != wire.n2 * wire.n2 {
                return Err(D::Error::custom(format!(
                    "field 'generators[{i}]': expected {} entries, got {}",
                    wire.n2 * wire.n2,
                    flat.len()
                )));
            }
            generators.push(DMatrix::from_row_slice(wire.n2, wire.n2, flat));
        }
        Ok(CliffordModule {
            k: wire.k,
            n2: wire.n2,
            generators,
        })
    }
}
