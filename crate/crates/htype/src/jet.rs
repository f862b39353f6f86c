//! Second-order forward-mode derivative arithmetic and scalar-field families.
//!
//! A [`Jet2`] carries a value together with its full coordinate gradient and
//! Hessian. Built-in field families propagate exact jets, so the curvature
//! pipeline never sees finite-difference noise from its scalar inputs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::group::GroupPoint;
use crate::{HtypeError, Result};

/// Value, gradient and Hessian of a scalar function at a point.
#[derive(Debug, Clone)]
pub struct Jet2 {
    pub v: f64,
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
}

impl Jet2 {
    pub fn constant(dim: usize, v: f64) -> Self {
        Jet2 {
            v,
            g: DVector::zeros(dim),
            h: DMatrix::zeros(dim, dim),
        }
    }

    /// The i-th coordinate function.
    pub fn coordinate(dim: usize, i: usize, value: f64) -> Self {
        let mut g = DVector::zeros(dim);
        g[i] = 1.0;
        Jet2 {
            v: value,
            g,
            h: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn add(&self, o: &Jet2) -> Jet2 {
        Jet2 {
            v: self.v + o.v,
            g: &self.g + &o.g,
            h: &self.h + &o.h,
        }
    }

    pub fn sub(&self, o: &Jet2) -> Jet2 {
        Jet2 {
            v: self.v - o.v,
            g: &self.g - &o.g,
            h: &self.h - &o.h,
        }
    }

    pub fn scale(&self, c: f64) -> Jet2 {
        Jet2 {
            v: self.v * c,
            g: &self.g * c,
            h: &self.h * c,
        }
    }

    pub fn mul(&self, o: &Jet2) -> Jet2 {
        Jet2 {
            v: self.v * o.v,
            g: &self.g * o.v + &o.g * self.v,
            h: &self.h * o.v
                + &o.h * self.v
                + &self.g * o.g.transpose()
                + &o.g * self.g.transpose(),
        }
    }

    /// Chain rule through a scalar function with derivatives d1, d2 at self.v.
    pub fn compose(&self, value: f64, d1: f64, d2: f64) -> Jet2 {
        Jet2 {
            v: value,
            g: &self.g * d1,
            h: &self.h * d1 + &self.g * self.g.transpose() * d2,
        }
    }

    pub fn powf(&self, a: f64) -> Jet2 {
        let v = self.v.powf(a);
        self.compose(v, a * self.v.powf(a - 1.0), a * (a - 1.0) * self.v.powf(a - 2.0))
    }

    pub fn recip(&self) -> Jet2 {
        let v = 1.0 / self.v;
        self.compose(v, -v * v, 2.0 * v * v * v)
    }

    pub fn exp(&self) -> Jet2 {
        let v = self.v.exp();
        self.compose(v, v, v)
    }
}

/// A scalar function with exact first and second coordinate derivatives.
pub trait ScalarField {
    fn jet(&self, p: &GroupPoint) -> Jet2;

    fn value(&self, p: &GroupPoint) -> f64 {
        self.jet(p).v
    }
}

/// A single Gaussian bump amp * exp(-|p - center|^2 / (2 width^2)).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Bump {
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub width: f64,
}

/// Closed set of field families with analytically exact jets.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum FieldSpec {
    /// Constant value.
    Const { value: f64 },
    /// The extremal profile U(x,t) = C ((1+|x|^2)^2 + 16|t|^2)^(-(Q-2)/4).
    GvProfile { c: f64 },
    /// The conformal factor U^(4/(Q-2)) = C^(4/(Q-2)) / ((1+|x|^2)^2 + 16|t|^2).
    GvConformal { c: f64 },
    /// offset + sum of Gaussian bumps; positive when offset > 0 and amplitudes >= 0.
    Gaussian { offset: f64, bumps: Vec<Bump> },
    /// Affine function c0 + sum_i a_i p_i.
    Poly { c0: f64, linear: Vec<f64> },
    /// Pointwise product of two fields.
    Product(Box<FieldSpec>, Box<FieldSpec>),
    /// Pointwise power of a (positive) field.
    Power { base: Box<FieldSpec>, exponent: f64 },
}

/// (1+|x|^2)^2 + 16|t|^2 as a jet.
fn gv_denominator(p: &GroupPoint) -> Jet2 {
    let dim = p.dim();
    let n2 = p.x.len();
    let x2 = p.x.norm_squared();
    let t2 = p.t.norm_squared();
    let v = (1.0 + x2) * (1.0 + x2) + 16.0 * t2;
    let mut g = DVector::zeros(dim);
    let mut h = DMatrix::zeros(dim, dim);
    for a in 0..n2 {
        g[a] = 4.0 * (1.0 + x2) * p.x[a];
        for b in 0..n2 {
            h[(a, b)] = 8.0 * p.x[a] * p.x[b];
        }
        h[(a, a)] += 4.0 * (1.0 + x2);
    }
    for j in 0..p.t.len() {
        g[n2 + j] = 32.0 * p.t[j];
        h[(n2 + j, n2 + j)] = 32.0;
    }
    Jet2 { v, g, h }
}

impl FieldSpec {
    /// Exponent -(Q-2)/4 for the profile at this point's dimensions.
    fn profile_exponent(p: &GroupPoint) -> f64 {
        let q = (p.x.len() + 2 * p.t.len()) as f64;
        -(q - 2.0) / 4.0
    }

    /// Deterministic random positive field: 1 + seeded Gaussian bumps in the
    /// sampling box, with bounded amplitudes and O(1) widths.
    pub fn random_positive(n2: usize, k: usize, seed: u64, count: usize) -> FieldSpec {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dim = n2 + k;
        let bumps = (0..count)
            .map(|_| Bump {
                amplitude: 0.2 + 0.4 * rng.random::<f64>(),
                center: (0..dim).map(|_| 3.0 * rng.random::<f64>() - 1.5).collect(),
                width: 0.9 + 0.7 * rng.random::<f64>(),
            })
            .collect();
        FieldSpec::Gaussian { offset: 1.0, bumps }
    }

    /// Parse the CLI form, e.g. `gv-profile:2.5`, `gaussian:7:3`,
    /// `poly:1.0:0.5,0,0`, `const:2`, or a `*`-separated product.
    pub fn parse(s: &str, n2: usize, k: usize) -> Result<FieldSpec> {
        if let Some((a, b)) = s.split_once('*') {
            return Ok(FieldSpec::Product(
                Box::new(FieldSpec::parse(a, n2, k)?),
                Box::new(FieldSpec::parse(b, n2, k)?),
            ));
        }
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or("");
        let args: Vec<&str> = parts.collect();
        let bad = |msg: &str| HtypeError::InvalidParameter(format!("field spec '{s}': {msg}"));
        let parse_f = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| bad(&format!("bad number '{t}'")))
        };
        match name {
            "const" => Ok(FieldSpec::Const {
                value: parse_f(args.first().ok_or_else(|| bad("missing value"))?)?,
            }),
            "gv-profile" => Ok(FieldSpec::GvProfile {
                c: args.first().map(|a| parse_f(a)).transpose()?.unwrap_or(1.0),
            }),
            "gv-conformal" => Ok(FieldSpec::GvConformal {
                c: args.first().map(|a| parse_f(a)).transpose()?.unwrap_or(1.0),
            }),
            "gaussian" => {
                let seed = args
                    .first()
                    .ok_or_else(|| bad("missing seed"))?
                    .parse::<u64>()
                    .map_err(|_| bad("bad seed"))?;
                let count = args
                    .get(1)
                    .map(|a| a.parse::<usize>().map_err(|_| bad("bad bump count")))
                    .transpose()?
                    .unwrap_or(3);
                Ok(FieldSpec::random_positive(n2, k, seed, count))
            }
            "poly" => {
                let c0 = parse_f(args.first().ok_or_else(|| bad("missing constant term"))?)?;
                let linear: Vec<f64> = match args.get(1) {
                    Some(l) => l
                        .split(',')
                        .map(parse_f)
                        .collect::<Result<Vec<f64>>>()?,
                    None => vec![0.0; n2 + k],
                };
                if linear.len() != n2 + k {
                    return Err(bad(&format!("expected {} linear coefficients", n2 + k)));
                }
                Ok(FieldSpec::Poly { c0, linear })
            }
            _ => Err(bad("unknown family (const, gv-profile, gv-conformal, gaussian, poly)")),
        }
    }
}

impl ScalarField for FieldSpec {
    fn jet(&self, p: &GroupPoint) -> Jet2 {
        let dim = p.dim();
        match self {
            FieldSpec::Const { value } => Jet2::constant(dim, *value),
            FieldSpec::GvProfile { c } => gv_denominator(p)
                .powf(FieldSpec::profile_exponent(p))
                .scale(*c),
            FieldSpec::GvConformal { c } => {
                let q = (p.x.len() + 2 * p.t.len()) as f64;
                gv_denominator(p).recip().scale(c.powf(4.0 / (q - 2.0)))
            }
            FieldSpec::Gaussian { offset, bumps } => {
                let mut acc = Jet2::constant(dim, *offset);
                for b in bumps {
                    // -|p - c|^2 / (2 w^2) as a jet, then exp
                    let coords = p.coords();
                    let s = -1.0 / (2.0 * b.width * b.width);
                    let mut arg = Jet2::constant(dim, 0.0);
                    for i in 0..dim {
                        let d = coords[i] - b.center[i];
                        arg.v += s * d * d;
                        arg.g[i] = 2.0 * s * d;
                        arg.h[(i, i)] = 2.0 * s;
                    }
                    acc = acc.add(&arg.exp().scale(b.amplitude));
                }
                acc
            }
            FieldSpec::Poly { c0, linear } => {
                let coords = p.coords();
                let g = DVector::from_column_slice(linear);
                Jet2 {
                    v: c0 + g.dot(&coords),
                    g,
                    h: DMatrix::zeros(dim, dim),
                }
            }
            FieldSpec::Product(a, b) => a.jet(p).mul(&b.jet(p)),
            FieldSpec::Power { base, exponent } => base.jet(p).powf(*exponent),
        }
    }
}

/// A field precomposed with an affine map p -> A p + b of coordinates,
/// e.g. a left translation or a dilation.
pub struct AffinePullback<F: ScalarField> {
    pub inner: F,
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub n2: usize,
    pub k: usize,
}

impl<F: ScalarField> ScalarField for AffinePullback<F> {
    fn jet(&self, p: &GroupPoint) -> Jet2 {
        let q = &self.matrix * p.coords() + &self.offset;
        let qp = GroupPoint::from_coords(&q, self.n2, self.k);
        let inner = self.inner.jet(&qp);
        Jet2 {
            v: inner.v,
            g: self.matrix.transpose() * &inner.g,
            h: self.matrix.transpose() * &inner.h * &self.matrix,
        }
    }
}
