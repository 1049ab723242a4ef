//! Convex calculus for products of zero, orthant, second-order and PSD cones.
//!
//! Every operation decomposes over the blocks of a [`ProductCone`]. The facial
//! machinery (critical cones, directional derivatives of the projection,
//! sigma terms, graphical-derivative membership) lives in [`face`].

pub mod face;
mod orthant;
mod psd;
mod soc;
pub mod svec;

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

pub use face::{BlockFace, FaceDescriptor, OrthantClass, PsdFace, SocFace};

/// Default rank/activity tolerance.
pub const DEFAULT_TOL_RANK: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    NonPos,
    NonNeg,
}

impl Sign {
    /// `s` such that the orthant is `{y : s·y ≥ 0}`.
    pub fn factor(self) -> f64 {
        match self {
            Sign::NonPos => -1.0,
            Sign::NonNeg => 1.0,
        }
    }
}

/// One factor of a product cone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConeBlock {
    /// `{0} ⊂ ℝᵐ`.
    Zero { dim: usize },
    Orthant { dim: usize, sign: Sign },
    /// `{(t, u) ∈ ℝ × ℝᵐ⁻¹ : ‖u‖ ≤ t}`.
    SecondOrder { dim: usize },
    /// `n×n` PSD matrices stored through [`svec`] in `n(n+1)/2` coordinates.
    Psd { order: usize },
}

impl ConeBlock {
    pub fn dim(&self) -> usize {
        match *self {
            ConeBlock::Zero { dim } | ConeBlock::Orthant { dim, .. } | ConeBlock::SecondOrder { dim } => dim,
            ConeBlock::Psd { order } => svec::svec_len(order),
        }
    }

    pub fn is_polyhedral(&self) -> bool {
        matches!(self, ConeBlock::Zero { .. } | ConeBlock::Orthant { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ConeBlock::Zero { .. } => "zero",
            ConeBlock::Orthant { sign: Sign::NonPos, .. } => "orthant_nonpos",
            ConeBlock::Orthant { sign: Sign::NonNeg, .. } => "orthant_nonneg",
            ConeBlock::SecondOrder { .. } => "soc",
            ConeBlock::Psd { .. } => "psd",
        }
    }
}

impl fmt::Display for ConeBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConeBlock::Zero { dim } => write!(f, "Zero({dim})"),
            ConeBlock::Orthant { dim, sign: Sign::NonPos } => write!(f, "Orthant({dim}, <=0)"),
            ConeBlock::Orthant { dim, sign: Sign::NonNeg } => write!(f, "Orthant({dim}, >=0)"),
            ConeBlock::SecondOrder { dim } => write!(f, "SecondOrder({dim})"),
            ConeBlock::Psd { order } => write!(f, "PSD({order})"),
        }
    }
}

/// Ordered product of cone blocks with contiguous coordinate ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ConeBlock>", into = "Vec<ConeBlock>")]
pub struct ProductCone {
    blocks: Vec<ConeBlock>,
    offsets: Vec<usize>,
    total_dim: usize,
}

impl TryFrom<Vec<ConeBlock>> for ProductCone {
    type Error = Error;
    fn try_from(blocks: Vec<ConeBlock>) -> Result<Self> {
        ProductCone::new(blocks)
    }
}

impl From<ProductCone> for Vec<ConeBlock> {
    fn from(k: ProductCone) -> Self {
        k.blocks
    }
}

impl ProductCone {
    pub fn new(blocks: Vec<ConeBlock>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut total = 0;
        for b in &blocks {
            if b.dim() == 0 {
                return Err(Error::InvalidBlock(format!("{b} has no coordinates")));
            }
            offsets.push(total);
            total += b.dim();
        }
        Ok(ProductCone { blocks, offsets, total_dim: total })
    }

    pub fn single(block: ConeBlock) -> Self {
        ProductCone::new(vec![block]).expect("single block with dim >= 1")
    }

    pub fn blocks(&self) -> &[ConeBlock] {
        &self.blocks
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn is_polyhedral(&self) -> bool {
        self.blocks.iter().all(ConeBlock::is_polyhedral)
    }

    /// `(block index, block, coordinate range)` for every block.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &ConeBlock, Range<usize>)> + '_ {
        self.blocks
            .iter()
            .zip(&self.offsets)
            .enumerate()
            .map(|(i, (b, &o))| (i, b, o..o + b.dim()))
    }

    pub(crate) fn check_len(&self, v: &Vector, context: &'static str) -> Result<()> {
        if v.len() != self.total_dim {
            return Err(Error::DimensionMismatch { context, expected: self.total_dim, got: v.len() });
        }
        Ok(())
    }

    /// Euclidean projection `Π_K(z)`.
    pub fn project(&self, z: &Vector) -> Result<Vector> {
        self.check_len(z, "project")?;
        let mut out = Vector::zeros(self.total_dim);
        for (i, block, r) in self.iter() {
            let zs = &z.as_slice()[r.clone()];
            let os = &mut out.as_mut_slice()[r];
            match *block {
                ConeBlock::Zero { .. } => os.iter_mut().for_each(|o| *o = 0.0),
                ConeBlock::Orthant { sign, .. } => orthant::project(sign.factor(), zs, os),
                ConeBlock::SecondOrder { .. } => soc::project(zs, os),
                ConeBlock::Psd { order } => {
                    let p = psd::project(zs, order).ok_or(eigen_err(i))?;
                    os.copy_from_slice(p.as_slice());
                }
            }
        }
        Ok(out)
    }

    /// Projection onto the polar cone through the Moreau identity `z − Π_K(z)`.
    pub fn project_polar(&self, z: &Vector) -> Result<Vector> {
        Ok(z - self.project(z)?)
    }

    /// Projection onto the polar cone by the blockwise closed forms, without
    /// going through `Π_K`.
    pub fn project_polar_direct(&self, z: &Vector) -> Result<Vector> {
        self.check_len(z, "project_polar_direct")?;
        let mut out = Vector::zeros(self.total_dim);
        for (i, block, r) in self.iter() {
            let zs = &z.as_slice()[r.clone()];
            let os = &mut out.as_mut_slice()[r];
            match *block {
                ConeBlock::Zero { .. } => os.copy_from_slice(zs),
                ConeBlock::Orthant { sign, .. } => orthant::project_polar(sign.factor(), zs, os),
                ConeBlock::SecondOrder { .. } => soc::project_polar(zs, os),
                ConeBlock::Psd { order } => {
                    let p = psd::project_polar(zs, order).ok_or(eigen_err(i))?;
                    os.copy_from_slice(p.as_slice());
                }
            }
        }
        Ok(out)
    }

    /// Largest blockwise infeasibility of `y`, with the offending block index.
    pub fn violation(&self, y: &Vector) -> Result<(usize, f64)> {
        self.check_len(y, "violation")?;
        let mut worst = (0, 0.0_f64);
        for (i, block, r) in self.iter() {
            let ys = &y.as_slice()[r];
            let v = match *block {
                ConeBlock::Zero { .. } => ys.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
                ConeBlock::Orthant { sign, .. } => {
                    ys.iter().fold(0.0_f64, |m, x| m.max(-sign.factor() * x))
                }
                ConeBlock::SecondOrder { .. } => soc::violation(ys),
                ConeBlock::Psd { order } => psd::violation(ys, order).ok_or(eigen_err(i))?,
            };
            if v > worst.1 {
                worst = (i, v);
            }
        }
        Ok(worst)
    }

    /// `λ ∈ N_K(y)` tested through the projection identity `y = Π_K(y + λ)`.
    ///
    /// Errors if `y` itself is infeasible beyond `tol`.
    pub fn normal_cone_contains(&self, y: &Vector, lambda: &Vector, tol: f64) -> Result<bool> {
        self.check_len(y, "normal_cone_contains")?;
        self.check_len(lambda, "normal_cone_contains")?;
        let (block, violation) = self.violation(y)?;
        if violation > tol * (1.0 + y.norm()) {
            return Err(Error::Infeasible { block, violation });
        }
        let res = (y - self.project(&(y + lambda))?).norm();
        Ok(res <= tol * (1.0 + y.norm() + lambda.norm()))
    }

    /// An element of the generalized (Clarke) Jacobian of `Π_K` at `z`.
    pub fn projection_jacobian(&self, z: &Vector) -> Result<Matrix> {
        self.check_len(z, "projection_jacobian")?;
        let mut j = Matrix::zeros(self.total_dim, self.total_dim);
        for (i, block, r) in self.iter() {
            let zs = &z.as_slice()[r.clone()];
            let d = r.len();
            let blockj = match *block {
                ConeBlock::Zero { .. } => Matrix::zeros(d, d),
                ConeBlock::Orthant { sign, .. } => {
                    Matrix::from_diagonal(&Vector::from_vec(orthant::jacobian_diag(sign.factor(), zs)))
                }
                ConeBlock::SecondOrder { .. } => soc::jacobian(zs),
                ConeBlock::Psd { order } => psd::jacobian(zs, order).ok_or(eigen_err(i))?,
            };
            j.view_mut((r.start, r.start), (d, d)).copy_from(&blockj);
        }
        Ok(j)
    }

    /// Directional derivative `Π'_K(z; h)`, evaluated through the face of
    /// `(Π_K(z), z − Π_K(z))`.
    pub fn proj_dirderiv(&self, z: &Vector, h: &Vector) -> Result<Vector> {
        self.check_len(h, "proj_dirderiv")?;
        let fd = FaceDescriptor::at_projection(self, z, DEFAULT_TOL_RANK)?;
        fd.proj_dirderiv(h)
    }

    /// Membership `Δλ ∈ DN_K(z̄|μ̄)(Δy)`, decided by both the projection
    /// derivative identity and the facial three-condition system.
    pub fn normal_graph_deriv_contains(
        &self,
        zbar: &Vector,
        mubar: &Vector,
        dy: &Vector,
        dlam: &Vector,
        tol: f64,
    ) -> Result<bool> {
        let fd = FaceDescriptor::new(self, zbar, mubar, DEFAULT_TOL_RANK)?;
        fd.normal_graph_deriv_contains(dy, dlam, tol)
    }
}

fn eigen_err(block: usize) -> Error {
    Error::EigenNoConvergence { block, sweeps: crate::linalg::JACOBI_MAX_SWEEPS }
}
