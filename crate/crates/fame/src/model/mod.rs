//! Model variants, parameter layout, forward inference, and exact
//! learnable-parameter counting.
//!
//! Ten variants share one flat parameter vector abstraction. The additive
//! family (FAM/FAME and their vanilla forms) runs one single-input TSK
//! subnetwork per reduced dimension and sums the outputs. The MFLS family
//! fires `P` rules over all antecedent inputs at once with a product
//! t-norm. Sculpted variants (FAME, *-MFLSE) replace free Gaussian banks
//! with [`SculptedPartition`]s.
//!
//! Every learnable deviation is stored unconstrained and realized as
//! `max(|raw|, SIGMA_MIN)`, so optimizer steps can never produce an
//! invalid membership function.

mod forward;
mod io;
mod layout;

pub use forward::{
    mfls_firing, sfls_forward, sfls_forward_fast, ForwardOutput, MflsAntecedents, MflsRuleBase,
};
pub use io::ModelIoError;
pub use layout::{Layout, ParamRef, Segment};

pub(crate) use forward::{EvalDetail, Realized, RealizedFl, SampleEval};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::membership::{GaussMF, SculptedPartition};

/// Guard added to the firing-strength sum before dividing, so inputs far
/// outside every MF still produce a finite output.
pub const EPS_DEN: f64 = 1e-12;

/// Floor on realized deviations.
pub const SIGMA_MIN: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown variant {name:?} (expected one of {})", Variant::NAMES.join(", "))]
    UnknownVariant { name: String },
    #[error("rule count P must be at least 1")]
    BadRuleCount,
    #[error("input dimension M must be at least 1")]
    BadInputDim,
    #[error("reduced dimension D must be at least 1 for {0}")]
    MissingReducedDim(&'static str),
    #[error("{variant} has no projection layer; D must be omitted or equal M (got D={d}, M={m})")]
    VanillaDimMismatch { variant: &'static str, d: usize, m: usize },
    #[error("input has {got} entries, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter vector has {got} entries, layout needs {expected}")]
    ParamLength { expected: usize, got: usize },
}

/// The ten supported model variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Fam,
    VFam,
    Fame,
    VFame,
    VMfls,
    CdrMfls,
    DrMfls,
    VMflse,
    CdrMflse,
    DrMflse,
}

/// Structural family of a variant: one subnetwork per dimension summed,
/// or a joint multi-input rule base.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Topology {
    Additive { sculpted: bool },
    Mfls { sculpted: bool, antecedents_on_z: bool, consequents_on_z: bool },
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Fam,
        Variant::VFam,
        Variant::Fame,
        Variant::VFame,
        Variant::VMfls,
        Variant::CdrMfls,
        Variant::DrMfls,
        Variant::VMflse,
        Variant::CdrMflse,
        Variant::DrMflse,
    ];

    pub const NAMES: [&'static str; 10] = [
        "FAM", "V-FAM", "FAME", "V-FAME", "V-MFLS", "CDR-MFLS", "DR-MFLS", "V-MFLSE",
        "CDR-MFLSE", "DR-MFLSE",
    ];

    pub fn name(&self) -> &'static str {
        Self::NAMES[*self as usize]
    }

    /// Case-insensitive parse of the canonical names.
    pub fn parse(s: &str) -> Result<Variant, ModelError> {
        let norm = s.trim().to_ascii_uppercase();
        Variant::ALL
            .iter()
            .find(|v| v.name() == norm)
            .copied()
            .ok_or_else(|| ModelError::UnknownVariant { name: s.to_owned() })
    }

    pub fn has_projection(&self) -> bool {
        matches!(
            self,
            Variant::Fam
                | Variant::Fame
                | Variant::CdrMfls
                | Variant::DrMfls
                | Variant::CdrMflse
                | Variant::DrMflse
        )
    }

    /// Additive variants decompose the output into per-dimension
    /// contributions.
    pub fn is_additive(&self) -> bool {
        matches!(self, Variant::Fam | Variant::VFam | Variant::Fame | Variant::VFame)
    }

    /// Sculpted variants derive their MF banks from coupled partitions.
    pub fn is_sculpted(&self) -> bool {
        matches!(
            self,
            Variant::Fame | Variant::VFame | Variant::VMflse | Variant::CdrMflse | Variant::DrMflse
        )
    }

    pub(crate) fn topology(&self) -> Topology {
        match self {
            Variant::Fam | Variant::VFam => Topology::Additive { sculpted: false },
            Variant::Fame | Variant::VFame => Topology::Additive { sculpted: true },
            Variant::VMfls => Topology::Mfls {
                sculpted: false,
                antecedents_on_z: false,
                consequents_on_z: false,
            },
            Variant::CdrMfls => Topology::Mfls {
                sculpted: false,
                antecedents_on_z: true,
                consequents_on_z: true,
            },
            Variant::DrMfls => Topology::Mfls {
                sculpted: false,
                antecedents_on_z: true,
                consequents_on_z: false,
            },
            Variant::VMflse => Topology::Mfls {
                sculpted: true,
                antecedents_on_z: false,
                consequents_on_z: false,
            },
            Variant::CdrMflse => Topology::Mfls {
                sculpted: true,
                antecedents_on_z: true,
                consequents_on_z: true,
            },
            Variant::DrMflse => Topology::Mfls {
                sculpted: true,
                antecedents_on_z: true,
                consequents_on_z: false,
            },
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::parse(s)
    }
}

impl Serialize for Variant {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Variant::parse(&s).map_err(D::Error::custom)
    }
}

/// A concrete model shape: variant plus rule count `P`, reduced dimension
/// `D`, and input dimension `M`. Vanilla variants have no projection, so
/// their effective `D` equals `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub p: usize,
    pub d: usize,
    pub m: usize,
}

impl ModelSpec {
    /// Builds a spec, forcing `d = m` for vanilla variants. `d` may only
    /// be omitted (or equal `m`) when the variant has no projection.
    pub fn new(
        variant: Variant,
        p: usize,
        d: Option<usize>,
        m: usize,
    ) -> Result<Self, ModelError> {
        if p == 0 {
            return Err(ModelError::BadRuleCount);
        }
        if m == 0 {
            return Err(ModelError::BadInputDim);
        }
        let d = if variant.has_projection() {
            match d {
                Some(d) if d >= 1 => d,
                _ => return Err(ModelError::MissingReducedDim(variant.name())),
            }
        } else {
            match d {
                None => m,
                Some(d) if d == m => m,
                Some(d) => {
                    return Err(ModelError::VanillaDimMismatch { variant: variant.name(), d, m })
                }
            }
        };
        Ok(Self { variant, p, d, m })
    }

    pub fn layout(&self) -> Layout {
        Layout::of(self)
    }

    /// Antecedent input width: `D` when antecedents act on the projected
    /// space, `M` otherwise.
    pub(crate) fn antecedent_dim(&self) -> usize {
        match self.variant.topology() {
            Topology::Additive { .. } => self.d,
            Topology::Mfls { antecedents_on_z, .. } => {
                if antecedents_on_z {
                    self.d
                } else {
                    self.m
                }
            }
        }
    }

    /// Consequent input width for the MFLS family.
    pub(crate) fn consequent_dim(&self) -> usize {
        match self.variant.topology() {
            Topology::Additive { .. } => 1,
            Topology::Mfls { consequents_on_z, .. } => {
                if consequents_on_z {
                    self.d
                } else {
                    self.m
                }
            }
        }
    }
}

/// Exact learnable-parameter count for a spec. Closed-form per variant;
/// independently cross-checked against the layout length in tests.
pub fn count_params(spec: &ModelSpec) -> usize {
    let (p, d, m) = (spec.p, spec.d, spec.m);
    let proj = (m + 1) * d;
    match spec.variant {
        Variant::Fam => 4 * p * d + proj,
        Variant::VFam => 4 * p * d,
        Variant::Fame => d * (3 * p + 2) + proj,
        Variant::VFame => d * (3 * p + 2),
        Variant::VMfls => p * (3 * m + 1),
        Variant::CdrMfls => p * (3 * d + 1) + proj,
        Variant::DrMfls => p * (2 * d + m + 1) + proj,
        Variant::VMflse => m * (2 * p + 2) + p,
        Variant::CdrMflse => d * (2 * p + 2) + p + proj,
        Variant::DrMflse => p * (d + m + 1) + 2 * d + proj,
    }
}

/// Linear projection `z = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    pub d: usize,
    pub m: usize,
    /// `D x M`, row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl ProjectionParams {
    pub fn new(d: usize, m: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self, ModelError> {
        if w.len() != d * m {
            return Err(ModelError::ParamLength { expected: d * m, got: w.len() });
        }
        if b.len() != d {
            return Err(ModelError::ParamLength { expected: d, got: b.len() });
        }
        Ok(Self { d, m, w, b })
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.m {
            return Err(ModelError::DimensionMismatch { expected: self.m, got: x.len() });
        }
        Ok(project_raw(&self.w, &self.b, self.d, self.m, x))
    }
}

pub(crate) fn project_raw(w: &[f64], b: &[f64], d: usize, m: usize, x: &[f64]) -> Vec<f64> {
    (0..d)
        .map(|i| {
            let row = &w[i * m..(i + 1) * m];
            row.iter().zip(x).map(|(wij, xj)| wij * xj).sum::<f64>() + b[i]
        })
        .collect()
}

/// One single-input TSK subnetwork with a free Gaussian bank.
#[derive(Debug, Clone, PartialEq)]
pub struct SflsFamParams {
    pub c: Vec<f64>,
    pub sigma: Vec<f64>,
    pub a: Vec<f64>,
    pub a0: Vec<f64>,
}

impl SflsFamParams {
    pub fn grade(&self, p: usize, z: f64) -> f64 {
        GaussMF { c: self.c[p], sigma: self.sigma[p] }.grade(z)
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }
}

/// One single-input TSK subnetwork whose MF bank is a sculpted partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SflsFameParams {
    pub partition: SculptedPartition,
    pub a: Vec<f64>,
    pub a0: Vec<f64>,
}

/// Realized per-dimension subnetwork parameters of an additive model.
#[derive(Debug, Clone, PartialEq)]
pub enum SflsParams {
    Fam(SflsFamParams),
    Fame(SflsFameParams),
}

/// A concrete model: spec plus the flat vector of unconstrained
/// learnables. Deviations live in the vector in raw (signed) form.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    spec: ModelSpec,
    layout: Layout,
    raw: Vec<f64>,
}

impl ModelParams {
    pub fn new(spec: ModelSpec, raw: Vec<f64>) -> Result<Self, ModelError> {
        let layout = spec.layout();
        if raw.len() != layout.total() {
            return Err(ModelError::ParamLength { expected: layout.total(), got: raw.len() });
        }
        Ok(Self { spec, layout, raw })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.raw
    }

    pub(crate) fn seg(&self, name: &str) -> &[f64] {
        let seg = self.layout.seg(name).expect("segment present for this variant");
        &self.raw[seg.offset()..seg.offset() + seg.len()]
    }

    /// Realized deviation for a raw value: `max(|raw|, SIGMA_MIN)`.
    pub fn realize_sigma(raw: f64) -> f64 {
        raw.abs().max(SIGMA_MIN)
    }

    /// The projection layer, if this variant has one.
    pub fn projection(&self) -> Option<ProjectionParams> {
        if !self.spec.variant.has_projection() {
            return None;
        }
        Some(ProjectionParams {
            d: self.spec.d,
            m: self.spec.m,
            w: self.seg("W").to_vec(),
            b: self.seg("b").to_vec(),
        })
    }

    /// Realized subnetwork of an additive variant for one reduced
    /// dimension. Panics for MFLS variants.
    pub fn sfls(&self, dim: usize) -> SflsParams {
        let p = self.spec.p;
        let take = |name: &str| self.seg(name)[dim * p..(dim + 1) * p].to_vec();
        match self.spec.variant.topology() {
            Topology::Additive { sculpted: false } => SflsParams::Fam(SflsFamParams {
                c: take("c"),
                sigma: take("sigma").iter().map(|&s| Self::realize_sigma(s)).collect(),
                a: take("a"),
                a0: take("a0"),
            }),
            Topology::Additive { sculpted: true } => SflsParams::Fame(SflsFameParams {
                partition: self.partition_for(dim),
                a: take("a"),
                a0: take("a0"),
            }),
            Topology::Mfls { .. } => panic!("sfls() is only defined for additive variants"),
        }
    }

    /// Realized sculpted partition for one antecedent dimension of a
    /// sculpted variant.
    pub(crate) fn partition_for(&self, dim: usize) -> SculptedPartition {
        let p = self.spec.p;
        let c1 = self.seg("c1")[dim];
        let sigma_l1 = Self::realize_sigma(self.seg("sigma_l1")[dim]);
        let sigma_r: Vec<f64> =
            self.seg("sigma_r")[dim * p..(dim + 1) * p].iter().map(|&s| Self::realize_sigma(s)).collect();
        SculptedPartition::sculpt(c1, sigma_l1, sigma_r)
            .expect("realized deviations are positive")
    }

    /// Number of antecedent input dimensions: `D` when antecedents read
    /// the projected space, `M` otherwise.
    pub fn n_antecedent_dims(&self) -> usize {
        self.spec.antecedent_dim()
    }

    /// The values the antecedent MFs see for input `x`: the projection
    /// output for projected variants, `x` itself otherwise.
    pub fn antecedent_values(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.spec.m {
            return Err(ModelError::DimensionMismatch { expected: self.spec.m, got: x.len() });
        }
        if self.spec.variant.has_projection() {
            Ok(project_raw(self.seg("W"), self.seg("b"), self.spec.d, self.spec.m, x))
        } else {
            Ok(x.to_vec())
        }
    }

    /// Realized MF bank of one antecedent dimension.
    pub fn dim_mfs(&self, dim: usize) -> DimMfs {
        let p = self.spec.p;
        if self.spec.variant.is_sculpted() {
            return DimMfs::Sculpted(self.partition_for(dim));
        }
        match self.spec.variant.topology() {
            Topology::Additive { .. } => {
                let c = &self.seg("c")[dim * p..(dim + 1) * p];
                let sigma = &self.seg("sigma")[dim * p..(dim + 1) * p];
                DimMfs::Gauss(
                    c.iter()
                        .zip(sigma)
                        .map(|(&c, &s)| GaussMF { c, sigma: Self::realize_sigma(s) })
                        .collect(),
                )
            }
            Topology::Mfls { .. } => {
                let d_a = self.spec.antecedent_dim();
                let c = self.seg("ant_c");
                let sigma = self.seg("ant_sigma");
                DimMfs::Gauss(
                    (0..p)
                        .map(|rule| GaussMF {
                            c: c[rule * d_a + dim],
                            sigma: Self::realize_sigma(sigma[rule * d_a + dim]),
                        })
                        .collect(),
                )
            }
        }
    }
}

/// Realized MF bank of one antecedent dimension, for inspection and
/// curve export.
#[derive(Debug, Clone)]
pub enum DimMfs {
    Gauss(Vec<GaussMF>),
    Sculpted(SculptedPartition),
}

impl DimMfs {
    pub fn len(&self) -> usize {
        match self {
            DimMfs::Gauss(mfs) => mfs.len(),
            DimMfs::Sculpted(part) => part.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn grade(&self, p: usize, z: f64) -> f64 {
        match self {
            DimMfs::Gauss(mfs) => mfs[p].grade(z),
            DimMfs::Sculpted(part) => part.grade(p, z),
        }
    }
}
