//! Forward inference for the additive and MFLS families.
//!
//! The TSK quotient shares one implementation: grades (or firing
//! strengths) weight rule consequents, and the sum is divided by the
//! grade total plus [`EPS_DEN`]. The sculpted fast path restricts the
//! quotient to the two rules adjacent to the input's interval; its
//! accumulation order matches the full path so a two-rule model produces
//! bit-identical results on both paths.

use crate::membership::{GaussMF, SculptedPartition};

use super::{
    project_raw, ModelError, ModelParams, ModelSpec, SflsFameParams, SflsParams, Topology, EPS_DEN,
};

/// Prediction plus its per-dimension decomposition. Additive variants
/// report one contribution per reduced dimension whose sum equals
/// `yhat`; MFLS variants report the single aggregated output.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub yhat: f64,
    pub contributions: Vec<f64>,
}

/// Full TSK quotient over every rule of one single-input subnetwork.
pub fn sfls_forward(z: f64, params: &SflsParams) -> f64 {
    match params {
        SflsParams::Fam(p) => {
            let grades: Vec<f64> = (0..p.len()).map(|i| p.grade(i, z)).collect();
            quotient(&grades, &p.a, &p.a0, z).y
        }
        SflsParams::Fame(p) => sfls_fame_full(z, p).y,
    }
}

/// Two-rule fast path over a sculpted subnetwork: evaluates only the
/// rules adjacent to the interval containing `z`.
pub fn sfls_forward_fast(z: f64, params: &SflsFameParams) -> f64 {
    let (lo, hi) = params.partition.active_pair(z);
    let mut s = 0.0;
    let mut t = 0.0;
    for p in lo..=hi {
        let mu = params.partition.grade(p, z);
        s += mu;
        t += mu * (params.a[p] * z + params.a0[p]);
    }
    t / (s + EPS_DEN)
}

/// Rule firing strengths of a multi-input rule base: the product t-norm
/// of the per-dimension grades. `v` must have `d_a` entries.
pub fn mfls_firing(v: &[f64], rules: &MflsRuleBase) -> Vec<f64> {
    debug_assert_eq!(v.len(), rules.d_a);
    (0..rules.p)
        .map(|p| (0..rules.d_a).map(|m| rules.grade(p, m, v[m])).product())
        .collect()
}

/// Evaluation cache of one single-input subnetwork at one input.
#[derive(Debug, Clone)]
pub(crate) struct SflsEval {
    pub grades: Vec<f64>,
    /// Grade sum including the guard.
    pub s: f64,
    /// Per-rule consequent values `a_p z + a0_p`.
    pub rule_out: Vec<f64>,
    pub y: f64,
}

pub(crate) fn quotient(grades: &[f64], a: &[f64], a0: &[f64], z: f64) -> SflsEval {
    let s = grades.iter().sum::<f64>() + EPS_DEN;
    let rule_out: Vec<f64> = a.iter().zip(a0).map(|(&ap, &a0p)| ap * z + a0p).collect();
    let t: f64 = grades.iter().zip(&rule_out).map(|(&mu, &y)| mu * y).sum();
    SflsEval { grades: grades.to_vec(), s, rule_out: rule_out.clone(), y: t / s }
}

pub(crate) fn sfls_fame_full(z: f64, p: &SflsFameParams) -> SflsEval {
    let grades: Vec<f64> = (0..p.partition.len()).map(|i| p.partition.grade(i, z)).collect();
    quotient(&grades, &p.a, &p.a0, z)
}

/// Antecedent MF bank of a multi-input rule base. For the Gaussian kind,
/// centers and deviations are `P x d_a` row-major (already realized).
/// For the sculpted kind each antecedent dimension carries its own
/// partition and rule `p` uses MF `p` of every dimension.
#[derive(Debug, Clone)]
pub enum MflsAntecedents {
    Gauss { c: Vec<f64>, sigma: Vec<f64> },
    Sculpted(Vec<SculptedPartition>),
}

/// Realized multi-input TSK rule base: `P` rules over `d_a` antecedent
/// inputs with consequents linear in `d_c` inputs.
#[derive(Debug, Clone)]
pub struct MflsRuleBase {
    pub antecedents: MflsAntecedents,
    /// `P x d_c`, row-major.
    pub cons_w: Vec<f64>,
    pub cons_w0: Vec<f64>,
    pub p: usize,
    pub d_a: usize,
    pub d_c: usize,
}

impl MflsRuleBase {
    /// Grade of rule `p`'s MF for antecedent dimension `m` at value `v`.
    pub fn grade(&self, p: usize, m: usize, v: f64) -> f64 {
        match &self.antecedents {
            MflsAntecedents::Gauss { c, sigma } => {
                let idx = p * self.d_a + m;
                GaussMF { c: c[idx], sigma: sigma[idx] }.grade(v)
            }
            MflsAntecedents::Sculpted(parts) => parts[m].grade(p, v),
        }
    }

    /// Consequent value of rule `p` for consequent input `u`.
    pub fn consequent(&self, p: usize, u: &[f64]) -> f64 {
        let row = &self.cons_w[p * self.d_c..(p + 1) * self.d_c];
        row.iter().zip(u).map(|(w, x)| w * x).sum::<f64>() + self.cons_w0[p]
    }
}

/// Realized (constraint-satisfying) view of a model, built once and then
/// evaluated on many samples.
#[derive(Debug, Clone)]
pub(crate) struct Realized {
    pub spec: ModelSpec,
    pub w: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    pub fl: RealizedFl,
}

#[derive(Debug, Clone)]
pub(crate) enum RealizedFl {
    /// Per-dimension Gaussian subnetworks; all fields `D x P` row-major.
    AdditiveGauss { c: Vec<f64>, sigma: Vec<f64>, a: Vec<f64>, a0: Vec<f64> },
    /// Per-dimension sculpted subnetworks; `a`/`a0` are `D x P`.
    AdditiveSculpted { parts: Vec<SculptedPartition>, a: Vec<f64>, a0: Vec<f64> },
    Mfls(MflsRuleBase),
}

/// Per-sample evaluation cache shared by forward and backward.
#[derive(Debug, Clone)]
pub(crate) struct SampleEval {
    /// Projection output, present iff the variant has a projection.
    pub z: Option<Vec<f64>>,
    pub out: ForwardOutput,
    pub detail: EvalDetail,
}

#[derive(Debug, Clone)]
pub(crate) enum EvalDetail {
    Additive(Vec<SflsEval>),
    Mfls {
        /// `P x d_a` grades, row-major.
        grades: Vec<f64>,
        firing: Vec<f64>,
        /// Firing sum including the guard.
        s: f64,
        /// Per-rule consequent values.
        q: Vec<f64>,
    },
}

impl Realized {
    pub fn forward(&self, x: &[f64]) -> ForwardOutput {
        self.eval(x).out
    }

    pub fn eval(&self, x: &[f64]) -> SampleEval {
        debug_assert_eq!(x.len(), self.spec.m);
        let z = self
            .w
            .as_ref()
            .map(|w| project_raw(w, self.b.as_ref().unwrap(), self.spec.d, self.spec.m, x));
        let reduced: &[f64] = z.as_deref().unwrap_or(x);
        match &self.fl {
            RealizedFl::AdditiveGauss { c, sigma, a, a0 } => {
                let p = self.spec.p;
                let dims: Vec<SflsEval> = (0..self.spec.d)
                    .map(|i| {
                        let zi = reduced[i];
                        let grades: Vec<f64> = (0..p)
                            .map(|j| {
                                GaussMF { c: c[i * p + j], sigma: sigma[i * p + j] }.grade(zi)
                            })
                            .collect();
                        quotient(&grades, &a[i * p..(i + 1) * p], &a0[i * p..(i + 1) * p], zi)
                    })
                    .collect();
                self.additive_output(z, dims)
            }
            RealizedFl::AdditiveSculpted { parts, a, a0 } => {
                let p = self.spec.p;
                let dims: Vec<SflsEval> = (0..self.spec.d)
                    .map(|i| {
                        let zi = reduced[i];
                        let grades: Vec<f64> = (0..p).map(|j| parts[i].grade(j, zi)).collect();
                        quotient(&grades, &a[i * p..(i + 1) * p], &a0[i * p..(i + 1) * p], zi)
                    })
                    .collect();
                self.additive_output(z, dims)
            }
            RealizedFl::Mfls(rules) => {
                let (ant_on_z, cons_on_z) = match self.spec.variant.topology() {
                    Topology::Mfls { antecedents_on_z, consequents_on_z, .. } => {
                        (antecedents_on_z, consequents_on_z)
                    }
                    Topology::Additive { .. } => unreachable!("additive spec with MFLS params"),
                };
                let v: &[f64] = if ant_on_z { reduced } else { x };
                let u: &[f64] = if cons_on_z { reduced } else { x };
                let firing = mfls_firing(v, rules);
                let s = firing.iter().sum::<f64>() + EPS_DEN;
                let q: Vec<f64> = (0..rules.p).map(|p| rules.consequent(p, u)).collect();
                let yhat = firing.iter().zip(&q).map(|(&f, &qp)| f * qp).sum::<f64>() / s;
                let grades: Vec<f64> = (0..rules.p)
                    .flat_map(|p| (0..rules.d_a).map(move |m| (p, m)))
                    .map(|(p, m)| rules.grade(p, m, v[m]))
                    .collect();
                SampleEval {
                    z,
                    out: ForwardOutput { yhat, contributions: vec![yhat] },
                    detail: EvalDetail::Mfls { grades, firing, s, q },
                }
            }
        }
    }

    fn additive_output(&self, z: Option<Vec<f64>>, dims: Vec<SflsEval>) -> SampleEval {
        let contributions: Vec<f64> = dims.iter().map(|d| d.y).collect();
        let yhat = contributions.iter().sum();
        SampleEval {
            z,
            out: ForwardOutput { yhat, contributions },
            detail: EvalDetail::Additive(dims),
        }
    }
}

impl ModelParams {
    /// Builds the realized view: deviations floored, partitions derived.
    pub(crate) fn realize(&self) -> Realized {
        let spec = *self.spec();
        let (w, b) = if spec.variant.has_projection() {
            (Some(self.seg("W").to_vec()), Some(self.seg("b").to_vec()))
        } else {
            (None, None)
        };
        let realize_all =
            |vals: &[f64]| vals.iter().map(|&s| Self::realize_sigma(s)).collect::<Vec<f64>>();
        let fl = match spec.variant.topology() {
            Topology::Additive { sculpted: false } => RealizedFl::AdditiveGauss {
                c: self.seg("c").to_vec(),
                sigma: realize_all(self.seg("sigma")),
                a: self.seg("a").to_vec(),
                a0: self.seg("a0").to_vec(),
            },
            Topology::Additive { sculpted: true } => RealizedFl::AdditiveSculpted {
                parts: (0..spec.d).map(|i| self.partition_for(i)).collect(),
                a: self.seg("a").to_vec(),
                a0: self.seg("a0").to_vec(),
            },
            Topology::Mfls { sculpted, .. } => {
                let d_a = spec.antecedent_dim();
                let antecedents = if sculpted {
                    MflsAntecedents::Sculpted((0..d_a).map(|i| self.partition_for(i)).collect())
                } else {
                    MflsAntecedents::Gauss {
                        c: self.seg("ant_c").to_vec(),
                        sigma: realize_all(self.seg("ant_sigma")),
                    }
                };
                RealizedFl::Mfls(MflsRuleBase {
                    antecedents,
                    cons_w: self.seg("cons_w").to_vec(),
                    cons_w0: self.seg("cons_w0").to_vec(),
                    p: spec.p,
                    d_a,
                    d_c: spec.consequent_dim(),
                })
            }
        };
        Realized { spec, w, b, fl }
    }

    /// Runs the model on one input.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardOutput, ModelError> {
        if x.len() != self.spec().m {
            return Err(ModelError::DimensionMismatch { expected: self.spec().m, got: x.len() });
        }
        Ok(self.realize().forward(x))
    }

    /// The realized multi-input rule base of an MFLS variant.
    pub fn rule_base(&self) -> Option<MflsRuleBase> {
        match self.realize().fl {
            RealizedFl::Mfls(rules) => Some(rules),
            _ => None,
        }
    }

    /// Overwrites one named segment; test and setup convenience.
    pub fn set_segment(&mut self, name: &str, values: &[f64]) -> Result<(), ModelError> {
        let seg = match self.layout().seg(name) {
            Some(s) => *s,
            None => return Err(ModelError::ParamLength { expected: 0, got: values.len() }),
        };
        if values.len() != seg.len() {
            return Err(ModelError::ParamLength { expected: seg.len(), got: values.len() });
        }
        self.raw_mut()[seg.offset()..seg.offset() + seg.len()].copy_from_slice(values);
        Ok(())
    }
}
