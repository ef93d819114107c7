//! Central-difference verification of the analytic gradients.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::NumericDataset;
use crate::model::{ModelParams, ModelSpec, ParamRef, Variant, SIGMA_MIN};

use super::{backward, loss, LossConfig, LossKind, TrainError};

/// Outcome of a finite-difference sweep over every raw learnable.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_err: f64,
    /// Flat index and address of the worst coordinate.
    pub worst: Option<(usize, ParamRef)>,
    /// Per-coordinate relative errors (NaN where excluded).
    pub errors: Vec<f64>,
    /// Coordinates skipped because they sit on a kink of the deviation
    /// realization (raw value within `step` of 0 or of the floor).
    pub excluded: Vec<usize>,
    pub checked: usize,
}

impl std::fmt::Display for FdReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "max_rel_err={:.3e} over {} coords", self.max_rel_err, self.checked)?;
        if let Some((idx, r)) = self.worst {
            write!(f, " (worst at #{idx} {r})")?;
        }
        if !self.excluded.is_empty() {
            write!(f, ", {} excluded at kinks", self.excluded.len())?;
        }
        Ok(())
    }
}

fn batch_loss(
    model: &ModelParams,
    data: &NumericDataset,
    indices: &[usize],
    cfg: &LossConfig,
) -> Result<f64, TrainError> {
    let realized = model.realize();
    let preds: Vec<f64> = indices.iter().map(|&i| realized.forward(data.row(i)).yhat).collect();
    let targets: Vec<f64> = indices.iter().map(|&i| data.target(i)).collect();
    let w = if cfg.kind == LossKind::LF { Some(model.seg("W")) } else { None };
    loss(&preds, &targets, w, cfg)
}

/// Compares the analytic batch gradient against numerical derivatives.
///
/// Each coordinate is differenced with Ridders' method: a sequence of
/// central differences with shrinking steps, Richardson-extrapolated to
/// zero step with a running error estimate. This handles the two
/// extremes a fixed step cannot: the center coupling gives some sculpted
/// deviations third derivatives in the 1e4 range (truncation), while the
/// outer-tail deviations influence the loss only through the exp(-8)
/// tail, so their loss differences need wide probes to rise above the
/// rounding floor.
///
/// `step` is the finest probe allowed (refinement stops there) and the
/// exclusion radius: deviation coordinates whose raw value lies within
/// `step` of a realization kink (zero, or the `SIGMA_MIN` floor) are
/// excluded with a warning, since no two-sided derivative exists there.
/// Probes never cross a kink. Relative error uses the denominator
/// `max(|analytic|, |numeric|, 1e-8)` per coordinate.
pub fn fd_check(
    model: &ModelParams,
    data: &NumericDataset,
    indices: &[usize],
    cfg: &LossConfig,
    step: f64,
) -> Result<FdReport, TrainError> {
    if !(step > 0.0) {
        return Err(TrainError::BadStep(step));
    }
    let analytic = backward(model, data, indices, cfg)?;
    let mut work = model.clone();
    let mut report = FdReport {
        max_rel_err: 0.0,
        worst: None,
        errors: vec![f64::NAN; model.raw().len()],
        excluded: Vec::new(),
        checked: 0,
    };

    for j in 0..model.raw().len() {
        let raw_j = model.raw()[j];
        let deviation = model.layout().is_deviation_index(j);
        if deviation && near_kink(raw_j, step) {
            let addr = model.layout().describe(j).expect("index in layout");
            log::warn!(
                "fd_check: skipping non-differentiable deviation coordinate #{j} {addr} (raw {raw_j})"
            );
            report.excluded.push(j);
            continue;
        }
        let mut h0 = (1e-4f64).max(step * 50.0);
        if deviation {
            // stay on one side of the abs kink and of the floor kink
            let to_kink = 0.9 * (raw_j.abs() - SIGMA_MIN).abs().min(raw_j.abs());
            h0 = h0.min(to_kink).max(step);
        }
        let numeric = {
            let mut probe = |h: f64| -> Result<f64, TrainError> {
                work.raw_mut()[j] = raw_j + h;
                let plus = batch_loss(&work, data, indices, cfg)?;
                work.raw_mut()[j] = raw_j - h;
                let minus = batch_loss(&work, data, indices, cfg)?;
                work.raw_mut()[j] = raw_j;
                Ok((plus - minus) / (2.0 * h))
            };
            ridders(&mut probe, h0, step)?
        };
        let a = analytic.grad[j];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        report.errors[j] = rel;
        report.checked += 1;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = Some((j, model.layout().describe(j).expect("index in layout")));
        }
    }
    Ok(report)
}

/// Ridders' derivative extrapolation: central differences at steps
/// `h0 / 1.4^i` combined in a Neville tableau; returns the entry with
/// the smallest estimated error. Refinement stops at `floor_step` or
/// when the error estimate starts growing.
fn ridders(
    probe: &mut dyn FnMut(f64) -> Result<f64, TrainError>,
    h0: f64,
    floor_step: f64,
) -> Result<f64, TrainError> {
    const CON: f64 = 1.4;
    const CON2: f64 = CON * CON;
    const NTAB: usize = 12;
    const SAFE: f64 = 2.0;

    let mut tableau = vec![vec![0.0f64; NTAB]; NTAB];
    let mut hh = h0;
    tableau[0][0] = probe(hh)?;
    let mut answer = tableau[0][0];
    let mut err = f64::INFINITY;
    for i in 1..NTAB {
        hh /= CON;
        if hh < floor_step {
            break;
        }
        tableau[0][i] = probe(hh)?;
        let mut fac = CON2;
        for j in 1..=i {
            tableau[j][i] =
                (tableau[j - 1][i] * fac - tableau[j - 1][i - 1]) / (fac - 1.0);
            fac *= CON2;
            let errt = (tableau[j][i] - tableau[j - 1][i])
                .abs()
                .max((tableau[j][i] - tableau[j - 1][i - 1]).abs());
            if errt <= err {
                err = errt;
                answer = tableau[j][i];
            }
        }
        if (tableau[i][i] - tableau[i - 1][i - 1]).abs() >= SAFE * err {
            break;
        }
    }
    Ok(answer)
}

fn near_kink(raw: f64, step: f64) -> bool {
    raw.abs() <= step || (raw.abs() - SIGMA_MIN).abs() <= step
}

/// One entry of the cross-variant gradient-check sweep.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub variant: Variant,
    pub d: usize,
    pub loss: LossKind,
    pub seed: u64,
    pub report: FdReport,
}

/// Builds a random yet well-conditioned instance for gradient checking.
///
/// Coordinates whose true gradient is near zero turn the relative-error
/// comparison into finite-difference noise against the 1e-8 floor, so
/// the instance plants inputs that exercise every parameter:
///
/// - antecedent banks sit strictly inside the sampled range, with
///   samples in both partition tails and in every interval (the outer
///   deviations of a sculpted partition only receive gradient from
///   samples on their side of the bank);
/// - diagonal (sculpted MFLS) rule bases get inputs that move along the
///   diagonal, one shared level per row plus small jitter, since edge
///   rules never fire otherwise;
/// - projection rows touch one input coordinate each, so reduced values
///   are steerable; the remaining coordinates stay random (every W
///   entry's gradient is `gy * dz_i * x_j` and needs no nonzero weight).
pub fn suite_instance(spec: &ModelSpec, seed: u64, n_rows: usize) -> (ModelParams, NumericDataset) {
    use crate::model::Topology;

    let (p, d, m) = (spec.p, spec.d, spec.m);
    let d_a = spec.antecedent_dim();
    let variant_tag = Variant::ALL.iter().position(|v| *v == spec.variant).unwrap() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (variant_tag << 32) ^ ((d as u64) << 40));
    let diagonal = matches!(spec.variant.topology(), Topology::Mfls { sculpted: true, .. });
    let mfls_gauss = matches!(spec.variant.topology(), Topology::Mfls { sculpted: false, .. });

    // --- antecedent geometry per dimension ---------------------------
    struct DimGeom {
        knots: Vec<f64>,
        sigma_l1: f64,
        sigma_r: Vec<f64>,
        gauss_sigma: Vec<f64>,
    }
    let mut geoms: Vec<DimGeom> = Vec::with_capacity(d_a);
    for dim in 0..d_a {
        // diagonal rule bases need near-identical partitions across dims
        let wobble = if diagonal { 0.02 } else { 0.08 };
        let first = -0.9 + rng.random_range(-wobble..wobble);
        if spec.variant.is_sculpted() {
            let sigma_r: Vec<f64> = (0..p)
                .map(|_| {
                    let base = if diagonal { 0.13 } else { 0.11 + 0.02 * (dim % 3) as f64 };
                    base * rng.random_range(0.85..1.15)
                })
                .collect();
            let mut knots = vec![first];
            for q in 0..p - 1 {
                knots.push(knots[q] + 4.0 * sigma_r[q]);
            }
            geoms.push(DimGeom {
                knots,
                sigma_l1: rng.random_range(0.12..0.18),
                sigma_r,
                gauss_sigma: Vec::new(),
            });
        } else {
            let hi = 1.1 + rng.random_range(-wobble..wobble);
            let knots: Vec<f64> = if p == 1 {
                vec![0.5 * (first + hi)]
            } else {
                (0..p)
                    .map(|k| {
                        first
                            + (hi - first) * k as f64 / (p - 1) as f64
                            + rng.random_range(-0.05..0.05)
                    })
                    .collect()
            };
            let gap = if p == 1 { hi - first } else { (hi - first) / (p - 1) as f64 };
            let width_boost = if mfls_gauss { (d_a as f64 / 2.0).sqrt().max(1.0) } else { 1.0 };
            let gauss_sigma: Vec<f64> =
                (0..p).map(|_| gap * width_boost * rng.random_range(0.6..1.0)).collect();
            geoms.push(DimGeom {
                knots,
                sigma_l1: 0.0,
                sigma_r: Vec::new(),
                gauss_sigma,
            });
        }
    }

    // --- antecedent-space sample values -------------------------------
    // Per-dim coverage: every knot, every midpoint, and two samples in
    // each partition tail. The tail deviations (first left, last right)
    // only see gradient from tail samples at a fraction of their own
    // width: closer in, the grade derivative vanishes; further out, the
    // contending rule's grade decays double-exponentially.
    let coverage = |geom: &DimGeom, rng: &mut ChaCha8Rng, k: usize| -> f64 {
        let knots = &geom.knots;
        let last = knots[knots.len() - 1];
        let left_w = if geom.sigma_l1 > 0.0 { geom.sigma_l1 } else { geom.gauss_sigma[0] };
        let right_w =
            if geom.sigma_r.is_empty() { geom.gauss_sigma[p - 1] } else { geom.sigma_r[p - 1] };
        let n_slots = 2 * knots.len() + 4;
        match k % n_slots {
            0 => knots[0] - left_w * rng.random_range(0.25..0.45),
            1 => knots[0] - left_w * rng.random_range(0.5..0.85),
            2 => last + right_w * rng.random_range(0.25..0.5),
            3 => last + right_w * rng.random_range(0.55..0.9),
            slot => {
                let j = slot - 4;
                if j < knots.len() {
                    knots[j] + rng.random_range(-0.15..0.15) * left_w.max(0.1)
                } else {
                    // midpoint of an interval
                    let i = j - knots.len();
                    if i + 1 < knots.len() {
                        0.5 * (knots[i] + knots[i + 1]) + rng.random_range(-0.05..0.05)
                    } else {
                        rng.random_range(knots[0]..last.max(knots[0] + 0.1))
                    }
                }
            }
        }
    };

    // antecedent values per row per dim
    let mut ant_values = vec![0.0f64; n_rows * d_a];
    if diagonal {
        // one level per row, aligned across dimensions
        for row in 0..n_rows {
            let t = coverage(&geoms[0], &mut rng, row);
            for dim in 0..d_a {
                ant_values[row * d_a + dim] = t + rng.random_range(-0.04..0.04);
            }
        }
    } else if mfls_gauss {
        for row in 0..n_rows {
            for dim in 0..d_a {
                ant_values[row * d_a + dim] = rng.random_range(-1.3..1.3);
            }
        }
    } else {
        // additive: dims are independent subnetworks; rotate coverage
        // slots per dim so every region sees samples
        for dim in 0..d_a {
            let shift = rng.random_range(0..n_rows);
            for row in 0..n_rows {
                ant_values[row * d_a + dim] = coverage(&geoms[dim], &mut rng, row + shift);
            }
        }
    }

    // --- inputs and projection ---------------------------------------
    let mut w = Vec::new();
    let mut b = Vec::new();
    let mut features = vec![0.0f64; n_rows * m];
    if spec.variant.has_projection() {
        // sparse rows: z_i = w_i * x_i + b_i
        let scales: Vec<f64> = (0..d)
            .map(|_| rng.random_range(0.8..1.2) * if rng.random_range(0..2) == 0 { 1.0 } else { -1.0 })
            .collect();
        for i in 0..d {
            for j in 0..m {
                w.push(if i == j { scales[i] } else { 0.0 });
            }
            b.push(rng.random_range(-0.1..0.1));
        }
        for row in 0..n_rows {
            for j in 0..m {
                features[row * m + j] = if j < d {
                    (ant_values[row * d_a + j] - b[j]) / scales[j]
                } else {
                    rng.random_range(-1.0..1.0)
                };
            }
        }
    } else {
        debug_assert_eq!(d_a, m);
        for row in 0..n_rows {
            features[row * m..(row + 1) * m]
                .copy_from_slice(&ant_values[row * d_a..(row + 1) * d_a]);
        }
    }
    // --- parameter vector ---------------------------------------------
    let layout = spec.layout();
    let mut raw = vec![0.0f64; layout.total()];
    for seg in layout.segments() {
        let vals: Vec<f64> = match seg.name() {
            "W" => w.clone(),
            "b" => b.clone(),
            "c" => (0..d * p).map(|i| geoms[i / p].knots[i % p]).collect(),
            "sigma" => (0..d * p).map(|i| geoms[i / p].gauss_sigma[i % p]).collect(),
            "ant_c" => {
                if mfls_gauss {
                    // independent random knots inside the sampled range
                    (0..p * d_a).map(|_| rng.random_range(-1.1..1.1)).collect()
                } else {
                    (0..p * d_a).map(|i| geoms[i % d_a].knots[i / d_a]).collect()
                }
            }
            "ant_sigma" => {
                (0..p * d_a).map(|i| geoms[i % d_a].gauss_sigma[i / d_a]).collect()
            }
            "c1" => (0..d_a).map(|i| geoms[i].knots[0]).collect(),
            "sigma_l1" => (0..d_a).map(|i| geoms[i].sigma_l1).collect(),
            "sigma_r" => (0..d_a * p).map(|i| geoms[i / p].sigma_r[i % p]).collect(),
            "a" | "cons_w" => (0..seg.len()).map(|_| rng.random_range(-0.8..0.8)).collect(),
            "a0" | "cons_w0" => (0..seg.len()).map(|_| rng.random_range(-1.2..1.2)).collect(),
            other => unreachable!("unknown segment {other}"),
        };
        raw[seg.offset()..seg.offset() + seg.len()].copy_from_slice(&vals);
    }
    let model = ModelParams::new(*spec, raw).expect("layout-sized vector");

    // Targets sit close to the model's own predictions. The loss then
    // stays small, which pulls the rounding floor of finite-difference
    // loss evaluations (proportional to |L|) far below the structurally
    // tiny gradients, while every gradient only shrinks linearly with
    // the error.
    let targets: Vec<f64> = (0..n_rows)
        .map(|row| {
            let pred = model.forward(&features[row * m..(row + 1) * m]).unwrap().yhat;
            let e = rng.random_range(0.012..0.035);
            pred + if rng.random_range(0..2) == 0 { e } else { -e }
        })
        .collect();
    let names = (0..m).map(|i| format!("x{i}")).collect();
    let data = NumericDataset::new(names, features, targets).expect("finite instance data");
    (model, data)
}

/// Finest probe step for the sweep.
pub const SUITE_STEP: f64 = 1e-6;

/// Gradient-check sweep over every variant and every loss defined for
/// it: P=5, M=8, D in {2, 4} for projection variants, batch 16.
pub fn gradcheck_suite(seeds: &[u64], step: f64) -> Result<Vec<SuiteOutcome>, TrainError> {
    let mut outcomes = Vec::new();
    for variant in Variant::ALL {
        let d_choices: &[Option<usize>] =
            if variant.has_projection() { &[Some(2), Some(4)] } else { &[None] };
        let losses: &[LossConfig] = if variant.has_projection() {
            &[LossConfig { kind: LossKind::L2, lambda: 0.0 },
              LossConfig { kind: LossKind::LF, lambda: 0.05 }]
        } else {
            &[LossConfig { kind: LossKind::L2, lambda: 0.0 }]
        };
        for &d in d_choices {
            let spec = ModelSpec::new(variant, 5, d, 8)?;
            for cfg in losses {
                for &seed in seeds {
                    let (model, data) = suite_instance(&spec, seed, 16);
                    let indices: Vec<usize> = (0..data.n_rows()).collect();
                    let report = fd_check(&model, &data, &indices, cfg, step)?;
                    outcomes.push(SuiteOutcome {
                        variant,
                        d: spec.d,
                        loss: cfg.kind,
                        seed,
                        report,
                    });
                }
            }
        }
    }
    Ok(outcomes)
}
