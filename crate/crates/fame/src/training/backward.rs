//! Analytic batch gradients for every variant and both losses.
//!
//! Gradients differentiate the function the forward pass actually
//! computes, including the guarded quotient denominator. Three chains
//! need care:
//!
//! - the TSK quotient: `d yhat / d mu_p = (y_p - yhat) / S`
//! - the abs reparameterization with floor: `d sigma / d raw` is
//!   `sign(raw)` above the floor and 0 inside it
//! - sculpted partitions: center `q` depends on every earlier right
//!   deviation (`d c_q / d sigma_r_j = 4` for `j < q`) and each right
//!   deviation doubles as the next MF's left deviation
//!
//! MFLS firing uses prefix/suffix products for `d f_p / d mu_{p,m}`, so
//! underflowed grades stay harmless.

use crate::data::NumericDataset;
use crate::model::{
    EvalDetail, MflsAntecedents, ModelParams, Realized, RealizedFl, SampleEval, Topology,
    SIGMA_MIN,
};

use super::{LossConfig, LossKind, TrainError};

/// Batch loss value and the gradient w.r.t. every raw learnable.
#[derive(Debug, Clone)]
pub struct BatchGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Derivative of the realized deviation w.r.t. its raw value.
fn dsig(raw: f64) -> f64 {
    if raw.abs() >= SIGMA_MIN {
        raw.signum()
    } else {
        0.0
    }
}

struct MfPartials {
    dc: f64,
    dsigma: f64,
    dz: f64,
}

fn gauss_partials(c: f64, sigma: f64, z: f64, mu: f64) -> MfPartials {
    let d = z - c;
    let inv_s2 = 1.0 / (sigma * sigma);
    let dc = mu * d * inv_s2;
    MfPartials { dc, dsigma: mu * d * d * inv_s2 / sigma, dz: -dc }
}

/// Two-sided Gaussian partials; the boolean reports whether the left
/// branch was active (gradient w.r.t. the other deviation is zero).
fn gauss2_partials(c: f64, sigma_l: f64, sigma_r: f64, z: f64, mu: f64) -> (MfPartials, bool) {
    let left = z <= c;
    let sigma = if left { sigma_l } else { sigma_r };
    (gauss_partials(c, sigma, z, mu), left)
}

/// Mean-squared-error (plus optional Frobenius) gradient over the
/// selected rows.
pub fn backward(
    model: &ModelParams,
    data: &NumericDataset,
    indices: &[usize],
    cfg: &LossConfig,
) -> Result<BatchGrad, TrainError> {
    cfg.validate()?;
    if indices.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let spec = *model.spec();
    if data.n_features() != spec.m {
        return Err(TrainError::FeatureMismatch { expected: spec.m, got: data.n_features() });
    }
    if cfg.kind == LossKind::LF && !spec.variant.has_projection() {
        return Err(TrainError::LossNeedsProjection);
    }

    let realized = model.realize();
    let mut grad = vec![0.0f64; model.raw().len()];
    let b = indices.len() as f64;
    let mut sq = 0.0;
    for &idx in indices {
        let x = data.row(idx);
        let eval = realized.eval(x);
        let e = eval.out.yhat - data.target(idx);
        sq += e * e;
        let gy = 2.0 * e / b;
        backprop_sample(model, &realized, x, &eval, gy, &mut grad);
    }
    let mut loss = sq / b;

    if cfg.kind == LossKind::LF {
        let w_seg = *model.layout().seg("W").expect("projection present");
        let w = model.seg("W");
        loss += 0.5 * cfg.lambda * w.iter().map(|&v| v * v).sum::<f64>();
        for (k, &wv) in w.iter().enumerate() {
            grad[w_seg.offset() + k] += cfg.lambda * wv;
        }
    }
    Ok(BatchGrad { loss, grad })
}

fn seg_offset(model: &ModelParams, name: &str) -> usize {
    model.layout().seg(name).expect("segment present").offset()
}

fn backprop_sample(
    model: &ModelParams,
    realized: &Realized,
    x: &[f64],
    eval: &SampleEval,
    gy: f64,
    grad: &mut [f64],
) {
    match &realized.fl {
        RealizedFl::AdditiveGauss { .. } | RealizedFl::AdditiveSculpted { .. } => {
            backprop_additive(model, realized, x, eval, gy, grad)
        }
        RealizedFl::Mfls(_) => backprop_mfls(model, realized, x, eval, gy, grad),
    }
}

fn backprop_additive(
    model: &ModelParams,
    realized: &Realized,
    x: &[f64],
    eval: &SampleEval,
    gy: f64,
    grad: &mut [f64],
) {
    let spec = realized.spec;
    let (p, d) = (spec.p, spec.d);
    let dims = match &eval.detail {
        EvalDetail::Additive(dims) => dims,
        EvalDetail::Mfls { .. } => unreachable!("additive model with MFLS cache"),
    };
    let reduced: &[f64] = eval.z.as_deref().unwrap_or(x);
    let a_off = seg_offset(model, "a");
    let a0_off = seg_offset(model, "a0");
    let a_vals = match &realized.fl {
        RealizedFl::AdditiveGauss { a, .. } | RealizedFl::AdditiveSculpted { a, .. } => a,
        RealizedFl::Mfls(_) => unreachable!(),
    };

    let has_proj = realized.w.is_some();
    let mut dz = vec![0.0f64; if has_proj { d } else { 0 }];

    for i in 0..d {
        let se = &dims[i];
        let zi = reduced[i];
        // consequents and the consequent part of d yhat / d z
        let mut dy_dz = 0.0;
        for j in 0..p {
            let weight = se.grades[j] / se.s;
            grad[a_off + i * p + j] += gy * weight * zi;
            grad[a0_off + i * p + j] += gy * weight;
            dy_dz += weight * a_vals[i * p + j];
        }
        match &realized.fl {
            RealizedFl::AdditiveGauss { c, sigma, .. } => {
                let c_off = seg_offset(model, "c");
                let s_off = seg_offset(model, "sigma");
                let raw_sigma = model.seg("sigma");
                for j in 0..p {
                    let gmu = (se.rule_out[j] - se.y) / se.s;
                    let pt = gauss_partials(c[i * p + j], sigma[i * p + j], zi, se.grades[j]);
                    grad[c_off + i * p + j] += gy * gmu * pt.dc;
                    grad[s_off + i * p + j] +=
                        gy * gmu * pt.dsigma * dsig(raw_sigma[i * p + j]);
                    dy_dz += gmu * pt.dz;
                }
            }
            RealizedFl::AdditiveSculpted { parts, .. } => {
                let part = &parts[i];
                let mut gc = vec![0.0f64; p];
                let mut gsl = vec![0.0f64; p];
                let mut gsr = vec![0.0f64; p];
                for j in 0..p {
                    let gmu = (se.rule_out[j] - se.y) / se.s;
                    let (pt, left) = gauss2_partials(
                        part.centers()[j],
                        part.sigma_l()[j],
                        part.sigma_r[j],
                        zi,
                        se.grades[j],
                    );
                    gc[j] += gmu * pt.dc;
                    if left {
                        gsl[j] += gmu * pt.dsigma;
                    } else {
                        gsr[j] += gmu * pt.dsigma;
                    }
                    dy_dz += gmu * pt.dz;
                }
                chain_sculpted(model, i, &gc, &gsl, &gsr, gy, grad);
            }
            RealizedFl::Mfls(_) => unreachable!(),
        }
        if has_proj {
            dz[i] = dy_dz;
        }
    }
    if has_proj {
        backprop_projection(model, x, &dz, gy, grad);
    }
}

/// Maps realized-parameter gradients of one sculpted dimension back to
/// its raw learnables (`c1`, `sigma_l1`, `sigma_r`).
///
/// `gc`/`gsl`/`gsr` hold d(yhat)/d(center_j), d/d(sigma_l_j), and
/// d/d(sigma_r_j as a right branch). Realized structure:
/// `center_j = c1 + 4 * sum_{q<j} sigma_r_q` and
/// `sigma_l_j = sigma_r_{j-1}` for `j >= 1`.
fn chain_sculpted(
    model: &ModelParams,
    dim: usize,
    gc: &[f64],
    gsl: &[f64],
    gsr: &[f64],
    gy: f64,
    grad: &mut [f64],
) {
    let p = gc.len();
    let c1_off = seg_offset(model, "c1");
    let sl1_off = seg_offset(model, "sigma_l1");
    let sr_off = seg_offset(model, "sigma_r");
    let raw_sl1 = model.seg("sigma_l1")[dim];
    let raw_sr = &model.seg("sigma_r")[dim * p..(dim + 1) * p];

    grad[c1_off + dim] += gy * gc.iter().sum::<f64>();
    grad[sl1_off + dim] += gy * dsig(raw_sl1) * gsl[0];
    let mut center_suffix = 0.0; // sum of gc[j] for j > q
    for q in (0..p).rev() {
        let total = gsr[q]
            + 4.0 * center_suffix
            + if q + 1 < p { gsl[q + 1] } else { 0.0 };
        grad[sr_off + dim * p + q] += gy * dsig(raw_sr[q]) * total;
        center_suffix += gc[q];
    }
}

fn backprop_mfls(
    model: &ModelParams,
    realized: &Realized,
    x: &[f64],
    eval: &SampleEval,
    gy: f64,
    grad: &mut [f64],
) {
    let spec = realized.spec;
    let rules = match &realized.fl {
        RealizedFl::Mfls(r) => r,
        _ => unreachable!(),
    };
    let (ant_on_z, cons_on_z) = match spec.variant.topology() {
        Topology::Mfls { antecedents_on_z, consequents_on_z, .. } => {
            (antecedents_on_z, consequents_on_z)
        }
        Topology::Additive { .. } => unreachable!(),
    };
    let (grades, firing, s, q) = match &eval.detail {
        EvalDetail::Mfls { grades, firing, s, q } => (grades, firing, *s, q),
        EvalDetail::Additive(_) => unreachable!("MFLS model with additive cache"),
    };
    let reduced: &[f64] = eval.z.as_deref().unwrap_or(x);
    let v: &[f64] = if ant_on_z { reduced } else { x };
    let u: &[f64] = if cons_on_z { reduced } else { x };
    let yhat = eval.out.yhat;
    let (np, da, dc) = (rules.p, rules.d_a, rules.d_c);

    let cw_off = seg_offset(model, "cons_w");
    let cw0_off = seg_offset(model, "cons_w0");
    let has_proj = realized.w.is_some();
    let mut dz = vec![0.0f64; if has_proj { spec.d } else { 0 }];

    let sculpted = matches!(
        rules.antecedents,
        MflsAntecedents::Sculpted(_)
    );
    // per-(dimension, mf) realized gradients for the sculpted chain
    let mut sc_gc = vec![0.0f64; if sculpted { da * np } else { 0 }];
    let mut sc_gsl = vec![0.0f64; if sculpted { da * np } else { 0 }];
    let mut sc_gsr = vec![0.0f64; if sculpted { da * np } else { 0 }];

    let mut prefix = vec![0.0f64; da];
    for pi in 0..np {
        let fw = firing[pi] / s;
        for j in 0..dc {
            grad[cw_off + pi * dc + j] += gy * fw * u[j];
        }
        grad[cw0_off + pi] += gy * fw;
        if cons_on_z {
            for j in 0..dc {
                dz[j] += fw * rules.cons_w[pi * dc + j];
            }
        }

        let gf = (q[pi] - yhat) / s;
        let row = &grades[pi * da..(pi + 1) * da];
        prefix[0] = 1.0;
        for m in 1..da {
            prefix[m] = prefix[m - 1] * row[m - 1];
        }
        let mut suffix = 1.0;
        for m in (0..da).rev() {
            let gmu = gf * prefix[m] * suffix;
            match &rules.antecedents {
                MflsAntecedents::Gauss { c, sigma } => {
                    let idx = pi * da + m;
                    let pt = gauss_partials(c[idx], sigma[idx], v[m], row[m]);
                    let ant_c_off = seg_offset(model, "ant_c");
                    let ant_s_off = seg_offset(model, "ant_sigma");
                    grad[ant_c_off + idx] += gy * gmu * pt.dc;
                    grad[ant_s_off + idx] +=
                        gy * gmu * pt.dsigma * dsig(model.seg("ant_sigma")[idx]);
                    if ant_on_z {
                        dz[m] += gmu * pt.dz;
                    }
                }
                MflsAntecedents::Sculpted(parts) => {
                    let part = &parts[m];
                    let (pt, left) = gauss2_partials(
                        part.centers()[pi],
                        part.sigma_l()[pi],
                        part.sigma_r[pi],
                        v[m],
                        row[m],
                    );
                    sc_gc[m * np + pi] += gmu * pt.dc;
                    if left {
                        sc_gsl[m * np + pi] += gmu * pt.dsigma;
                    } else {
                        sc_gsr[m * np + pi] += gmu * pt.dsigma;
                    }
                    if ant_on_z {
                        dz[m] += gmu * pt.dz;
                    }
                }
            }
            suffix *= row[m];
        }
    }
    if sculpted {
        for m in 0..da {
            chain_sculpted(
                model,
                m,
                &sc_gc[m * np..(m + 1) * np],
                &sc_gsl[m * np..(m + 1) * np],
                &sc_gsr[m * np..(m + 1) * np],
                gy,
                grad,
            );
        }
    }
    if has_proj {
        backprop_projection(model, x, &dz, gy, grad);
    }
}

/// `dz` holds d(yhat)/d(z_i); pushes `gy * dz` through `z = W x + b`.
fn backprop_projection(model: &ModelParams, x: &[f64], dz: &[f64], gy: f64, grad: &mut [f64]) {
    let spec = model.spec();
    let w_off = seg_offset(model, "W");
    let b_off = seg_offset(model, "b");
    for (i, &dzi) in dz.iter().enumerate() {
        let g = gy * dzi;
        if g == 0.0 {
            continue;
        }
        for (j, &xj) in x.iter().enumerate() {
            grad[w_off + i * spec.m + j] += g * xj;
        }
        grad[b_off + i] += g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, Variant};

    fn dataset(rows: &[(&[f64], f64)]) -> NumericDataset {
        let m = rows[0].0.len();
        let names = (0..m).map(|i| format!("x{i}")).collect();
        let features = rows.iter().flat_map(|(x, _)| x.iter().copied()).collect();
        let targets = rows.iter().map(|&(_, y)| y).collect();
        NumericDataset::new(names, features, targets).unwrap()
    }

    #[test]
    fn single_rule_gradient_is_two_e_over_b() {
        // V-FAM, D=M=1, P=1: yhat ~= a z + a0, a0 gradient = 2e/B
        let spec = ModelSpec::new(Variant::VFam, 1, None, 1).unwrap();
        let mut model = ModelParams::new(spec, vec![0.0; 4]).unwrap();
        model.set_segment("c", &[0.2]).unwrap();
        model.set_segment("sigma", &[0.8]).unwrap();
        model.set_segment("a", &[0.5]).unwrap();
        model.set_segment("a0", &[0.1]).unwrap();
        let data = dataset(&[(&[0.4], 1.0)]);
        let bg = backward(&model, &data, &[0], &LossConfig::l2()).unwrap();
        let yhat = model.forward(&[0.4]).unwrap().yhat;
        let e = yhat - 1.0;
        let layout = model.layout().clone();
        let a0_idx = layout.seg("a0").unwrap().offset();
        assert!(
            (bg.grad[a0_idx] - 2.0 * e).abs() <= 1e-9 * (1.0 + (2.0 * e).abs()),
            "a0 grad {} vs 2e {}",
            bg.grad[a0_idx],
            2.0 * e
        );
        // antecedent gradients cancel in the single-rule ratio up to the
        // denominator-guard residue (~1e-12)
        let c_idx = layout.seg("c").unwrap().offset();
        let s_idx = layout.seg("sigma").unwrap().offset();
        assert!(bg.grad[c_idx].abs() < 1e-9, "c grad {}", bg.grad[c_idx]);
        assert!(bg.grad[s_idx].abs() < 1e-9, "sigma grad {}", bg.grad[s_idx]);
    }

    #[test]
    fn negative_raw_sigma_flips_gradient_sign() {
        let spec = ModelSpec::new(Variant::VFam, 2, None, 1).unwrap();
        let base = vec![
            -0.5, 0.5, // c
            0.4, 0.7, // sigma (raw)
            0.3, -0.2, // a
            0.1, 0.0, // a0
        ];
        let data = dataset(&[(&[0.2], 0.9), (&[-0.6], -0.3)]);
        let model_pos = ModelParams::new(spec, base.clone()).unwrap();
        let gp = backward(&model_pos, &data, &[0, 1], &LossConfig::l2()).unwrap();
        let mut flipped = base;
        flipped[2] = -flipped[2];
        flipped[3] = -flipped[3];
        let model_neg = ModelParams::new(spec, flipped).unwrap();
        let gn = backward(&model_neg, &data, &[0, 1], &LossConfig::l2()).unwrap();
        let s_off = model_pos.layout().seg("sigma").unwrap().offset();
        for j in 0..2 {
            assert_eq!(
                gp.grad[s_off + j].to_bits(),
                (-gn.grad[s_off + j]).to_bits(),
                "sigma raw sign must only flip the gradient sign"
            );
        }
        // losses agree: the realized model is identical
        assert_eq!(gp.loss.to_bits(), gn.loss.to_bits());
    }

    #[test]
    fn lf_adds_lambda_w_to_projection_gradient() {
        let spec = ModelSpec::new(Variant::Fam, 1, Some(1), 1).unwrap();
        let mut model =
            ModelParams::new(spec, vec![0.0; crate::model::count_params(&spec)]).unwrap();
        model.set_segment("W", &[2.0]).unwrap();
        model.set_segment("sigma", &[1.0]).unwrap();
        let data = dataset(&[(&[0.0], 0.0)]);
        let l2 = backward(&model, &data, &[0], &LossConfig::l2()).unwrap();
        let lf = backward(&model, &data, &[0], &LossConfig::lf(0.05)).unwrap();
        let w_off = model.layout().seg("W").unwrap().offset();
        assert!((lf.grad[w_off] - l2.grad[w_off] - 0.05 * 2.0).abs() < 1e-12);
        assert!((lf.loss - l2.loss - 0.5 * 0.05 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn lf_on_vanilla_variant_errors() {
        let spec = ModelSpec::new(Variant::VFam, 1, None, 1).unwrap();
        let model = ModelParams::new(spec, vec![0.1; 4]).unwrap();
        let data = dataset(&[(&[0.0], 0.0)]);
        assert!(matches!(
            backward(&model, &data, &[0], &LossConfig::lf(0.1)),
            Err(TrainError::LossNeedsProjection)
        ));
    }

    #[test]
    fn empty_batch_errors() {
        let spec = ModelSpec::new(Variant::VFam, 1, None, 1).unwrap();
        let model = ModelParams::new(spec, vec![0.1; 4]).unwrap();
        let data = dataset(&[(&[0.0], 0.0)]);
        assert!(matches!(
            backward(&model, &data, &[], &LossConfig::l2()),
            Err(TrainError::EmptyBatch)
        ));
    }
}
