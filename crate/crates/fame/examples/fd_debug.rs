// scratch diagnostic: sweep many seeds, find worst coordinates
use fame::model::{ModelSpec, Variant};
use fame::training::{fd_check, suite_instance, LossConfig, LossKind, SUITE_STEP};

fn main() {
    let mut global: Vec<(f64, String)> = Vec::new();
    for variant in Variant::ALL {
        let ds: &[Option<usize>] =
            if variant.has_projection() { &[Some(2), Some(4)] } else { &[None] };
        for &d in ds {
            let spec = ModelSpec::new(variant, 5, d, 8).unwrap();
            let losses: &[LossConfig] = if variant.has_projection() {
                &[LossConfig { kind: LossKind::L2, lambda: 0.0 },
                  LossConfig { kind: LossKind::LF, lambda: 0.05 }]
            } else {
                &[LossConfig { kind: LossKind::L2, lambda: 0.0 }]
            };
            for cfg in losses {
                for seed in 1..=8u64 {
                    let (model, data) = suite_instance(&spec, seed, 16);
                    let idx: Vec<usize> = (0..16).collect();
                    let rep = fd_check(&model, &data, &idx, cfg, SUITE_STEP).unwrap();
                    let worst = rep.worst.unwrap();
                    global.push((
                        rep.max_rel_err,
                        format!(
                            "{variant} D={} {:?} seed {seed}: rel={:.2e} at {}",
                            spec.d, cfg.kind, rep.max_rel_err, worst.1
                        ),
                    ));
                }
            }
        }
    }
    global.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    for (_, line) in global.iter().take(10) {
        println!("{line}");
    }
    println!("combos: {}  (suite threshold 1e-5)", global.len());
}
