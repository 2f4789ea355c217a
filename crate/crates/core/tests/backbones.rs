mod common;

use asana_core::backbones::*;
use asana_core::nn::{LayerKind, ParamId, Plan, Section};
use asana_core::{seed, tensorio};
use common::census;
use ndarray::{Array2, Array4, Axis};
use rand::Rng;

fn plan_of(family: Family, variant: ArchVariant) -> (Plan, Backbone) {
    let mut plan = Plan::default();
    let b = build_backbone(family, variant, &mut plan);
    (plan, b)
}

fn oracle(family: Family) -> [census::Count; 5] {
    match family {
        Family::Vgg16 => {
            // stage split is irrelevant for the totals
            let mut s = [census::Count::default(); 5];
            s[0] = census::vgg16();
            s
        }
        Family::Resnet50 => census::resnet_stages([3, 4, 6, 3]),
        Family::Resnet101 => census::resnet_stages([3, 4, 23, 3]),
        Family::Densenet121 => census::densenet121_stages(),
    }
}

fn stub(family: Family) -> AssemblySpec {
    AssemblySpec {
        backbone: BackboneSpec {
            family,
            weights: "seeded:7".into(),
            variant: ArchVariant::STUB,
        },
        freeze: FreezePolicy::FullFinetune,
        head: HeadConfig::default(),
        head_seed: 3,
    }
}

fn random_batch(b: usize, size: usize, key: u64) -> Array4<f64> {
    let mut rng = seed::rng(99, &[key]);
    Array4::from_shape_simple_fn((b, size, size, 3), || rng.random_range(-2.0..2.0))
}

#[test]
fn full_census_matches_closed_form_oracle() {
    for f in Family::ALL {
        let (plan, b) = plan_of(f, ArchVariant::FULL);
        let o = census::sum(&oracle(f));
        assert_eq!(plan.parameter_count(), o.learnable, "{f} learnable");
        assert_eq!(plan.buffer_count(), o.stats, "{f} running stats");
        assert_eq!(
            plan.layers_of_kind(LayerKind::Conv).count(),
            o.convs,
            "{f} convs"
        );
        assert_eq!(b.feature_dim, f.feature_dim());
    }
}

#[test]
fn full_census_matches_published_totals() {
    let totals = [
        (Family::Vgg16, 14_714_688, 14_714_688),
        (Family::Resnet50, 23_587_712, 23_534_592),
        (Family::Resnet101, 42_658_176, 42_552_832),
        (Family::Densenet121, 7_037_504, 6_953_856),
    ];
    for (f, total, learnable) in totals {
        let (plan, _) = plan_of(f, ArchVariant::FULL);
        assert_eq!(plan.total_count(), total, "{f}");
        assert_eq!(plan.parameter_count(), learnable, "{f}");
    }
}

#[test]
fn vgg_has_thirteen_convs_and_no_classifier() {
    let (plan, _) = plan_of(Family::Vgg16, ArchVariant::FULL);
    assert_eq!(plan.layers_of_kind(LayerKind::Conv).count(), 13);
    assert_eq!(plan.layers_of_kind(LayerKind::Dense).count(), 0);
    assert_eq!(plan.layers_of_kind(LayerKind::BatchNorm).count(), 0);
}

#[test]
fn densenet_pools_to_1024() {
    let (_, b) = plan_of(Family::Densenet121, ArchVariant::FULL);
    assert_eq!(b.feature_dim, 1024);
}

#[test]
fn every_family_has_five_stages() {
    for f in Family::ALL {
        for v in [ArchVariant::FULL, ArchVariant::STUB] {
            let (plan, _) = plan_of(f, v);
            assert_eq!(plan.stage_count(Section::Backbone), 5, "{f} {v:?}");
        }
    }
}

#[test]
fn family_names_parse() {
    assert_eq!(
        "densenet121".parse::<Family>().unwrap(),
        Family::Densenet121
    );
    assert_eq!("ResNet-50".parse::<Family>().unwrap(), Family::Resnet50);
    assert_eq!("vgg_16".parse::<Family>().unwrap(), Family::Vgg16);
    assert!(matches!(
        "alexnet".parse::<Family>(),
        Err(ModelError::UnknownFamily(_))
    ));
    for f in Family::ALL {
        assert_eq!(f.id().parse::<Family>().unwrap(), f);
    }
}

#[test]
fn full_finetune_mask_all_true() {
    for f in Family::ALL {
        let (plan, _) = plan_of(f, ArchVariant::FULL);
        assert!(apply_freeze(&plan, FreezePolicy::FullFinetune)
            .unwrap()
            .iter()
            .all(|&t| t));
    }
}

fn trainable_learnable(plan: &Plan, mask: &[bool], section: Section) -> usize {
    plan.params
        .iter()
        .zip(mask)
        .filter(|(p, &t)| t && plan.layers[p.layer].section == section)
        .map(|(p, _)| p.len())
        .sum()
}

#[test]
fn vgg_last_five_layers() {
    let mut plan = Plan::default();
    let b = build_backbone(Family::Vgg16, ArchVariant::FULL, &mut plan);
    build_head(
        &HeadConfig::with_blocks(&[(256, 0.5)]),
        b.feature_dim,
        &mut plan,
    )
    .unwrap();
    let mask = apply_freeze(&plan, FreezePolicy::LastNLayers(5)).unwrap();
    let trained: Vec<&str> = plan
        .params
        .iter()
        .zip(&mask)
        .filter(|(p, &t)| t && plan.layers[p.layer].section == Section::Backbone)
        .map(|(p, _)| plan.layers[p.layer].name.as_str())
        .collect();
    let mut layers = trained.clone();
    layers.dedup();
    assert_eq!(
        layers,
        [
            "block4_conv2",
            "block4_conv3",
            "block5_conv1",
            "block5_conv2",
            "block5_conv3"
        ]
    );
    assert_eq!(
        trainable_learnable(&plan, &mask, Section::Backbone),
        5 * (9 * 512 * 512 + 512)
    );
    // every head parameter trainable
    assert!(plan
        .params
        .iter()
        .zip(&mask)
        .all(|(p, &t)| t || plan.layers[p.layer].section == Section::Backbone));
}

#[test]
fn last_stage_only_matches_stage_tables() {
    for f in [Family::Resnet50, Family::Resnet101, Family::Densenet121] {
        let (plan, _) = plan_of(f, ArchVariant::FULL);
        let mask = apply_freeze(&plan, FreezePolicy::LastStageOnly).unwrap();
        assert_eq!(
            trainable_learnable(&plan, &mask, Section::Backbone),
            oracle(f)[4].learnable,
            "{f}"
        );
    }
    // VGG: the fifth conv block
    let (plan, _) = plan_of(Family::Vgg16, ArchVariant::FULL);
    let mask = apply_freeze(&plan, FreezePolicy::LastStageOnly).unwrap();
    assert_eq!(
        trainable_learnable(&plan, &mask, Section::Backbone),
        3 * (9 * 512 * 512 + 512)
    );
}

#[test]
fn resnet50_stage5_frozen_census() {
    // conv5_x alone: 6,044,672 (first block) + 2 × 4,465,664
    let (plan, _) = plan_of(Family::Resnet50, ArchVariant::FULL);
    let mask = apply_freeze(&plan, FreezePolicy::LastStageOnly).unwrap();
    assert_eq!(
        trainable_learnable(&plan, &mask, Section::Backbone),
        14_976_000
    );
}

#[test]
fn last_n_layers_bounds() {
    let (plan, _) = plan_of(Family::Vgg16, ArchVariant::FULL);
    assert!(apply_freeze(&plan, FreezePolicy::LastNLayers(13))
        .unwrap()
        .iter()
        .all(|&t| t));
    assert!(matches!(
        apply_freeze(&plan, FreezePolicy::LastNLayers(14)),
        Err(ModelError::Freeze(_))
    ));
    assert!(matches!(
        apply_freeze(&plan, FreezePolicy::LastNLayers(0)),
        Err(ModelError::Freeze(_))
    ));
    assert!("last_n_layers:0".parse::<FreezePolicy>().is_err());
    assert_eq!(
        "last_n_layers:5".parse::<FreezePolicy>().unwrap(),
        FreezePolicy::LastNLayers(5)
    );
    assert_eq!(
        "last_stage_only".parse::<FreezePolicy>().unwrap(),
        FreezePolicy::LastStageOnly
    );
}

#[test]
fn norms_follow_their_convolution() {
    // ResNet post-norm belongs to the preceding conv, DenseNet pre-norm to the next
    let (plan, _) = plan_of(Family::Resnet50, ArchVariant::FULL);
    let mask = apply_freeze(&plan, FreezePolicy::LastNLayers(1)).unwrap();
    let names: Vec<&str> = plan
        .params
        .iter()
        .zip(&mask)
        .filter(|(_, &t)| t)
        .map(|(p, _)| p.name.as_str())
        .collect();
    assert_eq!(
        names,
        [
            "conv5_block3_3_conv/kernel",
            "conv5_block3_3_conv/bias",
            "conv5_block3_3_bn/gamma",
            "conv5_block3_3_bn/beta"
        ]
    );
    let (plan, _) = plan_of(Family::Densenet121, ArchVariant::FULL);
    let mask = apply_freeze(&plan, FreezePolicy::LastNLayers(1)).unwrap();
    let names: Vec<&str> = plan
        .params
        .iter()
        .zip(&mask)
        .filter(|(_, &t)| t)
        .map(|(p, _)| p.name.as_str())
        .collect();
    assert_eq!(
        names,
        ["conv5_block16_2_conv/kernel", "bn/gamma", "bn/beta"]
    );
}

#[test]
fn head_census() {
    let config = HeadConfig::with_blocks(&[(512, 0.2)]);
    // 1024·512 + 512 + 512·82 + 82
    assert_eq!(config.parameter_count(1024), 566_866);
    assert_eq!(config.parameter_count(1024), census::head(1024, &[512], 82));
    let mut plan = Plan::default();
    build_head(&config, 1024, &mut plan).unwrap();
    assert_eq!(plan.parameter_count(), 566_866);
    assert_eq!(HeadConfig::default().parameter_count(2048), 2048 * 82 + 82);
}

#[test]
fn head_census_over_search_space() {
    for n in 0..=MAX_HEAD_BLOCKS {
        for &u in &UNITS_CHOICES {
            let cfg = HeadConfig::with_blocks(&vec![(u, 0.2); n]);
            let mut plan = Plan::default();
            let head = build_head(&cfg, 64, &mut plan).unwrap();
            assert_eq!(plan.parameter_count(), census::head(64, &vec![u; n], 82));
            assert_eq!(head.output.output, 82);
        }
    }
}

#[test]
fn head_rejects_four_blocks() {
    let cfg = HeadConfig::with_blocks(&[(128, 0.0); 4]);
    assert!(matches!(
        build_head(&cfg, 16, &mut Plan::default()),
        Err(ModelError::Head(_))
    ));
    let cfg = HeadConfig::with_blocks(&[(128, 1.0)]);
    assert!(matches!(
        build_head(&cfg, 16, &mut Plan::default()),
        Err(ModelError::Head(_))
    ));
}

#[test]
fn zero_input_gives_finite_82_logits() {
    for f in Family::ALL {
        let model = ModelAssembly::build(&stub(f)).unwrap();
        let logits = model.logits(&Array4::zeros((1, 32, 32, 3))).unwrap();
        assert_eq!(logits.dim(), (1, 82), "{f}");
        assert!(logits.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn eval_forward_deterministic_and_softmax_normalized() {
    for f in Family::ALL {
        let model = ModelAssembly::build(&stub(f)).unwrap();
        let x = random_batch(4, 32, f as u64);
        let a = model.logits(&x).unwrap();
        let b = model.logits(&x).unwrap();
        assert_eq!(a, b);
        for row in a.axis_iter(Axis(0)) {
            let m = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = e.iter().sum();
            let s: f64 = e.iter().map(|v| v / z).sum();
            assert!((s - 1.0).abs() <= 1e-5);
        }
    }
}

#[test]
fn dropout_zero_train_and_eval_agree() {
    let mut spec = stub(Family::Vgg16);
    spec.head = HeadConfig::with_blocks(&[(128, 0.0)]);
    // frozen backbone: no batch statistics anywhere
    spec.freeze = FreezePolicy::LastNLayers(1);
    spec.backbone.family = Family::Vgg16;
    let mut model = ModelAssembly::build(&spec).unwrap();
    let x = random_batch(2, 32, 1);
    let eval = model.logits(&x).unwrap();
    let mut rng = seed::rng(1, &[]);
    let train = model.forward_train(&x, &mut rng).unwrap().logits;
    assert_eq!(eval, train);
}

#[test]
fn wrong_input_shape_is_an_error() {
    let model = ModelAssembly::build(&stub(Family::Resnet50)).unwrap();
    assert!(matches!(
        model.logits(&Array4::zeros((1, 32, 32, 1))),
        Err(ModelError::Shape { .. })
    ));
    assert!(matches!(
        model.logits(&Array4::zeros((1, 16, 16, 3))),
        Err(ModelError::Shape { .. })
    ));
}

#[test]
fn frozen_parameters_receive_no_gradient_and_some_trainable_do() {
    for f in Family::ALL {
        for policy in [
            FreezePolicy::FullFinetune,
            FreezePolicy::LastNLayers(3),
            FreezePolicy::LastStageOnly,
        ] {
            let mut spec = stub(f);
            spec.freeze = policy;
            let mut model = ModelAssembly::build(&spec).unwrap();
            let x = random_batch(3, 32, 5);
            let mut rng = seed::rng(2, &[]);
            let pass = model.forward_train(&x, &mut rng).unwrap();
            let g =
                Array2::from_shape_fn(pass.logits.dim(), |(i, j)| ((i * 7 + j) % 5) as f64 - 2.0);
            model.store_mut().zero_grads();
            model.backward(pass, &g);
            let store = model.store();
            let mut live = false;
            for (i, &t) in store.trainable().iter().enumerate() {
                let nonzero = store.grads()[i].iter().any(|&v| v != 0.0);
                if t {
                    live |= nonzero;
                } else {
                    assert!(
                        !nonzero,
                        "{f} {policy}: frozen {} has gradient",
                        model.plan().params[i].name
                    );
                }
            }
            assert!(live, "{f} {policy}");
        }
    }
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for f in Family::ALL {
        let mut spec = stub(f);
        spec.backbone.variant = ArchVariant {
            width_divisor: 32,
            max_blocks: Some(1),
        };
        spec.head = HeadConfig {
            blocks: vec![HeadBlockSpec {
                units: 6,
                dropout: 0.0,
            }],
            output_classes: 4,
        };
        let mut model = ModelAssembly::build(&spec).unwrap();
        // 64×64 keeps a 2×2 map in the last stage so batch statistics are not degenerate
        let x = random_batch(3, 64, 11);
        let proj =
            Array2::from_shape_fn((3, 4), |(i, j)| (i as f64 - 0.5) * (j as f64 + 1.0) / 3.0);
        let snapshot = model.store().snapshot();
        let loss = |m: &mut ModelAssembly| {
            let state = snapshot_buffers(&snapshot, m);
            m.store_mut().restore(&state);
            let mut rng = seed::rng(0, &[]);
            (m.forward_train(&x, &mut rng).unwrap().logits * &proj).sum()
        };
        let mut rng = seed::rng(0, &[]);
        let pass = model.forward_train(&x, &mut rng).unwrap();
        model.store_mut().zero_grads();
        model.backward(pass, &proj);
        let grads = model.store().grads().to_vec();
        let h = 1e-6;
        let n = model.store().len();
        for p in [0, 1, n / 2, n - 4, n - 1] {
            let len = model.store().value(ParamId(p)).len();
            for j in [0, len / 2, len - 1] {
                let orig = model.store().value(ParamId(p)).as_slice().unwrap()[j];
                model
                    .store_mut()
                    .value_mut(ParamId(p))
                    .as_slice_mut()
                    .unwrap()[j] = orig + h;
                let lp = loss(&mut model);
                model
                    .store_mut()
                    .value_mut(ParamId(p))
                    .as_slice_mut()
                    .unwrap()[j] = orig - h;
                let lm = loss(&mut model);
                model
                    .store_mut()
                    .value_mut(ParamId(p))
                    .as_slice_mut()
                    .unwrap()[j] = orig;
                let num = (lp - lm) / (2.0 * h);
                let ana = grads[p].as_slice().unwrap()[j];
                assert!(
                    relative(num, ana) < 1e-4 || (num - ana).abs() < 1e-8,
                    "{f} {}[{j}]: {num} vs {ana}",
                    model.plan().params[p].name
                );
            }
        }
    }
}

/// Current values with the snapshot's running statistics, so repeated training
/// forwards see identical buffers.
fn snapshot_buffers(
    snap: &(Vec<ndarray::ArrayD<f64>>, Vec<ndarray::ArrayD<f64>>),
    m: &ModelAssembly,
) -> (Vec<ndarray::ArrayD<f64>>, Vec<ndarray::ArrayD<f64>>) {
    (m.store().values().to_vec(), snap.1.clone())
}

fn write_archive(
    dir: &std::path::Path,
    spec: &AssemblySpec,
    layout: &str,
    tamper: Option<usize>,
) -> std::path::PathBuf {
    let (_, plan, store) = load_backbone(&spec.backbone).unwrap();
    let mut named = Vec::new();
    let mut owned = Vec::new();
    for (i, p) in plan.params.iter().enumerate() {
        let v = store.values()[i].clone();
        let v = if layout == "hwio" && v.ndim() == 4 {
            v.permuted_axes(ndarray::IxDyn(&[2, 3, 1, 0]))
                .as_standard_layout()
                .into_owned()
        } else {
            v
        };
        owned.push((p.name.clone(), v));
    }
    for (i, b) in plan.buffers.iter().enumerate() {
        owned.push((b.name.clone(), store.buffers()[i].mapv(|v| v + 0.25)));
    }
    for (n, v) in &owned {
        named.push((n.clone(), v));
    }
    let archive = dir.join("weights.safetensors");
    tensorio::save_tensors(&archive, &named).unwrap();
    let sha = file_sha256(&archive).unwrap();
    let manifest = WeightManifest {
        family: spec.backbone.family,
        identifier: "test-export".into(),
        archive: "weights.safetensors".into(),
        sha256: sha,
        parameter_count: plan.total_count() + tamper.unwrap_or(0),
        kernel_layout: layout.into(),
    };
    let path = dir.join("manifest.toml");
    std::fs::write(&path, toml::to_string(&manifest).unwrap()).unwrap();
    path
}

#[test]
fn archive_weights_load_bit_exact() {
    for layout in ["oihw", "hwio"] {
        let dir = tempfile::tempdir().unwrap();
        let seeded = stub(Family::Resnet50);
        let manifest = write_archive(dir.path(), &seeded, layout, None);
        let mut spec = seeded.clone();
        spec.backbone.weights = manifest.display().to_string();
        let from_archive = ModelAssembly::build(&spec).unwrap();
        let reference = ModelAssembly::build(&seeded).unwrap();
        let plan = reference.plan();
        for (i, p) in plan.params.iter().enumerate() {
            assert_eq!(
                from_archive.store().values()[i],
                reference.store().values()[i],
                "{}",
                p.name
            );
        }
        for (i, _) in plan.buffers.iter().enumerate() {
            assert_eq!(
                from_archive.store().buffers()[i],
                reference.store().buffers()[i].mapv(|v| v + 0.25)
            );
        }
    }
}

#[test]
fn tampered_archive_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = stub(Family::Densenet121);
    let manifest = write_archive(dir.path(), &spec, "oihw", None);
    spec.backbone.weights = manifest.display().to_string();
    let archive = dir.path().join("weights.safetensors");
    let mut bytes = std::fs::read(&archive).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&archive, bytes).unwrap();
    assert!(matches!(
        ModelAssembly::build(&spec),
        Err(ModelError::Checksum { .. })
    ));
}

#[test]
fn count_mismatch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = stub(Family::Vgg16);
    let manifest = write_archive(dir.path(), &spec, "oihw", Some(1));
    spec.backbone.weights = manifest.display().to_string();
    assert!(matches!(
        ModelAssembly::build(&spec),
        Err(ModelError::CountMismatch { .. })
    ));
}

#[test]
fn manifest_for_other_family_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_archive(dir.path(), &stub(Family::Vgg16), "oihw", None);
    let mut spec = stub(Family::Resnet50);
    spec.backbone.weights = manifest.display().to_string();
    assert!(matches!(
        ModelAssembly::build(&spec),
        Err(ModelError::Weights(_))
    ));
}

#[test]
fn load_backbone_checks_full_census() {
    // cheap family: VGG at full size allocates ~15M scalars twice
    let spec = BackboneSpec::new(Family::Vgg16);
    let (b, plan, store) = load_backbone(&spec).unwrap();
    assert_eq!(b.feature_dim, 512);
    assert_eq!(plan.total_count(), 14_714_688);
    assert_eq!(store.len(), 26);
}
