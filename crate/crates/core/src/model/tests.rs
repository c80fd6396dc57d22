use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s2c_tensor::{Tensor, Var};

use super::*;
use crate::config::{ContextMode, SpatialKind, StageKind};
use crate::entropy::{bin_probability, Phase, SliceParams, LIKELIHOOD_FLOOR, SIGMA_FLOOR};
use crate::testutil::{image, tiny, tiny_hybrid};

fn eval_ctx(m: &Model) -> Ctx {
    m.params.bind(false)
}

fn zero_params(m: &mut Model) {
    for t in m.params.tensors_mut() {
        *t = Tensor::zeros(t.shape());
    }
}

#[test]
fn hybrid_s_latent_shape_at_256() {
    let cfg = ModelConfig::preset("hybrid-s").unwrap();
    let mut store = ParamStore::new();
    let g_a = Analysis::new(&mut ParamBuilder::new(&mut store, 0), &cfg).unwrap();
    let x = Var::constant(image(1, 256, 256, 1));
    let y = g_a.forward(&store.bind(false), &x).unwrap();
    assert_eq!(y.shape(), &[1, 320, 16, 16]);
    assert!(y.value().all_finite());
}

#[test]
fn hybrid_t_stage_widths_and_latent() {
    let cfg = ModelConfig::preset("hybrid-t").unwrap();
    let mut store = ParamStore::new();
    let g_a = Analysis::new(&mut ParamBuilder::new(&mut store, 0), &cfg).unwrap();
    let widths: Vec<usize> = g_a.stages.iter().map(|s| s.blocks[0].spec.channels).collect();
    assert_eq!(widths, [96, 192, 256]);
    let blocks: Vec<usize> = g_a.stages.iter().map(|s| s.blocks.len()).collect();
    assert_eq!(blocks, [3, 5, 8]);
    let x = Var::constant(image(1, 64, 64, 2));
    let y = g_a.forward(&store.bind(false), &x).unwrap();
    assert_eq!(y.shape(), &[1, 320, 4, 4]);
}

#[test]
fn hyper_shapes_for_full_width_channels() {
    let cfg = ModelConfig::preset("hybrid-s").unwrap();
    let mut store = ParamStore::new();
    let mut pb = ParamBuilder::new(&mut store, 0);
    let h_a = HyperAnalysis::new(&mut pb, &cfg).unwrap();
    let h_s = HyperSynthesis::new(&mut pb, &cfg).unwrap();
    let ctx = store.bind(false);
    let y = Var::constant(Tensor::from_fn(&[1, 320, 16, 16], |i| (i as f64 * 0.01).sin()));
    let z = h_a.forward(&ctx, &y).unwrap();
    assert_eq!(z.shape(), &[1, 192, 4, 4]);
    assert_eq!(h_s.forward(&ctx, &z).unwrap().shape(), &[1, 640, 16, 16]);
    let wrong = Var::constant(Tensor::zeros(&[1, 319, 16, 16]));
    assert!(matches!(h_a.forward(&ctx, &wrong), Err(S2cError::ParamShape(_) | S2cError::Dimension(_))));
}

#[test]
fn doubling_height_doubles_latent_height() {
    let m = Model::new(tiny_hybrid(), 3).unwrap();
    let ctx = eval_ctx(&m);
    let a = m.g_a.forward(&ctx, &Var::constant(image(1, 64, 64, 0))).unwrap();
    let b = m.g_a.forward(&ctx, &Var::constant(image(1, 128, 64, 0))).unwrap();
    assert_eq!(a.dims4().2 * 2, b.dims4().2);
    assert_eq!(a.dims4().3, b.dims4().3);
}

#[test]
fn padded_size_sweep_restores_dimensions() {
    let m = Model::new(tiny_hybrid(), 4).unwrap();
    let ctx = eval_ctx(&m);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let (h, w) = (rng.gen_range(64..=1024), rng.gen_range(64..=1024));
        let x = Tensor::from_fn(&[1, 3, h, w], |i| (i % 251) as f64 / 250.0);
        let padded = pad_input(&x);
        let (_, _, ph, pw) = padded.dims4();
        assert!(ph % 64 == 0 && pw % 64 == 0 && ph - h < 64 && pw - w < 64);
        let y = m.g_a.forward(&ctx, &Var::constant(padded)).unwrap();
        let x_hat = crop_output(&m.g_s.forward(&ctx, &y).unwrap(), h, w).unwrap();
        assert_eq!(x_hat.shape(), &[1, 3, h, w]);
    }
}

#[test]
fn unpadded_input_is_rejected() {
    let m = Model::new(tiny_hybrid(), 0).unwrap();
    let x = Var::constant(image(1, 64, 80, 0));
    let err = m.forward(&eval_ctx(&m), &x, Quantizer::Eval).err().unwrap();
    assert!(matches!(err, S2cError::Dimension(_)));
    assert!(crop_output(&x, 65, 10).is_err());
}

#[test]
fn zero_parameters_give_constant_output_and_softplus_scale() {
    for mode in [ContextMode::Scctx, ContextMode::HyperpriorOnly] {
        let mut cfg = tiny_hybrid();
        cfg.entropy.context_mode = mode;
        let mut m = Model::new(cfg, 5).unwrap();
        zero_params(&mut m);
        let out = m.forward(&eval_ctx(&m), &Var::constant(image(1, 64, 64, 9)), Quantizer::Eval).unwrap();
        let xh = out.x_hat.value().data();
        assert!(xh.iter().all(|v| v.is_finite() && *v == xh[0]));
        let ln2 = 2f64.ln();
        assert!(out.sigma.value().data().iter().all(|&s| s == ln2), "{mode:?}");
        assert!(out.mu.value().data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn forward_bundle_contracts() {
    let m = Model::new(tiny_hybrid(), 6).unwrap();
    let out = m.forward(&eval_ctx(&m), &Var::constant(image(1, 64, 64, 3)), Quantizer::Eval).unwrap();
    assert_eq!(out.mu.shape(), &[1, 12, 4, 4]);
    assert_eq!(out.sigma.shape(), &[1, 12, 4, 4]);
    assert_eq!(out.z.shape(), &[1, 6, 1, 1]);
    assert_eq!(out.x_hat.shape(), &[1, 3, 64, 64]);
    assert!(out.sigma.value().data().iter().all(|&s| s >= SIGMA_FLOOR));
    for ((&yh, &mu), (&s, &lik)) in out
        .y_hat
        .value()
        .data()
        .iter()
        .zip(out.mu.value().data())
        .zip(out.sigma.value().data().iter().zip(out.lik_y.value().data()))
    {
        let delta = yh - mu;
        assert!((delta - delta.round()).abs() < 1e-9);
        let want = bin_probability(delta.round(), s).max(LIKELIHOOD_FLOOR);
        assert!((lik - want).abs() < 1e-9 * want.max(1.0));
    }
    let rate = out.rate(64 * 64);
    assert!(rate.bpp_y > 0.0 && rate.bpp_z > 0.0 && rate.total().is_finite());
}

#[test]
fn identity_preset_and_arrangements() {
    let id = ModelConfig::preset("s2c-identity").unwrap();
    for st in &id.main_stages {
        assert_eq!(id.block_spec(st).spatial, SpatialKind::Identity);
    }
    let kinds = |name: &str| -> String {
        ModelConfig::preset(name).unwrap().main_stages.iter().map(|s| s.kind.letter()).collect()
    };
    assert_eq!(kinds("hybrid-s"), "CAA");
    for arr in ["ccc", "aaa", "acc", "cca", "caa"] {
        assert_eq!(kinds(&format!("arrangement-{arr}")), arr.to_uppercase());
    }
}

#[test]
fn synthesis_mirrors_stage_order() {
    let m = Model::new(tiny_hybrid(), 0).unwrap();
    let enc: Vec<SpatialKind> = m.g_a.stages.iter().map(|s| s.blocks[0].spec.spatial).collect();
    let dec: Vec<SpatialKind> = m.g_s.stages.iter().map(|s| s.blocks[0].spec.spatial).collect();
    assert_eq!(enc, [SpatialKind::SepConv, SpatialKind::Attention, SpatialKind::Attention]);
    assert_eq!(dec, [SpatialKind::Attention, SpatialKind::Attention, SpatialKind::SepConv]);
}

#[test]
fn assembly_is_deterministic_per_seed() {
    let a = Model::new(tiny_hybrid(), 11).unwrap();
    let b = Model::new(tiny_hybrid(), 11).unwrap();
    let c = Model::new(tiny_hybrid(), 12).unwrap();
    assert_eq!(a.params.tensors(), b.params.tensors());
    assert_ne!(a.params.tensors(), c.params.tensors());
    let names = |m: &Model| m.params.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect::<Vec<_>>();
    assert_eq!(names(&a), names(&c));
}

#[test]
fn parameter_and_cost_ordering_of_hybrid_sizes() {
    let mut last = (0, 0);
    for name in ["hybrid-s", "hybrid-m", "hybrid-l"] {
        let m = Model::new(ModelConfig::preset(name).unwrap(), 0).unwrap();
        let now = (m.num_params(), m.macs(256, 256));
        assert!(now.0 > last.0 && now.1 > last.1, "{name}: {now:?} vs {last:?}");
        last = now;
    }
}

/// Horizontal shift by 16 px commutes with the pipeline away from the edges.
#[test]
fn shift_consistency_of_convolutional_variants() {
    // Generous bound on the half receptive field of g_s∘g_a for the tiny
    // configuration (about 116 px).
    const BAND: usize = 128;
    for kind in [StageKind::C, StageKind::I] {
        let m = Model::new(tiny([kind; 3]), 8).unwrap();
        let ctx = eval_ctx(&m);
        let (h, w) = (64, 512);
        let wide = image(1, h, w + 16, 4);
        let run = |left: usize| {
            let x = Var::constant(wide.clone()).crop(0, left, h, w);
            m.g_s.forward(&ctx, &m.g_a.forward(&ctx, &x).unwrap()).unwrap().value().clone()
        };
        let (a, b) = (run(0), run(16));
        for c in 0..3 {
            for r in 0..h {
                for x in BAND..w - 16 - BAND {
                    let (u, v) = (b.at4(0, c, r, x), a.at4(0, c, r, x + 16));
                    assert!((u - v).abs() < 1e-9, "{kind:?} ({c},{r},{x}): {u} vs {v}");
                }
            }
        }
    }
}

fn latents(m: &Model, seed: u64) -> (Var, Var) {
    let ctx = eval_ctx(m);
    let y = m.g_a.forward(&ctx, &Var::constant(image(1, 64, 64, seed))).unwrap();
    let (_, _, _, hyper) = m.hyper(&ctx, &y, &mut Quantizer::Eval).unwrap();
    (y, hyper)
}

/// Drive the cursor through the first `k` slices with values from `y`, then
/// return the parameters of slice `k`.
fn params_at(m: &Model, hyper: &Var, y: &Tensor, k: usize) -> SliceParams {
    let ctx = eval_ctx(m);
    let mut cur = m.cursor(hyper.clone()).unwrap();
    for _ in 0..k {
        let s = cur.next_slice().unwrap().clone();
        cur.params(&ctx, &s).unwrap();
        let v = Var::constant(y.narrow_channels(s.channels.start, s.channels.len()));
        cur.submit(&s, v).unwrap();
    }
    let s = cur.next_slice().unwrap().clone();
    cur.params(&ctx, &s).unwrap()
}

#[test]
fn context_parameters_are_causal() {
    let m = Model::new(tiny_hybrid(), 9).unwrap();
    let (y, hyper) = latents(&m, 1);
    let y = y.value().clone();
    let (_, _, h, w) = y.dims4();
    let slices = m.context.slices();
    assert_eq!(slices.len(), 6);
    for (k, slice) in slices.iter().enumerate() {
        let decoded = |c: usize, r: usize, x: usize| {
            c < slice.channels.start
                || (slice.phase == Phase::NonAnchor && slice.channels.contains(&c) && Phase::Anchor.contains(r, x))
        };
        let perturb = |want_decoded: bool| {
            let mut t = y.clone();
            for c in 0..y.dims4().1 {
                for r in 0..h {
                    for x in 0..w {
                        if decoded(c, r, x) == want_decoded {
                            t.set4(0, c, r, x, y.at4(0, c, r, x) + 3.0 + c as f64);
                        }
                    }
                }
            }
            t
        };
        let base = params_at(&m, &hyper, &y, k);
        let future = params_at(&m, &hyper, &perturb(false), k);
        assert_eq!(base.mu.value(), future.mu.value(), "slice {k} saw the future");
        assert_eq!(base.sigma.value(), future.sigma.value(), "slice {k} saw the future");
        if k > 0 {
            let past = params_at(&m, &hyper, &perturb(true), k);
            assert_ne!(base.mu.value(), past.mu.value(), "slice {k} ignores decoded context");
        }
    }
}

#[test]
fn hyperprior_only_mode_uses_hyper_features_alone() {
    let mut cfg = tiny_hybrid();
    cfg.entropy.context_mode = ContextMode::HyperpriorOnly;
    let m = Model::new(cfg, 2).unwrap();
    let (y, hyper) = latents(&m, 2);
    assert_eq!(m.context.slices().len(), 1);
    let p = params_at(&m, &hyper, y.value(), 0);
    let hv = hyper.value();
    assert_eq!(p.mu.value(), &hv.narrow_channels(0, 12));
    let raw = hv.narrow_channels(12, 12);
    for (&s, &r) in p.sigma.value().data().iter().zip(raw.data()) {
        assert_eq!(s, s2c_tensor::special::softplus(r).max(SIGMA_FLOOR));
    }
}

#[test]
fn context_requests_must_follow_the_schedule() {
    let m = Model::new(tiny_hybrid(), 1).unwrap();
    let (y, hyper) = latents(&m, 0);
    let ctx = eval_ctx(&m);
    let slices = m.context.slices();
    let mut cur = m.cursor(hyper).unwrap();
    let ooo = |r: Result<_>| matches!(r, Err(S2cError::OutOfOrder { .. }));
    assert!(ooo(cur.params(&ctx, &slices[1]).map(|_| ())));
    cur.params(&ctx, &slices[0]).unwrap();
    assert!(ooo(cur.params(&ctx, &slices[0]).map(|_| ())));
    let v = |s: &crate::entropy::Slice| Var::constant(y.value().narrow_channels(s.channels.start, s.channels.len()));
    assert!(ooo(cur.submit(&slices[1], v(&slices[1]))));
    cur.submit(&slices[0], v(&slices[0])).unwrap();
    assert!(ooo(cur.submit(&slices[1], v(&slices[1]))), "submit before params");
    assert!(ooo(cur.finish().map(|_| ())));
}
