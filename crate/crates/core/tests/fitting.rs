//! Shape and texture fitting against synthetic targets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use uvforge::fit::{fit_shape, fit_texture_light, FitConfig, TextureSource};
use uvforge::gan::{Generator, GeneratorArch};
use uvforge::metrics::l21_error;
use uvforge::morphable::sample_texture;
use uvforge::synth::{make_dataset, make_model, SynthConfig, SynthSample};
use uvforge::{Frame, Image, Light, MorphableModel, RenderConfig};

fn data(n: usize, image_size: usize) -> (MorphableModel, Vec<SynthSample>) {
    let cfg = SynthConfig {
        n_samples: n,
        image_size,
        ..SynthConfig::default()
    };
    let model = make_model(&cfg).unwrap();
    let samples = make_dataset(&model, &cfg).unwrap();
    (model, samples)
}

/// Renders the linear texture straight through the mesh, with no UV resampling.
fn linear_target(model: &MorphableModel, s: &SynthSample) -> Image {
    let frame = Frame::new(model, &s.params, &RenderConfig::with_size(s.image.width(), s.image.height())).unwrap();
    let colors = sample_texture(model, s.params.p_t.as_ref().unwrap()).unwrap();
    frame.shade(&colors, &Light::from_params(&s.params.p_l)).unwrap()
}

#[test]
fn ground_truth_is_a_fixed_point() {
    let (model, samples) = data(1, 32);
    let s = &samples[0];
    let target = linear_target(&model, s);
    let cfg = FitConfig {
        steps: 20,
        lambda_lm: 1.0,
        ..FitConfig::default()
    };
    let fit = fit_shape(&target, &s.landmarks, &model, &s.params, &cfg, &RenderConfig::default()).unwrap();
    assert!(fit.trace[0].e_pix < 1e-12, "{:?}", fit.trace[0]);
    assert!(fit.trace[0].e_lm < 1e-20, "{:?}", fit.trace[0]);
    assert!(fit.loss <= fit.trace[0].total);
}

#[test]
fn perturbed_coefficients_are_recovered() {
    let (model, samples) = data(3, 64);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = FitConfig {
        lr: 0.005,
        lr_final_ratio: 0.2,
        steps: 600,
        ..FitConfig::default()
    };
    for (i, s) in samples.iter().enumerate() {
        let mut init = s.params.clone();
        for v in init.p_i.iter_mut().chain(init.p_e.iter_mut()).chain(init.p_t.as_mut().unwrap()) {
            *v += noise.sample(&mut rng);
        }
        let fit = fit_shape(&s.image, &s.landmarks, &model, &init, &cfg, &RenderConfig::default()).unwrap();
        assert_eq!(fit.trace.len(), cfg.steps);
        let ratio = fit.loss / fit.trace[0].total;
        assert!(ratio <= 0.1, "sample {i}: {} -> {} ({ratio})", fit.trace[0].total, fit.loss);
    }
}

#[test]
fn linear_texture_self_reconstruction() {
    let (model, samples) = data(2, 64);
    let cfg = FitConfig {
        steps: 300,
        lr: 0.05,
        ..FitConfig::default()
    };
    for s in &samples {
        let mut params = s.params.clone();
        params.p_l[3] += 0.1;
        params.p_l[4] -= 0.1;
        let init = vec![0.0; model.k_tex()];
        let fit = fit_texture_light(&s.image, &params, &model, TextureSource::Linear, &init, &cfg, &RenderConfig::default())
            .unwrap();
        let err = l21_error(&s.image, &fit.output.image, &fit.output.coverage()).unwrap();
        assert!(err < 0.02, "l21 {err}");
        assert!(fit.loss <= fit.trace[0]);
    }
}

#[test]
fn known_linear_texture_is_recovered_from_zero() {
    let (model, samples) = data(4, 64);
    let cfg = FitConfig {
        steps: 800,
        lr: 0.1,
        lr_final_ratio: 0.02,
        ..FitConfig::default()
    };
    for (i, s) in samples.iter().enumerate() {
        let target = linear_target(&model, s);
        let init = vec![0.0; model.k_tex()];
        let fit = fit_texture_light(&target, &s.params, &model, TextureSource::Linear, &init, &cfg, &RenderConfig::default())
            .unwrap();
        assert!(fit.loss < 1e-3, "sample {i}: L1 {}", fit.loss);
    }
}

#[test]
fn negative_light_gains_are_projected_back() {
    let (model, samples) = data(1, 32);
    let s = &samples[0];
    let target = linear_target(&model, s);
    let mut params = s.params.clone();
    params.p_l[5] = -0.3;
    let cfg = FitConfig {
        steps: 30,
        ..FitConfig::default()
    };
    let init = s.params.p_t.clone().unwrap();
    let fit = fit_texture_light(&target, &params, &model, TextureSource::Linear, &init, &cfg, &RenderConfig::default())
        .unwrap();
    assert!(fit.light[3..].iter().all(|&g| g >= 0.0), "{:?}", fit.light);
    let shape = fit_shape(&target, &s.landmarks, &model, &params, &cfg, &RenderConfig::default()).unwrap();
    assert!(shape.params.p_l[3..].iter().all(|&g| g >= 0.0), "{:?}", shape.params.p_l);
}

#[test]
fn latent_texture_self_reconstruction() {
    let (model, samples) = data(1, 32);
    let s = &samples[0];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let arch = GeneratorArch {
        uv_size: 16,
        ..GeneratorArch::default()
    };
    let g = Generator::new(arch, &mut rng).unwrap();
    let z_star: Vec<f64> = (0..g.latent_dim()).map(|i| ((i as f64) * 0.7).sin()).collect();
    let frame = Frame::new(&model, &s.params, &RenderConfig::with_size(32, 32)).unwrap();
    let sampler = uvforge::uvtex::UvSampler::new(&model.uv_coords, 16, 16).unwrap();
    let target = frame
        .shade(&sampler.sample(&g.generate(&z_star).unwrap()).unwrap(), &Light::from_params(&s.params.p_l))
        .unwrap();
    let cfg = FitConfig {
        steps: 200,
        lr: 0.05,
        ..FitConfig::default()
    };
    let noise = Normal::new(0.0, 0.1).unwrap();
    let init: Vec<f64> = z_star.iter().map(|v| v + noise.sample(&mut rng)).collect();
    let fit = fit_texture_light(&target, &s.params, &model, TextureSource::Latent(&g), &init, &cfg, &RenderConfig::default())
        .unwrap();
    let err = l21_error(&target, &fit.output.image, &fit.output.coverage()).unwrap();
    assert!(fit.loss < 0.5 * fit.trace[0], "{} -> {}", fit.trace[0], fit.loss);
    assert!(err < 0.02, "l21 {err}");
}

#[test]
fn gray_target_stays_finite() {
    let (model, samples) = data(1, 32);
    let s = &samples[0];
    let target = Image::filled(32, 32, [0.5; 3]);
    let cfg = FitConfig {
        steps: 50,
        ..FitConfig::default()
    };
    let init = s.params.p_t.clone().unwrap();
    let fit = fit_texture_light(&target, &s.params, &model, TextureSource::Linear, &init, &cfg, &RenderConfig::default())
        .unwrap();
    assert!(fit.texture.iter().chain(&fit.light).all(|v| v.is_finite()));
    assert!(fit.loss < fit.trace[0]);
    let shape = fit_shape(&target, &s.landmarks, &model, &s.params, &cfg, &RenderConfig::default()).unwrap();
    assert!(shape.params.to_vec().iter().all(|v| v.is_finite()));
}
