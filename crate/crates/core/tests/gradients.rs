//! End-to-end gradient checks through the image formation pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvforge::fit::{e_lm_with_grad, e_pix, e_pix_grad, Landmarks};
use uvforge::geom::{Vec2, Vec3};
use uvforge::grad::{gradcheck, FnOp};
use uvforge::morphable::{sample_shape, sample_shape_pullback};
use uvforge::render::{form_image_pullback, project, project_pullback, soft_silhouette, soft_silhouette_pullback};
use uvforge::synth::{make_dataset, make_model, SynthConfig, SynthSample};
use uvforge::uvtex::{sample, sample_all, sample_all_pullback, sample_pullback_coord};
use uvforge::{form_image, Camera, Frame, Image, Light, MorphableModel, ParamSet, Plane, RenderConfig, UvMap};

const TOL: f64 = 1e-3;

struct Scene {
    model: MorphableModel,
    sample: SynthSample,
    map: UvMap,
    cfg: RenderConfig,
    w_img: Vec<f64>,
    w_sil: Vec<f64>,
}

fn scene() -> Scene {
    let synth = SynthConfig {
        n_subdiv: 2,
        k_i: 4,
        k_e: 2,
        k_t: 4,
        n_samples: 1,
        image_size: 32,
        uv_size: 8,
        ..SynthConfig::default()
    };
    let model = make_model(&synth).unwrap();
    let sample = make_dataset(&model, &synth).unwrap().remove(0);
    // Keep texels off the [0, 1] color clamp.
    let map = UvMap::new(Image::from_vec(8, 8, sample.uv.image().data().iter().map(|v| 0.1 + 0.8 * v).collect()).unwrap()).unwrap();
    let cfg = RenderConfig::with_size(32, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w_img = (0..32 * 32 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w_sil = (0..32 * 32).map(|_| rng.random_range(-1.0..1.0)).collect();
    Scene {
        model,
        sample,
        map,
        cfg,
        w_img,
        w_sil,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Scene {
    fn loss(&self, map: &UvMap, params: &ParamSet) -> f64 {
        let out = form_image(&self.model, map, params, &self.cfg).unwrap();
        dot(out.image.data(), &self.w_img) + dot(out.silhouette.data(), &self.w_sil)
    }

    fn grads(&self, map: &UvMap, params: &ParamSet) -> (Image, uvforge::render::RenderGrads) {
        let d_img = Image::from_vec(32, 32, self.w_img.clone()).unwrap();
        let d_sil = Plane::from_vec(32, 32, self.w_sil.clone()).unwrap();
        form_image_pullback(&self.model, map, params, &self.cfg, &d_img, Some(&d_sil)).unwrap()
    }

    fn with_slice(&self, f: impl Fn(&mut ParamSet) -> &mut [f64] + Sync, x: &[f64]) -> ParamSet {
        let mut p = self.sample.params.clone();
        f(&mut p).copy_from_slice(x);
        p
    }
}

#[test]
fn form_image_texture_path() {
    let s = scene();
    let x0 = s.map.image().data().to_vec();
    let to_map = |x: &[f64]| UvMap::new(Image::from_vec(8, 8, x.to_vec()).unwrap()).unwrap();
    let f = |x: &[f64]| vec![s.loss(&to_map(x), &s.sample.params)];
    let b = |x: &[f64], ct: &[f64]| s.grads(&to_map(x), &s.sample.params).0.data().iter().map(|g| g * ct[0]).collect();
    let r = gradcheck(&FnOp::new(f, b), &x0, 1e-5).unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn form_image_light_path() {
    let s = scene();
    let x0 = s.sample.params.p_l.to_vec();
    let f = |x: &[f64]| vec![s.loss(&s.map, &s.with_slice(|p| &mut p.p_l[..], x))];
    let b = |x: &[f64], ct: &[f64]| s.grads(&s.map, &s.with_slice(|p| &mut p.p_l[..], x)).1.p_l.iter().map(|g| g * ct[0]).collect();
    let r = gradcheck(&FnOp::new(f, b), &x0, 1e-6).unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn form_image_camera_path() {
    let s = scene();
    let x0 = s.sample.params.p_c.to_vec();
    let f = |x: &[f64]| vec![s.loss(&s.map, &s.with_slice(|p| &mut p.p_c[..], x))];
    let b = |x: &[f64], ct: &[f64]| s.grads(&s.map, &s.with_slice(|p| &mut p.p_c[..], x)).1.p_c.iter().map(|g| g * ct[0]).collect();
    let r = gradcheck(&FnOp::new(f, b), &x0, 1e-7).unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn form_image_coefficient_path() {
    let s = scene();
    let ki = s.sample.params.p_i.len();
    let x0: Vec<f64> = s.sample.params.p_i.iter().chain(&s.sample.params.p_e).copied().collect();
    let params = |x: &[f64]| {
        let mut p = s.sample.params.clone();
        p.p_i = x[..ki].to_vec();
        p.p_e = x[ki..].to_vec();
        p
    };
    let f = |x: &[f64]| vec![s.loss(&s.map, &params(x))];
    let b = |x: &[f64], ct: &[f64]| {
        let g = s.grads(&s.map, &params(x)).1;
        g.p_i.iter().chain(&g.p_e).map(|v| v * ct[0]).collect()
    };
    let r = gradcheck(&FnOp::new(f, b), &x0, 1e-7).unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn shade_colors_and_light() {
    let s = scene();
    let frame = Frame::new(&s.model, &s.sample.params, &s.cfg).unwrap();
    let colors = uvforge::uvtex::UvSampler::new(&s.model.uv_coords, 8, 8).unwrap().sample(&s.map).unwrap();
    let n = colors.len() * 3;
    let mut x0: Vec<f64> = colors.iter().flatten().copied().collect();
    x0.extend_from_slice(&s.sample.params.p_l);
    let split = |x: &[f64]| -> (Vec<Vec3>, Light) {
        let c = x[..n].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        (c, Light::from_params(&x[n..].try_into().unwrap()))
    };
    let f = |x: &[f64]| {
        let (c, l) = split(x);
        vec![dot(frame.shade(&c, &l).unwrap().data(), &s.w_img)]
    };
    let b = |x: &[f64], ct: &[f64]| {
        let (c, l) = split(x);
        let d = Image::from_vec(32, 32, s.w_img.iter().map(|w| w * ct[0]).collect()).unwrap();
        let (dc, dl) = frame.color_pullback(&c, &l, &d);
        dc.iter().flatten().copied().chain(dl).collect()
    };
    let r = gradcheck(&FnOp::new(f, b), &x0, 1e-6).unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn project_vertices_and_camera() {
    let s = scene();
    let shape = sample_shape(&s.model, &s.sample.params.p_i, &s.sample.params.p_e).unwrap();
    let nv = shape.len();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w2: Vec<Vec2> = (0..nv).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let wz: Vec<f64> = (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut x0: Vec<f64> = shape.iter().flatten().copied().collect();
    x0.extend_from_slice(&s.sample.params.p_c);
    let split = |x: &[f64]| -> (Vec<Vec3>, Camera) {
        let v = x[..3 * nv].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        (v, Camera::from_params(&x[3 * nv..].try_into().unwrap()))
    };
    let f = |x: &[f64]| {
        let (v, cam) = split(x);
        let p = project(&v, &cam);
        let a: f64 = p.screen.iter().zip(&w2).map(|(s, w)| s[0] * w[0] + s[1] * w[1]).sum();
        vec![a + dot(&p.depth, &wz)]
    };
    let b = |x: &[f64], ct: &[f64]| {
        let (v, cam) = split(x);
        let ds: Vec<Vec2> = w2.iter().map(|w| [w[0] * ct[0], w[1] * ct[0]]).collect();
        let dv: Vec<Vec3> = wz.iter().map(|w| [0.0, 0.0, w * ct[0]]).collect();
        let (gv, gc) = project_pullback(&v, &cam, &ds, &dv);
        gv.iter().flatten().copied().chain(gc).collect()
    };
    let r = gradcheck(&FnOp::new(f, b), &x0, 1e-6).unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn soft_silhouette_screen_positions() {
    let s = scene();
    let frame = Frame::new(&s.model, &s.sample.params, &s.cfg).unwrap();
    let screen = &frame.projection().screen;
    let x0: Vec<f64> = screen.iter().flatten().copied().collect();
    let sigma = 1e-3;
    let tri = &s.model.triangles;
    let to2 = |x: &[f64]| -> Vec<Vec2> { x.chunks_exact(2).map(|c| [c[0], c[1]]).collect() };
    let f = |x: &[f64]| vec![dot(soft_silhouette(&to2(x), tri, 32, 32, sigma).data(), &s.w_sil)];
    let b = |x: &[f64], ct: &[f64]| {
        let d: Vec<f64> = s.w_sil.iter().map(|w| w * ct[0]).collect();
        soft_silhouette_pullback(&to2(x), tri, 32, 32, sigma, &d).into_iter().flatten().collect()
    };
    let r = gradcheck(&FnOp::new(f, b), &x0, 1e-7).unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn uv_sampling_map_and_coordinates() {
    let s = scene();
    let coords = &s.model.uv_coords;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w: Vec<f64> = (0..coords.len() * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let to_map = |x: &[f64]| UvMap::new(Image::from_vec(8, 8, x.to_vec()).unwrap()).unwrap();
    let f = |x: &[f64]| vec![dot(&sample_all(&to_map(x), coords).unwrap().concat(), &w)];
    let b = |x: &[f64], ct: &[f64]| {
        let d: Vec<Vec3> = w.chunks_exact(3).map(|c| [c[0] * ct[0], c[1] * ct[0], c[2] * ct[0]]).collect();
        sample_all_pullback(&to_map(x), coords, &d).unwrap().into_vec()
    };
    let r = gradcheck(&FnOp::new(f, b), s.map.image().data(), 1e-5).unwrap();
    assert!(r.max_rel_error < TOL, "map {r:?}");

    // Coordinate gradient away from texel-center kinks.
    for c0 in [[0.31, 0.47], [0.77, 0.12], [0.05, 0.93]] {
        let f = |c: &[f64]| vec![dot(&sample(&s.map, [c[0], c[1]]).unwrap(), &[0.3, -0.5, 0.9])];
        let b = |c: &[f64], ct: &[f64]| {
            let d = [0.3 * ct[0], -0.5 * ct[0], 0.9 * ct[0]];
            sample_pullback_coord(&s.map, [c[0], c[1]], d).unwrap().to_vec()
        };
        let r = gradcheck(&FnOp::new(f, b), &c0, 1e-7).unwrap();
        assert!(r.max_rel_error < TOL, "coord {c0:?} {r:?}");
    }
}

#[test]
fn pixel_energy_through_the_renderer() {
    let s = scene();
    let target = s.sample.image.clone();
    let mask = s.sample.silhouette.clone();
    let x0 = s.sample.params.p_l.iter().map(|v| v * 1.1).collect::<Vec<_>>();
    let render = |x: &[f64]| form_image(&s.model, &s.map, &s.with_slice(|p| &mut p.p_l[..], x), &s.cfg).unwrap();
    let f = |x: &[f64]| vec![e_pix(&target, &render(x).image, &mask).unwrap()];
    let b = |x: &[f64], ct: &[f64]| {
        let out = render(x);
        let mut d = e_pix_grad(&target, &out.image, &mask).unwrap();
        d.data_mut().iter_mut().for_each(|v| *v *= ct[0]);
        let p = s.with_slice(|p| &mut p.p_l[..], x);
        form_image_pullback(&s.model, &s.map, &p, &s.cfg, &d, None).unwrap().1.p_l.to_vec()
    };
    let r = gradcheck(&FnOp::new(f, b), &x0, 1e-6).unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn landmark_energy_coefficients_and_camera() {
    let s = scene();
    let lm: &Landmarks = &s.sample.landmarks;
    let ki = s.sample.params.p_i.len();
    let ke = s.sample.params.p_e.len();
    let mut x0: Vec<f64> = s.sample.params.p_i.iter().chain(&s.sample.params.p_e).map(|v| v + 0.05).collect();
    x0.extend(s.sample.params.p_c.iter().map(|v| v + 0.01));
    let eval = |x: &[f64]| {
        let shape = sample_shape(&s.model, &x[..ki], &x[ki..ki + ke]).unwrap();
        let cam = Camera::from_params(&x[ki + ke..].try_into().unwrap());
        e_lm_with_grad(lm, &shape, &cam, &s.model).unwrap()
    };
    let f = |x: &[f64]| vec![eval(x).0];
    let b = |x: &[f64], ct: &[f64]| {
        let (_, d_shape, d_cam) = eval(x);
        let (gi, ge) = sample_shape_pullback(&s.model, &d_shape);
        gi.into_iter().chain(ge).chain(d_cam).map(|v| v * ct[0]).collect()
    };
    let r = gradcheck(&FnOp::new(f, b), &x0, 1e-6).unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}
