//! The rasterizer against a per-pixel brute-force reference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvforge::geom::Vec2;
use uvforge::render::{barycentric, pixel_center, rasterize, Raster};

/// Every pixel tests every triangle; nearest wins, ties keep the first.
fn brute_force(screen: &[Vec2], depth: &[f64], tris: &[[usize; 3]], w: usize, h: usize) -> Raster {
    let mut out = Raster {
        width: w,
        height: h,
        tri_id: vec![-1; w * h],
        bary: vec![[0.0; 3]; w * h],
        depth: vec![f64::INFINITY; w * h],
    };
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let c = pixel_center(x, y, w, h);
            for (t, tri) in tris.iter().enumerate() {
                let v = [screen[tri[0]], screen[tri[1]], screen[tri[2]]];
                let area = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[1][1] - v[0][1]) * (v[2][0] - v[0][0]);
                if area == 0.0 {
                    continue;
                }
                let Some(b) = barycentric(c, v) else { continue };
                if b.iter().any(|&x| x < 0.0) {
                    continue;
                }
                let z = b[0] * depth[tri[0]] + b[1] * depth[tri[1]] + b[2] * depth[tri[2]];
                if z < out.depth[p] {
                    out.depth[p] = z;
                    out.tri_id[p] = t as i32;
                    out.bary[p] = b;
                }
            }
        }
    }
    out
}

fn random_scene(rng: &mut ChaCha8Rng) -> (Vec<Vec2>, Vec<f64>, Vec<[usize; 3]>, usize, usize) {
    let w = rng.random_range(1..=32);
    let h = rng.random_range(1..=32);
    let n_tri = rng.random_range(1..=20);
    let mut screen = Vec::new();
    let mut depth = Vec::new();
    let mut tris = Vec::new();
    for t in 0..n_tri {
        // Some triangles reuse earlier vertices so shared edges occur.
        let mut idx = [0; 3];
        for slot in idx.iter_mut() {
            if t > 0 && rng.random_bool(0.3) {
                *slot = rng.random_range(0..screen.len());
            } else {
                // Snapping to pixel centers and edges exercises the ties.
                let snap = rng.random_bool(0.3);
                let mut coord = |n: usize| -> f64 {
                    if snap {
                        let k = rng.random_range(0..=2 * n) as f64;
                        k / n as f64 - 1.0
                    } else {
                        rng.random_range(-1.3..1.3)
                    }
                };
                let p = [coord(w), coord(h)];
                screen.push(p);
                depth.push(if rng.random_bool(0.2) { 0.5 } else { rng.random_range(-1.0..1.0) });
                *slot = screen.len() - 1;
            }
        }
        tris.push(idx);
    }
    (screen, depth, tris, w, h)
}

#[test]
fn matches_brute_force_on_random_scenes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for scene in 0..200 {
        let (screen, depth, tris, w, h) = random_scene(&mut rng);
        let fast = rasterize(&screen, &depth, &tris, w, h);
        let slow = brute_force(&screen, &depth, &tris, w, h);
        assert_eq!(fast.tri_id, slow.tri_id, "scene {scene}: triangle ids");
        assert_eq!(fast.bary, slow.bary, "scene {scene}: barycentrics");
        assert_eq!(
            fast.depth.iter().map(|d| d.to_bits()).collect::<Vec<_>>(),
            slow.depth.iter().map(|d| d.to_bits()).collect::<Vec<_>>(),
            "scene {scene}: depth"
        );
    }
}

#[test]
fn full_coverage_of_two_triangle_quad() {
    let screen = vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
    let depth = vec![0.0; 4];
    let tris = vec![[0, 1, 2], [0, 2, 3]];
    let r = rasterize(&screen, &depth, &tris, 9, 7);
    assert_eq!(r.coverage(), 63);
}
