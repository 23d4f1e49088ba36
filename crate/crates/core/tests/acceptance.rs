//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sfm_core::attention::{
    daconv, daconv_weight_vjp, generate_attention, generate_attention_forward, kernel_softmax, laplacian_attention,
    pyramid_features, AttentionMap, AttentionParams, DaConvParams,
};
use sfm_core::demod::{
    barycentric_weights, lprm_refine, lprm_refine_vjp, lprm_relation, lprm_relation_vjp, nuu_upsample, LprmCascade,
    LprmStage, RelationField, TriangleMesh, RELATIONS,
};
use sfm_core::objective::{
    fm_loss_grad, grad_check, seg_loss_grad, shf_loss_grad, total_loss, train_toy, FnDifferentiable, LossWeights,
    TrainConfig, DEFAULT_STEP,
};
use sfm_core::scenes::{Scene, SceneKind};
use sfm_core::spectral::{aliasing_ratio, aliasing_ratio_map, dft2d, high_band_power_map, signed_frequency};
use sfm_core::tensor::{bilinear_plane, decimate, decimate_plane, resize_bilinear, FeatureMap, LabelMap, Plane};
use sfm_core::warp::{map_coordinates, map_coordinates_forward, modulate, sample_grid, sample_grid_vjp, CoordinateGrid, GaussianKernel};
use sfm_core::Result;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        passed,
        detail: detail.into(),
    })
}

fn run(id: usize, title: &str, budget: Duration, check: impl FnOnce() -> Result<Verdict>) -> bool {
    let start = Instant::now();
    let outcome = check();
    let elapsed = start.elapsed();
    let (passed, detail) = match outcome {
        Ok(v) => (v.passed && elapsed <= budget, v.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "criterion {id} {}: {title} | {detail} | {:.2}s (budget {:.0}s)",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    passed
}

fn random_plane(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Plane {
    Plane::from_fn(h, w, |_, _| rng.sample(StandardNormal))
}

fn random_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    FeatureMap::new(c, h, w, (0..c * h * w).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Non-DC bin with the largest magnitude, as a signed row frequency.
fn dominant_row_frequency(plane: &Plane) -> Result<(usize, f64)> {
    let spectrum = dft2d(plane)?;
    let (k, _) = spectrum.dominant_bin();
    Ok((k, signed_frequency(k, plane.height()).abs()))
}

fn criterion_1() -> Result<Verdict> {
    let n = 64;
    let f = 0.4;
    let signal = Plane::from_fn(n, n, |m, _| (2.0 * PI * f * m as f64).cos());
    let up = 2 * n;
    let mut upsampled = Plane::zeros(up, up);
    for i in 0..up {
        for j in 0..up {
            let v = bilinear_plane(&signal, i as f64 / (up - 1) as f64, j as f64 / (up - 1) as f64)?;
            upsampled.set(i, j, v);
        }
    }
    let (bin, freq) = dominant_row_frequency(&upsampled)?;
    let bin_width = 1.0 / up as f64;
    let freq_ok = (freq - f / 2.0).abs() <= bin_width;
    let before = aliasing_ratio(&signal, 0.25)?;
    let after = aliasing_ratio(&upsampled, 0.25)?;
    let before_ok = (before - 1.0).abs() < 1e-9;
    let after_ok = after < 0.05;
    verdict(
        freq_ok && before_ok && after_ok,
        format!(
            "dominant bin {bin} -> |f| = {freq:.4} (target 0.2 ± {bin_width:.4}: {}); AR before = {before:.4} (target 1.0: {}); AR after = {after:.4} (target < 0.05: {})",
            ok(freq_ok),
            ok(before_ok),
            ok(after_ok)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "missed"
    }
}

fn criterion_2() -> Result<Verdict> {
    let signal = Plane::from_fn(64, 64, |m, _| (2.0 * PI * 3.0 / 8.0 * m as f64).cos());
    let (k_in, f_in) = dominant_row_frequency(&signal)?;
    let decimated = decimate_plane(&signal, 2)?;
    let (k_out, f_out) = dominant_row_frequency(&decimated)?;
    let spectrum = dft2d(&decimated)?;
    // every other bin must be empty
    let mut leak: f64 = 0.0;
    for k in 0..spectrum.rows() {
        for l in 0..spectrum.cols() {
            if l == 0 && (k == 8 || k == 24) {
                continue;
            }
            leak = leak.max(spectrum.get(k, l).norm());
        }
    }
    let passed = f_in == 0.375 && f_out == 0.25 && k_out == 8 && leak < 1e-12;
    verdict(
        passed,
        format!("input bin {k_in} (|f| = {f_in}), decimated bin {k_out} (|f| = {f_out}), max other bin {leak:.1e}"),
    )
}

fn laplacian_modulation(scene: &Scene) -> Result<(FeatureMap, CoordinateGrid)> {
    let attn = laplacian_attention(&scene.image)?;
    let kernel = GaussianKernel::for_extent(scene.image.height(), scene.image.width());
    modulate(&scene.image, &attn, kernel)
}

fn criterion_3() -> Result<Verdict> {
    let scene = Scene::generate(SceneKind::Texture, 64, 64, 0)?;
    let (modulated, _) = laplacian_modulation(&scene)?;
    let before = aliasing_ratio_map(&scene.image, 0.25)?;
    let after = aliasing_ratio_map(&modulated, 0.25)?;
    let reduction = 1.0 - after / before;
    verdict(
        reduction >= 0.10,
        format!("AR original {before:.4}, modulated {after:.4}, relative reduction {:.1}% (need >= 10%)", 100.0 * reduction),
    )
}

fn criterion_4() -> Result<Verdict> {
    let mut lines = Vec::new();
    let mut passed = true;
    for kind in [SceneKind::Texture, SceneKind::Boundary] {
        let scene = Scene::generate(kind, 64, 64, 0)?;
        let (h, w) = (scene.image.height(), scene.image.width());
        let (modulated, grid) = laplacian_modulation(&scene)?;
        let demodulated = nuu_upsample(&decimate(&modulated, 2)?, &grid.decimate(2)?, h, w)?;
        let baseline_planes: Vec<Plane> = decimate(&scene.image, 2)?
            .planes()
            .iter()
            .map(|p| resize_bilinear(p, h, w))
            .collect();
        let baseline = FeatureMap::from_planes(&baseline_planes)?;
        let hf_demod = high_band_power_map(&demodulated, 0.25)?;
        let hf_base = high_band_power_map(&baseline, 0.25)?;
        passed &= hf_demod > hf_base;
        lines.push(format!("{kind}: HF demodulated {hf_demod:.3e} vs baseline {hf_base:.3e}"));
    }
    verdict(passed, lines.join("; "))
}

fn criterion_5() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_map(&mut rng, 4, 32, 32);
    let (modulated, grid) = modulate(&x, &AttentionMap::uniform(32, 32), GaussianKernel::for_extent(32, 32))?;
    let mut y = nuu_upsample(&modulated, &grid, 32, 32)?;
    for d in [1, 2, 4, 8, 16] {
        y = lprm_refine(&y, &RelationField::centre(32, 32)?, d)?;
    }
    let err = y.max_abs_diff(&x);
    verdict(err <= 1e-9, format!("max abs error {err:.2e} (need <= 1e-9)"))
}

fn in_circle_violations(mesh: &TriangleMesh) -> usize {
    let mut bad = 0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let [a, b, c] = mesh.triangle_points(t);
        // circumcentre by the perpendicular-bisector formula
        let d = 2.0 * (a.0 * (b.1 - c.1) + b.0 * (c.1 - a.1) + c.0 * (a.1 - b.1));
        let sq = |p: (f64, f64)| p.0 * p.0 + p.1 * p.1;
        let ux = (sq(a) * (b.1 - c.1) + sq(b) * (c.1 - a.1) + sq(c) * (a.1 - b.1)) / d;
        let uy = (sq(a) * (c.0 - b.0) + sq(b) * (a.0 - c.0) + sq(c) * (b.0 - a.0)) / d;
        let r2 = (a.0 - ux).powi(2) + (a.1 - uy).powi(2);
        for (k, p) in mesh.vertices().iter().enumerate() {
            if !tri.contains(&k) && (p.0 - ux).powi(2) + (p.1 - uy).powi(2) < r2 * (1.0 - 1e-9) {
                bad += 1;
            }
        }
    }
    bad
}

fn criterion_6() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    let mut bary_err: f64 = 0.0;
    let mut uncovered = 0usize;
    for _ in 0..100 {
        let n = rng.gen_range(16..=64);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
        let mesh = TriangleMesh::new(&pts)?;
        violations += in_circle_violations(&mesh);
        for t in 0..mesh.triangles().len() {
            let [a, b, c] = mesh.triangle_points(t);
            let (s, r): (f64, f64) = (rng.gen(), rng.gen());
            let (s, r) = if s + r > 1.0 { (1.0 - s, 1.0 - r) } else { (s, r) };
            let q = (a.0 + s * (b.0 - a.0) + r * (c.0 - a.0), a.1 + s * (b.1 - a.1) + r * (c.1 - a.1));
            let w = barycentric_weights(a, b, c, q)?;
            let rec = (w[0] * a.0 + w[1] * b.0 + w[2] * c.0, w[0] * a.1 + w[1] * b.1 + w[2] * c.1);
            bary_err = bary_err.max((rec.0 - q.0).abs()).max((rec.1 - q.1).abs());
        }
    }
    let mut affine_err: f64 = 0.0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (h, w) = (rng.gen_range(8..=20), rng.gen_range(8..=20));
        let attn = AttentionMap::from_logits(&random_plane(&mut rng, h, w));
        let grid = map_coordinates(&attn, GaussianKernel::new(rng.gen_range(1..=3))?)?;
        let (a, b, c): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
        let field = FeatureMap::new(1, h, w, grid.points().iter().map(|&(u, v)| a * u + b * v + c).collect())?;
        let (oh, ow) = (rng.gen_range(8..=24), rng.gen_range(8..=24));
        let out = nuu_upsample(&field, &grid, oh, ow)?;
        for i in 0..oh {
            for j in 0..ow {
                let expect = a * i as f64 / (oh - 1) as f64 + b * j as f64 / (ow - 1) as f64 + c;
                affine_err = affine_err.max((out.get(0, i, j) - expect).abs());
            }
        }
        let interp = sfm_core::demod::Interpolator::new(&grid, oh, ow)?;
        uncovered += interp.extrapolated();
    }
    verdict(
        violations == 0 && bary_err <= 1e-12 && affine_err <= 1e-9,
        format!(
            "empty-circumcircle violations {violations} over 100 sets; barycentric reconstruction {bary_err:.1e}; affine nuu error {affine_err:.1e}; uncovered pixels {uncovered}"
        ),
    )
}

struct GradCase {
    name: &'static str,
    worst: f64,
}

fn grad_case(
    name: &'static str,
    seeds: std::ops::Range<u64>,
    mut one: impl FnMut(&mut ChaCha8Rng) -> Result<f64>,
) -> Result<GradCase> {
    let mut worst: f64 = 0.0;
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        worst = worst.max(one(&mut rng)?);
    }
    Ok(GradCase { name, worst })
}

fn extent(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.gen_range(8..=16), rng.gen_range(8..=16))
}

fn criterion_7() -> Result<Verdict> {
    let seeds = 0..10u64;
    let mut cases = Vec::new();

    cases.push(grad_case("daconv", seeds.clone(), |rng| {
        let (h, w) = extent(rng);
        let x = random_map(rng, 2, h, w);
        let probe = random_map(rng, 2, h, w);
        let raw: Vec<f64> = (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = FnDifferentiable::new(
            |p: &[f64]| Ok(dot(daconv(&x, &DaConvParams::new(3, 2, p.to_vec())?)?.data(), probe.data())),
            |p: &[f64]| {
                let params = DaConvParams::new(3, 2, p.to_vec())?;
                Ok(params.raw_vjp(&daconv_weight_vjp(&x, 3, &probe)))
            },
        );
        Ok(grad_check(&f, &raw, DEFAULT_STEP)?.max_rel_error())
    })?);

    cases.push(grad_case("generate_attention", seeds.clone(), |rng| {
        let (h, w) = extent(rng);
        let c = 2;
        let x = random_map(rng, c, h, w);
        let pyramid = pyramid_features(&x)?;
        let probe = random_plane(rng, h, w).map(|v| v * (h * w) as f64);
        let unpack = |p: &[f64]| -> Result<AttentionParams> {
            Ok(AttentionParams {
                daconv: DaConvParams::new(3, c, p[..9 * c].to_vec())?,
                projection: p[9 * c..14 * c].to_vec(),
                bias: p[14 * c],
            })
        };
        let start: Vec<f64> = (0..14 * c + 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = FnDifferentiable::new(
            |p: &[f64]| Ok(dot(generate_attention(&x, &unpack(p)?)?.plane().data(), probe.data())),
            |p: &[f64]| {
                let params = unpack(p)?;
                let g = generate_attention_forward(&x, &pyramid, &params)?.vjp(&x, &params, &probe);
                let mut out = g.daconv_raw;
                out.extend(g.projection);
                out.push(g.bias);
                Ok(out)
            },
        )
        // the bias gradient is identically zero (softmax is shift invariant), so it
        // is checked together with the projection weights
        .with_groups(vec![("daconv".into(), 0..9 * c), ("head".into(), 9 * c..14 * c + 1)]);
        Ok(grad_check(&f, &start, DEFAULT_STEP)?.max_rel_error())
    })?);

    cases.push(grad_case("map_coordinates", seeds.clone(), |rng| {
        let (h, w) = (9, 9);
        let kernel = GaussianKernel::new(rng.gen_range(1..=4))?;
        let logits: Vec<f64> = (0..h * w).map(|_| rng.sample(StandardNormal)).collect();
        let pu: Vec<f64> = (0..h * w).map(|_| rng.sample(StandardNormal)).collect();
        let pv: Vec<f64> = (0..h * w).map(|_| rng.sample(StandardNormal)).collect();
        let attention = |p: &[f64]| AttentionMap::from_logits(&Plane::new(h, w, p.to_vec()).unwrap());
        let f = FnDifferentiable::new(
            |p: &[f64]| {
                let g = map_coordinates(&attention(p), kernel)?;
                Ok(dot(g.u_values(), &pu) + dot(g.v_values(), &pv))
            },
            |p: &[f64]| {
                let s = attention(p);
                let g_s = map_coordinates_forward(&s, kernel)?.vjp(&pu, &pv);
                Ok(s.logits_vjp(&g_s).into_data())
            },
        );
        Ok(grad_check(&f, &logits, DEFAULT_STEP)?.max_rel_error())
    })?);

    cases.push(grad_case("bilinear sampling", seeds.clone(), |rng| {
        let (h, w) = extent(rng);
        let x = random_map(rng, 2, h, w);
        let (gh, gw) = (5, 6);
        // keep sample points >= 1e-3 (normalised) from integer pixel coordinates
        let mut coord = |n: usize| {
            let cell = rng.gen_range(0..n - 1) as f64;
            let margin = 1e-3 * (n - 1) as f64;
            (cell + rng.gen_range(margin..1.0 - margin)) / (n - 1) as f64
        };
        let mut start: Vec<f64> = (0..gh * gw).map(|_| coord(h)).collect();
        start.extend((0..gh * gw).map(|_| coord(w)));
        let probe = random_map(rng, 2, gh, gw);
        let grid = |p: &[f64]| CoordinateGrid::new(gh, gw, p[..gh * gw].to_vec(), p[gh * gw..].to_vec());
        let f = FnDifferentiable::new(
            |p: &[f64]| Ok(dot(sample_grid(&x, &grid(p)?).data(), probe.data())),
            |p: &[f64]| {
                let (mut gu, gv) = sample_grid_vjp(&x, &grid(p)?, &probe);
                gu.extend(gv);
                Ok(gu)
            },
        );
        Ok(grad_check(&f, &start, DEFAULT_STEP)?.max_rel_error())
    })?);

    cases.push(grad_case("lprm relation + refine", seeds.clone(), |rng| {
        let (h, w) = extent(rng);
        let (cin, k) = (4, 3);
        let d = rng.gen_range(1..=3);
        let n_w = RELATIONS * cin * 9;
        let (np, nx) = (k * h * w, cin * h * w);
        let probe = random_map(rng, k, h, w);
        let mut start: Vec<f64> = (0..np + nx).map(|_| rng.sample(StandardNormal)).collect();
        start.extend((0..n_w + RELATIONS).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)));
        let unpack = |p: &[f64]| -> Result<(FeatureMap, FeatureMap, LprmStage)> {
            let mut bias = [0.0; RELATIONS];
            bias.copy_from_slice(&p[np + nx + n_w..]);
            Ok((
                FeatureMap::new(k, h, w, p[..np].to_vec())?,
                FeatureMap::new(cin, h, w, p[np..np + nx].to_vec())?,
                LprmStage::new(cin, p[np + nx..np + nx + n_w].to_vec(), bias)?,
            ))
        };
        let f = FnDifferentiable::new(
            |p: &[f64]| {
                let (pred, x, stage) = unpack(p)?;
                let rel = lprm_relation(&x, &stage, d)?;
                Ok(dot(lprm_refine(&pred, &rel, d)?.data(), probe.data()))
            },
            |p: &[f64]| {
                let (pred, x, stage) = unpack(p)?;
                let rel = lprm_relation(&x, &stage, d)?;
                let (g_pred, g_rel) = lprm_refine_vjp(&pred, &rel, d, &probe);
                let (sg, g_x) = lprm_relation_vjp(&x, &stage, d, &rel, &g_rel);
                let mut out = g_pred.into_data();
                out.extend(g_x.into_data());
                out.extend(sg.weights);
                out.extend(sg.bias);
                Ok(out)
            },
        )
        .with_groups(vec![
            ("pred".into(), 0..np),
            ("xcomp".into(), np..np + nx),
            ("weights".into(), np + nx..np + nx + n_w),
            ("bias".into(), np + nx + n_w..np + nx + n_w + RELATIONS),
        ]);
        Ok(grad_check(&f, &start, DEFAULT_STEP)?.max_rel_error())
    })?);

    cases.push(grad_case("lprm cascade", seeds.clone(), |rng| {
        let (h, w) = extent(rng);
        let (cin, k) = (3, 2);
        let mut cascade = LprmCascade::zeros(cin, &[1, 2, 4])?;
        for stage in &mut cascade.stages {
            for v in stage.weights.iter_mut() {
                *v = 0.3 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let pred = random_map(rng, k, h, w);
        let probe = random_map(rng, k, h, w);
        let start = random_map(rng, cin, h, w).into_data();
        let f = FnDifferentiable::new(
            |p: &[f64]| Ok(dot(cascade.run(&pred, &FeatureMap::new(cin, h, w, p.to_vec())?)?.data(), probe.data())),
            |p: &[f64]| {
                let fwd = cascade.forward(&pred, &FeatureMap::new(cin, h, w, p.to_vec())?)?;
                Ok(cascade.vjp(&fwd, &probe).xcomp.into_data())
            },
        );
        Ok(grad_check(&f, &start, DEFAULT_STEP)?.max_rel_error())
    })?);

    cases.push(grad_case("fm_loss", seeds.clone(), |rng| {
        let (h, w) = (8, 8);
        let start = random_map(rng, 2, h, w).into_data();
        let f = FnDifferentiable::new(
            |p: &[f64]| Ok(fm_loss_grad(&FeatureMap::new(2, h, w, p.to_vec())?, 0.25)?.0),
            |p: &[f64]| Ok(fm_loss_grad(&FeatureMap::new(2, h, w, p.to_vec())?, 0.25)?.1.into_data()),
        );
        Ok(grad_check(&f, &start, DEFAULT_STEP)?.max_rel_error())
    })?);

    cases.push(grad_case("shf_loss", seeds.clone(), |rng| {
        let (h, w) = extent(rng);
        let n = h * w;
        let target = CoordinateGrid::new(h, w, (0..n).map(|_| rng.gen()).collect(), (0..n).map(|_| rng.gen()).collect())?;
        let start: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(0.01..0.99)).collect();
        let grid = |p: &[f64]| CoordinateGrid::new(h, w, p[..n].to_vec(), p[n..].to_vec());
        let f = FnDifferentiable::new(
            |p: &[f64]| Ok(shf_loss_grad(&grid(p)?, &target)?.0),
            |p: &[f64]| {
                let (_, mut gu, gv) = shf_loss_grad(&grid(p)?, &target)?;
                gu.extend(gv);
                Ok(gu)
            },
        );
        Ok(grad_check(&f, &start, DEFAULT_STEP)?.max_rel_error())
    })?);

    cases.push(grad_case("seg_loss", seeds, |rng| {
        let (h, w) = extent(rng);
        let k = 3;
        let labels = LabelMap::new(h, w, k, (0..h * w).map(|_| rng.gen_range(0..k)).collect())?;
        let start: Vec<f64> = (0..k * h * w).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let f = FnDifferentiable::new(
            |p: &[f64]| Ok(seg_loss_grad(&FeatureMap::new(k, h, w, p.to_vec())?, &labels)?.0),
            |p: &[f64]| Ok(seg_loss_grad(&FeatureMap::new(k, h, w, p.to_vec())?, &labels)?.1.into_data()),
        );
        Ok(grad_check(&f, &start, DEFAULT_STEP)?.max_rel_error())
    })?);

    let passed = cases.iter().all(|c| c.worst <= 1e-4);
    let detail = cases
        .iter()
        .map(|c| format!("{} {:.1e}", c.name, c.worst))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(passed, format!("worst relative error over 10 seeds (need <= 1e-4): {detail}"))
}

fn criterion_8() -> Result<Verdict> {
    let config = TrainConfig::new(SceneKind::Boundary, 200, 0.01);
    let first = train_toy(&config)?;
    let second = train_toy(&config)?;
    if let Some(d) = &first.diverged {
        return verdict(false, format!("diverged at iteration {}: {}", d.iteration, d.reason));
    }
    let start = &first.history[0];
    let end = first.history.last().expect("history has rows");
    let loss_ok = end.total <= 0.5 * start.total;
    let density_ok = end.boundary_density_ratio > 1.2;
    let ar_ok = end.aliasing_ratio <= 0.8 * start.aliasing_ratio;
    let deterministic = first.history == second.history && first.model == second.model;
    verdict(
        loss_ok && density_ok && ar_ok && deterministic,
        format!(
            "L_total {:.3} -> {:.3} ({:.1}%, need <= 50%); boundary density ratio {:.3} (need > 1.2); AR {:.4} -> {:.4} ({:.1}%, need <= 80%); deterministic: {deterministic}",
            start.total,
            end.total,
            100.0 * end.total / start.total,
            end.boundary_density_ratio,
            start.aliasing_ratio,
            end.aliasing_ratio,
            100.0 * end.aliasing_ratio / start.aliasing_ratio,
        ),
    )
}

fn criterion_9() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut softmax_err: f64 = 0.0;
    let mut attention_err: f64 = 0.0;
    let mut corners = true;
    let mut lprm_excess: f64 = 0.0;
    for _ in 0..20 {
        let raw: Vec<f64> = (0..9).map(|_| rng.gen_range(-20.0..20.0)).collect();
        softmax_err = softmax_err.max((kernel_softmax(&raw).iter().sum::<f64>() - 1.0).abs());

        let (h, w) = extent(&mut rng);
        let x = random_map(&mut rng, 2, h, w);
        let mut params = AttentionParams::zeros(2)?;
        for p in params.projection.iter_mut().chain(params.daconv.raw_mut().iter_mut()) {
            *p = rng.gen_range(-2.0..2.0);
        }
        let s = generate_attention(&x, &params)?;
        attention_err = attention_err.max((s.plane().sum() - 1.0).abs());

        let grid = map_coordinates(&s, GaussianKernel::new(rng.gen_range(1..=4))?)?;
        let (lh, lw) = (h - 1, w - 1);
        corners &= grid.is_covering()
            && (grid.u(0, 0), grid.v(0, 0)) == (0.0, 0.0)
            && (grid.u(lh, lw), grid.v(lh, lw)) == (1.0, 1.0)
            && (grid.u(0, lw), grid.v(0, lw)) == (0.0, 1.0)
            && (grid.u(lh, 0), grid.v(lh, 0)) == (1.0, 0.0);

        let d = rng.gen_range(1..=3);
        let mut stage = LprmStage::zeros(2);
        for v in stage.weights.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let rel = lprm_relation(&x, &stage, d)?;
        let pred = random_map(&mut rng, 1, h, w);
        let out = lprm_refine(&pred, &rel, d)?;
        for i in 0..h {
            for j in 0..w {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for a in [-1isize, 0, 1] {
                    for b in [-1isize, 0, 1] {
                        let si = (i as isize + a * d as isize).clamp(0, h as isize - 1) as usize;
                        let sj = (j as isize + b * d as isize).clamp(0, w as isize - 1) as usize;
                        lo = lo.min(pred.get(0, si, sj));
                        hi = hi.max(pred.get(0, si, sj));
                    }
                }
                let v = out.get(0, i, j);
                lprm_excess = lprm_excess.max(lo - v).max(v - hi);
            }
        }
    }
    let total = total_loss(1.0, 2.0, 0.01, LossWeights::default());
    let total_ok = (total - 2.02).abs() < 1e-12;
    verdict(
        softmax_err <= 1e-12 && attention_err <= 1e-12 && corners && total_ok && lprm_excess <= 1e-12,
        format!(
            "kernel softmax sum err {softmax_err:.1e}; attention sum err {attention_err:.1e}; corners exact: {corners}; total_loss(1, 2, 0.01) = {total}; LPRM bound excess {lprm_excess:.1e}"
        ),
    )
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        run(1, "frequency scaling under 2x bilinear upsampling", secs(1), criterion_1),
        run(2, "aliasing of a 3/8 cosine under 2x decimation", secs(1), criterion_2),
        run(3, "modulation reduces aliasing on the texture scene", secs(5), criterion_3),
        run(4, "demodulation keeps more high frequencies than down-up baseline", secs(10), criterion_4),
        run(5, "identity chain under uniform attention", secs(60), criterion_5),
        run(6, "geometry: Delaunay, barycentric and affine reconstruction", secs(60), criterion_6),
        run(7, "gradients match central differences", secs(120), criterion_7),
        run(8, "toy training on the boundary scene", secs(300), criterion_8),
        run(9, "unit identities", secs(60), criterion_9),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
