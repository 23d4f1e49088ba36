//! The three subcommands. Each returns the JSON report printed on stdout.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use sfm_core::attention::{generate_attention, laplacian_attention, AttentionMap};
use sfm_core::demod::Interpolator;
use sfm_core::objective::{train_toy, write_history, ToyModel, TrainConfig};
use sfm_core::spectral::{
    aliasing_ratio, aliasing_ratio_map, high_band_power, high_band_power_map, lfr_curve, lfr_curve_map, rdf, rdf_map,
    xi_sweep,
};
use sfm_core::tensor::io::{encode_sfmt, read_input, read_tensor};
use sfm_core::tensor::{decimate, resize_bilinear, FeatureMap, Tensor};
use sfm_core::warp::{modulate, GaussianKernel};

use crate::output::write_all;
use crate::{AnalyzeArgs, AttentionMode, Failure, RoundtripArgs, TrainArgs};

fn load_map(path: &Path) -> Result<FeatureMap, Failure> {
    let tensor = read_input(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(FeatureMap::from_tensor(tensor)?)
}

fn check_nyquist(nyquist: f64) -> Result<(), Failure> {
    if nyquist > 0.0 && nyquist <= 0.5 {
        Ok(())
    } else {
        Err(Failure::Input(format!("--nyquist must lie in (0, 0.5], got {nyquist}")))
    }
}

fn json_bytes(value: &Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("reports serialise");
    bytes.push(b'\n');
    bytes
}

fn shape(map: &FeatureMap) -> [usize; 3] {
    [map.channels(), map.height(), map.width()]
}

pub fn analyze(args: &AnalyzeArgs) -> Result<Value, Failure> {
    check_nyquist(args.nyquist)?;
    if args.points < 2 {
        return Err(Failure::Input(format!("--points must be >= 2, got {}", args.points)));
    }
    let map = load_map(&args.input)?;
    let xis = xi_sweep(args.points);
    let spectrum_rdf = rdf_map(&map, args.points)?;
    let channels = map
        .planes()
        .iter()
        .enumerate()
        .map(|(c, plane)| {
            Ok(json!({
                "channel": c,
                "aliasing_ratio": aliasing_ratio(plane, args.nyquist)?,
                "high_band_power": high_band_power(plane, args.nyquist)?,
                "lfr": lfr_curve(plane, &xis)?,
                "rdf": rdf(plane, args.points)?.density,
            }))
        })
        .collect::<sfm_core::Result<Vec<Value>>>()?;
    let report = json!({
        "command": "analyze",
        "input": args.input.display().to_string(),
        "shape": shape(&map),
        "nyquist": args.nyquist,
        "aliasing_ratio": aliasing_ratio_map(&map, args.nyquist)?,
        "high_band_power": high_band_power_map(&map, args.nyquist)?,
        "lfr": { "xi": xis, "ratio": lfr_curve_map(&map, &xis)? },
        "rdf": { "step": spectrum_rdf.step, "centers": spectrum_rdf.centers(), "density": spectrum_rdf.density },
        "channels": channels,
    });
    if let Some(dir) = &args.output_dir {
        write_all(dir, &[("analyze.json".into(), json_bytes(&report))])?;
    }
    Ok(report)
}

/// Loads a trained parameter bundle; tensor files resolve next to the sidecar.
fn load_model(sidecar: &Path) -> Result<ToyModel, Failure> {
    let text = fs::read_to_string(sidecar)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", sidecar.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Input(format!("invalid parameter sidecar {}: {e}", sidecar.display())))?;
    let dir = sidecar.parent().unwrap_or(Path::new("."));
    Ok(ToyModel::from_bundle(&value, |file| read_tensor(dir.join(file)))?)
}

fn stage_metrics(map: &FeatureMap, nyquist: f64) -> Result<Value, Failure> {
    Ok(json!({
        "aliasing_ratio": aliasing_ratio_map(map, nyquist)?,
        "high_band_power": high_band_power_map(map, nyquist)?,
    }))
}

pub fn roundtrip(args: &RoundtripArgs) -> Result<Value, Failure> {
    check_nyquist(args.nyquist)?;
    if args.stride < 2 {
        return Err(Failure::Input(format!("--stride must be >= 2, got {}", args.stride)));
    }
    let map = load_map(&args.input)?;
    let (h, w) = (map.height(), map.width());
    let kernel = match args.sigma {
        Some(r) => GaussianKernel::new(r)?,
        None => GaussianKernel::for_extent(h, w),
    };
    let attention = match &args.attention {
        AttentionMode::Uniform => AttentionMap::uniform(h, w),
        AttentionMode::Laplacian => laplacian_attention(&map)?,
        AttentionMode::Trained(path) => {
            let model = load_model(path)?;
            if model.channels() != map.channels() {
                return Err(Failure::Input(format!(
                    "trained parameters expect {} channels, input has {}",
                    model.channels(),
                    map.channels()
                )));
            }
            generate_attention(&map, &model.attention)?
        }
    };
    let (modulated, grid) = modulate(&map, &attention, kernel)?;
    let decimated = decimate(&modulated, args.stride)?;
    let interpolator = Interpolator::new(&grid.decimate(args.stride)?, h, w)?;
    let demodulated = interpolator.apply(&decimated)?;
    let baseline_planes: Vec<_> = decimate(&map, args.stride)?
        .planes()
        .iter()
        .map(|p| resize_bilinear(p, h, w))
        .collect();
    let baseline = FeatureMap::from_planes(&baseline_planes)?;

    let attention_tensor = Tensor::new(vec![h, w], attention.plane().data().to_vec())?;
    let files = [
        ("attention.sfmt", attention_tensor),
        ("grid.sfmt", grid.to_tensor()),
        ("modulated.sfmt", modulated.to_tensor()),
        ("decimated.sfmt", decimated.to_tensor()),
        ("demodulated.sfmt", demodulated.to_tensor()),
        ("baseline.sfmt", baseline.to_tensor()),
    ];
    let report = json!({
        "command": "roundtrip",
        "input": args.input.display().to_string(),
        "shape": shape(&map),
        "attention": args.attention.to_string(),
        "sigma": kernel.radius(),
        "stride": args.stride,
        "nyquist": args.nyquist,
        "stages": {
            "original": stage_metrics(&map, args.nyquist)?,
            "modulated": stage_metrics(&modulated, args.nyquist)?,
            "baseline": stage_metrics(&baseline, args.nyquist)?,
            "demodulated": stage_metrics(&demodulated, args.nyquist)?,
        },
        "demodulated_max_abs_error": demodulated.max_abs_diff(&map),
        "baseline_max_abs_error": baseline.max_abs_diff(&map),
        "extrapolated_pixels": interpolator.extrapolated(),
        "outputs": files.iter().map(|(name, _)| *name).collect::<Vec<_>>(),
    });
    let mut rendered: Vec<(String, Vec<u8>)> =
        files.iter().map(|(name, t)| (name.to_string(), encode_sfmt(t))).collect();
    rendered.push(("roundtrip.json".into(), json_bytes(&report)));
    write_all(&args.output_dir, &rendered)?;
    Ok(report)
}

fn read_config(args: &TrainArgs) -> Result<TrainConfig, Failure> {
    let path = &args.config;
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut config: TrainConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::Input(format!("invalid config {}: {e}", path.display())))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(sigma) = args.sigma {
        config.sigma = Some(sigma);
    }
    if let Some(stride) = args.stride {
        config.stride = stride;
    }
    if let Some(dilations) = &args.dilations {
        config.dilations = dilations.clone();
    }
    if let Some(v) = args.lambda_fm {
        config.lambda_fm = v;
    }
    if let Some(v) = args.lambda_shf {
        config.lambda_shf = v;
    }
    if let Some(v) = args.nyquist {
        config.nyquist = v;
    }
    config.validate()?;
    Ok(config)
}

pub fn train(args: &TrainArgs) -> Result<Value, Failure> {
    let config = read_config(args)?;
    let outcome = train_toy(&config)?;

    let mut csv = Vec::new();
    write_history(&outcome.history, &mut csv)?;
    let (sidecar, tensors) = outcome.model.bundle();
    let mut params: Vec<(String, Vec<u8>)> =
        tensors.iter().map(|(file, t)| (file.clone(), encode_sfmt(t))).collect();
    params.push(("params.json".into(), json_bytes(&sidecar)));
    write_all(&args.output_dir.join("params"), &params)?;
    write_all(&args.output_dir, &[("history.csv".into(), csv)])?;

    if let Some(d) = &outcome.diverged {
        return Err(Failure::Numerical(format!(
            "training diverged at iteration {}: {}; history and last finite parameters written to {}",
            d.iteration,
            d.reason,
            args.output_dir.display()
        )));
    }
    Ok(json!({
        "command": "train",
        "config": config,
        "iterations_run": outcome.history.len().saturating_sub(1),
        "initial": outcome.history.first(),
        "final": outcome.history.last(),
        "outputs": {
            "history": "history.csv",
            "params": "params/params.json",
        },
    }))
}
