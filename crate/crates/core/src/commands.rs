//! The operations behind the command-line subcommands. Each writes its
//! artifacts to disk and reports through a caller-supplied writer, so the
//! binary only parses flags and maps errors to exit codes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::bench::{bench_forward, BenchRow};
use crate::camera_lift::{sigmoid, LiftConfig};
use crate::error::{Error, Result};
use crate::geometry::{BevGridSpec, DepthBinSpec};
use crate::io::{read_scene, read_tensor, write_feature_map, write_pgm, write_scene};
use crate::pipeline::{build_fit, splat_scene, Modality, PipelineConfig, SplatOutput};
use crate::raster::{BevFeatureMap, RasterConfig, SortOrder, DEFAULT_ALPHA_MIN};
use crate::scene::{gen_scene, Scene, SegClass};
use crate::training::{fit, iou_per_class, FitConfig, FitResult};

/// Settings shared by all subcommands.
#[derive(Clone, Debug)]
pub struct CommonOptions {
    pub seed: u64,
    pub grid_range: f64,
    pub grid_res: f64,
    pub bins: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub k: f64,
    pub alpha_min: f64,
    pub sort_order: SortOrder,
}

impl Default for CommonOptions {
    fn default() -> Self {
        let bins = DepthBinSpec::default();
        Self {
            seed: 0,
            grid_range: 50.0,
            grid_res: 0.5,
            bins: bins.len(),
            d_min: bins.d_min(),
            d_max: bins.d_max(),
            k: 0.5,
            alpha_min: DEFAULT_ALPHA_MIN,
            sort_order: SortOrder::ZDesc,
        }
    }
}

impl CommonOptions {
    pub fn grid(&self) -> Result<BevGridSpec> {
        BevGridSpec::square(self.grid_range, self.grid_res)
    }

    /// Pipeline settings for `modality`. The rasterizer cutoff follows the
    /// pruning threshold: a splat of opacity `alpha_min` is cut at 3σ.
    pub fn pipeline(&self, modality: Modality) -> Result<PipelineConfig> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::invalid("k", self.k.to_string()));
        }
        if !(0.0..1.0).contains(&self.alpha_min) {
            return Err(Error::invalid("alpha-min", self.alpha_min.to_string()));
        }
        let lift = LiftConfig {
            bins: DepthBinSpec::new(self.bins, self.d_min, self.d_max)?,
            k: self.k,
            alpha_min: self.alpha_min,
            ..LiftConfig::default()
        };
        let raster = RasterConfig {
            sort: self.sort_order,
            alpha_cutoff: Some(self.alpha_min * (-4.5_f64).exp()),
            ..RasterConfig::default()
        };
        Ok(PipelineConfig {
            grid: self.grid()?,
            lift,
            raster,
            modality,
            seed: self.seed,
            ..PipelineConfig::default()
        })
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Generates a scene and writes it as canonical JSON.
pub fn cmd_gen(seed: u64, n_vehicles: usize, n_lanes: usize, out: &Path) -> Result<Scene> {
    let scene = gen_scene(seed, n_vehicles, n_lanes)?;
    write_scene(out, &scene)?;
    Ok(scene)
}

/// Splats a scene file into `<prefix>.json`/`<prefix>.bin` and a preview of
/// the per-cell feature norm at `<prefix>.pgm`.
pub fn cmd_splat(scene_path: &Path, cfg: &PipelineConfig, prefix: &Path) -> Result<SplatOutput> {
    let scene = read_scene(scene_path)?;
    let out = splat_scene(&scene, cfg)?;
    write_feature_map(prefix, &out.features)?;
    let grid = out.features.grid();
    write_pgm(
        &with_suffix(prefix, ".pgm"),
        &out.features.channel_norm(),
        grid.width(),
        grid.height(),
    )?;
    Ok(out)
}

pub const METRICS_HEADER: &str = "iteration,loss,iou_vehicle,iou_drivable,iou_divider";

/// Fits a scene and writes into `out_dir`:
/// `metrics.csv` (one row per iteration, flushed as it goes),
/// `pred.json`/`pred.bin` (final main-head logits), `gt.json`/`gt.bin`
/// (target masks) and `pred.pgm` (vehicle probability).
pub fn cmd_fit(
    scene_path: &Path,
    pipe: &PipelineConfig,
    cfg: &FitConfig,
    out_dir: &Path,
) -> Result<FitResult> {
    let scene = read_scene(scene_path)?;
    let (inputs, init) = build_fit(&scene, pipe)?;
    fs::create_dir_all(out_dir)?;
    write_feature_map(&out_dir.join("gt"), &inputs.target)?;
    let mut csv = BufWriter::new(File::create(out_dir.join("metrics.csv"))?);
    writeln!(csv, "{METRICS_HEADER}")?;
    let mut write_err = None;
    let result = fit(&inputs, init, cfg, |r| {
        let iou: Vec<String> = r.iou.iter().map(|v| format!("{v:.6}")).collect();
        let line = writeln!(csv, "{},{:.9},{}", r.iteration, r.loss, iou.join(","))
            .and_then(|_| csv.flush());
        if let (Err(e), None) = (line, &write_err) {
            write_err = Some(e);
        }
    });
    drop(csv);
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let result = result?;
    write_feature_map(&out_dir.join("pred"), &result.final_logits)?;
    let grid = result.final_logits.grid();
    let vehicle: Vec<f64> = result
        .final_logits
        .channel(0)
        .iter()
        .map(|&x| sigmoid(x))
        .collect();
    write_pgm(
        &out_dir.join("pred.pgm"),
        &vehicle,
        grid.width(),
        grid.height(),
    )?;
    Ok(result)
}

/// Name of channel `c` in a map with `channels` channels.
fn class_name(c: usize, channels: usize) -> String {
    if channels == SegClass::ALL.len() {
        SegClass::ALL[c].name().to_string()
    } else {
        format!("class{c}")
    }
}

fn read_map(prefix: &Path) -> Result<BevFeatureMap> {
    let (header, data) = read_tensor(prefix)?;
    let [c, h, w] = header.shape[..] else {
        return Err(Error::Parse(format!(
            "expected a C×H×W tensor, got shape {:?}",
            header.shape
        )));
    };
    let grid = BevGridSpec::new(0.0, w as f64, 0.0, h as f64, 1.0)?;
    BevFeatureMap::from_data(c, grid, data.into_iter().map(f64::from).collect())
}

/// Per-class IoU of prediction logits (`σ(x) > threshold`) against a binary
/// ground-truth tensor; prints `class=<name> iou=<value>` lines.
pub fn cmd_eval(pred: &Path, gt: &Path, threshold: f64, out: &mut dyn Write) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::invalid("threshold", threshold.to_string()));
    }
    let pred = read_map(pred)?;
    let gt = read_map(gt)?;
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch {
            context: "eval inputs",
            expected: gt.shape().to_vec(),
            got: pred.shape().to_vec(),
        });
    }
    let ious = iou_per_class(&pred, &gt, threshold)?;
    for (c, v) in ious.iter().enumerate() {
        writeln!(out, "class={} iou={v:.4}", class_name(c, ious.len()))?;
    }
    Ok(ious)
}

/// Runs the forward benchmark and prints a CSV table.
pub fn cmd_bench(
    sizes: &[usize],
    dim: usize,
    repeats: usize,
    opts: &CommonOptions,
    out: &mut dyn Write,
) -> Result<Vec<BenchRow>> {
    let cfg = opts.pipeline(Modality::Both)?;
    let rows = bench_forward(sizes, dim, repeats, &cfg.grid, &cfg.raster, opts.seed)?;
    writeln!(out, "n,mean_ms,std_ms,ms_per_kgaussian")?;
    for r in &rows {
        writeln!(
            out,
            "{},{:.3},{:.3},{:.4}",
            r.n, r.mean_ms, r.std_ms, r.ms_per_kgaussian
        )?;
    }
    Ok(rows)
}
