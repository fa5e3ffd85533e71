//! Implementations of the CLI subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use geocloud_core::crpc::{crpc, CrpcParams, PointCloud};
use geocloud_core::evaluation::{emit_report, group_difference_rows, relative_error_point};
use geocloud_core::geometry::{CorrespondenceSet, WorldPoint};
use geocloud_core::mds::mds_embed;
use geocloud_core::pipeline::{
    grow_point_cloud, refine_by_distance, refine_by_pixel, seed_and_solve, GrowthConfig,
};
use geocloud_core::synth::{
    make_cylinder_scene, make_scene_with, render_textured_scene, CylinderSceneOptions,
    SceneOptions, SyntheticScene,
};
use geocloud_core::wpfc::{objective, wpfc_iterative, CfConfig};
use rand::{Rng, SeedableRng};

use crate::io::config::Settings;
use crate::io::{corr, group, imgio, ply, scene};

pub struct SynthArgs {
    pub out: PathBuf,
    pub points: usize,
    pub images: usize,
    pub sigma: f64,
    pub surface: String,
    pub height: usize,
    pub width: usize,
    pub render: bool,
    pub seed_points: usize,
}

pub fn synth(args: &SynthArgs, settings: &Settings) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let (synthetic, image_files) = match args.surface.as_str() {
        "box" => {
            if args.render {
                bail!("box scenes have no renderable surface; use --surface cylinder");
            }
            let opts = SceneOptions::<f64> {
                points: args.points,
                images: args.images,
                sigma: args.sigma,
                seed: settings.seed,
                height: args.height,
                width: args.width,
                ring_radius: 4.0,
            };
            let (scene_data, corr_set) = make_scene_with(&opts)?;
            write_corr(&args.out, &corr_set, args.height, args.width, vec![])?;
            (scene_data, vec![])
        }
        "cylinder" => {
            let (rows, cols) = anchor_grid(args.points);
            let opts = CylinderSceneOptions {
                seed: settings.seed,
                images: args.images,
                anchor_rows: rows,
                anchor_cols: cols,
                height: args.height,
                width: args.width,
                ..Default::default()
            };
            let mut scene_data = make_cylinder_scene::<f64>(&opts)?;
            scene_data.points.truncate(args.points);
            scene_data.sigma = args.sigma;

            let mut names = Vec::new();
            if args.render {
                let img_dir = args.out.join("images");
                std::fs::create_dir_all(&img_dir)?;
                let images = render_textured_scene(&scene_data)?;
                for (idx, img) in images.iter().enumerate() {
                    let name = format!("img_{idx:03}.pgm");
                    imgio::save_pgm(&img_dir.join(&name), img)?;
                    names.push(name);
                }
            }
            let corr_set = project_scene(&scene_data, settings.seed ^ 0x5eed_5eed)?;
            write_corr(&args.out, &corr_set, args.height, args.width, names.clone())?;
            (scene_data, names)
        }
        other => bail!("unknown surface kind '{other}' (expected box or cylinder)"),
    };

    if args.seed_points < 4 || args.seed_points > synthetic.points.len() {
        bail!("--seed-points must be between 4 and the point count");
    }
    // measured points should span the scene, not sit on one edge of it
    let ids = spread_ids(&synthetic.points, args.seed_points);
    let seeds = scene::SeedsFile::from_points(&ids, &synthetic.points);
    scene::save_seeds(&args.out.join("seeds.json"), &seeds)?;

    let truth = group::GroupFile::from_group(&synthetic.group(), None, None);
    group::save(&args.out.join("truth.json"), &truth)?;

    scene::save_scene(
        &args.out.join("scene.json"),
        &scene::SceneSpec {
            kind: args.surface.clone(),
            seed: settings.seed,
            points: synthetic.points.len(),
            images: args.images,
            sigma: args.sigma,
            height: args.height,
            width: args.width,
        },
    )?;
    let _ = image_files;
    println!(
        "synth: {} points, {} images -> {}",
        synthetic.points.len(),
        args.images,
        args.out.display()
    );
    Ok(())
}

fn anchor_grid(points: usize) -> (usize, usize) {
    let rows = ((points as f64).sqrt() * 0.6).round().max(1.0) as usize;
    let cols = points.div_ceil(rows);
    (rows, cols)
}

/// Farthest-point sampling over the true points, seeded at the pair with the
/// largest separation.
fn spread_ids(points: &[WorldPoint<f64>], count: usize) -> Vec<usize> {
    if points.len() <= count {
        return (0..points.len()).collect();
    }
    let mut far = (0usize, 1usize, f64::NEG_INFINITY);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = points[i].dist(&points[j]);
            if d > far.2 {
                far = (i, j, d);
            }
        }
    }
    let mut picked = vec![far.0, far.1];
    while picked.len() < count {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (i, p) in points.iter().enumerate() {
            if picked.contains(&i) {
                continue;
            }
            let dmin = picked.iter().map(|&q| p.dist(&points[q])).fold(f64::INFINITY, f64::min);
            if dmin > best.1 {
                best = (i, dmin);
            }
        }
        picked.push(best.0);
    }
    picked.sort_unstable();
    picked
}

/// Exact projections plus optional pixel noise for every scene point.
fn project_scene(scene_data: &SyntheticScene<f64>, noise_seed: u64) -> Result<CorrespondenceSet<f64>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(noise_seed);
    let m = scene_data.points.len();
    let n = scene_data.cameras.len();
    let mut set = CorrespondenceSet::new(m, n);
    for (mi, p) in scene_data.points.iter().enumerate() {
        for (ni, cam) in scene_data.cameras.iter().enumerate() {
            let mut obs = cam.project(p).context("scene point behind a camera")?;
            if scene_data.sigma > 0.0 {
                obs.u += scene_data.sigma * gauss(&mut rng);
                obs.v += scene_data.sigma * gauss(&mut rng);
            }
            set.set(mi, ni, Some(obs));
        }
    }
    Ok(set)
}

fn gauss(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn write_corr(
    out: &Path,
    set: &CorrespondenceSet<f64>,
    height: usize,
    width: usize,
    image_files: Vec<String>,
) -> Result<()> {
    let file = corr::from_set(set, height, width, image_files);
    corr::save(&out.join("corr.json"), &file)?;
    Ok(())
}

pub fn wpfc_cmd(input: &Path, output: &Path, settings: &Settings) -> Result<()> {
    let (_, set) = corr::load(input)?;
    let cfg = CfConfig { seed: settings.seed, ..CfConfig::default() };
    let solution = wpfc_iterative(&set, settings.iters, &cfg)?;
    let mean = geocloud_core::evaluation::relative_error_group(&solution.best.group, &set)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    group::save(
        output,
        &group::GroupFile::from_group(
            &solution.best.group,
            Some(solution.best.objective),
            Some(solution.best.anchors),
        ),
    )?;
    println!(
        "wpfc: objective {:.6e}, mean difference {:.3} px over {} points x {} images",
        solution.best.objective,
        mean,
        set.num_points(),
        set.num_images()
    );
    Ok(())
}

pub struct CrpcArgs {
    pub group: PathBuf,
    pub corr: PathBuf,
    pub images_dir: PathBuf,
    pub pair: Option<(usize, usize)>,
    pub output: PathBuf,
    pub ascii: bool,
}

pub fn crpc_cmd(args: &CrpcArgs, settings: &Settings) -> Result<()> {
    let grp = group::load(&args.group)?.to_group()?;
    let (header, _) = corr::load(&args.corr)?;
    if header.image_files.is_empty() {
        bail!("correspondence file lists no image files; densification needs rendered images");
    }
    let images = imgio::load_image_set(&args.images_dir, &header.image_files)?;
    let params = detection_params(settings);

    let pairs: Vec<(usize, usize)> = match args.pair {
        Some((a, b)) => vec![(a, b)],
        None => (0..grp.points.len())
            .flat_map(|i| ((i + 1)..grp.points.len()).map(move |j| (i, j)))
            .collect(),
    };
    let mut cloud: PointCloud<f64> = Vec::new();
    for (a, b) in pairs {
        let (points, stats) =
            crpc(&grp.cameras, &images, &grp.points[a], &grp.points[b], (a, b), &params);
        log::info!("pair ({a},{b}): {} emitted of {} candidates", stats.emitted, stats.candidates);
        cloud.extend(points);
    }
    if cloud.is_empty() {
        bail!("no points passed the quality gates");
    }
    let mode = if args.ascii { ply::PlyMode::Ascii } else { ply::PlyMode::BinaryLittleEndian };
    ply::save(&args.output, &cloud, mode)?;
    println!("crpc: {} points -> {}", cloud.len(), args.output.display());
    Ok(())
}

fn detection_params(settings: &Settings) -> CrpcParams<f64> {
    CrpcParams {
        theta: settings.theta,
        ell_frac: settings.ell_frac,
        tau_d: settings.tau_d,
        tau_i: settings.tau_i,
        norm: settings.profile_norm,
        ..CrpcParams::default()
    }
}

pub struct PipelineArgs {
    pub corr: PathBuf,
    pub seeds: PathBuf,
    pub images_dir: PathBuf,
    pub out_dir: PathBuf,
    pub levels: usize,
    pub spreads: Vec<f64>,
    pub ascii: bool,
}

pub fn pipeline_cmd(args: &PipelineArgs, settings: &Settings) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)?;
    let (header, set) = corr::load(&args.corr)?;
    let seeds_file = scene::load_seeds(&args.seeds)?;
    let measurements = seeds_file.to_measurements()?;
    let coords = mds_embed(&measurements)?;
    let seeds: Vec<(usize, WorldPoint<f64>)> =
        seeds_file.ids.iter().copied().zip(coords).collect();

    let cfg = CfConfig { seed: settings.seed, ..CfConfig::default() };
    let solved = seed_and_solve(&set, &seeds, settings.iters, &cfg)?;
    let obj = objective(&solved, &set)?;
    group::save(
        &args.out_dir.join("group.json"),
        &group::GroupFile::from_group(&solved, Some(obj), None),
    )?;

    let report_rows = group_difference_rows(&solved, &set).map_err(|e| anyhow::anyhow!("{e}"))?;
    let report = emit_report(&report_rows, &args.out_dir.join("report"))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    println!(
        "pipeline: solved {} points / {} cameras, mean difference {:.3} px (p95 {:.3})",
        solved.points.len(),
        solved.cameras.len(),
        report.mean,
        report.p95
    );

    if header.image_files.is_empty() {
        println!("pipeline: no images listed; skipping growth");
        return Ok(());
    }
    let images = imgio::load_image_set(&args.images_dir, &header.image_files)?;
    let growth = GrowthConfig {
        detection: detection_params(settings),
        level_spreads: args.spreads.clone(),
        max_levels: args.levels,
    };
    let cloud = grow_point_cloud(&solved, &images, &growth);
    let grown = cloud.iter().filter(|p| p.level > 0).count();
    println!("pipeline: grew {grown} points over {} levels", args.levels);
    if cloud.is_empty() {
        bail!("empty cloud after growth");
    }
    let mode = if args.ascii { ply::PlyMode::Ascii } else { ply::PlyMode::BinaryLittleEndian };
    ply::save(&args.out_dir.join("cloud.ply"), &cloud, mode)?;
    println!("pipeline: cloud -> {}", args.out_dir.join("cloud.ply").display());
    Ok(())
}

pub fn refine_cmd(
    input: &Path,
    output: &Path,
    ascii: bool,
    settings: &Settings,
) -> Result<()> {
    let cloud = ply::load(input)?;
    let refined = match (settings.delta, settings.epsilon) {
        (Some(_), Some(_)) => bail!("choose either --delta or --epsilon, not both"),
        (Some(d), None) => refine_by_distance(&cloud, d),
        (None, Some(e)) => refine_by_pixel(&cloud, e),
        (None, None) => bail!("refine needs --delta or --epsilon"),
    };
    if refined.is_empty() {
        bail!("refinement removed every point");
    }
    let mode = if ascii { ply::PlyMode::Ascii } else { ply::PlyMode::BinaryLittleEndian };
    ply::save(output, &refined, mode)?;
    println!("refine: {} -> {} points", cloud.len(), refined.len());
    Ok(())
}

pub struct EvalArgs {
    pub group: Option<PathBuf>,
    pub corr: Option<PathBuf>,
    pub cloud: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub height: usize,
    pub width: usize,
}

pub fn eval_cmd(args: &EvalArgs, _settings: &Settings) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)?;
    match (&args.group, &args.corr, &args.cloud) {
        (Some(g), Some(c), None) => {
            let grp = group::load(g)?.to_group()?;
            let (_, set) = corr::load(c)?;
            let rows = group_difference_rows(&grp, &set).map_err(|e| anyhow::anyhow!("{e}"))?;
            let report = emit_report(&rows, &args.out_dir).map_err(|e| anyhow::anyhow!("{e}"))?;
            println!(
                "eval: {} differences, mean {:.4} px, p95 {:.4} px",
                report.count, report.mean, report.p95
            );
        }
        (None, None, Some(cl)) => {
            let cloud = ply::load(cl)?;
            // e_d per point; the image_id column carries the support count
            let rows: Vec<(usize, usize, f64)> = cloud
                .iter()
                .enumerate()
                .map(|(i, p)| (i, p.e_i, p.e_d))
                .collect();
            let report = emit_report(&rows, &args.out_dir).map_err(|e| anyhow::anyhow!("{e}"))?;
            // relative errors alongside
            let mut rel = String::from("point_id,rel_error\n");
            for (i, p) in cloud.iter().enumerate() {
                rel.push_str(&format!("{i},{:e}\n", relative_error_point(p, args.height, args.width)));
            }
            std::fs::write(args.out_dir.join("relative.csv"), rel)?;
            println!(
                "eval: {} cloud points, mean e_d {:.4} px, p95 {:.4} px",
                report.count, report.mean, report.p95
            );
        }
        _ => bail!("eval needs either --group with --corr, or --cloud"),
    }
    Ok(())
}

pub fn parse_pair(text: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        bail!("--pair expects 'A,B'");
    }
    Ok((parts[0].trim().parse()?, parts[1].trim().parse()?))
}

pub fn parse_spreads(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow::anyhow!("bad spread '{s}': {e}")))
        .collect()
}
