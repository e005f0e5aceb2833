use std::fs;
use std::path::{Path, PathBuf};

use image::RgbaImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coco::{categories, CocoDataset, CocoImage};
use super::compose::{compose_image, PlacedInstance};
use super::cutout::{load_backgrounds, load_cutouts, procedural_backgrounds, procedural_cutouts, Cutout};
use super::{annotate, DatasetError};

pub const DEFAULT_CANVAS: u32 = 512;
pub const PROCEDURAL_VARIANTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_images: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub backgrounds_dir: Option<PathBuf>,
    pub cutouts_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Size of procedural backgrounds; loaded backgrounds keep their own.
    pub canvas: u32,
}

impl SynthConfig {
    pub fn new(n_images: usize, seed: u64, out_dir: impl Into<PathBuf>) -> Self {
        SynthConfig {
            n_images,
            split_ratio: 0.75,
            seed,
            backgrounds_dir: None,
            cutouts_dir: None,
            out_dir: out_dir.into(),
            canvas: DEFAULT_CANVAS,
        }
    }

    pub fn n_train(&self) -> usize {
        (self.n_images as f64 * self.split_ratio).round() as usize
    }
}

pub struct Assets {
    /// One pool per class, in category order.
    pub cutouts: Vec<Vec<Cutout>>,
    pub backgrounds: Vec<RgbaImage>,
}

impl Assets {
    pub fn procedural(canvas: u32) -> Self {
        Assets {
            cutouts: procedural_cutouts(PROCEDURAL_VARIANTS),
            backgrounds: procedural_backgrounds(canvas, canvas),
        }
    }

    pub fn load(cfg: &SynthConfig) -> Result<Self, DatasetError> {
        Ok(Assets {
            cutouts: match &cfg.cutouts_dir {
                Some(d) => load_cutouts(d)?,
                None => procedural_cutouts(PROCEDURAL_VARIANTS),
            },
            backgrounds: match &cfg.backgrounds_dir {
                Some(d) => load_backgrounds(d)?,
                None => procedural_backgrounds(cfg.canvas, cfg.canvas),
            },
        })
    }
}

pub struct SynthImage {
    pub index: usize,
    pub background: usize,
    pub image: RgbaImage,
    pub instances: Vec<PlacedInstance>,
}

/// Random stream for image `index`, independent of worker scheduling.
fn image_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(index as u64).to_le_bytes());
    key[16..24].copy_from_slice(b"teletwin");
    ChaCha8Rng::from_seed(key)
}

/// Composes `n` images in parallel.
pub fn synthesize(assets: &Assets, n: usize, seed: u64) -> Result<Vec<SynthImage>, DatasetError> {
    if assets.backgrounds.is_empty() || assets.cutouts.iter().any(Vec::is_empty) {
        return Err(DatasetError::MissingAssets("empty asset pool".into()));
    }
    (0..n)
        .into_par_iter()
        .map(|index| {
            let mut rng = image_rng(seed, index);
            let background = rng.random_range(0..assets.backgrounds.len());
            let picks: Vec<&Cutout> = assets
                .cutouts
                .iter()
                .map(|pool| &pool[rng.random_range(0..pool.len())])
                .collect();
            let c = compose_image(&assets.backgrounds[background], &picks, &mut rng)?;
            Ok(SynthImage {
                index,
                background,
                image: c.image,
                instances: c.instances,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub n_images: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub split_ratio: f64,
    pub canvas: u32,
    pub procedural_cutouts: bool,
    pub procedural_backgrounds: bool,
    pub generator_version: String,
}

pub struct SynthOutput {
    pub train: CocoDataset,
    pub test: CocoDataset,
    pub manifest: Manifest,
}

pub fn image_file_name(index: usize) -> String {
    format!("{index:06}.png")
}

/// Generates the dataset and writes `images/`, `train.json`, `test.json`
/// and `manifest.json` under `cfg.out_dir`.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, DatasetError> {
    if !(0.0..=1.0).contains(&cfg.split_ratio) {
        return Err(DatasetError::InvalidConfig(format!(
            "split ratio {} outside [0, 1]",
            cfg.split_ratio
        )));
    }
    if cfg.canvas == 0 {
        return Err(DatasetError::InvalidConfig("canvas size must be positive".into()));
    }
    let assets = Assets::load(cfg)?;
    let images = synthesize(&assets, cfg.n_images, cfg.seed)?;

    let img_dir = cfg.out_dir.join("images");
    fs::create_dir_all(&img_dir)?;
    images.par_iter().try_for_each(|im| {
        im.image
            .save_with_format(img_dir.join(image_file_name(im.index)), image::ImageFormat::Png)
            .map_err(|e| DatasetError::Image(e.to_string()))
    })?;

    let n_train = cfg.n_train();
    let mut train = CocoDataset {
        categories: categories(),
        ..Default::default()
    };
    let mut test = train.clone();
    let mut next_ann = 1u64;
    for im in &images {
        let id = im.index as u64 + 1;
        let split = if im.index < n_train { &mut train } else { &mut test };
        split.images.push(CocoImage {
            id,
            file_name: format!("images/{}", image_file_name(im.index)),
            width: im.image.width(),
            height: im.image.height(),
        });
        let anns = annotate(&im.instances, id, next_ann)?;
        next_ann += anns.len() as u64;
        split.annotations.extend(anns);
    }

    let manifest = Manifest {
        seed: cfg.seed,
        n_images: cfg.n_images,
        n_train,
        n_test: cfg.n_images - n_train,
        split_ratio: cfg.split_ratio,
        canvas: cfg.canvas,
        procedural_cutouts: cfg.cutouts_dir.is_none(),
        procedural_backgrounds: cfg.backgrounds_dir.is_none(),
        generator_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(&cfg.out_dir.join("train.json"), &train)?;
    write_json(&cfg.out_dir.join("test.json"), &test)?;
    write_json(&cfg.out_dir.join("manifest.json"), &manifest)?;
    Ok(SynthOutput { train, test, manifest })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), DatasetError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}
