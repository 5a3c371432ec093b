//! Manifest-based frame ingestion, equal-interval frame sampling, and a
//! seeded synthetic forgery generator for desk-scale end-to-end runs.
//!
//! Synthetic "real" images are smooth low-frequency textures with a bright
//! face-like oval; "fake" images are reals with a small high-frequency
//! patch stamped at a random position inside the oval. The shifted test
//! set changes the patch texture statistics and compresses global
//! contrast, emulating a cross-dataset distribution shift. Ground-truth
//! patch positions land in a sidecar table so attention maps can be
//! checked against them.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Axis};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::Normalization;
use crate::error::{Error, Result};

/// Columns of a manifest file.
pub const MANIFEST_HEADER: [&str; 5] = ["path", "label", "video_id", "dataset_id", "split"];

/// One frame reference, fields exactly as written in the manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Image path as recorded — relative paths are resolved against the
    /// manifest's directory at access time.
    pub path: PathBuf,
    pub label: u8,
    pub video_id: String,
    pub dataset_id: String,
    pub split: String,
}

/// A validated frame list plus the directory its relative paths are
/// anchored to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

/// Class balance and per-dataset counts, for logging.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestStats {
    pub n_real: usize,
    pub n_fake: usize,
    pub per_dataset: BTreeMap<String, usize>,
}

impl fmt::Display for ManifestStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} frames ({} real / {} fake) across {} dataset(s)",
            self.n_real + self.n_fake,
            self.n_real,
            self.n_fake,
            self.per_dataset.len()
        )
    }
}

impl Manifest {
    /// Resolve an entry's image location.
    pub fn image_path(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    pub fn stats(&self) -> ManifestStats {
        let mut per_dataset = BTreeMap::new();
        let (mut n_real, mut n_fake) = (0, 0);
        for e in &self.entries {
            *per_dataset.entry(e.dataset_id.clone()).or_insert(0) += 1;
            if e.label == 0 {
                n_real += 1;
            } else {
                n_fake += 1;
            }
        }
        ManifestStats {
            n_real,
            n_fake,
            per_dataset,
        }
    }
}

/// Equal-interval frame selection: `floor(i·L/n)` for `i in 0..n` over `L`
/// frames. Videos with at most `n` frames contribute every frame once.
pub fn sample_frames(frame_count: usize, n: usize) -> Result<Vec<usize>> {
    if frame_count == 0 {
        return Err(Error::InvalidInput("cannot sample an empty video".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput(
            "frame sample size must be positive".into(),
        ));
    }
    if frame_count <= n {
        return Ok((0..frame_count).collect());
    }
    Ok((0..n).map(|i| i * frame_count / n).collect())
}

/// Read and validate a manifest. Every problem row is reported in one
/// error, with line numbers; paths must be unique and their files present.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let root = path
        .parent()
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(Error::Format(format!(
            "manifest header must be {}, found {}",
            MANIFEST_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    let mut problems = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row?;
        if row.len() != MANIFEST_HEADER.len() {
            problems.push(format!("line {line}: expected 5 fields, got {}", row.len()));
            continue;
        }
        let raw_path = row[0].to_string();
        if raw_path.is_empty() {
            problems.push(format!("line {line}: empty path"));
            continue;
        }
        let label = match row[1].parse::<u8>() {
            Ok(l @ (0 | 1)) => l,
            _ => {
                problems.push(format!("line {line}: label must be 0 or 1, got {:?}", &row[1]));
                continue;
            }
        };
        if !seen.insert(raw_path.clone()) {
            problems.push(format!("line {line}: duplicate path {raw_path:?}"));
            continue;
        }
        let entry = ManifestEntry {
            path: PathBuf::from(&raw_path),
            label,
            video_id: row[2].to_string(),
            dataset_id: row[3].to_string(),
            split: row[4].to_string(),
        };
        let resolved = if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            root.join(&entry.path)
        };
        if !resolved.is_file() {
            problems.push(format!("line {line}: missing file {}", resolved.display()));
            continue;
        }
        entries.push(entry);
    }
    if !problems.is_empty() {
        let shown = problems.iter().take(8).cloned().collect::<Vec<_>>();
        let suffix = if problems.len() > 8 {
            format!("; and {} more", problems.len() - 8)
        } else {
            String::new()
        };
        return Err(Error::Data(format!(
            "manifest {} has {} bad row(s): {}{}",
            path.display(),
            problems.len(),
            shown.join("; "),
            suffix
        )));
    }
    Ok(Manifest { root, entries })
}

/// Write entries verbatim (paths untouched, so relative manifests stay
/// relocatable).
pub fn save_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(MANIFEST_HEADER)?;
    for e in entries {
        let label = e.label.to_string();
        writer.write_record([
            e.path.to_string_lossy().as_ref(),
            label.as_str(),
            e.video_id.as_str(),
            e.dataset_id.as_str(),
            e.split.as_str(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Synthetic generator knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub image_size: usize,
    /// Real frames in the train split; each test split gets a quarter.
    pub n_real: usize,
    /// Fake frames in the train split; each test split gets a quarter.
    pub n_fake: usize,
    pub artifact_patch_size: usize,
    /// Peak deviation the artifact adds to unit-range pixels. Zero is
    /// allowed and produces fakes pixel-identical to their real sources.
    pub artifact_amplitude: f64,
    /// How far the shifted split departs from the training distribution:
    /// scales its raised sensor-noise floor, the checker-textured capture
    /// marks stamped on every shifted frame, and the contrast compression.
    pub domain_shift_strength: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            n_real: 1000,
            n_fake: 1000,
            artifact_patch_size: 6,
            artifact_amplitude: 0.9,
            domain_shift_strength: 0.6,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 {
            return Err(Error::Config(format!(
                "image_size must be at least 8, got {}",
                self.image_size
            )));
        }
        if self.n_real == 0 || self.n_fake == 0 {
            return Err(Error::Config("image counts must be positive".into()));
        }
        if self.artifact_patch_size == 0 || self.artifact_patch_size >= self.image_size / 2 {
            return Err(Error::Config(format!(
                "artifact_patch_size must be in 1..{}, got {}",
                self.image_size / 2,
                self.artifact_patch_size
            )));
        }
        if !self.artifact_amplitude.is_finite() || self.artifact_amplitude < 0.0 {
            return Err(Error::Config(format!(
                "artifact_amplitude must be non-negative, got {}",
                self.artifact_amplitude
            )));
        }
        if !self.domain_shift_strength.is_finite() || self.domain_shift_strength < 0.0 {
            return Err(Error::Config(format!(
                "domain_shift_strength must be non-negative, got {}",
                self.domain_shift_strength
            )));
        }
        Ok(())
    }
}

/// Ground truth for one stamped artifact: patch top-left, size, and stamped
/// swing, keyed by the manifest-relative image path.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactRecord {
    pub path: String,
    pub row: usize,
    pub col: usize,
    pub size: usize,
    /// Peak pixel swing of the stamped pattern before any domain distortion.
    pub strength: f64,
}

const ARTIFACT_HEADER: [&str; 5] = ["path", "row", "col", "size", "strength"];

/// Read an artifact sidecar table.
pub fn load_artifacts(path: &Path) -> Result<Vec<ArtifactRecord>> {
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    if reader.headers()?.iter().ne(ARTIFACT_HEADER) {
        return Err(Error::Format("unrecognized artifact table header".into()));
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let bad = || Error::Data(format!("artifact table line {}: bad number", i + 2));
        let parse = |field: &str| field.parse::<usize>().map_err(|_| bad());
        out.push(ArtifactRecord {
            path: row[0].to_string(),
            row: parse(&row[1])?,
            col: parse(&row[2])?,
            size: parse(&row[3])?,
            strength: row[4].parse::<f64>().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

/// Everything [`generate_synthetic`] wrote.
pub struct SynthOutput {
    pub train: Manifest,
    pub test: Manifest,
    pub shifted: Manifest,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub shifted_path: PathBuf,
    /// Sidecar with every fake frame's artifact position.
    pub artifacts_path: PathBuf,
}

/// Dataset identifiers of the three generated splits.
pub const TRAIN_DATASET: &str = "synth_train";
pub const TEST_DATASET: &str = "synth_test";
pub const SHIFTED_DATASET: &str = "synth_shifted";

/// Generate the three splits under `out_dir`: `images/` plus `train.csv`,
/// `test.csv`, `shifted.csv`, and `artifacts.csv`. Fully determined by the
/// config — every image has its own seed-derived stream, so outputs are
/// byte-identical across reruns. Each frame stands alone as its own video.
pub fn generate_synthetic(out_dir: &Path, cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let image_dir = out_dir.join("images");
    fs::create_dir_all(&image_dir)?;

    let test_real = (cfg.n_real / 4).max(1);
    let test_fake = (cfg.n_fake / 4).max(1);
    let splits = [
        ("train", TRAIN_DATASET, cfg.n_real, cfg.n_fake, false),
        ("test", TEST_DATASET, test_real, test_fake, false),
        ("shifted", SHIFTED_DATASET, test_real, test_fake, true),
    ];

    let mut artifacts = Vec::new();
    let mut manifests = Vec::new();
    for (split_idx, &(split, dataset, n_real, n_fake, shifted)) in splits.iter().enumerate() {
        let split_idx = split_idx as u64;
        // The shifted domain's capture pipeline is noisier across the board.
        let noise_cap = if shifted {
            NOISE_CAP * (1.0 + cfg.domain_shift_strength)
        } else {
            NOISE_CAP
        };
        let mut entries = Vec::with_capacity(n_real + n_fake);
        for i in 0..n_real {
            let mut img = base_image(cfg, split_idx, i as u64, noise_cap);
            let mut marks = stream(cfg.seed, split_idx * 8 + 5, i as u64);
            stamp_domain_marks(&mut img, cfg, &mut marks, shifted);
            if shifted {
                compress_contrast(&mut img, cfg.domain_shift_strength);
            }
            entries.push(write_frame(&image_dir, cfg, split, dataset, "real", 0, i, &img)?);
        }
        for i in 0..n_fake {
            // The fake's canvas replays its source real's streams — base and
            // domain marks — so a zero artifact amplitude leaves the two
            // frames pixel-identical.
            let mut img = base_image(cfg, split_idx, (i % n_real) as u64, noise_cap);
            let mut marks = stream(cfg.seed, split_idx * 8 + 5, (i % n_real) as u64);
            stamp_domain_marks(&mut img, cfg, &mut marks, shifted);
            let mut rng = stream(cfg.seed, split_idx * 8 + 4, i as u64);
            let (row, col) = artifact_position(cfg, &mut rng);
            // Forgeries vary in quality: each fake draws its own artifact
            // strength from a continuum that reaches near zero, so a few
            // are genuinely ambiguous and the detector has to express
            // graded confidence instead of a hard gate.
            let strength =
                cfg.artifact_amplitude * (0.03 + 0.97 * rng.random::<f64>().powf(1.3));
            stamp_artifact(&mut img, row, col, cfg, strength);
            if shifted {
                compress_contrast(&mut img, cfg.domain_shift_strength);
            }
            let entry = write_frame(&image_dir, cfg, split, dataset, "fake", 1, i, &img)?;
            artifacts.push(ArtifactRecord {
                path: entry.path.to_string_lossy().into_owned(),
                row,
                col,
                size: cfg.artifact_patch_size,
                strength,
            });
            entries.push(entry);
        }
        let manifest_path = out_dir.join(format!("{split}.csv"));
        save_manifest(&manifest_path, &entries)?;
        manifests.push((
            Manifest {
                root: out_dir.to_path_buf(),
                entries,
            },
            manifest_path,
        ));
    }

    let artifacts_path = out_dir.join("artifacts.csv");
    let mut writer = csv::Writer::from_path(&artifacts_path)?;
    writer.write_record(ARTIFACT_HEADER)?;
    for a in &artifacts {
        writer.write_record([
            a.path.as_str(),
            &a.row.to_string(),
            &a.col.to_string(),
            &a.size.to_string(),
            &a.strength.to_string(),
        ])?;
    }
    writer.flush()?;

    let mut it = manifests.into_iter();
    let (train, train_path) = it.next().expect("three splits");
    let (test, test_path) = it.next().expect("three splits");
    let (shifted, shifted_path) = it.next().expect("three splits");
    Ok(SynthOutput {
        train,
        test,
        shifted,
        train_path,
        test_path,
        shifted_path,
        artifacts_path,
    })
}

/// A split's worth of decoded, normalized frames, label- and id-aligned.
#[derive(Debug)]
pub struct LoadedSet {
    pub images: Array3<f64>,
    pub labels: Vec<u8>,
    pub sample_ids: Vec<String>,
    pub video_ids: Vec<String>,
    pub dataset_ids: Vec<String>,
}

/// The pipeline's standard grayscale normalization: maps unit-range pixels
/// to [-1, 1].
pub fn default_normalization() -> Normalization {
    Normalization {
        mean: vec![0.5],
        std: vec![0.5],
    }
}

/// Decode every manifest frame to grayscale and normalize. All frames must
/// be square and share one size.
pub fn load_images(manifest: &Manifest, normalization: &Normalization) -> Result<LoadedSet> {
    if normalization.mean.len() != 1 || normalization.std.len() != 1 {
        return Err(Error::Config(format!(
            "grayscale pipeline expects 1-channel normalization, got {}/{} entries",
            normalization.mean.len(),
            normalization.std.len()
        )));
    }
    let (mean, std) = (normalization.mean[0], normalization.std[0]);
    if !mean.is_finite() || !std.is_finite() || std == 0.0 {
        return Err(Error::Config(format!(
            "bad normalization: mean {mean}, std {std}"
        )));
    }
    if manifest.entries.is_empty() {
        return Err(Error::InvalidInput("manifest has no frames".into()));
    }
    let mut images: Option<Array3<f64>> = None;
    let mut labels = Vec::with_capacity(manifest.entries.len());
    let mut sample_ids = Vec::with_capacity(manifest.entries.len());
    let mut video_ids = Vec::with_capacity(manifest.entries.len());
    let mut dataset_ids = Vec::with_capacity(manifest.entries.len());
    for (i, entry) in manifest.entries.iter().enumerate() {
        let path = manifest.image_path(entry);
        let gray = image::open(&path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
            .to_luma8();
        let (w, h) = gray.dimensions();
        if w != h {
            return Err(Error::Data(format!(
                "{}: frames must be square, got {w}x{h}",
                path.display()
            )));
        }
        let size = w as usize;
        let stack = images.get_or_insert_with(|| {
            Array3::zeros((manifest.entries.len(), size, size))
        });
        if stack.dim().1 != size {
            return Err(Error::Data(format!(
                "{}: frame size {size} does not match the set's {}",
                path.display(),
                stack.dim().1
            )));
        }
        let mut slot = stack.index_axis_mut(Axis(0), i);
        for (x, y, px) in gray.enumerate_pixels() {
            slot[[y as usize, x as usize]] = (f64::from(px.0[0]) / 255.0 - mean) / std;
        }
        labels.push(entry.label);
        sample_ids.push(entry.path.to_string_lossy().into_owned());
        video_ids.push(entry.video_id.clone());
        dataset_ids.push(entry.dataset_id.clone());
    }
    Ok(LoadedSet {
        images: images.expect("nonempty manifest"),
        labels,
        sample_ids,
        video_ids,
        dataset_ids,
    })
}

// ---------------------------------------------------------------------------
// Generation internals

/// Independent per-image stream: any (seed, lane, index) triple maps to an
/// unrelated ChaCha20 state, so generation order never matters.
fn stream(seed: u64, lane: u64, index: u64) -> ChaCha20Rng {
    let mut z = seed
        ^ lane.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha20Rng::seed_from_u64(z ^ (z >> 31))
}

/// Per-image sensor-noise ceiling. Every frame draws its own noise floor
/// below this, so the artifact-versus-noise decision is genuinely graded:
/// a weak artifact on a noisy frame is ambiguous, the same artifact on a
/// clean frame is obvious.
const NOISE_CAP: f64 = 0.06;

/// A smooth background of low-frequency waves with a brighter face-like
/// oval in the middle, in unit range, plus per-pixel sensor noise at a
/// per-image level drawn below `noise_cap`. The noise comes from the same
/// stream as the waves so a fake replaying this base reproduces it exactly.
fn base_image(cfg: &SynthConfig, split_idx: u64, index: u64, noise_cap: f64) -> Array2<f64> {
    let mut rng = stream(cfg.seed, split_idx * 8, index);
    let s = cfg.image_size as f64;
    let waves: Vec<[f64; 4]> = (0..3)
        .map(|_| {
            [
                0.4 + rng.random::<f64>() * 1.2,
                0.4 + rng.random::<f64>() * 1.2,
                rng.random::<f64>() * std::f64::consts::TAU,
                0.10 + rng.random::<f64>() * 0.12,
            ]
        })
        .collect();
    let brightness = rng.random::<f64>() * 0.10 - 0.05;
    let floor = noise_cap * rng.random::<f64>();
    let (cx, cy) = (s / 2.0, s / 2.0);
    let mut img = Array2::zeros((cfg.image_size, cfg.image_size));
    for y in 0..cfg.image_size {
        for x in 0..cfg.image_size {
            let (xf, yf) = (x as f64, y as f64);
            let mut v = 0.45 + brightness;
            for w in &waves {
                let [fx, fy, phase, amp] = *w;
                v += amp * (std::f64::consts::TAU * (fx * xf + fy * yf) / s + phase).cos();
            }
            let dx = (xf - cx) / (0.30 * s);
            let dy = (yf - cy) / (0.38 * s);
            let d = (dx * dx + dy * dy).sqrt();
            v += 0.15 * ((1.0 - d) * 3.0).clamp(0.0, 1.0);
            if floor > 0.0 {
                let noise = if rng.random::<bool>() { 1.0 } else { -1.0 };
                v += floor * noise;
            }
            img[[y, x]] = v.clamp(0.0, 1.0);
        }
    }
    img
}

/// Faint checker marks left by the capture pipeline — benign blemishes that
/// resemble weak forgery cues. Applied to reals and fakes alike: they are a
/// property of the domain, not of the class. The source domain leaves an
/// occasional single mark, so even in-distribution data has reals that
/// mildly excite a forgery detector and the optimal threshold learns to sit
/// above them. The shifted domain marks every frame, several times and more
/// strongly — which is what makes naively transferred thresholds
/// false-alarm after the shift.
fn stamp_domain_marks(img: &mut Array2<f64>, cfg: &SynthConfig, rng: &mut ChaCha20Rng, shifted: bool) {
    let size = 4.min(cfg.image_size);
    let hi = cfg.image_size - size;
    let marks: Vec<f64> = if shifted {
        (0..3)
            .map(|_| cfg.domain_shift_strength * (0.04 + 0.08 * rng.random::<f64>()))
            .collect()
    } else if rng.random::<f64>() < 0.06 {
        vec![0.025 + 0.035 * rng.random::<f64>()]
    } else {
        Vec::new()
    };
    for amp in marks {
        let row = rng.random_range(0..=hi);
        let col = rng.random_range(0..=hi);
        for dy in 0..size {
            for dx in 0..size {
                let sign = if (row + dy + col + dx) % 2 == 0 { 1.0 } else { -1.0 };
                let v = &mut img[[row + dy, col + dx]];
                *v = (*v + sign * amp).clamp(0.0, 1.0);
            }
        }
    }
}

/// Uniform patch position whose center lies inside the oval.
fn artifact_position(cfg: &SynthConfig, rng: &mut ChaCha20Rng) -> (usize, usize) {
    let s = cfg.image_size as f64;
    let p = cfg.artifact_patch_size;
    let hi = cfg.image_size - p;
    let (cx, cy) = (s / 2.0, s / 2.0);
    for _ in 0..64 {
        let row = rng.random_range(0..=hi);
        let col = rng.random_range(0..=hi);
        let y = row as f64 + p as f64 / 2.0;
        let x = col as f64 + p as f64 / 2.0;
        let dx = (x - cx) / (0.30 * s);
        let dy = (y - cy) / (0.38 * s);
        if (dx * dx + dy * dy).sqrt() <= 0.8 {
            return (row, col);
        }
    }
    (hi / 2, hi / 2)
}

/// Add the high-frequency forgery cue: a checkerboard whose phase is
/// anchored to absolute pixel coordinates (every artifact looks alike to a
/// patch detector) and whose swing is this image's `strength`.
fn stamp_artifact(img: &mut Array2<f64>, row: usize, col: usize, cfg: &SynthConfig, strength: f64) {
    let p = cfg.artifact_patch_size;
    for dy in 0..p {
        for dx in 0..p {
            let sign = if (row + dy + col + dx) % 2 == 0 { 1.0 } else { -1.0 };
            let v = &mut img[[row + dy, col + dx]];
            *v = (*v + sign * strength).clamp(0.0, 1.0);
        }
    }
}

/// Global contrast compression plus a slight brightening — the rest of the
/// distribution shift. Identity at zero strength.
fn compress_contrast(img: &mut Array2<f64>, strength: f64) {
    for v in img.iter_mut() {
        *v = (0.5 + (*v - 0.5) / (1.0 + 0.8 * strength) + 0.04 * strength).clamp(0.0, 1.0);
    }
}

fn write_frame(
    image_dir: &Path,
    cfg: &SynthConfig,
    split: &str,
    dataset: &str,
    class: &str,
    label: u8,
    index: usize,
    img: &Array2<f64>,
) -> Result<ManifestEntry> {
    let stem = format!("{split}_{class}_{index:04}");
    let file = image_dir.join(format!("{stem}.png"));
    let size = cfg.image_size as u32;
    let buf = image::GrayImage::from_fn(size, size, |x, y| {
        image::Luma([(img[[y as usize, x as usize]] * 255.0).round() as u8])
    });
    buf.save(&file)
        .map_err(|e| Error::Data(format!("{}: {e}", file.display())))?;
    Ok(ManifestEntry {
        path: PathBuf::from(format!("images/{stem}.png")),
        label,
        video_id: stem,
        dataset_id: dataset.to_string(),
        split: split.to_string(),
    })
}
