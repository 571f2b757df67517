//! Track manifests, stratified 5:2:3 splitting and 256-frame segments.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{read_feature_cache, MelSpectrogram, N_MELS};
use crate::model::{INPUT_FRAMES, INPUT_MELS};
use crate::nn::Tensor;
use crate::{Error, Result};

/// The ten GTZAN genres in their fixed index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Genre {
    Blues,
    Classical,
    Country,
    Disco,
    Hiphop,
    Jazz,
    Metal,
    Pop,
    Reggae,
    Rock,
}

impl Genre {
    pub const COUNT: usize = 10;
    pub const ALL: [Genre; Self::COUNT] = [
        Genre::Blues,
        Genre::Classical,
        Genre::Country,
        Genre::Disco,
        Genre::Hiphop,
        Genre::Jazz,
        Genre::Metal,
        Genre::Pop,
        Genre::Reggae,
        Genre::Rock,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL.get(index).copied().ok_or_else(|| Error::Index(format!("genre index {index} (expected 0-9)")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Genre::Blues => "blues",
            Genre::Classical => "classical",
            Genre::Country => "country",
            Genre::Disco => "disco",
            Genre::Hiphop => "hiphop",
            Genre::Jazz => "jazz",
            Genre::Metal => "metal",
            Genre::Pop => "pop",
            Genre::Reggae => "reggae",
            Genre::Rock => "rock",
        }
    }
}

impl FromStr for Genre {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|g| g.name() == s).ok_or_else(|| Error::Format(format!("unknown genre {s:?}")))
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| Error::Format(format!("unknown split {s:?}")))
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackRecord {
    pub id: String,
    pub feature_path: PathBuf,
    pub genre: Genre,
    pub split: Split,
}

/// Reads a manifest: one `id<TAB>feature_path<TAB>genre<TAB>split` record per
/// line, no header. Relative feature paths are resolved against the
/// manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<TrackRecord>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut reader =
        csv::ReaderBuilder::new().delimiter(b'\t').has_headers(false).quoting(false).from_path(path).map_err(|e| {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                other => Error::Format(format!("{}: {other:?}", path.display())),
            }
        })?;
    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let fields: Vec<&str> = row.iter().collect();
        let [id, feature_path, genre, split] = fields[..] else {
            return Err(Error::Format(format!(
                "{}:{}: expected 4 tab-separated fields, found {}",
                path.display(),
                line + 1,
                fields.len()
            )));
        };
        let feature_path = Path::new(feature_path);
        records.push(TrackRecord {
            id: id.to_string(),
            feature_path: if feature_path.is_absolute() { feature_path.to_path_buf() } else { base.join(feature_path) },
            genre: genre.parse()?,
            split: split.parse()?,
        });
    }
    Ok(records)
}

/// Writes a manifest; feature paths under the manifest's directory are stored relative to it.
pub fn write_manifest(path: &Path, records: &[TrackRecord]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut writer = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .quote_style(csv::QuoteStyle::Never)
        .from_path(path)?;
    for r in records {
        if r.id.contains(['\t', '\n']) {
            return Err(Error::Format(format!("track id {:?} contains a tab or newline", r.id)));
        }
        let stored = r.feature_path.strip_prefix(base).unwrap_or(&r.feature_path);
        writer.write_record([r.id.as_str(), &stored.to_string_lossy(), r.genre.name(), r.split.name()])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Largest-remainder apportionment of `n` items over `ratios`; ties go to the earlier split.
fn apportion(n: usize, ratios: [u32; 3]) -> [usize; 3] {
    let total: u64 = ratios.iter().map(|&r| r as u64).sum();
    let mut counts = [0usize; 3];
    let mut remainders = [(0u64, 0usize); 3];
    for (i, &r) in ratios.iter().enumerate() {
        let exact = n as u64 * r as u64;
        counts[i] = (exact / total) as usize;
        remainders[i] = (exact % total, i);
    }
    let mut left = n - counts.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in &remainders {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Assigns train/validation/test splits stratified per genre.
///
/// Each genre's tracks are shuffled with a generator seeded by `seed` and
/// divided by largest-remainder apportionment of `ratios`, so every genre's
/// split sizes are exact when they divide evenly and within one track
/// otherwise. Fails if a genre has fewer tracks than there are non-empty
/// splits.
pub fn split_dataset(records: Vec<TrackRecord>, ratios: [u32; 3], seed: u64) -> Result<Vec<TrackRecord>> {
    let needed = ratios.iter().filter(|&&r| r > 0).count();
    for genre in Genre::ALL {
        let n = records.iter().filter(|r| r.genre == genre).count();
        if n > 0 && n < needed {
            return Err(Error::Config(format!(
                "genre {genre} has {n} track(s); at least {needed} are needed to populate every split"
            )));
        }
    }
    stratified_split(records, ratios, seed)
}

/// [`split_dataset`] without the minimum-size check; genres with very few
/// tracks simply leave some splits empty.
pub fn stratified_split(mut records: Vec<TrackRecord>, ratios: [u32; 3], seed: u64) -> Result<Vec<TrackRecord>> {
    if records.is_empty() {
        return Err(Error::Config("no tracks to split".into()));
    }
    if ratios.iter().all(|&r| r == 0) {
        return Err(Error::Config("split ratios are all zero".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = records.iter().find(|r| !seen.insert(r.id.as_str())) {
        return Err(Error::Config(format!("duplicate track id {:?}", dup.id)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for genre in Genre::ALL {
        let mut members: Vec<usize> = (0..records.len()).filter(|&i| records[i].genre == genre).collect();
        if members.is_empty() {
            continue;
        }
        // Shuffle from a canonical order so the result does not depend on input order.
        members.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));
        members.shuffle(&mut rng);
        let counts = apportion(members.len(), ratios);
        let mut it = members.into_iter();
        for (split, count) in Split::ALL.into_iter().zip(counts) {
            for i in it.by_ref().take(count) {
                records[i].split = split;
            }
        }
    }
    Ok(records)
}

/// A track's spectrogram together with its label.
#[derive(Debug, Clone)]
pub struct LabeledTrack {
    pub id: String,
    pub genre: Genre,
    pub spec: MelSpectrogram,
}

/// Loads the feature caches of every record in `split`.
pub fn load_split(records: &[TrackRecord], split: Split) -> Result<Vec<LabeledTrack>> {
    records.iter().filter(|r| r.split == split).map(load_track).collect()
}

pub fn load_track(record: &TrackRecord) -> Result<LabeledTrack> {
    let spec = read_feature_cache(&record.feature_path)?;
    if spec.n_mels() != N_MELS {
        return Err(Error::Format(format!(
            "{}: {} mel bands, expected {N_MELS}",
            record.feature_path.display(),
            spec.n_mels()
        )));
    }
    Ok(LabeledTrack { id: record.id.clone(), genre: record.genre, spec })
}

/// A 1×64×256 window of a track's spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub values: Tensor<f32>,
    pub source_track: String,
    pub start_frame: usize,
}

fn check_segmentable(spec: &MelSpectrogram) -> Result<()> {
    if spec.n_mels() != INPUT_MELS {
        return Err(Error::Shape(format!("spectrogram has {} mel bands, expected {INPUT_MELS}", spec.n_mels())));
    }
    if spec.n_frames() < INPUT_FRAMES {
        return Err(Error::InsufficientInput(format!(
            "spectrogram has {} frames, a segment needs {INPUT_FRAMES}",
            spec.n_frames()
        )));
    }
    Ok(())
}

pub fn segment_at(spec: &MelSpectrogram, track_id: &str, start_frame: usize) -> Result<Segment> {
    check_segmentable(spec)?;
    let values = Tensor::new(&[1, INPUT_MELS, INPUT_FRAMES], spec.frames(start_frame, INPUT_FRAMES)?)?;
    Ok(Segment { values, source_track: track_id.to_string(), start_frame })
}

/// A segment starting uniformly at random in `[0, n_frames − 256]`.
pub fn sample_training_segment<R: Rng + ?Sized>(spec: &MelSpectrogram, track_id: &str, rng: &mut R) -> Result<Segment> {
    check_segmentable(spec)?;
    let start = rng.gen_range(0..=spec.n_frames() - INPUT_FRAMES);
    segment_at(spec, track_id, start)
}

/// Frame step between consecutive segments: `round(256 · (1 − overlap))`.
pub fn segment_hop(overlap_fraction: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::Domain(format!("overlap {overlap_fraction} must be in [0, 1)")));
    }
    Ok(((INPUT_FRAMES as f64 * (1.0 - overlap_fraction)).round() as usize).max(1))
}

/// Start frames `0, hop, 2·hop, …` of every segment lying entirely inside `n_frames`.
pub fn segment_starts(n_frames: usize, overlap_fraction: f64) -> Result<Vec<usize>> {
    let hop = segment_hop(overlap_fraction)?;
    if n_frames < INPUT_FRAMES {
        return Err(Error::InsufficientInput(format!("{n_frames} frames, a segment needs {INPUT_FRAMES}")));
    }
    Ok((0..=n_frames - INPUT_FRAMES).step_by(hop).collect())
}

pub fn enumerate_segments(spec: &MelSpectrogram, track_id: &str, overlap_fraction: f64) -> Result<Vec<Segment>> {
    check_segmentable(spec)?;
    segment_starts(spec.n_frames(), overlap_fraction)?
        .into_iter()
        .map(|start| segment_at(spec, track_id, start))
        .collect()
}

/// Stacks segments into a `B×1×64×256` tensor, preserving order.
pub fn make_batch(segments: &[Segment], labels: &[Genre]) -> Result<(Tensor<f32>, Vec<usize>)> {
    if segments.is_empty() {
        return Err(Error::Shape("cannot batch zero segments".into()));
    }
    if segments.len() != labels.len() {
        return Err(Error::Shape(format!("{} segments but {} labels", segments.len(), labels.len())));
    }
    let mut data = Vec::with_capacity(segments.len() * INPUT_MELS * INPUT_FRAMES);
    for s in segments {
        if s.values.shape() != [1, INPUT_MELS, INPUT_FRAMES] {
            return Err(Error::Shape(format!("segment of shape {:?}", s.values.shape())));
        }
        data.extend_from_slice(s.values.data());
    }
    let batch = Tensor::new(&[segments.len(), 1, INPUT_MELS, INPUT_FRAMES], data)?;
    Ok((batch, labels.iter().map(|g| g.index()).collect()))
}
