//! Labelled example sequences and their on-disk representation.
//!
//! A [`SequenceDataset`] is an ordered, immutable list of examples. Order
//! matters: prequential code lengths are defined over the sequence as given.
//!
//! The `PQDS` file layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PQDS"
//! 4       4     u32 version (= 1)
//! 8       8     u64 number of examples n
//! 16      4     u32 feature dimension d
//! 20      4     u32 number of classes C
//! 24      ...   n records of d f32 features followed by a u32 label
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{arg_err, Error, Result};
use crate::rng::{self, Rng64};

pub const PQDS_MAGIC: [u8; 4] = *b"PQDS";
pub const PQDS_VERSION: u32 = 1;
pub const PQDS_HEADER_LEN: u64 = 24;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f32>,
    pub label: u32,
}

impl Example {
    pub fn new(features: Vec<f32>, label: u32) -> Self {
        Self { features, label }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    examples: Vec<Example>,
    dim: usize,
    num_classes: usize,
    order_seed: Option<u64>,
}

impl SequenceDataset {
    pub fn new(examples: Vec<Example>, dim: usize, num_classes: usize) -> Result<Self> {
        if dim == 0 {
            return arg_err("feature dimension must be positive");
        }
        if num_classes < 2 {
            return arg_err(format!("need at least 2 classes, got {num_classes}"));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.features.len() != dim {
                return arg_err(format!(
                    "example {i} has {} features, expected {dim}",
                    ex.features.len()
                ));
            }
            if ex.label as usize >= num_classes {
                return arg_err(format!(
                    "example {i} has label {} >= {num_classes}",
                    ex.label
                ));
            }
        }
        Ok(Self {
            examples,
            dim,
            num_classes,
            order_seed: None,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, i: usize) -> &Example {
        &self.examples[i]
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn order_seed(&self) -> Option<u64> {
        self.order_seed
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for ex in &self.examples {
            counts[ex.label as usize] += 1;
        }
        counts
    }

    /// Returns a copy with one label replaced. Used to probe that recorded
    /// losses never depend on labels that were not yet revealed.
    pub fn with_label(&self, index: usize, label: u32) -> Result<Self> {
        if index >= self.len() || label as usize >= self.num_classes {
            return arg_err("label override out of range");
        }
        let mut out = self.clone();
        out.examples[index].label = label;
        Ok(out)
    }

    /// Keeps the first `n` examples.
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.examples.truncate(n);
        out
    }
}

/// Fisher-Yates shuffle driven by [`rng::seeded`]`(seed)`: for `i` from
/// `n-1` down to 1, swap position `i` with a uniform index in `0..=i`.
pub fn shuffle_sequence(dataset: &SequenceDataset, seed: u64) -> SequenceDataset {
    let mut out = dataset.clone();
    let mut rng = rng::seeded(seed);
    for i in (1..out.examples.len()).rev() {
        let j = rng::index(&mut rng, i + 1);
        out.examples.swap(i, j);
    }
    out.order_seed = Some(seed);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTaskSpec {
    pub n: usize,
    pub channels: usize,
    pub classes: usize,
    pub dim_per_channel: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Channels whose features are kept; all others are zeroed.
    pub condition_on: Vec<usize>,
}

impl ChannelTaskSpec {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return arg_err("n must be at least 1");
        }
        if self.channels == 0 {
            return arg_err("channels must be at least 1");
        }
        if self.classes < 2 {
            return arg_err("classes must be at least 2");
        }
        if self.dim_per_channel == 0 {
            return arg_err("dim_per_channel must be at least 1");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return arg_err("noise_std must be finite and non-negative");
        }
        if self.condition_on.is_empty() {
            return arg_err("condition_on must name at least one channel");
        }
        if let Some(&c) = self.condition_on.iter().find(|&&c| c >= self.channels) {
            return arg_err(format!("condition_on channel {c} out of range"));
        }
        Ok(())
    }
}

/// A generated channel task together with the latent cluster assignment of
/// every channel (channel 0's cluster is the label).
#[derive(Debug, Clone)]
pub struct ChannelSample {
    pub dataset: SequenceDataset,
    pub cluster_ids: Vec<Vec<u32>>,
}

/// Synthetic task in which only channel 0 carries label information.
///
/// Every channel is a Gaussian mixture with `classes` components whose means
/// are drawn once as `2 * N(0, I)`. Channel 0 picks its component from the
/// label; the other channels pick theirs uniformly and independently of it.
/// The draw sequence does not depend on `condition_on`, so models conditioned
/// on different channel subsets see the same underlying sample.
pub fn generate_channel_task(spec: &ChannelTaskSpec) -> Result<SequenceDataset> {
    generate_channel_sample(spec).map(|s| s.dataset)
}

pub fn generate_channel_sample(spec: &ChannelTaskSpec) -> Result<ChannelSample> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let dpc = spec.dim_per_channel;
    let dim = spec.channels * dpc;

    // means[channel][cluster][feature]
    let means: Vec<Vec<Vec<f64>>> = (0..spec.channels)
        .map(|_| {
            (0..spec.classes)
                .map(|_| (0..dpc).map(|_| 2.0 * rng::normal(&mut rng)).collect())
                .collect()
        })
        .collect();

    let mut keep = vec![false; spec.channels];
    for &c in &spec.condition_on {
        keep[c] = true;
    }

    let mut examples = Vec::with_capacity(spec.n);
    let mut cluster_ids = vec![Vec::with_capacity(spec.n); spec.channels];
    for _ in 0..spec.n {
        let label = rng::index(&mut rng, spec.classes);
        let mut clusters = Vec::with_capacity(spec.channels);
        clusters.push(label);
        for _ in 1..spec.channels {
            clusters.push(rng::index(&mut rng, spec.classes));
        }
        let mut features = Vec::with_capacity(dim);
        for (ch, &cl) in clusters.iter().enumerate() {
            for f in 0..dpc {
                let v = means[ch][cl][f] + spec.noise_std * rng::normal(&mut rng);
                features.push(if keep[ch] { v as f32 } else { 0.0 });
            }
        }
        for (ch, &cl) in clusters.iter().enumerate() {
            cluster_ids[ch].push(cl as u32);
        }
        examples.push(Example::new(features, label as u32));
    }
    Ok(ChannelSample {
        dataset: SequenceDataset::new(examples, dim, spec.classes)?,
        cluster_ids,
    })
}

pub fn write_sequence(dataset: &SequenceDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&PQDS_MAGIC)?;
    w.write_all(&PQDS_VERSION.to_le_bytes())?;
    w.write_all(&(dataset.len() as u64).to_le_bytes())?;
    w.write_all(&(dataset.dim as u32).to_le_bytes())?;
    w.write_all(&(dataset.num_classes as u32).to_le_bytes())?;
    for ex in &dataset.examples {
        for &f in &ex.features {
            w.write_all(&f.to_le_bytes())?;
        }
        w.write_all(&ex.label.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Header of a `PQDS` file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PqdsHeader {
    pub len: u64,
    pub dim: usize,
    pub num_classes: usize,
}

impl PqdsHeader {
    fn record_len(&self) -> u64 {
        self.dim as u64 * 4 + 4
    }
}

/// Cursor over a stored sequence with cheap in-order reads.
///
/// `position` is 1-based: it names the example the next [`read_next`]
/// returns, and equals `len + 1` once the stream is exhausted.
///
/// [`read_next`]: SequentialReader::read_next
#[derive(Debug)]
pub struct SequentialReader {
    source: BufReader<File>,
    header: PqdsHeader,
    position: u64,
}

pub fn open_stream(path: &Path) -> Result<SequentialReader> {
    let mut file = File::open(path)?;
    let header = read_pqds_header(&mut file)?;
    let expected = PQDS_HEADER_LEN + header.len * header.record_len();
    let actual = file.metadata()?.len();
    if actual != expected {
        return Err(Error::Format(format!(
            "file is {actual} bytes, header implies {expected}"
        )));
    }
    Ok(SequentialReader {
        source: BufReader::new(file),
        header,
        position: 1,
    })
}

fn read_pqds_header(r: &mut impl Read) -> Result<PqdsHeader> {
    let mut buf = [0u8; PQDS_HEADER_LEN as usize];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated PQDS header".into()))?;
    if buf[0..4] != PQDS_MAGIC {
        return Err(Error::Format("bad PQDS magic".into()));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != PQDS_VERSION {
        return Err(Error::Format(format!("unsupported PQDS version {version}")));
    }
    let len = u64::from_le_bytes(buf[8..16].try_into().unwrap());
    let dim = u32::from_le_bytes(buf[16..20].try_into().unwrap()) as usize;
    let num_classes = u32::from_le_bytes(buf[20..24].try_into().unwrap()) as usize;
    if dim == 0 || num_classes < 2 {
        return Err(Error::Format(format!(
            "invalid header: dim={dim}, classes={num_classes}"
        )));
    }
    Ok(PqdsHeader {
        len,
        dim,
        num_classes,
    })
}

impl SequentialReader {
    pub fn header(&self) -> PqdsHeader {
        self.header
    }

    pub fn len(&self) -> u64 {
        self.header.len
    }

    pub fn is_empty(&self) -> bool {
        self.header.len == 0
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn is_exhausted(&self) -> bool {
        self.position > self.header.len
    }

    pub fn read_next(&mut self) -> Result<Example> {
        if self.is_exhausted() {
            return Err(Error::Exhausted {
                position: self.position,
            });
        }
        let mut buf = vec![0u8; self.header.record_len() as usize];
        self.source.read_exact(&mut buf)?;
        let (feat, label) = buf.split_at(self.header.dim * 4);
        let features = feat
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let label = u32::from_le_bytes(label.try_into().unwrap());
        if label as usize >= self.header.num_classes {
            return Err(Error::Format(format!(
                "record {} has label {label} >= {}",
                self.position, self.header.num_classes
            )));
        }
        self.position += 1;
        Ok(Example { features, label })
    }

    pub fn reset(&mut self) -> Result<()> {
        self.source.seek(SeekFrom::Start(PQDS_HEADER_LEN))?;
        self.position = 1;
        Ok(())
    }
}

pub fn read_sequence(path: &Path) -> Result<SequenceDataset> {
    let mut reader = open_stream(path)?;
    let mut examples = Vec::with_capacity(reader.len() as usize);
    while !reader.is_exhausted() {
        examples.push(reader.read_next()?);
    }
    SequenceDataset::new(examples, reader.header.dim, reader.header.num_classes)
}

fn read_be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

/// Imports an IDX image/label pair (MNIST layout). Pixels are scaled to
/// `[0, 1]`; the class count is `max(label) + 1` (at least 2).
pub fn import_idx(images_path: &Path, labels_path: &Path) -> Result<SequenceDataset> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    import_idx_bytes(&images, &labels)
}

pub fn import_idx_bytes(images: &[u8], labels: &[u8]) -> Result<SequenceDataset> {
    let magic = read_be_u32(images, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("bad IDX images magic {magic:#010x}")));
    }
    let n = read_be_u32(images, 4, "images")? as usize;
    let rows = read_be_u32(images, 8, "images")? as usize;
    let cols = read_be_u32(images, 12, "images")? as usize;
    let magic = read_be_u32(labels, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("bad IDX labels magic {magic:#010x}")));
    }
    let n_labels = read_be_u32(labels, 4, "labels")? as usize;
    if n_labels != n {
        return Err(Error::Format(format!(
            "{n} images but {n_labels} labels"
        )));
    }
    let dim = rows * cols;
    let pixels = &images[16..];
    let label_bytes = &labels[8..];
    if pixels.len() != n * dim {
        return Err(Error::Format(format!(
            "images payload is {} bytes, expected {}",
            pixels.len(),
            n * dim
        )));
    }
    if label_bytes.len() != n {
        return Err(Error::Format(format!(
            "labels payload is {} bytes, expected {n}",
            label_bytes.len()
        )));
    }
    let num_classes = label_bytes.iter().map(|&l| l as usize + 1).max().unwrap_or(2).max(2);
    let examples = pixels
        .chunks_exact(dim.max(1))
        .zip(label_bytes)
        .map(|(px, &l)| {
            let features = px.iter().map(|&p| (f64::from(p) / 255.0) as f32).collect();
            Example::new(features, u32::from(l))
        })
        .collect();
    SequenceDataset::new(examples, dim, num_classes)
}

/// Samples an augmentation: per-feature Gaussian jitter with standard
/// deviation `std`. A zero `std` is the identity and consumes no randomness.
pub fn augment(features: &mut [f64], std: f64, rng: &mut Rng64) {
    if std > 0.0 {
        for f in features.iter_mut() {
            *f += std * rng::normal(rng);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> SequenceDataset {
        let ex = (0..n)
            .map(|i| Example::new(vec![i as f32, -(i as f32) * 0.5], (i % 3) as u32))
            .collect();
        SequenceDataset::new(ex, 2, 3).unwrap()
    }

    fn task(seed: u64, condition_on: Vec<usize>) -> ChannelTaskSpec {
        ChannelTaskSpec {
            n: 4,
            channels: 3,
            classes: 2,
            dim_per_channel: 2,
            noise_std: 0.1,
            seed,
            condition_on,
        }
    }

    #[test]
    fn rejects_bad_labels_and_dims() {
        assert!(SequenceDataset::new(vec![Example::new(vec![0.0], 2)], 1, 2).is_err());
        assert!(SequenceDataset::new(vec![Example::new(vec![0.0, 1.0], 0)], 1, 2).is_err());
        assert!(SequenceDataset::new(vec![], 1, 1).is_err());
    }

    #[test]
    fn channel_task_shape_and_determinism() {
        let a = generate_channel_task(&task(7, vec![0, 1, 2])).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a.dim(), 6);
        let b = generate_channel_task(&task(7, vec![0, 1, 2])).unwrap();
        assert_eq!(a, b);
        let c = generate_channel_task(&task(8, vec![0, 1, 2])).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn masked_channels_are_zero_and_kept_ones_match() {
        let full = generate_channel_task(&task(3, vec![0, 1, 2])).unwrap();
        let red = generate_channel_task(&task(3, vec![0])).unwrap();
        for (f, r) in full.examples().iter().zip(red.examples()) {
            assert_eq!(f.label, r.label);
            assert_eq!(&f.features[..2], &r.features[..2]);
            assert!(r.features[2..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn channel_task_rejects_bad_counts() {
        let mut s = task(1, vec![0]);
        s.classes = 1;
        assert!(generate_channel_task(&s).is_err());
        let mut s = task(1, vec![0]);
        s.n = 0;
        assert!(generate_channel_task(&s).is_err());
        let mut s = task(1, vec![5]);
        s.channels = 3;
        assert!(generate_channel_task(&s).is_err());
    }

    #[test]
    fn distractor_channels_carry_no_label_information() {
        let spec = ChannelTaskSpec {
            n: 20_000,
            channels: 3,
            classes: 2,
            dim_per_channel: 2,
            noise_std: 0.5,
            seed: 11,
            condition_on: vec![0, 1, 2],
        };
        let sample = generate_channel_sample(&spec).unwrap();
        let labels: Vec<u32> = sample.dataset.examples().iter().map(|e| e.label).collect();
        for ch in 1..3 {
            let mi = plug_in_mutual_information(&labels, &sample.cluster_ids[ch], 2);
            assert!(mi < 0.01, "channel {ch}: MI {mi}");
        }
        let mi0 = plug_in_mutual_information(&labels, &sample.cluster_ids[0], 2);
        assert!((mi0 - std::f64::consts::LN_2).abs() < 0.01);
    }

    fn plug_in_mutual_information(a: &[u32], b: &[u32], k: usize) -> f64 {
        let n = a.len() as f64;
        let mut joint = vec![vec![0.0; k]; k];
        for (&x, &y) in a.iter().zip(b) {
            joint[x as usize][y as usize] += 1.0;
        }
        let pa: Vec<f64> = joint.iter().map(|r| r.iter().sum::<f64>() / n).collect();
        let pb: Vec<f64> = (0..k).map(|j| joint.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let mut mi = 0.0;
        for i in 0..k {
            for j in 0..k {
                let p = joint[i][j] / n;
                if p > 0.0 {
                    mi += p * (p / (pa[i] * pb[j])).ln();
                }
            }
        }
        mi
    }

    #[test]
    fn shuffle_single_is_identity() {
        let d = small(1);
        let s = shuffle_sequence(&d, 99);
        assert_eq!(s.examples(), d.examples());
        assert_eq!(s.order_seed(), Some(99));
    }

    #[test]
    fn shuffle_preserves_multiset() {
        let d = small(17);
        let s = shuffle_sequence(&d, 5);
        let key = |e: &Example| (e.label, e.features[0].to_bits());
        let mut a: Vec<_> = d.examples().iter().map(key).collect();
        let mut b: Vec<_> = s.examples().iter().map(key).collect();
        assert_ne!(a, b);
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_eq!(d.class_counts(), s.class_counts());
    }

    #[test]
    fn shuffle_matches_reference_fisher_yates() {
        use rand::Rng;
        let d = small(5);
        // reference: draw j uniformly from 0..=i for i = 4, 3, 2, 1
        let mut rng = crate::rng::seeded(3);
        let mut perm: Vec<usize> = (0..5).collect();
        let mut i = 4;
        while i >= 1 {
            let j: usize = rng.random_range(0..i + 1);
            perm.swap(i, j);
            i -= 1;
        }
        let expected: Vec<Example> = perm.iter().map(|&p| d.get(p).clone()).collect();
        assert_eq!(shuffle_sequence(&d, 3).examples(), &expected[..]);
    }

    #[test]
    fn reader_round_trip_and_reset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pqds");
        let d = small(5);
        write_sequence(&d, &path).unwrap();
        let mut r = open_stream(&path).unwrap();
        assert_eq!(r.position(), 1);
        let first = r.read_next().unwrap();
        assert_eq!(&first, d.get(0));
        assert_eq!(r.position(), 2);
        for i in 1..5 {
            assert_eq!(&r.read_next().unwrap(), d.get(i));
        }
        assert!(matches!(r.read_next(), Err(Error::Exhausted { position: 6 })));
        r.reset().unwrap();
        assert_eq!(r.position(), 1);
        assert_eq!(&r.read_next().unwrap(), d.get(0));
        assert_eq!(read_sequence(&path).unwrap(), d);
    }

    #[test]
    fn empty_dataset_reader_is_exhausted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.pqds");
        write_sequence(&small(0), &path).unwrap();
        let mut r = open_stream(&path).unwrap();
        assert!(matches!(r.read_next(), Err(Error::Exhausted { .. })));
    }

    #[test]
    fn corrupted_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pqds");
        write_sequence(&small(3), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[1] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(open_stream(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.pqds");
        write_sequence(&small(3), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(open_stream(&path), Err(Error::Format(_))));
    }

    fn idx_fixture(n_labels: u32) -> (Vec<u8>, Vec<u8>) {
        let mut images = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 1];
        images.extend_from_slice(&[0, 255, 51, 102]);
        let mut labels = vec![0, 0, 8, 1];
        labels.extend_from_slice(&n_labels.to_be_bytes());
        labels.extend((0..n_labels).map(|i| (i as u8) * 7));
        (images, labels)
    }

    #[test]
    fn idx_fixture_scaled_by_hand() {
        let (images, labels) = idx_fixture(2);
        let d = import_idx_bytes(&images, &labels).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.num_classes(), 8);
        assert_eq!(d.get(0).features, vec![0.0, 1.0]);
        assert_eq!(d.get(1).features, vec![0.2, 0.4]);
        assert_eq!(d.get(1).label, 7);
    }

    #[test]
    fn idx_count_mismatch_and_bad_magic() {
        let (images, labels) = idx_fixture(1);
        assert!(matches!(import_idx_bytes(&images, &labels), Err(Error::Format(_))));
        let (mut images, labels) = idx_fixture(2);
        images[3] = 0x01;
        assert!(matches!(import_idx_bytes(&images, &labels), Err(Error::Format(_))));
    }
}
