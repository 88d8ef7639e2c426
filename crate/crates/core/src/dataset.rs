//! Labeled image collections and the directory-of-PGM interchange layout
//! `<root>/<class>/<sample>.pgm` (8-bit binary graymaps).

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::input::InputImage;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    /// Index into [`LabeledDataset::class_names`].
    pub class: usize,
    pub sample: String,
    pub image: InputImage,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub class_names: Vec<String>,
    pub images: Vec<LabeledImage>,
}

/// Disjoint train/test partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// Image indices grouped by class.
    pub fn by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.class_names.len()];
        for (i, img) in self.images.iter().enumerate() {
            groups[img.class].push(i);
        }
        groups
    }

    /// Identifier `<class>/<sample>` used in score files.
    pub fn image_id(&self, index: usize) -> String {
        let img = &self.images[index];
        format!("{}/{}", self.class_names[img.class], img.sample)
    }

    /// At least two classes, each with at least two samples.
    pub fn validate_for_triplets(&self) -> Result<()> {
        let groups = self.by_class();
        let populated = groups.iter().filter(|g| !g.is_empty()).count();
        if populated < 2 {
            return Err(Error::InsufficientClasses(populated));
        }
        if let Some(c) = groups.iter().position(|g| g.len() < 2) {
            return Err(Error::InsufficientSamples(format!(
                "class '{}' has {} sample(s), need 2",
                self.class_names[c],
                groups[c].len()
            )));
        }
        Ok(())
    }

    pub fn image_size(&self) -> Option<(usize, usize)> {
        self.images.first().map(|i| (i.image.width(), i.image.height()))
    }

    fn subset(&self, keep_class: impl Fn(usize) -> bool, keep: impl Fn(usize, usize) -> bool) -> Self {
        let mut remap = vec![usize::MAX; self.class_names.len()];
        let mut class_names = Vec::new();
        for (c, name) in self.class_names.iter().enumerate() {
            if keep_class(c) {
                remap[c] = class_names.len();
                class_names.push(name.clone());
            }
        }
        let mut rank = vec![0usize; self.class_names.len()];
        let mut images = Vec::new();
        for img in &self.images {
            let r = rank[img.class];
            rank[img.class] += 1;
            if keep_class(img.class) && keep(img.class, r) {
                images.push(LabeledImage {
                    class: remap[img.class],
                    ..img.clone()
                });
            }
        }
        Self { class_names, images }
    }

    /// The last `test_per_class` samples of every class are held out.
    pub fn split_by_samples(&self, test_per_class: usize) -> DatasetSplit {
        let sizes: Vec<usize> = self.by_class().iter().map(Vec::len).collect();
        let is_test = |c: usize, r: usize| r + test_per_class >= sizes[c];
        DatasetSplit {
            train: self.subset(|_| true, |c, r| !is_test(c, r)),
            test: self.subset(|_| true, is_test),
        }
    }

    /// The last `test_classes` classes are held out entirely.
    pub fn split_by_classes(&self, test_classes: usize) -> DatasetSplit {
        let first_test = self.class_names.len().saturating_sub(test_classes);
        DatasetSplit {
            train: self.subset(|c| c < first_test, |_, _| true),
            test: self.subset(|c| c >= first_test, |_, _| true),
        }
    }
}

pub fn write_pgm(path: &Path, image: &InputImage) -> Result<()> {
    let file = BufWriter::new(fs::File::create(path)?);
    PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            &image.to_u8(),
            image.width() as u32,
            image.height() as u32,
            ExtendedColorType::L8,
        )
        .map_err(|e| image_error(path, e))
}

fn image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io)
            if !matches!(io.kind(), std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::InvalidData) =>
        {
            Error::Io(io)
        }
        other => Error::MalformedImage {
            path: path.to_owned(),
            reason: other.to_string(),
        },
    }
}

/// Reads any PGM (plain or binary, 8 or 16 bit) as a `[0, 1]` image.
pub fn read_pgm(path: &Path) -> Result<InputImage> {
    let file = std::io::BufReader::new(fs::File::open(path)?);
    let decoder = PnmDecoder::new(file).map_err(|e| image_error(path, e))?;
    let img = DynamicImage::from_decoder(decoder).map_err(|e| image_error(path, e))?;
    let malformed = |reason: String| Error::MalformedImage {
        path: path.to_owned(),
        reason,
    };
    match img {
        DynamicImage::ImageLuma8(g) => InputImage::from_u8(g.width() as usize, g.height() as usize, g.as_raw()),
        DynamicImage::ImageLuma16(g) => InputImage::new(
            g.width() as usize,
            g.height() as usize,
            g.as_raw().iter().map(|&v| f32::from(v) / 65535.0).collect(),
        ),
        other => Err(malformed(format!("expected a graymap, found {:?}", other.color()))),
    }
}

pub fn export_dataset(ds: &LabeledDataset, root: &Path) -> Result<()> {
    for name in &ds.class_names {
        fs::create_dir_all(root.join(name))?;
    }
    for img in &ds.images {
        let path = root.join(&ds.class_names[img.class]).join(format!("{}.pgm", img.sample));
        write_pgm(&path, &img.image)?;
    }
    Ok(())
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Loads `<root>/<class>/<sample>.pgm`, classes and samples in lexicographic
/// order. Images whose size differs from `resize_to` are resampled.
pub fn import_dataset(root: &Path, resize_to: Option<(usize, usize)>) -> Result<LabeledDataset> {
    let mut ds = LabeledDataset::default();
    for class_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let name = class_dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::ProtocolViolation(format!("non-UTF-8 class directory {}", class_dir.display())))?
            .to_owned();
        let class = ds.class_names.len();
        let before = ds.images.len();
        for file in sorted_entries(&class_dir)? {
            let is_pgm = file
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
            if !is_pgm || !file.is_file() {
                continue;
            }
            let mut image = read_pgm(&file)?;
            if let Some((w, h)) = resize_to {
                image = image.resize(w, h)?;
            }
            let sample = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
            ds.images.push(LabeledImage { class, sample, image });
        }
        if ds.images.len() == before {
            return Err(Error::ProtocolViolation(format!("class directory '{name}' holds no .pgm images")));
        }
        ds.class_names.push(name);
    }
    if ds.class_names.is_empty() {
        return Err(Error::ProtocolViolation(format!("no class directories under {}", root.display())));
    }
    if resize_to.is_none() {
        let size = ds.image_size();
        if ds.images.iter().any(|i| Some((i.image.width(), i.image.height())) != size) {
            return Err(Error::BadDimensions("images differ in size; configure a resize".into()));
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(classes: usize, samples: usize) -> LabeledDataset {
        let mut ds = LabeledDataset::default();
        for c in 0..classes {
            ds.class_names.push(format!("{c:03}"));
            for s in 0..samples {
                let image = InputImage::from_fn(8, 4, |x, y| ((x * 31 + y * 17 + c * 7 + s) % 256) as f32 / 255.0).unwrap();
                ds.images.push(LabeledImage {
                    class: c,
                    sample: format!("{s:02}"),
                    image,
                });
            }
        }
        ds
    }

    #[test]
    fn export_import_round_trip() {
        let ds = toy(3, 2);
        let dir = tempfile::tempdir().unwrap();
        export_dataset(&ds, dir.path()).unwrap();
        assert!(dir.path().join("001/01.pgm").is_file());
        let back = import_dataset(dir.path(), None).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn empty_class_dir_is_rejected() {
        let ds = toy(2, 2);
        let dir = tempfile::tempdir().unwrap();
        export_dataset(&ds, dir.path()).unwrap();
        fs::create_dir(dir.path().join("zzz")).unwrap();
        assert!(matches!(import_dataset(dir.path(), None), Err(Error::ProtocolViolation(_))));
    }

    #[test]
    fn garbage_pgm_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("a")).unwrap();
        fs::write(dir.path().join("a/0.pgm"), b"P5\n4 4\n255\nxx").unwrap();
        assert!(matches!(import_dataset(dir.path(), None), Err(Error::MalformedImage { .. })));
    }

    #[test]
    fn non_square_input_is_resized() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("a")).unwrap();
        let src = InputImage::from_fn(150, 120, |x, y| ((x * 3 + y * 5) % 256) as f32 / 255.0).unwrap();
        write_pgm(&dir.path().join("a/0.pgm"), &src).unwrap();
        let ds = import_dataset(dir.path(), Some((64, 64))).unwrap();
        let got = &ds.images[0].image;
        assert_eq!((got.width(), got.height()), (64, 64));
        // Reference: bilinear sample at the mapped pixel center, computed directly.
        for &(x, y) in &[(0usize, 0usize), (10, 33), (63, 63), (31, 5)] {
            let fx = ((x as f64 + 0.5) * 150.0 / 64.0 - 0.5).clamp(0.0, 149.0);
            let fy = ((y as f64 + 0.5) * 120.0 / 64.0 - 0.5).clamp(0.0, 119.0);
            let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(149), (y0 + 1).min(119));
            let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
            let p = |x: usize, y: usize| src.get(x, y) as f64;
            let want = (1.0 - ay) * ((1.0 - ax) * p(x0, y0) + ax * p(x1, y0)) + ay * ((1.0 - ax) * p(x0, y1) + ax * p(x1, y1));
            assert!((got.get(x, y) as f64 - want).abs() < 1e-6);
        }
    }

    #[test]
    fn splits_are_disjoint() {
        let ds = toy(5, 4);
        let s = ds.split_by_samples(1);
        assert_eq!((s.train.len(), s.test.len()), (15, 5));
        assert!(s.test.images.iter().all(|i| i.sample == "03"));
        let s = ds.split_by_classes(2);
        assert_eq!((s.train.class_count(), s.test.class_count()), (3, 2));
        assert_eq!(s.test.class_names, vec!["003", "004"]);
        assert!(s.test.images.iter().all(|i| i.class < 2));
    }

    #[test]
    fn triplet_validation() {
        assert!(toy(2, 2).validate_for_triplets().is_ok());
        assert!(matches!(toy(1, 3).validate_for_triplets(), Err(Error::InsufficientClasses(1))));
        assert!(matches!(toy(3, 1).validate_for_triplets(), Err(Error::InsufficientSamples(_))));
    }
}
