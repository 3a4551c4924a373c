use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::data::image::{load_rgb, ImageTensor};
use crate::error::{Error, Result};

/// One labelled design: its identity, class and raw pixels at working size.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Stable identity used for leakage audits (source path or generator key).
    pub id: String,
    pub class: String,
    pub raw: RgbImage,
}

impl Sample {
    pub fn tensor(&self) -> ImageTensor {
        ImageTensor::from_rgb(&self.raw)
    }
}

/// The client's examples: liked (`positives`) and disliked (`negatives`).
#[derive(Clone, Debug, Default)]
pub struct SupportSet {
    pub positives: Vec<Sample>,
    pub negatives: Vec<Sample>,
}

impl SupportSet {
    pub fn new(positives: Vec<Sample>, negatives: Vec<Sample>) -> Result<Self> {
        let pos: BTreeSet<&str> = positives.iter().map(|s| s.id.as_str()).collect();
        if let Some(shared) = negatives.iter().find(|s| pos.contains(s.id.as_str())) {
            return Err(Error::contract(format!(
                "{} is both a liked and a disliked example",
                shared.id
            )));
        }
        Ok(SupportSet { positives, negatives })
    }

    pub fn ids(&self) -> BTreeSet<String> {
        self.positives.iter().chain(&self.negatives).map(|s| s.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads `<root>/<class>/*.png`, classes and files in lexical order.
pub fn load_dataset(root: &Path, size: u32) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for class_dir in sorted_entries(root)? {
        if !class_dir.is_dir() {
            continue;
        }
        let class = file_name(&class_dir);
        for file in sorted_entries(&class_dir)? {
            let is_png = file
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("png"));
            if !is_png {
                continue;
            }
            let raw = load_rgb(&file, size, size)?;
            out.push(Sample { id: file.display().to_string(), class: class.clone(), raw });
        }
    }
    if out.is_empty() {
        return Err(Error::Input {
            path: root.to_path_buf(),
            message: "no <class>/*.png images found".into(),
        });
    }
    Ok(out)
}

/// Loads the PNGs of one directory as a single class.
pub fn load_class_dir(dir: &Path, class: &str, size: u32) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for file in sorted_entries(dir)? {
        if file.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            let raw = load_rgb(&file, size, size)?;
            out.push(Sample { id: file.display().to_string(), class: class.to_string(), raw });
        }
    }
    Ok(out)
}

/// Writes samples as `<root>/<class>/<name>.png`, returning the written paths.
pub fn write_dataset(root: &Path, samples: &[Sample]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::with_capacity(samples.len());
    for s in samples {
        let dir = root.join(&s.class);
        fs::create_dir_all(&dir)?;
        let stem = s.id.rsplit('/').next().unwrap_or(&s.id);
        let path = dir.join(format!("{stem}.png"));
        s.raw.save(&path)?;
        paths.push(path);
    }
    Ok(paths)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::Input {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut entries = rd.map(|e| e.map(|e| e.path())).collect::<std::io::Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}
