//! Dataset ingestion: Omniglot-layout directory indexing, image loading,
//! point clouds and rasterization.

mod cloud;
mod raster;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use self::cloud::{normalize_center, BoundingBox, Point, PointCloud, FRAME_FILL};
pub use self::raster::{load_image, rasterize, rasterize_soft, to_point_cloud, BinaryImage, Raster};
use crate::error::{Error, Result};

/// Canonical frame for classification (native Omniglot resolution).
pub const CLASSIFY_FRAME: usize = 105;
/// Canonical frame for the generative path.
pub const VAE_FRAME: usize = 28;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Index of a character class within a [`DatasetIndex`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassId(pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    pub alphabet: usize,
    pub instances: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alphabet {
    /// Relative path from the root, e.g. `images_background/Greek`.
    pub name: String,
    pub classes: Vec<ClassId>,
}

/// Immutable catalogue of `alphabet/character/instance.png` files.
///
/// Alphabets, classes and instances are sorted by name, so indexing the same
/// tree always yields the same [`ClassId`] assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetIndex {
    root: PathBuf,
    alphabets: Vec<Alphabet>,
    classes: Vec<ClassEntry>,
}

/// On-disk cache layout: alphabet -> class -> instance paths.
#[derive(Serialize, Deserialize)]
struct IndexFile {
    root: PathBuf,
    alphabets: BTreeMap<String, BTreeMap<String, Vec<PathBuf>>>,
}

fn is_png(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::Ingest {
            path: dir.to_path_buf(),
            reason: e.to_string(),
        })?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()).collect())
}

fn pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(sorted_entries(dir)?.into_iter().filter(|p| is_png(p)).collect())
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

impl DatasetIndex {
    /// Walks `root` in one pass.
    ///
    /// A directory whose subdirectories hold PNG files is an alphabet. A
    /// directory of alphabets (e.g. `images_background`) is descended into,
    /// and its name becomes a prefix of the alphabet names.
    pub fn build(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::Ingest {
                path: root.to_path_buf(),
                reason: "not a directory".into(),
            });
        }
        let mut tree = BTreeMap::new();
        Self::collect(root, String::new(), &mut tree, 0)?;
        Self::from_tree(root.to_path_buf(), tree)
    }

    fn collect(
        dir: &Path,
        prefix: String,
        tree: &mut BTreeMap<String, BTreeMap<String, Vec<PathBuf>>>,
        depth: usize,
    ) -> Result<()> {
        for sub in subdirs(dir)? {
            let name = if prefix.is_empty() {
                file_name(&sub)
            } else {
                format!("{prefix}/{}", file_name(&sub))
            };
            let mut classes = BTreeMap::new();
            let mut nested = false;
            for class_dir in subdirs(&sub)? {
                let files = pngs(&class_dir)?;
                if !files.is_empty() {
                    classes.insert(file_name(&class_dir), files);
                } else {
                    nested = true;
                }
            }
            if !classes.is_empty() {
                tree.insert(name, classes);
            } else if nested && depth < 2 {
                Self::collect(&sub, name, tree, depth + 1)?;
            }
        }
        Ok(())
    }

    fn from_tree(
        root: PathBuf,
        tree: BTreeMap<String, BTreeMap<String, Vec<PathBuf>>>,
    ) -> Result<Self> {
        let mut alphabets = Vec::new();
        let mut classes = Vec::new();
        for (alpha_name, chars) in tree {
            let alpha_idx = alphabets.len();
            let mut ids = Vec::new();
            for (class_name, instances) in chars {
                if instances.is_empty() {
                    continue;
                }
                ids.push(ClassId(classes.len()));
                classes.push(ClassEntry {
                    name: class_name,
                    alphabet: alpha_idx,
                    instances,
                });
            }
            if !ids.is_empty() {
                alphabets.push(Alphabet {
                    name: alpha_name,
                    classes: ids,
                });
            }
        }
        if classes.is_empty() {
            return Err(Error::Ingest {
                path: root,
                reason: "no alphabet/character/*.png files found".into(),
            });
        }
        Ok(Self {
            root,
            alphabets,
            classes,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn alphabets(&self) -> &[Alphabet] {
        &self.alphabets
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn class(&self, id: ClassId) -> &ClassEntry {
        &self.classes[id.0]
    }

    pub fn alphabet_of(&self, id: ClassId) -> &Alphabet {
        &self.alphabets[self.classes[id.0].alphabet]
    }

    pub fn instance_count(&self) -> usize {
        self.classes.iter().map(|c| c.instances.len()).sum()
    }

    /// Keeps only alphabets whose name starts with `prefix` (e.g. a split
    /// directory such as `images_evaluation`).
    pub fn restrict_to(&self, prefix: &str) -> Result<Self> {
        let tree = self
            .to_tree()
            .into_iter()
            .filter(|(name, _)| name.starts_with(prefix))
            .collect();
        Self::from_tree(self.root.clone(), tree)
    }

    fn to_tree(&self) -> BTreeMap<String, BTreeMap<String, Vec<PathBuf>>> {
        self.alphabets
            .iter()
            .map(|a| {
                let chars = a
                    .classes
                    .iter()
                    .map(|&id| {
                        let c = self.class(id);
                        (c.name.clone(), c.instances.clone())
                    })
                    .collect();
                (a.name.clone(), chars)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&IndexFile {
            root: self.root.clone(),
            alphabets: self.to_tree(),
        })?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: IndexFile = serde_json::from_str(json)?;
        Self::from_tree(file.root, file.alphabets)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch_png(path: &Path) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        let mut img = ::image::GrayImage::from_pixel(4, 4, ::image::Luma([255]));
        img.put_pixel(1, 1, ::image::Luma([0]));
        img.save(path).unwrap();
    }

    #[test]
    fn indexes_alphabet_tree() {
        let dir = tempfile::tempdir().unwrap();
        let r = dir.path();
        touch_png(&r.join("Greek/character02/b.png"));
        touch_png(&r.join("Greek/character01/a.png"));
        touch_png(&r.join("Greek/character01/c.png"));
        let idx = DatasetIndex::build(r).unwrap();
        assert_eq!(idx.alphabets().len(), 1);
        assert_eq!(idx.classes().len(), 2);
        assert_eq!(idx.classes()[0].name, "character01");
        assert_eq!(idx.classes()[0].instances.len(), 2);
        assert_eq!(idx.alphabet_of(ClassId(1)).name, "Greek");
    }

    #[test]
    fn descends_into_split_directories() {
        let dir = tempfile::tempdir().unwrap();
        let r = dir.path();
        touch_png(&r.join("images_background/Latin/c1/x.png"));
        touch_png(&r.join("images_evaluation/Kana/c1/x.png"));
        touch_png(&r.join("images_evaluation/Kana/c2/x.png"));
        let idx = DatasetIndex::build(r).unwrap();
        let names: Vec<_> = idx.alphabets().iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["images_background/Latin", "images_evaluation/Kana"]);
        let eval = idx.restrict_to("images_evaluation").unwrap();
        assert_eq!(eval.classes().len(), 2);
    }

    #[test]
    fn empty_tree_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(DatasetIndex::build(dir.path()).is_err());
        assert!(DatasetIndex::build(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn json_cache_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let r = dir.path();
        touch_png(&r.join("A/c1/1.png"));
        touch_png(&r.join("B/c1/1.png"));
        let idx = DatasetIndex::build(r).unwrap();
        let back = DatasetIndex::from_json(&idx.to_json().unwrap()).unwrap();
        assert_eq!(idx, back);
    }
}
