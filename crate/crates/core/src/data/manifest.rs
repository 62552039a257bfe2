//! Dataset manifest (JSON) and loading of the files it references.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::avsf;
use crate::data::labels;
use crate::data::record::VideoRecord;
use crate::error::{Error, Result};
use crate::training::folds::FoldScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub visual_path: String,
    pub audio_path: String,
    pub labels_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset: String,
    pub feature_dim: usize,
    pub audio_window: usize,
    pub fold_scheme: FoldScheme,
    pub videos: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.videos.is_empty() {
            return Err(Error::format("videos", "manifest lists no videos"));
        }
        let mut ids: Vec<&str> = m.videos.iter().map(|v| v.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::format("videos", "duplicate video id"));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn ids(&self) -> Vec<String> {
        self.videos.iter().map(|v| v.id.clone()).collect()
    }

    fn resolve(base: &Path, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// Checks that every referenced file exists and that its declared
    /// dimensions agree with `feature_dim` / `audio_window`.
    pub fn validate_files(&self, base: &Path) -> Result<()> {
        for e in &self.videos {
            let vshape = avsf::read_shape(&Self::resolve(base, &e.visual_path))?;
            if vshape.len() != 2 || vshape[1] != self.feature_dim {
                return Err(Error::format(
                    "feature_dim",
                    format!("video {}: visual file declares {vshape:?}, manifest D = {}", e.id, self.feature_dim),
                ));
            }
            let ashape = avsf::read_shape(&Self::resolve(base, &e.audio_path))?;
            if ashape.len() != 3 || ashape[1] != self.audio_window || ashape[2] != self.feature_dim {
                return Err(Error::format(
                    "audio_window",
                    format!(
                        "video {}: audio file declares {ashape:?}, manifest M = {}, D = {}",
                        e.id, self.audio_window, self.feature_dim
                    ),
                ));
            }
            let lp = Self::resolve(base, &e.labels_path);
            if !lp.exists() {
                return Err(Error::io(lp, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
        Ok(())
    }

    /// Loads every video; relative paths are resolved against `base`.
    pub fn load_videos(&self, base: &Path) -> Result<Vec<VideoRecord>> {
        self.validate_files(base)?;
        self.videos
            .iter()
            .map(|e| {
                let (labels, importance) = labels::read_labels(&Self::resolve(base, &e.labels_path))?;
                let rec = VideoRecord {
                    id: e.id.clone(),
                    visual: avsf::read_features(&Self::resolve(base, &e.visual_path))?,
                    audio: avsf::read_features(&Self::resolve(base, &e.audio_path))?,
                    labels,
                    importance,
                    planted_rho: None,
                };
                rec.validate().map_err(|err| Error::format("video", err.to_string()))?;
                Ok(rec)
            })
            .collect()
    }
}

/// Loads a manifest file and all its videos.
pub fn load_dataset(manifest_path: &Path) -> Result<(DatasetManifest, Vec<VideoRecord>)> {
    let m = DatasetManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let videos = m.load_videos(base)?;
    Ok((m, videos))
}

/// Writes feature files, label CSVs and a manifest for `videos` under `dir`.
pub fn write_dataset(
    dir: &Path,
    name: &str,
    fold_scheme: FoldScheme,
    videos: &[VideoRecord],
    seed: Option<u64>,
) -> Result<DatasetManifest> {
    let first = videos.first().ok_or_else(|| Error::invalid("no videos to write"))?;
    let (d, m) = (first.feature_dim(), first.audio_window());
    fs::create_dir_all(dir.join("features")).map_err(|e| Error::io(dir, e))?;
    fs::create_dir_all(dir.join("labels")).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(videos.len());
    for v in videos {
        v.validate()?;
        let entry = ManifestEntry {
            id: v.id.clone(),
            visual_path: format!("features/{}_visual.avsf", v.id),
            audio_path: format!("features/{}_audio.avsf", v.id),
            labels_path: format!("labels/{}.csv", v.id),
        };
        avsf::write_features(&dir.join(&entry.visual_path), &v.visual)?;
        avsf::write_features(&dir.join(&entry.audio_path), &v.audio)?;
        labels::write_labels(&dir.join(&entry.labels_path), &v.labels, &v.importance)?;
        entries.push(entry);
    }
    let manifest = DatasetManifest {
        dataset: name.to_string(),
        feature_dim: d,
        audio_window: m,
        fold_scheme,
        videos: entries,
        seed,
    };
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::tests::toy_record;

    #[test]
    fn json_field_names_are_fixed() {
        let m = DatasetManifest {
            dataset: "x".into(),
            feature_dim: 3,
            audio_window: 2,
            fold_scheme: FoldScheme::LeaveOneOut,
            videos: vec![ManifestEntry {
                id: "a".into(),
                visual_path: "v".into(),
                audio_path: "w".into(),
                labels_path: "l".into(),
            }],
            seed: None,
        };
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["audio_window", "dataset", "feature_dim", "fold_scheme", "videos"]);
        assert_eq!(v["fold_scheme"], "leave_one_out");
        let e = v["videos"][0].as_object().unwrap();
        assert!(e.contains_key("visual_path") && e.contains_key("audio_path") && e.contains_key("labels_path"));
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let vids = vec![toy_record(8, 3, 2), toy_record(12, 3, 2)];
        write_dataset(dir.path(), "toy", FoldScheme::KFold5, &vids, Some(3)).unwrap();
        let (m, back) = load_dataset(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(m.seed, Some(3));
        assert_eq!(back, vids);
    }

    #[test]
    fn rejects_mismatched_feature_dim() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "toy", FoldScheme::KFold5, &[toy_record(8, 3, 2)], None).unwrap();
        let path = dir.path().join("manifest.json");
        let mut m = DatasetManifest::load(&path).unwrap();
        m.feature_dim = 4;
        m.save(&path).unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(matches!(err, Error::Format { ref field, .. } if field == "feature_dim"), "{err}");
    }
}
