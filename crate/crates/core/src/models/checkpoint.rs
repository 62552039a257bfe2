//! Model checkpoints: `<stem>.avsf` holds every parameter flattened into one
//! 1-D f32 tensor, `<stem>.json` maps parameter names to shapes, offsets and
//! frozen flags and records the model variant, configuration and seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::avsf;
use crate::error::{Error, Result};
use crate::models::{FusionModel, ModelConfig, ModelInput, ModelVariant, Modality, Summarizer, UnimodalModel};
use crate::nn::{ParamStore, Tape, Tensor, Var};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Start of this parameter in the flat blob, in elements.
    pub offset: usize,
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub variant: ModelVariant,
    pub config: ModelConfig,
    pub seed: u64,
    /// Fusion models only: unimodal weights were loaded from trained models.
    #[serde(default)]
    pub pretrained: bool,
    pub params: Vec<ParamEntry>,
}

pub fn checkpoint_paths(stem: &Path) -> (PathBuf, PathBuf) {
    let s = stem.as_os_str().to_string_lossy();
    (PathBuf::from(format!("{s}.avsf")), PathBuf::from(format!("{s}.json")))
}

/// True if both checkpoint files exist.
pub fn exists(stem: &Path) -> bool {
    let (a, b) = checkpoint_paths(stem);
    a.is_file() && b.is_file()
}

fn save_store<T: Scalar>(
    stem: &Path,
    variant: ModelVariant,
    config: &ModelConfig,
    seed: u64,
    pretrained: bool,
    store: &ParamStore<T>,
) -> Result<()> {
    let mut params = Vec::with_capacity(store.len());
    let mut blob = Vec::with_capacity(store.numel());
    for (_, p) in store.iter() {
        params.push(ParamEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            offset: blob.len(),
            frozen: p.frozen,
        });
        blob.extend(p.value.data().iter().map(|v| v.as_f64() as f32));
    }
    let meta = CheckpointMeta {
        variant,
        config: config.clone(),
        seed,
        pretrained,
        params,
    };
    let (blob_path, meta_path) = checkpoint_paths(stem);
    if let Some(dir) = blob_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let len = blob.len();
    avsf::write_features(&blob_path, &Tensor::new(vec![len], blob)?)?;
    let text = serde_json::to_string_pretty(&meta)?;
    fs::write(&meta_path, text + "\n").map_err(|e| Error::io(&meta_path, e))
}

pub fn read_meta(stem: &Path) -> Result<CheckpointMeta> {
    let (_, meta_path) = checkpoint_paths(stem);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads a checkpoint into a parameter store laid out like `reference`
/// (same names and shapes, any order).
fn load_store<T: Scalar>(stem: &Path, reference: &ParamStore<T>) -> Result<(CheckpointMeta, ParamStore<T>)> {
    let meta = read_meta(stem)?;
    let (blob_path, _) = checkpoint_paths(stem);
    let blob: Tensor<f32> = avsf::read_features(&blob_path)?;
    if blob.ndim() != 1 {
        return Err(Error::format("params", format!("parameter blob must be 1-D, got {:?}", blob.shape())));
    }
    let mut expected: Vec<(String, Vec<usize>)> =
        reference.iter().map(|(_, p)| (p.name.clone(), p.value.shape().to_vec())).collect();
    let mut found: Vec<(String, Vec<usize>)> = meta.params.iter().map(|p| (p.name.clone(), p.shape.clone())).collect();
    expected.sort();
    found.sort();
    if expected != found {
        return Err(Error::format(
            "params",
            format!("checkpoint parameters do not match a {} model with this configuration", meta.variant),
        ));
    }
    let mut store = ParamStore::new();
    for p in &meta.params {
        let len: usize = p.shape.iter().product();
        let end = p.offset.checked_add(len).filter(|&e| e <= blob.len()).ok_or_else(|| {
            Error::format("params", format!("{} extends past the end of the parameter blob", p.name))
        })?;
        let values: Vec<T> = blob.data()[p.offset..end].iter().map(|&v| T::lit(v as f64)).collect();
        let id = store.add(p.name.clone(), Tensor::new(p.shape.clone(), values)?)?;
        store.get_mut(id).frozen = p.frozen;
    }
    Ok((meta, store))
}

impl<T: Scalar> UnimodalModel<T> {
    pub fn save(&self, stem: &Path) -> Result<()> {
        save_store(stem, self.variant(), &self.config, self.seed, false, &self.store)
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let meta = read_meta(stem)?;
        let modality = match meta.variant {
            ModelVariant::Visual => Modality::Visual,
            ModelVariant::Audio => Modality::Audio,
            v => return Err(Error::format("variant", format!("expected a unimodal checkpoint, found {v}"))),
        };
        let reference = UnimodalModel::<T>::new(modality, meta.config.clone(), meta.seed)?;
        let (meta, store) = load_store(stem, &reference.store)?;
        UnimodalModel::from_store(modality, meta.config, meta.seed, store)
    }
}

impl<T: Scalar> FusionModel<T> {
    pub fn save(&self, stem: &Path) -> Result<()> {
        save_store(stem, self.variant, &self.config, self.seed, self.is_pretrained(), &self.store)
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let meta = read_meta(stem)?;
        if !meta.variant.is_fusion() {
            return Err(Error::format(
                "variant",
                format!("expected a fusion checkpoint, found {}", meta.variant),
            ));
        }
        let reference = FusionModel::<T>::new(meta.variant, meta.config.clone(), meta.seed)?;
        let (meta, store) = load_store(stem, &reference.store)?;
        FusionModel::from_store(meta.variant, meta.config, meta.seed, store, meta.pretrained)
    }
}

/// Either kind of model, as loaded from an arbitrary checkpoint.
#[derive(Debug, Clone)]
pub enum AnyModel<T> {
    Unimodal(UnimodalModel<T>),
    Fusion(FusionModel<T>),
}

impl<T: Scalar> AnyModel<T> {
    pub fn load(stem: &Path) -> Result<Self> {
        if read_meta(stem)?.variant.is_fusion() {
            Ok(AnyModel::Fusion(FusionModel::load(stem)?))
        } else {
            Ok(AnyModel::Unimodal(UnimodalModel::load(stem)?))
        }
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        match self {
            AnyModel::Unimodal(m) => m.save(stem),
            AnyModel::Fusion(m) => m.save(stem),
        }
    }

    fn inner(&self) -> &dyn Summarizer<T> {
        match self {
            AnyModel::Unimodal(m) => m,
            AnyModel::Fusion(m) => m,
        }
    }
}

impl<T: Scalar> Summarizer<T> for AnyModel<T> {
    fn variant(&self) -> ModelVariant {
        self.inner().variant()
    }

    fn config(&self) -> &ModelConfig {
        match self {
            AnyModel::Unimodal(m) => &m.config,
            AnyModel::Fusion(m) => &m.config,
        }
    }

    fn store(&self) -> &ParamStore<T> {
        match self {
            AnyModel::Unimodal(m) => &m.store,
            AnyModel::Fusion(m) => &m.store,
        }
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        match self {
            AnyModel::Unimodal(m) => &mut m.store,
            AnyModel::Fusion(m) => &mut m.store,
        }
    }

    fn scores(&self, tape: &mut Tape<T>, input: &ModelInput<T>) -> Result<Var> {
        self.inner().scores(tape, input)
    }
}
