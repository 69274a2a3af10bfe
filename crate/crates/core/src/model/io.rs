//! Model directory: `manifest.json` plus one CFT1 tensor per kernel group.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::masks::ShapeKind;
use crate::model::params::{Composition, ExplainModel, Kernel, KernelSet, ScaleKernels};
use crate::tensor::{Geometry, Tensor};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub classes: Vec<String>,
    pub attributes: Vec<String>,
    pub scales: usize,
    pub channels: Vec<usize>,
    pub geometry: Geometry,
    pub shapes: Vec<ShapeKind>,
    pub decomposition: bool,
    pub class_kernels: Vec<String>,
    pub attribute_kernels: Vec<String>,
}

fn group_tensor(kernels: &[Kernel]) -> Tensor {
    let d = kernels[0].d;
    let data = kernels.iter().flat_map(|k| k.w.iter().copied()).collect();
    Tensor::from_f64(vec![kernels.len(), 3, 3, d], data).expect("kernel group is rectangular")
}

fn group_from_tensor(t: &Tensor, count: usize, d: usize) -> Result<Vec<Kernel>> {
    if t.dims() != [count, 3, 3, d] {
        return Err(Error::ShapeMismatch(format!(
            "kernel group {:?}, expected {:?}",
            t.dims(),
            [count, 3, 3, d]
        )));
    }
    t.to_f64_vec().chunks_exact(9 * d).map(|c| Kernel::from_vec(d, c.to_vec())).collect()
}

impl ExplainModel {
    pub fn manifest(&self) -> ModelManifest {
        let n = self.geometry.n_scales();
        ModelManifest {
            classes: self.classes.clone(),
            attributes: self.attributes.clone(),
            scales: n,
            channels: self.channels(),
            geometry: self.geometry.clone(),
            shapes: self.shapes.clone(),
            decomposition: self.composition == Composition::Decomposed,
            class_kernels: (0..n).map(|s| format!("class_kernels_s{s}.cft")).collect(),
            attribute_kernels: (0..n).map(|s| format!("attribute_kernels_s{s}.cft")).collect(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let manifest = self.manifest();
        for (s, sk) in self.kernels.scales.iter().enumerate() {
            group_tensor(&sk.classes).write_file(dir.join(&manifest.class_kernels[s]))?;
            group_tensor(&sk.attributes).write_file(dir.join(&manifest.attribute_kernels[s]))?;
        }
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: ModelManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
        if manifest.channels.len() != manifest.scales
            || manifest.class_kernels.len() != manifest.scales
            || manifest.attribute_kernels.len() != manifest.scales
        {
            return Err(Error::Config("model manifest scale counts disagree".into()));
        }
        let mut scales = Vec::with_capacity(manifest.scales);
        for s in 0..manifest.scales {
            let d = manifest.channels[s];
            let ct = Tensor::read_file(dir.join(&manifest.class_kernels[s]))?;
            let at = Tensor::read_file(dir.join(&manifest.attribute_kernels[s]))?;
            scales.push(ScaleKernels {
                classes: group_from_tensor(&ct, manifest.classes.len(), d)?,
                attributes: group_from_tensor(&at, manifest.attributes.len(), d)?,
            });
        }
        let model = ExplainModel {
            classes: manifest.classes,
            attributes: manifest.attributes,
            geometry: manifest.geometry,
            shapes: manifest.shapes,
            composition: if manifest.decomposition { Composition::Decomposed } else { Composition::Raw },
            kernels: KernelSet { scales },
        };
        model.validate()?;
        Ok(model)
    }
}
