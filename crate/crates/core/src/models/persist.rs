use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Hyperparams, Method, TrainedModel};
use crate::assembly::Planes;
use crate::data::Scaling;
use crate::error::{Error, Result};
use crate::kernel::Basis;

pub const MODEL_FORMAT: &str = "umtsvm-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    method: Method,
    hyperparams: Hyperparams,
    task_ids: Vec<u32>,
    feature_names: Vec<String>,
    u0: Vec<f64>,
    v0: Vec<f64>,
    u_t: Vec<Vec<f64>>,
    v_t: Vec<Vec<f64>>,
    /// Row-major basis rows.
    basis: Option<Vec<Vec<f64>>>,
    scaling: Option<Scaling>,
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        method: model.method,
        hyperparams: model.hyperparams.clone(),
        task_ids: model.task_ids.clone(),
        feature_names: model.feature_names.clone(),
        u0: vec_of(&model.u0),
        v0: vec_of(&model.v0),
        u_t: model.u_t.iter().map(vec_of).collect(),
        v_t: model.v_t.iter().map(vec_of).collect(),
        basis: model
            .basis
            .as_ref()
            .map(|b| b.rows.row_iter().map(|r| r.iter().copied().collect()).collect()),
        scaling: model.scaling.clone(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Format(format!("cannot encode model: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if file.format != MODEL_FORMAT {
        return Err(Error::Format(format!("{}: not a model file", path.display())));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "{}: model version {} is not supported (expected {MODEL_VERSION})",
            path.display(),
            file.version
        )));
    }
    let basis = match file.basis {
        Some(rows) => {
            let d = file.feature_names.len();
            if rows.iter().any(|r| r.len() != d) {
                return Err(Error::Format("basis rows do not match the feature count".into()));
            }
            Some(Basis {
                rows: DMatrix::from_row_iterator(rows.len(), d, rows.into_iter().flatten()),
            })
        }
        None => None,
    };
    if let Some(s) = &file.scaling {
        if s.min.len() != file.feature_names.len() || s.max.len() != s.min.len() {
            return Err(Error::Format("scaling record does not match the feature count".into()));
        }
    }
    let planes = |common: Vec<f64>, offsets: Vec<Vec<f64>>| Planes {
        common: DVector::from_vec(common),
        offsets: offsets.into_iter().map(DVector::from_vec).collect(),
    };
    let model = TrainedModel::from_planes(
        file.method,
        file.hyperparams,
        file.task_ids,
        file.feature_names,
        planes(file.u0, file.u_t),
        planes(file.v0, file.v_t),
        basis,
    )
    .map_err(|e| Error::Format(format!("inconsistent model file: {e}")))?;
    Ok(match file.scaling {
        Some(s) => model.with_scaling(s),
        None => model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_multitask, SynthConfig};
    use crate::kernel::KernelSpec;
    use crate::models::fit_normalized;
    use crate::universum::{generate_universum, UniversumConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kernel_model() -> TrainedModel {
        let ds = synth_multitask(&SynthConfig { tasks: 2, per_class: 10, ..Default::default() }).unwrap();
        let ds = generate_universum(&ds, &UniversumConfig::default()).unwrap();
        let hp = Hyperparams { kernel: KernelSpec::Gaussian { gamma: 0.8 }, ..Default::default() };
        fit_normalized(Method::LsUmtsvm, &ds, &hp).unwrap()
    }

    #[test]
    fn round_trip_preserves_everything_but_diagnostics() {
        let model = kernel_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, TrainedModel { solution: None, ..model.clone() });

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let t = rng.random_range(1..=2);
            assert_eq!(model.distances(&x, t).unwrap(), loaded.distances(&x, t).unwrap());
            assert_eq!(model.predict(&x, t).unwrap(), loaded.predict(&x, t).unwrap());
        }
    }

    #[test]
    fn corrupted_files_are_format_errors() {
        let model = kernel_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        save_model(&model, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();

        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));

        fs::write(&path, text.replace("\"version\": 1", "\"version\": 7")).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(m)) if m.contains("version")));

        fs::write(&path, text.replace(MODEL_FORMAT, "something-else")).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));

        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["u0"].as_array_mut().unwrap().pop();
        fs::write(&path, value.to_string()).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));
    }
}
