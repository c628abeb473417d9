//! Text checkpoint format.
//!
//! ```text
//! recfair-model v1
//! family: mf_sgd
//! seed: 42
//! param factors: 10
//! train: <sha256 of the training set>
//! ---
//! {"spec": ..., "params": ...}
//! ```
//!
//! The header is informational and checked against the JSON block on load.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::FittedModel;
use crate::error::{Error, Result};

const MAGIC: &str = "recfair-model v1";

pub fn model_to_string(model: &FittedModel) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "family: {}", model.spec.family);
    let _ = writeln!(out, "seed: {}", model.spec.seed);
    for (k, v) in &model.spec.params {
        let _ = writeln!(out, "param {k}: {v}");
    }
    let _ = writeln!(out, "train: {}", model.train_reference);
    out.push_str("---\n");
    let body = serde_json::to_string(model).map_err(|e| Error::invalid(format!("cannot serialize model: {e}")))?;
    out.push_str(&body);
    out.push('\n');
    Ok(out)
}

pub fn model_from_str(text: &str, origin: &Path) -> Result<FittedModel> {
    let malformed = |line: usize, message: &str| Error::MalformedRow {
        path: origin.to_path_buf(),
        line,
        message: message.to_string(),
    };
    let mut lines = text.lines().enumerate();
    if lines.next().map(|l| l.1) != Some(MAGIC) {
        return Err(malformed(1, "not a model checkpoint"));
    }
    let mut family = None;
    for (n, line) in lines.by_ref() {
        if line == "---" {
            break;
        }
        if let Some(f) = line.strip_prefix("family: ") {
            family = Some(f.to_string());
        } else if !line.contains(": ") {
            return Err(malformed(n + 1, "expected `key: value`"));
        }
    }
    let (n, body) = lines.next().ok_or_else(|| malformed(0, "missing parameter block"))?;
    let model: FittedModel = serde_json::from_str(body).map_err(|e| malformed(n + 1, &e.to_string()))?;
    if family.as_deref() != Some(model.spec.family.name()) {
        return Err(malformed(2, "header family does not match parameter block"));
    }
    Ok(model)
}

pub fn save_model(model: &FittedModel, path: &Path) -> Result<()> {
    fs::write(path, model_to_string(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<FittedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Interaction, InteractionSet, RatingScale};
    use crate::models::{fit, ModelFamily, ModelSpec};

    #[test]
    fn every_family_round_trips() {
        let rows = (0..30)
            .map(|k| Interaction::new(format!("u{}", k % 6), format!("i{}", (k * 7) % 11), 1.0 + (k % 5) as f64))
            .collect();
        let set = InteractionSet::new(rows, RatingScale::FIVE_STAR).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for family in ModelFamily::ALL {
            let model = fit(&ModelSpec::new(family).seeded(3), &set).unwrap();
            let path = dir.path().join(format!("{family}.model"));
            save_model(&model, &path).unwrap();
            assert_eq!(load_model(&path).unwrap(), model, "{family}");
        }
    }

    #[test]
    fn rejects_garbage() {
        let p = Path::new("x");
        assert!(model_from_str("hello\n", p).is_err());
        assert!(model_from_str(&format!("{MAGIC}\nfamily: als\n---\n{{}}\n"), p).is_err());
    }
}
