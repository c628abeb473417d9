use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column layout of a user attribute file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeFormat {
    pub delimiter: String,
    pub user_col: usize,
    /// `(attribute name, column)` pairs; the names form the table schema.
    pub columns: Vec<(String, usize)>,
    pub header: bool,
    pub comment: Option<String>,
}

impl AttributeFormat {
    /// MovieLens 1M `users.dat`: `UserID::Gender::Age::Occupation::Zip-code`.
    pub fn ml1m() -> Self {
        Self {
            delimiter: "::".into(),
            user_col: 0,
            columns: vec![
                ("gender".into(), 1),
                ("age".into(), 2),
                ("occupation".into(), 3),
                ("zip".into(), 4),
            ],
            header: false,
            comment: None,
        }
    }

    /// Last.fm 1K `userid-profile.tsv`: `#id gender age country registered`.
    pub fn lfm1k() -> Self {
        Self {
            delimiter: "\t".into(),
            user_col: 0,
            columns: vec![
                ("gender".into(), 1),
                ("age".into(), 2),
                ("country".into(), 3),
                ("registered".into(), 4),
            ],
            header: false,
            comment: Some("#".into()),
        }
    }

    /// Tab-separated `user, attr...` with a header row naming the attributes.
    pub fn canonical(names: &[&str]) -> Self {
        Self {
            delimiter: "\t".into(),
            user_col: 0,
            columns: names
                .iter()
                .enumerate()
                .map(|(k, n)| (n.to_string(), k + 1))
                .collect(),
            header: true,
            comment: None,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "ml1m" | "ml-1m" => Some(Self::ml1m()),
            "lfm1k" | "lfm" => Some(Self::lfm1k()),
            _ => None,
        }
    }
}

/// Categorical attributes per user. Empty fields are stored as absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeTable {
    schema: Vec<String>,
    rows: BTreeMap<String, BTreeMap<String, String>>,
}

impl AttributeTable {
    pub fn new(schema: Vec<String>) -> Self {
        Self {
            schema,
            rows: BTreeMap::new(),
        }
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn rows(&self) -> &BTreeMap<String, BTreeMap<String, String>> {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Adds or replaces a user's row. Attributes outside the schema are an error.
    pub fn insert<K, V>(&mut self, user: &str, values: impl IntoIterator<Item = (K, V)>) -> Result<()>
    where
        K: Into<String>,
        V: Into<String>,
    {
        let mut row = BTreeMap::new();
        for (k, v) in values {
            let (k, v) = (k.into(), v.into());
            if !self.schema.contains(&k) {
                return Err(Error::invalid(format!("attribute {k} not in schema {:?}", self.schema)));
            }
            if !v.is_empty() {
                row.insert(k, v);
            }
        }
        self.rows.insert(user.to_string(), row);
        Ok(())
    }

    pub fn get(&self, user: &str, attribute: &str) -> Option<&str> {
        self.rows.get(user)?.get(attribute).map(String::as_str)
    }

    pub fn contains_user(&self, user: &str) -> bool {
        self.rows.contains_key(user)
    }

    pub fn retain_users(&mut self, keep: impl Fn(&str) -> bool) {
        self.rows.retain(|u, _| keep(u));
    }

    pub fn load(path: &Path, format: &AttributeFormat) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table = Self::new(format.columns.iter().map(|(n, _)| n.clone()).collect());
        for (n, raw) in text.lines().enumerate() {
            if (format.header && n == 0) || raw.trim().is_empty() {
                continue;
            }
            if let Some(c) = &format.comment {
                if raw.starts_with(c.as_str()) {
                    continue;
                }
            }
            let fields: Vec<&str> = raw.split(format.delimiter.as_str()).collect();
            let user = fields
                .get(format.user_col)
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: "missing user column".into(),
                })?;
            if table.contains_user(user) {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: format!("second row for user {user}"),
                });
            }
            let values = format
                .columns
                .iter()
                .map(|(name, col)| (name.clone(), fields.get(*col).map_or("", |s| s.trim()).to_string()));
            table.insert(user, values)?;
        }
        Ok(table)
    }

    /// Reads the canonical layout, taking attribute names from the header.
    pub fn read_canonical(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let header = text.lines().next().ok_or_else(|| Error::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            message: "missing header row".into(),
        })?;
        let names: Vec<&str> = header.split('\t').skip(1).collect();
        Self::load(path, &AttributeFormat::canonical(&names))
    }

    /// Writes the canonical layout (header row, then one row per user).
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::from("user");
        for name in &self.schema {
            out.push('\t');
            out.push_str(name);
        }
        out.push('\n');
        for (user, row) in &self.rows {
            out.push_str(user);
            for name in &self.schema {
                out.push('\t');
                out.push_str(row.get(name).map_or("", String::as_str));
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn ml1m_users_and_missing_fields() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"1::F::1::10::48067\n2::M::56::16::70072\n").unwrap();
        let t = AttributeTable::load(f.path(), &AttributeFormat::ml1m()).unwrap();
        assert_eq!(t.get("1", "gender"), Some("F"));
        assert_eq!(t.get("2", "age"), Some("56"));

        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"#id\tgender\tage\tcountry\tregistered\nuser_000001\tm\t\tJapan\tAug 13, 2006\n")
            .unwrap();
        let t = AttributeTable::load(f.path(), &AttributeFormat::lfm1k()).unwrap();
        assert_eq!(t.get("user_000001", "gender"), Some("m"));
        assert_eq!(t.get("user_000001", "age"), None);
    }

    #[test]
    fn canonical_round_trip() {
        let mut t = AttributeTable::new(vec!["gender".into(), "age".into()]);
        t.insert("u1", [("gender", "M"), ("age", "25")]).unwrap();
        t.insert("u2", [("gender", "F")]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        t.write(f.path()).unwrap();
        let back = AttributeTable::load(f.path(), &AttributeFormat::canonical(&["gender", "age"])).unwrap();
        assert_eq!(back, t);
        assert_eq!(AttributeTable::read_canonical(f.path()).unwrap(), t);
        assert!(t.insert("u3", [("height", "1")]).is_err());
    }
}
