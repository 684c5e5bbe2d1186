//! Line-oriented `key = value` documents with `[section]` headers.
//!
//! Sections may repeat (profiles list one `[kernel]` section per kernel).
//! Keys before the first header belong to an unnamed root section. `#`
//! starts a comment anywhere on a line.

use std::str::FromStr;

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.get(key).map(|e| e.value.as_str())
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|_| ConfigError::parse(e.line, format!("cannot parse `{}` for `{}`", e.value, key))),
        }
    }

    pub fn parse_req<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.parse_opt(key)?
            .ok_or_else(|| ConfigError::parse(self.line, format!("section [{}] is missing `{}`", self.name, key)))
    }

    /// Comma-separated list value.
    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.value(key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        })
    }

    /// Rejects keys outside `known`.
    pub fn expect_keys(&self, known: &[&str]) -> Result<(), ConfigError> {
        for e in &self.entries {
            if !known.contains(&e.key.as_str()) {
                let scope = if self.name.is_empty() {
                    String::new()
                } else {
                    format!(" in [{}]", self.name)
                };
                return Err(ConfigError::parse(e.line, format!("unknown key `{}`{}", e.key, scope)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub sections: Vec<Section>,
}

impl Document {
    pub fn root(&self) -> &Section {
        &self.sections[0]
    }

    pub fn sections_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.name == name)
    }

    pub fn section<'a>(&'a self, name: &'a str) -> Option<&'a Section> {
        self.sections_named(name).next()
    }
}

pub fn parse(text: &str) -> Result<Document, ConfigError> {
    let mut sections = vec![Section {
        name: String::new(),
        line: 0,
        entries: Vec::new(),
    }];
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::parse(line_no, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(ConfigError::parse(line_no, "empty section name"));
            }
            sections.push(Section {
                name: name.to_string(),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::parse(line_no, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::parse(line_no, "empty key"));
        }
        sections.last_mut().unwrap().entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line: line_no,
        });
    }
    Ok(Document { sections })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_root_and_repeated_sections() {
        let doc = parse("name = demo # trailing\n\n[kernel]\ngrid = 4\n[kernel]\ngrid=8\nblock = 32\n").unwrap();
        assert_eq!(doc.root().value("name"), Some("demo"));
        let grids: Vec<u32> = doc
            .sections_named("kernel")
            .map(|s| s.parse_req("grid").unwrap())
            .collect();
        assert_eq!(grids, vec![4, 8]);
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse("a = 1\nnonsense\n").unwrap_err();
        assert_eq!(err, ConfigError::parse(2, "expected `key = value`, got `nonsense`"));
        let err = parse("[x]\nn = abc\n")
            .unwrap()
            .section("x")
            .unwrap()
            .parse_req::<u32>("n");
        assert!(matches!(err, Err(ConfigError::Parse { line: 2, .. })));
    }

    #[test]
    fn lists_split_on_commas() {
        let doc = parse("p = a, b ,c,\n").unwrap();
        assert_eq!(doc.root().list("p").unwrap(), vec!["a", "b", "c"]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let doc = parse("[gpu]\nn_sm = 3\nbogus = 1\n").unwrap();
        let err = doc.section("gpu").unwrap().expect_keys(&["n_sm"]).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }
}
