//! Flat `key = value` configuration text.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are dotted
//! namespaces (`agent.batch_size`, `planner.horizon`, ...). Every key must be
//! consumed by some section; leftovers are reported as unknown.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`, got {raw:?}", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Parse(format!("line {}: empty key", n + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key {k}", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Removes `key` and parses it into `target` when present.
    pub fn take<T>(&mut self, key: &str, target: &mut T) -> Result<()>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = self.entries.remove(key) {
            *target = v
                .parse()
                .map_err(|e| Error::Parse(format!("{key} = {v:?}: {e}")))?;
        }
        Ok(())
    }

    pub fn take_string(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            let keys: Vec<_> = self.entries.keys().cloned().collect();
            Err(Error::Config(format!("unknown configuration keys: {}", keys.join(", "))))
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_tracks_unknown_keys() {
        let mut kv = KvMap::parse("# comment\n a = 3 \n\nb.c=0.5\nextra = x").unwrap();
        let (mut a, mut c) = (0usize, 0.0f64);
        kv.take("a", &mut a).unwrap();
        kv.take("b.c", &mut c).unwrap();
        assert_eq!((a, c), (3, 0.5));
        assert!(matches!(kv.finish(), Err(Error::Config(m)) if m.contains("extra")));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KvMap::parse("no equals sign").is_err());
        assert!(KvMap::parse("a = 1\na = 2").is_err());
        let mut kv = KvMap::parse("n = abc").unwrap();
        let mut n = 0u32;
        assert!(kv.take("n", &mut n).is_err());
    }
}
