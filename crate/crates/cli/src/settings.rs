//! Values from a `--config` file, consulted when a flag is absent.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use radfind::evalstat::manifest::parse_manifest;

use crate::{io_fail, usage, Res};

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: &Path) -> Res<Settings> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| io_fail(format!("{}: {e}", path.display())))?;
        let values =
            parse_manifest(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        Ok(Settings { values })
    }

    /// `flag` if set, else the config value.
    pub fn string(&self, key: &str, flag: Option<String>) -> Option<String> {
        flag.or_else(|| self.values.get(key).cloned())
    }

    pub fn get<T>(&self, key: &str, flag: Option<T>) -> Res<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| usage(format!("config `{key} = {v}`: {e}")))
            })
            .transpose()
    }
}
