//! Plain-text run manifest written next to every output.

use std::path::Path;
use std::time::Duration;

use htpca_core::Result;

use crate::io::write_text;

pub const MANIFEST_FILE: &str = "manifest.txt";

/// `key = value` lines with the configuration, the library version and
/// the wall-clock time of the run.
#[derive(Clone, Debug, Default)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            entries: vec![
                ("command".into(), command.into()),
                ("version".into(), env!("CARGO_PKG_VERSION").into()),
            ],
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn extend(mut self, entries: impl IntoIterator<Item = (String, String)>) -> Self {
        self.entries.extend(entries);
        self
    }

    pub fn render(&self, wall: Duration) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s.push_str(&format!("wall_time_s = {:.3}\n", wall.as_secs_f64()));
        s
    }

    pub fn write(&self, dir: &Path, wall: Duration) -> Result<()> {
        write_text(&dir.join(MANIFEST_FILE), &self.render(wall))
    }
}
