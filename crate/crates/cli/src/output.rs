//! File emission. Every file starts with an optional timestamp comment line
//! (suppressed by --no-timestamp); everything after it is a pure function of
//! the config, so reruns are byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::CliError;

pub struct Emitter {
    dir: PathBuf,
    timestamp: bool,
    delimiter: char,
}

/// 15 significant digits; the emission contract asks for at least 12.
pub fn num(x: f64) -> String {
    format!("{x:.14e}")
}

impl Emitter {
    pub fn new(dir: &Path, timestamp: bool, delimiter: char) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(CliError::Io)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            timestamp,
            delimiter,
        })
    }

    fn open(&self, name: &str) -> Result<fs::File, CliError> {
        let mut f = fs::File::create(self.dir.join(name)).map_err(CliError::Io)?;
        if self.timestamp {
            let now = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            writeln!(f, "# generated at unix time {now}").map_err(CliError::Io)?;
        }
        Ok(f)
    }

    /// Delimited table with a header row.
    pub fn table(
        &self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        let mut f = self.open(name)?;
        let sep = self.delimiter.to_string();
        writeln!(f, "{}", header.join(&sep)).map_err(CliError::Io)?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            writeln!(f, "{}", row.join(&sep)).map_err(CliError::Io)?;
        }
        Ok(())
    }

    /// key = value lines for scalar results.
    pub fn scalars(&self, name: &str, pairs: &[(String, String)]) -> Result<(), CliError> {
        let mut f = self.open(name)?;
        for (k, v) in pairs {
            writeln!(f, "{k} = {v}").map_err(CliError::Io)?;
        }
        Ok(())
    }
}
