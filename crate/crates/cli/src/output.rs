//! Artifact files, written atomically and tracked for the manifest.

use std::path::{Path, PathBuf};

use sympidx::io::{atomic_write, write_csv};
use sympidx::Result;

pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Outputs { dir: dir.to_path_buf(), files: Vec::new() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Records a file written by other means.
    pub fn register(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    pub fn text(&mut self, name: &str, content: &str) -> Result<()> {
        atomic_write(&self.path(name), content.as_bytes())?;
        self.register(name);
        Ok(())
    }

    pub fn csv<H: AsRef<str>>(&mut self, name: &str, header: &[H], rows: &[Vec<String>]) -> Result<()> {
        let header: Vec<&str> = header.iter().map(|h| h.as_ref()).collect();
        write_csv(&self.path(name), &header, rows)?;
        self.register(name);
        Ok(())
    }

    pub fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.text(name, &text)
    }
}

/// Gnuplot script drawing columns of a CSV file with a header row.
pub fn gnuplot(csv: &str, title: &str, xlabel: &str, ylabel: &str, series: &[(usize, usize)], style: &str) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str(&format!("set title '{title}'\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\n"));
    let plots: Vec<String> = series.iter().map(|(x, y)| format!("'{csv}' using {x}:{y} with {style}")).collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s
}
