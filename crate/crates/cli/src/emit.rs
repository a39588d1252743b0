//! Fixed-schema CSV output with atomic writes.
//!
//! Floats carry 12 significant digits in scientific notation, so a value
//! re-parses within one unit in the twelfth digit. Negative zero prints as
//! zero so that sign noise cannot break byte-identical reruns.

use std::io::Write;
use std::path::Path;

use tempfile::NamedTempFile;

pub const NYQUIST_HEADER: &[&str] = &["omega_rad_s", "re", "im"];
pub const ROOTLOCUS_HEADER: &[&str] = &["param_value", "pole_re", "pole_im", "is_dominant"];
pub const SPECTRUM_HEADER: &[&str] = &["freq_hz", "magnitude"];

pub fn fmt_float(v: f64) -> String {
    if v == 0.0 {
        return format!("{:.11e}", 0.0);
    }
    if v.is_nan() {
        return "NaN".into();
    }
    format!("{v:.11e}")
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) => fmt_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(b) => (if *b { "1" } else { "0" }).to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Renders a header and rows with LF line endings.
pub fn render_csv<R>(header: &[&str], rows: R) -> String
where
    R: IntoIterator<Item = Vec<Cell>>,
{
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(Cell::render).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    // Temporary files are created owner-only; outputs are ordinary files.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn emit_csv<R>(path: &Path, header: &[&str], rows: R) -> std::io::Result<()>
where
    R: IntoIterator<Item = Vec<Cell>>,
{
    write_atomic(path, &render_csv(header, rows))
}
