//! Demonstration dataset persistence: CSV rows under a `#` metadata
//! preamble. Floats are written with the shortest representation that
//! parses back to the same bits, so save → load is an exact round trip.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use arc_core::expert::{Dataset, DatasetMeta, DatasetRow};

pub const HEADER: &str = "v_norm,v_rel_norm,t_h_norm,action";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot access dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `# {key} = ...` preamble")]
    Preamble { path: PathBuf, line: usize, key: &'static str },
    #[error("{path}:{line}: expected header `{HEADER}`")]
    Header { path: PathBuf, line: usize },
    #[error("{path}:{line}: expected 4 comma-separated fields")]
    FieldCount { path: PathBuf, line: usize },
    #[error("{path}:{line}: cannot parse `{text}`")]
    Parse { path: PathBuf, line: usize, text: String },
    #[error("{path}:{line}: action {value} outside [-1, 1]")]
    ActionRange { path: PathBuf, line: usize, value: f64 },
    #[error("{path}: dataset has no rows")]
    Empty { path: PathBuf },
}

pub fn save(path: &Path, ds: &Dataset) -> Result<(), DatasetError> {
    let mut text = String::with_capacity(ds.rows.len() * 32 + 128);
    let _ = writeln!(text, "# seed = {}", ds.meta.seed);
    let _ = writeln!(text, "# episodes = {}", ds.meta.episodes);
    let _ = writeln!(text, "# config = {:016x}", ds.meta.config_hash);
    text.push_str(HEADER);
    text.push('\n');
    for row in &ds.rows {
        let _ = writeln!(
            text,
            "{},{},{},{}",
            row.obs[0], row.obs[1], row.obs[2], row.action
        );
    }
    std::fs::write(path, text)
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}

pub fn load(path: &Path) -> Result<Dataset, DatasetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    let at = |line: usize| (path.to_path_buf(), line);
    let mut lines = text.lines().enumerate();

    let mut preamble = |key: &'static str| -> Result<u64, DatasetError> {
        let (i, line) = lines.next().unwrap_or((0, ""));
        let (path, line_no) = at(i + 1);
        let value = line
            .strip_prefix("# ")
            .and_then(|l| l.strip_prefix(key))
            .and_then(|l| l.strip_prefix(" = "))
            .ok_or(DatasetError::Preamble { path: path.clone(), line: line_no, key })?;
        let parsed = if key == "config" {
            u64::from_str_radix(value, 16)
        } else {
            value.parse()
        };
        parsed.map_err(|_| DatasetError::Parse { path, line: line_no, text: value.into() })
    };
    let seed = preamble("seed")?;
    let episodes = preamble("episodes")? as u32;
    let config_hash = preamble("config")?;

    let (i, header) = lines.next().unwrap_or((3, ""));
    if header != HEADER {
        let (path, line) = at(i + 1);
        return Err(DatasetError::Header { path, line });
    }

    let mut rows = Vec::new();
    for (i, line) in lines {
        let (path, line_no) = at(i + 1);
        let mut fields = line.split(',');
        let mut field = || -> Result<f64, DatasetError> {
            let text = fields
                .next()
                .ok_or(DatasetError::FieldCount { path: path.clone(), line: line_no })?;
            text.parse().map_err(|_| DatasetError::Parse {
                path: path.clone(),
                line: line_no,
                text: text.into(),
            })
        };
        let row = DatasetRow {
            obs: [field()?, field()?, field()?],
            action: field()?,
        };
        if fields.next().is_some() {
            return Err(DatasetError::FieldCount { path, line: line_no });
        }
        if !(-1.0..=1.0).contains(&row.action) {
            return Err(DatasetError::ActionRange { path, line: line_no, value: row.action });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DatasetError::Empty { path: path.to_path_buf() });
    }
    Ok(Dataset { rows, meta: DatasetMeta { seed, episodes, config_hash } })
}

// ===== tests =============================================================
