//! Network checkpoints: magic `ARC1`, a text header describing the
//! architecture (kind, layer shapes, activation tags, terminated by a
//! blank line), then every parameter as a little-endian f64 in flatten
//! order. The header is authoritative: loading reconstructs the network
//! from it and refuses kind or size mismatches with a diagnostic.

use std::path::{Path, PathBuf};

use arc_core::nn::{
    Activation, ActorParams, CriticParams, Dense, LstmParams, MlpParams, ParamSet,
};
use arc_core::tensor::Tensor;

pub const MAGIC: &str = "ARC1";

#[derive(Debug, thiserror::Error)]
pub enum CkptError {
    #[error("cannot access checkpoint {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a checkpoint (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: malformed header line `{line}`")]
    BadHeader { path: PathBuf, line: String },
    #[error("{path}: holds a `{got}` network, expected `{expected}`")]
    KindMismatch { path: PathBuf, expected: &'static str, got: String },
    #[error("{path}: parameter block holds {got} values, header describes {expected}")]
    LengthMismatch { path: PathBuf, expected: usize, got: usize },
    #[error("{path}: parameter block contains non-finite values")]
    NonFinite { path: PathBuf },
}

// ===== activation tags ===================================================

fn act_tag(act: Activation) -> &'static str {
    match act {
        Activation::Linear => "linear",
        Activation::Relu6 => "relu6",
        Activation::Tanh => "tanh",
        Activation::Sigmoid => "sigmoid",
        Activation::Softplus => "softplus",
    }
}

fn parse_act(tag: &str) -> Option<Activation> {
    Some(match tag {
        "linear" => Activation::Linear,
        "relu6" => Activation::Relu6,
        "tanh" => Activation::Tanh,
        "sigmoid" => Activation::Sigmoid,
        "softplus" => Activation::Softplus,
        _ => return None,
    })
}

// ===== saving ============================================================

fn dense_line(name: &str, d: &Dense) -> String {
    format!("{name} {}x{} {}\n", d.w.rows(), d.w.cols(), act_tag(d.act))
}

fn header_mlp(kind: &str, p: &MlpParams) -> String {
    let mut h = format!("{MAGIC}\nkind {kind}\n");
    for layer in &p.layers {
        h.push_str(&dense_line("layer", layer));
    }
    h.push('\n');
    h
}

fn header_actor(p: &ActorParams) -> String {
    let mut h = format!("{MAGIC}\nkind actor\n");
    for layer in &p.trunk.layers {
        h.push_str(&dense_line("trunk", layer));
    }
    h.push_str(&format!("lstm {}x{}\n", p.lstm.units(), p.lstm.w_x[0].cols()));
    h.push_str(&dense_line("head_mu", &p.head_mu));
    h.push_str(&dense_line("head_var", &p.head_var));
    h.push('\n');
    h
}

fn write_file(path: &Path, header: String, flat: &[f64]) -> Result<(), CkptError> {
    let mut bytes = header.into_bytes();
    bytes.reserve(flat.len() * 8);
    for v in flat {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)
        .map_err(|source| CkptError::Io { path: path.to_path_buf(), source })
}

pub fn save_mlp(path: &Path, p: &MlpParams) -> Result<(), CkptError> {
    write_file(path, header_mlp("mlp", p), &p.flatten())
}

pub fn save_actor(path: &Path, p: &ActorParams) -> Result<(), CkptError> {
    write_file(path, header_actor(p), &p.flatten())
}

pub fn save_critic(path: &Path, p: &CriticParams) -> Result<(), CkptError> {
    write_file(path, header_mlp("critic", &p.mlp), &p.mlp.flatten())
}

// ===== loading ===========================================================

struct RawCkpt {
    kind: String,
    lines: Vec<String>,
    values: Vec<f64>,
}

fn read_raw(path: &Path) -> Result<RawCkpt, CkptError> {
    let bytes = std::fs::read(path)
        .map_err(|source| CkptError::Io { path: path.to_path_buf(), source })?;
    let magic_line = format!("{MAGIC}\n");
    if !bytes.starts_with(magic_line.as_bytes()) {
        return Err(CkptError::BadMagic { path: path.to_path_buf() });
    }
    // The header ends at the first blank line.
    let end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| CkptError::BadMagic { path: path.to_path_buf() })?;
    let header = std::str::from_utf8(&bytes[..end])
        .map_err(|_| CkptError::BadMagic { path: path.to_path_buf() })?;
    let body = &bytes[end + 2..];

    let mut lines = header.lines().skip(1);
    let kind = match lines.next().and_then(|l| l.strip_prefix("kind ")) {
        Some(k) => k.to_string(),
        None => {
            return Err(CkptError::BadHeader {
                path: path.to_path_buf(),
                line: header.lines().nth(1).unwrap_or("").to_string(),
            })
        }
    };
    let lines: Vec<String> = lines.map(str::to_string).collect();

    if body.len() % 8 != 0 {
        return Err(CkptError::LengthMismatch {
            path: path.to_path_buf(),
            expected: body.len() / 8 + 1,
            got: body.len() / 8,
        });
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RawCkpt { kind, lines, values })
}

/// Parse `name RxC act` into a zeroed dense layer.
fn parse_dense(path: &Path, line: &str, name: &str) -> Result<Dense, CkptError> {
    let err = || CkptError::BadHeader { path: path.to_path_buf(), line: line.to_string() };
    let rest = line.strip_prefix(name).and_then(|r| r.strip_prefix(' ')).ok_or_else(err)?;
    let (shape, act) = rest.split_once(' ').ok_or_else(err)?;
    let (rows, cols) = shape.split_once('x').ok_or_else(err)?;
    let rows: usize = rows.parse().map_err(|_| err())?;
    let cols: usize = cols.parse().map_err(|_| err())?;
    let act = parse_act(act).ok_or_else(err)?;
    Ok(Dense { w: Tensor::zeros(rows, cols), b: Tensor::zeros(rows, 1), act })
}

fn finish<P: ParamSet>(path: &Path, mut p: P, values: &[f64]) -> Result<P, CkptError> {
    if values.len() != p.param_count() {
        return Err(CkptError::LengthMismatch {
            path: path.to_path_buf(),
            expected: p.param_count(),
            got: values.len(),
        });
    }
    p.load_flat(values);
    if !p.all_finite() {
        return Err(CkptError::NonFinite { path: path.to_path_buf() });
    }
    Ok(p)
}

fn expect_kind(path: &Path, raw: &RawCkpt, expected: &'static str) -> Result<(), CkptError> {
    if raw.kind != expected {
        return Err(CkptError::KindMismatch {
            path: path.to_path_buf(),
            expected,
            got: raw.kind.clone(),
        });
    }
    Ok(())
}

fn mlp_from_lines(path: &Path, lines: &[String]) -> Result<MlpParams, CkptError> {
    let layers = lines
        .iter()
        .map(|l| parse_dense(path, l, "layer"))
        .collect::<Result<Vec<_>, _>>()?;
    if layers.is_empty() {
        return Err(CkptError::BadHeader { path: path.to_path_buf(), line: String::new() });
    }
    Ok(MlpParams { layers })
}

pub fn load_mlp(path: &Path) -> Result<MlpParams, CkptError> {
    let raw = read_raw(path)?;
    expect_kind(path, &raw, "mlp")?;
    finish(path, mlp_from_lines(path, &raw.lines)?, &raw.values)
}

pub fn load_critic(path: &Path) -> Result<CriticParams, CkptError> {
    let raw = read_raw(path)?;
    expect_kind(path, &raw, "critic")?;
    let mlp = mlp_from_lines(path, &raw.lines)?;
    finish(path, CriticParams { mlp }, &raw.values)
}

pub fn load_actor(path: &Path) -> Result<ActorParams, CkptError> {
    let raw = read_raw(path)?;
    expect_kind(path, &raw, "actor")?;
    let mut trunk = Vec::new();
    let mut rest = raw.lines.iter();
    let mut lstm = None;
    for line in rest.by_ref() {
        if line.starts_with("trunk ") {
            trunk.push(parse_dense(path, line, "trunk")?);
        } else if let Some(shape) = line.strip_prefix("lstm ") {
            let err =
                || CkptError::BadHeader { path: path.to_path_buf(), line: line.clone() };
            let (units, in_dim) = shape.split_once('x').ok_or_else(err)?;
            let units: usize = units.parse().map_err(|_| err())?;
            let in_dim: usize = in_dim.parse().map_err(|_| err())?;
            lstm = Some(LstmParams {
                w_x: core::array::from_fn(|_| Tensor::zeros(units, in_dim)),
                w_h: core::array::from_fn(|_| Tensor::zeros(units, units)),
                b: core::array::from_fn(|_| Tensor::zeros(units, 1)),
            });
            break;
        } else {
            return Err(CkptError::BadHeader { path: path.to_path_buf(), line: line.clone() });
        }
    }
    let bad = |line: &str| CkptError::BadHeader {
        path: path.to_path_buf(),
        line: line.to_string(),
    };
    let lstm = lstm.ok_or_else(|| bad("missing lstm line"))?;
    if trunk.is_empty() {
        return Err(bad("missing trunk lines"));
    }
    let head_mu =
        parse_dense(path, rest.next().ok_or_else(|| bad("missing head_mu line"))?, "head_mu")?;
    let head_var = parse_dense(
        path,
        rest.next().ok_or_else(|| bad("missing head_var line"))?,
        "head_var",
    )?;
    if rest.next().is_some() {
        return Err(bad("trailing header lines"));
    }
    let actor = ActorParams { trunk: MlpParams { layers: trunk }, lstm, head_mu, head_var };
    finish(path, actor, &raw.values)
}

// ===== tests =============================================================
