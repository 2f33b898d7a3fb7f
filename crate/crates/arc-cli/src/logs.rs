//! Training-log and metrics CSV files. All writers emit LF line endings,
//! fixed headers, and shortest-round-trip float formatting, so a rerun
//! with the same seed produces byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use arc_core::a2c::AdvEpisodeLog;
use arc_core::arc::ArcLogRow;
use arc_core::eval::{MetricsRecord, TraceRow};
use arc_core::il::IlEpoch;

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: cannot parse `{text}`")]
    Parse { path: PathBuf, line: usize, text: String },
    #[error("{path}: expected header `{expected}`")]
    Header { path: PathBuf, expected: &'static str },
}

fn write_text(path: &Path, text: String) -> Result<(), LogError> {
    std::fs::write(path, text).map_err(|source| LogError::Io { path: path.to_path_buf(), source })
}

fn read_text(path: &Path) -> Result<String, LogError> {
    std::fs::read_to_string(path)
        .map_err(|source| LogError::Io { path: path.to_path_buf(), source })
}

/// Split one CSV line into exactly `n` fields.
fn fields<'a>(
    path: &Path,
    line_no: usize,
    line: &'a str,
    n: usize,
) -> Result<Vec<&'a str>, LogError> {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != n {
        return Err(LogError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            text: line.to_string(),
        });
    }
    Ok(parts)
}

fn parse<T: std::str::FromStr>(path: &Path, line_no: usize, text: &str) -> Result<T, LogError> {
    text.parse().map_err(|_| LogError::Parse {
        path: path.to_path_buf(),
        line: line_no,
        text: text.to_string(),
    })
}

fn check_header(path: &Path, got: Option<&str>, expected: &'static str) -> Result<(), LogError> {
    if got != Some(expected) {
        return Err(LogError::Header { path: path.to_path_buf(), expected });
    }
    Ok(())
}

// ===== training curves and episode logs =================================

pub const IL_CURVE_HEADER: &str = "epoch,train_mse,val_mse";

pub fn write_il_curve(path: &Path, curve: &[IlEpoch]) -> Result<(), LogError> {
    let mut text = format!("{IL_CURVE_HEADER}\n");
    for row in curve {
        let _ = writeln!(text, "{},{},{}", row.epoch, row.train_mse, row.val_mse);
    }
    write_text(path, text)
}

pub const ADV_LOG_HEADER: &str = "episode,mean_step_reward,min_t_h,collided";

pub fn write_adv_log(path: &Path, log: &[AdvEpisodeLog]) -> Result<(), LogError> {
    let mut text = format!("{ADV_LOG_HEADER}\n");
    for row in log {
        let _ = writeln!(
            text,
            "{},{},{},{}",
            row.episode,
            row.mean_step_reward,
            row.min_t_h,
            u8::from(row.collided)
        );
    }
    write_text(path, text)
}

pub fn read_adv_log(path: &Path) -> Result<Vec<AdvEpisodeLog>, LogError> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    check_header(path, lines.next(), ADV_LOG_HEADER)?;
    let mut log = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let f = fields(path, n, line, 4)?;
        log.push(AdvEpisodeLog {
            episode: parse(path, n, f[0])?,
            mean_step_reward: parse(path, n, f[1])?,
            min_t_h: parse(path, n, f[2])?,
            collided: parse::<u8>(path, n, f[3])? != 0,
        });
    }
    Ok(log)
}

pub const ARC_LOG_HEADER: &str =
    "global_episode,worker_id,mean_step_reward,min_t_h,collided,mean_l_d,staleness";

pub fn write_arc_log(path: &Path, log: &[ArcLogRow]) -> Result<(), LogError> {
    let mut text = format!("{ARC_LOG_HEADER}\n");
    for row in log {
        let s = &row.stats;
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{}",
            row.global_episode,
            s.worker_id,
            s.mean_step_reward,
            s.min_t_h,
            u8::from(s.collided),
            s.mean_l_d,
            s.staleness
        );
    }
    write_text(path, text)
}

pub const TRACE_HEADER: &str = "step,x_rel,v,a,v_lead,a_lead,t_h,reward,pedal,lead_cmd";

pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<(), LogError> {
    let mut text = format!("{TRACE_HEADER}\n");
    for r in trace {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{}",
            r.step, r.x_rel, r.v, r.a, r.v_lead, r.a_lead, r.t_h, r.reward, r.pedal, r.lead_cmd
        );
    }
    write_text(path, text)
}

// ===== per-adversary minimum-headway curves ==============================

pub const MIN_HEADWAY_HEADER: &str = "episode,min_t_h";

/// `# policy = <label>` preamble, then one row per training episode.
pub fn write_min_headway(path: &Path, label: &str, log: &[AdvEpisodeLog]) -> Result<(), LogError> {
    let mut text = format!("# policy = {label}\n{MIN_HEADWAY_HEADER}\n");
    for row in log {
        let _ = writeln!(text, "{},{}", row.episode, row.min_t_h);
    }
    write_text(path, text)
}

pub fn read_min_headway(path: &Path) -> Result<(String, Vec<(u32, f64)>), LogError> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let label = lines
        .next()
        .and_then(|l| l.strip_prefix("# policy = "))
        .ok_or(LogError::Header { path: path.to_path_buf(), expected: "# policy = <label>" })?
        .to_string();
    check_header(path, lines.next(), MIN_HEADWAY_HEADER)?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 3;
        let f = fields(path, n, line, 2)?;
        rows.push((parse(path, n, f[0])?, parse(path, n, f[1])?));
    }
    Ok((label, rows))
}

// ===== labeled metrics tables ===========================================

pub const NAT_HEADER: &str = "label,episodes,steps,min_x_rel,mean_x_rel,max_v_rel,\
mean_v_rel,min_t_h,mean_t_h,collisions,episodes_until_collision";

#[derive(Clone, Debug, PartialEq)]
pub struct NatRow {
    pub label: String,
    pub rec: MetricsRecord,
}

pub fn read_nat(path: &Path) -> Result<Vec<NatRow>, LogError> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    check_header(path, lines.next(), NAT_HEADER)?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let f = fields(path, n, line, 11)?;
        rows.push(NatRow {
            label: f[0].to_string(),
            rec: MetricsRecord {
                episodes: parse(path, n, f[1])?,
                steps: parse(path, n, f[2])?,
                min_x_rel: parse(path, n, f[3])?,
                mean_x_rel: parse(path, n, f[4])?,
                max_v_rel: parse(path, n, f[5])?,
                mean_v_rel: parse(path, n, f[6])?,
                min_t_h: parse(path, n, f[7])?,
                mean_t_h: parse(path, n, f[8])?,
                collisions: parse(path, n, f[9])?,
                episodes_until_collision: if f[10].is_empty() {
                    None
                } else {
                    Some(parse(path, n, f[10])?)
                },
            },
        });
    }
    Ok(rows)
}

fn write_nat(path: &Path, rows: &[NatRow]) -> Result<(), LogError> {
    let mut text = format!("{NAT_HEADER}\n");
    for r in rows {
        let m = &r.rec;
        let first = m.episodes_until_collision.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{},{first}",
            r.label,
            m.episodes,
            m.steps,
            m.min_x_rel,
            m.mean_x_rel,
            m.max_v_rel,
            m.mean_v_rel,
            m.min_t_h,
            m.mean_t_h,
            m.collisions
        );
    }
    write_text(path, text)
}

/// Insert or replace the row for `label`, keeping existing order and
/// appending new labels; a missing file starts an empty table.
pub fn upsert_nat(path: &Path, row: NatRow) -> Result<(), LogError> {
    let mut rows = if path.exists() { read_nat(path)? } else { Vec::new() };
    match rows.iter_mut().find(|r| r.label == row.label) {
        Some(slot) => *slot = row,
        None => rows.push(row),
    }
    write_nat(path, &rows)
}

pub const ADV_METRICS_HEADER: &str = "label,run,collisions,first_collision";

/// One adversarial-testing run: `collisions` episodes ended in a crash,
/// the first at episode `first_collision` (1-based), if any.
#[derive(Clone, Debug, PartialEq)]
pub struct AdvRow {
    pub label: String,
    pub run: u32,
    pub collisions: u32,
    pub first_collision: Option<u32>,
}

pub fn read_adv_rows(path: &Path) -> Result<Vec<AdvRow>, LogError> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    check_header(path, lines.next(), ADV_METRICS_HEADER)?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let f = fields(path, n, line, 4)?;
        rows.push(AdvRow {
            label: f[0].to_string(),
            run: parse(path, n, f[1])?,
            collisions: parse(path, n, f[2])?,
            first_collision: if f[3].is_empty() { None } else { Some(parse(path, n, f[3])?) },
        });
    }
    Ok(rows)
}

fn write_adv_rows(path: &Path, rows: &[AdvRow]) -> Result<(), LogError> {
    let mut text = format!("{ADV_METRICS_HEADER}\n");
    for r in rows {
        let first = r.first_collision.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(text, "{},{},{},{first}", r.label, r.run, r.collisions);
    }
    write_text(path, text)
}

/// Replace every row carrying this label with `rows`, keeping other
/// labels' rows in place.
pub fn upsert_adv_rows(path: &Path, label: &str, rows: &[AdvRow]) -> Result<(), LogError> {
    let mut all = if path.exists() { read_adv_rows(path)? } else { Vec::new() };
    all.retain(|r| r.label != label);
    all.extend(rows.iter().cloned());
    write_adv_rows(path, &all)
}

// ===== tests =============================================================
