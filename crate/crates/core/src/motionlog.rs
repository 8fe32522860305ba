//! The 500 Hz motion-data interchange format, its CSV and packed binary
//! encodings, and the two recorded-data transforms: zero-phase filtering
//! and double-speed resampling.
//!
//! CSV layout: optional `# key=value` metadata lines, one fixed header
//! `t,th_l_1..th_l_19,om_l_1..,tq_l_1..,th_f_1..,om_f_1..,tq_f_1..`,
//! then one row per 2 ms tick. Floats are written in shortest
//! round-trippable form, so write -> read is bit-exact.

use crate::binio;
use crate::joints::{JointVector, JOINT_COUNT};
use crate::observers::FilterState;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

/// Nominal sample rate of all recordings, Hz.
pub const LOG_RATE: f64 = 500.0;

const CSV_MAGIC: &str = "# teleosim motion log v1";
const BIN_MAGIC: &[u8; 4] = b"TSLG";
const BIN_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {what}")]
    Malformed { line: usize, what: String },
    #[error("log invariant violated: {0}")]
    Invariant(String),
}

/// Whether the torque columns hold reaction-force estimates (teach/replay
/// recordings) or raw torque commands (identification recordings).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TorqueChannel {
    #[default]
    Response,
    Command,
}

impl TorqueChannel {
    fn as_str(&self) -> &'static str {
        match self {
            TorqueChannel::Response => "response",
            TorqueChannel::Command => "command",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "response" => Some(TorqueChannel::Response),
            "command" => Some(TorqueChannel::Command),
            _ => None,
        }
    }
}

/// Provenance carried with every log.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LogMetadata {
    pub seed: u64,
    pub leader_preset: String,
    pub follower_preset: String,
    /// Hash of the run configuration, hex; empty when not applicable.
    pub config_hash: String,
    pub torque_channel: TorqueChannel,
    /// Planar object coordinates attached to imitation teach recordings.
    pub object_xy: Option<(f64, f64)>,
}

/// One 2 ms sample of both robots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub theta_l: JointVector,
    pub omega_l: JointVector,
    pub tau_l: JointVector,
    pub theta_f: JointVector,
    pub omega_f: JointVector,
    pub tau_f: JointVector,
}

/// A leader/follower recording at a fixed rate.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionLog {
    pub rate: f64,
    pub rows: Vec<LogRow>,
    pub metadata: LogMetadata,
}

impl MotionLog {
    pub fn new(metadata: LogMetadata) -> Self {
        MotionLog { rate: LOG_RATE, rows: Vec::new(), metadata }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate
    }

    /// Duration covered by the rows (N rows = N ticks).
    pub fn duration(&self) -> f64 {
        self.rows.len() as f64 * self.dt()
    }

    /// Checks the timestamp grid and that every value is finite.
    pub fn validate(&self) -> Result<(), LogError> {
        let dt = self.dt();
        for (k, row) in self.rows.iter().enumerate() {
            let expected = k as f64 * dt;
            if (row.t - expected).abs() > 1e-9 {
                return Err(LogError::Invariant(format!(
                    "row {k}: t = {} off the {} Hz grid",
                    row.t, self.rate
                )));
            }
            let finite = row.theta_l.is_finite()
                && row.omega_l.is_finite()
                && row.tau_l.is_finite()
                && row.theta_f.is_finite()
                && row.omega_f.is_finite()
                && row.tau_f.is_finite();
            if !finite {
                return Err(LogError::Invariant(format!("row {k}: non-finite value")));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), LogError> {
        let mut w = BufWriter::new(w);
        writeln!(w, "{CSV_MAGIC}")?;
        writeln!(w, "# rate={}", self.rate)?;
        writeln!(w, "# seed={}", self.metadata.seed)?;
        writeln!(w, "# leader={}", self.metadata.leader_preset)?;
        writeln!(w, "# follower={}", self.metadata.follower_preset)?;
        writeln!(w, "# config={}", self.metadata.config_hash)?;
        writeln!(w, "# torque={}", self.metadata.torque_channel.as_str())?;
        if let Some((x, y)) = self.metadata.object_xy {
            writeln!(w, "# object_xy={x},{y}")?;
        }
        writeln!(w, "{}", csv_header())?;
        let mut line = String::with_capacity(2048);
        for row in &self.rows {
            line.clear();
            push_f64(&mut line, row.t);
            for vec in [&row.theta_l, &row.omega_l, &row.tau_l, &row.theta_f, &row.omega_f, &row.tau_f]
            {
                for v in vec.iter() {
                    line.push(',');
                    push_f64(&mut line, *v);
                }
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, LogError> {
        let reader = BufReader::new(r);
        let mut metadata = LogMetadata::default();
        let mut rate = LOG_RATE;
        let mut rows = Vec::new();
        let mut saw_header = false;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some((key, value)) = comment.trim().split_once('=') {
                    match key.trim() {
                        "rate" => {
                            rate = value.trim().parse().map_err(|_| LogError::Malformed {
                                line: lineno,
                                what: "bad rate".into(),
                            })?
                        }
                        "seed" => {
                            metadata.seed = value.trim().parse().map_err(|_| LogError::Malformed {
                                line: lineno,
                                what: "bad seed".into(),
                            })?
                        }
                        "leader" => metadata.leader_preset = value.trim().to_string(),
                        "follower" => metadata.follower_preset = value.trim().to_string(),
                        "config" => metadata.config_hash = value.trim().to_string(),
                        "torque" => {
                            metadata.torque_channel = TorqueChannel::parse(value.trim())
                                .ok_or_else(|| LogError::Malformed {
                                    line: lineno,
                                    what: format!("unknown torque channel '{value}'"),
                                })?
                        }
                        "object_xy" => {
                            let (x, y) =
                                value.trim().split_once(',').ok_or_else(|| LogError::Malformed {
                                    line: lineno,
                                    what: "object_xy needs two values".into(),
                                })?;
                            let parse = |s: &str| {
                                s.trim().parse::<f64>().map_err(|_| LogError::Malformed {
                                    line: lineno,
                                    what: "bad object_xy".into(),
                                })
                            };
                            metadata.object_xy = Some((parse(x)?, parse(y)?));
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if !saw_header {
                if trimmed != csv_header() {
                    return Err(LogError::Malformed {
                        line: lineno,
                        what: "unexpected column header".into(),
                    });
                }
                saw_header = true;
                continue;
            }
            rows.push(parse_row(trimmed, lineno)?);
        }
        if !saw_header {
            return Err(LogError::Malformed { line: 0, what: "missing column header".into() });
        }
        Ok(MotionLog { rate, rows, metadata })
    }

    pub fn write_binary<W: Write>(&self, w: W) -> Result<(), LogError> {
        let mut w = BufWriter::new(w);
        w.write_all(BIN_MAGIC)?;
        binio::write_u32(&mut w, BIN_VERSION)?;
        binio::write_f64(&mut w, self.rate)?;
        binio::write_u64(&mut w, self.metadata.seed)?;
        binio::write_string(&mut w, &self.metadata.leader_preset)?;
        binio::write_string(&mut w, &self.metadata.follower_preset)?;
        binio::write_string(&mut w, &self.metadata.config_hash)?;
        binio::write_string(&mut w, self.metadata.torque_channel.as_str())?;
        match self.metadata.object_xy {
            Some((x, y)) => {
                binio::write_u32(&mut w, 1)?;
                binio::write_f64(&mut w, x)?;
                binio::write_f64(&mut w, y)?;
            }
            None => binio::write_u32(&mut w, 0)?,
        }
        binio::write_u64(&mut w, self.rows.len() as u64)?;
        for row in &self.rows {
            binio::write_f64(&mut w, row.t)?;
            for vec in [&row.theta_l, &row.omega_l, &row.tau_l, &row.theta_f, &row.omega_f, &row.tau_f]
            {
                for v in vec.iter() {
                    binio::write_f64(&mut w, *v)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self, LogError> {
        let mut r = BufReader::new(r);
        binio::expect_magic(&mut r, BIN_MAGIC)?;
        let version = binio::read_u32(&mut r)?;
        if version != BIN_VERSION {
            return Err(LogError::Malformed {
                line: 0,
                what: format!("unsupported binary version {version}"),
            });
        }
        let rate = binio::read_f64(&mut r)?;
        let seed = binio::read_u64(&mut r)?;
        let leader_preset = binio::read_string(&mut r)?;
        let follower_preset = binio::read_string(&mut r)?;
        let config_hash = binio::read_string(&mut r)?;
        let torque = binio::read_string(&mut r)?;
        let torque_channel = TorqueChannel::parse(&torque).ok_or_else(|| LogError::Malformed {
            line: 0,
            what: format!("unknown torque channel '{torque}'"),
        })?;
        let object_xy = match binio::read_u32(&mut r)? {
            0 => None,
            _ => Some((binio::read_f64(&mut r)?, binio::read_f64(&mut r)?)),
        };
        let count = binio::read_u64(&mut r)? as usize;
        let mut rows = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            let t = binio::read_f64(&mut r)?;
            let mut read_vec = || -> Result<JointVector, LogError> {
                let mut v = JointVector::ZERO;
                for i in 0..JOINT_COUNT {
                    v[i] = binio::read_f64(&mut r)?;
                }
                Ok(v)
            };
            let theta_l = read_vec()?;
            let omega_l = read_vec()?;
            let tau_l = read_vec()?;
            let theta_f = read_vec()?;
            let omega_f = read_vec()?;
            let tau_f = read_vec()?;
            rows.push(LogRow { t, theta_l, omega_l, tau_l, theta_f, omega_f, tau_f });
        }
        Ok(MotionLog {
            rate,
            rows,
            metadata: LogMetadata {
                seed,
                leader_preset,
                follower_preset,
                config_hash,
                torque_channel,
                object_xy,
            },
        })
    }

    /// Writes CSV for a `.csv` extension, the packed binary otherwise.
    pub fn save(&self, path: &Path) -> Result<(), LogError> {
        let file = std::fs::File::create(path)?;
        if has_csv_extension(path) {
            self.write_csv(file)
        } else {
            self.write_binary(file)
        }
    }

    pub fn load(path: &Path) -> Result<Self, LogError> {
        let file = std::fs::File::open(path)?;
        if has_csv_extension(path) {
            Self::read_csv(file)
        } else {
            Self::read_binary(file)
        }
    }
}

fn has_csv_extension(path: &Path) -> bool {
    path.extension().map(|e| e.eq_ignore_ascii_case("csv")).unwrap_or(false)
}

fn csv_header() -> String {
    let mut header = String::from("t");
    for group in ["th_l", "om_l", "tq_l", "th_f", "om_f", "tq_f"] {
        for joint in 1..=JOINT_COUNT {
            header.push(',');
            header.push_str(group);
            header.push('_');
            header.push_str(&joint.to_string());
        }
    }
    header
}

fn push_f64(line: &mut String, v: f64) {
    use std::fmt::Write as _;
    let _ = write!(line, "{v}");
}

fn parse_row(line: &str, lineno: usize) -> Result<LogRow, LogError> {
    let mut fields = line.split(',');
    let mut next = || -> Result<f64, LogError> {
        fields
            .next()
            .ok_or_else(|| LogError::Malformed { line: lineno, what: "too few columns".into() })?
            .trim()
            .parse::<f64>()
            .map_err(|_| LogError::Malformed { line: lineno, what: "bad float".into() })
    };
    let t = next()?;
    let read_vec = |next: &mut dyn FnMut() -> Result<f64, LogError>| -> Result<JointVector, LogError> {
        let mut v = JointVector::ZERO;
        for i in 0..JOINT_COUNT {
            v[i] = next()?;
        }
        Ok(v)
    };
    let theta_l = read_vec(&mut next)?;
    let omega_l = read_vec(&mut next)?;
    let tau_l = read_vec(&mut next)?;
    let theta_f = read_vec(&mut next)?;
    let omega_f = read_vec(&mut next)?;
    let tau_f = read_vec(&mut next)?;
    if fields.next().is_some() {
        return Err(LogError::Malformed { line: lineno, what: "too many columns".into() });
    }
    Ok(LogRow { t, theta_l, omega_l, tau_l, theta_f, omega_f, tau_f })
}

/// Forward-backward first-order low-pass over every channel, at that joint's
/// cutoff. Zero net phase shift, squared single-pass magnitude, output length
/// equals input length. The backward pass starts from the forward pass's
/// final value (hold padding), so constants pass through unchanged.
pub fn zero_phase_filter(log: &MotionLog, cutoffs: &JointVector) -> MotionLog {
    let mut out = log.clone();
    let dt = log.dt();
    let n = log.rows.len();
    if n == 0 {
        return out;
    }
    let mut channel = vec![0.0; n];
    for group in 0..6 {
        for joint in 0..JOINT_COUNT {
            for (k, row) in log.rows.iter().enumerate() {
                channel[k] = channel_get(row, group, joint);
            }
            filtfilt_first_order(&mut channel, cutoffs[joint], dt);
            for (k, row) in out.rows.iter_mut().enumerate() {
                *channel_get_mut(row, group, joint) = channel[k];
            }
        }
    }
    out
}

fn channel_get(row: &LogRow, group: usize, joint: usize) -> f64 {
    match group {
        0 => row.theta_l[joint],
        1 => row.omega_l[joint],
        2 => row.tau_l[joint],
        3 => row.theta_f[joint],
        4 => row.omega_f[joint],
        _ => row.tau_f[joint],
    }
}

fn channel_get_mut(row: &mut LogRow, group: usize, joint: usize) -> &mut f64 {
    match group {
        0 => &mut row.theta_l[joint],
        1 => &mut row.omega_l[joint],
        2 => &mut row.tau_l[joint],
        3 => &mut row.theta_f[joint],
        4 => &mut row.omega_f[joint],
        _ => &mut row.tau_f[joint],
    }
}

/// In-place forward then backward first-order low-pass. Each pass starts at
/// the boundary sample it first sees.
pub fn filtfilt_first_order(data: &mut [f64], cutoff: f64, dt: f64) {
    if data.is_empty() {
        return;
    }
    let mut forward = FilterState::new(cutoff, dt);
    forward.reset_to(data[0]);
    for v in data.iter_mut() {
        *v = forward.update(*v);
    }
    let mut backward = FilterState::new(cutoff, dt);
    backward.reset_to(data[data.len() - 1]);
    for v in data.iter_mut().rev() {
        *v = backward.update(*v);
    }
}

/// Double-speed resample: keep rows 0, 2, 4, …, double every angular-velocity
/// column, keep angles and torques verbatim, and rewrite timestamps onto the
/// original rate grid so the playback duration halves.
pub fn double_speed(log: &MotionLog) -> MotionLog {
    let dt = log.dt();
    let mut out = log.clone();
    out.rows = log
        .rows
        .iter()
        .step_by(2)
        .enumerate()
        .map(|(i, row)| LogRow {
            t: i as f64 * dt,
            theta_l: row.theta_l,
            omega_l: row.omega_l * 2.0,
            tau_l: row.tau_l,
            theta_f: row.theta_f,
            omega_f: row.omega_f * 2.0,
            tau_f: row.tau_f,
        })
        .collect();
    out
}
