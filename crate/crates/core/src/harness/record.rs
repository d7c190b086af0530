use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perception::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerUsed {
    None,
    Vs,
    Kin,
}

impl ControllerUsed {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Vs => "vs",
            Self::Kin => "kin",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "vs" => Ok(Self::Vs),
            "kin" => Ok(Self::Kin),
            _ => Err(Error::Parse(format!("unknown controller `{s}`"))),
        }
    }
}

/// One control tick. Pose columns hold the state reached after applying the
/// tick's command. Optional columns are empty in CSV when unavailable.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub tick: usize,
    pub t: f64,
    pub state_id: u8,
    pub c: bool,
    pub controller_used: ControllerUsed,
    pub features: Option<[f64; 8]>,
    pub desired: Option<[f64; 8]>,
    pub max_feature_err: Option<f64>,
    pub nu_cmd: f64,
    pub psi_cmd: f64,
    pub omega_cmd: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub x_true: f64,
    pub y_true: f64,
    pub theta_true: f64,
    /// Kinematic set-point of the control point.
    pub x_d: Option<f64>,
    pub y_d: Option<f64>,
    pub z_o: Option<f64>,
    /// Norm of the camera-frame visual-servoing twist.
    pub cam_twist_norm: Option<f64>,
}

pub const LOG_COLUMNS: [&str; 35] = [
    "tick",
    "t",
    "state_id",
    "c",
    "controller_used",
    "u0",
    "v0",
    "u1",
    "v1",
    "u2",
    "v2",
    "u3",
    "v3",
    "u_d0",
    "v_d0",
    "u_d1",
    "v_d1",
    "u_d2",
    "v_d2",
    "u_d3",
    "v_d3",
    "max_feature_err",
    "nu_cmd",
    "psi_cmd",
    "omega_cmd",
    "x",
    "y",
    "theta",
    "x_true",
    "y_true",
    "theta_true",
    "x_d",
    "y_d",
    "z_o",
    "cam_twist_norm",
];

/// Shortest decimal form with 9 significant digits.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.8e}");
    let value: f64 = s.parse().expect("formatted float parses");
    format!("{value}")
}

fn push_opt(out: &mut String, v: Option<f64>) {
    out.push(',');
    if let Some(v) = v {
        out.push_str(&fmt_sig9(v));
    }
}

impl LogRecord {
    pub fn to_csv_line(&self) -> String {
        let mut s = String::with_capacity(320);
        write!(
            s,
            "{},{},{},{},{}",
            self.tick,
            fmt_sig9(self.t),
            self.state_id,
            u8::from(self.c),
            self.controller_used.as_str()
        )
        .unwrap();
        for block in [self.features, self.desired] {
            for i in 0..8 {
                push_opt(&mut s, block.map(|b| b[i]));
            }
        }
        push_opt(&mut s, self.max_feature_err);
        for v in [
            self.nu_cmd,
            self.psi_cmd,
            self.omega_cmd,
            self.x,
            self.y,
            self.theta,
            self.x_true,
            self.y_true,
            self.theta_true,
        ] {
            push_opt(&mut s, Some(v));
        }
        for v in [self.x_d, self.y_d, self.z_o, self.cam_twist_norm] {
            push_opt(&mut s, v);
        }
        s
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != LOG_COLUMNS.len() {
            return Err(Error::Parse(format!(
                "expected {} columns, found {}",
                LOG_COLUMNS.len(),
                fields.len()
            )));
        }
        let opt = |i: usize| -> Result<Option<f64>> {
            let f = fields[i].trim();
            if f.is_empty() {
                Ok(None)
            } else {
                f.parse::<f64>()
                    .map(Some)
                    .map_err(|e| Error::Parse(format!("{}: {e}", LOG_COLUMNS[i])))
            }
        };
        let req = |i: usize| -> Result<f64> {
            opt(i)?.ok_or_else(|| Error::Parse(format!("{} is empty", LOG_COLUMNS[i])))
        };
        let block = |start: usize| -> Result<Option<[f64; 8]>> {
            let vals: Vec<Option<f64>> = (start..start + 8).map(opt).collect::<Result<_>>()?;
            if vals.iter().all(Option::is_none) {
                return Ok(None);
            }
            let mut out = [0.0; 8];
            for (o, v) in out.iter_mut().zip(&vals) {
                *o = v.ok_or_else(|| Error::Parse("partially empty feature block".into()))?;
            }
            Ok(Some(out))
        };
        let int = |i: usize| -> Result<u64> {
            fields[i]
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::Parse(format!("{}: {e}", LOG_COLUMNS[i])))
        };
        Ok(Self {
            tick: int(0)? as usize,
            t: req(1)?,
            state_id: int(2)? as u8,
            c: int(3)? != 0,
            controller_used: ControllerUsed::parse(fields[4].trim())?,
            features: block(5)?,
            desired: block(13)?,
            max_feature_err: opt(21)?,
            nu_cmd: req(22)?,
            psi_cmd: req(23)?,
            omega_cmd: req(24)?,
            x: req(25)?,
            y: req(26)?,
            theta: req(27)?,
            x_true: req(28)?,
            y_true: req(29)?,
            theta_true: req(30)?,
            x_d: opt(31)?,
            y_d: opt(32)?,
            z_o: opt(33)?,
            cam_twist_norm: opt(34)?,
        })
    }
}

pub fn write_log_csv<W: Write>(log: &[LogRecord], mut w: W) -> Result<()> {
    writeln!(w, "{}", LOG_COLUMNS.join(","))?;
    for r in log {
        writeln!(w, "{}", r.to_csv_line())?;
    }
    Ok(())
}

pub fn log_to_csv_string(log: &[LogRecord]) -> String {
    let mut buf = Vec::new();
    write_log_csv(log, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn read_log_csv<R: BufRead>(r: R) -> Result<Vec<LogRecord>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty log file".into()))??;
    if header.trim() != LOG_COLUMNS.join(",") {
        return Err(Error::Parse("unexpected log header".into()));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(LogRecord::from_csv_line(&line)?);
    }
    Ok(out)
}

/// Per-tick detector output, exported so other runs can replay the same
/// dropout pattern.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionTrace {
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub bbox: Option<BoundingBox>,
}

impl DetectionTrace {
    pub fn detected_at(&self, tick: usize) -> Option<bool> {
        self.rows.get(tick).map(|r| r.bbox.is_some())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,detected,u0,v0,u2,v2")?;
        for r in &self.rows {
            match r.bbox {
                Some(b) => writeln!(
                    w,
                    "{},1,{},{},{},{}",
                    fmt_sig9(r.t),
                    fmt_sig9(b.u0),
                    fmt_sig9(b.v0),
                    fmt_sig9(b.u2),
                    fmt_sig9(b.v2)
                )?,
                None => writeln!(w, "{},0,,,,", fmt_sig9(r.t))?,
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(Error::Parse(format!("trace line {}: expected 6 fields", i + 1)));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("trace line {}: {e}", i + 1)))
            };
            let bbox = match f[1] {
                "1" => Some(BoundingBox::new(num(f[2])?, num(f[3])?, num(f[4])?, num(f[5])?)),
                "0" => None,
                other => return Err(Error::Parse(format!("bad detected flag `{other}`"))),
            };
            rows.push(TraceRow { t: num(f[0])?, bbox });
        }
        Ok(Self { rows })
    }
}
