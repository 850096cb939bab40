//! Line-delimited JSON demonstration files: one transition per line.
//!
//! ```text
//! {"version":1,"env_name":"env1_desk","s":[..28..],"a":[lv,av],"r":0.01,"s2":[..28..],"done":false,"demo":true}
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, EnvConfig, Observation, Transition};

pub const DEMO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DemoFileError {
    #[error("demo file io error at {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {reason}")]
    Record { line: usize, reason: String },
    #[error("demo file holds {found} transitions, at least {required} required")]
    TooFew { found: usize, required: usize },
    #[error("demo file mixes environments `{first}` and `{other}`")]
    MixedEnvironments { first: String, other: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub version: u32,
    pub env_name: String,
    pub s: Observation,
    pub a: [f64; 2],
    pub r: f64,
    pub s2: Observation,
    pub done: bool,
    pub demo: bool,
}

impl DemoRecord {
    pub fn new(env_name: &str, t: &Transition) -> Self {
        Self {
            version: DEMO_FORMAT_VERSION,
            env_name: env_name.to_string(),
            s: t.s,
            a: [t.a.lv, t.a.av],
            r: t.r,
            s2: t.s_next,
            done: t.done,
            demo: t.demo,
        }
    }

    pub fn transition(&self) -> Transition {
        Transition { s: self.s, a: Action::new(self.a[0], self.a[1]), r: self.r, s_next: self.s2, done: self.done, demo: self.demo }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("demo records always encode")
    }

    /// Checks version, observation ranges, action bounds and reward finiteness.
    pub fn validate(&self, cfg: &EnvConfig) -> Result<(), String> {
        if self.version != DEMO_FORMAT_VERSION {
            return Err(format!("unsupported record version {}", self.version));
        }
        self.s.check_ranges().map_err(|e| format!("s: {e}"))?;
        self.s2.check_ranges().map_err(|e| format!("s2: {e}"))?;
        if !Action::new(self.a[0], self.a[1]).is_within(cfg) {
            return Err(format!("action {:?} outside velocity limits", self.a));
        }
        if !self.r.is_finite() {
            return Err("reward is not finite".into());
        }
        Ok(())
    }
}

/// Writes transitions in order, flushing on [`DemoWriter::flush`].
pub struct DemoWriter<W: Write> {
    out: W,
    env_name: String,
    written: usize,
}

impl DemoWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, env_name: &str) -> Result<Self, DemoFileError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| DemoFileError::Io { path: path.display().to_string(), source })?;
        Ok(Self::new(BufWriter::new(file), env_name))
    }
}

impl<W: Write> DemoWriter<W> {
    pub fn new(out: W, env_name: &str) -> Self {
        Self { out, env_name: env_name.to_string(), written: 0 }
    }

    pub fn write(&mut self, t: &Transition) -> std::io::Result<()> {
        writeln!(self.out, "{}", DemoRecord::new(&self.env_name, t).to_line())?;
        self.written += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }

    pub fn written(&self) -> usize {
        self.written
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn write_demo_file(path: impl AsRef<Path>, env_name: &str, transitions: &[Transition]) -> Result<(), DemoFileError> {
    let path = path.as_ref();
    let io = |source| DemoFileError::Io { path: path.display().to_string(), source };
    let mut w = DemoWriter::create(path, env_name)?;
    for t in transitions {
        w.write(t).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Parsed demo file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub env_name: Option<String>,
    pub records: Vec<DemoRecord>,
}

impl DemoSet {
    pub fn transitions(&self) -> Vec<Transition> {
        self.records.iter().map(DemoRecord::transition).collect()
    }
}

pub fn parse_demos(reader: impl BufRead, cfg: &EnvConfig, min_count: usize) -> Result<DemoSet, DemoFileError> {
    let mut records = Vec::new();
    let mut env_name: Option<String> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DemoFileError::Record { line: line_no, reason: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DemoRecord =
            serde_json::from_str(&line).map_err(|e| DemoFileError::Record { line: line_no, reason: e.to_string() })?;
        rec.validate(cfg).map_err(|reason| DemoFileError::Record { line: line_no, reason })?;
        match &env_name {
            None => env_name = Some(rec.env_name.clone()),
            Some(first) if *first != rec.env_name => {
                return Err(DemoFileError::MixedEnvironments { first: first.clone(), other: rec.env_name });
            }
            Some(_) => {}
        }
        records.push(rec);
    }
    if records.len() < min_count {
        return Err(DemoFileError::TooFew { found: records.len(), required: min_count });
    }
    Ok(DemoSet { env_name, records })
}

pub fn read_demo_file(path: impl AsRef<Path>, cfg: &EnvConfig, min_count: usize) -> Result<DemoSet, DemoFileError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DemoFileError::Io { path: path.display().to_string(), source })?;
    parse_demos(BufReader::new(file), cfg, min_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::OBS_DIM;

    fn sample_transition(k: usize) -> Transition {
        let mut s = [0.5; OBS_DIM];
        s[0] = 0.1 + 1e-3 * k as f64 / 3.0;
        s[25] = -1.0 / 3.0;
        let mut s2 = s;
        s2[24] = 0.123456789012345;
        Transition { s: Observation(s), a: Action::new(0.2, -0.7), r: 0.1 + 0.2, s_next: Observation(s2), done: k % 2 == 0, demo: true }
    }

    #[test]
    fn records_round_trip_exactly() {
        let cfg = EnvConfig::default();
        let mut w = DemoWriter::new(Vec::new(), "env1_desk");
        let ts: Vec<_> = (0..5).map(sample_transition).collect();
        for t in &ts {
            w.write(t).unwrap();
        }
        let bytes = w.into_inner();
        let set = parse_demos(bytes.as_slice(), &cfg, 5).unwrap();
        assert_eq!(set.env_name.as_deref(), Some("env1_desk"));
        assert_eq!(set.transitions(), ts);
    }

    #[test]
    fn count_and_range_validation() {
        let cfg = EnvConfig::default();
        let line = DemoRecord::new("e", &sample_transition(0)).to_line();
        assert!(matches!(parse_demos(line.as_bytes(), &cfg, 2), Err(DemoFileError::TooFew { found: 1, required: 2 })));

        let mut bad = sample_transition(0);
        bad.a = Action::new(9.0, 0.0);
        let line = DemoRecord::new("e", &bad).to_line();
        assert!(matches!(parse_demos(line.as_bytes(), &cfg, 0), Err(DemoFileError::Record { line: 1, .. })));

        let mut bad = sample_transition(0);
        bad.s.0[3] = 1.5;
        let line = DemoRecord::new("e", &bad).to_line();
        assert!(parse_demos(line.as_bytes(), &cfg, 0).is_err());

        assert!(parse_demos("{not json".as_bytes(), &cfg, 0).is_err());
        let short = r#"{"version":1,"env_name":"e","s":[0.5],"a":[0.1,0.0],"r":0,"s2":[0.5],"done":false,"demo":true}"#;
        assert!(parse_demos(short.as_bytes(), &cfg, 0).is_err());
    }

    #[test]
    fn mixed_environments_rejected() {
        let cfg = EnvConfig::default();
        let text = format!(
            "{}\n{}\n",
            DemoRecord::new("a", &sample_transition(0)).to_line(),
            DemoRecord::new("b", &sample_transition(1)).to_line()
        );
        assert!(matches!(parse_demos(text.as_bytes(), &cfg, 0), Err(DemoFileError::MixedEnvironments { .. })));
    }
}
