//! `metrics_<seed>.csv`: one row per episode,
//! `episode,<agent columns>,red_team,green_team,total,wall_ms`, LF line endings.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use coop_maddpg::maddpg::MetricsRow;

use crate::{io_err, HarnessError, Result};

const TAIL: [&str; 4] = ["red_team", "green_team", "total", "wall_ms"];

pub fn header(agent_names: &[String]) -> Vec<String> {
    std::iter::once("episode".to_string())
        .chain(agent_names.iter().cloned())
        .chain(TAIL.iter().map(|s| s.to_string()))
        .collect()
}

pub fn record(row: &MetricsRow) -> Vec<String> {
    std::iter::once(row.episode.to_string())
        .chain(row.agent_rewards.iter().map(|r| r.to_string()))
        .chain([
            row.red_team.to_string(),
            row.green_team.to_string(),
            row.total.to_string(),
            row.wall_ms.to_string(),
        ])
        .collect()
}

fn csv_writer(file: File) -> csv::Writer<File> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file)
}

/// Appends rows to a metrics CSV, writing the header when the file is new.
pub struct MetricsWriter {
    path: PathBuf,
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path, agent_names: &[String]) -> Result<Self> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = Self {
            path: path.to_path_buf(),
            inner: csv_writer(file),
        };
        w.write_fields(&header(agent_names))?;
        Ok(w)
    }

    /// Reopens `path` keeping its header and the first `keep_rows` rows.
    pub fn resume(path: &Path, agent_names: &[String], keep_rows: usize) -> Result<Self> {
        let existing = MetricsTable::read(path)?;
        if existing.agent_names != agent_names {
            return Err(HarnessError::Csv {
                path: path.to_path_buf(),
                line: 1,
                message: "agent columns do not match the run being resumed".into(),
            });
        }
        if existing.rows.len() < keep_rows {
            return Err(HarnessError::Csv {
                path: path.to_path_buf(),
                line: existing.rows.len() as u64 + 1,
                message: format!(
                    "holds {} rows but the checkpoint is at episode {keep_rows}",
                    existing.rows.len()
                ),
            });
        }
        let mut w = Self::create(path, agent_names)?;
        for row in &existing.rows[..keep_rows] {
            w.write(row)?;
        }
        Ok(w)
    }

    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            inner: csv_writer(file),
        })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.write_fields(&record(row))
    }

    fn write_fields(&mut self, fields: &[String]) -> Result<()> {
        let path = &self.path;
        self.inner.write_record(fields).map_err(|e| HarnessError::Io {
            path: path.clone(),
            cause: e.into(),
        })
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(io_err(&self.path))
    }
}

/// A parsed metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub path: PathBuf,
    pub agent_names: Vec<String>,
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(io_err(path))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(file);
        let fail = |line: u64, message: String| HarnessError::Csv {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut records = reader.records();
        let head = match records.next() {
            Some(Ok(h)) => h,
            Some(Err(e)) => return Err(fail(1, e.to_string())),
            None => return Err(fail(1, "empty file, expected a header".into())),
        };
        let cols: Vec<&str> = head.iter().collect();
        let n = cols.len();
        if n < 1 + 1 + TAIL.len() || cols[0] != "episode" || cols[n - TAIL.len()..] != TAIL {
            return Err(fail(
                1,
                format!("header must be episode,<agents>,{}", TAIL.join(",")),
            ));
        }
        let agent_names: Vec<String> = cols[1..n - TAIL.len()].iter().map(|s| s.to_string()).collect();
        let na = agent_names.len();

        let mut rows = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                fail(line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != n {
                return Err(fail(line, format!("expected {n} fields, found {}", rec.len())));
            }
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|_| fail(line, format!("column {} is not a number: {:?}", cols[i], &rec[i])))
            };
            let episode = rec[0]
                .parse::<usize>()
                .map_err(|_| fail(line, format!("bad episode index {:?}", &rec[0])))?;
            let agent_rewards = (1..=na).map(num).collect::<Result<Vec<_>>>()?;
            let wall_ms = rec[n - 1]
                .parse::<u64>()
                .map_err(|_| fail(line, format!("bad wall_ms {:?}", &rec[n - 1])))?;
            rows.push(MetricsRow {
                episode,
                agent_rewards,
                red_team: num(na + 1)?,
                green_team: num(na + 2)?,
                total: num(na + 3)?,
                wall_ms,
            });
        }
        Ok(Self {
            path: path.to_path_buf(),
            agent_names,
            rows,
        })
    }

    /// Values of a named column (`episode`, an agent name, or a team/total column).
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let pick: Box<dyn Fn(&MetricsRow) -> f64> = match name {
            "episode" => Box::new(|r| r.episode as f64),
            "red_team" => Box::new(|r| r.red_team),
            "green_team" => Box::new(|r| r.green_team),
            "total" => Box::new(|r| r.total),
            "wall_ms" => Box::new(|r| r.wall_ms as f64),
            other => {
                let i = self.agent_names.iter().position(|a| a == other)?;
                Box::new(move |r| r.agent_rewards[i])
            }
        };
        Some(self.rows.iter().map(pick).collect())
    }

    pub fn red_agents(&self) -> Vec<&str> {
        self.agent_names
            .iter()
            .filter(|n| n.starts_with("red"))
            .map(String::as_str)
            .collect()
    }
}

/// Writes a greedy-evaluation summary row: `episode,<agent means>,red_team,green_team,total`.
pub fn append_eval_row(
    path: &Path,
    agent_names: &[String],
    episode: usize,
    eval: &coop_maddpg::maddpg::Evaluation,
) -> Result<()> {
    let fresh = !path.exists();
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut text = String::new();
    if fresh {
        text.push_str("episode,");
        text.push_str(&agent_names.join(","));
        text.push_str(",red_team,green_team,total\n");
    }
    let values: Vec<String> = eval.agent_means.iter().map(f64::to_string).collect();
    text.push_str(&format!(
        "{episode},{},{},{},{}\n",
        values.join(","),
        eval.red_mean,
        eval.green_mean,
        eval.total_mean
    ));
    file.write_all(text.as_bytes()).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        vec!["red_0".into(), "red_1".into(), "green_0".into()]
    }

    fn row(e: usize) -> MetricsRow {
        let r = vec![0.1 * e as f64, -1.0 / 3.0, 2.5e-7];
        MetricsRow {
            episode: e,
            red_team: r[0] + r[1],
            green_team: r[2],
            total: r[0] + r[1] + r[2],
            agent_rewards: r,
            wall_ms: 0,
        }
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut w = MetricsWriter::create(&path, &names()).unwrap();
        for e in 0..3 {
            w.write(&row(e)).unwrap();
        }
        w.flush().unwrap();
        drop(w);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("episode,red_0,red_1,green_0,red_team,green_team,total,wall_ms\n"));
        assert!(!text.contains('\r'));
        let t = MetricsTable::read(&path).unwrap();
        assert_eq!(t.agent_names, names());
        assert_eq!(t.rows, (0..3).map(row).collect::<Vec<_>>());
        assert_eq!(t.red_agents(), vec!["red_0", "red_1"]);
    }

    #[test]
    fn resume_truncates_to_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut w = MetricsWriter::create(&path, &names()).unwrap();
        for e in 0..5 {
            w.write(&row(e)).unwrap();
        }
        drop(w);
        let mut w = MetricsWriter::resume(&path, &names(), 2).unwrap();
        w.write(&row(2)).unwrap();
        drop(w);
        assert_eq!(MetricsTable::read(&path).unwrap().rows.len(), 3);
        assert!(MetricsWriter::resume(&path, &names(), 9).is_err());
    }

    #[test]
    fn malformed_rows_name_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "episode,red_0,red_team,green_team,total,wall_ms\n0,1,1,0,1,0\n1,x,1,0,1,0\n",
        )
        .unwrap();
        let err = MetricsTable::read(&path).unwrap_err().to_string();
        assert!(err.contains("bad.csv") && err.contains("line 3"), "{err}");

        std::fs::write(&path, "ep,red_0\n").unwrap();
        assert!(MetricsTable::read(&path).unwrap_err().to_string().contains("line 1"));
    }
}
