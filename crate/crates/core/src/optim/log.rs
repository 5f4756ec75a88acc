use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub step: u64,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub test_error: f64,
    pub wall_seconds: f64,
}

/// CSV training log with header `epoch,step,primal,dual,gap,test_error,wall_seconds`.
pub struct TrainLog {
    writer: csv::Writer<File>,
}

impl TrainLog {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self { writer: csv::Writer::from_path(path)? })
    }

    pub fn write(&mut self, row: &TrainLogRow) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Vec<TrainLogRow>> {
        let mut r = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        for row in r.deserialize() {
            rows.push(row?);
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let row = TrainLogRow { epoch: 1, step: 10, primal: 1.5, dual: 1.0, gap: 0.5, test_error: 0.25, wall_seconds: 0.1 };
        {
            let mut log = TrainLog::create(&path).unwrap();
            log.write(&row).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,step,primal,dual,gap,test_error,wall_seconds"));
        assert_eq!(TrainLog::read(&path).unwrap(), vec![row]);
    }
}
