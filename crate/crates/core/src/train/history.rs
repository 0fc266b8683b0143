use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// Percent, over the batches seen during the epoch.
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: usize,
    pub records: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn new(epochs: usize) -> Self {
        TrainingHistory {
            epochs,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: EpochRecord) -> Result<()> {
        let expected = self.records.len() + 1;
        if record.epoch != expected {
            return Err(Error::State(format!(
                "history expects epoch {expected}, got {}",
                record.epoch
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn epoch_line(&self, record: &EpochRecord) -> String {
        epoch_line(
            record.epoch,
            self.epochs,
            record.train_loss,
            record.train_accuracy,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("history serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("invalid history file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// `epoch,train_loss,train_accuracy[,val_loss,val_accuracy]`; validation
    /// columns appear only when every record has them.
    pub fn curves_csv(&self) -> String {
        let with_val = !self.is_empty()
            && self
                .records
                .iter()
                .all(|r| r.val_loss.is_some() && r.val_accuracy.is_some());
        let mut s = String::from("epoch,train_loss,train_accuracy");
        if with_val {
            s.push_str(",val_loss,val_accuracy");
        }
        s.push('\n');
        for r in &self.records {
            let _ = write!(s, "{},{:.4},{:.2}", r.epoch, r.train_loss, r.train_accuracy);
            if let (true, Some(vl), Some(va)) = (with_val, r.val_loss, r.val_accuracy) {
                let _ = write!(s, ",{vl:.4},{va:.2}");
            }
            s.push('\n');
        }
        s
    }
}

/// One progress line per epoch: `Epoch 1/10, Loss: 0.3250, Accuracy: 85.17%`.
pub fn epoch_line(epoch: usize, epochs: usize, loss: f64, accuracy_pct: f64) -> String {
    format!("Epoch {epoch}/{epochs}, Loss: {loss:.4}, Accuracy: {accuracy_pct:.2}%")
}

/// Writes `curves.csv` into `out_dir`.
pub fn export_curves(history: &TrainingHistory, out_dir: &Path) -> Result<PathBuf> {
    if history.is_empty() {
        return Err(Error::input("cannot export curves of an empty history"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join("curves.csv");
    std::fs::write(&path, history.curves_csv()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
