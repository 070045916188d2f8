//! Mislabel detectors and their common report type.
//!
//! * [`confident`]: confident learning on out-of-fold probe probabilities,
//!   optionally averaged over embedding views.
//! * [`knn`]: soft-label kNN voting over augmentation rounds.
//! * [`tracin`]: self-influence accumulated over SGD checkpoints of the probe.
//! * [`zeroshot`]: nearest class embedding by cosine similarity.
//!
//! Every detector returns a [`MislabelReport`]. Its CSV form has header
//! `index,flag,score,rank,method`, one row per example in index order; `flag`
//! is 0/1, `rank` is the 1-based position in the report's ranking and `score`
//! is printed in shortest round-trip form.

pub mod confident;
pub mod knn;
pub mod tracin;
pub mod zeroshot;

pub use confident::{
    calibrate_joint, cl_prune, cl_prune_with, compute_thresholds, confident_joint, confident_learning_from_proba,
    detect_confident_learning, ClassThresholds, ConfidentJoint, ConfidentLearning, JointDistribution, PruneMode,
};
pub use knn::{detect_knn, KnnConfig, KnnWeighting};
pub use tracin::{detect_tracin_linear, self_influence};
pub use zeroshot::{detect_zero_shot, zero_shot_similarities};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::{EmbeddingTensor, LabelSet};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};
use crate::probe::{train_sgd_with_checkpoints, SgdConfig, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "cl")]
    ConfidentLearning,
    #[serde(rename = "knn")]
    Knn,
    #[serde(rename = "tracin")]
    TracIn,
    #[serde(rename = "zeroshot")]
    ZeroShot,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::ConfidentLearning, Method::Knn, Method::TracIn, Method::ZeroShot];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::ConfidentLearning => "cl",
            Method::Knn => "knn",
            Method::TracIn => "tracin",
            Method::ZeroShot => "zeroshot",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cl" => Ok(Method::ConfidentLearning),
            "knn" => Ok(Method::Knn),
            "tracin" => Ok(Method::TracIn),
            "zeroshot" | "zero-shot" => Ok(Method::ZeroShot),
            other => Err(Error::invalid(format!("unknown method '{other}' (expected cl, knn, tracin or zeroshot)"))),
        }
    }
}

/// Per-example detector output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MislabelReport {
    pub method: Method,
    pub flags: Vec<bool>,
    /// Higher means more likely mislabeled.
    pub scores: Vec<f64>,
    /// Every index once: flagged examples first, each group by descending
    /// score, ties by index.
    pub ranking: Vec<usize>,
    pub params: serde_json::Value,
}

impl MislabelReport {
    pub fn new(method: Method, flags: Vec<bool>, scores: Vec<f64>, params: serde_json::Value) -> Result<Self> {
        if flags.len() != scores.len() {
            return Err(Error::invalid("flags and scores differ in length"));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::invalid("report scores contain NaN"));
        }
        let ranking = rank(&flags, &scores);
        Ok(Self {
            method,
            flags,
            scores,
            ranking,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn num_flagged(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn flagged_indices(&self) -> Vec<usize> {
        (0..self.flags.len()).filter(|&i| self.flags[i]).collect()
    }

    /// Examples not flagged, ascending.
    pub fn kept_indices(&self) -> Vec<usize> {
        (0..self.flags.len()).filter(|&i| !self.flags[i]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut rank_of = vec![0; self.len()];
        for (r, &i) in self.ranking.iter().enumerate() {
            rank_of[i] = r + 1;
        }
        let mut out = String::from("index,flag,score,rank,method\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{i},{},{},{},{}\n",
                u8::from(self.flags[i]),
                self.scores[i],
                rank_of[i],
                self.method
            ));
        }
        out
    }

    /// Parses the CSV form. `params` is not part of the table and comes back
    /// as `null`.
    pub fn from_csv(text: &str, path: Option<&Path>) -> Result<Self> {
        let err = |line: usize, msg: String| Error::format_at_line(path.map(Path::to_path_buf), line, msg);
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "index,flag,score,rank,method")) => {}
            _ => return Err(err(1, "expected header 'index,flag,score,rank,method'".into())),
        }
        let (mut flags, mut scores, mut ranks) = (Vec::new(), Vec::new(), Vec::new());
        let mut method = None;
        for (ln, line) in lines {
            let ln = ln + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(err(ln, format!("expected 5 fields, found {}", fields.len())));
            }
            if fields[0].parse::<usize>().ok() != Some(flags.len()) {
                return Err(err(ln, format!("expected index {}", flags.len())));
            }
            flags.push(match fields[1] {
                "0" => false,
                "1" => true,
                f => return Err(err(ln, format!("flag must be 0 or 1, found '{f}'"))),
            });
            let score: f64 = fields[2].parse().map_err(|_| err(ln, format!("bad score '{}'", fields[2])))?;
            scores.push(score);
            ranks.push(fields[3].parse::<usize>().map_err(|_| err(ln, format!("bad rank '{}'", fields[3])))?);
            let m: Method = fields[4].parse().map_err(|e: Error| err(ln, e.to_string()))?;
            if *method.get_or_insert(m) != m {
                return Err(err(ln, "mixed methods in one report".into()));
            }
        }
        let n = flags.len();
        let mut ranking = vec![usize::MAX; n];
        for (i, &r) in ranks.iter().enumerate() {
            if r == 0 || r > n || ranking[r - 1] != usize::MAX {
                return Err(err(i + 2, format!("rank {r} is not a unique position in 1..={n}")));
            }
            ranking[r - 1] = i;
        }
        Ok(Self {
            method: method.unwrap_or(Method::ConfidentLearning),
            flags,
            scores,
            ranking,
            params: serde_json::Value::Null,
        })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_csv(&std::fs::read_to_string(path)?, Some(path))
    }
}

/// Flagged first, then descending score, then ascending index.
fn rank(flags: &[bool], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..flags.len()).collect();
    order.sort_by(|&a, &b| {
        flags[b]
            .cmp(&flags[a])
            .then(scores[b].total_cmp(&scores[a]))
            .then(a.cmp(&b))
    });
    order
}

/// Element-wise mean of per-view probability matrices.
///
/// Computed as `P_0 + sum_v (P_v - P_0) / V` so identical views reproduce
/// `P_0` bit for bit.
pub fn aggregate_tta_probs(per_view: &[Matrix]) -> Result<Matrix> {
    let first = per_view.first().ok_or_else(|| Error::invalid("no views to aggregate"))?;
    if per_view.iter().any(|m| m.shape() != first.shape()) {
        return Err(Error::invalid("per-view probability matrices differ in shape"));
    }
    let v = per_view.len() as f64;
    let base = first.as_slice();
    let mut out = base.to_vec();
    for m in &per_view[1..] {
        for ((o, x), b) in out.iter_mut().zip(m.as_slice()).zip(base) {
            *o += (x - b) / v;
        }
    }
    Matrix::from_vec(first.rows(), first.cols(), out)
}

/// Everything any detector may need beyond the data itself.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorSettings {
    pub train: TrainConfig,
    pub tta: bool,
    pub mode: PruneMode,
    pub knn: KnnConfig,
    pub sgd: SgdConfig,
    /// `C x d` class embeddings for zero-shot detection.
    #[serde(skip)]
    pub class_embeddings: Option<Matrix>,
}

/// Stream of the SGD run behind self-influence, split from the training seed.
const SGD_STREAM: u64 = 0x7472_6163;

/// Runs one detector. TracIn flags as many examples as confident learning
/// does; pass a finished confident-learning run to reuse its flag count.
pub fn run_detector(
    method: Method,
    x: &EmbeddingTensor,
    y: &LabelSet,
    settings: &DetectorSettings,
    cl: Option<&ConfidentLearning>,
) -> Result<MislabelReport> {
    let run_cl = || detect_confident_learning(x, y, &settings.train, settings.tta, settings.mode);
    match method {
        Method::ConfidentLearning => match cl {
            Some(cl) => Ok(cl.report.clone()),
            None => Ok(run_cl()?.report),
        },
        Method::Knn => detect_knn(x, y, &settings.knn),
        Method::TracIn => {
            let flag_count = match cl {
                Some(cl) => cl.report.num_flagged(),
                None => run_cl()?.report.num_flagged(),
            };
            let mut rng = RngStream::new(settings.train.seed).split(SGD_STREAM);
            let sgd = SgdConfig {
                l2_lambda: settings.train.l2_lambda,
                ..settings.sgd.clone()
            };
            let trail = train_sgd_with_checkpoints(x.canonical(), y, &sgd, &mut rng)?;
            detect_tracin_linear(&trail, x.canonical(), y, flag_count)
        }
        Method::ZeroShot => {
            let classes = settings
                .class_embeddings
                .as_ref()
                .ok_or_else(|| Error::invalid("zero-shot detection needs class embeddings"))?;
            detect_zero_shot(x, classes, y, settings.tta)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_puts_flags_first() {
        let r = MislabelReport::new(
            Method::Knn,
            vec![false, true, false, true],
            vec![0.9, 0.2, 0.1, 0.7],
            serde_json::Value::Null,
        )
        .unwrap();
        assert_eq!(r.ranking, vec![3, 1, 0, 2]);
    }

    #[test]
    fn csv_round_trip() {
        let r = MislabelReport::new(
            Method::TracIn,
            vec![true, false, false],
            vec![0.123456789012345, 1e-300, 0.0],
            serde_json::Value::Null,
        )
        .unwrap();
        let text = r.to_csv();
        assert!(text.starts_with("index,flag,score,rank,method\n0,1,0.123456789012345,1,tracin\n"));
        assert_eq!(MislabelReport::from_csv(&text, None).unwrap(), r);
    }

    #[test]
    fn csv_rejects_duplicate_rank() {
        let text = "index,flag,score,rank,method\n0,0,0.1,1,cl\n1,0,0.2,1,cl\n";
        assert!(MislabelReport::from_csv(text, None).is_err());
    }

    #[test]
    fn tta_single_view_identity() {
        let p = Matrix::from_rows(&[vec![0.3, 0.7], vec![0.1, 0.9]]).unwrap();
        assert_eq!(aggregate_tta_probs(std::slice::from_ref(&p)).unwrap(), p);
        assert_eq!(aggregate_tta_probs(&vec![p.clone(); 21]).unwrap(), p);
    }

    #[test]
    fn tta_two_views_average() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert_eq!(aggregate_tta_probs(&[a, b]).unwrap().row(0), &[0.5, 0.5]);
    }

    #[test]
    fn tta_shape_mismatch() {
        assert!(aggregate_tta_probs(&[Matrix::zeros(2, 2), Matrix::zeros(3, 2)]).is_err());
        assert!(aggregate_tta_probs(&[]).is_err());
    }
}
