//! Zero-shot detection: an example is flagged when its most similar class
//! embedding is not the class it is labeled with.

use serde_json::json;

use super::{aggregate_tta_probs, Method, MislabelReport};
use crate::dataio::{EmbeddingTensor, LabelSet};
use crate::error::{Error, Result};
use crate::numerics::{argmax, cosine_similarity, Matrix};

/// `n x C` cosine similarities of one view to the class embeddings.
pub fn zero_shot_similarities(view: &Matrix, class_embeddings: &Matrix) -> Result<Matrix> {
    if view.cols() != class_embeddings.cols() {
        return Err(Error::invalid(format!(
            "embedding dimension {} does not match class embedding dimension {}",
            view.cols(),
            class_embeddings.cols()
        )));
    }
    let c = class_embeddings.rows();
    let mut s = Matrix::zeros(view.rows(), c);
    for i in 0..view.rows() {
        for k in 0..c {
            s.set(i, k, cosine_similarity(view.row(i), class_embeddings.row(k))?);
        }
    }
    Ok(s)
}

pub fn detect_zero_shot(x: &EmbeddingTensor, class_embeddings: &Matrix, y: &LabelSet, tta: bool) -> Result<MislabelReport> {
    if class_embeddings.rows() != y.num_classes() {
        return Err(Error::invalid(format!(
            "{} class embeddings for {} classes",
            class_embeddings.rows(),
            y.num_classes()
        )));
    }
    if x.n() != y.len() {
        return Err(Error::invalid(format!("{} embeddings but {} labels", x.n(), y.len())));
    }
    let views = if tta { x.num_views() } else { 1 };
    let per_view = (0..views)
        .map(|v| zero_shot_similarities(x.view(v), class_embeddings))
        .collect::<Result<Vec<_>>>()?;
    let s = aggregate_tta_probs(&per_view)?;
    let mut flags = Vec::with_capacity(y.len());
    let mut scores = Vec::with_capacity(y.len());
    for (i, row) in s.row_iter().enumerate() {
        let best = argmax(row);
        flags.push(best != y.get(i));
        scores.push(row[best] - row[y.get(i)]);
    }
    MislabelReport::new(Method::ZeroShot, flags, scores, json!({ "tta": tta, "views": views }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes() -> Matrix {
        Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap()
    }

    #[test]
    fn own_class_embedding_not_flagged() {
        let x = EmbeddingTensor::single(classes()).unwrap();
        let r = detect_zero_shot(&x, &classes(), &LabelSet::new(vec![0, 1, 2], 3).unwrap(), false).unwrap();
        assert_eq!(r.num_flagged(), 0);
        assert!(r.scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn wrong_label_scores_one() {
        let x = EmbeddingTensor::single(classes().select_rows(&[1])).unwrap();
        let r = detect_zero_shot(&x, &classes(), &LabelSet::new(vec![2], 3).unwrap(), false).unwrap();
        assert!(r.flags[0]);
        assert_eq!(r.scores[0], 1.0);
    }

    #[test]
    fn identical_views_equal_single_view() {
        let v = Matrix::from_rows(&[vec![0.3, 0.5, 0.1], vec![0.9, 0.2, 0.4]]).unwrap();
        let y = LabelSet::new(vec![0, 0], 3).unwrap();
        let single = detect_zero_shot(&EmbeddingTensor::single(v.clone()).unwrap(), &classes(), &y, false).unwrap();
        let multi = detect_zero_shot(&EmbeddingTensor::new(vec![v; 4]).unwrap(), &classes(), &y, true).unwrap();
        assert_eq!(single.flags, multi.flags);
        assert_eq!(single.scores, multi.scores);
    }

    #[test]
    fn zero_embedding_is_degenerate() {
        let x = EmbeddingTensor::single(Matrix::zeros(1, 3)).unwrap();
        let r = detect_zero_shot(&x, &classes(), &LabelSet::new(vec![0], 3).unwrap(), false);
        assert!(matches!(r, Err(Error::DegenerateInput(_))));
    }
}
