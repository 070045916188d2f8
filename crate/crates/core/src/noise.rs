//! Synthetic label noise and externally supplied noisy labels.
//!
//! Every injector keeps the clean labels and the ground-truth mask of changed
//! labels. By default each example is selected independently with probability
//! `rate`; with `exact_count` exactly `floor(rate * n)` examples are selected
//! without replacement.
//!
//! Asymmetric noise first draws a class map `m` with `m[i] != i` (not
//! necessarily a permutation) from a stream that depends only on the seed, so
//! the map is the same for any `n`. Confidence-based noise trains a probe
//! in-sample on the clean labels and moves a selected example to its
//! highest-probability incorrect class.

use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{read_labels, EmbeddingTensor, LabelSet};
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::probe::{train_probe, TrainConfig};

const MAP_STREAM: u64 = 0x006d_6170;
const SELECT_STREAM: u64 = 0x0073_656c;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Symmetric,
    Asymmetric,
    ConfidenceBased,
    ExternalFile,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "symmetric" => Ok(Self::Symmetric),
            "asymmetric" => Ok(Self::Asymmetric),
            "confidence_based" | "confidence" => Ok(Self::ConfidenceBased),
            "external_file" | "external" => Ok(Self::ExternalFile),
            other => Err(Error::invalid(format!("unknown noise kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Probability of changing a label; for external files, the observed
    /// disagreement rate.
    pub rate: f64,
    pub seed: u64,
    /// Class map of asymmetric noise, filled in by the injector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asym_map: Option<Vec<usize>>,
    #[serde(default)]
    pub exact_count: bool,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, rate: f64, seed: u64) -> Self {
        Self {
            kind,
            rate,
            seed,
            asym_map: None,
            exact_count: false,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::invalid(format!("noise rate {} is outside [0, 1]", self.rate)));
        }
        if let Some(m) = &self.asym_map {
            if self.kind != NoiseKind::Asymmetric {
                return Err(Error::invalid("asym_map is only meaningful for asymmetric noise"));
            }
            if m.len() != num_classes {
                return Err(Error::invalid(format!(
                    "asym_map has {} entries for {num_classes} classes",
                    m.len()
                )));
            }
            if let Some(i) = (0..m.len()).find(|&i| m[i] == i || m[i] >= num_classes) {
                return Err(Error::invalid(format!("asym_map[{i}] = {} is not another class", m[i])));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseResult {
    pub noisy: LabelSet,
    pub clean: LabelSet,
    /// `mask[i]` is true iff the label of example `i` was changed.
    pub mask: Vec<bool>,
    pub spec: NoiseSpec,
}

impl NoiseResult {
    fn from_labels(noisy: LabelSet, clean: LabelSet, spec: NoiseSpec) -> Self {
        let mask = noisy.as_slice().iter().zip(clean.as_slice()).map(|(a, b)| a != b).collect();
        Self { noisy, clean, mask, spec }
    }

    pub fn num_changed(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn observed_rate(&self) -> f64 {
        self.num_changed() as f64 / self.mask.len().max(1) as f64
    }
}

fn check_classes(clean: &LabelSet) -> Result<usize> {
    let c = clean.num_classes();
    if c < 2 {
        return Err(Error::invalid("noise injection needs at least 2 classes"));
    }
    Ok(c)
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("noise rate {rate} is outside [0, 1]")));
    }
    Ok(())
}

/// Examples chosen for corruption.
fn select(n: usize, rate: f64, exact_count: bool, rng: &mut RngStream) -> Vec<bool> {
    let mut chosen = vec![false; n];
    if exact_count {
        let k = ((rate * n as f64).floor() as usize).min(n);
        for i in index::sample(rng, n, k) {
            chosen[i] = true;
        }
    } else {
        for c in chosen.iter_mut() {
            *c = rng.random::<f64>() < rate;
        }
    }
    chosen
}

fn other_class(y: usize, c: usize, rng: &mut RngStream) -> usize {
    let r = rng.random_range(0..c - 1);
    if r >= y {
        r + 1
    } else {
        r
    }
}

/// Draws the asymmetric class map for `seed`; depends on nothing else.
pub fn asymmetric_map(num_classes: usize, seed: u64) -> Vec<usize> {
    let mut rng = RngStream::new(seed).split(MAP_STREAM);
    (0..num_classes).map(|i| other_class(i, num_classes, &mut rng)).collect()
}

fn symmetric(clean: &LabelSet, chosen: &[bool], rng: &mut RngStream) -> Result<LabelSet> {
    let c = clean.num_classes();
    let labels = clean
        .as_slice()
        .iter()
        .zip(chosen)
        .map(|(&y, &pick)| if pick { other_class(y, c, rng) } else { y })
        .collect();
    LabelSet::new(labels, c)
}

/// Symmetric noise with Bernoulli selection.
pub fn inject_symmetric(clean: &LabelSet, rate: f64, rng: &mut RngStream) -> Result<NoiseResult> {
    check_classes(clean)?;
    check_rate(rate)?;
    let chosen = select(clean.len(), rate, false, rng);
    let noisy = symmetric(clean, &chosen, rng)?;
    let spec = NoiseSpec::new(NoiseKind::Symmetric, rate, rng.seed());
    Ok(NoiseResult::from_labels(noisy, clean.clone(), spec))
}

/// Asymmetric noise with Bernoulli selection. The map comes from `rng`'s seed.
pub fn inject_asymmetric(clean: &LabelSet, rate: f64, rng: &mut RngStream) -> Result<NoiseResult> {
    check_classes(clean)?;
    check_rate(rate)?;
    let chosen = select(clean.len(), rate, false, rng);
    Ok(asymmetric(clean, &chosen, rate, rng.seed()))
}

fn asymmetric(clean: &LabelSet, chosen: &[bool], rate: f64, seed: u64) -> NoiseResult {
    let map = asymmetric_map(clean.num_classes(), seed);
    let labels = clean
        .as_slice()
        .iter()
        .zip(chosen)
        .map(|(&y, &pick)| if pick { map[y] } else { y })
        .collect();
    let noisy = LabelSet::new(labels, clean.num_classes()).expect("mapped labels stay in range");
    let mut spec = NoiseSpec::new(NoiseKind::Asymmetric, rate, seed);
    spec.asym_map = Some(map);
    NoiseResult::from_labels(noisy, clean.clone(), spec)
}

/// Confidence-based noise with Bernoulli selection, using the canonical view.
pub fn inject_confidence_based(
    x: &EmbeddingTensor,
    clean: &LabelSet,
    rate: f64,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<NoiseResult> {
    check_classes(clean)?;
    check_rate(rate)?;
    let chosen = select(clean.len(), rate, false, rng);
    confidence_based(x, clean, &chosen, rate, cfg, rng.seed())
}

fn confidence_based(
    x: &EmbeddingTensor,
    clean: &LabelSet,
    chosen: &[bool],
    rate: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<NoiseResult> {
    if x.n() != clean.len() {
        return Err(Error::invalid(format!("{} embeddings but {} labels", x.n(), clean.len())));
    }
    let spec = NoiseSpec::new(NoiseKind::ConfidenceBased, rate, seed);
    if !chosen.iter().any(|&c| c) {
        return Ok(NoiseResult::from_labels(clean.clone(), clean.clone(), spec));
    }
    let model = train_probe(x.canonical(), clean, cfg)?;
    let p = model.predict_proba(x.canonical())?;
    let labels = clean
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            if !chosen[i] {
                return y;
            }
            let row = p.row(i);
            (0..row.len())
                .filter(|&c| c != y)
                .fold(None, |best: Option<usize>, c| match best {
                    Some(b) if row[b] >= row[c] => Some(b),
                    _ => Some(c),
                })
                .expect("at least two classes")
        })
        .collect();
    Ok(NoiseResult::from_labels(LabelSet::new(labels, clean.num_classes())?, clean.clone(), spec))
}

/// Runs the injector described by `spec` with an RNG seeded from `spec.seed`.
/// `x` is required for confidence-based noise.
pub fn inject(spec: &NoiseSpec, clean: &LabelSet, x: Option<&EmbeddingTensor>, cfg: &TrainConfig) -> Result<NoiseResult> {
    let c = check_classes(clean)?;
    check_rate(spec.rate)?;
    spec.validate(c)?;
    let mut rng = RngStream::new(spec.seed).split(SELECT_STREAM);
    let chosen = select(clean.len(), spec.rate, spec.exact_count, &mut rng);
    let mut result = match spec.kind {
        NoiseKind::Symmetric => {
            let noisy = symmetric(clean, &chosen, &mut rng)?;
            NoiseResult::from_labels(noisy, clean.clone(), spec.clone())
        }
        NoiseKind::Asymmetric => asymmetric(clean, &chosen, spec.rate, spec.seed),
        NoiseKind::ConfidenceBased => {
            let x = x.ok_or_else(|| Error::invalid("confidence-based noise needs embeddings"))?;
            confidence_based(x, clean, &chosen, spec.rate, cfg, spec.seed)?
        }
        NoiseKind::ExternalFile => {
            return Err(Error::invalid("external noise is loaded with load_external_labels"))
        }
    };
    result.spec.exact_count = spec.exact_count;
    Ok(result)
}

/// Pairs externally supplied labels with the clean ones.
pub fn external_noise(noisy: LabelSet, clean: &LabelSet) -> Result<NoiseResult> {
    if noisy.len() != clean.len() {
        return Err(Error::invalid(format!(
            "noisy labels hold {} rows but clean labels hold {}",
            noisy.len(),
            clean.len()
        )));
    }
    if noisy.num_classes() != clean.num_classes() {
        return Err(Error::invalid("noisy and clean labels disagree on the class count"));
    }
    let mut r = NoiseResult::from_labels(noisy, clean.clone(), NoiseSpec::new(NoiseKind::ExternalFile, 0.0, 0));
    r.spec.rate = r.observed_rate();
    Ok(r)
}

/// Reads noisy labels (for example a human re-annotation) from a labels file.
pub fn load_external_labels(path: impl AsRef<Path>, clean: &LabelSet) -> Result<NoiseResult> {
    let path = path.as_ref();
    let noisy = read_labels(path, clean.num_classes())?;
    if noisy.len() != clean.len() {
        return Err(Error::Format {
            path: Some(path.to_path_buf()),
            offset: None,
            line: None,
            message: format!("file holds {} labels, expected {}", noisy.len(), clean.len()),
        });
    }
    external_noise(noisy, clean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::write_labels;
    use crate::numerics::Matrix;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn balanced(n: usize, c: usize) -> LabelSet {
        LabelSet::new((0..n).map(|i| i % c).collect(), c).unwrap()
    }

    fn mask_matches(r: &NoiseResult) -> bool {
        (0..r.mask.len()).all(|i| r.mask[i] == (r.noisy.get(i) != r.clean.get(i)))
    }

    #[test]
    fn zero_rate_is_identity() {
        let y = balanced(100, 4);
        let mut rng = RngStream::new(1);
        for r in [
            inject_symmetric(&y, 0.0, &mut rng).unwrap(),
            inject_asymmetric(&y, 0.0, &mut rng).unwrap(),
        ] {
            assert_eq!(r.noisy, y);
            assert!(r.mask.iter().all(|m| !m));
        }
    }

    #[test]
    fn full_rate_two_classes_flips_everything() {
        let y = balanced(50, 2);
        let r = inject_symmetric(&y, 1.0, &mut RngStream::new(2)).unwrap();
        assert!(r.mask.iter().all(|&m| m));
        assert!((0..50).all(|i| r.noisy.get(i) == 1 - y.get(i)));
    }

    #[test]
    fn symmetric_rate_concentrates() {
        let y = balanced(10_000, 10);
        let r = inject_symmetric(&y, 0.3, &mut RngStream::new(3)).unwrap();
        assert!((0.28..=0.32).contains(&r.observed_rate()), "{}", r.observed_rate());
        assert!(mask_matches(&r));
    }

    #[test]
    fn asymmetric_full_rate_follows_map() {
        let y = balanced(30, 3);
        let r = inject_asymmetric(&y, 1.0, &mut RngStream::new(4)).unwrap();
        let map = r.spec.asym_map.clone().unwrap();
        assert!((0..3).all(|i| map[i] != i));
        let mut pairs: Vec<(usize, usize)> = (0..30).map(|i| (y.get(i), r.noisy.get(i))).collect();
        pairs.sort();
        pairs.dedup();
        assert_eq!(pairs, (0..3).map(|i| (i, map[i])).collect::<Vec<_>>());
    }

    #[test]
    fn asymmetric_per_class_rate() {
        let y = balanced(9000, 3);
        let r = inject_asymmetric(&y, 0.3, &mut RngStream::new(5)).unwrap();
        for c in 0..3 {
            let members: Vec<usize> = (0..9000).filter(|&i| y.get(i) == c).collect();
            let frac = members.iter().filter(|&&i| r.mask[i]).count() as f64 / members.len() as f64;
            assert!((0.26..=0.34).contains(&frac), "class {c}: {frac}");
        }
    }

    #[test]
    fn asymmetric_map_ignores_n() {
        let a = inject_asymmetric(&balanced(10, 5), 0.5, &mut RngStream::new(6)).unwrap();
        let b = inject_asymmetric(&balanced(1000, 5), 0.5, &mut RngStream::new(6)).unwrap();
        assert_eq!(a.spec.asym_map, b.spec.asym_map);
    }

    #[test]
    fn exact_count_selects_floor() {
        let y = balanced(97, 3);
        let mut spec = NoiseSpec::new(NoiseKind::Symmetric, 0.25, 8);
        spec.exact_count = true;
        let r = inject(&spec, &y, None, &TrainConfig::default()).unwrap();
        assert_eq!(r.num_changed(), 24);
        assert!(r.spec.exact_count);
    }

    #[test]
    fn same_seed_same_result() {
        let y = balanced(500, 7);
        for kind in [NoiseKind::Symmetric, NoiseKind::Asymmetric] {
            let spec = NoiseSpec::new(kind, 0.4, 9);
            let a = inject(&spec, &y, None, &TrainConfig::default()).unwrap();
            let b = inject(&spec, &y, None, &TrainConfig::default()).unwrap();
            assert_eq!(a, b);
        }
    }

    fn three_clusters(n: usize, rng: &mut RngStream) -> (EmbeddingTensor, LabelSet) {
        // A and B sit close together, C far away.
        let centers = [[0.0, 0.0], [2.0, 0.0], [0.0, 12.0]];
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&c| centers[c].iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        (
            EmbeddingTensor::single(Matrix::from_rows(&rows).unwrap()).unwrap(),
            LabelSet::new(labels, 3).unwrap(),
        )
    }

    #[test]
    fn confidence_noise_follows_geometry() {
        let mut rng = RngStream::new(10);
        let (x, y) = three_clusters(3000, &mut rng);
        let r = inject_confidence_based(&x, &y, 0.5, &TrainConfig::default(), &mut rng).unwrap();
        assert!(mask_matches(&r));
        let to_b = (0..3000).filter(|&i| y.get(i) == 0 && r.noisy.get(i) == 1).count();
        let to_c = (0..3000).filter(|&i| y.get(i) == 0 && r.noisy.get(i) == 2).count();
        assert!(to_b > 3 * to_c.max(1), "A->B {to_b}, A->C {to_c}");
    }

    #[test]
    fn confidence_noise_edge_rates() {
        let mut rng = RngStream::new(11);
        let (x, y) = three_clusters(60, &mut rng);
        let r = inject_confidence_based(&x, &y, 0.0, &TrainConfig::default(), &mut rng).unwrap();
        assert_eq!(r.noisy, y);
        let y2 = LabelSet::new((0..60).map(|i| i % 2).collect(), 2).unwrap();
        let r = inject_confidence_based(&x, &y2, 1.0, &TrainConfig::default(), &mut rng).unwrap();
        assert!(r.mask.iter().all(|&m| m));
    }

    #[test]
    fn external_labels_observed_rate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("noisy.labels");
        let clean = balanced(10, 2);
        write_labels(&path, &clean).unwrap();
        let r = load_external_labels(&path, &clean).unwrap();
        assert_eq!(r.observed_rate(), 0.0);
        assert_eq!(r.spec.kind, NoiseKind::ExternalFile);

        let mut noisy = clean.as_slice().to_vec();
        for i in [1, 4, 7] {
            noisy[i] = 1 - noisy[i];
        }
        write_labels(&path, &LabelSet::new(noisy, 2).unwrap()).unwrap();
        assert_eq!(load_external_labels(&path, &clean).unwrap().spec.rate, 0.3);
    }

    #[test]
    fn external_labels_human_rate() {
        // 1723 of 10000 labels disagree with the clean set.
        let clean = balanced(10_000, 10);
        let noisy: Vec<usize> = (0..10_000).map(|i| if i % 10_000 < 1723 { (i + 1) % 10 } else { i % 10 }).collect();
        let r = external_noise(LabelSet::new(noisy, 10).unwrap(), &clean).unwrap();
        assert!((r.spec.rate - 0.1723).abs() < 1e-12);
    }

    #[test]
    fn external_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.labels");
        write_labels(&path, &balanced(9, 2)).unwrap();
        assert!(matches!(load_external_labels(&path, &balanced(10, 2)), Err(Error::Format { .. })));
    }

    #[test]
    fn rejects_bad_specs() {
        let y = balanced(10, 2);
        assert!(inject_symmetric(&y, 1.5, &mut RngStream::new(0)).is_err());
        assert!(inject_symmetric(&LabelSet::new(vec![0; 4], 1).unwrap(), 0.1, &mut RngStream::new(0)).is_err());
        let mut spec = NoiseSpec::new(NoiseKind::Asymmetric, 0.1, 0);
        spec.asym_map = Some(vec![0, 1]);
        assert!(spec.validate(2).is_err());
    }

    proptest! {
        #[test]
        fn mask_equals_disagreement(seed in any::<u64>(), rate in 0.0f64..=1.0, c in 2usize..6, n in 1usize..200, asym in any::<bool>()) {
            let y = balanced(n, c);
            let kind = if asym { NoiseKind::Asymmetric } else { NoiseKind::Symmetric };
            let r = inject(&NoiseSpec::new(kind, rate, seed), &y, None, &TrainConfig::default()).unwrap();
            prop_assert!(mask_matches(&r));
            prop_assert_eq!(r.mask.len(), n);
        }
    }
}
