//! Synthetic scale-generalization task: classes are defined by relations
//! between atoms (count, frequency order) that survive dilation, so a model
//! trained on some scales can in principle classify any other.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::signal::{sample_signal_periodic, GaborAtom, SignalModel};
use crate::error::{Error, Result};
use crate::group::GroupElement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Test => 3,
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    /// One prototype per class, centred near 0 at unit scale.
    pub templates: Vec<SignalModel>,
    pub len: usize,
    pub train_scales: Vec<f64>,
    pub val_scales: Vec<f64>,
    pub test_scales: Vec<f64>,
    /// `None` means noiseless.
    pub snr_db: Option<f64>,
    /// Examples per class in train / val / test.
    pub per_class: [usize; 3],
    /// Multiplicative amplitude jitter, uniform in `1 ± jitter`.
    pub amplitude_jitter: f64,
    /// Atom phase jitter, uniform in `±phase_jitter` radians.
    pub phase_jitter: f64,
}

fn atom(center: f64, frequency: f64, width: f64) -> GaborAtom {
    GaborAtom {
        amplitude: 1.0,
        center,
        width,
        frequency,
        phase: 0.0,
    }
}

impl SyntheticTask {
    /// Four classes on 512 samples: a single burst, two equal bursts, a
    /// low→high pair and a high→low pair. Train on scales {1, 2}, test on 4.
    pub fn desk() -> Self {
        // the low atom is the high atom dilated by 2
        let hi = |c| atom(c, 1.0 / 16.0, 6.0);
        let lo = |c| atom(c, 1.0 / 32.0, 12.0);
        let templates = vec![
            vec![hi(0.0)],
            vec![hi(-18.0), hi(18.0)],
            vec![lo(-18.0), hi(18.0)],
            vec![hi(-18.0), lo(18.0)],
        ]
        .into_iter()
        .map(SignalModel::new)
        .collect();
        SyntheticTask {
            templates,
            len: 512,
            train_scales: vec![1.0, 2.0],
            val_scales: vec![1.0, 2.0],
            test_scales: vec![4.0],
            snr_db: Some(20.0),
            per_class: [64, 16, 32],
            amplitude_jitter: 0.2,
            phase_jitter: 0.5,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.templates.len()
    }

    pub fn scales(&self, split: Split) -> &[f64] {
        match split {
            Split::Train => &self.train_scales,
            Split::Val => &self.val_scales,
            Split::Test => &self.test_scales,
        }
    }

    fn count(&self, split: Split) -> usize {
        self.per_class[split.stream() as usize - 1] * self.num_classes()
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.len() < 2 {
            return Err(Error::config("templates", "need at least 2 classes"));
        }
        for split in Split::ALL {
            let s = self.scales(split);
            if s.is_empty() && self.count(split) > 0 {
                return Err(Error::config(format!("{split}_scales"), "empty scale set"));
            }
            if let Some(bad) = s.iter().find(|&&v| !(v > 0.0)) {
                return Err(Error::config(format!("{split}_scales"), format!("non-positive scale {bad}")));
            }
        }
        if self.len == 0 {
            return Err(Error::config("len", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub samples: Vec<f64>,
    pub label: usize,
    pub t0: f64,
    pub s0: f64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskData {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

impl TaskData {
    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

fn jittered(task: &SyntheticTask, label: usize, rng: &mut ChaCha8Rng) -> SignalModel {
    let mut m = task.templates[label].clone();
    let gain = 1.0 + rng.random_range(-1.0..=1.0) * task.amplitude_jitter;
    for a in &mut m.atoms {
        a.amplitude *= gain;
        a.phase += rng.random_range(-1.0..=1.0) * task.phase_jitter;
    }
    m
}

fn make_example(task: &SyntheticTask, seed: u64, split: Split, index: usize) -> Result<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(split.stream() << 32 | index as u64);
    let label = index % task.num_classes();
    let scales = task.scales(split);
    // cycle scales within each class block so every (class, scale) pair is balanced
    let s0 = scales[(index / task.num_classes()) % scales.len()];
    let t0 = rng.random_range(0.0..task.len as f64).floor();
    let model = jittered(task, label, &mut rng).transformed(GroupElement::new(t0, s0)?);
    let mut samples = sample_signal_periodic(&model, task.len)?;
    if let Some(snr) = task.snr_db {
        let power = samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64;
        let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::config("snr_db", e.to_string()))?;
        for v in &mut samples {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(Example {
        samples,
        label,
        t0,
        s0,
        split,
    })
}

/// Deterministic given `seed`; every example draws from its own ChaCha
/// stream so generation order (and thread count) does not matter.
pub fn generate_task(task: &SyntheticTask, seed: u64) -> Result<TaskData> {
    task.validate()?;
    let gen = |split: Split| -> Result<Vec<Example>> {
        (0..task.count(split))
            .into_par_iter()
            .map(|i| make_example(task, seed, split, i))
            .collect()
    };
    Ok(TaskData {
        train: gen(Split::Train)?,
        val: gen(Split::Val)?,
        test: gen(Split::Test)?,
    })
}

/// One JSON record per line with inline samples.
pub fn write_manifest(path: &Path, data: &TaskData) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for split in Split::ALL {
        for ex in data.split(split) {
            serde_json::to_writer(&mut w, ex).map_err(|e| Error::Io(e.into()))?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<TaskData> {
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut data = TaskData::default();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(&line).map_err(|e| Error::Io(e.into()))?;
        match ex.split {
            Split::Train => data.train.push(ex),
            Split::Val => data.val.push(ex),
            Split::Test => data.test.push(ex),
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticTask {
        SyntheticTask {
            templates: SyntheticTask::desk().templates[..2].to_vec(),
            per_class: [8, 2, 4],
            ..SyntheticTask::desk()
        }
    }

    #[test]
    fn rerun_is_identical() {
        let a = generate_task(&small(), 9).unwrap();
        let b = generate_task(&small(), 9).unwrap();
        let bytes = |d: &TaskData| serde_json::to_vec(d).unwrap();
        assert_eq!(bytes(&a), bytes(&b));
        assert_ne!(bytes(&a), bytes(&generate_task(&small(), 10).unwrap()));
    }

    #[test]
    fn test_split_uses_only_test_scales() {
        let d = generate_task(&SyntheticTask::desk(), 1).unwrap();
        assert!(d.test.iter().all(|e| e.s0 == 4.0));
        assert!(d.train.iter().all(|e| e.s0 == 1.0 || e.s0 == 2.0));
    }

    #[test]
    fn classes_are_balanced() {
        let t = SyntheticTask {
            per_class: [7, 3, 5],
            ..SyntheticTask::desk()
        };
        let d = generate_task(&t, 2).unwrap();
        for split in Split::ALL {
            let mut counts = vec![0i64; 4];
            for e in d.split(split) {
                counts[e.label] += 1;
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{split}: {counts:?}");
        }
    }

    #[test]
    fn noiseless_examples_are_pure_transformed_templates() {
        let t = SyntheticTask {
            snr_db: None,
            amplitude_jitter: 0.0,
            phase_jitter: 0.0,
            ..small()
        };
        let d = generate_task(&t, 3).unwrap();
        for e in d.train.iter().chain(&d.test) {
            let m = t.templates[e.label].transformed(GroupElement::new(e.t0, e.s0).unwrap());
            assert_eq!(e.samples, sample_signal_periodic(&m, t.len).unwrap());
        }
    }

    #[test]
    fn snr_is_respected() {
        let t = SyntheticTask {
            snr_db: Some(10.0),
            ..small()
        };
        let clean = generate_task(&SyntheticTask { snr_db: None, ..t.clone() }, 4).unwrap();
        let noisy = generate_task(&t, 4).unwrap();
        let (mut ps, mut pn) = (0.0, 0.0);
        for (c, n) in clean.train.iter().zip(&noisy.train) {
            for (a, b) in c.samples.iter().zip(&n.samples) {
                ps += a * a;
                pn += (b - a) * (b - a);
            }
        }
        let snr = 10.0 * (ps / pn).log10();
        assert!((snr - 10.0).abs() < 0.5, "{snr}");
    }

    #[test]
    fn validation() {
        let mut t = small();
        t.test_scales.clear();
        assert!(matches!(generate_task(&t, 0), Err(Error::Config { .. })));
        let mut one = small();
        one.templates.truncate(1);
        assert!(generate_task(&one, 0).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let d = generate_task(&small(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.jsonl");
        write_manifest(&p, &d).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), d);
    }
}
