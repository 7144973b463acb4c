//! File-exclusive train/validation/test assignment targeting per-class
//! proportions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotations::Annotation;

const TIE_EPS: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("no annotations to split")]
    EmptyInput,
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("split targets must be non-negative and sum to 1, got {0:?}")]
    InvalidTargets([f64; 3]),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Validation,
    Test,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Train, Subset::Validation, Subset::Test];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Validation => "validation",
            Self::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitTargets {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitTargets {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitTargets {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }

    pub fn validate(&self) -> Result<(), SplitError> {
        let t = self.as_array();
        if t.iter().any(|v| !(*v >= 0.0)) || (t.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SplitError::InvalidTargets(t));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub assignment: BTreeMap<String, Subset>,
    /// Annotation counts per class, indexed by `Subset::index`.
    pub per_class_counts: BTreeMap<String, [usize; 3]>,
    pub warnings: Vec<String>,
}

impl SplitPlan {
    /// Sum over classes and subsets of |achieved fraction − target|.
    pub fn total_deviation(&self, targets: &SplitTargets) -> f64 {
        total_deviation(&self.per_class_counts, targets)
    }

    pub fn files_in(&self, subset: Subset) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, s)| **s == subset)
            .map(|(f, _)| f.as_str())
            .collect()
    }

    /// `split.csv`: one `source_id,subset` row per file.
    pub fn write_assignment_csv<W: Write>(&self, writer: W) -> Result<(), SplitError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["source_id", "subset"])?;
        for (file, subset) in &self.assignment {
            w.write_record([file.as_str(), &subset.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-class annotation counts and achieved fractions.
    pub fn write_counts_csv<W: Write>(&self, writer: W) -> Result<(), SplitError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "class",
            "train",
            "validation",
            "test",
            "total",
            "train_frac",
            "validation_frac",
            "test_frac",
        ])?;
        for (class, counts) in &self.per_class_counts {
            let total: usize = counts.iter().sum();
            let frac = |n: usize| format!("{:.4}", n as f64 / total.max(1) as f64);
            w.write_record([
                class.clone(),
                counts[0].to_string(),
                counts[1].to_string(),
                counts[2].to_string(),
                total.to_string(),
                frac(counts[0]),
                frac(counts[1]),
                frac(counts[2]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl std::str::FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subset::ALL
            .into_iter()
            .find(|x| x.to_string() == s.trim())
            .ok_or_else(|| format!("unknown subset {s:?}"))
    }
}

/// Read a `source_id,subset` file as written by
/// [`SplitPlan::write_assignment_csv`].
pub fn read_assignment_csv<R: Read>(reader: R) -> Result<BTreeMap<String, Subset>, SplitError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let (Some(id), Some(subset)) = (rec.get(0), rec.get(1)) else {
            return Err(SplitError::MalformedRow { line, reason: "expected 2 columns".into() });
        };
        let subset = subset
            .parse()
            .map_err(|reason| SplitError::MalformedRow { line, reason })?;
        out.insert(id.to_string(), subset);
    }
    Ok(out)
}

/// Unweighted deviation of achieved per-class fractions from the targets.
pub fn total_deviation(counts: &BTreeMap<String, [usize; 3]>, targets: &SplitTargets) -> f64 {
    let t = targets.as_array();
    counts
        .values()
        .map(|c| {
            let total: usize = c.iter().sum();
            if total == 0 {
                return 0.0;
            }
            (0..3)
                .map(|s| (c[s] as f64 / total as f64 - t[s]).abs())
                .sum::<f64>()
        })
        .sum()
}

struct FileStats {
    source_id: String,
    per_class: BTreeMap<String, usize>,
    total: usize,
}

/// Assign every annotated file to exactly one subset.
///
/// Files holding the rarest classes are placed first; each goes to the
/// subset that minimizes the summed per-class deviation from the targets,
/// with each class weighted by the inverse of its total count. Exact ties
/// are broken with the seeded RNG.
pub fn plan_split(
    annotations: &[Annotation],
    targets: &SplitTargets,
    seed: u64,
) -> Result<SplitPlan, SplitError> {
    targets.validate()?;
    if annotations.is_empty() {
        return Err(SplitError::EmptyInput);
    }

    let mut class_totals: BTreeMap<String, usize> = BTreeMap::new();
    let mut files: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut class_files: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for a in annotations {
        *class_totals.entry(a.label.clone()).or_default() += 1;
        *files
            .entry(a.source_id.clone())
            .or_default()
            .entry(a.label.clone())
            .or_default() += 1;
        class_files
            .entry(a.label.clone())
            .or_default()
            .insert(a.source_id.clone());
    }

    let mut order: Vec<FileStats> = files
        .into_iter()
        .map(|(source_id, per_class)| FileStats {
            total: per_class.values().sum(),
            source_id,
            per_class,
        })
        .collect();
    // (rarest class total, that class's count here) for each file
    let rarity = |f: &FileStats| -> (usize, std::cmp::Reverse<usize>) {
        f.per_class
            .iter()
            .map(|(c, n)| (class_totals[c], std::cmp::Reverse(*n)))
            .min()
            .expect("files have at least one annotation")
    };
    order.sort_by(|a, b| {
        rarity(a)
            .cmp(&rarity(b))
            .then(b.total.cmp(&a.total))
            .then(a.source_id.cmp(&b.source_id))
    });

    let t = targets.as_array();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<String, [usize; 3]> =
        class_totals.keys().map(|c| (c.clone(), [0; 3])).collect();
    let mut assignment = BTreeMap::new();

    for file in &order {
        let cost = |subset: usize| -> f64 {
            file.per_class
                .iter()
                .map(|(class, n)| {
                    let total = class_totals[class] as f64;
                    let mut c = counts[class];
                    c[subset] += n;
                    (0..3).map(|s| (c[s] as f64 / total - t[s]).abs()).sum::<f64>() / total
                })
                .sum()
        };
        let costs: Vec<f64> = (0..3).map(cost).collect();
        let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let tied: Vec<usize> = (0..3).filter(|&s| costs[s] - best <= TIE_EPS).collect();
        let chosen = if tied.len() == 1 {
            tied[0]
        } else {
            tied[rng.random_range(0..tied.len())]
        };
        for (class, n) in &file.per_class {
            counts.get_mut(class).expect("known class")[chosen] += n;
        }
        assignment.insert(file.source_id.clone(), Subset::ALL[chosen]);
    }

    let warnings = class_files
        .iter()
        .filter(|(_, f)| f.len() == 1)
        .map(|(class, f)| {
            let file = f.iter().next().expect("one file");
            format!(
                "class {class:?} occurs only in file {file:?}; all {} annotations placed in {}",
                class_totals[class], assignment[file]
            )
        })
        .collect();

    Ok(SplitPlan {
        assignment,
        per_class_counts: counts,
        warnings,
    })
}
