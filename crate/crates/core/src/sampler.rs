//! Deletion sequences: a class choice (uniform or targeted) followed by a
//! point choice within the class (random or largest norm first).

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetView, LabeledDataset};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeletionDistribution {
    UniformRandom,
    UniformInformed,
    TargetedRandom,
    TargetedInformed,
}

impl DeletionDistribution {
    pub const ALL: [Self; 4] =
        [Self::UniformRandom, Self::UniformInformed, Self::TargetedRandom, Self::TargetedInformed];

    pub fn is_targeted(self) -> bool {
        matches!(self, Self::TargetedRandom | Self::TargetedInformed)
    }

    pub fn is_informed(self) -> bool {
        matches!(self, Self::UniformInformed | Self::TargetedInformed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::UniformRandom => "uniform-random",
            Self::UniformInformed => "uniform-informed",
            Self::TargetedRandom => "targeted-random",
            Self::TargetedInformed => "targeted-informed",
        }
    }
}

impl fmt::Display for DeletionDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeletionDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown deletion distribution {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeletionSpec {
    pub distribution: DeletionDistribution,
    /// Share of the initial dataset to delete.
    pub fraction: f64,
    #[serde(default)]
    pub target_class: Option<u32>,
    #[serde(default)]
    pub seed: u64,
}

impl DeletionSpec {
    /// `⌊fraction · n_init⌋`.
    pub fn count(&self, n_init: usize) -> Result<usize> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!("fraction must be in (0, 1], got {}", self.fraction)));
        }
        // The slack keeps products such as (2/6)·6 from rounding down to 1.
        let m = (self.fraction * n_init as f64 + 1e-9).floor() as usize;
        if m == 0 {
            return Err(Error::InvalidConfig(format!("fraction {} of {n_init} points deletes nothing", self.fraction)));
        }
        Ok(m)
    }
}

/// Remaining members of one class, in the order points are taken from it.
struct ClassPool {
    members: Vec<usize>,
    informed: bool,
    next: usize,
}

impl ClassPool {
    fn available(&self) -> usize {
        self.members.len() - self.next
    }

    fn take(&mut self, rng: &mut rng::StreamRng) -> usize {
        if self.informed {
            self.next += 1;
            self.members[self.next - 1]
        } else {
            self.members.swap_remove(rng::below(rng, self.members.len()))
        }
    }
}

/// Members of `class` among `view`'s remaining points, by `(‖x‖ desc, id asc)`.
pub fn informed_order(ds: &LabeledDataset, view: &DatasetView, class: u32) -> Vec<usize> {
    let mut members: Vec<(f64, usize)> =
        view.remaining().iter().filter(|&&i| ds.label(i) == class).map(|&i| (ds.row_norm(i), i)).collect();
    members.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    members.into_iter().map(|(_, i)| i).collect()
}

/// Draws `⌊fraction · n_init⌋` distinct remaining ids in deletion order.
pub fn sample_deletions(ds: &LabeledDataset, view: &DatasetView, spec: &DeletionSpec) -> Result<Vec<usize>> {
    let m = spec.count(view.n_init())?;
    let k = ds.num_classes();
    if let Some(c) = spec.target_class {
        if c as usize >= k {
            return Err(Error::InvalidConfig(format!("target class {c} outside 0..{k}")));
        }
    }
    let mut rng = rng::stream(spec.seed);
    let informed = spec.distribution.is_informed();
    let mut pools: Vec<ClassPool> = (0..k as u32)
        .map(|c| ClassPool {
            members: if informed {
                informed_order(ds, view, c)
            } else {
                view.remaining().iter().copied().filter(|&i| ds.label(i) == c).collect()
            },
            informed,
            next: 0,
        })
        .collect();

    let mut out = Vec::with_capacity(m);
    if spec.distribution.is_targeted() {
        let class = match spec.target_class {
            Some(c) => c,
            None => rng::below(&mut rng, k) as u32,
        };
        let pool = &mut pools[class as usize];
        while out.len() < m {
            if pool.available() == 0 {
                return Err(Error::ClassExhausted { class, drawn: out.len(), requested: m });
            }
            out.push(pool.take(&mut rng));
        }
    } else {
        while out.len() < m {
            let mut class = rng::below(&mut rng, k);
            if pools[class].available() == 0 {
                let open: Vec<usize> = (0..k).filter(|&c| pools[c].available() > 0).collect();
                if open.is_empty() {
                    return Err(Error::ClassExhausted { class: class as u32, drawn: out.len(), requested: m });
                }
                class = open[rng::below(&mut rng, open.len())];
            }
            out.push(pools[class].take(&mut rng));
        }
    }
    Ok(out)
}

/// One id per line.
pub fn write_deletions<W: Write>(ids: &[usize], mut out: W) -> std::io::Result<()> {
    for id in ids {
        writeln!(out, "{id}")?;
    }
    Ok(())
}

pub fn read_deletions<R: BufRead>(input: R) -> Result<Vec<usize>> {
    let mut ids = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        ids.push(
            text.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("expected a point id, found {text:?}"),
            })?,
        );
    }
    Ok(ids)
}
