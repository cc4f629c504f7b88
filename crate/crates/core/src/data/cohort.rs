use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{build_node_features, ConnectivityMatrix, NodeFeatureMatrix};
use crate::error::{HscfError, Result};

/// Disease stage label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "NC")]
    Nc,
    #[serde(rename = "EMCI")]
    Emci,
    #[serde(rename = "LMCI")]
    Lmci,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Nc, Stage::Emci, Stage::Lmci];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Nc => "NC",
            Stage::Emci => "EMCI",
            Stage::Lmci => "LMCI",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "NC" => Ok(Stage::Nc),
            "EMCI" => Ok(Stage::Emci),
            "LMCI" => Ok(Stage::Lmci),
            other => Err(other.to_string()),
        }
    }
}

/// Binary classification task between two adjacent stages. Class index 0 is
/// the earlier stage, index 1 (the positive class) the later one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "nc-emci")]
    NcVsEmci,
    #[serde(rename = "emci-lmci")]
    EmciVsLmci,
}

impl Task {
    pub fn earlier(self) -> Stage {
        match self {
            Task::NcVsEmci => Stage::Nc,
            Task::EmciVsLmci => Stage::Emci,
        }
    }

    pub fn later(self) -> Stage {
        match self {
            Task::NcVsEmci => Stage::Emci,
            Task::EmciVsLmci => Stage::Lmci,
        }
    }

    /// Class index of `stage` within this task, if it belongs to it.
    pub fn class_index(self, stage: Stage) -> Option<usize> {
        if stage == self.earlier() {
            Some(0)
        } else if stage == self.later() {
            Some(1)
        } else {
            None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::NcVsEmci => "nc-emci",
            Task::EmciVsLmci => "emci-lmci",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = HscfError;

    fn from_str(s: &str) -> Result<Self> {
        match s
            .to_ascii_lowercase()
            .replace("-vs-", "-")
            .replace('_', "-")
            .as_str()
        {
            "nc-emci" => Ok(Task::NcVsEmci),
            "emci-lmci" => Ok(Task::EmciVsLmci),
            _ => Err(HscfError::InvalidArgument(format!(
                "unknown task {s:?} (expected nc-emci or emci-lmci)"
            ))),
        }
    }
}

/// ROI names, one per node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoiAtlas {
    names: Vec<String>,
}

const AAL90_REGIONS: [&str; 45] = [
    "PreCG",
    "SFGdor",
    "ORBsup",
    "MFG",
    "ORBmid",
    "IFGoperc",
    "IFGtriang",
    "ORBinf",
    "ROL",
    "SMA",
    "OLF",
    "SFGmed",
    "ORBsupmed",
    "REC",
    "INS",
    "ACG",
    "DCG",
    "PCG",
    "HIP",
    "PHG",
    "AMYG",
    "CAL",
    "CUN",
    "LING",
    "SOG",
    "MOG",
    "IOG",
    "FFG",
    "PoCG",
    "SPG",
    "IPL",
    "SMG",
    "ANG",
    "PCUN",
    "PCL",
    "CAU",
    "PUT",
    "PAL",
    "THA",
    "HES",
    "STG",
    "TPOsup",
    "MTG",
    "TPOmid",
    "ITG",
];

impl RoiAtlas {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let unique: HashSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(HscfError::InvalidArgument(
                "atlas names must be unique".into(),
            ));
        }
        if names.is_empty() {
            return Err(HscfError::InvalidArgument("atlas is empty".into()));
        }
        Ok(RoiAtlas { names })
    }

    /// The 90 cortical and subcortical AAL regions, left/right interleaved.
    pub fn aal90() -> Self {
        let names = AAL90_REGIONS
            .iter()
            .flat_map(|r| [format!("{r}.L"), format!("{r}.R")])
            .collect();
        RoiAtlas { names }
    }

    /// AAL-90 when `n == 90`, otherwise `ROI000`, `ROI001`, ...
    pub fn default_for(n: usize) -> Self {
        if n == 90 {
            Self::aal90()
        } else {
            RoiAtlas {
                names: (0..n).map(|i| format!("ROI{i:03}")).collect(),
            }
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub id: String,
    pub label: Stage,
    pub sc: ConnectivityMatrix,
    pub fc: ConnectivityMatrix,
    pub volumes: Vec<f64>,
}

impl Subject {
    pub fn new(
        id: impl Into<String>,
        label: Stage,
        sc: ConnectivityMatrix,
        fc: ConnectivityMatrix,
        volumes: Vec<f64>,
    ) -> Result<Self> {
        let subject = Subject {
            id: id.into(),
            label,
            sc,
            fc,
            volumes,
        };
        subject.validate()?;
        Ok(subject)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sc.n_rois();
        if self.fc.n_rois() != n || self.volumes.len() != n {
            return Err(HscfError::Malformed {
                subject: self.id.clone(),
                detail: format!(
                    "sc has {n} ROIs, fc has {}, volumes has {}",
                    self.fc.n_rois(),
                    self.volumes.len()
                ),
            });
        }
        for (i, &v) in self.volumes.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HscfError::InvalidVolume {
                    subject: self.id.clone(),
                    index: i,
                    value: v,
                });
            }
        }
        Ok(())
    }

    pub fn n_rois(&self) -> usize {
        self.sc.n_rois()
    }

    pub fn node_features(&self) -> NodeFeatureMatrix {
        build_node_features(&self.volumes).expect("volumes validated at construction")
    }

    /// Jointly relabels ROIs: new ROI `i` is old ROI `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Subject {
        Subject {
            id: self.id.clone(),
            label: self.label,
            sc: self.sc.permuted(perm),
            fc: self.fc.permuted(perm),
            volumes: perm.iter().map(|&p| self.volumes[p]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub atlas: RoiAtlas,
    pub subjects: Vec<Subject>,
}

impl Cohort {
    pub fn new(atlas: RoiAtlas, subjects: Vec<Subject>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &subjects {
            if s.n_rois() != atlas.len() {
                return Err(HscfError::Malformed {
                    subject: s.id.clone(),
                    detail: format!("has {} ROIs but the atlas has {}", s.n_rois(), atlas.len()),
                });
            }
            if !seen.insert(s.id.as_str()) {
                return Err(HscfError::Malformed {
                    subject: s.id.clone(),
                    detail: "duplicate subject id".into(),
                });
            }
        }
        Ok(Cohort { atlas, subjects })
    }

    pub fn n_rois(&self) -> usize {
        self.atlas.len()
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn of_stage(&self, stage: Stage) -> impl Iterator<Item = &Subject> {
        self.subjects.iter().filter(move |s| s.label == stage)
    }

    pub fn count(&self, stage: Stage) -> usize {
        self.of_stage(stage).count()
    }

    /// Subjects belonging to `task`'s two classes.
    pub fn for_task(&self, task: Task) -> Cohort {
        Cohort {
            atlas: self.atlas.clone(),
            subjects: self
                .subjects
                .iter()
                .filter(|s| task.class_index(s.label).is_some())
                .cloned()
                .collect(),
        }
    }
}

/// Stratified split into (train, test) for a binary task. Per class, the
/// test share is `floor((1 - train_fraction) * n_class)` and the remainder
/// goes to train. Subjects of the third stage are dropped. Both halves are
/// ordered by subject id.
pub fn split_cohort(
    cohort: &Cohort,
    task: Task,
    train_fraction: f64,
    seed: u64,
) -> Result<(Cohort, Cohort)> {
    if !(0.0..=1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(HscfError::InvalidArgument(format!(
            "train_fraction must be in (0, 1], got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for stage in [task.earlier(), task.later()] {
        let mut members: Vec<&Subject> = cohort.of_stage(stage).collect();
        if members.is_empty() {
            return Err(HscfError::EmptyClass(stage.to_string()));
        }
        members.sort_by(|a, b| a.id.cmp(&b.id));
        members.shuffle(&mut rng);
        let n = members.len();
        let n_test = (((1.0 - train_fraction) * n as f64) + 1e-9).floor() as usize;
        let n_train = n - n_test;
        train.extend(members[..n_train].iter().map(|s| (*s).clone()));
        test.extend(members[n_train..].iter().map(|s| (*s).clone()));
    }
    if test.is_empty() {
        log::warn!("train_fraction {train_fraction} leaves an empty test split");
    }
    train.sort_by(|a, b| a.id.cmp(&b.id));
    test.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((
        Cohort {
            atlas: cohort.atlas.clone(),
            subjects: train,
        },
        Cohort {
            atlas: cohort.atlas.clone(),
            subjects: test,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::generate_synthetic_cohort;

    #[test]
    fn aal_names() {
        let atlas = RoiAtlas::aal90();
        assert_eq!(atlas.len(), 90);
        assert_eq!(atlas.name(4), "ORBsup.L");
        assert_eq!(atlas.name(5), "ORBsup.R");
        assert_eq!(atlas.name(42), "CAL.L");
        assert_eq!(atlas.name(89), "ITG.R");
        assert!(RoiAtlas::new(atlas.names().to_vec()).is_ok());
        assert!(RoiAtlas::new(vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn task_parsing() {
        assert_eq!("nc-emci".parse::<Task>().unwrap(), Task::NcVsEmci);
        assert_eq!("NC-vs-EMCI".parse::<Task>().unwrap(), Task::NcVsEmci);
        assert_eq!("emci-lmci".parse::<Task>().unwrap(), Task::EmciVsLmci);
        assert!("nc-lmci".parse::<Task>().is_err());
    }

    #[test]
    fn stratified_split_counts() {
        let cohort = generate_synthetic_cohort(3, 76, 6, 0.4).unwrap();
        let (train, test) = split_cohort(&cohort, Task::NcVsEmci, 0.8, 11).unwrap();
        assert_eq!(train.count(Stage::Nc), 61);
        assert_eq!(train.count(Stage::Emci), 61);
        assert_eq!(test.count(Stage::Nc), 15);
        assert_eq!(test.count(Stage::Emci), 15);
        assert_eq!(train.count(Stage::Lmci) + test.count(Stage::Lmci), 0);

        let (train2, test2) = split_cohort(&cohort, Task::NcVsEmci, 0.8, 11).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let (train3, _) = split_cohort(&cohort, Task::NcVsEmci, 0.8, 12).unwrap();
        assert_ne!(train, train3);
    }

    #[test]
    fn full_train_fraction_leaves_empty_test() {
        let cohort = generate_synthetic_cohort(3, 4, 6, 0.4).unwrap();
        let (train, test) = split_cohort(&cohort, Task::EmciVsLmci, 1.0, 0).unwrap();
        assert_eq!(train.len(), 8);
        assert!(test.is_empty());
    }

    #[test]
    fn split_requires_both_classes() {
        let cohort = generate_synthetic_cohort(3, 4, 6, 0.4).unwrap();
        let no_nc = Cohort {
            atlas: cohort.atlas.clone(),
            subjects: cohort
                .subjects
                .iter()
                .filter(|s| s.label != Stage::Nc)
                .cloned()
                .collect(),
        };
        let err = split_cohort(&no_nc, Task::NcVsEmci, 0.8, 0).unwrap_err();
        assert!(err.to_string().contains("NC"));
    }
}
