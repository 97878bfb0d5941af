//! Data model for the fused ensemble and the matrices derived from it.
//!
//! Every base classifier and every base clusterer partitions the objects.
//! Each block of such a partition is a *base group*. The object–group
//! incidence ([`MembershipMatrix`]), the object–object co-occurrence counts
//! ([`CooccurrenceMatrix`]) and the classifier vote fractions
//! ([`VoteMatrices`]) are all built from the [`GroupCatalog`].

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw outputs of the base methods for `N` objects.
///
/// Class labels are 1-based (`1..=num_classes`). Cluster ids are arbitrary
/// integers on the way in and are relabeled to `0..k` (in ascending order of
/// the raw id) per clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleInput {
    num_objects: usize,
    num_classes: usize,
    classifier_outputs: Vec<Vec<usize>>,
    clustering_outputs: Vec<Vec<usize>>,
    true_labels: Option<Vec<usize>>,
}

impl EnsembleInput {
    pub fn new(
        num_classes: usize,
        classifier_outputs: Vec<Vec<usize>>,
        clustering_outputs: Vec<Vec<i64>>,
        true_labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        let Some(first) = classifier_outputs.first() else {
            return Err(Error::InvalidInput(
                "at least one base classifier is required".into(),
            ));
        };
        let num_objects = first.len();
        if num_objects == 0 {
            return Err(Error::InvalidInput("no objects".into()));
        }
        for (m, labels) in classifier_outputs.iter().enumerate() {
            check_len("classifier", m, labels.len(), num_objects)?;
            check_labels(m, labels, num_classes)?;
        }
        let mut clusterings = Vec::with_capacity(clustering_outputs.len());
        for (m, ids) in clustering_outputs.iter().enumerate() {
            check_len("clusterer", m, ids.len(), num_objects)?;
            clusterings.push(relabel_contiguous(ids));
        }
        if let Some(truth) = &true_labels {
            if truth.len() != num_objects {
                return Err(Error::InvalidInput(format!(
                    "true labels have length {}, expected {num_objects}",
                    truth.len()
                )));
            }
            if let Some((i, &t)) = truth
                .iter()
                .enumerate()
                .find(|(_, &t)| t == 0 || t > num_classes)
            {
                return Err(Error::InvalidInput(format!(
                    "true label {t} of object {i} is outside 1..={num_classes}"
                )));
            }
        }
        Ok(Self {
            num_objects,
            num_classes,
            classifier_outputs,
            clustering_outputs: clusterings,
            true_labels,
        })
    }

    pub fn num_objects(&self) -> usize {
        self.num_objects
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_classifiers(&self) -> usize {
        self.classifier_outputs.len()
    }

    pub fn num_clusterers(&self) -> usize {
        self.clustering_outputs.len()
    }

    /// Total number of base methods, `C1 + C2`.
    pub fn num_methods(&self) -> usize {
        self.num_classifiers() + self.num_clusterers()
    }

    pub fn classifier_outputs(&self) -> &[Vec<usize>] {
        &self.classifier_outputs
    }

    /// Clusterings after relabeling to contiguous 0-based ids.
    pub fn clustering_outputs(&self) -> &[Vec<usize>] {
        &self.clustering_outputs
    }

    pub fn true_labels(&self) -> Option<&[usize]> {
        self.true_labels.as_deref()
    }

    /// Returns a copy with one more base classifier appended.
    pub fn with_classifier(&self, labels: Vec<usize>) -> Result<Self> {
        check_len(
            "classifier",
            self.num_classifiers(),
            labels.len(),
            self.num_objects,
        )?;
        check_labels(self.num_classifiers(), &labels, self.num_classes)?;
        let mut next = self.clone();
        next.classifier_outputs.push(labels);
        Ok(next)
    }

    /// Returns a copy with one more base clusterer appended.
    pub fn with_clustering(&self, ids: &[i64]) -> Result<Self> {
        check_len(
            "clusterer",
            self.num_clusterers(),
            ids.len(),
            self.num_objects,
        )?;
        let mut next = self.clone();
        next.clustering_outputs.push(relabel_contiguous(ids));
        Ok(next)
    }

    /// Keeps only the given base methods, in the given order.
    pub fn select_methods(&self, classifiers: &[usize], clusterers: &[usize]) -> Result<Self> {
        let pick = |all: &[Vec<usize>], idx: &[usize], what: &str| -> Result<Vec<Vec<usize>>> {
            idx.iter()
                .map(|&m| {
                    all.get(m).cloned().ok_or_else(|| {
                        Error::InvalidInput(format!("{what} index {m} out of range"))
                    })
                })
                .collect()
        };
        let classifier_outputs = pick(&self.classifier_outputs, classifiers, "classifier")?;
        if classifier_outputs.is_empty() {
            return Err(Error::InvalidInput(
                "at least one base classifier is required".into(),
            ));
        }
        Ok(Self {
            classifier_outputs,
            clustering_outputs: pick(&self.clustering_outputs, clusterers, "clusterer")?,
            ..self.clone()
        })
    }
}

fn check_len(what: &str, method: usize, len: usize, expected: usize) -> Result<()> {
    if len != expected {
        return Err(Error::InvalidInput(format!(
            "{what} {method} has {len} outputs, expected {expected}"
        )));
    }
    Ok(())
}

fn check_labels(method: usize, labels: &[usize], classes: usize) -> Result<()> {
    match labels
        .iter()
        .enumerate()
        .find(|(_, &l)| l == 0 || l > classes)
    {
        Some((object, &label)) => Err(Error::LabelOutOfRange {
            method,
            object,
            label,
            classes,
        }),
        None => Ok(()),
    }
}

fn relabel_contiguous(ids: &[i64]) -> Vec<usize> {
    let mut map: BTreeMap<i64, usize> = ids.iter().map(|&id| (id, 0)).collect();
    for (next, slot) in map.values_mut().enumerate() {
        *slot = next;
    }
    ids.iter().map(|id| map[id]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Classifier,
    Clusterer,
}

/// One base group: a predicted class of one classifier or a cluster of one
/// clusterer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub kind: MethodKind,
    /// Index of the source method among methods of the same kind.
    pub method: usize,
    /// Class label (1-based) for classifier groups, relabeled cluster id
    /// (0-based) for clusterer groups.
    pub local_id: usize,
    /// Member object indices, ascending.
    pub members: Vec<usize>,
}

/// All non-empty base groups in canonical order: classifier groups first
/// (method order, then class order), then clusterer groups (method order,
/// then ascending cluster id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupCatalog {
    groups: Vec<Group>,
    classifier_groups: usize,
    /// For each object, the indices of the groups containing it (ascending).
    object_groups: Vec<Vec<usize>>,
}

impl GroupCatalog {
    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    /// `G`
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// `G1`
    pub fn classifier_groups(&self) -> usize {
        self.classifier_groups
    }

    /// `G2`
    pub fn clusterer_groups(&self) -> usize {
        self.groups.len() - self.classifier_groups
    }

    pub fn num_objects(&self) -> usize {
        self.object_groups.len()
    }

    pub fn groups_of(&self, object: usize) -> &[usize] {
        &self.object_groups[object]
    }

    pub fn object_groups(&self) -> &[Vec<usize>] {
        &self.object_groups
    }
}

pub fn build_group_catalog(input: &EnsembleInput) -> Result<GroupCatalog> {
    if input.num_classifiers() == 0 {
        return Err(Error::InvalidInput(
            "at least one base classifier is required".into(),
        ));
    }
    let n = input.num_objects();
    let mut groups = Vec::new();

    for (m, labels) in input.classifier_outputs().iter().enumerate() {
        let mut members = vec![Vec::new(); input.num_classes()];
        for (i, &label) in labels.iter().enumerate() {
            if label == 0 || label > input.num_classes() {
                return Err(Error::LabelOutOfRange {
                    method: m,
                    object: i,
                    label,
                    classes: input.num_classes(),
                });
            }
            members[label - 1].push(i);
        }
        groups.extend(
            members
                .into_iter()
                .enumerate()
                .filter(|(_, m)| !m.is_empty())
                .map(|(c, members)| Group {
                    kind: MethodKind::Classifier,
                    method: m,
                    local_id: c + 1,
                    members,
                }),
        );
    }
    let classifier_groups = groups.len();

    for (m, ids) in input.clustering_outputs().iter().enumerate() {
        let k = ids.iter().copied().max().map_or(0, |x| x + 1);
        let mut members = vec![Vec::new(); k];
        for (i, &id) in ids.iter().enumerate() {
            members[id].push(i);
        }
        groups.extend(
            members
                .into_iter()
                .enumerate()
                .filter(|(_, m)| !m.is_empty())
                .map(|(c, members)| Group {
                    kind: MethodKind::Clusterer,
                    method: m,
                    local_id: c,
                    members,
                }),
        );
    }

    let mut object_groups = vec![Vec::with_capacity(input.num_methods()); n];
    for (g, group) in groups.iter().enumerate() {
        for &i in &group.members {
            object_groups[i].push(g);
        }
    }

    Ok(GroupCatalog {
        groups,
        classifier_groups,
        object_groups,
    })
}

/// Binary `N x G` object–group incidence.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix(Array2<f64>);

impl MembershipMatrix {
    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

pub fn build_membership(input: &EnsembleInput, catalog: &GroupCatalog) -> MembershipMatrix {
    debug_assert_eq!(input.num_objects(), catalog.num_objects());
    let mut a = Array2::zeros((input.num_objects(), catalog.len()));
    for (g, group) in catalog.groups().iter().enumerate() {
        for &i in &group.members {
            a[[i, g]] = 1.0;
        }
    }
    MembershipMatrix(a)
}

/// `N x N` count of shared base groups, `A^m (A^m)^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix(Array2<f64>);

impl CooccurrenceMatrix {
    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

pub fn build_cooccurrence(membership: &MembershipMatrix) -> CooccurrenceMatrix {
    let a = membership.as_array();
    CooccurrenceMatrix(a.dot(&a.t()))
}

/// Classifier vote fractions per object (`Y^o`, `N x l`) and per group
/// (`Y^g`, `G x l`).
#[derive(Debug, Clone, PartialEq)]
pub struct VoteMatrices {
    pub objects: Array2<f64>,
    pub groups: Array2<f64>,
}

pub fn build_votes(input: &EnsembleInput, catalog: &GroupCatalog) -> VoteMatrices {
    let n = input.num_objects();
    let l = input.num_classes();
    let c1 = input.num_classifiers() as f64;

    let mut counts = Array2::<f64>::zeros((n, l));
    for labels in input.classifier_outputs() {
        for (i, &label) in labels.iter().enumerate() {
            counts[[i, label - 1]] += 1.0;
        }
    }

    let mut groups = Array2::<f64>::zeros((catalog.len(), l));
    for (g, group) in catalog.groups().iter().enumerate() {
        let mut row = groups.row_mut(g);
        for &i in &group.members {
            row += &counts.row(i);
        }
        row /= group.members.len() as f64 * c1;
    }

    VoteMatrices {
        objects: counts / c1,
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fig1_toy() -> EnsembleInput {
        // 8 objects, 3 classes, 2 classifiers, 2 clusterers; every method
        // uses all three of its groups.
        EnsembleInput::new(
            3,
            vec![vec![1, 1, 1, 2, 2, 2, 3, 3], vec![1, 1, 2, 2, 2, 3, 3, 3]],
            vec![vec![1, 1, 1, 2, 2, 3, 3, 3], vec![7, 7, 8, 8, 8, 9, 9, 7]],
            None,
        )
        .unwrap()
    }

    #[test]
    fn toy_with_all_groups_present_has_twelve_groups() {
        let cat = build_group_catalog(&fig1_toy()).unwrap();
        assert_eq!(cat.len(), 12);
        assert_eq!(cat.classifier_groups(), 6);
        assert_eq!(cat.clusterer_groups(), 6);
    }

    #[test]
    fn empty_classifier_class_is_dropped() {
        let input = EnsembleInput::new(2, vec![vec![1, 1, 1]], vec![vec![0, 0, 1]], None).unwrap();
        let cat = build_group_catalog(&input).unwrap();
        assert_eq!(cat.classifier_groups(), 1);
        assert_eq!(cat.len(), 1 + 2);
    }

    #[test]
    fn two_object_catalog_and_matrices() {
        let input = EnsembleInput::new(2, vec![vec![1, 2]], vec![vec![1, 1]], None).unwrap();
        let cat = build_group_catalog(&input).unwrap();
        let members: Vec<_> = cat.groups().iter().map(|g| g.members.clone()).collect();
        assert_eq!(members, vec![vec![0], vec![1], vec![0, 1]]);

        let am = build_membership(&input, &cat);
        assert_eq!(am.as_array(), &array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]);

        let ac = build_cooccurrence(&am);
        assert_eq!(ac.as_array(), &array![[2.0, 1.0], [1.0, 2.0]]);
    }

    #[test]
    fn single_classifier_single_class_gives_ones_column() {
        let input = EnsembleInput::new(2, vec![vec![2, 2, 2, 2]], vec![], None).unwrap();
        let cat = build_group_catalog(&input).unwrap();
        let am = build_membership(&input, &cat);
        assert_eq!(am.as_array(), &Array2::<f64>::ones((4, 1)));
    }

    #[test]
    fn toy_rows_sum_to_method_count() {
        let input = fig1_toy();
        let cat = build_group_catalog(&input).unwrap();
        let am = build_membership(&input, &cat);
        for row in am.as_array().rows() {
            assert_eq!(row.sum(), 4.0);
        }
    }

    #[test]
    fn cooccurrence_edge_cases() {
        let all_shared = MembershipMatrix(Array2::ones((3, 2)));
        assert_eq!(
            build_cooccurrence(&all_shared).as_array(),
            &Array2::from_elem((3, 3), 2.0)
        );
        let disjoint = MembershipMatrix(array![[1.0, 0.0], [0.0, 1.0]]);
        let ac = build_cooccurrence(&disjoint);
        assert_eq!(ac.as_array()[[0, 1]], 0.0);
        assert_eq!(ac.as_array()[[1, 0]], 0.0);
    }

    #[test]
    fn votes_from_two_classifiers() {
        let input =
            EnsembleInput::new(2, vec![vec![1, 1], vec![1, 2]], vec![vec![5, 5]], None).unwrap();
        let cat = build_group_catalog(&input).unwrap();
        let votes = build_votes(&input, &cat);
        assert_eq!(votes.objects, array![[1.0, 0.0], [0.5, 0.5]]);
        // Last group is the cluster holding both objects.
        let g = cat.len() - 1;
        assert_eq!(votes.groups.row(g).to_vec(), vec![0.75, 0.25]);
    }

    #[test]
    fn unanimous_votes_are_one_hot() {
        let input =
            EnsembleInput::new(3, vec![vec![3, 1, 2], vec![3, 1, 2]], vec![], None).unwrap();
        let cat = build_group_catalog(&input).unwrap();
        let votes = build_votes(&input, &cat);
        assert_eq!(
            votes.objects,
            array![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
        );
    }

    #[test]
    fn rejects_missing_classifier_and_bad_labels() {
        assert!(matches!(
            EnsembleInput::new(2, vec![], vec![vec![1, 2]], None),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            EnsembleInput::new(2, vec![vec![1, 3]], vec![], None),
            Err(Error::LabelOutOfRange { label: 3, object: 1, .. })
        ));
        assert!(matches!(
            EnsembleInput::new(2, vec![vec![0, 1]], vec![], None),
            Err(Error::LabelOutOfRange { label: 0, .. })
        ));
        assert!(EnsembleInput::new(2, vec![vec![1, 2]], vec![vec![1]], None).is_err());
    }

    #[test]
    fn cluster_ids_are_relabeled_in_ascending_order() {
        let input =
            EnsembleInput::new(2, vec![vec![1, 1, 2]], vec![vec![40, -3, 40]], None).unwrap();
        assert_eq!(input.clustering_outputs()[0], vec![1, 0, 1]);
    }

    #[test]
    fn catalog_is_deterministic() {
        let input = fig1_toy();
        assert_eq!(
            build_group_catalog(&input).unwrap(),
            build_group_catalog(&input).unwrap()
        );
    }
}
