//! Binary recursive partitioning with donor-set leaves.
//!
//! Splits minimise within-node SSE (continuous response) or n-weighted Gini
//! impurity (categorical response). Continuous predictors split on a
//! threshold `x < t`; categorical predictors split on a level subset, with
//! levels ordered by response mean (exhaustive search for multi-class
//! responses with few levels).

use crate::fit::method::{CartControls, Response};
use crate::table::{DesignMatrix, TermKind};

/// Level counts up to which multi-class splits enumerate every subset.
const EXHAUSTIVE_LEVELS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
enum Feature {
    Numeric {
        col: usize,
    },
    Categorical {
        cols: Vec<usize>,
        coded: Vec<usize>,
        n_categories: usize,
    },
}

impl Feature {
    fn numeric(&self, x: &DesignMatrix, row: usize) -> f64 {
        match self {
            Feature::Numeric { col } => x.get(row, *col),
            Feature::Categorical { .. } => unreachable!(),
        }
    }

    fn category(&self, x: &DesignMatrix, row: usize) -> usize {
        match self {
            Feature::Categorical { cols, coded, .. } => cols
                .iter()
                .zip(coded)
                .find(|(&c, _)| x.get(row, c) != 0.0)
                .map_or(0, |(_, &k)| k),
            Feature::Numeric { .. } => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitRule {
    /// Rows with value `< threshold` go left.
    Below(f64),
    /// Rows whose category is flagged go left.
    Levels(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        donors: Vec<usize>,
    },
    Split {
        feature: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartFit {
    nodes: Vec<Node>,
    features: Vec<Feature>,
    /// Training response; leaf donors index into it.
    pub y: Response,
    /// Training design, kept for bootstrap refits.
    pub x: DesignMatrix,
    pub controls: CartControls,
}

impl CartFit {
    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Donor sets of all leaves.
    pub fn leaves(&self) -> Vec<&[usize]> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { donors } => Some(donors.as_slice()),
                Node::Split { .. } => None,
            })
            .collect()
    }

    /// Root split as `(design column name, rule)`, if the tree has one.
    pub fn root_split(&self) -> Option<(String, &SplitRule)> {
        match &self.nodes[0] {
            Node::Split { feature, rule, .. } => {
                let col = match &self.features[*feature] {
                    Feature::Numeric { col } => *col,
                    Feature::Categorical { cols, .. } => cols[0],
                };
                Some((self.x.names()[col].clone(), rule))
            }
            Node::Leaf { .. } => None,
        }
    }

    /// Node index of the leaf that row `row` of `x` falls into.
    pub fn leaf_of(&self, x: &DesignMatrix, row: usize) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    let f = &self.features[*feature];
                    let go_left = match rule {
                        SplitRule::Below(t) => f.numeric(x, row) < *t,
                        SplitRule::Levels(set) => set.get(f.category(x, row)).copied().unwrap_or(false),
                    };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    /// Donor rows of node `node`; empty for internal nodes.
    pub fn node_donors(&self, node: usize) -> &[usize] {
        match &self.nodes[node] {
            Node::Leaf { donors } => donors,
            Node::Split { .. } => &[],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Donor set of the leaf that row `row` of `x` falls into.
    pub fn leaf_donors(&self, x: &DesignMatrix, row: usize) -> &[usize] {
        self.node_donors(self.leaf_of(x, row))
    }
}

fn features_of(x: &DesignMatrix) -> Vec<Feature> {
    x.terms()
        .iter()
        .filter_map(|t| match &t.kind {
            TermKind::Intercept => None,
            TermKind::Continuous | TermKind::MissingIndicator => Some(Feature::Numeric { col: t.columns[0] }),
            TermKind::Categorical { n_categories, coded } => Some(Feature::Categorical {
                cols: t.columns.clone(),
                coded: coded.clone(),
                n_categories: *n_categories,
            }),
        })
        .collect()
}

/// Node statistics accumulator.
#[derive(Clone)]
enum Stats {
    Reg { n: f64, sum: f64, sumsq: f64 },
    Class { n: f64, counts: Vec<f64> },
}

impl Stats {
    fn empty(y: &Response) -> Stats {
        match y {
            Response::Continuous(_) => Stats::Reg {
                n: 0.0,
                sum: 0.0,
                sumsq: 0.0,
            },
            Response::Categorical { n_categories, .. } => Stats::Class {
                n: 0.0,
                counts: vec![0.0; *n_categories],
            },
        }
    }

    fn add(&mut self, y: &Response, r: usize, sign: f64) {
        match (self, y) {
            (Stats::Reg { n, sum, sumsq }, Response::Continuous(v)) => {
                *n += sign;
                *sum += sign * v[r];
                *sumsq += sign * v[r] * v[r];
            }
            (Stats::Class { n, counts }, Response::Categorical { codes, .. }) => {
                *n += sign;
                counts[codes[r] as usize] += sign;
            }
            _ => unreachable!(),
        }
    }

    fn merge(&mut self, other: &Stats, sign: f64) {
        match (self, other) {
            (
                Stats::Reg { n, sum, sumsq },
                Stats::Reg {
                    n: n2,
                    sum: s2,
                    sumsq: q2,
                },
            ) => {
                *n += sign * n2;
                *sum += sign * s2;
                *sumsq += sign * q2;
            }
            (Stats::Class { n, counts }, Stats::Class { n: n2, counts: c2 }) => {
                *n += sign * n2;
                counts.iter_mut().zip(c2).for_each(|(a, b)| *a += sign * b);
            }
            _ => unreachable!(),
        }
    }

    fn n(&self) -> f64 {
        match self {
            Stats::Reg { n, .. } | Stats::Class { n, .. } => *n,
        }
    }

    /// SSE, or n × Gini.
    fn impurity(&self) -> f64 {
        match self {
            Stats::Reg { n, sum, sumsq } => {
                if *n <= 0.0 {
                    0.0
                } else {
                    (sumsq - sum * sum / n).max(0.0)
                }
            }
            Stats::Class { n, counts } => {
                if *n <= 0.0 {
                    0.0
                } else {
                    n - counts.iter().map(|c| c * c).sum::<f64>() / n
                }
            }
        }
    }

    /// Ordering key for categorical levels.
    fn order_key(&self, target_class: usize) -> f64 {
        match self {
            Stats::Reg { n, sum, .. } => sum / n,
            Stats::Class { n, counts } => counts[target_class] / n,
        }
    }
}

struct Candidate {
    gain: f64,
    feature: usize,
    rule: SplitRule,
}

pub fn fit_cart(y: &Response, x: &DesignMatrix, controls: CartControls) -> CartFit {
    assert_eq!(y.len(), x.nrows(), "response and design length differ");
    let features = features_of(x);
    let mut nodes = Vec::new();
    let all: Vec<usize> = (0..y.len()).collect();
    let mut root_stats = Stats::empty(y);
    all.iter().for_each(|&r| root_stats.add(y, r, 1.0));
    let root_impurity = root_stats.impurity();

    // (node index, rows, depth)
    nodes.push(Node::Leaf { donors: Vec::new() });
    let mut stack = vec![(0usize, all, 0usize)];
    while let Some((id, rows, depth)) = stack.pop() {
        let mut stats = Stats::empty(y);
        rows.iter().for_each(|&r| stats.add(y, r, 1.0));
        let parent = stats.impurity();
        let stop = rows.len() < 2 * controls.min_leaf_size || depth >= controls.max_depth || parent <= 0.0;
        let best = if stop {
            None
        } else {
            best_split(y, x, &features, &rows, &stats, controls.min_leaf_size)
        };
        match best {
            Some(c) if root_impurity > 0.0 && c.gain / root_impurity >= controls.min_split_improvement => {
                let f = &features[c.feature];
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&row| match &c.rule {
                    SplitRule::Below(t) => f.numeric(x, row) < *t,
                    SplitRule::Levels(set) => set[f.category(x, row)],
                });
                let li = nodes.len();
                nodes.push(Node::Leaf { donors: Vec::new() });
                nodes.push(Node::Leaf { donors: Vec::new() });
                nodes[id] = Node::Split {
                    feature: c.feature,
                    rule: c.rule,
                    left: li,
                    right: li + 1,
                };
                stack.push((li + 1, r, depth + 1));
                stack.push((li, l, depth + 1));
            }
            _ => nodes[id] = Node::Leaf { donors: rows },
        }
    }
    CartFit {
        nodes,
        features,
        y: y.clone(),
        x: x.clone(),
        controls,
    }
}

fn best_split(
    y: &Response,
    x: &DesignMatrix,
    features: &[Feature],
    rows: &[usize],
    node: &Stats,
    min_leaf: usize,
) -> Option<Candidate> {
    let parent = node.impurity();
    let n = rows.len();
    let mut best: Option<Candidate> = None;
    let mut consider = |gain: f64, feature: usize, rule: SplitRule| {
        if gain > 1e-12 * parent.max(1e-300) && best.as_ref().is_none_or(|b| gain > b.gain) {
            best = Some(Candidate { gain, feature, rule });
        }
    };
    let majority = match node {
        Stats::Class { counts, .. } => {
            counts
                .iter()
                .enumerate()
                .fold((0, -1.0), |acc, (i, &c)| if c > acc.1 { (i, c) } else { acc })
                .0
        }
        Stats::Reg { .. } => 0,
    };
    for (fi, f) in features.iter().enumerate() {
        match f {
            Feature::Numeric { .. } => {
                let mut vals: Vec<(f64, usize)> = rows.iter().map(|&r| (f.numeric(x, r), r)).collect();
                vals.sort_by(|a, b| a.0.total_cmp(&b.0));
                if vals[0].0 == vals[n - 1].0 {
                    continue;
                }
                let mut left = Stats::empty(y);
                let mut right = node.clone();
                for i in 0..n - 1 {
                    left.add(y, vals[i].1, 1.0);
                    right.add(y, vals[i].1, -1.0);
                    let nl = i + 1;
                    if nl < min_leaf || n - nl < min_leaf || vals[i].0 == vals[i + 1].0 {
                        continue;
                    }
                    let gain = parent - left.impurity() - right.impurity();
                    consider(gain, fi, SplitRule::Below(vals[i + 1].0));
                }
            }
            Feature::Categorical { n_categories, .. } => {
                let mut per: Vec<Stats> = vec![Stats::empty(y); *n_categories];
                for &r in rows {
                    per[f.category(x, r)].add(y, r, 1.0);
                }
                let present: Vec<usize> = (0..*n_categories).filter(|&c| per[c].n() > 0.0).collect();
                if present.len() < 2 {
                    continue;
                }
                let mut eval = |set: &[usize]| {
                    let mut left = Stats::empty(y);
                    set.iter().for_each(|&c| left.merge(&per[c], 1.0));
                    let nl = left.n() as usize;
                    if nl < min_leaf || n - nl < min_leaf {
                        return;
                    }
                    let mut right = node.clone();
                    right.merge(&left, -1.0);
                    let gain = parent - left.impurity() - right.impurity();
                    let mut flags = vec![false; *n_categories];
                    set.iter().for_each(|&c| flags[c] = true);
                    // unseen levels follow the larger child
                    let unseen_left = nl * 2 > n;
                    for c in 0..*n_categories {
                        if per[c].n() == 0.0 {
                            flags[c] = unseen_left;
                        }
                    }
                    consider(gain, fi, SplitRule::Levels(flags));
                };
                let multiclass = matches!(node, Stats::Class { counts, .. } if counts.len() > 2);
                if multiclass && present.len() <= EXHAUSTIVE_LEVELS {
                    // subsets containing present[0] cover every bipartition once
                    let m = present.len();
                    for mask in 0..(1u32 << (m - 1)) {
                        let set: Vec<usize> = std::iter::once(present[0])
                            .chain((1..m).filter(|&b| mask & (1 << (b - 1)) != 0).map(|b| present[b]))
                            .collect();
                        if set.len() < m {
                            eval(&set);
                        }
                    }
                } else {
                    let target = if matches!(node, Stats::Class { counts, .. } if counts.len() == 2) {
                        1
                    } else {
                        majority
                    };
                    let mut order = present.clone();
                    order.sort_by(|&a, &b| per[a].order_key(target).total_cmp(&per[b].order_key(target)));
                    for cut in 1..order.len() {
                        eval(&order[..cut]);
                    }
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::table::{encode_design, ColumnInput, DataTable, Schema, VariableDef, INTERCEPT};
    use nalgebra::DMatrix;
    use rand::Rng;

    fn design(cols: &[Vec<f64>]) -> DesignMatrix {
        let n = cols[0].len();
        let m = DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
        let mut names = vec![INTERCEPT.to_string()];
        names.extend((0..cols.len()).map(|j| format!("x{}", j + 1)));
        DesignMatrix::from_matrix(m, names).unwrap()
    }

    #[test]
    fn separable_gives_single_split_at_zero() {
        let xs: Vec<f64> = (-10..10).map(f64::from).collect();
        let y = Response::Categorical {
            codes: xs.iter().map(|&x| u32::from(x >= 0.0)).collect(),
            n_categories: 2,
        };
        let fit = fit_cart(&y, &design(&[xs]), CartControls::default());
        assert_eq!(fit.depth(), 1);
        assert_eq!(fit.root_split(), Some(("x1".to_string(), &SplitRule::Below(0.0))));
        let Response::Categorical { codes, .. } = &fit.y else {
            unreachable!()
        };
        for leaf in fit.leaves() {
            assert!(leaf.iter().all(|&r| codes[r] == codes[leaf[0]]));
        }
    }

    #[test]
    fn constant_response_is_root_only() {
        let xs: Vec<f64> = (0..50).map(f64::from).collect();
        let fit = fit_cart(
            &Response::Continuous(vec![3.0; 50]),
            &design(&[xs]),
            CartControls::default(),
        );
        assert_eq!(fit.n_leaves(), 1);
        assert_eq!(fit.depth(), 0);
    }

    #[test]
    fn xor_is_learned() {
        let mut rng = stream(8);
        let n = 400;
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let codes: Vec<u32> = a
            .iter()
            .zip(&b)
            .map(|(x, z)| u32::from((*x > 0.0) != (*z > 0.0)))
            .collect();
        let y = Response::Categorical {
            codes: codes.clone(),
            n_categories: 2,
        };
        let d = design(&[a, b]);
        let fit = fit_cart(&y, &d, CartControls::default());
        assert!(fit.depth() >= 2);
        // brute force: majority class of each training row's leaf
        let correct = (0..n)
            .filter(|&r| {
                let leaf = fit.leaf_donors(&d, r);
                let ones = leaf.iter().filter(|&&i| codes[i] == 1).count();
                u32::from(2 * ones > leaf.len()) == codes[r]
            })
            .count();
        assert!(correct as f64 / n as f64 > 0.95, "{correct}");
    }

    #[test]
    fn leaves_partition_training_rows() {
        let mut rng = stream(2);
        let xs: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..10.0)).collect();
        let y: Vec<f64> = xs.iter().map(|x| x.sin() + rng.random_range(-0.1..0.1)).collect();
        let d = design(&[xs]);
        let fit = fit_cart(&Response::Continuous(y), &d, CartControls::default());
        let mut all: Vec<usize> = fit.leaves().concat();
        all.sort_unstable();
        assert_eq!(all, (0..300).collect::<Vec<_>>());
        for r in 0..300 {
            assert!(fit.leaf_donors(&d, r).contains(&r));
        }
        assert!(fit.leaves().iter().all(|l| l.len() >= 5));
    }

    #[test]
    fn splits_on_categorical_levels() {
        let schema = Schema::new(vec![VariableDef::categorical("g", ["a", "b", "c", "d"])]).unwrap();
        let labels: Vec<&str> = (0..80).map(|i| ["a", "b", "c", "d"][i % 4]).collect();
        let t = DataTable::from_columns(schema, vec![ColumnInput::labels(&labels)]).unwrap();
        let d = encode_design(&t, &["g"]).unwrap();
        // b and d high, a and c low
        let y: Vec<f64> = labels
            .iter()
            .map(|l| if *l == "b" || *l == "d" { 10.0 } else { 0.0 })
            .collect();
        let fit = fit_cart(&Response::Continuous(y), &d, CartControls::default());
        assert_eq!(fit.n_leaves(), 2);
        match fit.root_split().unwrap().1 {
            SplitRule::Levels(set) => assert_eq!(set[0], set[2]),
            r => panic!("{r:?}"),
        }
    }
}
