//! Random survival forest with log-rank splitting and Kaplan–Meier leaves.
//!
//! Held-out predictions average only trees whose bootstrap sample does not
//! contain the subject (any copy of it, when the training cohort is itself a
//! resample).

use rand::seq::index::sample;
use rand::Rng as _;

use super::{arm_data, SurvivalPredictor};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::survival::{product_limit, Arm, Cohort, SurvivalCurve};

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate covariates per split.
    pub mtry: usize,
    /// Minimum number of distinct event times in each child.
    pub min_unique_deaths: usize,
    pub seed: u64,
    /// Grow each tree on a bootstrap sample; `false` uses the full arm.
    pub bootstrap: bool,
    /// Held-out prediction for a subject that is in-bag for every tree uses
    /// the whole forest instead of failing.
    pub full_forest_fallback: bool,
}

impl ForestConfig {
    pub fn for_dimension(p: usize, seed: u64) -> Self {
        ForestConfig {
            n_trees: 500,
            mtry: ((p as f64).sqrt().ceil() as usize).max(1),
            min_unique_deaths: 3,
            seed,
            bootstrap: true,
            full_forest_fallback: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// `x[var] <= cut` goes left.
    Split { var: usize, cut: f64, left: usize, right: usize },
    Leaf { curve: SurvivalCurve },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalTree {
    pub nodes: Vec<TreeNode>,
}

impl SurvivalTree {
    /// Index of the leaf node reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                TreeNode::Split { var, cut, left, right } => k = if x[*var] <= *cut { *left } else { *right },
                TreeNode::Leaf { .. } => return k,
            }
        }
    }

    pub fn leaf_curve(&self, x: &[f64]) -> &SurvivalCurve {
        match &self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { curve } => curve,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalForest {
    arm: Arm,
    trees: Vec<SurvivalTree>,
    /// Sorted, deduplicated subject ids in each tree's sample.
    in_bag: Vec<Vec<usize>>,
    /// Sorted, deduplicated subject ids of the training rows.
    training_ids: Vec<usize>,
    fallback: bool,
}

impl SurvivalForest {
    pub fn trees(&self) -> &[SurvivalTree] {
        &self.trees
    }

    /// Trees usable for a subject with id `id`.
    fn eligible(&self, id: usize) -> Result<Vec<usize>> {
        let trained = self.training_ids.binary_search(&id).is_ok();
        let trees: Vec<usize> =
            (0..self.trees.len()).filter(|&b| !trained || self.in_bag[b].binary_search(&id).is_err()).collect();
        if trees.is_empty() && !self.fallback {
            return Err(Error::NoOutOfBagTrees(id));
        }
        Ok(if trees.is_empty() { (0..self.trees.len()).collect() } else { trees })
    }
}

impl SurvivalPredictor for SurvivalForest {
    fn arm(&self) -> Arm {
        self.arm
    }

    fn predict(&self, x: &[f64], times: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; times.len()];
        let mut buf = vec![0.0; times.len()];
        for tree in &self.trees {
            tree.leaf_curve(x).eval_sorted_into(times, &mut buf);
            acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
        }
        let m = self.trees.len() as f64;
        acc.iter().map(|a| (a / m).clamp(0.0, 1.0)).collect()
    }

    fn predict_held_out(&self, cohort: &Cohort, i: usize, times: &[f64]) -> Result<Vec<f64>> {
        let x = &cohort.record(i).x;
        let mut acc = vec![0.0; times.len()];
        let mut buf = vec![0.0; times.len()];
        let trees = self.eligible(cohort.subject_id(i)).map_err(|_| Error::NoOutOfBagTrees(i))?;
        for &b in &trees {
            self.trees[b].leaf_curve(x).eval_sorted_into(times, &mut buf);
            acc.iter_mut().zip(&buf).for_each(|(a, v)| *a += v);
        }
        Ok(acc.iter().map(|a| (a / trees.len() as f64).clamp(0.0, 1.0)).collect())
    }

    fn predict_held_out_all(&self, cohort: &Cohort, times: &[f64]) -> Result<Vec<f64>> {
        let g = times.len();
        // every leaf curve evaluated once on the grid
        let tables: Vec<(Vec<usize>, Vec<f64>)> = self
            .trees
            .iter()
            .map(|tree| {
                let mut offset = vec![usize::MAX; tree.nodes.len()];
                let mut values = Vec::new();
                for (k, node) in tree.nodes.iter().enumerate() {
                    if let TreeNode::Leaf { curve } = node {
                        offset[k] = values.len();
                        values.resize(values.len() + g, 0.0);
                        let start = offset[k];
                        curve.eval_sorted_into(times, &mut values[start..start + g]);
                    }
                }
                (offset, values)
            })
            .collect();
        let mut out = Vec::with_capacity(cohort.len() * g);
        let mut acc = vec![0.0; g];
        for i in 0..cohort.len() {
            let x = &cohort.record(i).x;
            acc.iter_mut().for_each(|a| *a = 0.0);
            let trees = self.eligible(cohort.subject_id(i)).map_err(|_| Error::NoOutOfBagTrees(i))?;
            for &b in &trees {
                let (offset, values) = &tables[b];
                let o = offset[self.trees[b].leaf_index(x)];
                acc.iter_mut().zip(&values[o..o + g]).for_each(|(a, v)| *a += v);
            }
            out.extend(acc.iter().map(|a| (a / trees.len() as f64).clamp(0.0, 1.0)));
        }
        Ok(out)
    }
}

/// Two-sample log-rank statistic `|O - E| / sqrt(V)` for the group flagged
/// by `left`, computed directly from risk sets. Returns 0 when `V = 0`.
pub fn log_rank_statistic(y: &[f64], event: &[bool], left: &[bool]) -> f64 {
    let mut times: Vec<f64> = y.iter().zip(event).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let (mut oe, mut v) = (0.0, 0.0);
    for &t in &times {
        let at_risk = y.iter().filter(|&&u| u >= t).count() as f64;
        let at_risk_l = y.iter().zip(left).filter(|(&u, &l)| l && u >= t).count() as f64;
        let d = y.iter().zip(event).filter(|(&u, &e)| e && u == t).count() as f64;
        let d_l = (0..y.len()).filter(|&i| left[i] && event[i] && y[i] == t).count() as f64;
        oe += d_l - d * at_risk_l / at_risk;
        if at_risk > 1.0 {
            v += d * (at_risk - d) / (at_risk - 1.0) * (at_risk_l / at_risk) * (1.0 - at_risk_l / at_risk);
        }
    }
    if v > 0.0 {
        oe.abs() / v.sqrt()
    } else {
        0.0
    }
}

/// Prefix sums over 1-based positions.
struct Fenwick(Vec<f64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0.0; n + 1])
    }

    fn add(&mut self, mut i: usize, v: f64) {
        while i < self.0.len() {
            self.0[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over positions `1..=i`.
    fn sum(&self, mut i: usize) -> f64 {
        let mut s = 0.0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Risk-set summaries of the samples in one node.
struct NodeRisk {
    /// Number of node event times `<= y` for each sample (its last risk set).
    rank: Vec<usize>,
    /// 1-based event-time index of each event sample, 0 for censored ones.
    death_slot: Vec<usize>,
    deaths: Vec<usize>,
    /// `P(r) = sum_{k<=r} d_k / Y_k`, `C(r) = sum_{k<=r} c_k`, `D(r) = sum_{k<=r} c_k (Y_k - 1)`.
    p: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
}

impl NodeRisk {
    fn new(y: &[f64], event: &[bool]) -> Self {
        let m = y.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
        let mut rank = vec![0; m];
        let mut death_slot = vec![0; m];
        let mut deaths = vec![0];
        let (mut p, mut c, mut d) = (vec![0.0], vec![0.0], vec![0.0]);
        let mut at_risk = m;
        let mut i = 0;
        while i < m {
            let t = y[order[i]];
            let mut j = i;
            let mut dk = 0;
            while j < m && y[order[j]] == t {
                dk += event[order[j]] as usize;
                j += 1;
            }
            if dk > 0 {
                let (yk, dkf) = (at_risk as f64, dk as f64);
                let ck = if at_risk > 1 { dkf * (yk - dkf) / (yk * yk * (yk - 1.0)) } else { 0.0 };
                deaths.push(dk);
                p.push(p.last().unwrap() + dkf / yk);
                c.push(c.last().unwrap() + ck);
                d.push(d.last().unwrap() + ck * (yk - 1.0));
            }
            let k = deaths.len() - 1;
            for &s in &order[i..j] {
                rank[s] = k;
                if event[s] {
                    death_slot[s] = k;
                }
            }
            at_risk -= j - i;
            i = j;
        }
        NodeRisk { rank, death_slot, deaths, p, c, d }
    }

    fn n_event_times(&self) -> usize {
        self.deaths.len() - 1
    }
}

/// Best log-rank split of one covariate: `(cut, statistic)` over cuts at
/// observed values where both children keep at least `min_deaths` distinct
/// event times. With `all` set, every admissible cut is returned instead.
fn sweep(risk: &NodeRisk, x: &[f64], event: &[bool], min_deaths: usize, mut all: Option<&mut Vec<(f64, f64)>>) -> Option<(f64, f64)> {
    let m = x.len();
    let k_total = risk.n_event_times();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut count = Fenwick::new(k_total + 1);
    let mut csum = Fenwick::new(k_total + 1);
    let mut left_deaths = vec![0usize; k_total + 1];
    let (mut n_left, mut left_distinct, mut right_distinct) = (0usize, 0usize, k_total);
    let (mut oe, mut v) = (0.0f64, 0.0f64);
    let mut best: Option<(f64, f64)> = None;
    for (pos, &s) in order.iter().enumerate() {
        let r = risk.rank[s];
        // V increment: D(r) - 2 * sum_{k<=r} c_k Y_kL
        let below = csum.sum(r);
        let at_least = (n_left as f64) - count.sum(r);
        let q = below + risk.c[r] * at_least;
        v += risk.d[r] - 2.0 * q;
        oe += event[s] as u8 as f64 - risk.p[r];
        // positions are shifted by one so rank 0 is addressable
        count.add(r + 1, 1.0);
        csum.add(r + 1, risk.c[r]);
        n_left += 1;
        let slot = risk.death_slot[s];
        if slot > 0 {
            if left_deaths[slot] == 0 {
                left_distinct += 1;
            }
            left_deaths[slot] += 1;
            if left_deaths[slot] == risk.deaths[slot] {
                right_distinct -= 1;
            }
        }
        if pos + 1 == m || x[order[pos + 1]] == x[s] {
            continue;
        }
        if left_distinct < min_deaths || right_distinct < min_deaths || v <= 1e-12 {
            continue;
        }
        let stat = oe.abs() / v.sqrt();
        if let Some(out) = all.as_deref_mut() {
            out.push((x[s], stat));
        }
        if best.is_none_or(|(_, b)| stat > b) {
            best = Some((x[s], stat));
        }
    }
    best
}

fn grow_tree(
    y: &[f64],
    event: &[bool],
    x: &[Vec<f64>],
    ids: &[usize],
    cfg: &ForestConfig,
    index: usize,
) -> (SurvivalTree, Vec<usize>) {
    let n = y.len();
    let p = x.first().map_or(0, |r| r.len());
    let mut rng = stream_rng(cfg.seed, Stream::Tree, index as u64);
    let sample_rows: Vec<usize> =
        if cfg.bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
    let mut bag: Vec<usize> = sample_rows.iter().map(|&r| ids[r]).collect();
    bag.sort_unstable();
    bag.dedup();

    let mut nodes: Vec<TreeNode> = Vec::new();
    // (node slot, members)
    let mut stack = vec![(0usize, sample_rows)];
    nodes.push(TreeNode::Leaf { curve: SurvivalCurve::one() });
    while let Some((slot, members)) = stack.pop() {
        let ny: Vec<f64> = members.iter().map(|&r| y[r]).collect();
        let ne: Vec<bool> = members.iter().map(|&r| event[r]).collect();
        let risk = NodeRisk::new(&ny, &ne);
        let mut best: Option<(usize, f64, f64)> = None;
        if risk.n_event_times() >= 2 * cfg.min_unique_deaths && p > 0 {
            let mut vars = sample(&mut rng, p, cfg.mtry.min(p)).into_vec();
            vars.sort_unstable();
            for var in vars {
                let xv: Vec<f64> = members.iter().map(|&r| x[r][var]).collect();
                if let Some((cut, stat)) = sweep(&risk, &xv, &ne, cfg.min_unique_deaths, None) {
                    if best.is_none_or(|(_, _, b)| stat > b) {
                        best = Some((var, cut, stat));
                    }
                }
            }
        }
        match best {
            Some((var, cut, _)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&m| x[m][var] <= cut);
                let left = nodes.len();
                nodes.push(TreeNode::Leaf { curve: SurvivalCurve::one() });
                nodes.push(TreeNode::Leaf { curve: SurvivalCurve::one() });
                nodes[slot] = TreeNode::Split { var, cut, left, right: left + 1 };
                stack.push((left + 1, r));
                stack.push((left, l));
            }
            None => {
                let mut obs: Vec<(f64, bool)> = ny.into_iter().zip(ne).collect();
                nodes[slot] = TreeNode::Leaf { curve: product_limit(&mut obs) };
            }
        }
    }
    (SurvivalTree { nodes }, bag)
}

/// Grow a survival forest on the `arm` rows of `cohort`.
pub fn fit_srf(cohort: &Cohort, arm: Arm, cfg: &ForestConfig) -> Result<SurvivalForest> {
    if cfg.n_trees == 0 {
        return Err(Error::invalid("forest needs at least one tree"));
    }
    if cfg.mtry == 0 || cfg.mtry > cohort.p().max(1) {
        return Err(Error::invalid(format!("mtry {} outside 1..={}", cfg.mtry, cohort.p())));
    }
    let (rows, y, event, x) = arm_data(cohort, arm);
    if rows.is_empty() {
        return Err(Error::invalid(format!("{arm:?} arm has no subjects")));
    }
    let ids: Vec<usize> = rows.iter().map(|&r| cohort.subject_id(r)).collect();
    let grow = |b: usize| grow_tree(&y, &event, &x, &ids, cfg, b);
    #[cfg(feature = "parallel")]
    let grown: Vec<(SurvivalTree, Vec<usize>)> = {
        use rayon::prelude::*;
        (0..cfg.n_trees).into_par_iter().map(grow).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let grown: Vec<(SurvivalTree, Vec<usize>)> = (0..cfg.n_trees).map(grow).collect();
    let (trees, in_bag) = grown.into_iter().unzip();
    let mut training_ids = ids;
    training_ids.sort_unstable();
    training_ids.dedup();
    Ok(SurvivalForest { arm, trees, in_bag, training_ids, fallback: cfg.full_forest_fallback })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::{km_fit, SurvivalRecord};
    use rand::SeedableRng;

    fn cohort(rows: &[(f64, bool, Vec<f64>)]) -> Cohort {
        Cohort::new(rows.iter().map(|(y, e, x)| SurvivalRecord::new(*y, *e, Arm::Treated, x.clone())).collect()).unwrap()
    }

    fn random_rows(n: usize, p: usize, seed: u64) -> Vec<(f64, bool, Vec<f64>)> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
                let t = rng.random_range(0.0..1.0) * (1.0 + x[0]).max(0.05);
                let c = rng.random_range(0.0..1.5);
                (t.min(c), t <= c, x)
            })
            .collect()
    }

    #[test]
    fn stump_forest_is_km() {
        let rows = random_rows(40, 2, 1);
        let c = cohort(&rows);
        let cfg = ForestConfig { n_trees: 3, mtry: 1, min_unique_deaths: 1000, seed: 9, bootstrap: false, full_forest_fallback: false };
        let f = fit_srf(&c, Arm::Treated, &cfg).unwrap();
        assert!(f.trees().iter().all(|t| t.nodes.len() == 1));
        let km = km_fit(&c.times(), &c.events()).unwrap();
        let grid: Vec<f64> = (0..40).map(|k| k as f64 * 0.04).collect();
        for (t, s) in grid.iter().zip(f.predict(&[0.3, -0.2], &grid)) {
            assert!((s - km.eval(*t)).abs() < 1e-12);
        }
    }

    #[test]
    fn separates_perfectly_at_root() {
        let mut rows = Vec::new();
        for k in 0..10 {
            rows.push((0.1 + 0.01 * k as f64, true, vec![0.0]));
            rows.push((1.0 + 0.01 * k as f64, true, vec![1.0]));
        }
        let c = cohort(&rows);
        let cfg = ForestConfig { n_trees: 1, mtry: 1, min_unique_deaths: 3, seed: 1, bootstrap: false, full_forest_fallback: false };
        let f = fit_srf(&c, Arm::Treated, &cfg).unwrap();
        match &f.trees()[0].nodes[0] {
            TreeNode::Split { var, cut, .. } => {
                assert_eq!(*var, 0);
                assert_eq!(*cut, 0.0);
            }
            leaf => panic!("expected a split, got {leaf:?}"),
        }
        let s = f.predict(&[0.0], &[0.5]);
        assert_eq!(s[0], 0.0);
        assert_eq!(f.predict(&[1.0], &[0.5])[0], 1.0);
    }

    #[test]
    fn fenwick_sweep_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for trial in 0..200 {
            let m = rng.random_range(4..30);
            // coarse values create ties in both time and covariate
            let y: Vec<f64> = (0..m).map(|_| rng.random_range(0..8) as f64 * 0.5).collect();
            let e: Vec<bool> = (0..m).map(|_| rng.random_bool(0.7)).collect();
            let x: Vec<f64> = (0..m).map(|_| rng.random_range(0..6) as f64).collect();
            let risk = NodeRisk::new(&y, &e);
            let mut cuts = Vec::new();
            let min_deaths = 1 + trial % 2;
            sweep(&risk, &x, &e, min_deaths, Some(&mut cuts));
            for (cut, stat) in cuts {
                let left: Vec<bool> = x.iter().map(|&v| v <= cut).collect();
                let brute = log_rank_statistic(&y, &e, &left);
                assert!((stat - brute).abs() < 1e-9 * brute.max(1.0), "trial {trial} cut {cut}: {stat} vs {brute}");
            }
        }
    }

    #[test]
    fn out_of_bag_skips_trees_holding_the_subject() {
        let leaf = |v: f64| TreeNode::Leaf { curve: SurvivalCurve::from_steps(vec![1.0], vec![v]).unwrap() };
        let f = SurvivalForest {
            arm: Arm::Treated,
            trees: vec![SurvivalTree { nodes: vec![leaf(0.2)] }, SurvivalTree { nodes: vec![leaf(0.6)] }],
            in_bag: vec![vec![0], vec![1]],
            training_ids: vec![0, 1],
            fallback: false,
        };
        let c = cohort(&[(1.0, true, vec![]), (2.0, true, vec![]), (3.0, true, vec![])]);
        assert_eq!(f.predict_held_out(&c, 0, &[1.5]).unwrap(), vec![0.6]);
        assert_eq!(f.predict_held_out(&c, 1, &[1.5]).unwrap(), vec![0.2]);
        // id 2 was never trained on: all trees
        assert!((f.predict_held_out(&c, 2, &[1.5]).unwrap()[0] - 0.4).abs() < 1e-15);
        assert_eq!(f.predict_held_out_all(&c, &[1.5]).unwrap()[..2], [0.6, 0.2]);

        let g = SurvivalForest { in_bag: vec![vec![0, 1], vec![0]], ..f };
        assert!(matches!(g.predict_held_out(&c, 0, &[1.5]), Err(Error::NoOutOfBagTrees(0))));
        assert!(matches!(g.predict_held_out_all(&c, &[1.5]), Err(Error::NoOutOfBagTrees(0))));
        let h = SurvivalForest { fallback: true, ..g };
        assert!((h.predict_held_out(&c, 0, &[1.5]).unwrap()[0] - 0.4).abs() < 1e-15);
        assert_eq!(h.predict_held_out_all(&c, &[1.5]).unwrap()[1], 0.6);
    }

    #[test]
    fn duplicated_subjects_are_excluded_together() {
        let rows = random_rows(30, 1, 8);
        let base = cohort(&rows);
        let resampled = base.resample(&[0, 0, 1, 2, 3, 4, 5, 5, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16]);
        let cfg = ForestConfig { n_trees: 50, ..ForestConfig::for_dimension(1, 3) };
        let f = fit_srf(&resampled, Arm::Treated, &cfg).unwrap();
        let a = f.predict_held_out(&resampled, 0, &[0.5]).unwrap();
        let b = f.predict_held_out(&resampled, 1, &[0.5]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_covariates_out_of_bag_is_near_km() {
        let rows: Vec<_> = random_rows(120, 1, 5).into_iter().map(|(y, e, _)| (y, e, vec![0.0])).collect();
        let c = cohort(&rows);
        let f = fit_srf(&c, Arm::Treated, &ForestConfig::for_dimension(1, 17)).unwrap();
        let km = km_fit(&c.times(), &c.events()).unwrap();
        let grid: Vec<f64> = (1..20).map(|k| k as f64 * 0.05).collect();
        let all = f.predict_held_out_all(&c, &grid).unwrap();
        for i in 0..c.len() {
            for (g, t) in grid.iter().enumerate() {
                assert!((all[i * grid.len() + g] - km.eval(*t)).abs() < 0.05);
            }
        }
    }

    #[test]
    fn predictions_are_monotone_and_start_at_one() {
        let c = cohort(&random_rows(150, 4, 6));
        let cfg = ForestConfig { n_trees: 60, ..ForestConfig::for_dimension(4, 2) };
        let f = fit_srf(&c, Arm::Treated, &cfg).unwrap();
        let grid: Vec<f64> = (0..30).map(|k| k as f64 * 0.05).collect();
        let all = f.predict_held_out_all(&c, &grid).unwrap();
        for row in all.chunks(grid.len()) {
            assert_eq!(row[0], 1.0);
            assert!(row.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        }
        for i in 0..c.len() {
            assert_eq!(f.predict_held_out(&c, i, &grid).unwrap(), all[i * grid.len()..(i + 1) * grid.len()]);
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let c = cohort(&random_rows(80, 3, 7));
        let cfg = ForestConfig { n_trees: 20, ..ForestConfig::for_dimension(3, 11) };
        assert_eq!(fit_srf(&c, Arm::Treated, &cfg).unwrap(), fit_srf(&c, Arm::Treated, &cfg).unwrap());
        let other = ForestConfig { seed: 12, ..cfg.clone() };
        assert_ne!(fit_srf(&c, Arm::Treated, &cfg).unwrap(), fit_srf(&c, Arm::Treated, &other).unwrap());
    }

    #[test]
    fn rejects_bad_mtry() {
        let c = cohort(&random_rows(20, 2, 1));
        let cfg = ForestConfig { mtry: 3, ..ForestConfig::for_dimension(2, 1) };
        assert!(fit_srf(&c, Arm::Treated, &cfg).is_err());
    }
}
