//! Independent scalar oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rrboost::tree::{fit_tree, Node, SplitCriterion, Tree};
use rrboost::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Bisquare ρ written as a polynomial in t = (u/c)².
pub fn tukey_rho(u: f64, c: f64) -> f64 {
    if u.abs() >= c {
        return 1.0;
    }
    let t = (u / c) * (u / c);
    3.0 * t - 3.0 * t * t + t * t * t
}

/// Plain bisection on σ for mean ρ(r/σ) = κ.
pub fn mscale_bisect(r: &[f64], c: f64, kappa: f64) -> f64 {
    let f = |s: f64| r.iter().map(|&v| tukey_rho(v / s, c)).sum::<f64>() / r.len() as f64 - kappa;
    let top = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (mut lo, mut hi) = (top * 1e-12, top * 1e6);
    assert!(f(lo) > 0.0 && f(hi) < 0.0, "oracle bracket");
    for _ in 0..400 {
        let mid = if hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn sorted_median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn impurity(v: &[f64], crit: SplitCriterion) -> f64 {
    match crit {
        SplitCriterion::LeastSquares => {
            let m = mean(v);
            v.iter().map(|x| (x - m) * (x - m)).sum()
        }
        SplitCriterion::LeastAbsolute => {
            let m = sorted_median(v);
            v.iter().map(|x| (x - m).abs()).sum()
        }
    }
}

pub fn leaf(v: &[f64], crit: SplitCriterion) -> f64 {
    match crit {
        SplitCriterion::LeastSquares => mean(v),
        SplitCriterion::LeastAbsolute => sorted_median(v),
    }
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub feature: usize,
    pub left: Vec<bool>,
    pub impurity: f64,
}

/// Every admissible single split `x_j ≤ v`, v ranging over distinct values.
pub fn all_stumps(x: &Matrix, y: &[f64], crit: SplitCriterion, min_node: usize) -> Vec<Candidate> {
    let n = y.len();
    let mut out = Vec::new();
    for j in 0..x.n_cols() {
        let mut vals = x.column(j);
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for &v in &vals[..vals.len().saturating_sub(1)] {
            let left: Vec<bool> = (0..n).map(|i| x.get(i, j) <= v).collect();
            let (l, r): (Vec<f64>, Vec<f64>) = {
                let l = (0..n).filter(|&i| left[i]).map(|i| y[i]).collect();
                let r = (0..n).filter(|&i| !left[i]).map(|i| y[i]).collect();
                (l, r)
            };
            if l.len() < min_node || r.len() < min_node {
                continue;
            }
            out.push(Candidate {
                feature: j,
                left,
                impurity: impurity(&l, crit) + impurity(&r, crit),
            });
        }
    }
    out
}

pub fn random_problem(rng: &mut impl Rng, n: usize, p: usize, coarse: bool) -> (Matrix, Vec<f64>) {
    let mut data = Vec::with_capacity(n * p);
    for _ in 0..n * p {
        let v: f64 = rng.random();
        data.push(if coarse { (v * 6.0).floor() / 6.0 } else { v });
    }
    let x = Matrix::new(n, p, data).unwrap();
    let y = (0..n)
        .map(|i| {
            let shift = if x.get(i, 0) > 0.5 { 1.0 } else { 0.0 };
            shift + rng.random::<f64>() + if rng.random::<f64>() < 0.1 { 10.0 } else { 0.0 }
        })
        .collect();
    (x, y)
}

/// Checks a fitted depth-1 tree against exhaustive enumeration.
pub fn check_stump(x: &Matrix, y: &[f64], crit: SplitCriterion, min_node: usize) -> Result<(), String> {
    let tree: Tree = fit_tree(x, y, crit, 1, min_node).map_err(|e| e.to_string())?;
    let n = y.len();
    let parent = impurity(y, crit);
    let cands = all_stumps(x, y, crit, min_node);
    let best = cands.iter().map(|c| c.impurity).fold(f64::INFINITY, f64::min);
    let improves = best < parent - 1e-12 * parent;
    match (&tree.root, improves) {
        (Node::Leaf { value }, false) => {
            if *value != leaf(y, crit) {
                return Err(format!("leaf {value} != oracle {}", leaf(y, crit)));
            }
        }
        (Node::Leaf { .. }, true) => return Err(format!("no split although {best} < {parent}")),
        (Node::Split { .. }, false) => return Err("split although nothing improves".into()),
        (Node::Split { feature, threshold, left, right }, true) => {
            let mask: Vec<bool> = (0..n).map(|i| x.get(i, *feature) <= *threshold).collect();
            let l: Vec<f64> = (0..n).filter(|&i| mask[i]).map(|i| y[i]).collect();
            let r: Vec<f64> = (0..n).filter(|&i| !mask[i]).map(|i| y[i]).collect();
            let got = impurity(&l, crit) + impurity(&r, crit);
            if got > best + 1e-12 * best.max(1.0) {
                return Err(format!("fitted impurity {got} exceeds oracle {best}"));
            }
            let winners: Vec<&Candidate> = cands
                .iter()
                .filter(|c| c.impurity <= best + 1e-9 * best.max(1.0))
                .collect();
            if !winners.iter().any(|c| c.feature == *feature && c.left == mask) {
                return Err("fitted partition is not an oracle minimiser".into());
            }
            let (lv, rv) = match (left.as_ref(), right.as_ref()) {
                (Node::Leaf { value: a }, Node::Leaf { value: b }) => (*a, *b),
                _ => return Err("depth-1 tree has internal children".into()),
            };
            if lv != leaf(&l, crit) || rv != leaf(&r, crit) {
                return Err(format!("leaf values ({lv}, {rv}) differ from oracle"));
            }
        }
    }
    Ok(())
}
