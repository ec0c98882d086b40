use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::tree::DraftTreeTemplate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResult {
    pub template: DraftTreeTemplate,
    /// Original index of each kept node, in new index order.
    pub kept: Vec<usize>,
    /// Rates of the kept nodes after clamping.
    pub rates: Vec<f64>,
    /// Nodes (original indices) whose rate exceeded their parent's and was
    /// lowered to it.
    pub clamped: Vec<usize>,
}

/// Lowers every rate to at most its parent's, so rates never increase going
/// down the tree. Returns the clamped rates and the nodes that changed.
pub fn clamp_rates(template: &DraftTreeTemplate, rates: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut out = rates.to_vec();
    let mut changed = Vec::new();
    for i in 1..template.len() {
        let p = template.parent(i).expect("non-root has a parent");
        if out[i] > out[p] {
            out[i] = out[p];
            changed.push(i);
        }
    }
    (out, changed)
}

/// Removes the `n` non-root nodes with the lowest acceptance rates, ties going
/// to the deeper node, then the higher index. Rates are clamped first, which
/// makes the removed set closed under descendants and the result a tree.
pub fn prune_tree(
    template: &DraftTreeTemplate,
    rates: &[f64],
    n: usize,
) -> Result<PruneResult, AnalysisError> {
    if rates.len() != template.len() {
        return Err(AnalysisError::Domain(format!(
            "{} rates for a template of {} nodes",
            rates.len(),
            template.len()
        )));
    }
    if n >= template.len() {
        return Err(AnalysisError::Domain(format!(
            "cannot remove {n} nodes from a template of {}",
            template.len()
        )));
    }
    let (rates, clamped) = clamp_rates(template, rates);
    let mut order: Vec<usize> = (1..template.len()).collect();
    order.sort_by(|&a, &b| {
        rates[a]
            .total_cmp(&rates[b])
            .then(template.depth_of(b).cmp(&template.depth_of(a)))
            .then(b.cmp(&a))
    });
    let mut keep = vec![true; template.len()];
    for &i in &order[..n] {
        keep[i] = false;
    }
    let kept: Vec<usize> = (0..template.len()).filter(|&i| keep[i]).collect();
    Ok(PruneResult {
        template: template.restrict(&keep),
        rates: kept.iter().map(|&i| rates[i]).collect(),
        kept,
        clamped,
    })
}

/// Evaluation log of a search, in call order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchLog {
    pub best: usize,
    pub evaluations: Vec<(usize, f64)>,
}

/// Maximizes `f` over the integers `lo..=hi`, assuming it is unimodal.
///
/// Golden-section bracketing on integers until at most four candidates are
/// left, then an exhaustive sweep of them. Both endpoints are always
/// evaluated. Each point is evaluated once; the best point seen wins, ties
/// going to the smallest argument.
pub fn golden_section_max<F: FnMut(usize) -> f64>(lo: usize, hi: usize, mut f: F) -> SearchLog {
    assert!(lo <= hi, "empty search interval");
    let mut memo = BTreeMap::new();
    let mut evaluations = Vec::new();
    let mut eval = |n: usize| -> f64 {
        *memo.entry(n).or_insert_with(|| {
            let v = f(n);
            evaluations.push((n, v));
            v
        })
    };
    eval(lo);
    eval(hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    while b - a > 3 {
        let w = (b - a) as f64;
        let c = a + (w * (1.0 - inv_phi)).round() as usize;
        let mut d = a + (w * inv_phi).round() as usize;
        if d <= c {
            d = c + 1;
        }
        let (fc, fd) = (eval(c), eval(d));
        if fc < fd {
            a = c + 1;
        } else if fc > fd {
            b = d - 1;
        } else {
            a = c;
            b = d;
        }
    }
    for n in a..=b {
        eval(n);
    }
    let best = memo
        .iter()
        .fold(None::<(usize, f64)>, |acc, (&n, &v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((n, v)),
        })
        .expect("at least one evaluation")
        .0;
    SearchLog { best, evaluations }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub n_star: usize,
    pub template: DraftTreeTemplate,
    pub evaluations: Vec<(usize, f64)>,
}

/// Picks how many nodes to prune from `template` by golden-section search
/// over `n ∈ [0, |T0| - 1]`, scoring each pruned tree with `evaluate`.
pub fn golden_section_tune<F>(
    template: &DraftTreeTemplate,
    rates: &[f64],
    mut evaluate: F,
) -> Result<TuneResult, AnalysisError>
where
    F: FnMut(&DraftTreeTemplate) -> f64,
{
    // validate once up front so the closure below cannot fail
    prune_tree(template, rates, 0)?;
    let log = golden_section_max(0, template.len() - 1, |n| {
        evaluate(
            &prune_tree(template, rates, n)
                .expect("n below node count")
                .template,
        )
    });
    Ok(TuneResult {
        n_star: log.best,
        template: prune_tree(template, rates, log.best)?.template,
        evaluations: log.evaluations,
    })
}
