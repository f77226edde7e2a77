//! Enumeration and sampling of supports with bounded weighted size
//! omega(Lambda) = sum_{j in Lambda} omega_j^2 <= s.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::sparsity::Weights;

/// Depth-first visit of every nonempty support with omega(Lambda) <= s,
/// pruning on the running weighted size. Returns the number of supports
/// visited, or a resource error once more than `max_supports` are seen.
pub(crate) fn for_each_support<F>(
    omega: &Weights,
    s: f64,
    max_supports: u64,
    mut visit: F,
) -> Result<u64>
where
    F: FnMut(&[usize]) -> Result<()>,
{
    let mut prefix: Vec<usize> = Vec::new();
    let mut count = 0u64;
    // iterative DFS over (next index to consider)
    fn rec<F: FnMut(&[usize]) -> Result<()>>(
        omega: &Weights,
        s: f64,
        start: usize,
        used: f64,
        prefix: &mut Vec<usize>,
        count: &mut u64,
        max_supports: u64,
        visit: &mut F,
    ) -> Result<()> {
        for j in start..omega.len() {
            let wj = omega.get(j).powi(2);
            if used + wj > s + 1e-12 {
                continue;
            }
            prefix.push(j);
            *count += 1;
            if *count > max_supports {
                return Err(Error::Resource(format!(
                    "support enumeration exceeded budget of {max_supports}"
                )));
            }
            visit(prefix)?;
            rec(omega, s, j + 1, used + wj, prefix, count, max_supports, visit)?;
            prefix.pop();
        }
        Ok(())
    }
    rec(omega, s, 0, 0.0, &mut prefix, &mut count, max_supports, &mut visit)?;
    Ok(count)
}

/// Count supports with omega(Lambda) <= s, saturating at `cap`.
pub(crate) fn count_supports(omega: &Weights, s: f64, cap: u64) -> u64 {
    match for_each_support(omega, s, cap, |_| Ok(())) {
        Ok(c) => c,
        Err(_) => cap,
    }
}

/// Random support of weighted size <= s: scan a shuffled index order and
/// greedily keep entries that still fit. Never returns an empty support
/// provided some singleton fits.
pub(crate) fn random_support(rng: &mut ChaCha20Rng, omega: &Weights, s: f64) -> Vec<usize> {
    let n = omega.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut used = 0.0;
    let mut supp: Vec<usize> = Vec::new();
    for &j in &order {
        let wj = omega.get(j).powi(2);
        if used + wj <= s + 1e-12 {
            used += wj;
            supp.push(j);
        }
    }
    supp.sort_unstable();
    supp
}

/// Uniform draw among all supports of weighted size <= s.
///
/// Uniform weights use the closed-form counts over sizes; general weights
/// enumerate (bounded by `enumeration_cap`) and index uniformly, falling
/// back to the greedy sampler when enumeration is too large.
pub(crate) fn uniform_support(
    rng: &mut ChaCha20Rng,
    omega: &Weights,
    s: f64,
) -> Result<Vec<usize>> {
    let n = omega.len();
    let min_w = (0..n).map(|j| omega.get(j).powi(2)).fold(f64::INFINITY, f64::min);
    if s + 1e-12 < min_w {
        return Err(Error::invalid(format!(
            "no admissible support: s = {s} is below the smallest weight {min_w}"
        )));
    }
    if omega.is_uniform() {
        let w = omega.get(0).powi(2);
        let kmax = ((s + 1e-12) / w).floor() as usize;
        let kmax = kmax.min(n).max(1);
        // size weights C(n,1)..C(n,kmax) in f64 (ratios are exact enough for sampling)
        let mut weights = Vec::with_capacity(kmax);
        let mut c = n as f64; // C(n,1)
        weights.push(c);
        for k in 2..=kmax {
            c *= (n - k + 1) as f64 / k as f64;
            weights.push(c);
        }
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut size = kmax;
        for (k, &wk) in weights.iter().enumerate() {
            if u < wk {
                size = k + 1;
                break;
            }
            u -= wk;
        }
        // uniform size-subset via partial Fisher-Yates
        let mut order: Vec<usize> = (0..n).collect();
        for i in 0..size {
            let j = rng.gen_range(i..n);
            order.swap(i, j);
        }
        let mut supp = order[..size].to_vec();
        supp.sort_unstable();
        return Ok(supp);
    }

    const ENUMERATION_CAP: u64 = 2_000_000;
    let count = count_supports(omega, s, ENUMERATION_CAP);
    if count >= ENUMERATION_CAP {
        // documented fallback: greedy non-uniform draw
        return Ok(random_support(rng, omega, s));
    }
    let target = rng.gen_range(0..count);
    let mut seen = 0u64;
    let mut chosen: Option<Vec<usize>> = None;
    let _ = for_each_support(omega, s, u64::MAX, |supp| {
        if seen == target {
            chosen = Some(supp.to_vec());
            return Err(Error::Resource("done".into())); // early exit
        }
        seen += 1;
        Ok(())
    });
    chosen.ok_or_else(|| Error::Numerical("uniform support selection failed".into()))
}
