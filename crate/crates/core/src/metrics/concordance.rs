use crate::error::{Error, Result};
use crate::prediction::SurvivalPrediction;
use crate::scalar::Scalar;

fn column_for<T: Scalar>(pred: &SurvivalPrediction<T>, t: u32) -> usize {
    (t as usize).min(pred.grid_end() as usize)
}

/// Antolini time-dependent concordance. Pairs `(i, j)` are comparable when `i`
/// has an event and `T_j > T_i`; concordant when `S_i(T_i) < S_j(T_i)`, ties
/// count one half. Event times past the grid use its last column.
pub fn antolini_concordance<T: Scalar>(pred: &SurvivalPrediction<T>, times: &[u32], events: &[bool]) -> Result<T> {
    if pred.n_subjects() != times.len() || times.len() != events.len() {
        return Err(Error::Invalid("predictions, times and events differ in length".into()));
    }
    let mut event_times: Vec<u32> = times.iter().zip(events).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
    event_times.sort_unstable();
    event_times.dedup();
    // twice the concordance count, so ties stay integral
    let mut twice_concordant: u64 = 0;
    let mut pairs: u64 = 0;
    let mut at_risk: Vec<T> = Vec::with_capacity(times.len());
    for &t in &event_times {
        let col = column_for(pred, t);
        at_risk.clear();
        at_risk.extend((0..times.len()).filter(|&j| times[j] > t).map(|j| pred.survival[[j, col]]));
        if at_risk.is_empty() {
            continue;
        }
        at_risk.sort_by(|a, b| a.partial_cmp(b).expect("finite survival"));
        let m = at_risk.len() as u64;
        for i in (0..times.len()).filter(|&i| events[i] && times[i] == t) {
            let s = pred.survival[[i, col]];
            let below_or_eq = at_risk.partition_point(|&v| v <= s) as u64;
            let below = at_risk.partition_point(|&v| v < s) as u64;
            let greater = m - below_or_eq;
            let ties = below_or_eq - below;
            twice_concordant += 2 * greater + ties;
            pairs += m;
        }
    }
    if pairs == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(T::from_u64(twice_concordant).expect("count") / T::from_u64(2 * pairs).expect("count"))
}

/// O(n^2) pair scan of the same statistic; reference implementation.
pub fn antolini_concordance_brute<T: Scalar>(
    pred: &SurvivalPrediction<T>,
    times: &[u32],
    events: &[bool],
) -> Result<T> {
    let mut num = T::zero();
    let mut den = T::zero();
    let half = T::lit(0.5);
    for i in 0..times.len() {
        if !events[i] {
            continue;
        }
        let col = column_for(pred, times[i]);
        let si = pred.survival[[i, col]];
        for j in 0..times.len() {
            if times[j] > times[i] {
                den += T::one();
                let sj = pred.survival[[j, col]];
                if si < sj {
                    num += T::one();
                } else if si == sj {
                    num += half;
                }
            }
        }
    }
    if den == T::zero() {
        return Err(Error::NoComparablePairs);
    }
    Ok(num / den)
}

/// Harrell's C for a time-constant risk score (higher means earlier event).
pub fn harrell_c<T: Scalar>(risk: &[T], times: &[u32], events: &[bool]) -> Result<T> {
    let mut num = T::zero();
    let mut den = T::zero();
    for i in 0..times.len() {
        if !events[i] {
            continue;
        }
        for j in 0..times.len() {
            if times[j] > times[i] {
                den += T::one();
                if risk[i] > risk[j] {
                    num += T::one();
                } else if risk[i] == risk[j] {
                    num += T::lit(0.5);
                }
            }
        }
    }
    if den == T::zero() {
        return Err(Error::NoComparablePairs);
    }
    Ok(num / den)
}
