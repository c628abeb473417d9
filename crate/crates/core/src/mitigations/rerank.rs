//! Fairness-constrained re-ranking of base top-m lists.

use crate::data::GroupAssignment;
use crate::error::{Error, Result};
use crate::models::TopNLists;

#[derive(Debug, Clone, PartialEq)]
pub struct RerankOutcome {
    pub lists: TopNLists,
    /// `U0 - U1` of the top-n prefixes.
    pub base_gap: f64,
    /// `U0 - U1` of the output.
    pub gap: f64,
    /// Total predicted score of the output.
    pub utility: f64,
    pub feasible: bool,
    pub swaps: usize,
}

struct UserState {
    group: Option<u8>,
    /// base candidates, best first
    scores: Vec<f64>,
    selected: Vec<bool>,
    /// `(delta utility, out, in)` sorted by delta descending
    moves: Vec<(f64, usize, usize)>,
}

impl UserState {
    fn refresh_moves(&mut self) {
        self.moves.clear();
        for a in 0..self.scores.len() {
            if !self.selected[a] {
                continue;
            }
            for b in 0..self.scores.len() {
                if !self.selected[b] {
                    self.moves.push((self.scores[b] - self.scores[a], a, b));
                }
            }
        }
        self.moves.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    }

    fn utility(&self) -> f64 {
        self.scores.iter().zip(&self.selected).filter(|e| *e.1).map(|e| e.0).sum()
    }
}

/// Group utilities `U_g` (mean over the group's users of the summed
/// selected scores) from per-group sums and sizes.
fn gap(sums: [f64; 2], sizes: [f64; 2]) -> f64 {
    sums[0] / sizes[0] - sums[1] / sizes[1]
}

/// Applies move `m` and returns its utility change.
fn apply(st: &mut UserState, m: usize) -> f64 {
    let (d, out, inn) = st.moves[m];
    st.selected[out] = false;
    st.selected[inn] = true;
    st.refresh_moves();
    d
}

/// Largest number of joint combinations the fallback search enumerates.
const JOINT_SEARCH_LIMIT: usize = 1 << 16;

/// Largest number of subsets of one user's list enumerated as options.
const SUBSET_LIMIT: usize = 64;

impl UserState {
    /// Alternative selections `(utility change, selection)`: every other
    /// subset of the same size when there are few, else single swaps.
    fn options(&self) -> Vec<(f64, Vec<bool>)> {
        let len = self.scores.len();
        let n = self.selected.iter().filter(|&&x| x).count();
        let subsets = (0..n).fold(1usize, |acc, j| acc.saturating_mul(len - j) / (j + 1));
        let current = self.utility();
        if len < usize::BITS as usize && subsets <= SUBSET_LIMIT {
            (0usize..1 << len)
                .filter(|mask| mask.count_ones() as usize == n)
                .map(|mask| (0..len).map(|k| mask & (1 << k) != 0).collect::<Vec<bool>>())
                .filter(|sel| *sel != self.selected)
                .map(|sel| {
                    let u: f64 = self.scores.iter().zip(&sel).filter(|e| *e.1).map(|e| e.0).sum();
                    (u - current, sel)
                })
                .collect()
        } else {
            self.moves
                .iter()
                .map(|&(d, out, inn)| {
                    let mut sel = self.selected.clone();
                    sel[out] = false;
                    sel[inn] = true;
                    (d, sel)
                })
                .collect()
        }
    }
}

/// Best-utility combination of at most one alternative selection per
/// labeled user whose `(utility change, gap change)` satisfies `accept`, for
/// when no single swap does. Skipped when the combinations exceed the limit.
fn best_joint(
    users: &[(&String, UserState)],
    shift: &impl Fn(u8, f64) -> f64,
    accept: impl Fn(f64, f64) -> bool,
) -> Option<Vec<(usize, Vec<bool>)>> {
    let mut labeled: Vec<(usize, u8, Vec<(f64, Vec<bool>)>)> = Vec::new();
    let mut combos: usize = 1;
    for (k, (_, st)) in users.iter().enumerate() {
        let Some(g) = st.group else { continue };
        let opts = st.options();
        combos = combos.saturating_mul(opts.len() + 1);
        if combos > JOINT_SEARCH_LIMIT {
            return None;
        }
        labeled.push((k, g, opts));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut choice = vec![0usize; labeled.len()];
    loop {
        let mut d = 0.0;
        let mut delta = 0.0;
        for (c, (_, g, opts)) in choice.iter().zip(&labeled) {
            if *c > 0 {
                d += opts[c - 1].0;
                delta += shift(*g, opts[c - 1].0);
            }
        }
        if choice.iter().any(|&c| c > 0) && accept(d, delta) && best.as_ref().is_none_or(|b| d > b.0) {
            best = Some((d, choice.clone()));
        }
        let mut pos = 0;
        loop {
            if pos == labeled.len() {
                let (_, picked) = best?;
                return Some(
                    picked
                        .into_iter()
                        .zip(labeled)
                        .filter(|e| e.0 > 0)
                        .map(|(c, (k, _, mut opts))| (k, opts.swap_remove(c - 1).1))
                        .collect(),
                );
            }
            choice[pos] += 1;
            if choice[pos] <= labeled[pos].2.len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

/// Applies a joint move and returns the number of item swaps it makes.
fn apply_joint(users: &mut [(&String, UserState)], sums: &mut [f64; 2], joint: Vec<(usize, Vec<bool>)>) -> usize {
    let mut swaps = 0;
    for (k, selection) in joint {
        let st = &mut users[k].1;
        swaps += st.selected.iter().zip(&selection).filter(|(a, b)| **a && !**b).count();
        sums[st.group.unwrap() as usize] += select(st, selection);
    }
    swaps
}

/// Replaces a user's selection and returns the utility change.
fn select(st: &mut UserState, selection: Vec<bool>) -> f64 {
    let before = st.utility();
    st.selected = selection;
    st.refresh_moves();
    st.utility() - before
}

/// Selects `n` items per user from the base lists, maximizing total predicted
/// score subject to `|U0 - U1| <= epsilon`.
///
/// Greedy exchange: starting from the top-n prefixes, repeatedly apply the
/// single swap (selected item out, unselected base item in) with the best
/// utility change among those that shrink `|U0 - U1|`, until the constraint
/// holds or no swap helps. When no single swap helps, small instances fall
/// back to the best joint change of at most one alternative selection per
/// user. Once feasible, swaps that raise utility while
/// staying feasible are applied, with the same fallback. Unlabeled users keep their prefix.
pub fn rerank_fair(base: &TopNLists, groups: &GroupAssignment, n: usize, epsilon: f64) -> Result<RerankOutcome> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::invalid(format!("epsilon must be >= 0, got {epsilon}")));
    }
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut users: Vec<(&String, UserState)> = base
        .iter()
        .map(|(u, list)| {
            let keep = n.min(list.len());
            let mut st = UserState {
                group: groups.group_of(u),
                scores: list.iter().map(|e| e.1).collect(),
                selected: (0..list.len()).map(|k| k < keep).collect(),
                moves: Vec::new(),
            };
            if st.group.is_some() {
                st.refresh_moves();
            }
            (u, st)
        })
        .collect();
    let mut sizes = [0.0; 2];
    let mut sums = [0.0; 2];
    for (_, st) in &users {
        if let Some(g) = st.group {
            sizes[g as usize] += 1.0;
            sums[g as usize] += st.utility();
        }
    }
    if sizes[0] == 0.0 || sizes[1] == 0.0 {
        return Err(Error::EmptyGroup(if sizes[0] == 0.0 { 0 } else { 1 }));
    }
    let base_gap = gap(sums, sizes);
    let mut swaps = 0;

    // gap change of a move with utility change `d` for a user of group `g`
    let shift = |g: u8, d: f64| if g == 0 { d / sizes[0] } else { -d / sizes[1] };

    // phase 1: shrink the gap
    loop {
        let current = gap(sums, sizes);
        if current.abs() <= epsilon {
            break;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for (k, (_, st)) in users.iter().enumerate() {
            let Some(g) = st.group else { continue };
            for (m, &(d, _, _)) in st.moves.iter().enumerate() {
                let next = current + shift(g, d);
                if next.abs() < current.abs() - 1e-15 {
                    if best.is_none_or(|b| d > b.0) {
                        best = Some((d, k, m));
                    }
                    // later moves of this user have lower utility
                    break;
                }
                if d < 0.0 {
                    // later moves shift the gap at least as far
                    break;
                }
            }
        }
        match best {
            Some((_, k, m)) => {
                sums[users[k].1.group.unwrap() as usize] += apply(&mut users[k].1, m);
                swaps += 1;
            }
            None => {
                let accept = |_, delta: f64| (current + delta).abs() < current.abs() - 1e-15;
                let Some(joint) = best_joint(&users, &shift, accept) else { break };
                swaps += apply_joint(&mut users, &mut sums, joint);
            }
        }
    }

    // phase 2: recover utility without breaking feasibility
    if gap(sums, sizes).abs() <= epsilon && epsilon.is_finite() {
        loop {
            let current = gap(sums, sizes);
            let mut best: Option<(f64, usize, usize)> = None;
            for (k, (_, st)) in users.iter().enumerate() {
                let Some(g) = st.group else { continue };
                for (m, &(d, _, _)) in st.moves.iter().enumerate() {
                    if d <= 1e-12 {
                        break;
                    }
                    if (current + shift(g, d)).abs() <= epsilon {
                        if best.is_none_or(|b| d > b.0) {
                            best = Some((d, k, m));
                        }
                        break;
                    }
                }
            }
            match best {
                Some((_, k, m)) => {
                    sums[users[k].1.group.unwrap() as usize] += apply(&mut users[k].1, m);
                    swaps += 1;
                }
                None => {
                    let accept = |d: f64, delta: f64| d > 1e-12 && (current + delta).abs() <= epsilon;
                    let Some(joint) = best_joint(&users, &shift, accept) else { break };
                    swaps += apply_joint(&mut users, &mut sums, joint);
                }
            }
        }
    }

    let final_gap = gap(sums, sizes);
    let mut utility = 0.0;
    let lists: TopNLists = users
        .iter()
        .map(|(u, st)| {
            let list = base.get(u).unwrap();
            let chosen: Vec<(String, f64)> =
                list.iter().zip(&st.selected).filter(|e| *e.1).map(|e| e.0.clone()).collect();
            utility += chosen.iter().map(|e| e.1).sum::<f64>();
            ((*u).clone(), chosen)
        })
        .collect();
    Ok(RerankOutcome {
        lists,
        base_gap,
        gap: final_gap,
        utility,
        feasible: final_gap.abs() <= epsilon,
        swaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(rows: &[(&str, &[f64])]) -> TopNLists {
        rows.iter()
            .map(|(u, s)| (u.to_string(), s.iter().enumerate().map(|(k, &x)| (format!("{u}-i{k}"), x)).collect()))
            .collect()
    }

    #[test]
    fn infinite_epsilon_is_truncation() {
        let b = base(&[("a", &[0.9, 0.8, 0.1]), ("b", &[0.5, 0.4, 0.3])]);
        let g = GroupAssignment::from_pairs("g", [("a", 0), ("b", 1)]).unwrap();
        let out = rerank_fair(&b, &g, 2, f64::INFINITY).unwrap();
        assert_eq!(out.lists, b.truncated(2));
        assert_eq!(out.swaps, 0);
    }

    #[test]
    fn two_user_example_matches_enumeration() {
        let b = base(&[("u1", &[0.9, 0.8, 0.1]), ("u2", &[0.5, 0.4, 0.3])]);
        let g = GroupAssignment::from_pairs("g", [("u1", 0), ("u2", 1)]).unwrap();
        let out = rerank_fair(&b, &g, 2, 0.25).unwrap();
        // selections: {.9,.1} = 1.0 vs {.5,.4} = .9, gap .1, utility 1.9
        assert!(out.feasible);
        assert!((out.gap - 0.1).abs() < 1e-12);
        assert!((out.utility - 1.9).abs() < 1e-12);
        assert!(rerank_fair(&b, &g, 2, -1.0).is_err());
    }

    #[test]
    fn joint_move_when_every_single_swap_overshoots() {
        let b = base(&[("a", &[0.50, 0.10, 0.05]), ("b", &[0.45, 0.08, 0.02])]);
        let g = GroupAssignment::from_pairs("g", [("a", 0), ("b", 1)]).unwrap();
        let out = rerank_fair(&b, &g, 1, 0.03).unwrap();
        // best feasible pair: {.10} vs {.08}
        assert!(out.feasible);
        assert!((out.gap - 0.02).abs() < 1e-12);
        assert!((out.utility - 0.18).abs() < 1e-12);
        assert_eq!(out.swaps, 2);
    }
}
