//! Range-gated pairwise knowledge merging between agents.
//!
//! Agents within Euclidean distance `c` of each other form an edge;
//! connected components of that graph merge transitively (A-B-C merge even
//! when A and C are farther than `c` apart). Perception windows are
//! Chebyshev squares while the communication disc is Euclidean; the
//! mismatch is intentional.

use crate::gridmap::Position;
use crate::perception::KnowledgeMaps;
use crate::scalar::Scalar;

/// Connected components of the communication graph, inclusive at distance
/// exactly `c`. Groups are ordered by smallest member and members ascend.
pub fn comm_groups(positions: &[Position], range: u32) -> Vec<Vec<usize>> {
    let n = positions.len();
    let range_sq = (range as u64) * (range as u64);
    let mut group_of = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if group_of[i] != usize::MAX {
            continue;
        }
        let g = groups.len();
        let mut members = vec![i];
        group_of[i] = g;
        let mut cursor = 0;
        while cursor < members.len() {
            let a = members[cursor];
            cursor += 1;
            for b in 0..n {
                if group_of[b] == usize::MAX
                    && positions[a].euclidean_sq(positions[b]) <= range_sq
                {
                    group_of[b] = g;
                    members.push(b);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    groups
}

/// Pairs `(i, j)` with `i < j` whose Euclidean distance is at most `c`.
/// Used by the non-transitive communication mode.
pub fn comm_pairs(positions: &[Position], range: u32) -> Vec<(usize, usize)> {
    let range_sq = (range as u64) * (range as u64);
    let mut out = Vec::new();
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            if positions[i].euclidean_sq(positions[j]) <= range_sq {
                out.push((i, j));
            }
        }
    }
    out
}

/// Union of a group's knowledge: occupancy known by any member becomes known
/// to all, and each cell's time mark is the minimum over members that have
/// explored it.
pub fn merged_knowledge<'a, T, I>(members: I) -> KnowledgeMaps<T>
where
    T: Scalar,
    I: IntoIterator<Item = &'a KnowledgeMaps<T>>,
{
    let mut iter = members.into_iter();
    let mut merged = iter.next().expect("group must be non-empty").clone();
    for m in iter {
        merged.absorb(m);
    }
    merged
}

/// Merge every map in the slice; all end element-wise identical.
pub fn merge_group<T: Scalar>(maps: &mut [&mut KnowledgeMaps<T>]) {
    assert!(maps.len() >= 2, "merge requires at least two members");
    let merged = merged_knowledge(maps.iter().map(|m| &**m));
    for m in maps.iter_mut() {
        **m = merged.clone();
    }
}
