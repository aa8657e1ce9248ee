//! Mapping line numbers between two versions of a file.
//!
//! Resolution estimation needs to know where a commented line ended up in
//! the merged file. This uses a minimal line-diff (longest common
//! subsequence over lines): lines in unchanged runs map across, lines inside
//! changed hunks are unmapped. Mapped lines keep their relative order and no
//! two old lines map to the same new line.
//!
//! An AST-aware mapper could slot in behind the same signature; line-diff
//! alignment is language-independent and sufficient here.

/// Identifier reports can use to say how lines were mapped.
pub const MAPPING_METHOD: &str = "line-diff-lcs";

/// Upper bound on the DP table for the middle (non-common) region; beyond
/// this the middle is left unmapped rather than risking quadratic blowup.
const MAX_DP_CELLS: usize = 25_000_000;

/// For each old line (index 0 = line 1), the 1-based new line it maps to, or
/// `None` if the line was changed or deleted.
pub fn line_alignment(old_source: &str, new_source: &str) -> Vec<Option<u64>> {
    let old: Vec<&str> = old_source.lines().collect();
    let new: Vec<&str> = new_source.lines().collect();
    let mut map = vec![None; old.len()];

    // Common prefix and suffix map one-to-one; the DP only sees the middle.
    let mut prefix = 0;
    while prefix < old.len() && prefix < new.len() && old[prefix] == new[prefix] {
        map[prefix] = Some(prefix as u64 + 1);
        prefix += 1;
    }
    let mut suffix = 0;
    while suffix < old.len() - prefix
        && suffix < new.len() - prefix
        && old[old.len() - 1 - suffix] == new[new.len() - 1 - suffix]
    {
        map[old.len() - 1 - suffix] = Some((new.len() - suffix) as u64);
        suffix += 1;
    }

    let old_mid = &old[prefix..old.len() - suffix];
    let new_mid = &new[prefix..new.len() - suffix];
    if old_mid.is_empty() || new_mid.is_empty() {
        return map;
    }
    if old_mid.len().saturating_mul(new_mid.len()) > MAX_DP_CELLS {
        return map;
    }

    // Standard LCS length table over the middle, then backtrack to recover
    // the matched pairs.
    let (m, n) = (old_mid.len(), new_mid.len());
    let mut dp = vec![0u32; (m + 1) * (n + 1)];
    let at = |i: usize, j: usize| i * (n + 1) + j;
    for i in (0..m).rev() {
        for j in (0..n).rev() {
            dp[at(i, j)] = if old_mid[i] == new_mid[j] {
                dp[at(i + 1, j + 1)] + 1
            } else {
                dp[at(i + 1, j)].max(dp[at(i, j + 1)])
            };
        }
    }
    let (mut i, mut j) = (0, 0);
    while i < m && j < n {
        if old_mid[i] == new_mid[j] {
            map[prefix + i] = Some((prefix + j) as u64 + 1);
            i += 1;
            j += 1;
        } else if dp[at(i + 1, j)] >= dp[at(i, j + 1)] {
            i += 1;
        } else {
            j += 1;
        }
    }
    map
}

/// Where 1-based `old_line` of `old_source` lives in `new_source`, or `None`
/// if the line was changed, deleted, or out of range.
pub fn map_line(old_source: &str, new_source: &str, old_line: u64) -> Option<u64> {
    if old_line == 0 {
        return None;
    }
    let alignment = line_alignment(old_source, new_source);
    alignment.get(old_line as usize - 1).copied().flatten()
}
