//! Helpers shared by the integration suites: an independently written
//! unified-diff generator (so diff parsing and changed-line filtering are
//! checked against a second implementation, not themselves), HTTP helpers,
//! and a guard that runs the real binary as a server and kills it on drop.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader};
use std::process::{Child, Command, Stdio};

/// The documented Go example: an exported function whose doc comment does
/// not start with the function's name.
pub const GO_LISTING: &str = "// Package addition provides Add\npackage addition\n\n// Return a sum\nfunc Add(value1, value2 int) int {\n\treturn value1 + value2\n}\n";

/// Longest-common-subsequence line matches between two files, as ascending
/// (old_index, new_index) pairs. Deliberately separate from the library's
/// line mapper: this is the oracle side.
pub fn lcs_matches(old: &[&str], new: &[&str]) -> Vec<(usize, usize)> {
    let (m, n) = (old.len(), new.len());
    let mut dp = vec![0u32; (m + 1) * (n + 1)];
    let at = |i: usize, j: usize| i * (n + 1) + j;
    for i in (0..m).rev() {
        for j in (0..n).rev() {
            dp[at(i, j)] = if old[i] == new[j] {
                dp[at(i + 1, j + 1)] + 1
            } else {
                dp[at(i + 1, j)].max(dp[at(i, j + 1)])
            };
        }
    }
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < m && j < n {
        if old[i] == new[j] {
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if dp[at(i + 1, j)] >= dp[at(i, j + 1)] {
            i += 1;
        } else {
            j += 1;
        }
    }
    pairs
}

/// A unified diff (zero context lines) turning `old` into `new`.
pub fn unified_diff(old: &str, new: &str, path: &str) -> String {
    let old_lines: Vec<&str> = old.lines().collect();
    let new_lines: Vec<&str> = new.lines().collect();
    let matches = lcs_matches(&old_lines, &new_lines);

    let old_header = if old.is_empty() {
        "--- /dev/null\n".to_string()
    } else {
        format!("--- a/{path}\n")
    };
    let mut text = format!("{old_header}+++ b/{path}\n");

    let mut prev_old = 0usize;
    let mut prev_new = 0usize;
    let emit = |text: &mut String, del_from: usize, del_to: usize, add_from: usize, add_to: usize| {
        let dels = del_to - del_from;
        let adds = add_to - add_from;
        if dels == 0 && adds == 0 {
            return;
        }
        // Unified convention: a zero-length range names the line *before*
        // the gap.
        let a = if dels == 0 { del_from } else { del_from + 1 };
        let c = if adds == 0 { add_from } else { add_from + 1 };
        text.push_str(&format!("@@ -{a},{dels} +{c},{adds} @@\n"));
        for line in &old_lines[del_from..del_to] {
            text.push_str(&format!("-{line}\n"));
        }
        for line in &new_lines[add_from..add_to] {
            text.push_str(&format!("+{line}\n"));
        }
    };
    for (mi, mj) in matches.iter().copied() {
        emit(&mut text, prev_old, mi, prev_new, mj);
        prev_old = mi + 1;
        prev_new = mj + 1;
    }
    emit(
        &mut text,
        prev_old,
        old_lines.len(),
        prev_new,
        new_lines.len(),
    );
    text
}

/// 1-based new-file line numbers not carried over from `old` — the lines a
/// reviewer would see as added.
pub fn added_lines(old: &str, new: &str) -> BTreeSet<u64> {
    let old_lines: Vec<&str> = old.lines().collect();
    let new_lines: Vec<&str> = new.lines().collect();
    let matched: BTreeSet<usize> = lcs_matches(&old_lines, &new_lines)
        .into_iter()
        .map(|(_, j)| j)
        .collect();
    (0..new_lines.len())
        .filter(|j| !matched.contains(j))
        .map(|j| j as u64 + 1)
        .collect()
}

/// The compiled binary under test.
pub fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_precept"))
}

/// A running `precept serve` on an OS-assigned port, killed on drop.
pub struct ServerGuard {
    child: Child,
    pub base: String,
}

impl ServerGuard {
    /// Spawns `precept serve --port 0 <extra args>` and waits for it to
    /// announce its address.
    pub fn spawn(extra_args: &[&str]) -> ServerGuard {
        let mut child = binary()
            .args(["serve", "--port", "0"])
            .args(extra_args)
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawning the server binary");
        let stdout = child.stdout.take().expect("stdout piped");
        let mut reader = BufReader::new(stdout);
        let mut line = String::new();
        reader
            .read_line(&mut line)
            .expect("reading the server's startup line");
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected startup line: {line:?}"));
        let base = format!("http://{addr}");
        // Keep draining stdout so the child never blocks on a full pipe.
        std::thread::spawn(move || {
            let mut sink = String::new();
            loop {
                sink.clear();
                match reader.read_line(&mut sink) {
                    Ok(0) | Err(_) => return,
                    Ok(_) => {}
                }
            }
        });
        ServerGuard { child, base }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }
}

impl Drop for ServerGuard {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// POSTs JSON and returns (status, body) for any HTTP status; panics only on
/// transport failure.
pub fn post_json(url: &str, body: &serde_json::Value) -> (u16, serde_json::Value) {
    match ureq::post(url).send_json(body.clone()) {
        Ok(resp) => {
            let status = resp.status();
            (status, resp.into_json().unwrap_or(serde_json::Value::Null))
        }
        Err(ureq::Error::Status(status, resp)) => {
            (status, resp.into_json().unwrap_or(serde_json::Value::Null))
        }
        Err(err) => panic!("transport error for {url}: {err}"),
    }
}

pub fn get_json(url: &str) -> (u16, serde_json::Value) {
    match ureq::get(url).call() {
        Ok(resp) => {
            let status = resp.status();
            (status, resp.into_json().unwrap_or(serde_json::Value::Null))
        }
        Err(ureq::Error::Status(status, resp)) => {
            (status, resp.into_json().unwrap_or(serde_json::Value::Null))
        }
        Err(err) => panic!("transport error for {url}: {err}"),
    }
}
