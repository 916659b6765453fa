//! Friend-network representation and generators.
//!
//! The network on `n` units is stored as one friend list per unit, using
//! 1-based unit indices and canonical ascending order within each row. The
//! padded `n x kmax` view with trailing MISSING entries only materializes at
//! the CSV boundary and in [`PaddedNetwork`].

use crate::error::{Error, Result};
use rand::Rng;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

/// Friend network on `n` units: row `i` holds the friends of unit `i+1`
/// as ascending 1-based indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkMatrix {
    rows: Vec<Vec<u32>>,
    kmax: usize,
}

/// Raw padded matrix as it appears on disk; may violate invariants.
#[derive(Debug, Clone)]
pub struct PaddedNetwork {
    pub n: usize,
    pub kmax: usize,
    /// `entries[i]` has length `kmax`; `None` is the MISSING padding marker.
    pub entries: Vec<Vec<Option<u32>>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SelfFriendship { unit: u32 },
    NonTrailingPadding { unit: u32 },
    DuplicateIndex { unit: u32, index: u32 },
    OutOfRange { unit: u32, index: u32 },
    FriendCountMismatch { unit: u32 },
    KmaxMismatch { stated: usize, actual: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::SelfFriendship { unit } => write!(f, "unit {unit}: self-friendship"),
            Violation::NonTrailingPadding { unit } => {
                write!(f, "unit {unit}: non-trailing padding")
            }
            Violation::DuplicateIndex { unit, index } => {
                write!(f, "unit {unit}: duplicate friend index {index}")
            }
            Violation::OutOfRange { unit, index } => {
                write!(f, "unit {unit}: friend index {index} out of range")
            }
            Violation::FriendCountMismatch { unit } => {
                write!(f, "unit {unit}: n_friends does not match row contents")
            }
            Violation::KmaxMismatch { stated, actual } => {
                write!(f, "kmax mismatch: stated {stated}, max row length {actual}")
            }
        }
    }
}

/// Check every [`PaddedNetwork`] invariant, returning all violations found.
pub fn validate(p: &PaddedNetwork) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut max_len = 0usize;
    for (i, row) in p.entries.iter().enumerate() {
        let unit = (i + 1) as u32;
        let mut seen = HashSet::new();
        let mut padding_started = false;
        let mut count = 0usize;
        for entry in row {
            match entry {
                None => padding_started = true,
                Some(j) => {
                    if padding_started {
                        out.push(Violation::NonTrailingPadding { unit });
                        padding_started = false; // report once per gap
                    }
                    count += 1;
                    if *j == unit {
                        out.push(Violation::SelfFriendship { unit });
                    }
                    if *j < 1 || *j as usize > p.n {
                        out.push(Violation::OutOfRange { unit, index: *j });
                    } else if !seen.insert(*j) {
                        out.push(Violation::DuplicateIndex { unit, index: *j });
                    }
                }
            }
        }
        max_len = max_len.max(count);
    }
    if p.kmax != max_len {
        out.push(Violation::KmaxMismatch {
            stated: p.kmax,
            actual: max_len,
        });
    }
    out
}

impl TryFrom<PaddedNetwork> for NetworkMatrix {
    type Error = Error;

    fn try_from(p: PaddedNetwork) -> Result<Self> {
        let violations = validate(&p);
        if !violations.is_empty() {
            let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::validation(msgs.join("; ")));
        }
        let rows = p
            .entries
            .into_iter()
            .map(|r| {
                let mut v: Vec<u32> = r.into_iter().flatten().collect();
                v.sort_unstable();
                v
            })
            .collect();
        Ok(NetworkMatrix::from_rows(rows))
    }
}

impl NetworkMatrix {
    fn from_rows(rows: Vec<Vec<u32>>) -> Self {
        let kmax = rows.iter().map(Vec::len).max().unwrap_or(0);
        NetworkMatrix { rows, kmax }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    /// Friends of unit `i` (0-based position), ascending 1-based indices.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn n_friends(&self, i: usize) -> usize {
        self.rows[i].len()
    }

    pub fn n_friends_vec(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.len() as f64).collect()
    }

    /// Undirected Erdos-Renyi G(n, p) with symmetric friendship.
    pub fn gen_gnp(n: usize, p: f64, rng: &mut impl Rng) -> Result<Self> {
        if n == 0 {
            return Err(Error::parameter("gnp: n must be >= 1"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::parameter(format!("gnp: p={p} outside [0,1]")));
        }
        let mut rows = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < p {
                    rows[i].push((j + 1) as u32);
                    rows[j].push((i + 1) as u32);
                }
            }
        }
        for r in &mut rows {
            r.sort_unstable();
        }
        Ok(NetworkMatrix::from_rows(rows))
    }

    /// Watts-Strogatz small world: ring lattice with `nei` neighbors on each
    /// side, then every lattice edge rewired with probability `p` (keeping the
    /// lower endpoint, redrawing the other until it is neither a self loop nor
    /// a duplicate). Edge count is invariant under rewiring: `n * nei`.
    pub fn gen_small_world(
        n: usize,
        dim: usize,
        nei: usize,
        p: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if dim != 1 {
            return Err(Error::parameter("small_world: only dim = 1 is supported"));
        }
        if nei == 0 {
            return Err(Error::parameter("small_world: nei must be >= 1"));
        }
        if n < 2 * nei + 1 {
            return Err(Error::parameter(format!(
                "small_world: n={n} too small for nei={nei} (need n >= {})",
                2 * nei + 1
            )));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::parameter(format!(
                "small_world: p={p} outside [0,1]"
            )));
        }
        let norm = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        let mut lattice = Vec::with_capacity(n * nei);
        for k in 1..=nei {
            for u in 0..n {
                let e = norm(u, (u + k) % n);
                if edges.insert(e) {
                    lattice.push((u, (u + k) % n));
                }
            }
        }
        if p > 0.0 {
            let mut deg = vec![2 * nei; n];
            for (u, v) in lattice {
                if rng.gen::<f64>() >= p {
                    continue;
                }
                let current = norm(u, v);
                if !edges.contains(&current) {
                    continue; // already rewired away by an earlier step
                }
                // a full row leaves no valid endpoint to rewire to
                if deg[u] >= n - 1 {
                    continue;
                }
                edges.remove(&current);
                deg[u] -= 1;
                deg[v] -= 1;
                loop {
                    let w = rng.gen_range(0..n);
                    if w != u && !edges.contains(&norm(u, w)) {
                        edges.insert(norm(u, w));
                        deg[u] += 1;
                        deg[w] += 1;
                        break;
                    }
                }
            }
        }
        let mut rows = vec![Vec::new(); n];
        for (a, b) in edges {
            rows[a].push((b + 1) as u32);
            rows[b].push((a + 1) as u32);
        }
        for r in &mut rows {
            r.sort_unstable();
        }
        Ok(NetworkMatrix::from_rows(rows))
    }

    /// Build from a dense 0/1 adjacency matrix (zero diagonal, symmetric).
    pub fn from_adjacency(adj: &[Vec<u8>]) -> Result<Self> {
        let n = adj.len();
        for (i, row) in adj.iter().enumerate() {
            if row.len() != n {
                return Err(Error::validation("adjacency matrix is not square"));
            }
            if row[i] != 0 {
                return Err(Error::validation(format!(
                    "adjacency has nonzero diagonal at unit {}",
                    i + 1
                )));
            }
            for j in 0..n {
                if adj[i][j] != adj[j][i] {
                    return Err(Error::validation(format!(
                        "adjacency not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let rows = adj
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0)
                    .map(|(j, _)| (j + 1) as u32)
                    .collect()
            })
            .collect();
        Ok(NetworkMatrix::from_rows(rows))
    }

    /// Build from an undirected edge list over units `1..=n`.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut rows: Vec<HashSet<u32>> = vec![HashSet::new(); n];
        for &(i, j) in edges {
            if i == j {
                return Err(Error::validation(format!("self edge at unit {i}")));
            }
            if i < 1 || j < 1 || i as usize > n || j as usize > n {
                return Err(Error::validation(format!("edge ({i},{j}) out of range")));
            }
            rows[(i - 1) as usize].insert(j);
            rows[(j - 1) as usize].insert(i);
        }
        let rows = rows
            .into_iter()
            .map(|s| {
                let mut v: Vec<u32> = s.into_iter().collect();
                v.sort_unstable();
                v
            })
            .collect();
        Ok(NetworkMatrix::from_rows(rows))
    }

    pub fn to_adjacency(&self) -> Vec<Vec<u8>> {
        let n = self.n();
        let mut adj = vec![vec![0u8; n]; n];
        for (i, row) in self.rows.iter().enumerate() {
            for &j in row {
                adj[i][(j - 1) as usize] = 1;
            }
        }
        adj
    }

    /// Unique undirected edges `(i, j)` with `i < j`, 1-based.
    pub fn edge_list(&self) -> Vec<(u32, u32)> {
        let mut edges = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            let unit = (i + 1) as u32;
            for &j in row {
                if unit < j {
                    edges.push((unit, j));
                }
            }
        }
        edges.sort_unstable();
        edges
    }

    pub fn to_padded(&self) -> PaddedNetwork {
        let entries = self
            .rows
            .iter()
            .map(|r| {
                let mut row: Vec<Option<u32>> = r.iter().copied().map(Some).collect();
                row.resize(self.kmax, None);
                row
            })
            .collect();
        PaddedNetwork {
            n: self.n(),
            kmax: self.kmax,
            entries,
        }
    }

    /// Padded CSV: one row per unit, `kmax` comma-separated fields, empty
    /// field = MISSING, 1-based indices.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let mut fields: Vec<String> = row.iter().map(|j| j.to_string()).collect();
            fields.resize(self.kmax, String::new());
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::simengine::write_atomic(path, &self.to_csv_string())
    }

    pub fn from_csv_string(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut kmax = 0usize;
        for line in text.lines() {
            if line.starts_with('#') {
                continue;
            }
            // an empty line is a unit with no friends (kmax can be 0)
            let row: Vec<Option<u32>> = if line.trim().is_empty() {
                Vec::new()
            } else {
                line.split(',')
                    .map(|f| {
                        let f = f.trim();
                        if f.is_empty() {
                            Ok(None)
                        } else {
                            f.parse::<u32>().map(Some).map_err(|_| {
                                Error::validation(format!("bad network index field: {f:?}"))
                            })
                        }
                    })
                    .collect::<Result<_>>()?
            };
            kmax = kmax.max(row.iter().flatten().count());
            entries.push(row);
        }
        let n = entries.len();
        for row in &mut entries {
            row.resize(kmax, None);
        }
        NetworkMatrix::try_from(PaddedNetwork { n, kmax, entries })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_string(&text)
    }

    pub fn edge_list_string(&self) -> String {
        let mut out = String::new();
        for (i, j) in self.edge_list() {
            let _ = writeln!(out, "{i},{j}");
        }
        out
    }
}
