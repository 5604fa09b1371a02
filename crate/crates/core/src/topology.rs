//! Regular topologies and their shell structure around the shocked agent.
//!
//! Three families are supported:
//!
//! * `paper_tree`: a rooted K-ary tree. Every internal node has exactly `K`
//!   children and load only ever flows downstream, which gives `K(t) = K^t`.
//! * `square_lattice`: a 4-regular grid, toroidal when `periodic`.
//! * `random_regular`: a simple K-regular graph on `N` nodes.
//!
//! Every [`Network`] carries its seed agent and the BFS shell decomposition
//! relative to that seed; `shell_sizes[t]` is the number of agents the
//! cascade can reach at step `t`.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::seeded_rng;

/// Marker in `shell_of` for agents not connected to the seed.
pub const UNREACHABLE: usize = usize::MAX;

/// Full restarts allowed for stub pairing.
pub const DEFAULT_RESTART_BUDGET: usize = 1000;

/// Largest (complement-reduced) degree generated by plain stub pairing.
/// The acceptance probability of a pairing is about `exp(-(K^2-1)/4)`, which
/// at K = 4 still needs only ~40 attempts on average.
pub const PAIRING_MAX_DEGREE: usize = 4;

/// Attempted double-edge swaps per edge when mixing dense graphs.
pub const SWAPS_PER_EDGE: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("invalid topology: {0}")]
    InvalidSpec(String),
    #[error("paper tree with K={k} and depth={depth} overflows the index width")]
    Sizing { k: usize, depth: usize },
    #[error("random regular generation failed after {attempts} attempts (N={n}, K={k})")]
    GenerationFailed { n: usize, k: usize, attempts: usize },
    #[error("seed agent {seed} out of range for N={n}")]
    SeedOutOfRange { seed: usize, n: usize },
    #[error("edge list line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    PaperTree,
    SquareLattice,
    RandomRegular,
}

impl TopologyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::PaperTree => "paper_tree",
            TopologyKind::SquareLattice => "square_lattice",
            TopologyKind::RandomRegular => "random_regular",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopologyKind {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper_tree" => Ok(TopologyKind::PaperTree),
            "square_lattice" => Ok(TopologyKind::SquareLattice),
            "random_regular" => Ok(TopologyKind::RandomRegular),
            other => Err(TopologyError::InvalidSpec(format!(
                "unknown topology kind `{other}` (expected paper_tree, square_lattice or random_regular)"
            ))),
        }
    }
}

/// Declarative description of a topology; [`TopologySpec::build`] turns it
/// into a [`Network`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    /// Degree (lattice: always 4) or branching factor (tree).
    pub k: usize,
    pub n: usize,
    /// Square lattice only.
    pub side: usize,
    /// Paper tree only.
    pub depth: usize,
    /// Square lattice only.
    pub periodic: bool,
}

impl TopologySpec {
    pub fn paper_tree(k: usize, depth: usize) -> Result<Self, TopologyError> {
        let n = tree_size(k, depth)?;
        let spec = TopologySpec {
            kind: TopologyKind::PaperTree,
            k,
            n,
            side: 0,
            depth,
            periodic: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn square_lattice(side: usize, periodic: bool) -> Result<Self, TopologyError> {
        let spec = TopologySpec {
            kind: TopologyKind::SquareLattice,
            k: 4,
            n: side.saturating_mul(side),
            side,
            depth: 0,
            periodic,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn random_regular(n: usize, k: usize) -> Result<Self, TopologyError> {
        let spec = TopologySpec {
            kind: TopologyKind::RandomRegular,
            k,
            n,
            side: 0,
            depth: 0,
            periodic: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        match self.kind {
            TopologyKind::PaperTree => {
                if self.k < 2 || self.depth < 1 {
                    return Err(TopologyError::InvalidSpec(format!(
                        "paper_tree needs K >= 2 and depth >= 1 (got K={}, depth={})",
                        self.k, self.depth
                    )));
                }
                let n = tree_size(self.k, self.depth)?;
                if n != self.n {
                    return Err(TopologyError::InvalidSpec(format!(
                        "paper_tree with K={} depth={} has N={n}, not {}",
                        self.k, self.depth, self.n
                    )));
                }
            }
            TopologyKind::SquareLattice => {
                if self.k != 4 {
                    return Err(TopologyError::InvalidSpec(format!(
                        "square_lattice has K=4 (got {})",
                        self.k
                    )));
                }
                if self.side < 3 {
                    return Err(TopologyError::InvalidSpec(format!(
                        "square_lattice needs side >= 3 (got {})",
                        self.side
                    )));
                }
                if self.n != self.side * self.side {
                    return Err(TopologyError::InvalidSpec(format!(
                        "square_lattice with side={} has N={}, not {}",
                        self.side,
                        self.side * self.side,
                        self.n
                    )));
                }
            }
            TopologyKind::RandomRegular => check_regular_params(self.n, self.k)?,
        }
        Ok(())
    }

    /// Build the network with `seed_agent` as the shocked agent. `rng_seed`
    /// only matters for random regular graphs.
    pub fn build(&self, rng_seed: u64, seed_agent: usize) -> Result<Network, TopologyError> {
        self.validate()?;
        match self.kind {
            TopologyKind::PaperTree => build_paper_tree(self.k, self.depth, seed_agent),
            TopologyKind::SquareLattice => {
                build_square_lattice(self.side, self.periodic, seed_agent)
            }
            TopologyKind::RandomRegular => {
                build_random_regular(self.n, self.k, rng_seed)?.with_seed(seed_agent)
            }
        }
    }
}

fn check_regular_params(n: usize, k: usize) -> Result<(), TopologyError> {
    if k == 0 || k >= n {
        return Err(TopologyError::InvalidSpec(format!(
            "random_regular needs 0 < K < N (got N={n}, K={k})"
        )));
    }
    if !(n * k).is_multiple_of(2) {
        return Err(TopologyError::InvalidSpec(format!(
            "random_regular needs N*K even (got N={n}, K={k})"
        )));
    }
    Ok(())
}

/// Number of nodes in a complete K-ary tree of the given depth.
pub fn tree_size(k: usize, depth: usize) -> Result<usize, TopologyError> {
    let overflow = || TopologyError::Sizing { k, depth };
    let mut level = 1usize;
    let mut total = 1usize;
    for _ in 0..depth {
        level = level.checked_mul(k).ok_or_else(overflow)?;
        total = total.checked_add(level).ok_or_else(overflow)?;
    }
    // Child ids are computed as K*u + K.
    total.checked_mul(k.max(1)).ok_or_else(overflow)?;
    Ok(total)
}

/// An immutable network plus its shell decomposition around `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    kind: TopologyKind,
    k: usize,
    adjacency: Vec<Vec<usize>>,
    downstream: Option<Vec<Vec<usize>>>,
    seed: usize,
    shell_of: Vec<usize>,
    shell_sizes: Vec<usize>,
}

impl Network {
    fn assemble(
        kind: TopologyKind,
        k: usize,
        mut adjacency: Vec<Vec<usize>>,
        downstream: Option<Vec<Vec<usize>>>,
        seed: usize,
    ) -> Result<Self, TopologyError> {
        let n = adjacency.len();
        if seed >= n {
            return Err(TopologyError::SeedOutOfRange { seed, n });
        }
        for list in adjacency.iter_mut() {
            list.sort_unstable();
        }
        let (shell_of, shell_sizes) = bfs_shells(&adjacency, seed);
        Ok(Network {
            kind,
            k,
            adjacency,
            downstream,
            seed,
            shell_of,
            shell_sizes,
        })
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    /// The redistribution divisor `K`.
    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> usize {
        self.seed
    }

    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.adjacency[agent]
    }

    /// Agents that receive a share when `agent` fails: children on a `paper_tree`
    /// topology, all neighbors otherwise.
    pub fn targets(&self, agent: usize) -> &[usize] {
        match &self.downstream {
            Some(children) => &children[agent],
            None => &self.adjacency[agent],
        }
    }

    pub fn downstream(&self) -> Option<&[Vec<usize>]> {
        self.downstream.as_deref()
    }

    pub fn shell_of(&self, agent: usize) -> usize {
        self.shell_of[agent]
    }

    pub fn shells(&self) -> &[usize] {
        &self.shell_of
    }

    /// `K(t)` for `t = 0..=max_shell`.
    pub fn shell_sizes(&self) -> &[usize] {
        &self.shell_sizes
    }

    /// `K(t)`, zero beyond the last shell.
    pub fn shell_size(&self, t: usize) -> usize {
        self.shell_sizes.get(t).copied().unwrap_or(0)
    }

    pub fn max_shell(&self) -> usize {
        self.shell_sizes.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges with `u < v` (tree edges are reported parent first).
    pub fn edges(&self) -> Vec<(usize, usize)> {
        match &self.downstream {
            Some(children) => children
                .iter()
                .enumerate()
                .flat_map(|(p, cs)| cs.iter().map(move |&c| (p, c)))
                .collect(),
            None => self
                .adjacency
                .iter()
                .enumerate()
                .flat_map(|(u, vs)| vs.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
                .collect(),
        }
    }

    /// Same network, shells recomputed around another seed. Not available on
    /// a `paper_tree`, whose shell structure is tied to the root.
    pub fn with_seed(self, seed: usize) -> Result<Network, TopologyError> {
        if seed == self.seed {
            return Ok(self);
        }
        if self.kind == TopologyKind::PaperTree {
            return Err(TopologyError::InvalidSpec(
                "paper_tree cannot be re-seeded; rebuild it with the new root".into(),
            ));
        }
        let Network {
            kind,
            k,
            adjacency,
            downstream,
            ..
        } = self;
        Network::assemble(kind, k, adjacency, downstream, seed)
    }

    /// Smallest `t` whose cumulative shell count reaches `N`.
    pub fn coverage_time(&self) -> usize {
        coverage_time(self)
    }

    /// Edge-list text: header `N K kind`, then one `u v` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {} {}\n", self.n(), self.k, self.kind);
        for (u, v) in self.edges() {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }

    /// Parse the edge-list format. Paper trees are re-rooted at their unique
    /// parentless node; other kinds are seeded at agent 0.
    pub fn from_edge_list(text: &str) -> Result<Network, TopologyError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(TopologyError::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(TopologyError::Parse {
                line: hline,
                msg: format!("header must be `N K kind`, got `{header}`"),
            });
        }
        let parse_usize = |s: &str, line: usize| {
            s.parse::<usize>().map_err(|e| TopologyError::Parse {
                line,
                msg: format!("`{s}`: {e}"),
            })
        };
        let n = parse_usize(fields[0], hline)?;
        let k = parse_usize(fields[1], hline)?;
        let kind: TopologyKind = fields[2].parse().map_err(|_| TopologyError::Parse {
            line: hline,
            msg: format!("unknown kind `{}`", fields[2]),
        })?;
        let mut adjacency = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut has_parent = vec![false; n];
        for (line, l) in lines {
            let mut it = l.split_whitespace();
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(TopologyError::Parse {
                    line,
                    msg: format!("expected `u v`, got `{l}`"),
                });
            };
            let (u, v) = (parse_usize(a, line)?, parse_usize(b, line)?);
            if u >= n || v >= n || u == v {
                return Err(TopologyError::Parse {
                    line,
                    msg: format!("invalid edge {u} {v} for N={n}"),
                });
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
            if kind == TopologyKind::PaperTree {
                children[u].push(v);
                has_parent[v] = true;
            }
        }
        if kind == TopologyKind::PaperTree {
            let root = has_parent
                .iter()
                .position(|&p| !p)
                .ok_or(TopologyError::Parse {
                    line: hline,
                    msg: "tree has no root".into(),
                })?;
            for list in children.iter_mut() {
                list.sort_unstable();
            }
            Network::assemble(kind, k, adjacency, Some(children), root)
        } else {
            Network::assemble(kind, k, adjacency, None, 0)
        }
    }
}

/// BFS distances from `seed` and the resulting shell sizes.
pub fn bfs_shells(adjacency: &[Vec<usize>], seed: usize) -> (Vec<usize>, Vec<usize>) {
    let mut shell_of = vec![UNREACHABLE; adjacency.len()];
    let mut sizes = vec![1usize];
    shell_of[seed] = 0;
    let mut queue = VecDeque::from([seed]);
    while let Some(u) = queue.pop_front() {
        let d = shell_of[u] + 1;
        for &v in &adjacency[u] {
            if shell_of[v] == UNREACHABLE {
                shell_of[v] = d;
                if sizes.len() <= d {
                    sizes.push(0);
                }
                sizes[d] += 1;
                queue.push_back(v);
            }
        }
    }
    (shell_of, sizes)
}

/// `t°`: smallest `t` with `sum_{tau <= t} K(tau) >= N`. For a network that
/// is not connected to its seed this falls back to the last shell index.
pub fn coverage_time(network: &Network) -> usize {
    let n = network.n();
    let mut cumulative = 0usize;
    for (t, &size) in network.shell_sizes().iter().enumerate() {
        cumulative += size;
        if cumulative >= n {
            return t;
        }
    }
    network.max_shell()
}

/// Rooted K-ary tree of the given depth. Nodes are numbered level by level
/// with the children of `u` at `K*u+1 ..= K*u+K`; labels 0 and `seed_id` are
/// swapped so that the root carries `seed_id`.
pub fn build_paper_tree(k: usize, depth: usize, seed_id: usize) -> Result<Network, TopologyError> {
    if k < 2 || depth < 1 {
        return Err(TopologyError::InvalidSpec(format!(
            "paper_tree needs K >= 2 and depth >= 1 (got K={k}, depth={depth})"
        )));
    }
    let n = tree_size(k, depth)?;
    if seed_id >= n {
        return Err(TopologyError::SeedOutOfRange { seed: seed_id, n });
    }
    let label = |u: usize| {
        if u == 0 {
            seed_id
        } else if u == seed_id {
            0
        } else {
            u
        }
    };
    let mut adjacency = vec![Vec::with_capacity(k + 1); n];
    let mut children = vec![Vec::new(); n];
    for u in 0..n {
        let first = k * u + 1;
        if first >= n {
            continue;
        }
        for c in first..first + k {
            let (pu, pc) = (label(u), label(c));
            children[pu].push(pc);
            adjacency[pu].push(pc);
            adjacency[pc].push(pu);
        }
    }
    for list in children.iter_mut() {
        list.sort_unstable();
    }
    Network::assemble(
        TopologyKind::PaperTree,
        k,
        adjacency,
        Some(children),
        seed_id,
    )
}

/// `side x side` grid with von Neumann neighborhoods; node `(x, y)` has id
/// `x + side*y`. Boundary nodes of a non-periodic lattice keep `K = 4` as the
/// redistribution divisor, so shares pointing off the grid are lost.
pub fn build_square_lattice(
    side: usize,
    periodic: bool,
    seed_id: usize,
) -> Result<Network, TopologyError> {
    if side < 3 {
        return Err(TopologyError::InvalidSpec(format!(
            "square_lattice needs side >= 3 (got {side})"
        )));
    }
    let n = side * side;
    let mut adjacency = vec![Vec::with_capacity(4); n];
    for y in 0..side {
        for x in 0..side {
            let u = x + side * y;
            let mut link = |xx: usize, yy: usize| adjacency[u].push(xx + side * yy);
            if periodic {
                link((x + 1) % side, y);
                link((x + side - 1) % side, y);
                link(x, (y + 1) % side);
                link(x, (y + side - 1) % side);
            } else {
                if x + 1 < side {
                    link(x + 1, y);
                }
                if x > 0 {
                    link(x - 1, y);
                }
                if y + 1 < side {
                    link(x, y + 1);
                }
                if y > 0 {
                    link(x, y - 1);
                }
            }
        }
    }
    Network::assemble(TopologyKind::SquareLattice, 4, adjacency, None, seed_id)
}

/// Simple K-regular graph on `n` nodes, seeded at agent 0. Deterministic in
/// `rng_seed`.
pub fn build_random_regular(n: usize, k: usize, rng_seed: u64) -> Result<Network, TopologyError> {
    build_random_regular_with_budget(n, k, rng_seed, DEFAULT_RESTART_BUDGET)
}

/// Like [`build_random_regular`] with an explicit restart budget for the
/// stub-pairing path.
///
/// Degrees above `N/2` are produced as the complement of an
/// `(N-1-K)`-regular graph. Reduced degrees up to [`PAIRING_MAX_DEGREE`] use
/// stub pairing with full restart on any self-loop or multi-edge; denser
/// graphs start from a circulant graph and are mixed by random double-edge
/// swaps, since pairing would essentially never produce a simple graph.
pub fn build_random_regular_with_budget(
    n: usize,
    k: usize,
    rng_seed: u64,
    restart_budget: usize,
) -> Result<Network, TopologyError> {
    check_regular_params(n, k)?;
    let mut rng = seeded_rng(rng_seed);
    let complement = k > n / 2;
    let kk = if complement { n - 1 - k } else { k };
    let edges = if kk == 0 {
        Vec::new()
    } else if kk <= PAIRING_MAX_DEGREE {
        stub_pairing(n, kk, &mut rng, restart_budget)?
    } else {
        switched_circulant(n, kk, &mut rng)
    };
    let mut adjacency = vec![Vec::with_capacity(k); n];
    if complement {
        let mut matrix = AdjacencyBits::new(n);
        for &(u, v) in &edges {
            matrix.set(u, v, true);
        }
        for (u, list) in adjacency.iter_mut().enumerate() {
            list.extend((0..n).filter(|&v| v != u && !matrix.get(u, v)));
        }
    } else {
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
    }
    Network::assemble(TopologyKind::RandomRegular, k, adjacency, None, 0)
}

fn stub_pairing(
    n: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
    budget: usize,
) -> Result<Vec<(usize, usize)>, TopologyError> {
    let mut stubs: Vec<usize> = (0..n).flat_map(|u| std::iter::repeat_n(u, k)).collect();
    let mut matrix = AdjacencyBits::new(n);
    'attempt: for _ in 0..budget {
        stubs.shuffle(rng);
        matrix.clear();
        let mut edges = Vec::with_capacity(stubs.len() / 2);
        for pair in stubs.chunks_exact(2) {
            let (u, v) = (pair[0], pair[1]);
            if u == v || matrix.get(u, v) {
                continue 'attempt;
            }
            matrix.set(u, v, true);
            edges.push((u.min(v), u.max(v)));
        }
        return Ok(edges);
    }
    Err(TopologyError::GenerationFailed {
        n,
        k,
        attempts: budget,
    })
}

fn switched_circulant(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut matrix = AdjacencyBits::new(n);
    let mut edges = Vec::with_capacity(n * k / 2);
    for u in 0..n {
        for d in 1..=k / 2 {
            let v = (u + d) % n;
            edges.push((u, v));
            matrix.set(u, v, true);
        }
        if k % 2 == 1 && u < n / 2 {
            let v = u + n / 2;
            edges.push((u, v));
            matrix.set(u, v, true);
        }
    }
    let m = edges.len();
    for _ in 0..SWAPS_PER_EDGE * m {
        let i = rng.random_range(0..m);
        let j = rng.random_range(0..m);
        if i == j {
            continue;
        }
        let (a, b) = edges[i];
        let (mut c, mut d) = edges[j];
        if rng.random_bool(0.5) {
            std::mem::swap(&mut c, &mut d);
        }
        // (a,b),(c,d) -> (a,d),(c,b)
        if a == d || c == b || matrix.get(a, d) || matrix.get(c, b) {
            continue;
        }
        matrix.set(a, b, false);
        matrix.set(c, d, false);
        matrix.set(a, d, true);
        matrix.set(c, b, true);
        edges[i] = (a, d);
        edges[j] = (c, b);
    }
    edges
        .into_iter()
        .map(|(u, v)| (u.min(v), u.max(v)))
        .collect()
}

/// Dense symmetric adjacency bitmap.
struct AdjacencyBits {
    n: usize,
    words: Vec<u64>,
}

impl AdjacencyBits {
    fn new(n: usize) -> Self {
        AdjacencyBits {
            n,
            words: vec![0; (n * n).div_ceil(64)],
        }
    }

    fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    fn get(&self, u: usize, v: usize) -> bool {
        let i = u * self.n + v;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, u: usize, v: usize, on: bool) {
        for i in [u * self.n + v, v * self.n + u] {
            if on {
                self.words[i / 64] |= 1 << (i % 64);
            } else {
                self.words[i / 64] &= !(1 << (i % 64));
            }
        }
    }
}
