//! The channel as a game between the gateway (P1), the device (P2), the
//! publisher pool (P3) and the watchdog pool (P4).
//!
//! Balances are written `(alpha, beta)` with `alpha` the gateway's share and
//! `beta` the device's. `tx1` is the current state; `tx2` and `tx3` are
//! revoked states with `alpha2 > alpha1 > alpha3`.
//!
//! Pool payoffs at leaves are per-member averages `fee / K`. A pool member
//! that follows the protocol competes for the whole fee, while collusion
//! splits a bribe across all members, so pool incentives compare
//! `K * (fee / K)` against `bribe / K`. Ties favour collusion.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameError {
    #[error("invalid game config: {0}")]
    InvalidConfig(String),
    #[error("profile assigns no action to information set {0}")]
    IncompleteProfile(String),
}

/// One channel state as `(gateway, device)` balances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub alpha: u64,
    pub beta: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameConfig {
    pub tx1: Split,
    pub tx2: Split,
    pub tx3: Split,
    pub sigma1: u64,
    pub gamma1: u64,
    /// Publisher bribe; the largest useful bribe `alpha2 - alpha3` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<u64>,
    /// Watchdog bribe; `alpha2 - alpha3` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<u64>,
    pub k1: usize,
    pub k2: usize,
}

impl GameConfig {
    pub fn gap(&self) -> u64 {
        self.tx2.alpha - self.tx3.alpha
    }

    pub fn total(&self) -> u64 {
        self.tx1.alpha + self.tx1.beta
    }

    pub fn sigma2(&self) -> u64 {
        self.sigma2.unwrap_or_else(|| self.gap())
    }

    pub fn gamma2(&self) -> u64 {
        self.gamma2.unwrap_or_else(|| self.gap())
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let bad = |m: &str| Err(GameError::InvalidConfig(m.to_string()));
        let (t1, t2, t3) = (self.tx1, self.tx2, self.tx3);
        if !(t2.alpha > t1.alpha && t1.alpha > t3.alpha) {
            return bad("need alpha2 > alpha1 > alpha3");
        }
        if !(t3.beta > t1.beta && t1.beta > t2.beta) {
            return bad("need beta3 > beta1 > beta2");
        }
        let sums = [t1, t2, t3].map(|t| t.alpha.checked_add(t.beta));
        if sums.iter().any(|s| s.is_none() || *s != sums[0]) {
            return bad("state totals differ");
        }
        if self.k1 == 0 || self.k2 == 0 {
            return bad("pool sizes must be at least 1");
        }
        if self.sigma1 > t2.beta {
            return bad("sigma1 exceeds the device's smallest balance");
        }
        if self.sigma1.saturating_add(self.gamma1) > self.total() {
            return bad("sigma1 + gamma1 exceeds the channel total");
        }
        if self.sigma2() > self.gap() || self.gamma2() > self.gap() {
            return bad("bribes exceed alpha2 - alpha3");
        }
        Ok(())
    }
}

fn r(v: u64) -> Rational {
    Rational::from(v as i128)
}

fn per(fee: u64, k: usize) -> Rational {
    Rational::new(fee as i128, k as i128)
}

/// `(alpha2 - alpha3) / K1` and `(alpha2 - alpha3) / K2`.
pub fn min_fees(config: &GameConfig) -> Result<(Rational, Rational), GameError> {
    config.validate()?;
    Ok((per(config.gap(), config.k1), per(config.gap(), config.k2)))
}

/// `true` iff both pool fees strictly exceed their floors.
pub fn fee_bounds_hold(config: &GameConfig) -> Result<bool, GameError> {
    let (s, g) = min_fees(config)?;
    Ok(r(config.sigma1) > s && r(config.gamma1) > g)
}

// ---- normal form ---------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Response {
    F,
    D1,
    D2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Publish {
    TX1,
    TX2,
    TX3,
}

pub const RESPONSES: [Response; 3] = [Response::F, Response::D1, Response::D2];
pub const PUBLISHES: [Publish; 3] = [Publish::TX1, Publish::TX2, Publish::TX3];

/// Rows are Player II's responses, columns Player I's published state, and
/// entries `(payoff_II, payoff_I)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PayoffMatrix(pub [[(u64, u64); 3]; 3]);

impl PayoffMatrix {
    pub fn entry(&self, row: Response, col: Publish) -> (u64, u64) {
        self.0[row as usize][col as usize]
    }
}

pub fn payoff_matrix(config: &GameConfig) -> Result<PayoffMatrix, GameError> {
    config.validate()?;
    let t = [config.tx1, config.tx2, config.tx3];
    let f = [(t[0].beta, t[0].alpha), (t[1].alpha + t[1].beta, 0), (t[2].alpha + t[2].beta, 0)];
    let d1 = t.map(|s| (s.beta, s.alpha));
    let d2 = t.map(|s| (0, s.alpha));
    Ok(PayoffMatrix([f, d1, d2]))
}

/// Pure profiles `(row, col)` where neither player gains by deviating
/// alone. Ties count as equilibria.
pub fn matrix_equilibrium(m: &PayoffMatrix) -> Vec<(Response, Publish)> {
    let mut out = Vec::new();
    for row in RESPONSES {
        for col in PUBLISHES {
            let (ii, i) = m.entry(row, col);
            let ii_best = RESPONSES.iter().all(|&r2| m.entry(r2, col).0 <= ii);
            let i_best = PUBLISHES.iter().all(|&c2| m.entry(row, c2).1 <= i);
            if ii_best && i_best {
                out.push((row, col));
            }
        }
    }
    out
}

/// `"all-follow"` for `(F, TX1)`, otherwise `"row/col"`.
pub fn profile_label(row: Response, col: Publish) -> String {
    match (row, col) {
        (Response::F, Publish::TX1) => "all-follow".to_string(),
        _ => format!("{row:?}/{col:?}"),
    }
}

// ---- extensive form ------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Player {
    P1,
    P2,
    P3,
    P4,
}

impl Player {
    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    S1,
    S2,
    S3,
    F,
    D,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Payoffs `(P1, P2, P3, P4)`. `bribed[p]` marks a pool payoff that comes
/// from a collusion bribe rather than a protocol fee.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Leaf {
    pub payoff: [Rational; 4],
    pub bribed: [bool; 4],
}

impl Leaf {
    fn new(p1: Rational, p2: Rational, p3: Rational, p4: Rational) -> Self {
        Leaf {
            payoff: [p1, p2, p3, p4],
            bribed: [false; 4],
        }
    }

    fn bribe(mut self, p: Player) -> Self {
        self.bribed[p.slot()] = true;
        self
    }

    pub fn to_json(&self) -> Value {
        Value::Array(self.payoff.iter().map(|v| Value::String(v.to_string())).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Decision {
        player: Player,
        info_set: String,
        children: Vec<(Action, Node)>,
    },
    Leaf(Leaf),
}

impl Node {
    fn decide(player: Player, info_set: &str, children: Vec<(Action, Node)>) -> Self {
        Node::Decision {
            player,
            info_set: info_set.to_string(),
            children,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Node::Leaf(l) => json!({ "payoff": l.to_json() }),
            Node::Decision {
                player,
                info_set,
                children,
            } => json!({
                "player": player,
                "info_set": info_set,
                "children": children
                    .iter()
                    .map(|(a, n)| json!({ "action": a, "node": n.to_json() }))
                    .collect::<Vec<_>>(),
            }),
        }
    }

    /// Follows `path` from this node.
    pub fn at(&self, path: &[Action]) -> Option<&Node> {
        let Some((first, rest)) = path.split_first() else {
            return Some(self);
        };
        match self {
            Node::Decision { children, .. } => children.iter().find(|(a, _)| a == first)?.1.at(rest),
            Node::Leaf(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameTree {
    pub root: Node,
    pub pool_sizes: [usize; 2],
    /// Normalizations applied while encoding the tree.
    pub warnings: Vec<String>,
}

/// One action per information set.
pub type Profile = BTreeMap<String, Action>;

impl GameTree {
    pub fn info_sets(&self) -> BTreeMap<String, (Player, Vec<Action>)> {
        let mut out = BTreeMap::new();
        let mut stack = vec![&self.root];
        while let Some(n) = stack.pop() {
            if let Node::Decision {
                player,
                info_set,
                children,
            } = n
            {
                out.entry(info_set.clone())
                    .or_insert_with(|| (*player, children.iter().map(|(a, _)| *a).collect()));
                stack.extend(children.iter().map(|(_, c)| c));
            }
        }
        out
    }

    /// The protocol-following profile: publish the current state, everyone
    /// else follows.
    pub fn follow_profile(&self) -> Profile {
        let root = self.root_set();
        self.info_sets()
            .into_keys()
            .map(|id| {
                let a = if id == root { Action::S1 } else { Action::F };
                (id, a)
            })
            .collect()
    }

    fn root_set(&self) -> String {
        match &self.root {
            Node::Decision { info_set, .. } => info_set.clone(),
            Node::Leaf(_) => String::new(),
        }
    }

    fn pool_size(&self, p: Player) -> Option<usize> {
        match p {
            Player::P3 => Some(self.pool_sizes[0]),
            Player::P4 => Some(self.pool_sizes[1]),
            _ => None,
        }
    }

    /// Value a single member of `p` attaches to `leaf`.
    fn incentive(&self, p: Player, leaf: &Leaf) -> Rational {
        let v = leaf.payoff[p.slot()];
        match self.pool_size(p) {
            Some(k) if !leaf.bribed[p.slot()] => v * Rational::from(k as i128),
            _ => v,
        }
    }

    /// Whether `p` strictly prefers `alt` over `cur`; pools also switch on a
    /// tie when `alt` pays a bribe.
    fn prefers(&self, p: Player, alt: &Leaf, cur: &Leaf) -> bool {
        let (a, c) = (self.incentive(p, alt), self.incentive(p, cur));
        match self.pool_size(p) {
            Some(_) => a > c || (a == c && alt.bribed[p.slot()] && !cur.bribed[p.slot()]),
            None => a > c,
        }
    }

    fn outcome<'a>(&self, node: &'a Node, profile: &Profile) -> Result<&'a Leaf, GameError> {
        match node {
            Node::Leaf(l) => Ok(l),
            Node::Decision {
                info_set, children, ..
            } => {
                let a = profile
                    .get(info_set)
                    .ok_or_else(|| GameError::IncompleteProfile(info_set.clone()))?;
                let child = children
                    .iter()
                    .find(|(c, _)| c == a)
                    .ok_or_else(|| GameError::IncompleteProfile(info_set.clone()))?;
                self.outcome(&child.1, profile)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deviation {
    pub player: Player,
    pub info_set: String,
    /// Path from the root to the deciding node.
    pub node: Vec<Action>,
    pub on_path: bool,
    pub from: Action,
    pub to: Action,
    /// Change in the player's leaf payoff.
    pub delta: Rational,
}

impl Deviation {
    pub fn to_json(&self) -> Value {
        json!({
            "player": self.player,
            "info_set": self.info_set,
            "node": self.node.iter().map(|a| a.to_string()).collect::<Vec<_>>().join("/"),
            "on_path": self.on_path,
            "from": self.from,
            "to": self.to,
            "delta": self.delta.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquilibriumReport {
    pub is_equilibrium: bool,
    pub outcome: Leaf,
    pub profitable_deviations: Vec<Deviation>,
}

/// Checks every decision node against one-shot deviations at its
/// information set. A player cannot tell the nodes of one set apart, so a
/// deviation that pays at any of them is reported, on or off the path of
/// play.
pub fn equilibrium_check(tree: &GameTree, profile: &Profile) -> Result<EquilibriumReport, GameError> {
    for id in tree.info_sets().keys() {
        if !profile.contains_key(id) {
            return Err(GameError::IncompleteProfile(id.clone()));
        }
    }
    let outcome = tree.outcome(&tree.root, profile)?.clone();
    let mut deviations = Vec::new();
    let mut stack: Vec<(&Node, Vec<Action>, bool)> = vec![(&tree.root, Vec::new(), true)];
    while let Some((node, path, on_path)) = stack.pop() {
        let Node::Decision {
            player,
            info_set,
            children,
        } = node
        else {
            continue;
        };
        let chosen = profile[info_set];
        let cur = tree.outcome(node, profile)?;
        for (a, child) in children {
            let mut child_path = path.clone();
            child_path.push(*a);
            stack.push((child, child_path, on_path && *a == chosen));
            if *a == chosen {
                continue;
            }
            let alt = tree.outcome(child, profile)?;
            if tree.prefers(*player, alt, cur) {
                deviations.push(Deviation {
                    player: *player,
                    info_set: info_set.clone(),
                    node: path.clone(),
                    on_path,
                    from: chosen,
                    to: *a,
                    delta: alt.payoff[player.slot()] - cur.payoff[player.slot()],
                });
            }
        }
    }
    deviations.sort_by(|x, y| (&x.info_set, &x.node, x.to).cmp(&(&y.info_set, &y.node, y.to)));
    Ok(EquilibriumReport {
        is_equilibrium: deviations.is_empty(),
        outcome,
        profitable_deviations: deviations,
    })
}

/// Backward induction ignoring information sets. Returns the resulting leaf
/// and the path of play.
pub fn backward_induction(tree: &GameTree) -> (Leaf, Vec<Action>) {
    fn solve(tree: &GameTree, node: &Node) -> (Leaf, Vec<Action>) {
        match node {
            Node::Leaf(l) => (l.clone(), Vec::new()),
            Node::Decision {
                player, children, ..
            } => {
                let mut best: Option<(Leaf, Vec<Action>)> = None;
                for (a, child) in children {
                    let (leaf, mut path) = solve(tree, child);
                    path.insert(0, *a);
                    best = match best {
                        Some(b) if !tree.prefers(*player, &leaf, &b.0) => Some(b),
                        _ => Some((leaf, path)),
                    };
                }
                best.expect("decision nodes have children")
            }
        }
    }
    solve(tree, &tree.root)
}

struct Terms {
    a: [Rational; 3],
    b: [Rational; 3],
    s1k: Rational,
    g1k: Rational,
    s2k: Rational,
    g2k: Rational,
    s1: Rational,
    g1: Rational,
    s2: Rational,
    g2: Rational,
}

impl Terms {
    fn new(c: &GameConfig) -> Self {
        Terms {
            a: [c.tx1, c.tx2, c.tx3].map(|t| r(t.alpha)),
            b: [c.tx1, c.tx2, c.tx3].map(|t| r(t.beta)),
            s1k: per(c.sigma1, c.k1),
            g1k: per(c.gamma1, c.k2),
            s2k: per(c.sigma2(), c.k1),
            g2k: per(c.gamma2(), c.k2),
            s1: r(c.sigma1),
            g1: r(c.gamma1),
            s2: r(c.sigma2()),
            g2: r(c.gamma2()),
        }
    }
}

fn leaf(l: Leaf) -> Node {
    Node::Leaf(l)
}

/// The gateway publishes first; the watchdogs (one information set), the
/// device, then the publishers (one information set) respond.
pub fn build_tree_p1_first(config: &GameConfig) -> Result<GameTree, GameError> {
    config.validate()?;
    let t = Terms::new(config);
    let z = Rational::from(0);
    let subtree = |i: usize| -> Node {
        let (a, b) = (t.a[i], t.b[i]);
        let (p3_f, p3_d, p2_d, p4_d) = if i == 0 {
            (
                Leaf::new(a, b - t.s1, t.s1k, z),
                Leaf::new(a, z, z, z),
                Leaf::new(a, z, z, z),
                Leaf::new(a, z, z, z),
            )
        } else {
            (
                Leaf::new(z, a + b - t.s1 - t.g1, t.s1k, t.g1k),
                Leaf::new(a - t.s2, b, t.s2k, z).bribe(Player::P3),
                Leaf::new(a + b, z, z, z),
                Leaf::new(a + b - t.g2, z, z, t.g2k).bribe(Player::P4),
            )
        };
        let p3 = Node::decide(Player::P3, "P3", vec![(Action::F, leaf(p3_f)), (Action::D, leaf(p3_d))]);
        let p2 = Node::decide(Player::P2, &format!("P2@S{}", i + 1), vec![(Action::F, p3), (Action::D, leaf(p2_d))]);
        Node::decide(Player::P4, "P4", vec![(Action::F, p2), (Action::D, leaf(p4_d))])
    };
    let root = Node::decide(
        Player::P1,
        "P1",
        vec![(Action::S1, subtree(0)), (Action::S2, subtree(1)), (Action::S3, subtree(2))],
    );
    Ok(GameTree {
        root,
        pool_sizes: [config.k1, config.k2],
        warnings: Vec::new(),
    })
}

pub const P2_FIRST_S3_WARNING: &str =
    "P2-first tree: leaf S3/F/D is drawn with state-2 balances (alpha2, beta2 - sigma2); normalized to (alpha3, beta3 - sigma2)";

/// The device publishes first (through the publishers, one information
/// set), then the gateway responds.
pub fn build_tree_p2_first(config: &GameConfig) -> Result<GameTree, GameError> {
    config.validate()?;
    let t = Terms::new(config);
    let z = Rational::from(0);
    let subtree = |i: usize| -> Node {
        let (a, b) = (t.a[i], t.b[i]);
        let (p1_f, p1_d) = if i == 0 {
            (Leaf::new(a, b - t.s1, t.s1k, z), Leaf::new(z, b - t.s2, t.s2k, z))
        } else {
            (Leaf::new(a + b - t.s1, z, t.s1k, z), Leaf::new(a, b - t.s2, t.s2k, z))
        };
        let p1 = Node::decide(
            Player::P1,
            &format!("P1@S{}", i + 1),
            vec![(Action::F, leaf(p1_f)), (Action::D, leaf(p1_d.bribe(Player::P3)))],
        );
        Node::decide(Player::P3, "P3", vec![(Action::F, p1), (Action::D, leaf(Leaf::new(z, z, z, z)))])
    };
    let root = Node::decide(
        Player::P2,
        "P2",
        vec![(Action::S1, subtree(0)), (Action::S2, subtree(1)), (Action::S3, subtree(2))],
    );
    Ok(GameTree {
        root,
        pool_sizes: [config.k1, config.k2],
        warnings: vec![P2_FIRST_S3_WARNING.to_string()],
    })
}

/// Full analysis as reported by the command line and the browser demo.
pub fn analyze(config: &GameConfig) -> Result<Value, GameError> {
    let matrix = payoff_matrix(config)?;
    let equilibria: Vec<String> = matrix_equilibrium(&matrix)
        .into_iter()
        .map(|(row, col)| profile_label(row, col))
        .collect();
    let mut tree_checks = serde_json::Map::new();
    let mut warnings = Vec::new();
    for (name, tree) in [("p1_first", build_tree_p1_first(config)?), ("p2_first", build_tree_p2_first(config)?)] {
        let report = equilibrium_check(&tree, &tree.follow_profile())?;
        let (bi_leaf, bi_path) = backward_induction(&tree);
        tree_checks.insert(
            name.to_string(),
            json!({
                "all_follow_is_equilibrium": report.is_equilibrium,
                "outcome": report.outcome.to_json(),
                "profitable_deviations": report.profitable_deviations.iter().map(Deviation::to_json).collect::<Vec<_>>(),
                "backward_induction": {
                    "path": bi_path.iter().map(|a| a.to_string()).collect::<Vec<_>>().join("/"),
                    "payoff": bi_leaf.to_json(),
                },
            }),
        );
        warnings.extend(tree.warnings);
    }
    let (s, g) = min_fees(config)?;
    Ok(json!({
        "matrix": {
            "rows": RESPONSES,
            "cols": PUBLISHES,
            "entries": matrix.0.iter().map(|row| row.iter().map(|(ii, i)| json!([ii, i])).collect::<Vec<_>>()).collect::<Vec<_>>(),
        },
        "equilibria": equilibria,
        "tree_checks": Value::Object(tree_checks),
        "min_fees": min_fees_json(&s, &g),
        "fee_bounds_hold": r(config.sigma1) > s && r(config.gamma1) > g,
        "warnings": warnings,
    }))
}

pub fn min_fees_json(sigma1: &Rational, gamma1: &Rational) -> Value {
    json!({ "sigma1": sigma1.to_string(), "gamma1": gamma1.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fixture() -> GameConfig {
        GameConfig {
            tx1: Split { alpha: 60_000, beta: 40_000 },
            tx2: Split { alpha: 80_000, beta: 20_000 },
            tx3: Split { alpha: 30_000, beta: 70_000 },
            sigma1: 12_000,
            gamma1: 12_000,
            sigma2: None,
            gamma2: None,
            k1: 5,
            k2: 5,
        }
    }

    fn rv(v: i128) -> Rational {
        Rational::from(v)
    }

    fn payoff(tree: &GameTree, path: &[Action]) -> [Rational; 4] {
        match tree.root.at(path) {
            Some(Node::Leaf(l)) => l.payoff,
            other => panic!("{path:?} is not a leaf: {other:?}"),
        }
    }

    use Action::*;

    #[test]
    fn matrix_entries() {
        let m = payoff_matrix(&fixture()).unwrap();
        assert_eq!(m.entry(Response::F, Publish::TX2), (100_000, 0));
        assert_eq!(m.entry(Response::F, Publish::TX1), (40_000, 60_000));
        for col in PUBLISHES {
            assert_eq!(m.entry(Response::D2, col).0, 0);
        }
        assert_eq!(m.entry(Response::D1, Publish::TX3), (70_000, 30_000));
    }

    #[test]
    fn matrix_equilibria() {
        let eq = matrix_equilibrium(&payoff_matrix(&fixture()).unwrap());
        assert!(eq.contains(&(Response::F, Publish::TX1)));
        assert!(!eq.contains(&(Response::D1, Publish::TX2)));
        let flat = PayoffMatrix([[(7, 7); 3]; 3]);
        assert_eq!(matrix_equilibrium(&flat).len(), 9);
    }

    #[test]
    fn p1_first_leaves() {
        let t = build_tree_p1_first(&fixture()).unwrap();
        assert_eq!(payoff(&t, &[S2, F, F, F]), [rv(0), rv(76_000), rv(2_400), rv(2_400)]);
        assert_eq!(payoff(&t, &[S1, D]), [rv(60_000), rv(0), rv(0), rv(0)]);
        assert_eq!(payoff(&t, &[S2, D]), [rv(50_000), rv(0), rv(0), rv(10_000)]);
        assert_eq!(payoff(&t, &[S2, F, F, D]), [rv(30_000), rv(20_000), rv(10_000), rv(0)]);
        assert_eq!(payoff(&t, &[S3, F, D]), [rv(100_000), rv(0), rv(0), rv(0)]);
        let sets = t.info_sets();
        assert_eq!(sets.len(), 6);
        assert_eq!(sets["P4"].0, Player::P4);
        assert_eq!(sets["P3"].1, vec![F, D]);
    }

    #[test]
    fn p2_first_leaves() {
        let t = build_tree_p2_first(&fixture()).unwrap();
        assert_eq!(payoff(&t, &[S1, D]), [rv(0); 4]);
        assert_eq!(payoff(&t, &[S2, F, F]), [rv(88_000), rv(0), rv(2_400), rv(0)]);
        assert_eq!(payoff(&t, &[S1, F, D]), [rv(0), rv(-10_000), rv(10_000), rv(0)]);
        assert_eq!(payoff(&t, &[S3, F, D]), [rv(30_000), rv(20_000), rv(10_000), rv(0)]);
        assert_eq!(t.warnings, vec![P2_FIRST_S3_WARNING.to_string()]);
    }

    #[test]
    fn all_follow_is_equilibrium_above_bounds() {
        let c = fixture();
        for tree in [build_tree_p1_first(&c).unwrap(), build_tree_p2_first(&c).unwrap()] {
            let report = equilibrium_check(&tree, &tree.follow_profile()).unwrap();
            assert!(report.is_equilibrium, "{:?}", report.profitable_deviations);
        }
    }

    #[test]
    fn underpaid_publishers_collude() {
        let c = GameConfig { sigma1: 8_000, ..fixture() };
        let tree = build_tree_p1_first(&c).unwrap();
        let report = equilibrium_check(&tree, &tree.follow_profile()).unwrap();
        assert!(!report.is_equilibrium);
        let d = &report.profitable_deviations;
        assert!(d.iter().all(|d| d.player == Player::P3 && d.to == D && !d.on_path));
        assert_eq!(d[0].node, vec![S2, F, F]);
        assert_eq!(d[0].delta, rv(10_000) - Rational::new(8_000, 5));
    }

    #[test]
    fn bound_is_strict() {
        let c = GameConfig { gamma1: 10_000, ..fixture() };
        let tree = build_tree_p1_first(&c).unwrap();
        let report = equilibrium_check(&tree, &tree.follow_profile()).unwrap();
        assert!(report.profitable_deviations.iter().any(|d| d.player == Player::P4));
        let c = GameConfig { gamma1: 10_001, ..fixture() };
        let tree = build_tree_p1_first(&c).unwrap();
        assert!(equilibrium_check(&tree, &tree.follow_profile()).unwrap().is_equilibrium);
    }

    #[test]
    fn min_fee_values() {
        assert_eq!(min_fees(&fixture()).unwrap(), (rv(10_000), rv(10_000)));
        let single = GameConfig { k1: 1, ..fixture() };
        assert_eq!(min_fees(&single).unwrap().0, rv(50_000));
        let narrow = GameConfig {
            tx1: Split { alpha: 11, beta: 89 },
            tx2: Split { alpha: 12, beta: 88 },
            tx3: Split { alpha: 10, beta: 90 },
            sigma1: 1,
            gamma1: 1,
            k1: 5,
            k2: 3,
            ..fixture()
        };
        assert_eq!(min_fees(&narrow).unwrap(), (Rational::new(2, 5), Rational::new(2, 3)));
        assert!(fee_bounds_hold(&narrow).unwrap());
    }

    #[test]
    fn incomplete_profile() {
        let tree = build_tree_p1_first(&fixture()).unwrap();
        let mut p = tree.follow_profile();
        p.remove("P2@S3");
        assert_eq!(equilibrium_check(&tree, &p), Err(GameError::IncompleteProfile("P2@S3".into())));
    }

    #[test]
    fn invalid_configs() {
        let mut c = fixture();
        c.tx3.alpha = 90_000;
        assert!(payoff_matrix(&c).is_err());
        let c = GameConfig { tx2: Split { alpha: 80_000, beta: 20_001 }, ..fixture() };
        assert!(c.validate().is_err());
        let c = GameConfig { sigma2: Some(50_001), ..fixture() };
        assert!(c.validate().is_err());
        let c = GameConfig { k2: 0, ..fixture() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn backward_induction_follows_protocol() {
        let c = fixture();
        let (leaf, path) = backward_induction(&build_tree_p1_first(&c).unwrap());
        assert_eq!(path, vec![S1, F, F, F]);
        assert_eq!(leaf.payoff[0], rv(60_000));
        let (_, path) = backward_induction(&build_tree_p2_first(&c).unwrap());
        assert_eq!(path, vec![S1, F, F]);
        // collusion at the bribe cap still leaves the gateway best off publishing the current state
        let c = GameConfig { sigma1: 8_000, ..fixture() };
        let (leaf, path) = backward_induction(&build_tree_p1_first(&c).unwrap());
        assert_eq!(path, vec![S1, F, F, F]);
        assert_eq!(leaf.payoff[0], rv(60_000));
    }

    #[test]
    fn config_json_defaults_bribes() {
        let c: GameConfig = serde_json::from_value(json!({
            "tx1": {"alpha": 60000, "beta": 40000},
            "tx2": {"alpha": 80000, "beta": 20000},
            "tx3": {"alpha": 30000, "beta": 70000},
            "sigma1": 12000, "gamma1": 12000, "k1": 5, "k2": 5
        }))
        .unwrap();
        assert_eq!(c, fixture());
        assert_eq!((c.sigma2(), c.gamma2()), (50_000, 50_000));
    }
}
