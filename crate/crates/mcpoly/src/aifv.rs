//! Binary AIFV-m codes: tree representation, validation, encoder/decoder,
//! conversion of trees to Markov states, exhaustive tree search, and a
//! Huffman baseline.
//!
//! An AIFV-m code is a tuple of m binary code trees. Nodes are complete
//! (two children), slave (one child, no symbol) or master (a symbol plus a
//! degree d; emitting from a degree-d master switches the coder to tree
//! T_d). Tree T_k for k >= 1 must have a slave-1 node at position 0^k,
//! which is what buys the extra freedom over instantaneous codes.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::chain::{State, StateFamilies};
use crate::numerics::{format_rational, rational_to_f64, Rational, Vector};
use crate::polytope::{EmptyRestrictedFamily, Restriction};

/// Default enumeration ceiling: trees per family.
pub const TREE_BUDGET: usize = 2_000_000;

/// Pragmatic default search height. The exhaustive bound
/// [`full_height_bound`] is exact but blows up the search space; the tiny
/// cross-check instances in the test suite run both caps to confirm the
/// default loses no optimum there.
pub fn default_height_cap(n: usize, m: usize) -> usize {
    n + m
}

/// Height that provably suffices for some minimum-cost code:
/// (n - 1)(m + 1) + 1.
pub fn full_height_bound(n: usize, m: usize) -> usize {
    (n - 1) * (m + 1) + 1
}

#[derive(Debug, Error)]
pub enum AifvError {
    #[error("invalid source: {0}")]
    BadSource(String),
    #[error("tree enumeration produced more than {budget} trees")]
    BudgetExceeded { budget: usize },
    #[error(transparent)]
    EmptyRestrictedFamily(#[from] EmptyRestrictedFamily),
    #[error("invalid tree serialization at byte {pos}: {message}")]
    Parse { pos: usize, message: String },
    #[error("invalid code tree: {0}")]
    InvalidTree(String),
    #[error(transparent)]
    Families(#[from] crate::chain::FamiliesError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("symbol index {0} is outside the code's alphabet")]
    UnknownSymbol(usize),
    #[error("malformed stream at bit {pos}: {reason}")]
    MalformedStream { pos: usize, reason: String },
}

/// A memoryless source: positive rational probabilities summing to one,
/// each an integer multiple of 2^-b.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpec {
    probabilities: Vector,
    b: u32,
}

impl SourceSpec {
    pub fn new(probabilities: Vector, b: u32) -> Result<Self, AifvError> {
        if probabilities.is_empty() {
            return Err(AifvError::BadSource("no symbols".into()));
        }
        let scale = Rational::from_integer(BigInt::one() << b);
        for (i, p) in probabilities.iter().enumerate() {
            if !p.is_positive() {
                return Err(AifvError::BadSource(format!(
                    "p_{i} = {} is not positive",
                    format_rational(p)
                )));
            }
            if !(p * &scale).is_integer() {
                return Err(AifvError::BadSource(format!(
                    "p_{i} = {} is not a multiple of 2^-{b}",
                    format_rational(p)
                )));
            }
        }
        let total: Rational = probabilities.iter().cloned().sum();
        if !total.is_one() {
            return Err(AifvError::BadSource(format!(
                "probabilities sum to {}, expected 1",
                format_rational(&total)
            )));
        }
        Ok(SourceSpec { probabilities, b })
    }

    pub fn n(&self) -> usize {
        self.probabilities.len()
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn probabilities(&self) -> &[Rational] {
        &self.probabilities
    }

    pub fn p(&self, i: usize) -> &Rational {
        &self.probabilities[i]
    }

    /// Shannon entropy -sum p_i log2 p_i in floating point (reporting only).
    pub fn entropy(&self) -> f64 {
        self.probabilities
            .iter()
            .map(|p| {
                let v = rational_to_f64(p);
                -v * v.log2()
            })
            .sum()
    }
}

/// Symbol indices print as letters: 0 -> 'a', 1 -> 'b', ...
pub fn symbol_char(i: usize) -> char {
    assert!(i < 26, "alphabet limited to 26 symbols");
    (b'a' + i as u8) as char
}

pub fn symbol_index(c: char) -> Option<usize> {
    if c.is_ascii_lowercase() {
        Some((c as u8 - b'a') as usize)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    /// Two children: 0-child, 1-child. Carries no symbol.
    Complete(Box<Node>, Box<Node>),
    /// One 0-child, no symbol.
    Slave0(Box<Node>),
    /// One 1-child, no symbol.
    Slave1(Box<Node>),
    /// Carries a symbol. Degree 0 is a leaf; degree d >= 1 has a 0-child
    /// heading a chain of exactly d slave-0 nodes.
    Master {
        degree: usize,
        symbol: usize,
        child: Option<Box<Node>>,
    },
}

impl Node {
    /// Child reached by reading `bit`, if any.
    fn step(&self, bit: u8) -> Option<&Node> {
        match (self, bit) {
            (Node::Complete(zero, _), 0) => Some(zero),
            (Node::Complete(_, one), 1) => Some(one),
            (Node::Slave0(c), 0) => Some(c),
            (Node::Slave1(c), 1) => Some(c),
            (Node::Master { child: Some(c), .. }, 0) => Some(c),
            _ => None,
        }
    }

    fn zero_child(&self) -> Option<&Node> {
        self.step(0)
    }

    pub fn height(&self) -> usize {
        match self {
            Node::Complete(a, b) => 1 + a.height().max(b.height()),
            Node::Slave0(c) | Node::Slave1(c) => 1 + c.height(),
            Node::Master { child: None, .. } => 0,
            Node::Master { child: Some(c), .. } => 1 + c.height(),
        }
    }
}

/// A single code tree of type `k` (the tree used after a degree-k emission).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeTree {
    pub k: usize,
    pub root: Node,
}

/// A full code: tree k sits at index k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Code {
    pub m: usize,
    pub trees: Vec<CodeTree>,
}

impl Code {
    pub fn new(trees: Vec<CodeTree>) -> Result<Self, AifvError> {
        let m = trees.len();
        for (k, t) in trees.iter().enumerate() {
            if t.k != k {
                return Err(AifvError::InvalidTree(format!(
                    "tree at position {k} declares type {}",
                    t.k
                )));
            }
        }
        Ok(Code { m, trees })
    }
}

// ---------------------------------------------------------------------------
// canonical serialization

/// Preorder canonical form: `C(l,r)`, `I0(c)`, `I1(c)`, `M{d}:{sym}` for
/// leaves and `M{d}:{sym}(c)` otherwise.
pub fn serialize_tree(node: &Node) -> String {
    let mut s = String::new();
    write_node(node, &mut s);
    s
}

fn write_node(node: &Node, out: &mut String) {
    match node {
        Node::Complete(a, b) => {
            out.push_str("C(");
            write_node(a, out);
            out.push(',');
            write_node(b, out);
            out.push(')');
        }
        Node::Slave0(c) => {
            out.push_str("I0(");
            write_node(c, out);
            out.push(')');
        }
        Node::Slave1(c) => {
            out.push_str("I1(");
            write_node(c, out);
            out.push(')');
        }
        Node::Master {
            degree,
            symbol,
            child,
        } => {
            out.push('M');
            out.push_str(&degree.to_string());
            out.push(':');
            out.push(symbol_char(*symbol));
            if let Some(c) = child {
                out.push('(');
                write_node(c, out);
                out.push(')');
            }
        }
    }
}

pub fn parse_tree(s: &str) -> Result<Node, AifvError> {
    let bytes = s.as_bytes();
    let mut pos = 0;
    let node = parse_node(bytes, &mut pos)?;
    if pos != bytes.len() {
        return Err(AifvError::Parse {
            pos,
            message: "trailing input".into(),
        });
    }
    Ok(node)
}

fn parse_node(b: &[u8], pos: &mut usize) -> Result<Node, AifvError> {
    let err = |pos: usize, message: &str| AifvError::Parse {
        pos,
        message: message.into(),
    };
    let expect = |b: &[u8], pos: &mut usize, c: u8| -> Result<(), AifvError> {
        if b.get(*pos) == Some(&c) {
            *pos += 1;
            Ok(())
        } else {
            Err(AifvError::Parse {
                pos: *pos,
                message: format!("expected {:?}", c as char),
            })
        }
    };
    match b.get(*pos) {
        Some(b'C') => {
            *pos += 1;
            expect(b, pos, b'(')?;
            let a = parse_node(b, pos)?;
            expect(b, pos, b',')?;
            let r = parse_node(b, pos)?;
            expect(b, pos, b')')?;
            Ok(Node::Complete(Box::new(a), Box::new(r)))
        }
        Some(b'I') => {
            *pos += 1;
            let which = *b.get(*pos).ok_or_else(|| err(*pos, "truncated slave node"))?;
            *pos += 1;
            expect(b, pos, b'(')?;
            let c = parse_node(b, pos)?;
            expect(b, pos, b')')?;
            match which {
                b'0' => Ok(Node::Slave0(Box::new(c))),
                b'1' => Ok(Node::Slave1(Box::new(c))),
                _ => Err(err(*pos, "slave kind must be 0 or 1")),
            }
        }
        Some(b'M') => {
            *pos += 1;
            let start = *pos;
            while b.get(*pos).is_some_and(u8::is_ascii_digit) {
                *pos += 1;
            }
            let degree: usize = std::str::from_utf8(&b[start..*pos])
                .unwrap()
                .parse()
                .map_err(|_| err(start, "missing master degree"))?;
            expect(b, pos, b':')?;
            let sym = *b.get(*pos).ok_or_else(|| err(*pos, "missing symbol"))?;
            let symbol =
                symbol_index(sym as char).ok_or_else(|| err(*pos, "symbol must be a-z"))?;
            *pos += 1;
            let child = if b.get(*pos) == Some(&b'(') {
                *pos += 1;
                let c = parse_node(b, pos)?;
                expect(b, pos, b')')?;
                Some(Box::new(c))
            } else {
                None
            };
            Ok(Node::Master {
                degree,
                symbol,
                child,
            })
        }
        _ => Err(err(*pos, "expected C, I or M")),
    }
}

// ---------------------------------------------------------------------------
// validation

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Severity {
    /// Structural violation: the tree is not a code tree at all.
    Hard,
    /// Normalization violation: legal but never needed in a minimum-cost
    /// code; rejected only in strict mode.
    Normalization,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub severity: Severity,
    pub message: String,
}

fn hard(msg: String) -> Violation {
    Violation {
        severity: Severity::Hard,
        message: msg,
    }
}

fn norm(msg: String) -> Violation {
    Violation {
        severity: Severity::Normalization,
        message: msg,
    }
}

/// Checks a type-k tree against the structural rules (hard) and the
/// normalization rules plus the height bound (advisory).
pub fn validate(tree: &CodeTree, m: usize, n: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut symbols = vec![0usize; n];

    // structural walk; `zeros` = Some(t) while the node is 0^t
    fn walk(
        node: &Node,
        parent: Option<&Node>,
        zeros: Option<usize>,
        k: usize,
        m: usize,
        symbols: &mut [usize],
        out: &mut Vec<Violation>,
    ) {
        match node {
            Node::Complete(a, b) => {
                walk(a, Some(node), zeros.map(|t| t + 1), k, m, symbols, out);
                walk(b, Some(node), None, k, m, symbols, out);
            }
            Node::Slave0(c) => {
                match parent {
                    None => {
                        if k == 0 {
                            out.push(norm("root of a type-0 tree is a slave-0 node".into()));
                        }
                    }
                    Some(Node::Master { .. }) | Some(Node::Slave0(_)) => {}
                    Some(_) => out.push(norm(
                        "slave-0 node whose parent is neither a master nor a slave-0".into(),
                    )),
                }
                walk(c, Some(node), zeros.map(|t| t + 1), k, m, symbols, out);
            }
            Node::Slave1(c) => {
                if parent.is_none() {
                    out.push(norm("root is a slave-1 node".into()));
                }
                if matches!(parent, Some(Node::Slave1(_))) {
                    out.push(norm("slave-1 node with a slave-1 parent".into()));
                }
                if zeros != Some(k) || k == 0 {
                    out.push(norm(format!(
                        "slave-1 node away from the 0^{k} position of a type-{k} tree"
                    )));
                }
                walk(c, Some(node), None, k, m, symbols, out);
            }
            Node::Master {
                degree,
                symbol,
                child,
            } => {
                if *degree >= m {
                    out.push(hard(format!("master degree {degree} out of range [0,{m})")));
                }
                if *symbol >= symbols.len() {
                    out.push(hard(format!("symbol index {symbol} out of range")));
                } else {
                    symbols[*symbol] += 1;
                }
                match (*degree, child) {
                    (0, None) => {}
                    (0, Some(_)) => out.push(hard("degree-0 master with a child".into())),
                    (_, None) => out.push(hard(format!("degree-{degree} master without a child"))),
                    (d, Some(c)) => {
                        // the next d nodes down the 0-path must be slave-0,
                        // the one after must not be
                        let mut cur: &Node = c;
                        for t in 1..=d {
                            match cur {
                                Node::Slave0(next) => {
                                    if t < d {
                                        cur = next;
                                    } else if matches!(**next, Node::Slave0(_)) {
                                        out.push(hard(format!(
                                            "degree-{d} master followed by more than {d} slave-0 nodes"
                                        )));
                                    }
                                }
                                _ => {
                                    out.push(hard(format!(
                                        "degree-{d} master not followed by {d} slave-0 nodes"
                                    )));
                                    break;
                                }
                            }
                        }
                        walk(c, Some(node), zeros.map(|t| t + 1), k, m, symbols, out);
                    }
                }
            }
        }
    }

    walk(
        &tree.root,
        None,
        Some(0),
        tree.k,
        m,
        &mut symbols,
        &mut out,
    );

    for (i, count) in symbols.iter().enumerate() {
        if *count != 1 {
            out.push(hard(format!(
                "symbol {} assigned to {count} master nodes",
                symbol_char(i)
            )));
        }
    }

    if tree.k >= 1 {
        let mut node = Some(&tree.root);
        for _ in 0..tree.k {
            node = node.and_then(Node::zero_child);
        }
        match node {
            Some(Node::Slave1(_)) => {}
            _ => out.push(hard(format!(
                "type-{k} tree has no slave-1 node at position 0^{k}",
                k = tree.k
            ))),
        }
    }

    let height = tree.root.height();
    if height > full_height_bound(n, m) {
        out.push(norm(format!(
            "height {height} exceeds the bound {}",
            full_height_bound(n, m)
        )));
    }

    out
}

pub fn has_hard_violation(violations: &[Violation]) -> bool {
    violations.iter().any(|v| v.severity == Severity::Hard)
}

// ---------------------------------------------------------------------------
// stats and state conversion

/// Per-symbol data of one tree: codeword lengths, master degrees, average
/// length and the induced transition vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeStats {
    pub lengths: Vec<usize>,
    pub degrees: Vec<usize>,
    pub avg_length: Rational,
    pub transitions: Vector,
}

/// Masters of a tree in preorder as (symbol, depth, degree).
fn master_slots(node: &Node, depth: usize, out: &mut Vec<(usize, usize, usize)>) {
    match node {
        Node::Complete(a, b) => {
            master_slots(a, depth + 1, out);
            master_slots(b, depth + 1, out);
        }
        Node::Slave0(c) | Node::Slave1(c) => master_slots(c, depth + 1, out),
        Node::Master {
            degree,
            symbol,
            child,
        } => {
            out.push((*symbol, depth, *degree));
            if let Some(c) = child {
                master_slots(c, depth + 1, out);
            }
        }
    }
}

pub fn tree_stats(tree: &CodeTree, src: &SourceSpec, m: usize) -> TreeStats {
    let n = src.n();
    let mut slots = Vec::with_capacity(n);
    master_slots(&tree.root, 0, &mut slots);
    let mut lengths = vec![0usize; n];
    let mut degrees = vec![0usize; n];
    for (symbol, depth, degree) in slots {
        lengths[symbol] = depth;
        degrees[symbol] = degree;
    }
    let avg_length: Rational = (0..n)
        .map(|i| src.p(i) * Rational::from_integer(lengths[i].into()))
        .sum();
    let mut transitions = vec![Rational::zero(); m];
    for i in 0..n {
        transitions[degrees[i]] += src.p(i);
    }
    TreeStats {
        lengths,
        degrees,
        avg_length,
        transitions,
    }
}

/// The Markov state of a tree: cost = average codeword length, transition
/// j = probability of switching to tree j, label = canonical serialization.
pub fn to_state(tree: &CodeTree, src: &SourceSpec, m: usize) -> State {
    let stats = tree_stats(tree, src, m);
    State::new(stats.avg_length, stats.transitions, serialize_tree(&tree.root))
}

// ---------------------------------------------------------------------------
// encoding / decoding

/// Per-tree codeword table: symbol -> (bits, master degree).
fn codeword_table(tree: &CodeTree, n: usize) -> Result<Vec<(Vec<u8>, usize)>, CodecError> {
    fn collect(node: &Node, path: &mut Vec<u8>, out: &mut Vec<Option<(Vec<u8>, usize)>>) {
        match node {
            Node::Complete(a, b) => {
                path.push(0);
                collect(a, path, out);
                path.pop();
                path.push(1);
                collect(b, path, out);
                path.pop();
            }
            Node::Slave0(c) => {
                path.push(0);
                collect(c, path, out);
                path.pop();
            }
            Node::Slave1(c) => {
                path.push(1);
                collect(c, path, out);
                path.pop();
            }
            Node::Master {
                degree,
                symbol,
                child,
            } => {
                if *symbol < out.len() {
                    out[*symbol] = Some((path.clone(), *degree));
                }
                if let Some(c) = child {
                    path.push(0);
                    collect(c, path, out);
                    path.pop();
                }
            }
        }
    }
    let mut out = vec![None; n];
    collect(&tree.root, &mut Vec::new(), &mut out);
    out.into_iter()
        .enumerate()
        .map(|(i, e)| e.ok_or(CodecError::UnknownSymbol(i)))
        .collect()
}

/// Encodes a message (symbol indices) to a bit vector (0/1 bytes). Starts
/// in tree 0 and switches to tree d after each degree-d master emission.
pub fn encode(code: &Code, message: &[usize], n: usize) -> Result<Vec<u8>, CodecError> {
    let tables: Vec<_> = code
        .trees
        .iter()
        .map(|t| codeword_table(t, n))
        .collect::<Result<_, _>>()?;
    let mut bits = Vec::new();
    let mut cur = 0usize;
    for &sym in message {
        if sym >= n {
            return Err(CodecError::UnknownSymbol(sym));
        }
        let (word, degree) = &tables[cur][sym];
        bits.extend_from_slice(word);
        cur = *degree;
    }
    Ok(bits)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutcome {
    pub symbols: Vec<usize>,
    /// Largest number of bits examined past a committed codeword boundary.
    pub max_delay: usize,
}

/// Longest walkable master prefix of `bits[from..]` in `tree`:
/// (consumed bits, symbol, degree, bits examined).
fn longest_master_prefix(
    tree: &CodeTree,
    bits: &[u8],
    from: usize,
) -> (Option<(usize, usize, usize)>, usize) {
    let mut node = &tree.root;
    let mut best = None;
    let mut j = from;
    if let Node::Master { degree, symbol, .. } = node {
        best = Some((0, *symbol, *degree));
    }
    while j < bits.len() {
        match node.step(bits[j]) {
            Some(next) => {
                node = next;
                j += 1;
                if let Node::Master { degree, symbol, .. } = node {
                    best = Some((j - from, *symbol, *degree));
                }
            }
            None => break,
        }
    }
    (best, j - from)
}

/// Greedy decoder: repeatedly strips the longest prefix reaching a master
/// node of the current tree, stopping once all bits are consumed. Trailing
/// zero-bit codewords (a master at the root of the next tree) are *not*
/// emitted; use [`decode_exact`] when the message length is known.
pub fn decode(code: &Code, bits: &[u8]) -> Result<DecodeOutcome, CodecError> {
    decode_inner(code, bits, None)
}

/// Decodes exactly `count` symbols, emitting trailing empty codewords when
/// the bit stream is exhausted but root-master emissions remain.
pub fn decode_exact(code: &Code, bits: &[u8], count: usize) -> Result<DecodeOutcome, CodecError> {
    decode_inner(code, bits, Some(count))
}

fn decode_inner(
    code: &Code,
    bits: &[u8],
    count: Option<usize>,
) -> Result<DecodeOutcome, CodecError> {
    let m = code.m;
    let mut symbols = Vec::new();
    let mut cur = 0usize;
    let mut i = 0usize;
    let mut max_delay = 0usize;
    let mut zero_run = 0usize;
    loop {
        match count {
            Some(c) if symbols.len() == c => break,
            None if i >= bits.len() => break,
            _ => {}
        }
        let (best, examined) = longest_master_prefix(&code.trees[cur], bits, i);
        let Some((consumed, symbol, degree)) = best else {
            return Err(CodecError::MalformedStream {
                pos: i,
                reason: "no codeword matches the remaining bits".into(),
            });
        };
        if consumed == 0 {
            zero_run += 1;
            if zero_run > m {
                return Err(CodecError::MalformedStream {
                    pos: i,
                    reason: "no progress: cycle of empty codewords".into(),
                });
            }
        } else {
            zero_run = 0;
        }
        max_delay = max_delay.max(examined - consumed);
        symbols.push(symbol);
        i += consumed;
        cur = degree;
    }
    if count.is_some() && i < bits.len() {
        return Err(CodecError::MalformedStream {
            pos: i,
            reason: format!("{} unconsumed bits after the message", bits.len() - i),
        });
    }
    Ok(DecodeOutcome { symbols, max_delay })
}

// ---------------------------------------------------------------------------
// enumeration

/// Tree shapes: nodes with unassigned master symbols.
fn gen_shapes(
    depth: usize,
    spine: Option<usize>,
    allow_s0: bool,
    masters: usize,
    k: usize,
    m: usize,
    cap: usize,
    produced: &mut usize,
    budget: usize,
) -> Result<Vec<Node>, AifvError> {
    let mut out: Vec<Node> = Vec::new();
    if masters == 0 || depth > cap {
        return Ok(out);
    }
    let push = |out: &mut Vec<Node>, node: Node, produced: &mut usize| {
        *produced += 1;
        out.push(node);
        if *produced > budget {
            Err(AifvError::BudgetExceeded { budget })
        } else {
            Ok(())
        }
    };

    if spine == Some(k) && k > 0 {
        // the mandatory slave-1 node at 0^k
        for c in gen_shapes(depth + 1, None, false, masters, k, m, cap, produced, budget)? {
            push(&mut out, Node::Slave1(Box::new(c)), produced)?;
        }
        return Ok(out);
    }

    // leaf master; on the spine it would cut off the path to 0^k
    if masters == 1 && spine.is_none() {
        push(
            &mut out,
            Node::Master {
                degree: 0,
                symbol: usize::MAX,
                child: None,
            },
            produced,
        )?;
    }

    // master of degree d with its slave-0 chain, then a non-slave-0 node
    if masters >= 2 {
        for d in 1..m {
            let cont_depth = depth + d + 1;
            if cont_depth > cap {
                continue;
            }
            let cont_spine = match spine {
                Some(t) => {
                    if t + d >= k {
                        continue; // chain would swallow the 0^k slot
                    }
                    Some(t + d + 1)
                }
                None => None,
            };
            for c in gen_shapes(
                cont_depth, cont_spine, false, masters - 1, k, m, cap, produced, budget,
            )? {
                let mut chain = c;
                for _ in 0..d {
                    chain = Node::Slave0(Box::new(chain));
                }
                push(
                    &mut out,
                    Node::Master {
                        degree: d,
                        symbol: usize::MAX,
                        child: Some(Box::new(chain)),
                    },
                    produced,
                )?;
            }
        }
    }

    // complete node; each subtree needs at least one master (leaf)
    if masters >= 2 {
        for left_masters in 1..masters {
            let lefts = gen_shapes(
                depth + 1,
                spine.map(|t| t + 1),
                false,
                left_masters,
                k,
                m,
                cap,
                produced,
                budget,
            )?;
            if lefts.is_empty() {
                continue;
            }
            let rights = gen_shapes(
                depth + 1,
                None,
                false,
                masters - left_masters,
                k,
                m,
                cap,
                produced,
                budget,
            )?;
            for l in &lefts {
                for r in &rights {
                    push(
                        &mut out,
                        Node::Complete(Box::new(l.clone()), Box::new(r.clone())),
                        produced,
                    )?;
                }
            }
        }
    }

    // slave-0 chain from the root of a type-k tree (k >= 1)
    if allow_s0 {
        if let Some(t) = spine {
            if t < k {
                for c in gen_shapes(
                    depth + 1,
                    Some(t + 1),
                    true,
                    masters,
                    k,
                    m,
                    cap,
                    produced,
                    budget,
                )? {
                    push(&mut out, Node::Slave0(Box::new(c)), produced)?;
                }
            }
        }
    }

    Ok(out)
}

fn shapes_for(
    k: usize,
    m: usize,
    n: usize,
    height_cap: usize,
    budget: usize,
) -> Result<Vec<Node>, AifvError> {
    let mut produced = 0;
    gen_shapes(
        0,
        (k >= 1).then_some(0),
        k >= 1,
        n,
        k,
        m,
        height_cap,
        &mut produced,
        budget,
    )
}

/// Master slots of a shape in preorder: (preorder rank, depth, degree).
fn shape_slots(node: &Node) -> Vec<(usize, usize, usize)> {
    let mut raw = Vec::new();
    master_slots(node, 0, &mut raw);
    raw.iter()
        .enumerate()
        .map(|(rank, &(_, depth, degree))| (rank, depth, degree))
        .collect()
}

/// Writes `assignment[preorder rank] = symbol` into the shape.
fn assign_symbols(node: &mut Node, assignment: &[usize]) {
    fn go(node: &mut Node, assignment: &[usize], rank: &mut usize) {
        match node {
            Node::Complete(a, b) => {
                go(a, assignment, rank);
                go(b, assignment, rank);
            }
            Node::Slave0(c) | Node::Slave1(c) => go(c, assignment, rank),
            Node::Master { symbol, child, .. } => {
                *symbol = assignment[*rank];
                *rank += 1;
                if let Some(c) = child {
                    go(c, assignment, rank);
                }
            }
        }
    }
    let mut rank = 0;
    go(node, assignment, &mut rank);
}

/// Symbols ordered by descending probability (ties by index).
fn symbols_by_probability(src: &SourceSpec) -> Vec<usize> {
    let mut order: Vec<usize> = (0..src.n()).collect();
    order.sort_by(|&a, &b| src.p(b).cmp(src.p(a)).then(a.cmp(&b)));
    order
}

/// Fills a shape with the average-length-optimal symbol assignment:
/// shallower slots get likelier symbols (slot ties break in preorder,
/// probability ties by symbol index).
fn assign_shape(mut shape: Node, src: &SourceSpec) -> Node {
    let mut slots = shape_slots(&shape);
    slots.sort_by_key(|&(rank, depth, _)| (depth, rank));
    let order = symbols_by_probability(src);
    let mut assignment = vec![0usize; slots.len()];
    for (&(rank, _, _), &sym) in slots.iter().zip(&order) {
        assignment[rank] = sym;
    }
    assign_symbols(&mut shape, &assignment);
    shape
}

/// All valid normalized type-k trees with height at most `height_cap`, one
/// per shape, symbols assigned to minimize the average length. Determinism:
/// shapes stream in a fixed recursive order.
pub fn enumerate_trees(
    k: usize,
    m: usize,
    src: &SourceSpec,
    height_cap: usize,
) -> Result<Vec<CodeTree>, AifvError> {
    enumerate_trees_budgeted(k, m, src, height_cap, TREE_BUDGET)
}

pub fn enumerate_trees_budgeted(
    k: usize,
    m: usize,
    src: &SourceSpec,
    height_cap: usize,
    budget: usize,
) -> Result<Vec<CodeTree>, AifvError> {
    let shapes = shapes_for(k, m, src.n(), height_cap, budget)?;
    Ok(shapes
        .into_iter()
        .map(|shape| CodeTree {
            k,
            root: assign_shape(shape, src),
        })
        .collect())
}

/// The search-oracle step: the type-k tree minimizing
/// `f(k, x, to_state(T))` over trees whose master degrees all lie in `p`.
/// Per shape, the assignment pairing likelier symbols with smaller
/// `depth + x_degree` keys is optimal (exchange argument), so only one
/// labeled tree per shape is scored. Ties break by enumeration order.
pub fn best_tree(
    k: usize,
    m: usize,
    src: &SourceSpec,
    x: &crate::chain::PointX,
    p: &Restriction,
    height_cap: usize,
) -> Result<(CodeTree, Rational), AifvError> {
    let shapes = shapes_for(k, m, src.n(), height_cap, TREE_BUDGET)?;
    let order = symbols_by_probability(src);
    let mut best: Option<(Node, Rational)> = None;
    for shape in shapes {
        let mut slots = shape_slots(&shape);
        if slots.iter().any(|&(_, _, d)| !p.contains(d)) {
            continue;
        }
        // key = depth + x_{degree}; pair largest probabilities with the
        // smallest keys
        slots.sort_by(|&(ra, da, ga), &(rb, db, gb)| {
            let ka = Rational::from_integer(da.into()) + x.coord(ga);
            let kb = Rational::from_integer(db.into()) + x.coord(gb);
            ka.cmp(&kb).then(da.cmp(&db)).then(ra.cmp(&rb))
        });
        let mut value = if k > 0 { -x.coord(k) } else { Rational::zero() };
        let mut assignment = vec![0usize; slots.len()];
        for (&(rank, depth, degree), &sym) in slots.iter().zip(&order) {
            assignment[rank] = sym;
            value += src.p(sym) * (Rational::from_integer(depth.into()) + x.coord(degree));
        }
        if best.as_ref().is_none_or(|(_, v)| value < *v) {
            let mut labeled = shape;
            assign_symbols(&mut labeled, &assignment);
            best = Some((labeled, value));
        }
    }
    match best {
        Some((root, value)) => Ok((CodeTree { k, root }, value)),
        None => Err(EmptyRestrictedFamily {
            family: k,
            allowed: p.indices().collect(),
        }
        .into()),
    }
}

/// Materializes the per-type state families by enumerating trees and
/// converting each to its Markov state; labels carry the serialized tree.
pub fn families_from_source(
    src: &SourceSpec,
    m: usize,
    height_cap: usize,
) -> Result<StateFamilies, AifvError> {
    let mut families = Vec::with_capacity(m);
    for k in 0..m {
        let trees = enumerate_trees(k, m, src, height_cap)?;
        families.push(trees.iter().map(|t| to_state(t, src, m)).collect());
    }
    Ok(StateFamilies::new(families)?)
}

/// Maps a solved chain back to trees via the serialized-tree labels.
pub fn code_from_chain(chain: &crate::chain::Chain) -> Result<Code, AifvError> {
    let trees = chain
        .states()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            Ok(CodeTree {
                k,
                root: parse_tree(&s.label)?,
            })
        })
        .collect::<Result<Vec<_>, AifvError>>()?;
    Code::new(trees)
}

// ---------------------------------------------------------------------------
// Huffman baseline

/// Optimal prefix-code lengths and exact expected length. Single-symbol
/// sources get length 0.
pub fn huffman(src: &SourceSpec) -> (Vec<usize>, Rational) {
    let n = src.n();
    if n == 1 {
        return (vec![0], Rational::zero());
    }
    // (weight, creation index, member symbols); pick the two smallest
    let mut heap: Vec<(Rational, usize, Vec<usize>)> = (0..n)
        .map(|i| (src.p(i).clone(), i, vec![i]))
        .collect();
    let mut lengths = vec![0usize; n];
    let mut next_idx = n;
    while heap.len() > 1 {
        heap.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)));
        let (wa, _, sa) = heap.pop().unwrap();
        let (wb, _, sb) = heap.pop().unwrap();
        let mut merged = sa;
        merged.extend(sb);
        for &s in &merged {
            lengths[s] += 1;
        }
        heap.push((wa + wb, next_idx, merged));
        next_idx += 1;
    }
    let cost = (0..n)
        .map(|i| src.p(i) * Rational::from_integer(lengths[i].into()))
        .sum();
    (lengths, cost)
}

// ---------------------------------------------------------------------------
// facet checks

#[derive(Debug, Clone)]
pub struct FacetReport {
    pub samples: usize,
    pub violations: Vec<String>,
}

impl FacetReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Empirical check of the box-facet inequalities that place an optimal x
/// inside the unit cube when n >= 2^m - 1: on the facet x_k = 0 the type-0
/// envelope must not exceed the type-k one, and at x_k = 1 the reverse.
/// Exact arithmetic over the enumerated families; sampled facet points use
/// dyadic coordinates derived from `seed`.
pub fn check_facet_inequalities(
    src: &SourceSpec,
    m: usize,
    samples: usize,
    height_cap: usize,
    seed: u64,
) -> Result<FacetReport, AifvError> {
    use rand::{Rng, SeedableRng};
    let fams = families_from_source(src, m, height_cap)?;
    let full = Restriction::full(m);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    let mut checked = 0;
    'outer: for _ in 0..samples {
        for k in 1..m {
            for (facet, lhs_is_g0) in [(Rational::zero(), true), (Rational::one(), false)] {
                let mut coords = Vec::with_capacity(m - 1);
                for j in 1..m {
                    if j == k {
                        coords.push(facet.clone());
                    } else {
                        coords.push(Rational::new(
                            BigInt::from(rng.gen_range(0..=64)),
                            BigInt::from(64),
                        ));
                    }
                }
                let x = crate::chain::PointX(coords);
                let env = crate::polytope::envelope(&fams, &x, &full)?;
                let (lo, hi) = if lhs_is_g0 { (0, k) } else { (k, 0) };
                if env.g(lo) > env.g(hi) {
                    violations.push(format!(
                        "x_{k} = {}: g_{lo} = {} exceeds g_{hi} = {}",
                        format_rational(&facet),
                        format_rational(env.g(lo)),
                        format_rational(env.g(hi)),
                    ));
                    if violations.len() > 10 {
                        break 'outer;
                    }
                }
                checked += 1;
            }
        }
    }
    Ok(FacetReport {
        samples: checked,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rat;

    fn dyadic_src(ps: &[(i64, i64)], b: u32) -> SourceSpec {
        SourceSpec::new(ps.iter().map(|&(p, q)| rat(p, q)).collect(), b).unwrap()
    }

    fn src4() -> SourceSpec {
        dyadic_src(&[(1, 2), (1, 4), (1, 8), (1, 8)], 3)
    }

    #[test]
    fn source_validation() {
        assert!(SourceSpec::new(vec![rat(1, 2), rat(1, 2)], 1).is_ok());
        assert!(SourceSpec::new(vec![rat(1, 2), rat(1, 4)], 2).is_err()); // sum
        assert!(SourceSpec::new(vec![rat(1, 3), rat(2, 3)], 4).is_err()); // not dyadic
        assert!(SourceSpec::new(vec![], 1).is_err());
    }

    #[test]
    fn serialize_parse_round_trip() {
        let s = "C(M1:a(I0(M0:c)),M2:b(I0(I0(M0:d))))";
        let node = parse_tree(s).unwrap();
        assert_eq!(serialize_tree(&node), s);
        assert!(parse_tree("C(M0:a").is_err());
        assert!(parse_tree("X").is_err());
    }

    #[test]
    fn single_symbol_tree() {
        let src = dyadic_src(&[(1, 1)], 0);
        let trees = enumerate_trees(0, 2, &src, 3).unwrap();
        assert_eq!(trees.len(), 1);
        assert_eq!(serialize_tree(&trees[0].root), "M0:a");
        let st = to_state(&trees[0], &src, 2);
        assert!(st.cost.is_zero());
        assert_eq!(st.transitions, vec![rat(1, 1), rat(0, 1)]);
    }

    #[test]
    fn slave1_required_for_type1() {
        let src = dyadic_src(&[(1, 1)], 0);
        let trees = enumerate_trees(1, 2, &src, 3).unwrap();
        assert_eq!(trees.len(), 1);
        assert_eq!(serialize_tree(&trees[0].root), "I0(I1(M0:a))");
        // a leaf at 0^1 is a structural violation
        let bad = CodeTree {
            k: 1,
            root: parse_tree("C(M0:a,M0:b)").unwrap(),
        };
        assert!(has_hard_violation(&validate(&bad, 2, 2)));
    }

    #[test]
    fn normalization_flags() {
        // slave-0 root of a type-0 tree
        let t = CodeTree {
            k: 0,
            root: parse_tree("I0(C(M0:a,M0:b))").unwrap(),
        };
        let v = validate(&t, 2, 2);
        assert!(!has_hard_violation(&v));
        assert!(v.iter().any(|v| v.message.contains("slave-0")));
    }

    #[test]
    fn stats_on_hand_built_tree() {
        // root complete, left master deg 1 + slave-0 + leaf, right leaf
        let t = CodeTree {
            k: 0,
            root: parse_tree("C(M1:a(I0(M0:c)),M0:b)").unwrap(),
        };
        assert!(validate(&t, 2, 3).is_empty());
        let src = dyadic_src(&[(1, 2), (1, 4), (1, 4)], 2);
        let stats = tree_stats(&t, &src, 2);
        assert_eq!(stats.lengths, vec![1, 1, 3]);
        assert_eq!(stats.degrees, vec![1, 0, 0]);
        assert_eq!(stats.avg_length, rat(3, 2));
        assert_eq!(stats.transitions, vec![rat(1, 2), rat(1, 2)]);
    }

    #[test]
    fn enumeration_matches_naive_filter() {
        // independent oracle: generate all labeled structures up to the cap
        // and count the ones that validate cleanly
        fn naive_structures(depth: usize, cap: usize, masters: usize, m: usize) -> Vec<Node> {
            let mut out = Vec::new();
            if masters == 0 || depth > cap {
                return out;
            }
            if masters == 1 {
                out.push(Node::Master {
                    degree: 0,
                    symbol: usize::MAX,
                    child: None,
                });
            }
            for d in 1..m {
                for c in naive_structures(depth + 1, cap, masters - 1, m) {
                    out.push(Node::Master {
                        degree: d,
                        symbol: usize::MAX,
                        child: Some(Box::new(c)),
                    });
                }
            }
            for c in naive_structures(depth + 1, cap, masters, m) {
                out.push(Node::Slave0(Box::new(c.clone())));
                out.push(Node::Slave1(Box::new(c)));
            }
            for j in 1..masters {
                for l in naive_structures(depth + 1, cap, j, m) {
                    for r in naive_structures(depth + 1, cap, masters - j, m) {
                        out.push(Node::Complete(Box::new(l.clone()), Box::new(r)));
                    }
                }
            }
            out
        }
        for (k, n, cap) in [(0usize, 2usize, 3usize), (1, 2, 3), (0, 3, 4), (1, 3, 4)] {
            let m = 2;
            let probs: Vec<Rational> = vec![Rational::new(1.into(), BigInt::from(n)); n];
            // probabilities only matter for assignment, not shape counting
            let src = SourceSpec {
                probabilities: probs,
                b: 8,
            };
            let naive: Vec<Node> = naive_structures(0, cap, n, m)
                .into_iter()
                .map(|shape| assign_shape(shape, &src))
                .filter(|root| {
                    let t = CodeTree {
                        k,
                        root: root.clone(),
                    };
                    validate(&t, m, n).is_empty()
                })
                .collect();
            let ours = enumerate_trees(k, m, &src, cap).unwrap();
            let mut naive_ser: Vec<String> = naive.iter().map(serialize_tree).collect();
            naive_ser.sort();
            naive_ser.dedup();
            let mut ours_ser: Vec<String> =
                ours.iter().map(|t| serialize_tree(&t.root)).collect();
            ours_ser.sort();
            assert_eq!(ours_ser, naive_ser, "k={k} n={n} cap={cap}");
        }
    }

    #[test]
    fn enumerated_trees_validate_cleanly() {
        let src = src4();
        for m in [2usize, 3] {
            for k in 0..m {
                let trees = enumerate_trees(k, m, &src, default_height_cap(4, m)).unwrap();
                assert!(!trees.is_empty());
                for t in &trees {
                    assert!(
                        validate(t, m, src.n()).is_empty(),
                        "violations in {}",
                        serialize_tree(&t.root)
                    );
                    let st = to_state(t, &src, m);
                    assert!(st.validate(m).is_ok());
                }
            }
        }
    }

    #[test]
    fn type_k_trees_also_pass_type_0_structure() {
        let src = src4();
        let m = 3;
        for k in 1..m {
            for t in enumerate_trees(k, m, &src, default_height_cap(4, m)).unwrap() {
                let as_t0 = CodeTree { k: 0, root: t.root };
                assert!(!has_hard_violation(&validate(&as_t0, m, src.n())));
            }
        }
    }

    #[test]
    fn huffman_textbook_cases() {
        let (lens, cost) = huffman(&dyadic_src(&[(1, 2), (1, 4), (1, 4)], 2));
        assert_eq!(cost, rat(3, 2));
        assert_eq!(lens, vec![1, 2, 2]);
        let (_, cost) = huffman(&src4());
        assert_eq!(cost, rat(7, 4));
        let (lens, cost) = huffman(&dyadic_src(&[(1, 4), (1, 4), (1, 4), (1, 4)], 2));
        assert_eq!(cost, rat(2, 1));
        assert_eq!(lens, vec![2, 2, 2, 2]);
    }

    #[test]
    fn best_tree_with_leaf_only_restriction_matches_huffman() {
        let src = src4();
        let (_, huff_cost) = huffman(&src);
        let x = crate::chain::PointX(vec![rat(1, 3)]);
        let (tree, value) = best_tree(
            0,
            2,
            &src,
            &x,
            &Restriction::new([0]),
            default_height_cap(4, 2),
        )
        .unwrap();
        let stats = tree_stats(&tree, &src, 2);
        assert!(stats.degrees.iter().all(|&d| d == 0));
        assert_eq!(value, huff_cost);
    }

    #[test]
    fn best_tree_at_origin_minimizes_length() {
        let src = src4();
        let m = 2;
        let cap = default_height_cap(4, m);
        let x = crate::chain::PointX::origin(m);
        let (_, value) = best_tree(0, m, &src, &x, &Restriction::full(m), cap).unwrap();
        let brute = enumerate_trees(0, m, &src, cap)
            .unwrap()
            .iter()
            .map(|t| tree_stats(t, &src, m).avg_length)
            .min()
            .unwrap();
        assert_eq!(value, brute);
    }

    #[test]
    fn codec_round_trip_small() {
        let src = dyadic_src(&[(1, 2), (1, 4), (1, 4)], 2);
        let fams = families_from_source(&src, 2, default_height_cap(3, 2)).unwrap();
        let report = crate::solvers::solve(
            &fams,
            crate::solvers::Method::Iterate,
            &crate::solvers::SolveOptions::default(),
        )
        .unwrap();
        let code = code_from_chain(&report.chain).unwrap();
        let msg = vec![0usize, 1, 2, 0, 0, 2, 1, 1, 0];
        let bits = encode(&code, &msg, src.n()).unwrap();
        let out = decode_exact(&code, &bits, msg.len()).unwrap();
        assert_eq!(out.symbols, msg);
        assert!(out.max_delay <= 2);
    }

    #[test]
    fn facet_inequalities_hold_m2_n3() {
        let src = dyadic_src(&[(1, 2), (1, 4), (1, 4)], 2);
        let report =
            check_facet_inequalities(&src, 2, 20, default_height_cap(3, 2), 7).unwrap();
        assert!(report.ok(), "{:?}", report.violations);
        assert!(report.samples >= 40);
    }
}
