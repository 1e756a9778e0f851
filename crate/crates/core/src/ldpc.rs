//! Binary LDPC codes: random sparse construction, systematic encoding via
//! GF(2) elimination, and flooding min-sum decoding.
//!
//! LLRs here are `ln P(c = 0) / P(c = 1)`; positive means bit 0.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITERATIONS: usize = 20;

/// Dense GF(2) row, packed into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
struct BitRow(Vec<u64>);

impl BitRow {
    fn zeros(n: usize) -> Self {
        BitRow(vec![0; n.div_ceil(64)])
    }
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn xor_assign(&mut self, other: &BitRow) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a ^= b;
        }
    }
    fn dot(&self, other: &BitRow) -> bool {
        self.0.iter().zip(&other.0).map(|(a, b)| (a & b).count_ones()).sum::<u32>() % 2 == 1
    }
}

/// Systematic encoder derived from the reduced row echelon form of `H`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Encoder {
    /// Codeword positions carrying the message, in order.
    info_cols: Vec<u32>,
    /// Pivot column of each independent check.
    pivots: Vec<u32>,
    /// For each pivot, which message bits it sums (indexed like `info_cols`).
    parity: Vec<BitRow>,
}

impl Encoder {
    fn new(n: usize, rows: &[Vec<u32>]) -> Self {
        let mut dense: Vec<BitRow> = rows
            .iter()
            .map(|r| {
                let mut b = BitRow::zeros(n);
                for &c in r {
                    b.set(c as usize);
                }
                b
            })
            .collect();
        let mut pivots = Vec::new();
        let mut rank = 0;
        for col in 0..n {
            let Some(p) = (rank..dense.len()).find(|&i| dense[i].get(col)) else {
                continue;
            };
            dense.swap(rank, p);
            let pivot_row = dense[rank].clone();
            for (i, row) in dense.iter_mut().enumerate() {
                if i != rank && row.get(col) {
                    row.xor_assign(&pivot_row);
                }
            }
            pivots.push(col as u32);
            rank += 1;
            if rank == dense.len() {
                break;
            }
        }
        let mut is_pivot = vec![false; n];
        for &p in &pivots {
            is_pivot[p as usize] = true;
        }
        let info_cols: Vec<u32> = (0..n as u32).filter(|&c| !is_pivot[c as usize]).collect();
        let parity = dense[..rank]
            .iter()
            .map(|row| {
                let mut b = BitRow::zeros(info_cols.len());
                for (j, &c) in info_cols.iter().enumerate() {
                    if row.get(c as usize) {
                        b.set(j);
                    }
                }
                b
            })
            .collect();
        Encoder { info_cols, pivots, parity }
    }
}

/// A binary code given by a sparse parity-check matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSpec {
    n: usize,
    /// Variable indices of each check.
    rows: Vec<Vec<u32>>,
    /// Check indices of each variable.
    cols: Vec<Vec<u32>>,
    max_iterations: usize,
    /// Multiplier on check-to-variable magnitudes; 1 is plain min-sum.
    check_scale: f64,
    encoder: Encoder,
}

impl CodeSpec {
    /// Builds a code from the `(row, column)` positions of the ones in `H`.
    pub fn from_edges(n: usize, m: usize, edges: &[(u32, u32)], max_iterations: usize) -> Result<Self> {
        if m == 0 || m >= n {
            return Err(Error::Construction(format!("need 0 < m < n, got m={m}, n={n}")));
        }
        if max_iterations == 0 {
            return Err(Error::Construction("max_iterations must be at least 1".into()));
        }
        let mut rows = vec![Vec::new(); m];
        let mut cols = vec![Vec::new(); n];
        for &(r, c) in edges {
            if r as usize >= m || c as usize >= n {
                return Err(Error::Construction(format!("entry ({r}, {c}) outside {m}x{n}")));
            }
            rows[r as usize].push(c);
            cols[c as usize].push(r);
        }
        for r in rows.iter_mut() {
            r.sort_unstable();
        }
        for (c, col) in cols.iter_mut().enumerate() {
            col.sort_unstable();
            if col.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Construction(format!("duplicate entry in column {c}")));
            }
            if col.len() < 2 {
                return Err(Error::Construction(format!("column {c} has weight {} < 2", col.len())));
            }
        }
        let encoder = Encoder::new(n, &rows);
        if encoder.info_cols.is_empty() {
            return Err(Error::Construction("parity checks leave no message bits".into()));
        }
        Ok(CodeSpec { n, rows, cols, max_iterations, check_scale: 1.0, encoder })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of parity checks (rows of `H`).
    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn rank(&self) -> usize {
        self.encoder.pivots.len()
    }

    /// Message length `n - rank(H)`.
    pub fn k(&self) -> usize {
        self.n - self.rank()
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n as f64
    }

    pub fn max_iterations(&self) -> usize {
        self.max_iterations
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Result<Self> {
        if max_iterations == 0 {
            return Err(Error::Construction("max_iterations must be at least 1".into()));
        }
        self.max_iterations = max_iterations;
        Ok(self)
    }

    pub fn check_scale(&self) -> f64 {
        self.check_scale
    }

    /// Normalized min-sum: check messages are multiplied by `scale` in (0, 1].
    pub fn with_check_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::Construction(format!("check scale {scale} not in (0, 1]")));
        }
        self.check_scale = scale;
        Ok(self)
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn column(&self, j: usize) -> &[u32] {
        &self.cols[j]
    }

    /// Codeword positions that carry the message bits.
    pub fn info_positions(&self) -> &[u32] {
        &self.encoder.info_cols
    }

    /// Number of length-4 cycles in the Tanner graph.
    pub fn four_cycles(&self) -> usize {
        let mut count = 0;
        for c in &self.cols {
            for (i, &a) in c.iter().enumerate() {
                for &b in &c[i + 1..] {
                    // pairs of variables sharing checks a and b, counted once per pair
                    count += intersect_count(&self.rows[a as usize], &self.rows[b as usize]) - 1;
                }
            }
        }
        count / 2
    }

    /// Whether every parity check is satisfied.
    pub fn is_codeword(&self, bits: &[u8]) -> bool {
        bits.len() == self.n && self.rows.iter().all(|r| r.iter().fold(0u8, |acc, &c| acc ^ bits[c as usize]) == 0)
    }

    /// Systematic encoding: the message appears at `info_positions`.
    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        if message.len() != self.k() {
            return Err(Error::Precondition(format!("message has {} bits, code expects {}", message.len(), self.k())));
        }
        let mut packed = BitRow::zeros(message.len());
        for (j, &b) in message.iter().enumerate() {
            if b > 1 {
                return Err(Error::Precondition(format!("message bit {j} is {b}")));
            }
            if b == 1 {
                packed.set(j);
            }
        }
        let mut c = vec![0u8; self.n];
        for (&pos, &b) in self.encoder.info_cols.iter().zip(message) {
            c[pos as usize] = b;
        }
        for (&pivot, row) in self.encoder.pivots.iter().zip(&self.encoder.parity) {
            c[pivot as usize] = row.dot(&packed) as u8;
        }
        Ok(c)
    }

    /// Message bits of a codeword.
    pub fn extract_message(&self, codeword: &[u8]) -> Vec<u8> {
        self.encoder.info_cols.iter().map(|&p| codeword[p as usize]).collect()
    }

    /// Coordinate text format; see `docs/formats.md`.
    pub fn to_text(&self) -> String {
        let nnz: usize = self.rows.iter().map(Vec::len).sum();
        let mut s = format!("ldpc {} {} {}\nmax_iterations {}\n", self.n, self.m(), nnz, self.max_iterations);
        if self.check_scale != 1.0 {
            writeln!(s, "check_scale {}", self.check_scale).expect("writing to a string");
        }
        for (r, row) in self.rows.iter().enumerate() {
            for &c in row {
                writeln!(s, "{r} {c}").expect("writing to a string");
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let bad = |line: usize, msg: &str| Error::Format(format!("line {line}: {msg}"));
        let (ln, header) = lines.next().ok_or_else(|| Error::Format("empty code file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "ldpc" {
            return Err(bad(ln, "expected `ldpc <n> <m> <nnz>`"));
        }
        let num = |s: &str, line: usize| s.parse::<usize>().map_err(|_| bad(line, &format!("bad integer `{s}`")));
        let (n, m, nnz) = (num(h[1], ln)?, num(h[2], ln)?, num(h[3], ln)?);
        let mut max_iterations = DEFAULT_MAX_ITERATIONS;
        let mut check_scale = 1.0;
        let mut edges = Vec::with_capacity(nnz);
        for (ln, l) in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            match f.as_slice() {
                ["max_iterations", k] if edges.is_empty() => max_iterations = num(k, ln)?,
                ["check_scale", v] if edges.is_empty() => {
                    check_scale = v.parse::<f64>().map_err(|_| bad(ln, &format!("bad number `{v}`")))?
                }
                [r, c] => {
                    let (r, c) = (num(r, ln)?, num(c, ln)?);
                    if r >= m || c >= n {
                        return Err(bad(ln, &format!("entry ({r}, {c}) outside {m}x{n}")));
                    }
                    edges.push((r as u32, c as u32));
                }
                _ => return Err(bad(ln, "expected `<row> <col>`")),
            }
        }
        if edges.len() != nnz {
            return Err(Error::Format(format!("header promises {nnz} entries, found {}", edges.len())));
        }
        CodeSpec::from_edges(n, m, &edges, max_iterations)?
            .with_check_scale(check_scale)
            .map_err(|e| Error::Format(e.to_string()))
    }
}

fn intersect_count(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Column-regular code with every check of weight `row_weight`.
/// Requires `n * col_weight` to be a multiple of `row_weight`.
pub fn build_regular_code(n: usize, col_weight: usize, row_weight: usize, seed: u64) -> Result<CodeSpec> {
    if row_weight == 0 || !(n * col_weight).is_multiple_of(row_weight) {
        return Err(Error::Construction(format!(
            "n * col_weight = {} is not a multiple of row_weight {row_weight}",
            n * col_weight
        )));
    }
    build_code(n, col_weight, row_weight, seed)
}

/// Column-regular code with `ceil(n * col_weight / row_weight)` checks whose
/// weights differ by at most one, the largest being `row_weight`.
pub fn build_code(n: usize, col_weight: usize, row_weight: usize, seed: u64) -> Result<CodeSpec> {
    if col_weight < 2 {
        return Err(Error::Construction(format!("column weight {col_weight} < 2")));
    }
    if row_weight < 2 {
        return Err(Error::Construction(format!("row weight {row_weight} < 2")));
    }
    let edges_total = n * col_weight;
    let m = edges_total.div_ceil(row_weight);
    if m < col_weight || m >= n {
        return Err(Error::Construction(format!("({col_weight}, {row_weight}) degrees infeasible for n = {n}")));
    }
    // Spread the shortfall so that row weights differ by at most one.
    let base = edges_total / m;
    let extra = edges_total % m;
    let capacity: Vec<usize> = (0..m).map(|r| base + usize::from(r < extra)).collect();

    // Keep drawing until a graph has no 4-cycles; otherwise return the one
    // with the fewest.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, CodeSpec)> = None;
    for _attempt in 0..50 {
        if let Some(edges) = try_build(n, col_weight, &capacity, &mut rng) {
            let code = CodeSpec::from_edges(n, m, &edges, DEFAULT_MAX_ITERATIONS)?;
            let cycles = code.four_cycles();
            if cycles == 0 {
                return Ok(code);
            }
            if best.as_ref().is_none_or(|b| cycles < b.0) {
                best = Some((cycles, code));
            }
        }
    }
    best.map(|b| b.1)
        .ok_or_else(|| Error::Construction(format!("could not place a ({col_weight}, {row_weight}) graph for n = {n}")))
}

/// Greedy edge placement column by column, preferring the emptiest checks
/// and avoiding 4-cycles whenever some admissible check allows it.
fn try_build(n: usize, col_weight: usize, capacity: &[usize], rng: &mut ChaCha8Rng) -> Option<Vec<(u32, u32)>> {
    let m = capacity.len();
    let mut left = capacity.to_vec();
    let mut check_vars: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut var_checks: Vec<Vec<u32>> = vec![Vec::new(); n];
    // `mark[c] == stamp`: choosing c for the current column closes a 4-cycle.
    let mut mark = vec![usize::MAX; m];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut cands: Vec<usize> = Vec::with_capacity(m);
    let mut chosen: Vec<usize> = Vec::with_capacity(col_weight);
    for (stamp, &v) in order.iter().enumerate() {
        chosen.clear();
        for _ in 0..col_weight {
            let best_left = (0..m).filter(|c| !chosen.contains(c)).map(|c| left[c]).max()?;
            if best_left == 0 {
                return None;
            }
            // Only the two fullest capacity levels keep the fill balanced.
            let admissible = |c: usize| left[c] > 0 && left[c] + 1 >= best_left && !chosen.contains(&c);
            cands.clear();
            cands.extend((0..m).filter(|&c| admissible(c) && mark[c] != stamp));
            if cands.is_empty() {
                cands.extend((0..m).filter(|&c| admissible(c)));
            }
            let top = cands.iter().map(|&c| left[c]).max()?;
            cands.retain(|&c| left[c] == top);
            let c = cands[rng.random_range(0..cands.len())];
            chosen.push(c);
            for &u in &check_vars[c] {
                for &c2 in &var_checks[u as usize] {
                    mark[c2 as usize] = stamp;
                }
            }
        }
        for &c in &chosen {
            left[c] -= 1;
            check_vars[c].push(v as u32);
            var_checks[v].push(c as u32);
        }
    }
    let mut edges = Vec::with_capacity(n * col_weight);
    for (v, cs) in var_checks.iter().enumerate() {
        edges.extend(cs.iter().map(|&c| (c, v as u32)));
    }
    Some(edges)
}

/// Result of one decoding attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeOutcome {
    pub bits: Vec<u8>,
    /// All parity checks satisfied.
    pub converged: bool,
    /// Message-passing iterations run (0 when the channel decisions already
    /// form a codeword).
    pub iterations: usize,
}

/// Flooding min-sum, normalized by the code's check scale (none by default).
pub fn min_sum_decode(code: &CodeSpec, llr: &[f64]) -> Result<DecodeOutcome> {
    if llr.len() != code.n {
        return Err(Error::Precondition(format!("{} LLRs for a length-{} code", llr.len(), code.n)));
    }
    if let Some(i) = llr.iter().position(|v| v.is_nan()) {
        return Err(Error::Domain { what: "channel LLR", value: llr[i] });
    }
    let hard = |v: f64| u8::from(v < 0.0);
    let mut bits: Vec<u8> = llr.iter().map(|&v| hard(v)).collect();
    if code.is_codeword(&bits) {
        return Ok(DecodeOutcome { bits, converged: true, iterations: 0 });
    }

    // Edges in check-major order; `var_edges[v]` lists the edges of variable v.
    let mut edge_var = Vec::new();
    let mut row_start = Vec::with_capacity(code.m() + 1);
    for row in &code.rows {
        row_start.push(edge_var.len());
        edge_var.extend(row.iter().map(|&c| c as usize));
    }
    row_start.push(edge_var.len());
    let mut var_edges: Vec<Vec<usize>> = vec![Vec::new(); code.n];
    for (e, &v) in edge_var.iter().enumerate() {
        var_edges[v].push(e);
    }

    let mut c2v = vec![0.0f64; edge_var.len()];
    let mut v2c = vec![0.0f64; edge_var.len()];
    let mut total = llr.to_vec();
    let scale = code.check_scale;
    for iter in 1..=code.max_iterations {
        for (v, edges) in var_edges.iter().enumerate() {
            for &e in edges {
                v2c[e] = total[v] - c2v[e];
            }
        }
        for r in 0..code.m() {
            let (s, t) = (row_start[r], row_start[r + 1]);
            let mut negative = false;
            let (mut min1, mut min2, mut arg) = (f64::INFINITY, f64::INFINITY, s);
            for (e, &x) in v2c.iter().enumerate().take(t).skip(s) {
                negative ^= x < 0.0;
                let a = x.abs();
                if a < min1 {
                    min2 = min1;
                    min1 = a;
                    arg = e;
                } else if a < min2 {
                    min2 = a;
                }
            }
            for e in s..t {
                let mag = scale * if e == arg { min2 } else { min1 };
                let flip = negative ^ (v2c[e] < 0.0);
                c2v[e] = if flip { -mag } else { mag };
            }
        }
        for (v, edges) in var_edges.iter().enumerate() {
            total[v] = llr[v] + edges.iter().map(|&e| c2v[e]).sum::<f64>();
            // Equal-magnitude inputs cancel exactly quite often; keep the channel decision then.
            bits[v] = if total[v] == 0.0 { hard(llr[v]) } else { hard(total[v]) };
        }
        if code.is_codeword(&bits) {
            return Ok(DecodeOutcome { bits, converged: true, iterations: iter });
        }
    }
    Ok(DecodeOutcome { bits, converged: false, iterations: code.max_iterations })
}

/// Draws a uniformly random message.
pub fn random_message<R: Rng + ?Sized>(code: &CodeSpec, rng: &mut R) -> Vec<u8> {
    (0..code.k()).map(|_| rng.random_range(0..2u8)).collect()
}
