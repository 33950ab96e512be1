//! Rectangular minimum-cost assignment with forbidden pairs.
//!
//! The solver is the Jonker-Volgenant shortest augmenting path method
//! (column reduction, augmenting row reduction, then Dijkstra-style
//! augmentation). Forbidden pairs never enter a reported match: internally
//! every cell carries a lexicographic cost `(penalty, cost)` where forbidden
//! cells are `(1, 0)`, so minimizing the pair both maximizes the number of
//! allowed matches and then minimizes their total cost. No sentinel value is
//! ever compared against a real cost.

use std::fmt::Debug;
use std::ops::{Add, Sub};

use num_rational::Ratio;
use num_traits::Zero;

use crate::error::{invalid, Result};

/// Cost scalar accepted by [`solve_assignment`].
///
/// Any totally ordered additive group works; implementations are provided
/// for `f32`, `f64`, `i32`, `i64` and `Ratio<i32|i64|i128>`.
pub trait AssignCost:
    Copy + PartialOrd + Add<Output = Self> + Sub<Output = Self> + Zero + Debug
{
    /// Finite and non-negative.
    fn is_admissible(&self) -> bool;

    /// Whether a reduced cost is zero up to the type's arithmetic error,
    /// relative to `scale` (the largest absolute entry of the problem).
    fn is_negligible(self, scale: Self) -> bool;
}

macro_rules! float_cost {
    ($($t:ty),*) => {$(
        impl AssignCost for $t {
            fn is_admissible(&self) -> bool {
                self.is_finite() && *self >= 0.0
            }
            fn is_negligible(self, scale: Self) -> bool {
                self.abs() <= scale * (1e4 * <$t>::EPSILON)
            }
        }
    )*};
}
float_cost!(f32, f64);

macro_rules! exact_cost {
    ($($t:ty),*) => {$(
        impl AssignCost for $t {
            fn is_admissible(&self) -> bool {
                *self >= <$t>::zero()
            }
            fn is_negligible(self, _scale: Self) -> bool {
                self.is_zero()
            }
        }
    )*};
}
exact_cost!(i32, i64, Ratio<i32>, Ratio<i64>, Ratio<i128>);

/// Dense `rows × cols` costs plus a mask of pairs that may never match.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<C> {
    rows: usize,
    cols: usize,
    cost: Vec<C>,
    forbidden: Vec<bool>,
}

impl<C: AssignCost> CostMatrix<C> {
    /// Row-major costs with every pair allowed.
    pub fn new(rows: usize, cols: usize, cost: Vec<C>) -> Result<Self> {
        if cost.len() != rows * cols {
            return Err(invalid(format!(
                "cost vector has {} entries, expected {rows}x{cols}",
                cost.len()
            )));
        }
        if let Some(bad) = cost.iter().position(|c| !c.is_admissible()) {
            return Err(invalid(format!(
                "cost at ({}, {}) must be finite and non-negative, got {:?}",
                bad / cols,
                bad % cols,
                cost[bad]
            )));
        }
        Ok(Self {
            rows,
            cols,
            forbidden: vec![false; cost.len()],
            cost,
        })
    }

    /// Builds from a closure; `None` marks the pair forbidden.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Option<C>) -> Result<Self> {
        let mut cost = Vec::with_capacity(rows * cols);
        let mut forbidden = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                match f(i, j) {
                    Some(c) if c.is_admissible() => {
                        cost.push(c);
                        forbidden.push(false);
                    }
                    Some(c) => {
                        return Err(invalid(format!(
                            "cost at ({i}, {j}) must be finite and non-negative, got {c:?}"
                        )))
                    }
                    None => {
                        cost.push(C::zero());
                        forbidden.push(true);
                    }
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            cost,
            forbidden,
        })
    }

    pub fn forbid(&mut self, row: usize, col: usize) {
        self.forbidden[row * self.cols + col] = true;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Cost of an allowed pair, `None` when forbidden.
    pub fn get(&self, row: usize, col: usize) -> Option<C> {
        let k = row * self.cols + col;
        (!self.forbidden[k]).then(|| self.cost[k])
    }

    pub fn is_forbidden(&self, row: usize, col: usize) -> bool {
        self.forbidden[row * self.cols + col]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult<C> {
    /// `(row, col)` pairs sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
    pub total_cost: C,
}

impl<C: AssignCost> AssignmentResult<C> {
    /// Column matched to `row`, if any.
    pub fn col_of(&self, row: usize) -> Option<usize> {
        self.matches.iter().find(|m| m.0 == row).map(|m| m.1)
    }
}

/// Lexicographic `(penalty, cost)` pair used internally.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Lex<C> {
    penalty: i64,
    cost: C,
}

impl<C: AssignCost> Add for Lex<C> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Lex {
            penalty: self.penalty + o.penalty,
            cost: self.cost + o.cost,
        }
    }
}

impl<C: AssignCost> Sub for Lex<C> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Lex {
            penalty: self.penalty - o.penalty,
            cost: self.cost - o.cost,
        }
    }
}

impl<C: AssignCost> Zero for Lex<C> {
    fn zero() -> Self {
        Lex {
            penalty: 0,
            cost: C::zero(),
        }
    }
    fn is_zero(&self) -> bool {
        self.penalty == 0 && self.cost.is_zero()
    }
}

/// Solves the rectangular assignment problem.
///
/// Among matchings that use only allowed pairs and have the largest possible
/// cardinality, returns one of minimum total cost. Ties are broken towards
/// the lexicographically smallest `(row, col)` sequence.
pub fn solve_assignment<C: AssignCost>(m: &CostMatrix<C>) -> AssignmentResult<C> {
    let (rows, cols) = (m.rows, m.cols);
    let n = rows.max(cols);
    if rows == 0 || cols == 0 {
        return AssignmentResult {
            matches: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
            total_cost: C::zero(),
        };
    }

    // Square padding: dummy cells are free, forbidden cells cost one penalty.
    let mut dense = Vec::with_capacity(n * n);
    let mut scale = C::zero();
    for i in 0..n {
        for j in 0..n {
            let cell = if i < rows && j < cols {
                match m.get(i, j) {
                    Some(c) => {
                        if c > scale {
                            scale = c;
                        }
                        Lex { penalty: 0, cost: c }
                    }
                    None => Lex {
                        penalty: 1,
                        cost: C::zero(),
                    },
                }
            } else {
                Lex::zero()
            };
            dense.push(cell);
        }
    }

    let mut sol = Jv::new(&dense, n).solve();
    refine_lexicographic(&dense, n, rows, cols, scale, &mut sol);

    let mut matches = Vec::new();
    let mut col_used = vec![false; cols];
    let mut total = C::zero();
    let mut unmatched_rows = Vec::new();
    for i in 0..rows {
        let j = sol.row_to_col[i];
        match (j < cols).then(|| m.get(i, j)).flatten() {
            Some(c) => {
                matches.push((i, j));
                col_used[j] = true;
                total = total + c;
            }
            None => unmatched_rows.push(i),
        }
    }
    let unmatched_cols = (0..cols).filter(|&j| !col_used[j]).collect();
    AssignmentResult {
        matches,
        unmatched_rows,
        unmatched_cols,
        total_cost: total,
    }
}

struct Solution<C> {
    row_to_col: Vec<usize>,
    col_to_row: Vec<usize>,
    v: Vec<Lex<C>>,
}

const NONE: usize = usize::MAX;

struct Jv<'a, C> {
    c: &'a [Lex<C>],
    n: usize,
    x: Vec<usize>,
    y: Vec<usize>,
    v: Vec<Lex<C>>,
    free: Vec<usize>,
}

impl<'a, C: AssignCost> Jv<'a, C> {
    fn new(c: &'a [Lex<C>], n: usize) -> Self {
        Self {
            c,
            n,
            x: vec![NONE; n],
            y: vec![NONE; n],
            v: vec![Lex::zero(); n],
            free: Vec::with_capacity(n),
        }
    }

    #[inline]
    fn cost(&self, i: usize, j: usize) -> Lex<C> {
        self.c[i * self.n + j]
    }

    fn solve(mut self) -> Solution<C> {
        self.column_reduction();
        for _ in 0..2 {
            if self.free.is_empty() {
                break;
            }
            self.augmenting_row_reduction();
        }
        let free = std::mem::take(&mut self.free);
        for f in free {
            self.augment(f);
        }
        Solution {
            row_to_col: self.x,
            col_to_row: self.y,
            v: self.v,
        }
    }

    fn column_reduction(&mut self) {
        let n = self.n;
        let mut matches = vec![0usize; n];
        // Column minima in one row-major sweep; the first minimal row wins.
        let mut col_min: Vec<Lex<C>> = self.c[..n].to_vec();
        let mut col_arg = vec![0usize; n];
        for i in 1..n {
            let row = &self.c[i * n..(i + 1) * n];
            for j in 0..n {
                if row[j] < col_min[j] {
                    col_min[j] = row[j];
                    col_arg[j] = i;
                }
            }
        }
        for j in (0..n).rev() {
            let (min, imin) = (col_min[j], col_arg[j]);
            self.v[j] = min;
            matches[imin] += 1;
            if matches[imin] == 1 {
                self.x[imin] = j;
                self.y[j] = imin;
            } else if self.v[j] < self.v[self.x[imin]] {
                let j1 = self.x[imin];
                self.x[imin] = j;
                self.y[j] = imin;
                self.y[j1] = NONE;
            } else {
                self.y[j] = NONE;
            }
        }
        // Reduction transfer from uniquely assigned rows.
        for i in 0..n {
            if matches[i] == 0 {
                self.free.push(i);
            } else if matches[i] == 1 && n > 1 {
                let j1 = self.x[i];
                let mut min: Option<Lex<C>> = None;
                for j in (0..n).filter(|&j| j != j1) {
                    let h = self.cost(i, j) - self.v[j];
                    if min.is_none_or(|m| h < m) {
                        min = Some(h);
                    }
                }
                let min = min.expect("n > 1");
                self.v[j1] = self.v[j1] - min;
            }
        }
        // Rows displaced in the tie case above are free too.
        for i in 0..n {
            if matches[i] > 0 && self.y[self.x[i]] != i {
                self.x[i] = NONE;
                self.free.push(i);
            }
        }
    }

    fn augmenting_row_reduction(&mut self) {
        let n = self.n;
        let pending = std::mem::take(&mut self.free);
        let mut queue: std::collections::VecDeque<usize> = pending.into();
        let mut next_free = Vec::new();
        // A pass handles at most n rows. Re-queued rows can otherwise chase
        // each other through tiny price changes; leftovers go to augmentation.
        let mut budget = n;
        while let Some(i) = queue.pop_front() {
            if budget == 0 {
                next_free.push(i);
                next_free.extend(queue.drain(..));
                break;
            }
            budget -= 1;

            let mut umin = self.cost(i, 0) - self.v[0];
            let mut j1 = 0;
            let mut usub: Option<Lex<C>> = None;
            let mut j2 = NONE;
            for j in 1..n {
                let h = self.cost(i, j) - self.v[j];
                if usub.is_none_or(|s| h < s) {
                    if h >= umin {
                        usub = Some(h);
                        j2 = j;
                    } else {
                        usub = Some(umin);
                        umin = h;
                        j2 = j1;
                        j1 = j;
                    }
                }
            }
            let mut i0 = self.y[j1];
            let strict = usub.is_none_or(|s| umin < s);
            if strict {
                if let Some(s) = usub {
                    self.v[j1] = self.v[j1] - (s - umin);
                }
            } else if i0 != NONE {
                j1 = j2;
                i0 = self.y[j2];
            }
            if let Some(prev) = (self.x[i] != NONE).then_some(self.x[i]) {
                if self.y[prev] == i {
                    self.y[prev] = NONE;
                }
            }
            self.x[i] = j1;
            self.y[j1] = i;
            if i0 != NONE {
                self.x[i0] = NONE;
                if strict {
                    queue.push_front(i0);
                } else {
                    next_free.push(i0);
                }
            }
        }
        self.free = next_free;
    }

    /// Shortest augmenting path from free row `f`.
    fn augment(&mut self, f: usize) {
        let n = self.n;
        let mut d: Vec<Lex<C>> = (0..n).map(|j| self.cost(f, j) - self.v[j]).collect();
        let mut pred = vec![f; n];
        let mut collist: Vec<usize> = (0..n).collect();
        let mut low = 0;
        let mut up = 0;
        let mut ready = 0;
        let mut min = Lex::zero();
        let end = 'search: loop {
            if up == low {
                ready = low;
                min = d[collist[up]];
                up += 1;
                for k in up..n {
                    let j = collist[k];
                    let h = d[j];
                    if h <= min {
                        if h < min {
                            up = low;
                            min = h;
                        }
                        collist[k] = collist[up];
                        collist[up] = j;
                        up += 1;
                    }
                }
                for &j in &collist[low..up] {
                    if self.y[j] == NONE {
                        break 'search j;
                    }
                }
            }
            let j1 = collist[low];
            low += 1;
            let i = self.y[j1];
            let h = self.cost(i, j1) - self.v[j1] - min;
            let mut k = up;
            while k < n {
                let j = collist[k];
                let v2 = self.cost(i, j) - self.v[j] - h;
                if v2 < d[j] {
                    pred[j] = i;
                    if v2 == min {
                        if self.y[j] == NONE {
                            d[j] = v2;
                            break 'search j;
                        }
                        collist[k] = collist[up];
                        collist[up] = j;
                        up += 1;
                    }
                    d[j] = v2;
                }
                k += 1;
            }
        };
        for &j in &collist[..ready] {
            self.v[j] = self.v[j] + d[j] - min;
        }
        let mut j = end;
        loop {
            let i = pred[j];
            self.y[j] = i;
            let prev = self.x[i];
            self.x[i] = j;
            if i == f {
                break;
            }
            j = prev;
        }
    }
}

/// Moves an optimal padded solution to the lexicographically smallest
/// optimal one. Optimal matchings are exactly the perfect matchings of the
/// equality subgraph under optimal duals, so rows are fixed greedily in
/// order, each to the smallest tight column that still admits a perfect
/// matching of the rest. Leaving a row unmatched ranks after every allowed
/// column; such a row is only barred from allowed columns afterwards, not
/// pinned to one particular forbidden or padding column.
fn refine_lexicographic<C: AssignCost>(
    c: &[Lex<C>],
    n: usize,
    rows: usize,
    cols: usize,
    scale: C,
    sol: &mut Solution<C>,
) {
    let scale = Lex {
        penalty: 0,
        cost: scale,
    };
    let v = &sol.v;
    let u: Vec<Lex<C>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| c[i * n + j] - v[j])
                .fold(None, |m: Option<Lex<C>>, h| match m {
                    Some(m) if m <= h => Some(m),
                    _ => Some(h),
                })
                .expect("n > 0")
        })
        .collect();
    let tight = |i: usize, j: usize| -> bool {
        let r = c[i * n + j] - v[j] - u[i];
        r.penalty == 0 && r.cost.is_negligible(scale.cost)
    };
    // Skip refinement if the duals do not certify the current matching.
    if (0..n).any(|i| !tight(i, sol.row_to_col[i])) {
        return;
    }
    let eq: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| tight(i, j)).collect())
        .collect();

    let allowed_cell = |i: usize, j: usize| j < cols && c[i * n + j].penalty == 0;
    let mut fixed_col = vec![false; n];
    // Rows already decided to stay unmatched; they may move between
    // non-allowed columns but never take an allowed one.
    let mut unmatched = vec![false; n];
    // via[row] = (i, j): row i takes column j, which `row` held before.
    let mut via = vec![(NONE, NONE); n];
    let mut seen = vec![false; n];
    for r in 0..rows {
        let mut allowed: Vec<usize> = eq[r]
            .iter()
            .copied()
            .filter(|&j| !fixed_col[j] && allowed_cell(r, j))
            .collect();
        allowed.sort_unstable();
        for target in allowed {
            let current = sol.row_to_col[r];
            if current == target {
                break;
            }
            let holder = sol.col_to_row[target];
            let search = Search {
                eq: &eq,
                fixed_col: &fixed_col,
                unmatched: &unmatched,
                allowed: &allowed_cell,
            };
            if let Some(last) = search.alternating_path(sol, holder, target, current, &mut via, &mut seen) {
                let (mut row, mut col) = (last, current);
                loop {
                    sol.row_to_col[row] = col;
                    sol.col_to_row[col] = row;
                    if row == holder {
                        break;
                    }
                    (row, col) = via[row];
                }
                sol.row_to_col[r] = target;
                sol.col_to_row[target] = r;
                break;
            }
        }
        let j = sol.row_to_col[r];
        if allowed_cell(r, j) {
            fixed_col[j] = true;
        } else {
            unmatched[r] = true;
        }
    }
}

struct Search<'a, F> {
    eq: &'a [Vec<usize>],
    fixed_col: &'a [bool],
    unmatched: &'a [bool],
    allowed: &'a F,
}

impl<F: Fn(usize, usize) -> bool> Search<'_, F> {
    /// Breadth-first search in the equality graph for a re-matching in which
    /// `holder` gives up `target` and some row ends up on `free_col`.
    /// Returns the row that takes `free_col`; predecessors go to `via`.
    fn alternating_path<C>(
        &self,
        sol: &Solution<C>,
        holder: usize,
        target: usize,
        free_col: usize,
        via: &mut [(usize, usize)],
        seen: &mut [bool],
    ) -> Option<usize> {
        seen.iter_mut().for_each(|s| *s = false);
        seen[holder] = true;
        let mut queue = std::collections::VecDeque::from([holder]);
        while let Some(i) = queue.pop_front() {
            for &j in &self.eq[i] {
                if self.fixed_col[j] || j == target || j == sol.row_to_col[i] {
                    continue;
                }
                if self.unmatched[i] && (self.allowed)(i, j) {
                    continue;
                }
                if j == free_col {
                    return Some(i);
                }
                let next = sol.col_to_row[j];
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                via[next] = (i, j);
                queue.push_back(next);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve_f64(rows: usize, cols: usize, c: &[f64]) -> AssignmentResult<f64> {
        solve_assignment(&CostMatrix::new(rows, cols, c.to_vec()).unwrap())
    }

    #[test]
    fn single_cell() {
        let r = solve_f64(1, 1, &[0.2]);
        assert_eq!(r.matches, vec![(0, 0)]);
        assert_eq!(r.total_cost, 0.2);
    }

    #[test]
    fn diagonal_dominance() {
        let r = solve_f64(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(r.matches, vec![(0, 0), (1, 1)]);
        assert_eq!(r.total_cost, 2.0);
    }

    #[test]
    fn empty_dimensions() {
        let r = solve_f64(0, 3, &[]);
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_cols, vec![0, 1, 2]);
        let r = solve_f64(2, 0, &[]);
        assert_eq!(r.unmatched_rows, vec![0, 1]);
    }

    #[test]
    fn all_forbidden_gives_no_matches() {
        let m = CostMatrix::<f64>::from_fn(3, 2, |_, _| None).unwrap();
        let r = solve_assignment(&m);
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_rows, vec![0, 1, 2]);
        assert_eq!(r.unmatched_cols, vec![0, 1]);
        assert_eq!(r.total_cost, 0.0);
    }

    #[test]
    fn cardinality_beats_cost() {
        // Row 0 prefers col 0, but only col 0 is allowed for row 1.
        let m = CostMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => Some(0.0),
            (0, 1) => Some(10.0),
            (1, 0) => Some(5.0),
            _ => None,
        })
        .unwrap();
        let r = solve_assignment(&m);
        assert_eq!(r.matches, vec![(0, 1), (1, 0)]);
        assert_eq!(r.total_cost, 15.0);
    }

    #[test]
    fn forbidden_pair_left_unmatched() {
        let mut m = CostMatrix::new(2, 2, vec![0.1, 0.9, 0.9, 0.1]).unwrap();
        m.forbid(1, 1);
        m.forbid(1, 0);
        let r = solve_assignment(&m);
        assert_eq!(r.matches, vec![(0, 0)]);
        assert_eq!(r.unmatched_rows, vec![1]);
        assert_eq!(r.unmatched_cols, vec![1]);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let r = solve_f64(3, 3, &[0.0; 9]);
        assert_eq!(r.matches, vec![(0, 0), (1, 1), (2, 2)]);
        let r = solve_f64(2, 3, &[1.0; 6]);
        assert_eq!(r.matches, vec![(0, 0), (1, 1)]);
        let r = solve_f64(3, 2, &[1.0; 6]);
        assert_eq!(r.matches, vec![(0, 0), (1, 1)]);
        assert_eq!(r.unmatched_rows, vec![2]);
    }

    #[test]
    fn rejects_negative_and_nan() {
        assert!(CostMatrix::new(1, 2, vec![1.0, -1.0]).is_err());
        assert!(CostMatrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(CostMatrix::new(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn exact_rational_costs() {
        let r = |n: i64, d: i64| Ratio::new(n, d);
        let m = CostMatrix::new(2, 3, vec![r(1, 3), r(1, 2), r(2, 3), r(1, 6), r(1, 3), r(5, 6)]).unwrap();
        let s = solve_assignment(&m);
        // Both diagonals cost exactly 2/3; the tie goes to the smaller sequence.
        assert_eq!(s.total_cost, r(2, 3));
        assert_eq!(s.matches, vec![(0, 0), (1, 1)]);
        let m = CostMatrix::new(2, 2, vec![r(1, 3), r(1, 7), r(1, 6), r(1, 2)]).unwrap();
        let s = solve_assignment(&m);
        assert_eq!(s.total_cost, r(1, 7) + r(1, 6));
        assert_eq!(s.matches, vec![(0, 1), (1, 0)]);
    }
}
