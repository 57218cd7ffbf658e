//! Exact rational scalars and dense exact linear algebra.
//!
//! Everything geometric in this crate runs on [`Rational`] values. The only
//! floating-point escape hatch is the explicit `to_f64` family used by the
//! ellipsoid solver.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Arbitrary-precision rational, always in lowest terms with positive
/// denominator (guaranteed by `num_rational`).
pub type Rational = num_rational::BigRational;

/// Column vector of exact rationals.
pub type Vector = Vec<Rational>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinAlgError {
    #[error("singular matrix (rank deficient)")]
    SingularMatrix,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid rational literal {0:?}")]
pub struct ParseRationalError(pub String);

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `"p/q"` or `"p"` (the on-disk form used by every file format).
pub fn parse_rational(s: &str) -> Result<Rational, ParseRationalError> {
    let s = s.trim();
    let err = || ParseRationalError(s.to_string());
    match s.split_once('/') {
        None => {
            let n: BigInt = s.parse().map_err(|_| err())?;
            Ok(Rational::from_integer(n))
        }
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().map_err(|_| err())?;
            let q: BigInt = q.trim().parse().map_err(|_| err())?;
            if q.is_zero() {
                return Err(err());
            }
            Ok(Rational::new(p, q))
        }
    }
}

/// Formats as `"p/q"`, or `"p"` when the denominator is one.
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn ceil_log2(n: &BigUint) -> u64 {
    if n <= &BigUint::one() {
        0
    } else {
        (n - 1u32).bits()
    }
}

/// Number of bits needed to write `r = p/q` in lowest terms:
/// `ceil(log2 |p|) + ceil(log2 q)`, with `bit_size(0) = 1`.
pub fn bit_size(r: &Rational) -> u64 {
    if r.is_zero() {
        return 1;
    }
    ceil_log2(r.numer().abs().magnitude()) + ceil_log2(r.denom().magnitude())
}

/// Dense row-major matrix of exact rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![Rational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Rational::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vector>) -> Result<Self, LinAlgError> {
        let nr = rows.len();
        let nc = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nc) {
            return Err(LinAlgError::DimensionMismatch(
                "ragged rows in matrix construction".into(),
            ));
        }
        Ok(Matrix {
            rows: nr,
            cols: nc,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn mul_vec(&self, v: &[Rational]) -> Result<Vector, LinAlgError> {
        if v.len() != self.cols {
            return Err(LinAlgError::DimensionMismatch(format!(
                "matrix is {}x{}, vector has length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| &self[(i, j)] * &v[j])
                    .fold(Rational::zero(), |a, b| a + b)
            })
            .collect())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| rational_to_f64(&self[(i, j)])).collect())
            .collect()
    }

    /// Augmented integer form: each row of `[self | rhs]` scaled by the lcm of
    /// its denominators. Feeds the fraction-free elimination below.
    fn to_integer_augmented(&self, rhs: Option<&[Rational]>) -> Vec<Vec<BigInt>> {
        let extra = usize::from(rhs.is_some());
        (0..self.rows)
            .map(|i| {
                let mut row: Vec<Rational> = (0..self.cols).map(|j| self[(i, j)].clone()).collect();
                if let Some(b) = rhs {
                    row.push(b[i].clone());
                }
                let lcm = row
                    .iter()
                    .fold(BigInt::one(), |acc, r| acc.lcm(r.denom()));
                let mut out = Vec::with_capacity(self.cols + extra);
                for r in &row {
                    out.push(r.numer() * (&lcm / r.denom()));
                }
                out
            })
            .collect()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = Rational;
    fn index(&self, (i, j): (usize, usize)) -> &Rational {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Rational {
        &mut self.data[i * self.cols + j]
    }
}

/// Bareiss fraction-free elimination on an integer matrix.
///
/// Reduces `m` to row echelon form in place and returns the number of pivots.
/// Intermediate entries stay bounded by minors of the input, which keeps
/// repeated solves affordable during tree enumeration.
fn bareiss_echelon(m: &mut [Vec<BigInt>], cols: usize) -> usize {
    let rows = m.len();
    let mut prev = BigInt::one();
    let mut pivot_row = 0;
    for col in 0..cols {
        if pivot_row == rows {
            break;
        }
        let Some(swap) = (pivot_row..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(pivot_row, swap);
        for r in pivot_row + 1..rows {
            for c in col + 1..m[r].len() {
                let num = &m[pivot_row][col] * &m[r][c] - &m[r][col] * &m[pivot_row][c];
                debug_assert!((&num % &prev).is_zero(), "Bareiss division not exact");
                m[r][c] = num / &prev;
            }
            m[r][col] = BigInt::zero();
        }
        prev = m[pivot_row][col].clone();
        pivot_row += 1;
    }
    pivot_row
}

/// Solves `a x = b` exactly. Fraction-free forward elimination, rational
/// back substitution.
pub fn solve_linear(a: &Matrix, b: &[Rational]) -> Result<Vector, LinAlgError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinAlgError::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if b.len() != n {
        return Err(LinAlgError::DimensionMismatch(format!(
            "rhs length {} does not match matrix order {n}",
            b.len()
        )));
    }
    let mut aug = a.to_integer_augmented(Some(b));
    let pivots = bareiss_echelon(&mut aug, n);
    if pivots < n {
        return Err(LinAlgError::SingularMatrix);
    }
    let mut x = vec![Rational::zero(); n];
    for i in (0..n).rev() {
        let mut acc = Rational::from_integer(aug[i][n].clone());
        for j in i + 1..n {
            acc -= Rational::from_integer(aug[i][j].clone()) * &x[j];
        }
        x[i] = acc / Rational::from_integer(aug[i][i].clone());
    }
    Ok(x)
}

/// Exact rank over the rationals.
pub fn rank(a: &Matrix) -> usize {
    if a.rows() == 0 || a.cols() == 0 {
        return 0;
    }
    let mut m = a.to_integer_augmented(None);
    bareiss_echelon(&mut m, a.cols())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round() {
        assert_eq!(parse_rational("3/4").unwrap(), rat(3, 4));
        assert_eq!(parse_rational("-6/8").unwrap(), rat(-3, 4));
        assert_eq!(parse_rational("5").unwrap(), rat_int(5));
        assert_eq!(format_rational(&rat(1, 2)), "1/2");
        assert_eq!(format_rational(&rat(4, 2)), "2");
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn bit_size_examples() {
        assert_eq!(bit_size(&rat(3, 8)), 5);
        assert_eq!(bit_size(&rat(1, 1)), 0);
        // by-hand oracle: ceil(log2 7) = 3, ceil(log2 12) = 4
        assert_eq!(bit_size(&rat(7, 12)), 7);
        assert_eq!(bit_size(&Rational::zero()), 1);
        assert_eq!(bit_size(&rat(-3, 8)), 5);
    }

    #[test]
    fn solve_identity() {
        let a = Matrix::identity(3);
        let b = vec![rat_int(1), rat_int(2), rat_int(3)];
        assert_eq!(solve_linear(&a, &b).unwrap(), b);
    }

    #[test]
    fn solve_diagonal() {
        let a = Matrix::from_rows(vec![
            vec![rat_int(2), rat_int(0)],
            vec![rat_int(0), rat_int(4)],
        ])
        .unwrap();
        let b = vec![rat_int(1), rat_int(1)];
        assert_eq!(solve_linear(&a, &b).unwrap(), vec![rat(1, 2), rat(1, 4)]);
    }

    #[test]
    fn solve_reproduces_constructed_rhs() {
        // random-ish 5x5 with a chosen x, b = a*x, solve must return x exactly
        let entries: [[i64; 5]; 5] = [
            [3, -1, 2, 7, 1],
            [0, 5, -3, 2, 2],
            [1, 1, 1, 1, 1],
            [-2, 4, 0, 3, -5],
            [6, 0, -1, 2, 2],
        ];
        let a = Matrix::from_rows(
            entries
                .iter()
                .map(|r| r.iter().map(|&v| rat(v, 3)).collect())
                .collect(),
        )
        .unwrap();
        let x: Vector = vec![rat(1, 2), rat(-3, 7), rat_int(4), rat(5, 11), rat(0, 1)];
        let b = a.mul_vec(&x).unwrap();
        assert_eq!(solve_linear(&a, &b).unwrap(), x);
    }

    #[test]
    fn singular_detected() {
        let a = Matrix::from_rows(vec![
            vec![rat_int(1), rat_int(2)],
            vec![rat_int(2), rat_int(4)],
        ])
        .unwrap();
        assert_eq!(
            solve_linear(&a, &[rat_int(1), rat_int(1)]).unwrap_err(),
            LinAlgError::SingularMatrix
        );
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&Matrix::zeros(2, 2)), 0);
        assert_eq!(rank(&Matrix::identity(4)), 4);
        let a = Matrix::from_rows(vec![
            vec![rat_int(1), rat_int(2)],
            vec![rat_int(2), rat_int(4)],
        ])
        .unwrap();
        assert_eq!(rank(&a), 1);
    }
}
