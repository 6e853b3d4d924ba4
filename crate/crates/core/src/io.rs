//! JSON problem files.
//!
//! An LQ problem is `{"n": 2, "m": 1, "A": [[..],[..]], "B": .., "Q": .., "N": .., "R": ..}`
//! with every matrix given row-major as an array of rows; a DAE is
//! `{"A": .., "B": ..}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_dae::LinearDae;
use crate::lq_problem::LqProblem;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    n: usize,
    m: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    #[serde(rename = "N")]
    n_cross: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DaeFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
}

/// Builds a `rows × cols` matrix from nested rows, naming `field` on mismatch.
pub fn matrix_from_rows(field: &str, data: &[Vec<f64>], rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let ragged = data.iter().any(|r| r.len() != cols);
    if data.len() != rows || ragged {
        let found_cols = data.iter().map(Vec::len).find(|&l| l != cols).unwrap_or(cols);
        return Err(Error::Shape {
            field: field.to_owned(),
            rows,
            cols,
            found_rows: data.len(),
            found_cols,
        });
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| data[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse(e.to_string())
}

pub fn parse_problem(text: &str) -> Result<LqProblem> {
    let f: ProblemFile = serde_json::from_str(text).map_err(parse_error)?;
    let (n, m) = (f.n, f.m);
    if n == 0 {
        return Err(Error::EmptyDimension("n"));
    }
    if m == 0 {
        return Err(Error::EmptyDimension("m"));
    }
    LqProblem::new(
        matrix_from_rows("A", &f.a, n, n)?,
        matrix_from_rows("B", &f.b, n, m)?,
        matrix_from_rows("Q", &f.q, n, n)?,
        matrix_from_rows("N", &f.n_cross, n, m)?,
        matrix_from_rows("R", &f.r, m, m)?,
    )
}

pub fn problem_to_json(problem: &LqProblem) -> String {
    let f = ProblemFile {
        n: problem.n(),
        m: problem.m(),
        a: rows_of(problem.a()),
        b: rows_of(problem.b()),
        q: rows_of(problem.q()),
        n_cross: rows_of(problem.n_cross()),
        r: rows_of(problem.r()),
    };
    serde_json::to_string_pretty(&f).expect("plain data serializes")
}

pub fn parse_dae(text: &str) -> Result<LinearDae> {
    let f: DaeFile = serde_json::from_str(text).map_err(parse_error)?;
    let n = f.a.len();
    if n == 0 {
        return Err(Error::EmptyDimension("n"));
    }
    LinearDae::new(matrix_from_rows("A", &f.a, n, n)?, matrix_from_rows("B", &f.b, n, n)?)
}

pub fn dae_to_json(dae: &LinearDae) -> String {
    let f = DaeFile {
        a: rows_of(dae.a()),
        b: rows_of(dae.b()),
    };
    serde_json::to_string_pretty(&f).expect("plain data serializes")
}
