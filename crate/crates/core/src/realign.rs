//! Rebuild a properly aligned table from ragged lines: pick the most complete
//! line as the reference, then match every other line's tokens to reference
//! columns by embedding distance under an order-preserving constraint.

use crate::error::{Error, Result};
use crate::grid::TokenGrid;

/// Per-token embeddings of one document, parallel to the grid lines.
pub type LineEmbeddings = Vec<Vec<Vec<f64>>>;

/// The outcome of aligning a document's table lines.
#[derive(Clone, Debug)]
pub struct AlignmentResult {
    /// Index of the reference line.
    pub reference: usize,
    /// Per table line: the column index assigned to each of its tokens,
    /// strictly increasing.
    pub mappings: Vec<(usize, Vec<usize>)>,
    /// The rendered document with table lines re-laid out in fixed columns.
    pub rendered: String,
    /// Lines that had to be truncated to fit the reference.
    pub warnings: Vec<String>,
}

/// The table line with the most tokens; ties go to the smallest line index.
pub fn select_reference_line(table_lines: &[usize], grid: &TokenGrid) -> Result<usize> {
    let mut best: Option<(usize, usize)> = None; // (line, count)
    for &line in table_lines {
        if line >= grid.num_lines() {
            return Err(Error::Position { line, token: 0 });
        }
        let count = grid.lines()[line].len();
        match best {
            None => best = Some((line, count)),
            Some((bline, bcount)) => {
                if count > bcount || (count == bcount && line < bline) {
                    best = Some((line, count));
                }
            }
        }
    }
    best.map(|(line, _)| line)
        .ok_or_else(|| Error::Argument("no table lines to align".into()))
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Map `m` tokens onto strictly increasing columns of an `n`-token reference
/// line, minimizing the total Euclidean embedding distance. Dynamic program
/// over the m x n distance matrix; ties resolve to the lexicographically
/// smallest mapping. Errors when the line is longer than the reference.
pub fn align_line(line: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<Vec<usize>> {
    let m = line.len();
    let n = reference.len();
    if m > n {
        return Err(Error::Argument(format!(
            "line has {m} tokens but the reference only {n}"
        )));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    // cost[i][j]: minimal total distance assigning tokens i.. to columns j..
    let inf = f64::INFINITY;
    let mut cost = vec![inf; (m + 1) * (n + 1)];
    for j in 0..=n {
        cost[m * (n + 1) + j] = 0.0;
    }
    for i in (0..m).rev() {
        for j in (0..n).rev() {
            if n - j < m - i {
                continue; // not enough columns left
            }
            let assign = euclid(&line[i], &reference[j]) + cost[(i + 1) * (n + 1) + j + 1];
            let skip = cost[i * (n + 1) + j + 1];
            cost[i * (n + 1) + j] = assign.min(skip);
        }
    }
    if !cost[0].is_finite() {
        return Err(Error::NonFinite("alignment cost".into()));
    }
    // Greedy reconstruction; preferring "assign" on ties yields the
    // lexicographically smallest column sequence.
    let mut mapping = Vec::with_capacity(m);
    let (mut i, mut j) = (0usize, 0usize);
    while i < m {
        let assign = euclid(&line[i], &reference[j]) + cost[(i + 1) * (n + 1) + j + 1];
        let skip = cost[i * (n + 1) + j + 1];
        if assign <= skip {
            mapping.push(j);
            i += 1;
        }
        j += 1;
    }
    Ok(mapping)
}

/// Lay the table lines out in `n_columns` fixed-width columns (each sized to
/// its widest assigned token plus one separating space); non-table lines are
/// passed through unchanged in place.
pub fn render_table(
    grid: &TokenGrid,
    n_columns: usize,
    mappings: &[(usize, Vec<usize>)],
) -> String {
    let mut widths = vec![0usize; n_columns];
    for (line, mapping) in mappings {
        for (ti, &col) in mapping.iter().enumerate() {
            let len = grid.lines()[*line][ti].text.chars().count();
            widths[col] = widths[col].max(len);
        }
    }
    let starts: Vec<usize> = widths
        .iter()
        .scan(0usize, |acc, w| {
            let s = *acc;
            *acc += w + 1;
            Some(s)
        })
        .collect();
    let mut by_line: std::collections::HashMap<usize, &Vec<usize>> = std::collections::HashMap::new();
    for (line, mapping) in mappings {
        by_line.insert(*line, mapping);
    }
    let mut out = String::new();
    for li in 0..grid.num_lines() {
        match by_line.get(&li) {
            Some(mapping) => {
                let mut row = String::new();
                for (ti, &col) in mapping.iter().enumerate() {
                    let text = &grid.lines()[li][ti].text;
                    while row.chars().count() < starts[col] {
                        row.push(' ');
                    }
                    row.push_str(text);
                }
                out.push_str(row.trim_end());
            }
            None => out.push_str(grid.raw_lines()[li].trim_end()),
        }
        out.push('\n');
    }
    out
}

/// How [`align_table`] treats lines longer than the reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Overflow {
    /// Propagate the error (the library default).
    Error,
    /// Drop trailing tokens and record a warning.
    Truncate,
}

/// Full alignment of the given table lines against the automatically chosen
/// reference line.
pub fn align_table(
    grid: &TokenGrid,
    table_lines: &[usize],
    embeddings: &LineEmbeddings,
    overflow: Overflow,
) -> Result<AlignmentResult> {
    align_table_against(grid, table_lines, None, embeddings, overflow)
}

/// Alignment with an optional caller-chosen reference line. When the
/// reference is not the longest table line, longer lines hit the `overflow`
/// policy.
pub fn align_table_against(
    grid: &TokenGrid,
    table_lines: &[usize],
    reference: Option<usize>,
    embeddings: &LineEmbeddings,
    overflow: Overflow,
) -> Result<AlignmentResult> {
    let reference = match reference {
        Some(line) => {
            if line >= grid.num_lines() {
                return Err(Error::Position { line, token: 0 });
            }
            line
        }
        None => select_reference_line(table_lines, grid)?,
    };
    let ref_embs = &embeddings[reference];
    let n = ref_embs.len();
    let mut mappings = Vec::with_capacity(table_lines.len());
    let mut warnings = Vec::new();
    for &line in table_lines {
        let mut embs: &[Vec<f64>] = &embeddings[line];
        if embs.len() > n {
            match overflow {
                Overflow::Error => {
                    return Err(Error::Argument(format!(
                        "line {line} has {} tokens but the reference only {n}",
                        embs.len()
                    )))
                }
                Overflow::Truncate => {
                    warnings.push(format!(
                        "line {line}: truncated {} trailing tokens to fit the reference",
                        embs.len() - n
                    ));
                    embs = &embs[..n];
                }
            }
        }
        mappings.push((line, align_line(embs, ref_embs)?));
    }
    let rendered = render_table(grid, n, &mappings);
    Ok(AlignmentResult {
        reference,
        mappings,
        rendered,
        warnings,
    })
}
