//! Pipe-table encoding for table grids.
//!
//! Cells are written as `| cell |` with exactly one space of padding on each
//! side. Inside a cell `\` is written `\\`, `|` is written `\|`, and line
//! breaks become `\n` / `\r`, so every row stays on one line and the reader
//! can recover the grid exactly.

use thiserror::Error;

use crate::doc_model::Table;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("table {0} has an empty grid")]
    Empty(u32),
    #[error("table {0} is not rectangular")]
    Ragged(u32),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

pub fn escape_cell(cell: &str) -> String {
    let mut out = String::with_capacity(cell.len());
    for c in cell.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '|' => out.push_str("\\|"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out
}

fn row_line(cells: &[String]) -> String {
    let mut line = String::from("|");
    for c in cells {
        line.push(' ');
        line.push_str(&escape_cell(c));
        line.push_str(" |");
    }
    line
}

/// Renders a rectangular grid: header row, `---` separator, data rows.
pub fn table_to_markdown(table: &Table) -> Result<String, TableError> {
    if table.grid.is_empty() || table.grid[0].is_empty() {
        return Err(TableError::Empty(table.index));
    }
    if !table.is_rectangular() {
        return Err(TableError::Ragged(table.index));
    }
    let width = table.grid[0].len();
    let mut lines = Vec::with_capacity(table.grid.len() + 1);
    lines.push(row_line(&table.grid[0]));
    lines.push(format!("|{}", " --- |".repeat(width)));
    lines.extend(table.grid[1..].iter().map(|r| row_line(r)));
    Ok(lines.join("\n"))
}

fn split_row(line: &str, lineno: usize) -> Result<Vec<String>, TableError> {
    let syntax = |message: &str| TableError::Syntax {
        line: lineno,
        message: message.to_string(),
    };
    let body = line
        .strip_prefix('|')
        .ok_or_else(|| syntax("row must start with '|'"))?;
    let mut cells = Vec::new();
    let mut raw = String::new();
    let mut chars = body.chars();
    let mut closed = false;
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some('\\') => raw.push('\\'),
                Some('|') => raw.push('|'),
                Some('n') => raw.push('\n'),
                Some('r') => raw.push('\r'),
                Some(other) => {
                    raw.push('\\');
                    raw.push(other);
                }
                None => return Err(syntax("dangling escape")),
            },
            '|' => {
                let cell = raw
                    .strip_prefix(' ')
                    .and_then(|c| c.strip_suffix(' '))
                    .ok_or_else(|| syntax("cell must be padded by one space on each side"))?;
                cells.push(cell.to_string());
                raw.clear();
                closed = true;
                continue;
            }
            _ => raw.push(c),
        }
        closed = false;
    }
    if !closed || !raw.is_empty() {
        return Err(syntax("row must end with '|'"));
    }
    Ok(cells)
}

/// Parses the output of [`table_to_markdown`] back into a grid.
pub fn read_markdown_table(md: &str) -> Result<Vec<Vec<String>>, TableError> {
    let lines: Vec<&str> = md.split('\n').collect();
    if lines.len() < 2 {
        return Err(TableError::Syntax {
            line: 1,
            message: "missing separator row".into(),
        });
    }
    let header = split_row(lines[0], 1)?;
    let sep = split_row(lines[1], 2)?;
    if sep.len() != header.len() || sep.iter().any(|c| c.is_empty() || !c.chars().all(|ch| ch == '-' || ch == ':')) {
        return Err(TableError::Syntax {
            line: 2,
            message: "invalid separator row".into(),
        });
    }
    let mut grid = vec![header];
    for (i, line) in lines[2..].iter().enumerate() {
        let row = split_row(line, i + 3)?;
        if row.len() != grid[0].len() {
            return Err(TableError::Syntax {
                line: i + 3,
                message: "column count differs from header".into(),
            });
        }
        grid.push(row);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(grid: Vec<Vec<&str>>) -> Table {
        Table {
            index: 1,
            caption: String::new(),
            grid: grid.into_iter().map(|r| r.into_iter().map(String::from).collect()).collect(),
            empty: false,
        }
    }

    #[test]
    fn two_by_two() {
        let md = table_to_markdown(&table(vec![vec!["A", "B"], vec!["1", "2"]])).unwrap();
        assert_eq!(md, "| A | B |\n| --- | --- |\n| 1 | 2 |");
    }

    #[test]
    fn one_by_one() {
        assert_eq!(table_to_markdown(&table(vec![vec!["x"]])).unwrap(), "| x |\n| --- |");
    }

    #[test]
    fn pipe_is_escaped_and_recovered() {
        let t = table(vec![vec!["a|b"]]);
        let md = table_to_markdown(&t).unwrap();
        assert_eq!(md, "| a\\|b |\n| --- |");
        assert_eq!(read_markdown_table(&md).unwrap(), t.grid);
    }

    #[test]
    fn empty_grid_rejected() {
        assert_eq!(table_to_markdown(&table(vec![])), Err(TableError::Empty(1)));
        assert_eq!(
            table_to_markdown(&table(vec![vec!["a"], vec!["b", "c"]])),
            Err(TableError::Ragged(1))
        );
    }

    proptest! {
        #[test]
        fn round_trip(grid in (1usize..=20, 1usize..=20).prop_flat_map(|(r, c)| {
            proptest::collection::vec(
                proptest::collection::vec("[a-z |\\\\\n\r\t-]{0,6}", c..=c), r..=r)
        })) {
            let t = Table { index: 1, caption: String::new(), grid: grid.clone(), empty: false };
            let md = table_to_markdown(&t).unwrap();
            prop_assert_eq!(read_markdown_table(&md).unwrap(), grid);
        }
    }
}
