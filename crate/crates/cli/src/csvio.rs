//! CSV input: one observation per row, `p` comma-separated columns, `.`
//! decimal separator. A non-numeric first row is treated as a header.

use std::io::BufRead;

pub struct CsvError {
    pub line: usize,
    pub message: String,
}

pub struct RowReader<R: BufRead> {
    reader: R,
    expected_cols: usize,
    line: usize,
    checked_header: bool,
}

impl<R: BufRead> RowReader<R> {
    pub fn new(reader: R, expected_cols: usize) -> Self {
        Self {
            reader,
            expected_cols,
            line: 0,
            checked_header: false,
        }
    }

    /// Next data row, skipping blank lines and an optional header.
    pub fn next_row(&mut self) -> Result<Option<Vec<f64>>, CsvError> {
        loop {
            let mut buf = String::new();
            let read = self.reader.read_line(&mut buf).map_err(|e| CsvError {
                line: self.line + 1,
                message: e.to_string(),
            })?;
            if read == 0 {
                return Ok(None);
            }
            self.line += 1;
            let trimmed = buf.trim();
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(values) => {
                    self.checked_header = true;
                    if values.len() != self.expected_cols {
                        return Err(CsvError {
                            line: self.line,
                            message: format!(
                                "expected {} columns, found {}",
                                self.expected_cols,
                                values.len()
                            ),
                        });
                    }
                    return Ok(Some(values));
                }
                Err(e) => {
                    if !self.checked_header {
                        // First row with non-numeric fields: header.
                        self.checked_header = true;
                        continue;
                    }
                    return Err(CsvError {
                        line: self.line,
                        message: format!("malformed value: {e}"),
                    });
                }
            }
        }
    }

    pub fn current_line(&self) -> usize {
        self.line
    }
}
