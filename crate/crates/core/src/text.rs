//! Line format shared by table and data files: a count tuple followed by a
//! real value, e.g. `0,2 -1.25` or `(0, 2) 0.5`. Blank lines and lines
//! starting with `#` are skipped.

/// Parses one line. Returns `Ok(None)` for blank/comment lines.
pub(crate) fn parse_tuple_line(line: &str) -> Result<Option<(Vec<u32>, f64)>, String> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let cleaned: String = line
        .chars()
        .map(|c| match c {
            '(' | ')' | '[' | ']' | ',' | ';' | '\t' => ' ',
            c => c,
        })
        .collect();
    let mut tokens: Vec<&str> = cleaned.split_whitespace().collect();
    let value_tok = tokens
        .pop()
        .ok_or_else(|| "missing value".to_string())?;
    if tokens.is_empty() {
        return Err("missing count tuple".into());
    }
    let value = parse_extended_real(value_tok)?;
    let counts = tokens
        .iter()
        .map(|t| {
            t.parse::<u32>()
                .map_err(|_| format!("`{t}` is not a non-negative integer count"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Some((counts, value)))
}

fn parse_extended_real(tok: &str) -> Result<f64, String> {
    match tok.to_ascii_lowercase().as_str() {
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        _ => tok
            .parse::<f64>()
            .map_err(|_| format!("`{tok}` is not a real number")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_several_tuple_spellings() {
        assert_eq!(
            parse_tuple_line("0,2 -1.25").unwrap(),
            Some((vec![0, 2], -1.25))
        );
        assert_eq!(
            parse_tuple_line("(0, 2)\t0.5").unwrap(),
            Some((vec![0, 2], 0.5))
        );
        assert_eq!(parse_tuple_line("3 1").unwrap(), Some((vec![3], 1.0)));
        let (_, v) = parse_tuple_line("1 1 -inf").unwrap().unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
    }

    #[test]
    fn skips_comments_and_rejects_garbage() {
        assert_eq!(parse_tuple_line("  # header").unwrap(), None);
        assert_eq!(parse_tuple_line("").unwrap(), None);
        assert!(parse_tuple_line("0.5").is_err());
        assert!(parse_tuple_line("-1 0 2.0").is_err());
        assert!(parse_tuple_line("0 1 abc").is_err());
    }
}
