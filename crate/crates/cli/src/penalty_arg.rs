//! Compact penalty syntax for the command line.
//!
//! | text                 | penalty                                  |
//! |----------------------|------------------------------------------|
//! | `nuclear:2.5`        | `2.5 · Σ σ_i`                            |
//! | `truncated:8:5`      | weight 0 on the top 8 values, 5 after    |
//! | `weighted:0,1,1`     | explicit non-descending weights          |
//! | `schatten:1/2:0.01`  | `Σ (σ_i + 0.01)^(1/2)`                   |
//!
//! A string starting with `{` is read as the JSON form used in config files.

use rankmin::PenaltySpec;

use crate::{CliResult, Failure};

pub fn parse_penalty(text: &str) -> CliResult<PenaltySpec> {
    let text = text.trim();
    let spec = if text.starts_with('{') {
        serde_json::from_str(text).map_err(|e| Failure::config(format!("--penalty: {e}")))?
    } else {
        parse_compact(text)?
    };
    spec.validate().map_err(|e| Failure::config(format!("--penalty: {e}")))?;
    Ok(spec)
}

fn parse_compact(text: &str) -> CliResult<PenaltySpec> {
    let bad = |why: &str| Failure::config(format!("--penalty `{text}`: {why}"));
    let parts: Vec<&str> = text.split(':').collect();
    let number = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("`{s}` is not a number")));
    match parts.as_slice() {
        ["nuclear", lambda] => Ok(PenaltySpec::Nuclear { lambda: number(lambda)? }),
        ["truncated", r, lambda] => Ok(PenaltySpec::Truncated {
            r: r.trim().parse().map_err(|_| bad(&format!("`{r}` is not a rank")))?,
            lambda: number(lambda)?,
        }),
        ["weighted", list] => Ok(PenaltySpec::Weighted {
            weights: list.split(',').map(number).collect::<CliResult<_>>()?,
        }),
        ["schatten", p, eps] => {
            let (num, den) = p.split_once('/').ok_or_else(|| bad("exponent must be written as `num/den`"))?;
            let int = |s: &str| s.trim().parse::<u64>().map_err(|_| bad(&format!("`{s}` is not an integer")));
            Ok(PenaltySpec::Schatten {
                p_num: int(num)?,
                p_den: int(den)?,
                eps: number(eps)?,
            })
        }
        _ => Err(bad(
            "expected nuclear:L, truncated:R:L, weighted:W1,W2,... or schatten:NUM/DEN:EPS",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compact_forms() {
        assert_eq!(parse_penalty("nuclear:2.5").unwrap(), PenaltySpec::Nuclear { lambda: 2.5 });
        assert_eq!(
            parse_penalty("truncated:8:5").unwrap(),
            PenaltySpec::Truncated { r: 8, lambda: 5.0 }
        );
        assert_eq!(
            parse_penalty("weighted:0, 1,1").unwrap(),
            PenaltySpec::Weighted { weights: vec![0.0, 1.0, 1.0] }
        );
        assert_eq!(
            parse_penalty("schatten:1/2:0.01").unwrap(),
            PenaltySpec::Schatten { p_num: 1, p_den: 2, eps: 0.01 }
        );
    }

    #[test]
    fn json_form() {
        let spec = parse_penalty(r#"{"variant":"truncated","r":3,"lambda":1.0}"#).unwrap();
        assert_eq!(spec, PenaltySpec::Truncated { r: 3, lambda: 1.0 });
    }

    #[test]
    fn rejects_malformed_and_invalid() {
        for text in ["nuclear", "nuclear:x", "lasso:1", "truncated:-1:2", "schatten:0.5:0.1", "weighted:1,0", "nuclear:-1"] {
            let err = parse_penalty(text).unwrap_err();
            assert_eq!(err.code, crate::EXIT_CONFIG, "{text}");
        }
    }
}
