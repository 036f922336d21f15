//! Plain-text grid files.
//!
//! ```text
//! nx ny h x0 y0
//! mask <disk|halfdisk|rect> <param>
//! <ny rows of nx values, `nan` for unmasked nodes>
//! ```
//!
//! Reals are written with 17 significant digits so a write/read cycle is
//! bit-exact.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Domain, GridSpec, ScalarField, Vec2};

/// Formats a real with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_grid<W: Write>(f: &ScalarField, mut out: W) -> Result<()> {
    let s = f.spec();
    let mut buf = String::new();
    writeln!(
        buf,
        "{} {} {} {} {}",
        s.nx,
        s.ny,
        fmt_real(s.h),
        fmt_real(s.origin.x),
        fmt_real(s.origin.y)
    )
    .unwrap();
    writeln!(buf, "mask {} {}", f.domain().name(), fmt_real(f.domain().param())).unwrap();
    for j in 0..s.ny {
        let row: Vec<String> = (0..s.nx).map(|i| fmt_real(f.at(i, j))).collect();
        buf.push_str(&row.join(" "));
        buf.push('\n');
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

fn parse_real(tok: &str) -> Result<f64> {
    if tok.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    tok.parse::<f64>().map_err(|e| Error::Parse(format!("bad real `{tok}`: {e}")))
}

pub fn read_grid<R: BufRead>(input: R) -> Result<ScalarField> {
    let mut lines = input.lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Parse(format!("missing {what}")))?
            .map_err(Error::from)
    };
    let header = next("header line")?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 5 {
        return Err(Error::Parse(format!("header needs 5 fields, got {}", toks.len())));
    }
    let nx: usize = toks[0].parse().map_err(|_| Error::Parse("bad nx".into()))?;
    let ny: usize = toks[1].parse().map_err(|_| Error::Parse("bad ny".into()))?;
    let spec = GridSpec::new(
        nx,
        ny,
        parse_real(toks[2])?,
        Vec2::new(parse_real(toks[3])?, parse_real(toks[4])?),
    )?;
    let mask_line = next("mask line")?;
    let mtoks: Vec<&str> = mask_line.split_whitespace().collect();
    if mtoks.len() != 3 || mtoks[0] != "mask" {
        return Err(Error::Parse(format!("bad mask line `{mask_line}`")));
    }
    let domain = Domain::parse(mtoks[1], parse_real(mtoks[2])?)?;
    let mut values = Vec::with_capacity(spec.len());
    for j in 0..ny {
        let row = next(&format!("row {j}"))?;
        let before = values.len();
        for tok in row.split_whitespace() {
            values.push(parse_real(tok)?);
        }
        if values.len() - before != nx {
            return Err(Error::Parse(format!(
                "row {j} has {} values, expected {nx}",
                values.len() - before
            )));
        }
    }
    ScalarField::from_values(spec, domain, values)
}

pub fn save_grid(f: &ScalarField, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_grid(f, std::io::BufWriter::new(file))
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<ScalarField> {
    let file = std::fs::File::open(path)?;
    read_grid(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn roundtrip(f: &ScalarField) -> ScalarField {
        let mut buf = Vec::new();
        write_grid(f, &mut buf).unwrap();
        read_grid(buf.as_slice()).unwrap()
    }

    #[test]
    fn header_and_mask_lines() {
        let spec = GridSpec::new(3, 3, 0.5, Vec2::ZERO).unwrap();
        let f = ScalarField::from_fn(spec, Domain::Rectangle, |p| p.y);
        let mut buf = Vec::new();
        write_grid(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("3 3 5.0000000000000000e-1"));
        assert!(lines.next().unwrap().starts_with("mask rect"));
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn rejects_short_rows() {
        let text = "3 3 1 0 0\nmask rect 0\n1 2 3\n1 2\n1 2 3\n";
        assert!(read_grid(text.as_bytes()).is_err());
        assert!(read_grid("3 3 1 0\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn bit_exact_roundtrip(seed in any::<u64>(), radius in 0.5f64..1.5) {
            let spec = GridSpec::centered(1.0, 1.0 / 8.0).unwrap();
            let f = ScalarField::from_fn(spec, Domain::Disk { radius }, |p| {
                let t = (p.x * 12.9898 + p.y * 78.233 + seed as f64 * 1e-3).sin() * 43758.5453;
                t - t.floor() - 0.5 + 1e-300 * p.x
            });
            let g = roundtrip(&f);
            prop_assert_eq!(f.mask(), g.mask());
            for (a, b) in f.values().iter().zip(g.values()) {
                prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
            }
            prop_assert_eq!(f.spec(), g.spec());
            prop_assert_eq!(f.domain(), g.domain());
        }
    }
}
