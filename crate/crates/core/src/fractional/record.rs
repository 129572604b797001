//! Complete record of a fractional run and its text dump format.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PagingError, Result};
use crate::trace::{CostVector, PageId};

const FRAC_MAGIC: &str = "paging-frac v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub k: usize,
    pub pages: usize,
    pub rounds: usize,
    pub q: f64,
    pub r: f64,
    pub delta: f64,
    pub eps_start: f64,
}

/// One coordinate update `x_{page, j} = x` at the end of a round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Change {
    pub page: PageId,
    pub j: u32,
    pub x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub page: PageId,
    /// Dual variable `y_t`.
    pub y: f64,
    /// Clock value at the end of the round.
    pub tau: f64,
    /// Total growth of `z` during the round.
    pub dz: f64,
    /// Coordinates changed by the round, sorted by page; includes the new
    /// coordinate of the requested page.
    pub changes: Vec<Change>,
}

/// Final values of one primal coordinate and its dual companions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarRecord {
    pub page: PageId,
    pub j: u32,
    pub x: f64,
    pub z: f64,
    /// Smallest growth coefficient observed while the coordinate was active.
    pub s_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionalRecord {
    pub header: RunHeader,
    pub rounds: Vec<RoundRecord>,
    /// Sorted by `(page, j)`.
    pub vars: Vec<VarRecord>,
}

impl FractionalRecord {
    /// Per-page fractional eviction cost `sum_j x_{p,j}`.
    pub fn costs(&self) -> CostVector {
        let mut cv = CostVector::zeros(self.header.pages);
        for v in &self.vars {
            cv.add(v.page, v.x);
        }
        cv
    }

    pub fn requests(&self) -> Vec<PageId> {
        self.rounds.iter().map(|r| r.page).collect()
    }

    /// Final `x` grouped by page, in request order.
    pub fn x_by_page(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.header.pages];
        for v in &self.vars {
            out[v.page as usize - 1].push(v.x);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let h = &self.header;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{FRAC_MAGIC} k={} n={} T={} q={} r={} delta={} eps_start={}",
            h.k,
            h.pages,
            h.rounds,
            fmt_g17(h.q),
            fmt_g17(h.r),
            fmt_g17(h.delta),
            fmt_g17(h.eps_start)
        );
        for (i, round) in self.rounds.iter().enumerate() {
            let t = i + 1;
            out.push_str("t ");
            out.push_str(&t.to_string());
            for c in &round.changes {
                let _ = write!(out, " p={} j={} x={}", c.page, c.j, fmt_g17(c.x));
            }
            out.push('\n');
            let _ = writeln!(
                out,
                "round {t} p={} y={} tau={} dz={}",
                round.page,
                fmt_g17(round.y),
                fmt_g17(round.tau),
                fmt_g17(round.dz)
            );
        }
        for v in &self.vars {
            let _ = writeln!(
                out,
                "var p={} j={} x={} z={} s={}",
                v.page,
                v.j,
                fmt_g17(v.x),
                fmt_g17(v.z),
                fmt_g17(v.s_min)
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| corrupt(1, "empty dump"))?;
        let header = parse_header(first)?;
        let mut rounds: Vec<RoundRecord> = Vec::with_capacity(header.rounds);
        let mut pending: Option<(usize, Vec<Change>)> = None;
        let mut vars = Vec::with_capacity(header.rounds);
        for (i, line) in lines {
            let lineno = i + 1;
            let mut fields = line.split_whitespace();
            match fields.next() {
                None => continue,
                Some("t") => {
                    let t: usize = parse_num(fields.next(), lineno, "round")?;
                    let rest: Vec<&str> = fields.collect();
                    if !rest.len().is_multiple_of(3) {
                        return Err(corrupt(lineno, "change entries come in p/j/x triples"));
                    }
                    let changes = rest
                        .chunks(3)
                        .map(|c| {
                            Ok(Change {
                                page: kv(c[0], "p", lineno)?,
                                j: kv(c[1], "j", lineno)?,
                                x: kv(c[2], "x", lineno)?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    pending = Some((t, changes));
                }
                Some("round") => {
                    let t: usize = parse_num(fields.next(), lineno, "round")?;
                    let f: Vec<&str> = fields.collect();
                    if f.len() != 4 {
                        return Err(corrupt(lineno, "round line needs p, y, tau, dz"));
                    }
                    if t != rounds.len() + 1 {
                        return Err(corrupt(lineno, "rounds out of order"));
                    }
                    let changes = match pending.take() {
                        Some((pt, c)) if pt == t => c,
                        _ => return Err(corrupt(lineno, "round line without matching change line")),
                    };
                    rounds.push(RoundRecord {
                        page: kv(f[0], "p", lineno)?,
                        y: kv(f[1], "y", lineno)?,
                        tau: kv(f[2], "tau", lineno)?,
                        dz: kv(f[3], "dz", lineno)?,
                        changes,
                    });
                }
                Some("var") => {
                    let f: Vec<&str> = fields.collect();
                    if f.len() != 5 {
                        return Err(corrupt(lineno, "var line needs p, j, x, z, s"));
                    }
                    vars.push(VarRecord {
                        page: kv(f[0], "p", lineno)?,
                        j: kv(f[1], "j", lineno)?,
                        x: kv(f[2], "x", lineno)?,
                        z: kv(f[3], "z", lineno)?,
                        s_min: kv(f[4], "s", lineno)?,
                    });
                }
                Some(other) => return Err(corrupt(lineno, &format!("unknown record `{other}`"))),
            }
        }
        if pending.is_some() {
            return Err(corrupt(0, "trailing change line without round line"));
        }
        if rounds.len() != header.rounds {
            return Err(corrupt(
                0,
                &format!("header announces {} rounds, found {}", header.rounds, rounds.len()),
            ));
        }
        if vars.len() != header.rounds {
            return Err(corrupt(
                0,
                &format!("expected {} var lines, found {}", header.rounds, vars.len()),
            ));
        }
        if let Some(v) = vars.iter().find(|v| v.page == 0 || v.page as usize > header.pages) {
            return Err(PagingError::PageOutOfRange {
                page: v.page as u64,
                n: header.pages,
            });
        }
        vars.sort_by_key(|v| (v.page, v.j));
        Ok(Self { header, rounds, vars })
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn corrupt(line: usize, msg: &str) -> PagingError {
    PagingError::Parse(format!("fractional dump line {line}: {msg}"))
}

fn parse_num<T: std::str::FromStr>(field: Option<&str>, line: usize, what: &str) -> Result<T> {
    field
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| corrupt(line, &format!("bad {what}")))
}

fn kv<T: std::str::FromStr>(field: &str, key: &str, line: usize) -> Result<T> {
    field
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| corrupt(line, &format!("expected {key}=<value>, got `{field}`")))
}

fn parse_header(line: &str) -> Result<RunHeader> {
    let rest = line
        .strip_prefix(FRAC_MAGIC)
        .ok_or_else(|| corrupt(1, "missing paging-frac v1 header"))?;
    let f: Vec<&str> = rest.split_whitespace().collect();
    if f.len() != 7 {
        return Err(corrupt(1, "header needs k, n, T, q, r, delta, eps_start"));
    }
    Ok(RunHeader {
        k: kv(f[0], "k", 1)?,
        pages: kv(f[1], "n", 1)?,
        rounds: kv(f[2], "T", 1)?,
        q: kv(f[3], "q", 1)?,
        r: kv(f[4], "r", 1)?,
        delta: kv(f[5], "delta", 1)?,
        eps_start: kv(f[6], "eps_start", 1)?,
    })
}

/// Formats like C's `%.17g`, which round-trips every finite `f64`.
pub fn fmt_g17(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        strip_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_formatting() {
        assert_eq!(fmt_g17(0.0), "0");
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(0.5), "0.5");
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(1e-9), "1.0000000000000001e-09");
        assert_eq!(fmt_g17(123456.0), "123456");
        assert_eq!(fmt_g17(1e20), "1e+20");
        assert_eq!(fmt_g17(-2.5e-5), "-2.5000000000000001e-05");
        for v in [
            0.1,
            1.0 / 3.0,
            2.0f64.sqrt() * 1e-13,
            6.02e23,
            f64::MIN_POSITIVE,
            12345.678,
        ] {
            assert_eq!(fmt_g17(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn rejects_corrupt_dumps() {
        assert!(FractionalRecord::parse("").is_err());
        assert!(FractionalRecord::parse("paging-frac v2 k=1").is_err());
        let header = "paging-frac v1 k=1 n=2 T=1 q=1 r=1 delta=1 eps_start=0\n";
        let ok = format!("{header}t 1 p=1 j=1 x=0\nround 1 p=1 y=0 tau=0 dz=0\nvar p=1 j=1 x=0 z=0 s=1\n");
        assert!(FractionalRecord::parse(&ok).is_ok());
        let missing_round = format!("{header}t 1 p=1 j=1 x=0\nvar p=1 j=1 x=0 z=0 s=1\n");
        assert!(FractionalRecord::parse(&missing_round).is_err());
        let bad_field = format!("{header}t 1 p=1 j=1 x=zero\nround 1 p=1 y=0 tau=0 dz=0\nvar p=1 j=1 x=0 z=0 s=1\n");
        assert!(FractionalRecord::parse(&bad_field).is_err());
    }
}
