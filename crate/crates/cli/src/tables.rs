//! `nasic truth-table` and `nasic codec`.

use std::fmt::Write as _;

use anyhow::Result;
use nasic_core::cam::truth_table;
use nasic_core::encoding::{encode_input, encode_weight, CodeSpace, Polarity};

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| Ok(v.parse::<T>()?))
        .collect()
}

pub fn truth_table_text(plan: &[u8]) -> Result<String> {
    let mut out = String::from("entry,query,m\n");
    for (e, q, m) in truth_table(plan)? {
        writeln!(out, "{},{},{}", e.bits(), q.bits(), m.m())?;
    }
    Ok(out)
}

pub fn codec_text(space: &CodeSpace) -> Result<String> {
    space.validate()?;
    let levels = |cells: &[nasic_core::CellState]| {
        cells
            .iter()
            .map(|c| c.level().to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = String::from("weight,pos_levels,neg_levels,pos_pulses,neg_pulses\n");
    for w in space.weight_range() {
        let c = encode_weight(w, space)?;
        writeln!(
            out,
            "{w},{},{},{},{}",
            levels(&c.pos),
            levels(&c.neg),
            c.pos_pulse_sum(),
            c.neg_pulse_sum()
        )?;
    }
    out.push_str("\ninput,magnitude,polarity\n");
    for x in space.input_range() {
        let d = encode_input(x, space)?;
        let p = match d.polarity {
            Polarity::Positive => "+",
            Polarity::Negative => "-",
        };
        writeln!(out, "{x},{},{p}", d.magnitude)?;
    }
    Ok(out)
}
