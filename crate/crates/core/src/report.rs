//! CSV artifacts and plot scripts. Numbers are written with 12 significant
//! digits so that identical runs produce byte-identical files.

use std::io::{self, Write};

use crate::experiment::CurveRecord;
use crate::solver::TraceRow;
use crate::urn::Trajectory;

/// Formats `x` like C's `%.12g`.
pub fn format_number(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if !(-4..DIGITS).contains(&exp) {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const CURVE_HEADER: &str = "network,case,n,mean,stderr,trials";
pub const TRAJECTORY_HEADER: &str = "trial,n,node,z,S_i";
pub const TRACE_HEADER: &str = "iter,value,gap,step";

pub fn write_curves<W: Write>(w: &mut W, records: &[CurveRecord]) -> io::Result<()> {
    writeln!(w, "{CURVE_HEADER}")?;
    for r in records {
        for (t, (m, se)) in r.curve.mean.iter().zip(&r.curve.stderr).enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.network,
                r.case,
                t + 1,
                format_number(*m),
                format_number(*se),
                r.curve.trials
            )?;
        }
    }
    Ok(())
}

/// Rows of one trial's trajectory; `S_i` is the super-urn proportion after the draw.
pub fn write_trajectory_rows<W: Write>(w: &mut W, trial: usize, traj: &Trajectory) -> io::Result<()> {
    for (t, (draws, props)) in traj.draws.iter().zip(&traj.proportions).enumerate() {
        for (i, (z, s)) in draws.iter().zip(props).enumerate() {
            writeln!(w, "{trial},{},{i},{z},{}", t + 1, format_number(*s))?;
        }
    }
    Ok(())
}

pub fn write_trace<W: Write>(w: &mut W, trace: &[TraceRow]) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for row in trace {
        writeln!(
            w,
            "{},{},{},{}",
            row.iter,
            format_number(row.value),
            format_number(row.gap),
            format_number(row.step)
        )?;
    }
    Ok(())
}

/// gnuplot commands plotting every (network, case) curve of `csv_name`
/// against time, one panel per network.
pub fn gnuplot_script(csv_name: &str, networks: &[String]) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 1200,400\n");
    s.push_str("set output 'figure4.png'\n");
    s.push_str(&format!("set multiplot layout 1,{}\n", networks.len().max(1)));
    s.push_str("set xlabel 'n'\nset ylabel 'average infection rate'\nset key bottom right\n");
    for net in networks {
        s.push_str(&format!("set title '{net}'\n"));
        let series: Vec<String> = (1..=3)
            .map(|case| {
                format!(
                    "'{csv_name}' using (strcol(1) eq '{net}' && $2 == {case} ? $3 : 1/0):4 with lines title 'case {case}'"
                )
            })
            .collect();
        s.push_str(&format!("plot {}\n", series.join(", \\\n     ")));
    }
    s.push_str("unset multiplot\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        let cases = [
            (0.5, "0.5"),
            (1.0 / 3.0, "0.333333333333"),
            (2.0 / 3.0, "0.666666666667"),
            (10.0, "10"),
            (-0.125, "-0.125"),
            (1e-7, "1e-07"),
            (8.736465721415065e-7, "8.73646572142e-07"),
            (123456789012345.0, "1.23456789012e+14"),
            (0.0001, "0.0001"),
            (19.189110307620275, "19.1891103076"),
            (0.0, "0"),
        ];
        for (x, want) in cases {
            assert_eq!(format_number(x), want, "{x}");
        }
    }

    #[test]
    fn gnuplot_mentions_every_network() {
        let s = gnuplot_script("curves.csv", &["line7".into(), "star6".into()]);
        assert!(s.contains("'line7'") && s.contains("'star6'"));
        assert!(s.contains("case 3"));
    }
}
