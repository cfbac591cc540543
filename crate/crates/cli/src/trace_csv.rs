//! CSV export of simulation traces.
//!
//! Columns: `t`, the state entries `x1_j` and `x2_j`, the 1-based modes,
//! observations and regions, then the inputs. A scalar input is named
//! `u1` (or `u2`); vector inputs are `u1_1, u1_2, …`. Floats are written
//! in shortest round-trip form.

use std::fmt::Write;

use mjls_core::sim::Trace;

fn input_names(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=n).map(|j| format!("{prefix}_{j}")).collect()
    }
}

pub fn header(n1: usize, n2: usize, nu1: usize, nu2: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n1).map(|j| format!("x1_{j}")));
    cols.extend((1..=n2).map(|j| format!("x2_{j}")));
    cols.extend(["mode1", "mode2", "obs1", "obs2", "region1", "region2"].map(String::from));
    cols.extend(input_names("u1", nu1));
    cols.extend(input_names("u2", nu2));
    cols.join(",")
}

fn float(out: &mut String, v: f64) {
    let mut buf = ryu::Buffer::new();
    out.push(',');
    out.push_str(buf.format(v));
}

pub fn render(trace: &Trace, n1: usize, n2: usize, nu1: usize, nu2: usize) -> String {
    let mut out = header(n1, n2, nu1, nu2);
    out.push('\n');
    let mut buf = ryu::Buffer::new();
    for k in 0..trace.len() {
        out.push_str(buf.format(trace.t[k]));
        for &v in trace.x1[k].iter().chain(&trace.x2[k]) {
            float(&mut out, v);
        }
        let ints = [trace.mode1[k], trace.mode2[k], trace.obs1[k], trace.obs2[k], trace.region1[k], trace.region2[k]];
        for i in ints {
            write!(out, ",{}", i + 1).expect("writing to a String");
        }
        for &v in trace.u1[k].iter().chain(&trace.u2[k]) {
            float(&mut out, v);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_header() {
        assert_eq!(
            header(2, 3, 1, 1),
            "t,x1_1,x1_2,x2_1,x2_2,x2_3,mode1,mode2,obs1,obs2,region1,region2,u1,u2"
        );
        assert!(header(1, 1, 2, 1).ends_with("u1_1,u1_2,u2"));
    }

    #[test]
    fn rows_are_one_based_and_shortest() {
        let trace = Trace {
            t: vec![0.0],
            x1: vec![vec![0.1]],
            x2: vec![vec![-1e-20]],
            mode1: vec![0],
            mode2: vec![1],
            obs1: vec![0],
            obs2: vec![1],
            region1: vec![2],
            region2: vec![0],
            u1: vec![vec![3.0]],
            u2: vec![vec![-0.5]],
        };
        let s = render(&trace, 1, 1, 1, 1);
        assert_eq!(s.lines().nth(1).unwrap(), "0.0,0.1,-1e-20,1,2,1,2,3,1,3.0,-0.5");
    }
}
