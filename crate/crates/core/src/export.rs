//! Text artifacts: Graphviz DOT renderings of the tape and standalone
//! matplotlib scripts. Numbers are printed in shortest round-trip form.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, ValueRef};

fn dot_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '"' | '\\' | '{' | '}' | '|' | '<' | '>' => {
                out.push('\\');
                out.push(ch);
            }
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

fn py_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn py_num(x: f64) -> String {
    if x.is_nan() {
        "float('nan')".into()
    } else if x.is_infinite() {
        if x > 0.0 { "float('inf')" } else { "float('-inf')" }.into()
    } else {
        format!("{x:?}")
    }
}

/// Nodes reachable from `root`, in ascending index order.
pub fn reachable<S: Scalar>(tape: &Tape<S>, root: ValueRef) -> Result<Vec<u32>> {
    let r = tape.check(root)?;
    let mut seen = vec![false; r + 1];
    let mut stack = vec![r as u32];
    seen[r] = true;
    while let Some(n) = stack.pop() {
        for &c in tape.child_slice(n as usize) {
            if !seen[c as usize] {
                seen[c as usize] = true;
                stack.push(c);
            }
        }
    }
    Ok((0..=r as u32).filter(|&i| seen[i as usize]).collect())
}

/// One-line description of a node: index, operator, value, gradient and,
/// when the tape keeps names, the name.
pub fn as_string<S: Scalar>(tape: &Tape<S>, v: ValueRef) -> Result<String> {
    let i = tape.check(v)?;
    let mut s = format!(
        "#{i} {} value={} grad={}",
        tape.ops()[i],
        tape.values()[i],
        tape.grads()[i]
    );
    if let Some(name) = tape.name_of(v) {
        let _ = write!(s, " name={name}");
    }
    Ok(s)
}

/// DOT digraph of everything `root` depends on. Each node is a record with
/// its name (if any), operator, gradient, value and raw index; every child
/// reference becomes one edge from child to parent.
pub fn build_dot_graph<S: Scalar>(tape: &Tape<S>, root: ValueRef) -> Result<String> {
    let nodes = reachable(tape, root)?;
    let mut out = String::from("digraph G {\n  rankdir=LR;\n  node [shape=record];\n");
    for &n in &nodes {
        let i = n as usize;
        let v = ValueRef(n);
        let mut label = String::new();
        if let Some(name) = tape.name_of(v) {
            let _ = write!(label, "{}|", dot_escape(name));
        }
        let _ = write!(
            label,
            "{}|grad {}|value {}|#{i}",
            tape.ops()[i],
            dot_escape(&tape.grads()[i].to_string()),
            dot_escape(&tape.values()[i].to_string()),
        );
        let _ = writeln!(out, "  n{i} [label=\"{{{label}}}\"];");
    }
    for &n in &nodes {
        for &c in tape.child_slice(n as usize) {
            let _ = writeln!(out, "  n{c} -> n{n};");
        }
    }
    out.push_str("}\n");
    Ok(out)
}

/// Matplotlib script plotting `f` at `samples` evenly spaced points of
/// `[x_start, x_end]`.
pub fn generate_plot<F: FnMut(f64) -> f64>(
    mut f: F,
    x_start: f64,
    x_end: f64,
    samples: usize,
    title: &str,
) -> Result<String> {
    if !(x_start < x_end) || !x_start.is_finite() || !x_end.is_finite() {
        return Err(Error::invalid(format!("empty plot range [{x_start}, {x_end}]")));
    }
    if samples < 2 {
        return Err(Error::invalid(format!("plot needs at least 2 samples, got {samples}")));
    }
    let step = (x_end - x_start) / (samples - 1) as f64;
    let mut xs = String::new();
    let mut ys = String::new();
    for k in 0..samples {
        let x = if k + 1 == samples { x_end } else { x_start + step * k as f64 };
        let _ = write!(xs, "{}, ", py_num(x));
        let _ = write!(ys, "{}, ", py_num(f(x)));
    }
    let mut s = String::from("import matplotlib.pyplot as plt\n\n");
    let _ = writeln!(s, "xs = [{}]", xs.trim_end_matches([',', ' ']));
    let _ = writeln!(s, "ys = [{}]", ys.trim_end_matches([',', ' ']));
    s.push_str("fig, ax = plt.subplots()\nax.plot(xs, ys)\nax.grid(True)\n");
    let _ = writeln!(s, "ax.set_title({})", py_str(title));
    s.push_str("plt.show()\n");
    Ok(s)
}

fn check_matrix(matrix: &[Vec<f64>]) -> Result<usize> {
    let cols = matrix.first().map_or(0, Vec::len);
    if cols == 0 {
        return Err(Error::invalid("heatmap matrix is empty"));
    }
    if let Some(r) = matrix.iter().position(|row| row.len() != cols) {
        return Err(Error::invalid(format!(
            "heatmap row {r} has {} columns, expected {cols}",
            matrix[r].len()
        )));
    }
    Ok(cols)
}

fn heatmap_script<F: FnMut(usize, usize, f64) -> String>(matrix: &[Vec<f64>], mut annotate: F) -> Result<String> {
    check_matrix(matrix)?;
    let mut s = String::from("import matplotlib.pyplot as plt\n\ndata = [\n");
    for row in matrix {
        let cells: Vec<String> = row.iter().map(|&x| py_num(x)).collect();
        let _ = writeln!(s, "    [{}],", cells.join(", "));
    }
    s.push_str("]\nfig, ax = plt.subplots()\nim = ax.imshow(data)\nfig.colorbar(im, ax=ax)\n");
    for (r, row) in matrix.iter().enumerate() {
        for (c, &x) in row.iter().enumerate() {
            let _ = writeln!(
                s,
                "ax.text({c}, {r}, {}, ha='center', va='center')",
                py_str(&annotate(r, c, x))
            );
        }
    }
    s.push_str("plt.show()\n");
    Ok(s)
}

/// Heatmap with each cell annotated by its value.
pub fn generate_heatmap_basic(matrix: &[Vec<f64>]) -> Result<String> {
    heatmap_script(matrix, |_, _, x| x.to_string())
}

/// Heatmap whose cell annotations are `item_text` and `counter_text` joined
/// by a line break.
pub fn generate_heatmap<I, C>(matrix: &[Vec<f64>], mut item_text: I, mut counter_text: C) -> Result<String>
where
    I: FnMut(usize, usize, f64) -> String,
    C: FnMut(usize, usize, f64) -> String,
{
    heatmap_script(matrix, |r, c, x| format!("{}\n{}", item_text(r, c, x), counter_text(r, c, x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::Ops;

    fn count(s: &str, pat: &str) -> usize {
        s.matches(pat).count()
    }

    #[test]
    fn single_leaf_has_no_edges() {
        let mut t = Tape::<f64>::new(4).unwrap();
        let a = t.leaf(1.5).unwrap();
        let dot = build_dot_graph(&t, a).unwrap();
        assert_eq!(count(&dot, "[label="), 1);
        assert_eq!(count(&dot, "->"), 0);
        assert!(dot.starts_with("digraph G {") && dot.ends_with("}\n"));
    }

    #[test]
    fn shared_operand_produces_two_edges() {
        let mut t = Tape::<f64>::new(8).unwrap();
        let a = t.leaf(3.0).unwrap();
        let _unused = t.leaf(4.0).unwrap();
        let m = t.mul(a, a).unwrap();
        let dot = build_dot_graph(&t, m).unwrap();
        assert_eq!(count(&dot, "[label="), 2);
        assert_eq!(count(&dot, "n0 -> n2;"), 2);
        assert_eq!(reachable(&t, m).unwrap(), vec![0, 2]);
    }

    #[test]
    fn node_strings_carry_names_when_enabled() {
        let mut t = Tape::<f64>::with_options(4, false, true).unwrap();
        let b = t.named_leaf(2.0, "b").unwrap();
        let s = as_string(&t, b).unwrap();
        assert!(s.contains("name=b") && s.contains("value=2") && s.contains("#0"));
        let mut u = Tape::<f64>::new(4).unwrap();
        let b = u.leaf(2.0).unwrap();
        assert!(!as_string(&u, b).unwrap().contains("name="));
        assert!(as_string(&u, ValueRef::from_raw(3)).is_err());
    }

    #[test]
    fn rendered_grad_parses_back() {
        let mut t = Tape::<f64>::new(8).unwrap();
        let a = t.leaf(0.1).unwrap();
        let e = t.exp(a).unwrap();
        t.backward(e).unwrap();
        let s = as_string(&t, a).unwrap();
        let g: f64 = s.split("grad=").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
        assert_eq!(g.to_bits(), t.grad_of(a).unwrap().to_bits());
    }

    #[test]
    fn plot_embeds_samples() {
        let s = generate_plot(|x| x, 0.0, 1.0, 2, "id").unwrap();
        assert!(s.contains("xs = [0.0, 1.0]"));
        assert!(s.contains("ys = [0.0, 1.0]"));
        assert!(s.contains("ax.grid(True)") && s.contains("set_title(\"id\")"));
        assert!(generate_plot(|x| x, 0.0, 1.0, 1, "").is_err());
        assert!(generate_plot(|x| x, 1.0, 1.0, 5, "").is_err());
    }

    #[test]
    fn plot_values_are_lossless() {
        let s = generate_plot(|x| x.sin() / 3.0, -1.0, 2.0, 7, "t").unwrap();
        let line = s.lines().find(|l| l.starts_with("ys = [")).unwrap();
        let body = line.trim_start_matches("ys = [").trim_end_matches(']');
        let step = 3.0 / 6.0;
        for (k, tok) in body.split(", ").enumerate() {
            let x = if k == 6 { 2.0 } else { -1.0 + step * k as f64 };
            let v: f64 = tok.parse().unwrap();
            assert_eq!(v.to_bits(), (x.sin() / 3.0).to_bits());
        }
    }

    #[test]
    fn heatmaps_annotate_every_cell() {
        let s = generate_heatmap_basic(&[vec![0.0]]).unwrap();
        assert_eq!(count(&s, "ax.text("), 1);
        assert!(s.contains("[0.0],"));
        let m = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let s = generate_heatmap(&m, |r, c, _| format!("item{r}{c}"), |_, _, x| format!("cnt{x}")).unwrap();
        assert_eq!(count(&s, "ax.text("), 6);
        assert!(s.contains("item12") && s.contains("cnt6"));
        assert!(generate_heatmap_basic(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(generate_heatmap_basic(&[]).is_err());
    }

    #[test]
    fn output_is_deterministic() {
        let mut t = Tape::<f64>::new(8).unwrap();
        let a = t.leaf(2.0).unwrap();
        let b = t.leaf(-1.0).unwrap();
        let c = t.div(a, b).unwrap();
        t.backward(c).unwrap();
        assert_eq!(build_dot_graph(&t, c).unwrap(), build_dot_graph(&t, c).unwrap());
    }
}
