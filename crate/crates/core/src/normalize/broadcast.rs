use std::collections::BTreeMap;

use crate::chart::Chart;
use crate::diag::Diagnostic;

use super::symbolic::Executor;

/// Event → events broadcast by transitions it triggers, in first-seen order.
pub fn broadcast_edges(chart: &Chart) -> BTreeMap<String, Vec<String>> {
    let mut edges: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for id in chart.transition_ids() {
        let key = Executor::trigger_key(chart, id);
        let out = edges.entry(key).or_default();
        for a in &chart.transition(id).alternatives {
            for b in &a.broadcasts {
                if !out.contains(b) {
                    out.push(b.clone());
                }
            }
        }
    }
    edges
}

/// Elementary cycles of the broadcast graph, each listed from its smallest
/// event and closed with that event again.
pub fn broadcast_cycles(chart: &Chart) -> Vec<Vec<String>> {
    let edges = broadcast_edges(chart);
    let mut cycles: Vec<Vec<String>> = Vec::new();
    for start in edges.keys() {
        // cycles whose smallest member is `start`
        let mut stack: Vec<(String, usize)> = vec![(start.clone(), 0)];
        let mut path: Vec<String> = vec![start.clone()];
        while let Some((node, i)) = stack.pop() {
            let succ = edges.get(&node).map(Vec::as_slice).unwrap_or(&[]);
            if i < succ.len() {
                stack.push((node, i + 1));
                let next = &succ[i];
                if next == start {
                    let mut c = path.clone();
                    c.push(start.clone());
                    cycles.push(c);
                } else if next > start && !path.contains(next) {
                    path.push(next.clone());
                    stack.push((next.clone(), 0));
                }
            } else {
                path.pop();
            }
        }
    }
    cycles
}

pub fn check_broadcast_graph(chart: &Chart) -> Vec<Diagnostic> {
    broadcast_cycles(chart)
        .into_iter()
        .map(|c| {
            Diagnostic::error(format!("broadcast cycle: {}", c.join(" -> ")))
                .with_hint("a broadcast runs to completion before its sender continues, so cycles never terminate")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_chart;

    fn cycles(src: &str) -> Vec<Vec<String>> {
        broadcast_cycles(&parse_chart(src).chart.unwrap())
    }

    #[test]
    fn self_broadcast_is_a_cycle() {
        let c = cycles("chart C { state A; state B; on e from A -> B / e; }");
        assert_eq!(c, vec![vec!["e".to_string(), "e".to_string()]]);
    }

    #[test]
    fn three_event_cycle_lists_all() {
        let c = cycles(
            "chart C { state A; state B; on e from A -> B / f; on f from B -> A / g; on g from A -> B / e; }",
        );
        assert_eq!(c, vec![vec!["e", "f", "g", "e"].into_iter().map(String::from).collect::<Vec<_>>()]);
        let d = check_broadcast_graph(&parse_chart("chart C { state A; on e from A -> A / e; }").chart.unwrap());
        assert_eq!(d[0].message, "broadcast cycle: e -> e");
    }

    #[test]
    fn acyclic_chain_is_clean() {
        assert!(cycles("chart C { state A; state B; on send from A -> B / msg; on msg from B -> A; }").is_empty());
    }
}
