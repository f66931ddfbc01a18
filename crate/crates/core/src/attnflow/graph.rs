//! Exact max-flow on small directed networks (Dinic's algorithm, f64
//! capacities). Graphs here are tiny (hundreds of nodes), so the
//! implementation favors auditability over asymptotics: edge flows are
//! kept around after a run so tests can check conservation and capacity
//! constraints edge by edge.

use crate::error::{Error, Result};

/// Residuals at or below this are treated as exhausted.
pub const FLOW_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeState {
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
    pub flow: f64,
}

#[derive(Debug, Clone)]
struct Edge {
    from: usize,
    to: usize,
    cap: f64,
    flow: f64,
}

/// Directed flow network. `add_edge` installs the reverse (zero-capacity)
/// twin internally; edge ids returned to callers always name the forward
/// edge.
#[derive(Debug, Clone, Default)]
pub struct FlowNetwork {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork { edges: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    pub fn add_node(&mut self) -> usize {
        self.adj.push(Vec::new());
        self.adj.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len() / 2
    }

    pub fn add_edge(&mut self, from: usize, to: usize, capacity: f64) -> Result<usize> {
        if from >= self.adj.len() || to >= self.adj.len() {
            return Err(Error::invalid_input(format!(
                "edge ({from}, {to}) references a node outside 0..{}",
                self.adj.len()
            )));
        }
        if !capacity.is_finite() || capacity < 0.0 {
            return Err(Error::invalid_input(format!("capacity {capacity} must be finite and >= 0")));
        }
        let id = self.edges.len();
        self.edges.push(Edge { from, to, cap: capacity, flow: 0.0 });
        self.edges.push(Edge { from: to, to: from, cap: 0.0, flow: 0.0 });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        Ok(id)
    }

    /// Replaces the capacity of a forward edge id from `add_edge`.
    pub fn set_capacity(&mut self, edge: usize, capacity: f64) -> Result<()> {
        if edge >= self.edges.len() || edge % 2 != 0 {
            return Err(Error::invalid_input(format!("no forward edge with id {edge}")));
        }
        if !capacity.is_finite() || capacity < 0.0 {
            return Err(Error::invalid_input(format!("capacity {capacity} must be finite and >= 0")));
        }
        self.edges[edge].cap = capacity;
        Ok(())
    }

    /// Forward edges with the flow assignment from the most recent
    /// `max_flow` call.
    pub fn edge_states(&self) -> Vec<EdgeState> {
        self.edges
            .iter()
            .step_by(2)
            .map(|e| EdgeState { from: e.from, to: e.to, capacity: e.cap, flow: e.flow })
            .collect()
    }

    /// True when the positive-capacity edges form a DAG.
    pub fn is_acyclic(&self) -> bool {
        // 0 = unvisited, 1 = on stack, 2 = done
        let n = self.adj.len();
        let mut color = vec![0u8; n];
        let mut stack: Vec<(usize, usize)> = Vec::new();
        for start in 0..n {
            if color[start] != 0 {
                continue;
            }
            color[start] = 1;
            stack.push((start, 0));
            // iterative DFS; each frame is (node, next adjacency index)
            while let Some((v, mut i)) = stack.pop() {
                let mut descended = false;
                while i < self.adj[v].len() {
                    let eid = self.adj[v][i];
                    i += 1;
                    if eid % 2 != 0 || self.edges[eid].cap <= 0.0 {
                        continue;
                    }
                    let to = self.edges[eid].to;
                    if color[to] == 1 {
                        return false;
                    }
                    if color[to] == 0 {
                        color[to] = 1;
                        stack.push((v, i));
                        stack.push((to, 0));
                        descended = true;
                        break;
                    }
                }
                if !descended {
                    color[v] = 2;
                }
            }
        }
        true
    }

    /// Exact maximum flow from `source` to `sink`. Resets any previous
    /// flow assignment first, so the network can be reused across calls.
    pub fn max_flow(&mut self, source: usize, sink: usize) -> Result<f64> {
        let n = self.adj.len();
        if source >= n || sink >= n {
            return Err(Error::invalid_input(format!(
                "source {source} or sink {sink} outside 0..{n}"
            )));
        }
        if source == sink {
            return Err(Error::invalid_input("source and sink must differ"));
        }
        for e in &mut self.edges {
            e.flow = 0.0;
        }

        let mut total = 0.0f64;
        let mut level = vec![usize::MAX; n];
        loop {
            // BFS over residual edges to build the level graph
            level.fill(usize::MAX);
            level[source] = 0;
            let mut queue = std::collections::VecDeque::from([source]);
            while let Some(v) = queue.pop_front() {
                for &eid in &self.adj[v] {
                    let e = &self.edges[eid];
                    if e.cap - e.flow > FLOW_EPS && level[e.to] == usize::MAX {
                        level[e.to] = level[v] + 1;
                        queue.push_back(e.to);
                    }
                }
            }
            if level[sink] == usize::MAX {
                break;
            }
            let mut iter = vec![0usize; n];
            loop {
                let pushed = self.blocking_dfs(source, sink, f64::INFINITY, &level, &mut iter);
                if pushed <= FLOW_EPS {
                    break;
                }
                total += pushed;
            }
        }
        Ok(total)
    }

    fn blocking_dfs(
        &mut self,
        v: usize,
        sink: usize,
        limit: f64,
        level: &[usize],
        iter: &mut [usize],
    ) -> f64 {
        if v == sink {
            return limit;
        }
        while iter[v] < self.adj[v].len() {
            let eid = self.adj[v][iter[v]];
            let (to, residual) = {
                let e = &self.edges[eid];
                (e.to, e.cap - e.flow)
            };
            if residual > FLOW_EPS && level[to] == level[v] + 1 {
                let pushed = self.blocking_dfs(to, sink, limit.min(residual), level, iter);
                if pushed > FLOW_EPS {
                    self.edges[eid].flow += pushed;
                    self.edges[eid ^ 1].flow -= pushed;
                    return pushed;
                }
            }
            iter[v] += 1;
        }
        0.0
    }
}
