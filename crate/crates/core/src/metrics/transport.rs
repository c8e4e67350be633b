//! Transportation simplex for uniform-weight optimal transport between point sets
//! of different sizes. Supplies and demands are kept integral so the optimum is exact.

use crate::error::{Error, Result};

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    row: usize,
    col: usize,
    flow: i64,
}

struct Tree {
    rows: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
    parent_edge: Vec<usize>,
    parent: Vec<usize>,
    depth: Vec<usize>,
    potential: Vec<f64>,
    queue: Vec<usize>,
}

impl Tree {
    fn node_of_col(&self, col: usize) -> usize {
        self.rows + col
    }

    fn is_row(&self, node: usize) -> bool {
        node < self.rows
    }

    /// Rebuilds parents, depths and potentials (`u_r + v_c = cost`) from node 0.
    fn refresh(&mut self, cost: &[f64], cols: usize) {
        let nodes = self.adjacency.len();
        self.depth.fill(usize::MAX);
        self.queue.clear();
        self.queue.push(0);
        self.depth[0] = 0;
        self.potential[0] = 0.0;
        self.parent[0] = usize::MAX;
        let mut head = 0;
        while head < self.queue.len() {
            let x = self.queue[head];
            head += 1;
            for k in 0..self.adjacency[x].len() {
                let e = self.adjacency[x][k];
                let edge = self.edges[e];
                let (other, pot) = if x < self.rows {
                    let y = self.rows + edge.col;
                    (y, cost[edge.row * cols + edge.col] - self.potential[x])
                } else {
                    (
                        edge.row,
                        cost[edge.row * cols + edge.col] - self.potential[x],
                    )
                };
                if self.depth[other] == usize::MAX {
                    self.depth[other] = self.depth[x] + 1;
                    self.parent[other] = x;
                    self.parent_edge[other] = e;
                    self.potential[other] = pot;
                    self.queue.push(other);
                }
            }
        }
        debug_assert_eq!(self.queue.len(), nodes, "basis must span all nodes");
    }

    fn detach(&mut self, e: usize) {
        let Edge { row, col, .. } = self.edges[e];
        let c = self.node_of_col(col);
        self.adjacency[row].retain(|&k| k != e);
        self.adjacency[c].retain(|&k| k != e);
    }

    fn attach(&mut self, e: usize) {
        let Edge { row, col, .. } = self.edges[e];
        let c = self.node_of_col(col);
        self.adjacency[row].push(e);
        self.adjacency[c].push(e);
    }
}

/// Optimal mean cost of moving `rows` equally weighted sources onto `cols` equally
/// weighted targets. `cost` is row-major `rows x cols`. `row_order` and `col_order`
/// are permutations used to seed the initial basis (northwest-corner rule along them).
pub fn transport_uniform(
    cost: &[f64],
    rows: usize,
    cols: usize,
    row_order: &[usize],
    col_order: &[usize],
) -> Result<f64> {
    assert_eq!(cost.len(), rows * cols);
    if rows == 0 || cols == 0 {
        return Err(Error::Metric("transport between empty sets".into()));
    }
    let g = gcd(rows, cols);
    let supply = (cols / g) as i64;
    let demand = (rows / g) as i64;

    let nodes = rows + cols;
    let mut tree = Tree {
        rows,
        edges: Vec::with_capacity(nodes - 1),
        adjacency: vec![Vec::new(); nodes],
        parent_edge: vec![usize::MAX; nodes],
        parent: vec![usize::MAX; nodes],
        depth: vec![0; nodes],
        potential: vec![0.0; nodes],
        queue: Vec::with_capacity(nodes),
    };

    let (mut ip, mut jp) = (0, 0);
    let (mut rs, mut rd) = (supply, demand);
    loop {
        let f = rs.min(rd);
        tree.edges.push(Edge {
            row: row_order[ip],
            col: col_order[jp],
            flow: f,
        });
        rs -= f;
        rd -= f;
        if ip == rows - 1 && jp == cols - 1 {
            break;
        }
        if rs == 0 && ip < rows - 1 {
            ip += 1;
            rs = supply;
        } else {
            jp += 1;
            rd = demand;
        }
    }
    for e in 0..tree.edges.len() {
        tree.attach(e);
    }
    tree.refresh(cost, cols);

    let max_cost = cost.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-11 * max_cost.max(f64::MIN_POSITIVE);
    let total_cells = rows * cols;
    let block = ((total_cells as f64).sqrt() as usize)
        .max(16)
        .min(total_cells);
    let max_pivots = 500 * nodes + 100_000;
    let mut cursor = 0usize;
    let mut minus: Vec<usize> = Vec::new();
    let mut plus: Vec<usize> = Vec::new();

    for _pivot in 0..max_pivots {
        // Block pricing: scan cyclically, stop at the end of the first block holding
        // a violating cell.
        let mut best = -tol;
        let mut entering = None;
        let mut scanned = 0;
        while scanned < total_cells {
            let stop = (scanned + block).min(total_cells);
            while scanned < stop {
                let k = cursor;
                cursor += 1;
                if cursor == total_cells {
                    cursor = 0;
                }
                scanned += 1;
                let r = k / cols;
                let c = k - r * cols;
                let reduced = cost[k] - tree.potential[r] - tree.potential[rows + c];
                if reduced < best {
                    best = reduced;
                    entering = Some((r, c));
                }
            }
            if entering.is_some() {
                break;
            }
        }
        let Some((er, ec)) = entering else {
            let total_flow = (rows as i64 * supply) as f64;
            let sum: f64 = tree
                .edges
                .iter()
                .map(|e| e.flow as f64 * cost[e.row * cols + e.col])
                .sum();
            return Ok(sum / total_flow);
        };

        // Cycle: entering edge (+), then the tree path from the column back to the row.
        minus.clear();
        plus.clear();
        let mut a = er;
        let mut b = tree.node_of_col(ec);
        while a != b {
            if tree.depth[a] >= tree.depth[b] {
                // row side, walked towards the apex
                let e = tree.parent_edge[a];
                if tree.is_row(a) {
                    minus.push(e);
                } else {
                    plus.push(e);
                }
                a = tree.parent[a];
            } else {
                let e = tree.parent_edge[b];
                if tree.is_row(b) {
                    plus.push(e);
                } else {
                    minus.push(e);
                }
                b = tree.parent[b];
            }
        }
        let mut leaving = minus[0];
        let mut theta = tree.edges[leaving].flow;
        for &e in &minus[1..] {
            if tree.edges[e].flow < theta {
                theta = tree.edges[e].flow;
                leaving = e;
            }
        }
        for &e in &minus {
            tree.edges[e].flow -= theta;
        }
        for &e in &plus {
            tree.edges[e].flow += theta;
        }
        tree.detach(leaving);
        tree.edges[leaving] = Edge {
            row: er,
            col: ec,
            flow: theta,
        };
        tree.attach(leaving);
        tree.refresh(cost, cols);
    }
    Err(Error::Metric(format!(
        "transport simplex did not converge within {max_pivots} pivots ({rows} x {cols})"
    )))
}
