//! Electrode layout, bipolar derivation and the channel graph.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::types::Recording;

/// The nine recording sites.
pub const ELECTRODES: [&str; 9] = ["Fp1", "Fp2", "C3", "C4", "Cz", "T3", "T4", "O1", "O2"];
/// Reference electrode of the referential recording.
pub const REFERENCE: &str = "Cz";
/// The eight digitized channels, each referenced to [`REFERENCE`], in wire order.
pub const RECORDED: [&str; 8] = ["Fp1", "Fp2", "C3", "C4", "T3", "T4", "O1", "O2"];
/// Default bipolar channel list, in model order.
pub const BIPOLAR_PAIRS: [(&str, &str); 12] = [
    ("Fp1", "T3"),
    ("T3", "O1"),
    ("Fp2", "T4"),
    ("T4", "O2"),
    ("Fp1", "C3"),
    ("C3", "O1"),
    ("Fp2", "C4"),
    ("C4", "O2"),
    ("T3", "C3"),
    ("C3", "Cz"),
    ("Cz", "C4"),
    ("C4", "T4"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeSet {
    labels: Vec<String>,
    positions: Vec<(f64, f64)>,
    reference: String,
}

impl ElectrodeSet {
    /// Projected 10-20 positions on the unit disc, nose at +y.
    pub fn standard() -> Self {
        let ring = |deg: f64| {
            let r = 0.8;
            let a = deg.to_radians();
            (r * a.cos(), r * a.sin())
        };
        let table = [
            ("Fp1", ring(108.0)),
            ("Fp2", ring(72.0)),
            ("C3", (-0.4, 0.0)),
            ("C4", (0.4, 0.0)),
            ("Cz", (0.0, 0.0)),
            ("T3", ring(180.0)),
            ("T4", ring(0.0)),
            ("O1", ring(252.0)),
            ("O2", ring(288.0)),
        ];
        Self {
            labels: table.iter().map(|(l, _)| l.to_string()).collect(),
            positions: table.iter().map(|(_, p)| *p).collect(),
            reference: REFERENCE.to_string(),
        }
    }

    pub fn new(labels: Vec<String>, positions: Vec<(f64, f64)>, reference: &str) -> Result<Self> {
        if labels.len() != 9 || positions.len() != 9 {
            return Err(Error::Montage(format!("expected 9 electrodes, got {}", labels.len())));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Montage(format!("duplicate electrode {l}")));
            }
        }
        if let Some((x, y)) = positions.iter().find(|(x, y)| !(x * x + y * y <= 1.0)) {
            return Err(Error::Montage(format!("position ({x}, {y}) outside the unit disc")));
        }
        if !labels.iter().any(|l| l == reference) {
            return Err(Error::Montage(format!("reference {reference} is not an electrode")));
        }
        Ok(Self { labels, positions, reference: reference.to_string() })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn reference(&self) -> &str {
        &self.reference
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn position(&self, label: &str) -> Option<(f64, f64)> {
        self.index(label).map(|i| self.positions[i])
    }

    /// Non-reference electrodes in set order.
    pub fn recorded(&self) -> Vec<&str> {
        self.labels.iter().filter(|l| **l != self.reference).map(String::as_str).collect()
    }
}

impl Default for ElectrodeSet {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MontageGraph {
    electrodes: ElectrodeSet,
    channels: Vec<(String, String)>,
    adjacency: Vec<Vec<bool>>,
}

impl MontageGraph {
    pub fn standard() -> Self {
        let pairs: Vec<(String, String)> =
            BIPOLAR_PAIRS.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        Self::new(ElectrodeSet::standard(), pairs).expect("built-in montage is valid")
    }

    pub fn new(electrodes: ElectrodeSet, channels: Vec<(String, String)>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Montage("montage has no channels".into()));
        }
        for (a, b) in &channels {
            for l in [a, b] {
                if electrodes.index(l).is_none() {
                    return Err(Error::Montage(format!("unknown electrode {l}")));
                }
            }
            if a == b {
                return Err(Error::Montage(format!("pair {a}-{b} uses one electrode twice")));
            }
        }
        let adjacency = shared_electrode_adjacency(&channels);
        let g = Self { electrodes, channels, adjacency };
        if !is_connected(&g.adjacency) {
            return Err(Error::Montage("channel graph is not connected".into()));
        }
        Ok(g)
    }

    /// One `ANODE-CATHODE` pair per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str, electrodes: ElectrodeSet) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (a, b) = line
                .split_once('-')
                .ok_or_else(|| Error::Montage(format!("line {}: expected ANODE-CATHODE, got {line:?}", n + 1)))?;
            pairs.push((a.trim().to_string(), b.trim().to_string()));
        }
        Self::new(electrodes, pairs)
    }

    pub fn to_text(&self) -> String {
        self.channel_names().into_iter().map(|n| n + "\n").collect()
    }

    pub fn electrodes(&self) -> &ElectrodeSet {
        &self.electrodes
    }

    pub fn channels(&self) -> &[(String, String)] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|(a, b)| format!("{a}-{b}")).collect()
    }

    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adjacency
    }

    /// Derives the bipolar channels from a matrix of referential rows laid
    /// out as [`ElectrodeSet::recorded`].
    pub fn derive_matrix(&self, raw: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let recorded = self.electrodes.recorded();
        if raw.nrows() != recorded.len() {
            return Err(Error::Shape(format!(
                "expected {} referential channels, got {}",
                recorded.len(),
                raw.nrows()
            )));
        }
        let row_of = |label: &str| recorded.iter().position(|l| *l == label);
        let mut out = Array2::zeros((self.channels.len(), raw.ncols()));
        for (c, (a, b)) in self.channels.iter().enumerate() {
            let mut row = out.row_mut(c);
            match (row_of(a), row_of(b)) {
                (Some(i), Some(j)) => row.assign(&(&raw.row(i) - &raw.row(j))),
                (Some(i), None) => row.assign(&raw.row(i)),
                (None, Some(j)) => row.assign(&raw.row(j).mapv(|v| -v)),
                (None, None) => {}
            }
        }
        Ok(out)
    }
}

impl Default for MontageGraph {
    fn default() -> Self {
        Self::standard()
    }
}

fn shared_electrode_adjacency(channels: &[(String, String)]) -> Vec<Vec<bool>> {
    let n = channels.len();
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = &channels[i];
            let (c, d) = &channels[j];
            adj[i][j] = a == c || a == d || b == c || b == d;
        }
    }
    adj
}

/// Channels are adjacent iff they share an electrode. Symmetric, zero diagonal.
pub fn build_adjacency(m: &MontageGraph) -> Vec<Vec<bool>> {
    shared_electrode_adjacency(&m.channels)
}

pub fn is_connected(adj: &[Vec<bool>]) -> bool {
    adj.is_empty() || reachable_within(adj, 0, adj.len()).iter().all(|&r| r)
}

fn reachable_within(adj: &[Vec<bool>], start: usize, hops: usize) -> Vec<bool> {
    let n = adj.len();
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut frontier = vec![start];
    for _ in 0..hops {
        let mut next = Vec::new();
        for &u in &frontier {
            for v in 0..n {
                if adj[u][v] && !seen[v] {
                    seen[v] = true;
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    seen
}

/// Fraction of nodes (the node itself included) reachable from each node by
/// a path of at most `hops` edges.
pub fn reachability(adj: &[Vec<bool>], hops: usize) -> Vec<f64> {
    let n = adj.len() as f64;
    (0..adj.len())
        .map(|i| reachable_within(adj, i, hops).iter().filter(|&&r| r).count() as f64 / n)
        .collect()
}

pub fn mean_reachability(adj: &[Vec<bool>], hops: usize) -> f64 {
    let r = reachability(adj, hops);
    r.iter().sum::<f64>() / r.len().max(1) as f64
}

/// Bipolar recording from an 8-channel referential one. Input channels are
/// matched by label against [`ElectrodeSet::recorded`].
pub fn derive_bipolar(raw8: &Recording, montage: &MontageGraph) -> Result<Recording> {
    let recorded = montage.electrodes.recorded();
    if raw8.n_channels() != recorded.len() {
        return Err(Error::Shape(format!(
            "expected {} referential channels, got {}",
            recorded.len(),
            raw8.n_channels()
        )));
    }
    let order: Vec<usize> = recorded
        .iter()
        .map(|l| {
            raw8.channel_index(l)
                .ok_or_else(|| Error::Montage(format!("recording lacks channel {l}")))
        })
        .collect::<Result<_>>()?;
    let reordered = raw8.data().select(ndarray::Axis(0), &order);
    let data = montage.derive_matrix(reordered.view())?;
    let mut out = Recording::new(raw8.fs_hz(), montage.channel_names(), data)?;
    out.meta = raw8.meta.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn raw_with(label: &str, value: f64, n: usize) -> Recording {
        let mut data = Array2::zeros((8, n));
        let i = RECORDED.iter().position(|l| *l == label).unwrap();
        data.row_mut(i).fill(value);
        Recording::new(250.0, RECORDED.iter().map(|s| s.to_string()).collect(), data).unwrap()
    }

    #[test]
    fn electrode_set_invariants() {
        let e = ElectrodeSet::standard();
        assert_eq!(e.labels().len(), 9);
        for (x, y) in e.positions() {
            assert!(x * x + y * y <= 1.0);
        }
        assert_eq!(e.recorded(), RECORDED.to_vec());
    }

    #[test]
    fn zero_in_zero_out() {
        let b = derive_bipolar(&raw_with("C3", 0.0, 10), &MontageGraph::standard()).unwrap();
        assert!(b.data().iter().all(|&v| v == 0.0));
        assert_eq!(b.n_channels(), 12);
    }

    #[test]
    fn single_electrode_hand_evaluation() {
        let m = MontageGraph::standard();
        let b = derive_bipolar(&raw_with("C3", 5.0, 4), &m).unwrap();
        let names = m.channel_names();
        for (c, name) in names.iter().enumerate() {
            let expected = match name.as_str() {
                "C3-Cz" | "C3-O1" => 5.0,
                "Fp1-C3" | "T3-C3" => -5.0,
                _ => 0.0,
            };
            assert!(b.data().row(c).iter().all(|&v| v == expected), "{name}");
        }
    }

    #[test]
    fn swapping_pair_negates() {
        let mut pairs: Vec<(String, String)> =
            BIPOLAR_PAIRS.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let raw = raw_with("T3", 3.0, 3);
        let a = derive_bipolar(&raw, &MontageGraph::new(ElectrodeSet::standard(), pairs.clone()).unwrap()).unwrap();
        let (x, y) = pairs[0].clone();
        pairs[0] = (y, x);
        let b = derive_bipolar(&raw, &MontageGraph::new(ElectrodeSet::standard(), pairs).unwrap()).unwrap();
        assert_eq!(a.data().row(0).mapv(|v| -v), b.data().row(0));
    }

    #[test]
    fn wrong_channel_count_errors() {
        let rec = Recording::new(250.0, vec!["Fp1".into()], Array2::zeros((1, 5))).unwrap();
        assert!(derive_bipolar(&rec, &MontageGraph::standard()).is_err());
    }

    #[test]
    fn adjacency_examples() {
        let m = MontageGraph::standard();
        let a = build_adjacency(&m);
        assert!(a[0][1]); // shared T3
        assert!(!a[0][6]); // Fp1-T3 vs Fp2-C4
        for i in 0..12 {
            assert!(!a[i][i]);
            for j in 0..12 {
                assert_eq!(a[i][j], a[j][i]);
            }
        }
        assert!(is_connected(&a));
    }

    #[test]
    fn each_electrode_in_two_channels() {
        let m = MontageGraph::standard();
        for e in ELECTRODES {
            let n = m.channels().iter().filter(|(a, b)| a == e || b == e).count();
            assert!(n >= 2, "{e}");
        }
    }

    #[test]
    fn third_order_reachability() {
        let a = build_adjacency(&MontageGraph::standard());
        let mean = mean_reachability(&a, 3);
        assert!((mean - 112.0 / 144.0).abs() < 1e-12);
        assert!(mean >= 0.75);
        assert!(reachability(&a, 11).iter().all(|&r| r == 1.0));
    }

    #[test]
    fn text_round_trip() {
        let m = MontageGraph::standard();
        let back = MontageGraph::parse(&m.to_text(), ElectrodeSet::standard()).unwrap();
        assert_eq!(back, m);
        assert!(MontageGraph::parse("Fp1-Xx\n", ElectrodeSet::standard()).is_err());
        assert!(MontageGraph::parse("Fp1 T3\n", ElectrodeSet::standard()).is_err());
        assert!(MontageGraph::parse("Fp1-T3\nFp2-T4\n", ElectrodeSet::standard()).is_err());
    }

    proptest! {
        #[test]
        fn derivation_is_linear(
            x in proptest::collection::vec(-1000i32..1000, 8 * 6),
            y in proptest::collection::vec(-1000i32..1000, 8 * 6),
            alpha in -8i32..8,
            beta in -8i32..8,
        ) {
            // Small integers keep every intermediate exact in binary floating point.
            let m = MontageGraph::standard();
            let xa = Array2::from_shape_vec((8, 6), x.iter().map(|&v| v as f64).collect()).unwrap();
            let ya = Array2::from_shape_vec((8, 6), y.iter().map(|&v| v as f64).collect()).unwrap();
            let combo = &xa * alpha as f64 + &ya * beta as f64;
            let lhs = m.derive_matrix(combo.view()).unwrap();
            let rhs = m.derive_matrix(xa.view()).unwrap() * alpha as f64
                + m.derive_matrix(ya.view()).unwrap() * beta as f64;
            prop_assert_eq!(lhs, rhs);
        }
    }
}
