//! Random networks on a square and protocol-model checks for 9-TDMA.
//!
//! A transmission from `i` to `j` succeeds when every other active
//! transmitter `k` satisfies `d(j, k) ≥ (1 + γ) d(j, i)` (Euclidean).

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{AoiError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn scaled(self, c: f64) -> Point {
        Point::new(self.x * c, self.y * c)
    }
}

/// Square partition: `cells_per_side²` cells, each split into
/// `subcells_per_side²` subcells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub cells_per_side: usize,
    pub subcells_per_side: usize,
}

impl GridSpec {
    pub fn new(cells_per_side: usize, subcells_per_side: usize) -> Result<Self> {
        if cells_per_side == 0 || subcells_per_side == 0 {
            return Err(AoiError::Network("grid side counts must be >= 1".into()));
        }
        Ok(GridSpec {
            cells_per_side,
            subcells_per_side,
        })
    }

    /// Side count of the global subcell grid.
    pub fn fine_side(&self) -> usize {
        self.cells_per_side * self.subcells_per_side
    }

    fn side_at(&self, level: GridLevel) -> usize {
        match level {
            GridLevel::Cell => self.cells_per_side,
            GridLevel::Subcell => self.fine_side(),
        }
    }
}

/// Cell coordinates `(row, col)`; row grows with `y`, col with `x`.
pub type CellIndex = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    area_side: f64,
    positions: Vec<Point>,
    pairing: Vec<usize>,
    grid: GridSpec,
}

impl Network {
    pub fn new(area_side: f64, positions: Vec<Point>, pairing: Vec<usize>, grid: GridSpec) -> Result<Self> {
        if !(area_side.is_finite() && area_side > 0.0) {
            return Err(AoiError::Network(format!(
                "area side must be positive, got {area_side}"
            )));
        }
        if positions.len() != pairing.len() {
            return Err(AoiError::Network("positions and pairing lengths differ".into()));
        }
        let inside = |v: f64| (0.0..=area_side).contains(&v);
        if let Some(p) = positions.iter().find(|p| !(inside(p.x) && inside(p.y))) {
            return Err(AoiError::Network(format!(
                "point ({}, {}) outside the square",
                p.x, p.y
            )));
        }
        let mut seen = vec![false; pairing.len()];
        for (i, &d) in pairing.iter().enumerate() {
            if d >= pairing.len() || seen[d] {
                return Err(AoiError::Network("pairing is not a permutation".into()));
            }
            if d == i {
                return Err(AoiError::Network(format!("node {i} is paired with itself")));
            }
            seen[d] = true;
        }
        Ok(Network {
            area_side,
            positions,
            pairing,
            grid,
        })
    }

    pub fn area_side(&self) -> f64 {
        self.area_side
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn pairing(&self) -> &[usize] {
        &self.pairing
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn cell_width(&self) -> f64 {
        self.area_side / self.grid.cells_per_side as f64
    }

    pub fn cell_of(&self, p: Point) -> CellIndex {
        self.index_at(p, self.grid.cells_per_side)
    }

    /// Subcell in the global fine grid.
    pub fn subcell_of(&self, p: Point) -> CellIndex {
        self.index_at(p, self.grid.fine_side())
    }

    fn index_at(&self, p: Point, side: usize) -> CellIndex {
        let w = self.area_side / side as f64;
        let clamp = |v: f64| ((v / w).floor() as usize).min(side - 1);
        (clamp(p.y), clamp(p.x))
    }

    /// Node counts per cell, row-major.
    pub fn cell_counts(&self) -> Vec<usize> {
        let k = self.grid.cells_per_side;
        let mut counts = vec![0; k * k];
        for &p in &self.positions {
            let (r, c) = self.cell_of(p);
            counts[r * k + c] += 1;
        }
        counts
    }

    /// Same network with every length multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Network> {
        let positions = self.positions.iter().map(|p| p.scaled(c)).collect();
        Network::new(self.area_side * c, positions, self.pairing.clone(), self.grid)
    }

    /// Writes `node_id,x,y,dest_id` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "node_id,x,y,dest_id")?;
        for (i, (p, d)) in self.positions.iter().zip(&self.pairing).enumerate() {
            writeln!(out, "{i},{},{},{d}", p.x, p.y)?;
        }
        Ok(())
    }
}

/// Places `n` nodes uniformly on `[0, area_side]²` and pairs them by a uniform
/// derangement.
pub fn generate_network<R: Rng + ?Sized>(n: usize, area_side: f64, grid: GridSpec, rng: &mut R) -> Result<Network> {
    if n < 2 {
        return Err(AoiError::Network(format!("need at least 2 nodes, got {n}")));
    }
    if !(area_side.is_finite() && area_side > 0.0) {
        return Err(AoiError::Network(format!(
            "area side must be positive, got {area_side}"
        )));
    }
    let positions = (0..n)
        .map(|_| Point::new(rng.random::<f64>() * area_side, rng.random::<f64>() * area_side))
        .collect();
    Network::new(area_side, positions, random_derangement(n, rng), grid)
}

/// Uniform fixed-point-free permutation by rejection (about `e` shuffles).
pub fn random_derangement<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &d)| i != d) {
            return perm;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub transmitter: Point,
    pub receiver: Point,
}

/// Simultaneously active links under guard constant `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    links: Vec<Link>,
    gamma: f64,
}

impl ActivationSet {
    pub fn new(links: Vec<Link>, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(AoiError::Network(format!("gamma must be finite and >= 0, got {gamma}")));
        }
        for (i, a) in links.iter().enumerate() {
            if links[..i].contains(a) {
                return Err(AoiError::Network("duplicate link in activation set".into()));
            }
        }
        Ok(ActivationSet { links, gamma })
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// One failed inequality `d(receiver, interferer) ≥ (1 + γ) d(receiver, transmitter)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub link: Link,
    pub interferer: Point,
    /// `d(receiver, interferer)`.
    pub interferer_distance: f64,
    /// `(1 + γ) d(receiver, transmitter)`.
    pub required: f64,
}

/// Checks one receiver against a list of interfering transmitters.
pub fn check_receiver(link: Link, interferers: &[Point], gamma: f64) -> Vec<Violation> {
    let required = (1.0 + gamma) * link.receiver.dist(link.transmitter);
    interferers
        .iter()
        .filter_map(|&k| {
            let d = link.receiver.dist(k);
            (d < required).then_some(Violation {
                link,
                interferer: k,
                interferer_distance: d,
                required,
            })
        })
        .collect()
}

/// Every violating (link, interferer) pair in the set.
pub fn check_protocol_model(set: &ActivationSet) -> Vec<Violation> {
    let links = set.links();
    links
        .iter()
        .enumerate()
        .flat_map(|(i, &link)| {
            let others: Vec<Point> = links
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, l)| l.transmitter)
                .collect();
            check_receiver(link, &others, set.gamma())
        })
        .collect()
}

/// Cells grouped by `(row mod 3, col mod 3)`, group index `3·(row mod 3) + col mod 3`.
pub fn nine_tdma_schedule(side: usize) -> Vec<Vec<CellIndex>> {
    let mut groups = vec![Vec::new(); 9];
    for r in 0..side {
        for c in 0..side {
            groups[3 * (r % 3) + c % 3].push((r, c));
        }
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridLevel {
    Cell,
    Subcell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinkPlacement {
    /// Links across opposite corners, interferers at the nearest point of
    /// each other active cell.
    #[default]
    WorstCase,
    /// Farthest pair of actual nodes inside each active cell.
    Positions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotViolation {
    pub level: GridLevel,
    pub slot: usize,
    pub cell: CellIndex,
    pub violation: Violation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdmaVerdict {
    pub gamma: f64,
    /// Receivers checked across both levels.
    pub links_checked: usize,
    pub violations: Vec<SlotViolation>,
}

impl TdmaVerdict {
    pub fn feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations_at(&self, level: GridLevel) -> usize {
        self.violations.iter().filter(|v| v.level == level).count()
    }
}

/// Runs every 9-TDMA slot at cell level and at subcell level (subcells of
/// the whole square scheduled on their own global grid).
pub fn validate_tdma_against_protocol(net: &Network, gamma: f64, placement: LinkPlacement) -> Result<TdmaVerdict> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(AoiError::Network(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    let mut verdict = TdmaVerdict {
        gamma,
        links_checked: 0,
        violations: Vec::new(),
    };
    for level in [GridLevel::Cell, GridLevel::Subcell] {
        let side = net.grid.side_at(level);
        let width = net.area_side / side as f64;
        for (slot, cells) in nine_tdma_schedule(side).into_iter().enumerate() {
            let mut push = |cell, vs: Vec<Violation>| {
                verdict.violations.extend(vs.into_iter().map(|violation| SlotViolation {
                    level,
                    slot,
                    cell,
                    violation,
                }));
            };
            match placement {
                LinkPlacement::WorstCase => {
                    for &cell in &cells {
                        for link in corner_links(cell, width) {
                            let interferers: Vec<Point> = cells
                                .iter()
                                .filter(|&&o| o != cell)
                                .map(|&o| nearest_point_of_cell(o, width, link.receiver))
                                .collect();
                            verdict.links_checked += 1;
                            push(cell, check_receiver(link, &interferers, gamma));
                        }
                    }
                }
                LinkPlacement::Positions => {
                    let active: Vec<(CellIndex, Link)> = cells
                        .iter()
                        .filter_map(|&cell| farthest_pair_link(net, level, cell).map(|l| (cell, l)))
                        .collect();
                    for (i, &(cell, link)) in active.iter().enumerate() {
                        let others: Vec<Point> = active
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != i)
                            .map(|(_, (_, l))| l.transmitter)
                            .collect();
                        verdict.links_checked += 1;
                        push(cell, check_receiver(link, &others, gamma));
                    }
                }
            }
        }
    }
    Ok(verdict)
}

fn cell_corners((r, c): CellIndex, w: f64) -> [Point; 4] {
    let (x0, y0) = (c as f64 * w, r as f64 * w);
    [
        Point::new(x0, y0),
        Point::new(x0 + w, y0),
        Point::new(x0 + w, y0 + w),
        Point::new(x0, y0 + w),
    ]
}

/// The four diagonal links of a cell, receiver at each corner. Length `√2·w`.
///
/// The nearest other cell of the same slot is three cells over, so its
/// closest point lies `2w` from a receiver on the facing corner and the
/// distance ratio is `2w / (√2·w) = √2`: feasible exactly when `γ ≤ √2 − 1`.
fn corner_links(cell: CellIndex, w: f64) -> [Link; 4] {
    let k = cell_corners(cell, w);
    std::array::from_fn(|i| Link {
        receiver: k[i],
        transmitter: k[(i + 2) % 4],
    })
}

fn nearest_point_of_cell((r, c): CellIndex, w: f64, p: Point) -> Point {
    let (x0, y0) = (c as f64 * w, r as f64 * w);
    Point::new(p.x.clamp(x0, x0 + w), p.y.clamp(y0, y0 + w))
}

/// Link between the two farthest nodes of a cell, lower node id transmitting.
fn farthest_pair_link(net: &Network, level: GridLevel, cell: CellIndex) -> Option<Link> {
    let members: Vec<Point> = net
        .positions
        .iter()
        .copied()
        .filter(|&p| match level {
            GridLevel::Cell => net.cell_of(p) == cell,
            GridLevel::Subcell => net.subcell_of(p) == cell,
        })
        .collect();
    let mut best: Option<(f64, Link)> = None;
    for (i, &a) in members.iter().enumerate() {
        for &b in &members[i + 1..] {
            let d = a.dist(b);
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((
                    d,
                    Link {
                        transmitter: a,
                        receiver: b,
                    },
                ));
            }
        }
    }
    best.map(|(_, l)| l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trial_rng;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    fn grid(k: usize, s: usize) -> GridSpec {
        GridSpec::new(k, s).unwrap()
    }

    fn worst_case(k: usize, s: usize) -> Network {
        let mut rng = trial_rng(0, 0);
        generate_network(2, k as f64, grid(k, s), &mut rng).unwrap()
    }

    #[test]
    fn two_nodes_swap() {
        for seed in 0..20 {
            let net = generate_network(2, 1.0, grid(1, 1), &mut trial_rng(seed, 0)).unwrap();
            assert_eq!(net.pairing(), &[1, 0]);
        }
    }

    #[test]
    fn replay_is_identical() {
        let a = generate_network(500, 3.0, grid(5, 2), &mut trial_rng(7, 1)).unwrap();
        let b = generate_network(500, 3.0, grid(5, 2), &mut trial_rng(7, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn occupancy_is_even() {
        let mut nonempty_runs = 0;
        let mut total_mean = 0.0;
        for seed in 0..100 {
            let net = generate_network(10_000, 1.0, grid(10, 1), &mut trial_rng(seed, 0)).unwrap();
            let counts = net.cell_counts();
            total_mean += counts.iter().sum::<usize>() as f64 / counts.len() as f64;
            nonempty_runs += counts.iter().all(|&c| c > 0) as usize;
        }
        assert_eq!(total_mean / 100.0, 100.0);
        assert!(nonempty_runs >= 99);
    }

    #[test]
    fn cells_and_subcells_from_position() {
        let net = worst_case(4, 3);
        assert_eq!(net.cell_of(Point::new(0.0, 0.0)), (0, 0));
        assert_eq!(net.cell_of(Point::new(3.5, 1.2)), (1, 3));
        assert_eq!(net.cell_of(Point::new(4.0, 4.0)), (3, 3));
        assert_eq!(net.subcell_of(Point::new(3.5, 1.2)), (3, 10));
    }

    #[test]
    fn rejects_bad_networks() {
        let g = grid(1, 1);
        let pts = vec![Point::new(0.1, 0.1), Point::new(0.5, 0.5)];
        assert!(Network::new(1.0, pts.clone(), vec![0, 1], g).is_err());
        assert!(Network::new(1.0, pts.clone(), vec![1, 1], g).is_err());
        assert!(Network::new(0.4, pts, vec![1, 0], g).is_err());
        assert!(generate_network(1, 1.0, g, &mut trial_rng(0, 0)).is_err());
        assert!(GridSpec::new(0, 1).is_err());
    }

    #[test]
    fn protocol_model_examples() {
        let link = Link {
            transmitter: Point::new(1.0, 0.0),
            receiver: Point::new(0.0, 0.0),
        };
        let single = ActivationSet::new(vec![link], 0.41).unwrap();
        assert!(check_protocol_model(&single).is_empty());
        assert_eq!(check_receiver(link, &[Point::new(0.0, 1.3)], 0.41).len(), 1);
        assert!(check_receiver(link, &[Point::new(0.0, 1.5)], 0.41).is_empty());
    }

    #[test]
    fn activation_set_validation() {
        let link = Link {
            transmitter: Point::new(1.0, 0.0),
            receiver: Point::new(0.0, 0.0),
        };
        assert!(ActivationSet::new(vec![link, link], 0.1).is_err());
        assert!(ActivationSet::new(vec![link], -0.1).is_err());
    }

    #[test]
    fn pairwise_check_sees_both_receivers() {
        let a = Link {
            transmitter: Point::new(0.0, 0.0),
            receiver: Point::new(1.0, 0.0),
        };
        let b = Link {
            transmitter: Point::new(2.0, 0.0),
            receiver: Point::new(3.0, 0.0),
        };
        let set = ActivationSet::new(vec![a, b], 0.5).unwrap();
        // a's receiver is 1 from b's transmitter; b's receiver is 3 from a's
        let v = check_protocol_model(&set);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].link, a);
    }

    #[test]
    fn schedule_shapes() {
        let g3 = nine_tdma_schedule(3);
        assert!(g3.iter().all(|g| g.len() == 1));
        assert!(nine_tdma_schedule(6).iter().all(|g| g.len() == 4));
        let g1 = nine_tdma_schedule(1);
        assert_eq!(g1.iter().filter(|g| !g.is_empty()).count(), 1);
    }

    #[test]
    fn schedule_partitions_and_separates() {
        for side in 1..=13 {
            let groups = nine_tdma_schedule(side);
            let mut all: Vec<CellIndex> = groups.concat();
            all.sort();
            all.dedup();
            assert_eq!(all.len(), side * side);
            assert_eq!(groups.iter().map(Vec::len).sum::<usize>(), side * side);
            for g in &groups {
                for (i, a) in g.iter().enumerate() {
                    for b in &g[i + 1..] {
                        let cheb = a.0.abs_diff(b.0).max(a.1.abs_diff(b.1));
                        assert!(cheb >= 3);
                    }
                }
            }
        }
    }

    #[test]
    fn worst_case_threshold() {
        for k in 3..=12 {
            let net = worst_case(k, 1);
            let ok = validate_tdma_against_protocol(&net, SQRT_2 - 1.0 - 1e-6, LinkPlacement::WorstCase).unwrap();
            assert!(ok.feasible(), "k = {k}");
            let tight = validate_tdma_against_protocol(&net, SQRT_2 - 1.0 + 1e-6, LinkPlacement::WorstCase).unwrap();
            assert_eq!(tight.feasible(), k < 4, "k = {k}");
        }
    }

    #[test]
    fn subcell_level_matches_cell_level() {
        let gamma_ok = SQRT_2 - 1.0 - 1e-6;
        for s in 1..=4 {
            let net = worst_case(6, s);
            let v = validate_tdma_against_protocol(&net, gamma_ok, LinkPlacement::WorstCase).unwrap();
            assert!(v.feasible());
            let bad = validate_tdma_against_protocol(&net, 1.0, LinkPlacement::WorstCase).unwrap();
            assert!(bad.violations_at(GridLevel::Cell) > 0);
            assert!(bad.violations_at(GridLevel::Subcell) > 0);
            // worst ratio at both levels is √2
            for sv in &bad.violations {
                let link = sv.violation.link;
                let ratio = sv.violation.interferer_distance / link.receiver.dist(link.transmitter);
                assert!(ratio >= SQRT_2 - 1e-9);
            }
        }
    }

    #[test]
    fn three_by_three_needs_subcells_for_interference() {
        let v = validate_tdma_against_protocol(&worst_case(3, 1), 1.0, LinkPlacement::WorstCase).unwrap();
        assert!(v.feasible());
        let v = validate_tdma_against_protocol(&worst_case(3, 2), 1.0, LinkPlacement::WorstCase).unwrap();
        assert!(!v.feasible());
        assert_eq!(v.violations_at(GridLevel::Cell), 0);
    }

    #[test]
    fn zero_gamma_with_worst_case_is_feasible() {
        let v = validate_tdma_against_protocol(&worst_case(9, 3), 0.0, LinkPlacement::WorstCase).unwrap();
        assert!(v.feasible());
    }

    #[test]
    fn actual_positions_never_beat_worst_case() {
        for seed in 0..10 {
            let net = generate_network(2000, 1.0, grid(9, 2), &mut trial_rng(seed, 0)).unwrap();
            let v = validate_tdma_against_protocol(&net, SQRT_2 - 1.0 - 1e-6, LinkPlacement::Positions).unwrap();
            assert!(v.feasible());
            assert!(v.links_checked > 0);
        }
    }

    #[test]
    fn csv_export() {
        let net = generate_network(3, 1.0, grid(1, 1), &mut trial_rng(1, 0)).unwrap();
        let mut buf = Vec::new();
        net.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "node_id,x,y,dest_id");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("1,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn verdicts_are_scale_invariant(seed in 0u64..1000, c in 0.01f64..100.0, gamma in 0.0f64..1.5) {
            let net = generate_network(300, 1.0, grid(6, 2), &mut trial_rng(seed, 0)).unwrap();
            let big = net.scaled(c).unwrap();
            for mode in [LinkPlacement::WorstCase, LinkPlacement::Positions] {
                let a = validate_tdma_against_protocol(&net, gamma, mode).unwrap();
                let b = validate_tdma_against_protocol(&big, gamma, mode).unwrap();
                prop_assert_eq!(a.violations.len(), b.violations.len());
            }
        }

        #[test]
        fn pairing_is_derangement(seed in any::<u64>(), n in 2usize..200) {
            let p = random_derangement(n, &mut trial_rng(seed, 0));
            let mut sorted = p.clone();
            sorted.sort();
            prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
            prop_assert!(p.iter().enumerate().all(|(i, &d)| i != d));
        }
    }
}
