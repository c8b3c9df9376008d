//! Linear-elastic space truss: geometry file parser, stiffness assembly and
//! a static solve for nodal displacements.
//!
//! The geometry format is documented at the top of `data/truss25.txt`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{check_dim, Model};
use crate::error::{Error, Result};
use crate::rv::{lognormal_from_mean_cov, MarginalSpec, RandomVectorSpec};

/// The bundled 25-bar space truss, in inches / lbf / psi.
pub const TRUSS25_GEOMETRY: &str = include_str!("../../data/truss25.txt");

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointLoad {
    pub node: usize,
    pub dof: usize,
    pub sign: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrussGeometry {
    pub nodes: Vec<[f64; 3]>,
    pub elements: Vec<(usize, usize)>,
    /// `fixed[3 * node + dof]`
    pub fixed: Vec<bool>,
    /// Indexed by load id − 1.
    pub loads: Vec<PointLoad>,
    pub monitors: Vec<(usize, usize)>,
}

fn parse_dof(s: &str, line: usize) -> Result<usize> {
    match s {
        "x" => Ok(0),
        "y" => Ok(1),
        "z" => Ok(2),
        _ => Err(Error::Config(format!("line {line}: unknown dof '{s}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Config(format!("line {line}: invalid {what} '{s}'")))
}

fn place<T: Clone>(slot: &mut Vec<Option<T>>, id: usize, v: T, line: usize, what: &str) -> Result<()> {
    if id == 0 {
        return Err(Error::Config(format!("line {line}: {what} ids are 1-based")));
    }
    if slot.len() < id {
        slot.resize(id, None);
    }
    if slot[id - 1].is_some() {
        return Err(Error::Config(format!("line {line}: duplicate {what} {id}")));
    }
    slot[id - 1] = Some(v);
    Ok(())
}

fn dense<T>(slot: Vec<Option<T>>, what: &str) -> Result<Vec<T>> {
    slot.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::Config(format!("missing {what} {}", i + 1))))
        .collect()
}

impl TrussGeometry {
    pub fn truss25() -> Self {
        Self::parse(TRUSS25_GEOMETRY).expect("bundled truss geometry is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::parse(&text).map_err(|e| e.context(format!("{}", path.as_ref().display())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut elements = Vec::new();
        let mut loads = Vec::new();
        let mut supports = Vec::new();
        let mut monitors = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let f: Vec<&str> = body.split_whitespace().collect();
            let want = |n: usize| -> Result<()> {
                if f.len() == n {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "line {line}: '{}' expects {} fields, got {}",
                        f[0],
                        n - 1,
                        f.len() - 1
                    )))
                }
            };
            match f[0] {
                "node" => {
                    want(5)?;
                    let id: usize = parse_num(f[1], line, "node id")?;
                    let c = [
                        parse_num(f[2], line, "coordinate")?,
                        parse_num(f[3], line, "coordinate")?,
                        parse_num(f[4], line, "coordinate")?,
                    ];
                    place(&mut nodes, id, c, line, "node")?;
                }
                "element" => {
                    want(4)?;
                    let id: usize = parse_num(f[1], line, "element id")?;
                    let a: usize = parse_num(f[2], line, "node id")?;
                    let b: usize = parse_num(f[3], line, "node id")?;
                    place(&mut elements, id, (a, b), line, "element")?;
                }
                "support" => {
                    want(3)?;
                    let node: usize = parse_num(f[1], line, "node id")?;
                    for ch in f[2].chars() {
                        supports.push((node, parse_dof(&ch.to_string(), line)?, line));
                    }
                }
                "load" => {
                    want(5)?;
                    let id: usize = parse_num(f[1], line, "load id")?;
                    let node: usize = parse_num(f[2], line, "node id")?;
                    let dof = parse_dof(f[3], line)?;
                    let sign: f64 = parse_num(f[4], line, "load sign")?;
                    place(&mut loads, id, (node, dof, sign, line), line, "load")?;
                }
                "monitor" => {
                    want(3)?;
                    let node: usize = parse_num(f[1], line, "node id")?;
                    monitors.push((node, parse_dof(f[2], line)?, line));
                }
                other => {
                    return Err(Error::Config(format!("line {line}: unknown record '{other}'")));
                }
            }
        }

        let nodes = dense(nodes, "node")?;
        let n = nodes.len();
        let node_ok = |id: usize, line: usize| -> Result<usize> {
            if id >= 1 && id <= n {
                Ok(id - 1)
            } else {
                Err(Error::Config(format!("line {line}: node {id} is not defined")))
            }
        };
        let elements = elements
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                let (a, b) = e.ok_or_else(|| Error::Config(format!("missing element {}", i + 1)))?;
                if a == b {
                    return Err(Error::Config(format!("element {} connects node {a} to itself", i + 1)));
                }
                Ok((node_ok(a, 0)?, node_ok(b, 0)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut fixed = vec![false; 3 * n];
        for (node, dof, line) in supports {
            fixed[3 * node_ok(node, line)? + dof] = true;
        }
        let loads = dense(loads, "load")?
            .into_iter()
            .map(|(node, dof, sign, line)| {
                Ok(PointLoad {
                    node: node_ok(node, line)?,
                    dof,
                    sign,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let monitors = monitors
            .into_iter()
            .map(|(node, dof, line)| Ok((node_ok(node, line)?, dof)))
            .collect::<Result<Vec<_>>>()?;

        if elements.is_empty() {
            return Err(Error::Config("truss has no elements".into()));
        }
        if monitors.is_empty() {
            return Err(Error::Config("truss has no monitored dof".into()));
        }
        Ok(TrussGeometry {
            nodes,
            elements,
            fixed,
            loads,
            monitors,
        })
    }

    pub fn n_loads(&self) -> usize {
        self.loads.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Length of the model input vector `[P.., E.., A..]`.
    pub fn input_dim(&self) -> usize {
        self.n_loads() + 2 * self.n_elements()
    }

    pub fn length(&self, element: usize) -> f64 {
        let (a, b) = self.elements[element];
        let (pa, pb) = (self.nodes[a], self.nodes[b]);
        ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2) + (pb[2] - pa[2]).powi(2)).sqrt()
    }

    /// Global stiffness over all `3 × nodes` dofs, supports not applied.
    pub fn stiffness(&self, modulus: &[f64], area: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.n_elements(), modulus.len())?;
        check_dim(self.n_elements(), area.len())?;
        let ndof = 3 * self.nodes.len();
        let mut k = DMatrix::zeros(ndof, ndof);
        for (e, &(a, b)) in self.elements.iter().enumerate() {
            let (ee, ae) = (modulus[e], area[e]);
            if !(ee > 0.0) || !(ae > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "element {} needs E > 0 and A > 0, got E={ee}, A={ae}",
                    e + 1
                )));
            }
            let len = self.length(e);
            let (pa, pb) = (self.nodes[a], self.nodes[b]);
            let c = [
                (pb[0] - pa[0]) / len,
                (pb[1] - pa[1]) / len,
                (pb[2] - pa[2]) / len,
            ];
            let s = ee * ae / len;
            for i in 0..3 {
                for j in 0..3 {
                    let v = s * c[i] * c[j];
                    k[(3 * a + i, 3 * a + j)] += v;
                    k[(3 * b + i, 3 * b + j)] += v;
                    k[(3 * a + i, 3 * b + j)] -= v;
                    k[(3 * b + i, 3 * a + j)] -= v;
                }
            }
        }
        Ok(k)
    }

    /// Solves `K u = f` on the free dofs; returns displacements for all dofs.
    pub fn displacements(&self, loads: &[f64], modulus: &[f64], area: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_loads(), loads.len())?;
        let k = self.stiffness(modulus, area)?;
        let free: Vec<usize> = (0..self.fixed.len()).filter(|&d| !self.fixed[d]).collect();
        let nf = free.len();
        let mut f_full = vec![0.0; self.fixed.len()];
        for (p, l) in loads.iter().zip(&self.loads) {
            f_full[3 * l.node + l.dof] += l.sign * p;
        }
        let kr = DMatrix::from_fn(nf, nf, |i, j| k[(free[i], free[j])]);
        let fr = DVector::from_fn(nf, |i, _| f_full[free[i]]);
        let chol = kr
            .cholesky()
            .ok_or_else(|| Error::Solver("stiffness matrix is singular (mechanism)".into()))?;
        let ur = chol.solve(&fr);
        let mut u = vec![0.0; self.fixed.len()];
        for (i, &d) in free.iter().enumerate() {
            u[d] = ur[i];
        }
        Ok(u)
    }

    /// Input distributions for the bundled 25-bar truss: lognormal loads and
    /// moduli, Gaussian areas (mean, c.o.v.) by member group.
    pub fn truss25_inputs() -> Result<RandomVectorSpec> {
        let mut m: Vec<MarginalSpec> = Vec::with_capacity(57);
        m.push(lognormal_from_mean_cov(1000.0, 0.1)?);
        for _ in 0..4 {
            m.push(lognormal_from_mean_cov(10_000.0, 0.05)?);
        }
        m.push(lognormal_from_mean_cov(600.0, 0.1)?);
        m.push(lognormal_from_mean_cov(500.0, 0.1)?);
        for _ in 0..25 {
            m.push(lognormal_from_mean_cov(1e7, 0.05)?);
        }
        let groups: [(usize, f64); 8] = [
            (1, 0.4),
            (4, 0.1),
            (4, 3.4),
            (2, 0.4),
            (2, 1.3),
            (4, 0.9),
            (4, 1.0),
            (4, 3.4),
        ];
        for (count, mean) in groups {
            for _ in 0..count {
                m.push(MarginalSpec::gaussian(mean, 0.1 * mean)?);
            }
        }
        RandomVectorSpec::new(m)
    }
}

/// `y = max |u|` over the monitored dofs, with `x = [P.., E.., A..]`.
#[derive(Clone, Debug)]
pub struct TrussModel {
    geometry: TrussGeometry,
}

impl TrussModel {
    pub fn new(geometry: TrussGeometry) -> Self {
        TrussModel { geometry }
    }

    pub fn geometry(&self) -> &TrussGeometry {
        &self.geometry
    }

    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let l = self.geometry.n_loads();
        let m = self.geometry.n_elements();
        (&x[..l], &x[l..l + m], &x[l + m..])
    }

    pub fn displacements(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.geometry.input_dim(), x.len())?;
        let (p, e, a) = self.split(x);
        self.geometry.displacements(p, e, a)
    }
}

impl Model for TrussModel {
    fn name(&self) -> &str {
        "truss"
    }

    fn dimension(&self) -> usize {
        self.geometry.input_dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let u = self.displacements(x)?;
        Ok(self
            .geometry
            .monitors
            .iter()
            .map(|&(n, d)| u[3 * n + d].abs())
            .fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BAR: &str = "
        node 1 0 0 0
        node 2 120 0 0
        element 1 1 2
        support 1 xyz
        support 2 yz
        load 1 2 x 1
        monitor 2 x
    ";

    fn mean_input(spec: &RandomVectorSpec) -> Vec<f64> {
        spec.means()
    }

    #[test]
    fn single_bar_matches_pl_over_ea() {
        let m = TrussModel::new(TrussGeometry::parse(BAR).unwrap());
        let (p, e, a) = (2500.0, 2.9e7, 0.75);
        let u = m.value(&[p, e, a]).unwrap();
        let want = p * 120.0 / (e * a);
        assert!((u - want).abs() <= 1e-15 * want.max(1.0), "{u} vs {want}");
    }

    #[test]
    fn zero_loads_give_zero_response() {
        let m = TrussModel::new(TrussGeometry::truss25());
        let spec = TrussGeometry::truss25_inputs().unwrap();
        let mut x = mean_input(&spec);
        for v in &mut x[..7] {
            *v = 0.0;
        }
        assert_eq!(m.value(&x).unwrap(), 0.0);
    }

    #[test]
    fn scaling_stiffness_scales_displacements() {
        let m = TrussModel::new(TrussGeometry::truss25());
        let spec = TrussGeometry::truss25_inputs().unwrap();
        let x = mean_input(&spec);
        let u0 = m.displacements(&x).unwrap();
        let c = 2.0;
        let mut xs = x.clone();
        for v in &mut xs[7..] {
            *v *= c;
        }
        let u1 = m.displacements(&xs).unwrap();
        // E·A scales by c², displacements by 1/c².
        for (a, b) in u0.iter().zip(&u1) {
            assert!((a / (c * c) - b).abs() <= 1e-12 * a.abs().max(1e-12));
        }
        let mut xe = x.clone();
        for v in &mut xe[7..32] {
            *v *= c;
        }
        let u2 = m.displacements(&xe).unwrap();
        for (a, b) in u0.iter().zip(&u2) {
            assert!((a / c - b).abs() <= 1e-12 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn stiffness_symmetric_and_pd_on_free_dofs() {
        let g = TrussGeometry::truss25();
        let spec = TrussGeometry::truss25_inputs().unwrap();
        let x = spec.means();
        let k = g.stiffness(&x[7..32], &x[32..]).unwrap();
        let asym = (&k - k.transpose()).norm();
        assert!(asym <= 1e-10 * k.norm());
        let free: Vec<usize> = (0..30).filter(|&d| !g.fixed[d]).collect();
        assert_eq!(free.len(), 18);
        let kr = DMatrix::from_fn(18, 18, |i, j| k[(free[i], free[j])]);
        let eig = kr.symmetric_eigenvalues();
        assert!(eig.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn mean_response_is_dominated_by_horizontal_top_displacement() {
        let m = TrussModel::new(TrussGeometry::truss25());
        let spec = TrussGeometry::truss25_inputs().unwrap();
        let u = m.displacements(&spec.means()).unwrap();
        let top_y = u[1].abs().max(u[4].abs());
        let top_x = u[0].abs().max(u[3].abs());
        let top_z = u[2].abs().max(u[5].abs());
        assert!(top_y > top_x && top_y > top_z);
        let y = m.value(&spec.means()).unwrap();
        assert!((y - top_y.max(top_z)).abs() < 1e-15);
        assert!(y > 0.3 && y < 0.4, "mean response {y}");
    }

    #[test]
    fn mechanism_is_reported() {
        let g = TrussGeometry::parse(
            "node 1 0 0 0\nnode 2 1 0 0\nelement 1 1 2\nsupport 1 xyz\nload 1 2 y 1\nmonitor 2 y\n",
        )
        .unwrap();
        let m = TrussModel::new(g);
        assert!(matches!(m.value(&[1.0, 1.0, 1.0]), Err(Error::Solver(_))));
    }

    #[test]
    fn rejects_non_positive_section() {
        let m = TrussModel::new(TrussGeometry::parse(BAR).unwrap());
        assert!(matches!(
            m.value(&[1.0, 1.0, 0.0]),
            Err(Error::InvalidParameter(_))
        ));
        assert!(m.value(&[1.0, -1.0, 1.0]).is_err());
    }

    #[test]
    fn parse_errors_are_line_anchored() {
        let err = TrussGeometry::parse("node 1 0 0 0\nnode 2 1 0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = TrussGeometry::parse("node 1 0 0 0\nbeam 1 1 2\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
        let err = TrussGeometry::parse("node 1 0 0 0\nnode 1 0 0 1\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn bundled_geometry_layout() {
        let g = TrussGeometry::truss25();
        assert_eq!(g.nodes.len(), 10);
        assert_eq!(g.n_elements(), 25);
        assert_eq!(g.n_loads(), 7);
        assert_eq!(g.input_dim(), 57);
        assert_eq!(TrussGeometry::truss25_inputs().unwrap().dim(), 57);
    }
}
