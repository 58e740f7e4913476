//! 3-SAT to ±1-separability reduction with exhaustive deciders.
//!
//! Each clause over three distinct variables becomes a point `x ∈ R^(m+1)`
//! with `+1` at positive literals, `-1` at negated ones, `0` elsewhere and a
//! constant `2` in the last coordinate, labelled `+1`. For `w ∈ {-1,1}^(m+1)`
//! the three literal terms each contribute ±1 (+1 when the literal is
//! satisfied by reading `w_j = 1` as true), so `w·x` is `-3 + 2 w_d` for a
//! violated clause and at least `-1 + 2 w_d` otherwise. With `w_d = 1` the
//! formula is satisfiable exactly when the points are separable.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::DeterministicRng;

/// Largest dimension either brute force will enumerate.
pub const ENUMERATION_BUDGET: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Literal {
    /// 1-based variable index.
    pub var: usize,
    pub positive: bool,
}

impl Literal {
    pub fn from_dimacs(v: i64) -> Self {
        Self {
            var: v.unsigned_abs() as usize,
            positive: v > 0,
        }
    }

    pub fn to_dimacs(self) -> i64 {
        if self.positive {
            self.var as i64
        } else {
            -(self.var as i64)
        }
    }

    pub fn satisfied_by(self, assignment: &[bool]) -> bool {
        assignment[self.var - 1] == self.positive
    }
}

pub type Clause = [Literal; 3];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnfFormula {
    pub num_vars: usize,
    pub clauses: Vec<Clause>,
}

impl CnfFormula {
    pub fn new(num_vars: usize, clauses: Vec<Clause>) -> Result<Self> {
        for (c, clause) in clauses.iter().enumerate() {
            for lit in clause {
                if lit.var == 0 || lit.var > num_vars {
                    return Err(Error::validation(format!(
                        "clause {c}: variable {} outside [1, {num_vars}]",
                        lit.var
                    )));
                }
            }
        }
        Ok(Self { num_vars, clauses })
    }

    pub fn from_ints(num_vars: usize, clauses: &[[i64; 3]]) -> Result<Self> {
        Self::new(
            num_vars,
            clauses.iter().map(|c| c.map(Literal::from_dimacs)).collect(),
        )
    }

    pub fn is_satisfied_by(&self, assignment: &[bool]) -> bool {
        self.clauses
            .iter()
            .all(|c| c.iter().any(|l| l.satisfied_by(assignment)))
    }

    pub fn to_dimacs(&self) -> String {
        let mut s = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        for c in &self.clauses {
            let _ = writeln!(s, "{} {} {} 0", c[0].to_dimacs(), c[1].to_dimacs(), c[2].to_dimacs());
        }
        s
    }
}

/// Parses DIMACS CNF with exactly three literals per clause line.
pub fn parse_dimacs(text: &str) -> Result<CnfFormula> {
    let err = |line: usize, msg: String| Error::Dimacs { line, msg };
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(err(line_no, "duplicate problem line".into()));
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[1] != "cnf" {
                return Err(err(line_no, format!("expected `p cnf <vars> <clauses>`, got `{line}`")));
            }
            let vars = parts[2].parse().map_err(|_| err(line_no, format!("bad variable count `{}`", parts[2])))?;
            let count = parts[3].parse().map_err(|_| err(line_no, format!("bad clause count `{}`", parts[3])))?;
            header = Some((vars, count));
            continue;
        }
        let Some((vars, _)) = header else {
            return Err(err(line_no, "clause before problem line".into()));
        };
        let ints = line
            .split_whitespace()
            .map(|t| t.parse::<i64>().map_err(|_| err(line_no, format!("bad literal `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        if ints.last() != Some(&0) {
            return Err(err(line_no, "clause line must end with 0".into()));
        }
        let lits = &ints[..ints.len() - 1];
        if lits.len() != 3 || lits.contains(&0) {
            return Err(err(line_no, format!("expected 3 literals, found {}", lits.iter().filter(|&&v| v != 0).count())));
        }
        let clause = [lits[0], lits[1], lits[2]].map(Literal::from_dimacs);
        if let Some(l) = clause.iter().find(|l| l.var > vars) {
            return Err(err(line_no, format!("variable {} exceeds declared {vars}", l.var)));
        }
        clauses.push(clause);
    }
    let Some((vars, count)) = header else {
        return Err(err(0, "missing `p cnf` problem line".into()));
    };
    if clauses.len() != count {
        return Err(err(0, format!("header declares {count} clauses, found {}", clauses.len())));
    }
    CnfFormula::new(vars, clauses)
}

fn is_tautology(c: &Clause) -> bool {
    c.iter()
        .any(|a| c.iter().any(|b| a.var == b.var && a.positive != b.positive))
}

/// Removes clauses that contain a variable in both polarities.
pub fn drop_tautologies(formula: &CnfFormula) -> CnfFormula {
    CnfFormula {
        num_vars: formula.num_vars,
        clauses: formula.clauses.iter().filter(|c| !is_tautology(c)).copied().collect(),
    }
}

/// Labelled points with real coordinates, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparabilityInstance {
    pub dim: usize,
    pub points: Vec<f64>,
    pub labels: Vec<i8>,
}

impl SeparabilityInstance {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Two-class dataset with class 1 as label `+1`.
    pub fn from_dataset(ds: &LabeledDataset) -> Result<Self> {
        Ok(Self {
            dim: ds.dim(),
            points: ds.features.as_slice().to_vec(),
            labels: ds.sign_labels()?,
        })
    }

    /// One point per row, label last, with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for j in 1..=self.dim {
            let _ = write!(s, "x{j},");
        }
        s.push_str("y\n");
        for i in 0..self.len() {
            for v in self.point(i) {
                let _ = write!(s, "{v},");
            }
            let _ = writeln!(s, "{}", self.labels[i]);
        }
        s
    }
}

fn encode(formula: &CnfFormula, allow_repeats: bool) -> Result<SeparabilityInstance> {
    let dim = formula.num_vars + 1;
    let mut points = Vec::with_capacity(formula.clauses.len() * dim);
    for (c, clause) in formula.clauses.iter().enumerate() {
        let mut row = vec![0.0; dim];
        for (a, lit) in clause.iter().enumerate() {
            if !allow_repeats && clause[..a].iter().any(|b| b.var == lit.var) {
                return Err(Error::validation(format!(
                    "clause {c} repeats variable {}; the reduction needs three distinct variables",
                    lit.var
                )));
            }
            row[lit.var - 1] += if lit.positive { 1.0 } else { -1.0 };
        }
        row[dim - 1] = 2.0;
        points.extend(row);
    }
    Ok(SeparabilityInstance {
        dim,
        points,
        labels: vec![1; formula.clauses.len()],
    })
}

/// The reduction. Tautological clauses are removed first; any remaining
/// clause with a repeated variable is rejected.
pub fn reduce(formula: &CnfFormula) -> Result<SeparabilityInstance> {
    encode(&drop_tautologies(formula), false)
}

/// Experimental variant that encodes a repeated variable by its net
/// occurrence count (positive minus negative). Not covered by the
/// equivalence guarantee.
pub fn reduce_with_multiplicity(formula: &CnfFormula) -> Result<SeparabilityInstance> {
    encode(&drop_tautologies(formula), true)
}

/// True iff `y_i · w·x_i > 0` for every point.
pub fn check_separator(w: &[i8], instance: &SeparabilityInstance) -> Result<bool> {
    if w.len() != instance.dim {
        return Err(Error::validation(format!(
            "separator has {} entries, instance dimension is {}",
            w.len(),
            instance.dim
        )));
    }
    if w.iter().any(|&v| v != 1 && v != -1) {
        return Err(Error::validation("separator entries must be -1 or 1"));
    }
    Ok((0..instance.len()).all(|i| {
        let dot: f64 = instance.point(i).iter().zip(w).map(|(&x, &wv)| x * wv as f64).sum();
        instance.labels[i] as f64 * dot > 0.0
    }))
}

fn check_budget(what: &'static str, n: usize) -> Result<()> {
    if n > ENUMERATION_BUDGET {
        return Err(Error::Capacity {
            what,
            requested: n as u64,
            budget: ENUMERATION_BUDGET as u64,
        });
    }
    Ok(())
}

/// The `index`-th vector of `{-1,1}^d` in lexicographic order (`-1 < 1`).
fn sign_vector(index: u64, d: usize) -> Vec<i8> {
    (0..d)
        .map(|j| if (index >> (d - 1 - j)) & 1 == 1 { 1 } else { -1 })
        .collect()
}

/// First separator in lexicographic order, if any.
pub fn brute_force_separator(instance: &SeparabilityInstance) -> Result<Option<Vec<i8>>> {
    check_budget("separator enumeration dimension", instance.dim)?;
    for index in 0..(1u64 << instance.dim) {
        let w = sign_vector(index, instance.dim);
        if check_separator(&w, instance)? {
            return Ok(Some(w));
        }
    }
    Ok(None)
}

/// First satisfying assignment in lexicographic order (`false < true`).
pub fn brute_force_sat(formula: &CnfFormula) -> Result<Option<Vec<bool>>> {
    let m = formula.num_vars;
    check_budget("SAT enumeration variable count", m)?;
    for index in 0..(1u64 << m) {
        let a: Vec<bool> = (0..m).map(|j| (index >> (m - 1 - j)) & 1 == 1).collect();
        if formula.is_satisfied_by(&a) {
            return Ok(Some(a));
        }
    }
    Ok(None)
}

/// Separator built from an assignment, with the last coordinate fixed to 1.
pub fn assignment_to_separator(assignment: &[bool]) -> Vec<i8> {
    assignment
        .iter()
        .map(|&a| if a { 1 } else { -1 })
        .chain(std::iter::once(1))
        .collect()
}

/// Assignment read off the first `d - 1` coordinates of a separator.
pub fn separator_to_assignment(w: &[i8]) -> Vec<bool> {
    w[..w.len().saturating_sub(1)].iter().map(|&v| v == 1).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub num_vars: usize,
    pub clauses: usize,
    pub clauses_after_tautology_removal: usize,
    pub assignment: Option<Vec<bool>>,
    pub separator: Option<Vec<i8>>,
    /// The assignment mapped to a separator passes the check.
    pub forward_witness_ok: Option<bool>,
    /// The separator mapped to an assignment satisfies the formula.
    pub backward_witness_ok: Option<bool>,
}

impl EquivalenceReport {
    pub fn satisfiable(&self) -> bool {
        self.assignment.is_some()
    }

    pub fn separable(&self) -> bool {
        self.separator.is_some()
    }

    pub fn agree(&self) -> bool {
        self.satisfiable() == self.separable()
            && self.forward_witness_ok != Some(false)
            && self.backward_witness_ok != Some(false)
    }

    /// `key = value` lines.
    pub fn to_key_values(&self) -> String {
        let fmt_bits = |v: &[bool]| v.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>();
        let fmt_w = |v: &[i8]| v.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",");
        let opt = |o: Option<bool>| o.map_or("n/a".to_string(), |b| b.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "variables = {}", self.num_vars);
        let _ = writeln!(s, "clauses = {}", self.clauses);
        let _ = writeln!(s, "clauses_after_tautology_removal = {}", self.clauses_after_tautology_removal);
        let _ = writeln!(s, "satisfiable = {}", self.satisfiable());
        let _ = writeln!(s, "separable = {}", self.separable());
        let _ = writeln!(s, "assignment = {}", self.assignment.as_deref().map_or("none".into(), fmt_bits));
        let _ = writeln!(s, "separator = {}", self.separator.as_deref().map_or("none".into(), fmt_w));
        let _ = writeln!(s, "forward_witness_ok = {}", opt(self.forward_witness_ok));
        let _ = writeln!(s, "backward_witness_ok = {}", opt(self.backward_witness_ok));
        let _ = writeln!(s, "agree = {}", self.agree());
        s
    }
}

pub fn verify_equivalence(formula: &CnfFormula) -> Result<EquivalenceReport> {
    let reduced_formula = drop_tautologies(formula);
    let instance = reduce(formula)?;
    let assignment = brute_force_sat(formula)?;
    let separator = brute_force_separator(&instance)?;
    let forward_witness_ok = match &assignment {
        Some(a) => Some(check_separator(&assignment_to_separator(a), &instance)?),
        None => None,
    };
    let backward_witness_ok = separator
        .as_ref()
        .map(|w| formula.is_satisfied_by(&separator_to_assignment(w)));
    Ok(EquivalenceReport {
        num_vars: formula.num_vars,
        clauses: formula.clauses.len(),
        clauses_after_tautology_removal: reduced_formula.clauses.len(),
        assignment,
        separator,
        forward_witness_ok,
        backward_witness_ok,
    })
}

const CNF_STREAM: u64 = 4;

/// Random 3-CNF with `clauses` clauses, each over three distinct variables
/// with random polarities.
pub fn random_cnf(num_vars: usize, clauses: usize, seed: u64) -> Result<CnfFormula> {
    if num_vars < 3 {
        return Err(Error::validation("need at least 3 variables for distinct-variable clauses"));
    }
    let mut rng = DeterministicRng::new(seed).stream(CNF_STREAM, 0);
    let clauses = (0..clauses)
        .map(|_| {
            let vars = sample(&mut rng, num_vars, 3);
            let mut c = [Literal { var: 0, positive: true }; 3];
            for (slot, v) in c.iter_mut().zip(vars.iter()) {
                *slot = Literal {
                    var: v + 1,
                    positive: rng.random::<bool>(),
                };
            }
            c
        })
        .collect();
    CnfFormula::new(num_vars, clauses)
}

/// All eight sign patterns over `z1, z2, z3`: unsatisfiable.
pub fn all_patterns_formula() -> CnfFormula {
    let clauses = (0..8)
        .map(|mask: u32| {
            [1usize, 2, 3].map(|v| Literal {
                var: v,
                positive: mask >> (v - 1) & 1 == 1,
            })
        })
        .collect();
    CnfFormula::new(3, clauses).expect("variables in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dimacs() {
        let text = "c example\np cnf 3 2\n1 -2 3 0\n-1 2 -3 0\n";
        let f = parse_dimacs(text).unwrap();
        assert_eq!(f.num_vars, 3);
        assert_eq!(f.clauses.len(), 2);
        assert_eq!(f.clauses[0][1], Literal { var: 2, positive: false });
        assert_eq!(parse_dimacs(&f.to_dimacs()).unwrap(), f);
    }

    #[test]
    fn rejects_bad_dimacs() {
        assert!(parse_dimacs("p cnf 3 1\n1 2 0\n").is_err());
        assert!(parse_dimacs("p cnf 3 1\n1 2 3 -1 0\n").is_err());
        assert!(parse_dimacs("p cnf 3 1\n1 2 4 0\n").is_err());
        assert!(parse_dimacs("1 2 3 0\n").is_err());
        assert!(parse_dimacs("p cnf 3 2\n1 2 3 0\n").is_err());
        assert!(matches!(parse_dimacs("p cnf 3 1\n1 2 x 0\n"), Err(Error::Dimacs { line: 2, .. })));
    }

    #[test]
    fn tautologies() {
        let f = CnfFormula::from_ints(2, &[[1, -1, 2]]).unwrap();
        assert!(drop_tautologies(&f).clauses.is_empty());
        let g = CnfFormula::from_ints(3, &[[1, 2, 3], [-1, -2, 3]]).unwrap();
        assert_eq!(drop_tautologies(&g), g);
    }

    #[test]
    fn reduce_examples() {
        let f = CnfFormula::from_ints(3, &[[1, -2, 3]]).unwrap();
        let inst = reduce(&f).unwrap();
        assert_eq!(inst.dim, 4);
        assert_eq!(inst.points, vec![1.0, -1.0, 1.0, 2.0]);
        assert_eq!(inst.labels, vec![1]);

        let empty = CnfFormula::new(3, vec![]).unwrap();
        assert!(reduce(&empty).unwrap().is_empty());

        let rep = CnfFormula::from_ints(2, &[[1, 1, 2]]).unwrap();
        assert!(matches!(reduce(&rep), Err(Error::Validation(_))));
        let ext = reduce_with_multiplicity(&rep).unwrap();
        assert_eq!(ext.points, vec![2.0, 1.0, 2.0]);
    }

    #[test]
    fn check_separator_examples() {
        let inst = SeparabilityInstance { dim: 4, points: vec![1.0, 1.0, 1.0, 2.0], labels: vec![1] };
        assert!(check_separator(&[1, 1, 1, 1], &inst).unwrap());
        // all literals opposed, w_d = 1: -3 + 2 = -1
        assert!(!check_separator(&[-1, -1, -1, 1], &inst).unwrap());
        let empty = SeparabilityInstance { dim: 2, points: vec![], labels: vec![] };
        assert!(check_separator(&[1, -1], &empty).unwrap());
        assert!(check_separator(&[1], &empty).is_err());
        assert!(check_separator(&[1, 0], &empty).is_err());
    }

    #[test]
    fn brute_force_examples() {
        let single = CnfFormula::from_ints(3, &[[1, 2, 3]]).unwrap();
        assert!(brute_force_separator(&reduce(&single).unwrap()).unwrap().is_some());
        assert!(brute_force_sat(&single).unwrap().is_some());

        let unsat = all_patterns_formula();
        assert!(brute_force_separator(&reduce(&unsat).unwrap()).unwrap().is_none());
        assert!(brute_force_sat(&unsat).unwrap().is_none());

        let empty_inst = reduce(&CnfFormula::new(3, vec![]).unwrap()).unwrap();
        assert_eq!(brute_force_separator(&empty_inst).unwrap(), Some(vec![-1, -1, -1, -1]));
        assert_eq!(brute_force_sat(&CnfFormula::new(2, vec![]).unwrap()).unwrap(), Some(vec![false, false]));

        let big = SeparabilityInstance { dim: 25, points: vec![], labels: vec![] };
        assert!(matches!(brute_force_separator(&big), Err(Error::Capacity { .. })));
    }

    #[test]
    fn lexicographic_first_hit() {
        let f = CnfFormula::from_ints(3, &[[1, 2, 3]]).unwrap();
        let w = brute_force_separator(&reduce(&f).unwrap()).unwrap().unwrap();
        assert_eq!(w, vec![-1, -1, 1, 1]);
    }

    #[test]
    fn equivalence_examples() {
        let sat = verify_equivalence(&CnfFormula::from_ints(3, &[[1, -2, 3]]).unwrap()).unwrap();
        assert!(sat.satisfiable() && sat.separable() && sat.agree());
        assert_eq!(sat.forward_witness_ok, Some(true));

        let unsat = verify_equivalence(&all_patterns_formula()).unwrap();
        assert!(!unsat.satisfiable() && !unsat.separable() && unsat.agree());

        let empty = verify_equivalence(&CnfFormula::new(0, vec![]).unwrap()).unwrap();
        assert!(empty.satisfiable() && empty.separable());
        assert!(empty.to_key_values().contains("agree = true"));
    }

    #[test]
    fn reduced_dot_products_are_odd() {
        let f = random_cnf(5, 6, 3).unwrap();
        let inst = reduce(&f).unwrap();
        for index in 0..(1u64 << inst.dim) {
            let w = sign_vector(index, inst.dim);
            for i in 0..inst.len() {
                let dot: f64 = inst.point(i).iter().zip(&w).map(|(x, &v)| x * v as f64).sum();
                assert_eq!(dot.rem_euclid(2.0), 1.0);
            }
        }
    }

    #[test]
    fn synthetic_data_is_separated_by_planted_vector() {
        let s = crate::data::gen_separable(8, 100, 0.0, 12).unwrap();
        let inst = SeparabilityInstance::from_dataset(&s.dataset).unwrap();
        assert!(check_separator(&s.planted, &inst).unwrap());
    }
}
