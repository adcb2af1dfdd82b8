//! Soft-logic label inference.
//!
//! Ground rules are scored with Łukasiewicz semantics: conjunction
//! `max(a + b - 1, 0)`, disjunction `min(a + b, 1)`, negation `1 - a`, and a
//! rule's distance to satisfaction is `max(0, I(body) - I(head))`. Inference
//! minimises the weighted sum of distances over the free atoms, plus an
//! optional quadratic pull `tau * |I - init|^2` towards the initial values
//! that makes the minimiser unique when the rules leave a flat valley.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{CellId, Frontier};
use crate::knowledge::{GroundLiteral, GroundProgram, GroundRule};

fn check_unit(name: &str, x: f64) {
    assert!(
        (0.0..=1.0).contains(&x),
        "contract violation: {name} argument {x} is outside [0, 1]"
    );
}

/// Łukasiewicz conjunction.
///
/// # Panics
/// If either argument lies outside `[0, 1]`.
pub fn t_and(a: f64, b: f64) -> f64 {
    check_unit("t_and", a);
    check_unit("t_and", b);
    (a + b - 1.0).max(0.0)
}

/// Łukasiewicz disjunction.
///
/// # Panics
/// If either argument lies outside `[0, 1]`.
pub fn t_or(a: f64, b: f64) -> f64 {
    check_unit("t_or", a);
    check_unit("t_or", b);
    (a + b).min(1.0)
}

/// # Panics
/// If the argument lies outside `[0, 1]`.
pub fn t_not(a: f64) -> f64 {
    check_unit("t_not", a);
    1.0 - a
}

/// Left fold of [`t_and`]; the empty conjunction is true.
pub fn t_and_all(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(1.0, t_and)
}

/// Distance to satisfaction of `body -> head`.
pub fn rule_distance(body: f64, head: f64) -> f64 {
    (body - head).max(0.0)
}

/// Soft truth values, one per atom of a ground program.
///
/// Frozen atoms are held fixed by the solver in addition to the program's
/// clamped (observed) atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthAssignment {
    values: Vec<f64>,
    frozen: Vec<bool>,
}

impl TruthAssignment {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::with_frozen(values, vec![false; n])
    }

    pub fn with_frozen(values: Vec<f64>, frozen: Vec<bool>) -> Result<Self> {
        if frozen.len() != values.len() {
            return Err(Error::Length {
                expected: values.len(),
                got: frozen.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Contract(format!(
                "truth value {} at atom {i} is outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self { values, frozen })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Weight of the quadratic pull towards the initial assignment.
    pub anchor_tau: f64,
    pub max_iters: usize,
    /// Stop once an iteration lowers the objective by less than this.
    pub tol: f64,
    pub initial_step: f64,
    /// Backtracking shrink factor.
    pub beta: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            anchor_tau: 0.01,
            max_iters: 500,
            tol: 1e-7,
            initial_step: 1.0,
            beta: 0.5,
            armijo_c: 1e-4,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.anchor_tau >= 0.0
            && self.anchor_tau.is_finite()
            && self.tol > 0.0
            && self.initial_step > 0.0
            && self.beta > 0.0
            && self.beta < 1.0
            && self.armijo_c > 0.0
            && self.armijo_c < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver parameters {self:?}")))
        }
    }
}

fn literal_truth(lit: &GroundLiteral, values: &[f64]) -> f64 {
    match *lit {
        GroundLiteral::Const(c) => c,
        GroundLiteral::Atom { index, negated } => {
            let v = values[index];
            if negated {
                t_not(v)
            } else {
                v
            }
        }
    }
}

/// Distance to satisfaction of one ground rule under `values`.
pub fn ground_rule_distance(rule: &GroundRule, values: &[f64]) -> f64 {
    let body = t_and_all(rule.body.iter().map(|l| literal_truth(l, values)));
    let head = literal_truth(&rule.head, values);
    rule_distance(body, head)
}

/// Weighted distance sum `sum_r w_r d_r(I)`, with no anchor term.
pub fn distance_sum(program: &GroundProgram, assignment: &TruthAssignment) -> Result<f64> {
    if assignment.len() != program.n_atoms() {
        return Err(Error::Length {
            expected: program.n_atoms(),
            got: assignment.len(),
        });
    }
    let values = assignment.values();
    Ok(program
        .rules()
        .iter()
        .map(|r| r.weight * ground_rule_distance(r, values))
        .sum())
}

/// The inference objective: weighted distances plus the anchor term over
/// atoms the solver is allowed to move.
pub fn objective(
    program: &GroundProgram,
    assignment: &TruthAssignment,
    init: &TruthAssignment,
    tau: f64,
) -> Result<f64> {
    if init.len() != assignment.len() {
        return Err(Error::Length {
            expected: assignment.len(),
            got: init.len(),
        });
    }
    let mut total = distance_sum(program, assignment)?;
    if tau > 0.0 {
        for i in 0..assignment.len() {
            if program.observed()[i].is_none() && !init.frozen()[i] {
                let d = assignment.values()[i] - init.values()[i];
                total += tau * d * d;
            }
        }
    }
    Ok(total)
}

/// One row of the solver trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub step: f64,
    pub max_grad: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub assignment: TruthAssignment,
    pub objective: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

impl SolveOutcome {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,objective,step,max_grad\n");
        for t in &self.trace {
            out.push_str(&format!("{},{},{},{}\n", t.iter, t.objective, t.step, t.max_grad));
        }
        out
    }
}

/// The program restricted to its free atoms, with every rule written as a
/// hinge `w * max(0, c + a.x)`.
///
/// A Łukasiewicz body of `n` literals clipped at zero and then compared to
/// the head is the same hinge as `max(0, sum(body) - (n - 1) - head)`, so
/// every ground rule compiles to one linear piece.
struct Compiled {
    free: Vec<usize>,
    x0: Vec<f64>,
    start: Vec<usize>,
    vars: Vec<usize>,
    coefs: Vec<f64>,
    weights: Vec<f64>,
    consts: Vec<f64>,
    /// Weighted distance of hinges that involve no free atom.
    fixed_part: f64,
    tau: f64,
}

impl Compiled {
    fn new(program: &GroundProgram, init: &TruthAssignment, tau: f64) -> Self {
        let n = program.n_atoms();
        let mut var_of = vec![usize::MAX; n];
        let mut free = Vec::new();
        let mut x0 = Vec::new();
        let mut fixed = init.values().to_vec();
        for i in 0..n {
            if let Some(obs) = program.observed()[i] {
                fixed[i] = obs;
            } else if !init.frozen()[i] {
                var_of[i] = free.len();
                free.push(i);
                x0.push(init.values()[i]);
            }
        }

        let mut c = Compiled {
            free,
            x0,
            start: vec![0],
            vars: Vec::new(),
            coefs: Vec::new(),
            weights: Vec::new(),
            consts: Vec::new(),
            fixed_part: 0.0,
            tau,
        };
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for rule in program.rules() {
            terms.clear();
            let mut constant = -(rule.body.len() as f64 - 1.0);
            let mut add = |lit: &GroundLiteral, sign: f64, constant: &mut f64| match *lit {
                GroundLiteral::Const(v) => *constant += sign * v,
                GroundLiteral::Atom { index, negated } => {
                    let var = var_of[index];
                    if var == usize::MAX {
                        let v = fixed[index];
                        *constant += sign * if negated { 1.0 - v } else { v };
                    } else if negated {
                        *constant += sign;
                        terms.push((var, -sign));
                    } else {
                        terms.push((var, sign));
                    }
                }
            };
            for lit in &rule.body {
                add(lit, 1.0, &mut constant);
            }
            add(&rule.head, -1.0, &mut constant);

            terms.sort_unstable_by_key(|t| t.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
            for &(v, a) in &terms {
                match merged.last_mut() {
                    Some(last) if last.0 == v => last.1 += a,
                    _ => merged.push((v, a)),
                }
            }
            merged.retain(|t| t.1 != 0.0);
            if merged.is_empty() {
                c.fixed_part += rule.weight * constant.max(0.0);
                continue;
            }
            for (v, a) in merged {
                c.vars.push(v);
                c.coefs.push(a);
            }
            c.start.push(c.vars.len());
            c.weights.push(rule.weight);
            c.consts.push(constant);
        }
        c
    }

    fn n_hinges(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    fn arg(&self, h: usize, x: &[f64]) -> f64 {
        let mut s = self.consts[h];
        for k in self.start[h]..self.start[h + 1] {
            s += self.coefs[k] * x[self.vars[k]];
        }
        s
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut total = self.fixed_part;
        for h in 0..self.n_hinges() {
            total += self.weights[h] * self.arg(h, x).max(0.0);
        }
        if self.tau > 0.0 {
            total += self.tau * x.iter().zip(&self.x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        total
    }

    /// Subgradient taking 0 for hinges sitting exactly at their kink.
    fn subgradient(&self, x: &[f64], g: &mut [f64]) {
        for (gi, (xi, x0i)) in g.iter_mut().zip(x.iter().zip(&self.x0)) {
            *gi = 2.0 * self.tau * (xi - x0i);
        }
        for h in 0..self.n_hinges() {
            if self.arg(h, x) > 0.0 {
                let w = self.weights[h];
                for k in self.start[h]..self.start[h + 1] {
                    g[self.vars[k]] += w * self.coefs[k];
                }
            }
        }
    }

    /// Smallest-norm element of the eps-subdifferential after removing
    /// components that point out of the box at active bounds. Hinges within
    /// `eps` of their kink enter with a free multiplier in `[0, 1]`; the
    /// multipliers are fitted by exact cyclic coordinate descent.
    fn min_norm_subgradient(&self, x: &[f64], eps: f64) -> Vec<f64> {
        const BOUND: f64 = 1e-12;
        #[derive(Clone, Copy)]
        enum Side {
            Interior,
            Lower,
            Upper,
        }
        let side: Vec<Side> = x
            .iter()
            .map(|&v| {
                if v <= BOUND {
                    Side::Lower
                } else if v >= 1.0 - BOUND {
                    Side::Upper
                } else {
                    Side::Interior
                }
            })
            .collect();
        // derivative of the per-coordinate penalty h_i(v) (halved)
        let dh = |i: usize, v: f64| match side[i] {
            Side::Interior => v,
            Side::Lower => v.min(0.0),
            Side::Upper => v.max(0.0),
        };

        let mut v: Vec<f64> = x
            .iter()
            .zip(&self.x0)
            .map(|(a, b)| 2.0 * self.tau * (a - b))
            .collect();
        let mut near = Vec::new();
        let mut theta = Vec::new();
        for h in 0..self.n_hinges() {
            let a = self.arg(h, x);
            if a > eps {
                self.axpy(h, self.weights[h], &mut v);
            } else if a >= -eps {
                let t0 = if a > 0.0 { 1.0 } else { 0.0 };
                self.axpy(h, t0 * self.weights[h], &mut v);
                near.push(h);
                theta.push(t0);
            }
        }

        for _sweep in 0..60 {
            let mut moved = 0.0f64;
            for (slot, &h) in near.iter().enumerate() {
                let w = self.weights[h];
                let t = theta[slot];
                let range = self.start[h]..self.start[h + 1];
                let slope = |s: f64| -> f64 {
                    range
                        .clone()
                        .map(|k| {
                            let i = self.vars[k];
                            let wa = w * self.coefs[k];
                            wa * dh(i, v[i] + (s - t) * wa)
                        })
                        .sum()
                };
                let target = if slope(0.0) >= 0.0 {
                    0.0
                } else if slope(1.0) <= 0.0 {
                    1.0
                } else {
                    let (mut lo, mut hi) = (0.0, 1.0);
                    for _ in 0..50 {
                        let mid = 0.5 * (lo + hi);
                        if slope(mid) < 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    0.5 * (lo + hi)
                };
                if target != t {
                    self.axpy(h, (target - t) * w, &mut v);
                    theta[slot] = target;
                    moved = moved.max((target - t).abs());
                }
            }
            if moved < 1e-10 {
                break;
            }
        }

        for (i, vi) in v.iter_mut().enumerate() {
            *vi = dh(i, *vi);
        }
        v
    }

    fn axpy(&self, h: usize, scale: f64, v: &mut [f64]) {
        for k in self.start[h]..self.start[h + 1] {
            v[self.vars[k]] += scale * self.coefs[k];
        }
    }
}

/// Backtracking along the projected path `clip(x - alpha * g)`.
fn line_search(
    c: &Compiled,
    x: &[f64],
    f: f64,
    g: &[f64],
    alpha0: f64,
    params: &SolverParams,
) -> Option<(Vec<f64>, f64, f64)> {
    let mut alpha = alpha0;
    let mut trial = vec![0.0; x.len()];
    while alpha >= 1e-14 {
        let mut predicted = 0.0;
        for i in 0..x.len() {
            trial[i] = (x[i] - alpha * g[i]).clamp(0.0, 1.0);
            predicted += g[i] * (x[i] - trial[i]);
        }
        if predicted <= 0.0 {
            return None;
        }
        let ft = c.value(&trial);
        if ft <= f - params.armijo_c * predicted {
            return Some((trial, ft, alpha));
        }
        alpha *= params.beta;
    }
    None
}

fn inf_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimises the inference objective over the free atoms.
///
/// Each iteration takes a projected subgradient step with Armijo
/// backtracking. When that step fails or barely helps (typically on a hinge
/// kink), a steepest-descent direction built from the minimum-norm
/// eps-subgradient is tried before giving up. Only objective-decreasing
/// steps are accepted, so the returned assignment is the best one seen.
pub fn solve(
    program: &GroundProgram,
    init: &TruthAssignment,
    params: &SolverParams,
) -> Result<SolveOutcome> {
    params.validate()?;
    if init.len() != program.n_atoms() {
        return Err(Error::Length {
            expected: program.n_atoms(),
            got: init.len(),
        });
    }
    let c = Compiled::new(program, init, params.anchor_tau);
    let mut x = c.x0.clone();
    let mut f = c.value(&x);
    let mut trace = Vec::new();
    let mut g = vec![0.0; x.len()];
    let mut alpha_hint = params.initial_step;
    let mut iterations = 0;

    if !x.is_empty() {
        for iter in 1..=params.max_iters {
            c.subgradient(&x, &mut g);
            let start = (alpha_hint * 4.0).min(params.initial_step);
            let mut step = line_search(&c, &x, f, &g, start, params).map(|s| (s, inf_norm(&g)));
            let weak = match &step {
                Some(((_, fnew, _), _)) => f - fnew < params.tol,
                None => true,
            };
            if weak {
                for eps in [1e-3, 1e-6, 1e-9] {
                    let d = c.min_norm_subgradient(&x, eps);
                    if inf_norm(&d) < 1e-12 {
                        continue;
                    }
                    if let Some(s) = line_search(&c, &x, f, &d, params.initial_step, params) {
                        let better = step.as_ref().is_none_or(|((_, fo, _), _)| s.1 < *fo);
                        if better {
                            step = Some((s, inf_norm(&d)));
                        }
                        break;
                    }
                }
            }
            let Some(((xn, fnew, alpha), gnorm)) = step else {
                break;
            };
            let decrease = f - fnew;
            x = xn;
            f = fnew;
            alpha_hint = alpha;
            iterations = iter;
            trace.push(TraceRow {
                iter,
                objective: f,
                step: alpha,
                max_grad: gnorm,
            });
            if decrease < params.tol {
                break;
            }
        }
    }

    let mut values = init.values().to_vec();
    for (i, obs) in program.observed().iter().enumerate() {
        if let Some(o) = obs {
            values[i] = *o;
        }
    }
    for (&atom, &v) in c.free.iter().zip(&x) {
        values[atom] = v;
    }
    let assignment = TruthAssignment::with_frozen(values, init.frozen().to_vec())?;
    Ok(SolveOutcome {
        assignment,
        objective: f,
        iterations,
        trace,
    })
}

/// Binary entropy in nats, with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Per-atom entropy of soft labels.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    pub u: Vec<f64>,
}

pub fn entropy_uncertainty(assignment: &TruthAssignment) -> UncertaintyMap {
    UncertaintyMap {
        u: assignment.values().iter().map(|&p| binary_entropy(p)).collect(),
    }
}

/// How uncertain cells are picked for refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RefinementRule {
    /// Cells with `u >= threshold`.
    Threshold(f64),
    /// The `ceil(fraction * n)` most uncertain of the `n` eligible cells.
    Budget(f64),
}

/// Leaves of level >= 1 chosen for refinement.
pub fn select_refinement(u: &UncertaintyMap, frontier: &Frontier, rule: RefinementRule) -> Result<Vec<CellId>> {
    select_refinement_among(u, frontier, rule, None)
}

/// As [`select_refinement`], restricted to leaves flagged in `eligible`.
pub fn select_refinement_among(
    u: &UncertaintyMap,
    frontier: &Frontier,
    rule: RefinementRule,
    eligible: Option<&[bool]>,
) -> Result<Vec<CellId>> {
    if u.u.len() != frontier.len() {
        return Err(Error::Length {
            expected: frontier.len(),
            got: u.u.len(),
        });
    }
    let candidates: Vec<usize> = (0..frontier.len())
        .filter(|&i| frontier.leaves()[i].level >= 1 && eligible.is_none_or(|m| m[i]))
        .collect();
    let picked: Vec<usize> = match rule {
        RefinementRule::Threshold(t) => candidates.into_iter().filter(|&i| u.u[i] >= t).collect(),
        RefinementRule::Budget(fraction) => {
            let take = (fraction.clamp(0.0, 1.0) * candidates.len() as f64).ceil() as usize;
            let mut ranked = candidates;
            // stable sort keeps canonical order among ties
            ranked.sort_by(|&a, &b| u.u[b].total_cmp(&u.u[a]));
            ranked.truncate(take);
            ranked.sort_unstable();
            ranked
        }
    };
    Ok(picked.into_iter().map(|i| frontier.leaves()[i]).collect())
}

/// Hierarchical logic loss: per level, weighted distances plus
/// `lambda * |ground rules|`.
pub fn hierarchical_loss_report(levels: &[(&GroundProgram, &TruthAssignment)], lambda: f64) -> Result<f64> {
    let mut total = 0.0;
    for (program, assignment) in levels {
        total += distance_sum(program, assignment)? + lambda * program.rules().len() as f64;
    }
    Ok(total)
}
