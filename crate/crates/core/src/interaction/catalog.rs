use std::cmp::Ordering;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{InteractionError, NullCovectorSet, MINKOWSKI};
use crate::geometry::Metric;
use crate::linalg::M4;
use crate::symbol::{constraint_space_basis, Constraint, NullCovectorFrame, PolarizationVector};

pub const CATALOG_FIXTURE: &str = include_str!("../../data/interaction_catalog.txt");

/// Every monomial in the catalog carries this many extra powers of `1/τ`
/// beyond the four slot integrals and the explicit parametrix factors.
const TAU_OFFSET: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    T,
    TTilde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flags {
    QQ,
    IQ,
    QI,
    II,
}

impl Flags {
    pub fn k1(self) -> u32 {
        matches!(self, Flags::QQ | Flags::QI) as u32
    }

    pub fn k2(self) -> u32 {
        matches!(self, Flags::QQ | Flags::IQ) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SecondFactor {
    None,
    /// `1/(ω_{σ(4),5} τ)` from the modulated parametrix.
    Slot4Tau,
    /// `1/ω_{σ(3)σ(4)}`.
    Pair34,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogRow {
    pub family: Family,
    pub flags: Flags,
    pub max_total: u32,
    pub max_k34: u32,
    pub max_k4: Option<u32>,
    pub max_k12: Option<u32>,
    pub shift: [i64; 4],
    pub pair12: bool,
    pub second: SecondFactor,
}

impl CatalogRow {
    pub fn check(&self, k: [u32; 4], a: u32) -> Result<(), InteractionError> {
        let fail = |inequality: String| Err(InteractionError::Inadmissible { k, inequality });
        let (k1, k2) = (self.flags.k1(), self.flags.k2());
        if let Some(j) = (0..4).find(|&j| k[j] > a) {
            return fail(format!("k{} <= a = {a}", j + 1));
        }
        if k.iter().sum::<u32>() > self.max_total {
            return fail(format!("k1 + k2 + k3 + k4 <= 2 K1 + 2 K2 + 2 = {}", 2 * k1 + 2 * k2 + 2));
        }
        if k[2] + k[3] > self.max_k34 {
            return fail(format!("k3 + k4 <= 2 K2 + 2 = {}", 2 * k2 + 2));
        }
        if let Some(m) = self.max_k4 {
            if k[3] > m {
                return fail(format!("k4 <= {m}"));
            }
        }
        if let Some(m) = self.max_k12 {
            if k[0] + k[1] > m {
                return fail(format!("k1 + k2 <= 2 K1 + 2 = {}", 2 * k1 + 2));
            }
        }
        Ok(())
    }
}

/// Parses the family table.
pub fn parse_catalog(text: &str) -> Result<Vec<CatalogRow>, InteractionError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| InteractionError::Fixture {
            line: i + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 9 {
            return Err(err("expected 9 columns"));
        }
        let family = match f[0] {
            "T" => Family::T,
            "Tt" => Family::TTilde,
            _ => return Err(err("unknown family")),
        };
        let flags = match f[1] {
            "QQ" => Flags::QQ,
            "IQ" => Flags::IQ,
            "QI" => Flags::QI,
            "II" => Flags::II,
            _ => return Err(err("unknown flags")),
        };
        let num = |s: &str| s.parse::<u32>().map_err(|_| err("bad bound"));
        let opt = |s: &str| if s == "-" { Ok(None) } else { num(s).map(Some) };
        let shift: Vec<i64> = f[6]
            .split(',')
            .map(|s| s.parse::<i64>().map_err(|_| err("bad shift")))
            .collect::<Result<_, _>>()?;
        if shift.len() != 4 {
            return Err(err("shift needs 4 entries"));
        }
        let pair12 = match f[7] {
            "pair12" => true,
            "-" => false,
            _ => return Err(err("bad first factor")),
        };
        let second = match f[8] {
            "slot4_tau" => SecondFactor::Slot4Tau,
            "pair34" => SecondFactor::Pair34,
            "-" => SecondFactor::None,
            _ => return Err(err("bad second factor")),
        };
        rows.push(CatalogRow {
            family,
            flags,
            max_total: num(f[2])?,
            max_k34: num(f[3])?,
            max_k4: opt(f[4])?,
            max_k12: opt(f[5])?,
            shift: [shift[0], shift[1], shift[2], shift[3]],
            pair12,
            second,
        });
    }
    Ok(rows)
}

/// A catalog entry: a family row, a wave permutation (0-based) and `k⃗`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub row: CatalogRow,
    pub sigma: [usize; 4],
    pub k: [u32; 4],
}

impl fmt::Display for CatalogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fam = match self.row.family {
            Family::T => "T",
            Family::TTilde => "Tt",
        };
        let s = self.sigma.map(|w| w + 1);
        write!(f, "{fam}/{:?} sigma={s:?} k={:?}", self.row.flags, self.k)
    }
}

impl CatalogEntry {
    /// Slot exponents `n_j`.
    pub fn slot_exponents(&self, a: u32) -> [i64; 4] {
        let mut n = [0; 4];
        for j in 0..4 {
            n[j] = a as i64 - self.k[j] as i64 + self.row.shift[j];
        }
        n
    }

    pub fn is_leader(&self) -> bool {
        let r = &self.row;
        r.family == Family::T
            && r.flags == Flags::QQ
            && ((self.sigma == [0, 1, 2, 3] && self.k == [6, 0, 0, 0])
                || (self.sigma == [1, 0, 2, 3] && self.k == [0, 6, 0, 0]))
    }
}

// Magnitude rank under ρ₁ ≫ ρ₃ ≫ ρ₂ ≫ ρ₄.
const RANK: [u8; 4] = [3, 1, 2, 0];

fn larger(i: usize, j: usize) -> usize {
    if RANK[i] > RANK[j] {
        i
    } else {
        j
    }
}

/// Every admissible entry for parameter `a`.
pub fn catalog(a: u32) -> Vec<CatalogEntry> {
    let rows = parse_catalog(CATALOG_FIXTURE).expect("bundled catalog fixture parses");
    let mut out = Vec::new();
    let perms = permutations4();
    for row in rows {
        let top = a.min(row.max_total);
        for sigma in &perms {
            for k1 in 0..=top {
                for k2 in 0..=top {
                    for k3 in 0..=top {
                        for k4 in 0..=top {
                            let k = [k1, k2, k3, k4];
                            if row.check(k, a).is_ok() {
                                out.push(CatalogEntry { row, sigma: *sigma, k });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    if (0..4).all(|i| p.contains(&i)) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// Complex number stored as `mantissa · e^{ln_scale}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaled {
    pub mantissa: Complex64,
    pub ln_scale: f64,
}

impl Scaled {
    pub fn new(c: Complex64) -> Self {
        Scaled {
            mantissa: c,
            ln_scale: 0.0,
        }
        .normalized()
    }

    pub fn zero() -> Self {
        Scaled {
            mantissa: Complex64::new(0.0, 0.0),
            ln_scale: 0.0,
        }
    }

    fn normalized(mut self) -> Self {
        let n = self.mantissa.norm();
        if n > 0.0 && n.is_finite() {
            self.ln_scale += n.ln();
            self.mantissa /= n;
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.norm() == 0.0
    }

    pub fn mul(self, o: Scaled) -> Scaled {
        Scaled {
            mantissa: self.mantissa * o.mantissa,
            ln_scale: self.ln_scale + o.ln_scale,
        }
        .normalized()
    }

    pub fn mul_c(self, c: Complex64) -> Scaled {
        self.mul(Scaled::new(c))
    }

    pub fn mul_ln(self, ln: f64) -> Scaled {
        Scaled {
            mantissa: self.mantissa,
            ln_scale: self.ln_scale + ln,
        }
    }

    pub fn add(self, o: Scaled) -> Scaled {
        if self.is_zero() {
            return o;
        }
        if o.is_zero() {
            return self;
        }
        let top = self.ln_scale.max(o.ln_scale);
        let m = self.mantissa * (self.ln_scale - top).exp() + o.mantissa * (o.ln_scale - top).exp();
        Scaled {
            mantissa: m,
            ln_scale: top,
        }
        .normalized()
    }

    /// May overflow for extreme scales.
    pub fn value(&self) -> Complex64 {
        self.mantissa * self.ln_scale.exp()
    }

    pub fn ln_abs(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.mantissa.norm().ln() + self.ln_scale
        }
    }
}

/// Leading term `coefficient · τ^{tau_exp} · Π ρ_j^{rho_exp[j]}` of one entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticMonomial {
    pub tau_exp: i64,
    pub rho_exp: [i64; 4],
    /// Structural coefficient up to the generic overall constant, including
    /// `det A` and the polarization scalar.
    pub coefficient: Scaled,
    pub det_a: f64,
}

/// Integer exponents of an entry.
pub fn exponents(entry: &CatalogEntry, a: u32) -> (i64, [i64; 4]) {
    let n = entry.slot_exponents(a);
    let s = entry.sigma;
    let mut e = [0i64; 4];
    let mut tau = 0;
    for j in 0..4 {
        e[s[j]] -= 2 * (n[j] + 1);
        tau += n[j] + 1;
    }
    if entry.row.pair12 {
        e[larger(s[0], s[1])] -= 2;
    }
    match entry.row.second {
        SecondFactor::Slot4Tau => {
            e[s[3]] -= 2;
            tau += 1;
        }
        SecondFactor::Pair34 => e[larger(s[2], s[3])] -= 2,
        SecondFactor::None => {}
    }
    // Each k-derivative on slot j contracts b^(σ(j)) into the lowest other
    // slot with free capacity (two per slot). Contractions into the wave-1
    // slot carry no ρ factor.
    let mut cap = [2u32; 4];
    for j in 0..4 {
        for _ in 0..entry.k[j] {
            let Some(t) = (0..4).find(|&t| t != j && cap[t] > 0) else {
                continue;
            };
            cap[t] -= 1;
            let r = s[t];
            if r != 0 {
                e[larger(r, s[j])] += 2;
            }
        }
    }
    (-(tau + TAU_OFFSET), e)
}

fn ln_factorial(n: i64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Closed-form leading term of one catalog entry.
pub fn closed_form(
    entry: &CatalogEntry,
    a: u32,
    set: &NullCovectorSet,
    polarization: f64,
) -> Result<AsymptoticMonomial, InteractionError> {
    entry.row.check(entry.k, a)?;
    let (tau_exp, rho_exp) = exponents(entry, a);
    let n = entry.slot_exponents(a);
    let s = entry.sigma;
    let i = Complex64::new(0.0, 1.0);
    let mut c = Scaled::new(Complex64::new(polarization * set.det_a(), 0.0));
    for j in 0..4 {
        // Γ(n+1) (i/p)^{n+1}
        let p = set.p(s[j]);
        let m = n[j] + 1;
        c = c
            .mul_ln(ln_factorial(n[j]) - m as f64 * p.abs().ln())
            .mul_c(i.powi(m as i32) * p.signum().powi(m as i32));
    }
    if entry.row.pair12 {
        c = c.mul_c(Complex64::new(1.0 / set.omega(s[0], s[1]), 0.0));
    }
    match entry.row.second {
        SecondFactor::Slot4Tau => c = c.mul_c(1.0 / (i * set.omega(s[3], 4))),
        SecondFactor::Pair34 => c = c.mul_c(Complex64::new(1.0 / set.omega(s[2], s[3]), 0.0)),
        SecondFactor::None => {}
    }
    Ok(AsymptoticMonomial {
        tau_exp,
        rho_exp,
        coefficient: c,
        det_a: set.det_a(),
    })
}

/// How `ρ` exponents collapse to one order of smallness.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hierarchy {
    /// `ρ₃ = ρ₁^N`, `ρ₂ = ρ₃^N`, `ρ₄ = ρ₂^N`.
    Exponent(u32),
    /// The `N → ∞` limit: lexicographic in `(ρ₄, ρ₂, ρ₃, ρ₁)`.
    #[default]
    Limit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dominance {
    Stronger,
    Equal,
    Weaker,
}

/// Compares the size of two leading terms as `τ → ∞`, then as `ρ₁ → 0`.
pub fn dominance_compare(m1: &AsymptoticMonomial, m2: &AsymptoticMonomial, h: Hierarchy) -> Dominance {
    compare_exponents((m1.tau_exp, m1.rho_exp), (m2.tau_exp, m2.rho_exp), h)
}

pub fn compare_exponents(m1: (i64, [i64; 4]), m2: (i64, [i64; 4]), h: Hierarchy) -> Dominance {
    let key = |e: &[i64; 4]| -> Vec<i128> {
        match h {
            Hierarchy::Limit => vec![e[3] as i128, e[1] as i128, e[2] as i128, e[0] as i128],
            Hierarchy::Exponent(n) => {
                let n = n as i128;
                vec![n * n * n * e[3] as i128 + n * n * e[1] as i128 + n * e[2] as i128 + e[0] as i128]
            }
        }
    };
    // Larger τ exponent decays slower; smaller ρ exponent blows up faster.
    match m1.0.cmp(&m2.0) {
        Ordering::Greater => return Dominance::Stronger,
        Ordering::Less => return Dominance::Weaker,
        Ordering::Equal => {}
    }
    match key(&m1.1).cmp(&key(&m2.1)) {
        Ordering::Less => Dominance::Stronger,
        Ordering::Greater => Dominance::Weaker,
        Ordering::Equal => Dominance::Equal,
    }
}

/// `v^(r)_{mk} = b^(r)_m b^(r)_k` for `r = 2, 3, 4`.
pub fn chosen_polarizations(set: &NullCovectorSet) -> [M4<f64>; 3] {
    let outer = |b: &[f64; 4]| {
        let mut v = [[0.0; 4]; 4];
        for m in 0..4 {
            for k in 0..4 {
                v[m][k] = b[m] * b[k];
            }
        }
        v
    };
    [outer(&set.b[1]), outer(&set.b[2]), outer(&set.b[3])]
}

fn contract_bb(v: &M4<f64>, b: &[f64; 4]) -> f64 {
    let mut s = 0.0;
    for r in 0..4 {
        for q in 0..4 {
            s += MINKOWSKI[r][r] * MINKOWSKI[q][q] * v[r][q] * b[r] * b[q];
        }
    }
    s
}

/// `v^{ab} w_{ab}` with indices raised by the Minkowski metric.
pub fn pair_contract(v: &M4<f64>, w: &M4<f64>) -> f64 {
    let mut s = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            s += MINKOWSKI[a][a] * MINKOWSKI[b][b] * v[a][b] * w[a][b];
        }
    }
    s
}

/// `(𝒫, 𝒟)` for the leading pair; `v[0..5]` are `v^(1..5)`.
pub fn polarization_factor_beta1(v: &[M4<f64>; 5], set: &NullCovectorSet) -> (f64, f64) {
    let b1 = &set.b[0];
    let d = pair_contract(&v[4], &v[0]);
    let p = contract_bb(&v[3], b1) * contract_bb(&v[2], b1) * contract_bb(&v[1], b1) * d;
    (p, d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorG {
    pub leaders: Vec<CatalogEntry>,
    pub leading: AsymptoticMonomial,
    pub g: Scaled,
    pub d: f64,
    /// Strongest term below the leaders, reported when `𝒢` vanishes.
    pub next: Option<(CatalogEntry, i64, [i64; 4])>,
}

impl IndicatorG {
    pub fn vanishes(&self) -> bool {
        self.g.is_zero()
    }
}

fn leaders_and_next(a: u32, h: Hierarchy) -> (Vec<CatalogEntry>, Option<(CatalogEntry, i64, [i64; 4])>) {
    let entries = catalog(a);
    let ex: Vec<(i64, [i64; 4])> = entries.iter().map(|e| exponents(e, a)).collect();
    let mut best: Vec<usize> = Vec::new();
    for i in 0..entries.len() {
        match best.first() {
            None => best.push(i),
            Some(&b) => match compare_exponents(ex[i], ex[b], h) {
                Dominance::Stronger => best = vec![i],
                Dominance::Equal => best.push(i),
                Dominance::Weaker => {}
            },
        }
    }
    let mut next: Option<usize> = None;
    for i in 0..entries.len() {
        if best.contains(&i) {
            continue;
        }
        if next.is_none_or(|n| compare_exponents(ex[i], ex[n], h) == Dominance::Stronger) {
            next = Some(i);
        }
    }
    (
        best.iter().map(|&i| entries[i]).collect(),
        next.map(|i| (entries[i], ex[i].0, ex[i].1)),
    )
}

/// Leading coefficient `𝒢` of the four-wave interaction for polarizations
/// `v[0..5] = v^(1..5)`.
pub fn indicator_g(
    v: &[M4<f64>; 5],
    set: &NullCovectorSet,
    a: u32,
    h: Hierarchy,
) -> Result<IndicatorG, InteractionError> {
    let (leaders, next) = leaders_and_next(a, h);
    if leaders.len() != 2 || !leaders.iter().all(|e| e.is_leader()) {
        return Err(InteractionError::UnexpectedLeaders);
    }
    let (p, d) = polarization_factor_beta1(v, set);
    let mut g = Scaled::zero();
    let mut leading = None;
    for e in &leaders {
        let m = closed_form(e, a, set, p)?;
        g = g.add(m.coefficient);
        leading.get_or_insert(m);
    }
    Ok(IndicatorG {
        leaders,
        leading: leading.expect("two leaders"),
        g,
        d,
        next,
    })
}

/// Basis of the metric harmonicity space at `b^(1)`.
pub fn harmonicity_basis(set: &NullCovectorSet) -> Result<[M4<f64>; 6], InteractionError> {
    let frame = NullCovectorFrame::new(&Metric::Minkowski, [0.0; 4], set.b[0])
        .map_err(|_| InteractionError::ParametrixUndefined { pairing: 0.0 })?;
    let basis = constraint_space_basis(&frame, Constraint::Harmonicity, 0)
        .map_err(|_| InteractionError::ParametrixUndefined { pairing: 0.0 })?;
    let mut out = [[[0.0; 4]; 4]; 6];
    for (q, col) in basis.column_iter().enumerate() {
        out[q] = PolarizationVector::from_flat(&col.into_owned()).v;
    }
    Ok(out)
}

/// Minimum-norm `V^(5)` with `𝒟(V^(5)_p, V^(1)_q) = δ_pq`.
pub fn dual_basis(v1: &[M4<f64>; 6]) -> [M4<f64>; 6] {
    let sym = |i: usize| {
        let (a, b) = crate::symbol::SYM_INDEX[i];
        let mut e = [[0.0; 4]; 4];
        e[a][b] = 1.0;
        e[b][a] = 1.0;
        e
    };
    let m = DMatrix::from_fn(6, 10, |q, i| pair_contract(&sym(i), &v1[q]));
    let x = m.pseudo_inverse(1e-12).expect("SVD converges");
    let mut out = [[[0.0; 4]; 4]; 6];
    for p in 0..6 {
        for i in 0..10 {
            let e = sym(i);
            for r in 0..4 {
                for c in 0..4 {
                    out[p][r][c] += x[(i, p)] * e[r][c];
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    /// Determinant of the row-normalized `𝒢` matrix.
    pub kappa: Complex64,
    pub rank: usize,
    /// `ln|𝒢|` of the largest entry, before normalization.
    pub ln_scale: f64,
}

/// Determinant of `𝒢(V^(5)_p, V^(1)_q)` over basis pairs, rows normalized.
pub fn kappa_determinant(
    set: &NullCovectorSet,
    v234: &[M4<f64>; 3],
    v1: &[M4<f64>; 6],
    v5: &[M4<f64>; 6],
    a: u32,
    h: Hierarchy,
) -> Result<Kappa, InteractionError> {
    let mut rows: Vec<Vec<Scaled>> = Vec::with_capacity(6);
    for p in 0..6 {
        let mut row = Vec::with_capacity(6);
        for q in 0..6 {
            let v = [v1[q], v234[0], v234[1], v234[2], v5[p]];
            row.push(indicator_g(&v, set, a, h)?.g);
        }
        rows.push(row);
    }
    let ln_scale = rows.iter().flatten().map(|s| s.ln_abs()).fold(f64::NEG_INFINITY, f64::max);
    let m = DMatrix::from_fn(6, 6, |p, q| {
        let top = rows[p].iter().map(|s| s.ln_abs()).fold(f64::NEG_INFINITY, f64::max);
        let s = rows[p][q];
        if s.is_zero() {
            Complex64::new(0.0, 0.0)
        } else {
            s.mantissa * (s.ln_scale - top).exp()
        }
    });
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|s| **s > 1e-10 * smax).count();
    Ok(Kappa {
        kappa: m.determinant(),
        rank,
        ln_scale,
    })
}
