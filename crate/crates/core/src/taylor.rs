//! Truncated multivariate Taylor polynomials.
//!
//! A [`TaylorPoly`] holds the coefficients `a_α` of `Σ a_α t^α` over all
//! multi-indices with `|α| ≤ degree`, in graded order. Arithmetic truncates at
//! the basis degree, which makes the type a forward-mode jet: evaluating a
//! closed-form expression on `x + t` yields every partial derivative of the
//! expression at `x` up to the basis degree.

use std::collections::HashMap;
use std::sync::Arc;

const NO_PRODUCT: u32 = u32::MAX;

/// Monomials in `nvars` variables of total degree `≤ degree`.
#[derive(Debug)]
pub struct MonomialBasis {
    nvars: usize,
    degree: usize,
    exponents: Vec<Vec<u8>>,
    degree_of: Vec<usize>,
    offsets: Vec<usize>,
    lookup: HashMap<Vec<u8>, usize>,
    products: Vec<u32>,
    derivatives: Vec<Vec<Option<(usize, f64)>>>,
}

impl MonomialBasis {
    pub fn new(nvars: usize, degree: usize) -> Arc<Self> {
        let mut exponents = Vec::new();
        let mut offsets = Vec::with_capacity(degree + 2);
        for d in 0..=degree {
            offsets.push(exponents.len());
            let mut current = vec![0u8; nvars];
            push_exponents(&mut exponents, &mut current, 0, d);
        }
        offsets.push(exponents.len());
        let degree_of: Vec<usize> = exponents.iter().map(|e| e.iter().map(|&k| k as usize).sum()).collect();
        let lookup: HashMap<Vec<u8>, usize> = exponents.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();

        let len = exponents.len();
        let mut products = vec![NO_PRODUCT; len * len];
        let mut scratch = vec![0u8; nvars];
        for i in 0..len {
            for j in 0..len {
                if degree_of[i] + degree_of[j] > degree {
                    continue;
                }
                for v in 0..nvars {
                    scratch[v] = exponents[i][v] + exponents[j][v];
                }
                products[i * len + j] = lookup[&scratch] as u32;
            }
        }

        let derivatives = (0..nvars)
            .map(|v| {
                exponents
                    .iter()
                    .map(|e| {
                        if e[v] == 0 {
                            None
                        } else {
                            let mut lowered = e.clone();
                            lowered[v] -= 1;
                            Some((lookup[&lowered], e[v] as f64))
                        }
                    })
                    .collect()
            })
            .collect();

        Arc::new(Self {
            nvars,
            degree,
            exponents,
            degree_of,
            offsets,
            lookup,
            products,
            derivatives,
        })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self, index: usize) -> &[u8] {
        &self.exponents[index]
    }

    pub fn degree_of(&self, index: usize) -> usize {
        self.degree_of[index]
    }

    pub fn index_of(&self, exponents: &[u8]) -> Option<usize> {
        self.lookup.get(exponents).copied()
    }

    /// Index range of the monomials of exactly degree `d`.
    pub fn degree_range(&self, d: usize) -> std::ops::Range<usize> {
        if d > self.degree {
            return self.len()..self.len();
        }
        self.offsets[d]..self.offsets[d + 1]
    }

    /// Index of the monomial `t^α` where `α` counts the entries of `indices`.
    pub fn index_of_multi(&self, indices: &[usize]) -> Option<usize> {
        let mut e = vec![0u8; self.nvars];
        for &i in indices {
            if i >= self.nvars {
                return None;
            }
            e[i] += 1;
        }
        self.index_of(&e)
    }
}

fn push_exponents(out: &mut Vec<Vec<u8>>, current: &mut [u8], var: usize, remaining: usize) {
    if var + 1 == current.len() {
        current[var] = remaining as u8;
        out.push(current.to_vec());
        current[var] = 0;
        return;
    }
    if current.is_empty() {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for k in (0..=remaining).rev() {
        current[var] = k as u8;
        push_exponents(out, current, var + 1, remaining - k);
    }
    current[var] = 0;
}

/// `α!` for the exponent vector `α`.
pub fn multi_factorial(exponents: &[u8]) -> f64 {
    exponents
        .iter()
        .map(|&k| (1..=k as u64).product::<u64>() as f64)
        .product()
}

#[derive(Debug, Clone)]
pub struct TaylorPoly {
    basis: Arc<MonomialBasis>,
    coeffs: Vec<f64>,
}

impl TaylorPoly {
    pub fn zero(basis: &Arc<MonomialBasis>) -> Self {
        Self {
            basis: Arc::clone(basis),
            coeffs: vec![0.0; basis.len()],
        }
    }

    pub fn constant(basis: &Arc<MonomialBasis>, c: f64) -> Self {
        let mut p = Self::zero(basis);
        p.coeffs[0] = c;
        p
    }

    /// The coordinate function `value + t_var`.
    pub fn variable(basis: &Arc<MonomialBasis>, var: usize, value: f64) -> Self {
        let mut p = Self::constant(basis, value);
        if basis.degree >= 1 {
            let mut e = vec![0u8; basis.nvars];
            e[var] = 1;
            let idx = basis.lookup[&e];
            p.coeffs[idx] = 1.0;
        }
        p
    }

    pub fn from_coeffs(basis: &Arc<MonomialBasis>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), basis.len());
        Self {
            basis: Arc::clone(basis),
            coeffs,
        }
    }

    pub fn basis(&self) -> &Arc<MonomialBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Partial derivative `∂^α f(x)` for the multi-index listed in `indices`.
    pub fn partial(&self, indices: &[usize]) -> Option<f64> {
        let idx = self.basis.index_of_multi(indices)?;
        Some(self.coeffs[idx] * multi_factorial(self.basis.exponents(idx)))
    }

    pub fn add(&self, other: &Self) -> Self {
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Self {
            basis: Arc::clone(&self.basis),
            coeffs,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Self {
            basis: Arc::clone(&self.basis),
            coeffs,
        }
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            basis: Arc::clone(&self.basis),
            coeffs: self.coeffs.iter().map(|c| c * k).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
    }

    /// `self += k * other`
    pub fn axpy(&mut self, k: f64, other: &Self) {
        if k == 0.0 {
            return;
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += k * b;
        }
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let mut p = self.clone();
        p.coeffs[0] += c;
        p
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(&self.basis);
        self.mul_acc(other, 1.0, &mut out);
        out
    }

    /// `out += k * self * other`
    pub fn mul_acc(&self, other: &Self, k: f64, out: &mut Self) {
        let len = self.basis.len();
        let products = &self.basis.products;
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &products[i * len..(i + 1) * len];
            let ka = k * a;
            for (j, &b) in other.coeffs.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                let target = row[j];
                if target != NO_PRODUCT {
                    out.coeffs[target as usize] += ka * b;
                }
            }
        }
    }

    pub fn derivative(&self, var: usize) -> Self {
        let mut out = Self::zero(&self.basis);
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            if let Some((target, factor)) = self.basis.derivatives[var][i] {
                out.coeffs[target] += factor * a;
            }
        }
        out
    }

    /// The homogeneous part of degree `d`.
    pub fn homogeneous(&self, d: usize) -> Self {
        let mut out = Self::zero(&self.basis);
        for i in self.basis.degree_range(d) {
            out.coeffs[i] = self.coeffs[i];
        }
        out
    }

    /// Drop every term of degree above `d`.
    pub fn truncated(&self, d: usize) -> Self {
        let mut out = self.clone();
        for i in self.basis.degree_range(d + 1).start..self.basis.len() {
            out.coeffs[i] = 0.0;
        }
        out
    }

    /// Re-express in another basis over the same variables; terms above the
    /// target degree are dropped.
    pub fn rebased(&self, target: &Arc<MonomialBasis>) -> Self {
        assert_eq!(self.basis.nvars, target.nvars);
        let mut out = Self::zero(target);
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            if let Some(j) = target.index_of(self.basis.exponents(i)) {
                out.coeffs[j] = a;
            }
        }
        out
    }

    /// Evaluate the truncated series at the displacement `t`.
    pub fn eval(&self, t: &[f64]) -> f64 {
        let basis = &self.basis;
        let powers = power_table(t, basis.degree);
        let mut sum = 0.0;
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let mut term = a;
            for (v, &k) in basis.exponents[i].iter().enumerate() {
                term *= powers[v][k as usize];
            }
            sum += term;
        }
        sum
    }

    /// `Σ_k series[k] (self - self(0))^k`, the composition of a scalar
    /// function given by its Taylor coefficients at `self(0)`.
    pub fn compose(&self, series: &[f64]) -> Self {
        let mut p = self.clone();
        p.coeffs[0] = 0.0;
        let mut out = Self::constant(&self.basis, *series.last().unwrap_or(&0.0));
        for &c in series.iter().rev().skip(1) {
            out = out.mul(&p);
            out.coeffs[0] += c;
        }
        out
    }

    pub fn recip(&self) -> Self {
        let a = self.value();
        let d = self.basis.degree;
        let series: Vec<f64> = (0..=d)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign / a.powi(k as i32 + 1)
            })
            .collect();
        self.compose(&series)
    }

    pub fn div(&self, other: &Self) -> Self {
        self.mul(&other.recip())
    }

    pub fn exp(&self) -> Self {
        let a = self.value().exp();
        let mut series = Vec::with_capacity(self.basis.degree + 1);
        let mut fact = 1.0;
        for k in 0..=self.basis.degree {
            if k > 0 {
                fact *= k as f64;
            }
            series.push(a / fact);
        }
        self.compose(&series)
    }

    pub fn ln(&self) -> Self {
        let a = self.value();
        let mut series = vec![a.ln()];
        for k in 1..=self.basis.degree {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            series.push(sign / (k as f64 * a.powi(k as i32)));
        }
        self.compose(&series)
    }

    pub fn sin(&self) -> Self {
        self.trig(0.0)
    }

    pub fn cos(&self) -> Self {
        self.trig(std::f64::consts::FRAC_PI_2)
    }

    fn trig(&self, phase: f64) -> Self {
        let a = self.value();
        let mut series = Vec::with_capacity(self.basis.degree + 1);
        let mut fact = 1.0;
        for k in 0..=self.basis.degree {
            if k > 0 {
                fact *= k as f64;
            }
            let shift = phase + k as f64 * std::f64::consts::FRAC_PI_2;
            series.push(exact_trig(a, shift) / fact);
        }
        self.compose(&series)
    }

    /// `self^c` for real `c`; requires a positive constant term.
    pub fn powf(&self, c: f64) -> Self {
        let a = self.value();
        let mut series = Vec::with_capacity(self.basis.degree + 1);
        let mut binom = 1.0;
        for k in 0..=self.basis.degree {
            if k > 0 {
                binom *= (c - (k as f64 - 1.0)) / k as f64;
            }
            series.push(binom * a.powf(c - k as f64));
        }
        self.compose(&series)
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    pub fn powi(&self, n: i32) -> Self {
        if n < 0 {
            return self.powi(-n).recip();
        }
        let mut result = Self::constant(&self.basis, 1.0);
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result
    }
}

/// `sin(a + shift)` where `shift` is a multiple of π/2, without the rounding of
/// the shifted argument.
fn exact_trig(a: f64, shift: f64) -> f64 {
    let quarter = (shift / std::f64::consts::FRAC_PI_2).round() as i64;
    match quarter.rem_euclid(4) {
        0 => a.sin(),
        1 => a.cos(),
        2 => -a.sin(),
        _ => -a.cos(),
    }
}

fn power_table(t: &[f64], degree: usize) -> Vec<Vec<f64>> {
    t.iter()
        .map(|&x| {
            let mut row = Vec::with_capacity(degree + 1);
            let mut p = 1.0;
            for _ in 0..=degree {
                row.push(p);
                p *= x;
            }
            row
        })
        .collect()
}

/// Inverse of a square matrix of Taylor polynomials (row-major, `n × n`),
/// by a Neumann series around the constant part.
pub fn matrix_inverse(m: &[TaylorPoly], n: usize) -> crate::error::Result<Vec<TaylorPoly>> {
    use nalgebra::DMatrix;
    assert_eq!(m.len(), n * n);
    let basis = m[0].basis().clone();
    let m0 = DMatrix::from_fn(n, n, |i, j| m[i * n + j].value());
    let inv0 = m0.try_inverse().ok_or(crate::error::Error::SingularMatrix)?;
    // a = -inv0 · (m - m0), which has zero constant terms.
    let mut a = vec![TaylorPoly::zero(&basis); n * n];
    for i in 0..n {
        for j in 0..n {
            let out = &mut a[i * n + j];
            for k in 0..n {
                let c = -inv0[(i, k)];
                if c != 0.0 {
                    out.axpy(c, &m[k * n + j]);
                }
            }
            out.coeffs[0] = 0.0;
        }
    }
    let identity = |i: usize, j: usize| TaylorPoly::constant(&basis, if i == j { 1.0 } else { 0.0 });
    let mut sum: Vec<TaylorPoly> = (0..n * n).map(|k| identity(k / n, k % n)).collect();
    let mut power = sum.clone();
    for _ in 0..basis.degree() {
        let mut next = vec![TaylorPoly::zero(&basis); n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if a[i * n + k].is_zero() || power[k * n + j].is_zero() {
                        continue;
                    }
                    a[i * n + k].mul_acc(&power[k * n + j], 1.0, &mut next[i * n + j]);
                }
            }
        }
        if next.iter().all(|p| p.is_zero()) {
            break;
        }
        for (s, p) in sum.iter_mut().zip(&next) {
            s.add_assign(p);
        }
        power = next;
    }
    let mut out = vec![TaylorPoly::zero(&basis); n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let c = inv0[(k, j)];
                if c != 0.0 {
                    out[i * n + j].axpy(c, &sum[i * n + k]);
                }
            }
        }
    }
    Ok(out)
}
