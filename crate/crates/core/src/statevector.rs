//! Dense n-qudit state vectors: the brute-force oracle for every symbolic module.
//!
//! Conventions: |+_j⟩ = d^{-1/2} Σ_k ϖ^{jk}|k⟩, Z|k⟩ = ϖ^k|k⟩, X|k⟩ = |k−1⟩,
//! F|k⟩ = |+_k⟩, F_q|k⟩ = |+_{qk}⟩, S_c|k⟩ = |ck⟩. Measuring "in the basis of U"
//! means projecting onto {U|k⟩}. Site 0 is the most significant digit.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::zd::PrimeDim;

/// Default amplitude cap, 5^8.
pub const DEFAULT_CAP: usize = 390_625;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    n: usize,
    data: Vec<Complex64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Mat { n, data: vec![ZERO; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                data.push(f(r, c));
            }
        }
        Mat { n, data }
    }

    pub fn diagonal(diag: &[Complex64]) -> Self {
        let n = diag.len();
        Mat::from_fn(n, |r, c| if r == c { diag[r] } else { ZERO })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.n + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.n).map(|r| self.get(r, c)).collect()
    }

    pub fn mul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Mat::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self.data[r * n + k];
                if a == ZERO {
                    continue;
                }
                for c in 0..n {
                    out.data[r * n + c] += a * rhs.data[k * n + c];
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> Mat {
        Mat::from_fn(self.n, |r, c| self.get(c, r).conj())
    }

    pub fn kron(&self, rhs: &Mat) -> Mat {
        let (a, b) = (self.n, rhs.n);
        Mat::from_fn(a * b, |r, c| self.get(r / b, c / b) * rhs.get(r % b, c % b))
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|r| (0..self.n).map(|c| self.get(r, c) * v[c]).sum())
            .collect()
    }

    pub fn scale(&self, s: Complex64) -> Mat {
        Mat { n: self.n, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn pow(&self, e: u64) -> Mat {
        let mut acc = Mat::identity(self.n);
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        acc
    }

    /// Max-entry distance.
    pub fn distance(&self, rhs: &Mat) -> f64 {
        assert_eq!(self.n, rhs.n);
        self.data.iter().zip(&rhs.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Distance after removing the best global phase, via the Hilbert-Schmidt overlap.
    pub fn distance_up_to_phase(&self, rhs: &Mat) -> f64 {
        let ov: Complex64 = self.data.iter().zip(&rhs.data).map(|(a, b)| a.conj() * b).sum();
        if ov.norm() < 1e-300 {
            return self.distance(rhs).max(1.0);
        }
        let ph = ov / ov.norm();
        self.scale(ph).distance(rhs)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.mul(&self.adjoint()).distance(&Mat::identity(self.n)) < tol
    }
}

/// A d×d unitary, checked at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalUnitary {
    d: PrimeDim,
    mat: Mat,
}

impl LocalUnitary {
    pub fn new(d: PrimeDim, mat: Mat) -> Result<Self> {
        if mat.dim() != d.as_usize() {
            return Err(Error::ShapeMismatch(format!("{}x{} matrix for d = {}", mat.dim(), mat.dim(), d)));
        }
        if !mat.is_unitary(1e-10) {
            return Err(Error::Invalid("matrix is not unitary".into()));
        }
        Ok(LocalUnitary { d, mat })
    }

    fn trusted(d: PrimeDim, mat: Mat) -> Self {
        debug_assert!(mat.is_unitary(1e-10));
        LocalUnitary { d, mat }
    }

    pub fn dim(&self) -> PrimeDim {
        self.d
    }

    pub fn matrix(&self) -> &Mat {
        &self.mat
    }

    pub fn identity(d: PrimeDim) -> Self {
        Self::trusted(d, Mat::identity(d.as_usize()))
    }

    /// Z^e.
    pub fn z_pow(d: PrimeDim, e: i64) -> Self {
        Self::diag_exponents(d, |k| e * k as i64)
    }

    /// X^e, with X|k⟩ = |k−1⟩.
    pub fn x_pow(d: PrimeDim, e: i64) -> Self {
        let n = d.as_usize();
        Self::trusted(d, Mat::from_fn(n, |r, c| if r as u32 == d.reduce(c as i64 - e) { ONE } else { ZERO }))
    }

    /// F|k⟩ = |+_k⟩.
    pub fn fourier(d: PrimeDim) -> Self {
        Self::f_q(d, 1)
    }

    /// F_q|k⟩ = |+_{qk}⟩. Unitary only for q ≠ 0.
    pub fn f_q(d: PrimeDim, q: u32) -> Self {
        let n = d.as_usize();
        let s = 1.0 / (n as f64).sqrt();
        let mat = Mat::from_fn(n, |r, c| d.omega(q as i64 * r as i64 * c as i64) * s);
        LocalUnitary { d, mat }
    }

    /// S_c|k⟩ = |ck⟩. Unitary only for c ≠ 0.
    pub fn s_c(d: PrimeDim, c: u32) -> Self {
        let n = d.as_usize();
        LocalUnitary { d, mat: Mat::from_fn(n, |r, k| if r as u32 == d.mul(c, k as u32) { ONE } else { ZERO }) }
    }

    /// diag(ϖ^{f(k)}).
    pub fn diag_exponents(d: PrimeDim, f: impl Fn(u32) -> i64) -> Self {
        let diag: Vec<Complex64> = (0..d.get()).map(|k| d.omega(f(k))).collect();
        Self::trusted(d, Mat::diagonal(&diag))
    }

    /// diag(e^{iθ_k}) for arbitrary real phases.
    pub fn diag_phases(d: PrimeDim, theta: impl Fn(u32) -> f64) -> Self {
        let diag: Vec<Complex64> = (0..d.get()).map(|k| Complex64::from_polar(1.0, theta(k))).collect();
        Self::trusted(d, Mat::diagonal(&diag))
    }

    /// self · rhs (rhs acts first).
    pub fn then_after(&self, rhs: &LocalUnitary) -> Self {
        Self::trusted(self.d, self.mat.mul(&rhs.mat))
    }

    pub fn adjoint(&self) -> Self {
        Self::trusted(self.d, self.mat.adjoint())
    }

    pub fn pow(&self, e: u64) -> Self {
        Self::trusted(self.d, self.mat.pow(e))
    }

    pub fn scale(&self, phase: Complex64) -> Self {
        Self::trusted(self.d, self.mat.scale(phase))
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.mat.apply(v)
    }
}

/// Single-qudit measurement basis. Outcome `j` labels the j-th basis vector.
#[derive(Clone, Debug, PartialEq)]
pub enum MeasBasis {
    Computational,
    /// {|+_j⟩}.
    Fourier,
    /// Eigenbasis of ZX^k; outcome m has eigenvalue ϖ^m.
    ZXk(u32),
    /// {F_q†|j⟩}.
    FqDagger(u32),
    /// {U|j⟩}.
    Custom(LocalUnitary),
}

/// Exponents α_l with α_{l+k} + l = α_l and α_0 = 0.
///
/// The recursion walks the cycle l → l+k, which covers ℤ_d since gcd(k, d) = 1;
/// closing the cycle is consistent because Σ_l l ≡ 0 mod d for odd d.
pub fn zxk_alpha(d: PrimeDim, k: u32) -> Result<Vec<u32>> {
    d.require_odd("ZX^k basis")?;
    let k = k % d.get();
    if k == 0 {
        return Err(Error::Invalid("ZX^k basis needs k != 0".into()));
    }
    let n = d.as_usize();
    let mut alpha = vec![u32::MAX; n];
    let mut l = 0u32;
    alpha[0] = 0;
    for _ in 0..n - 1 {
        let next = d.add(l, k);
        alpha[next as usize] = d.sub(alpha[l as usize], l);
        l = next;
    }
    debug_assert_eq!(d.sub(alpha[l as usize], l), 0, "cycle must close");
    Ok(alpha)
}

impl MeasBasis {
    /// Unitary whose columns are the basis vectors.
    pub fn unitary(&self, d: PrimeDim) -> Result<LocalUnitary> {
        let n = d.as_usize();
        match self {
            MeasBasis::Computational => Ok(LocalUnitary::identity(d)),
            MeasBasis::Fourier => Ok(LocalUnitary::fourier(d)),
            MeasBasis::ZXk(k) => {
                let alpha = zxk_alpha(d, *k)?;
                let s = 1.0 / (n as f64).sqrt();
                // column m = Σ_l ϖ^{α_l} |l+m⟩ / √d
                let mat = Mat::from_fn(n, |r, m| {
                    let l = d.sub(r as u32, m as u32) as usize;
                    d.omega(alpha[l] as i64) * s
                });
                Ok(LocalUnitary::trusted(d, mat))
            }
            MeasBasis::FqDagger(q) => {
                if q % d.get() == 0 {
                    return Err(Error::Invalid("F_q basis needs q != 0".into()));
                }
                Ok(LocalUnitary::f_q(d, *q).adjoint())
            }
            MeasBasis::Custom(u) => {
                if u.dim() != d {
                    return Err(Error::ShapeMismatch("custom basis dimension".into()));
                }
                Ok(u.clone())
            }
        }
    }

    pub fn vectors(&self, d: PrimeDim) -> Result<Vec<Vec<Complex64>>> {
        let u = self.unitary(d)?;
        Ok((0..d.as_usize()).map(|c| u.matrix().column(c)).collect())
    }
}

/// How an outcome is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureMode {
    Forced(u32),
    /// Born-rule sampling from a ChaCha8 stream seeded with this value.
    Sample(u64),
}

/// Result of a single-site measurement; the measured site is removed from `state`.
#[derive(Clone, Debug)]
pub struct Measured {
    pub outcome: u32,
    pub probability: f64,
    pub state: StateVector,
}

/// Dense state of `n` qudits.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateVector {
    #[serde(serialize_with = "ser_dim")]
    d: PrimeDim,
    n: usize,
    #[serde(serialize_with = "ser_amps")]
    amps: Vec<Complex64>,
}

fn ser_dim<S: serde::Serializer>(d: &PrimeDim, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u32(d.get())
}

fn ser_amps<S: serde::Serializer>(a: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(a.len()))?;
    for z in a {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

fn checked_size(d: PrimeDim, n: usize, cap: usize) -> Result<usize> {
    let mut size = 1usize;
    for _ in 0..n {
        size = size.checked_mul(d.as_usize()).filter(|&s| s <= cap).ok_or(Error::CapExceeded { d: d.get(), n, cap })?;
    }
    Ok(size)
}

impl StateVector {
    /// |+⟩^{⊗n}.
    pub fn new_plus(d: PrimeDim, n: usize) -> Result<Self> {
        Self::new_plus_capped(d, n, DEFAULT_CAP)
    }

    pub fn new_plus_capped(d: PrimeDim, n: usize, cap: usize) -> Result<Self> {
        let size = checked_size(d, n, cap)?;
        let a = Complex64::new(1.0 / (size as f64).sqrt(), 0.0);
        Ok(StateVector { d, n, amps: vec![a; size] })
    }

    /// Computational basis state |digits⟩.
    pub fn basis(d: PrimeDim, digits: &[u32]) -> Result<Self> {
        let size = checked_size(d, digits.len(), DEFAULT_CAP)?;
        let mut amps = vec![ZERO; size];
        let mut idx = 0usize;
        for &k in digits {
            if k >= d.get() {
                return Err(Error::OutcomeOutOfRange { outcome: k, d: d.get() });
            }
            idx = idx * d.as_usize() + k as usize;
        }
        amps[idx] = ONE;
        Ok(StateVector { d, n: digits.len(), amps })
    }

    /// Normalises `amps`; fails on the zero vector or a length that is not d^n.
    pub fn from_amps(d: PrimeDim, n: usize, mut amps: Vec<Complex64>) -> Result<Self> {
        let size = checked_size(d, n, usize::MAX)?;
        if amps.len() != size {
            return Err(Error::ShapeMismatch(format!("{} amplitudes for {}^{}", amps.len(), d, n)));
        }
        let norm = norm_sqr(&amps).sqrt();
        if norm < 1e-300 {
            return Err(Error::Invalid("zero vector".into()));
        }
        for a in &mut amps {
            *a /= norm;
        }
        Ok(StateVector { d, n, amps })
    }

    /// Product state ⊗_i v_i.
    pub fn product(d: PrimeDim, factors: &[Vec<Complex64>]) -> Result<Self> {
        let mut amps = vec![ONE];
        for f in factors {
            if f.len() != d.as_usize() {
                return Err(Error::ShapeMismatch("factor length".into()));
            }
            amps = amps.iter().flat_map(|a| f.iter().map(move |b| a * b)).collect();
        }
        Self::from_amps(d, factors.len(), amps)
    }

    /// self ⊗ rhs; rhs's sites follow self's.
    pub fn tensor(&self, rhs: &StateVector) -> Result<Self> {
        if self.d != rhs.d {
            return Err(Error::ShapeMismatch("dimension".into()));
        }
        checked_size(self.d, self.n + rhs.n, usize::MAX)?;
        let amps = self.amps.iter().flat_map(|a| rhs.amps.iter().map(move |b| a * b)).collect();
        Ok(StateVector { d: self.d, n: self.n + rhs.n, amps })
    }

    #[inline]
    pub fn dim(&self) -> PrimeDim {
        self.d
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps).sqrt()
    }

    fn stride(&self, site: usize) -> usize {
        self.d.as_usize().pow((self.n - 1 - site) as u32)
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site < self.n {
            Ok(())
        } else {
            Err(Error::SiteOutOfRange { site, n: self.n })
        }
    }

    /// Digit of `site` in basis index `idx`.
    #[inline]
    pub fn digit(&self, idx: usize, site: usize) -> u32 {
        ((idx / self.stride(site)) % self.d.as_usize()) as u32
    }

    /// Multiplies every amplitude by ϖ^{f(digits)}.
    pub fn apply_diagonal(&mut self, mut f: impl FnMut(&[u32]) -> i64) {
        let d = self.d.as_usize();
        let mut digits = vec![0u32; self.n];
        for a in self.amps.iter_mut() {
            *a *= self.d.omega(f(&digits));
            for s in (0..digits.len()).rev() {
                digits[s] += 1;
                if (digits[s] as usize) < d {
                    break;
                }
                digits[s] = 0;
            }
        }
    }

    /// CZ^q between sites a and b: |k_a k_b⟩ ↦ ϖ^{q k_a k_b}|k_a k_b⟩.
    pub fn apply_cz_pow(&mut self, q: u32, a: usize, b: usize) -> Result<()> {
        self.check_site(a)?;
        self.check_site(b)?;
        if a == b {
            return Err(Error::RepeatedSite(a));
        }
        if q % self.d.get() == 0 {
            return Ok(());
        }
        let (sa, sb, d) = (self.stride(a), self.stride(b), self.d.as_usize());
        let table: Vec<Complex64> = (0..d * d).map(|t| self.d.omega(q as i64 * (t / d) as i64 * (t % d) as i64)).collect();
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            let ka = (idx / sa) % d;
            let kb = (idx / sb) % d;
            *amp *= table[ka * d + kb];
        }
        Ok(())
    }

    /// CCZ^k on (a, b, c): |k_a k_b k_c⟩ ↦ ϖ^{k k_a k_b k_c}|k_a k_b k_c⟩.
    pub fn apply_ccz_pow(&mut self, k: u32, a: usize, b: usize, c: usize) -> Result<()> {
        for s in [a, b, c] {
            self.check_site(s)?;
        }
        if a == b || a == c {
            return Err(Error::RepeatedSite(a));
        }
        if b == c {
            return Err(Error::RepeatedSite(b));
        }
        if k % self.d.get() == 0 {
            return Ok(());
        }
        let (sa, sb, sc, d) = (self.stride(a), self.stride(b), self.stride(c), self.d.as_usize());
        let table: Vec<Complex64> = (0..d).map(|t| self.d.omega(k as i64 * t as i64)).collect();
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            let prod = ((idx / sa) % d) * ((idx / sb) % d) * ((idx / sc) % d);
            *amp *= table[prod % d];
        }
        Ok(())
    }

    /// Applies a single-qudit unitary to `site`.
    pub fn apply_local(&mut self, site: usize, u: &LocalUnitary) -> Result<()> {
        self.check_site(site)?;
        if u.dim() != self.d {
            return Err(Error::ShapeMismatch("unitary dimension".into()));
        }
        let (st, d) = (self.stride(site), self.d.as_usize());
        let block = st * d;
        let m = u.matrix();
        let mut buf = vec![ZERO; d];
        for hi in (0..self.amps.len()).step_by(block) {
            for lo in 0..st {
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = self.amps[hi + k * st + lo];
                }
                for r in 0..d {
                    let mut acc = ZERO;
                    for (c, b) in buf.iter().enumerate() {
                        acc += m.get(r, c) * b;
                    }
                    self.amps[hi + r * st + lo] = acc;
                }
            }
        }
        Ok(())
    }

    /// Applies a d²×d² unitary to (a, b); row index = d·k_a + k_b.
    pub fn apply_two(&mut self, a: usize, b: usize, u: &Mat) -> Result<()> {
        self.check_site(a)?;
        self.check_site(b)?;
        if a == b {
            return Err(Error::RepeatedSite(a));
        }
        let d = self.d.as_usize();
        if u.dim() != d * d {
            return Err(Error::ShapeMismatch("two-qudit unitary dimension".into()));
        }
        let (sa, sb) = (self.stride(a), self.stride(b));
        let mut buf = vec![ZERO; d * d];
        for base in 0..self.amps.len() {
            if (base / sa) % d != 0 || (base / sb) % d != 0 {
                continue;
            }
            for ka in 0..d {
                for kb in 0..d {
                    buf[ka * d + kb] = self.amps[base + ka * sa + kb * sb];
                }
            }
            for r in 0..d * d {
                let mut acc = ZERO;
                for (c, x) in buf.iter().enumerate() {
                    acc += u.get(r, c) * x;
                }
                self.amps[base + (r / d) * sa + (r % d) * sb] = acc;
            }
        }
        Ok(())
    }

    /// Unnormalised ⟨v|_site ψ over the remaining n−1 sites.
    fn contract(&self, site: usize, v: &[Complex64]) -> Vec<Complex64> {
        let (st, d) = (self.stride(site), self.d.as_usize());
        let block = st * d;
        let mut out = Vec::with_capacity(self.amps.len() / d);
        for hi in (0..self.amps.len()).step_by(block) {
            for lo in 0..st {
                let mut acc = ZERO;
                for (k, vk) in v.iter().enumerate() {
                    acc += vk.conj() * self.amps[hi + k * st + lo];
                }
                out.push(acc);
            }
        }
        out
    }

    /// Born probabilities of every outcome of measuring `site` in `basis`.
    pub fn outcome_probabilities(&self, site: usize, basis: &MeasBasis) -> Result<Vec<f64>> {
        self.check_site(site)?;
        let vecs = basis.vectors(self.d)?;
        Ok(vecs.iter().map(|v| norm_sqr(&self.contract(site, v))).collect())
    }

    /// Projects `site` onto the chosen basis vector and removes it.
    pub fn measure(&self, site: usize, basis: &MeasBasis, mode: MeasureMode) -> Result<Measured> {
        match mode {
            MeasureMode::Forced(m) => self.measure_forced(site, basis, m),
            MeasureMode::Sample(seed) => self.measure_with(site, basis, &mut ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn measure_forced(&self, site: usize, basis: &MeasBasis, outcome: u32) -> Result<Measured> {
        self.check_site(site)?;
        if outcome >= self.d.get() {
            return Err(Error::OutcomeOutOfRange { outcome, d: self.d.get() });
        }
        let u = basis.unitary(self.d)?;
        let v = u.matrix().column(outcome as usize);
        let amps = self.contract(site, &v);
        let probability = norm_sqr(&amps);
        if probability < 1e-12 {
            return Err(Error::ZeroProbability { outcome, prob: probability });
        }
        let s = 1.0 / probability.sqrt();
        let amps = amps.into_iter().map(|a| a * s).collect();
        Ok(Measured { outcome, probability, state: StateVector { d: self.d, n: self.n - 1, amps } })
    }

    pub fn measure_with<R: Rng + ?Sized>(&self, site: usize, basis: &MeasBasis, rng: &mut R) -> Result<Measured> {
        let probs = self.outcome_probabilities(site, basis)?;
        let mut x: f64 = rng.gen::<f64>() * probs.iter().sum::<f64>();
        let mut pick = probs.len() - 1;
        for (j, p) in probs.iter().enumerate() {
            if x < *p {
                pick = j;
                break;
            }
            x -= p;
        }
        while probs[pick] < 1e-12 {
            pick = (pick + probs.len() - 1) % probs.len();
        }
        self.measure_forced(site, basis, pick as u32)
    }

    /// ⟨self|rhs⟩.
    pub fn inner(&self, rhs: &StateVector) -> Result<Complex64> {
        if self.d != rhs.d || self.n != rhs.n {
            return Err(Error::ShapeMismatch(format!("({}, {}) vs ({}, {})", self.d, self.n, rhs.d, rhs.n)));
        }
        // blockwise partial sums: a running sum over 10⁶ equal-sized terms drifts by ~1e-11
        let partial: Vec<Complex64> = self
            .amps
            .chunks(1024)
            .zip(rhs.amps.chunks(1024))
            .map(|(x, y)| x.iter().zip(y).map(|(a, b)| a.conj() * b).sum())
            .collect();
        Ok(pairwise_sum(&partial))
    }

    /// Moves sites so that new site i is old site `order[i]`.
    pub fn permute_sites(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.n];
        if order.len() != self.n {
            return Err(Error::ShapeMismatch("permutation length".into()));
        }
        for &o in order {
            self.check_site(o)?;
            if std::mem::replace(&mut seen[o], true) {
                return Err(Error::RepeatedSite(o));
            }
        }
        let strides: Vec<usize> = order.iter().map(|&o| self.stride(o)).collect();
        let d = self.d.as_usize();
        let mut amps = vec![ZERO; self.amps.len()];
        for (new_idx, slot) in amps.iter_mut().enumerate() {
            let mut rest = new_idx;
            let mut old = 0usize;
            for s in (0..self.n).rev() {
                old += (rest % d) * strides[s];
                rest /= d;
            }
            *slot = self.amps[old];
        }
        Ok(StateVector { d: self.d, n: self.n, amps })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("state serialises")
    }
}

/// Σ|a|², blockwise like [`StateVector::inner`].
fn norm_sqr(v: &[Complex64]) -> f64 {
    let partial: Vec<f64> = v.chunks(1024).map(|c| c.iter().map(|a| a.norm_sqr()).sum()).collect();
    partial.iter().sum()
}

fn pairwise_sum(v: &[Complex64]) -> Complex64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (l, r) = v.split_at(v.len() / 2);
    pairwise_sum(l) + pairwise_sum(r)
}

/// |⟨a|b⟩|, clamped to [0, 1].
pub fn fidelity_up_to_phase(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm().min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn p(d: u32) -> PrimeDim {
        PrimeDim::new(d).unwrap()
    }

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn plus_states() {
        let s = StateVector::new_plus(p(2), 1).unwrap();
        assert!(s.amplitudes().iter().all(|a| close(*a, Complex64::new(0.5f64.sqrt(), 0.0))));
        let s = StateVector::new_plus(p(3), 2).unwrap();
        assert_eq!(s.amplitudes().len(), 9);
        assert!(s.amplitudes().iter().all(|a| close(*a, Complex64::new(1.0 / 3.0, 0.0))));
        assert!(matches!(StateVector::new_plus(p(5), 9), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn cz_examples() {
        let mut s = StateVector::basis(p(2), &[1, 1]).unwrap();
        s.apply_cz_pow(1, 0, 1).unwrap();
        assert!(close(s.amplitudes()[3], -ONE));
        let mut s = StateVector::basis(p(3), &[1, 2]).unwrap();
        s.apply_cz_pow(2, 0, 1).unwrap();
        assert!(close(s.amplitudes()[5], p(3).omega(1)));
        let before = StateVector::new_plus(p(3), 2).unwrap();
        let mut after = before.clone();
        after.apply_cz_pow(0, 0, 1).unwrap();
        assert_eq!(before, after);
        assert_eq!(after.apply_cz_pow(1, 1, 1), Err(Error::RepeatedSite(1)));
        assert!(matches!(after.apply_cz_pow(1, 0, 2), Err(Error::SiteOutOfRange { .. })));
    }

    #[test]
    fn ccz_examples() {
        let mut s = StateVector::basis(p(2), &[1, 1, 1]).unwrap();
        s.apply_ccz_pow(1, 0, 1, 2).unwrap();
        assert!(close(s.amplitudes()[7], -ONE));
        let mut s = StateVector::basis(p(3), &[1, 2, 2]).unwrap();
        s.apply_ccz_pow(1, 0, 1, 2).unwrap();
        assert!(close(s.amplitudes()[9 + 6 + 2], p(3).omega(1)));
        assert_eq!(s.apply_ccz_pow(1, 0, 1, 0), Err(Error::RepeatedSite(0)));
    }

    #[test]
    fn zxk_eigenvectors() {
        for d in [3u32, 5, 7] {
            let dim = p(d);
            for k in 1..d {
                let zxk = LocalUnitary::z_pow(dim, 1).then_after(&LocalUnitary::x_pow(dim, k as i64));
                let vecs = MeasBasis::ZXk(k).vectors(dim).unwrap();
                for (m, v) in vecs.iter().enumerate() {
                    let w = zxk.apply(v);
                    let lambda = dim.omega(m as i64);
                    for (wi, vi) in w.iter().zip(v) {
                        assert!((wi - lambda * vi).norm() < 1e-10, "d={d} k={k} m={m}");
                    }
                }
            }
        }
        assert!(MeasBasis::ZXk(0).vectors(p(3)).is_err());
        assert!(MeasBasis::ZXk(1).vectors(p(2)).is_err());
    }

    #[test]
    fn bases_are_orthonormal() {
        for d in [2u32, 3, 5] {
            let dim = p(d);
            let mut bases = vec![MeasBasis::Computational, MeasBasis::Fourier, MeasBasis::FqDagger(1)];
            if dim.is_odd() {
                bases.push(MeasBasis::ZXk(1));
                bases.push(MeasBasis::ZXk(d - 1));
                bases.push(MeasBasis::FqDagger(2));
            }
            for b in bases {
                let v = b.vectors(dim).unwrap();
                for i in 0..v.len() {
                    for j in 0..v.len() {
                        let ip: Complex64 = v[i].iter().zip(&v[j]).map(|(x, y)| x.conj() * y).sum();
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((ip.norm() - want).abs() < 1e-10, "{b:?} d={d}");
                    }
                }
            }
        }
    }

    #[test]
    fn computational_and_fourier_are_unbiased() {
        for d in [2u32, 3, 5, 7] {
            let dim = p(d);
            let a = MeasBasis::Computational.vectors(dim).unwrap();
            let b = MeasBasis::Fourier.vectors(dim).unwrap();
            for x in &a {
                for y in &b {
                    let ip: Complex64 = x.iter().zip(y).map(|(u, v)| u.conj() * v).sum();
                    assert!((ip.norm() - 1.0 / (d as f64).sqrt()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn measuring_plus_is_uniform() {
        let s = StateVector::new_plus(p(3), 1).unwrap();
        for pr in s.outcome_probabilities(0, &MeasBasis::Computational).unwrap() {
            assert!((pr - 1.0 / 3.0).abs() < 1e-12);
        }
        let z = StateVector::basis(p(3), &[0]).unwrap();
        let m = z.measure(0, &MeasBasis::Computational, MeasureMode::Sample(9)).unwrap();
        assert_eq!(m.outcome, 0);
        assert!((m.probability - 1.0).abs() < 1e-12);
        assert!(matches!(
            z.measure(0, &MeasBasis::Computational, MeasureMode::Forced(1)),
            Err(Error::ZeroProbability { .. })
        ));
    }

    #[test]
    fn cz_partner_collapses_to_plus_j() {
        // Oracle: CZ|+⟩|+⟩ = (1/3) Σ_{a,b} ϖ^{ab}|ab⟩; fixing a = 1 leaves (1/√3) Σ_b ϖ^b|b⟩.
        let d = p(3);
        let mut s = StateVector::new_plus(d, 2).unwrap();
        s.apply_cz_pow(1, 0, 1).unwrap();
        let expected: Vec<Complex64> = (0..9)
            .map(|i| d.omega((i / 3) as i64 * (i % 3) as i64) / 3.0)
            .collect();
        for (a, b) in s.amplitudes().iter().zip(&expected) {
            assert!((a - b).norm() < 1e-12);
        }
        let m = s.measure_forced(0, &MeasBasis::Computational, 1).unwrap();
        let plus1: Vec<Complex64> = (0..3).map(|b| d.omega(b) / 3f64.sqrt()).collect();
        let want = StateVector::product(d, &[plus1]).unwrap();
        assert!((fidelity_up_to_phase(&m.state, &want).unwrap() - 1.0).abs() < 1e-12);
        assert!((m.probability - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_examples() {
        let d = p(3);
        let psi = StateVector::new_plus(d, 2).unwrap();
        assert!((fidelity_up_to_phase(&psi, &psi).unwrap() - 1.0).abs() < 1e-12);
        let mut rot = psi.clone();
        rot.apply_diagonal(|_| 1);
        assert!((fidelity_up_to_phase(&psi, &rot).unwrap() - 1.0).abs() < 1e-12);
        let z0 = StateVector::basis(d, &[0]).unwrap();
        let z1 = StateVector::basis(d, &[1]).unwrap();
        assert!(fidelity_up_to_phase(&z0, &z1).unwrap() < 1e-12);
        assert!(fidelity_up_to_phase(&z0, &psi).is_err());
    }

    #[test]
    fn ccz_conjugation_identity() {
        // CCZ^{†k} X_a CCZ^k = CZ^k_{bc} X_a, as operators on all basis states.
        for d in [2u32, 3, 5] {
            let dim = p(d);
            for k in 1..d {
                for idx in 0..(d * d * d) {
                    let digits = [idx / (d * d), (idx / d) % d, idx % d];
                    let mut lhs = StateVector::basis(dim, &digits).unwrap();
                    lhs.apply_ccz_pow(k, 0, 1, 2).unwrap();
                    lhs.apply_local(0, &LocalUnitary::x_pow(dim, 1)).unwrap();
                    lhs.apply_ccz_pow(d - k, 0, 1, 2).unwrap();
                    let mut rhs = StateVector::basis(dim, &digits).unwrap();
                    rhs.apply_local(0, &LocalUnitary::x_pow(dim, 1)).unwrap();
                    rhs.apply_cz_pow(k, 1, 2).unwrap();
                    let ip = lhs.inner(&rhs).unwrap();
                    assert!((ip - ONE).norm() < 1e-10, "d={d} k={k} idx={idx}");
                }
            }
        }
    }

    #[test]
    fn s_c_commutation() {
        for d in [3u32, 5, 7] {
            let dim = p(d);
            let x = LocalUnitary::x_pow(dim, 1);
            let z = LocalUnitary::z_pow(dim, 1);
            for c in 1..d {
                let s = LocalUnitary::s_c(dim, c);
                let sx = s.then_after(&x);
                let xs = LocalUnitary::x_pow(dim, c as i64).then_after(&s);
                assert!(sx.matrix().distance(xs.matrix()) < 1e-10);
                let sz = s.then_after(&z);
                let cinv = dim.inv(c).unwrap();
                let zs = LocalUnitary::z_pow(dim, cinv as i64).then_after(&s);
                assert!(sz.matrix().distance(zs.matrix()) < 1e-10);
            }
        }
    }

    #[test]
    fn fq_is_fourier_times_s() {
        for d in [3u32, 5] {
            let dim = p(d);
            for q in 1..d {
                let lhs = LocalUnitary::f_q(dim, q);
                let rhs = LocalUnitary::fourier(dim).then_after(&LocalUnitary::s_c(dim, q));
                assert!(lhs.matrix().distance(rhs.matrix()) < 1e-12);
                assert!(lhs.matrix().is_unitary(1e-10));
            }
        }
    }

    #[test]
    fn permute_and_two_site() {
        let d = p(3);
        let s = StateVector::basis(d, &[0, 1, 2]).unwrap();
        let t = s.permute_sites(&[2, 0, 1]).unwrap();
        assert_eq!(t, StateVector::basis(d, &[2, 0, 1]).unwrap());
        // CZ as a two-site matrix agrees with the diagonal kernel
        let cz = Mat::diagonal(&(0..9).map(|t| d.omega((t / 3) * (t % 3))).collect::<Vec<_>>());
        let mut a = StateVector::new_plus(d, 3).unwrap();
        a.apply_local(1, &LocalUnitary::x_pow(d, 1)).unwrap();
        let mut b = a.clone();
        a.apply_two(2, 0, &cz).unwrap();
        b.apply_cz_pow(1, 0, 2).unwrap();
        assert!((fidelity_up_to_phase(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_dump() {
        let s = StateVector::basis(p(2), &[1]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(v["d"], 2);
        assert_eq!(v["n"], 1);
        assert_eq!(v["amps"][1][0], 1.0);
    }

    fn random_state(d: PrimeDim, n: usize, seed: u64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = d.as_usize().pow(n as u32);
        let amps = (0..size).map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        StateVector::from_amps(d, n, amps).unwrap()
    }

    proptest! {
        #[test]
        fn gates_preserve_norm(seed in any::<u64>(), q in 0u32..5, k in 0u32..5, site in 0usize..3) {
            let d = p(5);
            let mut s = random_state(d, 3, seed);
            s.apply_cz_pow(q, site, (site + 1) % 3).unwrap();
            s.apply_ccz_pow(k, 0, 1, 2).unwrap();
            s.apply_local(site, &LocalUnitary::fourier(d)).unwrap();
            s.apply_local(site, &MeasBasis::ZXk(2).unitary(d).unwrap()).unwrap();
            prop_assert!((s.norm() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn ccz_is_symmetric(seed in any::<u64>(), k in 1u32..3, perm in 0usize..6) {
            let d = p(3);
            let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let o = orders[perm];
            let mut a = random_state(d, 4, seed);
            let mut b = a.clone();
            a.apply_ccz_pow(k, 0, 1, 3).unwrap();
            let sites = [0, 1, 3];
            b.apply_ccz_pow(k, sites[o[0]], sites[o[1]], sites[o[2]]).unwrap();
            for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
                prop_assert!((x - y).norm() < 1e-12);
            }
        }

        #[test]
        fn probabilities_sum_to_one(seed in any::<u64>(), site in 0usize..3, b in 0usize..5) {
            let d = p(5);
            let s = random_state(d, 3, seed);
            let basis = [MeasBasis::Computational, MeasBasis::Fourier, MeasBasis::ZXk(3), MeasBasis::FqDagger(2), MeasBasis::ZXk(1)][b].clone();
            let total: f64 = s.outcome_probabilities(site, &basis).unwrap().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
            let m = s.measure(site, &basis, MeasureMode::Sample(seed)).unwrap();
            prop_assert!((m.state.norm() - 1.0).abs() < 1e-10);
        }
    }
}
