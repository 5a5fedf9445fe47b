use serde::{Deserialize, Serialize};

use crate::statevector::{LocalUnitary, MeasBasis};
use crate::zd::PrimeDim;

/// Accumulated single-qudit correction, acting as
///
/// U|j⟩ = ϖ^{phase + (z_pow + lin)·j + quad·j²} |perm·j − x_pow⟩.
///
/// Every rule output stays inside this family: Pauli powers, S_c and quadratic
/// diagonals are closed under composition and under affine substitution of j.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocalFrame {
    pub z_pow: u32,
    pub x_pow: u32,
    /// c in S_c; never 0.
    pub perm: u32,
    pub lin: u32,
    pub quad: u32,
    /// Global phase exponent; irrelevant physically, kept so compositions are exact.
    pub phase: u32,
}

impl Default for LocalFrame {
    fn default() -> Self {
        LocalFrame { z_pow: 0, x_pow: 0, perm: 1, lin: 0, quad: 0, phase: 0 }
    }
}

impl LocalFrame {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn z(d: PrimeDim, e: i64) -> Self {
        LocalFrame { z_pow: d.reduce(e), ..Self::default() }
    }

    /// ϖ^{lin·j + quad·j²}.
    pub fn quadratic(d: PrimeDim, lin: i64, quad: i64) -> Self {
        LocalFrame { lin: d.reduce(lin), quad: d.reduce(quad), ..Self::default() }
    }

    pub fn is_identity(&self) -> bool {
        LocalFrame { phase: 0, ..*self } == Self::default()
    }

    pub fn is_diagonal(&self) -> bool {
        self.x_pow == 0 && self.perm == 1
    }

    /// Exponent of ϖ picked up by |j⟩.
    pub fn exponent(&self, d: PrimeDim, j: u32) -> u32 {
        let j = j as i64;
        d.reduce(self.phase as i64 + (self.z_pow as i64 + self.lin as i64) * j + self.quad as i64 * j * j)
    }

    /// Image label perm·j − x_pow.
    pub fn image(&self, d: PrimeDim, j: u32) -> u32 {
        d.reduce(self.perm as i64 * j as i64 - self.x_pow as i64)
    }

    /// `self` first, then `after`.
    pub fn then(&self, after: &LocalFrame, d: PrimeDim) -> LocalFrame {
        let (c1, x1) = (self.perm as i64, self.x_pow as i64);
        let (a2, b2) = (after.z_pow as i64 + after.lin as i64, after.quad as i64);
        LocalFrame {
            z_pow: d.reduce(self.z_pow as i64 + c1 * after.z_pow as i64),
            x_pow: d.reduce(after.perm as i64 * x1 + after.x_pow as i64),
            perm: d.mul(after.perm, self.perm),
            lin: d.reduce(self.lin as i64 + c1 * after.lin as i64 - 2 * b2 * c1 * x1),
            quad: d.reduce(self.quad as i64 + b2 * c1 * c1),
            phase: d.reduce(self.phase as i64 + after.phase as i64 - a2 * x1 + b2 * x1 * x1),
        }
    }

    pub fn unitary(&self, d: PrimeDim) -> LocalUnitary {
        let diag = LocalUnitary::diag_exponents(d, |j| self.exponent(d, j) as i64);
        LocalUnitary::x_pow(d, self.x_pow as i64)
            .then_after(&LocalUnitary::s_c(d, self.perm))
            .then_after(&diag)
    }

    /// Physical basis {U|b_j⟩} that realises a measurement of `underlying` on the frame-free state.
    pub fn adapt(&self, d: PrimeDim, underlying: &MeasBasis) -> crate::Result<MeasBasis> {
        if self.is_identity() {
            return Ok(underlying.clone());
        }
        Ok(MeasBasis::Custom(self.unitary(d).then_after(&underlying.unitary(d)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(d: PrimeDim) -> impl Strategy<Value = LocalFrame> {
        let n = d.get();
        (0..n, 0..n, 1..n, 0..n, 0..n, 0..n).prop_map(|(z_pow, x_pow, perm, lin, quad, phase)| LocalFrame {
            z_pow,
            x_pow,
            perm,
            lin,
            quad,
            phase,
        })
    }

    #[test]
    fn identity_is_identity_matrix() {
        let d = PrimeDim::new(5).unwrap();
        assert!(LocalFrame::identity().unitary(d).matrix().distance(LocalUnitary::identity(d).matrix()) < 1e-12);
    }

    proptest! {
        #[test]
        fn composition_matches_matrices(a in frame(PrimeDim::new(5).unwrap()), b in frame(PrimeDim::new(5).unwrap())) {
            let d = PrimeDim::new(5).unwrap();
            let lhs = a.then(&b, d).unitary(d);
            let rhs = b.unitary(d).then_after(&a.unitary(d));
            prop_assert!(lhs.matrix().distance(rhs.matrix()) < 1e-10);
        }

        #[test]
        fn composition_is_associative(
            a in frame(PrimeDim::new(3).unwrap()),
            b in frame(PrimeDim::new(3).unwrap()),
            c in frame(PrimeDim::new(3).unwrap()),
        ) {
            let d = PrimeDim::new(3).unwrap();
            let left = a.then(&b, d).then(&c, d);
            let right = a.then(&b.then(&c, d), d);
            prop_assert_eq!(left, right);
            prop_assert!(left.unitary(d).matrix().distance(right.unitary(d).matrix()) < 1e-10);
        }
    }
}
