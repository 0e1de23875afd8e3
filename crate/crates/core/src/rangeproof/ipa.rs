//! Logarithmic-size inner-product argument.

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::MultiscalarMul;
use merlin::Transcript;

use super::transcript::TranscriptExt;
use super::ProofError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct InnerProductProof {
    pub l_vec: Vec<CompressedRistretto>,
    pub r_vec: Vec<CompressedRistretto>,
    pub a: Scalar,
    pub b: Scalar,
}

pub(crate) fn inner_product(a: &[Scalar], b: &[Scalar]) -> Scalar {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl InnerProductProof {
    /// Proves knowledge of `a, b` with `P = <a,G> + <b,H'> + <a,b>·Q`, where
    /// `H'_i = h_factors[i]·H_i`. All vectors must share a power-of-two length.
    ///
    /// The generators are never folded; each folded generator is tracked as
    /// coefficients on the original ones, which keeps every point operation
    /// inside one multiscalar multiplication per `L`/`R`.
    pub fn create(
        transcript: &mut Transcript,
        q: &RistrettoPoint,
        g: Vec<RistrettoPoint>,
        h: Vec<RistrettoPoint>,
        h_factors: Vec<Scalar>,
        mut a: Vec<Scalar>,
        mut b: Vec<Scalar>,
    ) -> Self {
        let full = g.len();
        assert!(full.is_power_of_two());
        assert!(h.len() == full && a.len() == full && b.len() == full && h_factors.len() == full);
        let mut g_coeff = vec![Scalar::ONE; full];
        let mut h_coeff = h_factors;

        transcript.append_u64(b"ipa-n", full as u64);

        let rounds = full.trailing_zeros() as usize;
        let mut l_vec = Vec::with_capacity(rounds);
        let mut r_vec = Vec::with_capacity(rounds);

        let mut n = full;
        while n > 1 {
            let width = n;
            n /= 2;
            let (a_l, a_r) = a.split_at(n);
            let (b_l, b_r) = b.split_at(n);

            let c_l = inner_product(a_l, b_r);
            let c_r = inner_product(a_r, b_l);

            // folded generator i is the combination of originals k ≡ i (mod width)
            let left = |k: usize| k % width < n;
            let mut l_scalars = Vec::with_capacity(full + 1);
            let mut l_points = Vec::with_capacity(full + 1);
            let mut r_scalars = Vec::with_capacity(full + 1);
            let mut r_points = Vec::with_capacity(full + 1);
            for k in 0..full {
                let pos = k % width;
                if left(k) {
                    r_scalars.push(a_r[pos] * g_coeff[k]);
                    r_points.push(g[k]);
                    l_scalars.push(b_r[pos] * h_coeff[k]);
                    l_points.push(h[k]);
                } else {
                    l_scalars.push(a_l[pos - n] * g_coeff[k]);
                    l_points.push(g[k]);
                    r_scalars.push(b_l[pos - n] * h_coeff[k]);
                    r_points.push(h[k]);
                }
            }
            l_scalars.push(c_l);
            l_points.push(*q);
            r_scalars.push(c_r);
            r_points.push(*q);
            let l = RistrettoPoint::multiscalar_mul(&l_scalars, &l_points).compress();
            let r = RistrettoPoint::multiscalar_mul(&r_scalars, &r_points).compress();

            transcript.append_point(b"L", &l);
            transcript.append_point(b"R", &r);
            l_vec.push(l);
            r_vec.push(r);

            let u = transcript.challenge_scalar(b"u");
            let u_inv = u.invert();

            a = (0..n).map(|i| a_l[i] * u + u_inv * a_r[i]).collect();
            b = (0..n).map(|i| b_l[i] * u_inv + u * b_r[i]).collect();
            if n > 1 {
                for k in 0..full {
                    let (gu, hu) = if left(k) { (u_inv, u) } else { (u, u_inv) };
                    g_coeff[k] *= gu;
                    h_coeff[k] *= hu;
                }
            }
        }

        InnerProductProof {
            l_vec,
            r_vec,
            a: a[0],
            b: b[0],
        }
    }

    /// Replays the transcript and returns `(u², u⁻², s)` where `s[i]` is the
    /// product of challenges selecting generator `i` in the folded base.
    pub fn verification_scalars(
        &self,
        n: usize,
        transcript: &mut Transcript,
    ) -> Result<(Vec<Scalar>, Vec<Scalar>, Vec<Scalar>), ProofError> {
        let lg_n = self.l_vec.len();
        if lg_n >= 32 || self.r_vec.len() != lg_n || n != 1 << lg_n {
            return Err(ProofError::Verification);
        }

        transcript.append_u64(b"ipa-n", n as u64);

        let mut challenges = Vec::with_capacity(lg_n);
        for (l, r) in self.l_vec.iter().zip(&self.r_vec) {
            transcript.validate_and_append_point(b"L", l)?;
            transcript.validate_and_append_point(b"R", r)?;
            challenges.push(transcript.challenge_scalar(b"u"));
        }

        let mut inverses = challenges.clone();
        let all_inv = Scalar::batch_invert(&mut inverses);

        let u_sq: Vec<Scalar> = challenges.iter().map(|u| u * u).collect();
        let u_inv_sq: Vec<Scalar> = inverses.iter().map(|u| u * u).collect();

        let mut s = Vec::with_capacity(n);
        s.push(all_inv);
        for i in 1..n {
            let lg_i = (usize::BITS - 1 - i.leading_zeros()) as usize;
            let k = 1 << lg_i;
            // challenges are in creation order, so the one governing bit lg_i
            // sits at lg_n - 1 - lg_i
            let u_lg_i_sq = u_sq[(lg_n - 1) - lg_i];
            s.push(s[i - k] * u_lg_i_sq);
        }

        Ok((u_sq, u_inv_sq, s))
    }
}
