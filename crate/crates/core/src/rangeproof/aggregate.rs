//! Aggregated Bulletproofs range argument: `m` committed values, each in
//! `[0, 2^n)`, in one proof of `2·log2(n·m) + 9` group elements/scalars.
//!
//! Verification is expressed as a list of weighted terms so that several
//! independent proofs can share one multiscalar multiplication.

use std::iter;

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::{Identity, MultiscalarMul};
use merlin::Transcript;
use rand::{CryptoRng, RngCore};

use super::generators::GeneratorTable;
use super::ipa::{inner_product, InnerProductProof};
use super::transcript::TranscriptExt;
use super::ProofError;
use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::ComParams;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct AggregateProof {
    a: CompressedRistretto,
    s: CompressedRistretto,
    t1: CompressedRistretto,
    t2: CompressedRistretto,
    t_x: Scalar,
    t_x_blinding: Scalar,
    e_blinding: Scalar,
    ipp: InnerProductProof,
}

/// Terms of the final verification equation, before weighting.
pub(crate) struct VerificationTerms {
    /// Scalars for `G_{j,i}`, indexed `j * bits + i`.
    pub g: Vec<Scalar>,
    pub h: Vec<Scalar>,
    pub bits: usize,
    /// Scalar on the value base `G`.
    pub value_base: Scalar,
    /// Scalar on the blinding base `H`.
    pub blinding_base: Scalar,
    pub dynamic: Vec<(Scalar, RistrettoPoint)>,
}

fn exp_iter(x: Scalar) -> impl Iterator<Item = Scalar> {
    iter::successors(Some(Scalar::ONE), move |p| Some(p * x))
}

fn sum_of_powers(x: &Scalar, n: usize) -> Scalar {
    exp_iter(*x).take(n).sum()
}

/// δ(y,z) = (z − z²)·<1, y^N> − Σ_j z^{j+3}·<1, 2^n>
fn delta(bits: usize, parties: usize, y: &Scalar, z: &Scalar) -> Scalar {
    let sum_y = sum_of_powers(y, bits * parties);
    let sum_2 = Scalar::from((1u128 << bits) - 1);
    let sum_z = sum_of_powers(z, parties);
    (z - z * z) * sum_y - z * z * z * sum_2 * sum_z
}

fn check_shape(bits: usize, parties: usize, table: &GeneratorTable) -> Result<(), ProofError> {
    if !bits.is_power_of_two() || bits > 64 || bits > table.bits() {
        return Err(ProofError::UnsupportedBitLength(bits as u32));
    }
    if parties == 0 || !parties.is_power_of_two() {
        return Err(ProofError::Verification);
    }
    Ok(())
}

impl AggregateProof {
    #[allow(clippy::too_many_arguments)]
    pub fn prove<R: RngCore + CryptoRng>(
        table: &GeneratorTable,
        pc: &ComParams,
        transcript: &mut Transcript,
        values: &[u64],
        blindings: &[Scalar],
        commitments: &[CompressedRistretto],
        bits: usize,
        rng: &mut R,
    ) -> Result<Self, ProofError> {
        let parties = values.len();
        check_shape(bits, parties, table)?;
        assert_eq!(blindings.len(), parties);
        assert_eq!(commitments.len(), parties);
        if bits < 64 && values.iter().any(|v| v >> bits != 0) {
            return Err(ProofError::WitnessOutOfRange);
        }
        let nm = bits * parties;
        let (gens_g, gens_h) = table.share(bits, parties);
        let b_value = pc.g();
        let b_blind = pc.h();

        transcript.append_u64(b"n", bits as u64);
        transcript.append_u64(b"m", parties as u64);
        for v in commitments {
            transcript.append_point(b"V", v);
        }

        let a_l: Vec<Scalar> = values
            .iter()
            .flat_map(|&v| (0..bits).map(move |i| Scalar::from((v >> i) & 1)))
            .collect();
        let a_r: Vec<Scalar> = a_l.iter().map(|b| b - Scalar::ONE).collect();

        // A = α·H + <a_L, G> + <a_R, H_vec>; a_L is a bit vector so this is
        // a sum of generators
        let alpha = Scalar::random(rng);
        let mut a_point = alpha * b_blind;
        for i in 0..nm {
            if a_l[i] == Scalar::ONE {
                a_point += gens_g[i];
            } else {
                a_point -= gens_h[i];
            }
        }
        let a_commit = a_point.compress();

        let s_l: Vec<Scalar> = (0..nm).map(|_| Scalar::random(rng)).collect();
        let s_r: Vec<Scalar> = (0..nm).map(|_| Scalar::random(rng)).collect();
        let rho = Scalar::random(rng);
        let s_commit = RistrettoPoint::multiscalar_mul(
            iter::once(&rho).chain(&s_l).chain(&s_r),
            iter::once(&b_blind).chain(&gens_g).chain(&gens_h),
        )
        .compress();

        transcript.validate_and_append_point(b"A", &a_commit)?;
        transcript.validate_and_append_point(b"S", &s_commit)?;
        let y = transcript.challenge_scalar(b"y");
        let z = transcript.challenge_scalar(b"z");
        let zz = z * z;

        // l(X) = l0 + l1·X,  r(X) = r0 + r1·X
        let y_pows: Vec<Scalar> = exp_iter(y).take(nm).collect();
        let z_pows: Vec<Scalar> = exp_iter(z).take(parties).collect();
        let two_pows: Vec<Scalar> = exp_iter(Scalar::from(2u64)).take(bits).collect();

        let l0: Vec<Scalar> = a_l.iter().map(|a| a - z).collect();
        let l1 = s_l;
        let r0: Vec<Scalar> = (0..nm)
            .map(|i| {
                let j = i / bits;
                y_pows[i] * (a_r[i] + z) + zz * z_pows[j] * two_pows[i % bits]
            })
            .collect();
        let r1: Vec<Scalar> = (0..nm).map(|i| y_pows[i] * s_r[i]).collect();

        let t1 = inner_product(&l0, &r1) + inner_product(&l1, &r0);
        let t2 = inner_product(&l1, &r1);

        let tau1 = Scalar::random(rng);
        let tau2 = Scalar::random(rng);
        let t1_commit = pc.commit_scalar(&t1, &tau1).point().compress();
        let t2_commit = pc.commit_scalar(&t2, &tau2).point().compress();

        transcript.validate_and_append_point(b"T_1", &t1_commit)?;
        transcript.validate_and_append_point(b"T_2", &t2_commit)?;
        let x = transcript.challenge_scalar(b"x");

        let l: Vec<Scalar> = l0.iter().zip(&l1).map(|(a, b)| a + b * x).collect();
        let r: Vec<Scalar> = r0.iter().zip(&r1).map(|(a, b)| a + b * x).collect();
        let t_x = inner_product(&l, &r);
        let t_x_blinding = tau2 * x * x
            + tau1 * x
            + z_pows
                .iter()
                .zip(blindings)
                .map(|(zj, gamma)| zz * zj * gamma)
                .sum::<Scalar>();
        let e_blinding = alpha + rho * x;

        transcript.append_scalar(b"t_x", &t_x);
        transcript.append_scalar(b"t_x_blinding", &t_x_blinding);
        transcript.append_scalar(b"e_blinding", &e_blinding);
        let w = transcript.challenge_scalar(b"w");
        let q = w * b_value;

        // H' = y^{-i}·H, folded inside the inner-product argument
        let h_factors: Vec<Scalar> = exp_iter(y.invert()).take(nm).collect();
        let ipp = InnerProductProof::create(transcript, &q, gens_g, gens_h, h_factors, l, r);

        Ok(AggregateProof {
            a: a_commit,
            s: s_commit,
            t1: t1_commit,
            t2: t2_commit,
            t_x,
            t_x_blinding,
            e_blinding,
            ipp,
        })
    }

    /// Replays the transcript and produces the verification terms; the
    /// proof is valid iff the weighted sum of the terms is the identity.
    pub fn verification_terms(
        &self,
        table: &GeneratorTable,
        transcript: &mut Transcript,
        commitments: &[(CompressedRistretto, RistrettoPoint)],
        bits: usize,
        weight: Scalar,
        combine: Scalar,
    ) -> Result<VerificationTerms, ProofError> {
        let parties = commitments.len();
        check_shape(bits, parties, table)?;
        let nm = bits * parties;

        transcript.append_u64(b"n", bits as u64);
        transcript.append_u64(b"m", parties as u64);
        for (v, _) in commitments {
            transcript.append_point(b"V", v);
        }
        transcript.validate_and_append_point(b"A", &self.a)?;
        transcript.validate_and_append_point(b"S", &self.s)?;
        let y = transcript.challenge_scalar(b"y");
        let z = transcript.challenge_scalar(b"z");
        let zz = z * z;
        transcript.validate_and_append_point(b"T_1", &self.t1)?;
        transcript.validate_and_append_point(b"T_2", &self.t2)?;
        let x = transcript.challenge_scalar(b"x");
        transcript.append_scalar(b"t_x", &self.t_x);
        transcript.append_scalar(b"t_x_blinding", &self.t_x_blinding);
        transcript.append_scalar(b"e_blinding", &self.e_blinding);
        let w = transcript.challenge_scalar(b"w");

        let (u_sq, u_inv_sq, s) = self.ipp.verification_scalars(nm, transcript)?;
        let a = self.ipp.a;
        let b = self.ipp.b;
        let c = combine;

        let z_pows: Vec<Scalar> = exp_iter(z).take(parties).collect();
        let two_pows: Vec<Scalar> = exp_iter(Scalar::from(2u64)).take(bits).collect();

        let g: Vec<Scalar> = s.iter().map(|si| weight * (-z - a * si)).collect();
        let h: Vec<Scalar> = exp_iter(y.invert())
            .take(nm)
            .enumerate()
            .map(|(i, y_inv_i)| {
                let j = i / bits;
                let s_inv = s[nm - 1 - i];
                weight * (z + y_inv_i * (zz * z_pows[j] * two_pows[i % bits] - b * s_inv))
            })
            .collect();

        let value_base =
            weight * (w * (self.t_x - a * b) + c * (delta(bits, parties, &y, &z) - self.t_x));
        let blinding_base = weight * (-self.e_blinding - c * self.t_x_blinding);

        let decompress = |p: &CompressedRistretto| p.decompress().ok_or(ProofError::Verification);
        let mut dynamic = Vec::with_capacity(4 + 2 * u_sq.len() + parties);
        dynamic.push((weight, decompress(&self.a)?));
        dynamic.push((weight * x, decompress(&self.s)?));
        dynamic.push((weight * c * x, decompress(&self.t1)?));
        dynamic.push((weight * c * x * x, decompress(&self.t2)?));
        for (u2, l) in u_sq.iter().zip(&self.ipp.l_vec) {
            dynamic.push((weight * u2, decompress(l)?));
        }
        for (u2, r) in u_inv_sq.iter().zip(&self.ipp.r_vec) {
            dynamic.push((weight * u2, decompress(r)?));
        }
        for (zj, (_, v)) in z_pows.iter().zip(commitments) {
            dynamic.push((weight * c * zz * zj, *v));
        }

        Ok(VerificationTerms {
            g,
            h,
            bits,
            value_base,
            blinding_base,
            dynamic,
        })
    }

    pub fn write(&self, w: &mut Writer) {
        for p in [&self.a, &self.s, &self.t1, &self.t2] {
            w.raw(p.as_bytes());
        }
        for s in [&self.t_x, &self.t_x_blinding, &self.e_blinding] {
            w.raw(&scalar_to_be(s));
        }
        w.u8(self.ipp.l_vec.len() as u8);
        for (l, r) in self.ipp.l_vec.iter().zip(&self.ipp.r_vec) {
            w.raw(l.as_bytes());
            w.raw(r.as_bytes());
        }
        w.raw(&scalar_to_be(&self.ipp.a));
        w.raw(&scalar_to_be(&self.ipp.b));
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let point = |r: &mut Reader<'_>| -> Result<CompressedRistretto, DecodeError> {
            Ok(CompressedRistretto(r.array()?))
        };
        let a = point(r)?;
        let s = point(r)?;
        let t1 = point(r)?;
        let t2 = point(r)?;
        let t_x = read_scalar(r)?;
        let t_x_blinding = read_scalar(r)?;
        let e_blinding = read_scalar(r)?;
        let rounds = r.u8()? as usize;
        if rounds > 16 {
            return Err(DecodeError::Invalid("inner-product rounds"));
        }
        let mut l_vec = Vec::with_capacity(rounds);
        let mut r_vec = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            l_vec.push(point(r)?);
            r_vec.push(point(r)?);
        }
        let ipa_a = read_scalar(r)?;
        let ipa_b = read_scalar(r)?;
        Ok(AggregateProof {
            a,
            s,
            t1,
            t2,
            t_x,
            t_x_blinding,
            e_blinding,
            ipp: InnerProductProof {
                l_vec,
                r_vec,
                a: ipa_a,
                b: ipa_b,
            },
        })
    }

    pub fn rounds(&self) -> usize {
        self.ipp.l_vec.len()
    }
}

pub(crate) fn scalar_to_be(s: &Scalar) -> [u8; 32] {
    let mut b = s.to_bytes();
    b.reverse();
    b
}

pub(crate) fn read_scalar(r: &mut Reader<'_>) -> Result<Scalar, DecodeError> {
    let mut b: [u8; 32] = r.array()?;
    b.reverse();
    Option::from(Scalar::from_canonical_bytes(b))
        .ok_or(DecodeError::Invalid("non-canonical scalar"))
}

/// Evaluates a set of weighted terms (from one or many proofs) in a single
/// multiscalar multiplication.
pub(crate) fn check_terms(
    table: &GeneratorTable,
    pc: &ComParams,
    terms: &[VerificationTerms],
) -> bool {
    use curve25519_dalek::traits::{IsIdentity, VartimeMultiscalarMul};

    // shared generators are addressed by (party, bit)
    let stride = table.bits();
    let max_parties = terms
        .iter()
        .map(|t| t.g.len() / t.bits.max(1))
        .max()
        .unwrap_or(0);
    let mut g_acc = vec![Scalar::ZERO; stride * max_parties];
    let mut h_acc = vec![Scalar::ZERO; stride * max_parties];
    let mut value_base = Scalar::ZERO;
    let mut blinding_base = Scalar::ZERO;
    let mut dyn_count = 0;
    for t in terms {
        for (k, (gs, hs)) in t.g.iter().zip(&t.h).enumerate() {
            let idx = (k / t.bits) * stride + k % t.bits;
            g_acc[idx] += gs;
            h_acc[idx] += hs;
        }
        value_base += t.value_base;
        blinding_base += t.blinding_base;
        dyn_count += t.dynamic.len();
    }
    let (gens_g, gens_h) = table.share(stride, max_parties);

    let mut scalars = Vec::with_capacity(2 + 2 * g_acc.len() + dyn_count);
    let mut points = Vec::with_capacity(scalars.capacity());
    scalars.push(value_base);
    points.push(pc.g());
    scalars.push(blinding_base);
    points.push(pc.h());
    for (s, p) in g_acc.iter().zip(&gens_g).chain(h_acc.iter().zip(&gens_h)) {
        if *s != Scalar::ZERO {
            scalars.push(*s);
            points.push(*p);
        }
    }
    for t in terms {
        for (s, p) in &t.dynamic {
            scalars.push(*s);
            points.push(*p);
        }
    }
    let sum = RistrettoPoint::vartime_multiscalar_mul(scalars, points);
    sum.is_identity()
}

pub(crate) fn identity_compressed() -> CompressedRistretto {
    RistrettoPoint::identity().compress()
}
