//! Domain-separated BLAKE3 derivations.
//!
//! Every hash in the protocol goes through [`Frame`], which lays out the
//! preimage as: ASCII domain label (the label set `init`, `causal`, `addr`,
//! `write`, `leaf`, `node`, `rootleaf`, `pad` is prefix-free), integers as
//! 8-byte little-endian, digests as raw 32 bytes. Variable-length byte
//! strings are preceded by their 8-byte little-endian length. The layout
//! is documented byte-for-byte in `FORMATS.md`.
//!
//! A per-thread counter records every hash invocation so callers can
//! assert exact hash budgets (verifier cost, benchmark replay parity).

use std::cell::{Cell, RefCell};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ParamError;

/// Digest width in bytes.
pub const DIGEST_LEN: usize = 32;

/// Largest supported arena dimension. Coordinates are projected from a
/// 64-bit word, so at most 63 bits can be masked off.
pub const MAX_DIM: u32 = 63;

/// A 256-bit BLAKE3 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// The first eight bytes read as a little-endian integer.
    pub fn low_u64(&self) -> u64 {
        let mut w = [0u8; 8];
        w.copy_from_slice(&self.0[..8]);
        u64::from_le_bytes(w)
    }

    /// Flip a single bit; used by tamper fixtures.
    pub fn with_bit_flipped(mut self, bit: usize) -> Digest {
        self.0[(bit / 8) % DIGEST_LEN] ^= 1 << (bit % 8);
        self
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Digest {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; DIGEST_LEN];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Digest(out))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Hypercube dimension `d_hc`; the arena holds `2^d_hc` vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Dim(u8);

impl Dim {
    pub fn new(bits: u32) -> Result<Dim, ParamError> {
        if bits > MAX_DIM {
            return Err(ParamError::Dimension(bits));
        }
        Ok(Dim(bits as u8))
    }

    pub fn bits(self) -> u32 {
        self.0 as u32
    }

    pub fn vertex_count(self) -> u64 {
        1u64 << self.0
    }

    pub fn mask(self) -> u64 {
        (1u64 << self.0) - 1
    }

    pub fn contains(self, v: Vertex) -> bool {
        v.0 < self.vertex_count()
    }
}

impl TryFrom<u32> for Dim {
    type Error = ParamError;

    fn try_from(bits: u32) -> Result<Self, Self::Error> {
        Dim::new(bits)
    }
}

impl From<Dim> for u32 {
    fn from(d: Dim) -> u32 {
        d.bits()
    }
}

/// A hypercube vertex, stored as its binary-order index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(transparent)]
pub struct Vertex(pub u64);

impl Vertex {
    pub fn index(self) -> u64 {
        self.0
    }

    pub fn as_usize(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

thread_local! {
    static HASH_CALLS: Cell<u64> = const { Cell::new(0) };
    static CAPTURING: Cell<bool> = const { Cell::new(false) };
    static CAPTURED: RefCell<Vec<Vec<u8>>> = const { RefCell::new(Vec::new()) };
}

/// Number of hash invocations performed on this thread so far.
pub fn hash_calls() -> u64 {
    HASH_CALLS.with(Cell::get)
}

/// Runs `f` and returns its result together with the number of hash
/// invocations it performed on the current thread.
pub fn count_hashes<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let before = hash_calls();
    let out = f();
    (out, hash_calls() - before)
}

/// Runs `f` while recording the exact preimage of every hash it computes.
pub fn capture_hash_inputs<T>(f: impl FnOnce() -> T) -> (T, Vec<Vec<u8>>) {
    CAPTURED.with(|c| c.borrow_mut().clear());
    CAPTURING.with(|c| c.set(true));
    let out = f();
    CAPTURING.with(|c| c.set(false));
    let inputs = CAPTURED.with(|c| std::mem::take(&mut *c.borrow_mut()));
    (out, inputs)
}

/// Re-hashes recorded preimages. The returned digest folds every output
/// together so the work cannot be elided.
pub fn replay_hash_inputs(inputs: &[Vec<u8>]) -> Digest {
    let mut acc = [0u8; DIGEST_LEN];
    for input in inputs {
        let d = hash_bytes(input);
        for (a, b) in acc.iter_mut().zip(d.0) {
            *a ^= b;
        }
    }
    Digest(acc)
}

#[inline]
fn hash_bytes(input: &[u8]) -> Digest {
    HASH_CALLS.with(|c| c.set(c.get() + 1));
    if CAPTURING.with(Cell::get) {
        CAPTURED.with(|c| c.borrow_mut().push(input.to_vec()));
    }
    Digest(*blake3::hash(input).as_bytes())
}

const FRAME_CAP: usize = 128;

/// Fixed-capacity preimage builder for the protocol's fixed-width inputs.
pub(crate) struct Frame {
    buf: [u8; FRAME_CAP],
    len: usize,
}

impl Frame {
    #[inline]
    pub(crate) fn new() -> Frame {
        Frame {
            buf: [0u8; FRAME_CAP],
            len: 0,
        }
    }

    #[inline]
    pub(crate) fn label(label: &[u8]) -> Frame {
        Frame::new().bytes(label)
    }

    #[inline]
    pub(crate) fn bytes(mut self, b: &[u8]) -> Frame {
        self.buf[self.len..self.len + b.len()].copy_from_slice(b);
        self.len += b.len();
        self
    }

    #[inline]
    pub(crate) fn digest(self, d: &Digest) -> Frame {
        self.bytes(&d.0)
    }

    #[inline]
    pub(crate) fn u64(self, x: u64) -> Frame {
        self.bytes(&x.to_le_bytes())
    }

    #[inline]
    pub(crate) fn finish(self) -> Digest {
        hash_bytes(&self.buf[..self.len])
    }
}

#[inline]
fn project(d: &Digest, dim: Dim) -> Vertex {
    Vertex(d.low_u64() & dim.mask())
}

/// Data field of an initial block: `H("init" ‖ s ‖ i [‖ parent.data])`.
pub fn init_data_digest(seed: &Digest, i: u64, parent_data: Option<&Digest>) -> Digest {
    let f = Frame::label(b"init").digest(seed).u64(i);
    match parent_data {
        Some(p) => f.digest(p).finish(),
        None => f.finish(),
    }
}

/// Causal field of an initial block: `H("causal" ‖ s ‖ i [‖ parent.causal])`.
pub fn init_causal_digest(seed: &Digest, i: u64, parent_causal: Option<&Digest>) -> Digest {
    let f = Frame::label(b"causal").digest(seed).u64(i);
    match parent_causal {
        Some(p) => f.digest(p).finish(),
        None => f.finish(),
    }
}

/// Address of the `j`-th read of a step, from the current cursor.
#[inline]
pub fn derive_read_coord(cursor: &Digest, j: u64, dim: Dim) -> Vertex {
    project(&Frame::label(b"addr").digest(cursor).u64(j).finish(), dim)
}

/// Address of a step's write, from the cursor after the last read.
#[inline]
pub fn derive_write_coord(cursor: &Digest, dim: Dim) -> Vertex {
    project(&Frame::label(b"write").digest(cursor).finish(), dim)
}

#[inline]
pub fn chain_cursor(cursor: &Digest, data: &Digest, causal: &Digest) -> Digest {
    Frame::new()
        .digest(cursor)
        .digest(data)
        .digest(causal)
        .finish()
}

/// New data field of a written block; folds in the old causal field.
#[inline]
pub fn bind_data(old_data: &Digest, cursor: &Digest, old_causal: &Digest) -> Digest {
    Frame::new()
        .digest(old_data)
        .digest(cursor)
        .digest(old_causal)
        .finish()
}

/// New causal field of a written block; chains the write history.
#[inline]
pub fn bind_causal(old_causal: &Digest, cursor: &Digest, t: u64) -> Digest {
    Frame::new()
        .digest(old_causal)
        .digest(cursor)
        .u64(t)
        .finish()
}

#[inline]
pub fn extend_transcript(prev: &Digest, t: u64, cursor: &Digest, root: &Digest) -> Digest {
    Frame::new()
        .digest(prev)
        .u64(t)
        .digest(cursor)
        .digest(root)
        .finish()
}

pub fn initial_transcript(seed: &Digest, n: u64, r0: &Digest) -> Digest {
    Frame::new().digest(seed).u64(n).digest(r0).finish()
}

/// Binds an arena to a task: `H(len ‖ task_id ‖ len ‖ nonce)`.
pub fn derive_seed(task_id: &[u8], nonce: &[u8]) -> Digest {
    let mut buf = Vec::with_capacity(16 + task_id.len() + nonce.len());
    buf.extend_from_slice(&(task_id.len() as u64).to_le_bytes());
    buf.extend_from_slice(task_id);
    buf.extend_from_slice(&(nonce.len() as u64).to_le_bytes());
    buf.extend_from_slice(nonce);
    hash_bytes(&buf)
}

pub fn fiat_shamir_sigma(final_transcript: &Digest, root_commitment: &Digest) -> Digest {
    Frame::new()
        .digest(final_transcript)
        .digest(root_commitment)
        .finish()
}

/// Challenged step for challenge index `i`, in `[1, steps]`.
///
/// Panics if `steps == 0`; there is nothing to challenge in an empty run.
pub fn fiat_shamir_step(sigma: &Digest, i: u64, steps: u64) -> u64 {
    assert!(steps > 0, "cannot derive a challenge for an empty run");
    Frame::new().digest(sigma).u64(i).finish().low_u64() % steps + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(byte: u8) -> Digest {
        Digest([byte; 32])
    }

    fn dim(bits: u32) -> Dim {
        Dim::new(bits).unwrap()
    }

    #[test]
    fn dim_bounds() {
        assert!(Dim::new(63).is_ok());
        assert_eq!(Dim::new(64), Err(ParamError::Dimension(64)));
        assert_eq!(dim(0).mask(), 0);
        assert_eq!(dim(63).mask(), u64::MAX >> 1);
    }

    #[test]
    fn distinct_labels_for_data_and_causal() {
        let s = d(7);
        assert_ne!(
            init_data_digest(&s, 0, None),
            init_causal_digest(&s, 0, None)
        );
        let p = d(9);
        assert_ne!(
            init_data_digest(&s, 3, Some(&p)),
            init_causal_digest(&s, 3, Some(&p))
        );
    }

    #[test]
    fn order_sensitivity() {
        let (c, x, y) = (d(1), d(2), d(3));
        assert_ne!(chain_cursor(&c, &x, &y), chain_cursor(&c, &y, &x));
        assert_ne!(bind_causal(&x, &c, 1), bind_causal(&x, &c, 2));
        assert_ne!(
            initial_transcript(&c, 1 << 10, &x),
            initial_transcript(&c, 1 << 11, &x)
        );
    }

    #[test]
    fn bind_data_is_chain_cursor_with_permuted_arguments() {
        let mut rng = 1u64;
        let mut next = || {
            let mut out = [0u8; 32];
            for b in &mut out {
                rng = rng
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                *b = (rng >> 56) as u8;
            }
            Digest(out)
        };
        for _ in 0..100 {
            let (a, b, c) = (next(), next(), next());
            // Same 96 bytes, different roles.
            assert_eq!(bind_data(&a, &b, &c), chain_cursor(&a, &b, &c));
            assert_ne!(bind_data(&a, &b, &c), chain_cursor(&b, &a, &c));
        }
    }

    #[test]
    fn single_challenge_step_for_one_step_runs() {
        for i in 1..50 {
            assert_eq!(fiat_shamir_step(&d(4), i, 1), 1);
        }
    }

    #[test]
    #[should_panic]
    fn empty_run_has_no_challenges() {
        fiat_shamir_step(&d(4), 1, 0);
    }

    #[test]
    fn extend_transcript_field_perturbation() {
        let base = extend_transcript(&d(1), 5, &d(2), &d(3));
        assert_ne!(base, extend_transcript(&d(9), 5, &d(2), &d(3)));
        assert_ne!(base, extend_transcript(&d(1), 6, &d(2), &d(3)));
        assert_ne!(base, extend_transcript(&d(1), 5, &d(9), &d(3)));
        assert_ne!(base, extend_transcript(&d(1), 5, &d(2), &d(9)));
    }

    #[test]
    fn counter_and_capture() {
        let (_, n) = count_hashes(|| {
            chain_cursor(&d(0), &d(1), &d(2));
            derive_seed(b"task", b"n");
        });
        assert_eq!(n, 2);
        let (_, inputs) = capture_hash_inputs(|| derive_write_coord(&d(5), dim(8)));
        assert_eq!(inputs.len(), 1);
        assert_eq!(&inputs[0][..5], b"write");
        assert_eq!(inputs[0].len(), 5 + 32);
    }

    #[test]
    fn digest_hex_roundtrip() {
        let x = d(0xab);
        assert_eq!(x.to_hex().parse::<Digest>().unwrap(), x);
        let json = serde_json::to_string(&x).unwrap();
        assert_eq!(serde_json::from_str::<Digest>(&json).unwrap(), x);
    }

    proptest! {
        #[test]
        fn coord_masking_consistent(c in any::<[u8; 32]>(), j in 0u64..64, lo in 0u32..24) {
            let c = Digest(c);
            let full = derive_read_coord(&c, j, dim(24));
            prop_assert_eq!(derive_read_coord(&c, j, dim(lo)).0, full.0 & ((1 << lo) - 1));
            let w = derive_write_coord(&c, dim(24));
            prop_assert_eq!(derive_write_coord(&c, dim(lo)).0, w.0 & ((1 << lo) - 1));
        }

        #[test]
        fn seed_length_prefix_prevents_ambiguity(a in proptest::collection::vec(any::<u8>(), 0..8),
                                                 b in proptest::collection::vec(any::<u8>(), 0..8),
                                                 split in 0usize..8) {
            let joined: Vec<u8> = a.iter().chain(&b).copied().collect();
            let split = split.min(joined.len());
            let (x, y) = joined.split_at(split);
            if x != a.as_slice() {
                prop_assert_ne!(derive_seed(&a, &b), derive_seed(x, y));
            }
        }

        #[test]
        fn challenge_step_in_range(s in any::<[u8; 32]>(), i in 0u64..1000, k in 1u64..1_000_000) {
            let step = fiat_shamir_step(&Digest(s), i, k);
            prop_assert!((1..=k).contains(&step));
        }
    }
}
