//! Merkle commitments: the arena tree with incremental updates, and the
//! commitment `C` over the root sequence `r_0..r_K`.

use rayon::prelude::*;
use thiserror::Error;

use crate::arena::{Arena, Block};
use crate::codec::{Reader, WriteLe};
use crate::error::FormatError;
use crate::hashing::{Digest, Dim, Frame, Vertex};

/// Below this many leaves a tree is built on the calling thread.
const PARALLEL_LEAVES: usize = 1 << 12;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("leaf index {index} out of range for a tree with {leaves} leaves")]
pub struct LeafOutOfRange {
    pub index: u64,
    pub leaves: u64,
}

#[inline]
pub fn leaf_hash(v: Vertex, block: &Block) -> Digest {
    Frame::label(b"leaf")
        .u64(v.0)
        .digest(&block.data)
        .digest(&block.causal)
        .finish()
}

#[inline]
pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    Frame::label(b"node").digest(left).digest(right).finish()
}

pub fn root_leaf_hash(t: u64, root: &Digest) -> Digest {
    Frame::label(b"rootleaf").u64(t).digest(root).finish()
}

pub fn pad_leaf_hash(index: u64) -> Digest {
    Frame::label(b"pad").u64(index).finish()
}

/// Complete binary tree over a power-of-two number of leaf digests, stored
/// in heap order: `nodes[1]` is the root, the children of `i` are `2i` and
/// `2i+1`, leaf `v` sits at `n + v`. A single-leaf tree keeps its leaf at
/// index 1, which is then also the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MerkleTree {
    levels: u32,
    nodes: Vec<Digest>,
}

impl MerkleTree {
    /// Builds over `leaves`, whose length must be a power of two.
    pub fn from_leaves(leaves: Vec<Digest>) -> MerkleTree {
        let n = leaves.len();
        assert!(n.is_power_of_two(), "leaf count {n} is not a power of two");
        let mut nodes = vec![Digest::ZERO; n];
        nodes.extend(leaves);
        let mut tree = MerkleTree {
            levels: n.trailing_zeros(),
            nodes,
        };
        tree.rebuild_internal();
        tree
    }

    /// Commits every arena vertex.
    pub fn build(arena: &Arena) -> MerkleTree {
        let blocks = arena.blocks();
        let hash = |(v, b): (usize, &Block)| leaf_hash(Vertex(v as u64), b);
        let leaves: Vec<Digest> = if blocks.len() >= PARALLEL_LEAVES {
            blocks.par_iter().enumerate().map(hash).collect()
        } else {
            blocks.iter().enumerate().map(hash).collect()
        };
        MerkleTree::from_leaves(leaves)
    }

    fn rebuild_internal(&mut self) {
        let n = self.leaf_count() as usize;
        let mut width = n / 2;
        while width >= 1 {
            let (upper, lower) = self.nodes.split_at_mut(2 * width);
            let parents = &mut upper[width..];
            let children = &lower[..2 * width];
            let fill = |(k, p): (usize, &mut Digest)| {
                *p = node_hash(&children[2 * k], &children[2 * k + 1]);
            };
            if width >= PARALLEL_LEAVES {
                parents.par_iter_mut().enumerate().for_each(fill);
            } else {
                parents.iter_mut().enumerate().for_each(fill);
            }
            width /= 2;
        }
    }

    pub fn root(&self) -> Digest {
        self.nodes[1]
    }

    pub fn leaf_count(&self) -> u64 {
        1u64 << self.levels
    }

    /// Path length: `log2` of the leaf count.
    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn leaf(&self, index: u64) -> Result<Digest, LeafOutOfRange> {
        self.check(index)?;
        Ok(self.nodes[(self.leaf_count() + index) as usize])
    }

    fn check(&self, index: u64) -> Result<(), LeafOutOfRange> {
        if index >= self.leaf_count() {
            return Err(LeafOutOfRange {
                index,
                leaves: self.leaf_count(),
            });
        }
        Ok(())
    }

    /// Replaces one leaf digest and rehashes its root path. Returns the new root.
    pub fn set_leaf(&mut self, index: u64, leaf: Digest) -> Result<Digest, LeafOutOfRange> {
        self.check(index)?;
        let mut i = (self.leaf_count() + index) as usize;
        self.nodes[i] = leaf;
        while i > 1 {
            i /= 2;
            self.nodes[i] = node_hash(&self.nodes[2 * i], &self.nodes[2 * i + 1]);
        }
        Ok(self.root())
    }

    /// Writes `block` at vertex `v`; only the `levels + 1` digests on the
    /// root path are recomputed.
    #[inline]
    pub fn update_leaf(&mut self, v: Vertex, block: &Block) -> Result<Digest, LeafOutOfRange> {
        self.set_leaf(v.0, leaf_hash(v, block))
    }

    pub fn open(&self, index: u64) -> Result<MerklePath, LeafOutOfRange> {
        self.check(index)?;
        let mut i = (self.leaf_count() + index) as usize;
        let mut siblings = Vec::with_capacity(self.levels as usize);
        while i > 1 {
            siblings.push(self.nodes[i ^ 1]);
            i /= 2;
        }
        Ok(MerklePath {
            leaf: index,
            siblings,
        })
    }

    /// Recomputes every internal node from its children.
    pub fn audit(&self) -> bool {
        (1..self.leaf_count() as usize)
            .all(|i| self.nodes[i] == node_hash(&self.nodes[2 * i], &self.nodes[2 * i + 1]))
    }
}

/// Authentication path for one leaf: its index and the sibling digests
/// from the leaf level upwards.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MerklePath {
    pub leaf: u64,
    pub siblings: Vec<Digest>,
}

impl MerklePath {
    /// Folds `leaf` up through the siblings.
    pub fn root_from(&self, leaf: Digest) -> Digest {
        let mut acc = leaf;
        let mut idx = self.leaf;
        for sib in &self.siblings {
            acc = if idx & 1 == 0 {
                node_hash(&acc, sib)
            } else {
                node_hash(sib, &acc)
            };
            idx >>= 1;
        }
        acc
    }

    /// Serialized length: 8 + 2 + 32 per sibling.
    pub fn encoded_len(&self) -> usize {
        10 + 32 * self.siblings.len()
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.put_u64(self.leaf);
        out.put_u16(self.siblings.len() as u16);
        for s in &self.siblings {
            out.put_digest(s);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<MerklePath, FormatError> {
        let leaf = r.u64()?;
        let count = r.u16()? as usize;
        if count > 64 {
            return Err(FormatError::Invalid {
                field: "path.siblings",
                detail: format!("{count} siblings exceeds any supported tree height"),
            });
        }
        let siblings = (0..count).map(|_| r.digest()).collect::<Result<_, _>>()?;
        Ok(MerklePath { leaf, siblings })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<MerklePath, FormatError> {
        let mut r = Reader::new(bytes);
        let path = MerklePath::decode(&mut r)?;
        r.finish()?;
        Ok(path)
    }
}

/// Checks that `block` sits at vertex `v` under `root` in an arena tree of
/// dimension `dim`.
pub fn verify_path(root: &Digest, dim: Dim, v: Vertex, block: &Block, path: &MerklePath) -> bool {
    path.leaf == v.0
        && dim.contains(v)
        && path.siblings.len() == dim.bits() as usize
        && path.root_from(leaf_hash(v, block)) == *root
}

/// Commitment `C` over the root sequence `r_0..r_K`. Leaf `t` binds the
/// pair `(t, r_t)`; the sequence is padded to a power of two with
/// index-bound padding leaves.
#[derive(Clone, Debug)]
pub struct RootCommitment {
    tree: MerkleTree,
    count: u64,
}

impl RootCommitment {
    pub fn commit(roots: &[Digest]) -> RootCommitment {
        assert!(!roots.is_empty(), "root sequence always contains r_0");
        let count = roots.len() as u64;
        let width = roots.len().next_power_of_two();
        let hash = |t: usize| {
            if t < roots.len() {
                root_leaf_hash(t as u64, &roots[t])
            } else {
                pad_leaf_hash(t as u64)
            }
        };
        let leaves: Vec<Digest> = if width >= PARALLEL_LEAVES {
            (0..width).into_par_iter().map(hash).collect()
        } else {
            (0..width).map(hash).collect()
        };
        RootCommitment {
            tree: MerkleTree::from_leaves(leaves),
            count,
        }
    }

    pub fn root(&self) -> Digest {
        self.tree.root()
    }

    /// Number of committed roots, `K + 1`.
    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn open(&self, t: u64) -> Result<MerklePath, LeafOutOfRange> {
        if t >= self.count {
            return Err(LeafOutOfRange {
                index: t,
                leaves: self.count,
            });
        }
        self.tree.open(t)
    }
}

/// Path length for a commitment over `count` roots: `ceil(log2(count))`.
pub fn root_path_len(count: u64) -> u32 {
    count.next_power_of_two().trailing_zeros()
}

/// Checks that `r_t` is the `t`-th root committed by `c` for a run of
/// `steps` steps.
pub fn verify_root(c: &Digest, steps: u64, t: u64, root: &Digest, path: &MerklePath) -> bool {
    let count = steps + 1;
    t < count
        && path.leaf == t
        && path.siblings.len() == root_path_len(count) as usize
        && path.root_from(root_leaf_hash(t, root)) == *c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::Arena;
    use crate::hashing::Digest;
    use proptest::prelude::*;

    fn blocks(n: usize, salt: u8) -> Vec<Block> {
        (0..n)
            .map(|i| Block {
                data: Digest([i as u8 ^ salt; 32]),
                causal: Digest([(i as u8).wrapping_add(salt).wrapping_mul(3); 32]),
            })
            .collect()
    }

    // Recursive reference over explicit leaf lists.
    fn naive_root(leaves: &[Digest]) -> Digest {
        if leaves.len() == 1 {
            return leaves[0];
        }
        let (l, r) = leaves.split_at(leaves.len() / 2);
        node_hash(&naive_root(l), &naive_root(r))
    }

    fn arena_from(blocks: Vec<Block>) -> Arena {
        Arena::from_blocks(blocks).unwrap()
    }

    #[test]
    fn single_leaf_tree_root_is_leaf() {
        let leaf = Digest([3; 32]);
        let t = MerkleTree::from_leaves(vec![leaf]);
        assert_eq!(t.root(), leaf);
        assert_eq!(t.levels(), 0);
        assert!(t.open(0).unwrap().siblings.is_empty());
    }

    #[test]
    fn root_matches_recursive_reference() {
        for n in [2usize, 4, 16, 64] {
            let bs = blocks(n, 9);
            let leaves: Vec<_> = bs
                .iter()
                .enumerate()
                .map(|(v, b)| leaf_hash(Vertex(v as u64), b))
                .collect();
            let tree = MerkleTree::build(&arena_from(bs));
            assert_eq!(tree.root(), naive_root(&leaves));
            assert!(tree.audit());
        }
    }

    #[test]
    fn large_tree_parallel_build_matches_reference() {
        let bs = blocks(1 << 13, 1);
        let leaves: Vec<_> = bs
            .iter()
            .enumerate()
            .map(|(v, b)| leaf_hash(Vertex(v as u64), b))
            .collect();
        assert_eq!(
            MerkleTree::build(&arena_from(bs)).root(),
            naive_root(&leaves)
        );
    }

    #[test]
    fn swapping_leaves_changes_root() {
        let mut bs = blocks(4, 0);
        let before = MerkleTree::build(&arena_from(bs.clone())).root();
        bs.swap(1, 2);
        assert_ne!(before, MerkleTree::build(&arena_from(bs)).root());
    }

    #[test]
    fn incremental_updates_match_rebuild() {
        let mut bs = blocks(1 << 10, 5);
        let mut tree = MerkleTree::build(&arena_from(bs.clone()));
        let mut x = 0x9e37_79b9_7f4a_7c15u64;
        for step in 0..1000u64 {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let v = Vertex(x % (1 << 10));
            let nb = Block {
                data: Digest([step as u8; 32]),
                causal: Digest([(x >> 8) as u8; 32]),
            };
            bs[v.as_usize()] = nb;
            let root = tree.update_leaf(v, &nb).unwrap();
            if step % 97 == 0 {
                assert_eq!(root, MerkleTree::build(&arena_from(bs.clone())).root());
            }
        }
        assert_eq!(tree, MerkleTree::build(&arena_from(bs)));
    }

    #[test]
    fn update_to_current_value_is_idempotent() {
        let bs = blocks(8, 2);
        let mut tree = MerkleTree::build(&arena_from(bs.clone()));
        let root = tree.root();
        assert_eq!(tree.update_leaf(Vertex(5), &bs[5]).unwrap(), root);
    }

    #[test]
    fn updates_on_distinct_vertices_commute() {
        let bs = blocks(16, 4);
        let (a, b) = (
            Block::default(),
            Block {
                data: Digest([1; 32]),
                causal: Digest([2; 32]),
            },
        );
        let mut t1 = MerkleTree::build(&arena_from(bs.clone()));
        t1.update_leaf(Vertex(3), &a).unwrap();
        t1.update_leaf(Vertex(12), &b).unwrap();
        let mut t2 = MerkleTree::build(&arena_from(bs));
        t2.update_leaf(Vertex(12), &b).unwrap();
        t2.update_leaf(Vertex(3), &a).unwrap();
        assert_eq!(t1.root(), t2.root());
    }

    #[test]
    fn out_of_range_update_rejected() {
        let mut tree = MerkleTree::build(&arena_from(blocks(8, 0)));
        assert_eq!(
            tree.update_leaf(Vertex(8), &Block::default()),
            Err(LeafOutOfRange {
                index: 8,
                leaves: 8
            })
        );
        assert!(tree.open(9).is_err());
    }

    #[test]
    fn open_verify_and_binding() {
        let bs = blocks(32, 7);
        let dim = Dim::new(5).unwrap();
        let tree = MerkleTree::build(&arena_from(bs.clone()));
        let root = tree.root();
        for v in 0..32u64 {
            let path = tree.open(v).unwrap();
            assert_eq!(path.siblings.len(), 5);
            let b = bs[v as usize];
            assert!(verify_path(&root, dim, Vertex(v), &b, &path));
            let bad = Block {
                data: b.data.with_bit_flipped(3),
                ..b
            };
            assert!(!verify_path(&root, dim, Vertex(v), &bad, &path));
            assert!(!verify_path(&root, dim, Vertex(v ^ 1), &b, &path));
            let mut sib = path.clone();
            sib.siblings[(v % 5) as usize].0[0] ^= 1;
            assert!(!verify_path(&root, dim, Vertex(v), &b, &sib));
            let mut short = path.clone();
            short.siblings.pop();
            assert!(!verify_path(&root, dim, Vertex(v), &b, &short));
        }
    }

    #[test]
    fn root_commitment_padding() {
        let roots: Vec<Digest> = (0..6u8).map(|t| Digest([t; 32])).collect();
        let rc = RootCommitment::commit(&roots);
        let c = rc.root();
        let mut leaves: Vec<Digest> = roots
            .iter()
            .enumerate()
            .map(|(t, r)| root_leaf_hash(t as u64, r))
            .collect();
        leaves.push(pad_leaf_hash(6));
        leaves.push(pad_leaf_hash(7));
        assert_eq!(c, naive_root(&leaves));
        for t in 0..6u64 {
            let p = rc.open(t).unwrap();
            assert_eq!(p.siblings.len(), 3);
            assert!(verify_root(&c, 5, t, &roots[t as usize], &p));
        }
        assert!(rc.open(6).is_err());
        // Swapped neighbours fail at both positions.
        let p3 = rc.open(3).unwrap();
        let p4 = rc.open(4).unwrap();
        assert!(!verify_root(&c, 5, 3, &roots[4], &p3));
        assert!(!verify_root(&c, 5, 4, &roots[3], &p4));
    }

    #[test]
    fn root_path_lengths() {
        assert_eq!(root_path_len(1), 0);
        assert_eq!(root_path_len(2), 1);
        assert_eq!(root_path_len(6), 3);
        assert_eq!(root_path_len(17), 5);
        let rc = RootCommitment::commit(&[Digest([1; 32])]);
        assert!(verify_root(
            &rc.root(),
            0,
            0,
            &Digest([1; 32]),
            &rc.open(0).unwrap()
        ));
    }

    #[test]
    fn path_bytes_layout() {
        let p = MerklePath {
            leaf: 0x0102,
            siblings: vec![Digest([0xaa; 32]); 2],
        };
        let b = p.to_bytes();
        assert_eq!(b.len(), p.encoded_len());
        assert_eq!(&b[..10], &[0x02, 0x01, 0, 0, 0, 0, 0, 0, 2, 0]);
        assert_eq!(MerklePath::from_bytes(&b).unwrap(), p);
        assert!(MerklePath::from_bytes(&b[..b.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn path_codec_roundtrip(leaf in any::<u64>(), sibs in proptest::collection::vec(any::<[u8; 32]>(), 0..30)) {
            let p = MerklePath { leaf, siblings: sibs.into_iter().map(Digest).collect() };
            prop_assert_eq!(MerklePath::from_bytes(&p.to_bytes()).unwrap(), p);
        }
    }
}
