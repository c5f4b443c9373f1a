//! The hypercube arena and its skip-link initialization.

use rayon::prelude::*;

use crate::commitment::MerkleTree;
use crate::error::ParamError;
use crate::hashing::{
    init_causal_digest, init_data_digest, initial_transcript, Digest, Dim, Vertex,
};

/// One arena cell: a data digest and the causal digest chaining its
/// write history. 64 bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
#[repr(C)]
pub struct Block {
    pub data: Digest,
    pub causal: Digest,
}

/// Dense array of `2^d_hc` blocks indexed by vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arena {
    dim: Dim,
    blocks: Vec<Block>,
}

impl Arena {
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Arena, ParamError> {
        let n = blocks.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(ParamError::Dimension(n.max(1).ilog2()));
        }
        Ok(Arena {
            dim: Dim::new(n.trailing_zeros())?,
            blocks,
        })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Resident size in bytes.
    pub fn byte_len(&self) -> usize {
        std::mem::size_of_val(self.blocks.as_slice())
    }

    #[inline]
    pub fn get(&self, v: Vertex) -> &Block {
        &self.blocks[v.as_usize()]
    }

    #[inline]
    pub fn set(&mut self, v: Vertex, block: Block) {
        self.blocks[v.as_usize()] = block;
    }
}

/// Skip-link parent `v >> 1`. Vertex 0 is the root of the init DAG and
/// has none.
pub fn skip_parent(v: Vertex) -> Option<Vertex> {
    (v.0 != 0).then_some(Vertex(v.0 >> 1))
}

/// Recomputes vertex `v`'s initial block from the seed alone by walking
/// its skip chain down to vertex 0: `bit_length(v) + 1` hashes per field.
pub fn initial_block(seed: &Digest, v: Vertex) -> Block {
    let depth = 64 - v.0.leading_zeros();
    let mut data = init_data_digest(seed, 0, None);
    let mut causal = init_causal_digest(seed, 0, None);
    for k in (0..depth).rev() {
        let i = v.0 >> k;
        data = init_data_digest(seed, i, Some(&data));
        causal = init_causal_digest(seed, i, Some(&causal));
    }
    Block { data, causal }
}

/// Initial state of a run: the filled arena, its tree, `r_0` and `T_0`.
#[derive(Clone, Debug)]
pub struct Genesis {
    pub arena: Arena,
    pub tree: MerkleTree,
    pub root: Digest,
    pub transcript: Digest,
}

/// Fills an arena of dimension `dim` from `seed` and commits it.
///
/// Vertices in `[2^k, 2^(k+1))` depend only on the previous level, so each
/// level is filled in parallel once it is wide enough; the result is
/// identical to the ascending-order fill.
pub fn init_arena(seed: &Digest, dim: Dim) -> Result<Genesis, ParamError> {
    if dim.bits() == 0 {
        return Err(ParamError::Dimension(0));
    }
    let n = dim.vertex_count() as usize;
    let mut blocks = vec![Block::default(); n];
    blocks[0] = Block {
        data: init_data_digest(seed, 0, None),
        causal: init_causal_digest(seed, 0, None),
    };
    let mut lo = 1usize;
    while lo < n {
        let (done, level) = blocks.split_at_mut(lo);
        let level = &mut level[..lo];
        let fill = |(k, b): (usize, &mut Block)| {
            let i = lo + k;
            let p = &done[i >> 1];
            *b = Block {
                data: init_data_digest(seed, i as u64, Some(&p.data)),
                causal: init_causal_digest(seed, i as u64, Some(&p.causal)),
            };
        };
        if lo >= 1 << 12 {
            level.par_iter_mut().enumerate().for_each(fill);
        } else {
            level.iter_mut().enumerate().for_each(fill);
        }
        lo *= 2;
    }
    let arena = Arena { dim, blocks };
    let tree = MerkleTree::build(&arena);
    let root = tree.root();
    let transcript = initial_transcript(seed, dim.vertex_count(), &root);
    Ok(Genesis {
        arena,
        tree,
        root,
        transcript,
    })
}
