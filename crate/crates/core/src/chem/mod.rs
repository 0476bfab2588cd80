//! Molecular graphs: SMILES parsing, sanitisation, writing and standardisation.

pub mod element;
mod perceive;
mod smiles;
mod standardize;
mod writer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use perceive::sanitize;
pub use smiles::{parse_smiles, parse_smiles_unsanitized};
pub use standardize::{standardize, standardize_smiles, StandardizationReport};
pub use writer::to_smiles;
pub(crate) use writer::permutation_is_odd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Chirality {
    #[default]
    None,
    /// `@@`
    Clockwise,
    /// `@`
    CounterClockwise,
}

impl Chirality {
    pub fn flipped(self) -> Self {
        match self {
            Chirality::None => Chirality::None,
            Chirality::Clockwise => Chirality::CounterClockwise,
            Chirality::CounterClockwise => Chirality::Clockwise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub element: u8,
    pub formal_charge: i8,
    /// Attached hydrogens, implicit or written inside brackets. Hydrogens are
    /// never graph nodes once a molecule has been standardised.
    pub hydrogens: u8,
    pub aromatic: bool,
    pub in_ring: bool,
    pub isotope: Option<u16>,
    pub chirality: Chirality,
}

impl Atom {
    pub fn new(element: u8) -> Self {
        Atom {
            element,
            formal_charge: 0,
            hydrogens: 0,
            aromatic: false,
            in_ring: false,
            isotope: None,
            chirality: Chirality::None,
        }
    }

    pub fn symbol(&self) -> &'static str {
        element::symbol(self.element)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to the valence sum; aromatic bonds count as one.
    pub fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    /// Stable small integer used in hashing.
    pub fn code(self) -> u64 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub begin: usize,
    pub end: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.begin == atom {
            self.end
        } else {
            self.begin
        }
    }
}

/// One neighbour slot in the written order around a stereocentre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StereoRef {
    Atom(usize),
    ImplicitH,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub atom: usize,
    pub bond: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "GraphRecord")]
pub struct MolecularGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// Neighbour order that `@`/`@@` refer to, one list per atom; empty for
    /// atoms without a chirality tag.
    pub stereo: Vec<Vec<StereoRef>>,
    pub source_smiles: String,
    #[serde(skip)]
    adjacency: Vec<Vec<Neighbor>>,
}

#[derive(Deserialize)]
struct GraphRecord {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    stereo: Vec<Vec<StereoRef>>,
    source_smiles: String,
}

impl From<GraphRecord> for MolecularGraph {
    fn from(r: GraphRecord) -> Self {
        MolecularGraph::new(r.atoms, r.bonds, r.stereo, &r.source_smiles)
    }
}

impl PartialEq for MolecularGraph {
    fn eq(&self, other: &Self) -> bool {
        self.same_structure(other)
    }
}

impl MolecularGraph {
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>, stereo: Vec<Vec<StereoRef>>, source: &str) -> Self {
        let mut g = MolecularGraph {
            atoms,
            bonds,
            stereo,
            source_smiles: source.to_string(),
            adjacency: Vec::new(),
        };
        g.stereo.resize(g.atoms.len(), Vec::new());
        g.rebuild_adjacency();
        g
    }

    pub(crate) fn rebuild_adjacency(&mut self) {
        let mut adjacency = vec![Vec::new(); self.atoms.len()];
        for (i, b) in self.bonds.iter().enumerate() {
            adjacency[b.begin].push(Neighbor { atom: b.end, bond: i });
            adjacency[b.end].push(Neighbor { atom: b.begin, bond: i });
        }
        self.adjacency = adjacency;
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn neighbors(&self, atom: usize) -> &[Neighbor] {
        &self.adjacency[atom]
    }

    /// Heavy-atom neighbour count.
    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom]
            .iter()
            .filter(|n| self.atoms[n.atom].element != element::HYDROGEN)
            .count()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|n| n.atom == b)
            .map(|n| &self.bonds[n.bond])
    }

    /// Sum of bond valences around an atom (aromatic bonds count one).
    pub fn bond_valence(&self, atom: usize) -> u8 {
        self.adjacency[atom]
            .iter()
            .map(|n| self.bonds[n.bond].order.valence())
            .sum()
    }

    /// Connected components as sorted atom lists, ordered by their smallest atom.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.atoms.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut i = 0;
            while i < comp.len() {
                let a = comp[i];
                for nb in &self.adjacency[a] {
                    if !seen[nb.atom] {
                        seen[nb.atom] = true;
                        comp.push(nb.atom);
                    }
                }
                i += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Cyclomatic number: independent ring count.
    pub fn ring_count(&self) -> usize {
        (self.bonds.len() + self.components().len()).saturating_sub(self.atoms.len())
    }

    /// Structural equality: atoms and bonds (as unordered pairs) in index order.
    pub fn same_structure(&self, other: &Self) -> bool {
        if self.atoms != other.atoms || self.bonds.len() != other.bonds.len() {
            return false;
        }
        let key = |g: &Self| {
            let mut v: Vec<(usize, usize, BondOrder)> = g
                .bonds
                .iter()
                .map(|b| (b.begin.min(b.end), b.begin.max(b.end), b.order))
                .collect();
            v.sort();
            v
        };
        key(self) == key(other)
    }

    /// Keep only the listed atoms (in the given order), renumbering bonds and
    /// stereo references. Removed explicit hydrogens referenced by a
    /// stereocentre become implicit-H slots.
    pub fn subgraph(&self, keep: &[usize]) -> MolecularGraph {
        let mut map = vec![usize::MAX; self.atoms.len()];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let atoms = keep.iter().map(|&i| self.atoms[i].clone()).collect();
        let bonds = self
            .bonds
            .iter()
            .filter(|b| map[b.begin] != usize::MAX && map[b.end] != usize::MAX)
            .map(|b| Bond {
                begin: map[b.begin],
                end: map[b.end],
                order: b.order,
            })
            .collect();
        let stereo = keep
            .iter()
            .map(|&old| {
                self.stereo[old]
                    .iter()
                    .map(|r| match *r {
                        StereoRef::Atom(a) if map[a] != usize::MAX => StereoRef::Atom(map[a]),
                        StereoRef::Atom(_) => StereoRef::ImplicitH,
                        StereoRef::ImplicitH => StereoRef::ImplicitH,
                    })
                    .collect()
            })
            .collect();
        MolecularGraph::new(atoms, bonds, stereo, &self.source_smiles)
    }

    /// Renumber atoms so that old atom `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> MolecularGraph {
        assert_eq!(perm.len(), self.atoms.len());
        let mut order = vec![0usize; perm.len()];
        for (old, &new) in perm.iter().enumerate() {
            order[new] = old;
        }
        let mut g = self.subgraph(&order);
        g.bonds.sort_by_key(|b| (b.begin.min(b.end), b.begin.max(b.end)));
        g.rebuild_adjacency();
        g
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesErrorKind {
    #[error("empty SMILES")]
    Empty,
    #[error("unexpected character '{0}'")]
    UnexpectedChar(char),
    #[error("unknown element symbol '{0}'")]
    UnknownElement(String),
    #[error("unmatched ring bond {0}")]
    UnmatchedRingBond(u32),
    #[error("unbalanced branch parenthesis")]
    UnbalancedParenthesis,
    #[error("unclosed bracket atom")]
    UnclosedBracket,
    #[error("reaction SMILES are not supported")]
    Reaction,
    #[error("wildcard atoms are not supported")]
    Wildcard,
    #[error("bond symbol without a following atom")]
    DanglingBond,
    #[error("conflicting bond symbols on ring closure {0}")]
    RingBondConflict(u32),
    #[error("atom bonded to itself")]
    SelfBond,
    #[error("duplicate bond between atoms {0} and {1}")]
    DuplicateBond(usize, usize),
    #[error("valence violation on atom {atom} ({symbol}, valence {valence})")]
    Valence {
        atom: usize,
        symbol: &'static str,
        valence: u8,
    },
    #[error("aromatic atom {0} is not in a ring")]
    AromaticOutsideRing(usize),
    #[error("aromatic system containing atom {0} is not a valid aromatic ring system")]
    Aromaticity(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("SMILES error at position {position}: {kind}")]
pub struct SmilesError {
    pub position: usize,
    pub kind: SmilesErrorKind,
}

impl SmilesError {
    pub fn new(position: usize, kind: SmilesErrorKind) -> Self {
        SmilesError { position, kind }
    }

    pub fn is_valence(&self) -> bool {
        matches!(self.kind, SmilesErrorKind::Valence { .. })
    }
}
