//! Per-atom starting invariants for the Morgan iteration.

use crate::chem::element::{self, is_halogen};
use crate::chem::{BondOrder, Chirality, MolecularGraph, StereoRef};
use crate::hash::hash_words;

use super::InvariantKind;

const ECFP_SEED: u64 = 0x4543_4650; // "ECFP"
const FCFP_SEED: u64 = 0x4643_4650; // "FCFP"
const REFINE_SEED: u64 = 0x5245_464E;

pub const CLASS_DONOR: u8 = 1 << 0;
pub const CLASS_ACCEPTOR: u8 = 1 << 1;
pub const CLASS_AROMATIC: u8 = 1 << 2;
pub const CLASS_HALOGEN: u8 = 1 << 3;
pub const CLASS_BASIC: u8 = 1 << 4;
pub const CLASS_ACIDIC: u8 = 1 << 5;

pub fn atom_invariants(graph: &MolecularGraph, kind: InvariantKind, use_chirality: bool) -> Vec<u64> {
    match kind {
        InvariantKind::Ecfp => ecfp_invariants(graph, use_chirality),
        InvariantKind::Fcfp => (0..graph.atom_count())
            .map(|i| hash_words(FCFP_SEED, &[pharmacophore_class(graph, i) as u64]))
            .collect(),
    }
}

fn ecfp_invariants(graph: &MolecularGraph, use_chirality: bool) -> Vec<u64> {
    let tags = if use_chirality {
        canonical_chirality(graph)
    } else {
        vec![Chirality::None; graph.atom_count()]
    };
    graph
        .atoms
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let chiral = match tags[i] {
                Chirality::None => 0,
                Chirality::CounterClockwise => 1,
                Chirality::Clockwise => 2,
            };
            hash_words(
                ECFP_SEED,
                &[
                    graph.degree(i) as u64,
                    a.element as u64,
                    a.hydrogens as u64,
                    a.formal_charge as i64 as u64,
                    a.in_ring as u64,
                    a.isotope.unwrap_or(0) as u64,
                    chiral,
                ],
            )
        })
        .collect()
}

/// Chirality expressed against canonical neighbour ranks, so the tag no
/// longer depends on the written neighbour order. Centres whose neighbours
/// cannot be told apart lose their tag.
pub fn canonical_chirality(graph: &MolecularGraph) -> Vec<Chirality> {
    let n = graph.atom_count();
    if graph.atoms.iter().all(|a| a.chirality == Chirality::None) {
        return vec![Chirality::None; n];
    }
    let ranks = refined_classes(graph);
    (0..n)
        .map(|i| {
            let tag = graph.atoms[i].chirality;
            let refs = &graph.stereo[i];
            if tag == Chirality::None || refs.len() < 3 {
                return Chirality::None;
            }
            // Implicit hydrogen sorts first; a class value can never be 0 in practice.
            let key = |r: &StereoRef| match *r {
                StereoRef::ImplicitH => (0u8, 0u64),
                StereoRef::Atom(a) => (1u8, ranks[a]),
            };
            let keys: Vec<(u8, u64)> = refs.iter().map(key).collect();
            let mut sorted = keys.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Chirality::None;
            }
            match crate::chem::permutation_is_odd(&keys, &sorted) {
                Some(true) => tag.flipped(),
                Some(false) => tag,
                None => Chirality::None,
            }
        })
        .collect()
}

/// Iterative neighbourhood refinement of chirality-free invariants until the
/// number of distinct classes stops growing. Returned values are class hashes
/// that depend only on the graph up to isomorphism.
pub fn refined_classes(graph: &MolecularGraph) -> Vec<u64> {
    let mut classes = ecfp_invariants(graph, false);
    let mut distinct = count_distinct(&classes);
    for _ in 0..graph.atom_count() {
        let next: Vec<u64> = (0..graph.atom_count())
            .map(|i| {
                let mut pairs: Vec<(u64, u64)> = graph
                    .neighbors(i)
                    .iter()
                    .map(|nb| (graph.bonds[nb.bond].order.code(), classes[nb.atom]))
                    .collect();
                pairs.sort_unstable();
                let mut words = vec![classes[i]];
                for (b, c) in pairs {
                    words.push(b);
                    words.push(c);
                }
                hash_words(REFINE_SEED, &words)
            })
            .collect();
        let d = count_distinct(&next);
        classes = next;
        if d <= distinct {
            break;
        }
        distinct = d;
    }
    classes
}

fn count_distinct(v: &[u64]) -> usize {
    let mut s = v.to_vec();
    s.sort_unstable();
    s.dedup();
    s.len()
}

/// Six-bit pharmacophore class: donor, acceptor, aromatic, halogen, basic, acidic.
pub fn pharmacophore_class(graph: &MolecularGraph, atom: usize) -> u8 {
    let a = &graph.atoms[atom];
    let mut class = 0u8;
    let z = a.element;
    let is_n = z == element::NITROGEN;
    let is_o = z == element::OXYGEN;
    let is_s = z == element::SULFUR;

    if (is_n || is_o) && a.hydrogens > 0 {
        class |= CLASS_DONOR;
    }
    if a.aromatic {
        class |= CLASS_AROMATIC;
    }
    if is_halogen(z) {
        class |= CLASS_HALOGEN;
    }

    let conjugated = graph.neighbors(atom).iter().any(|nb| {
        let other = nb.atom;
        graph.atoms[other].aromatic || has_double_to_heteroatom(graph, other)
    });
    let only_single = graph
        .neighbors(atom)
        .iter()
        .all(|nb| graph.bonds[nb.bond].order == BondOrder::Single);

    if is_o && a.formal_charge <= 0 {
        class |= CLASS_ACCEPTOR;
    }
    if is_n && a.formal_charge <= 0 {
        let pyridine_like = a.aromatic && a.hydrogens == 0 && graph.degree(atom) == 2;
        let amine_like = !a.aromatic && only_single && !conjugated;
        let imine_like = !a.aromatic
            && graph
                .neighbors(atom)
                .iter()
                .any(|nb| matches!(graph.bonds[nb.bond].order, BondOrder::Double | BondOrder::Triple));
        if pyridine_like || amine_like || imine_like {
            class |= CLASS_ACCEPTOR;
        }
    }
    if is_n && ((a.formal_charge > 0 && a.hydrogens > 0) || (a.formal_charge == 0 && !a.aromatic && only_single && !conjugated)) {
        class |= CLASS_BASIC;
    }
    if (is_o || is_s) && (a.formal_charge < 0 || a.hydrogens > 0) {
        let acid_carbon = graph
            .neighbors(atom)
            .iter()
            .any(|nb| has_double_to_heteroatom(graph, nb.atom));
        if a.formal_charge < 0 || acid_carbon {
            class |= CLASS_ACIDIC;
        }
    }
    class
}

/// Atom carries a double bond to O or S (carbonyl, sulfonyl, phosphoryl).
fn has_double_to_heteroatom(graph: &MolecularGraph, atom: usize) -> bool {
    graph.neighbors(atom).iter().any(|nb| {
        graph.bonds[nb.bond].order == BondOrder::Double
            && matches!(graph.atoms[nb.atom].element, element::OXYGEN | element::SULFUR)
    })
}
