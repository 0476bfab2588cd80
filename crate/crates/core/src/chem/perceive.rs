//! Ring membership, implicit hydrogens and the sanitisation checks
//! (valence limits and aromatic ring systems).

use super::element::{self, allowed_valences};
use super::{BondOrder, MolecularGraph, SmilesError, SmilesErrorKind};

/// Bond ring membership per bond index.
pub(crate) fn ring_bonds(graph: &MolecularGraph) -> Vec<bool> {
    (0..graph.bonds.len())
        .map(|skip| {
            let b = graph.bonds[skip];
            // A bond is in a ring iff its endpoints stay connected without it.
            let mut seen = vec![false; graph.atoms.len()];
            let mut stack = vec![b.begin];
            seen[b.begin] = true;
            while let Some(a) = stack.pop() {
                if a == b.end {
                    return true;
                }
                for nb in graph.neighbors(a) {
                    if nb.bond != skip && !seen[nb.atom] {
                        seen[nb.atom] = true;
                        stack.push(nb.atom);
                    }
                }
            }
            false
        })
        .collect()
}

/// Set `in_ring` on atoms and demote aromatic bonds outside rings to single.
pub(crate) fn perceive_rings(graph: &mut MolecularGraph) {
    let in_ring = ring_bonds(graph);
    for a in graph.atoms.iter_mut() {
        a.in_ring = false;
    }
    for (i, b) in graph.bonds.iter_mut().enumerate() {
        if in_ring[i] {
            graph.atoms[b.begin].in_ring = true;
            graph.atoms[b.end].in_ring = true;
        } else if b.order == BondOrder::Aromatic {
            b.order = BondOrder::Single;
        }
    }
}

/// Implicit hydrogen count an organic-subset atom receives from its bonds.
pub(crate) fn default_hydrogens(graph: &MolecularGraph, atom: usize) -> u8 {
    let a = &graph.atoms[atom];
    let valences = allowed_valences(a.element, a.formal_charge);
    let sum = graph.bond_valence(atom);
    if a.aromatic {
        let lowest = valences.first().copied().unwrap_or(0);
        lowest.saturating_sub(1).saturating_sub(sum)
    } else {
        valences
            .iter()
            .find(|&&v| v >= sum)
            .map(|&v| v - sum)
            .unwrap_or(0)
    }
}

pub(crate) fn assign_implicit_hydrogens(graph: &mut MolecularGraph, organic: &[bool]) {
    for i in 0..graph.atoms.len() {
        if organic[i] {
            graph.atoms[i].hydrogens = default_hydrogens(graph, i);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PiRole {
    /// Contributes one electron through a ring double bond.
    NeedsDouble,
    /// Contributes a lone pair.
    LonePair,
    /// Contributes nothing (exocyclic double bond, empty orbital).
    Empty,
}

fn pi_role(graph: &MolecularGraph, atom: usize) -> PiRole {
    let a = &graph.atoms[atom];
    let exocyclic_double = graph.neighbors(atom).iter().any(|n| {
        matches!(graph.bonds[n.bond].order, BondOrder::Double | BondOrder::Triple)
    });
    if exocyclic_double {
        return PiRole::Empty;
    }
    match (a.element, a.formal_charge) {
        (element::CARBON, 0) => PiRole::NeedsDouble,
        (element::CARBON, c) if c < 0 => PiRole::LonePair,
        (element::CARBON, _) => PiRole::Empty,
        (element::NITROGEN | element::PHOSPHORUS | element::ARSENIC, 0) => {
            if a.hydrogens > 0 || graph.degree(atom) >= 3 {
                PiRole::LonePair
            } else {
                PiRole::NeedsDouble
            }
        }
        (element::NITROGEN | element::PHOSPHORUS | element::ARSENIC, c) if c > 0 => {
            PiRole::NeedsDouble
        }
        (element::NITROGEN | element::PHOSPHORUS | element::ARSENIC, _) => PiRole::LonePair,
        (element::OXYGEN | element::SULFUR | element::SELENIUM, c) if c > 0 => {
            PiRole::NeedsDouble
        }
        (element::OXYGEN | element::SULFUR | element::SELENIUM, _) => PiRole::LonePair,
        (element::BORON, c) if c < 0 => PiRole::NeedsDouble,
        _ => PiRole::Empty,
    }
}

fn pi_electrons(role: PiRole) -> usize {
    match role {
        PiRole::NeedsDouble => 1,
        PiRole::LonePair => 2,
        PiRole::Empty => 0,
    }
}

/// Check valences and aromatic ring systems.
pub fn sanitize(graph: &MolecularGraph) -> Result<(), SmilesError> {
    for (i, a) in graph.atoms.iter().enumerate() {
        let allowed = allowed_valences(a.element, a.formal_charge);
        let Some(&max) = allowed.last() else { continue };
        let mut total = graph.bond_valence(i) + a.hydrogens;
        if a.aromatic && a.in_ring && pi_role(graph, i) == PiRole::NeedsDouble {
            total += 1;
        }
        if total > max {
            return Err(SmilesError::new(
                0,
                SmilesErrorKind::Valence {
                    atom: i,
                    symbol: a.symbol(),
                    valence: total,
                },
            ));
        }
    }
    for (i, a) in graph.atoms.iter().enumerate() {
        if a.aromatic && !a.in_ring {
            return Err(SmilesError::new(0, SmilesErrorKind::AromaticOutsideRing(i)));
        }
    }
    for system in aromatic_systems(graph) {
        if !valid_aromatic_system(graph, &system) {
            return Err(SmilesError::new(0, SmilesErrorKind::Aromaticity(system[0])));
        }
    }
    Ok(())
}

/// Connected components over aromatic bonds, as sorted atom lists.
fn aromatic_systems(graph: &MolecularGraph) -> Vec<Vec<usize>> {
    let n = graph.atoms.len();
    let mut seen = vec![false; n];
    let mut systems = Vec::new();
    for start in 0..n {
        if seen[start] || !graph.atoms[start].aromatic {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut i = 0;
        while i < comp.len() {
            for nb in graph.neighbors(comp[i]) {
                if graph.bonds[nb.bond].order == BondOrder::Aromatic && !seen[nb.atom] {
                    seen[nb.atom] = true;
                    comp.push(nb.atom);
                }
            }
            i += 1;
        }
        comp.sort_unstable();
        systems.push(comp);
    }
    systems
}

/// Monocycles must satisfy the 4n+2 rule; every system must admit a Kekulé
/// assignment, i.e. a perfect matching of its one-electron atoms.
fn valid_aromatic_system(graph: &MolecularGraph, system: &[usize]) -> bool {
    let roles: Vec<PiRole> = system.iter().map(|&a| pi_role(graph, a)).collect();
    let aromatic_bonds = graph
        .bonds
        .iter()
        .filter(|b| b.order == BondOrder::Aromatic && system.binary_search(&b.begin).is_ok())
        .count();
    if aromatic_bonds == system.len() {
        let electrons: usize = roles.iter().map(|&r| pi_electrons(r)).sum();
        if electrons % 4 != 2 {
            return false;
        }
    }
    let needs: Vec<usize> = system
        .iter()
        .zip(&roles)
        .filter(|(_, &r)| r == PiRole::NeedsDouble)
        .map(|(&a, _)| a)
        .collect();
    if needs.len() % 2 == 1 {
        return false;
    }
    let mut matched = vec![false; graph.atoms.len()];
    let mut is_need = vec![false; graph.atoms.len()];
    for &a in &needs {
        is_need[a] = true;
    }
    perfect_matching(graph, &needs, &is_need, &mut matched)
}

fn perfect_matching(
    graph: &MolecularGraph,
    needs: &[usize],
    is_need: &[bool],
    matched: &mut [bool],
) -> bool {
    let Some(&u) = needs.iter().find(|&&a| !matched[a]) else {
        return true;
    };
    matched[u] = true;
    for nb in graph.neighbors(u) {
        let v = nb.atom;
        if is_need[v] && !matched[v] && graph.bonds[nb.bond].order == BondOrder::Aromatic {
            matched[v] = true;
            if perfect_matching(graph, needs, is_need, matched) {
                return true;
            }
            matched[v] = false;
        }
    }
    matched[u] = false;
    false
}
