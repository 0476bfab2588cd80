//! SMILES output. Atoms are visited depth-first from the lowest-numbered atom
//! of each component, neighbours in ascending index order, so the written
//! string depends on the atom numbering; chirality tags are rewritten to match
//! the emitted neighbour order.

use std::collections::BTreeSet;
use std::fmt::Write;

use super::element::{self, is_organic_subset};
use super::perceive::default_hydrogens;
use super::{BondOrder, Chirality, MolecularGraph, StereoRef};

pub fn to_smiles(graph: &MolecularGraph) -> String {
    let n = graph.atom_count();
    let mut visited = vec![false; n];
    let mut order = vec![usize::MAX; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut parent = vec![usize::MAX; n];
    // Ring-closure bonds incident to each atom, in discovery order.
    let mut ring_bonds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut roots = Vec::new();
    let mut counter = 0;

    for root in 0..n {
        if visited[root] {
            continue;
        }
        roots.push(root);
        let mut stack = vec![(root, usize::MAX)];
        while let Some((atom, from)) = stack.pop() {
            if visited[atom] {
                continue;
            }
            visited[atom] = true;
            order[atom] = counter;
            counter += 1;
            if from != usize::MAX {
                parent[atom] = from;
                children[from].push(atom);
            }
            let mut nbs: Vec<usize> = graph.neighbors(atom).iter().map(|nb| nb.atom).collect();
            nbs.sort_unstable();
            for &v in nbs.iter().rev() {
                if !visited[v] {
                    stack.push((v, atom));
                }
            }
        }
    }
    // Recompute children lists from the final parent map, since the stack
    // may have pushed an atom before it was reached through another path.
    for c in children.iter_mut() {
        c.clear();
    }
    let mut by_order: Vec<usize> = (0..n).collect();
    by_order.sort_by_key(|&a| order[a]);
    for &a in &by_order {
        if parent[a] != usize::MAX {
            children[parent[a]].push(a);
        }
    }
    for (bi, b) in graph.bonds.iter().enumerate() {
        if parent[b.begin] != b.end && parent[b.end] != b.begin {
            ring_bonds[b.begin].push(bi);
            ring_bonds[b.end].push(bi);
        }
    }
    for (a, list) in ring_bonds.iter_mut().enumerate() {
        list.sort_by_key(|&bi| order[graph.bonds[bi].other(a)]);
    }

    let mut out = String::new();
    let mut digits: BTreeSet<u32> = (1..=99).collect();
    let mut open: Vec<Option<u32>> = vec![None; graph.bonds.len()];
    let mut written = vec![false; n];
    for (i, &root) in roots.iter().enumerate() {
        if i > 0 {
            out.push('.');
        }
        write_branch(
            graph,
            root,
            &children,
            &ring_bonds,
            &parent,
            &mut written,
            &mut open,
            &mut digits,
            &mut out,
        );
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn write_branch(
    graph: &MolecularGraph,
    start: usize,
    children: &[Vec<usize>],
    ring_bonds: &[Vec<usize>],
    parent: &[usize],
    written: &mut [bool],
    open: &mut [Option<u32>],
    digits: &mut BTreeSet<u32>,
    out: &mut String,
) {
    let mut atom = start;
    loop {
        written[atom] = true;
        // Emitted neighbour order: parent, implicit H, ring closures, children.
        let mut emitted: Vec<StereoRef> = Vec::new();
        if parent[atom] != usize::MAX {
            emitted.push(StereoRef::Atom(parent[atom]));
        }
        if graph.atoms[atom].hydrogens > 0 {
            emitted.push(StereoRef::ImplicitH);
        }
        let mut ring_text = String::new();
        for &bi in &ring_bonds[atom] {
            let bond = graph.bonds[bi];
            let other = bond.other(atom);
            emitted.push(StereoRef::Atom(other));
            let digit = match open[bi] {
                Some(d) => {
                    digits.insert(d);
                    d
                }
                None => {
                    let d = *digits.iter().next().expect("ring closure digits exhausted");
                    digits.remove(&d);
                    open[bi] = Some(d);
                    // Bond symbol goes on the opening side.
                    ring_text.push_str(bond_symbol(graph, bi));
                    d
                }
            };
            ring_text.push_str(&digit_text(digit));
        }
        emitted.extend(children[atom].iter().map(|&c| StereoRef::Atom(c)));
        write_atom(graph, atom, &emitted, out);
        out.push_str(&ring_text);

        let kids = &children[atom];
        if kids.is_empty() {
            return;
        }
        for &child in &kids[..kids.len() - 1] {
            out.push('(');
            out.push_str(bond_symbol(graph, bond_index(graph, atom, child)));
            write_branch(graph, child, children, ring_bonds, parent, written, open, digits, out);
            out.push(')');
        }
        let last = kids[kids.len() - 1];
        out.push_str(bond_symbol(graph, bond_index(graph, atom, last)));
        atom = last;
    }
}

fn digit_text(d: u32) -> String {
    if d < 10 {
        d.to_string()
    } else {
        format!("%{d}")
    }
}

fn bond_index(graph: &MolecularGraph, a: usize, b: usize) -> usize {
    graph
        .neighbors(a)
        .iter()
        .find(|nb| nb.atom == b)
        .map(|nb| nb.bond)
        .expect("bond between tree neighbours")
}

fn bond_symbol(graph: &MolecularGraph, bond: usize) -> &'static str {
    let b = graph.bonds[bond];
    let both_aromatic = graph.atoms[b.begin].aromatic && graph.atoms[b.end].aromatic;
    match b.order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

/// Parity of the permutation taking `from` to `to`; `None` if they are not
/// permutations of each other.
pub(crate) fn permutation_is_odd<T: PartialEq + Copy>(from: &[T], to: &[T]) -> Option<bool> {
    if from.len() != to.len() {
        return None;
    }
    let mut idx = Vec::with_capacity(to.len());
    for x in to {
        let p = from.iter().position(|y| y == x)?;
        if idx.contains(&p) {
            return None;
        }
        idx.push(p);
    }
    let mut inversions = 0;
    for i in 0..idx.len() {
        for j in i + 1..idx.len() {
            if idx[i] > idx[j] {
                inversions += 1;
            }
        }
    }
    Some(inversions % 2 == 1)
}

fn write_atom(graph: &MolecularGraph, atom: usize, emitted: &[StereoRef], out: &mut String) {
    let a = &graph.atoms[atom];
    let chirality = match a.chirality {
        Chirality::None => Chirality::None,
        tag => {
            // The H slot only appears in the written order when the bracket
            // carries hydrogens, which it always does here.
            match permutation_is_odd(&graph.stereo[atom], emitted) {
                Some(true) => tag.flipped(),
                Some(false) => tag,
                None => Chirality::None,
            }
        }
    };
    let symbol = if a.aromatic {
        a.symbol().to_ascii_lowercase()
    } else {
        a.symbol().to_string()
    };
    let bare = is_organic_subset(a.element)
        && a.formal_charge == 0
        && a.isotope.is_none()
        && chirality == Chirality::None
        && a.element != element::HYDROGEN
        && default_hydrogens(graph, atom) == a.hydrogens;
    if bare {
        out.push_str(&symbol);
        return;
    }
    out.push('[');
    if let Some(iso) = a.isotope {
        let _ = write!(out, "{iso}");
    }
    out.push_str(&symbol);
    match chirality {
        Chirality::CounterClockwise => out.push('@'),
        Chirality::Clockwise => out.push_str("@@"),
        Chirality::None => {}
    }
    match a.hydrogens {
        0 => {}
        1 => out.push('H'),
        h => {
            let _ = write!(out, "H{h}");
        }
    }
    match a.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => {
            let _ = write!(out, "+{c}");
        }
        c => {
            let _ = write!(out, "-{}", -c);
        }
    }
    out.push(']');
}
