use std::collections::HashMap;

use super::element::{self, atomic_number};
use super::perceive;
use super::{Atom, Bond, BondOrder, Chirality, MolecularGraph, SmilesError, SmilesErrorKind, StereoRef};

/// Parse and sanitise a SMILES string.
pub fn parse_smiles(text: &str) -> Result<MolecularGraph, SmilesError> {
    let graph = parse_smiles_unsanitized(text)?;
    perceive::sanitize(&graph)?;
    Ok(graph)
}

/// Parse a SMILES string without valence or aromaticity checks. Ring
/// membership, implicit hydrogens and bond aromaticity are still perceived.
pub fn parse_smiles_unsanitized(text: &str) -> Result<MolecularGraph, SmilesError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(SmilesError::new(0, SmilesErrorKind::Empty));
    }
    let mut parser = Parser::new(text);
    parser.run()?;
    let Parser {
        atoms,
        bonds,
        stereo,
        organic,
        ..
    } = parser;
    let mut graph = MolecularGraph::new(atoms, bonds, stereo, text);
    perceive::perceive_rings(&mut graph);
    perceive::assign_implicit_hydrogens(&mut graph, &organic);
    for (i, a) in graph.atoms.iter_mut().enumerate() {
        if a.chirality == Chirality::None {
            graph.stereo[i].clear();
        }
    }
    Ok(graph)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSymbol {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondSymbol {
    fn order(self) -> BondOrder {
        match self {
            BondSymbol::Single => BondOrder::Single,
            BondSymbol::Double => BondOrder::Double,
            BondSymbol::Triple => BondOrder::Triple,
            BondSymbol::Aromatic => BondOrder::Aromatic,
        }
    }
}

struct OpenRing {
    atom: usize,
    bond: Option<BondSymbol>,
    /// Index of the placeholder inside `stereo[atom]`.
    slot: usize,
    position: usize,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    stereo: Vec<Vec<StereoRef>>,
    /// Whether each atom was written in the organic subset (implicit H applies).
    organic: Vec<bool>,
    prev: Option<usize>,
    pending: Option<(BondSymbol, usize)>,
    branches: Vec<(usize, usize)>,
    rings: HashMap<u32, OpenRing>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            src: text.as_bytes(),
            pos: 0,
            atoms: Vec::new(),
            bonds: Vec::new(),
            stereo: Vec::new(),
            organic: Vec::new(),
            prev: None,
            pending: None,
            branches: Vec::new(),
            rings: HashMap::new(),
        }
    }

    fn err<T>(&self, kind: SmilesErrorKind) -> Result<T, SmilesError> {
        Err(SmilesError::new(self.pos, kind))
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    let Some(prev) = self.prev else {
                        return self.err(SmilesErrorKind::UnbalancedParenthesis);
                    };
                    if self.pending.is_some() {
                        return self.err(SmilesErrorKind::DanglingBond);
                    }
                    self.branches.push((prev, self.pos));
                    self.pos += 1;
                }
                b')' => {
                    let Some((atom, _)) = self.branches.pop() else {
                        return self.err(SmilesErrorKind::UnbalancedParenthesis);
                    };
                    if self.pending.is_some() {
                        return self.err(SmilesErrorKind::DanglingBond);
                    }
                    self.prev = Some(atom);
                    self.pos += 1;
                }
                b'.' => {
                    if self.pending.is_some() {
                        return self.err(SmilesErrorKind::DanglingBond);
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.pending.is_some() || self.prev.is_none() {
                        return self.err(SmilesErrorKind::DanglingBond);
                    }
                    let sym = match c {
                        b'=' => BondSymbol::Double,
                        b'#' => BondSymbol::Triple,
                        b':' => BondSymbol::Aromatic,
                        _ => BondSymbol::Single,
                    };
                    self.pending = Some((sym, self.pos));
                    self.pos += 1;
                }
                b'$' => return self.err(SmilesErrorKind::UnexpectedChar('$')),
                b'0'..=b'9' | b'%' => self.ring_closure()?,
                b'>' => return self.err(SmilesErrorKind::Reaction),
                b'*' => return self.err(SmilesErrorKind::Wildcard),
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom.0, false, atom.1)?;
                }
                b'A'..=b'Z' | b'a'..=b'z' => {
                    let atom = self.organic_atom()?;
                    self.add_atom(atom, true, 0)?;
                }
                other => return self.err(SmilesErrorKind::UnexpectedChar(other as char)),
            }
        }
        if let Some((_, p)) = self.pending {
            return Err(SmilesError::new(p, SmilesErrorKind::DanglingBond));
        }
        if let Some(&(_, p)) = self.branches.last() {
            return Err(SmilesError::new(p, SmilesErrorKind::UnbalancedParenthesis));
        }
        if let Some((&digit, ring)) = self.rings.iter().min_by_key(|(_, r)| r.position) {
            return Err(SmilesError::new(
                ring.position,
                SmilesErrorKind::UnmatchedRingBond(digit),
            ));
        }
        Ok(())
    }

    fn add_atom(&mut self, atom: Atom, organic: bool, bracket_h: u8) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        let aromatic = atom.aromatic;
        let chiral = atom.chirality != Chirality::None;
        self.atoms.push(atom);
        self.organic.push(organic);
        self.stereo.push(Vec::new());
        if let Some(prev) = self.prev {
            let sym = self.pending.take().map(|(s, _)| s);
            let order = match sym {
                Some(s) => s.order(),
                None if aromatic && self.atoms[prev].aromatic => BondOrder::Aromatic,
                None => BondOrder::Single,
            };
            self.push_bond(prev, idx, order)?;
            self.stereo[prev].push(StereoRef::Atom(idx));
            self.stereo[idx].push(StereoRef::Atom(prev));
        } else if self.pending.is_some() {
            return self.err(SmilesErrorKind::DanglingBond);
        }
        if chiral && bracket_h > 0 {
            self.stereo[idx].push(StereoRef::ImplicitH);
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn push_bond(&mut self, a: usize, b: usize, order: BondOrder) -> Result<(), SmilesError> {
        if a == b {
            return self.err(SmilesErrorKind::SelfBond);
        }
        if self
            .bonds
            .iter()
            .any(|x| (x.begin == a && x.end == b) || (x.begin == b && x.end == a))
        {
            return self.err(SmilesErrorKind::DuplicateBond(a.min(b), a.max(b)));
        }
        self.bonds.push(Bond {
            begin: a,
            end: b,
            order,
        });
        Ok(())
    }

    fn ring_closure(&mut self) -> Result<(), SmilesError> {
        let start = self.pos;
        let digit = if self.peek() == Some(b'%') {
            let d = self.src.get(self.pos + 1..self.pos + 3);
            match d {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    ((d[0] - b'0') * 10 + (d[1] - b'0')) as u32
                }
                _ => return self.err(SmilesErrorKind::UnexpectedChar('%')),
            }
        } else {
            let d = (self.src[self.pos] - b'0') as u32;
            self.pos += 1;
            d
        };
        let Some(atom) = self.prev else {
            return Err(SmilesError::new(start, SmilesErrorKind::UnexpectedChar('0')));
        };
        let bond = self.pending.take().map(|(s, _)| s);
        match self.rings.remove(&digit) {
            Some(open) => {
                let sym = match (open.bond, bond) {
                    (Some(x), Some(y)) if x != y => {
                        return Err(SmilesError::new(
                            start,
                            SmilesErrorKind::RingBondConflict(digit),
                        ))
                    }
                    (x, y) => x.or(y),
                };
                let order = match sym {
                    Some(s) => s.order(),
                    None if self.atoms[atom].aromatic && self.atoms[open.atom].aromatic => {
                        BondOrder::Aromatic
                    }
                    None => BondOrder::Single,
                };
                self.push_bond(open.atom, atom, order)?;
                self.stereo[open.atom][open.slot] = StereoRef::Atom(atom);
                self.stereo[atom].push(StereoRef::Atom(open.atom));
            }
            None => {
                let slot = self.stereo[atom].len();
                // Placeholder, replaced when the ring closes.
                self.stereo[atom].push(StereoRef::ImplicitH);
                self.rings.insert(
                    digit,
                    OpenRing {
                        atom,
                        bond,
                        slot,
                        position: start,
                    },
                );
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let c = self.src[self.pos];
        let next = self.src.get(self.pos + 1).copied();
        let (z, aromatic, len) = match (c, next) {
            (b'C', Some(b'l')) => (element::CHLORINE, false, 2),
            (b'B', Some(b'r')) => (element::BROMINE, false, 2),
            (b'B', _) => (element::BORON, false, 1),
            (b'C', _) => (element::CARBON, false, 1),
            (b'N', _) => (element::NITROGEN, false, 1),
            (b'O', _) => (element::OXYGEN, false, 1),
            (b'P', _) => (element::PHOSPHORUS, false, 1),
            (b'S', _) => (element::SULFUR, false, 1),
            (b'F', _) => (element::FLUORINE, false, 1),
            (b'I', _) => (element::IODINE, false, 1),
            (b'b', _) => (element::BORON, true, 1),
            (b'c', _) => (element::CARBON, true, 1),
            (b'n', _) => (element::NITROGEN, true, 1),
            (b'o', _) => (element::OXYGEN, true, 1),
            (b'p', _) => (element::PHOSPHORUS, true, 1),
            (b's', _) => (element::SULFUR, true, 1),
            _ => {
                let mut sym = String::new();
                sym.push(c as char);
                if let Some(n) = next.filter(u8::is_ascii_lowercase) {
                    sym.push(n as char);
                }
                return self.err(SmilesErrorKind::UnknownElement(sym));
            }
        };
        self.pos += len;
        let mut atom = Atom::new(z);
        atom.aromatic = aromatic;
        Ok(atom)
    }

    /// Returns the atom and its bracket hydrogen count.
    fn bracket_atom(&mut self) -> Result<(Atom, u8), SmilesError> {
        let open = self.pos;
        self.pos += 1;
        let isotope = self.number();
        let (z, aromatic) = self.bracket_symbol()?;
        let mut atom = Atom::new(z);
        atom.aromatic = aromatic;
        atom.isotope = isotope.map(|v| v as u16);

        if self.peek() == Some(b'@') {
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
                atom.chirality = Chirality::Clockwise;
            } else if self.src[self.pos..].starts_with(b"TH1") {
                self.pos += 3;
                atom.chirality = Chirality::CounterClockwise;
            } else if self.src[self.pos..].starts_with(b"TH2") {
                self.pos += 3;
                atom.chirality = Chirality::Clockwise;
            } else if self.peek().is_some_and(|c| c.is_ascii_uppercase() && c != b'H') {
                return self.err(SmilesErrorKind::UnexpectedChar('@'));
            } else {
                atom.chirality = Chirality::CounterClockwise;
            }
        }

        let mut h = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            h = self.number().unwrap_or(1) as u8;
        }

        match self.peek() {
            Some(sign @ (b'+' | b'-')) => {
                self.pos += 1;
                let unit: i8 = if sign == b'+' { 1 } else { -1 };
                let mut charge = unit;
                if let Some(n) = self.number() {
                    charge = unit * n as i8;
                } else {
                    while self.peek() == Some(sign) {
                        self.pos += 1;
                        charge += unit;
                    }
                }
                atom.formal_charge = charge;
            }
            _ => {}
        }

        if self.peek() == Some(b':') {
            self.pos += 1;
            if self.number().is_none() {
                return self.err(SmilesErrorKind::UnexpectedChar(':'));
            }
        }

        match self.peek() {
            Some(b']') => self.pos += 1,
            Some(c) if c != b'[' => return self.err(SmilesErrorKind::UnexpectedChar(c as char)),
            _ => return Err(SmilesError::new(open, SmilesErrorKind::UnclosedBracket)),
        }
        atom.hydrogens = h;
        Ok((atom, h))
    }

    fn bracket_symbol(&mut self) -> Result<(u8, bool), SmilesError> {
        let Some(c) = self.peek() else {
            return self.err(SmilesErrorKind::UnclosedBracket);
        };
        if c == b'*' {
            return self.err(SmilesErrorKind::Wildcard);
        }
        if c.is_ascii_lowercase() {
            for (sym, z) in [("se", element::SELENIUM), ("as", element::ARSENIC)] {
                if self.src[self.pos..].starts_with(sym.as_bytes()) {
                    self.pos += 2;
                    return Ok((z, true));
                }
            }
            let upper = (c as char).to_ascii_uppercase().to_string();
            let z = atomic_number(&upper)
                .filter(|&z| element::can_be_aromatic(z))
                .ok_or_else(|| {
                    SmilesError::new(self.pos, SmilesErrorKind::UnknownElement((c as char).to_string()))
                })?;
            self.pos += 1;
            return Ok((z, true));
        }
        if !c.is_ascii_uppercase() {
            return self.err(SmilesErrorKind::UnexpectedChar(c as char));
        }
        if let Some(n) = self.src.get(self.pos + 1).filter(|n| n.is_ascii_lowercase()) {
            let two: String = [c as char, *n as char].iter().collect();
            if let Some(z) = atomic_number(&two) {
                self.pos += 2;
                return Ok((z, false));
            }
        }
        let one = (c as char).to_string();
        match atomic_number(&one) {
            Some(z) => {
                self.pos += 1;
                Ok((z, false))
            }
            None => self.err(SmilesErrorKind::UnknownElement(one)),
        }
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_atom() {
        let g = parse_smiles("C").unwrap();
        assert_eq!(g.atom_count(), 1);
        assert_eq!(g.bond_count(), 0);
        assert_eq!(g.atoms[0].element, 6);
        assert_eq!(g.atoms[0].hydrogens, 4);
    }

    #[test]
    fn linear_chain() {
        let g = parse_smiles("CCO").unwrap();
        assert_eq!(g.atom_count(), 3);
        assert_eq!(g.bond_count(), 2);
        assert!(g.bonds.iter().all(|b| b.order == BondOrder::Single));
        assert_eq!(g.atoms[2].hydrogens, 1);
    }

    #[test]
    fn benzene_ring_closure() {
        let g = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(g.atom_count(), 6);
        assert_eq!(g.bond_count(), 6);
        assert!(g.atoms.iter().all(|a| a.aromatic && a.in_ring && a.hydrogens == 1));
        assert!(g.bonds.iter().all(|b| b.order == BondOrder::Aromatic));
        assert_eq!(g.ring_count(), 1);
    }

    #[test]
    fn unmatched_ring_bond() {
        let e = parse_smiles("C1CC").unwrap_err();
        assert_eq!(e.kind, SmilesErrorKind::UnmatchedRingBond(1));
    }

    #[test]
    fn unbalanced_parentheses() {
        assert_eq!(
            parse_smiles("CC(C").unwrap_err().kind,
            SmilesErrorKind::UnbalancedParenthesis
        );
        assert_eq!(
            parse_smiles("CC)C").unwrap_err().kind,
            SmilesErrorKind::UnbalancedParenthesis
        );
    }

    #[test]
    fn unknown_element() {
        assert!(matches!(
            parse_smiles("CXC").unwrap_err().kind,
            SmilesErrorKind::UnknownElement(_)
        ));
        assert!(matches!(
            parse_smiles("C[Xy]").unwrap_err().kind,
            SmilesErrorKind::UnknownElement(_)
        ));
    }

    #[test]
    fn valence_violation() {
        let e = parse_smiles("C(C)(C)(C)(C)C").unwrap_err();
        assert!(e.is_valence());
        assert!(parse_smiles_unsanitized("C(C)(C)(C)(C)C").is_ok());
    }

    #[test]
    fn rejects_reactions_and_wildcards() {
        assert_eq!(parse_smiles("CC>>CC").unwrap_err().kind, SmilesErrorKind::Reaction);
        assert_eq!(parse_smiles("C*").unwrap_err().kind, SmilesErrorKind::Wildcard);
        assert_eq!(parse_smiles("C[*]").unwrap_err().kind, SmilesErrorKind::Wildcard);
    }

    #[test]
    fn bracket_atoms() {
        let g = parse_smiles("[13CH3][NH3+].[O-]C(=O)C").unwrap();
        assert_eq!(g.atoms[0].isotope, Some(13));
        assert_eq!(g.atoms[0].hydrogens, 3);
        assert_eq!(g.atoms[1].formal_charge, 1);
        assert_eq!(g.atoms[1].hydrogens, 3);
        assert_eq!(g.atoms[2].formal_charge, -1);
        assert_eq!(g.components().len(), 2);
    }

    #[test]
    fn two_digit_ring_closure_and_bond_symbols() {
        let g = parse_smiles("C%10CCCCC%10").unwrap();
        assert_eq!(g.ring_count(), 1);
        let g = parse_smiles("C=CC#N").unwrap();
        assert_eq!(g.bonds[0].order, BondOrder::Double);
        assert_eq!(g.bonds[2].order, BondOrder::Triple);
        assert_eq!(g.atoms[3].hydrogens, 0);
    }

    #[test]
    fn chirality_records_neighbour_order() {
        let g = parse_smiles("N[C@@H](C)C(=O)O").unwrap();
        assert_eq!(g.atoms[1].chirality, Chirality::Clockwise);
        assert_eq!(
            g.stereo[1],
            vec![
                StereoRef::Atom(0),
                StereoRef::ImplicitH,
                StereoRef::Atom(2),
                StereoRef::Atom(3)
            ]
        );
        let g = parse_smiles("C[C@]1(F)CCO1").unwrap();
        assert_eq!(
            g.stereo[1],
            vec![
                StereoRef::Atom(0),
                StereoRef::Atom(5),
                StereoRef::Atom(2),
                StereoRef::Atom(3)
            ]
        );
    }

    #[test]
    fn aromatic_heterocycles() {
        let g = parse_smiles("c1ccncc1").unwrap();
        assert_eq!(g.atoms[3].hydrogens, 0);
        let g = parse_smiles("c1cc[nH]c1").unwrap();
        assert_eq!(g.atoms[3].hydrogens, 1);
        let g = parse_smiles("c1ccoc1").unwrap();
        assert_eq!(g.atoms[3].hydrogens, 0);
        let g = parse_smiles("c1ccsc1").unwrap();
        assert_eq!(g.atoms[3].hydrogens, 0);
    }

    #[test]
    fn biphenyl_link_is_single() {
        let g = parse_smiles("c1ccccc1c1ccccc1").unwrap();
        let link = g.bond_between(5, 6).unwrap();
        assert_eq!(link.order, BondOrder::Single);
    }

    #[test]
    fn invalid_aromatic_systems() {
        assert!(matches!(
            parse_smiles("c1cccc1").unwrap_err().kind,
            SmilesErrorKind::Aromaticity(_)
        ));
        assert!(matches!(
            parse_smiles("cC").unwrap_err().kind,
            SmilesErrorKind::AromaticOutsideRing(0)
        ));
    }
}
