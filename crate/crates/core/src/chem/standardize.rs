use serde::{Deserialize, Serialize};

use super::element::{self, is_metal};
use super::perceive;
use super::{parse_smiles_unsanitized, MolecularGraph};

pub const STEP_SANITIZE: &str = "sanitize";
pub const STEP_CLEANUP: &str = "cleanup";
pub const STEP_FRAGMENT: &str = "fragment_parent";
pub const STEP_UNCHARGE: &str = "uncharge";
pub const STEP_TAUTOMER_SKIPPED: &str = "tautomer_skipped";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizationReport {
    pub input_smiles: String,
    pub output: Option<MolecularGraph>,
    pub steps_applied: Vec<String>,
    pub failure_reason: Option<String>,
}

impl StandardizationReport {
    fn failed(input: &str, steps: Vec<String>, reason: String) -> Self {
        StandardizationReport {
            input_smiles: input.to_string(),
            output: None,
            steps_applied: steps,
            failure_reason: Some(reason),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.output.is_some()
    }
}

/// Parse then standardise; parse failures are reported, not returned as errors.
pub fn standardize_smiles(text: &str) -> StandardizationReport {
    match parse_smiles_unsanitized(text) {
        Ok(g) => standardize(&g),
        Err(e) => StandardizationReport::failed(text, Vec::new(), e.to_string()),
    }
}

/// Sanitise, fold explicit hydrogens into counts, drop disconnected metals,
/// keep the largest organic fragment and neutralise acids and bases.
/// Tautomer canonicalisation is not performed (recorded as a skipped step).
pub fn standardize(graph: &MolecularGraph) -> StandardizationReport {
    let input = graph.source_smiles.clone();
    let mut steps = Vec::new();
    if let Err(e) = perceive::sanitize(graph) {
        return StandardizationReport::failed(&input, steps, format!("sanitization failed: {}", e.kind));
    }
    steps.push(STEP_SANITIZE.to_string());

    let g = cleanup(graph);
    steps.push(STEP_CLEANUP.to_string());
    if g.atom_count() == 0 {
        return StandardizationReport::failed(&input, steps, "no atoms left after cleanup".into());
    }

    let g = fragment_parent(&g);
    steps.push(STEP_FRAGMENT.to_string());

    let mut g = g;
    uncharge(&mut g);
    steps.push(STEP_UNCHARGE.to_string());
    steps.push(STEP_TAUTOMER_SKIPPED.to_string());

    if let Err(e) = perceive::sanitize(&g) {
        return StandardizationReport::failed(&input, steps, format!("sanitization failed: {}", e.kind));
    }
    StandardizationReport {
        input_smiles: input,
        output: Some(g),
        steps_applied: steps,
        failure_reason: None,
    }
}

fn cleanup(graph: &MolecularGraph) -> MolecularGraph {
    let mut g = graph.clone();
    let mut removed = vec![false; g.atom_count()];
    for i in 0..g.atom_count() {
        let a = g.atoms[i].clone();
        let is_plain_h = a.element == element::HYDROGEN && a.isotope.is_none() && a.formal_charge == 0;
        if is_plain_h && g.neighbors(i).len() == 1 {
            let heavy = g.neighbors(i)[0].atom;
            if g.atoms[heavy].element != element::HYDROGEN {
                removed[i] = true;
                g.atoms[heavy].hydrogens += 1;
            }
        }
        if is_metal(a.element) && g.neighbors(i).is_empty() {
            removed[i] = true;
        }
    }
    let keep: Vec<usize> = (0..g.atom_count()).filter(|&i| !removed[i]).collect();
    if keep.len() == g.atom_count() {
        return g;
    }
    g.subgraph(&keep)
}

fn fragment_parent(graph: &MolecularGraph) -> MolecularGraph {
    let comps = graph.components();
    if comps.len() <= 1 {
        return graph.clone();
    }
    let score = |comp: &Vec<usize>| {
        let organic = comp.iter().any(|&a| graph.atoms[a].element == element::CARBON);
        let heavy = comp
            .iter()
            .filter(|&&a| graph.atoms[a].element != element::HYDROGEN)
            .count();
        let total: usize = comp.iter().map(|&a| 1 + graph.atoms[a].hydrogens as usize).sum();
        (organic, heavy, total)
    };
    let mut best = 0;
    for i in 1..comps.len() {
        if score(&comps[i]) > score(&comps[best]) {
            best = i;
        }
    }
    graph.subgraph(&comps[best])
}

/// Neutralisation table: protonated amines / ammonium lose a proton; then
/// carboxylates, alkoxides and thiolates gain one, except anions adjacent to a
/// cation (nitro, N-oxides) and as many anions as are needed to balance
/// cations that cannot be deprotonated.
fn uncharge(graph: &mut MolecularGraph) {
    for i in 0..graph.atom_count() {
        let a = &mut graph.atoms[i];
        if a.formal_charge == 1
            && matches!(a.element, element::NITROGEN | element::PHOSPHORUS)
            && a.hydrogens > 0
        {
            a.formal_charge = 0;
            a.hydrogens -= 1;
        }
    }
    let adjacent_charge = |g: &MolecularGraph, i: usize, positive: bool| {
        g.neighbors(i).iter().any(|nb| {
            let c = g.atoms[nb.atom].formal_charge;
            if positive {
                c > 0
            } else {
                c < 0
            }
        })
    };
    let fixed_positive: i32 = (0..graph.atom_count())
        .filter(|&i| graph.atoms[i].formal_charge > 0 && !adjacent_charge(graph, i, false))
        .map(|i| graph.atoms[i].formal_charge as i32)
        .sum();
    let candidates: Vec<usize> = (0..graph.atom_count())
        .filter(|&i| {
            let a = &graph.atoms[i];
            a.formal_charge == -1
                && matches!(a.element, element::OXYGEN | element::SULFUR)
                && !adjacent_charge(graph, i, true)
        })
        .collect();
    let to_neutralise = (candidates.len() as i32 - fixed_positive).max(0) as usize;
    for &i in candidates.iter().take(to_neutralise) {
        graph.atoms[i].formal_charge = 0;
        graph.atoms[i].hydrogens += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn std_of(smi: &str) -> MolecularGraph {
        standardize_smiles(smi).output.unwrap()
    }

    #[test]
    fn salt_is_stripped_and_neutralised() {
        let out = std_of("[Na+].CC(=O)[O-]");
        assert!(out.same_structure(&parse_smiles("CC(=O)O").unwrap()));
        let report = standardize_smiles("[Na+].CC(=O)[O-]");
        assert_eq!(
            report.steps_applied,
            vec![STEP_SANITIZE, STEP_CLEANUP, STEP_FRAGMENT, STEP_UNCHARGE, STEP_TAUTOMER_SKIPPED]
        );
    }

    #[test]
    fn methane_unchanged() {
        let out = std_of("C");
        assert!(out.same_structure(&parse_smiles("C").unwrap()));
    }

    #[test]
    fn pentavalent_carbon_fails() {
        let r = standardize_smiles("C(C)(C)(C)(C)C");
        assert!(r.output.is_none());
        assert!(r.failure_reason.unwrap().contains("valence"));
    }

    #[test]
    fn explicit_hydrogens_become_counts() {
        let out = std_of("[H]OC([H])([H])[H]");
        assert_eq!(out.atom_count(), 2);
        assert!(out.same_structure(&parse_smiles("OC").unwrap()));
    }

    #[test]
    fn ammonium_and_nitro() {
        assert!(std_of("CC[NH3+]").same_structure(&parse_smiles("CCN").unwrap()));
        let nitro = std_of("C[N+](=O)[O-]");
        assert_eq!(nitro.atoms[1].formal_charge, 1);
        assert_eq!(nitro.atoms[3].formal_charge, -1);
        // Quaternary ammonium keeps its carboxylate counter-charge.
        let zw = std_of("C[N+](C)(C)CC(=O)[O-]");
        assert_eq!(zw.atoms.iter().map(|a| a.formal_charge as i32).sum::<i32>(), 0);
    }

    #[test]
    fn largest_organic_fragment_wins() {
        let out = std_of("OCCO.Cl");
        assert_eq!(out.atom_count(), 4);
        let out = std_of("O.O.CC");
        assert!(out.same_structure(&parse_smiles("CC").unwrap()));
    }

    #[test]
    fn idempotent_on_examples() {
        for smi in ["[Na+].CC(=O)[O-]", "C[N+](C)(C)CC(=O)[O-]", "c1ccccc1O", "[K+].[O-]c1ccccc1"] {
            let once = std_of(smi);
            let twice = standardize(&once).output.unwrap();
            assert!(once.same_structure(&twice), "{smi}");
        }
    }
}
