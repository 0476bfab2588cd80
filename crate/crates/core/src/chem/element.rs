//! Periodic table lookups used by the SMILES parser and sanitiser.

const SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

pub const HYDROGEN: u8 = 1;
pub const BORON: u8 = 5;
pub const CARBON: u8 = 6;
pub const NITROGEN: u8 = 7;
pub const OXYGEN: u8 = 8;
pub const FLUORINE: u8 = 9;
pub const PHOSPHORUS: u8 = 15;
pub const SULFUR: u8 = 16;
pub const CHLORINE: u8 = 17;
pub const ARSENIC: u8 = 33;
pub const SELENIUM: u8 = 34;
pub const BROMINE: u8 = 35;
pub const IODINE: u8 = 53;

/// Atomic number for an element symbol (case-sensitive, e.g. `"Cl"`).
pub fn atomic_number(symbol: &str) -> Option<u8> {
    SYMBOLS
        .iter()
        .position(|&s| s == symbol)
        .map(|i| (i + 1) as u8)
}

pub fn symbol(atomic_number: u8) -> &'static str {
    SYMBOLS[(atomic_number as usize).saturating_sub(1).min(117)]
}

/// Elements that may be written without brackets.
pub fn is_organic_subset(z: u8) -> bool {
    matches!(
        z,
        BORON | CARBON | NITROGEN | OXYGEN | PHOSPHORUS | SULFUR | FLUORINE | CHLORINE | BROMINE
            | IODINE
    )
}

/// Elements that may carry a lowercase (aromatic) symbol.
pub fn can_be_aromatic(z: u8) -> bool {
    matches!(
        z,
        BORON | CARBON | NITROGEN | OXYGEN | PHOSPHORUS | SULFUR | ARSENIC | SELENIUM
    )
}

pub fn is_halogen(z: u8) -> bool {
    matches!(z, FLUORINE | CHLORINE | BROMINE | IODINE)
}

/// Everything except hydrogen, the p-block non-metals, metalloids and noble gases.
pub fn is_metal(z: u8) -> bool {
    !matches!(
        z,
        1 | 2 | 5..=10 | 14..=18 | 32..=36 | 51..=54 | 85 | 86 | 117 | 118
    )
}

/// Standard valences, ascending. Empty for elements without a fixed valence model.
fn neutral_valences(z: u8) -> &'static [u8] {
    match z {
        1 => &[1],
        5 => &[3],
        6 => &[4],
        7 => &[3],
        8 => &[2],
        9 | 17 | 35 | 53 => &[1],
        14 => &[4],
        15 => &[3, 5],
        16 => &[2, 4, 6],
        33 => &[3, 5],
        34 => &[2, 4, 6],
        _ => &[],
    }
}

/// Allowed valences of a charged atom, taken from its isoelectronic neighbour
/// (N+ behaves as C, O- as F, C- as N, ...). Returns an empty slice when no
/// valence model applies, in which case no valence check is performed.
pub fn allowed_valences(z: u8, charge: i8) -> &'static [u8] {
    if neutral_valences(z).is_empty() {
        return &[];
    }
    let shifted = z as i16 - charge as i16;
    if !(1..=118).contains(&shifted) {
        return &[];
    }
    let shifted = shifted as u8;
    // Charge must not move the atom into another period.
    if period(shifted) != period(z) {
        return &[];
    }
    neutral_valences(shifted)
}

fn period(z: u8) -> u8 {
    match z {
        1..=2 => 1,
        3..=10 => 2,
        11..=18 => 3,
        19..=36 => 4,
        37..=54 => 5,
        55..=86 => 6,
        _ => 7,
    }
}
