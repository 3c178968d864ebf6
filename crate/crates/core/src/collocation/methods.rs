//! Reference method classification.
//!
//! | code | instrument                         | light scattering |
//! |------|------------------------------------|------------------|
//! | 195  | GRIMM EDM 180                      | yes              |
//! | 236  | Teledyne T640                      | yes              |
//! | 238  | Teledyne T640X                     | yes              |
//! | 170  | Met One BAM-1020                   | no               |
//! | 181  | Thermo TEOM 1400 FDMS              | no               |
//! | 182  | Thermo TEOM 1405-DF FDMS           | no               |
//! | 183  | Thermo 5014i beta attenuation      | no               |
//! | 184  | Thermo SHARP 5030                  | no               |
//! | 209  | Met One BAM-1022                   | no               |
//!
//! Unlisted codes are treated as non-light-scattering unless the code string
//! itself names an optical instrument (e.g. `"T640"`, `"GRIMM"`).

const LIGHT_SCATTERING_CODES: [&str; 3] = ["195", "236", "238"];
const LIGHT_SCATTERING_KEYWORDS: [&str; 5] = ["t640", "grimm", "edm 180", "light scatter", "optical"];

pub fn is_light_scattering(method_code: &str) -> bool {
    let code = method_code.trim();
    if LIGHT_SCATTERING_CODES.contains(&code) {
        return true;
    }
    let lower = code.to_ascii_lowercase();
    LIGHT_SCATTERING_KEYWORDS.iter().any(|k| lower.contains(k))
}
