//! Bundled example systems exercised by the integration tests and the
//! `corpus` CLI subcommand.
//!
//! Each entry is a system file compiled into the binary. Running the
//! corpus parses every file and, for each named current, verifies
//! conservation, extracts and verifies the characteristic, and checks
//! that the characteristic is a cosymmetry. Entries marked
//! `expect_error` are deliberately inconsistent coverings: for those the
//! build must fail with an incompatible-fluxes error, and the recorded
//! residual becomes the case detail.

use crate::conslaw::{cosymmetry_test, extract_characteristic, verify_conserved_vector};
use crate::error::Error;
use crate::error::Result;
use crate::parse::{parse_system_file, print_expr, SystemFile};

pub struct CorpusEntry {
    pub id: &'static str,
    pub source: &'static str,
    /// Building the file must fail with `Error::IncompatibleFluxes`.
    pub expect_error: bool,
}

pub const ENTRIES: &[CorpusEntry] = &[
    CorpusEntry {
        id: "dc-conv",
        source: include_str!("../corpus/dc-conv.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "dc-diff",
        source: include_str!("../corpus/dc-diff.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "dc-diffconv-eq",
        source: include_str!("../corpus/dc-diffconv-eq.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "heat",
        source: include_str!("../corpus/heat.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "heat3d",
        source: include_str!("../corpus/heat3d.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "pot-diff",
        source: include_str!("../corpus/pot-diff.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "pot-diff-x",
        source: include_str!("../corpus/pot-diff-x.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "pot-diffconv-eq",
        source: include_str!("../corpus/pot-diffconv-eq.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "pot-diffconv-eps",
        source: include_str!("../corpus/pot-diffconv-eps.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "tower-diff",
        source: include_str!("../corpus/tower-diff.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "tower-diffconv-eq",
        source: include_str!("../corpus/tower-diffconv-eq.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "pot-intconv",
        source: include_str!("../corpus/pot-intconv.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "pot-fastdiff",
        source: include_str!("../corpus/pot-fastdiff.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "pot-fastdiff-conv",
        source: include_str!("../corpus/pot-fastdiff-conv.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "pot-burgers",
        source: include_str!("../corpus/pot-burgers.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "cover-burgers",
        source: include_str!("../corpus/cover-burgers.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "cover-burgers-free",
        source: include_str!("../corpus/cover-burgers-free.sys"),
        expect_error: true,
    },
    CorpusEntry {
        id: "heat-linp",
        source: include_str!("../corpus/heat-linp.sys"),
        expect_error: false,
    },
    CorpusEntry {
        id: "incompat-abelian",
        source: include_str!("../corpus/incompat-abelian.sys"),
        expect_error: true,
    },
    CorpusEntry {
        id: "incompat-cover",
        source: include_str!("../corpus/incompat-cover.sys"),
        expect_error: true,
    },
];

pub fn entry(id: &str) -> Option<&'static CorpusEntry> {
    ENTRIES.iter().find(|e| e.id == id)
}

/// Parses a bundled entry by id. Fails for unknown ids and for the
/// deliberately inconsistent entries.
pub fn load(id: &str) -> Result<SystemFile> {
    let e = entry(id).ok_or_else(|| Error::Invalid(format!("no corpus entry named `{id}`")))?;
    parse_system_file(e.source)
}

pub struct CaseResult {
    pub id: String,
    pub passed: bool,
    pub detail: String,
}

pub struct CorpusReport {
    pub cases: Vec<CaseResult>,
}

impl CorpusReport {
    pub fn all_passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }
}

fn check_entry(e: &CorpusEntry) -> Result<String> {
    let file = parse_system_file(e.source)?;
    let sys = file.working();
    let mut verified = 0usize;
    for (name, f) in &file.cvs {
        verify_conserved_vector(sys, f)
            .map_err(|err| Error::Invalid(format!("current `{name}`: {err}")))?;
        let (chi, _) = extract_characteristic(sys, f)
            .map_err(|err| Error::Invalid(format!("current `{name}`: {err}")))?;
        if !cosymmetry_test(sys, &chi)? {
            return Err(Error::Invalid(format!(
                "current `{name}`: characteristic fails the cosymmetry test"
            )));
        }
        verified += 1;
    }
    let pots = file
        .structure
        .as_ref()
        .map(|st| st.pot_deps.len())
        .unwrap_or(0);
    let chi0 = file.cvs.first().map(|(name, f)| {
        let (chi, _) = extract_characteristic(sys, f).expect("verified above");
        let parts: Vec<String> = chi
            .components
            .iter()
            .map(|c| print_expr(sys.sess(), c))
            .collect();
        format!("; char({name}) = ({})", parts.join(", "))
    });
    Ok(format!(
        "{verified} currents verified, {pots} potentials{}",
        chi0.unwrap_or_default()
    ))
}

pub fn run_corpus(filter: Option<&str>) -> CorpusReport {
    let mut cases = Vec::new();
    for e in ENTRIES {
        if let Some(pat) = filter {
            if !e.id.contains(pat) {
                continue;
            }
        }
        let case = if e.expect_error {
            match parse_system_file(e.source) {
                Err(Error::IncompatibleFluxes(detail)) => CaseResult {
                    id: e.id.to_string(),
                    passed: true,
                    detail: format!("rejected as expected; residual {detail}"),
                },
                Err(other) => CaseResult {
                    id: e.id.to_string(),
                    passed: false,
                    detail: format!("wrong error: {other}"),
                },
                Ok(_) => CaseResult {
                    id: e.id.to_string(),
                    passed: false,
                    detail: "built successfully but should have been rejected".into(),
                },
            }
        } else {
            match check_entry(e) {
                Ok(detail) => CaseResult {
                    id: e.id.to_string(),
                    passed: true,
                    detail,
                },
                Err(err) => CaseResult {
                    id: e.id.to_string(),
                    passed: false,
                    detail: err.to_string(),
                },
            }
        };
        cases.push(case);
    }
    CorpusReport { cases }
}
