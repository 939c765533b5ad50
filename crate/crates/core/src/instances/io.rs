use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Mdp;

/// On-disk MDP document: `kernel[s][a][s']`, `rewards[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub n: usize,
    pub a: usize,
    pub lambda: f64,
    pub p0: Vec<f64>,
    pub rewards: Vec<Vec<f64>>,
    pub kernel: Vec<Vec<Vec<f64>>>,
}

impl From<&Mdp> for MdpFile {
    fn from(mdp: &Mdp) -> Self {
        let (n, a) = (mdp.n(), mdp.a());
        Self {
            n,
            a,
            lambda: mdp.lambda(),
            p0: mdp.p0().to_vec(),
            rewards: mdp.rewards().chunks(a).map(<[f64]>::to_vec).collect(),
            kernel: (0..n)
                .map(|s| (0..a).map(|act| mdp.row(s, act).to_vec()).collect())
                .collect(),
        }
    }
}

impl TryFrom<MdpFile> for Mdp {
    type Error = Error;

    fn try_from(f: MdpFile) -> Result<Mdp> {
        if f.kernel.len() != f.n {
            return Err(Error::DimensionMismatch {
                what: "kernel states",
                expected: f.n,
                got: f.kernel.len(),
            });
        }
        if let Some(row) = f.kernel.first() {
            if row.len() != f.a {
                return Err(Error::DimensionMismatch {
                    what: "kernel actions",
                    expected: f.a,
                    got: row.len(),
                });
            }
        }
        Mdp::from_nested(&f.kernel, &f.rewards, f.p0, f.lambda)
    }
}

pub fn mdp_to_json(mdp: &Mdp) -> Result<String> {
    Ok(serde_json::to_string_pretty(&MdpFile::from(mdp))?)
}

pub fn mdp_from_json(text: &str) -> Result<Mdp> {
    let file: MdpFile = serde_json::from_str(text)?;
    Mdp::try_from(file)
}

pub fn save_mdp(mdp: &Mdp, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, mdp_to_json(mdp)?)?;
    Ok(())
}

/// Reads and validates an MDP document.
pub fn load_mdp(path: impl AsRef<Path>) -> Result<Mdp> {
    mdp_from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{gen_named, GenKind, GenSpec};

    fn m2() -> Mdp {
        gen_named(&GenSpec::new(GenKind::TwoState, 2, 2, 0.5, 0)).unwrap()
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m2.json");
        save_mdp(&m2(), &path).unwrap();
        assert_eq!(load_mdp(&path).unwrap(), m2());
    }

    #[test]
    fn bad_row_sum_names_the_pair() {
        let text = r#"{"n":1,"a":2,"lambda":0.5,"p0":[1.0],
            "rewards":[[0.0,1.0]],"kernel":[[[1.0],[0.9]]]}"#;
        match mdp_from_json(text) {
            Err(Error::KernelRow { state, action, .. }) => assert_eq!((state, action), (0, 1)),
            other => panic!("expected a kernel row error, got {other:?}"),
        }
    }

    #[test]
    fn lambda_one_is_rejected() {
        let text = r#"{"n":1,"a":1,"lambda":1.0,"p0":[1.0],"rewards":[[1.0]],"kernel":[[[1.0]]]}"#;
        assert!(matches!(mdp_from_json(text), Err(Error::Discount(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"n":1,"a":1,"lambda":0.5,"p0":[1.0],"rewards":[[1.0]],
            "kernel":[[[1.0]]],"gamma":0.3}"#;
        assert!(matches!(mdp_from_json(text), Err(Error::Parse(_))));
    }

    #[test]
    fn declared_sizes_must_match() {
        let text = r#"{"n":2,"a":1,"lambda":0.5,"p0":[1.0],"rewards":[[1.0]],"kernel":[[[1.0]]]}"#;
        assert!(mdp_from_json(text).is_err());
    }
}
