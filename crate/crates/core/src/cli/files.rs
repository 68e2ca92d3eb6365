//! JSON file formats read and written by the command-line front end.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// `{"rows": R, "cols": C, "data": [[re, im], …]}`, row-major. States are
/// stored with `cols = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixFile {
    pub fn from_array(m: &Array2<C64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn from_column(v: &[C64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn to_array(&self) -> Result<Array2<C64>, String> {
        if self.data.len() != self.rows * self.cols {
            return Err(format!(
                "data has {} entries, expected rows·cols = {}",
                self.data.len(),
                self.rows * self.cols
            ));
        }
        if let Some(i) = self.data.iter().position(|[re, im]| !re.is_finite() || !im.is_finite()) {
            return Err(format!("entry {i} is not finite"));
        }
        let entries = self.data.iter().map(|&[re, im]| C64::new(re, im)).collect();
        Array2::from_shape_vec((self.rows, self.cols), entries).map_err(|e| e.to_string())
    }

    pub fn read(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string(self).map_err(std::io::Error::other)?;
        fs::write(path, text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_start: f64,
    pub t_stop: f64,
    pub nt: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    /// `value` is the constant amplitude.
    Constant,
    /// `value` is a path to a JSON array of `nt` numbers.
    File,
    /// Uniform in `[−value, value]`, drawn from the run's seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub name: String,
    pub initial: InitialKind,
    pub value: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub operator: String,
    pub coupling: Coupling,
    pub control: String,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub initial_state: String,
    #[serde(default)]
    pub target_state: Option<String>,
    #[serde(default = "default_weight")]
    pub weight: f64,
    pub drift: String,
    #[serde(default)]
    pub terms: Vec<TermSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionalName {
    /// Real part of the overlap.
    Re,
    /// Sum of square moduli.
    Ss,
    /// Square modulus of the sum.
    Sm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalFileSpec {
    pub kind: FunctionalName,
    #[serde(default)]
    pub lambda_a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Lbfgs,
    Gd,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerFileSpec {
    #[serde(default)]
    pub method: Option<MethodName>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub memory: Option<usize>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub j_t_tol: Option<f64>,
}

/// Top-level problem document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub grid: GridSpec,
    pub controls: Vec<ControlSpec>,
    pub trajectories: Vec<TrajectorySpec>,
    pub functional: FunctionalFileSpec,
    #[serde(default)]
    pub optimizer: OptimizerFileSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub converged: bool,
    pub reason: String,
    pub iterations: usize,
    #[serde(rename = "final_J_T")]
    pub final_j_t: f64,
    pub final_fidelity: f64,
}
