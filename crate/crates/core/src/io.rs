//! JSON documents for plants and responses. Matrices are row-major nested
//! arrays.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlsError};
use crate::linalg::DenseMatrix;
use crate::model::{Dims, Plant, SystemResponse};
use crate::objectives::{H2Weights, LQWeights, Objective};

type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &DenseMatrix) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &Rows, nrows: usize, ncols: usize, name: &str) -> Result<DenseMatrix> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(SlsError::dim(format!(
            "{name} must be {nrows}x{ncols} in row-major nested arrays"
        )));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlantDoc {
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Rows>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Rows>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Rows>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Rows>,
}

impl PlantDoc {
    pub fn from_plant(plant: &Plant) -> Self {
        let (a, b, c) = (plant.a().to_owned(), plant.b().to_owned(), plant.c().to_owned());
        Self {
            nx: plant.nx(),
            nu: plant.nu(),
            ny: plant.ny(),
            a: to_rows(&a),
            b: to_rows(&b),
            c: to_rows(&c),
            f: None,
            g: None,
            q: None,
            r: None,
        }
    }

    pub fn plant(&self) -> Result<Plant> {
        let a = from_rows(&self.a, self.nx, self.nx, "A")?;
        let b = from_rows(&self.b, self.nx, self.nu, "B")?;
        let c = from_rows(&self.c, self.ny, self.nx, "C")?;
        Plant::new(a, b, c)
    }

    /// H2 weights from `F`/`G`, or the defaults when both are absent.
    pub fn h2_weights(&self, dims: Dims) -> Result<H2Weights> {
        match (&self.f, &self.g) {
            (None, None) => Ok(H2Weights::identity(dims)),
            (Some(f), Some(g)) => {
                let rows = f.len();
                let f = from_rows(f, rows, dims.state_len(), "F")?;
                let g = from_rows(g, rows, dims.input_len(), "G")?;
                H2Weights::new(f, g, dims)
            }
            _ => Err(SlsError::Domain("F and G must be given together".into())),
        }
    }

    /// LQ weights from `Q`/`R`, each defaulting to the identity.
    pub fn lq_weights(&self, dims: Dims) -> Result<LQWeights> {
        let (n, m) = (dims.state_len(), dims.input_len());
        let q = match &self.q {
            Some(q) => from_rows(q, n, n, "Q")?,
            None => Mat::identity(n, n),
        };
        let r = match &self.r {
            Some(r) => from_rows(r, m, m, "R")?,
            None => Mat::identity(m, m),
        };
        LQWeights::new(q, r, dims)
    }

    pub fn objective(&self, name: &str) -> Result<Objective> {
        let dims = self.plant()?.dims();
        match name {
            "h2" => Ok(Objective::H2(self.h2_weights(dims)?)),
            "lq" => Ok(Objective::Lq(self.lq_weights(dims)?)),
            other => Err(SlsError::Domain(format!("unknown objective {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResponseDoc {
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub phi_xx: Vec<Rows>,
    pub phi_xy: Vec<Rows>,
    pub phi_ux: Vec<Rows>,
    pub phi_uy: Vec<Rows>,
}

impl ResponseDoc {
    pub fn from_response(dims: Dims, resp: &SystemResponse) -> Self {
        let conv = |ms: &[DenseMatrix]| ms.iter().map(to_rows).collect();
        Self {
            nx: dims.nx,
            nu: dims.nu,
            ny: dims.ny,
            horizon: resp.horizon(),
            phi_xx: conv(&resp.phi_xx),
            phi_xy: conv(&resp.phi_xy),
            phi_ux: conv(&resp.phi_ux),
            phi_uy: conv(&resp.phi_uy),
        }
    }

    pub fn response(&self) -> Result<SystemResponse> {
        let n = self.horizon + 1;
        let conv = |name: &str, ms: &[Rows], r: usize, c: usize| -> Result<Vec<DenseMatrix>> {
            if ms.len() != n {
                return Err(SlsError::dim(format!(
                    "{name} must hold {n} matrices, got {}",
                    ms.len()
                )));
            }
            ms.iter()
                .enumerate()
                .map(|(tau, m)| from_rows(m, r, c, &format!("{name}[{tau}]")))
                .collect()
        };
        let (nx, nu, ny) = (self.nx, self.nu, self.ny);
        Ok(SystemResponse {
            phi_xx: conv("phi_xx", &self.phi_xx, nx, nx)?,
            phi_xy: conv("phi_xy", &self.phi_xy, nx, ny)?,
            phi_ux: conv("phi_ux", &self.phi_ux, nu, nx)?,
            phi_uy: conv("phi_uy", &self.phi_uy, nu, ny)?,
        })
    }
}

pub fn plant_to_json(plant: &Plant) -> Result<String> {
    Ok(serde_json::to_string_pretty(&PlantDoc::from_plant(plant))?)
}

pub fn plant_doc_from_json(text: &str) -> Result<PlantDoc> {
    Ok(serde_json::from_str(text)?)
}

pub fn response_to_json(dims: Dims, resp: &SystemResponse) -> Result<String> {
    Ok(serde_json::to_string(&ResponseDoc::from_response(dims, resp))?)
}

pub fn response_from_json(text: &str) -> Result<SystemResponse> {
    let doc: ResponseDoc = serde_json::from_str(text)?;
    doc.response()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::stochastic_chain;

    #[test]
    fn plant_roundtrip() {
        let plant = stochastic_chain(4, 2, 3, 0.2).unwrap();
        let text = plant_to_json(&plant).unwrap();
        let back = plant_doc_from_json(&text).unwrap().plant().unwrap();
        assert_eq!(back.a(), plant.a());
        assert_eq!(back.b(), plant.b());
        assert_eq!(back.c(), plant.c());
    }

    #[test]
    fn response_roundtrip_is_exact() {
        let dims = Dims { nx: 2, nu: 1, ny: 1 };
        let mut resp = SystemResponse::zeros(dims, 3);
        resp.phi_xx[1] = Mat::from_fn(2, 2, |i, j| 0.1 + (i as f64) / 3.0 - (j as f64) * 1e-17);
        resp.phi_uy[0][(0, 0)] = std::f64::consts::PI;
        let text = response_to_json(dims, &resp).unwrap();
        assert_eq!(response_from_json(&text).unwrap(), resp);
    }

    #[test]
    fn malformed_documents_are_rejected() {
        let bad = r#"{"nx":2,"nu":1,"ny":1,"A":[[1,0]],"B":[[1],[0]],"C":[[1,0]]}"#;
        assert!(plant_doc_from_json(bad).unwrap().plant().is_err());
        assert!(matches!(plant_doc_from_json("{"), Err(SlsError::Json(_))));
        let half = r#"{"nx":1,"nu":1,"ny":1,"A":[[1]],"B":[[1]],"C":[[1]],"F":[[1,0,0]]}"#;
        let doc = plant_doc_from_json(half).unwrap();
        assert!(doc.objective("h2").is_err());
        assert!(doc.objective("lq").is_ok());
        assert!(doc.objective("hinf").is_err());
    }
}
