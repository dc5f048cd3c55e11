//! Quality and rate metrics, plus the RD-curve CSV exchange format
//! (`label,bpp,psnr,msssim`).

mod quality;
mod rd;

use std::path::Path;

pub use quality::{
    gaussian_window, ms_ssim, ms_ssim_db, ms_ssim_scale_count, ms_ssim_weights, ms_ssim_with_scales, mse, psnr,
    psnr_from_mse, ssim, MS_SSIM_WEIGHTS, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW,
};
pub use rd::{bd_psnr, bd_rate, bpp, RdCurve, RdPoint};

use crate::error::{Error, Result};

/// One row of an RD CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RdRow {
    pub label: String,
    pub bpp: f64,
    pub psnr: f64,
    pub msssim: f64,
}

/// Which quality column an RD curve is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdQuality {
    Psnr,
    /// MS-SSIM converted to dB.
    MsSsimDb,
}

pub fn rd_curve(rows: &[RdRow], quality: RdQuality) -> Result<RdCurve> {
    RdCurve::new(
        rows.iter()
            .map(|r| RdPoint {
                bpp: r.bpp,
                quality: match quality {
                    RdQuality::Psnr => r.psnr,
                    RdQuality::MsSsimDb => ms_ssim_db(r.msssim),
                },
            })
            .collect(),
    )
}

pub fn rd_csv_string(rows: &[RdRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Data(format!("csv: {e}"));
    w.write_record(["label", "bpp", "psnr", "msssim"]).map_err(err)?;
    for r in rows {
        w.write_record([r.label.clone(), r.bpp.to_string(), r.psnr.to_string(), r.msssim.to_string()])
            .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

pub fn write_rd_csv(path: &Path, rows: &[RdRow]) -> Result<()> {
    crate::fsio::write_atomic(path, rd_csv_string(rows)?.as_bytes())
}

pub fn parse_rd_csv(text: &str) -> Result<Vec<RdRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Data(format!("csv: {e}")))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["label", "bpp", "psnr", "msssim"] {
        return Err(Error::Data(format!("RD csv header must be label,bpp,psnr,msssim, got {:?}", headers)));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("csv: {e}")))?;
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Data(format!("row {}: bad number '{}'", i + 1, &rec[j])))
        };
        rows.push(RdRow {
            label: rec[0].to_string(),
            bpp: num(1)?,
            psnr: num(2)?,
            msssim: num(3)?,
        });
    }
    Ok(rows)
}

pub fn read_rd_csv(path: &Path) -> Result<Vec<RdRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rd_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rd_csv_round_trip_with_infinity() {
        let rows = vec![
            RdRow { label: "a-xsmall".into(), bpp: 0.125, psnr: 31.5, msssim: 0.97 },
            RdRow { label: "a-small".into(), bpp: 0.25, psnr: f64::INFINITY, msssim: 1.0 },
        ];
        let text = rd_csv_string(&rows).unwrap();
        assert!(text.starts_with("label,bpp,psnr,msssim\n"));
        assert!(text.contains(",inf,"));
        assert_eq!(parse_rd_csv(&text).unwrap(), rows);
    }

    #[test]
    fn malformed_csv_rejected() {
        assert!(parse_rd_csv("label,bpp\nx,1\n").is_err());
        assert!(parse_rd_csv("label,bpp,psnr,msssim\nx,abc,1,1\n").is_err());
    }
}
