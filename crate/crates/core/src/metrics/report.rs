use std::path::Path;

use crate::error::{Error, Result};

/// One named result, serialised as `name,value,std,n,d,meta`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub std: f64,
    pub n: usize,
    pub d: usize,
    pub meta: Vec<(String, String)>,
}

impl MetricReport {
    pub fn new(name: impl Into<String>, value: f64, n: usize, d: usize) -> Self {
        Self {
            name: name.into(),
            value,
            std: 0.0,
            n,
            d,
            meta: Vec::new(),
        }
    }

    pub fn with_std(mut self, std: f64) -> Self {
        self.std = std;
        self
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn csv_fields(&self) -> [String; 6] {
        let meta = self
            .meta
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        [
            self.name.clone(),
            self.value.to_string(),
            self.std.to_string(),
            self.n.to_string(),
            self.d.to_string(),
            meta,
        ]
    }
}

pub fn write_reports(path: impl AsRef<Path>, reports: &[MetricReport]) -> Result<()> {
    if let Some(r) = reports.iter().find(|r| !r.value.is_finite()) {
        return Err(Error::numeric(format!("metric {} is not finite", r.name)));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(e.to_string()))?;
    w.write_record(["name", "value", "std", "n", "d", "meta"])
        .map_err(|e| Error::format(e.to_string()))?;
    for r in reports {
        w.write_record(r.csv_fields())
            .map_err(|e| Error::format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let r = MetricReport::new("w2", 0.25, 1000, 2)
            .with_std(0.01)
            .with_meta("solver", "exact");
        write_reports(&p, &[r]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "name,value,std,n,d,meta\nw2,0.25,0.01,1000,2,solver=exact\n");
        assert!(write_reports(&p, &[MetricReport::new("bad", f64::NAN, 1, 1)]).is_err());
    }
}
