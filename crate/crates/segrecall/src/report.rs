//! Metrics CSV and architecture tables.

use std::io::Write;

use serde::Serialize;

use segrecall_core::archcalc::ArchReport;
use segrecall_core::metrics::{EvalReport, GroupSpec, MeanMetrics};
use segrecall_core::ClassSpec;

pub const CSV_HEADER: [&str; 5] = ["name", "precision", "recall", "iou", "support"];

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_default()
}

/// One row per class, then `mean` and one `mean[<group>]` row per group.
/// Values carry four decimals; undefined values are empty fields. Summary
/// rows report the summed support of their classes.
pub fn write_metrics_csv<W: Write>(
    w: W,
    report: &EvalReport,
    classes: &ClassSpec,
    groups: &GroupSpec,
) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for (k, m) in report.classes.iter().enumerate() {
        let name = classes.name(k).map(String::from).unwrap_or_else(|| format!("class{k}"));
        out.write_record([name, cell(m.precision), cell(m.recall), cell(m.iou), m.support.to_string()])?;
    }
    let support = |ks: &mut dyn Iterator<Item = usize>| -> u64 {
        ks.filter_map(|k| report.classes.get(k)).map(|m| m.support).sum()
    };
    let mut summary_row = |name: String, m: &MeanMetrics, s: u64| {
        out.write_record([name, cell(m.precision), cell(m.recall), cell(m.iou), s.to_string()])
    };
    summary_row("mean".into(), &report.summary.overall, support(&mut (0..report.classes.len())))?;
    for (summary, group) in report.summary.groups.iter().zip(groups.groups()) {
        let s = support(&mut group.classes.iter().copied());
        summary_row(format!("mean[{}]", summary.name), &summary.means, s)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct StageJson {
    pub name: String,
    /// `[height, width, channels]`
    pub output: [usize; 3],
    pub receptive_field: Option<[usize; 2]>,
    pub params: u64,
    pub ops: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArchJson {
    pub variant: String,
    pub input: [usize; 2],
    pub width: usize,
    pub classes: usize,
    pub encoder_receptive_field: [usize; 2],
    pub total_params: u64,
    pub stages: Vec<StageJson>,
}

impl From<&ArchReport> for ArchJson {
    fn from(r: &ArchReport) -> Self {
        Self {
            variant: r.variant.name(),
            input: [r.input.0, r.input.1],
            width: r.width,
            classes: r.num_classes,
            encoder_receptive_field: [r.encoder_receptive_field.0, r.encoder_receptive_field.1],
            total_params: r.total_params,
            stages: r
                .stages
                .iter()
                .map(|s| StageJson {
                    name: s.name.clone(),
                    output: [s.output.height, s.output.width, s.output.channels],
                    receptive_field: s.receptive_field.map(|(a, b)| [a, b]),
                    params: s.params,
                    ops: s.trace.clone(),
                })
                .collect(),
        }
    }
}

/// Fixed-width text table: stage, output shape, receptive field, parameters.
pub fn arch_table(r: &ArchReport) -> String {
    let rows: Vec<[String; 4]> = r
        .stages
        .iter()
        .map(|s| {
            [
                s.name.clone(),
                format!("{}x{}x{}", s.output.height, s.output.width, s.output.channels),
                s.receptive_field.map_or_else(|| "-".into(), |(a, b)| format!("{a}x{b}")),
                s.params.to_string(),
            ]
        })
        .collect();
    let head = ["stage", "output", "rf", "params"];
    let mut widths = head.map(str::len);
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: [&str; 4]| {
        format!(
            "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}\n",
            cells[0],
            cells[1],
            cells[2],
            cells[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3]
        )
    };
    let mut out = format!(
        "variant {}  input {}x{}  width {}  classes {}\n\n",
        r.variant.name(),
        r.input.0,
        r.input.1,
        r.width,
        r.num_classes
    );
    out += &line(head);
    for row in &rows {
        out += &line([&row[0], &row[1], &row[2], &row[3]]);
    }
    out += &format!(
        "\nencoder receptive field {}x{}\ntotal params {}\n",
        r.encoder_receptive_field.0, r.encoder_receptive_field.1, r.total_params
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use segrecall_core::archcalc::{report_variant, UdbVariant};
    use segrecall_core::metrics::evaluate;
    use segrecall_core::LabelMap;

    #[test]
    fn csv_rows_and_empty_undefined_fields() {
        let spec = ClassSpec::with_default_ignore(["a", "b", "c"]).unwrap();
        let pred = LabelMap::new(1, 4, vec![0, 1, 1, 1]).unwrap();
        let gt = LabelMap::new(1, 4, vec![0, 0, 1, 1]).unwrap();
        let groups = GroupSpec::new(
            3,
            vec![
                segrecall_core::metrics::Group { name: "G1".into(), classes: vec![0] },
                segrecall_core::metrics::Group { name: "G2".into(), classes: vec![1, 2] },
            ],
        )
        .unwrap();
        let report = evaluate(3, &pred, &gt, &groups).unwrap();
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &report, &spec, &groups).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "name,precision,recall,iou,support\n\
             a,1.0000,0.5000,0.5000,2\n\
             b,0.6667,1.0000,0.6667,2\n\
             c,,,,0\n\
             mean,0.8333,0.7500,0.5833,4\n\
             mean[G1],1.0000,0.5000,0.5000,2\n\
             mean[G2],0.6667,1.0000,0.6667,2\n"
        );
    }

    #[test]
    fn table_lists_every_stage() {
        let r = report_variant(&UdbVariant::Erf { dilations: vec![1, 2, 3] }, (768, 768), 128, 19).unwrap();
        let t = arch_table(&r);
        assert!(t.contains("udb1"));
        assert!(t.lines().any(|l| l.starts_with("upsample") && l.contains("768x768x19")));
        let j = serde_json::to_value(ArchJson::from(&r)).unwrap();
        assert_eq!(j["stages"].as_array().unwrap().len(), r.stages.len());
    }
}
