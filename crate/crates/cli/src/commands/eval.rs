use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;
use sftformer::metrics_eval::{
    persistence_baseline, resolve_thresholds, CountTable, LeadRow, MetricReport, ReportRecord, Threshold,
    ThresholdSummary,
};
use sftformer::training::batch_tensors;

use super::{create_out, load_checkpoint, load_model};
use crate::dataset::{load_sequences, read_config, windows};
use crate::error::{io_at, CliError, CliResult};
use crate::manifest::Recorder;
use crate::render::{curve_svg, Series};

pub const REPORT_FILE: &str = "report.jsonl";
pub const CURVES_FILE: &str = "curves.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Serialize)]
struct Summary<'a> {
    windows: usize,
    lead_times: usize,
    model: &'a [ThresholdSummary],
    persistence: &'a [ThresholdSummary],
}

fn thresholds(
    cfg: &sftformer::config::EvalConfig,
    rates: Option<Vec<f64>>,
    pixels: Option<Vec<f64>>,
) -> CliResult<Vec<Threshold>> {
    if rates.is_none() && pixels.is_none() {
        return Ok(resolve_thresholds(cfg)?);
    }
    let mut out = Vec::new();
    for r in rates.unwrap_or_default() {
        let spec = sftformer::config::ThresholdSpec::RainRate(r);
        out.push(Threshold::resolve(spec, cfg.zr_a, cfg.zr_b).map_err(|e| CliError::usage(e.to_string()))?);
    }
    for p in pixels.unwrap_or_default() {
        let spec = sftformer::config::ThresholdSpec::Pixel(p);
        out.push(Threshold::resolve(spec, cfg.zr_a, cfg.zr_b).map_err(|e| CliError::usage(e.to_string()))?);
    }
    Ok(out)
}

pub fn eval(
    data: &Path,
    checkpoint: &Path,
    config: Option<&Path>,
    rates: Option<Vec<f64>>,
    pixels: Option<Vec<f64>>,
    out: &Path,
) -> CliResult<()> {
    let mut rec = Recorder::new("eval");
    let ckpt = load_checkpoint(checkpoint)?;
    let mut cfg = ckpt.config.clone();
    if let Some(p) = config {
        let file_cfg = read_config(p)?;
        let (want, have) = (file_cfg.model_hash(), ckpt.config.model_hash());
        if want != have {
            return Err(CliError::usage(format!(
                "checkpoint/config mismatch: config model hash {want}, checkpoint model hash {have}"
            )));
        }
        cfg.eval = file_cfg.eval;
        cfg.data = file_cfg.data;
        rec.input(p);
    }
    rec.config(&cfg);
    rec.input(checkpoint);
    rec.input(data);
    let ths = thresholds(&cfg.eval, rates, pixels)?;
    if ths.is_empty() {
        return Err(CliError::usage("no thresholds given"));
    }
    let model = load_model(&ckpt)?;
    let seqs = load_sequences(data, &cfg)?;
    let wins = windows(&seqs, &cfg)?;
    rec.lap("load");

    let t_out = cfg.model.t_out;
    let mut model_counts = CountTable::new(&ths, t_out);
    let mut persist_counts = CountTable::new(&ths, t_out);
    let (h, w) = (cfg.model.height, cfg.model.width);
    for chunk in wins.chunks(cfg.train.batch_size) {
        let refs: Vec<_> = chunk.iter().collect();
        let (x, _) = batch_tensors(&refs)?;
        let y = model.predict(x)?;
        let per = t_out * h * w;
        for (k, win) in chunk.iter().enumerate() {
            let pred = sftformer_autograd::Tensor::new(vec![t_out, h, w], y.data()[k * per..(k + 1) * per].to_vec())
                .expect("prediction layout");
            let truth = win.target.frames();
            model_counts.add_pair(&pred, truth)?;
            persist_counts.add_pair(&persistence_baseline(&win.input, t_out)?, truth)?;
        }
    }
    rec.lap("inference");

    let model_report = MetricReport::from_counts(&model_counts);
    let persist_report = MetricReport::from_counts(&persist_counts);
    create_out(out)?;
    let mut records = model_report.records("model");
    records.extend(persist_report.records("persistence"));
    let report_path = out.join(REPORT_FILE);
    let mut f = BufWriter::new(io_at(&report_path, std::fs::File::create(&report_path))?);
    io_at(&report_path, ReportRecord::write_jsonl(&records, &mut f))?;
    let curves_path = out.join(CURVES_FILE);
    let mut f = BufWriter::new(io_at(&curves_path, std::fs::File::create(&curves_path))?);
    io_at(&curves_path, ReportRecord::write_csv(&records, &mut f))?;
    let summary = Summary {
        windows: wins.len(),
        lead_times: t_out,
        model: &model_report.summaries,
        persistence: &persist_report.summaries,
    };
    let summary_path = out.join(SUMMARY_FILE);
    io_at(
        &summary_path,
        std::fs::write(&summary_path, serde_json::to_string_pretty(&summary).expect("summary serializes")),
    )?;
    let scores: [(&str, fn(&LeadRow) -> Option<f64>); 3] = [("csi", |r| r.csi), ("gss", |r| r.gss), ("hss", |r| r.hss)];
    for (name, score) in scores {
        let curves: Vec<(String, Vec<Option<f64>>, Vec<Option<f64>>)> = ths
            .iter()
            .enumerate()
            .map(|(k, th)| (th.label(), model_report.curve(k, score), persist_report.curve(k, score)))
            .collect();
        let mut series = Vec::new();
        let mut colors = Vec::new();
        for (k, (label, m, p)) in curves.iter().enumerate() {
            series.push(Series {
                label: format!("model {label}"),
                values: m,
                dashed: false,
            });
            series.push(Series {
                label: format!("persistence {label}"),
                values: p,
                dashed: true,
            });
            colors.extend([k, k]);
        }
        let path = out.join(format!("curve_{name}.svg"));
        let svg = curve_svg(&name.to_uppercase(), &series, &colors);
        io_at(&path, std::fs::write(&path, svg))?;
        rec.output(&path);
    }
    rec.lap("report");
    for p in [&report_path, &curves_path, &summary_path] {
        rec.output(p);
    }
    rec.write(out)?;
    for (m, p) in model_report.summaries.iter().zip(&persist_report.summaries) {
        let fmt = |v: Option<f64>| v.map_or("missing".to_string(), |v| format!("{v:.4}"));
        println!(
            "{}: mean CSI model {} persistence {} | mean HSS model {} persistence {}",
            m.threshold.label(),
            fmt(m.mean_csi),
            fmt(p.mean_csi),
            fmt(m.mean_hss),
            fmt(p.mean_hss)
        );
    }
    Ok(())
}
