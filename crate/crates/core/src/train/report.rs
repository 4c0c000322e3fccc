//! CSV emitters for training logs and evaluation reports.

use std::io::{self, Write};

use super::{EpochLog, EvalReport};

/// `epoch,train_loss,val_accuracy,lr`, one row per epoch.
pub fn write_metrics_log_csv<W: Write>(w: &mut W, log: &[EpochLog]) -> io::Result<()> {
    writeln!(w, "epoch,train_loss,val_accuracy,lr")?;
    for e in log {
        writeln!(
            w,
            "{},{},{},{}",
            e.epoch, e.train_loss, e.val_accuracy, e.lr
        )?;
    }
    Ok(())
}

/// `metric,value` rows for the overall scores.
pub fn write_report_csv<W: Write>(
    w: &mut W,
    report: &EvalReport,
    params_bytes: Option<usize>,
) -> io::Result<()> {
    writeln!(w, "metric,value")?;
    writeln!(w, "accuracy,{}", report.accuracy)?;
    writeln!(w, "f1_macro,{}", report.f1_macro)?;
    writeln!(w, "f1_weighted,{}", report.f1_weighted)?;
    writeln!(w, "recall_macro,{}", report.recall_macro)?;
    writeln!(w, "precision_macro,{}", report.precision_macro)?;
    writeln!(w, "frames,{}", report.total())?;
    if let Some(bytes) = params_bytes {
        writeln!(w, "params_bytes,{bytes}")?;
        writeln!(w, "params_mb,{}", bytes as f64 / (1024.0 * 1024.0))?;
    }
    Ok(())
}

/// `snr,accuracy`, ascending SNR.
pub fn write_snr_csv<W: Write>(w: &mut W, report: &EvalReport) -> io::Result<()> {
    writeln!(w, "snr,accuracy")?;
    for (snr, acc) in &report.per_snr_accuracy {
        writeln!(w, "{snr},{acc}")?;
    }
    Ok(())
}

/// Confusion counts with class names as header row and first column
/// (rows = true class, columns = predicted class).
pub fn write_confusion_csv<W: Write>(
    w: &mut W,
    report: &EvalReport,
    class_names: &[String],
) -> io::Result<()> {
    write!(w, "true\\predicted")?;
    for name in class_names {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for (name, row) in class_names.iter().zip(&report.confusion) {
        write!(w, "{name}")?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layouts() {
        let mut report = EvalReport::from_confusion(vec![vec![2, 0], vec![1, 1]]).unwrap();
        report.per_snr_accuracy.insert(-2, 0.5);
        report.per_snr_accuracy.insert(4, 1.0);
        let names = vec!["BPSK".to_string(), "QPSK".to_string()];

        let mut out = Vec::new();
        write_confusion_csv(&mut out, &report, &names).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "true\\predicted,BPSK,QPSK\nBPSK,2,0\nQPSK,1,1\n"
        );

        let mut out = Vec::new();
        write_snr_csv(&mut out, &report).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "snr,accuracy\n-2,0.5\n4,1\n"
        );

        let mut out = Vec::new();
        write_report_csv(&mut out, &report, Some(4096)).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("metric,value\naccuracy,0.75\n"));
        assert!(text.contains("params_bytes,4096"));

        let log = [EpochLog {
            epoch: 0,
            train_loss: 1.5,
            val_accuracy: 0.25,
            lr: 0.001,
        }];
        let mut out = Vec::new();
        write_metrics_log_csv(&mut out, &log).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "epoch,train_loss,val_accuracy,lr\n0,1.5,0.25,0.001\n"
        );
    }
}
