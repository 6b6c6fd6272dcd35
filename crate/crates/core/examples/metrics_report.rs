//! Confusion matrix, per-class and macro metrics, MCC.

use credscan::metrics::{confusion, mcc_binary, MetricReport};

fn main() -> credscan::Result<()> {
    let labels = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2];
    let preds = [0, 0, 1, 1, 1, 2, 2, 2, 2, 0];
    let cm = confusion(&labels, &preds, 3)?;
    for row in &cm.counts {
        println!("{row:?}");
    }
    let report = MetricReport::from_confusion(cm)?;
    print!("{}", report.to_text());
    println!("{}", report.to_json()?);
    println!("binary mcc(tp=90, tn=85, fp=15, fn=10) = {:?}", mcc_binary(90, 85, 15, 10));
    Ok(())
}
