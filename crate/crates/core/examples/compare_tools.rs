//! Rank a measured result against published third-party detector scores.

use credscan::bench::{comparison_report, published_tool_rows, ComparisonRow};
use credscan::metrics::MetricReport;

fn main() -> credscan::Result<()> {
    let labels = [0, 1, 2, 3, 4, 5, 6, 7, 0, 1];
    let preds = [0, 1, 2, 3, 4, 5, 6, 7, 0, 2];
    let ours = ComparisonRow::measured("credscan", &MetricReport::from_predictions(&labels, &preds, 8)?);
    let table = comparison_report(Some(ours), published_tool_rows());
    print!("{}", table.to_text());
    Ok(())
}
