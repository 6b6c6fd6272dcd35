//! Intra- versus inter-category distances with a Welch test, plus a 2-D
//! projection written as CSV to stdout.

use credscan::analysis::{project_2d, separation, welch_t_test, write_projection_csv};
use credscan::embedder::{embed_batch, FallbackProvider};
use credscan::synth::synthetic_dataset;

fn main() -> credscan::Result<()> {
    let data = synthetic_dataset(25, 3);
    let texts: Vec<String> = data.records.iter().map(|r| r.text.clone()).collect();
    let vectors = embed_batch(&texts, &FallbackProvider::default())?;
    let points: Vec<_> = vectors.iter().cloned().zip(data.records.iter().map(|r| r.category)).collect();

    let report = separation(&points)?;
    eprintln!(
        "intra {:.4} (n={}) inter {:.4} (n={}) t={:?} df={:?} p={:?}",
        report.mean_intra, report.n_intra, report.mean_inter, report.n_inter,
        report.t_statistic, report.degrees_freedom, report.p_value
    );

    let w = welch_t_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.5])?;
    eprintln!("toy welch: t={:.4} df={:.4} p={:.4}", w.t, w.df, w.p);

    let projection = project_2d(&vectors)?;
    eprintln!("explained variance {:?} of {:.4}", projection.explained_variance, projection.total_variance);
    let categories: Vec<_> = data.records.iter().map(|r| r.category).collect();
    write_projection_csv(std::io::stdout(), &projection.points, &categories)
}
