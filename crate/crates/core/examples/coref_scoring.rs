//! Score a response clustering against a key with MUC, B-cubed, entity
//! CEAF and BLANC.
//!
//! cargo run --example coref_scoring

use protomatch::evalkit::{cluster_from_pairs, coref_counts, Clustering, CorefReport};

fn clusters(groups: &[&[&str]]) -> Clustering {
    Clustering::new(groups.iter().map(|g| g.iter().map(|s| s.to_string()).collect()).collect()).unwrap()
}

fn main() -> anyhow::Result<()> {
    let key = clusters(&[&["a", "b", "c"], &["d", "e"], &["f"]]);
    let response = clusters(&[&["a", "b"], &["c", "d", "e"], &["f"]]);
    let c = coref_counts(&response, &key)?;
    let report = CorefReport::from_counts(&c);
    println!("key      {:?}\nresponse {:?}\n", key.clusters(), response.clusters());
    for (name, p) in [("MUC", report.muc), ("B3", report.b_cubed), ("CEAFe", report.ceaf_e), ("BLANC", report.blanc)] {
        println!("{name:<6} P {:.4}  R {:.4}  F1 {:.4}", p.precision, p.recall, p.f1);
    }
    println!("average F1 {:.4}", report.avg_f1);

    // clusters from pairwise decisions: transitive closure of positive pairs
    let mentions: Vec<String> = ["m1", "m2", "m3", "m4"].map(String::from).to_vec();
    let positives = vec![("m1".to_string(), "m2".to_string()), ("m3".to_string(), "m2".to_string())];
    println!("\nfrom pairs: {:?}", cluster_from_pairs(&mentions, &positives)?.clusters());
    Ok(())
}
