use changeloc_core::corpus::stem::stem;

#[test]
fn matches_reference_vectors() {
    let data = include_str!("data/porter_vectors.tsv");
    let mut failures = Vec::new();
    let mut checked = 0;
    for line in data.lines().filter(|l| !l.starts_with('#')) {
        let (word, want) = line.split_once('\t').expect("tab separated");
        checked += 1;
        let got = stem(word);
        if got != want {
            failures.push(format!("{word}: got {got}, want {want}"));
        }
    }
    assert!(checked > 1000);
    assert!(failures.is_empty(), "{} mismatches:\n{}", failures.len(), failures.join("\n"));
}
