use dras_core::risk::{risk_matrix, RiskParameters};

#[test]
fn matrix_lines_match_golden() {
    let golden = include_str!("golden/risk_matrix.jsonl");
    assert_eq!(risk_matrix(&RiskParameters::default()).to_lines(), golden);
}
