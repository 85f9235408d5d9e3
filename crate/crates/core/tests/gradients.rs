use nextframe::gradsuite::{convlstm_lstm_gap, model_checks, op_checks, EQUIVALENCE_TOLERANCE};

#[test]
fn every_op_matches_finite_differences() {
    let outcomes = op_checks(20, 11).unwrap();
    assert_eq!(outcomes.len(), 9);
    for o in &outcomes {
        assert_eq!(o.instances, 20);
        assert!(o.passed(), "{}: worst {:.3e} > {:.0e}", o.name, o.worst, o.tolerance);
    }
}

#[test]
fn training_loss_gradient_of_each_architecture() {
    for o in model_checks(20, 5).unwrap() {
        assert!(o.passed(), "{}: worst {:.3e} > {:.0e}", o.name, o.worst, o.tolerance);
    }
}

#[test]
fn unit_map_convlstm_is_an_lstm() {
    let gap = convlstm_lstm_gap(50, 2).unwrap();
    assert!(gap <= EQUIVALENCE_TOLERANCE, "gap {gap:e}");
}
